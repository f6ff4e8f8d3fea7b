use clap::Parser;

fn main() {
    let cli = pdcluster::cli::Cli::parse();
    std::process::exit(pdcluster::cli::run(&cli));
}
