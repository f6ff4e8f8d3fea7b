//! Sampling oracles for the closed-form maximizations behind the case
//! bounds: each check draws random feasible parameter points and verifies
//! that none beats the corresponding closed form.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::certifier::{
    default_deltas, eval_case_bound, kmedian_pair_bound, CaseAux, KMEANS_P1, KMEDIAN_P1,
    PAIR_BOUND_SPLIT,
};
use crate::model::Objective;

#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            samples: 100_000,
            seed: 0xB0A710C5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub samples: usize,
    pub bound: f64,
    pub max_observed: f64,
    /// bound - max_observed; negative would be a violation.
    pub slack: f64,
    pub worst_point: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
    pub pass: bool,
}

const VIOLATION_TOL: f64 = 1e-9;

struct Tracker {
    max: f64,
    worst: Vec<f64>,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            max: f64::NEG_INFINITY,
            worst: Vec::new(),
        }
    }
    fn offer(&mut self, value: f64, point: &[f64]) {
        if value > self.max {
            self.max = value;
            self.worst = point.to_vec();
        }
    }
    fn into_check(self, name: &str, samples: usize, bound: f64) -> OracleCheck {
        OracleCheck {
            name: name.into(),
            samples,
            bound,
            max_observed: self.max,
            slack: bound - self.max,
            worst_point: self.worst,
            pass: self.max <= bound + VIOLATION_TOL,
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        if norm2 > 1e-6 && norm2 <= 1.0 {
            let norm = norm2.sqrt();
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

fn add_scaled(base: [f64; 3], dir: [f64; 3], len: f64) -> [f64; 3] {
    [
        base[0] + dir[0] * len,
        base[1] + dir[1] * len,
        base[2] + dir[2] * len,
    ]
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

/// Runs every sampling check and reports the largest observed value against
/// each closed form.
pub fn closed_form_oracles(config: OracleConfig) -> OracleReport {
    let mut checks = Vec::new();
    let dm = default_deltas(Objective::KMeans);
    let dd = default_deltas(Objective::KMedian);
    let (d1, d2, d3) = dm;
    let (s1, s2, s3) = (d1.sqrt(), d2.sqrt(), d3.sqrt());
    let p = KMEANS_P1;
    let n = config.samples;

    // lone-partner witness case: grid + random sampling over the single free
    // distance
    {
        let bound = eval_case_bound(Objective::KMeans, "1.c", p, dm, CaseAux::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut tr = Tracker::new();
        for i in 0..n {
            let t = if i < n / 2 {
                i as f64 / (n / 2) as f64
            } else {
                rng.random_range(0.0..1.0)
            };
            let v = ((1.0 - p) * (t + s1) * (t + s1) + p * t * t) / ((1.0 - p) + p * t * t);
            tr.offer(v, &[t]);
        }
        checks.push(tr.into_check("kmeans_1c", n, bound));
    }

    // close-second-layer witness case over (t, u)
    {
        let bound = eval_case_bound(Objective::KMeans, "1.g.i", p, dm, CaseAux::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 1);
        let mut tr = Tracker::new();
        for _ in 0..n {
            let t = rng.random_range(0.0..1.0);
            let u = rng.random_range(0.0..1.0);
            let d = (u - (d3 * t).sqrt()).max(0.0);
            let v = ((1.0 - p) * (u + (d1 * t).sqrt()) * (u + (d1 * t).sqrt()) + p * d * d)
                / (1.0 - p + p * d * d);
            tr.offer(v, &[t, u]);
        }
        checks.push(tr.into_check("kmeans_1gi", n, bound));
    }

    // paired second/third-layer case over (t, beta, gamma)
    {
        let bound = eval_case_bound(Objective::KMeans, "2.d", p, dm, CaseAux::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 2);
        let mut tr = Tracker::new();
        let mut accepted = 0usize;
        while accepted < n {
            let beta: f64 = rng.random_range(0.0..1.0);
            let gamma: f64 = rng.random_range(0.0..1.0);
            let sum = beta + gamma;
            if sum * sum < d3 {
                continue;
            }
            let t = rng.random_range(1.0..(sum * sum / d3).max(1.0 + 1e-9));
            if sum < (d3 * t).sqrt() {
                continue;
            }
            accepted += 1;
            let reach = (1.0 + s1).min(beta.max(gamma) + (d1 * t).sqrt());
            let v = ((1.0 - 2.0 * p) * reach * reach + p * (beta * beta + gamma * gamma))
                / (1.0 - p * (1.0 - beta * beta) - p * (1.0 - gamma * gamma));
            tr.offer(v, &[t, beta, gamma]);
        }
        checks.push(tr.into_check("kmeans_2d", n, bound));

        // the optimizing point attains the closed form
        let denom = d1 + (s1 + s3) * (s1 + s3);
        let k = s3 * (1.0 + s1) / denom;
        let beta = (s3 + s1) * k;
        let gamma = s1 * k;
        let z = beta * beta + gamma * gamma;
        let claimed = d3 * (1.0 + s1) * (1.0 + s1) / denom;
        let attained =
            ((1.0 - 2.0 * p) * (1.0 + s1) * (1.0 + s1) + p * z) / (1.0 - 2.0 * p + p * z);
        let ok = (z - claimed).abs() < 1e-9 && (attained - bound).abs() < 1e-9;
        checks.push(OracleCheck {
            name: "kmeans_2d_optimizer".into(),
            samples: 1,
            bound,
            max_observed: attained,
            slack: bound - attained,
            worst_point: vec![beta, gamma],
            pass: ok,
        });
    }

    // boundary attainment of the widest-threshold case at t = 0
    {
        let bound = eval_case_bound(Objective::KMeans, "1.a", p, dm, CaseAux::default()).unwrap();
        let at_zero = (p * 0.0 + (1.0 - p) * (1.0 + s2) * (1.0 + s2)) / (p * 0.0 + (1.0 - p));
        checks.push(OracleCheck {
            name: "kmeans_1a_boundary".into(),
            samples: 1,
            bound,
            max_observed: at_zero,
            slack: bound - at_zero,
            worst_point: vec![0.0],
            pass: (at_zero - bound).abs() < 1e-12,
        });
    }

    // distance-form close-witness case over (t, u)
    {
        let p = KMEDIAN_P1;
        let (e1, _e2, e3) = dd;
        let bound =
            eval_case_bound(Objective::KMedian, "1.g.i'", p, dd, CaseAux::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 3);
        let mut tr = Tracker::new();
        for _ in 0..n {
            let t = rng.random_range(0.0..1.0);
            let u = rng.random_range(0.0..1.0);
            let d = (u - t * e3).max(0.0);
            let v = ((1.0 - p) * (u + e1 * t) + p * d) / (1.0 - p + p * d);
            tr.offer(v, &[t, u]);
        }
        checks.push(tr.into_check("kmedian_1gi", n, bound));
    }

    // the four-point mixing inequality over random geometric configurations
    {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 4);
        let mut worst_margin = f64::INFINITY;
        let mut worst: Vec<f64> = Vec::new();
        let mut accepted = 0usize;
        while accepted < n {
            let p_mix: f64 = rng.random_range(0.01..0.99);
            let nu3: f64 = rng.random_range(0.0..2.0);
            let nu1: f64 = rng.random_range(nu3..nu3 + 3.0);
            let nu2: f64 = rng.random_range(nu3..nu3 + 3.0);
            let sigma1: f64 = rng.random_range(0.0..1.0);
            let sigma2: f64 = rng.random_range(0.0..2.0);
            let sigma3: f64 = rng.random_range(0.0..2.0);
            let a = [0.0, 0.0, 0.0];
            let b = add_scaled(a, unit_vector(&mut rng), rng.random_range(0.0..1.0));
            let c = add_scaled(
                b,
                unit_vector(&mut rng),
                (nu1 * sigma1.min(sigma2)).sqrt() * rng.random_range(0.0..1.0),
            );
            let dpt = add_scaled(
                b,
                unit_vector(&mut rng),
                (nu2 * sigma1.min(sigma3)).sqrt() * rng.random_range(0.0..1.0),
            );
            if dist2(c, dpt) < nu3 * sigma2.min(sigma3) {
                continue;
            }
            accepted += 1;
            let lhs = p_mix * dist2(c, a) + (1.0 - p_mix) * dist2(dpt, a);
            let inner = p_mix * nu1 + (1.0 - p_mix) * nu2 - p_mix * (1.0 - p_mix) * nu3;
            let rhs = 1.0 + p_mix * nu1 + (1.0 - p_mix) * nu2 + 2.0 * inner.max(0.0).sqrt();
            let margin = rhs - lhs;
            if margin < worst_margin {
                worst_margin = margin;
                worst = vec![p_mix, nu1, nu2, nu3, sigma1, sigma2, sigma3];
            }
        }
        checks.push(OracleCheck {
            name: "four_point_mixing".into(),
            samples: n,
            bound: 0.0,
            max_observed: -worst_margin,
            slack: worst_margin,
            worst_point: worst,
            pass: worst_margin >= -VIOLATION_TOL,
        });
    }

    // the averaged-distance pair bound over random k-median configurations
    {
        let p = KMEDIAN_P1;
        let d2m = dd.1;
        let bound = kmedian_pair_bound(p, d2m, PAIR_BOUND_SPLIT);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 5);
        let mut tr = Tracker::new();
        let mut accepted = 0usize;
        let sq2 = 2.0_f64.sqrt();
        while accepted < n {
            let t_star: f64 = rng.random_range(0.0..1.0);
            let t1: f64 = rng.random_range(0.0..2.0);
            let t3: f64 = rng.random_range(0.0..2.0);
            let j = [0.0, 0.0, 0.0];
            let i_star = add_scaled(j, unit_vector(&mut rng), rng.random_range(0.0..1.0));
            let i1 = add_scaled(
                i_star,
                unit_vector(&mut rng),
                sq2 * t_star.min(t1) * rng.random_range(0.0..1.0),
            );
            let i3 = add_scaled(
                i_star,
                unit_vector(&mut rng),
                sq2 * t_star.min(t3) * rng.random_range(0.0..1.0),
            );
            if dist2(i1, i3).sqrt() < d2m * t1.min(t3) {
                continue;
            }
            accepted += 1;
            let lhs = (1.0 - p) * dist2(j, i1).sqrt() + p * dist2(j, i3).sqrt();
            tr.offer(lhs, &[t_star, t1, t3]);
        }
        checks.push(tr.into_check("kmedian_pair_bound", n, bound));
    }

    let pass = checks.iter().all(|c| c.pass);
    OracleReport { checks, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_oracles_dominated() {
        let report = closed_form_oracles(OracleConfig {
            samples: 20_000,
            seed: 7,
        });
        for check in &report.checks {
            assert!(
                check.pass,
                "{} violated: observed {} vs bound {} at {:?}",
                check.name, check.max_observed, check.bound, check.worst_point
            );
        }
        assert!(report.pass);
    }
}
