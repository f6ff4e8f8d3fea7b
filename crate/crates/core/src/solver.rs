//! End-to-end pipeline: a single-λ LMP solve with Monte Carlo diagnostics,
//! the λ sweep that brackets the target center count, the exact-k assembly,
//! and the per-client case accounting that powers the sharper ratio bounds.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::certifier::{default_deltas, default_p1, group_ratio_caps};
use crate::error::{Error, Result};
use crate::growth::{grow_duals, DualGrowthResult};
use crate::model::{assignment_cost, CenterSet, Instance, Objective};
use crate::nqis::{
    build_nqis_from_graphs, expected_size, graph_stack, round_to_at_most_k, sample_solution,
    GraphStack, NestedQis, RoundingParams, Variant,
};

pub fn variant_for(objective: Objective) -> Variant {
    match objective {
        Objective::KMeans => Variant::KMeansAlg,
        Objective::KMedian => Variant::KMedianAlg,
    }
}

/// Deterministic per-stream seed derivation (splitmix-style).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverParams {
    pub deltas: (f64, f64, f64),
    pub p1: f64,
    /// Group-size threshold of the capped rounding.
    pub c: usize,
    /// Initial λ step; 0 picks a scale-aware default from the instance.
    pub lambda_step: f64,
    pub bisection_depth: usize,
    pub mc_samples: usize,
    pub rng_seed: u64,
}

impl SolverParams {
    pub fn default_for(objective: Objective) -> Self {
        SolverParams {
            deltas: default_deltas(objective),
            p1: default_p1(objective),
            c: 3,
            lambda_step: 0.0,
            bisection_depth: 48,
            mc_samples: 10_000,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McSummary {
    pub samples: usize,
    pub mean: f64,
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerClientDiag {
    pub client: usize,
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub case_tag: String,
    pub group: usize,
    /// Monte Carlo cost over the closed-form dual share, when the share is
    /// positive.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_estimate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LmpOutcome {
    pub lambda: f64,
    pub growth: DualGrowthResult,
    pub nqis: NestedQis,
    pub sampled_costs: McSummary,
    /// Sum of duals minus λ times the expected number of centers.
    pub dual_surrogate: f64,
    pub per_client: Vec<PerClientDiag>,
}

/// Distances from every client to the fixed first layer plus the columns for
/// the randomized layers; shared by the Monte Carlo loops.
struct SampleCosts {
    base: Vec<f64>,
    extras: Vec<usize>,
    extra_cost: Vec<Vec<f64>>,
}

impl SampleCosts {
    fn new(instance: &Instance, nqis: &NestedQis) -> Self {
        let n = instance.num_clients();
        let base: Vec<f64> = (0..n)
            .map(|j| {
                nqis.i1
                    .iter()
                    .map(|&i| instance.cost(j, i))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let extras: Vec<usize> = nqis.i2.iter().chain(nqis.i3.iter()).copied().collect();
        let extra_cost: Vec<Vec<f64>> = (0..n)
            .map(|j| extras.iter().map(|&i| instance.cost(j, i)).collect())
            .collect();
        SampleCosts {
            base,
            extras,
            extra_cost,
        }
    }

    fn client_cost(&self, j: usize, sampled_mask: &[bool]) -> f64 {
        let mut best = self.base[j];
        for (pos, &on) in sampled_mask.iter().enumerate() {
            if on && self.extra_cost[j][pos] < best {
                best = self.extra_cost[j][pos];
            }
        }
        best
    }

    fn mask_for(&self, sample: &[usize]) -> Vec<bool> {
        self.extras
            .iter()
            .map(|f| sample.binary_search(f).is_ok())
            .collect()
    }
}

/// Runs the growing phase, the pruning construction, and a Monte Carlo pass
/// over the rounding at one λ.
pub fn lmp_solve(instance: &Instance, lambda: f64, params: &SolverParams) -> Result<LmpOutcome> {
    let growth = grow_duals(instance, lambda)?;
    let graphs = graph_stack(instance, &growth, params.deltas)?;
    let nqis = build_nqis_from_graphs(
        &graphs,
        params.deltas,
        variant_for(instance.objective),
        None,
    )?;
    let costs = SampleCosts::new(instance, &nqis);
    let n = instance.num_clients();

    let groups = nqis.groups();
    let mut total = Vec::with_capacity(params.mc_samples);
    let mut per_client_sum = vec![0.0_f64; n];
    for s in 0..params.mc_samples {
        let rp = RoundingParams::new(params.p1, derive_seed(params.rng_seed, s as u64), params.c)?;
        let sample = crate::nqis::sample_solution_grouped(&nqis.i1, &groups, &rp);
        let mask = costs.mask_for(&sample);
        let mut sum = 0.0;
        for j in 0..n {
            let cj = costs.client_cost(j, &mask);
            per_client_sum[j] += cj;
            sum += cj;
        }
        total.push(sum);
    }
    let mc = summarize(&total);
    let alpha_sum: f64 = growth.alpha.iter().sum();
    let dual_surrogate = alpha_sum - lambda * expected_size(&nqis, params.p1);

    let accounting = client_case_stats_inner(instance, &growth, &nqis, &graphs)?;
    let per_client = accounting
        .clients
        .iter()
        .map(|cc| {
            let share = cc.a_j - params.p1 * cc.b_j;
            let mc_mean = per_client_sum[cc.client] / params.mc_samples.max(1) as f64;
            PerClientDiag {
                client: cc.client,
                a: cc.a,
                b: cc.b,
                c: cc.c,
                case_tag: cc.tag.clone(),
                group: cc.group,
                ratio_estimate: if share > 1e-12 {
                    Some(mc_mean / share)
                } else {
                    None
                },
            }
        })
        .collect();

    Ok(LmpOutcome {
        lambda,
        growth,
        nqis,
        sampled_costs: mc,
        dual_surrogate,
        per_client,
    })
}

fn summarize(values: &[f64]) -> McSummary {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n.max(2.0);
    McSummary {
        samples: values.len(),
        mean,
        std_error: (var / n).sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Single-threshold pruning: keep just the first-layer independent set and
/// report its cost against the plain dual. Used by the adversarial
/// demonstrations.
#[derive(Debug, Clone, Serialize)]
pub struct SingleIsOutcome {
    pub delta: f64,
    pub centers: Vec<usize>,
    pub cost: f64,
    pub dual: f64,
}

pub fn single_is_lmp(instance: &Instance, lambda: f64, delta: f64) -> Result<SingleIsOutcome> {
    let growth = grow_duals(instance, lambda)?;
    single_is_from_growth(instance, &growth, delta)
}

pub fn single_is_from_growth(
    instance: &Instance,
    growth: &DualGrowthResult,
    delta: f64,
) -> Result<SingleIsOutcome> {
    let vertices = growth.tight.clone();
    let t: Vec<f64> = vertices.iter().map(|&i| growth.t[i]).collect();
    let graph = crate::conflict::build_conflict_graph(
        &instance.facilities,
        vertices,
        t,
        delta,
        instance.objective,
    )?;
    let mis = crate::conflict::maximal_independent_set(&graph);
    let centers: Vec<usize> = mis.iter().map(|&v| graph.vertices[v]).collect();
    let cost = assignment_cost(instance, &centers)?;
    let dual = growth.alpha.iter().sum::<f64>() - growth.lambda * centers.len() as f64;
    Ok(SingleIsOutcome {
        delta,
        centers,
        cost,
        dual,
    })
}

/// One evaluated sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaPoint {
    pub lambda: f64,
    pub expected: f64,
    pub alpha_sum: f64,
    pub i1_size: usize,
}

/// Two adjacent pipeline states whose expected center counts straddle k.
/// `degenerate` marks the case where one state already lands in [k, k+1),
/// in which case both sides coincide.
#[derive(Debug, Clone, Serialize)]
pub struct Bracket {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub growth_lo: DualGrowthResult,
    pub growth_hi: DualGrowthResult,
    pub nqis_lo: NestedQis,
    pub nqis_hi: NestedQis,
    pub degenerate: bool,
}

struct SweepEval {
    growth: DualGrowthResult,
    nqis: NestedQis,
    expected: f64,
}

fn sweep_eval(
    instance: &Instance,
    lambda: f64,
    params: &SolverParams,
    warm: Option<&[usize]>,
) -> Result<SweepEval> {
    let growth = grow_duals(instance, lambda)?;
    let graphs = graph_stack(instance, &growth, params.deltas)?;
    let nqis = build_nqis_from_graphs(
        &graphs,
        params.deltas,
        variant_for(instance.objective),
        warm,
    )?;
    let expected = expected_size(&nqis, params.p1);
    Ok(SweepEval {
        growth,
        nqis,
        expected,
    })
}

/// Monotone λ scan from 0 with warm-started first layers, then bisection,
/// until an expected size inside [k, k+1) is found or the bracket narrows to
/// the configured depth. Also returns every evaluated sweep point.
pub fn sweep_lambda_traced(
    instance: &Instance,
    k: usize,
    params: &SolverParams,
) -> Result<(Bracket, Vec<LambdaPoint>)> {
    let m = instance.num_facilities();
    if k < 1 || k > m {
        return Err(Error::InvalidParam(format!("k = {k} must lie in [1, {m}]")));
    }
    let n = instance.num_clients();
    let mut trace = Vec::new();
    let record = |lambda: f64, ev: &SweepEval, trace: &mut Vec<LambdaPoint>| {
        trace.push(LambdaPoint {
            lambda,
            expected: ev.expected,
            alpha_sum: ev.growth.alpha.iter().sum(),
            i1_size: ev.nqis.i1.len(),
        });
    };

    let base_step = if params.lambda_step > 0.0 {
        params.lambda_step
    } else {
        let scale: f64 = (0..n)
            .map(|j| {
                (0..m)
                    .map(|i| instance.cost(j, i))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / n as f64;
        (scale * 0.5).max(1e-3)
    };

    let mut lo = sweep_eval(instance, 0.0, params, None)?;
    record(0.0, &lo, &mut trace);
    if lo.expected < k as f64 {
        return Err(Error::SweepFailed(k));
    }
    let degenerate_hit = |ev: &SweepEval| ev.expected >= k as f64 && ev.expected < k as f64 + 1.0;
    if degenerate_hit(&lo) {
        let bracket = Bracket {
            lambda_lo: 0.0,
            lambda_hi: 0.0,
            growth_hi: lo.growth.clone(),
            nqis_hi: lo.nqis.clone(),
            growth_lo: lo.growth,
            nqis_lo: lo.nqis,
            degenerate: true,
        };
        return Ok((bracket, trace));
    }

    let mut lambda_lo = 0.0;
    let mut step = base_step;
    let mut lambda = base_step;
    let mut hi_state: Option<(f64, SweepEval)> = None;
    for iter in 0..10_000 {
        let ev = sweep_eval(instance, lambda, params, Some(&lo.nqis.i1))?;
        record(lambda, &ev, &mut trace);
        if degenerate_hit(&ev) {
            let bracket = Bracket {
                lambda_lo: lambda,
                lambda_hi: lambda,
                growth_hi: ev.growth.clone(),
                nqis_hi: ev.nqis.clone(),
                growth_lo: ev.growth,
                nqis_lo: ev.nqis,
                degenerate: true,
            };
            return Ok((bracket, trace));
        }
        if ev.expected < k as f64 {
            hi_state = Some((lambda, ev));
            break;
        }
        lambda_lo = lambda;
        lo = ev;
        if iter >= 32 {
            step *= 1.5; // geometric fallback so the scan always terminates
        }
        lambda += step;
    }
    let (mut lambda_hi, mut hi) = hi_state.ok_or(Error::SweepFailed(k))?;

    for _ in 0..params.bisection_depth {
        let mid = 0.5 * (lambda_lo + lambda_hi);
        if mid <= lambda_lo || mid >= lambda_hi {
            break; // width at floating-point resolution
        }
        let ev = sweep_eval(instance, mid, params, Some(&lo.nqis.i1))?;
        record(mid, &ev, &mut trace);
        if degenerate_hit(&ev) {
            let bracket = Bracket {
                lambda_lo: mid,
                lambda_hi: mid,
                growth_hi: ev.growth.clone(),
                nqis_hi: ev.nqis.clone(),
                growth_lo: ev.growth,
                nqis_lo: ev.nqis,
                degenerate: true,
            };
            return Ok((bracket, trace));
        }
        if ev.expected >= k as f64 {
            lambda_lo = mid;
            lo = ev;
        } else {
            lambda_hi = mid;
            hi = ev;
        }
    }

    let bracket = Bracket {
        lambda_lo,
        lambda_hi,
        growth_lo: lo.growth,
        nqis_lo: lo.nqis,
        growth_hi: hi.growth,
        nqis_hi: hi.nqis,
        degenerate: false,
    };
    Ok((bracket, trace))
}

pub fn sweep_lambda(instance: &Instance, k: usize, params: &SolverParams) -> Result<Bracket> {
    sweep_lambda_traced(instance, k, params).map(|(b, _)| b)
}

/// Cap on the exhaustive subset search inside the assembly.
const ENUM_CAP_BITS: usize = 20;
const RANDOM_SUBSET_DRAWS: usize = 10_000;

fn cost_of(instance: &Instance, centers: &[usize]) -> f64 {
    assignment_cost(instance, centers).unwrap_or(f64::INFINITY)
}

/// Greedy deletion: repeatedly drop the center whose removal raises the cost
/// least until at most k remain.
fn greedy_delete_to_k(instance: &Instance, mut centers: Vec<usize>, k: usize) -> Vec<usize> {
    while centers.len() > k && centers.len() > 1 {
        let mut best: Option<(usize, f64)> = None;
        for drop in 0..centers.len() {
            let mut trial = centers.clone();
            trial.remove(drop);
            let c = cost_of(instance, &trial);
            match best {
                Some((_, bc)) if c >= bc => {}
                _ => best = Some((drop, c)),
            }
        }
        let (drop, _) = best.expect("nonempty center set");
        centers.remove(drop);
    }
    centers
}

/// Builds candidate center sets along three routes and returns the cheapest
/// one of size at most k: (i) re-tuned rounding (or subset search) on the
/// wide side of the bracket, (ii) interpolation between samples from both
/// sides, (iii) greedy deletion from the best oversized candidate.
pub fn assemble_k_solution(
    instance: &Instance,
    bracket: &Bracket,
    k: usize,
    params: &SolverParams,
) -> Result<CenterSet> {
    let mut best_within: Option<(f64, Vec<usize>)> = None;
    let mut best_oversized: Option<(f64, Vec<usize>)> = None;
    let offer = |instance: &Instance,
                 set: Vec<usize>,
                 best_within: &mut Option<(f64, Vec<usize>)>,
                 best_oversized: &mut Option<(f64, Vec<usize>)>| {
        if set.is_empty() {
            return;
        }
        let mut set = set;
        set.sort_unstable();
        set.dedup();
        let cost = cost_of(instance, &set);
        let slot = if set.len() <= k {
            best_within
        } else {
            best_oversized
        };
        match slot {
            Some((c, _)) if *c <= cost => {}
            _ => *slot = Some((cost, set)),
        }
    };

    let nqis = &bracket.nqis_lo;
    let u = nqis.i2.len() + nqis.i3.len();
    let i1 = nqis.i1.clone();

    // route (i): adjust the inclusion probability so the expectation is k
    if i1.len() <= k {
        if u == 0 {
            offer(instance, i1.clone(), &mut best_within, &mut best_oversized);
        } else {
            let p_star = (k - i1.len()) as f64 / u as f64;
            let c4 = 100 * params.c.pow(4);
            let capped_ok =
                (0.01..=0.49).contains(&p_star) && u >= c4 && p_star > 2.0 / params.c as f64;
            if capped_ok {
                let rp = RoundingParams::new(
                    p_star.min(0.4999),
                    derive_seed(params.rng_seed, 0x5151),
                    params.c,
                )?;
                if let Ok(sample) = round_to_at_most_k(nqis, k, &rp) {
                    offer(instance, sample, &mut best_within, &mut best_oversized);
                }
            } else {
                let extras: Vec<usize> = nqis.i2.iter().chain(nqis.i3.iter()).copied().collect();
                if u <= ENUM_CAP_BITS {
                    // precomputed columns keep the full enumeration at
                    // O(n * popcount) per subset
                    let costs = SampleCosts::new(instance, nqis);
                    let n = instance.num_clients();
                    let mut best_mask: Option<(f64, u64)> = None;
                    let mut best_mask_over: Option<(f64, u64)> = None;
                    for mask in 0u64..(1u64 << u) {
                        let mut total = 0.0;
                        for j in 0..n {
                            let mut cheapest = costs.base[j];
                            let mut bits = mask;
                            while bits != 0 {
                                let pos = bits.trailing_zeros() as usize;
                                bits &= bits - 1;
                                let c = costs.extra_cost[j][pos];
                                if c < cheapest {
                                    cheapest = c;
                                }
                            }
                            total += cheapest;
                        }
                        let size = i1.len() + mask.count_ones() as usize;
                        let slot = if size <= k {
                            &mut best_mask
                        } else {
                            &mut best_mask_over
                        };
                        match slot {
                            Some((c, _)) if *c <= total => {}
                            _ => *slot = Some((total, mask)),
                        }
                    }
                    for candidate in [best_mask, best_mask_over].into_iter().flatten() {
                        let mut set = i1.clone();
                        for (pos, &f) in extras.iter().enumerate() {
                            if candidate.1 >> pos & 1 == 1 {
                                set.push(f);
                            }
                        }
                        offer(instance, set, &mut best_within, &mut best_oversized);
                    }
                } else {
                    let want = k - i1.len();
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.rng_seed, 0xE1E1));
                    for _ in 0..RANDOM_SUBSET_DRAWS {
                        let mut pool = extras.clone();
                        // partial shuffle: uniform subset of the target size
                        for pos in 0..want.min(pool.len()) {
                            let swap = rng.random_range(pos..pool.len());
                            pool.swap(pos, swap);
                        }
                        let mut set = i1.clone();
                        set.extend_from_slice(&pool[..want.min(pool.len())]);
                        offer(instance, set, &mut best_within, &mut best_oversized);
                    }
                }
            }
        }
    } else {
        offer(instance, i1.clone(), &mut best_within, &mut best_oversized);
    }

    // route (ii): interpolate between fresh samples from both bracket sides
    for attempt in 0..8u64 {
        let rp_lo = RoundingParams::new(
            params.p1,
            derive_seed(params.rng_seed, 0xA0 + attempt),
            params.c,
        )?;
        let rp_hi = RoundingParams::new(
            params.p1,
            derive_seed(params.rng_seed, 0xB0 + attempt),
            params.c,
        )?;
        let s_lo = sample_solution(&bracket.nqis_lo, &rp_lo);
        let s_hi = sample_solution(&bracket.nqis_hi, &rp_hi);
        offer(
            instance,
            s_lo.clone(),
            &mut best_within,
            &mut best_oversized,
        );
        offer(
            instance,
            s_hi.clone(),
            &mut best_within,
            &mut best_oversized,
        );
        if s_hi.len() < k {
            let mut pool: Vec<usize> = s_lo.iter().copied().filter(|f| !s_hi.contains(f)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.rng_seed, 0xC0 + attempt));
            let want = k - s_hi.len();
            for pos in 0..want.min(pool.len()) {
                let swap = rng.random_range(pos..pool.len());
                pool.swap(pos, swap);
            }
            let mut merged = s_hi.clone();
            merged.extend_from_slice(&pool[..want.min(pool.len())]);
            offer(instance, merged, &mut best_within, &mut best_oversized);
        }
    }

    // guaranteed fallback: the narrow side's first layer is below k
    offer(
        instance,
        bracket.nqis_hi.i1.clone(),
        &mut best_within,
        &mut best_oversized,
    );

    // route (iii): shrink the best oversized candidate greedily
    if let Some((_, oversized)) = &best_oversized {
        let trimmed = greedy_delete_to_k(instance, oversized.clone(), k);
        offer(instance, trimmed, &mut best_within, &mut best_oversized);
    }

    let (_, indices) = best_within.ok_or(Error::AssemblyFailed(k))?;
    CenterSet::from_indices(instance, indices)
}

/// Convenience wrapper: sweep then assemble.
pub fn solve_k(instance: &Instance, k: usize, params: &SolverParams) -> Result<CenterSet> {
    let bracket = sweep_lambda(instance, k, params)?;
    assemble_k_solution(instance, &bracket, k, params)
}

/// Per-client classification record.
#[derive(Debug, Clone, Serialize)]
pub struct ClientCase {
    pub client: usize,
    pub tag: String,
    /// 1-based accounting group.
    pub group: usize,
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub a_j: f64,
    pub b_j: f64,
}

/// Per-group sums of the dual decomposition, plus the per-client records.
#[derive(Debug, Clone, Serialize)]
pub struct CaseAccounting {
    pub objective: Objective,
    /// Q_i: per-group sums of A_j.
    pub q: Vec<f64>,
    /// R_i: per-group sums of B_j.
    pub r: Vec<f64>,
    pub clients: Vec<ClientCase>,
}

impl CaseAccounting {
    /// The per-group inequalities R_i <= m_i Q_i, with m from the objective.
    pub fn check(&self, deltas: (f64, f64, f64)) -> std::result::Result<(), String> {
        let caps = group_ratio_caps(self.objective, deltas);
        for (i, cap) in caps.iter().enumerate() {
            let tol = 1e-9 * self.q[i].abs().max(1.0);
            if self.r[i] > cap * self.q[i] + tol {
                return Err(format!(
                    "group {}: R = {} exceeds {cap} * Q = {}",
                    i + 1,
                    self.r[i],
                    cap * self.q[i]
                ));
            }
        }
        for cc in &self.clients {
            if cc.b_j < -1e-12 {
                return Err(format!("client {}: negative B", cc.client));
            }
            let coef = 1.0 / caps[cc.group - 1];
            let tol = 1e-9 * cc.a_j.abs().max(1.0);
            if cc.a_j - coef * cc.b_j < -tol {
                return Err(format!(
                    "client {} ({}): A = {} below {coef} * B = {}",
                    cc.client,
                    cc.tag,
                    cc.a_j,
                    coef * cc.b_j
                ));
            }
        }
        Ok(())
    }
}

/// Classifies every client by its layer neighborhood profile and witness
/// position, and accumulates the per-group dual decomposition.
pub fn client_case_stats(
    instance: &Instance,
    growth: &DualGrowthResult,
    nqis: &NestedQis,
) -> Result<CaseAccounting> {
    let graphs = graph_stack(instance, growth, nqis.deltas)?;
    client_case_stats_inner(instance, growth, nqis, &graphs)
}

fn client_case_stats_inner(
    instance: &Instance,
    growth: &DualGrowthResult,
    nqis: &NestedQis,
    graphs: &GraphStack,
) -> Result<CaseAccounting> {
    let objective = instance.objective;
    let groups = crate::certifier::num_groups(objective);
    let mut q_sums = vec![0.0_f64; groups];
    let mut r_sums = vec![0.0_f64; groups];
    let mut clients = Vec::with_capacity(instance.num_clients());

    let in_set = |set: &[usize], f: usize| set.binary_search(&f).is_ok();
    let mut i1s = nqis.i1.clone();
    let mut i2s = nqis.i2.clone();
    let mut i3s = nqis.i3.clone();
    let mut v2s = nqis.v2.clone();
    let mut v3s = nqis.v3.clone();
    for s in [&mut i1s, &mut i2s, &mut i3s, &mut v2s, &mut v3s] {
        s.sort_unstable();
    }
    let pos = |f: usize| graphs.g1.position_of(f).expect("tight facility");
    let gb = match nqis.variant {
        Variant::KMeansAlg => &graphs.g2,
        Variant::KMedianAlg => &graphs.g1,
    };

    for j in 0..instance.num_clients() {
        let neigh = growth.tight_neighbors(j);
        let alpha = growth.alpha[j];
        let n1: Vec<usize> = neigh.iter().copied().filter(|&f| in_set(&i1s, f)).collect();
        let n2: Vec<usize> = neigh.iter().copied().filter(|&f| in_set(&i2s, f)).collect();
        let n3: Vec<usize> = neigh.iter().copied().filter(|&f| in_set(&i3s, f)).collect();
        let (a, b, c) = (n1.len(), n2.len(), n3.len());
        let a_j = alpha - n1.iter().map(|&i| alpha - instance.cost(j, i)).sum::<f64>();
        let b_j: f64 = n2
            .iter()
            .chain(n3.iter())
            .map(|&i| alpha - instance.cost(j, i))
            .sum();

        let w = growth.witness[j];
        let wp = pos(w);
        let w_in_v2 = in_set(&v2s, w);
        let w_in_v3 = in_set(&v3s, w);
        let w_in_i1 = in_set(&i1s, w);
        let w_in_i2 = in_set(&i2s, w);
        let i2_neighbors_of_w = |g: &crate::conflict::ConflictGraph| -> Vec<usize> {
            g.adjacency[wp]
                .iter()
                .map(|&u| g.vertices[u])
                .filter(|&f| in_set(&i2s, f))
                .collect()
        };

        let (tag, group): (String, usize) = match objective {
            Objective::KMeans => {
                if a >= 1 {
                    let has_pair = n3
                        .iter()
                        .any(|&f3| nqis.partner_of(f3).is_some_and(|f2| n2.contains(&f2)));
                    ("5.a".into(), if has_pair { 5 } else { 1 })
                } else if b == 1 && c == 0 {
                    let i2 = n2[0];
                    if !w_in_v2 {
                        ("1.a".into(), 1)
                    } else if w_in_v3 {
                        ("1.b".into(), 2)
                    } else if w == i2 {
                        ("1.c".into(), 1)
                    } else if w_in_i2 {
                        ("1.d".into(), 1)
                    } else if i2_neighbors_of_w(&graphs.g2).len() >= 2 {
                        ("1.e".into(), 2)
                    } else {
                        let d3_partners = i2_neighbors_of_w(&graphs.g3);
                        if d3_partners.contains(&i2) {
                            ("1.g.i".into(), 3)
                        } else if !d3_partners.is_empty() {
                            ("1.g.ii".into(), 1)
                        } else {
                            return Err(Error::Unclassifiable(j));
                        }
                    }
                } else if b == 1 {
                    let i2 = n2[0];
                    let c1 = n3
                        .iter()
                        .filter(|&&f3| nqis.partner_of(f3) == Some(i2))
                        .count();
                    let c2 = c - c1;
                    if c1 == 0 {
                        ("2.a".into(), 1)
                    } else if c2 == 0 && c >= 2 {
                        ("2.b".into(), 5)
                    } else if c1 >= 1 && c2 >= 1 {
                        ("2.c".into(), 5)
                    } else {
                        // c1 = 1, c2 = 0: the paired case, grouped by how
                        // much of the dual the pair retains
                        let close = instance.cost(j, i2) + instance.cost(j, n3[0]);
                        ("2.d".into(), if close >= 0.25 * alpha { 4 } else { 5 })
                    }
                } else if b >= 2 {
                    let c1 = n3
                        .iter()
                        .filter(|&&f3| nqis.partner_of(f3).is_some_and(|f2| n2.contains(&f2)))
                        .count();
                    let c2 = c - c1;
                    if c1 == 0 {
                        ("3.a".into(), 1)
                    } else if c1 == 1 && c2 == 0 {
                        ("3.b".into(), 5)
                    } else {
                        ("3.c".into(), 5)
                    }
                } else {
                    // a = 0, b = 0
                    let direct = w_in_i1 || !w_in_v2;
                    match c {
                        0 => {
                            if direct {
                                ("4.a.i".into(), 1)
                            } else {
                                ("4.a.ii".into(), 2)
                            }
                        }
                        1 => {
                            if direct {
                                ("4.b.i".into(), 1)
                            } else {
                                ("4.b.ii".into(), 2)
                            }
                        }
                        _ => ("4.c".into(), 1),
                    }
                }
            }
            Objective::KMedian => {
                if a >= 1 {
                    let bc = b + c;
                    let tag = match (a, bc) {
                        (_, 0) => "4.a'",
                        (1, 1) => "4.b'",
                        (1, _) => "4.c'",
                        (_, 1) => "4.d'",
                        _ => "4.e'",
                    };
                    (tag.into(), 3)
                } else if b == 1 && c == 0 {
                    let i2 = n2[0];
                    if !w_in_v2 {
                        ("1.a'".into(), 1)
                    } else if w_in_v3 {
                        ("1.b'".into(), 1)
                    } else if w == i2 {
                        ("1.c'".into(), 1)
                    } else if w_in_i2 {
                        ("1.d'".into(), 1)
                    } else {
                        let d1_partners = i2_neighbors_of_w(gb);
                        if d1_partners.len() >= 2 {
                            ("1.e'".into(), 1)
                        } else if d1_partners.is_empty() {
                            ("1.f'".into(), 1)
                        } else {
                            let d3_partners = i2_neighbors_of_w(&graphs.g3);
                            if d3_partners.contains(&i2) {
                                ("1.g.i'".into(), 1)
                            } else if !d3_partners.is_empty() {
                                ("1.g.ii'".into(), 1)
                            } else {
                                return Err(Error::Unclassifiable(j));
                            }
                        }
                    }
                } else if b + c <= 1 {
                    if c == 0 {
                        ("2.a'".into(), 1)
                    } else {
                        ("2.b'".into(), 1)
                    }
                } else {
                    // a = 0, b + c >= 2
                    let threshold = (nqis.deltas.0 - 1.0) * alpha;
                    let any_close = n2
                        .iter()
                        .chain(n3.iter())
                        .any(|&i| instance.cost(j, i) < threshold);
                    if !any_close {
                        ("3.a'".into(), 2)
                    } else if b == 1 && c == 1 && nqis.partner_of(n3[0]) == Some(n2[0]) {
                        ("3.b.i'".into(), 2)
                    } else if b == 1
                        && c >= 2
                        && n3.iter().all(|&f3| nqis.partner_of(f3) == Some(n2[0]))
                    {
                        ("3.b.ii'".into(), 2)
                    } else {
                        return Err(Error::Unclassifiable(j));
                    }
                }
            }
        };

        q_sums[group - 1] += a_j;
        r_sums[group - 1] += b_j;
        clients.push(ClientCase {
            client: j,
            tag,
            group,
            a,
            b,
            c,
            a_j,
            b_j,
        });
    }

    Ok(CaseAccounting {
        objective,
        q: q_sums,
        r: r_sums,
        clients,
    })
}
