//! Nested quasi-independent sets: the three-layer pruning of tight
//! facilities and the anti-correlated roundings that turn the layers into a
//! random center set.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conflict::{
    conflict_graph_from_costs, maximal_independent_set, maximal_independent_set_induced,
    vertex_costs, ConflictGraph,
};
use crate::error::{Error, Result};
use crate::growth::DualGrowthResult;
use crate::model::Instance;

/// Which construction to run: the two differ only in whether the second and
/// third layers use the delta_2 graph (k-means) or the delta_1 graph
/// (k-median).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    KMeansAlg,
    KMedianAlg,
}

/// The nested triple (I1, I2, I3) over tight facilities, all entries given
/// as facility indices, plus the assignment of each I3 member to its unique
/// second-layer partner.
#[derive(Debug, Clone, Serialize)]
pub struct NestedQis {
    pub i1: Vec<usize>,
    pub i2: Vec<usize>,
    pub i3: Vec<usize>,
    /// Parallel to `i3`: q[x] is the unique partner of i3[x] inside I2.
    pub q: Vec<usize>,
    pub deltas: (f64, f64, f64),
    pub variant: Variant,
    /// Vertex set the construction ran on (tight facilities, ascending).
    pub vertices: Vec<usize>,
    /// t per vertex, same order as `vertices`.
    pub t: Vec<f64>,
    /// V2 membership after the first filter, as facility indices.
    pub v2: Vec<usize>,
    /// V3 membership after the second filter, as facility indices.
    pub v3: Vec<usize>,
}

impl NestedQis {
    pub fn partner_of(&self, facility: usize) -> Option<usize> {
        self.i3
            .iter()
            .position(|&f| f == facility)
            .map(|x| self.q[x])
    }

    /// Members of I3 assigned to the given I2 facility, ascending.
    pub fn preimage(&self, i2_facility: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .i3
            .iter()
            .zip(self.q.iter())
            .filter(|&(_, &target)| target == i2_facility)
            .map(|(&f, _)| f)
            .collect();
        out.sort_unstable();
        out
    }

    /// One group per second-layer facility: the hub and its (ascending)
    /// third-layer preimage, in second-layer order. Built in a single pass.
    pub fn groups(&self) -> Vec<(usize, Vec<usize>)> {
        let mut map: std::collections::HashMap<usize, Vec<usize>> =
            std::collections::HashMap::with_capacity(self.i2.len());
        for (&f3, &f2) in self.i3.iter().zip(self.q.iter()) {
            map.entry(f2).or_default().push(f3);
        }
        self.i2
            .iter()
            .map(|&hub| {
                let mut pre = map.remove(&hub).unwrap_or_default();
                pre.sort_unstable();
                (hub, pre)
            })
            .collect()
    }
}

/// Parameters of the randomized rounding step.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RoundingParams {
    /// Inclusion probability for second- and third-layer facilities.
    pub p: f64,
    pub rng_seed: u64,
    /// Group-size threshold for the capped rounding.
    pub group_threshold: usize,
}

impl RoundingParams {
    pub fn new(p: f64, rng_seed: u64, group_threshold: usize) -> Result<Self> {
        if !(0.0..0.5).contains(&p) {
            return Err(Error::InvalidParam(format!("p = {p} must lie in [0, 1/2)")));
        }
        if group_threshold < 1 {
            return Err(Error::InvalidParam("group threshold must be >= 1".into()));
        }
        Ok(RoundingParams {
            p,
            rng_seed,
            group_threshold,
        })
    }
}

/// Graphs at the three thresholds over one shared vertex set.
pub struct GraphStack {
    pub g1: ConflictGraph,
    pub g2: ConflictGraph,
    pub g3: ConflictGraph,
}

/// Builds the delta_1/delta_2/delta_3 conflict graphs over the tight set of a
/// growth result, sharing one pairwise cost matrix.
pub fn graph_stack(
    instance: &Instance,
    growth: &DualGrowthResult,
    deltas: (f64, f64, f64),
) -> Result<GraphStack> {
    let vertices = growth.tight.clone();
    let t: Vec<f64> = vertices.iter().map(|&i| growth.t[i]).collect();
    let pts: Vec<Vec<f64>> = vertices
        .iter()
        .map(|&i| instance.facilities[i].clone())
        .collect();
    let costs = vertex_costs(&pts, instance.objective);
    let g1 = conflict_graph_from_costs(
        vertices.clone(),
        &costs,
        t.clone(),
        deltas.0,
        instance.objective,
    )?;
    let g2 = conflict_graph_from_costs(
        vertices.clone(),
        &costs,
        t.clone(),
        deltas.1,
        instance.objective,
    )?;
    let g3 = conflict_graph_from_costs(vertices, &costs, t, deltas.2, instance.objective)?;
    Ok(GraphStack { g1, g2, g3 })
}

/// Runs the five construction steps on a prebuilt graph stack, optionally
/// seeding the first layer from a previous run (the λ sweep's warm start).
pub fn build_nqis_from_graphs(
    graphs: &GraphStack,
    deltas: (f64, f64, f64),
    variant: Variant,
    warm_i1: Option<&[usize]>,
) -> Result<NestedQis> {
    let (d1, d2, d3) = deltas;
    if !(d1 >= d2 && d2 >= d3 && d3 > 0.0) {
        return Err(Error::InvalidParam(format!(
            "deltas must satisfy d1 >= d2 >= d3 > 0, got ({d1}, {d2}, {d3})"
        )));
    }
    let g1 = &graphs.g1;
    let g2 = &graphs.g2;
    let g3 = &graphs.g3;
    let k = g1.num_vertices();

    // step 1: first-layer maximal independent set at the widest threshold
    let i1_pos: Vec<usize> = match warm_i1 {
        Some(prev) => crate::conflict::warm_start_mis(g1, prev)?,
        None => maximal_independent_set(g1),
    };
    let mut in_i1 = vec![false; k];
    for &v in &i1_pos {
        in_i1[v] = true;
    }

    // step 2: V2 = leftovers not delta_2-adjacent to the first layer
    let mut v2_mask = vec![false; k];
    for v in 0..k {
        if !in_i1[v] && !g2.adjacency[v].iter().any(|&u| in_i1[u]) {
            v2_mask[v] = true;
        }
    }

    // the sub-layer graph: delta_2 for k-means, delta_1 for k-median
    let gb = match variant {
        Variant::KMeansAlg => g2,
        Variant::KMedianAlg => g1,
    };

    // step 3: second layer, maximal within V2 under the sub-layer threshold
    let i2_pos = maximal_independent_set_induced(gb, &v2_mask);
    let mut in_i2 = vec![false; k];
    for &v in &i2_pos {
        in_i2[v] = true;
    }

    // step 4: V3 = V2 leftovers with exactly one second-layer neighbor in the
    // sub-layer graph, none in the first layer at delta_2, and no
    // second-layer neighbor as close as delta_3
    let mut v3_mask = vec![false; k];
    for v in 0..k {
        if !v2_mask[v] || in_i2[v] {
            continue;
        }
        let i2_neighbors = gb.adjacency[v].iter().filter(|&&u| in_i2[u]).count();
        if i2_neighbors != 1 {
            continue;
        }
        if g2.adjacency[v].iter().any(|&u| in_i1[u]) {
            continue;
        }
        if g3.adjacency[v].iter().any(|&u| in_i2[u]) {
            continue;
        }
        v3_mask[v] = true;
    }

    // step 5: third layer, maximal within V3 under the sub-layer threshold
    let i3_pos = maximal_independent_set_induced(gb, &v3_mask);

    let q: Vec<usize> = i3_pos
        .iter()
        .map(|&v| {
            let mut targets = gb.adjacency[v].iter().filter(|&&u| in_i2[u]);
            let first = *targets.next().expect("third-layer member has a partner");
            debug_assert!(targets.next().is_none(), "partner must be unique");
            g1.vertices[first]
        })
        .collect();

    let to_fac =
        |positions: &[usize]| -> Vec<usize> { positions.iter().map(|&v| g1.vertices[v]).collect() };
    let mask_to_fac = |mask: &[bool]| -> Vec<usize> {
        (0..k)
            .filter(|&v| mask[v])
            .map(|v| g1.vertices[v])
            .collect()
    };

    Ok(NestedQis {
        i1: to_fac(&i1_pos),
        i2: to_fac(&i2_pos),
        i3: to_fac(&i3_pos),
        q,
        deltas,
        variant,
        vertices: g1.vertices.clone(),
        t: g1.t.clone(),
        v2: mask_to_fac(&v2_mask),
        v3: mask_to_fac(&v3_mask),
    })
}

/// Full construction straight from a growth result.
pub fn build_nqis(
    growth: &DualGrowthResult,
    instance: &Instance,
    deltas: (f64, f64, f64),
    variant: Variant,
) -> Result<NestedQis> {
    let graphs = graph_stack(instance, growth, deltas)?;
    build_nqis_from_graphs(&graphs, deltas, variant, None)
}

/// Closed-form expected number of centers under inclusion probability p.
pub fn expected_size(nqis: &NestedQis, p: f64) -> f64 {
    nqis.i1.len() as f64 + p * (nqis.i2.len() + nqis.i3.len()) as f64
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The anti-correlated rounding: every first-layer facility is kept; for each
/// second-layer facility a fair coin decides whether the facility itself or
/// its third-layer preimage gets a chance, and the chosen side enters with
/// probability 2p. Marginals are exactly p on both layers.
pub fn sample_solution(nqis: &NestedQis, params: &RoundingParams) -> Vec<usize> {
    sample_solution_grouped(&nqis.i1, &nqis.groups(), params)
}

/// Rounding over precomputed groups; callers drawing many samples build the
/// groups once.
pub fn sample_solution_grouped(
    i1: &[usize],
    groups: &[(usize, Vec<usize>)],
    params: &RoundingParams,
) -> Vec<usize> {
    let mut rng = rng_for(params.rng_seed);
    let two_p = 2.0 * params.p;
    let mut s: Vec<usize> = i1.to_vec();
    for (hub, pre) in groups {
        if rng.random_bool(0.5) {
            if two_p > 0.0 && rng.random_bool(two_p) {
                s.push(*hub);
            }
        } else {
            for &member in pre {
                if two_p > 0.0 && rng.random_bool(two_p) {
                    s.push(member);
                }
            }
        }
    }
    s.sort_unstable();
    s
}

/// Retry budget multiplier for the capped rounding.
const RETRY_FACTOR: usize = 10;

/// One draw of the size-capped rounding: groups a second-layer facility with
/// its preimage, opens the hubs of all large groups outright, and lowers the
/// inclusion probability to p - 2/C so that the sampled size concentrates
/// below the target.
/// Groups sorted by non-increasing size (hub index breaking ties) and the
/// count of groups at or above the threshold, as the capped scheme wants.
fn sorted_groups(nqis: &NestedQis, threshold: usize) -> (Vec<(usize, Vec<usize>)>, usize) {
    let mut groups = nqis.groups();
    groups.sort_by(|a, b| (b.1.len() + 1).cmp(&(a.1.len() + 1)).then(a.0.cmp(&b.0)));
    let s_cut = groups
        .iter()
        .take_while(|(_, pre)| pre.len() + 1 >= threshold)
        .count();
    (groups, s_cut)
}

fn check_capped_params(params: &RoundingParams) -> Result<f64> {
    let c = params.group_threshold;
    if c < 2 {
        return Err(Error::InvalidParam("group threshold must be >= 2".into()));
    }
    let p_prime = params.p - 2.0 / c as f64;
    if p_prime <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "p = {} too small for group threshold C = {c}: p - 2/C <= 0",
            params.p
        )));
    }
    Ok(p_prime)
}

/// One draw of the size-capped rounding: the hubs of all groups of size >= C
/// open outright, everything else runs the fair-coin scheme at the lowered
/// probability p - 2/C, so the sampled size concentrates below the target.
pub fn capped_rounding_sample(
    nqis: &NestedQis,
    params: &RoundingParams,
    attempt: u64,
) -> Result<Vec<usize>> {
    let p_prime = check_capped_params(params)?;
    let (groups, s_cut) = sorted_groups(nqis, params.group_threshold);
    Ok(capped_draw(
        &nqis.i1,
        &groups,
        s_cut,
        p_prime,
        params.rng_seed,
        attempt,
    ))
}

fn capped_draw(
    i1: &[usize],
    groups: &[(usize, Vec<usize>)],
    s_cut: usize,
    p_prime: f64,
    seed: u64,
    attempt: u64,
) -> Vec<usize> {
    let two_p_prime = 2.0 * p_prime;
    let mut rng = rng_for(seed.wrapping_add(attempt));
    let mut s: Vec<usize> = i1.to_vec();
    for (g_idx, (hub, pre)) in groups.iter().enumerate() {
        if g_idx < s_cut {
            s.push(*hub);
            for &member in pre {
                if rng.random_bool(p_prime) {
                    s.push(member);
                }
            }
        } else if rng.random_bool(0.5) {
            if rng.random_bool(two_p_prime) {
                s.push(*hub);
            }
        } else {
            for &member in pre {
                if rng.random_bool(two_p_prime) {
                    s.push(member);
                }
            }
        }
    }
    s.sort_unstable();
    s
}

/// Resamples the capped rounding up to 10*C times and returns the first draw
/// of size <= k; carries the smallest sampled size on failure.
pub fn round_to_at_most_k(
    nqis: &NestedQis,
    k: usize,
    params: &RoundingParams,
) -> Result<Vec<usize>> {
    let p_prime = check_capped_params(params)?;
    let (groups, s_cut) = sorted_groups(nqis, params.group_threshold);
    let mut best: Option<Vec<usize>> = None;
    for attempt in 0..(RETRY_FACTOR * params.group_threshold) as u64 {
        let s = capped_draw(&nqis.i1, &groups, s_cut, p_prime, params.rng_seed, attempt);
        if s.len() <= k {
            return Ok(s);
        }
        if best.as_ref().is_none_or(|b| s.len() < b.len()) {
            best = Some(s);
        }
    }
    Err(Error::RetryExhausted {
        k,
        best: best.map_or(usize::MAX, |b| b.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Objective;

    /// Hand-built NQIS over abstract facilities, no geometry involved.
    pub fn synthetic_nqis(
        i1: Vec<usize>,
        i2: Vec<usize>,
        i3_with_q: Vec<(usize, usize)>,
    ) -> NestedQis {
        let (i3, q): (Vec<usize>, Vec<usize>) = i3_with_q.into_iter().unzip();
        let mut vertices: Vec<usize> = i1.iter().chain(&i2).chain(&i3).copied().collect();
        vertices.sort_unstable();
        let t = vec![1.0; vertices.len()];
        NestedQis {
            i1,
            i2,
            i3,
            q,
            deltas: (2.0, 2.0, 0.5),
            variant: Variant::KMeansAlg,
            vertices,
            t,
            v2: Vec::new(),
            v3: Vec::new(),
        }
    }

    fn two_vertex_stack(edge12: bool, edge3: bool) -> GraphStack {
        // two vertices with t = 1 at controllable distances
        let dist = if edge3 {
            0.3
        } else if edge12 {
            1.0
        } else {
            10.0
        };
        let pts = vec![vec![0.0], vec![dist]];
        let costs = vertex_costs(&pts, Objective::KMeans);
        let mk = |delta: f64| {
            conflict_graph_from_costs(vec![0, 1], &costs, vec![1.0, 1.0], delta, Objective::KMeans)
                .unwrap()
        };
        GraphStack {
            g1: mk(2.1877),
            g2: mk(2.0),
            g3: mk(0.265),
        }
    }

    #[test]
    fn all_zero_t_keeps_every_facility_in_first_layer() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        let costs = vertex_costs(&pts, Objective::KMeans);
        let mk = |delta: f64| {
            conflict_graph_from_costs(
                vec![0, 1, 2],
                &costs,
                vec![0.0; 3],
                delta,
                Objective::KMeans,
            )
            .unwrap()
        };
        let graphs = GraphStack {
            g1: mk(2.1877),
            g2: mk(2.0),
            g3: mk(0.265),
        };
        let nqis = build_nqis_from_graphs(&graphs, (2.1877, 2.0, 0.265), Variant::KMeansAlg, None)
            .unwrap();
        assert_eq!(nqis.i1, vec![0, 1, 2]);
        assert!(nqis.i2.is_empty());
        assert!(nqis.i3.is_empty());
    }

    #[test]
    fn adjacent_pair_collapses_to_lowest_index() {
        // edge in both wide graphs but not the narrow one: the second vertex
        // is blocked from V2 by adjacency to the first layer
        let graphs = two_vertex_stack(true, false);
        let nqis = build_nqis_from_graphs(&graphs, (2.1877, 2.0, 0.265), Variant::KMeansAlg, None)
            .unwrap();
        assert_eq!(nqis.i1, vec![0]);
        assert!(nqis.v2.is_empty());
        assert!(nqis.i2.is_empty());
        assert!(nqis.i3.is_empty());
    }

    #[test]
    fn single_vertex() {
        let pts = vec![vec![0.0]];
        let costs = vertex_costs(&pts, Objective::KMeans);
        let g =
            conflict_graph_from_costs(vec![7], &costs, vec![1.0], 2.0, Objective::KMeans).unwrap();
        let graphs = GraphStack {
            g1: g.clone(),
            g2: g.clone(),
            g3: g,
        };
        let nqis =
            build_nqis_from_graphs(&graphs, (2.0, 2.0, 0.5), Variant::KMeansAlg, None).unwrap();
        assert_eq!(nqis.i1, vec![7]);
        assert!(nqis.i2.is_empty() && nqis.i3.is_empty());
    }

    #[test]
    fn p_zero_returns_first_layer_only() {
        let nqis = synthetic_nqis(vec![0, 1], vec![2], vec![(3, 2), (4, 2)]);
        let params = RoundingParams::new(0.0, 42, 3).unwrap();
        for shift in 0..20 {
            let params = RoundingParams {
                rng_seed: params.rng_seed + shift,
                ..params
            };
            assert_eq!(sample_solution(&nqis, &params), vec![0, 1]);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let nqis = synthetic_nqis(vec![0], vec![1, 2], vec![(3, 1), (4, 2), (5, 2)]);
        let params = RoundingParams::new(0.3, 1234, 3).unwrap();
        let a = sample_solution(&nqis, &params);
        let b = sample_solution(&nqis, &params);
        assert_eq!(a, b);
    }

    #[test]
    fn marginals_and_expected_size() {
        let nqis = synthetic_nqis(vec![0, 1], vec![2, 3], vec![(4, 2), (5, 2), (6, 3)]);
        let p = 0.35;
        let trials = 100_000u64;
        let mut counts = std::collections::HashMap::<usize, u64>::new();
        let mut size_sum = 0.0_f64;
        for s in 0..trials {
            let params = RoundingParams::new(p, 1000 + s, 3).unwrap();
            let sample = sample_solution(&nqis, &params);
            size_sum += sample.len() as f64;
            for &f in &sample {
                *counts.entry(f).or_default() += 1;
            }
            // anti-correlation: a third-layer member and its partner are
            // never both present
            for (&f3, &f2) in nqis.i3.iter().zip(nqis.q.iter()) {
                assert!(!(sample.contains(&f3) && sample.contains(&f2)));
            }
        }
        let sigma_p = (p * (1.0 - p) / trials as f64).sqrt();
        for f in 2..=6 {
            let hat = counts[&f] as f64 / trials as f64;
            assert!(
                (hat - p).abs() < 4.0 * sigma_p,
                "marginal of {f}: {hat} vs {p}"
            );
        }
        let expect = expected_size(&nqis, p);
        assert!((expect - 3.75).abs() < 1e-12);
        let mean_size = size_sum / trials as f64;
        let sigma_size = (5.0 * p * (1.0 - p)).sqrt() / (trials as f64).sqrt();
        assert!(
            (mean_size - expect).abs() < 4.0 * sigma_size,
            "mean size {mean_size} vs {expect}"
        );
    }

    #[test]
    fn expected_size_arithmetic() {
        let nqis = synthetic_nqis(
            (0..5).collect(),
            (5..8).collect(),
            (8..15).map(|f| (f, 5)).collect(),
        );
        assert_eq!(expected_size(&nqis, 0.0), 5.0);
        assert!((expected_size(&nqis, 0.4) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn anticorrelation_probability_bounds() {
        // c third-layer members of one client's neighborhood, grouped under
        // two partners; empirical no-selection probability must respect the
        // closed-form ceiling (1/2 + (1/2)(1-2p)^c) and the partner variant.
        let p = 0.22;
        let nqis = synthetic_nqis(vec![], vec![0, 1], vec![(2, 0), (3, 0), (4, 1)]);
        let neighborhood = [2usize, 3, 4];
        let c = neighborhood.len() as i32;
        let trials = 100_000u64;
        let mut none_hit = 0u64;
        let mut none_hit_nor_partner = 0u64;
        for s in 0..trials {
            let params = RoundingParams::new(p, 777 + s, 3).unwrap();
            let sample = sample_solution(&nqis, &params);
            let miss = neighborhood.iter().all(|f| !sample.contains(f));
            if miss {
                none_hit += 1;
            }
            // partner of member 2 is facility 0
            if miss && !sample.contains(&0) {
                none_hit_nor_partner += 1;
            }
        }
        let q = 1.0 - 2.0 * p;
        let bound1 = 0.5 + 0.5 * q.powi(c);
        let bound2 = 0.5 * q + 0.5 * q.powi(c);
        let sigma = (0.25 / trials as f64).sqrt();
        let hat1 = none_hit as f64 / trials as f64;
        let hat2 = none_hit_nor_partner as f64 / trials as f64;
        assert!(hat1 <= bound1 + 3.0 * sigma, "{hat1} vs {bound1}");
        assert!(hat2 <= bound2 + 3.0 * sigma, "{hat2} vs {bound2}");
    }

    #[test]
    fn capped_rounding_degenerates_to_bernoulli() {
        // singleton groups only: every second-layer member independently with
        // probability p' on top of the first layer
        let nqis = synthetic_nqis(vec![0, 1], (2..30).collect(), vec![]);
        let p = 0.4;
        let c = 8;
        let p_prime = p - 2.0 / c as f64;
        let trials = 40_000u64;
        let mut total = 0.0;
        for s in 0..trials {
            let params = RoundingParams::new(p, 31 + s, c).unwrap();
            // k large enough that no retry is needed
            let sample = round_to_at_most_k(&nqis, 30, &params).unwrap();
            total += (sample.len() - 2) as f64;
        }
        let mean = total / trials as f64;
        let expect = 28.0 * p_prime;
        let sigma = (28.0 * p_prime * (1.0 - p_prime)).sqrt() / (trials as f64).sqrt();
        assert!((mean - expect).abs() < 4.0 * sigma, "{mean} vs {expect}");
    }

    #[test]
    fn capped_rounding_single_draw_success_rate() {
        // the smallest threshold compatible with p < 1/2 is C = 5 (the
        // lowered probability p - 2/C must stay positive); at the prescribed
        // scale |I2 u I3| >= 100 C^4 a single draw lands at or below the
        // expectation-matching k with large probability
        let c = 5usize;
        let p = 0.45;
        let i1: Vec<usize> = (0..100).collect();
        let mut i2 = Vec::new();
        let mut i3_with_q = Vec::new();
        let mut next = 100usize;
        for _ in 0..1000 {
            let hub = next;
            next += 1;
            i2.push(hub);
            for _ in 0..49 {
                i3_with_q.push((next, hub));
                next += 1;
            }
        }
        for _ in 0..12_500 {
            i2.push(next);
            next += 1;
        }
        let nqis = synthetic_nqis(i1, i2, i3_with_q);
        let units = nqis.i2.len() + nqis.i3.len();
        assert!(units >= 100 * c.pow(4));
        let k = (100.0 + p * units as f64).round() as usize;
        assert!((expected_size(&nqis, p) - k as f64).abs() < 1e-9);
        let draws = 2000u64;
        let mut ok = 0u64;
        for attempt in 0..draws {
            let params = RoundingParams::new(p, 2024, c).unwrap();
            let s = capped_rounding_sample(&nqis, &params, attempt).unwrap();
            if s.len() <= k {
                ok += 1;
            }
        }
        let rate = ok as f64 / draws as f64;
        assert!(rate >= 0.8, "single-draw success rate {rate}");
        // the p' <= 0 regime is rejected outright
        let bad = RoundingParams::new(0.3, 1, 3).unwrap();
        assert!(round_to_at_most_k(&nqis, k, &bad).is_err());
    }

    #[test]
    fn capped_rounding_expected_size_bound() {
        // mixed group sizes; mean sampled size must stay under
        // |I1| + (p - 1/C) * |I2 u I3|
        let mut i3_with_q = Vec::new();
        for member in 10..18 {
            i3_with_q.push((member, 0)); // one big group of 9
        }
        i3_with_q.push((18, 1));
        let nqis = synthetic_nqis(vec![100], vec![0, 1, 2], i3_with_q);
        let p = 0.45;
        let c = 5;
        let total_units = (nqis.i2.len() + nqis.i3.len()) as f64;
        let trials = 30_000u64;
        let mut sum = 0.0;
        for s in 0..trials {
            let params = RoundingParams::new(p, 555 + s, c).unwrap();
            let sample = round_to_at_most_k(&nqis, usize::MAX, &params).unwrap();
            sum += (sample.len() - 1) as f64;
        }
        let mean = sum / trials as f64;
        let cap = (p - 1.0 / c as f64) * total_units;
        assert!(
            mean <= cap + 4.0 * (total_units / trials as f64).sqrt(),
            "mean {mean} vs cap {cap}"
        );
    }
}
