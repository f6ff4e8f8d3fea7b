//! Checkable contracts for the pipeline's intermediate structures. Each
//! check returns a description of the first breach it finds, so tests and
//! debug paths can assert on any output.

use crate::conflict::ConflictGraph;
use crate::growth::{strictly_above, DualGrowthResult};
use crate::model::Instance;
use crate::nqis::{NestedQis, Variant};

type Check = Result<(), String>;

fn fail(msg: String) -> Check {
    Err(msg)
}

/// Witness contract: every witness is tight, dominates the client's dual in
/// neither direction, and tight neighborhoods respect the t values.
pub fn check_witness_contract(instance: &Instance, growth: &DualGrowthResult) -> Check {
    let tol = 1e-9;
    for j in 0..instance.num_clients() {
        let w = growth.witness[j];
        if w == usize::MAX {
            return fail(format!("client {j} has no witness"));
        }
        if !growth.is_tight(w) {
            return fail(format!("witness {w} of client {j} is not tight"));
        }
        let a = growth.alpha[j];
        let scale = a.abs().max(1.0);
        if a + tol * scale < growth.t[w] {
            return fail(format!("client {j}: alpha {a} < t[{w}] = {}", growth.t[w]));
        }
        if a + tol * scale < instance.cost(j, w) {
            return fail(format!(
                "client {j}: alpha {a} < c(j, {w}) = {}",
                instance.cost(j, w)
            ));
        }
    }
    for &i in &growth.tight {
        for &j in &growth.facility_neighbors[i] {
            let a = growth.alpha[j];
            if growth.t[i] + 1e-9 * a.abs().max(1.0) < a {
                return fail(format!(
                    "facility {i}: t {} < alpha[{j}] = {a}",
                    growth.t[i]
                ));
            }
            if !strictly_above(a, instance.cost(j, i)) {
                return fail(format!(
                    "facility {i}: member {j} not strictly inside the neighborhood"
                ));
            }
        }
    }
    Ok(())
}

/// The dual constraint must hold everywhere and hold with equality exactly on
/// the tight set.
pub fn check_tightness(instance: &Instance, growth: &DualGrowthResult) -> Check {
    let lambda = growth.lambda;
    let tol = if lambda > 0.0 { 1e-9 * lambda } else { 1e-9 };
    for i in 0..instance.num_facilities() {
        let total: f64 = (0..instance.num_clients())
            .map(|j| (growth.alpha[j] - instance.cost(j, i)).max(0.0))
            .sum();
        if total > lambda + tol {
            return fail(format!(
                "facility {i}: slack sum {total} exceeds lambda {lambda}"
            ));
        }
        if growth.is_tight(i) && (total - lambda).abs() > tol.max(1e-12) {
            return fail(format!(
                "tight facility {i}: slack sum {total} != lambda {lambda}"
            ));
        }
    }
    Ok(())
}

/// Independence plus maximality of a vertex-position set inside a graph.
pub fn check_independent_and_maximal(graph: &ConflictGraph, set: &[usize]) -> Check {
    let k = graph.num_vertices();
    let mut inside = vec![false; k];
    for &v in set {
        if v >= k {
            return fail(format!("position {v} out of range"));
        }
        inside[v] = true;
    }
    for &v in set {
        for &u in &graph.adjacency[v] {
            if inside[u] {
                return fail(format!("members {v} and {u} conflict"));
            }
        }
    }
    for v in 0..k {
        if !inside[v] && !graph.adjacency[v].iter().any(|&u| inside[u]) {
            return fail(format!("vertex {v} could be added: set not maximal"));
        }
    }
    Ok(())
}

/// Structural invariants of a nested quasi-independent set, checked by direct
/// graph queries on a freshly built stack.
pub fn check_nqis(instance: &Instance, growth: &DualGrowthResult, nqis: &NestedQis) -> Check {
    let graphs =
        crate::nqis::graph_stack(instance, growth, nqis.deltas).map_err(|e| e.to_string())?;
    let pos = |fac: usize| -> Result<usize, String> {
        graphs
            .g1
            .position_of(fac)
            .ok_or_else(|| format!("facility {fac} is not a vertex"))
    };
    let i1: Vec<usize> = nqis.i1.iter().map(|&f| pos(f)).collect::<Result<_, _>>()?;
    let i2: Vec<usize> = nqis.i2.iter().map(|&f| pos(f)).collect::<Result<_, _>>()?;
    let i3: Vec<usize> = nqis.i3.iter().map(|&f| pos(f)).collect::<Result<_, _>>()?;

    check_independent_and_maximal(&graphs.g1, &i1).map_err(|e| format!("first layer: {e}"))?;

    // disjointness
    for &v in &i2 {
        if i1.contains(&v) {
            return fail(format!("layer overlap at position {v}"));
        }
    }
    for &v in &i3 {
        if i1.contains(&v) || i2.contains(&v) {
            return fail(format!("layer overlap at position {v}"));
        }
    }

    // I1 u I2 independent at delta_2
    let union: Vec<usize> = i1.iter().chain(i2.iter()).copied().collect();
    for a in 0..union.len() {
        for b in a + 1..union.len() {
            if graphs.g2.has_edge(union[a], union[b]) {
                return fail(format!(
                    "first and second layers conflict at delta_2: {} {}",
                    union[a], union[b]
                ));
            }
        }
    }

    let gb = match nqis.variant {
        Variant::KMeansAlg => &graphs.g2,
        Variant::KMedianAlg => &graphs.g1,
    };

    // second layer maximal inside V2 under the sub-layer threshold
    let mut v2_mask = vec![false; graphs.g1.num_vertices()];
    for &f in &nqis.v2 {
        v2_mask[pos(f)?] = true;
    }
    for &v in &i2 {
        if !v2_mask[v] {
            return fail(format!("second-layer member {v} outside V2"));
        }
    }
    for v in 0..v2_mask.len() {
        if v2_mask[v] && !i2.contains(&v) && !gb.adjacency[v].iter().any(|&u| i2.contains(&u)) {
            return fail(format!("second layer not maximal: vertex {v} is free"));
        }
    }

    // third-layer conditions
    for (&f3, &f2) in nqis.i3.iter().zip(nqis.q.iter()) {
        let v = pos(f3)?;
        let partners: Vec<usize> = gb.adjacency[v]
            .iter()
            .copied()
            .filter(|u| i2.contains(u))
            .collect();
        if partners.len() != 1 {
            return fail(format!(
                "third-layer member {f3} has {} second-layer partners",
                partners.len()
            ));
        }
        if graphs.g1.vertices[partners[0]] != f2 {
            return fail(format!("q({f3}) mismatch"));
        }
        if graphs.g2.adjacency[v].iter().any(|u| i1.contains(u)) {
            return fail(format!("third-layer member {f3} touches the first layer"));
        }
        if graphs.g3.adjacency[v].iter().any(|u| i2.contains(u)) {
            return fail(format!(
                "third-layer member {f3} is delta_3-close to the second layer"
            ));
        }
    }
    // third layer pairwise independent in the sub-layer graph
    for a in 0..i3.len() {
        for b in a + 1..i3.len() {
            if gb.has_edge(i3[a], i3[b]) {
                return fail(format!("third-layer members {} {} conflict", i3[a], i3[b]));
            }
        }
    }
    Ok(())
}
