//! Conflict graphs over tight facilities and deterministic greedy maximal
//! independent sets, including the warm-started update used by the λ sweep.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Objective, Point};

/// Graph on tight facilities where two vertices conflict when their cost is
/// within delta times the smaller of their t values. The comparison is
/// non-strict: ties are genuine edges.
#[derive(Debug, Clone, Serialize)]
pub struct ConflictGraph {
    /// Facility indices, ascending.
    pub vertices: Vec<usize>,
    /// t value per vertex (same order as `vertices`).
    pub t: Vec<f64>,
    pub delta: f64,
    pub objective: Objective,
    /// Adjacency lists by vertex position, each list ascending.
    pub adjacency: Vec<Vec<usize>>,
}

impl ConflictGraph {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn position_of(&self, facility: usize) -> Option<usize> {
        self.vertices.binary_search(&facility).ok()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u != v && self.adjacency[u].binary_search(&v).is_ok()
    }
}

/// Pairwise cost between vertex points under the instance objective.
pub fn vertex_costs(points: &[Point], objective: Objective) -> Vec<Vec<f64>> {
    let k = points.len();
    let mut out = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a + 1..k {
            let c = crate::model::pair_cost(&points[a], &points[b], objective)
                .expect("vertex points share one dimension");
            out[a][b] = c;
            out[b][a] = c;
        }
    }
    out
}

/// Builds the threshold graph from a precomputed pairwise cost matrix,
/// avoiding repeated distance work when several deltas are needed.
pub fn conflict_graph_from_costs(
    vertices: Vec<usize>,
    costs: &[Vec<f64>],
    t: Vec<f64>,
    delta: f64,
    objective: Objective,
) -> Result<ConflictGraph> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParam(format!("delta = {delta} must be > 0")));
    }
    if t.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidParam("negative t value".into()));
    }
    let k = vertices.len();
    let mut adjacency = vec![Vec::new(); k];
    for a in 0..k {
        for b in a + 1..k {
            if costs[a][b] <= delta * t[a].min(t[b]) {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
    }
    Ok(ConflictGraph {
        vertices,
        t,
        delta,
        objective,
        adjacency,
    })
}

/// O(V^2) construction straight from facility coordinates.
pub fn build_conflict_graph(
    facility_points: &[Point],
    vertices: Vec<usize>,
    t: Vec<f64>,
    delta: f64,
    objective: Objective,
) -> Result<ConflictGraph> {
    if vertices.len() != t.len() {
        return Err(Error::InvalidParam(
            "vertex and t lists differ in length".into(),
        ));
    }
    let pts: Vec<Point> = vertices
        .iter()
        .map(|&i| facility_points[i].clone())
        .collect();
    let costs = vertex_costs(&pts, objective);
    conflict_graph_from_costs(vertices, &costs, t, delta, objective)
}

/// Greedy maximal independent set scanning vertices in ascending facility
/// index order. Returns vertex positions.
pub fn maximal_independent_set(graph: &ConflictGraph) -> Vec<usize> {
    greedy_extend(graph, Vec::new(), None)
}

/// Extends `kept` (already independent, ascending) to a maximal independent
/// set, restricted to `allowed` positions when given.
fn greedy_extend(graph: &ConflictGraph, kept: Vec<usize>, allowed: Option<&[bool]>) -> Vec<usize> {
    let k = graph.num_vertices();
    let mut blocked = vec![false; k];
    let mut chosen = vec![false; k];
    for &v in &kept {
        chosen[v] = true;
        for &u in &graph.adjacency[v] {
            blocked[u] = true;
        }
    }
    let mut out = kept;
    for v in 0..k {
        if chosen[v] || blocked[v] {
            continue;
        }
        if let Some(mask) = allowed {
            if !mask[v] {
                continue;
            }
        }
        chosen[v] = true;
        out.push(v);
        for &u in &graph.adjacency[v] {
            blocked[u] = true;
        }
    }
    out.sort_unstable();
    out
}

/// Maximal independent set of the induced subgraph on `allowed` positions.
pub fn maximal_independent_set_induced(graph: &ConflictGraph, allowed: &[bool]) -> Vec<usize> {
    greedy_extend(graph, Vec::new(), Some(allowed))
}

/// Carries a previous independent set (given by facility indices) into a new
/// graph: members that survived as vertices are retained while pairwise
/// independent (dropping conflicting members in index order), then the set is
/// greedily extended to maximality. When exactly one vertex disappeared and
/// the surviving edge relation is unchanged, at most one previous member is
/// lost.
pub fn warm_start_mis(graph: &ConflictGraph, previous: &[usize]) -> Result<Vec<usize>> {
    let mut kept: Vec<usize> = Vec::new();
    let mut prev_sorted: Vec<usize> = previous.to_vec();
    prev_sorted.sort_unstable();
    prev_sorted.dedup();
    for &fac in &prev_sorted {
        if let Some(pos) = graph.position_of(fac) {
            if kept.iter().all(|&q| !graph.has_edge(q, pos)) {
                kept.push(pos);
            }
        }
    }
    // contract check: the retained core must be independent
    for a in 0..kept.len() {
        for b in a + 1..kept.len() {
            if graph.has_edge(kept[a], kept[b]) {
                return Err(Error::WarmStartContract);
            }
        }
    }
    Ok(greedy_extend(graph, kept, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph_from_edges(k: usize, t: f64, edges: &[(usize, usize)]) -> ConflictGraph {
        let mut adjacency = vec![Vec::new(); k];
        for &(a, b) in edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for l in &mut adjacency {
            l.sort_unstable();
        }
        ConflictGraph {
            vertices: (0..k).collect(),
            t: vec![t; k],
            delta: 1.0,
            objective: Objective::KMeans,
            adjacency,
        }
    }

    #[test]
    fn zero_t_gives_empty_edge_set() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0], vec![2.0]];
        let g = build_conflict_graph(&pts, vec![0, 1, 2], vec![0.0; 3], 2.0, Objective::KMeans)
            .unwrap();
        assert!(g.adjacency.iter().all(|a| a.is_empty()));
        assert_eq!(maximal_independent_set(&g), vec![0, 1, 2]);
    }

    #[test]
    fn boundary_cost_counts_as_edge() {
        // two vertices at squared distance exactly 2, t = 1: edge iff
        // delta >= 2 (the threshold comparison is non-strict)
        let pts: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let g =
            build_conflict_graph(&pts, vec![0, 1], vec![1.0, 1.0], 2.0, Objective::KMeans).unwrap();
        assert!(g.has_edge(0, 1));
        let g2 =
            build_conflict_graph(&pts, vec![0, 1], vec![1.0, 1.0], 1.9, Objective::KMeans).unwrap();
        assert!(!g2.has_edge(0, 1));
    }

    #[test]
    fn greedy_mis_on_small_graphs() {
        let complete = graph_from_edges(4, 1.0, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(maximal_independent_set(&complete), vec![0]);
        let path = graph_from_edges(3, 1.0, &[(0, 1), (1, 2)]);
        assert_eq!(maximal_independent_set(&path), vec![0, 2]);
    }

    #[test]
    fn warm_start_fixed_point_and_extension() {
        let g = graph_from_edges(4, 1.0, &[(0, 1), (2, 3)]);
        let mis = maximal_independent_set(&g);
        assert_eq!(warm_start_mis(&g, &mis_to_fac(&g, &mis)).unwrap(), mis);

        // vertex 4 added with no edges: it must join the set
        let g2 = graph_from_edges(5, 1.0, &[(0, 1), (2, 3)]);
        let warmed = warm_start_mis(&g2, &mis_to_fac(&g, &mis)).unwrap();
        assert!(warmed.contains(&4));
        for &v in &mis {
            assert!(warmed.contains(&v));
        }
    }

    fn mis_to_fac(g: &ConflictGraph, mis: &[usize]) -> Vec<usize> {
        mis.iter().map(|&p| g.vertices[p]).collect()
    }

    #[test]
    fn warm_start_single_removal_loses_at_most_one() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let k = rng.random_range(4..12);
            let mut edges = Vec::new();
            for a in 0..k {
                for b in a + 1..k {
                    if rng.random_bool(0.3) {
                        edges.push((a, b));
                    }
                }
            }
            let g = graph_from_edges(k, 1.0, &edges);
            let mis = maximal_independent_set(&g);
            let prev_fac = mis_to_fac(&g, &mis);

            let removed = rng.random_range(0..k);
            let survivors: Vec<usize> = (0..k).filter(|&v| v != removed).collect();
            let sub_edges: Vec<(usize, usize)> = edges
                .iter()
                .copied()
                .filter(|&(a, b)| a != removed && b != removed)
                .collect();
            // rebuild with original facility labels
            let mut adjacency = vec![Vec::new(); survivors.len()];
            let pos = |v: usize| survivors.binary_search(&v).unwrap();
            for (a, b) in sub_edges {
                let (pa, pb) = (pos(a), pos(b));
                adjacency[pa].push(pb);
                adjacency[pb].push(pa);
            }
            for l in &mut adjacency {
                l.sort_unstable();
            }
            let sub = ConflictGraph {
                vertices: survivors,
                t: vec![1.0; k - 1],
                delta: 1.0,
                objective: Objective::KMeans,
                adjacency,
            };
            let warmed = warm_start_mis(&sub, &prev_fac).unwrap();
            let warmed_fac: Vec<usize> = mis_to_fac(&sub, &warmed);
            let lost = prev_fac.iter().filter(|f| !warmed_fac.contains(f)).count();
            assert!(lost <= 1, "lost {lost} members after removing one vertex");
            crate::invariants::check_independent_and_maximal(&sub, &warmed).unwrap();
        }
    }
}
