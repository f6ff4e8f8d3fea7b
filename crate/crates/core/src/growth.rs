//! The primal-dual growing phase: all client duals rise at a uniform rate,
//! facilities become tight when their slack constraint fills up, and every
//! client ends with a tight witness facility.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Instance;

/// Strictness tolerance for neighborhood membership `alpha_j > c(j,i)`.
/// Ties at equality are excluded.
pub const STRICT_TOL: f64 = 1e-12;

/// Relative tolerance for batching simultaneous events.
const BATCH_TOL: f64 = 1e-12;

pub fn strictly_above(alpha: f64, cost: f64) -> bool {
    alpha - cost > STRICT_TOL * alpha.max(1.0)
}

/// Everything the growing phase produces.
#[derive(Debug, Clone, Serialize)]
pub struct DualGrowthResult {
    pub lambda: f64,
    /// Final dual value per client.
    pub alpha: Vec<f64>,
    /// Tight facility indices, ascending.
    pub tight: Vec<usize>,
    /// Per-facility t value: the largest dual among clients strictly inside
    /// the facility's neighborhood, 0 when that neighborhood is empty.
    /// Meaningful for tight facilities.
    pub t: Vec<f64>,
    /// Witness facility per client.
    pub witness: Vec<usize>,
    /// N(j): facilities with alpha_j > c(j, i).
    pub client_neighbors: Vec<Vec<usize>>,
    /// N(i): clients with alpha_j > c(j, i).
    pub facility_neighbors: Vec<Vec<usize>>,
}

impl DualGrowthResult {
    pub fn is_tight(&self, facility: usize) -> bool {
        self.tight.binary_search(&facility).is_ok()
    }

    /// N(j) restricted to tight facilities, the neighborhood the pruning
    /// phase works with.
    pub fn tight_neighbors(&self, client: usize) -> Vec<usize> {
        self.client_neighbors[client]
            .iter()
            .copied()
            .filter(|&i| self.is_tight(i))
            .collect()
    }
}

/// Exact event-driven simulation of the uniform growth process. Event times
/// are solved in closed form from the piecewise-linear constraint functions,
/// ties are processed in one batch (facilities first, then clients, each in
/// index order).
pub fn grow_duals(instance: &Instance, lambda: f64) -> Result<DualGrowthResult> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParam(format!(
            "lambda = {lambda} must be >= 0"
        )));
    }
    instance.check_shape()?;
    let n = instance.num_clients();
    let m = instance.num_facilities();
    let costs = instance.cost_matrix();

    // Clients sorted by cost per facility, for closed-form tightness times.
    let order: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| costs[a][i].total_cmp(&costs[b][i]));
            idx
        })
        .collect();

    let mut active = vec![true; n];
    let mut n_active = n;
    let mut alpha = vec![0.0_f64; n];
    let mut tight = vec![false; m];
    let mut stopped_contrib = vec![0.0_f64; m];
    let mut reach = vec![f64::INFINITY; n];
    let mut witness = vec![usize::MAX; n];
    let mut t_val = vec![0.0_f64; m];
    let mut tau = 0.0_f64;

    // Solve for the level at which facility i's constraint reaches lambda,
    // assuming the current active set does not change before then.
    let tightness_time = |i: usize, active: &[bool], stopped: f64, tau_now: f64| -> f64 {
        if stopped >= lambda {
            return tau_now;
        }
        let mut count = 0.0_f64;
        let mut sum = 0.0_f64;
        let thresholds: Vec<f64> = order[i]
            .iter()
            .filter(|&&j| active[j])
            .map(|&j| costs[j][i])
            .collect();
        for (idx, &c) in thresholds.iter().enumerate() {
            // segment before absorbing threshold idx: f(tau) = stopped + count*tau - sum
            if count > 0.0 {
                let cand = (lambda - stopped + sum) / count;
                if cand <= c {
                    return cand.max(tau_now);
                }
            }
            count += 1.0;
            sum += c;
            let _ = idx;
        }
        if count > 0.0 {
            ((lambda - stopped + sum) / count).max(tau_now)
        } else {
            f64::INFINITY
        }
    };

    while n_active > 0 {
        // next facility event
        let mut fac_times = vec![f64::INFINITY; m];
        let mut next_event = f64::INFINITY;
        for i in 0..m {
            if !tight[i] {
                let ti = tightness_time(i, &active, stopped_contrib[i], tau);
                fac_times[i] = ti;
                next_event = next_event.min(ti);
            }
        }
        // next client-reach event on already-tight facilities
        for j in 0..n {
            if active[j] && reach[j].is_finite() {
                next_event = next_event.min(reach[j].max(tau));
            }
        }
        assert!(
            next_event.is_finite(),
            "growth stalls with {n_active} active clients"
        );
        let tau_star = next_event;
        let tol = BATCH_TOL * tau_star.max(1.0);

        // facilities first, in index order
        let mut newly: Vec<usize> = Vec::new();
        for i in 0..m {
            if !tight[i] && fac_times[i] <= tau_star + tol {
                tight[i] = true;
                newly.push(i);
            }
        }
        for &i in &newly {
            for j in 0..n {
                if active[j] && costs[j][i] < reach[j] {
                    reach[j] = costs[j][i];
                }
            }
        }

        // clients reaching (or already inside) some tight facility stop now
        let mut stopping: Vec<usize> = Vec::new();
        for j in 0..n {
            if active[j] && reach[j] <= tau_star + tol {
                stopping.push(j);
            }
        }

        for &j in &stopping {
            active[j] = false;
            n_active -= 1;
            alpha[j] = tau_star;
            let w = (0..m)
                .find(|&i| tight[i] && costs[j][i] <= tau_star + tol)
                .expect("stopping client sees a tight facility");
            witness[j] = w;
            for i in 0..m {
                if !tight[i] {
                    let contrib = tau_star - costs[j][i];
                    if contrib > 0.0 {
                        stopped_contrib[i] += contrib;
                    }
                }
            }
        }

        // freeze t for facilities tightened in this batch
        for &i in &newly {
            let mut best = 0.0_f64;
            for j in 0..n {
                if !active[j] && strictly_above(alpha[j], costs[j][i]) {
                    best = best.max(alpha[j]);
                }
            }
            t_val[i] = best;
        }

        debug_assert!(
            !newly.is_empty() || !stopping.is_empty(),
            "event batch made no progress at tau = {tau_star}"
        );
        tau = tau_star;
    }

    let tight_set: Vec<usize> = (0..m).filter(|&i| tight[i]).collect();
    let client_neighbors: Vec<Vec<usize>> = (0..n)
        .map(|j| {
            (0..m)
                .filter(|&i| strictly_above(alpha[j], costs[j][i]))
                .collect()
        })
        .collect();
    let facility_neighbors: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            (0..n)
                .filter(|&j| strictly_above(alpha[j], costs[j][i]))
                .collect()
        })
        .collect();

    Ok(DualGrowthResult {
        lambda,
        alpha,
        tight: tight_set,
        t: t_val,
        witness,
        client_neighbors,
        facility_neighbors,
    })
}

/// One reported breach of the dual constraints.
#[derive(Debug, Clone, Serialize)]
pub enum Violation {
    /// Facility whose slack sum exceeds lambda, with the excess.
    Facility { facility: usize, excess: f64 },
    /// Negative dual variable.
    Client { client: usize, alpha: f64 },
}

/// Checks the dual constraints within tolerance 1e-9 relative to lambda
/// (absolute when lambda = 0). Empty result means feasible.
pub fn check_dual_feasibility(instance: &Instance, alpha: &[f64], lambda: f64) -> Vec<Violation> {
    let tol = if lambda > 0.0 { 1e-9 * lambda } else { 1e-9 };
    let mut out = Vec::new();
    for (j, &a) in alpha.iter().enumerate() {
        if a < -tol {
            out.push(Violation::Client {
                client: j,
                alpha: a,
            });
        }
    }
    for i in 0..instance.num_facilities() {
        let total: f64 = alpha
            .iter()
            .enumerate()
            .map(|(j, &a)| (a - instance.cost(j, i)).max(0.0))
            .sum();
        if total > lambda + tol {
            out.push(Violation::Facility {
                facility: i,
                excess: total - lambda,
            });
        }
    }
    out
}

/// The Lagrangian dual objective: sum of duals minus lambda * k.
pub fn dual_objective(alpha: &[f64], lambda: f64, k: usize) -> f64 {
    alpha.iter().sum::<f64>() - lambda * k as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{brute_force_opt, Objective};

    fn inst(objective: Objective, clients: &[&[f64]], facilities: &[&[f64]]) -> Instance {
        Instance::new(
            objective,
            clients.iter().map(|p| p.to_vec()).collect(),
            facilities.iter().map(|p| p.to_vec()).collect(),
            None,
        )
        .unwrap()
    }

    /// Small discrete-time simulator used as an independent oracle for the
    /// event-driven implementation: grows all duals by dt until each client's
    /// stopping rule fires.
    fn discrete_time_growth(instance: &Instance, lambda: f64, dt: f64) -> (Vec<f64>, Vec<bool>) {
        let n = instance.num_clients();
        let m = instance.num_facilities();
        let costs = instance.cost_matrix();
        let mut alpha = vec![0.0_f64; n];
        let mut active = vec![true; n];
        let mut tight = vec![false; m];
        let mut guard = 0usize;
        while active.iter().any(|&a| a) {
            guard += 1;
            assert!(guard < 100_000_000, "discrete simulator diverged");
            for i in 0..m {
                if !tight[i] {
                    let total: f64 = (0..n).map(|j| (alpha[j] - costs[j][i]).max(0.0)).sum();
                    if total >= lambda - 1e-12 {
                        tight[i] = true;
                    }
                }
            }
            for j in 0..n {
                if active[j] {
                    let reached = (0..m).any(|i| tight[i] && alpha[j] >= costs[j][i] - 1e-12);
                    if reached {
                        active[j] = false;
                    }
                }
            }
            for j in 0..n {
                if active[j] {
                    alpha[j] += dt;
                }
            }
        }
        (alpha, tight)
    }

    #[test]
    fn single_client_single_facility() {
        let i = inst(Objective::KMeans, &[&[0.0]], &[&[1.0]]);
        let g = grow_duals(&i, 0.5).unwrap();
        assert!((g.alpha[0] - 1.5).abs() < 1e-12);
        assert_eq!(g.tight, vec![0]);
        assert!((g.t[0] - 1.5).abs() < 1e-12);
        assert_eq!(g.witness[0], 0);
    }

    #[test]
    fn two_clients_one_facility_kmedian() {
        // distances 1 and 2, lambda = 1: growth stops both at alpha = 2
        let i = inst(Objective::KMedian, &[&[1.0], &[2.0]], &[&[0.0]]);
        let g = grow_duals(&i, 1.0).unwrap();
        assert!((g.alpha[0] - 2.0).abs() < 1e-12);
        assert!((g.alpha[1] - 2.0).abs() < 1e-12);
        assert_eq!(g.tight, vec![0]);
        assert_eq!(g.facility_neighbors[0], vec![0]);
        assert!((g.t[0] - 2.0).abs() < 1e-12);

        // cross-check against the discrete-time oracle
        let (alpha_d, tight_d) = discrete_time_growth(&i, 1.0, 1e-5);
        assert!(tight_d[0]);
        assert!((alpha_d[0] - 2.0).abs() < 1e-3);
        assert!((alpha_d[1] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn matches_discrete_time_oracle_on_random_instances() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for trial in 0..12 {
            let n = rng.random_range(2..7);
            let m = rng.random_range(1..5);
            let d = 2;
            let clients: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(0.0..4.0)).collect())
                .collect();
            let facilities: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..d).map(|_| rng.random_range(0.0..4.0)).collect())
                .collect();
            let objective = if trial % 2 == 0 {
                Objective::KMeans
            } else {
                Objective::KMedian
            };
            let i = Instance::new(objective, clients, facilities, None).unwrap();
            let lambda = rng.random_range(0.1..2.0);
            let g = grow_duals(&i, lambda).unwrap();
            let (alpha_d, tight_d) = discrete_time_growth(&i, lambda, 2e-5);
            for j in 0..n {
                assert!(
                    (g.alpha[j] - alpha_d[j]).abs() < 2e-3,
                    "trial {trial} client {j}: exact {} vs discrete {}",
                    g.alpha[j],
                    alpha_d[j]
                );
            }
            for &i_t in &g.tight {
                assert!(
                    tight_d[i_t],
                    "trial {trial}: facility {i_t} tightness mismatch"
                );
            }
        }
    }

    #[test]
    fn adversarial_two_facility_gadget() {
        // collinear: j (x10 copies) at 0, j1 at 1, j2 at 1 + sqrt(2); facilities
        // at j1 and j2, lambda = 1. All duals end at 1, both facilities tight
        // with t = 1.
        let t = 1.0_f64;
        let sqrt2 = 2.0_f64.sqrt();
        let mut clients: Vec<Vec<f64>> = (0..10).map(|_| vec![0.0]).collect();
        clients.push(vec![t]);
        clients.push(vec![t + sqrt2 * t]);
        let facilities = vec![vec![t + sqrt2 * t], vec![t]];
        let i = Instance::new(Objective::KMedian, clients, facilities, None).unwrap();
        let g = grow_duals(&i, t).unwrap();
        for j in 0..i.num_clients() {
            assert!(
                (g.alpha[j] - t).abs() < 1e-12,
                "alpha[{j}] = {}",
                g.alpha[j]
            );
        }
        assert_eq!(g.tight, vec![0, 1]);
        assert!((g.t[0] - t).abs() < 1e-12);
        assert!((g.t[1] - t).abs() < 1e-12);
        // each far copy of j sits exactly at distance T from facility 1: no
        // strict membership
        assert_eq!(g.facility_neighbors[1], vec![10]);
        assert_eq!(g.facility_neighbors[0], vec![11]);
    }

    #[test]
    fn witness_contract_holds() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..30 {
            let n = rng.random_range(2..10);
            let m = rng.random_range(1..7);
            let clients: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)])
                .collect();
            let facilities: Vec<Vec<f64>> = (0..m)
                .map(|_| vec![rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)])
                .collect();
            let objective = if trial % 2 == 0 {
                Objective::KMeans
            } else {
                Objective::KMedian
            };
            let i = Instance::new(objective, clients, facilities, None).unwrap();
            let lambda = rng.random_range(0.0..3.0);
            let g = grow_duals(&i, lambda).unwrap();
            crate::invariants::check_witness_contract(&i, &g).unwrap();
            assert!(check_dual_feasibility(&i, &g.alpha, lambda).is_empty());
        }
    }

    #[test]
    fn forced_violation_is_reported() {
        let i = inst(Objective::KMeans, &[&[0.0]], &[&[1.0]]);
        let alpha = vec![1.0 + 0.5 + 1.0]; // c + lambda + 1
        let v = check_dual_feasibility(&i, &alpha, 0.5);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::Facility { facility: 0, .. }));
        assert!(check_dual_feasibility(&i, &[0.0], 0.5).is_empty());
    }

    #[test]
    fn weak_duality_against_oracle() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..20 {
            let n = rng.random_range(3..9);
            let m = rng.random_range(2..6);
            let clients: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random_range(0.0..6.0), rng.random_range(0.0..6.0)])
                .collect();
            let facilities: Vec<Vec<f64>> = (0..m)
                .map(|_| vec![rng.random_range(0.0..6.0), rng.random_range(0.0..6.0)])
                .collect();
            let objective = if trial % 2 == 0 {
                Objective::KMeans
            } else {
                Objective::KMedian
            };
            let i = Instance::new(objective, clients, facilities, None).unwrap();
            let lambda = rng.random_range(0.0..4.0);
            let g = grow_duals(&i, lambda).unwrap();
            for k in 1..=m {
                let opt = brute_force_opt(&i, k).unwrap();
                let dual = dual_objective(&g.alpha, lambda, k);
                assert!(
                    dual <= opt.cost + 1e-9 * opt.cost.max(1.0),
                    "trial {trial} k {k}: dual {dual} > opt {}",
                    opt.cost
                );
            }
        }
    }

    #[test]
    fn monotone_in_lambda() {
        let i = inst(
            Objective::KMeans,
            &[&[0.0, 0.0], &[2.0, 1.0], &[4.0, 0.0]],
            &[&[1.0, 0.0], &[3.0, 0.0]],
        );
        let lambdas = [0.0, 0.2, 0.5, 1.0, 2.0, 5.0];
        let mut prev: Option<Vec<f64>> = None;
        for &l in &lambdas {
            let g = grow_duals(&i, l).unwrap();
            if let Some(p) = prev {
                for j in 0..i.num_clients() {
                    assert!(
                        g.alpha[j] >= p[j] - 1e-9,
                        "alpha[{j}] decreased at lambda {l}"
                    );
                }
            }
            prev = Some(g.alpha);
        }
    }

    #[test]
    fn huge_lambda_single_tight_facility() {
        let i = inst(
            Objective::KMeans,
            &[&[0.0, 0.0], &[2.0, 1.0], &[4.0, 0.0], &[1.0, 3.0]],
            &[&[1.0, 0.0], &[3.0, 0.0], &[0.0, 2.0]],
        );
        let max_cost = (0..4)
            .flat_map(|j| (0..3).map(move |i2| (j, i2)))
            .map(|(j, i2)| i.cost(j, i2))
            .fold(0.0_f64, f64::max);
        let g = grow_duals(&i, 4.0 * max_cost).unwrap();
        assert_eq!(g.tight.len(), 1);
    }
}
