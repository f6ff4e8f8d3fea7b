//! Problem representation, cost functions, and the exact brute-force oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which assignment cost the instance uses: plain Euclidean distance
/// (k-median) or squared Euclidean distance (k-means).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "kmeans")]
    KMeans,
    #[serde(rename = "kmedian")]
    KMedian,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::KMeans => "kmeans",
            Objective::KMedian => "kmedian",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(Objective::KMeans),
            "kmedian" => Ok(Objective::KMedian),
            other => Err(Error::InvalidParam(format!(
                "objective must be kmeans or kmedian, got {other:?}"
            ))),
        }
    }
}

pub type Point = Vec<f64>;

/// A discrete clustering instance: clients to serve, candidate facility
/// locations, and the objective under which assignment costs are measured.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub objective: Objective,
    pub clients: Vec<Point>,
    pub facilities: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Instance {
    pub fn new(
        objective: Objective,
        clients: Vec<Point>,
        facilities: Vec<Point>,
        label: Option<String>,
    ) -> Result<Self> {
        let inst = Instance {
            objective,
            clients,
            facilities,
            label,
        };
        inst.check_shape()?;
        Ok(inst)
    }

    /// Basic shape invariants: nonempty point sets, one shared dimension >= 1.
    pub fn check_shape(&self) -> Result<()> {
        if self.clients.is_empty() {
            return Err(Error::InvalidInstance("no clients".into()));
        }
        if self.facilities.is_empty() {
            return Err(Error::InvalidInstance("no facilities".into()));
        }
        let d = self.clients[0].len();
        if d == 0 {
            return Err(Error::InvalidInstance("zero-dimensional points".into()));
        }
        for (idx, p) in self.clients.iter().enumerate() {
            if p.len() != d {
                return Err(Error::InvalidInstance(format!(
                    "client {idx} has dimension {} != {d}",
                    p.len()
                )));
            }
        }
        for (idx, p) in self.facilities.iter().enumerate() {
            if p.len() != d {
                return Err(Error::InvalidInstance(format!(
                    "facility {idx} has dimension {} != {d}",
                    p.len()
                )));
            }
        }
        Ok(())
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn num_facilities(&self) -> usize {
        self.facilities.len()
    }

    pub fn dimension(&self) -> usize {
        self.clients[0].len()
    }

    /// Cost of serving client `j` from facility `i`.
    pub fn cost(&self, j: usize, i: usize) -> f64 {
        pair_cost(&self.clients[j], &self.facilities[i], self.objective)
            .expect("instance points share one dimension")
    }

    /// Cost between two facilities (used by conflict graphs).
    pub fn facility_cost(&self, i: usize, i2: usize) -> f64 {
        pair_cost(&self.facilities[i], &self.facilities[i2], self.objective)
            .expect("instance points share one dimension")
    }

    /// Dense client x facility cost matrix, row per client.
    pub fn cost_matrix(&self) -> Vec<Vec<f64>> {
        self.clients
            .iter()
            .map(|c| {
                self.facilities
                    .iter()
                    .map(|f| pair_cost(c, f, self.objective).unwrap())
                    .collect()
            })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Instance = serde_json::from_str(text)?;
        inst.check_shape()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance serializes")
    }
}

/// A chosen set of centers together with its assignment cost, always
/// recomputed from scratch when constructed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CenterSet {
    pub indices: Vec<usize>,
    pub cost: f64,
}

impl CenterSet {
    pub fn from_indices(instance: &Instance, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        let cost = assignment_cost(instance, &indices)?;
        Ok(CenterSet { indices, cost })
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Cost between two points under the given objective: Euclidean distance for
/// k-median, squared Euclidean distance for k-means.
pub fn pair_cost(a: &[f64], b: &[f64], objective: Objective) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    let sq = squared_distance(a, b);
    Ok(match objective {
        Objective::KMeans => sq,
        Objective::KMedian => sq.sqrt(),
    })
}

/// Sum over clients of the cheapest connection into `centers`.
pub fn assignment_cost(instance: &Instance, centers: &[usize]) -> Result<f64> {
    if centers.is_empty() {
        return Err(Error::EmptyCenters);
    }
    for &i in centers {
        if i >= instance.num_facilities() {
            return Err(Error::InvalidParam(format!(
                "center index {i} out of range (m = {})",
                instance.num_facilities()
            )));
        }
    }
    let mut total = 0.0;
    for j in 0..instance.num_clients() {
        let best = centers
            .iter()
            .map(|&i| instance.cost(j, i))
            .fold(f64::INFINITY, f64::min);
        total += best;
    }
    Ok(total)
}

pub const DEFAULT_ENUMERATION_BUDGET: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Exact optimum over all k-subsets of facilities. Ties broken toward the
/// lexicographically smallest index vector, so the result is deterministic.
pub fn brute_force_opt(instance: &Instance, k: usize) -> Result<CenterSet> {
    brute_force_opt_with_budget(instance, k, DEFAULT_ENUMERATION_BUDGET)
}

pub fn brute_force_opt_with_budget(
    instance: &Instance,
    k: usize,
    budget: u128,
) -> Result<CenterSet> {
    let m = instance.num_facilities();
    if k == 0 || k > m {
        return Err(Error::InvalidParam(format!("k = {k} must lie in [1, {m}]")));
    }
    let subsets = binomial(m, k);
    if subsets > budget {
        return Err(Error::BudgetExceeded {
            m,
            k,
            subsets,
            budget,
        });
    }

    let costs = instance.cost_matrix();
    let n = instance.num_clients();

    // Iterate k-combinations in lexicographic order; strict improvement
    // keeps the first (lexicographically smallest) optimum.
    let mut comb: Vec<usize> = (0..k).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut total = 0.0;
        for j in 0..n {
            let row = &costs[j];
            let mut cheapest = f64::INFINITY;
            for &i in &comb {
                if row[i] < cheapest {
                    cheapest = row[i];
                }
            }
            total += cheapest;
        }
        match &best {
            Some((c, _)) if total >= *c => {}
            _ => best = Some((total, comb.clone())),
        }

        // advance to the next combination
        let mut idx = k;
        loop {
            if idx == 0 {
                let (cost, indices) = best.unwrap();
                return Ok(CenterSet { indices, cost });
            }
            idx -= 1;
            if comb[idx] != idx + m - k {
                comb[idx] += 1;
                for t in idx + 1..k {
                    comb[t] = comb[t - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Outcome of instance normalization.
#[derive(Debug, Clone, Serialize)]
pub struct Validated {
    pub instance: Instance,
    /// Coordinate scale factor that was applied (1.0 when degenerate).
    pub scale: f64,
    /// Set when the max/min client-facility distance ratio exceeds n^6.
    pub range_exceeded: bool,
    /// Set when some client coincides with a facility, making the
    /// rescale-to-minimum-distance-one impossible.
    pub degenerate: bool,
}

/// Rescales coordinates so the minimum client-facility distance is exactly 1.
/// Instances whose distance spread exceeds n^6 are flagged, not rejected;
/// coincident client-facility pairs leave the instance unscaled with the
/// degenerate flag set.
pub fn validate_instance(instance: &Instance) -> Result<Validated> {
    instance.check_shape()?;
    let mut min_d = f64::INFINITY;
    let mut max_d: f64 = 0.0;
    for c in &instance.clients {
        for f in &instance.facilities {
            let d = squared_distance(c, f).sqrt();
            min_d = min_d.min(d);
            max_d = max_d.max(d);
        }
    }
    if min_d == 0.0 {
        return Ok(Validated {
            instance: instance.clone(),
            scale: 1.0,
            range_exceeded: false,
            degenerate: true,
        });
    }
    let scale = 1.0 / min_d;
    let rescale = |pts: &[Point]| -> Vec<Point> {
        pts.iter()
            .map(|p| p.iter().map(|x| x * scale).collect())
            .collect()
    };
    let n = instance.num_clients() as f64;
    let range_exceeded = max_d / min_d > n.powi(6);
    Ok(Validated {
        instance: Instance {
            objective: instance.objective,
            clients: rescale(&instance.clients),
            facilities: rescale(&instance.facilities),
            label: instance.label.clone(),
        },
        scale,
        range_exceeded,
        degenerate: false,
    })
}
