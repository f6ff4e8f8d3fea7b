//! Synthetic instance generators: reproducible random instances and the
//! adversarial two-gadget construction that pins the single-independent-set
//! scheme at its ratio barrier.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Instance, Objective, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomKind {
    Uniform,
    Clustered,
}

impl RandomKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(RandomKind::Uniform),
            "clustered" => Ok(RandomKind::Clustered),
            other => Err(Error::InvalidParam(format!(
                "kind must be uniform or clustered, got {other:?}"
            ))),
        }
    }
}

/// Blob width of clustered instances; blob centers keep 100x this radius
/// apart so the planted clustering is unambiguous.
pub const BLOB_STD: f64 = 0.25;
pub const BLOB_SEPARATION: f64 = 25.0;

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, deterministic across platforms
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Reproducible synthetic instance. The clustered kind plants ceil(sqrt(m))
/// well-separated Gaussian blobs, puts one facility at each blob center and
/// spreads the remaining points over the blobs.
pub fn gen_random_instance(
    n: usize,
    m: usize,
    d: usize,
    kind: RandomKind,
    objective: Objective,
    seed: u64,
) -> Result<Instance> {
    if n < 1 || m < 1 || d < 1 {
        return Err(Error::InvalidParam("n, m, d must all be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let label = format!(
        "random-{}-n{n}-m{m}-d{d}-seed{seed}",
        match kind {
            RandomKind::Uniform => "uniform",
            RandomKind::Clustered => "clustered",
        }
    );
    match kind {
        RandomKind::Uniform => {
            let mut draw = |count: usize| -> Vec<Point> {
                (0..count)
                    .map(|_| (0..d).map(|_| rng.random_range(0.0..100.0)).collect())
                    .collect()
            };
            let clients = draw(n);
            let facilities = draw(m);
            Instance::new(objective, clients, facilities, Some(label))
        }
        RandomKind::Clustered => {
            let blobs = (m as f64).sqrt().ceil() as usize;
            let mut centers: Vec<Point> = Vec::new();
            let mut guard = 0usize;
            while centers.len() < blobs {
                guard += 1;
                if guard > 100_000 {
                    return Err(Error::InvalidParam(
                        "could not place separated blob centers; lower m or d".into(),
                    ));
                }
                let cand: Point = (0..d).map(|_| rng.random_range(0.0..100.0)).collect();
                let ok = centers.iter().all(|c| {
                    let dist2: f64 = c
                        .iter()
                        .zip(cand.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    dist2.sqrt() >= BLOB_SEPARATION
                });
                if ok {
                    centers.push(cand);
                }
            }
            let from_blob = |rng: &mut ChaCha8Rng, blob: usize| -> Point {
                centers[blob]
                    .iter()
                    .map(|&x| x + BLOB_STD * gaussian(rng))
                    .collect()
            };
            let clients: Vec<Point> = (0..n).map(|idx| from_blob(&mut rng, idx % blobs)).collect();
            let mut facilities: Vec<Point> = centers.clone();
            for idx in blobs..m {
                let p = from_blob(&mut rng, idx % blobs);
                facilities.push(p);
            }
            facilities.truncate(m);
            Instance::new(objective, clients, facilities, Some(label))
        }
    }
}

/// The adversarial instance and the growth parameter it is built for.
#[derive(Debug, Clone)]
pub struct LowerBoundInstance {
    pub instance: Instance,
    pub lambda: f64,
    /// Index of the far collinear facility (the one a greedy pruning keeps).
    pub gadget1_far: usize,
    pub gadget1_near: usize,
    /// Facility indices of the simplex gadget.
    pub simplex: Vec<usize>,
}

/// Two far-apart gadgets over plain distances. The first is a collinear
/// triple: N copies of a client at distance T from a facility, a second
/// facility sqrt(2) T beyond it, listed far-endpoint first so index-order
/// pruning keeps the expensive one. The second is a regular simplex of h
/// facilities around a lone client, scaled so both gadgets share the same
/// growth parameter T.
pub fn gen_lower_bound_instance(
    t: f64,
    n_copies: usize,
    h: usize,
    eps: f64,
) -> Result<LowerBoundInstance> {
    if h < 2 {
        return Err(Error::InvalidParam("h must be >= 2".into()));
    }
    if !(0.0 < eps && eps < 1.0) {
        return Err(Error::InvalidParam("eps must lie in (0, 1)".into()));
    }
    if n_copies < 1 {
        return Err(Error::InvalidParam("N must be >= 1".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParam("T must be > 0".into()));
    }
    let hf = h as f64;
    let sq2 = 2.0_f64.sqrt();
    let ratio = ((hf - 1.0) / hf).sqrt();
    let t_prime = t / (1.0 - (1.0 - eps) * ratio);

    // dimension h: axis 0 carries the collinear gadget, the simplex spans
    // the full space
    let d = h;
    let axis = |x: f64| -> Point {
        let mut p = vec![0.0; d];
        p[0] = x;
        p
    };

    // gadget separation dwarfs every intra-gadget scale
    let intra = (1.0 + sq2) * t + sq2 * t_prime;
    let offset = 1000.0 * intra;

    // simplex vertices: scaled, centered unit basis; pairwise distance
    // sigma * sqrt(2), centroid distance sigma * sqrt((h-1)/h)
    let sigma = t_prime * (1.0 - eps);
    let mut simplex_pts: Vec<Point> = Vec::with_capacity(h);
    for r in 0..h {
        let mut p = vec![-sigma / hf; d];
        p[r] += sigma;
        p[0] += offset;
        simplex_pts.push(p);
    }
    let mut centroid = vec![0.0; d];
    centroid[0] = offset;

    let mut clients: Vec<Point> = (0..n_copies).map(|_| axis(0.0)).collect();
    clients.push(axis(t)); // coincides with the near facility
    clients.push(axis(t + sq2 * t)); // coincides with the far facility
    clients.push(centroid);

    let mut facilities: Vec<Point> = Vec::with_capacity(2 + h);
    facilities.push(axis(t + sq2 * t)); // far endpoint first, by design
    facilities.push(axis(t));
    let simplex: Vec<usize> = (2..2 + h).collect();
    facilities.extend(simplex_pts);

    let instance = Instance::new(
        Objective::KMedian,
        clients,
        facilities,
        Some(format!("lower-bound-T{t}-N{n_copies}-h{h}-eps{eps}")),
    )?;
    Ok(LowerBoundInstance {
        instance,
        lambda: t,
        gadget1_far: 0,
        gadget1_near: 1,
        simplex,
    })
}

/// Memory the dense representation of the adversarial instance needs, in
/// bytes; callers probe this before materializing very large parameters.
pub fn lower_bound_instance_bytes(n_copies: usize, h: usize) -> u128 {
    let points = (n_copies as u128 + 3) + (h as u128 + 2);
    points * h as u128 * 8
}
