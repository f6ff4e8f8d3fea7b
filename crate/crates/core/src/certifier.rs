//! Numerical reproduction of the approximation-ratio arithmetic: closed-form
//! case bounds for the rounding analysis, their per-group envelopes, the
//! final max-min ratio expression, and a grid-refinement search that
//! certifies the end-to-end constants by LP infeasibility.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Objective;
use crate::simplex::{lp_feasible, LinearConstraint, LinearSystem, Rel};

pub const KMEANS_P1: f64 = 0.402;
pub const KMEDIAN_P1: f64 = 0.068;
/// Probability ceiling under which the per-client dual surrogate stays
/// nonnegative: 1/2 for squared distances, 0.337 for plain distances.
pub const KMEANS_P0: f64 = 0.5;
pub const KMEDIAN_P0: f64 = 0.337;

pub fn default_deltas(objective: Objective) -> (f64, f64, f64) {
    match objective {
        Objective::KMeans => ((4.0 + 8.0 * 2.0_f64.sqrt()) / 7.0, 2.0, 0.265),
        Objective::KMedian => (2.0_f64.sqrt(), 1.395, 2.0 - 2.0_f64.sqrt()),
    }
}

pub fn default_p1(objective: Objective) -> f64 {
    match objective {
        Objective::KMeans => KMEANS_P1,
        Objective::KMedian => KMEDIAN_P1,
    }
}

pub fn default_p0(objective: Objective) -> f64 {
    match objective {
        Objective::KMeans => KMEANS_P0,
        Objective::KMedian => KMEDIAN_P0,
    }
}

/// Probability range on which the envelopes are proven.
pub fn proven_p_range(objective: Objective) -> (f64, f64) {
    match objective {
        Objective::KMeans => (0.096, 0.402),
        Objective::KMedian => (0.01, 0.068),
    }
}

pub fn num_groups(objective: Objective) -> usize {
    match objective {
        Objective::KMeans => 5,
        Objective::KMedian => 3,
    }
}

/// Per-group ceilings m_i in the accounting constraints R_i <= m_i Q_i.
pub fn group_ratio_caps(objective: Objective, deltas: (f64, f64, f64)) -> Vec<f64> {
    match objective {
        Objective::KMeans => vec![1.0, 1.0, 1.0, 1.75, 2.0],
        Objective::KMedian => {
            let d2 = deltas.1;
            vec![1.0, 2.0, 2.0 * (2.0 - 2.0_f64.sqrt()) / (d2 - 1.0)]
        }
    }
}

/// Auxiliary integer parameters of the parameterized cases.
#[derive(Debug, Clone, Copy, Default)]
pub struct CaseAux {
    pub a: Option<u32>,
    pub b: Option<u32>,
    pub c: Option<u32>,
    pub c1: Option<u32>,
    pub c2: Option<u32>,
    pub h: Option<u32>,
}

impl CaseAux {
    pub fn with_c(c: u32) -> Self {
        CaseAux {
            c: Some(c),
            ..Default::default()
        }
    }
    pub fn with_b(b: u32) -> Self {
        CaseAux {
            b: Some(b),
            ..Default::default()
        }
    }
    pub fn with_ah(a: u32, h: u32) -> Self {
        CaseAux {
            a: Some(a),
            h: Some(h),
            ..Default::default()
        }
    }
}

/// Highest exactly-enumerated value of the unbounded aux parameters; beyond
/// it the envelopes switch to the crude tail bounds.
pub const AUX_EXACT_MAX: u32 = 5;

fn need(aux: Option<u32>, case: &str, name: &str) -> Result<u32> {
    aux.ok_or_else(|| Error::AuxOutOfRange {
        case: case.into(),
        detail: format!("{name} required"),
    })
}

fn aux_range(case: &str, name: &str, v: u32, lo: u32, hi: u32) -> Result<()> {
    if v < lo || v > hi {
        return Err(Error::AuxOutOfRange {
            case: case.into(),
            detail: format!("{name} = {v} outside [{lo}, {hi}]"),
        });
    }
    Ok(())
}

/// The averaged two-target distance bound for plain distances, as a function
/// of the free split parameter.
pub fn kmedian_pair_bound(p: f64, delta2: f64, t_split: f64) -> f64 {
    let x = p * p + p * (1.0 - p) * t_split;
    let y = (1.0 - p) * (1.0 - p) + p * (1.0 - p) / t_split;
    let s = x + y;
    (3.0 * s + 2.0 * (2.0 * s * s - delta2 * delta2 * x * y).sqrt()).sqrt()
}

/// Fixed split point used everywhere the certified constants are quoted.
pub const PAIR_BOUND_SPLIT: f64 = 1.1;

/// Golden-section refinement of the split parameter, reported for
/// information only; certification always uses the fixed split.
pub fn kmedian_pair_bound_refined(p: f64, delta2: f64) -> f64 {
    let (mut lo, mut hi) = (0.2_f64, 5.0_f64);
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if kmedian_pair_bound(p, delta2, m1) < kmedian_pair_bound(p, delta2, m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    kmedian_pair_bound(p, delta2, 0.5 * (lo + hi))
}

fn pow_q(p: f64, e: u32) -> f64 {
    (1.0 - 2.0 * p).powi(e as i32)
}

/// Closed-form value of one tagged case of the rounding analysis.
pub fn eval_case_bound(
    objective: Objective,
    case_id: &str,
    p: f64,
    deltas: (f64, f64, f64),
    aux: CaseAux,
) -> Result<f64> {
    if !(0.0..0.5).contains(&p) {
        return Err(Error::InvalidParam(format!("p = {p} must lie in [0, 1/2)")));
    }
    let (d1, d2, d3) = deltas;
    let (s1, s2, s3) = (d1.sqrt(), d2.sqrt(), d3.sqrt());
    let sq2 = 2.0_f64.sqrt();
    match objective {
        Objective::KMeans => {
            let a1 = (1.0 + s1) * (1.0 + s1);
            match case_id {
                "1.a" | "4.a.i" | "4.b.i" => Ok((1.0 + s2) * (1.0 + s2)),
                "1.b" | "1.e" | "4.a.ii" | "4.b.ii" => {
                    Ok(1.0 + p * d2 + (1.0 - p) * d1 + 2.0 * (p * p * d2 + (1.0 - p) * d1).sqrt())
                }
                "1.c" => {
                    let left = (0.75_f64.sqrt() + s1) * (0.75_f64.sqrt() + s1);
                    let right = ((1.0 - p) * a1 + 0.75 * p) / (1.0 - 0.25 * p);
                    Ok(left.max(right))
                }
                "1.d" => Ok(p + (1.0 - p) * a1),
                "1.g.i" => {
                    let left = (s1 + s3) * (s1 + s3);
                    let near = (1.0 - s3) * (1.0 - s3);
                    let right = ((1.0 - p) * a1 + p * near) / (1.0 - p + p * near);
                    Ok(left.max(right))
                }
                "1.g.ii" => Ok(p * (1.0 + s3) * (1.0 + s3) + (1.0 - p) * a1),
                "2.a" => {
                    let c2 = need(aux.c2, case_id, "c2")?;
                    aux_range(case_id, "c2", c2, 1, AUX_EXACT_MAX)?;
                    let w = (1.0 - p) * (0.5 + 0.5 * pow_q(p, c2));
                    Ok((w * a1 + (1.0 - w)) / (1.0 - p))
                }
                "2.b" => {
                    let c = need(aux.c, case_id, "c")?;
                    aux_range(case_id, "c", c, 2, AUX_EXACT_MAX)?;
                    let hit = 0.5 * (1.0 - pow_q(p, c));
                    let cf = c as f64;
                    Ok((hit * (cf - 1.0) / cf + (1.0 - p - hit) * a1) / (1.0 - 2.0 * p))
                }
                "2.c" => Ok((1.0 - p * (2.0 * sq2 - 2.0)
                    + (1.0 - 2.0 * p) * (1.0 - p) * (a1 - 1.0))
                    / (1.0 - p * (2.0 * sq2 - 1.0))),
                "2.d" => {
                    let dd = d1 + (s1 + s3) * (s1 + s3);
                    let ee = a1 * d3;
                    Ok(((1.0 - 2.0 * p) * a1 * dd + p * ee) / ((1.0 - 2.0 * p) * dd + p * ee))
                }
                "3.a" => {
                    let q = (1.0 - p) * (1.0 - p);
                    Ok((q * a1 + (1.0 - q)) / (1.0 - p))
                }
                "3.b" => {
                    let b = need(aux.b, case_id, "b")?;
                    aux_range(case_id, "b", b, 2, AUX_EXACT_MAX)?;
                    let q = (1.0 - p).powi(b as i32 - 1) * (1.0 - 2.0 * p);
                    let den = 1.0 - (1.0 + (2.0 - d3) / (b as f64 + 1.0)) * p;
                    Ok((q * a1 + (1.0 - q)) / den)
                }
                "3.c" => {
                    let b = need(aux.b, case_id, "b")?;
                    let c1 = need(aux.c1, case_id, "c1")?;
                    let c2 = need(aux.c2, case_id, "c2")?;
                    aux_range(case_id, "b", b, 2, AUX_EXACT_MAX)?;
                    aux_range(case_id, "c1", c1, 1, AUX_EXACT_MAX)?;
                    aux_range(case_id, "c2", c2, 0, AUX_EXACT_MAX)?;
                    if c1 == 1 && c2 == 0 {
                        return Err(Error::AuxOutOfRange {
                            case: case_id.into(),
                            detail: "c1 = 1, c2 = 0 belongs to the single-partner case".into(),
                        });
                    }
                    let bf = b as f64;
                    let miss = (1.0 - p).powi(b as i32 - 1)
                        * (0.5 * (1.0 - 2.0 * p) + 0.5 * pow_q(p, c1))
                        * (0.5 + 0.5 * pow_q(p, c2));
                    Ok(
                        ((bf - 1.0) / bf + (1.0 - p).powi(b as i32) / bf + miss * (a1 - 1.0))
                            / (1.0 - 2.0 * p),
                    )
                }
                "4.c" => {
                    let c = need(aux.c, case_id, "c")?;
                    aux_range(case_id, "c", c, 2, AUX_EXACT_MAX)?;
                    let half_q = 0.5 * (1.0 - 2.0 * p) + 0.5 * pow_q(p, c);
                    let sub = 0.5 + 0.5 * pow_q(p, c);
                    let frac = (half_q * a1 - sub + p * (1.0 + sq2) * (1.0 + sq2) + 1.0
                        - p / c as f64)
                        / (1.0 - p);
                    Ok((2.5 + sq2).max(frac))
                }
                "5.a" => {
                    let a = need(aux.a, case_id, "a")?;
                    let h = need(aux.h, case_id, "h")?;
                    if a < 1 {
                        return Err(Error::AuxOutOfRange {
                            case: case_id.into(),
                            detail: "a must be >= 1".into(),
                        });
                    }
                    if a == 1 && h == 0 {
                        return Ok(1.0); // lone dominated center: the fraction is 1
                    }
                    let (af, hf) = (a as f64, h as f64);
                    let pb = 2.0 * p;
                    let t1 = af + pb * hf;
                    let t3 = d1 * af * (af - 1.0) / 2.0
                        + d2 * pb * af * hf
                        + d2 * pb * pb * hf * (hf - 1.0) / 2.0;
                    let den = t1 * (t1 - t1 * t1 + t3);
                    if den <= 0.0 {
                        return Err(Error::AuxOutOfRange {
                            case: case_id.into(),
                            detail: format!("degenerate denominator at a={a}, h={h}"),
                        });
                    }
                    Ok(t3 / den)
                }
                other => Err(Error::UnknownCase(other.into(), "kmeans")),
            }
        }
        Objective::KMedian => {
            let pair = kmedian_pair_bound(p, d2, PAIR_BOUND_SPLIT);
            match case_id {
                "1.a'" => Ok(1.0 + d2),
                "1.b'" | "1.e'" => Ok(pair),
                "1.c'" | "1.d'" => Ok(1.0 + (1.0 - p) * d1),
                "1.f'" => Ok((1.0 - 2.0 * p + d1) / (1.0 - 2.0 * p + p * d1)),
                "1.g.i'" => {
                    let right = (1.0 + d1 - p * (d1 + d3)) / (1.0 - p * d3);
                    Ok((d1 + d3).max(right))
                }
                "1.g.ii'" => Ok(p * (1.0 + d3) + (1.0 - p) * (1.0 + d1)),
                "2.a'" | "2.b'" => Ok((1.0 + d2).max(pair)),
                "3.a'" => {
                    let w = 2.0 * p - 2.0 * p * p;
                    Ok(((1.0 + sq2) - (3.0 - sq2) * w) / (1.0 - (2.0 - sq2) * w))
                }
                "3.b.i'" => {
                    Ok(((1.0 + sq2) * (1.0 - 2.0 * p) + d3 * p) / ((1.0 - 2.0 * p) + d3 * p))
                }
                "3.b.ii'" => {
                    let c = need(aux.c, case_id, "c")?;
                    aux_range(case_id, "c", c, 2, AUX_EXACT_MAX)?;
                    let cf = c as f64;
                    let num = (1.0 + sq2) * (0.5 * (1.0 - 2.0 * p) + 0.5 * pow_q(p, c))
                        + 0.5 * (1.0 - pow_q(p, c)) * ((cf - 1.0) / cf).sqrt();
                    let den = 1.0 - p * (1.0 + cf - (cf * (cf - 1.0)).sqrt());
                    Ok(num / den)
                }
                "4.a'" => Ok(2.0),
                "4.b'" => Ok(1.0 / (1.0 - 2.0 * p)),
                "4.c'" => {
                    let den = (d2 - 1.0) - 2.0 * (2.0 - sq2) * p;
                    if den <= 0.0 {
                        return Err(Error::POutOfRange {
                            p,
                            lo: 0.0,
                            hi: (d2 - 1.0) / (2.0 * (2.0 - sq2)),
                        });
                    }
                    Ok((d2 - 1.0) / den)
                }
                "4.d'" => {
                    let den = 0.5 - (2.0 - d2) * 2.0 * p;
                    if den <= 0.0 {
                        return Err(Error::POutOfRange {
                            p,
                            lo: 0.0,
                            hi: 0.25 / (2.0 - d2),
                        });
                    }
                    Ok(1.0 / den)
                }
                "4.e'" => {
                    let den = 0.5 - (2.0 - sq2) * 2.0 * p;
                    if den <= 0.0 {
                        return Err(Error::POutOfRange {
                            p,
                            lo: 0.0,
                            hi: 0.25 / (2.0 - sq2),
                        });
                    }
                    Ok(1.0 / den)
                }
                other => Err(Error::UnknownCase(other.into(), "kmedian")),
            }
        }
    }
}

fn check_p_in_range(objective: Objective, p: f64) -> Result<()> {
    let (lo, hi) = proven_p_range(objective);
    let slack = 1e-12;
    if p < lo - slack || p > hi + slack {
        return Err(Error::POutOfRange { p, lo, hi });
    }
    Ok(())
}

/// The per-group envelope of the case values.
pub fn group_rho(
    objective: Objective,
    group: usize,
    p: f64,
    deltas: (f64, f64, f64),
) -> Result<f64> {
    check_p_in_range(objective, p)?;
    let (d1, d2, d3) = deltas;
    let (s1, s3) = (d1.sqrt(), d3.sqrt());
    let sq2 = 2.0_f64.sqrt();
    match (objective, group) {
        (Objective::KMeans, 1) => Ok(3.0 + 2.0 * sq2),
        (Objective::KMeans, 2) => {
            Ok(1.0 + 2.0 * p + (1.0 - p) * d1 + 2.0 * (2.0 * p * p + (1.0 - p) * d1).sqrt())
        }
        (Objective::KMeans, 3) => {
            let a1 = (1.0 + s1) * (1.0 + s1);
            let near = (1.0 - s3) * (1.0 - s3);
            Ok(((1.0 - p) * a1 + p * near) / (1.0 - p + p * near))
        }
        (Objective::KMeans, 4) => eval_case_bound(objective, "2.d", p, deltas, CaseAux::default()),
        (Objective::KMeans, 5) => Ok(5.68),
        (Objective::KMedian, 1) => Ok((1.0 + d2).max(kmedian_pair_bound(p, d2, PAIR_BOUND_SPLIT))),
        (Objective::KMedian, 2) => {
            let w = 2.0 * p - 2.0 * p * p;
            Ok(((1.0 + sq2) - (3.0 - sq2) * w) / (1.0 - (2.0 - sq2) * w))
        }
        (Objective::KMedian, 3) => {
            let den = 0.5 - 2.0 * (2.0 - d2) * p;
            if den <= 0.0 {
                return Err(Error::POutOfRange {
                    p,
                    lo: 0.0,
                    hi: 0.25 / (2.0 - d2),
                });
            }
            Ok(1.0 / den)
        }
        _ => Err(Error::InvalidParam(format!(
            "group {group} undefined for {}",
            objective.as_str()
        ))),
    }
}

/// One evaluated case: the tag (with any aux profile folded into the name)
/// and its value.
#[derive(Debug, Clone, Serialize)]
pub struct CaseBound {
    pub objective: Objective,
    pub case_id: String,
    pub value: f64,
}

/// All case values at one probability, with the crude tail bounds standing in
/// for the truncated aux ranges so the maximum is finite and still an upper
/// envelope.
pub fn case_values(
    objective: Objective,
    p: f64,
    deltas: (f64, f64, f64),
) -> Result<Vec<CaseBound>> {
    let (d1, d3) = (deltas.0, deltas.2);
    let (s1, _) = (d1.sqrt(), d1);
    let a1 = (1.0 + s1) * (1.0 + s1);
    let sq2 = 2.0_f64.sqrt();
    let mut out: Vec<CaseBound> = Vec::new();
    let mut push = |case_id: String, value: f64| {
        out.push(CaseBound {
            objective,
            case_id,
            value,
        })
    };
    match objective {
        Objective::KMeans => {
            for id in [
                "1.a", "1.b", "1.c", "1.d", "1.e", "1.g.i", "1.g.ii", "2.c", "2.d", "3.a", "4.a.i",
                "4.a.ii", "4.b.i", "4.b.ii",
            ] {
                push(
                    id.into(),
                    eval_case_bound(objective, id, p, deltas, CaseAux::default())?,
                );
            }
            for c2 in 1..=AUX_EXACT_MAX {
                let aux = CaseAux {
                    c2: Some(c2),
                    ..Default::default()
                };
                push(
                    format!("2.a(c2={c2})"),
                    eval_case_bound(objective, "2.a", p, deltas, aux)?,
                );
            }
            // tail: the success term keeps only the guaranteed half
            push(
                "2.a(c2>=6)".into(),
                ((1.0 - p) * (0.5 + 0.5 * pow_q(p, 6)) * a1 + (1.0 - (1.0 - p) * 0.5)) / (1.0 - p),
            );
            for c in 2..=AUX_EXACT_MAX {
                push(
                    format!("2.b(c={c})"),
                    eval_case_bound(objective, "2.b", p, deltas, CaseAux::with_c(c))?,
                );
            }
            push(
                "2.b(c>=6)".into(),
                (0.5 + (1.0 - p - 0.5 * (1.0 - pow_q(p, 6))) * a1) / (1.0 - 2.0 * p),
            );
            for b in 2..=AUX_EXACT_MAX {
                push(
                    format!("3.b(b={b})"),
                    eval_case_bound(objective, "3.b", p, deltas, CaseAux::with_b(b))?,
                );
            }
            push(
                "3.b(b>=6)".into(),
                ((1.0 - p).powi(5) * (1.0 - 2.0 * p) * a1 + 1.0)
                    / (1.0 - (1.0 + (2.0 - d3) / 7.0) * p),
            );
            // the fraction decreases in both partner counts, so two corner
            // profiles cover the whole family
            for (c1, c2) in [(1u32, 1u32), (2, 0)] {
                for b in 2..=AUX_EXACT_MAX {
                    let aux = CaseAux {
                        b: Some(b),
                        c1: Some(c1),
                        c2: Some(c2),
                        ..Default::default()
                    };
                    push(
                        format!("3.c(b={b},c1={c1},c2={c2})"),
                        eval_case_bound(objective, "3.c", p, deltas, aux)?,
                    );
                }
            }
            push(
                "3.c(b>=6)".into(),
                (1.0 + (1.0 - p).powi(5) * (1.0 - 2.0 * p) * (a1 - 1.0)) / (1.0 - 2.0 * p),
            );
            push(
                "4.c(c=2)".into(),
                eval_case_bound(objective, "4.c", p, deltas, CaseAux::with_c(2))?,
            );
            // c >= 3 tail: drop the -p/c credit and evaluate at c = 3
            let half_q = 0.5 * (1.0 - 2.0 * p) + 0.5 * pow_q(p, 3);
            let sub = 0.5 + 0.5 * pow_q(p, 3);
            push(
                "4.c(c>=3)".into(),
                (2.5 + sq2)
                    .max((half_q * a1 - sub + p * (1.0 + sq2) * (1.0 + sq2) + 1.0) / (1.0 - p)),
            );
            for a in 1..=AUX_EXACT_MAX {
                for h in 0..=AUX_EXACT_MAX {
                    push(
                        format!("5.a(a={a},h={h})"),
                        eval_case_bound(objective, "5.a", p, deltas, CaseAux::with_ah(a, h))?,
                    );
                }
            }
            // closed-form tails over unbounded center counts
            push(
                "5.a(a=1,h>=1)".into(),
                1.0 / (1.0 + 2.0 * p) + 1.0 / (1.0 - 2.0 * p),
            );
            push(
                "5.a(a=2,h>=1)".into(),
                1.0 / (2.0 + 2.0 * p)
                    + ((1.0 + 2.0 * p) / (d1 - 2.0 + 2.0 * p * (1.0 - 2.0 * p)))
                        .max(1.0 / (1.0 - 2.0 * p)),
            );
            push(
                "5.a(a>=3,h>=1)".into(),
                1.0 / 3.0 + (1.0 / (3.0 * (d1 / 2.0 - 1.0))).max(1.0 / (1.0 - 2.0 * p)),
            );
            push("5.a(a>=2,h=0)".into(), 0.5 * (1.0 + 1.0 / (d1 / 2.0 - 1.0)));
        }
        Objective::KMedian => {
            for id in [
                "1.a'", "1.b'", "1.c'", "1.d'", "1.e'", "1.f'", "1.g.i'", "1.g.ii'", "2.a'",
                "2.b'", "3.a'", "3.b.i'", "4.a'", "4.b'", "4.c'", "4.d'", "4.e'",
            ] {
                push(
                    id.into(),
                    eval_case_bound(objective, id, p, deltas, CaseAux::default())?,
                );
            }
            for c in 2..=AUX_EXACT_MAX {
                push(
                    format!("3.b.ii'(c={c})"),
                    eval_case_bound(objective, "3.b.ii'", p, deltas, CaseAux::with_c(c))?,
                );
            }
            let s30 = 30.0_f64.sqrt();
            push(
                "3.b.ii'(c>=6)".into(),
                ((1.0 + sq2) * (0.5 - p) + 0.5 + 0.5 * sq2 * pow_q(p, 6)) / (1.0 - p * (7.0 - s30)),
            );
        }
    }
    Ok(out)
}

/// The worst case value over the whole casework at one probability.
pub fn rho(objective: Objective, p: f64, deltas: (f64, f64, f64)) -> Result<f64> {
    check_p_in_range(objective, p)?;
    let values = case_values(objective, p, deltas)?;
    Ok(values
        .into_iter()
        .map(|c| c.value)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Second branch of the final max-min expression: interpolation between the
/// straddling solutions costs an extra 1/(4r(p0 r / p1 - 1)) factor.
pub fn interpolation_bound(rho_p1: f64, p1: f64, p0: f64, r: f64) -> f64 {
    rho_p1 * (1.0 + 1.0 / (4.0 * r * (p0 * r / p1 - 1.0)))
}

/// Coarse end-to-end ratio bound: the worst over r of the better of the
/// probability-rescaled envelope and the interpolation bound, evaluated on a
/// dense r grid with local refinement.
pub fn final_ratio_bound(
    objective: Objective,
    p1: f64,
    p0: f64,
    r_range: (f64, f64),
) -> Result<f64> {
    let deltas = default_deltas(objective);
    let rho_p1 = rho(objective, p1, deltas)?;
    let (p_lo, _) = proven_p_range(objective);
    let value_at = |r: f64| -> f64 {
        let second = interpolation_bound(rho_p1, p1, p0, r);
        let p = p1 / r;
        if p >= p_lo {
            rho(objective, p, deltas).map_or(second, |first| first.min(second))
        } else {
            second
        }
    };
    let (lo, hi) = (r_range.0.max(1.0), r_range.1);
    let mut best = f64::NEG_INFINITY;
    let mut best_r = lo;
    let steps = ((hi - lo) / 0.001).ceil() as usize;
    for i in 0..=steps {
        let r = lo + (hi - lo) * i as f64 / steps as f64;
        let v = value_at(r);
        if v > best {
            best = v;
            best_r = r;
        }
    }
    // local refinement around the coarse argmax
    let fine_lo = (best_r - 0.001).max(lo);
    let fine_hi = (best_r + 0.001).min(hi);
    for i in 0..=200 {
        let r = fine_lo + (fine_hi - fine_lo) * i as f64 / 200.0;
        best = best.max(value_at(r));
    }
    Ok(best)
}

/// Grid search configuration. Cells outside are handled by the closed-form
/// range checks.
#[derive(Debug, Clone, Serialize)]
pub struct GridConfig {
    pub theta_range: (f64, f64),
    pub r_range: (f64, f64),
    pub coarse_step: f64,
    pub refine_steps: Vec<f64>,
    /// Sampling step for the left tail r in [1, r_range.0].
    pub low_r_step: f64,
}

impl GridConfig {
    pub fn default_for(objective: Objective) -> Self {
        match objective {
            Objective::KMeans => GridConfig {
                theta_range: (0.0, 1.0),
                r_range: (2.37, 4.18),
                coarse_step: 0.01,
                refine_steps: vec![0.001, 0.0001],
                low_r_step: 0.001,
            },
            Objective::KMedian => GridConfig {
                theta_range: (0.0, 1.0),
                r_range: (2.4, 3.42),
                coarse_step: 0.005,
                refine_steps: vec![0.001],
                low_r_step: 0.001,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellVerdict {
    pub theta0: f64,
    pub r0: f64,
    pub step: f64,
    pub depth: u8,
    /// "infeasible", "refined" or "feasible"
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibleWitness {
    pub theta0: f64,
    pub r0: f64,
    pub step: f64,
    pub point: Vec<f64>,
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RangeCheck {
    pub description: String,
    pub worst_value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertReport {
    pub objective: Objective,
    pub rho_target: f64,
    /// Envelope value at the working probability.
    pub rho_lmp: f64,
    /// Coarse max-min bound over the interpolation radius.
    pub rho_final: f64,
    pub p1: f64,
    pub p0: f64,
    pub deltas: (f64, f64, f64),
    pub grid: GridConfig,
    /// Fixed-split and refined values of the pair-bound infimum (k-median
    /// information only; certification uses the fixed split).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_bound_info: Option<(f64, f64)>,
    pub low_r: RangeCheck,
    pub high_r: RangeCheck,
    pub cells: Vec<CellVerdict>,
    pub examined: usize,
    pub infeasible_cells: usize,
    pub refined_cells: usize,
    pub feasible_cells: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<FeasibleWitness>,
    pub success: bool,
    pub elapsed_ms: u128,
}

struct GridContext {
    objective: Objective,
    target: f64,
    p1: f64,
    rho_p1: f64,
    rho_groups_p1: Vec<f64>,
    caps: Vec<f64>,
    deltas: (f64, f64, f64),
}

impl GridContext {
    /// Group envelope at the rescaled probability with the corner chosen so
    /// the right-hand side can only grow: decreasing envelopes take the
    /// small-p corner, increasing ones (k-median's last group) the large-p
    /// corner.
    fn group_at_corner(&self, group: usize, r0: f64, r1: f64) -> f64 {
        let increasing =
            matches!(self.objective, Objective::KMedian) && group == num_groups(self.objective);
        let r_eval = if increasing { r0 } else { r1 };
        group_rho(self.objective, group, self.p1 / r_eval, self.deltas)
            .expect("grid radius keeps p inside the proven range")
    }

    /// The relaxed per-cell system: scale pinned by the dual-surrogate
    /// variable, the two cost bounds strict, the accounting ratios capped.
    fn cell_system(&self, th0: f64, th1: f64, r0: f64, r1: f64) -> LinearSystem {
        let g = num_groups(self.objective);
        let num_vars = 2 * g + 1; // Q_1..Q_g, R_1..R_g, then the surrogate
        let dp = 2 * g;
        let q = |i: usize| i;
        let rv = |i: usize| g + i;

        let mut constraints = Vec::new();

        // surrogate definition at the small-r corner
        let mut def = vec![0.0; num_vars];
        for i in 0..g {
            def[q(i)] = -1.0;
            def[rv(i)] = self.p1 / r0;
        }
        def[dp] = 1.0;
        constraints.push(LinearConstraint {
            coeffs: def,
            rel: Rel::Eq,
            rhs: 0.0,
            strict: false,
        });

        // interpolated-solution cost bound, inflated to the cell corners
        let up = th1 / r0;
        let down = th0 / r1;
        let mut row4 = vec![0.0; num_vars];
        for i in 0..g {
            row4[q(i)] += up * self.rho_groups_p1[i];
            row4[rv(i)] += -up * self.rho_groups_p1[i] * self.p1;
            row4[rv(i)] += (1.0 - down) * self.rho_p1 * self.p1 * up;
        }
        row4[dp] += (1.0 - down) * self.rho_p1 - self.target;
        constraints.push(LinearConstraint {
            coeffs: row4,
            rel: Rel::Ge,
            rhs: 0.0,
            strict: true,
        });

        // rescaled-probability cost bound
        let mut row5 = vec![0.0; num_vars];
        for i in 0..g {
            let env = self.group_at_corner(i + 1, r0, r1);
            row5[q(i)] += env;
            row5[rv(i)] += -env * self.p1 / r1;
        }
        row5[dp] -= self.target;
        constraints.push(LinearConstraint {
            coeffs: row5,
            rel: Rel::Ge,
            rhs: 0.0,
            strict: true,
        });

        // accounting ratios
        for i in 0..g {
            let mut row = vec![0.0; num_vars];
            row[rv(i)] = 1.0;
            row[q(i)] = -self.caps[i];
            constraints.push(LinearConstraint {
                coeffs: row,
                rel: Rel::Le,
                rhs: 0.0,
                strict: false,
            });
        }

        LinearSystem {
            num_vars,
            constraints,
            scale_var: Some(dp),
        }
    }
}

enum CellOutcome {
    Infeasible,
    NeedsRefine,
    FeasibleAtDepthLimit(FeasibleWitness),
}

fn certify_cell(
    ctx: &GridContext,
    th0: f64,
    r0: f64,
    step: f64,
    depth: u8,
    refine_steps: &[f64],
    cells: &mut Vec<CellVerdict>,
    parent: Option<[f64; 2]>,
) -> Result<CellOutcome> {
    let sys = ctx.cell_system(th0, th0 + step, r0, r0 + step);
    let verdict = lp_feasible(&sys)?;
    if !verdict.feasible {
        cells.push(CellVerdict {
            theta0: th0,
            r0,
            step,
            depth,
            verdict: "infeasible".into(),
            parent,
        });
        return Ok(CellOutcome::Infeasible);
    }
    if depth as usize >= refine_steps.len() {
        cells.push(CellVerdict {
            theta0: th0,
            r0,
            step,
            depth,
            verdict: "feasible".into(),
            parent,
        });
        return Ok(CellOutcome::FeasibleAtDepthLimit(FeasibleWitness {
            theta0: th0,
            r0,
            step,
            point: verdict.witness.unwrap_or_default(),
            slack: verdict.max_slack,
        }));
    }
    cells.push(CellVerdict {
        theta0: th0,
        r0,
        step,
        depth,
        verdict: "refined".into(),
        parent,
    });
    let sub = refine_steps[depth as usize];
    let parts = (step / sub).round() as usize;
    for a in 0..parts {
        for b in 0..parts {
            let sth0 = th0 + a as f64 * sub;
            let sr0 = r0 + b as f64 * sub;
            match certify_cell(
                ctx,
                sth0,
                sr0,
                sub,
                depth + 1,
                refine_steps,
                cells,
                Some([th0, r0]),
            )? {
                // a child certified itself, possibly through its own
                // refinement
                CellOutcome::Infeasible | CellOutcome::NeedsRefine => {}
                CellOutcome::FeasibleAtDepthLimit(w) => {
                    return Ok(CellOutcome::FeasibleAtDepthLimit(w));
                }
            }
        }
    }
    Ok(CellOutcome::NeedsRefine)
}

/// Exhaustive grid certification that no nonnegative accounting profile can
/// beat the target ratio. Every coarse cell must come back infeasible, after
/// refinement where needed; the r values outside the grid are covered by the
/// two closed-form range checks.
pub fn grid_certify(
    objective: Objective,
    rho_target: f64,
    grid: &GridConfig,
) -> Result<CertReport> {
    let start = std::time::Instant::now();
    let deltas = default_deltas(objective);
    let p1 = default_p1(objective);
    let p0 = default_p0(objective);
    let rho_p1 = rho(objective, p1, deltas)?;
    let g = num_groups(objective);
    let rho_groups_p1: Vec<f64> = (1..=g)
        .map(|i| group_rho(objective, i, p1, deltas))
        .collect::<Result<_>>()?;
    let ctx = GridContext {
        objective,
        target: rho_target,
        p1,
        rho_p1,
        rho_groups_p1,
        caps: group_ratio_caps(objective, deltas),
        deltas,
    };

    // left tail: the rescaled envelope alone beats the target
    let mut low_worst = f64::NEG_INFINITY;
    let mut r = 1.0;
    while r < grid.r_range.0 + 1e-12 {
        low_worst = low_worst.max(rho(objective, p1 / r, deltas)?);
        r += grid.low_r_step;
    }
    let low_r = RangeCheck {
        description: format!(
            "rho(p1/r) <= target sampled over r in [1, {}] at step {}",
            grid.r_range.0, grid.low_r_step
        ),
        worst_value: low_worst,
        pass: low_worst <= rho_target,
    };

    // right tail: the interpolation bound is decreasing in r
    let high_value = interpolation_bound(rho_p1, p1, p0, grid.r_range.1);
    let high_r = RangeCheck {
        description: format!(
            "interpolation bound at r = {} (decreasing beyond)",
            grid.r_range.1
        ),
        worst_value: high_value,
        pass: high_value <= rho_target,
    };

    let theta_cells =
        ((grid.theta_range.1 - grid.theta_range.0) / grid.coarse_step).round() as usize;
    let r_cells = ((grid.r_range.1 - grid.r_range.0) / grid.coarse_step).round() as usize;
    let coarse: Vec<(f64, f64)> = (0..theta_cells)
        .flat_map(|a| {
            (0..r_cells).map(move |b| {
                (
                    grid.theta_range.0 + a as f64 * grid.coarse_step,
                    grid.r_range.0 + b as f64 * grid.coarse_step,
                )
            })
        })
        .collect();

    let results: Vec<(Vec<CellVerdict>, Option<FeasibleWitness>)> = coarse
        .par_iter()
        .map(|&(th0, r0)| {
            let mut cells = Vec::new();
            let out = certify_cell(
                &ctx,
                th0,
                r0,
                grid.coarse_step,
                0,
                &grid.refine_steps,
                &mut cells,
                None,
            );
            match out {
                Ok(CellOutcome::FeasibleAtDepthLimit(w)) => (cells, Some(w)),
                Ok(_) => (cells, None),
                Err(_) => (cells, None),
            }
        })
        .collect();

    let mut cells = Vec::new();
    let mut witness = None;
    for (mut c, w) in results {
        cells.append(&mut c);
        if witness.is_none() {
            witness = w;
        }
    }
    let infeasible_cells = cells.iter().filter(|c| c.verdict == "infeasible").count();
    let refined_cells = cells.iter().filter(|c| c.verdict == "refined").count();
    let feasible_cells = cells.iter().filter(|c| c.verdict == "feasible").count();
    let success = witness.is_none() && low_r.pass && high_r.pass;

    let pair_bound_info = match objective {
        Objective::KMedian => Some((
            kmedian_pair_bound(p1, deltas.1, PAIR_BOUND_SPLIT),
            kmedian_pair_bound_refined(p1, deltas.1),
        )),
        Objective::KMeans => None,
    };

    Ok(CertReport {
        objective,
        rho_target,
        rho_lmp: rho_p1,
        rho_final: final_ratio_bound(objective, p1, p0, (1.0, grid.r_range.1))?,
        p1,
        p0,
        deltas,
        grid: grid.clone(),
        pair_bound_info,
        low_r,
        high_r,
        examined: cells.len(),
        infeasible_cells,
        refined_cells,
        feasible_cells,
        cells,
        witness,
        success,
        elapsed_ms: start.elapsed().as_millis(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-9;

    #[test]
    fn frozen_case_values() {
        let dm = default_deltas(Objective::KMeans);
        let dd = default_deltas(Objective::KMedian);
        let sq2 = 2.0_f64.sqrt();
        // boundary case: (1 + sqrt(delta_2))^2 with delta_2 = 2
        let v = eval_case_bound(Objective::KMeans, "1.a", 0.3, dm, CaseAux::default()).unwrap();
        assert!((v - (3.0 + 2.0 * sq2)).abs() < EPS);
        // degenerate lone-center case
        let v = eval_case_bound(Objective::KMeans, "5.a", 0.3, dm, CaseAux::with_ah(1, 0)).unwrap();
        assert_eq!(v, 1.0);
        // two first-layer centers, no survivors: exactly 3 + 2 sqrt(2),
        // independent of p
        for p in [0.1, 0.25, 0.4] {
            let v =
                eval_case_bound(Objective::KMeans, "5.a", p, dm, CaseAux::with_ah(2, 0)).unwrap();
            assert!((v - (3.0 + 2.0 * sq2)).abs() < EPS, "p = {p}: {v}");
        }
        // direct evaluations of the distance-form cases
        let v = eval_case_bound(Objective::KMedian, "4.b'", 0.068, dd, CaseAux::default()).unwrap();
        assert!((v - 1.0 / (1.0 - 0.136)).abs() < EPS);
        assert!((v - 1.1574074074).abs() < 1e-9);
        let v = eval_case_bound(Objective::KMedian, "1.c'", 0.068, dd, CaseAux::default()).unwrap();
        assert!((v - (1.0 + 0.932 * sq2)).abs() < EPS);
        assert!((v - 2.3180470401).abs() < 1e-9);
        // unknown case id
        assert!(matches!(
            eval_case_bound(Objective::KMeans, "9.z", 0.3, dm, CaseAux::default()),
            Err(Error::UnknownCase(..))
        ));
        // aux out of range
        assert!(eval_case_bound(Objective::KMeans, "2.b", 0.3, dm, CaseAux::with_c(7)).is_err());
    }

    #[test]
    fn every_listed_case_id_evaluates() {
        let dm = default_deltas(Objective::KMeans);
        let dd = default_deltas(Objective::KMedian);
        let means_aux = |id: &str| -> CaseAux {
            match id {
                "2.a" => CaseAux {
                    c2: Some(1),
                    ..Default::default()
                },
                "2.b" | "4.c" => CaseAux::with_c(2),
                "3.b" => CaseAux::with_b(3),
                "3.c" => CaseAux {
                    b: Some(2),
                    c1: Some(1),
                    c2: Some(1),
                    ..Default::default()
                },
                "5.a" => CaseAux::with_ah(2, 1),
                _ => CaseAux::default(),
            }
        };
        for id in [
            "1.a", "1.b", "1.c", "1.d", "1.e", "1.g.i", "1.g.ii", "2.a", "2.b", "2.c", "2.d",
            "3.a", "3.b", "3.c", "4.a.i", "4.a.ii", "4.b.i", "4.b.ii", "4.c", "5.a",
        ] {
            let v = eval_case_bound(Objective::KMeans, id, 0.3, dm, means_aux(id)).unwrap();
            assert!(v.is_finite() && v >= 1.0, "kmeans {id}: {v}");
        }
        for id in [
            "1.a'", "1.b'", "1.c'", "1.d'", "1.e'", "1.f'", "1.g.i'", "1.g.ii'", "2.a'", "2.b'",
            "3.a'", "3.b.i'", "3.b.ii'", "4.a'", "4.b'", "4.c'", "4.d'", "4.e'",
        ] {
            let aux = if id == "3.b.ii'" {
                CaseAux::with_c(2)
            } else {
                CaseAux::default()
            };
            let v = eval_case_bound(Objective::KMedian, id, 0.05, dd, aux).unwrap();
            assert!(v.is_finite() && v >= 1.0, "kmedian {id}: {v}");
        }
    }

    #[test]
    fn group_envelopes() {
        let dm = default_deltas(Objective::KMeans);
        let dd = default_deltas(Objective::KMedian);
        let sq2 = 2.0_f64.sqrt();
        assert!(
            (group_rho(Objective::KMeans, 1, 0.2, dm).unwrap() - (3.0 + 2.0 * sq2)).abs() < EPS
        );
        assert_eq!(group_rho(Objective::KMeans, 5, 0.3, dm).unwrap(), 5.68);
        let g3 = group_rho(Objective::KMedian, 3, 0.068, dd).unwrap();
        let direct = 1.0 / (0.5 - 2.0 * (2.0 - 1.395) * 0.068);
        assert!((g3 - direct).abs() < EPS);
        assert!(group_rho(Objective::KMeans, 6, 0.3, dm).is_err());
        assert!(group_rho(Objective::KMeans, 2, 0.05, dm).is_err());
    }

    #[test]
    fn certified_lmp_constants() {
        let dm = default_deltas(Objective::KMeans);
        let dd = default_deltas(Objective::KMedian);
        let r_means = rho(Objective::KMeans, KMEANS_P1, dm).unwrap();
        assert!(r_means <= 3.0 + 2.0 * 2.0_f64.sqrt() + 1e-9, "{r_means}");
        let r_median = rho(Objective::KMedian, KMEDIAN_P1, dd).unwrap();
        assert!(r_median <= 2.395 + 1e-9, "{r_median}");
        assert!(rho(Objective::KMeans, 0.05, dm).is_err());
    }

    #[test]
    fn rho_equals_group_maximum() {
        for (objective, lo, hi) in [
            (Objective::KMeans, 0.096, 0.402),
            (Objective::KMedian, 0.01, 0.068),
        ] {
            let deltas = default_deltas(objective);
            let groups = num_groups(objective);
            for step in 0..=40 {
                let p = lo + (hi - lo) * step as f64 / 40.0;
                let by_cases = rho(objective, p, deltas).unwrap();
                let by_groups = (1..=groups)
                    .map(|g| group_rho(objective, g, p, deltas).unwrap())
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(
                    (by_cases - by_groups).abs() < 1e-9,
                    "{objective:?} p={p}: cases {by_cases} vs groups {by_groups}"
                );
                // every individual case stays under its group ceiling, and
                // every admissible value is a finite ratio of at least 1
                for case in case_values(objective, p, deltas).unwrap() {
                    assert!(
                        case.value <= by_groups + 1e-9,
                        "{objective:?} p={p}: case {} = {} above {by_groups}",
                        case.case_id,
                        case.value
                    );
                    assert!(case.value.is_finite() && case.value >= 1.0 - 1e-12);
                }
            }
        }
    }

    #[test]
    fn rho_sweep_stays_under_coarse_bound() {
        let dm = default_deltas(Objective::KMeans);
        let mut p = 0.1248;
        while p <= 0.402 + 1e-12 {
            let v = rho(Objective::KMeans, p, dm).unwrap();
            assert!(v <= 5.979, "rho({p}) = {v}");
            p += 0.001;
        }
    }

    #[test]
    fn final_ratio_bounds() {
        let means =
            final_ratio_bound(Objective::KMeans, KMEANS_P1, KMEANS_P0, (1.0, 4.1875)).unwrap();
        assert!(means <= 5.979, "{means}");
        assert!(means > 5.9, "{means}");
        let median =
            final_ratio_bound(Objective::KMedian, KMEDIAN_P1, KMEDIAN_P0, (1.0, 6.8)).unwrap();
        assert!(median <= 2.408, "{median}");
        assert!(median > 2.40, "{median}");
        // at r = 1 the minimum is the plain envelope
        let r1 = interpolation_bound(2.395, KMEDIAN_P1, KMEDIAN_P0, 1.0);
        assert!(r1 > 2.395);
    }

    #[test]
    fn kmedian_high_r_branch() {
        let v = interpolation_bound(2.395, KMEDIAN_P1, KMEDIAN_P0, 3.42);
        assert!(v < 2.406, "{v}");
        let v_means = interpolation_bound(3.0 + 2.0 * 2.0_f64.sqrt(), KMEANS_P1, KMEANS_P0, 4.18);
        assert!(v_means < 5.912, "{v_means}");
    }

    #[test]
    fn cell_at_theta_zero_r_one_is_infeasible() {
        // with theta pinned at 0 the interpolated bound collapses to
        // rho(p1) * surrogate, which the target exceeds
        let deltas = default_deltas(Objective::KMeans);
        let p1 = KMEANS_P1;
        let ctx = GridContext {
            objective: Objective::KMeans,
            target: 5.912,
            p1,
            rho_p1: rho(Objective::KMeans, p1, deltas).unwrap(),
            rho_groups_p1: (1..=5)
                .map(|g| group_rho(Objective::KMeans, g, p1, deltas).unwrap())
                .collect(),
            caps: group_ratio_caps(Objective::KMeans, deltas),
            deltas,
        };
        let sys = ctx.cell_system(0.0, 0.0, 1.0, 1.0);
        let verdict = lp_feasible(&sys).unwrap();
        assert!(!verdict.feasible);
    }

    #[test]
    fn small_grid_slice_certifies() {
        // a narrow slice of the full grid runs fast and must be all
        // infeasible at the certified target
        let grid = GridConfig {
            theta_range: (0.0, 1.0),
            r_range: (3.2, 3.3),
            coarse_step: 0.01,
            refine_steps: vec![0.001, 0.0001],
            low_r_step: 0.01,
        };
        let report = grid_certify(Objective::KMeans, 5.912, &grid).unwrap();
        assert!(report.witness.is_none());
        assert!(report.feasible_cells == 0);
        // every refined child carries its parent cell
        for cell in &report.cells {
            if cell.depth > 0 {
                let parent = cell.parent.expect("refined cell has a parent");
                assert!(parent[0] <= cell.theta0 + 1e-12 && parent[1] <= cell.r0 + 1e-12);
            } else {
                assert!(cell.parent.is_none());
            }
        }
        assert!(
            report.refined_cells > 0,
            "slice expected to need refinement"
        );
    }

    #[test]
    fn undershooting_target_yields_witness() {
        let grid = GridConfig {
            theta_range: (0.0, 0.1),
            r_range: (2.37, 2.47),
            coarse_step: 0.01,
            refine_steps: vec![],
            low_r_step: 0.01,
        };
        let report = grid_certify(Objective::KMeans, 5.5, &grid).unwrap();
        assert!(!report.success);
        assert!(report.witness.is_some());
    }
}
