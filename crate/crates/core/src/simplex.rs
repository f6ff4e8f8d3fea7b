//! A small dense two-phase simplex used as a feasibility engine for systems
//! of linear inequalities over nonnegative variables. Strict inequalities
//! are certified through a max-slack reformulation: the system is strictly
//! feasible exactly when the optimal common slack is positive.
//!
//! The solver is generic over the scalar so the same pivoting code can run
//! in f64 (production) and in exact rational arithmetic (tests).

use crate::error::{Error, Result};

pub trait SimplexScalar: Clone + PartialOrd + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn div(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Magnitudes at or below this count as zero during pivoting.
    fn pivot_tol() -> Self;

    fn abs(&self) -> Self {
        if *self < Self::zero() {
            self.neg()
        } else {
            self.clone()
        }
    }
    fn is_pos(&self) -> bool {
        *self > Self::pivot_tol()
    }
    fn is_neg(&self) -> bool {
        *self < Self::pivot_tol().neg()
    }
}

impl SimplexScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn pivot_tol() -> Self {
        1e-11
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

/// One row `coeffs . x REL rhs`; `strict` marks inequalities that must hold
/// strictly (meaningless for Eq).
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub rel: Rel,
    pub rhs: f64,
    pub strict: bool,
}

/// A feasibility query over nonnegative variables. `scale_var`, when set,
/// pins that variable to 1 — the normalization used for homogeneous systems.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub num_vars: usize,
    pub constraints: Vec<LinearConstraint>,
    pub scale_var: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct LpVerdict {
    pub feasible: bool,
    /// Optimal common slack of the strict rows; infinite when unbounded.
    pub max_slack: f64,
    /// A strictly feasible point when one exists.
    pub witness: Option<Vec<f64>>,
}

/// Verdict tolerance: strict feasibility requires slack above this margin.
pub const SLACK_TOL: f64 = 1e-9;

enum PivotRule {
    Dantzig,
    Bland,
}

enum SolveOutcome<T> {
    Optimal(T),
    Unbounded,
}

/// Dense tableau for `minimize c.x  s.t.  A x = b, x >= 0` with b >= 0 and an
/// identity start in the listed basis columns.
struct Tableau<T> {
    rows: usize,
    cols: usize,
    a: Vec<Vec<T>>,
    b: Vec<T>,
    basis: Vec<usize>,
}

impl<T: SimplexScalar> Tableau<T> {
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.a[row][col].clone();
        for x in self.a[row].iter_mut() {
            *x = x.div(&piv);
        }
        self.b[row] = self.b[row].div(&piv);
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let factor = self.a[r][col].clone();
            if factor.abs() <= T::pivot_tol() {
                continue;
            }
            for cidx in 0..self.cols {
                let delta = factor.mul(&self.a[row][cidx]);
                self.a[r][cidx] = self.a[r][cidx].sub(&delta);
            }
            self.b[r] = self.b[r].sub(&factor.mul(&self.b[row]));
        }
        self.basis[row] = col;
    }

    /// Reduced costs for objective `c` under the current basis.
    fn reduced_costs(&self, c: &[T]) -> (Vec<T>, T) {
        let mut duals: Vec<T> = self.basis.iter().map(|&bc| c[bc].clone()).collect();
        let mut reduced = Vec::with_capacity(self.cols);
        for col in 0..self.cols {
            let mut z = T::zero();
            for r in 0..self.rows {
                z = z.add(&duals[r].mul(&self.a[r][col]));
            }
            reduced.push(c[col].sub(&z));
        }
        let mut obj = T::zero();
        for r in 0..self.rows {
            obj = obj.add(&duals[r].mul(&self.b[r]));
        }
        duals.clear();
        (reduced, obj)
    }

    fn run(&mut self, c: &[T], rule: &PivotRule, max_iter: usize) -> Option<SolveOutcome<T>> {
        for _ in 0..max_iter {
            let (reduced, obj) = self.reduced_costs(c);
            let entering = match rule {
                PivotRule::Bland => (0..self.cols).find(|&col| reduced[col].is_neg()),
                PivotRule::Dantzig => {
                    let mut best: Option<(usize, T)> = None;
                    for col in 0..self.cols {
                        if reduced[col].is_neg() {
                            match &best {
                                Some((_, v)) if reduced[col] >= *v => {}
                                _ => best = Some((col, reduced[col].clone())),
                            }
                        }
                    }
                    best.map(|(col, _)| col)
                }
            };
            let Some(col) = entering else {
                return Some(SolveOutcome::Optimal(obj));
            };
            // ratio test; Bland tie-break on the leaving basis column
            let mut leave: Option<(usize, T)> = None;
            for r in 0..self.rows {
                if self.a[r][col].is_pos() {
                    let ratio = self.b[r].div(&self.a[r][col]);
                    let better = match &leave {
                        None => true,
                        Some((lr, lv)) => {
                            ratio < *lv || (ratio == *lv && self.basis[r] < self.basis[*lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            match leave {
                Some((row, _)) => self.pivot(row, col),
                None => return Some(SolveOutcome::Unbounded),
            }
        }
        None
    }

    fn solve(&mut self, c: &[T]) -> Result<SolveOutcome<T>> {
        let snapshot = (self.a.clone(), self.b.clone(), self.basis.clone());
        if let Some(out) = self.run(c, &PivotRule::Dantzig, 2_000) {
            return Ok(out);
        }
        // cycling suspicion: restart from the snapshot under Bland's rule
        self.a = snapshot.0;
        self.b = snapshot.1;
        self.basis = snapshot.2;
        self.run(c, &PivotRule::Bland, 20_000)
            .ok_or(Error::LpCycling)
    }
}

/// Outcome of the max-slack program.
pub enum SlackOutcome<T> {
    /// Even the non-strict system admits no point.
    Infeasible,
    /// The slack grows without bound.
    Unbounded,
    /// Finite optimum with an optimal point over the structural variables.
    Optimal(T, Vec<T>),
}

/// Core engine: maximize the common slack `s` of the strict rows subject to
/// the full system.
pub fn max_slack<T: SimplexScalar>(system: &LinearSystem) -> Result<SlackOutcome<T>> {
    let n = system.num_vars;
    let mut rows: Vec<(Vec<f64>, Rel, f64, bool)> = system
        .constraints
        .iter()
        .map(|c| {
            assert_eq!(c.coeffs.len(), n, "constraint width mismatch");
            (c.coeffs.clone(), c.rel, c.rhs, c.strict)
        })
        .collect();
    if let Some(v) = system.scale_var {
        let mut coeffs = vec![0.0; n];
        coeffs[v] = 1.0;
        rows.push((coeffs, Rel::Eq, 1.0, false));
    }

    // columns: x (n) | s+ | s- | one slack/surplus per inequality row |
    // artificials appended afterwards
    let s_plus = n;
    let s_minus = n + 1;
    let num_ineq = rows.iter().filter(|r| r.1 != Rel::Eq).count();
    let base_cols = n + 2 + num_ineq;

    let mut a: Vec<Vec<T>> = Vec::with_capacity(rows.len());
    let mut b: Vec<T> = Vec::with_capacity(rows.len());
    let mut basis: Vec<Option<usize>> = Vec::with_capacity(rows.len());
    let mut slack_col = n + 2;

    for (coeffs, rel, rhs, strict) in rows {
        let mut row = vec![T::zero(); base_cols];
        // orient to `a . x <= rhs` / `= rhs`, folding the strict slack in
        let (mut vec_c, mut rel, mut rhs) = (coeffs, rel, rhs);
        if rel == Rel::Ge {
            for x in vec_c.iter_mut() {
                *x = -*x;
            }
            rhs = -rhs;
            rel = Rel::Le;
        }
        for (idx, &x) in vec_c.iter().enumerate() {
            row[idx] = T::from_f64(x);
        }
        if strict && rel != Rel::Eq {
            // a.x + s <= rhs
            row[s_plus] = T::one();
            row[s_minus] = T::one().neg();
        }
        match rel {
            Rel::Le => {
                row[slack_col] = T::one();
                slack_col += 1;
            }
            Rel::Eq => {}
            Rel::Ge => unreachable!(),
        }
        // standard form needs nonnegative rhs
        let mut rhs_t = T::from_f64(rhs);
        if rhs_t < T::zero() {
            for x in row.iter_mut() {
                *x = x.neg();
            }
            rhs_t = rhs_t.neg();
        }
        a.push(row);
        b.push(rhs_t);
        basis.push(None);
    }

    // identity start: reuse slack columns with coefficient +1, otherwise add
    // an artificial
    let rows_n = a.len();
    let mut artificials: Vec<usize> = Vec::new();
    for r in 0..rows_n {
        let mut found = None;
        for col in n + 2..base_cols {
            if a[r][col] == T::one()
                && (0..rows_n).all(|r2| r2 == r || !(a[r2][col].is_pos() || a[r2][col].is_neg()))
            {
                found = Some(col);
                break;
            }
        }
        basis[r] = found;
    }
    let mut cols = base_cols;
    for r in 0..rows_n {
        if basis[r].is_none() {
            for row in a.iter_mut() {
                row.push(T::zero());
            }
            a[r][cols] = T::one();
            artificials.push(cols);
            basis[r] = Some(cols);
            cols += 1;
        }
    }

    let mut tab = Tableau {
        rows: rows_n,
        cols,
        a,
        b,
        basis: basis.into_iter().map(Option::unwrap).collect(),
    };

    // phase 1: drive the artificials to zero
    if !artificials.is_empty() {
        let mut c1 = vec![T::zero(); cols];
        for &col in &artificials {
            c1[col] = T::one();
        }
        match tab.solve(&c1)? {
            SolveOutcome::Optimal(v) => {
                if v.is_pos() {
                    return Ok(SlackOutcome::Infeasible); // not even weakly feasible
                }
            }
            SolveOutcome::Unbounded => unreachable!("phase 1 is bounded below"),
        }
        // pivot any artificial still sitting in the basis out of it
        for r in 0..tab.rows {
            if artificials.contains(&tab.basis[r]) {
                if let Some(col) =
                    (0..base_cols).find(|&col| tab.a[r][col].is_pos() || tab.a[r][col].is_neg())
                {
                    tab.pivot(r, col);
                }
            }
        }
        for row in tab.a.iter_mut() {
            for &col in &artificials {
                row[col] = T::zero();
            }
        }
    }

    // phase 2: maximize s = s+ - s-  (minimize s- - s+)
    let mut c2 = vec![T::zero(); tab.cols];
    c2[s_plus] = T::one().neg();
    c2[s_minus] = T::one();
    match tab.solve(&c2)? {
        SolveOutcome::Optimal(obj) => {
            let mut point = vec![T::zero(); n];
            for r in 0..tab.rows {
                if tab.basis[r] < n {
                    point[tab.basis[r]] = tab.b[r].clone();
                }
            }
            Ok(SlackOutcome::Optimal(obj.neg(), point))
        }
        SolveOutcome::Unbounded => Ok(SlackOutcome::Unbounded),
    }
}

/// Strict-feasibility verdict for a system of inequalities over nonnegative
/// variables: FEASIBLE when the strict rows admit a common slack above the
/// 1e-9 margin, INFEASIBLE otherwise (a certified margin rather than an
/// unquantified claim).
pub fn lp_feasible(system: &LinearSystem) -> Result<LpVerdict> {
    debug_assert!(system.num_vars <= 16 && system.constraints.len() <= 24);
    match max_slack::<f64>(system)? {
        SlackOutcome::Infeasible => Ok(LpVerdict {
            feasible: false,
            max_slack: f64::NEG_INFINITY,
            witness: None,
        }),
        SlackOutcome::Unbounded => Ok(LpVerdict {
            feasible: true,
            max_slack: f64::INFINITY,
            witness: None,
        }),
        SlackOutcome::Optimal(s, point) => Ok(LpVerdict {
            feasible: s > SLACK_TOL,
            max_slack: s,
            witness: if s > SLACK_TOL { Some(point) } else { None },
        }),
    }
}
