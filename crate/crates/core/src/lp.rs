//! Small dense-basis revised simplex for maximization problems with sparse
//! columns, returning dual values and an optimality or infeasibility
//! certificate.
//!
//! Two phases with artificial variables. Entering columns are chosen by the
//! largest reduced cost, falling back to Bland's rule after a run of
//! degenerate pivots. The basis inverse is refactored periodically.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse `(column, coefficient)` pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `max c x` subject to the constraints and `x >= 0`.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpOptimum {
    pub x: Vec<f64>,
    /// One per constraint: `>= 0` for `Le`, `<= 0` for `Ge`, free for `Eq`.
    pub duals: Vec<f64>,
    pub value: f64,
    /// `b . y`; equals `value` at an exact optimum.
    pub dual_value: f64,
    /// Largest constraint or bound violation of `x`.
    pub primal_residual: f64,
    /// Largest violation of dual feasibility (`c_j - y A_j > 0` or a dual of
    /// the wrong sign).
    pub dual_residual: f64,
    pub iterations: usize,
}

impl LpOptimum {
    pub fn gap(&self) -> f64 {
        (self.value - self.dual_value).abs()
    }

    /// Primal and dual feasibility within `tol` and a duality gap within
    /// `tol * (1 + |value|)`.
    pub fn certified(&self, tol: f64) -> bool {
        self.primal_residual <= tol && self.dual_residual <= tol && self.gap() <= tol * (1.0 + self.value.abs())
    }
}

/// Farkas multipliers `y` with `y A_j <= 0` (sign-adjusted per relation)
/// for every column and `y b > 0`, proving no feasible point exists.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Infeasibility {
    pub multipliers: Vec<f64>,
    /// `y . b`; positive.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LpOutcome {
    Optimal(LpOptimum),
    Infeasible(Infeasibility),
    Unbounded,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn variables(&self) -> usize {
        self.objective.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn add(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        self.validate()?;
        let kept = self.distinct_rows();
        if kept.len() == self.constraints.len() {
            return self.solve_rows(self, &kept);
        }
        let reduced = LinearProgram {
            objective: self.objective.clone(),
            constraints: kept.iter().map(|&i| self.constraints[i].clone()).collect(),
        };
        self.solve_rows(&reduced, &kept)
    }

    /// Solves `lp`, whose rows are the rows `kept` of `self`, and reports
    /// duals and multipliers against all rows of `self`.
    fn solve_rows(&self, lp: &LinearProgram, kept: &[usize]) -> Result<LpOutcome> {
        let expand = |v: Vec<f64>| {
            let mut full = vec![0.0; self.constraints.len()];
            for (&i, y) in kept.iter().zip(v) {
                full[i] = y;
            }
            full
        };
        let mut s = Standard::build(lp);
        s.run(Phase::One)?;
        let phase_one = s.objective_value();
        if phase_one < -FEAS_TOL * (1.0 + s.rhs_scale) {
            let y = s.duals();
            let multipliers = expand(y.iter().zip(&s.flipped).map(|(v, &f)| if f { *v } else { -*v }).collect());
            let violation = multipliers.iter().zip(&self.constraints).map(|(m, c)| m * c.rhs).sum();
            return Ok(LpOutcome::Infeasible(Infeasibility {
                multipliers,
                violation,
            }));
        }
        s.drive_out_artificials();
        if !s.run(Phase::Two)? {
            return Ok(LpOutcome::Unbounded);
        }
        let (x, duals) = s.primal_dual(self.objective.len());
        Ok(LpOutcome::Optimal(self.assess(x, expand(duals), s.iterations)))
    }

    /// Indices of the rows left after dropping exact duplicates: among
    /// inequalities with identical coefficients and direction only the
    /// tightest survives, identical equalities collapse to one.
    fn distinct_rows(&self) -> Vec<usize> {
        let mut seen: HashMap<(u8, Vec<(usize, u64)>), usize> = HashMap::new();
        let mut keep = vec![true; self.constraints.len()];
        for (i, c) in self.constraints.iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> = c.coeffs.clone();
            coeffs.sort_by_key(|e| e.0);
            coeffs.dedup_by(|a, b| {
                if a.0 == b.0 {
                    b.1 += a.1;
                    true
                } else {
                    false
                }
            });
            let key: Vec<(usize, u64)> = coeffs.iter().filter(|e| e.1 != 0.0).map(|&(j, a)| (j, a.to_bits())).collect();
            let tag = match c.relation {
                Relation::Le => 0,
                Relation::Ge => 1,
                Relation::Eq => 2,
            };
            match seen.get(&(tag, key.clone())) {
                None => {
                    seen.insert((tag, key), i);
                }
                Some(&k) => {
                    let prev = self.constraints[k].rhs;
                    let tighter = match c.relation {
                        Relation::Le => c.rhs < prev,
                        Relation::Ge => c.rhs > prev,
                        Relation::Eq => {
                            if c.rhs != prev {
                                continue;
                            }
                            false
                        }
                    };
                    if tighter {
                        keep[k] = false;
                        seen.insert((tag, key), i);
                    } else {
                        keep[i] = false;
                    }
                }
            }
        }
        (0..self.constraints.len()).filter(|&i| keep[i]).collect()
    }

    fn assess(&self, x: Vec<f64>, duals: Vec<f64>, iterations: usize) -> LpOptimum {
        let n = self.objective.len();
        let value: f64 = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let dual_value: f64 = duals.iter().zip(&self.constraints).map(|(y, c)| y * c.rhs).sum();

        let mut primal_residual: f64 = 0.0;
        for c in &self.constraints {
            let ax: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let viol = match c.relation {
                Relation::Le => (ax - c.rhs).max(0.0),
                Relation::Ge => (c.rhs - ax).max(0.0),
                Relation::Eq => (ax - c.rhs).abs(),
            };
            primal_residual = primal_residual.max(viol / (1.0 + c.rhs.abs()));
        }
        let mut aty = vec![0.0; n];
        for (c, y) in self.constraints.iter().zip(&duals) {
            for &(j, a) in &c.coeffs {
                aty[j] += a * y;
            }
        }
        let mut dual_residual: f64 = 0.0;
        for j in 0..n {
            dual_residual = dual_residual.max((self.objective[j] - aty[j]).max(0.0));
        }
        for (c, &y) in self.constraints.iter().zip(&duals) {
            let wrong = match c.relation {
                Relation::Le => (-y).max(0.0),
                Relation::Ge => y.max(0.0),
                Relation::Eq => 0.0,
            };
            dual_residual = dual_residual.max(wrong);
        }
        LpOptimum {
            x,
            duals,
            value,
            dual_value,
            primal_residual,
            dual_residual,
            iterations,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Lp("objective has non-finite coefficients".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() || c.coeffs.iter().any(|&(j, a)| j >= self.objective.len() || !a.is_finite()) {
                return Err(Error::Lp(format!("constraint {i} is malformed")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Original,
    Slack,
    Artificial,
}

/// Equality form `A x = b`, `b >= 0`, with slack and artificial columns.
struct Standard {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    kinds: Vec<Kind>,
    cost2: Vec<f64>,
    b: Vec<f64>,
    /// Row was multiplied by -1 to make its right-hand side non-negative.
    flipped: Vec<bool>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    phase: Phase,
    iterations: usize,
    rhs_scale: f64,
}

impl Standard {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.constraints.len();
        let n = lp.objective.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut kinds = vec![Kind::Original; n];
        let mut cost2 = lp.objective.clone();
        let mut b = Vec::with_capacity(m);
        let mut flipped = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);

        for (i, c) in lp.constraints.iter().enumerate() {
            let flip = c.rhs < 0.0;
            let sign = if flip { -1.0 } else { 1.0 };
            for &(j, a) in &c.coeffs {
                if a != 0.0 {
                    cols[j].push((i, sign * a));
                }
            }
            b.push(sign * c.rhs);
            flipped.push(flip);
            let rel = match (c.relation, flip) {
                (Relation::Le, false) | (Relation::Ge, true) => Relation::Le,
                (Relation::Ge, false) | (Relation::Le, true) => Relation::Ge,
                (Relation::Eq, _) => Relation::Eq,
            };
            let mut push = |entry: f64, kind: Kind| {
                cols.push(vec![(i, entry)]);
                kinds.push(kind);
                cost2.push(0.0);
                cols.len() - 1
            };
            match rel {
                Relation::Le => basis.push(push(1.0, Kind::Slack)),
                Relation::Ge => {
                    push(-1.0, Kind::Slack);
                    basis.push(push(1.0, Kind::Artificial));
                }
                Relation::Eq => basis.push(push(1.0, Kind::Artificial)),
            }
        }
        // merge duplicate row entries within a column
        for col in cols.iter_mut() {
            col.sort_by_key(|e| e.0);
            col.dedup_by(|a, b| {
                if a.0 == b.0 {
                    b.1 += a.1;
                    true
                } else {
                    false
                }
            });
        }
        let mut in_basis = vec![false; cols.len()];
        for &j in &basis {
            in_basis[j] = true;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let rhs_scale = b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Self {
            m,
            xb: b.clone(),
            cols,
            kinds,
            cost2,
            b,
            flipped,
            basis,
            in_basis,
            binv,
            phase: Phase::One,
            iterations: 0,
            rhs_scale,
        }
    }

    fn cost(&self, j: usize) -> f64 {
        match self.phase {
            Phase::One => {
                if self.kinds[j] == Kind::Artificial {
                    -1.0
                } else {
                    0.0
                }
            }
            Phase::Two => self.cost2[j],
        }
    }

    fn eligible(&self, j: usize) -> bool {
        !self.in_basis[j] && !(self.phase == Phase::Two && self.kinds[j] == Kind::Artificial)
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &j) in self.basis.iter().enumerate() {
            let c = self.cost(j);
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yi, bi) in y.iter_mut().zip(row) {
                    *yi += c * bi;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        self.cost(j) - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>()
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut u = vec![0.0; m];
        for &(i, a) in &self.cols[j] {
            for (r, ur) in u.iter_mut().enumerate() {
                *ur += self.binv[r * m + i] * a;
            }
        }
        u
    }

    fn objective_value(&self) -> f64 {
        self.basis.iter().zip(&self.xb).map(|(&j, x)| self.cost(j) * x).sum()
    }

    /// Returns `false` if the phase-two problem is unbounded.
    fn run(&mut self, phase: Phase) -> Result<bool> {
        self.phase = phase;
        let limit = 50_000 + 100 * (self.cols.len() + self.m);
        let mut degenerate = 0usize;
        let mut since_refactor = 0usize;
        loop {
            if self.iterations > limit {
                return Err(Error::Lp(format!("no convergence after {} pivots", self.iterations)));
            }
            let y = self.duals();
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = COST_TOL;
            for j in 0..self.cols.len() {
                if !self.eligible(j) {
                    continue;
                }
                let d = self.reduced_cost(j, &y);
                if d > best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(j) = enter else {
                return Ok(true);
            };
            let u = self.ftran(j);
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for r in 0..self.m {
                if u[r] > PIVOT_TOL {
                    let t = self.xb[r].max(0.0) / u[r];
                    let better = match leave {
                        None => true,
                        Some(l) => t < ratio - 1e-12 || (t <= ratio + 1e-12 && self.basis[r] < self.basis[l]),
                    };
                    if better {
                        ratio = t;
                        leave = Some(r);
                    }
                }
            }
            let Some(r) = leave else {
                if phase == Phase::One {
                    return Err(Error::Lp("phase one reported unbounded".into()));
                }
                return Ok(false);
            };
            degenerate = if ratio <= 1e-12 { degenerate + 1 } else { 0 };
            self.pivot(r, j, &u);
            since_refactor += 1;
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize, u: &[f64]) {
        let m = self.m;
        let piv = u[r];
        let theta = self.xb[r] / piv;
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * u[i];
            }
        }
        self.xb[r] = theta;
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (prow, after) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        for (i, row) in before.chunks_mut(m).chain(after.chunks_mut(m)).enumerate() {
            let idx = if i < r { i } else { i + 1 };
            let f = u[idx];
            if f != 0.0 {
                for (a, p) in row.iter_mut().zip(prow.iter()) {
                    *a -= f * p;
                }
            }
        }
        self.in_basis[self.basis[r]] = false;
        self.in_basis[j] = true;
        self.basis[r] = j;
        self.iterations += 1;
    }

    /// Rebuilds the basis inverse and basic values from scratch.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (c, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j] {
                a[i * m + c] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let p = (col..m)
                .max_by(|&x, &y| a[x * m + col].abs().total_cmp(&a[y * m + col].abs()))
                .expect("non-empty range");
            if a[p * m + col].abs() < 1e-14 {
                return Err(Error::Lp("basis became singular".into()));
            }
            if p != col {
                for k in 0..m {
                    a.swap(p * m + k, col * m + k);
                    inv.swap(p * m + k, col * m + k);
                }
            }
            let d = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            for i in 0..m {
                if i != col {
                    let f = a[i * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            a[i * m + k] -= f * a[col * m + k];
                            inv[i * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        // inv maps original rows to basis positions
        self.binv = inv;
        self.xb = (0..m)
            .map(|r| (0..m).map(|i| self.binv[r * m + i] * self.b[i]).sum())
            .collect();
        Ok(())
    }

    /// Pivots zero-level artificials out of the basis where possible; rows
    /// where that fails are redundant and their artificial stays at zero.
    fn drive_out_artificials(&mut self) {
        for r in 0..self.m {
            if self.kinds[self.basis[r]] != Kind::Artificial {
                continue;
            }
            let m = self.m;
            let candidate = (0..self.cols.len()).find(|&j| {
                self.kinds[j] != Kind::Artificial
                    && !self.in_basis[j]
                    && self.cols[j]
                        .iter()
                        .map(|&(i, a)| self.binv[r * m + i] * a)
                        .sum::<f64>()
                        .abs()
                        > 1e-9
            });
            if let Some(j) = candidate {
                let u = self.ftran(j);
                self.pivot(r, j, &u);
            }
        }
    }

    fn primal_dual(&mut self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let _ = self.refactor();
        let mut x = vec![0.0; n];
        for (r, &j) in self.basis.iter().enumerate() {
            if j < n {
                x[j] = self.xb[r].max(0.0);
            }
        }
        let duals = self
            .duals()
            .iter()
            .zip(&self.flipped)
            .map(|(v, &f)| if f { -*v } else { *v })
            .collect();
        (x, duals)
    }
}
