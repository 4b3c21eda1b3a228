//! Dense bounded-variable primal simplex for `max c·x` over `x ∈ [−1, 1]^n`
//! with linear inequality and equality rows.
//!
//! Variable bounds are handled natively: nonbasic variables sit at one of
//! their bounds and the ratio test includes bound flips. Phase one minimises
//! the sum of artificials. Dantzig pricing is used until a run of degenerate
//! pivots, after which Bland's rule takes over to rule out cycling.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

/// `max objective·x` s.t. `inequalities: a·x ≤ b`, `equalities: a·x = b`, `x ∈ [−1,1]^n`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub inequalities: Vec<Constraint>,
    pub equalities: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            inequalities: Vec::new(),
            equalities: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.objective.len() != self.n_vars {
            return Err(Error::dim("lp objective", self.n_vars, self.objective.len()));
        }
        for (i, c) in self.inequalities.iter().enumerate() {
            if c.coeffs.len() != self.n_vars {
                return Err(Error::dim(format!("lp inequality {i}"), self.n_vars, c.coeffs.len()));
            }
        }
        for (i, c) in self.equalities.iter().enumerate() {
            if c.coeffs.len() != self.n_vars {
                return Err(Error::dim(format!("lp equality {i}"), self.n_vars, c.coeffs.len()));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Largest constraint or bound violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = x.iter().map(|v| (v.abs() - 1.0).max(0.0));
        let ineq = self.inequalities.iter().map(|c| (c.activity(x) - c.rhs).max(0.0));
        let eq = self.equalities.iter().map(|c| (c.activity(x) - c.rhs).abs());
        bounds.chain(ineq).chain(eq).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    SolverError,
}

#[derive(Debug, Clone)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub value: f64,
    pub argmax: Vec<f64>,
    warm: Option<Arc<Tableau>>,
}

impl LpOutcome {
    fn failed(status: LpStatus) -> Self {
        Self {
            status,
            value: f64::NAN,
            argmax: Vec::new(),
            warm: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Solver backend used by the property checks.
pub trait LpSolver: Sync {
    fn solve_max(&self, lp: &LinearProgram) -> Result<LpOutcome>;

    /// Re-solve a program that differs from `prior`'s only in its objective.
    fn solve_max_warm(&self, lp: &LinearProgram, prior: &LpOutcome) -> Result<LpOutcome> {
        let _ = prior;
        self.solve_max(lp)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DenseSimplex;

impl LpSolver for DenseSimplex {
    fn solve_max(&self, lp: &LinearProgram) -> Result<LpOutcome> {
        solve_max(lp)
    }

    fn solve_max_warm(&self, lp: &LinearProgram, prior: &LpOutcome) -> Result<LpOutcome> {
        solve_max_warm(lp, prior)
    }
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const DEGENERATE_SWITCH: usize = 30;

pub fn solve_max(lp: &LinearProgram) -> Result<LpOutcome> {
    lp.validate()?;
    let Some(mut tab) = Tableau::build(lp) else {
        return Ok(LpOutcome::failed(LpStatus::SolverError));
    };
    if !tab.run_phase_one() {
        return Ok(LpOutcome::failed(tab.failure));
    }
    tab.set_objective(&lp.objective);
    Ok(tab.finish_phase_two(lp))
}

pub fn solve_max_warm(lp: &LinearProgram, prior: &LpOutcome) -> Result<LpOutcome> {
    lp.validate()?;
    match &prior.warm {
        Some(t) if t.n_orig == lp.n_vars && t.rows == lp.inequalities.len() + lp.equalities.len() => {
            let mut tab = (**t).clone();
            tab.set_objective(&lp.objective);
            Ok(tab.finish_phase_two(lp))
        }
        _ if prior.status == LpStatus::Infeasible => Ok(LpOutcome::failed(LpStatus::Infeasible)),
        _ => solve_max(lp),
    }
}

/// Dense tableau `B⁻¹A` over original, slack and artificial columns.
#[derive(Debug, Clone)]
struct Tableau {
    rows: usize,
    cols: usize,
    n_orig: usize,
    /// Row-major `rows × cols`.
    t: Vec<f64>,
    /// Original rows, for recomputing basic values.
    a: Vec<f64>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    basic_row: Vec<Option<usize>>,
    /// Column of the initial (identity-up-to-sign) basis for each row, and its sign.
    init_col: Vec<(usize, f64)>,
    first_artificial: usize,
    failure: LpStatus,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Option<Self> {
        let n = lp.n_vars;
        let n_ineq = lp.inequalities.len();
        let rows = n_ineq + lp.equalities.len();
        // x starts at its lower bound; residual decides slack vs artificial basis.
        let x0 = vec![-1.0; n];
        let mut needs_art = Vec::with_capacity(rows);
        let mut residual = Vec::with_capacity(rows);
        for (i, c) in lp.inequalities.iter().chain(&lp.equalities).enumerate() {
            let r = c.rhs - c.activity(&x0);
            if !r.is_finite() {
                return None;
            }
            residual.push(r);
            needs_art.push(i >= n_ineq || r < 0.0);
        }
        let n_art = needs_art.iter().filter(|&&b| b).count();
        let cols = n + n_ineq + n_art;
        let first_artificial = n + n_ineq;

        let mut a = vec![0.0; rows * cols];
        let mut rhs = vec![0.0; rows];
        for (i, c) in lp.inequalities.iter().chain(&lp.equalities).enumerate() {
            a[i * cols..i * cols + n].copy_from_slice(&c.coeffs);
            if i < n_ineq {
                a[i * cols + n + i] = 1.0;
            }
            rhs[i] = c.rhs;
        }
        let mut lower = vec![-1.0; n];
        let mut upper = vec![1.0; n];
        lower.extend(std::iter::repeat_n(0.0, n_ineq + n_art));
        upper.extend(std::iter::repeat_n(f64::INFINITY, n_ineq + n_art));
        let mut x = x0;
        x.extend(std::iter::repeat_n(0.0, n_ineq + n_art));

        let mut basis = Vec::with_capacity(rows);
        let mut init_col = Vec::with_capacity(rows);
        let mut next_art = first_artificial;
        for i in 0..rows {
            if needs_art[i] {
                let sign = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
                a[i * cols + next_art] = sign;
                x[next_art] = residual[i].abs();
                basis.push(next_art);
                init_col.push((next_art, sign));
                next_art += 1;
            } else {
                x[n + i] = residual[i];
                basis.push(n + i);
                init_col.push((n + i, 1.0));
            }
        }
        let mut t = a.clone();
        for (i, &(_, sign)) in init_col.iter().enumerate() {
            if sign < 0.0 {
                t[i * cols..(i + 1) * cols].iter_mut().for_each(|v| *v = -*v);
            }
        }
        let mut basic_row = vec![None; cols];
        for (i, &b) in basis.iter().enumerate() {
            basic_row[b] = Some(i);
        }
        Some(Self {
            rows,
            cols,
            n_orig: n,
            t,
            a,
            rhs,
            lower,
            upper,
            x,
            cost: vec![0.0; cols],
            basis,
            basic_row,
            init_col,
            first_artificial,
            failure: LpStatus::SolverError,
        })
    }

    fn run_phase_one(&mut self) -> bool {
        if self.first_artificial == self.cols {
            return true;
        }
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        for j in self.first_artificial..self.cols {
            self.cost[j] = -1.0;
        }
        if !self.iterate() {
            return false;
        }
        self.refresh_basic_values();
        let infeasibility: f64 = (self.first_artificial..self.cols).map(|j| self.x[j]).sum();
        let scale = 1.0 + self.rhs.iter().map(|r| r.abs()).fold(0.0, f64::max);
        if infeasibility > FEAS_TOL * scale {
            self.failure = LpStatus::Infeasible;
            return false;
        }
        // Artificials are pinned to zero from here on.
        for j in self.first_artificial..self.cols {
            self.upper[j] = 0.0;
            self.x[j] = 0.0;
        }
        self.refresh_basic_values();
        true
    }

    fn set_objective(&mut self, objective: &[f64]) {
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        self.cost[..self.n_orig].copy_from_slice(objective);
    }

    fn finish_phase_two(mut self, lp: &LinearProgram) -> LpOutcome {
        if !self.iterate() {
            return LpOutcome::failed(self.failure);
        }
        self.refresh_basic_values();
        let argmax: Vec<f64> = self.x[..self.n_orig]
            .iter()
            .map(|v| v.clamp(-1.0, 1.0))
            .collect();
        let scale = 1.0
            + lp.inequalities
                .iter()
                .chain(&lp.equalities)
                .map(|c| c.rhs.abs())
                .fold(0.0, f64::max);
        if lp.max_violation(&argmax) > 1e-8 * scale || argmax.iter().any(|v| !v.is_finite()) {
            return LpOutcome::failed(LpStatus::SolverError);
        }
        let value = lp.objective_value(&argmax);
        LpOutcome {
            status: LpStatus::Optimal,
            value,
            argmax,
            warm: Some(Arc::new(self)),
        }
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        let mut d = self.cost[j];
        for i in 0..self.rows {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                d -= cb * self.t[i * self.cols + j];
            }
        }
        d
    }

    /// Direction in which nonbasic `j` may move profitably, if any.
    fn improving_direction(&self, j: usize) -> Option<(f64, f64)> {
        if self.basic_row[j].is_some() || self.upper[j] <= self.lower[j] {
            return None;
        }
        let d = self.reduced_cost(j);
        if d > COST_TOL && self.x[j] < self.upper[j] {
            Some((1.0, d))
        } else if d < -COST_TOL && self.x[j] > self.lower[j] {
            Some((-1.0, d))
        } else {
            None
        }
    }

    fn iterate(&mut self) -> bool {
        let max_iter = 50 * (self.rows + self.cols) + 1000;
        let mut degenerate_run = 0usize;
        for _ in 0..max_iter {
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.cols {
                if let Some((dir, d)) = self.improving_direction(j) {
                    if bland {
                        entering = Some((j, dir));
                        break;
                    }
                    if d.abs() > best {
                        best = d.abs();
                        entering = Some((j, dir));
                    }
                }
            }
            let Some((j, dir)) = entering else {
                return true;
            };

            // Ratio test; `None` row means a bound flip of the entering variable.
            let mut step = self.upper[j] - self.lower[j];
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let alpha = dir * self.t[i * self.cols + j];
                let b = self.basis[i];
                let (limit, bound) = if alpha > PIVOT_TOL {
                    ((self.x[b] - self.lower[b]).max(0.0) / alpha, self.lower[b])
                } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                    ((self.upper[b] - self.x[b]).max(0.0) / -alpha, self.upper[b])
                } else {
                    continue;
                };
                let better = if limit < step - 1e-12 {
                    true
                } else if limit <= step + 1e-12 {
                    match leave {
                        Some((r, _)) if bland => b < self.basis[r],
                        Some((r, _)) => alpha.abs() > self.t[r * self.cols + j].abs(),
                        None => false,
                    }
                } else {
                    false
                };
                if better {
                    step = limit;
                    leave = Some((i, bound));
                }
            }
            if !step.is_finite() {
                // Cannot happen with boxed structurals; report as numerical failure.
                self.failure = LpStatus::SolverError;
                return false;
            }
            degenerate_run = if step <= 1e-12 { degenerate_run + 1 } else { 0 };

            let delta = dir * step;
            for i in 0..self.rows {
                let b = self.basis[i];
                self.x[b] -= delta * self.t[i * self.cols + j];
            }
            match leave {
                None => {
                    self.x[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
                }
                Some((r, bound)) => {
                    self.x[j] += delta;
                    let old = self.basis[r];
                    self.x[old] = bound;
                    self.pivot(r, j);
                }
            }
            if self.x.iter().any(|v| v.is_nan()) {
                self.failure = LpStatus::SolverError;
                return false;
            }
        }
        self.failure = LpStatus::SolverError;
        false
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let p = self.t[r * cols + j];
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * cols..(r + 1) * cols].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * cols + j];
            if f != 0.0 {
                for (v, pr) in self.t[i * cols..(i + 1) * cols].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.t[i * cols + j] = 0.0;
            }
        }
        let old = self.basis[r];
        self.basic_row[old] = None;
        self.basis[r] = j;
        self.basic_row[j] = Some(r);
    }

    /// Recomputes basic values as `B⁻¹(b − N·x_N)`; `B⁻¹` is read off the
    /// columns of the initial basis.
    fn refresh_basic_values(&mut self) {
        let cols = self.cols;
        let mut resid = self.rhs.clone();
        for (i, r) in resid.iter_mut().enumerate() {
            for j in 0..cols {
                if self.basic_row[j].is_none() {
                    let aij = self.a[i * cols + j];
                    if aij != 0.0 {
                        *r -= aij * self.x[j];
                    }
                }
            }
        }
        for i in 0..self.rows {
            let mut v = 0.0;
            for (k, &(col, sign)) in self.init_col.iter().enumerate() {
                v += self.t[i * cols + col] * sign * resid[k];
            }
            let b = self.basis[i];
            self.x[b] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn unconstrained_box() {
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![1.0];
        let out = solve_max(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!(approx(out.value, 1.0));
        assert!(approx(out.argmax[0], 1.0));
    }

    #[test]
    fn single_inequality() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.inequalities.push(Constraint::new(vec![1.0, 1.0], 0.5));
        let out = solve_max(&lp).unwrap();
        assert!(approx(out.value, 0.5));
    }

    #[test]
    fn equality_and_infeasibility() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, -1.0];
        lp.equalities.push(Constraint::new(vec![1.0, 1.0], 1.5));
        let out = solve_max(&lp).unwrap();
        assert!(approx(out.value, 0.5), "{out:?}");

        lp.inequalities.push(Constraint::new(vec![1.0, 0.0], -2.0));
        assert_eq!(solve_max(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn zero_rows_are_harmless() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![0.0, 2.0];
        lp.equalities.push(Constraint::new(vec![0.0, 0.0], 0.0));
        lp.equalities.push(Constraint::new(vec![1.0, -1.0], 0.0));
        let out = solve_max(&lp).unwrap();
        assert!(approx(out.value, 2.0));
    }

    #[test]
    fn warm_start_same_and_flipped_objective() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 2.0];
        lp.inequalities.push(Constraint::new(vec![1.0, 1.0], 1.0));
        let cold = solve_max(&lp).unwrap();
        let again = solve_max_warm(&lp, &cold).unwrap();
        assert!(approx(cold.value, again.value));

        let mut sym = LinearProgram::new(2);
        sym.objective = vec![1.0, -0.5];
        let a = solve_max(&sym).unwrap();
        sym.objective = vec![-1.0, 0.5];
        let b = solve_max_warm(&sym, &a).unwrap();
        assert!(approx(a.value, b.value));
    }

    #[test]
    fn rejects_malformed_program() {
        let mut lp = LinearProgram::new(2);
        lp.inequalities.push(Constraint::new(vec![1.0], 0.0));
        assert!(solve_max(&lp).is_err());
    }

    fn arb_lp() -> impl Strategy<Value = LinearProgram> {
        (1usize..4, 0usize..4).prop_flat_map(|(n, m)| {
            (
                prop::collection::vec(-3i32..=3, n),
                prop::collection::vec((prop::collection::vec(-3i32..=3, n), -3i32..=3), m),
            )
                .prop_map(move |(obj, rows)| {
                    let mut lp = LinearProgram::new(n);
                    lp.objective = obj.into_iter().map(f64::from).collect();
                    for (c, b) in rows {
                        lp.inequalities.push(Constraint::new(
                            c.into_iter().map(f64::from).collect(),
                            f64::from(b) / 2.0,
                        ));
                    }
                    lp
                })
        })
    }

    proptest! {
        #[test]
        fn adding_a_row_never_raises_the_maximum(lp in arb_lp(), extra in prop::collection::vec(-3i32..=3, 3), rhs in -3i32..=3) {
            let base = solve_max(&lp).unwrap();
            let mut tighter = lp.clone();
            tighter.inequalities.push(Constraint::new(
                extra.into_iter().take(lp.n_vars).map(f64::from).chain(std::iter::repeat(0.0)).take(lp.n_vars).collect(),
                f64::from(rhs),
            ));
            let t = solve_max(&tighter).unwrap();
            if base.status == LpStatus::Infeasible {
                prop_assert_eq!(t.status, LpStatus::Infeasible);
            } else if t.status == LpStatus::Optimal {
                prop_assert!(t.value <= base.value + 1e-9);
            }
        }

        #[test]
        fn optimal_argmax_is_feasible(lp in arb_lp()) {
            let out = solve_max(&lp).unwrap();
            prop_assert_ne!(out.status, LpStatus::SolverError);
            if out.is_optimal() {
                prop_assert!(lp.max_violation(&out.argmax) <= 1e-8);
                prop_assert!((lp.objective_value(&out.argmax) - out.value).abs() <= 1e-8);
            }
        }
    }
}
