//! Equivalence properties and their certification checks on a propagated
//! [`DiffState`], plus concrete validation of candidate counterexamples.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::diffzono::DiffState;
use crate::error::{Error, Result};
use crate::lp::{Constraint, LinearProgram, LpOutcome, LpSolver, LpStatus};
use crate::network::Network;
use crate::zonotope::{GeneratorClass, Zonotope};

/// A Top-1 violation maximum must be at most `-CERT_MARGIN` to count as safe.
pub const CERT_MARGIN: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "property", rename_all = "snake_case")]
pub enum PropertySpec {
    /// `‖f1(x) − f2(x)‖∞ ≤ epsilon` on the whole box.
    Epsilon { epsilon: f64 },
    /// Both networks agree on the top class.
    Top1,
    /// Agreement is only required where `f1`'s softmax confidence reaches `delta`.
    DeltaTop1 { delta: f64 },
}

impl PropertySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PropertySpec::Epsilon { epsilon } => {
                if !(epsilon > 0.0 && epsilon.is_finite()) {
                    return Err(Error::input("epsilon", format!("must be finite and > 0, got {epsilon}")));
                }
            }
            PropertySpec::Top1 => {}
            PropertySpec::DeltaTop1 { delta } => {
                delta_to_threshold(delta)?;
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            PropertySpec::Epsilon { .. } => "epsilon",
            PropertySpec::Top1 => "top1",
            PropertySpec::DeltaTop1 { .. } => "delta_top1",
        }
    }

    /// The numeric parameter, if the property has one.
    pub fn param(&self) -> Option<f64> {
        match *self {
            PropertySpec::Epsilon { epsilon } => Some(epsilon),
            PropertySpec::Top1 => None,
            PropertySpec::DeltaTop1 { delta } => Some(delta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Safe,
    Candidate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub verdict: Verdict,
    /// Input point suggested by the abstraction; absent for SAFE and on solver failure.
    pub candidate_input: Option<Vec<f64>>,
    /// `(k, j)`: f1's top class and the class of f2 that may overtake it.
    pub witness: Option<(usize, usize)>,
    pub lp_calls: usize,
    /// How far the worst bound exceeds the property; `≤ 0` when safe.
    pub excess: f64,
}

impl CheckOutcome {
    fn safe(lp_calls: usize, excess: f64) -> Self {
        Self {
            verdict: Verdict::Safe,
            candidate_input: None,
            witness: None,
            lp_calls,
            excess,
        }
    }

    pub fn is_safe(&self) -> bool {
        self.verdict == Verdict::Safe
    }
}

/// Dispatches to the check matching `spec`. `z_in` is the (compressed) input
/// zonotope the state was propagated from.
pub fn check(spec: &PropertySpec, state: &DiffState, z_in: &Zonotope, solver: &dyn LpSolver) -> Result<CheckOutcome> {
    match *spec {
        PropertySpec::Epsilon { epsilon } => check_epsilon(state, z_in, epsilon),
        PropertySpec::Top1 => check_top1(state, z_in, 0.0, solver),
        PropertySpec::DeltaTop1 { delta } => check_delta_top1(state, z_in, delta, solver),
    }
}

fn input_point(z_in: &Zonotope, noise: &[f64]) -> Result<Vec<f64>> {
    let e = z_in.block(GeneratorClass::Input);
    if noise.len() != e.ncols() {
        return Err(Error::dim("input noise", e.ncols(), noise.len()));
    }
    Ok((z_in.center() + &e.dot(&ArrayView1::from(noise))).to_vec())
}

pub fn check_epsilon(state: &DiffState, z_in: &Zonotope, epsilon: f64) -> Result<CheckOutcome> {
    let bounds = state.zdelta.all_bounds();
    let Some((row, worst)) = bounds
        .iter()
        .map(|b| b.abs_max())
        .enumerate()
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, best)) if best >= v => acc,
            _ => Some((i, v)),
        })
    else {
        return Ok(CheckOutcome::safe(0, f64::NEG_INFINITY));
    };
    if worst <= epsilon {
        return Ok(CheckOutcome::safe(0, worst - epsilon));
    }
    let b = bounds[row];
    let toward_upper = b.upper.abs() >= b.lower.abs();
    let e = state.zdelta.block(GeneratorClass::Input);
    let noise: Vec<f64> = e
        .row(row)
        .iter()
        .map(|&g| {
            let s = if g > 0.0 {
                1.0
            } else if g < 0.0 {
                -1.0
            } else {
                0.0
            };
            if toward_upper {
                s
            } else {
                -s
            }
        })
        .collect();
    Ok(CheckOutcome {
        verdict: Verdict::Candidate,
        candidate_input: Some(input_point(z_in, &noise)?),
        witness: None,
        lp_calls: 0,
        excess: worst - epsilon,
    })
}

/// Column widths of the joint LP variable vector, in class order.
fn joint_widths(state: &DiffState) -> [usize; 4] {
    std::array::from_fn(|c| {
        let class = GeneratorClass::ALL[c];
        state
            .zdelta
            .num_generators(class)
            .max(state.z1.num_generators(class))
            .max(state.z2.num_generators(class))
    })
}

/// One row of `z` laid out over the joint variable vector.
fn joint_row(z: &Zonotope, row: usize, widths: &[usize; 4]) -> Vec<f64> {
    let mut out = Vec::with_capacity(widths.iter().sum());
    for (c, &w) in widths.iter().enumerate() {
        let block = z.block(GeneratorClass::ALL[c]);
        let r = block.row(row);
        out.extend(r.iter().copied());
        out.extend(std::iter::repeat_n(0.0, w - r.len()));
    }
    out
}

/// The constraint part of the Top-1 violation LP for a fixed top class `k`;
/// objectives for each competitor `j` come from [`Top1Lp::objective_for`].
#[derive(Debug, Clone)]
pub struct Top1Lp {
    pub k: usize,
    pub program: LinearProgram,
    second_rows: Vec<Vec<f64>>,
    second_center: Vec<f64>,
}

impl Top1Lp {
    /// Linear part and constant of `Z''_j − Z''_k`.
    pub fn objective_for(&self, j: usize) -> Result<(Vec<f64>, f64)> {
        let o = self.second_rows.len();
        if j >= o {
            return Err(Error::IndexOutOfRange {
                context: "top-1 competitor".into(),
                index: j,
                len: o,
            });
        }
        let lin = self.second_rows[j]
            .iter()
            .zip(&self.second_rows[self.k])
            .map(|(a, b)| a - b)
            .collect();
        Ok((lin, self.second_center[j] - self.second_center[self.k]))
    }
}

pub fn build_top1_lp(state: &DiffState, k: usize, t: f64) -> Result<Top1Lp> {
    let o = state.dims();
    if k >= o {
        return Err(Error::IndexOutOfRange {
            context: "top-1 class".into(),
            index: k,
            len: o,
        });
    }
    let widths = joint_widths(state);
    let n: usize = widths.iter().sum();
    let first: Vec<Vec<f64>> = (0..o).map(|i| joint_row(&state.z1, i, &widths)).collect();
    let second: Vec<Vec<f64>> = (0..o).map(|i| joint_row(&state.z2, i, &widths)).collect();
    let delta: Vec<Vec<f64>> = (0..o).map(|i| joint_row(&state.zdelta, i, &widths)).collect();
    let c1 = state.z1.center();
    let c2 = state.z2.center();
    let cd = state.zdelta.center();

    let mut program = LinearProgram::new(n);
    for l in (0..o).filter(|&l| l != k) {
        let coeffs = first[l].iter().zip(&first[k]).map(|(a, b)| a - b).collect();
        program.inequalities.push(Constraint::new(coeffs, c1[k] - c1[l] - t));
    }
    for i in 0..o {
        let coeffs: Vec<f64> = (0..n).map(|v| first[i][v] - second[i][v] - delta[i][v]).collect();
        let rhs = c2[i] + cd[i] - c1[i];
        let scale = 1.0 + c1[i].abs() + c2[i].abs() + cd[i].abs();
        if coeffs.iter().all(|&a| a == 0.0) && rhs.abs() <= 1e-12 * scale {
            continue;
        }
        program.equalities.push(Constraint::new(coeffs, rhs));
    }
    Ok(Top1Lp {
        k,
        program,
        second_rows: second,
        second_center: c2.to_vec(),
    })
}

fn delta_is_exactly_zero(z: &Zonotope) -> bool {
    z.center().iter().all(|&c| c == 0.0)
        && GeneratorClass::ALL
            .iter()
            .all(|&c| z.block(c).iter().all(|&g| g == 0.0))
}

pub fn check_top1(state: &DiffState, z_in: &Zonotope, t: f64, solver: &dyn LpSolver) -> Result<CheckOutcome> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::input("t", format!("threshold must be finite and >= 0, got {t}")));
    }
    // Pointwise-equal outputs cannot disagree on any class.
    if delta_is_exactly_zero(&state.zdelta) {
        return Ok(CheckOutcome::safe(0, f64::NEG_INFINITY));
    }
    let o = state.dims();
    let n1 = state.zdelta.num_generators(GeneratorClass::Input);
    let b1 = state.z1.all_bounds();
    let mut lp_calls = 0;
    let mut worst = f64::NEG_INFINITY;

    let mut order: Vec<usize> = (0..o).collect();
    let c1 = state.z1.center();
    order.sort_by(|&a, &b| c1[b].total_cmp(&c1[a]).then(a.cmp(&b)));

    for k in order {
        // k can never lead by t: its constraint set is empty.
        if (0..o).any(|l| l != k && b1[k].upper - b1[l].lower < t) {
            continue;
        }
        let mut top = build_top1_lp(state, k, t)?;
        let mut prior: Option<LpOutcome> = None;
        for j in (0..o).filter(|&j| j != k) {
            let (lin, constant) = top.objective_for(j)?;
            let box_max: f64 = lin.iter().map(|a| a.abs()).sum::<f64>() + constant;
            if box_max <= -CERT_MARGIN {
                worst = worst.max(box_max);
                continue;
            }
            top.program.objective = lin;
            let out = match &prior {
                Some(p) => solver.solve_max_warm(&top.program, p)?,
                None => solver.solve_max(&top.program)?,
            };
            lp_calls += 1;
            match out.status {
                LpStatus::Infeasible => break,
                LpStatus::SolverError => {
                    return Ok(CheckOutcome {
                        verdict: Verdict::Candidate,
                        candidate_input: None,
                        witness: Some((k, j)),
                        lp_calls,
                        excess: f64::INFINITY,
                    });
                }
                LpStatus::Optimal => {
                    let value = out.value + constant;
                    if value > -CERT_MARGIN {
                        let candidate = input_point(z_in, &out.argmax[..n1])?;
                        return Ok(CheckOutcome {
                            verdict: Verdict::Candidate,
                            candidate_input: Some(candidate),
                            witness: Some((k, j)),
                            lp_calls,
                            excess: value,
                        });
                    }
                    worst = worst.max(value);
                    prior = Some(out);
                }
            }
        }
    }
    Ok(CheckOutcome::safe(lp_calls, worst))
}

pub fn check_delta_top1(state: &DiffState, z_in: &Zonotope, delta: f64, solver: &dyn LpSolver) -> Result<CheckOutcome> {
    check_top1(state, z_in, delta_to_threshold(delta)?, solver)
}

/// `t = ln(δ/(1−δ))`: confidence `δ` on class `i` forces `z_i − z_j ≥ t` for all `j`.
pub fn delta_to_threshold(delta: f64) -> Result<f64> {
    if !(0.5..1.0).contains(&delta) {
        return Err(Error::input(
            "delta",
            format!("must lie in [0.5, 1) so that ln(delta/(1-delta)) is defined and >= 0, got {delta}"),
        ));
    }
    Ok((delta / (1.0 - delta)).ln())
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Worst-case softmax overestimate of the polytope approximation.
pub fn softmax_poly_error(n: usize, delta: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::input("n", format!("must be >= 2, got {n}")));
    }
    if !(0.5..=1.0).contains(&delta) {
        return Err(Error::input("delta", format!("must lie in [0.5, 1], got {delta}")));
    }
    if n == 2 {
        return Ok(0.0);
    }
    let n = n as f64;
    Ok(delta - delta / (delta * (2.0 - n) + n - 1.0))
}

/// Error bound of the piecewise-linear sigmoid approximation with per-segment error `upsilon`.
pub fn softmax_sigmoid_error(n: usize, upsilon: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::input("n", format!("must be >= 2, got {n}")));
    }
    if !(upsilon >= 0.0) {
        return Err(Error::input("upsilon", format!("must be >= 0, got {upsilon}")));
    }
    let nf = n as f64;
    let root = (nf - 1.0).sqrt() + 1.0;
    Ok((nf - 2.0) / (root * root) + 2.0 * upsilon)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Validation {
    Concrete {
        f1: Vec<f64>,
        f2: Vec<f64>,
        detail: String,
    },
    Spurious,
}

impl Validation {
    pub fn is_concrete(&self) -> bool {
        matches!(self, Validation::Concrete { .. })
    }
}

/// Brings `x` into `[lower, upper]`, tolerating rounding-sized overshoot.
pub fn clamp_into_box(x: &[f64], lower: &[f64], upper: &[f64]) -> Result<Vec<f64>> {
    if x.len() != lower.len() || lower.len() != upper.len() {
        return Err(Error::dim("candidate input", lower.len(), x.len()));
    }
    x.iter()
        .zip(lower.iter().zip(upper))
        .enumerate()
        .map(|(i, (&v, (&l, &u)))| {
            let tol = 1e-9 * (1.0 + l.abs().max(u.abs()));
            if !v.is_finite() || v < l - tol || v > u + tol {
                Err(Error::input(format!("x[{i}]"), format!("{v} lies outside [{l}, {u}]")))
            } else {
                Ok(v.clamp(l, u))
            }
        })
        .collect()
}

fn argmax_set(v: &[f64]) -> Vec<usize> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..v.len()).filter(|&i| v[i] == m).collect()
}

fn overtaker(f2: &[f64], k: usize) -> Option<usize> {
    (0..f2.len()).find(|&j| f2[j] > f2[k])
}

/// Forward-evaluates both networks at `x` and decides whether it violates `spec`.
pub fn validate_candidate(
    net1: &Network,
    net2: &Network,
    spec: &PropertySpec,
    x: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Result<(Vec<f64>, Validation)> {
    let x = clamp_into_box(x, lower, upper)?;
    let f1 = net1.evaluate(&x)?.to_vec();
    let f2 = net2.evaluate(&x)?.to_vec();
    let detail = match *spec {
        PropertySpec::Epsilon { epsilon } => {
            let (i, gap) = f1
                .iter()
                .zip(&f2)
                .map(|(a, b)| (a - b).abs())
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, g)| if g > acc.1 { (i, g) } else { acc });
            (gap >= epsilon).then(|| format!("|f1-f2| = {gap} >= {epsilon} at output {i}"))
        }
        PropertySpec::Top1 => argmax_set(&f1).into_iter().find_map(|k| {
            overtaker(&f2, k).map(|j| format!("f1 picks class {k}, f2 ranks class {j} above it"))
        }),
        PropertySpec::DeltaTop1 { delta } => {
            let p = softmax(&f1);
            (0..f1.len()).filter(|&k| p[k] >= delta).find_map(|k| {
                overtaker(&f2, k).map(|j| {
                    format!("f1 picks class {k} with confidence {} >= {delta}, f2 ranks class {j} above it", p[k])
                })
            })
        }
    };
    let verdict = match detail {
        Some(detail) => Validation::Concrete {
            f1: f1.clone(),
            f2: f2.clone(),
            detail,
        },
        None => Validation::Spurious,
    };
    Ok((x, verdict))
}
