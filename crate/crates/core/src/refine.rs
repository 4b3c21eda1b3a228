//! Branch-and-bound over input boxes.
//!
//! Each sub-box is propagated, checked, and either accepted, refuted by a
//! concrete counterexample, or halved along the dimension with the largest
//! range-scaled influence on the outputs of both networks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffzono::{reach_delta_observed, DiffState, Mode, ReluEvent, Side};
use crate::error::{Error, Result};
use crate::lp::{DenseSimplex, LpSolver};
use crate::network::{pad_to_common_shape, Network};
use crate::properties::{check, validate_candidate, PropertySpec, Validation};
use crate::zonotope::{box_to_zonotope, GeneratorClass, Zonotope};

/// Input-space influence of every generator of one network.
///
/// Column `g < n` of the conceptual matrix is the unit vector of input
/// generator `g`; `approx[j]` is the column of the network's `j`-th
/// relaxation generator.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceTracker {
    /// Input dimension behind each input generator.
    dims: Vec<usize>,
    approx: Vec<Vec<f64>>,
}

impl InfluenceTracker {
    pub fn new(dims: Vec<usize>) -> Self {
        Self { dims, approx: Vec::new() }
    }

    pub fn num_inputs(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn approx_columns(&self) -> &[Vec<f64>] {
        &self.approx
    }

    pub fn push(&mut self, column: Vec<f64>) -> Result<()> {
        if column.len() != self.dims.len() {
            return Err(Error::dim("influence column", self.dims.len(), column.len()));
        }
        self.approx.push(column);
        Ok(())
    }

    /// `|e_g| + Σ_k |a_k|·d(k)_g` for one affine row over this network's generators.
    pub fn row_influence(&self, input_row: ArrayView1<'_, f64>, approx_row: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        if input_row.len() != self.dims.len() {
            return Err(Error::dim("input generators", self.dims.len(), input_row.len()));
        }
        let mut d: Vec<f64> = input_row.iter().map(|e| e.abs()).collect();
        for (k, &a) in approx_row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let col = self.approx.get(k).ok_or_else(|| {
                Error::Internal(format!(
                    "relaxation generator {k} has no influence column ({} known)",
                    self.approx.len()
                ))
            })?;
            for (di, ci) in d.iter_mut().zip(col) {
                *di += a.abs() * ci;
            }
        }
        Ok(d)
    }
}

/// Influence column for the generator created by relaxing `row` of `pre`,
/// whose relaxation generators belong to `class`.
pub fn influence_column(pre: &Zonotope, row: usize, class: GeneratorClass, tracker: &InfluenceTracker) -> Result<Vec<f64>> {
    if row >= pre.dims() {
        return Err(Error::IndexOutOfRange {
            context: "pre-activation row".into(),
            index: row,
            len: pre.dims(),
        });
    }
    tracker.row_influence(pre.block(GeneratorClass::Input).row(row), pre.block(class).row(row))
}

fn record_event(tracker: &mut InfluenceTracker, class: GeneratorClass, event: &ReluEvent<'_>) -> Result<()> {
    for (row, relax) in event.relaxations.iter().enumerate() {
        if relax.appends_generator() {
            let col = influence_column(event.pre, row, class, tracker)?;
            tracker.push(col)?;
        }
    }
    Ok(())
}

/// A sub-box of the query box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubProblem {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub depth: usize,
}

impl SubProblem {
    pub fn ranges(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| l <= v && v <= u)
    }

    /// Halves along `dim`.
    pub fn split(&self, dim: usize) -> (SubProblem, SubProblem) {
        let mid = 0.5 * (self.lower[dim] + self.upper[dim]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[dim] = mid;
        right.lower[dim] = mid;
        left.depth += 1;
        right.depth += 1;
        (left, right)
    }
}

/// Per-dimension split scores; `None` for dimensions with zero range.
pub fn split_scores(state: &DiffState, d1: &InfluenceTracker, d2: &InfluenceTracker, sub: &SubProblem) -> Result<Vec<Option<f64>>> {
    let ranges = sub.ranges();
    let mut per_dim = vec![0.0; ranges.len()];
    for (z, tracker, class) in [
        (&state.z1, d1, GeneratorClass::F1Approx),
        (&state.z2, d2, GeneratorClass::F2Approx),
    ] {
        for row in 0..z.dims() {
            let infl = tracker.row_influence(z.block(GeneratorClass::Input).row(row), z.block(class).row(row))?;
            for (g, v) in infl.into_iter().enumerate() {
                let dim = tracker.dims[g];
                if dim >= per_dim.len() {
                    return Err(Error::IndexOutOfRange {
                        context: "input dimension".into(),
                        index: dim,
                        len: per_dim.len(),
                    });
                }
                per_dim[dim] += v;
            }
        }
    }
    Ok(per_dim
        .into_iter()
        .zip(ranges)
        .map(|(s, r)| (r > 0.0).then_some(s * r))
        .collect())
}

pub fn pick_split_dimension(state: &DiffState, d1: &InfluenceTracker, d2: &InfluenceTracker, sub: &SubProblem) -> Result<usize> {
    let scores = split_scores(state, d1, d2, sub)?;
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if let Some(s) = s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::input("box", "every dimension has zero range; evaluate the point instead"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub timeout_s: f64,
    pub max_splits: u64,
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_s > 0.0) {
            return Err(Error::input("timeout_s", format!("must be > 0, got {}", self.timeout_s)));
        }
        if self.max_splits == 0 {
            return Err(Error::input("max_splits", "must be > 0"));
        }
        Ok(())
    }
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            timeout_s: 60.0,
            max_splits: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Equivalent,
    NotEquivalent,
    Unknown,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Equivalent => "EQUIVALENT",
            Status::NotEquivalent => "NOT_EQUIVALENT",
            Status::Unknown => "UNKNOWN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub input: Vec<f64>,
    pub f1_output: Vec<f64>,
    pub f2_output: Vec<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub splits: u64,
    pub lp_calls: u64,
    pub time_s: f64,
    pub verified_volume_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationResult {
    pub status: Status,
    pub counterexample: Option<Counterexample>,
    pub stats: Stats,
    /// Sub-boxes certified safe; filled only when requested.
    pub safe_leaves: Vec<SubProblem>,
}

impl VerificationResult {
    /// Builds a NOT_EQUIVALENT result after re-checking the counterexample by forward evaluation.
    pub fn not_equivalent(
        net1: &Network,
        net2: &Network,
        spec: &PropertySpec,
        root: &SubProblem,
        cex: Counterexample,
        stats: Stats,
    ) -> Result<Self> {
        let (_, v) = validate_candidate(net1, net2, spec, &cex.input, &root.lower, &root.upper)?;
        if !v.is_concrete() {
            return Err(Error::Internal(format!(
                "counterexample {:?} does not violate the property",
                cex.input
            )));
        }
        Ok(Self {
            status: Status::NotEquivalent,
            counterexample: Some(cex),
            stats,
            safe_leaves: Vec::new(),
        })
    }
}

#[derive(Clone, Copy)]
pub struct VerifyOptions<'a> {
    /// Sub-boxes processed concurrently per round; 1 is fully sequential.
    pub jobs: usize,
    pub record_leaves: bool,
    pub solver: &'a dyn LpSolver,
}

impl Default for VerifyOptions<'_> {
    fn default() -> Self {
        Self {
            jobs: 1,
            record_leaves: false,
            solver: &DenseSimplex,
        }
    }
}

enum BoxOutcome {
    Safe,
    Violated(Counterexample),
    Split(usize, f64),
}

struct Processed {
    outcome: BoxOutcome,
    lp_calls: u64,
}

struct Context<'a> {
    net1: &'a Network,
    net2: &'a Network,
    spec: &'a PropertySpec,
    mode: Mode,
    solver: &'a dyn LpSolver,
}

impl Context<'_> {
    fn concrete(&self, sub: &SubProblem, x: &[f64]) -> Result<Option<Counterexample>> {
        let (x, v) = validate_candidate(self.net1, self.net2, self.spec, x, &sub.lower, &sub.upper)?;
        Ok(match v {
            Validation::Concrete { f1, f2, detail } => Some(Counterexample {
                input: x,
                f1_output: f1,
                f2_output: f2,
                detail,
            }),
            Validation::Spurious => None,
        })
    }

    fn process(&self, sub: &SubProblem) -> Result<Processed> {
        let z = box_to_zonotope(&sub.lower, &sub.upper)?;
        let (z_in, kept) = z.compress_input_generators_with_map();
        if kept.is_empty() {
            let outcome = match self.concrete(sub, &sub.lower)? {
                Some(c) => BoxOutcome::Violated(c),
                None => BoxOutcome::Safe,
            };
            return Ok(Processed { outcome, lp_calls: 0 });
        }

        let mut d1 = InfluenceTracker::new(kept.clone());
        let mut d2 = InfluenceTracker::new(kept);
        let mut tracking: Result<()> = Ok(());
        let state = reach_delta_observed(self.net1, self.net2, &z_in, self.mode, &mut |ev| {
            if tracking.is_ok() {
                tracking = match ev.side {
                    Side::First => record_event(&mut d1, GeneratorClass::F1Approx, ev),
                    Side::Second => record_event(&mut d2, GeneratorClass::F2Approx, ev),
                };
            }
        })?;
        tracking?;

        let out = check(self.spec, &state, &z_in, self.solver)?;
        let lp_calls = out.lp_calls as u64;
        if out.is_safe() {
            return Ok(Processed {
                outcome: BoxOutcome::Safe,
                lp_calls,
            });
        }
        if let Some(x) = &out.candidate_input {
            if let Some(c) = self.concrete(sub, x)? {
                return Ok(Processed {
                    outcome: BoxOutcome::Violated(c),
                    lp_calls,
                });
            }
        }
        if let Some(c) = self.concrete(sub, &sub.midpoint())? {
            return Ok(Processed {
                outcome: BoxOutcome::Violated(c),
                lp_calls,
            });
        }
        let dim = pick_split_dimension(&state, &d1, &d2, sub)?;
        Ok(Processed {
            outcome: BoxOutcome::Split(dim, out.excess),
            lp_calls,
        })
    }
}

struct Pending {
    sub: SubProblem,
    volume: f64,
    parent_excess: f64,
    seq: u64,
}

impl Pending {
    fn key(&self) -> (usize, f64, std::cmp::Reverse<u64>) {
        (self.sub.depth, self.parent_excess, std::cmp::Reverse(self.seq))
    }
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        let (d1, e1, s1) = self.key();
        let (d2, e2, s2) = other.key();
        d1.cmp(&d2).then(e1.total_cmp(&e2)).then(s1.cmp(&s2))
    }
}

pub fn verify(
    net1: &Network,
    net2: &Network,
    spec: &PropertySpec,
    lower: &[f64],
    upper: &[f64],
    budget: Budget,
    mode: Mode,
) -> Result<VerificationResult> {
    verify_with(net1, net2, spec, lower, upper, budget, mode, VerifyOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn verify_with(
    net1: &Network,
    net2: &Network,
    spec: &PropertySpec,
    lower: &[f64],
    upper: &[f64],
    budget: Budget,
    mode: Mode,
    options: VerifyOptions<'_>,
) -> Result<VerificationResult> {
    let started = Instant::now();
    spec.validate()?;
    budget.validate()?;
    if options.jobs == 0 {
        return Err(Error::input("jobs", "must be > 0"));
    }
    // Validates the box as a side effect.
    box_to_zonotope(lower, upper)?;
    if lower.len() != net1.input_dim() {
        return Err(Error::dim("query box", net1.input_dim(), lower.len()));
    }
    let (net1, net2) = pad_to_common_shape(net1, net2)?;
    let ctx = Context {
        net1: &net1,
        net2: &net2,
        spec,
        mode,
        solver: options.solver,
    };
    let root = SubProblem {
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        depth: 0,
    };
    let deadline = Duration::from_secs_f64(budget.timeout_s);

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Pending {
        sub: root.clone(),
        volume: 1.0,
        parent_excess: f64::INFINITY,
        seq,
    });
    let mut stats = Stats::default();
    let mut verified = 0.0;
    let mut leaves = Vec::new();
    let mut exhausted = false;

    'outer: while !heap.is_empty() {
        if started.elapsed() >= deadline {
            exhausted = true;
            break;
        }
        let batch: Vec<Pending> = (0..options.jobs).map_while(|_| heap.pop()).collect();
        let results: Vec<Result<Processed>> = if batch.len() == 1 {
            vec![ctx.process(&batch[0].sub)]
        } else {
            batch.par_iter().map(|p| ctx.process(&p.sub)).collect()
        };
        for (item, res) in batch.into_iter().zip(results) {
            let processed = res?;
            stats.lp_calls += processed.lp_calls;
            match processed.outcome {
                BoxOutcome::Safe => {
                    verified += item.volume;
                    if options.record_leaves {
                        leaves.push(item.sub);
                    }
                }
                BoxOutcome::Violated(cex) => {
                    stats.time_s = started.elapsed().as_secs_f64();
                    stats.verified_volume_fraction = verified;
                    log::info!("counterexample after {} splits: {}", stats.splits, cex.detail);
                    return VerificationResult::not_equivalent(&net1, &net2, spec, &root, cex, stats);
                }
                BoxOutcome::Split(dim, excess) => {
                    if stats.splits >= budget.max_splits {
                        exhausted = true;
                        break 'outer;
                    }
                    stats.splits += 1;
                    log::debug!("split depth {} along dim {dim} (excess {excess:.3e})", item.sub.depth);
                    let (a, b) = item.sub.split(dim);
                    for child in [a, b] {
                        seq += 1;
                        heap.push(Pending {
                            sub: child,
                            volume: 0.5 * item.volume,
                            parent_excess: excess,
                            seq,
                        });
                    }
                }
            }
        }
    }

    stats.time_s = started.elapsed().as_secs_f64();
    let status = if exhausted { Status::Unknown } else { Status::Equivalent };
    stats.verified_volume_fraction = if status == Status::Equivalent {
        1.0
    } else {
        verified.min(1.0)
    };
    Ok(VerificationResult {
        status,
        counterexample: None,
        stats,
        safe_leaves: leaves,
    })
}
