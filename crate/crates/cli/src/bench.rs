//! Benchmark harness: every (pair, property, box) cell is verified in both
//! modes, rows go to the bench CSV and a summary compares the modes on the
//! cells both of them solved.

use std::path::{Path, PathBuf};

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use verydiff::io::{self, BenchRow, RawInput, RawQuery};
use verydiff::refine::{verify, Budget};
use verydiff::{Error, Mode, Network, Result};

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Summary JSON destination; defaults to `<out>.summary.json`.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Seed for randomly generated plan networks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cells verified concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomNetworkSpec {
    pub name: String,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyEntry {
    pub property: String,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
}

/// Either an explicit box or the same `[center − radius, center + radius]` on every dimension.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BoxEntry {
    Uniform { center: f64, radius: f64 },
    Explicit(RawInput),
}

impl BoxEntry {
    fn resolve(&self, dim: usize) -> RawInput {
        match self {
            BoxEntry::Uniform { center, radius } => RawInput {
                center: Some(vec![*center; dim]),
                radius: Some(vec![*radius; dim]),
                ..RawInput::default()
            },
            BoxEntry::Explicit(r) => r.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchPlan {
    /// Network JSON paths, relative to the plan file.
    #[serde(default)]
    pub networks: Vec<PathBuf>,
    /// Networks drawn from `--seed`, appended after `networks`.
    #[serde(default)]
    pub random_networks: Vec<RandomNetworkSpec>,
    pub pruning: Vec<f64>,
    pub properties: Vec<PropertyEntry>,
    pub boxes: Vec<BoxEntry>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_splits")]
    pub max_splits: u64,
}

fn default_timeout() -> f64 {
    Budget::default().timeout_s
}

fn default_splits() -> u64 {
    Budget::default().max_splits
}

struct Cell {
    query_id: String,
    net1: usize,
    net2: usize,
    property: PropertyEntry,
    input: RawInput,
    mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: usize,
    pub solved_diff: usize,
    pub solved_naive: usize,
    pub commonly_solved: usize,
    /// Median of naive time over diff time on commonly solved cells.
    pub median_time_speedup: Option<f64>,
    /// Median of `(naive splits + 1) / (diff splits + 1)` on the same cells.
    pub median_split_ratio: Option<f64>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn solved(row: &BenchRow) -> bool {
    row.status == "EQUIVALENT" || row.status == "NOT_EQUIVALENT"
}

fn by_mode<'a>(rows: &'a [BenchRow], mode: &'static str) -> impl Iterator<Item = &'a BenchRow> + 'a {
    rows.iter().filter(move |r| r.mode == mode)
}

pub fn summarize(rows: &[BenchRow]) -> Summary {
    let mut speedups = Vec::new();
    let mut split_ratios = Vec::new();
    for d in by_mode(rows, "diff").filter(|r| solved(r)) {
        if let Some(n) = by_mode(rows, "naive").find(|r| r.query_id == d.query_id && solved(r)) {
            speedups.push(n.time_s / d.time_s.max(1e-9));
            split_ratios.push((n.splits as f64 + 1.0) / (d.splits as f64 + 1.0));
        }
    }
    Summary {
        rows: rows.len(),
        solved_diff: by_mode(rows, "diff").filter(|r| solved(r)).count(),
        solved_naive: by_mode(rows, "naive").filter(|r| solved(r)).count(),
        commonly_solved: speedups.len(),
        median_time_speedup: median(speedups),
        median_split_ratio: median(split_ratios),
    }
}

fn load_plan(path: &Path) -> Result<BenchPlan> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: format!("bench plan {}", path.display()),
        message: e.to_string(),
    })
}

fn base_networks(plan: &BenchPlan, plan_dir: &Path, seed: u64) -> Result<Vec<Network>> {
    let mut nets = Vec::new();
    for p in &plan.networks {
        nets.push(io::load_network(plan_dir.join(p))?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in &plan.random_networks {
        nets.push(Network::random(r.name.clone(), r.input_dim, &r.hidden, r.output_dim, &mut rng));
    }
    Ok(nets)
}

fn run_cell(nets: &[Network], cell: &Cell, budget: Budget) -> BenchRow {
    let (n1, n2) = (&nets[cell.net1], &nets[cell.net2]);
    let param = cell.property.epsilon.or(cell.property.delta);
    let mut row = BenchRow {
        query_id: cell.query_id.clone(),
        net1: n1.name.clone(),
        net2: n2.name.clone(),
        property: cell.property.property.clone(),
        param,
        mode: cell.mode.as_str().into(),
        status: "ERROR".into(),
        splits: 0,
        lp_calls: 0,
        time_s: 0.0,
    };
    let raw = RawQuery {
        property: cell.property.property.clone(),
        epsilon: cell.property.epsilon,
        delta: cell.property.delta,
        input: cell.input.clone(),
        timeout_s: Some(budget.timeout_s),
        max_splits: Some(budget.max_splits),
        mode: Some(cell.mode.as_str().into()),
    };
    let outcome = raw
        .resolve()
        .and_then(|q| verify(n1, n2, &q.property, &q.lower, &q.upper, q.budget, q.mode));
    match outcome {
        Ok(r) => {
            row.status = r.status.as_str().into();
            row.splits = r.stats.splits;
            row.lp_calls = r.stats.lp_calls;
            row.time_s = r.stats.time_s;
        }
        Err(e) => log::error!("{}: {e}", cell.query_id),
    }
    row
}

pub fn run(a: BenchArgs) -> Result<()> {
    if a.jobs == 0 {
        return Err(Error::Input {
            field: "jobs".into(),
            message: "must be > 0".into(),
        });
    }
    let plan = load_plan(&a.plan)?;
    let plan_dir = a.plan.parent().unwrap_or(Path::new("."));
    let budget = Budget {
        timeout_s: plan.timeout_s,
        max_splits: plan.max_splits,
    };
    budget.validate()?;

    let mut nets = base_networks(&plan, plan_dir, a.seed)?;
    let mut pairs = Vec::new();
    for base in 0..nets.len() {
        for &fraction in &plan.pruning {
            let pruned = nets[base].prune_by_weight_norm(fraction)?;
            nets.push(pruned);
            pairs.push((base, nets.len() - 1));
        }
    }

    let mut cells = Vec::new();
    for (pi, &(n1, n2)) in pairs.iter().enumerate() {
        for (qi, prop) in plan.properties.iter().enumerate() {
            for (bi, b) in plan.boxes.iter().enumerate() {
                for mode in [Mode::Diff, Mode::Naive] {
                    cells.push(Cell {
                        query_id: format!("p{pi}-q{qi}-b{bi}"),
                        net1: n1,
                        net2: n2,
                        property: prop.clone(),
                        input: b.resolve(nets[n1].input_dim()),
                        mode,
                    });
                }
            }
        }
    }
    log::info!("{} pairs, {} cells", pairs.len(), cells.len());

    let rows: Vec<BenchRow> = if a.jobs == 1 {
        cells.iter().map(|c| run_cell(&nets, c, budget)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(a.jobs)
            .build()
            .map_err(|e| Error::Internal(e.to_string()))?;
        pool.install(|| cells.par_iter().map(|c| run_cell(&nets, c, budget)).collect())
    };
    io::write_bench_csv(&rows, &a.out)?;

    let summary = summarize(&rows);
    let summary_path = a.summary.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".summary.json");
        PathBuf::from(p)
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    std::fs::write(&summary_path, text).map_err(|source| Error::Io {
        path: summary_path.clone(),
        source,
    })?;
    eprintln!(
        "solved: diff {} / naive {} of {} cells each; median speedup {}; median split ratio {}",
        summary.solved_diff,
        summary.solved_naive,
        rows.len() / 2,
        summary.median_time_speedup.map_or("n/a".into(), |v| format!("{v:.2}")),
        summary.median_split_ratio.map_or("n/a".into(), |v| format!("{v:.2}")),
    );
    Ok(())
}
