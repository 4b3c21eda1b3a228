mod bench;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use verydiff::io::{self, ResultRecord};
use verydiff::properties::{softmax_poly_error, softmax_sigmoid_error};
use verydiff::refine::{verify_with, Status, VerifyOptions};

/// Equivalence verification for pairs of feed-forward ReLU networks.
#[derive(Parser)]
#[command(name = "verydiff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify one query; exit 0 = EQUIVALENT, 1 = NOT_EQUIVALENT, 2 = UNKNOWN, 3 = error.
    Verify(VerifyArgs),
    /// Zero the hidden neurons with the smallest incoming weight norm.
    Prune(PruneArgs),
    /// Run a benchmark plan in both modes and write a CSV plus summary.
    Bench(bench::BenchArgs),
    /// Tabulate the softmax approximation errors over a confidence grid.
    SoftmaxError(SoftmaxArgs),
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    net1: PathBuf,
    #[arg(long)]
    net2: PathBuf,
    #[arg(long)]
    query: PathBuf,
    /// Overrides the query's property: epsilon, top1 or delta_top1.
    #[arg(long)]
    property: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// diff or naive.
    #[arg(long)]
    mode: Option<String>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    max_splits: Option<u64>,
    /// Sub-boxes processed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Result JSON destination; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SoftmaxArgs {
    /// Comma-separated class counts.
    #[arg(long, value_delimiter = ',', default_value = "3,5,10")]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    upsilon: f64,
    /// CSV destination; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_ERROR: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VERYDIFF_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Prune(a) => cmd_prune(a).map(|()| 0),
        Command::Bench(a) => bench::run(a).map(|()| 0),
        Command::SoftmaxError(a) => cmd_softmax_error(a).map(|()| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn exit_code(status: Status) -> u8 {
    match status {
        Status::Equivalent => 0,
        Status::NotEquivalent => 1,
        Status::Unknown => 2,
    }
}

fn cmd_verify(a: VerifyArgs) -> Result<u8, verydiff::Error> {
    let mut raw = io::load_raw_query(&a.query)?;
    if let Some(p) = a.property {
        if p != raw.property {
            raw.epsilon = None;
            raw.delta = None;
        }
        raw.property = p;
    }
    if let Some(e) = a.epsilon {
        raw.epsilon = Some(e);
    }
    if let Some(d) = a.delta {
        raw.delta = Some(d);
    }
    if a.mode.is_some() {
        raw.mode = a.mode;
    }
    if a.timeout.is_some() {
        raw.timeout_s = a.timeout;
    }
    if a.max_splits.is_some() {
        raw.max_splits = a.max_splits;
    }
    let query = raw.resolve()?;
    let net1 = io::load_network(&a.net1)?;
    let net2 = io::load_network(&a.net2)?;
    let options = VerifyOptions {
        jobs: a.jobs,
        ..VerifyOptions::default()
    };
    let result = verify_with(
        &net1,
        &net2,
        &query.property,
        &query.lower,
        &query.upper,
        query.budget,
        query.mode,
        options,
    )?;
    log::info!(
        "{} after {} splits, {} LP calls, {:.3}s",
        result.status.as_str(),
        result.stats.splits,
        result.stats.lp_calls,
        result.stats.time_s
    );
    let record = ResultRecord::from(&result);
    match &a.out {
        Some(path) => io::write_result(&record, path)?,
        None => print!("{}", io::result_to_json(&record)),
    }
    Ok(exit_code(result.status))
}

fn cmd_prune(a: PruneArgs) -> Result<(), verydiff::Error> {
    let net = io::load_network(&a.net)?;
    let pruned = net.prune_by_weight_norm(a.fraction)?;
    io::save_network(&pruned, &a.out)
}

/// `1 − δ` runs log-uniformly from 0.5 down to 1e−7.
pub fn delta_grid(points: usize) -> Vec<f64> {
    let (hi, lo) = (0.5f64.ln(), 1e-7f64.ln());
    (0..points)
        .map(|i| {
            let s = if points > 1 { i as f64 / (points - 1) as f64 } else { 0.0 };
            1.0 - (hi + s * (lo - hi)).exp()
        })
        .collect()
}

fn cmd_softmax_error(a: SoftmaxArgs) -> Result<(), verydiff::Error> {
    if let Some(&n) = a.n_list.iter().find(|&&n| n < 2) {
        return Err(verydiff::Error::Input {
            field: "n-list".into(),
            message: format!("class counts must be >= 2, got {n}"),
        });
    }
    let mut out = String::from("delta,n,eps_poly,eps_sig\n");
    let eps_sig_by_n: Vec<f64> = a
        .n_list
        .iter()
        .map(|&n| softmax_sigmoid_error(n, a.upsilon))
        .collect::<Result<_, _>>()?;
    for (&n, &eps_sig) in a.n_list.iter().zip(&eps_sig_by_n) {
        for delta in delta_grid(200) {
            let eps_poly = softmax_poly_error(n, delta)?;
            out.push_str(&format!("{delta},{n},{eps_poly},{eps_sig}\n"));
        }
    }
    match &a.out {
        Some(path) => std::fs::write(path, out).map_err(|source| verydiff::Error::Io {
            path: path.clone(),
            source,
        }),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}
