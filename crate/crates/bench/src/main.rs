use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gges::aggregation::Prior;
use gges::io::{write_edge_list, write_matrix_csv, write_trace_csv};
use gges_bench::config::{Estimator, ExperimentConfig, ModelKind, SMatrix};
use gges_bench::ingest::{ingest_csv, IngestOptions, Transform};
use gges_bench::pipeline::{run_estimator, run_pipeline, simulate, stream_rng};
use gges_bench::report::{aggregate_rows, emit_report, write_report, Format};

#[derive(Parser)]
#[command(name = "gges-bench", version, about = "Exponential screening for Gaussian graphical models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one synthetic dataset and write it with its ground truth.
    Simulate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Replication index whose random stream is used.
        #[arg(long, default_value_t = 0)]
        replication: usize,
    },
    /// Run one estimator on a data CSV.
    Estimate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Data file, rows = samples.
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// MH trace CSV (gES only).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Full simulation study: every replication and estimator.
    Benchmark {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Report file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Read a numeric CSV and write the transformed matrix.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "none")]
        transform: Transform,
        #[arg(long)]
        standardize: bool,
        #[arg(long)]
        no_center: bool,
        /// Treat the first row as a header (auto-detected by default).
        #[arg(long)]
        header: Option<bool>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML file of `key = value` settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    prob: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of ges, glasso, pcortest.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<Estimator>>,
    #[arg(long)]
    prior: Option<Prior>,
    #[arg(long)]
    s_matrix: Option<SMatrix>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.model {
            cfg.model = v;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.p {
            cfg.p = v;
        }
        if let Some(v) = self.prob {
            cfg.prob = Some(v);
        }
        if let Some(v) = self.reps {
            cfg.replications = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.estimators {
            cfg.estimators = v.clone();
        }
        if let Some(v) = self.prior {
            cfg.prior = v;
        }
        if let Some(v) = self.s_matrix {
            cfg.s_matrix = v;
        }
        if let Some(v) = self.burn_in {
            cfg.burn_in = v;
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    Ok(())
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &Path, replication: usize) -> Result<()> {
    fs::create_dir_all(out)?;
    let (truth, x) = simulate(cfg, replication)?;
    write_with(&out.join("data.csv"), |w| write_matrix_csv(w, &x))?;
    write_with(&out.join("precision.csv"), |w| write_matrix_csv(w, &truth.precision))?;
    write_with(&out.join("covariance.csv"), |w| write_matrix_csv(w, &truth.covariance))?;
    write_with(&out.join("edges.txt"), |w| write_edge_list(w, &truth.adjacency, &truth.precision))?;
    Ok(())
}

fn cmd_estimate(cfg: &ExperimentConfig, input: &Path, out: &Path, trace: Option<&Path>) -> Result<()> {
    let est = match cfg.estimator_list().as_slice() {
        [one] => *one,
        _ => bail!("estimate runs exactly one estimator; pass --estimators ges|glasso|pcortest"),
    };
    let x = ingest_csv(input, &IngestOptions { center: false, ..Default::default() })?;
    let mut rng = stream_rng(cfg.seed, 0, est.stream_tag());
    let output = run_estimator(est, &x, cfg, &mut rng)?;
    fs::create_dir_all(out)?;
    write_with(&out.join("precision.csv"), |w| write_matrix_csv(w, &output.theta))?;
    write_with(&out.join("edges.txt"), |w| write_edge_list(w, &output.edges, &output.theta))?;
    let diag = serde_json::to_string_pretty(&output.diagnostics)?;
    fs::write(out.join("diagnostics.json"), diag + "\n")?;
    if let Some(path) = trace {
        match &output.aggregation {
            Some(agg) => write_with(path, |w| write_trace_csv(w, &agg.trace))?,
            None => log::warn!("--trace ignored: {} has no chain", est.name()),
        }
    }
    Ok(())
}

fn cmd_benchmark(cfg: &ExperimentConfig, out: Option<&Path>, format: Format) -> Result<ExitCode> {
    let mut rows = run_pipeline(cfg)?;
    let total = rows.len();
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    rows.extend(aggregate_rows(&rows));
    match out {
        Some(path) => emit_report(&rows, format, path)?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_report(&mut lock, &rows, format)?;
            lock.flush()?;
        }
    }
    if 2 * failed > total {
        log::error!("{failed} of {total} estimator runs failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_ingest(input: &Path, out: Option<&Path>, opts: &IngestOptions) -> Result<()> {
    let x = ingest_csv(input, opts)?;
    match out {
        Some(path) => write_with(path, |w| write_matrix_csv(w, &x)),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_matrix_csv(&mut lock, &x)?;
            Ok(lock.flush()?)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { exp, out, replication } => cmd_simulate(&exp.resolve()?, &out, replication)?,
        Command::Estimate { exp, input, out, trace } => cmd_estimate(&exp.resolve()?, &input, &out, trace.as_deref())?,
        Command::Benchmark { exp, out, format } => return cmd_benchmark(&exp.resolve()?, out.as_deref(), format),
        Command::Ingest { input, out, transform, standardize, no_center, header } => {
            let opts = IngestOptions { center: !no_center, standardize, transform, has_header: header };
            cmd_ingest(&input, out.as_deref(), &opts)?
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
