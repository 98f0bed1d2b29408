use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use satlab_cli::commands::{self, SPLITS};
use satlab_cli::ExperimentConfig;
use satlab_core::gnn::Variant;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "satlab",
    version,
    about = "Random 3-SAT generation, graph-network classification and annealing experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataFlags {
    #[arg(long)]
    num_vars: Option<usize>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    val: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
}

#[derive(Args)]
struct ModelFlags {
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    state_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    compress_edge_labels: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    penalty_weight: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build balanced train/val/test datasets.
    Gen {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataFlags,
    },
    /// Train a graph network on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory; defaults to --out.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        model: ModelFlags,
        /// Continue from the checkpoint in --out.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test", value_parser = SPLITS)]
        split: String,
        #[arg(long)]
        compress_edge_labels: bool,
    },
    /// Empirical SAT fraction against clause/variable ratio.
    PhaseSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        num_vars: Option<usize>,
        /// Comma-separated ratios.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Annealing solver miss rate against problem size.
    AnnealSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated variable counts.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        ratio: Option<f64>,
        /// Satisfiable instances per size.
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    match s.to_ascii_lowercase().as_str() {
        "linear" => Ok(Variant::Linear),
        "nonlinear" => Ok(Variant::Nonlinear),
        _ => Err(format!("unknown variant {s:?}; expected linear or nonlinear")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn base_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    set(&mut cfg.seed, common.seed);
    Ok(cfg)
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        // A closed pipe (e.g. `| head`) is not a failure of the command.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen { common, data } => {
            let mut cfg = base_config(&common)?;
            let d = &mut cfg.data;
            set(&mut d.num_vars, data.num_vars);
            set(&mut d.ratio, data.ratio);
            set(&mut d.train, data.train);
            set(&mut d.val, data.val);
            set(&mut d.test, data.test);
            print_json(&commands::cmd_gen(&cfg, &common.out)?)
        }
        Command::Train { common, data, model, resume } => {
            let mut cfg = base_config(&common)?;
            let m = &mut cfg.model;
            set(&mut m.variant, model.variant);
            set(&mut m.state_dim, model.state_dim);
            set(&mut m.hidden_dim, model.hidden_dim);
            set(&mut m.mu, model.mu);
            m.compress_edge_labels |= model.compress_edge_labels;
            let t = &mut cfg.training;
            set(&mut t.epochs, model.epochs);
            set(&mut t.penalty_weight, model.penalty_weight);
            set(&mut t.fixed_point.max_iterations, model.max_iterations);
            set(&mut t.fixed_point.tolerance, model.tolerance);
            let data = data.unwrap_or_else(|| common.out.clone());
            let record = commands::cmd_train(&cfg, &data, &common.out, resume)?;
            print_json(&record.metrics)
        }
        Command::Eval { common, data, checkpoint, split, compress_edge_labels } => {
            let mut cfg = base_config(&common)?;
            cfg.model.compress_edge_labels |= compress_edge_labels;
            print_json(&commands::cmd_eval(&cfg, &data, &checkpoint, &split, &common.out)?)
        }
        Command::PhaseSweep { common, num_vars, ratios, samples } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.phase.num_vars, num_vars);
            set(&mut cfg.phase.ratios, ratios);
            set(&mut cfg.phase.samples, samples);
            print_json(&commands::cmd_phase_sweep(&cfg, &common.out)?)
        }
        Command::AnnealSweep { common, sizes, ratio, instances, restarts, steps } => {
            let mut cfg = base_config(&common)?;
            let a = &mut cfg.anneal;
            set(&mut a.sizes, sizes);
            set(&mut a.ratio, ratio);
            set(&mut a.instances, instances);
            set(&mut a.solver.restarts, restarts);
            set(&mut a.solver.steps, steps);
            print_json(&commands::cmd_anneal_sweep(&cfg, &common.out)?)
        }
    }
}

#[derive(Serialize)]
struct ErrorReport {
    error: String,
    causes: Vec<String>,
}

fn fail(report: ErrorReport, code: u8) -> ExitCode {
    let json = serde_json::to_string(&report).unwrap_or_else(|_| format!("{{\"error\":{:?}}}", report.error));
    eprintln!("{json}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(ErrorReport { error: e.kind().to_string(), causes: vec![e.to_string()] }, 2),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            fail(ErrorReport { error: e.to_string(), causes: e.chain().skip(1).map(|c| c.to_string()).collect() }, 1)
        }
    }
}
