use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sdnn::data::load_idx;
use sdnn::experiment::{execute_run, run_sweep, RunConfig, SweepSpec};
use sdnn::ght::{ght_solve, planted_instance, write_trace_csv, GhtConfig, LeastSquares, Matrix};
use sdnn::model_io::{decode_bitmask, load_checkpoint, Checkpoint};
use sdnn::nn::{evaluate, Architecture};
use sdnn::{Dataset64, Network};

#[derive(Parser)]
#[command(name = "sdnn", version, about = "Sparse networks by iterative hard thresholding")]
struct Cli {
    /// Seed for every random choice; overrides the seed in a run config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum concurrent runs in a sweep.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sparse least squares by gradient hard thresholding.
    Ght(GhtArgs),
    /// One training run from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Accuracy-versus-sparsity sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated, strictly increasing ratios in [0, 1).
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 0.9])]
        ratios: Vec<f64>,
    },
    /// Re-encode a checkpoint in bitmask form, optionally pruning it first.
    Compress {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to `<out>/<input stem>.sdnn`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Keep the largest `(1 − ratio)` fraction of each layer's weights.
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Accuracy of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Per-layer nonzero counts and the size report of a checkpoint.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Args)]
struct GhtArgs {
    /// Matrix file: "rows cols" then the entries row by row.
    #[arg(long, requires = "rhs")]
    matrix: Option<PathBuf>,
    /// Right-hand side: whitespace-separated numbers.
    #[arg(long, requires = "matrix")]
    rhs: Option<PathBuf>,
    /// Sparsity budget (defaults to the planted sparsity).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 40)]
    rows: usize,
    #[arg(long, default_value_t = 20)]
    cols: usize,
    /// Nonzeros of the planted solution.
    #[arg(long, default_value_t = 3)]
    sparsity: usize,
    /// Step size; defaults to 1/L with L estimated by power iteration.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Run config supplying the architecture and the dataset (test split if present).
    #[arg(long, conflicts_with_all = ["arch", "images", "labels"])]
    config: Option<PathBuf>,
    #[arg(long, requires_all = ["images", "labels"])]
    arch: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split_whitespace()
        .enumerate()
        .map(|(i, t)| {
            t.parse::<f64>()
                .with_context(|| format!("{}: entry {i} {t:?} is not a number", path.display()))
        })
        .collect()
}

fn cmd_ght(cli: &Cli, a: &GhtArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let (obj, x_star, k) = match (&a.matrix, &a.rhs) {
        (Some(m), Some(r)) => {
            let Some(k) = a.k else {
                bail!("--k is required with --matrix");
            };
            let matrix = Matrix::<f64>::read_text(m)?;
            (LeastSquares::new(matrix, read_vector(r)?)?, None, k)
        }
        _ => {
            let inst = planted_instance::<f64>(a.rows, a.cols, a.sparsity, seed);
            let k = a.k.unwrap_or(a.sparsity);
            (LeastSquares::new(inst.a, inst.b)?, Some(inst.x_star), k)
        }
    };
    let mut cfg = GhtConfig::new(k).with_max_iterations(a.max_iterations);
    if let Some(eta) = a.step {
        cfg = cfg.with_step_size(eta);
    }
    let rep = ght_solve(&obj, &cfg)?;
    for w in &rep.warnings {
        log::warn!("{w}");
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let trace_path = cli.out.join("ght_trace.csv");
    let file = std::fs::File::create(&trace_path).with_context(|| format!("creating {}", trace_path.display()))?;
    write_trace_csv(&rep.trace, file)?;
    let error_inf = x_star.as_ref().map(|xs| {
        xs.iter()
            .zip(&rep.state.x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    });
    print_json(&json!({
        "k": k,
        "iterations": rep.state.iteration,
        "converged": rep.converged,
        "objective": rep.state.objective,
        "support": rep.state.support,
        "x": rep.state.x,
        "error_inf": error_inf,
        "trace": trace_path,
    }))
}

fn load_config(cli: &Cli, path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(cli: &Cli, config: &Path) -> Result<()> {
    let cfg = load_config(cli, config)?;
    let arch = cfg.architecture()?;
    let (train, test) = cfg.load_data::<f64>()?;
    let run = execute_run(&cfg, &arch, &train, test.as_ref(), Some(&cli.out))?;
    let m = &run.trained.metrics;
    print_json(&json!({
        "status": m.status,
        "epochs": m.epochs_completed,
        "final_train_accuracy": m.final_train.as_ref().map(|e| e.accuracy),
        "final_test_accuracy": m.final_test.as_ref().map(|e| e.accuracy),
        "final_nonzeros": m.final_nonzeros,
        "final_budgets": m.final_budgets,
        "bitmask_bytes": run.size.bitmask_bytes,
        "dense_bytes": run.size.dense_bytes,
        "out": cli.out,
    }))
}

fn cmd_sweep(cli: &Cli, config: &Path, ratios: &[f64]) -> Result<()> {
    let cfg = load_config(cli, config)?;
    let (train, test) = cfg.load_data::<f64>()?;
    let spec = SweepSpec {
        ratios: ratios.to_vec(),
        config: cfg,
        out: Some(cli.out.clone()),
    };
    let rows = run_sweep(&spec, &train, test.as_ref(), cli.jobs)?;
    let failed = rows.iter().filter(|r| r.outcome != "completed").count();
    for r in &rows {
        eprintln!("ratio {:.3}: {}", r.ratio, r.outcome);
    }
    print_json(&json!({
        "csv": cli.out.join("sweep.csv"),
        "runs": rows.len(),
        "not_completed": failed,
    }))
}

fn cmd_compress(cli: &Cli, input: &Path, output: Option<&Path>, ratio: Option<f64>) -> Result<()> {
    let mut ck: Checkpoint<f64> = load_checkpoint(input)?;
    if let Some(r) = ratio {
        if !(0.0..1.0).contains(&r) {
            bail!("ratio {r} not in [0, 1)");
        }
        for layer in ck.layers.iter_mut().filter(|l| !l.weights.is_empty()) {
            let (k, _) = sdnn::iht::budget(r, layer.weights.len());
            sdnn::ght::hard_threshold_in_place(&mut layer.weights, k)?;
        }
    }
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => {
            let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
            let stem = stem.strip_suffix(".dense").unwrap_or(stem);
            cli.out.join(format!("{stem}.{}", sdnn::model_io::FILE_EXTENSION))
        }
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let bytes = ck.encode_bitmask();
    std::fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    let rep = ck.size_report();
    print_json(&json!({ "output": path, "size": rep }))
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let (arch, data): (Architecture, Dataset64) = match &a.config {
        Some(c) => {
            let cfg = load_config(cli, c)?;
            let (train, test) = cfg.load_data()?;
            (cfg.architecture()?, test.unwrap_or(train))
        }
        None => {
            let (Some(arch), Some(i), Some(l)) = (&a.arch, &a.images, &a.labels) else {
                bail!("eval needs --config or all of --arch, --images, --labels");
            };
            (Architecture::load(arch)?, load_idx(i, l)?)
        }
    };
    let model: Network = load_checkpoint(&a.model)?.into_model(&arch)?;
    let e = evaluate(&model, &data)?;
    print_json(&serde_json::to_value(e)?)
}

fn cmd_inspect(model: &Path) -> Result<()> {
    let bytes = std::fs::read(model).with_context(|| format!("reading {}", model.display()))?;
    let ck = decode_bitmask::<f64>(&bytes)?;
    let layers: Vec<_> = ck
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            json!({
                "layer": i,
                "kind_tag": l.kind_tag,
                "shape": l.weight_shape,
                "parameters": l.weights.len(),
                "nonzeros": l.weights.iter().filter(|v| **v != 0.0).count(),
                "bias": l.bias.len(),
            })
        })
        .collect();
    print_json(&json!({
        "file_bytes": bytes.len(),
        "layers": layers,
        "size": ck.size_report(),
    }))
}

fn run(cli: &Cli) -> Result<()> {
    if cli.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    match &cli.command {
        Command::Ght(a) => cmd_ght(cli, a),
        Command::Train { config } => cmd_train(cli, config),
        Command::Sweep { config, ratios } => cmd_sweep(cli, config, ratios),
        Command::Compress { input, output, ratio } => cmd_compress(cli, input, output.as_deref(), *ratio),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Inspect { model } => cmd_inspect(model),
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    e.chain()
        .find_map(|c| c.downcast_ref::<sdnn::Error>().map(sdnn::Error::kind))
        .or_else(|| {
            e.chain().find_map(|c| {
                if c.is::<sdnn::data::DataError>() {
                    Some("data")
                } else if c.is::<sdnn::model_io::CodecError>() {
                    Some("codec")
                } else if c.is::<sdnn::ght::GhtError>() || c.is::<sdnn::ght::NonFiniteError>() {
                    Some("ght")
                } else if c.is::<sdnn::ght::MatrixError>() {
                    Some("matrix")
                } else if c.is::<sdnn::nn::NnError>() {
                    Some("network")
                } else if c.is::<std::io::Error>() {
                    Some("io")
                } else {
                    None
                }
            })
        })
        .unwrap_or("usage")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let message = e.render().to_string();
            eprintln!("{}", json!({ "error": "usage", "message": message.trim_end() }));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = json!({ "error": error_kind(&e), "message": format!("{e:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
