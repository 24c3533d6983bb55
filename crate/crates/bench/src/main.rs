use clap::{Args, Parser, Subcommand};
use smem_bench::config::{validate_config, ExperimentConfig, ExperimentName};
use smem_bench::experiments::{run_experiment, run_fit, FitRequest};
use smem_core::engine::mean_nll;
use smem_core::kernels::{LossFamily, PenaltyFamily};
use smem_core::linalg::{spectral_cond, DenseMatrix};
use smem_core::synth::{make_preset, make_preset_seeded, Dataset, PresetName};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Environment variable holding the default output root.
const OUT_ENV: &str = "BENCH_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "bench",
    about = "Benchmark harness for the scale-mixture EM optimizer",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ExpArgs {
    /// JSON config file; documented defaults apply when absent
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $BENCH_OUT_DIR/<experiment> or
    /// ./bench-out/<experiment>)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the dataset seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent method runs
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    /// Comma-separated CSV pair: <X.csv>,<y.csv>
    #[arg(long)]
    data: String,
    /// logistic | squared | check | hinge
    #[arg(long, default_value = "logistic")]
    loss: String,
    /// ridge | lasso | double-pareto
    #[arg(long, default_value = "ridge")]
    penalty: String,
    /// Effective ridge prior precision
    #[arg(long, default_value_t = 0.01)]
    rho: f64,
    /// Penalty scale τ (lasso, double-pareto)
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Quantile level for the check loss
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    /// Double-Pareto shape a
    #[arg(long, default_value_t = 1.0)]
    dp_a: f64,
    /// Double-Pareto weight γ
    #[arg(long, default_value_t = 1.0)]
    dp_gamma: f64,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Use the accelerated variant
    #[arg(long)]
    nesterov: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DatagenArgs {
    /// conv50 | cond500 | nesterov450 | highdim(P) | regpath | activeset
    #[arg(long)]
    preset: String,
    #[arg(long)]
    out: PathBuf,
    /// Override the preset's documented seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Convergence curves on the moderately conditioned preset
    Convergence(ExpArgs),
    /// Adam learning-rate sweep against the tuning-free reference
    Sensitivity(ExpArgs),
    /// Well- vs ill-conditioned comparison across methods
    Conditioning(ExpArgs),
    /// Acceleration study on the ill-conditioned preset
    Nesterov(ExpArgs),
    /// Dimension sweep against default and grid-tuned Adam
    Highdim(ExpArgs),
    /// Amortized regularization path vs individual fits
    Regpath(ExpArgs),
    /// Active-set shrinkage under the adaptive lasso penalty
    Activeset(ExpArgs),
    /// Adaptive weights and Adam second moments over iterations
    Weights(ExpArgs),
    /// Fit one model on a CSV dataset
    Fit(FitArgs),
    /// Generate a preset dataset as X.csv/y.csv/meta.json
    Datagen(DatagenArgs),
}

fn out_dir(cli_out: &Option<PathBuf>, leaf: &str) -> PathBuf {
    if let Some(dir) = cli_out {
        return dir.clone();
    }
    let root = std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("bench-out"));
    root.join(leaf)
}

fn load_config(args: &ExpArgs, experiment: ExperimentName) -> Result<ExperimentConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let cfg = validate_config(&text).map_err(|e| e.to_string())?;
            if cfg.experiment != experiment {
                return Err(format!(
                    "config names experiment `{}` but the `{}` command was invoked",
                    cfg.experiment, experiment
                ));
            }
            cfg
        }
        None => ExperimentConfig::default_for(experiment),
    };
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    Ok(cfg)
}

fn exec_experiment(args: &ExpArgs, experiment: ExperimentName) -> Result<(), String> {
    let cfg = load_config(args, experiment)?;
    let dir = out_dir(&args.out, &experiment.to_string());
    let files = run_experiment(&cfg, &dir, args.threads).map_err(|e| e.to_string())?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn parse_fit_request(args: &FitArgs) -> Result<FitRequest, String> {
    let loss = match args.loss.as_str() {
        "logistic" => LossFamily::Logistic,
        "squared" => LossFamily::Squared,
        "check" => {
            if !(0.0 < args.q && args.q < 1.0) {
                return Err("check loss needs --q in (0, 1)".into());
            }
            LossFamily::Check { q: args.q }
        }
        "hinge" => LossFamily::Hinge,
        other => return Err(format!("unknown loss `{other}`")),
    };
    let penalty = match args.penalty.as_str() {
        "ridge" => PenaltyFamily::Ridge { tau: args.tau },
        "lasso" => PenaltyFamily::Lasso { tau: args.tau },
        "double-pareto" => {
            PenaltyFamily::DoublePareto { tau: args.tau, a: args.dp_a, gamma: args.dp_gamma }
        }
        other => return Err(format!("unknown penalty `{other}`")),
    };
    Ok(FitRequest { loss, penalty, rho: args.rho, iterations: args.iters, nesterov: args.nesterov })
}

fn exec_fit(args: &FitArgs) -> Result<(), String> {
    let (x_path, y_path) = args
        .data
        .split_once(',')
        .ok_or("--data expects <X.csv>,<y.csv>")?;
    let data = Dataset::load(Path::new(x_path), Path::new(y_path)).map_err(|e| e.to_string())?;
    let req = parse_fit_request(args)?;
    let trace = run_fit(&data, &req).map_err(|e| e.to_string())?;
    let dir = out_dir(&args.out, "fit");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let method = if req.nesterov { "SM-EM+Nesterov" } else { "SM-EM" };
    let path = dir.join("trace_fit.csv");
    smem_bench::output::write_trace(&path, method, &trace).map_err(|e| e.to_string())?;
    println!(
        "{} n={} p={} iterations={} objective={:.9} nll={:.9}",
        method,
        data.n(),
        data.p(),
        trace.records.last().map(|r| r.iter).unwrap_or(0),
        trace.final_objective(),
        mean_nll(&data, req.loss, &trace.final_beta),
    );
    println!("{}", path.display());
    Ok(())
}

fn realized_cond(data: &Dataset) -> Result<f64, String> {
    let p = data.p();
    let mut g = DenseMatrix::zeros(p, p);
    for i in 0..data.n() {
        let row = data.x.row(i);
        for j in 0..p {
            for k in j..p {
                let v = g.get(j, k) + row[j] * row[k];
                g.set(j, k, v);
                if j != k {
                    g.set(k, j, v);
                }
            }
        }
    }
    spectral_cond(&g).map_err(|e| e.to_string())
}

fn exec_datagen(args: &DatagenArgs) -> Result<(), String> {
    let preset: PresetName =
        args.preset.parse().map_err(|e: smem_core::synth::SynthError| e.to_string())?;
    let data = match args.seed {
        Some(seed) => make_preset_seeded(preset, seed),
        None => make_preset(preset),
    }
    .map_err(|e| e.to_string())?;
    let cond = realized_cond(&data)?;
    data.save(&args.out, Some(cond)).map_err(|e| e.to_string())?;
    println!(
        "wrote {}/{{X.csv,y.csv,meta.json}}  n={} p={} target_cond={} realized_cond_xtx={:.3}",
        args.out.display(),
        data.n(),
        data.p(),
        data.target_cond,
        cond
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Convergence(a) => exec_experiment(a, ExperimentName::Convergence),
        Cmd::Sensitivity(a) => exec_experiment(a, ExperimentName::Sensitivity),
        Cmd::Conditioning(a) => exec_experiment(a, ExperimentName::Conditioning),
        Cmd::Nesterov(a) => exec_experiment(a, ExperimentName::Nesterov),
        Cmd::Highdim(a) => exec_experiment(a, ExperimentName::Highdim),
        Cmd::Regpath(a) => exec_experiment(a, ExperimentName::Regpath),
        Cmd::Activeset(a) => exec_experiment(a, ExperimentName::Activeset),
        Cmd::Weights(a) => exec_experiment(a, ExperimentName::Weights),
        Cmd::Fit(a) => exec_fit(a),
        Cmd::Datagen(a) => exec_datagen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
