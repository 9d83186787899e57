use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rc_koopman::diagnostics::{self, DEFAULT_ALPHA_FLOOR};
use rc_koopman::experiment::{fit, generate_dataset, load_trajectories, run_benchmark};
use rc_koopman::io::write_atomic;
use rc_koopman::koopman::Spectrum;
use rc_koopman::{
    AcfMode, ConditioningReport, Dictionary, Error, ExperimentConfig, Extended, KoopmanModel, Method, RhoChoice,
    SystemKind, TrajectoryData,
};

#[derive(Parser)]
#[command(
    name = "rckoop",
    version,
    about = "Reservoir-computing Koopman identification and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate training and test trajectories.
    Generate(#[command(flatten)] ExpArgs),
    /// Fit a lifted linear model to trajectory files.
    Identify {
        /// Training trajectories (.json container or .csv).
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        /// Where to write the model; defaults to `<output-dir>/<system>_<method>_model.json`.
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Report conditioning, spectrum and test error of a model.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
        /// Test trajectories (.json container or .csv).
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// CSV of measured, one-step and rollout outputs for the first test trajectory.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = rc_koopman::reservoir::DEFAULT_EPSILON)]
        epsilon: f64,
    },
    /// Choose a reservoir spectral radius from the output autocorrelation.
    SelectRho {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        max_lag: Option<usize>,
        #[arg(long, default_value_t = (-1.0f64).exp())]
        threshold: f64,
        /// Subtract the mean before correlating.
        #[arg(long)]
        centered: bool,
        #[arg(long)]
        json: bool,
    },
    /// Run all methods on both systems and write tables and figure data.
    Benchmark(#[command(flatten)] ExpArgs),
}

#[derive(Args, Default)]
struct ExpArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    system: Option<SystemKind>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    lift_dim: Option<usize>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    train_len: Option<usize>,
    #[arg(long)]
    train_trajectories: Option<usize>,
    #[arg(long)]
    test_len: Option<usize>,
    #[arg(long)]
    test_trajectories: Option<usize>,
    #[arg(long)]
    washout: Option<usize>,
    /// `auto` or a positive number.
    #[arg(long)]
    rho: Option<RhoChoice>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    input_scaling: Option<f64>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    rbf_width_factor: Option<f64>,
    #[arg(long)]
    input_hold: Option<usize>,
    #[arg(long)]
    max_lag: Option<usize>,
    #[arg(long)]
    centered: bool,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

impl ExpArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                ExperimentConfig::from_json(&text).with_context(|| format!("config {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(
            system,
            method,
            lift_dim,
            ridge,
            seed,
            seeds,
            train_len,
            train_trajectories,
            test_len,
            test_trajectories,
            washout,
            rho,
            epsilon,
            input_scaling,
            density,
            rbf_width_factor,
            input_hold
        );
        if self.max_lag.is_some() {
            cfg.max_lag = self.max_lag;
        }
        if self.centered {
            cfg.acf_mode = AcfMode::Centered;
        }
        if self.output_dir.is_some() {
            cfg.output_dir = self.output_dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output_dir(cfg: &ExperimentConfig, default: &str) -> PathBuf {
    cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn load_all(paths: &[PathBuf]) -> anyhow::Result<Vec<TrajectoryData<f64>>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(load_trajectories(p).with_context(|| format!("loading trajectories from {}", p.display()))?);
    }
    if out.is_empty() {
        bail!(Error::Input("no trajectories loaded".into()));
    }
    Ok(out)
}

fn write(path: &Path, body: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(Error::from)
            .with_context(|| format!("creating {}", dir.display()))?;
    }
    write_atomic(path, body.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn cmd_generate(args: &ExpArgs) -> anyhow::Result<()> {
    let cfg = args.resolve()?;
    let dir = output_dir(&cfg, "data");
    let data = generate_dataset(cfg.system, &cfg, cfg.seed).context("generating trajectories")?;
    let name = cfg.system.name();
    for (split, trajs) in [("train", &data.train), ("test", &data.test)] {
        for (i, t) in trajs.iter().enumerate() {
            let path = dir.join(format!("{name}_{split}_{i:02}.csv"));
            write(&path, &t.to_csv())?;
            println!("{}", path.display());
        }
        let path = dir.join(format!("{name}_{split}.json"));
        write(&path, &serde_json::to_string_pretty(trajs).map_err(Error::from)?)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_identify(data: &[PathBuf], model_out: Option<&Path>, args: &ExpArgs) -> anyhow::Result<()> {
    let cfg = args.resolve()?;
    let train = load_all(data)?;
    let (model, selection, train_nrmse) =
        fit(cfg.method, &train, &cfg, cfg.seed).with_context(|| format!("identifying {} model", cfg.method))?;
    let system = train[0].system.clone();
    let system = if system.is_empty() {
        cfg.system.name().to_string()
    } else {
        system
    };
    let path = match model_out {
        Some(p) => p.to_path_buf(),
        None => output_dir(&cfg, "models").join(format!("{system}_{}_model.json", cfg.method)),
    };
    write(&path, &model.to_json()?)?;
    println!("model: {}", path.display());
    println!("method: {}", cfg.method);
    println!("lift_dim: {}", model.lift_dim());
    if let Some(Dictionary::Hankel { delays, .. }) = model.dictionary() {
        println!("delays: {delays}");
    }
    if let Some(sel) = &selection {
        println!("rho: {}", sel.rho);
        println!("tau_c: {}", sel.tau_c);
    }
    println!("train_nrmse: {train_nrmse:e}");
    println!("unstable_eigenvalues: {}", model.spectrum().unstable_count);
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryFit {
    onestep_nrmse: f64,
    rollout_nrmse: f64,
    diverged_at: Option<usize>,
}

#[derive(Serialize)]
struct DiagnoseReport {
    conditioning: ConditioningReport<f64>,
    spectrum: Spectrum<f64>,
    lifetimes: Vec<Extended<f64>>,
    tau_eps: Option<Extended<f64>>,
    test_nrmse: f64,
    test_samples: usize,
    per_trajectory: Vec<TrajectoryFit>,
}

fn cmd_diagnose(
    model_path: &Path,
    data: &[PathBuf],
    report: Option<&Path>,
    trace: Option<&Path>,
    epsilon: f64,
) -> anyhow::Result<()> {
    let text = fs::read_to_string(model_path)
        .map_err(Error::from)
        .with_context(|| format!("reading model {}", model_path.display()))?;
    let model =
        KoopmanModel::<f64>::from_json(&text).with_context(|| format!("parsing model {}", model_path.display()))?;
    let dictionary = model
        .dictionary()
        .ok_or_else(|| Error::Parse("model file carries no dictionary".into()))?;
    let test = load_all(data)?;
    if let Some(t) = test
        .iter()
        .find(|t| t.output_dim() != model.output_dim() || t.input_dim() != model.input_dim())
    {
        bail!(Error::Shape(format!(
            "data has n_y={}, n_u={}; model expects n_y={}, n_u={}",
            t.output_dim(),
            t.input_dim(),
            model.output_dim(),
            model.input_dim()
        )));
    }
    let mut per_trajectory = Vec::with_capacity(test.len());
    for (i, t) in test.iter().enumerate() {
        let rec = model.reconstruct(&dictionary.lift(t)?)?;
        if i == 0 {
            if let Some(path) = trace {
                write(path, &rec.to_csv())?;
            }
        }
        per_trajectory.push(TrajectoryFit {
            onestep_nrmse: rec.onestep_nrmse,
            rollout_nrmse: rec.rollout_nrmse,
            diverged_at: rec.diverged_at,
        });
    }
    let snaps = dictionary.lift_all(&test).context("lifting test data")?;
    let evaluation = model.evaluate_onestep(&snaps)?;
    let tau_eps = match dictionary {
        Dictionary::Reservoir { reservoir, .. } => Some(reservoir.practical_memory_horizon(epsilon)?.tau_eps),
        _ => None,
    };
    let rep = DiagnoseReport {
        conditioning: diagnostics::conditioning(&snaps, DEFAULT_ALPHA_FLOOR)?,
        spectrum: model.spectrum(),
        lifetimes: diagnostics::eigenvalue_lifetimes(model.eigenvalues()),
        tau_eps,
        test_nrmse: evaluation.nrmse,
        test_samples: snaps.samples(),
        per_trajectory,
    };
    let json = serde_json::to_string_pretty(&rep).map_err(Error::from)?;
    if let Some(path) = report {
        write(path, &json)?;
    }
    println!("{json}");
    Ok(())
}

fn cmd_select_rho(
    data: &Path,
    max_lag: Option<usize>,
    threshold: f64,
    centered: bool,
    json: bool,
) -> anyhow::Result<()> {
    let trajs = load_all(&[data.to_path_buf()])?;
    let first = &trajs[0];
    let lag = max_lag.unwrap_or(first.len() - 1);
    let mode = if centered { AcfMode::Centered } else { AcfMode::Raw };
    let sel = diagnostics::select_spectral_radius(first.outputs(), lag, threshold, mode)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&sel).map_err(Error::from)?);
    } else {
        println!("rho: {}", sel.rho);
        println!("tau_c: {}", sel.tau_c);
    }
    Ok(())
}

fn cmd_benchmark(args: &ExpArgs) -> anyhow::Result<()> {
    let cfg = args.resolve()?;
    let dir = output_dir(&cfg, "results");
    let report = run_benchmark(&cfg)?;
    let paths = report
        .write(&dir)
        .with_context(|| format!("writing results to {}", dir.display()))?;
    for p in paths {
        println!("{}", p.display());
    }
    println!();
    print!("{}", report.summary());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Identify { data, model_out, exp } => cmd_identify(&data, model_out.as_deref(), &exp),
        Command::Diagnose {
            model,
            data,
            report,
            trace,
            epsilon,
        } => cmd_diagnose(&model, &data, report.as_deref(), trace.as_deref(), epsilon),
        Command::SelectRho {
            data,
            max_lag,
            threshold,
            centered,
            json,
        } => cmd_select_rho(&data, max_lag, threshold, centered, json),
        Command::Benchmark(args) => cmd_benchmark(&args),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return e.exit_code() as u8;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_defaults() {
        let args = ExpArgs {
            system: Some(SystemKind::Diffdrive),
            rho: Some(RhoChoice::Fixed(0.5)),
            centered: true,
            ..ExpArgs::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.system, SystemKind::Diffdrive);
        assert_eq!(cfg.rho, RhoChoice::Fixed(0.5));
        assert_eq!(cfg.acf_mode, AcfMode::Centered);
        assert_eq!(cfg.lift_dim, ExperimentConfig::default().lift_dim);
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        let cfg: anyhow::Error = anyhow::Error::new(Error::Config("x".into())).context("outer");
        assert_eq!(exit_code(&cfg), 2);
        let num = anyhow::Error::new(Error::NumericOverflow("x".into()));
        assert_eq!(exit_code(&num), 3);
        let io = anyhow::Error::new(Error::Io(std::io::Error::other("x")));
        assert_eq!(exit_code(&io), 4);
    }
}
