//! End-to-end pipeline: data generation, lifting, identification and the
//! three-method benchmark over both systems.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::diagnostics::{
    self, conditioning, observability_scan, AcfMode, ConditioningReport, ObservabilityScan, RhoSelection,
    DEFAULT_ALPHA_FLOOR, DEFAULT_RHO_SWEEP, SCAN_CSV_HEADER,
};
use crate::dynamics::{dataset_hash, generate_batch, SystemKind, SystemSpec, TrajectoryData};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::koopman::{identify, is_stable, KoopmanModel, Lineage, DEFAULT_RIDGE};
use crate::lifting::Dictionary;
use crate::reservoir::{
    Reservoir, ReservoirConfig, DEFAULT_DENSITY, DEFAULT_EPSILON, DEFAULT_INPUT_SCALING, DEFAULT_WASHOUT,
};
use crate::scalar::Extended;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rc,
    Edmd,
    Hankel,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Rc, Method::Edmd, Method::Hankel];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rc => "rc",
            Method::Edmd => "edmd",
            Method::Hankel => "hankel",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rc" | "rc-koopman" => Ok(Method::Rc),
            "edmd" => Ok(Method::Edmd),
            "hankel" | "havok" => Ok(Method::Hankel),
            other => Err(Error::Config(format!(
                "unknown method `{other}` (expected rc, edmd or hankel)"
            ))),
        }
    }
}

/// Reservoir spectral radius: chosen from the data or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RhoChoice {
    #[default]
    Auto,
    Fixed(f64),
}

impl fmt::Display for RhoChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RhoChoice::Auto => f.write_str("auto"),
            RhoChoice::Fixed(r) => write!(f, "{r}"),
        }
    }
}

impl FromStr for RhoChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(RhoChoice::Auto);
        }
        let r: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("rho must be `auto` or a number, got `{s}`")))?;
        Ok(RhoChoice::Fixed(r))
    }
}

impl Serialize for RhoChoice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RhoChoice::Auto => s.serialize_str("auto"),
            RhoChoice::Fixed(r) => s.serialize_f64(*r),
        }
    }
}

impl<'de> Deserialize<'de> for RhoChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(r) => Ok(RhoChoice::Fixed(r)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemKind,
    pub method: Method,
    pub lift_dim: usize,
    pub ridge: f64,
    pub seed: u64,
    pub train_len: usize,
    pub train_trajectories: usize,
    pub test_len: usize,
    pub test_trajectories: usize,
    pub washout: usize,
    pub rho: RhoChoice,
    pub epsilon: f64,
    pub input_scaling: f64,
    pub density: f64,
    pub rbf_width_factor: f64,
    pub input_hold: usize,
    /// Largest lag for the autocorrelation; defaults to the trajectory length
    /// minus one.
    pub max_lag: Option<usize>,
    pub acf_mode: AcfMode,
    /// Number of master seeds in a benchmark, starting at `seed`.
    pub seeds: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::Duffing,
            method: Method::Rc,
            lift_dim: 12,
            ridge: DEFAULT_RIDGE,
            seed: 7,
            train_len: 250,
            train_trajectories: 8,
            test_len: 250,
            test_trajectories: 4,
            washout: DEFAULT_WASHOUT,
            rho: RhoChoice::Auto,
            epsilon: DEFAULT_EPSILON,
            input_scaling: DEFAULT_INPUT_SCALING,
            density: DEFAULT_DENSITY,
            rbf_width_factor: 8.0,
            input_hold: 1,
            max_lag: None,
            acf_mode: AcfMode::Raw,
            seeds: 10,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.lift_dim == 0 {
            return fail("lift_dim must be positive".into());
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return fail(format!("ridge must be non-negative, got {}", self.ridge));
        }
        if self.train_len < 2 || self.test_len < 2 {
            return fail("train_len and test_len must be at least 2".into());
        }
        if self.train_trajectories == 0 || self.test_trajectories == 0 {
            return fail("need at least one train and one test trajectory".into());
        }
        if self.washout + 2 > self.train_len + 1 || self.washout + 2 > self.test_len + 1 {
            return fail(format!(
                "washout {} leaves no snapshot pairs in trajectories of {}/{} steps",
                self.washout, self.train_len, self.test_len
            ));
        }
        if let RhoChoice::Fixed(r) = self.rho {
            if !(r > 0.0) || !r.is_finite() {
                return fail(format!("rho must be positive, got {r}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.input_scaling > 0.0) || !(self.density > 0.0 && self.density <= 1.0) {
            return fail("input_scaling must be positive and density in (0, 1]".into());
        }
        if !(self.rbf_width_factor > 0.0) {
            return fail(format!(
                "rbf_width_factor must be positive, got {}",
                self.rbf_width_factor
            ));
        }
        if self.seeds == 0 {
            return fail("seeds must be at least 1".into());
        }
        Ok(())
    }
}

/// Independent random streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    Train = 1,
    Test = 2,
    Reservoir = 3,
    Rbf = 4,
}

/// `master + (stream << 32)`. Trajectory `i` of a batch adds `i` on top.
pub fn derive_seed(master: u64, stream: SeedStream) -> u64 {
    master.wrapping_add((stream as u64) << 32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<TrajectoryData<f64>>,
    pub test: Vec<TrajectoryData<f64>>,
}

pub fn generate_dataset(system: SystemKind, cfg: &ExperimentConfig, master: u64) -> Result<Dataset> {
    let spec = SystemSpec::<f64>::from_kind(system);
    let excitation = spec.default_excitation(cfg.input_hold);
    let train = generate_batch(
        &spec,
        &excitation,
        cfg.train_trajectories,
        cfg.train_len,
        derive_seed(master, SeedStream::Train),
    )?;
    let test = generate_batch(
        &spec,
        &excitation,
        cfg.test_trajectories,
        cfg.test_len,
        derive_seed(master, SeedStream::Test),
    )?;
    Ok(Dataset { train, test })
}

/// Spectral radius from the autocorrelation of the first training trajectory.
pub fn auto_rho(train: &[TrajectoryData<f64>], cfg: &ExperimentConfig) -> Result<RhoSelection<f64>> {
    let first = train
        .first()
        .ok_or_else(|| Error::Input("no training trajectories".into()))?;
    let max_lag = cfg.max_lag.unwrap_or(first.len() - 1).min(first.len() - 1);
    diagnostics::select_spectral_radius(first.outputs(), max_lag, (-1.0f64).exp(), cfg.acf_mode)
}

/// Reservoir configuration of the RC dictionary before `rho` is fixed.
pub fn reservoir_config(
    output_dim: usize,
    cfg: &ExperimentConfig,
    master: u64,
    rho: f64,
) -> Result<ReservoirConfig<f64>> {
    if cfg.lift_dim <= output_dim {
        return Err(Error::Config(format!(
            "lift_dim {} leaves no reservoir units for {output_dim} outputs",
            cfg.lift_dim
        )));
    }
    Ok(ReservoirConfig::new(cfg.lift_dim - output_dim, output_dim, rho)
        .with_seed(derive_seed(master, SeedStream::Reservoir))
        .with_input_scaling(cfg.input_scaling)
        .with_density(cfg.density))
}

/// A fitted dictionary plus the spectral-radius selection when one ran.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltDictionary {
    pub dictionary: Dictionary<f64>,
    pub selection: Option<RhoSelection<f64>>,
}

/// Builds the `method` dictionary at `cfg.lift_dim`: `n_r = n_psi - n_y`
/// reservoir units, `n_psi - n_y` RBF centers, or `d = n_psi / n_y` delays.
pub fn build_dictionary(
    method: Method,
    train: &[TrajectoryData<f64>],
    cfg: &ExperimentConfig,
    master: u64,
) -> Result<BuiltDictionary> {
    let ny = train
        .first()
        .ok_or_else(|| Error::Input("no training trajectories".into()))?
        .output_dim();
    match method {
        Method::Rc => {
            let selection = match cfg.rho {
                RhoChoice::Auto => Some(auto_rho(train, cfg)?),
                RhoChoice::Fixed(_) => None,
            };
            let rho = match (&selection, cfg.rho) {
                (Some(sel), _) => sel.rho,
                (None, RhoChoice::Fixed(r)) => r,
                (None, RhoChoice::Auto) => unreachable!(),
            };
            let reservoir = Reservoir::build(reservoir_config(ny, cfg, master, rho)?)?;
            Ok(BuiltDictionary {
                dictionary: Dictionary::reservoir(reservoir, cfg.washout),
                selection,
            })
        }
        Method::Edmd => {
            if cfg.lift_dim <= ny {
                return Err(Error::Config(format!(
                    "lift_dim {} leaves no RBF centers for {ny} outputs",
                    cfg.lift_dim
                )));
            }
            let dictionary = Dictionary::fit_rbf(
                train,
                cfg.lift_dim - ny,
                cfg.rbf_width_factor,
                derive_seed(master, SeedStream::Rbf),
            )?;
            Ok(BuiltDictionary {
                dictionary,
                selection: None,
            })
        }
        Method::Hankel => {
            if !cfg.lift_dim.is_multiple_of(ny) {
                return Err(Error::Config(format!(
                    "lift_dim {} is not a multiple of the output dimension {ny}",
                    cfg.lift_dim
                )));
            }
            Ok(BuiltDictionary {
                dictionary: Dictionary::hankel(ny, cfg.lift_dim / ny)?,
                selection: None,
            })
        }
    }
}

/// Everything measured for one (system, method, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub model: KoopmanModel<f64>,
    pub train_nrmse: f64,
    pub test_nrmse: f64,
    pub conditioning: ConditioningReport<f64>,
    pub unstable_count: usize,
    pub selection: Option<RhoSelection<f64>>,
    /// Memory horizon of the RC reservoir.
    pub tau_eps: Option<Extended<f64>>,
}

pub fn fit(
    method: Method,
    train: &[TrajectoryData<f64>],
    cfg: &ExperimentConfig,
    master: u64,
) -> Result<(KoopmanModel<f64>, Option<RhoSelection<f64>>, f64)> {
    let built = build_dictionary(method, train, cfg, master)?;
    let snapshots = built.dictionary.lift_all(train)?;
    let model = identify(&snapshots, cfg.ridge)?;
    let train_nrmse = model.evaluate_onestep(&snapshots)?.nrmse;
    let lineage = Lineage {
        system: train.first().map(|t| t.system.clone()).filter(|s| !s.is_empty()),
        method: Some(method.name().into()),
        master_seed: Some(master),
        source_hash: Some(dataset_hash(train)),
    };
    let model = model.with_dictionary(built.dictionary)?.with_lineage(lineage);
    Ok((model, built.selection, train_nrmse))
}

pub fn run_cell(method: Method, data: &Dataset, cfg: &ExperimentConfig, master: u64) -> Result<CellResult> {
    let (model, selection, train_nrmse) = fit(method, &data.train, cfg, master)?;
    let dictionary = model.dictionary().expect("fit attaches the dictionary");
    let train_snaps = dictionary.lift_all(&data.train)?;
    let test_snaps = dictionary.lift_all(&data.test)?;
    let test_nrmse = model.evaluate_onestep(&test_snaps)?.nrmse;
    let conditioning = conditioning(&train_snaps, DEFAULT_ALPHA_FLOOR)?;
    let tau_eps = match dictionary {
        Dictionary::Reservoir { reservoir, .. } => Some(reservoir.practical_memory_horizon(cfg.epsilon)?.tau_eps),
        _ => None,
    };
    Ok(CellResult {
        unstable_count: model.spectrum().unstable_count,
        model,
        train_nrmse,
        test_nrmse,
        conditioning,
        selection,
        tau_eps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub system: SystemKind,
    pub method: Method,
    pub seed: u64,
    pub outcome: std::result::Result<CellResult, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub system: SystemKind,
    pub selected_rho: Option<f64>,
    pub outcome: std::result::Result<ObservabilityScan<f64>, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CellRecord>,
    pub scans: Vec<ScanRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NrmseSummary {
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub ok: usize,
    pub failed: usize,
    pub first_error: Option<String>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

impl BenchmarkReport {
    pub fn cells_for(&self, system: SystemKind, method: Method) -> impl Iterator<Item = &CellRecord> {
        self.cells
            .iter()
            .filter(move |c| c.system == system && c.method == method)
    }

    pub fn nrmse_summary(&self, system: SystemKind, method: Method) -> NrmseSummary {
        let mut values = Vec::new();
        let mut failed = 0;
        let mut first_error = None;
        for c in self.cells_for(system, method) {
            match &c.outcome {
                Ok(r) => values.push(r.test_nrmse),
                Err(e) => {
                    failed += 1;
                    first_error.get_or_insert_with(|| e.clone());
                }
            }
        }
        NrmseSummary {
            median: median(&values).unwrap_or(f64::NAN),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ok: values.len(),
            failed,
            first_error,
        }
    }

    pub fn reference_cell(&self, system: SystemKind, method: Method) -> Option<&CellRecord> {
        self.cells_for(system, method).find(|c| c.seed == self.config.seed)
    }

    pub fn scan(&self, system: SystemKind) -> Option<&ScanRecord> {
        self.scans.iter().find(|s| s.system == system)
    }

    pub fn table1_csv(&self) -> String {
        let mut out = String::from("system,method,median_nrmse,min_nrmse,max_nrmse,seeds,failures,error\n");
        for system in SystemKind::ALL {
            for method in Method::ALL {
                let s = self.nrmse_summary(system, method);
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    system.name(),
                    method,
                    s.median,
                    s.min,
                    s.max,
                    s.ok,
                    s.failed,
                    csv_text(s.first_error.as_deref().unwrap_or(""))
                ));
            }
        }
        out
    }

    pub fn nrmse_runs_csv(&self) -> String {
        let mut out = String::from("system,method,seed,train_nrmse,test_nrmse,rho,tau_c,error\n");
        for c in &self.cells {
            match &c.outcome {
                Ok(r) => out.push_str(&format!(
                    "{},{},{},{},{},{},{},\n",
                    c.system.name(),
                    c.method,
                    c.seed,
                    r.train_nrmse,
                    r.test_nrmse,
                    rho_of(r).map(|v| v.to_string()).unwrap_or_default(),
                    r.selection.as_ref().map(|s| s.tau_c.to_string()).unwrap_or_default()
                )),
                Err(e) => out.push_str(&format!(
                    "{},{},{},,,,,{}\n",
                    c.system.name(),
                    c.method,
                    c.seed,
                    csv_text(e)
                )),
            }
        }
        out
    }

    pub fn table2_csv(&self) -> String {
        let mut out = String::from(
            "system,method,seed,c_psi,alpha,alpha_status,lambda_max,lambda_min,kappa,bound,pe_satisfied,samples,error\n",
        );
        for c in &self.cells {
            match &c.outcome {
                Ok(r) => {
                    let k = &r.conditioning;
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{},{},{},\n",
                        c.system.name(),
                        c.method,
                        c.seed,
                        k.c_psi,
                        k.alpha,
                        k.alpha_status(),
                        k.lambda_max,
                        k.lambda_min,
                        k.kappa,
                        k.bound.map(|b| b.to_string()).unwrap_or_else(|| "undefined".into()),
                        k.pe_satisfied,
                        k.samples
                    ));
                }
                Err(e) => out.push_str(&format!(
                    "{},{},{},,,,,,,,,,{}\n",
                    c.system.name(),
                    c.method,
                    c.seed,
                    csv_text(e)
                )),
            }
        }
        out
    }

    pub fn fig3_csv(&self) -> String {
        let mut out = String::from("system,method,re,im,modulus,stable\n");
        for system in SystemKind::ALL {
            for method in Method::ALL {
                if let Some(CellRecord { outcome: Ok(r), .. }) = self.reference_cell(system, method) {
                    for l in sorted_eigenvalues(r.model.eigenvalues()) {
                        out.push_str(&format!(
                            "{},{},{},{},{},{}\n",
                            system.name(),
                            method,
                            l.re,
                            l.im,
                            l.norm(),
                            is_stable(&l)
                        ));
                    }
                }
            }
        }
        out
    }

    pub fn fig4_csv(&self) -> String {
        let mut out = format!("system,{SCAN_CSV_HEADER}\n");
        for s in &self.scans {
            if let Ok(scan) = &s.outcome {
                for row in scan.csv_rows() {
                    out.push_str(&format!("{},{row}\n", s.system.name()));
                }
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let cfg = &self.config;
        let mut out = String::new();
        out.push_str(&format!(
            "benchmark: master seed {}, {} seeds, lift_dim {}, ridge {:e}\n",
            cfg.seed, cfg.seeds, cfg.lift_dim, cfg.ridge
        ));
        out.push_str(&format!(
            "data: {} x {} training steps, {} x {} test steps, washout {}\n\n",
            cfg.train_trajectories, cfg.train_len, cfg.test_trajectories, cfg.test_len, cfg.washout
        ));
        out.push_str("one-step test NRMSE (median [min, max] over seeds)\n");
        for system in SystemKind::ALL {
            for method in Method::ALL {
                let s = self.nrmse_summary(system, method);
                out.push_str(&format!(
                    "  {:<9} {:<6} {:.3e} [{:.3e}, {:.3e}]",
                    system.name(),
                    method.name(),
                    s.median,
                    s.min,
                    s.max
                ));
                if s.failed > 0 {
                    out.push_str(&format!("  ({} failed)", s.failed));
                }
                out.push('\n');
            }
        }
        out.push_str(&format!("\nconditioning at seed {}\n", cfg.seed));
        for system in SystemKind::ALL {
            for method in Method::ALL {
                let line = match self.reference_cell(system, method).map(|c| &c.outcome) {
                    Some(Ok(r)) => {
                        let k = &r.conditioning;
                        format!(
                            "C_psi {:.3} alpha {} kappa {} bound {} unstable {}",
                            k.c_psi,
                            k.alpha_status(),
                            fmt_ext(k.kappa),
                            k.bound
                                .map(|b| format!("{b:.3e}"))
                                .unwrap_or_else(|| "undefined".into()),
                            r.unstable_count
                        )
                    }
                    Some(Err(e)) => format!("error: {e}"),
                    None => "missing".into(),
                };
                out.push_str(&format!("  {:<9} {:<6} {line}\n", system.name(), method.name()));
            }
        }
        out.push_str("\nobservability scan\n");
        for s in &self.scans {
            match &s.outcome {
                Ok(scan) => {
                    let mut rhos: Vec<f64> = scan.points.iter().map(|p| p.rho).collect();
                    rhos.dedup();
                    for rho in rhos {
                        let pts: Vec<_> = scan.points_at(rho).collect();
                        let finite = pts.iter().filter(|p| p.lifetime.is_finite()).count();
                        let inside = pts.iter().filter(|p| p.lifetime.is_finite() && p.observable).count();
                        let marker = if Some(rho) == s.selected_rho { " (selected)" } else { "" };
                        out.push_str(&format!(
                            "  {:<9} rho {:.4} tau_eps {} finite lifetimes inside horizon {inside}/{finite}{}{marker}\n",
                            s.system.name(),
                            rho,
                            fmt_ext(pts[0].tau_eps),
                            if pts[0].over_extended { " over-extended" } else { "" }
                        ));
                    }
                    for f in &scan.failures {
                        out.push_str(&format!(
                            "  {:<9} rho {:.4} error: {}\n",
                            s.system.name(),
                            f.rho,
                            f.error
                        ));
                    }
                }
                Err(e) => out.push_str(&format!("  {:<9} error: {e}\n", s.system.name())),
            }
        }
        out
    }

    /// Writes all tables and the summary to `dir`, returning the paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let files = [
            ("table1_nrmse.csv", self.table1_csv()),
            ("table1_nrmse_runs.csv", self.nrmse_runs_csv()),
            ("table2_conditioning.csv", self.table2_csv()),
            ("fig3_spectra.csv", self.fig3_csv()),
            ("fig4_observability.csv", self.fig4_csv()),
            ("summary.txt", self.summary()),
        ];
        let mut paths = Vec::with_capacity(files.len());
        for (name, body) in files {
            let path = dir.join(name);
            write_atomic(&path, body.as_bytes())?;
            paths.push(path);
        }
        Ok(paths)
    }
}

fn rho_of(r: &CellResult) -> Option<f64> {
    match r.model.dictionary() {
        Some(Dictionary::Reservoir { reservoir, .. }) => Some(reservoir.actual_spectral_radius()),
        _ => None,
    }
}

fn fmt_ext(v: Extended<f64>) -> String {
    match v {
        Extended::Finite(x) => format!("{x:.3e}"),
        Extended::Infinite => "inf".into(),
    }
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

/// Eigenvalues by descending modulus, then real and imaginary part.
pub fn sorted_eigenvalues(eigs: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let mut v = eigs.to_vec();
    v.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
    v
}

/// Observability scan on the reference-seed training data. The swept radii
/// are the default sweep plus the selected radius.
pub fn reference_scan(system: SystemKind, data: &Dataset, cfg: &ExperimentConfig, master: u64) -> ScanRecord {
    let run = || -> Result<(ObservabilityScan<f64>, f64)> {
        let selected = match cfg.rho {
            RhoChoice::Auto => auto_rho(&data.train, cfg)?.rho,
            RhoChoice::Fixed(r) => r,
        };
        let mut rhos = DEFAULT_RHO_SWEEP.to_vec();
        rhos.push(selected);
        rhos.sort_by(f64::total_cmp);
        rhos.dedup();
        let ny = data.train[0].output_dim();
        let base = reservoir_config(ny, cfg, master, selected)?;
        let scan = observability_scan(&data.train, &rhos, &base, cfg.epsilon, cfg.ridge, cfg.washout)?;
        Ok((scan, selected))
    };
    match run() {
        Ok((scan, rho)) => ScanRecord {
            system,
            selected_rho: Some(rho),
            outcome: Ok(scan),
        },
        Err(e) => ScanRecord {
            system,
            selected_rho: None,
            outcome: Err(e.to_string()),
        },
    }
}

/// Runs every method on both systems for `cfg.seeds` master seeds starting
/// at `cfg.seed`, plus the observability scan at `cfg.seed`.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let jobs: Vec<(SystemKind, u64)> = SystemKind::ALL
        .iter()
        .flat_map(|&s| (0..cfg.seeds as u64).map(move |i| (s, cfg.seed.wrapping_add(i))))
        .collect();
    let per_job: Vec<(Vec<CellRecord>, Option<ScanRecord>)> = jobs
        .par_iter()
        .map(|&(system, seed)| {
            let data = generate_dataset(system, cfg, seed);
            let cells = Method::ALL
                .iter()
                .map(|&method| CellRecord {
                    system,
                    method,
                    seed,
                    outcome: data
                        .as_ref()
                        .map_err(|e| e.to_string())
                        .and_then(|d| run_cell(method, d, cfg, seed).map_err(|e| e.to_string())),
                })
                .collect();
            let scan = (seed == cfg.seed).then(|| match &data {
                Ok(d) => reference_scan(system, d, cfg, seed),
                Err(e) => ScanRecord {
                    system,
                    selected_rho: None,
                    outcome: Err(e.to_string()),
                },
            });
            (cells, scan)
        })
        .collect();
    let mut cells = Vec::new();
    let mut scans = Vec::new();
    for (c, s) in per_job {
        cells.extend(c);
        scans.extend(s);
    }
    Ok(BenchmarkReport {
        config: cfg.clone(),
        cells,
        scans,
    })
}

/// Reads trajectories from a `.json` file (one trajectory or an array) or a
/// single-trajectory `.csv` file.
pub fn load_trajectories(path: &Path) -> Result<Vec<TrajectoryData<f64>>> {
    let text = fs::read_to_string(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let trajs = match ext.as_str() {
        "csv" => vec![TrajectoryData::from_csv(&text)?],
        "json" => {
            let value: serde_json::Value = serde_json::from_str(&text)?;
            if value.is_array() {
                serde_json::from_value::<Vec<TrajectoryData<f64>>>(value)?
            } else {
                vec![serde_json::from_value(value)?]
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unsupported trajectory file extension `{other}` (expected csv or json)"
            )))
        }
    };
    for t in &trajs {
        t.validate()?;
    }
    Ok(trajs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_streams_are_disjoint() {
        let s = [
            derive_seed(7, SeedStream::Train),
            derive_seed(7, SeedStream::Test),
            derive_seed(7, SeedStream::Reservoir),
            derive_seed(7, SeedStream::Rbf),
        ];
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                assert!(s[i].abs_diff(s[j]) >= 1 << 32);
            }
        }
    }

    #[test]
    fn rho_choice_serde() {
        assert_eq!(serde_json::to_string(&RhoChoice::Auto).unwrap(), "\"auto\"");
        assert_eq!(serde_json::from_str::<RhoChoice>("0.5").unwrap(), RhoChoice::Fixed(0.5));
        assert_eq!(serde_json::from_str::<RhoChoice>("\"auto\"").unwrap(), RhoChoice::Auto);
        assert!(serde_json::from_str::<RhoChoice>("\"fast\"").is_err());
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = ExperimentConfig::from_json(r#"{"system": "diffdrive", "rho": 0.9}"#).unwrap();
        assert_eq!(cfg.system, SystemKind::Diffdrive);
        assert_eq!(cfg.rho, RhoChoice::Fixed(0.9));
        assert_eq!(cfg.lift_dim, 12);
        assert!(ExperimentConfig::from_json(r#"{"ridge": -1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn dimension_accounting() {
        let cfg = ExperimentConfig {
            train_trajectories: 2,
            train_len: 120,
            ..ExperimentConfig::default()
        };
        let data = generate_dataset(SystemKind::Duffing, &cfg, 1).unwrap();
        let h = build_dictionary(Method::Hankel, &data.train, &cfg, 1).unwrap();
        assert_eq!(h.dictionary, Dictionary::hankel(2, 6).unwrap());
        let e = build_dictionary(Method::Edmd, &data.train, &cfg, 1).unwrap();
        assert_eq!(e.dictionary.lift_dim(), 12);
        let fixed = ExperimentConfig {
            rho: RhoChoice::Fixed(0.9),
            ..cfg.clone()
        };
        let r = build_dictionary(Method::Rc, &data.train, &fixed, 1).unwrap();
        assert_eq!(r.dictionary.lift_dim(), 12);
        assert!(r.selection.is_none());

        let robot = generate_dataset(SystemKind::Diffdrive, &cfg, 1).unwrap();
        let h = build_dictionary(Method::Hankel, &robot.train, &cfg, 1).unwrap();
        assert_eq!(h.dictionary, Dictionary::hankel(3, 4).unwrap());
        let odd = ExperimentConfig { lift_dim: 13, ..cfg };
        assert!(matches!(
            build_dictionary(Method::Hankel, &robot.train, &odd, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
