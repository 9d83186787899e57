//! Conditioning, memory and spectral-observability diagnostics, plus the
//! correlation-time rule for choosing the reservoir spectral radius.

use nalgebra::DVector;
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryData;
use crate::error::{Error, Result};
use crate::koopman::identify;
use crate::lifting::{Dictionary, LiftedSnapshots};
use crate::linalg;
use crate::reservoir::{Reservoir, ReservoirConfig};
use crate::scalar::{Extended, Real};

pub const DEFAULT_ALPHA_FLOOR: f64 = 1e-12;

pub const DEFAULT_RHO_SWEEP: [f64; 8] = [0.1, 0.3, 0.5, 0.7, 0.9, 0.98, 1.1, 1.5];

/// Gramian statistics of the lifted snapshots `Psi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ConditioningReport<T> {
    /// Largest column norm of `Psi`.
    pub c_psi: T,
    /// `lambda_min(Psi Psi^T) / K`.
    pub alpha: T,
    pub lambda_max: T,
    pub lambda_min: T,
    /// `lambda_max / lambda_min`, infinite unless excitation is persistent.
    pub kappa: Extended<T>,
    /// `C_psi^2 / alpha`, absent unless excitation is persistent.
    pub bound: Option<T>,
    pub pe_satisfied: bool,
    pub alpha_floor: T,
    pub samples: usize,
}

impl<T: Real> ConditioningReport<T> {
    /// `alpha` formatted for tables: the value, or `<floor` below the floor.
    pub fn alpha_status(&self) -> String {
        if self.pe_satisfied {
            format!("{:e}", self.alpha.as_f64())
        } else {
            format!("<{:e}", self.alpha_floor.as_f64())
        }
    }

    /// `kappa <= bound * (1 + slack)`; vacuously true without persistent
    /// excitation.
    pub fn bound_holds(&self, slack: T) -> bool {
        match (self.kappa.finite(), self.bound) {
            (Some(k), Some(b)) => k <= b * (T::one() + slack),
            _ => !self.pe_satisfied,
        }
    }

    /// `lambda_max <= C_psi^2 K * (1 + slack)`.
    pub fn upper_bound_holds(&self, slack: T) -> bool {
        self.lambda_max <= self.c_psi * self.c_psi * T::lit(self.samples as f64) * (T::one() + slack)
    }
}

pub fn conditioning<T: Real>(snapshots: &LiftedSnapshots<T>, alpha_floor: T) -> Result<ConditioningReport<T>> {
    let psi = snapshots.psi();
    let k = snapshots.samples();
    if k == 0 {
        return Err(Error::Shape("conditioning needs at least one snapshot".into()));
    }
    let gram = psi * psi.transpose();
    let eig = linalg::symmetric_eigenvalues(&gram)?;
    let lambda_min = eig[0];
    let lambda_max = eig[eig.len() - 1];
    let c_psi = psi.column_iter().map(|c| c.norm()).fold(T::zero(), |a, b| a.max(b));
    let alpha = lambda_min / T::lit(k as f64);
    let pe_satisfied = alpha > alpha_floor;
    let (kappa, bound) = if pe_satisfied {
        (Extended::Finite(lambda_max / lambda_min), Some(c_psi * c_psi / alpha))
    } else {
        (Extended::Infinite, None)
    };
    Ok(ConditioningReport {
        c_psi,
        alpha,
        lambda_max,
        lambda_min,
        kappa,
        bound,
        pe_satisfied,
        alpha_floor,
        samples: k,
    })
}

/// `T = -1 / ln|lambda|`: zero at the origin, infinite on or outside the
/// unit circle.
pub fn eigenvalue_lifetime<T: Real>(lambda: &Complex<T>) -> Extended<T> {
    let m = linalg::modulus(lambda);
    if m == T::zero() {
        Extended::Finite(T::zero())
    } else if m >= T::one() {
        Extended::Infinite
    } else {
        Extended::Finite(-T::one() / m.ln())
    }
}

pub fn eigenvalue_lifetimes<T: Real>(eigenvalues: &[Complex<T>]) -> Vec<Extended<T>> {
    eigenvalues.iter().map(eigenvalue_lifetime).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ObservabilityPoint<T> {
    pub rho: T,
    pub tau_eps: Extended<T>,
    pub re_lambda: T,
    pub im_lambda: T,
    pub lifetime: Extended<T>,
    /// `lifetime <= tau_eps`.
    pub observable: bool,
    /// `rho >= 1`, where the memory horizon is unbounded.
    pub over_extended: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ScanFailure<T> {
    pub rho: T,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ObservabilityScan<T> {
    pub points: Vec<ObservabilityPoint<T>>,
    pub failures: Vec<ScanFailure<T>>,
}

pub const SCAN_CSV_HEADER: &str = "rho,tau_eps,re_lambda,im_lambda,lifetime,observable";

impl<T: Real> ObservabilityScan<T> {
    pub fn points_at(&self, rho: T) -> impl Iterator<Item = &ObservabilityPoint<T>> {
        self.points.iter().filter(move |p| p.rho == rho)
    }

    /// Rows without header, one per point.
    pub fn csv_rows(&self) -> Vec<String> {
        self.points
            .iter()
            .map(|p| {
                format!(
                    "{},{},{},{},{},{}",
                    p.rho, p.tau_eps, p.re_lambda, p.im_lambda, p.lifetime, p.observable
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SCAN_CSV_HEADER);
        out.push('\n');
        for row in self.csv_rows() {
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

fn scan_one<T: Real>(
    trajs: &[TrajectoryData<T>],
    rho: T,
    base: &ReservoirConfig<T>,
    epsilon: T,
    ridge: T,
    washout: usize,
) -> Result<Vec<ObservabilityPoint<T>>> {
    let reservoir = Reservoir::build(base.clone().with_spectral_radius(rho))?;
    let horizon = reservoir.practical_memory_horizon(epsilon)?;
    let snapshots = Dictionary::reservoir(reservoir, washout).lift_all(trajs)?;
    let model = identify(&snapshots, ridge)?;
    Ok(model
        .eigenvalues()
        .iter()
        .map(|l| {
            let lifetime = eigenvalue_lifetime(l);
            ObservabilityPoint {
                rho,
                tau_eps: horizon.tau_eps,
                re_lambda: l.re,
                im_lambda: l.im,
                lifetime,
                observable: lifetime.le(&horizon.tau_eps),
                over_extended: rho >= T::one(),
            }
        })
        .collect())
}

/// For each `rho`, rebuilds the reservoir from `base` (same seed, rescaled),
/// identifies a model on `trajs` and pairs each eigenvalue lifetime with the
/// memory horizon at that `rho`. A failing `rho` is recorded and skipped.
pub fn observability_scan<T: Real>(
    trajs: &[TrajectoryData<T>],
    rhos: &[T],
    base: &ReservoirConfig<T>,
    epsilon: T,
    ridge: T,
    washout: usize,
) -> Result<ObservabilityScan<T>> {
    if rhos.is_empty() {
        return Err(Error::Config(
            "observability scan needs at least one spectral radius".into(),
        ));
    }
    if let Some(bad) = rhos.iter().find(|r| !(**r > T::zero()) || !r.is_finite()) {
        return Err(Error::Domain(format!("spectral radius must be positive, got {bad}")));
    }
    let results: Vec<_> = rhos
        .par_iter()
        .map(|&rho| (rho, scan_one(trajs, rho, base, epsilon, ridge, washout)))
        .collect();
    let mut scan = ObservabilityScan {
        points: Vec::new(),
        failures: Vec::new(),
    };
    for (rho, res) in results {
        match res {
            Ok(points) => scan.points.extend(points),
            Err(e) => scan.failures.push(ScanFailure {
                rho,
                error: e.to_string(),
            }),
        }
    }
    Ok(scan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcfMode {
    /// `sum y_k . y_{k+tau} / sum y_k . y_k` on the raw signal.
    #[default]
    Raw,
    /// Same formula after subtracting the per-channel mean.
    Centered,
}

/// Normalised autocorrelation for lags `0..=max_lag`.
pub fn autocorrelation<T: Real>(outputs: &[DVector<T>], max_lag: usize, mode: AcfMode) -> Result<Vec<T>> {
    if outputs.is_empty() || max_lag >= outputs.len() {
        return Err(Error::Shape(format!(
            "max lag {max_lag} needs more than {} samples",
            outputs.len()
        )));
    }
    let centered: Vec<DVector<T>>;
    let ys = match mode {
        AcfMode::Raw => outputs,
        AcfMode::Centered => {
            let n = T::lit(outputs.len() as f64);
            let mean = outputs.iter().fold(DVector::zeros(outputs[0].len()), |acc, y| acc + y) / n;
            centered = outputs.iter().map(|y| y - &mean).collect();
            &centered[..]
        }
    };
    let energy = ys.iter().fold(T::zero(), |acc, y| acc + y.dot(y));
    if !(energy > T::zero()) {
        return Err(Error::Domain(
            "autocorrelation of an all-zero signal is undefined".into(),
        ));
    }
    Ok((0..=max_lag)
        .map(|tau| {
            let s = ys[..ys.len() - tau]
                .iter()
                .zip(&ys[tau..])
                .fold(T::zero(), |acc, (a, b)| acc + a.dot(b));
            s / energy
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct RhoSelection<T> {
    pub rho: T,
    pub tau_c: usize,
    pub acf: Vec<T>,
}

/// `tau_c = min{tau >= 1 : C(tau) <= threshold}` and `rho = exp(-1/tau_c)`.
pub fn select_spectral_radius<T: Real>(
    outputs: &[DVector<T>],
    max_lag: usize,
    threshold: T,
    mode: AcfMode,
) -> Result<RhoSelection<T>> {
    if !(threshold > T::zero() && threshold < T::one()) {
        return Err(Error::Domain(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let acf = autocorrelation(outputs, max_lag, mode)?;
    let tau_c = (1..acf.len()).find(|&t| acf[t] <= threshold).ok_or_else(|| {
        Error::Selection(format!(
            "autocorrelation stays above {threshold} up to lag {max_lag}; use a larger max lag or longer data"
        ))
    })?;
    Ok(RhoSelection {
        rho: (-T::one() / T::lit(tau_c as f64)).exp(),
        tau_c,
        acf,
    })
}

/// `select_spectral_radius` with the `e^-1` threshold and raw ACF.
pub fn select_spectral_radius_default<T: Real>(outputs: &[DVector<T>], max_lag: usize) -> Result<RhoSelection<T>> {
    select_spectral_radius(outputs, max_lag, T::lit((-1.0f64).exp()), AcfMode::Raw)
}
