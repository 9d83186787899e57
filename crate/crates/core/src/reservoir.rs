//! Fixed random reservoirs used as a stateful dictionary.
//!
//! The state update is `r_k = sigma(W_res r_{k-1} + W_in v_k)` with no bias.
//! Weights are drawn once from a seeded generator and never modified, so a
//! reservoir can be shared freely across threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{Extended, Real};

pub const DEFAULT_DENSITY: f64 = 0.9;
pub const DEFAULT_INPUT_SCALING: f64 = 2.0;
pub const DEFAULT_WASHOUT: usize = 50;
pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative evaluated at the pre-activation `x`.
    pub fn derivative<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            Activation::Identity => T::one(),
        }
    }

    /// Global Lipschitz constant (1 for both supported activations).
    pub fn lipschitz<T: Real>(self) -> T {
        T::one()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ReservoirConfig<T> {
    pub reservoir_dim: usize,
    pub input_dim: usize,
    pub spectral_radius: T,
    pub input_scaling: T,
    pub density: T,
    pub activation: Activation,
    pub seed: u64,
}

impl<T: Real> ReservoirConfig<T> {
    pub fn new(reservoir_dim: usize, input_dim: usize, spectral_radius: T) -> Self {
        Self {
            reservoir_dim,
            input_dim,
            spectral_radius,
            input_scaling: T::lit(DEFAULT_INPUT_SCALING),
            density: T::lit(DEFAULT_DENSITY),
            activation: Activation::Tanh,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_spectral_radius(mut self, rho: T) -> Self {
        self.spectral_radius = rho;
        self
    }

    pub fn with_input_scaling(mut self, scaling: T) -> Self {
        self.input_scaling = scaling;
        self
    }

    pub fn with_density(mut self, density: T) -> Self {
        self.density = density;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.reservoir_dim == 0 {
            return Err(Error::Config("reservoir dimension must be at least 1".into()));
        }
        if self.input_dim == 0 {
            return Err(Error::Config("reservoir input dimension must be at least 1".into()));
        }
        if !(self.spectral_radius > T::zero()) || !self.spectral_radius.is_finite() {
            return Err(Error::Config(format!(
                "spectral radius must be positive, got {}",
                self.spectral_radius
            )));
        }
        if !(self.input_scaling > T::zero()) || !self.input_scaling.is_finite() {
            return Err(Error::Config(format!(
                "input scaling must be positive, got {}",
                self.input_scaling
            )));
        }
        if !(self.density > T::zero() && self.density <= T::one()) {
            return Err(Error::Config(format!(
                "density must lie in (0, 1], got {}",
                self.density
            )));
        }
        Ok(())
    }
}

/// Outcome of the echo-state checks on a reservoir.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct EspReport<T> {
    /// `L_sigma * ||W_res||_2 < 1` (contraction).
    pub sufficient: bool,
    /// `rho(W_res) < 1` (standard scaling rule).
    pub practical: bool,
    /// Contraction factor `L_sigma * ||W_res||_2`.
    pub gamma: T,
    pub spectral_radius: T,
}

/// Effective memory horizon for precision `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct MemoryHorizon<T> {
    pub gamma: T,
    pub epsilon: T,
    pub w_in_norm: T,
    pub tau_eps: Extended<T>,
}

/// `tau_eps = log(epsilon / ||W_in||) / log(gamma)`.
///
/// Unbounded when `gamma >= 1` and zero once `epsilon >= ||W_in||`.
pub fn memory_horizon<T: Real>(gamma: T, w_in_norm: T, epsilon: T) -> Result<MemoryHorizon<T>> {
    if !(gamma > T::zero()) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    if !(epsilon > T::zero()) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(w_in_norm > T::zero()) {
        return Err(Error::Domain(format!(
            "input weight norm must be positive, got {w_in_norm}"
        )));
    }
    let tau_eps = if gamma >= T::one() {
        Extended::Infinite
    } else if epsilon >= w_in_norm {
        Extended::Finite(T::zero())
    } else {
        Extended::Finite((epsilon / w_in_norm).ln() / gamma.ln())
    };
    Ok(MemoryHorizon {
        gamma,
        epsilon,
        w_in_norm,
        tau_eps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Reservoir<T> {
    config: ReservoirConfig<T>,
    #[serde(with = "crate::serde_util::matrix")]
    w_res: DMatrix<T>,
    #[serde(with = "crate::serde_util::matrix")]
    w_in: DMatrix<T>,
    actual_spectral_radius: T,
    spectral_norm_w_res: T,
}

impl<T: Real> Reservoir<T> {
    /// Draws `W_res` uniformly on `[-1, 1]`, drops entries with probability
    /// `1 - density`, and rescales to the requested spectral radius. `W_in`
    /// is dense and uniform on `[-input_scaling, input_scaling]`.
    pub fn build(config: ReservoirConfig<T>) -> Result<Self> {
        config.validate()?;
        let n = config.reservoir_dim;
        let m = config.input_dim;
        let density = config.density.as_f64();
        let scaling = config.input_scaling.as_f64();

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut raw = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let value = rng.random_range(-1.0..=1.0);
                let keep = rng.random::<f64>() < density;
                if keep {
                    raw[(i, j)] = value;
                }
            }
        }
        let w_in = DMatrix::from_fn(n, m, |_, _| T::lit(rng.random_range(-scaling..=scaling)));

        // The spectral radius is computed in f64 regardless of T so that
        // every precision draws the same reservoir.
        let raw_radius = linalg::spectral_radius(&raw)?;
        if !(raw_radius > f64::EPSILON) {
            return Err(Error::Construction(format!(
                "raw {n}x{n} reservoir matrix has zero spectral radius"
            )));
        }
        let factor = config.spectral_radius.as_f64() / raw_radius;
        let w_res = raw.map(|v| T::lit(v * factor));
        Self::assemble(config, w_res, w_in)
    }

    /// Wraps explicit weight matrices. `config` dimensions and spectral
    /// radius are overwritten from the matrices.
    pub fn from_weights(w_res: DMatrix<T>, w_in: DMatrix<T>, activation: Activation) -> Result<Self> {
        if !w_res.is_square() || w_in.nrows() != w_res.nrows() || w_res.is_empty() {
            return Err(Error::Shape(format!(
                "W_res {}x{} and W_in {}x{} are incompatible",
                w_res.nrows(),
                w_res.ncols(),
                w_in.nrows(),
                w_in.ncols()
            )));
        }
        let w_in_abs_max = w_in.amax();
        let radius = linalg::spectral_radius(&w_res)?;
        let config = ReservoirConfig {
            reservoir_dim: w_res.nrows(),
            input_dim: w_in.ncols(),
            spectral_radius: radius,
            input_scaling: if w_in_abs_max > T::zero() {
                w_in_abs_max
            } else {
                T::one()
            },
            density: T::one(),
            activation,
            seed: 0,
        };
        Self::assemble(config, w_res, w_in)
    }

    fn assemble(config: ReservoirConfig<T>, w_res: DMatrix<T>, w_in: DMatrix<T>) -> Result<Self> {
        if !linalg::all_finite(&w_res) || !linalg::all_finite(&w_in) {
            return Err(Error::Construction("weights are not finite".into()));
        }
        let actual_spectral_radius = linalg::spectral_radius(&w_res)?;
        let spectral_norm_w_res = linalg::spectral_norm(&w_res)?;
        Ok(Self {
            config,
            w_res,
            w_in,
            actual_spectral_radius,
            spectral_norm_w_res,
        })
    }

    pub fn config(&self) -> &ReservoirConfig<T> {
        &self.config
    }

    pub fn w_res(&self) -> &DMatrix<T> {
        &self.w_res
    }

    pub fn w_in(&self) -> &DMatrix<T> {
        &self.w_in
    }

    pub fn reservoir_dim(&self) -> usize {
        self.w_res.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn activation(&self) -> Activation {
        self.config.activation
    }

    pub fn actual_spectral_radius(&self) -> T {
        self.actual_spectral_radius
    }

    pub fn spectral_norm_w_res(&self) -> T {
        self.spectral_norm_w_res
    }

    pub fn w_in_norm(&self) -> Result<T> {
        linalg::spectral_norm(&self.w_in)
    }

    /// Pre-activation `W_res r + W_in v`.
    fn pre_activation(&self, r: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        &self.w_res * r + &self.w_in * v
    }

    fn check_inputs(&self, inputs: &[DVector<T>], r0: &DVector<T>) -> Result<()> {
        if r0.len() != self.reservoir_dim() {
            return Err(Error::Shape(format!(
                "initial state has dim {}, reservoir has {}",
                r0.len(),
                self.reservoir_dim()
            )));
        }
        if let Some(bad) = inputs.iter().find(|v| v.len() != self.input_dim()) {
            return Err(Error::Shape(format!(
                "reservoir input has dim {}, expected {}",
                bad.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Drives the reservoir from `r0` and returns the states after the first
    /// `washout` have been dropped. Retained state `k` is the response to
    /// `inputs[washout + k]`.
    pub fn drive(&self, inputs: &[DVector<T>], r0: &DVector<T>, washout: usize) -> Result<Vec<DVector<T>>> {
        self.check_inputs(inputs, r0)?;
        if washout >= inputs.len() {
            return Err(Error::Shape(format!(
                "washout {washout} leaves no states from {} inputs",
                inputs.len()
            )));
        }
        let act = self.config.activation;
        let mut r = r0.clone();
        let mut states = Vec::with_capacity(inputs.len() - washout);
        for (k, v) in inputs.iter().enumerate() {
            r = self.pre_activation(&r, v).map(|a| act.apply(a));
            if r.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFiniteState { step: k });
            }
            if k >= washout {
                states.push(r.clone());
            }
        }
        Ok(states)
    }

    /// Drives from the zero state without washout.
    pub fn drive_from_rest(&self, inputs: &[DVector<T>]) -> Result<Vec<DVector<T>>> {
        self.drive(inputs, &DVector::zeros(self.reservoir_dim()), 0)
    }

    pub fn check_esp(&self) -> EspReport<T> {
        let gamma = self.config.activation.lipschitz::<T>() * self.spectral_norm_w_res;
        EspReport {
            sufficient: gamma < T::one(),
            practical: self.actual_spectral_radius < T::one(),
            gamma,
            spectral_radius: self.actual_spectral_radius,
        }
    }

    /// Memory horizon with `gamma = rho(W_res)`, the convention used when
    /// sweeping the spectral radius.
    pub fn practical_memory_horizon(&self, epsilon: T) -> Result<MemoryHorizon<T>> {
        memory_horizon(self.actual_spectral_radius, self.w_in_norm()?, epsilon)
    }

    /// Exact Jacobians `d r_k / d v_{k - tau}` for `tau = 0..=lag_max`, where
    /// `k` is the last input index and the reservoir starts at `r0`.
    ///
    /// Built from the chain-rule product `D_k W_res D_{k-1} ... W_res
    /// D_{k-tau} W_in`, with `D_j` the diagonal of activation derivatives.
    pub fn input_jacobians(&self, inputs: &[DVector<T>], r0: &DVector<T>, lag_max: usize) -> Result<Vec<DMatrix<T>>> {
        self.check_inputs(inputs, r0)?;
        if inputs.len() <= lag_max {
            return Err(Error::Shape(format!(
                "{} inputs cannot resolve lag {lag_max}",
                inputs.len()
            )));
        }
        let act = self.config.activation;
        let mut derivs = Vec::with_capacity(inputs.len());
        let mut r = r0.clone();
        for (k, v) in inputs.iter().enumerate() {
            let pre = self.pre_activation(&r, v);
            derivs.push(pre.map(|a| act.derivative(a)));
            r = pre.map(|a| act.apply(a));
            if r.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFiniteState { step: k });
            }
        }

        let k = inputs.len() - 1;
        // prefix = D_k W_res D_{k-1} ... W_res D_{k-tau}
        let mut prefix = DMatrix::from_diagonal(&derivs[k]);
        let mut out = Vec::with_capacity(lag_max + 1);
        out.push(&prefix * &self.w_in);
        for tau in 1..=lag_max {
            prefix = (prefix * &self.w_res) * DMatrix::from_diagonal(&derivs[k - tau]);
            out.push(&prefix * &self.w_in);
        }
        Ok(out)
    }

    /// Spectral norms of [`Reservoir::input_jacobians`] from the zero state.
    pub fn sensitivity_profile(&self, inputs: &[DVector<T>], lag_max: usize) -> Result<Vec<T>> {
        let r0 = DVector::zeros(self.reservoir_dim());
        self.input_jacobians(inputs, &r0, lag_max)?
            .iter()
            .map(linalg::spectral_norm)
            .collect()
    }
}
