//! Benchmark systems, forward-Euler integration and trajectory generation.
//!
//! Two systems ship with the crate: the damped double-well Duffing
//! oscillator (unforced, two states) and a differential-drive (unicycle)
//! robot with inputs `(v, omega)`. Both are measured through the full state.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Integration step used by both benchmarks (seconds).
pub const DEFAULT_DT: f64 = 0.05;

/// Default escape bound for generated trajectories.
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e6;

pub const DUFFING_C1: f64 = 0.5;
pub const DUFFING_C2: f64 = 1.0;
pub const DUFFING_C3: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Duffing,
    Diffdrive,
}

impl SystemKind {
    pub const ALL: [SystemKind; 2] = [SystemKind::Duffing, SystemKind::Diffdrive];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Duffing => "duffing",
            SystemKind::Diffdrive => "diffdrive",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "duffing" => Ok(SystemKind::Duffing),
            "diffdrive" | "diff-drive" | "robot" => Ok(SystemKind::Diffdrive),
            other => Err(Error::Config(format!(
                "unknown system `{other}` (expected `duffing` or `diffdrive`)"
            ))),
        }
    }
}

/// Description of a discrete-time benchmark system `x+ = f(x, u)`, `y = h(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct SystemSpec<T> {
    pub name: String,
    pub kind: SystemKind,
    pub state_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub params: BTreeMap<String, T>,
    pub dt: T,
}

impl<T: Real> SystemSpec<T> {
    pub fn duffing() -> Self {
        let params = [("c1", DUFFING_C1), ("c2", DUFFING_C2), ("c3", DUFFING_C3)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), T::lit(v)))
            .collect();
        Self {
            name: SystemKind::Duffing.name().into(),
            kind: SystemKind::Duffing,
            state_dim: 2,
            input_dim: 0,
            output_dim: 2,
            params,
            dt: T::lit(DEFAULT_DT),
        }
    }

    pub fn diffdrive() -> Self {
        Self {
            name: SystemKind::Diffdrive.name().into(),
            kind: SystemKind::Diffdrive,
            state_dim: 3,
            input_dim: 2,
            output_dim: 3,
            params: BTreeMap::new(),
            dt: T::lit(DEFAULT_DT),
        }
    }

    pub fn from_kind(kind: SystemKind) -> Self {
        match kind {
            SystemKind::Duffing => Self::duffing(),
            SystemKind::Diffdrive => Self::diffdrive(),
        }
    }

    pub fn with_dt(mut self, dt: T) -> Result<Self> {
        self.dt = dt;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.output_dim == 0 || self.output_dim > self.state_dim {
            return Err(Error::Config(format!(
                "output_dim {} must be in 1..={}",
                self.output_dim, self.state_dim
            )));
        }
        Ok(())
    }

    fn param(&self, key: &str, default: f64) -> T {
        self.params.get(key).copied().unwrap_or_else(|| T::lit(default))
    }

    /// One forward-Euler step.
    pub fn step(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        if x.len() != self.state_dim {
            return Err(Error::Shape(format!(
                "{}: state has dim {}, expected {}",
                self.name,
                x.len(),
                self.state_dim
            )));
        }
        if u.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "{}: input has dim {}, expected {}",
                self.name,
                u.len(),
                self.input_dim
            )));
        }
        match self.kind {
            SystemKind::Duffing => {
                let coeffs = [
                    self.param("c1", DUFFING_C1),
                    self.param("c2", DUFFING_C2),
                    self.param("c3", DUFFING_C3),
                ];
                let next = duffing_step_with(coeffs, [x[0], x[1]], self.dt)?;
                Ok(DVector::from_row_slice(&next))
            }
            SystemKind::Diffdrive => {
                let next = diffdrive_step([x[0], x[1], x[2]], [u[0], u[1]], self.dt)?;
                Ok(DVector::from_row_slice(&next))
            }
        }
    }

    /// Full-state measurement.
    pub fn measure(&self, x: &DVector<T>) -> DVector<T> {
        x.rows(0, self.output_dim).into_owned()
    }

    /// Seeded initial condition: `[-2, 2]^2` for Duffing, position in
    /// `[-1, 1]^2` and heading in `[-pi, pi]` for the robot.
    pub fn sample_initial_state<R: Rng>(&self, rng: &mut R) -> DVector<T> {
        match self.kind {
            SystemKind::Duffing => DVector::from_fn(2, |_, _| T::lit(rng.random_range(-2.0..=2.0))),
            SystemKind::Diffdrive => {
                let pi = std::f64::consts::PI;
                DVector::from_vec(vec![
                    T::lit(rng.random_range(-1.0..=1.0)),
                    T::lit(rng.random_range(-1.0..=1.0)),
                    T::lit(rng.random_range(-pi..=pi)),
                ])
            }
        }
    }

    /// Excitation used for benchmark data: none for Duffing, uniform random
    /// `v in [0, 1]`, `omega in [-1, 1]` for the robot, redrawn every `hold`
    /// steps.
    pub fn default_excitation(&self, hold: usize) -> InputSignal<T> {
        match self.kind {
            SystemKind::Duffing => InputSignal::None,
            SystemKind::Diffdrive => InputSignal::PiecewiseUniform {
                lower: vec![T::zero(), T::lit(-1.0)],
                upper: vec![T::one(), T::one()],
                hold: hold.max(1),
            },
        }
    }
}

/// Forward-Euler step of the Duffing oscillator with the benchmark
/// coefficients `c1 = 0.5`, `c2 = 1`, `c3 = -1`.
pub fn duffing_step<T: Real>(state: [T; 2], dt: T) -> Result<[T; 2]> {
    duffing_step_with([T::lit(DUFFING_C1), T::lit(DUFFING_C2), T::lit(DUFFING_C3)], state, dt)
}

fn duffing_step_with<T: Real>(coeffs: [T; 3], state: [T; 2], dt: T) -> Result<[T; 2]> {
    let [c1, c2, c3] = coeffs;
    let [x1, x2] = state;
    let dx1 = x2;
    let dx2 = -c1 * x2 - (c2 * x1 * x1 + c3) * x1;
    let next = [x1 + dt * dx1, x2 + dt * dx2];
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow(format!(
            "Duffing step from [{}, {}] produced a non-finite state",
            x1, x2
        )));
    }
    Ok(next)
}

/// Forward-Euler step of the unicycle model. `state = (x, y, theta)`,
/// `input = (v, omega)`. The heading is not wrapped.
pub fn diffdrive_step<T: Real>(state: [T; 3], input: [T; 2], dt: T) -> Result<[T; 3]> {
    let [x, y, theta] = state;
    let [v, omega] = input;
    let next = [x + dt * v * theta.cos(), y + dt * v * theta.sin(), theta + dt * omega];
    if next.iter().any(|c| !c.is_finite()) {
        return Err(Error::NumericOverflow(
            "differential-drive step produced a non-finite state".into(),
        ));
    }
    Ok(next)
}

/// Input sequence driving a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSignal<T> {
    /// Unforced system.
    None,
    /// Explicit inputs; must hold at least `steps` vectors.
    Sequence(Vec<DVector<T>>),
    /// Independent uniform draws per channel, held constant for `hold` steps.
    PiecewiseUniform { lower: Vec<T>, upper: Vec<T>, hold: usize },
}

impl<T: Real> InputSignal<T> {
    fn realise(&self, input_dim: usize, steps: usize, seed: u64) -> Result<Vec<DVector<T>>> {
        match self {
            InputSignal::None => {
                if input_dim != 0 {
                    return Err(Error::Config(format!(
                        "system expects {input_dim} inputs but no input signal was given"
                    )));
                }
                Ok(Vec::new())
            }
            InputSignal::Sequence(seq) => {
                if seq.len() < steps {
                    return Err(Error::Shape(format!(
                        "input sequence has {} entries, need {steps}",
                        seq.len()
                    )));
                }
                if let Some(bad) = seq.iter().find(|u| u.len() != input_dim) {
                    return Err(Error::Shape(format!(
                        "input vector has dim {}, expected {input_dim}",
                        bad.len()
                    )));
                }
                Ok(seq[..steps].to_vec())
            }
            InputSignal::PiecewiseUniform { lower, upper, hold } => {
                if lower.len() != input_dim || upper.len() != input_dim {
                    return Err(Error::Config(format!(
                        "excitation bounds have dims {}/{}, expected {input_dim}",
                        lower.len(),
                        upper.len()
                    )));
                }
                if lower.iter().zip(upper).any(|(lo, hi)| lo > hi) {
                    return Err(Error::Config("excitation lower bound exceeds upper".into()));
                }
                let hold = (*hold).max(1);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut current = DVector::zeros(input_dim);
                let mut out = Vec::with_capacity(steps);
                for k in 0..steps {
                    if k % hold == 0 {
                        current = DVector::from_fn(input_dim, |i, _| {
                            let (lo, hi) = (lower[i].as_f64(), upper[i].as_f64());
                            if lo == hi {
                                lower[i]
                            } else {
                                T::lit(rng.random_range(lo..hi))
                            }
                        });
                    }
                    out.push(current.clone());
                }
                Ok(out)
            }
        }
    }
}

/// Measured outputs `y_0..y_K` and inputs `u_0..u_{K-1}` of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct TrajectoryData<T> {
    pub system: String,
    pub dt: T,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(with = "crate::serde_util::vectors")]
    outputs: Vec<DVector<T>>,
    #[serde(with = "crate::serde_util::vectors")]
    inputs: Vec<DVector<T>>,
}

impl<T: Real> TrajectoryData<T> {
    pub fn new(outputs: Vec<DVector<T>>, inputs: Vec<DVector<T>>, dt: T) -> Result<Self> {
        let traj = Self {
            system: String::new(),
            dt,
            seed: None,
            outputs,
            inputs,
        };
        traj.validate()?;
        Ok(traj)
    }

    /// Unforced trajectory from measurements only.
    pub fn from_outputs(outputs: Vec<DVector<T>>, dt: T) -> Result<Self> {
        Self::new(outputs, Vec::new(), dt)
    }

    pub fn with_system(mut self, name: impl Into<String>) -> Self {
        self.system = name.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.outputs.is_empty() {
            return Err(Error::Shape("trajectory has no samples".into()));
        }
        if !(self.dt > T::zero()) {
            return Err(Error::Input(format!("dt must be positive, got {}", self.dt)));
        }
        let ny = self.outputs[0].len();
        if ny == 0 || self.outputs.iter().any(|y| y.len() != ny) {
            return Err(Error::Shape("output vectors have inconsistent dimension".into()));
        }
        if !self.inputs.is_empty() {
            if self.inputs.len() + 1 != self.outputs.len() {
                return Err(Error::Shape(format!(
                    "{} outputs need {} inputs, got {}",
                    self.outputs.len(),
                    self.outputs.len() - 1,
                    self.inputs.len()
                )));
            }
            let nu = self.inputs[0].len();
            if self.inputs.iter().any(|u| u.len() != nu) {
                return Err(Error::Shape("input vectors have inconsistent dimension".into()));
            }
        }
        let finite = self
            .outputs
            .iter()
            .chain(&self.inputs)
            .all(|v| v.iter().all(|c| c.is_finite()));
        if !finite {
            return Err(Error::Input("trajectory contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn outputs(&self) -> &[DVector<T>] {
        &self.outputs
    }

    pub fn inputs(&self) -> &[DVector<T>] {
        &self.inputs
    }

    /// Number of output samples, `K + 1`.
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Number of transitions, `K`.
    pub fn steps(&self) -> usize {
        self.outputs.len().saturating_sub(1)
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.first().map_or(0, |y| y.len())
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, |u| u.len())
    }

    pub fn is_forced(&self) -> bool {
        !self.inputs.is_empty() && self.input_dim() > 0
    }

    /// `M_v = max_k ||y_k||_2`.
    pub fn max_output_norm(&self) -> T {
        self.outputs.iter().map(|y| y.norm()).fold(T::zero(), T::max)
    }

    /// First `samples` outputs (and matching inputs).
    pub fn prefix(&self, samples: usize) -> Result<Self> {
        if samples == 0 || samples > self.outputs.len() {
            return Err(Error::Shape(format!(
                "prefix of {samples} samples from a trajectory of {}",
                self.outputs.len()
            )));
        }
        let mut out = self.clone();
        out.outputs.truncate(samples);
        if !out.inputs.is_empty() {
            out.inputs.truncate(samples - 1);
        }
        Ok(out)
    }

    /// CSV with header `t,y1..,u1..`; one row per sample, `t = k * dt`. The
    /// final row has empty input fields.
    pub fn to_csv(&self) -> String {
        let ny = self.output_dim();
        let nu = self.input_dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=ny).map(|i| format!("y{i}")));
        header.extend((1..=nu).map(|i| format!("u{i}")));
        let mut out = header.join(",");
        out.push('\n');
        for (k, y) in self.outputs.iter().enumerate() {
            let t = T::lit(k as f64) * self.dt;
            let mut fields = vec![t.to_string()];
            fields.extend(y.iter().map(|v| v.to_string()));
            match self.inputs.get(k) {
                Some(u) => fields.extend(u.iter().map(|v| v.to_string())),
                None => fields.extend(std::iter::repeat_n(String::new(), nu)),
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses the CSV layout written by [`TrajectoryData::to_csv`]. `dt` is
    /// recovered from the first two time stamps.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Parse("empty CSV".into()))?
            .split(',')
            .map(|h| h.trim().to_string())
            .collect();
        if header.first().map(String::as_str) != Some("t") {
            return Err(Error::Parse("first CSV column must be `t`".into()));
        }
        let ny = header.iter().filter(|h| h.starts_with('y')).count();
        let nu = header.iter().filter(|h| h.starts_with('u')).count();
        if ny + nu + 1 != header.len() {
            return Err(Error::Parse(format!("unrecognised CSV header {header:?}")));
        }
        let parse = |s: &str, line: usize| -> Result<T> {
            s.trim()
                .parse::<f64>()
                .map(T::lit)
                .map_err(|e| Error::Parse(format!("line {line}: `{s}`: {e}")))
        };

        let mut times = Vec::new();
        let mut outputs = Vec::new();
        let mut inputs = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(Error::Parse(format!(
                    "line {lineno}: expected {} fields, found {}",
                    header.len(),
                    fields.len()
                )));
            }
            times.push(parse(fields[0], lineno)?);
            let y = fields[1..=ny]
                .iter()
                .map(|f| parse(f, lineno))
                .collect::<Result<Vec<T>>>()?;
            outputs.push(DVector::from_vec(y));
            let u_fields = &fields[1 + ny..];
            if nu > 0 && u_fields.iter().all(|f| !f.trim().is_empty()) {
                let u = u_fields.iter().map(|f| parse(f, lineno)).collect::<Result<Vec<T>>>()?;
                inputs.push(DVector::from_vec(u));
            }
        }
        if times.len() < 2 {
            return Err(Error::Parse("need at least two rows to recover dt".into()));
        }
        if nu > 0 && inputs.len() + 1 != outputs.len() {
            return Err(Error::Parse(format!(
                "{} rows carry inputs; expected all but the last of {}",
                inputs.len(),
                outputs.len()
            )));
        }
        Self::new(outputs, inputs, times[1] - times[0])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let traj: Self = serde_json::from_str(text)?;
        traj.validate()?;
        Ok(traj)
    }

    /// SHA-256 of the CSV encoding, hex encoded.
    pub fn content_hash(&self) -> String {
        hex_digest(self.to_csv().as_bytes())
    }
}

/// SHA-256 over the CSV encodings of all trajectories, in order.
pub fn dataset_hash<T: Real>(trajs: &[TrajectoryData<T>]) -> String {
    let mut hasher = Sha256::new();
    for t in trajs {
        hasher.update(t.to_csv().as_bytes());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Iterates the system from `x0` for `steps` transitions.
pub fn generate_trajectory<T: Real>(
    spec: &SystemSpec<T>,
    x0: &DVector<T>,
    inputs: &InputSignal<T>,
    steps: usize,
    seed: u64,
) -> Result<TrajectoryData<T>> {
    generate_trajectory_bounded(spec, x0, inputs, steps, seed, T::lit(DEFAULT_DIVERGENCE_BOUND))
}

/// [`generate_trajectory`] with an explicit escape bound on `|x_i|`.
pub fn generate_trajectory_bounded<T: Real>(
    spec: &SystemSpec<T>,
    x0: &DVector<T>,
    inputs: &InputSignal<T>,
    steps: usize,
    seed: u64,
    bound: T,
) -> Result<TrajectoryData<T>> {
    spec.validate()?;
    if steps == 0 {
        return Err(Error::Config("trajectory needs at least one step".into()));
    }
    if x0.len() != spec.state_dim {
        return Err(Error::Shape(format!(
            "initial state has dim {}, {} expects {}",
            x0.len(),
            spec.name,
            spec.state_dim
        )));
    }
    let us = inputs.realise(spec.input_dim, steps, seed)?;
    let empty = DVector::zeros(0);

    let check = |x: &DVector<T>, step: usize| -> Result<()> {
        let magnitude = x.amax();
        if !magnitude.is_finite() || magnitude > bound {
            return Err(Error::Divergence {
                step,
                magnitude: magnitude.as_f64(),
                bound: bound.as_f64(),
            });
        }
        Ok(())
    };

    check(x0, 0)?;
    let mut x = x0.clone();
    let mut outputs = Vec::with_capacity(steps + 1);
    outputs.push(spec.measure(&x));
    for k in 0..steps {
        let u = us.get(k).unwrap_or(&empty);
        x = match spec.step(&x, u) {
            Ok(next) => next,
            Err(Error::NumericOverflow(_)) => {
                return Err(Error::Divergence {
                    step: k + 1,
                    magnitude: f64::INFINITY,
                    bound: bound.as_f64(),
                })
            }
            Err(e) => return Err(e),
        };
        check(&x, k + 1)?;
        outputs.push(spec.measure(&x));
    }

    let mut traj = TrajectoryData::new(outputs, us, spec.dt)?;
    traj.system = spec.name.clone();
    traj.seed = Some(seed);
    Ok(traj)
}

/// `count` trajectories with seeded random initial conditions. Trajectory
/// `i` uses seed `seed + i` for both its initial state and its excitation.
pub fn generate_batch<T: Real>(
    spec: &SystemSpec<T>,
    excitation: &InputSignal<T>,
    count: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<TrajectoryData<T>>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let traj_seed = seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(traj_seed);
            let x0 = spec.sample_initial_state(&mut rng);
            generate_trajectory(spec, &x0, excitation, steps, traj_seed)
        })
        .collect()
}
