//! Least-squares identification of the lifted linear model
//! `psi_{k+1} = A psi_k + B u_k`, `y_k = C psi_k`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::{Dictionary, LiftedSnapshots};
use crate::linalg;
use crate::scalar::Real;

/// Ridge used for every method unless configured otherwise.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Eigenvalues with `|lambda| > 1 + STABILITY_TOL` count as unstable.
pub const STABILITY_TOL: f64 = 1e-9;

/// Escape bound for open-loop rollouts.
pub const ROLLOUT_BOUND: f64 = 1e6;

/// Provenance carried alongside a model file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub system: Option<String>,
    pub method: Option<String>,
    pub master_seed: Option<u64>,
    pub source_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct KoopmanModel<T: Real> {
    #[serde(with = "crate::serde_util::matrix")]
    a: DMatrix<T>,
    #[serde(with = "crate::serde_util::matrix")]
    b: DMatrix<T>,
    #[serde(with = "crate::serde_util::matrix")]
    c: DMatrix<T>,
    ridge: T,
    #[serde(with = "crate::serde_util::complex_list")]
    eigenvalues: Vec<Complex<T>>,
    #[serde(default)]
    dictionary: Option<Dictionary<T>>,
    #[serde(default)]
    lineage: Lineage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneStep<T: Real> {
    pub psi_next: DVector<T>,
    pub y_hat: DVector<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Evaluation<T> {
    pub nrmse: T,
    /// `||y_hat_k - y_k||_2` per test column.
    pub per_step_errors: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout<T: Real> {
    pub outputs: Vec<DVector<T>>,
    /// Step at which the lifted state left the rollout bound.
    pub diverged_at: Option<usize>,
}

/// Measured outputs beside one-step and open-loop predictions over one
/// contiguous snapshot sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction<T: Real> {
    pub truth: Vec<DVector<T>>,
    pub onestep: Vec<DVector<T>>,
    /// Shorter than `truth` when the rollout diverged.
    pub rollout: Vec<DVector<T>>,
    pub onestep_nrmse: T,
    pub rollout_nrmse: T,
    pub diverged_at: Option<usize>,
}

impl<T: Real> Reconstruction<T> {
    /// Rows `k, y_true.., y_onestep.., y_rollout..`; rollout fields are empty
    /// after divergence.
    pub fn to_csv(&self) -> String {
        let ny = self.truth.first().map_or(0, |y| y.len());
        let mut header = vec!["k".to_string()];
        for tag in ["true", "onestep", "rollout"] {
            header.extend((1..=ny).map(|i| format!("y{i}_{tag}")));
        }
        let mut out = header.join(",");
        out.push('\n');
        for (k, (y, p)) in self.truth.iter().zip(&self.onestep).enumerate() {
            let mut row = vec![(k + 1).to_string()];
            row.extend(y.iter().chain(p.iter()).map(|v| v.to_string()));
            match self.rollout.get(k) {
                Some(r) => row.extend(r.iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), ny)),
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn nrmse<T: Real>(pred: &[DVector<T>], truth: &[DVector<T>]) -> T {
    if pred.is_empty() {
        return T::lit(f64::NAN);
    }
    let ny = truth[0].len();
    let sse = pred
        .iter()
        .zip(truth)
        .fold(T::zero(), |acc, (p, y)| acc + (p - y).norm_squared());
    (sse / T::lit((pred.len() * ny) as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Spectrum<T> {
    #[serde(with = "crate::serde_util::complex_list")]
    pub eigenvalues: Vec<Complex<T>>,
    pub unstable_count: usize,
}

/// Output projection `C = [I_{n_y} 0]`.
pub fn output_projection<T: Real>(output_dim: usize, lift_dim: usize) -> DMatrix<T> {
    DMatrix::from_fn(output_dim, lift_dim, |i, j| if i == j { T::one() } else { T::zero() })
}

pub fn is_stable<T: Real>(lambda: &Complex<T>) -> bool {
    linalg::modulus(lambda) <= T::one() + T::lit(STABILITY_TOL)
}

/// Identifies `[A B]` from snapshot data.
///
/// With `ridge == 0` the solution is `Psi' [Psi; U]^+` using the
/// pseudoinverse (singular values below `max(dims) * eps * sigma_max` are
/// dropped). With `ridge > 0` it is `Psi' Z^T (Z Z^T + ridge I)^{-1}`.
pub fn identify<T: Real>(snapshots: &LiftedSnapshots<T>, ridge: T) -> Result<KoopmanModel<T>> {
    if !(ridge >= T::zero()) || !ridge.is_finite() {
        return Err(Error::Domain(format!("ridge must be non-negative, got {ridge}")));
    }
    if snapshots.samples() == 0 {
        return Err(Error::Shape("no snapshot pairs to regress on".into()));
    }
    let z = snapshots.regressors();
    if !linalg::all_finite(&z) || !linalg::all_finite(snapshots.psi_next()) {
        return Err(Error::Input("snapshot matrices contain NaN or infinity".into()));
    }
    let n = snapshots.lift_dim();
    let m = snapshots.input_dim();

    let ab = if ridge == T::zero() {
        snapshots.psi_next() * linalg::pseudo_inverse(&z)?
    } else {
        // (Z Z^T + ridge I) X = Z Psi'^T, then [A B] = X^T
        let mut gram = &z * z.transpose();
        for i in 0..gram.nrows() {
            gram[(i, i)] += ridge;
        }
        let rhs = &z * snapshots.psi_next().transpose();
        linalg::solve_spd(&gram, &rhs)?.transpose()
    };
    if !linalg::all_finite(&ab) {
        return Err(Error::NumericOverflow("regression produced non-finite operator".into()));
    }

    let a = ab.columns(0, n).into_owned();
    let b = ab.columns(n, m).into_owned();
    KoopmanModel::from_parts(a, b, snapshots.output_dim(), ridge)
}

impl<T: Real> KoopmanModel<T> {
    /// Assembles a model from explicit operators; `C` is the canonical
    /// projection onto the first `output_dim` coordinates.
    pub fn from_parts(a: DMatrix<T>, b: DMatrix<T>, output_dim: usize, ridge: T) -> Result<Self> {
        if !a.is_square() || b.nrows() != a.nrows() {
            return Err(Error::Shape(format!("A is {:?}, B is {:?}", a.shape(), b.shape())));
        }
        if output_dim == 0 || output_dim > a.nrows() {
            return Err(Error::Shape(format!(
                "output dim {output_dim} does not fit lift dim {}",
                a.nrows()
            )));
        }
        let eigenvalues = linalg::eigenvalues(&a)?;
        let c = output_projection(output_dim, a.nrows());
        Ok(Self {
            a,
            b,
            c,
            ridge,
            eigenvalues,
            dictionary: None,
            lineage: Lineage::default(),
        })
    }

    pub fn with_dictionary(mut self, dictionary: Dictionary<T>) -> Result<Self> {
        if dictionary.lift_dim() != self.lift_dim() || dictionary.output_dim() != self.output_dim() {
            return Err(Error::Shape(format!(
                "dictionary lifts to {} (n_y={}), model has {} (n_y={})",
                dictionary.lift_dim(),
                dictionary.output_dim(),
                self.lift_dim(),
                self.output_dim()
            )));
        }
        self.dictionary = Some(dictionary);
        Ok(self)
    }

    pub fn with_lineage(mut self, lineage: Lineage) -> Self {
        self.lineage = lineage;
        self
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn eigenvalues(&self) -> &[Complex<T>] {
        &self.eigenvalues
    }

    pub fn dictionary(&self) -> Option<&Dictionary<T>> {
        self.dictionary.as_ref()
    }

    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    pub fn lift_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// `[A B]` as one matrix.
    pub fn operator(&self) -> DMatrix<T> {
        let n = self.lift_dim();
        let mut ab = DMatrix::zeros(n, n + self.input_dim());
        ab.columns_mut(0, n).copy_from(&self.a);
        ab.columns_mut(n, self.input_dim()).copy_from(&self.b);
        ab
    }

    fn advance(&self, psi: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let mut next = &self.a * psi;
        if self.input_dim() > 0 {
            next += &self.b * u;
        }
        next
    }

    pub fn predict_onestep(&self, psi: &DVector<T>, u: &DVector<T>) -> Result<OneStep<T>> {
        if psi.len() != self.lift_dim() {
            return Err(Error::Shape(format!(
                "lifted state has dim {}, model expects {}",
                psi.len(),
                self.lift_dim()
            )));
        }
        if u.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has dim {}, model expects {}",
                u.len(),
                self.input_dim()
            )));
        }
        let psi_next = self.advance(psi, u);
        let y_hat = &self.c * &psi_next;
        Ok(OneStep { psi_next, y_hat })
    }

    /// One-step-ahead NRMSE, `sqrt(sum ||y_hat - y||^2 / (N n_y))`, over the
    /// columns of `test`.
    pub fn evaluate_onestep(&self, test: &LiftedSnapshots<T>) -> Result<Evaluation<T>> {
        if test.samples() == 0 {
            return Err(Error::Shape("empty test set".into()));
        }
        if test.lift_dim() != self.lift_dim() || test.input_dim() != self.input_dim() {
            return Err(Error::Shape(format!(
                "test snapshots have n_psi={}, n_u={}; model has n_psi={}, n_u={}",
                test.lift_dim(),
                test.input_dim(),
                self.lift_dim(),
                self.input_dim()
            )));
        }
        let mut predicted = &self.a * test.psi();
        if self.input_dim() > 0 {
            predicted += &self.b * test.inputs();
        }
        let ny = self.output_dim();
        let residual = predicted.rows(0, ny) - test.psi_next().rows(0, ny);
        let per_step_errors: Vec<T> = residual.column_iter().map(|c| c.norm()).collect();
        let sse = per_step_errors.iter().fold(T::zero(), |acc, e| acc + *e * *e);
        let denom = T::lit((test.samples() * ny) as f64);
        Ok(Evaluation {
            nrmse: (sse / denom).sqrt(),
            per_step_errors,
        })
    }

    /// Open-loop prediction from `psi0`, one output per input vector. For an
    /// unforced model pass zero-length input vectors.
    pub fn rollout(&self, psi0: &DVector<T>, inputs: &[DVector<T>]) -> Result<Rollout<T>> {
        if psi0.len() != self.lift_dim() {
            return Err(Error::Shape(format!(
                "initial lifted state has dim {}, model expects {}",
                psi0.len(),
                self.lift_dim()
            )));
        }
        let bound = T::lit(ROLLOUT_BOUND);
        let mut psi = psi0.clone();
        let mut outputs = Vec::with_capacity(inputs.len());
        for (k, u) in inputs.iter().enumerate() {
            let step = self.predict_onestep(&psi, u)?;
            let magnitude = step.psi_next.amax();
            if !magnitude.is_finite() || magnitude > bound {
                return Ok(Rollout {
                    outputs,
                    diverged_at: Some(k + 1),
                });
            }
            outputs.push(step.y_hat);
            psi = step.psi_next;
        }
        Ok(Rollout {
            outputs,
            diverged_at: None,
        })
    }

    pub fn rollout_unforced(&self, psi0: &DVector<T>, steps: usize) -> Result<Rollout<T>> {
        let inputs = vec![DVector::zeros(self.input_dim()); steps];
        self.rollout(psi0, &inputs)
    }

    /// One-step predictions and an open-loop rollout from the first lifted
    /// state, both compared with the measured outputs in `Psi'`. The snapshots
    /// must come from a single trajectory.
    pub fn reconstruct(&self, snapshots: &LiftedSnapshots<T>) -> Result<Reconstruction<T>> {
        let eval = self.evaluate_onestep(snapshots)?;
        let ny = self.output_dim();
        let truth: Vec<DVector<T>> = snapshots
            .psi_next()
            .column_iter()
            .map(|c| c.rows(0, ny).into_owned())
            .collect();
        let inputs: Vec<DVector<T>> = snapshots.inputs().column_iter().map(|c| c.into_owned()).collect();
        let mut onestep = Vec::with_capacity(truth.len());
        for (j, u) in inputs.iter().enumerate() {
            onestep.push(self.predict_onestep(&snapshots.psi().column(j).into_owned(), u)?.y_hat);
        }
        let roll = self.rollout(&snapshots.psi().column(0).into_owned(), &inputs)?;
        Ok(Reconstruction {
            rollout_nrmse: nrmse(&roll.outputs, &truth[..roll.outputs.len()]),
            onestep_nrmse: eval.nrmse,
            truth,
            onestep,
            rollout: roll.outputs,
            diverged_at: roll.diverged_at,
        })
    }

    pub fn spectrum(&self) -> Spectrum<T> {
        let unstable_count = self.eigenvalues.iter().filter(|l| !is_stable(*l)).count();
        Spectrum {
            eigenvalues: self.eigenvalues.clone(),
            unstable_count,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a model file and recomputes the cached spectrum from `A`.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut model: Self = serde_json::from_str(text)?;
        if !model.a.is_square() || model.b.nrows() != model.a.nrows() {
            return Err(Error::Parse("model file has inconsistent A/B shapes".into()));
        }
        let expected_c = output_projection::<T>(model.c.nrows(), model.a.nrows());
        if model.c != expected_c {
            return Err(Error::Parse("model output matrix is not [I 0]".into()));
        }
        model.eigenvalues = linalg::eigenvalues(&model.a)?;
        Ok(model)
    }
}
