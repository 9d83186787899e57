//! Dictionaries that lift measurements into snapshot matrices.
//!
//! Every dictionary places the raw measurement in the top `n_y` coordinates
//! of the lifted vector, so the output map is always `C = [I 0]`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryData;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::linalg;
use crate::reservoir::Reservoir;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DictionaryKind {
    Reservoir,
    Rbf,
    Hankel,
}

/// A lifting map together with everything needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub enum Dictionary<T> {
    /// `psi_k = [y_k; r_k]` with `r_k` the driven reservoir state.
    Reservoir { reservoir: Reservoir<T>, washout: usize },
    /// `psi_k = [y_k; g_1(y_k); ...]` with Gaussian kernels.
    Rbf {
        output_dim: usize,
        #[serde(with = "crate::serde_util::vectors")]
        centers: Vec<DVector<T>>,
        width: T,
    },
    /// `psi_k = [y_k; y_{k-1}; ...; y_{k-d+1}]`, newest block first.
    Hankel { output_dim: usize, delays: usize },
}

impl<T: Real> Dictionary<T> {
    pub fn reservoir(reservoir: Reservoir<T>, washout: usize) -> Self {
        Dictionary::Reservoir { reservoir, washout }
    }

    pub fn rbf(output_dim: usize, centers: Vec<DVector<T>>, width: T) -> Result<Self> {
        if !(width > T::zero()) || !width.is_finite() {
            return Err(Error::Domain(format!("RBF width must be positive, got {width}")));
        }
        if output_dim == 0 {
            return Err(Error::Shape("RBF dictionary needs a positive output dimension".into()));
        }
        if let Some(c) = centers.iter().find(|c| c.len() != output_dim) {
            return Err(Error::Shape(format!(
                "RBF center has dim {}, expected {output_dim}",
                c.len()
            )));
        }
        Ok(Dictionary::Rbf {
            output_dim,
            centers,
            width,
        })
    }

    pub fn hankel(output_dim: usize, delays: usize) -> Result<Self> {
        if delays == 0 || output_dim == 0 {
            return Err(Error::Shape(format!(
                "Hankel dictionary needs d >= 1 and n_y >= 1 (got d={delays}, n_y={output_dim})"
            )));
        }
        Ok(Dictionary::Hankel { output_dim, delays })
    }

    /// Gaussian RBF dictionary with `count` centers placed by Latin-hypercube
    /// sampling over the bounding box of `data`. The kernel width is
    /// `width_factor` times the median pairwise center distance.
    pub fn fit_rbf(data: &[TrajectoryData<T>], count: usize, width_factor: T, seed: u64) -> Result<Self> {
        let centers = latin_hypercube_centers(data, count, seed)?;
        let output_dim = data[0].output_dim();
        let base = median_pairwise_distance(&centers).unwrap_or_else(|| {
            let (lo, hi) = bounding_box(data);
            let diag = (hi - lo).norm();
            if diag > T::zero() {
                diag
            } else {
                T::one()
            }
        });
        Self::rbf(output_dim, centers, width_factor * base)
    }

    pub fn kind(&self) -> DictionaryKind {
        match self {
            Dictionary::Reservoir { .. } => DictionaryKind::Reservoir,
            Dictionary::Rbf { .. } => DictionaryKind::Rbf,
            Dictionary::Hankel { .. } => DictionaryKind::Hankel,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Dictionary::Reservoir { reservoir, .. } => reservoir.input_dim(),
            Dictionary::Rbf { output_dim, .. } | Dictionary::Hankel { output_dim, .. } => *output_dim,
        }
    }

    /// `n_psi`.
    pub fn lift_dim(&self) -> usize {
        match self {
            Dictionary::Reservoir { reservoir, .. } => reservoir.input_dim() + reservoir.reservoir_dim(),
            Dictionary::Rbf {
                output_dim, centers, ..
            } => output_dim + centers.len(),
            Dictionary::Hankel { output_dim, delays } => output_dim * delays,
        }
    }

    pub fn lift(&self, traj: &TrajectoryData<T>) -> Result<LiftedSnapshots<T>> {
        match self {
            Dictionary::Reservoir { reservoir, washout } => lift_reservoir(reservoir, traj, *washout),
            Dictionary::Rbf { centers, width, .. } => lift_rbf(centers, *width, traj),
            Dictionary::Hankel { delays, .. } => lift_hankel(*delays, traj),
        }
    }

    /// Lifts each trajectory separately and concatenates the snapshots.
    pub fn lift_all(&self, trajs: &[TrajectoryData<T>]) -> Result<LiftedSnapshots<T>> {
        let batches = trajs.iter().map(|t| self.lift(t)).collect::<Result<Vec<_>>>()?;
        concat_snapshots(&batches)
    }

    pub fn descriptor(&self) -> DictionaryDescriptor {
        let mut params = BTreeMap::new();
        match self {
            Dictionary::Reservoir { reservoir, washout } => {
                let cfg = reservoir.config();
                params.insert("reservoir_dim".into(), reservoir.reservoir_dim() as f64);
                params.insert("spectral_radius".into(), reservoir.actual_spectral_radius().as_f64());
                params.insert("input_scaling".into(), cfg.input_scaling.as_f64());
                params.insert("density".into(), cfg.density.as_f64());
                params.insert("seed".into(), cfg.seed as f64);
                params.insert("washout".into(), *washout as f64);
            }
            Dictionary::Rbf { centers, width, .. } => {
                params.insert("centers".into(), centers.len() as f64);
                params.insert("width".into(), width.as_f64());
            }
            Dictionary::Hankel { delays, .. } => {
                params.insert("delays".into(), *delays as f64);
            }
        }
        DictionaryDescriptor {
            kind: self.kind(),
            lift_dim: self.lift_dim(),
            output_dim: self.output_dim(),
            params,
        }
    }
}

/// Compact summary of a dictionary for file sidecars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryDescriptor {
    pub kind: DictionaryKind,
    pub lift_dim: usize,
    pub output_dim: usize,
    pub params: BTreeMap<String, f64>,
}

/// Time-shifted snapshot matrices `Psi`, `Psi'` and inputs `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSnapshots<T: Real> {
    psi: DMatrix<T>,
    psi_next: DMatrix<T>,
    inputs: DMatrix<T>,
    output_dim: usize,
}

impl<T: Real> LiftedSnapshots<T> {
    pub fn new(psi: DMatrix<T>, psi_next: DMatrix<T>, inputs: DMatrix<T>, output_dim: usize) -> Result<Self> {
        if psi.shape() != psi_next.shape() {
            return Err(Error::Shape(format!(
                "Psi is {:?} but Psi' is {:?}",
                psi.shape(),
                psi_next.shape()
            )));
        }
        if inputs.ncols() != psi.ncols() {
            return Err(Error::Shape(format!(
                "U has {} columns, Psi has {}",
                inputs.ncols(),
                psi.ncols()
            )));
        }
        if output_dim == 0 || output_dim > psi.nrows() {
            return Err(Error::Shape(format!(
                "output dim {output_dim} does not fit lift dim {}",
                psi.nrows()
            )));
        }
        if !(linalg::all_finite(&psi) && linalg::all_finite(&psi_next) && linalg::all_finite(&inputs)) {
            return Err(Error::Input("snapshot matrices contain non-finite values".into()));
        }
        Ok(Self {
            psi,
            psi_next,
            inputs,
            output_dim,
        })
    }

    /// Builds `Psi = [psi_0..psi_{M-2}]`, `Psi' = [psi_1..psi_{M-1}]` from a
    /// contiguous lifted sequence, with `inputs[j]` driving transition `j`.
    fn from_sequence(
        lifted: &[DVector<T>],
        inputs: &[DVector<T>],
        input_dim: usize,
        output_dim: usize,
    ) -> Result<Self> {
        if lifted.len() < 2 {
            return Err(Error::Shape(format!(
                "need at least two lifted samples to form a snapshot pair, got {}",
                lifted.len()
            )));
        }
        let k = lifted.len() - 1;
        let n = lifted[0].len();
        let psi = DMatrix::from_fn(n, k, |i, j| lifted[j][i]);
        let psi_next = DMatrix::from_fn(n, k, |i, j| lifted[j + 1][i]);
        let u = if input_dim == 0 {
            DMatrix::zeros(0, k)
        } else {
            if inputs.len() < k {
                return Err(Error::Shape(format!("{} inputs for {k} transitions", inputs.len())));
            }
            DMatrix::from_fn(input_dim, k, |i, j| inputs[j][i])
        };
        Self::new(psi, psi_next, u, output_dim)
    }

    pub fn psi(&self) -> &DMatrix<T> {
        &self.psi
    }

    pub fn psi_next(&self) -> &DMatrix<T> {
        &self.psi_next
    }

    pub fn inputs(&self) -> &DMatrix<T> {
        &self.inputs
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn lift_dim(&self) -> usize {
        self.psi.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    /// Number of snapshot pairs `K`.
    pub fn samples(&self) -> usize {
        self.psi.ncols()
    }

    /// `K > n_psi + n_u`.
    pub fn is_overdetermined(&self) -> bool {
        self.samples() > self.lift_dim() + self.input_dim()
    }

    /// Regressor matrix `Z = [Psi; U]`.
    pub fn regressors(&self) -> DMatrix<T> {
        let n = self.lift_dim();
        let m = self.input_dim();
        let mut z = DMatrix::zeros(n + m, self.samples());
        z.rows_mut(0, n).copy_from(&self.psi);
        if m > 0 {
            z.rows_mut(n, m).copy_from(&self.inputs);
        }
        z
    }

    /// Writes `<stem>_psi.csv`, `<stem>_psi_next.csv`, `<stem>_u.csv` and a
    /// `<stem>.json` sidecar.
    pub fn write_csv_triple(
        &self,
        dir: &Path,
        stem: &str,
        dictionary: &DictionaryDescriptor,
        source_hash: &str,
    ) -> Result<SnapshotSidecar> {
        fs::create_dir_all(dir)?;
        let sidecar = SnapshotSidecar {
            lift_dim: self.lift_dim(),
            input_dim: self.input_dim(),
            output_dim: self.output_dim,
            samples: self.samples(),
            dictionary: dictionary.clone(),
            source_hash: source_hash.to_string(),
        };
        for (suffix, m) in [("psi", &self.psi), ("psi_next", &self.psi_next), ("u", &self.inputs)] {
            write_atomic(&dir.join(format!("{stem}_{suffix}.csv")), matrix_to_csv(m).as_bytes())?;
        }
        write_atomic(
            &dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&sidecar)?.as_bytes(),
        )?;
        Ok(sidecar)
    }

    pub fn read_csv_triple(dir: &Path, stem: &str) -> Result<(Self, SnapshotSidecar)> {
        let path = |suffix: &str| -> PathBuf { dir.join(format!("{stem}_{suffix}.csv")) };
        let sidecar: SnapshotSidecar = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let psi = matrix_from_csv(&fs::read_to_string(path("psi"))?, sidecar.lift_dim, sidecar.samples)?;
        let psi_next = matrix_from_csv(
            &fs::read_to_string(path("psi_next"))?,
            sidecar.lift_dim,
            sidecar.samples,
        )?;
        let inputs = matrix_from_csv(&fs::read_to_string(path("u"))?, sidecar.input_dim, sidecar.samples)?;
        Ok((Self::new(psi, psi_next, inputs, sidecar.output_dim)?, sidecar))
    }
}

/// JSON sidecar describing a snapshot triple on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSidecar {
    pub lift_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub samples: usize,
    pub dictionary: DictionaryDescriptor,
    pub source_hash: String,
}

fn matrix_to_csv<T: Real>(m: &DMatrix<T>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn matrix_from_csv<T: Real>(text: &str, rows: usize, cols: usize) -> Result<DMatrix<T>> {
    let mut data = Vec::with_capacity(rows * cols);
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != rows {
        return Err(Error::Parse(format!(
            "expected {rows} matrix rows, found {}",
            lines.len()
        )));
    }
    for line in lines {
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::Parse(format!("`{f}`: {e}")))
            })
            .collect::<Result<Vec<T>>>()?;
        if row.len() != cols {
            return Err(Error::Parse(format!("expected {cols} columns, found {}", row.len())));
        }
        data.extend(row);
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Reservoir lift: drives the reservoir with the measurements (`v_k = y_k`)
/// from the zero state, drops `washout` samples and stacks `[y_k; r_k]`.
pub fn lift_reservoir<T: Real>(
    reservoir: &Reservoir<T>,
    traj: &TrajectoryData<T>,
    washout: usize,
) -> Result<LiftedSnapshots<T>> {
    let ny = traj.output_dim();
    if ny != reservoir.input_dim() {
        return Err(Error::Shape(format!(
            "trajectory has {ny} outputs, reservoir expects {}",
            reservoir.input_dim()
        )));
    }
    if traj.len() < washout + 2 {
        return Err(Error::Shape(format!(
            "{} samples leave no snapshot pair after a washout of {washout}",
            traj.len()
        )));
    }
    let r0 = DVector::zeros(reservoir.reservoir_dim());
    let states = reservoir.drive(traj.outputs(), &r0, washout)?;
    let lifted: Vec<DVector<T>> = traj.outputs()[washout..]
        .iter()
        .zip(&states)
        .map(|(y, r)| stack(&[y, r]))
        .collect();
    let inputs = if traj.is_forced() {
        &traj.inputs()[washout..]
    } else {
        &[][..]
    };
    LiftedSnapshots::from_sequence(&lifted, inputs, traj.input_dim(), ny)
}

/// Gaussian RBF lift `[y; exp(-||y - c_i||^2 / (2 w^2))]`.
pub fn lift_rbf<T: Real>(centers: &[DVector<T>], width: T, traj: &TrajectoryData<T>) -> Result<LiftedSnapshots<T>> {
    if !(width > T::zero()) || !width.is_finite() {
        return Err(Error::Domain(format!("RBF width must be positive, got {width}")));
    }
    let ny = traj.output_dim();
    if let Some(c) = centers.iter().find(|c| c.len() != ny) {
        return Err(Error::Shape(format!(
            "RBF center has dim {}, outputs have {ny}",
            c.len()
        )));
    }
    if traj.len() < 2 {
        return Err(Error::Shape("RBF lift needs at least two samples".into()));
    }
    let lifted: Vec<DVector<T>> = traj
        .outputs()
        .iter()
        .map(|y| {
            let features = DVector::from_iterator(centers.len(), centers.iter().map(|c| rbf_kernel(y, c, width)));
            stack(&[y, &features])
        })
        .collect();
    LiftedSnapshots::from_sequence(&lifted, traj.inputs(), traj.input_dim(), ny)
}

pub fn rbf_kernel<T: Real>(y: &DVector<T>, center: &DVector<T>, width: T) -> T {
    let d2 = (y - center).norm_squared();
    (-d2 / (T::lit(2.0) * width * width)).exp()
}

/// Delay-embedding lift `[y_k; y_{k-1}; ...; y_{k-d+1}]`. The first `d - 1`
/// samples only feed the window.
pub fn lift_hankel<T: Real>(delays: usize, traj: &TrajectoryData<T>) -> Result<LiftedSnapshots<T>> {
    if delays == 0 {
        return Err(Error::Shape("Hankel lift needs at least one delay".into()));
    }
    if traj.len() < delays + 1 {
        return Err(Error::Shape(format!(
            "trajectory of {} samples is too short for {delays} delays",
            traj.len()
        )));
    }
    let ys = traj.outputs();
    let lifted: Vec<DVector<T>> = (delays - 1..ys.len())
        .map(|k| {
            let window: Vec<&DVector<T>> = (0..delays).map(|j| &ys[k - j]).collect();
            stack(&window)
        })
        .collect();
    let inputs = if traj.is_forced() {
        &traj.inputs()[delays - 1..]
    } else {
        &[][..]
    };
    LiftedSnapshots::from_sequence(&lifted, inputs, traj.input_dim(), traj.output_dim())
}

/// Column-wise concatenation of snapshot batches. Pairs never straddle two
/// batches.
pub fn concat_snapshots<T: Real>(batches: &[LiftedSnapshots<T>]) -> Result<LiftedSnapshots<T>> {
    let first = batches
        .first()
        .ok_or_else(|| Error::Shape("no snapshot batches to concatenate".into()))?;
    let (n, m, ny) = (first.lift_dim(), first.input_dim(), first.output_dim());
    if let Some(b) = batches
        .iter()
        .find(|b| b.lift_dim() != n || b.input_dim() != m || b.output_dim() != ny)
    {
        return Err(Error::Shape(format!(
            "batch dims (n_psi={}, n_u={}, n_y={}) differ from (n_psi={n}, n_u={m}, n_y={ny})",
            b.lift_dim(),
            b.input_dim(),
            b.output_dim()
        )));
    }
    let total: usize = batches.iter().map(|b| b.samples()).sum();
    let mut psi = DMatrix::zeros(n, total);
    let mut psi_next = DMatrix::zeros(n, total);
    let mut inputs = DMatrix::zeros(m, total);
    let mut col = 0;
    for b in batches {
        let k = b.samples();
        psi.columns_mut(col, k).copy_from(&b.psi);
        psi_next.columns_mut(col, k).copy_from(&b.psi_next);
        inputs.columns_mut(col, k).copy_from(&b.inputs);
        col += k;
    }
    LiftedSnapshots::new(psi, psi_next, inputs, ny)
}

fn stack<T: Real>(parts: &[&DVector<T>]) -> DVector<T> {
    DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}

fn bounding_box<T: Real>(data: &[TrajectoryData<T>]) -> (DVector<T>, DVector<T>) {
    let ny = data[0].output_dim();
    let mut lo = data[0].outputs()[0].clone();
    let mut hi = lo.clone();
    for y in data.iter().flat_map(|t| t.outputs()) {
        for i in 0..ny {
            lo[i] = lo[i].min(y[i]);
            hi[i] = hi[i].max(y[i]);
        }
    }
    (lo, hi)
}

/// Latin-hypercube sample of `count` points in the bounding box of the
/// measurements in `data`.
pub fn latin_hypercube_centers<T: Real>(
    data: &[TrajectoryData<T>],
    count: usize,
    seed: u64,
) -> Result<Vec<DVector<T>>> {
    if data.is_empty() {
        return Err(Error::Shape("cannot place RBF centers without data".into()));
    }
    let ny = data[0].output_dim();
    if data.iter().any(|t| t.output_dim() != ny) {
        return Err(Error::Shape("trajectories have different output dimensions".into()));
    }
    let (lo, hi) = bounding_box(data);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![DVector::zeros(ny); count];
    for dim in 0..ny {
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(&mut rng);
        let (a, b) = (lo[dim].as_f64(), hi[dim].as_f64());
        for (center, stratum) in centers.iter_mut().zip(strata) {
            let unit = (stratum as f64 + rng.random::<f64>()) / count as f64;
            center[dim] = T::lit(a + unit * (b - a));
        }
    }
    Ok(centers)
}

/// Median of all pairwise Euclidean distances; `None` for fewer than two
/// points or when every point coincides.
pub fn median_pairwise_distance<T: Real>(points: &[DVector<T>]) -> Option<T> {
    let mut dists = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            dists.push((&points[i] - &points[j]).norm());
        }
    }
    if dists.is_empty() {
        return None;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let n = dists.len();
    let median = if n % 2 == 1 {
        dists[n / 2]
    } else {
        (dists[n / 2 - 1] + dists[n / 2]) / T::lit(2.0)
    };
    (median > T::zero()).then_some(median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::{Activation, ReservoirConfig};
    use approx::assert_relative_eq;

    fn ramp(n: usize, dim: usize) -> TrajectoryData<f64> {
        let ys = (0..n)
            .map(|k| DVector::from_fn(dim, |i, _| (k * 10 + i) as f64))
            .collect();
        TrajectoryData::from_outputs(ys, 0.1).unwrap()
    }

    #[test]
    fn hankel_window_by_hand() {
        let traj = ramp(4, 1); // y = 0, 10, 20, 30
        let snaps = lift_hankel(2, &traj).unwrap();
        assert_eq!(snaps.psi(), &DMatrix::from_row_slice(2, 2, &[10.0, 20.0, 0.0, 10.0]));
        assert_eq!(
            snaps.psi_next(),
            &DMatrix::from_row_slice(2, 2, &[20.0, 30.0, 10.0, 20.0])
        );
    }

    #[test]
    fn hankel_single_delay_is_raw_data() {
        let traj = ramp(6, 2);
        let snaps = lift_hankel(1, &traj).unwrap();
        for (j, y) in traj.outputs()[..5].iter().enumerate() {
            assert_eq!(snaps.psi().column(j), y.column(0));
        }
    }

    #[test]
    fn hankel_constant_signal() {
        let c = DVector::from_vec(vec![1.5, -2.0]);
        let traj = TrajectoryData::from_outputs(vec![c.clone(); 10], 0.1).unwrap();
        let snaps = lift_hankel(3, &traj).unwrap();
        let expected = DVector::from_vec(vec![1.5, -2.0, 1.5, -2.0, 1.5, -2.0]);
        for col in snaps.psi().column_iter() {
            assert_eq!(col, expected.column(0));
        }
    }

    #[test]
    fn hankel_too_short() {
        assert!(matches!(lift_hankel(4, &ramp(4, 1)), Err(Error::Shape(_))));
    }

    #[test]
    fn rbf_kernel_values() {
        let c = DVector::from_vec(vec![0.3, -0.2]);
        assert_eq!(rbf_kernel(&c, &c, 0.7), 1.0);
        let w = 0.7;
        let r = w * (2.0 * 2.0_f64.ln()).sqrt();
        let y = &c + DVector::from_vec(vec![r, 0.0]);
        assert_relative_eq!(rbf_kernel(&y, &c, w), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn rbf_lift_keeps_measurements_on_top() {
        let traj = ramp(8, 2);
        let centers = vec![DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![30.0, 31.0])];
        let snaps = lift_rbf(&centers, 5.0, &traj).unwrap();
        assert_eq!(snaps.lift_dim(), 4);
        for j in 0..snaps.samples() {
            assert_eq!(snaps.psi().fixed_view::<2, 1>(0, j), traj.outputs()[j].column(0));
        }
        assert!(matches!(lift_rbf(&centers, 0.0, &traj), Err(Error::Domain(_))));
        assert!(matches!(lift_rbf(&centers, -1.0, &traj), Err(Error::Domain(_))));
    }

    #[test]
    fn reservoir_lift_structure() {
        let res = Reservoir::build(ReservoirConfig::new(5, 2, 0.9).with_seed(1)).unwrap();
        let traj = ramp(30, 2);
        let snaps = lift_reservoir(&res, &traj, 10).unwrap();
        assert_eq!(snaps.lift_dim(), 7);
        assert_eq!(snaps.samples(), 19);
        for j in 0..snaps.samples() {
            assert_eq!(snaps.psi().fixed_view::<2, 1>(0, j), traj.outputs()[10 + j].column(0));
            assert!(snaps.psi().view((2, j), (5, 1)).iter().all(|v| v.abs() <= 1.0));
        }
        let k = snaps.samples();
        assert_eq!(snaps.psi().columns(1, k - 1), snaps.psi_next().columns(0, k - 1));
        assert!(matches!(lift_reservoir(&res, &ramp(11, 2), 10), Err(Error::Shape(_))));
    }

    #[test]
    fn reservoir_lift_matches_drive() {
        let res = Reservoir::from_weights(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            Activation::Identity,
        )
        .unwrap();
        let traj = TrajectoryData::from_outputs(vec![DVector::from_element(1, 1.0); 4], 0.1).unwrap();
        let snaps = lift_reservoir(&res, &traj, 0).unwrap();
        assert_eq!(
            snaps.psi(),
            &DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 1.0, 1.5, 1.75])
        );
    }

    #[test]
    fn forced_lifts_align_inputs() {
        let ys: Vec<_> = (0..6).map(|k| DVector::from_element(1, k as f64)).collect();
        let us: Vec<_> = (0..5).map(|k| DVector::from_element(1, 100.0 + k as f64)).collect();
        let traj = TrajectoryData::new(ys, us, 0.1).unwrap();
        let h = lift_hankel(3, &traj).unwrap();
        // first column is psi_2 -> psi_3, driven by u_2
        assert_eq!(h.inputs()[(0, 0)], 102.0);
        assert_eq!(h.samples(), 3);
        let r = lift_rbf(&[], 1.0, &traj).unwrap();
        assert_eq!(r.inputs()[(0, 0)], 100.0);
        assert_eq!(r.samples(), 5);
    }

    #[test]
    fn concat_orders_columns() {
        let a = lift_hankel(1, &ramp(6, 1)).unwrap();
        let b = lift_hankel(1, &ramp(6, 1).with_system("b")).unwrap();
        let c = concat_snapshots(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.samples(), 10);
        assert_eq!(c.psi().columns(0, 5), a.psi().columns(0, 5));
        assert_eq!(c.psi().columns(5, 5), b.psi().columns(0, 5));
        assert_eq!(concat_snapshots(std::slice::from_ref(&a)).unwrap(), a);
        let wide = lift_hankel(2, &ramp(6, 1)).unwrap();
        assert!(matches!(concat_snapshots(&[a, wide]), Err(Error::Shape(_))));
    }

    #[test]
    fn lhs_centers_cover_each_stratum() {
        let traj = ramp(50, 2);
        let centers = latin_hypercube_centers(&[traj], 10, 4).unwrap();
        for dim in 0..2 {
            let (lo, hi) = (dim as f64, 490.0 + dim as f64);
            let mut strata: Vec<usize> = centers
                .iter()
                .map(|c| (((c[dim] - lo) / (hi - lo)) * 10.0).floor() as usize)
                .collect();
            strata.sort();
            assert_eq!(strata, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn median_distance() {
        let pts: Vec<DVector<f64>> = [0.0, 1.0, 3.0].iter().map(|&x| DVector::from_element(1, x)).collect();
        // distances 1, 3, 2
        assert_eq!(median_pairwise_distance(&pts), Some(2.0));
        assert_eq!(median_pairwise_distance(&pts[..1]), None);
    }

    #[test]
    fn snapshot_csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("rck-snap-{}", std::process::id()));
        let traj = ramp(7, 2);
        let dict = Dictionary::hankel(2, 2).unwrap();
        let snaps = dict.lift(&traj).unwrap();
        let side = snaps
            .write_csv_triple(&dir, "train", &dict.descriptor(), &traj.content_hash())
            .unwrap();
        let (back, side_back) = LiftedSnapshots::<f64>::read_csv_triple(&dir, "train").unwrap();
        assert_eq!(back, snaps);
        assert_eq!(side_back, side);
        assert_eq!(side.source_hash.len(), 64);
        fs::remove_dir_all(dir).ok();
    }
}
