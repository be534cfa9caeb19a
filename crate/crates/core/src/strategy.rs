//! Discrete distributional strategies.
//!
//! A strategy is a `K x L` matrix whose row `k` holds the joint mass of
//! observation `k` and each action; row sums equal the prior's marginal of
//! that observation. Multi-dimensional actions are flattened row-major over
//! the per-axis grids.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sampler::stream_rng;

/// Row-sum tolerance of feasible strategies.
pub const FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    Random,
    Uniform,
    Truthful,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    matrix: Array2<f64>,
    obs_grid: Grid,
    action_grids: Vec<Grid>,
    marginal: Vec<f64>,
}

impl Strategy {
    /// Wraps `matrix`, checking shape and feasibility.
    pub fn new(matrix: Array2<f64>, obs_grid: Grid, action_grids: Vec<Grid>, marginal: Vec<f64>) -> Result<Self> {
        let s = Self::from_parts(matrix, obs_grid, action_grids, marginal)?;
        s.check_feasible()?;
        Ok(s)
    }

    fn from_parts(matrix: Array2<f64>, obs_grid: Grid, action_grids: Vec<Grid>, marginal: Vec<f64>) -> Result<Self> {
        if action_grids.is_empty() {
            return Err(Error::InvalidGrid("strategy needs at least one action axis".into()));
        }
        let actions: usize = action_grids.iter().map(Grid::len).product();
        if matrix.nrows() != obs_grid.len() || marginal.len() != obs_grid.len() {
            return Err(Error::DimensionMismatch { expected: obs_grid.len(), actual: matrix.nrows() });
        }
        if matrix.ncols() != actions {
            return Err(Error::DimensionMismatch { expected: actions, actual: matrix.ncols() });
        }
        Ok(Self { matrix, obs_grid, action_grids, marginal })
    }

    pub fn init(
        mode: InitMode,
        obs_grid: Grid,
        action_grids: Vec<Grid>,
        marginal: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let k = obs_grid.len();
        let l: usize = action_grids.iter().map(Grid::len).product();
        let mut matrix = Array2::zeros((k, l));
        match mode {
            InitMode::Uniform => {
                for (mut row, &m) in matrix.rows_mut().into_iter().zip(&marginal) {
                    row.fill(m / l as f64);
                }
            }
            InitMode::Random => {
                let mut rng = stream_rng(seed, 0x5eed);
                for (mut row, &m) in matrix.rows_mut().into_iter().zip(&marginal) {
                    let draws: Vec<f64> = (0..l).map(|_| Exp1.sample(&mut rng)).collect();
                    let total: f64 = draws.iter().sum();
                    for (x, d) in row.iter_mut().zip(draws) {
                        *x = m * d / total;
                    }
                }
            }
            InitMode::Truthful => {
                for (row_idx, &m) in marginal.iter().enumerate() {
                    let o = obs_grid.value(row_idx);
                    let mut flat = 0;
                    for g in &action_grids {
                        flat = flat * g.len() + g.nearest_index(o);
                    }
                    matrix[[row_idx, flat]] = m;
                }
            }
        }
        let mut s = Self::from_parts(matrix, obs_grid, action_grids, marginal)?;
        s.normalize_rows();
        Ok(s)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn obs_grid(&self) -> &Grid {
        &self.obs_grid
    }

    pub fn action_grids(&self) -> &[Grid] {
        &self.action_grids
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    pub fn obs_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn action_count(&self) -> usize {
        self.matrix.ncols()
    }

    /// Same grids and marginal, new entries. The result is clamped and
    /// renormalized, then checked.
    pub fn with_matrix(&self, matrix: Array2<f64>) -> Result<Self> {
        let mut s = Self::from_parts(matrix, self.obs_grid.clone(), self.action_grids.clone(), self.marginal.clone())?;
        s.normalize_rows();
        s.check_feasible()?;
        Ok(s)
    }

    /// Replaces the entries without a feasibility check (test helpers and
    /// deliberately infeasible probes).
    pub fn with_matrix_unchecked(&self, matrix: Array2<f64>) -> Self {
        Self { matrix, ..self.clone() }
    }

    /// Coordinates of flattened action `index`, one per axis.
    pub fn action_value(&self, index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.action_grids.len()];
        self.write_action(index, &mut out);
        out
    }

    pub fn write_action(&self, mut index: usize, out: &mut [f64]) {
        for (axis, g) in self.action_grids.iter().enumerate().rev() {
            out[axis] = g.value(index % g.len());
            index /= g.len();
        }
    }

    /// Mixed strategy played at observation point `k`.
    pub fn conditional(&self, k: usize) -> Result<Vec<f64>> {
        let m = self.marginal[k];
        if !(m > 0.0) {
            return Err(Error::UnsupportedObservation(k));
        }
        Ok(self.matrix.row(k).iter().map(|x| x / m).collect())
    }

    /// Unconditional distribution over actions.
    pub fn action_marginal(&self) -> Vec<f64> {
        self.matrix.sum_axis(ndarray::Axis(0)).to_vec()
    }

    /// Induced continuous strategy: nearest observation point, then a draw
    /// from its conditional.
    pub fn sample_bid<R: Rng + ?Sized>(&self, observation: f64, rng: &mut R) -> Result<Vec<f64>> {
        let k = self.obs_grid.nearest_index(observation);
        let cond = self.conditional(k)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = cond.len() - 1;
        for (l, p) in cond.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = l;
                break;
            }
        }
        Ok(self.action_value(pick))
    }

    /// Precomputed sampler for many draws.
    pub fn sampler(&self) -> Result<BidSampler> {
        BidSampler::new(self)
    }

    /// Frobenius distance between the two matrices.
    pub fn iterate_distance(&self, other: &Strategy) -> Result<f64> {
        if self.matrix.dim() != other.matrix.dim() {
            return Err(Error::DimensionMismatch { expected: self.matrix.len(), actual: other.matrix.len() });
        }
        Ok(self
            .matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Clamps negative entries to zero and rescales each row to its marginal.
    pub(crate) fn normalize_rows(&mut self) {
        for (mut row, &m) in self.matrix.rows_mut().into_iter().zip(&self.marginal) {
            row.mapv_inplace(|x| if x < 0.0 { 0.0 } else { x });
            let total: f64 = row.sum();
            if total > 0.0 && total != m {
                let scale = m / total;
                row.mapv_inplace(|x| x * scale);
            }
        }
    }

    pub fn check_feasible(&self) -> Result<()> {
        for (k, (row, &m)) in self.matrix.rows().into_iter().zip(&self.marginal).enumerate() {
            if row.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::CorruptState(format!("row {k} has negative or non-finite entries")));
            }
            let total: f64 = row.sum();
            if (total - m).abs() > FEASIBILITY_TOL {
                return Err(Error::CorruptState(format!("row {k} sums to {total}, marginal is {m}")));
            }
        }
        Ok(())
    }
}

/// Row-wise cumulative tables for drawing actions from a strategy.
#[derive(Debug, Clone)]
pub struct BidSampler {
    obs_grid: Grid,
    cumulative: Vec<f64>,
    supported: Vec<bool>,
    actions: usize,
    action_values: Vec<f64>,
    dims: usize,
}

impl BidSampler {
    fn new(s: &Strategy) -> Result<Self> {
        let (k, l) = s.matrix.dim();
        let dims = s.action_grids.len();
        let mut cumulative = vec![0.0; k * l];
        let mut supported = vec![false; k];
        for row in 0..k {
            let m = s.marginal[row];
            if !(m > 0.0) {
                continue;
            }
            supported[row] = true;
            let mut acc = 0.0;
            for col in 0..l {
                acc += s.matrix[[row, col]] / m;
                cumulative[row * l + col] = acc;
            }
        }
        let mut action_values = vec![0.0; l * dims];
        for a in 0..l {
            s.write_action(a, &mut action_values[a * dims..(a + 1) * dims]);
        }
        Ok(Self { obs_grid: s.obs_grid.clone(), cumulative, supported, actions: l, action_values, dims })
    }

    /// Action index drawn for `observation`.
    pub fn sample_index<R: Rng + ?Sized>(&self, observation: f64, rng: &mut R) -> Result<usize> {
        let k = self.obs_grid.nearest_index(observation);
        if !self.supported[k] {
            return Err(Error::UnsupportedObservation(k));
        }
        let row = &self.cumulative[k * self.actions..(k + 1) * self.actions];
        let u = rng.random::<f64>() * row[self.actions - 1];
        Ok(row.partition_point(|&c| c <= u).min(self.actions - 1))
    }

    pub fn action(&self, index: usize) -> &[f64] {
        &self.action_values[index * self.dims..(index + 1) * self.dims]
    }

    pub fn sample<R: Rng + ?Sized>(&self, observation: f64, rng: &mut R) -> Result<&[f64]> {
        let idx = self.sample_index(observation, rng)?;
        Ok(self.action(idx))
    }
}
