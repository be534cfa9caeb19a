//! The discretized game: mechanism, discrete prior and action grids.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mechanism::Mechanism;
use crate::prior::DiscretePrior;
use crate::strategy::{InitMode, Strategy};

#[derive(Debug, Clone)]
pub struct Game {
    pub mechanism: Mechanism,
    pub prior: DiscretePrior,
    /// Per agent, one grid per action coordinate.
    pub action_grids: Vec<Vec<Grid>>,
}

impl Game {
    pub fn new(mechanism: Mechanism, prior: DiscretePrior, action_grids: Vec<Vec<Grid>>) -> Result<Self> {
        let n = mechanism.agents;
        if prior.agents() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: prior.agents() });
        }
        if action_grids.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: action_grids.len() });
        }
        for grids in &action_grids {
            if grids.len() != mechanism.action_dims() {
                return Err(Error::DimensionMismatch { expected: mechanism.action_dims(), actual: grids.len() });
            }
        }
        Ok(Self { mechanism, prior, action_grids })
    }

    pub fn agents(&self) -> usize {
        self.mechanism.agents
    }

    pub fn action_count(&self, agent: usize) -> usize {
        self.action_grids[agent].iter().map(Grid::len).product()
    }

    pub fn obs_count(&self, agent: usize) -> usize {
        self.prior.obs_grid(agent).len()
    }

    /// Flattened action coordinates of every action of `agent`.
    pub fn action_table(&self, agent: usize) -> Vec<f64> {
        let grids = &self.action_grids[agent];
        let dims = grids.len();
        let count = self.action_count(agent);
        let mut out = vec![0.0; count * dims];
        for a in 0..count {
            let mut rem = a;
            for (axis, g) in grids.iter().enumerate().rev() {
                out[a * dims + axis] = g.value(rem % g.len());
                rem /= g.len();
            }
        }
        out
    }

    pub fn init_strategy(&self, agent: usize, mode: InitMode, seed: u64) -> Result<Strategy> {
        Strategy::init(
            mode,
            self.prior.obs_grid(agent).clone(),
            self.action_grids[agent].clone(),
            self.prior.marginal(agent).to_vec(),
            seed,
        )
    }

    /// Agents that can share one strategy with `agent`: same grids and marginal.
    pub fn interchangeable(&self, a: usize, b: usize) -> bool {
        self.action_grids[a] == self.action_grids[b]
            && self.prior.obs_grid(a) == self.prior.obs_grid(b)
            && self.prior.marginal(a) == self.prior.marginal(b)
    }
}
