//! Continuous prior models: latent-variable samplers used both to bin
//! interdependent priors onto grids and to evaluate strategies in the
//! continuous game.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// RNG used for every simulation in the crate.
pub type SimRng = ChaCha8Rng;

/// Seeded generator for stream `stream` of master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    use rand::SeedableRng;
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One-dimensional bounded marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { lower: f64, upper: f64 },
    /// Gaussian restricted to `[lower, upper]`.
    GaussianTrunc { mean: f64, std: f64, lower: f64, upper: f64 },
    /// Piecewise-linear density through `(x, density)` knots.
    Tabulated { xs: Vec<f64>, density: Vec<f64> },
}

impl Marginal {
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Marginal::Uniform { lower, upper } | Marginal::GaussianTrunc { lower, upper, .. } => {
                (*lower, *upper)
            }
            Marginal::Tabulated { xs, .. } => (xs[0], xs[xs.len() - 1]),
        }
    }

    /// Unnormalized density.
    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.bounds();
        if x < lo || x > hi {
            return 0.0;
        }
        match self {
            Marginal::Uniform { .. } => 1.0,
            Marginal::GaussianTrunc { mean, std, .. } => {
                let z = (x - mean) / std;
                (-0.5 * z * z).exp()
            }
            Marginal::Tabulated { xs, density } => {
                let hi = xs.partition_point(|&p| p < x).clamp(1, xs.len() - 1);
                let (x0, x1) = (xs[hi - 1], xs[hi]);
                let t = (x - x0) / (x1 - x0);
                density[hi - 1] * (1.0 - t) + density[hi] * t
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidParameter {
            name: "marginal",
            reason: reason.to_string(),
        };
        let (lo, hi) = self.bounds();
        if !(lo < hi) {
            return Err(bad("lower bound must be below upper bound"));
        }
        match self {
            Marginal::Uniform { .. } => Ok(()),
            Marginal::GaussianTrunc { std, .. } if !(*std > 0.0) => Err(bad("std must be positive")),
            Marginal::GaussianTrunc { .. } => Ok(()),
            Marginal::Tabulated { xs, density } => {
                if xs.len() < 2 || xs.len() != density.len() {
                    return Err(bad("tabulated density needs matching knots and values"));
                }
                if xs.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(bad("knots must be strictly increasing"));
                }
                if density.iter().any(|&d| !(d >= 0.0)) || density.iter().all(|&d| d == 0.0) {
                    return Err(bad("density must be nonnegative and not identically zero"));
                }
                Ok(())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Marginal::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
            Marginal::GaussianTrunc { mean, std, lower, upper } => {
                let normal = Normal::new(*mean, *std).expect("validated std");
                let (a, b) = (normal.cdf(*lower), normal.cdf(*upper));
                let u = a + (b - a) * rng.random::<f64>();
                normal.inverse_cdf(u).clamp(*lower, *upper)
            }
            Marginal::Tabulated { xs, density } => sample_piecewise_linear(xs, density, rng),
        }
    }
}

fn sample_piecewise_linear<R: Rng + ?Sized>(xs: &[f64], density: &[f64], rng: &mut R) -> f64 {
    let areas: Vec<f64> = xs
        .windows(2)
        .zip(density.windows(2))
        .map(|(x, d)| 0.5 * (d[0] + d[1]) * (x[1] - x[0]))
        .collect();
    let total: f64 = areas.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (seg, &area) in areas.iter().enumerate() {
        if target <= area || seg == areas.len() - 1 {
            let (x0, x1) = (xs[seg], xs[seg + 1]);
            let (d0, d1) = (density[seg], density[seg + 1]);
            let w = x1 - x0;
            let slope = (d1 - d0) / w;
            let target = target.min(area);
            // solve d0 t + slope t^2 / 2 = target on [0, w]
            let t = if slope.abs() < 1e-14 {
                if d0 > 0.0 { target / d0 } else { 0.0 }
            } else {
                let disc = (d0 * d0 + 2.0 * slope * target).max(0.0);
                (disc.sqrt() - d0) / slope
            };
            return (x0 + t.clamp(0.0, w)).min(x1);
        }
        target -= area;
    }
    xs[xs.len() - 1]
}

/// Joint prior over valuations and observations of all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorModel {
    /// Independent private values, one marginal per agent.
    Independent { marginals: Vec<Marginal> },
    /// Common value `v = w4` with observations `o_i = 2 w_i w4`.
    CommonValue { agents: usize },
    /// Two bidders, `o_i = w_i + w3`, common value `(w1 + w2)/2 + w3`.
    Affiliated,
    /// LLG Bernoulli-weights model: locals share `w4` with probability
    /// `gamma`, the global bidder values `2 w3`.
    BernoulliLlg { gamma: f64 },
}

impl PriorModel {
    pub fn agents(&self) -> usize {
        match self {
            PriorModel::Independent { marginals } => marginals.len(),
            PriorModel::CommonValue { agents } => *agents,
            PriorModel::Affiliated => 2,
            PriorModel::BernoulliLlg { .. } => 3,
        }
    }

    pub fn private_values(&self) -> bool {
        matches!(self, PriorModel::Independent { .. } | PriorModel::BernoulliLlg { .. })
    }

    pub fn is_independent(&self) -> bool {
        matches!(self, PriorModel::Independent { .. })
    }

    pub fn obs_bounds(&self, agent: usize) -> (f64, f64) {
        match self {
            PriorModel::Independent { marginals } => marginals[agent].bounds(),
            PriorModel::CommonValue { .. } | PriorModel::Affiliated => (0.0, 2.0),
            PriorModel::BernoulliLlg { .. } => {
                if agent == 2 {
                    (0.0, 2.0)
                } else {
                    (0.0, 1.0)
                }
            }
        }
    }

    pub fn value_bounds(&self, agent: usize) -> (f64, f64) {
        match self {
            PriorModel::CommonValue { .. } => (0.0, 1.0),
            PriorModel::Affiliated => (0.0, 2.0),
            _ => self.obs_bounds(agent),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PriorModel::Independent { marginals } => {
                if marginals.is_empty() {
                    return Err(Error::InvalidParameter {
                        name: "marginals",
                        reason: "need at least one agent".into(),
                    });
                }
                marginals.iter().try_for_each(Marginal::validate)
            }
            PriorModel::CommonValue { agents } if *agents < 2 => Err(Error::InvalidParameter {
                name: "agents",
                reason: "common value model needs at least two agents".into(),
            }),
            PriorModel::BernoulliLlg { gamma } if !(0.0..=1.0).contains(gamma) => {
                Err(Error::InvalidParameter {
                    name: "gamma",
                    reason: format!("must lie in [0, 1], got {gamma}"),
                })
            }
            _ => Ok(()),
        }
    }

    /// Draws one profile into `values` and `obs` (both of length `agents`).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, values: &mut [f64], obs: &mut [f64]) {
        match self {
            PriorModel::Independent { marginals } => {
                for (i, m) in marginals.iter().enumerate() {
                    obs[i] = m.sample(rng);
                    values[i] = obs[i];
                }
            }
            PriorModel::CommonValue { agents } => {
                let common: f64 = rng.random();
                for i in 0..*agents {
                    obs[i] = 2.0 * rng.random::<f64>() * common;
                    values[i] = common;
                }
            }
            PriorModel::Affiliated => {
                let (w1, w2, w3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
                obs[0] = w1 + w3;
                obs[1] = w2 + w3;
                let v = 0.5 * (w1 + w2) + w3;
                values[0] = v;
                values[1] = v;
            }
            PriorModel::BernoulliLlg { gamma } => {
                let w: [f64; 5] = [
                    rng.random(),
                    rng.random(),
                    rng.random(),
                    rng.random(),
                    rng.random(),
                ];
                let weight = if w[4] < *gamma { 1.0 } else { 0.0 };
                obs[0] = weight * w[3] + (1.0 - weight) * w[0];
                obs[1] = weight * w[3] + (1.0 - weight) * w[1];
                obs[2] = 2.0 * w[2];
                values.copy_from_slice(&obs[..3]);
            }
        }
    }
}
