//! In-game certification: exact best responses, relative utility loss and
//! the variational-stability probe.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::{expected_utility, GradientEngine};
use crate::strategy::Strategy;

/// Below this best-response utility the loss is reported in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-12;

/// Row-wise best response: all of row `k`'s mass on its largest gradient
/// entry, ties to the lowest index. Solves the linear program over the
/// agent's strategy set exactly since its constraints separate by row.
pub fn best_response(c: &Array2<f64>, marginal: &[f64]) -> Array2<f64> {
    let mut br = Array2::zeros(c.dim());
    for (k, row) in c.rows().into_iter().enumerate() {
        br[[k, argmax_first(row.iter().copied())]] = marginal[k];
    }
    br
}

pub(crate) fn argmax_first(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in xs.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Best response packaged as a strategy on `template`'s grids.
pub fn best_response_strategy(template: &Strategy, c: &Array2<f64>) -> Strategy {
    template.with_matrix_unchecked(best_response(c, template.marginal()))
}

pub fn relative_loss(u_br: f64, u_cur: f64) -> f64 {
    if u_br > RELATIVE_FLOOR {
        (u_br - u_cur) / u_br
    } else {
        u_br - u_cur
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub iteration: usize,
    pub losses: Vec<f64>,
    pub best_response_utility: Vec<f64>,
    pub current_utility: Vec<f64>,
    pub converged: bool,
}

impl Certificate {
    /// Builds the certificate from each agent's strategy and gradient.
    pub fn from_gradients(strategies: &[&Strategy], gradients: &[Array2<f64>], iteration: usize, tol: f64) -> Result<Self> {
        if strategies.len() != gradients.len() {
            return Err(Error::DimensionMismatch { expected: strategies.len(), actual: gradients.len() });
        }
        let mut cert = Certificate {
            iteration,
            losses: Vec::with_capacity(strategies.len()),
            best_response_utility: Vec::with_capacity(strategies.len()),
            current_utility: Vec::with_capacity(strategies.len()),
            converged: false,
        };
        for (s, c) in strategies.iter().zip(gradients) {
            let u_cur = expected_utility(s, c)?;
            let br = best_response(c, s.marginal());
            let u_br: f64 = br.iter().zip(c.iter()).map(|(b, g)| b * g).sum();
            cert.losses.push(relative_loss(u_br, u_cur));
            cert.best_response_utility.push(u_br);
            cert.current_utility.push(u_cur);
        }
        cert.converged = cert.max_loss() < tol;
        Ok(cert)
    }

    pub fn max_loss(&self) -> f64 {
        self.losses.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Certificate for `profile` with one gradient engine per agent.
pub fn relative_utility_loss(engines: &[GradientEngine], profile: &[&Strategy], tol: f64) -> Result<Certificate> {
    let gradients = engines.iter().map(|e| e.gradient(profile)).collect::<Result<Vec<_>>>()?;
    Certificate::from_gradients(profile, &gradients, 0, tol)
}

/// `sum_i <grad_i u_i(probe), probe_i - equilibrium_i>`. A positive value
/// at some probe shows the equilibrium is not globally variationally stable.
pub fn vs_probe(engines: &[GradientEngine], equilibrium: &[&Strategy], probe: &[&Strategy]) -> Result<f64> {
    if engines.len() != equilibrium.len() || probe.len() != equilibrium.len() {
        return Err(Error::DimensionMismatch { expected: engines.len(), actual: probe.len() });
    }
    let mut total = 0.0;
    for (i, engine) in engines.iter().enumerate() {
        if probe[i].matrix().dim() != equilibrium[i].matrix().dim() {
            return Err(Error::DimensionMismatch { expected: equilibrium[i].matrix().len(), actual: probe[i].matrix().len() });
        }
        let c = engine.gradient(probe)?;
        total += expected_utility(probe[i], &c)? - expected_utility(equilibrium[i], &c)?;
    }
    Ok(total)
}

/// Shades every row of a one-dimensional strategy: its mean bid is scaled
/// by `factor` and the row's mass moved to the nearest action point.
pub fn collusive_probe(strategy: &Strategy, factor: f64) -> Result<Strategy> {
    let grids = strategy.action_grids();
    if grids.len() != 1 {
        return Err(Error::Unsupported("collusive probe needs one-dimensional actions".into()));
    }
    let actions = grids[0].points();
    let mut m = Array2::zeros(strategy.matrix().dim());
    for (k, row) in strategy.matrix().rows().into_iter().enumerate() {
        let mass = strategy.marginal()[k];
        if mass <= 0.0 {
            continue;
        }
        let mean: f64 = row.iter().zip(actions).map(|(w, a)| w * a).sum::<f64>() / mass;
        m[[k, grids[0].nearest_index(mean * factor)]] = mass;
    }
    strategy.with_matrix(m)
}
