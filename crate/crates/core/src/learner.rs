//! Simultaneous online learning rules and the iteration loop.
//!
//! Every rule maps a feasible strategy and a gradient to a feasible
//! strategy. [`run`] computes all gradients from one profile snapshot and
//! only then updates every learner.

use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Game;
use crate::gradient::{GradientEngine, GradientOptions};
use crate::simplex::project_scaled_simplex;
use crate::strategy::{InitMode, Strategy};
use crate::verify::{best_response, Certificate};

/// Entries below this are lifted before a multiplicative update.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Dual averaging with the entropic regularizer.
    #[serde(alias = "soda1_entropic")]
    Soda1,
    /// Dual averaging with the Euclidean regularizer.
    #[serde(alias = "soda2_euclidean")]
    Soda2,
    /// Projected gradient ascent.
    #[serde(alias = "soma2_projected")]
    Soma2,
    /// Frank-Wolfe with step `2/(1+t)`.
    #[serde(alias = "sofw_frank_wolfe")]
    Sofw,
    FictitiousPlay,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Soda1 => "soda1",
            Rule::Soda2 => "soda2",
            Rule::Soma2 => "soma2",
            Rule::Sofw => "sofw",
            Rule::FictitiousPlay => "fictitious_play",
        }
    }

    /// Step size at iteration `t >= 1`.
    pub fn step_size(self, eta0: f64, beta: f64, t: usize) -> f64 {
        match self {
            Rule::Sofw => 2.0 / (1.0 + t as f64),
            _ => eta0 * (t as f64).powf(-beta),
        }
    }
}

impl std::str::FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown learning rule `{s}`")))
    }
}

/// Multiplicative update `s * exp(eta c)` renormalized per row.
pub fn step_soda1(s: &Strategy, c: &Array2<f64>, eta: f64) -> Result<Strategy> {
    check_shape(s, c)?;
    let mut next = Array2::zeros(c.dim());
    for (k, &m) in s.marginal().iter().enumerate() {
        if m <= 0.0 {
            continue;
        }
        let row = s.matrix().row(k);
        if row.sum() <= 0.0 {
            return Err(Error::CorruptState(format!("row {k} carries no mass but its marginal is {m}")));
        }
        let logits: Vec<f64> = row.iter().zip(c.row(k)).map(|(&x, &g)| x.max(POSITIVITY_FLOOR).ln() + eta * g).collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        for (l, w) in weights.into_iter().enumerate() {
            next[[k, l]] = m * w / total;
        }
    }
    Ok(s.with_matrix_unchecked(next))
}

/// Dual-averaging step: accumulates `eta c` into `dual` and projects.
pub fn step_soda2(dual: &mut Array2<f64>, template: &Strategy, c: &Array2<f64>, eta: f64) -> Result<Strategy> {
    check_shape(template, c)?;
    if dual.dim() != c.dim() {
        return Err(Error::CorruptState("dual accumulator shape differs from the gradient".into()));
    }
    dual.scaled_add(eta, c);
    Ok(template.with_matrix_unchecked(project_rows(dual.clone(), template.marginal())))
}

/// Projected gradient step `proj(s + eta c)`.
pub fn step_soma2(s: &Strategy, c: &Array2<f64>, eta: f64) -> Result<Strategy> {
    check_shape(s, c)?;
    let mut y = s.matrix().clone();
    y.scaled_add(eta, c);
    Ok(s.with_matrix_unchecked(project_rows(y, s.marginal())))
}

/// Frank-Wolfe step towards the row-wise best-response vertex.
pub fn step_sofw(s: &Strategy, c: &Array2<f64>, eta: f64) -> Result<Strategy> {
    check_shape(s, c)?;
    let br = best_response(c, s.marginal());
    let mut next = s.matrix() * (1.0 - eta) + br * eta;
    rescale_rows(&mut next, s.marginal());
    Ok(s.with_matrix_unchecked(next))
}

/// Running average after `count` previous best responses.
pub fn step_fictitious_play(average: &Strategy, br: &Array2<f64>, count: usize) -> Result<Strategy> {
    check_shape(average, br)?;
    let t = count as f64;
    let mut next = (average.matrix() * t + br) / (t + 1.0);
    rescale_rows(&mut next, average.marginal());
    Ok(average.with_matrix_unchecked(next))
}

fn check_shape(s: &Strategy, c: &Array2<f64>) -> Result<()> {
    if s.matrix().dim() != c.dim() {
        return Err(Error::DimensionMismatch { expected: s.matrix().len(), actual: c.len() });
    }
    Ok(())
}

fn project_rows(mut y: Array2<f64>, marginal: &[f64]) -> Array2<f64> {
    for (mut row, &m) in y.rows_mut().into_iter().zip(marginal) {
        project_scaled_simplex(row.as_slice_mut().expect("standard layout"), m);
    }
    y
}

fn rescale_rows(x: &mut Array2<f64>, marginal: &[f64]) {
    for (mut row, &m) in x.rows_mut().into_iter().zip(marginal) {
        let total = row.sum();
        if total > 0.0 {
            row.mapv_inplace(|v| v * m / total);
        }
    }
}

/// One learner: the rule, its schedule and its current iterate.
#[derive(Debug, Clone)]
pub struct LearnerState {
    pub rule: Rule,
    pub eta0: f64,
    pub beta: f64,
    iterate: Strategy,
    dual: Option<Array2<f64>>,
    t: usize,
}

impl LearnerState {
    pub fn new(rule: Rule, eta0: f64, beta: f64, initial: Strategy) -> Result<Self> {
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::InvalidParameter { name: "eta0", reason: format!("must be positive, got {eta0}") });
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidParameter { name: "beta", reason: format!("must lie in (0, 1], got {beta}") });
        }
        initial.check_feasible()?;
        let dual = (rule == Rule::Soda2).then(|| initial.matrix().clone());
        Ok(Self { rule, eta0, beta, iterate: initial, dual, t: 0 })
    }

    /// The played strategy (the running average under fictitious play).
    pub fn iterate(&self) -> &Strategy {
        &self.iterate
    }

    pub fn into_iterate(self) -> Strategy {
        self.iterate
    }

    /// Number of updates applied.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn dual(&self) -> Option<&Array2<f64>> {
        self.dual.as_ref()
    }

    /// Applies one update with the gradient at the current profile.
    pub fn step(&mut self, c: &Array2<f64>) -> Result<()> {
        let t = self.t + 1;
        let eta = self.rule.step_size(self.eta0, self.beta, t);
        self.iterate = match self.rule {
            Rule::Soda1 => step_soda1(&self.iterate, c, eta)?,
            Rule::Soda2 => {
                let dual = self.dual.as_mut().ok_or_else(|| Error::CorruptState("missing dual accumulator".into()))?;
                step_soda2(dual, &self.iterate, c, eta)?
            }
            Rule::Soma2 => step_soma2(&self.iterate, c, eta)?,
            Rule::Sofw => step_sofw(&self.iterate, c, eta)?,
            Rule::FictitiousPlay => {
                let br = best_response(c, self.iterate.marginal());
                step_fictitious_play(&self.iterate, &br, self.t)?
            }
        };
        self.t = t;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnOptions {
    pub rule: Rule,
    pub eta0: f64,
    pub beta: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub check_interval: usize,
    /// Interchangeable agents share one strategy.
    pub symmetric: bool,
    pub init: InitMode,
    pub seed: u64,
    #[serde(skip)]
    pub gradient: GradientOptions,
}

impl Default for LearnOptions {
    fn default() -> Self {
        Self {
            rule: Rule::Soda1,
            eta0: 10.0,
            beta: 0.05,
            max_iterations: 1000,
            tolerance: 1e-4,
            check_interval: 10,
            symmetric: true,
            init: InitMode::Random,
            seed: 0,
            gradient: GradientOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
        }
    }
}

/// One convergence check; serialized as a progress line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressRecord {
    pub iteration: usize,
    pub losses: Vec<f64>,
    /// Largest Frobenius distance between consecutive iterates.
    pub iterate_distance: f64,
}

/// Notifications emitted by [`run`] in execution order.
#[derive(Debug, Clone)]
pub enum RunEvent<'a> {
    GradientsComputed { iteration: usize },
    Updated { iteration: usize, role: usize },
    Progress(&'a ProgressRecord),
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Final strategy of every agent.
    pub strategies: Vec<Strategy>,
    /// Learner index of each agent.
    pub roles: Vec<usize>,
    pub progress: Vec<ProgressRecord>,
    /// Distance between consecutive iterates, one entry per update.
    pub distances: Vec<f64>,
    pub certificate: Certificate,
    pub iterations: usize,
    pub seconds: f64,
    pub termination: Termination,
}

/// Learner index of every agent. With sharing, an agent joins the first
/// earlier agent it is interchangeable with.
pub fn assign_roles(game: &Game, symmetric: bool) -> Vec<usize> {
    let n = game.agents();
    let mut roles: Vec<usize> = Vec::with_capacity(n);
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..n {
        let shared = if symmetric { reps.iter().position(|&r| game.interchangeable(r, i)) } else { None };
        match shared {
            Some(role) => roles.push(role),
            None => {
                roles.push(reps.len());
                reps.push(i);
            }
        }
    }
    roles
}

/// Representative agent of every role.
pub fn representatives(roles: &[usize]) -> Vec<usize> {
    let count = roles.iter().copied().max().map_or(0, |m| m + 1);
    (0..count).map(|r| roles.iter().position(|&x| x == r).expect("roles are dense")).collect()
}

/// Runs simultaneous learning from the configured initial strategies.
pub fn run(game: Arc<Game>, options: &LearnOptions) -> Result<RunResult> {
    run_with_observer(game, options, &mut |_| {})
}

pub fn run_with_observer(game: Arc<Game>, options: &LearnOptions, observer: &mut dyn FnMut(RunEvent<'_>)) -> Result<RunResult> {
    if options.check_interval == 0 {
        return Err(Error::InvalidParameter { name: "check_interval", reason: "must be positive".into() });
    }
    let started = Instant::now();
    let roles = assign_roles(&game, options.symmetric);
    let reps = representatives(&roles);
    let mut engines = Vec::with_capacity(reps.len());
    let mut learners = Vec::with_capacity(reps.len());
    for (r, &agent) in reps.iter().enumerate() {
        engines.push(GradientEngine::new(game.clone(), agent, &options.gradient)?);
        let seed = options.seed.wrapping_add(r as u64);
        let init = game.init_strategy(agent, options.init, seed)?;
        learners.push(LearnerState::new(options.rule, options.eta0, options.beta, init)?);
    }

    let gradients_at = |learners: &[LearnerState], iteration: usize| -> Result<Vec<Array2<f64>>> {
        let profile: Vec<&Strategy> = roles.iter().map(|&r| learners[r].iterate()).collect();
        engines
            .par_iter()
            .map(|e| {
                e.gradient(&profile).map_err(|err| match err {
                    Error::NonFiniteGradient { agent, .. } => Error::NonFiniteGradient { agent, iteration },
                    other => other,
                })
            })
            .collect()
    };
    let certify = |learners: &[LearnerState], grads: &[Array2<f64>], iteration: usize| {
        let strategies: Vec<&Strategy> = learners.iter().map(LearnerState::iterate).collect();
        Certificate::from_gradients(&strategies, grads, iteration, options.tolerance).map(|c| expand(c, &roles))
    };

    let mut progress = Vec::new();
    let mut distances = Vec::new();
    let mut window_distance = 0.0f64;
    let mut termination = Termination::MaxIterations;
    let mut certificate = None;
    let mut iterations = 0;
    for t in 1..=options.max_iterations {
        let grads = gradients_at(&learners, t)?;
        observer(RunEvent::GradientsComputed { iteration: t });
        if (t - 1) % options.check_interval == 0 {
            let cert = certify(&learners, &grads, t - 1)?;
            let record = ProgressRecord { iteration: t - 1, losses: cert.losses.clone(), iterate_distance: window_distance };
            observer(RunEvent::Progress(&record));
            progress.push(record);
            window_distance = 0.0;
            let done = cert.converged;
            certificate = Some(cert);
            if done {
                termination = Termination::Converged;
                break;
            }
        }
        let mut step_distance = 0.0f64;
        for (r, (learner, c)) in learners.iter_mut().zip(&grads).enumerate() {
            let before = learner.iterate().matrix().clone();
            learner.step(c)?;
            let d = (&before - learner.iterate().matrix()).mapv(|x| x * x).sum().sqrt();
            step_distance = step_distance.max(d);
            observer(RunEvent::Updated { iteration: t, role: r });
        }
        distances.push(step_distance);
        window_distance = window_distance.max(step_distance);
        iterations = t;
        certificate = None;
    }
    let certificate = match certificate {
        Some(c) => c,
        None => {
            let grads = gradients_at(&learners, iterations)?;
            let cert = certify(&learners, &grads, iterations)?;
            if cert.converged {
                termination = Termination::Converged;
            }
            let record = ProgressRecord { iteration: iterations, losses: cert.losses.clone(), iterate_distance: window_distance };
            observer(RunEvent::Progress(&record));
            progress.push(record);
            cert
        }
    };
    let strategies = roles.iter().map(|&r| learners[r].iterate().clone()).collect();
    Ok(RunResult {
        strategies,
        roles,
        progress,
        distances,
        certificate,
        iterations,
        seconds: started.elapsed().as_secs_f64(),
        termination,
    })
}

/// Per-role certificate spread over all agents.
fn expand(cert: Certificate, roles: &[usize]) -> Certificate {
    let pick = |v: &[f64]| roles.iter().map(|&r| v[r]).collect::<Vec<_>>();
    Certificate {
        losses: pick(&cert.losses),
        best_response_utility: pick(&cert.best_response_utility),
        current_utility: pick(&cert.current_utility),
        ..cert
    }
}
