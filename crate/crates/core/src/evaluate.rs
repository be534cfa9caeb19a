//! Monte-Carlo evaluation of learned strategies in the continuous game.
//!
//! Observations are drawn from the continuous prior model, never from the
//! discretized prior, so the reported losses include discretization error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Game;
use crate::mechanism::{split_allocation, LlgRule, Mechanism, MechanismKind, SplitAllocation};
use crate::sampler::{stream_rng, Marginal, PriorModel};
use crate::strategy::{BidSampler, Strategy};

pub const DEFAULT_SAMPLES: usize = 1 << 18;
pub const MIN_SAMPLES: usize = 10_000;
const BATCH: usize = 1 << 14;
/// Stream offset separating plot draws from evaluation batches.
const PLOT_STREAM: u64 = 1 << 40;

/// Closed-form equilibrium bid of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BidFunction {
    /// `slope * o`.
    Linear { slope: f64 },
    Truthful,
    /// `2o / (2 + o)`.
    CommonValueSpsb,
    /// `(n - 1)/n * o^n / scale^(n-1)` for uniform types on `[0, scale]`.
    AllPayUniform { n: usize, scale: f64 },
}

impl BidFunction {
    pub fn bid(&self, o: f64) -> f64 {
        match *self {
            BidFunction::Linear { slope } => slope * o,
            BidFunction::Truthful => o,
            BidFunction::CommonValueSpsb => 2.0 * o / (2.0 + o),
            BidFunction::AllPayUniform { n, scale } => {
                (n - 1) as f64 / n as f64 * o.powi(n as i32) / scale.powi(n as i32 - 1)
            }
        }
    }
}

/// Equilibrium bid functions; `None` marks an agent without a closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticBne {
    pub id: String,
    pub bids: Vec<Option<BidFunction>>,
}

impl AnalyticBne {
    fn symmetric(id: impl Into<String>, n: usize, f: BidFunction) -> Self {
        Self { id: id.into(), bids: vec![Some(f); n] }
    }

    pub fn is_complete(&self) -> bool {
        self.bids.iter().all(Option::is_some)
    }
}

/// Common upper bound of i.i.d. uniform marginals starting at zero.
fn iid_uniform_from_zero(model: &PriorModel) -> Option<f64> {
    let PriorModel::Independent { marginals } = model else { return None };
    let first = marginals.first()?;
    match first {
        Marginal::Uniform { lower, upper } if *lower == 0.0 && marginals.iter().all(|m| m == first) => Some(*upper),
        _ => None,
    }
}

/// Known equilibrium for the mechanism and continuous prior, if any.
pub fn lookup_analytic(mech: &Mechanism, model: &PriorModel) -> Option<AnalyticBne> {
    let n = mech.agents;
    let rho = mech.risk;
    match (&mech.kind, model) {
        (MechanismKind::Fpsb, m) if iid_uniform_from_zero(m).is_some() => {
            let slope = (n - 1) as f64 / (n as f64 - 1.0 + rho);
            Some(AnalyticBne::symmetric(format!("fpsb_uniform_n{n}_rho{rho}"), n, BidFunction::Linear { slope }))
        }
        (MechanismKind::Spsb, PriorModel::Independent { .. }) => {
            Some(AnalyticBne::symmetric(format!("spsb_ipv_n{n}"), n, BidFunction::Truthful))
        }
        (MechanismKind::AllPay, m) if rho == 1.0 => iid_uniform_from_zero(m).map(|scale| {
            AnalyticBne::symmetric(format!("allpay_uniform_n{n}"), n, BidFunction::AllPayUniform { n, scale })
        }),
        (MechanismKind::Spsb, PriorModel::CommonValue { agents: 3 }) if rho == 1.0 => {
            Some(AnalyticBne::symmetric("common_value_spsb_n3", 3, BidFunction::CommonValueSpsb))
        }
        (MechanismKind::Fpsb, PriorModel::Affiliated) if rho == 1.0 => {
            Some(AnalyticBne::symmetric("affiliated_fpsb", 2, BidFunction::Linear { slope: 2.0 / 3.0 }))
        }
        (MechanismKind::Spsb, PriorModel::Affiliated) if rho == 1.0 => {
            Some(AnalyticBne::symmetric("affiliated_spsb", 2, BidFunction::Truthful))
        }
        (MechanismKind::Llg { rule }, PriorModel::BernoulliLlg { .. }) if *rule != LlgRule::FirstPrice && rho == 1.0 => {
            Some(AnalyticBne { id: "llg_global_truthful".into(), bids: vec![None, None, Some(BidFunction::Truthful)] })
        }
        _ => None,
    }
}

/// Strategy that puts each observation's mass on the action nearest to
/// `f(o)`: the analytic equilibrium pushed onto the grids.
pub fn gridded_strategy(game: &Game, agent: usize, f: &BidFunction) -> Result<Strategy> {
    let template = game.init_strategy(agent, crate::strategy::InitMode::Uniform, 0)?;
    let grids = template.action_grids();
    if grids.len() != 1 {
        return Err(Error::Unsupported("gridded analytic strategies need one-dimensional actions".into()));
    }
    let mut m = ndarray::Array2::zeros(template.matrix().dim());
    for (k, (&o, &mass)) in template.obs_grid().points().iter().zip(template.marginal()).enumerate() {
        m[[k, grids[0].nearest_index(f.bid(o))]] = mass;
    }
    template.with_matrix(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub agent: usize,
    /// `1 - u(s_i, beta_-i) / u(beta)`; absent without a full baseline or
    /// with a nonpositive denominator.
    pub loss: Option<f64>,
    /// Root mean squared bid distance per action dimension.
    pub l2: Option<Vec<f64>>,
    pub utility_learned: Option<f64>,
    pub utility_equilibrium: Option<f64>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub baseline: Option<String>,
    pub agents: Vec<AgentReport>,
    pub revenue: f64,
    pub samples: usize,
    pub seed: u64,
}

impl EvalReport {
    pub fn max_loss(&self) -> Option<f64> {
        self.agents.iter().filter_map(|a| a.loss).reduce(f64::max)
    }
}

#[derive(Debug, Clone, Default)]
struct Sums {
    learned: Vec<f64>,
    equilibrium: Vec<f64>,
    squared: Vec<Vec<f64>>,
    revenue: f64,
    allocations: [u64; 3],
    count: usize,
}

impl Sums {
    fn new(n: usize, dims: usize) -> Self {
        Self { learned: vec![0.0; n], equilibrium: vec![0.0; n], squared: vec![vec![0.0; dims]; n], ..Default::default() }
    }

    fn merge(mut self, other: &Sums) -> Self {
        for i in 0..self.learned.len() {
            self.learned[i] += other.learned[i];
            self.equilibrium[i] += other.equilibrium[i];
            for (a, b) in self.squared[i].iter_mut().zip(&other.squared[i]) {
                *a += b;
            }
        }
        self.revenue += other.revenue;
        for (a, b) in self.allocations.iter_mut().zip(other.allocations) {
            *a += b;
        }
        self.count += other.count;
        self
    }
}

struct Simulation<'a> {
    mech: &'a Mechanism,
    model: &'a PriorModel,
    samplers: Vec<BidSampler>,
    dims: usize,
    bne: Option<&'a AnalyticBne>,
}

impl Simulation<'_> {
    fn new<'a>(
        mech: &'a Mechanism,
        model: &'a PriorModel,
        strategies: &[&Strategy],
        bne: Option<&'a AnalyticBne>,
    ) -> Result<Simulation<'a>> {
        let n = mech.agents;
        if strategies.len() != n || model.agents() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: strategies.len() });
        }
        if let Some(b) = bne {
            if b.bids.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: b.bids.len() });
            }
        }
        let dims = mech.action_dims();
        for s in strategies {
            if s.action_grids().len() != dims {
                return Err(Error::DimensionMismatch { expected: dims, actual: s.action_grids().len() });
            }
        }
        let samplers = strategies.iter().map(|s| s.sampler()).collect::<Result<Vec<_>>>()?;
        Ok(Simulation { mech, model, samplers, dims, bne })
    }

    fn batch(&self, seed: u64, batch: u64, count: usize) -> Result<Sums> {
        let n = self.mech.agents;
        let d = self.dims;
        let mut rng = stream_rng(seed, batch);
        let mut sums = Sums::new(n, d);
        let (mut values, mut obs) = (vec![0.0; n], vec![0.0; n]);
        let mut learned = vec![0.0; n * d];
        let mut analytic = vec![f64::NAN; n];
        let mut mixed = vec![0.0; n * d];
        for _ in 0..count {
            self.model.draw(&mut rng, &mut values, &mut obs);
            for i in 0..n {
                let b = self.samplers[i].sample(obs[i], &mut rng)?;
                learned[i * d..(i + 1) * d].copy_from_slice(b);
            }
            sums.revenue += self.mech.payments(&learned).iter().sum::<f64>();
            if matches!(self.mech.kind, MechanismKind::SplitAward { .. }) {
                let slot = match split_allocation([learned[0], learned[1], learned[2], learned[3]]) {
                    SplitAllocation::Sole(_) => 0,
                    SplitAllocation::Split => 1,
                    SplitAllocation::None => 2,
                };
                sums.allocations[slot] += 1;
            }
            if let Some(bne) = self.bne {
                for (j, f) in bne.bids.iter().enumerate() {
                    analytic[j] = f.as_ref().map_or(f64::NAN, |f| f.bid(obs[j]));
                }
                let complete = analytic.iter().all(|x| !x.is_nan());
                for i in 0..n {
                    if !analytic[i].is_nan() {
                        for a in 0..d {
                            let diff = learned[i * d + a] - analytic[i];
                            sums.squared[i][a] += diff * diff;
                        }
                    }
                    if complete {
                        // one-dimensional actions whenever a full baseline exists
                        mixed.copy_from_slice(&analytic);
                        sums.equilibrium[i] += self.mech.utility(i, &mixed, values[i]);
                        mixed[i] = learned[i];
                        sums.learned[i] += self.mech.utility(i, &mixed, values[i]);
                    }
                }
            }
        }
        sums.count = count;
        Ok(sums)
    }

    /// Parallel batches with per-batch streams, reduced in batch order.
    fn run(&self, samples: usize, seed: u64) -> Result<Sums> {
        let batches = samples.div_ceil(BATCH);
        let parts: Vec<Sums> = (0..batches)
            .into_par_iter()
            .map(|b| self.batch(seed, b as u64, BATCH.min(samples - b * BATCH)))
            .collect::<Result<_>>()?;
        Ok(parts.iter().fold(Sums::new(self.mech.agents, self.dims), |acc, p| acc.merge(p)))
    }
}

/// Losses `L` and `L2` of the learned profile against `bne`, plus revenue.
pub fn evaluate(
    mech: &Mechanism,
    model: &PriorModel,
    strategies: &[&Strategy],
    bne: Option<&AnalyticBne>,
    samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidParameter { name: "samples", reason: format!("need at least {MIN_SAMPLES}, got {samples}") });
    }
    model.validate()?;
    let sim = Simulation::new(mech, model, strategies, bne)?;
    let sums = sim.run(samples, seed)?;
    let total = sums.count as f64;
    let complete = bne.is_some_and(AnalyticBne::is_complete);
    let agents = (0..mech.agents)
        .map(|i| {
            let mut report = AgentReport {
                agent: i,
                loss: None,
                l2: None,
                utility_learned: None,
                utility_equilibrium: None,
                diagnostic: None,
            };
            match bne {
                None => report.diagnostic = Some("no analytic baseline".into()),
                Some(b) => {
                    if b.bids[i].is_some() {
                        report.l2 = Some(sums.squared[i].iter().map(|s| (s / total).sqrt()).collect());
                    }
                    if complete {
                        let (ul, ue) = (sums.learned[i] / total, sums.equilibrium[i] / total);
                        report.utility_learned = Some(ul);
                        report.utility_equilibrium = Some(ue);
                        if ue > 0.0 {
                            report.loss = Some(1.0 - ul / ue);
                        } else {
                            report.diagnostic = Some(format!("equilibrium utility {ue} is not positive; loss undefined"));
                        }
                    } else {
                        report.diagnostic = Some("baseline covers only some agents; loss undefined".into());
                    }
                }
            }
            report
        })
        .collect();
    Ok(EvalReport {
        baseline: bne.map(|b| b.id.clone()),
        agents,
        revenue: sums.revenue / total,
        samples,
        seed,
    })
}

/// Mean total payment over simulated auctions.
pub fn estimate_revenue(mech: &Mechanism, model: &PriorModel, strategies: &[&Strategy], samples: usize, seed: u64) -> Result<f64> {
    model.validate()?;
    let sim = Simulation::new(mech, model, strategies, None)?;
    let sums = sim.run(samples.max(1), seed)?;
    Ok(sums.revenue / sums.count as f64)
}

/// Fractions of simulated split-award auctions ending in a sole award, a
/// split and no award.
pub fn split_award_shares(mech: &Mechanism, model: &PriorModel, strategies: &[&Strategy], samples: usize, seed: u64) -> Result<[f64; 3]> {
    if !matches!(mech.kind, MechanismKind::SplitAward { .. }) {
        return Err(Error::Unsupported("not a split-award mechanism".into()));
    }
    let sim = Simulation::new(mech, model, strategies, None)?;
    let sums = sim.run(samples.max(1), seed)?;
    let t = sums.count as f64;
    Ok(sums.allocations.map(|c| c as f64 / t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub observation: f64,
    pub bid: Vec<f64>,
    pub analytic: Option<f64>,
}

/// `count` observations of `agent` drawn from the prior with sampled bids.
pub fn emit_plot_data(
    strategy: &Strategy,
    model: &PriorModel,
    agent: usize,
    analytic: Option<&BidFunction>,
    count: usize,
    seed: u64,
) -> Result<Vec<PlotRow>> {
    if count == 0 {
        return Err(Error::InvalidParameter { name: "count", reason: "must be at least 1".into() });
    }
    if agent >= model.agents() {
        return Err(Error::DimensionMismatch { expected: model.agents(), actual: agent + 1 });
    }
    let sampler = strategy.sampler()?;
    let mut rng = stream_rng(seed, PLOT_STREAM + agent as u64);
    let (mut values, mut obs) = (vec![0.0; model.agents()], vec![0.0; model.agents()]);
    (0..count)
        .map(|_| {
            model.draw(&mut rng, &mut values, &mut obs);
            let o = obs[agent];
            let bid = sampler.sample(o, &mut rng)?.to_vec();
            Ok(PlotRow { observation: o, bid, analytic: analytic.map(|f| f.bid(o)) })
        })
        .collect()
}

/// Plot rows as CSV with header `observation,bid_0[,bid_1..][,analytic]`.
pub fn plot_csv(rows: &[PlotRow]) -> String {
    let dims = rows.first().map_or(1, |r| r.bid.len());
    let with_analytic = rows.iter().any(|r| r.analytic.is_some());
    let mut out = String::from("observation");
    for a in 0..dims {
        out.push_str(&format!(",bid_{a}"));
    }
    if with_analytic {
        out.push_str(",analytic");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{}", r.observation));
        for b in &r.bid {
            out.push_str(&format!(",{b}"));
        }
        if with_analytic {
            out.push_str(&format!(",{}", r.analytic.map_or(String::new(), |v| v.to_string())));
        }
        out.push('\n');
    }
    out
}
