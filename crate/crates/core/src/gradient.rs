//! Gradients of the expected utility with respect to an agent's own
//! strategy.
//!
//! Expected utility is linear in the agent's own matrix, so the gradient
//! `c[k, l]` is the conditional expected utility of playing action `l` at
//! observation `k` against the opponents' current strategies:
//!
//! `c[k_i, l_i] = sum_{m, k_-i, l_-i} u_i(b_l, v_m) prod_{j != i} q_j(l_j | k_j) f(m, k) / f_i(k_i)`
//!
//! with `q_j` the conditional mixed strategy of opponent `j`. The general
//! path contracts the strategy-independent prior weights with one opponent
//! at a time and then with a precomputed utility tensor. Independent priors
//! collapse the opponents to their action marginals, and symmetric i.i.d.
//! single-object auctions use order statistics of the opponents' bids.

use std::sync::Arc;

use ndarray::linalg::general_mat_mul;
use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, Array3, ArrayView3, Axis};

use crate::error::{Error, Result};
use crate::game::Game;
use crate::mechanism::{crra, Mechanism, MechanismKind};
use crate::prior::DiscretePrior;
use crate::strategy::Strategy;

/// Default cap on utility-tensor and prior-weight memory.
pub const DEFAULT_MEMORY_BUDGET: u64 = 2 << 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientOptions {
    pub memory_budget: u64,
    /// Collapse opponents to their action marginals under product priors.
    pub exploit_independence: bool,
    /// Use the order-statistic path for symmetric i.i.d. single-object auctions.
    pub symmetric_iid: bool,
}

impl Default for GradientOptions {
    fn default() -> Self {
        Self { memory_budget: DEFAULT_MEMORY_BUDGET, exploit_independence: true, symmetric_iid: false }
    }
}

/// Ex-post utilities of one agent over every (value, action profile) pair.
///
/// Profiles are indexed `(own action, rest)` where `rest` enumerates the
/// opponents' actions row-major in ascending agent order.
#[derive(Debug, Clone)]
pub struct UtilityTensor {
    agent: usize,
    value_points: Vec<f64>,
    repr: TensorRepr,
}

#[derive(Debug, Clone)]
enum TensorRepr {
    /// Risk-neutral utilities `v * slope + intercept`.
    Affine { slope: Array2<f64>, intercept: Array2<f64> },
    /// `(value point, own action, rest)`.
    Dense { values: Array3<f64> },
}

impl UtilityTensor {
    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn own_actions(&self) -> usize {
        match &self.repr {
            TensorRepr::Affine { slope, .. } => slope.nrows(),
            TensorRepr::Dense { values } => values.dim().1,
        }
    }

    pub fn rest_actions(&self) -> usize {
        match &self.repr {
            TensorRepr::Affine { slope, .. } => slope.ncols(),
            TensorRepr::Dense { values } => values.dim().2,
        }
    }

    pub fn value_points(&self) -> &[f64] {
        &self.value_points
    }

    pub fn is_affine(&self) -> bool {
        matches!(self.repr, TensorRepr::Affine { .. })
    }

    /// Utility at value point `m`, own action `own` and opponent profile `rest`.
    pub fn entry(&self, m: usize, own: usize, rest: usize) -> f64 {
        match &self.repr {
            TensorRepr::Affine { slope, intercept } => {
                self.value_points[m] * slope[[own, rest]] + intercept[[own, rest]]
            }
            TensorRepr::Dense { values } => values[[m, own, rest]],
        }
    }
}

/// Evaluates one agent's utilities row by row.
struct ProfileEvaluator<'a> {
    mech: &'a Mechanism,
    agent: usize,
    opponents: Vec<usize>,
    tables: Vec<Vec<f64>>,
    dims: usize,
    rest_dims: Vec<usize>,
    own_actions: usize,
    rest_actions: usize,
}

impl<'a> ProfileEvaluator<'a> {
    fn new(game: &'a Game, agent: usize) -> Self {
        let n = game.agents();
        let opponents: Vec<usize> = (0..n).filter(|&j| j != agent).collect();
        let rest_dims: Vec<usize> = opponents.iter().map(|&j| game.action_count(j)).collect();
        Self {
            mech: &game.mechanism,
            agent,
            tables: (0..n).map(|j| game.action_table(j)).collect(),
            dims: game.mechanism.action_dims(),
            rest_actions: rest_dims.iter().product(),
            own_actions: game.action_count(agent),
            opponents,
            rest_dims,
        }
    }

    fn set_action(&self, bids: &mut [f64], who: usize, action: usize) {
        let d = self.dims;
        bids[who * d..(who + 1) * d].copy_from_slice(&self.tables[who][action * d..(action + 1) * d]);
    }

    /// Calls `f(rest, bids)` for every opponent profile with own action fixed.
    fn for_each_rest<F: FnMut(usize, &[f64])>(&self, own: usize, mut f: F) {
        let mut bids = vec![0.0; self.tables.len() * self.dims];
        self.set_action(&mut bids, self.agent, own);
        let mut idx = vec![0usize; self.opponents.len()];
        for (pos, &j) in self.opponents.iter().enumerate() {
            self.set_action(&mut bids, j, idx[pos]);
        }
        let mut rest = 0;
        loop {
            f(rest, &bids);
            rest += 1;
            // odometer with incremental bid updates
            let mut a = idx.len();
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < self.rest_dims[a] {
                    self.set_action(&mut bids, self.opponents[a], idx[a]);
                    break;
                }
                idx[a] = 0;
                self.set_action(&mut bids, self.opponents[a], 0);
            }
        }
    }

    fn affine_row(&self, own: usize, slope: &mut [f64], intercept: &mut [f64]) {
        self.for_each_rest(own, |r, bids| {
            let (s, c) = self.mech.affine_terms(self.agent, bids);
            slope[r] = s;
            intercept[r] = c;
        });
    }

    fn dense_row(&self, own: usize, values: &[f64], out: &mut [f64]) {
        let rest = self.rest_actions;
        self.for_each_rest(own, |r, bids| {
            let (s, c) = self.mech.affine_terms(self.agent, bids);
            for (m, &v) in values.iter().enumerate() {
                out[m * rest + r] = crra(s * v + c, self.mech.risk);
            }
        });
    }
}

fn value_points(prior: &DiscretePrior, agent: usize) -> Vec<f64> {
    prior.value_grid(agent).points().to_vec()
}

fn tensor_bytes(game: &Game, agent: usize) -> u64 {
    let own = game.action_count(agent) as u64;
    let rest: u64 = (0..game.agents()).filter(|&j| j != agent).map(|j| game.action_count(j) as u64).product();
    let planes = if game.mechanism.risk == 1.0 { 2 } else { game.prior.value_grid(agent).len() as u64 };
    own.saturating_mul(rest).saturating_mul(planes).saturating_mul(8)
}

/// Precomputes every ex-post utility of `agent` on the grids. Risk-neutral
/// mechanisms are stored in affine form (two planes), risk-averse ones with
/// an explicit valuation axis.
pub fn build_utility_tensor(game: &Game, agent: usize, memory_budget: u64) -> Result<UtilityTensor> {
    let needed = tensor_bytes(game, agent);
    if needed > memory_budget {
        return Err(Error::BudgetExceeded { needed, budget: memory_budget });
    }
    let eval = ProfileEvaluator::new(game, agent);
    let (own, rest) = (eval.own_actions, eval.rest_actions);
    let values = value_points(&game.prior, agent);
    let repr = if game.mechanism.risk == 1.0 {
        let mut slope = Array2::zeros((own, rest));
        let mut intercept = Array2::zeros((own, rest));
        slope
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(intercept.axis_iter_mut(Axis(0)).into_par_iter())
            .enumerate()
            .for_each(|(l, (mut s, mut c))| {
                eval.affine_row(l, s.as_slice_mut().unwrap(), c.as_slice_mut().unwrap());
            });
        TensorRepr::Affine { slope, intercept }
    } else {
        let m = values.len();
        let mut planes = Array3::zeros((own, m, rest));
        planes.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(l, mut block)| {
            eval.dense_row(l, &values, block.as_slice_mut().unwrap());
        });
        let values = planes.permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
        TensorRepr::Dense { values }
    };
    Ok(UtilityTensor { agent, value_points: values, repr })
}

/// Strategy-independent prior weights seen by one agent: the joint mass
/// over (own cell, opponent observations), where the own cell is the
/// observation (affine tensors) or (valuation, observation) pair.
#[derive(Debug, Clone)]
pub struct OpponentWeights {
    agent: usize,
    opponents: Vec<usize>,
    own_obs: usize,
    value_planes: usize,
    opp_obs: Vec<usize>,
    mass: Vec<f64>,
    value_mass: Option<Vec<f64>>,
    marginal: Vec<f64>,
}

impl OpponentWeights {
    /// `dense` selects the explicit valuation axis.
    pub fn new(prior: &DiscretePrior, agent: usize, dense: bool, memory_budget: u64) -> Result<Self> {
        let n = prior.agents();
        let opponents: Vec<usize> = (0..n).filter(|&j| j != agent).collect();
        let opp_obs: Vec<usize> = opponents.iter().map(|&j| prior.obs_grid(j).len()).collect();
        let own_obs = prior.obs_grid(agent).len();
        let value_planes = if dense { prior.value_grid(agent).len() } else { 1 };
        let rest: usize = opp_obs.iter().product();
        let cells = (own_obs * value_planes) as u64 * rest as u64;
        let needed = cells * 8 * if dense { 1 } else { 2 };
        if needed > memory_budget {
            return Err(Error::BudgetExceeded { needed, budget: memory_budget });
        }
        let mut mass = vec![0.0; cells as usize];
        let mut value_mass = (!dense).then(|| vec![0.0; cells as usize]);
        let values = prior.value_grid(agent).points();
        prior.for_each_atom(|obs, vals, w| {
            let mut r = 0;
            for (pos, &j) in opponents.iter().enumerate() {
                r = r * opp_obs[pos] + obs[j];
            }
            let row = if dense { vals[agent] * own_obs + obs[agent] } else { obs[agent] };
            mass[row * rest + r] += w;
            if let Some(vm) = value_mass.as_mut() {
                vm[row * rest + r] += w * values[vals[agent]];
            }
        });
        Ok(Self {
            agent,
            opponents,
            own_obs,
            value_planes,
            opp_obs,
            mass,
            value_mass,
            marginal: prior.marginal(agent).to_vec(),
        })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    /// Replaces each opponent observation axis by its action axis using the
    /// opponents' conditional strategies. Returns the mass and, for affine
    /// weights, the value-weighted mass, both `(rows, rest actions)`.
    fn contract(&self, profile: &[&Strategy]) -> (Array2<f64>, Option<Array2<f64>>) {
        let conditionals: Vec<Array2<f64>> = self.opponents.iter().map(|&j| conditional_matrix(profile[j])).collect();
        let rows = self.own_obs * self.value_planes;
        let run = |data: &[f64]| -> Array2<f64> {
            let mut current = data.to_vec();
            let mut remaining_k: usize = self.opp_obs.iter().product();
            let mut done_l = 1usize;
            for (pos, q) in conditionals.iter().enumerate() {
                let kj = self.opp_obs[pos];
                let lj = q.ncols();
                remaining_k /= kj;
                let rest = remaining_k * done_l;
                current = contract_axis(&current, rows, kj, rest, q);
                done_l *= lj;
            }
            Array2::from_shape_vec((rows, done_l), current).expect("contraction shape")
        };
        let mass = run(&self.mass);
        let value_mass = self.value_mass.as_ref().map(|vm| run(vm));
        (mass, value_mass)
    }
}

/// `(rows, kj, rest) x (kj, lj) -> (rows, rest, lj)`.
fn contract_axis(data: &[f64], rows: usize, kj: usize, rest: usize, q: &Array2<f64>) -> Vec<f64> {
    let lj = q.ncols();
    let input = ArrayView3::from_shape((rows, kj, rest), data).expect("contraction input shape");
    let mut out = Array3::<f64>::zeros((rows, rest, lj));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(input.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut o, t)| general_mat_mul(1.0, &t.t(), q, 0.0, &mut o));
    out.into_raw_vec_and_offset().0
}

/// Rows of the strategy divided by the marginal; zero rows stay zero.
fn conditional_matrix(s: &Strategy) -> Array2<f64> {
    let mut q = s.matrix().clone();
    for (mut row, &m) in q.rows_mut().into_iter().zip(s.marginal()) {
        if m > 0.0 {
            row.mapv_inplace(|x| x / m);
        } else {
            row.fill(0.0);
        }
    }
    q
}

/// Outer product of the opponents' action marginals, row-major.
fn independent_rest_distribution(opponents: &[usize], profile: &[&Strategy]) -> Array1<f64> {
    let mut r = vec![1.0];
    for &j in opponents {
        let p = profile[j].action_marginal();
        r = r.iter().flat_map(|&a| p.iter().map(move |&b| a * b)).collect();
    }
    Array1::from(r)
}

/// Exact gradient of `tensor.agent()` for the given profile.
pub fn gradient_general(tensor: &UtilityTensor, prior: &DiscretePrior, profile: &[&Strategy]) -> Result<Array2<f64>> {
    let weights = OpponentWeights::new(prior, tensor.agent, !tensor.is_affine(), DEFAULT_MEMORY_BUDGET)?;
    check_profile(prior, profile)?;
    Ok(contract_with_tensor(&weights, tensor, profile))
}

fn check_profile(prior: &DiscretePrior, profile: &[&Strategy]) -> Result<()> {
    if profile.len() != prior.agents() {
        return Err(Error::DimensionMismatch { expected: prior.agents(), actual: profile.len() });
    }
    for (j, s) in profile.iter().enumerate() {
        if s.obs_count() != prior.obs_grid(j).len() {
            return Err(Error::DimensionMismatch { expected: prior.obs_grid(j).len(), actual: s.obs_count() });
        }
    }
    Ok(())
}

fn scale_rows_by_inverse_marginal(c: &mut Array2<f64>, marginal: &[f64]) {
    for (mut row, &m) in c.rows_mut().into_iter().zip(marginal) {
        if m > 0.0 {
            row.mapv_inplace(|x| x / m);
        } else {
            row.fill(0.0);
        }
    }
}

fn contract_with_tensor(weights: &OpponentWeights, tensor: &UtilityTensor, profile: &[&Strategy]) -> Array2<f64> {
    let (mass, value_mass) = weights.contract(profile);
    let k = weights.own_obs;
    let mut c = match &tensor.repr {
        TensorRepr::Affine { slope, intercept } => {
            let vm = value_mass.expect("affine weights carry value mass");
            let mut c = vm.dot(&slope.t());
            general_mat_mul(1.0, &mass, &intercept.t(), 1.0, &mut c);
            c
        }
        TensorRepr::Dense { values } => {
            let mut c = Array2::zeros((k, tensor.own_actions()));
            for m in 0..weights.value_planes {
                let d = mass.slice(ndarray::s![m * k..(m + 1) * k, ..]);
                general_mat_mul(1.0, &d, &values.index_axis(Axis(0), m).t(), 1.0, &mut c);
            }
            c
        }
    };
    scale_rows_by_inverse_marginal(&mut c, &weights.marginal);
    c
}

/// Gradient under a product prior with private values: opponents enter
/// only through their action marginals.
fn contract_independent(tensor: &UtilityTensor, obs_values: &[f64], opponents: &[usize], profile: &[&Strategy]) -> Array2<f64> {
    let r = independent_rest_distribution(opponents, profile);
    match &tensor.repr {
        TensorRepr::Affine { slope, intercept } => {
            let a = slope.dot(&r);
            let b = intercept.dot(&r);
            Array2::from_shape_fn((obs_values.len(), a.len()), |(k, l)| obs_values[k] * a[l] + b[l])
        }
        TensorRepr::Dense { values } => {
            let mut c = Array2::zeros((obs_values.len(), tensor.own_actions()));
            for (k, mut row) in c.rows_mut().into_iter().enumerate() {
                row.assign(&values.index_axis(Axis(0), k).dot(&r));
            }
            c
        }
    }
}

/// Order-statistic gradient for a symmetric single-object auction with
/// i.i.d. private values and `n - 1` opponents sharing `opponent`'s
/// strategy. `values[k]` is the valuation at observation `k`; `actions`
/// is the one-dimensional action grid.
pub fn gradient_symmetric_iid(
    mech: &Mechanism,
    values: &[f64],
    actions: &[f64],
    opponent: &Strategy,
    n: usize,
) -> Result<Array2<f64>> {
    if !mech.is_single_object() {
        return Err(Error::Unsupported("symmetric path requires FPSB, SPSB or all-pay".into()));
    }
    if n < 2 || opponent.action_count() != actions.len() || opponent.action_grids().len() != 1 {
        return Err(Error::Unsupported("symmetric path requires n >= 2 and a one-dimensional action grid".into()));
    }
    let p = opponent.action_marginal();
    let l = actions.len();
    let pow = (n - 1) as i32;
    // below[l]: all opponents strictly below action l; at_most[l]: all at or below
    let mut below = vec![0.0; l];
    let mut at_most = vec![0.0; l];
    let mut cum = 0.0f64;
    for a in 0..l {
        below[a] = cum.min(1.0).powi(pow);
        cum += p[a];
        at_most[a] = cum.min(1.0).powi(pow);
    }
    let rho = mech.risk;
    let mut c = Array2::zeros((values.len(), l));
    for (k, &v) in values.iter().enumerate() {
        match mech.kind {
            MechanismKind::Fpsb => {
                for a in 0..l {
                    c[[k, a]] = below[a] * crra(v - actions[a], rho);
                }
            }
            MechanismKind::AllPay => {
                for a in 0..l {
                    c[[k, a]] = below[a] * crra(v - actions[a], rho) + (1.0 - below[a]) * crra(-actions[a], rho);
                }
            }
            MechanismKind::Spsb => {
                // win iff the highest opponent bid is strictly below, pay it
                let mut acc = 0.0;
                for a in 0..l {
                    c[[k, a]] = acc;
                    let pmf = at_most[a] - below[a];
                    acc += pmf * crra(v - actions[a], rho);
                }
            }
            _ => unreachable!(),
        }
    }
    Ok(c)
}

/// `<s, c>`.
pub fn expected_utility(strategy: &Strategy, gradient: &Array2<f64>) -> Result<f64> {
    if strategy.matrix().dim() != gradient.dim() {
        return Err(Error::DimensionMismatch { expected: strategy.matrix().len(), actual: gradient.len() });
    }
    Ok(strategy.matrix().iter().zip(gradient.iter()).map(|(s, c)| s * c).sum())
}

#[derive(Debug, Clone)]
enum EnginePath {
    SymmetricIid { values: Vec<f64>, actions: Vec<f64> },
    Independent { tensor: UtilityTensor, obs_values: Vec<f64> },
    Weighted { tensor: UtilityTensor, weights: OpponentWeights },
    /// Tensor over budget: utilities are regenerated row by row.
    Streaming { weights: Option<OpponentWeights>, obs_values: Vec<f64> },
}

/// Per-agent gradient oracle with all strategy-independent data cached.
#[derive(Debug, Clone)]
pub struct GradientEngine {
    game: Arc<Game>,
    agent: usize,
    opponents: Vec<usize>,
    path: EnginePath,
}

impl GradientEngine {
    pub fn new(game: Arc<Game>, agent: usize, options: &GradientOptions) -> Result<Self> {
        let n = game.agents();
        let opponents: Vec<usize> = (0..n).filter(|&j| j != agent).collect();
        let product = game.prior.is_product() && options.exploit_independence;
        let obs_values = game.prior.obs_grid(agent).points().to_vec();
        let path = if options.symmetric_iid {
            if !(game.mechanism.is_single_object()
                && game.prior.is_product()
                && (0..n).all(|j| game.interchangeable(agent, j)))
            {
                return Err(Error::Unsupported(
                    "symmetric i.i.d. gradient needs a symmetric single-object auction with independent values".into(),
                ));
            }
            EnginePath::SymmetricIid {
                values: obs_values,
                actions: game.action_grids[agent][0].points().to_vec(),
            }
        } else {
            match build_utility_tensor(&game, agent, options.memory_budget) {
                Ok(tensor) if product => EnginePath::Independent { tensor, obs_values },
                Ok(tensor) => {
                    let weights = OpponentWeights::new(&game.prior, agent, !tensor.is_affine(), options.memory_budget)?;
                    EnginePath::Weighted { tensor, weights }
                }
                Err(Error::BudgetExceeded { .. }) => {
                    let weights = if product {
                        None
                    } else {
                        Some(OpponentWeights::new(&game.prior, agent, game.mechanism.risk != 1.0, options.memory_budget)?)
                    };
                    EnginePath::Streaming { weights, obs_values }
                }
                Err(e) => return Err(e),
            }
        };
        Ok(Self { game, agent, opponents, path })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn path_name(&self) -> &'static str {
        match self.path {
            EnginePath::SymmetricIid { .. } => "symmetric_iid",
            EnginePath::Independent { .. } => "independent",
            EnginePath::Weighted { .. } => "weighted",
            EnginePath::Streaming { .. } => "streaming",
        }
    }

    /// Gradient of this agent's expected utility; `profile[j]` is the
    /// strategy played by agent `j`.
    pub fn gradient(&self, profile: &[&Strategy]) -> Result<Array2<f64>> {
        check_profile(&self.game.prior, profile)?;
        let c = match &self.path {
            EnginePath::SymmetricIid { values, actions } => {
                let opponent = profile[self.opponents[0]];
                gradient_symmetric_iid(&self.game.mechanism, values, actions, opponent, self.game.agents())?
            }
            EnginePath::Independent { tensor, obs_values } => {
                contract_independent(tensor, obs_values, &self.opponents, profile)
            }
            EnginePath::Weighted { tensor, weights } => contract_with_tensor(weights, tensor, profile),
            EnginePath::Streaming { weights, obs_values } => self.streaming(weights.as_ref(), obs_values, profile),
        };
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { agent: self.agent, iteration: 0 });
        }
        Ok(c)
    }

    fn streaming(&self, weights: Option<&OpponentWeights>, obs_values: &[f64], profile: &[&Strategy]) -> Array2<f64> {
        let eval = ProfileEvaluator::new(&self.game, self.agent);
        let own = eval.own_actions;
        let rest = eval.rest_actions;
        let values = value_points(&self.game.prior, self.agent);
        let affine = self.game.mechanism.risk == 1.0;
        let k = obs_values.len();
        let (mass, value_mass, indep) = match weights {
            Some(w) => {
                let (m, v) = w.contract(profile);
                (Some(m), v, None)
            }
            None => (None, None, Some(independent_rest_distribution(&self.opponents, profile))),
        };
        let columns: Vec<Vec<f64>> = (0..own)
            .into_par_iter()
            .map(|l| {
                let mut col = vec![0.0; k];
                if affine {
                    let (mut s, mut c) = (vec![0.0; rest], vec![0.0; rest]);
                    eval.affine_row(l, &mut s, &mut c);
                    let (s, c) = (Array1::from(s), Array1::from(c));
                    if let Some(r) = &indep {
                        let (a, b) = (s.dot(r), c.dot(r));
                        for (kk, x) in col.iter_mut().enumerate() {
                            *x = obs_values[kk] * a + b;
                        }
                    } else {
                        let vm = value_mass.as_ref().unwrap().dot(&s);
                        let m = mass.as_ref().unwrap().dot(&c);
                        for kk in 0..k {
                            col[kk] = vm[kk] + m[kk];
                        }
                    }
                } else {
                    let mut plane = vec![0.0; values.len() * rest];
                    eval.dense_row(l, &values, &mut plane);
                    let plane = Array2::from_shape_vec((values.len(), rest), plane).unwrap();
                    if let Some(r) = &indep {
                        let u = plane.dot(r);
                        col.copy_from_slice(u.as_slice().unwrap());
                    } else {
                        let mass = mass.as_ref().unwrap();
                        for m in 0..values.len() {
                            let d = mass.slice(ndarray::s![m * k..(m + 1) * k, ..]);
                            let contrib = d.dot(&plane.row(m));
                            for kk in 0..k {
                                col[kk] += contrib[kk];
                            }
                        }
                    }
                }
                col
            })
            .collect();
        let mut c = Array2::from_shape_fn((k, own), |(kk, l)| columns[l][kk]);
        if let Some(w) = weights {
            scale_rows_by_inverse_marginal(&mut c, &w.marginal);
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::mechanism::MechanismKind;
    use crate::strategy::InitMode;

    fn fpsb_game(k: usize, l: usize) -> Game {
        let og = Grid::uniform(0.0, 1.0, k).unwrap();
        let ag = Grid::uniform(0.0, 1.0, l).unwrap();
        let prior = DiscretePrior::independent(vec![og.clone(), og], vec![vec![1.0 / k as f64; k]; 2]).unwrap();
        let mech = Mechanism::new(MechanismKind::Fpsb, 2, 1.0).unwrap();
        Game::new(mech, prior, vec![vec![ag.clone()], vec![ag]]).unwrap()
    }

    #[test]
    fn tensor_entries() {
        let game = fpsb_game(2, 2);
        let t = build_utility_tensor(&game, 0, DEFAULT_MEMORY_BUDGET).unwrap();
        assert_eq!((t.own_actions(), t.rest_actions()), (2, 2));
        // value 1, own bid 1 vs 0: wins, pays 1
        assert_eq!(t.entry(1, 1, 0), 0.0);
        // value 1, both bid 0: tie
        assert_eq!(t.entry(1, 0, 0), 0.0);
        assert_eq!(t.entry(1, 1, 1), 0.0);
        let tiny = build_utility_tensor(&game, 0, 16);
        assert!(matches!(tiny, Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn tensor_spot_checks_against_mechanism() {
        let og = Grid::uniform(0.0, 1.0, 5).unwrap();
        let ag = Grid::uniform(0.0, 0.8, 7).unwrap();
        let prior = DiscretePrior::independent(vec![og.clone(); 3], vec![vec![0.2; 5]; 3]).unwrap();
        for risk in [1.0, 0.6] {
            let mech = Mechanism::new(MechanismKind::AllPay, 3, risk).unwrap();
            let game = Game::new(mech.clone(), prior.clone(), vec![vec![ag.clone()]; 3]).unwrap();
            let t = build_utility_tensor(&game, 1, DEFAULT_MEMORY_BUDGET).unwrap();
            for m in 0..5 {
                for own in 0..7 {
                    for rest in 0..49 {
                        let bids = [ag.value(rest / 7), ag.value(own), ag.value(rest % 7)];
                        let u = mech.expost_utility(1, &bids, og.value(m)).unwrap();
                        assert!((t.entry(m, own, rest) - u).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn fpsb_against_zero_bidder() {
        let game = Arc::new(fpsb_game(4, 5));
        let engine = GradientEngine::new(game.clone(), 0, &GradientOptions::default()).unwrap();
        let me = game.init_strategy(0, InitMode::Uniform, 0).unwrap();
        let mut zero = Array2::zeros((4, 5));
        zero.column_mut(0).fill(0.25);
        let opp = me.with_matrix(zero).unwrap();
        let c = engine.gradient(&[&me, &opp]).unwrap();
        let o = game.prior.obs_grid(0).points();
        let b = game.action_grids[0][0].points();
        for k in 0..4 {
            assert_eq!(c[[k, 0]], 0.0);
            for l in 1..5 {
                assert!((c[[k, l]] - (o[k] - b[l])).abs() < 1e-15);
            }
        }
    }
}
