//! TOML run configuration.
//!
//! A file may name a shipped preset with `preset = "<id>"`; its own keys
//! are then merged over the preset table by table.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluate::DEFAULT_SAMPLES;
use crate::game::Game;
use crate::grid::Grid;
use crate::learner::{LearnOptions, Rule};
use crate::mechanism::{LlgRule, Mechanism, MechanismKind, SplitCost};
use crate::prior::DiscretePrior;
use crate::sampler::PriorModel;
use crate::strategy::InitMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismName {
    Fpsb,
    Spsb,
    AllPay,
    Tullock,
    Llg,
    SplitAward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSpec {
    pub kind: MechanismName,
    #[serde(default = "one")]
    pub risk: f64,
    /// Tullock exponent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<LlgRule>,
    /// Split-award cost of serving half the contract.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_model: Option<SplitCost>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sole_bounds: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_bounds: Option<[f64; 2]>,
}

impl MechanismSpec {
    pub fn simple(kind: MechanismName) -> Self {
        Self { kind, risk: 1.0, r: None, rule: None, cost: None, cost_model: None, sole_bounds: None, split_bounds: None }
    }

    pub fn build(&self, agents: usize) -> Result<Mechanism> {
        let missing = |name: &'static str| Error::Config(format!("mechanism `{:?}` needs `{name}`", self.kind));
        let kind = match self.kind {
            MechanismName::Fpsb => MechanismKind::Fpsb,
            MechanismName::Spsb => MechanismKind::Spsb,
            MechanismName::AllPay => MechanismKind::AllPay,
            MechanismName::Tullock => MechanismKind::Tullock { r: self.r.ok_or_else(|| missing("r"))? },
            MechanismName::Llg => MechanismKind::Llg { rule: self.rule.ok_or_else(|| missing("rule"))? },
            MechanismName::SplitAward => {
                let mut kind = MechanismKind::split_award(
                    self.cost.ok_or_else(|| missing("cost"))?,
                    self.cost_model.unwrap_or_default(),
                );
                if let MechanismKind::SplitAward { sole_bounds, split_bounds, .. } = &mut kind {
                    if let Some([a, b]) = self.sole_bounds {
                        *sole_bounds = (a, b);
                    }
                    if let Some([a, b]) = self.split_bounds {
                        *split_bounds = (a, b);
                    }
                }
                kind
            }
        };
        Mechanism::new(kind, agents, self.risk)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub model: PriorModel,
    /// Latent draws used to bin correlated priors.
    #[serde(default = "default_prior_samples")]
    pub samples: usize,
}

/// Point counts and bounds of the discretization. Bound lists hold one
/// entry per agent or a single entry shared by all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub obs_points: usize,
    /// Points per action axis.
    pub action_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs_bounds: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_bounds: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_bounds: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSource {
    /// Step parameters as reported for the experiment.
    #[default]
    Published,
    /// Step parameters chosen here instead of the reported ones.
    Chosen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub rule: Rule,
    pub eta0: f64,
    pub beta: f64,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_check_interval")]
    pub check_interval: usize,
    #[serde(default)]
    pub init: InitMode,
    #[serde(default = "yes")]
    pub symmetric: bool,
    /// Order-statistic gradients for symmetric single-object auctions.
    #[serde(default)]
    pub symmetric_iid: bool,
    #[serde(default)]
    pub params: ParamSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    #[serde(default = "default_eval_samples")]
    pub samples: usize,
    /// Compare against the registered analytic equilibrium when one exists.
    #[serde(default = "yes")]
    pub baseline: bool,
    #[serde(default = "default_plot_points")]
    pub plot_points: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self { samples: DEFAULT_SAMPLES, baseline: true, plot_points: default_plot_points() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub mechanism: MechanismSpec,
    pub prior: PriorSpec,
    pub grids: GridSpec,
    pub learner: LearnerSpec,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub evaluation: EvalSpec,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_prior_samples() -> usize {
    1_000_000
}
fn default_iterations() -> usize {
    1000
}
fn default_tolerance() -> f64 {
    1e-4
}
fn default_check_interval() -> usize {
    10
}
fn default_eval_samples() -> usize {
    DEFAULT_SAMPLES
}
fn default_plot_points() -> usize {
    150
}
fn default_runs() -> usize {
    10
}

/// Recursively overlays `top` onto `base`.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Parses TOML, resolving a `preset` include.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("invalid TOML: {e}")))?;
        let table = match table.remove("preset") {
            Some(toml::Value::String(id)) => {
                let base = crate::presets::preset(&id).ok_or_else(|| Error::Config(format!("unknown preset `{id}`")))?;
                let mut base = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
                merge(&mut base, table);
                base
            }
            Some(_) => return Err(Error::Config("`preset` must be a string".into())),
            None => table,
        };
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!("config not found: {}", path.display())),
            _ => Error::Io(e),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grids;
        let bad = |name: &'static str, reason: &str| Err(Error::InvalidParameter { name, reason: reason.into() });
        if g.obs_points < 2 || g.action_points < 2 || g.value_points.is_some_and(|m| m < 2) {
            return bad("grids", "every grid needs at least two points");
        }
        if self.runs == 0 {
            return bad("runs", "must be at least 1");
        }
        if self.learner.check_interval == 0 {
            return bad("check_interval", "must be positive");
        }
        self.prior.model.validate()?;
        self.mechanism.build(self.prior.model.agents())?;
        Ok(())
    }

    pub fn agents(&self) -> usize {
        self.prior.model.agents()
    }

    pub fn build_mechanism(&self) -> Result<Mechanism> {
        self.mechanism.build(self.agents())
    }

    fn per_agent(list: &Option<Vec<[f64; 2]>>, agent: usize, default: (f64, f64)) -> Result<(f64, f64)> {
        match list.as_deref() {
            None => Ok(default),
            Some([one]) => Ok((one[0], one[1])),
            Some(all) => all
                .get(agent)
                .map(|b| (b[0], b[1]))
                .ok_or_else(|| Error::Config(format!("bounds list has no entry for agent {agent}"))),
        }
    }

    /// Agents the prior treats symmetrically.
    fn exchangeable(&self) -> Vec<Vec<usize>> {
        match &self.prior.model {
            PriorModel::CommonValue { agents } => vec![(0..*agents).collect()],
            PriorModel::Affiliated | PriorModel::BernoulliLlg { .. } => vec![vec![0, 1]],
            PriorModel::Independent { .. } => Vec::new(),
        }
    }

    pub fn action_grids(&self, mech: &Mechanism) -> Result<Vec<Vec<Grid>>> {
        let model = &self.prior.model;
        let l = self.grids.action_points;
        (0..self.agents())
            .map(|i| match &mech.kind {
                MechanismKind::SplitAward { sole_bounds, split_bounds, .. } => {
                    Ok(vec![Grid::uniform(sole_bounds.0, sole_bounds.1, l)?, Grid::uniform(split_bounds.0, split_bounds.1, l)?])
                }
                _ => {
                    let obs = Self::per_agent(&self.grids.obs_bounds, i, model.obs_bounds(i))?;
                    let (lo, hi) = Self::per_agent(&self.grids.action_bounds, i, obs)?;
                    Ok(vec![Grid::uniform(lo, hi, l)?])
                }
            })
            .collect()
    }

    /// Discretized game; correlated priors are binned with `seed`.
    pub fn build_game(&self) -> Result<Game> {
        self.validate()?;
        let model = &self.prior.model;
        let n = self.agents();
        let mech = self.build_mechanism()?;
        let obs_grids = (0..n)
            .map(|i| {
                let (lo, hi) = Self::per_agent(&self.grids.obs_bounds, i, model.obs_bounds(i))?;
                Grid::uniform(lo, hi, self.grids.obs_points)
            })
            .collect::<Result<Vec<_>>>()?;
        let value_grids = if model.private_values() {
            None
        } else {
            let m = self.grids.value_points.unwrap_or(self.grids.obs_points);
            Some(
                (0..n)
                    .map(|i| {
                        let (lo, hi) = Self::per_agent(&self.grids.value_bounds, i, model.value_bounds(i))?;
                        Grid::uniform(lo, hi, m)
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        };
        let prior = DiscretePrior::from_model(model, obs_grids, value_grids, self.prior.samples, self.seed, &self.exchangeable())?;
        let action_grids = self.action_grids(&mech)?;
        Game::new(mech, prior, action_grids)
    }

    /// Learning options for run `run` of the batch.
    pub fn learn_options(&self, seed: u64) -> LearnOptions {
        let l = &self.learner;
        LearnOptions {
            rule: l.rule,
            eta0: l.eta0,
            beta: l.beta,
            max_iterations: l.max_iterations,
            tolerance: l.tolerance,
            check_interval: l.check_interval,
            symmetric: l.symmetric,
            init: l.init,
            seed,
            gradient: crate::gradient::GradientOptions { symmetric_iid: l.symmetric_iid, ..Default::default() },
        }
    }

    /// Seed of run `run`, derived from the master seed.
    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(run as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
id = "tiny"
runs = 1

[mechanism]
kind = "fpsb"

[prior.model]
kind = "independent"
marginals = [{ kind = "uniform", lower = 0.0, upper = 1.0 }, { kind = "uniform", lower = 0.0, upper = 1.0 }]

[grids]
obs_points = 8
action_points = 8

[learner]
rule = "soda1"
eta0 = 10.0
beta = 0.05
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.learner.max_iterations, 1000);
        assert_eq!(cfg.evaluation.samples, 1 << 18);
        let again = RunConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        let game = cfg.build_game().unwrap();
        assert_eq!(game.obs_count(1), 8);
    }

    #[test]
    fn preset_include_with_overrides() {
        let cfg = RunConfig::from_toml_str("preset = \"fpsb_2_uniform\"\nruns = 2\n[grids]\nobs_points = 16\n").unwrap();
        assert_eq!(cfg.runs, 2);
        assert_eq!(cfg.grids.obs_points, 16);
        assert_eq!(cfg.grids.action_points, 64);
        assert!(RunConfig::from_toml_str("preset = \"nope\"").is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_toml_str(&MINIMAL.replace("obs_points = 8", "obs_points = 1")).is_err());
        assert!(RunConfig::from_toml_str(&MINIMAL.replace("runs = 1", "runs = 0")).is_err());
        assert!(RunConfig::from_toml_str(&MINIMAL.replace("kind = \"fpsb\"", "kind = \"tullock\"")).is_err());
        assert!(RunConfig::from_toml_str(&format!("{MINIMAL}\nbogus = 1\n")).is_err());
        let missing = RunConfig::load(Path::new("/nonexistent/missing.toml")).unwrap_err();
        assert!(missing.to_string().contains("config not found"));
    }
}
