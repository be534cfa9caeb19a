//! Batches of independent runs and their on-disk artifacts.
//!
//! A batch directory holds `summary.csv` and one `run_<r>/` directory per
//! run with `strategy_agent<i>.csv` (plus a `.json` sidecar), `metrics.csv`,
//! `plotdata.csv`, `progress.jsonl` and `meta.json`. Every artifact carries
//! the config hash, the run seed and the code version.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::{MechanismSpec, RunConfig};
use crate::error::{Error, Result};
use crate::evaluate::{emit_plot_data, evaluate, lookup_analytic, AnalyticBne, EvalReport};
use crate::game::Game;
use crate::gradient::{GradientEngine, GradientOptions};
use crate::grid::Grid;
use crate::learner::{run, RunResult};
use crate::sampler::PriorModel;
use crate::strategy::{InitMode, Strategy};
use crate::verify::{collusive_probe, vs_probe};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Sidecar record of a stored strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMeta {
    pub agent: usize,
    pub mechanism_id: String,
    pub mechanism: MechanismSpec,
    pub obs_grid: Grid,
    pub action_grids: Vec<Grid>,
    pub marginal: Vec<f64>,
    pub iteration: usize,
    pub seed: u64,
    pub config_hash: String,
    pub code_version: String,
}

/// Dense CSV dump, one line per matrix entry. Floats use the shortest
/// representation that parses back to the same bits.
pub fn strategy_csv(strategy: &Strategy) -> String {
    let dims = strategy.action_grids().len();
    let mut out = String::from("obs_index,action_index,mass,obs_value");
    for d in 0..dims {
        if dims == 1 {
            out.push_str(",action_value");
        } else {
            let _ = write!(out, ",action_value_{d}");
        }
    }
    out.push('\n');
    let obs = strategy.obs_grid().points();
    let mut coords = vec![0.0; dims];
    for ((k, l), &mass) in strategy.matrix().indexed_iter() {
        let _ = write!(out, "{k},{l},{mass:?},{:?}", obs[k]);
        strategy.write_action(l, &mut coords);
        for c in &coords {
            let _ = write!(out, ",{c:?}");
        }
        out.push('\n');
    }
    out
}

fn artifact(msg: impl Into<String>) -> Error {
    Error::Artifact(msg.into())
}

/// Rebuilds a strategy from its CSV dump and sidecar. Coordinates in the
/// CSV must agree with the sidecar grids.
pub fn parse_strategy_csv(text: &str, meta: &StrategyMeta) -> Result<Strategy> {
    let (k, dims) = (meta.obs_grid.len(), meta.action_grids.len());
    let l: usize = meta.action_grids.iter().map(Grid::len).product();
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| artifact("empty strategy file"))?;
    if !header.starts_with("obs_index,action_index,mass,obs_value") || header.split(',').count() != 4 + dims {
        return Err(artifact(format!("unexpected strategy header `{header}`")));
    }
    let template = Strategy::init(InitMode::Uniform, meta.obs_grid.clone(), meta.action_grids.clone(), meta.marginal.clone(), 0)?;
    let mut matrix = Array2::from_elem((k, l), f64::NAN);
    let mut coords = vec![0.0; dims];
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || artifact(format!("malformed strategy line {}", n + 2));
        if fields.len() != 4 + dims {
            return Err(bad());
        }
        let ki: usize = fields[0].parse().map_err(|_| bad())?;
        let li: usize = fields[1].parse().map_err(|_| bad())?;
        let nums: Vec<f64> = fields[2..].iter().map(|f| f.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        if ki >= k || li >= l {
            return Err(bad());
        }
        template.write_action(li, &mut coords);
        if nums[1] != meta.obs_grid.value(ki) || nums[2..] != coords[..] {
            return Err(artifact(format!("line {} disagrees with the grid metadata", n + 2)));
        }
        matrix[[ki, li]] = nums[0];
    }
    if matrix.iter().any(|x| x.is_nan()) {
        return Err(artifact("strategy file does not cover every entry"));
    }
    Strategy::new(matrix, meta.obs_grid.clone(), meta.action_grids.clone(), meta.marginal.clone())
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn save_strategy(path: &Path, strategy: &Strategy, meta: &StrategyMeta) -> Result<()> {
    fs::write(path, strategy_csv(strategy))?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| artifact(e.to_string()))?;
    fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn load_strategy(path: &Path) -> Result<(Strategy, StrategyMeta)> {
    let side = sidecar_path(path);
    let meta_text = fs::read_to_string(&side).map_err(|e| artifact(format!("cannot read {}: {e}", side.display())))?;
    let meta: StrategyMeta = serde_json::from_str(&meta_text).map_err(|e| artifact(format!("bad sidecar {}: {e}", side.display())))?;
    let text = fs::read_to_string(path).map_err(|e| artifact(format!("cannot read {}: {e}", path.display())))?;
    Ok((parse_strategy_csv(&text, &meta)?, meta))
}

/// Refuses a stored strategy whose grids, marginal or mechanism differ from
/// what `config` would build for `agent`.
pub fn check_compatible(meta: &StrategyMeta, config: &RunConfig, game: &Game, agent: usize) -> Result<()> {
    if agent >= game.agents() {
        return Err(artifact(format!("agent {agent} does not exist in a {}-agent game", game.agents())));
    }
    let expected = game.init_strategy(agent, InitMode::Uniform, 0)?;
    let mismatch = |what: &str| Err(artifact(format!("stored strategy for agent {agent} has a different {what} than the requested configuration")));
    if meta.mechanism != config.mechanism {
        return mismatch("mechanism");
    }
    if &meta.obs_grid != expected.obs_grid() {
        return mismatch("observation grid");
    }
    if meta.action_grids.as_slice() != expected.action_grids() {
        return mismatch("action grid");
    }
    let close = meta.marginal.len() == expected.marginal().len()
        && meta.marginal.iter().zip(expected.marginal()).all(|(a, b)| (a - b).abs() <= 1e-12);
    if !close {
        return mismatch("prior marginal");
    }
    Ok(())
}

/// Outcome of one successful run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub iterations: usize,
    pub termination: String,
    /// Largest in-game relative utility loss at the final check.
    pub ell: f64,
    pub seconds: f64,
    pub evaluation: EvalReport,
}

impl RunRecord {
    /// Named scalar metrics; absent values stay `None`.
    pub fn metrics(&self) -> Vec<(String, Option<f64>)> {
        let mut out = vec![
            ("ell".to_string(), Some(self.ell)),
            ("iterations".to_string(), Some(self.iterations as f64)),
            ("seconds".to_string(), Some(self.seconds)),
            ("revenue".to_string(), Some(self.evaluation.revenue)),
        ];
        for a in &self.evaluation.agents {
            out.push((format!("L_agent{}", a.agent), a.loss));
            match &a.l2 {
                Some(v) if v.len() == 1 => out.push((format!("L2_agent{}", a.agent), Some(v[0]))),
                Some(v) => out.extend(v.iter().enumerate().map(|(d, x)| (format!("L2_agent{}_dim{d}", a.agent), Some(*x)))),
                None => out.push((format!("L2_agent{}", a.agent), None)),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: usize,
    pub seed: u64,
    pub error: String,
}

/// Mean and population standard deviation over the successful runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt(), count: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub config_id: String,
    pub config_hash: String,
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub stats: Vec<(String, Option<Stat>)>,
    pub warnings: Vec<String>,
}

impl BatchSummary {
    pub fn stat(&self, name: &str) -> Option<Stat> {
        self.stats.iter().find(|(n, _)| n == name).and_then(|(_, s)| *s)
    }

    fn aggregate(&mut self) {
        let names: Vec<String> = self.records.first().map(|r| r.metrics().into_iter().map(|(n, _)| n).collect()).unwrap_or_default();
        self.stats = names
            .into_iter()
            .map(|name| {
                let vals: Vec<f64> = self
                    .records
                    .iter()
                    .filter_map(|r| r.metrics().into_iter().find(|(n, _)| *n == name).and_then(|(_, v)| v))
                    .collect();
                let stat = Stat::of(&vals);
                (name, stat)
            })
            .collect();
    }

    /// One row per run, then `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let names: Vec<&str> = self.stats.iter().map(|(n, _)| n.as_str()).collect();
        let mut out = format!("run,seed,status,termination,{}\n", names.join(","));
        let mut rows: Vec<(usize, String)> = Vec::new();
        for r in &self.records {
            let vals: Vec<String> = r.metrics().into_iter().map(|(_, v)| v.map_or(String::new(), |x| format!("{x:?}"))).collect();
            rows.push((r.run, format!("{},{},ok,{},{}\n", r.run, r.seed, r.termination, vals.join(","))));
        }
        for f in &self.failures {
            rows.push((f.run, format!("{},{},failed,,{}\n", f.run, f.seed, ",".repeat(names.len().saturating_sub(1)))));
        }
        rows.sort_by_key(|(r, _)| *r);
        rows.into_iter().for_each(|(_, line)| out.push_str(&line));
        for (label, pick) in [("mean", 0), ("std", 1)] {
            let vals: Vec<String> = self
                .stats
                .iter()
                .map(|(_, s)| s.map_or(String::new(), |s| format!("{:?}", if pick == 0 { s.mean } else { s.std })))
                .collect();
            let _ = writeln!(out, "{label},,,,{}", vals.join(","));
        }
        out
    }
}

/// Where and how a batch writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct OutputOptions {
    pub dir: Option<PathBuf>,
    /// Write into a non-empty directory, replacing files of the same name.
    pub force: bool,
}

/// Fails when `dir` exists, is not empty, and `force` is off.
pub fn prepare_output(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            return Err(artifact(format!("output directory {} is not empty; pass --force to overwrite", dir.display())));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn analytic_for(config: &RunConfig, game: &Game) -> Option<AnalyticBne> {
    if config.evaluation.baseline {
        lookup_analytic(&game.mechanism, &config.prior.model)
    } else {
        None
    }
}

/// Single learning run plus its evaluation.
pub fn solve_once(config: &RunConfig, game: Arc<Game>, run_index: usize) -> Result<(RunResult, RunRecord)> {
    let seed = config.run_seed(run_index);
    let result = run(game.clone(), &config.learn_options(seed))?;
    let refs: Vec<&Strategy> = result.strategies.iter().collect();
    let bne = analytic_for(config, &game);
    let evaluation = evaluate(&game.mechanism, &config.prior.model, &refs, bne.as_ref(), config.evaluation.samples, seed)?;
    let record = RunRecord {
        run: run_index,
        seed,
        iterations: result.iterations,
        termination: result.termination.as_str().into(),
        ell: result.certificate.max_loss(),
        seconds: result.seconds,
        evaluation,
    };
    Ok((result, record))
}

fn metrics_csv(result: &RunResult, eval: &EvalReport) -> String {
    let dims = eval.agents.iter().filter_map(|a| a.l2.as_ref().map(Vec::len)).max().unwrap_or(1);
    let mut out = String::from("agent,ell,utility_best_response,utility_current,L");
    for d in 0..dims {
        if dims == 1 {
            out.push_str(",L2");
        } else {
            let _ = write!(out, ",L2_dim{d}");
        }
    }
    out.push_str(",utility_learned,utility_equilibrium\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
    let cert = &result.certificate;
    for a in &eval.agents {
        let i = a.agent;
        let _ = write!(out, "{i},{:?},{:?},{:?},{}", cert.losses[i], cert.best_response_utility[i], cert.current_utility[i], opt(a.loss));
        for d in 0..dims {
            let _ = write!(out, ",{}", opt(a.l2.as_ref().and_then(|v| v.get(d).copied())));
        }
        let _ = writeln!(out, ",{},{}", opt(a.utility_learned), opt(a.utility_equilibrium));
    }
    out
}

fn plot_csv_all(config: &RunConfig, game: &Game, result: &RunResult, seed: u64) -> Result<String> {
    let bne = analytic_for(config, game);
    let dims = result.strategies.iter().map(|s| s.action_grids().len()).max().unwrap_or(1);
    let mut out = String::from("agent,observation");
    for d in 0..dims {
        let _ = write!(out, ",bid_{d}");
    }
    out.push_str(",analytic\n");
    for (i, s) in result.strategies.iter().enumerate() {
        let f = bne.as_ref().and_then(|b| b.bids[i].as_ref());
        for row in emit_plot_data(s, &config.prior.model, i, f, config.evaluation.plot_points, seed)? {
            let _ = write!(out, "{i},{:?}", row.observation);
            for d in 0..dims {
                let _ = write!(out, ",{}", row.bid.get(d).map_or(String::new(), |b| format!("{b:?}")));
            }
            let _ = writeln!(out, ",{}", row.analytic.map_or(String::new(), |a| format!("{a:?}")));
        }
    }
    Ok(out)
}

/// Writes every artifact of one run into `dir`.
pub fn write_run(dir: &Path, config: &RunConfig, game: &Game, result: &RunResult, record: &RunRecord) -> Result<()> {
    fs::create_dir_all(dir)?;
    let hash = config.hash();
    for (i, s) in result.strategies.iter().enumerate() {
        let meta = StrategyMeta {
            agent: i,
            mechanism_id: game.mechanism.kind.id(),
            mechanism: config.mechanism.clone(),
            obs_grid: s.obs_grid().clone(),
            action_grids: s.action_grids().to_vec(),
            marginal: s.marginal().to_vec(),
            iteration: result.iterations,
            seed: record.seed,
            config_hash: hash.clone(),
            code_version: CODE_VERSION.into(),
        };
        save_strategy(&dir.join(format!("strategy_agent{i}.csv")), s, &meta)?;
    }
    fs::write(dir.join("metrics.csv"), metrics_csv(result, &record.evaluation))?;
    fs::write(dir.join("plotdata.csv"), plot_csv_all(config, game, result, record.seed)?)?;
    let progress: String = result
        .progress
        .iter()
        .map(|p| serde_json::to_string(p).map(|s| s + "\n"))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| artifact(e.to_string()))?;
    fs::write(dir.join("progress.jsonl"), progress)?;
    let meta = serde_json::json!({
        "config_id": config.id,
        "config_hash": hash,
        "code_version": CODE_VERSION,
        "run": record.run,
        "seed": record.seed,
        "learner": config.learner.rule.name(),
        "iterations": record.iterations,
        "termination": record.termination,
        "ell": record.ell,
        "certificate": result.certificate,
        "seconds": record.seconds,
        "evaluation": record.evaluation,
        "config": config.to_toml(),
    });
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta).map_err(|e| artifact(e.to_string()))?)?;
    Ok(())
}

/// Runs `config.runs` independent runs with seeds derived from the master
/// seed. Failed runs are recorded and left out of the aggregates; the batch
/// fails only when every run fails.
pub fn run_batch(config: &RunConfig, output: &OutputOptions) -> Result<BatchSummary> {
    config.validate()?;
    if let Some(dir) = &output.dir {
        prepare_output(dir, output.force)?;
    }
    let game = Arc::new(config.build_game()?);
    let mut summary = BatchSummary {
        config_id: config.id.clone(),
        config_hash: config.hash(),
        records: Vec::new(),
        failures: Vec::new(),
        stats: Vec::new(),
        warnings: Vec::new(),
    };
    for r in 0..config.runs {
        let outcome = solve_once(config, game.clone(), r).and_then(|(result, record)| {
            if let Some(dir) = &output.dir {
                write_run(&dir.join(format!("run_{r}")), config, &game, &result, &record)?;
            }
            Ok(record)
        });
        match outcome {
            Ok(record) => summary.records.push(record),
            Err(e) => {
                summary.warnings.push(format!("run {r} failed and is excluded from the aggregates: {e}"));
                summary.failures.push(RunFailure { run: r, seed: config.run_seed(r), error: e.to_string() });
            }
        }
    }
    if summary.records.is_empty() {
        let first = summary.failures.first().map_or(String::new(), |f| f.error.clone());
        return Err(artifact(format!("all {} runs failed; first error: {first}", config.runs)));
    }
    summary.aggregate();
    if let Some(dir) = &output.dir {
        fs::write(dir.join("summary.csv"), summary.to_csv())?;
    }
    Ok(summary)
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Observation and action points together (value points follow when set).
    Grid,
    /// Bernoulli-weights correlation of the combinatorial prior.
    Gamma,
    /// CRRA exponent.
    Rho,
    /// Tullock exponent.
    R,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" | "k" => Ok(Self::Grid),
            "gamma" => Ok(Self::Gamma),
            "rho" | "risk" => Ok(Self::Rho),
            "r" => Ok(Self::R),
            other => Err(Error::Config(format!("unknown sweep parameter `{other}` (expected grid, gamma, rho or r)"))),
        }
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::Grid => "grid",
            Self::Gamma => "gamma",
            Self::Rho => "rho",
            Self::R => "r",
        }
    }

    /// Copy of `config` with this parameter set to `value`.
    pub fn apply(self, config: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut c = config.clone();
        match self {
            Self::Grid => {
                if value.fract() != 0.0 || value < 2.0 {
                    return Err(Error::Config(format!("grid size must be an integer of at least 2, got {value}")));
                }
                let k = value as usize;
                c.grids.obs_points = k;
                c.grids.action_points = k;
                if c.grids.value_points.is_some() {
                    c.grids.value_points = Some(k);
                }
            }
            Self::Gamma => match &mut c.prior.model {
                PriorModel::BernoulliLlg { gamma } => *gamma = value,
                _ => return Err(Error::Config("gamma sweeps need the combinatorial prior".into())),
            },
            Self::Rho => c.mechanism.risk = value,
            Self::R => {
                if c.mechanism.r.is_none() {
                    return Err(Error::Config("r sweeps need a Tullock contest".into()));
                }
                c.mechanism.r = Some(value);
            }
        }
        c.id = format!("{}_{}{}", config.id, self.name(), value);
        c.validate()?;
        Ok(c)
    }
}

/// One batch per value, written to `<dir>/<param><value>/`, plus
/// `sweep.csv` with means and standard deviations at the root.
pub fn sweep(config: &RunConfig, param: SweepParam, values: &[f64], output: &OutputOptions) -> Result<Vec<(f64, BatchSummary)>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values.iter().map(|&v| param.apply(config, v)).collect::<Result<Vec<_>>>()?;
    if let Some(dir) = &output.dir {
        prepare_output(dir, output.force)?;
    }
    let mut out = Vec::new();
    for (&v, c) in values.iter().zip(&configs) {
        let sub = OutputOptions { dir: output.dir.as_ref().map(|d| d.join(format!("{}{v}", param.name()))), force: true };
        out.push((v, run_batch(c, &sub)?));
    }
    if let Some(dir) = &output.dir {
        fs::write(dir.join("sweep.csv"), sweep_csv(param, &out))?;
    }
    Ok(out)
}

/// Mean and standard deviation of every metric per swept value.
pub fn sweep_csv(param: SweepParam, rows: &[(f64, BatchSummary)]) -> String {
    let mut names: Vec<String> = Vec::new();
    for (_, s) in rows {
        for (n, _) in &s.stats {
            if !names.contains(n) {
                names.push(n.clone());
            }
        }
    }
    let mut out = String::from(param.name());
    for n in &names {
        let _ = write!(out, ",{n}_mean,{n}_std");
    }
    out.push('\n');
    for (v, s) in rows {
        let _ = write!(out, "{v}");
        for n in &names {
            match s.stat(n) {
                Some(st) => {
                    let _ = write!(out, ",{:?},{:?}", st.mean, st.std);
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

/// Variational-stability probe at the collusive profile that shades every
/// agent's mean bid by `factor`. A positive value means the equilibrium is
/// not globally variationally stable.
pub fn probe_vs(game: Arc<Game>, equilibrium: &[Strategy], factor: f64) -> Result<f64> {
    if equilibrium.len() != game.agents() {
        return Err(Error::DimensionMismatch { expected: game.agents(), actual: equilibrium.len() });
    }
    let opts = GradientOptions::default();
    let engines = (0..game.agents()).map(|i| GradientEngine::new(game.clone(), i, &opts)).collect::<Result<Vec<_>>>()?;
    let probe = equilibrium.iter().map(|s| collusive_probe(s, factor)).collect::<Result<Vec<_>>>()?;
    let eq: Vec<&Strategy> = equilibrium.iter().collect();
    let pr: Vec<&Strategy> = probe.iter().collect();
    vs_probe(&engines, &eq, &pr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset;

    fn tiny() -> RunConfig {
        let mut c = preset("fpsb_2_uniform").unwrap();
        c.grids.obs_points = 16;
        c.grids.action_points = 16;
        c.learner.max_iterations = 30;
        c.runs = 2;
        c.evaluation.samples = 1 << 14;
        c.evaluation.plot_points = 10;
        c
    }

    #[test]
    fn stat_of_single_value_has_zero_std() {
        let s = Stat::of(&[0.25]).unwrap();
        assert_eq!((s.mean, s.std, s.count), (0.25, 0.0, 1));
        assert!(Stat::of(&[]).is_none());
        let s = Stat::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
    }

    #[test]
    fn strategy_csv_round_trips_bit_exactly() {
        let c = tiny();
        let game = Arc::new(c.build_game().unwrap());
        let s = game.init_strategy(0, InitMode::Random, 17).unwrap();
        let meta = StrategyMeta {
            agent: 0,
            mechanism_id: game.mechanism.kind.id(),
            mechanism: c.mechanism.clone(),
            obs_grid: s.obs_grid().clone(),
            action_grids: s.action_grids().to_vec(),
            marginal: s.marginal().to_vec(),
            iteration: 0,
            seed: 17,
            config_hash: c.hash(),
            code_version: CODE_VERSION.into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        save_strategy(&path, &s, &meta).unwrap();
        let (back, meta_back) = load_strategy(&path).unwrap();
        assert_eq!(meta_back, meta);
        assert!(back.matrix().iter().zip(s.matrix()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back, s);
        check_compatible(&meta, &c, &game, 0).unwrap();

        let mut other = c.clone();
        other.grids.action_points = 20;
        let g2 = other.build_game().unwrap();
        assert!(check_compatible(&meta, &other, &g2, 0).is_err());
    }

    #[test]
    fn corrupted_strategy_file_is_rejected() {
        let c = tiny();
        let game = c.build_game().unwrap();
        let s = game.init_strategy(0, InitMode::Uniform, 0).unwrap();
        let meta = StrategyMeta {
            agent: 0,
            mechanism_id: "fpsb".into(),
            mechanism: c.mechanism.clone(),
            obs_grid: s.obs_grid().clone(),
            action_grids: s.action_grids().to_vec(),
            marginal: s.marginal().to_vec(),
            iteration: 0,
            seed: 0,
            config_hash: String::new(),
            code_version: CODE_VERSION.into(),
        };
        let text = strategy_csv(&s);
        let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(parse_strategy_csv(&truncated, &meta).is_err());
        let shifted = text.replacen("0,1,", "0,2,", 1);
        assert!(parse_strategy_csv(&shifted, &meta).is_err());
    }

    #[test]
    fn batch_writes_artifacts_and_is_deterministic() {
        let c = tiny();
        let dir = tempfile::tempdir().unwrap();
        let out = OutputOptions { dir: Some(dir.path().join("b")), force: false };
        let a = run_batch(&c, &out).unwrap();
        for f in ["strategy_agent0.csv", "strategy_agent0.json", "metrics.csv", "plotdata.csv", "progress.jsonl", "meta.json"] {
            assert!(dir.path().join("b/run_1").join(f).exists(), "{f}");
        }
        let summary = fs::read_to_string(dir.path().join("b/summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 1 + 2 + 2);
        assert!(run_batch(&c, &out).is_err(), "must refuse a non-empty directory");

        let b = run_batch(&c, &OutputOptions::default()).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.ell.to_bits(), rb.ell.to_bits());
            assert_eq!(ra.evaluation, rb.evaluation);
        }
        assert_eq!(a.stat("L_agent0"), b.stat("L_agent0"));
    }

    #[test]
    fn sweep_parameters_apply() {
        let c = tiny();
        let k = SweepParam::Grid.apply(&c, 8.0).unwrap();
        assert_eq!((k.grids.obs_points, k.grids.action_points), (8, 8));
        assert!(SweepParam::Grid.apply(&c, 8.5).is_err());
        assert!(SweepParam::Gamma.apply(&c, 0.5).is_err());
        assert_eq!(SweepParam::Rho.apply(&c, 0.5).unwrap().mechanism.risk, 0.5);
        assert!("bogus".parse::<SweepParam>().is_err());
    }
}
