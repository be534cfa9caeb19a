use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use soda_core::config::RunConfig;
use soda_core::evaluate::{evaluate, lookup_analytic};
use soda_core::presets::{all_presets, preset};
use soda_core::runner::{check_compatible, load_strategy, probe_vs, run_batch, solve_once, sweep, BatchSummary, OutputOptions, SweepParam};
use soda_core::Strategy;

#[derive(Parser)]
#[command(name = "soda", version, about = "Learn Bayes-Nash equilibria of discretized auctions and contests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn equilibria for one configuration over one or more runs.
    Solve(Common),
    /// Evaluate stored strategies against the analytic equilibrium.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Run directory holding strategy_agent<i>.csv files.
        #[arg(long)]
        strategies: PathBuf,
    },
    /// Repeat a configuration over grid sizes or a model parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated grid sizes (observation and action points).
        #[arg(long, value_delimiter = ',', conflicts_with = "param")]
        grid: Vec<usize>,
        /// Parameter to vary: gamma, rho or r.
        #[arg(long, requires = "values")]
        param: Option<String>,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Shipped experiment configurations.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Variational-stability probe at a collusive profile.
    ProbeVs {
        #[command(flatten)]
        common: Common,
        /// Run directory with a learned profile; learns one when omitted.
        #[arg(long)]
        strategies: Option<PathBuf>,
        /// Factor applied to every mean bid of the collusive profile.
        #[arg(long, default_value_t = 0.5)]
        factor: f64,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset ids.
    List,
    /// Print a preset as TOML.
    Show { id: String },
    /// Run a preset batch.
    Run {
        id: String,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped preset id.
    #[arg(long)]
    preset: Option<String>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Default)]
struct Overrides {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo samples for evaluation.
    #[arg(long = "n-samples")]
    n_samples: Option<usize>,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.runs {
            cfg.runs = r;
        }
        if let Some(n) = self.n_samples {
            cfg.evaluation.samples = n;
        }
        cfg.validate()?;
        Ok(())
    }

    fn output(&self) -> OutputOptions {
        OutputOptions { dir: self.out.clone(), force: self.force }
    }
}

fn load_preset(id: &str) -> Result<RunConfig> {
    preset(id).ok_or_else(|| anyhow!("unknown preset `{id}`; `soda preset list` shows the available ids"))
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(id)) => load_preset(id)?,
            (None, None) => bail!("pass --config PATH or --preset ID"),
        };
        self.overrides.apply(&mut cfg)?;
        Ok(cfg)
    }
}

fn fmt_stat(s: &BatchSummary, name: &str) -> String {
    s.stat(name).map_or("-".into(), |st| format!("{:.4} ({:.4})", st.mean, st.std))
}

fn print_summary(s: &BatchSummary) {
    println!("config {} ({})", s.config_id, &s.config_hash[..12]);
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    for r in &s.records {
        println!("  run {:>2} seed {:>8}: {} after {} iterations, ell = {:.2e}, {:.2} s", r.run, r.seed, r.termination, r.iterations, r.ell, r.seconds);
    }
    println!("  {} of {} runs succeeded; mean (std):", s.records.len(), s.records.len() + s.failures.len());
    for (name, stat) in &s.stats {
        if let Some(st) = stat {
            println!("    {name:<20} {:.6} ({:.6})", st.mean, st.std);
        }
    }
}

fn load_profile(dir: &Path, cfg: &RunConfig, game: &soda_core::game::Game) -> Result<Vec<Strategy>> {
    (0..game.agents())
        .map(|i| {
            let path = dir.join(format!("strategy_agent{i}.csv"));
            let (s, meta) = load_strategy(&path).with_context(|| format!("loading {}", path.display()))?;
            check_compatible(&meta, cfg, game, i)?;
            Ok(s)
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(common) => {
            let cfg = common.config()?;
            let s = run_batch(&cfg, &common.overrides.output())?;
            print_summary(&s);
        }
        Command::Evaluate { common, strategies } => {
            let cfg = common.config()?;
            let game = cfg.build_game()?;
            let profile = load_profile(&strategies, &cfg, &game)?;
            let refs: Vec<&Strategy> = profile.iter().collect();
            let bne = lookup_analytic(&game.mechanism, &cfg.prior.model);
            let report = evaluate(&game.mechanism, &cfg.prior.model, &refs, bne.as_ref(), cfg.evaluation.samples, cfg.seed)?;
            println!("baseline: {}", report.baseline.as_deref().unwrap_or("none"));
            println!("revenue: {:.6}", report.revenue);
            for a in &report.agents {
                let l = a.loss.map_or("-".into(), |x| format!("{x:.6}"));
                let l2 = a.l2.as_ref().map_or("-".into(), |v| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join("/"));
                let note = a.diagnostic.as_deref().map_or(String::new(), |d| format!(" ({d})"));
                println!("agent {}: L = {l}, L2 = {l2}{note}", a.agent);
            }
        }
        Command::Sweep { common, grid, param, values } => {
            let cfg = common.config()?;
            let (p, vals) = match param {
                Some(name) => (name.parse::<SweepParam>()?, values),
                None if !grid.is_empty() => (SweepParam::Grid, grid.iter().map(|&k| k as f64).collect()),
                None => bail!("pass --grid LIST or --param NAME --values LIST"),
            };
            let rows = sweep(&cfg, p, &vals, &common.overrides.output())?;
            let names: Vec<String> = rows[0].1.stats.iter().map(|(n, _)| n.clone()).filter(|n| n.starts_with('L') || n == "ell").collect();
            println!("{:<8} {}", p.name(), names.iter().map(|n| format!("{n:<22}")).collect::<String>());
            for (v, s) in &rows {
                for w in &s.warnings {
                    eprintln!("warning: {w}");
                }
                println!("{v:<8} {}", names.iter().map(|n| format!("{:<22}", fmt_stat(s, n))).collect::<String>());
            }
        }
        Command::Preset { action } => match action {
            PresetAction::List => {
                for c in all_presets() {
                    println!("{:<36} {}", c.id, c.description);
                }
            }
            PresetAction::Show { id } => print!("{}", load_preset(&id)?.to_toml()),
            PresetAction::Run { id, overrides } => {
                let mut cfg = load_preset(&id)?;
                overrides.apply(&mut cfg)?;
                let s = run_batch(&cfg, &overrides.output())?;
                print_summary(&s);
            }
        },
        Command::ProbeVs { common, strategies, factor } => {
            let cfg = common.config()?;
            let game = Arc::new(cfg.build_game()?);
            let profile = match strategies {
                Some(dir) => load_profile(&dir, &cfg, &game)?,
                None => {
                    let (result, record) = solve_once(&cfg, game.clone(), 0)?;
                    println!("learned profile: {} after {} iterations, ell = {:.2e}", record.termination, record.iterations, record.ell);
                    result.strategies
                }
            };
            let value = probe_vs(game, &profile, factor)?;
            println!("vs_probe = {value:.6e}");
            if value > 0.0 {
                println!("positive: the equilibrium is not globally variationally stable");
            } else {
                println!("non-positive: no violation found at this probe");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
