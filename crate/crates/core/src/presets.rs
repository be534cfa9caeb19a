//! Shipped experiment configurations, generated by family.

use crate::config::{EvalSpec, GridSpec, LearnerSpec, MechanismName, MechanismSpec, ParamSource, PriorSpec, RunConfig};
use crate::learner::Rule;
use crate::mechanism::{LlgRule, SplitCost};
use crate::sampler::{Marginal, PriorModel};
use crate::strategy::InitMode;

fn uniform(lower: f64, upper: f64) -> Marginal {
    Marginal::Uniform { lower, upper }
}

fn independent(marginals: Vec<Marginal>) -> PriorSpec {
    PriorSpec { model: PriorModel::Independent { marginals }, samples: 1 << 22 }
}

fn grids(k: usize, l: usize) -> GridSpec {
    GridSpec { obs_points: k, action_points: l, value_points: None, obs_bounds: None, value_bounds: None, action_bounds: None }
}

fn learner(rule: Rule, eta0: f64, beta: f64, params: ParamSource) -> LearnerSpec {
    LearnerSpec {
        rule,
        eta0,
        beta,
        max_iterations: 1000,
        tolerance: 1e-4,
        check_interval: 10,
        init: InitMode::Random,
        symmetric: true,
        symmetric_iid: false,
        params,
    }
}

fn config(id: String, description: &str, mechanism: MechanismSpec, prior: PriorSpec, grids: GridSpec, learner: LearnerSpec) -> RunConfig {
    RunConfig {
        id,
        description: description.into(),
        mechanism,
        prior,
        grids,
        learner,
        runs: 10,
        seed: 0,
        evaluation: EvalSpec::default(),
    }
}

/// Step parameters per rule; Frank-Wolfe and fictitious play ignore them.
type Steps = [(Rule, f64, f64, ParamSource); 4];

const SOFW: (Rule, f64, f64, ParamSource) = (Rule::Sofw, 1.0, 1.0, ParamSource::Published);

fn fpsb_baseline() -> Vec<RunConfig> {
    use ParamSource::Chosen;
    let steps = [
        (Rule::Soda1, 100.0, 0.05, Chosen),
        (Rule::Soda2, 1.0, 0.05, Chosen),
        (Rule::Soma2, 1.0, 0.5, Chosen),
        SOFW,
        (Rule::FictitiousPlay, 1.0, 1.0, Chosen),
    ];
    let mut out: Vec<RunConfig> = steps
        .iter()
        .map(|&(rule, eta, beta, src)| {
            let id = if rule == Rule::Soda1 { "fpsb_2_uniform".to_string() } else { format!("fpsb_2_uniform_{}", rule.name()) };
            config(
                id,
                "first-price auction, two bidders, uniform values",
                MechanismSpec::simple(MechanismName::Fpsb),
                independent(vec![uniform(0.0, 1.0); 2]),
                grids(64, 64),
                learner(rule, eta, beta, src),
            )
        })
        .collect();
    let mut sweep = config(
        "fpsb_discretization".into(),
        "first-price discretization sweep, fixed 1000 iterations",
        MechanismSpec::simple(MechanismName::Fpsb),
        independent(vec![uniform(0.0, 1.0); 2]),
        grids(64, 64),
        learner(Rule::Soda1, 10.0, 0.05, ParamSource::Published),
    );
    sweep.learner.tolerance = 0.0;
    out.push(sweep);
    out
}

fn interdependent() -> Vec<RunConfig> {
    use ParamSource::Published;
    let mut out = Vec::new();
    let cv: Steps = [(Rule::Soda1, 100.0, 0.5, Published), (Rule::Soda2, 1.0, 0.05, Published), (Rule::Soma2, 50.0, 0.5, Published), SOFW];
    for (rule, eta, beta, src) in cv {
        let mut g = grids(64, 64);
        g.value_points = Some(64);
        g.action_bounds = Some(vec![[0.0, 1.5]]);
        out.push(config(
            format!("common_value_{}", rule.name()),
            "second-price auction, three bidders, common value",
            MechanismSpec::simple(MechanismName::Spsb),
            PriorSpec { model: PriorModel::CommonValue { agents: 3 }, samples: 1 << 22 },
            g,
            learner(rule, eta, beta, src),
        ));
    }
    let av: Steps = [(Rule::Soda1, 100.0, 0.5, Published), (Rule::Soda2, 1.0, 0.5, Published), (Rule::Soma2, 1.0, 0.5, Published), SOFW];
    for (rule, eta, beta, src) in av {
        let mut g = grids(64, 64);
        g.action_bounds = Some(vec![[0.0, 1.5]]);
        out.push(config(
            format!("affiliated_fpsb_{}", rule.name()),
            "first-price auction, two bidders, affiliated values",
            MechanismSpec::simple(MechanismName::Fpsb),
            PriorSpec { model: PriorModel::Affiliated, samples: 1 << 22 },
            g,
            learner(rule, eta, beta, src),
        ));
    }
    out
}

fn llg() -> Vec<RunConfig> {
    use ParamSource::{Chosen, Published};
    // the published projected-step schedule stalls above the stopping tolerance here
    let steps: Steps = [(Rule::Soda1, 100.0, 0.05, Published), (Rule::Soda2, 50.0, 0.05, Published), (Rule::Soma2, 20.0, 0.5, Chosen), SOFW];
    let rules = [
        ("nz", LlgRule::NearestZero),
        ("nvcg", LlgRule::NearestVcg),
        ("nb", LlgRule::NearestBid),
        ("fp", LlgRule::FirstPrice),
    ];
    let mut out = Vec::new();
    for (tag, rule) in rules {
        for (gtag, gamma) in [("01", 0.1), ("05", 0.5), ("09", 0.9)] {
            for (r, eta, beta, src) in steps {
                let mut mech = MechanismSpec::simple(MechanismName::Llg);
                mech.rule = Some(rule);
                // first-price step sizes are not reported; the core-rule values are reused
                let src = if rule == LlgRule::FirstPrice && r != Rule::Sofw { ParamSource::Chosen } else { src };
                out.push(config(
                    format!("llg_{tag}_g{gtag}_{}", r.name()),
                    "local-local-global combinatorial auction, Bernoulli weights correlation",
                    mech,
                    PriorSpec { model: PriorModel::BernoulliLlg { gamma }, samples: 1 << 22 },
                    grids(64, 64),
                    learner(r, eta, beta, src),
                ));
            }
        }
    }
    out
}

fn split_award() -> Vec<RunConfig> {
    use ParamSource::Published;
    let mut out = Vec::new();
    let priors = [
        ("uniform", uniform(1.0, 1.4), 0.01),
        ("gaussian", Marginal::GaussianTrunc { mean: 1.2, std: 0.1, lower: 1.0, upper: 1.4 }, 0.05),
    ];
    for (tag, marginal, soma_eta) in priors {
        let steps: Steps = [(Rule::Soda1, 20.0, 0.05, Published), (Rule::Soda2, 0.05, 0.05, Published), (Rule::Soma2, soma_eta, 0.5, Published), SOFW];
        for (rule, eta, beta, src) in steps {
            let mut mech = MechanismSpec::simple(MechanismName::SplitAward);
            mech.cost = Some(0.3);
            mech.cost_model = Some(SplitCost::Proportional);
            mech.sole_bounds = Some([1.0, 2.5]);
            mech.split_bounds = Some([0.3, 1.2]);
            out.push(config(
                format!("split_award_{tag}_{}", rule.name()),
                "first-price split-award procurement auction, two suppliers",
                mech,
                independent(vec![marginal.clone(); 2]),
                grids(32, 64),
                learner(rule, eta, beta, src),
            ));
        }
    }
    out
}

fn risk_averse() -> Vec<RunConfig> {
    use ParamSource::Published;
    let mut out = Vec::new();
    for (kind, tag, soda1_eta) in [(MechanismName::Fpsb, "fpsb", 20.0), (MechanismName::AllPay, "allpay", 25.0)] {
        for (rtag, rho) in [("05", 0.5), ("07", 0.7), ("09", 0.9), ("10", 1.0)] {
            let steps = [(Rule::Soda1, soda1_eta, 0.05, Published), (Rule::Soda2, 0.1, 0.05, Published), (Rule::Soma2, 0.5, 0.5, Published)];
            for (rule, eta, beta, src) in steps {
                let mut mech = MechanismSpec::simple(kind);
                mech.risk = rho;
                let mut g = grids(64, 64);
                g.action_bounds = Some(vec![[0.0, 0.8]]);
                out.push(config(
                    format!("risk_{tag}_rho{rtag}_{}", rule.name()),
                    "two risk-averse bidders with uniform values",
                    mech,
                    independent(vec![uniform(0.0, 1.0); 2]),
                    g,
                    learner(rule, eta, beta, src),
                ));
            }
        }
    }
    out
}

fn tullock() -> Vec<RunConfig> {
    use ParamSource::Published;
    let steps = [(Rule::Soda1, 100.0, 0.05, Published), (Rule::Soda2, 10.0, 0.05, Published), (Rule::Soma2, 100.0, 0.5, Published)];
    let mut out = Vec::new();
    for (rtag, r) in [("05", 0.5), ("10", 1.0), ("15", 1.5)] {
        for (stag, marginals) in [("sym", vec![uniform(0.0, 1.0); 2]), ("asym", vec![uniform(0.0, 1.0), uniform(1.0, 2.0)])] {
            for (rule, eta, beta, src) in steps {
                let mut mech = MechanismSpec::simple(MechanismName::Tullock);
                mech.r = Some(r);
                let mut g = grids(64, 64);
                g.action_bounds = Some(vec![[0.0, 0.5]]);
                out.push(config(
                    format!("tullock_r{rtag}_{stag}_{}", rule.name()),
                    "two-player r-Tullock contest",
                    mech,
                    independent(marginals.clone()),
                    g,
                    learner(rule, eta, beta, src),
                ));
            }
        }
    }
    out
}

/// Every shipped configuration.
pub fn all_presets() -> Vec<RunConfig> {
    [fpsb_baseline(), interdependent(), llg(), split_award(), risk_averse(), tullock()].concat()
}

pub fn preset_ids() -> Vec<String> {
    all_presets().into_iter().map(|c| c.id).collect()
}

pub fn preset(id: &str) -> Option<RunConfig> {
    all_presets().into_iter().find(|c| c.id == id)
}
