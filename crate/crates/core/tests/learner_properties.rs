use std::sync::Arc;

use ndarray::Array2;
use proptest::prelude::*;

use soda_core::game::Game;
use soda_core::gradient::{GradientEngine, GradientOptions};
use soda_core::learner::{run, run_with_observer, step_soda1, step_soma2, LearnOptions, LearnerState, Rule, RunEvent};
use soda_core::{DiscretePrior, Grid, InitMode, Mechanism, MechanismKind, Strategy};

fn strategy(k: usize, l: usize, marginal: Vec<f64>, seed: u64) -> Strategy {
    let grid = Grid::uniform(0.0, 1.0, k).unwrap();
    Strategy::init(InitMode::Random, grid, vec![Grid::uniform(0.0, 1.0, l).unwrap()], marginal, seed).unwrap()
}

fn rule_strategy() -> impl proptest::strategy::Strategy<Value = Rule> {
    prop_oneof![Just(Rule::Soda1), Just(Rule::Soda2), Just(Rule::Soma2), Just(Rule::Sofw), Just(Rule::FictitiousPlay)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn updates_stay_feasible(
        rule in rule_strategy(),
        k in 2usize..6,
        l in 2usize..9,
        weights in proptest::collection::vec(0.0f64..1.0, 6),
        grads in proptest::collection::vec(-1.0f64..1.0, 3 * 6 * 9),
        log_scale in -2.0f64..3.0,
        log_eta in -3.0f64..3.0,
        beta in 0.01f64..=1.0,
        seed in 0u64..1000,
    ) {
        let mut marginal: Vec<f64> = weights[..k].to_vec();
        marginal[0] += 0.1;
        let total: f64 = marginal.iter().sum();
        marginal.iter_mut().for_each(|m| *m /= total);
        let mut state = LearnerState::new(rule, 10f64.powf(log_eta), beta, strategy(k, l, marginal.clone(), seed)).unwrap();
        let scale = 10f64.powf(log_scale);
        for step in 0..3 {
            let c = Array2::from_shape_fn((k, l), |(i, j)| grads[step * 54 + i * 9 + j] * scale);
            state.step(&c).unwrap();
            let m = state.iterate().matrix();
            for (row, &f) in m.rows().into_iter().zip(&marginal) {
                prop_assert!((row.sum() - f).abs() <= 1e-10);
                prop_assert!(row.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn entropic_and_projected_steps_ignore_row_shifts(
        shifts in proptest::collection::vec(-5.0f64..5.0, 4),
        grads in proptest::collection::vec(-1.0f64..1.0, 4 * 7),
        eta in 0.01f64..5.0,
    ) {
        let s = strategy(4, 7, vec![0.25; 4], 5);
        let c = Array2::from_shape_vec((4, 7), grads).unwrap();
        let shifted = Array2::from_shape_fn((4, 7), |(i, j)| c[[i, j]] + shifts[i]);
        for step in [step_soda1, step_soma2] {
            let a = step(&s, &c, eta).unwrap();
            let b = step(&s, &shifted, eta).unwrap();
            let d = a.matrix().iter().zip(b.matrix()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(d < 1e-12, "{d}");
        }
    }
}

fn asymmetric_game() -> Arc<Game> {
    let g0 = Grid::uniform(0.0, 1.0, 8).unwrap();
    let g1 = Grid::uniform(0.0, 2.0, 8).unwrap();
    let prior = DiscretePrior::independent(vec![g0.clone(), g1], vec![vec![1.0 / 8.0; 8]; 2]).unwrap();
    let a = Grid::uniform(0.0, 1.0, 10).unwrap();
    let mech = Mechanism::new(MechanismKind::Fpsb, 2, 1.0).unwrap();
    Arc::new(Game::new(mech, prior, vec![vec![a.clone()], vec![a]]).unwrap())
}

fn options(rule: Rule, iterations: usize) -> LearnOptions {
    LearnOptions { rule, eta0: 5.0, beta: 0.05, max_iterations: iterations, tolerance: 0.0, seed: 3, ..Default::default() }
}

#[test]
fn runs_are_deterministic() {
    let game = asymmetric_game();
    for rule in [Rule::Soda1, Rule::Soda2, Rule::Soma2, Rule::Sofw, Rule::FictitiousPlay] {
        let a = run(game.clone(), &options(rule, 25)).unwrap();
        let b = run(game.clone(), &options(rule, 25)).unwrap();
        assert_eq!(a.strategies, b.strategies, "{rule:?}");
        assert_eq!(a.progress, b.progress);
        let mut other = options(rule, 25);
        other.seed = 4;
        let c = run(game.clone(), &other).unwrap();
        assert_ne!(a.strategies, c.strategies);
    }
}

#[test]
fn gradients_are_taken_before_any_update() {
    let game = asymmetric_game();
    let mut events = Vec::new();
    run_with_observer(game.clone(), &options(Rule::Soda1, 6), &mut |e| {
        events.push(match e {
            RunEvent::GradientsComputed { iteration } => (iteration, None),
            RunEvent::Updated { iteration, role } => (iteration, Some(role)),
            RunEvent::Progress(_) => return,
        })
    })
    .unwrap();
    for t in 1..=6 {
        let pos: Vec<usize> = events.iter().enumerate().filter(|(_, e)| e.0 == t).map(|(i, _)| i).collect();
        assert_eq!(pos.len(), 3, "one gradient event and two updates at t={t}");
        assert_eq!(events[pos[0]].1, None);
        assert_eq!(events[pos[1]].1, Some(0));
        assert_eq!(events[pos[2]].1, Some(1));
    }

    // one simultaneous step reproduced by hand from the initial profile
    let opts = options(Rule::Soda1, 1);
    let result = run(game.clone(), &opts).unwrap();
    let init: Vec<Strategy> = (0..2).map(|i| game.init_strategy(i, InitMode::Random, opts.seed + i as u64).unwrap()).collect();
    let refs: Vec<&Strategy> = init.iter().collect();
    for i in 0..2 {
        let c = GradientEngine::new(game.clone(), i, &GradientOptions::default()).unwrap().gradient(&refs).unwrap();
        let eta = Rule::Soda1.step_size(opts.eta0, opts.beta, 1);
        assert_eq!(step_soda1(&init[i], &c, eta).unwrap(), result.strategies[i]);
    }
}

#[test]
fn zero_iterations_return_the_initial_profile() {
    let game = asymmetric_game();
    let opts = options(Rule::Soma2, 0);
    let result = run(game.clone(), &opts).unwrap();
    assert_eq!(result.iterations, 0);
    assert!(result.distances.is_empty());
    assert_eq!(result.certificate.iteration, 0);
    assert_eq!(result.progress.len(), 1);
    for i in 0..2 {
        assert_eq!(result.strategies[i], game.init_strategy(i, InitMode::Random, opts.seed + i as u64).unwrap());
    }
}

#[test]
fn symmetric_agents_share_one_learner() {
    let g = Grid::uniform(0.0, 1.0, 8).unwrap();
    let prior = DiscretePrior::independent(vec![g.clone(); 3], vec![vec![1.0 / 8.0; 8]; 3]).unwrap();
    let mech = Mechanism::new(MechanismKind::Fpsb, 3, 1.0).unwrap();
    let game = Arc::new(Game::new(mech, prior, vec![vec![g]; 3]).unwrap());
    let shared = run(game.clone(), &options(Rule::Soda2, 20)).unwrap();
    assert_eq!(shared.roles, vec![0, 0, 0]);
    assert!(shared.strategies.windows(2).all(|w| w[0] == w[1]));
    let mut separate = options(Rule::Soda2, 20);
    separate.symmetric = false;
    let separate = run(game, &separate).unwrap();
    assert_eq!(separate.roles, vec![0, 1, 2]);
}

#[test]
fn invalid_step_parameters_are_rejected() {
    let s = strategy(3, 3, vec![1.0 / 3.0; 3], 0);
    assert!(LearnerState::new(Rule::Soda1, 0.0, 0.5, s.clone()).is_err());
    assert!(LearnerState::new(Rule::Soda1, 1.0, 0.0, s.clone()).is_err());
    assert!(LearnerState::new(Rule::Soda1, 1.0, 1.5, s).is_err());
}
