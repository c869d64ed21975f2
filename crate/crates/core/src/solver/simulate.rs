//! Monte-Carlo validation of computed values.
//!
//! Plays the game forward under explicit behavior strategies over public
//! beliefs, accumulating the truncated normalized discounted payoff.
//! Deterministic for a fixed seed: each path draws from its own counter-
//! indexed substream, so the estimate does not depend on scheduling.

use std::collections::HashMap;

use crate::belief::Belief;
use crate::game_model::AnyGame;
use crate::rng::Rng;
use crate::solver::{stage_backup, SolveError, StageGame, ValueEval};

/// Behavior strategy pair on public beliefs: mixed actions for both
/// players, in the shape of the one-shot game at that belief.
pub trait StrategyPair {
    fn act(&mut self, p: &Belief) -> Result<(Vec<f64>, Vec<f64>), SolveError>;
}

/// Greedy (one-step optimal) strategies extracted from a converged value
/// function, memoized on quantized beliefs.
pub struct GreedyStrategy<'a, V: ValueEval + ?Sized> {
    stage: &'a StageGame,
    value_fn: &'a V,
    cache: HashMap<Vec<u64>, (Vec<f64>, Vec<f64>)>,
}

impl<'a, V: ValueEval + ?Sized> GreedyStrategy<'a, V> {
    pub fn new(stage: &'a StageGame, value_fn: &'a V) -> Self {
        GreedyStrategy { stage, value_fn, cache: HashMap::new() }
    }
}

impl<V: ValueEval + ?Sized> StrategyPair for GreedyStrategy<'_, V> {
    fn act(&mut self, p: &Belief) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
        let key = p.quantize(crate::belief::HASH_QUANTUM);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.clone());
        }
        let (_, sol) = stage_backup(self.stage, p, self.value_fn)?;
        self.cache.insert(key, (sol.x.clone(), sol.y.clone()));
        Ok((sol.x, sol.y))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimResult {
    pub mean: f64,
    /// 95% confidence half-width under the normal approximation.
    pub half_width_95: f64,
    pub paths: usize,
    pub horizon: usize,
    pub seed: u64,
}

/// Estimate the truncated normalized payoff under the given strategies.
///
/// The horizon must satisfy `continuation^horizon <= 1e-4` so the truncated
/// tail is negligible at the reported precision.
pub fn simulate(
    game: &AnyGame,
    strategies: &mut dyn StrategyPair,
    p0: &Belief,
    lambda: f64,
    h: f64,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<SimResult, SolveError> {
    let stage = StageGame::prepare(game, lambda, h)?;
    let step = stage.step();
    assert!(
        step.continuation.powi(horizon as i32) <= 1e-4,
        "horizon too short: truncated weight {} > 1e-4",
        step.continuation.powi(horizon as i32)
    );

    let mut total = 0.0;
    let mut total_sq = 0.0;
    for path in 0..n_paths {
        let mut rng = Rng::substream(seed, path as u64);
        let x = run_path(&stage, strategies, p0, horizon, &mut rng)?;
        total += x;
        total_sq += x * x;
    }
    let n = n_paths as f64;
    let mean = total / n;
    let var = (total_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    let half_width_95 = 1.96 * (var / n).sqrt();
    Ok(SimResult { mean, half_width_95, paths: n_paths, horizon, seed })
}

fn run_path(
    stage: &StageGame,
    strategies: &mut dyn StrategyPair,
    p0: &Belief,
    horizon: usize,
    rng: &mut Rng,
) -> Result<f64, SolveError> {
    let mut state = rng.pick_weighted(p0.weights());
    // The public prior conditions on the initial signal for partition games.
    let mut belief = match stage.game() {
        AnyGame::Partition(g) => {
            let class = g.signal_of(state);
            let mass: f64 = g.class_states(class).iter().map(|&s| p0.get(s)).sum();
            let mut w = vec![0.0; g.n_states()];
            for s in g.class_states(class) {
                w[s] = p0.get(s) / mass;
            }
            Belief::new(w)?
        }
        AnyGame::General(_) => p0.clone(),
    };

    let mut payoff = 0.0;
    let mut weight = stage.step().immediate;
    for _ in 0..horizon {
        let (x, y) = strategies.act(&belief)?;
        let i = rng.pick_weighted(&x);
        let j = rng.pick_weighted(&y);
        payoff += weight * stage_payoff_at_state(stage, &belief, state, i, j);
        // Next state and public signal.
        let (next_state, signal) = match stage.game() {
            AnyGame::Partition(g) => {
                let class = belief.support_class(g)?;
                debug_assert_eq!(class, g.signal_of(state));
                let row = &g.dynamics.rows()[state][i][j];
                let sp = rng.pick_weighted(row);
                (sp, g.signal_of(sp))
            }
            AnyGame::General(g) => {
                let entries = g.entries(i, j, state);
                let probs: Vec<f64> = entries.iter().map(|e| e.prob).collect();
                let pick = &entries[rng.pick_weighted(&probs)];
                (pick.state, pick.signal)
            }
        };
        // Public belief update: the branch matching the observed signal.
        let branches = stage.branches(&belief, i, j)?;
        belief = branches
            .into_iter()
            .find(|b| b.signal == signal)
            .expect("observed signal has positive probability")
            .posterior;
        state = next_state;
        weight *= stage.step().continuation;
    }
    Ok(payoff)
}

fn stage_payoff_at_state(
    stage: &StageGame,
    belief: &Belief,
    state: usize,
    i: usize,
    j: usize,
) -> f64 {
    match stage.game() {
        AnyGame::Partition(g) => {
            let _ = belief;
            g.payoff[state][i][j]
        }
        AnyGame::General(g) => g.payoff_at(i, j, state),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paper_games;
    use crate::solver::FnValue;
    use crate::Side;

    struct FixedStrategy;
    impl StrategyPair for FixedStrategy {
        fn act(&mut self, p: &Belief) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
            let _ = p;
            Ok((vec![1.0, 0.0], vec![1.0]))
        }
    }

    #[test]
    fn constant_payoff_truncated_mean_is_exact() {
        // The minus-side tilde game pays -h in every live state; playing C
        // forever keeps the state live, so the truncated normalized payoff
        // is -(1 - cont^T) deterministically.
        let h = 0.5;
        let game = AnyGame::General(paper_games::build_tilde_half(Side::Minus, h));
        let lambda = 0.4;
        let horizon = 60;
        let sim = simulate(
            &game,
            &mut FixedStrategy,
            &Belief::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap(),
            lambda,
            h,
            horizon,
            200,
            7,
        )
        .unwrap();
        let cont = 1.0 - lambda * h;
        let expect = -(1.0 - cont.powi(horizon as i32));
        assert!((sim.mean - expect).abs() < 1e-12);
        assert!(sim.half_width_95 < 1e-12);
    }

    #[test]
    fn fixed_seed_reproduces_mean_bitwise() {
        let game = AnyGame::General(paper_games::build_g1_tilde());
        let lambda = 0.3;
        let spec = crate::solver::DiscountSpec::uniform(lambda, 1.0).unwrap();
        let p0 = Belief::point(6, 4);
        let sol = crate::solver::solve_tree(&game, &p0, &spec, 1e-8).unwrap();
        let stage = StageGame::prepare(&game, lambda, 1.0).unwrap();
        let run = |seed| {
            let mut strat = GreedyStrategy::new(&stage, &sol.value_fn);
            simulate(&game, &mut strat, &p0, lambda, 1.0, 30, 500, seed).unwrap()
        };
        let a = run(42);
        let b = run(42);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        let c = run(43);
        assert_ne!(a.mean.to_bits(), c.mean.to_bits());
    }

    #[test]
    fn greedy_strategies_approach_computed_value() {
        let game = AnyGame::General(paper_games::build_g1_tilde());
        let lambda = 0.3;
        let spec = crate::solver::DiscountSpec::uniform(lambda, 1.0).unwrap();
        let p0 = Belief::point(6, 4);
        let sol = crate::solver::solve_tree(&game, &p0, &spec, 1e-9).unwrap();
        let stage = StageGame::prepare(&game, lambda, 1.0).unwrap();
        let horizon = ((1e-5_f64).ln() / (1.0 - lambda).ln()).ceil() as usize;
        let mut strat = GreedyStrategy::new(&stage, &sol.value_fn);
        let sim =
            simulate(&game, &mut strat, &p0, lambda, 1.0, horizon, 20_000, 11).unwrap();
        assert!(
            (sim.mean - sol.value).abs() <= sim.half_width_95 + 1e-4 + sol.error_bound,
            "sim {} vs value {} (hw {})",
            sim.mean,
            sol.value,
            sim.half_width_95
        );
    }

    #[test]
    fn horizon_guard_panics_when_too_short() {
        let game = AnyGame::General(paper_games::build_g1_tilde());
        let v = FnValue(|_: &Belief| 0.0);
        let stage = StageGame::prepare(&game, 0.1, 1.0).unwrap();
        let mut strat = GreedyStrategy::new(&stage, &v);
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            simulate(&game, &mut strat, &Belief::point(6, 4), 0.1, 1.0, 5, 10, 1)
        }));
        assert!(result.is_err());
    }
}
