//! Perfect-observation specializations: plain state-space value iteration.

use crate::game_model::{AnyGame, Dynamics, PartitionSignalGame};
use crate::matrix_game::{self, MatrixGame};
use crate::solver::SolveError;

const MAX_SWEEPS: usize = 5_000_000;
const FIXED_POINT_TOL: f64 = 1e-10;

/// Discounted value with stage duration `h`: the fixed point of
/// `v(s) = Val[ lambda h g + (1 - lambda h) (I + h q) v ]` over states.
pub fn perfect_value(
    game: &PartitionSignalGame,
    lambda: f64,
    h: f64,
) -> Result<Vec<f64>, SolveError> {
    if !game.is_perfect_observation() {
        return Err(SolveError::Game(crate::game_model::GameError::WrongForm(
            "a perfect-observation game".into(),
        )));
    }
    let stage = crate::solver::StageGame::prepare(&AnyGame::Partition(game.clone()), lambda, h)?;
    let (prepared, step) = match stage.game() {
        AnyGame::Partition(g) => (g.clone(), stage.step()),
        _ => unreachable!(),
    };
    let rows = prepared.dynamics.rows();
    let n = prepared.n_states();
    let mut v = vec![0.0; n];
    let threshold = FIXED_POINT_TOL * (1.0 - step.continuation) / step.continuation;
    for sweep in 1..=MAX_SWEEPS {
        let mut change = 0.0_f64;
        let mut next = vec![0.0; n];
        for s in 0..n {
            let (ni, nj) = prepared.n_actions(prepared.signal_of(s));
            let mut entries = Vec::with_capacity(ni * nj);
            for i in 0..ni {
                for j in 0..nj {
                    let mut acc = step.immediate * prepared.payoff[s][i][j];
                    for (sp, &p) in rows[s][i][j].iter().enumerate() {
                        if p != 0.0 {
                            acc += step.continuation * p * v[sp];
                        }
                    }
                    entries.push(acc);
                }
            }
            next[s] = matrix_game::value_only(&MatrixGame::new(ni, nj, entries))?;
            change = change.max((next[s] - v[s]).abs());
        }
        v = next;
        if change <= threshold {
            return Ok(v);
        }
        let _ = sweep;
    }
    Err(SolveError::NoConvergence(MAX_SWEEPS))
}

/// The vanishing-stage-duration limit for perfect-observation games: the
/// unique solution of `lambda v = Val[lambda g + <q(s,.), v>]`, computed as
/// the fixed point `v(s) = Val[(lambda g + <(I+q)(s,.), v>) / (1+lambda)]`.
///
/// Requires `I + q` to be row-stochastic (unit Euler step admissible).
pub fn solve_perfect(game: &PartitionSignalGame, lambda: f64) -> Result<Vec<f64>, SolveError> {
    if !game.is_perfect_observation() {
        return Err(SolveError::Game(crate::game_model::GameError::WrongForm(
            "a perfect-observation game".into(),
        )));
    }
    let q_rows = match &game.dynamics {
        Dynamics::Kernel(rows) => rows,
        Dynamics::Transition(_) => {
            return Err(SolveError::Game(crate::game_model::GameError::WrongForm(
                "a kernel-form game".into(),
            )))
        }
    };
    let p_rows = crate::game_model::kernel_to_transition(q_rows, 1.0)
        .map_err(|_| SolveError::KernelTooFast)?;
    let n = game.n_states();
    let mut v = vec![0.0; n];
    // Contraction modulus 1/(1+lambda).
    let cont = 1.0 / (1.0 + lambda);
    let threshold = FIXED_POINT_TOL * (1.0 - cont) / cont;
    let mut solved = false;
    for _ in 1..=MAX_SWEEPS {
        let mut change = 0.0_f64;
        let mut next = vec![0.0; n];
        for s in 0..n {
            let (ni, nj) = game.n_actions(game.signal_of(s));
            let mut entries = Vec::with_capacity(ni * nj);
            for i in 0..ni {
                for j in 0..nj {
                    let mut acc = lambda * game.payoff[s][i][j];
                    for (sp, &p) in p_rows[s][i][j].iter().enumerate() {
                        if p != 0.0 {
                            acc += p * v[sp];
                        }
                    }
                    entries.push(acc / (1.0 + lambda));
                }
            }
            next[s] = matrix_game::value_only(&MatrixGame::new(ni, nj, entries))?;
            change = change.max((next[s] - v[s]).abs());
        }
        v = next;
        if change <= threshold {
            solved = true;
            break;
        }
    }
    if !solved {
        return Err(SolveError::NoConvergence(MAX_SWEEPS));
    }
    // Residual of the rate-form equation the limit value satisfies.
    let residual = perfect_rate_residual(game, lambda, &v)?;
    debug_assert!(residual <= 1e-9, "rate-form residual {residual}");
    Ok(v)
}

/// `max_s | lambda v(s) - Val[lambda g + <q(s,.), v>] |`.
pub fn perfect_rate_residual(
    game: &PartitionSignalGame,
    lambda: f64,
    v: &[f64],
) -> Result<f64, SolveError> {
    let q_rows = match &game.dynamics {
        Dynamics::Kernel(rows) => rows,
        Dynamics::Transition(_) => {
            return Err(SolveError::Game(crate::game_model::GameError::WrongForm(
                "a kernel-form game".into(),
            )))
        }
    };
    let n = game.n_states();
    let mut worst = 0.0_f64;
    for s in 0..n {
        let (ni, nj) = game.n_actions(game.signal_of(s));
        let mut entries = Vec::with_capacity(ni * nj);
        for i in 0..ni {
            for j in 0..nj {
                let mut acc = lambda * game.payoff[s][i][j];
                for (sp, &q) in q_rows[s][i][j].iter().enumerate() {
                    if q != 0.0 {
                        acc += q * v[sp];
                    }
                }
                entries.push(acc);
            }
        }
        let val = matrix_game::value_only(&MatrixGame::new(ni, nj, entries))?;
        worst = worst.max((lambda * v[s] - val).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paper_games;

    #[test]
    fn absorbing_and_zero_payoff_games() {
        let mut g = paper_games::build_perfect_test();
        // zero payoffs -> value identically zero
        for per_s in g.payoff.iter_mut() {
            for row in per_s.iter_mut() {
                row.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let v = solve_perfect(&g, 0.4).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-10));

        // the absorbing state of the fixture keeps payoff 0 at any lambda
        let g = paper_games::build_perfect_test();
        let v = solve_perfect(&g, 0.7).unwrap();
        assert!(v[1].abs() < 1e-10);
        assert!(v[0] >= 0.0 && v[0] <= 1.0);
    }

    #[test]
    fn rate_equation_residual_is_small() {
        let g = paper_games::build_perfect_test();
        for lambda in [1.0, 0.3, 0.05] {
            let v = solve_perfect(&g, lambda).unwrap();
            let r = perfect_rate_residual(&g, lambda, &v).unwrap();
            assert!(r <= 1e-9, "lambda={lambda}: residual {r}");
        }
    }

    #[test]
    fn matches_closure_solver_on_fixture() {
        // v_{h,lambda} from the generic closure solver equals the
        // state-space iteration (perfect observation: beliefs are points).
        let g = paper_games::build_perfect_test();
        let any = AnyGame::Partition(g.clone());
        let (lambda, h) = (0.5, 0.25);
        let v = perfect_value(&g, lambda, h).unwrap();
        let spec = crate::solver::DiscountSpec::uniform(lambda, h).unwrap();
        for s in 0..2 {
            let p = crate::belief::Belief::point(2, s);
            let tree = crate::solver::solve_tree(&any, &p, &spec, 1e-9).unwrap();
            assert!(
                (tree.value - v[s]).abs() < 1e-7,
                "state {s}: {} vs {}",
                tree.value,
                v[s]
            );
        }
    }

    #[test]
    fn limit_agrees_with_small_step_values() {
        let g = paper_games::build_perfect_test();
        let lambda = 0.5;
        let limit = solve_perfect(&g, lambda).unwrap();
        let fine = perfect_value(&g, lambda, 0.005).unwrap();
        for s in 0..2 {
            assert!((limit[s] - fine[s]).abs() < 5e-3, "state {s}");
        }
    }
}
