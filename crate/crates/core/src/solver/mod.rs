//! Value computation for signal games on belief space.
//!
//! Three solver families share the one-stage backup [`shapley_backup`]:
//!
//! * [`closure`] — exact fixed points on the quantized set of beliefs
//!   reachable from the initial belief (the certified reference solver);
//! * [`grid`] — interpolated fixed points on per-class simplex grids,
//!   reaching the small `lambda * h` regime where reachable-set solvers
//!   blow up;
//! * [`reduced`] — the one-dimensional recursions equivalent to the
//!   state-blind half-games, plus their coupling into the six-state game.
//!
//! All solvers are deterministic single-threaded procedures; independent
//! solves may run concurrently.

pub mod banded;
pub mod closure;
pub mod coupled;
pub mod grid;
pub mod perfect;
pub mod reduced;
pub mod simulate;

use thiserror::Error;

use crate::belief::{self, Belief, BeliefBranch, BeliefError};
use crate::game_model::{AnyGame, GameError, PartitionSignalGame};
use crate::matrix_game::{self, MatrixGame, MatrixGameError, MatrixSolution};
use crate::stage_duration::{
    euler_transform, DiscountStep, ScheduleError, StageSchedule,
};

pub use closure::{solve_tree, ClosureValueFn, TreeSolution};
pub use coupled::{solve_coupled_g1, CoupledSolution};
pub use grid::{solve_grid, GridMode, GridValueFn};
pub use perfect::{perfect_value, solve_perfect};
pub use reduced::{
    reduced_backup, solve_reduced, solve_reduced_dynamics, Reduced1dValueFn, ReducedDynamics,
};
pub use simulate::{simulate, GreedyStrategy, SimResult, StrategyPair};

/// Inner tolerance for matrix games solved inside backups.
pub const BACKUP_VAL_TOL: f64 = 1e-11;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Matrix(#[from] MatrixGameError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("discount step lambda*h = {0} is not in (0, 1)")]
    NonContraction(f64),
    #[error("belief component has {0} states; grids support at most {1}")]
    DimensionTooHigh(usize, usize),
    #[error("solver budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("identity-plus-kernel has a negative entry; kernel too fast for unit step")]
    KernelTooFast,
}

/// Discount factor plus the stage-duration schedule it applies to.
#[derive(Debug, Clone)]
pub struct DiscountSpec {
    pub lambda: f64,
    pub schedule: StageSchedule,
}

impl DiscountSpec {
    pub fn new(lambda: f64, schedule: StageSchedule) -> Result<DiscountSpec, SolveError> {
        if lambda <= 0.0 {
            return Err(SolveError::NonContraction(lambda));
        }
        let worst = lambda * schedule.max_duration();
        if worst >= 1.0 {
            return Err(SolveError::NonContraction(worst));
        }
        Ok(DiscountSpec { lambda, schedule })
    }

    pub fn uniform(lambda: f64, h: f64) -> Result<DiscountSpec, SolveError> {
        Ok(DiscountSpec { lambda, schedule: StageSchedule::uniform(h)? }).and_then(|s| {
            if s.lambda <= 0.0 || s.lambda * h >= 1.0 {
                Err(SolveError::NonContraction(s.lambda * h))
            } else {
                Ok(s)
            }
        })
    }
}

/// Anything that evaluates a candidate value function on beliefs.
pub trait ValueEval {
    fn eval(&self, p: &Belief) -> f64;
}

/// Adapter for using plain closures as value functions in backups.
pub struct FnValue<F: Fn(&Belief) -> f64>(pub F);

impl<F: Fn(&Belief) -> f64> ValueEval for FnValue<F> {
    fn eval(&self, p: &Belief) -> f64 {
        (self.0)(p)
    }
}

/// One stage's game, ready for backups: transitions in branch form, payoffs
/// carrying their stage scale, and the discount weight pair.
#[derive(Debug, Clone)]
pub struct StageGame {
    game: AnyGame,
    step: DiscountStep,
    bound: f64,
}

impl StageGame {
    /// Euler preparation at stage duration `h`: kernel-form partition games
    /// get payoffs `h g` and transitions `I + h q`; general games are used
    /// as stored (their payoffs already carry the stage scale).
    pub fn prepare(game: &AnyGame, lambda: f64, h: f64) -> Result<StageGame, SolveError> {
        if lambda <= 0.0 || lambda * h >= 1.0 {
            return Err(SolveError::NonContraction(lambda * h));
        }
        let step = DiscountStep::stage_duration(lambda, h);
        let prepared = match game {
            AnyGame::Partition(g) => {
                let kernel_form = match &g.dynamics {
                    crate::game_model::Dynamics::Kernel(_) => g.clone(),
                    crate::game_model::Dynamics::Transition(rows) => PartitionSignalGame {
                        dynamics: crate::game_model::Dynamics::Kernel(
                            crate::game_model::transition_to_kernel(rows),
                        ),
                        ..g.clone()
                    },
                };
                AnyGame::Partition(euler_transform(&kernel_form, h)?)
            }
            AnyGame::General(g) => AnyGame::General(g.clone()),
        };
        Ok(StageGame::with_step(prepared, step))
    }

    /// Wrap an already-transformed game (for instance the exponential
    /// discretization) with its discount weights.
    pub fn with_step(game: AnyGame, step: DiscountStep) -> StageGame {
        let stage_bound = match &game {
            AnyGame::Partition(g) => g.payoff_bound(),
            AnyGame::General(g) => g.payoff_bound(),
        };
        // Normalized values satisfy |v| <= immediate * max|g| / (1 - cont).
        let bound = if step.continuation < 1.0 {
            step.immediate * stage_bound / (1.0 - step.continuation)
        } else {
            f64::INFINITY
        };
        StageGame { game, step, bound }
    }

    pub fn step(&self) -> DiscountStep {
        self.step
    }

    /// Bound on every normalized value of this stage game.
    pub fn value_bound(&self) -> f64 {
        self.bound
    }

    pub fn game(&self) -> &AnyGame {
        &self.game
    }

    pub fn n_states(&self) -> usize {
        match &self.game {
            AnyGame::Partition(g) => g.n_states(),
            AnyGame::General(g) => g.n_states(),
        }
    }

    /// Matrix shape of the one-shot game at this belief.
    pub fn action_dims(&self, p: &Belief) -> Result<(usize, usize), BeliefError> {
        match &self.game {
            AnyGame::Partition(g) => {
                let class = p.support_class(g)?;
                Ok(g.n_actions(class))
            }
            AnyGame::General(g) => Ok((g.actions1.len(), g.actions2.len())),
        }
    }

    pub fn stage_payoff(&self, p: &Belief, i: usize, j: usize) -> Result<f64, BeliefError> {
        match &self.game {
            AnyGame::Partition(g) => belief::expected_payoff_partition(g, p, i, j),
            AnyGame::General(g) => belief::expected_payoff_general(g, p, i, j),
        }
    }

    pub fn branches(&self, p: &Belief, i: usize, j: usize) -> Result<Vec<BeliefBranch>, BeliefError> {
        match &self.game {
            AnyGame::Partition(g) => belief::branch_partition(g, p, i, j),
            AnyGame::General(g) => belief::branch_general(g, p, i, j),
        }
    }

    /// All matrix entries of the backup at `p` under value function `v`.
    pub fn backup_matrix<V: ValueEval + ?Sized>(
        &self,
        p: &Belief,
        v: &V,
    ) -> Result<MatrixGame, SolveError> {
        let (ni, nj) = self.action_dims(p)?;
        let mut entries = Vec::with_capacity(ni * nj);
        for i in 0..ni {
            for j in 0..nj {
                let imm = self.stage_payoff(p, i, j)?;
                let mut cont = 0.0;
                for b in self.branches(p, i, j)? {
                    cont += b.prob * v.eval(&b.posterior);
                }
                entries.push(self.step.immediate * imm + self.step.continuation * cont);
            }
        }
        Ok(MatrixGame::new(ni, nj, entries))
    }
}

/// One Shapley backup at belief `p`: the value of the one-shot matrix game
/// `Val[ immediate * g(i,j,p) + continuation * E v(posterior) ]`, together
/// with the optimal mixed actions realizing it.
pub fn stage_backup<V: ValueEval + ?Sized>(
    stage: &StageGame,
    p: &Belief,
    v: &V,
) -> Result<(f64, MatrixSolution), SolveError> {
    let m = stage.backup_matrix(p, v)?;
    let sol = matrix_game::solve(&m, BACKUP_VAL_TOL)?;
    Ok((sol.value, sol))
}

/// Convenience wrapper preparing the game at `(lambda, h)` first.
pub fn shapley_backup<V: ValueEval + ?Sized>(
    game: &AnyGame,
    p: &Belief,
    v: &V,
    lambda: f64,
    h: f64,
) -> Result<(f64, MatrixSolution), SolveError> {
    let stage = StageGame::prepare(game, lambda, h)?;
    stage_backup(&stage, p, v)
}

/// First-stage optimal mixed actions at `p` under a converged value
/// function: the inner matrix solution of the backup.
pub fn extract_strategy<V: ValueEval + ?Sized>(
    game: &AnyGame,
    v: &V,
    p: &Belief,
    lambda: f64,
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let (_, sol) = shapley_backup(game, p, v, lambda, h)?;
    Ok((sol.x, sol.y))
}
