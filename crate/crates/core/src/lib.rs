//! Solver library for finite zero-sum stochastic games with public signals
//! and varying stage duration.
//!
//! The library computes lambda-discounted values of signal games three ways
//! (an exact reachable-belief solver, interpolated grid fixed points, and
//! one-dimensional reduced recursions), provides the stage-duration
//! transforms relating unit-duration games to their vanishing-duration
//! limits, and carries the closed-form limit values and PDE residual
//! checkers used to verify them. The headline phenomenon: the six-state
//! two-signal example has no discounted limit value at stage duration 1,
//! while with vanishing stage duration the values converge to an explicit
//! piecewise-affine function of the initial belief.

pub mod belief;
pub mod closed_form;
pub mod game_model;
pub mod matrix_game;
pub mod paper_games;
pub mod rng;
pub mod solver;
pub mod stage_duration;
pub mod verify;

/// Which half of the six-state game a half-game restricts to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Minus => "minus",
            Side::Plus => "plus",
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
