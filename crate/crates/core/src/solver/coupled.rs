//! Coupling the two half-games back into the six-state game.
//!
//! Writing `a` for the value at the pure `++` belief and `b` for the value
//! at the pure `--` belief, the exit of the plus half-game is worth `b`
//! (quitting drops into the minus side) and vice versa. The two-scalar map
//!
//! `a <- V+(k = b)(1),  b <- V-(k = a)(1)`
//!
//! is a contraction because the half-game values are affine in their exit
//! payoff with slopes `1 - V+(0)` and `1 + V-(0)`, both strictly inside
//! (0, 1). The fixed point is cross-checked against the closed 2x2 solution
//! assembled from the affine relations at exit value zero.

use crate::closed_form;
use crate::solver::reduced::{solve_reduced, Reduced1dValueFn};
use crate::solver::SolveError;
use crate::Side;

#[derive(Debug, Clone)]
pub struct CoupledSolution {
    /// Value at the pure `++` belief.
    pub v_plus_pure: f64,
    /// Value at the pure `--` belief.
    pub v_minus_pure: f64,
    pub minus_fn: Reduced1dValueFn,
    pub plus_fn: Reduced1dValueFn,
    pub outer_iterations: usize,
    /// Closed-route solution from the exit-zero values and the affine
    /// relations, for consistency monitoring.
    pub crosscheck: (f64, f64),
    /// Combined error bound of the returned scalars.
    pub error_bound: f64,
}

/// Solve the coupled pair of reduced half-games at `(lambda, h)`.
pub fn solve_coupled_g1(
    lambda: f64,
    h: f64,
    resolution: usize,
    tol: f64,
) -> Result<CoupledSolution, SolveError> {
    assert!(tol > 0.0);
    let mut a = 0.0_f64;
    let mut b = 0.0_f64;
    let mut minus_fn = None;
    let mut plus_fn = None;
    let mut outer_iterations = 0;
    let max_outer = 500;
    for iter in 1..=max_outer {
        outer_iterations = iter;
        let plus = solve_reduced(Side::Plus, lambda, h, b, resolution, tol)?;
        let a_new = plus.eval(1.0);
        let minus = solve_reduced(Side::Minus, lambda, h, a_new, resolution, tol)?;
        let b_new = minus.eval(1.0);
        let delta = (a_new - a).abs() + (b_new - b).abs();
        a = a_new;
        b = b_new;
        plus_fn = Some(plus);
        minus_fn = Some(minus);
        if delta <= tol {
            break;
        }
        if iter == max_outer {
            return Err(SolveError::NoConvergence(max_outer));
        }
    }
    let minus_fn = minus_fn.expect("at least one outer iteration ran");
    let plus_fn = plus_fn.expect("at least one outer iteration ran");

    // Closed 2x2 route: exit-zero solves plus the affine relations.
    let vm0 = solve_reduced(Side::Minus, lambda, h, 0.0, resolution, tol)?.eval(1.0);
    let vp0 = solve_reduced(Side::Plus, lambda, h, 0.0, resolution, tol)?.eval(1.0);
    let crosscheck = closed_form::combine_qds42(vm0, vp0)
        .map_err(|_| SolveError::NoConvergence(outer_iterations))?;

    let error_bound = minus_fn.error_bound + plus_fn.error_bound + tol;
    Ok(CoupledSolution {
        v_plus_pure: a,
        v_minus_pure: b,
        minus_fn,
        plus_fn,
        outer_iterations,
        crosscheck,
        error_bound,
    })
}
