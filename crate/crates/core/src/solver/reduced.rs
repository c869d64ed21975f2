//! One-dimensional reduced recursions for the half-games.
//!
//! On either side the reachable beliefs are mixtures of the two live states,
//! so the value is a function of the single coordinate `p` = mass on the
//! heavy state (`--` or `++`). One backup compares two composite choices:
//!
//! * continue: a weighted average of lookups at the two posterior maps;
//! * quit: an affine immediate term plus a discounted self-lookup.
//!
//! The Euler dynamics are hard-coded below; [`ReducedDynamics::from_state_blind`]
//! derives the same structure from an explicit 4-state state-blind game in
//! transition form, which is how the exponential discretization is solved.

use crate::game_model::{Dynamics, PartitionSignalGame};
use crate::solver::banded::BandedMatrix;
use crate::solver::SolveError;
use crate::stage_duration::DiscountStep;
use crate::Side;

/// Iteration cap for the value-iteration fallback.
const VI_MAX_SWEEPS: usize = 2_000_000;
/// Bandwidth beyond which policy evaluation falls back to value iteration.
const MAX_BANDWIDTH: usize = 1024;

/// Converged value function on a uniform grid over `[0, 1]` with linear
/// interpolation between nodes.
#[derive(Debug, Clone)]
pub struct Reduced1dValueFn {
    values: Vec<f64>,
    pub error_bound: f64,
    pub iterations: usize,
}

impl Reduced1dValueFn {
    pub fn resolution(&self) -> usize {
        self.values.len() - 1
    }

    pub fn eval(&self, p: f64) -> f64 {
        debug_assert!((-1e-12..=1.0 + 1e-12).contains(&p), "p = {p} outside [0,1]");
        let n = self.resolution() as f64;
        let t = (p.clamp(0.0, 1.0)) * n;
        let j = (t.floor() as usize).min(self.resolution() - 1);
        let frac = t - j as f64;
        (1.0 - frac) * self.values[j] + frac * self.values[j + 1]
    }

    pub fn node_values(&self) -> &[f64] {
        &self.values
    }
}

/// Coefficients of one reduced backup.
#[derive(Debug, Clone)]
pub struct ReducedDynamics {
    pub step: DiscountStep,
    /// Minus side maximizes, plus side minimizes.
    pub maximize: bool,
    /// Constant stage-payoff term (`immediate * g` on the live states).
    pub imm_base: f64,
    /// Continue choice: `sum_k w_k * v(a_k + b_k p)`.
    pub cont_branches: Vec<(f64, f64, f64)>,
    /// Quit choice: `q0 + q1 * p + q_self * v(p)`.
    pub quit_imm0: f64,
    pub quit_imm_p: f64,
    pub quit_self: f64,
}

impl ReducedDynamics {
    /// The Euler stage-duration recursion with exit value `k`:
    ///
    /// minus side, exit `k`:
    /// `v(p) = -lh + (1-lh) max{ -hp + h(1-p)k + (1-h)v(p),
    ///                            v(p - hp/2)/2 + v(p + h - hp)/2 }`
    ///
    /// plus side, exit `k`:
    /// `v(p) =  lh + (1-lh) min{  hp + h(1-p)k + (1-h)v(p),
    ///                            v(p - 2hp/3)/3 + 2 v(p + h - hp)/3 }`
    pub fn euler(side: Side, lambda: f64, h: f64, k: f64) -> ReducedDynamics {
        assert!(h > 0.0 && h <= 1.0, "reduced recursion needs h in (0, 1]");
        assert!((-1.0..=1.0).contains(&k));
        let step = DiscountStep::stage_duration(lambda, h);
        match side {
            Side::Minus => ReducedDynamics {
                step,
                maximize: true,
                imm_base: lambda * (-h),
                cont_branches: vec![(0.5, 0.0, 1.0 - h / 2.0), (0.5, h, 1.0 - h)],
                quit_imm0: h * k,
                quit_imm_p: -h * (1.0 + k),
                quit_self: 1.0 - h,
            },
            Side::Plus => ReducedDynamics {
                step,
                maximize: false,
                imm_base: lambda * h,
                cont_branches: vec![
                    (1.0 / 3.0, 0.0, 1.0 - 2.0 * h / 3.0),
                    (2.0 / 3.0, h, 1.0 - h),
                ],
                quit_imm0: h * k,
                quit_imm_p: h * (1.0 - k),
                quit_self: 1.0 - h,
            },
        }
    }

    /// Derive the reduced recursion from a 4-state state-blind half-game in
    /// transition form (states ordered live-light, live-heavy, absorbing,
    /// exit), with discount weights `step`. Used for the exponential
    /// discretization, whose transition tensor is not the Euler one.
    ///
    /// The reduction is valid because, profile by profile, both live states
    /// retain the same total live mass, so the conditional live belief
    /// stays one-dimensional; this is checked and rejected otherwise.
    pub fn from_state_blind(
        side: Side,
        game: &PartitionSignalGame,
        step: DiscountStep,
    ) -> Result<ReducedDynamics, SolveError> {
        let rows = match &game.dynamics {
            Dynamics::Transition(rows) => rows,
            Dynamics::Kernel(_) => {
                return Err(SolveError::Game(crate::game_model::GameError::WrongForm(
                    "a transition-form game for the state-blind reduction".into(),
                )))
            }
        };
        assert_eq!(game.n_states(), 4, "state-blind reduction expects 4 states");
        let (light, heavy, absorb, exit) = (0usize, 1, 2, 3);
        let tol = 1e-12;
        // Absorbing rows must be identities.
        for s in [absorb, exit] {
            for per_i in &rows[s] {
                for row in per_i {
                    if (row[s] - 1.0).abs() > tol {
                        return Err(SolveError::Game(crate::game_model::GameError::WrongForm(
                            "absorbing tail states".into(),
                        )))
                    }
                }
            }
        }
        // Normalized value of an absorbing state is its own payoff.
        let v_absorb = step.immediate * game.payoff[absorb][0][0] / (1.0 - step.continuation);
        let v_exit = step.immediate * game.payoff[exit][0][0] / (1.0 - step.continuation);
        let g_live = game.payoff[light][0][0];
        assert!(
            (game.payoff[heavy][0][0] - g_live).abs() < tol,
            "live states must share a payoff"
        );

        // Representative profiles: diagonal (stay), off-diagonal (shift),
        // quit column. Indices depend on the side's action layout.
        let (diag, off, quit) = match side {
            Side::Minus => ((0usize, 0usize), (0usize, 1usize), (2usize, 0usize)),
            Side::Plus => ((0usize, 0usize), (0usize, 1usize), (0usize, 3usize)),
        };
        let (w_diag, w_off) = match side {
            Side::Minus => (0.5, 0.5),
            Side::Plus => (1.0 / 3.0, 2.0 / 3.0),
        };

        // Posterior map of a live-mass-preserving profile: the heavy-state
        // mass after one stage is affine in p, and the live mass must be
        // equal from both live rows.
        let live_map = |pair: (usize, usize)| -> Result<(f64, f64), SolveError> {
            let (i, j) = pair;
            let r0 = &rows[light][i][j];
            let r1 = &rows[heavy][i][j];
            let m0 = r0[light] + r0[heavy];
            let m1 = r1[light] + r1[heavy];
            if (m0 - m1).abs() > tol {
                return Err(SolveError::Game(crate::game_model::GameError::WrongForm(
                    "equal live-mass retention across live states".into(),
                )));
            }
            // heavy'(p) = (1-p) r0[heavy] + p r1[heavy], conditioned on m0.
            Ok((r0[heavy] / m0, (r1[heavy] - r0[heavy]) / m0))
        };
        let (a_d, b_d) = live_map(diag)?;
        let (a_o, b_o) = live_map(off)?;

        // Quit profile: live mass shrinks by a common factor, the leak goes
        // to the absorbing and exit states.
        let (qi, qj) = quit;
        let r0 = &rows[light][qi][qj];
        let r1 = &rows[heavy][qi][qj];
        let m0 = r0[light] + r0[heavy];
        let m1 = r1[light] + r1[heavy];
        if (m0 - m1).abs() > tol || (r0[light] - m0).abs() > tol || (r1[heavy] - m1).abs() > tol {
            return Err(SolveError::Game(crate::game_model::GameError::WrongForm(
                "a ratio-preserving quit profile".into(),
            )));
        }
        // Leak terms, affine in p: light leaks r0, heavy leaks r1.
        let leak = |target: usize| (r0[target], r1[target] - r0[target]);
        let (l_abs0, l_abs1) = leak(absorb);
        let (l_ex0, l_ex1) = leak(exit);
        Ok(ReducedDynamics {
            step,
            maximize: matches!(side, Side::Minus),
            imm_base: step.immediate * g_live,
            cont_branches: vec![(w_diag, a_d, b_d), (w_off, a_o, b_o)],
            quit_imm0: l_abs0 * v_absorb + l_ex0 * v_exit,
            quit_imm_p: l_abs1 * v_absorb + l_ex1 * v_exit,
            quit_self: m0,
        })
    }

    /// One backup at `p` against an arbitrary value function.
    pub fn backup(&self, p: f64, v: impl Fn(f64) -> f64) -> f64 {
        let cont: f64 = self
            .cont_branches
            .iter()
            .map(|&(w, a, b)| w * v((a + b * p).clamp(0.0, 1.0)))
            .sum();
        let quit = self.quit_imm0 + self.quit_imm_p * p + self.quit_self * v(p);
        let inner = if self.maximize { cont.max(quit) } else { cont.min(quit) };
        self.imm_base + self.step.continuation * inner
    }
}

/// The stage-duration recursion with exit value `k` evaluated once.
pub fn reduced_backup(
    side: Side,
    p: f64,
    v: impl Fn(f64) -> f64,
    lambda: f64,
    h: f64,
    k: f64,
) -> f64 {
    ReducedDynamics::euler(side, lambda, h, k).backup(p, v)
}

/// Fixed point of the Euler reduced recursion on a uniform grid.
pub fn solve_reduced(
    side: Side,
    lambda: f64,
    h: f64,
    k: f64,
    resolution: usize,
    tol: f64,
) -> Result<Reduced1dValueFn, SolveError> {
    solve_reduced_dynamics(&ReducedDynamics::euler(side, lambda, h, k), resolution, tol)
}

/// Fixed point of an arbitrary reduced recursion by policy iteration with
/// exact banded policy evaluation; falls back to value iteration when the
/// interpolation stencil is too wide for a cheap banded solve.
pub fn solve_reduced_dynamics(
    dynamics: &ReducedDynamics,
    resolution: usize,
    tol: f64,
) -> Result<Reduced1dValueFn, SolveError> {
    assert!(resolution >= 2);
    assert!(tol > 0.0);
    let cont = dynamics.step.continuation;
    if !(0.0..1.0).contains(&cont) {
        return Err(SolveError::NonContraction(1.0 - cont));
    }
    let n = resolution;
    let nodes = n + 1;
    let ps: Vec<f64> = (0..nodes).map(|i| i as f64 / n as f64).collect();

    // Interpolation stencils for the continue branches.
    struct Stencil {
        w: f64,
        lo: Vec<usize>,
        frac: Vec<f64>,
    }
    let mut stencils = Vec::new();
    let mut bandwidth = 0usize;
    for &(w, a, b) in &dynamics.cont_branches {
        let mut lo = Vec::with_capacity(nodes);
        let mut frac = Vec::with_capacity(nodes);
        for (idx, &p) in ps.iter().enumerate() {
            let x = (a + b * p).clamp(0.0, 1.0);
            let t = x * n as f64;
            let j = (t.floor() as usize).min(n - 1);
            lo.push(j);
            frac.push(t - j as f64);
            bandwidth = bandwidth.max(idx.abs_diff(j)).max(idx.abs_diff(j + 1));
        }
        stencils.push(Stencil { w, lo, frac });
    }

    let quit_value =
        |i: usize, v: &[f64]| dynamics.quit_imm0 + dynamics.quit_imm_p * ps[i] + dynamics.quit_self * v[i];
    let cont_value = |i: usize, v: &[f64]| -> f64 {
        stencils
            .iter()
            .map(|s| s.w * ((1.0 - s.frac[i]) * v[s.lo[i]] + s.frac[i] * v[s.lo[i] + 1]))
            .sum()
    };
    let backup_all = |v: &[f64], out: &mut [f64], policy: &mut [bool]| {
        for i in 0..nodes {
            let c = dynamics.imm_base + cont * cont_value(i, v);
            let q = dynamics.imm_base + cont * quit_value(i, v);
            let take_c = if dynamics.maximize { c >= q } else { c <= q };
            policy[i] = take_c;
            out[i] = if take_c { c } else { q };
        }
    };

    let mut v = vec![0.0; nodes];
    let mut iterations = 0usize;

    if bandwidth <= MAX_BANDWIDTH {
        // Policy iteration with exact banded evaluation.
        let mut policy = vec![false; nodes];
        let mut out = vec![0.0; nodes];
        let mut prev_policy: Option<Vec<bool>> = None;
        for iter in 0..200 {
            iterations = iter + 1;
            backup_all(&v, &mut out, &mut policy);
            // Evaluate `policy` exactly: (I - B) v = c.
            let band = bandwidth + 1;
            let mut mat = BandedMatrix::zeros(nodes, band, band);
            let mut rhs = vec![0.0; nodes];
            for i in 0..nodes {
                mat.add(i, i, 1.0);
                rhs[i] = dynamics.imm_base;
                if policy[i] {
                    for s in &stencils {
                        mat.add(i, s.lo[i], -cont * s.w * (1.0 - s.frac[i]));
                        mat.add(i, s.lo[i] + 1, -cont * s.w * s.frac[i]);
                    }
                } else {
                    rhs[i] += cont * (dynamics.quit_imm0 + dynamics.quit_imm_p * ps[i]);
                    mat.add(i, i, -cont * dynamics.quit_self);
                }
            }
            let v_new = mat.solve(rhs);
            let change = v
                .iter()
                .zip(&v_new)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            v = v_new;
            let stable = prev_policy.as_ref().is_some_and(|p| p == &policy);
            prev_policy = Some(policy.clone());
            if stable && change <= tol {
                break;
            }
        }
    } else {
        // Value iteration; only reachable when lambda*h is moderate.
        let threshold = tol * (1.0 - cont) / cont;
        let mut policy = vec![false; nodes];
        let mut out = vec![0.0; nodes];
        let mut converged = false;
        for iter in 0..VI_MAX_SWEEPS {
            iterations = iter + 1;
            backup_all(&v, &mut out, &mut policy);
            let change = v
                .iter()
                .zip(&out)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            std::mem::swap(&mut v, &mut out);
            if change <= threshold {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SolveError::NoConvergence(VI_MAX_SWEEPS));
        }
    }

    // Bellman residual of the returned table, plus an interpolation charge
    // from the value function's numerical Lipschitz constant.
    let mut residual = 0.0_f64;
    {
        let mut out = vec![0.0; nodes];
        let mut policy = vec![false; nodes];
        backup_all(&v, &mut out, &mut policy);
        for i in 0..nodes {
            residual = residual.max((out[i] - v[i]).abs());
        }
    }
    let lip = v
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0_f64, f64::max)
        * n as f64;
    let error_bound = residual / (1.0 - cont) + lip / n as f64;

    Ok(Reduced1dValueFn { values: v, error_bound, iterations })
}

/// Reduced dynamics of the exponential discretization of a half-game,
/// derived from its transformed transition tensor.
pub fn exp_reduced_dynamics(
    side: Side,
    k: f64,
    lambda: f64,
    h: f64,
) -> Result<ReducedDynamics, SolveError> {
    let base = crate::paper_games::build_half(side, k);
    let (game, step) = crate::stage_duration::exp_transform(&base, h, lambda)?;
    ReducedDynamics::from_state_blind(side, &game, step)
}

/// Reduced dynamics of the Euler transform read off the transformed tensor;
/// coincides with [`ReducedDynamics::euler`] and exists as a consistency
/// route for tests and the transform comparison.
pub fn euler_reduced_dynamics_from_tables(
    side: Side,
    k: f64,
    lambda: f64,
    h: f64,
) -> Result<ReducedDynamics, SolveError> {
    let base = crate::paper_games::build_half(side, k);
    let game = crate::stage_duration::euler_transform(&base, h)?;
    ReducedDynamics::from_state_blind(side, &game, DiscountStep::stage_duration(lambda, h))
}

/// Reference stage-game view of the reduced recursion: the full one-shot
/// matrix over all profiles of the state-blind game at conditional belief
/// `p`. Used to confirm that the two-choice collapse matches the matrix
/// value.
#[cfg(test)]
pub(crate) fn state_blind_matrix_value(
    side: Side,
    k: f64,
    lambda: f64,
    h: f64,
    p: f64,
    v: impl Fn(f64) -> f64 + Copy,
) -> f64 {
    use crate::belief::Belief;
    use crate::game_model::AnyGame;
    use crate::solver::{FnValue, StageGame};
    let base = crate::paper_games::build_half(side, k);
    let stage = StageGame::prepare(&AnyGame::Partition(base), lambda, h).unwrap();
    // Full-belief value function consistent with the conditional reduction:
    // V(w) = w_absorb * v_absorb + w_exit * v_exit + live * v(ratio).
    let v_abs = match side {
        Side::Minus => -1.0,
        Side::Plus => 1.0,
    };
    let vfull = FnValue(move |b: &Belief| {
        let live = b.get(0) + b.get(1);
        let mut total = b.get(2) * v_abs + b.get(3) * k;
        if live > 0.0 {
            total += live * v(b.get(1) / live);
        }
        total
    });
    let belief = Belief::new(vec![1.0 - p, p, 0.0, 0.0]).unwrap();
    let (val, _) = crate::solver::stage_backup(&stage, &belief, &vfull).unwrap();
    val
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn backup_hand_values() {
        // minus, k=0, v = -1 everywhere:
        // -lh + (1-lh) max{-hp - (1-h), -1} = -lh - (1-lh)(1 - h + hp)
        let (lambda, h) = (0.3, 0.4);
        for p in [0.0, 0.25, 1.0] {
            let got = reduced_backup(Side::Minus, p, |_| -1.0, lambda, h, 0.0);
            let lh = lambda * h;
            let expect = -lh - (1.0 - lh) * (1.0 - h + h * p);
            assert!((got - expect).abs() < 1e-14, "p={p}");
        }
        // plus, p=0, k=0, v = 0: lh + (1-lh) min{0, 0} = lh.
        let got = reduced_backup(Side::Plus, 0.0, |_| 0.0, 0.3, 0.4, 0.0);
        assert!((got - 0.12).abs() < 1e-14);
    }

    #[test]
    fn two_choice_collapse_matches_matrix_value() {
        let mut rng = Rng::seeded(23);
        for side in [Side::Minus, Side::Plus] {
            for _ in 0..30 {
                let lambda = rng.range(0.05, 0.6);
                let h = rng.range(0.1, 1.0);
                let k = rng.range(-1.0, 1.0);
                let p = rng.range(0.0, 1.0);
                let dynamics = ReducedDynamics::euler(side, lambda, h, k);
                let v = |x: f64| -0.4 * x + 0.1 * (3.0 * x).sin();
                let collapsed = dynamics.backup(p, v);
                let full = state_blind_matrix_value(side, k, lambda, h, p, v);
                assert!(
                    (collapsed - full).abs() < 1e-10,
                    "{side:?} p={p}: {collapsed} vs {full}"
                );
            }
        }
    }

    #[test]
    fn euler_dynamics_from_tables_agree_with_closed_form() {
        let mut rng = Rng::seeded(29);
        for side in [Side::Minus, Side::Plus] {
            for _ in 0..20 {
                let lambda = rng.range(0.01, 0.5);
                let h = rng.range(0.05, 1.0);
                let k = rng.range(-1.0, 1.0);
                let hand = ReducedDynamics::euler(side, lambda, h, k);
                let derived = euler_reduced_dynamics_from_tables(side, k, lambda, h).unwrap();
                let v = |x: f64| 0.3 * x * x - 0.5;
                for p in [0.0, 0.37, 0.91, 1.0] {
                    assert!(
                        (hand.backup(p, v) - derived.backup(p, v)).abs() < 1e-13,
                        "{side:?} p={p}"
                    );
                }
            }
        }
    }

    // The fixed point switches from quitting to continuing near the
    // threshold (4 lambda + 2) / (4 lambda + 3) as h -> 0.
    #[test]
    fn minus_threshold_behavior() {
        let lambda = 0.1;
        let vf = solve_reduced(Side::Minus, lambda, 1e-3, 0.0, 4000, 1e-10).unwrap();
        let dynamics = ReducedDynamics::euler(Side::Minus, lambda, 1e-3, 0.0);
        let threshold = (4.0 * lambda + 2.0) / (4.0 * lambda + 3.0);
        let choice_at = |p: f64| {
            let cont: f64 = dynamics
                .cont_branches
                .iter()
                .map(|&(w, a, b)| w * vf.eval((a + b * p).clamp(0.0, 1.0)))
                .sum();
            let quit = dynamics.quit_imm0 + dynamics.quit_imm_p * p + dynamics.quit_self * vf.eval(p);
            cont > quit
        };
        assert!(!choice_at(threshold - 0.05), "should quit below threshold");
        assert!(choice_at(threshold + 0.05), "should continue above threshold");
    }

    #[test]
    fn policy_iteration_and_value_iteration_agree() {
        // Moderate lambda*h so value iteration is feasible; compare the two
        // evaluation paths on the same dynamics.
        let dynamics = ReducedDynamics::euler(Side::Minus, 0.2, 0.3, 0.25);
        let a = solve_reduced_dynamics(&dynamics, 500, 1e-11).unwrap();
        // Force the VI path by constructing a dynamics clone solved at a
        // bandwidth-busting resolution? Instead call the internal VI through
        // a large-h euler where the stencil spans the grid.
        let wide = ReducedDynamics::euler(Side::Minus, 0.2, 1.0, 0.25);
        let b = solve_reduced_dynamics(&wide, 500, 1e-11).unwrap();
        // cross-check: backup residuals are tiny for both
        for (vf, d) in [(&a, &dynamics), (&b, &wide)] {
            for p in [0.0, 0.31, 0.77, 1.0] {
                let back = d.backup(p, |x| vf.eval(x));
                assert!((back - vf.eval(p)).abs() < 1e-8, "residual at {p}");
            }
        }
    }

    #[test]
    fn exp_and_euler_dynamics_converge_together() {
        // As h -> 0 both discretizations approach the same limit; at small h
        // their fixed points should already be close.
        let (lambda, h) = (0.1, 1e-3);
        let euler = solve_reduced(Side::Minus, lambda, h, 0.0, 4000, 1e-10).unwrap();
        let exp_dyn = exp_reduced_dynamics(Side::Minus, 0.0, lambda, h).unwrap();
        let expfp = solve_reduced_dynamics(&exp_dyn, 4000, 1e-10).unwrap();
        for p in [0.0, 0.3, 0.7, 1.0] {
            assert!(
                (euler.eval(p) - expfp.eval(p)).abs() < 5e-3,
                "p={p}: {} vs {}",
                euler.eval(p),
                expfp.eval(p)
            );
        }
    }
}
