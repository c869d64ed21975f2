//! Closed-form limit quantities of the half-games and the six-state game:
//! thresholds, the explicit discounted limits `w±`, affine extensions in
//! the exit payoff, the 2x2 combination, the piecewise-affine limit value,
//! and classical residual checkers for the limit PDEs.

use thiserror::Error;

use crate::belief::Belief;
use crate::game_model::Dynamics;
use crate::matrix_game::{self, MatrixGame};
use crate::Side;

#[derive(Debug, Error)]
pub enum ClosedFormError {
    #[error("argument {0} outside domain {1}")]
    DomainError(f64, &'static str),
    #[error("singular combination system: denominator {0}")]
    SingularSystem(f64),
    #[error("gradient unavailable: {0}")]
    GradientUnavailable(String),
}

/// Switching threshold of the half-game policy: quit below, continue above.
pub fn threshold(side: Side, lambda: f64) -> f64 {
    match side {
        Side::Minus => (4.0 * lambda + 2.0) / (4.0 * lambda + 3.0),
        Side::Plus => (9.0 * lambda + 6.0) / (9.0 * lambda + 8.0),
    }
}

/// Vanishing-stage-duration value of the exit-zero half-game at discount
/// `lambda`, starting from heavy-state mass `p`.
pub fn w(side: Side, lambda: f64, p: f64) -> Result<f64, ClosedFormError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ClosedFormError::DomainError(p, "[0, 1]"));
    }
    if lambda <= 0.0 {
        return Err(ClosedFormError::DomainError(lambda, "(0, inf)"));
    }
    let t = threshold(side, lambda);
    Ok(match side {
        Side::Minus => {
            if p < t {
                -(p + lambda) / (1.0 + lambda)
            } else {
                let e = 4.0 * lambda / 3.0;
                -1.0 + (4.0 * lambda).powf(e)
                    / ((1.0 + lambda) * (3.0 + 4.0 * lambda).powf(1.0 + e))
                    * (3.0 * p - 2.0).powf(-e)
            }
        }
        Side::Plus => {
            if p < t {
                (p + lambda) / (1.0 + lambda)
            } else {
                let e = 9.0 * lambda / 8.0;
                1.0 - 2.0 * (18.0 * lambda).powf(e)
                    / ((1.0 + lambda) * (8.0 + 9.0 * lambda).powf(1.0 + e))
                    * (8.0 * p - 6.0).powf(-e)
            }
        }
    })
}

/// Analytic derivative of [`w`] in `p`. At the threshold both one-sided
/// derivatives coincide (`w` is C1); the common value is returned.
pub fn w_derivative(side: Side, lambda: f64, p: f64) -> Result<f64, ClosedFormError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ClosedFormError::DomainError(p, "[0, 1]"));
    }
    if lambda <= 0.0 {
        return Err(ClosedFormError::DomainError(lambda, "(0, inf)"));
    }
    let t = threshold(side, lambda);
    Ok(match side {
        Side::Minus => {
            if p <= t {
                -1.0 / (1.0 + lambda)
            } else {
                let e = 4.0 * lambda / 3.0;
                let c = (4.0 * lambda).powf(e)
                    / ((1.0 + lambda) * (3.0 + 4.0 * lambda).powf(1.0 + e));
                -3.0 * e * c * (3.0 * p - 2.0).powf(-e - 1.0)
            }
        }
        Side::Plus => {
            if p <= t {
                1.0 / (1.0 + lambda)
            } else {
                let e = 9.0 * lambda / 8.0;
                let c = 2.0 * (18.0 * lambda).powf(e)
                    / ((1.0 + lambda) * (8.0 + 9.0 * lambda).powf(1.0 + e));
                8.0 * e * c * (8.0 * p - 6.0).powf(-e - 1.0)
            }
        }
    })
}

/// Half-game value at exit payoff `k` from the exit-zero value: values are
/// affine in `k` with slope `1 + v0` (minus) or `1 - v0` (plus).
pub fn affine_extend(side: Side, v0: f64, k: f64) -> f64 {
    match side {
        Side::Minus => (k + 1.0) * v0 + k,
        Side::Plus => (1.0 - k) * v0 + k,
    }
}

/// Solve the two affine coupling equations for the pure-belief values of
/// the six-state game from the exit-zero half-game values at `p = 1`:
/// returns `(v(++ pure), v(-- pure))`.
pub fn combine_qds42(vm0: f64, vp0: f64) -> Result<(f64, f64), ClosedFormError> {
    let den = vm0 - vp0 - vm0 * vp0;
    if den.abs() < 1e-14 {
        return Err(ClosedFormError::SingularSystem(den));
    }
    let v_plus = -(vm0 + vp0 - vm0 * vp0) / den;
    let v_minus = -(vm0 + vp0 + vm0 * vp0) / den;
    Ok((v_plus, v_minus))
}

/// The piecewise-affine limit of the six-state game's value with vanishing
/// stage duration, as a function of the initial distribution
/// `(p1..p6) = (+, ++, +*, -, --, -*)`.
///
/// Zero side mass routes to the first case by convention; the ratio tests
/// use `>=` at equality. The formula is continuous across both thresholds.
pub fn limit_value(p6: &Belief) -> f64 {
    assert_eq!(p6.len(), 6, "limit value takes a six-state belief");
    let w = p6.weights();
    let (p1, p2, p3, p4, p5, p6v) = (w[0], w[1], w[2], w[3], w[4], w[5]);
    let plus_high = p1 + p2 <= 0.0 || p2 / (p1 + p2) >= 0.75;
    let minus_high = p4 + p5 <= 0.0 || p5 / (p4 + p5) >= 2.0 / 3.0;
    // Each side contributes its mass times the conditional limit:
    // plus side (16/11) r+ - 5/11 below ratio 3/4, 7/11 above;
    // minus side -(18/11) r- + 7/11 below ratio 2/3, -5/11 above.
    let plus_part = if plus_high {
        7.0 / 11.0 * (p1 + p2)
    } else {
        -5.0 / 11.0 * p1 + p2
    };
    let minus_part = if minus_high {
        -5.0 / 11.0 * (p4 + p5)
    } else {
        7.0 / 11.0 * p4 - p5
    };
    plus_part + minus_part + p3 - p6v
}

/// A value candidate on the reduced two-coordinate chart together with its
/// gradient: `v(p1, p2)` where `p1`, `p2` are the live-state masses of a
/// half-game (the absorbing coordinates enter the PDE with fixed slopes).
pub trait ValueWithGradient {
    fn value(&self, p1: f64, p2: f64) -> f64;
    fn gradient(&self, p1: f64, p2: f64) -> Result<(f64, f64), ClosedFormError>;
}

/// The candidate built from the closed forms: `v = (p1+p2) w(p2/(p1+p2))`,
/// with analytic gradients.
pub struct WBar {
    pub side: Side,
    pub lambda: f64,
}

impl ValueWithGradient for WBar {
    fn value(&self, p1: f64, p2: f64) -> f64 {
        let live = p1 + p2;
        if live <= 0.0 {
            return 0.0;
        }
        live * w(self.side, self.lambda, p2 / live).expect("ratio lies in [0,1]")
    }

    fn gradient(&self, p1: f64, p2: f64) -> Result<(f64, f64), ClosedFormError> {
        let live = p1 + p2;
        if live <= 0.0 {
            return Err(ClosedFormError::GradientUnavailable(
                "gradient undefined at zero live mass".into(),
            ));
        }
        let r = p2 / live;
        let wv = w(self.side, self.lambda, r)?;
        let wd = w_derivative(self.side, self.lambda, r)?;
        Ok((wv - r * wd, wv + (1.0 - r) * wd))
    }
}

/// Finite-difference wrapper: central differences of the wrapped value.
pub struct FiniteDifference<V: ValueWithGradient> {
    pub inner: V,
    pub step: f64,
}

impl<V: ValueWithGradient> ValueWithGradient for FiniteDifference<V> {
    fn value(&self, p1: f64, p2: f64) -> f64 {
        self.inner.value(p1, p2)
    }

    fn gradient(&self, p1: f64, p2: f64) -> Result<(f64, f64), ClosedFormError> {
        let s = self.step;
        let d1 = (self.inner.value(p1 + s, p2) - self.inner.value(p1 - s, p2)) / (2.0 * s);
        let d2 = (self.inner.value(p1, p2 + s) - self.inner.value(p1, p2 - s)) / (2.0 * s);
        Ok((d1, d2))
    }
}

/// Residual of the limit PDE at `(p1, p2)`:
/// `lambda v - lambda g (p1 + p2 + p3) - Val[<p * q(i,j), grad v>]`
/// where `g` is the live-state payoff (`-1` minus side, `+1` plus side),
/// evaluated with `p3 = 0` (the residual is independent of `p3`: its
/// contributions to the payoff term and to `lambda v` cancel).
///
/// The one-shot matrix is assembled from the half-game's kernel via the
/// belief drift, with the absorbing coordinates' slopes fixed at `-/+1`
/// and `0`; the optimal action is found by the matrix-game solver rather
/// than by case analysis.
pub fn pde_residual(
    side: Side,
    lambda: f64,
    p1: f64,
    p2: f64,
    vfun: &dyn ValueWithGradient,
) -> Result<f64, ClosedFormError> {
    if p1 < 0.0 || p2 < 0.0 || p1 + p2 > 1.0 {
        return Err(ClosedFormError::DomainError(p1 + p2, "simplex"));
    }
    let (d1, d2) = vfun.gradient(p1, p2)?;
    let value = vfun.value(p1, p2);
    let m = pde_drift_matrix(side, p1, p2, d1, d2);
    let val = matrix_game::value_only(&m)
        .map_err(|e| ClosedFormError::GradientUnavailable(e.to_string()))?;
    let live_payoff = match side {
        Side::Minus => -1.0,
        Side::Plus => 1.0,
    };
    Ok(lambda * value - lambda * live_payoff * (p1 + p2) - val)
}

/// The drift matrix `<p * q(i,j), grad v>` of the exit-zero half-game at
/// live belief `(p1, p2, 0, 0)`, with the absorbing slope baked in
/// (`-1` for the minus side's absorbing state, `+1` for the plus side's,
/// `0` for the exit state).
pub fn pde_drift_matrix(side: Side, p1: f64, p2: f64, d1: f64, d2: f64) -> MatrixGame {
    let game = crate::paper_games::build_half(side, 0.0);
    let rows = match &game.dynamics {
        Dynamics::Kernel(rows) => rows,
        Dynamics::Transition(_) => unreachable!("half-games are built in kernel form"),
    };
    let grad = match side {
        Side::Minus => [d1, d2, -1.0, 0.0],
        Side::Plus => [d1, d2, 1.0, 0.0],
    };
    let (ni, nj) = game.n_actions(0);
    let mut entries = Vec::with_capacity(ni * nj);
    let p = [p1, p2, 0.0, 0.0];
    for i in 0..ni {
        for j in 0..nj {
            // (p * q)(x) = sum_s p(s) q(i,j)(s, x)
            let mut acc = 0.0;
            for s in 0..4 {
                if p[s] == 0.0 {
                    continue;
                }
                for x in 0..4 {
                    acc += p[s] * rows[s][i][j][x] * grad[x];
                }
            }
            entries.push(acc);
        }
    }
    MatrixGame::new(ni, nj, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn thresholds() {
        close(threshold(Side::Minus, 0.0), 2.0 / 3.0, 1e-15);
        close(threshold(Side::Plus, 0.0), 0.75, 1e-15);
        close(threshold(Side::Minus, 1.0), 6.0 / 7.0, 1e-15);
    }

    #[test]
    fn w_values() {
        close(w(Side::Minus, 1.0, 0.0).unwrap(), -0.5, 1e-15);
        // limits from the explicit constants as lambda -> 0 at p = 1
        close(w(Side::Minus, 1e-9, 1.0).unwrap(), -2.0 / 3.0, 1e-6);
        close(w(Side::Plus, 1e-9, 1.0).unwrap(), 0.75, 1e-6);
        assert!(w(Side::Minus, 0.1, 1.5).is_err());
    }

    #[test]
    fn w_continuous_and_c1_at_threshold() {
        for side in [Side::Minus, Side::Plus] {
            for lambda in [0.01, 0.1, 1.0] {
                let t = threshold(side, lambda);
                let below = w(side, lambda, t - 1e-13).unwrap();
                let above = w(side, lambda, t + 1e-13).unwrap();
                close(below, above, 1e-12);
                let d_below = w_derivative(side, lambda, t - 1e-9).unwrap();
                let d_above = w_derivative(side, lambda, t + 1e-9).unwrap();
                close(d_below, d_above, 1e-6);
                let expect = match side {
                    Side::Minus => -1.0 / (1.0 + lambda),
                    Side::Plus => 1.0 / (1.0 + lambda),
                };
                close(w_derivative(side, lambda, t).unwrap(), expect, 1e-10);
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let (side, lambda, p) = (Side::Minus, 0.1, 0.9);
        let s = 1e-6;
        let fd = (w(side, lambda, p + s).unwrap() - w(side, lambda, p - s).unwrap()) / (2.0 * s);
        close(w_derivative(side, lambda, p).unwrap(), fd, 1e-7);
    }

    #[test]
    fn w_monotone() {
        for (side, sign) in [(Side::Minus, -1.0), (Side::Plus, 1.0)] {
            for lambda in [0.01, 0.1, 1.0] {
                let mut prev = w(side, lambda, 0.0).unwrap();
                let mut p = 0.001;
                while p <= 1.0 {
                    let cur = w(side, lambda, p).unwrap();
                    assert!(
                        sign * (cur - prev) >= -1e-12,
                        "{side:?} lambda={lambda} p={p}"
                    );
                    prev = cur;
                    p += 0.001;
                }
            }
        }
    }

    #[test]
    fn affine_extension_evaluations() {
        close(affine_extend(Side::Minus, -0.3, 0.0), -0.3, 1e-15);
        close(affine_extend(Side::Minus, -2.0 / 3.0, 7.0 / 11.0), -5.0 / 11.0, 1e-15);
        close(affine_extend(Side::Plus, 0.75, -5.0 / 11.0), 7.0 / 11.0, 1e-15);
    }

    #[test]
    fn combination() {
        let (vp, vm) = combine_qds42(-2.0 / 3.0, 0.75).unwrap();
        close(vp, 7.0 / 11.0, 1e-15);
        close(vm, -5.0 / 11.0, 1e-15);
        let (vp, vm) = combine_qds42(-1.0, 1.0).unwrap();
        close(vp, 1.0, 1e-15);
        close(vm, -1.0, 1e-15);
        assert!(matches!(
            combine_qds42(0.0, 0.0),
            Err(ClosedFormError::SingularSystem(_))
        ));
    }

    /// The combination output satisfies both original coupling equations.
    #[test]
    fn combination_satisfies_fixed_point_equations() {
        let (vm0, vp0) = (-0.61, 0.69);
        let (a, b) = combine_qds42(vm0, vp0).unwrap();
        close(a, affine_extend(Side::Plus, vp0, b), 1e-12);
        close(b, affine_extend(Side::Minus, vm0, a), 1e-12);
    }

    #[test]
    fn limit_value_cases() {
        let delta = |s: usize| Belief::point(6, s);
        close(limit_value(&delta(1)), 7.0 / 11.0, 1e-15); // ++
        close(limit_value(&delta(4)), -5.0 / 11.0, 1e-15); // --
        close(limit_value(&delta(2)), 1.0, 1e-15); // +*
        close(limit_value(&delta(0)), -5.0 / 11.0, 1e-15); // pure +
    }

    #[test]
    fn limit_value_continuous_across_ratio_thresholds() {
        // plus-side boundary p2/(p1+p2) = 3/4 with total plus mass 0.6
        let eps = 1e-9;
        let mk = |r: f64| {
            Belief::new(vec![0.6 * (1.0 - r), 0.6 * r, 0.0, 0.0, 0.4, 0.0]).unwrap()
        };
        close(limit_value(&mk(0.75 - eps)), limit_value(&mk(0.75 + eps)), 1e-8);
        // minus-side boundary p5/(p4+p5) = 2/3 with total minus mass 0.5
        let mk2 = |r: f64| {
            Belief::new(vec![0.0, 0.5, 0.0, 0.5 * (1.0 - r), 0.5 * r, 0.0]).unwrap()
        };
        close(
            limit_value(&mk2(2.0 / 3.0 - eps)),
            limit_value(&mk2(2.0 / 3.0 + eps)),
            1e-8,
        );
    }

    /// The drift matrix built from the half-game kernel coincides with the
    /// explicit table: diagonal pairs carry `p2 s (d1 - d2)` with the
    /// side's leak rate `s`, off-diagonal pairs `-p1 (d1 - d2)`, and the
    /// quit column `-p1 d1 - p2 d2 -/+ p2`.
    #[test]
    fn drift_matrix_matches_paper_tables() {
        let (p1, p2, d1, d2) = (0.23, 0.41, -0.8, 0.35);
        let m = pde_drift_matrix(Side::Minus, p1, p2, d1, d2);
        let diff = d1 - d2;
        close(m.get(0, 0), 0.5 * p2 * diff, 1e-14); // (T, L)
        close(m.get(0, 1), -p1 * diff, 1e-14); // (T, R)
        close(m.get(1, 0), -p1 * diff, 1e-14); // (B, L)
        close(m.get(1, 1), 0.5 * p2 * diff, 1e-14); // (B, R)
        close(m.get(2, 0), -p1 * d1 - p2 * d2 - p2, 1e-14); // (Q, .)
        close(m.get(2, 1), -p1 * d1 - p2 * d2 - p2, 1e-14);

        let mp = pde_drift_matrix(Side::Plus, p1, p2, d1, d2);
        close(mp.get(0, 0), 2.0 / 3.0 * p2 * diff, 1e-14); // (T, L)
        close(mp.get(0, 1), -p1 * diff, 1e-14); // (T, M)
        close(mp.get(0, 3), -p1 * d1 - p2 * d2 + p2, 1e-14); // (T, Q)
    }

    #[test]
    fn analytic_residual_vanishes() {
        for side in [Side::Minus, Side::Plus] {
            for lambda in [0.05, 0.2] {
                let wb = WBar { side, lambda };
                let mut worst = 0.0_f64;
                for a in 1..20 {
                    for b in 1..20 {
                        let p1 = a as f64 / 21.0;
                        let p2 = b as f64 / 21.0;
                        if p1 + p2 >= 1.0 {
                            continue;
                        }
                        let r = pde_residual(side, lambda, p1, p2, &wb).unwrap();
                        worst = worst.max(r.abs());
                    }
                }
                assert!(worst <= 1e-9, "{side:?} lambda={lambda}: residual {worst}");
            }
        }
    }

    // With zero gradients and p3 = 0 the matrix reduces to the quit row
    // against zeros; evaluate the residual by hand.
    #[test]
    fn residual_with_constant_candidate() {
        struct Constant(f64);
        impl ValueWithGradient for Constant {
            fn value(&self, _: f64, _: f64) -> f64 {
                self.0
            }
            fn gradient(&self, _: f64, _: f64) -> Result<(f64, f64), ClosedFormError> {
                Ok((0.0, 0.0))
            }
        }
        let (lambda, p1, p2, c) = (0.2, 0.3, 0.4, 0.55);
        let got = pde_residual(Side::Minus, lambda, p1, p2, &Constant(c)).unwrap();
        // matrix rows: T,B rows all zero; quit row -p2 < 0, so Val = 0.
        let expect = lambda * c + lambda * (p1 + p2) - 0.0;
        close(got, expect, 1e-14);
        // plus side: payoff +1 flips the sign of the mass term; under zero
        // gradients the quit column costs +p2, so the minimizer avoids it
        // and Val = 0.
        let got_p = pde_residual(Side::Plus, lambda, p1, p2, &Constant(c)).unwrap();
        close(got_p, lambda * c - lambda * (p1 + p2), 1e-14);
    }

    #[test]
    fn finite_difference_residual_close_to_analytic() {
        let (side, lambda) = (Side::Minus, 0.2);
        let wb = WBar { side, lambda };
        let fd = FiniteDifference { inner: WBar { side, lambda }, step: 1e-6 };
        for (p1, p2) in [(0.1, 0.5), (0.05, 0.9), (0.5, 0.2)] {
            let a = pde_residual(side, lambda, p1, p2, &wb).unwrap();
            let b = pde_residual(side, lambda, p1, p2, &fd).unwrap();
            close(a, b, 1e-4);
        }
    }
}
