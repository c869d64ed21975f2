//! Stage-duration transforms and stage-weight bookkeeping.
//!
//! Three ways to turn a unit-duration game into one with stage duration `h`:
//!
//! * [`euler_transform`] — payoffs `h g`, transitions `I + h q`;
//! * [`signal_augmented_transform`] — keep the original transitions but fire
//!   them only with probability `h`, revealing "nothing happened" with a
//!   fresh signal otherwise;
//! * [`exp_transform`] — transitions `exp(h q)` with exponential discount
//!   weights, the discretized continuous-time game.

use thiserror::Error;

use crate::game_model::{
    kernel_to_transition, max_step_rows, Dynamics, GameError, GeneralEntry, GeneralSignalGame,
    PartitionSignalGame,
};

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("stage durations must be positive, got {0}")]
    NonPositive(f64),
}

/// Sequence of stage durations: either uniform, or a finite explicit prefix
/// followed by a uniform tail (so the total time is always infinite).
#[derive(Debug, Clone, PartialEq)]
pub enum StageSchedule {
    Uniform(f64),
    Explicit { prefix: Vec<f64>, tail: f64 },
}

impl StageSchedule {
    pub fn uniform(h: f64) -> Result<StageSchedule, ScheduleError> {
        if h <= 0.0 {
            return Err(ScheduleError::NonPositive(h));
        }
        Ok(StageSchedule::Uniform(h))
    }

    pub fn explicit(prefix: Vec<f64>, tail: f64) -> Result<StageSchedule, ScheduleError> {
        for &h in prefix.iter().chain(std::iter::once(&tail)) {
            if h <= 0.0 {
                return Err(ScheduleError::NonPositive(h));
            }
        }
        Ok(StageSchedule::Explicit { prefix, tail })
    }

    /// Duration of stage `m` (0-based).
    pub fn duration(&self, m: usize) -> f64 {
        match self {
            StageSchedule::Uniform(h) => *h,
            StageSchedule::Explicit { prefix, tail } => {
                prefix.get(m).copied().unwrap_or(*tail)
            }
        }
    }

    pub fn max_duration(&self) -> f64 {
        match self {
            StageSchedule::Uniform(h) => *h,
            StageSchedule::Explicit { prefix, tail } => {
                prefix.iter().cloned().fold(*tail, f64::max)
            }
        }
    }

    pub fn min_duration(&self) -> f64 {
        match self {
            StageSchedule::Uniform(h) => *h,
            StageSchedule::Explicit { prefix, tail } => {
                prefix.iter().cloned().fold(*tail, f64::min)
            }
        }
    }

    /// Length of the non-stationary prefix (0 for uniform schedules).
    pub fn prefix_len(&self) -> usize {
        match self {
            StageSchedule::Uniform(_) => 0,
            StageSchedule::Explicit { prefix, .. } => prefix.len(),
        }
    }

    pub fn tail(&self) -> f64 {
        match self {
            StageSchedule::Uniform(h) => *h,
            StageSchedule::Explicit { tail, .. } => *tail,
        }
    }

    /// Partition points `t_1 = 0 < t_2 < ...` up to `n` stages.
    pub fn partition_points(&self, n: usize) -> Vec<f64> {
        let mut t = vec![0.0];
        for m in 0..n {
            t.push(t[m] + self.duration(m));
        }
        t
    }
}

/// Largest admissible Euler step of the game's kernel
/// (`infinity` for the zero kernel).
pub fn max_step(game: &PartitionSignalGame) -> Result<f64, GameError> {
    match &game.dynamics {
        Dynamics::Kernel(rows) => Ok(max_step_rows(rows)),
        Dynamics::Transition(_) => {
            Err(GameError::WrongForm("a kernel-form game for max_step".into()))
        }
    }
}

/// Stage-duration `h` game: payoffs scaled by `h`, transitions `I + h q`.
/// At `h = 1` this reproduces the unit-duration game exactly.
pub fn euler_transform(
    game: &PartitionSignalGame,
    h: f64,
) -> Result<PartitionSignalGame, GameError> {
    let rows = match &game.dynamics {
        Dynamics::Kernel(rows) => rows,
        Dynamics::Transition(_) => {
            return Err(GameError::WrongForm("a kernel-form game30 for euler_transform".into()))
        }
    };
    let p = kernel_to_transition(rows, h)?;
    let payoff = game
        .payoff
        .iter()
        .map(|per_s| per_s.iter().map(|row| row.iter().map(|g| g * h).collect()).collect())
        .collect();
    Ok(PartitionSignalGame { payoff, dynamics: Dynamics::Transition(p), ..game.clone() })
}

/// Stage-duration transform for general-signal games: every original branch
/// is scaled by `h`, and with probability `1 - h` the state stays put while
/// a fresh signal reveals that nothing happened. Payoffs scale by `h`.
pub fn signal_augmented_transform(game: &GeneralSignalGame, h: f64) -> GeneralSignalGame {
    assert!(h > 0.0 && h <= 1.0, "signal-augmented transform needs 0 < h <= 1");
    let mut signals = game.signals.clone();
    let fresh = signals.len();
    signals.push("bottom".to_string());
    let (ni, nj, ns) = (game.actions1.len(), game.actions2.len(), game.n_states());
    let mut transition = vec![Vec::new(); ni * nj * ns];
    for i in 0..ni {
        for j in 0..nj {
            for s in 0..ns {
                let flat = (i * nj + j) * ns + s;
                let mut entries: Vec<GeneralEntry> = game
                    .entries(i, j, s)
                    .iter()
                    .filter(|e| e.prob * h > 0.0)
                    .map(|e| GeneralEntry { prob: e.prob * h, ..*e })
                    .collect();
                if 1.0 - h > 0.0 {
                    entries.push(GeneralEntry { state: s, signal: fresh, prob: 1.0 - h });
                }
                transition[flat] = entries;
            }
        }
    }
    GeneralSignalGame {
        signals,
        payoff: game.payoff.iter().map(|g| g * h).collect(),
        transition,
        ..game.clone()
    }
}

/// Per-stage discount weights attached to a prepared stage game: the stage
/// value is `Val[immediate * g + continuation * E v]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountStep {
    pub immediate: f64,
    pub continuation: f64,
}

impl DiscountStep {
    /// Euler stage-duration weights for a game whose payoffs already carry
    /// the `h` scale: `lambda * (h g) + (1 - lambda h) E v`.
    pub fn stage_duration(lambda: f64, h: f64) -> DiscountStep {
        DiscountStep { immediate: lambda, continuation: 1.0 - lambda * h }
    }

    /// Exponential weights for the continuous-time discretization applied to
    /// unscaled payoffs: `(1 - e^{-lambda h}) g + e^{-lambda h} E v`.
    pub fn exponential(lambda: f64, h: f64) -> DiscountStep {
        let c = (-lambda * h).exp();
        DiscountStep { immediate: 1.0 - c, continuation: c }
    }
}

/// Discretized continuous-time game: transitions `exp(h q)`, payoffs left
/// unscaled, discounting carried by the returned weight pair.
pub fn exp_transform(
    game: &PartitionSignalGame,
    h: f64,
    lambda: f64,
) -> Result<(PartitionSignalGame, DiscountStep), GameError> {
    assert!(h > 0.0);
    let rows = match &game.dynamics {
        Dynamics::Kernel(rows) => rows,
        Dynamics::Transition(_) => {
            return Err(GameError::WrongForm("a kernel-form game for exp_transform".into()))
        }
    };
    let n = game.n_states();
    let mut out = rows.clone();
    for s in 0..n {
        for i in 0..rows[s].len() {
            for j in 0..rows[s][i].len() {
                // Rows of exp(h q) for the full matrix; extract row s.
                // Kernels here are defined row-wise per state, so assemble
                // the full |Omega| x |Omega| generator for this action pair.
                let mut gen = nalgebra::DMatrix::<f64>::zeros(n, n);
                for sp in 0..n {
                    let row = row_for_state(rows, sp, i, j, game);
                    for (k, &v) in row.iter().enumerate() {
                        gen[(sp, k)] = v * h;
                    }
                }
                let e = expm(&gen);
                let row: Vec<f64> = (0..n).map(|k| e[(s, k)].max(0.0)).collect();
                out[s][i][j] = row;
            }
        }
    }
    let transformed =
        PartitionSignalGame { dynamics: Dynamics::Transition(out), ..game.clone() };
    Ok((transformed, DiscountStep::exponential(lambda, h)))
}

/// Kernel row of state `sp` under the action pair that `(i, j)` denotes in
/// `s`'s class. Actions are class-local, so map them by position, padding
/// with the last action of shorter classes.
fn row_for_state<'a>(
    rows: &'a [Vec<Vec<Vec<f64>>>],
    sp: usize,
    i: usize,
    j: usize,
    game: &PartitionSignalGame,
) -> &'a [f64] {
    let per_i = &rows[sp];
    let ii = i.min(per_i.len() - 1);
    let jj = j.min(per_i[ii].len() - 1);
    let _ = game;
    &per_i[ii][jj]
}

/// Matrix exponential by scaling-and-squaring with a truncated Taylor
/// series; ample accuracy for the tiny generators used here.
pub fn expm(a: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
    let n = a.nrows();
    let norm = a
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(s);
    let mut result = nalgebra::DMatrix::<f64>::identity(n, n);
    let mut term = nalgebra::DMatrix::<f64>::identity(n, n);
    // With ||scaled|| <= 1/2 the tail beyond k = 20 is below 1e-20.
    for k in 1..=20 {
        term = (&term * &scaled) / k as f64;
        result += &term;
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game_model::AnyGame;
    use crate::paper_games;
    use crate::Side;

    #[test]
    fn schedule_partition_points() {
        let sch = StageSchedule::explicit(vec![1.0, 0.5], 0.25).unwrap();
        assert_eq!(sch.partition_points(4), vec![0.0, 1.0, 1.5, 1.75, 2.0]);
        assert_eq!(sch.duration(0), 1.0);
        assert_eq!(sch.duration(5), 0.25);
        assert!(StageSchedule::uniform(0.0).is_err());
    }

    #[test]
    fn uniform_stage_weights_sum_to_one() {
        let (lambda, h) = (0.3_f64, 0.25_f64);
        let mut total = 0.0_f64;
        let mut carry = 1.0_f64;
        for _ in 0..10_000 {
            total += lambda * h * carry;
            carry *= 1.0 - lambda * h;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn euler_reproduces_stage_tables() {
        let g1 = paper_games::build_g1();
        let h = 0.25;
        let gh = euler_transform(&g1, h).unwrap();
        assert!(gh.validate().is_ok());
        let rows = gh.dynamics.rows();
        let s_mm = g1.state_index("--").unwrap();
        let s_m = g1.state_index("-").unwrap();
        let s_ms = g1.state_index("-*").unwrap();
        // (T, L) from --: (1 - h/2){--} + (h/2){-}
        assert_eq!(rows[s_mm][0][0][s_mm], 1.0 - h / 2.0);
        assert_eq!(rows[s_mm][0][0][s_m], h / 2.0);
        // (Q, L) from --: (1 - h){--} + h{-*}
        assert_eq!(rows[s_mm][2][0][s_mm], 1.0 - h);
        assert_eq!(rows[s_mm][2][0][s_ms], h);
        // payoffs scale by h
        assert_eq!(gh.payoff[s_mm][0][0], -h);
    }

    #[test]
    fn euler_at_one_is_identity_transform() {
        let g1 = paper_games::build_g1();
        let gh = euler_transform(&g1, 1.0).unwrap();
        assert_eq!(gh.dynamics.rows(), g1.to_transition_form().unwrap().dynamics.rows());
    }

    #[test]
    fn euler_rejects_too_large_step() {
        let g1 = paper_games::build_g1();
        assert!(matches!(
            euler_transform(&g1, 1.5),
            Err(GameError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn signal_augmentation_scales_and_loops() {
        let gg = paper_games::build_g1_tilde();
        let h = 0.2;
        let t = signal_augmented_transform(&gg, h);
        assert!(t.validate().is_ok(), "{:?}", t.validate().violations);
        assert_eq!(t.signals.len(), gg.signals.len() + 1);
        let s = gg.state_index("--").unwrap();
        let entries = t.entries(0, 0, s);
        let loop_entry = entries
            .iter()
            .find(|e| e.signal == gg.signals.len())
            .expect("fresh-signal self-loop");
        assert_eq!(loop_entry.state, s);
        assert!((loop_entry.prob - (1.0 - h)).abs() < 1e-15);
        for e in entries.iter().filter(|e| e.signal < gg.signals.len()) {
            let orig = gg
                .entries(0, 0, s)
                .iter()
                .find(|o| o.state == e.state && o.signal == e.signal)
                .unwrap();
            assert!((e.prob - orig.prob * h).abs() < 1e-15);
        }
    }

    #[test]
    fn signal_augmentation_at_h_one_only_adds_signal() {
        let gg = paper_games::build_g1_tilde();
        let t = signal_augmented_transform(&gg, 1.0);
        assert_eq!(t.transition, gg.transition);
        assert_eq!(t.signals.len(), gg.signals.len() + 1);
    }

    // Symmetric 2x2 kernel has the closed-form exponential
    // [[ (1+e^{-2h})/2, (1-e^{-2h})/2 ], ...].
    #[test]
    fn expm_symmetric_two_state() {
        for h in [0.1, 0.7, 3.0] {
            let q = nalgebra::DMatrix::from_row_slice(2, 2, &[-h, h, h, -h]);
            let e = expm(&q);
            let expect = (1.0 + (-2.0 * h).exp()) / 2.0;
            assert!((e[(0, 0)] - expect).abs() < 1e-13, "h={h}: {}", e[(0, 0)]);
            assert!((e[(0, 1)] - (1.0 - expect)).abs() < 1e-13);
        }
    }

    #[test]
    fn expm_small_step_matches_euler_to_second_order() {
        let h = 1e-4;
        let q = nalgebra::DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.5, -0.5]);
        let e = expm(&(q.clone() * h));
        let euler = nalgebra::DMatrix::identity(2, 2) + q * h;
        let diff = (e - euler).abs().max();
        assert!(diff < 1e-7, "diff {diff}");
    }

    #[test]
    fn exp_transform_rows_stochastic() {
        let g = paper_games::build_half(Side::Minus, 0.0);
        for h in [1e-2, 0.3, 1.0, 2.5] {
            let (t, step) = exp_transform(&g, h, 0.1).unwrap();
            let rep = t.validate();
            assert!(rep.is_ok(), "h={h}: {:?}", rep.violations);
            for per_s in t.dynamics.rows() {
                for per_i in per_s {
                    for row in per_i {
                        let sum: f64 = row.iter().sum();
                        assert!((sum - 1.0).abs() < 1e-10);
                        assert!(row.iter().all(|&p| p >= -1e-12));
                    }
                }
            }
            assert!((step.immediate + step.continuation - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn exp_transform_zero_kernel_is_identity() {
        let mut g = paper_games::build_half(Side::Minus, 0.0);
        if let Dynamics::Kernel(rows) = &mut g.dynamics {
            for per_s in rows.iter_mut() {
                for per_i in per_s.iter_mut() {
                    for row in per_i.iter_mut() {
                        row.iter_mut().for_each(|v| *v = 0.0);
                    }
                }
            }
        }
        let (t, _) = exp_transform(&g, 0.7, 0.1).unwrap();
        for (s, per_s) in t.dynamics.rows().iter().enumerate() {
            for per_i in per_s {
                for row in per_i {
                    for (k, &v) in row.iter().enumerate() {
                        assert_eq!(v, if k == s { 1.0 } else { 0.0 });
                    }
                }
            }
        }
    }

    #[test]
    fn transformed_games_serialize() {
        let g = paper_games::build_half(Side::Minus, 0.0);
        let (t, _) = exp_transform(&g, 0.5, 0.1).unwrap();
        let text = crate::game_model::to_json(&AnyGame::Partition(t));
        assert!(crate::game_model::from_json(&text).is_ok());
    }
}
