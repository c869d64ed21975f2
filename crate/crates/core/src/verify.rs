//! The verification battery: every release-gating check, each runnable on
//! its own or as part of `verify all`, producing a machine-readable report.
//!
//! Checks are grouped into suites:
//! `limits` (correct limit constants and closed-form convergence),
//! `pde` (classical residuals of the limit PDEs),
//! `oscillation` (non-convergence at unit stage duration),
//! `equivalence` (model equivalences and cross-solver/oracle agreement),
//! `perfect` (perfect-observation stage-duration trends).

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::belief::Belief;
use crate::closed_form::{
    self, affine_extend, combine_qds42, pde_residual, FiniteDifference, WBar,
};
use crate::game_model::AnyGame;
use crate::matrix_game::{self, MatrixGame};
use crate::paper_games;
use crate::rng::Rng;
use crate::solver::reduced::{exp_reduced_dynamics, solve_reduced_dynamics};
use crate::solver::{
    perfect_value, simulate, solve_coupled_g1, solve_grid, solve_perfect, solve_reduced,
    solve_tree, DiscountSpec, GreedyStrategy, GridMode, StageGame, ValueEval,
};
use crate::Side;

/// Frozen regression constant for the oscillation check: the measured range
/// of `v_{1,lambda}` at the pure `--` belief over the 60-point geometric
/// lambda grid in [1e-5, 1e-2] is ~0.179 with per-decade ranges ~0.08-0.11;
/// the check demands at least this much.
pub const DELTA_OSC: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Limits,
    Oscillation,
    Pde,
    Equivalence,
    Perfect,
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Suite::All),
            "limits" => Ok(Suite::Limits),
            "oscillation" => Ok(Suite::Oscillation),
            "pde" => Ok(Suite::Pde),
            "equivalence" => Ok(Suite::Equivalence),
            "perfect" => Ok(Suite::Perfect),
            other => Err(format!("unknown suite `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub measured: Vec<(String, f64)>,
    pub tolerance: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn summary_line(&self) -> String {
        let mut line = format!(
            "criterion {:2} [{}] {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name
        );
        if !self.measured.is_empty() {
            let vals: Vec<String> =
                self.measured.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
            let _ = write!(line, "  ({})", vals.join(", "));
        }
        line
    }
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct VerifyReport {
    pub criteria: Vec<CriterionResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn run_suite(suite: Suite) -> VerifyReport {
    let mut report = VerifyReport::default();
    let wants = |s: Suite| suite == Suite::All || suite == s;
    if wants(Suite::Limits) {
        report.criteria.push(c1_limit_constants());
        report.criteria.push(c2_closed_form_convergence());
        report.criteria.push(c3_combination_identities());
    }
    if wants(Suite::Pde) {
        report.criteria.push(c4_pde_residuals());
    }
    if wants(Suite::Oscillation) {
        report.criteria.push(c5_oscillation());
    }
    if wants(Suite::Equivalence) {
        report.criteria.push(c6_model_equivalence());
        report.criteria.push(c8_transform_consistency());
        report.criteria.push(c9_monte_carlo());
        report.criteria.push(c10_oracle_equivalence());
    }
    if wants(Suite::Perfect) {
        report.criteria.push(c7_perfect_trends());
    }
    report.criteria.sort_by_key(|c| c.id);
    report
}

fn result(
    id: usize,
    name: &str,
    tolerance: &str,
    started: Instant,
    passed: bool,
    measured: Vec<(String, f64)>,
) -> CriterionResult {
    CriterionResult {
        id,
        name: name.to_string(),
        passed,
        measured,
        tolerance: tolerance.to_string(),
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn failed(
    id: usize,
    name: &str,
    started: Instant,
    err: impl std::fmt::Display,
) -> CriterionResult {
    CriterionResult {
        id,
        name: name.to_string(),
        passed: false,
        measured: Vec::new(),
        tolerance: format!("errored: {err}"),
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// 1. The coupled solve at lambda = h = 1e-3 reproduces the limit constants
///    7/11 and -5/11 within 0.02.
fn c1_limit_constants() -> CriterionResult {
    let t0 = Instant::now();
    let name = "limit constants 7/11 and -5/11 from the coupled solve";
    let tol = 0.02;
    match solve_coupled_g1(1e-3, 1e-3, 20_000, 1e-8) {
        Ok(sol) => {
            let dev_plus = (sol.v_plus_pure - 7.0 / 11.0).abs();
            let dev_minus = (sol.v_minus_pure - (-5.0 / 11.0)).abs();
            let cross_gap = (sol.v_plus_pure - sol.crosscheck.0)
                .abs()
                .max((sol.v_minus_pure - sol.crosscheck.1).abs());
            result(
                1,
                name,
                "|dev| <= 0.02 per component; closed-route gap <= 1e-4",
                t0,
                dev_plus <= tol && dev_minus <= tol && cross_gap <= 1e-4,
                vec![
                    ("v_plus_pure".into(), sol.v_plus_pure),
                    ("v_minus_pure".into(), sol.v_minus_pure),
                    ("dev_plus".into(), dev_plus),
                    ("dev_minus".into(), dev_minus),
                    ("closed_route_gap".into(), cross_gap),
                ],
            )
        }
        Err(e) => failed(1, name, t0, e),
    }
}

/// 2. The reduced fixed points converge to the closed forms w± as h falls,
///    within 5e-3 at h = 1e-4, for lambda in {0.2, 0.05}.
fn c2_closed_form_convergence() -> CriterionResult {
    let t0 = Instant::now();
    let mut measured = Vec::new();
    let mut passed = true;
    for side in [Side::Minus, Side::Plus] {
        for lambda in [0.2, 0.05] {
            let mut prev = f64::INFINITY;
            for (h, resolution) in [(1e-2, 4000), (1e-3, 20_000), (1e-4, 20_000)] {
                let dev = match solve_reduced(side, lambda, h, 0.0, resolution, 1e-9) {
                    Ok(vf) => (0..=20)
                        .map(|k| {
                            let p = k as f64 / 20.0;
                            (vf.eval(p) - closed_form::w(side, lambda, p).unwrap()).abs()
                        })
                        .fold(0.0_f64, f64::max),
                    Err(_) => f64::INFINITY,
                };
                measured.push((format!("{side}_l{lambda}_h{h:.0e}"), dev));
                if dev >= prev {
                    passed = false;
                }
                if h == 1e-4 && dev > 5e-3 {
                    passed = false;
                }
                prev = dev;
            }
        }
    }
    result(
        2,
        "reduced fixed points converge to the closed forms",
        "max dev over 21 points decreasing in h; <= 5e-3 at h=1e-4",
        t0,
        passed,
        measured,
    )
}

/// 3. Combination identities in exact arithmetic.
fn c3_combination_identities() -> CriterionResult {
    let t0 = Instant::now();
    let (vp, vm) = combine_qds42(-2.0 / 3.0, 0.75).unwrap();
    let e1 = (vp - 7.0 / 11.0).abs();
    let e2 = (vm + 5.0 / 11.0).abs();
    let e3 = (affine_extend(Side::Minus, -2.0 / 3.0, 7.0 / 11.0) + 5.0 / 11.0).abs();
    let e4 = (affine_extend(Side::Plus, 0.75, -5.0 / 11.0) - 7.0 / 11.0).abs();
    let worst = e1.max(e2).max(e3).max(e4);
    result(
        3,
        "combination and affine-extension identities",
        "exact within 1e-15",
        t0,
        worst <= 1e-15,
        vec![("worst_identity_error".into(), worst)],
    )
}

/// 4. The closed forms are classical solutions of the limit PDEs: residuals
///    below 1e-8 with analytic gradients, 1e-4 with finite differences.
fn c4_pde_residuals() -> CriterionResult {
    let t0 = Instant::now();
    let mut worst_analytic = 0.0_f64;
    let mut worst_fd = 0.0_f64;
    for side in [Side::Minus, Side::Plus] {
        for lambda in [0.05, 0.2] {
            let analytic = WBar { side, lambda };
            let fd = FiniteDifference { inner: WBar { side, lambda }, step: 1e-6 };
            for a in 1..50 {
                for b in 1..50 {
                    let p1 = a as f64 / 51.0;
                    let p2 = b as f64 / 51.0;
                    if p1 + p2 >= 1.0 {
                        continue;
                    }
                    let ra = pde_residual(side, lambda, p1, p2, &analytic).unwrap();
                    worst_analytic = worst_analytic.max(ra.abs());
                    let rf = pde_residual(side, lambda, p1, p2, &fd).unwrap();
                    worst_fd = worst_fd.max(rf.abs());
                }
            }
        }
    }
    result(
        4,
        "closed forms solve the limit PDEs classically",
        "analytic residual <= 1e-8; finite-difference residual <= 1e-4",
        t0,
        worst_analytic <= 1e-8 && worst_fd <= 1e-4,
        vec![
            ("worst_analytic_residual".into(), worst_analytic),
            ("worst_fd_residual".into(), worst_fd),
        ],
    )
}

/// 5. At unit stage duration the discounted value at the pure `--` belief
///    keeps oscillating as lambda falls: the range over a geometric grid
///    stays above the frozen amplitude, including in the last two decades.
fn c5_oscillation() -> CriterionResult {
    let t0 = Instant::now();
    let name = "oscillation of the unit-duration value";
    let game = AnyGame::General(paper_games::build_g1_tilde());
    let p0 = Belief::point(6, 4);
    let n_points = 60;
    let (lo, hi) = (1e-5_f64, 1e-2_f64);
    let mut lambdas = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let t = k as f64 / (n_points - 1) as f64;
        lambdas.push(lo * (hi / lo).powf(t));
    }
    let mut values = Vec::with_capacity(n_points);
    for &lambda in &lambdas {
        let spec = DiscountSpec::uniform(lambda, 1.0).expect("lambda < 1");
        match solve_tree(&game, &p0, &spec, 1e-7) {
            Ok(sol) => values.push(sol.value),
            Err(e) => return failed(5, name, t0, e),
        }
    }
    let range_of = |sel: &dyn Fn(f64) -> bool| -> f64 {
        let vs: Vec<f64> = lambdas
            .iter()
            .zip(&values)
            .filter(|(l, _)| sel(**l))
            .map(|(_, v)| *v)
            .collect();
        vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - vs.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let full = range_of(&|_| true);
    let decade1 = range_of(&|l| l <= 1e-4 * 1.0001);
    let decade2 = range_of(&|l| (0.9999e-4..=1.0001e-3).contains(&l));
    let passed = full >= DELTA_OSC && decade1 >= DELTA_OSC / 2.0 && decade2 >= DELTA_OSC / 2.0;
    result(
        5,
        name,
        "range >= 0.1 over [1e-5,1e-2]; >= 0.05 per decade in the last two decades",
        t0,
        passed,
        vec![
            ("range".into(), full),
            ("range_decade_1e-5_1e-4".into(), decade1),
            ("range_decade_1e-4_1e-3".into(), decade2),
        ],
    )
}

/// 6. The partition-model and general-model six-state games have the same
///    value at the pure `--` belief.
fn c6_model_equivalence() -> CriterionResult {
    let t0 = Instant::now();
    let name = "partition/general model equivalence";
    let g1 = AnyGame::Partition(paper_games::build_g1());
    let gt = AnyGame::General(paper_games::build_g1_tilde());
    let p0 = Belief::point(6, 4);
    let mut measured = Vec::new();
    let mut passed = true;
    for lambda in [0.5, 0.2, 0.05] {
        let spec = DiscountSpec::uniform(lambda, 1.0).expect("lambda < 1");
        let a = match solve_tree(&g1, &p0, &spec, 1e-8) {
            Ok(s) => s,
            Err(e) => return failed(6, name, t0, e),
        };
        let b = match solve_tree(&gt, &p0, &spec, 1e-8) {
            Ok(s) => s,
            Err(e) => return failed(6, name, t0, e),
        };
        let diff = (a.value - b.value).abs();
        let budget = (a.error_bound + b.error_bound).max(1e-9);
        measured.push((format!("diff_l{lambda}"), diff));
        if diff > budget {
            passed = false;
        }
    }
    result(
        6,
        name,
        "|v(partition) - v(general)| within summed solver error bounds",
        t0,
        passed,
        measured,
    )
}

/// 7. Perfect-observation stage-duration trends on the two-state fixture.
fn c7_perfect_trends() -> CriterionResult {
    let t0 = Instant::now();
    let name = "perfect-observation stage-duration trends";
    let game = paper_games::build_perfect_test();
    let sup_diff = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0_f64, f64::max)
    };
    let hs = [0.2, 0.1, 0.05, 0.025];

    // Trend one: ||v_{h,l} - v_{1, l/(1+l)}|| shrinks at first order in h.
    let lambda = 0.3;
    let reference = match solve_perfect(&game, lambda) {
        Ok(v) => v,
        Err(e) => return failed(7, name, t0, e),
    };
    let mut errors = Vec::new();
    for &h in &hs {
        match perfect_value(&game, lambda, h) {
            Ok(v) => errors.push(sup_diff(&v, &reference)),
            Err(e) => return failed(7, name, t0, e),
        }
    }
    let mut measured: Vec<(String, f64)> =
        hs.iter().zip(&errors).map(|(h, e)| (format!("err_h{h}"), *e)).collect();
    let mut passed = true;
    for w in errors.windows(2) {
        let ratio = w[1] / w[0];
        if !(ratio <= 0.7) {
            passed = false;
        }
        measured.push(("ratio".into(), ratio));
    }

    // Trend two: ||v_{h,l} - v_{1,l}|| <= C lambda with C fitted at 0.2.
    let discrete_gap = |lambda: f64| -> Result<f64, crate::solver::SolveError> {
        let v1 = perfect_value(&game, lambda, 1.0)?;
        let mut worst = 0.0_f64;
        for &h in &hs {
            worst = worst.max(sup_diff(&perfect_value(&game, lambda, h)?, &v1));
        }
        Ok(worst)
    };
    let c_fit = match discrete_gap(0.2) {
        Ok(e) => e / 0.2,
        Err(e) => return failed(7, name, t0, e),
    };
    measured.push(("C_fitted".into(), c_fit));
    for lambda in [0.1, 0.05] {
        match discrete_gap(lambda) {
            Ok(e) => {
                measured.push((format!("gap_l{lambda}"), e));
                if e > c_fit * lambda {
                    passed = false;
                }
            }
            Err(e) => return failed(7, name, t0, e),
        }
    }
    result(
        7,
        name,
        "error ratios <= 0.7 under h halving; gap <= C*lambda with C fitted at 0.2",
        t0,
        passed,
        measured,
    )
}

/// 8. Exponential discretization: stochastic rows, and values within C*h of
///    the Euler values on the minus half-game.
fn c8_transform_consistency() -> CriterionResult {
    let t0 = Instant::now();
    let name = "exponential vs Euler transform consistency";
    let base = paper_games::build_half(Side::Minus, 0.0);
    let mut worst_row = 0.0_f64;
    for h in [1e-2, 1e-3, 0.5] {
        let (transformed, _) = match crate::stage_duration::exp_transform(&base, h, 0.1) {
            Ok(x) => x,
            Err(e) => return failed(8, name, t0, e),
        };
        for per_s in transformed.dynamics.rows() {
            for per_i in per_s {
                for row in per_i {
                    let sum: f64 = row.iter().sum();
                    worst_row = worst_row.max((sum - 1.0).abs());
                    for &p in row {
                        worst_row = worst_row.max((-p).max(0.0));
                    }
                }
            }
        }
    }

    let lambda = 0.1;
    let eval_points = [0.0, 0.25, 0.5, 0.75, 1.0];
    let dev_at = |h: f64, resolution: usize| -> Result<f64, crate::solver::SolveError> {
        let euler = solve_reduced(Side::Minus, lambda, h, 0.0, resolution, 1e-10)?;
        let dyn_exp = exp_reduced_dynamics(Side::Minus, 0.0, lambda, h)?;
        let exp_fp = solve_reduced_dynamics(&dyn_exp, resolution, 1e-10)?;
        Ok(eval_points
            .iter()
            .map(|&p| (euler.eval(p) - exp_fp.eval(p)).abs())
            .fold(0.0_f64, f64::max))
    };
    let (dev_coarse, dev_fine) = match (dev_at(1e-2, 4000), dev_at(1e-3, 20_000)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return failed(8, name, t0, e),
    };
    let c_fit = dev_coarse / 1e-2;
    let passed = worst_row <= 1e-10 && dev_fine <= c_fit * 1e-3;
    result(
        8,
        name,
        "rows stochastic within 1e-10; |v_exp - v_euler|(h=1e-3) <= C*h with C fitted at h=1e-2",
        t0,
        passed,
        vec![
            ("worst_row_defect".into(), worst_row),
            ("dev_h1e-2".into(), dev_coarse),
            ("dev_h1e-3".into(), dev_fine),
            ("C_fitted".into(), c_fit),
        ],
    )
}

/// 9. Monte-Carlo payoff under extracted strategies matches the computed
///    value within confidence plus solver error.
fn c9_monte_carlo() -> CriterionResult {
    let t0 = Instant::now();
    let name = "Monte-Carlo cross-check of extracted strategies";
    let game = AnyGame::Partition(paper_games::build_g1());
    let (lambda, h) = (0.2, 1.0);
    let p0 = Belief::point(6, 4);
    let spec = DiscountSpec::uniform(lambda, h).expect("contraction");
    let sol = match solve_tree(&game, &p0, &spec, 1e-9) {
        Ok(s) => s,
        Err(e) => return failed(9, name, t0, e),
    };
    let stage = match StageGame::prepare(&game, lambda, h) {
        Ok(s) => s,
        Err(e) => return failed(9, name, t0, e),
    };
    let horizon = ((1e-4_f64).ln() / (1.0 - lambda * h).ln()).ceil() as usize;
    let mut strategies = GreedyStrategy::new(&stage, &sol.value_fn);
    let sim =
        match simulate(&game, &mut strategies, &p0, lambda, h, horizon, 100_000, 20_240_812) {
            Ok(s) => s,
            Err(e) => return failed(9, name, t0, e),
        };
    let truncation = (1.0 - lambda * h).powi(horizon as i32);
    let diff = (sim.mean - sol.value).abs();
    let budget = sim.half_width_95 + sol.error_bound + truncation;
    result(
        9,
        name,
        "|simulated - computed| <= 95% half-width + solver error + truncation",
        t0,
        diff <= budget,
        vec![
            ("simulated_mean".into(), sim.mean),
            ("computed_value".into(), sol.value),
            ("diff".into(), diff),
            ("half_width".into(), sim.half_width_95),
        ],
    )
}

/// 10. Cross-solver and matrix-game oracle agreement.
fn c10_oracle_equivalence() -> CriterionResult {
    let t0 = Instant::now();
    let name = "solver and matrix-game oracle agreement";
    let (lambda, h) = (0.1, 0.05);
    let game = AnyGame::General(paper_games::build_tilde_half(Side::Minus, h));
    let grid = match solve_grid(&game, lambda, h, 40, 1e-5, GridMode::GaussSeidel) {
        Ok(g) => g,
        Err(e) => return failed(10, name, t0, e),
    };
    let reduced = match solve_reduced(Side::Minus, lambda, h, 0.0, 4000, 1e-9) {
        Ok(r) => r,
        Err(e) => return failed(10, name, t0, e),
    };
    let spec = DiscountSpec::uniform(lambda, h).expect("contraction");
    let mut rng = Rng::seeded(1_003);
    let mut worst_tree_grid = 0.0_f64;
    let mut worst_tree_reduced = 0.0_f64;
    let mut passed = true;
    for _ in 0..20 {
        let p_heavy = rng.uniform();
        let p = Belief::new(vec![1.0 - p_heavy, p_heavy, 0.0, 0.0]).unwrap();
        let tree = match solve_tree(&game, &p, &spec, 2e-2) {
            Ok(s) => s,
            Err(e) => return failed(10, name, t0, e),
        };
        let dg = (tree.value - grid.eval(&p)).abs();
        worst_tree_grid = worst_tree_grid.max(dg);
        if dg > tree.error_bound + grid.error_bound {
            passed = false;
        }
        let dr = (tree.value - reduced.eval(p_heavy)).abs();
        worst_tree_reduced = worst_tree_reduced.max(dr);
        if dr > tree.error_bound + reduced.error_bound {
            passed = false;
        }
    }

    // Matrix-game values against the independent support-enumeration oracle.
    let mut worst_matrix = 0.0_f64;
    for trial in 0..500 {
        let cols = if trial % 2 == 0 { 2 } else { 3 };
        let entries: Vec<f64> = (0..2 * cols).map(|_| rng.range(-4.0, 4.0)).collect();
        let g = MatrixGame::new(2, cols, entries);
        let a = matrix_game::solve(&g, 1e-10).expect("finite");
        let b = matrix_game::solve_support_enumeration(&g, 1e-10).expect("finite");
        worst_matrix = worst_matrix.max((a.value - b.value).abs());
    }
    if worst_matrix > 1e-6 {
        passed = false;
    }
    result(
        10,
        name,
        "cross-solver diffs within summed error bounds; matrix values within 1e-6 of the oracle",
        t0,
        passed,
        vec![
            ("worst_tree_vs_grid".into(), worst_tree_grid),
            ("worst_tree_vs_reduced".into(), worst_tree_reduced),
            ("worst_matrix_vs_oracle".into(), worst_matrix),
        ],
    )
}
