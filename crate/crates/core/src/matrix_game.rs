//! Minimax solver for one-shot finite zero-sum matrix games.
//!
//! The row player maximizes, the column player minimizes. `solve` computes
//! the value by a self-contained primal simplex on the standard LP
//! formulation and then extracts the lexicographically smallest optimal
//! support pair, so identical inputs always produce identical output.
//! `solve_support_enumeration` is an independent route used for
//! cross-checking.

use thiserror::Error;

/// Default duality-gap tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MatrixGameError {
    #[error("matrix entry at ({0},{1}) is not finite")]
    NonFinite(usize, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no optimal support pair found within tolerance {0}")]
    NoOptimalSupport(f64),
}

/// Payoff matrix of a zero-sum game; entry `(i, j)` is what the column
/// player pays the row player.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
}

impl MatrixGame {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix game needs at least one action per player");
        assert_eq!(entries.len(), rows * cols);
        MatrixGame { rows, cols, a: entries }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let m = rows.len();
        let n = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == n));
        MatrixGame::new(m, n, rows.concat())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn check_finite(&self) -> Result<(), MatrixGameError> {
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.get(i, j).is_finite() {
                    return Err(MatrixGameError::NonFinite(i, j));
                }
            }
        }
        Ok(())
    }

    fn min_entry(&self) -> f64 {
        self.a.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    fn max_entry(&self) -> f64 {
        self.a.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Minimax certificate: mixed strategies plus the realized duality gap.
#[derive(Debug, Clone)]
pub struct MatrixSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub gap: f64,
}

/// `max_i (M y)_i - min_j (x^T M)_j`; zero (within tolerance) exactly at a
/// minimax pair, nonnegative by weak duality.
pub fn best_response_gap(game: &MatrixGame, x: &[f64], y: &[f64]) -> Result<f64, MatrixGameError> {
    if x.len() != game.rows || y.len() != game.cols {
        return Err(MatrixGameError::DimensionMismatch(format!(
            "strategy lengths ({}, {}) vs matrix {}x{}",
            x.len(),
            y.len(),
            game.rows,
            game.cols
        )));
    }
    let mut best_row = f64::NEG_INFINITY;
    for i in 0..game.rows {
        let mut v = 0.0;
        for j in 0..game.cols {
            v += game.get(i, j) * y[j];
        }
        best_row = best_row.max(v);
    }
    let mut best_col = f64::INFINITY;
    for j in 0..game.cols {
        let mut v = 0.0;
        for i in 0..game.rows {
            v += game.get(i, j) * x[i];
        }
        best_col = best_col.min(v);
    }
    Ok(best_row - best_col)
}

/// Solve the game to a duality gap of at most `tol`.
///
/// The value comes from the simplex LP; the returned strategies are the
/// lexicographically smallest support pair that certifies it.
pub fn solve(game: &MatrixGame, tol: f64) -> Result<MatrixSolution, MatrixGameError> {
    assert!(tol > 0.0);
    game.check_finite()?;

    // Degenerate shapes have closed-form solutions.
    if game.rows == 1 || game.cols == 1 {
        return Ok(solve_vector_game(game));
    }

    let value = simplex_value(game);
    debug_assert!(
        value >= game.min_entry() - 1e-9 && value <= game.max_entry() + 1e-9,
        "simplex value {value} outside entry range"
    );
    // Strategy extraction with deterministic tie-breaking.
    match lex_smallest_support(game, value, tol) {
        Some(sol) => Ok(sol),
        None => Err(MatrixGameError::NoOptimalSupport(tol)),
    }
}

/// Value without strategy extraction; the fast path for solver inner loops.
pub fn value_only(game: &MatrixGame) -> Result<f64, MatrixGameError> {
    game.check_finite()?;
    if game.rows == 1 {
        return Ok((0..game.cols).map(|j| game.get(0, j)).fold(f64::INFINITY, f64::min));
    }
    if game.cols == 1 {
        return Ok((0..game.rows).map(|i| game.get(i, 0)).fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(simplex_value(game))
}

/// Independent oracle: enumerate all square support pairs in lexicographic
/// order and return the first equalizing solution that passes the gap check.
/// Shares no value computation with the simplex route.
pub fn solve_support_enumeration(
    game: &MatrixGame,
    tol: f64,
) -> Result<MatrixSolution, MatrixGameError> {
    assert!(tol > 0.0);
    game.check_finite()?;
    if game.rows == 1 || game.cols == 1 {
        return Ok(solve_vector_game(game));
    }
    for (s1, s2) in support_pairs(game.rows, game.cols) {
        if let Some(sol) = try_support(game, &s1, &s2, tol) {
            return Ok(sol);
        }
    }
    Err(MatrixGameError::NoOptimalSupport(tol))
}

fn solve_vector_game(game: &MatrixGame) -> MatrixSolution {
    if game.rows == 1 {
        let mut j_best = 0;
        for j in 1..game.cols {
            if game.get(0, j) < game.get(0, j_best) {
                j_best = j;
            }
        }
        let mut y = vec![0.0; game.cols];
        y[j_best] = 1.0;
        let value = game.get(0, j_best);
        let gap = best_response_gap(game, &[1.0], &y).unwrap();
        MatrixSolution { value, x: vec![1.0], y, gap }
    } else {
        let mut i_best = 0;
        for i in 1..game.rows {
            if game.get(i, 0) > game.get(i_best, 0) {
                i_best = i;
            }
        }
        let mut x = vec![0.0; game.rows];
        x[i_best] = 1.0;
        let value = game.get(i_best, 0);
        let gap = best_response_gap(game, &x, &[1.0]).unwrap();
        MatrixSolution { value, x, y: vec![1.0], gap }
    }
}

/// Game value via primal simplex on the column player's LP:
/// `max 1^T w  s.t.  M' w <= 1, w >= 0` with `M' = M + shift > 0`.
/// The optimum has `1^T w = 1 / Val(M')`, so `value = 1/objective - shift`.
fn simplex_value(game: &MatrixGame) -> f64 {
    let shift = 1.0 - game.min_entry();
    let n = game.cols; // variables
    let m = game.rows; // constraints
    // Tableau: m constraint rows, columns = n vars + m slacks + rhs.
    let width = n + m + 1;
    let mut t = vec![0.0; (m + 1) * width];
    for r in 0..m {
        for v in 0..n {
            t[r * width + v] = game.get(r, v) + shift;
        }
        t[r * width + n + r] = 1.0;
        t[r * width + n + m] = 1.0;
    }
    // Objective row: maximize sum w  ->  row holds -coeffs.
    for v in 0..n {
        t[m * width + v] = -1.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    // Bland's rule: entering = lowest-index negative reduced cost,
    // leaving = lowest-index minimizing ratio. Finite and deterministic.
    loop {
        let mut enter = None;
        for v in 0..n + m {
            if t[m * width + v] < -1e-12 {
                enter = Some(v);
                break;
            }
        }
        let Some(e) = enter else { break };
        let mut leave = None;
        let mut best_ratio = f64::INFINITY;
        for r in 0..m {
            let a = t[r * width + e];
            if a > 1e-12 {
                let ratio = t[r * width + n + m] / a;
                if ratio < best_ratio - 1e-15
                    || (ratio < best_ratio + 1e-15
                        && leave.map_or(true, |l| basis[l] > basis[r]))
                {
                    best_ratio = ratio;
                    leave = Some(r);
                }
            }
        }
        let l = leave.expect("bounded LP: shifted matrix is strictly positive");
        // Pivot on (l, e).
        let piv = t[l * width + e];
        for v in 0..width {
            t[l * width + v] /= piv;
        }
        for r in 0..=m {
            if r == l {
                continue;
            }
            let f = t[r * width + e];
            if f != 0.0 {
                for v in 0..width {
                    t[r * width + v] -= f * t[l * width + v];
                }
            }
        }
        basis[l] = e;
    }
    let objective = t[m * width + n + m];
    1.0 / objective - shift
}

/// All support pairs in deterministic lexicographic order: ordered first by
/// the row support as an index sequence, then by the column support.
fn support_pairs(m: usize, n: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let rows = subsets_lex(m);
    let cols = subsets_lex(n);
    let mut out = Vec::new();
    for s1 in &rows {
        for s2 in &cols {
            if s1.len() == s2.len() {
                out.push((s1.clone(), s2.clone()));
            }
        }
    }
    out
}

/// Nonempty subsets of `0..n` in lexicographic sequence order:
/// [0], [0,1], [0,1,2], ..., [0,2], ..., [1], [1,2], ...
fn subsets_lex(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for i in start..n {
            cur.push(i);
            out.push(cur.clone());
            rec(i + 1, n, cur, out);
            cur.pop();
        }
    }
    rec(0, n, &mut cur, &mut out);
    out
}

fn lex_smallest_support(game: &MatrixGame, value: f64, tol: f64) -> Option<MatrixSolution> {
    for (s1, s2) in support_pairs(game.rows, game.cols) {
        if let Some(sol) = try_support(game, &s1, &s2, tol) {
            if (sol.value - value).abs() <= tol.max(1e-9) {
                return Some(sol);
            }
        }
    }
    None
}

/// Solve the equalizing equations on a square support pair and keep the
/// result only if it is a feasible minimax pair with gap <= tol.
fn try_support(
    game: &MatrixGame,
    s1: &[usize],
    s2: &[usize],
    tol: f64,
) -> Option<MatrixSolution> {
    let k = s1.len();
    debug_assert_eq!(k, s2.len());
    // Unknowns (x_{s1}, v): sum_i x_i M[i][j] = v for j in s2, sum x = 1.
    let mut ax = nalgebra::DMatrix::<f64>::zeros(k + 1, k + 1);
    let mut bx = nalgebra::DVector::<f64>::zeros(k + 1);
    for (r, &j) in s2.iter().enumerate() {
        for (c, &i) in s1.iter().enumerate() {
            ax[(r, c)] = game.get(i, j);
        }
        ax[(r, k)] = -1.0;
    }
    for c in 0..k {
        ax[(k, c)] = 1.0;
    }
    bx[k] = 1.0;
    let solx = ax.lu().solve(&bx)?;
    // Unknowns (y_{s2}, v): sum_j M[i][j] y_j = v for i in s1, sum y = 1.
    let mut ay = nalgebra::DMatrix::<f64>::zeros(k + 1, k + 1);
    let mut by = nalgebra::DVector::<f64>::zeros(k + 1);
    for (r, &i) in s1.iter().enumerate() {
        for (c, &j) in s2.iter().enumerate() {
            ay[(r, c)] = game.get(i, j);
        }
        ay[(r, k)] = -1.0;
    }
    for c in 0..k {
        ay[(k, c)] = 1.0;
    }
    by[k] = 1.0;
    let soly = ay.lu().solve(&by)?;

    let mut x = vec![0.0; game.rows];
    for (c, &i) in s1.iter().enumerate() {
        if solx[c] < -1e-9 {
            return None;
        }
        x[i] = solx[c].max(0.0);
    }
    let mut y = vec![0.0; game.cols];
    for (c, &j) in s2.iter().enumerate() {
        if soly[c] < -1e-9 {
            return None;
        }
        y[j] = soly[c].max(0.0);
    }
    normalize(&mut x);
    normalize(&mut y);
    let gap = best_response_gap(game, &x, &y).ok()?;
    if gap.abs() > tol {
        return None;
    }
    let value = 0.5 * (solx[k] + soly[k]);
    Some(MatrixSolution { value, x, y, gap })
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        for e in v.iter_mut() {
            *e /= s;
        }
    }
}
