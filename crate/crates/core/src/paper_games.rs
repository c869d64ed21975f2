//! Exact constructors for the example games driving every experiment, plus
//! a small perfect-observation fixture.
//!
//! State order for the six-state games is `+, ++, +*, -, --, -*` everywhere.
//! (Some derivations permute `+` and `++`; this crate standardizes on the
//! order above and converts where needed.)
//!
//! All probabilities are built from integer ratios at construction time.

use crate::game_model::{
    Dynamics, GeneralEntry, GeneralSignalGame, PartitionSignalGame,
};
use crate::Side;

const G1_STATES: [&str; 6] = ["+", "++", "+*", "-", "--", "-*"];

/// Six-state two-signal game in kernel form: the `PLUS` class pays +1 and
/// the `MINUS` class pays -1, `+*`/`-*` absorb, and the interior states
/// shuffle as in the transition tables at unit stage duration.
pub fn build_g1() -> PartitionSignalGame {
    let states: Vec<String> = G1_STATES.iter().map(|s| s.to_string()).collect();
    let signals = vec!["PLUS".to_string(), "MINUS".to_string()];
    let partition = vec![0, 0, 0, 1, 1, 1];
    // PLUS class: T, M, B vs L, M, R, Q. MINUS class: T, B, Q vs L, R.
    let actions1 = vec![
        vec!["T".into(), "M".into(), "B".into()],
        vec!["T".into(), "B".into(), "Q".into()],
    ];
    let actions2 = vec![
        vec!["L".into(), "M".into(), "R".into(), "Q".into()],
        vec!["L".into(), "R".into()],
    ];
    let (p, pp, ps, m, mm, ms) = (0, 1, 2, 3, 4, 5);
    let n = 6;
    let payoff: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|s| {
            let val = if partition[s] == 0 { 1.0 } else { -1.0 };
            let (ni, nj) = if partition[s] == 0 { (3, 4) } else { (3, 2) };
            vec![vec![val; nj]; ni]
        })
        .collect();

    let mut rows: Vec<Vec<Vec<Vec<f64>>>> = (0..n)
        .map(|s| {
            let (ni, nj) = if partition[s] == 0 { (3, 4) } else { (3, 2) };
            vec![vec![vec![0.0; n]; nj]; ni]
        })
        .collect();
    let set = |rows: &mut Vec<Vec<Vec<Vec<f64>>>>,
                   s: usize,
                   i: usize,
                   j: usize,
                   entries: &[(usize, f64)]| {
        for &(sp, v) in entries {
            rows[s][i][j][sp] = v;
        }
    };

    // State + (player 1: T,M,B; player 2: L,M,R,Q). Diagonal pairs stay put;
    // off-diagonal pairs jump to ++; Q sends to --.
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                set(&mut rows, p, i, j, &[(p, -1.0), (pp, 1.0)]);
            }
        }
        set(&mut rows, p, i, 3, &[(p, -1.0), (mm, 1.0)]);
    }
    // State ++: diagonal pairs leak to + at rate 2/3; Q absorbs into +*.
    for i in 0..3 {
        set(&mut rows, pp, i, i, &[(pp, -2.0 / 3.0), (p, 2.0 / 3.0)]);
        set(&mut rows, pp, i, 3, &[(pp, -1.0), (ps, 1.0)]);
    }
    // State -: (T,R) and (B,L) jump to --; Q jumps to ++.
    set(&mut rows, m, 0, 1, &[(m, -1.0), (mm, 1.0)]);
    set(&mut rows, m, 1, 0, &[(m, -1.0), (mm, 1.0)]);
    set(&mut rows, m, 2, 0, &[(m, -1.0), (pp, 1.0)]);
    set(&mut rows, m, 2, 1, &[(m, -1.0), (pp, 1.0)]);
    // State --: (T,L) and (B,R) leak to - at rate 1/2; Q absorbs into -*.
    set(&mut rows, mm, 0, 0, &[(mm, -0.5), (m, 0.5)]);
    set(&mut rows, mm, 1, 1, &[(mm, -0.5), (m, 0.5)]);
    set(&mut rows, mm, 2, 0, &[(mm, -1.0), (ms, 1.0)]);
    set(&mut rows, mm, 2, 1, &[(mm, -1.0), (ms, 1.0)]);
    // +* and -* are absorbing: zero kernel rows.

    PartitionSignalGame {
        states,
        signals,
        partition,
        actions1,
        actions2,
        payoff,
        dynamics: Dynamics::Kernel(rows),
    }
}

/// Two-signal general-model companion of [`build_g1`]: same six states, one
/// controlling player per side, actions `C`/`Q`, branches labelled with the
/// public signal they emit. Absorbing states loop emitting `beta`.
pub fn build_g1_tilde() -> GeneralSignalGame {
    let states: Vec<String> = G1_STATES.iter().map(|s| s.to_string()).collect();
    let signals = vec!["alpha".to_string(), "beta".to_string()];
    let actions = vec!["C".to_string(), "Q".to_string()];
    let (p, pp, ps, m, mm, ms) = (0usize, 1, 2, 3, 4, 5);
    let (alpha, beta) = (0usize, 1);
    let n = 6;
    let (ni, nj) = (2, 2);

    let mut payoff = vec![0.0; ni * nj * n];
    let mut transition: Vec<Vec<GeneralEntry>> = vec![Vec::new(); ni * nj * n];
    let e = |state, signal, prob| GeneralEntry { state, signal, prob };
    for i in 0..ni {
        for j in 0..nj {
            for s in 0..n {
                let flat = (i * nj + j) * n + s;
                payoff[flat] = if s <= ps { 1.0 } else { -1.0 };
                transition[flat] = match s {
                    // Minus side: player 1's action i decides.
                    _ if s == m => {
                        if i == 0 {
                            vec![e(m, alpha, 0.5), e(mm, beta, 0.5)]
                        } else {
                            vec![e(pp, alpha, 1.0)]
                        }
                    }
                    _ if s == mm => {
                        if i == 0 {
                            vec![e(m, alpha, 0.25), e(mm, alpha, 0.25), e(mm, beta, 0.5)]
                        } else {
                            vec![e(ms, beta, 1.0)]
                        }
                    }
                    // Plus side: player 2's action j decides.
                    _ if s == p => {
                        if j == 0 {
                            vec![e(p, alpha, 1.0 / 3.0), e(pp, beta, 2.0 / 3.0)]
                        } else {
                            vec![e(mm, alpha, 1.0)]
                        }
                    }
                    _ if s == pp => {
                        if j == 0 {
                            vec![
                                e(p, alpha, 2.0 / 9.0),
                                e(pp, alpha, 1.0 / 9.0),
                                e(pp, beta, 2.0 / 3.0),
                            ]
                        } else {
                            vec![e(ps, beta, 1.0)]
                        }
                    }
                    _ => vec![e(s, beta, 1.0)],
                };
            }
        }
    }
    GeneralSignalGame {
        states,
        signals,
        actions1: actions.clone(),
        actions2: actions,
        payoff,
        transition,
        duplicate1: vec![false; ni],
        duplicate2: vec![false; nj],
    }
}

/// State-blind half-game in kernel form: one side of [`build_g1`] with the
/// cross-side jump redirected into an absorbing state `k*` of payoff `k`.
pub fn build_half(side: Side, k: f64) -> PartitionSignalGame {
    assert!((-1.0..=1.0).contains(&k), "exit payoff must lie in [-1, 1]");
    let n = 4;
    let mut rows: Vec<Vec<Vec<Vec<f64>>>>;
    let states: Vec<String>;
    let actions1: Vec<String>;
    let actions2: Vec<String>;
    let base_payoff: f64;
    match side {
        Side::Minus => {
            states = ["-", "--", "-*", "k*"].iter().map(|s| s.to_string()).collect();
            actions1 = vec!["T".into(), "B".into(), "Q".into()];
            actions2 = vec!["L".into(), "R".into()];
            base_payoff = -1.0;
            rows = vec![vec![vec![vec![0.0; n]; 2]; 3]; n];
            let (m, mm, ms, ks) = (0, 1, 2, 3);
            // State -: (T,R)/(B,L) jump to --; Q exits to k*.
            rows[m][0][1] = kernel_row(n, m, &[(mm, 1.0)]);
            rows[m][1][0] = kernel_row(n, m, &[(mm, 1.0)]);
            rows[m][2][0] = kernel_row(n, m, &[(ks, 1.0)]);
            rows[m][2][1] = kernel_row(n, m, &[(ks, 1.0)]);
            // State --: (T,L)/(B,R) leak to - at rate 1/2; Q absorbs to -*.
            rows[mm][0][0] = kernel_row(n, mm, &[(m, 0.5)]);
            rows[mm][1][1] = kernel_row(n, mm, &[(m, 0.5)]);
            rows[mm][2][0] = kernel_row(n, mm, &[(ms, 1.0)]);
            rows[mm][2][1] = kernel_row(n, mm, &[(ms, 1.0)]);
        }
        Side::Plus => {
            states = ["+", "++", "+*", "k*"].iter().map(|s| s.to_string()).collect();
            actions1 = vec!["T".into(), "M".into(), "B".into()];
            actions2 = vec!["L".into(), "M".into(), "R".into(), "Q".into()];
            base_payoff = 1.0;
            rows = vec![vec![vec![vec![0.0; n]; 4]; 3]; n];
            let (p, pp, ps, ks) = (0, 1, 2, 3);
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        rows[p][i][j] = kernel_row(n, p, &[(pp, 1.0)]);
                    }
                }
                rows[p][i][3] = kernel_row(n, p, &[(ks, 1.0)]);
                rows[pp][i][i] = kernel_row(n, pp, &[(p, 2.0 / 3.0)]);
                rows[pp][i][3] = kernel_row(n, pp, &[(ps, 1.0)]);
            }
        }
    }
    let (ni, nj) = (actions1.len(), actions2.len());
    let payoff: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|s| {
            let v = if s == 3 { k } else { base_payoff };
            vec![vec![v; nj]; ni]
        })
        .collect();
    PartitionSignalGame {
        states,
        signals: vec!["BLIND".to_string()],
        partition: vec![0; n],
        actions1: vec![actions1],
        actions2: vec![actions2],
        payoff,
        dynamics: Dynamics::Kernel(rows),
    }
}

/// Three-signal stage-duration companion of the half-games. The controlled
/// side plays `C`/`Q`; the idle player has a single dummy action. Payoffs
/// are `±h` on the live states and 0 on the exit state `0*`; absorbing
/// states loop emitting `delta`.
pub fn build_tilde_half(side: Side, h: f64) -> GeneralSignalGame {
    assert!(h > 0.0 && h <= 1.0, "stage duration must lie in (0, 1]");
    let signals = vec!["alpha".to_string(), "beta".to_string(), "delta".to_string()];
    let (alpha, beta, delta) = (0usize, 1, 2);
    let n = 4;
    let e = |state, signal, prob| GeneralEntry { state, signal, prob };
    let prune = |entries: Vec<GeneralEntry>| -> Vec<GeneralEntry> {
        entries.into_iter().filter(|e| e.prob > 0.0).collect()
    };

    // Controlled player's branches per state, index 0 = C, 1 = Q.
    let branches: Vec<[Vec<GeneralEntry>; 2]>;
    let states: Vec<String>;
    let base: f64;
    match side {
        Side::Minus => {
            states = ["-", "--", "-*", "0*"].iter().map(|s| s.to_string()).collect();
            base = -h;
            let (m, mm, ms, zs) = (0, 1, 2, 3);
            branches = vec![
                [
                    prune(vec![
                        e(m, alpha, 0.5),
                        e(m, beta, (1.0 - h) / 2.0),
                        e(mm, beta, h / 2.0),
                    ]),
                    prune(vec![e(zs, alpha, h), e(m, delta, 1.0 - h)]),
                ],
                [
                    prune(vec![
                        e(m, alpha, h / 4.0),
                        e(mm, alpha, (2.0 - h) / 4.0),
                        e(mm, beta, 0.5),
                    ]),
                    prune(vec![e(ms, beta, h), e(mm, delta, 1.0 - h)]),
                ],
                [vec![e(ms, delta, 1.0)], vec![e(ms, delta, 1.0)]],
                [vec![e(zs, delta, 1.0)], vec![e(zs, delta, 1.0)]],
            ];
        }
        Side::Plus => {
            states = ["+", "++", "+*", "0*"].iter().map(|s| s.to_string()).collect();
            base = h;
            let (p, pp, ps, zs) = (0, 1, 2, 3);
            branches = vec![
                [
                    prune(vec![
                        e(p, alpha, 1.0 / 3.0),
                        e(p, beta, 2.0 * (1.0 - h) / 3.0),
                        e(pp, beta, 2.0 * h / 3.0),
                    ]),
                    prune(vec![e(zs, alpha, h), e(p, delta, 1.0 - h)]),
                ],
                [
                    prune(vec![
                        e(p, alpha, 2.0 * h / 9.0),
                        e(pp, alpha, (3.0 - 2.0 * h) / 9.0),
                        e(pp, beta, 2.0 / 3.0),
                    ]),
                    prune(vec![e(ps, beta, h), e(pp, delta, 1.0 - h)]),
                ],
                [vec![e(ps, delta, 1.0)], vec![e(ps, delta, 1.0)]],
                [vec![e(zs, delta, 1.0)], vec![e(zs, delta, 1.0)]],
            ];
        }
    }

    let (actions1, actions2) = match side {
        Side::Minus => (vec!["C".to_string(), "Q".to_string()], vec!["pass".to_string()]),
        Side::Plus => (vec!["pass".to_string()], vec!["C".to_string(), "Q".to_string()]),
    };
    let (ni, nj) = (actions1.len(), actions2.len());
    let mut payoff = vec![0.0; ni * nj * n];
    let mut transition = vec![Vec::new(); ni * nj * n];
    for i in 0..ni {
        for j in 0..nj {
            for s in 0..n {
                let flat = (i * nj + j) * n + s;
                payoff[flat] = if s == 3 { 0.0 } else { base };
                let choice = match side {
                    Side::Minus => i,
                    Side::Plus => j,
                };
                transition[flat] = branches[s][choice].clone();
            }
        }
    }
    GeneralSignalGame {
        states,
        signals,
        actions1,
        actions2,
        payoff,
        transition,
        duplicate1: vec![false; ni],
        duplicate2: vec![false; nj],
    }
}

/// Deterministic two-state perfect-observation fixture: a matching-pennies
/// style stage game that drains into an absorbing zero-payoff state under
/// the profile `(a, a)`.
pub fn build_perfect_test() -> PartitionSignalGame {
    let states = vec!["s0".to_string(), "s1".to_string()];
    let signals = vec!["S0".to_string(), "S1".to_string()];
    let actions: Vec<String> = vec!["a".into(), "b".into()];
    let mut rows = vec![vec![vec![vec![0.0; 2]; 2]; 2]; 2];
    rows[0][0][0] = vec![-1.0, 1.0];
    let payoff = vec![
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![0.0, 0.0], vec![0.0, 0.0]],
    ];
    PartitionSignalGame {
        states,
        signals,
        partition: vec![0, 1],
        actions1: vec![actions.clone(), actions.clone()],
        actions2: vec![actions.clone(), actions],
        payoff,
        dynamics: Dynamics::Kernel(rows),
    }
}

fn kernel_row(n: usize, from: usize, to: &[(usize, f64)]) -> Vec<f64> {
    let mut row = vec![0.0; n];
    let mut total = 0.0;
    for &(sp, rate) in to {
        row[sp] = rate;
        total += rate;
    }
    row[from] = -total;
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stage_duration::max_step;

    #[test]
    fn all_builders_validate_clean() {
        assert!(build_g1().validate().is_ok());
        assert!(build_g1_tilde().validate().is_ok());
        for side in [Side::Minus, Side::Plus] {
            for k in [-1.0, 0.0, 0.5, 1.0] {
                assert!(build_half(side, k).validate().is_ok());
            }
            for h in [0.05, 0.5, 1.0] {
                let rep = build_tilde_half(side, h).validate();
                assert!(rep.is_ok(), "side {side:?} h {h}: {:?}", rep.violations);
            }
        }
        assert!(build_perfect_test().validate().is_ok());
    }

    #[test]
    fn g1_table_spot_checks() {
        let g = build_g1().to_transition_form().unwrap();
        let rows = g.dynamics.rows();
        let idx = |name: &str| g.state_index(name).unwrap();
        // --, (T, L): 1/2{--} + 1/2{-}
        assert_eq!(rows[idx("--")][0][0][idx("--")], 0.5);
        assert_eq!(rows[idx("--")][0][0][idx("-")], 0.5);
        // ++, (T, Q): +*
        assert_eq!(rows[idx("++")][0][3][idx("+*")], 1.0);
        // absorbing states
        for s in [idx("+*"), idx("-*")] {
            for per_i in &rows[s] {
                for row in per_i {
                    assert_eq!(row[s], 1.0);
                    assert_eq!(row.iter().sum::<f64>(), 1.0);
                }
            }
        }
        assert_eq!(max_step(&build_g1()).unwrap(), 1.0);
    }

    #[test]
    fn g1_tilde_matches_diagram() {
        let g = build_g1_tilde();
        let idx = |name: &str| g.state_index(name).unwrap();
        let (c, q) = (0, 1);
        let entries = g.entries(c, 0, idx("--"));
        assert_eq!(entries.len(), 3);
        let get = |s: usize, a: usize| {
            entries.iter().find(|e| e.state == s && e.signal == a).map(|e| e.prob)
        };
        assert_eq!(get(idx("-"), 0), Some(0.25));
        assert_eq!(get(idx("--"), 0), Some(0.25));
        assert_eq!(get(idx("--"), 1), Some(0.5));
        // - under Q goes to ++ with signal alpha.
        let eq = g.entries(q, 0, idx("-"));
        assert_eq!(eq.len(), 1);
        assert_eq!((eq[0].state, eq[0].signal, eq[0].prob), (idx("++"), 0, 1.0));
        // + under C: (+, alpha, 1/3), (++, beta, 2/3).
        let ep = g.entries(0, c, idx("+"));
        assert_eq!(ep.len(), 2);
        assert!((ep[0].prob - 1.0 / 3.0).abs() < 1e-15);
        assert!((ep[1].prob - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn half_game_tables() {
        let g = build_half(Side::Minus, 0.0);
        let rows = g.dynamics.rows();
        let idx = |name: &str| g.state_index(name).unwrap();
        // - under Q sends rate 1 to k* (the ++ replacement).
        assert_eq!(rows[idx("-")][2][0][idx("k*")], 1.0);
        assert_eq!(rows[idx("-")][2][0][idx("-")], -1.0);
        let gp = build_half(Side::Plus, 0.0);
        let rowsp = gp.dynamics.rows();
        let idxp = |name: &str| gp.state_index(name).unwrap();
        // ++ under (T, L): rate 2/3 to +.
        assert!((rowsp[idxp("++")][0][0][idxp("+")] - 2.0 / 3.0).abs() < 1e-15);
        // k = -1 minus game: k* pays -1 like -*.
        let gk = build_half(Side::Minus, -1.0);
        assert_eq!(gk.payoff[3][0][0], -1.0);
        assert_eq!(gk.payoff[2][0][0], -1.0);
    }

    #[test]
    fn tilde_half_tables() {
        let h = 0.3;
        let g = build_tilde_half(Side::Minus, h);
        let idx = |name: &str| g.state_index(name).unwrap();
        // -- under Q: (-*, beta, h), (--, delta, 1-h).
        let e = g.entries(1, 0, idx("--"));
        assert_eq!(e.len(), 2);
        assert!((e[0].prob - h).abs() < 1e-15);
        assert_eq!(e[0].state, idx("-*"));
        assert!((e[1].prob - (1.0 - h)).abs() < 1e-15);
        // payoffs are ±h and 0 on 0*.
        assert_eq!(g.payoff_at(0, 0, idx("-")), -h);
        assert_eq!(g.payoff_at(0, 0, idx("0*")), 0.0);

        let gp = build_tilde_half(Side::Plus, h);
        let idxp = |name: &str| gp.state_index(name).unwrap();
        let ep = gp.entries(0, 0, idxp("+"));
        assert_eq!(ep.len(), 3);
        assert!((ep[0].prob - 1.0 / 3.0).abs() < 1e-15);
        assert!((ep[1].prob - 2.0 * (1.0 - h) / 3.0).abs() < 1e-15);
        assert!((ep[2].prob - 2.0 * h / 3.0).abs() < 1e-15);

        // At h = 1 the delta self-loops of live states vanish.
        let g1 = build_tilde_half(Side::Minus, 1.0);
        let eq = g1.entries(1, 0, 0);
        assert_eq!(eq.len(), 1);
        assert_eq!(eq[0].prob, 1.0);
    }

    /// The minus half-game at k = 0 is the MINUS side of the six-state game
    /// with `++` relabelled to an absorbing zero-payoff state.
    #[test]
    fn half_minus_is_relabelled_g1_restriction() {
        let g1 = build_g1();
        let half = build_half(Side::Minus, 0.0);
        let g1_rows = g1.dynamics.rows();
        let h_rows = half.dynamics.rows();
        // map: - -> -, -- -> --, -* -> -*, ++ -> k* ; other states unused
        let map = |s: usize| match G1_STATES[s] {
            "-" => Some(0),
            "--" => Some(1),
            "-*" => Some(2),
            "++" => Some(3),
            _ => None,
        };
        for (s6, &name) in G1_STATES.iter().enumerate() {
            if !matches!(name, "-" | "--") {
                continue;
            }
            let s4 = map(s6).unwrap();
            for i in 0..3 {
                for j in 0..2 {
                    let mut expect = vec![0.0; 4];
                    for (sp6, &v) in g1_rows[s6][i][j].iter().enumerate() {
                        if v != 0.0 {
                            expect[map(sp6).expect("reachable state must map")] += v;
                        }
                    }
                    assert_eq!(h_rows[s4][i][j], expect, "state {name} ({i},{j})");
                }
            }
        }
        // payoffs match with k* at 0
        assert_eq!(half.payoff[0][0][0], -1.0);
        assert_eq!(half.payoff[3][0][0], 0.0);
    }

    #[test]
    fn perfect_test_shape() {
        let g = build_perfect_test();
        assert!(g.is_perfect_observation());
        assert_eq!(max_step(&g).unwrap(), 1.0);
    }
}
