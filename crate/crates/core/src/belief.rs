//! Public-belief reduction: expected payoffs, signal probabilities,
//! Bayesian posteriors, and the belief drift `p * q` used by the limit PDE.
//!
//! A [`Belief`] is the players' common posterior over states given the
//! public history; one stage of play maps it to a finite set of
//! [`BeliefBranch`]es, one per signal with positive probability.

use thiserror::Error;

use crate::game_model::{Dynamics, GeneralSignalGame, PartitionSignalGame, SignalId, StateId};

/// Negative dust below this magnitude is clamped to zero on construction.
pub const NEGATIVE_DUST: f64 = 1e-14;
/// Mass tolerance for a valid belief.
pub const MASS_TOL: f64 = 1e-12;
/// Rounding quantum for hashing posteriors in solver caches.
pub const HASH_QUANTUM: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("weights sum to {0}, not 1")]
    BadMass(f64),
    #[error("weight {0} at index {1} is negative")]
    Negative(f64, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("actions not admissible: {0}")]
    ActionNotAdmissible(String),
}

/// Probability vector over the states of a game.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    weights: Vec<f64>,
}

impl Belief {
    /// Validates mass and sign, clamping arithmetic dust in `[-1e-14, 0)`
    /// and renormalizing.
    pub fn new(mut weights: Vec<f64>) -> Result<Belief, BeliefError> {
        for (i, w) in weights.iter_mut().enumerate() {
            if *w < 0.0 {
                if *w < -NEGATIVE_DUST {
                    return Err(BeliefError::Negative(*w, i));
                }
                *w = 0.0;
            }
        }
        let mass: f64 = weights.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(BeliefError::BadMass(mass));
        }
        for w in weights.iter_mut() {
            *w /= mass;
        }
        Ok(Belief { weights })
    }

    pub fn point(n: usize, s: StateId) -> Belief {
        let mut weights = vec![0.0; n];
        weights[s] = 1.0;
        Belief { weights }
    }

    /// Build from nonnegative weights of arbitrary positive mass, dividing
    /// by the total. Used when snapping beliefs to a quantization lattice.
    pub fn renormalized(mut weights: Vec<f64>) -> Result<Belief, BeliefError> {
        for (i, w) in weights.iter_mut().enumerate() {
            if *w < 0.0 {
                if *w < -NEGATIVE_DUST {
                    return Err(BeliefError::Negative(*w, i));
                }
                *w = 0.0;
            }
        }
        let mass: f64 = weights.iter().sum();
        if mass <= 0.0 {
            return Err(BeliefError::BadMass(mass));
        }
        for w in weights.iter_mut() {
            *w /= mass;
        }
        Ok(Belief { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn get(&self, s: StateId) -> f64 {
        self.weights[s]
    }

    pub fn support(&self) -> impl Iterator<Item = StateId> + '_ {
        self.weights.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(s, _)| s)
    }

    /// Cache key after rounding coordinates to `quantum`, so posteriors that
    /// differ only by floating-point noise unify.
    pub fn quantize(&self, quantum: f64) -> Vec<u64> {
        self.weights.iter().map(|w| (w / quantum).round() as u64).collect()
    }

    /// Signal class of the support for a partition game, or an error when
    /// the support straddles classes.
    pub fn support_class(&self, g: &PartitionSignalGame) -> Result<SignalId, BeliefError> {
        let mut class = None;
        for s in self.support() {
            match class {
                None => class = Some(g.signal_of(s)),
                Some(c) if c != g.signal_of(s) => {
                    return Err(BeliefError::ActionNotAdmissible(
                        "belief support spans more than one signal class".into(),
                    ))
                }
                _ => {}
            }
        }
        class.ok_or_else(|| BeliefError::ActionNotAdmissible("empty belief support".into()))
    }
}

/// One posterior branch: the emitted signal, its probability, and the
/// Bayesian update given that signal.
#[derive(Debug, Clone)]
pub struct BeliefBranch {
    pub signal: SignalId,
    pub prob: f64,
    pub posterior: Belief,
}

// ---------------------------------------------------------------------------
// Partition games
// ---------------------------------------------------------------------------

/// `sum_s p(s) g(i, j, s)` with `(i, j)` local to the support's class.
pub fn expected_payoff_partition(
    g: &PartitionSignalGame,
    p: &Belief,
    i: usize,
    j: usize,
) -> Result<f64, BeliefError> {
    let class = p.support_class(g)?;
    let (ni, nj) = g.n_actions(class);
    if i >= ni || j >= nj {
        return Err(BeliefError::ActionNotAdmissible(format!(
            "action ({i},{j}) outside {ni}x{nj} class"
        )));
    }
    Ok(p.support().map(|s| p.get(s) * g.payoff[s][i][j]).sum())
}

/// Posterior branches for a partition game in transition form. Signals with
/// zero probability are omitted (an unreachable branch contributes nothing
/// to any expectation).
pub fn branch_partition(
    g: &PartitionSignalGame,
    p: &Belief,
    i: usize,
    j: usize,
) -> Result<Vec<BeliefBranch>, BeliefError> {
    let class = p.support_class(g)?;
    let (ni, nj) = g.n_actions(class);
    if i >= ni || j >= nj {
        return Err(BeliefError::ActionNotAdmissible(format!(
            "action ({i},{j}) outside {ni}x{nj} class"
        )));
    }
    let rows = match &g.dynamics {
        Dynamics::Transition(rows) => rows,
        Dynamics::Kernel(_) => {
            return Err(BeliefError::ActionNotAdmissible(
                "branching needs the game in transition form".into(),
            ))
        }
    };
    let n = g.n_states();
    let mut flow = vec![0.0; n];
    for s in p.support() {
        let w = p.get(s);
        for (sp, &q) in rows[s][i][j].iter().enumerate() {
            flow[sp] += w * q;
        }
    }
    collect_branches(g.signals.len(), n, |sp| g.signal_of(sp), &flow)
}

/// `p * q(i, j)`: the instantaneous belief drift; entries sum to zero.
pub fn drift(
    g: &PartitionSignalGame,
    p: &Belief,
    i: usize,
    j: usize,
) -> Result<Vec<f64>, BeliefError> {
    let rows = match &g.dynamics {
        Dynamics::Kernel(rows) => rows,
        Dynamics::Transition(_) => {
            return Err(BeliefError::DimensionMismatch("drift needs kernel form".into()))
        }
    };
    let class = p.support_class(g)?;
    let (ni, nj) = g.n_actions(class);
    if i >= ni || j >= nj {
        return Err(BeliefError::ActionNotAdmissible(format!(
            "action ({i},{j}) outside {ni}x{nj} class"
        )));
    }
    let n = g.n_states();
    if p.len() != n {
        return Err(BeliefError::DimensionMismatch(format!(
            "belief length {} vs {} states",
            p.len(),
            n
        )));
    }
    let mut out = vec![0.0; n];
    for s in p.support() {
        let w = p.get(s);
        for (sp, &q) in rows[s][i][j].iter().enumerate() {
            out[sp] += w * q;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// General games
// ---------------------------------------------------------------------------

pub fn expected_payoff_general(
    g: &GeneralSignalGame,
    p: &Belief,
    i: usize,
    j: usize,
) -> Result<f64, BeliefError> {
    if i >= g.actions1.len() || j >= g.actions2.len() {
        return Err(BeliefError::ActionNotAdmissible(format!("action ({i},{j})")));
    }
    Ok(p.support().map(|s| p.get(s) * g.payoff_at(i, j, s)).sum())
}

pub fn branch_general(
    g: &GeneralSignalGame,
    p: &Belief,
    i: usize,
    j: usize,
) -> Result<Vec<BeliefBranch>, BeliefError> {
    if i >= g.actions1.len() || j >= g.actions2.len() {
        return Err(BeliefError::ActionNotAdmissible(format!("action ({i},{j})")));
    }
    let n = g.n_states();
    let na = g.signals.len();
    // joint[signal][state'] = P(next = state', signal)
    let mut joint = vec![0.0; na * n];
    for s in p.support() {
        let w = p.get(s);
        for e in g.entries(i, j, s) {
            joint[e.signal * n + e.state] += w * e.prob;
        }
    }
    let mut out = Vec::new();
    for a in 0..na {
        let slice = &joint[a * n..(a + 1) * n];
        let prob: f64 = slice.iter().sum();
        if prob <= 0.0 {
            continue;
        }
        let posterior = Belief::new(slice.iter().map(|&m| m / prob).collect())
            .expect("posterior of positive-probability signal is a distribution");
        out.push(BeliefBranch { signal: a, prob, posterior });
    }
    Ok(out)
}

fn collect_branches(
    na: usize,
    n: usize,
    signal_of: impl Fn(StateId) -> SignalId,
    flow: &[f64],
) -> Result<Vec<BeliefBranch>, BeliefError> {
    let mut out = Vec::new();
    for a in 0..na {
        let prob: f64 = (0..n).filter(|&sp| signal_of(sp) == a).map(|sp| flow[sp]).sum();
        if prob <= 0.0 {
            continue;
        }
        let mut w = vec![0.0; n];
        for sp in 0..n {
            if signal_of(sp) == a {
                w[sp] = flow[sp] / prob;
            }
        }
        let posterior =
            Belief::new(w).expect("posterior of positive-probability signal is a distribution");
        out.push(BeliefBranch { signal: a, prob, posterior });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paper_games;
    use crate::rng::Rng;

    #[test]
    fn belief_construction_rules() {
        assert!(Belief::new(vec![0.5, 0.5]).is_ok());
        assert!(Belief::new(vec![0.5, 0.4]).is_err());
        assert!(Belief::new(vec![1.0 + 5e-15, -5e-15]).is_ok());
        assert!(Belief::new(vec![1.1, -0.1]).is_err());
    }

    #[test]
    fn payoff_on_plus_side_is_one() {
        let g = paper_games::build_g1();
        let plus = g.state_index("+").unwrap();
        let pp = g.state_index("++").unwrap();
        let mut w = vec![0.0; 6];
        w[plus] = 0.5;
        w[pp] = 0.5;
        let p = Belief::new(w).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(expected_payoff_partition(&g, &p, i, j).unwrap(), 1.0);
            }
        }
        let mm = Belief::point(6, g.state_index("--").unwrap());
        assert_eq!(expected_payoff_partition(&g, &mm, 0, 0).unwrap(), -1.0);
    }

    #[test]
    fn cross_class_support_rejected() {
        let g = paper_games::build_g1();
        let p = Belief::new(vec![0.5, 0.0, 0.0, 0.5, 0.0, 0.0]).unwrap();
        assert!(matches!(
            expected_payoff_partition(&g, &p, 0, 0),
            Err(BeliefError::ActionNotAdmissible(_))
        ));
    }

    // Branches of the two-signal game at belief (1-p on -, p on --) under C:
    // alpha and beta each have probability 1/2; the posterior mass on `--`
    // is p/2 after alpha and 1 after beta.
    #[test]
    fn g1_tilde_branches_under_c() {
        let g = paper_games::build_g1_tilde();
        let minus = g.state_index("-").unwrap();
        let mm = g.state_index("--").unwrap();
        let c = 0;
        let p_val = 0.4;
        let mut w = vec![0.0; 6];
        w[minus] = 1.0 - p_val;
        w[mm] = p_val;
        let p = Belief::new(w).unwrap();
        let mut branches = branch_general(&g, &p, c, c).unwrap();
        branches.sort_by_key(|b| b.signal);
        assert_eq!(branches.len(), 2);
        assert!((branches[0].prob - 0.5).abs() < 1e-15);
        assert!((branches[1].prob - 0.5).abs() < 1e-15);
        assert!((branches[0].posterior.get(mm) - p_val / 2.0).abs() < 1e-15);
        assert!((branches[1].posterior.get(mm) - 1.0).abs() < 1e-15);
    }

    // Same check for the three-signal stage-duration variant: posteriors
    // p - hp/2 after alpha and p + h - hp after beta.
    #[test]
    fn tilde_half_minus_branches() {
        let g = paper_games::build_tilde_half(crate::Side::Minus, 0.2);
        let h = 0.2;
        let mm = g.state_index("--").unwrap();
        let m = g.state_index("-").unwrap();
        let p_val = 0.7;
        let mut w = vec![0.0; 4];
        w[m] = 1.0 - p_val;
        w[mm] = p_val;
        let p = Belief::new(w).unwrap();
        let mut branches = branch_general(&g, &p, 0, 0).unwrap();
        branches.sort_by_key(|b| b.signal);
        assert_eq!(branches.len(), 2);
        assert!((branches[0].prob - 0.5).abs() < 1e-15);
        assert!((branches[0].posterior.get(mm) - (p_val - h * p_val / 2.0)).abs() < 1e-15);
        assert!((branches[1].posterior.get(mm) - (p_val + h - h * p_val)).abs() < 1e-15);
    }

    #[test]
    fn deterministic_transition_single_branch() {
        let g = paper_games::build_g1_tilde();
        let mm = g.state_index("--").unwrap();
        let q = 1;
        let p = Belief::point(6, mm);
        let branches = branch_general(&g, &p, q, q).unwrap();
        assert_eq!(branches.len(), 1);
        assert_eq!(branches[0].prob, 1.0);
        let star = g.state_index("-*").unwrap();
        assert_eq!(branches[0].posterior.get(star), 1.0);
    }

    // Drift rows quoted from the half-game kernel: (T,L) gives
    // (p2/2, -p2/2, 0, 0) and (Q,L) gives (-p1, -p2, p2, p1).
    #[test]
    fn half_game_drift_rows() {
        let g = paper_games::build_half(crate::Side::Minus, 0.0);
        let p = Belief::new(vec![0.3, 0.7, 0.0, 0.0]).unwrap();
        let d_tl = drift(&g, &p, 0, 0).unwrap();
        assert_eq!(d_tl, vec![0.35, -0.35, 0.0, 0.0]);
        let d_ql = drift(&g, &p, 2, 0).unwrap();
        assert_eq!(d_ql, vec![-0.3, -0.7, 0.7, 0.3]);
        assert!(d_ql.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn zero_kernel_zero_drift() {
        let mut g = paper_games::build_half(crate::Side::Minus, 0.0);
        if let Dynamics::Kernel(rows) = &mut g.dynamics {
            for per_state in rows.iter_mut() {
                for per_i in per_state.iter_mut() {
                    for row in per_i.iter_mut() {
                        row.iter_mut().for_each(|v| *v = 0.0);
                    }
                }
            }
        }
        let p = Belief::new(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        assert_eq!(drift(&g, &p, 0, 0).unwrap(), vec![0.0; 4]);
    }

    /// Law of total probability: branch-weighted posteriors reproduce the
    /// one-stage marginal, fuzzed over random general games.
    #[test]
    fn branches_respect_total_probability() {
        let mut rng = Rng::seeded(5);
        for _ in 0..50 {
            let g = random_general(&mut rng, 3, 2);
            let mut w: Vec<f64> = (0..3).map(|_| rng.range(0.01, 1.0)).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            let p = Belief::new(w.clone()).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let mut marginal = vec![0.0; 3];
                    for s in 0..3 {
                        for e in g.entries(i, j, s) {
                            marginal[e.state] += w[s] * e.prob;
                        }
                    }
                    let mut from_branches = vec![0.0; 3];
                    let mut mass = 0.0;
                    for b in branch_general(&g, &p, i, j).unwrap() {
                        mass += b.prob;
                        for s in 0..3 {
                            from_branches[s] += b.prob * b.posterior.get(s);
                        }
                    }
                    assert!((mass - 1.0).abs() < 1e-12);
                    for s in 0..3 {
                        assert!((from_branches[s] - marginal[s]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    fn random_general(rng: &mut Rng, ns: usize, na: usize) -> GeneralSignalGame {
        let n_sign = 2;
        let mut transition = Vec::new();
        let mut payoff = Vec::new();
        for _ in 0..na * na {
            for _ in 0..ns {
                payoff.push(rng.range(-1.0, 1.0));
                let k = 1 + (rng.uniform() * 3.0) as usize;
                let mut probs: Vec<f64> = (0..k).map(|_| rng.range(0.05, 1.0)).collect();
                let total: f64 = probs.iter().sum();
                probs.iter_mut().for_each(|p| *p /= total);
                let mut entries = Vec::new();
                for &pr in &probs {
                    loop {
                        let state = (rng.uniform() * ns as f64) as usize % ns;
                        let signal = (rng.uniform() * n_sign as f64) as usize % n_sign;
                        if !entries
                            .iter()
                            .any(|e: &GeneralEntry| e.state == state && e.signal == signal)
                        {
                            entries.push(GeneralEntry { state, signal, prob: pr });
                            break;
                        }
                    }
                }
                transition.push(entries);
            }
        }
        GeneralSignalGame {
            states: (0..ns).map(|s| format!("s{s}")).collect(),
            signals: (0..n_sign).map(|a| format!("a{a}")).collect(),
            actions1: vec!["x".into(), "y".into()],
            actions2: vec!["u".into(), "v".into()],
            payoff,
            transition,
            duplicate1: vec![false; na],
            duplicate2: vec![false; na],
        }
    }

    use crate::game_model::GeneralEntry;
}
