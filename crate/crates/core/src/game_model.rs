//! Core data types for the two game constructions, validation, the
//! kernel/transition duality, and the maps between the constructions.
//!
//! Two models live here:
//!
//! * [`PartitionSignalGame`] — the public signal is a partition cell of the
//!   state; action sets are per signal class; dynamics are stored either as
//!   a transition tensor or as a kernel (rates, rows summing to zero).
//! * [`GeneralSignalGame`] — transitions emit `(next state, signal)` pairs
//!   jointly, with global action sets.
//!
//! Games are immutable after construction and safe to share across solver
//! threads.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type StateId = usize;
pub type SignalId = usize;

/// Tolerance for stochasticity checks (row sums, nonnegativity).
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("stage duration {h} exceeds the largest admissible step {max}")]
    StepTooLarge { h: f64, max: f64 },
    #[error("unknown name `{0}` in {1}")]
    UnknownName(String, String),
    #[error("game file is malformed: {0}")]
    Malformed(String),
    #[error("operation requires {0}")]
    WrongForm(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Partition-signal games
// ---------------------------------------------------------------------------

/// Dynamics of a partition game: one row per admissible `(i, j)` pair at
/// each state, each row a vector over all states.
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    /// Row-stochastic transition probabilities.
    Transition(Vec<Vec<Vec<Vec<f64>>>>),
    /// Rates: rows sum to zero, off-diagonal entries nonnegative.
    Kernel(Vec<Vec<Vec<Vec<f64>>>>),
}

impl Dynamics {
    pub fn rows(&self) -> &Vec<Vec<Vec<Vec<f64>>>> {
        match self {
            Dynamics::Transition(r) | Dynamics::Kernel(r) => r,
        }
    }

    pub fn is_kernel(&self) -> bool {
        matches!(self, Dynamics::Kernel(_))
    }
}

/// Zero-sum stochastic game in which the public signal is `f(state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSignalGame {
    pub states: Vec<String>,
    pub signals: Vec<String>,
    /// Signal of each state (total map).
    pub partition: Vec<SignalId>,
    /// Player 1 action names per signal class.
    pub actions1: Vec<Vec<String>>,
    /// Player 2 action names per signal class.
    pub actions2: Vec<Vec<String>>,
    /// `payoff[state][i][j]` with `(i, j)` local to the state's class.
    pub payoff: Vec<Vec<Vec<f64>>>,
    /// `rows[state][i][j][next]`.
    pub dynamics: Dynamics,
}

impl PartitionSignalGame {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn signal_of(&self, s: StateId) -> SignalId {
        self.partition[s]
    }

    /// States belonging to a signal class, in declaration order.
    pub fn class_states(&self, a: SignalId) -> Vec<StateId> {
        (0..self.n_states()).filter(|&s| self.partition[s] == a).collect()
    }

    pub fn n_actions(&self, a: SignalId) -> (usize, usize) {
        (self.actions1[a].len(), self.actions2[a].len())
    }

    pub fn state_index(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name)
    }

    /// Largest absolute payoff; solver values stay within `[-G, G]`.
    pub fn payoff_bound(&self) -> f64 {
        self.payoff
            .iter()
            .flat_map(|m| m.iter().flat_map(|r| r.iter()))
            .fold(0.0_f64, |acc, &g| acc.max(g.abs()))
    }

    /// The game is state-blind when there is a single signal.
    pub fn is_state_blind(&self) -> bool {
        self.signals.len() == 1
    }

    /// Every signal class is a singleton, i.e. the state is observed.
    pub fn is_perfect_observation(&self) -> bool {
        (0..self.signals.len()).all(|a| self.class_states(a).len() == 1)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport::default();
        let n = self.n_states();
        for a in 0..self.signals.len() {
            if self.class_states(a).is_empty() {
                rep.warnings.push(format!("signal `{}` has no states", self.signals[a]));
            }
            if self.actions1[a].is_empty() || self.actions2[a].is_empty() {
                rep.violations
                    .push(format!("signal `{}` has an empty action set", self.signals[a]));
            }
        }
        for s in 0..n {
            let (ni, nj) = self.n_actions(self.signal_of(s));
            if self.payoff[s].len() != ni || self.payoff[s].iter().any(|r| r.len() != nj) {
                rep.violations.push(format!("payoff shape at state `{}`", self.states[s]));
            }
            let rows = &self.dynamics.rows()[s];
            if rows.len() != ni || rows.iter().any(|r| r.len() != nj) {
                rep.violations.push(format!("dynamics shape at state `{}`", self.states[s]));
                continue;
            }
            for (i, per_i) in rows.iter().enumerate() {
                for (j, row) in per_i.iter().enumerate() {
                    if row.len() != n {
                        rep.violations.push(format!(
                            "row length at state `{}` action ({i},{j})",
                            self.states[s]
                        ));
                        continue;
                    }
                    let sum: f64 = row.iter().sum();
                    match &self.dynamics {
                        Dynamics::Transition(_) => {
                            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                                rep.violations.push(format!(
                                    "transition row sum {sum} at state `{}` action ({i},{j})",
                                    self.states[s]
                                ));
                            }
                            if let Some(k) = row.iter().position(|&p| p < -STOCHASTIC_TOL) {
                                rep.violations.push(format!(
                                    "negative transition probability {} at state `{}` action ({i},{j}) -> `{}`",
                                    row[k], self.states[s], self.states[k]
                                ));
                            }
                        }
                        Dynamics::Kernel(_) => {
                            if sum.abs() > STOCHASTIC_TOL {
                                rep.violations.push(format!(
                                    "kernel row sum {sum} at state `{}` action ({i},{j})",
                                    self.states[s]
                                ));
                            }
                            for (k, &q) in row.iter().enumerate() {
                                if k != s && q < -STOCHASTIC_TOL {
                                    rep.violations.push(format!(
                                        "negative off-diagonal rate {q} at state `{}` action ({i},{j}) -> `{}`",
                                        self.states[s], self.states[k]
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        rep
    }

    /// Convert to transition form at stage duration 1 (`P = I + q`).
    /// Identity if already in transition form.
    pub fn to_transition_form(&self) -> Result<PartitionSignalGame, GameError> {
        match &self.dynamics {
            Dynamics::Transition(_) => Ok(self.clone()),
            Dynamics::Kernel(rows) => {
                let p = kernel_to_transition(rows, 1.0)?;
                Ok(PartitionSignalGame { dynamics: Dynamics::Transition(p), ..self.clone() })
            }
        }
    }
}

/// Violations make a game unusable; warnings are advisory.
#[derive(Debug, Default, Clone)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `P = I + h q`, rejecting steps that would make a diagonal negative.
pub fn kernel_to_transition(
    q: &[Vec<Vec<Vec<f64>>>],
    h: f64,
) -> Result<Vec<Vec<Vec<Vec<f64>>>>, GameError> {
    assert!(h > 0.0, "stage duration must be positive");
    let mut out = q.to_vec();
    for (s, per_state) in out.iter_mut().enumerate() {
        for per_i in per_state.iter_mut() {
            for row in per_i.iter_mut() {
                for (k, v) in row.iter_mut().enumerate() {
                    *v *= h;
                    if k == s {
                        *v += 1.0;
                    }
                }
                if row[s] < -STOCHASTIC_TOL {
                    let max = max_step_rows(q);
                    return Err(GameError::StepTooLarge { h, max });
                }
                row[s] = row[s].max(0.0);
            }
        }
    }
    Ok(out)
}

/// `q = P - I`; inverse of [`kernel_to_transition`] at `h = 1`.
pub fn transition_to_kernel(p: &[Vec<Vec<Vec<f64>>>]) -> Vec<Vec<Vec<Vec<f64>>>> {
    let mut out = p.to_vec();
    for (s, per_state) in out.iter_mut().enumerate() {
        for per_i in per_state.iter_mut() {
            for row in per_i.iter_mut() {
                row[s] -= 1.0;
            }
        }
    }
    out
}

/// Largest admissible Euler step: `1 / max |q(i,j)(s,s)|`, `None` (no bound)
/// for the zero kernel.
pub fn max_step_rows(q: &[Vec<Vec<Vec<f64>>>]) -> f64 {
    let mut rate: f64 = 0.0;
    for (s, per_state) in q.iter().enumerate() {
        for per_i in per_state {
            for row in per_i {
                rate = rate.max(row[s].abs());
            }
        }
    }
    if rate == 0.0 {
        f64::INFINITY
    } else {
        1.0 / rate
    }
}

// ---------------------------------------------------------------------------
// General-signal games
// ---------------------------------------------------------------------------

/// One transition branch: next state, emitted signal, probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralEntry {
    pub state: StateId,
    pub signal: SignalId,
    pub prob: f64,
}

/// Zero-sum stochastic game in which transitions emit `(state, signal)`
/// pairs jointly; action sets are global.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralSignalGame {
    pub states: Vec<String>,
    pub signals: Vec<String>,
    pub actions1: Vec<String>,
    pub actions2: Vec<String>,
    /// `payoff[i][j][state]` flattened as `(i * nj + j) * ns + state`.
    pub payoff: Vec<f64>,
    /// `transition[(i * nj + j) * ns + state]`.
    pub transition: Vec<Vec<GeneralEntry>>,
    /// Global player-1 actions that exist only as padding duplicates.
    pub duplicate1: Vec<bool>,
    pub duplicate2: Vec<bool>,
}

impl GeneralSignalGame {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, s: StateId) -> usize {
        (i * self.actions2.len() + j) * self.n_states() + s
    }

    #[inline]
    pub fn payoff_at(&self, i: usize, j: usize, s: StateId) -> f64 {
        self.payoff[self.idx(i, j, s)]
    }

    #[inline]
    pub fn entries(&self, i: usize, j: usize, s: StateId) -> &[GeneralEntry] {
        &self.transition[self.idx(i, j, s)]
    }

    pub fn state_index(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name)
    }

    pub fn payoff_bound(&self) -> f64 {
        self.payoff.iter().fold(0.0_f64, |acc, &g| acc.max(g.abs()))
    }

    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport::default();
        let (ni, nj, ns) = (self.actions1.len(), self.actions2.len(), self.n_states());
        if ni == 0 || nj == 0 {
            rep.violations.push("empty global action set".into());
            return rep;
        }
        for i in 0..ni {
            for j in 0..nj {
                for s in 0..ns {
                    let entries = self.entries(i, j, s);
                    let sum: f64 = entries.iter().map(|e| e.prob).sum();
                    if (sum - 1.0).abs() > STOCHASTIC_TOL {
                        rep.violations.push(format!(
                            "transition mass {sum} at state `{}` action ({i},{j})",
                            self.states[s]
                        ));
                    }
                    let mut seen = std::collections::BTreeSet::new();
                    for e in entries {
                        if e.prob < 0.0 {
                            rep.violations.push(format!(
                                "negative branch probability {} at state `{}` action ({i},{j})",
                                e.prob, self.states[s]
                            ));
                        }
                        if !seen.insert((e.state, e.signal)) {
                            rep.violations.push(format!(
                                "duplicate (state, signal) branch at state `{}` action ({i},{j})",
                                self.states[s]
                            ));
                        }
                    }
                }
            }
        }
        rep
    }
}

// ---------------------------------------------------------------------------
// partition -> general embedding
// ---------------------------------------------------------------------------

/// Embed a partition game into the general model: each transition
/// `(s -> s', p)` becomes the branch `(s', f(s'), p)`, and per-class action
/// sets are padded to global ones by duplicating the lexicographically
/// first action of short classes.
pub fn partition_to_general(g: &PartitionSignalGame) -> Result<GeneralSignalGame, GameError> {
    let g = g.to_transition_form()?;
    let ns = g.n_states();
    let max1 = g.actions1.iter().map(Vec::len).max().unwrap();
    let max2 = g.actions2.iter().map(Vec::len).max().unwrap();

    let global_names = |per_class: &[Vec<String>], len: usize, prefix: &str| -> Vec<String> {
        (0..len)
            .map(|k| {
                let names: Vec<&String> =
                    per_class.iter().filter(|c| k < c.len()).map(|c| &c[k]).collect();
                if !names.is_empty() && names.iter().all(|n| *n == names[0]) {
                    names[0].clone()
                } else {
                    format!("{prefix}{k}")
                }
            })
            .collect()
    };
    let actions1 = global_names(&g.actions1, max1, "i");
    let actions2 = global_names(&g.actions2, max2, "j");

    // Local action backing each global slot, per class: beyond the class's
    // own actions the lexicographically first one is duplicated.
    let slot_map = |class: &[String], len: usize| -> (Vec<usize>, Vec<bool>) {
        let lex_first =
            (0..class.len()).min_by(|&a, &b| class[a].cmp(&class[b])).unwrap_or(0);
        let mut map = Vec::with_capacity(len);
        let mut dup = vec![false; len];
        for k in 0..len {
            if k < class.len() {
                map.push(k);
            } else {
                map.push(lex_first);
                dup[k] = true;
            }
        }
        (map, dup)
    };

    let mut duplicate1 = vec![false; max1];
    let mut duplicate2 = vec![false; max2];
    let mut payoff = vec![0.0; max1 * max2 * ns];
    let mut transition = vec![Vec::new(); max1 * max2 * ns];
    for s in 0..ns {
        let a = g.signal_of(s);
        let (m1, d1) = slot_map(&g.actions1[a], max1);
        let (m2, d2) = slot_map(&g.actions2[a], max2);
        for (k, &d) in d1.iter().enumerate() {
            duplicate1[k] |= d;
        }
        for (k, &d) in d2.iter().enumerate() {
            duplicate2[k] |= d;
        }
        for gi in 0..max1 {
            for gj in 0..max2 {
                let (i, j) = (m1[gi], m2[gj]);
                let flat = (gi * max2 + gj) * ns + s;
                payoff[flat] = g.payoff[s][i][j];
                let row = &g.dynamics.rows()[s][i][j];
                transition[flat] = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(sp, &p)| GeneralEntry { state: sp, signal: g.partition[sp], prob: p })
                    .collect();
            }
        }
    }
    Ok(GeneralSignalGame {
        states: g.states.clone(),
        signals: g.signals.clone(),
        actions1,
        actions2,
        payoff,
        transition,
        duplicate1,
        duplicate2,
    })
}

// ---------------------------------------------------------------------------
// Split dynamics (marginal + signalling) and the equivalence maps
// ---------------------------------------------------------------------------

/// The second general construction: a state marginal plus a signalling
/// function defined for all state pairs, including zero-probability ones.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDynamics {
    pub states: Vec<String>,
    pub signals: Vec<String>,
    pub actions1: Vec<String>,
    pub actions2: Vec<String>,
    pub payoff: Vec<f64>,
    /// `marginal[(i*nj+j)*ns+s][s']`: distribution of the next state.
    pub marginal: Vec<Vec<f64>>,
    /// `signalling[(i*nj+j)*ns+s][s'][signal]`: distribution over signals,
    /// total even where the marginal vanishes.
    pub signalling: Vec<Vec<Vec<f64>>>,
}

/// Split `P1` into a marginal and a signalling function. Zero-probability
/// state pairs get the uniform distribution over signals; use
/// [`split_general_with_default`] to override.
pub fn split_general(gg: &GeneralSignalGame) -> SplitDynamics {
    let na = gg.signals.len();
    let uniform = vec![1.0 / na as f64; na];
    split_general_with_default(gg, |_, _, _, _| uniform.clone())
}

pub fn split_general_with_default(
    gg: &GeneralSignalGame,
    default: impl Fn(usize, usize, StateId, StateId) -> Vec<f64>,
) -> SplitDynamics {
    let (ni, nj, ns, na) =
        (gg.actions1.len(), gg.actions2.len(), gg.n_states(), gg.signals.len());
    let mut marginal = vec![vec![0.0; ns]; ni * nj * ns];
    let mut signalling = vec![vec![Vec::new(); ns]; ni * nj * ns];
    for i in 0..ni {
        for j in 0..nj {
            for s in 0..ns {
                let flat = (i * nj + j) * ns + s;
                let mut joint = vec![vec![0.0; na]; ns];
                for e in gg.entries(i, j, s) {
                    joint[e.state][e.signal] += e.prob;
                    marginal[flat][e.state] += e.prob;
                }
                for sp in 0..ns {
                    signalling[flat][sp] = if marginal[flat][sp] > 0.0 {
                        joint[sp].iter().map(|&p| p / marginal[flat][sp]).collect()
                    } else {
                        default(i, j, s, sp)
                    };
                }
            }
        }
    }
    SplitDynamics {
        states: gg.states.clone(),
        signals: gg.signals.clone(),
        actions1: gg.actions1.clone(),
        actions2: gg.actions2.clone(),
        payoff: gg.payoff.clone(),
        marginal,
        signalling,
    }
}

/// Recombine: `P1(s'; a) = P2(s') * f(s')(a)`, dropping zero-mass branches.
pub fn merge_split(sd: &SplitDynamics) -> GeneralSignalGame {
    let (ni, nj, ns) = (sd.actions1.len(), sd.actions2.len(), sd.states.len());
    let na = sd.signals.len();
    let mut transition = vec![Vec::new(); ni * nj * ns];
    for flat in 0..ni * nj * ns {
        let mut entries = Vec::new();
        for sp in 0..ns {
            let mass = sd.marginal[flat][sp];
            if mass == 0.0 {
                continue;
            }
            for a in 0..na {
                let p = mass * sd.signalling[flat][sp][a];
                if p > 0.0 {
                    entries.push(GeneralEntry { state: sp, signal: a, prob: p });
                }
            }
        }
        transition[flat] = entries;
    }
    GeneralSignalGame {
        states: sd.states.clone(),
        signals: sd.signals.clone(),
        actions1: sd.actions1.clone(),
        actions2: sd.actions2.clone(),
        payoff: sd.payoff.clone(),
        transition,
        duplicate1: vec![false; ni],
        duplicate2: vec![false; nj],
    }
}

// ---------------------------------------------------------------------------
// JSON game files
// ---------------------------------------------------------------------------

/// Either kind of game, as loaded from a file.
#[derive(Debug, Clone)]
pub enum AnyGame {
    Partition(PartitionSignalGame),
    General(GeneralSignalGame),
}

impl AnyGame {
    pub fn validate(&self) -> ValidationReport {
        match self {
            AnyGame::Partition(g) => g.validate(),
            AnyGame::General(g) => g.validate(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameFile {
    states: Vec<String>,
    signals: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    partition: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    general: bool,
    actions1: ActionsSpec,
    actions2: ActionsSpec,
    payoff: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    dynamics: DynamicsSpec,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ActionsSpec {
    Global(Vec<String>),
    PerSignal(BTreeMap<String, Vec<String>>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum DynamicsSpec {
    Kernel { rows: BTreeMap<String, BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>> },
    Transition {
        rows: BTreeMap<String, BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>>,
    },
    General {
        entries: BTreeMap<String, BTreeMap<String, BTreeMap<String, Vec<EntrySpec>>>>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntrySpec {
    state: String,
    signal: String,
    prob: f64,
}

pub fn from_json(text: &str) -> Result<AnyGame, GameError> {
    let file: GameFile = serde_json::from_str(text)?;
    build_game(file)
}

pub fn load_game(path: &std::path::Path) -> Result<AnyGame, GameError> {
    from_json(&std::fs::read_to_string(path)?)
}

fn lookup(names: &[String], name: &str, what: &str) -> Result<usize, GameError> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| GameError::UnknownName(name.to_string(), what.to_string()))
}

fn build_game(file: GameFile) -> Result<AnyGame, GameError> {
    if file.general == file.partition.is_some() {
        return Err(GameError::Malformed(
            "exactly one of `partition` and `general: true` is required".into(),
        ));
    }
    let states = file.states;
    let signals = file.signals;
    if file.general {
        let (actions1, actions2) = match (&file.actions1, &file.actions2) {
            (ActionsSpec::Global(a1), ActionsSpec::Global(a2)) => (a1.clone(), a2.clone()),
            _ => {
                return Err(GameError::Malformed(
                    "general games need global `actions1`/`actions2` arrays".into(),
                ))
            }
        };
        let (ni, nj, ns) = (actions1.len(), actions2.len(), states.len());
        let mut payoff = vec![0.0; ni * nj * ns];
        for (a1, per1) in &file.payoff {
            let i = lookup(&actions1, a1, "actions1")?;
            for (a2, per2) in per1 {
                let j = lookup(&actions2, a2, "actions2")?;
                for (st, &v) in per2 {
                    let s = lookup(&states, st, "states")?;
                    payoff[(i * nj + j) * ns + s] = v;
                }
            }
        }
        let DynamicsSpec::General { entries } = file.dynamics else {
            return Err(GameError::Malformed("general game needs `kind: \"general\"`".into()));
        };
        let mut transition = vec![Vec::new(); ni * nj * ns];
        for (a1, per1) in &entries {
            let i = lookup(&actions1, a1, "actions1")?;
            for (a2, per2) in per1 {
                let j = lookup(&actions2, a2, "actions2")?;
                for (st, branch) in per2 {
                    let s = lookup(&states, st, "states")?;
                    let mut list = Vec::with_capacity(branch.len());
                    for e in branch {
                        list.push(GeneralEntry {
                            state: lookup(&states, &e.state, "states")?,
                            signal: lookup(&signals, &e.signal, "signals")?,
                            prob: e.prob,
                        });
                    }
                    transition[(i * nj + j) * ns + s] = list;
                }
            }
        }
        Ok(AnyGame::General(GeneralSignalGame {
            duplicate1: vec![false; actions1.len()],
            duplicate2: vec![false; actions2.len()],
            states,
            signals,
            actions1,
            actions2,
            payoff,
            transition,
        }))
    } else {
        let part_map = file.partition.as_ref().unwrap();
        let mut partition = Vec::with_capacity(states.len());
        for st in &states {
            let sig = part_map
                .get(st)
                .ok_or_else(|| GameError::Malformed(format!("state `{st}` missing in partition")))?;
            partition.push(lookup(&signals, sig, "signals")?);
        }
        let per_signal = |spec: &ActionsSpec| -> Result<Vec<Vec<String>>, GameError> {
            match spec {
                ActionsSpec::Global(a) => Ok(vec![a.clone(); signals.len()]),
                ActionsSpec::PerSignal(m) => signals
                    .iter()
                    .map(|sig| {
                        m.get(sig).cloned().ok_or_else(|| {
                            GameError::Malformed(format!("signal `{sig}` missing in actions"))
                        })
                    })
                    .collect(),
            }
        };
        let actions1 = per_signal(&file.actions1)?;
        let actions2 = per_signal(&file.actions2)?;
        let ns = states.len();
        let mut payoff: Vec<Vec<Vec<f64>>> = (0..ns)
            .map(|s| {
                vec![vec![0.0; actions2[partition[s]].len()]; actions1[partition[s]].len()]
            })
            .collect();
        for (a1, per1) in &file.payoff {
            for (a2, per2) in per1 {
                for (st, &v) in per2 {
                    let s = lookup(&states, st, "states")?;
                    let cls = partition[s];
                    let i = lookup(&actions1[cls], a1, "actions1")?;
                    let j = lookup(&actions2[cls], a2, "actions2")?;
                    payoff[s][i][j] = v;
                }
            }
        }
        let (is_kernel, rows) = match file.dynamics {
            DynamicsSpec::Kernel { rows } => (true, rows),
            DynamicsSpec::Transition { rows } => (false, rows),
            DynamicsSpec::General { .. } => {
                return Err(GameError::Malformed(
                    "partition game cannot use `kind: \"general\"` dynamics".into(),
                ))
            }
        };
        let mut tensor: Vec<Vec<Vec<Vec<f64>>>> = (0..ns)
            .map(|s| {
                vec![
                    vec![vec![0.0; ns]; actions2[partition[s]].len()];
                    actions1[partition[s]].len()
                ]
            })
            .collect();
        for (a1, per1) in &rows {
            for (a2, per2) in per1 {
                for (st, row) in per2 {
                    let s = lookup(&states, st, "states")?;
                    let cls = partition[s];
                    let i = lookup(&actions1[cls], a1, "actions1")?;
                    let j = lookup(&actions2[cls], a2, "actions2")?;
                    for (st2, &v) in row {
                        let s2 = lookup(&states, st2, "states")?;
                        tensor[s][i][j][s2] = v;
                    }
                }
            }
        }
        let dynamics = if is_kernel { Dynamics::Kernel(tensor) } else { Dynamics::Transition(tensor) };
        Ok(AnyGame::Partition(PartitionSignalGame {
            states,
            signals,
            partition,
            actions1,
            actions2,
            payoff,
            dynamics,
        }))
    }
}

pub fn to_json(game: &AnyGame) -> String {
    let file = match game {
        AnyGame::Partition(g) => {
            let mut payoff: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>> =
                BTreeMap::new();
            let mut rows: BTreeMap<
                String,
                BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
            > = BTreeMap::new();
            for s in 0..g.n_states() {
                let cls = g.partition[s];
                for (i, n1) in g.actions1[cls].iter().enumerate() {
                    for (j, n2) in g.actions2[cls].iter().enumerate() {
                        payoff
                            .entry(n1.clone())
                            .or_default()
                            .entry(n2.clone())
                            .or_default()
                            .insert(g.states[s].clone(), g.payoff[s][i][j]);
                        let mut row = BTreeMap::new();
                        for (s2, &v) in g.dynamics.rows()[s][i][j].iter().enumerate() {
                            if v != 0.0 {
                                row.insert(g.states[s2].clone(), v);
                            }
                        }
                        rows.entry(n1.clone())
                            .or_default()
                            .entry(n2.clone())
                            .or_default()
                            .insert(g.states[s].clone(), row);
                    }
                }
            }
            GameFile {
                states: g.states.clone(),
                signals: g.signals.clone(),
                partition: Some(
                    g.states
                        .iter()
                        .enumerate()
                        .map(|(s, n)| (n.clone(), g.signals[g.partition[s]].clone()))
                        .collect(),
                ),
                general: false,
                actions1: ActionsSpec::PerSignal(
                    g.signals
                        .iter()
                        .cloned()
                        .zip(g.actions1.iter().cloned())
                        .collect(),
                ),
                actions2: ActionsSpec::PerSignal(
                    g.signals
                        .iter()
                        .cloned()
                        .zip(g.actions2.iter().cloned())
                        .collect(),
                ),
                payoff,
                dynamics: if g.dynamics.is_kernel() {
                    DynamicsSpec::Kernel { rows }
                } else {
                    DynamicsSpec::Transition { rows }
                },
            }
        }
        AnyGame::General(g) => {
            let mut payoff: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>> =
                BTreeMap::new();
            let mut entries: BTreeMap<
                String,
                BTreeMap<String, BTreeMap<String, Vec<EntrySpec>>>,
            > = BTreeMap::new();
            for (i, n1) in g.actions1.iter().enumerate() {
                for (j, n2) in g.actions2.iter().enumerate() {
                    for s in 0..g.n_states() {
                        payoff
                            .entry(n1.clone())
                            .or_default()
                            .entry(n2.clone())
                            .or_default()
                            .insert(g.states[s].clone(), g.payoff_at(i, j, s));
                        let list = g
                            .entries(i, j, s)
                            .iter()
                            .map(|e| EntrySpec {
                                state: g.states[e.state].clone(),
                                signal: g.signals[e.signal].clone(),
                                prob: e.prob,
                            })
                            .collect();
                        entries
                            .entry(n1.clone())
                            .or_default()
                            .entry(n2.clone())
                            .or_default()
                            .insert(g.states[s].clone(), list);
                    }
                }
            }
            GameFile {
                states: g.states.clone(),
                signals: g.signals.clone(),
                partition: None,
                general: true,
                actions1: ActionsSpec::Global(g.actions1.clone()),
                actions2: ActionsSpec::Global(g.actions2.clone()),
                payoff,
                dynamics: DynamicsSpec::General { entries },
            }
        }
    };
    serde_json::to_string_pretty(&file).expect("game serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paper_games;

    #[test]
    fn g1_validates_clean() {
        let g = paper_games::build_g1();
        let rep = g.validate();
        assert!(rep.is_ok(), "violations: {:?}", rep.violations);
        assert!(rep.warnings.is_empty());
    }

    #[test]
    fn bad_row_sum_reported() {
        let mut g = paper_games::build_g1().to_transition_form().unwrap();
        if let Dynamics::Transition(rows) = &mut g.dynamics {
            rows[0][0][0][0] -= 0.1;
        }
        let rep = g.validate();
        assert_eq!(rep.violations.len(), 1);
        assert!(rep.violations[0].contains("row sum"));
    }

    #[test]
    fn bad_kernel_sum_reported() {
        let mut g = paper_games::build_g1();
        if let Dynamics::Kernel(rows) = &mut g.dynamics {
            rows[0][0][0][0] += 0.1;
        }
        let rep = g.validate();
        assert_eq!(rep.violations.len(), 1);
        assert!(rep.violations[0].contains("kernel row sum"));
    }

    #[test]
    fn kernel_transition_round_trip() {
        let q = vec![vec![vec![vec![-1.0, 1.0], vec![0.0, 0.0]]], vec![vec![
            vec![0.0, 0.0],
            vec![1.0, -1.0],
        ]]];
        let p = kernel_to_transition(&q, 0.5).unwrap();
        assert_eq!(p[0][0][0], vec![0.5, 0.5]);
        let q2 = transition_to_kernel(&kernel_to_transition(&q, 1.0).unwrap());
        assert_eq!(q, q2);
    }

    #[test]
    fn step_too_large_rejected() {
        let q = vec![vec![vec![vec![-2.0, 2.0], vec![0.0, 0.0]]], vec![vec![
            vec![0.0, 0.0],
            vec![0.0, 0.0],
        ]]];
        match kernel_to_transition(&q, 1.0) {
            Err(GameError::StepTooLarge { max, .. }) => assert_eq!(max, 0.5),
            other => panic!("expected StepTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn max_step_cases() {
        let zero = vec![vec![vec![vec![0.0, 0.0]]], vec![vec![vec![0.0, 0.0]]]];
        assert!(max_step_rows(&zero).is_infinite());
        let g1 = paper_games::build_g1();
        if let Dynamics::Kernel(rows) = &g1.dynamics {
            assert_eq!(max_step_rows(rows), 1.0);
        }
    }

    #[test]
    fn partition_to_general_preserves_marginal() {
        let g = paper_games::build_g1().to_transition_form().unwrap();
        let gg = partition_to_general(&g).unwrap();
        assert!(gg.validate().is_ok());
        // Marginal over next states equals the partition game's row exactly.
        for s in 0..g.n_states() {
            let cls = g.signal_of(s);
            for i in 0..g.actions1[cls].len() {
                for j in 0..g.actions2[cls].len() {
                    let mut marginal = vec![0.0; g.n_states()];
                    for e in gg.entries(i, j, s) {
                        marginal[e.state] += e.prob;
                        assert_eq!(e.signal, g.partition[e.state]);
                    }
                    assert_eq!(&marginal, &g.dynamics.rows()[s][i][j]);
                }
            }
        }
    }

    #[test]
    fn padded_duplicate_rows_identical() {
        let g = paper_games::build_g1();
        let gg = partition_to_general(&g).unwrap();
        // MINUS classes have 2 player-2 actions vs 4 global: slots 2, 3 are
        // duplicates of the lexicographically first local action (L = slot 0).
        assert_eq!(gg.duplicate2, vec![false, false, true, true]);
        let minus = gg.state_index("--").unwrap();
        for i in 0..gg.actions1.len() {
            assert_eq!(gg.entries(i, 0, minus), gg.entries(i, 2, minus));
            assert_eq!(gg.entries(i, 0, minus), gg.entries(i, 3, minus));
        }
    }

    #[test]
    fn split_merge_round_trip() {
        let gg = paper_games::build_g1_tilde();
        let sd = split_general(&gg);
        let back = merge_split(&sd);
        for i in 0..gg.actions1.len() {
            for j in 0..gg.actions2.len() {
                for s in 0..gg.n_states() {
                    let mut orig: Vec<_> = gg.entries(i, j, s).to_vec();
                    let mut rt: Vec<_> = back.entries(i, j, s).to_vec();
                    let key = |e: &GeneralEntry| (e.state, e.signal);
                    orig.sort_by_key(key);
                    rt.sort_by_key(key);
                    assert_eq!(orig.len(), rt.len());
                    for (a, b) in orig.iter().zip(&rt) {
                        assert_eq!(key(a), key(b));
                        assert!((a.prob - b.prob).abs() <= 1e-15);
                    }
                }
            }
        }
    }

    // Values taken from the transition diagram of the two-signal game: under
    // C from `--` the branches are (-,a,1/4), (--,a,1/4), (--,b,1/2), so the
    // marginal is (1/4, 3/4) and the signalling ratios are 1 and (1/3, 2/3).
    #[test]
    fn split_g1_tilde_minus_minus() {
        let gg = paper_games::build_g1_tilde();
        let sd = split_general(&gg);
        let s = gg.state_index("--").unwrap();
        let m = gg.state_index("-").unwrap();
        let c = gg.actions1.iter().position(|a| a == "C").unwrap();
        let flat = (c * gg.actions2.len() + c) * gg.n_states() + s;
        assert!((sd.marginal[flat][m] - 0.25).abs() < 1e-15);
        assert!((sd.marginal[flat][s] - 0.75).abs() < 1e-15);
        let alpha = gg.signals.iter().position(|a| a == "alpha").unwrap();
        let beta = gg.signals.iter().position(|a| a == "beta").unwrap();
        assert!((sd.signalling[flat][m][alpha] - 1.0).abs() < 1e-15);
        assert!((sd.signalling[flat][s][alpha] - 1.0 / 3.0).abs() < 1e-15);
        assert!((sd.signalling[flat][s][beta] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_pairs_get_uniform_signalling() {
        let gg = paper_games::build_g1_tilde();
        let sd = split_general(&gg);
        let s = gg.state_index("--").unwrap();
        let plus = gg.state_index("+").unwrap();
        let c = 0;
        let flat = (c * gg.actions2.len() + c) * gg.n_states() + s;
        assert_eq!(sd.marginal[flat][plus], 0.0);
        assert_eq!(sd.signalling[flat][plus], vec![0.5, 0.5]);
    }

    #[test]
    fn json_round_trip_partition() {
        let g = paper_games::build_g1();
        let text = to_json(&AnyGame::Partition(g.clone()));
        match from_json(&text).unwrap() {
            AnyGame::Partition(g2) => assert_eq!(g, g2),
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn json_round_trip_general() {
        let g = paper_games::build_g1_tilde();
        let text = to_json(&AnyGame::General(g.clone()));
        match from_json(&text).unwrap() {
            AnyGame::General(g2) => {
                assert_eq!(g.states, g2.states);
                assert_eq!(g.payoff, g2.payoff);
                assert_eq!(g.transition, g2.transition);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let g = paper_games::build_g1();
        let mut v: serde_json::Value =
            serde_json::from_str(&to_json(&AnyGame::Partition(g))).unwrap();
        v.as_object_mut().unwrap().insert("extra".into(), serde_json::json!(1));
        assert!(from_json(&v.to_string()).is_err());
    }
}
