//! Exact solver on the closure of reachable beliefs.
//!
//! From the initial belief, one stage reaches finitely many posteriors;
//! closing under that map (after snapping to a quantization lattice) gives
//! a finite graph on which the discounted value is an ordinary fixed point.
//! For the example games the reachable set collapses to short chains and
//! the lattice is effectively exact; games whose reachable set is dense
//! get a coarser lattice chosen from the node budget, with the induced
//! perturbation charged to the reported error bound.
//!
//! The fixed point is computed by value iteration when the contraction
//! allows it, and by exact strategy iteration (linear solves per policy)
//! for player-controlled games in the slow-discount regime.

use std::collections::HashMap;

use crate::belief::Belief;
use crate::game_model::AnyGame;
use crate::matrix_game::{self, MatrixGame};
use crate::solver::{DiscountSpec, SolveError, StageGame, ValueEval, BACKUP_VAL_TOL};

/// Default cap on closure nodes; override with the `SDG_MAX_NODES`
/// environment variable or [`TreeConfig::max_nodes`].
pub const DEFAULT_MAX_NODES: usize = 2_000_000;
/// Finest quantization lattice.
pub const BASE_QUANTUM: f64 = 1e-12;
const VI_MAX_SWEEPS: usize = 400_000;
const STRATEGY_MAX_NODES: usize = 1500;

#[derive(Debug, Clone)]
pub struct TreeConfig {
    pub max_nodes: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        let max_nodes = std::env::var("SDG_MAX_NODES")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(DEFAULT_MAX_NODES);
        TreeConfig { max_nodes }
    }
}

/// Value table over the quantized reachable beliefs.
#[derive(Debug, Clone)]
pub struct ClosureValueFn {
    quantum: f64,
    map: HashMap<Vec<u64>, f64>,
    beliefs: Vec<(Vec<u64>, Belief)>,
}

impl ClosureValueFn {
    pub fn quantum(&self) -> f64 {
        self.quantum
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl ValueEval for ClosureValueFn {
    fn eval(&self, p: &Belief) -> f64 {
        let key = p.quantize(self.quantum);
        if let Some(&v) = self.map.get(&key) {
            return v;
        }
        // Beliefs reached through the same dynamics always hit; anything
        // else falls back to the nearest stored belief.
        let mut best = f64::INFINITY;
        let mut val = 0.0;
        for (stored_key, q) in &self.beliefs {
            let d: f64 =
                p.weights().iter().zip(q.weights()).map(|(a, b)| (a - b).abs()).sum();
            if d < best {
                best = d;
                val = self.map[stored_key];
            }
        }
        val
    }
}

/// Result of a closure solve.
#[derive(Debug, Clone)]
pub struct TreeSolution {
    pub value: f64,
    pub error_bound: f64,
    pub nodes: usize,
    pub iterations: usize,
    pub quantum: f64,
    pub value_fn: ClosureValueFn,
}

struct Node {
    belief: Belief,
    ni: usize,
    nj: usize,
    /// Immediate payoff per `(i, j)`, already weighted by the step.
    imm: Vec<f64>,
    /// Weighted children per `(i, j)`.
    branches: Vec<Vec<(usize, f64)>>,
}

struct Graph {
    nodes: Vec<Node>,
    ids: HashMap<Vec<u64>, usize>,
    quantum: f64,
}

fn snap(p: &Belief, quantum: f64) -> (Vec<u64>, Belief) {
    let key = p.quantize(quantum);
    let snapped =
        Belief::renormalized(key.iter().map(|&k| k as f64 * quantum).collect()).unwrap_or_else(
            |_| p.clone(),
        );
    (key, snapped)
}

/// Breadth-first closure of the stage dynamics from the seed beliefs.
fn discover(
    stage: &StageGame,
    seeds: &[Belief],
    quantum: f64,
    max_nodes: usize,
) -> Result<Graph, SolveError> {
    let mut ids: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut beliefs: Vec<Belief> = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    let intern = |p: &Belief,
                      ids: &mut HashMap<Vec<u64>, usize>,
                      beliefs: &mut Vec<Belief>,
                      queue: &mut std::collections::VecDeque<usize>|
     -> usize {
        let (key, snapped) = snap(p, quantum);
        if let Some(&id) = ids.get(&key) {
            return id;
        }
        let id = beliefs.len();
        ids.insert(key, id);
        beliefs.push(snapped);
        queue.push_back(id);
        id
    };
    for seed in seeds {
        intern(seed, &mut ids, &mut beliefs, &mut queue);
    }
    let mut nodes: Vec<Node> = Vec::new();
    while let Some(id) = queue.pop_front() {
        debug_assert_eq!(id, nodes.len(), "nodes are expanded in discovery order");
        let belief = beliefs[id].clone();
        let (ni, nj) = stage.action_dims(&belief)?;
        let mut imm = Vec::with_capacity(ni * nj);
        let mut branches = Vec::with_capacity(ni * nj);
        for i in 0..ni {
            for j in 0..nj {
                imm.push(stage.step().immediate * stage.stage_payoff(&belief, i, j)?);
                let mut kids = Vec::new();
                for b in stage.branches(&belief, i, j)? {
                    let child = intern(&b.posterior, &mut ids, &mut beliefs, &mut queue);
                    kids.push((child, b.prob));
                }
                branches.push(kids);
            }
        }
        nodes.push(Node { belief, ni, nj, imm, branches });
        if beliefs.len() > max_nodes {
            return Err(SolveError::BudgetExceeded(format!(
                "closure exceeds {max_nodes} nodes at quantum {quantum:e}"
            )));
        }
    }
    Ok(Graph { nodes, ids, quantum })
}

fn backup_node(node: &Node, cont: f64, v: &[f64]) -> f64 {
    let entry = |idx: usize| {
        let mut acc = node.imm[idx];
        let mut kid_sum = 0.0;
        for &(c, w) in &node.branches[idx] {
            kid_sum += w * v[c];
        }
        acc += cont * kid_sum;
        acc
    };
    if node.ni == 1 {
        (0..node.nj).map(entry).fold(f64::INFINITY, f64::min)
    } else if node.nj == 1 {
        (0..node.ni).map(entry).fold(f64::NEG_INFINITY, f64::max)
    } else {
        let m = MatrixGame::new(node.ni, node.nj, (0..node.ni * node.nj).map(entry).collect());
        matrix_game::value_only(&m).expect("backup matrices are finite")
    }
}

fn value_iteration(
    graph: &Graph,
    cont: f64,
    threshold: f64,
) -> Result<(Vec<f64>, usize), SolveError> {
    let n = graph.nodes.len();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    for sweep in 1..=VI_MAX_SWEEPS {
        let mut change = 0.0_f64;
        for (idx, node) in graph.nodes.iter().enumerate() {
            next[idx] = backup_node(node, cont, &v);
            change = change.max((next[idx] - v[idx]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if change <= threshold {
            return Ok((v, sweep));
        }
    }
    Err(SolveError::NoConvergence(VI_MAX_SWEEPS))
}

/// Exact fixed point for player-controlled graphs: alternate best-response
/// policy improvements with exact policy evaluation by dense LU.
fn strategy_iteration(graph: &Graph, cont: f64) -> Result<(Vec<f64>, usize), SolveError> {
    let n = graph.nodes.len();
    if n > STRATEGY_MAX_NODES {
        return Err(SolveError::BudgetExceeded(format!(
            "strategy iteration supports at most {STRATEGY_MAX_NODES} nodes, closure has {n}"
        )));
    }
    // choice per node: row index at max nodes, column index at min nodes.
    let mut choice_max = vec![0usize; n];
    let mut choice_min = vec![0usize; n];
    let improvement_tol = 1e-13;

    let evaluate = |cmax: &[usize], cmin: &[usize]| -> Vec<f64> {
        let mut a = nalgebra::DMatrix::<f64>::identity(n, n);
        let mut b = nalgebra::DVector::<f64>::zeros(n);
        for (idx, node) in graph.nodes.iter().enumerate() {
            let flat = cmax[idx] * node.nj + cmin[idx];
            b[idx] = node.imm[flat];
            for &(c, w) in &node.branches[flat] {
                a[(idx, c)] -= cont * w;
            }
        }
        a.lu().solve(&b).expect("I - cont P is nonsingular").iter().cloned().collect()
    };

    let mut v = evaluate(&choice_max, &choice_min);
    let mut iterations = 0;
    for _outer in 0..400 {
        iterations += 1;
        // Best response of the maximizer given the minimizer's choices.
        loop {
            let mut switched = false;
            for (idx, node) in graph.nodes.iter().enumerate() {
                if node.ni <= 1 {
                    continue;
                }
                let entry = |i: usize| {
                    let flat = i * node.nj + choice_min[idx];
                    let mut acc = node.imm[flat];
                    for &(c, w) in &node.branches[flat] {
                        acc += cont * w * v[c];
                    }
                    acc
                };
                let current = entry(choice_max[idx]);
                let (mut best_i, mut best) = (choice_max[idx], current);
                for i in 0..node.ni {
                    let e = entry(i);
                    if e > best + improvement_tol {
                        best = e;
                        best_i = i;
                    }
                }
                if best_i != choice_max[idx] {
                    choice_max[idx] = best_i;
                    switched = true;
                }
            }
            if !switched {
                break;
            }
            v = evaluate(&choice_max, &choice_min);
        }
        // One greedy pass for the minimizer.
        let mut switched = false;
        for (idx, node) in graph.nodes.iter().enumerate() {
            if node.nj <= 1 {
                continue;
            }
            let entry = |j: usize| {
                let flat = choice_max[idx] * node.nj + j;
                let mut acc = node.imm[flat];
                for &(c, w) in &node.branches[flat] {
                    acc += cont * w * v[c];
                }
                acc
            };
            let current = entry(choice_min[idx]);
            let (mut best_j, mut best) = (choice_min[idx], current);
            for j in 0..node.nj {
                let e = entry(j);
                if e < best - improvement_tol {
                    best = e;
                    best_j = j;
                }
            }
            if best_j != choice_min[idx] {
                choice_min[idx] = best_j;
                switched = true;
            }
        }
        if !switched {
            return Ok((v, iterations));
        }
        v = evaluate(&choice_max, &choice_min);
    }
    Err(SolveError::NoConvergence(400))
}

fn solve_graph(
    graph: &Graph,
    cont: f64,
    bound: f64,
    eps: f64,
) -> Result<(Vec<f64>, usize), SolveError> {
    let controlled = graph.nodes.iter().all(|n| n.ni == 1 || n.nj == 1);
    let eps_iter = (eps * bound / 4.0).max(1e-14);
    let threshold = eps_iter * (1.0 - cont) / cont.max(1e-300);
    let needed = if threshold >= 2.0 * bound || bound == 0.0 {
        0.0
    } else {
        ((threshold / (2.0 * bound)).ln() / cont.ln()).ceil()
    };
    if needed <= VI_MAX_SWEEPS as f64 {
        value_iteration(graph, cont, threshold)
    } else if controlled {
        strategy_iteration(graph, cont)
    } else {
        Err(SolveError::BudgetExceeded(format!(
            "{needed:.0} value-iteration sweeps needed and strategy iteration \
             requires single-controller nodes"
        )))
    }
}

/// Residual of the table under one exact backup; the fixed-point error is
/// `residual / (1 - cont)`.
fn residual(graph: &Graph, cont: f64, v: &[f64]) -> f64 {
    graph
        .nodes
        .iter()
        .enumerate()
        .map(|(idx, node)| (backup_node(node, cont, v) - v[idx]).abs())
        .fold(0.0_f64, f64::max)
}

/// Solve a discounted signal game from an initial belief by closing the
/// reachable-belief graph and computing the fixed point exactly.
///
/// `eps` is the target relative accuracy: the returned `error_bound` is at
/// most `eps * G` when the budget suffices, where `G` bounds the normalized
/// values. Deterministic for identical inputs.
pub fn solve_tree(
    game: &AnyGame,
    p0: &Belief,
    spec: &DiscountSpec,
    eps: f64,
) -> Result<TreeSolution, SolveError> {
    solve_tree_with(game, p0, spec, eps, &TreeConfig::default())
}

pub fn solve_tree_with(
    game: &AnyGame,
    p0: &Belief,
    spec: &DiscountSpec,
    eps: f64,
    config: &TreeConfig,
) -> Result<TreeSolution, SolveError> {
    assert!(eps > 0.0);
    let tail_stage = StageGame::prepare(game, spec.lambda, spec.schedule.tail())?;
    let cont = tail_stage.step().continuation;
    if !(0.0..1.0).contains(&cont) {
        return Err(SolveError::NonContraction(1.0 - cont));
    }
    let bound = tail_stage.value_bound();
    let ns = tail_stage.n_states();

    // The initial public signal conditions a partition game's belief, so a
    // cross-class prior is an average of per-class solves.
    let seeds0 = split_by_class(game, p0)?;

    // Walk the explicit prefix (if any) collecting the beliefs that seed
    // the stationary tail.
    let prefix_len = spec.schedule.prefix_len();
    let mut stage_games = Vec::with_capacity(prefix_len);
    let mut layer: Vec<Belief> = seeds0.iter().map(|(_, p)| p.clone()).collect();
    for m in 0..prefix_len {
        let stage = StageGame::prepare(game, spec.lambda, spec.schedule.duration(m))?;
        let mut next = Vec::new();
        for p in &layer {
            let (ni, nj) = stage.action_dims(p)?;
            for i in 0..ni {
                for j in 0..nj {
                    for b in stage.branches(p, i, j)? {
                        next.push(b.posterior);
                    }
                }
            }
        }
        stage_games.push(stage);
        layer = next;
        if layer.len() > config.max_nodes {
            return Err(SolveError::BudgetExceeded(format!(
                "prefix layer {m} has {} beliefs",
                layer.len()
            )));
        }
    }

    // Quantization choice: probe the finest lattice cheaply (collapsing
    // games close within a few hundred beliefs); if the reachable set is
    // dense instead, jump to the coarsest lattice whose perturbation stays
    // within half the error target and spend the full budget there.
    let lip_prior = 2.0 * bound;
    let quant_charge = |q: f64| lip_prior * ns as f64 * q / (2.0 * (1.0 - cont));
    let max_quantum = if bound == 0.0 {
        BASE_QUANTUM
    } else {
        (eps * bound / (2.0 * quant_charge(1.0)).max(1e-300)).max(BASE_QUANTUM)
    };
    let probe_budget = config.max_nodes.min(30_000);
    let graph = match discover(&tail_stage, &layer, BASE_QUANTUM, probe_budget) {
        Ok(g) => g,
        Err(SolveError::BudgetExceeded(_)) if max_quantum > BASE_QUANTUM => {
            discover(&tail_stage, &layer, max_quantum, config.max_nodes)?
        }
        Err(SolveError::BudgetExceeded(_)) => {
            // eps leaves no room to coarsen: retry the fine lattice with
            // the full budget before giving up.
            discover(&tail_stage, &layer, BASE_QUANTUM, config.max_nodes)?
        }
        Err(e) => return Err(e),
    };

    let (v, iterations) = solve_graph(&graph, cont, bound, eps)?;
    let rho = residual(&graph, cont, &v);
    let error_bound = rho / (1.0 - cont) + quant_charge(graph.quantum);

    let mut map = HashMap::with_capacity(graph.nodes.len());
    let mut beliefs = Vec::with_capacity(graph.nodes.len());
    for (key, &id) in &graph.ids {
        map.insert(key.clone(), v[id]);
    }
    for node in &graph.nodes {
        let key = node.belief.quantize(graph.quantum);
        beliefs.push((key, node.belief.clone()));
    }
    let value_fn = ClosureValueFn { quantum: graph.quantum, map, beliefs };

    // Roll the value back through the prefix stages.
    let mut eval_cache: HashMap<(usize, Vec<u64>), f64> = HashMap::new();
    fn eval_stage(
        m: usize,
        p: &Belief,
        stage_games: &[StageGame],
        tail: &ClosureValueFn,
        cache: &mut HashMap<(usize, Vec<u64>), f64>,
    ) -> Result<f64, SolveError> {
        if m == stage_games.len() {
            return Ok(tail.eval(p));
        }
        let key = (m, p.quantize(BASE_QUANTUM));
        if let Some(&v) = cache.get(&key) {
            return Ok(v);
        }
        let stage = &stage_games[m];
        let (ni, nj) = stage.action_dims(p)?;
        let mut entries = Vec::with_capacity(ni * nj);
        for i in 0..ni {
            for j in 0..nj {
                let mut acc = stage.step().immediate * stage.stage_payoff(p, i, j)?;
                for b in stage.branches(p, i, j)? {
                    acc += stage.step().continuation
                        * b.prob
                        * eval_stage(m + 1, &b.posterior, stage_games, tail, cache)?;
                }
                entries.push(acc);
            }
        }
        let value = if ni == 1 {
            entries.iter().cloned().fold(f64::INFINITY, f64::min)
        } else if nj == 1 {
            entries.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        } else {
            matrix_game::solve(&MatrixGame::new(ni, nj, entries), BACKUP_VAL_TOL)?.value
        };
        cache.insert(key, value);
        Ok(value)
    }

    let mut value = 0.0;
    for (mass, p) in &seeds0 {
        value += mass * eval_stage(0, p, &stage_games, &value_fn, &mut eval_cache)?;
    }

    Ok(TreeSolution {
        value,
        error_bound,
        nodes: graph.nodes.len(),
        iterations,
        quantum: graph.quantum,
        value_fn,
    })
}

/// Split a prior into per-signal-class conditionals for partition games;
/// general games use the prior as given.
fn split_by_class(game: &AnyGame, p0: &Belief) -> Result<Vec<(f64, Belief)>, SolveError> {
    match game {
        AnyGame::General(_) => Ok(vec![(1.0, p0.clone())]),
        AnyGame::Partition(g) => {
            let mut out = Vec::new();
            for a in 0..g.signals.len() {
                let mass: f64 = g.class_states(a).iter().map(|&s| p0.get(s)).sum();
                if mass <= 0.0 {
                    continue;
                }
                let mut w = vec![0.0; g.n_states()];
                for s in g.class_states(a) {
                    w[s] = p0.get(s) / mass;
                }
                out.push((mass, Belief::new(w).expect("conditional is a distribution")));
            }
            Ok(out)
        }
    }
}
