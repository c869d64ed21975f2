//! Interpolated fixed points on simplex grids.
//!
//! The belief space splits into components: one simplex per signal class
//! for partition games (the public signal pins the class), one simplex over
//! all states for general games. Each component carries a regular lattice
//! of resolution `R`; beliefs between nodes are evaluated by barycentric
//! interpolation on the Kuhn/Freudenthal triangulation, which is exact at
//! nodes, reproduces affine functions, and is sup-norm nonexpansive, so the
//! interpolated backup stays a contraction.

use std::collections::HashMap;

use crate::belief::Belief;
use crate::game_model::{AnyGame, StateId};
use crate::matrix_game::{self, MatrixGame};
use crate::solver::{SolveError, StageGame, ValueEval};

/// Largest supported component size (simplex dimension 3).
pub const MAX_COMPONENT_STATES: usize = 4;
const MAX_SWEEPS: usize = 2_000_000;

/// Sweep order for the fixed-point iteration. Gauss-Seidel converges
/// faster; Jacobi keeps the textbook contraction inequality between
/// successive iterates and is the mode used by the contraction tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    GaussSeidel,
    Jacobi,
}

#[derive(Debug, Clone)]
struct Component {
    class_states: Vec<StateId>,
    resolution: usize,
    /// Lattice nodes as integer compositions of `resolution`.
    nodes: Vec<Vec<u16>>,
    index: HashMap<Vec<u16>, usize>,
    /// Offset into the flat value vector.
    offset: usize,
}

impl Component {
    fn node_belief(&self, node: &[u16], n_states: usize) -> Belief {
        let mut w = vec![0.0; n_states];
        for (k, &s) in self.class_states.iter().enumerate() {
            w[s] = node[k] as f64 / self.resolution as f64;
        }
        Belief::new(w).expect("lattice nodes are distributions")
    }
}

/// Barycentric interpolation weights of `point` (coordinates summing to
/// `r`) on the Kuhn triangulation: returns up to `m` lattice vertices with
/// convex weights. Works in cumulative coordinates, where the simplices of
/// the triangulation are unit cubes' staircases.
fn simplex_weights(point: &[f64], r: usize) -> Vec<(Vec<u16>, f64)> {
    let m = point.len();
    // Cumulative coordinates u_i = sum_{j >= i} b_j; u_0 = r exactly.
    let mut u = vec![0.0; m];
    let mut acc = 0.0;
    for i in (0..m).rev() {
        acc += point[i];
        u[i] = acc;
    }
    u[0] = r as f64;
    // Snap near-integer coordinates: accumulated rounding must not push a
    // lattice hit across the floor, which would fabricate an out-of-simplex
    // vertex downstream. Also enforce monotonicity.
    for i in 1..m {
        let rounded = u[i].round();
        if (u[i] - rounded).abs() < 1e-9 {
            u[i] = rounded;
        }
        if u[i] > u[i - 1] {
            u[i] = u[i - 1];
        }
    }
    let mut base: Vec<i64> = u.iter().map(|&x| x.floor() as i64).collect();
    let mut frac: Vec<f64> = u.iter().zip(&base).map(|(&x, &b)| x - b as f64).collect();
    base[0] = r as i64;
    frac[0] = 0.0;
    // Staircase order: descending fractional part, ties by index.
    let mut order: Vec<usize> = (1..m).collect();
    order.sort_by(|&a, &b| frac[b].partial_cmp(&frac[a]).unwrap().then(a.cmp(&b)));

    let to_node = |u_vertex: &[i64]| -> Vec<u16> {
        let mut node = Vec::with_capacity(m);
        for i in 0..m {
            let next = if i + 1 < m { u_vertex[i + 1] } else { 0 };
            node.push((u_vertex[i] - next).max(0) as u16);
        }
        node
    };

    let mut out = Vec::with_capacity(m);
    let mut vertex = base.clone();
    let mut prev_f = 1.0;
    for k in 0..=order.len() {
        let f_here = if k < order.len() { frac[order[k]] } else { 0.0 };
        let w = prev_f - f_here;
        if w > 1e-15 {
            out.push((to_node(&vertex), w));
        }
        if k < order.len() {
            vertex[order[k]] += 1;
            prev_f = f_here;
        }
    }
    out
}

/// Piecewise-linear value function over per-component simplex lattices.
#[derive(Debug, Clone)]
pub struct GridValueFn {
    components: Vec<Component>,
    values: Vec<f64>,
    pub error_bound: f64,
    pub iterations: usize,
    /// Sup-norm change of each sweep, recorded for contraction checks.
    pub sweep_changes: Vec<f64>,
}

impl GridValueFn {
    fn component_for(&self, p: &Belief) -> Option<&Component> {
        self.components
            .iter()
            .find(|c| p.support().all(|s| c.class_states.contains(&s)))
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len()
    }

    /// Flat interpolation stencil of a belief: value indices and convex
    /// weights.
    fn stencil(&self, p: &Belief) -> Vec<(usize, f64)> {
        let comp = self
            .component_for(p)
            .expect("belief lies in some signal class");
        let r = comp.resolution;
        let point: Vec<f64> =
            comp.class_states.iter().map(|&s| p.get(s) * r as f64).collect();
        simplex_weights(&point, r)
            .into_iter()
            .map(|(node, w)| {
                let idx = comp.index.get(&node).copied().unwrap_or_else(|| {
                    panic!("lattice vertex {node:?} missing at resolution {r}")
                });
                (comp.offset + idx, w)
            })
            .collect()
    }
}

impl ValueEval for GridValueFn {
    fn eval(&self, p: &Belief) -> f64 {
        self.stencil(p).iter().map(|&(idx, w)| w * self.values[idx]).sum()
    }
}

fn enumerate_nodes(m: usize, r: usize) -> Vec<Vec<u16>> {
    let mut out = Vec::new();
    let mut cur = vec![0u16; m];
    fn rec(k: usize, remaining: u16, cur: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
        if k == cur.len() - 1 {
            cur[k] = remaining;
            out.push(cur.clone());
            return;
        }
        for v in 0..=remaining {
            cur[k] = v;
            rec(k + 1, remaining - v, cur, out);
        }
    }
    rec(0, r as u16, &mut cur, &mut out);
    out
}

/// Fixed point of the interpolated backup, swept until the sup-norm update
/// is below `tol * (1 - cont) / cont` (so the lattice values are within
/// `tol` of the interpolated operator's fixed point).
pub fn solve_grid(
    game: &AnyGame,
    lambda: f64,
    h: f64,
    resolution: usize,
    tol: f64,
    mode: GridMode,
) -> Result<GridValueFn, SolveError> {
    let stage = StageGame::prepare(game, lambda, h)?;
    solve_grid_stage(&stage, resolution, tol, mode)
}

/// Grid solve of an already-prepared stage game (used for exponential
/// discretizations, which carry their own discount weights).
pub fn solve_grid_stage(
    stage: &StageGame,
    resolution: usize,
    tol: f64,
    mode: GridMode,
) -> Result<GridValueFn, SolveError> {
    assert!(resolution >= 1);
    assert!(tol > 0.0);
    let cont = stage.step().continuation;
    if !(0.0..1.0).contains(&cont) {
        return Err(SolveError::NonContraction(1.0 - cont));
    }
    let n_states = stage.n_states();
    let class_sets: Vec<Vec<StateId>> = match stage.game() {
        AnyGame::Partition(g) => (0..g.signals.len())
            .map(|a| g.class_states(a))
            .filter(|c| !c.is_empty())
            .collect(),
        AnyGame::General(_) => vec![(0..n_states).collect()],
    };
    let mut components = Vec::new();
    let mut offset = 0;
    for class_states in class_sets {
        let m = class_states.len();
        if m > MAX_COMPONENT_STATES {
            return Err(SolveError::DimensionTooHigh(m, MAX_COMPONENT_STATES));
        }
        let nodes = enumerate_nodes(m, resolution);
        let index: HashMap<Vec<u16>, usize> =
            nodes.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
        let len = nodes.len();
        components.push(Component { class_states, resolution, nodes, index, offset });
        offset += len;
    }
    let total = offset;

    let mut vf = GridValueFn {
        components,
        values: vec![0.0; total],
        error_bound: f64::NAN,
        iterations: 0,
        sweep_changes: Vec::new(),
    };

    // Precompute each node's backup inputs: per (i, j) the immediate term
    // and, per posterior branch, the interpolation stencil over flat value
    // indices. Posteriors never move, so the sweeps below are pure
    // weighted sums.
    let mut backups: Vec<NodeBackup> = Vec::with_capacity(total);
    for comp in &vf.components {
        for node in &comp.nodes {
            let p = comp.node_belief(node, n_states);
            let (ni, nj) = stage.action_dims(&p)?;
            let mut imm = Vec::with_capacity(ni * nj);
            let mut branches = Vec::with_capacity(ni * nj);
            for i in 0..ni {
                for j in 0..nj {
                    imm.push(stage.step().immediate * stage.stage_payoff(&p, i, j)?);
                    let mut stencils = Vec::new();
                    for b in stage.branches(&p, i, j)? {
                        stencils.push((b.prob, vf.stencil(&b.posterior)));
                    }
                    branches.push(stencils);
                }
            }
            backups.push(NodeBackup { ni, nj, imm, branches });
        }
    }

    let threshold = tol * (1.0 - cont) / cont.max(1e-300);
    let mut converged = false;
    let mut scratch = vec![0.0; total];
    for sweep in 1..=MAX_SWEEPS {
        vf.iterations = sweep;
        let mut change = 0.0_f64;
        match mode {
            GridMode::GaussSeidel => {
                for (idx, nb) in backups.iter().enumerate() {
                    let new = backup_value(nb, cont, &vf.values);
                    change = change.max((new - vf.values[idx]).abs());
                    vf.values[idx] = new;
                }
            }
            GridMode::Jacobi => {
                for (idx, nb) in backups.iter().enumerate() {
                    scratch[idx] = backup_value(nb, cont, &vf.values);
                    change = change.max((scratch[idx] - vf.values[idx]).abs());
                }
                vf.values.copy_from_slice(&scratch);
            }
        }
        vf.sweep_changes.push(change);
        if change <= threshold {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SolveError::NoConvergence(MAX_SWEEPS));
    }

    // Interpolation charge: grid spacing times the numerical Lipschitz
    // constant of the solved table (largest slope along lattice edges).
    let mut lipschitz = 0.0_f64;
    for comp in &vf.components {
        let r = comp.resolution as f64;
        for (a, node) in comp.nodes.iter().enumerate() {
            let mut neighbor = node.clone();
            for k in 0..node.len() {
                for l in 0..node.len() {
                    if k == l || node[k] == 0 {
                        continue;
                    }
                    neighbor.copy_from_slice(node);
                    neighbor[k] -= 1;
                    neighbor[l] += 1;
                    if let Some(&b) = comp.index.get(&neighbor) {
                        let dv =
                            (vf.values[comp.offset + a] - vf.values[comp.offset + b]).abs();
                        lipschitz = lipschitz.max(dv * r / 2.0);
                    }
                }
            }
        }
    }
    let spacing = vf
        .components
        .iter()
        .map(|c| 1.0 / c.resolution as f64)
        .fold(0.0_f64, f64::max);
    vf.error_bound = tol + lipschitz * spacing;
    Ok(vf)
}

/// One node's precomputed backup inputs: per `(i, j)` the weighted
/// immediate term and, per branch, its interpolation stencil.
struct NodeBackup {
    ni: usize,
    nj: usize,
    imm: Vec<f64>,
    branches: Vec<Vec<(f64, Vec<(usize, f64)>)>>,
}

fn backup_value(nb: &NodeBackup, cont: f64, values: &[f64]) -> f64 {
    let entry = |flat: usize| {
        let mut acc = nb.imm[flat];
        for (w, stencil) in &nb.branches[flat] {
            let interp: f64 = stencil.iter().map(|&(idx, sw)| sw * values[idx]).sum();
            acc += cont * w * interp;
        }
        acc
    };
    if nb.ni == 1 {
        (0..nb.nj).map(entry).fold(f64::INFINITY, f64::min)
    } else if nb.nj == 1 {
        (0..nb.ni).map(entry).fold(f64::NEG_INFINITY, f64::max)
    } else {
        let m =
            MatrixGame::new(nb.ni, nb.nj, (0..nb.ni * nb.nj).map(entry).collect());
        matrix_game::value_only(&m).expect("backup entries are finite")
    }
}
