//! Best-bound-first branch-and-bound over LP relaxations.
//!
//! The engine owns the tree, the incumbent and the statistics that policies and
//! feature extraction read; the branching decision itself is delegated to a
//! [`BranchingPolicy`]. Children are solved as soon as their parent branches, so
//! every node in the open queue carries its own LP bound and `nodes` in the
//! result equals the number of node LPs solved.

mod state;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::instances::{MilpInstance, RngSeed};
use crate::policies::{BranchingPolicy, Decision, PolicyError};
use crate::simplex::{BoundsOverride, LpError, LpModel, LpSolution, LpStatus, INTEGRALITY_TOL};

pub(crate) use state::is_tight;
pub use state::{Direction, PseudocostUpdate, SolverState};

/// Pruning tolerance against the incumbent value.
pub const PRUNE_TOL: f64 = 1e-9;
/// Relative gap below which a solve counts as optimal.
pub const GAP_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BnbError {
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
    #[error("LP relaxation is unbounded")]
    Unbounded,
    #[error("LP solve failed at node {node}: {status:?}")]
    LpFailure { node: usize, status: LpStatus },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("policy chose variable {var}, which is not a candidate")]
    InvalidDecision { var: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Limits {
    pub time: Option<Duration>,
    pub nodes: Option<usize>,
}

impl Limits {
    pub fn nodes(nodes: usize) -> Self {
        Self {
            nodes: Some(nodes),
            time: None,
        }
    }

    fn validate(&self) -> Result<(), BnbError> {
        if self.nodes == Some(0) {
            return Err(BnbError::InvalidLimits(
                "node limit must be positive".into(),
            ));
        }
        if self.time == Some(Duration::ZERO) {
            return Err(BnbError::InvalidLimits(
                "time limit must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    TimeLimit,
    NodeLimit,
}

/// One bound change `lower <= x_var <= upper` applied when creating a child.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundChange {
    pub var: usize,
    pub direction: Direction,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct BnbNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// The change that created this node from its parent (`None` at the root).
    pub branch: Option<BoundChange>,
    /// Objective of the node LP, raised to the parent's bound if it fell below it
    /// by round-off.
    pub lp_bound: f64,
    pub lp: LpSolution,
}

impl BnbNode {
    pub fn local_lower(&self) -> &[f64] {
        &self.lp.lower
    }

    pub fn local_upper(&self) -> &[f64] {
        &self.lp.upper
    }
}

/// What happened to a node once its LP was solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeFate {
    Branched {
        var: usize,
    },
    PrunedByBound,
    Infeasible,
    Integral,
    /// Still open when a limit stopped the search.
    Open,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub branch: Option<BoundChange>,
    /// `+inf` for infeasible nodes.
    pub lp_bound: f64,
    pub fate: NodeFate,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub incumbent: Option<Vec<f64>>,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub wall_time: f64,
    pub final_gap: f64,
    /// Global lower bound when the search ended.
    pub lower_bound: f64,
    /// Number of branching decisions taken.
    pub branchings: usize,
    pub trace: Vec<TraceEvent>,
}

/// Read-only view handed to policies and observers at a branching decision.
pub struct BranchingContext<'a> {
    pub instance: &'a MilpInstance,
    pub model: &'a LpModel,
    pub node: &'a BnbNode,
    pub candidates: &'a [usize],
    pub state: &'a SolverState,
}

impl BranchingContext<'_> {
    pub fn lp(&self) -> &LpSolution {
        &self.node.lp
    }
}

/// Called synchronously before each branching; must not affect the search.
pub trait NodeObserver {
    fn on_branch(&mut self, ctx: &BranchingContext<'_>, decision: &Decision);
}

/// Integer variables whose LP value is farther than the integrality tolerance
/// from the nearest integer, ascending.
pub fn candidates(lp: &LpSolution, inst: &MilpInstance) -> Vec<usize> {
    fractional_indices(&lp.x, &inst.is_integer)
}

/// Indices `j` with `is_integer[j]` and `x[j]` fractional beyond the integrality tolerance.
pub fn fractional_indices(x: &[f64], is_integer: &[bool]) -> Vec<usize> {
    x.iter()
        .zip(is_integer)
        .enumerate()
        .filter(|&(_, (&v, &int))| int && (v - v.round()).abs() > INTEGRALITY_TOL)
        .map(|(j, _)| j)
        .collect()
}

/// Fractional part used by the branching split, in `(0, 1)`.
pub fn fractional_part(v: f64) -> f64 {
    v - v.floor()
}

struct Queued(BnbNode);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    /// Max-heap order: lowest bound first, then deeper, then lower id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .lp_bound
            .total_cmp(&self.0.lp_bound)
            .then(self.0.depth.cmp(&other.0.depth))
            .then(other.0.id.cmp(&self.0.id))
    }
}

/// Runs branch-and-bound on `inst` with `policy` choosing branching variables.
pub fn solve(
    inst: &MilpInstance,
    policy: &mut dyn BranchingPolicy,
    limits: Limits,
    observer: Option<&mut dyn NodeObserver>,
    seed: RngSeed,
) -> Result<SolveResult, BnbError> {
    let model = LpModel::new(inst);
    solve_with_model(inst, &model, policy, limits, observer, seed)
}

/// As [`solve`], reusing a prepared [`LpModel`] of `inst`.
pub fn solve_with_model(
    inst: &MilpInstance,
    model: &LpModel,
    policy: &mut dyn BranchingPolicy,
    limits: Limits,
    mut observer: Option<&mut dyn NodeObserver>,
    seed: RngSeed,
) -> Result<SolveResult, BnbError> {
    limits.validate()?;
    let start = Instant::now();
    policy.reset(seed);
    let mut state = SolverState::new(inst.n_vars(), inst.n_cons());
    let mut trace = Vec::new();
    let mut queue: BinaryHeap<Queued> = BinaryHeap::new();
    let mut lp_iterations = 0;
    let mut branchings = 0;

    let root = model.solve_root();
    lp_iterations += root.iterations;
    state.record_lp(&root, &inst.rhs);
    let root_node = BnbNode {
        id: 0,
        parent: None,
        depth: 0,
        branch: None,
        lp_bound: root.objective,
        lp: root,
    };
    match classify(inst, &root_node, &mut state)? {
        Some(fate) => trace.push(event(&root_node, fate)),
        None => queue.push(Queued(root_node)),
    }

    let mut status = None;
    while !queue.is_empty() {
        if limits.nodes.is_some_and(|cap| state.lp_count >= cap) {
            status = Some(SolveStatus::NodeLimit);
            break;
        }
        if limits.time.is_some_and(|t| start.elapsed() >= t) {
            status = Some(SolveStatus::TimeLimit);
            break;
        }
        let Queued(mut node) = queue.pop().expect("peeked");
        if node.lp_bound >= state.incumbent_value() - PRUNE_TOL {
            trace.push(event(&node, NodeFate::PrunedByBound));
            continue;
        }
        state.raise_lower_bound(node.lp_bound);
        model.attach_factor(&mut node.lp);
        let cands = candidates(&node.lp, inst);
        let decision = {
            let ctx = BranchingContext {
                instance: inst,
                model,
                node: &node,
                candidates: &cands,
                state: &state,
            };
            let decision = policy.decide(&ctx)?;
            if cands.binary_search(&decision.var).is_err() {
                return Err(BnbError::InvalidDecision { var: decision.var });
            }
            if let Some(obs) = observer.as_deref_mut() {
                obs.on_branch(&ctx, &decision);
            }
            decision
        };
        for update in &decision.pseudocost_updates {
            state.apply_update(update, true);
        }
        branchings += 1;
        let var = decision.var;
        let value = node.lp.x[var];
        let frac = fractional_part(value);
        let (l, u) = (node.lp.lower[var], node.lp.upper[var]);
        let changes = [
            BoundChange {
                var,
                direction: Direction::Down,
                lower: l,
                upper: value.floor().max(l),
            },
            BoundChange {
                var,
                direction: Direction::Up,
                lower: value.ceil().min(u),
                upper: u,
            },
        ];
        for change in changes {
            let delta = BoundsOverride::single(var, change.lower, change.upper);
            let lp = model.resolve(&node.lp, &delta)?;
            lp_iterations += lp.iterations;
            state.record_lp(&lp, &inst.rhs);
            let id = state.lp_count - 1;
            if lp.is_optimal() {
                state.update_pseudocosts(
                    var,
                    change.direction,
                    node.lp.objective,
                    lp.objective,
                    frac,
                );
            }
            let mut child = BnbNode {
                id,
                parent: Some(node.id),
                depth: node.depth + 1,
                branch: Some(change),
                lp_bound: lp.objective.max(node.lp_bound),
                lp,
            };
            match classify(inst, &child, &mut state)? {
                Some(fate) => trace.push(event(&child, fate)),
                None => {
                    child.lp.release_factor();
                    queue.push(Queued(child));
                }
            }
        }
        trace.push(event(&node, NodeFate::Branched { var }));
    }

    let lower_bound = match status {
        None => state.incumbent_value(),
        Some(_) => queue
            .iter()
            .map(|q| q.0.lp_bound)
            .fold(f64::INFINITY, f64::min)
            .min(state.incumbent_value()),
    };
    if status.is_some() {
        for q in queue.iter() {
            trace.push(event(&q.0, NodeFate::Open));
        }
    }
    let objective = state.incumbent.as_ref().map(|(_, v)| *v);
    let final_gap = match objective {
        Some(inc) => ((inc - lower_bound) / inc.abs().max(1e-10)).max(0.0),
        None => f64::INFINITY,
    };
    let status = status.unwrap_or(if objective.is_some() {
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    });
    Ok(SolveResult {
        status,
        objective,
        incumbent: state.incumbent.map(|(x, _)| x),
        nodes: state.lp_count,
        lp_iterations,
        wall_time: start.elapsed().as_secs_f64(),
        final_gap,
        lower_bound,
        branchings,
        trace,
    })
}

fn event(node: &BnbNode, fate: NodeFate) -> TraceEvent {
    TraceEvent {
        id: node.id,
        parent: node.parent,
        depth: node.depth,
        branch: node.branch,
        lp_bound: if node.lp.status == LpStatus::Infeasible {
            f64::INFINITY
        } else {
            node.lp_bound
        },
        fate,
    }
}

/// Settles a freshly solved node if it needs no branching; `None` keeps it open.
fn classify(
    inst: &MilpInstance,
    node: &BnbNode,
    state: &mut SolverState,
) -> Result<Option<NodeFate>, BnbError> {
    match node.lp.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(Some(NodeFate::Infeasible)),
        LpStatus::Unbounded => return Err(BnbError::Unbounded),
        LpStatus::IterationLimit => {
            return Err(BnbError::LpFailure {
                node: node.id,
                status: node.lp.status,
            })
        }
    }
    if node.lp_bound >= state.incumbent_value() - PRUNE_TOL {
        return Ok(Some(NodeFate::PrunedByBound));
    }
    if candidates(&node.lp, inst).is_empty() {
        let mut x = node.lp.x.clone();
        for (v, &int) in x.iter_mut().zip(&inst.is_integer) {
            if int {
                *v = v.round();
            }
        }
        let value = inst.objective_value(&x);
        state.set_incumbent(x, value);
        return Ok(Some(NodeFate::Integral));
    }
    Ok(None)
}
