//! Bucket-elimination repair: solves both relaxed problems exactly over the
//! whole destroyed subgraph (no edges dropped) by eliminating each agent over
//! its separator along a DFS pseudo-tree, carrying a pair of tables in
//! parallel. Exponential in the induced width, so separator size and table
//! bytes are guarded before any allocation.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::graph::{dfs_pseudo_tree, ConstraintGraph, EdgeUsage, PseudoTree};
use crate::model::{AgentId, Assignment, BinaryFunction, DcopInstance, VarId};
use crate::sim::{run_phase, Message, Network, Payload};
use crate::tdbr::Context;
use crate::utility::{argmax, Utility};

pub const DEFAULT_WIDTH_CAP: usize = 12;
pub const DEFAULT_MAX_TABLE_BYTES: u128 = 512 << 20;

#[derive(Debug)]
pub struct DpopOutcome {
    /// (lower-bound-side, upper-bound-side) value per destroyed variable.
    pub chosen: BTreeMap<VarId, (i64, i64)>,
    /// Exact optimum of the lower-bound-side relaxation.
    pub check_optimum: Utility,
    /// Exact optimum of the upper-bound-side relaxation.
    pub hat_optimum: Utility,
}

/// Mixed-radix layout of a separator: first variable most significant.
#[derive(Clone, Debug, Default)]
struct SepLayout {
    vars: Vec<VarId>,
    dims: Vec<usize>,
    rows: usize,
}

impl SepLayout {
    fn new(vars: Vec<VarId>, inst: &DcopInstance) -> Result<Self> {
        let dims: Vec<usize> = vars
            .iter()
            .map(|v| inst.domain(*v).map(<[i64]>::len))
            .collect::<Result<_>>()?;
        let rows = dims
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .ok_or(Error::TableTooLarge {
                bytes: u128::MAX,
                cap: DEFAULT_MAX_TABLE_BYTES,
            })?;
        Ok(Self { vars, dims, rows })
    }

    fn decode(&self, mut row: usize) -> BTreeMap<VarId, usize> {
        let mut out = BTreeMap::new();
        for (var, dim) in self.vars.iter().zip(&self.dims).rev() {
            out.insert(*var, row % dim);
            row /= dim;
        }
        out
    }

    fn encode(&self, values: &BTreeMap<VarId, usize>) -> usize {
        let mut row = 0;
        for (var, dim) in self.vars.iter().zip(&self.dims) {
            row = row * dim + values[var];
        }
        row
    }
}

struct Oriented<'a> {
    function: &'a BinaryFunction,
    other: VarId,
    own_is_first: bool,
}

struct DpopAgent<'a> {
    var: VarId,
    domain: &'a [i64],
    parent: Option<VarId>,
    children: Vec<VarId>,
    sep: SepLayout,
    /// Constraints toward the parent and pseudo-parents (all in the separator).
    upward: Vec<Oriented<'a>>,
    /// Constraints toward preserved variables, pre-resolved to an index.
    preserved: Vec<(Oriented<'a>, usize)>,
    child_tables: BTreeMap<VarId, (SepLayout, Vec<Utility>, Vec<Utility>)>,
    /// Own full tables, indexed `row * |domain| + own_idx`.
    full_lb: Vec<Utility>,
    full_ub: Vec<Utility>,
    chosen: Option<(i64, i64)>,
    util_done: bool,
}

/// Exact repair over `subgraph`; both relaxations share one utility pass.
///
/// Errors before allocating when a separator exceeds `width_cap` or a table
/// pair would exceed `max_table_bytes`.
pub fn solve_relaxed_exact(
    subgraph: &ConstraintGraph,
    inst: &DcopInstance,
    prev_check: &Assignment,
    width_cap: usize,
    max_table_bytes: u128,
    contexts: &mut BTreeMap<VarId, Context>,
    net: &mut Network,
) -> Result<DpopOutcome> {
    let tree = dfs_pseudo_tree(subgraph, &EdgeUsage::default(), 0);
    let members: BTreeSet<VarId> = tree.nodes().collect();

    // separators bottom-up: parent, pseudo-parents, and whatever the
    // children's separators still need above this node
    let mut separators: BTreeMap<VarId, BTreeSet<VarId>> = BTreeMap::new();
    for &var in tree.preorder().iter().rev() {
        let mut sep: BTreeSet<VarId> = tree.pseudo_parents(var).iter().map(|(p, _)| *p).collect();
        if let Some((p, _)) = tree.parent(var) {
            sep.insert(p);
        }
        for (c, _) in tree.children(var) {
            for u in &separators[c] {
                if *u != var {
                    sep.insert(*u);
                }
            }
        }
        if sep.len() > width_cap {
            return Err(Error::WidthCapExceeded {
                separator: sep.len(),
                cap: width_cap,
            });
        }
        separators.insert(var, sep);
    }

    let mut states: BTreeMap<AgentId, DpopAgent> = BTreeMap::new();
    for var in tree.nodes() {
        let domain = inst.domain(var)?;
        // order separator variables along the root path (depth ascending)
        let mut sep_vars: Vec<VarId> = separators[&var].iter().copied().collect();
        sep_vars.sort_by_key(|v| (tree.depth_of(*v), *v));
        let sep = SepLayout::new(sep_vars, inst)?;

        let bytes = (sep.rows as u128)
            .saturating_mul(domain.len() as u128 + 1)
            .saturating_mul(2 * std::mem::size_of::<Utility>() as u128);
        if bytes > max_table_bytes {
            return Err(Error::TableTooLarge {
                bytes,
                cap: max_table_bytes,
            });
        }

        let mut upward = Vec::new();
        let mut preserved = Vec::new();
        for &fi in inst.functions_of(var) {
            let f = &inst.functions()[fi];
            let other = f.other(var).unwrap();
            let oriented = Oriented {
                function: f,
                other,
                own_is_first: f.scope.0 == var,
            };
            if !members.contains(&other) {
                let prev = prev_check.get(other).ok_or(Error::InvalidInstance(format!(
                    "preserved variable {other} has no previous value"
                )))?;
                preserved.push((oriented, inst.index_of(other, prev)?));
            } else if tree.is_ancestor(other, var) {
                upward.push(oriented);
            }
        }

        states.insert(
            inst.owner(var)?,
            DpopAgent {
                var,
                domain,
                parent: tree.parent(var).map(|(p, _)| p),
                children: tree.children(var).iter().map(|(c, _)| *c).collect(),
                sep,
                upward,
                preserved,
                child_tables: BTreeMap::new(),
                full_lb: Vec::new(),
                full_ub: Vec::new(),
                chosen: None,
                util_done: false,
            },
        );
    }

    let mut outcome = DpopOutcome {
        chosen: BTreeMap::new(),
        check_optimum: Utility::ZERO,
        hat_optimum: Utility::ZERO,
    };
    if states.is_empty() {
        return Ok(outcome);
    }

    let owner_of: BTreeMap<VarId, AgentId> = inst
        .variables()
        .iter()
        .map(|v| (*v, inst.owner(*v).unwrap()))
        .collect();
    let var_of: BTreeMap<AgentId, VarId> = owner_of.iter().map(|(v, a)| (*a, *v)).collect();

    run_util_phase(&tree, inst, net, &mut states, &owner_of, &var_of)?;
    run_value_phase(
        &tree,
        inst,
        net,
        &mut states,
        &owner_of,
        &var_of,
        contexts,
        &mut outcome,
    )?;

    for st in states.values() {
        outcome
            .chosen
            .insert(st.var, st.chosen.expect("value pass completed"));
    }
    Ok(outcome)
}

fn run_util_phase(
    tree: &PseudoTree,
    inst: &DcopInstance,
    net: &mut Network,
    states: &mut BTreeMap<AgentId, DpopAgent>,
    owner_of: &BTreeMap<VarId, AgentId>,
    var_of: &BTreeMap<AgentId, VarId>,
) -> Result<()> {
    net.begin_phase();
    let mut waves = 0usize;
    loop {
        let mut sends: Vec<(VarId, VarId, Payload)> = Vec::new();
        run_phase(net, states, |agent, st, inbox, net| {
            for msg in inbox {
                if let Payload::UtilTables { separator, lb, ub } = msg.payload {
                    let layout = SepLayout::new(separator, inst)?;
                    st.child_tables
                        .insert(var_of[&msg.sender], (layout, lb, ub));
                }
            }
            if st.util_done || st.child_tables.len() < st.children.len() {
                return Ok(());
            }
            st.util_done = true;

            let d = st.domain.len();
            let rows = st.sep.rows;
            st.full_lb = vec![Utility::ZERO; rows * d];
            st.full_ub = vec![Utility::ZERO; rows * d];
            let mut proj_lb = vec![Utility::NegInf; rows];
            let mut proj_ub = vec![Utility::NegInf; rows];
            let mut checks = 0u64;

            // preserved-neighbor sums depend only on the agent's own value
            let mut pres = vec![Utility::ZERO; d];
            for (o, prev_idx) in &st.preserved {
                for (i, slot) in pres.iter_mut().enumerate() {
                    *slot = *slot
                        + if o.own_is_first {
                            o.function.value_by_index(i, *prev_idx)
                        } else {
                            o.function.value_by_index(*prev_idx, i)
                        };
                    checks += 1;
                }
            }

            for row in 0..rows {
                let mut at = st.sep.decode(row);
                #[allow(clippy::needless_range_loop)]
                for i in 0..d {
                    let mut lb = pres[i];
                    let mut ub = Utility::ZERO;
                    for o in &st.upward {
                        let j = at[&o.other];
                        let u = if o.own_is_first {
                            o.function.value_by_index(i, j)
                        } else {
                            o.function.value_by_index(j, i)
                        };
                        checks += 1;
                        lb = lb + u;
                        ub = ub + u;
                    }
                    at.insert(st.var, i);
                    for (layout, clb, cub) in st.child_tables.values() {
                        let idx = layout.encode(&at);
                        lb = lb + clb[idx];
                        ub = ub + cub[idx];
                    }
                    at.remove(&st.var);
                    st.full_lb[row * d + i] = lb;
                    st.full_ub[row * d + i] = ub;
                    proj_lb[row] = proj_lb[row].max(lb);
                    proj_ub[row] = proj_ub[row].max(ub);
                }
            }
            net.note_checks(agent, checks);

            if let Some(p) = st.parent {
                sends.push((
                    st.var,
                    p,
                    Payload::UtilTables {
                        separator: st.sep.vars.clone(),
                        lb: proj_lb,
                        ub: proj_ub,
                    },
                ));
            }
            Ok(())
        })?;
        for (from, to, payload) in sends {
            net.send(Message {
                sender: owner_of[&from],
                receiver: owner_of[&to],
                payload,
            })?;
        }
        net.deliver_round();
        if states.values().all(|s| s.util_done) && !net.pending() {
            break;
        }
        waves += 1;
        assert!(
            waves <= tree.node_count() + 2,
            "utility pass failed to quiesce"
        );
    }
    net.end_phase(tree.depth());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_value_phase(
    tree: &PseudoTree,
    inst: &DcopInstance,
    net: &mut Network,
    states: &mut BTreeMap<AgentId, DpopAgent>,
    owner_of: &BTreeMap<VarId, AgentId>,
    var_of: &BTreeMap<AgentId, VarId>,
    contexts: &mut BTreeMap<VarId, Context>,
    outcome: &mut DpopOutcome,
) -> Result<()> {
    let members: BTreeSet<VarId> = tree.nodes().collect();
    // preserved agents only absorb broadcasts into their contexts
    let mut passive: BTreeMap<AgentId, VarId> = BTreeMap::new();
    for v in inst.variables() {
        if !members.contains(v) {
            passive.insert(owner_of[v], *v);
        }
    }

    net.begin_phase();
    let mut waves = 0usize;
    loop {
        // deliver context updates to preserved agents outside run_phase
        let mut sends: Vec<(VarId, VarId, Payload)> = Vec::new();
        let mut roots_fired: Vec<(Utility, Utility)> = Vec::new();
        run_phase(net, states, |_agent, st, inbox, _net| {
            let mut sep_pairs: Option<BTreeMap<VarId, (i64, i64)>> = None;
            for msg in inbox {
                match msg.payload {
                    Payload::ValueSet { assignments } => {
                        let mut map = BTreeMap::new();
                        for (v, lb, ub) in assignments {
                            map.insert(v, (lb, ub));
                            if inst.neighbors(st.var)?.contains(&v) {
                                let ctx = contexts.get_mut(&st.var).expect("context exists");
                                ctx.check.insert(v, lb);
                                ctx.hat.insert(v, ub);
                            }
                        }
                        sep_pairs = Some(map);
                    }
                    Payload::ValuePair { lb, ub } => {
                        let v = var_of[&msg.sender];
                        let ctx = contexts.get_mut(&st.var).expect("context exists");
                        ctx.check.insert(v, lb);
                        ctx.hat.insert(v, ub);
                    }
                    _ => {}
                }
            }
            if st.chosen.is_some() {
                return Ok(());
            }
            let is_root = st.parent.is_none();
            if !is_root && sep_pairs.is_none() {
                return Ok(());
            }

            let d = st.domain.len();
            let (lb_row, ub_row, pairs) = if is_root {
                (0usize, 0usize, BTreeMap::new())
            } else {
                let pairs = sep_pairs.unwrap();
                let mut lb_at = BTreeMap::new();
                let mut ub_at = BTreeMap::new();
                for v in &st.sep.vars {
                    let (plb, pub_) = pairs[v];
                    lb_at.insert(*v, inst.index_of(*v, plb)?);
                    ub_at.insert(*v, inst.index_of(*v, pub_)?);
                }
                (st.sep.encode(&lb_at), st.sep.encode(&ub_at), pairs)
            };
            let lb_col: Vec<Utility> = (0..d).map(|i| st.full_lb[lb_row * d + i]).collect();
            let ub_col: Vec<Utility> = (0..d).map(|i| st.full_ub[ub_row * d + i]).collect();
            let lb_idx = argmax(&lb_col);
            let ub_idx = argmax(&ub_col);
            let pair = (st.domain[lb_idx], st.domain[ub_idx]);
            st.chosen = Some(pair);
            if is_root {
                roots_fired.push((lb_col[lb_idx], ub_col[ub_idx]));
            }

            // forward each child the values its separator needs
            let mut known = pairs;
            known.insert(st.var, pair);
            for c in &st.children {
                let child_sep = separator_vars(tree, *c);
                let assignments: Vec<(VarId, i64, i64)> = child_sep
                    .iter()
                    .map(|v| {
                        let (lb, ub) = known[v];
                        (*v, lb, ub)
                    })
                    .collect();
                sends.push((st.var, *c, Payload::ValueSet { assignments }));
            }
            // plain broadcast to every other constraint-graph neighbor
            let child_set: BTreeSet<VarId> = st.children.iter().copied().collect();
            for nbr in inst.neighbors(st.var)? {
                if !child_set.contains(nbr) {
                    sends.push((
                        st.var,
                        *nbr,
                        Payload::ValuePair {
                            lb: pair.0,
                            ub: pair.1,
                        },
                    ));
                }
            }
            Ok(())
        })?;

        for (from, to, payload) in sends {
            net.send(Message {
                sender: owner_of[&from],
                receiver: owner_of[&to],
                payload,
            })?;
        }
        // drain broadcasts addressed to preserved agents into their contexts
        net.deliver_round();
        for (agent, var) in &passive {
            for msg in net.take_inbox(*agent) {
                if let Payload::ValuePair { lb, ub } = msg.payload {
                    let v = var_of[&msg.sender];
                    let ctx = contexts.get_mut(var).expect("context exists");
                    ctx.check.insert(v, lb);
                    ctx.hat.insert(v, ub);
                }
            }
        }
        for (lb, ub) in roots_fired {
            outcome.check_optimum = outcome.check_optimum + lb;
            outcome.hat_optimum = outcome.hat_optimum + ub;
        }
        let done = states.values().filter(|s| s.chosen.is_some()).count();
        if done == states.len() && !net.pending() {
            break;
        }
        waves += 1;
        assert!(
            waves <= tree.node_count() + 2,
            "value pass failed to quiesce"
        );
    }
    net.end_phase(tree.depth());
    Ok(())
}

/// Separator variables of `var`: ancestors constrained against its subtree,
/// in chain order.
fn separator_vars(tree: &PseudoTree, var: VarId) -> Vec<VarId> {
    fn collect(tree: &PseudoTree, var: VarId, out: &mut BTreeSet<VarId>) {
        for (p, _) in tree.pseudo_parents(var) {
            out.insert(*p);
        }
        if let Some((p, _)) = tree.parent(var) {
            out.insert(p);
        }
        for (c, _) in tree.children(var) {
            let mut inner = BTreeSet::new();
            collect(tree, *c, &mut inner);
            for u in inner {
                if u != var {
                    out.insert(u);
                }
            }
        }
    }
    let mut sep = BTreeSet::new();
    collect(tree, var, &mut sep);
    let mut vars: Vec<VarId> = sep.into_iter().collect();
    vars.sort_by_key(|v| (tree.depth_of(*v), *v));
    vars
}
