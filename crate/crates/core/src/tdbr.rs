//! Tree-based bounded repair.
//!
//! Each iteration relaxes the destroyed subgraph to a DFS pseudo-tree, solves
//! the lower-bound-side problem (tree edges plus edges into preserved
//! neighbors) and the upper-bound-side problem (tree edges only) in one
//! synchronized leaf-to-root/root-to-leaf pass, then runs a bound propagation
//! over the global pseudo-tree using the per-function upper-bound surrogate
//! cache.

use std::collections::{BTreeMap, BTreeSet};

use crate::engine::DestroyFlag;
use crate::error::Result;
use crate::graph::{dfs_pseudo_tree, induced_subgraph, ConstraintGraph, EdgeUsage, PseudoTree};
use crate::model::{AgentId, Assignment, BinaryFunction, DcopInstance, FunctionId, VarId};
use crate::sim::{run_phase, Message, Network, Payload};
use crate::utility::{argmax, Utility};

/// An agent's view of its neighbors' values for the two relaxed problems.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Context {
    /// Lower-bound-side neighbor values.
    pub check: BTreeMap<VarId, i64>,
    /// Upper-bound-side neighbor values.
    pub hat: BTreeMap<VarId, i64>,
}

/// Per-function upper-bound surrogate values.
///
/// A function never optimized reads as its maximum table entry. Optimized
/// functions belong to groups formed by merging overlapping relaxation-edge
/// sets; each group carries a certificate that dominates the group's true
/// utility at any solution, and a member reads as its group's mean. A flat
/// per-edge mean with max-of-past semantics can spend one edge's surplus in
/// two different iterations and lose the upper-bound guarantee; the group
/// certificate cannot, because merging accounts for every past certificate
/// exactly once.
#[derive(Clone, Debug)]
pub struct UpperBoundCache {
    max_pair: BTreeMap<FunctionId, Utility>,
    group_of: BTreeMap<FunctionId, FunctionId>,
    members: BTreeMap<FunctionId, Vec<FunctionId>>,
    certificate: BTreeMap<FunctionId, Utility>,
}

impl UpperBoundCache {
    pub fn new(inst: &DcopInstance) -> Self {
        let max_pair = inst
            .functions()
            .iter()
            .map(|f| (f.id, f.max_pair()))
            .collect();
        Self {
            max_pair,
            group_of: BTreeMap::new(),
            members: BTreeMap::new(),
            certificate: BTreeMap::new(),
        }
    }

    pub fn ever_optimized(&self, f: FunctionId) -> bool {
        self.group_of.contains_key(&f)
    }

    fn root(&self, f: FunctionId) -> Option<FunctionId> {
        let mut cur = self.group_of.get(&f)?;
        loop {
            let next = &self.group_of[cur];
            if next == cur {
                return Some(*cur);
            }
            cur = next;
        }
    }

    /// Current surrogate value for `f`.
    pub fn read(&self, f: FunctionId) -> Utility {
        match self.root(f) {
            Some(root) => self.certificate[&root].mean(self.members[&root].len()),
            None => self.max_pair.get(&f).copied().unwrap_or(Utility::NegInf),
        }
    }

    /// Members and certificate of every current group.
    pub fn groups(&self) -> impl Iterator<Item = (&[FunctionId], Utility)> + '_ {
        self.members
            .iter()
            .map(|(root, members)| (members.as_slice(), self.certificate[root]))
    }

    fn max_pair_sum(&self, fns: impl IntoIterator<Item = FunctionId>) -> Utility {
        fns.into_iter().map(|f| self.max_pair[&f]).sum()
    }

    /// Fold an iteration's relaxation optimum into the cache. A no-op when
    /// the relaxation graph had no edges; re-optimizing within one existing
    /// group keeps its certificate.
    pub fn apply_iteration(&mut self, edges: &BTreeSet<FunctionId>, hat_optimum: Utility) {
        if edges.is_empty() {
            return;
        }
        let mut roots: BTreeSet<FunctionId> = BTreeSet::new();
        let mut fresh: Vec<FunctionId> = Vec::new();
        for f in edges {
            match self.root(*f) {
                Some(r) => {
                    roots.insert(r);
                }
                None => fresh.push(*f),
            }
        }
        if fresh.is_empty() && roots.len() == 1 {
            return;
        }

        // certificate candidates for the merged group, each dominating the
        // group's utility at any solution (finite entries are nonnegative)
        let mut via_new = hat_optimum;
        let mut via_old = self.max_pair_sum(fresh.iter().copied());
        let mut union: Vec<FunctionId> = fresh.clone();
        for r in &roots {
            let cert = self.certificate[r];
            let leftover: Vec<FunctionId> = self.members[r]
                .iter()
                .filter(|f| !edges.contains(f))
                .copied()
                .collect();
            via_new = via_new + cert.min(self.max_pair_sum(leftover));
            via_old = via_old + cert;
            union.extend(self.members[r].iter().copied());
        }
        let via_max = self.max_pair_sum(union.iter().copied());
        let certificate = via_new.min(via_old).min(via_max);

        union.sort_unstable();
        let root = union[0];
        for f in &union {
            self.group_of.insert(*f, root);
        }
        for r in roots {
            self.members.remove(&r);
            self.certificate.remove(&r);
        }
        self.certificate.insert(root, certificate);
        self.members.insert(root, union);
    }
}

/// The pair of utility tables one agent builds during the utility pass, plus
/// their projections onto the parent's domain.
#[derive(Clone, Debug)]
pub struct UtilTables {
    pub own_values: Vec<i64>,
    pub parent_values: Vec<i64>,
    /// Row-major (own, parent); unary over own values at roots.
    pub lb: Vec<Utility>,
    pub ub: Vec<Utility>,
    pub lb_projected: Vec<Utility>,
    pub ub_projected: Vec<Utility>,
}

impl UtilTables {
    fn at(&self, table: &[Utility], own: usize, parent: usize) -> Utility {
        table[own * self.parent_values.len() + parent]
    }

    /// Lower-bound-side argmax given the parent's chosen value index.
    pub fn choose_lb(&self, parent_idx: usize) -> usize {
        let col: Vec<Utility> = (0..self.own_values.len())
            .map(|i| self.at(&self.lb, i, parent_idx))
            .collect();
        argmax(&col)
    }

    pub fn choose_ub(&self, parent_idx: usize) -> usize {
        let col: Vec<Utility> = (0..self.own_values.len())
            .map(|i| self.at(&self.ub, i, parent_idx))
            .collect();
        argmax(&col)
    }
}

/// Result of the utility pass.
#[derive(Debug)]
pub struct UtilOutcome {
    pub tables: BTreeMap<VarId, UtilTables>,
    /// Optimal lower-bound-side relaxed utility, summed over forest roots.
    pub check_optimum: Utility,
    /// Optimal upper-bound-side relaxed utility, summed over forest roots.
    pub hat_optimum: Utility,
}

/// Build the iteration's relaxation tree over the destroyed variables.
pub fn relaxation(
    flags: &BTreeMap<VarId, DestroyFlag>,
    graph: &ConstraintGraph,
    usage: &EdgeUsage,
    seed: u64,
) -> PseudoTree {
    let destroyed: BTreeSet<VarId> = flags
        .iter()
        .filter(|(_, z)| **z == DestroyFlag::Destroyed)
        .map(|(v, _)| *v)
        .collect();
    let sub = induced_subgraph(graph, &destroyed);
    dfs_pseudo_tree(&sub, usage, seed)
}

struct PreservedTerm<'a> {
    function: &'a BinaryFunction,
    own_is_first: bool,
    prev_idx: usize,
}

struct UtilFire {
    var: VarId,
    tables: UtilTables,
    send: Option<(AgentId, Payload)>,
    root_total: Option<(Utility, Utility)>,
}

struct UtilAgent<'a> {
    var: VarId,
    domain: &'a [i64],
    parent: Option<(VarId, FunctionId)>,
    parent_domain: Vec<i64>,
    tree_fn: Option<(&'a BinaryFunction, bool)>,
    preserved: Vec<PreservedTerm<'a>>,
    pending_children: usize,
    acc_lb: Vec<Utility>,
    acc_ub: Vec<Utility>,
    done: bool,
}

/// Leaf-to-root utility pass over the relaxation tree.
///
/// The lower-bound table of an agent folds in the tree-edge function, the
/// children's projections, and every function toward a preserved neighbor
/// evaluated at that neighbor's previous value; the upper-bound table carries
/// tree-edge terms and children only.
pub fn util_propagation(
    tree: &PseudoTree,
    inst: &DcopInstance,
    prev_check: &Assignment,
    net: &mut Network,
) -> Result<UtilOutcome> {
    let members: BTreeSet<VarId> = tree.nodes().collect();
    let mut states: BTreeMap<AgentId, UtilAgent> = BTreeMap::new();
    for var in tree.nodes() {
        let domain = inst.domain(var)?;
        let parent = tree.parent(var);
        let parent_domain = parent
            .map(|(p, _)| inst.domain(p).map(<[i64]>::to_vec))
            .transpose()?
            .unwrap_or_default();
        let tree_fn = parent.map(|(_, fid)| {
            let f = inst.function(fid).expect("tree edge function exists");
            (f, f.scope.0 == var)
        });
        let mut preserved = Vec::new();
        for &fi in inst.functions_of(var) {
            let f = &inst.functions()[fi];
            let other = f.other(var).unwrap();
            if members.contains(&other) {
                continue;
            }
            let prev = prev_check
                .get(other)
                .ok_or(crate::error::Error::InvalidInstance(format!(
                    "preserved variable {other} has no previous value"
                )))?;
            preserved.push(PreservedTerm {
                function: f,
                own_is_first: f.scope.0 == var,
                prev_idx: inst.index_of(other, prev)?,
            });
        }
        states.insert(
            inst.owner(var)?,
            UtilAgent {
                var,
                domain,
                parent,
                parent_domain,
                tree_fn,
                preserved,
                pending_children: tree.children(var).len(),
                acc_lb: vec![Utility::ZERO; domain.len()],
                acc_ub: vec![Utility::ZERO; domain.len()],
                done: false,
            },
        );
    }

    let mut outcome = UtilOutcome {
        tables: BTreeMap::new(),
        check_optimum: Utility::ZERO,
        hat_optimum: Utility::ZERO,
    };
    if states.is_empty() {
        return Ok(outcome);
    }

    let owner_of: BTreeMap<VarId, AgentId> = members
        .iter()
        .map(|v| (*v, inst.owner(*v).unwrap()))
        .collect();
    let mut root_totals: Vec<(VarId, Utility, Utility)> = Vec::new();

    net.begin_phase();
    let mut waves = 0usize;
    loop {
        let mut fired: Vec<UtilFire> = Vec::new();
        run_phase(net, &mut states, |agent, st, inbox, net| {
            for msg in inbox {
                if let Payload::UtilLists { lb, ub } = msg.payload {
                    for (i, (l, u)) in lb.into_iter().zip(ub).enumerate() {
                        st.acc_lb[i] = st.acc_lb[i] + l;
                        st.acc_ub[i] = st.acc_ub[i] + u;
                    }
                    st.pending_children -= 1;
                }
            }
            if st.done || st.pending_children > 0 {
                return Ok(());
            }
            st.done = true;

            let d = st.domain.len();
            let mut checks = 0u64;
            // metered per the protocol's cost model: one check per table cell
            // per constraint term, as if nothing were hoisted
            let tables = if st.parent.is_some() {
                let dp = st.parent_domain.len();
                let (tf, own_first) = st.tree_fn.expect("non-root has a tree function");
                let mut pres = vec![Utility::ZERO; d];
                for (i, slot) in pres.iter_mut().enumerate() {
                    for term in &st.preserved {
                        *slot = *slot
                            + if term.own_is_first {
                                term.function.value_by_index(i, term.prev_idx)
                            } else {
                                term.function.value_by_index(term.prev_idx, i)
                            };
                    }
                }
                let mut lb = vec![Utility::ZERO; d * dp];
                let mut ub = vec![Utility::ZERO; d * dp];
                for i in 0..d {
                    for p in 0..dp {
                        let edge = if own_first {
                            tf.value_by_index(i, p)
                        } else {
                            tf.value_by_index(p, i)
                        };
                        checks += 1 + st.preserved.len() as u64;
                        lb[i * dp + p] = edge + st.acc_lb[i] + pres[i];
                        ub[i * dp + p] = edge + st.acc_ub[i];
                    }
                }
                let mut lb_projected = vec![Utility::NegInf; dp];
                let mut ub_projected = vec![Utility::NegInf; dp];
                for p in 0..dp {
                    for i in 0..d {
                        lb_projected[p] = lb_projected[p].max(lb[i * dp + p]);
                        ub_projected[p] = ub_projected[p].max(ub[i * dp + p]);
                    }
                }
                UtilTables {
                    own_values: st.domain.to_vec(),
                    parent_values: st.parent_domain.clone(),
                    lb,
                    ub,
                    lb_projected,
                    ub_projected,
                }
            } else {
                let mut lb = vec![Utility::ZERO; d];
                let mut ub = vec![Utility::ZERO; d];
                for (i, slot) in lb.iter_mut().enumerate() {
                    let mut pres = Utility::ZERO;
                    for term in &st.preserved {
                        pres = pres
                            + if term.own_is_first {
                                term.function.value_by_index(i, term.prev_idx)
                            } else {
                                term.function.value_by_index(term.prev_idx, i)
                            };
                        checks += 1;
                    }
                    *slot = st.acc_lb[i] + pres;
                    ub[i] = st.acc_ub[i];
                }
                UtilTables {
                    own_values: st.domain.to_vec(),
                    parent_values: Vec::new(),
                    lb,
                    ub,
                    lb_projected: Vec::new(),
                    ub_projected: Vec::new(),
                }
            };
            net.note_checks(agent, checks);

            let send = st.parent.map(|(pvar, _)| {
                (
                    owner_of[&pvar],
                    Payload::UtilLists {
                        lb: tables.lb_projected.clone(),
                        ub: tables.ub_projected.clone(),
                    },
                )
            });
            let root_total = if st.parent.is_none() {
                let best_lb = tables
                    .lb
                    .iter()
                    .copied()
                    .fold(Utility::NegInf, Utility::max);
                let best_ub = tables
                    .ub
                    .iter()
                    .copied()
                    .fold(Utility::NegInf, Utility::max);
                Some((best_lb, best_ub))
            } else {
                None
            };
            fired.push(UtilFire {
                var: st.var,
                tables,
                send,
                root_total,
            });
            Ok(())
        })?;

        for fire in fired {
            if let Some((to, payload)) = fire.send {
                net.send(Message {
                    sender: owner_of[&fire.var],
                    receiver: to,
                    payload,
                })?;
            }
            if let Some((lb, ub)) = fire.root_total {
                root_totals.push((fire.var, lb, ub));
            }
            outcome.tables.insert(fire.var, fire.tables);
        }
        net.deliver_round();

        if states.values().all(|s| s.done) && !net.pending() {
            break;
        }
        waves += 1;
        assert!(waves <= members.len() + 2, "utility pass failed to quiesce");
    }
    net.end_phase(tree.depth());

    for (_, lb, ub) in &root_totals {
        outcome.check_optimum = outcome.check_optimum + *lb;
        outcome.hat_optimum = outcome.hat_optimum + *ub;
    }
    Ok(outcome)
}

struct ValueAgent {
    var: VarId,
    parent_var: Option<VarId>,
    is_root: bool,
    chosen: Option<(i64, i64)>,
}

/// Root-to-leaf value pass. Every destroyed agent broadcasts its chosen pair
/// to all constraint-graph neighbors; every agent folds received pairs into
/// its contexts. Preserved agents receive without sending.
pub fn value_propagation(
    tree: &PseudoTree,
    inst: &DcopInstance,
    utils: &UtilOutcome,
    contexts: &mut BTreeMap<VarId, Context>,
    net: &mut Network,
) -> Result<BTreeMap<VarId, (i64, i64)>> {
    let members: BTreeSet<VarId> = tree.nodes().collect();
    let var_of: BTreeMap<AgentId, VarId> = inst
        .variables()
        .iter()
        .map(|v| (inst.owner(*v).unwrap(), *v))
        .collect();

    let mut states: BTreeMap<AgentId, ValueAgent> = BTreeMap::new();
    for var in inst.variables() {
        let in_tree = members.contains(var);
        states.insert(
            inst.owner(*var)?,
            ValueAgent {
                var: *var,
                parent_var: tree.parent(*var).map(|(p, _)| p),
                is_root: in_tree && tree.parent(*var).is_none(),
                chosen: None,
            },
        );
    }
    if members.is_empty() {
        return Ok(BTreeMap::new());
    }

    net.begin_phase();
    let mut waves = 0usize;
    loop {
        let mut broadcasts: Vec<(VarId, i64, i64)> = Vec::new();
        run_phase(net, &mut states, |_agent, st, inbox, _net| {
            let mut parent_pair: Option<(i64, i64)> = None;
            for msg in inbox {
                if let Payload::ValuePair { lb, ub } = msg.payload {
                    let sender_var = var_of[&msg.sender];
                    let ctx = contexts.get_mut(&st.var).expect("context exists");
                    ctx.check.insert(sender_var, lb);
                    ctx.hat.insert(sender_var, ub);
                    if Some(sender_var) == st.parent_var {
                        parent_pair = Some((lb, ub));
                    }
                }
            }
            if st.chosen.is_some() {
                return Ok(());
            }
            let ready_root = st.is_root;
            if ready_root || parent_pair.is_some() {
                let tables = &utils.tables[&st.var];
                let (lb_idx, ub_idx) = if ready_root {
                    (argmax(&tables.lb), argmax(&tables.ub))
                } else {
                    let (plb, pub_) = parent_pair.unwrap();
                    let pvar = st.parent_var.unwrap();
                    let plb_idx = inst.index_of(pvar, plb)?;
                    let pub_idx = inst.index_of(pvar, pub_)?;
                    (tables.choose_lb(plb_idx), tables.choose_ub(pub_idx))
                };
                let pair = (tables.own_values[lb_idx], tables.own_values[ub_idx]);
                st.chosen = Some(pair);
                broadcasts.push((st.var, pair.0, pair.1));
            }
            Ok(())
        })?;

        for (var, lb, ub) in broadcasts {
            let sender = inst.owner(var)?;
            for nbr in inst.neighbors(var)? {
                net.send(Message {
                    sender,
                    receiver: inst.owner(*nbr)?,
                    payload: Payload::ValuePair { lb, ub },
                })?;
            }
        }
        net.deliver_round();

        let all_chosen = states
            .values()
            .filter(|s| members.contains(&s.var))
            .all(|s| s.chosen.is_some());
        if all_chosen && !net.pending() {
            break;
        }
        waves += 1;
        assert!(waves <= members.len() + 2, "value pass failed to quiesce");
    }
    net.end_phase(tree.depth());

    Ok(states
        .values()
        .filter(|s| members.contains(&s.var))
        .map(|s| (s.var, s.chosen.unwrap()))
        .collect())
}

struct BoundAgent {
    var: VarId,
    pending_children: usize,
    acc_lb: Utility,
    acc_ub: Utility,
    done: bool,
}

/// Leaf-to-root accumulation over the global pseudo-tree. Each agent adds the
/// function toward its parent and toward each pseudo-parent, so every function
/// is counted exactly once; the upper-bound side reads the surrogate cache.
pub fn bound_propagation(
    t_global: &PseudoTree,
    inst: &DcopInstance,
    x_check: &Assignment,
    x_hat: &Assignment,
    cache: &UpperBoundCache,
    net: &mut Network,
) -> Result<(Utility, Utility)> {
    let owner_of: BTreeMap<VarId, AgentId> = inst
        .variables()
        .iter()
        .map(|v| (*v, inst.owner(*v).unwrap()))
        .collect();
    let mut states: BTreeMap<AgentId, BoundAgent> = BTreeMap::new();
    for var in t_global.nodes() {
        states.insert(
            owner_of[&var],
            BoundAgent {
                var,
                pending_children: t_global.children(var).len(),
                acc_lb: Utility::ZERO,
                acc_ub: Utility::ZERO,
                done: false,
            },
        );
    }

    let mut totals = (Utility::ZERO, Utility::ZERO);
    net.begin_phase();
    let mut waves = 0usize;
    loop {
        let mut sends: Vec<(VarId, VarId, Utility, Utility)> = Vec::new();
        let mut roots: Vec<(Utility, Utility)> = Vec::new();
        run_phase(net, &mut states, |agent, st, inbox, net| {
            for msg in inbox {
                if let Payload::BoundsPair { lb, ub } = msg.payload {
                    st.acc_lb = st.acc_lb + lb;
                    st.acc_ub = st.acc_ub + ub;
                    st.pending_children -= 1;
                }
            }
            if st.done || st.pending_children > 0 {
                return Ok(());
            }
            st.done = true;

            let mut lb = st.acc_lb;
            let mut ub = st.acc_ub;
            let mut checks = 0u64;
            let own_check = x_check.get(st.var).expect("assignment is complete");
            let own_hat = x_hat.get(st.var).expect("assignment is complete");
            let mut counted: Vec<(VarId, FunctionId)> = t_global.pseudo_parents(st.var).to_vec();
            if let Some(edge) = t_global.parent(st.var) {
                counted.push(edge);
            }
            for (other, fid) in &counted {
                let f = inst.function(*fid).expect("function exists");
                lb = lb
                    + inst.evaluate_function(
                        f,
                        (st.var, own_check),
                        (*other, x_check.get(*other).expect("complete")),
                    )?;
                checks += 1;
                // surrogate reads are cache scalars; hat-side arguments are
                // bookkeeping only
                let _ = own_hat;
                ub = ub + cache.read(*fid);
            }
            net.note_checks(agent, checks);

            match t_global.parent(st.var) {
                Some((pvar, _)) => sends.push((st.var, pvar, lb, ub)),
                None => roots.push((lb, ub)),
            }
            Ok(())
        })?;

        for (var, pvar, lb, ub) in sends {
            net.send(Message {
                sender: owner_of[&var],
                receiver: owner_of[&pvar],
                payload: Payload::BoundsPair { lb, ub },
            })?;
        }
        for (lb, ub) in roots {
            totals.0 = totals.0 + lb;
            totals.1 = totals.1 + ub;
        }
        net.deliver_round();

        if states.values().all(|s| s.done) && !net.pending() {
            break;
        }
        waves += 1;
        assert!(
            waves <= t_global.node_count() + 2,
            "bound pass failed to quiesce"
        );
    }
    net.end_phase(t_global.depth());

    Ok(totals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::model::AgentId;
    use crate::sim::{MessageKind, DEFAULT_T_CC, DEFAULT_T_MSG};

    fn worked_example() -> DcopInstance {
        crate::io::from_json(include_str!("../tests/data/worked_example.json")).unwrap()
    }

    fn flags_preserving(inst: &DcopInstance, preserved: &[VarId]) -> BTreeMap<VarId, DestroyFlag> {
        inst.variables()
            .iter()
            .map(|v| {
                let z = if preserved.contains(v) {
                    DestroyFlag::Preserved
                } else {
                    DestroyFlag::Destroyed
                };
                (*v, z)
            })
            .collect()
    }

    fn initial_check() -> Assignment {
        Assignment::from_pairs([(VarId(1), 0), (VarId(2), 1), (VarId(3), 0), (VarId(4), 0)])
    }

    fn fresh_net(inst: &DcopInstance) -> Network {
        Network::new(inst.agents(), DEFAULT_T_CC, DEFAULT_T_MSG)
    }

    fn fresh_contexts(inst: &DcopInstance, a: &Assignment) -> BTreeMap<VarId, Context> {
        inst.variables()
            .iter()
            .map(|v| {
                let mut ctx = Context::default();
                for n in inst.neighbors(*v).unwrap() {
                    ctx.check.insert(*n, a.get(*n).unwrap());
                    ctx.hat.insert(*n, a.get(*n).unwrap());
                }
                (*v, ctx)
            })
            .collect()
    }

    #[test]
    fn relaxation_matches_example_iterations() {
        let inst = worked_example();
        let g = build_graph(&inst);
        let mut usage = EdgeUsage::default();

        let t1 = relaxation(&flags_preserving(&inst, &[VarId(2)]), &g, &usage, 0);
        let expect1: BTreeSet<FunctionId> = [FunctionId(1), FunctionId(4)].into_iter().collect();
        assert_eq!(*t1.tree_edges(), expect1);

        usage.record_tree_edges(t1.tree_edges().iter().copied());
        let t2 = relaxation(&flags_preserving(&inst, &[VarId(3)]), &g, &usage, 0);
        let expect2: BTreeSet<FunctionId> = [FunctionId(0), FunctionId(3)].into_iter().collect();
        assert_eq!(*t2.tree_edges(), expect2);
    }

    #[test]
    fn relaxation_of_all_preserved_is_empty() {
        let inst = worked_example();
        let g = build_graph(&inst);
        let all: Vec<VarId> = inst.variables().to_vec();
        let t = relaxation(&flags_preserving(&inst, &all), &g, &EdgeUsage::default(), 0);
        assert_eq!(t.node_count(), 0);
        assert!(t.roots.is_empty());
    }

    #[test]
    fn util_pass_root_optima_match_example_iteration_one() {
        let inst = worked_example();
        let g = build_graph(&inst);
        let tree = relaxation(
            &flags_preserving(&inst, &[VarId(2)]),
            &g,
            &EdgeUsage::default(),
            0,
        );
        let mut net = fresh_net(&inst);
        let out = util_propagation(&tree, &inst, &initial_check(), &mut net).unwrap();
        assert_eq!(out.check_optimum, Utility::Finite(26.0));
        assert_eq!(out.hat_optimum, Utility::Finite(16.0));
        // one upward message per non-root destroyed agent
        assert_eq!(net.metrics.sent_by_kind[&MessageKind::Util], 2);
        assert!(net.metrics.max_payload <= 4);
    }

    #[test]
    fn util_projection_is_columnwise_max() {
        let inst = worked_example();
        let g = build_graph(&inst);
        let tree = relaxation(
            &flags_preserving(&inst, &[VarId(2)]),
            &g,
            &EdgeUsage::default(),
            0,
        );
        let mut net = fresh_net(&inst);
        let out = util_propagation(&tree, &inst, &initial_check(), &mut net).unwrap();
        for tables in out.tables.values() {
            let dp = tables.parent_values.len();
            for p in 0..dp {
                let col_max = (0..tables.own_values.len())
                    .map(|i| tables.lb[i * dp + p])
                    .fold(Utility::NegInf, Utility::max);
                assert_eq!(tables.lb_projected[p], col_max);
            }
        }
    }

    #[test]
    fn singleton_destroyed_agent_has_unary_tables() {
        let inst = worked_example();
        // destroy only x2: its neighbors x1 and x4 are preserved
        let tree = relaxation(
            &flags_preserving(&inst, &[VarId(1), VarId(3), VarId(4)]),
            &build_graph(&inst),
            &EdgeUsage::default(),
            0,
        );
        let mut net = fresh_net(&inst);
        let out = util_propagation(&tree, &inst, &initial_check(), &mut net).unwrap();
        let t = &out.tables[&VarId(2)];
        assert!(t.parent_values.is_empty());
        // lower-bound side sums f12(x1=0, .) and f24(., x4=0)
        assert_eq!(t.lb, vec![Utility::Finite(12.0), Utility::Finite(0.0)]);
        // upper-bound side has no tree edges at all
        assert_eq!(t.ub, vec![Utility::ZERO, Utility::ZERO]);
    }

    #[test]
    fn value_pass_reaches_example_solution() {
        let inst = worked_example();
        let g = build_graph(&inst);
        let prev = initial_check();
        let tree = relaxation(
            &flags_preserving(&inst, &[VarId(2)]),
            &g,
            &EdgeUsage::default(),
            0,
        );
        let mut net = fresh_net(&inst);
        let out = util_propagation(&tree, &inst, &prev, &mut net).unwrap();
        let mut contexts = fresh_contexts(&inst, &prev);
        let chosen = value_propagation(&tree, &inst, &out, &mut contexts, &mut net).unwrap();
        assert_eq!(chosen[&VarId(1)], (0, 0));
        assert_eq!(chosen[&VarId(3)], (0, 0));
        assert_eq!(chosen[&VarId(4)], (1, 1));
        // compose the full candidate and check its objective value
        let mut full = prev.clone();
        for (v, (lb, _)) in &chosen {
            full.bind(*v, *lb);
        }
        assert_eq!(inst.evaluate_total(&full).unwrap(), Utility::Finite(32.0));
        // every destroyed agent broadcast to every constraint-graph neighbor
        let expect: u64 = [VarId(1), VarId(3), VarId(4)]
            .iter()
            .map(|v| inst.neighbors(*v).unwrap().len() as u64)
            .sum();
        assert_eq!(net.metrics.sent_by_kind[&MessageKind::Value], expect);
        // contexts track the broadcast values
        assert_eq!(contexts[&VarId(2)].check[&VarId(4)], 1);
    }

    #[test]
    fn value_tie_break_prefers_lowest_domain_value() {
        // single variable pair with a constant table: both argmaxes tie
        let f = BinaryFunction::new(
            FunctionId(0),
            (VarId(0), VarId(1)),
            2,
            2,
            vec![Utility::Finite(5.0); 4],
        )
        .unwrap();
        let inst = DcopInstance::new(
            vec![(VarId(0), vec![3, 9]), (VarId(1), vec![4, 8])],
            vec![f],
            [(VarId(0), AgentId(0)), (VarId(1), AgentId(1))]
                .into_iter()
                .collect(),
        )
        .unwrap();
        let g = build_graph(&inst);
        let flags: BTreeMap<VarId, DestroyFlag> = inst
            .variables()
            .iter()
            .map(|v| (*v, DestroyFlag::Destroyed))
            .collect();
        let tree = relaxation(&flags, &g, &EdgeUsage::default(), 0);
        let mut net = fresh_net(&inst);
        let prev = Assignment::from_pairs([(VarId(0), 9), (VarId(1), 8)]);
        let out = util_propagation(&tree, &inst, &prev, &mut net).unwrap();
        let mut contexts = fresh_contexts(&inst, &prev);
        let chosen = value_propagation(&tree, &inst, &out, &mut contexts, &mut net).unwrap();
        assert_eq!(chosen[&VarId(0)], (3, 3));
        assert_eq!(chosen[&VarId(1)], (4, 4));
    }

    #[test]
    fn surrogate_cache_follows_example_updates() {
        let inst = worked_example();
        let mut cache = UpperBoundCache::new(&inst);
        for f in inst.functions() {
            assert!(!cache.ever_optimized(f.id));
            assert_eq!(cache.read(f.id), Utility::Finite(10.0));
        }
        let edges: BTreeSet<FunctionId> = [FunctionId(1), FunctionId(4)].into_iter().collect();
        cache.apply_iteration(&edges, Utility::Finite(16.0));
        assert_eq!(cache.read(FunctionId(1)), Utility::Finite(8.0));
        assert_eq!(cache.read(FunctionId(4)), Utility::Finite(8.0));
        assert_eq!(cache.read(FunctionId(0)), Utility::Finite(10.0));
        // re-optimizing inside the group with a worse optimum changes nothing
        let sub: BTreeSet<FunctionId> = [FunctionId(1)].into_iter().collect();
        cache.apply_iteration(&sub, Utility::Finite(6.0));
        assert_eq!(cache.read(FunctionId(1)), Utility::Finite(8.0));
        // an empty relaxation graph is a no-op
        let before = cache.read(FunctionId(1));
        cache.apply_iteration(&BTreeSet::new(), Utility::ZERO);
        assert_eq!(cache.read(FunctionId(1)), before);
    }

    #[test]
    fn surrogate_cache_merge_keeps_the_certificate_sound() {
        // two iterations whose edge sets overlap: a flat mean with per-edge
        // max-of-past semantics would certify 30 here and undershoot the
        // optimum of 40
        let mk = |id: u32, scope: (u32, u32), peak: f64| {
            let mut table = vec![Utility::ZERO; 4];
            table[0] = Utility::Finite(peak);
            BinaryFunction::new(
                FunctionId(id),
                (VarId(scope.0), VarId(scope.1)),
                2,
                2,
                table,
            )
            .unwrap()
        };
        let inst = DcopInstance::new(
            (0..4).map(|i| (VarId(i), vec![0, 1])).collect(),
            vec![mk(0, (0, 1), 20.0), mk(1, (1, 2), 0.0), mk(2, (2, 3), 20.0)],
            (0..4).map(|i| (VarId(i), AgentId(i))).collect(),
        )
        .unwrap();
        let mut cache = UpperBoundCache::new(&inst);
        let first: BTreeSet<FunctionId> = [FunctionId(0), FunctionId(1)].into_iter().collect();
        cache.apply_iteration(&first, Utility::Finite(20.0));
        let second: BTreeSet<FunctionId> = [FunctionId(1), FunctionId(2)].into_iter().collect();
        cache.apply_iteration(&second, Utility::Finite(20.0));
        let total: Utility = inst.functions().iter().map(|f| cache.read(f.id)).sum();
        assert!(
            total >= Utility::Finite(40.0),
            "certificate {total:?} undershoots"
        );
    }

    #[test]
    fn bound_pass_at_initialization_gives_10_and_50() {
        let inst = worked_example();
        let g = build_graph(&inst);
        let t_global = dfs_pseudo_tree(&g, &EdgeUsage::default(), 0);
        let cache = UpperBoundCache::new(&inst);
        let init = initial_check();
        let mut net = fresh_net(&inst);
        let (lb, ub) = bound_propagation(&t_global, &inst, &init, &init, &cache, &mut net).unwrap();
        assert_eq!(lb, Utility::Finite(10.0));
        assert_eq!(ub, Utility::Finite(50.0));
        // one bounds message per non-root agent of the global tree
        assert_eq!(
            net.metrics.sent_by_kind[&MessageKind::Bounds],
            (inst.variables().len() - t_global.roots.len()) as u64
        );
    }

    #[test]
    fn bound_pass_matches_flat_recomputation() {
        let inst = worked_example();
        let g = build_graph(&inst);
        let t_global = dfs_pseudo_tree(&g, &EdgeUsage::default(), 0);
        let mut cache = UpperBoundCache::new(&inst);
        let edges: BTreeSet<FunctionId> = [FunctionId(1), FunctionId(4)].into_iter().collect();
        cache.apply_iteration(&edges, Utility::Finite(16.0));
        let x =
            Assignment::from_pairs([(VarId(1), 0), (VarId(2), 1), (VarId(3), 0), (VarId(4), 1)]);
        let mut net = fresh_net(&inst);
        let (lb, ub) = bound_propagation(&t_global, &inst, &x, &x, &cache, &mut net).unwrap();
        assert!(lb.approx_eq(inst.evaluate_total(&x).unwrap(), 1e-9));
        let flat: Utility = inst.functions().iter().map(|f| cache.read(f.id)).sum();
        assert!(ub.approx_eq(flat, 1e-9));
    }
}
