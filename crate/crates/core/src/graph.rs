//! Constraint graph, large-neighborhood subgraphs, and DFS pseudo-tree
//! (forest) construction with tree-edge usage priority.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::model::{DcopInstance, FunctionId, VarId};

/// An undirected edge backed by a binary function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub function: FunctionId,
    pub endpoints: (VarId, VarId),
}

impl Edge {
    pub fn other(&self, v: VarId) -> VarId {
        if self.endpoints.0 == v {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }
}

/// Nodes are variables; edges correspond one-to-one with binary functions.
#[derive(Clone, Debug, Default)]
pub struct ConstraintGraph {
    nodes: BTreeSet<VarId>,
    edges: Vec<Edge>,
    adjacency: BTreeMap<VarId, Vec<usize>>,
}

impl ConstraintGraph {
    pub fn new(nodes: impl IntoIterator<Item = VarId>, edges: Vec<Edge>) -> Self {
        let nodes: BTreeSet<VarId> = nodes.into_iter().collect();
        let mut adjacency: BTreeMap<VarId, Vec<usize>> =
            nodes.iter().map(|v| (*v, Vec::new())).collect();
        for (idx, e) in edges.iter().enumerate() {
            adjacency
                .get_mut(&e.endpoints.0)
                .expect("endpoint is a node")
                .push(idx);
            adjacency
                .get_mut(&e.endpoints.1)
                .expect("endpoint is a node")
                .push(idx);
        }
        Self {
            nodes,
            edges,
            adjacency,
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = VarId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, v: VarId) -> bool {
        self.nodes.contains(&v)
    }

    pub fn incident(&self, v: VarId) -> impl Iterator<Item = &Edge> + '_ {
        self.adjacency
            .get(&v)
            .into_iter()
            .flatten()
            .map(move |idx| &self.edges[*idx])
    }

    pub fn degree(&self, v: VarId) -> usize {
        self.adjacency.get(&v).map_or(0, |a| a.len())
    }
}

/// Constraint graph of an instance: one edge per function.
pub fn build_graph(inst: &DcopInstance) -> ConstraintGraph {
    let edges = inst
        .functions()
        .iter()
        .map(|f| Edge {
            function: f.id,
            endpoints: f.scope,
        })
        .collect();
    ConstraintGraph::new(inst.variables().iter().copied(), edges)
}

/// Subgraph keeping only `keep` nodes and the edges inside them.
pub fn induced_subgraph(g: &ConstraintGraph, keep: &BTreeSet<VarId>) -> ConstraintGraph {
    let edges = g
        .edges()
        .iter()
        .filter(|e| keep.contains(&e.endpoints.0) && keep.contains(&e.endpoints.1))
        .copied()
        .collect();
    ConstraintGraph::new(keep.iter().copied().filter(|v| g.contains(*v)), edges)
}

/// Count of iterations in which each function served as a tree edge; lower
/// counts get picked first when growing the next pseudo-tree.
#[derive(Clone, Debug, Default)]
pub struct EdgeUsage {
    counts: BTreeMap<FunctionId, u64>,
}

impl EdgeUsage {
    pub fn count(&self, f: FunctionId) -> u64 {
        self.counts.get(&f).copied().unwrap_or(0)
    }

    pub fn record_tree_edges(&mut self, edges: impl IntoIterator<Item = FunctionId>) {
        for f in edges {
            *self.counts.entry(f).or_insert(0) += 1;
        }
    }
}

/// A DFS pseudo-tree arrangement: spanning forest where every non-tree edge
/// connects a node to one of its ancestors.
#[derive(Clone, Debug, Default)]
pub struct PseudoTree {
    pub roots: Vec<VarId>,
    parent: BTreeMap<VarId, (VarId, FunctionId)>,
    children: BTreeMap<VarId, Vec<(VarId, FunctionId)>>,
    pseudo_parents: BTreeMap<VarId, Vec<(VarId, FunctionId)>>,
    pseudo_children: BTreeMap<VarId, Vec<(VarId, FunctionId)>>,
    depth_of: BTreeMap<VarId, u64>,
    preorder: Vec<VarId>,
    tree_edges: BTreeSet<FunctionId>,
}

impl PseudoTree {
    pub fn nodes(&self) -> impl Iterator<Item = VarId> + '_ {
        self.preorder.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.preorder.len()
    }

    pub fn parent(&self, v: VarId) -> Option<(VarId, FunctionId)> {
        self.parent.get(&v).copied()
    }

    pub fn children(&self, v: VarId) -> &[(VarId, FunctionId)] {
        self.children.get(&v).map(|c| c.as_slice()).unwrap_or(&[])
    }

    pub fn pseudo_parents(&self, v: VarId) -> &[(VarId, FunctionId)] {
        self.pseudo_parents
            .get(&v)
            .map(|c| c.as_slice())
            .unwrap_or(&[])
    }

    pub fn pseudo_children(&self, v: VarId) -> &[(VarId, FunctionId)] {
        self.pseudo_children
            .get(&v)
            .map(|c| c.as_slice())
            .unwrap_or(&[])
    }

    pub fn tree_edges(&self) -> &BTreeSet<FunctionId> {
        &self.tree_edges
    }

    /// DFS preorder across all components, roots in ascending id order.
    pub fn preorder(&self) -> &[VarId] {
        &self.preorder
    }

    /// Reverse DFS preorder; the elimination order used by bucket solvers.
    pub fn elimination_order(&self) -> Vec<VarId> {
        self.preorder.iter().rev().copied().collect()
    }

    pub fn depth_of(&self, v: VarId) -> u64 {
        self.depth_of.get(&v).copied().unwrap_or(0)
    }

    /// Edges on the longest root-to-leaf path, maxed over components.
    pub fn depth(&self) -> u64 {
        self.depth_of.values().copied().max().unwrap_or(0)
    }

    pub fn is_ancestor(&self, ancestor: VarId, descendant: VarId) -> bool {
        let mut cur = descendant;
        while let Some((p, _)) = self.parent(cur) {
            if p == ancestor {
                return true;
            }
            cur = p;
        }
        false
    }

    /// Graphviz dump for debugging; layout and ordering are not stable.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph pseudo_tree {\n");
        for (v, (p, f)) in &self.parent {
            let _ = writeln!(out, "  v{p} -- v{v} [label=\"f{f}\"];");
        }
        for (v, pps) in &self.pseudo_parents {
            for (p, f) in pps {
                let _ = writeln!(out, "  v{p} -- v{v} [style=dotted, label=\"f{f}\"];");
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Grow a DFS spanning forest of `g`.
///
/// The root of each component is its lowest variable id. Among edges leading
/// to unvisited neighbors, the one with the lowest historical tree-edge usage
/// wins, ties broken by lowest function id; `_seed` is reserved for a
/// stochastic tie-break and unused while the ordering is total.
pub fn dfs_pseudo_tree(g: &ConstraintGraph, usage: &EdgeUsage, _seed: u64) -> PseudoTree {
    let mut tree = PseudoTree::default();
    let mut visited: BTreeSet<VarId> = BTreeSet::new();

    for start in g.nodes() {
        if visited.contains(&start) {
            continue;
        }
        tree.roots.push(start);
        tree.depth_of.insert(start, 0);
        // iterative DFS; re-scan candidates after each descent because the
        // visited set changes under us
        let mut stack = vec![start];
        visited.insert(start);
        tree.preorder.push(start);
        while let Some(&current) = stack.last() {
            let next = g
                .incident(current)
                .filter(|e| !visited.contains(&e.other(current)))
                .min_by_key(|e| (usage.count(e.function), e.function));
            match next {
                Some(edge) => {
                    let child = edge.other(current);
                    visited.insert(child);
                    tree.preorder.push(child);
                    tree.parent.insert(child, (current, edge.function));
                    tree.children
                        .entry(current)
                        .or_default()
                        .push((child, edge.function));
                    tree.tree_edges.insert(edge.function);
                    let d = tree.depth_of[&current] + 1;
                    tree.depth_of.insert(child, d);
                    stack.push(child);
                }
                None => {
                    stack.pop();
                }
            }
        }
    }

    // classify backedges: the DFS property guarantees each one links a node
    // to an ancestor, with the descendant on the deeper side
    for e in g.edges() {
        if tree.tree_edges.contains(&e.function) {
            continue;
        }
        let (a, b) = e.endpoints;
        let (anc, desc) = if tree.depth_of[&a] <= tree.depth_of[&b] {
            (a, b)
        } else {
            (b, a)
        };
        debug_assert!(tree.is_ancestor(anc, desc), "DFS property violated");
        tree.pseudo_parents
            .entry(desc)
            .or_default()
            .push((anc, e.function));
        tree.pseudo_children
            .entry(anc)
            .or_default()
            .push((desc, e.function));
    }
    for list in tree.pseudo_parents.values_mut() {
        list.sort_unstable();
    }
    for list in tree.pseudo_children.values_mut() {
        list.sort_unstable();
    }
    tree
}

/// Induced width of `g` under an elimination order: the largest number of
/// not-yet-eliminated neighbors seen when a node is eliminated, with fill-in.
pub fn induced_width(g: &ConstraintGraph, order: &[VarId]) -> usize {
    let mut adj: BTreeMap<VarId, BTreeSet<VarId>> =
        g.nodes().map(|v| (v, BTreeSet::new())).collect();
    for e in g.edges() {
        adj.get_mut(&e.endpoints.0).unwrap().insert(e.endpoints.1);
        adj.get_mut(&e.endpoints.1).unwrap().insert(e.endpoints.0);
    }
    let mut eliminated: BTreeSet<VarId> = BTreeSet::new();
    let mut width = 0;
    for &v in order {
        let cluster: Vec<VarId> = adj[&v]
            .iter()
            .copied()
            .filter(|u| !eliminated.contains(u))
            .collect();
        width = width.max(cluster.len());
        for (i, a) in cluster.iter().enumerate() {
            for b in &cluster[i + 1..] {
                adj.get_mut(a).unwrap().insert(*b);
                adj.get_mut(b).unwrap().insert(*a);
            }
        }
        eliminated.insert(v);
    }
    width
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn worked_example_graph() -> ConstraintGraph {
        let inst = crate::io::from_json(include_str!("../tests/data/worked_example.json")).unwrap();
        build_graph(&inst)
    }

    #[test]
    fn example_has_four_nodes_five_edges() {
        let g = worked_example_graph();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edges().len(), 5);
    }

    #[test]
    fn functionless_instance_gives_edgeless_graph() {
        let inst = crate::model::DcopInstance::new(
            vec![(VarId(0), vec![0]), (VarId(1), vec![0])],
            vec![],
            [
                (VarId(0), crate::model::AgentId(0)),
                (VarId(1), crate::model::AgentId(1)),
            ]
            .into_iter()
            .collect(),
        )
        .unwrap();
        let g = build_graph(&inst);
        assert_eq!(g.node_count(), 2);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn induced_subgraph_of_example_without_x2() {
        let g = worked_example_graph();
        let keep: BTreeSet<VarId> = [VarId(1), VarId(3), VarId(4)].into_iter().collect();
        let sub = induced_subgraph(&g, &keep);
        let fns: BTreeSet<FunctionId> = sub.edges().iter().map(|e| e.function).collect();
        let expect: BTreeSet<FunctionId> = [FunctionId(1), FunctionId(2), FunctionId(4)]
            .into_iter()
            .collect();
        assert_eq!(fns, expect);
    }

    #[test]
    fn induced_subgraph_of_empty_keep_set() {
        let g = worked_example_graph();
        let sub = induced_subgraph(&g, &BTreeSet::new());
        assert_eq!(sub.node_count(), 0);
        assert!(sub.edges().is_empty());
    }

    #[test]
    fn fresh_dfs_on_k1_subgraph_picks_f13_f34() {
        let g = worked_example_graph();
        let keep: BTreeSet<VarId> = [VarId(1), VarId(3), VarId(4)].into_iter().collect();
        let sub = induced_subgraph(&g, &keep);
        let tree = dfs_pseudo_tree(&sub, &EdgeUsage::default(), 0);
        let expect: BTreeSet<FunctionId> = [FunctionId(1), FunctionId(4)].into_iter().collect();
        assert_eq!(*tree.tree_edges(), expect);
        assert_eq!(tree.roots, vec![VarId(1)]);
    }

    #[test]
    fn bumped_history_steers_k2_subgraph_to_f12_f24() {
        let g = worked_example_graph();
        let mut usage = EdgeUsage::default();
        usage.record_tree_edges([FunctionId(1), FunctionId(4)]);
        let keep: BTreeSet<VarId> = [VarId(1), VarId(2), VarId(4)].into_iter().collect();
        let sub = induced_subgraph(&g, &keep);
        let tree = dfs_pseudo_tree(&sub, &usage, 0);
        let expect: BTreeSet<FunctionId> = [FunctionId(0), FunctionId(3)].into_iter().collect();
        assert_eq!(*tree.tree_edges(), expect);
    }

    #[test]
    fn single_node_graph_is_a_rootless_forest_of_one() {
        let g = ConstraintGraph::new([VarId(7)], vec![]);
        let tree = dfs_pseudo_tree(&g, &EdgeUsage::default(), 0);
        assert_eq!(tree.roots, vec![VarId(7)]);
        assert!(tree.tree_edges().is_empty());
        assert_eq!(tree.depth(), 0);
    }

    #[test]
    fn induced_width_of_a_path_is_one() {
        let edges = vec![
            Edge {
                function: FunctionId(0),
                endpoints: (VarId(0), VarId(1)),
            },
            Edge {
                function: FunctionId(1),
                endpoints: (VarId(1), VarId(2)),
            },
        ];
        let g = ConstraintGraph::new([VarId(0), VarId(1), VarId(2)], edges);
        let tree = dfs_pseudo_tree(&g, &EdgeUsage::default(), 0);
        assert_eq!(induced_width(&g, &tree.elimination_order()), 1);
    }

    #[test]
    fn induced_width_of_example_under_dfs_order_is_two() {
        let g = worked_example_graph();
        let tree = dfs_pseudo_tree(&g, &EdgeUsage::default(), 0);
        assert_eq!(induced_width(&g, &tree.elimination_order()), 2);
    }

    #[test]
    fn induced_width_of_clique() {
        for m in [3usize, 4, 5] {
            let nodes: Vec<VarId> = (0..m as u32).map(VarId).collect();
            let mut edges = Vec::new();
            let mut fid = 0;
            for i in 0..m {
                for j in (i + 1)..m {
                    edges.push(Edge {
                        function: FunctionId(fid),
                        endpoints: (nodes[i], nodes[j]),
                    });
                    fid += 1;
                }
            }
            let g = ConstraintGraph::new(nodes.clone(), edges);
            assert_eq!(induced_width(&g, &nodes), m - 1);
        }
    }

    fn random_graph(seed: u64, n: usize, extra: usize) -> ConstraintGraph {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let nodes: Vec<VarId> = (0..n as u32).map(VarId).collect();
        let mut pairs: BTreeSet<(u32, u32)> = BTreeSet::new();
        for i in 1..n as u32 {
            pairs.insert((rng.gen_range(0..i), i));
        }
        for _ in 0..extra {
            let a = rng.gen_range(0..n as u32);
            let b = rng.gen_range(0..n as u32);
            if a != b {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
        let edges = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (a, b))| Edge {
                function: FunctionId(i as u32),
                endpoints: (VarId(a), VarId(b)),
            })
            .collect();
        ConstraintGraph::new(nodes, edges)
    }

    #[test]
    fn dfs_property_holds_on_fifty_random_graphs() {
        for seed in 0..50 {
            let g = random_graph(seed, 3 + (seed as usize % 10), seed as usize % 12);
            let tree = dfs_pseudo_tree(&g, &EdgeUsage::default(), seed);
            // ancestor-walk oracle over every non-tree edge
            for e in g.edges() {
                if tree.tree_edges().contains(&e.function) {
                    continue;
                }
                let (a, b) = e.endpoints;
                assert!(
                    tree.is_ancestor(a, b) || tree.is_ancestor(b, a),
                    "backedge {:?} spans branches (seed {seed})",
                    e
                );
            }
            let n_tree = tree.tree_edges().len();
            assert_eq!(n_tree, g.node_count() - tree.roots.len());
        }
    }

    #[test]
    fn usage_bump_changes_the_tree_when_a_cycle_exists() {
        for seed in 0..30u64 {
            let g = random_graph(seed, 4 + (seed as usize % 6), 4);
            if g.edges().len() == g.node_count() - 1 {
                continue; // acyclic, nothing to vary
            }
            let mut usage = EdgeUsage::default();
            let first = dfs_pseudo_tree(&g, &usage, seed);
            usage.record_tree_edges(first.tree_edges().iter().copied());
            let second = dfs_pseudo_tree(&g, &usage, seed);
            assert_ne!(first.tree_edges(), second.tree_edges(), "seed {seed}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn subgraph_matches_filter_oracle(seed in 0u64..500, keep_mask in 0u32..256) {
            let g = random_graph(seed, 8, 6);
            let keep: BTreeSet<VarId> = (0u32..8)
                .filter(|i| keep_mask & (1 << i) != 0)
                .map(VarId)
                .collect();
            let sub = induced_subgraph(&g, &keep);
            let expect: Vec<Edge> = g
                .edges()
                .iter()
                .filter(|e| keep.contains(&e.endpoints.0) && keep.contains(&e.endpoints.1))
                .copied()
                .collect();
            prop_assert_eq!(sub.edges().to_vec(), expect);
        }
    }
}
