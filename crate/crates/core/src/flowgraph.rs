//! Signal flow graphs of state-space systems and the path searches built on
//! them: shortest forward paths, decoupling frameworks (node-disjoint
//! shortest paths, one per output) and integrator-string selections.
//!
//! Indices are zero-based; rendering adds one.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use num_traits::Zero;
use serde::Serialize;

use crate::algebra::{Mat, Rat};
use crate::system::StateSpaceSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum NodeKind {
    Input,
    State,
    Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SfgNode {
    pub kind: NodeKind,
    pub index: usize,
}

impl SfgNode {
    pub fn input(i: usize) -> Self {
        SfgNode { kind: NodeKind::Input, index: i }
    }

    pub fn state(i: usize) -> Self {
        SfgNode { kind: NodeKind::State, index: i }
    }

    pub fn output(i: usize) -> Self {
        SfgNode { kind: NodeKind::Output, index: i }
    }
}

impl fmt::Display for SfgNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            NodeKind::Input => "u",
            NodeKind::State => "x",
            NodeKind::Output => "y",
        };
        write!(f, "{k}:{}", self.index + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: SfgNode,
    pub to: SfgNode,
    pub gain: Rat,
    /// 1 for branches into an integrator, 0 for output taps.
    pub order: u8,
}

#[derive(Clone, Debug)]
pub struct SignalFlowGraph {
    n: usize,
    m: usize,
    p: usize,
    edges: Vec<Edge>,
    input_succ: Vec<Vec<usize>>,
    state_succ: Vec<Vec<usize>>,
    state_pred: Vec<Vec<usize>>,
    /// States tapped by each output.
    output_taps: Vec<Vec<usize>>,
    state_in_degree: Vec<usize>,
}

/// Builds the graph: `u_j -> x_i` iff `B[i][j] != 0`, `x_j -> x_i` iff
/// `A[i][j] != 0`, `x_j -> y_i` iff `C[i][j] != 0`.
pub fn build_sfg(sys: &StateSpaceSystem) -> SignalFlowGraph {
    build_sfg_from(&sys.a, &sys.b, &sys.c)
}

pub fn build_sfg_from(a: &Mat, b: &Mat, c: &Mat) -> SignalFlowGraph {
    let (n, m, p) = (a.rows(), b.cols(), c.rows());
    let mut edges = Vec::new();
    let mut input_succ = vec![Vec::new(); m];
    let mut state_succ = vec![Vec::new(); n];
    let mut state_pred = vec![Vec::new(); n];
    let mut output_taps = vec![Vec::new(); p];
    let mut state_in_degree = vec![0; n];
    for j in 0..m {
        for i in 0..n {
            if !b[(i, j)].is_zero() {
                edges.push(Edge { from: SfgNode::input(j), to: SfgNode::state(i), gain: b[(i, j)].clone(), order: 1 });
                input_succ[j].push(i);
                state_in_degree[i] += 1;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if !a[(i, j)].is_zero() {
                edges.push(Edge { from: SfgNode::state(j), to: SfgNode::state(i), gain: a[(i, j)].clone(), order: 1 });
                state_succ[j].push(i);
                state_pred[i].push(j);
                state_in_degree[i] += 1;
            }
        }
    }
    for i in 0..p {
        for j in 0..n {
            if !c[(i, j)].is_zero() {
                edges.push(Edge { from: SfgNode::state(j), to: SfgNode::output(i), gain: c[(i, j)].clone(), order: 0 });
                output_taps[i].push(j);
            }
        }
    }
    for s in &mut state_succ {
        s.sort_unstable();
    }
    SignalFlowGraph { n, m, p, edges, input_succ, state_succ, state_pred, output_taps, state_in_degree }
}

impl SignalFlowGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.n + self.m + self.p
    }

    pub fn state_successors(&self, j: usize) -> &[usize] {
        &self.state_succ[j]
    }

    pub fn input_successors(&self, j: usize) -> &[usize] {
        &self.input_succ[j]
    }

    pub fn output_taps(&self, i: usize) -> &[usize] {
        &self.output_taps[i]
    }

    /// One edge per line: `u:1 -> x:1 gain=1/1 order=1`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&format!(
                "{} -> {} gain={}/{} order={}\n",
                e.from,
                e.to,
                e.gain.numer(),
                e.gain.denom(),
                e.order
            ));
        }
        out
    }

    /// Order-of-arrival distances from a set of start states (distance 1)
    /// through state edges, optionally avoiding blocked states.
    fn bfs(&self, starts: &[usize], blocked: &[bool]) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        for &s in starts {
            if !blocked[s] && dist[s].is_none() {
                dist[s] = Some(1);
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            let dv = dist[v].unwrap();
            for &w in &self.state_succ[v] {
                if !blocked[w] && dist[w].is_none() {
                    dist[w] = Some(dv + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Distance (path order) from input `j` to every state.
    pub fn distances_from_input(&self, j: usize) -> Vec<Option<usize>> {
        self.bfs(&self.input_succ[j], &vec![false; self.n])
    }

    /// All minimum-order state sequences from input `j` ending at one of `ends`.
    fn shortest_state_paths(&self, j: usize, ends: &[usize]) -> Vec<Vec<usize>> {
        let dist = self.distances_from_input(j);
        let Some(best) = ends.iter().filter_map(|&e| dist[e]).min() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut ends: Vec<usize> = ends.iter().copied().filter(|&e| dist[e] == Some(best)).collect();
        ends.sort_unstable();
        ends.dedup();
        for e in ends {
            let mut stack = vec![e];
            self.collect_back(j, &dist, &mut stack, &mut out);
        }
        out.sort();
        out
    }

    fn collect_back(&self, j: usize, dist: &[Option<usize>], stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let v = *stack.last().unwrap();
        let dv = dist[v].unwrap();
        if dv == 1 {
            if self.input_succ[j].contains(&v) {
                let mut path = stack.clone();
                path.reverse();
                out.push(path);
            }
            return;
        }
        let mut preds: Vec<usize> = self.state_pred[v].iter().copied().filter(|&w| dist[w] == Some(dv - 1)).collect();
        preds.sort_unstable();
        preds.dedup();
        for w in preds {
            stack.push(w);
            self.collect_back(j, dist, stack, out);
            stack.pop();
        }
    }

    /// States reachable from the given inputs.
    pub fn reachable_from_inputs(&self, inputs: &[usize]) -> Vec<bool> {
        let starts: Vec<usize> = inputs.iter().flat_map(|&j| self.input_succ[j].iter().copied()).collect();
        self.bfs(&starts, &vec![false; self.n]).into_iter().map(|d| d.is_some()).collect()
    }

    /// States reachable from the given states (including themselves).
    pub fn reachable_from_states(&self, states: &[usize]) -> Vec<bool> {
        self.bfs(states, &vec![false; self.n]).into_iter().map(|d| d.is_some()).collect()
    }

    /// Preference tier of a string terminal: 1 when the state feeds no other
    /// first-order branch, 2 when it feeds a state that also receives other
    /// branches, 3 otherwise.
    pub fn terminal_tier(&self, t: usize) -> u8 {
        let succ = &self.state_succ[t];
        if succ.is_empty() {
            1
        } else if succ.iter().any(|&k| self.state_in_degree[k] >= 2) {
            2
        } else {
            3
        }
    }
}

/// True iff the state subgraph has no directed cycle (self-loops included).
pub fn is_tree(sfg: &SignalFlowGraph) -> bool {
    let mut indeg = vec![0usize; sfg.n];
    for succ in &sfg.state_succ {
        for &w in succ {
            indeg[w] += 1;
        }
    }
    let mut queue: VecDeque<usize> = (0..sfg.n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop_front() {
        seen += 1;
        for &w in &sfg.state_succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    seen == sfg.n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum PathEnd {
    Output(usize),
    State(usize),
}

/// A node-simple path from an input through states to an output or state.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GeneralPath {
    pub input: usize,
    pub end: PathEnd,
    /// States in traversal order, input side first.
    pub states: Vec<usize>,
}

impl GeneralPath {
    /// Number of first-order branches traversed.
    pub fn order(&self) -> usize {
        self.states.len()
    }

    pub fn shares_node_with(&self, other: &GeneralPath) -> bool {
        self.input == other.input || self.states.iter().any(|s| other.states.contains(s))
    }
}

impl fmt::Display for GeneralPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.input + 1)?;
        for s in &self.states {
            write!(f, "->x{}", s + 1)?;
        }
        if let PathEnd::Output(y) = self.end {
            write!(f, "->y{}", y + 1)?;
        }
        Ok(())
    }
}

/// Every minimum-order path from `input` to `output`; empty when unreachable.
pub fn shortest_paths(sfg: &SignalFlowGraph, input: usize, output: usize) -> Vec<GeneralPath> {
    sfg.shortest_state_paths(input, &sfg.output_taps[output])
        .into_iter()
        .map(|states| GeneralPath { input, end: PathEnd::Output(output), states })
        .collect()
}

/// Every minimum-order path from `input` to the state `terminal`.
pub fn shortest_strings(sfg: &SignalFlowGraph, input: usize, terminal: usize) -> Vec<GeneralPath> {
    sfg.shortest_state_paths(input, &[terminal])
        .into_iter()
        .map(|states| GeneralPath { input, end: PathEnd::State(terminal), states })
        .collect()
}

/// One node-disjoint shortest path per output, with distinct inputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecouplingFramework {
    /// `paths[i]` ends at output `i`.
    pub paths: Vec<GeneralPath>,
}

impl DecouplingFramework {
    /// Input assigned to each output.
    pub fn assignment(&self) -> Vec<usize> {
        self.paths.iter().map(|p| p.input).collect()
    }

    /// General relative orders.
    pub fn orders(&self) -> Vec<usize> {
        self.paths.iter().map(GeneralPath::order).collect()
    }

    pub fn used_inputs(&self) -> BTreeSet<usize> {
        self.paths.iter().map(|p| p.input).collect()
    }

    pub fn used_states(&self) -> BTreeSet<usize> {
        self.paths.iter().flat_map(|p| p.states.iter().copied()).collect()
    }

    fn sort_key(&self) -> (Vec<usize>, Vec<Vec<usize>>) {
        (self.assignment(), self.paths.iter().map(|p| p.states.clone()).collect())
    }
}

impl fmt::Display for DecouplingFramework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.paths.iter().map(ToString::to_string).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Enumeration<T> {
    pub items: Vec<T>,
    /// The limit stopped the search before it was exhausted.
    pub truncated: bool,
}

/// All decoupling frameworks, sorted by assignment then by state indices.
///
/// The search backtracks over per-output candidate sets, visiting outputs
/// with the fewest candidates first. `limit = None` is unbounded.
pub fn enumerate_frameworks(sfg: &SignalFlowGraph, limit: Option<usize>) -> Enumeration<DecouplingFramework> {
    let p = sfg.p;
    let candidates: Vec<Vec<GeneralPath>> =
        (0..p).map(|y| (0..sfg.m).flat_map(|u| shortest_paths(sfg, u, y)).collect()).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by_key(|&y| (candidates[y].len(), y));

    struct Search<'a> {
        candidates: &'a [Vec<GeneralPath>],
        order: &'a [usize],
        used_inputs: Vec<bool>,
        used_states: Vec<bool>,
        chosen: Vec<Option<GeneralPath>>,
        found: Vec<DecouplingFramework>,
        limit: Option<usize>,
        truncated: bool,
    }

    impl Search<'_> {
        fn run(&mut self, depth: usize) {
            if self.truncated {
                return;
            }
            if depth == self.order.len() {
                if self.limit.is_some_and(|l| self.found.len() >= l) {
                    self.truncated = true;
                    return;
                }
                let paths = self.chosen.iter().map(|p| p.clone().unwrap()).collect();
                self.found.push(DecouplingFramework { paths });
                return;
            }
            let y = self.order[depth];
            for path in &self.candidates[y] {
                if self.used_inputs[path.input] || path.states.iter().any(|&s| self.used_states[s]) {
                    continue;
                }
                self.used_inputs[path.input] = true;
                for &s in &path.states {
                    self.used_states[s] = true;
                }
                self.chosen[y] = Some(path.clone());
                self.run(depth + 1);
                self.chosen[y] = None;
                for &s in &path.states {
                    self.used_states[s] = false;
                }
                self.used_inputs[path.input] = false;
                if self.truncated {
                    return;
                }
            }
        }
    }

    let mut search = Search {
        candidates: &candidates,
        order: &order,
        used_inputs: vec![false; sfg.m],
        used_states: vec![false; sfg.n],
        chosen: vec![None; p],
        found: Vec::new(),
        limit,
        truncated: false,
    };
    if p > 0 {
        search.run(0);
    }
    let mut items = search.found;
    items.sort_by_key(DecouplingFramework::sort_key);
    Enumeration { items, truncated: search.truncated }
}

/// An integrator-string: a shortest path from an input to a state.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct IntegratorString {
    pub input: usize,
    pub terminal: usize,
    pub states: Vec<usize>,
}

impl IntegratorString {
    pub fn order(&self) -> usize {
        self.states.len()
    }

    pub fn shares_node_with(&self, other: &IntegratorString) -> bool {
        self.input == other.input || self.states.iter().any(|s| other.states.contains(s))
    }

    pub fn as_path(&self) -> GeneralPath {
        GeneralPath { input: self.input, end: PathEnd::State(self.terminal), states: self.states.clone() }
    }
}

impl fmt::Display for IntegratorString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_path())
    }
}

/// Candidate strings avoiding the given inputs and states, ranked by
/// terminal tier, then terminal index, then input, then path.
pub fn candidate_strings(
    sfg: &SignalFlowGraph,
    used_inputs: &BTreeSet<usize>,
    used_states: &BTreeSet<usize>,
) -> Vec<IntegratorString> {
    let mut out = Vec::new();
    for u in (0..sfg.m).filter(|u| !used_inputs.contains(u)) {
        let dist = sfg.distances_from_input(u);
        for t in (0..sfg.n).filter(|t| dist[*t].is_some() && !used_states.contains(t)) {
            for path in sfg.shortest_state_paths(u, &[t]) {
                if path.iter().any(|s| used_states.contains(s)) {
                    continue;
                }
                out.push(IntegratorString { input: u, terminal: t, states: path });
            }
        }
    }
    out.sort_by(|a, b| {
        (sfg.terminal_tier(a.terminal), a.terminal, a.input, &a.states).cmp(&(
            sfg.terminal_tier(b.terminal),
            b.terminal,
            b.input,
            &b.states,
        ))
    });
    out
}

/// Selections of pairwise-disjoint strings avoiding the framework, by
/// increasing size and, within a size, lexicographically in candidate rank.
/// The empty selection comes first.
pub fn enumerate_strings(
    sfg: &SignalFlowGraph,
    fw: &DecouplingFramework,
    limit: Option<usize>,
) -> Enumeration<Vec<IntegratorString>> {
    let cands = candidate_strings(sfg, &fw.used_inputs(), &fw.used_states());
    let max_size = cands.iter().map(|c| c.input).collect::<BTreeSet<_>>().len();
    let mut result = Enumeration { items: Vec::new(), truncated: false };
    for size in 0..=max_size {
        let sel = disjoint_selections(&cands, size, limit.map(|l| l.saturating_sub(result.items.len())));
        result.items.extend(sel.items);
        if sel.truncated {
            result.truncated = true;
            break;
        }
    }
    result
}

/// Pairwise-disjoint `size`-subsets of `cands` in lexicographic index order.
pub fn disjoint_selections(
    cands: &[IntegratorString],
    size: usize,
    limit: Option<usize>,
) -> Enumeration<Vec<IntegratorString>> {
    fn rec(
        cands: &[IntegratorString],
        start: usize,
        size: usize,
        cur: &mut Vec<usize>,
        out: &mut Enumeration<Vec<IntegratorString>>,
        limit: Option<usize>,
    ) {
        if out.truncated {
            return;
        }
        if cur.len() == size {
            if limit.is_some_and(|l| out.items.len() >= l) {
                out.truncated = true;
                return;
            }
            out.items.push(cur.iter().map(|&i| cands[i].clone()).collect());
            return;
        }
        for i in start..cands.len() {
            if cur.iter().any(|&k| cands[k].shares_node_with(&cands[i])) {
                continue;
            }
            cur.push(i);
            rec(cands, i + 1, size, cur, out, limit);
            cur.pop();
            if out.truncated {
                return;
            }
        }
    }
    let mut out = Enumeration { items: Vec::new(), truncated: false };
    rec(cands, 0, size, &mut Vec::new(), &mut out, limit);
    out
}

/// Reachability split of the states with respect to a set of inputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsystemPartition {
    pub reachable: Vec<usize>,
    pub complement: Vec<usize>,
    pub a11: Mat,
    pub a12: Mat,
    pub a22: Mat,
    /// Rows of `B` on the reachable states, columns of the chosen inputs.
    pub b11: Mat,
}

pub fn controllable_partition(sys: &StateSpaceSystem, inputs: &[usize]) -> SubsystemPartition {
    let sfg = build_sfg(sys);
    let mask = sfg.reachable_from_inputs(inputs);
    let reachable: Vec<usize> = (0..sys.n()).filter(|&i| mask[i]).collect();
    let complement: Vec<usize> = (0..sys.n()).filter(|&i| !mask[i]).collect();
    SubsystemPartition {
        a11: sys.a.submatrix(&reachable, &reachable),
        a12: sys.a.submatrix(&reachable, &complement),
        a22: sys.a.submatrix(&complement, &complement),
        b11: sys.b.submatrix(&reachable, inputs),
        reachable,
        complement,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::{identity_system, nine_state, NineStateCoupling};

    #[test]
    fn identity_graph() {
        let g = build_sfg(&identity_system(1));
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.dump(), "u:1 -> x:1 gain=1/1 order=1\nx:1 -> y:1 gain=1/1 order=0\n");
        assert!(is_tree(&g));
    }

    #[test]
    fn nine_state_graph_counts() {
        let g = build_sfg(&nine_state(NineStateCoupling::FromX3));
        let count = |k: NodeKind, o: u8| g.edges().iter().filter(|e| e.from.kind == k && e.order == o).count();
        assert_eq!(count(NodeKind::Input, 1), 4);
        assert_eq!(count(NodeKind::State, 1), 6);
        assert_eq!(count(NodeKind::State, 0), 4);
        let a_edges: BTreeSet<(usize, usize)> = g
            .edges()
            .iter()
            .filter(|e| e.from.kind == NodeKind::State && e.to.kind == NodeKind::State)
            .map(|e| (e.from.index + 1, e.to.index + 1))
            .collect();
        let expect: BTreeSet<(usize, usize)> = [(4, 3), (5, 4), (6, 5), (8, 7), (3, 7), (9, 8)].into();
        assert_eq!(a_edges, expect);
        assert!(is_tree(&g));
    }

    #[test]
    fn self_loop_is_not_tree() {
        let mut sys = identity_system(2);
        sys.a[(1, 1)] = crate::algebra::rat(1);
        assert!(!is_tree(&build_sfg(&sys)));
    }

    #[test]
    fn nine_state_shortest_paths() {
        let g = build_sfg(&nine_state(NineStateCoupling::FromX3));
        let p = shortest_paths(&g, 2, 2);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].states, vec![5, 4, 3, 2]);
        assert_eq!(p[0].order(), 4);
        assert_eq!(shortest_paths(&g, 0, 0)[0].order(), 1);
        assert!(shortest_paths(&g, 3, 1).is_empty());
    }

    #[test]
    fn nine_state_single_framework() {
        let g = build_sfg(&nine_state(NineStateCoupling::FromX3));
        let fws = enumerate_frameworks(&g, None);
        assert!(!fws.truncated);
        assert_eq!(fws.items.len(), 1);
        assert_eq!(fws.items[0].assignment(), vec![0, 1, 2]);
        assert_eq!(fws.items[0].orders(), vec![1, 1, 4]);
    }

    #[test]
    fn nine_state_string_candidates() {
        let g = build_sfg(&nine_state(NineStateCoupling::FromX3));
        let fw = &enumerate_frameworks(&g, None).items[0];
        let c = candidate_strings(&g, &fw.used_inputs(), &fw.used_states());
        assert_eq!(c.len(), 3);
        assert!(c.iter().all(|s| s.input == 3));
        assert_eq!(c[0].terminal, 6);
        assert_eq!(c[0].order(), 3);
        assert_eq!(g.terminal_tier(6), 1);
    }

    #[test]
    fn all_inputs_on_framework_gives_empty_selection_only() {
        let g = build_sfg(&identity_system(3));
        let fw = &enumerate_frameworks(&g, None).items[0];
        let sel = enumerate_strings(&g, fw, None);
        assert_eq!(sel.items, vec![Vec::<IntegratorString>::new()]);
    }

    #[test]
    fn partition_nine_state() {
        let sys = nine_state(NineStateCoupling::FromX3);
        let part = controllable_partition(&sys, &[3]);
        assert_eq!(part.reachable, vec![6, 7, 8]);
        assert!(controllable_partition(&sys, &[]).reachable.is_empty());
        assert_eq!(controllable_partition(&sys, &[0, 1, 2, 3]).reachable.len(), 9);
    }

    #[test]
    fn framework_limit_truncates() {
        let g = build_sfg(&identity_system(2));
        let mut sys = identity_system(2);
        sys.b = Mat::from_i64(&[&[1, 1], &[1, 1]]);
        let g2 = build_sfg(&sys);
        assert_eq!(enumerate_frameworks(&g, Some(1)).items.len(), 1);
        let e = enumerate_frameworks(&g2, Some(1));
        assert!(e.truncated);
        assert_eq!(enumerate_frameworks(&g2, None).items.len(), 2);
    }
}
