//! From compensated system to feedback law, and the search that drives it.
//!
//! A branch of the search fixes a framework, the masters of every
//! multi-column block and a selection of integrator strings. The cyclic flow
//! turns it into a pre-decoupling system; the remaining stages then keep a
//! set of independent columns as masters, stabilise and silence the spare
//! inputs, and close the loop with the regular decoupling law. Every law is
//! checked on the exact closed-loop transfer matrix before it is accepted.

use std::collections::BTreeSet;

use num_traits::Zero;
use serde::Serialize;

use crate::algebra::{format_rat, Mat, Rat};
use crate::canonical::controllable_decomposition;
use crate::compensation::{
    build_ede, cyclic_flow, decompose_blocks, type2_solve, CompensationBlock, CompensationKind, CompensationState,
    Compensation, Demand, DemandSource, FirstIteration, IterationTrace, PreDecouplingSystem, Refusal, Type2Solution,
};
use crate::error::Result;
use crate::flowgraph::{
    build_sfg, build_sfg_from, candidate_strings, controllable_partition, disjoint_selections, enumerate_frameworks,
    DecouplingFramework, IntegratorString, SignalFlowGraph,
};
use crate::poles::place_assignable;
use crate::system::{
    closed_loop_tf, decoupling_pair, decoupling_pair_of, diagonality_check, regular_feedback_from_pair,
    relative_orders, relative_orders_of, Diagonality, FeedbackLaw, StateSpaceSystem,
};

/// Search caps; `None` means unbounded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_frameworks: Option<usize>,
    /// String selections tried per framework and master choice.
    pub max_strings: Option<usize>,
    /// Master choices tried per framework.
    pub max_masters: Option<usize>,
    /// Worker threads for framework-level parallelism.
    pub jobs: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_frameworks: None, max_strings: None, max_masters: None, jobs: 1 }
    }
}

/// Compensated system with its input bookkeeping.
#[derive(Clone, Debug)]
pub struct JudgableSystem {
    pub a: Mat,
    /// Columns for `free`, the active uncompensated inputs.
    pub b: Mat,
    pub c: Mat,
    pub free: Vec<usize>,
    /// Inputs held at zero.
    pub zeroed: Vec<usize>,
    pub first_type: Vec<usize>,
    pub second_type: Vec<usize>,
    /// `u = f_acc x + g_acc w`
    pub f_acc: Mat,
    pub g_acc: Mat,
}

pub fn judgable(sys: &StateSpaceSystem, pre: &PreDecouplingSystem) -> JudgableSystem {
    let state = &pre.state;
    let kind_inputs = |second: bool| -> Vec<usize> {
        let set: BTreeSet<usize> = state
            .applied
            .iter()
            .filter(|c| (c.kind == CompensationKind::SecondType) == second)
            .map(|c| c.input)
            .collect();
        set.into_iter().collect()
    };
    JudgableSystem {
        a: pre.a.clone(),
        b: pre.b.clone(),
        c: sys.c.clone(),
        free: pre.free.clone(),
        zeroed: state.zeroed_inputs(),
        first_type: kind_inputs(false),
        second_type: kind_inputs(true),
        f_acc: state.f.clone(),
        g_acc: state.g.clone(),
    }
}

/// Positions (into `j.free`) of the first `p` independent columns of the
/// judgable `B*`.
pub fn sufficiency(j: &JudgableSystem) -> std::result::Result<Vec<usize>, Refusal> {
    let d = relative_orders_of(&j.a, &j.b, &j.c);
    let pair = decoupling_pair_of(&j.a, &j.b, &j.c, &d);
    let cols = pair.bstar.independent_columns();
    let p = j.c.rows();
    if cols.len() < p {
        return Err(Refusal::InsufficientRank { rank: cols.len(), p });
    }
    Ok(cols[..p].to_vec())
}

/// Spare inputs turned into stabilising feedback on the states the masters
/// cannot reach.
#[derive(Clone, Debug)]
pub struct SelfCompensation {
    /// Positions into `free` of the spare inputs.
    pub spare: Vec<usize>,
    pub reachable: Vec<usize>,
    pub unreachable: Vec<usize>,
    /// `|spare| x n`, supported on the unreachable states.
    pub f22: Mat,
    pub poles: Vec<Rat>,
    pub a_d3: Mat,
    pub b_d3: Mat,
}

/// Assignable-pole count of the spare inputs on the unreachable states.
pub fn assignable_count(j: &JudgableSystem, masters: &[usize]) -> usize {
    let (spare, _, unreachable) = spare_split(j, masters);
    if spare.is_empty() || unreachable.is_empty() {
        return 0;
    }
    let a22 = j.a.submatrix(&unreachable, &unreachable);
    let b2 = j.b.submatrix(&unreachable, &spare);
    controllable_decomposition(&a22, &b2).r
}

fn spare_split(j: &JudgableSystem, masters: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let spare: Vec<usize> = (0..j.free.len()).filter(|k| !masters.contains(k)).collect();
    let bm = j.b.select_cols(masters);
    let sfg = build_sfg_from(&j.a, &bm, &j.c);
    let all: Vec<usize> = (0..masters.len()).collect();
    let reach = sfg.reachable_from_inputs(&all);
    let reachable = (0..j.a.rows()).filter(|&s| reach[s]).collect();
    let unreachable = (0..j.a.rows()).filter(|&s| !reach[s]).collect();
    (spare, reachable, unreachable)
}

/// Target poles for the modes the spare inputs can move.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SparePoles {
    Uniform(Rat),
    Listed(Vec<Rat>),
}

impl Default for SparePoles {
    fn default() -> Self {
        SparePoles::Uniform(-Rat::from_integer(1.into()))
    }
}

pub fn self_compensate(
    j: &JudgableSystem,
    masters: &[usize],
    poles: &SparePoles,
) -> std::result::Result<SelfCompensation, Refusal> {
    let n = j.a.rows();
    let (spare, reachable, unreachable) = spare_split(j, masters);
    let mut f22 = Mat::zeros(spare.len(), n);
    let mut placed = Vec::new();
    if !spare.is_empty() && !unreachable.is_empty() {
        let a22 = j.a.submatrix(&unreachable, &unreachable);
        let b2 = j.b.submatrix(&unreachable, &spare);
        let r = controllable_decomposition(&a22, &b2).r;
        let target: Vec<Rat> = match poles {
            SparePoles::Listed(p) => p.clone(),
            SparePoles::Uniform(p) => vec![p.clone(); r],
        };
        if target.len() != r {
            return Err(Refusal::PoleSpec {
                detail: format!("{r} assignable poles, {} given", target.len()),
            });
        }
        let (k, _) =
            place_assignable(&a22, &b2, &target).map_err(|err| Refusal::Internal { detail: err.to_string() })?;
        for row in 0..spare.len() {
            for (col, &s) in unreachable.iter().enumerate() {
                f22[(row, s)] = k[(row, col)].clone();
            }
        }
        placed = target;
    } else if matches!(poles, SparePoles::Listed(p) if !p.is_empty()) {
        return Err(Refusal::PoleSpec { detail: "no assignable poles, some given".into() });
    }
    let a_d3 = &j.a + &(&j.b.select_cols(&spare) * &f22);
    let b_d3 = j.b.select_cols(masters);
    Ok(SelfCompensation { spare, reachable, unreachable, f22, poles: placed, a_d3, b_d3 })
}

/// `F1 = -B*^-1 A*`, `G1 = B*^-1` on the master system.
pub fn regular_stage(a: &Mat, b: &Mat, c: &Mat) -> std::result::Result<(Mat, Mat), Refusal> {
    let d = relative_orders_of(a, b, c);
    let pair = decoupling_pair_of(a, b, c, &d);
    let inv = pair.bstar.inverse().map_err(|err| Refusal::Internal { detail: err.to_string() })?;
    Ok((-&(&inv * &pair.astar), inv))
}

/// Stacks the stage gains back onto the plant inputs.
pub fn assemble(j: &JudgableSystem, masters: &[usize], sc: &SelfCompensation, f1: &Mat, g1: &Mat) -> FeedbackLaw {
    let (m, n) = (j.f_acc.rows(), j.f_acc.cols());
    let p = g1.cols();
    let mut wf = Mat::zeros(m, n);
    let mut wg = Mat::zeros(m, p);
    for (k, &pos) in masters.iter().enumerate() {
        let u = j.free[pos];
        for c in 0..n {
            wf[(u, c)] = f1[(k, c)].clone();
        }
        for c in 0..p {
            wg[(u, c)] = g1[(k, c)].clone();
        }
    }
    for (k, &pos) in sc.spare.iter().enumerate() {
        let u = j.free[pos];
        for c in 0..n {
            wf[(u, c)] = sc.f22[(k, c)].clone();
        }
    }
    FeedbackLaw { f: &j.f_acc + &(&j.g_acc * &wf), g: &j.g_acc * &wg }
}

/// Pure-integrator orders of the closed loop, or why not.
pub fn verify_law(sys: &StateSpaceSystem, law: &FeedbackLaw) -> std::result::Result<Vec<usize>, Refusal> {
    let fail = |detail: String| Refusal::VerificationFailed { detail };
    let tf = closed_loop_tf(sys, law).map_err(|e| fail(e.to_string()))?;
    match diagonality_check(&tf).map_err(|e| fail(e.to_string()))? {
        Diagonality::IntegratorDiagonal { orders } => Ok(orders),
        Diagonality::Diagonal { .. } => Err(fail("diagonal but not pure integrators".into())),
        Diagonality::Witness { row, col } => Err(fail(format!("entry ({}, {}) is nonzero", row + 1, col + 1))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Decoupled,
    NotDecouplable,
    /// A limit cut the search short before any law was found.
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// `rank B* = p` on the plant itself.
    Regular,
    Compensation,
    None,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub frameworks: usize,
    pub master_choices: usize,
    pub selections: usize,
    pub branches: usize,
    pub unsupported: usize,
    pub truncated: bool,
}

impl SearchStats {
    fn merge(&mut self, other: &SearchStats) {
        self.frameworks += other.frameworks;
        self.master_choices += other.master_choices;
        self.selections += other.selections;
        self.branches += other.branches;
        self.unsupported += other.unsupported;
        self.truncated |= other.truncated;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Type2Summary {
    pub rows: Vec<String>,
    pub cols: Vec<usize>,
    pub masters: Vec<usize>,
    pub auxiliaries: Vec<usize>,
    pub unknowns: Vec<String>,
    pub e3: Vec<Vec<String>>,
    pub kbar: Vec<usize>,
    pub tau: Vec<usize>,
    pub n_de1: usize,
    pub values: Vec<String>,
    pub dropped: Vec<String>,
}

impl Type2Summary {
    fn new(sol: &Type2Solution, labels: &[String]) -> Self {
        Type2Summary {
            rows: sol.block.rows.iter().map(|&r| labels[r].clone()).collect(),
            cols: sol.block.cols.clone(),
            masters: sol.masters.clone(),
            auxiliaries: sol.auxiliaries.clone(),
            unknowns: sol.unknowns.clone(),
            e3: sol.e3.clone(),
            kbar: sol.kbar.clone(),
            tau: sol.tau.clone(),
            n_de1: sol.n_de1,
            values: sol.values.iter().map(format_rat).collect(),
            dropped: sol.dropped.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum BranchOutcome {
    Decoupled { orders: Vec<usize> },
    Refused { refusal: Refusal },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BranchTrace {
    pub framework: usize,
    /// Masters chosen in each multi-column block.
    pub masters: Vec<Vec<usize>>,
    pub strings: Vec<String>,
    /// Terminal state of each selected string.
    pub terminals: Vec<usize>,
    pub type2: Vec<Type2Summary>,
    pub iterations: Vec<IterationTrace>,
    pub outcome: BranchOutcome,
}

impl BranchTrace {
    pub fn refusal(&self) -> Option<&Refusal> {
        match &self.outcome {
            BranchOutcome::Refused { refusal } => Some(refusal),
            BranchOutcome::Decoupled { .. } => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthesisReport {
    pub decision: Decision,
    pub route: Route,
    pub law: Option<FeedbackLaw>,
    pub orders: Option<Vec<usize>>,
    /// Paths of every enumerated framework, rendered.
    pub frameworks: Vec<Vec<String>>,
    /// Index into `frameworks` of the accepted branch.
    pub framework: Option<usize>,
    /// Every compensation of the accepted branch, in application order.
    pub compensations: Vec<String>,
    pub self_compensation_poles: Vec<Rat>,
    pub stats: SearchStats,
    pub branches: Vec<BranchTrace>,
}

impl SynthesisReport {
    /// Refusals of the exhausted branches, in search order.
    pub fn witnesses(&self) -> Vec<&Refusal> {
        self.branches.iter().filter_map(BranchTrace::refusal).collect()
    }
}

struct Accepted {
    law: FeedbackLaw,
    orders: Vec<usize>,
    compensations: Vec<String>,
    poles: Vec<Rat>,
}

struct FrameworkResult {
    branches: Vec<BranchTrace>,
    stats: SearchStats,
    accepted: Option<Accepted>,
}

/// Decides decouplability and synthesises a verified law when one exists.
/// `poles` places the modes moved by spare inputs.
pub fn synthesize(sys: &StateSpaceSystem, limits: &Limits, poles: &SparePoles) -> Result<SynthesisReport> {
    let mut report = SynthesisReport {
        decision: Decision::NotDecouplable,
        route: Route::None,
        law: None,
        orders: None,
        frameworks: Vec::new(),
        framework: None,
        compensations: Vec::new(),
        self_compensation_poles: Vec::new(),
        stats: SearchStats::default(),
        branches: Vec::new(),
    };

    let d = relative_orders(sys);
    let pair = decoupling_pair(sys, &d);
    if pair.bstar.rank() == sys.p() {
        if let Ok(law) = regular_feedback_from_pair(sys.n(), sys.m(), &pair) {
            if let Ok(orders) = verify_law(sys, &law) {
                report.decision = Decision::Decoupled;
                report.route = Route::Regular;
                report.law = Some(law);
                report.orders = Some(orders);
                return Ok(report);
            }
        }
    }

    let sfg = build_sfg(sys);
    let frameworks = enumerate_frameworks(&sfg, limits.max_frameworks);
    report.stats.truncated |= frameworks.truncated;
    report.frameworks = frameworks.items.iter().map(|fw| fw.paths.iter().map(ToString::to_string).collect()).collect();
    if frameworks.items.is_empty() {
        report.branches.push(BranchTrace {
            framework: 0,
            masters: Vec::new(),
            strings: Vec::new(),
            terminals: Vec::new(),
            type2: Vec::new(),
            iterations: Vec::new(),
            outcome: BranchOutcome::Refused { refusal: Refusal::NoFramework },
        });
        report.decision = if frameworks.truncated { Decision::Inconclusive } else { Decision::NotDecouplable };
        return Ok(report);
    }

    let jobs = limits.jobs.max(1);
    let items = &frameworks.items;
    let mut start = 0;
    while start < items.len() {
        let end = (start + jobs).min(items.len());
        let results: Vec<FrameworkResult> = if end - start == 1 {
            vec![search_framework(sys, &sfg, start, &items[start], limits, poles)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = (start..end)
                    .map(|k| {
                        let sfg = &sfg;
                        scope.spawn(move || search_framework(sys, sfg, k, &items[k], limits, poles))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("search worker panicked")).collect()
            })
        };
        for (offset, res) in results.into_iter().enumerate() {
            report.stats.merge(&res.stats);
            report.branches.extend(res.branches);
            if let Some(acc) = res.accepted {
                report.decision = Decision::Decoupled;
                report.route = Route::Compensation;
                report.framework = Some(start + offset);
                report.law = Some(acc.law);
                report.orders = Some(acc.orders);
                report.compensations = acc.compensations;
                report.self_compensation_poles = acc.poles;
                return Ok(report);
            }
        }
        start = end;
    }
    if report.stats.truncated {
        report.decision = Decision::Inconclusive;
    }
    Ok(report)
}

/// Subsets of `cols`, larger first, then lexicographic.
fn master_subsets(cols: &[usize]) -> Vec<Vec<usize>> {
    let k = cols.len();
    let mut subsets: Vec<Vec<usize>> = (1..(1u64 << k))
        .map(|mask| (0..k).filter(|&i| mask & (1 << i) != 0).map(|i| cols[i]).collect())
        .collect();
    subsets.sort_by(|a: &Vec<usize>, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    subsets
}

/// Cartesian product of per-block master choices, in lexicographic order.
fn master_choices(blocks: &[&CompensationBlock], limit: Option<usize>) -> (Vec<Vec<Vec<usize>>>, bool) {
    let per: Vec<Vec<Vec<usize>>> = blocks.iter().map(|b| master_subsets(&b.cols)).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; per.len()];
    loop {
        if limit.is_some_and(|l| out.len() >= l) {
            return (out, true);
        }
        out.push(idx.iter().enumerate().map(|(b, &i)| per[b][i].clone()).collect());
        let mut pos = per.len();
        loop {
            if pos == 0 {
                return (out, false);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < per[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Lexicographic permutations of `0..k`.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

fn search_framework(
    sys: &StateSpaceSystem,
    sfg: &SignalFlowGraph,
    index: usize,
    fw: &DecouplingFramework,
    limits: &Limits,
    poles: &SparePoles,
) -> FrameworkResult {
    let mut res = FrameworkResult { branches: Vec::new(), stats: SearchStats::default(), accepted: None };
    res.stats.frameworks = 1;
    let used = fw.used_inputs();
    let outside: Vec<usize> = (0..sys.m()).filter(|u| !used.contains(u)).collect();
    let ede = build_ede(sys, fw).without_columns(&outside);
    let labels = ede.label_strings();
    let blocks = decompose_blocks(&ede.e);
    let single: Vec<&CompensationBlock> = blocks.iter().filter(|b| b.cols.len() == 1).collect();
    let multi: Vec<&CompensationBlock> = blocks.iter().filter(|b| b.cols.len() > 1).collect();
    let cands = candidate_strings(sfg, &used, &fw.used_states());

    let (choices, truncated) = master_choices(&multi, limits.max_masters);
    res.stats.truncated |= truncated;
    let refuse = |res: &mut FrameworkResult, masters: &[Vec<usize>], type2: Vec<Type2Summary>, refusal: Refusal| {
        res.stats.branches += 1;
        res.branches.push(BranchTrace {
            framework: index,
            masters: masters.to_vec(),
            strings: Vec::new(),
            terminals: Vec::new(),
            type2,
            iterations: Vec::new(),
            outcome: BranchOutcome::Refused { refusal },
        });
    };

    for masters in choices {
        res.stats.master_choices += 1;
        let mut demands: Vec<Demand> = single
            .iter()
            .map(|b| Demand { input: b.cols[0], order: ede.col_order(b.cols[0]), source: DemandSource::FirstType })
            .collect();
        let mut solutions = Vec::new();
        let mut failed = None;
        for (block, ms) in multi.iter().zip(&masters) {
            let part = controllable_partition(sys, &block.cols);
            let mut reach = vec![false; sys.n()];
            for &s in &part.reachable {
                reach[s] = true;
            }
            match type2_solve(&sys.a, &sys.b, &ede, block, ms, &reach) {
                Ok(sol) => {
                    demands.extend(sol.demands.iter().cloned());
                    solutions.push(sol);
                }
                Err(refusal) => {
                    failed = Some(refusal);
                    break;
                }
            }
        }
        let type2: Vec<Type2Summary> = solutions.iter().map(|s| Type2Summary::new(s, &labels)).collect();
        if let Some(refusal) = failed {
            if matches!(refusal, Refusal::Unsupported { .. }) {
                res.stats.unsupported += 1;
            }
            refuse(&mut res, &masters, type2, refusal);
            continue;
        }
        demands.sort_by_key(|d| d.input);

        let selections = disjoint_selections(&cands, demands.len(), limits.max_strings);
        res.stats.truncated |= selections.truncated;
        if selections.items.is_empty() {
            refuse(&mut res, &masters, type2, Refusal::InsufficientStrings { demands });
            continue;
        }
        for mut sel in selections.items {
            res.stats.selections += 1;
            sel.sort_by_key(|s| s.terminal);
            let strings: Vec<String> = sel.iter().map(|s| s.as_path().to_string()).collect();
            let terminals: Vec<usize> = sel.iter().map(|s| s.terminal).collect();
            let matchings: Vec<Vec<usize>> = permutations(sel.len())
                .into_iter()
                .filter(|perm| perm.iter().zip(&demands).all(|(&k, d)| sel[k].order() >= d.order))
                .collect();
            if matchings.is_empty() {
                res.stats.branches += 1;
                res.branches.push(BranchTrace {
                    framework: index,
                    masters: masters.clone(),
                    strings,
                    terminals,
                    type2: type2.clone(),
                    iterations: Vec::new(),
                    outcome: BranchOutcome::Refused { refusal: Refusal::InsufficientStrings { demands: demands.clone() } },
                });
                continue;
            }
            for perm in matchings {
                res.stats.branches += 1;
                let comps = plan_compensations(&demands, &perm, &sel, &solutions);
                let state = CompensationState::new(sys.n(), sys.m(), fw, &sel);
                let first = FirstIteration { ede: ede.clone(), demands: demands.clone(), compensations: comps };
                let mut trace = BranchTrace {
                    framework: index,
                    masters: masters.clone(),
                    strings: strings.clone(),
                    terminals: terminals.clone(),
                    type2: type2.clone(),
                    iterations: Vec::new(),
                    outcome: BranchOutcome::Refused { refusal: Refusal::Internal { detail: String::new() } },
                };
                match cyclic_flow(sys, sfg, fw, state, first) {
                    Err(fail) => {
                        trace.iterations = fail.trace;
                        trace.outcome = BranchOutcome::Refused { refusal: fail.refusal };
                        res.branches.push(trace);
                    }
                    Ok(pre) => {
                        trace.iterations = pre.trace.clone();
                        match finish(sys, &pre, poles) {
                            Ok(acc) => {
                                trace.outcome = BranchOutcome::Decoupled { orders: acc.orders.clone() };
                                res.branches.push(trace);
                                res.accepted = Some(acc);
                                return res;
                            }
                            Err(refusal) => {
                                trace.outcome = BranchOutcome::Refused { refusal };
                                res.branches.push(trace);
                            }
                        }
                    }
                }
            }
        }
    }
    res
}

fn plan_compensations(
    demands: &[Demand],
    perm: &[usize],
    sel: &[IntegratorString],
    solutions: &[Type2Solution],
) -> Vec<Compensation> {
    demands
        .iter()
        .zip(perm)
        .map(|(d, &k)| {
            let string = sel[k].clone();
            let expr = match d.source {
                DemandSource::Master => solutions.iter().flat_map(|s| &s.expressions).find(|e| e.input == d.input),
                _ => None,
            };
            match expr {
                Some(e) => Compensation {
                    input: d.input,
                    string,
                    kind: CompensationKind::SecondType,
                    aux_terms: e.aux_terms.clone(),
                    state_terms: e.state_terms.clone(),
                    iteration: 1,
                },
                None => Compensation::first_type(d.input, string, 1),
            }
        })
        .collect()
}

fn finish(sys: &StateSpaceSystem, pre: &PreDecouplingSystem, poles: &SparePoles) -> std::result::Result<Accepted, Refusal> {
    let j = judgable(sys, pre);
    let masters = sufficiency(&j)?;
    let sc = self_compensate(&j, &masters, poles)?;
    let (f1, g1) = regular_stage(&sc.a_d3, &sc.b_d3, &sys.c)?;
    let law = assemble(&j, &masters, &sc, &f1, &g1);
    let orders = verify_law(sys, &law)?;
    debug_assert!(law.g.rank() == sys.p());
    Ok(Accepted {
        law,
        orders,
        compensations: pre.state.applied.iter().map(ToString::to_string).collect(),
        poles: sc.poles,
    })
}

/// Rows of `law` rendered as `u1 = x7`, `u3 = v3 - v1`.
pub fn law_equations(law: &FeedbackLaw) -> Vec<String> {
    let mut out = Vec::new();
    for u in 0..law.f.rows() {
        let mut terms: Vec<(String, Rat)> = Vec::new();
        for x in 0..law.f.cols() {
            if !law.f[(u, x)].is_zero() {
                terms.push((format!("x{}", x + 1), law.f[(u, x)].clone()));
            }
        }
        for v in 0..law.g.cols() {
            if !law.g[(u, v)].is_zero() {
                terms.push((format!("v{}", v + 1), law.g[(u, v)].clone()));
            }
        }
        // Reference inputs first reads more naturally.
        terms.sort_by_key(|(name, _)| !name.starts_with('v'));
        let mut text = format!("u{} =", u + 1);
        if terms.is_empty() {
            text.push_str(" 0");
        }
        for (idx, (name, c)) in terms.iter().enumerate() {
            let neg = c < &Rat::zero();
            let mag = if neg { -c.clone() } else { c.clone() };
            match (idx, neg) {
                (0, false) => text.push(' '),
                (0, true) => text.push_str(" -"),
                (_, false) => text.push_str(" + "),
                (_, true) => text.push_str(" - "),
            }
            if mag != Rat::from_integer(1.into()) {
                text.push_str(&format_rat(&mag));
                text.push('*');
            }
            text.push_str(name);
        }
        out.push(text);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{char_poly, rat};
    use crate::plants::{identity_system, nine_state, twenty_two_state, twenty_two_state_reference_law, NineStateCoupling};

    #[test]
    fn identity_takes_regular_route() {
        let sys = identity_system(3);
        let rep = synthesize(&sys, &Limits::default(), &SparePoles::default()).unwrap();
        assert_eq!(rep.decision, Decision::Decoupled);
        assert_eq!(rep.route, Route::Regular);
        let law = rep.law.unwrap();
        assert!(law.f.is_zero());
        assert_eq!(law.g, Mat::identity(3));
    }

    #[test]
    fn nine_state_decouples() {
        let sys = nine_state(NineStateCoupling::FromX3);
        let rep = synthesize(&sys, &Limits::default(), &SparePoles::default()).unwrap();
        assert_eq!(rep.decision, Decision::Decoupled);
        assert_eq!(rep.orders, Some(vec![4, 1, 4]));
        let eqs = law_equations(rep.law.as_ref().unwrap());
        assert_eq!(eqs, vec!["u1 = x7", "u2 = v2", "u3 = -v1 + v3", "u4 = v1 - x5"]);
    }

    #[test]
    fn nine_state_judgable_bookkeeping() {
        let sys = nine_state(NineStateCoupling::FromX3);
        let rep = synthesize(&sys, &Limits::default(), &SparePoles::default()).unwrap();
        assert_eq!(rep.compensations, vec!["u1 = x7".to_string()]);
    }

    #[test]
    fn nine_state_refuses() {
        let sys = nine_state(NineStateCoupling::FromX2);
        let rep = synthesize(&sys, &Limits::default(), &SparePoles::default()).unwrap();
        assert_eq!(rep.decision, Decision::NotDecouplable);
        assert!(rep.witnesses().contains(&&Refusal::NoStringAvailable { input: 1, order: 1 }));
    }

    #[test]
    fn twenty_two_state_decouples() {
        let sys = twenty_two_state();
        let rep = synthesize(&sys, &Limits::default(), &SparePoles::default()).unwrap();
        assert_eq!(rep.decision, Decision::Decoupled);
        assert_eq!(rep.orders, Some(vec![2, 2, 2, 5, 5, 5]));
        assert_eq!(rep.law.as_ref(), Some(&twenty_two_state_reference_law()));
        let last = rep.branches.last().unwrap();
        assert_eq!(last.masters, vec![vec![2, 4]]);
        assert_eq!(last.terminals, vec![12, 16]);
        assert_eq!(last.iterations[1].compensations, vec!["u1 = x21", "u2 = x22"]);
        let refused = rep
            .branches
            .iter()
            .find(|b| b.masters == vec![vec![2, 4]] && b.terminals == vec![11, 16])
            .unwrap();
        assert_eq!(refused.refusal(), Some(&Refusal::NoStringAvailable { input: 3, order: 2 }));
    }

    #[test]
    fn master_subset_order() {
        assert_eq!(
            master_subsets(&[2, 3, 4]),
            vec![vec![2, 3, 4], vec![2, 3], vec![2, 4], vec![3, 4], vec![2], vec![3], vec![4]]
        );
    }

    #[test]
    fn spare_input_stabilises_chain() {
        // One master drives x1; a spare input drives the chain x2 <- x3 <- u2.
        let a = Mat::from_i64(&[&[0, 0, 0], &[0, 0, 1], &[0, 0, 0]]);
        let b = Mat::from_i64(&[&[1, 0], &[0, 0], &[0, 1]]);
        let c = Mat::from_i64(&[&[1, 0, 0]]);
        let j = JudgableSystem {
            a: a.clone(),
            b: b.clone(),
            c,
            free: vec![0, 1],
            zeroed: Vec::new(),
            first_type: Vec::new(),
            second_type: Vec::new(),
            f_acc: Mat::zeros(2, 3),
            g_acc: Mat::identity(2),
        };
        assert_eq!(sufficiency(&j).unwrap(), vec![0]);
        let sc = self_compensate(&j, &[0], &SparePoles::Listed(vec![rat(-1), rat(-1)])).unwrap();
        assert_eq!(sc.unreachable, vec![1, 2]);
        let x2 = sc.a_d3.submatrix(&[1, 2], &[1, 2]);
        assert_eq!(char_poly(&x2).unwrap(), crate::algebra::Poly::from_i64(&[1, 2, 1]));
        let zero = self_compensate(&j, &[0], &SparePoles::Uniform(rat(0))).unwrap();
        assert!(zero.f22.is_zero());
        assert!(matches!(self_compensate(&j, &[0], &SparePoles::Listed(vec![rat(-1)])), Err(Refusal::PoleSpec { .. })));
    }

    #[test]
    fn duplicate_columns_fail_sufficiency() {
        let j = JudgableSystem {
            a: Mat::zeros(2, 2),
            b: Mat::from_i64(&[&[1, 1], &[0, 0]]),
            c: Mat::identity(2),
            free: vec![0, 1],
            zeroed: Vec::new(),
            first_type: Vec::new(),
            second_type: Vec::new(),
            f_acc: Mat::zeros(2, 2),
            g_acc: Mat::identity(2),
        };
        assert_eq!(sufficiency(&j), Err(Refusal::InsufficientRank { rank: 1, p: 2 }));
    }
}
