//! Integrator-string compensation.
//!
//! A decoupling framework fixes a general relative order `r_i` for every
//! output. Where an input reaches an output in fewer integrations than
//! `r_i`, the independent decoupling matrix `E_de` has a nonzero entry, and
//! the input must be delayed by routing it through a disjoint integrator
//! string. This module builds those matrices, splits them into independent
//! blocks, plans first- and second-type compensations and runs the cyclic
//! flow that repeats the analysis until the compensated system's relative
//! orders stop moving.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::algebra::{format_rat, Mat, Poly, PolyMat, Rat};
use crate::canonical::controllable_relative_orders;
use crate::flowgraph::{candidate_strings, DecouplingFramework, IntegratorString, SignalFlowGraph};
use crate::system::{relative_orders_of, StateSpaceSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum RowLabel {
    Output(usize),
    State(usize),
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowLabel::Output(i) => write!(f, "y{}", i + 1),
            RowLabel::State(i) => write!(f, "x{}", i + 1),
        }
    }
}

/// Rows `sum_{j=d_i}^{r_i-1} C_i A^(j-1) B s^(r_i-j)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecouplingMatrixPoly {
    pub labels: Vec<RowLabel>,
    /// The row vectors `C_i` the entries were built from.
    pub c: Mat,
    pub r: Vec<usize>,
    pub d: Vec<usize>,
    pub e: PolyMat,
}

impl DecouplingMatrixPoly {
    pub fn rows(&self) -> usize {
        self.e.rows()
    }

    pub fn is_zero(&self) -> bool {
        self.e.is_zero()
    }

    /// Highest power of `s` in column `j`.
    pub fn col_order(&self, j: usize) -> usize {
        self.e.col_degree(j).unwrap_or(0)
    }

    pub fn to_display_rows(&self) -> Vec<Vec<String>> {
        self.e.to_display_rows()
    }

    pub fn label_strings(&self) -> Vec<String> {
        self.labels.iter().map(ToString::to_string).collect()
    }

    /// Copy with the listed columns cleared.
    pub fn without_columns(&self, cols: &[usize]) -> DecouplingMatrixPoly {
        let mut out = self.clone();
        for i in 0..out.e.rows() {
            for &j in cols {
                out.e[(i, j)] = Poly::zero();
            }
        }
        out
    }
}

pub fn decoupling_rows(
    a: &Mat,
    b: &Mat,
    c: &Mat,
    r: &[usize],
    d: &[usize],
    labels: Vec<RowLabel>,
) -> DecouplingMatrixPoly {
    let m = b.cols();
    let mut e = PolyMat::zeros(c.rows(), m);
    for i in 0..c.rows() {
        let mut row = c.row(i);
        let mut coeffs: Vec<Vec<Rat>> = vec![Vec::new(); m];
        for j in 1..r[i] {
            if j >= d[i] {
                let rb = &row * b;
                let power = r[i] - j;
                for (col, cs) in coeffs.iter_mut().enumerate() {
                    if cs.len() <= power {
                        cs.resize(power + 1, Rat::zero());
                    }
                    cs[power] += rb[(0, col)].clone();
                }
            }
            row = &row * a;
        }
        for (col, cs) in coeffs.into_iter().enumerate() {
            e[(i, col)] = Poly::new(cs);
        }
    }
    DecouplingMatrixPoly { labels, c: c.clone(), r: r.to_vec(), d: d.to_vec(), e }
}

/// Independent decoupling matrix of a framework.
pub fn build_ede(sys: &StateSpaceSystem, fw: &DecouplingFramework) -> DecouplingMatrixPoly {
    let d = relative_orders_of(&sys.a, &sys.b, &sys.c).d;
    let labels = (0..sys.p()).map(RowLabel::Output).collect();
    decoupling_rows(&sys.a, &sys.b, &sys.c, &fw.orders(), &d, labels)
}

/// Rows for the terminals of `strings`, with the string order as `r` and the
/// terminal's own relative order as `d`.
pub fn string_rows(a: &Mat, b: &Mat, strings: &[IntegratorString]) -> DecouplingMatrixPoly {
    let n = a.rows();
    let rows: Vec<Mat> = strings.iter().map(|s| Mat::unit_row(n, s.terminal)).collect();
    let c = Mat::vstack_all(&rows, n);
    let d = relative_orders_of(a, b, &c).d;
    let r: Vec<usize> = strings.iter().map(IntegratorString::order).collect();
    let labels = strings.iter().map(|s| RowLabel::State(s.terminal)).collect();
    decoupling_rows(a, b, &c, &r, &d, labels)
}

/// General independent decoupling matrix: framework rows followed by one
/// row per selected string.
pub fn build_general_ede(
    sys: &StateSpaceSystem,
    fw: &DecouplingFramework,
    strings: &[IntegratorString],
) -> DecouplingMatrixPoly {
    let top = build_ede(sys, fw);
    let bottom = string_rows(&sys.a, &sys.b, strings);
    let c = top.c.vstack(&bottom.c).expect("same state count");
    let mut labels = top.labels;
    labels.extend(bottom.labels);
    let mut r = top.r;
    r.extend(bottom.r);
    let mut d = top.d;
    d.extend(bottom.d);
    let m = sys.m();
    let mut e = PolyMat::zeros(labels.len(), m);
    for i in 0..top.e.rows() {
        for j in 0..m {
            e[(i, j)] = top.e[(i, j)].clone();
        }
    }
    for i in 0..bottom.e.rows() {
        for j in 0..m {
            e[(top.e.rows() + i, j)] = bottom.e[(i, j)].clone();
        }
    }
    DecouplingMatrixPoly { labels, c, r, d, e }
}

/// One connected component of the bipartite nonzero pattern.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CompensationBlock {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// Blocks ordered by their smallest column.
pub fn decompose_blocks(e: &PolyMat) -> Vec<CompensationBlock> {
    let (rows, cols) = (e.rows(), e.cols());
    let mut col_seen = vec![false; cols];
    let mut row_seen = vec![false; rows];
    let mut blocks = Vec::new();
    for start in 0..cols {
        if col_seen[start] || e.col_is_zero(start) {
            continue;
        }
        let mut block = CompensationBlock { rows: Vec::new(), cols: Vec::new() };
        let mut stack = vec![(false, start)];
        col_seen[start] = true;
        while let Some((is_row, k)) = stack.pop() {
            if is_row {
                block.rows.push(k);
                for j in 0..cols {
                    if !col_seen[j] && !e[(k, j)].is_zero() {
                        col_seen[j] = true;
                        stack.push((false, j));
                    }
                }
            } else {
                block.cols.push(k);
                for i in 0..rows {
                    if !row_seen[i] && !e[(i, k)].is_zero() {
                        row_seen[i] = true;
                        stack.push((true, i));
                    }
                }
            }
        }
        block.rows.sort_unstable();
        block.cols.sort_unstable();
        blocks.push(block);
    }
    blocks
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemandSource {
    /// Single-column block of the first iteration.
    FirstType,
    /// Master column of a multi-column block.
    Master,
    /// Auxiliary column whose residual order could not be cancelled.
    Auxiliary,
    /// Nonzero entry in a string-terminal row of a later iteration.
    StringRow { terminal: usize },
}

/// An input that must be delayed by at least `order` integrations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Demand {
    pub input: usize,
    pub order: usize,
    pub source: DemandSource,
}

impl fmt::Display for Demand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{} needs order {}", self.input + 1, self.order)
    }
}

/// Why a branch of the search was abandoned.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Refusal {
    /// No set of node-disjoint shortest paths covers every output.
    NoFramework,
    /// No disjoint string of sufficient order is left for the input.
    NoStringAvailable { input: usize, order: usize },
    /// Fewer strings than demands, or none of high enough order.
    InsufficientStrings { demands: Vec<Demand> },
    /// A demand fell on an input that is already compensated.
    DemandOnCompensatedInput { input: usize, order: usize },
    /// Orders differ but no compensable demand was found.
    Stalled { general: Vec<usize>, relative: Vec<usize> },
    IterationBound { iterations: usize },
    /// Coefficient equations not solvable by this engine.
    Unsupported { detail: String },
    InsufficientRank { rank: usize, p: usize },
    PoleSpec { detail: String },
    /// The assembled law failed the exact closed-loop check.
    VerificationFailed { detail: String },
    Internal { detail: String },
}

impl fmt::Display for Refusal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Refusal::NoFramework => write!(f, "no decoupling framework exists"),
            Refusal::NoStringAvailable { input, order } => {
                write!(f, "u{} needs an order-{order} integrator string and none is available", input + 1)
            }
            Refusal::InsufficientStrings { demands } => {
                let parts: Vec<String> = demands.iter().map(ToString::to_string).collect();
                write!(f, "not enough disjoint strings for demands [{}]", parts.join(", "))
            }
            Refusal::DemandOnCompensatedInput { input, order } => {
                write!(f, "compensated input u{} would need a further order-{order} delay", input + 1)
            }
            Refusal::Stalled { general, relative } => {
                write!(f, "general orders {general:?} differ from relative orders {relative:?} with no demand")
            }
            Refusal::IterationBound { iterations } => write!(f, "no agreement after {iterations} iterations"),
            Refusal::Unsupported { detail } => write!(f, "unsupported: {detail}"),
            Refusal::InsufficientRank { rank, p } => write!(f, "judgable B* has rank {rank} < {p}"),
            Refusal::PoleSpec { detail } => write!(f, "pole specification: {detail}"),
            Refusal::VerificationFailed { detail } => write!(f, "verification failed: {detail}"),
            Refusal::Internal { detail } => write!(f, "internal: {detail}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Type1Plan {
    pub input: usize,
    pub order: usize,
    pub string: IntegratorString,
}

/// First-type plan for a single-column block: the first string in `strings`
/// of sufficient order.
pub fn type1_plan(
    e: &DecouplingMatrixPoly,
    block: &CompensationBlock,
    strings: &[IntegratorString],
) -> Result<Type1Plan, Refusal> {
    if block.cols.len() != 1 {
        return Err(Refusal::Internal { detail: "first-type plan needs a single-column block".into() });
    }
    let input = block.cols[0];
    let order = e.col_order(input);
    strings
        .iter()
        .find(|s| s.order() >= order && s.input != input)
        .map(|s| Type1Plan { input, order, string: s.clone() })
        .ok_or(Refusal::NoStringAvailable { input, order })
}

// ---------------------------------------------------------------------------
// Undetermined coefficients

type Monomial = Vec<usize>;

/// Polynomial in the unknown coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Coef(BTreeMap<Monomial, Rat>);

impl Coef {
    fn constant(c: Rat) -> Coef {
        let mut out = Coef::default();
        out.add_monomial(Vec::new(), c);
        out
    }

    fn unknown(k: usize, c: Rat) -> Coef {
        let mut out = Coef::default();
        out.add_monomial(vec![k], c);
        out
    }

    fn add_monomial(&mut self, mono: Monomial, c: Rat) {
        if c.is_zero() {
            return;
        }
        let entry = self.0.entry(mono).or_insert_with(Rat::zero);
        *entry += c;
        if entry.is_zero() {
            self.0.retain(|_, v| !v.is_zero());
        }
    }

    fn add(&mut self, other: &Coef) {
        for (mono, c) in &other.0 {
            self.add_monomial(mono.clone(), c.clone());
        }
    }

    fn mul(&self, other: &Coef) -> Coef {
        let mut out = Coef::default();
        for (m1, c1) in &self.0 {
            for (m2, c2) in &other.0 {
                let mut mono = m1.clone();
                mono.extend(m2);
                mono.sort_unstable();
                out.add_monomial(mono, c1 * c2);
            }
        }
        out
    }

    fn scale(&self, k: &Rat) -> Coef {
        let mut out = Coef::default();
        for (mono, c) in &self.0 {
            out.add_monomial(mono.clone(), c * k);
        }
        out
    }

    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    fn degree(&self) -> usize {
        self.0.keys().map(Vec::len).max().unwrap_or(0)
    }

    fn eval(&self, values: &[Rat]) -> Rat {
        let mut acc = Rat::zero();
        for (mono, c) in &self.0 {
            let mut t = c.clone();
            for &k in mono {
                t *= &values[k];
            }
            acc += t;
        }
        acc
    }

    fn render(&self, names: &[String]) -> String {
        if self.0.is_empty() {
            return "0".into();
        }
        let mut out = String::new();
        for (idx, (mono, c)) in self.0.iter().enumerate() {
            let neg = c < &Rat::zero();
            let mag = if neg { -c.clone() } else { c.clone() };
            if idx == 0 {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            let vars: Vec<&str> = mono.iter().map(|&k| names[k].as_str()).collect();
            if vars.is_empty() {
                out.push_str(&format_rat(&mag));
            } else {
                if !mag.is_one() {
                    out.push_str(&format_rat(&mag));
                    out.push('*');
                }
                out.push_str(&vars.join("*"));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Sym {
    Z(usize),
    U(usize),
    X(usize),
}

/// `(symbol, power of s) -> coefficient`
type Expr = BTreeMap<(Sym, usize), Coef>;

fn expr_add(expr: &mut Expr, key: (Sym, usize), coef: Coef) {
    if coef.is_zero() {
        return;
    }
    let entry = expr.entry(key).or_default();
    entry.add(&coef);
    if entry.is_zero() {
        expr.remove(&key);
    }
}

struct Expander<'a> {
    a_pows: Vec<Mat>,
    /// `A^k B`
    apb: Vec<Mat>,
    masters: &'a [usize],
    aux: &'a [usize],
    master_exprs: &'a [Expr],
}

impl<'a> Expander<'a> {
    fn new(a: &Mat, b: &Mat, max_power: usize, masters: &'a [usize], aux: &'a [usize], exprs: &'a [Expr]) -> Self {
        let mut a_pows = vec![Mat::identity(a.rows())];
        let mut apb = vec![b.clone()];
        for k in 1..=max_power {
            a_pows.push(&a_pows[k - 1] * a);
            apb.push(a * &apb[k - 1]);
        }
        Expander { a_pows, apb, masters, aux, master_exprs: exprs }
    }

    /// Rewrites `s^k x` through the state equation and masters through their
    /// ansatz until only `z`, auxiliary inputs and undifferentiated states
    /// remain. Inputs outside the block are dropped.
    fn expand(&self, expr: Expr) -> Expr {
        let mut pending: Vec<((Sym, usize), Coef)> = expr.into_iter().collect();
        let mut out = Expr::new();
        while let Some(((sym, k), coef)) = pending.pop() {
            match sym {
                Sym::X(t) if k >= 1 => {
                    let ak = &self.a_pows[k];
                    for col in 0..ak.cols() {
                        if !ak[(t, col)].is_zero() {
                            pending.push(((Sym::X(col), 0), coef.scale(&ak[(t, col)])));
                        }
                    }
                    for l in 0..k {
                        let m = &self.apb[k - 1 - l];
                        for u in 0..m.cols() {
                            if !m[(t, u)].is_zero() {
                                pending.push(((Sym::U(u), l), coef.scale(&m[(t, u)])));
                            }
                        }
                    }
                }
                Sym::U(j) => {
                    if let Some(pos) = self.masters.iter().position(|&x| x == j) {
                        for (&(s2, k2), c2) in &self.master_exprs[pos] {
                            debug_assert_eq!(k2, 0);
                            pending.push(((s2, k), coef.mul(c2)));
                        }
                    } else if self.aux.contains(&j) {
                        expr_add(&mut out, (sym, k), coef);
                    }
                }
                _ => expr_add(&mut out, (sym, k), coef),
            }
        }
        out
    }
}

/// Solved expression `u_i = z_i + sum a_l u_l + sum b_t x_t` for a master.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MasterExpression {
    pub input: usize,
    pub aux_terms: Vec<(usize, Rat)>,
    pub state_terms: Vec<(usize, Rat)>,
}

/// Coefficients over the unknowns and the constant term.
type LinearEquation = (Vec<Rat>, Rat);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Type2Solution {
    pub block: CompensationBlock,
    pub masters: Vec<usize>,
    pub auxiliaries: Vec<usize>,
    pub unknowns: Vec<String>,
    /// `[E0; E2]` over the auxiliary columns before solving, rendered.
    pub e3: Vec<Vec<String>>,
    pub kbar: Vec<usize>,
    pub tau: Vec<usize>,
    /// Number of admissible smallest parameter sets.
    pub n_de1: usize,
    pub values: Vec<Rat>,
    pub expressions: Vec<MasterExpression>,
    /// Masters first, then auxiliaries with a residual order.
    pub demands: Vec<Demand>,
    /// Unknowns omitted because their `E_bar` entry was not constant.
    pub dropped: Vec<String>,
}

const TAU_SEARCH_CAP: usize = 100_000;

/// Second-type compensation of a multi-column block with the given masters.
///
/// Each master receives the ansatz `u_i = z_i + E~ alpha u_aux + D~ beta x`;
/// substituting into the block rows and eliminating derivatives through the
/// state equation leaves polynomial columns for the auxiliaries whose
/// higher coefficients are forced to zero as far as the (linear) equations
/// allow. `reachable` marks states on a path from a block input.
pub fn type2_solve(
    a: &Mat,
    b: &Mat,
    e: &DecouplingMatrixPoly,
    block: &CompensationBlock,
    masters: &[usize],
    reachable: &[bool],
) -> Result<Type2Solution, Refusal> {
    if masters.is_empty() || masters.iter().any(|m| !block.cols.contains(m)) {
        return Err(Refusal::Internal { detail: "masters must be a nonempty subset of the block columns".into() });
    }
    let aux: Vec<usize> = block.cols.iter().copied().filter(|c| !masters.contains(c)).collect();
    let max_r = block.rows.iter().map(|&i| e.r[i]).max().unwrap_or(0);
    let mut unknowns: Vec<String> = Vec::new();
    let mut dropped = Vec::new();
    let mut master_exprs: Vec<Expr> = Vec::new();
    let mut e0: Vec<Vec<Coef>> = Vec::new();

    let mut row_powers: Vec<Mat> = vec![Mat::identity(a.rows())];
    for k in 1..=max_r {
        row_powers.push(&row_powers[k - 1] * a);
    }

    for (pos, &mi) in masters.iter().enumerate() {
        let mut expr = Expr::new();
        expr_add(&mut expr, (Sym::Z(pos), 0), Coef::constant(Rat::one()));
        let mut e0_row = vec![Coef::default(); aux.len()];
        for &row in &block.rows {
            let Some(delta) = e.e[(row, mi)].degree() else { continue };
            let (r, d) = (e.r[row], e.d[row]);
            let crow = e.c.row(row);
            let label = e.labels[row];
            // E_bar: sum_{mu=d}^{r-delta} C A^(mu-1) B s^(r-delta-mu), auxiliary columns.
            for (k, &l) in aux.iter().enumerate() {
                let mut cs = Vec::new();
                for mu in d..=r.saturating_sub(delta) {
                    if mu == 0 {
                        continue;
                    }
                    let v = (&(&crow * &row_powers[mu - 1]) * b)[(0, l)].clone();
                    let power = r - delta - mu;
                    if cs.len() <= power {
                        cs.resize(power + 1, Rat::zero());
                    }
                    cs[power] += v;
                }
                let p = Poly::new(cs);
                match p.degree() {
                    None => {}
                    Some(0) => {
                        let id = unknowns.len();
                        unknowns.push(format!("a[u{},{},u{}]", mi + 1, label, l + 1));
                        let c = Coef::unknown(id, p.coeff(0));
                        e0_row[k].add(&c);
                        expr_add(&mut expr, (Sym::U(l), 0), c);
                    }
                    Some(_) => dropped.push(format!("a[u{},{},u{}] ({p})", mi + 1, label, l + 1)),
                }
            }
            // D_bar: C A^(r-delta) restricted to states reachable from the block.
            let drow = &crow * &row_powers[r - delta];
            for t in 0..a.rows() {
                if !drow[(0, t)].is_zero() && reachable[t] {
                    let id = unknowns.len();
                    unknowns.push(format!("b[u{},{},x{}]", mi + 1, label, t + 1));
                    expr_add(&mut expr, (Sym::X(t), 0), Coef::unknown(id, drow[(0, t)].clone()));
                }
            }
        }
        master_exprs.push(expr);
        e0.push(e0_row);
    }

    let expander = Expander::new(a, b, max_r, masters, &aux, &master_exprs);
    let mut e2: Vec<Vec<BTreeMap<usize, Coef>>> = Vec::new();
    for &row in &block.rows {
        let mut expr = Expr::new();
        for &col in &block.cols {
            for (k, c) in e.e[(row, col)].coeffs().iter().enumerate() {
                if !c.is_zero() {
                    expr_add(&mut expr, (Sym::U(col), k), Coef::constant(c.clone()));
                }
            }
        }
        let expanded = expander.expand(expr);
        let mut cols = vec![BTreeMap::new(); aux.len()];
        for ((sym, k), coef) in expanded {
            if let Sym::U(l) = sym {
                let idx = aux.iter().position(|&x| x == l).expect("only auxiliaries survive");
                cols[idx].insert(k, coef);
            }
        }
        e2.push(cols);
    }

    let kbar: Vec<usize> = (0..aux.len())
        .map(|l| e2.iter().flat_map(|row| row[l].keys().copied()).max().unwrap_or(0))
        .collect();

    let mut e3 = Vec::new();
    for row in &e0 {
        e3.push(row.iter().map(|c| c.render(&unknowns)).collect());
    }
    for row in &e2 {
        e3.push(row.iter().map(|terms| render_poly_coefs(terms, &unknowns)).collect());
    }

    // Equations f_{l,j} = 0, one per row, for 1 <= j <= kbar_l.
    let n_unk = unknowns.len();
    let mut equations: HashMap<(usize, usize), Vec<LinearEquation>> = HashMap::new();
    for l in 0..aux.len() {
        for j in 1..=kbar[l] {
            let mut eqs = Vec::new();
            for row in &e2 {
                if let Some(coef) = row[l].get(&j) {
                    if coef.degree() > 1 {
                        return Err(Refusal::Unsupported {
                            detail: format!(
                                "coefficient of s^{j} for u{} is nonlinear in the unknowns: {}",
                                aux[l] + 1,
                                coef.render(&unknowns)
                            ),
                        });
                    }
                    let mut lhs = vec![Rat::zero(); n_unk];
                    let mut rhs = Rat::zero();
                    for (mono, c) in &coef.0 {
                        match mono.as_slice() {
                            [] => rhs = -c.clone(),
                            [k] => lhs[*k] = c.clone(),
                            _ => unreachable!(),
                        }
                    }
                    eqs.push((lhs, rhs));
                }
            }
            equations.insert((l, j), eqs);
        }
    }

    let build_system = |tau: &[usize]| -> (Mat, Mat) {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for l in 0..aux.len() {
            for j in tau[l]..=kbar[l] {
                if j == 0 {
                    continue;
                }
                for (lhs, r) in equations.get(&(l, j)).into_iter().flatten() {
                    rows.push(lhs.clone());
                    rhs.push(vec![r.clone()]);
                }
            }
        }
        let lhs = Mat::from_rows(rows, n_unk).expect("uniform rows");
        let rhs = Mat::from_rows(rhs, 1).expect("single column");
        (lhs, rhs)
    };
    let mut cache: HashMap<Vec<usize>, bool> = HashMap::new();
    let mut feasible = |tau: &[usize]| -> bool {
        if let Some(&v) = cache.get(tau) {
            return v;
        }
        let (lhs, rhs) = build_system(tau);
        let v = if lhs.rows() == 0 {
            true
        } else if n_unk == 0 {
            rhs.is_zero()
        } else {
            matches!(lhs.solve(&rhs), Ok(Some(_)))
        };
        cache.insert(tau.to_vec(), v);
        v
    };

    let ranges: Vec<usize> = kbar.iter().map(|&k| k.max(1) + usize::from(k >= 1)).collect();
    let combos: usize = ranges.iter().product();
    if combos > TAU_SEARCH_CAP {
        return Err(Refusal::Unsupported { detail: format!("{combos} parameter-set candidates exceed the search cap") });
    }
    let mut minimal: Vec<Vec<usize>> = Vec::new();
    for idx in 0..combos {
        let mut rest = idx;
        let mut tau = Vec::with_capacity(aux.len());
        for range in &ranges {
            // tau_l ranges over 1..=kbar_l + 1; columns with kbar_l = 0 stay at 1.
            tau.push(1 + rest % range);
            rest /= range;
        }
        if kbar.iter().zip(&tau).any(|(&k, &t)| k == 0 && t != 1) {
            continue;
        }
        if !feasible(&tau) {
            continue;
        }
        let is_minimal = (0..aux.len()).all(|l| {
            if tau[l] < 2 {
                return true;
            }
            let mut lower = tau.clone();
            lower[l] -= 1;
            !feasible(&lower)
        });
        if is_minimal {
            minimal.push(tau);
        }
    }
    minimal.sort_by_key(|t| (t.iter().map(|v| v - 1).sum::<usize>(), t.clone()));
    let tau = minimal.first().cloned().unwrap_or_else(|| kbar.iter().map(|k| k + 1).collect());
    let n_de1 = minimal.len();

    let values = if n_unk == 0 {
        Vec::new()
    } else {
        let (lhs, rhs) = build_system(&tau);
        if lhs.rows() == 0 {
            vec![Rat::zero(); n_unk]
        } else {
            let sol = lhs
                .solve(&rhs)
                .map_err(|err| Refusal::Internal { detail: err.to_string() })?
                .ok_or(Refusal::Internal { detail: "chosen parameter set lost feasibility".into() })?;
            (0..n_unk).map(|k| sol[(k, 0)].clone()).collect()
        }
    };

    let mut expressions = Vec::new();
    for (pos, &mi) in masters.iter().enumerate() {
        let mut aux_terms = Vec::new();
        let mut state_terms = Vec::new();
        for (&(sym, _), coef) in &master_exprs[pos] {
            let v = coef.eval(&values);
            if v.is_zero() {
                continue;
            }
            match sym {
                Sym::U(l) => aux_terms.push((l, v)),
                Sym::X(t) => state_terms.push((t, v)),
                Sym::Z(_) => {}
            }
        }
        expressions.push(MasterExpression { input: mi, aux_terms, state_terms });
    }

    let mut demands: Vec<Demand> = masters
        .iter()
        .map(|&mi| Demand {
            input: mi,
            order: block.rows.iter().filter_map(|&r| e.e[(r, mi)].degree()).max().unwrap_or(0),
            source: DemandSource::Master,
        })
        .collect();
    for (l, &t) in tau.iter().enumerate() {
        if t >= 2 {
            demands.push(Demand { input: aux[l], order: t - 1, source: DemandSource::Auxiliary });
        }
    }

    Ok(Type2Solution {
        block: block.clone(),
        masters: masters.to_vec(),
        auxiliaries: aux,
        unknowns,
        e3,
        kbar,
        tau,
        n_de1,
        values,
        expressions,
        demands,
        dropped,
    })
}

fn render_poly_coefs(terms: &BTreeMap<usize, Coef>, names: &[String]) -> String {
    if terms.is_empty() {
        return "0".into();
    }
    let parts: Vec<String> = terms
        .iter()
        .rev()
        .map(|(&k, c)| match k {
            0 => format!("({})", c.render(names)),
            1 => format!("({})s", c.render(names)),
            _ => format!("({})s^{k}", c.render(names)),
        })
        .collect();
    parts.join(" + ")
}

// ---------------------------------------------------------------------------
// Compensation bookkeeping and the cyclic flow

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CompensationKind {
    FirstType,
    SecondType,
    /// A string source delayed by a further string to lengthen a chain.
    Recomposition,
}

/// `u_input = x_terminal + sum a_l u_l + sum b_t x_t`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Compensation {
    pub input: usize,
    pub string: IntegratorString,
    pub kind: CompensationKind,
    pub aux_terms: Vec<(usize, Rat)>,
    pub state_terms: Vec<(usize, Rat)>,
    pub iteration: usize,
}

impl Compensation {
    pub fn first_type(input: usize, string: IntegratorString, iteration: usize) -> Self {
        Compensation {
            input,
            string,
            kind: CompensationKind::FirstType,
            aux_terms: Vec::new(),
            state_terms: Vec::new(),
            iteration,
        }
    }
}

impl fmt::Display for Compensation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{} = x{}", self.input + 1, self.string.terminal + 1)?;
        let mut terms: Vec<(String, &Rat)> = self.state_terms.iter().map(|(t, c)| (format!("x{}", t + 1), c)).collect();
        terms.extend(self.aux_terms.iter().map(|(l, c)| (format!("u{}", l + 1), c)));
        for (name, c) in terms {
            let neg = c < &Rat::zero();
            let mag = if neg { -c.clone() } else { c.clone() };
            write!(f, " {} ", if neg { '-' } else { '+' })?;
            if !mag.is_one() {
                write!(f, "{}*", format_rat(&mag))?;
            }
            write!(f, "{name}")?;
        }
        Ok(())
    }
}

/// Accumulated substitution `u = F x + G w` over the free inputs `w`.
#[derive(Clone, Debug)]
pub struct CompensationState {
    pub f: Mat,
    pub g: Mat,
    /// Inputs currently driven from outside (not preset to zero).
    pub active: Vec<bool>,
    pub compensated: Vec<bool>,
    pub applied: Vec<Compensation>,
    pub used_inputs: BTreeSet<usize>,
    pub used_states: BTreeSet<usize>,
}

impl CompensationState {
    /// Framework inputs and the given string sources are active; all other
    /// inputs are preset to zero.
    pub fn new(n: usize, m: usize, fw: &DecouplingFramework, strings: &[IntegratorString]) -> Self {
        let mut active = vec![false; m];
        let mut used_inputs = fw.used_inputs();
        let mut used_states = fw.used_states();
        for &u in &used_inputs {
            active[u] = true;
        }
        for s in strings {
            active[s.input] = true;
            used_inputs.insert(s.input);
            used_states.extend(s.states.iter().copied());
        }
        let mut g = Mat::zeros(m, m);
        for (j, &on) in active.iter().enumerate() {
            if on {
                g[(j, j)] = Rat::one();
            }
        }
        CompensationState {
            f: Mat::zeros(m, n),
            g,
            active,
            compensated: vec![false; m],
            applied: Vec::new(),
            used_inputs,
            used_states,
        }
    }

    pub fn free_inputs(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&j| self.active[j] && !self.compensated[j]).collect()
    }

    /// Zeroed inputs that never became active.
    pub fn zeroed_inputs(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&j| !self.active[j]).collect()
    }

    pub fn apply(&mut self, comp: Compensation) {
        let (m, n) = (self.f.rows(), self.f.cols());
        let i = comp.input;
        let src = comp.string.input;
        if !self.active[src] {
            self.active[src] = true;
            self.g[(src, src)] = Rat::one();
        }
        self.used_inputs.insert(src);
        self.used_states.extend(comp.string.states.iter().copied());
        let gi = self.g.col(i);
        let mut row = Mat::zeros(1, n);
        row[(0, comp.string.terminal)] = Rat::one();
        for (t, c) in &comp.state_terms {
            row[(0, *t)] += c.clone();
        }
        self.f = &self.f + &(&gi * &row);
        for (l, c) in &comp.aux_terms {
            for k in 0..m {
                let v = &gi[(k, 0)] * c;
                self.g[(k, *l)] += v;
            }
        }
        for k in 0..m {
            self.g[(k, i)] = Rat::zero();
        }
        self.compensated[i] = true;
        self.applied.push(comp);
    }

    /// Integrations added in front of input `u` by compensation.
    pub fn extra_order(&self, u: usize) -> usize {
        let mut seen = BTreeSet::new();
        let mut cur = u;
        let mut total = 0;
        while let Some(c) = self.applied.iter().find(|c| c.input == cur) {
            if !seen.insert(cur) {
                break;
            }
            total += c.string.order();
            cur = c.string.input;
        }
        total
    }

    /// `(A + B F, B G)` restricted to the free inputs.
    pub fn current(&self, sys: &StateSpaceSystem) -> (Mat, Mat, Vec<usize>) {
        let a = &sys.a + &(&sys.b * &self.f);
        let free = self.free_inputs();
        let b = (&sys.b * &self.g).select_cols(&free);
        (a, b, free)
    }

    pub fn general_orders(&self, fw: &DecouplingFramework) -> Vec<usize> {
        fw.paths.iter().map(|p| p.order() + self.extra_order(p.input)).collect()
    }

    pub fn strings(&self) -> Vec<IntegratorString> {
        self.applied.iter().map(|c| c.string.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub rows: Vec<String>,
    pub ede: Vec<Vec<String>>,
    pub demands: Vec<Demand>,
    pub compensations: Vec<String>,
    pub general_orders: Vec<usize>,
    pub relative_orders: Vec<usize>,
    pub orders_agree: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refusal: Option<Refusal>,
}

/// Compensated system on which the general and relative orders agree.
#[derive(Clone, Debug)]
pub struct PreDecouplingSystem {
    pub state: CompensationState,
    pub a: Mat,
    /// Input matrix over `free`.
    pub b: Mat,
    pub free: Vec<usize>,
    pub general_orders: Vec<usize>,
    pub relative_orders: Vec<usize>,
    pub trace: Vec<IterationTrace>,
}

#[derive(Clone, Debug)]
pub struct FlowFailure {
    pub refusal: Refusal,
    pub trace: Vec<IterationTrace>,
}

/// First-iteration inputs to [`cyclic_flow`]: the framework analysis and the
/// compensations chosen for its demands.
#[derive(Clone, Debug)]
pub struct FirstIteration {
    pub ede: DecouplingMatrixPoly,
    pub demands: Vec<Demand>,
    pub compensations: Vec<Compensation>,
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v
}

/// Repeats compensation until the general relative orders of the framework
/// equal (as a multiset) the relative orders of the compensated system.
///
/// After the first iteration new demands are read from the rows of the
/// string terminals and met from the remaining disjoint strings.
pub fn cyclic_flow(
    sys: &StateSpaceSystem,
    sfg: &SignalFlowGraph,
    fw: &DecouplingFramework,
    mut state: CompensationState,
    first: FirstIteration,
) -> Result<PreDecouplingSystem, FlowFailure> {
    let total_strings =
        candidate_strings(sfg, &fw.used_inputs(), &fw.used_states()).iter().map(|s| s.input).collect::<BTreeSet<_>>();
    let bound = total_strings.len() + 1;
    let mut trace = Vec::new();
    let mut iteration = 1;
    let mut rows = first.ede.label_strings();
    let mut ede = first.ede.to_display_rows();
    let mut demands = first.demands;
    let mut pending = first.compensations;
    loop {
        let labels: Vec<String> = pending.iter().map(ToString::to_string).collect();
        for comp in pending.drain(..) {
            state.apply(comp);
        }
        let (a, b, free) = state.current(sys);
        let general = state.general_orders(fw);
        let relative = match controllable_relative_orders(&a, &b, &sys.c) {
            Ok(r) => r.d,
            Err(err) => {
                return Err(FlowFailure { refusal: Refusal::Internal { detail: err.to_string() }, trace });
            }
        };
        debug_assert_eq!(relative, relative_orders_of(&a, &b, &sys.c).d);
        let agree = sorted(&general) == sorted(&relative);
        trace.push(IterationTrace {
            iteration,
            rows: std::mem::take(&mut rows),
            ede: std::mem::take(&mut ede),
            demands: std::mem::take(&mut demands),
            compensations: labels,
            general_orders: general.clone(),
            relative_orders: relative.clone(),
            orders_agree: agree,
            refusal: None,
        });
        if agree {
            return Ok(PreDecouplingSystem {
                state,
                a,
                b,
                free,
                general_orders: general,
                relative_orders: relative,
                trace,
            });
        }
        iteration += 1;
        let fail = |trace: &mut Vec<IterationTrace>, refusal: Refusal| {
            if let Some(last) = trace.last_mut() {
                last.refusal = Some(refusal.clone());
            }
            FlowFailure { refusal, trace: std::mem::take(trace) }
        };
        if iteration > bound {
            return Err(fail(&mut trace, Refusal::IterationBound { iterations: bound }));
        }

        // Rows of every string in use, against the full input set.
        let full_b = &sys.b * &state.g;
        let strings = state.strings();
        let mut seen = BTreeSet::new();
        let strings: Vec<IntegratorString> = strings.into_iter().filter(|s| seen.insert(s.terminal)).collect();
        let e = string_rows(&a, &full_b, &strings);
        let mut next = Vec::new();
        for j in 0..sys.m() {
            if e.e.col_is_zero(j) {
                continue;
            }
            let order = e.col_order(j);
            let terminal = (0..e.rows()).find(|&i| !e.e[(i, j)].is_zero()).map(|i| strings[i].terminal).unwrap_or(0);
            next.push(Demand { input: j, order, source: DemandSource::StringRow { terminal } });
        }
        rows = e.label_strings();
        ede = e.to_display_rows();
        if next.is_empty() {
            return Err(fail(&mut trace, Refusal::Stalled { general, relative }));
        }
        for dmd in &next {
            if state.compensated[dmd.input] {
                return Err(fail(
                    &mut trace,
                    Refusal::DemandOnCompensatedInput { input: dmd.input, order: dmd.order },
                ));
            }
            match assign_from_pool(sfg, &state, dmd.input, dmd.order, iteration) {
                Some(chain) => {
                    for comp in chain {
                        state.used_inputs.insert(comp.string.input);
                        state.used_states.extend(comp.string.states.iter().copied());
                        pending.push(comp);
                    }
                }
                None => {
                    trace.push(IterationTrace {
                        iteration,
                        rows: std::mem::take(&mut rows),
                        ede: std::mem::take(&mut ede),
                        demands: next.clone(),
                        compensations: Vec::new(),
                        general_orders: Vec::new(),
                        relative_orders: Vec::new(),
                        orders_agree: false,
                        refusal: None,
                    });
                    return Err(fail(
                        &mut trace,
                        Refusal::NoStringAvailable { input: dmd.input, order: dmd.order },
                    ));
                }
            }
        }
        demands = next;
    }
}

/// Smallest sufficient string from the unused pool, else a head-to-tail
/// chain of strings whose orders add up to the demand.
fn assign_from_pool(
    sfg: &SignalFlowGraph,
    state: &CompensationState,
    input: usize,
    order: usize,
    iteration: usize,
) -> Option<Vec<Compensation>> {
    let mut used_inputs = state.used_inputs.clone();
    used_inputs.insert(input);
    let pool = candidate_strings(sfg, &used_inputs, &state.used_states);
    if let Some(best) = pool.iter().filter(|s| s.order() >= order).min_by_key(|s| s.order()) {
        return Some(vec![Compensation::first_type(input, best.clone(), iteration)]);
    }
    // Recomposition: take the longest string, then lengthen it at its source.
    let longest = pool.iter().max_by_key(|s| (s.order(), std::cmp::Reverse(s.terminal)))?.clone();
    let mut inner = state.clone();
    inner.used_inputs.insert(longest.input);
    inner.used_states.extend(longest.states.iter().copied());
    inner.used_inputs.insert(input);
    let rest = assign_from_pool(sfg, &inner, longest.input, order - longest.order(), iteration)?;
    let mut out = vec![Compensation::first_type(input, longest, iteration)];
    out.extend(rest.into_iter().map(|mut c| {
        c.kind = CompensationKind::Recomposition;
        c
    }));
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowgraph::{build_sfg, controllable_partition, enumerate_frameworks};
    use crate::plants::{nine_state, twenty_two_state, NineStateCoupling};

    fn disp(p: &Poly) -> String {
        p.to_string()
    }

    #[test]
    fn nine_state_ede() {
        let sys = nine_state(NineStateCoupling::FromX3);
        let fw = enumerate_frameworks(&build_sfg(&sys), None).items.remove(0);
        let e = build_ede(&sys, &fw);
        assert!(e.e.row_is_zero(0) && e.e.row_is_zero(1));
        assert_eq!(disp(&e.e[(2, 0)]), "s^3");
        for j in 1..4 {
            assert!(e.e[(2, j)].is_zero());
        }
        let blocks = decompose_blocks(&e.e);
        assert_eq!(blocks, vec![CompensationBlock { rows: vec![2], cols: vec![0] }]);
    }

    #[test]
    fn twenty_two_state_ede_block() {
        let sys = twenty_two_state();
        let fw = enumerate_frameworks(&build_sfg(&sys), None).items.remove(0);
        assert_eq!(fw.orders(), vec![1, 1, 1, 2, 1, 5]);
        let e = build_ede(&sys, &fw);
        assert_eq!(disp(&e.e[(3, 2)]), "s");
        assert_eq!(disp(&e.e[(5, 2)]), "s^4");
        assert_eq!(disp(&e.e[(5, 3)]), "-s^3");
        assert_eq!(disp(&e.e[(5, 4)]), "s^4");
        let blocks = decompose_blocks(&e.e);
        assert_eq!(blocks, vec![CompensationBlock { rows: vec![3, 5], cols: vec![2, 3, 4] }]);
    }

    #[test]
    fn general_rows_for_nine_state() {
        let sfg_of = |c| {
            let sys = nine_state(c);
            let g = build_sfg(&sys);
            (sys, g)
        };
        for (coupling, expect_zero) in [(NineStateCoupling::FromX3, true), (NineStateCoupling::FromX2, false)] {
            let (sys, g) = sfg_of(coupling);
            let fw = enumerate_frameworks(&g, None).items.remove(0);
            let s = candidate_strings(&g, &fw.used_inputs(), &fw.used_states()).remove(0);
            assert_eq!(s.terminal, 6);
            let mut state = CompensationState::new(sys.n(), sys.m(), &fw, std::slice::from_ref(&s));
            state.apply(Compensation::first_type(0, s.clone(), 1));
            let (a, b, _) = state.current(&sys);
            let full_b = &sys.b * &state.g;
            let e = string_rows(&a, &full_b, &[s]);
            assert_eq!(e.is_zero(), expect_zero);
            if !expect_zero {
                assert_eq!(disp(&e.e[(0, 1)]), "s");
            }
            let _ = b;
        }
    }

    #[test]
    fn type1_on_nine_state() {
        let sys = nine_state(NineStateCoupling::FromX3);
        let g = build_sfg(&sys);
        let fw = enumerate_frameworks(&g, None).items.remove(0);
        let e = build_ede(&sys, &fw);
        let block = decompose_blocks(&e.e).remove(0);
        let strings = candidate_strings(&g, &fw.used_inputs(), &fw.used_states());
        let plan = type1_plan(&e, &block, &strings).unwrap();
        assert_eq!((plan.input, plan.order, plan.string.terminal), (0, 3, 6));
        let short: Vec<IntegratorString> = strings.iter().filter(|s| s.order() < 3).cloned().collect();
        assert_eq!(type1_plan(&e, &block, &short), Err(Refusal::NoStringAvailable { input: 0, order: 3 }));
    }

    #[test]
    fn type2_on_twenty_two_state() {
        let sys = twenty_two_state();
        let fw = enumerate_frameworks(&build_sfg(&sys), None).items.remove(0);
        let e = build_ede(&sys, &fw);
        let block = decompose_blocks(&e.e).remove(0);
        let part = controllable_partition(&sys, &block.cols);
        let mut reach = vec![false; sys.n()];
        for &s in &part.reachable {
            reach[s] = true;
        }
        let sol = type2_solve(&sys.a, &sys.b, &e, &block, &[2, 4], &reach).unwrap();
        assert_eq!(sol.auxiliaries, vec![3]);
        assert_eq!(sol.kbar, vec![3]);
        assert_eq!(sol.tau, vec![1]);
        assert_eq!(sol.n_de1, 1);
        let u3 = &sol.expressions[0];
        assert_eq!(u3.state_terms, vec![(4, Rat::one())]);
        assert!(u3.aux_terms.is_empty());
        assert!(sol.expressions[1].state_terms.is_empty());
        let orders: Vec<(usize, usize)> = sol.demands.iter().map(|d| (d.input, d.order)).collect();
        assert_eq!(orders, vec![(2, 4), (4, 4)]);
    }

    #[test]
    fn type2_single_column_reduces_to_type1() {
        let sys = nine_state(NineStateCoupling::FromX3);
        let fw = enumerate_frameworks(&build_sfg(&sys), None).items.remove(0);
        let e = build_ede(&sys, &fw);
        let block = decompose_blocks(&e.e).remove(0);
        let sol = type2_solve(&sys.a, &sys.b, &e, &block, &[0], &[false; 9]).unwrap();
        assert!(sol.auxiliaries.is_empty());
        assert!(sol.expressions[0].state_terms.is_empty());
        assert_eq!(sol.demands, vec![Demand { input: 0, order: 3, source: DemandSource::Master }]);
    }

    #[test]
    fn blocks_of_diagonal_pattern() {
        let mut e = PolyMat::zeros(2, 2);
        e[(0, 0)] = Poly::from_i64(&[0, 0, 0, 1]);
        e[(1, 1)] = Poly::from_i64(&[0, 1]);
        let blocks = decompose_blocks(&e);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[1], CompensationBlock { rows: vec![1], cols: vec![1] });
    }

    fn nine_state_flow(coupling: NineStateCoupling) -> Result<PreDecouplingSystem, FlowFailure> {
        let sys = nine_state(coupling);
        let g = build_sfg(&sys);
        let fw = enumerate_frameworks(&g, None).items.remove(0);
        let e = build_ede(&sys, &fw);
        let block = decompose_blocks(&e.e).remove(0);
        let strings = candidate_strings(&g, &fw.used_inputs(), &fw.used_states());
        let plan = type1_plan(&e, &block, &strings).unwrap();
        let state = CompensationState::new(sys.n(), sys.m(), &fw, std::slice::from_ref(&plan.string));
        let first = FirstIteration {
            ede: e,
            demands: vec![Demand { input: plan.input, order: plan.order, source: DemandSource::FirstType }],
            compensations: vec![Compensation::first_type(plan.input, plan.string, 1)],
        };
        cyclic_flow(&sys, &g, &fw, state, first)
    }

    #[test]
    fn cyclic_flow_settles_after_one_iteration() {
        let pre = nine_state_flow(NineStateCoupling::FromX3).unwrap();
        assert_eq!(pre.trace.len(), 1);
        assert_eq!(pre.trace[0].compensations, vec!["u1 = x7".to_string()]);
        assert_eq!(pre.general_orders, vec![4, 1, 4]);
        assert_eq!(sorted(&pre.relative_orders), vec![1, 4, 4]);
        assert_eq!(pre.free, vec![1, 2, 3]);
    }

    #[test]
    fn cyclic_flow_refuses_with_witness() {
        let fail = nine_state_flow(NineStateCoupling::FromX2).unwrap_err();
        assert_eq!(fail.refusal, Refusal::NoStringAvailable { input: 1, order: 1 });
        assert_eq!(fail.trace[0].relative_orders, vec![3, 1, 3]);
        assert_eq!(fail.trace.last().unwrap().rows, vec!["x7".to_string()]);
    }
}
