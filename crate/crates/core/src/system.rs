//! The state-space problem instance and the classical decoupling tools:
//! relative orders, the decoupling pair `(B*, A*)`, the Falb–Wolovich test,
//! regular decoupling feedback and exact closed-loop transfer matrices.

use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::algebra::{ratfunc_normalize, resolvent, Mat, Poly, RatFunc};
use crate::error::{Error, Result};

/// `x' = Ax + Bu`, `y = Cx`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSpaceSystem {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
}

impl StateSpaceSystem {
    /// Checks dimensional consistency only; see [`validate`] for the rest.
    pub fn new(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let n = a.rows();
        let mut issues = Vec::new();
        if !a.is_square() {
            issues.push(format!("A is {}x{}, not square", a.rows(), a.cols()));
        }
        if b.rows() != n {
            issues.push(format!("B has {} rows, expected {n}", b.rows()));
        }
        if c.cols() != n {
            issues.push(format!("C has {} columns, expected {n}", c.cols()));
        }
        if issues.is_empty() {
            Ok(StateSpaceSystem { a, b, c })
        } else {
            Err(Error::InvalidSystem(issues))
        }
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b.cols()
    }

    pub fn p(&self) -> usize {
        self.c.rows()
    }

    /// `[B, AB, ..., A^(n-1) B]`
    pub fn controllability_matrix(&self) -> Mat {
        let mut blocks = self.b.clone();
        let mut cur = self.b.clone();
        for _ in 1..self.n() {
            cur = &self.a * &cur;
            blocks = blocks.hstack(&cur).expect("same row count");
        }
        blocks
    }

    pub fn is_controllable(&self) -> bool {
        self.n() == 0 || self.controllability_matrix().rank() == self.n()
    }

    /// Open-loop system with the feedback `u = Fx + Gv` applied.
    pub fn closed_loop(&self, law: &FeedbackLaw) -> Result<StateSpaceSystem> {
        law.check_dims(self)?;
        let a = &self.a + &(&self.b * &law.f);
        let b = &self.b * &law.g;
        StateSpaceSystem::new(a, b, self.c.clone())
    }
}

/// Reports every violated standing assumption by name.
pub fn validate(sys: &StateSpaceSystem) -> Result<()> {
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let mut issues = Vec::new();
    if n == 0 {
        issues.push("empty state".to_string());
    }
    if p > m {
        issues.push(format!("more outputs than inputs (p = {p} > m = {m})"));
    }
    if (0..m).any(|j| sys.b.col_is_zero(j)) || sys.b.rank() < m {
        issues.push("B not monic".to_string());
    }
    if sys.c.rank() < p {
        issues.push("C not epic".to_string());
    }
    if n > 0 && !sys.is_controllable() {
        issues.push("(A, B) not controllable".to_string());
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidSystem(issues))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelativeOrders {
    pub d: Vec<usize>,
    /// Rows where no `C_i A^(j-1) B` was nonzero and `d_i = n` was assigned.
    pub fallback: Vec<usize>,
}

/// Relative order of each row of `c` with respect to `(a, b)`.
pub fn relative_orders_of(a: &Mat, b: &Mat, c: &Mat) -> RelativeOrders {
    let n = a.rows();
    let mut d = Vec::with_capacity(c.rows());
    let mut fallback = Vec::new();
    for i in 0..c.rows() {
        let mut row = c.row(i);
        let mut found = None;
        for j in 1..=n.max(1) {
            if !(&row * b).is_zero() {
                found = Some(j);
                break;
            }
            row = &row * a;
        }
        match found {
            Some(j) => d.push(j),
            None => {
                fallback.push(i);
                d.push(n);
            }
        }
    }
    RelativeOrders { d, fallback }
}

pub fn relative_orders(sys: &StateSpaceSystem) -> RelativeOrders {
    relative_orders_of(&sys.a, &sys.b, &sys.c)
}

/// Rows `C_i A^(d_i - 1) B` and `C_i A^(d_i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecouplingPair {
    pub bstar: Mat,
    pub astar: Mat,
}

pub fn decoupling_pair_of(a: &Mat, b: &Mat, c: &Mat, d: &RelativeOrders) -> DecouplingPair {
    let (n, m, p) = (a.rows(), b.cols(), c.rows());
    let mut bstar = Mat::zeros(p, m);
    let mut astar = Mat::zeros(p, n);
    for i in 0..p {
        let mut row = c.row(i);
        for _ in 1..d.d[i] {
            row = &row * a;
        }
        let brow = &row * b;
        let arow = &row * a;
        for j in 0..m {
            bstar[(i, j)] = brow[(0, j)].clone();
        }
        for j in 0..n {
            astar[(i, j)] = arow[(0, j)].clone();
        }
    }
    DecouplingPair { bstar, astar }
}

pub fn decoupling_pair(sys: &StateSpaceSystem, d: &RelativeOrders) -> DecouplingPair {
    decoupling_pair_of(&sys.a, &sys.b, &sys.c, d)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FalbWolovich {
    /// `m == p`
    pub regular: bool,
    pub rank: usize,
    /// Square case: `det B* != 0`; otherwise `rank B* == p`.
    pub passes: bool,
}

pub fn falb_wolovich(sys: &StateSpaceSystem) -> FalbWolovich {
    let d = relative_orders(sys);
    let pair = decoupling_pair(sys, &d);
    let rank = pair.bstar.rank();
    let regular = sys.m() == sys.p();
    let passes = if regular {
        pair.bstar.det().map(|v| !v.is_zero()).unwrap_or(false)
    } else {
        rank == sys.p()
    };
    FalbWolovich { regular, rank, passes }
}

/// Static state feedback `u = Fx + Gv`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeedbackLaw {
    pub f: Mat,
    pub g: Mat,
}

impl FeedbackLaw {
    pub fn identity(sys: &StateSpaceSystem) -> Self {
        FeedbackLaw { f: Mat::zeros(sys.m(), sys.n()), g: Mat::identity(sys.m()) }
    }

    pub fn check_dims(&self, sys: &StateSpaceSystem) -> Result<()> {
        let (n, m) = (sys.n(), sys.m());
        if self.f.rows() != m || self.f.cols() != n || self.g.rows() != m {
            return Err(Error::DimensionMismatch {
                op: "feedback law",
                detail: format!(
                    "F is {}x{}, G is {}x{}; system has n = {n}, m = {m}",
                    self.f.rows(),
                    self.f.cols(),
                    self.g.rows(),
                    self.g.cols()
                ),
            });
        }
        Ok(())
    }
}

/// Decoupling feedback from `(B*, A*)`.
///
/// Square case: `F = -(B*)^-1 A*`, `G = (B*)^-1`. Non-square case: the first
/// `p` independent columns of `B*` act as masters, the remaining inputs are
/// held at `K2 x` with `K2 = 0`.
pub fn regular_feedback(sys: &StateSpaceSystem) -> Result<FeedbackLaw> {
    let d = relative_orders(sys);
    let pair = decoupling_pair(sys, &d);
    regular_feedback_from_pair(sys.n(), sys.m(), &pair)
}

pub(crate) fn regular_feedback_from_pair(n: usize, m: usize, pair: &DecouplingPair) -> Result<FeedbackLaw> {
    let p = pair.bstar.rows();
    let masters = pair.bstar.independent_columns();
    if masters.len() < p {
        return Err(Error::Singular(format!("rank B* = {} < p = {p}", masters.len())));
    }
    let bbar = pair.bstar.select_cols(&masters);
    let inv = bbar.inverse()?;
    let f_m = -&(&inv * &pair.astar);
    let mut f = Mat::zeros(m, n);
    let mut g = Mat::zeros(m, p);
    for (k, &j) in masters.iter().enumerate() {
        for c in 0..n {
            f[(j, c)] = f_m[(k, c)].clone();
        }
        for c in 0..p {
            g[(j, c)] = inv[(k, c)].clone();
        }
    }
    Ok(FeedbackLaw { f, g })
}

/// Grid of reduced rational functions.
#[derive(Clone, PartialEq, Eq)]
pub struct TransferMatrix {
    pub entries: Vec<Vec<RatFunc>>,
}

impl TransferMatrix {
    pub fn rows(&self) -> usize {
        self.entries.len()
    }

    pub fn cols(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }

    pub fn get(&self, i: usize, j: usize) -> &RatFunc {
        &self.entries[i][j]
    }

    pub fn to_display_rows(&self) -> Vec<Vec<String>> {
        self.entries.iter().map(|r| r.iter().map(ToString::to_string).collect()).collect()
    }
}

impl fmt::Debug for TransferMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self.to_display_rows().into_iter().map(|r| r.join(", ")).collect();
        write!(f, "[{}]", rows.join("; "))
    }
}

/// `C (sI - A)^-1 B` for arbitrary matrices.
pub fn transfer_matrix(a: &Mat, b: &Mat, c: &Mat) -> Result<TransferMatrix> {
    let res = resolvent(a)?;
    let num = res.sandwich(c, b);
    let mut entries = Vec::with_capacity(c.rows());
    for i in 0..c.rows() {
        let mut row = Vec::with_capacity(b.cols());
        for j in 0..b.cols() {
            row.push(ratfunc_normalize(num[(i, j)].clone(), res.char_poly.clone())?);
        }
        entries.push(row);
    }
    Ok(TransferMatrix { entries })
}

/// `C (sI - A - BF)^-1 B G`
pub fn closed_loop_tf(sys: &StateSpaceSystem, law: &FeedbackLaw) -> Result<TransferMatrix> {
    let cl = sys.closed_loop(law)?;
    transfer_matrix(&cl.a, &cl.b, &cl.c)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagonality {
    /// `diag(s^-k_1, ..., s^-k_p)`
    IntegratorDiagonal { orders: Vec<usize> },
    /// Diagonal with nonzero diagonal entries that are not pure integrators.
    Diagonal { denominators: Vec<Poly> },
    /// First offending `(row, col)`, zero-based, in row-major scan.
    Witness { row: usize, col: usize },
}

impl Diagonality {
    pub fn orders(&self) -> Option<&[usize]> {
        match self {
            Diagonality::IntegratorDiagonal { orders } => Some(orders),
            _ => None,
        }
    }
}

/// Strict check: pure-integrator diagonal or the first offending entry.
pub fn diagonality_check(t: &TransferMatrix) -> Result<Diagonality> {
    diagonality(t, false)
}

/// Like [`diagonality_check`] but accepts any nonzero diagonal.
pub fn diagonality_check_relaxed(t: &TransferMatrix) -> Result<Diagonality> {
    diagonality(t, true)
}

fn diagonality(t: &TransferMatrix, relaxed: bool) -> Result<Diagonality> {
    if t.rows() != t.cols() {
        return Err(Error::NotSquare { rows: t.rows(), cols: t.cols() });
    }
    let mut orders = Vec::with_capacity(t.rows());
    let mut pure = true;
    for i in 0..t.rows() {
        for j in 0..t.cols() {
            let e = t.get(i, j);
            if i != j {
                if !e.is_zero() {
                    return Ok(Diagonality::Witness { row: i, col: j });
                }
                continue;
            }
            match e.integrator_order() {
                Some(k) => orders.push(k),
                None if relaxed && !e.is_zero() => pure = false,
                None => return Ok(Diagonality::Witness { row: i, col: j }),
            }
        }
    }
    if pure {
        Ok(Diagonality::IntegratorDiagonal { orders })
    } else {
        Ok(Diagonality::Diagonal { denominators: (0..t.rows()).map(|i| t.get(i, i).den().clone()).collect() })
    }
}
