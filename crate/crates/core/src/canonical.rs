//! Canonical forms: the Kalman controllable split, the Luenberger second
//! controllable canonical form, the third standard form (independent
//! integrator chains) and the output-derivative coordinates of a decoupled
//! system.

use num_traits::One;

use crate::algebra::{Mat, Rat};
use crate::error::{Error, Result};
use crate::system::{relative_orders_of, FeedbackLaw, RelativeOrders, StateSpaceSystem};

/// `x = V z` with the first `r` coordinates of `z` spanning the controllable
/// subspace of `(A, B)`.
#[derive(Clone, Debug)]
pub struct ControllableDecomposition {
    pub v: Mat,
    pub v_inv: Mat,
    pub r: usize,
    pub a: Mat,
    pub b: Mat,
}

impl ControllableDecomposition {
    pub fn a11(&self) -> Mat {
        let idx: Vec<usize> = (0..self.r).collect();
        self.a.submatrix(&idx, &idx)
    }

    pub fn b1(&self) -> Mat {
        let idx: Vec<usize> = (0..self.r).collect();
        self.b.select_rows(&idx)
    }

    /// `C V` restricted to the controllable coordinates.
    pub fn c1(&self, c: &Mat) -> Mat {
        let idx: Vec<usize> = (0..self.r).collect();
        (c * &self.v).select_cols(&idx)
    }

    pub fn a22(&self) -> Mat {
        let idx: Vec<usize> = (self.r..self.a.rows()).collect();
        self.a.submatrix(&idx, &idx)
    }
}

/// Basis of the controllable subspace from the column scan of
/// `[B, AB, ...]`, completed by unit vectors in state order.
pub fn controllable_decomposition(a: &Mat, b: &Mat) -> ControllableDecomposition {
    let n = a.rows();
    let sys = StateSpaceSystem { a: a.clone(), b: b.clone(), c: Mat::zeros(0, n) };
    let ctrb = if n == 0 { Mat::zeros(0, 0) } else { sys.controllability_matrix() };
    let picked = ctrb.independent_columns();
    let r = picked.len();
    let mut basis = ctrb.select_cols(&picked);
    for t in 0..n {
        if basis.cols() == n {
            break;
        }
        let mut e = Mat::zeros(n, 1);
        e[(t, 0)] = Rat::one();
        let trial = basis.hstack(&e).expect("same row count");
        if trial.rank() > basis.cols() {
            basis = trial;
        }
    }
    let v_inv = basis.inverse().expect("completed basis is invertible");
    let at = &(&v_inv * a) * &basis;
    let bt = &v_inv * b;
    ControllableDecomposition { v: basis, v_inv, r, a: at, b: bt }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Luenberger2Form {
    /// `x_bar = T_c2 x`
    pub t: Mat,
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub sigma: Vec<usize>,
    /// Row `sigma_i` of block `i` of `B_c2`, stacked: unit upper triangular.
    pub beta: Mat,
}

impl Luenberger2Form {
    /// Index of the last row of block `i`.
    pub fn block_end(&self, i: usize) -> usize {
        self.sigma[..=i].iter().sum::<usize>() - 1
    }

    pub fn block_start(&self, i: usize) -> usize {
        self.sigma[..i].iter().sum()
    }
}

/// Controllability indexes from the scan `b_1..b_m, Ab_1..Ab_m, ...`.
pub fn controllability_indexes(a: &Mat, b: &Mat) -> Vec<usize> {
    let (n, m) = (a.rows(), b.cols());
    let mut sigma = vec![0; m];
    let mut active = vec![true; m];
    let mut basis = Mat::zeros(n, 0);
    let mut powers = b.clone();
    while basis.cols() < n && active.iter().any(|&x| x) {
        for j in 0..m {
            if !active[j] {
                continue;
            }
            let trial = basis.hstack(&powers.col(j)).expect("same row count");
            if trial.rank() > basis.cols() {
                basis = trial;
                sigma[j] += 1;
            } else {
                active[j] = false;
            }
        }
        powers = a * &powers;
    }
    sigma
}

pub fn luenberger2(sys: &StateSpaceSystem) -> Result<Luenberger2Form> {
    let (n, m) = (sys.n(), sys.m());
    if !sys.is_controllable() {
        return Err(Error::Uncontrollable);
    }
    if sys.b.rank() < m {
        return Err(Error::Precondition("B must have full column rank".into()));
    }
    let sigma = controllability_indexes(&sys.a, &sys.b);
    let mut q = Mat::zeros(n, 0);
    for (j, &s) in sigma.iter().enumerate() {
        let mut col = sys.b.col(j);
        for _ in 0..s {
            q = q.hstack(&col).expect("same row count");
            col = &sys.a * &col;
        }
    }
    let q_inv = q.inverse()?;
    let mut rows = Vec::with_capacity(n);
    let mut end = 0;
    for &s in &sigma {
        end += s;
        let mut row = q_inv.row(end - 1);
        for _ in 0..s {
            rows.push(row.clone());
            row = &row * &sys.a;
        }
    }
    let t = Mat::vstack_all(&rows, n);
    let t_inv = t.inverse()?;
    let a = &(&t * &sys.a) * &t_inv;
    let b = &t * &sys.b;
    let c = &sys.c * &t_inv;
    let mut beta = Mat::zeros(m, m);
    let mut end = 0;
    for (i, &s) in sigma.iter().enumerate() {
        end += s;
        for j in 0..m {
            beta[(i, j)] = b[(end - 1, j)].clone();
        }
    }
    Ok(Luenberger2Form { t, a, b, c, sigma, beta })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThirdStandardForm {
    /// Feedback in original coordinates: `u = K_c3 x + G_c3 u_bar`.
    pub k: Mat,
    pub g: Mat,
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub sigma: Vec<usize>,
}

impl ThirdStandardForm {
    pub fn law(&self) -> FeedbackLaw {
        FeedbackLaw { f: self.k.clone(), g: self.g.clone() }
    }

    pub fn system(&self) -> StateSpaceSystem {
        StateSpaceSystem { a: self.a.clone(), b: self.b.clone(), c: self.c.clone() }
    }
}

pub fn third_standard(form: &Luenberger2Form) -> Result<ThirdStandardForm> {
    let (n, m) = (form.a.rows(), form.b.cols());
    let ends: Vec<usize> = (0..m).map(|i| form.block_end(i)).collect();
    let astar = form.a.select_rows(&ends);
    let bstar = form.b.select_rows(&ends);
    let g = bstar.inverse()?;
    let f_bar = -&(&g * &astar);
    let a = &form.a + &(&form.b * &f_bar);
    let b = &form.b * &g;
    let k = &f_bar * &form.t;
    debug_assert_eq!(a.rows(), n);
    Ok(ThirdStandardForm { k, g, a, b, c: form.c.clone(), sigma: form.sigma.clone() })
}

/// Block shift pattern with unit inputs at the chain ends.
pub fn chain_pattern(sigma: &[usize]) -> (Mat, Mat) {
    let n: usize = sigma.iter().sum();
    let m = sigma.len();
    let mut a = Mat::zeros(n, n);
    let mut b = Mat::zeros(n, m);
    let mut start = 0;
    for (i, &s) in sigma.iter().enumerate() {
        for k in 0..s.saturating_sub(1) {
            a[(start + k, start + k + 1)] = Rat::one();
        }
        if s > 0 {
            b[(start + s - 1, i)] = Rat::one();
        }
        start += s;
    }
    (a, b)
}

/// Relative orders of the controllable part of `(a, b, c)`, computed on its
/// third standard form after dropping dependent input columns.
pub fn controllable_relative_orders(a: &Mat, b: &Mat, c: &Mat) -> Result<RelativeOrders> {
    let cols = b.independent_columns();
    let b_ind = b.select_cols(&cols);
    let dec = controllable_decomposition(a, &b_ind);
    if dec.r == 0 {
        return Ok(relative_orders_of(a, b, c));
    }
    let sub = StateSpaceSystem { a: dec.a11(), b: dec.b1(), c: dec.c1(c) };
    let third = third_standard(&luenberger2(&sub)?)?;
    let mut orders = relative_orders_of(&third.a, &third.b, &third.c);
    // Rows without any input path keep the full-dimension fallback.
    for &i in &orders.fallback {
        orders.d[i] = a.rows();
    }
    Ok(orders)
}

/// Output-derivative coordinates `x_hat = T x` of a decoupled system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeTransform {
    pub t: Mat,
    pub t_inv: Mat,
    pub n_co: usize,
    /// Row ranges of `Y_i` inside `x_hat`.
    pub blocks: Vec<std::ops::Range<usize>>,
    /// Original states kept as residual coordinates, in state order.
    pub residual: Vec<usize>,
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
}

/// `P` stacks `C_i A^k` for `k < d_i`; residual unit rows complete it.
pub fn tree_transform(decoupled: &StateSpaceSystem, d: &[usize]) -> Result<TreeTransform> {
    let n = decoupled.n();
    if d.len() != decoupled.p() {
        return Err(Error::DimensionMismatch {
            op: "tree transform",
            detail: format!("{} orders for {} outputs", d.len(), decoupled.p()),
        });
    }
    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for (i, &di) in d.iter().enumerate() {
        let start = rows.len();
        let mut row = decoupled.c.row(i);
        for _ in 0..di {
            rows.push(row.clone());
            row = &row * &decoupled.a;
        }
        blocks.push(start..rows.len());
    }
    let n_co = rows.len();
    let p_mat = Mat::vstack_all(&rows, n);
    if n_co > n || p_mat.rank() < n_co {
        return Err(Error::Precondition(format!(
            "output-derivative rows have rank {} < {n_co}; the system is not decoupled with these orders",
            p_mat.rank()
        )));
    }
    let mut t = p_mat;
    let mut residual = Vec::new();
    for s in 0..n {
        if t.rows() == n {
            break;
        }
        let trial = t.vstack(&Mat::unit_row(n, s))?;
        if trial.rank() > t.rows() {
            t = trial;
            residual.push(s);
        }
    }
    let t_inv = t.inverse()?;
    let a = &(&t * &decoupled.a) * &t_inv;
    let b = &t * &decoupled.b;
    let c = &decoupled.c * &t_inv;
    Ok(TreeTransform { t, t_inv, n_co, blocks, residual, a, b, c })
}

/// True when `a`, `b` carry exactly the chain pattern of `sigma`.
pub fn matches_chain_pattern(a: &Mat, b: &Mat, sigma: &[usize]) -> bool {
    let (pa, pb) = chain_pattern(sigma);
    *a == pa && *b == pb
}
