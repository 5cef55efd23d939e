//! Generators, brute-force oracles and property checks shared by the core
//! integration tests and the CLI acceptance target.

#![allow(dead_code)]

use std::collections::BTreeSet;

use decouple_core::algebra::{char_poly, ratio, resolvent, Mat, Poly, PolyMat, Rat};
use decouple_core::canonical::{luenberger2, matches_chain_pattern, third_standard, tree_transform};
use decouple_core::flowgraph::{build_sfg, build_sfg_from, enumerate_frameworks, is_tree};
use decouple_core::poles::{independence_test, is_diagonal, m_matrix, place_chain, place_decoupled, PlacementOutcome, PolePlacementSpec};
use decouple_core::system::{
    closed_loop_tf, falb_wolovich, regular_feedback, relative_orders, StateSpaceSystem,
};
use num_traits::{One, Zero};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

// ---------- generators ----------

/// Small rationals; zero with probability about `zero_weight / (zero_weight + 6)`.
pub fn entry(zero_weight: u32) -> impl Strategy<Value = Rat> {
    prop_oneof![
        zero_weight => Just(Rat::zero()),
        4 => (-3i64..=3).prop_map(|v| ratio(v, 1)),
        2 => ((-3i64..=3), (2i64..=3)).prop_map(|(n, d)| ratio(n, d)),
    ]
}

pub fn matrix(rows: usize, cols: usize, zero_weight: u32) -> impl Strategy<Value = Mat> {
    proptest::collection::vec(entry(zero_weight), rows * cols)
        .prop_map(move |data| Mat::from_vec(rows, cols, data).expect("sized"))
}

pub fn square(max_n: usize) -> impl Strategy<Value = Mat> {
    (1..=max_n).prop_flat_map(|n| matrix(n, n, 2))
}

pub fn system(n: usize, m: usize, p: usize, zero_weight: u32) -> impl Strategy<Value = StateSpaceSystem> {
    (matrix(n, n, zero_weight), matrix(n, m, zero_weight), matrix(p, n, zero_weight))
        .prop_map(|(a, b, c)| StateSpaceSystem::new(a, b, c).expect("sized"))
}

/// Controllable square systems with a nonsingular decoupling matrix.
pub fn regular_system() -> impl Strategy<Value = StateSpaceSystem> {
    (1usize..=6)
        .prop_flat_map(|n| (Just(n), 1..=n.min(3)))
        .prop_flat_map(|(n, m)| system(n, m, m, 4))
        .prop_filter("controllable with det B* != 0", |s| s.is_controllable() && falb_wolovich(s).passes)
}

/// Sparse systems for path enumeration; gains do not matter, only the pattern.
pub fn pattern_system() -> impl Strategy<Value = StateSpaceSystem> {
    (1usize..=10, 1usize..=3, 1usize..=3).prop_flat_map(|(n, m, p)| {
        let dense = (n as u32).max(3);
        system(n, m, p, dense * 2)
    })
    .prop_filter("every output reachable", |s| {
        (0..s.p()).all(|y| (0..s.m()).any(|u| !all_simple_paths(s, u, y).is_empty()))
    })
}

/// Controllable systems with full column rank `B`.
pub fn controllable_system() -> impl Strategy<Value = StateSpaceSystem> {
    (1usize..=5)
        .prop_flat_map(|n| (Just(n), 1..=n.min(3), 1..=n.min(3)))
        .prop_flat_map(|(n, m, p)| system(n, m, p, 3))
        .prop_filter("controllable, full column rank", |s| s.is_controllable() && s.b.rank() == s.m())
}

pub fn poles(max_len: usize) -> impl Strategy<Value = Vec<Rat>> {
    proptest::collection::vec(((-6i64..=6), (1i64..=4)).prop_map(|(n, d)| ratio(n, d)), 1..=max_len)
}

// ---------- oracles ----------

/// Laplace expansion along the first row.
pub fn cofactor_det(m: &Mat) -> Rat {
    let n = m.rows();
    if n == 0 {
        return Rat::one();
    }
    let mut total = Rat::zero();
    for j in 0..n {
        if m[(0, j)].is_zero() {
            continue;
        }
        let rows: Vec<usize> = (1..n).collect();
        let cols: Vec<usize> = (0..n).filter(|&c| c != j).collect();
        let minor = cofactor_det(&m.submatrix(&rows, &cols));
        let term = &m[(0, j)] * &minor;
        if j % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    total
}

pub fn adjugate(m: &Mat) -> Mat {
    let n = m.rows();
    let mut adj = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let rows: Vec<usize> = (0..n).filter(|&r| r != j).collect();
            let cols: Vec<usize> = (0..n).filter(|&c| c != i).collect();
            let minor = cofactor_det(&m.submatrix(&rows, &cols));
            adj[(i, j)] = if (i + j) % 2 == 0 { minor } else { -minor };
        }
    }
    adj
}

fn shifted(a: &Mat, x: &Rat) -> Mat {
    &Mat::identity(a.rows()).scale(x) - a
}

/// Every simple state path from input `u` to output `y`, read off the raw
/// nonzero pattern.
pub fn all_simple_paths(sys: &StateSpaceSystem, u: usize, y: usize) -> Vec<Vec<usize>> {
    fn walk(sys: &StateSpaceSystem, y: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let last = *path.last().expect("nonempty");
        if !sys.c[(y, last)].is_zero() {
            out.push(path.clone());
        }
        for next in 0..sys.n() {
            if !sys.a[(next, last)].is_zero() && !path.contains(&next) {
                path.push(next);
                walk(sys, y, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    for start in 0..sys.n() {
        if !sys.b[(start, u)].is_zero() {
            let mut path = vec![start];
            walk(sys, y, &mut path, &mut out);
        }
    }
    out
}

/// Frameworks as `(input, states)` per output, by trying every tuple.
pub fn brute_frameworks(sys: &StateSpaceSystem) -> BTreeSet<Vec<(usize, Vec<usize>)>> {
    let per_output: Vec<Vec<(usize, Vec<usize>)>> = (0..sys.p())
        .map(|y| {
            let mut cands = Vec::new();
            for u in 0..sys.m() {
                let paths = all_simple_paths(sys, u, y);
                let Some(min) = paths.iter().map(Vec::len).min() else { continue };
                cands.extend(paths.into_iter().filter(|p| p.len() == min).map(|p| (u, p)));
            }
            cands
        })
        .collect();
    let mut found = BTreeSet::new();
    if sys.p() == 0 {
        return found;
    }
    let mut idx = vec![0usize; sys.p()];
    if per_output.iter().any(Vec::is_empty) {
        return found;
    }
    loop {
        let tuple: Vec<(usize, Vec<usize>)> = idx.iter().enumerate().map(|(y, &k)| per_output[y][k].clone()).collect();
        let inputs: BTreeSet<usize> = tuple.iter().map(|t| t.0).collect();
        let states: Vec<usize> = tuple.iter().flat_map(|t| t.1.iter().copied()).collect();
        let distinct: BTreeSet<usize> = states.iter().copied().collect();
        if inputs.len() == tuple.len() && distinct.len() == states.len() {
            found.insert(tuple);
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return found;
            }
            idx[k] += 1;
            if idx[k] < per_output[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

// ---------- property checks ----------

pub fn check_regular_decoupling(sys: &StateSpaceSystem) -> Result<(), TestCaseError> {
    let d = relative_orders(sys).d;
    let law = regular_feedback(sys).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let tf = closed_loop_tf(sys, &law).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for (i, &di) in d.iter().enumerate() {
        for j in 0..sys.p() {
            let h = tf.get(i, j);
            if i == j {
                prop_assert_eq!(h.num(), &Poly::one());
                prop_assert_eq!(h.den(), &Poly::monomial(Rat::one(), di));
            } else {
                prop_assert!(h.is_zero(), "off-diagonal ({}, {}) = {}", i, j, h);
            }
        }
    }
    Ok(())
}

pub fn check_cayley_hamilton(a: &Mat) -> Result<(), TestCaseError> {
    let cp = char_poly(a).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(cp.eval_mat(a).is_zero());
    // n + 1 points pin a monic degree-n polynomial.
    for k in 0..=a.rows() as i64 {
        let x = ratio(k - 1, 1);
        prop_assert_eq!(cp.eval(&x), cofactor_det(&shifted(a, &x)));
    }
    Ok(())
}

pub fn check_resolvent_identity(a: &Mat) -> Result<(), TestCaseError> {
    let n = a.rows();
    let res = resolvent(a).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let num = res.numerator();
    let s_minus_a = PolyMat::from_coeff_mats(&[-a, Mat::identity(n)]);
    let lhs = s_minus_a.try_mul(&num).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let rhs = PolyMat::from_const(&Mat::identity(n)).scale_poly(&res.char_poly);
    prop_assert_eq!(lhs, rhs);
    for x in [ratio(0, 1), ratio(1, 2), ratio(-2, 1)] {
        let adj = adjugate(&shifted(a, &x));
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(num[(i, j)].eval(&x), adj[(i, j)].clone());
            }
        }
    }
    Ok(())
}

pub fn check_frameworks(sys: &StateSpaceSystem) -> Result<(), TestCaseError> {
    let got: BTreeSet<Vec<(usize, Vec<usize>)>> = enumerate_frameworks(&build_sfg(sys), None)
        .items
        .iter()
        .map(|fw| fw.paths.iter().map(|p| (p.input, p.states.clone())).collect())
        .collect();
    prop_assert_eq!(got, brute_frameworks(sys));
    Ok(())
}

pub fn check_canonical(sys: &StateSpaceSystem) -> Result<(), TestCaseError> {
    let n = sys.n();
    let l2 = luenberger2(sys).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(l2.sigma.iter().sum::<usize>(), n);
    // Second form: shift rows inside each block, B zero off the block ends.
    let ends: Vec<usize> = (0..sys.m()).filter(|&i| l2.sigma[i] > 0).map(|i| l2.block_end(i)).collect();
    for i in 0..sys.m() {
        for r in l2.block_start(i)..l2.block_end(i) {
            prop_assert_eq!(l2.a.row(r), Mat::unit_row(n, r + 1));
            prop_assert!(l2.b.row_is_zero(r));
        }
    }
    for i in 0..sys.m() {
        prop_assert!(l2.beta[(i, i)].is_one());
        for j in 0..i {
            prop_assert!(l2.beta[(i, j)].is_zero());
        }
    }
    prop_assert!(ends.len() == sys.m());

    let third = third_standard(&l2).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(matches_chain_pattern(&third.a, &third.b, &third.sigma));
    // The feedback and the coordinate change reproduce the form.
    let t_inv = l2.t.inverse().map_err(|e| TestCaseError::fail(e.to_string()))?;
    let closed = &sys.a + &(&sys.b * &third.k);
    prop_assert_eq!(&(&l2.t * &closed) * &t_inv, third.a.clone());
    prop_assert_eq!(&(&l2.t * &sys.b) * &third.g, third.b.clone());
    prop_assert_eq!(&sys.c * &t_inv, third.c.clone());
    prop_assert!(is_tree(&build_sfg_from(&third.a, &third.b, &third.c)));
    Ok(())
}

pub fn check_place_chain(target: &[Rat]) -> Result<(), TestCaseError> {
    let len = target.len();
    let (a, b) = decouple_core::canonical::chain_pattern(&[len]);
    let k = place_chain(len, target).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let closed = &a + &(&b * &k);
    let got = char_poly(&closed).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let mut want = Poly::one();
    for p in target {
        want = &want * &Poly::linear_root(p);
    }
    prop_assert_eq!(got, want);
    Ok(())
}

/// On a regularly decoupled loop, an independent partition places poles
/// without breaking diagonality; a shared state is reached by several inputs.
pub fn check_independence(sys: &StateSpaceSystem) -> Result<(), TestCaseError> {
    let fail = |e: decouple_core::Error| TestCaseError::fail(e.to_string());
    let d = relative_orders(sys).d;
    let law = regular_feedback(sys).map_err(fail)?;
    let tree = tree_transform(&sys.closed_loop(&law).map_err(fail)?, &d).map_err(fail)?;
    let partition = independence_test(&tree);
    let pole = ratio(-1, 1);
    match place_decoupled(sys, &law, &tree, &PolePlacementSpec::Uniform(pole.clone())).map_err(fail)? {
        PlacementOutcome::Placed { law: placed, denominators, partition: used } => {
            prop_assert!(partition.is_independent());
            let (m, _) = m_matrix(sys, &placed).map_err(fail)?;
            prop_assert!(is_diagonal(&m));
            let root = Poly::linear_root(&pole);
            for (i, den) in denominators.iter().enumerate() {
                // Feedback keeps the relative order; every pole sits at the target.
                let deg = den.degree().unwrap_or(0);
                prop_assert!(d[i] <= deg && deg <= used.subsystems[i].len(), "channel {}", i);
                prop_assert_eq!(den, &root.pow(deg), "channel {}", i);
            }
        }
        PlacementOutcome::Impossible { witness, .. } => {
            prop_assert!(!partition.is_independent());
            prop_assert!(witness.inputs.len() >= 2);
        }
    }
    Ok(())
}
