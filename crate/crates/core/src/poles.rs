//! Pole assignment that keeps a decoupled system decoupled.
//!
//! Work happens in tree coordinates: the output-derivative chains `Y_i`
//! followed by residual states. Each input `v_i` owns the chain `Y_i` and
//! every residual state that only it reaches; such a subsystem can be given
//! any poles by single-input feedback on its own states. A controllable
//! state reached by two inputs ties their subsystems together and rules out
//! decoupled placement.

use std::collections::BTreeSet;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::algebra::{resolvent, Mat, Poly, PolyMat, Rat};
use crate::canonical::{controllable_decomposition, luenberger2, third_standard, TreeTransform};
use crate::error::{Error, Result};
use crate::system::{closed_loop_tf, diagonality_check_relaxed, Diagonality, FeedbackLaw, StateSpaceSystem};

/// A tree coordinate reached by more than one input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SharedStateWitness {
    /// Display name: `x12` for a residual state, `y3'` style otherwise.
    pub state: String,
    /// Original state index when the coordinate is a residual state.
    pub original: Option<usize>,
    pub inputs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndependencePartition {
    /// Inputs reaching each tree coordinate.
    pub reached_by: Vec<BTreeSet<usize>>,
    /// Coordinates owned by each input: its chain and its exclusive residuals.
    pub subsystems: Vec<Vec<usize>>,
    /// Coordinates no input reaches.
    pub unreached: Vec<usize>,
    pub shared: Vec<SharedStateWitness>,
}

impl IndependencePartition {
    pub fn is_independent(&self) -> bool {
        self.shared.is_empty()
    }

    pub fn witness(&self) -> Option<&SharedStateWitness> {
        self.shared.first()
    }

    pub fn subsystem_sizes(&self) -> Vec<usize> {
        self.subsystems.iter().map(Vec::len).collect()
    }
}

fn coordinate_name(tree: &TreeTransform, k: usize) -> (String, Option<usize>) {
    if k >= tree.n_co {
        let s = tree.residual[k - tree.n_co];
        return (format!("x{}", s + 1), Some(s));
    }
    let (i, range) = tree.blocks.iter().enumerate().find(|(_, r)| r.contains(&k)).expect("chain coordinate");
    (format!("y{}{}", i + 1, "'".repeat(k - range.start)), None)
}

/// Inputs sharing each tree coordinate.
///
/// A chain coordinate of `Y_i` belongs to `v_i`. A residual state is shared by
/// every `v_i` whose chain observes (through a nonzero entry of the
/// output-derivative rows) a state feeding it, by any input entering it
/// directly, and by the sharers of residual states feeding it.
pub fn independence_test(tree: &TreeTransform) -> IndependencePartition {
    let n = tree.a.rows();
    let p = tree.b.cols();
    // Closed-loop dynamics in original coordinates.
    let a = &(&tree.t_inv * &tree.a) * &tree.t;
    let mut observed_by = vec![BTreeSet::new(); n];
    for (i, range) in tree.blocks.iter().enumerate() {
        for row in range.clone() {
            for (j, seen) in observed_by.iter_mut().enumerate() {
                if !tree.t[(row, j)].is_zero() {
                    seen.insert(i);
                }
            }
        }
    }
    let mut reached_by = vec![BTreeSet::new(); n];
    for (i, range) in tree.blocks.iter().enumerate() {
        for k in range.clone() {
            reached_by[k].insert(i);
        }
    }
    for (r, &t) in tree.residual.iter().enumerate() {
        let k = tree.n_co + r;
        for i in 0..p {
            if !tree.b[(k, i)].is_zero() {
                reached_by[k].insert(i);
            }
        }
        for j in 0..n {
            if !a[(t, j)].is_zero() {
                let obs = observed_by[j].clone();
                reached_by[k].extend(obs);
            }
        }
    }
    // Propagate along residual-to-residual edges until stable.
    let mut changed = true;
    while changed {
        changed = false;
        for (r, &t) in tree.residual.iter().enumerate() {
            for (r2, &t2) in tree.residual.iter().enumerate() {
                if r != r2 && !a[(t, t2)].is_zero() {
                    let from = reached_by[tree.n_co + r2].clone();
                    let before = reached_by[tree.n_co + r].len();
                    reached_by[tree.n_co + r].extend(from);
                    changed |= reached_by[tree.n_co + r].len() != before;
                }
            }
        }
    }
    let mut subsystems = vec![Vec::new(); p];
    let mut unreached = Vec::new();
    let mut shared = Vec::new();
    for (k, set) in reached_by.iter().enumerate() {
        match set.len() {
            0 => unreached.push(k),
            1 => subsystems[*set.iter().next().expect("one input")].push(k),
            _ => {
                let (state, original) = coordinate_name(tree, k);
                shared.push(SharedStateWitness { state, original, inputs: set.iter().copied().collect() });
            }
        }
    }
    IndependencePartition { reached_by, subsystems, unreached, shared }
}

/// Numerator `C adj(sI - A_cl) B_cl` and characteristic polynomial of the
/// closed loop, so that `Delta(s) y = m(s) v`.
pub fn m_matrix(sys: &StateSpaceSystem, law: &FeedbackLaw) -> Result<(PolyMat, Poly)> {
    let cl = sys.closed_loop(law)?;
    let res = resolvent(&cl.a)?;
    Ok((res.sandwich(&cl.c, &cl.b), res.char_poly.clone()))
}

/// Gain `K` with `det(sI - A - bK) = prod (s - p_j)` for an integrator chain
/// `x_k' = x_(k+1)`, `x_L' = u`.
pub fn place_chain(len: usize, poles: &[Rat]) -> Result<Mat> {
    if poles.len() != len {
        return Err(Error::PoleCountMismatch { expected: len, found: poles.len() });
    }
    let target = Poly::from_roots(poles);
    let mut k = Mat::zeros(1, len);
    for j in 0..len {
        k[(0, j)] = -target.coeff(j);
    }
    Ok(k)
}

/// Single-input Ackermann formula: `u = K x` places `poles`.
pub fn ackermann(a: &Mat, b: &Mat, poles: &[Rat]) -> Result<Mat> {
    let n = a.rows();
    if b.cols() != 1 || b.rows() != n {
        return Err(Error::DimensionMismatch { op: "ackermann", detail: format!("b is {}x{}", b.rows(), b.cols()) });
    }
    if poles.len() != n {
        return Err(Error::PoleCountMismatch { expected: n, found: poles.len() });
    }
    if n == 0 {
        return Ok(Mat::zeros(1, 0));
    }
    let mut cols = vec![b.clone()];
    for k in 1..n {
        cols.push(a * &cols[k - 1]);
    }
    let mut w = cols[0].clone();
    for c in &cols[1..] {
        w = w.hstack(c)?;
    }
    let w_inv = w.inverse().map_err(|_| Error::Uncontrollable)?;
    let phi = Poly::from_roots(poles).eval_mat(a);
    Ok(-&(&(&Mat::unit_row(n, n - 1) * &w_inv) * &phi))
}

/// Multi-input placement through the third standard form: each chain gets
/// its share of `poles` in order. Dependent input columns receive no gain.
pub fn place_controllable(a: &Mat, b: &Mat, poles: &[Rat]) -> Result<Mat> {
    let n = a.rows();
    if poles.len() != n {
        return Err(Error::PoleCountMismatch { expected: n, found: poles.len() });
    }
    let cols = b.independent_columns();
    let b_ind = b.select_cols(&cols);
    let sys = StateSpaceSystem { a: a.clone(), b: b_ind, c: Mat::zeros(0, n) };
    let form = luenberger2(&sys)?;
    let third = third_standard(&form)?;
    let mut k_chain = Mat::zeros(cols.len(), n);
    let mut start = 0;
    for (i, &len) in third.sigma.iter().enumerate() {
        let ki = place_chain(len, &poles[start..start + len])?;
        for j in 0..len {
            k_chain[(i, start + j)] = ki[(0, j)].clone();
        }
        start += len;
    }
    let k_ind = &third.k + &(&(&third.g * &k_chain) * &form.t);
    let mut k = Mat::zeros(b.cols(), n);
    for (row, &c) in cols.iter().enumerate() {
        for j in 0..n {
            k[(c, j)] = k_ind[(row, j)].clone();
        }
    }
    Ok(k)
}

/// Gain for the controllable part of `(a, b)`; uncontrollable modes stay put.
/// `poles` must match the controllable dimension.
pub fn place_assignable(a: &Mat, b: &Mat, poles: &[Rat]) -> Result<(Mat, usize)> {
    let n = a.rows();
    let dec = controllable_decomposition(a, b);
    if poles.len() != dec.r {
        return Err(Error::PoleCountMismatch { expected: dec.r, found: poles.len() });
    }
    if dec.r == 0 {
        return Ok((Mat::zeros(b.cols(), n), 0));
    }
    let k_c = place_controllable(&dec.a11(), &dec.b1(), poles)?;
    let rows: Vec<usize> = (0..dec.r).collect();
    let all: Vec<usize> = (0..n).collect();
    let proj = dec.v_inv.submatrix(&rows, &all);
    Ok((&k_c * &proj, dec.r))
}

/// Desired poles per subsystem, in input order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolePlacementSpec {
    Uniform(Rat),
    PerSubsystem(Vec<Vec<Rat>>),
}

impl PolePlacementSpec {
    pub fn resolve(&self, sizes: &[usize]) -> Result<Vec<Vec<Rat>>> {
        match self {
            PolePlacementSpec::Uniform(p) => Ok(sizes.iter().map(|&k| vec![p.clone(); k]).collect()),
            PolePlacementSpec::PerSubsystem(v) => {
                if v.len() != sizes.len() {
                    return Err(Error::PoleCountMismatch { expected: sizes.len(), found: v.len() });
                }
                for (poles, &k) in v.iter().zip(sizes) {
                    if poles.len() != k {
                        return Err(Error::PoleCountMismatch { expected: k, found: poles.len() });
                    }
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlacementOutcome {
    Placed {
        law: FeedbackLaw,
        /// Diagonal closed-loop denominators.
        denominators: Vec<Poly>,
        partition: IndependencePartition,
    },
    Impossible {
        witness: SharedStateWitness,
        partition: IndependencePartition,
    },
}

/// Tree-coordinate gain `v = K x_hat` placing each listed subsystem.
pub fn subsystem_gain(tree: &TreeTransform, subsystems: &[Vec<usize>], poles: &[Vec<Rat>]) -> Result<Mat> {
    let (n, p) = (tree.a.rows(), tree.b.cols());
    let mut k = Mat::zeros(p, n);
    for (i, states) in subsystems.iter().enumerate() {
        if states.is_empty() {
            continue;
        }
        let a_sub = tree.a.submatrix(states, states);
        let b_sub = tree.b.submatrix(states, &[i]);
        let ki = ackermann(&a_sub, &b_sub, &poles[i])?;
        for (j, &s) in states.iter().enumerate() {
            k[(i, s)] = ki[(0, j)].clone();
        }
    }
    Ok(k)
}

/// Places every subsystem of the decoupled loop `(sys, law)` with orders
/// `d`, or names the state that makes this impossible.
pub fn place_decoupled(
    sys: &StateSpaceSystem,
    law: &FeedbackLaw,
    tree: &TreeTransform,
    spec: &PolePlacementSpec,
) -> Result<PlacementOutcome> {
    let partition = independence_test(tree);
    if let Some(w) = partition.witness() {
        return Ok(PlacementOutcome::Impossible { witness: w.clone(), partition });
    }
    let poles = spec.resolve(&partition.subsystem_sizes())?;
    let k_hat = subsystem_gain(tree, &partition.subsystems, &poles)?;
    let law = lift_gain(law, &k_hat, tree);
    match diagonality_check_relaxed(&closed_loop_tf(sys, &law)?)? {
        Diagonality::Diagonal { denominators } => Ok(PlacementOutcome::Placed { law, denominators, partition }),
        Diagonality::IntegratorDiagonal { orders } => {
            let denominators = orders.iter().map(|&k| Poly::monomial(Rat::one(), k)).collect();
            Ok(PlacementOutcome::Placed { law, denominators, partition })
        }
        Diagonality::Witness { row, col } => Err(Error::Precondition(format!(
            "placement broke decoupling at ({}, {})",
            row + 1,
            col + 1
        ))),
    }
}

/// `(F + G K T, G)`: tree-coordinate feedback expressed on the plant input.
pub fn lift_gain(law: &FeedbackLaw, k_hat: &Mat, tree: &TreeTransform) -> FeedbackLaw {
    FeedbackLaw { f: &law.f + &(&(&law.g * k_hat) * &tree.t), g: law.g.clone() }
}

/// True when every off-diagonal entry of `m` is zero.
pub fn is_diagonal(m: &PolyMat) -> bool {
    (0..m.rows()).all(|i| (0..m.cols()).all(|j| i == j || m[(i, j)].is_zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{char_poly, rat};
    use crate::canonical::tree_transform;
    use crate::plants::{
        identity_system, nine_state, nine_state_reference_law, twenty_two_state, twenty_two_state_reference_law,
        NineStateCoupling,
    };

    #[test]
    fn chain_gains() {
        assert_eq!(place_chain(1, &[rat(-5)]).unwrap(), Mat::from_i64(&[&[-5]]));
        assert_eq!(place_chain(3, &[rat(0), rat(0), rat(0)]).unwrap(), Mat::zeros(1, 3));
        let k = place_chain(2, &[rat(-1), rat(-2)]).unwrap();
        let a = Mat::from_i64(&[&[0, 1], &[0, 0]]);
        let b = Mat::from_i64(&[&[0], &[1]]);
        let cl = &a + &(&b * &k);
        assert_eq!(char_poly(&cl).unwrap(), Poly::from_i64(&[2, 3, 1]));
        assert!(place_chain(2, &[rat(1)]).is_err());
    }

    #[test]
    fn ackermann_matches_chain() {
        let a = Mat::from_i64(&[&[0, 1, 0], &[0, 0, 1], &[0, 0, 0]]);
        let b = Mat::from_i64(&[&[0], &[0], &[1]]);
        let poles = [rat(-1), rat(-2), rat(-3)];
        assert_eq!(ackermann(&a, &b, &poles).unwrap(), place_chain(3, &poles).unwrap());
    }

    #[test]
    fn multi_input_placement() {
        let a = Mat::from_i64(&[&[1, 1, 0], &[0, 2, 1], &[1, 0, 0]]);
        let b = Mat::from_i64(&[&[0, 0], &[1, 0], &[0, 1]]);
        let poles = [rat(-1), rat(-2), rat(-3)];
        let k = place_controllable(&a, &b, &poles).unwrap();
        assert_eq!(char_poly(&(&a + &(&b * &k))).unwrap(), Poly::from_roots(&poles));
    }

    #[test]
    fn single_integrator_m_matrix() {
        let sys = identity_system(1);
        let law = FeedbackLaw { f: Mat::from_i64(&[&[-1]]), g: Mat::identity(1) };
        let (m, delta) = m_matrix(&sys, &law).unwrap();
        assert_eq!(delta, Poly::from_i64(&[1, 1]));
        assert_eq!(m[(0, 0)], Poly::one());
    }

    #[test]
    fn identity_is_independent() {
        let sys = identity_system(3);
        let tree = tree_transform(&sys, &[1, 1, 1]).unwrap();
        let part = independence_test(&tree);
        assert!(part.is_independent());
        assert_eq!(part.subsystem_sizes(), vec![1, 1, 1]);
    }

    #[test]
    fn nine_state_places_all_poles() {
        let sys = nine_state(NineStateCoupling::FromX3);
        let law = nine_state_reference_law();
        let tree = tree_transform(&sys.closed_loop(&law).unwrap(), &[4, 1, 4]).unwrap();
        assert_eq!(tree.n_co, 9);
        let out = place_decoupled(&sys, &law, &tree, &PolePlacementSpec::Uniform(rat(-1))).unwrap();
        let PlacementOutcome::Placed { denominators, .. } = out else { panic!("expected placement") };
        let s1 = Poly::from_i64(&[1, 1]);
        assert_eq!(denominators, vec![s1.pow(4), s1.clone(), s1.pow(4)]);
    }

    #[test]
    fn zero_poles_keep_law() {
        let sys = nine_state(NineStateCoupling::FromX3);
        let law = nine_state_reference_law();
        let tree = tree_transform(&sys.closed_loop(&law).unwrap(), &[4, 1, 4]).unwrap();
        let out = place_decoupled(&sys, &law, &tree, &PolePlacementSpec::Uniform(rat(0))).unwrap();
        let PlacementOutcome::Placed { law: placed, .. } = out else { panic!("expected placement") };
        assert_eq!(placed, law);
    }

    #[test]
    fn twenty_two_state_shares_x12() {
        let sys = twenty_two_state();
        let law = twenty_two_state_reference_law();
        let tree = tree_transform(&sys.closed_loop(&law).unwrap(), &[2, 2, 2, 5, 5, 5]).unwrap();
        let part = independence_test(&tree);
        assert!(!part.is_independent());
        let out = place_decoupled(&sys, &law, &tree, &PolePlacementSpec::Uniform(rat(-1))).unwrap();
        let PlacementOutcome::Impossible { witness, .. } = out else { panic!("expected impossibility") };
        assert_eq!(witness.state, "x12");
        assert_eq!(witness.inputs, vec![2, 3, 5]);
    }
}
