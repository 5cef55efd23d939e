//! Characteristic polynomial and resolvent by the Faddeev–LeVerrier recurrence.
//!
//! With `N_0 = I`, `c_k = -tr(A N_{k-1}) / k` and `N_k = A N_{k-1} + c_k I`:
//!
//! ```text
//! det(sI - A)  = s^n + c_1 s^(n-1) + ... + c_n
//! adj(sI - A)  = N_0 s^(n-1) + N_1 s^(n-2) + ... + N_(n-1)
//! ```

use super::mat::Mat;
use super::poly::Poly;
use super::polymat::PolyMat;
use super::rat::Rat;
use crate::error::{Error, Result};

/// `(sI - A)^-1 = numerator / char_poly`, entrywise.
#[derive(Clone, Debug)]
pub struct Resolvent {
    /// `N_k`, coefficient of `s^(n-1-k)`.
    pub coeffs: Vec<Mat>,
    pub char_poly: Poly,
}

impl Resolvent {
    pub fn numerator(&self) -> PolyMat {
        let mut ascending = self.coeffs.clone();
        ascending.reverse();
        PolyMat::from_coeff_mats(&ascending)
    }

    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    /// `C N(s) B` as a polynomial matrix without forming `N(s)`.
    pub fn sandwich(&self, c: &Mat, b: &Mat) -> PolyMat {
        let mut ascending: Vec<Mat> = self.coeffs.iter().map(|nk| &(c * nk) * b).collect();
        ascending.reverse();
        if ascending.is_empty() {
            return PolyMat::zeros(c.rows(), b.cols());
        }
        PolyMat::from_coeff_mats(&ascending)
    }
}

pub fn resolvent(a: &Mat) -> Result<Resolvent> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    let n = a.rows();
    let mut coeffs = Vec::with_capacity(n);
    let mut cp = vec![Rat::from_integer(1.into())];
    let mut nk = Mat::identity(n);
    for k in 1..=n {
        coeffs.push(nk.clone());
        let an = a * &nk;
        let ck = -an.trace() / Rat::from_integer((k as i64).into());
        cp.push(ck.clone());
        nk = &an + &Mat::identity(n).scale(&ck);
    }
    debug_assert!(nk.is_zero(), "Faddeev-LeVerrier residual must vanish");
    cp.reverse();
    Ok(Resolvent { coeffs, char_poly: Poly::new(cp) })
}

pub fn char_poly(a: &Mat) -> Result<Poly> {
    Ok(resolvent(a)?.char_poly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::rat::rat;

    #[test]
    fn zero_matrix() {
        let r = resolvent(&Mat::zeros(2, 2)).unwrap();
        assert_eq!(r.char_poly, Poly::monomial(rat(1), 2));
        let n = r.numerator();
        assert_eq!(n[(0, 0)], Poly::from_i64(&[0, 1]));
        assert!(n[(0, 1)].is_zero());
        assert_eq!(n[(1, 1)], Poly::from_i64(&[0, 1]));
    }

    #[test]
    fn scalar() {
        let r = resolvent(&Mat::from_i64(&[&[1]])).unwrap();
        assert_eq!(r.char_poly, Poly::from_i64(&[-1, 1]));
        assert_eq!(r.numerator()[(0, 0)], Poly::one());
    }

    #[test]
    fn companion() {
        // s^2 - 3s + 2
        let a = Mat::from_i64(&[&[0, 1], &[-2, 3]]);
        assert_eq!(char_poly(&a).unwrap(), Poly::from_i64(&[2, -3, 1]));
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(char_poly(&Mat::zeros(2, 3)), Err(Error::NotSquare { .. })));
    }
}
