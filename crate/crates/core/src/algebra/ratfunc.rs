use std::fmt;

use num_traits::{One, Zero};

use super::poly::Poly;
use super::rat::Rat;
use crate::error::{Error, Result};

/// Reduced rational function `num / den` with a monic denominator.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RatFunc {
    num: Poly,
    den: Poly,
}

impl RatFunc {
    pub fn new(num: Poly, den: Poly) -> Result<Self> {
        ratfunc_normalize(num, den)
    }

    pub fn zero() -> Self {
        RatFunc { num: Poly::zero(), den: Poly::one() }
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    pub fn den(&self) -> &Poly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    /// `Some(k)` when the function is exactly `s^-k`, `k >= 1`.
    pub fn integrator_order(&self) -> Option<usize> {
        let k = self.den.as_pure_power()?;
        (k >= 1 && self.num.degree() == Some(0) && self.num.leading().is_one()).then_some(k)
    }
}

/// Cancels common factors and makes the denominator monic.
pub fn ratfunc_normalize(num: Poly, den: Poly) -> Result<RatFunc> {
    if den.is_zero() {
        return Err(Error::ZeroDenominator);
    }
    if num.is_zero() {
        return Ok(RatFunc::zero());
    }
    let g = num.gcd(&den);
    let (mut n, _) = num.div_rem(&g);
    let (mut d, _) = den.div_rem(&g);
    let lead = d.leading().recip();
    n = n.scale(&lead);
    d = d.scale(&lead);
    Ok(RatFunc { num: n, den: d })
}

impl fmt::Debug for RatFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for RatFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.degree() == Some(0) {
            return write!(f, "{}", self.num);
        }
        let wrap = |p: &Poly| {
            let terms = p.coeffs().iter().filter(|c| !c.is_zero()).count();
            if terms > 1 || p.leading() < Rat::zero() {
                format!("({p})")
            } else {
                p.to_string()
            }
        };
        write!(f, "{}/{}", wrap(&self.num), wrap(&self.den))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::rat::{rat, ratio};

    #[test]
    fn common_factor_cancels() {
        let f = ratfunc_normalize(Poly::monomial(rat(1), 2), Poly::monomial(rat(1), 3)).unwrap();
        assert_eq!(f.num(), &Poly::one());
        assert_eq!(f.den(), &Poly::from_i64(&[0, 1]));
        assert_eq!(f.integrator_order(), Some(1));
    }

    #[test]
    fn display_brackets_only_sums() {
        let f = ratfunc_normalize(Poly::one(), Poly::monomial(rat(1), 4)).unwrap();
        assert_eq!(f.to_string(), "1/s^4");
        let g = ratfunc_normalize(Poly::from_i64(&[1, 1]), Poly::from_i64(&[0, 0, 1])).unwrap();
        assert_eq!(g.to_string(), "(s + 1)/s^2");
    }

    #[test]
    fn zero_numerator() {
        let f = ratfunc_normalize(Poly::zero(), Poly::from_i64(&[1, 1])).unwrap();
        assert!(f.is_zero());
        assert_eq!(f.den(), &Poly::one());
    }

    #[test]
    fn constant_denominator_scaled() {
        let f = ratfunc_normalize(Poly::from_i64(&[2, 2]), Poly::from_i64(&[4])).unwrap();
        assert_eq!(f.num(), &Poly::new(vec![ratio(1, 2), ratio(1, 2)]));
        assert_eq!(f.den(), &Poly::one());
        // cross-multiplication check: num * 4 == (2s + 2) * den
        assert_eq!(&f.num().scale(&rat(4)), &Poly::from_i64(&[2, 2]));
    }

    #[test]
    fn zero_denominator_rejected() {
        assert_eq!(ratfunc_normalize(Poly::one(), Poly::zero()), Err(Error::ZeroDenominator));
    }
}
