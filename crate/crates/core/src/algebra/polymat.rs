use std::fmt;
use std::ops::{Index, IndexMut};

use super::mat::Mat;
use super::poly::Poly;
use crate::error::{Error, Result};

/// Dense matrix of polynomials in `s`.
#[derive(Clone, PartialEq, Eq)]
pub struct PolyMat {
    rows: usize,
    cols: usize,
    data: Vec<Poly>,
}

impl PolyMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        PolyMat { rows, cols, data: vec![Poly::zero(); rows * cols] }
    }

    pub fn from_const(m: &Mat) -> Self {
        PolyMat {
            rows: m.rows(),
            cols: m.cols(),
            data: m.entries().iter().map(|c| Poly::constant(c.clone())).collect(),
        }
    }

    /// `sum_k coeffs[k] * s^k`
    pub fn from_coeff_mats(coeffs: &[Mat]) -> Self {
        let (r, c) = coeffs.first().map_or((0, 0), |m| (m.rows(), m.cols()));
        let mut out = PolyMat::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                out[(i, j)] = Poly::new(coeffs.iter().map(|m| m[(i, j)].clone()).collect());
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Poly::is_zero)
    }

    pub fn row_is_zero(&self, i: usize) -> bool {
        (0..self.cols).all(|j| self[(i, j)].is_zero())
    }

    pub fn col_is_zero(&self, j: usize) -> bool {
        (0..self.rows).all(|i| self[(i, j)].is_zero())
    }

    /// Highest power of `s` appearing in column `j`, `None` if the column is zero.
    pub fn col_degree(&self, j: usize) -> Option<usize> {
        (0..self.rows).filter_map(|i| self[(i, j)].degree()).max()
    }

    pub fn max_degree(&self) -> Option<usize> {
        self.data.iter().filter_map(Poly::degree).max()
    }

    pub fn try_mul(&self, rhs: &PolyMat) -> Result<PolyMat> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                op: "PolyMat::mul",
                detail: format!("{}x{} * {}x{}", self.rows, self.cols, rhs.rows, rhs.cols),
            });
        }
        let mut out = PolyMat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let prod = a * &rhs[(k, j)];
                    let sum = &out[(i, j)] + &prod;
                    out[(i, j)] = sum;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &PolyMat) -> PolyMat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        PolyMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale_poly(&self, p: &Poly) -> PolyMat {
        PolyMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|e| e * p).collect() }
    }

    pub fn select_cols(&self, idx: &[usize]) -> PolyMat {
        let mut out = PolyMat::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            for (k, &j) in idx.iter().enumerate() {
                out[(i, k)] = self[(i, j)].clone();
            }
        }
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> PolyMat {
        let mut out = PolyMat::zeros(idx.len(), self.cols);
        for (k, &i) in idx.iter().enumerate() {
            for j in 0..self.cols {
                out[(k, j)] = self[(i, j)].clone();
            }
        }
        out
    }

    /// Entries as ascending coefficient strings.
    pub fn to_coeff_strings(&self) -> Vec<Vec<Vec<String>>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].coeff_strings()).collect())
            .collect()
    }

    pub fn to_display_rows(&self) -> Vec<Vec<String>> {
        (0..self.rows).map(|i| (0..self.cols).map(|j| self[(i, j)].to_string()).collect()).collect()
    }
}

/// `M * P(s)` for a constant left factor.
pub fn const_mul(m: &Mat, p: &PolyMat) -> PolyMat {
    PolyMat::from_const(m).try_mul(p).expect("const_mul dimensions")
}

/// `P(s) * M` for a constant right factor.
pub fn mul_const(p: &PolyMat, m: &Mat) -> PolyMat {
    p.try_mul(&PolyMat::from_const(m)).expect("mul_const dimensions")
}

impl Index<(usize, usize)> for PolyMat {
    type Output = Poly;

    fn index(&self, (i, j): (usize, usize)) -> &Poly {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for PolyMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Poly {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for PolyMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self.to_display_rows().into_iter().map(|r| r.join(", ")).collect();
        write!(f, "[{}]", rows.join("; "))
    }
}
