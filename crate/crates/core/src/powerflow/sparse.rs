//! Thin wrapper over faer's LU for the square systems the solvers need.
//! Small systems are factored densely.

use faer::linalg::solvers::PartialPivLu;
use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

const DENSE_MAX: usize = 160;

enum Factor {
    Sparse(Lu<usize, f64>),
    Dense(PartialPivLu<f64>),
}

pub(crate) struct SparseLu {
    lu: Factor,
    n: usize,
    what: &'static str,
}

impl SparseLu {
    /// Factorizes the `n`×`n` matrix given as (row, col, value) triplets;
    /// duplicates are summed.
    pub fn factor(n: usize, entries: &[(usize, usize, f64)], what: &'static str) -> Result<Self> {
        if n <= DENSE_MAX {
            let mut m = Mat::<f64>::zeros(n, n);
            for &(r, c, v) in entries {
                m[(r, c)] += v;
            }
            return Ok(SparseLu {
                lu: Factor::Dense(m.partial_piv_lu()),
                n,
                what,
            });
        }
        let triplets: Vec<_> = entries.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|_| Error::Singular(what))?;
        let lu = mat.sp_lu().map_err(|_| Error::Singular(what))?;
        Ok(SparseLu {
            lu: Factor::Sparse(lu),
            n,
            what,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        debug_assert_eq!(rhs.len(), self.n);
        let b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = match &self.lu {
            Factor::Sparse(lu) => lu.solve(&b),
            Factor::Dense(lu) => lu.solve(&b),
        };
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Singular(self.what))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system_and_flags_singular() {
        let lu = SparseLu::factor(2, &[(0, 0, 2.0), (1, 1, 1.0), (0, 1, 1.0), (1, 1, 3.0)], "t").unwrap();
        let x = lu.solve(&[4.0, 8.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        let singular = SparseLu::factor(2, &[(0, 0, 1.0), (1, 0, 1.0)], "t");
        assert!(singular.is_err() || singular.unwrap().solve(&[1.0, 1.0]).is_err());
    }
}
