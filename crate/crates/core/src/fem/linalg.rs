//! Sparse LU on top of faer, with the symbolic analysis cached across
//! matrices that share a pattern.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinearSolveError {
    Structure(String),
    Singular(String),
}

pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

/// Caches the symbolic factorization of the first pattern it sees.
#[derive(Default)]
pub struct LuCache {
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
}

impl LuCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn factor(&mut self, n: usize, entries: &[(usize, usize, f64)]) -> Result<SparseLu, LinearSolveError> {
        let triplets: Vec<Triplet<usize, usize, f64>> = entries.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| LinearSolveError::Structure(format!("{e:?}")))?;
        let (cols, rows) = (a.symbolic().col_ptr(), a.symbolic().row_idx());
        let symbolic = match &self.symbolic {
            Some((c, r, s)) if c.as_slice() == cols && r.as_slice() == rows => s.clone(),
            _ => {
                let s = SymbolicLu::try_new(a.symbolic()).map_err(|e| LinearSolveError::Structure(format!("{e:?}")))?;
                self.symbolic = Some((cols.to_vec(), rows.to_vec(), s.clone()));
                s
            }
        };
        let lu = Lu::try_new_with_symbolic(symbolic, a.as_ref()).map_err(|e| LinearSolveError::Singular(format!("{e:?}")))?;
        Ok(SparseLu { n, lu })
    }
}

impl SparseLu {
    fn check(x: Col<f64>) -> Result<Vec<f64>, LinearSolveError> {
        let v: Vec<f64> = x.iter().copied().collect();
        if v.iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(LinearSolveError::Singular("non-finite solution".into()))
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, LinearSolveError> {
        let b = Col::<f64>::from_fn(self.n, |i| rhs[i]);
        Self::check(self.lu.solve(&b))
    }

    /// Solves `Aᵀ x = rhs`.
    pub fn solve_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>, LinearSolveError> {
        let b = Col::<f64>::from_fn(self.n, |i| rhs[i]);
        Self::check(self.lu.solve_transpose(&b))
    }
}
