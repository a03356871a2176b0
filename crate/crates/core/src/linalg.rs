//! Dense factorization helper shared by the solver and measure modules.

use nalgebra::{DMatrix, DVector};

/// LU-backed solver with one step of iterative refinement; the refinement
/// matters when the discount is tiny and the system is badly conditioned.
pub struct DenseSolver {
    a: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DenseSolver {
    pub fn new(a: DMatrix<f64>) -> Option<Self> {
        let lu = a.clone().lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(DenseSolver { a, lu })
    }

    pub fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let mut x = self.lu.solve(b)?;
        let r = b - &self.a * &x;
        if let Some(dx) = self.lu.solve(&r) {
            x += dx;
        }
        Some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refined_solve_inverts_small_system() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let b = DVector::from_column_slice(&[3.0, 0.0]);
        let s = DenseSolver::new(a).unwrap();
        let x = s.solve(&b).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14);
        assert!((x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(DenseSolver::new(a).is_none());
    }
}
