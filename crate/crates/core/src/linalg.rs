//! Jittered Cholesky factorization of kernel systems.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Largest Tikhonov jitter tried before giving up.
pub const MAX_JITTER: f64 = 1e-6;
/// Floor used when escalating from a zero regularization.
pub const MIN_JITTER: f64 = 1e-12;

/// Lower Cholesky factor `L` of `K + jitter·I`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: DMatrix<f64>,
    jitter: f64,
}

impl SpdFactor {
    /// Factors `k + lambda·I`. When the matrix is not numerically positive
    /// definite the diagonal shift escalates `max(λ, 1e-12)·10, ·100, …` up
    /// to [`MAX_JITTER`].
    pub fn new(k: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "regularization must be finite and >= 0, got {lambda}"
            )));
        }
        if !k.is_square() {
            return Err(Error::InvalidInput("kernel system must be square".into()));
        }
        let mut jitter = lambda;
        loop {
            let mut shifted = k.clone();
            if jitter > 0.0 {
                for i in 0..shifted.nrows() {
                    shifted[(i, i)] += jitter;
                }
            }
            if let Some(chol) = Cholesky::<f64, Dyn>::new(shifted) {
                let l = chol.unpack();
                if l.iter().all(|v| v.is_finite()) {
                    if jitter != lambda {
                        log::warn!("kernel system needed jitter {jitter:e} (requested {lambda:e})");
                    }
                    return Ok(Self { l, jitter });
                }
            }
            let next = jitter.max(MIN_JITTER) * 10.0;
            if next > MAX_JITTER * (1.0 + 1e-9) {
                return Err(Error::Factorization {
                    last_jitter: jitter,
                });
            }
            jitter = next;
        }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Diagonal shift actually applied.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `(K + jitter·I)⁻¹ B`
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        self.solve_in_place(&mut out);
        out
    }

    pub fn solve_in_place(&self, b: &mut DMatrix<f64>) {
        let ok = self.l.solve_lower_triangular_mut(b) && self.l.tr_solve_lower_triangular_mut(b);
        debug_assert!(ok, "Cholesky factor has a zero pivot");
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut out = b.clone();
        let ok = self.l.solve_lower_triangular_mut(&mut out)
            && self.l.tr_solve_lower_triangular_mut(&mut out);
        debug_assert!(ok);
        out
    }

    /// `bᵀ (K + jitter·I)⁻¹ b`, computed as `‖L⁻¹ b‖²`.
    pub fn quad_form(&self, b: &DVector<f64>) -> f64 {
        let mut w = b.clone();
        let ok = self.l.solve_lower_triangular_mut(&mut w);
        debug_assert!(ok);
        w.norm_squared()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let k = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let f = SpdFactor::new(&k, 0.0).unwrap();
        let x = f.solve(&DMatrix::from_row_slice(2, 1, &[1.0, 2.0]));
        let r = &k * &x - DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(r.norm() < 1e-14);
        assert_eq!(f.jitter(), 0.0);
    }

    #[test]
    fn singular_matrix_escalates_jitter() {
        let k = DMatrix::from_element(3, 3, 1.0);
        let f = SpdFactor::new(&k, 0.0).unwrap();
        assert!(f.jitter() > 0.0 && f.jitter() <= MAX_JITTER * 1.000001);
    }

    #[test]
    fn indefinite_matrix_fails_with_last_jitter() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match SpdFactor::new(&k, 1e-9) {
            Err(Error::Factorization { last_jitter }) => {
                assert!((1e-7..=MAX_JITTER * 1.000001).contains(&last_jitter))
            }
            other => panic!("expected factorization failure, got {other:?}"),
        }
    }

    #[test]
    fn quad_form_matches_solve() {
        let k = DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 0.5, 1.0, 2.0, 0.2, 0.5, 0.2, 1.5]);
        let f = SpdFactor::new(&k, 0.0).unwrap();
        let b = DVector::from_row_slice(&[0.3, -1.0, 2.0]);
        let direct = b.dot(&f.solve_vec(&b));
        assert!((direct - f.quad_form(&b)).abs() < 1e-13);
    }
}
