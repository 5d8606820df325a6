//! Dense kernel ridge regression in the interpolation regime.
//!
//! The regressor `z ↦ k(z, X) (k(X, X) + λI)⁻¹ Y` together with its cardinal
//! basis, RKHS norm, power-function error indicator and vector-Jacobian
//! products with respect to `Y`, `X` and `Z`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::SpdFactor;
use crate::par::{self, Parallelism};
use crate::points::PointSet;

/// Tikhonov regularization used by default: small enough to stay in the
/// interpolation regime.
pub const DEFAULT_LAMBDA: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct DenseModel {
    spec: KernelSpec,
    x: PointSet,
    x_norm: PointSet,
    y: PointSet,
    lambda: f64,
    factor: SpdFactor,
    theta: DMatrix<f64>,
}

impl DenseModel {
    /// Factors `k(X, X) + λI` and solves for the coefficients `θ`.
    pub fn fit(spec: KernelSpec, x: PointSet, y: PointSet, lambda: f64) -> Result<Self> {
        let (x_norm, factor) = Self::factorize(&spec, &x, &y, lambda)?;
        let theta = factor.solve(&y.to_matrix());
        Ok(Self {
            spec,
            x,
            x_norm,
            y,
            lambda,
            factor,
            theta,
        })
    }

    /// Rebuilds a model from stored coefficients. The factorization is
    /// recomputed; `theta` is kept as given so predictions are reproduced
    /// exactly.
    pub fn from_parts(
        spec: KernelSpec,
        x: PointSet,
        y: PointSet,
        lambda: f64,
        theta: PointSet,
    ) -> Result<Self> {
        let (x_norm, factor) = Self::factorize(&spec, &x, &y, lambda)?;
        check_dim(x.nrows(), theta.nrows(), "coefficient rows")?;
        check_dim(y.ncols(), theta.ncols(), "coefficient columns")?;
        Ok(Self {
            spec,
            x,
            x_norm,
            y,
            lambda,
            factor,
            theta: theta.to_matrix(),
        })
    }

    fn factorize(
        spec: &KernelSpec,
        x: &PointSet,
        y: &PointSet,
        lambda: f64,
    ) -> Result<(PointSet, SpdFactor)> {
        if x.is_empty() {
            return Err(Error::InvalidInput("dense fit needs at least one point".into()));
        }
        check_dim(x.nrows(), y.nrows(), "feature/target rows")?;
        spec.check_input_dim(x.ncols())?;
        let x_norm = spec.normalize(x)?;
        let k = spec.gram_symmetric(&x_norm);
        let factor = SpdFactor::new(&k, lambda)?;
        Ok((x_norm, factor))
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn features(&self) -> &PointSet {
        &self.x
    }

    pub fn targets(&self) -> &PointSet {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Regularization actually applied after jitter escalation.
    pub fn effective_lambda(&self) -> f64 {
        self.factor.jitter()
    }

    pub fn coefficients(&self) -> PointSet {
        PointSet::from_matrix(&self.theta)
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.y.ncols()
    }

    fn normalize_queries(&self, z: &PointSet) -> Result<PointSet> {
        check_dim(self.input_dim(), z.ncols(), "query dimension")?;
        self.spec.normalize(z)
    }

    /// `k(z, X)` for one normalized query.
    fn kernel_row(&self, zn: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.x_norm.rows().map(|xn| self.spec.eval_normalized(zn, xn)),
        )
    }

    pub fn predict(&self, z: &PointSet) -> Result<PointSet> {
        self.predict_with(z, Parallelism::Parallel)
    }

    /// `k(Z, X) θ`, one query per row.
    pub fn predict_with(&self, z: &PointSet, par: Parallelism) -> Result<PointSet> {
        let zn = self.normalize_queries(z)?;
        let dy = self.output_dim();
        let mut out = PointSet::zeros(z.nrows(), dy);
        par::fill_rows(out.as_mut_slice(), dy, par, |p, row| {
            let zp = zn.row(p);
            for (n, xn) in self.x_norm.rows().enumerate() {
                let k = self.spec.eval_normalized(zp, xn);
                for (j, o) in row.iter_mut().enumerate() {
                    *o += k * self.theta[(n, j)];
                }
            }
        });
        Ok(out)
    }

    /// Cardinal basis `ψ(Z) = k(Z, X) (k(X, X) + λI)⁻¹`, shape `P×N`.
    pub fn cardinal_basis(&self, z: &PointSet) -> Result<DMatrix<f64>> {
        let zn = self.normalize_queries(z)?;
        let kxz = self
            .spec
            .gram_normalized(&self.x_norm, &zn, Parallelism::Parallel);
        Ok(self.factor.solve(&kxz).transpose())
    }

    /// `√(yᵀ K⁻¹ y)` for each target column.
    pub fn rkhs_norm(&self) -> Vec<f64> {
        let y = self.y.to_matrix();
        (0..self.output_dim())
            .map(|j| self.factor.quad_form(&y.column(j).into_owned()).sqrt())
            .collect()
    }

    /// Power function `ε(z) = √(1 − k(z, X) K⁻¹ k(X, z))`, clamped at zero.
    pub fn power_function(&self, z: &PointSet) -> Result<Vec<f64>> {
        let zn = self.normalize_queries(z)?;
        Ok(par::map_indexed(zn.nrows(), Parallelism::Parallel, |p| {
            power_from_quad(self.factor.quad_form(&self.kernel_row(zn.row(p))))
        }))
    }

    /// Vector-Jacobian products of `Z ↦ predict(Z)` against `upstream`, with
    /// respect to the targets, the features and the evaluation points.
    pub fn vjp(&self, z: &PointSet, upstream: &PointSet) -> Result<KrrGradients> {
        let zn = self.normalize_queries(z)?;
        check_dim(z.nrows(), upstream.nrows(), "upstream rows")?;
        check_dim(self.output_dim(), upstream.ncols(), "upstream columns")?;
        let (p, n, d) = (z.nrows(), self.len(), self.input_dim());
        let metric = self.spec.metric;
        let act = self.spec.activation;
        let g = upstream.to_matrix();

        // A = K⁻¹ k(X, Z) G is the gradient with respect to Y.
        let kxz = self.spec.gram_normalized(&self.x_norm, &zn, Parallelism::Parallel);
        let a = self.factor.solve(&(&kxz * &g));
        // Cotangents of k(Z, X) and of K.
        let w_zx = &g * self.theta.transpose();
        let w_k = -(&a * self.theta.transpose());

        let mut grad_z = PointSet::zeros(p, d);
        let mut grad_x = PointSet::zeros(n, d);
        for pi in 0..p {
            let u = zn.row(pi);
            for ni in 0..n {
                let w = w_zx[(pi, ni)];
                if w == 0.0 {
                    continue;
                }
                let v = self.x_norm.row(ni);
                let r = metric.eval(u, v);
                let s = w * act.derivative(r);
                metric.accumulate_grad(u, v, r, s, grad_z.row_mut(pi));
                metric.accumulate_grad(v, u, r, s, grad_x.row_mut(ni));
            }
        }
        for i in 0..n {
            for j in 0..i {
                let w = w_k[(i, j)] + w_k[(j, i)];
                if w == 0.0 {
                    continue;
                }
                let (vi, vj) = (self.x_norm.row(i), self.x_norm.row(j));
                let r = metric.eval(vi, vj);
                let s = w * act.derivative(r);
                metric.accumulate_grad(vi, vj, r, s, grad_x.row_mut(i));
                metric.accumulate_grad(vj, vi, r, s, grad_x.row_mut(j));
            }
        }
        let chain = self.spec.input_scale(d);
        for gset in [&mut grad_z, &mut grad_x] {
            for i in 0..gset.nrows() {
                for (g, c) in gset.row_mut(i).iter_mut().zip(&chain) {
                    *g *= c;
                }
            }
        }
        Ok(KrrGradients {
            grad_y: PointSet::from_matrix(&a),
            grad_x,
            grad_z,
        })
    }
}

#[inline]
pub(crate) fn power_from_quad(q: f64) -> f64 {
    (1.0 - q).max(0.0).sqrt()
}

/// Gradients of a scalar loss through the kernel ridge regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct KrrGradients {
    pub grad_y: PointSet,
    pub grad_x: PointSet,
    pub grad_z: PointSet,
}

/// Fits on `(X, Y)` and returns the VJPs of `Z ↦ k(Z, X)(k(X, X) + λI)⁻¹ Y`
/// against `upstream`.
pub fn krr_gradients(
    spec: &KernelSpec,
    x: &PointSet,
    y: &PointSet,
    z: &PointSet,
    lambda: f64,
    upstream: &PointSet,
) -> Result<KrrGradients> {
    DenseModel::fit(spec.clone(), x.clone(), y.clone(), lambda)?.vjp(z, upstream)
}
