//! Radial kernels `k(u, v) = φ(d(S(u), S(v)))`.
//!
//! A [`KernelSpec`] combines a [`Metric`] `d`, a positive-definite
//! [`Activation`] `φ` with `φ(0) = 1`, and an optional fitted [`Normalizer`]
//! `S`. Every model in the crate evaluates its kernel through this type.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::par::{self, Parallelism};
use crate::points::PointSet;

/// Pairwise distances closer than this are treated as duplicate points.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// ℓ2 distance.
    #[default]
    Euclidean,
    /// ℓ1 distance.
    Manhattan,
}

impl Metric {
    #[inline]
    pub fn eval(self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), v.len());
        match self {
            Metric::Euclidean => u
                .iter()
                .zip(v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            Metric::Manhattan => u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum(),
        }
    }

    /// Gradient of `d(u, v)` with respect to `u`, accumulated as
    /// `out += scale * ∂d/∂u`. The gradient with respect to `v` is the negation.
    ///
    /// At `u = v` the ℓ2 gradient is taken to be zero; the ℓ1 gradient uses
    /// `sign(0) = 0` per coordinate.
    #[inline]
    pub fn accumulate_grad(self, u: &[f64], v: &[f64], r: f64, scale: f64, out: &mut [f64]) {
        match self {
            Metric::Euclidean => {
                if r > 0.0 {
                    let s = scale / r;
                    for ((o, a), b) in out.iter_mut().zip(u).zip(v) {
                        *o += s * (a - b);
                    }
                }
            }
            Metric::Manhattan => {
                for ((o, a), b) in out.iter_mut().zip(u).zip(v) {
                    let d = a - b;
                    if d > 0.0 {
                        *o += scale;
                    } else if d < 0.0 {
                        *o -= scale;
                    }
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "l2",
            Metric::Manhattan => "l1",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "l2" | "euclidean" => Ok(Metric::Euclidean),
            "l1" | "manhattan" => Ok(Metric::Manhattan),
            other => Err(Error::InvalidInput(format!("unknown metric {other:?}"))),
        }
    }
}

/// Checked distance between two points.
pub fn distance(u: &[f64], v: &[f64], metric: Metric) -> Result<f64> {
    check_dim(u.len(), v.len(), "distance operands")?;
    if u.is_empty() {
        return Err(Error::InvalidInput("distance needs D >= 1".into()));
    }
    Ok(metric.eval(u, v))
}

/// Radial profile `φ`, normalized so that `φ(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    /// `exp(-r)`
    #[default]
    Exponential,
    /// `exp(-r²)`
    Gaussian,
}

impl Activation {
    #[inline]
    pub fn eval(self, r: f64) -> f64 {
        match self {
            Activation::Exponential => (-r).exp(),
            Activation::Gaussian => (-r * r).exp(),
        }
    }

    /// `φ'(r)`
    #[inline]
    pub fn derivative(self, r: f64) -> f64 {
        match self {
            Activation::Exponential => -(-r).exp(),
            Activation::Gaussian => -2.0 * r * (-r * r).exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Exponential => "exp",
            Activation::Gaussian => "gauss",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "exp" | "exponential" => Ok(Activation::Exponential),
            "gauss" | "gaussian" => Ok(Activation::Gaussian),
            other => Err(Error::InvalidInput(format!("unknown activation {other:?}"))),
        }
    }
}

/// Per-dimension standardization `S(u) = (u - shift) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl Normalizer {
    /// Fits column means and population standard deviations. Constant
    /// columns keep scale 1.
    pub fn fit(x: &PointSet) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "normalizer needs at least 2 rows, got {n}"
            )));
        }
        let d = x.ncols();
        let mut shift = vec![0.0; d];
        for row in x.rows() {
            for (s, v) in shift.iter_mut().zip(row) {
                *s += v;
            }
        }
        shift.iter_mut().for_each(|s| *s /= n as f64);
        let mut var = vec![0.0; d];
        for row in x.rows() {
            for ((acc, v), m) in var.iter_mut().zip(row).zip(&shift) {
                *acc += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .zip(&shift)
            .map(|(v, m)| {
                let sd = (v / n as f64).sqrt();
                if sd <= 1e-12 * m.abs().max(1.0) {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { shift, scale })
    }

    pub fn from_parts(shift: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        check_dim(shift.len(), scale.len(), "normalizer shift/scale")?;
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidInput(
                "normalizer scales must be finite and strictly positive".into(),
            ));
        }
        Ok(Self { shift, scale })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    #[inline]
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(u).zip(&self.shift).zip(&self.scale) {
            *o = (v - m) / s;
        }
    }

    pub fn apply(&self, x: &PointSet) -> Result<PointSet> {
        check_dim(self.dim(), x.ncols(), "normalizer input")?;
        let mut out = PointSet::zeros(x.nrows(), x.ncols());
        for i in 0..x.nrows() {
            self.apply_into(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }
}

/// `k(u, v) = φ(d(S(u), S(v)))`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KernelSpec {
    pub metric: Metric,
    pub activation: Activation,
    pub normalizer: Option<Normalizer>,
}

impl KernelSpec {
    pub fn new(metric: Metric, activation: Activation) -> Self {
        Self {
            metric,
            activation,
            normalizer: None,
        }
    }

    /// The kernel used throughout the experiments: exponential activation on
    /// ℓ2 distances, standardized on `x`.
    pub fn standard(x: &PointSet) -> Result<Self> {
        Ok(Self::new(Metric::Euclidean, Activation::Exponential).with_normalizer(Normalizer::fit(x)?))
    }

    pub fn with_normalizer(mut self, normalizer: Normalizer) -> Self {
        self.normalizer = Some(normalizer);
        self
    }

    /// Kernel between two points already in normalized coordinates.
    #[inline]
    pub fn eval_normalized(&self, u: &[f64], v: &[f64]) -> f64 {
        self.activation.eval(self.metric.eval(u, v))
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        check_dim(u.len(), v.len(), "kernel operands")?;
        match &self.normalizer {
            None => Ok(self.eval_normalized(u, v)),
            Some(s) => {
                check_dim(s.dim(), u.len(), "kernel operands vs normalizer")?;
                let mut a = vec![0.0; u.len()];
                let mut b = vec![0.0; v.len()];
                s.apply_into(u, &mut a);
                s.apply_into(v, &mut b);
                Ok(self.eval_normalized(&a, &b))
            }
        }
    }

    /// Maps raw points into the coordinates the metric is evaluated in.
    pub fn normalize(&self, x: &PointSet) -> Result<PointSet> {
        match &self.normalizer {
            None => Ok(x.clone()),
            Some(s) => s.apply(x),
        }
    }

    pub fn normalize_point(&self, u: &[f64]) -> Vec<f64> {
        match &self.normalizer {
            None => u.to_vec(),
            Some(s) => {
                let mut out = vec![0.0; u.len()];
                s.apply_into(u, &mut out);
                out
            }
        }
    }

    /// `∂S(u)_j / ∂u_j`, one entry per dimension.
    pub fn input_scale(&self, dim: usize) -> Vec<f64> {
        match &self.normalizer {
            None => vec![1.0; dim],
            Some(s) => s.scale().iter().map(|v| 1.0 / v).collect(),
        }
    }

    pub fn check_input_dim(&self, dim: usize) -> Result<()> {
        if let Some(s) = &self.normalizer {
            check_dim(s.dim(), dim, "input dimension vs normalizer")?;
        }
        Ok(())
    }

    /// Gram matrix `k(Z, X)` of raw points.
    pub fn gram(&self, z: &PointSet, x: &PointSet) -> Result<DMatrix<f64>> {
        check_dim(x.ncols(), z.ncols(), "gram operands")?;
        self.check_input_dim(x.ncols())?;
        let zn = self.normalize(z)?;
        let xn = self.normalize(x)?;
        Ok(self.gram_normalized(&zn, &xn, Parallelism::Parallel))
    }

    /// Gram matrix of points already in normalized coordinates; rows are
    /// filled independently.
    pub fn gram_normalized(&self, z: &PointSet, x: &PointSet, par: Parallelism) -> DMatrix<f64> {
        let (p, n) = (z.nrows(), x.nrows());
        let mut rows = vec![0.0; p * n];
        par::fill_rows(&mut rows, n, par, |i, out| {
            let zi = z.row(i);
            for (j, o) in out.iter_mut().enumerate() {
                *o = self.eval_normalized(zi, x.row(j));
            }
        });
        DMatrix::from_row_slice(p, n, &rows)
    }

    /// Symmetric training Gram matrix in normalized coordinates, with unit
    /// diagonal. Logs a warning when two rows coincide.
    pub fn gram_symmetric(&self, x: &PointSet) -> DMatrix<f64> {
        let n = x.nrows();
        let mut k = DMatrix::<f64>::identity(n, n);
        let mut duplicates = 0usize;
        for i in 0..n {
            for j in 0..i {
                let r = self.metric.eval(x.row(i), x.row(j));
                if r < DUPLICATE_TOLERANCE {
                    duplicates += 1;
                }
                let v = self.activation.eval(r);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        if duplicates > 0 {
            log::warn!("{duplicates} duplicate point pair(s) in kernel system of size {n}");
        }
        k
    }
}

/// Counts pairs of rows closer than [`DUPLICATE_TOLERANCE`].
pub fn count_duplicates(x: &PointSet, metric: Metric) -> usize {
    let mut count = 0;
    for i in 0..x.nrows() {
        for j in 0..i {
            if metric.eval(x.row(i), x.row(j)) < DUPLICATE_TOLERANCE {
                count += 1;
            }
        }
    }
    count
}
