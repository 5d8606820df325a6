//! Globally smoother variants of the sparse predictor.
//!
//! [`BlendedModel`] mixes the local regressors of the `J` nearest training
//! points with normalized weights `φ_w(|z − a_j|) − φ_w(|z − a_{J+1}|)`,
//! where `a_{J+1}` is the nearest point outside the anchor set, so the blend
//! is continuous in `z`. With `J ≥ N` this is plain Nadaraya–Watson over
//! every training point. [`HierModel`] adds a
//! local residual correction to a coarse dense regressor fitted on a greedy
//! subset.

use crate::dense::DenseModel;
use crate::error::{Error, Result};
use crate::kernels::{Activation, KernelSpec};
use crate::neighbors::CellKey;
use crate::par::{self, Parallelism};
use crate::points::PointSet;
use crate::selection::{greedy_select, CandidateRule};
use crate::sparse::SparseModel;

pub const DEFAULT_BLEND: usize = 4;

impl Activation {
    /// `ln φ(r)`, finite even where `φ(r)` underflows.
    #[inline]
    pub fn ln_eval(self, r: f64) -> f64 {
        match self {
            Activation::Exponential => -r,
            Activation::Gaussian => -r * r,
        }
    }
}

/// Anchors and normalized blend weights of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Blend {
    pub anchors: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug)]
pub struct BlendedModel {
    sparse: SparseModel,
    blend: usize,
    weight: Activation,
}

impl BlendedModel {
    pub fn new(sparse: SparseModel, blend: usize, weight: Activation) -> Result<Self> {
        if blend == 0 {
            return Err(Error::InvalidInput("blend count J must be >= 1".into()));
        }
        if blend > sparse.len() {
            log::warn!("blend count {blend} exceeds {} training points; clamping", sparse.len());
        }
        Ok(Self {
            sparse,
            blend,
            weight,
        })
    }

    pub fn sparse(&self) -> &SparseModel {
        &self.sparse
    }

    pub fn blend_count(&self) -> usize {
        self.blend
    }

    pub fn weight_activation(&self) -> Activation {
        self.weight
    }

    fn blend_normalized(&self, zn: &[f64]) -> Result<Blend> {
        let mut nb = self.sparse.neighbors_normalized(zn, self.blend + 1)?;
        let logs: Vec<f64> = nb.dists.iter().map(|&d| self.weight.ln_eval(d)).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        if raw.len() > self.blend {
            // Subtracting the first excluded weight makes each anchor's weight
            // vanish exactly where it leaves the anchor set.
            let cut = raw.pop().unwrap_or(0.0);
            nb.indices.truncate(self.blend);
            let shifted: Vec<f64> = raw.iter().map(|w| (w - cut).max(0.0)).collect();
            if shifted.iter().sum::<f64>() > 0.0 {
                raw = shifted;
            }
        }
        let total: f64 = raw.iter().sum();
        Ok(Blend {
            anchors: nb.indices,
            weights: raw.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Anchors and weights for each query.
    pub fn blend_weights(&self, z: &PointSet) -> Result<Vec<Blend>> {
        let zn = self.sparse.normalize_queries(z)?;
        par::try_map_indexed(zn.nrows(), Parallelism::Parallel, |p| self.blend_normalized(zn.row(p)))
    }

    /// Cell of the local model attached to a training anchor: the anchor's
    /// own M-NN set.
    pub fn anchor_cell(&self, anchor: usize) -> Result<CellKey> {
        let xn = self.sparse.index().points().row(anchor);
        let nb = self.sparse.neighbors_normalized(xn, self.sparse.bandwidth())?;
        CellKey::from_sigma(&nb.indices)
    }

    pub fn predict(&self, z: &PointSet) -> Result<PointSet> {
        self.predict_with(z, Parallelism::Parallel)
    }

    pub fn predict_with(&self, z: &PointSet, par: Parallelism) -> Result<PointSet> {
        let zn = self.sparse.normalize_queries(z)?;
        let dy = self.sparse.output_dim();
        let rows = par::try_map_indexed(zn.nrows(), par, |p| -> Result<Vec<f64>> {
            let q = zn.row(p);
            let blend = self.blend_normalized(q)?;
            let mut acc = vec![0.0; dy];
            let mut local = vec![0.0; dy];
            for (&a, &w) in blend.anchors.iter().zip(&blend.weights) {
                self.sparse.predict_in_cell(&self.anchor_cell(a)?, q, &mut local)?;
                for (o, v) in acc.iter_mut().zip(&local) {
                    *o += w * v;
                }
            }
            Ok(acc)
        })?;
        let mut out = PointSet::zeros(zn.nrows(), dy);
        for (p, r) in rows.iter().enumerate() {
            out.row_mut(p).copy_from_slice(r);
        }
        Ok(out)
    }
}

/// Coarse dense regressor plus a sparse correction of its residuals.
#[derive(Debug)]
pub struct HierModel {
    coarse: DenseModel,
    coarse_indices: Vec<usize>,
    residual: SparseModel,
}

impl HierModel {
    /// Greedy-selects `coarse_size` centers (starting at index 0), fits the
    /// coarse model on them and indexes the residuals `Y − y⁰(X)` for lazy
    /// local correction.
    pub fn fit(
        spec: KernelSpec,
        x: PointSet,
        y: PointSet,
        bandwidth: usize,
        coarse_size: usize,
        lambda: f64,
    ) -> Result<Self> {
        let n = x.nrows();
        if coarse_size == 0 || coarse_size > n {
            return Err(Error::InvalidInput(format!(
                "coarse size must be in [1, {n}], got {coarse_size}"
            )));
        }
        let xn = spec.normalize(&x)?;
        let sel = greedy_select(&xn, coarse_size, spec.metric, 0, CandidateRule::Unselected)?;
        let coarse = DenseModel::fit(
            spec.clone(),
            x.select_rows(&sel.indices),
            y.select_rows(&sel.indices),
            lambda,
        )?;
        let resid = y.sub(&coarse.predict(&x)?)?;
        let residual = SparseModel::build(spec, x, resid, bandwidth, lambda)?;
        Ok(Self {
            coarse,
            coarse_indices: sel.indices,
            residual,
        })
    }

    pub fn coarse(&self) -> &DenseModel {
        &self.coarse
    }

    pub fn coarse_indices(&self) -> &[usize] {
        &self.coarse_indices
    }

    pub fn residual(&self) -> &SparseModel {
        &self.residual
    }

    pub fn predict(&self, z: &PointSet) -> Result<PointSet> {
        self.predict_with(z, Parallelism::Parallel)
    }

    pub fn predict_with(&self, z: &PointSet, par: Parallelism) -> Result<PointSet> {
        let coarse = self.coarse.predict_with(z, par)?;
        let (local, _) = self.residual.predict_batch(z, par)?;
        coarse.add(&local)
    }
}
