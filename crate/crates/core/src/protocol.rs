//! Readout comparison and lazy-scaling measurements.

use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::continuous::{BlendedModel, HierModel, DEFAULT_BLEND};
use crate::datasets::{self, Labeled};
use crate::dense::DEFAULT_LAMBDA;
use crate::error::{check_dim, Error, Result};
use crate::kernels::{Activation, KernelSpec, Metric};
use crate::par::Parallelism;
use crate::points::PointSet;
use crate::sparse::SparseModel;

/// Ordinary least squares on one-hot labels with a bias column.
#[derive(Debug, Clone)]
pub struct LinearReadout {
    weights: DMatrix<f64>,
}

impl LinearReadout {
    pub fn fit(x: &PointSet, labels: &[usize], classes: usize) -> Result<Self> {
        check_dim(x.nrows(), labels.len(), "linear readout labels")?;
        let design = with_bias(x);
        let y = PointSet::one_hot(labels, classes)?.to_matrix();
        let weights = design
            .svd(true, true)
            .solve(&y, 1e-12)
            .map_err(|e| Error::Internal(format!("least squares failed: {e}")))?;
        Ok(Self { weights })
    }

    pub fn predict(&self, x: &PointSet) -> Result<PointSet> {
        check_dim(self.weights.nrows() - 1, x.ncols(), "linear readout input")?;
        Ok(PointSet::from_matrix(&(with_bias(x) * &self.weights)))
    }
}

fn with_bias(x: &PointSet) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols() + 1, |i, j| if j < x.ncols() { x[(i, j)] } else { 1.0 })
}

pub fn accuracy(scores: &PointSet, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = scores.argmax_rows().iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Linear,
    SparseSk,
    Blended,
    Hierarchical,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Linear, Method::SparseSk, Method::Blended, Method::Hierarchical];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Linear => "linear",
            Method::SparseSk => "sparse-SK",
            Method::Blended => "blended",
            Method::Hierarchical => "hierarchical",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReadoutSettings {
    pub bandwidth: usize,
    pub blend: usize,
    pub coarse: usize,
    pub lambda: f64,
    pub metric: Metric,
    pub activation: Activation,
    pub par: Parallelism,
}

impl Default for ReadoutSettings {
    fn default() -> Self {
        Self {
            bandwidth: 100,
            blend: DEFAULT_BLEND,
            coarse: 100,
            lambda: DEFAULT_LAMBDA,
            metric: Metric::Euclidean,
            activation: Activation::Exponential,
            par: Parallelism::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutRow {
    pub size: usize,
    pub method: Method,
    pub accuracy: f64,
    /// Fit plus test prediction.
    pub seconds: f64,
}

/// Test accuracy of one readout trained on `train`.
pub fn evaluate_readout(method: Method, train: &Labeled, test: &Labeled, s: &ReadoutSettings) -> Result<f64> {
    let scores = match method {
        Method::Linear => LinearReadout::fit(&train.x, &train.labels, train.classes)?.predict(&test.x)?,
        _ => {
            let spec = KernelSpec::new(s.metric, s.activation).with_normalizer(crate::kernels::Normalizer::fit(&train.x)?);
            let y = train.one_hot();
            match method {
                Method::SparseSk => {
                    let m = SparseModel::build(spec, train.x.clone(), y, s.bandwidth, s.lambda)?;
                    m.predict_batch(&test.x, s.par)?.0
                }
                Method::Blended => {
                    let m = SparseModel::build(spec, train.x.clone(), y, s.bandwidth, s.lambda)?;
                    BlendedModel::new(m, s.blend, s.activation)?.predict_with(&test.x, s.par)?
                }
                _ => {
                    let m = HierModel::fit(spec, train.x.clone(), y, s.bandwidth, s.coarse.min(train.x.nrows()), s.lambda)?;
                    m.predict_with(&test.x, s.par)?
                }
            }
        }
    };
    Ok(accuracy(&scores, &test.labels))
}

/// Every method trained on the first `size` rows of `train`, for each size.
pub fn readout_comparison(
    train: &Labeled,
    test: &Labeled,
    sizes: &[usize],
    settings: &ReadoutSettings,
) -> Result<Vec<ReadoutRow>> {
    let mut rows = Vec::with_capacity(sizes.len() * Method::ALL.len());
    for &size in sizes {
        if size == 0 || size > train.x.nrows() {
            return Err(Error::InvalidInput(format!(
                "training size {size} outside 1..={}",
                train.x.nrows()
            )));
        }
        let (head, _) = train.split(size);
        for method in Method::ALL {
            let start = Instant::now();
            let acc = evaluate_readout(method, &head, test, settings)?;
            rows.push(ReadoutRow {
                size,
                method,
                accuracy: acc,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub size: usize,
    pub per_query_seconds: f64,
    pub cells: usize,
}

/// Per-query sparse prediction time on uniform data in `[0,1]^dim`.
/// The index is built before timing starts; the cache starts empty.
pub fn lazy_scaling(
    sizes: &[usize],
    dim: usize,
    bandwidth: usize,
    queries: usize,
    seed: u64,
    par: Parallelism,
) -> Result<Vec<ScalingRow>> {
    let z = datasets::uniform(queries, dim, seed.wrapping_add(1));
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let x = datasets::uniform(size, dim, seed);
        let y = PointSet::from_fn(size, 1, |i, _| x.row(i).iter().map(|v| (3.0 * v).sin()).sum());
        let spec = KernelSpec::standard(&x)?;
        let model = SparseModel::build(spec, x, y, bandwidth, DEFAULT_LAMBDA)?;
        model.clear_cache();
        let start = Instant::now();
        let (_, stats) = model.predict_batch(&z, par)?;
        let elapsed = start.elapsed().as_secs_f64();
        rows.push(ScalingRow {
            size,
            per_query_seconds: elapsed / queries.max(1) as f64,
            cells: stats.cells_touched,
        });
    }
    Ok(rows)
}
