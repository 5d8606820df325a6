//! Lazy sparse kernel ridge regression on the M-NN tessellation.
//!
//! Building a [`SparseModel`] only indexes the training features. Each query
//! looks up its `M` nearest training points `σ(z)`, solves the local
//! `M×M` kernel system on them and evaluates `k(z, x^σ)(k(x^σ, x^σ) + λI)⁻¹ y^σ`.
//! Local solves are memoized per cell in a bounded LRU cache shared by all
//! queries; the cache only affects speed.

use std::collections::HashSet;
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use lru::LruCache;
use nalgebra::{DMatrix, DVector};
use parking_lot::Mutex;

use crate::dense::power_from_quad;
use crate::error::{check_dim, Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::SpdFactor;
use crate::neighbors::{CellKey, NeighborIndex, Neighbors};
use crate::par::{self, Parallelism};
use crate::points::PointSet;

/// Each cached cell holds an `M×M` factor, about 80 KB at `M = 100`.
pub const DEFAULT_CACHE_CELLS: usize = 2_048;

/// Factorized kernel system of one cell, in [`CellKey`] order.
#[derive(Debug)]
pub struct LocalSolve {
    key: CellKey,
    support: PointSet,
    factor: SpdFactor,
    coeffs: DMatrix<f64>,
}

impl LocalSolve {
    pub fn key(&self) -> &CellKey {
        &self.key
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    fn kernel_row(&self, spec: &KernelSpec, zn: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.support.nrows(),
            self.support.rows().map(|x| spec.eval_normalized(zn, x)),
        )
    }

    fn predict_into(&self, spec: &KernelSpec, zn: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (n, x) in self.support.rows().enumerate() {
            let k = spec.eval_normalized(zn, x);
            for (j, o) in out.iter_mut().enumerate() {
                *o += k * self.coeffs[(n, j)];
            }
        }
    }

    fn power(&self, spec: &KernelSpec, zn: &[f64]) -> f64 {
        power_from_quad(self.factor.quad_form(&self.kernel_row(spec, zn)))
    }
}

/// Per-batch counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchStats {
    pub queries: usize,
    pub cache_hits: usize,
    pub cells_touched: usize,
}

#[derive(Debug)]
pub struct SparseModel {
    spec: KernelSpec,
    x: PointSet,
    y: PointSet,
    bandwidth: usize,
    lambda: f64,
    index: NeighborIndex,
    cache: Mutex<LruCache<CellKey, Arc<LocalSolve>>>,
}

impl SparseModel {
    /// Indexes the training features; no kernel system is solved here.
    pub fn build(spec: KernelSpec, x: PointSet, y: PointSet, bandwidth: usize, lambda: f64) -> Result<Self> {
        Self::build_with_cache(spec, x, y, bandwidth, lambda, DEFAULT_CACHE_CELLS)
    }

    pub fn build_with_cache(
        spec: KernelSpec,
        x: PointSet,
        y: PointSet,
        bandwidth: usize,
        lambda: f64,
        cache_cells: usize,
    ) -> Result<Self> {
        if bandwidth == 0 {
            return Err(Error::InvalidInput("bandwidth M must be >= 1".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        check_dim(x.nrows(), y.nrows(), "feature/target rows")?;
        spec.check_input_dim(x.ncols())?;
        if bandwidth > x.nrows() {
            log::warn!("bandwidth {bandwidth} exceeds {} training points; clamping", x.nrows());
        }
        let index = NeighborIndex::build(spec.normalize(&x)?, spec.metric)?;
        let cap = NonZeroUsize::new(cache_cells.max(1)).expect("non-zero");
        Ok(Self {
            spec,
            x,
            y,
            bandwidth,
            lambda,
            index,
            cache: Mutex::new(LruCache::new(cap)),
        })
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

    /// Requested bandwidth `M`.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// `min(M, N)`
    pub fn effective_bandwidth(&self) -> usize {
        self.bandwidth.min(self.x.nrows())
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
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

    pub fn index(&self) -> &NeighborIndex {
        &self.index
    }

    pub fn cached_cells(&self) -> usize {
        self.cache.lock().len()
    }

    pub fn clear_cache(&self) {
        self.cache.lock().clear();
    }

    pub(crate) fn normalize_queries(&self, z: &PointSet) -> Result<PointSet> {
        check_dim(self.input_dim(), z.ncols(), "query dimension")?;
        self.spec.normalize(z)
    }

    /// `σ(z)` for a raw query point.
    pub fn neighbors(&self, z: &[f64]) -> Result<Neighbors> {
        check_dim(self.input_dim(), z.len(), "query dimension")?;
        self.index.query(&self.spec.normalize_point(z), self.bandwidth)
    }

    /// Neighbors of a point given in normalized coordinates.
    pub(crate) fn neighbors_normalized(&self, zn: &[f64], m: usize) -> Result<Neighbors> {
        self.index.query(zn, m)
    }

    /// Cached-or-computed local system for a cell. The boolean reports a
    /// cache hit.
    pub fn local_solve(&self, key: &CellKey) -> Result<(Arc<LocalSolve>, bool)> {
        if let Some(hit) = self.cache.lock().get(key) {
            return Ok((Arc::clone(hit), true));
        }
        let support = self.index.points().select_rows(key.indices());
        let k = self.spec.gram_symmetric(&support);
        let factor = SpdFactor::new(&k, self.lambda)?;
        let coeffs = factor.solve(&self.y.select_rows(key.indices()).to_matrix());
        let solve = Arc::new(LocalSolve {
            key: key.clone(),
            support,
            factor,
            coeffs,
        });
        // A concurrent insert of the same key computes the same values.
        self.cache.lock().put(key.clone(), Arc::clone(&solve));
        Ok((solve, false))
    }

    pub(crate) fn predict_in_cell(&self, key: &CellKey, zn: &[f64], out: &mut [f64]) -> Result<bool> {
        let (solve, hit) = self.local_solve(key)?;
        solve.predict_into(&self.spec, zn, out);
        Ok(hit)
    }

    pub fn predict(&self, z: &PointSet) -> Result<PointSet> {
        Ok(self.predict_batch(z, Parallelism::Parallel)?.0)
    }

    /// Predictions for every row of `z`. Values do not depend on `par`.
    pub fn predict_batch(&self, z: &PointSet, par: Parallelism) -> Result<(PointSet, BatchStats)> {
        let zn = self.normalize_queries(z)?;
        let dy = self.output_dim();
        let hits = AtomicUsize::new(0);
        let rows = par::try_map_indexed(zn.nrows(), par, |p| -> Result<(Vec<f64>, CellKey)> {
            let q = zn.row(p);
            let nb = self.index.query(q, self.bandwidth)?;
            let key = CellKey::from_sigma(&nb.indices)?;
            let mut out = vec![0.0; dy];
            if self.predict_in_cell(&key, q, &mut out)? {
                hits.fetch_add(1, Ordering::Relaxed);
            }
            Ok((out, key))
        })?;
        let mut pred = PointSet::zeros(zn.nrows(), dy);
        let mut cells = HashSet::new();
        for (p, (row, key)) in rows.into_iter().enumerate() {
            pred.row_mut(p).copy_from_slice(&row);
            cells.insert(key);
        }
        let stats = BatchStats {
            queries: zn.nrows(),
            cache_hits: hits.into_inner(),
            cells_touched: cells.len(),
        };
        Ok((pred, stats))
    }

    /// Local power function `ε^σ(z)` on each query's own cell.
    pub fn local_error(&self, z: &PointSet) -> Result<Vec<f64>> {
        let zn = self.normalize_queries(z)?;
        par::try_map_indexed(zn.nrows(), Parallelism::Parallel, |p| {
            let q = zn.row(p);
            let nb = self.index.query(q, self.bandwidth)?;
            let (solve, _) = self.local_solve(&CellKey::from_sigma(&nb.indices)?)?;
            Ok(solve.power(&self.spec, q))
        })
    }
}
