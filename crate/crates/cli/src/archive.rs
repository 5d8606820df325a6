//! Binary model archives.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic     8 bytes  "LAZYKRR\0"
//! version   u32
//! kind      u8       0 dense, 1 sparse, 2 blended, 3 hierarchical, 4 hybrid
//! metric    u8       0 euclidean, 1 manhattan
//! act       u8       0 exponential, 1 gaussian
//! norm      u8       0 none, 1 present; then shift and scale as arrays
//! features  strings  u32 count, then u32 byte length + UTF-8 per name
//! outputs   strings
//! classes   u64      0 for regression
//! lambda    f64
//! bandwidth u64
//! blend     u64
//! weight    u8       blend weight activation
//! coarse    u64
//! arrays    u32 count, then per array: u64 rows, u64 cols, rows·cols f64
//! ```
//!
//! Array contents by kind: dense `X, Y, θ`; sparse, blended and
//! hierarchical `X, Y`; hybrid `θ₁, θ₂, θ₃, x₁, y₁, x₃, y₃`. A hierarchical
//! model is refitted from `X, Y` on load, which is deterministic.

use std::fs;
use std::io::Write;
use std::path::Path;

use lazykrr::continuous::{BlendedModel, HierModel};
use lazykrr::dense::DenseModel;
use lazykrr::kernels::{Activation, KernelSpec, Metric, Normalizer};
use lazykrr::learn::{HybridModel, HybridParams};
use lazykrr::par::Parallelism;
use lazykrr::sparse::SparseModel;
use lazykrr::PointSet;

pub const MAGIC: &[u8; 8] = b"LAZYKRR\0";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model archive (bad magic bytes)")]
    Magic,
    #[error("archive version {found} is not supported (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("archive truncated at byte {0}")]
    Truncated(usize),
    #[error("corrupt archive: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] lazykrr::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Dense,
    Sparse,
    Blended,
    Hierarchical,
    Hybrid,
}

impl ModelKind {
    const ALL: [ModelKind; 5] = [
        ModelKind::Dense,
        ModelKind::Sparse,
        ModelKind::Blended,
        ModelKind::Hierarchical,
        ModelKind::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dense => "dense",
            ModelKind::Sparse => "sparse",
            ModelKind::Blended => "blended",
            ModelKind::Hierarchical => "hierarchical",
            ModelKind::Hybrid => "hybrid",
        }
    }

    fn tag(self) -> u8 {
        Self::ALL.iter().position(|&k| k == self).expect("listed") as u8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchive {
    pub kind: ModelKind,
    pub spec: KernelSpec,
    pub feature_names: Vec<String>,
    pub output_names: Vec<String>,
    pub classes: usize,
    pub lambda: f64,
    pub bandwidth: usize,
    pub blend: usize,
    pub weight: Activation,
    pub coarse: usize,
    pub arrays: Vec<PointSet>,
}

/// A model rebuilt from an archive. Built once per process, so variant size is irrelevant.
#[derive(Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    Dense(DenseModel),
    Sparse(SparseModel),
    Blended(BlendedModel),
    Hierarchical(HierModel),
    Hybrid(HybridModel),
}

impl Model {
    pub fn predict(&self, z: &PointSet, par: Parallelism) -> lazykrr::Result<PointSet> {
        match self {
            Model::Dense(m) => m.predict_with(z, par),
            Model::Sparse(m) => Ok(m.predict_batch(z, par)?.0),
            Model::Blended(m) => m.predict_with(z, par),
            Model::Hierarchical(m) => m.predict_with(z, par),
            Model::Hybrid(m) => m.forward(z),
        }
    }

    /// Power function `ε` (dense) or `ε^σ` (sparse) at each query.
    pub fn error_indicator(&self, z: &PointSet) -> lazykrr::Result<Vec<f64>> {
        match self {
            Model::Dense(m) => m.power_function(z),
            Model::Sparse(m) => m.local_error(z),
            _ => Err(lazykrr::Error::InvalidInput(
                "error indicators are available for dense and sparse models only".into(),
            )),
        }
    }
}

fn metric_tag(m: Metric) -> u8 {
    match m {
        Metric::Euclidean => 0,
        Metric::Manhattan => 1,
    }
}

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Exponential => 0,
        Activation::Gaussian => 1,
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn strings(&mut self, items: &[String]) {
        self.u32(items.len() as u32);
        for s in items {
            self.u32(s.len() as u32);
            self.0.extend_from_slice(s.as_bytes());
        }
    }
    fn array(&mut self, a: &PointSet) {
        self.u64(a.nrows() as u64);
        self.u64(a.ncols() as u64);
        for &v in a.as_slice() {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArchiveError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(ArchiveError::Truncated(self.buf.len()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, ArchiveError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, ArchiveError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, ArchiveError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize, ArchiveError> {
        usize::try_from(self.u64()?).map_err(|_| ArchiveError::Corrupt("size overflows usize".into()))
    }
    fn f64(&mut self) -> Result<f64, ArchiveError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn strings(&mut self) -> Result<Vec<String>, ArchiveError> {
        let n = self.u32()? as usize;
        let mut out = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let len = self.u32()? as usize;
            let bytes = self.take(len)?;
            out.push(String::from_utf8(bytes.to_vec()).map_err(|_| ArchiveError::Corrupt("name is not UTF-8".into()))?);
        }
        Ok(out)
    }
    fn array(&mut self) -> Result<PointSet, ArchiveError> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let len = rows
            .checked_mul(cols)
            .filter(|&l| l.checked_mul(8).is_some_and(|b| b <= self.buf.len() - self.pos))
            .ok_or(ArchiveError::Truncated(self.buf.len()))?;
        let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
        Ok(PointSet::new(rows, cols, data)?)
    }
}

fn activation_from_tag(t: u8) -> Result<Activation, ArchiveError> {
    match t {
        0 => Ok(Activation::Exponential),
        1 => Ok(Activation::Gaussian),
        _ => Err(ArchiveError::Corrupt(format!("unknown activation tag {t}"))),
    }
}

impl ModelArchive {
    /// Archive skeleton with default scalars and no arrays.
    pub fn new(kind: ModelKind, spec: KernelSpec, feature_names: Vec<String>, output_names: Vec<String>) -> Self {
        Self {
            kind,
            spec,
            feature_names,
            output_names,
            classes: 0,
            lambda: lazykrr::dense::DEFAULT_LAMBDA,
            bandwidth: 0,
            blend: 0,
            weight: Activation::Exponential,
            coarse: 0,
            arrays: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.u8(self.kind.tag());
        w.u8(metric_tag(self.spec.metric));
        w.u8(activation_tag(self.spec.activation));
        match &self.spec.normalizer {
            None => w.u8(0),
            Some(n) => {
                w.u8(1);
                w.array(&PointSet::from_rows(&[n.shift()]).expect("one row"));
                w.array(&PointSet::from_rows(&[n.scale()]).expect("one row"));
            }
        }
        w.strings(&self.feature_names);
        w.strings(&self.output_names);
        w.u64(self.classes as u64);
        w.f64(self.lambda);
        w.u64(self.bandwidth as u64);
        w.u64(self.blend as u64);
        w.u8(activation_tag(self.weight));
        w.u64(self.coarse as u64);
        w.u32(self.arrays.len() as u32);
        for a in &self.arrays {
            w.array(a);
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, ArchiveError> {
        let mut r = Reader { buf, pos: 0 };
        if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
            return Err(if MAGIC.starts_with(buf) { ArchiveError::Truncated(buf.len()) } else { ArchiveError::Magic });
        }
        r.take(MAGIC.len())?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(ArchiveError::Version {
                found: version,
                supported: VERSION,
            });
        }
        let tag = r.u8()?;
        let kind = *ModelKind::ALL
            .get(tag as usize)
            .ok_or_else(|| ArchiveError::Corrupt(format!("unknown model kind {tag}")))?;
        let metric = match r.u8()? {
            0 => Metric::Euclidean,
            1 => Metric::Manhattan,
            t => return Err(ArchiveError::Corrupt(format!("unknown metric tag {t}"))),
        };
        let activation = activation_from_tag(r.u8()?)?;
        let mut spec = KernelSpec::new(metric, activation);
        match r.u8()? {
            0 => {}
            1 => {
                let shift = r.array()?.into_vec();
                let scale = r.array()?.into_vec();
                spec = spec.with_normalizer(Normalizer::from_parts(shift, scale)?);
            }
            t => return Err(ArchiveError::Corrupt(format!("unknown normalizer flag {t}"))),
        }
        let feature_names = r.strings()?;
        let output_names = r.strings()?;
        let classes = r.usize()?;
        let lambda = r.f64()?;
        let bandwidth = r.usize()?;
        let blend = r.usize()?;
        let weight = activation_from_tag(r.u8()?)?;
        let coarse = r.usize()?;
        let count = r.u32()? as usize;
        let arrays = (0..count).map(|_| r.array()).collect::<Result<Vec<_>, _>>()?;
        if r.pos != buf.len() {
            return Err(ArchiveError::Corrupt(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Self {
            kind,
            spec,
            feature_names,
            output_names,
            classes,
            lambda,
            bandwidth,
            blend,
            weight,
            coarse,
            arrays,
        })
    }

    /// Writes to a sibling temporary file and renames it into place, so a
    /// failed save never leaves a partial archive at `path`.
    pub fn save(&self, path: &Path) -> Result<(), ArchiveError> {
        let io = |source| ArchiveError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".partial");
        let tmp = std::path::PathBuf::from(tmp);
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, ArchiveError> {
        let bytes = fs::read(path).map_err(|source| ArchiveError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    fn expect_arrays(&self, n: usize) -> Result<(), ArchiveError> {
        if self.arrays.len() != n {
            return Err(ArchiveError::Corrupt(format!(
                "{} model needs {n} arrays, archive has {}",
                self.kind.name(),
                self.arrays.len()
            )));
        }
        Ok(())
    }

    /// Training features and targets of kernel models.
    pub fn training_data(&self) -> Result<(PointSet, PointSet), ArchiveError> {
        if self.kind == ModelKind::Hybrid {
            return Err(ArchiveError::Corrupt("hybrid archives carry no training set".into()));
        }
        if self.arrays.len() < 2 {
            return Err(ArchiveError::Corrupt("missing training arrays".into()));
        }
        Ok((self.arrays[0].clone(), self.arrays[1].clone()))
    }

    pub fn build(&self) -> Result<Model, ArchiveError> {
        let spec = self.spec.clone();
        Ok(match self.kind {
            ModelKind::Dense => {
                self.expect_arrays(3)?;
                let [x, y, theta] = [0, 1, 2].map(|i| self.arrays[i].clone());
                Model::Dense(DenseModel::from_parts(spec, x, y, self.lambda, theta)?)
            }
            ModelKind::Sparse => {
                self.expect_arrays(2)?;
                let (x, y) = self.training_data()?;
                Model::Sparse(SparseModel::build(spec, x, y, self.bandwidth, self.lambda)?)
            }
            ModelKind::Blended => {
                self.expect_arrays(2)?;
                let (x, y) = self.training_data()?;
                let sparse = SparseModel::build(spec, x, y, self.bandwidth, self.lambda)?;
                Model::Blended(BlendedModel::new(sparse, self.blend, self.weight)?)
            }
            ModelKind::Hierarchical => {
                self.expect_arrays(2)?;
                let (x, y) = self.training_data()?;
                Model::Hierarchical(HierModel::fit(spec, x, y, self.bandwidth, self.coarse, self.lambda)?)
            }
            ModelKind::Hybrid => {
                self.expect_arrays(7)?;
                let params = HybridParams::from_vec(self.arrays.clone())?;
                Model::Hybrid(HybridModel::new(params, spec, self.lambda)?)
            }
        })
    }

    pub fn from_dense(m: &DenseModel, feature_names: Vec<String>, output_names: Vec<String>) -> Self {
        let mut a = Self::new(ModelKind::Dense, m.spec().clone(), feature_names, output_names);
        a.lambda = m.lambda();
        a.arrays = vec![m.features().clone(), m.targets().clone(), m.coefficients()];
        a
    }

    pub fn from_hybrid(m: &HybridModel, feature_names: Vec<String>, output_names: Vec<String>) -> Self {
        let mut a = Self::new(ModelKind::Hybrid, m.spec.clone(), feature_names, output_names);
        a.lambda = m.lambda;
        a.arrays = m.params.to_vec();
        a
    }
}
