//! Subcommand definitions and their thin adapters over the library.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lazykrr::datasets;
use lazykrr::dense::{DenseModel, DEFAULT_LAMBDA};
use lazykrr::kernels::{Activation, KernelSpec, Metric, Normalizer};
use lazykrr::learn::{
    train_hybrid, train_readout, AdamWConfig, Centers, HybridConfig, HybridModel, LossKind, ReadoutConfig, Targets,
};
use lazykrr::par::Parallelism;
use lazykrr::protocol::{self, ReadoutSettings};
use lazykrr::selection::{greedy_select_with, CandidateRule};
use lazykrr::transport::{gromov_monge, monge_assign, Cost};
use lazykrr::PointSet;

use crate::archive::{ModelArchive, ModelKind};
use crate::table::{load_table, save_table, LoadOptions, Table};

pub type CmdResult = Result<(), Box<dyn std::error::Error>>;

#[derive(Debug, Parser)]
#[command(name = "lazykrr", version, about = "Lazy sparse kernel ridge regression on CSV tables")]
pub struct Cli {
    /// Worker threads for batch prediction (default: all cores).
    #[arg(long, global = true, env = "LAZYKRR_THREADS")]
    pub threads: Option<usize>,
    /// Run every batch sequentially.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a kernel model and write an archive.
    Fit(FitArgs),
    /// Predict with an archived model.
    Predict(PredictArgs),
    /// Power-function error indicator on query points or a grid.
    ErrorMap(ErrorMapArgs),
    /// Greedy farthest-point selection; writes selected row indices.
    Select(SelectArgs),
    /// Monge assignment cost and Gromov–Monge discrepancy of two tables.
    OtLoss(OtLossArgs),
    /// Train a kernel readout or the hybrid network.
    Train(TrainArgs),
    /// Accuracy and timing tables on generated data.
    Bench(BenchArgs),
    /// Write a seeded synthetic dataset.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input CSV file.
    #[arg(long)]
    pub input: PathBuf,
    /// Field delimiter.
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    /// The file has no header line; columns are named c0, c1, ...
    #[arg(long)]
    pub no_header: bool,
}

impl InputArgs {
    fn load(&self, label_column: Option<&str>) -> Result<Table, Box<dyn std::error::Error>> {
        let opts = LoadOptions {
            delimiter: delimiter_byte(self.delimiter)?,
            header: !self.no_header,
            label_column: label_column.map(str::to_string),
        };
        Ok(load_table(&self.input, &opts)?)
    }
}

fn delimiter_byte(c: char) -> Result<u8, String> {
    u8::try_from(c).map_err(|_| format!("delimiter '{c}' is not a single-byte character"))
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Integer class-label column; targets become one-hot rows.
    #[arg(long, conflicts_with = "target_cols")]
    pub label_col: Option<String>,
    /// Comma-separated regression target columns.
    #[arg(long, value_delimiter = ',')]
    pub target_cols: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KernelArg {
    Exp,
    Gauss,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    L2,
    L1,
}

impl From<KernelArg> for Activation {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Exp => Activation::Exponential,
            KernelArg::Gauss => Activation::Gaussian,
        }
    }
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::L2 => Metric::Euclidean,
            MetricArg::L1 => Metric::Manhattan,
        }
    }
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// Activation φ.
    #[arg(long, value_enum, default_value = "exp")]
    pub kernel: KernelArg,
    #[arg(long, value_enum, default_value = "l2")]
    pub metric: MetricArg,
    /// Skip per-feature standardization.
    #[arg(long)]
    pub no_normalize: bool,
    /// Ridge parameter λ.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
}

impl KernelArgs {
    fn spec(&self, x: &PointSet) -> lazykrr::Result<KernelSpec> {
        let spec = KernelSpec::new(self.metric.into(), self.kernel.into());
        if self.no_normalize {
            Ok(spec)
        } else {
            Ok(spec.with_normalizer(Normalizer::fit(x)?))
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum FitKind {
    Dense,
    Sparse,
    Blended,
    Hierarchical,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub targets: TargetArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, value_enum, default_value = "dense")]
    pub model: FitKind,
    /// Neighbourhood size M for sparse variants.
    #[arg(long, default_value_t = 100)]
    pub bandwidth: usize,
    /// Anchors J for the blended variant.
    #[arg(long, default_value_t = lazykrr::continuous::DEFAULT_BLEND)]
    pub blend: usize,
    /// Coarse subset size N0 for the hierarchical variant.
    #[arg(long, default_value_t = 1000)]
    pub coarse: usize,
    /// Output archive.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum ContinuousArg {
    Blended,
    Hierarchical,
}

#[derive(Debug, Args)]
pub struct VariantArgs {
    /// Predict with the lazy sparse model on the archive's training set.
    #[arg(long)]
    pub sparse: bool,
    /// Neighbourhood size M (overrides the archive).
    #[arg(long)]
    pub bandwidth: Option<usize>,
    /// Use a globally continuous variant.
    #[arg(long, value_enum)]
    pub continuous: Option<ContinuousArg>,
    /// Anchors J for the blended variant (overrides the archive).
    #[arg(long)]
    pub blend: Option<usize>,
    /// Coarse subset size N0 (overrides the archive).
    #[arg(long)]
    pub coarse: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub variant: VariantArgs,
    /// Append the power-function error indicator column.
    #[arg(long)]
    pub with_error: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ErrorMapArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Query points; without it a grid over the training bounding box is used.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    /// Grid points per axis (one- and two-dimensional inputs only).
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[command(flatten)]
    pub variant: VariantArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    #[arg(long, value_enum, default_value = "l2")]
    pub metric: MetricArg,
    /// Only consider candidates after the last selected index.
    #[arg(long)]
    pub suffix: bool,
    /// Select in raw rather than standardized coordinates.
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CostArg {
    Sqeuclidean,
    Euclidean,
}

#[derive(Debug, Args)]
pub struct OtLossArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    #[arg(long)]
    pub no_header: bool,
    #[arg(long, value_enum, default_value = "sqeuclidean")]
    pub cost: CostArg,
    /// Optional table of the optimal permutation.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Ce,
    Mse,
    SmoothL1,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Ce => LossKind::CrossEntropy,
            LossArg::Mse => LossKind::Mse,
            LossArg::SmoothL1 => LossKind::SmoothL1,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub targets: TargetArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Loss; defaults to ce with labels, mse with targets, smooth-l1 for --hybrid.
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep θ_y fixed.
    #[arg(long)]
    pub freeze_targets: bool,
    /// Learn the centers θ_x too.
    #[arg(long)]
    pub learn_centers: bool,
    /// Gromov–Monge regularizer weight.
    #[arg(long, default_value_t = 0.0)]
    pub gm_weight: f64,
    /// Center scheme: per-batch, all, or greedy:B.
    #[arg(long, default_value = "per-batch")]
    pub centers: String,
    /// Train the hybrid network on the regression targets instead.
    #[arg(long)]
    pub hybrid: bool,
    /// Hidden width L of the hybrid network.
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// Kernel centers B of the hybrid network.
    #[arg(long, default_value_t = 64)]
    pub kernel_centers: usize,
    /// Keep the hybrid kernel parameters fixed.
    #[arg(long)]
    pub freeze_kernels: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss curve table (epoch, loss).
    #[arg(long)]
    pub curve: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Suite {
    ReadoutComparison,
    LazyScaling,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Training sizes (readout comparison) or index sizes (lazy scaling).
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    pub sizes: Vec<usize>,
    /// Test points (readout comparison) or queries (lazy scaling).
    #[arg(long, default_value_t = 2000)]
    pub test_size: usize,
    #[arg(long, default_value_t = 100)]
    pub bandwidth: usize,
    #[arg(long, default_value_t = lazykrr::continuous::DEFAULT_BLEND)]
    pub blend: usize,
    #[arg(long, default_value_t = 100)]
    pub coarse: usize,
    /// Label noise of the generated classification data.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Input dimension for lazy scaling.
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output table; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenKind {
    Clusters,
    Nonlinear,
    Regression1d,
    Uniform,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: GenKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub spread: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub struct Ctx {
    pub par: Parallelism,
}

pub fn dispatch(cli: Cli) -> CmdResult {
    if let Some(t) = cli.threads {
        if let Err(e) = lazykrr::par::init_threads(t) {
            log::warn!("{e}");
        }
    }
    let ctx = Ctx {
        par: if cli.sequential { Parallelism::Sequential } else { Parallelism::Parallel },
    };
    match cli.command {
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(&ctx, a),
        Command::ErrorMap(a) => error_map(a),
        Command::Select(a) => select(&ctx, a),
        Command::OtLoss(a) => ot_loss(a),
        Command::Train(a) => train(a),
        Command::Bench(a) => bench(&ctx, a),
        Command::Gen(a) => generate(a),
    }
}

/// Features, targets, output names and class count.
struct Supervised {
    features: Table,
    targets: PointSet,
    labels: Option<Vec<usize>>,
    output_names: Vec<String>,
    classes: usize,
}

fn supervised(input: &InputArgs, t: &TargetArgs) -> Result<Supervised, Box<dyn std::error::Error>> {
    if let Some(label) = &t.label_col {
        let table = input.load(Some(label))?;
        let labels = table.labels.clone().unwrap_or_default();
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let targets = PointSet::one_hot(&labels, classes)?;
        Ok(Supervised {
            features: table,
            targets,
            labels: Some(labels),
            output_names: (0..classes).map(|c| format!("score_{c}")).collect(),
            classes,
        })
    } else if !t.target_cols.is_empty() {
        let table = input.load(None)?;
        let (features, targets) = table.split_off(&t.target_cols)?;
        Ok(Supervised {
            features,
            targets,
            labels: None,
            output_names: t.target_cols.clone(),
            classes: 0,
        })
    } else {
        Err("either --label-col or --target-cols is required".into())
    }
}

fn fit(a: FitArgs) -> CmdResult {
    let s = supervised(&a.input, &a.targets)?;
    let x = s.features.data.clone();
    let spec = a.kernel.spec(&x)?;
    let names = s.features.columns.clone();
    let mut archive = if a.model == FitKind::Dense {
        let model = DenseModel::fit(spec, x, s.targets, a.kernel.lambda)?;
        ModelArchive::from_dense(&model, names, s.output_names)
    } else {
        let kind = match a.model {
            FitKind::Sparse => ModelKind::Sparse,
            FitKind::Blended => ModelKind::Blended,
            _ => ModelKind::Hierarchical,
        };
        let mut archive = ModelArchive::new(kind, spec, names, s.output_names);
        archive.lambda = a.kernel.lambda;
        archive.bandwidth = a.bandwidth;
        archive.blend = a.blend;
        archive.weight = archive.spec.activation;
        archive.coarse = a.coarse.min(x.nrows());
        archive.arrays = vec![x, s.targets];
        // surface fit errors now rather than at first prediction
        archive.build()?;
        archive
    };
    archive.classes = s.classes;
    archive.save(&a.out)?;
    log::info!("wrote {} model to {}", archive.kind.name(), a.out.display());
    Ok(())
}

/// Applies `--sparse` / `--continuous` overrides to an archive.
fn variant(archive: &ModelArchive, v: &VariantArgs) -> Result<ModelArchive, Box<dyn std::error::Error>> {
    let kind = match (v.continuous, v.sparse) {
        (Some(ContinuousArg::Blended), _) => ModelKind::Blended,
        (Some(ContinuousArg::Hierarchical), _) => ModelKind::Hierarchical,
        (None, true) => ModelKind::Sparse,
        (None, false) => {
            if v.bandwidth.is_some() || v.blend.is_some() || v.coarse.is_some() {
                let mut a = archive.clone();
                a.bandwidth = v.bandwidth.unwrap_or(a.bandwidth);
                a.blend = v.blend.unwrap_or(a.blend);
                a.coarse = v.coarse.unwrap_or(a.coarse);
                return Ok(a);
            }
            return Ok(archive.clone());
        }
    };
    let (x, y) = archive.training_data()?;
    let mut a = ModelArchive::new(kind, archive.spec.clone(), archive.feature_names.clone(), archive.output_names.clone());
    a.classes = archive.classes;
    a.lambda = archive.lambda;
    a.bandwidth = v.bandwidth.unwrap_or(if archive.bandwidth > 0 { archive.bandwidth } else { 100 });
    a.blend = v.blend.unwrap_or(if archive.blend > 0 { archive.blend } else { lazykrr::continuous::DEFAULT_BLEND });
    a.weight = archive.weight;
    a.coarse = v.coarse.unwrap_or(if archive.coarse > 0 { archive.coarse } else { 1000 }).min(x.nrows());
    a.arrays = vec![x, y];
    Ok(a)
}

/// Feature columns of `table` in archive order, matched by name when the
/// names are present.
fn features_for(archive: &ModelArchive, table: &Table) -> Result<PointSet, Box<dyn std::error::Error>> {
    let wanted = &archive.feature_names;
    if !wanted.is_empty() && wanted.iter().all(|n| table.columns.contains(n)) {
        return Ok(table.select(&table.positions(wanted)?));
    }
    if table.data.ncols() != wanted.len() {
        return Err(format!(
            "input has {} columns, model expects {} ({})",
            table.data.ncols(),
            wanted.len(),
            wanted.join(", ")
        )
        .into());
    }
    Ok(table.data.clone())
}

fn predict(ctx: &Ctx, a: PredictArgs) -> CmdResult {
    let archive = variant(&ModelArchive::load(&a.model)?, &a.variant)?;
    let model = archive.build()?;
    let table = a.input.load(None)?;
    let z = features_for(&archive, &table)?;
    let pred = model.predict(&z, ctx.par)?;
    let mut columns = archive.output_names.clone();
    let mut extra: Vec<Vec<f64>> = Vec::new();
    if archive.classes > 0 {
        columns.push("label".into());
        extra.push(pred.argmax_rows().into_iter().map(|c| c as f64).collect());
    }
    if a.with_error {
        columns.push("error".into());
        extra.push(model.error_indicator(&z)?);
    }
    let out = append_columns(&pred, &extra);
    save_table(&a.out, &columns, &out, delimiter_byte(a.input.delimiter)?)?;
    Ok(())
}

fn append_columns(base: &PointSet, extra: &[Vec<f64>]) -> PointSet {
    let w = base.ncols();
    PointSet::from_fn(base.nrows(), w + extra.len(), |i, j| if j < w { base[(i, j)] } else { extra[j - w][i] })
}

fn grid(x: &PointSet, per_axis: usize) -> Result<PointSet, Box<dyn std::error::Error>> {
    let d = x.ncols();
    if !(1..=2).contains(&d) {
        return Err(format!("grid needs one- or two-dimensional inputs, model has {d}; pass --input").into());
    }
    if per_axis < 2 {
        return Err("--grid must be at least 2".into());
    }
    let bounds: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            x.rows()
                .map(|r| r[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        })
        .collect();
    let at = |j: usize, k: usize| bounds[j].0 + (bounds[j].1 - bounds[j].0) * k as f64 / (per_axis - 1) as f64;
    let n = per_axis.pow(d as u32);
    Ok(PointSet::from_fn(n, d, |i, j| if j == 0 { at(0, i % per_axis) } else { at(1, i / per_axis) }))
}

fn error_map(a: ErrorMapArgs) -> CmdResult {
    let archive = variant(&ModelArchive::load(&a.model)?, &a.variant)?;
    let model = archive.build()?;
    let z = match &a.input {
        Some(path) => {
            let opts = LoadOptions {
                delimiter: delimiter_byte(a.delimiter)?,
                ..LoadOptions::default()
            };
            features_for(&archive, &load_table(path, &opts)?)?
        }
        None => grid(&archive.training_data()?.0, a.grid)?,
    };
    let eps = model.error_indicator(&z)?;
    let mut columns = archive.feature_names.clone();
    if columns.len() != z.ncols() {
        columns = (0..z.ncols()).map(|j| format!("x{j}")).collect();
    }
    columns.push("error".into());
    save_table(&a.out, &columns, &append_columns(&z, &[eps]), delimiter_byte(a.delimiter)?)?;
    Ok(())
}

fn select(ctx: &Ctx, a: SelectArgs) -> CmdResult {
    let table = a.input.load(None)?;
    let x = if a.no_normalize {
        table.data.clone()
    } else {
        Normalizer::fit(&table.data)?.apply(&table.data)?
    };
    let rule = if a.suffix { CandidateRule::Suffix } else { CandidateRule::Unselected };
    let sel = greedy_select_with(&x, a.count, a.metric.into(), a.start, rule, ctx.par)?;
    let col = PointSet::column(&sel.indices.iter().map(|&i| i as f64).collect::<Vec<_>>());
    write_index_table(&a.out, &col)
}

fn write_index_table(path: &Path, col: &PointSet) -> CmdResult {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "index")?;
    for v in col.as_slice() {
        writeln!(out, "{}", *v as usize)?;
    }
    out.flush()?;
    Ok(())
}

fn ot_loss(a: OtLossArgs) -> CmdResult {
    let opts = LoadOptions {
        delimiter: delimiter_byte(a.delimiter)?,
        header: !a.no_header,
        label_column: None,
    };
    let x = load_table(&a.x, &opts)?.data;
    let y = load_table(&a.y, &opts)?.data;
    let cost = match a.cost {
        CostArg::Sqeuclidean => Cost::SquaredEuclidean,
        CostArg::Euclidean => Cost::Euclidean,
    };
    let gm = gromov_monge(&x, &y)?;
    let monge = if x.ncols() == y.ncols() {
        Some(monge_assign(&x, &y, cost)?)
    } else {
        None
    };
    match &monge {
        Some(m) => println!("monge_cost {:.16e}", m.cost),
        None => println!("monge_cost n/a (dimensions differ)"),
    }
    println!("gromov_monge {:.16e}", gm.value);
    if let Some(path) = a.out {
        let m = monge.ok_or("--out needs tables of equal dimension")?;
        let col = PointSet::column(&m.permutation.iter().map(|&i| i as f64).collect::<Vec<_>>());
        write_index_table(&path, &col)?;
    }
    Ok(())
}

fn parse_centers(s: &str) -> Result<Centers, String> {
    match s {
        "per-batch" => Ok(Centers::PerBatch),
        "all" => Ok(Centers::All),
        _ => s
            .strip_prefix("greedy:")
            .and_then(|b| b.parse().ok())
            .map(Centers::Greedy)
            .ok_or_else(|| format!("unknown center scheme '{s}' (per-batch, all, greedy:B)")),
    }
}

fn train(a: TrainArgs) -> CmdResult {
    let s = supervised(&a.input, &a.targets)?;
    let x = s.features.data.clone();
    let spec = a.kernel.spec(&x)?;
    let optimizer = AdamWConfig {
        lr: a.lr,
        weight_decay: a.weight_decay,
        ..AdamWConfig::default()
    };
    let names = s.features.columns.clone();
    let (archive, curve) = if a.hybrid {
        let config = HybridConfig {
            epochs: a.epochs,
            batch: a.batch,
            optimizer,
            loss: a.loss.map_or(LossKind::SmoothL1, Into::into),
            freeze_kernels: a.freeze_kernels,
            seed: a.seed,
        };
        let mut model = HybridModel::init(&x, a.hidden, s.targets.ncols(), a.kernel_centers, spec, a.seed)?;
        model.lambda = a.kernel.lambda;
        let run = train_hybrid(model, &x, &s.targets, &config)?;
        let mut archive = ModelArchive::from_hybrid(&run.model, names, s.output_names);
        archive.classes = s.classes;
        (archive, run.curve)
    } else {
        let default_loss = if s.labels.is_some() { LossKind::CrossEntropy } else { LossKind::Mse };
        let config = ReadoutConfig {
            learn_targets: !a.freeze_targets,
            learn_centers: a.learn_centers,
            epochs: a.epochs,
            batch: a.batch,
            optimizer,
            loss: a.loss.map_or(default_loss, Into::into),
            gm_weight: a.gm_weight,
            centers: parse_centers(&a.centers)?,
            lambda: a.kernel.lambda,
            seed: a.seed,
        };
        let targets = match &s.labels {
            Some(l) => Targets::Labels(l),
            None => Targets::Values(&s.targets),
        };
        let run = train_readout(&spec, &x, targets, s.classes, &config)?;
        let mut archive = ModelArchive::from_dense(&run.model, names, s.output_names);
        archive.classes = s.classes;
        (archive, run.curve)
    };
    archive.save(&a.out)?;
    let table = PointSet::from_fn(curve.len(), 2, |i, j| if j == 0 { (i + 1) as f64 } else { curve[i] });
    save_table(&a.curve, &["epoch".into(), "loss".into()], &table, b',')?;
    Ok(())
}

fn bench(ctx: &Ctx, a: BenchArgs) -> CmdResult {
    let mut lines = Vec::new();
    match a.suite {
        Suite::ReadoutComparison => {
            let max = a.sizes.iter().copied().max().ok_or("--sizes is empty")?;
            let data = datasets::nonlinear_boundary(max + a.test_size, a.noise, a.seed)?;
            let (train, test) = data.split(max);
            let settings = ReadoutSettings {
                bandwidth: a.bandwidth,
                blend: a.blend,
                coarse: a.coarse,
                par: ctx.par,
                ..ReadoutSettings::default()
            };
            lines.push("size,method,accuracy,seconds".to_string());
            for row in protocol::readout_comparison(&train, &test, &a.sizes, &settings)? {
                lines.push(format!("{},{},{:.16e},{:.6e}", row.size, row.method, row.accuracy, row.seconds));
            }
        }
        Suite::LazyScaling => {
            lines.push("size,per_query_seconds,cells".to_string());
            for row in protocol::lazy_scaling(&a.sizes, a.dim, a.bandwidth, a.test_size, a.seed, ctx.par)? {
                lines.push(format!("{},{:.6e},{}", row.size, row.per_query_seconds, row.cells));
            }
        }
    }
    let text = lines.join("\n") + "\n";
    match a.out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn generate(a: GenArgs) -> CmdResult {
    let (x, last_name, last): (PointSet, &str, Vec<f64>) = match a.kind {
        GenKind::Clusters => {
            let d = datasets::clusters(a.n, a.classes, a.dim, a.spread, a.seed)?;
            (d.x, "label", d.labels.iter().map(|&l| l as f64).collect())
        }
        GenKind::Nonlinear => {
            let d = datasets::nonlinear_boundary(a.n, a.noise, a.seed)?;
            (d.x, "label", d.labels.iter().map(|&l| l as f64).collect())
        }
        GenKind::Regression1d => {
            let (x, y) = datasets::regression_1d(a.n, a.noise, a.seed);
            (x, "y", y.into_vec())
        }
        GenKind::Uniform => {
            let x = datasets::uniform(a.n, a.dim, a.seed);
            let y = x.rows().map(|r| r.iter().map(|v| (3.0 * v).sin()).sum()).collect();
            (x, "y", y)
        }
    };
    let mut columns: Vec<String> = (0..x.ncols()).map(|j| format!("x{j}")).collect();
    columns.push(last_name.into());
    let table = append_columns(&x, &[last]);
    if last_name == "label" {
        write_labeled(&a.out, &columns, &table)
    } else {
        Ok(save_table(&a.out, &columns, &table, b',')?)
    }
}

/// Like `save_table`, but the last column is written as an integer.
fn write_labeled(path: &Path, columns: &[String], data: &PointSet) -> CmdResult {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", columns.join(","))?;
    let w = data.ncols();
    for row in data.rows() {
        let mut cells: Vec<String> = row[..w - 1].iter().map(|v| format!("{v:.16e}")).collect();
        cells.push(format!("{}", row[w - 1] as usize));
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}
