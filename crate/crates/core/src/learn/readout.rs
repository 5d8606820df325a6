//! Trainable kernel readout `z ↦ k(z, θ_x) k(θ_x, θ_x)⁻¹ θ_y`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{loss_and_grad, LossKind, Targets};
use super::optim::{AdamWConfig, TrainState};
use crate::dense::{DenseModel, DEFAULT_LAMBDA};
use crate::error::{check_dim, Error, Result};
use crate::kernels::KernelSpec;
use crate::points::PointSet;
use crate::selection::{greedy_select, CandidateRule};
use crate::transport::gromov_monge;

/// Which training rows become kernel centers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centers {
    /// Every training row is a center; each step solves an `N×N` system.
    All,
    /// `B` greedy farthest-point centers; each step solves a `B×B` system.
    Greedy(usize),
    /// Every row is a parameter, but each step builds the regressor on the
    /// current minibatch only and evaluates it on the next minibatch.
    PerBatch,
}

#[derive(Debug, Clone)]
pub struct ReadoutConfig {
    pub learn_targets: bool,
    pub learn_centers: bool,
    pub epochs: usize,
    pub batch: usize,
    pub optimizer: AdamWConfig,
    pub loss: LossKind,
    /// Weight of the Gromov–Monge term `GM(θ_x, θ_y)`; zero disables it.
    pub gm_weight: f64,
    pub centers: Centers,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            learn_targets: true,
            learn_centers: false,
            epochs: 50,
            batch: 64,
            optimizer: AdamWConfig::default(),
            loss: LossKind::CrossEntropy,
            gm_weight: 0.0,
            centers: Centers::PerBatch,
            lambda: DEFAULT_LAMBDA,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct ReadoutRun {
    /// Dense regressor on the final `(θ_x, θ_y)`.
    pub model: DenseModel,
    /// Rows of the training set used as centers.
    pub center_rows: Vec<usize>,
    /// Mean minibatch objective per epoch.
    pub curve: Vec<f64>,
}

/// Trains the readout parameters with AdamW through the regressor's VJPs.
///
/// `θ_y` starts at `targets` (one-hot for labels) and `θ_x` at the features
/// of the center rows, so zero epochs give the training-free regressor.
pub fn train_readout(
    spec: &KernelSpec,
    x: &PointSet,
    targets: Targets<'_>,
    classes: usize,
    config: &ReadoutConfig,
) -> Result<ReadoutRun> {
    let n = x.nrows();
    check_dim(n, targets.len(), "readout targets")?;
    if n == 0 {
        return Err(Error::InvalidInput("readout training needs data".into()));
    }
    let y0 = match targets {
        Targets::Labels(l) => PointSet::one_hot(l, classes)?,
        Targets::Values(v) => v.clone(),
    };
    let center_rows: Vec<usize> = match config.centers {
        Centers::All | Centers::PerBatch => (0..n).collect(),
        Centers::Greedy(b) => {
            greedy_select(&spec.normalize(x)?, b.min(n), spec.metric, 0, CandidateRule::Unselected)?.indices
        }
    };
    let mut state = TrainState::new(
        vec![x.select_rows(&center_rows), y0.select_rows(&center_rows)],
        config.optimizer,
    );
    state.set_trainable(0, config.learn_centers);
    state.set_trainable(1, config.learn_targets);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let batches = super::epoch_batches(n, config.batch, &mut rng);
        let mut sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let (centers, eval) = match config.centers {
                Centers::PerBatch => (batch.clone(), batches[(b + 1) % batches.len()].clone()),
                _ => ((0..center_rows.len()).collect(), batch.clone()),
            };
            let (value, grads) = batch_objective(spec, &state, x, targets, &y0, &centers, &eval, config)?;
            if !value.is_finite() {
                return Err(Error::Training {
                    step: state.step() + 1,
                    reason: format!("loss diverged in epoch {epoch}"),
                });
            }
            sum += value;
            state.adamw_step(&grads)?;
        }
        curve.push(sum / batches.len() as f64);
    }
    let mut params = state.params.into_iter();
    let (theta_x, theta_y) = (params.next().expect("centers"), params.next().expect("targets"));
    let model = DenseModel::fit(spec.clone(), theta_x, theta_y, config.lambda)?;
    Ok(ReadoutRun {
        model,
        center_rows,
        curve,
    })
}

#[allow(clippy::too_many_arguments)]
fn batch_objective(
    spec: &KernelSpec,
    state: &TrainState,
    x: &PointSet,
    targets: Targets<'_>,
    y0: &PointSet,
    centers: &[usize],
    eval: &[usize],
    config: &ReadoutConfig,
) -> Result<(f64, Vec<PointSet>)> {
    let (theta_x, theta_y) = (&state.params[0], &state.params[1]);
    let cx = theta_x.select_rows(centers);
    let cy = theta_y.select_rows(centers);
    let model = DenseModel::fit(spec.clone(), cx.clone(), cy.clone(), config.lambda)?;
    let z = x.select_rows(eval);
    let pred = model.predict(&z)?;
    let labels;
    let values;
    let batch_targets = match targets {
        Targets::Labels(l) => {
            labels = eval.iter().map(|&i| l[i]).collect::<Vec<_>>();
            Targets::Labels(&labels)
        }
        Targets::Values(_) => {
            values = y0.select_rows(eval);
            Targets::Values(&values)
        }
    };
    let (mut value, upstream) = loss_and_grad(config.loss, &pred, batch_targets)?;
    let g = model.vjp(&z, &upstream)?;
    let (mut gx, mut gy) = (g.grad_x, g.grad_y);
    if config.gm_weight != 0.0 {
        let gm = gromov_monge(&cx, &cy)?;
        value += config.gm_weight * gm.value;
        for (a, b) in gx.as_mut_slice().iter_mut().zip(gm.grad_x.as_slice()) {
            *a += config.gm_weight * b;
        }
        for (a, b) in gy.as_mut_slice().iter_mut().zip(gm.grad_y.as_slice()) {
            *a += config.gm_weight * b;
        }
    }
    let mut full_x = PointSet::zeros(theta_x.nrows(), theta_x.ncols());
    let mut full_y = PointSet::zeros(theta_y.nrows(), theta_y.ncols());
    for (k, &c) in centers.iter().enumerate() {
        full_x.row_mut(c).copy_from_slice(gx.row(k));
        full_y.row_mut(c).copy_from_slice(gy.row(k));
    }
    Ok((value, vec![full_x, full_y]))
}
