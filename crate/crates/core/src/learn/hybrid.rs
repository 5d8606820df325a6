//! Two-hidden-layer ReLU network with kernel perturbations on the first
//! and last layers:
//!
//! `Q_k(s) = ReLU([ReLU(s θ₁) + P_{k₁}(x₁, y₁)(s)] θ₂) θ₃ + P_{k₃}(x₃, y₃)(s)`
//!
//! where `P_k(x, y)` is the dense kernel ridge regressor on the learnable
//! support set `(x, y)`. Both kernels act on the state space, so `x₁, x₃`
//! are `B×S`, `y₁` is `B×L` and `y₃` is `B×A`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::loss::{loss_and_grad, LossKind, Targets};
use super::optim::{AdamWConfig, TrainState};
use crate::dense::{DenseModel, DEFAULT_LAMBDA};
use crate::error::{check_dim, Error, Result};
use crate::kernels::KernelSpec;
use crate::points::PointSet;
use crate::selection::{greedy_select, CandidateRule};

#[derive(Debug, Clone, PartialEq)]
pub struct HybridParams {
    pub theta1: PointSet,
    pub theta2: PointSet,
    pub theta3: PointSet,
    pub x1: PointSet,
    pub y1: PointSet,
    pub x3: PointSet,
    pub y3: PointSet,
}

impl HybridParams {
    pub const NAMES: [&'static str; 7] = ["theta1", "theta2", "theta3", "x1", "y1", "x3", "y3"];

    pub fn to_vec(&self) -> Vec<PointSet> {
        vec![
            self.theta1.clone(),
            self.theta2.clone(),
            self.theta3.clone(),
            self.x1.clone(),
            self.y1.clone(),
            self.x3.clone(),
            self.y3.clone(),
        ]
    }

    pub fn from_vec(v: Vec<PointSet>) -> Result<Self> {
        let [theta1, theta2, theta3, x1, y1, x3, y3]: [PointSet; 7] = v
            .try_into()
            .map_err(|v: Vec<PointSet>| Error::InvalidInput(format!("expected 7 parameter sets, got {}", v.len())))?;
        let p = Self {
            theta1,
            theta2,
            theta3,
            x1,
            y1,
            x3,
            y3,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn state_dim(&self) -> usize {
        self.theta1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.theta1.ncols()
    }

    pub fn action_dim(&self) -> usize {
        self.theta3.ncols()
    }

    pub fn centers(&self) -> usize {
        self.x1.nrows()
    }

    fn validate(&self) -> Result<()> {
        let (s, l, a, b) = (self.state_dim(), self.hidden_dim(), self.action_dim(), self.centers());
        check_dim(l, self.theta2.nrows(), "theta2 rows")?;
        check_dim(l, self.theta2.ncols(), "theta2 columns")?;
        check_dim(l, self.theta3.nrows(), "theta3 rows")?;
        check_dim(s, self.x1.ncols(), "x1 columns")?;
        check_dim(b, self.y1.nrows(), "y1 rows")?;
        check_dim(l, self.y1.ncols(), "y1 columns")?;
        check_dim(b, self.x3.nrows(), "x3 rows")?;
        check_dim(s, self.x3.ncols(), "x3 columns")?;
        check_dim(b, self.y3.nrows(), "y3 rows")?;
        check_dim(a, self.y3.ncols(), "y3 columns")?;
        if b == 0 {
            return Err(Error::InvalidInput("hybrid model needs at least one kernel center".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HybridModel {
    pub params: HybridParams,
    /// Kernel of both perturbations, on the state space.
    pub spec: KernelSpec,
    pub lambda: f64,
}

/// Gradients for each parameter set, in [`HybridParams::NAMES`] order.
#[derive(Debug, Clone)]
pub struct HybridGradients(pub Vec<PointSet>);

struct Tape {
    s: DMatrix<f64>,
    h1: DMatrix<f64>,
    u: DMatrix<f64>,
    h2: DMatrix<f64>,
    a2: DMatrix<f64>,
    k1: DenseModel,
    k3: DenseModel,
}

fn relu(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

fn relu_mask(grad: &DMatrix<f64>, pre: &DMatrix<f64>) -> DMatrix<f64> {
    grad.zip_map(pre, |g, p| if p > 0.0 { g } else { 0.0 })
}

/// Plain network `ReLU(ReLU(s θ₁) θ₂) θ₃`.
pub fn mlp_forward(theta1: &PointSet, theta2: &PointSet, theta3: &PointSet, s: &PointSet) -> Result<PointSet> {
    check_dim(theta1.nrows(), s.ncols(), "state dimension")?;
    let a1 = relu(&(s.to_matrix() * theta1.to_matrix()));
    let a2 = relu(&(a1 * theta2.to_matrix()));
    Ok(PointSet::from_matrix(&(a2 * theta3.to_matrix())))
}

fn mlp_backward(
    theta: [&PointSet; 3],
    s: &PointSet,
    upstream: &PointSet,
) -> Vec<PointSet> {
    let (t1, t2, t3) = (theta[0].to_matrix(), theta[1].to_matrix(), theta[2].to_matrix());
    let sm = s.to_matrix();
    let h1 = &sm * &t1;
    let a1 = relu(&h1);
    let h2 = &a1 * &t2;
    let a2 = relu(&h2);
    let g = upstream.to_matrix();
    let d3 = a2.transpose() * &g;
    let dh2 = relu_mask(&(&g * t3.transpose()), &h2);
    let d2 = a1.transpose() * &dh2;
    let dh1 = relu_mask(&(&dh2 * t2.transpose()), &h1);
    let d1 = sm.transpose() * dh1;
    vec![PointSet::from_matrix(&d1), PointSet::from_matrix(&d2), PointSet::from_matrix(&d3)]
}

impl HybridModel {
    pub fn new(params: HybridParams, spec: KernelSpec, lambda: f64) -> Result<Self> {
        params.validate()?;
        spec.check_input_dim(params.state_dim())?;
        Ok(Self { params, spec, lambda })
    }

    /// He-initialized weights; kernel centers are greedy-selected states
    /// (random normal draws when there are fewer states than centers) and
    /// kernel targets start at zero.
    pub fn init(
        states: &PointSet,
        hidden: usize,
        actions: usize,
        centers: usize,
        spec: KernelSpec,
        seed: u64,
    ) -> Result<Self> {
        let s = states.ncols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut he = |rows: usize, cols: usize| {
            let std = (2.0 / rows as f64).sqrt();
            PointSet::from_fn(rows, cols, |_, _| std * rng.sample::<f64, _>(StandardNormal))
        };
        let theta1 = he(s, hidden);
        let theta2 = he(hidden, hidden);
        let theta3 = he(hidden, actions);
        let x = if centers <= states.nrows() {
            let sel = greedy_select(&spec.normalize(states)?, centers, spec.metric, 0, CandidateRule::Unselected)?;
            states.select_rows(&sel.indices)
        } else {
            PointSet::from_fn(centers, s, |_, _| rng.sample(StandardNormal))
        };
        let params = HybridParams {
            theta1,
            theta2,
            theta3,
            x1: x.clone(),
            y1: PointSet::zeros(centers, hidden),
            x3: x,
            y3: PointSet::zeros(centers, actions),
        };
        Self::new(params, spec, DEFAULT_LAMBDA)
    }

    fn tape(&self, s: &PointSet) -> Result<Tape> {
        let p = &self.params;
        check_dim(p.state_dim(), s.ncols(), "state dimension")?;
        let k1 = DenseModel::fit(self.spec.clone(), p.x1.clone(), p.y1.clone(), self.lambda)?;
        let k3 = DenseModel::fit(self.spec.clone(), p.x3.clone(), p.y3.clone(), self.lambda)?;
        let sm = s.to_matrix();
        let h1 = &sm * p.theta1.to_matrix();
        let u = relu(&h1) + k1.predict(s)?.to_matrix();
        let h2 = &u * p.theta2.to_matrix();
        let a2 = relu(&h2);
        Ok(Tape { s: sm, h1, u, h2, a2, k1, k3 })
    }

    pub fn forward(&self, s: &PointSet) -> Result<PointSet> {
        let t = self.tape(s)?;
        let out = &t.a2 * self.params.theta3.to_matrix() + t.k3.predict(s)?.to_matrix();
        Ok(PointSet::from_matrix(&out))
    }

    /// Forward pass and VJPs of every parameter set against `upstream`.
    pub fn backward(&self, s: &PointSet, upstream: &PointSet) -> Result<(PointSet, HybridGradients)> {
        let t = self.tape(s)?;
        let p = &self.params;
        let t3 = p.theta3.to_matrix();
        let out = &t.a2 * &t3 + t.k3.predict(s)?.to_matrix();
        check_dim(out.nrows(), upstream.nrows(), "upstream rows")?;
        check_dim(out.ncols(), upstream.ncols(), "upstream columns")?;
        let g = upstream.to_matrix();
        let d3 = t.a2.transpose() * &g;
        let dh2 = relu_mask(&(&g * t3.transpose()), &t.h2);
        let d2 = t.u.transpose() * &dh2;
        let du = &dh2 * p.theta2.to_matrix().transpose();
        let dh1 = relu_mask(&du, &t.h1);
        let d1 = t.s.transpose() * dh1;
        let g1 = t.k1.vjp(s, &PointSet::from_matrix(&du))?;
        let g3 = t.k3.vjp(s, upstream)?;
        Ok((
            PointSet::from_matrix(&out),
            HybridGradients(vec![
                PointSet::from_matrix(&d1),
                PointSet::from_matrix(&d2),
                PointSet::from_matrix(&d3),
                g1.grad_x,
                g1.grad_y,
                g3.grad_x,
                g3.grad_y,
            ]),
        ))
    }
}

#[derive(Debug, Clone)]
pub struct HybridConfig {
    pub epochs: usize,
    pub batch: usize,
    pub optimizer: AdamWConfig,
    /// [`LossKind::Mse`] or [`LossKind::SmoothL1`].
    pub loss: LossKind,
    /// Keeps `x₁, y₁, x₃, y₃` fixed.
    pub freeze_kernels: bool,
    pub seed: u64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch: 64,
            optimizer: AdamWConfig::default(),
            loss: LossKind::SmoothL1,
            freeze_kernels: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HybridRun {
    pub model: HybridModel,
    pub curve: Vec<f64>,
}

fn check_regression(config: &HybridConfig, states: &PointSet, targets: &PointSet) -> Result<()> {
    if config.loss == LossKind::CrossEntropy {
        return Err(Error::InvalidInput("hybrid training uses a regression loss".into()));
    }
    check_dim(states.nrows(), targets.nrows(), "hybrid targets")?;
    if states.is_empty() {
        return Err(Error::InvalidInput("hybrid training needs data".into()));
    }
    Ok(())
}

/// Supervised AdamW training of every parameter set of the hybrid model.
pub fn train_hybrid(model: HybridModel, states: &PointSet, targets: &PointSet, config: &HybridConfig) -> Result<HybridRun> {
    check_regression(config, states, targets)?;
    check_dim(model.params.action_dim(), targets.ncols(), "hybrid target columns")?;
    let (spec, lambda) = (model.spec.clone(), model.lambda);
    let mut state = TrainState::new(model.params.to_vec(), config.optimizer);
    if config.freeze_kernels {
        (3..7).for_each(|k| state.set_trainable(k, false));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let batches = super::epoch_batches(states.nrows(), config.batch, &mut rng);
        let mut sum = 0.0;
        for batch in &batches {
            let current = HybridModel::new(HybridParams::from_vec(state.params.clone())?, spec.clone(), lambda)?;
            let s = states.select_rows(batch);
            let t = targets.select_rows(batch);
            let pred = current.forward(&s)?;
            let (value, upstream) = loss_and_grad(config.loss, &pred, Targets::Values(&t))?;
            if !value.is_finite() {
                return Err(Error::Training {
                    step: state.step() + 1,
                    reason: format!("loss diverged in epoch {epoch}"),
                });
            }
            let (_, grads) = current.backward(&s, &upstream)?;
            sum += value;
            state.adamw_step(&grads.0)?;
        }
        curve.push(sum / batches.len() as f64);
    }
    let params = HybridParams::from_vec(state.params)?;
    Ok(HybridRun {
        model: HybridModel::new(params, spec, lambda)?,
        curve,
    })
}

/// The same training loop for the plain network `ReLU(ReLU(s θ₁) θ₂) θ₃`.
/// Returns `[θ₁, θ₂, θ₃]` and the loss curve.
pub fn train_mlp(
    theta: [PointSet; 3],
    states: &PointSet,
    targets: &PointSet,
    config: &HybridConfig,
) -> Result<(Vec<PointSet>, Vec<f64>)> {
    check_regression(config, states, targets)?;
    let mut state = TrainState::new(theta.to_vec(), config.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let batches = super::epoch_batches(states.nrows(), config.batch, &mut rng);
        let mut sum = 0.0;
        for batch in &batches {
            let s = states.select_rows(batch);
            let t = targets.select_rows(batch);
            let p = &state.params;
            let pred = mlp_forward(&p[0], &p[1], &p[2], &s)?;
            let (value, upstream) = loss_and_grad(config.loss, &pred, Targets::Values(&t))?;
            if !value.is_finite() {
                return Err(Error::Training {
                    step: state.step() + 1,
                    reason: format!("loss diverged in epoch {epoch}"),
                });
            }
            let grads = mlp_backward([&p[0], &p[1], &p[2]], &s, &upstream);
            sum += value;
            state.adamw_step(&grads)?;
        }
        curve.push(sum / batches.len() as f64);
    }
    Ok((state.params, curve))
}
