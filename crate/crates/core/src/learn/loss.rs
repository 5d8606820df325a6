use crate::error::{check_dim, Error, Result};
use crate::points::PointSet;

/// Transition point of the smooth-ℓ1 (Huber) loss.
pub const SMOOTH_L1_BETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    Mse,
    /// Softmax cross-entropy on logits.
    CrossEntropy,
    SmoothL1,
}

impl LossKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mse" => Ok(LossKind::Mse),
            "ce" | "cross-entropy" => Ok(LossKind::CrossEntropy),
            "smooth-l1" | "huber" => Ok(LossKind::SmoothL1),
            other => Err(Error::InvalidInput(format!("unknown loss {other:?}"))),
        }
    }
}

/// Loss plus an optional Gromov–Monge regularizer on the kernel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossSpec {
    pub kind: LossKind,
    pub gm_weight: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// Integer class labels, one per row.
    Labels(&'a [usize]),
    /// Dense targets with the same shape as the predictions.
    Values(&'a PointSet),
}

impl Targets<'_> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels(l) => l.len(),
            Targets::Values(v) => v.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Mean over rows of the per-sample loss, with its gradient with respect
/// to the predictions.
pub fn loss_and_grad(kind: LossKind, predictions: &PointSet, targets: Targets<'_>) -> Result<(f64, PointSet)> {
    let (p, c) = (predictions.nrows(), predictions.ncols());
    check_dim(p, targets.len(), "loss targets")?;
    if p == 0 {
        return Ok((0.0, PointSet::zeros(0, c)));
    }
    let dense;
    let values = match (kind, targets) {
        (LossKind::CrossEntropy, Targets::Labels(labels)) => {
            return cross_entropy(predictions, labels);
        }
        (LossKind::CrossEntropy, Targets::Values(_)) => {
            return Err(Error::InvalidInput("cross-entropy needs integer labels".into()));
        }
        (_, Targets::Labels(labels)) => {
            dense = PointSet::one_hot(labels, c)?;
            &dense
        }
        (_, Targets::Values(v)) => v,
    };
    check_dim(c, values.ncols(), "loss target columns")?;
    let scale = 1.0 / p as f64;
    let mut grad = PointSet::zeros(p, c);
    let mut total = 0.0;
    for ((g, a), b) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(predictions.as_slice())
        .zip(values.as_slice())
    {
        let r = a - b;
        match kind {
            LossKind::Mse => {
                total += r * r;
                *g = 2.0 * r * scale;
            }
            LossKind::SmoothL1 => {
                if r.abs() < SMOOTH_L1_BETA {
                    total += 0.5 * r * r / SMOOTH_L1_BETA;
                    *g = r / SMOOTH_L1_BETA * scale;
                } else {
                    total += r.abs() - 0.5 * SMOOTH_L1_BETA;
                    *g = r.signum() * scale;
                }
            }
            LossKind::CrossEntropy => unreachable!(),
        }
    }
    Ok((total * scale, grad))
}

fn cross_entropy(logits: &PointSet, labels: &[usize]) -> Result<(f64, PointSet)> {
    let (p, c) = (logits.nrows(), logits.ncols());
    let scale = 1.0 / p as f64;
    let mut grad = PointSet::zeros(p, c);
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(Error::InvalidInput(format!(
                "label {label} at row {i} outside [0, {c})"
            )));
        }
        let row = logits.row(i);
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - top).exp()).sum();
        let log_z = top + sum.ln();
        total += log_z - row[label];
        for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
            let prob = (row[j] - log_z).exp();
            *g = (prob - if j == label { 1.0 } else { 0.0 }) * scale;
        }
    }
    Ok((total * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_cost_ln_c() {
        let logits = PointSet::from_fn(3, 10, |_, _| 0.7);
        let (l, _) = loss_and_grad(LossKind::CrossEntropy, &logits, Targets::Labels(&[0, 4, 9])).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mse_minimum() {
        let y = PointSet::from_fn(4, 2, |i, j| (i * 2 + j) as f64);
        let (l, g) = loss_and_grad(LossKind::Mse, &y, Targets::Values(&y)).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn bad_labels_rejected() {
        let logits = PointSet::zeros(2, 3);
        assert!(loss_and_grad(LossKind::CrossEntropy, &logits, Targets::Labels(&[0, 3])).is_err());
        assert!(loss_and_grad(LossKind::CrossEntropy, &logits, Targets::Labels(&[0])).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = PointSet::from_fn(5, 3, |_, _| rng.random_range(-2.0..2.0));
        let b = PointSet::from_fn(5, 3, |_, _| rng.random_range(-2.0..2.0));
        let labels = [0, 2, 1, 1, 0];
        let cases: [(LossKind, Targets); 3] = [
            (LossKind::Mse, Targets::Values(&b)),
            (LossKind::SmoothL1, Targets::Values(&b)),
            (LossKind::CrossEntropy, Targets::Labels(&labels)),
        ];
        for (kind, t) in cases {
            let (_, g) = loss_and_grad(kind, &a, t).unwrap();
            let h = 1e-6;
            let mut num = 0.0;
            let mut den = 0.0;
            for k in 0..a.as_slice().len() {
                let mut up = a.clone();
                up.as_mut_slice()[k] += h;
                let mut dn = a.clone();
                dn.as_mut_slice()[k] -= h;
                let fd = (loss_and_grad(kind, &up, t).unwrap().0 - loss_and_grad(kind, &dn, t).unwrap().0) / (2.0 * h);
                num += (fd - g.as_slice()[k]).powi(2);
                den += fd * fd;
            }
            assert!((num / den).sqrt() < 1e-5, "{kind:?}");
        }
    }
}
