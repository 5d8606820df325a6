//! Seeded synthetic datasets.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::points::PointSet;

#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub x: PointSet,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Labeled {
    /// Splits off the first `n` rows.
    pub fn split(&self, n: usize) -> (Labeled, Labeled) {
        let n = n.min(self.x.nrows());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.x.nrows()).collect();
        let part = |idx: &[usize]| Labeled {
            x: self.x.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        };
        (part(&head), part(&tail))
    }

    pub fn one_hot(&self) -> PointSet {
        PointSet::one_hot(&self.labels, self.classes).expect("labels below class count")
    }
}

/// Isotropic Gaussian blobs around centers drawn uniformly from `[-5, 5]^dim`.
/// Labels cycle through the classes.
pub fn clusters(n: usize, classes: usize, dim: usize, spread: f64, seed: u64) -> Result<Labeled> {
    if classes == 0 || dim == 0 {
        return Err(Error::InvalidInput("clusters need at least one class and one dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = PointSet::from_fn(classes, dim, |_, _| rng.random_range(-5.0..5.0));
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let x = PointSet::from_fn(n, dim, |i, j| {
        centers[(labels[i], j)] + spread * rng.sample::<f64, _>(StandardNormal)
    });
    Ok(Labeled { x, labels, classes })
}

/// Two classes in `[-1, 1]²` split by the wavy circle
/// `r = 0.6 + 0.15 sin(3φ)`. Each label flips with probability `noise`.
pub fn nonlinear_boundary(n: usize, noise: f64, seed: u64) -> Result<Labeled> {
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::InvalidInput(format!("label noise {noise} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = PointSet::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        x.row_mut(i).copy_from_slice(&[a, b]);
        let r = f64::hypot(a, b);
        let boundary = 0.6 + 0.15 * (3.0 * b.atan2(a)).sin();
        let inside = usize::from(r < boundary);
        let flip = rng.random::<f64>() < noise;
        labels.push(if flip { 1 - inside } else { inside });
    }
    Ok(Labeled { x, labels, classes: 2 })
}

/// `y = sin(2πx) + 0.5 cos(5πx) + noise·ε` with `x` uniform in `[0, 1]`.
pub fn regression_1d(n: usize, noise: f64, seed: u64) -> (PointSet, PointSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&t| (2.0 * PI * t).sin() + 0.5 * (5.0 * PI * t).cos() + noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (PointSet::column(&xs), PointSet::column(&ys))
}

/// Uniform samples in `[0, 1]^dim`.
pub fn uniform(n: usize, dim: usize, seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointSet::from_fn(n, dim, |_, _| rng.random::<f64>())
}
