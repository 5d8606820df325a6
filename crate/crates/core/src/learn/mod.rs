//! Gradient-based training on top of the kernel regressor's VJPs.

mod hybrid;
mod loss;
mod optim;
mod readout;

pub use hybrid::{
    mlp_forward, train_hybrid, train_mlp, HybridConfig, HybridGradients, HybridModel, HybridParams, HybridRun,
};
pub use loss::{loss_and_grad, LossKind, LossSpec, Targets, SMOOTH_L1_BETA};
pub use optim::{AdamWConfig, TrainState};
pub use readout::{train_readout, Centers, ReadoutConfig, ReadoutRun};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// Shuffled minibatches of `0..n` for one epoch.
pub(crate) fn epoch_batches(n: usize, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch.max(1)).map(|c| c.to_vec()).collect()
}
