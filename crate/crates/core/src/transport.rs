//! Transport losses between point sets: the Monge assignment problem and
//! the Gromov–Monge discrepancy of pairwise distances.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::kernels::Metric;
use crate::points::PointSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Cost {
    #[default]
    SquaredEuclidean,
    Euclidean,
}

impl Cost {
    pub fn eval(self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            Cost::SquaredEuclidean => u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum(),
            Cost::Euclidean => Metric::Euclidean.eval(u, v),
        }
    }
}

/// Optimal matching `x^n ↦ y^{permutation[n]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub permutation: Vec<usize>,
    pub cost: f64,
}

/// Solves `min_σ Σ_n c(x^n, y^{σ(n)})` exactly.
pub fn monge_assign(x: &PointSet, y: &PointSet, cost: Cost) -> Result<Assignment> {
    check_dim(x.nrows(), y.nrows(), "assignment sizes")?;
    check_dim(x.ncols(), y.ncols(), "assignment dimensions")?;
    let n = x.nrows();
    let c = DMatrix::from_fn(n, n, |i, j| cost.eval(x.row(i), y.row(j)));
    let permutation = linear_sum_assignment(&c)?;
    let total = permutation.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum();
    Ok(Assignment {
        permutation,
        cost: total,
    })
}

/// Shortest-augmenting-path Hungarian method with dual potentials, `O(n³)`.
/// Returns, for each row, its assigned column.
pub fn linear_sum_assignment(cost: &DMatrix<f64>) -> Result<Vec<usize>> {
    if !cost.is_square() {
        return Err(Error::InvalidInput("assignment cost matrix must be square".into()));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("assignment costs must be finite".into()));
    }
    let n = cost.nrows();
    // 1-based rows/columns; column 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < min_v[j] {
                    min_v[j] = reduced;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    Ok(assignment)
}

/// Value and gradients of `Σ_{i,j} |d(x^i, x^j) − d(y^i, y^j)|²` with ℓ2
/// distances on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct GromovMonge {
    pub value: f64,
    pub grad_x: PointSet,
    pub grad_y: PointSet,
}

pub fn gromov_monge(x: &PointSet, y: &PointSet) -> Result<GromovMonge> {
    check_dim(x.nrows(), y.nrows(), "Gromov-Monge sizes")?;
    let n = x.nrows();
    let metric = Metric::Euclidean;
    let mut value = 0.0;
    let mut grad_x = PointSet::zeros(n, x.ncols());
    let mut grad_y = PointSet::zeros(n, y.ncols());
    for i in 0..n {
        for j in 0..i {
            let (xi, xj) = (x.row(i), x.row(j));
            let (yi, yj) = (y.row(i), y.row(j));
            let dx = metric.eval(xi, xj);
            let dy = metric.eval(yi, yj);
            let diff = dx - dy;
            // (i, j) and (j, i) both appear in the double sum
            value += 2.0 * diff * diff;
            let s = 4.0 * diff;
            metric.accumulate_grad(xi, xj, dx, s, grad_x.row_mut(i));
            metric.accumulate_grad(xj, xi, dx, s, grad_x.row_mut(j));
            metric.accumulate_grad(yi, yj, dy, -s, grad_y.row_mut(i));
            metric.accumulate_grad(yj, yi, dy, -s, grad_y.row_mut(j));
        }
    }
    Ok(GromovMonge {
        value,
        grad_x,
        grad_y,
    })
}
