#![allow(dead_code)]

use lazykrr::continuous::BlendedModel;
use lazykrr::dense::DenseModel;
use lazykrr::kernels::{Activation, KernelSpec, Metric};
use lazykrr::learn::{loss_and_grad, HybridModel, HybridParams, LossKind, Targets};
use lazykrr::sparse::SparseModel;
use lazykrr::transport::{gromov_monge, linear_sum_assignment};
use lazykrr::PointSet;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> PointSet {
    PointSet::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn kernel_combo(i: u64) -> (Metric, Activation) {
    let metric = if i.is_multiple_of(2) { Metric::Euclidean } else { Metric::Manhattan };
    let act = if (i / 2).is_multiple_of(2) { Activation::Exponential } else { Activation::Gaussian };
    (metric, act)
}

/// Positive definite combinations only.
pub fn pd_combo(i: u64) -> (Metric, Activation) {
    [
        (Metric::Euclidean, Activation::Exponential),
        (Metric::Euclidean, Activation::Gaussian),
        (Metric::Manhattan, Activation::Exponential),
    ][(i % 3) as usize]
}

pub fn spec_for(x: &PointSet, (metric, act): (Metric, Activation)) -> KernelSpec {
    let base = KernelSpec::standard(x).unwrap();
    KernelSpec::new(metric, act).with_normalizer(base.normalizer.unwrap())
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(n));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of a scalar function of one parameter set.
pub fn fd_grad(p: &PointSet, h: f64, f: impl Fn(&PointSet) -> f64) -> PointSet {
    let mut out = PointSet::zeros(p.nrows(), p.ncols());
    let mut q = p.clone();
    for k in 0..p.as_slice().len() {
        let orig = q.as_slice()[k];
        q.as_mut_slice()[k] = orig + h;
        let up = f(&q);
        q.as_mut_slice()[k] = orig - h;
        let down = f(&q);
        q.as_mut_slice()[k] = orig;
        out.as_mut_slice()[k] = (up - down) / (2.0 * h);
    }
    out
}

pub fn dot(a: &PointSet, b: &PointSet) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Largest relative error of the dense-regressor VJPs (Y, X, Z) for one seed.
pub fn dense_vjp_error(seed: u64) -> [f64; 3] {
    let mut r = rng(seed);
    let n = r.random_range(2..=10);
    let d = r.random_range(1..=4);
    let p = r.random_range(1..=6);
    let dy = r.random_range(1..=3);
    let x = normal(&mut r, n, d);
    let y = normal(&mut r, n, dy);
    let z = normal(&mut r, p, d);
    let g = normal(&mut r, p, dy);
    let spec = spec_for(&x, pd_combo(seed));
    let lambda = 1e-3;
    let grads = DenseModel::fit(spec.clone(), x.clone(), y.clone(), lambda)
        .unwrap()
        .vjp(&z, &g)
        .unwrap();
    let value = |x: &PointSet, y: &PointSet, z: &PointSet| {
        let m = DenseModel::fit(spec.clone(), x.clone(), y.clone(), lambda).unwrap();
        dot(&m.predict(z).unwrap(), &g)
    };
    let h = 1e-6;
    let fy = fd_grad(&y, h, |q| value(&x, q, &z));
    let fx = fd_grad(&x, h, |q| value(q, &y, &z));
    let fz = fd_grad(&z, h, |q| value(&x, &y, q));
    [
        rel_err(grads.grad_y.as_slice(), fy.as_slice()),
        rel_err(grads.grad_x.as_slice(), fx.as_slice()),
        rel_err(grads.grad_z.as_slice(), fz.as_slice()),
    ]
}

/// Largest relative error of the Gromov–Monge gradients for one seed.
pub fn gm_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(2..=10);
    let (dx, dy) = (r.random_range(1..=4), r.random_range(1..=4));
    let x = normal(&mut r, n, dx);
    let y = normal(&mut r, n, dy);
    let gm = gromov_monge(&x, &y).unwrap();
    let h = 1e-6;
    let fx = fd_grad(&x, h, |q| gromov_monge(q, &y).unwrap().value);
    let fy = fd_grad(&y, h, |q| gromov_monge(&x, q).unwrap().value);
    rel_err(gm.grad_x.as_slice(), fx.as_slice()).max(rel_err(gm.grad_y.as_slice(), fy.as_slice()))
}

/// Relative error per hybrid parameter set, in `HybridParams::NAMES` order.
pub fn hybrid_grad_error(seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let (s, l, a, b, p) = (3, 5, 2, 4, 6);
    let states = normal(&mut r, 12, s);
    let spec = spec_for(&states, pd_combo(seed));
    let mut model = HybridModel::init(&states, l, a, b, spec, seed).unwrap();
    model.params.y1 = normal(&mut r, b, l);
    model.params.y3 = normal(&mut r, b, a);
    model.lambda = 1e-3;
    let z = normal(&mut r, p, s);
    let g = normal(&mut r, p, a);
    let (_, grads) = model.backward(&z, &g).unwrap();
    let base = model.params.to_vec();
    (0..7)
        .map(|k| {
            let fd = fd_grad(&base[k], 1e-6, |q| {
                let mut v = base.clone();
                v[k] = q.clone();
                let mut m = model.clone();
                m.params = HybridParams::from_vec(v).unwrap();
                dot(&m.forward(&z).unwrap(), &g)
            });
            rel_err(grads.0[k].as_slice(), fd.as_slice())
        })
        .collect()
}

/// Relative error of the full readout graph (centers, targets → cross-entropy).
pub fn readout_graph_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(2..=8);
    let tx = normal(&mut r, n, 2);
    let ty = normal(&mut r, n, 3);
    let z = normal(&mut r, 5, 2);
    let labels: Vec<usize> = (0..5).map(|_| r.random_range(0..3)).collect();
    let spec = spec_for(&tx, pd_combo(seed));
    let lambda = 1e-3;
    let loss = |tx: &PointSet, ty: &PointSet| {
        let m = DenseModel::fit(spec.clone(), tx.clone(), ty.clone(), lambda).unwrap();
        loss_and_grad(LossKind::CrossEntropy, &m.predict(&z).unwrap(), Targets::Labels(&labels))
            .unwrap()
            .0
    };
    let m = DenseModel::fit(spec.clone(), tx.clone(), ty.clone(), lambda).unwrap();
    let (_, up) = loss_and_grad(LossKind::CrossEntropy, &m.predict(&z).unwrap(), Targets::Labels(&labels)).unwrap();
    let g = m.vjp(&z, &up).unwrap();
    let fx = fd_grad(&tx, 1e-6, |q| loss(q, &ty));
    let fy = fd_grad(&ty, 1e-6, |q| loss(&tx, q));
    rel_err(g.grad_x.as_slice(), fx.as_slice()).max(rel_err(g.grad_y.as_slice(), fy.as_slice()))
}

/// Smallest achievable k-center radius by exhaustive search.
pub fn optimal_k_center(x: &PointSet, k: usize, metric: Metric) -> f64 {
    let n = x.nrows();
    let mut best = f64::INFINITY;
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        let radius = (0..n)
            .map(|i| subset.iter().map(|&s| metric.eval(x.row(i), x.row(s))).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        best = best.min(radius);
        // next k-combination in lexicographic order
        let mut i = k;
        while i > 0 && subset[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        subset[i - 1] += 1;
        for j in i..k {
            subset[j] = subset[j - 1] + 1;
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// `(solver cost, brute-force minimum)` on a random instance.
pub fn lsap_vs_brute(seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let n = r.random_range(1..=7);
    let c = DMatrix::from_fn(n, n, |_, _| r.random_range(-5.0..10.0));
    let assign = linear_sum_assignment(&c).unwrap();
    let cost = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum::<f64>();
    let brute = permutations(n).iter().map(|p| cost(p)).fold(f64::INFINITY, f64::min);
    (cost(&assign), brute)
}

/// GM value after applying a random rotation, reflection and shift to `Y = X`.
pub fn gm_rigid_value(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(2..=12);
    let d = r.random_range(1..=4);
    let x = normal(&mut r, n, d);
    let q = normal(&mut r, d, d).to_matrix().qr().q();
    let shift: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
    let mut y = PointSet::from_matrix(&(x.to_matrix() * q));
    for i in 0..n {
        for (v, s) in y.row_mut(i).iter_mut().zip(&shift) {
            *v += s;
        }
    }
    gromov_monge(&x, &y).unwrap().value
}

/// Worst excess of `|f_k(z) − f(z)| − ε(z)‖f‖` over a 200-point grid, for
/// `f` a random combination of kernel translates, plus the worst violation
/// of `ε^σ ≥ ε`.
pub fn error_bound_excess(seed: u64, sparse: bool) -> (f64, f64) {
    let mut r = rng(seed);
    let n = r.random_range(20..=60);
    let x = PointSet::from_fn(n, 2, |_, _| r.random_range(-1.0..1.0));
    let spec = spec_for(&x, pd_combo(seed));
    let nu = r.random_range(1..=8);
    let u = PointSet::from_fn(nu, 2, |_, _| r.random_range(-1.2..1.2));
    let c: Vec<f64> = (0..nu).map(|_| r.sample(StandardNormal)).collect();
    let f = |p: &[f64]| (0..nu).map(|j| c[j] * spec.eval(p, u.row(j)).unwrap()).sum::<f64>();
    let kuu = spec.gram(&u, &u).unwrap();
    let cv = nalgebra::DVector::from_column_slice(&c);
    let fnorm = (cv.transpose() * kuu * &cv)[(0, 0)].max(0.0).sqrt();
    let y = PointSet::from_fn(n, 1, |i, _| f(x.row(i)));
    let grid = PointSet::from_fn(200, 2, |k, j| {
        let (a, b) = (k % 20, k / 20);
        if j == 0 {
            -1.1 + 2.2 * a as f64 / 19.0
        } else {
            -1.1 + 2.2 * b as f64 / 9.0
        }
    });
    let lambda = 1e-9;
    let dense = DenseModel::fit(spec.clone(), x.clone(), y.clone(), lambda).unwrap();
    let eps_dense = dense.power_function(&grid).unwrap();
    let (pred, eps) = if sparse {
        let m = SparseModel::build(spec.clone(), x, y, r.random_range(3..=12), lambda).unwrap();
        (m.predict(&grid).unwrap(), m.local_error(&grid).unwrap())
    } else {
        (dense.predict(&grid).unwrap(), eps_dense.clone())
    };
    let mut excess = f64::NEG_INFINITY;
    let mut mono = 0.0_f64;
    for k in 0..200 {
        let err = (pred[(k, 0)] - f(grid.row(k))).abs();
        excess = excess.max(err - eps[k] * fnorm);
        mono = mono.max(eps_dense[k] - eps[k]);
    }
    (excess, mono)
}

/// Largest jump between consecutive samples of a 1-D sweep.
pub fn max_jump(pred: &PointSet) -> f64 {
    (1..pred.nrows())
        .map(|i| (pred[(i, 0)] - pred[(i - 1, 0)]).abs())
        .fold(0.0, f64::max)
}

/// `(blended max jump, sparse max jump)` on a random 1-D sweep.
/// Training inputs are jittered grid points so no two nearly coincide.
pub fn jump_pair(seed: u64, kernel: Activation, blend: usize, weight: Activation, noise: f64) -> (f64, f64) {
    let mut r = rng(seed);
    let n = r.random_range(30..=80);
    let bandwidth = r.random_range(3..=8);
    let x = PointSet::from_fn(n, 1, |i, _| (i as f64 + r.random_range(0.2..0.8)) / n as f64);
    let y = PointSet::from_fn(n, 1, |i, _| (6.0 * x[(i, 0)]).sin() + noise * r.sample::<f64, _>(StandardNormal));
    let spec = spec_for(&x, (Metric::Euclidean, kernel));
    let (lo, hi) = (x[(0, 0)], x[(n - 1, 0)]);
    let sweep = PointSet::from_fn(20000, 1, |i, _| lo + (hi - lo) * i as f64 / 19999.0);
    let sparse = SparseModel::build(spec.clone(), x.clone(), y.clone(), bandwidth, 1e-9).unwrap();
    let sk = max_jump(&sparse.predict(&sweep).unwrap());
    let blended = BlendedModel::new(SparseModel::build(spec, x, y, bandwidth, 1e-9).unwrap(), blend, weight).unwrap();
    (max_jump(&blended.predict(&sweep).unwrap()), sk)
}
