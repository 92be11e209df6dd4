//! Reference computations that share no code with the crate's solvers.

#![allow(dead_code)]

use hetpool::learners::mlp::Network;

/// Euclidean projection of `v` onto `{0 ≤ a ≤ c, yᵀa = 0}` by bisection on
/// the multiplier of the equality constraint.
pub fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c)).collect() };
    let g = |mu: f64| -> f64 { at(mu).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    // g is nonincreasing in mu
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

fn objective(q: &[f64], a: &[f64]) -> f64 {
    let n = a.len();
    let mut f = 0.0;
    for i in 0..n {
        for j in 0..n {
            f += 0.5 * a[i] * a[j] * q[i * n + j];
        }
        f -= a[i];
    }
    f
}

/// Minimum of `½ aᵀQa − Σa` over the SVM dual feasible set, by accelerated
/// projected gradient with a step from a Gershgorin bound on `Q`.
pub fn svm_dual_minimum(kernel: &[f64], y: &[f64], c: f64, iterations: usize) -> (f64, Vec<f64>) {
    let n = y.len();
    let q: Vec<f64> = (0..n * n).map(|k| y[k / n] * y[k % n] * kernel[k]).collect();
    let lipschitz = (0..n)
        .map(|i| (0..n).map(|j| q[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12);
    let step = 1.0 / lipschitz;
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[i * n + j] * z[j]).sum::<f64>() - 1.0).collect();
        let v: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi - step * gi).collect();
        let next = project(&v, y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        // restart when the objective goes up
        if objective(&q, &next) > objective(&q, &a) {
            t = 1.0;
            z = a.clone();
            continue;
        }
        z = next.iter().zip(&a).map(|(n, o)| n + momentum * (n - o)).collect();
        a = next;
        t = t_next;
    }
    (objective(&q, &a), a)
}

/// Mean over rows of `½ Σ_k (o_k − [k = target])²`, from forward passes only.
pub fn mlp_loss(net: &Network, rows: &[(Vec<f64>, usize)]) -> f64 {
    let mut total = 0.0;
    for (x, t) in rows {
        for (k, o) in net.forward(x).iter().enumerate() {
            let target = if k == *t { 1.0 } else { 0.0 };
            total += 0.5 * (o - target) * (o - target);
        }
    }
    total / rows.len() as f64
}

/// Central differences of [`mlp_loss`] with respect to every weight.
pub fn mlp_numeric_gradient(net: &Network, rows: &[(Vec<f64>, usize)], eps: f64) -> Vec<f64> {
    (0..net.weights.len())
        .map(|i| {
            let mut plus = net.clone();
            plus.weights[i] += eps;
            let mut minus = net.clone();
            minus.weights[i] -= eps;
            (mlp_loss(&plus, rows) - mlp_loss(&minus, rows)) / (2.0 * eps)
        })
        .collect()
}

pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Majority vote over explicit prediction lists, ties to the lowest class.
pub fn brute_force_vote(predictions: &[usize], n_classes: usize) -> usize {
    let mut best = 0;
    let mut best_count = 0;
    for class in 0..n_classes {
        let count = predictions.iter().filter(|&&p| p == class).count();
        if count > best_count {
            best = class;
            best_count = count;
        }
    }
    best
}
