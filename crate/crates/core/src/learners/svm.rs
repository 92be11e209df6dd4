//! Soft-margin RBF support vector machine.
//!
//! The dual
//!
//! ```text
//! min ½ αᵀQα − Σα   s.t.  0 ≤ α ≤ C,  yᵀα = 0,   Q_ij = y_i y_j k(x_i, x_j)
//! ```
//!
//! is solved by SMO with second-order working-set selection. Multiclass
//! problems are decomposed one-vs-one.

use crate::data::{Dataset, IndexSample};
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

pub const DEFAULT_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoOptions {
    /// Stop once the maximal KKT violation `m(α) − M(α)` drops below this.
    pub tolerance: f64,
    /// Give up after `stall_factor · n` iterations without a new smallest violation.
    pub stall_factor: usize,
    /// Hard iteration cap; `None` means `max(100_000, 1000 · n)`.
    pub max_iter: Option<usize>,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions {
            tolerance: DEFAULT_TOLERANCE,
            stall_factor: 10,
            max_iter: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Offset; the decision function is `Σ α_i y_i k(x_i, x) − rho`.
    pub rho: f64,
    pub iterations: usize,
    /// Final maximal KKT violation.
    pub violation: f64,
    pub converged: bool,
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, z)| (x - z) * (x - z)).sum();
    (-gamma * d2).exp()
}

/// Dense `n × n` RBF Gram matrix over `rows`.
pub fn rbf_kernel_matrix(rows: &[&[f64]], gamma: f64) -> Vec<f64> {
    let n = rows.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = rbf(rows[i], rows[j], gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// `½ αᵀQα − Σα` for a Gram matrix and ±1 labels.
pub fn dual_objective(kernel: &[f64], y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel[i * n + j];
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

/// Solves the dual for a precomputed Gram matrix and labels in {−1, +1}.
pub fn solve_dual(kernel: &[f64], y: &[f64], c: f64, opts: &SmoOptions) -> Result<SmoSolution> {
    let n = y.len();
    if kernel.len() != n * n {
        return Err(Error::InvalidArgument("kernel matrix shape does not match labels".into()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidArgument("labels must be ±1".into()));
    }
    let max_iter = opts.max_iter.unwrap_or_else(|| (1000 * n).max(100_000));
    let stall_limit = (opts.stall_factor * n).max(1);

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut best_violation = f64::INFINITY;
    let mut since_best = 0;
    let mut violation;
    let mut converged = false;

    loop {
        // i: maximal violating index from I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            if in_up && v >= gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
        // j: second-order choice from I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = i_sel {
            let ki = &kernel[i * n..(i + 1) * n];
            for t in 0..n {
                let in_low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
                if !in_low {
                    continue;
                }
                let v = y[t] * grad[t];
                gmax2 = gmax2.max(v);
                let b = gmax + v;
                if b > 0.0 {
                    let a = ki[i] + kernel[t * n + t] - 2.0 * ki[t];
                    let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        violation = gmax + gmax2;
        if !violation.is_finite() {
            // one of the index sets is empty: nothing left to move
            violation = 0.0;
        }
        if violation < opts.tolerance {
            converged = true;
            break;
        }
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            converged = true;
            break;
        };
        if violation < best_violation {
            best_violation = violation;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > stall_limit {
                break;
            }
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let kii = kernel[i * n + i];
        let kjj = kernel[j * n + j];
        let kij = kernel[i * n + j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let quad = (kii + kjj - 2.0 * kij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (kii + kjj - 2.0 * kij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = ((ai - old_i) * y[i], (aj - old_j) * y[j]);
        let ki = &kernel[i * n..(i + 1) * n];
        let kj = &kernel[j * n..(j + 1) * n];
        for t in 0..n {
            grad[t] += y[t] * (ki[t] * di + kj[t] * dj);
        }
    }

    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (upper + lower) / 2.0
    };
    Ok(SmoSolution {
        alpha,
        rho,
        iterations,
        violation,
        converged,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Machine {
    /// Separates `positive` (decision ≥ 0) from `negative`.
    Kernel {
        positive: usize,
        negative: usize,
        support: Vec<f64>,
        coef: Vec<f64>,
        rho: f64,
    },
    /// Only one class of the pair was present in the sample.
    Constant { class: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub gamma: f64,
    pub c: f64,
    pub n_features: usize,
    pub n_classes: usize,
    pub machines: Vec<Machine>,
    pub converged: bool,
}

impl Machine {
    pub fn decision(&self, x: &[f64], gamma: f64, d: usize) -> f64 {
        match self {
            Machine::Kernel {
                support, coef, rho, ..
            } => {
                support
                    .chunks_exact(d)
                    .zip(coef)
                    .map(|(sv, a)| a * rbf(sv, x, gamma))
                    .sum::<f64>()
                    - rho
            }
            Machine::Constant { .. } => 0.0,
        }
    }

    pub fn predict(&self, x: &[f64], gamma: f64, d: usize) -> usize {
        match self {
            Machine::Kernel {
                positive, negative, ..
            } => {
                if self.decision(x, gamma, d) >= 0.0 {
                    *positive
                } else {
                    *negative
                }
            }
            Machine::Constant { class } => *class,
        }
    }
}

impl SvmModel {
    pub fn fit(ds: &Dataset, sample: &IndexSample, c: f64, gamma: f64, opts: &SmoOptions) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        if let Some(&bad) = sample.indices.iter().find(|&&i| i >= ds.n_instances()) {
            return Err(Error::InvalidArgument(format!("sample index {bad} out of range")));
        }
        let k = ds.n_classes();
        let d = ds.n_features();
        let mut present = vec![false; k];
        for &i in &sample.indices {
            present[ds.label(i)] = true;
        }
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::SingleClassSample);
        }
        let mut machines = Vec::new();
        let mut converged = true;
        for a in 0..k {
            for b in a + 1..k {
                match (present[a], present[b]) {
                    (true, true) => {}
                    (true, false) => {
                        machines.push(Machine::Constant { class: a });
                        continue;
                    }
                    (false, true) => {
                        machines.push(Machine::Constant { class: b });
                        continue;
                    }
                    (false, false) => continue,
                }
                let idx: Vec<usize> = sample
                    .indices
                    .iter()
                    .copied()
                    .filter(|&i| ds.label(i) == a || ds.label(i) == b)
                    .collect();
                let rows: Vec<&[f64]> = idx.iter().map(|&i| ds.row(i)).collect();
                let y: Vec<f64> = idx
                    .iter()
                    .map(|&i| if ds.label(i) == a { 1.0 } else { -1.0 })
                    .collect();
                let kernel = rbf_kernel_matrix(&rows, gamma);
                let sol = solve_dual(&kernel, &y, c, opts)?;
                converged &= sol.converged;
                let mut support = Vec::new();
                let mut coef = Vec::new();
                for (t, &al) in sol.alpha.iter().enumerate() {
                    if al > 0.0 {
                        support.extend_from_slice(rows[t]);
                        coef.push(al * y[t]);
                    }
                }
                machines.push(Machine::Kernel {
                    positive: a,
                    negative: b,
                    support,
                    coef,
                    rho: sol.rho,
                });
            }
        }
        Ok(SvmModel {
            gamma,
            c,
            n_features: d,
            n_classes: k,
            machines,
            converged,
        })
    }

    /// One-vs-one majority vote, ties to the lowest class.
    pub fn predict(&self, x: &[f64]) -> usize {
        if let [m] = self.machines.as_slice() {
            return m.predict(x, self.gamma, self.n_features);
        }
        let mut votes = vec![0usize; self.n_classes];
        for m in &self.machines {
            votes[m.predict(x, self.gamma, self.n_features)] += 1;
        }
        super::tree::majority(&votes)
    }

    pub fn n_support(&self) -> usize {
        self.machines
            .iter()
            .map(|m| match m {
                Machine::Kernel { coef, .. } => coef.len(),
                Machine::Constant { .. } => 0,
            })
            .sum()
    }
}
