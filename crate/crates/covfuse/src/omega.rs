//! Selection of the simplex weight vector ω by trace minimization of the
//! fused bound.
//!
//! Two stages: a coarse barycentric grid sweep over the simplex, then a
//! Nelder–Mead refinement on a softmax reparameterization of the interior.
//! The optimizer is deterministic and never returns a worse objective than
//! the best grid point.

use thiserror::Error;

use crate::fusion::{FusionError, FusionProblem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OmegaError {
    /// Every grid evaluation errored.
    #[error("omega optimization failed: {0}")]
    OptimizationFailed(String),
    #[error("invalid omega config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

/// Tuning knobs for [`optimize_omega`].
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaConfig {
    /// Coarse-search points per axis (N = 2); a barycentric lattice of the
    /// same resolution for N > 2.
    pub grid_resolution: usize,
    /// Nelder–Mead iteration cap.
    pub max_refine_iters: usize,
    /// Stop refining once the simplex objective spread falls below this.
    pub tol: f64,
}

impl Default for OmegaConfig {
    fn default() -> Self {
        OmegaConfig {
            grid_resolution: 11,
            max_refine_iters: 200,
            tol: 1e-9,
        }
    }
}

impl OmegaConfig {
    fn validate(&self) -> Result<(), OmegaError> {
        if self.grid_resolution < 2 {
            return Err(OmegaError::InvalidConfig(
                "grid_resolution must be at least 2".into(),
            ));
        }
        if self.tol <= 0.0 || self.tol.is_nan() {
            return Err(OmegaError::InvalidConfig("tol must be positive".into()));
        }
        Ok(())
    }
}

/// trace(B_F(ω)) for the selected rule.
pub fn trace_objective(problem: &FusionProblem, omega: &[f64]) -> Result<f64, FusionError> {
    let value = problem.fuse(omega)?.bound.trace();
    if !value.is_finite() {
        return Err(FusionError::DegenerateOmega(
            "non-finite bound trace".into(),
        ));
    }
    Ok(value)
}

/// Minimize trace(B_F(ω)) over the unit simplex.
///
/// Coarse grid first (ties broken toward the lexicographically smallest grid
/// point), then Nelder–Mead on softmax-parameterized weights; the refined
/// point is only accepted if it strictly improves on the grid.
pub fn optimize_omega(
    problem: &FusionProblem,
    config: &OmegaConfig,
) -> Result<(Vec<f64>, f64), OmegaError> {
    config.validate()?;
    let n = problem.n_estimates();
    if n == 0 {
        return Err(OmegaError::OptimizationFailed("no estimates".into()));
    }
    if n == 1 {
        let value = trace_objective(problem, &[1.0])?;
        return Ok((vec![1.0], value));
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut last_error = String::new();
    let steps = config.grid_resolution - 1;
    for_each_composition(n, steps, &mut |counts| {
        let omega: Vec<f64> = counts.iter().map(|&k| k as f64 / steps as f64).collect();
        match trace_objective(problem, &omega) {
            Ok(value) => {
                if best.as_ref().is_none_or(|(_, b)| value < *b) {
                    best = Some((omega, value));
                }
            }
            Err(e) => last_error = e.to_string(),
        }
    });
    let (grid_omega, grid_value) = best.ok_or(OmegaError::OptimizationFailed(last_error))?;

    let eval = |theta: &[f64]| -> f64 {
        let omega = softmax(theta);
        trace_objective(problem, &omega).map_or(f64::INFINITY, |v| v)
    };
    let theta0 = theta_of(&grid_omega);
    let refined = nelder_mead(&eval, &theta0, config.max_refine_iters, config.tol);
    if let Some((theta, value)) = refined {
        if value < grid_value {
            return Ok((softmax(&theta), value));
        }
    }
    Ok((grid_omega, grid_value))
}

/// Enumerate all n-part compositions of `total` in lexicographic order of
/// the count vector.
fn for_each_composition(n: usize, total: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(
        counts: &mut Vec<usize>,
        left: usize,
        slot: usize,
        n: usize,
        f: &mut impl FnMut(&[usize]),
    ) {
        if slot == n - 1 {
            counts.push(left);
            f(counts);
            counts.pop();
            return;
        }
        for k in 0..=left {
            counts.push(k);
            rec(counts, left - k, slot + 1, n, f);
            counts.pop();
        }
    }
    let mut counts = Vec::with_capacity(n);
    rec(&mut counts, total, 0, n, f);
}

/// Softmax over (θ₀, …, θ_{n−2}, 0).
fn softmax(theta: &[f64]) -> Vec<f64> {
    let max = theta.iter().fold(0.0_f64, |m, &t| m.max(t));
    let mut w: Vec<f64> = theta.iter().map(|&t| (t - max).exp()).collect();
    w.push((-max).exp());
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    w
}

fn theta_of(omega: &[f64]) -> Vec<f64> {
    let n = omega.len();
    let clamped: Vec<f64> = omega.iter().map(|&w| w.max(1e-6)).collect();
    let last = clamped[n - 1];
    clamped[..n - 1].iter().map(|&w| (w / last).ln()).collect()
}

/// Plain Nelder–Mead with standard coefficients. Returns the best vertex or
/// `None` when every evaluation was infinite.
fn nelder_mead(
    f: &impl Fn(&[f64]) -> f64,
    x0: &[f64],
    max_iters: usize,
    tol: f64,
) -> Option<(Vec<f64>, f64)> {
    let dim = x0.len();
    if dim == 0 {
        return None;
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += 0.5;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if !best.is_finite() {
            return None;
        }
        if worst - best < tol {
            break;
        }
        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / dim as f64;
            }
        }
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&simplex[dim].0)
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        let f_reflect = f(&reflect);
        if f_reflect < simplex[0].1 {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&reflect)
                .map(|(c, r)| c + gamma * (r - c))
                .collect();
            let f_expand = f(&expand);
            simplex[dim] = if f_expand < f_reflect {
                (expand, f_expand)
            } else {
                (reflect, f_reflect)
            };
            continue;
        }
        if f_reflect < simplex[dim - 1].1 {
            simplex[dim] = (reflect, f_reflect);
            continue;
        }
        let contract: Vec<f64> = centroid
            .iter()
            .zip(&simplex[dim].0)
            .map(|(c, w)| c + rho * (w - c))
            .collect();
        let f_contract = f(&contract);
        if f_contract < simplex[dim].1 {
            simplex[dim] = (contract, f_contract);
            continue;
        }
        let best_x = simplex[0].0.clone();
        for (x, fx) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&best_x) {
                *xi = bi + sigma * (*xi - bi);
            }
            *fx = f(x);
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    simplex.first().filter(|(_, v)| v.is_finite()).cloned()
}
