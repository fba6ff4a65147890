//! Monotone first-order minimizers shared by the MLE and the RBM trainers:
//! gradient descent with an adaptive (grow-on-success, halve-on-failure) step,
//! and limited-memory BFGS with a backtracking line search. Both accept only
//! steps that do not increase the loss.

use serde::{Deserialize, Serialize};

/// A smooth objective over a flat parameter vector.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;
    fn value_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GradientDescent,
    #[default]
    Lbfgs,
}

#[derive(Clone, Debug)]
pub struct DescentConfig {
    pub method: Method,
    /// Curvature pairs kept by L-BFGS.
    pub memory: usize,
    pub max_iters: usize,
    /// Stop after `patience` consecutive accepted steps improving by less than this.
    pub tol: f64,
    pub patience: usize,
    pub initial_step: f64,
    pub max_step: f64,
    pub grow: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Record the loss every this many iterations (0 disables the trace).
    pub trace_every: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            method: Method::Lbfgs,
            memory: 10,
            max_iters: 20_000,
            tol: 1e-9,
            patience: 10,
            initial_step: 0.05,
            max_step: 1e3,
            grow: 1.1,
            shrink: 0.5,
            max_backtracks: 60,
            trace_every: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DescentReport {
    pub x: Vec<f64>,
    pub loss: f64,
    pub iters: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    /// Set if the objective produced a non-finite value at the start.
    pub non_finite: bool,
}

pub fn minimize<F: Objective + ?Sized>(f: &F, x0: Vec<f64>, cfg: &DescentConfig) -> DescentReport {
    let mut x = x0;
    let (mut loss, mut grad) = f.value_and_grad(&x);
    let mut trace = Vec::new();
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return DescentReport {
            x,
            loss,
            iters: 0,
            converged: false,
            trace,
            non_finite: true,
        };
    }
    if cfg.trace_every > 0 {
        trace.push(loss);
    }
    if cfg.method == Method::Lbfgs {
        return lbfgs(f, x, loss, grad, trace, cfg);
    }
    let mut step = cfg.initial_step;
    let mut small = 0;
    let mut converged = false;
    let mut iters = 0;
    let mut trial = vec![0.0; x.len()];
    while iters < cfg.max_iters {
        iters += 1;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            for ((t, xi), gi) in trial.iter_mut().zip(&x).zip(&grad) {
                *t = xi - step * gi;
            }
            let candidate = f.value(&trial);
            if candidate.is_finite() && candidate <= loss {
                accepted = Some(candidate);
                break;
            }
            step *= cfg.shrink;
        }
        let Some(new_loss) = accepted else {
            // No decrease along the gradient at any tried step: stationary.
            converged = true;
            break;
        };
        let improvement = loss - new_loss;
        std::mem::swap(&mut x, &mut trial);
        let (l, g) = f.value_and_grad(&x);
        loss = l;
        grad = g;
        debug_assert!(loss <= new_loss + 1e-12 * new_loss.abs().max(1.0));
        if cfg.trace_every > 0 && iters % cfg.trace_every == 0 {
            trace.push(loss);
        }
        step = (step * cfg.grow).min(cfg.max_step);
        if improvement < cfg.tol {
            small += 1;
            if small >= cfg.patience {
                converged = true;
                break;
            }
        } else {
            small = 0;
        }
        if grad.iter().all(|g| *g == 0.0) {
            converged = true;
            break;
        }
    }
    DescentReport {
        x,
        loss,
        iters,
        converged,
        trace,
        non_finite: false,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion: `−H g` from the stored curvature pairs.
fn lbfgs_direction(
    grad: &[f64],
    pairs: &std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)>,
) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

fn lbfgs<F: Objective + ?Sized>(
    f: &F,
    mut x: Vec<f64>,
    mut loss: f64,
    mut grad: Vec<f64>,
    mut trace: Vec<f64>,
    cfg: &DescentConfig,
) -> DescentReport {
    let mut pairs = std::collections::VecDeque::with_capacity(cfg.memory);
    let mut small = 0;
    let mut converged = false;
    let mut iters = 0;
    let mut trial = vec![0.0; x.len()];
    while iters < cfg.max_iters {
        iters += 1;
        if grad.iter().all(|g| *g == 0.0) {
            converged = true;
            break;
        }
        let mut dir = lbfgs_direction(&grad, &pairs);
        let mut slope = dot(&dir, &grad);
        if !(slope < 0.0) || pairs.is_empty() {
            // First iteration or lost descent: scaled steepest descent.
            dir = grad.iter().map(|g| -cfg.initial_step * g).collect();
            slope = dot(&dir, &grad);
            pairs.clear();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            for ((t, xi), di) in trial.iter_mut().zip(&x).zip(&dir) {
                *t = xi + step * di;
            }
            let candidate = f.value(&trial);
            if candidate.is_finite() && candidate <= loss + 1e-4 * step * slope {
                accepted = Some(candidate);
                break;
            }
            step *= cfg.shrink;
        }
        let Some(_) = accepted else {
            if pairs.is_empty() {
                converged = true;
                break;
            }
            // Retry from steepest descent with fresh memory.
            pairs.clear();
            continue;
        };
        let (new_loss, new_grad) = f.value_and_grad(&trial);
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let improvement = loss - new_loss;
        std::mem::swap(&mut x, &mut trial);
        loss = new_loss;
        grad = new_grad;
        if cfg.trace_every > 0 && iters % cfg.trace_every == 0 {
            trace.push(loss);
        }
        if improvement < cfg.tol {
            small += 1;
            if small >= cfg.patience {
                converged = true;
                break;
            }
        } else {
            small = 0;
        }
    }
    DescentReport {
        x,
        loss,
        iters,
        converged,
        trace,
        non_finite: false,
    }
}

/// Central finite-difference gradient.
pub fn finite_difference_grad<F: Objective + ?Sized>(f: &F, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f.value(&probe);
            probe[i] = x[i] - eps;
            let down = f.value(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `max_i |a_i − b_i| / max(max_i |a_i|, max_i |b_i|)`; zero when both vanish.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Compares the analytic gradient to central differences with step `eps`.
pub fn gradient_check<F: Objective + ?Sized>(f: &F, x: &[f64], eps: f64) -> f64 {
    let (_, g) = f.value_and_grad(x);
    max_relative_error(&g, &finite_difference_grad(f, x, eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `½ xᵀ D x − bᵀx` with diagonal `D`.
    struct Quadratic {
        d: Vec<f64>,
        b: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn value(&self, x: &[f64]) -> f64 {
            x.iter()
                .zip(&self.d)
                .zip(&self.b)
                .map(|((x, d), b)| 0.5 * d * x * x - b * x)
                .sum()
        }
        fn value_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
            let g = x
                .iter()
                .zip(&self.d)
                .zip(&self.b)
                .map(|((x, d), b)| d * x - b)
                .collect();
            (self.value(x), g)
        }
    }

    #[test]
    fn quadratic_gradient_is_exact() {
        let q = Quadratic {
            d: vec![1.0, 3.0, 10.0],
            b: vec![0.5, -1.0, 2.0],
        };
        assert!(gradient_check(&q, &[0.3, -0.7, 1.1], 1e-5) <= 1e-10);
    }

    #[test]
    fn descent_is_monotone_and_converges() {
        let q = Quadratic {
            d: vec![1.0, 3.0, 10.0],
            b: vec![0.5, -1.0, 2.0],
        };
        for method in [Method::GradientDescent, Method::Lbfgs] {
            let cfg = DescentConfig {
                method,
                tol: 1e-16,
                ..Default::default()
            };
            let r = minimize(&q, vec![0.0; 3], &cfg);
            assert!(r.converged);
            assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
            for ((x, d), b) in r.x.iter().zip(&q.d).zip(&q.b) {
                assert!((x - b / d).abs() < 1e-6, "{method:?}: {x}");
            }
        }
    }

    /// Rosenbrock valley, a standard ill-conditioned test.
    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn value(&self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn value_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
            let g0 = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            let g1 = 200.0 * (x[1] - x[0] * x[0]);
            (self.value(x), vec![g0, g1])
        }
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let cfg = DescentConfig {
            tol: 1e-20,
            initial_step: 1e-3,
            ..Default::default()
        };
        let r = minimize(&Rosenbrock, vec![-1.2, 1.0], &cfg);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(
            (r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5,
            "{:?}",
            r.x
        );
    }

    #[test]
    fn relative_error_edge_cases() {
        assert_eq!(max_relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((max_relative_error(&[1.0, 2.0], &[1.0, 2.2]) - 0.2 / 2.2).abs() < 1e-15);
    }
}
