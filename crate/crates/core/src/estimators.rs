//! Maximum likelihood estimation of the density matrix.
//!
//! The state is parameterized as `ρ = A†A / tr(A†A)` with an unconstrained
//! complex matrix `A`, so every iterate is positive semi-definite. The mean
//! log-likelihood `Σ_a f_a ln tr[ρ M_a]` over observed frequencies `f_a` is
//! maximized by monotone gradient ascent.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{rng_from_seed, CountsDataset};
use crate::optim::{minimize, DescentConfig, Objective};
use crate::povm::ProductPovm;
use crate::qcore::{c, ComplexMatrix, DensityMatrix, C64};

/// Floor on `tr[ρ M_a]` inside logarithms.
pub const PROB_FLOOR: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MleConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub initial_step: f64,
    pub grow: f64,
    pub shrink: f64,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            tol: 1e-10,
            initial_step: 0.1,
            grow: 1.1,
            shrink: 0.5,
            seed: 0,
            init_scale: 1e-2,
        }
    }
}

impl MleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters == 0 || !(self.initial_step > 0.0) {
            return Err(Error::Config(
                "MLE needs tol > 0, max_iters ≥ 1, step > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleReport {
    pub loglik: f64,
    pub iters: usize,
    pub converged: bool,
    pub min_eig: f64,
}

#[derive(Clone, Debug)]
pub struct MleFit {
    pub rho: DensityMatrix,
    pub report: MleReport,
}

/// Negative mean log-likelihood over `A = X + iY`, flattened as `[X | Y]`
/// row-major.
pub struct MleObjective<'a> {
    elements: &'a [ComplexMatrix],
    freqs: Vec<f64>,
    dim: usize,
}

impl<'a> MleObjective<'a> {
    pub fn new(counts: &CountsDataset, povm: &'a ProductPovm) -> Result<Self> {
        if counts.kind() != povm.kind() || counts.n_qubits() != povm.n_qubits() {
            return Err(Error::OutcomeSpaceMismatch);
        }
        let total = counts.total();
        if total <= 0.0 {
            return Err(Error::ZeroTotal);
        }
        Ok(Self {
            elements: povm.elements(),
            freqs: counts.counts().iter().map(|n| n / total).collect(),
            dim: povm.dim(),
        })
    }

    pub fn n_params(&self) -> usize {
        2 * self.dim * self.dim
    }

    pub fn unpack(&self, x: &[f64]) -> ComplexMatrix {
        let d2 = self.dim * self.dim;
        ComplexMatrix::from_fn(self.dim, |i, j| {
            let k = i * self.dim + j;
            c(x[k], x[d2 + k])
        })
    }

    pub fn pack(a: &ComplexMatrix) -> Vec<f64> {
        let entries = a.to_row_major();
        entries
            .iter()
            .map(|z| z.re)
            .chain(entries.iter().map(|z| z.im))
            .collect()
    }

    fn gram(&self, x: &[f64]) -> (ComplexMatrix, ComplexMatrix, f64) {
        let a = self.unpack(x);
        let g = &a.adjoint() * &a;
        let t = g.trace().re;
        (a, g, t)
    }
}

impl Objective for MleObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let (_, g, t) = self.gram(x);
        if !(t > 0.0) {
            return f64::INFINITY;
        }
        -self
            .elements
            .iter()
            .zip(&self.freqs)
            .filter(|(_, f)| **f > 0.0)
            .map(|(m, f)| f * (g.trace_product(m).re / t).max(PROB_FLOOR).ln())
            .sum::<f64>()
    }

    fn value_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (a, g, t) = self.gram(x);
        if !(t > 0.0) {
            return (f64::INFINITY, vec![0.0; x.len()]);
        }
        // ∂/∂A of −Σ f ln(g_a/t) is −2A(Σ f_a M_a / g_a − 𝟙/t) in the [Re | Im] layout.
        let mut r = ComplexMatrix::identity(self.dim).scale(-1.0 / t);
        let mut loss = 0.0;
        for (m, &f) in self.elements.iter().zip(&self.freqs) {
            if f <= 0.0 {
                continue;
            }
            let ga = g.trace_product(m).re;
            let p = ga / t;
            if p > PROB_FLOOR {
                loss -= f * p.ln();
                r = &r + &m.scale(f / ga);
            } else {
                loss -= f * PROB_FLOOR.ln();
            }
        }
        let grad_m = (&a * &r).scale(-2.0);
        (loss, Self::pack(&grad_m))
    }
}

fn initial_factor(dim: usize, cfg: &MleConfig) -> ComplexMatrix {
    let mut rng = rng_from_seed(cfg.seed);
    let mut a = ComplexMatrix::identity(dim);
    for i in 0..dim {
        for j in 0..dim {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            a[(i, j)] += C64::new(re, im) * cfg.init_scale;
        }
    }
    a
}

/// Fits `ρ` to counts of any product POVM (Pauli-6 data needs no inversion).
pub fn mle_fit(counts: &CountsDataset, povm: &ProductPovm, cfg: &MleConfig) -> Result<MleFit> {
    cfg.validate()?;
    let obj = MleObjective::new(counts, povm)?;
    let x0 = MleObjective::pack(&initial_factor(povm.dim(), cfg));
    let descent = DescentConfig {
        max_iters: cfg.max_iters,
        tol: cfg.tol,
        initial_step: cfg.initial_step,
        grow: cfg.grow,
        shrink: cfg.shrink,
        trace_every: 0,
        ..Default::default()
    };
    let out = minimize(&obj, x0, &descent);
    if out.non_finite {
        return Err(Error::Diverged {
            epoch: 0,
            loss: out.loss,
            snapshot: out.x,
        });
    }
    let a = obj.unpack(&out.x);
    let rho = DensityMatrix::normalized(&a.adjoint() * &a)?;
    let loglik = counts
        .counts()
        .iter()
        .zip(povm.elements())
        .filter(|(n, _)| **n > 0.0)
        .map(|(n, m)| n * rho.expectation(m).max(PROB_FLOOR).ln())
        .sum();
    let min_eig = rho.min_eigenvalue();
    Ok(MleFit {
        rho,
        report: MleReport {
            loglik,
            iters: out.iters,
            converged: out.converged,
            min_eig,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{expected_counts, simulate_experiment, NoiseModel, ShotNoise};
    use crate::optim::gradient_check;
    use crate::povm::{dual_frame, linear_reconstruct, PovmKind};
    use crate::qcore::{bell_state, fidelity, random_density_matrix};

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(1);
        for kind in [PovmKind::Pauli4, PovmKind::Tetra, PovmKind::Pauli6] {
            let povm = ProductPovm::new(kind, 2).unwrap();
            let rho = random_density_matrix(4, &mut rng);
            let counts = expected_counts(&rho, &povm, 1000.0).unwrap();
            let obj = MleObjective::new(&counts, &povm).unwrap();
            for _ in 0..3 {
                let x: Vec<f64> = (0..obj.n_params())
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let err = gradient_check(&obj, &x, 1e-5);
                assert!(err < 1e-6, "{kind}: {err}");
            }
        }
    }

    #[test]
    fn recovers_bell_state() {
        let povm = ProductPovm::new(PovmKind::Pauli4, 2).unwrap();
        let bell = bell_state().projector();
        let counts = expected_counts(&bell, &povm, 1e6).unwrap();
        let fit = mle_fit(&counts, &povm, &MleConfig::default()).unwrap();
        let f = fidelity(&fit.rho, &bell).unwrap();
        assert!(f >= 0.999, "fidelity {f}");
    }

    #[test]
    fn uniform_data_gives_maximally_mixed() {
        let povm = ProductPovm::new(PovmKind::Tetra, 2).unwrap();
        let mixed = DensityMatrix::maximally_mixed(4).unwrap();
        let counts = expected_counts(&mixed, &povm, 1e5).unwrap();
        let fit = mle_fit(&counts, &povm, &MleConfig::default()).unwrap();
        assert!(fit.rho.matrix().max_abs_diff(mixed.matrix()) < 1e-4);
    }

    #[test]
    fn stays_physical_where_linear_inversion_fails() {
        let rho = DensityMatrix::werner(&bell_state(), 0.97).unwrap();
        let povm = ProductPovm::new(PovmKind::Pauli4, 2).unwrap();
        let frame = dual_frame(&povm).unwrap();
        let mut seen_negative = false;
        for seed in 0..5 {
            let noise = NoiseModel::new(0.035, 100 + seed).unwrap();
            let sim = simulate_experiment(
                &rho,
                PovmKind::Pauli4,
                60_000,
                &noise,
                ShotNoise::Multinomial,
                seed,
            )
            .unwrap();
            let p = crate::measure::counts_to_distribution(&sim.counts).unwrap();
            seen_negative |= linear_reconstruct(&p, &frame).unwrap().min_eigenvalue < 0.0;
            let fit = mle_fit(&sim.counts, &povm, &MleConfig::default()).unwrap();
            assert!(fit.report.min_eig >= -1e-12);
            assert!((fit.rho.trace() - 1.0).abs() < 1e-12);
        }
        assert!(seen_negative);
    }

    #[test]
    fn invariant_to_count_rescaling() {
        let mut rng = rng_from_seed(2);
        let povm = ProductPovm::new(PovmKind::Tetra, 2).unwrap();
        let rho = random_density_matrix(4, &mut rng);
        let counts = crate::measure::sample_outcomes(&rho, &povm, 5000, 3).unwrap();
        let cfg = MleConfig::default();
        let a = mle_fit(&counts, &povm, &cfg).unwrap();
        let b = mle_fit(&counts.rescaled(7.5), &povm, &cfg).unwrap();
        assert!(a.rho.matrix().max_abs_diff(b.rho.matrix()) < 1e-6);
        assert!((b.report.loglik / a.report.loglik - 7.5).abs() < 1e-6);
    }

    #[test]
    fn log_likelihood_non_decreasing() {
        let povm = ProductPovm::new(PovmKind::Pauli4, 2).unwrap();
        let rho = DensityMatrix::werner(&bell_state(), 0.8).unwrap();
        let counts = crate::measure::sample_outcomes(&rho, &povm, 10_000, 9).unwrap();
        let obj = MleObjective::new(&counts, &povm).unwrap();
        let cfg = MleConfig::default();
        let x0 = MleObjective::pack(&initial_factor(4, &cfg));
        let out = minimize(
            &obj,
            x0,
            &DescentConfig {
                max_iters: 2000,
                ..Default::default()
            },
        );
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rejects_mismatched_povm() {
        let povm4 = ProductPovm::new(PovmKind::Pauli4, 2).unwrap();
        let povmt = ProductPovm::new(PovmKind::Tetra, 2).unwrap();
        let counts = expected_counts(&bell_state().projector(), &povm4, 10.0).unwrap();
        assert!(matches!(
            mle_fit(&counts, &povmt, &MleConfig::default()),
            Err(Error::OutcomeSpaceMismatch)
        ));
    }
}
