use rand::Rng;

use super::rbm::{log_sum_exp, RbmParams, VisibleLayout};
use super::{descend_with_restarts, TrainConfig, TrainMeta, TrainMode, Trained};
use crate::error::{Error, Result};
use crate::measure::{derive_seed, rng_from_seed};
use crate::optim::{gradient_check, Objective};
use crate::povm::{OutcomeDistribution, PovmKind};

/// Largest register whose `4^N` outcomes are enumerated.
pub const MAX_POVM_QUBITS: usize = 6;

/// RBM over one-hot encoded POVM outcomes (one block of 4 units per qubit).
#[derive(Clone, Debug, PartialEq)]
pub struct PovmRbmModel {
    pub kind: PovmKind,
    pub n_qubits: usize,
    pub params: RbmParams,
}

fn check_kind(kind: PovmKind) -> Result<()> {
    if kind == PovmKind::Pauli6 {
        return Err(Error::WrongKind {
            expected: PovmKind::Pauli4,
            got: kind,
        });
    }
    Ok(())
}

impl PovmRbmModel {
    pub fn layout(n_qubits: usize) -> VisibleLayout {
        VisibleLayout::OneHot {
            blocks: n_qubits,
            width: 4,
        }
    }

    pub fn zeros(kind: PovmKind, n_qubits: usize, n_hidden: usize) -> Result<Self> {
        check_kind(kind)?;
        Ok(Self {
            kind,
            n_qubits,
            params: RbmParams::zeros(Self::layout(n_qubits), n_hidden),
        })
    }

    pub fn from_params(kind: PovmKind, n_qubits: usize, params: RbmParams) -> Result<Self> {
        check_kind(kind)?;
        if params.visible != Self::layout(n_qubits) {
            return Err(Error::Format(
                "POVM model needs one one-hot block of 4 units per qubit".into(),
            ));
        }
        params.validate()?;
        Ok(Self {
            kind,
            n_qubits,
            params,
        })
    }
}

fn enumerable(n_qubits: usize) -> Result<()> {
    if n_qubits > MAX_POVM_QUBITS {
        return Err(Error::TooLarge(4usize.pow(n_qubits as u32)));
    }
    Ok(())
}

fn model_probs(params: &RbmParams, visibles: &[Vec<f64>]) -> Vec<f64> {
    let logs: Vec<f64> = visibles.iter().map(|v| params.log_weight(v)).collect();
    let log_z = log_sum_exp(&logs);
    logs.iter().map(|l| (l - log_z).exp()).collect()
}

/// Exact model distribution `Q(a)` normalized by full enumeration.
pub fn povm_rbm_distribution(m: &PovmRbmModel) -> Result<OutcomeDistribution> {
    enumerable(m.n_qubits)?;
    let probs = model_probs(&m.params, &PovmRbmModel::layout(m.n_qubits).encode_all());
    OutcomeDistribution::from_weights(m.kind, m.n_qubits, probs)
}

/// `D_KL(P ‖ Q_θ)` over the flat RBM parameters.
pub struct PovmKlObjective {
    template: RbmParams,
    visibles: Vec<Vec<f64>>,
    target: Vec<f64>,
    entropy: f64,
}

impl PovmKlObjective {
    pub fn new(data: &OutcomeDistribution, n_hidden: usize) -> Result<Self> {
        check_kind(data.kind())?;
        enumerable(data.n_qubits())?;
        let layout = PovmRbmModel::layout(data.n_qubits());
        let target = data.probs().to_vec();
        let entropy = target
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum();
        Ok(Self {
            template: RbmParams::zeros(layout, n_hidden),
            visibles: layout.encode_all(),
            target,
            entropy,
        })
    }

    pub fn n_params(&self) -> usize {
        self.template.n_params()
    }

    fn params(&self, x: &[f64]) -> RbmParams {
        let mut p = self.template.clone();
        p.set_flat(x);
        p
    }

    fn loss_from_logs(&self, logs: &[f64]) -> f64 {
        let log_z = log_sum_exp(logs);
        self.entropy
            - self
                .target
                .iter()
                .zip(logs)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, l)| p * (l - log_z))
                .sum::<f64>()
    }

    /// Exact data term `−E_P[∂ ln p̃]`.
    fn positive_phase(&self, params: &RbmParams, grad: &mut [f64]) {
        for (v, p) in self.visibles.iter().zip(&self.target) {
            if *p > 0.0 {
                params.add_log_grad(v, -p, grad);
            }
        }
    }
}

impl Objective for PovmKlObjective {
    fn value(&self, x: &[f64]) -> f64 {
        let p = self.params(x);
        let logs: Vec<f64> = self.visibles.iter().map(|v| p.log_weight(v)).collect();
        self.loss_from_logs(&logs)
    }

    fn value_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let p = self.params(x);
        let logs: Vec<f64> = self.visibles.iter().map(|v| p.log_weight(v)).collect();
        let loss = self.loss_from_logs(&logs);
        let log_z = log_sum_exp(&logs);
        let mut grad = vec![0.0; x.len()];
        self.positive_phase(&p, &mut grad);
        for (v, l) in self.visibles.iter().zip(&logs) {
            p.add_log_grad(v, (l - log_z).exp(), &mut grad);
        }
        (loss, grad)
    }
}

fn sample_index<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
}

/// Fits an RBM to a Pauli-4 or tetrahedral outcome distribution.
pub fn train_povm_rbm(
    data: &OutcomeDistribution,
    n_hidden: usize,
    cfg: &TrainConfig,
) -> Result<Trained<PovmRbmModel>> {
    cfg.validate()?;
    let obj = PovmKlObjective::new(data, n_hidden)?;
    let layout = obj.template.visible;
    let init = |seed: u64| {
        RbmParams::random(layout, n_hidden, cfg.init_std, &mut rng_from_seed(seed)).to_flat()
    };
    let (x, trace, epochs_run, converged, restart) = match cfg.mode {
        TrainMode::ExactGradient => {
            let (out, restart) = descend_with_restarts(&obj, init, cfg)?;
            (out.x, out.trace, out.iters, out.converged, restart)
        }
        TrainMode::CdK => {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, "cd-chains"));
            let (x, trace) = contrastive_divergence(&obj, init(cfg.seed), cfg, &mut rng)?;
            let n = trace.len() - 1;
            (x, trace, n, false, 0)
        }
    };
    let model = PovmRbmModel {
        kind: data.kind(),
        n_qubits: data.n_qubits(),
        params: obj.params(&x),
    };
    let final_loss = *trace.last().expect("trace starts with the initial loss");
    Ok(Trained {
        model,
        trace,
        meta: TrainMeta {
            mode: cfg.mode,
            seed: cfg.seed,
            epochs_run,
            converged,
            final_loss,
            restart,
        },
    })
}

/// Plain gradient descent with CD-k negative phase: `batch_size` chains start
/// from data samples and run `k` block-Gibbs sweeps.
fn contrastive_divergence<R: Rng + ?Sized>(
    obj: &PovmKlObjective,
    mut x: Vec<f64>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut cdf = obj.target.clone();
    for i in 1..cdf.len() {
        cdf[i] += cdf[i - 1];
    }
    let mut trace = vec![obj.value(&x)];
    let nh = obj.template.n_hidden;
    let mut h = vec![0.0; nh];
    for epoch in 1..=cfg.epochs {
        let params = obj.params(&x);
        let mut grad = vec![0.0; x.len()];
        obj.positive_phase(&params, &mut grad);
        let w = 1.0 / cfg.batch_size as f64;
        for _ in 0..cfg.batch_size {
            let mut v = obj.visibles[sample_index(&cdf, rng)].clone();
            for _ in 0..cfg.k {
                params.sample_hidden(&v, rng, &mut h);
                params.sample_visible(&h, rng, &mut v);
            }
            params.add_log_grad(&v, w, &mut grad);
        }
        let prev = x.clone();
        for (xi, g) in x.iter_mut().zip(&grad) {
            *xi -= cfg.learning_rate * g;
        }
        let loss = obj.value(&x);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss,
                snapshot: prev,
            });
        }
        trace.push(loss);
    }
    Ok((x, trace))
}

/// Finite-difference check of the exact KL gradient at the model's parameters.
pub fn povm_rbm_gradient_check(
    m: &PovmRbmModel,
    data: &OutcomeDistribution,
    eps: f64,
) -> Result<f64> {
    if data.kind() != m.kind || data.n_qubits() != m.n_qubits {
        return Err(Error::OutcomeSpaceMismatch);
    }
    let obj = PovmKlObjective::new(data, m.params.n_hidden)?;
    Ok(gradient_check(&obj, &m.params.to_flat(), eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::rng_from_seed;
    use crate::nqs::kl_divergence;
    use crate::povm::{outcome_probabilities, ProductPovm};
    use crate::qcore::{bell_state, random_density_matrix};

    fn bell_pauli4() -> OutcomeDistribution {
        let povm = ProductPovm::new(PovmKind::Pauli4, 2).unwrap();
        outcome_probabilities(&bell_state().projector(), &povm).unwrap()
    }

    #[test]
    fn zero_parameters_give_uniform() {
        let m = PovmRbmModel::zeros(PovmKind::Pauli4, 2, 3).unwrap();
        let q = povm_rbm_distribution(&m).unwrap();
        assert!(q.probs().iter().all(|p| (p - 1.0 / 16.0).abs() < 1e-15));
    }

    #[test]
    fn visible_bias_tilts_one_block() {
        let mut m = PovmRbmModel::zeros(PovmKind::Tetra, 2, 2).unwrap();
        let d = 0.8;
        m.params.visible_bias[4 + 2] = d;
        let q = povm_rbm_distribution(&m).unwrap();
        let soft = [1.0, 1.0, d.exp(), 1.0].map(|w| w / (3.0 + d.exp()));
        for a in 0..4 {
            for b in 0..4 {
                assert!((q.prob(&[a, b]) - 0.25 * soft[b]).abs() < 1e-15);
            }
        }
        // Brute force over all (a, h) pairs with random couplings.
        let mut rng = rng_from_seed(3);
        let m = PovmRbmModel::from_params(
            PovmKind::Tetra,
            2,
            RbmParams::random(PovmRbmModel::layout(2), 2, 0.8, &mut rng),
        )
        .unwrap();
        let q = povm_rbm_distribution(&m).unwrap();
        let p = &m.params;
        let mut weights = [0.0; 16];
        for (a, w) in weights.iter_mut().enumerate() {
            let v = PovmRbmModel::layout(2).encode(a);
            for hidx in 0..4usize {
                let h = [(hidx & 1) as f64, (hidx >> 1) as f64];
                let mut e = 0.0;
                for i in 0..8 {
                    e += p.visible_bias[i] * v[i];
                    for (j, hj) in h.iter().enumerate() {
                        e += p.weights[j * 8 + i] * v[i] * hj;
                    }
                }
                e += p.hidden_bias[0] * h[0] + p.hidden_bias[1] * h[1];
                *w += e.exp();
            }
        }
        let z: f64 = weights.iter().sum();
        for (a, w) in weights.iter().enumerate() {
            assert!((q.probs()[a] - w / z).abs() < 1e-14);
        }
    }

    #[test]
    fn learns_bell_distribution() {
        let data = bell_pauli4();
        let out = train_povm_rbm(
            &data,
            3,
            &TrainConfig {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let q = povm_rbm_distribution(&out.model).unwrap();
        assert!((q.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let kl = kl_divergence(&data, &q).unwrap();
        assert!(kl <= 1e-3, "KL {kl}");
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!((out.meta.final_loss - kl).abs() < 1e-9);
    }

    #[test]
    fn own_distribution_is_a_fixed_point() {
        let mut rng = rng_from_seed(11);
        let target = PovmRbmModel::from_params(
            PovmKind::Tetra,
            2,
            RbmParams::random(PovmRbmModel::layout(2), 2, 0.5, &mut rng),
        )
        .unwrap();
        let data = povm_rbm_distribution(&target).unwrap();
        let obj = PovmKlObjective::new(&data, 2).unwrap();
        let out = crate::optim::minimize(
            &obj,
            target.params.to_flat(),
            &crate::optim::DescentConfig::default(),
        );
        assert!(out.loss <= 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(12);
        let povm = ProductPovm::new(PovmKind::Tetra, 2).unwrap();
        let data = outcome_probabilities(&random_density_matrix(4, &mut rng), &povm).unwrap();
        for _ in 0..5 {
            let m = PovmRbmModel::from_params(
                PovmKind::Tetra,
                2,
                RbmParams::random(PovmRbmModel::layout(2), 3, 0.5, &mut rng),
            )
            .unwrap();
            let err = povm_rbm_gradient_check(&m, &data, 1e-5).unwrap();
            assert!(err <= 1e-6, "{err}");
        }
    }

    #[test]
    fn contrastive_divergence_tracks_exact_training() {
        // A single hidden unit cannot represent a generic state, so both
        // estimators settle at a non-trivial KL floor.
        let mut rng = rng_from_seed(21);
        let povm = ProductPovm::new(PovmKind::Pauli4, 2).unwrap();
        let data = outcome_probabilities(&random_density_matrix(4, &mut rng), &povm).unwrap();
        let exact = train_povm_rbm(
            &data,
            1,
            &TrainConfig {
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let cd = train_povm_rbm(
            &data,
            1,
            &TrainConfig {
                mode: TrainMode::CdK,
                seed: 2,
                epochs: 3000,
                batch_size: 200,
                learning_rate: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let (e, c) = (exact.meta.final_loss, cd.meta.final_loss);
        assert!(e > 1e-4, "exact floor {e}");
        assert!(c <= 5.0 * e, "cd {c} vs exact {e}");
    }

    #[test]
    fn rejects_pauli6_and_large_registers() {
        assert!(PovmRbmModel::zeros(PovmKind::Pauli6, 2, 1).is_err());
        let p = OutcomeDistribution::uniform(PovmKind::Pauli4, 7);
        assert!(matches!(
            PovmKlObjective::new(&p, 1),
            Err(Error::TooLarge(_))
        ));
    }
}
