//! Neural-network quantum states: an RBM over POVM outcomes, and RBM
//! wavefunctions (purification, pure, positive-real) trained on basis data.

mod povm_rbm;
mod purification;
pub mod rbm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::derive_seed;
use crate::optim::{minimize, DescentConfig, DescentReport, Method, Objective};
use crate::povm::{OutcomeDistribution, PovmKind};

pub use povm_rbm::{
    povm_rbm_distribution, povm_rbm_gradient_check, train_povm_rbm, PovmKlObjective, PovmRbmModel,
};
pub use purification::{
    basis_distribution, mean_basis_kl, purification_gradient_check, purification_wavefunction,
    rho_from_model, rotated_born_distribution, train_positive_real, train_pure, train_purification,
    BasisKlObjective, PurificationArch, PurificationModel,
};
pub use rbm::{RbmParams, VisibleLayout};

/// Upper bound on enumerated configurations in exact mode.
pub const MAX_ENUMERATION: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    ExactGradient,
    CdK,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Gibbs sweeps per CD estimate.
    pub k: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Negative-phase chains per CD step; ignored in exact mode.
    pub batch_size: usize,
    pub seed: u64,
    pub tol: f64,
    pub init_std: f64,
    /// Minimizer used in exact mode.
    pub optimizer: Method,
    /// Independent initializations in exact mode; the lowest final loss wins.
    pub restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::ExactGradient,
            k: 10,
            learning_rate: 0.05,
            epochs: 20_000,
            batch_size: 1024,
            seed: 0,
            tol: 1e-9,
            init_std: 0.01,
            optimizer: Method::Lbfgs,
            restarts: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0)
            || self.epochs == 0
            || !(self.tol > 0.0)
            || !(self.init_std >= 0.0)
        {
            return Err(Error::Config(
                "training needs learning_rate > 0, epochs ≥ 1, tol > 0".into(),
            ));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be ≥ 1".into()));
        }
        if self.mode == TrainMode::CdK && (self.k == 0 || self.batch_size == 0) {
            return Err(Error::Config(
                "CD training needs k ≥ 1 and batch_size ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub mode: TrainMode,
    pub seed: u64,
    pub epochs_run: usize,
    pub converged: bool,
    pub final_loss: f64,
    /// Index of the initialization that produced the model.
    #[serde(default)]
    pub restart: usize,
}

/// Seed of initialization `k`; the first uses the configured seed itself.
pub(crate) fn restart_seed(seed: u64, k: usize) -> u64 {
    if k == 0 {
        seed
    } else {
        derive_seed(seed, &format!("restart-{k}"))
    }
}

/// Runs the exact-mode minimizer from `cfg.restarts` initializations and
/// keeps the lowest final loss (earliest on ties).
pub(crate) fn descend_with_restarts<F: Objective>(
    obj: &F,
    init: impl Fn(u64) -> Vec<f64>,
    cfg: &TrainConfig,
) -> Result<(DescentReport, usize)> {
    let descent = DescentConfig {
        method: cfg.optimizer,
        max_iters: cfg.epochs,
        tol: cfg.tol,
        initial_step: cfg.learning_rate,
        ..Default::default()
    };
    let mut best: Option<(DescentReport, usize)> = None;
    for k in 0..cfg.restarts {
        let out = minimize(obj, init(restart_seed(cfg.seed, k)), &descent);
        if out.non_finite {
            return Err(Error::Diverged {
                epoch: 0,
                loss: out.loss,
                snapshot: out.x,
            });
        }
        if best.as_ref().is_none_or(|(b, _)| out.loss < b.loss) {
            best = Some((out, k));
        }
    }
    Ok(best.expect("at least one restart"))
}

/// A trained model with its per-epoch loss.
#[derive(Clone, Debug)]
pub struct Trained<M> {
    pub model: M,
    pub trace: Vec<f64>,
    pub meta: TrainMeta,
}

impl<M> Trained<M> {
    /// `epoch,loss` rows.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (i, l) in self.trace.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

/// `Σ p ln(p/q)`; `+∞` when `q` vanishes where `p` does not.
pub fn kl_divergence(p: &OutcomeDistribution, q: &OutcomeDistribution) -> Result<f64> {
    if !p.same_space(q) {
        return Err(Error::OutcomeSpaceMismatch);
    }
    Ok(kl_slices(p.probs(), q.probs()))
}

pub(crate) fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, q)| {
            if *q > 0.0 {
                p * (p / q).ln()
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ansatz {
    Povm,
    Purification,
    Pure,
    PositiveReal,
}

impl Ansatz {
    pub const ALL: [Ansatz; 4] = [
        Ansatz::Povm,
        Ansatz::Purification,
        Ansatz::Pure,
        Ansatz::PositiveReal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ansatz::Povm => "povm",
            Ansatz::Purification => "purification",
            Ansatz::Pure => "pure",
            Ansatz::PositiveReal => "positive_real",
        }
    }
}

impl fmt::Display for Ansatz {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ansatz {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ansatz::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ansatz {s:?}")))
    }
}

/// Any trained network.
#[derive(Clone, Debug, PartialEq)]
pub enum NqsModel {
    Povm(PovmRbmModel),
    Wavefunction(PurificationModel),
}

impl NqsModel {
    pub fn ansatz(&self) -> Ansatz {
        match self {
            NqsModel::Povm(_) => Ansatz::Povm,
            NqsModel::Wavefunction(m) => m.ansatz(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArch {
    pub n_qubits: usize,
    pub n_hidden: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub povm: Option<PovmKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_anc: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rbm: Option<RbmParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<RbmParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<RbmParams>,
}

/// On-disk form of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub ansatz: Ansatz,
    pub arch: ModelArch,
    pub params: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_meta: Option<TrainMeta>,
}

impl ModelFile {
    pub fn new(model: &NqsModel, meta: Option<TrainMeta>) -> Self {
        match model {
            NqsModel::Povm(m) => ModelFile {
                ansatz: Ansatz::Povm,
                arch: ModelArch {
                    n_qubits: m.n_qubits,
                    n_hidden: m.params.n_hidden,
                    povm: Some(m.kind),
                    n_anc: None,
                },
                params: ModelParams {
                    rbm: Some(m.params.clone()),
                    amplitude: None,
                    phase: None,
                },
                train_meta: meta,
            },
            NqsModel::Wavefunction(m) => ModelFile {
                ansatz: m.ansatz(),
                arch: ModelArch {
                    n_qubits: m.n_sys,
                    n_hidden: m.amplitude.n_hidden,
                    povm: None,
                    n_anc: Some(m.n_anc),
                },
                params: ModelParams {
                    rbm: None,
                    amplitude: Some(m.amplitude.clone()),
                    phase: Some(m.phase.clone()),
                },
                train_meta: meta,
            },
        }
    }

    pub fn into_model(self) -> Result<NqsModel> {
        let missing = |what: &str| Error::Format(format!("model file lacks {what} parameters"));
        match self.ansatz {
            Ansatz::Povm => {
                let kind = self
                    .arch
                    .povm
                    .ok_or_else(|| Error::Format("POVM model needs arch.povm".into()))?;
                let params = self.params.rbm.ok_or_else(|| missing("rbm"))?;
                Ok(NqsModel::Povm(PovmRbmModel::from_params(
                    kind,
                    self.arch.n_qubits,
                    params,
                )?))
            }
            ansatz => {
                let amplitude = self.params.amplitude.ok_or_else(|| missing("amplitude"))?;
                let phase = self.params.phase.ok_or_else(|| missing("phase"))?;
                let n_anc = self.arch.n_anc.unwrap_or(0);
                Ok(NqsModel::Wavefunction(PurificationModel::from_params(
                    ansatz,
                    self.arch.n_qubits,
                    n_anc,
                    amplitude,
                    phase,
                )?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::rng_from_seed;
    use rand::Rng;

    #[test]
    fn kl_examples() {
        let p = OutcomeDistribution::new(PovmKind::Tetra, 1, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let q = OutcomeDistribution::new(PovmKind::Tetra, 1, vec![0.25, 0.75, 0.0, 0.0]).unwrap();
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kl_divergence(&p, &q).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.14384).abs() < 1e-5);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let r = OutcomeDistribution::new(PovmKind::Tetra, 1, vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        assert_eq!(kl_divergence(&p, &r).unwrap(), f64::INFINITY);
        let other = OutcomeDistribution::uniform(PovmKind::Pauli4, 1);
        assert!(kl_divergence(&p, &other).is_err());
    }

    #[test]
    fn kl_is_non_negative() {
        let mut rng = rng_from_seed(8);
        for _ in 0..1000 {
            let w1: Vec<f64> = (0..16).map(|_| rng.random::<f64>()).collect();
            let w2: Vec<f64> = (0..16).map(|_| rng.random::<f64>()).collect();
            let p = OutcomeDistribution::from_weights(PovmKind::Tetra, 2, w1).unwrap();
            let q = OutcomeDistribution::from_weights(PovmKind::Tetra, 2, w2).unwrap();
            assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad_cd = TrainConfig {
            mode: TrainMode::CdK,
            k: 0,
            ..Default::default()
        };
        assert!(bad_cd.validate().is_err());
        assert_eq!(
            "positive_real".parse::<Ansatz>().unwrap(),
            Ansatz::PositiveReal
        );
        assert!("gan".parse::<Ansatz>().is_err());
    }
}
