//! RBM wavefunctions over system and ancilla units.
//!
//! `Ψ(σ, α) ∝ √p̃_λ(σ, α) · exp(i ln p̃_μ(σ, α) / 2)`, where `p̃_λ` and `p̃_μ` are
//! the hidden-marginalized Boltzmann weights of an amplitude and a phase RBM
//! sharing the visible layout `[σ_1 … σ_N | α_1 … α_M]`. The system state is
//! the partial trace over the ancillae.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use super::rbm::{RbmParams, VisibleLayout};
use super::{
    descend_with_restarts, kl_slices, Ansatz, TrainConfig, TrainMeta, TrainMode, Trained,
    MAX_ENUMERATION,
};
use crate::error::{Error, Result};
use crate::measure::{all_bases, parse_basis, rng_from_seed, MultiBasisDataset};
use crate::optim::{gradient_check, Objective};
use crate::povm::outcome_tuple;
use crate::qcore::{c, partial_trace_ancilla, DensityMatrix, PureState, C64, MAX_QUBITS};

/// Floor on predicted basis probabilities inside logarithms.
const BORN_FLOOR: f64 = 1e-15;

/// Floor applied to predictions of unphysical states before comparing to data.
const KL_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PurificationArch {
    pub n_anc: usize,
    pub n_hidden: usize,
}

impl Default for PurificationArch {
    fn default() -> Self {
        Self {
            n_anc: 2,
            n_hidden: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PurificationModel {
    pub n_sys: usize,
    pub n_anc: usize,
    /// `false` pins every parameter touching an ancilla unit to zero.
    pub couple_ancilla: bool,
    /// `false` pins the phase network to zero (real non-negative amplitudes).
    pub phase_enabled: bool,
    pub amplitude: RbmParams,
    pub phase: RbmParams,
}

fn check_size(n_sys: usize, n_anc: usize) -> Result<()> {
    if n_sys == 0 || n_sys > MAX_QUBITS || (1usize << (n_sys + n_anc)) > MAX_ENUMERATION {
        return Err(Error::TooLarge(1usize << (n_sys + n_anc).min(63)));
    }
    Ok(())
}

impl PurificationModel {
    pub fn layout(n_sys: usize, n_anc: usize) -> VisibleLayout {
        VisibleLayout::Binary {
            units: n_sys + n_anc,
        }
    }

    pub fn zeros(ansatz: Ansatz, n_sys: usize, arch: PurificationArch) -> Result<Self> {
        let (n_anc, couple_ancilla, phase_enabled) = match ansatz {
            Ansatz::Purification => (arch.n_anc, true, true),
            Ansatz::Pure => (arch.n_anc, false, true),
            Ansatz::PositiveReal => (0, false, false),
            Ansatz::Povm => {
                return Err(Error::Config(
                    "the POVM ansatz is not a wavefunction".into(),
                ))
            }
        };
        check_size(n_sys, n_anc)?;
        let layout = Self::layout(n_sys, n_anc);
        Ok(Self {
            n_sys,
            n_anc,
            couple_ancilla,
            phase_enabled,
            amplitude: RbmParams::zeros(layout, arch.n_hidden),
            phase: RbmParams::zeros(layout, arch.n_hidden),
        })
    }

    pub fn from_params(
        ansatz: Ansatz,
        n_sys: usize,
        n_anc: usize,
        amplitude: RbmParams,
        phase: RbmParams,
    ) -> Result<Self> {
        let mut m = Self::zeros(
            ansatz,
            n_sys,
            PurificationArch {
                n_anc,
                n_hidden: amplitude.n_hidden,
            },
        )?;
        amplitude.validate()?;
        phase.validate()?;
        if amplitude.visible != m.amplitude.visible || phase.visible != m.phase.visible {
            return Err(Error::Format(
                "wavefunction parameters do not match the visible layout".into(),
            ));
        }
        m.amplitude = amplitude;
        m.phase = phase;
        let mask = m.free_mask();
        let full = m.full_params();
        if full.iter().zip(&mask).any(|(x, free)| !free && *x != 0.0) {
            return Err(Error::Format(format!(
                "{ansatz} model has non-zero pinned parameters"
            )));
        }
        Ok(m)
    }

    pub fn ansatz(&self) -> Ansatz {
        match (self.phase_enabled, self.couple_ancilla) {
            (false, _) => Ansatz::PositiveReal,
            (true, true) => Ansatz::Purification,
            (true, false) => Ansatz::Pure,
        }
    }

    fn full_params(&self) -> Vec<f64> {
        let mut x = self.amplitude.to_flat();
        x.extend(self.phase.to_flat());
        x
    }

    fn set_full_params(&mut self, x: &[f64]) {
        let na = self.amplitude.n_params();
        self.amplitude.set_flat(&x[..na]);
        self.phase.set_flat(&x[na..]);
    }

    /// Which entries of `[amplitude | phase]` are trainable.
    pub fn free_mask(&self) -> Vec<bool> {
        let net_mask = |p: &RbmParams, enabled: bool| -> Vec<bool> {
            let nv = p.n_visible();
            let touches = |i: usize| i >= self.n_sys;
            let mut m = Vec::with_capacity(p.n_params());
            for _j in 0..p.n_hidden {
                m.extend((0..nv).map(|i| enabled && (self.couple_ancilla || !touches(i))));
            }
            m.extend((0..nv).map(|i| enabled && (self.couple_ancilla || !touches(i))));
            m.extend((0..p.n_hidden).map(|_| enabled));
            m
        };
        let mut mask = net_mask(&self.amplitude, true);
        mask.extend(net_mask(&self.phase, self.phase_enabled));
        mask
    }

    fn free_indices(&self) -> Vec<usize> {
        self.free_mask()
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.then_some(i))
            .collect()
    }

    /// Trainable parameters in flat order.
    pub fn free_params(&self) -> Vec<f64> {
        let full = self.full_params();
        self.free_indices().into_iter().map(|i| full[i]).collect()
    }

    pub fn set_free_params(&mut self, x: &[f64]) {
        let mut full = self.full_params();
        for (k, i) in self.free_indices().into_iter().enumerate() {
            full[i] = x[k];
        }
        self.set_full_params(&full);
    }

    fn randomize(&mut self, std: f64, seed: u64) {
        let mut rng = rng_from_seed(seed);
        let layout = Self::layout(self.n_sys, self.n_anc);
        let a = RbmParams::random(layout, self.amplitude.n_hidden, std, &mut rng).to_flat();
        let p = RbmParams::random(layout, self.phase.n_hidden, std, &mut rng).to_flat();
        let full: Vec<f64> = a.into_iter().chain(p).collect();
        let free: Vec<f64> = self.free_indices().into_iter().map(|i| full[i]).collect();
        self.set_free_params(&free);
    }
}

/// Unnormalized amplitudes with `Σ|Ψ|² = norm`, plus the visible encodings.
struct Amplitudes {
    psi: Vec<C64>,
    /// `|Ψ(v)|² / norm`, the amplitude network's normalized distribution.
    born: Vec<f64>,
    norm: f64,
}

fn amplitudes(m: &PurificationModel, visibles: &[Vec<f64>]) -> Amplitudes {
    let log_amp: Vec<f64> = visibles.iter().map(|v| m.amplitude.log_weight(v)).collect();
    let shift = log_amp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Global phase fixed so that the all-zero configuration is real.
    let phase_ref = if m.phase_enabled {
        m.phase.log_weight(&visibles[0])
    } else {
        0.0
    };
    let psi: Vec<C64> = visibles
        .iter()
        .zip(&log_amp)
        .map(|(v, la)| {
            let modulus = (0.5 * (la - shift)).exp();
            if m.phase_enabled {
                C64::from_polar(modulus, 0.5 * (m.phase.log_weight(v) - phase_ref))
            } else {
                c(modulus, 0.0)
            }
        })
        .collect();
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let born = psi.iter().map(|z| z.norm_sqr() / norm).collect();
    Amplitudes { psi, born, norm }
}

pub fn purification_wavefunction(m: &PurificationModel) -> Result<PureState> {
    check_size(m.n_sys, m.n_anc)?;
    let visibles = PurificationModel::layout(m.n_sys, m.n_anc).encode_all();
    let amps = amplitudes(m, &visibles);
    let s = amps.norm.sqrt();
    PureState::normalized(amps.psi.iter().map(|z| z / s).collect())
}

pub fn rho_from_model(m: &PurificationModel) -> Result<DensityMatrix> {
    partial_trace_ancilla(&purification_wavefunction(m)?, m.n_sys, m.n_anc)
}

/// Row-major `⟨s|` rows of the product rotation into `basis` (`2^N × 2^N`).
fn basis_rows(basis: &[usize]) -> Vec<C64> {
    let r = FRAC_1_SQRT_2;
    let single = |b: usize| -> [[C64; 2]; 2] {
        match b {
            0 => [[c(r, 0.0), c(r, 0.0)], [c(r, 0.0), c(-r, 0.0)]],
            1 => [[c(r, 0.0), c(0.0, -r)], [c(r, 0.0), c(0.0, r)]],
            _ => [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
        }
    };
    let n = basis.len();
    let d = 1usize << n;
    let mut u = vec![c(0.0, 0.0); d * d];
    for s in 0..d {
        let sb = outcome_tuple(s, 2, n);
        for t in 0..d {
            let tb = outcome_tuple(t, 2, n);
            u[s * d + t] = basis
                .iter()
                .enumerate()
                .map(|(q, &b)| single(b)[sb[q]][tb[q]])
                .product();
        }
    }
    u
}

fn parse_basis_for(basis: &str, n_qubits: usize) -> Result<Vec<usize>> {
    let b = parse_basis(basis)?;
    if b.len() != n_qubits {
        return Err(Error::InvalidBasis(basis.to_string()));
    }
    Ok(b)
}

/// `⟨s_b|ρ|s_b⟩` for every outcome `s` of `basis`.
pub fn basis_distribution(rho: &DensityMatrix, basis: &str) -> Result<Vec<f64>> {
    let b = parse_basis_for(basis, rho.n_qubits())?;
    let d = rho.dim();
    let u = basis_rows(&b);
    let m = rho.matrix();
    Ok((0..d)
        .map(|s| {
            let row = &u[s * d..(s + 1) * d];
            let mut acc = c(0.0, 0.0);
            for i in 0..d {
                for j in 0..d {
                    acc += row[i] * m[(i, j)] * row[j].conj();
                }
            }
            acc.re
        })
        .collect())
}

/// `Φ(s, α) = Σ_σ U[s, σ] Ψ(σ, α)`.
fn rotate_amplitudes(u: &[C64], psi: &[C64], ds: usize, da: usize) -> Vec<C64> {
    let mut phi = vec![c(0.0, 0.0); ds * da];
    for s in 0..ds {
        for sigma in 0..ds {
            let us = u[s * ds + sigma];
            if us == c(0.0, 0.0) {
                continue;
            }
            for a in 0..da {
                phi[s * da + a] += us * psi[sigma * da + a];
            }
        }
    }
    phi
}

/// Born probabilities of the model's system state in `basis`.
pub fn rotated_born_distribution(m: &PurificationModel, basis: &str) -> Result<Vec<f64>> {
    check_size(m.n_sys, m.n_anc)?;
    let b = parse_basis_for(basis, m.n_sys)?;
    let visibles = PurificationModel::layout(m.n_sys, m.n_anc).encode_all();
    let amps = amplitudes(m, &visibles);
    let (ds, da) = (1usize << m.n_sys, 1usize << m.n_anc);
    let phi = rotate_amplitudes(&basis_rows(&b), &amps.psi, ds, da);
    Ok((0..ds)
        .map(|s| {
            phi[s * da..(s + 1) * da]
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>()
                / amps.norm
        })
        .collect())
}

/// Average over all `3^N` bases of `D_KL(P̂_b ‖ ⟨s_b|ρ|s_b⟩)`, each basis
/// weighted by its share of the total counts (equal weights for equal
/// acquisition). Predictions are floored at `1e-12` and renormalized, so
/// unphysical states are scored too.
pub fn mean_basis_kl(data: &MultiBasisDataset, rho: &DensityMatrix) -> Result<f64> {
    if rho.n_qubits() != data.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: 1 << data.n_qubits(),
            got: rho.dim(),
        });
    }
    let total = data.total();
    let mut acc = 0.0;
    for b in all_bases(data.n_qubits()) {
        let share = data.counts(&b)?.iter().sum::<f64>() / total;
        let p = data.basis_distribution(&b)?;
        let mut q: Vec<f64> = basis_distribution(rho, &b)?
            .into_iter()
            .map(|x| x.max(KL_FLOOR))
            .collect();
        let s: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= s);
        acc += share * kl_slices(&p, &q);
    }
    Ok(acc)
}

struct BasisTerm {
    rows: Vec<C64>,
    target: Vec<f64>,
    entropy: f64,
}

/// `Σ_b D_KL(P̂_b ‖ Q_b)` over the model's trainable parameters.
pub struct BasisKlObjective {
    template: PurificationModel,
    visibles: Vec<Vec<f64>>,
    terms: Vec<BasisTerm>,
}

impl BasisKlObjective {
    /// `data` pairs a basis string with that basis's observed distribution.
    pub fn new(template: &PurificationModel, data: &[(String, Vec<f64>)]) -> Result<Self> {
        check_size(template.n_sys, template.n_anc)?;
        let ds = 1usize << template.n_sys;
        let terms = data
            .iter()
            .map(|(basis, target)| {
                if target.len() != ds {
                    return Err(Error::DimensionMismatch {
                        expected: ds,
                        got: target.len(),
                    });
                }
                let b = parse_basis_for(basis, template.n_sys)?;
                let entropy = target
                    .iter()
                    .filter(|p| **p > 0.0)
                    .map(|p| p * p.ln())
                    .sum();
                Ok(BasisTerm {
                    rows: basis_rows(&b),
                    target: target.clone(),
                    entropy,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            template: template.clone(),
            visibles: PurificationModel::layout(template.n_sys, template.n_anc).encode_all(),
            terms,
        })
    }

    /// Every basis of a multi-basis dataset.
    pub fn from_dataset(template: &PurificationModel, data: &MultiBasisDataset) -> Result<Self> {
        if data.n_qubits() != template.n_sys {
            return Err(Error::DimensionMismatch {
                expected: template.n_sys,
                got: data.n_qubits(),
            });
        }
        let pairs = all_bases(data.n_qubits())
            .into_iter()
            .map(|b| data.basis_distribution(&b).map(|p| (b, p)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(template, &pairs)
    }

    pub fn n_params(&self) -> usize {
        self.template.free_params().len()
    }

    pub fn model(&self, x: &[f64]) -> PurificationModel {
        let mut m = self.template.clone();
        m.set_free_params(x);
        m
    }

    fn evaluate(&self, x: &[f64], with_grad: bool) -> (f64, Vec<f64>) {
        let m = self.model(x);
        let amps = amplitudes(&m, &self.visibles);
        let (ds, da) = (1usize << m.n_sys, 1usize << m.n_anc);
        let mut loss = 0.0;
        // Per-visible weights G(v) summed over bases.
        let mut g = vec![c(0.0, 0.0); amps.psi.len()];
        for term in &self.terms {
            let phi = rotate_amplitudes(&term.rows, &amps.psi, ds, da);
            loss += term.entropy;
            for s in 0..ds {
                let p = term.target[s];
                if p <= 0.0 {
                    continue;
                }
                let row = &phi[s * da..(s + 1) * da];
                let n: f64 = row.iter().map(|z| z.norm_sqr()).sum();
                let q = n / amps.norm;
                if q > BORN_FLOOR {
                    loss -= p * q.ln();
                } else {
                    loss -= p * BORN_FLOOR.ln();
                    continue;
                }
                if with_grad {
                    let w = p / n;
                    for sigma in 0..ds {
                        let us = term.rows[s * ds + sigma];
                        if us == c(0.0, 0.0) {
                            continue;
                        }
                        for a in 0..da {
                            let v = sigma * da + a;
                            g[v] += row[a].conj() * us * amps.psi[v] * w;
                        }
                    }
                }
            }
        }
        if !with_grad {
            return (loss, Vec::new());
        }
        let n_bases = self.terms.len() as f64;
        let na = m.amplitude.n_params();
        let mut full = vec![0.0; na + m.phase.n_params()];
        for (k, v) in self.visibles.iter().enumerate() {
            let (amp_grad, phase_grad) = full.split_at_mut(na);
            m.amplitude
                .add_log_grad(v, n_bases * amps.born[k] - g[k].re, amp_grad);
            if m.phase_enabled {
                m.phase.add_log_grad(v, g[k].im, phase_grad);
            }
        }
        let grad = m.free_indices().into_iter().map(|i| full[i]).collect();
        (loss, grad)
    }
}

impl Objective for BasisKlObjective {
    fn value(&self, x: &[f64]) -> f64 {
        self.evaluate(x, false).0
    }

    fn value_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.evaluate(x, true)
    }
}

fn train_wavefunction(
    template: PurificationModel,
    data: &[(String, Vec<f64>)],
    cfg: &TrainConfig,
) -> Result<Trained<PurificationModel>> {
    cfg.validate()?;
    if cfg.mode != TrainMode::ExactGradient {
        return Err(Error::Config(
            "wavefunction ansätze train with exact gradients only".into(),
        ));
    }
    let obj = BasisKlObjective::new(&template, data)?;
    let (out, restart) = descend_with_restarts(
        &obj,
        |seed| {
            let mut m = template.clone();
            m.randomize(cfg.init_std, seed);
            m.free_params()
        },
        cfg,
    )?;
    Ok(Trained {
        model: obj.model(&out.x),
        meta: TrainMeta {
            mode: cfg.mode,
            seed: cfg.seed,
            epochs_run: out.iters,
            converged: out.converged,
            final_loss: out.loss,
            restart,
        },
        trace: out.trace,
    })
}

fn all_basis_pairs(data: &MultiBasisDataset) -> Result<Vec<(String, Vec<f64>)>> {
    all_bases(data.n_qubits())
        .into_iter()
        .map(|b| data.basis_distribution(&b).map(|p| (b, p)))
        .collect()
}

/// Mixed-state ansatz trained on every basis.
pub fn train_purification(
    data: &MultiBasisDataset,
    arch: PurificationArch,
    cfg: &TrainConfig,
) -> Result<Trained<PurificationModel>> {
    let template = PurificationModel::zeros(Ansatz::Purification, data.n_qubits(), arch)?;
    train_wavefunction(template, &all_basis_pairs(data)?, cfg)
}

/// Pure-state ansatz (ancilla decoupled) trained on every basis.
pub fn train_pure(
    data: &MultiBasisDataset,
    arch: PurificationArch,
    cfg: &TrainConfig,
) -> Result<Trained<PurificationModel>> {
    let template = PurificationModel::zeros(Ansatz::Pure, data.n_qubits(), arch)?;
    train_wavefunction(template, &all_basis_pairs(data)?, cfg)
}

/// Real non-negative amplitudes fitted to computational-basis counts only.
pub fn train_positive_real(
    z_counts: &[f64],
    n_hidden: usize,
    cfg: &TrainConfig,
) -> Result<Trained<PurificationModel>> {
    let n = z_counts.len().trailing_zeros() as usize;
    if z_counts.len() < 2 || !z_counts.len().is_power_of_two() {
        return Err(Error::NotPowerOfTwo(z_counts.len()));
    }
    let total: f64 = z_counts.iter().sum();
    if !(total > 0.0) || z_counts.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::ZeroTotal);
    }
    let template = PurificationModel::zeros(
        Ansatz::PositiveReal,
        n,
        PurificationArch { n_anc: 0, n_hidden },
    )?;
    let z: String = "z".repeat(n);
    train_wavefunction(
        template,
        &[(z, z_counts.iter().map(|x| x / total).collect())],
        cfg,
    )
}

/// Finite-difference check of the model's own training loss at its current
/// parameters (computational basis only for the positive-real ansatz).
pub fn purification_gradient_check(
    m: &PurificationModel,
    data: &MultiBasisDataset,
    eps: f64,
) -> Result<f64> {
    let obj = if m.ansatz() == Ansatz::PositiveReal {
        let z = "z".repeat(m.n_sys);
        BasisKlObjective::new(m, &[(z.clone(), data.basis_distribution(&z)?)])?
    } else {
        BasisKlObjective::from_dataset(m, data)?
    };
    Ok(gradient_check(&obj, &m.free_params(), eps))
}
