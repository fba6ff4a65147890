//! Count datasets, sampling, bootstrap, and the noisy two-photon measurement
//! simulator.
//!
//! Counts are stored as `f64` so that expected-value ("no shot noise") data
//! can flow through the same estimators as sampled data; sampled counts are
//! always integral.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::povm::{
    coarse_grain_pauli6_to_pauli4, outcome_probabilities, outcome_tuple, projector_settings,
    regroup, OutcomeDistribution, PovmKind, ProductPovm, PAULI6_TO_PAULI4,
};
use crate::qcore::{bloch_operator, tensor_all, DensityMatrix, CLIP_TOL};

/// Default tomography totals and Bell statistics of the reference experiment.
pub const DEFAULT_PAULI_TOTAL: u64 = 60_000;
pub const DEFAULT_TETRA_TOTAL: u64 = 27_000;
pub const DEFAULT_BELL_COUNTS: u64 = 25_000;

/// Seeded generator used throughout the crate.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent sub-seed from a master seed and a label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Multinomial draw by sequential conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(probs: &[f64], n: u64, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; probs.len()];
    let mut remaining = n;
    let mut mass: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = remaining as f64;
            break;
        }
        let ratio = if mass > 0.0 {
            (p / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k = if ratio >= 1.0 {
            remaining
        } else if ratio <= 0.0 {
            0
        } else {
            Binomial::new(remaining, ratio)
                .expect("valid binomial")
                .sample(rng)
        };
        out[i] = k as f64;
        remaining -= k;
        mass -= p;
    }
    out
}

/// How the counts in a dataset came about.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acquisition {
    #[default]
    Measured,
    Sampled,
    Expected,
    Bootstrap,
    Simulated,
}

/// Realized calibration error of one single-photon setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisTilt {
    pub qubit: usize,
    pub setting: usize,
    pub axis: [f64; 3],
    pub angle: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default)]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub acquisition: Acquisition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tilts: Vec<AxisTilt>,
}

/// Coincidence counts over the outcome tuples of a product POVM.
#[derive(Clone, Debug, PartialEq)]
pub struct CountsDataset {
    povm: PovmKind,
    n_qubits: usize,
    counts: Vec<f64>,
    pub meta: DatasetMeta,
}

impl CountsDataset {
    pub fn new(
        povm: PovmKind,
        n_qubits: usize,
        counts: Vec<f64>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        let expected = povm.n_outcomes(n_qubits);
        if counts.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: counts.len(),
            });
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Format(
                "counts must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            povm,
            n_qubits,
            counts,
            meta,
        })
    }

    pub fn kind(&self) -> PovmKind {
        self.povm
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Multiplies every count by `s > 0`.
    pub fn rescaled(&self, s: f64) -> Self {
        Self {
            counts: self.counts.iter().map(|c| c * s).collect(),
            ..self.clone()
        }
    }

    pub fn coarse_grained(&self) -> Result<Self> {
        if self.povm != PovmKind::Pauli6 {
            return Err(Error::WrongKind {
                expected: PovmKind::Pauli6,
                got: self.povm,
            });
        }
        Ok(Self {
            povm: PovmKind::Pauli4,
            n_qubits: self.n_qubits,
            counts: regroup(&self.counts, self.n_qubits, 6, 4, &PAULI6_TO_PAULI4),
            meta: self.meta.clone(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CountsFile {
    povm: PovmKind,
    n_qubits: usize,
    counts: BTreeMap<String, Count>,
    #[serde(default)]
    meta: DatasetMeta,
}

/// Count value that serializes as an integer when integral.
#[derive(Clone, Copy)]
struct Count(f64);

impl Serialize for Count {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.fract() == 0.0 && self.0 < 9.0e15 {
            s.serialize_u64(self.0 as u64)
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Count {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(Count)
    }
}

fn tuple_key(idx: usize, per_qubit: usize, n_qubits: usize) -> String {
    outcome_tuple(idx, per_qubit, n_qubits)
        .iter()
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl Serialize for CountsDataset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let k = self.povm.outcomes_per_qubit();
        let counts = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (tuple_key(i, k, self.n_qubits), Count(c)))
            .collect();
        CountsFile {
            povm: self.povm,
            n_qubits: self.n_qubits,
            counts,
            meta: self.meta.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CountsDataset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = CountsFile::deserialize(d)?;
        let k = f.povm.outcomes_per_qubit();
        let mut counts = vec![0.0; f.povm.n_outcomes(f.n_qubits)];
        for (key, Count(v)) in f.counts {
            let tuple: Vec<usize> = key
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| D::Error::custom(format!("bad outcome key {key:?}")))?;
            if tuple.len() != f.n_qubits || tuple.iter().any(|&a| a >= k) {
                return Err(D::Error::custom(format!(
                    "outcome key {key:?} out of range"
                )));
            }
            counts[crate::povm::outcome_index(&tuple, k)] = v;
        }
        CountsDataset::new(f.povm, f.n_qubits, counts, f.meta).map_err(D::Error::custom)
    }
}

/// Per-basis projective counts: for each basis string in `{x,y,z}^N`, counts
/// over the `2^N` up/down outcomes (bit 0 = `↑`, qubit 1 most significant).
#[derive(Clone, Debug, PartialEq)]
pub struct MultiBasisDataset {
    n_qubits: usize,
    settings: BTreeMap<String, Vec<f64>>,
}

const BASIS_LETTERS: [char; 3] = ['x', 'y', 'z'];

/// Every basis string over `{x,y,z}^N`, lexicographic.
pub fn all_bases(n_qubits: usize) -> Vec<String> {
    (0..3usize.pow(n_qubits as u32))
        .map(|i| {
            outcome_tuple(i, 3, n_qubits)
                .into_iter()
                .map(|b| BASIS_LETTERS[b])
                .collect()
        })
        .collect()
}

/// Basis string → per-qubit basis indices (x=0, y=1, z=2).
pub fn parse_basis(basis: &str) -> Result<Vec<usize>> {
    basis
        .chars()
        .map(|ch| match ch {
            'x' => Ok(0),
            'y' => Ok(1),
            'z' => Ok(2),
            _ => Err(Error::InvalidBasis(basis.to_string())),
        })
        .collect()
}

impl MultiBasisDataset {
    pub fn new(n_qubits: usize, settings: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let outcomes = 1usize << n_qubits;
        for basis in all_bases(n_qubits) {
            let counts = settings
                .get(&basis)
                .ok_or_else(|| Error::MissingSetting(basis.clone()))?;
            if counts.len() != outcomes {
                return Err(Error::DimensionMismatch {
                    expected: outcomes,
                    got: counts.len(),
                });
            }
            if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::Format(format!("bad counts in setting {basis}")));
            }
            if counts.iter().sum::<f64>() <= 0.0 {
                return Err(Error::ZeroTotal);
            }
        }
        if settings.len() != 3usize.pow(n_qubits as u32) {
            let extra = settings
                .keys()
                .find(|b| b.len() != n_qubits || parse_basis(b).is_err())
                .cloned()
                .unwrap_or_default();
            return Err(Error::InvalidBasis(extra));
        }
        Ok(Self { n_qubits, settings })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn settings(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.settings
    }

    pub fn counts(&self, basis: &str) -> Result<&[f64]> {
        self.settings
            .get(basis)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingSetting(basis.to_string()))
    }

    /// Setting counts normalized within the setting.
    pub fn basis_distribution(&self, basis: &str) -> Result<Vec<f64>> {
        let c = self.counts(basis)?;
        let total: f64 = c.iter().sum();
        Ok(c.iter().map(|x| x / total).collect())
    }

    pub fn total(&self) -> f64 {
        self.settings.values().flatten().sum()
    }
}

#[derive(Serialize, Deserialize)]
struct MultiBasisFile {
    settings: BTreeMap<String, BTreeMap<String, Count>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<DatasetMeta>,
}

fn bits_key(idx: usize, n: usize) -> String {
    outcome_tuple(idx, 2, n)
        .iter()
        .map(|b| b.to_string())
        .collect()
}

impl Serialize for MultiBasisDataset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let settings = self
            .settings
            .iter()
            .map(|(b, counts)| {
                let row = counts
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| (bits_key(i, self.n_qubits), Count(c)))
                    .collect();
                (b.clone(), row)
            })
            .collect();
        MultiBasisFile {
            settings,
            meta: None,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MultiBasisDataset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = MultiBasisFile::deserialize(d)?;
        let n = f
            .settings
            .keys()
            .next()
            .map(|b| b.len())
            .ok_or_else(|| D::Error::custom("no settings"))?;
        let mut settings = BTreeMap::new();
        for (basis, row) in f.settings {
            let mut counts = vec![0.0; 1 << n];
            for (key, Count(v)) in row {
                if key.len() != n || !key.chars().all(|ch| ch == '0' || ch == '1') {
                    return Err(D::Error::custom(format!("bad outcome key {key:?}")));
                }
                let idx = usize::from_str_radix(&key, 2).expect("validated bits");
                counts[idx] = v;
            }
            settings.insert(basis, counts);
        }
        MultiBasisDataset::new(n, settings).map_err(D::Error::custom)
    }
}

/// Systematic per-setting axis error; `sigma_angle` in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_angle: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            sigma_angle: 0.0,
            seed: 0,
        }
    }

    pub fn new(sigma_angle: f64, seed: u64) -> Result<Self> {
        if !(sigma_angle.is_finite() && sigma_angle >= 0.0) {
            return Err(Error::Config(format!(
                "sigma_angle must be ≥ 0, got {sigma_angle}"
            )));
        }
        Ok(Self { sigma_angle, seed })
    }
}

/// Shot-noise treatment for simulated acquisitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotNoise {
    Multinomial,
    /// Expected counts in place of samples.
    None,
}

pub fn counts_to_distribution(c: &CountsDataset) -> Result<OutcomeDistribution> {
    let total = c.total();
    if total <= 0.0 {
        return Err(Error::ZeroTotal);
    }
    OutcomeDistribution::new(
        c.povm,
        c.n_qubits,
        c.counts.iter().map(|x| x / total).collect(),
    )
}

fn require_physical(rho: &DensityMatrix) -> Result<()> {
    let min = rho.min_eigenvalue();
    if min < -CLIP_TOL {
        return Err(Error::Unphysical(min));
    }
    Ok(())
}

/// `n` i.i.d. draws from `tr[ρ M_a]`.
pub fn sample_outcomes(
    rho: &DensityMatrix,
    povm: &ProductPovm,
    n: u64,
    seed: u64,
) -> Result<CountsDataset> {
    require_physical(rho)?;
    let p = outcome_probabilities(rho, povm)?;
    let mut rng = rng_from_seed(seed);
    let counts = multinomial(p.probs(), n, &mut rng);
    CountsDataset::new(
        povm.kind(),
        povm.n_qubits(),
        counts,
        DatasetMeta {
            label: "sampled".into(),
            seed: Some(seed),
            acquisition: Acquisition::Sampled,
            ..Default::default()
        },
    )
}

/// `total · tr[ρ M_a]` without sampling.
pub fn expected_counts(
    rho: &DensityMatrix,
    povm: &ProductPovm,
    total: f64,
) -> Result<CountsDataset> {
    require_physical(rho)?;
    let p = outcome_probabilities(rho, povm)?;
    CountsDataset::new(
        povm.kind(),
        povm.n_qubits(),
        p.probs().iter().map(|x| x * total).collect(),
        DatasetMeta {
            label: "expected".into(),
            acquisition: Acquisition::Expected,
            ..Default::default()
        },
    )
}

/// Multinomial resample with the same (rounded) total.
pub fn bootstrap_resample(c: &CountsDataset, seed: u64) -> Result<CountsDataset> {
    let total = c.total();
    if total <= 0.0 {
        return Err(Error::ZeroTotal);
    }
    let probs: Vec<f64> = c.counts.iter().map(|x| x / total).collect();
    let mut rng = rng_from_seed(seed);
    let counts = multinomial(&probs, total.round() as u64, &mut rng);
    Ok(CountsDataset {
        counts,
        meta: DatasetMeta {
            label: format!("{} (bootstrap)", c.meta.label),
            seed: Some(seed),
            acquisition: Acquisition::Bootstrap,
            ..c.meta.clone()
        },
        ..c.clone()
    })
}

/// Rotates `v` about unit `axis` by `angle` (Rodrigues).
pub fn rotate(v: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, co) = angle.sin_cos();
    let dot = v[0] * axis[0] + v[1] * axis[1] + v[2] * axis[2];
    let cross = [
        axis[1] * v[2] - axis[2] * v[1],
        axis[2] * v[0] - axis[0] * v[2],
        axis[0] * v[1] - axis[1] * v[0],
    ];
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = v[i] * co + cross[i] * s + axis[i] * dot * (1.0 - co);
    }
    out
}

fn draw_tilts(n_qubits: usize, n_settings: usize, noise: &NoiseModel) -> Vec<AxisTilt> {
    let mut rng = rng_from_seed(noise.seed);
    let angle_dist = Normal::new(0.0, noise.sigma_angle).expect("sigma ≥ 0");
    let mut tilts = Vec::with_capacity(n_qubits * n_settings);
    for qubit in 0..n_qubits {
        for setting in 0..n_settings {
            let mut axis = [0.0; 3];
            let mut norm = 0.0;
            while norm < 1e-12 {
                for a in axis.iter_mut() {
                    *a = rng.sample(StandardNormal);
                }
                norm = axis.iter().map(|x| x * x).sum::<f64>().sqrt();
            }
            axis.iter_mut().for_each(|a| *a /= norm);
            let angle = angle_dist.sample(&mut rng);
            tilts.push(AxisTilt {
                qubit,
                setting,
                axis,
                angle,
            });
        }
    }
    tilts
}

/// Output of [`simulate_experiment`].
#[derive(Clone, Debug)]
pub struct SimulatedExperiment {
    /// Counts in the requested POVM kind.
    pub counts: CountsDataset,
    /// Per-basis view of the same acquisition, present for Pauli measurements.
    pub multibasis: Option<MultiBasisDataset>,
}

/// Simulates the projector-by-projector coincidence measurement.
///
/// Each single-photon setting (6 Pauli projectors or 4 tetrahedral ones per
/// photon) is tilted once by a rotation drawn from `noise`. Every product
/// setting is acquired for the same time, so coincidences are multinomial over
/// all product settings with weights `tr[ρ Π̃_{a_1} ⊗ … ⊗ Π̃_{a_N}]` and grand
/// total `n_total`. Pauli-4 data is the coarse-grained Pauli-6 acquisition.
pub fn simulate_experiment(
    rho_true: &DensityMatrix,
    kind: PovmKind,
    n_total: u64,
    noise: &NoiseModel,
    shots: ShotNoise,
    seed: u64,
) -> Result<SimulatedExperiment> {
    require_physical(rho_true)?;
    if n_total == 0 {
        return Err(Error::ZeroTotal);
    }
    let n_qubits = rho_true.n_qubits();
    let base = match kind {
        PovmKind::Pauli6 | PovmKind::Pauli4 => PovmKind::Pauli6,
        PovmKind::Tetra => PovmKind::Tetra,
    };
    let settings = projector_settings(base).expect("measured kinds have settings");
    let tilts = draw_tilts(n_qubits, settings.len(), noise);
    let projectors: Vec<Vec<_>> = (0..n_qubits)
        .map(|q| {
            settings
                .iter()
                .enumerate()
                .map(|(e, s)| {
                    let t = &tilts[q * settings.len() + e];
                    bloch_operator(rotate(s.direction, t.axis, t.angle))
                })
                .collect()
        })
        .collect();
    let n_cells = base.n_outcomes(n_qubits);
    let rates: Vec<f64> = (0..n_cells)
        .map(|idx| {
            let tuple = outcome_tuple(idx, settings.len(), n_qubits);
            let op = tensor_all(tuple.iter().enumerate().map(|(q, &a)| &projectors[q][a]));
            rho_true.expectation(&op).max(0.0)
        })
        .collect();
    let rate_sum: f64 = rates.iter().sum();
    let probs: Vec<f64> = rates.iter().map(|r| r / rate_sum).collect();
    let (counts, acquisition) = match shots {
        ShotNoise::Multinomial => (
            multinomial(&probs, n_total, &mut rng_from_seed(seed)),
            Acquisition::Simulated,
        ),
        ShotNoise::None => (
            probs.iter().map(|p| p * n_total as f64).collect(),
            Acquisition::Expected,
        ),
    };
    let meta = DatasetMeta {
        label: format!("simulated {kind}"),
        seed: Some(seed),
        acquisition,
        noise_sigma: Some(noise.sigma_angle),
        tilts,
    };
    let raw = CountsDataset::new(base, n_qubits, counts, meta)?;
    let multibasis = match base {
        PovmKind::Pauli6 => Some(pauli6_to_multibasis(&raw)?),
        _ => None,
    };
    let counts = if kind == PovmKind::Pauli4 {
        raw.coarse_grained()?
    } else {
        raw
    };
    Ok(SimulatedExperiment { counts, multibasis })
}

/// Pauli-6 outcome of (basis, up/down) for one qubit.
fn pauli6_outcome(basis: usize, bit: usize) -> usize {
    2 * basis + bit
}

/// Regroups per-basis records into the Pauli-6 outcome bins.
pub fn multibasis_to_pauli6(d: &MultiBasisDataset) -> Result<CountsDataset> {
    let n = d.n_qubits;
    let mut counts = vec![0.0; PovmKind::Pauli6.n_outcomes(n)];
    for basis in all_bases(n) {
        let b = parse_basis(&basis)?;
        let row = d.counts(&basis)?;
        for (bits_idx, &c) in row.iter().enumerate() {
            let bits = outcome_tuple(bits_idx, 2, n);
            let tuple: Vec<usize> = b
                .iter()
                .zip(&bits)
                .map(|(&bq, &s)| pauli6_outcome(bq, s))
                .collect();
            counts[crate::povm::outcome_index(&tuple, 6)] += c;
        }
    }
    CountsDataset::new(
        PovmKind::Pauli6,
        n,
        counts,
        DatasetMeta {
            label: "pauli6 from multibasis".into(),
            ..Default::default()
        },
    )
}

/// Inverse of [`multibasis_to_pauli6`].
pub fn pauli6_to_multibasis(c: &CountsDataset) -> Result<MultiBasisDataset> {
    if c.povm != PovmKind::Pauli6 {
        return Err(Error::WrongKind {
            expected: PovmKind::Pauli6,
            got: c.povm,
        });
    }
    let n = c.n_qubits;
    let mut settings: BTreeMap<String, Vec<f64>> = all_bases(n)
        .into_iter()
        .map(|b| (b, vec![0.0; 1 << n]))
        .collect();
    for (idx, &count) in c.counts.iter().enumerate() {
        let tuple = outcome_tuple(idx, 6, n);
        let basis: String = tuple.iter().map(|a| BASIS_LETTERS[a / 2]).collect();
        let bits = tuple.iter().fold(0usize, |acc, a| acc * 2 + a % 2);
        settings.get_mut(&basis).expect("all bases present")[bits] += count;
    }
    MultiBasisDataset::new(n, settings)
}

/// Pauli-6 distribution from per-setting normalized counts, each basis carrying
/// weight `3^-N`.
pub fn multibasis_distribution(d: &MultiBasisDataset) -> Result<OutcomeDistribution> {
    let n = d.n_qubits;
    let w = 1.0 / 3f64.powi(n as i32);
    let mut probs = vec![0.0; PovmKind::Pauli6.n_outcomes(n)];
    for basis in all_bases(n) {
        let b = parse_basis(&basis)?;
        for (bits_idx, p) in d.basis_distribution(&basis)?.into_iter().enumerate() {
            let bits = outcome_tuple(bits_idx, 2, n);
            let tuple: Vec<usize> = b
                .iter()
                .zip(&bits)
                .map(|(&bq, &s)| pauli6_outcome(bq, s))
                .collect();
            probs[crate::povm::outcome_index(&tuple, 6)] = p * w;
        }
    }
    OutcomeDistribution::new(PovmKind::Pauli6, n, probs)
}

/// Coarse-grains a Pauli-6 distribution or passes others through.
pub fn to_pauli4_if_pauli6(p: &OutcomeDistribution) -> Result<OutcomeDistribution> {
    if p.kind() == PovmKind::Pauli6 {
        coarse_grain_pauli6_to_pauli4(p)
    } else {
        Ok(p.clone())
    }
}
