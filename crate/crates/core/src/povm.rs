//! The three tomographically complete product measurements, their outcome
//! probabilities, and dual-frame inversion back to density matrices.
//!
//! Outcome tuples `(a_1, …, a_N)` are flattened lexicographically with qubit 1
//! slowest: `index = Σ a_k K^(N−k)` where `K` is the single-qubit outcome count.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{bloch_operator, eig_herm, tensor_all, ComplexMatrix, DensityMatrix};

/// Negative probabilities above this are rounding noise and clipped to zero.
pub const NEGATIVE_PROB_TOL: f64 = 1e-9;

/// Cap on `outcomes × dim²` for eagerly materialized product POVMs.
const MAX_PRODUCT_ENTRIES: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PovmKind {
    Pauli6,
    Pauli4,
    Tetra,
}

impl PovmKind {
    pub const ALL: [PovmKind; 3] = [PovmKind::Pauli6, PovmKind::Pauli4, PovmKind::Tetra];

    pub fn name(self) -> &'static str {
        match self {
            PovmKind::Pauli6 => "pauli6",
            PovmKind::Pauli4 => "pauli4",
            PovmKind::Tetra => "tetra",
        }
    }

    pub fn outcomes_per_qubit(self) -> usize {
        match self {
            PovmKind::Pauli6 => 6,
            PovmKind::Pauli4 | PovmKind::Tetra => 4,
        }
    }

    pub fn n_outcomes(self, n_qubits: usize) -> usize {
        self.outcomes_per_qubit().pow(n_qubits as u32)
    }
}

impl fmt::Display for PovmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PovmKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pauli6" => Ok(PovmKind::Pauli6),
            "pauli4" => Ok(PovmKind::Pauli4),
            "tetra" => Ok(PovmKind::Tetra),
            other => Err(Error::Config(format!("unknown POVM kind {other:?}"))),
        }
    }
}

/// Bloch vectors of the tetrahedral POVM.
pub fn tetra_vectors() -> [[f64; 3]; 4] {
    let r2 = 2f64.sqrt();
    [
        [0.0, 0.0, 1.0],
        [2.0 * r2 / 3.0, 0.0, -1.0 / 3.0],
        [-r2 / 3.0, (2.0f64 / 3.0).sqrt(), -1.0 / 3.0],
        [-r2 / 3.0, -(2.0f64 / 3.0).sqrt(), -1.0 / 3.0],
    ]
}

/// Unit Bloch vectors `±e_α` in Pauli-6 order `(↑x, ↓x, ↑y, ↓y, ↑z, ↓z)`.
pub fn pauli6_vectors() -> [[f64; 3]; 6] {
    [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ]
}

/// Pauli-6 outcome → Pauli-4 outcome.
pub const PAULI6_TO_PAULI4: [usize; 6] = [0, 3, 1, 3, 2, 3];

/// A physical single-photon setting: projector direction and the POVM weight
/// it carries (`M_a = weight · (𝟙 + n·σ)/2`).
#[derive(Clone, Copy, Debug)]
pub struct ProjectorSetting {
    pub direction: [f64; 3],
    pub weight: f64,
}

/// The projective settings a kind is physically measured with. Pauli-4 is
/// obtained by coarse-graining Pauli-6 and has no settings of its own.
pub fn projector_settings(kind: PovmKind) -> Option<Vec<ProjectorSetting>> {
    match kind {
        PovmKind::Pauli6 => Some(
            pauli6_vectors()
                .into_iter()
                .map(|direction| ProjectorSetting {
                    direction,
                    weight: 1.0 / 3.0,
                })
                .collect(),
        ),
        PovmKind::Tetra => Some(
            tetra_vectors()
                .into_iter()
                .map(|direction| ProjectorSetting {
                    direction,
                    weight: 0.5,
                })
                .collect(),
        ),
        PovmKind::Pauli4 => None,
    }
}

#[derive(Clone, Debug)]
pub struct SingleQubitPovm {
    kind: PovmKind,
    elements: Vec<ComplexMatrix>,
}

impl SingleQubitPovm {
    pub fn kind(&self) -> PovmKind {
        self.kind
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }
}

pub fn make_single_povm(kind: PovmKind) -> SingleQubitPovm {
    let elements = match kind {
        PovmKind::Pauli6 => pauli6_vectors()
            .into_iter()
            .map(|n| bloch_operator(n).scale(1.0 / 3.0))
            .collect(),
        PovmKind::Pauli4 => {
            let ups: Vec<ComplexMatrix> = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
                .into_iter()
                .map(|n| bloch_operator(n).scale(1.0 / 3.0))
                .collect();
            let rest = ups
                .iter()
                .fold(ComplexMatrix::identity(2), |acc, m| &acc - m);
            ups.into_iter().chain(std::iter::once(rest)).collect()
        }
        PovmKind::Tetra => tetra_vectors()
            .into_iter()
            .map(|s| bloch_operator(s).scale(0.5))
            .collect(),
    };
    SingleQubitPovm { kind, elements }
}

/// Product POVM `M_a = M_{a_1} ⊗ … ⊗ M_{a_N}`.
#[derive(Clone, Debug)]
pub struct ProductPovm {
    single: SingleQubitPovm,
    n_qubits: usize,
    elements: Vec<ComplexMatrix>,
}

impl ProductPovm {
    pub fn new(kind: PovmKind, n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::Config("POVM needs at least one qubit".into()));
        }
        let outcomes = kind.n_outcomes(n_qubits);
        let dim = 1usize << n_qubits;
        if outcomes.saturating_mul(dim * dim) > MAX_PRODUCT_ENTRIES {
            return Err(Error::TooLarge(outcomes));
        }
        let single = make_single_povm(kind);
        let elements = (0..outcomes)
            .map(|idx| {
                let tuple = outcome_tuple(idx, kind.outcomes_per_qubit(), n_qubits);
                tensor_all(tuple.iter().map(|&a| &single.elements[a]))
            })
            .collect();
        Ok(Self {
            single,
            n_qubits,
            elements,
        })
    }

    pub fn kind(&self) -> PovmKind {
        self.single.kind
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn single(&self) -> &SingleQubitPovm {
        &self.single
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn n_outcomes(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }
}

/// Flat index → per-qubit outcome tuple.
pub fn outcome_tuple(mut index: usize, per_qubit: usize, n_qubits: usize) -> Vec<usize> {
    let mut t = vec![0; n_qubits];
    for k in (0..n_qubits).rev() {
        t[k] = index % per_qubit;
        index /= per_qubit;
    }
    t
}

/// Per-qubit outcome tuple → flat index.
pub fn outcome_index(tuple: &[usize], per_qubit: usize) -> usize {
    tuple.iter().fold(0, |acc, &a| acc * per_qubit + a)
}

/// Probability vector over all outcome tuples of a product POVM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    kind: PovmKind,
    n_qubits: usize,
    probs: Vec<f64>,
}

impl OutcomeDistribution {
    /// Validates non-negativity and normalization to `1e-9`.
    pub fn new(kind: PovmKind, n_qubits: usize, probs: Vec<f64>) -> Result<Self> {
        let expected = kind.n_outcomes(n_qubits);
        if probs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: probs.len(),
            });
        }
        if let Some(&bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::Format(format!("invalid probability {bad}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Format(format!("probabilities sum to {total}")));
        }
        Ok(Self {
            kind,
            n_qubits,
            probs,
        })
    }

    /// Divides non-negative weights by their sum.
    pub fn from_weights(kind: PovmKind, n_qubits: usize, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::ZeroTotal);
        }
        Self::new(
            kind,
            n_qubits,
            weights.into_iter().map(|w| w / total).collect(),
        )
    }

    pub fn uniform(kind: PovmKind, n_qubits: usize) -> Self {
        let n = kind.n_outcomes(n_qubits);
        Self {
            kind,
            n_qubits,
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// No validation; used for flagged, possibly negative, distributions.
    pub(crate) fn raw(kind: PovmKind, n_qubits: usize, probs: Vec<f64>) -> Self {
        Self {
            kind,
            n_qubits,
            probs,
        }
    }

    pub fn kind(&self) -> PovmKind {
        self.kind
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, tuple: &[usize]) -> f64 {
        self.probs[outcome_index(tuple, self.kind.outcomes_per_qubit())]
    }

    pub fn same_space(&self, other: &OutcomeDistribution) -> bool {
        self.kind == other.kind && self.n_qubits == other.n_qubits
    }

    /// Total-variation distance.
    pub fn tv_distance(&self, other: &OutcomeDistribution) -> Result<f64> {
        if !self.same_space(other) {
            return Err(Error::OutcomeSpaceMismatch);
        }
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }
}

/// `tr[ρ M_a]` for every outcome, without clipping or validation.
pub fn outcome_probabilities_raw(rho: &DensityMatrix, povm: &ProductPovm) -> Result<Vec<f64>> {
    if rho.dim() != povm.dim() {
        return Err(Error::DimensionMismatch {
            expected: povm.dim(),
            got: rho.dim(),
        });
    }
    Ok(povm
        .elements
        .iter()
        .map(|m| rho.matrix().trace_product(m).re)
        .collect())
}

/// `P(a) = tr[ρ M_a]`.
///
/// Rounding-level negatives are clipped to zero. A probability below
/// `-NEGATIVE_PROB_TOL` yields [`Error::NegativeProbability`], which carries the
/// unclipped distribution for callers that study unphysical states.
pub fn outcome_probabilities(
    rho: &DensityMatrix,
    povm: &ProductPovm,
) -> Result<OutcomeDistribution> {
    let raw = outcome_probabilities_raw(rho, povm)?;
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -NEGATIVE_PROB_TOL {
        return Err(Error::NegativeProbability {
            min,
            dist: Box::new(OutcomeDistribution::raw(povm.kind(), povm.n_qubits, raw)),
        });
    }
    let probs = raw.into_iter().map(|p| p.max(0.0)).collect();
    Ok(OutcomeDistribution::raw(povm.kind(), povm.n_qubits, probs))
}

/// Single-qubit overlap `T_{aa'} = tr[M_a M_{a'}]` with its condition number.
#[derive(Clone, Debug)]
pub struct OverlapMatrix {
    pub matrix: DMatrix<f64>,
    /// Ratio of largest to smallest eigenvalue.
    pub condition: f64,
}

pub fn overlap_matrix(povm: &SingleQubitPovm) -> Result<OverlapMatrix> {
    if povm.kind == PovmKind::Pauli6 {
        return Err(Error::SingularOverlap);
    }
    let k = povm.elements.len();
    let mut t = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = povm.elements[a].trace_product(&povm.elements[b]).re;
            t[(a, b)] = v;
            t[(b, a)] = v;
        }
    }
    let eig = t.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::MAX, f64::min);
    if min <= 1e-12 * max {
        return Err(Error::SingularOverlap);
    }
    Ok(OverlapMatrix {
        matrix: t,
        condition: max / min,
    })
}

/// Dual operators `Q_a` with `Σ_a tr[X M_a] Q_a = X`.
#[derive(Clone, Debug)]
pub struct DualFrame {
    povm: ProductPovm,
    single_duals: Vec<ComplexMatrix>,
    duals: Vec<ComplexMatrix>,
}

impl DualFrame {
    pub fn povm(&self) -> &ProductPovm {
        &self.povm
    }

    pub fn duals(&self) -> &[ComplexMatrix] {
        &self.duals
    }

    pub fn single_duals(&self) -> &[ComplexMatrix] {
        &self.single_duals
    }
}

/// Single-qubit duals from `T⁻¹`, tensor-factored across qubits.
pub fn dual_frame(povm: &ProductPovm) -> Result<DualFrame> {
    let overlap = overlap_matrix(&povm.single)?;
    let inv = overlap.matrix.try_inverse().ok_or(Error::SingularOverlap)?;
    let elems = &povm.single.elements;
    let single_duals: Vec<ComplexMatrix> = (0..elems.len())
        .map(|a| {
            elems
                .iter()
                .enumerate()
                .fold(ComplexMatrix::zeros(2), |acc, (b, m)| {
                    &acc + &m.scale(inv[(a, b)])
                })
        })
        .collect();
    let k = elems.len();
    let duals = (0..povm.n_outcomes())
        .map(|idx| {
            let tuple = outcome_tuple(idx, k, povm.n_qubits);
            tensor_all(tuple.iter().map(|&a| &single_duals[a]))
        })
        .collect();
    Ok(DualFrame {
        povm: povm.clone(),
        single_duals,
        duals,
    })
}

/// Linearly reconstructed operator with its spectrum's minimum.
#[derive(Clone, Debug)]
pub struct LinearReconstruction {
    pub rho: DensityMatrix,
    pub min_eigenvalue: f64,
    pub eigenvalues: Vec<f64>,
}

/// `ρ = Σ_a P(a) Q_a`. Pauli-6 input is coarse-grained to Pauli-4 first, so a
/// Pauli-4 frame is expected in that case. Negative eigenvalues are kept.
pub fn linear_reconstruct(
    p: &OutcomeDistribution,
    frame: &DualFrame,
) -> Result<LinearReconstruction> {
    let coarse;
    let p = if p.kind == PovmKind::Pauli6 && frame.povm.kind() == PovmKind::Pauli4 {
        coarse = coarse_grain_pauli6_to_pauli4(p)?;
        &coarse
    } else {
        p
    };
    if p.kind != frame.povm.kind() || p.n_qubits != frame.povm.n_qubits {
        return Err(Error::OutcomeSpaceMismatch);
    }
    let dim = frame.povm.dim();
    let m = p
        .probs
        .iter()
        .zip(&frame.duals)
        .fold(ComplexMatrix::zeros(dim), |acc, (&pa, q)| {
            &acc + &q.scale(pa)
        });
    let tr = m.trace().re;
    if (tr - 1.0).abs() > 1e-9 {
        return Err(Error::BadTrace(tr));
    }
    let rho = DensityMatrix::new(m)?;
    let eigenvalues = eig_herm(rho.matrix())?.values;
    Ok(LinearReconstruction {
        min_eigenvalue: *eigenvalues.last().expect("dim ≥ 1"),
        rho,
        eigenvalues,
    })
}

/// Generic per-qubit regrouping of outcome weights under an outcome map.
pub(crate) fn regroup<T>(
    weights: &[T],
    n_qubits: usize,
    from: usize,
    to: usize,
    map: &[usize],
) -> Vec<T>
where
    T: Copy + Default + std::ops::AddAssign,
{
    let mut out = vec![T::default(); to.pow(n_qubits as u32)];
    for (idx, &w) in weights.iter().enumerate() {
        let tuple: Vec<usize> = outcome_tuple(idx, from, n_qubits)
            .into_iter()
            .map(|a| map[a])
            .collect();
        out[outcome_index(&tuple, to)] += w;
    }
    out
}

/// Merges the three `↓` outcomes of each qubit into Pauli-4 element 3.
pub fn coarse_grain_pauli6_to_pauli4(p: &OutcomeDistribution) -> Result<OutcomeDistribution> {
    if p.kind != PovmKind::Pauli6 {
        return Err(Error::WrongKind {
            expected: PovmKind::Pauli6,
            got: p.kind,
        });
    }
    let probs = regroup(&p.probs, p.n_qubits, 6, 4, &PAULI6_TO_PAULI4);
    Ok(OutcomeDistribution::raw(
        PovmKind::Pauli4,
        p.n_qubits,
        probs,
    ))
}

/// `⟨O⟩ = Σ_a p(a) tr[O Q_a]`.
pub fn expectation_from_distribution(
    obs: &ComplexMatrix,
    p: &OutcomeDistribution,
    frame: &DualFrame,
) -> Result<f64> {
    if obs.dim() != frame.povm.dim() {
        return Err(Error::DimensionMismatch {
            expected: frame.povm.dim(),
            got: obs.dim(),
        });
    }
    if p.kind != frame.povm.kind() || p.n_qubits != frame.povm.n_qubits {
        return Err(Error::OutcomeSpaceMismatch);
    }
    Ok(p.probs
        .iter()
        .zip(&frame.duals)
        .map(|(&pa, q)| pa * obs.trace_product(q).re)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{
        bell_state, c, random_density_matrix, random_hermitian, sigma_z, tensor_product, PureState,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn up_z() -> DensityMatrix {
        PureState::new(vec![c(1.0, 0.0), c(0.0, 0.0)])
            .unwrap()
            .projector()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn single_povms_are_complete_and_positive() {
        for kind in PovmKind::ALL {
            let p = make_single_povm(kind);
            assert_eq!(p.elements().len(), kind.outcomes_per_qubit());
            let sum = p
                .elements()
                .iter()
                .fold(ComplexMatrix::zeros(2), |acc, m| &acc + m);
            assert!(
                sum.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12,
                "{kind}"
            );
            for m in p.elements() {
                assert!(eig_herm(m).unwrap().values[1] >= -1e-12);
            }
        }
    }

    #[test]
    fn pauli4_last_element() {
        let p = make_single_povm(PovmKind::Pauli4);
        let e = p.elements();
        let rest = &(&(&ComplexMatrix::identity(2) - &e[0]) - &e[1]) - &e[2];
        assert!(e[3].max_abs_diff(&rest) < 1e-15);
        assert!((e[3].trace().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tetra_vectors_match_listed_values() {
        let s = tetra_vectors();
        assert_eq!(s[0], [0.0, 0.0, 1.0]);
        assert!((s[1][0] - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-15);
        assert_eq!(s[1][1], 0.0);
        assert!((s[1][2] + 1.0 / 3.0).abs() < 1e-15);
        for a in 0..4 {
            let norm: f64 = s[a].iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-15);
            for b in 0..a {
                let dot: f64 = (0..3).map(|i| s[a][i] * s[b][i]).sum();
                assert!((dot + 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn product_completeness() {
        for kind in PovmKind::ALL {
            for n in 1..=3 {
                let povm = ProductPovm::new(kind, n).unwrap();
                let sum = povm
                    .elements()
                    .iter()
                    .fold(ComplexMatrix::zeros(povm.dim()), |acc, m| &acc + m);
                assert!(sum.max_abs_diff(&ComplexMatrix::identity(povm.dim())) < 1e-10);
            }
        }
    }

    #[test]
    fn indexing_round_trip() {
        for idx in 0..216 {
            let t = outcome_tuple(idx, 6, 3);
            assert_eq!(outcome_index(&t, 6), idx);
        }
        assert_eq!(outcome_tuple(7, 4, 2), vec![1, 3]);
    }

    #[test]
    fn probability_examples() {
        let mixed = DensityMatrix::maximally_mixed(4).unwrap();
        let p =
            outcome_probabilities(&mixed, &ProductPovm::new(PovmKind::Pauli6, 2).unwrap()).unwrap();
        assert_close(p.probs(), &[1.0 / 36.0; 36], 1e-15);

        let t =
            outcome_probabilities(&up_z(), &ProductPovm::new(PovmKind::Tetra, 1).unwrap()).unwrap();
        assert_close(t.probs(), &[0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0], 1e-15);

        let q = outcome_probabilities(&up_z(), &ProductPovm::new(PovmKind::Pauli4, 1).unwrap())
            .unwrap();
        assert_close(
            q.probs(),
            &[1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0],
            1e-15,
        );
    }

    #[test]
    fn negative_probabilities_are_flagged() {
        let bad = DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[-0.5, 1.5])).unwrap();
        let povm = ProductPovm::new(PovmKind::Tetra, 1).unwrap();
        match outcome_probabilities(&bad, &povm) {
            Err(Error::NegativeProbability { min, dist }) => {
                assert!(min < -1e-9);
                assert_eq!(dist.len(), 4);
            }
            other => panic!("expected flag, got {other:?}"),
        }
    }

    #[test]
    fn overlap_examples() {
        let t = overlap_matrix(&make_single_povm(PovmKind::Tetra)).unwrap();
        // tr[M_a M_b] = (1 + s_a·s_b)/8.
        for a in 0..4 {
            for b in 0..4 {
                let want = if a == b { 0.25 } else { 1.0 / 12.0 };
                assert!((t.matrix[(a, b)] - want).abs() < 1e-15);
            }
            // Row sums equal tr[M_a] = 1/2.
            let row: f64 = (0..4).map(|b| t.matrix[(a, b)]).sum();
            assert!((row - 0.5).abs() < 1e-15);
        }
        assert!((t.condition - 3.0).abs() < 1e-9);

        let t4 = overlap_matrix(&make_single_povm(PovmKind::Pauli4)).unwrap();
        assert_eq!(t4.matrix, t4.matrix.transpose());
        assert!(t4.matrix.determinant().abs() > 1e-6);
        // Entries tr[↑α↑β]/9 = (1 + δ_αβ)/18 in the upper block.
        assert!((t4.matrix[(0, 0)] - 1.0 / 9.0).abs() < 1e-15);
        assert!((t4.matrix[(0, 1)] - 1.0 / 18.0).abs() < 1e-15);

        assert!(matches!(
            overlap_matrix(&make_single_povm(PovmKind::Pauli6)),
            Err(Error::SingularOverlap)
        ));
    }

    #[test]
    fn duality_identity_on_elements() {
        for kind in [PovmKind::Pauli4, PovmKind::Tetra] {
            let povm = ProductPovm::new(kind, 2).unwrap();
            let frame = dual_frame(&povm).unwrap();
            for mb in povm.elements() {
                let rebuilt = povm
                    .elements()
                    .iter()
                    .zip(frame.duals())
                    .fold(ComplexMatrix::zeros(4), |acc, (ma, qa)| {
                        &acc + &ma.scale(mb.trace_product(qa).re)
                    });
                assert!(rebuilt.max_abs_diff(mb) < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_tetra_reconstructs_identity() {
        let povm = ProductPovm::new(PovmKind::Tetra, 1).unwrap();
        let frame = dual_frame(&povm).unwrap();
        let p = outcome_probabilities(&DensityMatrix::maximally_mixed(2).unwrap(), &povm).unwrap();
        assert_close(p.probs(), &[0.25; 4], 1e-15);
        let rec = linear_reconstruct(&p, &frame).unwrap();
        assert!(
            rec.rho
                .matrix()
                .max_abs_diff(&ComplexMatrix::identity(2).scale(0.5))
                < 1e-14
        );

        let povm2 = ProductPovm::new(PovmKind::Tetra, 2).unwrap();
        let rec2 = linear_reconstruct(
            &OutcomeDistribution::uniform(PovmKind::Tetra, 2),
            &dual_frame(&povm2).unwrap(),
        )
        .unwrap();
        assert!(
            rec2.rho
                .matrix()
                .max_abs_diff(&ComplexMatrix::identity(4).scale(0.25))
                < 1e-14
        );
    }

    #[test]
    fn bell_round_trip() {
        let bell = bell_state().projector();
        for kind in [PovmKind::Pauli4, PovmKind::Tetra] {
            let povm = ProductPovm::new(kind, 2).unwrap();
            let p = outcome_probabilities(&bell, &povm).unwrap();
            let rec = linear_reconstruct(&p, &dual_frame(&povm).unwrap()).unwrap();
            assert!(rec.rho.matrix().max_abs_diff(bell.matrix()) < 1e-10);
            assert!(rec.min_eigenvalue > -1e-10);
        }
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [PovmKind::Pauli4, PovmKind::Tetra] {
            let povm = ProductPovm::new(kind, 2).unwrap();
            let frame = dual_frame(&povm).unwrap();
            for _ in 0..100 {
                let rho = random_density_matrix(4, &mut rng);
                let p = outcome_probabilities(&rho, &povm).unwrap();
                let rec = linear_reconstruct(&p, &frame).unwrap();
                assert!(rec.rho.matrix().max_abs_diff(rho.matrix()) < 1e-10);
            }
        }
    }

    #[test]
    fn coarse_graining_examples() {
        let u = OutcomeDistribution::uniform(PovmKind::Pauli6, 2);
        let c4 = coarse_grain_pauli6_to_pauli4(&u).unwrap();
        assert!((c4.prob(&[3, 3]) - 0.25).abs() < 1e-15);
        assert!((c4.prob(&[0, 0]) - 1.0 / 36.0).abs() < 1e-15);
        assert!((c4.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p6 = ProductPovm::new(PovmKind::Pauli6, 2).unwrap();
        let p4 = ProductPovm::new(PovmKind::Pauli4, 2).unwrap();
        for _ in 0..20 {
            let rho = random_density_matrix(4, &mut rng);
            let a =
                coarse_grain_pauli6_to_pauli4(&outcome_probabilities(&rho, &p6).unwrap()).unwrap();
            let b = outcome_probabilities(&rho, &p4).unwrap();
            assert_close(a.probs(), b.probs(), 1e-15);
        }
        assert!(matches!(
            coarse_grain_pauli6_to_pauli4(&OutcomeDistribution::uniform(PovmKind::Tetra, 2)),
            Err(Error::WrongKind { .. })
        ));
    }

    #[test]
    fn pauli6_routes_through_pauli4() {
        let rho = DensityMatrix::werner(&bell_state(), 0.7).unwrap();
        let p6 =
            outcome_probabilities(&rho, &ProductPovm::new(PovmKind::Pauli6, 2).unwrap()).unwrap();
        let frame = dual_frame(&ProductPovm::new(PovmKind::Pauli4, 2).unwrap()).unwrap();
        let rec = linear_reconstruct(&p6, &frame).unwrap();
        assert!(rec.rho.matrix().max_abs_diff(rho.matrix()) < 1e-12);
        assert!(matches!(
            dual_frame(&ProductPovm::new(PovmKind::Pauli6, 2).unwrap()),
            Err(Error::SingularOverlap)
        ));
    }

    #[test]
    fn expectation_examples() {
        let povm = ProductPovm::new(PovmKind::Tetra, 2).unwrap();
        let frame = dual_frame(&povm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rho = random_density_matrix(4, &mut rng);
        let p = outcome_probabilities(&rho, &povm).unwrap();
        let id = ComplexMatrix::identity(4);
        assert!((expectation_from_distribution(&id, &p, &frame).unwrap() - 1.0).abs() < 1e-12);

        let bell = outcome_probabilities(&bell_state().projector(), &povm).unwrap();
        let zz = tensor_product(&sigma_z(), &sigma_z());
        assert!((expectation_from_distribution(&zz, &bell, &frame).unwrap() - 1.0).abs() < 1e-12);

        for _ in 0..20 {
            let rho = random_density_matrix(4, &mut rng);
            let o = random_hermitian(4, &mut rng);
            let p = outcome_probabilities(&rho, &povm).unwrap();
            let via = expectation_from_distribution(&o, &p, &frame).unwrap();
            assert!((via - rho.expectation(&o)).abs() < 1e-10);
        }
    }

    #[test]
    fn expectation_is_linear() {
        let povm = ProductPovm::new(PovmKind::Pauli4, 2).unwrap();
        let frame = dual_frame(&povm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let o1 = random_hermitian(4, &mut rng);
        let o2 = random_hermitian(4, &mut rng);
        let pa = outcome_probabilities(&random_density_matrix(4, &mut rng), &povm).unwrap();
        let pb = outcome_probabilities(&random_density_matrix(4, &mut rng), &povm).unwrap();
        let e = |o: &ComplexMatrix, p: &OutcomeDistribution| {
            expectation_from_distribution(o, p, &frame).unwrap()
        };
        let combo = &o1.scale(2.0) + &o2.scale(-0.5);
        assert!((e(&combo, &pa) - (2.0 * e(&o1, &pa) - 0.5 * e(&o2, &pa))).abs() < 1e-12);
        let w = 0.3;
        let mix = OutcomeDistribution::new(
            PovmKind::Pauli4,
            2,
            pa.probs()
                .iter()
                .zip(pb.probs())
                .map(|(a, b)| w * a + (1.0 - w) * b)
                .collect(),
        )
        .unwrap();
        assert!((e(&o1, &mix) - (w * e(&o1, &pa) + (1.0 - w) * e(&o1, &pb))).abs() < 1e-12);
    }
}
