//! Dense complex linear algebra and quantum-state primitives.
//!
//! Everything here is exact dense arithmetic on `2^N`-dimensional spaces with
//! small `N`. Qubit 1 is the most significant (leftmost) tensor factor, so the
//! computational-basis index of `|σ₁…σ_N⟩` is `Σ σ_k 2^(N−k)` with `σ = 0` for
//! `↑_z` and `σ = 1` for `↓_z`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance used when validating inputs (Hermiticity, trace, normalization).
pub const VERIFY_TOL: f64 = 1e-10;
/// Eigenvalues in `[-CLIP_TOL, 0)` are treated as rounding noise.
pub const CLIP_TOL: f64 = 1e-10;
/// Eigenvalues below `-UNPHYSICAL_TOL` mark a genuinely unphysical state.
pub const UNPHYSICAL_TOL: f64 = 1e-6;
/// Eigenvalues below this are treated as exact zeros inside matrix square roots.
const SPECTRAL_FLOOR: f64 = 1e-14;
/// Largest supported register.
pub const MAX_QUBITS: usize = 8;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Square complex matrix in row-major storage semantics.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim(), self.dim())?;
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim())
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self(DMatrix::from_fn(dim, dim, f))
    }

    /// Builds a matrix from `dim*dim` entries listed row by row.
    pub fn from_row_slice(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim || dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        if entries
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Format("non-finite matrix entry".into()));
        }
        Ok(Self(DMatrix::from_row_slice(dim, dim, entries)))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), |i, j| {
            if i == j {
                c(diag[i], 0.0)
            } else {
                C64::default()
            }
        })
    }

    /// Outer product `|u⟩⟨v|`.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        assert_eq!(u.len(), v.len());
        Self::from_fn(u.len(), |i, j| u[i] * v[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_nalgebra(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    /// `tr[self · other]`, computed without forming the product.
    pub fn trace_product(&self, other: &ComplexMatrix) -> C64 {
        let n = self.dim();
        let mut acc = C64::default();
        for i in 0..n {
            for k in 0..n {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Max-norm distance to the adjoint.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `(M + M†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()).map(|z| z * 0.5))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<C64> {
        let n = self.dim();
        (0..n * n).map(|k| self[(k / n, k % n)]).collect()
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.dim();
        assert_eq!(v.len(), n);
        (0..n)
            .map(|i| (0..n).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut C64 {
        &mut self.0[idx]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for ComplexMatrix {
            type Output = ComplexMatrix;
            fn $m(self, rhs: ComplexMatrix) -> ComplexMatrix {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

pub fn sigma_x() -> ComplexMatrix {
    ComplexMatrix::from_fn(2, |i, j| if i != j { c(1.0, 0.0) } else { c(0.0, 0.0) })
}

pub fn sigma_y() -> ComplexMatrix {
    ComplexMatrix::from_fn(2, |i, j| match (i, j) {
        (0, 1) => c(0.0, -1.0),
        (1, 0) => c(0.0, 1.0),
        _ => c(0.0, 0.0),
    })
}

pub fn sigma_z() -> ComplexMatrix {
    ComplexMatrix::from_real_diagonal(&[1.0, -1.0])
}

/// `(𝟙 + n·σ)/2`, the projector onto the Bloch direction `n` when `|n| = 1`.
pub fn bloch_operator(n: [f64; 3]) -> ComplexMatrix {
    let id = ComplexMatrix::identity(2);
    let s = &(&sigma_x().scale(n[0]) + &sigma_y().scale(n[1])) + &sigma_z().scale(n[2]);
    (&id + &s).scale(0.5)
}

/// Kronecker product `a ⊗ b`.
pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (na, nb) = (a.dim(), b.dim());
    ComplexMatrix::from_fn(na * nb, |i, j| a[(i / nb, j / nb)] * b[(i % nb, j % nb)])
}

/// `m ⊗ m ⊗ … ⊗ m` over the given factors, left to right.
pub fn tensor_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    factors
        .into_iter()
        .fold(ComplexMatrix::identity(1), |acc, f| tensor_product(&acc, f))
}

fn qubits_of(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(dim));
    }
    let n = dim.trailing_zeros() as usize;
    if n > MAX_QUBITS {
        return Err(Error::TooLarge(dim));
    }
    Ok(n)
}

/// Normalized state vector on `2^N` dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: Vec<C64>,
}

impl PureState {
    /// Accepts amplitudes whose 2-norm is 1 within [`VERIFY_TOL`].
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        qubits_of(amps.len())?;
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > VERIFY_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self {
            amps: amps.into_iter().map(|z| z / norm).collect(),
        })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amps: Vec<C64>) -> Result<Self> {
        qubits_of(amps.len())?;
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self {
            amps: amps.into_iter().map(|z| z / norm).collect(),
        })
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.amps.len().trailing_zeros() as usize
    }

    pub fn tensor(&self, other: &PureState) -> PureState {
        let amps = self
            .amps
            .iter()
            .flat_map(|a| other.amps.iter().map(move |b| a * b))
            .collect();
        PureState { amps }
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn projector(&self) -> DensityMatrix {
        DensityMatrix::from_unchecked(ComplexMatrix::outer(&self.amps, &self.amps))
    }
}

/// `(|0…0⟩ + |1…1⟩)/√2` on two qubits.
pub fn bell_state() -> PureState {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    PureState {
        amps: vec![c(h, 0.0), C64::default(), C64::default(), c(h, 0.0)],
    }
}

/// `(|00⟩ + e^{iφ}|11⟩)/√2`.
pub fn phased_bell_state(phase: f64) -> PureState {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    PureState {
        amps: vec![
            c(h, 0.0),
            C64::default(),
            C64::default(),
            C64::from_polar(h, phase),
        ],
    }
}

/// Hermitian unit-trace operator. Positivity is queryable, not enforced.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    m: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity and trace at [`VERIFY_TOL`], then projects onto the
    /// exactly Hermitian, exactly unit-trace set.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        qubits_of(m.dim())?;
        if !m.is_finite() {
            return Err(Error::Format("non-finite density matrix entry".into()));
        }
        let defect = m.hermitian_defect();
        if defect > VERIFY_TOL {
            return Err(Error::NotHermitian(defect));
        }
        let tr = m.trace().re;
        if (tr - 1.0).abs() > VERIFY_TOL {
            return Err(Error::BadTrace(tr));
        }
        Ok(Self::from_unchecked(m))
    }

    /// Hermitizes and divides by the trace.
    pub fn normalized(m: ComplexMatrix) -> Result<Self> {
        qubits_of(m.dim())?;
        let h = m.hermitian_part();
        let tr = h.trace().re;
        if !(tr.is_finite() && tr.abs() > 0.0) {
            return Err(Error::BadTrace(tr));
        }
        Ok(Self::from_unchecked(h.scale(1.0 / tr)))
    }

    pub(crate) fn from_unchecked(m: ComplexMatrix) -> Self {
        let mut h = m.hermitian_part();
        let n = h.dim();
        // Real diagonal and exact unit trace.
        for i in 0..n {
            h[(i, i)].im = 0.0;
        }
        let tr = h.trace().re;
        if tr != 0.0 && (tr - 1.0).abs() > 0.0 {
            let delta = (1.0 - tr) / n as f64;
            for i in 0..n {
                h[(i, i)].re += delta;
            }
        }
        Self { m: h }
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        qubits_of(dim)?;
        Ok(Self::from_unchecked(
            ComplexMatrix::identity(dim).scale(1.0 / dim as f64),
        ))
    }

    /// `p·|ψ⟩⟨ψ| + (1−p)·𝟙/d`.
    pub fn werner(psi: &PureState, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("mixing weight {p} outside [0, 1]")));
        }
        let d = psi.dim();
        let mixed = ComplexMatrix::identity(d).scale((1.0 - p) / d as f64);
        Ok(Self::from_unchecked(&psi.projector().m.scale(p) + &mixed))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    pub fn n_qubits(&self) -> usize {
        self.m.dim().trailing_zeros() as usize
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    /// `Re tr[ρ O]`.
    pub fn expectation(&self, obs: &ComplexMatrix) -> f64 {
        self.m.trace_product(obs).re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eig_herm(&self.m)
            .expect("density matrices are Hermitian by construction")
            .values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("dim ≥ 1")
    }

    /// Minimum eigenvalue is at least `-tol`.
    pub fn is_physical(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        Self::from_unchecked(tensor_product(&self.m, &other.m))
    }

    /// Mixture `w·self + (1−w)·other`.
    pub fn mix(&self, other: &DensityMatrix, w: f64) -> DensityMatrix {
        Self::from_unchecked(&self.m.scale(w) + &other.m.scale(1.0 - w))
    }
}

/// Reduced state of the leading `n_sys` qubits of a pure state on
/// `n_sys + n_anc` qubits (ancillae are the trailing index positions).
pub fn partial_trace_ancilla(psi: &PureState, n_sys: usize, n_anc: usize) -> Result<DensityMatrix> {
    let expected = 1usize << (n_sys + n_anc);
    if psi.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: psi.dim(),
        });
    }
    let ds = 1usize << n_sys;
    let da = 1usize << n_anc;
    let a = psi.amplitudes();
    let m = ComplexMatrix::from_fn(ds, |s, t| {
        (0..da).map(|k| a[s * da + k] * a[t * da + k].conj()).sum()
    });
    Ok(DensityMatrix::from_unchecked(m))
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// `V f(Λ) V†`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.values.len();
        let v = &self.vectors;
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        ComplexMatrix::from_fn(n, |i, j| {
            (0..n).map(|k| v[(i, k)] * v[(j, k)].conj() * fl[k]).sum()
        })
    }

    pub fn eigenvector(&self, k: usize) -> Vec<C64> {
        (0..self.values.len())
            .map(|i| self.vectors[(i, k)])
            .collect()
    }
}

pub fn eig_herm(m: &ComplexMatrix) -> Result<EigenDecomposition> {
    let defect = m.hermitian_defect();
    if defect > VERIFY_TOL * m.max_abs().max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    let eig = m.hermitian_part().0.symmetric_eigen();
    let n = m.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(n, |i, col| eig.eigenvectors[(i, order[col])]);
    Ok(EigenDecomposition { values, vectors })
}

fn checked_spectrum(rho: &DensityMatrix) -> Result<EigenDecomposition> {
    let e = eig_herm(rho.matrix())?;
    let min = *e.values.last().expect("dim ≥ 1");
    if min < -UNPHYSICAL_TOL {
        return Err(Error::Unphysical(min));
    }
    Ok(e)
}

/// Uhlmann fidelity `(tr√(√ρ σ √ρ))²`, clamped to `[0, 1]`.
///
/// Eigenvalues down to `-UNPHYSICAL_TOL` are clipped to zero; anything more
/// negative is rejected as unphysical.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: sigma.dim(),
        });
    }
    // Eigenvalues at the level of eigensolver noise are zeroed before the square
    // root, and tr√(√ρσ√ρ) is taken as the nuclear norm of √σ√ρ.
    let root =
        |e: EigenDecomposition| e.map_spectrum(|l| if l > SPECTRAL_FLOOR { l.sqrt() } else { 0.0 });
    let sqrt_rho = root(checked_spectrum(rho)?);
    let sqrt_sigma = root(checked_spectrum(sigma)?);
    let prod = &sqrt_sigma * &sqrt_rho;
    let nuclear: f64 = prod.0.svd(false, false).singular_values.iter().sum();
    Ok((nuclear * nuclear).clamp(0.0, 1.0))
}

/// `⟨ψ|ρ|ψ⟩`; defined for unphysical ρ too.
pub fn fidelity_pure(rho: &DensityMatrix, psi: &PureState) -> Result<f64> {
    if rho.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: psi.dim(),
        });
    }
    let a = psi.amplitudes();
    let rho_psi = rho.matrix().apply(a);
    Ok(a.iter()
        .zip(&rho_psi)
        .map(|(x, y)| x.conj() * y)
        .sum::<C64>()
        .re)
}

/// `tr(ρ²)`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.matrix().0.iter().map(|z| z.norm_sqr()).sum()
}

/// `½‖ρ − σ‖₁`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: sigma.dim(),
        });
    }
    let diff = rho.matrix() - sigma.matrix();
    Ok(0.5 * eig_herm(&diff)?.values.iter().map(|l| l.abs()).sum::<f64>())
}

fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    c(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-random pure state.
pub fn random_pure_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> PureState {
    let amps = (0..dim).map(|_| gaussian_complex(rng)).collect();
    PureState::normalized(amps).expect("gaussian vector is nonzero")
}

/// Hilbert–Schmidt random density matrix `GG†/tr(GG†)`.
pub fn random_density_matrix<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    let g = ComplexMatrix::from_fn(dim, |_, _| gaussian_complex(rng));
    DensityMatrix::normalized(&g * &g.adjoint()).expect("random matrix has positive trace")
}

/// Random Hermitian matrix with Gaussian entries.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(dim, |_, _| gaussian_complex(rng)).hermitian_part()
}

#[derive(Serialize, Deserialize)]
struct DensityMatrixJson {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Serialize for DensityMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        let rows = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| (0..n).map(|j| f(&self.m[(i, j)])).collect())
                .collect()
        };
        DensityMatrixJson {
            dim: n,
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = DensityMatrixJson::deserialize(d)?;
        let n = j.dim;
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !shape_ok(&j.re) || !shape_ok(&j.im) {
            return Err(D::Error::custom("density matrix rows do not match dim"));
        }
        let entries: Vec<C64> = (0..n * n)
            .map(|k| c(j.re[k / n][k % n], j.im[k / n][k % n]))
            .collect();
        let m = ComplexMatrix::from_row_slice(n, &entries).map_err(D::Error::custom)?;
        DensityMatrix::new(m).map_err(D::Error::custom)
    }
}
