//! CHSH Bell parameter from states and from simulated direct measurements.
//!
//! Measurement axes lie in the z–x plane: `A(θ) = cosθ σ_z + sinθ σ_x`, and
//! `S(θ) = E(0, θ) + E(0, −θ) + E(2θ, θ) − E(2θ, −θ)`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{derive_seed, multinomial, rng_from_seed};
use crate::qcore::{
    bloch_operator, sigma_x, sigma_z, tensor_product, ComplexMatrix, DensityMatrix, CLIP_TOL,
};

pub const DEFAULT_GRID_POINTS: usize = 60;

/// `cosθ σ_z + sinθ σ_x`.
pub fn measurement_axis(theta: f64) -> ComplexMatrix {
    let (s, c) = theta.sin_cos();
    &sigma_z().scale(c) + &sigma_x().scale(s)
}

/// Projector onto the `±1` eigenspace of [`measurement_axis`].
fn axis_projector(theta: f64, up: bool) -> ComplexMatrix {
    let (s, c) = theta.sin_cos();
    let sign = if up { 1.0 } else { -1.0 };
    bloch_operator([sign * s, 0.0, sign * c])
}

fn require_two_qubits(rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: rho.dim(),
        });
    }
    Ok(())
}

/// `E(θ_a, θ_b) = tr[ρ A(θ_a) ⊗ A(θ_b)]`.
pub fn correlation(rho: &DensityMatrix, theta_a: f64, theta_b: f64) -> Result<f64> {
    require_two_qubits(rho)?;
    Ok(rho.expectation(&tensor_product(
        &measurement_axis(theta_a),
        &measurement_axis(theta_b),
    )))
}

/// The four `(θ_a, θ_b, sign)` setting pairs entering `S(θ)`.
pub fn chsh_settings(theta: f64) -> [(f64, f64, f64); 4] {
    [
        (0.0, theta, 1.0),
        (0.0, -theta, 1.0),
        (2.0 * theta, theta, 1.0),
        (2.0 * theta, -theta, -1.0),
    ]
}

/// `S(θ)`; unphysical inputs may exceed `2√2` and are not clamped.
pub fn bell_parameter(rho: &DensityMatrix, theta: f64) -> Result<f64> {
    require_two_qubits(rho)?;
    chsh_settings(theta)
        .iter()
        .map(|&(a, b, s)| correlation(rho, a, b).map(|e| s * e))
        .sum()
}

/// Coincidences `(N_↑↑, N_↑↓, N_↓↑, N_↓↓)` of one setting pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingCounts {
    pub uu: f64,
    pub ud: f64,
    pub du: f64,
    pub dd: f64,
}

impl SettingCounts {
    pub fn total(&self) -> f64 {
        self.uu + self.ud + self.du + self.dd
    }

    /// `(N_↑↑ + N_↓↓ − N_↑↓ − N_↓↑)/N_tot`.
    pub fn correlation(&self) -> Result<f64> {
        let t = self.total();
        if !(t > 0.0) {
            return Err(Error::ZeroTotal);
        }
        Ok((self.uu + self.dd - self.ud - self.du) / t)
    }
}

/// Counts for the four setting pairs of `S(θ)`, in [`chsh_settings`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellCounts {
    pub theta: f64,
    pub settings: [SettingCounts; 4],
}

pub fn bell_from_counts(c: &BellCounts) -> Result<f64> {
    let signs = chsh_settings(c.theta).map(|(_, _, s)| s);
    c.settings
        .iter()
        .zip(signs)
        .map(|(s, sign)| s.correlation().map(|e| sign * e))
        .sum()
}

fn joint_probabilities(rho: &DensityMatrix, ta: f64, tb: f64) -> [f64; 4] {
    let mut p = [0.0; 4];
    for (k, (ua, ub)) in [(true, true), (true, false), (false, true), (false, false)]
        .into_iter()
        .enumerate()
    {
        let op = tensor_product(&axis_projector(ta, ua), &axis_projector(tb, ub));
        p[k] = rho.expectation(&op).max(0.0);
    }
    p
}

/// `n_per_setting · P(outcome)` for every setting pair.
pub fn expected_bell_counts(
    rho: &DensityMatrix,
    theta: f64,
    n_per_setting: f64,
) -> Result<BellCounts> {
    require_two_qubits(rho)?;
    let settings = chsh_settings(theta).map(|(a, b, _)| {
        let p = joint_probabilities(rho, a, b);
        SettingCounts {
            uu: p[0] * n_per_setting,
            ud: p[1] * n_per_setting,
            du: p[2] * n_per_setting,
            dd: p[3] * n_per_setting,
        }
    });
    Ok(BellCounts { theta, settings })
}

/// Multinomial coincidences for each setting pair of `S(θ)`.
pub fn simulate_bell_measurement(
    rho: &DensityMatrix,
    theta: f64,
    n_per_setting: u64,
    seed: u64,
) -> Result<BellCounts> {
    require_two_qubits(rho)?;
    let min = rho.min_eigenvalue();
    if min < -CLIP_TOL {
        return Err(Error::Unphysical(min));
    }
    let mut rng = rng_from_seed(seed);
    let settings = chsh_settings(theta).map(|(a, b, _)| {
        let k = multinomial(&joint_probabilities(rho, a, b), n_per_setting, &mut rng);
        SettingCounts {
            uu: k[0],
            ud: k[1],
            du: k[2],
            dd: k[3],
        }
    });
    Ok(BellCounts { theta, settings })
}

/// `θ_k = kπ/n` for `k = 0..n`: `n` evenly spaced angles covering `[0, π)`.
/// For `n` divisible by 4 the grid contains `π/4`.
pub fn theta_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| PI * k as f64 / n as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellCurve {
    pub source: String,
    pub thetas: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<Vec<f64>>,
}

impl BellCurve {
    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_θ |S_self(θ) − S_other(θ)|` on a shared grid.
    pub fn max_deviation(&self, other: &BellCurve) -> Result<f64> {
        if self.thetas.len() != other.thetas.len()
            || self
                .thetas
                .iter()
                .zip(&other.thetas)
                .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::Config("Bell curves use different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// `theta,S[,std]` with one row per grid point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(if self.std.is_some() {
            "theta,S,std\n"
        } else {
            "theta,S\n"
        });
        for (i, (t, s)) in self.thetas.iter().zip(&self.values).enumerate() {
            match &self.std {
                Some(std) => writeln!(out, "{t},{s},{}", std[i]),
                None => writeln!(out, "{t},{s}"),
            }
            .expect("write to string");
        }
        out
    }

    pub fn from_csv(source: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty Bell CSV".into()))?;
        let with_std = match header.trim() {
            "theta,S" => false,
            "theta,S,std" => true,
            other => {
                return Err(Error::Format(format!(
                    "unexpected Bell CSV header {other:?}"
                )))
            }
        };
        let (mut thetas, mut values, mut std) = (vec![], vec![], vec![]);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("bad Bell CSV row {line:?}: {e}")))?;
            if cols.len() != if with_std { 3 } else { 2 } {
                return Err(Error::Format(format!("bad Bell CSV row {line:?}")));
            }
            thetas.push(cols[0]);
            values.push(cols[1]);
            if with_std {
                std.push(cols[2]);
            }
        }
        Ok(Self {
            source: source.to_string(),
            thetas,
            values,
            std: with_std.then_some(std),
        })
    }
}

pub fn bell_curve(rho: &DensityMatrix, thetas: &[f64], source: &str) -> Result<BellCurve> {
    if thetas.is_empty() {
        return Err(Error::Config("empty θ grid".into()));
    }
    let values = thetas
        .iter()
        .map(|&t| bell_parameter(rho, t))
        .collect::<Result<_>>()?;
    Ok(BellCurve {
        source: source.to_string(),
        thetas: thetas.to_vec(),
        values,
        std: None,
    })
}

/// Direct-measurement analog: simulated counts at every grid point.
pub fn measured_bell_curve(
    rho: &DensityMatrix,
    thetas: &[f64],
    n_per_setting: u64,
    seed: u64,
) -> Result<BellCurve> {
    let values = thetas
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let s = derive_seed(seed, &format!("bell-point-{k}"));
            bell_from_counts(&simulate_bell_measurement(rho, t, n_per_setting, s)?)
        })
        .collect::<Result<_>>()?;
    Ok(BellCurve {
        source: "direct".into(),
        thetas: thetas.to_vec(),
        values,
        std: None,
    })
}

/// Ideal-Bell-state curve `3cosθ − cos3θ`.
pub fn ideal_bell_value(theta: f64) -> f64 {
    3.0 * theta.cos() - (3.0 * theta).cos()
}
