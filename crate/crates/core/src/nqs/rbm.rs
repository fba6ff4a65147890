//! Restricted Boltzmann machine with binary hidden units and either binary or
//! one-hot-block visible units.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VisibleLayout {
    Binary {
        units: usize,
    },
    /// `blocks` groups of `width` units with exactly one active per group.
    OneHot {
        blocks: usize,
        width: usize,
    },
}

impl VisibleLayout {
    pub fn n_units(&self) -> usize {
        match *self {
            VisibleLayout::Binary { units } => units,
            VisibleLayout::OneHot { blocks, width } => blocks * width,
        }
    }

    /// Number of admissible visible configurations.
    pub fn n_configs(&self) -> usize {
        match *self {
            VisibleLayout::Binary { units } => 1usize << units,
            VisibleLayout::OneHot { blocks, width } => width.pow(blocks as u32),
        }
    }

    /// Dense encoding of configuration `index` (most significant unit/block first).
    pub fn encode(&self, index: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_units()];
        match *self {
            VisibleLayout::Binary { units } => {
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi = ((index >> (units - 1 - i)) & 1) as f64;
                }
            }
            VisibleLayout::OneHot { blocks, width } => {
                let mut rest = index;
                for blk in (0..blocks).rev() {
                    v[blk * width + rest % width] = 1.0;
                    rest /= width;
                }
            }
        }
        v
    }

    pub fn encode_all(&self) -> Vec<Vec<f64>> {
        (0..self.n_configs()).map(|i| self.encode(i)).collect()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights are stored hidden-major: `weights[j * n_visible + i]` couples hidden
/// unit `j` to visible unit `i`. The flat parameter order is
/// `[weights | visible_bias | hidden_bias]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    pub visible: VisibleLayout,
    pub n_hidden: usize,
    pub weights: Vec<f64>,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
}

impl RbmParams {
    pub fn zeros(visible: VisibleLayout, n_hidden: usize) -> Self {
        let nv = visible.n_units();
        Self {
            visible,
            n_hidden,
            weights: vec![0.0; nv * n_hidden],
            visible_bias: vec![0.0; nv],
            hidden_bias: vec![0.0; n_hidden],
        }
    }

    pub fn random<R: Rng + ?Sized>(
        visible: VisibleLayout,
        n_hidden: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(visible, n_hidden);
        let normal = Normal::new(0.0, std).expect("finite std");
        let flat: Vec<f64> = (0..p.n_params()).map(|_| normal.sample(rng)).collect();
        p.set_flat(&flat);
        p
    }

    pub fn n_visible(&self) -> usize {
        self.visible.n_units()
    }

    pub fn n_params(&self) -> usize {
        let nv = self.n_visible();
        nv * self.n_hidden + nv + self.n_hidden
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.n_visible();
        if self.weights.len() != nv * self.n_hidden
            || self.visible_bias.len() != nv
            || self.hidden_bias.len() != self.n_hidden
        {
            return Err(Error::Format(
                "RBM parameter shapes do not match the layout".into(),
            ));
        }
        if self.to_flat().iter().any(|x| !x.is_finite()) {
            return Err(Error::Format("RBM parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        out.extend_from_slice(&self.weights);
        out.extend_from_slice(&self.visible_bias);
        out.extend_from_slice(&self.hidden_bias);
        out
    }

    pub fn set_flat(&mut self, x: &[f64]) {
        let nw = self.weights.len();
        let nv = self.visible_bias.len();
        self.weights.copy_from_slice(&x[..nw]);
        self.visible_bias.copy_from_slice(&x[nw..nw + nv]);
        self.hidden_bias
            .copy_from_slice(&x[nw + nv..nw + nv + self.n_hidden]);
    }

    pub fn weight_index(&self, hidden: usize, visible: usize) -> usize {
        hidden * self.n_visible() + visible
    }

    pub fn visible_bias_index(&self, visible: usize) -> usize {
        self.weights.len() + visible
    }

    fn hidden_input(&self, j: usize, v: &[f64]) -> f64 {
        let nv = self.n_visible();
        self.hidden_bias[j]
            + self.weights[j * nv..(j + 1) * nv]
                .iter()
                .zip(v)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }

    /// `ln Σ_h exp(−E(v, h))`.
    pub fn log_weight(&self, v: &[f64]) -> f64 {
        let bias: f64 = self.visible_bias.iter().zip(v).map(|(d, x)| d * x).sum();
        bias + (0..self.n_hidden)
            .map(|j| softplus(self.hidden_input(j, v)))
            .sum::<f64>()
    }

    /// Adds `coef · ∂ ln p̃(v)/∂θ` to `out` (flat layout).
    pub fn add_log_grad(&self, v: &[f64], coef: f64, out: &mut [f64]) {
        let nv = self.n_visible();
        let nw = self.weights.len();
        for j in 0..self.n_hidden {
            let s = coef * sigmoid(self.hidden_input(j, v));
            for (o, x) in out[j * nv..(j + 1) * nv].iter_mut().zip(v) {
                *o += s * x;
            }
            out[nw + nv + j] += s;
        }
        for (o, x) in out[nw..nw + nv].iter_mut().zip(v) {
            *o += coef * x;
        }
    }

    /// Samples `h ~ p(h | v)`.
    pub fn sample_hidden<R: Rng + ?Sized>(&self, v: &[f64], rng: &mut R, h: &mut [f64]) {
        for (j, hj) in h.iter_mut().enumerate() {
            *hj = if rng.random::<f64>() < sigmoid(self.hidden_input(j, v)) {
                1.0
            } else {
                0.0
            };
        }
    }

    /// Samples `v ~ p(v | h)`, one softmax draw per block for one-hot layouts.
    pub fn sample_visible<R: Rng + ?Sized>(&self, h: &[f64], rng: &mut R, v: &mut [f64]) {
        let nv = self.n_visible();
        let input = |i: usize| -> f64 {
            self.visible_bias[i]
                + (0..self.n_hidden)
                    .map(|j| self.weights[j * nv + i] * h[j])
                    .sum::<f64>()
        };
        match self.visible {
            VisibleLayout::Binary { .. } => {
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi = if rng.random::<f64>() < sigmoid(input(i)) {
                        1.0
                    } else {
                        0.0
                    };
                }
            }
            VisibleLayout::OneHot { blocks, width } => {
                let mut logits = vec![0.0; width];
                for blk in 0..blocks {
                    for (k, l) in logits.iter_mut().enumerate() {
                        *l = input(blk * width + k);
                    }
                    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let weights: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                    let total: f64 = weights.iter().sum();
                    let mut u = rng.random::<f64>() * total;
                    let mut pick = width - 1;
                    for (k, w) in weights.iter().enumerate() {
                        if u < *w {
                            pick = k;
                            break;
                        }
                        u -= w;
                    }
                    for k in 0..width {
                        v[blk * width + k] = if k == pick { 1.0 } else { 0.0 };
                    }
                }
            }
        }
    }
}

/// `ln Σ exp(x_i)`.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
