//! Set-to-set prototype adapter: a single post-norm transformer encoder
//! block run over the stacked class prototypes.
//!
//! ```text
//! Z   = LN1(P + MHA(P))
//! out = LN2(Z + relu(Z W1 + b1) W2 + b2)
//! ```
//!
//! Only the forward pass exists. Weights come from a JSON file or from one of
//! the constructors below.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::jsonio::read_json;
use crate::numerics::{layer_norm_rows, matmul, relu, softmax_rows, Matrix};
use crate::rng::seeded;
use crate::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;

fn default_eps() -> f64 {
    DEFAULT_EPS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    #[serde(rename = "W_Q")]
    pub query: Matrix,
    #[serde(rename = "W_K")]
    pub key: Matrix,
    #[serde(rename = "W_V")]
    pub value: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

impl NormParams {
    /// Gain 1, bias 0.
    pub fn identity(d: usize) -> Self {
        Self {
            gain: vec![1.0; d],
            bias: vec![0.0; d],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformerWeights {
    pub d: usize,
    pub h: usize,
    pub d_ff: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    pub heads: Vec<HeadWeights>,
    #[serde(rename = "W_O")]
    pub output: Matrix,
    #[serde(rename = "W1")]
    pub ffn_in: Matrix,
    pub b1: Vec<f64>,
    #[serde(rename = "W2")]
    pub ffn_out: Matrix,
    pub b2: Vec<f64>,
    pub ln1: NormParams,
    pub ln2: NormParams,
}

fn check_shape(field: &str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::ShapeMismatch(field.to_string()));
    }
    Ok(())
}

fn check_len(field: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::ShapeMismatch(field.to_string()));
    }
    Ok(())
}

impl TransformerWeights {
    pub fn head_dim(&self) -> usize {
        self.d / self.h
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h) = (self.d, self.h);
        if d == 0 || h == 0 || self.d_ff == 0 {
            return Err(Error::InvariantViolation(format!(
                "d = {d}, h = {h}, d_ff = {} must all be positive",
                self.d_ff
            )));
        }
        if d % h != 0 {
            return Err(Error::InvariantViolation(format!(
                "d = {d} is not divisible by h = {h}"
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "eps = {} must be positive",
                self.eps
            )));
        }
        if self.heads.len() != h {
            return Err(Error::ShapeMismatch("heads".into()));
        }
        let dh = d / h;
        for head in &self.heads {
            check_shape("W_Q", &head.query, d, dh)?;
            check_shape("W_K", &head.key, d, dh)?;
            check_shape("W_V", &head.value, d, dh)?;
        }
        check_shape("W_O", &self.output, d, d)?;
        check_shape("W1", &self.ffn_in, d, self.d_ff)?;
        check_len("b1", &self.b1, self.d_ff)?;
        check_shape("W2", &self.ffn_out, self.d_ff, d)?;
        check_len("b2", &self.b2, d)?;
        check_len("ln1.gain", &self.ln1.gain, d)?;
        check_len("ln1.bias", &self.ln1.bias, d)?;
        check_len("ln2.gain", &self.ln2.gain, d)?;
        check_len("ln2.bias", &self.ln2.bias, d)?;
        Ok(())
    }

    /// All projections and biases zero, identity layer norms. The block then
    /// reduces to `LN(LN(P))`.
    pub fn zeros(d: usize, h: usize, d_ff: usize) -> Result<Self> {
        let dh = d.checked_div(h).unwrap_or(0);
        let w = Self {
            d,
            h,
            d_ff,
            eps: DEFAULT_EPS,
            heads: (0..h)
                .map(|_| HeadWeights {
                    query: Matrix::zeros(d, dh),
                    key: Matrix::zeros(d, dh),
                    value: Matrix::zeros(d, dh),
                })
                .collect(),
            output: Matrix::zeros(d, d),
            ffn_in: Matrix::zeros(d, d_ff),
            b1: vec![0.0; d_ff],
            ffn_out: Matrix::zeros(d_ff, d),
            b2: vec![0.0; d],
            ln1: NormParams::identity(d),
            ln2: NormParams::identity(d),
        };
        w.validate()?;
        Ok(w)
    }

    /// Gaussian weights scaled by `scale / sqrt(fan_in)`, small Gaussian
    /// biases and layer-norm gains near 1.
    pub fn seeded(d: usize, h: usize, d_ff: usize, seed: u64, scale: f64) -> Result<Self> {
        let mut w = Self::zeros(d, h, d_ff)?;
        let mut rng = seeded(seed);
        let mut normal = move || -> f64 { rng.sample(StandardNormal) };
        let mut fill = |m: &mut Matrix, std: f64| {
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    m.set(r, c, normal() * std);
                }
            }
        };
        let in_std = scale / (d as f64).sqrt();
        for head in &mut w.heads {
            fill(&mut head.query, in_std);
            fill(&mut head.key, in_std);
            fill(&mut head.value, in_std);
        }
        fill(&mut w.output, in_std);
        fill(&mut w.ffn_in, in_std);
        fill(&mut w.ffn_out, scale / (d_ff as f64).sqrt());
        let mut small = Matrix::zeros(1, d_ff + 5 * d);
        fill(&mut small, 0.1);
        let mut it = small.values().iter().copied();
        let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<f64>>();
        w.b1 = take(d_ff);
        w.b2 = take(d);
        w.ln1.gain = take(d).iter().map(|g| 1.0 + g).collect();
        w.ln1.bias = take(d);
        w.ln2.gain = take(d).iter().map(|g| 1.0 + g).collect();
        w.ln2.bias = take(d);
        w.validate()?;
        Ok(w)
    }

    /// Hand-built adapter that pushes prototypes away from their common
    /// centroid: queries and keys are zero so attention is uniform, values
    /// are the identity and `W_O = -alpha I`. The block computes
    /// `LN(LN(P - alpha * mean(P)))`.
    pub fn mean_repulsion(d: usize, alpha: f64) -> Result<Self> {
        let mut w = Self::zeros(d, 1, 2 * d)?;
        w.heads[0].value = Matrix::identity(d);
        w.output = Matrix::identity(d).scale(-alpha);
        Ok(w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("weights serialize")
    }
}

pub fn load_transformer_weights(path: &Path) -> Result<TransformerWeights> {
    let w: TransformerWeights = read_json(path)?;
    w.validate()?;
    Ok(w)
}

fn check_input(p: &Matrix, w: &TransformerWeights) -> Result<()> {
    if p.cols() != w.d || p.rows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "prototype stack {:?} for an adapter with d = {}",
            p.shape(),
            w.d
        )));
    }
    Ok(())
}

/// Pre-softmax logits of one head: `(P W_Q)(P W_K)ᵀ / sqrt(d / h)`.
pub fn attention_logits(p: &Matrix, head: &HeadWeights, head_dim: usize) -> Result<Matrix> {
    let q = matmul(p, &head.query)?;
    let k = matmul(p, &head.key)?;
    Ok(matmul(&q, &k.transpose())?.scale(1.0 / (head_dim as f64).sqrt()))
}

/// Row-stochastic attention matrix of every head.
pub fn attention_weights(p: &Matrix, w: &TransformerWeights) -> Result<Vec<Matrix>> {
    check_input(p, w)?;
    w.heads
        .iter()
        .map(|head| Ok(softmax_rows(&attention_logits(p, head, w.head_dim())?)))
        .collect()
}

/// Multi-head self-attention: `concat_i(A_i P W_V,i) W_O`.
pub fn self_attention(p: &Matrix, w: &TransformerWeights) -> Result<Matrix> {
    let weights = attention_weights(p, w)?;
    let heads = weights
        .iter()
        .zip(&w.heads)
        .map(|(a, head)| matmul(a, &matmul(p, &head.value)?))
        .collect::<Result<Vec<_>>>()?;
    matmul(&Matrix::hstack(&heads)?, &w.output)
}

/// Runs the encoder block over `p` (one prototype per row). Row `i` of the
/// result belongs to the same class as row `i` of the input.
pub fn adapt_prototypes(p: &Matrix, w: &TransformerWeights) -> Result<Matrix> {
    let attended = self_attention(p, w)?;
    let z = layer_norm_rows(&p.add(&attended)?, &w.ln1.gain, &w.ln1.bias, w.eps)?;
    let hidden = relu(&matmul(&z, &w.ffn_in)?.add_row_vector(&w.b1)?);
    let ffn = matmul(&hidden, &w.ffn_out)?.add_row_vector(&w.b2)?;
    layer_norm_rows(&z.add(&ffn)?, &w.ln2.gain, &w.ln2.bias, w.eps)
}
