use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::rotary::{rotary_frequencies, rotary_in_place};
use super::{Embedded, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::linalg::{add_row_bias, dot, matmul, matmul_nt_acc, matmul_tn_acc, sum_rows_acc};
use crate::rng::DetRng;

const LN_EPS: f64 = 1e-5;

pub enum Mode<'a> {
    /// Dropout off; output is a deterministic function of the inputs.
    Eval,
    Train(&'a mut DetRng),
}

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    h1: Vec<f64>,
    ln1: LnCache,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    attn: Vec<f64>,
    o_mask: Option<Vec<f64>>,
    ln2: LnCache,
    h2: Vec<f64>,
    pre_act: Vec<f64>,
    act: Vec<f64>,
    f_mask: Option<Vec<f64>>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    n: usize,
    tokens: Vec<u32>,
    times: Vec<f64>,
    /// Start of the attention window for each position.
    window_start: Vec<usize>,
    /// Offset of each position's window inside a head's probability block.
    window_offset: Vec<usize>,
    window_total: usize,
    layers: Vec<LayerCache>,
    final_ln: LnCache,
    output: Vec<f64>,
}

impl EncoderCache {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Representations, `len × inner_dim`, row-major.
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let d = self.output.len() / self.n.max(1);
        &self.output[j * d..(j + 1) * d]
    }
}

fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], out: &mut [f64]) -> LnCache {
    let d = gain.len();
    let n = x.len() / d;
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / libm::sqrt(var + LN_EPS);
        inv_std[i] = inv;
        for c in 0..d {
            let xh = (row[c] - mean) * inv;
            xhat[i * d + c] = xh;
            out[i * d + c] = xh * gain[c] + bias[c];
        }
    }
    LnCache { xhat, inv_std }
}

fn layer_norm_backward(cache: &LnCache, gain: &[f64], dy: &[f64], dx: &mut [f64], dgain: &mut [f64], dbias: &mut [f64]) {
    let d = gain.len();
    let n = cache.inv_std.len();
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let g = &dy[i * d..(i + 1) * d];
        for c in 0..d {
            dgain[c] += g[c] * xh[c];
            dbias[c] += g[c];
            dxhat[c] = g[c] * gain[c];
        }
        let sum = dxhat.iter().sum::<f64>();
        let sum_xh = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>();
        let scale = cache.inv_std[i] / d as f64;
        for c in 0..d {
            dx[i * d + c] += scale * (d as f64 * dxhat[c] - sum - xh[c] * sum_xh);
        }
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2));
    let pdf = libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * core::f64::consts::PI);
    cdf + x * pdf
}

fn dropout_mask(rng: &mut DetRng, len: usize, p: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect()
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Runs the encoder over one sequence and records the activations needed for
/// [`backward`].
pub fn forward(config: &EncoderConfig, params: &EncoderParams, input: &Embedded, mut mode: Mode<'_>) -> Result<EncoderCache> {
    let n = input.len();
    let d = config.inner_dim;
    let f = config.ffn_dim();
    let heads = config.heads;
    let hd = config.head_dim();
    let scale = 1.0 / libm::sqrt(hd as f64);
    let freqs = rotary_frequencies(hd, config.rotary_base);
    let dropout = match mode {
        Mode::Train(_) if config.dropout > 0.0 => config.dropout,
        _ => 0.0,
    };

    let window_start: Vec<usize> = (0..n).map(|i| (i + 1).saturating_sub(config.attention_window)).collect();
    let mut window_offset = Vec::with_capacity(n);
    let mut total = 0;
    for i in 0..n {
        window_offset.push(total);
        total += i + 1 - window_start[i];
    }

    let mut x = vec![0.0; n * d];
    for (i, &tok) in input.tokens.iter().enumerate() {
        let tok = tok as usize;
        if tok * d >= params.embedding.len() {
            return Err(Error::shape(format!("token {tok} outside embedding table")));
        }
        x[i * d..(i + 1) * d].copy_from_slice(&params.embedding[tok * d..(tok + 1) * d]);
    }

    let mut layers = Vec::with_capacity(config.layers);
    for (li, lp) in params.layers.iter().enumerate() {
        let mut h1 = vec![0.0; n * d];
        let ln1 = layer_norm(&x, &lp.ln1_gain, &lp.ln1_bias, &mut h1);
        let mut q = vec![0.0; n * d];
        let mut k = vec![0.0; n * d];
        let mut v = vec![0.0; n * d];
        matmul(&h1, &lp.wq, &mut q, n, d, d);
        matmul(&h1, &lp.wk, &mut k, n, d, d);
        matmul(&h1, &lp.wv, &mut v, n, d, d);
        for i in 0..n {
            for h in 0..heads {
                let s = i * d + h * hd;
                rotary_in_place(&mut q[s..s + hd], &freqs, input.times[i]);
                rotary_in_place(&mut k[s..s + hd], &freqs, input.times[i]);
            }
        }

        let mut probs = vec![0.0; heads * total];
        let mut attn = vec![0.0; n * d];
        for h in 0..heads {
            let block = &mut probs[h * total..(h + 1) * total];
            for i in 0..n {
                let lo = window_start[i];
                let p = &mut block[window_offset[i]..window_offset[i] + (i + 1 - lo)];
                let qi = &q[i * d + h * hd..i * d + (h + 1) * hd];
                let mut max = f64::NEG_INFINITY;
                for (slot, l) in p.iter_mut().zip(lo..=i) {
                    *slot = scale * dot(qi, &k[l * d + h * hd..l * d + (h + 1) * hd]);
                    max = max.max(*slot);
                }
                let mut z = 0.0;
                for slot in p.iter_mut() {
                    *slot = libm::exp(*slot - max);
                    z += *slot;
                }
                let out = &mut attn[i * d + h * hd..i * d + (h + 1) * hd];
                for (slot, l) in p.iter_mut().zip(lo..=i) {
                    *slot /= z;
                    let vl = &v[l * d + h * hd..l * d + (h + 1) * hd];
                    for (o, vv) in out.iter_mut().zip(vl) {
                        *o += *slot * vv;
                    }
                }
            }
        }

        let mut o = vec![0.0; n * d];
        matmul(&attn, &lp.wo, &mut o, n, d, d);
        add_row_bias(&mut o, &lp.bo);
        let o_mask = match &mut mode {
            Mode::Train(rng) if dropout > 0.0 => Some(dropout_mask(rng, n * d, dropout)),
            _ => None,
        };
        if let Some(m) = &o_mask {
            o.iter_mut().zip(m).for_each(|(v, s)| *v *= s);
        }
        for (xv, ov) in x.iter_mut().zip(&o) {
            *xv += ov;
        }

        let mut h2 = vec![0.0; n * d];
        let ln2 = layer_norm(&x, &lp.ln2_gain, &lp.ln2_bias, &mut h2);
        let mut pre_act = vec![0.0; n * f];
        matmul(&h2, &lp.w1, &mut pre_act, n, d, f);
        add_row_bias(&mut pre_act, &lp.b1);
        let act: Vec<f64> = pre_act.iter().map(|&u| gelu(u)).collect();
        let mut ff = vec![0.0; n * d];
        matmul(&act, &lp.w2, &mut ff, n, f, d);
        add_row_bias(&mut ff, &lp.b2);
        let f_mask = match &mut mode {
            Mode::Train(rng) if dropout > 0.0 => Some(dropout_mask(rng, n * d, dropout)),
            _ => None,
        };
        if let Some(m) = &f_mask {
            ff.iter_mut().zip(m).for_each(|(v, s)| *v *= s);
        }
        for (xv, fv) in x.iter_mut().zip(&ff) {
            *xv += fv;
        }
        check_finite(&x, &format!("encoder layer {li}"))?;

        layers.push(LayerCache { h1, ln1, q, k, v, probs, attn, o_mask, ln2, h2, pre_act, act, f_mask });
    }

    let mut output = vec![0.0; n * d];
    let final_ln = layer_norm(&x, &params.final_gain, &params.final_bias, &mut output);
    check_finite(&output, "encoder output")?;

    Ok(EncoderCache {
        n,
        tokens: input.tokens.clone(),
        times: input.times.clone(),
        window_start,
        window_offset,
        window_total: total,
        layers,
        final_ln,
        output,
    })
}

/// Accumulates parameter gradients into `grads` given the gradient of the
/// loss with respect to the representations (`len × inner_dim`).
pub fn backward(
    config: &EncoderConfig,
    params: &EncoderParams,
    cache: &EncoderCache,
    d_output: &[f64],
    grads: &mut EncoderParams,
) {
    let n = cache.n;
    let d = config.inner_dim;
    let f = config.ffn_dim();
    let heads = config.heads;
    let hd = config.head_dim();
    let scale = 1.0 / libm::sqrt(hd as f64);
    let freqs = rotary_frequencies(hd, config.rotary_base);
    let total = cache.window_total;

    let mut dx = vec![0.0; n * d];
    layer_norm_backward(&cache.final_ln, &params.final_gain, d_output, &mut dx, &mut grads.final_gain, &mut grads.final_bias);

    for li in (0..params.layers.len()).rev() {
        let lp = &params.layers[li];
        let lc = &cache.layers[li];
        let gl = &mut grads.layers[li];

        // Feed-forward branch.
        let mut dff = dx.clone();
        if let Some(m) = &lc.f_mask {
            dff.iter_mut().zip(m).for_each(|(g, s)| *g *= s);
        }
        matmul_tn_acc(&lc.act, &dff, &mut gl.w2, n, f, d);
        sum_rows_acc(&dff, &mut gl.b2);
        let mut dact = vec![0.0; n * f];
        matmul_nt_acc(&dff, &lp.w2, &mut dact, n, f, d);
        for (g, &u) in dact.iter_mut().zip(&lc.pre_act) {
            *g *= gelu_grad(u);
        }
        matmul_tn_acc(&lc.h2, &dact, &mut gl.w1, n, d, f);
        sum_rows_acc(&dact, &mut gl.b1);
        let mut dh2 = vec![0.0; n * d];
        matmul_nt_acc(&dact, &lp.w1, &mut dh2, n, d, f);
        layer_norm_backward(&lc.ln2, &lp.ln2_gain, &dh2, &mut dx, &mut gl.ln2_gain, &mut gl.ln2_bias);

        // Attention branch.
        let mut do_ = dx.clone();
        if let Some(m) = &lc.o_mask {
            do_.iter_mut().zip(m).for_each(|(g, s)| *g *= s);
        }
        matmul_tn_acc(&lc.attn, &do_, &mut gl.wo, n, d, d);
        sum_rows_acc(&do_, &mut gl.bo);
        let mut dattn = vec![0.0; n * d];
        matmul_nt_acc(&do_, &lp.wo, &mut dattn, n, d, d);

        let mut dq = vec![0.0; n * d];
        let mut dk = vec![0.0; n * d];
        let mut dv = vec![0.0; n * d];
        let mut dp: Vec<f64> = Vec::new();
        for h in 0..heads {
            let block = &lc.probs[h * total..(h + 1) * total];
            for i in 0..n {
                let lo = cache.window_start[i];
                let p = &block[cache.window_offset[i]..cache.window_offset[i] + (i + 1 - lo)];
                let da = &dattn[i * d + h * hd..i * d + (h + 1) * hd];
                dp.clear();
                let mut weighted = 0.0;
                for (&pil, l) in p.iter().zip(lo..=i) {
                    let vl = &lc.v[l * d + h * hd..l * d + (h + 1) * hd];
                    let g = dot(da, vl);
                    dp.push(g);
                    weighted += pil * g;
                    let dvl = &mut dv[l * d + h * hd..l * d + (h + 1) * hd];
                    for (o, a) in dvl.iter_mut().zip(da) {
                        *o += pil * a;
                    }
                }
                for ((&pil, &g), l) in p.iter().zip(&dp).zip(lo..=i) {
                    let ds = pil * (g - weighted) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for c in 0..hd {
                        dq[i * d + h * hd + c] += ds * lc.k[l * d + h * hd + c];
                        dk[l * d + h * hd + c] += ds * lc.q[i * d + h * hd + c];
                    }
                }
            }
        }
        // Rotations are orthogonal: the gradient rotates back by -t.
        for i in 0..n {
            for h in 0..heads {
                let s = i * d + h * hd;
                rotary_in_place(&mut dq[s..s + hd], &freqs, -cache.times[i]);
                rotary_in_place(&mut dk[s..s + hd], &freqs, -cache.times[i]);
            }
        }
        matmul_tn_acc(&lc.h1, &dq, &mut gl.wq, n, d, d);
        matmul_tn_acc(&lc.h1, &dk, &mut gl.wk, n, d, d);
        matmul_tn_acc(&lc.h1, &dv, &mut gl.wv, n, d, d);
        let mut dh1 = vec![0.0; n * d];
        matmul_nt_acc(&dq, &lp.wq, &mut dh1, n, d, d);
        matmul_nt_acc(&dk, &lp.wk, &mut dh1, n, d, d);
        matmul_nt_acc(&dv, &lp.wv, &mut dh1, n, d, d);
        layer_norm_backward(&lc.ln1, &lp.ln1_gain, &dh1, &mut dx, &mut gl.ln1_gain, &mut gl.ln1_bias);
    }

    for (i, &tok) in cache.tokens.iter().enumerate() {
        let t = tok as usize;
        for c in 0..d {
            grads.embedding[t * d + c] += dx[i * d + c];
        }
    }
}
