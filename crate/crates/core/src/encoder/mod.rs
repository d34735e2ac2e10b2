//! Causal local-attention transformer with rotary time embeddings.
//!
//! Each event contributes one token (its code embedding). Time enters only
//! through rotations of queries and keys by `frequency × days since birth`,
//! so attention scores depend on time differences between events. Blocks
//! are pre-norm with a GELU feed-forward layer; a final layer norm produces
//! the representation of every event.

mod model;
mod rotary;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use model::{backward, forward, EncoderCache, Mode};
pub use rotary::{rotary, rotary_in_place, rotary_frequencies};

use crate::error::{Error, Result};
use crate::rng::{self, DetRng};
use crate::timeline::{CodeId, EventTimeline};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub inner_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub attention_window: usize,
    pub max_sequence: usize,
    pub dropout: f64,
    pub ffn_multiplier: usize,
    pub rotary_base: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 512,
            inner_dim: 64,
            layers: 2,
            heads: 4,
            attention_window: 64,
            max_sequence: 512,
            dropout: 0.0,
            ffn_multiplier: 4,
            rotary_base: 10_000.0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.inner_dim.is_multiple_of(2 * self.heads) {
            return Err(Error::invalid(format!(
                "inner_dim {} must be divisible by 2 * heads ({})",
                self.inner_dim, self.heads
            )));
        }
        if self.attention_window == 0 || self.attention_window > self.max_sequence {
            return Err(Error::invalid("attention_window must be in 1..=max_sequence"));
        }
        if self.vocab_size < 2 {
            return Err(Error::invalid("vocab_size must be at least 2 (one slot is reserved for unknown codes)"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.inner_dim / self.heads
    }

    pub fn ffn_dim(&self) -> usize {
        self.inner_dim * self.ffn_multiplier
    }
}

/// Maps codes to embedding rows. Row 0 is reserved for codes outside the
/// embedding vocabulary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TokenMap {
    codes: Vec<CodeId>,
    lookup: BTreeMap<CodeId, u32>,
}

pub const UNK_TOKEN: u32 = 0;

impl TokenMap {
    pub fn from_codes(codes: Vec<CodeId>) -> Self {
        let lookup = codes.iter().enumerate().map(|(i, &c)| (c, i as u32 + 1)).collect();
        TokenMap { codes, lookup }
    }

    /// The `vocab_size - 1` most frequent codes in `timelines`; ties go to
    /// the smaller code id.
    pub fn from_frequencies(timelines: &[EventTimeline], vocab_size: usize) -> Self {
        let mut counts: BTreeMap<CodeId, usize> = BTreeMap::new();
        for tl in timelines {
            for e in &tl.events {
                *counts.entry(e.code).or_default() += 1;
            }
        }
        let mut ranked: Vec<(CodeId, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        Self::from_codes(ranked.into_iter().take(vocab_size.saturating_sub(1)).map(|(c, _)| c).collect())
    }

    pub fn token(&self, code: CodeId) -> u32 {
        self.lookup.get(&code).copied().unwrap_or(UNK_TOKEN)
    }

    pub fn codes(&self) -> &[CodeId] {
        &self.codes
    }

    /// Number of embedding rows this map needs, including the unknown row.
    pub fn rows(&self) -> usize {
        self.codes.len() + 1
    }
}

/// Encoder input: token ids and event times in days since birth.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub tokens: Vec<u32>,
    pub times: Vec<f64>,
    /// Number of leading events dropped to fit `max_sequence`.
    pub truncated: usize,
}

impl Embedded {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Tokenizes a timeline, keeping the most recent `max_sequence` events.
pub fn embed(config: &EncoderConfig, tokens: &TokenMap, timeline: &EventTimeline) -> Embedded {
    let skip = timeline.events.len().saturating_sub(config.max_sequence);
    let kept = &timeline.events[skip..];
    Embedded {
        tokens: kept.iter().map(|e| tokens.token(e.code)).collect(),
        times: kept.iter().map(|e| e.time - timeline.birth_time).collect(),
        truncated: skip,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
    pub bo: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub embedding: Vec<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gain: Vec<f64>,
    pub final_bias: Vec<f64>,
}

fn gaussian(rng: &mut DetRng, len: usize, std: f64) -> Vec<f64> {
    (0..len).map(|_| std * rng::standard_normal(rng)).collect()
}

impl EncoderParams {
    pub fn zeros(config: &EncoderConfig) -> Self {
        let d = config.inner_dim;
        let f = config.ffn_dim();
        let layer = LayerParams {
            ln1_gain: vec![0.0; d],
            ln1_bias: vec![0.0; d],
            wq: vec![0.0; d * d],
            wk: vec![0.0; d * d],
            wv: vec![0.0; d * d],
            wo: vec![0.0; d * d],
            bo: vec![0.0; d],
            ln2_gain: vec![0.0; d],
            ln2_bias: vec![0.0; d],
            w1: vec![0.0; d * f],
            b1: vec![0.0; f],
            w2: vec![0.0; f * d],
            b2: vec![0.0; d],
        };
        EncoderParams {
            embedding: vec![0.0; config.vocab_size * d],
            layers: vec![layer; config.layers],
            final_gain: vec![0.0; d],
            final_bias: vec![0.0; d],
        }
    }

    pub fn init(config: &EncoderConfig, rng: &mut DetRng) -> Self {
        let d = config.inner_dim;
        let f = config.ffn_dim();
        let mut p = Self::zeros(config);
        let proj = 1.0 / libm::sqrt(d as f64);
        let resid = proj / libm::sqrt(2.0 * config.layers.max(1) as f64);
        p.embedding = gaussian(rng, config.vocab_size * d, 1.0);
        for l in p.layers.iter_mut() {
            l.ln1_gain.fill(1.0);
            l.ln2_gain.fill(1.0);
            l.wq = gaussian(rng, d * d, proj);
            l.wk = gaussian(rng, d * d, proj);
            l.wv = gaussian(rng, d * d, proj);
            l.wo = gaussian(rng, d * d, resid);
            l.w1 = gaussian(rng, d * f, proj);
            l.w2 = gaussian(rng, f * d, resid / libm::sqrt(config.ffn_multiplier as f64));
        }
        p.final_gain.fill(1.0);
        p
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = vec![String::from("encoder.embedding")];
        for i in 0..self.layers.len() {
            for n in LAYER_TENSORS {
                names.push(format!("encoder.layers.{i}.{n}"));
            }
        }
        names.push(String::from("encoder.final_gain"));
        names.push(String::from("encoder.final_bias"));
        names
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = vec![&self.embedding];
        for l in &self.layers {
            out.extend([
                &l.ln1_gain, &l.ln1_bias, &l.wq, &l.wk, &l.wv, &l.wo, &l.bo, &l.ln2_gain, &l.ln2_bias, &l.w1, &l.b1,
                &l.w2, &l.b2,
            ]);
        }
        out.push(&self.final_gain);
        out.push(&self.final_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = vec![&mut self.embedding];
        for l in self.layers.iter_mut() {
            out.extend([
                &mut l.ln1_gain,
                &mut l.ln1_bias,
                &mut l.wq,
                &mut l.wk,
                &mut l.wv,
                &mut l.wo,
                &mut l.bo,
                &mut l.ln2_gain,
                &mut l.ln2_bias,
                &mut l.w1,
                &mut l.b1,
                &mut l.w2,
                &mut l.b2,
            ]);
        }
        out.push(&mut self.final_gain);
        out.push(&mut self.final_bias);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &EncoderParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            crate::linalg::axpy(1.0, b, a);
        }
    }
}

pub const LAYER_TENSORS: [&str; 13] =
    ["ln1_gain", "ln1_bias", "wq", "wk", "wv", "wo", "bo", "ln2_gain", "ln2_bias", "w1", "b1", "w2", "b2"];
