use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::optim::Parameters;
use super::train::{train, Contribution, Objective, TrainConfig, TrainOutcome};
use crate::encoder::{self, embed, EncoderConfig, EncoderParams, Mode, TokenMap};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::rng::{self, standard_normal, DetRng};
use crate::timeline::{CodeId, EventTimeline};

/// Output embeddings over a fixed dictionary of target codes.
#[derive(Debug, Clone, PartialEq)]
pub struct NextCodeHead {
    pub inner_dim: usize,
    pub num_targets: usize,
    /// `num_targets × inner_dim`.
    pub embeddings: Vec<f64>,
}

impl NextCodeHead {
    pub fn zeros(inner_dim: usize, num_targets: usize) -> Self {
        NextCodeHead { inner_dim, num_targets, embeddings: vec![0.0; inner_dim * num_targets] }
    }

    pub fn init(inner_dim: usize, num_targets: usize, rng: &mut DetRng) -> Self {
        let mut h = Self::zeros(inner_dim, num_targets);
        let scale = 1.0 / libm::sqrt(inner_dim as f64);
        h.embeddings.iter_mut().for_each(|v| *v = scale * standard_normal(rng));
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NextCodeOutput {
    /// Summed cross-entropy over labelled rows.
    pub loss: f64,
    pub count: usize,
    pub grad_representations: Vec<f64>,
    pub grad_embeddings: Vec<f64>,
}

/// Softmax cross-entropy of `logit_k = R_j · E_k` against `labels[j]`
/// (rows with `None` are skipped).
pub fn next_code_loss(representations: &[f64], head: &NextCodeHead, labels: &[Option<u32>]) -> Result<NextCodeOutput> {
    let d = head.inner_dim;
    let k_n = head.num_targets;
    if representations.len() != labels.len() * d {
        return Err(Error::shape("one label per representation row"));
    }
    let mut out = NextCodeOutput {
        loss: 0.0,
        count: 0,
        grad_representations: vec![0.0; representations.len()],
        grad_embeddings: vec![0.0; head.embeddings.len()],
    };
    let mut logits = vec![0.0; k_n];
    for (j, label) in labels.iter().enumerate() {
        let Some(y) = *label else { continue };
        let y = y as usize;
        if y >= k_n {
            return Err(Error::shape("label outside the target dictionary"));
        }
        let r = &representations[j * d..(j + 1) * d];
        for (k, l) in logits.iter_mut().enumerate() {
            *l = crate::linalg::dot(r, &head.embeddings[k * d..(k + 1) * d]);
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|l| libm::exp(l - max)).sum();
        let lse = max + libm::log(sum);
        out.loss += lse - logits[y];
        out.count += 1;
        for k in 0..k_n {
            let g = libm::exp(logits[k] - lse) - if k == y { 1.0 } else { 0.0 };
            let e = &head.embeddings[k * d..(k + 1) * d];
            crate::linalg::axpy(g, e, &mut out.grad_representations[j * d..(j + 1) * d]);
            crate::linalg::axpy(g, r, &mut out.grad_embeddings[k * d..(k + 1) * d]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NextCodeParams {
    pub encoder: EncoderParams,
    pub head: NextCodeHead,
}

impl Parameters for NextCodeParams {
    fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut t = self.encoder.tensors();
        t.push(&self.head.embeddings);
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut t = self.encoder.tensors_mut();
        t.push(&mut self.head.embeddings);
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NextCodeModel {
    pub config: EncoderConfig,
    pub tokens: TokenMap,
    pub dictionary: Vec<CodeId>,
    pub params: NextCodeParams,
}

impl NextCodeModel {
    /// Predicted distribution over the dictionary for the event after the
    /// last one in `timeline`.
    pub fn predict_next(&self, timeline: &EventTimeline) -> Result<Vec<f64>> {
        let input = embed(&self.config, &self.tokens, timeline);
        if input.is_empty() {
            return Err(Error::invalid("empty timeline"));
        }
        let cache = encoder::forward(&self.config, &self.params.encoder, &input, Mode::Eval)?;
        let r = cache.row(input.len() - 1);
        let d = self.config.inner_dim;
        let logits: Vec<f64> =
            (0..self.dictionary.len()).map(|k| crate::linalg::dot(r, &self.params.head.embeddings[k * d..(k + 1) * d])).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
        let sum: f64 = exp.iter().sum();
        Ok(exp.into_iter().map(|e| e / sum).collect())
    }
}

struct NextCodeObjective<'a> {
    config: &'a EncoderConfig,
    tokens: &'a TokenMap,
    index: BTreeMap<CodeId, u32>,
    train: &'a [EventTimeline],
    validation: &'a [EventTimeline],
}

impl NextCodeObjective<'_> {
    fn example(&self, params: &NextCodeParams, timeline: &EventTimeline, mode: Mode<'_>, need_grad: bool) -> Result<Contribution<NextCodeParams>> {
        let input = embed(self.config, self.tokens, timeline);
        let labels: Vec<Option<u32>> = (0..input.len())
            .map(|j| timeline.events.get(input.truncated + j + 1).and_then(|e| self.index.get(&e.code).copied()))
            .collect();
        if labels.iter().all(Option::is_none) {
            return Ok(Contribution { loss: 0.0, count: 0.0, grads: need_grad.then(|| params.zeros_like()) });
        }
        let cache = encoder::forward(self.config, &params.encoder, &input, mode)?;
        let out = next_code_loss(cache.output(), &params.head, &labels)?;
        let grads = need_grad.then(|| {
            let mut g = params.zeros_like();
            g.head.embeddings = out.grad_embeddings;
            encoder::backward(self.config, &params.encoder, &cache, &out.grad_representations, &mut g.encoder);
            g
        });
        Ok(Contribution { loss: out.loss, count: out.count as f64, grads })
    }
}

impl Objective<NextCodeParams> for NextCodeObjective<'_> {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn validation_len(&self) -> usize {
        self.validation.len()
    }

    fn train_example(&self, params: &NextCodeParams, index: usize, rng: &mut DetRng) -> Result<Contribution<NextCodeParams>> {
        self.example(params, &self.train[index], Mode::Train(rng), true)
    }

    fn validation_example(&self, params: &NextCodeParams, index: usize) -> Result<Contribution<NextCodeParams>> {
        self.example(params, &self.validation[index], Mode::Eval, false)
    }
}

/// Autoregressive pretraining: predict each event's successor code among
/// `dictionary`, using the same encoder and optimizer setup as
/// time-to-event pretraining.
pub fn pretrain_next_code<E: Executor>(
    train_set: &[EventTimeline],
    validation: &[EventTimeline],
    dictionary: &[CodeId],
    config: &EncoderConfig,
    train_config: &TrainConfig,
    exec: &E,
) -> Result<(NextCodeModel, TrainOutcome<NextCodeParams>)> {
    config.validate()?;
    if dictionary.is_empty() {
        return Err(Error::invalid("empty target dictionary"));
    }
    let tokens = TokenMap::from_frequencies(train_set, config.vocab_size);
    let init = NextCodeParams {
        encoder: EncoderParams::init(config, &mut rng::substream(train_config.seed, 1)),
        head: NextCodeHead::init(config.inner_dim, dictionary.len(), &mut rng::substream(train_config.seed, 2)),
    };
    let objective = NextCodeObjective {
        config,
        tokens: &tokens,
        index: dictionary.iter().enumerate().map(|(k, &c)| (c, k as u32)).collect(),
        train: train_set,
        validation,
    };
    let outcome = train(&objective, init, train_config, exec, None)?;
    let model = NextCodeModel { config: config.clone(), tokens, dictionary: dictionary.to_vec(), params: outcome.best.clone() };
    Ok((model, outcome))
}
