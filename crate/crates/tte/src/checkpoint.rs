//! Checkpoint container.
//!
//! Byte layout (all integers and floats little-endian):
//!
//! | offset | size | content |
//! |---|---|---|
//! | 0 | 8 | magic `TTECKPT1` |
//! | 8 | 8 | `u64` length `H` of the header |
//! | 16 | `H` | UTF-8 JSON [`Header`] |
//! | 16 + H | 8·Σlen | tensors in `header.tensors` order, each `len` × `f64` |
//!
//! Codes are stored by name, so a checkpoint can be loaded against any
//! ontology containing them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tte_core::adaptation::{Backbone, TaskModel};
use tte_core::encoder::{EncoderConfig, EncoderParams, TokenMap};
use tte_core::head::{PieceGrid, TaskHead};
use tte_core::objectives::{
    Adam, AdamConfig, NextCodeHead, NextCodeModel, NextCodeParams, Parameters, TrainState, TteModel, TteParams,
    LOSS_NORMALIZATION,
};
use tte_core::ontology::{Ontology, TaskSet};
use tte_core::timeline::{CodeId, Vocabulary};

use crate::error::{PipelineError, Result};
use crate::io::TaskDefinition;

pub const MAGIC: &[u8; 8] = b"TTECKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Tte,
    NextCode,
    Task,
    TrainState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderJson {
    pub vocabulary_size: usize,
    pub inner_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub attention_window: usize,
    pub max_sequence_length: usize,
    pub dropout: f64,
    pub ffn_multiplier: usize,
    pub rotary_base: f64,
}

impl From<&EncoderConfig> for EncoderJson {
    fn from(c: &EncoderConfig) -> Self {
        EncoderJson {
            vocabulary_size: c.vocab_size,
            inner_dim: c.inner_dim,
            layers: c.layers,
            heads: c.heads,
            attention_window: c.attention_window,
            max_sequence_length: c.max_sequence,
            dropout: c.dropout,
            ffn_multiplier: c.ffn_multiplier,
            rotary_base: c.rotary_base,
        }
    }
}

impl From<&EncoderJson> for EncoderConfig {
    fn from(c: &EncoderJson) -> Self {
        EncoderConfig {
            vocab_size: c.vocabulary_size,
            inner_dim: c.inner_dim,
            layers: c.layers,
            heads: c.heads,
            attention_window: c.attention_window,
            max_sequence: c.max_sequence_length,
            dropout: c.dropout,
            ffn_multiplier: c.ffn_multiplier,
            rotary_base: c.rotary_base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadShape {
    pub inner_dim: usize,
    pub num_pieces: usize,
    pub survival_dim: usize,
    pub num_tasks: usize,
}

/// Optimizer and schedule position. Dropout and shuffling draw from
/// ChaCha8 streams derived from `seed`, `step` and `next_epoch`, so these
/// fields are the whole random state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainInfo {
    pub rng: String,
    pub seed: u64,
    pub step: u64,
    pub next_epoch: usize,
    pub best_epoch: Option<usize>,
    /// `null` before the first validation pass.
    pub best_validation_loss: Option<f64>,
    pub epochs_since_best: usize,
    pub adam_step: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,
}

impl TrainInfo {
    pub fn new(seed: u64, state: &TrainState) -> Self {
        TrainInfo {
            rng: "chacha8, streams derived from (seed, step, epoch)".to_string(),
            seed,
            step: state.step,
            next_epoch: state.epoch,
            best_epoch: state.best_epoch,
            best_validation_loss: state.best_validation_loss.is_finite().then_some(state.best_validation_loss),
            epochs_since_best: state.epochs_since_best,
            adam_step: state.adam.step,
            adam_beta1: state.adam.config.beta1,
            adam_beta2: state.adam.config.beta2,
            adam_epsilon: state.adam.config.epsilon,
            weight_decay: state.adam.config.weight_decay,
        }
    }
}

/// How a task model was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptInfo {
    pub mode: String,
    /// Path of the pretrained checkpoint (empty for scratch).
    pub pretrained: String,
    pub pretrained_kind: Option<Kind>,
    pub label_fraction: f64,
    pub split_seed: u64,
    pub train_samples: usize,
    pub train_events: usize,
    pub probe_loss: Option<f64>,
    pub probe_iterations: Option<usize>,
    pub probe_l2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub kind: Kind,
    pub loss_normalization: String,
    pub encoder: EncoderJson,
    /// Code of each embedding row after the reserved unknown row.
    pub tokens: Vec<String>,
    /// Piece starts in days; empty for next-code models.
    pub grid: Vec<f64>,
    pub tasks: Vec<String>,
    pub excluded: Vec<String>,
    pub dictionary: Vec<String>,
    pub head: Option<HeadShape>,
    pub task: Option<TaskDefinition>,
    pub adaptation: Option<AdaptInfo>,
    pub train: Option<TrainInfo>,
    pub tensors: Vec<TensorInfo>,
}

/// Parameter sets with stable tensor names.
pub trait Named: Parameters {
    fn names(&self) -> Vec<String>;
}

impl Named for TteParams {
    fn names(&self) -> Vec<String> {
        let mut n = self.encoder.tensor_names();
        n.extend(self.head.tensor_names());
        n
    }
}

impl Named for NextCodeParams {
    fn names(&self) -> Vec<String> {
        let mut n = self.encoder.tensor_names();
        n.push("next_code.embeddings".to_string());
        n
    }
}

fn names(vocab: &Vocabulary, codes: impl IntoIterator<Item = CodeId>) -> Vec<String> {
    codes.into_iter().map(|c| vocab.name(c).to_string()).collect()
}

fn header(kind: Kind, config: &EncoderConfig, tokens: &TokenMap, vocab: &Vocabulary) -> Header {
    Header {
        format_version: FORMAT_VERSION,
        kind,
        loss_normalization: LOSS_NORMALIZATION.to_string(),
        encoder: config.into(),
        tokens: names(vocab, tokens.codes().iter().copied()),
        grid: Vec::new(),
        tasks: Vec::new(),
        excluded: Vec::new(),
        dictionary: Vec::new(),
        head: None,
        task: None,
        adaptation: None,
        train: None,
        tensors: Vec::new(),
    }
}

fn head_shape(h: &TaskHead) -> HeadShape {
    HeadShape { inner_dim: h.inner_dim, num_pieces: h.num_pieces, survival_dim: h.survival_dim, num_tasks: h.num_tasks }
}

/// Serializes `header` (with its tensor list filled from `tensors`) and the
/// tensor data.
pub fn encode(mut header: Header, tensors: &[(String, &[f64])]) -> Vec<u8> {
    header.tensors = tensors.iter().map(|(n, t)| TensorInfo { name: n.clone(), len: t.len() }).collect();
    let json = serde_json::to_vec(&header).expect("header serializes");
    let total: usize = tensors.iter().map(|(_, t)| t.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in tensors {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], name: &str) -> Result<(Header, BTreeMap<String, Vec<f64>>)> {
    let bad = |msg: &str| PipelineError::Data(format!("{name}: {msg}"));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16usize.saturating_add(len)).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(&format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {}", header.format_version)));
    }
    let mut at = 16 + len;
    let mut tensors = BTreeMap::new();
    for t in &header.tensors {
        let end = t.len.checked_mul(8).and_then(|n| n.checked_add(at)).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated tensor data"))?;
        let values = bytes[at..end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if tensors.insert(t.name.clone(), values).is_some() {
            return Err(bad(&format!("duplicate tensor {}", t.name)));
        }
        at = end;
    }
    if at != bytes.len() {
        return Err(bad("trailing bytes after tensor data"));
    }
    Ok((header, tensors))
}

fn named<P: Named>(params: &P, prefix: &str) -> Vec<(String, Vec<f64>)> {
    params.names().into_iter().zip(params.tensors()).map(|(n, t)| (format!("{prefix}{n}"), t.clone())).collect()
}

fn write(path: &Path, header: Header, tensors: Vec<(String, Vec<f64>)>) -> Result<()> {
    let refs: Vec<(String, &[f64])> = tensors.iter().map(|(n, t)| (n.clone(), t.as_slice())).collect();
    let bytes = encode(header, &refs);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(PipelineError::io(dir))?;
    }
    std::fs::write(path, bytes).map_err(PipelineError::io(path))
}

pub fn save_tte(path: &Path, model: &TteModel, vocab: &Vocabulary, train: Option<TrainInfo>) -> Result<()> {
    let mut h = header(Kind::Tte, &model.config, &model.tokens, vocab);
    h.grid = model.grid.starts().to_vec();
    h.tasks = names(vocab, model.tasks.tasks.iter().copied());
    h.excluded = names(vocab, model.tasks.excluded.iter().copied());
    h.head = Some(head_shape(&model.params.head));
    h.train = train;
    write(path, h, named(&model.params, ""))
}

pub fn save_next_code(path: &Path, model: &NextCodeModel, vocab: &Vocabulary, train: Option<TrainInfo>) -> Result<()> {
    let mut h = header(Kind::NextCode, &model.config, &model.tokens, vocab);
    h.dictionary = names(vocab, model.dictionary.iter().copied());
    h.train = train;
    write(path, h, named(&model.params, ""))
}

pub fn save_task(
    path: &Path,
    model: &TaskModel,
    vocab: &Vocabulary,
    task: &TaskDefinition,
    adaptation: AdaptInfo,
    train: Option<TrainInfo>,
) -> Result<()> {
    let mut h = header(Kind::Task, &model.backbone.config, &model.backbone.tokens, vocab);
    h.grid = model.grid.starts().to_vec();
    h.head = Some(head_shape(&model.head));
    h.task = Some(task.clone());
    h.adaptation = Some(adaptation);
    h.train = train;
    write(path, h, named(&model.params(), ""))
}

/// Everything needed to continue training: the last parameters and the
/// Adam moments, next to the metadata of the model being trained.
pub fn save_train_state<P: Named>(path: &Path, like: &TteModel, vocab: &Vocabulary, last: &P, state: &TrainState, seed: u64) -> Result<()> {
    let mut h = header(Kind::TrainState, &like.config, &like.tokens, vocab);
    h.grid = like.grid.starts().to_vec();
    h.tasks = names(vocab, like.tasks.tasks.iter().copied());
    h.excluded = names(vocab, like.tasks.excluded.iter().copied());
    h.head = Some(head_shape(&like.params.head));
    h.train = Some(TrainInfo::new(seed, state));
    let names = last.names();
    let mut tensors = named(last, "last.");
    for (n, m) in names.iter().zip(&state.adam.first) {
        tensors.push((format!("adam.first.{n}"), m.clone()));
    }
    for (n, v) in names.iter().zip(&state.adam.second) {
        tensors.push((format!("adam.second.{n}"), v.clone()));
    }
    write(path, h, tensors)
}

/// A loaded model of any kind.
#[derive(Debug, Clone)]
pub enum Model {
    Tte(TteModel),
    NextCode(NextCodeModel),
    Task(TaskModel),
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: Header,
    pub model: Model,
}

fn read_file(path: &Path) -> Result<(Header, BTreeMap<String, Vec<f64>>)> {
    let bytes = std::fs::read(path).map_err(PipelineError::io(path))?;
    decode(&bytes, &path.display().to_string())
}

fn fill<P: Named>(params: &mut P, tensors: &mut BTreeMap<String, Vec<f64>>, prefix: &str, name: &str) -> Result<()> {
    let names = params.names();
    for (n, slot) in names.iter().zip(params.tensors_mut()) {
        let key = format!("{prefix}{n}");
        let t = tensors.remove(&key).ok_or_else(|| PipelineError::Data(format!("{name}: missing tensor {key}")))?;
        if t.len() != slot.len() {
            return Err(PipelineError::Data(format!("{name}: tensor {key} has {} values, expected {}", t.len(), slot.len())));
        }
        *slot = t;
    }
    Ok(())
}

fn resolve(ontology: &mut Ontology, names: &[String]) -> Vec<CodeId> {
    names.iter().map(|n| ontology.ensure_code(n)).collect()
}

fn parts(h: &Header, ontology: &mut Ontology, name: &str) -> Result<(EncoderConfig, TokenMap, Option<TaskHead>)> {
    let config: EncoderConfig = (&h.encoder).into();
    config.validate().map_err(|e| PipelineError::Data(format!("{name}: {e}")))?;
    let tokens = TokenMap::from_codes(resolve(ontology, &h.tokens));
    let head = h.head.as_ref().map(|s| TaskHead::zeros(s.inner_dim, s.num_pieces, s.survival_dim, s.num_tasks));
    Ok((config, tokens, head))
}

fn grid(h: &Header, name: &str) -> Result<PieceGrid> {
    PieceGrid::new(h.grid.clone()).map_err(|e| PipelineError::Data(format!("{name}: {e}")))
}

/// Loads a model checkpoint, adding any codes it names to `ontology` as
/// roots if they are missing.
pub fn load(path: &Path, ontology: &mut Ontology) -> Result<Checkpoint> {
    let name = path.display().to_string();
    let (header, mut tensors) = read_file(path)?;
    let missing = |what: &str| PipelineError::Data(format!("{name}: {what} missing from header"));
    let (config, tokens, head) = parts(&header, ontology, &name)?;
    let model = match header.kind {
        Kind::Tte => {
            let mut params = TteParams { encoder: EncoderParams::zeros(&config), head: head.ok_or_else(|| missing("head"))? };
            fill(&mut params, &mut tensors, "", &name)?;
            let tasks = TaskSet {
                tasks: resolve(ontology, &header.tasks),
                excluded: resolve(ontology, &header.excluded).into_iter().collect(),
            };
            Model::Tte(TteModel { config, tokens, grid: grid(&header, &name)?, tasks, params })
        }
        Kind::NextCode => {
            let dictionary = resolve(ontology, &header.dictionary);
            let mut params =
                NextCodeParams { encoder: EncoderParams::zeros(&config), head: NextCodeHead::zeros(config.inner_dim, dictionary.len()) };
            fill(&mut params, &mut tensors, "", &name)?;
            Model::NextCode(NextCodeModel { config, tokens, dictionary, params })
        }
        Kind::Task => {
            let mut params = TteParams { encoder: EncoderParams::zeros(&config), head: head.ok_or_else(|| missing("head"))? };
            fill(&mut params, &mut tensors, "", &name)?;
            header.task.as_ref().ok_or_else(|| missing("task"))?;
            Model::Task(TaskModel { backbone: Backbone { config, tokens, encoder: params.encoder }, head: params.head, grid: grid(&header, &name)? })
        }
        Kind::TrainState => return Err(PipelineError::Data(format!("{name}: is a training state, not a model"))),
    };
    if let Some(extra) = tensors.keys().next() {
        return Err(PipelineError::Data(format!("{name}: unexpected tensor {extra}")));
    }
    Ok(Checkpoint { header, model })
}

/// Loads the last parameters and optimizer state saved by
/// [`save_train_state`]; `like` supplies the tensor shapes.
pub fn load_train_state<P: Named>(path: &Path, like: &P) -> Result<(P, TrainState)> {
    let name = path.display().to_string();
    let (header, mut tensors) = read_file(path)?;
    if header.kind != Kind::TrainState {
        return Err(PipelineError::Data(format!("{name}: not a training state")));
    }
    let info = header.train.ok_or_else(|| PipelineError::Data(format!("{name}: train info missing")))?;
    let mut last = like.clone();
    fill(&mut last, &mut tensors, "last.", &name)?;
    let config = AdamConfig { beta1: info.adam_beta1, beta2: info.adam_beta2, epsilon: info.adam_epsilon, weight_decay: info.weight_decay };
    let mut adam = Adam::new(config, like);
    adam.step = info.adam_step;
    let mut first = like.clone();
    fill(&mut first, &mut tensors, "adam.first.", &name)?;
    let mut second = like.clone();
    fill(&mut second, &mut tensors, "adam.second.", &name)?;
    adam.first = first.tensors().into_iter().cloned().collect();
    adam.second = second.tensors().into_iter().cloned().collect();
    let state = TrainState {
        step: info.step,
        epoch: info.next_epoch,
        best_validation_loss: info.best_validation_loss.unwrap_or(f64::INFINITY),
        best_epoch: info.best_epoch,
        epochs_since_best: info.epochs_since_best,
        adam,
    };
    Ok((last, state))
}
