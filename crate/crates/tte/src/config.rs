//! Flat `key = value` configuration with `[section]` headers.
//!
//! ```text
//! # comment
//! [train]
//! learning_rate = 0.001
//! epochs = 10
//! ```
//!
//! Every key belongs to a section. Lists are comma-separated and an empty
//! value means "unset" for optional keys. Unknown sections or keys are
//! errors, so typos do not silently fall back to defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tte_core::encoder::EncoderConfig;
use tte_core::objectives::{AdamConfig, HeadConfig, TrainConfig};
use tte_core::synth::GeneratorSpec;
use tte_core::timeline::{SplitFractions, SPLIT_HASH_SEED};

use crate::error::{PipelineError, Result};

fn cfg_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

/// Raw sections as read from text, before typing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = ConfigFile::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| cfg_err(format!("line {n}: unterminated section header")))?.trim();
                if !SECTIONS.contains(&name) {
                    return Err(cfg_err(format!("line {n}: unknown section [{name}]")));
                }
                section = Some(name.to_string());
                out.sections.entry(name.to_string()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| cfg_err(format!("line {n}: expected key = value")))?;
            let sec = section.as_ref().ok_or_else(|| cfg_err(format!("line {n}: key outside of any [section]")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(cfg_err(format!("line {n}: empty key")));
            }
            if out.sections.get_mut(sec).unwrap().insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(cfg_err(format!("line {n}: duplicate key {sec}.{key}")));
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            PipelineError::Config(m) => cfg_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies a `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (lhs, value) = assignment.split_once('=').ok_or_else(|| cfg_err(format!("override `{assignment}` is not section.key=value")))?;
        let (sec, key) = lhs.trim().split_once('.').ok_or_else(|| cfg_err(format!("override `{assignment}` is not section.key=value")))?;
        if !SECTIONS.contains(&sec) {
            return Err(cfg_err(format!("unknown section [{sec}] in override")));
        }
        self.sections.entry(sec.to_string()).or_default().insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }
}

pub const SECTIONS: [&str; 9] = ["run", "data", "synth", "tasks", "model", "train", "adapt", "evaluate", "bench"];

/// Typed access to one section; remembers which keys were read.
struct Section<'a> {
    name: &'static str,
    values: Option<&'a BTreeMap<String, String>>,
    used: BTreeSet<String>,
}

impl<'a> Section<'a> {
    fn new(file: &'a ConfigFile, name: &'static str) -> Self {
        Section { name, values: file.sections.get(name), used: BTreeSet::new() }
    }

    fn raw(&mut self, key: &str) -> Option<&'a str> {
        self.used.insert(key.to_string());
        self.values.and_then(|v| v.get(key)).map(String::as_str)
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| cfg_err(format!("{}.{key}: cannot parse `{v}`", self.name))),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(cfg_err(format!("{}.{key}: expected true or false, got `{v}`", self.name))),
        }
    }

    fn opt_string(&mut self, key: &str) -> Option<String> {
        self.raw(key).filter(|v| !v.is_empty()).map(str::to_string)
    }

    fn path(&mut self, key: &str, default: PathBuf) -> PathBuf {
        self.opt_string(key).map_or(default, PathBuf::from)
    }

    fn opt_path(&mut self, key: &str) -> Option<PathBuf> {
        self.opt_string(key).map(PathBuf::from)
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| cfg_err(format!("{}.{key}: cannot parse `{s}`", self.name))))
                .collect(),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(values) = self.values {
            if let Some(k) = values.keys().find(|k| !self.used.contains(*k)) {
                return Err(cfg_err(format!("unknown key {}.{k}", self.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub output_dir: PathBuf,
    /// Keep wall-clock measurements out of primary outputs, so reruns are
    /// byte-identical.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub events: PathBuf,
    pub ontology: PathBuf,
    pub ground_truth: PathBuf,
    pub normalize: bool,
    /// Add event codes missing from the ontology as roots instead of failing.
    pub add_unknown_codes: bool,
    pub split_seed: u64,
    pub split: SplitFractions,
    pub death_code: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSection {
    pub patients: usize,
    pub seed: u64,
    pub risk_multiplier: f64,
    pub risk_prevalence: f64,
    pub censor_hazard: f64,
    pub max_followup_days: f64,
    pub visit_rate: f64,
    pub background_rate: f64,
    pub background_codes: usize,
    pub background_groups: usize,
    pub codes_per_visit: f64,
    pub rerecord_probability: f64,
    /// Multiplies every target's base hazards.
    pub target_hazard_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TasksSection {
    pub num_tasks: usize,
    /// Codes (with their descendants) kept out of pretraining.
    pub exclude: Vec<String>,
    pub task_list: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub encoder: EncoderConfig,
    pub head: HeadConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptMode {
    Probe,
    Finetune,
    Scratch,
}

impl AdaptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AdaptMode::Probe => "probe",
            AdaptMode::Finetune => "finetune",
            AdaptMode::Scratch => "scratch",
        }
    }
}

impl FromStr for AdaptMode {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probe" => Ok(AdaptMode::Probe),
            "finetune" => Ok(AdaptMode::Finetune),
            "scratch" => Ok(AdaptMode::Scratch),
            _ => Err(cfg_err(format!("adapt mode must be probe, finetune or scratch, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptSection {
    pub mode: AdaptMode,
    pub pretrained: PathBuf,
    /// Task definition JSON; when set it replaces the inline task keys.
    pub task_definition: Option<PathBuf>,
    pub task_name: String,
    pub target_codes: Vec<String>,
    pub min_history_days: f64,
    pub label_seed: u64,
    /// Share of training samples used for fitting.
    pub label_fraction: f64,
    /// Candidate penalties; with more than one, the validation split picks.
    pub probe_l2: Vec<f64>,
    pub probe_pieces: usize,
    pub train: TrainConfig,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateSection {
    pub model: PathBuf,
    pub compare: Option<PathBuf>,
    pub bootstrap_replicates: usize,
    pub bootstrap_seed: u64,
    pub calibration_bins: usize,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSection {
    pub batch_sizes: Vec<usize>,
    pub num_tasks: usize,
    pub num_pieces: usize,
    pub survival_dim: usize,
    pub density: f64,
    pub repeats: usize,
    pub seed: u64,
    /// Dense timings are skipped above this many `events × tasks × pieces`
    /// cells.
    pub dense_cell_limit: usize,
    pub output_dir: PathBuf,
}

/// Fully resolved configuration of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub synth: SynthSection,
    pub tasks: TasksSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub adapt: AdaptSection,
    pub evaluate: EvaluateSection,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_file(&ConfigFile::default()).expect("defaults are valid")
    }
}

fn read_train(s: &mut Section<'_>, defaults: TrainConfig) -> Result<TrainConfig> {
    let epochs_this_call: usize = s.get("epochs_this_call", 0)?;
    Ok(TrainConfig {
        learning_rate: s.get("learning_rate", defaults.learning_rate)?,
        warmup_steps: s.get("warmup_steps", defaults.warmup_steps)?,
        max_epochs: s.get("epochs", defaults.max_epochs)?,
        patience: s.get("patience", defaults.patience)?,
        batch_size: s.get("batch_size", defaults.batch_size)?,
        grad_clip: s.get("grad_clip", defaults.grad_clip)?,
        final_lr_fraction: s.get("final_lr_fraction", defaults.final_lr_fraction)?,
        adam: AdamConfig {
            beta1: s.get("adam_beta1", defaults.adam.beta1)?,
            beta2: s.get("adam_beta2", defaults.adam.beta2)?,
            epsilon: s.get("adam_epsilon", defaults.adam.epsilon)?,
            weight_decay: s.get("weight_decay", defaults.adam.weight_decay)?,
        },
        seed: s.get("seed", defaults.seed)?,
        epochs_this_call: (epochs_this_call > 0).then_some(epochs_this_call),
        validate_initial: false,
    })
}

fn write_train(out: &mut String, t: &TrainConfig) {
    kv(out, "learning_rate", t.learning_rate);
    kv(out, "warmup_steps", t.warmup_steps);
    kv(out, "epochs", t.max_epochs);
    kv(out, "epochs_this_call", t.epochs_this_call.unwrap_or(0));
    kv(out, "patience", t.patience);
    kv(out, "batch_size", t.batch_size);
    kv(out, "grad_clip", t.grad_clip);
    kv(out, "final_lr_fraction", t.final_lr_fraction);
    kv(out, "adam_beta1", t.adam.beta1);
    kv(out, "adam_beta2", t.adam.beta2);
    kv(out, "adam_epsilon", t.adam.epsilon);
    kv(out, "weight_decay", t.adam.weight_decay);
    kv(out, "seed", t.seed);
}

fn kv(out: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{key} = {value}");
}

fn kv_path(out: &mut String, key: &str, value: &Path) {
    kv(out, key, value.display());
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut file = match path {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        for o in overrides {
            file.set(o)?;
        }
        Self::from_file(&file)
    }

    pub fn from_file(file: &ConfigFile) -> Result<Self> {
        let mut s = Section::new(file, "run");
        let run = RunSection { output_dir: s.path("output_dir", PathBuf::from("out")), deterministic: s.bool("deterministic", true)? };
        s.finish()?;
        let out = run.output_dir.clone();

        let mut s = Section::new(file, "data");
        let data = DataSection {
            events: s.path("events", out.join("synth/events.jsonl")),
            ontology: s.path("ontology", out.join("synth/ontology.jsonl")),
            ground_truth: s.path("ground_truth", out.join("synth/ground_truth.jsonl")),
            normalize: s.bool("normalize", true)?,
            add_unknown_codes: s.bool("add_unknown_codes", false)?,
            split_seed: s.get("split_seed", SPLIT_HASH_SEED)?,
            split: {
                let d = SplitFractions::default();
                let train = s.get("train_fraction", d.train)?;
                let validation = s.get("validation_fraction", d.validation)?;
                SplitFractions { train, validation, test: 1.0 - train - validation }
            },
            death_code: s.opt_string("death_code"),
        };
        s.finish()?;

        let toy = GeneratorSpec::toy(1, 0);
        let mut s = Section::new(file, "synth");
        let synth = SynthSection {
            patients: s.get("patients", 2000)?,
            seed: s.get("seed", 0)?,
            risk_multiplier: s.get("risk_multiplier", toy.risk_rules[0].multiplier)?,
            risk_prevalence: s.get("risk_prevalence", toy.risk_codes[0].prevalence)?,
            censor_hazard: s.get("censor_hazard", toy.censor_hazard)?,
            max_followup_days: s.get("max_followup_days", toy.max_followup_days)?,
            visit_rate: s.get("visit_rate", toy.visit_rate)?,
            background_rate: s.get("background_rate", toy.background_rate)?,
            background_codes: s.get("background_codes", toy.background_codes)?,
            background_groups: s.get("background_groups", toy.background_groups)?,
            codes_per_visit: s.get("codes_per_visit", toy.codes_per_visit)?,
            rerecord_probability: s.get("rerecord_probability", toy.rerecord_probability)?,
            target_hazard_scale: s.get("target_hazard_scale", 1.0)?,
        };
        s.finish()?;

        let mut s = Section::new(file, "tasks");
        let tasks = TasksSection {
            num_tasks: s.get("num_tasks", 32)?,
            exclude: s.list("exclude", vec!["TGT7".to_string()])?,
            task_list: s.path("task_list", out.join("tasks/tasks.txt")),
        };
        s.finish()?;

        let e = EncoderConfig::default();
        let h = HeadConfig::default();
        let mut s = Section::new(file, "model");
        let model = ModelSection {
            encoder: EncoderConfig {
                vocab_size: s.get("vocabulary_size", e.vocab_size)?,
                inner_dim: s.get("inner_dim", e.inner_dim)?,
                layers: s.get("layers", e.layers)?,
                heads: s.get("heads", e.heads)?,
                attention_window: s.get("attention_window", e.attention_window)?,
                max_sequence: s.get("max_sequence_length", e.max_sequence)?,
                dropout: s.get("dropout", e.dropout)?,
                ffn_multiplier: s.get("ffn_multiplier", e.ffn_multiplier)?,
                rotary_base: s.get("rotary_base", e.rotary_base)?,
            },
            head: HeadConfig {
                num_pieces: s.get("num_time_pieces", h.num_pieces)?,
                survival_dim: s.get("survival_dim", h.survival_dim)?,
                task_block: s.get("task_block", h.task_block)?,
            },
        };
        s.finish()?;

        let mut s = Section::new(file, "train");
        let train = TrainSection { train: read_train(&mut s, TrainConfig { max_epochs: 5, ..TrainConfig::default() })? };
        s.finish()?;

        let mut s = Section::new(file, "adapt");
        let mode: AdaptMode = s.get("mode", AdaptMode::Probe)?;
        let adapt = AdaptSection {
            mode,
            pretrained: s.path("pretrained", out.join("pretrain/model.ckpt")),
            task_definition: s.opt_path("task_definition"),
            task_name: s.opt_string("task_name").unwrap_or_else(|| "heldout".to_string()),
            target_codes: s.list("target_codes", vec!["TGT7".to_string()])?,
            min_history_days: s.get("min_history_days", tte_core::adaptation::MIN_HISTORY_DAYS)?,
            label_seed: s.get("label_seed", 0)?,
            label_fraction: s.get("label_fraction", 1.0)?,
            probe_l2: s.list("probe_l2", vec![0.01, 0.1, 1.0, 10.0, 100.0, 1000.0])?,
            probe_pieces: s.get("probe_pieces", tte_core::adaptation::ProbeConfig::default().num_pieces)?,
            train: read_train(
                &mut s,
                TrainConfig { learning_rate: 1e-4, warmup_steps: 10, max_epochs: 5, ..TrainConfig::default() },
            )?,
            output: s.path("output", out.join(format!("adapt/{}/task_model.ckpt", mode.as_str()))),
        };
        s.finish()?;

        let mut s = Section::new(file, "evaluate");
        let evaluate = EvaluateSection {
            model: s.path("model", adapt.output.clone()),
            compare: s.opt_path("compare"),
            bootstrap_replicates: s.get("bootstrap_replicates", 200)?,
            bootstrap_seed: s.get("bootstrap_seed", 0)?,
            calibration_bins: s.get("calibration_bins", 10)?,
            output_dir: s.path("output_dir", out.join("evaluate").join(mode.as_str())),
        };
        s.finish()?;

        let mut s = Section::new(file, "bench");
        let bench = BenchSection {
            batch_sizes: s.list("batch_sizes", vec![1, 8, 32])?,
            num_tasks: s.get("num_tasks", 8192)?,
            num_pieces: s.get("num_pieces", 8)?,
            survival_dim: s.get("survival_dim", 32)?,
            density: s.get("density", 0.006)?,
            repeats: s.get("repeats", 3)?,
            seed: s.get("seed", 0)?,
            dense_cell_limit: s.get("dense_cell_limit", 50_000_000)?,
            output_dir: s.path("output_dir", out.join("bench")),
        };
        s.finish()?;

        let cfg = RunConfig { run, data, synth, tasks, model, train, adapt, evaluate, bench };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.data.split;
        if !(f.train > 0.0 && f.validation >= 0.0 && f.test >= -1e-12) {
            return Err(cfg_err("data.train_fraction and data.validation_fraction must be non-negative and sum to at most 1"));
        }
        if !(self.adapt.label_fraction > 0.0 && self.adapt.label_fraction <= 1.0) {
            return Err(cfg_err("adapt.label_fraction must lie in (0, 1]"));
        }
        if self.adapt.probe_l2.is_empty() || self.adapt.probe_l2.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(cfg_err("adapt.probe_l2 needs at least one finite, non-negative value"));
        }
        if !(self.synth.target_hazard_scale > 0.0 && self.synth.target_hazard_scale.is_finite()) {
            return Err(cfg_err("synth.target_hazard_scale must be positive"));
        }
        if self.tasks.num_tasks == 0 {
            return Err(cfg_err("tasks.num_tasks must be at least 1"));
        }
        if !(self.bench.density > 0.0 && self.bench.density <= 1.0) || self.bench.batch_sizes.is_empty() || self.bench.repeats == 0 {
            return Err(cfg_err("bench.density must lie in (0, 1], with at least one batch size and one repeat"));
        }
        if self.evaluate.calibration_bins == 0 {
            return Err(cfg_err("evaluate.calibration_bins must be at least 1"));
        }
        self.model.encoder.validate()?;
        self.train.train.validate()?;
        self.adapt.train.validate()?;
        self.generator_spec().validate()?;
        Ok(())
    }

    pub fn generator_spec(&self) -> GeneratorSpec {
        let s = &self.synth;
        let mut spec = GeneratorSpec::toy(s.patients, s.seed);
        spec.risk_codes.iter_mut().for_each(|r| r.prevalence = s.risk_prevalence);
        spec.risk_rules.iter_mut().for_each(|r| r.multiplier = s.risk_multiplier);
        spec.censor_hazard = s.censor_hazard;
        spec.max_followup_days = s.max_followup_days;
        spec.visit_rate = s.visit_rate;
        spec.background_rate = s.background_rate;
        spec.background_codes = s.background_codes;
        spec.background_groups = s.background_groups;
        spec.codes_per_visit = s.codes_per_visit;
        spec.rerecord_probability = s.rerecord_probability;
        for t in spec.targets.iter_mut() {
            t.base_hazards.iter_mut().for_each(|h| *h *= s.target_hazard_scale);
        }
        spec
    }

    /// The resolved configuration in the same text format; parsing it back
    /// gives an identical `RunConfig`.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        o.push_str("[run]\n");
        kv_path(&mut o, "output_dir", &self.run.output_dir);
        kv(&mut o, "deterministic", self.run.deterministic);

        let d = &self.data;
        o.push_str("\n[data]\n");
        kv_path(&mut o, "events", &d.events);
        kv_path(&mut o, "ontology", &d.ontology);
        kv_path(&mut o, "ground_truth", &d.ground_truth);
        kv(&mut o, "normalize", d.normalize);
        kv(&mut o, "add_unknown_codes", d.add_unknown_codes);
        kv(&mut o, "split_seed", d.split_seed);
        kv(&mut o, "train_fraction", d.split.train);
        kv(&mut o, "validation_fraction", d.split.validation);
        kv(&mut o, "death_code", d.death_code.as_deref().unwrap_or(""));

        let s = &self.synth;
        o.push_str("\n[synth]\n");
        kv(&mut o, "patients", s.patients);
        kv(&mut o, "seed", s.seed);
        kv(&mut o, "risk_multiplier", s.risk_multiplier);
        kv(&mut o, "risk_prevalence", s.risk_prevalence);
        kv(&mut o, "censor_hazard", s.censor_hazard);
        kv(&mut o, "max_followup_days", s.max_followup_days);
        kv(&mut o, "visit_rate", s.visit_rate);
        kv(&mut o, "background_rate", s.background_rate);
        kv(&mut o, "background_codes", s.background_codes);
        kv(&mut o, "background_groups", s.background_groups);
        kv(&mut o, "codes_per_visit", s.codes_per_visit);
        kv(&mut o, "rerecord_probability", s.rerecord_probability);
        kv(&mut o, "target_hazard_scale", s.target_hazard_scale);

        o.push_str("\n[tasks]\n");
        kv(&mut o, "num_tasks", self.tasks.num_tasks);
        kv(&mut o, "exclude", join(&self.tasks.exclude));
        kv_path(&mut o, "task_list", &self.tasks.task_list);

        let (e, h) = (&self.model.encoder, &self.model.head);
        o.push_str("\n[model]\n");
        kv(&mut o, "vocabulary_size", e.vocab_size);
        kv(&mut o, "inner_dim", e.inner_dim);
        kv(&mut o, "layers", e.layers);
        kv(&mut o, "heads", e.heads);
        kv(&mut o, "attention_window", e.attention_window);
        kv(&mut o, "max_sequence_length", e.max_sequence);
        kv(&mut o, "dropout", e.dropout);
        kv(&mut o, "ffn_multiplier", e.ffn_multiplier);
        kv(&mut o, "rotary_base", e.rotary_base);
        kv(&mut o, "num_time_pieces", h.num_pieces);
        kv(&mut o, "survival_dim", h.survival_dim);
        kv(&mut o, "task_block", h.task_block);

        o.push_str("\n[train]\n");
        write_train(&mut o, &self.train.train);

        let a = &self.adapt;
        o.push_str("\n[adapt]\n");
        kv(&mut o, "mode", a.mode.as_str());
        kv_path(&mut o, "pretrained", &a.pretrained);
        kv(&mut o, "task_definition", a.task_definition.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        kv(&mut o, "task_name", &a.task_name);
        kv(&mut o, "target_codes", join(&a.target_codes));
        kv(&mut o, "min_history_days", a.min_history_days);
        kv(&mut o, "label_seed", a.label_seed);
        kv(&mut o, "label_fraction", a.label_fraction);
        kv(&mut o, "probe_l2", join(&a.probe_l2));
        kv(&mut o, "probe_pieces", a.probe_pieces);
        write_train(&mut o, &a.train);
        kv_path(&mut o, "output", &a.output);

        let v = &self.evaluate;
        o.push_str("\n[evaluate]\n");
        kv_path(&mut o, "model", &v.model);
        kv(&mut o, "compare", v.compare.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        kv(&mut o, "bootstrap_replicates", v.bootstrap_replicates);
        kv(&mut o, "bootstrap_seed", v.bootstrap_seed);
        kv(&mut o, "calibration_bins", v.calibration_bins);
        kv_path(&mut o, "output_dir", &v.output_dir);

        let b = &self.bench;
        o.push_str("\n[bench]\n");
        kv(&mut o, "batch_sizes", join(&b.batch_sizes));
        kv(&mut o, "num_tasks", b.num_tasks);
        kv(&mut o, "num_pieces", b.num_pieces);
        kv(&mut o, "survival_dim", b.survival_dim);
        kv(&mut o, "density", b.density);
        kv(&mut o, "repeats", b.repeats);
        kv(&mut o, "seed", b.seed);
        kv(&mut o, "dense_cell_limit", b.dense_cell_limit);
        kv_path(&mut o, "output_dir", &b.output_dir);
        o
    }
}
