//! The pipeline stages behind each CLI subcommand. Every stage reads its
//! inputs from the paths in [`RunConfig`], writes its outputs plus a
//! `config.resolved` next to them, and returns a summary.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use tte_core::adaptation::{
    finetune, linear_probe_selected, make_task_labels, train_scratch, Pretrained, ProbeConfig, ScratchConfig, TaskModel, TaskSample,
};
use tte_core::exec::Executor;
use tte_core::head::{
    dense_nll, fused_nll, memory_report, DenseLabels, LabelPolicy, PieceGrid, PiecewiseHazard, SparseEntry, SurvivalBatch,
    TaskHead,
};
use tte_core::metrics::{
    harrell_c_average_hazard, integrated_brier_score, nd_calibration, paired_bootstrap, td_c_statistic, EvalSample,
};
use tte_core::objectives::{
    pretrain_next_code, pretrain_tte, resume_tte, EpochRecord, Resume, StepRecord, TrainOutcome, TteParams,
};
use tte_core::encoder::TokenMap;
use tte_core::ontology::{expand_excluded, select_tasks, Ontology, PresenceStats, TaskSet};
use tte_core::rng::{self, standard_normal};
use tte_core::synth::{generate, GroundTruth};
use tte_core::timeline::{assign_split, normalize, CodeId, EventTimeline, NormalizationReport, Split};

use crate::checkpoint::{self, AdaptInfo, Model, TrainInfo};
use crate::config::{AdaptMode, RunConfig};
use crate::error::{PipelineError, Result};
use crate::io::{self, TaskDefinition};
use crate::report::{self, BrierScore, Calibration, Comparison, Interval, MetricReport};
use crate::truth;

const LABEL_FRACTION_STREAM: u64 = 0x4c41_4246;
const BENCH_PIECE_DAYS: f64 = 30.0;

pub const RESOLVED_CONFIG: &str = "config.resolved";

fn write_resolved(cfg: &RunConfig, dir: &Path) -> Result<()> {
    io::write_string(&dir.join(RESOLVED_CONFIG), &cfg.to_text())
}

fn parent(path: &Path) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// Parsed and normalized input data.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub ontology: Ontology,
    pub timelines: Vec<EventTimeline>,
    pub normalization: NormalizationReport,
}

impl Corpus {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let mut ontology = io::read_ontology_file(&cfg.data.ontology)?;
        let mut timelines = io::read_events_file(&cfg.data.events, &mut ontology, cfg.data.add_unknown_codes)?;
        let mut normalization = NormalizationReport::default();
        if cfg.data.normalize {
            for tl in timelines.iter_mut() {
                let (out, r) = normalize(tl);
                *tl = out;
                normalization.merge(&r);
            }
        }
        info!("loaded {} patients, {} codes ({normalization:?})", timelines.len(), ontology.len());
        Ok(Corpus { ontology, timelines, normalization })
    }

    pub fn policy(&self, cfg: &RunConfig) -> Result<LabelPolicy> {
        let death_code = match &cfg.data.death_code {
            Some(c) => Some(
                self.ontology.vocab().get(c).ok_or_else(|| PipelineError::Config(format!("data.death_code `{c}` is not in the ontology")))?,
            ),
            None => None,
        };
        Ok(LabelPolicy { death_code })
    }

    pub fn split(&self, cfg: &RunConfig, which: Split) -> Vec<EventTimeline> {
        self.timelines.iter().filter(|t| split_of(cfg, t) == which).cloned().collect()
    }
}

fn split_of(cfg: &RunConfig, tl: &EventTimeline) -> Split {
    assign_split(tl.patient_id, &cfg.data.split, cfg.data.split_seed)
}

#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub patients: usize,
    pub events: usize,
    pub dir: PathBuf,
}

pub fn synth(cfg: &RunConfig) -> Result<SynthSummary> {
    let cohort = generate(&cfg.generator_spec())?;
    let vocab = cohort.ontology.vocab();
    io::write_events_file(&cfg.data.events, &cohort.timelines, vocab)?;
    io::write_ontology_file(&cfg.data.ontology, &cohort.ontology)?;
    truth::write_ground_truth_file(&cfg.data.ground_truth, &cohort.truth)?;
    let dir = parent(&cfg.data.events);
    write_resolved(cfg, &dir)?;
    let events = cohort.timelines.iter().map(|t| t.len()).sum();
    info!("synth: {} patients, {events} events -> {}", cohort.timelines.len(), cfg.data.events.display());
    Ok(SynthSummary { patients: cohort.timelines.len(), events, dir })
}

fn excluded(cfg: &RunConfig, ontology: &Ontology) -> Result<BTreeSet<CodeId>> {
    expand_excluded(ontology, &cfg.tasks.exclude).map_err(|e| PipelineError::Config(format!("tasks.exclude: {e}")))
}

/// Ranks codes by conditional entropy on the training split and writes the
/// task list.
pub fn select_tasks_stage(cfg: &RunConfig) -> Result<Vec<String>> {
    let corpus = Corpus::load(cfg)?;
    let train = corpus.split(cfg, Split::Train);
    let stats = PresenceStats::from_timelines(&corpus.ontology, &train);
    let excluded = excluded(cfg, &corpus.ontology)?;
    let tasks = select_tasks(&corpus.ontology, &stats, cfg.tasks.num_tasks, &excluded)?;
    io::write_task_list(&cfg.tasks.task_list, &tasks, corpus.ontology.vocab())?;
    write_resolved(cfg, &parent(&cfg.tasks.task_list))?;
    let names: Vec<String> = tasks.tasks.iter().map(|&c| corpus.ontology.vocab().name(c).to_string()).collect();
    info!("select-tasks: {} tasks -> {}", names.len(), cfg.tasks.task_list.display());
    Ok(names)
}

fn loss_csv(steps: &[StepRecord], header: bool) -> String {
    let mut s = String::new();
    if header {
        s.push_str("step,epoch,loss,learning_rate,grad_norm\n");
    }
    for r in steps {
        let _ = writeln!(s, "{},{},{},{},{}", r.step, r.epoch, r.loss, r.learning_rate, r.grad_norm);
    }
    s
}

fn epochs_csv(epochs: &[EpochRecord], header: bool) -> String {
    let mut s = String::new();
    if header {
        s.push_str("epoch,train_loss,validation_loss,improved\n");
    }
    for r in epochs {
        let _ = writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, r.validation_loss, r.improved);
    }
    s
}

/// Writes `loss.csv` and `epochs.csv`, appending when `append` is set.
fn write_curves<P>(dir: &Path, outcome: &TrainOutcome<P>, append: bool) -> Result<()> {
    for (file, body) in [
        ("loss.csv", loss_csv(&outcome.steps, !append)),
        ("epochs.csv", epochs_csv(&outcome.epochs, !append)),
    ] {
        let path = dir.join(file);
        let text = if append { std::fs::read_to_string(&path).map_err(PipelineError::io(&path))? + &body } else { body };
        io::write_string(&path, &text)?;
    }
    Ok(())
}

fn write_timing(cfg: &RunConfig, dir: &Path, started: Instant) -> Result<()> {
    if !cfg.run.deterministic {
        io::write_string(&dir.join("timing.json"), &format!("{{\"elapsed_seconds\":{}}}\n", started.elapsed().as_secs_f64()))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PretrainSummary {
    pub dir: PathBuf,
    pub checkpoint: PathBuf,
    pub best_epoch: Option<usize>,
    pub best_validation_loss: f64,
    pub steps: u64,
    pub stopped_early: bool,
}

fn pretrain_dir(cfg: &RunConfig) -> PathBuf {
    cfg.run.output_dir.join("pretrain")
}

/// Time-to-event pretraining. With `resume`, continues from the
/// `model.ckpt`/`state.ckpt` pair written by an earlier call.
pub fn pretrain_stage<E: Executor>(cfg: &RunConfig, exec: &E, resume: bool) -> Result<PretrainSummary> {
    let started = Instant::now();
    let mut corpus = Corpus::load(cfg)?;
    let policy = corpus.policy(cfg)?;
    let dir = pretrain_dir(cfg);
    let model_path = dir.join("model.ckpt");
    let state_path = dir.join("state.ckpt");
    let train = corpus.split(cfg, Split::Train);
    let validation = corpus.split(cfg, Split::Validation);
    let (model, outcome) = if resume {
        let ckpt = checkpoint::load(&model_path, &mut corpus.ontology)?;
        let Model::Tte(saved) = ckpt.model else {
            return Err(PipelineError::Data(format!("{}: not a time-to-event model", model_path.display())));
        };
        let (last, state) = checkpoint::load_train_state(&state_path, &saved.params)?;
        info!("pretrain: resuming at step {} epoch {}", state.step, state.epoch);
        let best = saved.params.clone();
        resume_tte(&train, &validation, &saved, cfg.model.head.task_block, &cfg.train.train, &policy, Resume { last, best, state }, exec)?
    } else {
        let codes = io::read_task_list(&cfg.tasks.task_list, corpus.ontology.vocab())?;
        let tasks = TaskSet { tasks: codes, excluded: excluded(cfg, &corpus.ontology)? };
        if let Some(c) = tasks.tasks.iter().find(|c| tasks.excluded.contains(c)) {
            return Err(PipelineError::Config(format!("task `{}` is excluded from pretraining", corpus.ontology.vocab().name(*c))));
        }
        info!("pretrain: {} train / {} validation patients, {} tasks", train.len(), validation.len(), tasks.len());
        pretrain_tte(&train, &validation, &tasks, &cfg.model.encoder, &cfg.model.head, &cfg.train.train, &policy, exec)?
    };
    let vocab = corpus.ontology.vocab();
    let info = TrainInfo::new(cfg.train.train.seed, &outcome.state);
    checkpoint::save_tte(&model_path, &model, vocab, Some(info))?;
    checkpoint::save_train_state::<TteParams>(&state_path, &model, vocab, &outcome.last, &outcome.state, cfg.train.train.seed)?;
    write_curves(&dir, &outcome, resume)?;
    write_resolved(cfg, &dir)?;
    write_timing(cfg, &dir, started)?;
    log_epochs(&outcome.epochs);
    Ok(PretrainSummary {
        dir,
        checkpoint: model_path,
        best_epoch: outcome.state.best_epoch,
        best_validation_loss: outcome.state.best_validation_loss,
        steps: outcome.state.step,
        stopped_early: outcome.stopped_early,
    })
}

fn log_epochs(epochs: &[EpochRecord]) {
    for e in epochs {
        info!("epoch {}: train {:.6} validation {:.6}{}", e.epoch, e.train_loss, e.validation_loss, if e.improved { " *" } else { "" });
    }
}

/// Next-code pretraining over the most frequent training codes, leaving
/// out the codes excluded from time-to-event pretraining.
pub fn pretrain_next_code_stage<E: Executor>(cfg: &RunConfig, exec: &E) -> Result<PretrainSummary> {
    let started = Instant::now();
    let corpus = Corpus::load(cfg)?;
    let dir = cfg.run.output_dir.join("pretrain_next_code");
    let train = corpus.split(cfg, Split::Train);
    let validation = corpus.split(cfg, Split::Validation);
    let excluded = excluded(cfg, &corpus.ontology)?;
    let dictionary: Vec<CodeId> = TokenMap::from_frequencies(&train, cfg.model.encoder.vocab_size)
        .codes()
        .iter()
        .copied()
        .filter(|c| !excluded.contains(c))
        .collect();
    info!("pretrain-next-code: {} train / {} validation patients, {} targets", train.len(), validation.len(), dictionary.len());
    let (model, outcome) = pretrain_next_code(&train, &validation, &dictionary, &cfg.model.encoder, &cfg.train.train, exec)?;
    let path = dir.join("model.ckpt");
    checkpoint::save_next_code(&path, &model, corpus.ontology.vocab(), Some(TrainInfo::new(cfg.train.train.seed, &outcome.state)))?;
    write_curves(&dir, &outcome, false)?;
    write_resolved(cfg, &dir)?;
    write_timing(cfg, &dir, started)?;
    log_epochs(&outcome.epochs);
    Ok(PretrainSummary {
        dir,
        checkpoint: path,
        best_epoch: outcome.state.best_epoch,
        best_validation_loss: outcome.state.best_validation_loss,
        steps: outcome.state.step,
        stopped_early: outcome.stopped_early,
    })
}

/// The task definition from `adapt.task_definition`, or from the inline
/// `adapt` keys.
pub fn task_definition(cfg: &RunConfig) -> Result<TaskDefinition> {
    match &cfg.adapt.task_definition {
        Some(p) => io::read_task_definition(p),
        None => Ok(TaskDefinition {
            name: cfg.adapt.task_name.clone(),
            target_codes: cfg.adapt.target_codes.clone(),
            min_history_days: cfg.adapt.min_history_days,
            seed: cfg.adapt.label_seed,
        }),
    }
}

/// Task samples of every split. Target codes include their descendants.
#[derive(Debug, Clone)]
pub struct TaskSplits {
    pub train: Vec<TaskSample>,
    pub validation: Vec<TaskSample>,
    pub test: Vec<TaskSample>,
    pub no_qualifying_visit: usize,
    pub prior_occurrence: usize,
}

pub fn task_splits(cfg: &RunConfig, corpus: &Corpus, def: &TaskDefinition) -> Result<TaskSplits> {
    let mut targets = BTreeSet::new();
    for c in &def.target_codes {
        let id = corpus.ontology.vocab().get(c).ok_or_else(|| PipelineError::Data(format!("target code `{c}` is not in the data")))?;
        targets.insert(id);
        targets.extend(corpus.ontology.descendants(id));
    }
    let task = make_task_labels(&corpus.timelines, &targets, def.min_history_days, def.seed, &corpus.policy(cfg)?);
    let mut out = TaskSplits {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        no_qualifying_visit: task.no_qualifying_visit,
        prior_occurrence: task.prior_occurrence,
    };
    for s in task.samples {
        match assign_split(s.patient_id, &cfg.data.split, cfg.data.split_seed) {
            Split::Train => out.train.push(s),
            Split::Validation => out.validation.push(s),
            Split::Test => out.test.push(s),
        }
    }
    Ok(out)
}

/// A seeded subset of `fraction` of the samples (at least one), kept in
/// their original order.
pub fn label_subset(samples: &[TaskSample], fraction: f64, seed: u64) -> Vec<TaskSample> {
    if fraction >= 1.0 {
        return samples.to_vec();
    }
    let keep = ((samples.len() as f64 * fraction).ceil() as usize).clamp(1.min(samples.len()), samples.len());
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    rng::shuffle(&mut rng::seeded(seed ^ LABEL_FRACTION_STREAM), &mut idx);
    let mut chosen = idx[..keep].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| samples[i]).collect()
}

#[derive(Debug, Clone)]
pub struct AdaptSummary {
    pub checkpoint: PathBuf,
    pub train_samples: usize,
    pub train_events: usize,
    pub validation_samples: usize,
}

pub fn adapt_stage<E: Executor>(cfg: &RunConfig, exec: &E) -> Result<AdaptSummary> {
    let started = Instant::now();
    let mut corpus = Corpus::load(cfg)?;
    let def = task_definition(cfg)?;
    let splits = task_splits(cfg, &corpus, &def)?;
    let train = label_subset(&splits.train, cfg.adapt.label_fraction, def.seed);
    let train_events = train.iter().filter(|s| s.event).count();
    info!(
        "adapt ({}): {} train samples ({train_events} events), {} validation; {} without a qualifying visit, {} with a prior target",
        cfg.adapt.mode.as_str(),
        train.len(),
        splits.validation.len(),
        splits.no_qualifying_visit,
        splits.prior_occurrence
    );
    if train_events == 0 {
        return Err(PipelineError::Data("no target events among the training samples".into()));
    }
    let probe_config = ProbeConfig { num_pieces: cfg.adapt.probe_pieces, ..ProbeConfig::default() };
    let mut info = AdaptInfo {
        mode: cfg.adapt.mode.as_str().to_string(),
        pretrained: String::new(),
        pretrained_kind: None,
        label_fraction: cfg.adapt.label_fraction,
        split_seed: cfg.data.split_seed,
        train_samples: train.len(),
        train_events,
        probe_loss: None,
        probe_iterations: None,
        probe_l2: None,
    };
    let dir = parent(&cfg.adapt.output);
    let (model, outcome) = match cfg.adapt.mode {
        AdaptMode::Probe | AdaptMode::Finetune => {
            let ckpt = checkpoint::load(&cfg.adapt.pretrained, &mut corpus.ontology)?;
            info.pretrained = cfg.adapt.pretrained.display().to_string();
            info.pretrained_kind = Some(ckpt.header.kind);
            let pretrained = match &ckpt.model {
                Model::Tte(m) => Pretrained::Tte(m),
                Model::NextCode(m) => Pretrained::NextCode(m),
                Model::Task(_) => {
                    return Err(PipelineError::Data(format!("{}: expected a pretrained model, found a task model", cfg.adapt.pretrained.display())))
                }
            };
            if cfg.adapt.probe_l2.len() > 1 && splits.validation.is_empty() {
                return Err(PipelineError::Data("choosing adapt.probe_l2 needs validation samples".into()));
            }
            let (probe, fit, l2) =
                linear_probe_selected(pretrained, &corpus.timelines, &train, &splits.validation, &probe_config, &cfg.adapt.probe_l2, exec)?;
            info!("probe: l2 {l2}, {} Newton iterations", fit.iterations);
            info.probe_loss = Some(fit.loss);
            info.probe_iterations = Some(fit.iterations);
            info.probe_l2 = Some(l2);
            if cfg.adapt.mode == AdaptMode::Probe {
                (probe, None)
            } else {
                let (m, o) = finetune(&probe, &corpus.timelines, &train, &splits.validation, &cfg.adapt.train, exec)?;
                (m, Some(o))
            }
        }
        AdaptMode::Scratch => {
            let scratch = ScratchConfig { head: cfg.model.head.clone() };
            let (m, o) = train_scratch(&cfg.model.encoder, &scratch, &corpus.timelines, &train, &splits.validation, &cfg.adapt.train, exec)?;
            (m, Some(o))
        }
    };
    let train_info = outcome.as_ref().map(|o| TrainInfo::new(cfg.adapt.train.seed, &o.state));
    checkpoint::save_task(&cfg.adapt.output, &model, corpus.ontology.vocab(), &def, info, train_info)?;
    if let Some(o) = &outcome {
        write_curves(&dir, o, false)?;
        log_epochs(&o.epochs);
    }
    write_resolved(cfg, &dir)?;
    write_timing(cfg, &dir, started)?;
    Ok(AdaptSummary { checkpoint: cfg.adapt.output.clone(), train_samples: train.len(), train_events, validation_samples: splits.validation.len() })
}

fn load_task_model(path: &Path, ontology: &mut Ontology) -> Result<(TaskModel, checkpoint::Header)> {
    let ckpt = checkpoint::load(path, ontology)?;
    match ckpt.model {
        Model::Task(m) => Ok((m, ckpt.header)),
        _ => Err(PipelineError::Data(format!("{}: not a task model", path.display()))),
    }
}

fn metric<T>(r: tte_core::Result<T>, name: &str, undefined: &mut Vec<String>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(tte_core::Error::Undefined(why)) => {
            undefined.push(format!("{name}: {why}"));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn interval(r: tte_core::Result<tte_core::metrics::BootstrapResult>, name: &str, undefined: &mut Vec<String>) -> Result<Option<Interval>> {
    Ok(metric(r, name, undefined)?.map(|b| Interval { delta: b.delta, lower: b.lower, upper: b.upper, redrawn: b.redrawn }))
}

/// td-C of the generator's hazards on `samples`, when the task is a single
/// generator target.
pub fn oracle_td_c(truth: &GroundTruth, def: &TaskDefinition, samples: &[TaskSample]) -> Option<f64> {
    let [code] = def.target_codes.as_slice() else { return None };
    let task = truth.target_index(code)?;
    let index: std::collections::BTreeMap<u64, usize> = truth.patients.iter().enumerate().map(|(i, p)| (p.patient_id.0, i)).collect();
    let curves = samples
        .iter()
        .map(|s| index.get(&s.patient_id.0).map(|&i| truth.curve_from(i, task, s.prediction_time)))
        .collect::<Option<Vec<_>>>()?;
    let sample = EvalSample::new(samples.iter().map(|s| s.time).collect(), samples.iter().map(|s| s.event).collect(), curves).ok()?;
    td_c_statistic(&sample, None).ok()
}

/// Scores the task model on the test split.
pub fn evaluate_stage<E: Executor>(cfg: &RunConfig, exec: &E) -> Result<MetricReport> {
    let started = Instant::now();
    let mut corpus = Corpus::load(cfg)?;
    let (model, header) = load_task_model(&cfg.evaluate.model, &mut corpus.ontology)?;
    let def = header.task.clone().expect("task models carry their definition");
    let samples = task_splits(cfg, &corpus, &def)?.test;
    let predictions = model.predict(&corpus.timelines, &samples, exec)?;
    let times: Vec<f64> = samples.iter().map(|s| s.time).collect();
    let events: Vec<bool> = samples.iter().map(|s| s.event).collect();
    let mut undefined = Vec::new();
    let sample = EvalSample::new(times.clone(), events.clone(), predictions)?;
    let td_c = metric(td_c_statistic(&sample, None), "td_c", &mut undefined)?;
    let harrell_c = metric(harrell_c_average_hazard(&sample, None), "harrell_c", &mut undefined)?;
    let bins = cfg.evaluate.calibration_bins;
    let nd = metric(nd_calibration(&sample, bins, None), "nd_calibration", &mut undefined)?
        .map(|c| Calibration { statistic: c.statistic, bins, t_eval: c.t_eval, floored_bins: c.floored_bins });
    let ibs = metric(integrated_brier_score(&sample, None), "ibs", &mut undefined)?
        .map(|b| BrierScore { value: b.value, lower: b.lower, upper: b.upper, dropped: b.dropped });
    let oracle = if cfg.data.ground_truth.exists() {
        oracle_td_c(&truth::read_ground_truth_file(&cfg.data.ground_truth)?, &def, &samples)
    } else {
        None
    };
    let comparison = match &cfg.evaluate.compare {
        None => None,
        Some(path) => {
            let (other, _) = load_task_model(path, &mut corpus.ontology)?;
            let other = EvalSample::new(times, events, other.predict(&corpus.timelines, &samples, exec)?)?;
            let (n, seed) = (cfg.evaluate.bootstrap_replicates, cfg.evaluate.bootstrap_seed);
            let horizon = sample.horizon();
            Some(Comparison {
                compare: path.display().to_string(),
                replicates: n,
                seed,
                td_c: interval(paired_bootstrap(&sample, &other, |s: &EvalSample<PiecewiseHazard>| td_c_statistic(s, horizon), n, seed), "bootstrap td_c", &mut undefined)?,
                harrell_c: interval(
                    paired_bootstrap(&sample, &other, |s: &EvalSample<PiecewiseHazard>| harrell_c_average_hazard(s, horizon), n, seed),
                    "bootstrap harrell_c",
                    &mut undefined,
                )?,
            })
        }
    };
    let report = MetricReport {
        model: cfg.evaluate.model.display().to_string(),
        task: def.name.clone(),
        target_codes: def.target_codes.clone(),
        mode: header.adaptation.as_ref().map_or_else(String::new, |a| a.mode.clone()),
        split: Split::Test.as_str().to_string(),
        samples: sample.len(),
        events: sample.events.iter().filter(|&&e| e).count(),
        horizon_days: sample.horizon(),
        td_c,
        harrell_c,
        nd_calibration: nd,
        ibs,
        oracle_td_c: oracle,
        comparison,
        undefined,
        conventions: report::conventions(),
    };
    let dir = &cfg.evaluate.output_dir;
    io::write_string(&dir.join("report.json"), &report.to_json())?;
    io::write_string(&dir.join("report.txt"), &report.to_table())?;
    write_resolved(cfg, dir)?;
    write_timing(cfg, dir, started)?;
    info!("evaluate: td_c {:?}, harrell_c {:?}", report.td_c, report.harrell_c);
    Ok(report)
}

/// One row of the benchmark.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BenchRow {
    pub events: usize,
    pub event_entries: usize,
    pub censor_overrides: usize,
    pub sparse_bytes: usize,
    pub dense_bytes: usize,
    pub ratio: f64,
    pub fused_seconds: f64,
    /// `None` when the dense tensors would exceed `bench.dense_cell_limit`.
    pub dense_seconds: Option<f64>,
    pub loss_relative_difference: Option<f64>,
    pub batch_file: String,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BenchReport {
    pub num_tasks: usize,
    pub num_pieces: usize,
    pub survival_dim: usize,
    pub density: f64,
    pub rows: Vec<BenchRow>,
}

/// A batch where each `(event, task)` pair has an event with probability
/// `density`, in a uniformly chosen piece; pieces are 30 days wide and every
/// prediction is followed for all of them.
pub fn random_batch(events: usize, num_tasks: usize, num_pieces: usize, density: f64, seed: u64) -> (SurvivalBatch, PieceGrid) {
    use rand::Rng;
    let grid = PieceGrid::new((0..num_pieces).map(|p| p as f64 * BENCH_PIECE_DAYS).collect()).expect("valid grid");
    let mut r = rng::seeded(seed);
    let mut batch = SurvivalBatch::empty(num_tasks, num_pieces);
    batch.num_events = events;
    batch.default_exposure = vec![BENCH_PIECE_DAYS; events * num_pieces];
    for j in 0..events {
        let mut hits = Vec::new();
        for k in 0..num_tasks {
            if r.random::<f64>() < density {
                hits.push((k as u32, r.random_range(0..num_pieces) as u32, r.random::<f64>() * BENCH_PIECE_DAYS));
            }
        }
        let mut entries = Vec::new();
        let mut overrides = Vec::new();
        for &(task, piece, time) in &hits {
            entries.push(SparseEntry { event: j as u32, task, piece, time });
            for q in piece + 1..num_pieces as u32 {
                overrides.push(SparseEntry { event: j as u32, task, piece: q, time: 0.0 });
            }
        }
        let key = |e: &SparseEntry| (e.piece, e.task);
        entries.sort_by_key(key);
        overrides.sort_by_key(key);
        batch.event_entries.extend(entries);
        batch.censor_overrides.extend(overrides);
    }
    (batch, grid)
}

fn best_of<F: FnMut() -> Result<f64>>(repeats: usize, mut f: F) -> Result<(f64, f64)> {
    let mut best = f64::INFINITY;
    let mut value = 0.0;
    for _ in 0..repeats {
        let t = Instant::now();
        value = f()?;
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok((best, value))
}

/// Sparse versus dense label memory and fused versus dense likelihood time.
pub fn bench_stage(cfg: &RunConfig) -> Result<BenchReport> {
    let b = &cfg.bench;
    let dir = &b.output_dir;
    let mut rows = Vec::new();
    for (i, &events) in b.batch_sizes.iter().enumerate() {
        let seed = rng::splitmix64(b.seed ^ i as u64);
        let (batch, grid) = random_batch(events, b.num_tasks, b.num_pieces, b.density, seed);
        batch.validate(&grid)?;
        let mut r = rng::substream(seed, 1);
        let mut head = TaskHead::zeros(1, b.num_pieces, b.survival_dim, b.num_tasks);
        head.task_embeddings.iter_mut().for_each(|v| *v = 0.1 * standard_normal(&mut r));
        head.task_bias.iter_mut().for_each(|v| *v = (b.density / BENCH_PIECE_DAYS).ln());
        let states: Vec<f64> = (0..events * b.num_pieces * b.survival_dim).map(|_| standard_normal(&mut r)).collect();
        let mem = memory_report(&batch, b.num_tasks, b.num_pieces);
        let (fused_seconds, fused_loss) = best_of(b.repeats, || Ok(fused_nll(&states, &head, &batch, cfg.model.head.task_block)?.loss))?;
        let cells = events * b.num_tasks * b.num_pieces;
        let (dense_seconds, diff) = if cells <= b.dense_cell_limit {
            let (secs, loss) = best_of(b.repeats, || Ok(dense_nll(&states, &head, &DenseLabels::from_batch(&batch))?.loss))?;
            (Some(secs), Some((loss - fused_loss).abs() / loss.abs().max(1e-300)))
        } else {
            (None, None)
        };
        let file = format!("batch_{events}.bin");
        let path = dir.join(&file);
        if let Some(d) = path.parent() {
            std::fs::create_dir_all(d).map_err(PipelineError::io(d))?;
        }
        std::fs::write(&path, crate::batch::encode(&batch)).map_err(PipelineError::io(&path))?;
        info!("bench: {events} events, sparse/dense {:.5}, fused {fused_seconds:.4}s, dense {dense_seconds:?}s", mem.ratio);
        rows.push(BenchRow {
            events,
            event_entries: batch.event_entries.len(),
            censor_overrides: batch.censor_overrides.len(),
            sparse_bytes: mem.sparse_bytes,
            dense_bytes: mem.dense_bytes,
            ratio: mem.ratio,
            fused_seconds,
            dense_seconds,
            loss_relative_difference: diff,
            batch_file: file,
        });
    }
    let report = BenchReport { num_tasks: b.num_tasks, num_pieces: b.num_pieces, survival_dim: b.survival_dim, density: b.density, rows };
    let mut json = serde_json::to_string_pretty(&report).expect("bench report serializes");
    json.push('\n');
    io::write_string(&dir.join("bench.json"), &json)?;
    io::write_string(&dir.join("bench.txt"), &bench_table(&report))?;
    write_resolved(cfg, dir)?;
    Ok(report)
}

fn bench_table(r: &BenchReport) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "tasks {}, pieces {}, survival_dim {}, density {}", r.num_tasks, r.num_pieces, r.survival_dim, r.density);
    let _ = writeln!(o, "{:>7} {:>14} {:>14} {:>9} {:>11} {:>11}", "events", "sparse_bytes", "dense_bytes", "ratio", "fused_s", "dense_s");
    for row in &r.rows {
        let dense = row.dense_seconds.map_or_else(|| "skipped".to_string(), |s| format!("{s:.5}"));
        let _ = writeln!(
            o,
            "{:>7} {:>14} {:>14} {:>9.5} {:>11.5} {:>11}",
            row.events, row.sparse_bytes, row.dense_bytes, row.ratio, row.fused_seconds, dense
        );
    }
    o
}
