use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::probe::passthrough_for_tests;
use super::*;
use crate::encoder::EncoderConfig;
use crate::exec::Sequential;
use crate::head::{LabelPolicy, PieceGrid, SurvivalCurve};
use crate::objectives::{pretrain_next_code, pretrain_tte, HeadConfig, TrainConfig, TteModel};
use crate::ontology::TaskSet;
use crate::rng::{self, seeded};
use crate::synth::{generate, Cohort, GeneratorSpec};
use crate::timeline::{CodeId, Event, EventKind, EventTimeline, PatientId};

fn ev(t: f64, c: u32, kind: EventKind) -> Event {
    Event::new(t, CodeId(c), kind)
}

fn record(id: u64, events: Vec<Event>) -> EventTimeline {
    EventTimeline::new(PatientId(id), 0.0, events)
}

fn targets(c: u32) -> BTreeSet<CodeId> {
    [CodeId(c)].into_iter().collect()
}

#[test]
fn prediction_at_370_with_code_at_400() {
    let tl = record(1, vec![
        ev(0.0, 5, EventKind::Other),
        ev(369.0, 1, EventKind::VisitStart),
        ev(370.0, 2, EventKind::VisitEnd),
        ev(400.0, 9, EventKind::Diagnosis),
        ev(500.0, 5, EventKind::Other),
    ]);
    let task = make_task_labels(&[tl], &targets(9), MIN_HISTORY_DAYS, 0, &LabelPolicy::default());
    assert_eq!(task.samples.len(), 1);
    let s = task.samples[0];
    assert_eq!((s.prediction_time, s.time, s.event, s.prediction_index), (370.0, 30.0, true, 2));
}

#[test]
fn earlier_code_excludes_patient() {
    let tl = record(1, vec![
        ev(0.0, 5, EventKind::Other),
        ev(300.0, 9, EventKind::Diagnosis),
        ev(369.0, 1, EventKind::VisitStart),
        ev(370.0, 2, EventKind::VisitEnd),
        ev(380.0, 1, EventKind::VisitStart),
        ev(381.0, 2, EventKind::VisitEnd),
        ev(500.0, 5, EventKind::Other),
    ]);
    let short = record(2, vec![ev(0.0, 1, EventKind::VisitStart), ev(2.0, 2, EventKind::VisitEnd), ev(700.0, 5, EventKind::Other)]);
    let task = make_task_labels(&[tl, short], &targets(9), MIN_HISTORY_DAYS, 0, &LabelPolicy::default());
    assert!(task.samples.is_empty());
    assert_eq!((task.prior_occurrence, task.no_qualifying_visit), (1, 1));
}

fn small_cohort(n: usize, seed: u64) -> Cohort {
    let mut spec = GeneratorSpec::toy(n, seed);
    spec.visit_rate = 1.0 / 120.0;
    spec.background_rate = 1.0 / 150.0;
    spec.max_followup_days = 2000.0;
    generate(&spec).unwrap()
}

#[test]
fn labels_match_brute_force_scan() {
    let cohort = small_cohort(20, 3);
    let code = cohort.ontology.vocab().lookup("TGT0").unwrap();
    let task = make_task_labels(&cohort.timelines, &targets(code.0), MIN_HISTORY_DAYS, 11, &LabelPolicy::default());
    let mut expected = Vec::new();
    for (i, tl) in cohort.timelines.iter().enumerate() {
        let first_time = tl.events[0].time;
        let last_time = tl.events[tl.events.len() - 1].time;
        let mut ends = Vec::new();
        for v in tl.visits() {
            if v.end - first_time >= 365.0 && v.end < last_time {
                ends.push(v.end);
            }
        }
        if ends.is_empty() {
            continue;
        }
        let pick = ends[rng::substream(11, tl.patient_id.0).random_range(0..ends.len())];
        let mut occurrence = None;
        for e in &tl.events {
            if e.code == code {
                occurrence = Some(e.time);
                break;
            }
        }
        if let Some(o) = occurrence {
            if o <= pick {
                continue;
            }
        }
        let mut index = 0;
        for (j, e) in tl.events.iter().enumerate() {
            if e.time <= pick {
                index = j;
            }
        }
        let (t, d) = match occurrence {
            Some(o) => (o - pick, true),
            None => (last_time - pick, false),
        };
        expected.push((i, pick, index, t, d));
    }
    let got: Vec<_> = task.samples.iter().map(|s| (s.patient, s.prediction_time, s.prediction_index, s.time, s.event)).collect();
    assert_eq!(got, expected);
    assert!(!got.is_empty());
}

#[test]
fn probe_matches_stratified_exponential_mle() {
    // One-hot states over three groups with a single piece: the probe must
    // reproduce events / exposure in each group.
    let mut rng = seeded(4);
    let groups = 3;
    let rates = [0.01, 0.03, 0.1];
    let mut samples = Vec::new();
    let mut states = Vec::new();
    let mut tally = [[0.0f64; 2]; 3];
    for i in 0..600 {
        let g = i % groups;
        let t = rng::exponential(&mut rng, rates[g]);
        let c = rng::exponential(&mut rng, 0.02);
        let (time, event) = if t <= c { (t, true) } else { (c, false) };
        tally[g][0] += event as u8 as f64;
        tally[g][1] += time;
        samples.push(TaskSample { patient: 0, patient_id: PatientId(0), prediction_time: 0.0, prediction_index: 0, time, event });
        states.extend((0..groups).map(|k| if k == g { 1.0 } else { 0.0 }));
    }
    let batch = task_batch(&samples, &PieceGrid::single());
    let fit = fit_probe(&states, groups, &batch, &ProbeConfig { l2: 1e-12, ..Default::default() }).unwrap();
    for g in 0..groups {
        let mle = tally[g][0] / tally[g][1];
        let got = libm::exp(fit.beta[g] + fit.bias);
        assert!((got / mle - 1.0).abs() < 1e-6, "group {g}: {got} vs {mle}");
    }
}

#[test]
fn passthrough_head_exposes_representation_and_piece() {
    let head = passthrough_for_tests(2, 3);
    let states = head.states(&[0.5, -1.0]);
    assert_eq!(states, vec![0.5, -1.0, 1.0, 0.0, 0.0, 0.5, -1.0, 0.0, 1.0, 0.0, 0.5, -1.0, 0.0, 0.0, 1.0]);
}

struct Fixture {
    cohort: Cohort,
    model: TteModel,
    task: TargetTask,
}

fn fixture() -> Fixture {
    let cohort = small_cohort(80, 5);
    let config = EncoderConfig {
        vocab_size: 64,
        inner_dim: 8,
        layers: 1,
        heads: 2,
        attention_window: 8,
        max_sequence: 64,
        dropout: 0.0,
        ffn_multiplier: 2,
        rotary_base: 10_000.0,
    };
    let v = cohort.ontology.vocab();
    let ts = TaskSet { tasks: ["TGT0", "TGT1", "RISK0", "BG000"].iter().map(|c| v.lookup(c).unwrap()).collect(), excluded: BTreeSet::new() };
    let head = HeadConfig { num_pieces: 2, survival_dim: 4, task_block: 4 };
    let tc = TrainConfig { max_epochs: 1, batch_size: 8, learning_rate: 3e-3, warmup_steps: 2, ..Default::default() };
    let (train_set, val) = cohort.timelines.split_at(60);
    let (model, _) = pretrain_tte(train_set, val, &ts, &config, &head, &tc, &LabelPolicy::default(), &Sequential).unwrap();
    let code = v.lookup("TGT7").unwrap();
    let task = make_task_labels(&cohort.timelines, &targets(code.0), MIN_HISTORY_DAYS, 1, &LabelPolicy::default());
    Fixture { cohort, model, task }
}

#[test]
fn probe_freezes_backbone_and_finetune_nests_it() {
    let f = fixture();
    let before = f.model.clone();
    let samples = &f.task.samples;
    assert!(samples.iter().filter(|s| s.event).count() >= 2, "fixture needs events");
    let half = samples.len() / 2;
    let (train_s, val_s) = samples.split_at(half);
    let (probe, fit) = linear_probe(Pretrained::Tte(&f.model), &f.cohort.timelines, train_s, &ProbeConfig::default(), &Sequential).unwrap();
    assert_eq!(f.model, before);
    assert_eq!(probe.backbone.encoder, before.params.encoder);
    assert_eq!(probe.head.projection, before.params.head.projection);
    assert_eq!(probe.head.projection_bias, before.params.head.projection_bias);
    assert_eq!(probe.head.task_embeddings, fit.beta);
    assert!(fit.iterations < 100);

    let preds = probe.predict(&f.cohort.timelines, val_s, &Sequential).unwrap();
    assert!(preds.iter().all(|p| p.survival(100.0) > 0.0 && p.survival(100.0) < 1.0));

    let zero = TrainConfig { max_epochs: 0, ..Default::default() };
    let (same, _) = finetune(&probe, &f.cohort.timelines, train_s, val_s, &zero, &Sequential).unwrap();
    assert_eq!(same.predict(&f.cohort.timelines, val_s, &Sequential).unwrap(), preds);

    let tc = TrainConfig { max_epochs: 2, learning_rate: 1e-3, batch_size: 8, warmup_steps: 1, ..Default::default() };
    let (tuned, _) = finetune(&probe, &f.cohort.timelines, train_s, val_s, &tc, &Sequential).unwrap();
    let probe_nll = task_loss(&probe, &f.cohort.timelines, val_s, &Sequential).unwrap();
    let tuned_nll = task_loss(&tuned, &f.cohort.timelines, val_s, &Sequential).unwrap();
    assert!(tuned_nll <= probe_nll + 1e-6, "{tuned_nll} vs {probe_nll}");

    let scratch_cfg = ScratchConfig { head: HeadConfig { num_pieces: 2, survival_dim: 4, task_block: 4 } };
    let (s1, _) = train_scratch(&f.model.config, &scratch_cfg, &f.cohort.timelines, train_s, val_s, &tc, &Sequential).unwrap();
    let (s2, _) = train_scratch(&f.model.config, &scratch_cfg, &f.cohort.timelines, train_s, val_s, &tc, &Sequential).unwrap();
    assert_eq!(s1, s2);
    assert!(task_loss(&s1, &f.cohort.timelines, val_s, &Sequential).unwrap().is_finite());
}

#[test]
fn probe_on_next_code_backbone() {
    let cohort = small_cohort(40, 6);
    let config = EncoderConfig { vocab_size: 64, inner_dim: 8, layers: 1, heads: 2, attention_window: 8, max_sequence: 64, ..Default::default() };
    let dictionary: Vec<CodeId> = (0..10).map(CodeId).collect();
    let tc = TrainConfig { max_epochs: 1, ..Default::default() };
    let (model, _) = pretrain_next_code(&cohort.timelines[..30], &cohort.timelines[30..], &dictionary, &config, &tc, &Sequential).unwrap();
    let code = cohort.ontology.vocab().lookup("TGT0").unwrap();
    let task = make_task_labels(&cohort.timelines, &targets(code.0), MIN_HISTORY_DAYS, 2, &LabelPolicy::default());
    let (probe, _) = linear_probe(Pretrained::NextCode(&model), &cohort.timelines, &task.samples, &ProbeConfig { num_pieces: 2, ..Default::default() }, &Sequential).unwrap();
    assert_eq!(probe.head.survival_dim, 8 + probe.grid.len());
    assert_eq!(probe.backbone.encoder, model.params.encoder);
}

#[test]
fn selected_probe_minimizes_validation_loss_over_grid() {
    let f = fixture();
    let samples = &f.task.samples;
    let (train_s, val_s) = samples.split_at(samples.len() / 2);
    let grid = [0.01, 1.0, 100.0];
    let (chosen, _, l2) =
        linear_probe_selected(Pretrained::Tte(&f.model), &f.cohort.timelines, train_s, val_s, &ProbeConfig::default(), &grid, &Sequential).unwrap();
    assert!(grid.contains(&l2));
    let chosen_nll = task_loss(&chosen, &f.cohort.timelines, val_s, &Sequential).unwrap();
    for &l in &grid {
        let cfg = ProbeConfig { l2: l, ..ProbeConfig::default() };
        let (m, _) = linear_probe(Pretrained::Tte(&f.model), &f.cohort.timelines, train_s, &cfg, &Sequential).unwrap();
        if l == l2 {
            assert_eq!(m, chosen);
        }
        assert!(chosen_nll <= task_loss(&m, &f.cohort.timelines, val_s, &Sequential).unwrap() + 1e-12);
    }
}
