use std::collections::BTreeSet;
use std::io::Cursor;

use tte::checkpoint::{self, Model};
use tte::{batch, io};
use tte_core::encoder::{EncoderConfig, TokenMap};
use tte_core::head::{PieceGrid, SparseEntry, SurvivalBatch};
use tte_core::objectives::{init_tte_params, HeadConfig, TteModel};
use tte_core::ontology::{Ontology, TaskSet};
use tte_core::timeline::{CodeId, Event, EventKind, EventTimeline, PatientId};

fn ontology() -> Ontology {
    Ontology::from_entries(&[("A", vec![]), ("B", vec!["A"]), ("C", vec!["A"]), ("D", vec![])]).unwrap()
}

#[test]
fn events_round_trip() {
    let ont = ontology();
    let v = ont.vocab();
    let code = |n: &str| v.get(n).unwrap();
    let timelines = vec![
        EventTimeline::new(
            PatientId(4),
            -120.0,
            vec![Event::new(3.0, code("B"), EventKind::Diagnosis), Event::new(10.5, code("D"), EventKind::Other)],
        ),
        EventTimeline::new(PatientId(9), 0.0, vec![Event::new(1.0, code("C"), EventKind::Other)]),
    ];
    let mut buf = Vec::new();
    io::write_events(&mut buf, &timelines, v).unwrap();
    let back = io::read_events(Cursor::new(buf), "mem", |n| v.get(n)).unwrap();
    assert_eq!(back, timelines);
}

#[test]
fn string_patient_ids_and_blank_lines() {
    let ont = ontology();
    let text = "{\"patient_id\": \"12\", \"time\": 5, \"code\": \"A\"}\n\n{\"patient_id\": 12, \"time\": 2, \"code\": \"D\"}\n";
    let tl = io::read_events(Cursor::new(text), "mem", |n| ont.vocab().get(n)).unwrap();
    assert_eq!(tl.len(), 1);
    assert_eq!(tl[0].patient_id, PatientId(12));
    assert_eq!(tl[0].events.iter().map(|e| e.time).collect::<Vec<_>>(), vec![2.0, 5.0]);
}

#[test]
fn missing_field_names_the_line() {
    let ont = ontology();
    let text = "{\"patient_id\": 1, \"time\": 5}\n";
    let err = io::read_events(Cursor::new(text), "events.jsonl", |n| ont.vocab().get(n)).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let msg = err.to_string();
    assert!(msg.contains("events.jsonl:1:") && msg.contains("code"), "{msg}");
}

#[test]
fn unknown_codes_are_rejected_or_added() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.jsonl");
    std::fs::write(&path, "{\"patient_id\": 1, \"time\": 1, \"code\": \"A\"}\n{\"patient_id\": 1, \"time\": 2, \"code\": \"ZZ\"}\n").unwrap();
    let mut ont = ontology();
    let err = io::read_events_file(&path, &mut ont, false).unwrap_err();
    assert!(err.to_string().contains(":2: unknown code `ZZ`"), "{err}");
    let tl = io::read_events_file(&path, &mut ont, true).unwrap();
    let zz = ont.vocab().get("ZZ").unwrap();
    assert!(ont.parents(zz).is_empty());
    assert_eq!(tl[0].events[1].code, zz);
}

#[test]
fn ontology_round_trip() {
    let ont = ontology();
    let mut buf = Vec::new();
    io::write_ontology(&mut buf, &ont).unwrap();
    let back = io::read_ontology(Cursor::new(buf), "mem").unwrap();
    assert_eq!(back.vocab().len(), 4);
    for (id, name) in ont.vocab().iter() {
        let other = back.vocab().get(name).unwrap();
        let p: Vec<&str> = ont.parents(id).iter().map(|&c| ont.vocab().name(c)).collect();
        let q: Vec<&str> = back.parents(other).iter().map(|&c| back.vocab().name(c)).collect();
        assert_eq!(p, q);
    }
}

#[test]
fn task_list_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ont = ontology();
    let v = ont.vocab();
    let tasks = TaskSet { tasks: vec![v.get("C").unwrap(), v.get("A").unwrap()], excluded: BTreeSet::new() };
    let path = dir.path().join("t/tasks.txt");
    io::write_task_list(&path, &tasks, v).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "C\nA\n");
    assert_eq!(io::read_task_list(&path, v).unwrap(), tasks.tasks);

    std::fs::write(&path, "# header\nC\n\nC\n").unwrap();
    assert!(io::read_task_list(&path, v).unwrap_err().to_string().contains(":4: duplicate"));
    std::fs::write(&path, "Q\n").unwrap();
    assert_eq!(io::read_task_list(&path, v).unwrap_err().exit_code(), 3);
    std::fs::write(&path, "# nothing\n").unwrap();
    assert!(io::read_task_list(&path, v).is_err());
}

#[test]
fn task_definition_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let def = io::TaskDefinition { name: "x".into(), target_codes: vec!["B".into()], min_history_days: 30.0, seed: 7 };
    let path = dir.path().join("task.json");
    io::write_task_definition(&path, &def).unwrap();
    assert_eq!(io::read_task_definition(&path).unwrap(), def);
    std::fs::write(&path, r#"{"name":"x","target_codes":["B"],"min_history_days":1,"seed":0,"extra":1}"#).unwrap();
    assert!(io::read_task_definition(&path).is_err());
}

fn small_model(ont: &Ontology) -> TteModel {
    let config = EncoderConfig { vocab_size: 6, inner_dim: 8, layers: 1, heads: 2, attention_window: 4, max_sequence: 16, ..EncoderConfig::default() };
    let head = HeadConfig { num_pieces: 2, survival_dim: 3, task_block: 4 };
    let codes: Vec<CodeId> = ont.vocab().iter().map(|(id, _)| id).collect();
    TteModel {
        tokens: TokenMap::from_codes(codes.clone()),
        grid: PieceGrid::new(vec![0.0, 30.0]).unwrap(),
        tasks: TaskSet { tasks: codes[..3].to_vec(), excluded: [codes[3]].into_iter().collect() },
        params: init_tte_params(&config, &head, 3, Some(&[0.1, 0.2, 0.3]), 5),
        config,
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ont = ontology();
    let model = small_model(&ont);
    let path = dir.path().join("m.ckpt");
    checkpoint::save_tte(&path, &model, ont.vocab(), None).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], checkpoint::MAGIC);

    let mut loaded_ont = ontology();
    let ck = checkpoint::load(&path, &mut loaded_ont).unwrap();
    let Model::Tte(back) = ck.model else { panic!("wrong kind") };
    assert_eq!(back, model);

    let again = dir.path().join("again.ckpt");
    checkpoint::save_tte(&again, &back, loaded_ont.vocab(), None).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), bytes);
}

#[test]
fn corrupt_checkpoints_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ont = ontology();
    let path = dir.path().join("m.ckpt");
    checkpoint::save_tte(&path, &small_model(&ont), ont.vocab(), None).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    for bad in [&bytes[..bytes.len() - 8], &bytes[..20], b"NOTACKPT".as_slice()] {
        let p = dir.path().join("bad.ckpt");
        std::fs::write(&p, bad).unwrap();
        assert_eq!(checkpoint::load(&p, &mut ontology()).unwrap_err().exit_code(), 3);
    }
}

#[test]
fn survival_batch_round_trip() {
    let b = SurvivalBatch {
        num_events: 2,
        num_tasks: 3,
        num_pieces: 2,
        default_exposure: vec![30.0, 12.5, 30.0, 0.0],
        event_entries: vec![
            SparseEntry { event: 0, task: 1, piece: 0, time: 4.25 },
            SparseEntry { event: 1, task: 2, piece: 0, time: 0.5 },
        ],
        censor_overrides: vec![SparseEntry { event: 0, task: 1, piece: 1, time: 0.0 }],
        skipped: 1,
    };
    let bytes = batch::encode(&b);
    assert_eq!(&bytes[..8], batch::MAGIC);
    assert_eq!(bytes.len(), 8 + 6 * 8 + 4 * 8 + 3 * 24);
    assert_eq!(batch::decode(&bytes).unwrap(), b);
    assert!(batch::decode(&bytes[..bytes.len() - 1]).is_err());
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    assert!(batch::decode(&wrong).is_err());
}
