//! Line-oriented text formats: JSONL events, JSONL ontology, task lists and
//! task definitions.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tte_core::ontology::{Ontology, TaskSet};
use tte_core::timeline::{group_records, CodeId, EventKind, EventRecord, EventTimeline, PatientId, Vocabulary};

use crate::error::{PipelineError, Result};

fn data_err(path: &str, line: usize, msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(format!("{path}:{line}: {msg}"))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(PipelineError::io(path))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(PipelineError::io(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(PipelineError::io(path))
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(PipelineError::io(path))
}

/// Patient ids may be JSON numbers or strings holding an unsigned integer.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
enum RawId {
    Number(u64),
    Text(String),
}

#[derive(Debug, Deserialize)]
struct RawEvent {
    patient_id: RawId,
    time: f64,
    code: String,
    #[serde(default)]
    kind: Option<String>,
    #[serde(default)]
    birth_time: Option<f64>,
}

#[derive(Debug, Serialize)]
struct OutEvent<'a> {
    patient_id: u64,
    time: f64,
    code: &'a str,
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    birth_time: Option<f64>,
}

/// Reads one JSON object per line:
/// `{"patient_id": 7, "time": 12.5, "code": "X", "kind": "diagnosis", "birth_time": 0}`.
/// `kind` and `birth_time` are optional; blank lines are skipped. `resolve`
/// maps a code name to its id, or `None` to reject it. Errors carry
/// `name:line`.
pub fn read_events<R, F>(reader: R, name: &str, mut resolve: F) -> Result<Vec<EventTimeline>>
where
    R: BufRead,
    F: FnMut(&str) -> Option<CodeId>,
{
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| data_err(name, n, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEvent = serde_json::from_str(&line).map_err(|e| data_err(name, n, e))?;
        let patient_id = match raw.patient_id {
            RawId::Number(v) => v,
            RawId::Text(s) => s.trim().parse().map_err(|_| data_err(name, n, format!("patient_id `{s}` is not an unsigned integer")))?,
        };
        if !raw.time.is_finite() {
            return Err(data_err(name, n, "time must be finite"));
        }
        if raw.birth_time.is_some_and(|b| !b.is_finite()) {
            return Err(data_err(name, n, "birth_time must be finite"));
        }
        let code = resolve(&raw.code).ok_or_else(|| data_err(name, n, format!("unknown code `{}`", raw.code)))?;
        records.push(EventRecord {
            patient_id: PatientId(patient_id),
            time: raw.time,
            code,
            kind: raw.kind.as_deref().map_or(EventKind::Other, EventKind::parse),
            birth_time: raw.birth_time,
        });
    }
    group_records(records).map_err(|e| PipelineError::Data(format!("{name}: {e}")))
}

/// Reads events against `ontology`. Codes missing from it are added as
/// roots when `add_unknown` is set and rejected otherwise.
pub fn read_events_file(path: &Path, ontology: &mut Ontology, add_unknown: bool) -> Result<Vec<EventTimeline>> {
    read_events(open(path)?, &path.display().to_string(), |code| match ontology.vocab().get(code) {
        Some(id) => Some(id),
        None if add_unknown => Some(ontology.ensure_code(code)),
        None => None,
    })
}

/// Writes every event of every timeline, one per line, with the birth time
/// on each patient's first line.
pub fn write_events<W: Write>(mut w: W, timelines: &[EventTimeline], vocab: &Vocabulary) -> std::io::Result<()> {
    for tl in timelines {
        for (i, e) in tl.events.iter().enumerate() {
            let out = OutEvent {
                patient_id: tl.patient_id.0,
                time: e.time,
                code: vocab.name(e.code),
                kind: e.kind.as_str(),
                birth_time: (i == 0).then_some(tl.birth_time),
            };
            serde_json::to_writer(&mut w, &out)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()
}

pub fn write_events_file(path: &Path, timelines: &[EventTimeline], vocab: &Vocabulary) -> Result<()> {
    write_events(create(path)?, timelines, vocab).map_err(PipelineError::io(path))
}

#[derive(Debug, Serialize, Deserialize)]
struct OntologyLine {
    code: String,
    #[serde(default)]
    parents: Vec<String>,
}

/// One `{"code": "X", "parents": ["P"]}` per line. Parents must appear as
/// codes somewhere in the file.
pub fn read_ontology<R: BufRead>(reader: R, name: &str) -> Result<Ontology> {
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| data_err(name, n, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: OntologyLine = serde_json::from_str(&line).map_err(|e| data_err(name, n, e))?;
        entries.push((e.code, e.parents));
    }
    Ontology::from_entries(&entries).map_err(|e| PipelineError::Data(format!("{name}: {e}")))
}

pub fn read_ontology_file(path: &Path) -> Result<Ontology> {
    read_ontology(open(path)?, &path.display().to_string())
}

pub fn write_ontology<W: Write>(mut w: W, ontology: &Ontology) -> std::io::Result<()> {
    let vocab = ontology.vocab();
    for (id, name) in vocab.iter() {
        let line = OntologyLine {
            code: name.to_string(),
            parents: ontology.parents(id).iter().map(|&p| vocab.name(p).to_string()).collect(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_ontology_file(path: &Path, ontology: &Ontology) -> Result<()> {
    write_ontology(create(path)?, ontology).map_err(PipelineError::io(path))
}

/// Task list: one code per line in task order. `#` starts a comment line.
pub fn write_task_list(path: &Path, tasks: &TaskSet, vocab: &Vocabulary) -> Result<()> {
    let mut text = String::new();
    for &c in &tasks.tasks {
        text.push_str(vocab.name(c));
        text.push('\n');
    }
    write_string(path, &text)
}

pub fn read_task_list(path: &Path, vocab: &Vocabulary) -> Result<Vec<CodeId>> {
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| data_err(&name, i + 1, e))?;
        let code = line.trim();
        if code.is_empty() || code.starts_with('#') {
            continue;
        }
        let id = vocab.get(code).ok_or_else(|| data_err(&name, i + 1, format!("unknown code `{code}`")))?;
        if out.contains(&id) {
            return Err(data_err(&name, i + 1, format!("duplicate task `{code}`")));
        }
        out.push(id);
    }
    if out.is_empty() {
        return Err(PipelineError::Data(format!("{name}: no tasks")));
    }
    Ok(out)
}

/// A target task for adaptation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDefinition {
    pub name: String,
    pub target_codes: Vec<String>,
    pub min_history_days: f64,
    pub seed: u64,
}

pub fn read_task_definition(path: &Path) -> Result<TaskDefinition> {
    let def: TaskDefinition = serde_json::from_reader(open(path)?).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    if def.target_codes.is_empty() {
        return Err(PipelineError::Data(format!("{}: target_codes is empty", path.display())));
    }
    Ok(def)
}

pub fn write_task_definition(path: &Path, def: &TaskDefinition) -> Result<()> {
    let mut text = serde_json::to_string_pretty(def).expect("task definition serializes");
    text.push('\n');
    write_string(path, &text)
}
