//! Ground-truth hazards of a synthetic cohort, one JSON object per patient:
//!
//! ```text
//! {"patient_id":0,"entry_time":14600,"censor_time":812.3,"piece_starts":[0,365,1095],
//!  "risk":[{"code":"RISK0","present":true}],
//!  "targets":[{"code":"TGT0","hazards":[0.0007,0.0008,0.0005],"event_time":null}]}
//! ```
//!
//! `censor_time` and `event_time` are days since entry before rounding to
//! whole days.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tte_core::head::PieceGrid;
use tte_core::synth::{GroundTruth, PatientTruth};
use tte_core::timeline::PatientId;

use crate::error::{PipelineError, Result};
use crate::io::{create, open};

#[derive(Debug, Serialize, Deserialize)]
struct Risk {
    code: String,
    present: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Target {
    code: String,
    hazards: Vec<f64>,
    event_time: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Line {
    patient_id: u64,
    entry_time: f64,
    censor_time: f64,
    piece_starts: Vec<f64>,
    risk: Vec<Risk>,
    targets: Vec<Target>,
}

pub fn write_ground_truth_file(path: &Path, truth: &GroundTruth) -> Result<()> {
    let mut w = create(path)?;
    let mut go = || -> std::io::Result<()> {
        for p in &truth.patients {
            let line = Line {
                patient_id: p.patient_id.0,
                entry_time: p.entry_time,
                censor_time: p.censor_time,
                piece_starts: truth.grid.starts().to_vec(),
                risk: truth.risk_codes.iter().zip(&p.risk_present).map(|(c, &present)| Risk { code: c.clone(), present }).collect(),
                targets: truth
                    .targets
                    .iter()
                    .enumerate()
                    .map(|(k, c)| Target { code: c.clone(), hazards: p.hazards[k].clone(), event_time: p.event_times[k] })
                    .collect(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    go().map_err(PipelineError::io(path))
}

pub fn read_ground_truth_file(path: &Path) -> Result<GroundTruth> {
    let name = path.display().to_string();
    let mut truth: Option<GroundTruth> = None;
    for (i, line) in open(path)?.lines().enumerate() {
        let bad = |m: String| PipelineError::Data(format!("{name}:{}: {m}", i + 1));
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let l: Line = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let t = match &mut truth {
            Some(t) => t,
            None => truth.insert(GroundTruth {
                grid: PieceGrid::new(l.piece_starts.clone()).map_err(|e| bad(e.to_string()))?,
                targets: l.targets.iter().map(|t| t.code.clone()).collect(),
                risk_codes: l.risk.iter().map(|r| r.code.clone()).collect(),
                patients: Vec::new(),
            }),
        };
        let same = l.piece_starts == t.grid.starts()
            && l.targets.iter().map(|x| &x.code).eq(t.targets.iter())
            && l.risk.iter().map(|x| &x.code).eq(t.risk_codes.iter());
        if !same || l.targets.iter().any(|x| x.hazards.len() != t.grid.len()) {
            return Err(bad("grid, targets or risk codes differ from the first line".into()));
        }
        t.patients.push(PatientTruth {
            patient_id: PatientId(l.patient_id),
            entry_time: l.entry_time,
            censor_time: l.censor_time,
            risk_present: l.risk.iter().map(|r| r.present).collect(),
            hazards: l.targets.iter().map(|x| x.hazards.clone()).collect(),
            event_times: l.targets.iter().map(|x| x.event_time).collect(),
        });
    }
    truth.ok_or_else(|| PipelineError::Data(format!("{name}: empty ground truth")))
}
