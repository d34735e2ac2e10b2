//! Synthetic cohorts with known piecewise-constant hazards.
//!
//! Each patient enters follow-up at a random adult age. Time since entry
//! drives the target hazards; risk codes present at entry multiply them.
//! All emitted times are whole days.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::head::{PieceGrid, SurvivalCurve};
use crate::ontology::Ontology;
use crate::rng::{exponential, open01, poisson, substream, DetRng};
use crate::timeline::{CodeId, Event, EventKind, EventTimeline, PatientId};

pub const VISIT_START: &str = "VISIT_START";
pub const VISIT_END: &str = "VISIT_END";

#[derive(Debug, Clone, PartialEq)]
pub struct RiskCode {
    pub code: String,
    pub prevalence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetCode {
    pub code: String,
    /// Events/day in each piece of [`GeneratorSpec::piece_starts`].
    pub base_hazards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskRule {
    pub risk_code: String,
    pub target_code: String,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub n_patients: usize,
    pub seed: u64,
    /// Starts of the hazard pieces, in days since entry.
    pub piece_starts: Vec<f64>,
    pub targets: Vec<TargetCode>,
    pub risk_codes: Vec<RiskCode>,
    pub risk_rules: Vec<RiskRule>,
    pub censor_hazard: f64,
    pub max_followup_days: f64,
    pub background_codes: usize,
    pub background_groups: usize,
    /// Rate of stand-alone background events, per day.
    pub background_rate: f64,
    pub visit_rate: f64,
    pub codes_per_visit: f64,
    /// Probability that a present risk code is recorded again at a visit.
    pub rerecord_probability: f64,
    pub min_entry_age_days: f64,
    pub max_entry_age_days: f64,
}

impl GeneratorSpec {
    /// A small cohort with four risk codes and eight targets. Each risk code
    /// raises two targets four-fold; `TGT7` shares its risk codes with
    /// `TGT0` and `TGT1`, which makes it a natural held-out task.
    pub fn toy(n_patients: usize, seed: u64) -> Self {
        let mut rules = Vec::new();
        let pairs = [(0, 0), (0, 7), (1, 1), (1, 7), (2, 2), (2, 3), (3, 4), (3, 5)];
        for (r, k) in pairs {
            rules.push(RiskRule { risk_code: format!("RISK{r}"), target_code: format!("TGT{k}"), multiplier: 4.0 });
        }
        GeneratorSpec {
            n_patients,
            seed,
            piece_starts: vec![0.0, 365.0, 1095.0],
            targets: (0..8)
                .map(|k| {
                    let base = 1.0 / (1500.0 + 250.0 * k as f64);
                    TargetCode { code: format!("TGT{k}"), base_hazards: vec![base, base * 1.25, base * 0.8] }
                })
                .collect(),
            risk_codes: (0..4).map(|r| RiskCode { code: format!("RISK{r}"), prevalence: 0.3 }).collect(),
            risk_rules: rules,
            censor_hazard: 1.0 / 2000.0,
            max_followup_days: 3650.0,
            background_codes: 60,
            background_groups: 6,
            background_rate: 1.0 / 40.0,
            visit_rate: 1.0 / 45.0,
            codes_per_visit: 2.0,
            rerecord_probability: 0.6,
            min_entry_age_days: 30.0 * 365.0,
            max_entry_age_days: 70.0 * 365.0,
        }
    }

    pub fn grid(&self) -> Result<PieceGrid> {
        PieceGrid::new(self.piece_starts.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let positive = |x: f64| x > 0.0 && x.is_finite();
        for t in &self.targets {
            if t.base_hazards.len() != grid.len() || !t.base_hazards.iter().all(|&h| positive(h)) {
                return Err(Error::InvalidArgument(format!("target {}: need {} positive hazards", t.code, grid.len())));
            }
        }
        for r in &self.risk_codes {
            if !(0.0..=1.0).contains(&r.prevalence) {
                return Err(Error::InvalidArgument(format!("risk code {}: prevalence outside [0, 1]", r.code)));
            }
        }
        for rule in &self.risk_rules {
            if !positive(rule.multiplier) {
                return Err(Error::InvalidArgument(format!("rule {} -> {}: multiplier must be positive", rule.risk_code, rule.target_code)));
            }
            if !self.risk_codes.iter().any(|r| r.code == rule.risk_code) || !self.targets.iter().any(|t| t.code == rule.target_code) {
                return Err(Error::UnknownCode(format!("{} -> {}", rule.risk_code, rule.target_code)));
            }
        }
        if !positive(self.censor_hazard) || !positive(self.max_followup_days) {
            return Err(Error::invalid("censor hazard and follow-up must be positive"));
        }
        if self.background_groups == 0 && self.background_codes > 0 {
            return Err(Error::invalid("background codes need at least one group"));
        }
        if [self.background_rate, self.visit_rate, self.codes_per_visit, self.rerecord_probability].iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::invalid("rates and probabilities must be non-negative"));
        }
        if !(self.min_entry_age_days >= 0.0 && self.max_entry_age_days >= self.min_entry_age_days) {
            return Err(Error::invalid("bad entry age range"));
        }
        Ok(())
    }

    /// The toy ontology: background codes under group codes, risk codes
    /// under `RISK`, targets under `TGT`, billing codes under `BILL`, and the
    /// two visit markers as roots. Group codes are never emitted.
    pub fn ontology(&self) -> Result<Ontology> {
        let mut entries: Vec<(String, Vec<String>)> = Vec::new();
        entries.push((VISIT_START.into(), vec![]));
        entries.push((VISIT_END.into(), vec![]));
        for g in 0..self.background_groups {
            entries.push((format!("BG_GROUP{g}"), vec![]));
        }
        for c in 0..self.background_codes {
            entries.push((background_name(c), vec![format!("BG_GROUP{}", c % self.background_groups.max(1))]));
        }
        entries.push(("RISK".into(), vec![]));
        for r in &self.risk_codes {
            entries.push((r.code.clone(), vec!["RISK".into()]));
        }
        entries.push(("TGT".into(), vec![]));
        for t in &self.targets {
            entries.push((t.code.clone(), vec!["TGT".into()]));
        }
        entries.push(("BILL".into(), vec![]));
        for b in 0..BILLING_CODES {
            entries.push((format!("BILL{b}"), vec!["BILL".into()]));
        }
        Ontology::from_entries(&entries)
    }
}

const BILLING_CODES: usize = 4;

fn background_name(c: usize) -> String {
    format!("BG{c:03}")
}

/// The true hazards of one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientTruth {
    pub patient_id: PatientId,
    /// Absolute day at which follow-up (and the hazard clock) starts.
    pub entry_time: f64,
    /// Sampled censoring time, in days since entry, before rounding.
    pub censor_time: f64,
    pub risk_present: Vec<bool>,
    /// `hazards[k][p]`: events/day for target `k` in piece `p`.
    pub hazards: Vec<Vec<f64>>,
    /// First occurrence of each target in days since entry, before rounding,
    /// when it falls inside follow-up.
    pub event_times: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub grid: PieceGrid,
    pub targets: Vec<String>,
    pub risk_codes: Vec<String>,
    pub patients: Vec<PatientTruth>,
}

impl GroundTruth {
    pub fn target_index(&self, code: &str) -> Option<usize> {
        self.targets.iter().position(|t| t == code)
    }

    /// Survival curve of `task` for patient index `patient`, measured from
    /// entry.
    pub fn curve(&self, patient: usize, task: usize) -> TruthCurve {
        TruthCurve { grid: self.grid.clone(), hazards: self.patients[patient].hazards[task].clone(), offset: 0.0 }
    }

    /// Survival curve conditioned on being event-free at `at` (an absolute
    /// day), measured from `at`.
    pub fn curve_from(&self, patient: usize, task: usize, at: f64) -> TruthCurve {
        let mut c = self.curve(patient, task);
        c.offset = (at - self.patients[patient].entry_time).max(0.0);
        c
    }
}

/// `S(t) = Π_p exp(-λ_p · overlap([0, t], piece p))` for the patient's true
/// hazards.
pub fn true_survival(truth: &GroundTruth, patient: usize, task: usize, t: f64) -> f64 {
    truth.curve(patient, task).survival(t)
}

/// A piecewise-constant hazard read from `offset` onwards.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthCurve {
    pub grid: PieceGrid,
    pub hazards: Vec<f64>,
    pub offset: f64,
}

impl TruthCurve {
    fn absolute(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.hazards.iter().enumerate().map(|(p, &h)| h * self.grid.exposure(p, t)).sum()
    }
}

impl SurvivalCurve for TruthCurve {
    fn survival(&self, t: f64) -> f64 {
        libm::exp(-self.cumulative_hazard(t))
    }

    fn cumulative_hazard(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.absolute(self.offset + t) - self.absolute(self.offset)
    }
}

/// Draws from the piecewise-exponential law by inverting the cumulative
/// hazard at an Exp(1) variate.
pub fn sample_piecewise_exponential(rng: &mut DetRng, grid: &PieceGrid, hazards: &[f64]) -> f64 {
    let mut target = exponential(rng, 1.0);
    for p in 0..grid.len() {
        let width = grid.end(p) - grid.start(p);
        let mass = hazards[p] * width;
        if target < mass || !width.is_finite() {
            return grid.start(p) + target / hazards[p];
        }
        target -= mass;
    }
    f64::INFINITY
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub ontology: Ontology,
    pub timelines: Vec<EventTimeline>,
    pub truth: GroundTruth,
}

struct Codes {
    visit_start: CodeId,
    visit_end: CodeId,
    background: Vec<CodeId>,
    risk: Vec<CodeId>,
    targets: Vec<CodeId>,
    billing: Vec<CodeId>,
}

/// Generates the cohort. Patient `i` gets id `i` and its own random stream,
/// so any single patient can be regenerated on its own.
pub fn generate(spec: &GeneratorSpec) -> Result<Cohort> {
    spec.validate()?;
    let ontology = spec.ontology()?;
    let grid = spec.grid()?;
    let v = ontology.vocab();
    let codes = Codes {
        visit_start: v.lookup(VISIT_START)?,
        visit_end: v.lookup(VISIT_END)?,
        background: (0..spec.background_codes).map(|c| v.lookup(&background_name(c))).collect::<Result<_>>()?,
        risk: spec.risk_codes.iter().map(|r| v.lookup(&r.code)).collect::<Result<_>>()?,
        targets: spec.targets.iter().map(|t| v.lookup(&t.code)).collect::<Result<_>>()?,
        billing: (0..BILLING_CODES).map(|b| v.lookup(&format!("BILL{b}"))).collect::<Result<_>>()?,
    };
    // multipliers[r][k]
    let mut multipliers = vec![vec![1.0; spec.targets.len()]; spec.risk_codes.len()];
    for rule in &spec.risk_rules {
        let r = spec.risk_codes.iter().position(|x| x.code == rule.risk_code).unwrap_or(0);
        let k = spec.targets.iter().position(|x| x.code == rule.target_code).unwrap_or(0);
        multipliers[r][k] *= rule.multiplier;
    }
    let mut timelines = Vec::with_capacity(spec.n_patients);
    let mut patients = Vec::with_capacity(spec.n_patients);
    for i in 0..spec.n_patients {
        let mut rng = substream(spec.seed, i as u64);
        let (timeline, truth) = generate_patient(spec, &grid, &codes, &multipliers, i as u64, &mut rng);
        timelines.push(timeline);
        patients.push(truth);
    }
    let truth = GroundTruth {
        grid,
        targets: spec.targets.iter().map(|t| t.code.clone()).collect(),
        risk_codes: spec.risk_codes.iter().map(|r| r.code.clone()).collect(),
        patients,
    };
    Ok(Cohort { ontology, timelines, truth })
}

fn generate_patient(
    spec: &GeneratorSpec,
    grid: &PieceGrid,
    codes: &Codes,
    multipliers: &[Vec<f64>],
    id: u64,
    rng: &mut DetRng,
) -> (EventTimeline, PatientTruth) {
    let birth = libm::floor(rng.random::<f64>() * 20_000.0);
    let age = libm::floor(spec.min_entry_age_days + rng.random::<f64>() * (spec.max_entry_age_days - spec.min_entry_age_days));
    let entry = birth + age;
    let risk_present: Vec<bool> = spec.risk_codes.iter().map(|r| rng.random::<f64>() < r.prevalence).collect();
    let hazards: Vec<Vec<f64>> = spec
        .targets
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let m: f64 = risk_present.iter().enumerate().filter(|(_, &p)| p).map(|(r, _)| multipliers[r][k]).product();
            t.base_hazards.iter().map(|h| h * m).collect()
        })
        .collect();
    let censor = exponential(rng, spec.censor_hazard).min(spec.max_followup_days);
    let event_times: Vec<Option<f64>> = hazards
        .iter()
        .map(|h| {
            let t = sample_piecewise_exponential(rng, grid, h);
            (t < censor).then_some(t)
        })
        .collect();

    let day = |t: f64| entry + libm::floor(t);
    let mut events = Vec::new();
    // Entry visit records every present risk code.
    let entry_end = day(open01(rng).min(censor));
    events.push(Event::new(entry, codes.visit_start, EventKind::VisitStart));
    for (r, _) in risk_present.iter().enumerate().filter(|(_, &p)| p) {
        events.push(Event::new(entry, codes.risk[r], EventKind::Diagnosis));
    }
    events.push(Event::new(entry, codes.billing[rng.random_range(0..BILLING_CODES)], EventKind::Billing));
    events.push(Event::new(entry_end, codes.visit_end, EventKind::VisitEnd));

    let n_visits = poisson(rng, spec.visit_rate * censor);
    for _ in 0..n_visits {
        let start = rng.random::<f64>() * censor;
        let length = rng.random_range(0..3) as f64;
        let (s, e) = (day(start), day((start + length).min(censor)));
        events.push(Event::new(s, codes.visit_start, EventKind::VisitStart));
        for _ in 0..poisson(rng, spec.codes_per_visit) {
            if let Some(c) = pick_background(rng, &codes.background) {
                events.push(Event::new(s, c, EventKind::Diagnosis));
            }
        }
        for (r, _) in risk_present.iter().enumerate().filter(|(_, &p)| p) {
            if rng.random::<f64>() < spec.rerecord_probability {
                events.push(Event::new(s, codes.risk[r], EventKind::Diagnosis));
            }
        }
        events.push(Event::new(s, codes.billing[rng.random_range(0..BILLING_CODES)], EventKind::Billing));
        events.push(Event::new(e, codes.visit_end, EventKind::VisitEnd));
    }
    for _ in 0..poisson(rng, spec.background_rate * censor) {
        let t = rng.random::<f64>() * censor;
        if let Some(c) = pick_background(rng, &codes.background) {
            events.push(Event::new(day(t), c, EventKind::Other));
        }
    }
    for (k, t) in event_times.iter().enumerate() {
        if let Some(t) = t {
            events.push(Event::new(day(*t), codes.targets[k], EventKind::Diagnosis));
        }
    }
    let timeline = EventTimeline::new(PatientId(id), birth, events);
    let truth = PatientTruth { patient_id: PatientId(id), entry_time: entry, censor_time: censor, risk_present, hazards, event_times };
    (timeline, truth)
}

/// Skewed choice so that background codes span a range of frequencies.
fn pick_background(rng: &mut DetRng, codes: &[CodeId]) -> Option<CodeId> {
    if codes.is_empty() {
        return None;
    }
    let u: f64 = rng.random();
    Some(codes[((u * u) * codes.len() as f64) as usize % codes.len()])
}

#[cfg(test)]
mod tests;
