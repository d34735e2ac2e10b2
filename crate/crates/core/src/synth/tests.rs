extern crate std;

use alloc::vec;
use alloc::vec::Vec;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::*;
use crate::rng::seeded;

fn quiet(n: usize, seed: u64) -> GeneratorSpec {
    let mut s = GeneratorSpec::toy(n, seed);
    s.visit_rate = 0.0;
    s.background_rate = 0.0;
    s
}

#[test]
fn toy_spec_is_valid() {
    let spec = GeneratorSpec::toy(10, 1);
    spec.validate().unwrap();
    let ont = spec.ontology().unwrap();
    assert!(ont.vocab().get("TGT7").is_some());
}

#[test]
fn validation_rejects_bad_specs() {
    let mut s = GeneratorSpec::toy(1, 1);
    s.targets[0].base_hazards[1] = 0.0;
    assert!(s.validate().is_err());
    let mut s = GeneratorSpec::toy(1, 1);
    s.risk_rules[0].multiplier = -1.0;
    assert!(s.validate().is_err());
    let mut s = GeneratorSpec::toy(1, 1);
    s.risk_rules[0].target_code = "NOPE".into();
    assert!(matches!(s.validate(), Err(Error::UnknownCode(_))));
    let mut s = GeneratorSpec::toy(1, 1);
    s.targets[0].base_hazards.pop();
    assert!(s.validate().is_err());
}

#[test]
fn true_survival_closed_form() {
    let truth = GroundTruth {
        grid: PieceGrid::single(),
        targets: vec!["T".into()],
        risk_codes: vec![],
        patients: vec![PatientTruth {
            patient_id: PatientId(0),
            entry_time: 0.0,
            censor_time: 1.0,
            risk_present: vec![],
            hazards: vec![vec![0.1]],
            event_times: vec![None],
        }],
    };
    assert_eq!(true_survival(&truth, 0, 0, 0.0), 1.0);
    assert!((true_survival(&truth, 0, 0, 10.0) - libm::exp(-1.0)).abs() < 1e-15);
}

#[test]
fn true_survival_is_monotone_and_continuous() {
    let grid = PieceGrid::new(vec![0.0, 10.0, 30.0]).unwrap();
    let c = TruthCurve { grid, hazards: vec![0.05, 0.2, 0.01], offset: 0.0 };
    let mut last = 1.0;
    for k in 0..400 {
        let t = k as f64 * 0.1;
        let s = c.survival(t);
        assert!(s <= last);
        assert!(last - s < 0.03);
        last = s;
    }
    // Large hazards drive survival towards zero.
    let mut prev = 1.0;
    for lam in [1.0, 10.0, 100.0] {
        let s = TruthCurve { grid: PieceGrid::single(), hazards: vec![lam], offset: 0.0 }.survival(1.0);
        assert!(s < prev);
        prev = s;
    }
    assert!(prev < 1e-40);
}

#[test]
fn conditional_curve_matches_ratio() {
    let grid = PieceGrid::new(vec![0.0, 10.0]).unwrap();
    let base = TruthCurve { grid: grid.clone(), hazards: vec![0.05, 0.2], offset: 0.0 };
    let from = TruthCurve { grid, hazards: vec![0.05, 0.2], offset: 7.0 };
    for t in [0.5, 3.0, 20.0] {
        let ratio = base.survival(7.0 + t) / base.survival(7.0);
        assert!((from.survival(t) - ratio).abs() < 1e-12);
    }
}

#[test]
fn exponential_mean() {
    let mut rng = seeded(11);
    let lam = 0.01;
    let n = 100_000;
    let mean: f64 = (0..n).map(|_| sample_piecewise_exponential(&mut rng, &PieceGrid::single(), &[lam])).sum::<f64>() / n as f64;
    assert!((mean * lam - 1.0).abs() < 0.02, "{mean}");
}

#[test]
fn two_piece_ks() {
    let mut rng = seeded(12);
    let grid = PieceGrid::new(vec![0.0, 10.0]).unwrap();
    let (l1, l2) = (0.05, 0.2);
    let n = 100_000;
    let mut draws: Vec<f64> = (0..n).map(|_| sample_piecewise_exponential(&mut rng, &grid, &[l1, l2])).collect();
    draws.sort_by(f64::total_cmp);
    let cdf = |t: f64| 1.0 - libm::exp(-(l1 * t.min(10.0) + l2 * (t - 10.0).max(0.0)));
    let mut d: f64 = 0.0;
    for (i, &t) in draws.iter().enumerate() {
        let f = cdf(t);
        d = d.max((f - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - f).abs());
    }
    // 1% critical value of the Kolmogorov distribution.
    assert!(d < 1.628 / libm::sqrt(n as f64), "{d}");
}

#[test]
fn constant_hazard_chi_square() {
    let mut rng = seeded(13);
    let lam = 0.02;
    let n = 10_000;
    let bins = 20;
    let mut counts = vec![0usize; bins];
    for _ in 0..n {
        let t = sample_piecewise_exponential(&mut rng, &PieceGrid::single(), &[lam]);
        let u = 1.0 - libm::exp(-lam * t);
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = n as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat);
    assert!(p > 0.01, "chi2 {stat}, p {p}");
}

#[test]
fn risk_multiplier_gives_hazard_ratio() {
    let mut spec = quiet(100_000, 14);
    spec.piece_starts = vec![0.0];
    spec.targets = vec![TargetCode { code: "TGT0".into(), base_hazards: vec![0.002] }];
    spec.risk_codes = vec![RiskCode { code: "RISK0".into(), prevalence: 0.5 }];
    spec.risk_rules = vec![RiskRule { risk_code: "RISK0".into(), target_code: "TGT0".into(), multiplier: 2.0 }];
    spec.censor_hazard = 0.001;
    let cohort = generate(&spec).unwrap();
    let mut tally = [[0.0f64; 2]; 2];
    for p in &cohort.truth.patients {
        let g = p.risk_present[0] as usize;
        let (t, e) = match p.event_times[0] {
            Some(t) => (t, 1.0),
            None => (p.censor_time, 0.0),
        };
        tally[g][0] += e;
        tally[g][1] += t;
    }
    let ratio = (tally[1][0] / tally[1][1]) / (tally[0][0] / tally[0][1]);
    assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
}

#[test]
fn cohort_is_well_formed_and_reproducible() {
    let spec = GeneratorSpec::toy(200, 15);
    let a = generate(&spec).unwrap();
    let b = generate(&spec).unwrap();
    assert_eq!(a, b);
    let v = a.ontology.vocab();
    for (i, tl) in a.timelines.iter().enumerate() {
        assert!(!tl.is_empty() && tl.is_sorted());
        assert!(tl.events.iter().all(|e| e.time >= tl.birth_time && e.time == libm::floor(e.time)));
        let truth = &a.truth.patients[i];
        assert_eq!(tl.start_time(), truth.entry_time);
        assert!(tl.end_time() <= truth.entry_time + libm::floor(truth.censor_time));
        for (k, code) in a.truth.targets.iter().enumerate() {
            let id = v.lookup(code).unwrap();
            let n = tl.events.iter().filter(|e| e.code == id).count();
            assert_eq!(n, truth.event_times[k].is_some() as usize);
        }
        for (r, code) in a.truth.risk_codes.iter().enumerate() {
            let id = v.lookup(code).unwrap();
            assert_eq!(tl.events.iter().any(|e| e.code == id), truth.risk_present[r]);
        }
    }
    let c = generate(&GeneratorSpec::toy(200, 16)).unwrap();
    assert_ne!(a.timelines, c.timelines);
    // A patient's stream does not depend on the cohort size.
    let small = generate(&GeneratorSpec::toy(20, 15)).unwrap();
    assert_eq!(small.timelines[..], a.timelines[..20]);
}

#[test]
fn hazards_follow_rules() {
    let spec = GeneratorSpec::toy(300, 17);
    let cohort = generate(&spec).unwrap();
    let k7 = cohort.truth.target_index("TGT7").unwrap();
    for p in &cohort.truth.patients {
        let m = if p.risk_present[0] { 4.0 } else { 1.0 } * if p.risk_present[1] { 4.0 } else { 1.0 };
        for (h, b) in p.hazards[k7].iter().zip(&spec.targets[7].base_hazards) {
            assert!((h - b * m).abs() < 1e-18);
        }
    }
}
