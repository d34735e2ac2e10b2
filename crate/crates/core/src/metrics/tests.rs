use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::*;
use crate::head::{PieceGrid, PiecewiseHazard, SurvivalCurve};
use crate::rng::{exponential, seeded, DetRng};

fn constant(rate: f64) -> PiecewiseHazard {
    PiecewiseHazard::new(PieceGrid::single(), vec![rate])
}

/// Curve with `S(t_eval) = p` exactly up to rounding.
fn survival_at(p: f64, t_eval: f64) -> PiecewiseHazard {
    constant(-libm::log(p) / t_eval)
}

fn naive_km(times: &[f64], events: &[bool], t: f64) -> f64 {
    let mut distinct: Vec<f64> = times.iter().zip(events).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut s = 1.0;
    for &u in distinct.iter().filter(|&&u| u <= t) {
        let d = times.iter().zip(events).filter(|(&x, &e)| x == u && e).count() as f64;
        let n = times.iter().filter(|&&x| x >= u).count() as f64;
        s *= 1.0 - d / n;
    }
    s
}

fn naive_censoring_km(times: &[f64], events: &[bool], t: f64) -> f64 {
    let mut distinct: Vec<f64> = times.iter().zip(events).filter(|(_, &e)| !e).map(|(&t, _)| t).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut g = 1.0;
    for &u in distinct.iter().filter(|&&u| u <= t) {
        let c = times.iter().zip(events).filter(|(&x, &e)| x == u && !e).count() as f64;
        let n = times.iter().zip(events).filter(|(&x, &e)| x > u || (x == u && !e)).count() as f64;
        g *= 1.0 - c / n;
    }
    g
}

fn brute_td_c<P: SurvivalCurve>(s: &EvalSample<P>, horizon: f64) -> Option<f64> {
    let n = s.len();
    let mut event_times: Vec<f64> = (0..n).filter(|&i| s.events[i]).map(|i| s.times[i]).collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let (mut num, mut den) = (0.0, 0.0);
    for &t in event_times.iter().filter(|&&t| t <= horizon) {
        let mut pairs = 0.0;
        let mut score = 0.0;
        for i in (0..n).filter(|&i| s.events[i] && s.times[i] == t) {
            for j in (0..n).filter(|&j| s.times[j] > t) {
                let (ri, rj) = (s.predictions[i].cumulative_hazard(t), s.predictions[j].cumulative_hazard(t));
                pairs += 1.0;
                if ri > rj {
                    score += 1.0;
                } else if ri == rj {
                    score += 0.5;
                }
            }
        }
        if pairs == 0.0 {
            continue;
        }
        let before = naive_km(&s.times, &s.events, t - 1e-9);
        let at = naive_km(&s.times, &s.events, t);
        let w = (before - at) * at;
        if w > 0.0 {
            num += score / pairs * w;
            den += w;
        }
    }
    (den > 0.0).then(|| num / den)
}

fn brute_harrell(times: &[f64], events: &[bool], risk: &[f64]) -> Option<f64> {
    let (mut c, mut t, mut all) = (0.0, 0.0, 0.0);
    for i in 0..times.len() {
        for j in 0..times.len() {
            if events[i] && times[i] < times[j] {
                all += 1.0;
                if risk[i] > risk[j] {
                    c += 1.0;
                } else if risk[i] == risk[j] {
                    t += 1.0;
                }
            }
        }
    }
    (all > 0.0).then(|| (c + 0.5 * t) / all)
}

fn brute_nd<P: SurvivalCurve>(s: &EvalSample<P>, bins: usize, t_eval: f64) -> f64 {
    let n = s.len();
    let p: Vec<f64> = s.predictions.iter().map(|c| c.survival(t_eval)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap().then(a.cmp(&b)));
    let mut total = 0.0;
    for m in 0..bins {
        let members: Vec<usize> = order[m * n / bins..(m + 1) * n / bins].to_vec();
        let times: Vec<f64> = members.iter().map(|&i| s.times[i]).collect();
        let events: Vec<bool> = members.iter().map(|&i| s.events[i]).collect();
        let km = naive_km(&times, &events, t_eval);
        let mean: f64 = members.iter().map(|&i| p[i]).sum::<f64>() / members.len() as f64;
        total += (km - mean) * (km - mean) / (mean * (1.0 - mean)).max(ND_VARIANCE_FLOOR);
    }
    total
}

fn brute_ibs<P: SurvivalCurve>(s: &EvalSample<P>, lo: f64, hi: f64) -> f64 {
    let n = s.len();
    let grid: Vec<f64> = (0..=IBS_TRAPEZOIDS).map(|k| if k == IBS_TRAPEZOIDS { hi } else { lo + (hi - lo) * k as f64 / IBS_TRAPEZOIDS as f64 }).collect();
    let bs: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let (mut sum, mut cnt) = (0.0, 0.0);
            for i in 0..n {
                let p = s.predictions[i].survival(t);
                if s.times[i] <= t && s.events[i] {
                    let g = naive_censoring_km(&s.times, &s.events, s.times[i]);
                    if g > 0.0 {
                        sum += p * p / g;
                        cnt += 1.0;
                    }
                } else if s.times[i] > t {
                    let g = naive_censoring_km(&s.times, &s.events, t);
                    if g > 0.0 {
                        sum += (1.0 - p) * (1.0 - p) / g;
                        cnt += 1.0;
                    }
                } else {
                    cnt += 1.0;
                }
            }
            sum / cnt
        })
        .collect();
    let mut area = 0.0;
    for k in 0..IBS_TRAPEZOIDS {
        area += 0.5 * (bs[k] + bs[k + 1]) * (grid[k + 1] - grid[k]);
    }
    area / (hi - lo)
}

fn random_sample(rng: &mut DetRng, n: usize) -> EvalSample<PiecewiseHazard> {
    let grid = PieceGrid::new(vec![0.0, 3.0]).unwrap();
    let times: Vec<f64> = (0..n).map(|_| rng.random_range(1..=8) as f64).collect();
    let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    let preds = (0..n)
        .map(|_| {
            // Coarse rates so that equal scores occur.
            let a = rng.random_range(1..=4) as f64 * 0.1;
            let b = rng.random_range(1..=4) as f64 * 0.1;
            PiecewiseHazard::new(grid.clone(), vec![a, b])
        })
        .collect();
    EvalSample::new(times, events, preds).unwrap()
}

#[test]
fn quantile_matches_linear_convention() {
    let v = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(quantile_sorted(&v, 0.0), 1.0);
    assert_eq!(quantile_sorted(&v, 1.0), 4.0);
    assert!((quantile_sorted(&v, 0.9) - 3.7).abs() < 1e-12);
    assert_eq!(quantile_sorted(&[5.0], 0.3), 5.0);
}

#[test]
fn sample_rejects_bad_input() {
    assert!(EvalSample::new(vec![1.0], vec![true, false], vec![constant(1.0)]).is_err());
    assert!(EvalSample::new(vec![0.0], vec![true], vec![constant(1.0)]).is_err());
}

#[test]
fn km_matches_naive_product_limit() {
    let mut rng = seeded(1);
    for _ in 0..100 {
        let n = rng.random_range(1..=15);
        let s = random_sample(&mut rng, n);
        let km = kaplan_meier(&s.times, &s.events);
        let g = censoring_kaplan_meier(&s.times, &s.events);
        for k in 0..20 {
            let t = k as f64 * 0.5;
            assert!((km.at(t) - naive_km(&s.times, &s.events, t)).abs() < 1e-12);
            assert!((g.at(t) - naive_censoring_km(&s.times, &s.events, t)).abs() < 1e-12);
        }
    }
}

#[test]
fn td_c_matches_brute_force() {
    let mut rng = seeded(2);
    let mut checked = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=15);
        let s = random_sample(&mut rng, n);
        let horizon = rng.random_range(2..=9) as f64;
        match (td_c_statistic(&s, Some(horizon)), brute_td_c(&s, horizon)) {
            (Ok(a), Some(b)) => {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
                checked += 1;
            }
            (Err(Error::Undefined(_)), None) => {}
            (a, b) => panic!("disagreement: {a:?} vs {b:?}"),
        }
    }
    assert!(checked > 50);
}

#[test]
fn td_c_twelve_subjects_with_ties_and_censoring() {
    let times = vec![1.0, 2.0, 2.0, 2.0, 3.0, 4.0, 4.0, 5.0, 6.0, 6.0, 7.0, 8.0];
    let events = vec![true, true, true, false, false, true, true, true, false, true, true, false];
    let rates = [0.9, 0.5, 0.7, 0.7, 0.1, 0.6, 0.2, 0.3, 0.3, 0.4, 0.05, 0.2];
    let s = EvalSample::new(times, events, rates.iter().map(|&r| constant(r)).collect()).unwrap();
    let a = td_c_statistic(&s, Some(8.0)).unwrap();
    let b = brute_td_c(&s, 8.0).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn td_c_extremes() {
    let times: Vec<f64> = (1..=10).map(|t| t as f64).collect();
    let events = vec![true; 10];
    // Earlier events get larger hazards.
    let perfect = EvalSample::new(times.clone(), events.clone(), (1..=10).map(|k| constant(1.0 / k as f64)).collect()).unwrap();
    assert_eq!(td_c_statistic(&perfect, Some(10.0)).unwrap(), 1.0);
    let flat = EvalSample::new(times, events, vec![constant(0.3); 10]).unwrap();
    assert_eq!(td_c_statistic(&flat, Some(10.0)).unwrap(), 0.5);
}

#[test]
fn td_c_undefined_without_weight() {
    let s = EvalSample::new(vec![1.0, 2.0], vec![false, false], vec![constant(1.0); 2]).unwrap();
    assert!(matches!(td_c_statistic(&s, Some(5.0)), Err(Error::Undefined(_))));
    assert!(matches!(td_c_statistic(&s, None), Err(Error::Undefined(_))));
}

#[test]
fn td_c_ignores_events_after_horizon() {
    let mut rng = seeded(3);
    for _ in 0..50 {
        let s = random_sample(&mut rng, 15);
        let horizon = 4.0;
        let Ok(base) = td_c_statistic(&s, Some(horizon)) else { continue };
        let mut edited = s.clone();
        for i in 0..edited.len() {
            if edited.times[i] > horizon {
                edited.times[i] = horizon + rng.random_range(1..=5) as f64;
                edited.events[i] = rng.random_bool(0.5);
                edited.predictions[i] = constant(rng.random_range(1..=9) as f64 * 0.1);
            }
        }
        // Scores of later subjects still enter as controls, so keep them fixed.
        let mut controls_fixed = edited.clone();
        controls_fixed.predictions = s.predictions.clone();
        assert_eq!(td_c_statistic(&controls_fixed, Some(horizon)).unwrap(), base);
    }
}

#[test]
fn concordance_is_rank_invariant() {
    let mut rng = seeded(4);
    for _ in 0..50 {
        let s = random_sample(&mut rng, 12);
        let risk: Vec<f64> = (0..12).map(|_| rng.random_range(0..5) as f64).collect();
        let squashed: Vec<f64> = risk.iter().map(|r| libm::atan(r * 3.0) + 7.0).collect();
        assert_eq!(harrell_c(&s.times, &s.events, &risk).ok(), harrell_c(&s.times, &s.events, &squashed).ok());
        // Scaling every hazard preserves the ordering of cumulative hazards.
        let mut scaled = s.clone();
        for p in &mut scaled.predictions {
            for h in &mut p.hazards {
                *h *= 4.0;
            }
        }
        assert_eq!(td_c_statistic(&s, Some(9.0)).ok(), td_c_statistic(&scaled, Some(9.0)).ok());
    }
}

#[test]
fn harrell_matches_brute_force() {
    let mut rng = seeded(5);
    for _ in 0..100 {
        let n = rng.random_range(2..=15);
        let s = random_sample(&mut rng, n);
        let risk: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
        match (harrell_c(&s.times, &s.events, &risk), brute_harrell(&s.times, &s.events, &risk)) {
            (Ok(a), Some(b)) => assert!((a - b).abs() < 1e-12),
            (Err(Error::Undefined(_)), None) => {}
            (a, b) => panic!("disagreement: {a:?} vs {b:?}"),
        }
    }
}

#[test]
fn harrell_extremes() {
    let times = [1.0, 2.0, 3.0];
    let events = [true, true, false];
    // Comparable pairs: (0,1), (0,2), (1,2).
    assert_eq!(harrell_c(&times, &events, &[1.0, 1.0, 1.0]).unwrap(), 0.5);
    assert_eq!(harrell_c(&times, &events, &[3.0, 2.0, 1.0]).unwrap(), 1.0);
    assert_eq!(harrell_c(&times, &events, &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    // Two comparable pairs, all tied.
    assert_eq!(harrell_c(&[1.0, 2.0, 2.0], &[true, false, false], &[0.0; 3]).unwrap(), 0.5);
    assert!(harrell_c(&[1.0, 1.0], &[true, true], &[0.0, 1.0]).is_err());
}

#[test]
fn harrell_uses_average_hazard() {
    let s = EvalSample::new(vec![1.0, 2.0], vec![true, true], vec![constant(2.0), constant(1.0)]).unwrap();
    assert_eq!(harrell_c_average_hazard(&s, Some(1.0)).unwrap(), 1.0);
}

#[test]
fn nd_four_bin_hand_case() {
    let t = 2.5;
    let times = vec![1.0, 3.0, 2.0, 2.0, 4.0, 5.0, 1.0, 6.0];
    let events = vec![true, false, true, true, false, true, false, true];
    let ps = [0.2, 0.4, 0.5, 0.5, 0.6, 0.8, 0.9, 0.9];
    let s = EvalSample::new(times, events, ps.iter().map(|&p| survival_at(p, t)).collect()).unwrap();
    let nd = nd_calibration(&s, 4, Some(t)).unwrap();
    // Bins: KM {0.5, 0, 1, 1} against means {0.3, 0.5, 0.7, 0.9}.
    assert!((nd.statistic - 109.0 / 63.0).abs() < 1e-10, "{}", nd.statistic);
    assert_eq!(nd.floored_bins, 0);
}

#[test]
fn nd_matches_brute_force() {
    let mut rng = seeded(6);
    for _ in 0..100 {
        let n = rng.random_range(4..=15);
        let s = random_sample(&mut rng, n);
        let bins = rng.random_range(1..=4);
        let t_eval = rng.random_range(1..=6) as f64 + 0.5;
        let a = nd_calibration(&s, bins, Some(t_eval)).unwrap().statistic;
        let b = brute_nd(&s, bins, t_eval);
        assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn nd_zero_when_predictions_equal_bin_km() {
    // Two bins; each bin's KM at t=1.5 is 0.5, and every prediction is 0.5.
    let s = EvalSample::new(vec![1.0, 2.0, 1.0, 3.0], vec![true, true, true, false], vec![survival_at(0.5, 1.5); 4]).unwrap();
    let nd = nd_calibration(&s, 2, Some(1.5)).unwrap();
    assert!(nd.statistic < 1e-20);
}

#[test]
fn nd_flags_degenerate_bins() {
    let s = EvalSample::new(vec![1.0, 2.0], vec![true, true], vec![constant(0.0); 2]).unwrap();
    let nd = nd_calibration(&s, 1, Some(1.5)).unwrap();
    assert_eq!(nd.floored_bins, 1);
    assert!(nd_calibration(&s, 3, None).is_err());
}

#[test]
fn nd_consistent_for_constant_half() {
    let mut rng = seeded(7);
    let rate = core::f64::consts::LN_2;
    let mut last = f64::INFINITY;
    for &n in &[1_000usize, 100_000] {
        let times: Vec<f64> = (0..n).map(|_| exponential(&mut rng, rate)).collect();
        let s = EvalSample::new(times, vec![true; n], vec![survival_at(0.5, 1.0); n]).unwrap();
        let nd = nd_calibration(&s, 4, Some(1.0)).unwrap().statistic;
        assert!(nd < last.max(0.05));
        last = nd;
    }
    assert!(last < 0.005);
}

#[test]
fn ibs_matches_brute_force() {
    let mut rng = seeded(8);
    let mut checked = 0;
    for _ in 0..100 {
        let n = rng.random_range(3..=15);
        let s = random_sample(&mut rng, n);
        let ev = s.event_times();
        if ev.len() < 2 || ev[0] == ev[ev.len() - 1] {
            continue;
        }
        let a = integrated_brier_score(&s, None).unwrap();
        let b = brute_ibs(&s, a.lower, a.upper);
        assert!((a.value - b).abs() < 1e-10, "{} vs {b}", a.value);
        checked += 1;
    }
    assert!(checked > 50);
}

#[test]
fn brier_is_one_for_confident_wrong_predictions() {
    let s = EvalSample::new(vec![2.0; 5], vec![true; 5], vec![constant(0.0); 5]).unwrap();
    let g = censoring_kaplan_meier(&s.times, &s.events);
    assert_eq!(brier_score(&s, &g, 3.0).unwrap(), (1.0, 0));
    let ibs = integrated_brier_score(&s, Some((2.0, 4.0))).unwrap();
    assert_eq!(ibs.value, 1.0);
}

#[test]
fn ibs_drops_subjects_when_censoring_curve_is_zero() {
    // The last time has one event and one censoring, so G falls to zero there
    // and the case cannot be weighted.
    let s = EvalSample::new(vec![0.5, 1.0, 1.0], vec![true, true, false], vec![constant(0.5); 3]).unwrap();
    let g = censoring_kaplan_meier(&s.times, &s.events);
    assert_eq!(g.at(1.0), 0.0);
    let (score, dropped) = brier_score(&s, &g, 1.5).unwrap();
    assert_eq!(dropped, 1);
    let p = libm::exp(-0.75);
    assert!((score - (p * p + 0.0) / 2.0).abs() < 1e-15);
    let ibs = integrated_brier_score(&s, Some((1.0, 2.0))).unwrap();
    assert_eq!(ibs.dropped, IBS_TRAPEZOIDS + 1);
}

#[test]
fn ibs_matches_closed_form_for_exponential() {
    let mut rng = seeded(9);
    let n = 20_000;
    let times: Vec<f64> = (0..n).map(|_| exponential(&mut rng, 1.0)).collect();
    let s = EvalSample::new(times, vec![true; n], vec![constant(1.0); n]).unwrap();
    let (lo, hi) = (0.1, 2.0);
    let ibs = integrated_brier_score(&s, Some((lo, hi))).unwrap();
    // E[(1{T>t} - S(t))²] = S(1 - S) with S = e^{-t}.
    let primitive = |t: f64| -libm::exp(-t) + 0.5 * libm::exp(-2.0 * t);
    let expected = (primitive(hi) - primitive(lo)) / (hi - lo);
    assert!((ibs.value - expected).abs() < 0.005, "{} vs {expected}", ibs.value);
}

#[test]
fn bootstrap_identical_models_give_zero() {
    let mut rng = seeded(10);
    let s = random_sample(&mut rng, 15);
    let r = paired_bootstrap(&s, &s, |x| td_c_statistic(x, Some(9.0)), 200, 1).unwrap();
    assert_eq!((r.delta, r.lower, r.upper), (0.0, 0.0, 0.0));
}

#[test]
fn bootstrap_sign_flip_mirrors_interval() {
    let mut rng = seeded(11);
    let a = random_sample(&mut rng, 15);
    let mut b = a.clone();
    for p in &mut b.predictions {
        p.hazards.reverse();
    }
    let metric = |x: &EvalSample<PiecewiseHazard>| {
        let risk: Vec<f64> = x.predictions.iter().map(|p| p.average_hazard(5.0)).collect();
        harrell_c(&x.times, &x.events, &risk)
    };
    let ab = paired_bootstrap(&a, &b, metric, 300, 5).unwrap();
    let ba = paired_bootstrap(&b, &a, metric, 300, 5).unwrap();
    assert_eq!(ab.delta, -ba.delta);
    assert!((ab.lower + ba.upper).abs() < 1e-12);
    assert!((ab.upper + ba.lower).abs() < 1e-12);
    assert!(ab.lower <= ab.upper);
}

#[test]
fn bootstrap_is_reproducible_and_redraws() {
    let s = EvalSample::new(
        vec![1.0, 2.0, 3.0, 4.0, 5.0],
        vec![true, false, true, false, true],
        (1..=5).map(|k| constant(k as f64 * 0.1)).collect(),
    )
    .unwrap();
    let mut t = s.clone();
    t.predictions.reverse();
    let metric = |x: &EvalSample<PiecewiseHazard>| td_c_statistic(x, Some(5.0));
    let a = paired_bootstrap(&s, &t, metric, 1000, 42).unwrap();
    let b = paired_bootstrap(&s, &t, metric, 1000, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lower.to_bits(), b.lower.to_bits());
    assert!(a.redrawn > 0);
}

#[test]
fn bootstrap_requires_paired_subjects() {
    let s = EvalSample::new(vec![1.0], vec![true], vec![constant(1.0)]).unwrap();
    let t = EvalSample::new(vec![2.0], vec![true], vec![constant(1.0)]).unwrap();
    assert!(paired_bootstrap(&s, &t, |x| td_c_statistic(x, None), 10, 0).is_err());
}
