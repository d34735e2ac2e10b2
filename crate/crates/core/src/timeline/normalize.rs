use alloc::vec::Vec;

use super::{sort_events, EventKind, EventTimeline, Visit};

/// Offset applied to events stamped exactly at midnight: 23 hours 59 minutes.
pub const MIDNIGHT_SHIFT: f64 = 1439.0 / 1440.0;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NormalizationReport {
    pub clamped_to_birth: usize,
    pub midnight_shifted: usize,
    pub billing_moved: usize,
    /// Billing events with no enclosing visit; left in place.
    pub billing_unenclosed: usize,
    /// Billing events enclosed by more than one visit; the innermost was used.
    pub billing_ambiguous: usize,
}

impl NormalizationReport {
    pub fn merge(&mut self, other: &NormalizationReport) {
        self.clamped_to_birth += other.clamped_to_birth;
        self.midnight_shifted += other.midnight_shifted;
        self.billing_moved += other.billing_moved;
        self.billing_unenclosed += other.billing_unenclosed;
        self.billing_ambiguous += other.billing_ambiguous;
    }
}

fn is_midnight(t: f64) -> bool {
    t == libm::floor(t)
}

/// Timestamp clean-up, applied in this order:
///
/// 1. events before `birth_time` move to `birth_time`;
/// 2. events at exactly 00:00 move to 23:59 of the same day;
/// 3. billing events move to the end of their innermost enclosing visit
///    (shortest span, latest start on ties), unless they already sit at the
///    end of an enclosing visit.
///
/// The result is re-sorted. Applying it twice is the same as applying it once.
pub fn normalize(timeline: &EventTimeline) -> (EventTimeline, NormalizationReport) {
    let mut report = NormalizationReport::default();
    let mut events = timeline.events.clone();
    for e in events.iter_mut() {
        if e.time < timeline.birth_time {
            e.time = timeline.birth_time;
            report.clamped_to_birth += 1;
        }
        if is_midnight(e.time) {
            e.time += MIDNIGHT_SHIFT;
            report.midnight_shifted += 1;
        }
    }
    sort_events(&mut events);

    let staged = EventTimeline { patient_id: timeline.patient_id, birth_time: timeline.birth_time, events };
    let visits = staged.visits();
    let mut events = staged.events;
    for e in events.iter_mut().filter(|e| e.kind == EventKind::Billing) {
        let enclosing: Vec<&Visit> = visits.iter().filter(|v| v.contains(e.time)).collect();
        if enclosing.is_empty() {
            report.billing_unenclosed += 1;
            continue;
        }
        if enclosing.len() > 1 {
            report.billing_ambiguous += 1;
        }
        if enclosing.iter().any(|v| v.end == e.time) {
            continue;
        }
        let inner = enclosing
            .iter()
            .min_by(|a, b| (a.end - a.start).total_cmp(&(b.end - b.start)).then(b.start.total_cmp(&a.start)))
            .expect("non-empty");
        e.time = inner.end;
        report.billing_moved += 1;
    }
    sort_events(&mut events);
    (EventTimeline { patient_id: timeline.patient_id, birth_time: timeline.birth_time, events }, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::{CodeId, Event, PatientId};
    use alloc::vec;
    use proptest::prelude::*;

    fn ev(t: f64, kind: EventKind) -> Event {
        Event::new(t, CodeId(0), kind)
    }

    fn tl(birth: f64, events: Vec<Event>) -> EventTimeline {
        EventTimeline::new(PatientId(7), birth, events)
    }

    #[test]
    fn billing_moves_to_visit_end() {
        let t = tl(
            0.0,
            vec![ev(3.25, EventKind::VisitStart), ev(3.5, EventKind::Billing), ev(7.5, EventKind::VisitEnd)],
        );
        let (n, report) = normalize(&t);
        let billing = n.events.iter().find(|e| e.kind == EventKind::Billing).unwrap();
        assert_eq!(billing.time, 7.5);
        assert_eq!(report.billing_moved, 1);
    }

    #[test]
    fn billing_day_three_in_visit_three_to_seven() {
        // Day-level stamps: every event is shifted to 23:59 first, so the
        // billing event lands on the (shifted) end of day 7.
        let t = tl(0.0, vec![ev(3.0, EventKind::VisitStart), ev(3.0, EventKind::Billing), ev(7.0, EventKind::VisitEnd)]);
        let (n, _) = normalize(&t);
        let billing = n.events.iter().find(|e| e.kind == EventKind::Billing).unwrap();
        assert_eq!(billing.time, 7.0 + MIDNIGHT_SHIFT);
        assert_eq!(libm::floor(billing.time), 7.0);
    }

    #[test]
    fn midnight_moves_to_end_of_day() {
        let (n, report) = normalize(&tl(0.0, vec![ev(4.0, EventKind::Other)]));
        assert_eq!(n.events[0].time, 4.0 + MIDNIGHT_SHIFT);
        assert!((n.events[0].time - 4.0 - 1439.0 / 1440.0).abs() < 1e-12);
        assert_eq!(report.midnight_shifted, 1);
    }

    #[test]
    fn event_before_birth_moves_to_birth_day() {
        let (n, report) = normalize(&tl(0.0, vec![ev(-2.0, EventKind::Other), ev(5.5, EventKind::Other)]));
        assert_eq!(report.clamped_to_birth, 1);
        assert_eq!(libm::floor(n.events[0].time), 0.0);
        assert!(n.events[0].time >= n.birth_time);
    }

    #[test]
    fn unenclosed_billing_is_flagged_and_kept() {
        let (n, report) = normalize(&tl(0.0, vec![ev(2.5, EventKind::Billing), ev(3.5, EventKind::Other)]));
        assert_eq!(n.events[0].time, 2.5);
        assert_eq!(report.billing_unenclosed, 1);
    }

    #[test]
    fn overlapping_visits_use_innermost() {
        let t = tl(
            0.0,
            vec![
                ev(1.5, EventKind::VisitStart),
                ev(2.5, EventKind::VisitStart),
                ev(3.5, EventKind::Billing),
                ev(4.5, EventKind::VisitEnd),
                ev(9.5, EventKind::VisitEnd),
            ],
        );
        // FIFO pairing: [1.5, 4.5] and [2.5, 9.5]; the shorter one wins.
        let (n, report) = normalize(&t);
        let billing = n.events.iter().find(|e| e.kind == EventKind::Billing).unwrap();
        assert_eq!(billing.time, 4.5);
        assert_eq!(report.billing_ambiguous, 1);
    }

    fn arb_kind() -> impl Strategy<Value = EventKind> {
        prop_oneof![
            Just(EventKind::Diagnosis),
            Just(EventKind::Billing),
            Just(EventKind::VisitStart),
            Just(EventKind::VisitEnd),
            Just(EventKind::Other),
        ]
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(
            birth in 0i32..5,
            raw in proptest::collection::vec((-3i32..20, 0u8..4, arb_kind()), 1..25)
        ) {
            let events = raw
                .into_iter()
                .map(|(day, quarter, kind)| ev(day as f64 + quarter as f64 * 0.25, kind))
                .collect();
            let t = tl(birth as f64, events);
            let (once, _) = normalize(&t);
            let (twice, _) = normalize(&once);
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.is_sorted());
            prop_assert!(once.events.iter().all(|e| e.time >= once.birth_time));
        }
    }
}
