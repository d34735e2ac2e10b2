//! Code hierarchy and entropy-based selection of pretraining tasks.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::timeline::{CodeId, EventTimeline, Vocabulary};

/// A vocabulary of codes with parent links forming a DAG.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ontology {
    vocab: Vocabulary,
    parents: Vec<Vec<CodeId>>,
    children: Vec<Vec<CodeId>>,
}

impl Ontology {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an ontology from `(code, parents)` entries. Every parent must
    /// itself appear as an entry, and the links must be acyclic.
    pub fn from_entries<S: AsRef<str>>(entries: &[(S, Vec<S>)]) -> Result<Self> {
        let mut ont = Ontology::new();
        for (code, _) in entries {
            ont.ensure_code(code.as_ref());
        }
        for (code, parents) in entries {
            let child = ont.vocab.lookup(code.as_ref())?;
            for p in parents {
                let parent = ont.vocab.lookup(p.as_ref())?;
                ont.link(child, parent);
            }
        }
        ont.check_acyclic()?;
        Ok(ont)
    }

    /// Interns `code` as a root if it is not yet known.
    pub fn ensure_code(&mut self, code: &str) -> CodeId {
        let id = self.vocab.intern(code);
        if self.parents.len() < self.vocab.len() {
            self.parents.resize(self.vocab.len(), Vec::new());
            self.children.resize(self.vocab.len(), Vec::new());
        }
        id
    }

    pub fn add_parent(&mut self, child: &str, parent: &str) -> Result<()> {
        let c = self.vocab.lookup(child)?;
        let p = self.vocab.lookup(parent)?;
        self.link(c, p);
        self.check_acyclic()
    }

    fn link(&mut self, child: CodeId, parent: CodeId) {
        if !self.parents[child.index()].contains(&parent) {
            self.parents[child.index()].push(parent);
            self.children[parent.index()].push(child);
        }
    }

    fn check_acyclic(&self) -> Result<()> {
        let n = self.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = queue.pop_front() {
            seen += 1;
            for c in &self.children[i] {
                indegree[c.index()] -= 1;
                if indegree[c.index()] == 0 {
                    queue.push_back(c.index());
                }
            }
        }
        if seen == n {
            Ok(())
        } else {
            let culprit = (0..n).find(|&i| indegree[i] > 0).expect("cycle member");
            Err(Error::CyclicOntology(String::from(self.vocab.name(CodeId(culprit as u32)))))
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_mut(&mut self) -> &mut Vocabulary {
        &mut self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn parents(&self, code: CodeId) -> &[CodeId] {
        self.parents.get(code.index()).map_or(&[], Vec::as_slice)
    }

    pub fn children(&self, code: CodeId) -> &[CodeId] {
        self.children.get(code.index()).map_or(&[], Vec::as_slice)
    }

    pub fn ancestors(&self, code: CodeId) -> BTreeSet<CodeId> {
        self.closure(code, |c| self.parents(c))
    }

    pub fn descendants(&self, code: CodeId) -> BTreeSet<CodeId> {
        self.closure(code, |c| self.children(c))
    }

    fn closure<'a>(&'a self, code: CodeId, next: impl Fn(CodeId) -> &'a [CodeId]) -> BTreeSet<CodeId> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<CodeId> = next(code).to_vec();
        while let Some(c) = stack.pop() {
            if out.insert(c) {
                stack.extend_from_slice(next(c));
            }
        }
        out
    }
}

/// Per-code patient counts used by the entropy ranking.
///
/// A patient "has" a code when the code or any of its descendants appears in
/// the timeline, so presence of a child always implies presence of its
/// parents. `O` for a code is presence of any of its parents; a root has
/// `O = true` for everyone.
#[derive(Debug, Clone, PartialEq)]
pub struct PresenceStats {
    pub n_patients: usize,
    pub code_present: Vec<usize>,
    pub parent_present: Vec<usize>,
    pub both_present: Vec<usize>,
}

impl PresenceStats {
    pub fn from_timelines(ontology: &Ontology, timelines: &[EventTimeline]) -> Self {
        let n = ontology.len();
        let mut stats = PresenceStats {
            n_patients: timelines.len(),
            code_present: vec![0; n],
            parent_present: vec![0; n],
            both_present: vec![0; n],
        };
        let mut present = vec![false; n];
        for tl in timelines {
            present.iter_mut().for_each(|p| *p = false);
            let mut stack: Vec<CodeId> = Vec::new();
            for e in &tl.events {
                if e.code.index() < n && !present[e.code.index()] {
                    present[e.code.index()] = true;
                    stack.push(e.code);
                }
            }
            while let Some(c) = stack.pop() {
                for &p in ontology.parents(c) {
                    if !present[p.index()] {
                        present[p.index()] = true;
                        stack.push(p);
                    }
                }
            }
            for c in 0..n {
                let id = CodeId(c as u32);
                let parents = ontology.parents(id);
                let o = parents.is_empty() || parents.iter().any(|p| present[p.index()]);
                if o {
                    stats.parent_present[c] += 1;
                }
                if present[c] {
                    stats.code_present[c] += 1;
                    if o {
                        stats.both_present[c] += 1;
                    }
                }
            }
        }
        stats
    }

    /// H(C | O) in nats for `code`.
    pub fn conditional_entropy(&self, code: CodeId) -> f64 {
        if self.n_patients == 0 {
            return 0.0;
        }
        let n = self.n_patients as f64;
        let i = code.index();
        conditional_entropy(self.parent_present[i] as f64 / n, self.both_present[i] as f64 / n)
    }
}

fn xlogy_ratio(joint: f64, marginal: f64) -> f64 {
    if joint <= 0.0 {
        0.0
    } else {
        -joint * libm::log(joint / marginal)
    }
}

/// Two-term conditional entropy of a code given its parents, using
/// p(O=F, C=T) = 0:
///
/// `H = -p(O=T,C=F) ln(p(O=T,C=F)/p(O=T)) - p(O=T,C=T) ln(p(O=T,C=T)/p(O=T))`
///
/// with 0 ln 0 = 0. Returns 0 when p(O=T) is 0.
pub fn conditional_entropy(p_parent: f64, p_parent_and_code: f64) -> f64 {
    if p_parent <= 0.0 {
        return 0.0;
    }
    let p_parent_not_code = (p_parent - p_parent_and_code).max(0.0);
    xlogy_ratio(p_parent_not_code, p_parent) + xlogy_ratio(p_parent_and_code, p_parent)
}

/// The ordered list of pretraining target codes.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSet {
    pub tasks: Vec<CodeId>,
    pub excluded: BTreeSet<CodeId>,
}

impl TaskSet {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Position of `code` in the task list.
    pub fn position(&self, code: CodeId) -> Option<usize> {
        self.tasks.iter().position(|&c| c == code)
    }
}

/// The `k` non-excluded codes with highest conditional entropy, sorted by
/// descending entropy with ties broken by code name.
pub fn select_tasks(
    ontology: &Ontology,
    stats: &PresenceStats,
    k: usize,
    excluded: &BTreeSet<CodeId>,
) -> Result<TaskSet> {
    let mut candidates: Vec<(f64, CodeId)> = ontology
        .vocab()
        .iter()
        .map(|(id, _)| id)
        .filter(|id| !excluded.contains(id))
        .map(|id| (stats.conditional_entropy(id), id))
        .collect();
    if k > candidates.len() {
        return Err(Error::TooManyTasks { requested: k, available: candidates.len() });
    }
    let vocab = ontology.vocab();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| vocab.name(a.1).cmp(vocab.name(b.1))));
    Ok(TaskSet { tasks: candidates.into_iter().take(k).map(|(_, c)| c).collect(), excluded: excluded.clone() })
}

/// Seed codes plus all of their descendants.
pub fn expand_excluded<S: AsRef<str>>(ontology: &Ontology, seeds: &[S]) -> Result<BTreeSet<CodeId>> {
    let mut out = BTreeSet::new();
    for s in seeds {
        let id = ontology.vocab().lookup(s.as_ref())?;
        out.insert(id);
        out.extend(ontology.descendants(id));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::{Event, EventKind, PatientId};
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn chain() -> Ontology {
        Ontology::from_entries(&[("A", vec![]), ("B", vec!["A"]), ("C", vec!["B"])]).unwrap()
    }

    fn patient(ont: &Ontology, pid: u64, codes: &[&str]) -> EventTimeline {
        let events = codes
            .iter()
            .enumerate()
            .map(|(i, c)| Event::new(i as f64, ont.vocab().get(c).unwrap(), EventKind::Other))
            .collect();
        EventTimeline::new(PatientId(pid), 0.0, events)
    }

    /// Full four-term H(C|O) from raw joint counts.
    fn four_term_entropy(n: f64, joint: [[f64; 2]; 2]) -> f64 {
        let mut h = 0.0;
        for o in 0..2 {
            let p_o = (joint[o][0] + joint[o][1]) / n;
            for c in 0..2 {
                let p = joint[o][c] / n;
                if p > 0.0 {
                    h -= p * libm::log(p / p_o);
                }
            }
        }
        h
    }

    fn joint_counts(ont: &Ontology, tls: &[EventTimeline], code: CodeId) -> [[f64; 2]; 2] {
        let mut joint = [[0.0; 2]; 2];
        for tl in tls {
            let mut has = BTreeSet::new();
            for e in &tl.events {
                has.insert(e.code);
                has.extend(ont.ancestors(e.code));
            }
            let parents = ont.parents(code);
            let o = parents.is_empty() || parents.iter().any(|p| has.contains(p));
            joint[o as usize][has.contains(&code) as usize] += 1.0;
        }
        joint
    }

    #[test]
    fn deterministic_root_has_zero_entropy() {
        assert_eq!(conditional_entropy(1.0, 1.0), 0.0);
    }

    #[test]
    fn fair_coin_is_ln2() {
        assert!((conditional_entropy(1.0, 0.5) - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn absent_code_and_absent_parent_are_zero() {
        assert_eq!(conditional_entropy(0.4, 0.0), 0.0);
        assert_eq!(conditional_entropy(0.0, 0.0), 0.0);
    }

    #[test]
    fn three_level_matches_four_term_form() {
        let ont = chain();
        let tls = vec![
            patient(&ont, 1, &["C"]),
            patient(&ont, 2, &["B"]),
            patient(&ont, 3, &["A"]),
            patient(&ont, 4, &["A", "B"]),
            patient(&ont, 5, &[]),
            patient(&ont, 6, &["C", "A"]),
            patient(&ont, 7, &["B"]),
        ];
        let stats = PresenceStats::from_timelines(&ont, &tls);
        for (id, name) in ont.vocab().iter() {
            let brute = four_term_entropy(tls.len() as f64, joint_counts(&ont, &tls, id));
            let fast = stats.conditional_entropy(id);
            assert!((brute - fast).abs() < 1e-12, "{name}: {brute} vs {fast}");
        }
    }

    #[test]
    fn cycle_is_rejected() {
        let err = Ontology::from_entries(&[("A", vec!["B"]), ("B", vec!["A"])]).unwrap_err();
        assert!(matches!(err, Error::CyclicOntology(_)));
    }

    #[test]
    fn unknown_parent_is_rejected() {
        assert!(Ontology::from_entries(&[("A", vec!["Z"])]).is_err());
    }

    #[test]
    fn expand_leaf_and_root() {
        let ont = chain();
        let c = ont.vocab().get("C").unwrap();
        assert_eq!(expand_excluded(&ont, &["C"]).unwrap(), [c].into_iter().collect());
        assert_eq!(expand_excluded(&ont, &["A"]).unwrap().len(), 3);
        assert!(matches!(expand_excluded(&ont, &["nope"]), Err(Error::UnknownCode(_))));
    }

    #[test]
    fn select_all_codes_sorted() {
        let ont = Ontology::from_entries(&[("x", vec![]), ("y", vec![]), ("z", vec![])]).unwrap();
        let tls = vec![patient(&ont, 1, &["x", "y"]), patient(&ont, 2, &["y"]), patient(&ont, 3, &["z"])];
        let stats = PresenceStats::from_timelines(&ont, &tls);
        let ts = select_tasks(&ont, &stats, 3, &BTreeSet::new()).unwrap();
        // x and z both have p = 1/3, y has 2/3: all three tie on binary entropy.
        let names: Vec<&str> = ts.tasks.iter().map(|&c| ont.vocab().name(c)).collect();
        assert_eq!(names, vec!["x", "y", "z"]);
        assert!(matches!(select_tasks(&ont, &stats, 4, &BTreeSet::new()), Err(Error::TooManyTasks { .. })));
    }

    #[test]
    fn excluded_top_code_never_selected() {
        let ont = Ontology::from_entries(&[("a", vec![]), ("b", vec![]), ("c", vec![])]).unwrap();
        let tls = vec![patient(&ont, 1, &["a", "b"]), patient(&ont, 2, &["b"]), patient(&ont, 3, &[]), patient(&ont, 4, &["c"])];
        let stats = PresenceStats::from_timelines(&ont, &tls);
        let all = select_tasks(&ont, &stats, 3, &BTreeSet::new()).unwrap();
        let top = all.tasks[0];
        let excluded: BTreeSet<CodeId> = [top].into_iter().collect();
        let ts = select_tasks(&ont, &stats, 2, &excluded).unwrap();
        assert!(!ts.tasks.contains(&top));
    }

    #[test]
    fn toy_selection_matches_exhaustive_ranking() {
        let ont = Ontology::from_entries(&[
            ("r", vec![]),
            ("a", vec!["r"]),
            ("b", vec!["r"]),
            ("a1", vec!["a"]),
            ("a2", vec!["a"]),
            ("b1", vec!["b"]),
        ])
        .unwrap();
        let tls = vec![
            patient(&ont, 1, &["a1"]),
            patient(&ont, 2, &["a2", "b1"]),
            patient(&ont, 3, &["b"]),
            patient(&ont, 4, &["r"]),
            patient(&ont, 5, &["a1", "a2"]),
            patient(&ont, 6, &["b1"]),
            patient(&ont, 7, &[]),
        ];
        let stats = PresenceStats::from_timelines(&ont, &tls);
        let mut brute: Vec<(f64, String)> = ont
            .vocab()
            .iter()
            .map(|(id, name)| (four_term_entropy(7.0, joint_counts(&ont, &tls, id)), name.to_string()))
            .collect();
        brute.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let ts = select_tasks(&ont, &stats, 3, &BTreeSet::new()).unwrap();
        let got: Vec<&str> = ts.tasks.iter().map(|&c| ont.vocab().name(c)).collect();
        let want: Vec<&str> = brute.iter().take(3).map(|(_, n)| n.as_str()).collect();
        assert_eq!(got, want);
    }

    proptest! {
        #[test]
        fn expansion_is_child_fixed_point(
            edges in proptest::collection::vec((0usize..12, 0usize..12), 0..30),
            seed in 0usize..12,
        ) {
            // Only keep edges child > parent so the graph is a DAG.
            let names: Vec<String> = (0..12).map(|i| alloc::format!("c{i}")).collect();
            let mut entries: Vec<(String, Vec<String>)> = names.iter().map(|n| (n.clone(), Vec::new())).collect();
            for (a, b) in edges {
                if a > b && !entries[a].1.contains(&names[b]) {
                    entries[a].1.push(names[b].clone());
                }
            }
            let ont = Ontology::from_entries(&entries).unwrap();
            let got = expand_excluded(&ont, &[names[seed].as_str()]).unwrap();
            let mut fixed: BTreeSet<CodeId> = [ont.vocab().get(&names[seed]).unwrap()].into_iter().collect();
            loop {
                let mut next = fixed.clone();
                for &c in &fixed {
                    next.extend(ont.children(c).iter().copied());
                }
                if next == fixed { break; }
                fixed = next;
            }
            prop_assert_eq!(got, fixed);
        }

        #[test]
        fn entropy_ranking_equals_frequency_ranking_for_rare_roots(
            freqs in proptest::collection::vec(1usize..=50, 2..10)
        ) {
            // Roots (p(O=T) = 1) with presence probability <= 0.5: binary
            // entropy is increasing in frequency.
            let n = 100usize;
            let entries: Vec<(String, Vec<String>)> =
                (0..freqs.len()).map(|i| (alloc::format!("k{i:02}"), Vec::new())).collect();
            let ont = Ontology::from_entries(&entries).unwrap();
            let stats = PresenceStats {
                n_patients: n,
                code_present: freqs.clone(),
                parent_present: vec![n; freqs.len()],
                both_present: freqs.clone(),
            };
            let ts = select_tasks(&ont, &stats, freqs.len(), &BTreeSet::new()).unwrap();
            let mut by_freq: Vec<usize> = (0..freqs.len()).collect();
            by_freq.sort_by(|&a, &b| freqs[b].cmp(&freqs[a]).then(a.cmp(&b)));
            let got: Vec<usize> = ts.tasks.iter().map(|c| c.index()).collect();
            prop_assert_eq!(got, by_freq);
        }
    }
}
