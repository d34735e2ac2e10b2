use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Contiguous pieces `[start_p, start_{p+1})` covering `[0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PieceGrid {
    starts: Vec<f64>,
}

impl PieceGrid {
    /// `starts[0]` must be 0 and the sequence strictly increasing and finite.
    /// The last piece is open-ended.
    pub fn new(starts: Vec<f64>) -> Result<Self> {
        if starts.first() != Some(&0.0) {
            return Err(Error::invalid("piece grid must start at 0"));
        }
        if starts.windows(2).any(|w| !(w[0] < w[1])) || starts.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("piece starts must be finite and strictly increasing"));
        }
        Ok(PieceGrid { starts })
    }

    pub fn single() -> Self {
        PieceGrid { starts: alloc::vec![0.0] }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn start(&self, p: usize) -> f64 {
        self.starts[p]
    }

    pub fn end(&self, p: usize) -> f64 {
        self.starts.get(p + 1).copied().unwrap_or(f64::INFINITY)
    }

    /// The piece `p` with `start(p) <= t < end(p)`; `t` must be non-negative.
    pub fn piece_of(&self, t: f64) -> usize {
        self.starts.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// Time spent inside piece `p` by a subject followed for `t` days.
    pub fn exposure(&self, p: usize, t: f64) -> f64 {
        (t.min(self.end(p)) - self.start(p)).max(0.0)
    }
}

/// Equal-probability pieces: inner boundaries at the `p / P` quantiles of the
/// pooled event times (linear interpolation between order statistics).
/// Coinciding quantiles move up to the next distinct observed time.
pub fn fit_pieces(event_times: &[f64], pieces: usize) -> Result<PieceGrid> {
    if pieces == 0 {
        return Err(Error::invalid("need at least one piece"));
    }
    let mut sorted: Vec<f64> = event_times.iter().copied().filter(|t| t.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < pieces {
        return Err(Error::NotEnoughDistinctTimes { needed: pieces, found: distinct.len() });
    }
    let mut starts = alloc::vec![0.0];
    for p in 1..pieces {
        let q = crate::metrics::quantile_sorted(&sorted, p as f64 / pieces as f64);
        let prev = *starts.last().expect("non-empty");
        let boundary = if q > prev {
            q
        } else {
            match distinct.iter().find(|&&v| v > prev) {
                Some(&v) => v,
                None => return Err(Error::NotEnoughDistinctTimes { needed: pieces, found: distinct.len() }),
            }
        };
        starts.push(boundary);
    }
    PieceGrid::new(starts)
}
