//! Binary layout of a [`SurvivalBatch`], little-endian throughout:
//!
//! | size | content |
//! |---|---|
//! | 8 | magic `TTESURV1` |
//! | 6 × 8 | `u64` events, tasks, pieces, event entries, overrides, skipped |
//! | 8 · events · pieces | `f64` default exposure, row-major `[event][piece]` |
//! | 24 each | event entries: `u32` event, task, piece, `u32` 0, `f64` time |
//! | 24 each | censor overrides, same layout |

use tte_core::head::{SparseEntry, SurvivalBatch};

use crate::error::{PipelineError, Result};

pub const MAGIC: &[u8; 8] = b"TTESURV1";

pub fn encode(batch: &SurvivalBatch) -> Vec<u8> {
    let entries = batch.event_entries.len() + batch.censor_overrides.len();
    let mut out = Vec::with_capacity(56 + 8 * batch.default_exposure.len() + 24 * entries);
    out.extend_from_slice(MAGIC);
    for n in [
        batch.num_events,
        batch.num_tasks,
        batch.num_pieces,
        batch.event_entries.len(),
        batch.censor_overrides.len(),
        batch.skipped,
    ] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for v in &batch.default_exposure {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for e in batch.event_entries.iter().chain(&batch.censor_overrides) {
        for v in [e.event, e.task, e.piece, 0] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&e.time.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.at + N;
        let s = self.bytes.get(self.at..end).ok_or_else(|| PipelineError::Data("survival batch is truncated".into()))?;
        self.at = end;
        Ok(s.try_into().unwrap())
    }

    fn u64(&mut self) -> Result<usize> {
        usize::try_from(u64::from_le_bytes(self.take()?)).map_err(|_| PipelineError::Data("count overflows".into()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode(bytes: &[u8]) -> Result<SurvivalBatch> {
    if bytes.get(..8) != Some(MAGIC.as_slice()) {
        return Err(PipelineError::Data("not a survival batch (bad magic)".into()));
    }
    let mut c = Cursor { bytes, at: 8 };
    let (num_events, num_tasks, num_pieces) = (c.u64()?, c.u64()?, c.u64()?);
    let (n_entries, n_overrides, skipped) = (c.u64()?, c.u64()?, c.u64()?);
    let cells = num_events.checked_mul(num_pieces).ok_or_else(|| PipelineError::Data("count overflows".into()))?;
    if cells.saturating_mul(8) > bytes.len() {
        return Err(PipelineError::Data("survival batch is truncated".into()));
    }
    let default_exposure = (0..cells).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let entry = |c: &mut Cursor| -> Result<SparseEntry> {
        let (event, task, piece, reserved) = (c.u32()?, c.u32()?, c.u32()?, c.u32()?);
        if reserved != 0 {
            return Err(PipelineError::Data("reserved field is not zero".into()));
        }
        Ok(SparseEntry { event, task, piece, time: c.f64()? })
    };
    let mut event_entries = Vec::with_capacity(n_entries.min(bytes.len() / 24));
    for _ in 0..n_entries {
        event_entries.push(entry(&mut c)?);
    }
    let mut censor_overrides = Vec::with_capacity(n_overrides.min(bytes.len() / 24));
    for _ in 0..n_overrides {
        censor_overrides.push(entry(&mut c)?);
    }
    if c.at != bytes.len() {
        return Err(PipelineError::Data("trailing bytes after survival batch".into()));
    }
    Ok(SurvivalBatch { num_events, num_tasks, num_pieces, default_exposure, event_entries, censor_overrides, skipped })
}
