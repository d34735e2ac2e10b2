use xxhash_rust::xxh64::xxh64;

use super::PatientId;

/// Seed for the split hash. Changing it reassigns every patient.
pub const SPLIT_HASH_SEED: u64 = 0x7474_655f_7370_6c74;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.70, validation: 0.15, test: 0.15 }
    }
}

/// Maps a patient to a split from XXH64 of the little-endian id bytes.
/// The top 53 bits of the hash give a uniform value in [0, 1).
pub fn assign_split(patient_id: PatientId, fractions: &SplitFractions, seed: u64) -> Split {
    let h = xxh64(&patient_id.0.to_le_bytes(), seed);
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    if u < fractions.train {
        Split::Train
    } else if u < fractions.train + fractions.validation {
        Split::Validation
    } else {
        Split::Test
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let f = SplitFractions::default();
        for id in [0u64, 1, 42, u64::MAX] {
            assert_eq!(assign_split(PatientId(id), &f, SPLIT_HASH_SEED), assign_split(PatientId(id), &f, SPLIT_HASH_SEED));
        }
    }

    #[test]
    fn pinned_values() {
        // Portable across machines: XXH64 is fully specified.
        assert_eq!(xxh64(&0u64.to_le_bytes(), 0), 0x34c9_6acd_cadb_1bbb);
    }

    #[test]
    fn fractions_on_100k_ids() {
        let f = SplitFractions::default();
        let mut counts = [0usize; 3];
        let n = 100_000u64;
        for id in 0..n {
            let s = assign_split(PatientId(id.wrapping_mul(2_654_435_761)), &f, SPLIT_HASH_SEED);
            counts[s as usize] += 1;
        }
        let expect = [0.70, 0.15, 0.15];
        for (c, e) in counts.iter().zip(expect) {
            assert!((*c as f64 / n as f64 - e).abs() < 0.01, "{counts:?}");
        }
        assert_eq!(counts.iter().sum::<usize>(), n as usize);
    }
}
