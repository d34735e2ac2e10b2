use alloc::vec::Vec;

/// Inverse-frequency schedule `base^(-2f/dim)` for pair index `f`.
pub fn rotary_frequencies(dim: usize, base: f64) -> Vec<f64> {
    (0..dim / 2).map(|f| libm::pow(base, -2.0 * f as f64 / dim as f64)).collect()
}

/// Rotates each consecutive pair `(x[2f], x[2f+1])` by `freqs[f] * t`.
pub fn rotary_in_place(x: &mut [f64], freqs: &[f64], t: f64) {
    debug_assert_eq!(x.len(), 2 * freqs.len());
    for (pair, &w) in x.chunks_exact_mut(2).zip(freqs) {
        let (s, c) = libm::sincos(w * t);
        let (a, b) = (pair[0], pair[1]);
        pair[0] = a * c - b * s;
        pair[1] = a * s + b * c;
    }
}

pub fn rotary(x: &[f64], t: f64, base: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    rotary_in_place(&mut out, &rotary_frequencies(x.len(), base), t);
    out
}
