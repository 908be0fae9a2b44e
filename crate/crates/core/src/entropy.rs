//! Exponent statistics: empirical histograms and entropy, plus the
//! two-sided geometric exponent law for symmetric alpha-stable weights.
//!
//! Two entropy notions are kept apart. The *ideal* exponent
//! `floor(log2 |x|)` has unbounded integer support and is what the
//! geometric law describes. The *field* exponent is the 4-bit E4M3
//! exponent, a clamped and biased view with 16 bins, and is what the
//! codec actually compresses.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fp8::{self, NUM_SYMBOLS};

/// Counts of the 16 exponent-field symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExponentHistogram {
    pub counts: [u64; NUM_SYMBOLS],
}

impl ExponentHistogram {
    pub fn from_counts(counts: [u64; NUM_SYMBOLS]) -> Self {
        Self { counts }
    }

    /// Histogram of already-extracted exponent symbols. Panics on a symbol >= 16.
    pub fn from_symbols(symbols: &[u8]) -> Self {
        let mut counts = [0u64; NUM_SYMBOLS];
        for &s in symbols {
            counts[s as usize] += 1;
        }
        Self { counts }
    }

    /// Histogram of the exponent fields of raw FP8 bytes.
    pub fn from_fp8(bytes: &[u8]) -> Self {
        let mut counts = [0u64; NUM_SYMBOLS];
        for &b in bytes {
            counts[fp8::exponent(b) as usize] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn present(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn probability(&self, symbol: usize) -> f64 {
        self.counts[symbol] as f64 / self.total() as f64
    }

    pub fn shannon_entropy(&self) -> Result<f64> {
        shannon_entropy(&self.counts)
    }

    /// Most frequent symbol (smallest on ties), `None` when empty.
    pub fn mode(&self) -> Option<u8> {
        let (sym, &count) = self
            .counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
        (count > 0).then_some(sym as u8)
    }
}

/// `-sum p log2 p` over nonzero bins, in bits.
pub fn shannon_entropy(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyInput);
    }
    let total = total as f64;
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    // a single bin yields -0.0
    Ok(h.max(0.0))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 2], got {alpha}"
        )))
    }
}

/// Symmetric alpha-stable law `S_alpha(beta = 0, gamma, 0)` and the
/// two-sided geometric exponent law it induces, with ratio `q = 2^-alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableModel {
    alpha: f64,
    gamma: f64,
}

impl StableModel {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self { alpha, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        0.0
    }

    pub fn q(&self) -> f64 {
        (-self.alpha).exp2()
    }

    /// `P(E = k) = (1 - q) / (1 + q) * q^|k|`.
    pub fn geometric_pmf(&self, k: i64) -> f64 {
        let q = self.q();
        (1.0 - q) / (1.0 + q) * q.powf(k.unsigned_abs() as f64)
    }

    /// Closed-form entropy expression
    /// `h2((1-q)/(1+q)) + 2q/(1+q) * |log2 q| / (1-q)`.
    ///
    /// Note this is not the same number as `-sum pmf log2 pmf` of
    /// [`Self::geometric_pmf`]; see [`Self::series_entropy`].
    pub fn closed_form_entropy(&self) -> f64 {
        let q = self.q();
        let p0 = (1.0 - q) / (1.0 + q);
        binary_entropy(p0) + 2.0 * q / (1.0 + q) * q.log2().abs() / (1.0 - q)
    }

    /// Exact entropy of the geometric pmf, summed analytically:
    /// `-log2 p0 + |log2 q| * E|k|` with `E|k| = 2q / ((1+q)(1-q))`.
    pub fn series_entropy(&self) -> f64 {
        let q = self.q();
        let p0 = (1.0 - q) / (1.0 + q);
        -p0.log2() + q.log2().abs() * 2.0 * q / ((1.0 + q) * (1.0 - q))
    }

    pub fn entropy_bounds(&self) -> (f64, f64) {
        bounds_unchecked(self.alpha)
    }
}

/// Binary entropy `h2(p)` in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

fn bounds_unchecked(alpha: f64) -> (f64, f64) {
    let q = (-alpha).exp2();
    (alpha / (1.0 + q), alpha / (1.0 - q))
}

/// `(alpha / (1 + 2^-alpha), alpha / (1 - 2^-alpha))`.
pub fn entropy_bounds(alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    Ok(bounds_unchecked(alpha))
}

/// Minimal average width of a float format: the exponent entropy upper
/// bound at alpha = 2, one sign bit and one mantissa bit (about 4.67 bits).
pub fn compression_floor_bits() -> f64 {
    bounds_unchecked(2.0).1 + 1.0 + 1.0
}

/// `floor(log2 |x|)`, computed exactly from the bit pattern.
pub fn ideal_exponent(x: f64) -> Result<i32> {
    if x == 0.0 {
        return Err(Error::ZeroExponent);
    }
    if !x.is_finite() {
        return Err(Error::InvalidParameter(format!("{x} has no exponent")));
    }
    let bits = x.abs().to_bits();
    let biased = (bits >> 52) as i32;
    if biased == 0 {
        let mantissa = bits & ((1u64 << 52) - 1);
        Ok(63 - mantissa.leading_zeros() as i32 - 1074)
    } else {
        Ok(biased - 1023)
    }
}

/// Shannon entropy of the ideal exponents of the nonzero elements of `xs`.
pub fn empirical_exponent_entropy(xs: &[f64]) -> Result<f64> {
    let mut counts: HashMap<i32, u64> = HashMap::new();
    for &x in xs.iter().filter(|&&x| x != 0.0) {
        *counts.entry(ideal_exponent(x)?).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let counts: Vec<u64> = counts.into_values().collect();
    shannon_entropy(&counts)
}

/// Per-tensor entropy summary, one row of `ecf8 stats`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyReport {
    pub name: String,
    pub n_elem: u64,
    /// Shannon entropy of the 4-bit exponent field; `None` for empty tensors.
    pub entropy_bits: Option<f64>,
    /// Expected Huffman code length of the exponent field.
    pub bits_per_symbol: Option<f64>,
    /// `(8 - (1 + 3 + bits_per_symbol)) / 8`.
    pub projected_savings: Option<f64>,
    /// `1 - compressed / original` for the serialized tensor record.
    pub actual_savings: Option<f64>,
    /// Reference exponent-entropy interval of the geometric law at alpha = 2.
    pub model_bounds: (f64, f64),
    pub floor_bits: f64,
    pub histogram: [u64; NUM_SYMBOLS],
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn entropy_examples() {
        let mut one = [0u64; 16];
        one[3] = 42;
        assert_eq!(shannon_entropy(&one).unwrap(), 0.0);
        assert_eq!(shannon_entropy(&[5u64; 16]).unwrap(), 4.0);
        let h = shannon_entropy(&[1, 1, 2, 4]).unwrap();
        assert!(close(h, 1.75, 1e-12));
    }

    #[test]
    fn empty_histogram_is_an_error() {
        assert!(matches!(
            ExponentHistogram::default().shannon_entropy(),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn histogram_from_fp8() {
        let h = ExponentHistogram::from_fp8(&[0x00, 0xAA, 0x2A, 0x7F]);
        assert_eq!(h.total(), 4);
        assert_eq!(h.counts[5], 2);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[15], 1);
        assert_eq!(h.mode(), Some(5));
        assert_eq!(h.present(), 3);
    }

    #[test]
    fn pmf_examples() {
        let m = StableModel::new(2.0, 1.0).unwrap();
        assert!(close(m.geometric_pmf(0), 0.6, 1e-15));
        assert!(close(m.geometric_pmf(1), 0.15, 1e-15));
        assert_eq!(m.geometric_pmf(1), m.geometric_pmf(-1));
    }

    #[test]
    fn pmf_normalizes() {
        // The tail beyond |k| = K is 2 q^(K+1) / (1 + q); pick K so it is
        // below 1e-12 (|k| <= 64 is not enough for alpha < ~0.5).
        for i in 1..=50 {
            let alpha = 2.0 * i as f64 / 50.0;
            let m = StableModel::new(alpha, 1.0).unwrap();
            let kmax = (40.0 / alpha).ceil() as i64 + 1;
            let s: f64 = (-kmax..=kmax).map(|k| m.geometric_pmf(k)).sum();
            assert!(close(s, 1.0, 1e-9), "alpha {alpha}: {s}");
        }
    }

    #[test]
    fn bounds_examples() {
        let (lo, hi) = entropy_bounds(2.0).unwrap();
        assert!(close(lo, 1.6, 1e-12));
        assert!(close(hi, 8.0 / 3.0, 1e-12));
        let (lo, hi) = entropy_bounds(1.0).unwrap();
        assert!(close(lo, 2.0 / 3.0, 1e-12));
        assert!(close(hi, 2.0, 1e-12));
        assert!(entropy_bounds(0.0).is_err());
        assert!(entropy_bounds(-1.0).is_err());
    }

    #[test]
    fn bounds_are_strict() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let alpha: f64 = 2.0 - rng.random::<f64>() * 2.0;
            let (lo, hi) = entropy_bounds(alpha).unwrap();
            assert!(lo < hi);
        }
    }

    #[test]
    fn closed_form_at_alpha_two() {
        let m = StableModel::new(2.0, 1.0).unwrap();
        let h = m.closed_form_entropy();
        let by_hand = binary_entropy(0.6) + (0.5 / 1.25) * (2.0 / 0.75);
        assert!(close(h, by_hand, 1e-12));
        assert!(close(h, 2.0376, 1e-4));
        let (lo, hi) = m.entropy_bounds();
        assert!(lo <= h && h <= hi);
    }

    #[test]
    fn series_entropy_matches_truncated_sum() {
        for i in 1..=50 {
            let alpha = 0.5 + 1.5 * i as f64 / 50.0;
            let m = StableModel::new(alpha, 1.0).unwrap();
            let direct: f64 = (-200i64..=200)
                .map(|k| m.geometric_pmf(k))
                .filter(|&p| p > 0.0)
                .map(|p| -p * p.log2())
                .sum();
            assert!(close(m.series_entropy(), direct, 1e-9), "alpha {alpha}");
        }
    }

    #[test]
    fn floor_examples() {
        let floor = compression_floor_bits();
        assert!(close(floor, 4.667, 1e-3));
        // 8/3 is not representable, so the difference is exact only to rounding
        assert!(close(
            floor - entropy_bounds(2.0).unwrap().1,
            2.0,
            4.0 * f64::EPSILON
        ));
        assert!(floor < 8.0);
    }

    #[test]
    fn ideal_exponent_examples() {
        assert_eq!(ideal_exponent(1.0).unwrap(), 0);
        assert_eq!(ideal_exponent(-3.0).unwrap(), 1);
        assert_eq!(ideal_exponent(0.3).unwrap(), -2);
        assert_eq!(ideal_exponent(0.5).unwrap(), -1);
        assert_eq!(ideal_exponent(f64::MIN_POSITIVE).unwrap(), -1022);
        assert_eq!(ideal_exponent(f64::from_bits(1)).unwrap(), -1074);
        assert!(matches!(ideal_exponent(0.0), Err(Error::ZeroExponent)));
        assert!(matches!(ideal_exponent(-0.0), Err(Error::ZeroExponent)));
    }

    #[test]
    fn ideal_exponent_agrees_with_log2() {
        for i in 1..2000 {
            let x = i as f64 * 0.0137 - 13.0;
            if x == 0.0 {
                continue;
            }
            let e = ideal_exponent(x).unwrap();
            let v = x.abs();
            assert!((e as f64).exp2() <= v && v < ((e + 1) as f64).exp2());
        }
    }

    #[test]
    fn empirical_entropy_edge_cases() {
        assert_eq!(empirical_exponent_entropy(&[3.5; 100]).unwrap(), 0.0);
        assert!(empirical_exponent_entropy(&[0.0, 0.0]).is_err());
        assert!(empirical_exponent_entropy(&[]).is_err());
        // {1, 2} -> exponents {0, 1}: one bit
        let h = empirical_exponent_entropy(&[1.0, 0.0, 2.5]).unwrap();
        assert!(close(h, 1.0, 1e-12));
    }

    #[test]
    fn model_rejects_bad_parameters() {
        assert!(StableModel::new(0.0, 1.0).is_err());
        assert!(StableModel::new(2.1, 1.0).is_err());
        assert!(StableModel::new(1.0, 0.0).is_err());
        assert!(StableModel::new(1.0, f64::NAN).is_err());
    }
}
