//! Length-limited canonical prefix codes over the 16 exponent symbols.
//!
//! Lengths come from package-merge (optimal under the 16-bit cap). Codes are
//! then assigned canonically in (length, symbol) order, so the 16-entry
//! length vector alone describes the code.

use crate::entropy::ExponentHistogram;
use crate::error::{Error, Result};
use crate::fp8::NUM_SYMBOLS;

pub const MAX_CODE_LEN: u8 = 16;

/// A canonical prefix code. `lengths[s] == 0` means symbol `s` is absent;
/// otherwise `codes[s]` holds its `lengths[s]` low bits, MSB-first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeTable {
    lengths: [u8; NUM_SYMBOLS],
    codes: [u16; NUM_SYMBOLS],
}

impl CodeTable {
    pub fn lengths(&self) -> &[u8; NUM_SYMBOLS] {
        &self.lengths
    }

    pub fn length(&self, symbol: u8) -> u8 {
        self.lengths[symbol as usize]
    }

    pub fn code(&self, symbol: u8) -> Option<u16> {
        (self.lengths[symbol as usize] > 0).then(|| self.codes[symbol as usize])
    }

    pub fn max_length(&self) -> u8 {
        self.lengths.iter().copied().max().unwrap_or(0)
    }

    /// Present symbols in canonical order.
    pub fn symbols(&self) -> impl Iterator<Item = u8> + '_ {
        canonical_order(&self.lengths).into_iter()
    }

    pub fn lowest_symbol(&self) -> u8 {
        self.lengths.iter().position(|&l| l > 0).unwrap_or(0) as u8
    }
}

fn canonical_order(lengths: &[u8; NUM_SYMBOLS]) -> Vec<u8> {
    let mut order: Vec<u8> = (0..NUM_SYMBOLS as u8)
        .filter(|&s| lengths[s as usize] > 0)
        .collect();
    order.sort_by_key(|&s| (lengths[s as usize], s));
    order
}

/// Kraft sum scaled by `2^16`.
fn kraft_sum(lengths: &[u8; NUM_SYMBOLS]) -> u64 {
    lengths
        .iter()
        .filter(|&&l| l > 0)
        .map(|&l| 1u64 << (MAX_CODE_LEN - l))
        .sum()
}

/// Assigns canonical codes to a length vector satisfying Kraft.
pub fn canonical_codes(lengths: [u8; NUM_SYMBOLS]) -> Result<CodeTable> {
    if let Some(&l) = lengths.iter().find(|&&l| l > MAX_CODE_LEN) {
        return Err(Error::InvalidLengths(format!(
            "length {l} exceeds {MAX_CODE_LEN}"
        )));
    }
    if lengths.iter().all(|&l| l == 0) {
        return Err(Error::InvalidLengths("no symbols present".into()));
    }
    if kraft_sum(&lengths) > 1 << MAX_CODE_LEN {
        return Err(Error::InvalidLengths("Kraft sum exceeds 1".into()));
    }

    let mut codes = [0u16; NUM_SYMBOLS];
    let mut next: u32 = 0;
    let mut prev_len = 0u8;
    for s in canonical_order(&lengths) {
        let len = lengths[s as usize];
        next <<= len - prev_len;
        codes[s as usize] = next as u16;
        next += 1;
        prev_len = len;
    }
    Ok(CodeTable { lengths, codes })
}

/// Optimal code under the 16-bit cap for the given histogram.
///
/// A histogram with a single present symbol gets a 1-bit code so that
/// every decode step advances the bit cursor.
pub fn build_code(hist: &ExponentHistogram) -> Result<CodeTable> {
    if hist.total() == 0 {
        return Err(Error::EmptyInput);
    }
    let lengths = package_merge(&hist.counts, MAX_CODE_LEN);
    canonical_codes(lengths)
}

/// `sum p(x) * len(x)` in bits per symbol.
pub fn expected_length(table: &CodeTable, hist: &ExponentHistogram) -> f64 {
    let total = hist.total();
    if total == 0 {
        return 0.0;
    }
    let bits: u64 = hist
        .counts
        .iter()
        .zip(table.lengths.iter())
        .map(|(&c, &l)| c * l as u64)
        .sum();
    bits as f64 / total as f64
}

/// Total encoded bits of a histogram under `table`.
pub fn encoded_bits(table: &CodeTable, hist: &ExponentHistogram) -> u64 {
    hist.counts
        .iter()
        .zip(table.lengths.iter())
        .map(|(&c, &l)| c * l as u64)
        .sum()
}

#[derive(Clone, Copy)]
struct Item {
    weight: u64,
    // occurrences of each symbol inside this (possibly packaged) item
    depth: [u8; NUM_SYMBOLS],
}

/// Package-merge over nonzero counts. Ties between a package and an
/// original item are resolved in favour of the package.
fn package_merge(counts: &[u64; NUM_SYMBOLS], max_len: u8) -> [u8; NUM_SYMBOLS] {
    let mut lengths = [0u8; NUM_SYMBOLS];
    let mut present: Vec<(u64, usize)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| (c, s))
        .collect();
    match present.len() {
        0 => return lengths,
        1 => {
            lengths[present[0].1] = 1;
            return lengths;
        }
        _ => {}
    }
    present.sort_unstable();
    let n = present.len();

    let originals: Vec<Item> = present
        .iter()
        .map(|&(weight, s)| {
            let mut depth = [0u8; NUM_SYMBOLS];
            depth[s] = 1;
            Item { weight, depth }
        })
        .collect();

    let mut merged: Vec<Item> = originals.clone();
    for _ in 1..max_len {
        let packages: Vec<Item> = merged
            .chunks_exact(2)
            .map(|pair| {
                let mut depth = pair[0].depth;
                for (d, e) in depth.iter_mut().zip(pair[1].depth.iter()) {
                    *d += e;
                }
                Item {
                    weight: pair[0].weight + pair[1].weight,
                    depth,
                }
            })
            .collect();

        let mut next = Vec::with_capacity(originals.len() + packages.len());
        let (mut i, mut j) = (0, 0);
        while i < originals.len() || j < packages.len() {
            let take_original = match (originals.get(i), packages.get(j)) {
                (Some(o), Some(p)) => o.weight < p.weight,
                (Some(_), None) => true,
                _ => false,
            };
            if take_original {
                next.push(originals[i]);
                i += 1;
            } else {
                next.push(packages[j]);
                j += 1;
            }
        }
        merged = next;
    }

    for item in &merged[..2 * n - 2] {
        for (l, d) in lengths.iter_mut().zip(item.depth.iter()) {
            *l += d;
        }
    }
    lengths
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(counts: &[u64]) -> ExponentHistogram {
        let mut c = [0u64; NUM_SYMBOLS];
        c[..counts.len()].copy_from_slice(counts);
        ExponentHistogram::from_counts(c)
    }

    fn is_prefix_free(t: &CodeTable) -> bool {
        let syms: Vec<u8> = t.symbols().collect();
        for &a in &syms {
            for &b in &syms {
                if a == b {
                    continue;
                }
                let (la, lb) = (t.length(a), t.length(b));
                if la <= lb && t.code(b).unwrap() >> (lb - la) == t.code(a).unwrap() {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn single_symbol_gets_one_bit() {
        let mut c = [0u64; 16];
        c[9] = 1000;
        let t = build_code(&ExponentHistogram::from_counts(c)).unwrap();
        for s in 0..16u8 {
            assert_eq!(t.length(s), if s == 9 { 1 } else { 0 });
        }
        assert_eq!(t.code(9), Some(0));
        assert_eq!(expected_length(&t, &ExponentHistogram::from_counts(c)), 1.0);
    }

    #[test]
    fn lookup_example_string() {
        // "aaabbcddeeeee" with a..e mapped to symbols 0..4
        let h = hist(&[3, 2, 1, 2, 5]);
        let t = build_code(&h).unwrap();
        let (a, b, c, d, e) = (0, 1, 2, 3, 4);
        assert!(t.length(e) <= 2 && t.length(a) <= 2);
        for s in [b, c, d] {
            assert!(t.length(s) >= 3);
            // all three hang below the same 2-bit prefix "11"
            assert_eq!(t.code(s).unwrap() >> (t.length(s) - 2), 0b11);
        }
        assert_eq!(t.lengths()[..5], [2, 4, 4, 3, 1]);
        assert!(is_prefix_free(&t));
    }

    #[test]
    fn uniform_sixteen_symbols() {
        let h = ExponentHistogram::from_counts([7; 16]);
        let t = build_code(&h).unwrap();
        assert!(t.lengths().iter().all(|&l| l == 4));
        assert_eq!(expected_length(&t, &h), 4.0);
    }

    #[test]
    fn dyadic_expected_length() {
        let h = hist(&[1, 1, 2, 4]);
        let t = build_code(&h).unwrap();
        assert_eq!(t.lengths()[..4], [3, 3, 2, 1]);
        assert_eq!(expected_length(&t, &h), 1.75);
    }

    #[test]
    fn empty_histogram_is_an_error() {
        assert!(matches!(
            build_code(&ExponentHistogram::default()),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn canonical_examples() {
        let mut l = [0u8; 16];
        l[0] = 1;
        l[1] = 1;
        let t = canonical_codes(l).unwrap();
        assert_eq!((t.code(0), t.code(1)), (Some(0b0), Some(0b1)));

        let mut l = [0u8; 16];
        l[..3].copy_from_slice(&[1, 2, 2]);
        let t = canonical_codes(l).unwrap();
        assert_eq!(
            (t.code(0), t.code(1), t.code(2)),
            (Some(0b0), Some(0b10), Some(0b11))
        );
        assert_eq!(t.code(3), None);

        assert!(matches!(
            canonical_codes([0; 16]),
            Err(Error::InvalidLengths(_))
        ));
    }

    #[test]
    fn canonical_rejects_invalid() {
        let mut l = [0u8; 16];
        l[..3].copy_from_slice(&[1, 1, 1]);
        assert!(canonical_codes(l).is_err());
        let mut l = [0u8; 16];
        l[0] = 17;
        assert!(canonical_codes(l).is_err());
    }

    #[test]
    fn canonical_ties_broken_by_symbol() {
        let mut l = [0u8; 16];
        l[5] = 2;
        l[1] = 2;
        l[9] = 1;
        let t = canonical_codes(l).unwrap();
        assert_eq!(t.code(9), Some(0b0));
        assert_eq!(t.code(1), Some(0b10));
        assert_eq!(t.code(5), Some(0b11));
    }

    #[test]
    fn sixteen_bit_code_accepted() {
        let mut l = [0u8; 16];
        for (s, len) in l.iter_mut().enumerate() {
            *len = s as u8 + 1;
        }
        l[15] = 16;
        let t = canonical_codes(l).unwrap();
        assert_eq!(t.max_length(), 16);
        assert_eq!(t.code(15), Some(0xFFFE));
        assert!(is_prefix_free(&t));
    }

    #[test]
    fn fibonacci_counts_respect_cap() {
        let mut c = [0u64; 16];
        let (mut a, mut b) = (1u64, 1u64);
        for slot in c.iter_mut() {
            *slot = a;
            (a, b) = (b, a + b);
        }
        let h = ExponentHistogram::from_counts(c);
        let t = build_code(&h).unwrap();
        assert!(t.max_length() <= MAX_CODE_LEN);
        // 16 symbols cannot need more than 15 levels; the chain is maximal
        assert_eq!(t.max_length(), 15);
        assert!(is_prefix_free(&t));
    }

    #[test]
    fn cap_binds_when_lowered() {
        let mut c = [0u64; 16];
        let (mut a, mut b) = (1u64, 1u64);
        for slot in c.iter_mut() {
            *slot = a;
            (a, b) = (b, a + b);
        }
        let lengths = package_merge(&c, 6);
        assert!(lengths.iter().all(|&l| (1..=6).contains(&l)));
        let t = canonical_codes(lengths).unwrap();
        assert_eq!(kraft_sum(t.lengths()), 1 << 16);
    }

    #[test]
    fn random_histograms_are_complete_and_prefix_free() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let mut c = [0u64; 16];
            for slot in c.iter_mut() {
                if rng.random_bool(0.7) {
                    *slot = rng.random_range(1..10_000);
                }
            }
            if c.iter().all(|&x| x == 0) {
                c[0] = 1;
            }
            let h = ExponentHistogram::from_counts(c);
            let t = build_code(&h).unwrap();
            assert!(is_prefix_free(&t));
            if h.present() >= 2 {
                assert_eq!(kraft_sum(t.lengths()), 1 << 16);
            }
            assert_eq!(build_code(&h).unwrap(), t);
            for s in 0..16 {
                assert_eq!(c[s] == 0, t.lengths()[s] == 0);
            }
        }
    }
}
