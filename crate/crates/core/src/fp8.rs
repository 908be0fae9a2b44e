//! E4M3 byte layout: bit 7 sign, bits 6..3 exponent, bits 2..0 mantissa.
//!
//! The codec splits each byte into a 4-bit exponent symbol (entropy coded)
//! and a 4-bit sign/mantissa nibble `[s, m2, m1, m0]` (stored verbatim, two
//! per byte). Every one of the 256 byte patterns round-trips, NaN included.

/// Number of distinct exponent symbols.
pub const NUM_SYMBOLS: usize = 16;

#[inline]
pub const fn exponent(b: u8) -> u8 {
    (b >> 3) & 0x0F
}

#[inline]
pub const fn sign_mantissa(b: u8) -> u8 {
    ((b & 0x80) >> 4) | (b & 0x07)
}

/// Splits a byte into `(exponent symbol, sign/mantissa nibble)`.
#[inline]
pub const fn split(b: u8) -> (u8, u8) {
    (exponent(b), sign_mantissa(b))
}

/// Rebuilds a byte from an exponent symbol and a nibble held in the HIGH
/// half of `q_high`. This is the decoder's assembly step.
#[inline]
pub const fn assemble(x: u8, q_high: u8) -> u8 {
    (x << 3) | (q_high & 0x80) | ((q_high >> 4) & 0x07)
}

/// Packs nibbles two per byte, element `2i` in the high half of byte `i`.
/// An odd trailing element leaves the final low nibble zero.
pub fn pack_nibbles(nibbles: &[u8]) -> Vec<u8> {
    nibbles
        .chunks(2)
        .map(|pair| {
            let hi = pair[0] & 0x0F;
            let lo = pair.get(1).map_or(0, |n| n & 0x0F);
            (hi << 4) | lo
        })
        .collect()
}

/// Nibble `i` moved into the high half of a byte, as the decoder consumes it.
#[inline]
pub fn nibble_high(packed: &[u8], i: usize) -> u8 {
    packed[i / 2] << ((i % 2) * 4)
}

#[inline]
pub fn unpack_nibble(packed: &[u8], i: usize) -> u8 {
    nibble_high(packed, i) >> 4
}

pub fn unpack_nibbles(packed: &[u8], n_elem: usize) -> Vec<u8> {
    (0..n_elem).map(|i| unpack_nibble(packed, i)).collect()
}

/// Splits a whole tensor into its exponent stream and packed nibbles.
pub fn split_tensor(bytes: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let exponents = bytes.iter().map(|&b| exponent(b)).collect();
    let nibbles: Vec<u8> = bytes.iter().map(|&b| sign_mantissa(b)).collect();
    (exponents, pack_nibbles(&nibbles))
}

/// Inverse of [`split_tensor`].
pub fn assemble_tensor(exponents: &[u8], packed: &[u8]) -> Vec<u8> {
    exponents
        .iter()
        .enumerate()
        .map(|(i, &x)| assemble(x, nibble_high(packed, i)))
        .collect()
}
