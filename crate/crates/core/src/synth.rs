//! Synthetic FP8 tensors drawn from a symmetric alpha-stable law.

use crate::container::{RawTensor, RawTensorFile};
use crate::error::Result;
use crate::stable::sample_stable;

/// Largest finite E4M3 magnitude (0x7E = 1.75 * 2^8).
pub const E4M3_MAX: f64 = 448.0;
const E4M3_MAX_BYTE: u8 = 0x7E;
const EXP_BIAS: i32 = 7;
/// Exponent of the subnormal range (and of the smallest normal binade).
const MIN_EXP: i32 = 1 - EXP_BIAS;

/// Nearest E4M3 byte: round-to-nearest-even on the mantissa, saturation to
/// +-448 on overflow, signed zero on underflow. NaN maps to +0; no NaN byte
/// is ever produced.
pub fn f64_to_e4m3(x: f64) -> u8 {
    if x.is_nan() {
        return 0;
    }
    let sign = if x.is_sign_negative() { 0x80 } else { 0 };
    let a = x.abs();
    if a >= E4M3_MAX {
        return sign | E4M3_MAX_BYTE;
    }
    if a < f64::MIN_POSITIVE {
        return sign;
    }
    let mut e = (((a.to_bits() >> 52) as i32) - 1023).max(MIN_EXP);
    // three mantissa bits: quantum 2^(e - 3)
    let scaled = a * ((3 - e) as f64).exp2();
    let mut r = scaled.round_ties_even() as u32;
    if r == 16 {
        e += 1;
        r = 8;
    }
    if r == 0 {
        return sign;
    }
    let byte = if r < 8 {
        // subnormal: exponent field 0
        r as u8
    } else {
        (((e + EXP_BIAS) as u8) << 3) | (r - 8) as u8
    };
    if byte > E4M3_MAX_BYTE {
        sign | E4M3_MAX_BYTE
    } else {
        sign | byte
    }
}

/// Value of an E4M3 byte; `None` for the two NaN patterns.
pub fn e4m3_to_f64(b: u8) -> Option<f64> {
    if b & 0x7F == 0x7F {
        return None;
    }
    let sign = if b & 0x80 != 0 { -1.0 } else { 1.0 };
    let e = ((b >> 3) & 0x0F) as i32;
    let m = (b & 0x07) as f64;
    let mag = if e == 0 {
        m / 8.0 * (MIN_EXP as f64).exp2()
    } else {
        (1.0 + m / 8.0) * ((e - EXP_BIAS) as f64).exp2()
    };
    Some(sign * mag)
}

/// A one-tensor raw file of `n` seeded alpha-stable samples quantized to E4M3.
pub fn synth(alpha: f64, gamma: f64, n: usize, seed: u64) -> Result<RawTensorFile> {
    let samples = sample_stable(alpha, gamma, n, seed)?;
    let data = samples.iter().map(|&x| f64_to_e4m3(x)).collect();
    Ok(RawTensorFile {
        tensors: vec![RawTensor {
            name: "synthetic".into(),
            dims: vec![n as u64],
            data,
        }],
    })
}
