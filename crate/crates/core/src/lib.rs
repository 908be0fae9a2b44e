//! Lossless compression of FP8 (E4M3) weight tensors.
//!
//! Each weight byte is split into its 4-bit exponent and a 4-bit
//! sign/mantissa nibble. Exponents are entropy coded with a length-limited
//! canonical Huffman code and decoded through cascaded 8-bit lookup tables
//! by a block-parallel decoder; nibbles are stored verbatim.

pub mod codec;
pub mod container;
pub mod entropy;
mod error;
pub mod fp8;
pub mod huffman;
pub mod lut;
pub mod stable;
pub mod synth;

pub use error::{Error, Result};
