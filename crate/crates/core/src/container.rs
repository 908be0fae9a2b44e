//! On-disk formats and the file-level operations behind the CLI.
//!
//! Raw tensor file (`FP8R`), little-endian:
//!
//! ```text
//! magic "FP8R" | version u32 | count u32
//! per tensor: name_len u16 | name | rank u8 | dims u64 x rank | data (prod dims bytes)
//! ```
//!
//! Compressed container (`ECF8`), little-endian:
//!
//! ```text
//! magic "ECF8" | version u32 | count u32
//! per tensor: name_len u16 | name | rank u8 | dims u64 x rank | n_elem u64 | T u32
//!             | lengths [u8; 16] | encoded_len u64 | encoded | gaps_len u64 | gaps
//!             | outpos u64 x (n_blocks + 1) | packed_len u64 | packed
//! ```
//!
//! `n_blocks` follows from `encoded_len = n_blocks * T * 8 + 2`. The decode
//! table is rebuilt from `lengths` on load.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use serde::Serialize;

use crate::codec::{
    self, BlockGeometry, EncodedStream, EncodedTensor, BYTES_PER_THREAD, LOOKAHEAD_BYTES,
};
use crate::entropy::{self, EntropyReport, ExponentHistogram};
use crate::error::{Error, Result};
use crate::fp8::NUM_SYMBOLS;
use crate::huffman;

pub const RAW_MAGIC: [u8; 4] = *b"FP8R";
pub const ECF8_MAGIC: [u8; 4] = *b"ECF8";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: Vec<u8>,
}

impl RawTensor {
    pub fn n_elem(&self) -> u64 {
        self.dims.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawTensorFile {
    pub tensors: Vec<RawTensor>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedTensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub encoded: EncodedTensor,
}

impl CompressedTensor {
    /// Serialized size of this tensor's record in the container.
    pub fn record_bytes(&self) -> usize {
        header_bytes(&self.name, &self.dims)
            + 8
            + 4
            + NUM_SYMBOLS
            + 8 * 3
            + self.encoded.payload_bytes()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Ecf8Container {
    pub tensors: Vec<CompressedTensor>,
}

fn header_bytes(name: &str, dims: &[u64]) -> usize {
    2 + name.len() + 1 + 8 * dims.len()
}

fn write_name_dims<W: Write>(w: &mut W, name: &str, dims: &[u64]) -> Result<()> {
    let len = u16::try_from(name.len())
        .map_err(|_| Error::format("tensor name longer than 65535 bytes"))?;
    let rank = u8::try_from(dims.len()).map_err(|_| Error::format("tensor rank above 255"))?;
    w.write_u16::<LE>(len)?;
    w.write_all(name.as_bytes())?;
    w.write_u8(rank)?;
    for &d in dims {
        w.write_u64::<LE>(d)?;
    }
    Ok(())
}

/// Maps a short read to a format error; other I/O errors pass through.
fn truncation(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::format("unexpected end of file")
    } else {
        Error::Io(e)
    }
}

fn read_name_dims<R: Read>(r: &mut R) -> Result<(String, Vec<u64>)> {
    let len = r.read_u16::<LE>().map_err(truncation)? as usize;
    let mut name = vec![0u8; len];
    r.read_exact(&mut name).map_err(truncation)?;
    let name = String::from_utf8(name).map_err(|_| Error::format("tensor name is not UTF-8"))?;
    let rank = r.read_u8().map_err(truncation)? as usize;
    let dims = (0..rank)
        .map(|_| r.read_u64::<LE>().map_err(truncation))
        .collect::<Result<Vec<_>>>()?;
    Ok((name, dims))
}

fn read_header<R: Read>(r: &mut R, magic: [u8; 4]) -> Result<u32> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m).map_err(truncation)?;
    if m != magic {
        return Err(Error::format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = r.read_u32::<LE>().map_err(truncation)?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    r.read_u32::<LE>().map_err(truncation)
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::format("trailing bytes after last tensor")),
    }
}

/// Reads exactly `len` bytes without trusting `len` for the allocation.
fn read_section<R: Read>(r: &mut R, len: u64) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let got = r.take(len).read_to_end(&mut buf)?;
    if got as u64 != len {
        return Err(Error::format("section extends past end of file"));
    }
    Ok(buf)
}

fn n_elem_of(dims: &[u64]) -> Result<u64> {
    dims.iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format("dimension product overflows"))
}

impl RawTensorFile {
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let count = read_header(r, RAW_MAGIC)?;
        let mut tensors = Vec::new();
        for index in 0..count as usize {
            let tensor = (|| {
                let (name, dims) = read_name_dims(r)?;
                let n = n_elem_of(&dims)?;
                let data = read_section(r, n)?;
                Ok(RawTensor { name, dims, data })
            })()
            .map_err(|e: Error| e.in_tensor(index, "?"))?;
            tensors.push(tensor);
        }
        expect_eof(r)?;
        Ok(Self { tensors })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut out = RawFileWriter::new(w, self.tensors.len())?;
        for t in &self.tensors {
            out.write_tensor(&t.name, &t.dims, &t.data)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut v = Vec::new();
        self.write_to(&mut v)?;
        Ok(v)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Streams tensors into a raw file one at a time.
pub struct RawFileWriter<W: Write> {
    inner: W,
}

impl<W: Write> RawFileWriter<W> {
    pub fn new(mut inner: W, count: usize) -> Result<Self> {
        let count = u32::try_from(count).map_err(|_| Error::format("too many tensors"))?;
        inner.write_all(&RAW_MAGIC)?;
        inner.write_u32::<LE>(FORMAT_VERSION)?;
        inner.write_u32::<LE>(count)?;
        Ok(Self { inner })
    }

    pub fn write_tensor(&mut self, name: &str, dims: &[u64], data: &[u8]) -> Result<()> {
        if n_elem_of(dims)? != data.len() as u64 {
            return Err(Error::format(format!(
                "tensor {name}: dims do not match data length"
            )));
        }
        write_name_dims(&mut self.inner, name, dims)?;
        self.inner.write_all(data)?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

impl Ecf8Container {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let count =
            u32::try_from(self.tensors.len()).map_err(|_| Error::format("too many tensors"))?;
        w.write_all(&ECF8_MAGIC)?;
        w.write_u32::<LE>(FORMAT_VERSION)?;
        w.write_u32::<LE>(count)?;
        for t in &self.tensors {
            let e = &t.encoded;
            let s = &e.stream;
            write_name_dims(w, &t.name, &t.dims)?;
            w.write_u64::<LE>(s.n_elem as u64)?;
            w.write_u32::<LE>(s.geometry.threads_per_block)?;
            w.write_all(&e.lengths)?;
            w.write_u64::<LE>(s.encoded.len() as u64)?;
            w.write_all(&s.encoded)?;
            w.write_u64::<LE>(s.gaps.len() as u64)?;
            w.write_all(&s.gaps)?;
            for &o in &s.outpos {
                w.write_u64::<LE>(o)?;
            }
            w.write_u64::<LE>(e.packed.len() as u64)?;
            w.write_all(&e.packed)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let count = read_header(r, ECF8_MAGIC)?;
        let mut tensors = Vec::new();
        for index in 0..count as usize {
            let t = read_compressed(r).map_err(|e| e.in_tensor(index, "?"))?;
            validate(&t).map_err(|e| e.in_tensor(index, &t.name))?;
            tensors.push(t);
        }
        expect_eof(r)?;
        Ok(Self { tensors })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut v = Vec::new();
        self.write_to(&mut v)?;
        Ok(v)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn max_n_elem(&self) -> usize {
        self.tensors
            .iter()
            .map(|t| t.encoded.n_elem())
            .max()
            .unwrap_or(0)
    }
}

fn read_compressed<R: Read>(r: &mut R) -> Result<CompressedTensor> {
    let (name, dims) = read_name_dims(r)?;
    let n_elem = r.read_u64::<LE>().map_err(truncation)?;
    let threads_per_block = r.read_u32::<LE>().map_err(truncation)?;
    codec::check_threads_per_block(threads_per_block)?;
    let mut lengths = [0u8; NUM_SYMBOLS];
    r.read_exact(&mut lengths).map_err(truncation)?;

    let encoded_len = r.read_u64::<LE>().map_err(truncation)?;
    let block_bytes = threads_per_block as u64 * BYTES_PER_THREAD as u64;
    if encoded_len < LOOKAHEAD_BYTES as u64
        || (encoded_len - LOOKAHEAD_BYTES as u64) % block_bytes != 0
    {
        return Err(Error::format(format!(
            "encoded length {encoded_len} is not whole blocks plus lookahead"
        )));
    }
    let n_blocks = ((encoded_len - LOOKAHEAD_BYTES as u64) / block_bytes) as usize;
    let encoded = read_section(r, encoded_len)?;
    let gaps_len = r.read_u64::<LE>().map_err(truncation)?;
    let gaps = read_section(r, gaps_len)?;
    let outpos = (0..=n_blocks)
        .map(|_| r.read_u64::<LE>().map_err(truncation))
        .collect::<Result<Vec<_>>>()?;
    let packed_len = r.read_u64::<LE>().map_err(truncation)?;
    let packed = read_section(r, packed_len)?;

    let n_elem =
        usize::try_from(n_elem).map_err(|_| Error::format("n_elem does not fit in memory"))?;
    let geometry = BlockGeometry {
        threads_per_block,
        n_blocks,
    };
    Ok(CompressedTensor {
        name,
        dims,
        encoded: EncodedTensor {
            lengths,
            stream: EncodedStream {
                n_elem,
                geometry,
                bit_len: 0,
                encoded,
                gaps,
                outpos,
            },
            packed,
        },
    })
}

/// Section-length and code checks applied on load.
fn validate(t: &CompressedTensor) -> Result<()> {
    let e = &t.encoded;
    let s = &e.stream;
    if n_elem_of(&t.dims)? != s.n_elem as u64 {
        return Err(Error::format("n_elem disagrees with dims"));
    }
    if s.gaps.len() != s.geometry.gaps_len() {
        return Err(Error::format(format!(
            "gaps section is {} bytes, geometry needs {}",
            s.gaps.len(),
            s.geometry.gaps_len()
        )));
    }
    if e.packed.len() != s.n_elem.div_ceil(2) {
        return Err(Error::format("packed nibble section has the wrong length"));
    }
    if s.outpos.first() != Some(&0) || s.outpos.last() != Some(&(s.n_elem as u64)) {
        return Err(Error::format("outpos does not run from 0 to n_elem"));
    }
    let per_block_max = s.geometry.threads_per_block as u64 * codec::WINDOW_BITS;
    if s.outpos
        .windows(2)
        .any(|w| w[1] < w[0] || w[1] - w[0] > per_block_max)
    {
        return Err(Error::format(
            "outpos is not monotone within block capacity",
        ));
    }
    if s.n_elem == 0 {
        if e.lengths.iter().any(|&l| l != 0) {
            return Err(Error::format("empty tensor carries code lengths"));
        }
    } else {
        huffman::canonical_codes(e.lengths)?;
    }
    Ok(())
}

/// Per-tensor compression outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorSummary {
    pub name: String,
    pub original_bytes: u64,
    pub compressed_bytes: u64,
    pub ratio: f64,
    pub bits_per_symbol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct CompressSummary {
    pub tensors: Vec<TensorSummary>,
    pub original_bytes: u64,
    pub compressed_bytes: u64,
}

impl CompressSummary {
    /// `1 - compressed / original` over all tensor records.
    pub fn savings(&self) -> f64 {
        if self.original_bytes == 0 {
            0.0
        } else {
            1.0 - self.compressed_bytes as f64 / self.original_bytes as f64
        }
    }
}

fn compress_tensor(t: &RawTensor, threads_per_block: u32) -> Result<CompressedTensor> {
    Ok(CompressedTensor {
        name: t.name.clone(),
        dims: t.dims.clone(),
        encoded: codec::encode_tensor(&t.data, threads_per_block)?,
    })
}

fn summarize(raw: &RawTensor, c: &CompressedTensor) -> TensorSummary {
    let original = (header_bytes(&raw.name, &raw.dims) + raw.data.len()) as u64;
    let compressed = c.record_bytes() as u64;
    let e = &c.encoded;
    let bps = if e.n_elem() == 0 {
        0.0
    } else {
        huffman::expected_length(
            &huffman::canonical_codes(e.lengths).expect("lengths come from build_code"),
            &ExponentHistogram::from_fp8(&raw.data),
        )
    };
    TensorSummary {
        name: raw.name.clone(),
        original_bytes: original,
        compressed_bytes: compressed,
        ratio: if original == 0 {
            0.0
        } else {
            compressed as f64 / original as f64
        },
        bits_per_symbol: bps,
    }
}

/// Compresses every tensor (independently, on the rayon pool).
pub fn compress_file(
    raw: &RawTensorFile,
    threads_per_block: u32,
) -> Result<(Ecf8Container, CompressSummary)> {
    use rayon::prelude::*;
    codec::check_threads_per_block(threads_per_block)?;
    let tensors = raw
        .tensors
        .par_iter()
        .enumerate()
        .map(|(i, t)| compress_tensor(t, threads_per_block).map_err(|e| e.in_tensor(i, &t.name)))
        .collect::<Result<Vec<_>>>()?;
    let mut summary = CompressSummary::default();
    for (r, c) in raw.tensors.iter().zip(&tensors) {
        let s = summarize(r, c);
        summary.original_bytes += s.original_bytes;
        summary.compressed_bytes += s.compressed_bytes;
        summary.tensors.push(s);
    }
    Ok((Ecf8Container { tensors }, summary))
}

pub fn compress(input: &Path, output: &Path, threads_per_block: u32) -> Result<CompressSummary> {
    let raw = RawTensorFile::load(input)?;
    let (container, summary) = compress_file(&raw, threads_per_block)?;
    container.save(output)?;
    Ok(summary)
}

/// One decode output buffer shared by all tensors, grown only when a
/// tensor exceeds its capacity. Counts its allocations.
#[derive(Debug, Default)]
pub struct ReusableBuffer {
    buf: Vec<u8>,
    allocations: usize,
}

impl ReusableBuffer {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            buf: vec![0; capacity],
            allocations: 1,
        }
    }

    pub fn capacity(&self) -> usize {
        self.buf.len()
    }

    pub fn allocations(&self) -> usize {
        self.allocations
    }

    /// The first `len` bytes, reallocating only if `len` exceeds capacity.
    pub fn slice_mut(&mut self, len: usize) -> &mut [u8] {
        if len > self.buf.len() {
            self.buf = vec![0; len];
            self.allocations += 1;
        }
        &mut self.buf[..len]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecompressStats {
    pub tensors: usize,
    pub buffer_capacity: usize,
    pub buffer_allocations: usize,
}

/// Decodes tensors one at a time through a single buffer sized to the
/// largest tensor, streaming each into `out` as a raw tensor file.
pub fn decompress_to<W: Write>(container: &Ecf8Container, out: W) -> Result<DecompressStats> {
    let mut buffer = ReusableBuffer::with_capacity(container.max_n_elem());
    let mut writer = RawFileWriter::new(out, container.tensors.len())?;
    for (i, t) in container.tensors.iter().enumerate() {
        let n = t.encoded.n_elem();
        let slice = buffer.slice_mut(n);
        let tensor_err = |e: Error| e.in_tensor(i, &t.name);
        if let Some(lut) = t.encoded.lut().map_err(tensor_err)? {
            codec::decode_parallel_into(&t.encoded, &lut, slice).map_err(tensor_err)?;
        }
        writer.write_tensor(&t.name, &t.dims, slice)?;
    }
    Ok(DecompressStats {
        tensors: container.tensors.len(),
        buffer_capacity: buffer.capacity(),
        buffer_allocations: buffer.allocations(),
    })
}

pub fn decompress(input: &Path, output: &Path) -> Result<DecompressStats> {
    let container = Ecf8Container::load(input)?;
    let mut w = BufWriter::new(File::create(output)?);
    let stats = decompress_to(&container, &mut w)?;
    w.flush()?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyOutcome {
    pub tensor: String,
    pub threads_per_block: u32,
    /// First index where either decoder disagrees with the input.
    pub first_mismatch: Option<usize>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.first_mismatch.is_none()
    }
}

fn first_difference(a: &[u8], b: &[u8]) -> Option<usize> {
    a.iter()
        .zip(b)
        .position(|(x, y)| x != y)
        .or_else(|| (a.len() != b.len()).then(|| a.len().min(b.len())))
}

/// Encodes in memory and checks both decoders against the input bytes.
pub fn verify_tensor(name: &str, data: &[u8], threads_per_block: u32) -> Result<VerifyOutcome> {
    let enc = codec::encode_tensor(data, threads_per_block)?;
    let sequential = codec::decode_reference(&enc)?;
    let parallel = codec::decode_tensor(&enc)?;
    let first_mismatch =
        first_difference(&parallel, &sequential).or_else(|| first_difference(&parallel, data));
    Ok(VerifyOutcome {
        tensor: name.to_string(),
        threads_per_block,
        first_mismatch,
    })
}

pub fn verify_file(raw: &RawTensorFile, thread_counts: &[u32]) -> Result<Vec<VerifyOutcome>> {
    let mut out = Vec::new();
    for (i, t) in raw.tensors.iter().enumerate() {
        for &tpb in thread_counts {
            out.push(verify_tensor(&t.name, &t.data, tpb).map_err(|e| e.in_tensor(i, &t.name))?);
        }
    }
    Ok(out)
}

pub fn verify(input: &Path, thread_counts: &[u32]) -> Result<Vec<VerifyOutcome>> {
    verify_file(&RawTensorFile::load(input)?, thread_counts)
}

/// Entropy report for one tensor; `actual_savings` is measured by encoding
/// with `threads_per_block`.
pub fn tensor_report(t: &RawTensor, threads_per_block: u32) -> Result<EntropyReport> {
    let hist = ExponentHistogram::from_fp8(&t.data);
    let model_bounds = entropy::entropy_bounds(2.0)?;
    let floor_bits = entropy::compression_floor_bits();
    if t.data.is_empty() {
        return Ok(EntropyReport {
            name: t.name.clone(),
            n_elem: 0,
            entropy_bits: None,
            bits_per_symbol: None,
            projected_savings: None,
            actual_savings: None,
            model_bounds,
            floor_bits,
            histogram: hist.counts,
        });
    }
    let table = huffman::build_code(&hist)?;
    let bps = huffman::expected_length(&table, &hist);
    let compressed = compress_tensor(t, threads_per_block)?;
    let actual = 1.0
        - compressed.record_bytes() as f64 / (header_bytes(&t.name, &t.dims) + t.data.len()) as f64;
    Ok(EntropyReport {
        name: t.name.clone(),
        n_elem: t.data.len() as u64,
        entropy_bits: Some(hist.shannon_entropy()?),
        bits_per_symbol: Some(bps),
        projected_savings: Some((8.0 - (1.0 + 3.0 + bps)) / 8.0),
        actual_savings: Some(actual),
        model_bounds,
        floor_bits,
        histogram: hist.counts,
    })
}

pub fn stats_file(raw: &RawTensorFile, threads_per_block: u32) -> Result<Vec<EntropyReport>> {
    raw.tensors
        .iter()
        .enumerate()
        .map(|(i, t)| tensor_report(t, threads_per_block).map_err(|e| e.in_tensor(i, &t.name)))
        .collect()
}

pub fn stats(input: &Path) -> Result<Vec<EntropyReport>> {
    stats_file(
        &RawTensorFile::load(input)?,
        codec::DEFAULT_THREADS_PER_BLOCK,
    )
}

/// CSV with columns `name, n_elem, entropy_bits, bits_per_symbol,
/// projected_savings, actual_savings`; empty cells for empty tensors.
pub fn write_stats_csv<W: Write>(reports: &[EntropyReport], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(io::Error::other(e));
    csv.write_record([
        "name",
        "n_elem",
        "entropy_bits",
        "bits_per_symbol",
        "projected_savings",
        "actual_savings",
    ])
    .map_err(csv_err)?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in reports {
        csv.write_record([
            r.name.clone(),
            r.n_elem.to_string(),
            cell(r.entropy_bits),
            cell(r.bits_per_symbol),
            cell(r.projected_savings),
            cell(r.actual_savings),
        ])
        .map_err(csv_err)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_stats_json<W: Write>(reports: &[EntropyReport], mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, reports).map_err(|e| Error::Io(io::Error::other(e)))?;
    writeln!(w)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_file() -> RawTensorFile {
        RawTensorFile {
            tensors: vec![
                RawTensor {
                    name: "a.weight".into(),
                    dims: vec![3, 5],
                    data: (0..15u8).map(|i| i.wrapping_mul(37)).collect(),
                },
                RawTensor {
                    name: "empty".into(),
                    dims: vec![0, 4],
                    data: vec![],
                },
                RawTensor {
                    name: "scalar".into(),
                    dims: vec![],
                    data: vec![0x7F],
                },
            ],
        }
    }

    #[test]
    fn raw_file_round_trip() {
        let f = sample_file();
        let bytes = f.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"FP8R");
        assert_eq!(RawTensorFile::from_bytes(&bytes).unwrap(), f);
    }

    #[test]
    fn raw_file_exact_layout() {
        let f = RawTensorFile {
            tensors: vec![RawTensor {
                name: "w".into(),
                dims: vec![2],
                data: vec![0xAB, 0xCD],
            }],
        };
        let expected: Vec<u8> = [
            &b"FP8R"[..],
            &1u32.to_le_bytes(),
            &1u32.to_le_bytes(),
            &1u16.to_le_bytes(),
            b"w",
            &[1u8],
            &2u64.to_le_bytes(),
            &[0xAB, 0xCD],
        ]
        .concat();
        assert_eq!(f.to_bytes().unwrap(), expected);
    }

    #[test]
    fn raw_file_rejects_malformed() {
        let bytes = sample_file().to_bytes().unwrap();
        assert!(matches!(
            RawTensorFile::from_bytes(b"NOPE"),
            Err(Error::Format(_))
        ));
        let cut = &bytes[..bytes.len() - 1];
        assert_eq!(RawTensorFile::from_bytes(cut).unwrap_err().exit_code(), 2);
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(RawTensorFile::from_bytes(&extra).is_err());
        let mut bad_version = bytes;
        bad_version[4] = 9;
        assert!(RawTensorFile::from_bytes(&bad_version).is_err());
    }

    #[test]
    fn container_round_trip() {
        let f = sample_file();
        let (c, summary) = compress_file(&f, 2).unwrap();
        assert_eq!(summary.tensors.len(), 3);
        let bytes = c.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"ECF8");
        let back = Ecf8Container::from_bytes(&bytes).unwrap();
        let mut out = Vec::new();
        decompress_to(&back, &mut out).unwrap();
        assert_eq!(out, f.to_bytes().unwrap());
        assert_eq!(summary.compressed_bytes as usize, bytes.len() - 12);
    }

    #[test]
    fn empty_container() {
        let (c, summary) = compress_file(&RawTensorFile::default(), 256).unwrap();
        assert!(summary.tensors.is_empty());
        assert_eq!(summary.savings(), 0.0);
        let bytes = c.to_bytes().unwrap();
        assert_eq!(bytes.len(), 12);
        let mut out = Vec::new();
        let stats = decompress_to(&Ecf8Container::from_bytes(&bytes).unwrap(), &mut out).unwrap();
        assert_eq!(stats.tensors, 0);
        assert_eq!(
            RawTensorFile::from_bytes(&out).unwrap(),
            RawTensorFile::default()
        );
    }

    #[test]
    fn corrupt_container_diagnostics() {
        let (c, _) = compress_file(&sample_file(), 2).unwrap();

        let mut kraft = c.clone();
        kraft.tensors[0].encoded.lengths = [1; 16];
        let err = Ecf8Container::from_bytes(&kraft.to_bytes().unwrap()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("tensor 0"), "{err}");

        let mut gaps = c.clone();
        gaps.tensors[0].encoded.stream.gaps.push(0);
        assert!(Ecf8Container::from_bytes(&gaps.to_bytes().unwrap()).is_err());

        let mut outpos = c.clone();
        *outpos.tensors[0].encoded.stream.outpos.last_mut().unwrap() += 1;
        assert!(Ecf8Container::from_bytes(&outpos.to_bytes().unwrap()).is_err());

        let mut tpb = c.to_bytes().unwrap();
        // T field of the first tensor: after header(12) + name/dims + n_elem
        let off = 12 + header_bytes("a.weight", &[3, 5]) + 8;
        tpb[off..off + 4].copy_from_slice(&3u32.to_le_bytes());
        assert!(Ecf8Container::from_bytes(&tpb).is_err());

        let bytes = c.to_bytes().unwrap();
        assert!(Ecf8Container::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn buffer_is_allocated_once() {
        let mut b = ReusableBuffer::with_capacity(100);
        for n in [10, 100, 0, 57] {
            assert_eq!(b.slice_mut(n).len(), n);
        }
        assert_eq!(b.allocations(), 1);
        b.slice_mut(101);
        assert_eq!(b.allocations(), 2);
    }

    #[test]
    fn verify_and_stats() {
        let f = sample_file();
        let outcomes = verify_file(&f, &[1, 2, 32, 256]).unwrap();
        assert_eq!(outcomes.len(), 12);
        assert!(outcomes.iter().all(VerifyOutcome::passed));

        let reports = stats_file(&f, 256).unwrap();
        assert_eq!(reports[1].entropy_bits, None);
        assert_eq!(reports[2].entropy_bits, Some(0.0));
        let mut csv = Vec::new();
        write_stats_csv(&reports, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "name,n_elem,entropy_bits,bits_per_symbol,projected_savings,actual_savings"
        );
        assert!(lines.nth(1).unwrap().starts_with("empty,0,,"));
        let mut json = Vec::new();
        write_stats_json(&reports, &mut json).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 3);
    }
}
