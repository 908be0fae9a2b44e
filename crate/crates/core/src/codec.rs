//! Exponent bitstream encoding with per-thread synchronization metadata,
//! and the two decoders: a sequential reference walk and the block-parallel
//! decoder.
//!
//! The stream is cut into 8-byte thread windows, `T` windows per block. A
//! symbol belongs to the window its codeword starts in. Each window carries
//! a 4-bit gap, the bit offset of its first owned codeword, and each block
//! carries the number of symbols owned by the blocks before it (`outpos`).
//! With those two pieces of metadata every thread finds its codeword
//! boundaries and output range on its own.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::entropy::ExponentHistogram;
use crate::error::{Error, Result};
use crate::fp8::{self, NUM_SYMBOLS};
use crate::huffman::{self, CodeTable};
use crate::lut::{self, CascadedLut};

/// Bytes per thread window.
pub const BYTES_PER_THREAD: usize = 8;
/// Extra bytes each thread loads past its window.
pub const LOOKAHEAD_BYTES: usize = 2;
pub const WINDOW_BITS: u64 = 8 * BYTES_PER_THREAD as u64;
pub const DEFAULT_THREADS_PER_BLOCK: u32 = 256;
pub const MAX_THREADS_PER_BLOCK: u32 = 1024;

pub fn check_threads_per_block(t: u32) -> Result<()> {
    if t.is_power_of_two() && t <= MAX_THREADS_PER_BLOCK {
        Ok(())
    } else {
        Err(Error::InvalidThreadsPerBlock(t))
    }
}

/// Thread and block layout of an encoded stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGeometry {
    pub threads_per_block: u32,
    pub n_blocks: usize,
}

impl BlockGeometry {
    /// Geometry covering `data_bytes` bytes of bitstream.
    pub fn for_bytes(threads_per_block: u32, data_bytes: usize) -> Result<Self> {
        check_threads_per_block(threads_per_block)?;
        let block_bytes = threads_per_block as usize * BYTES_PER_THREAD;
        Ok(Self {
            threads_per_block,
            n_blocks: data_bytes.div_ceil(block_bytes),
        })
    }

    pub fn bytes_per_thread(&self) -> usize {
        BYTES_PER_THREAD
    }

    pub fn n_threads(&self) -> usize {
        self.n_blocks * self.threads_per_block as usize
    }

    pub fn encoded_len(&self) -> usize {
        self.n_threads() * BYTES_PER_THREAD + LOOKAHEAD_BYTES
    }

    pub fn gaps_len(&self) -> usize {
        self.n_threads().div_ceil(2)
    }
}

/// Bitstream and metadata for one exponent stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedStream {
    pub n_elem: usize,
    pub geometry: BlockGeometry,
    /// Bit length of the concatenated codewords, before padding.
    pub bit_len: u64,
    pub encoded: Vec<u8>,
    /// 4-bit gaps, even thread in the high nibble.
    pub gaps: Vec<u8>,
    pub outpos: Vec<u64>,
}

impl EncodedStream {
    #[inline]
    pub fn gap(&self, thread: usize) -> u8 {
        (self.gaps[thread / 2] >> (4 - (thread % 2) * 4)) & 0x0F
    }

    /// Loads a thread's window plus lookahead; bytes past the end read as 0.
    pub fn thread_window(&self, thread: usize) -> [u8; BYTES_PER_THREAD + LOOKAHEAD_BYTES] {
        let mut buf = [0u8; BYTES_PER_THREAD + LOOKAHEAD_BYTES];
        let start = thread * BYTES_PER_THREAD;
        if start < self.encoded.len() {
            let end = (start + buf.len()).min(self.encoded.len());
            buf[..end - start].copy_from_slice(&self.encoded[start..end]);
        }
        buf
    }
}

/// A fully encoded FP8 tensor: code lengths, exponent stream and the packed
/// sign/mantissa nibbles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedTensor {
    /// All zero only for an empty tensor.
    pub lengths: [u8; NUM_SYMBOLS],
    pub stream: EncodedStream,
    pub packed: Vec<u8>,
}

impl EncodedTensor {
    pub fn n_elem(&self) -> usize {
        self.stream.n_elem
    }

    pub fn code_table(&self) -> Result<Option<CodeTable>> {
        if self.stream.n_elem == 0 {
            return Ok(None);
        }
        huffman::canonical_codes(self.lengths).map(Some)
    }

    /// Rebuilds the decode table from the stored lengths.
    pub fn lut(&self) -> Result<Option<CascadedLut>> {
        match self.code_table()? {
            Some(t) => lut::build_lut(&t).map(Some),
            None => Ok(None),
        }
    }

    /// Payload bytes: bitstream, gaps, outpos counters and nibbles.
    pub fn payload_bytes(&self) -> usize {
        self.stream.encoded.len()
            + self.stream.gaps.len()
            + 8 * self.stream.outpos.len()
            + self.packed.len()
    }
}

struct BitWriter<'a> {
    out: &'a mut [u8],
    pos: u64,
}

impl BitWriter<'_> {
    fn put(&mut self, code: u16, len: u8) {
        for i in (0..len).rev() {
            if (code >> i) & 1 == 1 {
                self.out[(self.pos / 8) as usize] |= 0x80 >> (self.pos % 8);
            }
            self.pos += 1;
        }
    }
}

/// Encodes an exponent stream under `table`.
pub fn encode(
    exponents: &[u8],
    table: &CodeTable,
    threads_per_block: u32,
) -> Result<EncodedStream> {
    check_threads_per_block(threads_per_block)?;
    let mut bit_len = 0u64;
    for &x in exponents {
        match table.length(x) {
            0 => return Err(Error::SymbolAbsent(x)),
            l => bit_len += l as u64,
        }
    }
    let geometry = BlockGeometry::for_bytes(threads_per_block, bit_len.div_ceil(8) as usize)?;
    let t = threads_per_block as usize;

    let mut encoded = vec![0u8; geometry.encoded_len()];
    let mut gaps = vec![0u8; geometry.gaps_len()];
    let mut block_counts = vec![0u64; geometry.n_blocks];

    let mut writer = BitWriter {
        out: &mut encoded,
        pos: 0,
    };
    let mut last_thread = None;
    for &x in exponents {
        let start = writer.pos;
        let thread = (start / WINDOW_BITS) as usize;
        if last_thread != Some(thread) {
            let gap = (start - thread as u64 * WINDOW_BITS) as u8;
            debug_assert!(gap < 16);
            gaps[thread / 2] |= gap << (4 - (thread % 2) * 4);
            last_thread = Some(thread);
        }
        block_counts[thread / t] += 1;
        writer.put(table.code(x).unwrap(), table.length(x));
    }

    let mut outpos = Vec::with_capacity(geometry.n_blocks + 1);
    outpos.push(0u64);
    for c in block_counts {
        outpos.push(outpos.last().unwrap() + c);
    }

    Ok(EncodedStream {
        n_elem: exponents.len(),
        geometry,
        bit_len,
        encoded,
        gaps,
        outpos,
    })
}

/// Histogram, code construction, stream encoding and nibble packing.
pub fn encode_tensor(bytes: &[u8], threads_per_block: u32) -> Result<EncodedTensor> {
    let (exponents, packed) = fp8::split_tensor(bytes);
    if bytes.is_empty() {
        let stream = EncodedStream {
            n_elem: 0,
            geometry: BlockGeometry::for_bytes(threads_per_block, 0)?,
            bit_len: 0,
            encoded: vec![0; LOOKAHEAD_BYTES],
            gaps: Vec::new(),
            outpos: vec![0],
        };
        return Ok(EncodedTensor {
            lengths: [0; NUM_SYMBOLS],
            stream,
            packed,
        });
    }
    let table = huffman::build_code(&ExponentHistogram::from_symbols(&exponents))?;
    encode_tensor_with(&exponents, packed, &table, threads_per_block)
}

/// Encodes with a caller-supplied code table.
pub fn encode_tensor_with(
    exponents: &[u8],
    packed: Vec<u8>,
    table: &CodeTable,
    threads_per_block: u32,
) -> Result<EncodedTensor> {
    let stream = encode(exponents, table, threads_per_block)?;
    Ok(EncodedTensor {
        lengths: *table.lengths(),
        stream,
        packed,
    })
}

/// Reference decoder: walks the stream from bit 0.
pub fn decode_sequential(
    stream: &EncodedStream,
    lut: &CascadedLut,
    n_elem: usize,
) -> Result<Vec<u8>> {
    let total_bits = stream.encoded.len() as u64 * 8;
    let mut out = Vec::with_capacity(n_elem);
    let mut pos = 0u64;
    while out.len() < n_elem {
        let (x, len) = lut.decode_one(peek16(&stream.encoded, pos));
        pos += len as u64;
        if pos > total_bits {
            return Err(Error::TruncatedStream {
                decoded: out.len(),
                expected: n_elem,
            });
        }
        out.push(x);
    }
    Ok(out)
}

/// 16 bits starting at bit `pos`, MSB-aligned; missing bits read as 0.
fn peek16(bytes: &[u8], pos: u64) -> u16 {
    let byte = (pos / 8) as usize;
    let mut w = 0u32;
    for i in 0..3 {
        w = (w << 8) | *bytes.get(byte + i).unwrap_or(&0) as u32;
    }
    ((w << (pos % 8)) >> 8) as u16
}

/// Per-thread decode registers: 64-bit head, 16-bit tail and the count of
/// bits consumed from the head (`free`).
struct ThreadState {
    head: u64,
    tail: u16,
    free: u32,
}

impl ThreadState {
    fn load(window: &[u8; BYTES_PER_THREAD + LOOKAHEAD_BYTES], gap: u8) -> Self {
        let head = u64::from_be_bytes(window[..8].try_into().unwrap());
        let tail = u16::from_be_bytes([window[8], window[9]]);
        Self {
            head: head << gap,
            tail,
            free: gap as u32,
        }
    }

    #[inline]
    fn decode(&mut self, lut: &CascadedLut) -> u8 {
        let (x, len) = lut.decode_one((self.head >> 48) as u16);
        self.head <<= len;
        self.free += len as u32;
        x
    }

    /// Moves the tail in below the remaining head bits. Needs `free >= 16`.
    #[inline]
    fn stitch(&mut self) {
        self.head |= (self.tail as u64) << (self.free - 16);
        self.free -= 16;
    }
}

/// Phase 1: counts the codewords starting inside a thread's 64-bit window.
pub fn count_phase(
    window: &[u8; BYTES_PER_THREAD + LOOKAHEAD_BYTES],
    gap: u8,
    lut: &CascadedLut,
) -> u32 {
    let mut st = ThreadState::load(window, gap);
    let mut count = 0;
    while st.free < 16 {
        st.decode(lut);
        count += 1;
    }
    st.stitch();
    while 2 + (st.free as usize) / 8 < BYTES_PER_THREAD {
        st.decode(lut);
        count += 1;
    }
    count
}

/// Phase 2 for one thread: decodes symbols into `staging[o_start - o_base..o_end - o_base]`,
/// assembling each with its sign/mantissa nibble. Returns the number written.
fn decode_phase(
    window: &[u8; BYTES_PER_THREAD + LOOKAHEAD_BYTES],
    gap: u8,
    lut: &CascadedLut,
    packed: &[u8],
    mut o_start: u64,
    o_end: u64,
    o_base: u64,
    staging: &mut [u8],
) -> usize {
    let first = o_start;
    let mut st = ThreadState::load(window, gap);
    let mut emit = |st: &mut ThreadState, o: u64| {
        let x = st.decode(lut);
        let q = fp8::nibble_high(packed, o as usize);
        staging[(o - o_base) as usize] = fp8::assemble(x, q);
    };
    while st.free < 16 && o_start < o_end {
        emit(&mut st, o_start);
        o_start += 1;
    }
    if o_start < o_end {
        st.stitch();
    }
    while o_start < o_end {
        emit(&mut st, o_start);
        o_start += 1;
    }
    (o_start - first) as usize
}

/// Work-efficient exclusive scan (up-sweep then down-sweep) in place.
/// `values.len()` must be a power of two.
pub fn blelloch_exclusive_scan(values: &mut [u64]) {
    let n = values.len();
    debug_assert!(n.is_power_of_two());
    let mut stride = 2;
    while stride <= n {
        for i in (0..n).step_by(stride) {
            values[i + stride - 1] += values[i + stride / 2 - 1];
        }
        stride *= 2;
    }
    values[n - 1] = 0;
    stride = n;
    while stride >= 2 {
        for i in (0..n).step_by(stride) {
            let left = values[i + stride / 2 - 1];
            values[i + stride / 2 - 1] = values[i + stride - 1];
            values[i + stride - 1] += left;
        }
        stride /= 2;
    }
}

/// Order in which the simulated threads of a block run within each phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    InOrder,
    Reversed,
    /// Independent random permutation per block and per phase.
    Shuffled(u64),
}

impl Schedule {
    fn order(&self, block: usize, phase: u64, t: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..t).collect();
        match *self {
            Schedule::InOrder => {}
            Schedule::Reversed => order.reverse(),
            Schedule::Shuffled(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((block as u64) << 2) ^ phase);
                order.shuffle(&mut rng);
            }
        }
        order
    }
}

/// Per-block trace used by tests to check phase agreement.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockTrace {
    pub counts: Vec<u32>,
    pub written: Vec<usize>,
    pub accum: Vec<u64>,
}

/// Runs one block: counting, prefix sum, staged decode, write-back into
/// `out`, which is this block's slice `outputs[outpos[b]..outpos[b+1]]`.
fn decode_block(
    enc: &EncodedTensor,
    lut: &CascadedLut,
    block: usize,
    schedule: Schedule,
    staging: &mut Vec<u8>,
    out: &mut [u8],
) -> BlockTrace {
    let stream = &enc.stream;
    let t = stream.geometry.threads_per_block as usize;
    let n_elem = stream.n_elem as u64;
    let windows: Vec<_> = (0..t)
        .map(|i| stream.thread_window(block * t + i))
        .collect();
    let gaps: Vec<u8> = (0..t).map(|i| stream.gap(block * t + i)).collect();

    // phase 1
    let mut counts = vec![0u32; t];
    for i in schedule.order(block, 1, t) {
        counts[i] = count_phase(&windows[i], gaps[i], lut);
    }

    // block prefix sum; barrier
    let mut accum = vec![0u64; t + 1];
    for (a, &c) in accum.iter_mut().zip(counts.iter()) {
        *a = c as u64;
    }
    accum[0] += stream.outpos[block];
    blelloch_exclusive_scan(&mut accum[..t]);
    accum[0] = stream.outpos[block];
    accum[t] = stream.outpos[block + 1];
    let o_base = accum[0];
    let o_limit = n_elem.min(accum[t]);

    // phase 2 into the staging buffer
    staging.clear();
    staging.resize((accum[t] - o_base) as usize, 0);
    let mut written = vec![0usize; t];
    let mut ranges = vec![(0u64, 0u64); t];
    for i in schedule.order(block, 2, t) {
        let o_start = accum[i];
        let o_end = (o_start + counts[i] as u64).min(o_limit);
        ranges[i] = (o_start, o_end.max(o_start));
        written[i] = decode_phase(
            &windows[i],
            gaps[i],
            lut,
            &enc.packed,
            o_start,
            o_end,
            o_base,
            staging,
        );
    }

    // barrier; write-back
    for i in schedule.order(block, 3, t) {
        let (s, e) = ranges[i];
        if s < e {
            let (s, e) = ((s - o_base) as usize, (e - o_base) as usize);
            out[s..e].copy_from_slice(&staging[s..e]);
        }
    }

    BlockTrace {
        counts,
        written,
        accum,
    }
}

fn check_stream(enc: &EncodedTensor, out_len: usize) -> Result<()> {
    let s = &enc.stream;
    let g = s.geometry;
    if out_len != s.n_elem {
        return Err(Error::format(format!(
            "output buffer holds {out_len} bytes, tensor has {}",
            s.n_elem
        )));
    }
    if s.encoded.len() != g.encoded_len()
        || s.gaps.len() != g.gaps_len()
        || s.outpos.len() != g.n_blocks + 1
    {
        return Err(Error::format(
            "section lengths disagree with block geometry",
        ));
    }
    if s.outpos[0] != 0 || *s.outpos.last().unwrap() != s.n_elem as u64 {
        return Err(Error::format("outpos does not span the tensor"));
    }
    let per_block_max = g.threads_per_block as u64 * WINDOW_BITS;
    if s.outpos
        .windows(2)
        .any(|w| w[1] < w[0] || w[1] - w[0] > per_block_max)
    {
        return Err(Error::format("outpos is not a valid monotone sequence"));
    }
    if enc.packed.len() != s.n_elem.div_ceil(2) {
        return Err(Error::format("packed nibble section has the wrong length"));
    }
    Ok(())
}

/// Splits `out` into per-block slices according to `outpos`.
fn block_slices<'a>(mut out: &'a mut [u8], outpos: &[u64]) -> Vec<&'a mut [u8]> {
    let mut slices = Vec::with_capacity(outpos.len().saturating_sub(1));
    for w in outpos.windows(2) {
        let (head, rest) = std::mem::take(&mut out).split_at_mut((w[1] - w[0]) as usize);
        slices.push(head);
        out = rest;
    }
    slices
}

/// Block-parallel decode into `out` (length `n_elem`). Blocks run on the
/// rayon pool; each worker reuses one staging buffer.
pub fn decode_parallel_into(enc: &EncodedTensor, lut: &CascadedLut, out: &mut [u8]) -> Result<()> {
    decode_parallel_scheduled(enc, lut, out, Schedule::InOrder).map(|_| ())
}

/// Like [`decode_parallel_into`] with an explicit intra-block thread order.
/// Returns the per-block traces.
pub fn decode_parallel_scheduled(
    enc: &EncodedTensor,
    lut: &CascadedLut,
    out: &mut [u8],
    schedule: Schedule,
) -> Result<Vec<BlockTrace>> {
    check_stream(enc, out.len())?;
    let stream = &enc.stream;
    let staging_cap = stream.geometry.threads_per_block as usize * WINDOW_BITS as usize;
    let slices = block_slices(out, &stream.outpos);
    let mut jobs: Vec<(usize, &mut [u8])> = slices.into_iter().enumerate().collect();
    if let Schedule::Shuffled(seed) = schedule {
        jobs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut traces: Vec<(usize, BlockTrace)> = jobs
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(staging_cap),
            |staging, (b, slice)| (b, decode_block(enc, lut, b, schedule, staging, slice)),
        )
        .collect();
    traces.sort_by_key(|(b, _)| *b);
    Ok(traces.into_iter().map(|(_, t)| t).collect())
}

/// Block-parallel decode of a whole tensor back to FP8 bytes.
pub fn decode_parallel(enc: &EncodedTensor, lut: Option<&CascadedLut>) -> Result<Vec<u8>> {
    let mut out = vec![0u8; enc.n_elem()];
    match lut {
        Some(lut) => decode_parallel_into(enc, lut, &mut out)?,
        None if enc.n_elem() == 0 => {}
        None => return Err(Error::format("non-empty tensor needs a decode table")),
    }
    Ok(out)
}

/// Sequential decode followed by nibble reassembly.
pub fn decode_reference(enc: &EncodedTensor) -> Result<Vec<u8>> {
    match enc.lut()? {
        Some(lut) => {
            let exps = decode_sequential(&enc.stream, &lut, enc.n_elem())?;
            Ok(fp8::assemble_tensor(&exps, &enc.packed))
        }
        None => Ok(Vec::new()),
    }
}

/// Rebuilds the table from the stored lengths and decodes in parallel.
pub fn decode_tensor(enc: &EncodedTensor) -> Result<Vec<u8>> {
    let lut = enc.lut()?;
    decode_parallel(enc, lut.as_ref())
}
