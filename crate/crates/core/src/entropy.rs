//! Adaptive binary range coder, exp-Golomb binarization, coefficient and
//! motion payload coding, and the bitstream container.
//!
//! The coder is a carry-propagating byte-wise range coder (64-bit low with a
//! pending-byte cache, 32-bit range) working entirely in integers, so
//! encoder and decoder are bit-exact mirrors on every platform. Contexts
//! hold a 16-bit probability of the symbol `1` and adapt by one shift-5 step
//! per coded bit; bypass bits halve the range and therefore cost exactly one
//! bit each.

use std::fs;
use std::path::Path;

use crate::motion::MotionField;
use crate::pixels::PixelFormat;
use crate::transformq::LevelBlock;
use crate::{Error, Result};

pub const PROB_BITS: u32 = 16;
pub const PROB_ONE: u32 = 1 << PROB_BITS;
pub const PROB_INIT: u16 = (PROB_ONE / 2) as u16;
const ADAPT_SHIFT: u32 = 5;
const TOP: u32 = 1 << 24;

/// Adaptive probability state for one binary decision.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct BinaryContext {
    /// p(one) in 1/65536 units; stays inside (0, 1) under any update path.
    pub p1: u16,
}

impl Default for BinaryContext {
    fn default() -> Self {
        BinaryContext { p1: PROB_INIT }
    }
}

impl BinaryContext {
    pub fn new() -> Self {
        Self::default()
    }

    /// p += (target - p) >> 5 with target 0 or 65536.
    #[inline]
    pub fn update(&mut self, bit: bool) {
        let p = self.p1 as u32;
        self.p1 = if bit {
            (p + ((PROB_ONE - p) >> ADAPT_SHIFT)) as u16
        } else {
            (p - (p >> ADAPT_SHIFT)) as u16
        };
    }
}

pub struct BitEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for BitEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl BitEncoder {
    pub fn new() -> Self {
        // cache_size starts at 1: the first shifted byte is always the zero
        // cache, which the decoder skips on init.
        BitEncoder { low: 0, range: u32::MAX, cache: 0, cache_size: 1, out: Vec::new() }
    }

    fn shift_low(&mut self) {
        let low32 = self.low as u32;
        if low32 < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (low32 >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = ((low32 & 0x00FF_FFFF) as u64) << 8;
    }

    #[inline]
    fn renorm(&mut self) {
        while self.range < TOP {
            self.shift_low();
            self.range <<= 8;
        }
    }

    /// Codes one bit against an adaptive context and updates it.
    pub fn encode_bit(&mut self, ctx: &mut BinaryContext, bit: bool) {
        let bound = (self.range >> PROB_BITS) * ctx.p1 as u32;
        if bit {
            self.range = bound;
        } else {
            self.low += bound as u64;
            self.range -= bound;
        }
        ctx.update(bit);
        self.renorm();
    }

    /// Equiprobable bit: exactly one bit of output.
    pub fn encode_bypass(&mut self, bit: bool) {
        let bound = self.range >> 1;
        if bit {
            self.range = bound;
        } else {
            self.low += bound as u64;
            self.range -= bound;
        }
        self.renorm();
    }

    /// Non-negative integer as order-0 exp-Golomb over bypass bits.
    pub fn encode_ue(&mut self, value: u32) {
        let x = value as u64 + 1;
        let bits = 64 - x.leading_zeros();
        for _ in 0..bits - 1 {
            self.encode_bypass(false);
        }
        for i in (0..bits).rev() {
            self.encode_bypass((x >> i) & 1 == 1);
        }
    }

    /// Signed integer via the zigzag map 0,1,-1,2,-2,...
    pub fn encode_se(&mut self, value: i32) {
        let mapped = if value > 0 {
            (value as u32) * 2 - 1
        } else {
            (-(value as i64) as u32) * 2
        };
        self.encode_ue(mapped);
    }

    /// Flushes the low register; the result fully determines the bit stream.
    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct BitDecoder<'a> {
    code: u32,
    range: u32,
    input: &'a [u8],
    pos: usize,
}

impl<'a> BitDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Result<Self> {
        let mut d = BitDecoder { code: 0, range: u32::MAX, input, pos: 1 };
        // Skip the encoder's initial zero cache byte, then fill the register.
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte()? as u32;
        }
        Ok(d)
    }

    #[inline]
    fn next_byte(&mut self) -> Result<u8> {
        let b = self
            .input
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::format("entropy payload underrun"))?;
        self.pos += 1;
        Ok(b)
    }

    #[inline]
    fn renorm(&mut self) -> Result<()> {
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte()? as u32;
            self.range <<= 8;
        }
        Ok(())
    }

    pub fn decode_bit(&mut self, ctx: &mut BinaryContext) -> Result<bool> {
        let bound = (self.range >> PROB_BITS) * ctx.p1 as u32;
        let bit = if self.code < bound {
            self.range = bound;
            true
        } else {
            self.code -= bound;
            self.range -= bound;
            false
        };
        ctx.update(bit);
        self.renorm()?;
        Ok(bit)
    }

    pub fn decode_bypass(&mut self) -> Result<bool> {
        let bound = self.range >> 1;
        let bit = if self.code < bound {
            self.range = bound;
            true
        } else {
            self.code -= bound;
            self.range -= bound;
            false
        };
        self.renorm()?;
        Ok(bit)
    }

    pub fn decode_ue(&mut self) -> Result<u32> {
        let mut zeros = 0u32;
        while !self.decode_bypass()? {
            zeros += 1;
            if zeros > 32 {
                return Err(Error::format("exp-golomb prefix overflow"));
            }
        }
        let mut x: u64 = 1;
        for _ in 0..zeros {
            x = (x << 1) | self.decode_bypass()? as u64;
        }
        Ok((x - 1) as u32)
    }

    pub fn decode_se(&mut self) -> Result<i32> {
        let mapped = self.decode_ue()? as i64;
        Ok(if mapped % 2 == 1 { ((mapped + 1) / 2) as i32 } else { (-mapped / 2) as i32 })
    }
}

/// Zig-zag scan order for an 8x8 block, row-major indices.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// Scan-position significance bands: DC, low (1..=15), high (16..=63).
#[inline]
fn sig_band(scan_pos: usize) -> usize {
    match scan_pos {
        0 => 0,
        1..=15 => 1,
        _ => 2,
    }
}

/// Adaptive contexts for coefficient coding; carried across frames by the
/// codec's temporal state.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct CoeffContexts {
    pub sig: [BinaryContext; 3],
    pub eob: BinaryContext,
}

impl CoeffContexts {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Codes one quantized block: per scan position a context-coded significance
/// bit, then |level|-1 in exp-Golomb plus a sign bypass for significant
/// ones, then an end-of-block flag that says whether anything follows.
pub fn code_coeff_block(enc: &mut BitEncoder, ctxs: &mut CoeffContexts, levels: &LevelBlock) {
    let last_sig = ZIGZAG.iter().rposition(|&i| levels[i] != 0);
    for (pos, &idx) in ZIGZAG.iter().enumerate() {
        let lvl = levels[idx];
        enc.encode_bit(&mut ctxs.sig[sig_band(pos)], lvl != 0);
        if lvl != 0 {
            enc.encode_ue(lvl.unsigned_abs() - 1);
            enc.encode_bypass(lvl < 0);
            if pos < 63 {
                let at_end = last_sig == Some(pos);
                enc.encode_bit(&mut ctxs.eob, at_end);
                if at_end {
                    return;
                }
            }
        }
    }
}

pub fn decode_coeff_block(dec: &mut BitDecoder, ctxs: &mut CoeffContexts) -> Result<LevelBlock> {
    let mut levels = [0i32; 64];
    for (pos, &idx) in ZIGZAG.iter().enumerate() {
        if dec.decode_bit(&mut ctxs.sig[sig_band(pos)])? {
            let mag = dec.decode_ue()?
                .checked_add(1)
                .ok_or_else(|| Error::format("coefficient magnitude overflow"))?;
            if mag > i32::MAX as u32 {
                return Err(Error::format("coefficient magnitude overflow"));
            }
            let sign = dec.decode_bypass()?;
            levels[idx] = if sign { -(mag as i32) } else { mag as i32 };
            if pos < 63 && dec.decode_bit(&mut ctxs.eob)? {
                break;
            }
        }
    }
    Ok(levels)
}

/// Rounds a half-pel field to full pel (half away from zero) when q sits in
/// the coarse half of the schedule. The choice is implied by q: nothing is
/// signaled.
pub fn round_field_for_q(field: &MotionField, q: u8, q_num: u8) -> MotionField {
    if q >= q_num / 2 {
        return field.clone();
    }
    let mut out = field.clone();
    for v in &mut out.vectors {
        v.0 = ((v.0 as f64 / 2.0).round() * 2.0) as i32;
        v.1 = ((v.1 as f64 / 2.0).round() * 2.0) as i32;
    }
    out
}

/// Codes motion as per-block residuals against the predictor field, signed
/// exp-Golomb over bypass. The field must already be rounded for q.
pub fn code_motion(enc: &mut BitEncoder, field: &MotionField, predictor: &MotionField) {
    debug_assert_eq!(field.vectors.len(), predictor.vectors.len());
    for (v, p) in field.vectors.iter().zip(&predictor.vectors) {
        enc.encode_se(v.0 - p.0);
        enc.encode_se(v.1 - p.1);
    }
}

pub fn decode_motion(dec: &mut BitDecoder, predictor: &MotionField) -> Result<MotionField> {
    let mut out = predictor.clone();
    for (v, p) in out.vectors.iter_mut().zip(&predictor.vectors) {
        v.0 = p.0 + dec.decode_se()?;
        v.1 = p.1 + dec.decode_se()?;
    }
    Ok(out)
}

pub const CONTAINER_MAGIC: [u8; 4] = *b"FMC1";
pub const CONTAINER_VERSION: u8 = 1;
/// Sequence header bytes; excluded from rate accounting.
pub const SEQ_HEADER_BYTES: usize = 33;
/// Per-frame record header bytes; included in each frame's bit count.
pub const RECORD_HEADER_BYTES: usize = 11;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FrameType {
    Intra = 0,
    Inter = 1,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SequenceHeader {
    pub width: u32,
    pub height: u32,
    pub pix_fmt: PixelFormat,
    pub fps: (u32, u32),
    pub refresh_period: u16,
    pub q_num: u8,
    pub schedule_digest: u64,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FrameRecord {
    pub frame_type: FrameType,
    pub q: u8,
    pub refresh: bool,
    pub motion: Vec<u8>,
    pub coeff: Vec<u8>,
}

impl FrameRecord {
    /// Coded size including the record header; the rate-control and logging
    /// unit of account.
    pub fn coded_bits(&self) -> u64 {
        ((RECORD_HEADER_BYTES + self.motion.len() + self.coeff.len()) * 8) as u64
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct BitstreamContainer {
    pub header: SequenceHeader,
    pub frames: Vec<FrameRecord>,
}

impl BitstreamContainer {
    pub fn write(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::new();
        out.extend_from_slice(&CONTAINER_MAGIC);
        out.push(CONTAINER_VERSION);
        out.extend_from_slice(&h.width.to_le_bytes());
        out.extend_from_slice(&h.height.to_le_bytes());
        out.push(h.pix_fmt.tag().expect("container pixel format has a file layout"));
        out.extend_from_slice(&h.fps.0.to_le_bytes());
        out.extend_from_slice(&h.fps.1.to_le_bytes());
        out.extend_from_slice(&h.refresh_period.to_le_bytes());
        out.push(h.q_num);
        out.extend_from_slice(&h.schedule_digest.to_le_bytes());
        debug_assert_eq!(out.len(), SEQ_HEADER_BYTES);
        for f in &self.frames {
            out.push(f.frame_type as u8);
            out.push(f.q);
            out.push(f.refresh as u8);
            out.extend_from_slice(&(f.motion.len() as u32).to_le_bytes());
            out.extend_from_slice(&(f.coeff.len() as u32).to_le_bytes());
            out.extend_from_slice(&f.motion);
            out.extend_from_slice(&f.coeff);
        }
        out
    }

    pub fn read(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != CONTAINER_MAGIC {
            return Err(Error::format("bad container magic"));
        }
        let version = r.u8()?;
        if version != CONTAINER_VERSION {
            return Err(Error::format(format!("unsupported container version {version}")));
        }
        let width = r.u32()?;
        let height = r.u32()?;
        let pix_fmt = PixelFormat::from_tag(r.u8()?)?;
        let fps = (r.u32()?, r.u32()?);
        let refresh_period = r.u16()?;
        let q_num = r.u8()?;
        let schedule_digest = r.u64()?;
        if width == 0 || height == 0 || fps.0 == 0 || fps.1 == 0 || q_num < 2 {
            return Err(Error::format("container header fields out of range"));
        }
        let header =
            SequenceHeader { width, height, pix_fmt, fps, refresh_period, q_num, schedule_digest };
        let mut frames = Vec::new();
        while r.pos < bytes.len() {
            let frame_type = match r.u8()? {
                0 => FrameType::Intra,
                1 => FrameType::Inter,
                t => return Err(Error::format(format!("unknown frame type {t}"))),
            };
            let q = r.u8()?;
            if q >= q_num {
                return Err(Error::format(format!("frame q {q} out of range [0, {q_num})")));
            }
            let refresh = match r.u8()? {
                0 => false,
                1 => true,
                v => return Err(Error::format(format!("bad refresh flag {v}"))),
            };
            let motion_len = r.u32()? as usize;
            let coeff_len = r.u32()? as usize;
            let motion = r.take(motion_len)?.to_vec();
            let coeff = r.take(coeff_len)?.to_vec();
            frames.push(FrameRecord { frame_type, q, refresh, motion, coeff });
        }
        Ok(BitstreamContainer { header, frames })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.write())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(&fs::read(path)?)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format("container truncated mid-record"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
