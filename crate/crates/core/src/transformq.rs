//! Quantization machinery: the q-indexed log-space scaler tables, the 8x8
//! orthonormal DCT, per-block spatial modulation, and the RD calibration
//! that fits the scaler endpoints to the lambda schedule.
//!
//! Quantization multiplies coefficients by an encoder scaler (never divides,
//! so a zero-adjacent scaler cannot blow up) and rounds; dequantization
//! multiplies by a separately tabulated decoder scaler. Both tables are
//! exponential in q between their endpoint values, matching the interpolated
//! lambda schedule.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::entropy::{code_coeff_block, BitEncoder, CoeffContexts};
use crate::pixels::Plane;
use crate::{Error, Result};

/// One 8x8 coefficient (or sample) block, row-major.
pub type Block = [f64; 64];
/// Quantized integer levels for one block.
pub type LevelBlock = [i32; 64];

/// Quantization schedule: 64 q indices cover [lambda_min, lambda_max] and
/// the matching scaler ranges. `s_*_min` is the endpoint value at q = 0 and
/// `s_*_max` the value at q = q_num - 1; for the decoder table (reciprocal
/// calibration) the q = 0 endpoint is numerically the larger one.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct QuantSchedule {
    pub q_num: u8,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub s_enc_min: f64,
    pub s_enc_max: f64,
    pub s_dec_min: f64,
    pub s_dec_max: f64,
}

impl Default for QuantSchedule {
    fn default() -> Self {
        QuantSchedule {
            q_num: 64,
            lambda_min: 1.0,
            lambda_max: 768.0,
            s_enc_min: 0.5,
            s_enc_max: 8.0,
            s_dec_min: 2.0,
            s_dec_max: 0.125,
        }
    }
}

impl QuantSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.q_num < 2 {
            return Err(Error::invalid("q_num must be at least 2"));
        }
        let positive = [
            self.lambda_min,
            self.lambda_max,
            self.s_enc_min,
            self.s_enc_max,
            self.s_dec_min,
            self.s_dec_max,
        ];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::invalid("schedule values must be positive and finite"));
        }
        if self.lambda_min > self.lambda_max {
            return Err(Error::invalid("lambda_min must not exceed lambda_max"));
        }
        // Equal endpoints are legal (degenerate single-quality schedule).
        if self.s_enc_min > self.s_enc_max {
            return Err(Error::invalid("encoder scaler must not decrease with q"));
        }
        Ok(())
    }

    pub fn s_enc(&self, q: u8) -> Result<f64> {
        scaler_for_q(q, (self.s_enc_min, self.s_enc_max), self.q_num)
    }

    pub fn s_dec(&self, q: u8) -> Result<f64> {
        scaler_for_q(q, (self.s_dec_min, self.s_dec_max), self.q_num)
    }

    pub fn lambda(&self, q: u8) -> Result<f64> {
        scaler_for_q(q, (self.lambda_min, self.lambda_max), self.q_num)
    }

    /// Canonical key=value serialization; also the digest preimage.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "q_num={}", self.q_num);
        let _ = writeln!(s, "lambda_min={:?}", self.lambda_min);
        let _ = writeln!(s, "lambda_max={:?}", self.lambda_max);
        let _ = writeln!(s, "s_enc_min={:?}", self.s_enc_min);
        let _ = writeln!(s, "s_enc_max={:?}", self.s_enc_max);
        let _ = writeln!(s, "s_dec_min={:?}", self.s_dec_min);
        let _ = writeln!(s, "s_dec_max={:?}", self.s_dec_max);
        s
    }

    /// FNV-1a 64 over the canonical serialization. Stored in bitstream
    /// headers so a decode with the wrong table fails fast.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.serialize().as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        fs::write(path, self.serialize())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut sched = QuantSchedule::default();
        let mut seen = [false; 7];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("schedule line {} has no '='", lineno + 1)))?;
            let idx = match key.trim() {
                "q_num" => 0,
                "lambda_min" => 1,
                "lambda_max" => 2,
                "s_enc_min" => 3,
                "s_enc_max" => 4,
                "s_dec_min" => 5,
                "s_dec_max" => 6,
                other => {
                    return Err(Error::format(format!("unknown schedule key {other:?}")));
                }
            };
            if seen[idx] {
                return Err(Error::format(format!("duplicate schedule key {:?}", key.trim())));
            }
            seen[idx] = true;
            let value = value.trim();
            let bad = || Error::format(format!("bad value for {}: {value:?}", key.trim()));
            match idx {
                0 => sched.q_num = value.parse().map_err(|_| bad())?,
                1 => sched.lambda_min = value.parse().map_err(|_| bad())?,
                2 => sched.lambda_max = value.parse().map_err(|_| bad())?,
                3 => sched.s_enc_min = value.parse().map_err(|_| bad())?,
                4 => sched.s_enc_max = value.parse().map_err(|_| bad())?,
                5 => sched.s_dec_min = value.parse().map_err(|_| bad())?,
                6 => sched.s_dec_max = value.parse().map_err(|_| bad())?,
                _ => unreachable!(),
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            let names = [
                "q_num", "lambda_min", "lambda_max", "s_enc_min", "s_enc_max", "s_dec_min",
                "s_dec_max",
            ];
            return Err(Error::format(format!("schedule missing key {}", names[missing])));
        }
        sched.validate()?;
        Ok(sched)
    }
}

/// Log-space interpolation between the endpoint values at q = 0 and
/// q = q_num - 1: exp(ln a + q/(q_num-1) * (ln b - ln a)).
pub fn scaler_for_q(q: u8, (a, b): (f64, f64), q_num: u8) -> Result<f64> {
    if q >= q_num {
        return Err(Error::invalid(format!("q {q} out of range [0, {})", q_num)));
    }
    // Endpoints are returned exactly; exp(ln a) alone can be off by an ulp.
    if q == 0 || a == b {
        return Ok(a);
    }
    if q == q_num - 1 {
        return Ok(b);
    }
    let t = q as f64 / (q_num - 1) as f64;
    Ok((a.ln() + t * (b.ln() - a.ln())).exp())
}

/// Uniform scalar quantization to the nearest multiple of `step`, ties away
/// from zero.
pub fn quantize_scalar(value: f64, step: f64) -> Result<f64> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid(format!("quantization step must be positive, got {step}")));
    }
    Ok(step * (value / step).round())
}

// Orthonormal type-II DCT basis: C[k][n] = alpha_k cos(pi (2n+1) k / 16),
// alpha_0 = sqrt(1/8), alpha_k = sqrt(2/8). A constant block c maps to a DC
// coefficient of 8c.
fn dct_basis() -> [[f64; 8]; 8] {
    let mut c = [[0.0; 8]; 8];
    for (k, row) in c.iter_mut().enumerate() {
        let alpha = if k == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
        for (n, v) in row.iter_mut().enumerate() {
            *v = alpha * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / 16.0).cos();
        }
    }
    c
}

fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: std::sync::OnceLock<[[f64; 8]; 8]> = std::sync::OnceLock::new();
    BASIS.get_or_init(dct_basis)
}

/// 2D forward DCT: F = C X C^T.
pub fn dct8_forward(x: &Block) -> Block {
    let c = basis();
    let mut tmp = [0.0; 64];
    for k in 0..8 {
        for j in 0..8 {
            let mut acc = 0.0;
            for n in 0..8 {
                acc += c[k][n] * x[n * 8 + j];
            }
            tmp[k * 8 + j] = acc;
        }
    }
    let mut out = [0.0; 64];
    for k in 0..8 {
        for l in 0..8 {
            let mut acc = 0.0;
            for j in 0..8 {
                acc += tmp[k * 8 + j] * c[l][j];
            }
            out[k * 8 + l] = acc;
        }
    }
    out
}

/// 2D inverse DCT: X = C^T F C.
pub fn dct8_inverse(f: &Block) -> Block {
    let c = basis();
    let mut tmp = [0.0; 64];
    for n in 0..8 {
        for l in 0..8 {
            let mut acc = 0.0;
            for k in 0..8 {
                acc += c[k][n] * f[k * 8 + l];
            }
            tmp[n * 8 + l] = acc;
        }
    }
    let mut out = [0.0; 64];
    for n in 0..8 {
        for m in 0..8 {
            let mut acc = 0.0;
            for l in 0..8 {
                acc += tmp[n * 8 + l] * c[l][m];
            }
            out[n * 8 + m] = acc;
        }
    }
    out
}

/// Reads the 8x8 block at block coordinates (bx, by), replicating edge
/// samples where the block overhangs the plane.
pub fn extract_block8(plane: &Plane, bx: usize, by: usize) -> Block {
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] =
                plane.get_clamped((bx * 8 + x) as isize, (by * 8 + y) as isize);
        }
    }
    out
}

/// Writes the block back, dropping samples that fall outside the plane.
pub fn store_block8(plane: &mut Plane, bx: usize, by: usize, block: &Block) {
    for y in 0..8 {
        let py = by * 8 + y;
        if py >= plane.height {
            break;
        }
        for x in 0..8 {
            let px = bx * 8 + x;
            if px >= plane.width {
                break;
            }
            plane.set(px, py, block[y * 8 + x]);
        }
    }
}

/// The five spatial multiplier levels, coarse to fine.
pub const SPATIAL_LEVELS: [f64; 5] = [0.5, 0.707, 1.0, 1.414, 2.0];

/// Per-8x8-block spatial multipliers for one plane.
#[derive(Clone, PartialEq, Debug)]
pub struct SpatialScalerMap {
    pub blocks_w: usize,
    pub blocks_h: usize,
    pub w: Vec<f64>,
}

impl SpatialScalerMap {
    #[inline]
    pub fn get(&self, bx: usize, by: usize) -> f64 {
        self.w[by * self.blocks_w + bx]
    }
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn block_stddev(block: &Block) -> f64 {
    let mean = block.iter().sum::<f64>() / 64.0;
    let var: f64 = block.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 63.0;
    var.sqrt()
}

/// Derives the per-block multiplier map from a context plane: busy blocks
/// (high sigma relative to the frame mean) get coarser effective steps, flat
/// blocks finer ones. All sigma comparisons use 6-decimal rounded values; a
/// flat frame (mean sigma 0) keeps every multiplier at 1.0.
pub fn derive_spatial_scalers(plane: &Plane) -> SpatialScalerMap {
    let blocks_w = plane.width.div_ceil(8);
    let blocks_h = plane.height.div_ceil(8);
    let mut sigmas = Vec::with_capacity(blocks_w * blocks_h);
    for by in 0..blocks_h {
        for bx in 0..blocks_w {
            sigmas.push(round6(block_stddev(&extract_block8(plane, bx, by))));
        }
    }
    let mean = round6(sigmas.iter().sum::<f64>() / sigmas.len() as f64);
    let w = sigmas
        .iter()
        .map(|&s| {
            if mean == 0.0 {
                1.0
            } else if s < 0.5 * mean {
                1.414
            } else if s < mean {
                1.0
            } else if s < 2.0 * mean {
                0.707
            } else {
                0.5
            }
        })
        .collect();
    SpatialScalerMap { blocks_w, blocks_h, w }
}

/// levels = round(coeff * s_enc(q) * w), ties away from zero.
pub fn quantize_latent(block: &Block, q: u8, w: f64, sched: &QuantSchedule) -> Result<LevelBlock> {
    let s = sched.s_enc(q)? * w;
    let mut out = [0i32; 64];
    for (lvl, &c) in out.iter_mut().zip(block.iter()) {
        *lvl = (c * s).round() as i32;
    }
    Ok(out)
}

/// coeff = level * s_dec(q) / w. With the default reciprocal calibration the
/// per-coefficient round-trip error is bounded by 0.5 / (s_enc(q) * w).
pub fn dequantize_latent(
    levels: &LevelBlock,
    q: u8,
    w: f64,
    sched: &QuantSchedule,
) -> Result<Block> {
    let s = sched.s_dec(q)? / w;
    let mut out = [0.0; 64];
    for (c, &lvl) in out.iter_mut().zip(levels.iter()) {
        *c = lvl as f64 * s;
    }
    Ok(out)
}

/// Rate/distortion of intra-coding `clip` with a single global scaler:
/// distortion is the summed squared coefficient error (Parseval makes it the
/// pixel-domain SSE), rate is real entropy-coded bits.
fn measure_rd(blocks: &[Block], s: f64) -> (f64, f64) {
    let mut enc = BitEncoder::new();
    let mut ctxs = CoeffContexts::new();
    let mut sse = 0.0;
    for b in blocks {
        let mut levels = [0i32; 64];
        for (lvl, &c) in levels.iter_mut().zip(b.iter()) {
            *lvl = (c * s).round() as i32;
            let rec = *lvl as f64 / s;
            sse += (c - rec) * (c - rec);
        }
        code_coeff_block(&mut enc, &mut ctxs, &levels);
    }
    let bits = enc.finish().len() as f64 * 8.0;
    (bits, sse)
}

/// |dD/dR| around s, probed with a fixed multiplicative step. D is squared
/// error on the 8-bit sample scale and R is bits, both summed over the clip,
/// so the ratio is normalization-free. Returns +inf where rate has saturated
/// flat (coarser scaler cannot buy fewer bits), which steers the bisection
/// up.
fn rd_slope(blocks: &[Block], s: f64) -> f64 {
    const PROBE: f64 = 1.122_462_048_309_373; // 2^(1/6)
    let (r0, d0) = measure_rd(blocks, s);
    let (r1, d1) = measure_rd(blocks, s * PROBE);
    if r1 - r0 < 1.0 {
        return f64::INFINITY;
    }
    (d0 - d1) / (r1 - r0)
}

/// Fits the encoder scaler endpoints so that the measured RD trade-off at
/// q = 0 and q = q_num - 1 matches the lambda schedule: at an RD-optimal
/// operating point for R + lambda * D, |dD/dR| = 1/lambda. Bisection runs on
/// ln s; interior q values follow from the log-space interpolation. Decoder
/// endpoints are set to the reciprocals of the found encoder endpoints.
pub fn calibrate_scaler_bounds(
    clip: &[crate::pixels::Frame],
    sched: &QuantSchedule,
) -> Result<QuantSchedule> {
    sched.validate()?;
    if clip.is_empty() {
        return Err(Error::invalid("calibration clip is empty"));
    }
    // DCT blocks are scaler-independent; compute once.
    let mut blocks = Vec::new();
    for frame in clip {
        for plane in &frame.planes {
            for by in 0..plane.height.div_ceil(8) {
                for bx in 0..plane.width.div_ceil(8) {
                    blocks.push(dct8_forward(&extract_block8(plane, bx, by)));
                }
            }
        }
    }

    let solve = |lambda: f64| -> Result<f64> {
        let target = 1.0 / lambda;
        let (mut lo, mut hi) = ((1.0f64 / 256.0).ln(), 256.0f64.ln());
        let slope_at = |ln_s: f64| rd_slope(&blocks, ln_s.exp());
        // Slope falls as s rises; require the bracket to straddle the target.
        if slope_at(lo) < target {
            return Err(Error::Calibration(format!(
                "slope at s={:.6} already below target {target:.6e} for lambda {lambda}",
                lo.exp()
            )));
        }
        if slope_at(hi) > target {
            return Err(Error::Calibration(format!(
                "slope at s={:.6} still above target {target:.6e} for lambda {lambda}",
                hi.exp()
            )));
        }
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if slope_at(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = (0.5 * (lo + hi)).exp();
        let achieved = rd_slope(&blocks, s);
        if !(achieved.is_finite() && (achieved - target).abs() <= 0.1 * target) {
            return Err(Error::Calibration(format!(
                "converged s={s:.6} has slope {achieved:.6e}, target {target:.6e} (+/-10%), \
                 lambda {lambda}"
            )));
        }
        Ok(s)
    };

    let s_min = solve(sched.lambda_min)?;
    let s_max =
        if sched.lambda_max == sched.lambda_min { s_min } else { solve(sched.lambda_max)? };
    let mut out = *sched;
    out.s_enc_min = s_min;
    out.s_enc_max = s_max;
    out.s_dec_min = 1.0 / s_min;
    out.s_dec_max = 1.0 / s_max;
    out.validate()?;
    Ok(out)
}
