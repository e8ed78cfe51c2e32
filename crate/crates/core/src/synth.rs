//! Deterministic synthetic clips for tests and benchmarks.
//!
//! Content comes from periodic noise "worlds" sampled at a per-frame
//! fractional offset, so a pan never runs off the texture and the same
//! seed always reproduces the same bytes. The blurred base layer has a
//! short correlation length, which gives block matchers a clean error
//! basin; the pan clip overlays an unblurred detail layer moving at a
//! different velocity, so a single block vector can never register both
//! layers at once and warped references carry a persistent residue.
//!
//! All emitted samples are integers in [0, 255], exactly what a file
//! round trip through the 8-bit formats would produce.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::pixels::{chroma_resample, yuv_to_rgb_bt709, Frame, PixelFormat, RawVideo, ResampleDirection};
use crate::{Error, Result};

/// Global pan of the drift clip in luma pixels per frame. Deliberately
/// fractional: the best half-pel motion vector is inexact, so warped
/// references keep accumulating interpolation loss between refreshes.
pub const PAN_VELOCITY: (f64, f64) = (0.6, 0.35);

/// Velocity of the additive detail layer. It intentionally disagrees
/// with the base pan: a single block vector cannot track both layers,
/// so accumulated references pick up a persistent misregistration that
/// only a refresh clears.
pub const DETAIL_VELOCITY: (f64, f64) = (0.0, 0.0);

pub const DEFAULT_FPS: (u32, u32) = (30, 1);

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ClipKind {
    /// Every frame identical: the zero-motion, zero-residual base case.
    Static,
    /// Slow global pan plus an additive fine-detail layer; drift-prone.
    PanDetail,
    /// Fresh uniform noise each frame: incompressible stress content.
    Noise,
}

impl ClipKind {
    pub fn name(self) -> &'static str {
        match self {
            ClipKind::Static => "static",
            ClipKind::PanDetail => "pan-detail",
            ClipKind::Noise => "noise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(ClipKind::Static),
            "pan-detail" => Ok(ClipKind::PanDetail),
            "noise" => Ok(ClipKind::Noise),
            _ => Err(Error::invalid(format!(
                "unknown clip kind {s:?}, expected static, pan-detail, or noise"
            ))),
        }
    }
}

/// A periodic texture sampled with bilinear interpolation; coordinates
/// wrap, so any offset is valid.
struct World {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl World {
    fn noise(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Self {
        let data = (0..w * h).map(|_| rng.random_range(0.0..256.0)).collect();
        World { w, h, data }
    }

    fn at(&self, x: i64, y: i64) -> f64 {
        let xi = x.rem_euclid(self.w as i64) as usize;
        let yi = y.rem_euclid(self.h as i64) as usize;
        self.data[yi * self.w + xi]
    }

    /// One 3x3 mean pass with wraparound.
    fn blur_wrap(&self) -> Self {
        let mut out = vec![0.0; self.w * self.h];
        for y in 0..self.h as i64 {
            for x in 0..self.w as i64 {
                let mut acc = 0.0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        acc += self.at(x + dx, y + dy);
                    }
                }
                out[y as usize * self.w + x as usize] = acc / 9.0;
            }
        }
        World { w: self.w, h: self.h, data: out }
    }

    /// Affine remap to the target mean and standard deviation.
    fn normalized(mut self, mean: f64, std: f64) -> Self {
        let n = self.data.len() as f64;
        let m = self.data.iter().sum::<f64>() / n;
        let var = self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let gain = if var > 0.0 { std / var.sqrt() } else { 0.0 };
        for v in &mut self.data {
            *v = mean + (*v - m) * gain;
        }
        self
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let fx = x.floor();
        let fy = y.floor();
        let ax = x - fx;
        let ay = y - fy;
        let (x0, y0) = (fx as i64, fy as i64);
        let top = self.at(x0, y0) * (1.0 - ax) + self.at(x0 + 1, y0) * ax;
        let bot = self.at(x0, y0 + 1) * (1.0 - ax) + self.at(x0 + 1, y0 + 1) * ax;
        top * (1.0 - ay) + bot * ay
    }
}

fn seeded(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn round_frame(f: &mut Frame) {
    for p in &mut f.planes {
        for v in &mut p.data {
            *v = v.round().clamp(0.0, 255.0);
        }
    }
}

fn to_format(working: Frame, format: PixelFormat) -> Result<Frame> {
    let mut out = match format {
        PixelFormat::Yuv444r => working,
        PixelFormat::Yuv420p8 => chroma_resample(&working, ResampleDirection::Down)?,
        PixelFormat::Rgbr => yuv_to_rgb_bt709(&working)?,
    };
    round_frame(&mut out);
    Ok(out)
}

/// Builds a `frames`-long clip of the given kind, byte-reproducible from
/// the seed alone.
pub fn generate(
    kind: ClipKind,
    format: PixelFormat,
    width: usize,
    height: usize,
    frames: usize,
    seed: u64,
) -> Result<RawVideo> {
    if frames == 0 {
        return Err(Error::invalid("clip length must be positive"));
    }
    if kind == ClipKind::Noise {
        let mut out = Vec::with_capacity(frames);
        for t in 0..frames {
            let mut rng = seeded(seed, 0x4E00 + t as u64);
            let mut f = Frame::new(format, width, height)?;
            for p in &mut f.planes {
                for v in &mut p.data {
                    *v = rng.random_range(0..256) as f64;
                }
            }
            out.push(f);
        }
        return Ok(RawVideo { frames: out, fps: DEFAULT_FPS });
    }

    let (base_velocity, detail_velocity) = match kind {
        ClipKind::Static => ((0.0, 0.0), (0.0, 0.0)),
        _ => (PAN_VELOCITY, DETAIL_VELOCITY),
    };
    pan_clip(format, width, height, frames, seed, base_velocity, detail_velocity)
}

/// Panning two-layer world clip with explicit per-layer velocities.
/// `generate` freezes the bundled velocities; this entry point exists so
/// tests can probe other motion mixes.
pub fn pan_clip(
    format: PixelFormat,
    width: usize,
    height: usize,
    frames: usize,
    seed: u64,
    base_velocity: (f64, f64),
    detail_velocity: (f64, f64),
) -> Result<RawVideo> {
    if frames == 0 {
        return Err(Error::invalid("clip length must be positive"));
    }
    // Amplitudes keep Y +/- detail well inside [0, 255] and the implied
    // RGB in gamut, so the clamp below almost never bites. The detail
    // layer is unblurred on purpose: its high-frequency energy is what
    // warped references lose first.
    let base = World::noise(&mut seeded(seed, 1), width, height).blur_wrap().blur_wrap();
    let base = base.normalized(128.0, 38.0);
    let detail = World::noise(&mut seeded(seed, 2), width, height).normalized(0.0, 6.0);
    let cb = World::noise(&mut seeded(seed, 3), width, height)
        .blur_wrap()
        .blur_wrap()
        .blur_wrap()
        .normalized(128.0, 10.0);
    let cr = World::noise(&mut seeded(seed, 4), width, height)
        .blur_wrap()
        .blur_wrap()
        .blur_wrap()
        .normalized(128.0, 10.0);

    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let (ox, oy) = (t as f64 * base_velocity.0, t as f64 * base_velocity.1);
        let (dx, dy) = (t as f64 * detail_velocity.0, t as f64 * detail_velocity.1);
        let mut f = Frame::new(PixelFormat::Yuv444r, width, height)?;
        for y in 0..height {
            for x in 0..width {
                let (sx, sy) = (x as f64 + ox, y as f64 + oy);
                let luma = (base.sample(sx, sy) + detail.sample(x as f64 + dx, y as f64 + dy))
                    .clamp(0.0, 255.0);
                f.planes[0].set(x, y, luma);
                f.planes[1].set(x, y, cb.sample(sx, sy).clamp(0.0, 255.0));
                f.planes[2].set(x, y, cr.sample(sx, sy).clamp(0.0, 255.0));
            }
        }
        out.push(to_format(f, format)?);
    }
    Ok(RawVideo { frames: out, fps: DEFAULT_FPS })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_integer_in_range(v: &RawVideo) -> bool {
        v.frames.iter().all(|f| {
            f.planes
                .iter()
                .flat_map(|p| &p.data)
                .all(|&s| s == s.round() && (0.0..=255.0).contains(&s))
        })
    }

    #[test]
    fn same_seed_reproduces_bytes_different_seed_does_not() {
        let a = generate(ClipKind::PanDetail, PixelFormat::Yuv420p8, 64, 48, 5, 9).unwrap();
        let b = generate(ClipKind::PanDetail, PixelFormat::Yuv420p8, 64, 48, 5, 9).unwrap();
        let c = generate(ClipKind::PanDetail, PixelFormat::Yuv420p8, 64, 48, 5, 10).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn static_clip_repeats_its_first_frame() {
        let v = generate(ClipKind::Static, PixelFormat::Yuv420p8, 48, 32, 4, 3).unwrap();
        for f in &v.frames[1..] {
            assert_eq!(*f, v.frames[0]);
        }
    }

    #[test]
    fn pan_clip_moves_gently_noise_clip_jumps() {
        let mean_abs_diff = |v: &RawVideo| {
            let (a, b) = (&v.frames[0].planes[0], &v.frames[1].planes[0]);
            a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>()
                / a.data.len() as f64
        };
        let pan = generate(ClipKind::PanDetail, PixelFormat::Yuv420p8, 64, 48, 2, 5).unwrap();
        let noise = generate(ClipKind::Noise, PixelFormat::Yuv420p8, 64, 48, 2, 5).unwrap();
        let d_pan = mean_abs_diff(&pan);
        assert!(d_pan > 0.1 && d_pan < 20.0, "pan frame delta {d_pan}");
        assert!(mean_abs_diff(&noise) > 50.0);
    }

    #[test]
    fn samples_are_stored_bytes_in_every_format() {
        for format in [PixelFormat::Yuv420p8, PixelFormat::Rgbr, PixelFormat::Yuv444r] {
            for kind in [ClipKind::Static, ClipKind::PanDetail, ClipKind::Noise] {
                let v = generate(kind, format, 32, 32, 2, 1).unwrap();
                assert!(all_integer_in_range(&v), "{:?} {:?}", kind, format);
                assert_eq!(v.frames[0].format, format);
            }
        }
    }

    #[test]
    fn luma_statistics_land_near_the_design_point() {
        let v = generate(ClipKind::PanDetail, PixelFormat::Yuv420p8, 96, 64, 1, 7).unwrap();
        let y = &v.frames[0].planes[0];
        let n = y.data.len() as f64;
        let mean = y.data.iter().sum::<f64>() / n;
        let std = (y.data.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n).sqrt();
        assert!((mean - 128.0).abs() < 6.0, "mean {mean}");
        assert!(std > 25.0 && std < 55.0, "std {std}");
    }

    #[test]
    fn chroma_planes_are_half_resolution_for_yuv420() {
        let v = generate(ClipKind::Static, PixelFormat::Yuv420p8, 50, 34, 1, 2).unwrap();
        let f = &v.frames[0];
        assert_eq!((f.planes[1].width, f.planes[1].height), (25, 17));
        let r = generate(ClipKind::Static, PixelFormat::Rgbr, 50, 34, 1, 2).unwrap();
        assert_eq!(r.frames[0].planes[1].width, 50);
    }

    #[test]
    fn zero_frames_rejected() {
        assert!(generate(ClipKind::Static, PixelFormat::Yuv420p8, 32, 32, 0, 1).is_err());
    }
}
