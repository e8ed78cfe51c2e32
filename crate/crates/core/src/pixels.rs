//! Frames, raw/y4m file I/O, BT.709 colorspace conversion, chroma
//! resampling, and PSNR reporting.
//!
//! All pixel data lives in real-valued (f64) planes; 8-bit rounding happens
//! only when bytes cross a file boundary. A `Frame` tagged `Yuv420p8` keeps
//! its chroma planes at half resolution but still stores reals, so lossless
//! promotion to the 4:4:4 internal working format is a pure resampling step.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

pub const MIN_DIM: usize = 16;

/// PSNR peak for 8-bit content, 255^2.
const PEAK_SQ: f64 = 65025.0;

/// Full-range BT.709 analysis coefficients.
pub const KR: f64 = 0.2126;
pub const KG: f64 = 0.7152;
pub const KB: f64 = 0.0722;
/// 2*(1-KB) and 2*(1-KR): divisors that map B-Y and R-Y onto [-127.5, 127.5].
pub const CB_DIV: f64 = 1.8556;
pub const CR_DIV: f64 = 1.5748;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PixelFormat {
    /// 4:2:0, 8-bit at file boundaries. Chroma planes are ceil(w/2) x ceil(h/2).
    Yuv420p8,
    /// 4:4:4 real-valued working format.
    Yuv444r,
    /// Real-valued RGB, interleaved rgb24 at file boundaries.
    Rgbr,
}

impl PixelFormat {
    pub fn name(self) -> &'static str {
        match self {
            PixelFormat::Yuv420p8 => "yuv420p",
            PixelFormat::Yuv444r => "yuv444r",
            PixelFormat::Rgbr => "rgb24",
        }
    }

    /// Container tag byte. `Yuv444r` has no file layout and no tag.
    pub fn tag(self) -> Option<u8> {
        match self {
            PixelFormat::Yuv420p8 => Some(0),
            PixelFormat::Rgbr => Some(1),
            PixelFormat::Yuv444r => None,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(PixelFormat::Yuv420p8),
            1 => Ok(PixelFormat::Rgbr),
            other => Err(Error::format(format!("unknown pixel format tag {other}"))),
        }
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Plane { width, height, data: vec![0.0; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = v;
    }

    /// Clamp-to-edge sampling; the border policy for every resample and warp.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

/// Per-plane dimensions for a frame of the given format.
pub fn plane_dims(format: PixelFormat, width: usize, height: usize, idx: usize) -> (usize, usize) {
    match format {
        PixelFormat::Yuv420p8 if idx > 0 => (width.div_ceil(2), height.div_ceil(2)),
        _ => (width, height),
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct Frame {
    pub format: PixelFormat,
    pub width: usize,
    pub height: usize,
    pub planes: [Plane; 3],
}

impl Frame {
    pub fn new(format: PixelFormat, width: usize, height: usize) -> Result<Self> {
        if width < MIN_DIM || height < MIN_DIM {
            return Err(Error::invalid(format!(
                "frame dimensions {width}x{height} below minimum {MIN_DIM}x{MIN_DIM}"
            )));
        }
        let planes = std::array::from_fn(|i| {
            let (w, h) = plane_dims(format, width, height, i);
            Plane::new(w, h)
        });
        Ok(Frame { format, width, height, planes })
    }

    /// Bytes per frame in the 8-bit file layout. None for `Yuv444r`.
    pub fn file_frame_size(format: PixelFormat, width: usize, height: usize) -> Option<usize> {
        match format {
            PixelFormat::Yuv420p8 => {
                let (cw, ch) = plane_dims(format, width, height, 1);
                Some(width * height + 2 * cw * ch)
            }
            PixelFormat::Rgbr => Some(width * height * 3),
            PixelFormat::Yuv444r => None,
        }
    }

    pub fn from_bytes(format: PixelFormat, width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let need = Frame::file_frame_size(format, width, height)
            .ok_or_else(|| Error::invalid("yuv444r has no 8-bit file layout"))?;
        if bytes.len() != need {
            return Err(Error::format(format!(
                "frame payload is {} bytes, expected {need}",
                bytes.len()
            )));
        }
        let mut f = Frame::new(format, width, height)?;
        match format {
            PixelFormat::Yuv420p8 => {
                let mut off = 0;
                for p in 0..3 {
                    let n = f.planes[p].data.len();
                    for (dst, &src) in f.planes[p].data.iter_mut().zip(&bytes[off..off + n]) {
                        *dst = src as f64;
                    }
                    off += n;
                }
            }
            PixelFormat::Rgbr => {
                for i in 0..width * height {
                    f.planes[0].data[i] = bytes[3 * i] as f64;
                    f.planes[1].data[i] = bytes[3 * i + 1] as f64;
                    f.planes[2].data[i] = bytes[3 * i + 2] as f64;
                }
            }
            PixelFormat::Yuv444r => unreachable!(),
        }
        Ok(f)
    }

    /// 8-bit file layout bytes: round half away from zero, clamp to [0, 255].
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let quant = |v: f64| v.round().clamp(0.0, 255.0) as u8;
        match self.format {
            PixelFormat::Yuv420p8 => {
                let mut out = Vec::with_capacity(
                    Frame::file_frame_size(self.format, self.width, self.height).unwrap(),
                );
                for p in &self.planes {
                    out.extend(p.data.iter().map(|&v| quant(v)));
                }
                Ok(out)
            }
            PixelFormat::Rgbr => {
                let mut out = Vec::with_capacity(self.width * self.height * 3);
                for i in 0..self.width * self.height {
                    out.push(quant(self.planes[0].data[i]));
                    out.push(quant(self.planes[1].data[i]));
                    out.push(quant(self.planes[2].data[i]));
                }
                Ok(out)
            }
            PixelFormat::Yuv444r => Err(Error::invalid("yuv444r has no 8-bit file layout")),
        }
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct RawVideo {
    pub frames: Vec<Frame>,
    /// Frames per second as a rational. Raw files default to 30:1.
    pub fps: (u32, u32),
}

/// Loads a raw planar file (or a y4m file, detected by magic) as a frame
/// sequence. For headerless raw input the file length must be an exact
/// multiple of the frame size; for y4m the header dimensions must match the
/// passed ones and the chroma tag must be 4:2:0.
pub fn load_raw(path: &Path, width: usize, height: usize, format: PixelFormat) -> Result<RawVideo> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(Y4M_MAGIC) {
        let video = parse_y4m(&bytes)?;
        if format != PixelFormat::Yuv420p8 {
            return Err(Error::invalid(format!(
                "y4m input is 4:2:0 but {} was requested",
                format.name()
            )));
        }
        let (w, h) = (video.frames[0].width, video.frames[0].height);
        if w != width || h != height {
            return Err(Error::invalid(format!(
                "mismatched dimensions: y4m header says {w}x{h}, caller requested {width}x{height}"
            )));
        }
        return Ok(video);
    }
    let frame_size = Frame::file_frame_size(format, width, height)
        .ok_or_else(|| Error::invalid("yuv444r has no 8-bit file layout"))?;
    if bytes.is_empty() || bytes.len() % frame_size != 0 {
        return Err(Error::format(format!(
            "file length {} is not a positive multiple of the {frame_size}-byte frame size",
            bytes.len()
        )));
    }
    let frames = bytes
        .chunks_exact(frame_size)
        .map(|c| Frame::from_bytes(format, width, height, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(RawVideo { frames, fps: (30, 1) })
}

const Y4M_MAGIC: &[u8] = b"YUV4MPEG2 ";

/// Loads a y4m file, taking dimensions and frame rate from its header.
pub fn load_y4m(path: &Path) -> Result<RawVideo> {
    let bytes = fs::read(path)?;
    if !bytes.starts_with(Y4M_MAGIC) {
        return Err(Error::format("missing YUV4MPEG2 magic"));
    }
    parse_y4m(&bytes)
}

fn parse_y4m(bytes: &[u8]) -> Result<RawVideo> {
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("unterminated y4m header"))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::format("y4m header is not ascii"))?;

    let mut width = None;
    let mut height = None;
    let mut fps = (30u32, 1u32);
    for tag in header.split_ascii_whitespace().skip(1) {
        let (key, val) = tag.split_at(1);
        match key {
            "W" => width = Some(val.parse::<usize>().map_err(|_| bad_tag(tag))?),
            "H" => height = Some(val.parse::<usize>().map_err(|_| bad_tag(tag))?),
            "F" => {
                let (n, d) = val.split_once(':').ok_or_else(|| bad_tag(tag))?;
                fps = (
                    n.parse().map_err(|_| bad_tag(tag))?,
                    d.parse().map_err(|_| bad_tag(tag))?,
                );
                if fps.0 == 0 || fps.1 == 0 {
                    return Err(bad_tag(tag));
                }
            }
            "C" => {
                // Only 4:2:0 layouts share our plane geometry; siting
                // suffixes (jpeg/mpeg2/paldv) are accepted and ignored.
                if !val.starts_with("420") {
                    return Err(Error::format(format!("unsupported y4m chroma tag C{val}")));
                }
            }
            // Ip, A, X...: irrelevant to decoding, ignored.
            _ => {}
        }
    }
    let width = width.ok_or_else(|| Error::format("y4m header missing W tag"))?;
    let height = height.ok_or_else(|| Error::format("y4m header missing H tag"))?;
    let frame_size = Frame::file_frame_size(PixelFormat::Yuv420p8, width, height).unwrap();

    let mut frames = Vec::new();
    let mut pos = header_end + 1;
    while pos < bytes.len() {
        let line_end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format("unterminated y4m FRAME marker"))?;
        if !bytes[pos..pos + line_end].starts_with(b"FRAME") {
            return Err(Error::format("expected y4m FRAME marker"));
        }
        pos += line_end + 1;
        if pos + frame_size > bytes.len() {
            return Err(Error::format("truncated y4m frame payload"));
        }
        frames.push(Frame::from_bytes(
            PixelFormat::Yuv420p8,
            width,
            height,
            &bytes[pos..pos + frame_size],
        )?);
        pos += frame_size;
    }
    if frames.is_empty() {
        return Err(Error::format("y4m file contains no frames"));
    }
    Ok(RawVideo { frames, fps })
}

fn bad_tag(tag: &str) -> Error {
    Error::format(format!("malformed y4m header tag {tag:?}"))
}

/// Writes 4:2:0 frames as a y4m file (C420 header, one FRAME marker each).
pub fn save_y4m(path: &Path, frames: &[Frame], fps: (u32, u32)) -> Result<()> {
    let first = frames.first().ok_or_else(|| Error::invalid("no frames to write"))?;
    if first.format != PixelFormat::Yuv420p8 {
        return Err(Error::invalid("y4m output requires yuv420p frames"));
    }
    let mut out = Vec::new();
    out.extend_from_slice(
        format!(
            "YUV4MPEG2 W{} H{} F{}:{} Ip A1:1 C420\n",
            first.width, first.height, fps.0, fps.1
        )
        .as_bytes(),
    );
    for f in frames {
        out.extend_from_slice(b"FRAME\n");
        out.extend_from_slice(&f.to_bytes()?);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes frames as concatenated raw 8-bit payloads (planar yuv420p or
/// interleaved rgb24, by frame format).
pub fn save_raw(path: &Path, frames: &[Frame]) -> Result<()> {
    let mut out = Vec::new();
    for f in frames {
        out.extend_from_slice(&f.to_bytes()?);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Full-range BT.709 RGB -> YUV. Output chroma is centered on 128 and may
/// reach [0.5, 255.5] at saturated inputs; values are left unclamped so the
/// inverse is exact.
pub fn rgb_to_yuv_bt709(f: &Frame) -> Result<Frame> {
    if f.format != PixelFormat::Rgbr {
        return Err(Error::invalid("rgb_to_yuv_bt709 expects an rgb frame"));
    }
    let mut out = Frame::new(PixelFormat::Yuv444r, f.width, f.height)?;
    for i in 0..f.width * f.height {
        let (r, g, b) = (f.planes[0].data[i], f.planes[1].data[i], f.planes[2].data[i]);
        let y = KR * r + KG * g + KB * b;
        out.planes[0].data[i] = y;
        out.planes[1].data[i] = (b - y) / CB_DIV + 128.0;
        out.planes[2].data[i] = (r - y) / CR_DIV + 128.0;
    }
    Ok(out)
}

/// Exact algebraic inverse of [`rgb_to_yuv_bt709`], clamped to [0, 255].
pub fn yuv_to_rgb_bt709(f: &Frame) -> Result<Frame> {
    if f.format != PixelFormat::Yuv444r {
        return Err(Error::invalid("yuv_to_rgb_bt709 expects a yuv444r frame"));
    }
    let mut out = Frame::new(PixelFormat::Rgbr, f.width, f.height)?;
    for i in 0..f.width * f.height {
        let y = f.planes[0].data[i];
        let u = f.planes[1].data[i] - 128.0;
        let v = f.planes[2].data[i] - 128.0;
        let r = y + CR_DIV * v;
        let b = y + CB_DIV * u;
        let g = (y - KR * r - KB * b) / KG;
        out.planes[0].data[i] = r.clamp(0.0, 255.0);
        out.planes[1].data[i] = g.clamp(0.0, 255.0);
        out.planes[2].data[i] = b.clamp(0.0, 255.0);
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ResampleDirection {
    /// 4:2:0 -> 4:4:4, bilinear, chroma co-sited with the top-left luma sample.
    Up,
    /// 4:4:4 -> 4:2:0, 2x2 mean with edge replication at odd boundaries.
    Down,
}

pub fn chroma_resample(f: &Frame, direction: ResampleDirection) -> Result<Frame> {
    match direction {
        ResampleDirection::Up => {
            if f.format != PixelFormat::Yuv420p8 {
                return Err(Error::invalid("chroma upsampling expects a yuv420p frame"));
            }
            let mut out = Frame::new(PixelFormat::Yuv444r, f.width, f.height)?;
            out.planes[0] = f.planes[0].clone();
            for p in 1..3 {
                let src = &f.planes[p];
                let dst = &mut out.planes[p];
                for y in 0..f.height {
                    // Chroma sample (cx, cy) sits at luma position (2cx, 2cy).
                    let v = y as f64 / 2.0;
                    let y0 = v.floor() as isize;
                    let fy = v - y0 as f64;
                    for x in 0..f.width {
                        let u = x as f64 / 2.0;
                        let x0 = u.floor() as isize;
                        let fx = u - x0 as f64;
                        let p00 = src.get_clamped(x0, y0);
                        let p10 = src.get_clamped(x0 + 1, y0);
                        let p01 = src.get_clamped(x0, y0 + 1);
                        let p11 = src.get_clamped(x0 + 1, y0 + 1);
                        let top = p00 + fx * (p10 - p00);
                        let bot = p01 + fx * (p11 - p01);
                        dst.set(x, y, top + fy * (bot - top));
                    }
                }
            }
            Ok(out)
        }
        ResampleDirection::Down => {
            if f.format != PixelFormat::Yuv444r {
                return Err(Error::invalid("chroma downsampling expects a yuv444r frame"));
            }
            let mut out = Frame::new(PixelFormat::Yuv420p8, f.width, f.height)?;
            out.planes[0] = f.planes[0].clone();
            for p in 1..3 {
                let src = &f.planes[p];
                let (cw, ch) = plane_dims(PixelFormat::Yuv420p8, f.width, f.height, p);
                let dst = &mut out.planes[p];
                for cy in 0..ch {
                    for cx in 0..cw {
                        let mut acc = 0.0;
                        for dy in 0..2isize {
                            for dx in 0..2isize {
                                acc += src.get_clamped(2 * cx as isize + dx, 2 * cy as isize + dy);
                            }
                        }
                        dst.set(cx, cy, acc / 4.0);
                    }
                }
            }
            Ok(out)
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QualityReport {
    /// Per-plane PSNR in dB. For RGB frames these hold the R/G/B channels.
    pub psnr_planes: [f64; 3],
    /// (6*Y + U + V) / 8 for YUV input; overall-MSE PSNR for RGB input.
    pub psnr_weighted: f64,
    /// Overall RGB PSNR when an RGB view was supplied.
    pub psnr_rgb: Option<f64>,
    /// MSE-domain distortion. With both views: 0.8 * mse_yuv + 0.2 * mse_rgb.
    pub combined_distortion: f64,
}

/// Weight of the YUV term in the combined distortion.
pub const DISTORTION_YUV_WEIGHT: f64 = 0.8;

fn psnr_from_mse(mse: f64, cap: f64) -> f64 {
    if mse <= 0.0 {
        cap
    } else {
        (10.0 * (PEAK_SQ / mse).log10()).min(cap)
    }
}

fn check_same_shape(a: &Frame, b: &Frame) -> Result<()> {
    if a.format != b.format || a.width != b.width || a.height != b.height {
        return Err(Error::invalid(format!(
            "psnr inputs differ: {}x{} {} vs {}x{} {}",
            a.width,
            a.height,
            a.format.name(),
            b.width,
            b.height,
            b.format.name()
        )));
    }
    Ok(())
}

fn plane_sse(a: &Plane, b: &Plane) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn frame_mse(a: &Frame, b: &Frame) -> f64 {
    let mut sse = 0.0;
    let mut n = 0usize;
    for p in 0..3 {
        sse += plane_sse(&a.planes[p], &b.planes[p]);
        n += a.planes[p].data.len();
    }
    sse / n as f64
}

/// PSNR between two frames of identical shape. `cap` bounds every reported
/// value and is returned verbatim for exact matches.
pub fn psnr(a: &Frame, b: &Frame, cap: f64) -> Result<QualityReport> {
    check_same_shape(a, b)?;
    let mut psnr_planes = [0.0; 3];
    for p in 0..3 {
        let mse = plane_sse(&a.planes[p], &b.planes[p]) / a.planes[p].data.len() as f64;
        psnr_planes[p] = psnr_from_mse(mse, cap);
    }
    let overall_mse = frame_mse(a, b);
    let (psnr_weighted, psnr_rgb) = match a.format {
        PixelFormat::Rgbr => {
            let v = psnr_from_mse(overall_mse, cap);
            (v, Some(v))
        }
        _ => ((6.0 * psnr_planes[0] + psnr_planes[1] + psnr_planes[2]) / 8.0, None),
    };
    Ok(QualityReport { psnr_planes, psnr_weighted, psnr_rgb, combined_distortion: overall_mse })
}

/// PSNR with both colorspace views of the same content. The YUV pair drives
/// the per-plane and weighted numbers; the RGB pair fills `psnr_rgb` and the
/// 0.8/0.2 combined distortion.
pub fn psnr_dual(
    a_yuv: &Frame,
    b_yuv: &Frame,
    a_rgb: &Frame,
    b_rgb: &Frame,
    cap: f64,
) -> Result<QualityReport> {
    if a_rgb.format != PixelFormat::Rgbr {
        return Err(Error::invalid("psnr_dual rgb view must be rgb"));
    }
    check_same_shape(a_rgb, b_rgb)?;
    let mut report = psnr(a_yuv, b_yuv, cap)?;
    let mse_rgb = frame_mse(a_rgb, b_rgb);
    report.psnr_rgb = Some(psnr_from_mse(mse_rgb, cap));
    report.combined_distortion = DISTORTION_YUV_WEIGHT * report.combined_distortion
        + (1.0 - DISTORTION_YUV_WEIGHT) * mse_rgb;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rgb_frame(w: usize, h: usize, fill: impl Fn(usize, usize) -> (f64, f64, f64)) -> Frame {
        let mut f = Frame::new(PixelFormat::Rgbr, w, h).unwrap();
        for y in 0..h {
            for x in 0..w {
                let (r, g, b) = fill(x, y);
                f.planes[0].set(x, y, r);
                f.planes[1].set(x, y, g);
                f.planes[2].set(x, y, b);
            }
        }
        f
    }

    fn convert_one(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
        let f = rgb_frame(16, 16, |_, _| (r, g, b));
        let yuv = rgb_to_yuv_bt709(&f).unwrap();
        (yuv.planes[0].data[0], yuv.planes[1].data[0], yuv.planes[2].data[0])
    }

    // References evaluated with a 30-digit decimal oracle on the analysis
    // matrix; tolerance 1e-9.
    #[test]
    fn bt709_forward_goldens() {
        let cases = [
            ((255.0, 0.0, 0.0), (54.213, 98.784112955378314, 255.5)),
            ((255.0, 255.0, 255.0), (255.0, 128.0, 128.0)),
            ((0.0, 0.0, 0.0), (0.0, 128.0, 128.0)),
            ((0.0, 255.0, 0.0), (182.376, 29.715887044621686, 12.191008382016764)),
            ((0.0, 0.0, 255.0), (18.411, 255.5, 116.308991617983236)),
            ((128.0, 128.0, 128.0), (128.0, 128.0, 128.0)),
        ];
        for ((r, g, b), (ey, eu, ev)) in cases {
            let (y, u, v) = convert_one(r, g, b);
            assert!((y - ey).abs() < 1e-9, "Y for ({r},{g},{b}): {y} vs {ey}");
            assert!((u - eu).abs() < 1e-9, "U for ({r},{g},{b}): {u} vs {eu}");
            assert!((v - ev).abs() < 1e-9, "V for ({r},{g},{b}): {v} vs {ev}");
        }
    }

    #[test]
    fn bt709_round_trip_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x709);
        let mut f = Frame::new(PixelFormat::Rgbr, 16, 16).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            for p in &mut f.planes {
                for v in &mut p.data {
                    *v = rng.random_range(0..=255) as f64;
                }
            }
            let back = yuv_to_rgb_bt709(&rgb_to_yuv_bt709(&f).unwrap()).unwrap();
            for p in 0..3 {
                for (a, b) in f.planes[p].data.iter().zip(&back.planes[p].data) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        assert!(worst < 1e-9, "round-trip error {worst}");
    }

    #[test]
    fn psnr_off_by_one_golden() {
        let a = rgb_frame(16, 16, |_, _| (10.0, 10.0, 10.0));
        let mut b = a.clone();
        for p in &mut b.planes {
            for v in &mut p.data {
                *v += 1.0;
            }
        }
        // 10*log10(255^2), frozen from an independent evaluation.
        let expect = 48.1308036086791;
        let r = psnr(&a, &b, 100.0).unwrap();
        for p in 0..3 {
            assert!((r.psnr_planes[p] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn psnr_identical_hits_cap_and_weighting_is_exact() {
        let a = rgb_frame(16, 16, |x, y| (x as f64, y as f64, 7.0));
        let r = psnr(&a, &a, 100.0).unwrap();
        assert_eq!(r.psnr_weighted, 100.0);
        assert_eq!(r.combined_distortion, 0.0);

        // Construct YUV planes with known per-plane MSEs 1, 4, 16.
        let mut ya = Frame::new(PixelFormat::Yuv444r, 16, 16).unwrap();
        let mut yb = ya.clone();
        for (p, d) in [1.0, 2.0, 4.0].iter().enumerate() {
            for v in &mut yb.planes[p].data {
                *v += d;
            }
        }
        let _ = &mut ya;
        let r = psnr(&ya, &yb, 100.0).unwrap();
        let e = [
            48.1308036086791,
            48.1308036086791 - 20.0 * (2.0f64).log10(),
            48.1308036086791 - 20.0 * (4.0f64).log10(),
        ];
        let expect_w = (6.0 * e[0] + e[1] + e[2]) / 8.0;
        assert!((r.psnr_weighted - expect_w).abs() < 1e-9);
    }

    #[test]
    fn psnr_dual_combines_distortion() {
        let a = Frame::new(PixelFormat::Yuv444r, 16, 16).unwrap();
        let mut b = a.clone();
        for p in &mut b.planes {
            for v in &mut p.data {
                *v += 1.0;
            }
        }
        let ar = rgb_frame(16, 16, |_, _| (0.0, 0.0, 0.0));
        let mut br = ar.clone();
        for p in &mut br.planes {
            for v in &mut p.data {
                *v += 3.0;
            }
        }
        let r = psnr_dual(&a, &b, &ar, &br, 100.0).unwrap();
        assert!((r.combined_distortion - (0.8 * 1.0 + 0.2 * 9.0)).abs() < 1e-12);
        assert!(r.psnr_rgb.is_some());
    }

    #[test]
    fn psnr_rejects_shape_mismatch() {
        let a = Frame::new(PixelFormat::Yuv444r, 16, 16).unwrap();
        let b = Frame::new(PixelFormat::Yuv444r, 32, 16).unwrap();
        assert!(psnr(&a, &b, 100.0).is_err());
        let c = Frame::new(PixelFormat::Rgbr, 16, 16).unwrap();
        assert!(psnr(&a, &c, 100.0).is_err());
    }

    #[test]
    fn frame_rejects_tiny_dimensions() {
        assert!(Frame::new(PixelFormat::Yuv444r, 15, 64).is_err());
        assert!(Frame::new(PixelFormat::Yuv444r, 64, 8).is_err());
        assert!(Frame::new(PixelFormat::Yuv444r, 16, 16).is_ok());
    }

    #[test]
    fn chroma_up_preserves_constants_and_down_up_is_identity_there() {
        let mut f = Frame::new(PixelFormat::Yuv420p8, 32, 32).unwrap();
        for (p, val) in [(0usize, 99.0), (1, 42.0), (2, 200.0)] {
            for v in &mut f.planes[p].data {
                *v = val;
            }
        }
        let up = chroma_resample(&f, ResampleDirection::Up).unwrap();
        assert_eq!(up.format, PixelFormat::Yuv444r);
        for (p, val) in [(0usize, 99.0), (1, 42.0), (2, 200.0)] {
            assert!(up.planes[p].data.iter().all(|&v| v == val));
            assert_eq!(up.planes[p].data.len(), 32 * 32);
        }
        let down = chroma_resample(&up, ResampleDirection::Down).unwrap();
        assert_eq!(down.planes[1], f.planes[1]);
        assert_eq!(down.planes[2], f.planes[2]);
    }

    #[test]
    fn chroma_down_is_2x2_mean_and_replicates_edges() {
        let mut f = Frame::new(PixelFormat::Yuv444r, 17, 16).unwrap();
        for y in 0..16 {
            for x in 0..17 {
                f.planes[1].set(x, y, (x + 17 * y) as f64);
            }
        }
        let down = chroma_resample(&f, ResampleDirection::Down).unwrap();
        let (cw, ch) = plane_dims(PixelFormat::Yuv420p8, 17, 16, 1);
        assert_eq!((cw, ch), (9, 8));
        // Interior 2x2 mean.
        let m = |x: usize, y: usize| (x + 17 * y) as f64;
        assert_eq!(down.planes[1].get(1, 1), (m(2, 2) + m(3, 2) + m(2, 3) + m(3, 3)) / 4.0);
        // Last chroma column covers luma column 16 twice (edge replication).
        assert_eq!(down.planes[1].get(8, 0), (m(16, 0) + m(16, 0) + m(16, 1) + m(16, 1)) / 4.0);
    }

    #[test]
    fn chroma_up_on_smooth_ramp_stays_within_one_code() {
        let mut f = Frame::new(PixelFormat::Yuv420p8, 32, 32).unwrap();
        let (cw, ch) = plane_dims(PixelFormat::Yuv420p8, 32, 32, 1);
        for cy in 0..ch {
            for cx in 0..cw {
                f.planes[1].set(cx, cy, (cx + cy) as f64);
            }
        }
        // The reference 4:4:4 ramp the chroma plane was sampled from.
        let up = chroma_resample(&f, ResampleDirection::Up).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let want = (x as f64 + y as f64) / 2.0;
                assert!(
                    (up.planes[1].get(x, y) - want).abs() <= 1.0,
                    "({x},{y}): {} vs {want}",
                    up.planes[1].get(x, y)
                );
            }
        }
    }

    #[test]
    fn raw_round_trip_and_truncation() {
        let dir = std::env::temp_dir().join("fmcodec_pixels_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("clip.yuv");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut frames = Vec::new();
        for _ in 0..3 {
            let mut f = Frame::new(PixelFormat::Yuv420p8, 32, 16).unwrap();
            for p in &mut f.planes {
                for v in &mut p.data {
                    *v = rng.random_range(0..=255) as f64;
                }
            }
            frames.push(f);
        }
        save_raw(&path, &frames).unwrap();
        let loaded = load_raw(&path, 32, 16, PixelFormat::Yuv420p8).unwrap();
        assert_eq!(loaded.frames.len(), 3);
        assert_eq!(loaded.fps, (30, 1));
        for (a, b) in frames.iter().zip(&loaded.frames) {
            assert_eq!(a, b);
        }
        // Chop one byte: no longer a multiple of the frame size.
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        let bad = dir.join("truncated.yuv");
        fs::write(&bad, &bytes).unwrap();
        assert!(load_raw(&bad, 32, 16, PixelFormat::Yuv420p8).is_err());
    }

    #[test]
    fn y4m_round_trip_and_header_validation() {
        let dir = std::env::temp_dir().join("fmcodec_pixels_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("clip.y4m");
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut frames = Vec::new();
        for _ in 0..2 {
            let mut f = Frame::new(PixelFormat::Yuv420p8, 64, 64).unwrap();
            for p in &mut f.planes {
                for v in &mut p.data {
                    *v = rng.random_range(0..=255) as f64;
                }
            }
            frames.push(f);
        }
        save_y4m(&path, &frames, (30, 1)).unwrap();
        let loaded = load_y4m(&path).unwrap();
        assert_eq!(loaded.fps, (30, 1));
        assert_eq!(loaded.frames, frames);
        // load_raw dispatches on the magic and validates dimensions.
        let via_raw = load_raw(&path, 64, 64, PixelFormat::Yuv420p8).unwrap();
        assert_eq!(via_raw.frames, frames);
        assert!(load_raw(&path, 32, 64, PixelFormat::Yuv420p8).is_err());
        assert!(load_raw(&path, 64, 64, PixelFormat::Rgbr).is_err());

        let c444 = b"YUV4MPEG2 W64 H64 F30:1 C444\nFRAME\n".to_vec();
        let bad = dir.join("c444.y4m");
        fs::write(&bad, &c444).unwrap();
        let err = load_y4m(&bad).unwrap_err();
        assert!(err.to_string().contains("chroma"), "{err}");
    }

    #[test]
    fn rgb24_bytes_interleave_and_round() {
        let mut f = Frame::new(PixelFormat::Rgbr, 16, 16).unwrap();
        f.planes[0].set(0, 0, 1.4);
        f.planes[1].set(0, 0, 1.5);
        f.planes[2].set(0, 0, -3.0);
        f.planes[0].set(1, 0, 255.7);
        let bytes = f.to_bytes().unwrap();
        // Half rounds away from zero; clamp to [0, 255].
        assert_eq!(&bytes[0..4], &[1, 2, 0, 255]);
        let back = Frame::from_bytes(PixelFormat::Rgbr, 16, 16, &bytes).unwrap();
        assert_eq!(back.planes[0].get(1, 0), 255.0);
    }
}
