//! Python bindings over the file-level toolkit: clip synthesis, encode,
//! decode, quality metrics, BD-Rate, and schedule lookups. Paths in,
//! plain dicts and floats out; heavy pixel data stays on the Rust side.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fmcodec::codec::{
    decode_sequence, encode_sequence, from_working, CodecConfig, RateMode, PSNR_CAP,
};
use fmcodec::entropy::BitstreamContainer;
use fmcodec::evalkit::{bd_rate as bd_rate_impl, RDCurve};
use fmcodec::pixels::{load_raw, psnr, save_raw, save_y4m, PixelFormat, RawVideo};
use fmcodec::ratecontrol::TargetSchedule;
use fmcodec::synth::{generate, ClipKind};
use fmcodec::transformq::QuantSchedule;

fn err(e: fmcodec::Error) -> PyErr {
    match e {
        fmcodec::Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_fmt(name: &str) -> PyResult<PixelFormat> {
    match name {
        "yuv420p" => Ok(PixelFormat::Yuv420p8),
        "rgb24" => Ok(PixelFormat::Rgbr),
        _ => Err(PyValueError::new_err(format!(
            "unknown pixel format {name:?}, expected yuv420p or rgb24"
        ))),
    }
}

fn load_schedule(path: Option<PathBuf>) -> PyResult<QuantSchedule> {
    match path {
        Some(p) => QuantSchedule::load(&p).map_err(err),
        None => Ok(QuantSchedule::default()),
    }
}

fn save_clip(path: &Path, video: &RawVideo) -> PyResult<()> {
    let y4m = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"));
    if y4m { save_y4m(path, &video.frames, video.fps) } else { save_raw(path, &video.frames) }
        .map_err(err)
}

/// Writes a deterministic synthetic clip; kind is static, pan-detail, or
/// noise. A .y4m extension selects the y4m container (yuv420p only).
#[pyfunction]
#[pyo3(signature = (kind, width, height, frames, seed, output, pix_fmt = "yuv420p"))]
fn gen_clip(
    kind: &str,
    width: usize,
    height: usize,
    frames: usize,
    seed: u64,
    output: PathBuf,
    pix_fmt: &str,
) -> PyResult<()> {
    let video =
        generate(ClipKind::parse(kind).map_err(err)?, parse_fmt(pix_fmt)?, width, height, frames, seed)
            .map_err(err)?;
    save_clip(&output, &video)
}

/// Encodes a raw or y4m clip. Exactly one of q and rc_target_bps selects
/// the rate mode; q=32 is the default. Returns a summary dict.
#[pyfunction]
#[pyo3(signature = (
    input, width, height, pix_fmt, output,
    q = None, rc_target_bps = None, refresh_period = 32, intra_period = -1,
    schedule = None, recon_out = None,
))]
#[allow(clippy::too_many_arguments)]
fn encode_file(
    py: Python<'_>,
    input: PathBuf,
    width: usize,
    height: usize,
    pix_fmt: &str,
    output: PathBuf,
    q: Option<u8>,
    rc_target_bps: Option<f64>,
    refresh_period: u16,
    intra_period: i64,
    schedule: Option<PathBuf>,
    recon_out: Option<PathBuf>,
) -> PyResult<Py<PyDict>> {
    let video = load_raw(&input, width, height, parse_fmt(pix_fmt)?).map_err(err)?;
    let sched = load_schedule(schedule)?;
    let rate = match (q, rc_target_bps) {
        (Some(_), Some(_)) => {
            return Err(PyValueError::new_err("pass either q or rc_target_bps, not both"))
        }
        (None, Some(bps)) => RateMode::Target(TargetSchedule::constant(bps).map_err(err)?),
        (q, None) => RateMode::FixedQ(q.unwrap_or(32)),
    };
    let config = CodecConfig { refresh_period, intra_period, ..CodecConfig::default() };
    let enc = encode_sequence(&video, &rate, &config, &sched).map_err(err)?;
    std::fs::write(&output, enc.container.write())?;
    if let Some(path) = recon_out {
        let native = enc
            .recons
            .iter()
            .map(|f| from_working(f, video.frames[0].format))
            .collect::<fmcodec::Result<Vec<_>>>()
            .map_err(err)?;
        save_clip(&path, &RawVideo { frames: native, fps: video.fps })?;
    }
    let n = enc.logs.len();
    let bits: u64 = enc.logs.iter().map(|l| l.bits).sum();
    let d = PyDict::new(py);
    d.set_item("frames", n)?;
    d.set_item("bits", bits)?;
    d.set_item("bpp", bits as f64 / (width * height * n) as f64)?;
    d.set_item(
        "mean_psnr_weighted",
        enc.logs.iter().map(|l| l.psnr_weighted).sum::<f64>() / n as f64,
    )?;
    Ok(d.into())
}

/// Decodes a bitstream back to a clip file chosen by extension.
#[pyfunction]
#[pyo3(signature = (input, output, schedule = None))]
fn decode_file(
    py: Python<'_>,
    input: PathBuf,
    output: PathBuf,
    schedule: Option<PathBuf>,
) -> PyResult<Py<PyDict>> {
    let bytes = std::fs::read(&input)?;
    let container = BitstreamContainer::read(&bytes).map_err(err)?;
    let sched = load_schedule(schedule)?;
    let dec = decode_sequence(&container, &CodecConfig::default(), &sched).map_err(err)?;
    save_clip(&output, &dec.video)?;
    let d = PyDict::new(py);
    d.set_item("frames", dec.video.frames.len())?;
    d.set_item("width", container.header.width)?;
    d.set_item("height", container.header.height)?;
    d.set_item("pix_fmt", container.header.pix_fmt.name())?;
    Ok(d.into())
}

/// Mean per-plane and weighted PSNR between two clips of the same shape.
#[pyfunction]
fn psnr_files(
    py: Python<'_>,
    a: PathBuf,
    b: PathBuf,
    width: usize,
    height: usize,
    pix_fmt: &str,
) -> PyResult<Py<PyDict>> {
    let format = parse_fmt(pix_fmt)?;
    let va = load_raw(&a, width, height, format).map_err(err)?;
    let vb = load_raw(&b, width, height, format).map_err(err)?;
    if va.frames.len() != vb.frames.len() {
        return Err(PyValueError::new_err(format!(
            "clip lengths differ: {} vs {}",
            va.frames.len(),
            vb.frames.len()
        )));
    }
    let mut planes = [0.0f64; 3];
    let mut weighted = 0.0;
    for (fa, fb) in va.frames.iter().zip(&vb.frames) {
        let r = psnr(fa, fb, PSNR_CAP).map_err(err)?;
        for (acc, v) in planes.iter_mut().zip(r.psnr_planes) {
            *acc += v;
        }
        weighted += r.psnr_weighted;
    }
    let n = va.frames.len() as f64;
    let names = if format == PixelFormat::Rgbr { ["r", "g", "b"] } else { ["y", "u", "v"] };
    let d = PyDict::new(py);
    for (name, acc) in names.iter().zip(planes) {
        d.set_item(name, acc / n)?;
    }
    d.set_item("weighted", weighted / n)?;
    Ok(d.into())
}

/// BD-Rate in percent between two (bpp, quality_db) curves; negative
/// means the test curve spends fewer bits at equal quality.
#[pyfunction]
fn bd_rate(anchor: Vec<(f64, f64)>, test: Vec<(f64, f64)>) -> PyResult<f64> {
    let a = RDCurve::new(anchor, "anchor").map_err(err)?;
    let b = RDCurve::new(test, "test").map_err(err)?;
    bd_rate_impl(&a, &b).map_err(err)
}

/// lambda, s_enc, and s_dec of the built-in schedule at one q index.
#[pyfunction]
fn quant_schedule(py: Python<'_>, q: u8) -> PyResult<Py<PyDict>> {
    let sched = QuantSchedule::default();
    let d = PyDict::new(py);
    d.set_item("lambda", sched.lambda(q).map_err(err)?)?;
    d.set_item("s_enc", sched.s_enc(q).map_err(err)?)?;
    d.set_item("s_dec", sched.s_dec(q).map_err(err)?)?;
    Ok(d.into())
}

#[pymodule]
fn fmcodec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(gen_clip, m)?)?;
    m.add_function(wrap_pyfunction!(encode_file, m)?)?;
    m.add_function(wrap_pyfunction!(decode_file, m)?)?;
    m.add_function(wrap_pyfunction!(psnr_files, m)?)?;
    m.add_function(wrap_pyfunction!(bd_rate, m)?)?;
    m.add_function(wrap_pyfunction!(quant_schedule, m)?)?;
    Ok(())
}
