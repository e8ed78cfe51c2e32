//! The coding loop: motion-conditioned inter frames, periodic state
//! refresh, and closed-loop reconstruction.
//!
//! Everything is coded in a real-valued 4:4:4 Y'CbCr working space; 4:2:0
//! input is upsampled on the way in and rgb24 goes through the BT.709
//! matrix. The decoder mirrors the encoder step for step on identical
//! state, so its reconstructions are bit-identical to the encoder's local
//! ones; that equality is the correctness anchor most tests lean on.
//!
//! Inter frames carry a half-pel motion field (coarsened to full-pel at
//! the coarse half of the q range) and DCT residuals against a temporal
//! context blended from the previous reconstruction and a slowly moving
//! accumulated reference. The accumulated reference deliberately smears
//! under repeated warping; the periodic refresh rebuilds state from the
//! previous reconstruction alone, which is what keeps long chains from
//! drifting.

use crate::entropy::{
    code_coeff_block, code_motion, decode_coeff_block, decode_motion, round_field_for_q,
    BitDecoder, BitEncoder, BitstreamContainer, CoeffContexts, FrameRecord, FrameType,
    SequenceHeader,
};
use crate::motion::{estimate_motion, warp_bilinear, MotionField, WarpPrecision};
use crate::pixels::{
    chroma_resample, psnr, rgb_to_yuv_bt709, yuv_to_rgb_bt709, Frame, PixelFormat, RawVideo,
    ResampleDirection,
};
use crate::ratecontrol::{rc_update, RcState, TargetSchedule};
use crate::transformq::{
    dct8_forward, dct8_inverse, dequantize_latent, derive_spatial_scalers, extract_block8,
    quantize_latent, store_block8, QuantSchedule,
};
use crate::{Error, Result};

pub const DEFAULT_REFRESH_PERIOD: u16 = 32;
pub const DEFAULT_SEARCH_RANGE: usize = 16;
pub const PSNR_CAP: f64 = 100.0;

/// Encoder-side knobs. `context_blend` and `ema_keep` shape the decoder
/// state too but are not written to the container, so both sides must be
/// constructed with the same values; only the defaults are part of the
/// interchange format, the overrides exist for experiments.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct CodecConfig {
    /// Frames between state refreshes; 0 disables refreshing.
    pub refresh_period: u16,
    /// -1 codes a single intra frame at t = 0; n > 0 codes one every n.
    pub intra_period: i64,
    pub search_range: usize,
    /// Weight of the previous reconstruction in the context blend; the
    /// accumulated reference gets the complement.
    pub context_blend: f64,
    /// Weight of the warped old accumulated reference in its update; the
    /// new reconstruction gets the complement.
    pub ema_keep: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            refresh_period: DEFAULT_REFRESH_PERIOD,
            intra_period: -1,
            search_range: DEFAULT_SEARCH_RANGE,
            context_blend: 0.5,
            ema_keep: 0.8,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.intra_period == 0 || self.intra_period < -1 {
            return Err(Error::invalid(format!(
                "intra period must be -1 or positive, got {}",
                self.intra_period
            )));
        }
        if self.search_range == 0 {
            return Err(Error::invalid("search range must be positive"));
        }
        for (name, v) in [("context blend", self.context_blend), ("ema keep", self.ema_keep)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} weight {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// How q is chosen per frame.
#[derive(Clone, PartialEq, Debug)]
pub enum RateMode {
    FixedQ(u8),
    Target(TargetSchedule),
}

/// Everything the inter chain carries between frames.
#[derive(Clone, PartialEq, Debug)]
pub struct TemporalState {
    pub recon_prev: Frame,
    /// Exponential moving average of motion-aligned reconstructions.
    pub acc_ref: Frame,
    pub mv_pred: MotionField,
    pub contexts: CoeffContexts,
}

impl TemporalState {
    fn from_intra(recon: Frame, contexts: CoeffContexts) -> Self {
        let field = MotionField::zero(recon.width, recon.height);
        TemporalState { acc_ref: recon.clone(), recon_prev: recon, mv_pred: field, contexts }
    }
}

/// Rebuilds the carried state from the previous reconstruction alone:
/// accumulated reference collapses onto it, motion predictor zeroes,
/// coder contexts return to equiprobable.
pub fn apply_refresh(state: &mut TemporalState) {
    state.acc_ref = state.recon_prev.clone();
    state.mv_pred = MotionField::zero(state.recon_prev.width, state.recon_prev.height);
    state.contexts = CoeffContexts::new();
}

/// The prediction the residual is taken against: a motion-aligned blend of
/// the previous reconstruction and the accumulated reference, or the
/// former alone on refresh frames (the accumulated side is about to be
/// rebuilt and is not trusted).
pub fn extract_context(
    state: &TemporalState,
    field: &MotionField,
    refresh: bool,
    blend: f64,
) -> Result<Frame> {
    let warped_prev = warp_bilinear(&state.recon_prev, field, WarpPrecision::Fp32)?;
    if refresh {
        return Ok(warped_prev);
    }
    let warped_acc = warp_bilinear(&state.acc_ref, field, WarpPrecision::Fp32)?;
    let mut out = warped_prev;
    for (dst, acc) in out.planes.iter_mut().zip(&warped_acc.planes) {
        for (d, a) in dst.data.iter_mut().zip(&acc.data) {
            *d = blend * *d + (1.0 - blend) * *a;
        }
    }
    Ok(out)
}

fn blend_frames(keep: f64, old: &Frame, take: f64, new: &Frame) -> Frame {
    let mut out = old.clone();
    for (dst, n) in out.planes.iter_mut().zip(&new.planes) {
        for (d, v) in dst.data.iter_mut().zip(&n.data) {
            *d = keep * *d + take * *v;
        }
    }
    out
}

fn clamp_frame(f: &mut Frame) {
    for p in &mut f.planes {
        for v in &mut p.data {
            *v = v.clamp(0.0, 255.0);
        }
    }
}

/// Codes `plane_src` against `prediction` into `enc`, returning the
/// reconstructed plane. With no prediction the plane itself is transformed
/// (intra) and every block uses spatial scaler 1.
fn code_planes(
    enc: &mut BitEncoder,
    contexts: &mut CoeffContexts,
    source: &Frame,
    prediction: Option<&Frame>,
    q: u8,
    sched: &QuantSchedule,
) -> Result<Frame> {
    let mut recon = source.clone();
    for (pi, out_plane) in recon.planes.iter_mut().enumerate() {
        let src_plane = &source.planes[pi];
        let scalers = prediction.map(|p| derive_spatial_scalers(&p.planes[pi]));
        let mut residual = src_plane.clone();
        if let Some(pred) = prediction {
            for (r, p) in residual.data.iter_mut().zip(&pred.planes[pi].data) {
                *r -= *p;
            }
        }
        let mut rec_residual = residual.clone();
        for by in 0..src_plane.height.div_ceil(8) {
            for bx in 0..src_plane.width.div_ceil(8) {
                let w = scalers.as_ref().map_or(1.0, |s| s.get(bx, by));
                let coeffs = dct8_forward(&extract_block8(&residual, bx, by));
                let levels = quantize_latent(&coeffs, q, w, sched)?;
                code_coeff_block(enc, contexts, &levels);
                let deq = dequantize_latent(&levels, q, w, sched)?;
                store_block8(&mut rec_residual, bx, by, &dct8_inverse(&deq));
            }
        }
        if let Some(pred) = prediction {
            for (r, p) in rec_residual.data.iter_mut().zip(&pred.planes[pi].data) {
                *r += *p;
            }
        }
        *out_plane = rec_residual;
    }
    clamp_frame(&mut recon);
    Ok(recon)
}

/// Mirror of code_planes driven by the decoded coefficient stream.
fn decode_planes(
    dec: &mut BitDecoder,
    contexts: &mut CoeffContexts,
    width: usize,
    height: usize,
    prediction: Option<&Frame>,
    q: u8,
    sched: &QuantSchedule,
) -> Result<Frame> {
    let mut recon = Frame::new(PixelFormat::Yuv444r, width, height)?;
    for (pi, out_plane) in recon.planes.iter_mut().enumerate() {
        let scalers = prediction.map(|p| derive_spatial_scalers(&p.planes[pi]));
        for by in 0..height.div_ceil(8) {
            for bx in 0..width.div_ceil(8) {
                let w = scalers.as_ref().map_or(1.0, |s| s.get(bx, by));
                let levels = decode_coeff_block(dec, contexts)?;
                let deq = dequantize_latent(&levels, q, w, sched)?;
                store_block8(out_plane, bx, by, &dct8_inverse(&deq));
            }
        }
        if let Some(pred) = prediction {
            for (r, p) in out_plane.data.iter_mut().zip(&pred.planes[pi].data) {
                *r += *p;
            }
        }
    }
    clamp_frame(&mut recon);
    Ok(recon)
}

/// Intra frame: transform coding of the frame itself, unit spatial
/// scalers, coder contexts starting from scratch. Returns the record, the
/// state seeded for the following inter frames, and the reconstruction.
pub fn encode_intra_frame(
    x: &Frame,
    q: u8,
    refresh: bool,
    sched: &QuantSchedule,
) -> Result<(FrameRecord, TemporalState, Frame)> {
    let mut contexts = CoeffContexts::new();
    let mut enc = BitEncoder::new();
    let recon = code_planes(&mut enc, &mut contexts, x, None, q, sched)?;
    let record =
        FrameRecord { frame_type: FrameType::Intra, q, refresh, motion: Vec::new(), coeff: enc.finish() };
    Ok((record, TemporalState::from_intra(recon.clone(), contexts), recon))
}

pub fn decode_intra_frame(
    record: &FrameRecord,
    width: usize,
    height: usize,
    sched: &QuantSchedule,
) -> Result<(Frame, TemporalState)> {
    let mut contexts = CoeffContexts::new();
    let mut dec = BitDecoder::new(&record.coeff)?;
    let recon =
        decode_planes(&mut dec, &mut contexts, width, height, None, record.q, sched)?;
    Ok((recon.clone(), TemporalState::from_intra(recon, contexts)))
}

/// Inter frame. Steps: refresh the state if due, estimate and code motion
/// against the predictor, build the context, transform-code the residual
/// with context-derived spatial scalers, then roll the state forward
/// (reconstruction, EMA reference, motion predictor, adapted contexts).
pub fn encode_inter_frame(
    x: &Frame,
    state: &mut TemporalState,
    q: u8,
    refresh: bool,
    config: &CodecConfig,
    sched: &QuantSchedule,
) -> Result<(FrameRecord, Frame)> {
    if x.width != state.recon_prev.width || x.height != state.recon_prev.height {
        return Err(Error::invalid("frame dimensions changed mid-sequence"));
    }
    if refresh {
        apply_refresh(state);
    }
    let field = estimate_motion(x, &state.recon_prev, config.search_range)?;
    let field = round_field_for_q(&field, q, sched.q_num);
    let mut menc = BitEncoder::new();
    code_motion(&mut menc, &field, &state.mv_pred);
    let context = extract_context(state, &field, refresh, config.context_blend)?;
    let mut enc = BitEncoder::new();
    let recon = code_planes(&mut enc, &mut state.contexts, x, Some(&context), q, sched)?;
    let record = FrameRecord {
        frame_type: FrameType::Inter,
        q,
        refresh,
        motion: menc.finish(),
        coeff: enc.finish(),
    };
    advance_state(state, recon.clone(), field, refresh, config)?;
    Ok((record, recon))
}

pub fn decode_inter_frame(
    record: &FrameRecord,
    state: &mut TemporalState,
    config: &CodecConfig,
    sched: &QuantSchedule,
) -> Result<Frame> {
    if record.refresh {
        apply_refresh(state);
    }
    let mut mdec = BitDecoder::new(&record.motion)?;
    let field = decode_motion(&mut mdec, &state.mv_pred)?;
    let context = extract_context(state, &field, record.refresh, config.context_blend)?;
    let mut dec = BitDecoder::new(&record.coeff)?;
    let recon = decode_planes(
        &mut dec,
        &mut state.contexts,
        context.width,
        context.height,
        Some(&context),
        record.q,
        sched,
    )?;
    advance_state(state, recon.clone(), field, record.refresh, config)?;
    Ok(recon)
}

fn advance_state(
    state: &mut TemporalState,
    recon: Frame,
    field: MotionField,
    refresh: bool,
    config: &CodecConfig,
) -> Result<()> {
    state.acc_ref = if refresh {
        recon.clone()
    } else {
        let aligned = warp_bilinear(&state.acc_ref, &field, WarpPrecision::Fp32)?;
        blend_frames(config.ema_keep, &aligned, 1.0 - config.ema_keep, &recon)
    };
    state.recon_prev = recon;
    state.mv_pred = field;
    Ok(())
}

/// Per-frame encoder log row; quality is weighted PSNR against the source
/// in the 4:4:4 working space.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct FrameLog {
    pub t: u64,
    pub frame_type: FrameType,
    pub q: u8,
    pub refresh: bool,
    pub bits: u64,
    pub psnr_weighted: f64,
}

#[derive(Clone, PartialEq, Debug)]
pub struct EncodeResult {
    pub container: BitstreamContainer,
    /// Encoder-side reconstructions in the working space, frame per frame.
    pub recons: Vec<Frame>,
    pub logs: Vec<FrameLog>,
}

#[derive(Clone, PartialEq, Debug)]
pub struct DecodeResult {
    /// Decoded reconstructions in the working space.
    pub recons: Vec<Frame>,
    /// Reconstruction converted back to the container's pixel format.
    pub video: RawVideo,
}

/// Converts a stored frame into the 4:4:4 working space.
pub fn to_working(frame: &Frame) -> Result<Frame> {
    match frame.format {
        PixelFormat::Yuv444r => Ok(frame.clone()),
        PixelFormat::Yuv420p8 => chroma_resample(frame, ResampleDirection::Up),
        PixelFormat::Rgbr => rgb_to_yuv_bt709(frame),
    }
}

/// Converts a working-space reconstruction back to the stored format.
pub fn from_working(frame: &Frame, format: PixelFormat) -> Result<Frame> {
    match format {
        PixelFormat::Yuv444r => Ok(frame.clone()),
        PixelFormat::Yuv420p8 => chroma_resample(frame, ResampleDirection::Down),
        PixelFormat::Rgbr => yuv_to_rgb_bt709(frame),
    }
}

fn frame_decision(t: u64, config: &CodecConfig) -> (FrameType, bool) {
    let intra = t == 0
        || (config.intra_period > 0 && t % config.intra_period as u64 == 0);
    let refresh =
        config.refresh_period > 0 && t > 0 && t % config.refresh_period as u64 == 0;
    (if intra { FrameType::Intra } else { FrameType::Inter }, refresh)
}

pub fn encode_sequence(
    video: &RawVideo,
    rate: &RateMode,
    config: &CodecConfig,
    sched: &QuantSchedule,
) -> Result<EncodeResult> {
    config.validate()?;
    sched.validate()?;
    if video.frames.is_empty() {
        return Err(Error::invalid("no frames to encode"));
    }
    let first = &video.frames[0];
    if first.format == PixelFormat::Yuv444r {
        return Err(Error::invalid("sequences must be yuv420p or rgb24"));
    }
    if let RateMode::FixedQ(q) = rate {
        if *q >= sched.q_num {
            return Err(Error::invalid(format!("q {q} out of range [0, {})", sched.q_num)));
        }
    }
    let header = SequenceHeader {
        width: first.width as u32,
        height: first.height as u32,
        pix_fmt: first.format,
        fps: video.fps,
        refresh_period: config.refresh_period,
        q_num: sched.q_num,
        schedule_digest: sched.digest(),
    };

    let mut rc = match rate {
        RateMode::FixedQ(_) => None,
        RateMode::Target(targets) => {
            Some((RcState::new(targets.afs_at(0, video.fps))?, targets.clone()))
        }
    };
    let mut state: Option<TemporalState> = None;
    let mut records = Vec::with_capacity(video.frames.len());
    let mut recons = Vec::with_capacity(video.frames.len());
    let mut logs = Vec::with_capacity(video.frames.len());

    for (t, stored) in video.frames.iter().enumerate() {
        if stored.format != first.format
            || stored.width != first.width
            || stored.height != first.height
        {
            return Err(Error::invalid(format!("frame {t} changes shape or format")));
        }
        let x = to_working(stored)?;
        let (frame_type, refresh) = frame_decision(t as u64, config);
        let q = match (&rate, &rc) {
            (RateMode::FixedQ(q), _) => *q,
            (_, Some((rcs, _))) => rcs.q.min(sched.q_num - 1),
            _ => unreachable!(),
        };
        let (record, recon) = match frame_type {
            FrameType::Intra => {
                let (record, st, recon) = encode_intra_frame(&x, q, refresh, sched)?;
                state = Some(st);
                (record, recon)
            }
            FrameType::Inter => {
                let st = state.as_mut().expect("frame 0 is always intra");
                encode_inter_frame(&x, st, q, refresh, config, sched)?
            }
        };
        let bits = record.coded_bits();
        if let Some((rcs, targets)) = &mut rc {
            rcs.afs = targets.afs_at(t as u64, video.fps);
            *rcs = rc_update(rcs, bits as f64);
        }
        logs.push(FrameLog {
            t: t as u64,
            frame_type,
            q,
            refresh,
            bits,
            psnr_weighted: psnr(&x, &recon, PSNR_CAP)?.psnr_weighted,
        });
        records.push(record);
        recons.push(recon);
    }
    Ok(EncodeResult {
        container: BitstreamContainer { header, frames: records },
        recons,
        logs,
    })
}

pub fn decode_sequence(
    container: &BitstreamContainer,
    config: &CodecConfig,
    sched: &QuantSchedule,
) -> Result<DecodeResult> {
    config.validate()?;
    sched.validate()?;
    let h = &container.header;
    if h.schedule_digest != sched.digest() {
        return Err(Error::format(format!(
            "schedule digest mismatch: stream {:016x}, schedule {:016x}",
            h.schedule_digest,
            sched.digest()
        )));
    }
    if h.q_num != sched.q_num {
        return Err(Error::format("stream and schedule disagree on q count"));
    }
    let (w, hgt) = (h.width as usize, h.height as usize);
    let mut state: Option<TemporalState> = None;
    let mut recons = Vec::with_capacity(container.frames.len());
    let mut stored = Vec::with_capacity(container.frames.len());
    for (t, record) in container.frames.iter().enumerate() {
        let recon = match record.frame_type {
            FrameType::Intra => {
                let (recon, st) = decode_intra_frame(record, w, hgt, sched)?;
                state = Some(st);
                recon
            }
            FrameType::Inter => {
                let st = state
                    .as_mut()
                    .ok_or_else(|| Error::format(format!("frame {t} is inter before any intra")))?;
                decode_inter_frame(record, st, config, sched)?
            }
        };
        stored.push(from_working(&recon, h.pix_fmt)?);
        recons.push(recon);
    }
    Ok(DecodeResult { recons, video: RawVideo { frames: stored, fps: h.fps } })
}
