//! Buffer-feedback rate control.
//!
//! A leaky-bucket state tracks how far coded frame sizes have departed from
//! the per-frame budget; every second frame the q index steps along a
//! threshold ladder sized by the current frame. The update is a pure
//! function and q never leaves [0, 63].

use crate::{Error, Result};

pub const INITIAL_Q: u8 = 32;
pub const Q_MAX: u8 = 63;
/// Consecutive frames at the q range edge before a target is flagged as
/// unreachable in run logs.
pub const PIN_FLAG_FRAMES: u32 = 50;

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct RcState {
    /// Bits accumulated above (positive) or below (negative) budget.
    pub cbs: f64,
    /// Target buffer size the controller steers cbs toward.
    pub tbs: f64,
    /// q to use for the next coded frame.
    pub q: u8,
    /// Average (budgeted) frame size in bits.
    pub afs: f64,
    /// Index of the next frame to account.
    pub fidx: u64,
}

impl RcState {
    pub fn new(afs: f64) -> Result<Self> {
        if !(afs > 0.0) || !afs.is_finite() {
            return Err(Error::invalid(format!("average frame size must be positive, got {afs}")));
        }
        Ok(RcState { cbs: 0.0, tbs: 0.0, q: INITIAL_Q, afs, fidx: 0 })
    }
}

/// Feeds one coded frame of `cfs` bits into the controller.
///
/// The buffer moves by cfs - afs every frame. Odd frames return with q and
/// tbs untouched. Even frames rebase tbs to 0.95 of the buffer and step q:
/// 12, 6, or 2 down when the buffer exceeds 10, 5, or 2 current frames
/// (mirrored upward for deficits), else 1 when the departure from tbs
/// exceeds half a frame and the buffer is inside one frame of zero. The
/// ladder scales with cfs, so the response is monotone in buffer pressure
/// at a given frame size but deliberately not monotone in cfs itself: a
/// huge frame widens its own thresholds.
pub fn rc_update(state: &RcState, cfs: f64) -> RcState {
    let mut s = *state;
    s.cbs += cfs;
    s.cbs -= s.afs;
    let fidx = s.fidx;
    s.fidx += 1;
    if fidx % 2 == 1 {
        return s;
    }
    let buff_diff = s.cbs - s.tbs;
    s.tbs = s.cbs * 0.95;
    let mut q = s.q as i32;
    if buff_diff > 0.0 {
        if s.cbs > 10.0 * cfs {
            q -= 12;
        } else if s.cbs > 5.0 * cfs {
            q -= 6;
        } else if s.cbs > 2.0 * cfs {
            q -= 2;
        } else if buff_diff > 0.5 * cfs && s.cbs > -cfs {
            q -= 1;
        }
    } else if buff_diff < 0.0 {
        if s.cbs < -10.0 * cfs {
            q += 12;
        } else if s.cbs < -5.0 * cfs {
            q += 6;
        } else if s.cbs < -2.0 * cfs {
            q += 2;
        } else if buff_diff < -0.5 * cfs && s.cbs < cfs {
            q += 1;
        }
    }
    s.q = q.clamp(0, Q_MAX as i32) as u8;
    s
}

/// Piecewise-constant bitrate target: segments of (first frame, bits/s),
/// sorted, starting at frame 0.
#[derive(Clone, PartialEq, Debug)]
pub struct TargetSchedule {
    pub segments: Vec<(u64, f64)>,
}

impl TargetSchedule {
    pub fn constant(bps: f64) -> Result<Self> {
        Self::new(vec![(0, bps)])
    }

    pub fn new(segments: Vec<(u64, f64)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("target schedule has no segments"));
        }
        if segments[0].0 != 0 {
            return Err(Error::invalid("target schedule must start at frame 0"));
        }
        for w in segments.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid("target schedule frames must strictly increase"));
            }
        }
        if let Some(&(f, bps)) = segments.iter().find(|(_, bps)| !(*bps > 0.0 && bps.is_finite()))
        {
            return Err(Error::invalid(format!("bad target {bps} b/s at frame {f}")));
        }
        Ok(TargetSchedule { segments })
    }

    /// "start:bps" pairs joined by commas; a bare number is a constant
    /// target from frame 0.
    pub fn parse(text: &str) -> Result<Self> {
        let mut segments = Vec::new();
        for part in text.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (frame, bps) = match part.split_once(':') {
                Some((f, b)) => (
                    f.trim()
                        .parse::<u64>()
                        .map_err(|_| Error::invalid(format!("bad frame index {f:?}")))?,
                    b,
                ),
                None => (0, part),
            };
            let bps = bps
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad bitrate {bps:?}")))?;
            segments.push((frame, bps));
        }
        Self::new(segments)
    }

    pub fn bps_at(&self, frame: u64) -> f64 {
        let mut bps = self.segments[0].1;
        for &(start, b) in &self.segments {
            if start <= frame {
                bps = b;
            }
        }
        bps
    }

    pub fn afs_at(&self, frame: u64, fps: (u32, u32)) -> f64 {
        self.bps_at(frame) * fps.1 as f64 / fps.0 as f64
    }
}

/// One row of a closed-loop rate-control run.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct RcLogRow {
    pub frame: u64,
    pub q: u8,
    pub bits: u64,
    pub cumulative_bps: f64,
    pub target_bps: f64,
    /// q has sat at 0 or 63 for more than PIN_FLAG_FRAMES frames: the
    /// target looks unreachable on this content.
    pub pinned: bool,
}

#[derive(Clone, PartialEq, Debug)]
pub struct RcRunReport {
    pub rows: Vec<RcLogRow>,
    pub realized_bps: f64,
}

/// Derives the run log from per-frame (q, bits) pairs the codec produced
/// under this schedule.
pub fn rc_run_report(
    per_frame: &[(u8, u64)],
    targets: &TargetSchedule,
    fps: (u32, u32),
) -> Result<RcRunReport> {
    if per_frame.is_empty() {
        return Err(Error::invalid("rate-control run has no frames"));
    }
    let frame_rate = fps.0 as f64 / fps.1 as f64;
    let mut rows = Vec::with_capacity(per_frame.len());
    let mut total_bits = 0u64;
    let mut edge_streak = 0u32;
    for (t, &(q, bits)) in per_frame.iter().enumerate() {
        total_bits += bits;
        edge_streak = if q == 0 || q == Q_MAX { edge_streak + 1 } else { 0 };
        rows.push(RcLogRow {
            frame: t as u64,
            q,
            bits,
            cumulative_bps: total_bits as f64 * frame_rate / (t + 1) as f64,
            target_bps: targets.bps_at(t as u64),
            pinned: edge_streak > PIN_FLAG_FRAMES,
        });
    }
    let realized_bps = total_bits as f64 * frame_rate / per_frame.len() as f64;
    Ok(RcRunReport { rows, realized_bps })
}
