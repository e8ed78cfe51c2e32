//! Low-delay video codec built around feature-modulated quantization: one
//! bitstream covers a wide quality range through a 64-entry q index that
//! scales transform coefficients in log space, with periodic refresh of the
//! temporal prediction state and a buffer-based rate controller.
//!
//! The crate is organized as a pipeline of small modules:
//!
//! * [`pixels`]   - frames, raw/y4m I/O, BT.709 conversion, PSNR
//! * [`transformq`] - 8x8 DCT, q-indexed scalers, spatial modulation, calibration
//! * [`motion`]   - block motion search and precision-controlled warping
//! * [`entropy`]  - adaptive binary range coder and bitstream container
//! * [`codec`]    - the conditional-coding loop and temporal state
//! * [`ratecontrol`] - per-frame q adaptation against a bit budget
//! * [`evalkit`]  - RD curves, BD-Rate, drift reports
//! * [`synth`]    - deterministic synthetic test clips
//! * [`cli`]      - the `fmcodec` command line tool

pub mod cli;
pub mod codec;
pub mod entropy;
pub mod evalkit;
pub mod motion;
pub mod pixels;
pub mod ratecontrol;
pub mod synth;
pub mod transformq;

/// Unified error type. Variants map to the failure classes surfaced at the
/// CLI: invalid arguments exit with 2, everything else with 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// Caller passed something out of contract (dimensions, q range, flags).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A file or bitstream violates its format (magic, truncation, y4m tags,
    /// schedule digest mismatch, payload length desync).
    #[error("format error: {0}")]
    Format(String),
    /// Scaler calibration could not bracket or converge.
    #[error("calibration failed: {0}")]
    Calibration(String),
    /// RD curve unusable for the requested analysis.
    #[error("rd curve error: {0}")]
    Curve(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
