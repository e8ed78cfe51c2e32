//! The `fmcodec` command line tool.
//!
//! Exit codes: 0 success, 2 for argument or input validation problems,
//! 1 for runtime failures (I/O, malformed files, failed calibration).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::codec::{
    decode_sequence, encode_sequence, from_working, to_working, CodecConfig, RateMode,
    DEFAULT_REFRESH_PERIOD, PSNR_CAP,
};
use crate::entropy::{BitstreamContainer, FrameType};
use crate::evalkit::{
    bd_rate, curve_from_csv, log_to_csv, rc_log_to_csv,
};
use crate::motion::{
    warp_error_ratio, warp_max_abs_err, MotionField, WarpPrecision, WARP_TOL_ABS, WARP_TOL_REL,
};
use crate::pixels::{load_raw, psnr, save_raw, save_y4m, Frame, PixelFormat};
use crate::ratecontrol::{rc_run_report, TargetSchedule};
use crate::synth::{generate, ClipKind};
use crate::transformq::{calibrate_scaler_bounds, QuantSchedule};
use crate::{Error, Result};

#[derive(Parser)]
#[command(name = "fmcodec", version, about = "Deterministic low-delay video codec and RD toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a raw or y4m clip into a .fmc bitstream
    Encode(EncodeArgs),
    /// Decode a .fmc bitstream back to raw or y4m
    Decode(DecodeArgs),
    /// Weighted PSNR between two clips of identical shape
    Psnr(PsnrArgs),
    /// BD-Rate between two rate-distortion curve CSVs
    Bdrate(BdrateArgs),
    /// Closed-loop rate control on a synthetic clip
    RcSim(RcSimArgs),
    /// Warp precision study: binary16 variants vs the binary32 baseline
    WarpBench(WarpBenchArgs),
    /// Generate a deterministic synthetic clip
    GenClip(GenClipArgs),
    /// Fit encoder scaler bounds to a clip and write a schedule file
    Calibrate(CalibrateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum PixFmtArg {
    Yuv420p,
    Rgb24,
}

impl PixFmtArg {
    fn to_format(self) -> PixelFormat {
        match self {
            PixFmtArg::Yuv420p => PixelFormat::Yuv420p8,
            PixFmtArg::Rgb24 => PixelFormat::Rgbr,
        }
    }
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long, value_enum)]
    pix_fmt: PixFmtArg,
    /// Fixed quality index; finer toward 63
    #[arg(long, value_parser = clap::value_parser!(u8).range(..64), group = "rate")]
    q: Option<u8>,
    /// Constant bitrate target in bits per second
    #[arg(long, group = "rate")]
    rc_target_bps: Option<f64>,
    /// Piecewise target, comma-separated start:bps pairs
    #[arg(long, group = "rate")]
    rc_target_schedule: Option<String>,
    #[arg(long, default_value_t = DEFAULT_REFRESH_PERIOD)]
    refresh_period: u16,
    #[arg(long, default_value_t = -1, allow_hyphen_values = true)]
    intra_period: i64,
    /// Quantizer schedule file; built-in default when omitted
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Per-frame CSV log
    #[arg(long)]
    log: Option<PathBuf>,
    /// Also write the encoder-side reconstruction clip
    #[arg(long)]
    recon_out: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
    /// Must match the encoder's schedule; checked against the stream digest
    #[arg(long)]
    schedule: Option<PathBuf>,
}

#[derive(Args)]
struct PsnrArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long, value_enum)]
    pix_fmt: PixFmtArg,
}

#[derive(Args)]
struct BdrateArgs {
    #[arg(long)]
    anchor: PathBuf,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("target").required(true)))]
struct RcSimArgs {
    #[arg(long, group = "target")]
    target_bps: Option<f64>,
    #[arg(long, group = "target")]
    target_schedule: Option<String>,
    #[arg(long, default_value_t = 300)]
    frames: usize,
    #[arg(long, default_value_t = 192)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value = "pan-detail")]
    kind: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_REFRESH_PERIOD)]
    refresh_period: u16,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct WarpBenchArgs {
    #[arg(long, default_value_t = 1920)]
    width: usize,
    #[arg(long, default_value_t = 1080)]
    height: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct GenClipArgs {
    /// static, pan-detail, or noise
    #[arg(long)]
    kind: String,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    frames: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "yuv420p")]
    pix_fmt: PixFmtArg,
    /// .y4m gets a y4m header (yuv420p only); anything else is raw planar
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long, value_enum)]
    pix_fmt: PixFmtArg,
    #[arg(long)]
    output: PathBuf,
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits.
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fmcodec: {e}");
            match e {
                Error::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode(a) => run_encode(a),
        Command::Decode(a) => run_decode(a),
        Command::Psnr(a) => run_psnr(a),
        Command::Bdrate(a) => run_bdrate(a),
        Command::RcSim(a) => run_rc_sim(a),
        Command::WarpBench(a) => run_warp_bench(a),
        Command::GenClip(a) => run_gen_clip(a),
        Command::Calibrate(a) => run_calibrate(a),
    }
}

fn load_schedule(path: &Option<PathBuf>) -> Result<QuantSchedule> {
    match path {
        Some(p) => QuantSchedule::load(p),
        None => Ok(QuantSchedule::default()),
    }
}

fn is_y4m(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
}

fn save_clip(path: &Path, frames: &[Frame], fps: (u32, u32)) -> Result<()> {
    if is_y4m(path) {
        save_y4m(path, frames, fps)
    } else {
        save_raw(path, frames)
    }
}

fn run_encode(a: EncodeArgs) -> Result<()> {
    let sched = load_schedule(&a.schedule)?;
    let video = load_raw(&a.input, a.width, a.height, a.pix_fmt.to_format())?;
    let rate = match (a.q, a.rc_target_bps, &a.rc_target_schedule) {
        (Some(q), _, _) => RateMode::FixedQ(q),
        (_, Some(bps), _) => RateMode::Target(TargetSchedule::constant(bps)?),
        (_, _, Some(s)) => RateMode::Target(TargetSchedule::parse(s)?),
        _ => RateMode::FixedQ(crate::ratecontrol::INITIAL_Q),
    };
    let config = CodecConfig {
        refresh_period: a.refresh_period,
        intra_period: a.intra_period,
        ..CodecConfig::default()
    };
    let enc = encode_sequence(&video, &rate, &config, &sched)?;
    enc.container.save(&a.output)?;
    if let Some(log) = &a.log {
        std::fs::write(log, log_to_csv(&enc.logs))?;
    }
    if let Some(out) = &a.recon_out {
        let native: Result<Vec<Frame>> =
            enc.recons.iter().map(|f| from_working(f, video.frames[0].format)).collect();
        save_clip(out, &native?, video.fps)?;
    }
    let bits: u64 = enc.logs.iter().map(|l| l.bits).sum();
    let mean_psnr =
        enc.logs.iter().map(|l| l.psnr_weighted).sum::<f64>() / enc.logs.len() as f64;
    println!(
        "encoded {} frames, {} bits ({:.4} bpp), mean weighted psnr {:.3} dB -> {}",
        enc.logs.len(),
        bits,
        bits as f64 / (a.width * a.height * enc.logs.len()) as f64,
        mean_psnr,
        a.output.display()
    );
    Ok(())
}

fn run_decode(a: DecodeArgs) -> Result<()> {
    let sched = load_schedule(&a.schedule)?;
    let container = BitstreamContainer::load(&a.input)?;
    let dec = decode_sequence(&container, &CodecConfig::default(), &sched)?;
    save_clip(&a.output, &dec.video.frames, dec.video.fps)?;
    if let Some(log) = &a.log {
        let mut csv = String::from("frame,type,q,refresh,bits\n");
        for (t, r) in container.frames.iter().enumerate() {
            csv.push_str(&format!(
                "{t},{},{},{},{}\n",
                match r.frame_type {
                    FrameType::Intra => "intra",
                    FrameType::Inter => "inter",
                },
                r.q,
                u8::from(r.refresh),
                r.coded_bits()
            ));
        }
        std::fs::write(log, csv)?;
    }
    println!("decoded {} frames -> {}", dec.video.frames.len(), a.output.display());
    Ok(())
}

fn run_psnr(a: PsnrArgs) -> Result<()> {
    let format = a.pix_fmt.to_format();
    let va = load_raw(&a.a, a.width, a.height, format)?;
    let vb = load_raw(&a.b, a.width, a.height, format)?;
    if va.frames.len() != vb.frames.len() {
        return Err(Error::invalid(format!(
            "clip lengths differ: {} vs {}",
            va.frames.len(),
            vb.frames.len()
        )));
    }
    let mut planes = [0.0; 3];
    let mut weighted = 0.0;
    for (fa, fb) in va.frames.iter().zip(&vb.frames) {
        let r = psnr(fa, fb, PSNR_CAP)?;
        for (acc, v) in planes.iter_mut().zip(r.psnr_planes) {
            *acc += v;
        }
        weighted += r.psnr_weighted;
    }
    let n = va.frames.len() as f64;
    let labels = match format {
        PixelFormat::Rgbr => ["r", "g", "b"],
        _ => ["y", "u", "v"],
    };
    for (label, total) in labels.iter().zip(planes) {
        println!("psnr_{label} {:.4} dB", total / n);
    }
    println!("psnr_weighted {:.4} dB", weighted / n);
    Ok(())
}

fn run_bdrate(a: BdrateArgs) -> Result<()> {
    let anchor = curve_from_csv(&std::fs::read_to_string(&a.anchor)?, "anchor")?;
    let test = curve_from_csv(&std::fs::read_to_string(&a.test)?, "test")?;
    println!("{:.2}%", bd_rate(&anchor, &test)?);
    Ok(())
}

fn run_rc_sim(a: RcSimArgs) -> Result<()> {
    let targets = match (a.target_bps, &a.target_schedule) {
        (Some(bps), _) => TargetSchedule::constant(bps)?,
        (_, Some(s)) => TargetSchedule::parse(s)?,
        _ => return Err(Error::invalid("rc-sim needs --target-bps or --target-schedule")),
    };
    let kind = ClipKind::parse(&a.kind)?;
    let video = generate(kind, PixelFormat::Yuv420p8, a.width, a.height, a.frames, a.seed)?;
    let config =
        CodecConfig { refresh_period: a.refresh_period, ..CodecConfig::default() };
    let sched = QuantSchedule::default();
    let enc = encode_sequence(&video, &RateMode::Target(targets.clone()), &config, &sched)?;
    let pairs: Vec<(u8, u64)> = enc.logs.iter().map(|l| (l.q, l.bits)).collect();
    let report = rc_run_report(&pairs, &targets, video.fps)?;
    if let Some(log) = &a.log {
        std::fs::write(log, rc_log_to_csv(&report))?;
    }
    let tail = report.rows.len() - report.rows.len().min(a.frames * 2 / 3);
    let tail_rows = &report.rows[tail..];
    let frame_rate = video.fps.0 as f64 / video.fps.1 as f64;
    let tail_bps = tail_rows.iter().map(|r| r.bits).sum::<u64>() as f64 * frame_rate
        / tail_rows.len() as f64;
    println!(
        "frames {} realized_bps {:.0} tail_bps {:.0} final_target_bps {:.0} final_q {} pinned {}",
        report.rows.len(),
        report.realized_bps,
        tail_bps,
        report.rows.last().unwrap().target_bps,
        report.rows.last().unwrap().q,
        report.rows.iter().filter(|r| r.pinned).count()
    );
    Ok(())
}

fn run_warp_bench(a: WarpBenchArgs) -> Result<()> {
    use rand::Rng;
    use rand::SeedableRng;
    // Unit-range features and half-pel vectors, the regime the
    // tolerance constants are scaled for.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    let mut reference = Frame::new(PixelFormat::Yuv444r, a.width, a.height)?;
    for p in &mut reference.planes {
        for v in &mut p.data {
            *v = rng.random_range(0.0..1.0);
        }
    }
    let mut field = MotionField::zero(a.width, a.height);
    for v in &mut field.vectors {
        *v = (rng.random_range(-16..=16), rng.random_range(-16..=16));
    }
    println!("warp precision vs binary32 on {}x{} unit-range noise:", a.width, a.height);
    let mut rates = Vec::new();
    for mode in [WarpPrecision::Fp16Absolute, WarpPrecision::Fp16RelativeOffset] {
        let rate = warp_error_ratio(&reference, &field, mode, WARP_TOL_REL, WARP_TOL_ABS)?;
        let worst = warp_max_abs_err(&reference, &field, mode)?;
        println!("  {:<22} exceed {:>8.3}%  max_abs {:.6}", mode.name(), rate * 100.0, worst);
        rates.push(rate);
    }
    if rates[1] > 0.0 {
        println!("  ratio absolute/relative {:.1}x", rates[0] / rates[1]);
    } else {
        println!("  ratio absolute/relative inf (relative offsets had no exceedances)");
    }
    Ok(())
}

fn run_gen_clip(a: GenClipArgs) -> Result<()> {
    let kind = ClipKind::parse(&a.kind)?;
    let video = generate(kind, a.pix_fmt.to_format(), a.width, a.height, a.frames, a.seed)?;
    save_clip(&a.output, &video.frames, video.fps)?;
    println!(
        "wrote {} {} frames of {}x{} {} -> {}",
        video.frames.len(),
        kind.name(),
        a.width,
        a.height,
        video.frames[0].format.name(),
        a.output.display()
    );
    Ok(())
}

fn run_calibrate(a: CalibrateArgs) -> Result<()> {
    let video = load_raw(&a.input, a.width, a.height, a.pix_fmt.to_format())?;
    let working: Result<Vec<Frame>> = video.frames.iter().map(to_working).collect();
    let sched = calibrate_scaler_bounds(&working?, &QuantSchedule::default())?;
    sched.save(&a.output)?;
    println!(
        "calibrated s_enc [{:.6}, {:.6}] s_dec [{:.6}, {:.6}] -> {}",
        sched.s_enc_min,
        sched.s_enc_max,
        sched.s_dec_min,
        sched.s_dec_max,
        a.output.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_defaults_follow_the_documented_invocation() {
        let cli = Cli::try_parse_from([
            "fmcodec", "encode", "--input", "in.y4m", "--width", "64", "--height", "48",
            "--pix-fmt", "yuv420p", "--output", "out.fmc",
        ])
        .unwrap();
        let Command::Encode(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.refresh_period, 32);
        assert_eq!(a.intra_period, -1);
        assert_eq!(a.q, None);
        assert_eq!(a.pix_fmt.to_format(), PixelFormat::Yuv420p8);
    }

    #[test]
    fn q_is_range_checked_at_parse_time() {
        let r = Cli::try_parse_from([
            "fmcodec", "encode", "--input", "x", "--width", "64", "--height", "48",
            "--pix-fmt", "rgb24", "--output", "o", "--q", "64",
        ]);
        assert!(r.is_err());
        let r = Cli::try_parse_from([
            "fmcodec", "encode", "--input", "x", "--width", "64", "--height", "48",
            "--pix-fmt", "rgb24", "--output", "o", "--q", "63",
        ]);
        assert!(r.is_ok());
    }

    #[test]
    fn rate_flags_are_mutually_exclusive() {
        let r = Cli::try_parse_from([
            "fmcodec", "encode", "--input", "x", "--width", "64", "--height", "48",
            "--pix-fmt", "yuv420p", "--output", "o", "--q", "21", "--rc-target-bps", "100000",
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn negative_intra_period_parses() {
        let cli = Cli::try_parse_from([
            "fmcodec", "encode", "--input", "x", "--width", "64", "--height", "48",
            "--pix-fmt", "yuv420p", "--output", "o", "--intra-period", "-1",
        ])
        .unwrap();
        let Command::Encode(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.intra_period, -1);
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(Cli::try_parse_from(["fmcodec", "psnr", "--bogus", "1"]).is_err());
        assert!(Cli::try_parse_from(["fmcodec", "frobnicate"]).is_err());
    }

    #[test]
    fn rc_sim_needs_a_target() {
        assert!(Cli::try_parse_from(["fmcodec", "rc-sim"]).is_err());
        assert!(Cli::try_parse_from(["fmcodec", "rc-sim", "--target-bps", "250000"]).is_ok());
    }

    #[test]
    fn y4m_detection_is_extension_based() {
        assert!(is_y4m(Path::new("a/clip.y4m")));
        assert!(is_y4m(Path::new("CLIP.Y4M")));
        assert!(!is_y4m(Path::new("clip.yuv")));
        assert!(!is_y4m(Path::new("clip")));
    }
}
