//! Drives the installed binary end to end through real files: clip
//! generation, encode, decode, metrics, rate-control simulation, and the
//! documented exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_fmcodec")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("fmcodec-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

#[test]
fn encode_decode_round_trip_through_files() {
    let d = scratch("roundtrip");
    let clip = p(&d, "clip.y4m");
    let (code, _, err) = run(&[
        "gen-clip", "--kind", "pan-detail", "--width", "64", "--height", "48", "--frames", "12",
        "--seed", "5", "--output", &clip,
    ]);
    assert_eq!(code, 0, "{err}");

    let (code, out, err) = run(&[
        "encode", "--input", &clip, "--width", "64", "--height", "48", "--pix-fmt", "yuv420p",
        "--q", "30", "--output", &p(&d, "out.fmc"), "--log", &p(&d, "enc.csv"),
        "--recon-out", &p(&d, "recon.y4m"),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("encoded 12 frames"), "summary line missing: {out}");

    let (code, _, err) = run(&[
        "decode", "--input", &p(&d, "out.fmc"), "--output", &p(&d, "dec.y4m"),
        "--log", &p(&d, "dec.csv"),
    ]);
    assert_eq!(code, 0, "{err}");

    // The decoder's output file must be byte-identical to the encoder's
    // reconstruction file.
    let recon = std::fs::read(d.join("recon.y4m")).unwrap();
    let dec = std::fs::read(d.join("dec.y4m")).unwrap();
    assert_eq!(recon, dec);

    let enc_log = std::fs::read_to_string(d.join("enc.csv")).unwrap();
    assert!(enc_log.starts_with("frame,type,q,refresh,bits,psnr_weighted_db\n"));
    assert_eq!(enc_log.lines().count(), 13);
    let dec_log = std::fs::read_to_string(d.join("dec.csv")).unwrap();
    assert!(dec_log.starts_with("frame,type,q,refresh,bits\n"));

    let (code, out, err) = run(&[
        "psnr", "--a", &clip, "--b", &p(&d, "dec.y4m"), "--width", "64", "--height", "48",
        "--pix-fmt", "yuv420p",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("psnr_weighted"), "{out}");

    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn bdrate_reports_known_rate_shift() {
    let d = scratch("bdrate");
    let anchor = "bpp,quality_db\n0.1,32\n0.2,35\n0.4,38\n0.8,41\n";
    let test: String = "bpp,quality_db\n".to_owned()
        + &[0.09, 0.18, 0.36, 0.72]
            .iter()
            .zip([32, 35, 38, 41])
            .map(|(r, q)| format!("{r},{q}\n"))
            .collect::<String>();
    std::fs::write(d.join("a.csv"), anchor).unwrap();
    std::fs::write(d.join("b.csv"), test).unwrap();
    let (code, out, err) = run(&["bdrate", "--anchor", &p(&d, "a.csv"), "--test", &p(&d, "b.csv")]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("-10.00%"), "{out}");
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn usage_and_runtime_errors_use_documented_exit_codes() {
    let d = scratch("errors");
    // Conflicting rate flags: usage error, exit 2, nothing written.
    let (code, _, err) = run(&[
        "encode", "--input", "x.y4m", "--width", "64", "--height", "48", "--pix-fmt", "yuv420p",
        "--q", "30", "--rc-target-bps", "1000000", "--output", &p(&d, "out.fmc"),
    ]);
    assert_eq!(code, 2, "{err}");
    assert!(!d.join("out.fmc").exists());

    // Unknown subcommand: usage error.
    let (code, _, _) = run(&["transcode"]);
    assert_eq!(code, 2);

    // Missing input file: runtime error, exit 1, one-line diagnostic.
    let (code, _, err) = run(&[
        "psnr", "--a", &p(&d, "missing.y4m"), "--b", &p(&d, "missing.y4m"), "--width", "64",
        "--height", "48", "--pix-fmt", "yuv420p",
    ]);
    assert_eq!(code, 1);
    assert!(err.starts_with("fmcodec:"), "{err}");

    let (code, out, _) = run(&["--version"]);
    assert_eq!(code, 0);
    assert!(out.contains("fmcodec"));
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn rc_sim_warp_bench_and_calibrate_run() {
    let d = scratch("tools");
    let (code, out, err) = run(&[
        "rc-sim", "--target-bps", "900000", "--frames", "30", "--width", "64", "--height", "48",
        "--log", &p(&d, "rc.csv"),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("realized_bps"), "{out}");
    let rc = std::fs::read_to_string(d.join("rc.csv")).unwrap();
    assert!(rc.starts_with("frame,q,bits,cumulative_bps,target_bps,pinned\n"));
    assert_eq!(rc.lines().count(), 31);

    let (code, out, err) = run(&["warp-bench", "--width", "320", "--height", "192"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("fp16-absolute") && out.contains("fp16-relative-offset"), "{out}");

    // Calibrate a schedule from a clip, then require it on both ends;
    // the default schedule must be rejected by the stream digest. Noise
    // content gives the sweep a steep, bracketable RD slope.
    let clip = p(&d, "cal.y4m");
    let (code, _, err) = run(&[
        "gen-clip", "--kind", "noise", "--width", "64", "--height", "48", "--frames", "6",
        "--seed", "9", "--output", &clip,
    ]);
    assert_eq!(code, 0, "{err}");
    let sched = p(&d, "sched.cfg");
    let (code, _, err) = run(&[
        "calibrate", "--input", &clip, "--width", "64", "--height", "48", "--pix-fmt", "yuv420p",
        "--output", &sched,
    ]);
    assert_eq!(code, 0, "{err}");
    let (code, _, err) = run(&[
        "encode", "--input", &clip, "--width", "64", "--height", "48", "--pix-fmt", "yuv420p",
        "--q", "21", "--schedule", &sched, "--output", &p(&d, "cal.fmc"),
    ]);
    assert_eq!(code, 0, "{err}");
    let (code, _, err) =
        run(&["decode", "--input", &p(&d, "cal.fmc"), "--output", &p(&d, "cal_dec.y4m")]);
    assert_eq!(code, 1, "decode without the calibrated schedule must fail");
    assert!(err.contains("digest"), "{err}");
    let (code, _, err) = run(&[
        "decode", "--input", &p(&d, "cal.fmc"), "--schedule", &sched, "--output",
        &p(&d, "cal_dec.y4m"),
    ]);
    assert_eq!(code, 0, "{err}");
    let _ = std::fs::remove_dir_all(&d);
}
