//! Rate-distortion measurement: curve collection, BD-Rate, drift
//! summaries, and deterministic CSV/SVG emission.
//!
//! BD-Rate interpolates ln(bpp) as a function of quality with a
//! shape-preserving piecewise-cubic Hermite (Fritsch-Carlson slopes), so
//! the interpolant never overshoots its control points, then integrates
//! the cubics in closed form over the common quality interval. The
//! reported figure is (exp(mean ln-rate difference) - 1) * 100; negative
//! means the test curve spends fewer bits at equal quality.

use crate::codec::{encode_sequence, CodecConfig, FrameLog, RateMode};
use crate::pixels::RawVideo;
use crate::transformq::QuantSchedule;
use crate::{Error, Result};

/// Fewest points BD-Rate will interpolate through.
pub const BD_RATE_MIN_POINTS: usize = 4;

#[derive(Clone, PartialEq, Debug)]
pub struct RDCurve {
    /// (bits per pixel, quality in dB), sorted by bpp.
    pub points: Vec<(f64, f64)>,
    pub label: String,
}

impl RDCurve {
    /// Validates shape: bpp strictly increasing and positive, quality
    /// non-decreasing and finite. Short curves are allowed (a single
    /// operating point is still a curve); BD-Rate refuses them later.
    pub fn new(points: Vec<(f64, f64)>, label: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("curve needs at least one point"));
        }
        for (i, &(bpp, quality)) in points.iter().enumerate() {
            if !(bpp > 0.0 && bpp.is_finite() && quality.is_finite()) {
                return Err(Error::invalid(format!("point {i} ({bpp}, {quality}) out of domain")));
            }
            if i > 0 {
                let (pb, pq) = points[i - 1];
                if bpp <= pb {
                    return Err(Error::invalid(format!(
                        "bpp must increase strictly: point {i} has {bpp} after {pb}"
                    )));
                }
                if quality < pq {
                    return Err(Error::invalid(format!(
                        "quality must not decrease: point {i} has {quality} after {pq}"
                    )));
                }
            }
        }
        Ok(RDCurve { points, label: label.into() })
    }

    pub fn supports_bd_rate(&self) -> bool {
        self.points.len() >= BD_RATE_MIN_POINTS
    }

    /// Quality spread between the coarsest and finest operating points.
    pub fn quality_range(&self) -> f64 {
        self.points.last().unwrap().1 - self.points[0].1
    }
}

/// Monotone piecewise-cubic Hermite through (x, y) with Fritsch-Carlson
/// slopes. x must be strictly increasing.
struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Pchip {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
        let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut m = vec![0.0; n];
        for i in 1..n - 1 {
            if d[i - 1] * d[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
            }
        }
        m[0] = edge_slope(h[0], h.get(1).copied().unwrap_or(h[0]), d[0], d.get(1).copied().unwrap_or(d[0]));
        let k = n - 2;
        m[n - 1] = edge_slope(
            h[k],
            if k > 0 { h[k - 1] } else { h[k] },
            d[k],
            if k > 0 { d[k - 1] } else { d[k] },
        );
        Pchip { x, y, m }
    }

    fn segment_of(&self, x: f64) -> usize {
        let n = self.x.len();
        self.x[1..n - 1].partition_point(|&k| k <= x)
    }

    fn eval(&self, xq: f64) -> f64 {
        let i = self.segment_of(xq);
        let h = self.x[i + 1] - self.x[i];
        let t = (xq - self.x[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        self.y[i] * (2.0 * t3 - 3.0 * t2 + 1.0)
            + h * self.m[i] * (t3 - 2.0 * t2 + t)
            + self.y[i + 1] * (-2.0 * t3 + 3.0 * t2)
            + h * self.m[i + 1] * (t3 - t2)
    }

    /// Exact integral over [a, b], both inside the knot range.
    fn integrate(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.x.len() - 1 {
            let lo = self.x[i].max(a);
            let hi = self.x[i + 1].min(b);
            if hi <= lo {
                continue;
            }
            let h = self.x[i + 1] - self.x[i];
            let t0 = (lo - self.x[i]) / h;
            let t1 = (hi - self.x[i]) / h;
            let anti = |t: f64| {
                let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
                self.y[i] * (t4 / 2.0 - t3 + t)
                    + h * self.m[i] * (t4 / 4.0 - 2.0 * t3 / 3.0 + t2 / 2.0)
                    + self.y[i + 1] * (-t4 / 2.0 + t3)
                    + h * self.m[i + 1] * (t4 / 4.0 - t3 / 3.0)
            };
            total += h * (anti(t1) - anti(t0));
        }
        total
    }
}

/// Three-point endpoint slope, clamped so the end segment stays monotone.
fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 < 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

fn ln_rate_interpolant(curve: &RDCurve) -> Result<Pchip> {
    if !curve.supports_bd_rate() {
        return Err(Error::invalid(format!(
            "curve {:?} has {} points, BD-Rate needs {BD_RATE_MIN_POINTS}",
            curve.label,
            curve.points.len()
        )));
    }
    for w in curve.points.windows(2) {
        if w[1].1 <= w[0].1 {
            return Err(Error::invalid(format!(
                "curve {:?} repeats quality {}; ln-rate is not a function of quality there",
                curve.label, w[1].1
            )));
        }
    }
    let x = curve.points.iter().map(|p| p.1).collect();
    let y = curve.points.iter().map(|p| p.0.ln()).collect();
    Ok(Pchip::new(x, y))
}

/// The interpolated ln(bpp) of a curve at one quality point, clamped to
/// the knot range. Exposes the exact interpolant BD-Rate integrates, so
/// external oracles can cross-check the closed-form integral by sampling.
pub fn ln_rate_at(curve: &RDCurve, quality: f64) -> Result<f64> {
    let f = ln_rate_interpolant(curve)?;
    let q = quality.clamp(f.x[0], f.x[f.x.len() - 1]);
    Ok(f.eval(q))
}

/// Average ln-bitrate difference over the shared quality interval,
/// exponentiated back to a percentage. Negative: `test` saves bits.
pub fn bd_rate(anchor: &RDCurve, test: &RDCurve) -> Result<f64> {
    let fa = ln_rate_interpolant(anchor)?;
    let ft = ln_rate_interpolant(test)?;
    let lo = fa.x[0].max(ft.x[0]);
    let hi = fa.x[fa.x.len() - 1].min(ft.x[ft.x.len() - 1]);
    if hi <= lo {
        return Err(Error::invalid(format!(
            "no overlapping quality interval between {:?} and {:?}",
            anchor.label, test.label
        )));
    }
    let span = hi - lo;
    let diff = (ft.integrate(lo, hi) - fa.integrate(lo, hi)) / span;
    Ok((diff.exp() - 1.0) * 100.0)
}

/// The 16-point operating ladder: q spread evenly over [0, q_num).
pub fn default_q_list(q_num: u8) -> Vec<u8> {
    (0..16).map(|i| (i as f64 * (q_num - 1) as f64 / 15.0).round() as u8).collect()
}

/// Encodes the clip once per q and returns (bpp, mean weighted PSNR)
/// points. Frames are coded low-delay with a single leading intra frame.
pub fn collect_rd_curve(
    video: &RawVideo,
    q_list: &[u8],
    config: &CodecConfig,
    sched: &QuantSchedule,
    label: impl Into<String>,
) -> Result<RDCurve> {
    if q_list.is_empty() {
        return Err(Error::invalid("q list is empty"));
    }
    if q_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("q list must be strictly ascending"));
    }
    let config = CodecConfig { intra_period: -1, ..*config };
    let mut points = Vec::with_capacity(q_list.len());
    for &q in q_list {
        let enc = encode_sequence(video, &RateMode::FixedQ(q), &config, sched)?;
        let bits: u64 = enc.logs.iter().map(|l| l.bits).sum();
        let quality =
            enc.logs.iter().map(|l| l.psnr_weighted).sum::<f64>() / enc.logs.len() as f64;
        let f = &video.frames[0];
        let bpp = bits as f64 / (f.width * f.height * video.frames.len()) as f64;
        points.push((bpp, quality));
    }
    RDCurve::new(points, label)
}

#[derive(Clone, PartialEq, Debug)]
pub struct DriftReport {
    pub rows: Vec<FrameLog>,
    pub first_quartile_mean_db: f64,
    pub last_quartile_mean_db: f64,
    /// Least-squares PSNR trend, in dB per 100 frames.
    pub slope_db_per_100: f64,
}

/// Summarizes how quality evolves over a coded sequence.
pub fn drift_report(log: &[FrameLog]) -> Result<DriftReport> {
    if log.is_empty() {
        return Err(Error::invalid("drift report needs a non-empty log"));
    }
    let n = log.len();
    let quart = (n / 4).max(1);
    let mean = |rows: &[FrameLog]| {
        rows.iter().map(|r| r.psnr_weighted).sum::<f64>() / rows.len() as f64
    };
    let xm = (n - 1) as f64 / 2.0;
    let ym = mean(log);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, r) in log.iter().enumerate() {
        let dx = i as f64 - xm;
        num += dx * (r.psnr_weighted - ym);
        den += dx * dx;
    }
    let slope = if den > 0.0 { num / den } else { 0.0 };
    Ok(DriftReport {
        rows: log.to_vec(),
        first_quartile_mean_db: mean(&log[..quart]),
        last_quartile_mean_db: mean(&log[n - quart..]),
        slope_db_per_100: slope * 100.0,
    })
}

// CSV schemas are documented in docs/formats.md; floats print in Rust's
// shortest round-trip form so parse-back is exact.

pub fn curve_to_csv(curve: &RDCurve) -> String {
    let mut out = String::from("bpp,quality_db\n");
    for &(bpp, quality) in &curve.points {
        out.push_str(&format!("{bpp},{quality}\n"));
    }
    out
}

pub fn curve_from_csv(text: &str, label: impl Into<String>) -> Result<RDCurve> {
    let mut lines = text.lines();
    match lines.next() {
        Some("bpp,quality_db") => {}
        other => return Err(Error::format(format!("bad curve header {other:?}"))),
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut f = line.split(',').map(str::parse::<f64>);
        match (f.next(), f.next(), f.next()) {
            (Some(Ok(bpp)), Some(Ok(q)), None) => points.push((bpp, q)),
            _ => return Err(Error::format(format!("bad curve row {}: {line:?}", i + 2))),
        }
    }
    RDCurve::new(points, label)
}

pub fn log_to_csv(log: &[FrameLog]) -> String {
    let mut out = String::from("frame,type,q,refresh,bits,psnr_weighted_db\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.t,
            match r.frame_type {
                crate::entropy::FrameType::Intra => "intra",
                crate::entropy::FrameType::Inter => "inter",
            },
            r.q,
            u8::from(r.refresh),
            r.bits,
            r.psnr_weighted
        ));
    }
    out
}

pub fn log_from_csv(text: &str) -> Result<Vec<FrameLog>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("frame,type,q,refresh,bits,psnr_weighted_db") => {}
        other => return Err(Error::format(format!("bad log header {other:?}"))),
    }
    let mut out = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || Error::format(format!("bad log row {line:?}"));
        if cols.len() != 6 {
            return Err(bad());
        }
        let frame_type = match cols[1] {
            "intra" => crate::entropy::FrameType::Intra,
            "inter" => crate::entropy::FrameType::Inter,
            _ => return Err(bad()),
        };
        out.push(FrameLog {
            t: cols[0].parse().map_err(|_| bad())?,
            frame_type,
            q: cols[2].parse().map_err(|_| bad())?,
            refresh: cols[3] == "1",
            bits: cols[4].parse().map_err(|_| bad())?,
            psnr_weighted: cols[5].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

pub fn rc_log_to_csv(report: &crate::ratecontrol::RcRunReport) -> String {
    let mut out = String::from("frame,q,bits,cumulative_bps,target_bps,pinned\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.frame,
            r.q,
            r.bits,
            r.cumulative_bps,
            r.target_bps,
            u8::from(r.pinned)
        ));
    }
    out
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 480.0;
const SVG_MARGIN: f64 = 56.0;
const SVG_PALETTE: [&str; 4] = ["#1965b0", "#dc050c", "#4eb265", "#f1932d"];

fn svg_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One poly-line per series on shared axes. Output bytes depend only on
/// the input values.
fn svg_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, Vec<(f64, f64)>)],
) -> String {
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.1.iter().copied()).collect();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| SVG_MARGIN + (x - x0) / (x1 - x0) * (SVG_W - 2.0 * SVG_MARGIN);
    let py = |y: f64| SVG_H - SVG_MARGIN - (y - y0) / (y1 - y0) * (SVG_H - 2.0 * SVG_MARGIN);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {SVG_W} {SVG_H}\" \
         font-family=\"monospace\" font-size=\"12\">\n\
         <rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        SVG_W / 2.0,
        svg_escape(title)
    );
    let (ax, ay) = (SVG_MARGIN, SVG_H - SVG_MARGIN);
    out.push_str(&format!(
        "<line x1=\"{ax:.1}\" y1=\"{ay:.1}\" x2=\"{:.1}\" y2=\"{ay:.1}\" stroke=\"black\"/>\n\
         <line x1=\"{ax:.1}\" y1=\"{ay:.1}\" x2=\"{ax:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        SVG_W - SVG_MARGIN,
        SVG_MARGIN
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        SVG_W / 2.0,
        SVG_H - 16.0,
        svg_escape(x_label),
        SVG_H / 2.0,
        SVG_H / 2.0,
        svg_escape(y_label)
    ));
    for (tick, along_x) in [(x0, true), (x1, true), (y0, false), (y1, false)] {
        if along_x {
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{tick:.3}</text>\n",
                px(tick),
                ay + 18.0
            ));
        } else {
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{tick:.3}</text>\n",
                ax - 6.0,
                py(tick) + 4.0
            ));
        }
    }
    for (i, (name, data)) in series.iter().enumerate() {
        let color = SVG_PALETTE[i % SVG_PALETTE.len()];
        let path: Vec<String> =
            data.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            path.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{}</text>\n",
            SVG_W - SVG_MARGIN - 150.0,
            SVG_MARGIN + 16.0 * (i + 1) as f64,
            svg_escape(name)
        ));
    }
    out.push_str("</svg>\n");
    out
}

pub fn curves_to_svg(curves: &[&RDCurve]) -> String {
    let series: Vec<(&str, Vec<(f64, f64)>)> =
        curves.iter().map(|c| (c.label.as_str(), c.points.clone())).collect();
    svg_chart("rate-distortion", "bits per pixel", "weighted PSNR (dB)", &series)
}

pub fn drift_to_svg(report: &DriftReport) -> String {
    let data: Vec<(f64, f64)> =
        report.rows.iter().map(|r| (r.t as f64, r.psnr_weighted)).collect();
    svg_chart("quality across frames", "frame", "weighted PSNR (dB)", &[("psnr", data)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::FrameType;
    use crate::pixels::PixelFormat;
    use crate::synth;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn curve(points: &[(f64, f64)]) -> RDCurve {
        RDCurve::new(points.to_vec(), "t").unwrap()
    }

    fn monotone_curve(rng: &mut ChaCha8Rng, n: usize) -> RDCurve {
        let mut bpp = rng.random_range(0.01..0.05);
        let mut q = rng.random_range(28.0..32.0);
        let mut points = Vec::new();
        for _ in 0..n {
            points.push((bpp, q));
            bpp *= rng.random_range(1.3..2.2);
            q += rng.random_range(0.8..2.5);
        }
        curve(&points)
    }

    #[test]
    fn identical_curves_have_zero_bd_rate() {
        let a = monotone_curve(&mut ChaCha8Rng::seed_from_u64(1), 6);
        assert_eq!(bd_rate(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn uniform_rate_scale_is_exact_and_antisymmetric() {
        let a = monotone_curve(&mut ChaCha8Rng::seed_from_u64(2), 6);
        let b = RDCurve::new(
            a.points.iter().map(|&(r, q)| (r * 0.9, q)).collect(),
            "scaled",
        )
        .unwrap();
        let fwd = bd_rate(&a, &b).unwrap();
        assert!((fwd - -10.0).abs() < 1e-6, "{fwd}");
        let rev = bd_rate(&b, &a).unwrap();
        let implied = -rev / (1.0 + rev / 100.0);
        assert!((fwd - implied).abs() < 1e-6);
    }

    #[test]
    fn closed_form_integral_matches_dense_sampling() {
        // The implementation integrates each cubic analytically; the
        // oracle averages the same interpolants at 1e5 quality points.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..8 {
            let a = monotone_curve(&mut rng, 6);
            let b = monotone_curve(&mut rng, 6);
            let fa = ln_rate_interpolant(&a).unwrap();
            let fb = ln_rate_interpolant(&b).unwrap();
            let lo = fa.x[0].max(fb.x[0]);
            let hi = fa.x[fa.x.len() - 1].min(fb.x[fb.x.len() - 1]);
            if hi <= lo {
                continue;
            }
            let n = 100_000;
            let mut acc = 0.0;
            for i in 0..n {
                let x = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
                acc += fb.eval(x) - fa.eval(x);
            }
            let oracle = ((acc / n as f64).exp() - 1.0) * 100.0;
            let got = bd_rate(&a, &b).unwrap();
            assert!((got - oracle).abs() < 0.05, "got {got}, oracle {oracle}");
        }
    }

    #[test]
    fn interpolant_stays_inside_neighboring_knots() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let c = monotone_curve(&mut rng, 7);
            let f = ln_rate_interpolant(&c).unwrap();
            for i in 0..f.x.len() - 1 {
                let (lo, hi) = (f.y[i].min(f.y[i + 1]), f.y[i].max(f.y[i + 1]));
                for k in 0..200 {
                    let x = f.x[i] + (f.x[i + 1] - f.x[i]) * k as f64 / 199.0;
                    let v = f.eval(x);
                    assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "overshoot at {x}: {v}");
                }
            }
        }
    }

    #[test]
    fn bd_rate_input_validation() {
        let short = curve(&[(0.1, 30.0), (0.2, 32.0), (0.3, 34.0)]);
        let full = curve(&[(0.1, 30.0), (0.2, 32.0), (0.3, 34.0), (0.4, 36.0)]);
        assert!(bd_rate(&short, &full).is_err());
        let disjoint = curve(&[(0.1, 50.0), (0.2, 52.0), (0.3, 54.0), (0.4, 56.0)]);
        assert!(bd_rate(&full, &disjoint).is_err());
        let flat_quality =
            RDCurve::new(vec![(0.1, 30.0), (0.2, 30.0), (0.3, 34.0), (0.4, 36.0)], "f").unwrap();
        assert!(bd_rate(&full, &flat_quality).is_err());
        assert!(RDCurve::new(vec![(0.2, 30.0), (0.1, 32.0)], "x").is_err());
        assert!(RDCurve::new(vec![(0.1, 32.0), (0.2, 30.0)], "x").is_err());
        assert!(RDCurve::new(vec![], "x").is_err());
    }

    #[test]
    fn quality_range_goldens() {
        assert_eq!(curve(&[(0.1, 30.0), (0.2, 42.0)]).quality_range(), 12.0);
        assert_eq!(curve(&[(0.1, 33.0), (0.2, 33.0), (0.3, 33.0)]).quality_range(), 0.0);
        // Rescaling bpp does not move the quality axis.
        let c = monotone_curve(&mut ChaCha8Rng::seed_from_u64(5), 5);
        let scaled =
            RDCurve::new(c.points.iter().map(|&(r, q)| (r * 3.0, q)).collect(), "s").unwrap();
        assert_eq!(c.quality_range(), scaled.quality_range());
    }

    fn log_row(t: u64, psnr: f64) -> FrameLog {
        FrameLog {
            t,
            frame_type: if t == 0 { FrameType::Intra } else { FrameType::Inter },
            q: 21,
            refresh: false,
            bits: 1000 + t,
            psnr_weighted: psnr,
        }
    }

    #[test]
    fn drift_goldens() {
        let flat: Vec<FrameLog> = (0..100).map(|t| log_row(t, 37.5)).collect();
        let r = drift_report(&flat).unwrap();
        assert_eq!(r.slope_db_per_100, 0.0);
        assert_eq!(r.first_quartile_mean_db, r.last_quartile_mean_db);
        // 40 dB decaying to 38 dB across 200 frames: 0.01 dB per frame.
        let decay: Vec<FrameLog> =
            (0..200).map(|t| log_row(t, 40.0 - 0.01 * t as f64)).collect();
        let r = drift_report(&decay).unwrap();
        assert!((r.slope_db_per_100 - -1.0).abs() < 1e-9);
        assert!((r.first_quartile_mean_db - 39.755).abs() < 1e-9);
        assert!((r.last_quartile_mean_db - 38.255).abs() < 1e-9);
        assert_eq!(r.rows.len(), 200);
        assert!(drift_report(&[]).is_err());
    }

    #[test]
    fn csv_round_trips_exactly() {
        let c = monotone_curve(&mut ChaCha8Rng::seed_from_u64(6), 6);
        assert_eq!(curve_from_csv(&curve_to_csv(&c), "t").unwrap(), c);
        let log: Vec<FrameLog> = (0..10).map(|t| log_row(t, 30.0 + 0.37 * t as f64)).collect();
        assert_eq!(log_from_csv(&log_to_csv(&log)).unwrap(), log);
        assert!(curve_from_csv("nope\n1,2\n", "t").is_err());
        assert!(log_from_csv("frame,type,q,refresh,bits,psnr_weighted_db\n0,intra\n").is_err());
    }

    #[test]
    fn rc_log_csv_has_the_documented_columns() {
        let targets = crate::ratecontrol::TargetSchedule::constant(90_000.0).unwrap();
        let report =
            crate::ratecontrol::rc_run_report(&[(32, 3000), (31, 2900)], &targets, (30, 1))
                .unwrap();
        let csv = rc_log_to_csv(&report);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("frame,q,bits,cumulative_bps,target_bps,pinned"));
        assert_eq!(lines.next(), Some("0,32,3000,90000,90000,0"));
    }

    #[test]
    fn svg_emission_is_deterministic_and_self_contained() {
        let c = monotone_curve(&mut ChaCha8Rng::seed_from_u64(7), 6);
        let a = curves_to_svg(&[&c]);
        let b = curves_to_svg(&[&c]);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg "));
        assert!(a.contains("polyline") && a.trim_end().ends_with("</svg>"));
        assert!(!a.contains("http://") || a.contains("xmlns"));
        let log: Vec<FrameLog> = (0..20).map(|t| log_row(t, 35.0)).collect();
        let r = drift_report(&log).unwrap();
        assert!(drift_to_svg(&r).contains("quality across frames"));
    }

    #[test]
    fn default_ladder_spans_the_q_axis() {
        let l = default_q_list(64);
        assert_eq!(l.len(), 16);
        assert_eq!((l[0], l[5], l[15]), (0, 21, 63));
        assert!(l.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn collected_curves_rise_with_q_and_reproduce() {
        let video =
            synth::generate(synth::ClipKind::PanDetail, PixelFormat::Yuv420p8, 48, 48, 4, 2)
                .unwrap();
        let sched = QuantSchedule::default();
        let config = CodecConfig::default();
        let qs = [0, 21, 42, 63];
        let a = collect_rd_curve(&video, &qs, &config, &sched, "a").unwrap();
        let b = collect_rd_curve(&video, &qs, &config, &sched, "a").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 4);
        assert!(collect_rd_curve(&video, &[21, 21], &config, &sched, "x").is_err());
        assert!(collect_rd_curve(&video, &[], &config, &sched, "x").is_err());
    }
}
