use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb, RgbImage};

use super::{EvalError, EvalResult, LatencyReport, RobustnessCurve};
use crate::taxonomy::{EmotionLabel, N_CLASSES};

#[derive(Debug, Clone, Default)]
pub struct ReportInput {
    pub results: Vec<EvalResult>,
    pub curves: Vec<RobustnessCurve>,
    pub latency: Option<LatencyReport>,
}

/// File-name form of a slice id: characters outside `[A-Za-z0-9_-]`
/// become `_`.
pub fn file_stem(slice_id: &str) -> String {
    slice_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> EvalError + '_ {
    move |e| EvalError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), EvalError> {
    fs::write(path, text).map_err(io(path))
}

fn save_png(path: &Path, img: &RgbImage) -> Result<(), EvalError> {
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
}

/// Writes tables, plots and `summary.md` into `out_dir` and returns the
/// paths written. Tables are byte-identical for identical inputs.
pub fn emit_report(input: &ReportInput, out_dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut written = Vec::new();
    if !input.results.is_empty() {
        let path = out_dir.join("metrics.csv");
        write(&path, &metrics_csv(&input.results))?;
        written.push(path);
        for r in &input.results {
            let stem = file_stem(&r.slice_id);
            let csv = out_dir.join(format!("confusion_{stem}.csv"));
            write(&csv, &confusion_csv(r))?;
            let png = out_dir.join(format!("confusion_{stem}.png"));
            save_png(&png, &confusion_heatmap(r))?;
            written.extend([csv, png]);
        }
    }
    for c in &input.curves {
        let png = out_dir.join(format!("robustness_{}.png", file_stem(&c.base_eval_id)));
        save_png(&png, &robustness_plot(c))?;
        written.push(png);
    }
    if let Some(l) = &input.latency {
        let path = out_dir.join("latency.csv");
        write(&path, &latency_csv(l))?;
        written.push(path);
    }
    let path = out_dir.join("summary.md");
    write(&path, &summary_md(input))?;
    written.push(path);
    Ok(written)
}

pub fn metrics_csv(results: &[EvalResult]) -> String {
    let mut s = String::from("slice_id,n_records,overall_accuracy,class,precision,recall,f1,support,zero_denominator\n");
    for r in results {
        for label in EmotionLabel::ALL {
            let m = r.per_class[label.index()];
            let _ = writeln!(
                s,
                "{},{},{:.6},{},{:.6},{:.6},{:.6},{},{}",
                r.slice_id, r.n_records, r.overall_accuracy, label, m.precision, m.recall, m.f1, m.support, m.zero_denominator
            );
        }
    }
    s
}

pub fn confusion_csv(r: &EvalResult) -> String {
    let mut s = String::from("true\\predicted");
    for l in EmotionLabel::ALL {
        let _ = write!(s, ",{l}");
    }
    s.push('\n');
    for (label, row) in EmotionLabel::ALL.iter().zip(&r.confusion) {
        s.push_str(label.name());
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn latency_csv(l: &LatencyReport) -> String {
    let mut s = String::from("stage,n_samples,mean_ms,p50_ms,p95_ms,max_ms\n");
    for (stage, st) in &l.stages {
        let _ = writeln!(s, "{stage},{},{:.3},{:.3},{:.3},{:.3}", l.n_samples, st.mean_ms, st.p50_ms, st.p95_ms, st.max_ms);
    }
    s
}

fn snr_label(snr: f64) -> String {
    if snr.is_infinite() {
        "clean".into()
    } else {
        format!("{snr} dB")
    }
}

/// Slices named `<base>/fused` alongside `<base>/audio` or `<base>/text`
/// yield fused-minus-single accuracy deltas.
pub fn fusion_deltas(results: &[EvalResult]) -> Vec<(String, String, f64)> {
    let mut out = Vec::new();
    for fused in results {
        let Some(base) = fused.slice_id.strip_suffix("/fused") else { continue };
        for single in ["audio", "text"] {
            let id = format!("{base}/{single}");
            if let Some(other) = results.iter().find(|r| r.slice_id == id) {
                out.push((base.to_string(), single.to_string(), fused.overall_accuracy - other.overall_accuracy));
            }
        }
    }
    out
}

pub fn summary_md(input: &ReportInput) -> String {
    let mut s = String::from("# Evaluation summary\n\n");
    if input.results.is_empty() && input.curves.is_empty() && input.latency.is_none() {
        s.push_str("No results.\n");
        return s;
    }
    if !input.results.is_empty() {
        s.push_str("## Accuracy\n\n| slice | records | accuracy | macro F1 |\n|---|---:|---:|---:|\n");
        for r in &input.results {
            let _ = writeln!(s, "| {} | {} | {:.4} | {:.4} |", r.slice_id, r.n_records, r.overall_accuracy, r.macro_f1());
        }
        let flagged: Vec<String> = input
            .results
            .iter()
            .flat_map(|r| {
                EmotionLabel::ALL
                    .iter()
                    .filter(|l| r.per_class[l.index()].zero_denominator)
                    .map(move |l| format!("{}:{l}", r.slice_id))
            })
            .collect();
        if !flagged.is_empty() {
            let _ = writeln!(s, "\nZero-denominator metrics reported as 0: {}", flagged.join(", "));
        }
        let deltas = fusion_deltas(&input.results);
        if !deltas.is_empty() {
            s.push_str("\n## Fused vs single modality\n\n| slice | compared to | accuracy delta |\n|---|---|---:|\n");
            for (base, single, d) in deltas {
                let _ = writeln!(s, "| {base} | {single} | {d:+.4} |");
            }
        }
        s.push('\n');
    }
    for c in &input.curves {
        let _ = writeln!(s, "## Noise robustness: {}\n\n| SNR | accuracy | clips |\n|---|---:|---:|", c.base_eval_id);
        for p in &c.points {
            let _ = writeln!(s, "| {} | {:.4} | {} |", snr_label(p.snr_db), p.accuracy, p.n_evaluated);
        }
        let _ = writeln!(s, "\nSeed {}; silent clips skipped: {}\n", c.seed, c.skipped_silent);
    }
    if let Some(l) = &input.latency {
        let _ = writeln!(s, "## Latency ({} runs)\n\n| stage | mean ms | p50 ms | p95 ms | max ms |\n|---|---:|---:|---:|---:|", l.n_samples);
        for (stage, st) in &l.stages {
            let _ = writeln!(s, "| {stage} | {:.2} | {:.2} | {:.2} | {:.2} |", st.mean_ms, st.p50_ms, st.p95_ms, st.max_ms);
        }
    }
    s
}

const CELL: u32 = 32;
const MARGIN: u32 = 8;

fn heat(v: f64) -> Rgb<u8> {
    let t = v.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    Rgb([lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0)])
}

/// Row-normalized confusion heatmap; row i is true class i, column j the
/// predicted class j, darker is larger.
pub fn confusion_heatmap(r: &EvalResult) -> RgbImage {
    let side = MARGIN * 2 + CELL * N_CLASSES as u32;
    let mut img: RgbImage = ImageBuffer::from_pixel(side, side, Rgb([255, 255, 255]));
    for (i, row) in r.confusion.iter().enumerate() {
        let total: u64 = row.iter().sum();
        for (j, &v) in row.iter().enumerate() {
            let frac = if total == 0 { 0.0 } else { v as f64 / total as f64 };
            let color = heat(frac);
            for y in 0..CELL - 1 {
                for x in 0..CELL - 1 {
                    img.put_pixel(MARGIN + j as u32 * CELL + x, MARGIN + i as u32 * CELL + y, color);
                }
            }
        }
    }
    img
}

/// Accuracy (y, 0..1) against SNR points (x, evenly spaced, clean first).
pub fn robustness_plot(c: &RobustnessCurve) -> RgbImage {
    let (w, h) = (480u32, 320u32);
    let (left, right, top, bottom) = (40.0, 20.0, 20.0, 30.0);
    let mut img: RgbImage = ImageBuffer::from_pixel(w, h, Rgb([255, 255, 255]));
    let plot_w = w as f64 - left - right;
    let plot_h = h as f64 - top - bottom;
    let grid = Rgb([220, 220, 220]);
    for k in 0..=4 {
        let y = (top + plot_h * k as f64 / 4.0).round() as u32;
        for x in left as u32..(w - right as u32) {
            img.put_pixel(x, y, grid);
        }
    }
    let axis = Rgb([0, 0, 0]);
    for y in top as u32..=(h - bottom as u32) {
        img.put_pixel(left as u32, y, axis);
    }
    let n = c.points.len();
    let to_px = |i: usize, acc: f64| {
        let x = if n <= 1 { left + plot_w / 2.0 } else { left + plot_w * i as f64 / (n - 1) as f64 };
        (x, top + plot_h * (1.0 - acc.clamp(0.0, 1.0)))
    };
    let line = Rgb([200, 40, 40]);
    let pts: Vec<(f64, f64)> = c.points.iter().enumerate().map(|(i, p)| to_px(i, p.accuracy)).collect();
    for pair in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let (x, y) = (x0 + (x1 - x0) * t, y0 + (y1 - y0) * t);
            img.put_pixel(x.round() as u32, y.round() as u32, line);
        }
    }
    for (x, y) in pts {
        for dy in -2i32..=2 {
            for dx in -2i32..=2 {
                let (px, py) = (x.round() as i32 + dx, y.round() as i32 + dy);
                if px >= 0 && py >= 0 && (px as u32) < w && (py as u32) < h {
                    img.put_pixel(px as u32, py as u32, line);
                }
            }
        }
    }
    img
}
