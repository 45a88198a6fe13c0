//! Signal, dataset and heatmap files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::explain::Heatmap;
use crate::types::{AugmentationOp, FaultLabel, LabeledDataset, LabeledSample, Provenance, Spectrum, Split, TimeSeries};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Parses the signal text format: `fs <rate>` on the first line, then one
/// sample per nonempty line. Lines starting with `#` are skipped.
pub fn parse_signal(text: &str, path: &Path) -> Result<TimeSeries> {
    let mut fs = None;
    let mut samples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match fs {
            None => {
                let rate = line
                    .strip_prefix("fs")
                    .filter(|rest| rest.starts_with(char::is_whitespace))
                    .ok_or_else(|| parse_err(path, i + 1, "missing 'fs <rate>' header"))?;
                let rate: f64 = rate
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(path, i + 1, format!("bad sample rate '{}'", rate.trim())))?;
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(parse_err(path, i + 1, format!("sample rate must be positive, got {rate}")));
                }
                fs = Some(rate);
            }
            Some(_) => {
                let v: f64 = line
                    .parse()
                    .map_err(|_| parse_err(path, i + 1, format!("not a number: '{line}'")))?;
                if !v.is_finite() {
                    return Err(parse_err(path, i + 1, "sample is not finite"));
                }
                samples.push(v);
            }
        }
    }
    let fs = fs.ok_or_else(|| parse_err(path, 1, "missing 'fs <rate>' header"))?;
    if samples.is_empty() {
        return Err(parse_err(path, text.lines().count().max(1), "signal has no samples"));
    }
    TimeSeries::new(samples, fs)
}

pub fn load_signal(path: &Path) -> Result<TimeSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_signal(&text, path)
}

pub fn signal_to_text(x: &TimeSeries) -> String {
    let mut out = String::with_capacity(x.len() * 22 + 16);
    let _ = writeln!(out, "fs {}", x.sample_rate_hz());
    for v in x.samples() {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn save_signal(x: &TimeSeries, path: &Path) -> Result<()> {
    write_file(path, signal_to_text(x).as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Signal files (`*.txt`) in a directory, sorted by name.
pub fn signal_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads labeled signals from `dir/<label>/*.txt`. Missing label
/// directories are skipped; an entirely empty tree is an error.
pub fn load_labeled_signals(dir: &Path) -> Result<Vec<(TimeSeries, FaultLabel, String)>> {
    let mut out = Vec::new();
    for label in FaultLabel::ALL {
        let sub = dir.join(label.name());
        if !sub.is_dir() {
            continue;
        }
        for f in signal_files(&sub)? {
            let id = f.display().to_string();
            out.push((load_signal(&f)?, label, id));
        }
    }
    if out.is_empty() {
        return Err(Error::invalid(format!(
            "no labeled signals under {} (expected <label>/*.txt)",
            dir.display()
        )));
    }
    Ok(out)
}

const DATASET_HEADER: &str = "label,split,origin,repetition,augmentation,parameter,seed,df_hz,f_start_hz,normalized";

/// One row per sample: metadata columns followed by the spectrum bins.
pub fn dataset_to_csv(ds: &LabeledDataset) -> String {
    let bins = ds.spectrum_len().unwrap_or(0);
    let mut out = String::from(DATASET_HEADER);
    for b in 0..bins {
        let _ = write!(out, ",b{b}");
    }
    out.push('\n');
    for (s, split) in ds.iter() {
        let p = &s.provenance;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.label.name(),
            split.name(),
            p.origin_signal_id,
            p.repetition,
            p.augmentation_op.name(),
            p.augmentation_op.parameter(),
            p.rng_seed,
            s.spectrum.df_hz(),
            s.spectrum.f_start_hz(),
            s.spectrum.is_normalized()
        );
        for v in s.spectrum.magnitudes() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn dataset_from_csv(text: &str, path: &Path) -> Result<LabeledDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty dataset file"))?;
    if !header.starts_with(DATASET_HEADER) {
        return Err(parse_err(path, 1, "unrecognized dataset header"));
    }
    let meta = DATASET_HEADER.split(',').count();
    let bins = header.split(',').count() - meta;
    let mut ds = LabeledDataset::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: String| parse_err(path, i + 1, m);
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != meta + bins {
            return Err(err(format!("expected {} columns, got {}", meta + bins, cols.len())));
        }
        let num = |j: usize| -> Result<f64> {
            cols[j].parse().map_err(|_| err(format!("column {}: not a number '{}'", j + 1, cols[j])))
        };
        let int = |j: usize| -> Result<u64> {
            cols[j].parse().map_err(|_| err(format!("column {}: not an integer '{}'", j + 1, cols[j])))
        };
        let label: FaultLabel = cols[0].parse().map_err(|e: Error| err(e.to_string()))?;
        let split: Split = cols[1].parse().map_err(|e: Error| err(e.to_string()))?;
        let op = AugmentationOp::from_parts(cols[4], num(5)?).map_err(|e| err(e.to_string()))?;
        let normalized = match cols[9] {
            "true" => true,
            "false" => false,
            other => return Err(err(format!("bad normalized flag '{other}'"))),
        };
        let values = (meta..meta + bins).map(num).collect::<Result<Vec<_>>>()?;
        let spectrum = Spectrum::new(values, num(7)?, num(8)?, normalized).map_err(|e| err(e.to_string()))?;
        ds.push(
            LabeledSample {
                spectrum,
                label,
                provenance: Provenance {
                    origin_signal_id: int(2)? as usize,
                    repetition: int(3)? as usize,
                    augmentation_op: op,
                    rng_seed: int(6)?,
                },
            },
            split,
        );
    }
    Ok(ds)
}

pub fn save_dataset(ds: &LabeledDataset, path: &Path) -> Result<()> {
    write_file(path, dataset_to_csv(ds).as_bytes())
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    dataset_from_csv(&text, path)
}

pub const HEATMAP_HEADER: &str = "frequency_hz,magnitude,relevance";

/// Heatmap CSV with 17 significant digits per value.
pub fn heatmap_to_csv(spectrum: &Spectrum, heatmap: &Heatmap) -> Result<String> {
    if spectrum.len() != heatmap.len() {
        return Err(Error::ShapeMismatch {
            expected: spectrum.len(),
            got: heatmap.len(),
        });
    }
    let mut out = String::from(HEATMAP_HEADER);
    out.push('\n');
    for (k, (m, r)) in spectrum.magnitudes().iter().zip(&heatmap.relevance).enumerate() {
        let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", spectrum.frequency_of(k), m, r);
    }
    Ok(out)
}

/// Reads back `(frequency, magnitude, relevance)` rows.
pub fn heatmap_from_csv(text: &str, path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEATMAP_HEADER => {}
        _ => return Err(parse_err(path, 1, format!("expected header '{HEATMAP_HEADER}'"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, i + 1, "not a number"))?;
        if vals.len() != 3 {
            return Err(parse_err(path, i + 1, format!("expected 3 columns, got {}", vals.len())));
        }
        rows.push((vals[0], vals[1], vals[2]));
    }
    Ok(rows)
}

/// Spectrum line plot with relevance drawn as red shading behind it.
pub fn heatmap_to_svg(spectrum: &Spectrum, heatmap: &Heatmap) -> Result<String> {
    if spectrum.len() != heatmap.len() {
        return Err(Error::ShapeMismatch {
            expected: spectrum.len(),
            got: heatmap.len(),
        });
    }
    let (w, h, pad) = (900.0, 300.0, 30.0);
    let m = spectrum.magnitudes();
    let lo = m.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = m.len().max(2) as f64 - 1.0;
    let x = |k: usize| pad + (w - 2.0 * pad) * k as f64 / n;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / span;
    let bar = (w - 2.0 * pad) / n;
    let peak = heatmap.raw.iter().cloned().fold(0.0, f64::max);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    for (k, r) in heatmap.raw.iter().enumerate() {
        let a = if peak > 0.0 { r / peak } else { 0.0 };
        if a > 0.01 {
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{pad}\" width=\"{:.2}\" height=\"{}\" fill=\"red\" fill-opacity=\"{:.3}\"/>",
                x(k) - bar / 2.0,
                bar,
                h - 2.0 * pad,
                0.6 * a
            );
        }
    }
    let points: Vec<String> = m.iter().enumerate().map(|(k, &v)| format!("{:.2},{:.2}", x(k), y(v))).collect();
    let _ = writeln!(
        out,
        "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1\" points=\"{}\"/>",
        points.join(" ")
    );
    let _ = writeln!(
        out,
        "<text x=\"{pad}\" y=\"{h}\" font-size=\"12\" dy=\"-8\">{:.1} Hz</text>",
        spectrum.frequency_of(0)
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{h}\" font-size=\"12\" dy=\"-8\" text-anchor=\"end\">{:.1} Hz</text>",
        w - pad,
        spectrum.max_frequency_hz()
    );
    let _ = writeln!(
        out,
        "<text x=\"{pad}\" y=\"18\" font-size=\"13\">Grad-CAM: {}</text>",
        heatmap.target_class
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Writes the CSV and, when `svg` is given, the plot too.
pub fn export_heatmap(spectrum: &Spectrum, heatmap: &Heatmap, path: &Path, svg: Option<&Path>) -> Result<()> {
    write_file(path, heatmap_to_csv(spectrum, heatmap)?.as_bytes())?;
    if let Some(svg_path) = svg {
        write_file(svg_path, heatmap_to_svg(spectrum, heatmap)?.as_bytes())?;
    }
    Ok(())
}
