//! Accuracy and confusion-matrix reporting across repeated runs.

use std::fmt::Write as _;

use crate::types::FaultLabel;

pub type Confusion = [[usize; FaultLabel::COUNT]; FaultLabel::COUNT];

/// Outcome of one train-and-evaluate run. Confusion rows are true labels,
/// columns predicted labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub epochs: usize,
    pub best_epoch: usize,
    pub wall_clock_s: f64,
}

pub fn accuracy_of(confusion: &Confusion) -> f64 {
    let total: usize = confusion.iter().flatten().sum();
    let hits: usize = (0..FaultLabel::COUNT).map(|i| confusion[i][i]).sum();
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub runs: Vec<RunResult>,
}

impl EvalReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.accuracy).collect()
    }

    pub fn mean_accuracy(&self) -> f64 {
        mean_std(&self.accuracies()).0
    }

    /// Population standard deviation over runs.
    pub fn std_accuracy(&self) -> f64 {
        mean_std(&self.accuracies()).1
    }

    fn cell_stats(&self) -> [[(f64, f64); FaultLabel::COUNT]; FaultLabel::COUNT] {
        let mut out = [[(0.0, 0.0); FaultLabel::COUNT]; FaultLabel::COUNT];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                let v: Vec<f64> = self.runs.iter().map(|r| r.confusion[i][j] as f64).collect();
                *cell = mean_std(&v);
            }
        }
        out
    }

    pub fn confusion_mean(&self) -> [[f64; FaultLabel::COUNT]; FaultLabel::COUNT] {
        self.cell_stats().map(|row| row.map(|c| c.0))
    }

    pub fn confusion_std(&self) -> [[f64; FaultLabel::COUNT]; FaultLabel::COUNT] {
        self.cell_stats().map(|row| row.map(|c| c.1))
    }

    /// Human-readable summary. Timing is left out so reruns compare equal.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "runs: {}", self.runs.len());
        let _ = writeln!(
            out,
            "accuracy: {:.2}% (std {:.2}%)",
            100.0 * self.mean_accuracy(),
            100.0 * self.std_accuracy()
        );
        for r in &self.runs {
            let _ = writeln!(
                out,
                "  run {:>2}: {:.2}%  epochs {} (best {})  seed {}",
                r.run,
                100.0 * r.accuracy,
                r.epochs,
                r.best_epoch,
                r.seed
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "confusion matrix, rows = true, columns = predicted; mean (std) over runs");
        let stats = self.cell_stats();
        let _ = write!(out, "{:<14}", "");
        for l in FaultLabel::ALL {
            let _ = write!(out, "{:>15}", l.name());
        }
        out.push('\n');
        for (i, l) in FaultLabel::ALL.iter().enumerate() {
            let _ = write!(out, "{:<14}", l.name());
            for (m, s) in stats[i] {
                let _ = write!(out, "{:>15}", format!("{m:.1} ({s:.1})"));
            }
            out.push('\n');
        }
        out
    }

    /// One row per run: accuracy plus the flattened confusion matrix.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run,seed,accuracy,epochs,best_epoch");
        for t in FaultLabel::ALL {
            for p in FaultLabel::ALL {
                let _ = write!(out, ",{}>{}", t.name(), p.name());
            }
        }
        out.push('\n');
        for r in &self.runs {
            let _ = write!(out, "{},{},{},{},{}", r.run, r.seed, r.accuracy, r.epochs, r.best_epoch);
            for v in r.confusion.iter().flatten() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("run,wall_clock_s\n");
        for r in &self.runs {
            let _ = writeln!(out, "{},{:.3}", r.run, r.wall_clock_s);
        }
        out
    }
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

pub fn sweep_to_text(name: &str, rows: &[SweepRow]) -> String {
    let mut out = format!("{name:>10}  {:>10}  {:>8}\n", "accuracy", "std");
    for r in rows {
        let _ = writeln!(
            out,
            "{:>10}  {:>9.2}%  {:>7.2}%",
            r.value,
            100.0 * r.mean_accuracy,
            100.0 * r.std_accuracy
        );
    }
    out
}

pub fn sweep_to_csv(name: &str, rows: &[SweepRow]) -> String {
    let mut out = format!("{name},mean_accuracy,std_accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.value, r.mean_accuracy, r.std_accuracy);
    }
    out
}
