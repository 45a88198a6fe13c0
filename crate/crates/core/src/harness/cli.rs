//! Command-line front end.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::experiment::{
    evaluate, load_test_set, pool_config, run_experiment_with, run_seed, surrogate_test_set, sweep_real_count,
    sweep_total_size, training_baselines,
};
use super::files::{export_heatmap, load_dataset, load_signal, save_dataset, save_signal, write_file};
use super::report::{accuracy_of, sweep_to_csv, sweep_to_text, EvalReport, RunResult};
use crate::augment::build_training_pool;
use crate::error::{Error, Result};
use crate::explain::{explain_prediction, gradcam};
use crate::net1d::{load_model, predict, save_model, train_with_progress, TrainedModel};
use crate::spectral::{preprocess, SpectralConfig};
use crate::synthgen::{gen_all_conditions, gen_baseline_surrogate};
use crate::types::{derive_seed, FaultLabel, LabeledDataset, Spectrum, TimeSeries};

#[derive(Parser, Debug)]
#[command(name = "faultdx", version, about = "Synthetic fault spectra, 1D CNN diagnosis and Grad-CAM explanations")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides `experiment.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overrides `paths.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set train.patience=4`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write one signal per condition for each baseline.
    Gen {
        /// Baseline signal file; surrogates are generated when absent.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Number of surrogate baselines.
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Build a synthetic training pool and save it as CSV.
    BuildDataset,
    /// Train a model on a saved dataset, or on a freshly built pool.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run the repeated experiment, or score one saved model.
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Classify one signal file.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        signal: PathBuf,
    },
    /// Classify one signal file and write its Grad-CAM heatmap.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        /// Explain this class instead of the predicted one.
        #[arg(long)]
        target: Option<String>,
        /// Heatmap CSV path (default `<out>/heatmap.csv`).
        #[arg(long)]
        heatmap: Option<PathBuf>,
        /// Also write an SVG plot here.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Accuracy against total pool size.
    SweepTotal {
        /// Comma-separated sizes (default: `experiment.sizes`).
        #[arg(long)]
        sizes: Option<String>,
    },
    /// Accuracy against the number of baseline signals.
    SweepReal {
        /// Comma-separated counts (default: `experiment.real_counts`).
        #[arg(long)]
        counts: Option<String>,
    },
}

/// Exit status for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFiniteLoss { .. } => 3,
        _ => 2,
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        cfg.apply_text(&text, &path.display().to_string())?;
    }
    for o in &common.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{o}'")))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    cli_main_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn cli_main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match run(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let say = |w: &mut dyn Write, s: &str| w.write_all(s.as_bytes()).map_err(|e| Error::io("<stdout>", e));
    match cli.command {
        Command::Gen { baseline, count } => {
            let baselines: Vec<TimeSeries> = match baseline {
                Some(p) => vec![load_signal(&p)?],
                None => (0..count)
                    .map(|i| {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[10, i as u64]));
                        gen_baseline_surrogate(&cfg.machine, cfg.fs, cfg.n, &cfg.surrogate, &mut rng)
                    })
                    .collect::<Result<_>>()?,
            };
            for (i, b) in baselines.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[11, i as u64]));
                for (signal, label) in gen_all_conditions(b, &cfg.machine, &cfg.amplitude, &mut rng)? {
                    let path = cfg.out_dir.join(label.name()).join(format!("{}_{i:03}.txt", label.name()));
                    save_signal(&signal, &path)?;
                }
            }
            say(out, &format!("wrote {} signals under {}\n", 7 * baselines.len(), cfg.out_dir.display()))
        }
        Command::BuildDataset => {
            let ds = build_pool(&cfg)?;
            let path = cfg.out_dir.join("dataset.csv");
            save_dataset(&ds, &path)?;
            say(out, &format!("wrote {} samples to {}\n", ds.len(), path.display()))
        }
        Command::Train { dataset } => {
            let ds = match dataset {
                Some(p) => load_dataset(&p)?,
                None => build_pool(&cfg)?,
            };
            let len = ds.spectrum_len().ok_or_else(|| Error::invalid("dataset is empty"))?;
            let mut train_cfg = cfg.train.clone();
            train_cfg.seed = derive_seed(run_seed(cfg.seed, 0), &[1]);
            let mut history = String::from("epoch,train_loss,train_accuracy,val_accuracy\n");
            let model = train_with_progress(&ds, &cfg.architecture(len), &train_cfg, |r| {
                let _ = writeln!(
                    err,
                    "epoch {:>3}  loss {:.4}  train {:.4}  val {:.4}",
                    r.epoch, r.train_loss, r.train_accuracy, r.val_accuracy
                );
                let _ = writeln!(history, "{},{},{},{}", r.epoch, r.train_loss, r.train_accuracy, r.val_accuracy);
            })?;
            let path = cfg.out_dir.join("model.fdx");
            std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
            save_model(&model, &path)?;
            write_file(&cfg.out_dir.join("history.csv"), history.as_bytes())?;
            say(
                out,
                &format!(
                    "trained {} epochs, kept epoch {}; model written to {}\n",
                    model.epochs_run(),
                    model.best_epoch,
                    path.display()
                ),
            )
        }
        Command::Evaluate { model: Some(path) } => {
            let model = load_model(&path)?;
            let test = load_test_set(&cfg)?;
            let confusion = evaluate(&model, &test)?;
            let report = EvalReport {
                runs: vec![RunResult {
                    run: 1,
                    seed: cfg.seed,
                    accuracy: accuracy_of(&confusion),
                    confusion,
                    epochs: 0,
                    best_epoch: 0,
                    wall_clock_s: 0.0,
                }],
            };
            write_report(&cfg.out_dir, &report)?;
            say(out, &report.to_text())
        }
        Command::Evaluate { model: None } => {
            let test = load_test_set(&cfg)?;
            let models = cfg.out_dir.join("models");
            std::fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
            let mut partial = EvalReport::default();
            let report = run_experiment_with(&cfg, cfg.n_total, cfg.n_r, &test, |r, m| {
                let _ = writeln!(err, "run {}: accuracy {:.4} ({:.1} s)", r.run, r.accuracy, r.wall_clock_s);
                save_model(m, &models.join(format!("run_{:02}.fdx", r.run)))?;
                partial.runs.push(r.clone());
                write_report(&cfg.out_dir, &partial)
            })?;
            say(out, &report.to_text())
        }
        Command::Diagnose { model, signal } => {
            let model = load_model(&model)?;
            let spectrum = model_spectrum(&model, &load_signal(&signal)?, &cfg.spectral)?;
            let (label, probs) = predict(&model, &spectrum)?;
            say(out, &format!("{}}}\n", json_head(label, &probs)))
        }
        Command::Explain {
            model,
            signal,
            target,
            heatmap,
            svg,
        } => {
            let model = load_model(&model)?;
            let spectrum = model_spectrum(&model, &load_signal(&signal)?, &cfg.spectral)?;
            let (label, probs) = predict(&model, &spectrum)?;
            let (_, map, top) = match target {
                Some(t) => {
                    let t: FaultLabel = t.parse()?;
                    let map = gradcam(&model, &spectrum, t)?;
                    let top = map.top_frequencies();
                    (label, map, top)
                }
                None => explain_prediction(&model, &spectrum)?,
            };
            let csv_path = heatmap.unwrap_or_else(|| cfg.out_dir.join("heatmap.csv"));
            export_heatmap(&spectrum, &map, &csv_path, svg.as_deref())?;
            let mut line = json_head(label, &probs);
            let _ = write!(line, ", \"target\": \"{}\", \"top_frequencies\": [", map.target_class.name());
            let items: Vec<String> = top.iter().map(|(f, r)| format!("[{f}, {r}]")).collect();
            let _ = write!(line, "{}], \"heatmap\": \"{}\"}}", items.join(", "), csv_path.display());
            say(out, &format!("{line}\n"))
        }
        Command::SweepTotal { sizes } => {
            let sizes = match sizes {
                Some(s) => parse_list(&s)?,
                None => cfg.sizes.clone(),
            };
            let test = load_test_set(&cfg)?;
            let rows = sweep_total_size(&cfg, &sizes, &test)?;
            write_file(&cfg.out_dir.join("sweep_total.txt"), sweep_to_text("n_total", &rows).as_bytes())?;
            write_file(&cfg.out_dir.join("sweep_total.csv"), sweep_to_csv("n_total", &rows).as_bytes())?;
            say(out, &sweep_to_text("n_total", &rows))
        }
        Command::SweepReal { counts } => {
            let counts = match counts {
                Some(s) => parse_list(&s)?,
                None => cfg.real_counts.clone(),
            };
            let test = if cfg.test_dir.is_some() {
                load_test_set(&cfg)?
            } else {
                surrogate_test_set(&cfg)?
            };
            let rows = sweep_real_count(&cfg, &counts, &test)?;
            write_file(&cfg.out_dir.join("sweep_real.txt"), sweep_to_text("n_r", &rows).as_bytes())?;
            write_file(&cfg.out_dir.join("sweep_real.csv"), sweep_to_csv("n_r", &rows).as_bytes())?;
            say(out, &sweep_to_text("n_r", &rows))
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("not a count: '{}'", v.trim())))
        })
        .collect()
}

fn build_pool(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    let seed = run_seed(cfg.seed, 0);
    let baselines = if cfg.n_r == 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2]));
        vec![gen_baseline_surrogate(&cfg.machine, cfg.fs, cfg.n, &cfg.surrogate, &mut rng)?]
    } else {
        training_baselines(cfg, cfg.n_r)?
    };
    build_training_pool(&baselines, &pool_config(cfg, cfg.n_total, derive_seed(seed, &[0])))
}

pub(crate) fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    write_file(&dir.join("report.txt"), report.to_text().as_bytes())?;
    write_file(&dir.join("report.csv"), report.to_csv().as_bytes())?;
    write_file(&dir.join("timing.csv"), report.timing_csv().as_bytes())
}

/// Preprocesses `x` with the cut that yields the model's input length.
fn model_spectrum(model: &TrainedModel, x: &TimeSeries, base: &SpectralConfig) -> Result<Spectrum> {
    let bins = model.architecture().input_len;
    let df = x.sample_rate_hz() / x.len() as f64;
    if bins > x.len() / 2 + 1 {
        return Err(Error::ShapeMismatch {
            expected: bins,
            got: x.len() / 2 + 1,
        });
    }
    let cfg = SpectralConfig {
        f_max_hz: (bins - 1) as f64 * df,
        ..base.clone()
    };
    preprocess(x, &cfg)
}

fn json_head(label: FaultLabel, probs: &[f64]) -> String {
    let items: Vec<String> = FaultLabel::ALL
        .iter()
        .zip(probs)
        .map(|(l, p)| format!("\"{}\": {p}", l.name()))
        .collect();
    format!("{{\"label\": \"{}\", \"probabilities\": {{{}}}", label.name(), items.join(", "))
}
