//! Repeated train-and-evaluate protocols.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::files::{load_labeled_signals, load_signal, signal_files};
use super::report::{accuracy_of, Confusion, EvalReport, RunResult, SweepRow};
use crate::augment::{build_training_pool, PoolConfig};
use crate::error::{Error, Result};
use crate::net1d::{predict_batch, train_with_progress, EpochRecord, TrainedModel};
use crate::spectral::preprocess;
use crate::synthgen::{gen_all_conditions, gen_baseline_surrogate};
use crate::types::{argmax, derive_seed, AugmentationOp, LabeledDataset, LabeledSample, Provenance, Split, TimeSeries};

// independent RNG streams under the master seed
const BASELINE_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const RUN_STREAM: u64 = 3;

fn surrogate(cfg: &ExperimentConfig, seed: u64) -> Result<TimeSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_baseline_surrogate(&cfg.machine, cfg.fs, cfg.n, &cfg.surrogate, &mut rng)
}

/// Baselines available for synthesis: the measured signals when a baseline
/// directory is configured, otherwise fixed surrogates.
pub fn training_baselines(cfg: &ExperimentConfig, n_r: usize) -> Result<Vec<TimeSeries>> {
    match &cfg.baselines_dir {
        Some(dir) => {
            let files = signal_files(dir)?;
            if files.len() < n_r {
                return Err(Error::invalid(format!(
                    "{} holds {} baseline signals, {} requested",
                    dir.display(),
                    files.len(),
                    n_r
                )));
            }
            files[..n_r].iter().map(|f| load_signal(f)).collect()
        }
        None => (0..n_r)
            .into_par_iter()
            .map(|i| surrogate(cfg, derive_seed(cfg.seed, &[BASELINE_STREAM, i as u64])))
            .collect(),
    }
}

fn test_sample(cfg: &ExperimentConfig, signal: &TimeSeries, label: crate::FaultLabel, id: usize, seed: u64) -> Result<LabeledSample> {
    Ok(LabeledSample {
        spectrum: preprocess(signal, &cfg.spectral)?,
        label,
        provenance: Provenance {
            origin_signal_id: id,
            repetition: 0,
            augmentation_op: AugmentationOp::None,
            rng_seed: seed,
        },
    })
}

/// Every condition injected once into each of `test_baselines` held-out
/// surrogates. These baselines come from a stream never used for training.
pub fn surrogate_test_set(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    let per_baseline: Vec<Vec<LabeledSample>> = (0..cfg.test_baselines)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.seed, &[TEST_STREAM, i as u64]);
            let base = surrogate(cfg, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
            gen_all_conditions(&base, &cfg.machine, &cfg.amplitude, &mut rng)?
                .iter()
                .map(|(s, l)| test_sample(cfg, s, *l, i, seed))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut ds = LabeledDataset::new();
    for s in per_baseline.into_iter().flatten() {
        ds.push(s, Split::Test);
    }
    Ok(ds)
}

/// The configured test directory, or the surrogate test set.
pub fn load_test_set(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    let Some(dir) = &cfg.test_dir else {
        return surrogate_test_set(cfg);
    };
    let signals = load_labeled_signals(dir)?;
    let samples: Vec<LabeledSample> = signals
        .par_iter()
        .enumerate()
        .map(|(i, (x, l, _))| test_sample(cfg, x, *l, i, 0))
        .collect::<Result<_>>()?;
    let mut ds = LabeledDataset::new();
    for s in samples {
        ds.push(s, Split::Test);
    }
    Ok(ds)
}

pub fn pool_config(cfg: &ExperimentConfig, n_total: usize, seed: u64) -> PoolConfig {
    let mut augment = cfg.augment.clone();
    augment.seed = seed;
    PoolConfig {
        spec: cfg.machine.clone(),
        rule: cfg.amplitude.clone(),
        augment,
        spectral: cfg.spectral.clone(),
        n_total,
        validation_fraction: cfg.validation_fraction,
    }
}

/// Confusion counts of `model` on every sample of `test`.
pub fn evaluate(model: &TrainedModel, test: &LabeledDataset) -> Result<Confusion> {
    let xs: Vec<&[f64]> = test.samples().iter().map(|s| s.spectrum.magnitudes()).collect();
    let probs = predict_batch(&model.network, &xs)?;
    let mut confusion = [[0; crate::FaultLabel::COUNT]; crate::FaultLabel::COUNT];
    for (p, s) in probs.iter().zip(test.samples()) {
        confusion[s.label.index()][model.label_order[argmax(p)].index()] += 1;
    }
    Ok(confusion)
}

/// Seed of run `r` under `master`.
pub fn run_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, &[RUN_STREAM, r as u64])
}

/// One repetition: fresh synthetic pool, fresh model, evaluation on `test`.
pub fn run_once(
    cfg: &ExperimentConfig,
    n_total: usize,
    n_r: usize,
    test: &LabeledDataset,
    r: usize,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(RunResult, TrainedModel)> {
    let start = Instant::now();
    let seed = run_seed(cfg.seed, r);
    let baselines = if n_r == 0 {
        vec![surrogate(cfg, derive_seed(seed, &[2]))?]
    } else {
        training_baselines(cfg, n_r)?
    };
    let pool = build_training_pool(&baselines, &pool_config(cfg, n_total, derive_seed(seed, &[0])))?;
    let arch = cfg.architecture(pool.spectrum_len().unwrap_or(0));
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = derive_seed(seed, &[1]);
    let model = train_with_progress(&pool, &arch, &train_cfg, |rec| on_epoch(rec))?;
    let confusion = evaluate(&model, test)?;
    let result = RunResult {
        run: r + 1,
        seed,
        accuracy: accuracy_of(&confusion),
        confusion,
        epochs: model.epochs_run(),
        best_epoch: model.best_epoch,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    Ok((result, model))
}

pub fn run_experiment(cfg: &ExperimentConfig, test: &LabeledDataset) -> Result<EvalReport> {
    run_experiment_with(cfg, cfg.n_total, cfg.n_r, test, |_, _| Ok(()))
}

/// `cfg.repetitions` independent runs. `on_run` sees every finished run
/// before the next starts, so callers can persist partial results.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    n_total: usize,
    n_r: usize,
    test: &LabeledDataset,
    mut on_run: impl FnMut(&RunResult, &TrainedModel) -> Result<()>,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let mut report = EvalReport::default();
    for r in 0..cfg.repetitions {
        let (result, model) = run_once(cfg, n_total, n_r, test, r, &mut |_| {})?;
        on_run(&result, &model)?;
        report.runs.push(result);
    }
    Ok(report)
}

pub fn sweep_total_size(cfg: &ExperimentConfig, sizes: &[usize], test: &LabeledDataset) -> Result<Vec<SweepRow>> {
    if sizes.is_empty() {
        return Err(Error::invalid("size sweep needs at least one size"));
    }
    sizes
        .iter()
        .map(|&n_total| {
            let report = run_experiment_with(cfg, n_total, cfg.n_r, test, |_, _| Ok(()))?;
            Ok(SweepRow {
                value: n_total,
                mean_accuracy: report.mean_accuracy(),
                std_accuracy: report.std_accuracy(),
            })
        })
        .collect()
}

pub fn sweep_real_count(cfg: &ExperimentConfig, counts: &[usize], test: &LabeledDataset) -> Result<Vec<SweepRow>> {
    if counts.is_empty() {
        return Err(Error::invalid("real-count sweep needs at least one count"));
    }
    if let Some(dir) = &cfg.baselines_dir {
        let available = signal_files(dir)?.len();
        let needed = counts.iter().copied().max().unwrap_or(0);
        if available < needed {
            return Err(Error::invalid(format!(
                "{} holds {available} baseline signals, the sweep needs {needed}",
                dir.display()
            )));
        }
    }
    counts
        .iter()
        .map(|&n_r| {
            let report = run_experiment_with(cfg, cfg.n_total, n_r, test, |_, _| Ok(()))?;
            Ok(SweepRow {
                value: n_r,
                mean_accuracy: report.mean_accuracy(),
                std_accuracy: report.std_accuracy(),
            })
        })
        .collect()
}
