//! Acceptance checks. Each test prints one `PASS`/`FAIL` line for its
//! criterion before asserting, so `cargo test --test acceptance -- --nocapture`
//! gives a readable scoreboard.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use faultdx::augment::{
    amplitude_shift, compute_q_aug, gaussian_noise, masking_noise, signal_translation, time_stretch,
};
use faultdx::explain::gradcam;
use faultdx::harness::{run_experiment_with, surrogate_test_set, EvalReport, ExperimentConfig};
use faultdx::net1d::{
    cross_entropy, model_to_bytes, train, Architecture, EarlyStopping, Network, TrainConfig, TrainedModel,
};
use faultdx::spectral::fft_magnitude;
use faultdx::synthgen::{
    fault_frequencies, gen_baseline_surrogate, gen_bearing_fault, gen_gear_fault, gen_looseness, gen_misalignment,
    gen_unbalance, AmplitudeRule, SurrogateConfig,
};
use faultdx::{
    label_to_onehot, FaultLabel, LabeledDataset, LabeledSample, MachineSpec, Provenance, Spectrum, Split,
    TimeSeries,
};
use faultdx::types::AugmentationOp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {id} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

// ---------------------------------------------------------------------------
// 1, 3, 8: end-to-end synthetic transfer experiment

const TRANSFER_SEED: u64 = 2024;
const RUNTIME_LIMIT: Duration = Duration::from_secs(15 * 60);

fn transfer_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.fs = 25_000.0;
    cfg.n = 25_000;
    cfg.machine = MachineSpec {
        rotation_hz: 20.6,
        gmf_hz: Some(711.0),
        bpfo_hz: Some(107.09),
        bpfi_hz: Some(155.7),
        impact_resonance_hz: Some(1500.0),
        looseness_harmonics: 4,
    };
    cfg.spectral.f_max_hz = 2200.0;
    cfg.n_total = 5250;
    cfg.n_r = 30;
    cfg.repetitions = 3;
    cfg.test_baselines = 50;
    cfg.seed = TRANSFER_SEED;
    cfg
}

struct Transfer {
    cfg: ExperimentConfig,
    report: EvalReport,
    models: Vec<TrainedModel>,
    test: LabeledDataset,
    elapsed: Duration,
    report_bytes: Vec<u8>,
    model_bytes: Vec<Vec<u8>>,
}

fn run_transfer() -> Transfer {
    let start = Instant::now();
    let cfg = transfer_config();
    let test = surrogate_test_set(&cfg).expect("test set");
    let mut models = Vec::new();
    let report = run_experiment_with(&cfg, cfg.n_total, cfg.n_r, &test, |r, m| {
        println!("  transfer run {}: accuracy {:.4}, {} epochs, {:.0} s", r.run, r.accuracy, r.epochs, r.wall_clock_s);
        models.push(m.clone());
        Ok(())
    })
    .expect("experiment");
    let elapsed = start.elapsed();
    let report_bytes = [report.to_text(), report.to_csv()].concat().into_bytes();
    let model_bytes = models.iter().map(model_to_bytes).collect();
    Transfer {
        cfg,
        report,
        models,
        test,
        elapsed,
        report_bytes,
        model_bytes,
    }
}

fn transfer() -> &'static Transfer {
    static CELL: OnceLock<Transfer> = OnceLock::new();
    CELL.get_or_init(run_transfer)
}

#[test]
fn criterion_1_synthetic_transfer() {
    let t = transfer();
    let mean = t.report.mean_accuracy();
    let pass_acc = mean >= 0.90;
    let pass_time = t.elapsed <= RUNTIME_LIMIT;
    println!("{}", t.report.to_text());
    verdict(
        1,
        "synthetic-to-synthetic transfer",
        pass_acc && pass_time,
        &format!(
            "mean accuracy {:.2}% (std {:.2}%, need >= 90%), runtime {:.1} min on {} thread(s) (limit 15 min)",
            100.0 * mean,
            100.0 * t.report.std_accuracy(),
            t.elapsed.as_secs_f64() / 60.0,
            rayon::current_num_threads()
        ),
    );
    assert!(pass_acc, "mean accuracy {mean}");
    assert!(pass_time, "runtime {:?}", t.elapsed);
}

#[test]
fn criterion_3_gradcam_localization() {
    let t = transfer();
    let fr = t.cfg.machine.rotation_hz;
    let mut stats = [(0usize, 0usize); 2];
    for model in &t.models {
        for s in t.test.samples() {
            let which = match s.label {
                FaultLabel::Unbalance => 0,
                FaultLabel::Misalignment => 1,
                _ => continue,
            };
            let (pred, _) = faultdx::net1d::predict(model, &s.spectrum).unwrap();
            if pred != s.label {
                continue;
            }
            let h = gradcam(model, &s.spectrum, s.label).unwrap();
            let peak = h.argmax() as i64;
            let targets: &[f64] = if which == 0 { &[1.0] } else { &[1.0, 2.0, 3.0] };
            let hit = targets
                .iter()
                .any(|m| (peak - s.spectrum.nearest_bin(m * fr) as i64).abs() <= 2);
            stats[which].0 += 1;
            stats[which].1 += hit as usize;
        }
    }
    let frac = |(n, k): (usize, usize)| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let (u, m) = (frac(stats[0]), frac(stats[1]));
    let pass = u >= 0.8 && m >= 0.8;
    verdict(
        3,
        "Grad-CAM localization",
        pass,
        &format!(
            "unbalance {}/{} = {:.1}%, misalignment {}/{} = {:.1}% (need >= 80% each)",
            stats[0].1,
            stats[0].0,
            100.0 * u,
            stats[1].1,
            stats[1].0,
            100.0 * m
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_determinism() {
    let first = transfer();
    let second = run_transfer();
    let dir = tempfile::tempdir().unwrap();
    // also exercise the on-disk artifacts
    let write = |tag: &str, t: &Transfer| -> Vec<Vec<u8>> {
        let base = dir.path().join(tag);
        std::fs::create_dir_all(&base).unwrap();
        let mut files = vec![(base.join("report.txt"), t.report.to_text().into_bytes())];
        files.push((base.join("report.csv"), t.report.to_csv().into_bytes()));
        for (i, m) in t.models.iter().enumerate() {
            let p = base.join(format!("run_{i}.fdx"));
            faultdx::net1d::save_model(m, &p).unwrap();
            files.push((p, Vec::new()));
        }
        files
            .into_iter()
            .map(|(p, b)| {
                if !b.is_empty() {
                    std::fs::write(&p, &b).unwrap();
                }
                std::fs::read(Path::new(&p)).unwrap()
            })
            .collect()
    };
    let a = write("a", first);
    let b = write("b", &second);
    let same_report = first.report_bytes == second.report_bytes;
    let same_models = first.model_bytes == second.model_bytes;
    let same_files = a == b;
    let pass = same_report && same_models && same_files;
    verdict(
        8,
        "determinism",
        pass,
        &format!(
            "report identical: {same_report}, {} model files identical: {same_models}, files on disk identical: {same_files}",
            first.models.len()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 2: gradients against central finite differences

/// Activation pattern of a forward pass: ReLU signs, pooling winners,
/// hidden ReLU signs. Finite differences are only meaningful when the
/// pattern is the same on both sides of the perturbation.
fn pattern(net: &Network, x: &[f64], mask: &Option<Vec<f64>>) -> (Vec<bool>, Vec<usize>, Vec<bool>) {
    let c = net.forward_with_mask(x, mask.clone());
    (
        c.conv.pre.iter().map(|v| *v > 0.0).collect(),
        c.conv.argmax.clone(),
        c.hidden_pre.iter().map(|v| *v > 0.0).collect(),
    )
}

#[test]
fn criterion_2_gradient_check() {
    let h = 1e-5;
    let tol = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut passed = 0;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let arch = Architecture {
            input_len: rng.random_range(32..=128),
            conv_filters: rng.random_range(2..=8),
            kernel_size: 5,
            pool_size: rng.random_range(1..=4),
            dropout_rate: if rng.random_bool(0.5) { 0.0 } else { 0.3 },
            dense_units: rng.random_range(3..=12),
            n_classes: 7,
        };
        let net = Network::init(arch.clone(), &mut rng).unwrap();
        let x: Vec<f64> = (0..arch.input_len).map(|_| rng.random_range(-2.0..2.0)).collect();
        let target = label_to_onehot(FaultLabel::from_index(rng.random_range(0..7)).unwrap());
        // one dropout mask, held fixed for the analytic and numeric passes
        let mask = net.forward_train(&x, &mut rng).unwrap().conv.mask;
        let cache = net.forward_with_mask(&x, mask.clone());
        let grads = net.backward(&cache, &target);
        let base_pattern = pattern(&net, &x, &mask);

        let mut ok = true;
        let n_tensors = grads.tensors().len();
        for t in 0..n_tensors {
            for i in 0..grads.tensors()[t].len() {
                let mut plus = net.clone();
                plus.weights.tensors_mut()[t][i] += h;
                let mut minus = net.clone();
                minus.weights.tensors_mut()[t][i] -= h;
                if pattern(&plus, &x, &mask) != base_pattern || pattern(&minus, &x, &mask) != base_pattern {
                    skipped += 1;
                    continue;
                }
                let lp = cross_entropy(&plus.forward_with_mask(&x, mask.clone()).probs, &target);
                let lm = cross_entropy(&minus.forward_with_mask(&x, mask.clone()).probs, &target);
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = grads.tensors()[t][i];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
                if rel > tol {
                    ok = false;
                }
            }
        }
        passed += ok as usize;
    }
    let pass = passed == 100;
    verdict(
        2,
        "gradient check",
        pass,
        &format!(
            "{passed}/100 trials, {checked} parameters compared, worst relative error {worst:.2e}, {skipped} skipped at ReLU/pooling kinks"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 4: pool-size arithmetic

#[test]
fn criterion_4_q_aug() {
    let exact = compute_q_aug(5250, 30).unwrap() == 5;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..1000 {
        let n_total = rng.random_range(1..=200_000usize);
        let n_r = rng.random_range(1..=500usize);
        let q = compute_q_aug(n_total, n_r).unwrap();
        // enough samples, and the smallest count that is enough
        if 35 * n_r * q < n_total || (q > 1 && 35 * n_r * (q - 1) >= n_total) {
            violations += 1;
        }
    }
    let pass = exact && violations == 0;
    verdict(
        4,
        "q_aug arithmetic",
        pass,
        &format!("q_aug(5250, 30) = 5: {exact}; coverage violations in 1000 pairs: {violations}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 5: FFT against a naive DFT

fn naive_amplitude_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for (i, v) in x.iter().enumerate() {
                let ang = -2.0 * PI * ((i * k) % n) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            let scale = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
            scale * re.hypot(im) / n as f64
        })
        .collect()
}

#[test]
fn criterion_5_fft_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=2048);
        let fs = rng.random_range(100.0..50_000.0);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = fft_magnitude(&TimeSeries::new(x.clone(), fs).unwrap()).unwrap();
        let slow = naive_amplitude_spectrum(&x);
        assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.magnitudes().iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    let pass = worst <= 1e-9;
    verdict(5, "FFT vs naive DFT", pass, &format!("50 signals, max abs difference {worst:.2e} (limit 1e-9)"));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 6: augmentation invariants

#[test]
fn criterion_6_augmentation_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let n = rng.random_range(2..=3000);
        let fs = rng.random_range(10.0..30_000.0);
        // strictly nonzero samples so zeros in the output come from masking
        let x: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = rng.random_range(0.01..3.0);
                if rng.random_bool(0.5) { v } else { -v }
            })
            .collect();
        let ts = TimeSeries::new(x.clone(), fs).unwrap();
        let same_shape = |y: &TimeSeries| y.len() == n && y.sample_rate_hz() == fs;

        let alpha = rng.random_range(0.0..0.5);
        let g = gaussian_noise(&ts, alpha, &mut rng).unwrap();
        let frac = rng.random_range(0.0..=1.0);
        let m = masking_noise(&ts, frac, &mut rng).unwrap();
        let shift = rng.random_range(-(n as i64 - 1)..=(n as i64 - 1));
        let t = signal_translation(&ts, shift).unwrap();
        let a = amplitude_shift(&ts, rng.random_range(0.1..3.0)).unwrap();
        let s = time_stretch(&ts, rng.random_range(0.5..2.0)).unwrap();
        if ![&g, &m, &t, &a, &s].iter().all(|y| same_shape(y)) {
            failures.push(format!("case {case}: shape changed"));
        }
        let zeros = m.samples().iter().filter(|v| **v == 0.0).count();
        let expected = (frac * n as f64).round() as usize;
        if zeros != expected {
            failures.push(format!("case {case}: {zeros} zeros, expected {expected}"));
        }

        let ident = [
            gaussian_noise(&ts, 0.0, &mut rng).unwrap(),
            masking_noise(&ts, 0.0, &mut rng).unwrap(),
            signal_translation(&ts, 0).unwrap(),
            amplitude_shift(&ts, 1.0).unwrap(),
        ];
        if ident.iter().any(|y| y.samples() != x.as_slice()) {
            failures.push(format!("case {case}: identity parameters changed the signal"));
        }
        let stretched = time_stretch(&ts, 1.0).unwrap();
        if stretched.samples().iter().zip(&x).any(|(a, b)| (a - b).abs() > 1e-12) {
            failures.push(format!("case {case}: unit stretch drifted"));
        }
    }
    let pass = failures.is_empty();
    verdict(
        6,
        "augmentation invariants",
        pass,
        &format!("1000 random inputs, {} violations {:?}", failures.len(), failures.iter().take(3).collect::<Vec<_>>()),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 7: every injected line gains at least 3 dB

#[test]
fn criterion_7_three_db_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rule = AmplitudeRule::default();
    let mut lines = 0;
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for _ in 0..200 {
        // df = 1 Hz and line spacing of at least 5 bins keeps every line resolved
        let fs = 4096.0;
        let n = 4096;
        let fr = rng.random_range(10.0..30.0);
        let teeth = rng.random_range(5..=20u32);
        let spec = MachineSpec {
            rotation_hz: fr,
            gmf_hz: Some(teeth as f64 * fr),
            bpfo_hz: Some(rng.random_range(40.0..120.0)),
            bpfi_hz: Some(rng.random_range(120.0..250.0)),
            impact_resonance_hz: Some(rng.random_range(300.0..1500.0)),
            looseness_harmonics: rng.random_range(1..=6),
        };
        let sc = SurrogateConfig {
            tone_amplitude: rng.random_range(0.1..2.0),
            noise_std: rng.random_range(0.0..1.0),
            random_tones: rng.random_range(0..20),
            ..Default::default()
        };
        let base = gen_baseline_surrogate(&spec, fs, n, &sc, &mut rng).unwrap();
        let label = FaultLabel::from_index(rng.random_range(1..7)).unwrap();
        let seed: u64 = rng.random();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let out = match label {
            FaultLabel::Unbalance => gen_unbalance(&base, &spec, &rule, &mut r),
            FaultLabel::Misalignment => gen_misalignment(&base, &spec, &rule, &mut r),
            FaultLabel::Looseness => gen_looseness(&base, &spec, &rule, &mut r),
            FaultLabel::GearFault => gen_gear_fault(&base, &spec, &rule, &mut r),
            FaultLabel::Bpfo => gen_bearing_fault(&base, &spec, spec.bpfo_hz, &rule, &mut r),
            FaultLabel::Bpfi => gen_bearing_fault(&base, &spec, spec.bpfi_hz, &rule, &mut r),
            FaultLabel::Normal => unreachable!(),
        }
        .unwrap();
        let before = fft_magnitude(&base).unwrap();
        let after = fft_magnitude(&out).unwrap();
        let bins: Vec<usize> = match label {
            FaultLabel::Bpfo | FaultLabel::Bpfi => {
                // the strongest line of the injected comb
                let diff: Vec<f64> = out.samples().iter().zip(base.samples()).map(|(a, b)| a - b).collect();
                let d = fft_magnitude(&TimeSeries::new(diff, fs).unwrap()).unwrap();
                vec![d.magnitudes()[1..].iter().enumerate().fold((0, 0.0), |b, (k, v)| if *v > b.1 { (k + 1, *v) } else { b }).0]
            }
            _ => fault_frequencies(label, &spec).iter().map(|f| before.nearest_bin(*f)).collect(),
        };
        for k in bins {
            let gain = 20.0 * (after.magnitudes()[k] / before.magnitudes()[k]).log10();
            lines += 1;
            worst = worst.min(gain);
            if gain < 3.0 - 1e-9 {
                failures += 1;
            }
        }
    }
    let pass = failures == 0;
    verdict(
        7,
        "3 dB floor",
        pass,
        &format!("200 triples, {lines} injected lines, {failures} below 3 dB, smallest gain {worst:.6} dB"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 9: early stopping

/// The stopping rule, written out independently: an epoch improves when its
/// validation accuracy beats the best so far by more than `min_delta`; stop
/// after `patience` epochs in a row without improvement.
fn simulate_stop(val: &[f64], patience: usize, min_delta: f64) -> Option<(usize, usize)> {
    let mut best = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since = 0;
    for (i, &v) in val.iter().enumerate() {
        if best_epoch == 0 || v > best + min_delta {
            best = v;
            best_epoch = i + 1;
            since = 0;
        } else {
            since += 1;
            if since == patience {
                return Some((i + 1, best_epoch));
            }
        }
    }
    None
}

fn toy_dataset(seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = LabeledDataset::new();
    for i in 0..12 {
        for label in FaultLabel::ALL {
            let mut m: Vec<f64> = (0..48).map(|_| rng.random_range(-0.3..0.3)).collect();
            m[3 + 6 * label.index()] += 1.0;
            ds.push(
                LabeledSample {
                    spectrum: Spectrum::new(m, 1.0, 0.0, true).unwrap(),
                    label,
                    provenance: Provenance {
                        origin_signal_id: i,
                        repetition: 0,
                        augmentation_op: AugmentationOp::None,
                        rng_seed: seed,
                    },
                },
                if i < 3 { Split::Validation } else { Split::Train },
            );
        }
    }
    ds
}

#[test]
fn criterion_9_early_stopping() {
    let (patience, min_delta) = (8, 0.001);
    let mut notes = Vec::new();
    let mut ok = true;

    // k = 3 real improvements, then gains below min_delta
    let trace = [0.50, 0.60, 0.70, 0.7005, 0.701, 0.699, 0.70, 0.7009, 0.7, 0.7, 0.7, 0.8];
    let mut es = EarlyStopping::new(patience, min_delta);
    let stop = trace.iter().enumerate().find(|(i, v)| es.observe(i + 1, **v).1).map(|(i, _)| i + 1);
    ok &= stop == Some(3 + patience) && es.best_epoch() == 3;
    ok &= simulate_stop(&trace, patience, min_delta) == Some((11, 3));
    notes.push(format!("constructed trace stops at {stop:?} (expected {})", 3 + patience));

    // frozen weights: validation accuracy never moves, k = 1
    let ds = toy_dataset(9);
    let arch = Architecture {
        input_len: 48,
        conv_filters: 4,
        kernel_size: 5,
        pool_size: 2,
        dropout_rate: 0.5,
        dense_units: 8,
        n_classes: 7,
    };
    let frozen = TrainConfig { learning_rate: 0.0, seed: 1, ..Default::default() };
    let m = train(&ds, &arch, &frozen).unwrap();
    ok &= m.epochs_run() == 1 + patience && m.best_epoch == 1;
    notes.push(format!("lr = 0 ran {} epochs (expected {})", m.epochs_run(), 1 + patience));

    // real training, checked against the hand simulation of its own trace
    for seed in 0..3 {
        let cfg = TrainConfig { learning_rate: 0.01, max_epochs: 300, seed, ..Default::default() };
        let m = train(&ds, &arch, &cfg).unwrap();
        let val: Vec<f64> = m.history.iter().map(|r| r.val_accuracy).collect();
        let expected = simulate_stop(&val, patience, min_delta);
        let matches = expected == Some((m.epochs_run(), m.best_epoch));
        ok &= matches;
        notes.push(format!(
            "seed {seed}: stopped after {} epochs, best {}, simulation {:?}",
            m.epochs_run(),
            m.best_epoch,
            expected
        ));
    }
    verdict(9, "early stopping", ok, &notes.join("; "));
    assert!(ok);
}
