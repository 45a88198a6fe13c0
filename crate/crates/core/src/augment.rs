//! Augmentation operators and training-pool assembly.

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{self, SpectralConfig};
use crate::synthgen::{self, draw_uniform, AmplitudeRule};
use crate::types::{
    derive_seed, AugmentationOp, FaultLabel, LabeledDataset, LabeledSample, MachineSpec,
    Provenance, Split, TimeSeries,
};

/// Synthetic conditions times augmentation operators per baseline and pass.
pub const SAMPLES_PER_BASELINE: usize = FaultLabel::COUNT * 5;

/// Parameter ranges the five operators draw from, uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentParams {
    /// Noise coefficient as a multiple of the signal's standard deviation.
    pub alpha_gauss: (f64, f64),
    pub alpha_mask: (f64, f64),
    /// Signed shift in samples; `None` means +-5% of the signal length.
    pub shift: Option<(i64, i64)>,
    pub alpha_scal: (f64, f64),
    pub alpha_stre: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            alpha_gauss: (0.01, 0.1),
            alpha_mask: (0.01, 0.1),
            shift: None,
            alpha_scal: (0.8, 1.2),
            alpha_stre: (0.95, 1.05),
            seed: 0,
        }
    }
}

impl AugmentParams {
    /// Ranges under which every operator returns its input.
    pub fn identity() -> Self {
        Self {
            alpha_gauss: (0.0, 0.0),
            alpha_mask: (0.0, 0.0),
            shift: Some((0, 0)),
            alpha_scal: (1.0, 1.0),
            alpha_stre: (1.0, 1.0),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |name: &str, (lo, hi): (f64, f64)| {
            if lo.is_finite() && hi.is_finite() && lo <= hi {
                Ok(())
            } else {
                Err(Error::invalid(format!("augment.{name}: need min <= max, got [{lo}, {hi}]")))
            }
        };
        ordered("alpha_gauss", self.alpha_gauss)?;
        ordered("alpha_mask", self.alpha_mask)?;
        ordered("alpha_scal", self.alpha_scal)?;
        ordered("alpha_stre", self.alpha_stre)?;
        if self.alpha_gauss.0 < 0.0 {
            return Err(Error::invalid("augment.alpha_gauss must be non-negative"));
        }
        if self.alpha_mask.0 < 0.0 || self.alpha_mask.1 > 1.0 {
            return Err(Error::invalid("augment.alpha_mask must lie in [0, 1]"));
        }
        if self.alpha_scal.0 <= 0.0 {
            return Err(Error::invalid("augment.alpha_scal must be positive"));
        }
        if self.alpha_stre.0 <= 0.0 {
            return Err(Error::invalid("augment.alpha_stre must be positive"));
        }
        if let Some((lo, hi)) = self.shift {
            if lo > hi {
                return Err(Error::invalid("augment.shift: need min <= max"));
            }
        }
        Ok(())
    }

    fn shift_range(&self, len: usize) -> (i64, i64) {
        self.shift.unwrap_or_else(|| {
            let s = (0.05 * len as f64).floor() as i64;
            (-s, s)
        })
    }
}

/// `x + alpha * G`, `G ~ N(0, 1)` per sample.
pub fn gaussian_noise<R: Rng + ?Sized>(x: &TimeSeries, alpha: f64, rng: &mut R) -> Result<TimeSeries> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("gaussian noise coefficient must be >= 0, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(x.clone());
    }
    let out = x
        .samples()
        .iter()
        .map(|v| {
            let g: f64 = StandardNormal.sample(rng);
            v + alpha * g
        })
        .collect();
    x.with_samples(out)
}

/// Zeroes exactly `round(alpha_mask * len)` distinct samples.
pub fn masking_noise<R: Rng + ?Sized>(x: &TimeSeries, alpha_mask: f64, rng: &mut R) -> Result<TimeSeries> {
    if !(0.0..=1.0).contains(&alpha_mask) {
        return Err(Error::invalid(format!("mask fraction must lie in [0, 1], got {alpha_mask}")));
    }
    let n = x.len();
    let count = ((alpha_mask * n as f64).round() as usize).min(n);
    let mut out = x.samples().to_vec();
    for i in index::sample(rng, n, count) {
        out[i] = 0.0;
    }
    x.with_samples(out)
}

/// Moves samples by `shift` positions (positive = later), zero-filling the gap.
pub fn signal_translation(x: &TimeSeries, shift: i64) -> Result<TimeSeries> {
    let n = x.len();
    if shift.unsigned_abs() as usize >= n {
        return Err(Error::invalid(format!("shift {shift} must be smaller than signal length {n}")));
    }
    let s = x.samples();
    let mut out = vec![0.0; n];
    if shift >= 0 {
        let k = shift as usize;
        out[k..].copy_from_slice(&s[..n - k]);
    } else {
        let k = (-shift) as usize;
        out[..n - k].copy_from_slice(&s[k..]);
    }
    x.with_samples(out)
}

pub fn amplitude_shift(x: &TimeSeries, alpha_scal: f64) -> Result<TimeSeries> {
    if !(alpha_scal > 0.0 && alpha_scal.is_finite()) {
        return Err(Error::invalid(format!("scale factor must be positive, got {alpha_scal}")));
    }
    x.with_samples(x.samples().iter().map(|v| v * alpha_scal).collect())
}

/// Stretches the signal about its centre by `alpha_stre` with linear
/// interpolation. Length is preserved; points falling outside are dropped and
/// uncovered positions are zero.
pub fn time_stretch(x: &TimeSeries, alpha_stre: f64) -> Result<TimeSeries> {
    if !(alpha_stre > 0.0 && alpha_stre.is_finite()) {
        return Err(Error::invalid(format!("stretch factor must be positive, got {alpha_stre}")));
    }
    let s = x.samples();
    let n = s.len();
    let last = (n - 1) as f64;
    let centre = last / 2.0;
    let out = (0..n)
        .map(|i| {
            let src = centre + (i as f64 - centre) / alpha_stre;
            if !(0.0..=last).contains(&src) {
                return 0.0;
            }
            let lo = src.floor() as usize;
            let frac = src - lo as f64;
            if frac == 0.0 || lo + 1 >= n {
                s[lo]
            } else {
                s[lo] * (1.0 - frac) + s[lo + 1] * frac
            }
        })
        .collect();
    x.with_samples(out)
}

fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// One variant per operator: gaussian, masking, translation, amplitude, stretch.
pub fn augment_five<R: Rng + ?Sized>(
    x: &TimeSeries,
    params: &AugmentParams,
    rng: &mut R,
) -> Result<Vec<(TimeSeries, AugmentationOp)>> {
    params.validate()?;
    let alpha = draw_uniform(rng, params.alpha_gauss.0, params.alpha_gauss.1) * std_dev(x.samples());
    let fraction = draw_uniform(rng, params.alpha_mask.0, params.alpha_mask.1);
    let (lo, hi) = params.shift_range(x.len());
    let max_shift = x.len() as i64 - 1;
    let shift = if hi > lo { rng.random_range(lo..=hi) } else { lo }.clamp(-max_shift, max_shift);
    let scale = draw_uniform(rng, params.alpha_scal.0, params.alpha_scal.1);
    let factor = draw_uniform(rng, params.alpha_stre.0, params.alpha_stre.1);

    Ok(vec![
        (gaussian_noise(x, alpha, rng)?, AugmentationOp::GaussianNoise { alpha }),
        (masking_noise(x, fraction, rng)?, AugmentationOp::Masking { fraction }),
        (signal_translation(x, shift)?, AugmentationOp::Translation { shift }),
        (amplitude_shift(x, scale)?, AugmentationOp::AmplitudeShift { scale }),
        (time_stretch(x, factor)?, AugmentationOp::TimeStretch { factor }),
    ])
}

/// Passes needed so that `35 * n_r * q_aug >= n_total`.
pub fn compute_q_aug(n_total: usize, n_r: usize) -> Result<usize> {
    if n_total == 0 || n_r == 0 {
        return Err(Error::invalid("n_total and n_r must be at least 1"));
    }
    Ok(n_total.div_ceil(SAMPLES_PER_BASELINE * n_r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildPlan {
    pub n_total: usize,
    pub n_r: usize,
    pub q_aug: usize,
}

impl BuildPlan {
    pub fn new(n_total: usize, n_r: usize) -> Result<Self> {
        Ok(Self {
            n_total,
            n_r,
            q_aug: compute_q_aug(n_total, n_r)?,
        })
    }

    pub fn generated(&self) -> usize {
        SAMPLES_PER_BASELINE * self.n_r * self.q_aug
    }

    pub fn excess(&self) -> usize {
        self.generated() - self.n_total
    }
}

/// Everything the pool builder needs besides the baselines.
#[derive(Debug, Clone)]
pub struct PoolConfig {
    pub spec: MachineSpec,
    pub rule: AmplitudeRule,
    pub augment: AugmentParams,
    pub spectral: SpectralConfig,
    pub n_total: usize,
    /// Fraction held out for validation.
    pub validation_fraction: f64,
}

/// Synthesizes, augments and transforms `q_aug` passes over every baseline,
/// trims the excess evenly across classes and splits train/validation.
///
/// Each (pass, baseline) task runs on its own RNG stream derived from
/// `augment.seed`, so the result does not depend on scheduling.
pub fn build_training_pool(baselines: &[TimeSeries], cfg: &PoolConfig) -> Result<LabeledDataset> {
    if baselines.is_empty() {
        return Err(Error::invalid("training pool needs at least one baseline signal"));
    }
    if cfg.n_total < SAMPLES_PER_BASELINE {
        return Err(Error::invalid(format!(
            "n_total must be at least {SAMPLES_PER_BASELINE}, got {}",
            cfg.n_total
        )));
    }
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::invalid("validation fraction must lie in [0, 1)"));
    }
    cfg.augment.validate()?;
    let plan = BuildPlan::new(cfg.n_total, baselines.len())?;
    let seed = cfg.augment.seed;

    let tasks: Vec<(usize, usize)> = (0..plan.q_aug)
        .flat_map(|rep| (0..baselines.len()).map(move |b| (rep, b)))
        .collect();
    let chunks: Vec<Vec<LabeledSample>> = tasks
        .par_iter()
        .map(|&(rep, b)| {
            let task_seed = derive_seed(seed, &[rep as u64, b as u64]);
            synthesize_task(&baselines[b], b, rep, task_seed, cfg)
        })
        .collect::<Result<_>>()?;

    let mut by_class: Vec<Vec<LabeledSample>> = vec![Vec::new(); FaultLabel::COUNT];
    for s in chunks.into_iter().flatten() {
        by_class[s.label.index()].push(s);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[u64::MAX]));
    // spread the discard as evenly as the count allows, random within a class
    let mut drop = vec![plan.excess() / FaultLabel::COUNT; FaultLabel::COUNT];
    let mut order: Vec<usize> = (0..FaultLabel::COUNT).collect();
    order.shuffle(&mut rng);
    for &c in order.iter().take(plan.excess() % FaultLabel::COUNT) {
        drop[c] += 1;
    }
    let mut kept = Vec::with_capacity(cfg.n_total);
    for (class, samples) in by_class.into_iter().enumerate() {
        let n = samples.len();
        let mut discard = vec![false; n];
        for i in index::sample(&mut rng, n, drop[class].min(n)) {
            discard[i] = true;
        }
        kept.extend(samples.into_iter().zip(discard).filter(|(_, d)| !d).map(|(s, _)| s));
    }

    let mut idx: Vec<usize> = (0..kept.len()).collect();
    idx.shuffle(&mut rng);
    let n_val = (cfg.validation_fraction * kept.len() as f64).round() as usize;
    let mut split = vec![Split::Train; kept.len()];
    for &i in &idx[..n_val] {
        split[i] = Split::Validation;
    }
    let mut ds = LabeledDataset::new();
    for (s, sp) in kept.into_iter().zip(split) {
        ds.push(s, sp);
    }
    Ok(ds)
}

fn synthesize_task(
    baseline: &TimeSeries,
    baseline_id: usize,
    repetition: usize,
    task_seed: u64,
    cfg: &PoolConfig,
) -> Result<Vec<LabeledSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
    let conditions = synthgen::gen_all_conditions(baseline, &cfg.spec, &cfg.rule, &mut rng)?;
    let mut out = Vec::with_capacity(SAMPLES_PER_BASELINE);
    for (signal, label) in conditions {
        for (aug, op) in augment_five(&signal, &cfg.augment, &mut rng)? {
            out.push(LabeledSample {
                spectrum: spectral::preprocess(&aug, &cfg.spectral)?,
                label,
                provenance: Provenance {
                    origin_signal_id: baseline_id,
                    repetition,
                    augmentation_op: op,
                    rng_seed: task_seed,
                },
            });
        }
    }
    Ok(out)
}
