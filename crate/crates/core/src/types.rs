//! Value types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Uniformly sampled real-valued vibration signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::invalid("time series must contain at least one sample"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// Builds a series of `n` zeros.
    pub fn zeros(n: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(vec![0.0; n], sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz / 2.0
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Same sample rate, new samples. Used by operators that preserve the rate.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.sample_rate_hz)
    }
}

/// Single-sided magnitude spectrum. Bin `k` sits at `f_start_hz + k * df_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    magnitudes: Vec<f64>,
    df_hz: f64,
    f_start_hz: f64,
    normalized: bool,
}

impl Spectrum {
    pub fn new(magnitudes: Vec<f64>, df_hz: f64, f_start_hz: f64, normalized: bool) -> Result<Self> {
        if !(df_hz.is_finite() && df_hz > 0.0) {
            return Err(Error::invalid(format!("bin width must be positive, got {df_hz}")));
        }
        if !(f_start_hz.is_finite() && f_start_hz >= 0.0) {
            return Err(Error::invalid(format!(
                "start frequency must be non-negative, got {f_start_hz}"
            )));
        }
        if magnitudes.is_empty() {
            return Err(Error::invalid("spectrum must contain at least one bin"));
        }
        if let Some(i) = magnitudes.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite magnitude at bin {i}")));
        }
        Ok(Self {
            magnitudes,
            df_hz,
            f_start_hz,
            normalized,
        })
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn df_hz(&self) -> f64 {
        self.df_hz
    }

    pub fn f_start_hz(&self) -> f64 {
        self.f_start_hz
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    pub fn frequency_of(&self, bin: usize) -> f64 {
        self.f_start_hz + bin as f64 * self.df_hz
    }

    /// Bin closest to `f_hz`, clamped to the spectrum range.
    pub fn nearest_bin(&self, f_hz: f64) -> usize {
        let k = ((f_hz - self.f_start_hz) / self.df_hz).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.magnitudes.len() - 1)
        }
    }

    pub fn max_frequency_hz(&self) -> f64 {
        self.frequency_of(self.magnitudes.len() - 1)
    }

    /// Index of the largest magnitude, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.magnitudes)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// The seven machine conditions, in their fixed encoding order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaultLabel {
    Normal,
    Bpfo,
    Bpfi,
    Unbalance,
    Misalignment,
    Looseness,
    GearFault,
}

impl FaultLabel {
    pub const COUNT: usize = 7;

    pub const ALL: [FaultLabel; 7] = [
        FaultLabel::Normal,
        FaultLabel::Bpfo,
        FaultLabel::Bpfi,
        FaultLabel::Unbalance,
        FaultLabel::Misalignment,
        FaultLabel::Looseness,
        FaultLabel::GearFault,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultLabel::Normal => "normal",
            FaultLabel::Bpfo => "bpfo",
            FaultLabel::Bpfi => "bpfi",
            FaultLabel::Unbalance => "unbalance",
            FaultLabel::Misalignment => "misalignment",
            FaultLabel::Looseness => "looseness",
            FaultLabel::GearFault => "gear_fault",
        }
    }
}

impl fmt::Display for FaultLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaultLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == key || (key == "gearfault" && *l == FaultLabel::GearFault))
            .ok_or_else(|| Error::invalid(format!("unknown fault label '{s}'")))
    }
}

pub fn label_to_onehot(label: FaultLabel) -> [f64; FaultLabel::COUNT] {
    let mut v = [0.0; FaultLabel::COUNT];
    v[label.index()] = 1.0;
    v
}

/// Characteristic frequencies of the monitored machine.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineSpec {
    pub rotation_hz: f64,
    pub gmf_hz: Option<f64>,
    pub bpfo_hz: Option<f64>,
    pub bpfi_hz: Option<f64>,
    /// Carrier of the bearing impact bursts. `None` means `fs / 8`.
    pub impact_resonance_hz: Option<f64>,
    /// Highest rotation harmonic `N` used by the looseness signature.
    pub looseness_harmonics: u32,
}

impl MachineSpec {
    pub fn new(rotation_hz: f64) -> Self {
        Self {
            rotation_hz,
            gmf_hz: None,
            bpfo_hz: None,
            bpfi_hz: None,
            impact_resonance_hz: None,
            looseness_harmonics: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("rotation_hz", self.rotation_hz)?;
        for (name, v) in [
            ("gmf_hz", self.gmf_hz),
            ("bpfo_hz", self.bpfo_hz),
            ("bpfi_hz", self.bpfi_hz),
            ("impact_resonance_hz", self.impact_resonance_hz),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        if self.looseness_harmonics == 0 {
            return Err(Error::invalid("looseness harmonic count must be at least 1"));
        }
        Ok(())
    }

    pub fn impact_resonance_for(&self, sample_rate_hz: f64) -> f64 {
        self.impact_resonance_hz.unwrap_or(sample_rate_hz / 8.0)
    }
}

/// Which augmentation operator produced a sample, with the drawn parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentationOp {
    None,
    GaussianNoise { alpha: f64 },
    Masking { fraction: f64 },
    Translation { shift: i64 },
    AmplitudeShift { scale: f64 },
    TimeStretch { factor: f64 },
}

impl AugmentationOp {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentationOp::None => "none",
            AugmentationOp::GaussianNoise { .. } => "gaussian",
            AugmentationOp::Masking { .. } => "masking",
            AugmentationOp::Translation { .. } => "translation",
            AugmentationOp::AmplitudeShift { .. } => "amplitude",
            AugmentationOp::TimeStretch { .. } => "stretch",
        }
    }

    pub fn parameter(&self) -> f64 {
        match *self {
            AugmentationOp::None => 0.0,
            AugmentationOp::GaussianNoise { alpha } => alpha,
            AugmentationOp::Masking { fraction } => fraction,
            AugmentationOp::Translation { shift } => shift as f64,
            AugmentationOp::AmplitudeShift { scale } => scale,
            AugmentationOp::TimeStretch { factor } => factor,
        }
    }

    pub fn from_parts(name: &str, parameter: f64) -> Result<Self> {
        Ok(match name {
            "none" => AugmentationOp::None,
            "gaussian" => AugmentationOp::GaussianNoise { alpha: parameter },
            "masking" => AugmentationOp::Masking { fraction: parameter },
            "translation" => AugmentationOp::Translation {
                shift: parameter as i64,
            },
            "amplitude" => AugmentationOp::AmplitudeShift { scale: parameter },
            "stretch" => AugmentationOp::TimeStretch { factor: parameter },
            other => return Err(Error::invalid(format!("unknown augmentation op '{other}'"))),
        })
    }
}

/// Where a sample came from. Together with the run configuration this is
/// enough to regenerate it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub origin_signal_id: usize,
    pub repetition: usize,
    pub augmentation_op: AugmentationOp,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub spectrum: Spectrum,
    pub label: FaultLabel,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split '{other}'"))),
        }
    }
}

/// Labeled spectra, each tagged with the split it belongs to.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<LabeledSample>,
    splits: Vec<Split>,
}

impl LabeledDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, sample: LabeledSample, split: Split) {
        self.samples.push(sample);
        self.splits.push(split);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LabeledSample, Split)> {
        self.samples.iter().zip(self.splits.iter().copied())
    }

    pub fn split(&self, which: Split) -> impl Iterator<Item = &LabeledSample> {
        self.iter()
            .filter(move |(_, s)| *s == which)
            .map(|(sample, _)| sample)
    }

    pub fn count(&self, which: Split) -> usize {
        self.splits.iter().filter(|s| **s == which).count()
    }

    /// Per-label counts, indexed by label encoding.
    pub fn class_counts(&self) -> [usize; FaultLabel::COUNT] {
        let mut counts = [0; FaultLabel::COUNT];
        for s in &self.samples {
            counts[s.label.index()] += 1;
        }
        counts
    }

    /// Common spectrum length, or `None` when empty or ragged.
    pub fn spectrum_len(&self) -> Option<usize> {
        let n = self.samples.first()?.spectrum.len();
        self.samples
            .iter()
            .all(|s| s.spectrum.len() == n)
            .then_some(n)
    }
}

/// Mixes a master seed with a path of stream indices into an independent
/// child seed (SplitMix64 finalizer per step).
pub fn derive_seed(master: u64, stream: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    stream
        .iter()
        .fold(mix(master), |acc, &s| mix(acc ^ mix(s.wrapping_add(0xA5A5_A5A5))))
}
