//! `key = value` experiment configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::augment::AugmentParams;
use crate::error::{Error, Result};
use crate::net1d::{Architecture, TrainConfig};
use crate::spectral::{SpectralConfig, Window};
use crate::synthgen::{AmplitudeRule, SurrogateConfig};
use crate::types::MachineSpec;

/// Total pool sizes of the default size sweep.
pub const DEFAULT_SIZES: [usize; 10] = [1050, 2100, 3150, 4200, 5250, 6300, 7350, 8400, 9450, 10500];

/// Real-signal counts of the default real-count sweep.
pub const DEFAULT_REAL_COUNTS: [usize; 11] = [0, 1, 2, 3, 5, 10, 15, 25, 30, 50, 75];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub machine: MachineSpec,
    pub amplitude: AmplitudeRule,
    pub spectral: SpectralConfig,
    pub augment: AugmentParams,
    /// `input_len` is ignored; it follows from the spectral cut.
    pub model: Architecture,
    pub train: TrainConfig,
    pub n_total: usize,
    /// Baseline signals used for synthesis.
    pub n_r: usize,
    pub repetitions: usize,
    pub validation_fraction: f64,
    /// Held-out surrogate baselines for the test set when no test directory is given.
    pub test_baselines: usize,
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub real_counts: Vec<usize>,
    /// Sample rate and length of generated signals.
    pub fs: f64,
    pub n: usize,
    pub surrogate: SurrogateConfig,
    /// Directory of measured baseline signal files.
    pub baselines_dir: Option<PathBuf>,
    /// Directory with one subdirectory of signal files per label.
    pub test_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut machine = MachineSpec::new(20.6);
        machine.gmf_hz = Some(711.0);
        machine.bpfo_hz = Some(107.09);
        machine.bpfi_hz = Some(155.7);
        // keep the impact band inside the cut, which covers 3x GMF
        machine.impact_resonance_hz = Some(1500.0);
        Self {
            machine,
            amplitude: AmplitudeRule::default(),
            spectral: SpectralConfig::new(2200.0),
            augment: AugmentParams::default(),
            model: Architecture::new(0),
            train: TrainConfig::default(),
            n_total: 5250,
            n_r: 30,
            repetitions: 10,
            validation_fraction: 0.1,
            test_baselines: 50,
            seed: 0,
            sizes: DEFAULT_SIZES.to_vec(),
            real_counts: DEFAULT_REAL_COUNTS.to_vec(),
            fs: 25_000.0,
            n: 25_000,
            surrogate: SurrogateConfig::default(),
            baselines_dir: None,
            test_dir: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_opt_f64(key: &str, value: &str) -> Result<Option<f64>> {
    if value.eq_ignore_ascii_case("none") || value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{value}'"))),
    }
}

impl ExperimentConfig {
    /// Sets one dotted key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let range_end = |r: &mut (f64, f64), end: &str| -> Result<()> {
            let x = parse(key, v)?;
            match end {
                "min" => r.0 = x,
                _ => r.1 = x,
            }
            Ok(())
        };
        match key.trim() {
            "machine.rotation_hz" => self.machine.rotation_hz = parse(key, v)?,
            "machine.gmf_hz" => self.machine.gmf_hz = parse_opt_f64(key, v)?,
            "machine.bpfo_hz" => self.machine.bpfo_hz = parse_opt_f64(key, v)?,
            "machine.bpfi_hz" => self.machine.bpfi_hz = parse_opt_f64(key, v)?,
            "machine.impact_resonance_hz" => self.machine.impact_resonance_hz = parse_opt_f64(key, v)?,
            "machine.looseness_harmonics" => self.machine.looseness_harmonics = parse(key, v)?,

            "amplitude.min_gain_db" => self.amplitude.min_gain_db = parse(key, v)?,
            "amplitude.max_gain_db" => self.amplitude.max_gain_db = parse(key, v)?,
            "amplitude.random_phase" => self.amplitude.random_phase = parse_bool(key, v)?,

            "spectral.f_max_hz" => self.spectral.f_max_hz = parse(key, v)?,
            "spectral.window" => {
                self.spectral.window = match v.to_ascii_lowercase().as_str() {
                    "none" | "rect" | "rectangular" => Window::None,
                    "hann" => Window::Hann,
                    _ => return Err(Error::Config(format!("{key}: unknown window '{v}'"))),
                }
            }
            "spectral.detrend_mean" => self.spectral.detrend_mean = parse_bool(key, v)?,
            "spectral.normalize_first" => self.spectral.normalize_first = parse_bool(key, v)?,

            "augment.alpha_gauss.min" => range_end(&mut self.augment.alpha_gauss, "min")?,
            "augment.alpha_gauss.max" => range_end(&mut self.augment.alpha_gauss, "max")?,
            "augment.alpha_mask.min" => range_end(&mut self.augment.alpha_mask, "min")?,
            "augment.alpha_mask.max" => range_end(&mut self.augment.alpha_mask, "max")?,
            "augment.alpha_scal.min" => range_end(&mut self.augment.alpha_scal, "min")?,
            "augment.alpha_scal.max" => range_end(&mut self.augment.alpha_scal, "max")?,
            "augment.alpha_stre.min" => range_end(&mut self.augment.alpha_stre, "min")?,
            "augment.alpha_stre.max" => range_end(&mut self.augment.alpha_stre, "max")?,
            "augment.shift" if v.eq_ignore_ascii_case("auto") => self.augment.shift = None,
            "augment.shift.min" | "augment.shift.max" => {
                let x: i64 = parse(key, v)?;
                let (mut lo, mut hi) = self.augment.shift.unwrap_or((0, 0));
                if key.ends_with("min") {
                    lo = x;
                } else {
                    hi = x;
                }
                self.augment.shift = Some((lo, hi));
            }

            "model.conv_filters" => self.model.conv_filters = parse(key, v)?,
            "model.kernel_size" => self.model.kernel_size = parse(key, v)?,
            "model.pool_size" => self.model.pool_size = parse(key, v)?,
            "model.dropout_rate" => self.model.dropout_rate = parse(key, v)?,
            "model.dense_units" => self.model.dense_units = parse(key, v)?,

            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, v)?,
            "train.beta1" => self.train.beta1 = parse(key, v)?,
            "train.beta2" => self.train.beta2 = parse(key, v)?,
            "train.epsilon" => self.train.epsilon = parse(key, v)?,
            "train.patience" => self.train.patience = parse(key, v)?,
            "train.min_delta" => self.train.min_delta = parse(key, v)?,
            "train.max_epochs" => self.train.max_epochs = parse(key, v)?,

            "experiment.n_total" => self.n_total = parse(key, v)?,
            "experiment.n_r" => self.n_r = parse(key, v)?,
            "experiment.repetitions" => self.repetitions = parse(key, v)?,
            "experiment.validation_fraction" => self.validation_fraction = parse(key, v)?,
            "experiment.test_baselines" => self.test_baselines = parse(key, v)?,
            "experiment.seed" => self.seed = parse(key, v)?,
            "experiment.sizes" => self.sizes = parse_list(key, v)?,
            "experiment.real_counts" => self.real_counts = parse_list(key, v)?,

            "signals.fs" => self.fs = parse(key, v)?,
            "signals.n" => self.n = parse(key, v)?,

            "surrogate.tone_amplitude" => self.surrogate.tone_amplitude = parse(key, v)?,
            "surrogate.noise_std" => self.surrogate.noise_std = parse(key, v)?,
            "surrogate.random_tones" => self.surrogate.random_tones = parse(key, v)?,
            "surrogate.random_tone_level.min" => range_end(&mut self.surrogate.random_tone_level, "min")?,
            "surrogate.random_tone_level.max" => range_end(&mut self.surrogate.random_tone_level, "max")?,

            "paths.baselines" => self.baselines_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "paths.test" => self.test_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "paths.out" => self.out_dir = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(at) => &raw[..at],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text, "<config>")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.repetitions == 0 {
            return bad("experiment.repetitions must be at least 1".into());
        }
        if !(self.fs > 0.0) || self.n < 2 {
            return bad("signals.fs must be positive and signals.n at least 2".into());
        }
        if self.spectral.f_max_hz > self.fs / 2.0 {
            return bad(format!(
                "spectral.f_max_hz = {} exceeds the Nyquist frequency {}",
                self.spectral.f_max_hz,
                self.fs / 2.0
            ));
        }
        self.machine.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.amplitude.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.augment.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("experiment.validation_fraction must lie in [0, 1)".into());
        }
        for dir in [&self.baselines_dir, &self.test_dir].into_iter().flatten() {
            if !dir.is_dir() {
                return bad(format!("directory not found: {}", dir.display()));
            }
        }
        Ok(())
    }

    /// Model shape for spectra of `input_len` bins.
    pub fn architecture(&self, input_len: usize) -> Architecture {
        Architecture {
            input_len,
            ..self.model.clone()
        }
    }

    /// Spectrum length produced for generated signals.
    pub fn input_len(&self) -> usize {
        self.spectral.output_len(self.n, self.fs)
    }
}
