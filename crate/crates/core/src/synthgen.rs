//! Synthetic fault signatures injected into a baseline signal.
//!
//! Every deterministic fault frequency gets a sinusoid whose amplitude is
//! chosen so that the magnitude spectrum of the result rises by a random gain
//! (in dB, drawn from an [`AmplitudeRule`]) over the baseline at that bin.
//! Bearing faults are an exponentially decaying resonance burst repeated at
//! the defect frequency.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{self, amplitude_bin};
use crate::types::{FaultLabel, MachineSpec, Spectrum, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineComponent {
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase_rad: f64,
}

/// Range of spectral gain, in dB over the baseline, for injected fault lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeRule {
    pub min_gain_db: f64,
    pub max_gain_db: f64,
    /// Draw component phases uniformly instead of using zero.
    pub random_phase: bool,
}

impl Default for AmplitudeRule {
    fn default() -> Self {
        Self {
            min_gain_db: 3.0,
            max_gain_db: 20.0,
            random_phase: false,
        }
    }
}

impl AmplitudeRule {
    pub fn new(min_gain_db: f64, max_gain_db: f64) -> Result<Self> {
        let rule = Self {
            min_gain_db,
            max_gain_db,
            random_phase: false,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_gain_db >= 0.0 && self.max_gain_db >= self.min_gain_db && self.max_gain_db.is_finite()) {
            return Err(Error::invalid(format!(
                "amplitude rule needs 0 <= min <= max, got [{}, {}] dB",
                self.min_gain_db, self.max_gain_db
            )));
        }
        Ok(())
    }

    fn draw_db<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        draw_uniform(rng, self.min_gain_db, self.max_gain_db)
    }

    fn draw_phase<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.random_phase {
            rng.random_range(0.0..2.0 * PI)
        } else {
            0.0
        }
    }
}

pub(crate) fn draw_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn db_to_ratio(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// `A sin(2 pi f i / fs + theta)` for `i` in `0..n`.
pub fn sine(component: &SineComponent, n: usize, fs: f64) -> Result<TimeSeries> {
    if n == 0 {
        return Err(Error::invalid("sine needs at least one sample"));
    }
    if !(component.frequency_hz > 0.0 && component.frequency_hz < fs / 2.0) {
        return Err(Error::invalid(format!(
            "frequency {} Hz must lie in (0, {}) for fs = {fs} Hz",
            component.frequency_hz,
            fs / 2.0
        )));
    }
    TimeSeries::new(sine_samples(component, n, fs), fs)
}

fn sine_samples(c: &SineComponent, n: usize, fs: f64) -> Vec<f64> {
    let w = 2.0 * PI * c.frequency_hz / fs;
    (0..n)
        .map(|i| c.amplitude * (w * i as f64 + c.phase_rad).sin())
        .collect()
}

/// Target spectral magnitude at `f_hz`: the baseline bin (guarded from below
/// by the median bin magnitude) raised by a gain drawn from `rule`.
pub fn sample_fault_amplitude<R: Rng + ?Sized>(
    baseline: &Spectrum,
    f_hz: f64,
    rule: &AmplitudeRule,
    rng: &mut R,
) -> f64 {
    reference_magnitude(baseline, f_hz, median(baseline.magnitudes())) * db_to_ratio(rule.draw_db(rng))
}

fn reference_magnitude(baseline: &Spectrum, f_hz: f64, floor: f64) -> f64 {
    let m = baseline.magnitudes()[baseline.nearest_bin(f_hz)].max(floor);
    // a completely silent baseline has no scale of its own
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Gear mesh frequency.
pub fn gmf(n_teeth: u32, shaft_hz: f64) -> f64 {
    n_teeth as f64 * shaft_hz
}

/// Frequencies at which each fault injects a deterministic line. Bearing
/// faults excite a resonance band rather than fixed lines and return an
/// empty list, as does the normal condition.
pub fn fault_frequencies(label: FaultLabel, spec: &MachineSpec) -> Vec<f64> {
    let fr = spec.rotation_hz;
    match label {
        FaultLabel::Normal | FaultLabel::Bpfo | FaultLabel::Bpfi => vec![],
        FaultLabel::Unbalance => vec![fr],
        FaultLabel::Misalignment => vec![fr, 2.0 * fr, 3.0 * fr],
        FaultLabel::Looseness => (1..=2 * spec.looseness_harmonics)
            .map(|m| m as f64 * fr / 2.0)
            .collect(),
        FaultLabel::GearFault => match spec.gmf_hz {
            Some(g) => {
                let mut out: Vec<f64> = (1..=3).map(|k| k as f64 * g).collect();
                for k in 1..=3 {
                    out.push(k as f64 * g - fr);
                    out.push(k as f64 * g + fr);
                }
                out
            }
            None => vec![],
        },
    }
}

/// A baseline with its spectrum precomputed, shared by all generators.
struct Baseline<'a> {
    signal: &'a TimeSeries,
    spectrum: Spectrum,
    floor: f64,
}

impl<'a> Baseline<'a> {
    fn new(signal: &'a TimeSeries) -> Result<Self> {
        let spectrum = spectral::fft_magnitude(signal)?;
        let floor = median(spectrum.magnitudes());
        Ok(Self {
            signal,
            spectrum,
            floor,
        })
    }

    fn reference(&self, f_hz: f64) -> f64 {
        reference_magnitude(&self.spectrum, f_hz, self.floor)
    }

    fn require_below_nyquist(&self, what: &str, f_hz: f64) -> Result<()> {
        if f_hz < self.signal.nyquist_hz() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what} at {f_hz} Hz is not below Nyquist ({} Hz)",
                self.signal.nyquist_hz()
            )))
        }
    }
}

/// A line to inject: frequency, linear target gain over the reference, phase.
struct Line {
    freq: f64,
    gain: f64,
    phase: f64,
}

/// DFT of `sin(w i + phase)`, `i < n`, at bin `k`, in single-sided amplitude
/// units.
fn sine_bin(w: f64, phase: f64, n: usize, k: usize) -> Complex64 {
    let beta = 2.0 * PI * k as f64 / n as f64;
    let pos = Complex64::from_polar(1.0, phase) * dirichlet(w - beta, n);
    let neg = Complex64::from_polar(1.0, -phase) * dirichlet(-w - beta, n);
    let raw = (pos - neg) / Complex64::new(0.0, 2.0);
    let scale = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
    raw * (scale / n as f64)
}

/// `sum_{i<n} exp(j alpha i)`.
fn dirichlet(alpha: f64, n: usize) -> Complex64 {
    let a = alpha.rem_euclid(2.0 * PI);
    let half = 0.5 * a;
    let den = half.sin();
    if den.abs() < 1e-12 {
        return Complex64::new(n as f64, 0.0);
    }
    Complex64::from_polar(1.0, half * (n as f64 - 1.0)) * ((n as f64 * half).sin() / den)
}

/// Non-negative `a` with `|s + a u| = t`; zero when the bin already exceeds
/// the target.
fn solve_amplitude(s: Complex64, u: Complex64, t: f64) -> f64 {
    let uu = u.norm_sqr();
    if uu == 0.0 {
        return 0.0;
    }
    let b = (s.conj() * u).re;
    let c = s.norm_sqr() - t * t;
    if c >= 0.0 {
        return 0.0;
    }
    (-b + (b * b - uu * c).sqrt()) / uu
}

/// Adds sinusoids at `lines`, each sized so the output spectrum magnitude at
/// its nearest bin equals `gain * reference`. Cross-talk between lines is
/// resolved by fixed-point iteration.
fn inject_lines(base: &Baseline<'_>, lines: &[Line]) -> Result<TimeSeries> {
    let n = base.signal.len();
    let fs = base.signal.sample_rate_hz();
    for l in lines {
        base.require_below_nyquist("fault line", l.freq)?;
    }
    let bins: Vec<usize> = lines.iter().map(|l| base.spectrum.nearest_bin(l.freq)).collect();
    let targets: Vec<f64> = lines.iter().map(|l| l.gain * base.reference(l.freq)).collect();
    let baseline_bins: Vec<Complex64> = bins
        .iter()
        .map(|&k| amplitude_bin(base.signal.samples(), k))
        .collect();
    // coupling[i][j]: unit line i seen at the bin of line j
    let coupling: Vec<Vec<Complex64>> = lines
        .iter()
        .map(|l| {
            let w = 2.0 * PI * l.freq / fs;
            bins.iter().map(|&k| sine_bin(w, l.phase, n, k)).collect()
        })
        .collect();

    let mut amps = vec![0.0; lines.len()];
    for _ in 0..100 {
        let mut delta: f64 = 0.0;
        for j in 0..lines.len() {
            let mut s = baseline_bins[j];
            for i in 0..lines.len() {
                if i != j {
                    s += coupling[i][j] * amps[i];
                }
            }
            let a = solve_amplitude(s, coupling[j][j], targets[j]);
            delta = delta.max((a - amps[j]).abs() / a.max(1e-300));
            amps[j] = a;
        }
        if delta < 1e-13 {
            break;
        }
    }

    let mut out = base.signal.samples().to_vec();
    for (l, a) in lines.iter().zip(&amps) {
        let c = SineComponent {
            amplitude: *a,
            frequency_hz: l.freq,
            phase_rad: l.phase,
        };
        for (o, v) in out.iter_mut().zip(sine_samples(&c, n, fs)) {
            *o += v;
        }
    }
    base.signal.with_samples(out)
}

fn gain_line<R: Rng + ?Sized>(freq: f64, rule: &AmplitudeRule, rng: &mut R) -> Line {
    Line {
        freq,
        gain: db_to_ratio(rule.draw_db(rng)),
        phase: rule.draw_phase(rng),
    }
}

fn unbalance_inner<R: Rng + ?Sized>(
    base: &Baseline<'_>,
    spec: &MachineSpec,
    rule: &AmplitudeRule,
    rng: &mut R,
) -> Result<TimeSeries> {
    inject_lines(base, &[gain_line(spec.rotation_hz, rule, rng)])
}

fn misalignment_inner<R: Rng + ?Sized>(
    base: &Baseline<'_>,
    spec: &MachineSpec,
    rule: &AmplitudeRule,
    rng: &mut R,
) -> Result<TimeSeries> {
    let fr = spec.rotation_hz;
    base.require_below_nyquist("3x rotation", 3.0 * fr)?;
    let mut g1 = rule.draw_db(rng);
    let g2 = rule.draw_db(rng);
    let g3 = rule.draw_db(rng);
    if g1 > g2 {
        // 2x dominates 1x in misalignment
        g1 = draw_uniform(rng, rule.min_gain_db, g2);
    }
    let lines: Vec<Line> = [(1.0, g1), (2.0, g2), (3.0, g3)]
        .into_iter()
        .map(|(m, g)| Line {
            freq: m * fr,
            gain: db_to_ratio(g),
            phase: rule.draw_phase(rng),
        })
        .collect();
    inject_lines(base, &lines)
}

fn looseness_inner<R: Rng + ?Sized>(
    base: &Baseline<'_>,
    spec: &MachineSpec,
    rule: &AmplitudeRule,
    rng: &mut R,
) -> Result<TimeSeries> {
    let lines: Vec<Line> = fault_frequencies(FaultLabel::Looseness, spec)
        .into_iter()
        .map(|f| gain_line(f, rule, rng))
        .collect();
    if let Some(top) = lines.last() {
        base.require_below_nyquist("looseness harmonic", top.freq)?;
    }
    inject_lines(base, &lines)
}

fn gear_inner<R: Rng + ?Sized>(
    base: &Baseline<'_>,
    spec: &MachineSpec,
    rule: &AmplitudeRule,
    rng: &mut R,
) -> Result<TimeSeries> {
    let g = spec
        .gmf_hz
        .ok_or_else(|| Error::invalid("gear fault needs gmf_hz in the machine spec"))?;
    let fr = spec.rotation_hz;
    base.require_below_nyquist("3x GMF + rotation sideband", 3.0 * g + fr)?;
    if g - fr <= 0.0 {
        return Err(Error::invalid("GMF must exceed the rotation frequency"));
    }
    let floor = db_to_ratio(rule.min_gain_db);
    let mut lines = Vec::with_capacity(9);
    for k in 1..=3 {
        lines.push(gain_line(k as f64 * g, rule, rng));
    }
    for k in 1..=3 {
        for side in [-1.0, 1.0] {
            let mut line = gain_line(k as f64 * g + side * fr, rule, rng);
            // sidebands at half the drawn level, never under the gain floor
            line.gain = (0.5 * line.gain).max(floor);
            lines.push(line);
        }
    }
    inject_lines(base, &lines)
}

/// Decay time constant of the impact burst: about five carrier cycles.
fn burst_tau(resonance_hz: f64) -> f64 {
    5.0 / resonance_hz
}

/// Unit-amplitude resonance bursts starting at `k / fault_hz`, summed.
pub(crate) fn impact_train(n: usize, fs: f64, resonance_hz: f64, fault_hz: f64) -> Vec<f64> {
    let tau = burst_tau(resonance_hz);
    let window = 10.0 * tau;
    let period = 1.0 / fault_hz;
    let w = 2.0 * PI * resonance_hz;
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let last = (t / period).floor() as i64;
            let mut v = 0.0;
            let mut k = last;
            while k >= 0 {
                let dt = t - k as f64 * period;
                if dt >= window {
                    break;
                }
                v += (w * dt).sin() * (-dt / tau).exp();
                k -= 1;
            }
            v
        })
        .collect()
}

fn bearing_inner<R: Rng + ?Sized>(
    base: &Baseline<'_>,
    spec: &MachineSpec,
    fault_hz: f64,
    rule: &AmplitudeRule,
    rng: &mut R,
) -> Result<TimeSeries> {
    let fs = base.signal.sample_rate_hz();
    let n = base.signal.len();
    let resonance = spec.impact_resonance_for(fs);
    base.require_below_nyquist("impact resonance", resonance)?;
    base.require_below_nyquist("bearing defect frequency", fault_hz)?;
    if !(fault_hz > 0.0) {
        return Err(Error::invalid("bearing defect frequency must be positive"));
    }
    let unit = impact_train(n, fs, resonance, fault_hz);
    // the strongest comb line carries the drawn gain
    let unit_spec = spectral::complex_spectrum(&unit);
    let peak = unit_spec
        .iter()
        .enumerate()
        .skip(1)
        .fold((1, 0.0), |best, (k, c)| {
            if c.norm() > best.1 {
                (k, c.norm())
            } else {
                best
            }
        })
        .0;
    let u = amplitude_bin(&unit, peak);
    let s = amplitude_bin(base.signal.samples(), peak);
    let target = base.reference(base.spectrum.frequency_of(peak)) * db_to_ratio(rule.draw_db(rng));
    let a = solve_amplitude(s, u, target);
    let out = base
        .signal
        .samples()
        .iter()
        .zip(&unit)
        .map(|(b, v)| b + a * v)
        .collect();
    base.signal.with_samples(out)
}

pub fn gen_normal<R: Rng + ?Sized>(baseline: &TimeSeries, _rng: &mut R) -> TimeSeries {
    baseline.clone()
}

pub fn gen_unbalance<R: Rng + ?Sized>(
    baseline: &TimeSeries,
    spec: &MachineSpec,
    rule: &AmplitudeRule,
    rng: &mut R,
) -> Result<TimeSeries> {
    spec.validate()?;
    unbalance_inner(&Baseline::new(baseline)?, spec, rule, rng)
}

pub fn gen_misalignment<R: Rng + ?Sized>(
    baseline: &TimeSeries,
    spec: &MachineSpec,
    rule: &AmplitudeRule,
    rng: &mut R,
) -> Result<TimeSeries> {
    spec.validate()?;
    misalignment_inner(&Baseline::new(baseline)?, spec, rule, rng)
}

pub fn gen_looseness<R: Rng + ?Sized>(
    baseline: &TimeSeries,
    spec: &MachineSpec,
    rule: &AmplitudeRule,
    rng: &mut R,
) -> Result<TimeSeries> {
    spec.validate()?;
    looseness_inner(&Baseline::new(baseline)?, spec, rule, rng)
}

pub fn gen_gear_fault<R: Rng + ?Sized>(
    baseline: &TimeSeries,
    spec: &MachineSpec,
    rule: &AmplitudeRule,
    rng: &mut R,
) -> Result<TimeSeries> {
    spec.validate()?;
    gear_inner(&Baseline::new(baseline)?, spec, rule, rng)
}

/// Outer or inner race fault at `fault_hz` (pass `spec.bpfo_hz` or
/// `spec.bpfi_hz`).
pub fn gen_bearing_fault<R: Rng + ?Sized>(
    baseline: &TimeSeries,
    spec: &MachineSpec,
    fault_hz: Option<f64>,
    rule: &AmplitudeRule,
    rng: &mut R,
) -> Result<TimeSeries> {
    spec.validate()?;
    let f = fault_hz.ok_or_else(|| Error::invalid("bearing fault frequency missing from machine spec"))?;
    bearing_inner(&Baseline::new(baseline)?, spec, f, rule, rng)
}

/// Parameters of the stand-in baseline used when no measured signal exists.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateConfig {
    pub tone_amplitude: f64,
    pub noise_std: f64,
    pub random_tones: usize,
    /// Random tone amplitudes, as multiples of the RMS noise level of one
    /// amplitude-spectrum bin, `2 * noise_std / sqrt(n)`.
    pub random_tone_level: (f64, f64),
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            tone_amplitude: 1.0,
            noise_std: 2.0,
            random_tones: 10,
            random_tone_level: (1.0, 3.0),
        }
    }
}

/// Rotation tone plus white noise plus a few random tones near the noise level.
pub fn gen_baseline_surrogate<R: Rng + ?Sized>(
    spec: &MachineSpec,
    fs: f64,
    n: usize,
    cfg: &SurrogateConfig,
    rng: &mut R,
) -> Result<TimeSeries> {
    spec.validate()?;
    let tone = SineComponent {
        amplitude: cfg.tone_amplitude,
        frequency_hz: spec.rotation_hz,
        phase_rad: 0.0,
    };
    let mut out = sine(&tone, n, fs)?.into_samples();
    if cfg.noise_std < 0.0 || cfg.random_tone_level.0 > cfg.random_tone_level.1 {
        return Err(Error::invalid("surrogate noise level must be non-negative"));
    }
    if cfg.noise_std > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
        for v in out.iter_mut() {
            *v += normal.sample(rng);
        }
    }
    let floor = 2.0 * cfg.noise_std / (n as f64).sqrt();
    let f_lo = fs / n as f64;
    let f_hi = 0.49 * fs;
    for _ in 0..cfg.random_tones {
        let c = SineComponent {
            frequency_hz: rng.random_range(f_lo..f_hi),
            amplitude: floor * draw_uniform(rng, cfg.random_tone_level.0, cfg.random_tone_level.1),
            phase_rad: rng.random_range(0.0..2.0 * PI),
        };
        for (o, v) in out.iter_mut().zip(sine_samples(&c, n, fs)) {
            *o += v;
        }
    }
    TimeSeries::new(out, fs)
}

/// One signal per condition, in label order.
pub fn gen_all_conditions<R: Rng + ?Sized>(
    baseline: &TimeSeries,
    spec: &MachineSpec,
    rule: &AmplitudeRule,
    rng: &mut R,
) -> Result<Vec<(TimeSeries, FaultLabel)>> {
    spec.validate()?;
    rule.validate()?;
    let base = Baseline::new(baseline)?;
    let mut out = Vec::with_capacity(FaultLabel::COUNT);
    for label in FaultLabel::ALL {
        let signal = match label {
            FaultLabel::Normal => gen_normal(baseline, rng),
            FaultLabel::Bpfo => {
                let f = spec.bpfo_hz.ok_or_else(|| Error::invalid("machine spec lacks bpfo_hz"))?;
                bearing_inner(&base, spec, f, rule, rng)?
            }
            FaultLabel::Bpfi => {
                let f = spec.bpfi_hz.ok_or_else(|| Error::invalid("machine spec lacks bpfi_hz"))?;
                bearing_inner(&base, spec, f, rule, rng)?
            }
            FaultLabel::Unbalance => unbalance_inner(&base, spec, rule, rng)?,
            FaultLabel::Misalignment => misalignment_inner(&base, spec, rule, rng)?,
            FaultLabel::Looseness => looseness_inner(&base, spec, rule, rng)?,
            FaultLabel::GearFault => gear_inner(&base, spec, rule, rng)?,
        };
        out.push((signal, label));
    }
    Ok(out)
}
