//! Grad-CAM relevance over frequency bins.

use crate::error::{Error, Result};
use crate::net1d::{predict, TrainedModel};
use crate::types::{argmax, FaultLabel, Spectrum};

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    /// Per-bin relevance, peak-scaled to 1 when `normalized_peak` is set.
    pub relevance: Vec<f64>,
    /// Same values before peak scaling.
    pub raw: Vec<f64>,
    pub target_class: FaultLabel,
    pub normalized_peak: bool,
    pub df: f64,
    pub f_start: f64,
}

impl Heatmap {
    pub fn len(&self) -> usize {
        self.relevance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevance.is_empty()
    }

    pub fn frequency_of(&self, bin: usize) -> f64 {
        self.f_start + bin as f64 * self.df
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.raw)
    }

    /// Local maxima at or above half the peak, by relevance descending then
    /// frequency ascending. A flat-topped maximum is reported at its first bin.
    pub fn top_frequencies(&self) -> Vec<(f64, f64)> {
        let r = &self.relevance;
        let peak = r.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut i = 0;
        while i < r.len() {
            let mut end = i;
            while end + 1 < r.len() && r[end + 1] == r[i] {
                end += 1;
            }
            let left_lower = i == 0 || r[i - 1] < r[i];
            let right_lower = end + 1 == r.len() || r[end + 1] < r[i];
            if left_lower && right_lower && r[i] > 0.0 && r[i] >= 0.5 * peak {
                out.push((self.frequency_of(i), r[i]));
            }
            i = end + 1;
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
        out
    }
}

/// Maps conv output position `j` to input bin `j + (kernel - 1) / 2` (the
/// receptive field centre) and interpolates linearly in between; bins outside
/// the covered range take the nearest edge value.
pub(crate) fn upsample(cam: &[f64], input_len: usize, kernel_size: usize) -> Vec<f64> {
    let offset = (kernel_size as f64 - 1.0) / 2.0;
    let last = cam.len() - 1;
    (0..input_len)
        .map(|i| {
            let u = (i as f64 - offset).clamp(0.0, last as f64);
            let lo = u.floor() as usize;
            let hi = (lo + 1).min(last);
            let frac = u - lo as f64;
            cam[lo] * (1.0 - frac) + cam[hi] * frac
        })
        .collect()
}

/// Grad-CAM for `target` on the convolution layer, using the pre-softmax
/// logit as the class score.
pub fn gradcam(model: &TrainedModel, spectrum: &Spectrum, target: FaultLabel) -> Result<Heatmap> {
    let net = &model.network;
    let arch = &net.arch;
    if spectrum.len() != arch.input_len {
        return Err(Error::ShapeMismatch {
            expected: arch.input_len,
            got: spectrum.len(),
        });
    }
    let (_, cache) = net.forward(spectrum.magnitudes())?;
    let class = model
        .label_order
        .iter()
        .position(|&l| l == target)
        .expect("label order covers every class");
    let mut dlogits = vec![0.0; arch.n_classes];
    dlogits[class] = 1.0;
    let (_, dact) = net.backward_logits(&cache, &dlogits);

    let lc = arch.conv_len();
    let mut cam = vec![0.0; lc];
    for f in 0..arch.conv_filters {
        let grads = &dact[f * lc..(f + 1) * lc];
        let weight = grads.iter().sum::<f64>() / lc as f64;
        if weight == 0.0 {
            continue;
        }
        for (c, a) in cam.iter_mut().zip(&cache.conv.act[f * lc..(f + 1) * lc]) {
            *c += weight * a;
        }
    }
    cam.iter_mut().for_each(|v| *v = v.max(0.0));
    let raw = upsample(&cam, arch.input_len, arch.kernel_size);
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    let relevance = if peak > 0.0 {
        raw.iter().map(|v| v / peak).collect()
    } else {
        raw.clone()
    };
    Ok(Heatmap {
        relevance,
        raw,
        target_class: target,
        normalized_peak: peak > 0.0,
        df: spectrum.df_hz(),
        f_start: spectrum.f_start_hz(),
    })
}

/// Predicts, then explains the predicted class.
pub fn explain_prediction(model: &TrainedModel, spectrum: &Spectrum) -> Result<(FaultLabel, Heatmap, Vec<(f64, f64)>)> {
    let (label, _) = predict(model, spectrum)?;
    let heatmap = gradcam(model, spectrum, label)?;
    let top = heatmap.top_frequencies();
    Ok((label, heatmap, top))
}
