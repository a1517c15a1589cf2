use serde::{Deserialize, Serialize};

use super::mfcc::{Mfcc, MfccConfig};
use super::FeatureError;
use crate::media::{frame_abs_diff, AudioBlock, Frame};

pub const N_MFCC: usize = 13;
pub const FEATURE_LEN: usize = 2 * N_MFCC + 4;

pub const LUMA_MEAN: usize = 2 * N_MFCC;
pub const LUMA_VAR: usize = LUMA_MEAN + 1;
pub const MOTION_MEAN: usize = LUMA_MEAN + 2;
pub const CUT_RATE: usize = LUMA_MEAN + 3;

pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = (0..N_MFCC).map(|i| format!("mfcc_mean_{i}")).collect();
    names.extend((0..N_MFCC).map(|i| format!("mfcc_std_{i}")));
    names.extend(["luma_mean", "luma_var", "motion_mean", "cut_rate"].map(String::from));
    names
}

/// The 30 audio-visual statistics of one shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, FeatureError> {
        if values.len() != FEATURE_LEN {
            return Err(FeatureError::BadFeatureVector(format!(
                "length {} != {FEATURE_LEN}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::BadFeatureVector(format!("dimension {i} is not finite")));
        }
        Ok(FeatureVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names() -> Vec<String> {
        feature_names()
    }

    pub fn scaled(&self, k: f64) -> FeatureVector {
        FeatureVector {
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }
}

pub fn extract_features(frames: &[Frame], audio: &AudioBlock, cfg: &MfccConfig) -> Result<FeatureVector, FeatureError> {
    if frames.is_empty() {
        return Err(FeatureError::EmptyShot);
    }
    let ceps = Mfcc::new(cfg, audio.sample_rate())?.compute(audio.samples())?;
    extract_with_cepstrum(frames, &ceps)
}

pub(crate) fn extract_with_cepstrum(frames: &[Frame], ceps: &[Vec<f64>]) -> Result<FeatureVector, FeatureError> {
    let mut values = vec![0.0; FEATURE_LEN];
    let n = ceps.len() as f64;
    let coeffs = ceps[0].len().min(N_MFCC);
    for c in 0..coeffs {
        // shifted by the first row so constant columns give exactly zero spread
        let shift = ceps[0][c];
        let mean_d = ceps.iter().map(|r| r[c] - shift).sum::<f64>() / n;
        let var = ceps.iter().map(|r| (r[c] - shift - mean_d).powi(2)).sum::<f64>() / n;
        values[c] = shift + mean_d;
        values[N_MFCC + c] = var.sqrt();
    }

    let (mut sum, mut sq) = (0u64, 0u64);
    for f in frames {
        for &p in f.pixels() {
            sum += p as u64;
            sq += p as u64 * p as u64;
        }
    }
    let count = (frames.len() * frames[0].len()) as f64;
    let mean = sum as f64 / count;
    values[LUMA_MEAN] = mean;
    values[LUMA_VAR] = (sq as f64 / count - mean * mean).max(0.0);
    values[MOTION_MEAN] = if frames.len() > 1 {
        frames
            .windows(2)
            .map(|w| frame_abs_diff(&w[0], &w[1]).expect("shot frames share dimensions"))
            .sum::<f64>()
            / (frames.len() - 1) as f64
    } else {
        0.0
    };
    values[CUT_RATE] = 0.0;
    FeatureVector::new(values)
}
