//! Mel-frequency cepstral coefficients.
//!
//! Pre-emphasis, Hamming-windowed framing, power spectrum, triangular HTK-mel
//! filterbank spanning 0 Hz to Nyquist, floored natural log, orthonormal DCT-II
//! truncated to `n_coeffs`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::media::AudioBlock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub pre_emphasis: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            frame_len_ms: 25.0,
            hop_ms: 10.0,
            n_fft: 512,
            n_mels: 26,
            n_coeffs: 13,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters over the one-sided power spectrum.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Hz edges: `n_mels + 2` points, filter `i` spans `edges[i]..edges[i + 2]`.
    edges: Vec<f64>,
    /// Sparse weights per filter: `(bin, weight)`.
    weights: Vec<Vec<(usize, f64)>>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32) -> Self {
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let mut edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        edges[n_mels + 1] = nyquist;
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let weights = (0..n_mels)
            .map(|m| {
                let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..=n_fft / 2)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= c {
                            (f - lo) / (c - lo)
                        } else if f > c && f < hi {
                            (hi - f) / (hi - c)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect();
        MelFilterbank { edges, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.edges[1..self.edges.len() - 1]
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|ws| ws.iter().map(|&(k, w)| w * power[k]).sum())
            .collect()
    }
}

/// Orthonormal DCT-II of `x`, first `n_out` coefficients.
pub fn dct2_ortho(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                .sum();
            scale * s
        })
        .collect()
}

/// A configured extractor for one sample rate.
pub struct Mfcc {
    cfg: MfccConfig,
    frame_len: usize,
    hop: usize,
    window: Vec<f64>,
    filterbank: MelFilterbank,
    fft: Arc<dyn Fft<f64>>,
}

impl Mfcc {
    pub fn new(cfg: &MfccConfig, sample_rate: u32) -> Result<Self, FeatureError> {
        let frame_len = (sample_rate as f64 * cfg.frame_len_ms / 1000.0).round() as usize;
        let hop = (sample_rate as f64 * cfg.hop_ms / 1000.0).round() as usize;
        if cfg.n_coeffs == 0 || cfg.n_coeffs > cfg.n_mels {
            return Err(FeatureError::BadConfig(format!(
                "n_coeffs {} must be in 1..={}",
                cfg.n_coeffs, cfg.n_mels
            )));
        }
        if frame_len == 0 || hop == 0 || cfg.n_fft < frame_len {
            return Err(FeatureError::BadConfig(format!(
                "n_fft {} must cover the {frame_len}-sample frame (hop {hop})",
                cfg.n_fft
            )));
        }
        if cfg.log_floor <= 0.0 {
            return Err(FeatureError::BadConfig("log_floor must be positive".into()));
        }
        let window = (0..frame_len)
            .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (frame_len - 1).max(1) as f64).cos())
            .collect();
        Ok(Mfcc {
            cfg: cfg.clone(),
            frame_len,
            hop,
            window,
            filterbank: MelFilterbank::new(cfg.n_mels, cfg.n_fft, sample_rate),
            fft: FftPlanner::new().plan_fft_forward(cfg.n_fft),
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Pre-emphasised signal scaled to [-1, 1).
    pub fn pre_emphasize(&self, samples: &[i16]) -> Vec<f64> {
        let a = self.cfg.pre_emphasis;
        let mut prev = 0.0;
        samples
            .iter()
            .map(|&s| {
                let x = s as f64 / 32768.0;
                let y = x - a * prev;
                prev = x;
                y
            })
            .collect()
    }

    /// One-sided `|X_k|²` for `k = 0..=n_fft/2` of a windowed, zero-padded frame.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .map(|(&x, &w)| Complex::new(x * w, 0.0))
            .collect();
        buf.resize(self.cfg.n_fft, Complex::default());
        self.fft.process(&mut buf);
        buf[..=self.cfg.n_fft / 2].iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn log_mel(&self, frame: &[f64]) -> Vec<f64> {
        let floor = self.cfg.log_floor;
        self.filterbank
            .apply(&self.power_spectrum(frame))
            .into_iter()
            .map(|e| e.max(floor).ln())
            .collect()
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.frame_len {
            0
        } else {
            1 + (n_samples - self.frame_len) / self.hop
        }
    }

    /// Cepstral frames, `n_frames × n_coeffs`.
    pub fn compute(&self, samples: &[i16]) -> Result<Vec<Vec<f64>>, FeatureError> {
        let n = self.n_frames(samples.len());
        if n == 0 {
            return Err(FeatureError::AudioTooShort {
                samples: samples.len(),
                needed: self.frame_len,
            });
        }
        let signal = self.pre_emphasize(samples);
        Ok((0..n)
            .map(|i| {
                let frame = &signal[i * self.hop..i * self.hop + self.frame_len];
                dct2_ortho(&self.log_mel(frame), self.cfg.n_coeffs)
            })
            .collect())
    }
}

pub fn mfcc(audio: &AudioBlock, cfg: &MfccConfig) -> Result<Vec<Vec<f64>>, FeatureError> {
    Mfcc::new(cfg, audio.sample_rate())?.compute(audio.samples())
}
