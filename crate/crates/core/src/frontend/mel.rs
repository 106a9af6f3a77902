use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{FrontendError, Waveform};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub power_floor: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            win_length: 400,
            hop_length: 160,
            n_fft: 512,
            n_mels: 64,
            f_min: 0.0,
            f_max: 8_000.0,
            power_floor: 1e-10,
        }
    }
}

impl FrontendConfig {
    pub fn frame_count(&self, samples: usize) -> usize {
        if samples < self.win_length {
            0
        } else {
            1 + (samples - self.win_length) / self.hop_length
        }
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop_length as f64
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters over the one-sided power spectrum, unnormalized.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    n_bins: usize,
    weights: Vec<f64>,
    centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &FrontendConfig) -> Self {
        let n_bins = cfg.n_fft / 2 + 1;
        let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
        let mut weights = vec![0.0; cfg.n_mels * n_bins];
        for m in 0..cfg.n_mels {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = ((f - l) / (c - l)).min((r - f) / (r - c));
                if w > 0.0 {
                    weights[m * n_bins + k] = w;
                }
            }
        }
        Self {
            n_bins,
            weights,
            centers: edges[1..=cfg.n_mels].to_vec(),
        }
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers
    }

    pub fn n_mels(&self) -> usize {
        self.centers.len()
    }

    pub fn weights(&self, band: usize) -> &[f64] {
        &self.weights[band * self.n_bins..(band + 1) * self.n_bins]
    }
}

/// `frames × n_mels` matrix of natural-log mel energies, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LogMelSpectrogram {
    values: Vec<f32>,
    frames: usize,
    n_mels: usize,
    frame_rate: f64,
}

impl LogMelSpectrogram {
    pub fn new(values: Vec<f32>, n_mels: usize, frame_rate: f64) -> Result<Self, FrontendError> {
        if n_mels == 0 || values.len() % n_mels != 0 {
            return Err(FrontendError::BandMismatch {
                expected: n_mels,
                found: values.len(),
            });
        }
        Ok(Self {
            frames: values.len() / n_mels,
            values,
            n_mels,
            frame_rate,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.n_mels..(t + 1) * self.n_mels]
    }
}

pub fn compute_log_mel(w: &Waveform, cfg: &FrontendConfig) -> Result<LogMelSpectrogram, FrontendError> {
    let n = w.samples().len();
    if n < cfg.win_length {
        return Err(FrontendError::InputTooShort {
            samples: n,
            needed: cfg.win_length,
        });
    }
    let frames = cfg.frame_count(n);
    let bank = MelFilterbank::new(cfg);
    // Periodic Hann.
    let window: Vec<f64> = (0..cfg.win_length)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / cfg.win_length as f64).cos())
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut power = vec![0.0f64; bank.n_bins];
    let mut values = Vec::with_capacity(frames * cfg.n_mels);
    let samples = w.samples();
    for t in 0..frames {
        let start = t * cfg.hop_length;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < cfg.win_length {
                Complex::new(samples[start + i] as f64 * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for m in 0..cfg.n_mels {
            let e: f64 = bank.weights(m).iter().zip(&power).map(|(a, b)| a * b).sum();
            values.push(e.max(cfg.power_floor).ln() as f32);
        }
    }
    LogMelSpectrogram::new(values, cfg.n_mels, cfg.frame_rate())
}
