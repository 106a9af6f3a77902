use std::path::Path;

use super::{FrontendError, SAMPLE_RATE};

/// Mono audio at a known sample rate, amplitudes in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, FrontendError> {
        if samples.is_empty() {
            return Err(FrontendError::InvalidWaveform("no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !(s.abs() <= 1.0)) {
            return Err(FrontendError::InvalidWaveform(format!(
                "sample {i} = {} outside [-1, 1]",
                samples[i]
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Parses a RIFF/WAVE PCM16 mono 16 kHz file image.
///
/// Unknown chunks are skipped. Samples are scaled by `1/32768`.
pub fn parse_wav(bytes: &[u8]) -> Result<Waveform, FrontendError> {
    let corrupt = |m: &str| FrontendError::CorruptHeader(m.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(corrupt("missing RIFF/WAVE signature"));
    }
    let mut pos = 12;
    let mut fmt_seen = false;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body
            .checked_add(size)
            .ok_or_else(|| corrupt("chunk size overflow"))?;
        match id {
            b"fmt " => {
                if size < 16 || end > bytes.len() {
                    return Err(corrupt("truncated fmt chunk"));
                }
                let format = u16_at(bytes, body);
                let channels = u16_at(bytes, body + 2);
                let rate = u32_at(bytes, body + 4);
                let block_align = u16_at(bytes, body + 12);
                let bits = u16_at(bytes, body + 14);
                if format != 1 {
                    return Err(FrontendError::UnsupportedFormat(format!(
                        "format tag {format}, only PCM (1) is accepted"
                    )));
                }
                if channels != 1 {
                    return Err(FrontendError::UnsupportedFormat(format!(
                        "{channels} channels, only mono is accepted"
                    )));
                }
                if bits != 16 {
                    return Err(FrontendError::UnsupportedFormat(format!(
                        "{bits}-bit samples, only 16-bit is accepted"
                    )));
                }
                if rate != SAMPLE_RATE {
                    return Err(FrontendError::UnsupportedFormat(format!(
                        "sample rate {rate} Hz, expected {SAMPLE_RATE} Hz (no resampling)"
                    )));
                }
                if block_align != 2 {
                    return Err(corrupt("block align inconsistent with mono PCM16"));
                }
                fmt_seen = true;
            }
            b"data" => {
                if !fmt_seen {
                    return Err(corrupt("data chunk before fmt chunk"));
                }
                if end > bytes.len() {
                    return Err(corrupt("data chunk extends past end of file"));
                }
                if size % 2 != 0 {
                    return Err(corrupt("odd data length for PCM16"));
                }
                if size == 0 {
                    return Err(corrupt("empty data chunk"));
                }
                let samples = bytes[body..end]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
                    .collect();
                return Waveform::new(samples, SAMPLE_RATE);
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = end.saturating_add(size & 1);
    }
    Err(corrupt(if fmt_seen {
        "no data chunk"
    } else {
        "no fmt chunk"
    }))
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform, FrontendError> {
    parse_wav(&std::fs::read(path)?)
}

/// Encodes mono PCM16 at `sample_rate`. Samples are clamped to `[-1, 1]` and
/// rounded to the nearest step of `1/32767`.
pub fn encode_wav(samples: &[f32], sample_rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav(path: impl AsRef<Path>, samples: &[f32], sample_rate: u32) -> std::io::Result<()> {
    std::fs::write(path, encode_wav(samples, sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_wav(channels: u16, rate: u32, bits: u16, format: u16, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&format.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        let align = channels * bits / 8;
        out.extend_from_slice(&(rate * align as u32).to_le_bytes());
        out.extend_from_slice(&align.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    fn pcm(values: &[i16]) -> Vec<u8> {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    #[test]
    fn one_second_of_silence() {
        let w = parse_wav(&raw_wav(1, 16000, 16, 1, &pcm(&[0; 16000]))).unwrap();
        assert_eq!(w.samples().len(), 16000);
        assert!(w.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn extreme_values_scale_by_32768() {
        let w = parse_wav(&raw_wav(1, 16000, 16, 1, &pcm(&[32767, -32768, 0]))).unwrap();
        assert_eq!(w.samples(), &[32767.0 / 32768.0, -1.0, 0.0]);
        assert!((w.samples()[0] - 0.999_969_5).abs() < 1e-7);
    }

    #[test]
    fn rejects_stereo_non_pcm16_and_wrong_rate() {
        let d = pcm(&[0; 8]);
        for bytes in [
            raw_wav(2, 16000, 16, 1, &d),
            raw_wav(1, 16000, 8, 1, &d),
            raw_wav(1, 16000, 32, 3, &d),
            raw_wav(1, 44100, 16, 1, &d),
        ] {
            assert!(matches!(parse_wav(&bytes), Err(FrontendError::UnsupportedFormat(_))));
        }
    }

    #[test]
    fn corrupt_headers() {
        let good = raw_wav(1, 16000, 16, 1, &pcm(&[1, 2, 3]));
        assert!(matches!(parse_wav(&good[..20]), Err(FrontendError::CorruptHeader(_))));
        assert!(matches!(parse_wav(&good[..good.len() - 1]), Err(FrontendError::CorruptHeader(_))));
        assert!(matches!(parse_wav(b"RIFX0000WAVE"), Err(FrontendError::CorruptHeader(_))));
        let mut bad = good.clone();
        bad[40..44].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(parse_wav(&bad), Err(FrontendError::CorruptHeader(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let mut bytes = raw_wav(1, 16000, 16, 1, &pcm(&[100, -100]));
        let data = bytes.split_off(36);
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]);
        bytes.extend_from_slice(&data);
        let w = parse_wav(&bytes).unwrap();
        assert_eq!(w.samples().len(), 2);
    }

    #[test]
    fn encode_then_parse() {
        let s = [0.5f32, -0.25, 1.0, -1.0, 0.0];
        let w = parse_wav(&encode_wav(&s, 16000)).unwrap();
        for (a, b) in s.iter().zip(w.samples()) {
            assert!((a - b).abs() < 1.0 / 16384.0);
        }
    }
}
