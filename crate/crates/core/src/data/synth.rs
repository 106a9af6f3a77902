use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{Manifest, ManifestEntry};
use super::{io_err, DataError};
use crate::frontend::{write_wav, SAMPLE_RATE};

/// Samples per event (0.5 s).
pub const EVENT_SAMPLES: usize = SAMPLE_RATE as usize / 2;
const AMPLITUDE: f64 = 0.5;
const FADE: usize = 80;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    LowTone,
    HighTone,
    UpChirp,
    DownChirp,
    NoiseBurst,
    Silence,
}

impl Event {
    pub const ALL: [Event; 6] = [
        Event::LowTone,
        Event::HighTone,
        Event::UpChirp,
        Event::DownChirp,
        Event::NoiseBurst,
        Event::Silence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::LowTone => "a low tone",
            Self::HighTone => "a high tone",
            Self::UpChirp => "an upward chirp",
            Self::DownChirp => "a downward chirp",
            Self::NoiseBurst => "a noise burst",
            Self::Silence => "silence",
        }
    }

    fn render<R: Rng>(self, rng: &mut R, out: &mut Vec<f32>) {
        let sr = SAMPLE_RATE as f64;
        let dur = EVENT_SAMPLES as f64 / sr;
        let chirp = |f0: f64, f1: f64, t: f64| 2.0 * PI * (f0 * t + (f1 - f0) * t * t / (2.0 * dur));
        for i in 0..EVENT_SAMPLES {
            let t = i as f64 / sr;
            let x = match self {
                Self::LowTone => (2.0 * PI * 220.0 * t).sin(),
                Self::HighTone => (2.0 * PI * 1760.0 * t).sin(),
                Self::UpChirp => chirp(300.0, 3000.0, t).sin(),
                Self::DownChirp => chirp(3000.0, 300.0, t).sin(),
                Self::NoiseBurst => rng.random_range(-1.0..1.0),
                Self::Silence => 0.0,
            };
            let edge = i.min(EVENT_SAMPLES - 1 - i);
            let gain = if edge < FADE { 0.5 - 0.5 * (PI * edge as f64 / FADE as f64).cos() } else { 1.0 };
            out.push((AMPLITUDE * gain * x) as f32);
        }
    }
}

/// Caption: event names joined by "followed by".
pub fn caption_for(events: &[Event]) -> String {
    events.iter().map(|e| e.name()).collect::<Vec<_>>().join(" followed by ")
}

pub fn render_events<R: Rng>(events: &[Event], rng: &mut R) -> Vec<f32> {
    let mut out = Vec::with_capacity(events.len() * EVENT_SAMPLES);
    for e in events {
        e.render(rng, &mut out);
    }
    out
}

/// In-memory synthetic clips: `(entry, samples, events)` for each of `n`
/// clips of 2–5 events.
pub fn synthesize_entries(n: usize, seed: u64) -> Vec<(ManifestEntry, Vec<f32>, Vec<Event>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let k = rng.random_range(2..=5);
            let events: Vec<Event> = (0..k).map(|_| Event::ALL[rng.random_range(0..Event::ALL.len())]).collect();
            let samples = render_events(&events, &mut rng);
            let entry = ManifestEntry {
                id: format!("synth_{i:04}"),
                audio: PathBuf::from(format!("synth_{i:04}.wav")),
                captions: vec![caption_for(&events)],
            };
            (entry, samples, events)
        })
        .collect()
}

/// Writes `n` clips and `manifest.jsonl` into `out`.
pub fn synthesize_corpus(n: usize, seed: u64, out: impl AsRef<Path>) -> Result<Manifest, DataError> {
    let out = out.as_ref();
    if n == 0 {
        return Err(DataError::InvalidSchedule("corpus size must be >= 1".into()));
    }
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let mut lines = String::new();
    let mut entries = Vec::with_capacity(n);
    for (entry, samples, _) in synthesize_entries(n, seed) {
        let path = out.join(&entry.audio);
        write_wav(&path, &samples, SAMPLE_RATE).map_err(io_err(&path))?;
        let line = serde_json::json!({
            "id": entry.id,
            "audio": entry.audio.to_string_lossy(),
            "captions": entry.captions,
        });
        lines.push_str(&line.to_string());
        lines.push('\n');
        entries.push(entry);
    }
    let mpath = out.join("manifest.jsonl");
    std::fs::write(&mpath, lines).map_err(io_err(&mpath))?;
    Ok(Manifest {
        root: out.to_path_buf(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations_and_captions() {
        for (entry, samples, events) in synthesize_entries(20, 3) {
            assert!((2..=5).contains(&events.len()));
            assert_eq!(samples.len(), 8000 * events.len());
            assert_eq!(entry.captions[0], caption_for(&events));
            assert!(samples.iter().all(|s| s.abs() <= 1.0));
        }
        assert_eq!(caption_for(&[Event::LowTone, Event::NoiseBurst]), "a low tone followed by a noise burst");
    }

    #[test]
    fn deterministic_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        synthesize_corpus(4, 7, a.path()).unwrap();
        synthesize_corpus(4, 7, b.path()).unwrap();
        for name in ["manifest.jsonl", "synth_0000.wav", "synth_0003.wav"] {
            assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        }
        let m = super::super::parse_manifest(a.path().join("manifest.jsonl")).unwrap();
        assert_eq!(m.entries.len(), 4);
    }
}
