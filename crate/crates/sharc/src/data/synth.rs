//! Synthetic diarization datasets: speaker centroids on the unit sphere,
//! turn-structured timelines, noisy per-segment embeddings.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::types::{EmbeddingSet, Segment};
use crate::{Error, Result};

/// Generation knobs. `spread` scales a unit-RMS isotropic noise vector, so
/// it reads as the expected perturbation norm relative to the unit-length
/// centroids; `spread = 0` reproduces the centroids exactly.
#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub n_recordings: usize,
    /// Inclusive range of speakers per recording; must stay within [1, 64].
    pub speakers: (usize, usize),
    /// Embedding dimension F.
    pub dim: usize,
    pub spread: f64,
    /// Inclusive range of turn lengths in seconds.
    pub turn_length: (f64, f64),
    /// Target recording duration range in seconds. A recording may run a
    /// little longer so that every speaker appears at least once.
    pub duration: (f64, f64),
    /// Minimum pairwise angle between centroids, radians.
    pub min_angle: f64,
    /// Segment window and shift in seconds.
    pub segment_length: f64,
    pub segment_shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_recordings: 10,
            speakers: (2, 5),
            dim: 16,
            spread: 0.1,
            turn_length: (2.0, 6.0),
            duration: (60.0, 120.0),
            min_angle: std::f64::consts::FRAC_PI_4,
            segment_length: 1.5,
            segment_shift: 0.75,
            seed: 7,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_recordings == 0 {
            return Err(Error::InvalidConfig("n_recordings must be positive".into()));
        }
        let (lo, hi) = self.speakers;
        if lo < 1 || hi > 64 || lo > hi {
            return Err(Error::InvalidConfig(format!(
                "speaker range ({lo}, {hi}) must lie within [1, 64]"
            )));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be positive".into()));
        }
        if self.spread < 0.0 || !self.spread.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "spread must be non-negative, got {}",
                self.spread
            )));
        }
        if self.segment_length <= 0.0 || self.segment_shift <= 0.0 {
            return Err(Error::InvalidConfig("segment grid must be positive".into()));
        }
        if self.turn_length.0 < self.segment_length || self.turn_length.0 > self.turn_length.1 {
            return Err(Error::InvalidConfig(format!(
                "turn length range ({}, {}) must be ordered and hold at least one {} s segment",
                self.turn_length.0, self.turn_length.1, self.segment_length
            )));
        }
        if self.duration.0 <= 0.0 || self.duration.0 > self.duration.1 {
            return Err(Error::InvalidConfig("duration range must be ordered".into()));
        }
        Ok(())
    }
}

const CENTROID_ATTEMPTS: usize = 10_000;

fn unit_centroid<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn sample_centroids<R: Rng>(
    n_speakers: usize,
    dim: usize,
    min_angle: f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let max_dot = min_angle.cos();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(n_speakers);
    let mut attempts = 0usize;
    while centroids.len() < n_speakers {
        if attempts >= CENTROID_ATTEMPTS {
            return Err(Error::InfeasibleAngles {
                speakers: n_speakers,
                min_angle_deg: min_angle.to_degrees(),
                attempts,
            });
        }
        attempts += 1;
        let candidate = unit_centroid(dim, rng);
        let ok = centroids.iter().all(|c| {
            let dot: f64 = c.iter().zip(&candidate).map(|(a, b)| a * b).sum();
            dot <= max_dot
        });
        if ok {
            centroids.push(candidate);
        }
    }
    Ok(centroids)
}

fn generate_recording(cfg: &SynthConfig, index: usize) -> Result<EmbeddingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(index as u64));
    let n_speakers = rng.gen_range(cfg.speakers.0..=cfg.speakers.1);
    let centroids = sample_centroids(n_speakers, cfg.dim, cfg.min_angle, &mut rng)?;
    let duration = rng.gen_range(cfg.duration.0..=cfg.duration.1);

    // Speaker turn sequence: lead with a shuffled pass over all speakers so
    // each one appears, then draw without immediate repeats.
    let mut rows: Vec<f64> = Vec::new();
    let mut segments = Vec::new();
    let mut labels = Vec::new();
    let mut t = 0.0f64;
    let mut prev: Option<usize> = None;
    let mut opening: Vec<usize> = (0..n_speakers).collect();
    opening.shuffle(&mut rng);
    let mut opening = opening.into_iter();
    while t < duration || opening.len() > 0 {
        let speaker = match opening.next() {
            Some(s) => s,
            None if n_speakers == 1 => 0,
            None => {
                let mut s = rng.gen_range(0..n_speakers);
                while Some(s) == prev {
                    s = rng.gen_range(0..n_speakers);
                }
                s
            }
        };
        prev = Some(speaker);
        let turn_len = rng.gen_range(cfg.turn_length.0..=cfg.turn_length.1);
        let n_segs = ((turn_len - cfg.segment_length) / cfg.segment_shift).floor() as usize + 1;
        for s in 0..n_segs {
            let onset = t + s as f64 * cfg.segment_shift;
            segments.push(Segment {
                onset,
                duration: cfg.segment_length,
            });
            labels.push(speaker);
            for d in 0..cfg.dim {
                let noise: f64 = rng.sample(StandardNormal);
                rows.push(centroids[speaker][d] + cfg.spread * noise / (cfg.dim as f64).sqrt());
            }
        }
        t += turn_len;
    }

    let n = labels.len();
    let embeddings = Array2::from_shape_vec((n, cfg.dim), rows)
        .map_err(|e| Error::Internal(format!("synthesis shape error: {e}")))?;
    Ok(
        EmbeddingSet::new(format!("synth{index:04}"), embeddings)
            .with_segments(segments)
            .with_labels(labels),
    )
}

/// Generates `n_recordings` labeled recordings, deterministically per seed.
/// Recordings are independent, so generation parallelizes cleanly.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<EmbeddingSet>> {
    cfg.validate()?;
    (0..cfg.n_recordings)
        .into_par_iter()
        .map(|i| generate_recording(cfg, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            n_recordings: 4,
            speakers: (2, 4),
            dim: 8,
            spread: 0.2,
            turn_length: (2.0, 4.0),
            duration: (20.0, 30.0),
            seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = synth_generate(&small_cfg()).unwrap();
        let b = synth_generate(&small_cfg()).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.recording_id, y.recording_id);
            assert_eq!(x.labels, y.labels);
            for (u, v) in x.embeddings.iter().zip(y.embeddings.iter()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn zero_spread_reproduces_centroids() {
        let cfg = SynthConfig {
            spread: 0.0,
            ..small_cfg()
        };
        let sets = synth_generate(&cfg).unwrap();
        for set in &sets {
            let labels = set.labels.as_ref().unwrap();
            // All rows of one label are identical and unit length.
            for (i, label) in labels.iter().enumerate() {
                let first = labels.iter().position(|l| l == label).unwrap();
                assert_eq!(
                    set.embeddings.row(i).to_vec(),
                    set.embeddings.row(first).to_vec()
                );
                let norm: f64 = set.embeddings.row(i).iter().map(|v| v * v).sum();
                assert!((norm - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn every_requested_speaker_appears() {
        let sets = synth_generate(&small_cfg()).unwrap();
        for set in &sets {
            let labels = set.labels.as_ref().unwrap();
            let distinct = {
                let mut l = labels.clone();
                l.sort_unstable();
                l.dedup();
                l
            };
            // Labels are dense speaker ids 0..n_speakers.
            assert_eq!(distinct, (0..distinct.len()).collect::<Vec<_>>());
            assert!(distinct.len() >= 2 && distinct.len() <= 4);
            assert_eq!(set.validate(), Ok(()));
        }
    }

    #[test]
    fn segment_grid_follows_length_and_shift() {
        let sets = synth_generate(&small_cfg()).unwrap();
        let set = &sets[0];
        let segments = set.segments.as_ref().unwrap();
        for seg in segments {
            assert_eq!(seg.duration, 1.5);
        }
        // Within a turn, consecutive onsets differ by the shift.
        let mut shifts = 0usize;
        for w in segments.windows(2) {
            let delta = w[1].onset - w[0].onset;
            if (delta - 0.75).abs() < 1e-9 {
                shifts += 1;
            }
        }
        assert!(shifts > 0);
    }

    #[test]
    fn centroids_respect_min_angle() {
        let cfg = SynthConfig {
            spread: 0.0,
            speakers: (4, 4),
            min_angle: 0.8,
            ..small_cfg()
        };
        let sets = synth_generate(&cfg).unwrap();
        for set in &sets {
            let labels = set.labels.as_ref().unwrap();
            let mut reps = Vec::new();
            for speaker in 0..4 {
                let row = labels.iter().position(|&l| l == speaker).unwrap();
                reps.push(set.embeddings.row(row).to_vec());
            }
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let dot: f64 = reps[i].iter().zip(&reps[j]).map(|(a, b)| a * b).sum();
                    assert!(dot <= 0.8f64.cos() + 1e-9);
                }
            }
        }
    }

    #[test]
    fn infeasible_angle_requests_error_out() {
        let cfg = SynthConfig {
            dim: 2,
            speakers: (40, 40),
            min_angle: 0.5,
            ..small_cfg()
        };
        match synth_generate(&cfg) {
            Err(Error::InfeasibleAngles { speakers, .. }) => assert_eq!(speakers, 40),
            other => panic!("expected infeasible-angle error, got {other:?}"),
        }
    }

    #[test]
    fn speaker_range_outside_bounds_is_rejected() {
        let cfg = SynthConfig {
            speakers: (0, 3),
            ..small_cfg()
        };
        assert!(matches!(
            synth_generate(&cfg),
            Err(Error::InvalidConfig(_))
        ));
        let cfg = SynthConfig {
            speakers: (2, 65),
            ..small_cfg()
        };
        assert!(matches!(
            synth_generate(&cfg),
            Err(Error::InvalidConfig(_))
        ));
    }
}
