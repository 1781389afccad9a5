//! Tracking/event ingestion, windowing into model-ready sequences, dataset
//! splitting, the on-disk dataset container, and the synthetic generator
//! used for desk-scale training.

mod container;
mod parse;
mod synth;
mod window;

pub use container::{load_dataset, save_dataset, Dataset, DatasetHeader};
pub use parse::{
    infer_attack_directions, merge_tracking, parse_events, parse_tracking, EventParseStats,
    TeamTracking, Units,
};
pub use synth::{synth_generate, SynthRule};
pub use window::{build_dataset, extract_window, DatasetBuild, SkipReason};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::zones::ZoneLabel;

/// Frames per second of the tracking stream.
pub const FRAME_RATE: f64 = 25.0;
/// Frames in one pre-pass window: [t-2s, t) at 25 Hz.
pub const SEQ_LEN: usize = 50;
/// 22 players + ball, (x, y) each.
pub const FEATURE_DIM: usize = 46;
/// Entity count per frame; the ball is the last entity.
pub const ENTITY_COUNT: usize = 23;
pub const BALL_ENTITY: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TeamSide {
    Home,
    Away,
}

impl TeamSide {
    pub fn opponent(self) -> TeamSide {
        match self {
            TeamSide::Home => TeamSide::Away,
            TeamSide::Away => TeamSide::Home,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackDirection {
    LeftToRight,
    RightToLeft,
}

impl AttackDirection {
    pub fn flipped(self) -> AttackDirection {
        match self {
            AttackDirection::LeftToRight => AttackDirection::RightToLeft,
            AttackDirection::RightToLeft => AttackDirection::LeftToRight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PassOutcome {
    Complete,
    Incomplete,
}

/// One tracking snapshot. Player slots hold `None` where the provider
/// reported no position (never a silent zero).
#[derive(Debug, Clone)]
pub struct Frame {
    pub frame_id: i64,
    pub t: f64,
    pub home_xy: Vec<Option<(f64, f64)>>,
    pub away_xy: Vec<Option<(f64, f64)>>,
    pub ball_xy: Option<(f64, f64)>,
}

/// One annotated pass, coordinates in meters.
#[derive(Debug, Clone)]
pub struct PassEvent {
    pub event_id: u32,
    pub team: TeamSide,
    pub passer: String,
    pub t_event: f64,
    pub start_xy: (f64, f64),
    pub end_xy: (f64, f64),
    pub outcome: PassOutcome,
    pub attack_direction: AttackDirection,
    /// Match period, used for side-swap when inferring attack direction.
    pub period: u32,
}

/// One training example: a 50x46 feature window, optional global context,
/// and the dual-axis zone label.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub features: Vec<f32>,
    pub context: Vec<f32>,
    pub label: ZoneLabel,
    pub event_id: u32,
}

impl SequenceSample {
    pub fn feature(&self, frame: usize, entity: usize, axis: usize) -> f32 {
        self.features[frame * FEATURE_DIM + entity * 2 + axis]
    }
}

/// Deterministic 70:10:20 split. Proportions land within one sample of
/// the exact ratios.
pub fn split_dataset(
    samples: Vec<SequenceSample>,
    seed: u64,
) -> Result<(Vec<SequenceSample>, Vec<SequenceSample>, Vec<SequenceSample>)> {
    let n = samples.len();
    if n < 10 {
        return Err(Error::Usage(format!(
            "split_dataset needs at least 10 samples, got {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = ((n as f64) * 0.7).round() as usize;
    let n_val = ((n as f64) * 0.1).round() as usize;
    let mut slots: Vec<Option<SequenceSample>> = samples.into_iter().map(Some).collect();
    let mut take = |range: &[usize]| -> Vec<SequenceSample> {
        range.iter().map(|&i| slots[i].take().unwrap()).collect()
    };
    let train = take(&idx[..n_train]);
    let val = take(&idx[n_train..n_train + n_val]);
    let test = take(&idx[n_train + n_val..]);
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zones::ZoneLabel;

    fn sample(id: u32) -> SequenceSample {
        SequenceSample {
            features: vec![0.0; SEQ_LEN * FEATURE_DIM],
            context: vec![],
            label: ZoneLabel { zx: 0, zy: 0 },
            event_id: id,
        }
    }

    #[test]
    fn split_ratios_100() {
        let samples: Vec<_> = (0..100).map(sample).collect();
        let (tr, va, te) = split_dataset(samples, 3).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (70, 10, 20));
    }

    #[test]
    fn split_deterministic_and_exhaustive() {
        let samples: Vec<_> = (0..53).map(sample).collect();
        let a = split_dataset(samples.clone(), 9).unwrap();
        let b = split_dataset(samples.clone(), 9).unwrap();
        let ids = |v: &[SequenceSample]| v.iter().map(|s| s.event_id).collect::<Vec<_>>();
        assert_eq!(ids(&a.0), ids(&b.0));
        assert_eq!(ids(&a.1), ids(&b.1));
        assert_eq!(ids(&a.2), ids(&b.2));

        let mut all: Vec<u32> = ids(&a.0);
        all.extend(ids(&a.1));
        all.extend(ids(&a.2));
        all.sort();
        assert_eq!(all, (0..53).collect::<Vec<_>>());
    }

    #[test]
    fn split_too_few_is_usage_error() {
        let samples: Vec<_> = (0..9).map(sample).collect();
        assert!(matches!(split_dataset(samples, 0), Err(Error::Usage(_))));
    }
}
