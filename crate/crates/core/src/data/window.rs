//! Windowing pass events into 50-frame pre-pass sequences.

use super::{
    AttackDirection, Frame, PassEvent, SequenceSample, ENTITY_COUNT, FEATURE_DIM,
    SEQ_LEN, TeamSide,
};
use crate::zones::{ZoneGrid, PITCH_LENGTH_M, PITCH_WIDTH_M};

/// Longest run of invalid frames that is still interpolated (0.4 s).
const MAX_GAP: usize = 10;

/// Why a pass produced no training sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// Fewer than 50 frames precede the event.
    InsufficientHistory,
    /// Some entity had a gap of more than `MAX_GAP` consecutive frames.
    GapTooLong,
    /// End location missing or not finite.
    MissingEnd,
}

/// Fill invalid runs in an entity track. Runs of up to `MAX_GAP` frames
/// are linearly interpolated between valid neighbours (held flat at the
/// window edges); anything longer rejects the track.
fn fill_track(track: &mut [Option<(f64, f64)>]) -> Result<(), SkipReason> {
    let n = track.len();
    let mut i = 0;
    while i < n {
        if track[i].is_some() {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < n && track[i].is_none() {
            i += 1;
        }
        let run_len = i - run_start;
        if run_len > MAX_GAP {
            return Err(SkipReason::GapTooLong);
        }
        let before = run_start.checked_sub(1).and_then(|j| track[j]);
        let after = if i < n { track[i] } else { None };
        match (before, after) {
            (Some(a), Some(b)) => {
                let steps = (run_len + 1) as f64;
                for (k, slot) in track[run_start..i].iter_mut().enumerate() {
                    let w = (k + 1) as f64 / steps;
                    *slot = Some((a.0 + (b.0 - a.0) * w, a.1 + (b.1 - a.1) * w));
                }
            }
            (Some(a), None) => track[run_start..i].iter_mut().for_each(|s| *s = Some(a)),
            (None, Some(b)) => track[run_start..i].iter_mut().for_each(|s| *s = Some(b)),
            (None, None) => return Err(SkipReason::GapTooLong),
        }
    }
    Ok(())
}

/// Pick the 11 tracked players used for the feature layout: the first 11
/// roster slots with any valid position inside the window.
fn pick_players(
    frames: &[&Frame],
    side: TeamSide,
) -> Result<Vec<usize>, SkipReason> {
    let roster_len = match side {
        TeamSide::Home => frames[0].home_xy.len(),
        TeamSide::Away => frames[0].away_xy.len(),
    };
    let mut picked = Vec::with_capacity(11);
    for slot in 0..roster_len {
        let any_valid = frames.iter().any(|f| match side {
            TeamSide::Home => f.home_xy.get(slot).copied().flatten().is_some(),
            TeamSide::Away => f.away_xy.get(slot).copied().flatten().is_some(),
        });
        if any_valid {
            picked.push(slot);
            if picked.len() == 11 {
                return Ok(picked);
            }
        }
    }
    Err(SkipReason::GapTooLong)
}

/// Cut the half-open window [t-2s, t) for one pass and normalize it into
/// a model-ready sample. Entity order: possession team, opponents, ball.
pub fn extract_window(
    frames: &[Frame],
    event: &PassEvent,
    grid: &ZoneGrid,
) -> Result<SequenceSample, SkipReason> {
    if !event.end_xy.0.is_finite() || !event.end_xy.1.is_finite() {
        return Err(SkipReason::MissingEnd);
    }
    // First frame at or after the event; the window is the 50 frames before it.
    let end = frames.partition_point(|f| f.t < event.t_event - 1e-9);
    if end < SEQ_LEN {
        return Err(SkipReason::InsufficientHistory);
    }
    let window: Vec<&Frame> = frames[end - SEQ_LEN..end].iter().collect();

    let (possession, opponents) = match event.team {
        TeamSide::Home => (TeamSide::Home, TeamSide::Away),
        TeamSide::Away => (TeamSide::Away, TeamSide::Home),
    };
    let pos_slots = pick_players(&window, possession)?;
    let opp_slots = pick_players(&window, opponents)?;

    // entity tracks in layout order
    let mut tracks: Vec<Vec<Option<(f64, f64)>>> = Vec::with_capacity(ENTITY_COUNT);
    let grab = |side: TeamSide, slot: usize| -> Vec<Option<(f64, f64)>> {
        window
            .iter()
            .map(|f| match side {
                TeamSide::Home => f.home_xy.get(slot).copied().flatten(),
                TeamSide::Away => f.away_xy.get(slot).copied().flatten(),
            })
            .collect()
    };
    for &slot in &pos_slots {
        tracks.push(grab(possession, slot));
    }
    for &slot in &opp_slots {
        tracks.push(grab(opponents, slot));
    }
    tracks.push(window.iter().map(|f| f.ball_xy).collect());

    for track in tracks.iter_mut() {
        fill_track(track)?;
    }

    let flip = event.attack_direction == AttackDirection::RightToLeft;
    let mut features = vec![0.0f32; SEQ_LEN * FEATURE_DIM];
    for (e, track) in tracks.iter().enumerate() {
        for (f, pos) in track.iter().enumerate() {
            let (mut x, y) = pos.expect("filled track");
            if flip {
                x = PITCH_LENGTH_M - x;
            }
            features[f * FEATURE_DIM + e * 2] = (x / PITCH_LENGTH_M).clamp(0.0, 1.0) as f32;
            features[f * FEATURE_DIM + e * 2 + 1] = (y / PITCH_WIDTH_M).clamp(0.0, 1.0) as f32;
        }
    }

    let label = grid.label_pass_end(event).map_err(|_| SkipReason::MissingEnd)?;
    Ok(SequenceSample { features, context: vec![], label, event_id: event.event_id })
}

/// Result of windowing a full event list, with the skip bookkeeping that
/// keeps pass counts conserved.
#[derive(Debug, Default)]
pub struct DatasetBuild {
    pub samples: Vec<SequenceSample>,
    pub skipped_history: usize,
    pub skipped_gaps: usize,
    pub skipped_missing_end: usize,
}

pub fn build_dataset(frames: &[Frame], events: &[PassEvent], grid: &ZoneGrid) -> DatasetBuild {
    let mut build = DatasetBuild::default();
    for event in events {
        match extract_window(frames, event, grid) {
            Ok(sample) => build.samples.push(sample),
            Err(SkipReason::InsufficientHistory) => build.skipped_history += 1,
            Err(SkipReason::GapTooLong) => build.skipped_gaps += 1,
            Err(SkipReason::MissingEnd) => build.skipped_missing_end += 1,
        }
    }
    build
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PassOutcome, BALL_ENTITY};

    fn frame(i: i64, ball_x: f64) -> Frame {
        let home: Vec<Option<(f64, f64)>> =
            (0..11).map(|p| Some((10.0 + p as f64, 30.0))).collect();
        let away: Vec<Option<(f64, f64)>> =
            (0..11).map(|p| Some((90.0 - p as f64, 40.0))).collect();
        Frame {
            frame_id: i,
            t: i as f64 / 25.0,
            home_xy: home,
            away_xy: away,
            ball_xy: Some((ball_x, 34.0)),
        }
    }

    fn event(t: f64, dir: AttackDirection) -> PassEvent {
        PassEvent {
            event_id: 1,
            team: TeamSide::Home,
            passer: "P3".into(),
            t_event: t,
            start_xy: (50.0, 34.0),
            end_xy: (10.0, 34.0),
            outcome: PassOutcome::Complete,
            attack_direction: dir,
            period: 1,
        }
    }

    #[test]
    fn window_arithmetic_event_at_two_seconds() {
        let frames: Vec<Frame> = (0..60).map(|i| frame(i, 50.0)).collect();
        let g = ZoneGrid::coarse();
        let s = extract_window(&frames, &event(2.0, AttackDirection::LeftToRight), &g).unwrap();
        // frames 0..49: ball x feature constant
        assert_eq!(s.features.len(), SEQ_LEN * FEATURE_DIM);
        let bx = s.feature(0, BALL_ENTITY, 0);
        assert!((bx - (50.0 / 105.0) as f32).abs() < 1e-6);
    }

    #[test]
    fn insufficient_history_skipped() {
        let frames: Vec<Frame> = (0..30).map(|i| frame(i, 50.0)).collect();
        let g = ZoneGrid::coarse();
        assert_eq!(
            extract_window(&frames, &event(2.0, AttackDirection::LeftToRight), &g),
            Err(SkipReason::InsufficientHistory)
        );
    }

    #[test]
    fn mirror_on_right_to_left_attack() {
        let frames: Vec<Frame> = (0..60).map(|i| frame(i, 10.0)).collect();
        let g = ZoneGrid::coarse();
        let s = extract_window(&frames, &event(2.0, AttackDirection::RightToLeft), &g).unwrap();
        // ball at x=10 mirrors to 95 m -> normalized 95/105
        let bx = s.feature(0, BALL_ENTITY, 0);
        assert!((bx - (95.0 / 105.0) as f32).abs() < 1e-6);
        // pass end at 10 m labels like 95 m
        assert_eq!(s.label.zx, g.to_zone(95.0, 34.0).unwrap().zx);
    }

    #[test]
    fn flip_is_involution() {
        let frames: Vec<Frame> = (0..60).map(|i| frame(i, 30.0)).collect();
        let g = ZoneGrid::coarse();
        let once = extract_window(&frames, &event(2.0, AttackDirection::RightToLeft), &g).unwrap();
        // flipping the already-flipped coordinates restores the original
        let twice_x = 1.0 - once.feature(0, BALL_ENTITY, 0);
        assert!((twice_x - (30.0 / 105.0) as f32).abs() < 1e-6);
    }

    #[test]
    fn gap_interpolation_oracle() {
        let mut frames: Vec<Frame> = (0..60).map(|i| frame(i, 50.0)).collect();
        // knock out home player 0 for frames 10..14 inside the window
        for f in frames.iter_mut().take(14).skip(10) {
            f.home_xy[0] = None;
        }
        // set bracketing positions for a known line
        frames[9].home_xy[0] = Some((10.0, 30.0));
        frames[14].home_xy[0] = Some((20.0, 40.0));
        let g = ZoneGrid::coarse();
        let s = extract_window(&frames, &event(2.0, AttackDirection::LeftToRight), &g).unwrap();
        // frame 12 is 3/5 of the way from frame 9 to 14
        let x = s.feature(12, 0, 0) as f64 * PITCH_LENGTH_M;
        let y = s.feature(12, 0, 1) as f64 * PITCH_WIDTH_M;
        assert!((x - 16.0).abs() < 1e-4, "x {x}");
        assert!((y - 36.0).abs() < 1e-4, "y {y}");
    }

    #[test]
    fn long_gap_skips_sample() {
        let mut frames: Vec<Frame> = (0..60).map(|i| frame(i, 50.0)).collect();
        for f in frames.iter_mut().take(32).skip(20) {
            f.away_xy[3] = None; // 12 > MAX_GAP
        }
        let g = ZoneGrid::coarse();
        assert_eq!(
            extract_window(&frames, &event(2.0, AttackDirection::LeftToRight), &g),
            Err(SkipReason::GapTooLong)
        );
    }

    #[test]
    fn features_in_unit_range() {
        let frames: Vec<Frame> = (0..60).map(|i| frame(i, 50.0)).collect();
        let g = ZoneGrid::coarse();
        let s = extract_window(&frames, &event(2.0, AttackDirection::LeftToRight), &g).unwrap();
        assert!(s.features.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
