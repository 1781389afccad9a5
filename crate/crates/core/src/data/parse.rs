//! Parsers for the delimited tracking/event formats (Metrica-style sample
//! data schema: three header rows, per-player x,y column pairs, ball last).

use std::path::Path;

use serde::Deserialize;

use super::{AttackDirection, Frame, PassEvent, PassOutcome, TeamSide};
use crate::error::{Error, Result};
use crate::zones::{PITCH_LENGTH_M, PITCH_WIDTH_M};

/// Coordinate units of an input file. Declared in an optional sidecar
/// `<file>.meta.json` ({"units": "normalized"|"meters"}); the sample-data
/// convention of normalized [0,1] coordinates is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Normalized,
    Meters,
}

#[derive(Deserialize)]
struct Sidecar {
    units: String,
}

fn read_units(path: &Path) -> Result<Units> {
    let sidecar = path.with_file_name(format!(
        "{}.meta.json",
        path.file_name().and_then(|n| n.to_str()).unwrap_or_default()
    ));
    if !sidecar.exists() {
        return Ok(Units::Normalized);
    }
    let text = std::fs::read_to_string(&sidecar)?;
    let meta: Sidecar = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("bad sidecar {}: {e}", sidecar.display())))?;
    match meta.units.as_str() {
        "normalized" => Ok(Units::Normalized),
        "meters" => Ok(Units::Meters),
        other => Err(Error::Data(format!(
            "unknown units '{other}' in {}",
            sidecar.display()
        ))),
    }
}

fn to_meters(units: Units, x: f64, y: f64) -> (f64, f64) {
    match units {
        Units::Normalized => (x * PITCH_LENGTH_M, y * PITCH_WIDTH_M),
        Units::Meters => (x, y),
    }
}

/// Per-frame positions for one team's tracking file.
#[derive(Debug, Clone)]
pub struct TeamTracking {
    pub side: TeamSide,
    pub player_ids: Vec<String>,
    pub frames: Vec<TeamFrame>,
}

#[derive(Debug, Clone)]
pub struct TeamFrame {
    pub frame_id: i64,
    pub t: f64,
    pub players: Vec<Option<(f64, f64)>>,
    pub ball: Option<(f64, f64)>,
}

fn parse_cell(cell: &str, line: usize) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Parse { line, msg: format!("non-numeric cell '{cell}'") })
}

/// Parse one team's tracking file. Missing cells are marked invalid, not
/// zeroed. Returns frames in file order.
pub fn parse_tracking(path: &Path, side: TeamSide) -> Result<TeamTracking> {
    let units = read_units(path)?;
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    // Two provider header rows (team name, jersey numbers), then the
    // column-name row: Frame,Time [s],<P1>,,<P2>,,...,Ball,
    let _team_row = lines.next();
    let _jersey_row = lines.next();
    let (name_line_no, name_row) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 3, msg: "missing column-name header row".into() })?;
    let cols: Vec<&str> = name_row.split(',').collect();
    if cols.len() < 4 || !cols.len().is_multiple_of(2) {
        return Err(Error::Parse {
            line: name_line_no + 1,
            msg: format!("expected Frame,Time plus x,y column pairs, got {} columns", cols.len()),
        });
    }
    let mut entity_names: Vec<String> = Vec::new();
    for pair in cols[2..].chunks(2) {
        let name = pair[0].trim();
        if name.is_empty() {
            return Err(Error::Parse {
                line: name_line_no + 1,
                msg: "unnamed entity column".into(),
            });
        }
        entity_names.push(name.to_string());
    }
    let ball_name = entity_names
        .pop()
        .ok_or_else(|| Error::Parse { line: name_line_no + 1, msg: "no entity columns".into() })?;
    if !ball_name.eq_ignore_ascii_case("ball") {
        return Err(Error::Parse {
            line: name_line_no + 1,
            msg: format!("last column pair must be Ball, found '{ball_name}'"),
        });
    }
    let n_players = entity_names.len();

    let mut frames = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 2 + 2 * (n_players + 1) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "expected {} cells, got {}",
                    2 + 2 * (n_players + 1),
                    cells.len()
                ),
            });
        }
        let frame_id = cells[0].trim().parse::<i64>().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad frame id '{}'", cells[0]),
        })?;
        let t = parse_cell(cells[1], line_no)?
            .ok_or_else(|| Error::Parse { line: line_no, msg: "missing time".into() })?;
        let mut players = Vec::with_capacity(n_players);
        for p in 0..n_players {
            let x = parse_cell(cells[2 + 2 * p], line_no)?;
            let y = parse_cell(cells[3 + 2 * p], line_no)?;
            players.push(match (x, y) {
                (Some(x), Some(y)) => Some(to_meters(units, x, y)),
                _ => None,
            });
        }
        let bx = parse_cell(cells[2 + 2 * n_players], line_no)?;
        let by = parse_cell(cells[3 + 2 * n_players], line_no)?;
        let ball = match (bx, by) {
            (Some(x), Some(y)) => Some(to_meters(units, x, y)),
            _ => None,
        };
        frames.push(TeamFrame { frame_id, t, players, ball });
    }

    Ok(TeamTracking { side, player_ids: entity_names, frames })
}

/// Join home and away tracking streams into full frames, validating the
/// 25 Hz frame contract.
pub fn merge_tracking(home: &TeamTracking, away: &TeamTracking) -> Result<Vec<Frame>> {
    if home.frames.len() != away.frames.len() {
        return Err(Error::Data(format!(
            "tracking streams disagree: {} home frames vs {} away",
            home.frames.len(),
            away.frames.len()
        )));
    }
    let mut frames = Vec::with_capacity(home.frames.len());
    for (h, a) in home.frames.iter().zip(&away.frames) {
        if h.frame_id != a.frame_id {
            return Err(Error::Data(format!(
                "frame id mismatch: home {} vs away {}",
                h.frame_id, a.frame_id
            )));
        }
        frames.push(Frame {
            frame_id: h.frame_id,
            t: h.t,
            home_xy: h.players.clone(),
            away_xy: a.players.clone(),
            ball_xy: h.ball.or(a.ball),
        });
    }
    for w in frames.windows(2) {
        let dt = w[1].t - w[0].t;
        if (dt - 1.0 / super::FRAME_RATE).abs() > 1e-6 {
            return Err(Error::Data(format!(
                "frames {} and {} are {dt:.6}s apart; expected 0.04s",
                w[0].frame_id, w[1].frame_id
            )));
        }
    }
    Ok(frames)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventParseStats {
    /// Non-pass rows, counted and discarded.
    pub non_pass: usize,
    /// Pass rows skipped because the end location is missing.
    pub missing_end: usize,
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
}

/// Parse an event file, retaining pass rows only.
pub fn parse_events(path: &Path) -> Result<(Vec<PassEvent>, EventParseStats)> {
    let units = read_units(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .clone();

    let col = |name: &str| -> Result<usize> {
        header_index(&headers, name)
            .ok_or_else(|| Error::Parse { line: 1, msg: format!("missing column '{name}'") })
    };
    let c_type = col("Type")?;
    let c_team = col("Team")?;
    let c_sx = col("Start X")?;
    let c_sy = col("Start Y")?;
    let c_ex = col("End X")?;
    let c_ey = col("End Y")?;
    let c_time = header_index(&headers, "Start Time [s]");
    let c_frame = header_index(&headers, "Start Frame");
    if c_time.is_none() && c_frame.is_none() {
        return Err(Error::Parse {
            line: 1,
            msg: "need 'Start Time [s]' or 'Start Frame' column".into(),
        });
    }
    let c_from = header_index(&headers, "From");
    let c_period = header_index(&headers, "Period");
    let c_outcome = header_index(&headers, "Outcome");

    let mut events = Vec::new();
    let mut stats = EventParseStats::default();
    let mut next_id: u32 = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |i: usize| rec.get(i).unwrap_or("").trim();

        if !get(c_type).eq_ignore_ascii_case("pass") {
            stats.non_pass += 1;
            continue;
        }
        let id = next_id;
        next_id += 1;

        let team = match get(c_team).to_ascii_lowercase().as_str() {
            "home" => TeamSide::Home,
            "away" => TeamSide::Away,
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown team '{other}' (expected Home|Away)"),
                })
            }
        };
        let ex = parse_cell(get(c_ex), line)?;
        let ey = parse_cell(get(c_ey), line)?;
        let (ex, ey) = match (ex, ey) {
            (Some(x), Some(y)) => (x, y),
            _ => {
                log::warn!("event line {line}: pass missing end location, skipped");
                stats.missing_end += 1;
                continue;
            }
        };
        let sx = parse_cell(get(c_sx), line)?.unwrap_or(f64::NAN);
        let sy = parse_cell(get(c_sy), line)?.unwrap_or(f64::NAN);
        let t_event = match c_time {
            Some(i) => parse_cell(get(i), line)?
                .ok_or_else(|| Error::Parse { line, msg: "missing start time".into() })?,
            None => {
                let f = get(c_frame.unwrap()).parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: "bad start frame".into(),
                })?;
                f / super::FRAME_RATE
            }
        };
        let period = match c_period {
            Some(i) if !get(i).is_empty() => get(i).parse::<u32>().map_err(|_| Error::Parse {
                line,
                msg: format!("bad period '{}'", get(i)),
            })?,
            _ => 1,
        };
        let outcome = match c_outcome {
            Some(i) if get(i).eq_ignore_ascii_case("incomplete") => PassOutcome::Incomplete,
            _ => PassOutcome::Complete,
        };
        events.push(PassEvent {
            event_id: id,
            team,
            passer: c_from.map(|i| get(i).to_string()).unwrap_or_default(),
            t_event,
            start_xy: to_meters(units, sx, sy),
            end_xy: to_meters(units, ex, ey),
            outcome,
            attack_direction: AttackDirection::LeftToRight,
            period,
        });
    }
    Ok((events, stats))
}

/// Fill in attack directions from team shapes: in the first frame where
/// both teams are visible, the team with the smaller mean x defends the
/// left goal and attacks left-to-right; sides swap each period.
pub fn infer_attack_directions(frames: &[Frame], events: &mut [PassEvent]) -> Result<()> {
    let mean_x = |side: &[Option<(f64, f64)>]| {
        let xs: Vec<f64> = side.iter().flatten().map(|p| p.0).collect();
        if xs.is_empty() {
            None
        } else {
            Some(xs.iter().sum::<f64>() / xs.len() as f64)
        }
    };
    let mut home_l2r_first_period = true;
    let mut found = false;
    for f in frames {
        if let (Some(h), Some(a)) = (mean_x(&f.home_xy), mean_x(&f.away_xy)) {
            home_l2r_first_period = h <= a;
            found = true;
            break;
        }
    }
    if !found {
        return Err(Error::Data(
            "cannot infer attack directions: no frame shows both teams".into(),
        ));
    }
    for e in events.iter_mut() {
        let mut l2r = match e.team {
            TeamSide::Home => home_l2r_first_period,
            TeamSide::Away => !home_l2r_first_period,
        };
        if e.period % 2 == 0 {
            l2r = !l2r;
        }
        e.attack_direction = if l2r {
            AttackDirection::LeftToRight
        } else {
            AttackDirection::RightToLeft
        };
    }
    Ok(())
}
