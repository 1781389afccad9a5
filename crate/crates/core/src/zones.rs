//! Pitch discretization: the coarse 35x34 and fine 105x68 grids, and the
//! meter <-> zone maps used for labelling and heatmap rendering.

use serde::{Deserialize, Serialize};

use crate::data::{AttackDirection, PassEvent};
use crate::error::{Error, Result};

pub const PITCH_LENGTH_M: f64 = 105.0;
pub const PITCH_WIDTH_M: f64 = 68.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScheme {
    Coarse,
    Fine,
}

impl std::str::FromStr for GridScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coarse" => Ok(GridScheme::Coarse),
            "fine" => Ok(GridScheme::Fine),
            other => Err(Error::Usage(format!(
                "unknown grid scheme '{other}' (expected coarse|fine)"
            ))),
        }
    }
}

/// A regular nx-by-ny discretization of the 105x68 m pitch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZoneGrid {
    pub scheme: GridScheme,
    pub nx: usize,
    pub ny: usize,
}

/// Dual-axis zone label: zero-indexed x and y zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneLabel {
    pub zx: usize,
    pub zy: usize,
}

impl ZoneGrid {
    pub fn new(scheme: GridScheme) -> Self {
        match scheme {
            GridScheme::Coarse => ZoneGrid { scheme, nx: 35, ny: 34 },
            GridScheme::Fine => ZoneGrid { scheme, nx: 105, ny: 68 },
        }
    }

    pub fn coarse() -> Self {
        Self::new(GridScheme::Coarse)
    }

    pub fn fine() -> Self {
        Self::new(GridScheme::Fine)
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_width_m(&self) -> f64 {
        PITCH_LENGTH_M / self.nx as f64
    }

    pub fn cell_height_m(&self) -> f64 {
        PITCH_WIDTH_M / self.ny as f64
    }

    /// Map meter coordinates to a zone label. Out-of-range coordinates
    /// clamp to the nearest edge cell; NaN is a data error.
    pub fn to_zone(&self, x_m: f64, y_m: f64) -> Result<ZoneLabel> {
        if x_m.is_nan() || y_m.is_nan() {
            return Err(Error::Data(format!(
                "NaN coordinate in to_zone: ({x_m}, {y_m})"
            )));
        }
        let zx = ((x_m / self.cell_width_m()).floor() as i64).clamp(0, self.nx as i64 - 1);
        let zy = ((y_m / self.cell_height_m()).floor() as i64).clamp(0, self.ny as i64 - 1);
        Ok(ZoneLabel { zx: zx as usize, zy: zy as usize })
    }

    /// Geometric center of a cell, in meters.
    pub fn zone_center(&self, label: ZoneLabel) -> Result<(f64, f64)> {
        if label.zx >= self.nx || label.zy >= self.ny {
            return Err(Error::Index(format!(
                "zone ({}, {}) out of bounds for {}x{} grid",
                label.zx, label.zy, self.nx, self.ny
            )));
        }
        Ok((
            (label.zx as f64 + 0.5) * self.cell_width_m(),
            (label.zy as f64 + 0.5) * self.cell_height_m(),
        ))
    }

    /// Label the pass end location after orientation normalization: the
    /// possession team always attacks toward increasing x.
    pub fn label_pass_end(&self, event: &PassEvent) -> Result<ZoneLabel> {
        let (x, y) = event.end_xy;
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Data(format!(
                "pass event {} has non-finite end location",
                event.event_id
            )));
        }
        let x = match event.attack_direction {
            AttackDirection::LeftToRight => x,
            AttackDirection::RightToLeft => PITCH_LENGTH_M - x,
        };
        self.to_zone(x, y)
    }
}
