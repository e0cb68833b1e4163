//! Per-minute Wins-Produced outcome from basketball box scores.

use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoxScore {
    pub three_pt: f64,
    pub two_pt: f64,
    pub ft: f64,
    pub reb: f64,
    pub stl: f64,
    pub blk: f64,
    /// Missed field goals.
    pub mfg: f64,
    /// Missed free throws.
    pub mft: f64,
    pub to: f64,
}

impl BoxScore {
    /// CSV column names, in the order of [`BoxScore::from_array`].
    pub const COLUMNS: [&'static str; 9] =
        ["three_pt", "two_pt", "ft", "reb", "stl", "blk", "mfg", "mft", "to"];
    pub const MINUTES: &'static str = "mins";

    pub fn from_array(v: [f64; 9]) -> Self {
        Self {
            three_pt: v[0],
            two_pt: v[1],
            ft: v[2],
            reb: v[3],
            stl: v[4],
            blk: v[5],
            mfg: v[6],
            mft: v[7],
            to: v[8],
        }
    }
}

pub fn wins_produced(s: &BoxScore, minutes: f64) -> Result<f64, CliError> {
    if !(minutes > 0.0) {
        return Err(CliError::Usage(format!("minutes must be positive, got {minutes}")));
    }
    let total = 0.064 * s.three_pt + 0.032 * s.two_pt + 0.017 * s.ft + 0.034 * s.reb
        + 0.033 * s.stl
        + 0.020 * s.blk
        - 0.034 * s.mfg
        - 0.015 * s.mft
        - 0.034 * s.to;
    Ok(total / minutes)
}
