//! Rolling-window AR p-values.

use peer_ar::{ar_fe, IvSpec, Panel, PeerStructure, Variant};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RollingSpec {
    pub window: usize,
    pub step: usize,
}

impl Default for RollingSpec {
    fn default() -> Self {
        Self { window: 50, step: 1 }
    }
}

impl RollingSpec {
    pub fn validate(&self, t: usize) -> Result<(), CliError> {
        if self.window < 2 || self.window > t {
            return Err(CliError::Usage(format!(
                "window {} must lie in [2, {t}]",
                self.window
            )));
        }
        if self.step == 0 {
            return Err(CliError::Usage("step must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindowOutcome {
    Tested { statistic: f64, p_chisq: f64, k_star: usize },
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingPoint {
    /// First period of the window, 1-based.
    pub start: usize,
    /// Last period of the window, 1-based.
    pub end: usize,
    pub outcome: WindowOutcome,
}

/// Runs the fixed-effects test on periods `[s, s + window - 1]` for
/// `s = 1, 1 + step, ...`. Windows that fail are reported, not fatal.
pub fn rolling_ar(
    p: &Panel,
    peers: &PeerStructure,
    spec: RollingSpec,
    iv: &IvSpec,
    variant: Variant,
) -> Result<Vec<RollingPoint>, CliError> {
    spec.validate(p.t)?;
    let mut out = Vec::new();
    let mut start = 0;
    while start + spec.window <= p.t {
        let outcome = match p
            .periods(start, spec.window)
            .and_then(|w| ar_fe(&w, peers, iv, variant))
        {
            Ok(r) => WindowOutcome::Tested {
                statistic: r.statistic,
                p_chisq: r.p_chisq.unwrap_or(f64::NAN),
                k_star: r.k,
            },
            Err(e) => WindowOutcome::Skipped {
                reason: e.to_string(),
            },
        };
        out.push(RollingPoint {
            start: start + 1,
            end: start + spec.window,
            outcome,
        });
        start += spec.step;
    }
    Ok(out)
}
