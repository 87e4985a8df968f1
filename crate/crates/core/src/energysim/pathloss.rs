//! 3GPP TR 38.901 UMa and UMi-street-canyon path loss (table 7.4.1-1) and
//! LOS probability (table 7.4.2-1), for user heights up to 13 m.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The value the report uses in its breakpoint formula.
const SPEED_OF_LIGHT: f64 = 3.0e8;
/// Formulas are applied no closer than this 2D distance, metres.
pub const MIN_DISTANCE_M: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    UMa,
    UMi,
}

impl Scenario {
    /// Shadow-fading standard deviations `(LOS, NLOS)`, dB.
    pub fn shadow_sigma(self) -> (f64, f64) {
        match self {
            Scenario::UMa => (4.0, 6.0),
            Scenario::UMi => (4.0, 7.82),
        }
    }

    pub fn los_probability(self, d2d: f64) -> f64 {
        if d2d <= 18.0 {
            return 1.0;
        }
        let decay = match self {
            Scenario::UMa => 63.0,
            Scenario::UMi => 36.0,
        };
        18.0 / d2d + (-d2d / decay).exp() * (1.0 - 18.0 / d2d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossModel {
    pub scenario: Scenario,
    pub fc_ghz: f64,
    pub h_bs: f64,
    pub h_ut: f64,
}

impl PathLossModel {
    fn breakpoint(&self) -> f64 {
        // Effective environment height 1 m for both scenarios at h_ut <= 13 m.
        4.0 * (self.h_bs - 1.0) * (self.h_ut - 1.0) * self.fc_ghz * 1e9 / SPEED_OF_LIGHT
    }

    fn d3d(&self, d2d: f64) -> f64 {
        let dh = self.h_bs - self.h_ut;
        (d2d * d2d + dh * dh).sqrt()
    }

    pub fn los(&self, d2d: f64) -> f64 {
        let d2d = d2d.max(MIN_DISTANCE_M);
        let d3 = self.d3d(d2d);
        let f = self.fc_ghz.log10();
        let dh = self.h_bs - self.h_ut;
        let bp = self.breakpoint();
        match self.scenario {
            Scenario::UMa => {
                if d2d <= bp {
                    28.0 + 22.0 * d3.log10() + 20.0 * f
                } else {
                    28.0 + 40.0 * d3.log10() + 20.0 * f - 9.0 * (bp * bp + dh * dh).log10()
                }
            }
            Scenario::UMi => {
                if d2d <= bp {
                    32.4 + 21.0 * d3.log10() + 20.0 * f
                } else {
                    32.4 + 40.0 * d3.log10() + 20.0 * f - 9.5 * (bp * bp + dh * dh).log10()
                }
            }
        }
    }

    pub fn nlos(&self, d2d: f64) -> f64 {
        let d2d = d2d.max(MIN_DISTANCE_M);
        let d3 = self.d3d(d2d);
        let f = self.fc_ghz.log10();
        let prime = match self.scenario {
            Scenario::UMa => 13.54 + 39.08 * d3.log10() + 20.0 * f - 0.6 * (self.h_ut - 1.5),
            Scenario::UMi => 22.4 + 35.3 * d3.log10() + 21.3 * f - 0.3 * (self.h_ut - 1.5),
        };
        prime.max(self.los(d2d))
    }

    /// `Pr_los * PL_los + (1 - Pr_los) * PL_nlos`, dB.
    pub fn expected(&self, d2d: f64) -> Result<f64> {
        if !(d2d > 0.0 && d2d.is_finite()) {
            return Err(Error::InvalidInput(format!("2D distance must be positive, got {d2d}")));
        }
        let p = self.scenario.los_probability(d2d);
        Ok(p * self.los(d2d) + (1.0 - p) * self.nlos(d2d))
    }

    /// LOS-weighted shadow-fading standard deviation at `d2d`.
    pub fn shadow_sigma(&self, d2d: f64) -> f64 {
        let p = self.scenario.los_probability(d2d);
        let (sl, sn) = self.scenario.shadow_sigma();
        (p * sl * sl + (1.0 - p) * sn * sn).sqrt()
    }
}
