use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equal-width partition of a rainfall range into `r` classes.
///
/// Intervals are half-open `[lo, hi)` except the last one, which is closed so
/// that `max_val` itself maps to class `r - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelBinning {
    min_val: f64,
    max_val: f64,
    r: usize,
}

impl LabelBinning {
    pub fn new(min_val: f64, max_val: f64, r: usize) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidInput(format!("class count must be >= 2, got {r}")));
        }
        if !(min_val.is_finite() && max_val.is_finite() && min_val < max_val) {
            return Err(Error::InvalidInput(format!(
                "label range needs min < max, got [{min_val}, {max_val}]"
            )));
        }
        Ok(LabelBinning { min_val, max_val, r })
    }

    /// Fit the range to the minimum and maximum of `values`.
    pub fn fit<I: IntoIterator<Item = f64>>(values: I, r: usize) -> Result<Self> {
        let (lo, hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo > hi {
            return Err(Error::InvalidInput("cannot fit label binning to no values".into()));
        }
        Self::new(lo, hi, r)
    }

    pub fn min_val(&self) -> f64 {
        self.min_val
    }

    pub fn max_val(&self) -> f64 {
        self.max_val
    }

    pub fn classes(&self) -> usize {
        self.r
    }

    pub fn width(&self) -> f64 {
        (self.max_val - self.min_val) / self.r as f64
    }

    pub fn bin(&self, v: f64) -> Result<usize> {
        if !(self.min_val..=self.max_val).contains(&v) {
            return Err(Error::OutOfRange(format!(
                "rainfall {v} outside fitted label range [{}, {}]",
                self.min_val, self.max_val
            )));
        }
        let pos = self.r as f64 * (v - self.min_val) / (self.max_val - self.min_val);
        Ok((pos.floor() as usize).min(self.r - 1))
    }
}
