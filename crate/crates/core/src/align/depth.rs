//! Depth from horizontal disparity between the two sensors.

use serde::{Deserialize, Serialize};

/// `focal · baseline / disparity`; `None` outside the stereo regime
/// (non-positive or non-finite disparity).
pub fn depth_from_disparity(disparity: f64, focal: f64, baseline: f64) -> Option<f64> {
    if !(disparity > 0.0) || !disparity.is_finite() {
        return None;
    }
    let z = focal * baseline / disparity;
    z.is_finite().then_some(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceSource {
    Disparity,
    BoxHeight,
}

/// Point estimate plus an interval that brackets the true distance under
/// the stated measurement tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub meters: f64,
    pub near: f64,
    pub far: f64,
    pub source: DistanceSource,
}

impl DistanceEstimate {
    /// Interval from a disparity known to within `±tolerance` pixels.
    pub fn from_disparity(disparity: f64, focal: f64, baseline: f64, tolerance: f64) -> Option<Self> {
        let meters = depth_from_disparity(disparity, focal, baseline)?;
        let near = focal * baseline / (disparity + tolerance);
        let far = depth_from_disparity(disparity - tolerance, focal, baseline).unwrap_or(f64::INFINITY);
        Some(Self { meters, near, far, source: DistanceSource::Disparity })
    }

    /// Pinhole distance of an object of known physical height, with a
    /// relative tolerance.
    pub fn from_height(pixels: f64, meters_tall: f64, focal: f64, rel_tolerance: f64) -> Option<Self> {
        if !(pixels > 0.0) {
            return None;
        }
        let meters = focal * meters_tall / pixels;
        Some(Self {
            meters,
            near: meters * (1.0 - rel_tolerance),
            far: meters * (1.0 + rel_tolerance),
            source: DistanceSource::BoxHeight,
        })
    }

    /// True when the whole interval lies inside `[lo, hi]`.
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.near >= lo && self.far <= hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_cases() {
        assert!((depth_from_disparity(12.0, 400.0, 0.06).unwrap() - 2.0).abs() < 1e-12);
        let a = depth_from_disparity(5.0, 168.0, 0.06).unwrap();
        let b = depth_from_disparity(10.0, 168.0, 0.06).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
        assert!(depth_from_disparity(0.0, 168.0, 0.06).is_none());
        assert!(depth_from_disparity(-1.0, 168.0, 0.06).is_none());
    }

    #[test]
    fn interval_brackets_estimate() {
        let e = DistanceEstimate::from_disparity(5.04, 168.0, 0.06, 0.5).unwrap();
        assert!(e.near < e.meters && e.meters < e.far);
        assert!(e.within(0.9, 3.7));
        let far = DistanceEstimate::from_disparity(0.8, 168.0, 0.06, 1.0).unwrap();
        assert!(far.far.is_infinite() && !far.within(0.9, 3.7));
    }
}
