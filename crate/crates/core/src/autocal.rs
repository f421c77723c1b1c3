//! Black-body feedback calibration: a proportional controller on one
//! additive offset, paced by a settling period and gated by a deadband.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::BBox;
use crate::image::ThermalGrid;
use crate::simkit::{BlackBodySpec, FrameSource, SimError};

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("black-body roi {0:?} has no pixels inside the {1}x{2} frame")]
    RoiOutside(BBox, usize, usize),
    #[error("invalid calibration setting: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Source(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibConfig {
    pub k_p: f64,
    /// Minimum seconds between two control signals.
    pub settling_period: f64,
    /// Errors at or below this magnitude produce no signal, °C.
    pub error_threshold: f64,
}

impl Default for CalibConfig {
    fn default() -> Self {
        Self { k_p: 0.5, settling_period: 5.0, error_threshold: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibState {
    pub reference_temp: f64,
    /// Thermal pixel coordinates.
    pub roi: BBox,
    /// Added to every thermal reading downstream, °C.
    pub correction_offset: f64,
    pub k_p: f64,
    pub settling_period: f64,
    pub error_threshold: f64,
    pub last_signal_time: f64,
}

impl CalibState {
    pub fn new(black_body: &BlackBodySpec, cfg: &CalibConfig) -> Result<Self, CalibError> {
        if !(cfg.k_p > 0.0 && cfg.k_p < 2.0) {
            return Err(CalibError::InvalidConfig(format!("k_p {} outside (0, 2)", cfg.k_p)));
        }
        if !(cfg.settling_period > 0.0) || !(cfg.error_threshold >= 0.0) {
            return Err(CalibError::InvalidConfig("settling period must be positive, threshold non-negative".into()));
        }
        Ok(Self {
            reference_temp: black_body.reference_temp,
            roi: black_body.roi,
            correction_offset: 0.0,
            k_p: cfg.k_p,
            settling_period: cfg.settling_period,
            error_threshold: cfg.error_threshold,
            last_signal_time: f64::NEG_INFINITY,
        })
    }
}

/// Mean black-body ROI temperature with the current correction applied.
pub fn monitor_black_body(thermal: &ThermalGrid, state: &CalibState) -> Result<f64, CalibError> {
    let (xs, ys) = thermal.cells_in(&state.roi);
    let n = xs.len() * ys.len();
    if n == 0 {
        return Err(CalibError::RoiOutside(state.roi, thermal.width, thermal.height));
    }
    let mut sum = 0.0f64;
    for y in ys {
        for x in xs.clone() {
            sum += thermal.get(x, y) as f64;
        }
    }
    Ok(sum / n as f64 + state.correction_offset)
}

/// One controller evaluation. Returns true when a control signal was sent.
pub fn controller_step(state: &mut CalibState, measured: f64, now: f64) -> bool {
    let error = measured - state.reference_temp;
    if error.abs() <= state.error_threshold || now - state.last_signal_time < state.settling_period {
        return false;
    }
    state.correction_offset -= state.k_p * error;
    state.last_signal_time = now;
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibSample {
    pub time: f64,
    pub measured: f64,
    pub error: f64,
    pub offset_after: f64,
    pub signaled: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibTrace {
    pub samples: Vec<CalibSample>,
}

impl CalibTrace {
    /// Samples at which a control signal fired.
    pub fn signals(&self) -> impl Iterator<Item = &CalibSample> {
        self.samples.iter().filter(|s| s.signaled)
    }
}

/// Steps the controller once per frame of `source`.
pub fn run_calibration_loop(source: &dyn FrameSource, state: &mut CalibState) -> Result<CalibTrace, CalibError> {
    let mut trace = CalibTrace::default();
    for seq in 0..source.frame_count() {
        let frame = source.frame(seq)?;
        let measured = monitor_black_body(&frame.thermal, state)?;
        let signaled = controller_step(state, measured, frame.timestamp);
        trace.samples.push(CalibSample {
            time: frame.timestamp,
            measured,
            error: measured - state.reference_temp,
            offset_after: state.correction_offset,
            signaled,
        });
    }
    Ok(trace)
}

pub const TRACE_HEADER: &str = "time_s,measured_c,error_c,offset_c";

pub fn write_trace<W: Write>(trace: &CalibTrace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for s in &trace.samples {
        writeln!(w, "{:.3},{:.4},{:.4},{:.4}", s.time, s.measured, s.error, s.offset_after)?;
    }
    Ok(())
}
