//! Capture-zone screening: prioritized per-frame measurement, refinement of
//! each person's reported temperature across frames, and alerting.

mod render;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{AlignmentResult, Mapping};
use crate::domain::BBox;
use crate::image::ThermalGrid;

pub use render::{render_annotations, text_width, GLYPH_H, GLYPH_W};

#[derive(Debug, Error, PartialEq)]
pub enum ScreeningError {
    #[error("invalid screening setting: {0}")]
    InvalidConfig(String),
}

/// Measurement region, ordered from most to least trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionPriority {
    EyeForehead = 1,
    Face = 2,
    Head = 3,
}

impl RegionPriority {
    pub fn rank(self) -> u8 {
        self as u8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RegionPriority::EyeForehead => "eye_forehead",
            RegionPriority::Face => "face",
            RegionPriority::Head => "head",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "eye_forehead" => Some(RegionPriority::EyeForehead),
            "face" => Some(RegionPriority::Face),
            "head" => Some(RegionPriority::Head),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreeningConfig {
    /// Visual-frame region of interest; people whose anchor box centre lies
    /// outside are ignored.
    pub roi: BBox,
    pub capture_zone: (f64, f64),
    pub fever_threshold: f64,
    pub plausible_range: (f64, f64),
    pub min_readings: usize,
    pub delta_realert: f64,
    /// Seconds a record survives without a new reading.
    pub cache_ttl: f64,
    /// Eye/forehead band size as fractions of the face box (width, height).
    pub eye_band: (f64, f64),
    pub face_fraction: (f64, f64),
    pub head_fraction: (f64, f64),
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self {
            roi: BBox::new(0.0, 0.0, 1280.0, 960.0).expect("static box"),
            capture_zone: (0.9, 3.7),
            fever_threshold: 38.0,
            plausible_range: (30.0, 45.0),
            min_readings: 3,
            delta_realert: 0.3,
            cache_ttl: 10.0,
            eye_band: (0.6, 0.4),
            face_fraction: (0.5, 0.5),
            head_fraction: (0.4, 0.4),
        }
    }
}

impl ScreeningConfig {
    pub fn validate(&self) -> Result<(), ScreeningError> {
        let bad = |m: &str| Err(ScreeningError::InvalidConfig(m.into()));
        let ordered = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 < r.1;
        if !ordered(self.capture_zone) || !ordered(self.plausible_range) {
            return bad("capture_zone and plausible_range need min < max");
        }
        if !(self.plausible_range.0..=self.plausible_range.1).contains(&self.fever_threshold) {
            return bad("fever_threshold must lie inside plausible_range");
        }
        if self.min_readings == 0 || !(self.delta_realert >= 0.0) || !(self.cache_ttl > 0.0) {
            return bad("min_readings and cache_ttl must be positive, delta_realert non-negative");
        }
        let frac = |f: (f64, f64)| f.0 > 0.0 && f.0 <= 1.0 && f.1 > 0.0 && f.1 <= 1.0;
        if !frac(self.eye_band) || !frac(self.face_fraction) || !frac(self.head_fraction) {
            return bad("sampling fractions must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Everything the detector reported for one tracked person in one frame,
/// in visual coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PersonObservation {
    pub id: u64,
    pub body: Option<BBox>,
    pub face: Option<BBox>,
    pub head: Option<BBox>,
    pub eye: Option<BBox>,
    /// Simulator identity, carried through for evaluation only.
    pub truth_id: Option<u32>,
}

impl PersonObservation {
    /// Box used for ROI tests and annotation: body, else head, face, eye.
    pub fn anchor(&self) -> Option<BBox> {
        self.body.or(self.head).or(self.face).or(self.eye)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub person_id: u64,
    pub frame_seq: u64,
    pub priority: RegionPriority,
    pub raw_temp: f64,
    pub corrected_temp: f64,
    pub distance: f64,
    pub low_confidence: bool,
    /// Thermal-frame area the maximum was taken over.
    pub sample_box: BBox,
    /// Calibration offset included in `raw_temp`.
    pub calibration_offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningRecord {
    pub person_id: u64,
    pub readings: Vec<Reading>,
    pub best_priority_seen: Option<RegionPriority>,
    pub reported_temp: Option<f64>,
    pub alerted_temp: Option<f64>,
    pub alerted_priority: Option<RegionPriority>,
    pub entered_zone: bool,
    pub last_seen: f64,
    pub truth_id: Option<u32>,
}

impl ScreeningRecord {
    fn new(person_id: u64, now: f64) -> Self {
        Self {
            person_id,
            readings: Vec::new(),
            best_priority_seen: None,
            reported_temp: None,
            alerted_temp: None,
            alerted_priority: None,
            entered_zone: false,
            last_seen: now,
            truth_id: None,
        }
    }

    /// Highest corrected temperature among readings of the best priority
    /// present, once at least `min_readings` readings exist.
    pub fn current_report(&self, min_readings: usize) -> Option<(f64, RegionPriority)> {
        if self.readings.len() < min_readings {
            return None;
        }
        let best = self.readings.iter().map(|r| r.priority).min()?;
        let temp = self
            .readings
            .iter()
            .filter(|r| r.priority == best)
            .map(|r| r.corrected_temp)
            .fold(f64::NEG_INFINITY, f64::max);
        Some((temp, best))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertReason {
    First,
    HigherPriority,
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub person_id: u64,
    pub temp: f64,
    pub priority: RegionPriority,
    pub frame_seq: u64,
    pub reason: AlertReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_id: Option<u32>,
}

/// Per-person box and label for the operator view.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub person_id: u64,
    pub bbox: BBox,
    pub temp: Option<f64>,
    pub fever: bool,
    pub in_zone: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScreeningState {
    pub last_seq: Option<u64>,
    pub records: BTreeMap<u64, ScreeningRecord>,
}

impl ScreeningState {
    pub fn new() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameScreening {
    pub readings: Vec<Reading>,
    pub annotations: Vec<Annotation>,
}

/// Result of [`measure_temperature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub raw_temp: f64,
    pub priority: RegionPriority,
    /// Thermal-frame area the maximum was taken over.
    pub sample_box: BBox,
}

/// Eye/forehead band: centred on the eye box, sized from the face box (or
/// head box, or the eye box itself), bottom edge on the eye line.
pub fn eye_band(eye: &BBox, reference: Option<&BBox>, fractions: (f64, f64)) -> Option<BBox> {
    let (w, h) = match reference {
        Some(r) => (r.w() * fractions.0, r.h() * fractions.1),
        None => (eye.w(), eye.h()),
    };
    let cx = eye.center().x;
    BBox::new(cx - 0.5 * w, eye.bottom() - h, w, h).ok()
}

fn thermal_frame(thermal: &ThermalGrid) -> BBox {
    BBox::new(0.0, 0.0, thermal.width as f64, thermal.height as f64).expect("non-empty grid")
}

/// Maximum of `thermal + offset` over the cells whose centres lie in `b`;
/// a box too small to contain any centre reads the cell under its centre.
pub fn max_in_box(thermal: &ThermalGrid, b: &BBox, offset: f64) -> Option<f64> {
    let (xs, ys) = thermal.cells_in(b);
    let mut best = f64::NEG_INFINITY;
    for y in ys {
        for x in xs.clone() {
            best = best.max(thermal.get(x, y) as f64);
        }
    }
    if best == f64::NEG_INFINITY {
        let c = b.center();
        if c.x < 0.0 || c.y < 0.0 || c.x >= thermal.width as f64 || c.y >= thermal.height as f64 {
            return None;
        }
        best = thermal.get(c.x as usize, c.y as usize) as f64;
    }
    Some(best + offset)
}

/// Picks the highest-priority region available, maps it into the thermal
/// frame and takes the maximum over its sampling area. A region that maps
/// entirely outside the frame yields to the next one; an implausible
/// maximum rejects the measurement.
pub fn measure_temperature(
    obs: &PersonObservation,
    mapping: &Mapping,
    thermal: &ThermalGrid,
    offset: f64,
    cfg: &ScreeningConfig,
) -> Option<Measurement> {
    let frame = thermal_frame(thermal);
    let candidates = [
        (RegionPriority::EyeForehead, obs.eye.and_then(|e| eye_band(&e, obs.face.as_ref().or(obs.head.as_ref()), cfg.eye_band)), (1.0, 1.0)),
        (RegionPriority::Face, obs.face, cfg.face_fraction),
        (RegionPriority::Head, obs.head, cfg.head_fraction),
    ];
    for (priority, region, frac) in candidates {
        let Some(region) = region else { continue };
        let Some(mapped) = mapping.map_box(&region) else { continue };
        let sample = mapped.central_fraction(frac.0, frac.1);
        let Some(clipped) = sample.intersection(&frame) else { continue };
        let raw = max_in_box(thermal, &clipped, offset)?;
        if !(cfg.plausible_range.0..=cfg.plausible_range.1).contains(&raw) {
            return None;
        }
        return Some(Measurement { raw_temp: raw, priority, sample_box: clipped });
    }
    None
}

/// Per-frame screening. Returns `None`, leaving `state` untouched, for a
/// frame whose sequence number does not advance.
#[allow(clippy::too_many_arguments)]
pub fn process_frame(
    state: &mut ScreeningState,
    frame_seq: u64,
    now: f64,
    people: &[PersonObservation],
    alignment: &AlignmentResult,
    thermal: &ThermalGrid,
    offset: f64,
    cfg: &ScreeningConfig,
    correct: &dyn Fn(f64, f64) -> f64,
) -> Option<FrameScreening> {
    if state.last_seq.is_some_and(|last| frame_seq <= last) {
        return None;
    }
    state.last_seq = Some(frame_seq);
    let mut out = FrameScreening::default();
    let mut order: Vec<&PersonObservation> = people.iter().collect();
    order.sort_by_key(|p| p.id);
    for obs in order {
        let Some(anchor) = obs.anchor() else { continue };
        if !cfg.roi.contains(anchor.center()) {
            continue;
        }
        let aligned = alignment.get(obs.id);
        let distance = aligned.and_then(|a| a.distance);
        let in_zone = distance.is_some_and(|d| d.within(cfg.capture_zone.0, cfg.capture_zone.1));
        if let (true, Some(a), Some(d)) = (in_zone, aligned, distance) {
            if let Some(m) = measure_temperature(obs, &a.mapping, thermal, offset, cfg) {
                let reading = Reading {
                    person_id: obs.id,
                    frame_seq,
                    priority: m.priority,
                    raw_temp: m.raw_temp,
                    corrected_temp: correct(m.raw_temp, d.meters),
                    distance: d.meters,
                    low_confidence: a.low_confidence,
                    sample_box: m.sample_box,
                    calibration_offset: offset,
                    truth_id: obs.truth_id,
                };
                let rec = state.records.entry(obs.id).or_insert_with(|| ScreeningRecord::new(obs.id, now));
                rec.entered_zone = true;
                rec.last_seen = rec.last_seen.max(now);
                rec.truth_id = obs.truth_id.or(rec.truth_id);
                rec.best_priority_seen = Some(rec.best_priority_seen.map_or(m.priority, |b| b.min(m.priority)));
                rec.readings.push(reading.clone());
                out.readings.push(reading);
            }
        }
        let report = state.records.get(&obs.id).and_then(|r| r.current_report(cfg.min_readings));
        let latest = state.records.get(&obs.id).and_then(|r| r.readings.last()).map(|r| r.corrected_temp);
        let temp = report.map(|r| r.0).or(latest);
        out.annotations.push(Annotation {
            person_id: obs.id,
            bbox: anchor,
            temp,
            fever: report.is_some_and(|(t, _)| t >= cfg.fever_threshold),
            in_zone,
        });
    }
    Some(out)
}

/// Refreshes reported temperatures and emits alerts in ascending person
/// order.
pub fn refine_and_alert(state: &mut ScreeningState, cfg: &ScreeningConfig, frame_seq: u64) -> Vec<Alert> {
    let mut alerts = Vec::new();
    for rec in state.records.values_mut() {
        let Some((temp, best)) = rec.current_report(cfg.min_readings) else { continue };
        rec.reported_temp = Some(temp);
        if temp < cfg.fever_threshold {
            continue;
        }
        let reason = match (rec.alerted_temp, rec.alerted_priority) {
            (None, _) | (_, None) => Some(AlertReason::First),
            (Some(_), Some(p)) if best < p => Some(AlertReason::HigherPriority),
            (Some(prev), Some(_)) if temp - prev >= cfg.delta_realert - 1e-9 => Some(AlertReason::Delta),
            _ => None,
        };
        if let Some(reason) = reason {
            rec.alerted_temp = Some(temp);
            rec.alerted_priority = Some(best);
            alerts.push(Alert { person_id: rec.person_id, temp, priority: best, frame_seq, reason, truth_id: rec.truth_id });
        }
    }
    alerts
}

/// Drops records without a reading for longer than `cache_ttl`; returns
/// their IDs in ascending order.
pub fn expire_records(state: &mut ScreeningState, now: f64, ttl: f64) -> Vec<u64> {
    let stale: Vec<u64> = state.records.values().filter(|r| now - r.last_seen > ttl).map(|r| r.person_id).collect();
    for id in &stale {
        state.records.remove(id);
    }
    stale
}

pub const READINGS_HEADER: &str = "frame,person_id,priority,raw_c,corrected_c,distance_m,low_confidence";

pub fn write_reading<W: Write>(r: &Reading, mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{:.4},{:.4},{:.4},{}",
        r.frame_seq,
        r.person_id,
        r.priority.as_str(),
        r.raw_temp,
        r.corrected_temp,
        r.distance,
        u8::from(r.low_confidence)
    )
}

pub fn write_alert<W: Write>(a: &Alert, mut w: W) -> std::io::Result<()> {
    let line = serde_json::to_string(a).map_err(std::io::Error::other)?;
    writeln!(w, "{line}")
}
