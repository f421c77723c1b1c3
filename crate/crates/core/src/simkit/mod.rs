//! Deterministic dual-sensor scene simulator.
//!
//! A [`Scenario`] describes people walking toward a co-mounted visual/thermal
//! camera pair. [`SceneRenderer`] turns it into synchronized frame pairs,
//! detector-like output and ground truth. Every random draw comes from a
//! stream keyed by `(seed, frame, purpose)`, so frames can be rendered in any
//! order (or concurrently) and still match byte for byte.

mod dataset;
mod generate;
mod render;
pub(crate) mod rng;

pub use dataset::{read_dataset, read_groundtruth, write_dataset, Dataset, GroundTruthRow};
pub use generate::{generate_scenario, AccessoryOdds, GenerationConfig};
pub use render::{attenuated_temperature, PersonPose, SceneRenderer};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AppearanceVector, BBox, Point2, DEFAULT_APPEARANCE_DIM};
use crate::image::{GrayImage, ThermalGrid};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),
    #[error("time {t} s is outside the scenario [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("frame {seq} is outside the scenario ({count} frames)")]
    FrameOutOfRange { seq: u64, count: u64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed content: {reason}")]
    Malformed { path: String, reason: String },
}

/// Sensor geometry of the co-mounted pair.
///
/// World frame: x to the right, height above the floor, z away from the
/// camera. The thermal sensor sits `baseline` metres to the right of the
/// visual sensor; its principal point may be displaced from the image centre
/// by `thermal_principal_offset` (mounting misalignment, thermal pixels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraRig {
    pub visual_resolution: (usize, usize),
    pub thermal_resolution: (usize, usize),
    pub visual_focal: f64,
    pub thermal_focal: f64,
    pub baseline: f64,
    pub thermal_principal_offset: (f64, f64),
    pub camera_height: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            visual_resolution: (1280, 960),
            thermal_resolution: (336, 252),
            visual_focal: 640.0,
            thermal_focal: 168.0,
            baseline: 0.06,
            thermal_principal_offset: (-20.5, 6.5),
            camera_height: 1.6,
        }
    }
}

impl CameraRig {
    pub fn validate(&self) -> Result<(), SimError> {
        let (vw, vh) = self.visual_resolution;
        let (tw, th) = self.thermal_resolution;
        if vw == 0 || vh == 0 || tw == 0 || th == 0 {
            return Err(SimError::InvalidConfig("zero resolution".into()));
        }
        if !(self.visual_focal > 0.0 && self.thermal_focal > 0.0) {
            return Err(SimError::InvalidConfig("focal lengths must be positive".into()));
        }
        if !(self.baseline > 0.0) {
            return Err(SimError::InvalidConfig("baseline must be positive".into()));
        }
        Ok(())
    }

    /// Visual-to-thermal pixel scale (x, y).
    pub fn scale(&self) -> (f64, f64) {
        (
            self.visual_resolution.0 as f64 / self.thermal_resolution.0 as f64,
            self.visual_resolution.1 as f64 / self.thermal_resolution.1 as f64,
        )
    }

    pub fn visual_principal(&self) -> Point2 {
        Point2::new(self.visual_resolution.0 as f64 / 2.0, self.visual_resolution.1 as f64 / 2.0)
    }

    pub fn thermal_principal(&self) -> Point2 {
        Point2::new(
            self.thermal_resolution.0 as f64 / 2.0 + self.thermal_principal_offset.0,
            self.thermal_resolution.1 as f64 / 2.0 + self.thermal_principal_offset.1,
        )
    }

    /// Continuous visual pixel coordinates of a world point.
    pub fn project_visual(&self, x: f64, height: f64, z: f64) -> Point2 {
        let c = self.visual_principal();
        Point2::new(
            c.x + self.visual_focal * x / z,
            c.y + self.visual_focal * (self.camera_height - height) / z,
        )
    }

    /// Continuous thermal pixel coordinates of a world point.
    pub fn project_thermal(&self, x: f64, height: f64, z: f64) -> Point2 {
        let c = self.thermal_principal();
        Point2::new(
            c.x + self.thermal_focal * (x - self.baseline) / z,
            c.y + self.thermal_focal * (self.camera_height - height) / z,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    /// Lateral offset from the optical axis, metres.
    pub x: f64,
    /// Depth from the camera, metres.
    pub z: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Accessories {
    pub mask: bool,
    pub glasses: bool,
    pub hat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonSpec {
    pub id: u32,
    pub core_temp: f64,
    /// Piecewise-linear path; the person is in the scene between the first
    /// and last waypoint times.
    pub trajectory: Vec<Waypoint>,
    pub accessories: Accessories,
    pub appearance_identity: AppearanceVector,
    pub height: f64,
    /// Multiplier on the nominal head dimensions.
    pub head_scale: f64,
    pub shirt_tone: u8,
    pub hat_tone: u8,
}

impl PersonSpec {
    /// A 1.7 m person without accessories walking in a straight line
    /// between two waypoints.
    pub fn walking(id: u32, core_temp: f64, from: Waypoint, to: Waypoint) -> Self {
        let mut v = vec![0.0; DEFAULT_APPEARANCE_DIM];
        v[id as usize % DEFAULT_APPEARANCE_DIM] = 1.0;
        Self {
            id,
            core_temp,
            trajectory: vec![from, to],
            accessories: Accessories::default(),
            appearance_identity: AppearanceVector::new(v).expect("basis vector"),
            height: 1.7,
            head_scale: 1.0,
            shirt_tone: 40,
            hat_tone: 30,
        }
    }

    pub fn enter_time(&self) -> f64 {
        self.trajectory.first().map_or(f64::INFINITY, |w| w.t)
    }

    pub fn exit_time(&self) -> f64 {
        self.trajectory.last().map_or(f64::NEG_INFINITY, |w| w.t)
    }

    /// Interpolated (x, z) at time `t`, or `None` when not in the scene.
    pub fn position(&self, t: f64) -> Option<(f64, f64)> {
        let first = self.trajectory.first()?;
        let last = self.trajectory.last()?;
        if t < first.t || t > last.t {
            return None;
        }
        for pair in self.trajectory.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if t >= a.t && t <= b.t {
                let span = b.t - a.t;
                let u = if span > 0.0 { (t - a.t) / span } else { 0.0 };
                return Some((a.x + u * (b.x - a.x), a.z + u * (b.z - a.z)));
            }
        }
        Some((first.x, first.z))
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(30.0..=45.0).contains(&self.core_temp) {
            return Err(SimError::InvalidConfig(format!(
                "person {} core temperature {} outside [30, 45]",
                self.id, self.core_temp
            )));
        }
        if self.trajectory.is_empty() {
            return Err(SimError::InvalidConfig(format!("person {} has no trajectory", self.id)));
        }
        for w in &self.trajectory {
            if !(w.z > 0.05 && w.z.is_finite() && w.x.is_finite() && w.t.is_finite()) {
                return Err(SimError::InvalidConfig(format!(
                    "person {} waypoint outside scene bounds",
                    self.id
                )));
            }
        }
        if self.trajectory.windows(2).any(|p| p[1].t < p[0].t) {
            return Err(SimError::InvalidConfig(format!(
                "person {} waypoints not time-ordered",
                self.id
            )));
        }
        if !(self.height > 0.5 && self.head_scale > 0.0) {
            return Err(SimError::InvalidConfig(format!("person {} has bad body size", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftStep {
    pub start: f64,
    pub offset: f64,
}

/// Piecewise-constant additive thermal offset over time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftProfile {
    pub steps: Vec<DriftStep>,
}

impl DriftProfile {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn step(start: f64, offset: f64) -> Self {
        Self { steps: vec![DriftStep { start, offset }] }
    }

    pub fn offset_at(&self, t: f64) -> f64 {
        self.steps
            .iter()
            .filter(|s| s.start <= t)
            .max_by(|a, b| a.start.total_cmp(&b.start))
            .map_or(0.0, |s| s.offset)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlackBodySpec {
    /// Region in thermal pixel coordinates.
    pub roi: BBox,
    pub reference_temp: f64,
}

impl Default for BlackBodySpec {
    fn default() -> Self {
        Self {
            roi: BBox::new(300.0, 10.0, 16.0, 16.0).expect("static box"),
            reference_temp: 35.0,
        }
    }
}

/// Detector imperfections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionNoise {
    pub miss_body: f64,
    pub miss_head: f64,
    pub miss_face: f64,
    pub miss_eye: f64,
    /// Standard deviation of box edge jitter, visual pixels.
    pub bbox_jitter: f64,
    /// Per-component standard deviation added to identity vectors.
    pub appearance_sigma: f64,
}

impl Default for DetectionNoise {
    fn default() -> Self {
        Self {
            miss_body: 0.02,
            miss_head: 0.03,
            miss_face: 0.05,
            miss_eye: 0.08,
            bbox_jitter: 1.5,
            appearance_sigma: 0.05,
        }
    }
}

impl DetectionNoise {
    pub fn none() -> Self {
        Self {
            miss_body: 0.0,
            miss_head: 0.0,
            miss_face: 0.0,
            miss_eye: 0.0,
            bbox_jitter: 0.0,
            appearance_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub people: Vec<PersonSpec>,
    pub duration: f64,
    pub frame_rate: f64,
    pub geometry: CameraRig,
    pub ambient_temp: f64,
    pub attenuation_kappa: f64,
    pub thermal_noise_sigma: f64,
    /// Amplitude of uniform visual sensor noise, gray levels.
    pub visual_noise: u8,
    pub drift: DriftProfile,
    pub black_body: BlackBodySpec,
    pub detection_noise: DetectionNoise,
    pub rng_seed: u64,
}

impl Scenario {
    /// Empty scene with default world settings.
    pub fn empty(duration: f64, seed: u64) -> Self {
        Self {
            people: Vec::new(),
            duration,
            frame_rate: 8.0,
            geometry: CameraRig::default(),
            ambient_temp: 22.0,
            attenuation_kappa: 0.05,
            thermal_noise_sigma: 0.1,
            visual_noise: 3,
            drift: DriftProfile::none(),
            black_body: BlackBodySpec::default(),
            detection_noise: DetectionNoise::default(),
            rng_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.frame_rate > 0.0) {
            return Err(SimError::InvalidConfig("frame_rate must be positive".into()));
        }
        if !(self.duration > 0.0) {
            return Err(SimError::InvalidConfig("duration must be positive".into()));
        }
        if !(self.attenuation_kappa >= 0.0) || !(self.thermal_noise_sigma >= 0.0) {
            return Err(SimError::InvalidConfig("kappa and noise must be non-negative".into()));
        }
        self.geometry.validate()?;
        let (tw, th) = self.geometry.thermal_resolution;
        let roi = &self.black_body.roi;
        if roi.x() < 0.0 || roi.y() < 0.0 || roi.right() > tw as f64 || roi.bottom() > th as f64 {
            return Err(SimError::InvalidConfig("black body roi outside thermal frame".into()));
        }
        for s in &self.drift.steps {
            if !s.offset.is_finite() || !s.start.is_finite() {
                return Err(SimError::InvalidConfig("non-finite drift step".into()));
            }
        }
        let mut ids: Vec<u32> = self.people.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(SimError::InvalidConfig("duplicate person id".into()));
        }
        self.people.iter().try_for_each(PersonSpec::validate)
    }

    pub fn frame_count(&self) -> u64 {
        (self.duration * self.frame_rate + 1e-9).floor() as u64 + 1
    }

    pub fn frame_time(&self, seq: u64) -> f64 {
        seq as f64 / self.frame_rate
    }

    pub fn person(&self, id: u32) -> Option<&PersonSpec> {
        self.people.iter().find(|p| p.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionKind {
    Body,
    Face,
    Head,
    Eye,
}

impl DetectionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DetectionKind::Body => "body",
            DetectionKind::Face => "face",
            DetectionKind::Head => "head",
            DetectionKind::Eye => "eye",
        }
    }
}

/// Detector output for one region in one frame (visual coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_seq: u64,
    pub kind: DetectionKind,
    pub bbox: BBox,
    pub confidence: f64,
    pub appearance: AppearanceVector,
    /// Ground-truth identity; evaluation only, never consulted by the pipeline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_id: Option<u32>,
}

impl Detection {
    pub fn without_truth(&self) -> Detection {
        Detection { truth_id: None, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub seq: u64,
    pub timestamp: f64,
    pub visual: GrayImage,
    pub thermal: ThermalGrid,
}

/// Anything that can supply frame pairs and detections in sequence: the
/// live renderer or a dataset on disk.
pub trait FrameSource: Sync {
    fn scenario(&self) -> &Scenario;
    fn frame_count(&self) -> u64;
    fn frame(&self, seq: u64) -> Result<FramePair, SimError>;
    /// Detector output for `seq`, including ground-truth labels.
    fn detections(&self, seq: u64) -> Result<Vec<Detection>, SimError>;
    /// Ground-truth rows for every frame, in frame order.
    fn ground_truth_rows(&self) -> Result<Vec<GroundTruthRow>, SimError>;
}

impl FrameSource for SceneRenderer {
    fn scenario(&self) -> &Scenario {
        SceneRenderer::scenario(self)
    }
    fn frame_count(&self) -> u64 {
        SceneRenderer::frame_count(self)
    }
    fn frame(&self, seq: u64) -> Result<FramePair, SimError> {
        self.render_frame(seq)
    }
    fn detections(&self, seq: u64) -> Result<Vec<Detection>, SimError> {
        SceneRenderer::detections(self, seq)
    }
    fn ground_truth_rows(&self) -> Result<Vec<GroundTruthRow>, SimError> {
        let mut rows = Vec::new();
        for seq in 0..self.frame_count() {
            rows.extend(self.ground_truth(seq)?);
        }
        Ok(rows)
    }
}

impl FrameSource for Dataset {
    fn scenario(&self) -> &Scenario {
        &self.scenario
    }
    fn frame_count(&self) -> u64 {
        Dataset::frame_count(self)
    }
    fn frame(&self, seq: u64) -> Result<FramePair, SimError> {
        Dataset::frame(self, seq)
    }
    fn detections(&self, seq: u64) -> Result<Vec<Detection>, SimError> {
        let count = Dataset::frame_count(self);
        self.detections
            .get(seq as usize)
            .cloned()
            .ok_or(SimError::FrameOutOfRange { seq, count })
    }
    fn ground_truth_rows(&self) -> Result<Vec<GroundTruthRow>, SimError> {
        Ok(self.groundtruth.clone())
    }
}
