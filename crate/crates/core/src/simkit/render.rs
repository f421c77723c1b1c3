use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::rng::{hash_unit, stream, XorShift, STREAM_DETECT, STREAM_THERMAL, STREAM_TEXTURE, STREAM_VISUAL};
use super::{
    CameraRig, Detection, DetectionKind, DetectionNoise, FramePair, GroundTruthRow, PersonSpec,
    Scenario, SimError,
};
use crate::domain::{AppearanceVector, BBox, Point2};
use crate::image::{GrayImage, ThermalGrid};

const HEAD_HALF_W: f64 = 0.08;
const HEAD_HALF_H: f64 = 0.11;
const SHOULDER_DROP: f64 = 0.27;
const HIP_DROP: f64 = 0.88;
const TORSO_HALF_W: f64 = 0.22;
const NECK_HALF_W: f64 = 0.05;
const LEG_INNER: f64 = 0.03;
const LEG_OUTER: f64 = 0.18;

// Face layout in head-local coordinates (metres before head scaling, y down
// from the head centre).
const FACE_HALF_W: f64 = 0.065;
const HAIRLINE: f64 = -0.05;
const HAT_EDGE: f64 = -0.04;
const EYE_TOP: f64 = -0.025;
const EYE_BOTTOM: f64 = 0.005;
const EYE_HALF_W: f64 = 0.045;
const GLASSES_TOP: f64 = -0.03;
const GLASSES_BOTTOM: f64 = 0.01;
const GLASSES_HALF_W: f64 = 0.055;
const MASK_TOP: f64 = 0.03;
const FACE_BOX_TOP: f64 = -0.06;
const FACE_BOX_BOTTOM: f64 = 0.105;
const EYE_BOX_HALF_W: f64 = 0.05;

/// Measured temperature of a surface at `distance` metres under
/// exponential atmospheric absorption.
pub fn attenuated_temperature(surface: f64, ambient: f64, kappa: f64, distance: f64) -> f64 {
    ambient + (surface - ambient) * (-kappa * distance).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    EyeBand,
    Forehead,
    FaceSkin,
    Hair,
    Hat,
    Glasses,
    Mask,
    Neck,
    Torso,
    Leg,
}

impl Scenario {
    /// People in the scene at time `t`, farthest first.
    pub fn poses(&self, t: f64) -> Vec<PersonPose<'_>> {
        let mut poses: Vec<PersonPose<'_>> = self
            .people
            .iter()
            .filter_map(|p| p.position(t).map(|(x, z)| PersonPose { spec: p, x, z }))
            .collect();
        poses.sort_by(|a, b| b.z.total_cmp(&a.z).then(a.spec.id.cmp(&b.spec.id)));
        poses
    }
}

/// Where a person is at one instant.
#[derive(Debug, Clone)]
pub struct PersonPose<'a> {
    pub spec: &'a PersonSpec,
    pub x: f64,
    pub z: f64,
}

impl<'a> PersonPose<'a> {
    fn head_scale(&self) -> f64 {
        self.spec.head_scale
    }

    /// Height of the head centre above the floor.
    pub fn head_center_height(&self) -> f64 {
        self.spec.height - HEAD_HALF_H * self.head_scale()
    }

    /// Height of the eye line (centre of the eye band) above the floor.
    pub fn eye_height(&self) -> f64 {
        self.head_center_height() - 0.5 * (EYE_TOP + EYE_BOTTOM) * self.head_scale()
    }

    fn classify(&self, dx: f64, h: f64) -> Option<Part> {
        let hs = self.head_scale();
        let (a, b) = (HEAD_HALF_W * hs, HEAD_HALF_H * hs);
        let hy = self.head_center_height() - h;
        if (dx / a).powi(2) + (hy / b).powi(2) <= 1.0 {
            let acc = self.spec.accessories;
            let (ly, lx) = (hy / hs, dx.abs() / hs);
            if acc.hat && ly < HAT_EDGE {
                return Some(Part::Hat);
            }
            if ly < HAIRLINE || lx > FACE_HALF_W {
                return Some(Part::Hair);
            }
            if acc.glasses && lx <= GLASSES_HALF_W && (GLASSES_TOP..=GLASSES_BOTTOM).contains(&ly) {
                return Some(Part::Glasses);
            }
            if lx <= EYE_HALF_W && (EYE_TOP..=EYE_BOTTOM).contains(&ly) {
                return Some(Part::EyeBand);
            }
            if acc.mask && ly >= MASK_TOP {
                return Some(Part::Mask);
            }
            if ly < EYE_TOP {
                return Some(Part::Forehead);
            }
            return Some(Part::FaceSkin);
        }
        let shoulders = self.spec.height - SHOULDER_DROP;
        let hips = self.spec.height - HIP_DROP;
        if h > shoulders && h <= self.head_center_height() && dx.abs() <= NECK_HALF_W {
            return Some(Part::Neck);
        }
        if h <= shoulders && h >= hips && dx.abs() <= TORSO_HALF_W {
            return Some(Part::Torso);
        }
        if h < hips && h >= 0.0 && (LEG_INNER..=LEG_OUTER).contains(&dx.abs()) {
            return Some(Part::Leg);
        }
        None
    }

    fn visual_tone(&self, part: Part) -> f64 {
        match part {
            Part::EyeBand => 60.0,
            Part::Forehead | Part::FaceSkin | Part::Neck => 200.0,
            Part::Hair => 40.0,
            Part::Hat => self.spec.hat_tone as f64,
            Part::Glasses => 20.0,
            Part::Mask => 240.0,
            Part::Torso => self.spec.shirt_tone as f64,
            Part::Leg => 50.0,
        }
    }

    fn surface_temp(&self, part: Part, ambient: f64) -> f64 {
        let core = self.spec.core_temp;
        let clothing = ambient + 0.4 * (core - ambient);
        match part {
            Part::EyeBand => core,
            Part::Forehead => core - 0.2,
            Part::FaceSkin => core - 0.6,
            Part::Neck => core - 0.8,
            Part::Mask => core - 3.0,
            Part::Glasses => ambient + 0.3 * (core - ambient),
            Part::Hair | Part::Hat | Part::Torso | Part::Leg => clothing,
        }
    }

    fn visual_box(&self, rig: &CameraRig, dx0: f64, dx1: f64, h_top: f64, h_bottom: f64) -> BBox {
        let tl = rig.project_visual(self.x + dx0, h_top, self.z);
        let br = rig.project_visual(self.x + dx1, h_bottom, self.z);
        BBox::from_corners(tl.x, tl.y, br.x, br.y).expect("person boxes have positive extent")
    }

    /// Whole-person box (head to feet) in visual pixels, unclipped.
    pub fn body_box(&self, rig: &CameraRig) -> BBox {
        self.visual_box(rig, -TORSO_HALF_W, TORSO_HALF_W, self.spec.height, 0.0)
    }

    fn torso_box(&self, rig: &CameraRig) -> BBox {
        let top = self.spec.height - SHOULDER_DROP;
        self.visual_box(rig, -TORSO_HALF_W, TORSO_HALF_W, top, 0.0)
    }

    pub fn head_box(&self, rig: &CameraRig) -> BBox {
        let hs = self.head_scale();
        let c = self.head_center_height();
        self.visual_box(rig, -HEAD_HALF_W * hs, HEAD_HALF_W * hs, c + HEAD_HALF_H * hs, c - HEAD_HALF_H * hs)
    }

    pub fn face_box(&self, rig: &CameraRig) -> BBox {
        let hs = self.head_scale();
        let c = self.head_center_height();
        self.visual_box(rig, -FACE_HALF_W * hs, FACE_HALF_W * hs, c - FACE_BOX_TOP * hs, c - FACE_BOX_BOTTOM * hs)
    }

    pub fn eye_box(&self, rig: &CameraRig) -> BBox {
        let hs = self.head_scale();
        let c = self.head_center_height();
        self.visual_box(rig, -EYE_BOX_HALF_W * hs, EYE_BOX_HALF_W * hs, c - EYE_TOP * hs, c - EYE_BOTTOM * hs)
    }

    pub fn visual_head_center(&self, rig: &CameraRig) -> Point2 {
        rig.project_visual(self.x, self.head_center_height(), self.z)
    }

    pub fn thermal_head_center(&self, rig: &CameraRig) -> Point2 {
        rig.project_thermal(self.x, self.head_center_height(), self.z)
    }

    pub fn visual_eye_center(&self, rig: &CameraRig) -> Point2 {
        rig.project_visual(self.x, self.eye_height(), self.z)
    }

    pub fn thermal_eye_center(&self, rig: &CameraRig) -> Point2 {
        rig.project_thermal(self.x, self.eye_height(), self.z)
    }
}

/// Renders frames, detections and ground truth for a scenario.
///
/// Static background layers are built once; everything that varies per frame
/// is derived from the scenario seed and the frame index.
pub struct SceneRenderer {
    scenario: Scenario,
    visual_bg: Vec<u8>,
    thermal_bg: Vec<f32>,
}

impl SceneRenderer {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let rig = &scenario.geometry;
        let (vw, vh) = rig.visual_resolution;
        let (tw, th) = rig.thermal_resolution;
        let seed = scenario.rng_seed;
        let mut tex = stream(seed, 0, STREAM_TEXTURE);
        let (p1, p2, p3, p4): (f64, f64, f64, f64) =
            (tex.random(), tex.random(), tex.random(), tex.random());
        let tau = std::f64::consts::TAU;

        let mut visual_bg = vec![0u8; vw * vh];
        for y in 0..vh {
            for x in 0..vw {
                let (fx, fy) = (x as f64, y as f64);
                let smooth = 12.0 * (fx / 37.0 + tau * p1).sin() * (fy / 23.0 + tau * p2).cos();
                let blocky = 6.0 * (hash_unit(seed, (x / 8) as u64, (y / 8) as u64) - 0.5);
                visual_bg[y * vw + x] = (120.0 + smooth + blocky).clamp(100.0, 140.0) as u8;
            }
        }

        let mut thermal_bg = vec![0f32; tw * th];
        let amb = scenario.ambient_temp;
        for y in 0..th {
            for x in 0..tw {
                let (fx, fy) = (x as f64, y as f64);
                let v = amb + 0.3 * (fx / 40.0 + tau * p3).sin() * (fy / 30.0 + tau * p4).cos();
                thermal_bg[y * tw + x] = v as f32;
            }
        }
        let roi = &scenario.black_body.roi;
        for y in 0..th {
            for x in 0..tw {
                if roi.contains(Point2::new(x as f64 + 0.5, y as f64 + 0.5)) {
                    thermal_bg[y * tw + x] = scenario.black_body.reference_temp as f32;
                }
            }
        }

        Ok(Self { scenario, visual_bg, thermal_bg })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn frame_count(&self) -> u64 {
        self.scenario.frame_count()
    }

    /// People in the scene at time `t`, farthest first.
    pub fn poses(&self, t: f64) -> Vec<PersonPose<'_>> {
        self.scenario.poses(t)
    }

    fn check_seq(&self, seq: u64) -> Result<(), SimError> {
        let count = self.frame_count();
        if seq >= count {
            return Err(SimError::FrameOutOfRange { seq, count });
        }
        Ok(())
    }

    pub fn render_frame(&self, seq: u64) -> Result<FramePair, SimError> {
        self.check_seq(seq)?;
        Ok(self.render_pair(seq, self.scenario.frame_time(seq)))
    }

    /// Renders the scene at an arbitrary time; noise streams are keyed by the
    /// nearest frame index.
    pub fn render_at(&self, t: f64) -> Result<FramePair, SimError> {
        let duration = self.scenario.duration;
        if !(0.0..=duration).contains(&t) {
            return Err(SimError::TimeOutOfRange { t, duration });
        }
        let seq = (t * self.scenario.frame_rate).round() as u64;
        Ok(self.render_pair(seq, t))
    }

    fn render_pair(&self, seq: u64, t: f64) -> FramePair {
        let poses = self.poses(t);
        FramePair {
            seq,
            timestamp: t,
            visual: self.render_visual(seq, &poses),
            thermal: self.render_thermal(seq, t, &poses),
        }
    }

    fn render_visual(&self, seq: u64, poses: &[PersonPose<'_>]) -> GrayImage {
        let rig = &self.scenario.geometry;
        let (vw, vh) = rig.visual_resolution;
        let mut img = GrayImage { width: vw, height: vh, data: self.visual_bg.clone() };
        let c = rig.visual_principal();
        let f = rig.visual_focal;
        for pose in poses {
            let bb = pose.body_box(rig).expanded(2.0, 2.0);
            let (x0, x1, y0, y1) = pixel_span(&bb, vw, vh);
            let id = pose.spec.id as u64;
            for v in y0..y1 {
                let h = rig.camera_height - (v as f64 + 0.5 - c.y) * pose.z / f;
                for u in x0..x1 {
                    let dx = (u as f64 + 0.5 - c.x) * pose.z / f - pose.x;
                    if let Some(part) = pose.classify(dx, h) {
                        let mut tone = pose.visual_tone(part);
                        if matches!(part, Part::Forehead | Part::FaceSkin | Part::Torso) {
                            let cell = hash_unit(id, (dx * 60.0).floor() as i64 as u64, (h * 60.0).floor() as i64 as u64);
                            tone += 14.0 * (cell - 0.5);
                        }
                        img.data[v * vw + u] = tone.clamp(0.0, 255.0) as u8;
                    }
                }
            }
        }
        let amp = self.scenario.visual_noise as i32;
        if amp > 0 {
            let span = (2 * amp + 1) as u64;
            let mut rng = XorShift::new(super::rng::stream_seed(self.scenario.rng_seed, seq, STREAM_VISUAL));
            for px in img.data.iter_mut() {
                let n = (rng.next_u64() % span) as i32 - amp;
                *px = (*px as i32 + n).clamp(0, 255) as u8;
            }
        }
        img
    }

    fn render_thermal(&self, seq: u64, t: f64, poses: &[PersonPose<'_>]) -> ThermalGrid {
        let s = &self.scenario;
        let rig = &s.geometry;
        let (tw, th) = rig.thermal_resolution;
        let mut temps: Vec<f64> = self.thermal_bg.iter().map(|&v| v as f64).collect();
        let c = rig.thermal_principal();
        let f = rig.thermal_focal;
        let amb = s.ambient_temp;
        for pose in poses {
            let corner_a = rig.project_thermal(pose.x - TORSO_HALF_W, pose.spec.height, pose.z);
            let corner_b = rig.project_thermal(pose.x + TORSO_HALF_W, 0.0, pose.z);
            let Some(bb) = BBox::from_corners(corner_a.x, corner_a.y, corner_b.x, corner_b.y) else {
                continue;
            };
            let (x0, x1, y0, y1) = pixel_span(&bb.expanded(1.0, 1.0), tw, th);
            let atten = (-s.attenuation_kappa * pose.z).exp();
            for v in y0..y1 {
                let h = rig.camera_height - (v as f64 + 0.5 - c.y) * pose.z / f;
                for u in x0..x1 {
                    let dx = (u as f64 + 0.5 - c.x) * pose.z / f + rig.baseline - pose.x;
                    if let Some(part) = pose.classify(dx, h) {
                        temps[v * tw + u] = amb + (pose.surface_temp(part, amb) - amb) * atten;
                    }
                }
            }
        }
        let drift = s.drift.offset_at(t);
        let mut rng = stream(s.rng_seed, seq, STREAM_THERMAL);
        let sigma = s.thermal_noise_sigma;
        let data = temps
            .into_iter()
            .map(|v| {
                let noise = if sigma > 0.0 {
                    sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                } else {
                    0.0
                };
                (v + drift + noise) as f32
            })
            .collect();
        ThermalGrid { width: tw, height: th, data }
    }

    pub fn detections(&self, seq: u64) -> Result<Vec<Detection>, SimError> {
        self.emit_detections(seq, &self.scenario.detection_noise)
    }

    /// Simulated detector output for frame `seq` under `noise`.
    pub fn emit_detections(&self, seq: u64, noise: &DetectionNoise) -> Result<Vec<Detection>, SimError> {
        self.check_seq(seq)?;
        let t = self.scenario.frame_time(seq);
        let rig = &self.scenario.geometry;
        let poses = self.poses(t);
        let mut by_id: Vec<&PersonPose<'_>> = poses.iter().collect();
        by_id.sort_by_key(|p| p.spec.id);
        let mut rng = stream(self.scenario.rng_seed, seq, STREAM_DETECT);
        let jitter = Normal::new(0.0, noise.bbox_jitter.max(0.0)).expect("non-negative sd");
        let app_noise = Normal::new(0.0, noise.appearance_sigma.max(0.0)).expect("non-negative sd");

        let mut out = Vec::new();
        for pose in by_id {
            let vis = Visibility::of(pose, &poses, rig);
            // Draw every random value up front so one person's outcome never
            // shifts another person's stream.
            let draws: [f64; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
            let acc = pose.spec.accessories;
            let body_ok = vis.body && draws[0] >= noise.miss_body;
            let head_ok = vis.head && draws[1] >= noise.miss_head;
            let face_ok = vis.face && !(acc.mask && (acc.glasses || acc.hat)) && draws[2] >= noise.miss_face;
            let eye_ok = face_ok && vis.eye && !acc.glasses && draws[3] >= noise.miss_eye;

            let kinds = [
                (DetectionKind::Body, body_ok, pose.body_box(rig)),
                (DetectionKind::Head, head_ok, pose.head_box(rig)),
                (DetectionKind::Face, face_ok, pose.face_box(rig)),
                (DetectionKind::Eye, eye_ok, pose.eye_box(rig)),
            ];
            for (kind, ok, raw_box) in kinds {
                let mut jit = [0.0; 4];
                for j in jit.iter_mut() {
                    *j = jitter.sample(&mut rng);
                }
                let comps: Vec<f64> = (0..pose.spec.appearance_identity.dim())
                    .map(|_| app_noise.sample(&mut rng))
                    .collect();
                let conf_noise: f64 = rng.random();
                if !ok {
                    continue;
                }
                let Some(clipped) = clip_to_frame(&raw_box, rig.visual_resolution) else {
                    continue;
                };
                let x0 = clipped.x() + jit[0];
                let y0 = clipped.y() + jit[1];
                let x1 = (clipped.right() + jit[2]).max(x0 + 1.0);
                let y1 = (clipped.bottom() + jit[3]).max(y0 + 1.0);
                let bbox = BBox::from_corners(x0, y0, x1, y1).expect("jittered box keeps extent");
                let values: Vec<f64> = pose
                    .spec
                    .appearance_identity
                    .values()
                    .iter()
                    .zip(&comps)
                    .map(|(v, n)| v + n)
                    .collect();
                let appearance = AppearanceVector::new(values)
                    .unwrap_or_else(|_| pose.spec.appearance_identity.clone());
                out.push(Detection {
                    frame_seq: seq,
                    kind,
                    bbox,
                    confidence: (0.95 - 0.1 * conf_noise).clamp(0.0, 1.0),
                    appearance,
                    truth_id: Some(pose.spec.id),
                });
            }
        }
        Ok(out)
    }

    /// One row per person present in the scene at frame `seq`.
    pub fn ground_truth(&self, seq: u64) -> Result<Vec<GroundTruthRow>, SimError> {
        self.check_seq(seq)?;
        let t = self.scenario.frame_time(seq);
        let rig = &self.scenario.geometry;
        let poses = self.poses(t);
        let mut rows: Vec<GroundTruthRow> = poses
            .iter()
            .map(|p| {
                let vis = Visibility::of(p, &poses, rig);
                GroundTruthRow {
                    frame: seq,
                    person_id: p.spec.id,
                    core_temp_c: p.spec.core_temp,
                    distance_m: p.z,
                    visible: vis.body || vis.head,
                }
            })
            .collect();
        rows.sort_by_key(|r| r.person_id);
        Ok(rows)
    }
}

fn pixel_span(b: &BBox, w: usize, h: usize) -> (usize, usize, usize, usize) {
    let x0 = b.x().floor().clamp(0.0, w as f64) as usize;
    let x1 = b.right().ceil().clamp(0.0, w as f64) as usize;
    let y0 = b.y().floor().clamp(0.0, h as f64) as usize;
    let y1 = b.bottom().ceil().clamp(0.0, h as f64) as usize;
    (x0, x1, y0, y1)
}

fn clip_to_frame(b: &BBox, res: (usize, usize)) -> Option<BBox> {
    let frame = BBox::new(0.0, 0.0, res.0 as f64, res.1 as f64).ok()?;
    b.intersection(&frame)
}

/// Per-region visibility ignoring detector randomness and accessories.
struct Visibility {
    body: bool,
    head: bool,
    face: bool,
    eye: bool,
}

impl Visibility {
    fn of(pose: &PersonPose<'_>, all: &[PersonPose<'_>], rig: &CameraRig) -> Self {
        let occluders: Vec<BBox> = all
            .iter()
            .filter(|o| o.z < pose.z && o.spec.id != pose.spec.id)
            .flat_map(|o| [o.torso_box(rig), o.head_box(rig)])
            .collect();
        let visible = |b: BBox, min_in_frame: f64, max_occluded: f64| -> bool {
            let Some(clipped) = clip_to_frame(&b, rig.visual_resolution) else {
                return false;
            };
            if clipped.area() < min_in_frame * b.area() {
                return false;
            }
            let covered = occluders
                .iter()
                .filter_map(|o| o.intersection(&clipped))
                .map(|i| i.area() / clipped.area())
                .fold(0.0, f64::max);
            covered <= max_occluded
        };
        Self {
            body: visible(pose.body_box(rig), 0.15, 0.7),
            head: visible(pose.head_box(rig), 0.6, 0.5),
            face: visible(pose.face_box(rig), 0.6, 0.5),
            eye: visible(pose.eye_box(rig), 0.6, 0.5),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkit::{Accessories, Waypoint};

    fn person(id: u32, core: f64, x: f64, z: f64, acc: Accessories) -> PersonSpec {
        let mut v = vec![0.0; 32];
        v[id as usize % 32] = 1.0;
        PersonSpec {
            id,
            core_temp: core,
            trajectory: vec![Waypoint { t: 0.0, x, z }, Waypoint { t: 100.0, x, z }],
            accessories: acc,
            appearance_identity: AppearanceVector::new(v).unwrap(),
            height: 1.7,
            head_scale: 1.0,
            shirt_tone: 40,
            hat_tone: 30,
        }
    }

    fn quiet_scene(people: Vec<PersonSpec>) -> Scenario {
        let mut s = Scenario::empty(10.0, 5);
        s.people = people;
        s.thermal_noise_sigma = 0.0;
        s.visual_noise = 0;
        s.detection_noise = DetectionNoise::none();
        s.black_body.reference_temp = 25.0;
        s
    }

    #[test]
    fn attenuation_closed_form() {
        assert_eq!(attenuated_temperature(37.0, 22.0, 0.05, 0.0), 37.0);
        let v = attenuated_temperature(37.0, 22.0, 0.05, 2.0);
        assert!((v - (22.0 + 15.0 * (-0.1f64).exp())).abs() < 1e-12);
        assert!((v - 35.572).abs() < 1e-3);
    }

    #[test]
    fn rendered_eye_band_matches_attenuation() {
        let s = quiet_scene(vec![person(1, 37.0, 0.0, 2.0, Accessories::default())]);
        let r = SceneRenderer::new(s).unwrap();
        let f = r.render_frame(0).unwrap();
        let poses = r.poses(0.0);
        let p = r.scenario().geometry.clone();
        let e = poses[0].thermal_eye_center(&p);
        let v = f.thermal.get(e.x as usize, e.y as usize) as f64;
        assert!((v - 35.572).abs() < 1e-3, "eye pixel {v}");
    }

    #[test]
    fn frame_dimensions_and_determinism() {
        let s = quiet_scene(vec![person(1, 36.5, 0.2, 2.5, Accessories::default())]);
        let mut noisy = s.clone();
        noisy.thermal_noise_sigma = 0.1;
        noisy.visual_noise = 3;
        let r = SceneRenderer::new(noisy).unwrap();
        let a = r.render_frame(3).unwrap();
        let b = r.render_frame(3).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.visual.width, a.visual.height), (1280, 960));
        assert_eq!((a.thermal.width, a.thermal.height), (336, 252));
        assert!(a.thermal.data.iter().all(|v| v.is_finite()));
        assert_ne!(a.thermal, r.render_frame(4).unwrap().thermal);
    }

    #[test]
    fn time_out_of_range_rejected() {
        let r = SceneRenderer::new(quiet_scene(vec![])).unwrap();
        assert!(matches!(r.render_at(10.5), Err(SimError::TimeOutOfRange { .. })));
        assert!(r.render_at(-0.1).is_err());
        assert!(r.render_at(10.0).is_ok());
    }

    #[test]
    fn parallax_matches_pinhole_oracle() {
        let mut s = quiet_scene(vec![]);
        s.geometry.thermal_principal_offset = (0.0, 0.0);
        let rig = s.geometry.clone();
        let (sx, _) = rig.scale();
        let offset_at = |z: f64| {
            let v = rig.project_visual(0.3, 1.6, z);
            let t = rig.project_thermal(0.3, 1.6, z);
            v.x / sx - t.x
        };
        for z in [1.0, 2.0, 3.6] {
            let oracle = rig.thermal_focal * rig.baseline / z;
            assert!((offset_at(z) - oracle).abs() < 0.5);
        }
        assert!(offset_at(1.0) > offset_at(3.6));
    }

    #[test]
    fn rendered_parallax_shrinks_with_distance() {
        // Locate the eye band in both rendered modalities and compare
        // horizontal offsets at two depths.
        let measure = |z: f64| {
            let mut s = quiet_scene(vec![person(1, 37.0, 0.0, z, Accessories::default())]);
            s.geometry.thermal_principal_offset = (0.0, 0.0);
            let r = SceneRenderer::new(s).unwrap();
            let f = r.render_frame(0).unwrap();
            let rig = r.scenario().geometry.clone();
            let vis_cols: Vec<usize> = (0..f.visual.width)
                .filter(|&x| (0..f.visual.height).any(|y| f.visual.get(x, y) == 60))
                .collect();
            let hot = f.thermal.data.iter().cloned().fold(f32::MIN, f32::max);
            let th_cols: Vec<usize> = (0..f.thermal.width)
                .filter(|&x| (0..f.thermal.height).any(|y| f.thermal.get(x, y) == hot))
                .collect();
            let mid = |c: &[usize]| (c[0] + c[c.len() - 1] + 1) as f64 / 2.0;
            mid(&vis_cols) / rig.scale().0 - mid(&th_cols)
        };
        let near = measure(1.0);
        let far = measure(3.6);
        assert!(near > far, "near {near} far {far}");
        assert!((near - 168.0 * 0.06 / 1.0).abs() < 1.0);
    }

    #[test]
    fn fully_visible_person_gets_four_detections() {
        let s = quiet_scene(vec![person(1, 36.5, 0.0, 2.5, Accessories::default())]);
        let r = SceneRenderer::new(s).unwrap();
        let d = r.detections(0).unwrap();
        let mut kinds: Vec<_> = d.iter().map(|d| d.kind).collect();
        kinds.sort();
        assert_eq!(
            kinds,
            vec![DetectionKind::Body, DetectionKind::Face, DetectionKind::Head, DetectionKind::Eye]
        );
        assert!(d.iter().all(|d| d.truth_id == Some(1)));
    }

    #[test]
    fn glasses_suppress_eye_detection() {
        let acc = Accessories { glasses: true, ..Default::default() };
        let r = SceneRenderer::new(quiet_scene(vec![person(1, 36.5, 0.0, 2.5, acc)])).unwrap();
        let d = r.detections(0).unwrap();
        assert!(d.iter().all(|d| d.kind != DetectionKind::Eye));
        assert!(d.iter().any(|d| d.kind == DetectionKind::Face));
    }

    #[test]
    fn mask_glasses_hat_leave_head_and_body() {
        let acc = Accessories { glasses: true, mask: true, hat: true };
        let r = SceneRenderer::new(quiet_scene(vec![person(1, 36.5, 0.0, 2.5, acc)])).unwrap();
        let mut kinds: Vec<_> = r.detections(0).unwrap().iter().map(|d| d.kind).collect();
        kinds.sort();
        assert_eq!(kinds, vec![DetectionKind::Body, DetectionKind::Head]);
    }

    #[test]
    fn fully_occluded_person_has_no_detections() {
        let near = person(1, 36.5, 0.0, 1.2, Accessories::default());
        let mut far = person(2, 36.5, 0.0, 3.2, Accessories::default());
        far.height = 1.2;
        let r = SceneRenderer::new(quiet_scene(vec![near, far])).unwrap();
        let d = r.detections(0).unwrap();
        assert!(d.iter().all(|d| d.truth_id == Some(1)), "{:?}", d.iter().map(|d| (d.kind, d.truth_id)).collect::<Vec<_>>());
        let gt = r.ground_truth(0).unwrap();
        assert!(!gt.iter().find(|g| g.person_id == 2).unwrap().visible);
    }

    #[test]
    fn eye_detections_nest_inside_faces() {
        let s = crate::simkit::generate_scenario(&crate::simkit::GenerationConfig::default(), 11).unwrap();
        let r = SceneRenderer::new(s).unwrap();
        for seq in (0..r.frame_count()).step_by(5) {
            let d = r.detections(seq).unwrap();
            for e in d.iter().filter(|d| d.kind == DetectionKind::Eye) {
                assert!(d.iter().any(|f| f.kind == DetectionKind::Face && f.truth_id == e.truth_id));
            }
        }
    }

    #[test]
    fn attenuation_monotone_in_rendered_frames() {
        let mut last = f64::INFINITY;
        for z in [0.8, 1.5, 2.2, 3.0, 3.7] {
            let r = SceneRenderer::new(quiet_scene(vec![person(1, 38.0, 0.0, z, Accessories::default())])).unwrap();
            let f = r.render_frame(0).unwrap();
            let hot = f.thermal.data.iter().cloned().fold(f32::MIN, f32::max) as f64;
            assert!(hot < last);
            last = hot;
        }
    }
}
