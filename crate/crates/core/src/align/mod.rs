//! Visual-to-thermal registration.
//!
//! The manual baseline is a fixed scale-and-translate map. Dynamic
//! alignment subtracts a background in both modalities, extracts corner
//! features from the two foreground silhouettes (rendered on the thermal
//! grid), matches them and fits one homography per person. The horizontal
//! offset of the fitted correspondences gives that person's depth.

mod background;
mod depth;
mod features;
mod homography;
mod matching;
pub mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use background::{estimate_background, foreground_mask, Mask, Plane, RunningMedian};
pub use depth::{depth_from_disparity, DistanceEstimate, DistanceSource};
pub use features::{detect_features, Descriptor, Feature, FeatureConfig};
pub use homography::{consensus, dlt, estimate_homography, fit_scale_translation, Homography, RansacParams};
pub use matching::{match_descriptors, Match, MatchConfig};

use crate::domain::{BBox, Point2};
use crate::image::GrayImage;
use crate::simkit::{CameraRig, FramePair};

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("image dimensions do not match")]
    DimensionMismatch,
    #[error("background needs {need} frames, have {have}")]
    NotEnoughFrames { have: usize, need: usize },
    #[error("need at least 4 correspondences, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("only {0} inliers survived")]
    InsufficientInliers(usize),
    #[error("every sample was degenerate")]
    DegenerateSample,
    #[error("invalid offset: scale factors must be positive and finite")]
    InvalidOffset,
}

/// Static map from thermal pixels to visual pixels:
/// `(x·s_x + t_x, y·s_y + t_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineOffset {
    pub t_x: f64,
    pub t_y: f64,
    pub s_x: f64,
    pub s_y: f64,
}

impl AffineOffset {
    pub fn new(t_x: f64, t_y: f64, s_x: f64, s_y: f64) -> Result<Self, AlignError> {
        let ok = [t_x, t_y, s_x, s_y].iter().all(|v| v.is_finite()) && s_x > 0.0 && s_y > 0.0;
        if !ok {
            return Err(AlignError::InvalidOffset);
        }
        Ok(Self { t_x, t_y, s_x, s_y })
    }

    /// Pure resolution scaling between the two sensors.
    pub fn scale_only(rig: &CameraRig) -> Self {
        let (s_x, s_y) = rig.scale();
        Self { t_x: 0.0, t_y: 0.0, s_x, s_y }
    }

    /// Resolution scaling plus a translation of (75, −25) visual pixels,
    /// the hand-tuned setting for a side-by-side mount.
    pub fn manual_default(rig: &CameraRig) -> Self {
        Self { t_x: 75.0, t_y: -25.0, ..Self::scale_only(rig) }
    }

    /// Thermal → visual.
    pub fn forward(&self, p: Point2) -> Point2 {
        manual_offset_map(p, self)
    }

    /// Visual → thermal.
    pub fn inverse(&self, p: Point2) -> Point2 {
        Point2::new((p.x - self.t_x) / self.s_x, (p.y - self.t_y) / self.s_y)
    }
}

impl Default for AffineOffset {
    fn default() -> Self {
        Self::manual_default(&CameraRig::default())
    }
}

pub fn manual_offset_map(p: Point2, o: &AffineOffset) -> Point2 {
    Point2::new(p.x * o.s_x + o.t_x, p.y * o.s_y + o.t_y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    pub manual: AffineOffset,
    pub background_window: usize,
    pub background_min_frames: usize,
    pub visual_tau: f32,
    pub thermal_tau: f32,
    pub dilations: usize,
    pub features: FeatureConfig,
    pub matching: MatchConfig,
    pub ransac: RansacParams,
    pub min_inliers: usize,
    /// Extra thermal pixels searched around the manual-offset prediction.
    pub search_margin: (f64, f64),
    /// Features this close (thermal pixels) to an image edge are discarded:
    /// where the frame cuts a silhouette the corners are not scene points.
    pub edge_margin: f64,
    /// Assumed disparity uncertainty (thermal pixels) for distance intervals.
    pub disparity_tolerance: f64,
    pub head_height_m: f64,
    pub face_height_m: f64,
    /// Relative uncertainty of box-height distances.
    pub height_tolerance: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            manual: AffineOffset::default(),
            background_window: 16,
            background_min_frames: 8,
            visual_tau: 12.0,
            thermal_tau: 1.5,
            dilations: 1,
            features: FeatureConfig::default(),
            matching: MatchConfig::default(),
            ransac: RansacParams::default(),
            min_inliers: 4,
            search_margin: (20.0, 8.0),
            edge_margin: 6.0,
            disparity_tolerance: 1.0,
            head_height_m: 0.22,
            face_height_m: 0.165,
            height_tolerance: 0.12,
        }
    }
}

/// Visual → thermal map for one person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mapping {
    Homography(Homography),
    Affine(AffineOffset),
}

impl Mapping {
    pub fn to_thermal(&self, p: Point2) -> Point2 {
        match self {
            Mapping::Homography(h) => h.apply(p),
            Mapping::Affine(o) => o.inverse(p),
        }
    }

    /// Hull of the mapped corners of a visual box.
    pub fn map_box(&self, b: &BBox) -> Option<BBox> {
        let pts = b.corners().map(|p| self.to_thermal(p));
        if pts.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return None;
        }
        BBox::hull_of(&pts)
    }
}

/// Boxes describing one tracked person in the visual frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonRegion {
    pub id: u64,
    pub region: BBox,
    pub head: Option<BBox>,
    pub face: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonAlignment {
    pub id: u64,
    pub mapping: Mapping,
    pub low_confidence: bool,
    pub inliers: usize,
    pub disparity: Option<f64>,
    pub distance: Option<DistanceEstimate>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub people: Vec<PersonAlignment>,
}

impl AlignmentResult {
    pub fn get(&self, id: u64) -> Option<&PersonAlignment> {
        self.people.iter().find(|p| p.id == id)
    }
}

/// Per-frame inputs to the per-person fits, computed once per frame.
#[derive(Debug, Clone)]
pub struct FrameFeatures {
    pub warm: bool,
    pub visual_small: GrayImage,
    pub visual_mask: Mask,
    pub thermal_mask: Mask,
    pub visual_features: Vec<Feature>,
    pub thermal_features: Vec<Feature>,
}

/// Background models plus the fixed geometry they operate in.
#[derive(Debug, Clone)]
pub struct AlignState {
    rig: CameraRig,
    cfg: AlignConfig,
    visual_bg: RunningMedian,
    thermal_bg: RunningMedian,
    sample_x: Vec<usize>,
    sample_y: Vec<usize>,
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn global_offset(diff: &[f32]) -> f32 {
    if diff.is_empty() {
        return 0.0;
    }
    let mut v = diff.to_vec();
    let mid = v.len() / 2;
    *v.select_nth_unstable_by(mid, f32::total_cmp).1
}

impl AlignState {
    pub fn new(rig: &CameraRig, cfg: AlignConfig) -> Self {
        let (vw, vh) = rig.visual_resolution;
        let (tw, th) = rig.thermal_resolution;
        let (sx, sy) = rig.scale();
        let sample_x = (0..tw).map(|j| (((j as f64 + 0.5) * sx).floor() as usize).min(vw - 1)).collect();
        let sample_y = (0..th).map(|i| (((i as f64 + 0.5) * sy).floor() as usize).min(vh - 1)).collect();
        Self {
            rig: rig.clone(),
            visual_bg: RunningMedian::new(tw, th, cfg.background_window, cfg.background_min_frames),
            thermal_bg: RunningMedian::new(tw, th, cfg.background_window, cfg.background_min_frames),
            cfg,
            sample_x,
            sample_y,
        }
    }

    pub fn config(&self) -> &AlignConfig {
        &self.cfg
    }

    pub fn rig(&self) -> &CameraRig {
        &self.rig
    }

    pub fn is_warm(&self) -> bool {
        self.visual_bg.is_warm() && self.thermal_bg.is_warm()
    }

    /// Visual frame resampled onto the thermal grid.
    pub fn downsample(&self, visual: &GrayImage) -> GrayImage {
        let (tw, th) = self.rig.thermal_resolution;
        let mut out = GrayImage::new(tw, th);
        for (i, &sy) in self.sample_y.iter().enumerate() {
            let row = &visual.data[sy * visual.width..(sy + 1) * visual.width];
            for (j, &sx) in self.sample_x.iter().enumerate() {
                out.data[i * tw + j] = row[sx];
            }
        }
        out
    }

    /// Computes masks and features for `frame`, then folds the frame into
    /// the background models. Must be called in frame order.
    pub fn prepare(&mut self, frame: &FramePair) -> Result<FrameFeatures, AlignError> {
        let rig = &self.rig;
        if (frame.visual.width, frame.visual.height) != rig.visual_resolution
            || (frame.thermal.width, frame.thermal.height) != rig.thermal_resolution
        {
            return Err(AlignError::DimensionMismatch);
        }
        let (tw, th) = rig.thermal_resolution;
        let warm = self.is_warm();
        let visual_small = self.downsample(&frame.visual);
        let vplane: Vec<f32> = visual_small.data.iter().map(|&v| v as f32).collect();

        let (visual_mask, thermal_mask) = if warm {
            let vbg = self.visual_bg.background_data();
            let vt = self.cfg.visual_tau;
            let vm = Mask {
                width: tw,
                height: th,
                data: vplane.iter().zip(vbg).map(|(a, b)| (a - b).abs() > vt).collect(),
            };
            let tbg = self.thermal_bg.background_data();
            let diff: Vec<f32> = frame.thermal.data.iter().zip(tbg).map(|(a, b)| a - b).collect();
            let off = global_offset(&diff);
            let tt = self.cfg.thermal_tau;
            let tm = Mask { width: tw, height: th, data: diff.iter().map(|d| (d - off).abs() > tt).collect() };
            (vm, tm)
        } else {
            (Mask::empty(tw, th), Mask::empty(tw, th))
        };

        let (visual_mask, thermal_mask) = {
            let (mut v, mut t) = (visual_mask, thermal_mask);
            for _ in 0..self.cfg.dilations {
                v = v.dilated();
                t = t.dilated();
            }
            (v, t)
        };

        let (visual_features, thermal_features) = if warm {
            (
                detect_features(&visual_mask.soft_image(), Some(&visual_mask), &self.cfg.features)?,
                detect_features(&thermal_mask.soft_image(), Some(&thermal_mask), &self.cfg.features)?,
            )
        } else {
            (Vec::new(), Vec::new())
        };
        let m = self.cfg.edge_margin;
        let interior = |f: &Feature| {
            let p = f.location;
            p.x >= m && p.y >= m && p.x <= tw as f64 - 1.0 - m && p.y <= th as f64 - 1.0 - m
        };
        let visual_features: Vec<Feature> = visual_features.into_iter().filter(interior).collect();
        let thermal_features: Vec<Feature> = thermal_features.into_iter().filter(interior).collect();

        self.visual_bg.push(&vplane, warm.then_some(&visual_mask))?;
        self.thermal_bg.push(&frame.thermal.data, warm.then_some(&thermal_mask))?;

        Ok(FrameFeatures { warm, visual_small, visual_mask, thermal_mask, visual_features, thermal_features })
    }

    /// Aligns every region; `parallel` fans persons out over the rayon pool.
    pub fn align_regions(
        &self,
        ff: &FrameFeatures,
        regions: &[PersonRegion],
        seq: u64,
        parallel: bool,
    ) -> AlignmentResult {
        let others = |r: &PersonRegion| -> Vec<BBox> {
            regions.iter().filter(|o| o.id != r.id).map(|o| o.region).collect()
        };
        let people = if parallel {
            regions.par_iter().map(|r| self.align_person_among(ff, r, &others(r), seq)).collect()
        } else {
            regions.iter().map(|r| self.align_person_among(ff, r, &others(r), seq)).collect()
        };
        AlignmentResult { people }
    }

    fn fallback_distance(&self, r: &PersonRegion) -> Option<DistanceEstimate> {
        let f = self.rig.visual_focal;
        let tol = self.cfg.height_tolerance;
        r.head
            .and_then(|h| DistanceEstimate::from_height(h.h(), self.cfg.head_height_m, f, tol))
            .or_else(|| r.face.and_then(|b| DistanceEstimate::from_height(b.h(), self.cfg.face_height_m, f, tol)))
    }

    fn fallback(&self, r: &PersonRegion, inliers: usize) -> PersonAlignment {
        PersonAlignment {
            id: r.id,
            mapping: Mapping::Affine(self.cfg.manual),
            low_confidence: true,
            inliers,
            disparity: None,
            distance: self.fallback_distance(r),
        }
    }

    /// Fits one person's homography, or falls back to the manual offset.
    pub fn align_person(&self, ff: &FrameFeatures, r: &PersonRegion, seq: u64) -> PersonAlignment {
        self.align_person_among(ff, r, &[], seq)
    }

    /// As [`Self::align_person`], ignoring visual features that also fall
    /// inside another person's region. Where two people overlap, the corners
    /// there may belong to either silhouette, and a walker's fit would
    /// otherwise pick up the depth of whoever is behind them.
    pub fn align_person_among(
        &self,
        ff: &FrameFeatures,
        r: &PersonRegion,
        others: &[BBox],
        seq: u64,
    ) -> PersonAlignment {
        if !ff.warm {
            return self.fallback(r, 0);
        }
        let rig = &self.rig;
        let (sx, sy) = rig.scale();
        let small = r.region.scaled(1.0 / sx, 1.0 / sy).expanded(2.0, 2.0);
        let others_small: Vec<BBox> = others.iter().map(|o| o.scaled(1.0 / sx, 1.0 / sy)).collect();
        let manual = &self.cfg.manual;
        let (mx, my) = self.cfg.search_margin;
        let window = match Mapping::Affine(*manual).map_box(&r.region) {
            Some(b) => b.expanded(mx, my),
            None => return self.fallback(r, 0),
        };

        let (vi, vd): (Vec<usize>, Vec<Descriptor>) = ff
            .visual_features
            .iter()
            .enumerate()
            .filter(|(_, f)| small.contains(f.location) && !others_small.iter().any(|o| o.contains(f.location)))
            .map(|(i, f)| (i, f.descriptor))
            .unzip();
        let (ti, td): (Vec<usize>, Vec<Descriptor>) = ff
            .thermal_features
            .iter()
            .enumerate()
            .filter(|(_, f)| window.contains(f.location))
            .map(|(i, f)| (i, f.descriptor))
            .unzip();
        let matches = match_descriptors(&vd, &td, &self.cfg.matching);
        if matches.len() < self.cfg.min_inliers.max(4) {
            return self.fallback(r, 0);
        }
        let src: Vec<Point2> = matches.iter().map(|m| ff.visual_features[vi[m.a]].location).collect();
        let dst: Vec<Point2> = matches.iter().map(|m| ff.thermal_features[ti[m.b]].location).collect();
        let params = RansacParams { seed: mix(self.cfg.ransac.seed ^ mix(seq, 1), r.id), ..self.cfg.ransac.clone() };
        let Ok((h_full, inliers)) = estimate_homography(&src, &dst, &params) else {
            return self.fallback(r, 0);
        };
        let (h_small, inliers) = self.select_model(h_full, inliers, &src, &dst);
        if inliers.len() < self.cfg.min_inliers {
            return self.fallback(r, inliers.len());
        }
        let Some(h) = h_small.rescaled((1.0 / sx, 1.0 / sy), (1.0, 1.0)) else {
            return self.fallback(r, inliers.len());
        };
        if !self.plausible(&h, &r.region) {
            return self.fallback(r, inliers.len());
        }

        // Horizontal offsets of the fitted correspondences, normalized to the
        // thermal focal length.
        let cv = rig.visual_principal();
        let ct = rig.thermal_principal();
        let k = rig.thermal_focal / rig.visual_focal;
        let mut offsets: Vec<f64> = inliers
            .iter()
            .map(|&i| {
                let pv = Point2::new(src[i].x * sx, src[i].y * sy);
                let pt = h.apply(pv);
                (pv.x - cv.x) * k - (pt.x - ct.x)
            })
            .collect();
        offsets.sort_by(f64::total_cmp);
        let n = offsets.len();
        let disparity = if n % 2 == 1 { offsets[n / 2] } else { 0.5 * (offsets[n / 2 - 1] + offsets[n / 2]) };
        let distance = DistanceEstimate::from_disparity(
            disparity,
            rig.thermal_focal,
            rig.baseline,
            self.cfg.disparity_tolerance,
        )
        .or_else(|| self.fallback_distance(r));

        PersonAlignment {
            id: r.id,
            mapping: Mapping::Homography(h),
            low_confidence: false,
            inliers: inliers.len(),
            disparity: Some(disparity),
            distance,
        }
    }

    /// Swaps the full projective fit for a scale-plus-translation fit over the
    /// same consensus set when the simpler model explains every member within
    /// the RANSAC threshold. A person is close to fronto-parallel, so the
    /// extra projective freedom mostly fits quantization noise and then
    /// extrapolates poorly toward the head.
    fn select_model(
        &self,
        full: Homography,
        inliers: Vec<usize>,
        src: &[Point2],
        dst: &[Point2],
    ) -> (Homography, Vec<usize>) {
        let thr = self.cfg.ransac.threshold;
        let scale = self.rig.thermal_focal * self.rig.scale().0 / self.rig.visual_focal;
        let s: Vec<Point2> = inliers.iter().map(|&i| src[i]).collect();
        let d: Vec<Point2> = inliers.iter().map(|&i| dst[i]).collect();
        let Some(mut simple) = fit_scale_translation(&s, &d, Some(scale)) else {
            return (full, inliers);
        };
        let (idx, _) = consensus(&simple, src, dst, thr);
        if !inliers.iter().all(|i| idx.contains(i)) {
            return (full, inliers);
        }
        // Two parameters leave little room to absorb near-miss matches, so
        // refit on the tighter core of the consensus until it stops changing.
        let mut core = consensus(&simple, src, dst, 0.5 * thr).0;
        for _ in 0..5 {
            if core.len() < self.cfg.min_inliers.max(2) {
                break;
            }
            let s: Vec<Point2> = core.iter().map(|&i| src[i]).collect();
            let d: Vec<Point2> = core.iter().map(|&i| dst[i]).collect();
            let Some(next) = fit_scale_translation(&s, &d, Some(scale)) else { break };
            simple = next;
            let next_core = consensus(&simple, src, dst, 0.5 * thr).0;
            if next_core == core {
                break;
            }
            core = next_core;
        }
        let (idx, mean) = consensus(&simple, src, dst, thr);
        if idx.len() >= self.cfg.min_inliers {
            simple.inlier_count = idx.len();
            simple.mean_residual = mean;
            (simple, idx)
        } else {
            (full, inliers)
        }
    }

    /// Rejects fits whose centre lands outside the search window or whose
    /// local scale departs from the sensor resolution ratio.
    fn plausible(&self, h: &Homography, region: &BBox) -> bool {
        let c = region.center();
        let manual = self.cfg.manual.inverse(c);
        let got = h.apply(c);
        let (mx, my) = self.cfg.search_margin;
        if !((got.x - manual.x).abs() <= mx && (got.y - manual.y).abs() <= my) {
            return false;
        }
        let (sx, sy) = self.rig.scale();
        let step = 10.0;
        let gx = h.apply(Point2::new(c.x + step, c.y)).distance(&got) * sx / step;
        let gy = h.apply(Point2::new(c.x, c.y + step)).distance(&got) * sy / step;
        (0.7..=1.4).contains(&gx) && (0.7..=1.4).contains(&gy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manual_map_cases() {
        let id = AffineOffset::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(manual_offset_map(Point2::new(0.0, 0.0), &id), Point2::new(0.0, 0.0));
        let t = AffineOffset::new(75.0, -25.0, 1.0, 1.0).unwrap();
        assert_eq!(manual_offset_map(Point2::new(100.0, 100.0), &t), Point2::new(175.0, 75.0));
        let s = AffineOffset::new(0.0, 0.0, 1280.0 / 336.0, 960.0 / 252.0).unwrap();
        let c = manual_offset_map(Point2::new(336.0, 252.0), &s);
        assert!((c.x - 1280.0).abs() < 1e-9 && (c.y - 960.0).abs() < 1e-9);
        assert!(AffineOffset::new(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn manual_map_is_affine() {
        let o = AffineOffset::default();
        let p = Point2::new(12.0, 40.0);
        let q = Point2::new(200.0, 7.0);
        let (a, b) = (0.3, 0.7);
        let mix = Point2::new(a * p.x + b * q.x, a * p.y + b * q.y);
        let lhs = manual_offset_map(mix, &o);
        let fp = manual_offset_map(p, &o);
        let fq = manual_offset_map(q, &o);
        assert!((lhs.x - (a * fp.x + b * fq.x)).abs() < 1e-9);
        assert!((lhs.y - (a * fp.y + b * fq.y)).abs() < 1e-9);
        let back = o.inverse(fp);
        assert!((back.x - p.x).abs() < 1e-9 && (back.y - p.y).abs() < 1e-9);
    }
}
