//! Registration error of the three mapping strategies along a walk toward
//! the camera, measured at each person's head centre.

use std::io::Write;

use super::{AffineOffset, AlignConfig, AlignState, Mapping, PersonRegion};
use crate::domain::BBox;
use crate::simkit::{FrameSource, PersonPose, PersonSpec, Scenario, SimError, Waypoint};

pub const REPORT_HEADER: &str =
    "distance_ft,x_err_before,y_err_before,x_err_manual,y_err_manual,x_err_dynamic,y_err_dynamic";

pub const METERS_PER_FOOT: f64 = 0.3048;

/// Signed errors in visual pixels: where each strategy places the thermal
/// head centre relative to the true visual head centre.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignReportRow {
    pub frame: u64,
    pub person_id: u32,
    pub distance_ft: f64,
    pub lateral_m: f64,
    pub x_err_before: f64,
    pub y_err_before: f64,
    pub x_err_manual: f64,
    pub y_err_manual: f64,
    pub x_err_dynamic: f64,
    pub y_err_dynamic: f64,
    /// Dynamic alignment fell back to the manual offset.
    pub fallback: bool,
}

impl AlignReportRow {
    pub fn dynamic_residual(&self) -> f64 {
        self.x_err_dynamic.hypot(self.y_err_dynamic)
    }

    pub fn manual_residual(&self) -> f64 {
        self.x_err_manual.hypot(self.y_err_manual)
    }
}

/// Union of the visible body and head boxes, clipped to the frame.
pub fn truth_region(pose: &PersonPose<'_>, scenario: &Scenario) -> Option<BBox> {
    let rig = &scenario.geometry;
    let frame = BBox::new(0.0, 0.0, rig.visual_resolution.0 as f64, rig.visual_resolution.1 as f64).ok()?;
    pose.body_box(rig).union_hull(&pose.head_box(rig)).intersection(&frame)
}

fn errors_for(
    pose: &PersonPose<'_>,
    scenario: &Scenario,
    manual: &AffineOffset,
    mapping: &Mapping,
) -> [f64; 6] {
    let rig = &scenario.geometry;
    let pv = pose.visual_head_center(rig);
    let pt = pose.thermal_head_center(rig);
    let before = AffineOffset::scale_only(rig).forward(pt);
    let man = manual.forward(pt);
    let (sx, sy) = rig.scale();
    let dyn_t = mapping.to_thermal(pv);
    [
        before.x - pv.x,
        before.y - pv.y,
        man.x - pv.x,
        man.y - pv.y,
        (dyn_t.x - pt.x) * sx,
        (dyn_t.y - pt.y) * sy,
    ]
}

/// Runs dynamic alignment over every frame of `source`, using the
/// simulator's true person boxes as regions, and reports errors for people
/// whose depth lies in `[min_m, max_m]`.
pub fn alignment_report(
    source: &dyn FrameSource,
    cfg: &AlignConfig,
    min_m: f64,
    max_m: f64,
) -> Result<Vec<AlignReportRow>, SimError> {
    let scenario = source.scenario();
    let mut state = AlignState::new(&scenario.geometry, cfg.clone());
    let mut rows = Vec::new();
    for seq in 0..source.frame_count() {
        let frame = source.frame(seq)?;
        let ff = state.prepare(&frame).map_err(|e| SimError::Malformed {
            path: format!("frame {seq}"),
            reason: e.to_string(),
        })?;
        let t = scenario.frame_time(seq);
        let poses = scenario.poses(t);
        let mut by_id: Vec<&PersonPose<'_>> = poses.iter().collect();
        by_id.sort_by_key(|p| p.spec.id);
        for pose in by_id {
            if pose.z < min_m || pose.z > max_m {
                continue;
            }
            let Some(region) = truth_region(pose, scenario) else { continue };
            let rig = &scenario.geometry;
            let pr = PersonRegion {
                id: pose.spec.id as u64,
                region,
                head: Some(pose.head_box(rig)),
                face: Some(pose.face_box(rig)),
            };
            let a = state.align_person(&ff, &pr, seq);
            let e = errors_for(pose, scenario, &cfg.manual, &a.mapping);
            rows.push(AlignReportRow {
                frame: seq,
                person_id: pose.spec.id,
                distance_ft: pose.z / METERS_PER_FOOT,
                lateral_m: pose.x,
                x_err_before: e[0],
                y_err_before: e[1],
                x_err_manual: e[2],
                y_err_manual: e[3],
                x_err_dynamic: e[4],
                y_err_dynamic: e[5],
                fallback: a.low_confidence,
            });
        }
    }
    Ok(rows)
}

/// One noise-free person walking straight at the camera from 4.6 m to
/// 0.6 m at lateral offset `lateral_m`, after a warm-up of empty frames.
pub fn transit_scenario(lateral_m: f64, seed: u64) -> Scenario {
    let lead_in = 3.0;
    let speed = 0.8;
    let (z0, z1) = (4.6, 0.6);
    let t1 = lead_in + (z0 - z1) / speed;
    let mut s = Scenario::empty(t1 + 0.5, seed);
    s.people.push(PersonSpec::walking(
        1,
        37.0,
        Waypoint { t: lead_in, x: lateral_m, z: z0 },
        Waypoint { t: t1, x: lateral_m, z: z1 },
    ));
    s
}

pub fn write_report<W: Write>(rows: &[AlignReportRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
            r.distance_ft, r.x_err_before, r.y_err_before, r.x_err_manual, r.y_err_manual, r.x_err_dynamic, r.y_err_dynamic
        )?;
    }
    Ok(())
}
