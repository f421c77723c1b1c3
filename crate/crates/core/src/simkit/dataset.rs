//! On-disk dataset layout:
//!
//! ```text
//! scenario.json
//! frames/visual_000000.pgm    binary 8-bit PGM
//! frames/thermal_000000.bin   "W H\n" + little-endian f32 °C, row-major
//! detections.jsonl            one Detection per line
//! groundtruth.csv             frame,person_id,core_temp_c,distance_m,visible
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Detection, FramePair, Scenario, SceneRenderer, SimError};
use crate::image::{GrayImage, ThermalGrid};

pub const SCENARIO_FILE: &str = "scenario.json";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const GROUNDTRUTH_FILE: &str = "groundtruth.csv";
const GROUNDTRUTH_HEADER: &str = "frame,person_id,core_temp_c,distance_m,visible";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub frame: u64,
    pub person_id: u32,
    pub core_temp_c: f64,
    pub distance_m: f64,
    pub visible: bool,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io { path: path.display().to_string(), source }
}

fn malformed(path: &Path, reason: impl Into<String>) -> SimError {
    SimError::Malformed { path: path.display().to_string(), reason: reason.into() }
}

pub fn visual_path(dir: &Path, seq: u64) -> PathBuf {
    dir.join("frames").join(format!("visual_{seq:06}.pgm"))
}

pub fn thermal_path(dir: &Path, seq: u64) -> PathBuf {
    dir.join("frames").join(format!("thermal_{seq:06}.bin"))
}

/// Renders every frame of `scenario` into `dir`.
pub fn write_dataset(scenario: &Scenario, dir: &Path) -> Result<(), SimError> {
    let renderer = SceneRenderer::new(scenario.clone())?;
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(io_err(&frames_dir))?;

    let scen_path = dir.join(SCENARIO_FILE);
    let json = serde_json::to_string_pretty(scenario).map_err(|e| malformed(&scen_path, e.to_string()))?;
    fs::write(&scen_path, json + "\n").map_err(io_err(&scen_path))?;

    let det_path = dir.join(DETECTIONS_FILE);
    let gt_path = dir.join(GROUNDTRUTH_FILE);
    let mut det_out = BufWriter::new(File::create(&det_path).map_err(io_err(&det_path))?);
    let mut gt_out = BufWriter::new(File::create(&gt_path).map_err(io_err(&gt_path))?);
    writeln!(gt_out, "{GROUNDTRUTH_HEADER}").map_err(io_err(&gt_path))?;

    for seq in 0..renderer.frame_count() {
        let pair = renderer.render_frame(seq)?;
        let vp = visual_path(dir, seq);
        let tp = thermal_path(dir, seq);
        pair.visual
            .write_pgm(BufWriter::new(File::create(&vp).map_err(io_err(&vp))?))
            .map_err(io_err(&vp))?;
        pair.thermal
            .write_bin(BufWriter::new(File::create(&tp).map_err(io_err(&tp))?))
            .map_err(io_err(&tp))?;
        for d in renderer.detections(seq)? {
            let line = serde_json::to_string(&d).map_err(|e| malformed(&det_path, e.to_string()))?;
            writeln!(det_out, "{line}").map_err(io_err(&det_path))?;
        }
        for r in renderer.ground_truth(seq)? {
            writeln!(
                gt_out,
                "{},{},{},{},{}",
                r.frame, r.person_id, r.core_temp_c, r.distance_m, r.visible as u8
            )
            .map_err(io_err(&gt_path))?;
        }
    }
    det_out.flush().map_err(io_err(&det_path))?;
    gt_out.flush().map_err(io_err(&gt_path))?;
    Ok(())
}

/// A dataset directory; frames are loaded on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub scenario: Scenario,
    /// Detections grouped by frame index.
    pub detections: Vec<Vec<Detection>>,
    pub groundtruth: Vec<GroundTruthRow>,
}

impl Dataset {
    pub fn frame_count(&self) -> u64 {
        self.detections.len() as u64
    }

    pub fn frame(&self, seq: u64) -> Result<FramePair, SimError> {
        let count = self.frame_count();
        if seq >= count {
            return Err(SimError::FrameOutOfRange { seq, count });
        }
        let vp = visual_path(&self.dir, seq);
        let tp = thermal_path(&self.dir, seq);
        let visual = GrayImage::read_pgm(BufReader::new(File::open(&vp).map_err(io_err(&vp))?))
            .map_err(|e| malformed(&vp, e.to_string()))?;
        let thermal = ThermalGrid::read_bin(BufReader::new(File::open(&tp).map_err(io_err(&tp))?))
            .map_err(|e| malformed(&tp, e.to_string()))?;
        let rig = &self.scenario.geometry;
        if (visual.width, visual.height) != rig.visual_resolution {
            return Err(malformed(&vp, "dimensions differ from scenario rig"));
        }
        if (thermal.width, thermal.height) != rig.thermal_resolution {
            return Err(malformed(&tp, "dimensions differ from scenario rig"));
        }
        Ok(FramePair { seq, timestamp: self.scenario.frame_time(seq), visual, thermal })
    }
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, SimError> {
    let scen_path = dir.join(SCENARIO_FILE);
    let text = fs::read_to_string(&scen_path).map_err(io_err(&scen_path))?;
    let scenario: Scenario =
        serde_json::from_str(&text).map_err(|e| malformed(&scen_path, e.to_string()))?;
    scenario.validate().map_err(|e| malformed(&scen_path, e.to_string()))?;
    let count = scenario.frame_count();

    let det_path = dir.join(DETECTIONS_FILE);
    let det_file = File::open(&det_path).map_err(io_err(&det_path))?;
    let mut detections: Vec<Vec<Detection>> = vec![Vec::new(); count as usize];
    for (lineno, line) in BufReader::new(det_file).lines().enumerate() {
        let line = line.map_err(io_err(&det_path))?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Detection = serde_json::from_str(&line)
            .map_err(|e| malformed(&det_path, format!("line {}: {e}", lineno + 1)))?;
        let slot = detections
            .get_mut(d.frame_seq as usize)
            .ok_or_else(|| malformed(&det_path, format!("line {}: frame out of range", lineno + 1)))?;
        slot.push(d);
    }

    let groundtruth = read_groundtruth(&dir.join(GROUNDTRUTH_FILE))?;

    Ok(Dataset { dir: dir.to_path_buf(), scenario, detections, groundtruth })
}

/// Parses a groundtruth.csv row (no header).
pub fn parse_gt_row(line: &str) -> Option<GroundTruthRow> {
    let f: Vec<&str> = line.trim().split(',').collect();
    if f.len() != 5 {
        return None;
    }
    Some(GroundTruthRow {
        frame: f[0].parse().ok()?,
        person_id: f[1].parse().ok()?,
        core_temp_c: f[2].parse().ok()?,
        distance_m: f[3].parse().ok()?,
        visible: match f[4] {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return None,
        },
    })
}

/// Reads a standalone groundtruth.csv.
pub fn read_groundtruth(path: &Path) -> Result<Vec<GroundTruthRow>, SimError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(GROUNDTRUTH_HEADER) {
        return Err(malformed(path, "missing or unexpected header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_gt_row(l).ok_or_else(|| malformed(path, format!("row {}", i + 2))))
        .collect()
}
