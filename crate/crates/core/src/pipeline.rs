//! The streaming engine: per frame, calibrate against the black body, track
//! detections, align each person, measure, refine and alert. Also the
//! per-person evaluation against ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{AlignConfig, AlignError, AlignState, PersonRegion};
use crate::autocal::{controller_step, monitor_black_body, CalibConfig, CalibError, CalibState};
use crate::compensate::{correct_temperature, Mlp, Sample};
use crate::domain::BBox;
use crate::fever::{
    expire_records, process_frame, refine_and_alert, render_annotations, write_alert, write_reading, Alert,
    PersonObservation, Reading, ScreeningConfig, ScreeningError, ScreeningState, READINGS_HEADER,
};
use crate::simkit::{CameraRig, Detection, DetectionKind, FramePair, FrameSource, GroundTruthRow, Scenario, SimError};
use crate::track::{assign_ids, expire_stale, PersonCache, TrackConfig, TrackError};

pub const READINGS_FILE: &str = "readings.csv";
pub const READINGS_GT_FILE: &str = "readings_gt.csv";
pub const ALERTS_FILE: &str = "alerts.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const LATENCY_FILE: &str = "latency.csv";
pub const READINGS_GT_HEADER: &str = "frame,person_id,truth_id,priority,raw_c,corrected_c,distance_m,core_temp_c";
const LATENCY_HEADER: &str = "frame,calibrate_ms,track_ms,align_ms,screen_ms,total_ms";

/// Environment variable capping the worker count; `0` selects the
/// single-threaded mode.
pub const THREADS_ENV: &str = "F3S_THREADS";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Source(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("inconsistent configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Calibration(#[from] CalibError),
    #[error(transparent)]
    Screening(#[from] ScreeningError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {reason}")]
    Malformed { path: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError {
    let path = path.display().to_string();
    move |source| PipelineError::Io { path, source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub align: AlignConfig,
    pub track: TrackConfig,
    pub screening: ScreeningConfig,
    pub calibration: CalibConfig,
    /// Distance-compensation model file; raw temperatures are reported when
    /// absent. Relative paths resolve against the config file's directory.
    pub compensation_model: Option<PathBuf>,
    /// Write an annotated PPM per frame under `frames/`.
    pub annotate: bool,
}

impl PipelineConfig {
    /// Checks every module config plus their agreement with the rig.
    pub fn validate(&self, rig: &CameraRig) -> Result<(), PipelineError> {
        self.track.validate()?;
        self.screening.validate()?;
        let (vw, vh) = rig.visual_resolution;
        let roi = &self.screening.roi;
        if roi.x() < 0.0 || roi.y() < 0.0 || roi.right() > vw as f64 || roi.bottom() > vh as f64 {
            return Err(PipelineError::Config(format!("screening roi {roi:?} exceeds the {vw}x{vh} visual frame")));
        }
        if self.align.background_min_frames == 0 || self.align.background_min_frames > self.align.background_window {
            return Err(PipelineError::Config("background_min_frames must lie in 1..=background_window".into()));
        }
        Ok(())
    }
}

/// Wall-clock time spent in each stage of one frame, milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub calibrate: f64,
    pub track: f64,
    pub align: f64,
    pub screen: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_seq: u64,
    pub readings: Vec<Reading>,
    pub alerts: Vec<Alert>,
    pub annotation_path: Option<PathBuf>,
    pub latency: StageLatency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub frames: Vec<FrameResult>,
    pub metrics: RunMetrics,
}

impl RunSummary {
    pub fn readings(&self) -> impl Iterator<Item = &Reading> {
        self.frames.iter().flat_map(|f| f.readings.iter())
    }

    pub fn alerts(&self) -> impl Iterator<Item = &Alert> {
        self.frames.iter().flat_map(|f| f.alerts.iter())
    }
}

/// Per-person confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    /// True when there were no febrile people, so sensitivity is reported
    /// as 1.0 without evidence.
    pub vacuous_sensitivity: bool,
}

impl Confusion {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        Self {
            tp,
            fp,
            tn,
            fn_,
            sensitivity: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
            vacuous_sensitivity: tp + fn_ == 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyPercentiles {
    pub p50: f64,
    pub p95: f64,
}

/// Contents of metrics.json.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Frames processed per second of pipeline time (frame acquisition
    /// excluded).
    pub fps: f64,
    pub latency_ms: LatencyPercentiles,
    pub vacuous_sensitivity: bool,
}

impl RunMetrics {
    pub fn confusion(&self) -> Confusion {
        Confusion::from_counts(self.tp, self.fp, self.tn, self.fn_)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("alert for tracked person {0} carries no ground-truth identity")]
    Unattributed(u64),
    #[error("alerted person {0} is absent from the ground truth")]
    UnknownPerson(u32),
}

/// Febrile label per person: the maximum core temperature across all of
/// that person's frames, compared with `threshold`.
pub fn label_people(groundtruth: &[GroundTruthRow], threshold: f64) -> BTreeMap<u32, bool> {
    let mut max: BTreeMap<u32, f64> = BTreeMap::new();
    for r in groundtruth {
        let m = max.entry(r.person_id).or_insert(f64::NEG_INFINITY);
        *m = m.max(r.core_temp_c);
    }
    max.into_iter().map(|(id, t)| (id, t >= threshold)).collect()
}

/// Per-person confusion counts: a person is positive when any alert names
/// them.
pub fn evaluate(alerts: &[Alert], groundtruth: &[GroundTruthRow], threshold: f64) -> Result<Confusion, EvalError> {
    let labels = label_people(groundtruth, threshold);
    let mut alerted = BTreeSet::new();
    for a in alerts {
        let t = a.truth_id.ok_or(EvalError::Unattributed(a.person_id))?;
        if !labels.contains_key(&t) {
            return Err(EvalError::UnknownPerson(t));
        }
        alerted.insert(t);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (id, febrile) in &labels {
        match (*febrile, alerted.contains(id)) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Confusion::from_counts(tp, fp, tn, fn_))
}

/// Nearest-rank percentile of an unsorted sample; 0 for an empty one.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

/// Parses a JSON alerts stream, one alert per line.
pub fn read_alerts(path: &Path) -> Result<Vec<Alert>, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut alerts = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        alerts.push(serde_json::from_str(&line).map_err(|e| PipelineError::Malformed {
            path: path.display().to_string(),
            reason: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(alerts)
}

/// Training samples from a readings_gt.csv file; rows without a ground-truth
/// identity are skipped.
pub fn read_training_samples(path: &Path) -> Result<Vec<Sample>, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let malformed = |reason: String| PipelineError::Malformed { path: path.display().to_string(), reason };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(READINGS_GT_HEADER) {
        return Err(malformed("missing or unexpected header".into()));
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 8 {
            return Err(malformed(format!("row {}: expected 8 fields", i + 2)));
        }
        if f[7].is_empty() {
            continue;
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| malformed(format!("row {}: {e}", i + 2)));
        samples.push(Sample { distance: num(f[6])?, measured: num(f[4])?, truth: num(f[7])? });
    }
    Ok(samples)
}

/// Pairs every attributed reading of a run with its person's core
/// temperature, giving distance-compensation training samples.
pub fn training_samples(summary: &RunSummary, scenario: &Scenario) -> Vec<Sample> {
    summary
        .readings()
        .filter_map(|r| {
            let core = scenario.person(r.truth_id?)?.core_temp;
            Some(Sample { distance: r.distance, measured: r.raw_temp, truth: core })
        })
        .collect()
}

/// Worker count requested through [`THREADS_ENV`], if set and valid.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok())
}

/// Runs `f` single-threaded (`Some(0)`), on a pool of `n` workers
/// (`Some(n)`), or on the global pool (`None`). The flag passed to `f` says
/// whether it may fan work out.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce(bool) -> T + Send) -> T {
    match threads {
        Some(0) => f(false),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| f(n > 1)),
            Err(_) => f(false),
        },
        None => f(rayon::current_num_threads() > 1),
    }
}

/// Output of one engine step.
struct StepOutput {
    readings: Vec<Reading>,
    alerts: Vec<Alert>,
    annotations: Vec<crate::fever::Annotation>,
    latency: StageLatency,
}

/// All mutable per-stream state, advanced strictly in frame order.
struct Engine<'a> {
    cfg: &'a PipelineConfig,
    model: Option<&'a Mlp>,
    align: AlignState,
    tracks: PersonCache,
    screening: ScreeningState,
    calib: CalibState,
    parallel: bool,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

/// Groups one frame's detections by tracked ID.
fn observations(dets: &[Detection], ids: &[Option<u64>]) -> Vec<PersonObservation> {
    let mut by_id: BTreeMap<u64, PersonObservation> = BTreeMap::new();
    for (d, id) in dets.iter().zip(ids) {
        let Some(id) = *id else { continue };
        let o = by_id.entry(id).or_insert_with(|| PersonObservation { id, ..Default::default() });
        let slot = match d.kind {
            DetectionKind::Body => &mut o.body,
            DetectionKind::Face => &mut o.face,
            DetectionKind::Head => &mut o.head,
            DetectionKind::Eye => &mut o.eye,
        };
        slot.get_or_insert(d.bbox);
        if o.truth_id.is_none() {
            o.truth_id = d.truth_id;
        }
    }
    by_id.into_values().collect()
}

fn region_of(obs: &PersonObservation, frame: &BBox) -> Option<PersonRegion> {
    let hull = [obs.body, obs.head, obs.face, obs.eye].into_iter().flatten().reduce(|a, b| a.union_hull(&b))?;
    Some(PersonRegion { id: obs.id, region: hull.intersection(frame)?, head: obs.head, face: obs.face })
}

impl<'a> Engine<'a> {
    fn new(source: &dyn FrameSource, cfg: &'a PipelineConfig, model: Option<&'a Mlp>, parallel: bool) -> Result<Self, PipelineError> {
        let scenario = source.scenario();
        cfg.validate(&scenario.geometry)?;
        Ok(Self {
            cfg,
            model,
            align: AlignState::new(&scenario.geometry, cfg.align.clone()),
            tracks: PersonCache::new(),
            screening: ScreeningState::new(),
            calib: CalibState::new(&scenario.black_body, &cfg.calibration)?,
            parallel,
        })
    }

    fn step(&mut self, frame: &FramePair, dets: &[Detection]) -> Result<Option<StepOutput>, PipelineError> {
        if self.screening.last_seq.is_some_and(|last| frame.seq <= last) {
            return Ok(None);
        }
        let start = Instant::now();
        let now = frame.timestamp;

        let t = Instant::now();
        let measured = monitor_black_body(&frame.thermal, &self.calib)?;
        controller_step(&mut self.calib, measured, now);
        let offset = self.calib.correction_offset;
        let calibrate = ms(t);

        let t = Instant::now();
        let blind: Vec<Detection> = dets.iter().map(Detection::without_truth).collect();
        let ids = assign_ids(&blind, &mut self.tracks, &self.cfg.track, now);
        let people = observations(dets, &ids);
        let track = ms(t);

        let t = Instant::now();
        let ff = self.align.prepare(frame)?;
        let (vw, vh) = self.align.rig().visual_resolution;
        let frame_box = BBox::new(0.0, 0.0, vw as f64, vh as f64).expect("validated rig");
        let regions: Vec<PersonRegion> = people.iter().filter_map(|o| region_of(o, &frame_box)).collect();
        let alignment = self.align.align_regions(&ff, &regions, frame.seq, self.parallel);
        let align = ms(t);

        let t = Instant::now();
        let model = self.model;
        let correct = |raw: f64, d: f64| correct_temperature(model, raw, d).celsius;
        let screened = process_frame(
            &mut self.screening,
            frame.seq,
            now,
            &people,
            &alignment,
            &frame.thermal,
            offset,
            &self.cfg.screening,
            &correct,
        )
        .expect("sequence checked above");
        let alerts = refine_and_alert(&mut self.screening, &self.cfg.screening, frame.seq);
        expire_stale(&mut self.tracks, now, self.cfg.track.ttl);
        expire_records(&mut self.screening, now, self.cfg.screening.cache_ttl);
        let screen = ms(t);

        Ok(Some(StepOutput {
            readings: screened.readings,
            alerts,
            annotations: screened.annotations,
            latency: StageLatency { calibrate, track, align, screen, total: ms(start) },
        }))
    }
}

/// Open output files of one run.
struct Outputs {
    dir: PathBuf,
    readings: BufWriter<File>,
    readings_gt: BufWriter<File>,
    alerts: BufWriter<File>,
    latency: BufWriter<File>,
}

impl Outputs {
    fn create(dir: &Path, annotate: bool) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        if annotate {
            let frames = dir.join("frames");
            fs::create_dir_all(&frames).map_err(io_err(&frames))?;
        }
        let open = |name: &str| -> Result<BufWriter<File>, PipelineError> {
            let p = dir.join(name);
            Ok(BufWriter::new(File::create(&p).map_err(io_err(&p))?))
        };
        let mut out = Self {
            dir: dir.to_path_buf(),
            readings: open(READINGS_FILE)?,
            readings_gt: open(READINGS_GT_FILE)?,
            alerts: open(ALERTS_FILE)?,
            latency: open(LATENCY_FILE)?,
        };
        let e = |name: &str| io_err(&dir.join(name));
        writeln!(out.readings, "{READINGS_HEADER}").map_err(e(READINGS_FILE))?;
        writeln!(out.readings_gt, "{READINGS_GT_HEADER}").map_err(e(READINGS_GT_FILE))?;
        writeln!(out.latency, "{LATENCY_HEADER}").map_err(e(LATENCY_FILE))?;
        Ok(out)
    }

    fn write_frame(&mut self, r: &FrameResult, core_temp: &dyn Fn(Option<u32>) -> Option<f64>) -> Result<(), PipelineError> {
        let dir = self.dir.clone();
        let e = |name: &str| io_err(&dir.join(name));
        for reading in &r.readings {
            write_reading(reading, &mut self.readings).map_err(e(READINGS_FILE))?;
            let truth = reading.truth_id.map(|t| t.to_string()).unwrap_or_default();
            let core = core_temp(reading.truth_id).map(|c| c.to_string()).unwrap_or_default();
            writeln!(
                self.readings_gt,
                "{},{},{},{},{:.4},{:.4},{:.4},{}",
                reading.frame_seq,
                reading.person_id,
                truth,
                reading.priority.as_str(),
                reading.raw_temp,
                reading.corrected_temp,
                reading.distance,
                core
            )
            .map_err(e(READINGS_GT_FILE))?;
        }
        for a in &r.alerts {
            write_alert(a, &mut self.alerts).map_err(e(ALERTS_FILE))?;
        }
        let l = &r.latency;
        writeln!(
            self.latency,
            "{},{:.3},{:.3},{:.3},{:.3},{:.3}",
            r.frame_seq, l.calibrate, l.track, l.align, l.screen, l.total
        )
        .map_err(e(LATENCY_FILE))
    }

    fn finish(mut self, metrics: &RunMetrics) -> Result<(), PipelineError> {
        let dir = self.dir.clone();
        let e = |name: &str| io_err(&dir.join(name));
        self.readings.flush().map_err(e(READINGS_FILE))?;
        self.readings_gt.flush().map_err(e(READINGS_GT_FILE))?;
        self.alerts.flush().map_err(e(ALERTS_FILE))?;
        self.latency.flush().map_err(e(LATENCY_FILE))?;
        let p = dir.join(METRICS_FILE);
        let json = serde_json::to_string_pretty(metrics).expect("metrics serialize");
        fs::write(&p, json + "\n").map_err(io_err(&p))
    }
}

/// Processes every frame of `source` in sequence order. With `parallel`,
/// the next frame is fetched while the current one is processed and
/// per-person alignment fans out over the rayon pool; state still advances
/// strictly in frame order, so outputs match the sequential mode. When
/// `out` is given, readings, alerts, metrics and latencies are written
/// there.
pub fn run_pipeline(
    source: &dyn FrameSource,
    cfg: &PipelineConfig,
    model: Option<&Mlp>,
    out: Option<&Path>,
    parallel: bool,
) -> Result<RunSummary, PipelineError> {
    let mut engine = Engine::new(source, cfg, model, parallel)?;
    let groundtruth = source.ground_truth_rows()?;
    let scenario = source.scenario();
    let core_temp = |t: Option<u32>| t.and_then(|id| scenario.person(id)).map(|p| p.core_temp);
    let mut outputs = match out {
        Some(dir) => Some(Outputs::create(dir, cfg.annotate)?),
        None => None,
    };

    let n = source.frame_count();
    let mut frames = Vec::with_capacity(n as usize);
    let mut busy = 0.0f64;
    let mut next = if n > 0 { Some(source.frame(0)?) } else { None };
    let mut seq = 0u64;
    while let Some(frame) = next.take() {
        let dets = source.detections(seq)?;
        let fetch_next = || if seq + 1 < n { Some(source.frame(seq + 1)) } else { None };
        let (step, prefetched) = if parallel {
            let (step, pre) = rayon::join(|| engine.step(&frame, &dets), fetch_next);
            (step?, pre)
        } else {
            (engine.step(&frame, &dets)?, fetch_next())
        };
        next = prefetched.transpose()?;
        seq += 1;
        let Some(step) = step else { continue };
        busy += step.latency.total;
        let annotation_path = match (&outputs, cfg.annotate) {
            (Some(o), true) => {
                let p = o.dir.join("frames").join(format!("annotated_{:06}.ppm", frame.seq));
                let img = render_annotations(&frame.visual, &step.annotations);
                let f = File::create(&p).map_err(io_err(&p))?;
                img.write_ppm(BufWriter::new(f)).map_err(io_err(&p))?;
                Some(p)
            }
            _ => None,
        };
        let result = FrameResult {
            frame_seq: frame.seq,
            readings: step.readings,
            alerts: step.alerts,
            annotation_path,
            latency: step.latency,
        };
        if let Some(o) = outputs.as_mut() {
            o.write_frame(&result, &core_temp)?;
        }
        frames.push(result);
    }

    let alerts: Vec<Alert> = frames.iter().flat_map(|f| f.alerts.iter().cloned()).collect();
    let confusion = evaluate(&alerts, &groundtruth, cfg.screening.fever_threshold)?;
    let totals: Vec<f64> = frames.iter().map(|f| f.latency.total).collect();
    let metrics = RunMetrics {
        tp: confusion.tp,
        fp: confusion.fp,
        tn: confusion.tn,
        fn_: confusion.fn_,
        sensitivity: confusion.sensitivity,
        specificity: confusion.specificity,
        fps: if busy > 0.0 { frames.len() as f64 / (busy / 1000.0) } else { 0.0 },
        latency_ms: LatencyPercentiles { p50: percentile(&totals, 50.0), p95: percentile(&totals, 95.0) },
        vacuous_sensitivity: confusion.vacuous_sensitivity,
    };
    if let Some(o) = outputs {
        o.finish(&metrics)?;
    }
    Ok(RunSummary { frames, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fever::{AlertReason, RegionPriority};

    fn gt(person_id: u32, core: f64) -> GroundTruthRow {
        GroundTruthRow { frame: 0, person_id, core_temp_c: core, distance_m: 2.0, visible: true }
    }

    fn alert(truth: Option<u32>) -> Alert {
        Alert {
            person_id: 1,
            temp: 38.6,
            priority: RegionPriority::Face,
            frame_seq: 3,
            reason: AlertReason::First,
            truth_id: truth,
        }
    }

    #[test]
    fn table_shaped_counts() {
        let c = Confusion::from_counts(7, 3, 95, 0);
        assert_eq!(c.sensitivity, 1.0);
        assert_eq!(format!("{:.3}", c.specificity), "0.969");
        assert!(!c.vacuous_sensitivity);
    }

    #[test]
    fn vacuous_sensitivity_is_flagged() {
        let c = evaluate(&[], &[gt(1, 36.5)], 38.0).unwrap();
        assert_eq!((c.tn, c.sensitivity, c.specificity), (1, 1.0, 1.0));
        assert!(c.vacuous_sensitivity);
    }

    #[test]
    fn one_febrile_alerted() {
        let rows = [gt(1, 38.7), gt(2, 36.6)];
        let c = evaluate(&[alert(Some(1))], &rows, 38.0).unwrap();
        assert_eq!((c.tp, c.fn_, c.fp, c.tn), (1, 0, 0, 1));
    }

    #[test]
    fn max_rule_labels() {
        let rows = [gt(1, 37.9), GroundTruthRow { frame: 1, ..gt(1, 38.0) }];
        assert_eq!(label_people(&rows, 38.0)[&1], true);
    }

    #[test]
    fn unknown_or_unattributed_alerts_error() {
        assert_eq!(evaluate(&[alert(Some(9))], &[gt(1, 36.5)], 38.0), Err(EvalError::UnknownPerson(9)));
        assert_eq!(evaluate(&[alert(None)], &[gt(1, 36.5)], 38.0), Err(EvalError::Unattributed(1)));
    }

    #[test]
    fn nearest_rank_percentiles() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 50.0), 10.0);
        assert_eq!(percentile(&v, 95.0), 19.0);
        assert_eq!(percentile(&[], 95.0), 0.0);
    }

    #[test]
    fn metrics_json_keys() {
        let m = RunMetrics {
            tp: 1,
            fp: 0,
            tn: 2,
            fn_: 0,
            sensitivity: 1.0,
            specificity: 1.0,
            fps: 9.5,
            latency_ms: LatencyPercentiles { p50: 1.0, p95: 2.0 },
            vacuous_sensitivity: false,
        };
        let v: serde_json::Value = serde_json::to_value(m).unwrap();
        let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let want: BTreeSet<&str> =
            ["tp", "fp", "tn", "fn", "sensitivity", "specificity", "fps", "latency_ms", "vacuous_sensitivity"].into();
        assert_eq!(keys, want);
        assert!(v["latency_ms"]["p95"].is_number());
    }

    #[test]
    fn observations_group_by_id() {
        let app = crate::domain::AppearanceVector::new(vec![1.0, 0.0]).unwrap();
        let det = |kind, truth| Detection {
            frame_seq: 0,
            kind,
            bbox: BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            confidence: 1.0,
            appearance: app.clone(),
            truth_id: truth,
        };
        let dets = [det(DetectionKind::Body, Some(4)), det(DetectionKind::Eye, None), det(DetectionKind::Head, Some(5))];
        let obs = observations(&dets, &[Some(2), Some(2), None]);
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].id, 2);
        assert!(obs[0].body.is_some() && obs[0].eye.is_some() && obs[0].head.is_none());
        assert_eq!(obs[0].truth_id, Some(4));
    }
}
