use std::error::Error;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use f3s_core::align::report::{alignment_report, write_report};
use f3s_core::autocal::{run_calibration_loop, write_trace, CalibState};
use f3s_core::compensate::{train_adam, write_loss_history, Mlp, TrainConfig};
use f3s_core::pipeline::{
    evaluate, read_alerts, read_training_samples, run_pipeline, threads_from_env, with_threads, Confusion,
    PipelineConfig, THREADS_ENV,
};
use f3s_core::simkit::{generate_scenario, read_dataset, read_groundtruth, write_dataset, GenerationConfig};
use serde::Serialize;

type Failure = Box<dyn Error>;

fn defaults_json<T: Serialize + Default>() -> String {
    serde_json::to_string_pretty(&T::default()).expect("default config serializes")
}

fn pipeline_help() -> String {
    format!(
        "Pipeline config (every field optional; defaults shown):\n{}\n\n\
         {THREADS_ENV}=N caps worker threads; 0 runs single-threaded and deterministic.",
        defaults_json::<PipelineConfig>()
    )
}

#[derive(Parser)]
#[command(name = "f3s", version, about = "Free-flow fever screening on simulated visual/thermal streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (frames, detections, ground truth).
    #[command(after_long_help = format!("Scenario config (every field optional; defaults shown):\n{}", defaults_json::<GenerationConfig>()))]
    Simulate(SimulateArgs),
    /// Run the screening pipeline over a dataset.
    #[command(after_long_help = pipeline_help())]
    Run(RunArgs),
    /// Fit the distance-compensation model from readings paired with ground truth.
    #[command(after_long_help = format!("Training config (every field optional; defaults shown):\n{}", defaults_json::<TrainConfig>()))]
    TrainCompensation(TrainArgs),
    /// Replay a dataset's black-body readings through the calibration loop.
    #[command(after_long_help = pipeline_help())]
    Calibrate(CalibrateArgs),
    /// Compare raw, manual-offset and dynamic alignment errors per distance.
    #[command(after_long_help = pipeline_help())]
    AlignReport(AlignReportArgs),
    /// Score alerts against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario config JSON; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed for population and noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    dataset: PathBuf,
    /// Pipeline config JSON; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for readings, alerts and metrics.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// readings_gt.csv produced by `run`.
    #[arg(long)]
    data: PathBuf,
    /// Training config JSON; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model file to write; loss_history.csv is written beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    dataset: PathBuf,
    /// Pipeline config JSON; only the `calibration` section is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trace CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AlignReportArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    dataset: PathBuf,
    /// Pipeline config JSON; the `align` section and capture zone are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// alerts.jsonl produced by `run`.
    #[arg(long)]
    alerts: PathBuf,
    /// groundtruth.csv from the dataset.
    #[arg(long)]
    groundtruth: PathBuf,
    /// Fever threshold, °C.
    #[arg(long, default_value_t = 38.0)]
    threshold: f64,
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn create_file(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    }
    let f = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), Failure> {
    w.flush().map_err(|e| format!("{}: {e}", path.display()).into())
}

fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let cfg: GenerationConfig = read_json(a.config.as_deref())?;
    let scenario = generate_scenario(&cfg, a.seed)?;
    write_dataset(&scenario, &a.out)?;
    println!("wrote {} frames, {} people to {}", scenario.frame_count(), scenario.people.len(), a.out.display());
    Ok(())
}

fn run(a: &RunArgs) -> Result<(), Failure> {
    let mut cfg: PipelineConfig = read_json(a.config.as_deref())?;
    if let (Some(model), Some(config)) = (&cfg.compensation_model, &a.config) {
        if model.is_relative() {
            let base = config.parent().unwrap_or(Path::new(""));
            cfg.compensation_model = Some(base.join(model));
        }
    }
    let model = match cfg.compensation_model.as_deref() {
        Some(p) => Some(Mlp::load(p).map_err(|e| format!("{}: {e}", p.display()))?),
        None => None,
    };
    let dataset = read_dataset(&a.dataset)?;
    let summary =
        with_threads(threads_from_env(), |par| run_pipeline(&dataset, &cfg, model.as_ref(), Some(&a.out), par))?;
    let m = &summary.metrics;
    println!(
        "{} frames, {} readings, {} alerts; TP {} FP {} TN {} FN {}; {:.1} fps",
        summary.frames.len(),
        summary.readings().count(),
        summary.alerts().count(),
        m.tp,
        m.fp,
        m.tn,
        m.fn_,
        m.fps
    );
    Ok(())
}

fn train(a: &TrainArgs) -> Result<(), Failure> {
    let cfg: TrainConfig = read_json(a.config.as_deref())?;
    let samples = read_training_samples(&a.data)?;
    let (model, report) = train_adam(&samples, &cfg)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    }
    model.save(&a.out)?;
    let history = a.out.with_file_name("loss_history.csv");
    let mut w = create_file(&history)?;
    write_loss_history(&report, &mut w).map_err(|e| format!("{}: {e}", history.display()))?;
    finish(w, &history)?;
    println!(
        "trained on {} samples ({} held out); test MSE {:.4} °C²",
        report.n_train, report.n_test, report.test_mse
    );
    Ok(())
}

fn calibrate(a: &CalibrateArgs) -> Result<(), Failure> {
    let cfg: PipelineConfig = read_json(a.config.as_deref())?;
    let dataset = read_dataset(&a.dataset)?;
    let mut state = CalibState::new(&dataset.scenario.black_body, &cfg.calibration)?;
    let trace = run_calibration_loop(&dataset, &mut state)?;
    let mut w = create_file(&a.out)?;
    write_trace(&trace, &mut w).map_err(|e| format!("{}: {e}", a.out.display()))?;
    finish(w, &a.out)?;
    println!("{} samples, {} control signals", trace.samples.len(), trace.signals().count());
    Ok(())
}

fn align_report(a: &AlignReportArgs) -> Result<(), Failure> {
    let cfg: PipelineConfig = read_json(a.config.as_deref())?;
    let dataset = read_dataset(&a.dataset)?;
    let (near, far) = cfg.screening.capture_zone;
    let rows = alignment_report(&dataset, &cfg.align, near, far)?;
    let mut w = create_file(&a.out)?;
    write_report(&rows, &mut w).map_err(|e| format!("{}: {e}", a.out.display()))?;
    finish(w, &a.out)?;
    println!("{} rows", rows.len());
    Ok(())
}

fn print_confusion(c: &Confusion) {
    println!("TP {} FP {} TN {} FN {}", c.tp, c.fp, c.tn, c.fn_);
    println!("sensitivity {:.3}", c.sensitivity);
    println!("specificity {:.3}", c.specificity);
    if c.vacuous_sensitivity {
        println!("note: no febrile people in ground truth; sensitivity is vacuous");
    }
}

fn eval(a: &EvalArgs) -> Result<(), Failure> {
    let alerts = read_alerts(&a.alerts)?;
    let gt = read_groundtruth(&a.groundtruth)?;
    let c = evaluate(&alerts, &gt, a.threshold).map_err(|e| format!("{}: {e}", a.alerts.display()))?;
    print_confusion(&c);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::TrainCompensation(a) => train(a),
        Command::Calibrate(a) => calibrate(a),
        Command::AlignReport(a) => align_report(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
