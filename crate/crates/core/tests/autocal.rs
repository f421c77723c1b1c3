use f3s_core::autocal::{run_calibration_loop, CalibConfig, CalibState};
use f3s_core::simkit::{DriftProfile, Scenario, SceneRenderer};

fn drifting(offset: f64, duration: f64) -> (SceneRenderer, CalibState) {
    let mut s = Scenario::empty(duration, 2);
    s.drift = DriftProfile::step(10.0, offset);
    let state = CalibState::new(&s.black_body, &CalibConfig::default()).unwrap();
    (SceneRenderer::new(s).unwrap(), state)
}

#[test]
fn positive_drift_converges_within_five_settling_periods() {
    let (r, mut state) = drifting(5.0, 45.0);
    let trace = run_calibration_loop(&r, &mut state).unwrap();
    assert!(trace.samples.windows(2).all(|w| w[1].time > w[0].time));
    let signals: Vec<_> = trace.signals().collect();
    assert!(signals.windows(2).all(|w| w[1].time - w[0].time >= 5.0 - 1e-9));
    assert!(signals.windows(2).all(|w| w[1].error.abs() < w[0].error.abs()));
    let deadline = 10.0 + 5.0 * 5.0;
    let settled = trace.samples.iter().filter(|s| s.time >= deadline);
    assert!(settled.clone().count() > 0);
    assert!(settled.clone().all(|s| s.error.abs() < 0.3), "{:?}", settled.map(|s| s.error).collect::<Vec<_>>());
}

#[test]
fn no_drift_means_no_signals() {
    let (r, mut state) = drifting(0.0, 20.0);
    let trace = run_calibration_loop(&r, &mut state).unwrap();
    assert_eq!(trace.signals().count(), 0);
    assert_eq!(state.correction_offset, 0.0);
}

#[test]
fn negative_step_is_cancelled() {
    let (r, mut state) = drifting(-2.0, 40.0);
    run_calibration_loop(&r, &mut state).unwrap();
    assert!((state.correction_offset - 2.0).abs() <= 0.3, "offset {}", state.correction_offset);
}
