//! Every example in `examples/` runs and shows what it claims.

macro_rules! example {
    ($name:ident, $path:literal) => {
        #[allow(dead_code)]
        #[path = $path]
        mod $name;
    };
}

example!(standard_signal, "../examples/standard_signal.rs");
example!(cmrr_test, "../examples/cmrr_test.rs");
example!(drift_correction, "../examples/drift_correction.rs");
example!(controller_session, "../examples/controller_session.rs");
example!(power_cycle, "../examples/power_cycle.rs");
example!(export_shot, "../examples/export_shot.rs");
example!(hold_and_trigger, "../examples/hold_and_trigger.rs");

#[test]
fn standard_signal_example() {
    let (plateau, last) = standard_signal::run().unwrap();
    assert!((plateau + 1.25).abs() <= 1.25e-3);
    assert!(last.abs() <= 1e-3);
}

#[test]
fn cmrr_example_recovers_configured_values() {
    let readings = cmrr_test::run().unwrap();
    let expected = [60.0, 60.0, 90.0, 90.0, 125.0, 125.0];
    for (r, want) in readings.iter().zip(expected) {
        assert!((r.db().unwrap() - want).abs() < 0.5, "{r}");
    }
}

#[test]
fn drift_correction_example_improves_drift() {
    assert!(drift_correction::run().unwrap());
}

#[test]
fn controller_session_example() {
    let t = controller_session::run().unwrap();
    assert_eq!(t.error_count(), 3);
}

#[test]
fn power_cycle_example() {
    assert!(power_cycle::run().unwrap());
}

#[test]
fn export_shot_example() {
    let dir = tempfile::tempdir().unwrap();
    assert!(export_shot::run(&dir.path().join("shot.csv")).unwrap());
}

#[test]
fn hold_and_trigger_example() {
    let v = hold_and_trigger::run().unwrap();
    assert!((v[0] - v[1]).abs() < 1e-12, "hold must freeze the output");
    assert!((v[3] - -0.2).abs() < 1e-9);
    assert!((v[4] - -0.05).abs() < 1e-9);
}
