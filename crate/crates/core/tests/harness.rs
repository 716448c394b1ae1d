use chainloc::harness::{
    rmse_over_time, run_monte_carlo, run_rows, run_single, write_csv, write_time_csv, RunResult,
};
use chainloc::scenario::{parse_scenario, Scenario};

fn small() -> Scenario {
    parse_scenario(r#"{"n_panels": 4, "n_steps": 15, "model": {"filter": {"n_particles": 256}}}"#).unwrap()
}

fn csv_bytes(results: &[RunResult]) -> (Vec<u8>, Vec<u8>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_time_csv(&mut a, &rmse_over_time(results).unwrap()).unwrap();
    write_csv(&mut b, &run_rows(results).unwrap()).unwrap();
    (a, b)
}

#[test]
fn parallel_runs_match_serial_runs() {
    let scn = small();
    let parallel = run_monte_carlo(&scn, 4, 9).unwrap();
    let serial: Vec<RunResult> = (0..4).map(|r| run_single(&scn, 9, r).unwrap()).collect();
    assert_eq!(parallel, serial);
    assert_eq!(csv_bytes(&parallel), csv_bytes(&serial));
}

#[test]
fn seeds_and_runs_change_the_draws() {
    let scn = small();
    let a = run_single(&scn, 9, 0).unwrap();
    assert_eq!(a, run_single(&scn, 9, 0).unwrap());
    assert_ne!(a.errors(), run_single(&scn, 10, 0).unwrap().errors());
    assert_ne!(a.errors(), run_single(&scn, 9, 1).unwrap().errors());
}

#[test]
fn records_cover_every_step_and_panel() {
    let scn = small();
    let r = run_single(&scn, 2, 0).unwrap();
    assert_eq!(r.steps.len(), 15);
    for (n, s) in r.steps.iter().enumerate() {
        assert_eq!(s.truth, scn.trajectory[n].p);
        assert_eq!(s.los_existence.len(), 4);
        assert!(s.los_existence.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(s.n_meas.len(), 4);
    }
    assert!(r.final_error().unwrap() < 1.0, "{:?}", r.final_error());
    assert!(!r.diverged);
}

#[test]
fn csv_has_the_documented_columns() {
    let results = run_monte_carlo(&small(), 2, 3).unwrap();
    let (time, runs) = csv_bytes(&results);
    let time = String::from_utf8(time).unwrap();
    let runs = String::from_utf8(runs).unwrap();
    assert_eq!(time.lines().next().unwrap(), "step,rmse,q10,q90");
    assert_eq!(time.lines().count(), 16);
    assert_eq!(runs.lines().next().unwrap(), "run,rmse,final_error,diverged");
    assert_eq!(runs.lines().count(), 3);
}
