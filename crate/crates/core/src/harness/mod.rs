//! Monte-Carlo evaluation: repeated chain runs, error statistics, sweeps
//! and plots.

mod plot;
mod sweep;

pub use plot::{render_plots, render_plots_to_dir, Plot};
pub use sweep::{run_sweep, write_sweep_csv, GridPoint, SweepRow, SweepSpec};

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{run_chain, InProcessChain, StepOutput};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::scenario::Scenario;
use crate::spa::AgentState;

/// Final-step position error beyond which a run counts as diverged, meters.
pub const DIVERGENCE_M: f64 = 5.0;
pub const DEFAULT_RUNS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub truth: Point2,
    pub estimate: AgentState,
    /// Existence probability of each panel's direct path, by panel.
    pub los_existence: Vec<f64>,
    /// Measurements seen by each panel, by panel.
    pub n_meas: Vec<usize>,
    pub detected: Vec<u32>,
}

impl StepRecord {
    pub fn error(&self) -> f64 {
        self.estimate.p.dist(self.truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub run_id: u16,
    pub steps: Vec<StepRecord>,
    pub diverged: bool,
}

impl RunResult {
    pub fn from_outputs(run_id: u16, scn: &Scenario, outputs: &[StepOutput]) -> Self {
        let steps: Vec<StepRecord> = outputs
            .iter()
            .map(|o| StepRecord {
                truth: scn.trajectory[o.time as usize].p,
                estimate: o.state,
                los_existence: o.los_existence(),
                n_meas: o.reports.iter().map(|r| r.n_meas).collect(),
                detected: o.detected.clone(),
            })
            .collect();
        let diverged = steps.last().is_some_and(|s| s.error() > DIVERGENCE_M);
        Self {
            run_id,
            steps,
            diverged,
        }
    }

    pub fn errors(&self) -> Vec<f64> {
        self.steps.iter().map(StepRecord::error).collect()
    }

    pub fn final_error(&self) -> Option<f64> {
        self.steps.last().map(StepRecord::error)
    }
}

/// One in-process run over the whole trajectory.
pub fn run_single(scn: &Scenario, seed: u64, run: u16) -> Result<RunResult> {
    run_single_with(scn, seed, run, |_| Ok(()))
}

/// Like [`run_single`], calling `sink` after each step.
pub fn run_single_with(
    scn: &Scenario,
    seed: u64,
    run: u16,
    sink: impl FnMut(&StepOutput) -> Result<()>,
) -> Result<RunResult> {
    let mut chain = InProcessChain::new(scn, seed, run)?;
    let out = run_chain(&mut chain, scn, seed, run, scn.n_steps(), sink)?;
    Ok(RunResult::from_outputs(run, scn, &out))
}

/// Runs `0..n_runs` in parallel. Every run draws from its own keyed
/// streams, so the result does not depend on scheduling.
pub fn run_monte_carlo(scn: &Scenario, n_runs: usize, seed: u64) -> Result<Vec<RunResult>> {
    if n_runs == 0 {
        return Err(Error::InvalidArgument("n_runs must be at least 1".into()));
    }
    if n_runs > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!("n_runs {n_runs} too large")));
    }
    (0..n_runs as u16)
        .into_par_iter()
        .map(|r| run_single(scn, seed, r))
        .collect()
}

pub fn divergence_count(results: &[RunResult]) -> usize {
    results.iter().filter(|r| r.diverged).count()
}

/// Sample quantile with linear interpolation between order statistics.
/// `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeRow {
    pub step: usize,
    pub rmse: f64,
    pub q10: f64,
    pub q90: f64,
}

fn check_runs(results: &[RunResult]) -> Result<usize> {
    let Some(first) = results.first() else {
        return Err(Error::InvalidArgument("no results".into()));
    };
    let n = first.steps.len();
    if n == 0 || results.iter().any(|r| r.steps.len() != n) {
        return Err(Error::InvalidArgument(
            "results must be nonempty and of equal length".into(),
        ));
    }
    Ok(n)
}

/// Per-step RMSE over runs with the 10% and 90% quantiles of the per-run
/// errors.
pub fn rmse_over_time(results: &[RunResult]) -> Result<Vec<TimeRow>> {
    let n = check_runs(results)?;
    let errs: Vec<Vec<f64>> = results.iter().map(RunResult::errors).collect();
    Ok((0..n)
        .map(|k| {
            let col = sorted(errs.iter().map(|e| e[k]).collect());
            let ms = col.iter().map(|e| e * e).sum::<f64>() / col.len() as f64;
            TimeRow {
                step: k,
                rmse: ms.sqrt(),
                q10: quantile(&col, 0.1),
                q90: quantile(&col, 0.9),
            }
        })
        .collect())
}

/// RMSE over all (run, step) error samples pooled together. With equal
/// run lengths this equals the root of the time-averaged squared
/// per-step RMSE.
pub fn rmse_scalar(results: &[RunResult]) -> Result<f64> {
    check_runs(results)?;
    let (sum, n) = results
        .iter()
        .flat_map(|r| r.errors())
        .fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    Ok((sum / n as f64).sqrt())
}

/// 10% and 90% quantiles of the pooled error samples.
pub fn pooled_band(results: &[RunResult]) -> Result<(f64, f64)> {
    check_runs(results)?;
    let all = sorted(results.iter().flat_map(|r| r.errors()).collect());
    Ok((quantile(&all, 0.1), quantile(&all, 0.9)))
}

pub fn write_time_csv<W: Write>(out: W, rows: &[TimeRow]) -> Result<()> {
    write_csv(out, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub run: u16,
    pub rmse: f64,
    pub final_error: f64,
    pub diverged: bool,
}

pub fn run_rows(results: &[RunResult]) -> Result<Vec<RunRow>> {
    results
        .iter()
        .map(|r| {
            Ok(RunRow {
                run: r.run_id,
                rmse: rmse_scalar(std::slice::from_ref(r))?,
                final_error: r.final_error().unwrap_or(f64::NAN),
                diverged: r.diverged,
            })
        })
        .collect()
}

pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fake(run_id: u16, errs: &[f64]) -> RunResult {
        let steps = errs
            .iter()
            .map(|e| StepRecord {
                truth: Point2::new(0.0, 0.0),
                estimate: AgentState::new(Point2::new(0.6 * e, 0.8 * e), Point2::default()),
                los_existence: vec![],
                n_meas: vec![],
                detected: vec![],
            })
            .collect::<Vec<_>>();
        let diverged = errs.last().is_some_and(|e| *e > DIVERGENCE_M);
        RunResult {
            run_id,
            steps,
            diverged,
        }
    }

    #[test]
    fn two_runs_by_hand() {
        let r = [fake(0, &[3.0]), fake(1, &[4.0])];
        let t = rmse_over_time(&r).unwrap();
        assert!((t[0].rmse - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((t[0].q10 - 3.1).abs() < 1e-12 && (t[0].q90 - 3.9).abs() < 1e-12);
    }

    #[test]
    fn exact_estimates_give_zero() {
        let r = [fake(0, &[0.0; 5]), fake(1, &[0.0; 5])];
        assert!(rmse_over_time(&r).unwrap().iter().all(|t| t.rmse == 0.0));
        assert_eq!(rmse_scalar(&r).unwrap(), 0.0);
        assert!((rmse_scalar(&[fake(0, &[1.0; 7])]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_run_band_collapses() {
        let r = [fake(0, &[0.5, 2.0, 1.0])];
        for (t, e) in rmse_over_time(&r).unwrap().iter().zip([0.5, 2.0, 1.0]) {
            assert!((t.rmse - e).abs() < 1e-12);
            assert_eq!((t.q10, t.q90), (t.rmse, t.rmse));
        }
    }

    #[test]
    fn divergence_is_final_error_above_threshold() {
        let r = [fake(0, &[9.0, 0.1]), fake(1, &[0.1, 5.5]), fake(2, &[0.1, 5.0])];
        assert_eq!(divergence_count(&r), 1);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(rmse_scalar(&[]).is_err());
        assert!(rmse_over_time(&[fake(0, &[1.0]), fake(1, &[1.0, 2.0])]).is_err());
    }

    proptest! {
        #[test]
        fn pooled_equals_time_averaged_square(errs in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 6), 1..8)) {
            let r: Vec<RunResult> = errs.iter().enumerate().map(|(i, e)| fake(i as u16, e)).collect();
            let pooled = rmse_scalar(&r).unwrap();
            let t = rmse_over_time(&r).unwrap();
            let via_time = (t.iter().map(|x| x.rmse * x.rmse).sum::<f64>() / t.len() as f64).sqrt();
            prop_assert!((pooled - via_time).abs() < 1e-9);
            // the per-time mean of RMSE is a different number in general
            let mean_rmse = t.iter().map(|x| x.rmse).sum::<f64>() / t.len() as f64;
            prop_assert!(mean_rmse <= pooled + 1e-9);
        }

        #[test]
        fn rmse_ignores_run_order(errs in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 4), 2..6)) {
            let r: Vec<RunResult> = errs.iter().enumerate().map(|(i, e)| fake(i as u16, e)).collect();
            let mut rev = r.clone();
            rev.reverse();
            prop_assert_eq!(rmse_over_time(&r).unwrap(), rmse_over_time(&rev).unwrap());
            prop_assert!((rmse_scalar(&r).unwrap() - rmse_scalar(&rev).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn band_brackets_the_samples(errs in prop::collection::vec(0.0f64..10.0, 1..30)) {
            let r: Vec<RunResult> = errs.iter().enumerate().map(|(i, e)| fake(i as u16, &[*e])).collect();
            let t = &rmse_over_time(&r).unwrap()[0];
            let lo = errs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = errs.iter().cloned().fold(0.0, f64::max);
            prop_assert!(lo <= t.q10 + 1e-12 && t.q10 <= t.q90 + 1e-12 && t.q90 <= hi + 1e-12);
        }
    }
}
