use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use rayon::prelude::*;

use chainloc::chain::{run_chain, serve_panel, write_estimate, PanelConfig, RemoteChain, SocketOptions};
use chainloc::harness::{
    divergence_count, render_plots_to_dir, rmse_over_time, rmse_scalar, run_rows, run_single_with,
    run_sweep, write_csv, write_sweep_csv, write_time_csv, RunResult, SweepSpec, DEFAULT_RUNS,
};
use chainloc::latency::{latency_table, write_latency_csv, LatencyGrid, LatencyParams};
use chainloc::scenario::{load_scenario, Scenario};
use chainloc::spa::Mode;
use chainloc::{Error, Result};

/// Daisy-chain particle localization for panelized distributed MIMO.
///
/// Log verbosity is set with the RUST_LOG environment variable.
#[derive(Parser)]
#[command(name = "chainloc", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte-Carlo runs of one scenario through the in-process chain.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long, default_value_t = DEFAULT_RUNS)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Overrides the scenario's step count.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluates a grid of configurations.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulates the chain latency model over a grid.
    Latency {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs one panel as a network node.
    ServePanel {
        #[arg(long)]
        bind: String,
        /// Next panel, or the collector for the last panel.
        #[arg(long)]
        next: String,
        #[arg(long)]
        panel_config: PathBuf,
    },
    /// Drives a chain of `serve-panel` processes and writes JSON-lines
    /// estimates.
    Collect {
        /// Address the last panel forwards to.
        #[arg(long)]
        listen: String,
        /// Address of the first panel.
        #[arg(long)]
        head: String,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        run: u16,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Renders SVG figures from a CSV written by another subcommand.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn scenario_with(path: Option<&Path>, mode: Option<Mode>, steps: Option<usize>) -> Result<Scenario> {
    let scn = match path {
        Some(p) => load_scenario(p)?,
        None => chainloc::scenario::parse_scenario("")?,
    };
    let mut cfg = scn.config().clone();
    if let Some(m) = mode {
        cfg.model.filter.mode = m;
    }
    if let Some(n) = steps {
        cfg.n_steps = n;
    }
    Scenario::from_config(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn simulate(scn: &Scenario, runs: usize, seed: u64, out: &Path) -> Result<()> {
    if runs == 0 || runs > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!("--runs must be in 1..=65535, got {runs}")));
    }
    fs::create_dir_all(out)?;
    let results: Vec<RunResult> = (0..runs as u16)
        .into_par_iter()
        .map(|r| {
            let mut w = create(&out.join(format!("estimates_run{r:03}.jsonl")))?;
            let res = run_single_with(scn, seed, r, |s| write_estimate(&mut w, s))?;
            w.flush()?;
            info!("run {r}: final error {:.3} m", res.final_error().unwrap_or(f64::NAN));
            Ok(res)
        })
        .collect::<Result<_>>()?;
    write_time_csv(create(&out.join("rmse_over_time.csv"))?, &rmse_over_time(&results)?)?;
    write_csv(create(&out.join("runs.csv"))?, &run_rows(&results)?)?;
    render_plots_to_dir(&out.join("rmse_over_time.csv"), out)?;
    println!(
        "rmse {:.4} m over {} runs x {} steps, {} diverged",
        rmse_scalar(&results)?,
        runs,
        scn.n_steps(),
        divergence_count(&results)
    );
    Ok(())
}

fn collect(
    listen: &str,
    head: &str,
    scn: &Scenario,
    seed: u64,
    run: u16,
    out: &Path,
) -> Result<()> {
    let listener = TcpListener::bind(listen)?;
    let mut chain = RemoteChain::new(head, listener, scn.panels.len(), SocketOptions::default())?;
    let mut w = create(out)?;
    run_chain(&mut chain, scn, seed, run, scn.n_steps(), |s| write_estimate(&mut w, s))?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate {
            scenario,
            mode,
            runs,
            seed,
            steps,
            out,
        } => simulate(&scenario_with(Some(&scenario), mode, steps)?, runs, seed, &out),
        Cmd::Sweep { spec, out } => {
            let spec = SweepSpec::load(&spec)?;
            let rows = run_sweep(&spec)?;
            fs::create_dir_all(&out)?;
            let csv = out.join("sweep.csv");
            write_sweep_csv(create(&csv)?, &rows)?;
            render_plots_to_dir(&csv, &out)?;
            Ok(())
        }
        Cmd::Latency { params, grid, out } => {
            let p = LatencyParams::load(&params)?;
            let g = LatencyGrid::load(&grid)?;
            write_latency_csv(create(&out)?, &latency_table(&g, &p)?)
        }
        Cmd::ServePanel {
            bind,
            next,
            panel_config,
        } => serve_panel(&bind, &next, &PanelConfig::load(&panel_config)?),
        Cmd::Collect {
            listen,
            head,
            scenario,
            mode,
            seed,
            run,
            steps,
            out,
        } => collect(
            &listen,
            &head,
            &scenario_with(scenario.as_deref(), mode, steps)?,
            seed,
            run,
            &out,
        ),
        Cmd::Plot { csv, out } => {
            for p in render_plots_to_dir(&csv, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
