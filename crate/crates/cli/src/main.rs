mod fixtures;
mod plot;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hoist_core::allocation::AllocationMode;
use hoist_core::harness::log::write_outputs;
use hoist_core::harness::{compare, run, PayloadSpec, RunOutcome, Scenario};
use hoist_core::qp::QpSettings;

#[derive(Parser)]
#[command(
    name = "hoist",
    version,
    about = "Cable-suspended payload transport with multiple quadrotors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Baseline,
    Qp,
}

impl From<Mode> for AllocationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Baseline => AllocationMode::Baseline,
            Mode::Qp => AllocationMode::QpCascade,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenarios (in parallel) and write logs, summary and plots.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Override the scenario's allocation mode.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Output directory. With several scenarios each gets a subdirectory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Run baseline and QP cascade on identical seeds and report both.
    Compare {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Time the QP solver on a fixture file.
    BenchQp {
        fixtures: PathBuf,
        /// Solves per problem; the median is reported.
        #[arg(long, default_value_t = 50)]
        repeat: usize,
        /// Write this many random problems to FIXTURES instead of benchmarking.
        #[arg(long)]
        generate: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the results as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Serve a scenario to a teleop client over a websocket.
    Serve {
        scenario: PathBuf,
        #[arg(long, env = "HOIST_PORT", default_value_t = 8765)]
        port: u16,
        #[arg(long, env = "HOIST_BIND", default_value = "127.0.0.1")]
        bind: String,
        /// State frame rate, Hz.
        #[arg(long, env = "HOIST_RATE")]
        rate: Option<f64>,
        /// Simulated seconds per wall-clock second.
        #[arg(long)]
        speed: Option<f64>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = seed {
        s.sim.seed = seed;
    }
    Ok(s)
}

fn print_outcome(o: &RunOutcome, dir: &Path) {
    let m = &o.metrics;
    let e = m.position_error_cm;
    println!(
        "{} [{:?}] seed {} -> {}",
        o.scenario,
        o.mode,
        o.seed,
        dir.display()
    );
    println!(
        "  position error cm: x {:.2} ± {:.2}, y {:.2} ± {:.2}, z {:.2} ± {:.2}",
        e[0].mean, e[0].std, e[1].mean, e[1].std, e[2].mean, e[2].std
    );
    if let Some(r) = m.orientation_error_deg {
        println!(
            "  attitude error deg: roll {:.2} ± {:.2}, pitch {:.2} ± {:.2}, yaw {:.2} ± {:.2}",
            r[0].mean, r[0].std, r[1].mean, r[1].std, r[2].mean, r[2].std
        );
    }
    println!(
        "  min distance {:.3} m (pair {:?} at {:.2} s, {:.3} of r_i + r_j), {} ticks in contact",
        m.min_distance,
        m.min_distance_pair,
        m.min_distance_time,
        m.min_clearance_ratio,
        m.ticks_in_contact
    );
    let t = &o.timing.total_ms;
    println!(
        "  allocation {:.3} ± {:.3} ms (median {:.3}, max {:.3}), {} infeasible, {} saturated",
        t.mean, t.std, t.median, t.max, m.infeasibility_count, m.saturation_count
    );
    if let Some(reason) = &o.aborted {
        println!("  ABORTED: {reason:?}");
    }
}

fn run_one(
    path: &Path,
    mode: Option<Mode>,
    out: &Path,
    seed: Option<u64>,
    plots: bool,
) -> Result<RunOutcome> {
    let mut s = load(path, seed)?;
    if let Some(m) = mode {
        s = s.with_mode(m.into());
    }
    let outcome = run(&s).with_context(|| format!("running {}", path.display()))?;
    write_outputs(out, &outcome)?;
    if plots {
        plot::run_plots(
            out,
            &outcome.ticks,
            matches!(s.payload, PayloadSpec::RigidBody { .. }),
        )?;
    }
    Ok(outcome)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run {
            scenarios,
            mode,
            out,
            seed,
            no_plots,
        } => {
            let dirs: Vec<PathBuf> = if scenarios.len() == 1 {
                vec![out.clone()]
            } else {
                scenarios
                    .iter()
                    .map(|p| out.join(p.file_stem().unwrap_or_default()))
                    .collect()
            };
            let results: Vec<Result<RunOutcome>> = std::thread::scope(|scope| {
                let jobs: Vec<_> = scenarios
                    .iter()
                    .zip(&dirs)
                    .map(|(p, d)| scope.spawn(move || run_one(p, mode, d, seed, !no_plots)))
                    .collect();
                jobs.into_iter()
                    .map(|j| j.join().expect("run thread panicked"))
                    .collect()
            });
            let mut aborted = 0;
            for ((r, p), dir) in results.into_iter().zip(&scenarios).zip(&dirs) {
                let outcome = r.with_context(|| format!("scenario {}", p.display()))?;
                print_outcome(&outcome, dir);
                aborted += outcome.aborted.is_some() as usize;
            }
            if aborted > 0 {
                bail!("{aborted} run(s) aborted; partial metrics were written");
            }
        }
        Command::Compare {
            scenario,
            out,
            seed,
            no_plots,
        } => {
            let s = load(&scenario, seed)?;
            let (report, outcomes) = compare(&s)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("compare.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
            for o in &outcomes {
                let dir = out.join(format!("{:?}", o.mode).to_lowercase());
                write_outputs(&dir, o)?;
                print_outcome(o, &dir);
            }
            if !no_plots {
                plot::compare_plot(&out, &report, &outcomes)?;
            }
            let contact = |t: Option<f64>| t.map_or("none".to_string(), |t| format!("{t:.2} s"));
            println!(
                "first contact: baseline {}, qp cascade {}; max payload divergence {:.4} m",
                contact(report.baseline.first_contact),
                contact(report.qp_cascade.first_contact),
                report.max_payload_divergence
            );
            println!("report: {}", path.display());
        }
        Command::BenchQp {
            fixtures: path,
            repeat,
            generate,
            seed,
            json,
        } => {
            if let Some(count) = generate {
                let file = fixtures::generate(count, seed);
                std::fs::write(&path, serde_json::to_string_pretty(&file)? + "\n")?;
                println!("wrote {count} problems to {}", path.display());
                return Ok(());
            }
            let file = fixtures::load(&path)?;
            let rows = fixtures::bench(&file, repeat, &QpSettings::default())?;
            println!(
                "{:<24} {:>3} {:>3} {:>14} {:>6} {:>11} {:>11}",
                "problem", "n", "m", "status", "iters", "median us", "min us"
            );
            for r in &rows {
                println!(
                    "{:<24} {:>3} {:>3} {:>14} {:>6} {:>11.1} {:>11.1}",
                    r.name,
                    r.n,
                    r.m,
                    format!("{:?}", r.status),
                    r.iterations,
                    r.median_us,
                    r.min_us
                );
            }
            let mut medians: Vec<f64> = rows.iter().map(|r| r.median_us).collect();
            medians.sort_by(f64::total_cmp);
            if let Some(mid) = medians.get(medians.len() / 2) {
                println!("{} problems, median of medians {mid:.1} us", rows.len());
            }
            if let Some(j) = json {
                std::fs::write(&j, serde_json::to_string_pretty(&rows)? + "\n")?;
            }
        }
        Command::Serve {
            scenario,
            port,
            bind,
            rate,
            speed,
        } => {
            let mut s = load(&scenario, None)?;
            if let Some(r) = rate {
                s.teleop.rate_hz = r;
            }
            if let Some(f) = speed {
                s.teleop.speed_factor = f;
            }
            s.validate()?;
            hoist_core::teleop::serve(&s, &format!("{bind}:{port}"))?.wait();
        }
    }
    Ok(())
}
