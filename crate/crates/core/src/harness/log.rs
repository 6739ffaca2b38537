//! Run outputs: `ticks.jsonl`, `ticks.csv`, `summary.json` and
//! `timing.json`. Everything except `timing.json` is reproducible byte for
//! byte. The schema is documented in `docs/logs.md`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::run::{RunOutcome, TickRecord};
use super::HarnessError;

pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub ticks: PathBuf,
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub timing: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            ticks: dir.join("ticks.jsonl"),
            csv: dir.join("ticks.csv"),
            summary: dir.join("summary.json"),
            timing: dir.join("timing.json"),
        }
    }
}

pub fn write_jsonl(w: &mut impl Write, ticks: &[TickRecord]) -> Result<(), HarnessError> {
    for t in ticks {
        serde_json::to_writer(&mut *w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn csv_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = ["tick", "t"].iter().map(|s| s.to_string()).collect();
    for name in ["p0", "v0", "p0r"] {
        h.extend(["x", "y", "z"].iter().map(|a| format!("{name}_{a}")));
    }
    for name in ["rpy0", "att_err"] {
        h.extend(
            ["roll", "pitch", "yaw"]
                .iter()
                .map(|a| format!("{name}_{a}")),
        );
    }
    h.extend(
        [
            "min_distance",
            "clearance_ratio",
            "held",
            "qp_iterations",
            "saturated",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    for i in 0..n {
        for name in ["robot", "mu"] {
            h.extend(["x", "y", "z"].iter().map(|a| format!("{name}{i}_{a}")));
        }
    }
    h
}

pub fn write_csv(w: impl Write, ticks: &[TickRecord]) -> Result<(), HarnessError> {
    let n = ticks.first().map_or(0, |t| t.robots.len());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(csv_header(n))?;
    for t in ticks {
        let mut row = vec![t.tick.to_string(), t.t.to_string()];
        for v in [&t.p0, &t.v0, &t.p0r, &t.rpy0, &t.attitude_error] {
            row.extend(v.iter().map(f64::to_string));
        }
        row.extend([
            t.min_distance.to_string(),
            t.clearance_ratio.to_string(),
            (t.held as u8).to_string(),
            t.qp_iterations.to_string(),
            t.saturated.to_string(),
        ]);
        for (p, m) in t.robots.iter().zip(&t.mu) {
            row.extend(p.iter().chain(m.iter()).map(f64::to_string));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// The reproducible summary document.
pub fn summary_json(outcome: &RunOutcome) -> Result<String, HarnessError> {
    let mut value = serde_json::to_value(outcome)?;
    value["schema"] = LOG_SCHEMA_VERSION.into();
    Ok(serde_json::to_string_pretty(&value)?)
}

pub fn write_outputs(dir: &Path, outcome: &RunOutcome) -> Result<OutputPaths, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let paths = OutputPaths::in_dir(dir);
    let mut w = BufWriter::new(File::create(&paths.ticks)?);
    write_jsonl(&mut w, &outcome.ticks)?;
    w.flush()?;
    write_csv(BufWriter::new(File::create(&paths.csv)?), &outcome.ticks)?;
    std::fs::write(&paths.summary, summary_json(outcome)? + "\n")?;
    std::fs::write(
        &paths.timing,
        serde_json::to_string_pretty(&outcome.timing)? + "\n",
    )?;
    Ok(paths)
}
