//! Static PNG plots. Labels need a TrueType font; without one the plots are
//! drawn unlabelled.

use std::path::Path;
use std::sync::OnceLock;

use anyhow::{anyhow, Result};
use hoist_core::harness::{CompareReport, RunOutcome, TickRecord};
use plotters::prelude::*;
use plotters::style::{register_font, FontStyle};

const FONT_PATHS: &[&str] = &[
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/TTF/DejaVuSans.ttf",
    "/Library/Fonts/Arial.ttf",
    "C:\\Windows\\Fonts\\arial.ttf",
];

fn fonts() -> bool {
    static LOADED: OnceLock<bool> = OnceLock::new();
    *LOADED.get_or_init(|| {
        let path = std::env::var("HOIST_FONT").ok();
        let candidates = path
            .iter()
            .map(String::as_str)
            .chain(FONT_PATHS.iter().copied());
        for p in candidates {
            if let Ok(bytes) = std::fs::read(p) {
                // Plotters keeps the font for the life of the process.
                let bytes: &'static [u8] = Box::leak(bytes.into_boxed_slice());
                if register_font("sans-serif", FontStyle::Normal, bytes).is_ok() {
                    return true;
                }
            }
        }
        log::warn!("no TrueType font found, plots will have no labels (set HOIST_FONT)");
        false
    })
}

struct Series<'a> {
    name: &'a str,
    color: RGBColor,
    points: Vec<(f64, f64)>,
}

fn line_chart(
    path: &Path,
    title: &str,
    y_label: &str,
    series: &[Series],
    floor: Option<f64>,
) -> Result<()> {
    let labelled = fonts();
    let root = BitMapBackend::new(path, (960, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in series.iter().flat_map(|s| s.points.iter()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if let Some(f) = floor {
        y0 = y0.min(f);
        y1 = y1.max(f);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let pad = 0.05 * (y1 - y0).max(1e-6);

    let mut builder = ChartBuilder::on(&root);
    builder.margin(15);
    if labelled {
        builder
            .caption(title, ("sans-serif", 22))
            .x_label_area_size(40)
            .y_label_area_size(60);
    }
    let mut chart = builder
        .build_cartesian_2d(x0..x1.max(x0 + 1e-9), (y0 - pad)..(y1 + pad))
        .map_err(|e| anyhow!("{e}"))?;
    let mut mesh = chart.configure_mesh();
    if labelled {
        mesh.x_desc("t [s]").y_desc(y_label);
    } else {
        mesh.disable_x_mesh()
            .disable_y_mesh()
            .x_labels(0)
            .y_labels(0);
    }
    mesh.draw().map_err(|e| anyhow!("{e}"))?;

    for s in series {
        let drawn = chart
            .draw_series(LineSeries::new(
                s.points.iter().copied(),
                s.color.stroke_width(2),
            ))
            .map_err(|e| anyhow!("{e}"))?;
        if labelled {
            let c = s.color;
            drawn
                .label(s.name)
                .legend(move |(x, y)| PathElement::new([(x, y), (x + 20, y)], c.stroke_width(2)));
        }
    }
    if let Some(f) = floor {
        let drawn = chart
            .draw_series(LineSeries::new([(x0, f), (x1, f)], BLACK.stroke_width(1)))
            .map_err(|e| anyhow!("{e}"))?;
        if labelled {
            drawn
                .label("r_i + r_j")
                .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], BLACK));
        }
    }
    if labelled {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .label_font(("sans-serif", 16))
            .draw()
            .map_err(|e| anyhow!("{e}"))?;
    }
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}

const AXES: [(&str, RGBColor); 3] = [("x", RED), ("y", GREEN), ("z", BLUE)];

/// `position_error.png`, `clearance.png` and, for rigid payloads,
/// `attitude_error.png`.
pub fn run_plots(dir: &Path, ticks: &[TickRecord], rigid: bool) -> Result<()> {
    let axis_series = |f: &dyn Fn(&TickRecord, usize) -> f64| -> Vec<Series> {
        AXES.iter()
            .enumerate()
            .map(|(a, (name, color))| Series {
                name,
                color: *color,
                points: ticks.iter().map(|r| (r.t, f(r, a))).collect(),
            })
            .collect()
    };
    line_chart(
        &dir.join("position_error.png"),
        "Payload position error",
        "error [cm]",
        &axis_series(&|r, a| 100.0 * (r.p0[a] - r.p0r[a])),
        None,
    )?;
    if rigid {
        line_chart(
            &dir.join("attitude_error.png"),
            "Payload attitude error",
            "error [deg]",
            &axis_series(&|r, a| r.attitude_error[a].to_degrees()),
            None,
        )?;
    }
    line_chart(
        &dir.join("clearance.png"),
        "Closest robot pair",
        "distance / (r_i + r_j)",
        &[Series {
            name: "clearance",
            color: BLUE,
            points: ticks.iter().map(|r| (r.t, r.clearance_ratio)).collect(),
        }],
        Some(1.0),
    )
}

/// `min_distance.png`: closest-pair clearance of both modes.
pub fn compare_plot(dir: &Path, report: &CompareReport, outcomes: &[RunOutcome; 2]) -> Result<()> {
    let trace = |o: &RunOutcome| {
        o.ticks
            .iter()
            .step_by(10)
            .map(|r| (r.t, r.clearance_ratio))
            .collect()
    };
    line_chart(
        &dir.join("min_distance.png"),
        &format!("{}: closest robot pair", report.scenario),
        "distance / (r_i + r_j)",
        &[
            Series {
                name: "baseline",
                color: RED,
                points: trace(&outcomes[0]),
            },
            Series {
                name: "qp cascade",
                color: BLUE,
                points: trace(&outcomes[1]),
            },
        ],
        Some(1.0),
    )
}
