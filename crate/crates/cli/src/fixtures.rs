//! QP benchmark fixtures: a JSON list of dense problems. Infinite bounds are
//! written as `null`.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use hoist_core::qp::{solve, QpProblem, QpSettings, QpStatus};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const FIXTURE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureFile {
    pub version: u32,
    pub problems: Vec<Fixture>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub name: String,
    /// Row-major.
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub l: Vec<Option<f64>>,
    pub u: Vec<Option<f64>>,
}

fn matrix(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != cols) {
        bail!("{what}: every row needs {cols} entries");
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl Fixture {
    pub fn problem(&self) -> Result<QpProblem> {
        let n = self.q.len();
        let p = matrix(&self.p, n, "p")?;
        let a = matrix(&self.a, n, "a")?;
        let bound = |v: &[Option<f64>], inf: f64| {
            DVector::from_iterator(v.len(), v.iter().map(|x| x.unwrap_or(inf)))
        };
        let problem = QpProblem::new(
            p,
            DVector::from_vec(self.q.clone()),
            a,
            bound(&self.l, f64::NEG_INFINITY),
            bound(&self.u, f64::INFINITY),
        )
        .with_context(|| format!("fixture {}", self.name))?;
        Ok(problem)
    }
}

pub fn load(path: &Path) -> Result<FixtureFile> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: FixtureFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if file.version != FIXTURE_VERSION {
        bail!("unsupported fixture version {}", file.version);
    }
    Ok(file)
}

/// Random strictly convex problems, feasible by construction.
pub fn generate(count: usize, seed: u64) -> FixtureFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problems = (0..count)
        .map(|k| {
            let n = rng.gen_range(3..=12usize);
            let m = rng.gen_range(1..=2 * n);
            let f = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let p = &f * f.transpose() + DMatrix::identity(n, n) * 0.1;
            let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
            let ax = &a * &x0;
            let (mut l, mut u) = (Vec::new(), Vec::new());
            for i in 0..m {
                match rng.gen_range(0..4) {
                    0 => {
                        l.push(Some(ax[i]));
                        u.push(Some(ax[i]));
                    }
                    1 => {
                        l.push(None);
                        u.push(Some(ax[i] + rng.gen_range(0.0..0.5)));
                    }
                    _ => {
                        l.push(Some(ax[i] - rng.gen_range(0.0..0.5)));
                        u.push(Some(ax[i] + rng.gen_range(0.0..0.5)));
                    }
                }
            }
            let rows =
                |m: &DMatrix<f64>| m.row_iter().map(|r| r.iter().copied().collect()).collect();
            Fixture {
                name: format!("random-{k:03}"),
                p: rows(&p),
                q: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                a: rows(&a),
                l,
                u,
            }
        })
        .collect();
    FixtureFile {
        version: FIXTURE_VERSION,
        problems,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub status: QpStatus,
    pub iterations: usize,
    pub objective: f64,
    pub median_us: f64,
    pub min_us: f64,
}

pub fn bench(file: &FixtureFile, repeat: usize, settings: &QpSettings) -> Result<Vec<BenchRow>> {
    file.problems
        .iter()
        .map(|f| {
            let problem = f.problem()?;
            let mut times = Vec::with_capacity(repeat);
            let mut last = None;
            for _ in 0..repeat.max(1) {
                let start = Instant::now();
                let sol = solve(&problem, None, settings);
                times.push(start.elapsed().as_secs_f64() * 1e6);
                last = Some(sol);
            }
            let sol = last.expect("at least one repetition");
            times.sort_by(f64::total_cmp);
            Ok(BenchRow {
                name: f.name.clone(),
                n: f.q.len(),
                m: f.l.len(),
                status: sol.status,
                iterations: sol.iterations,
                objective: sol.objective,
                median_us: times[times.len() / 2],
                min_us: times[0],
            })
        })
        .collect()
}
