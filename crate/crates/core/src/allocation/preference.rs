use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::AllocationError;
use crate::sim::RigParams;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceSource {
    /// Stay close to the last allocation.
    PreviousSolution,
    /// Follow a named formation; `mu0` holds unit directions that are
    /// rescaled to the current desired force every allocation.
    UserPreset(String),
}

/// Preferred cable forces added to the allocation cost as `λ‖μ0 − μ‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationPreference {
    pub mu0: Vec<Vector3<f64>>,
    pub lambda: f64,
    pub source: PreferenceSource,
}

impl FormationPreference {
    /// No preference term.
    pub fn none() -> Self {
        Self::previous(0.0)
    }

    /// Continuity with the allocator's previous solution.
    pub fn previous(lambda: f64) -> Self {
        Self {
            mu0: Vec::new(),
            lambda,
            source: PreferenceSource::PreviousSolution,
        }
    }

    /// Fixed preferred forces, used as given.
    pub fn toward(mu0: Vec<Vector3<f64>>, lambda: f64) -> Self {
        Self {
            mu0,
            lambda,
            source: PreferenceSource::PreviousSolution,
        }
    }

    pub fn preset(name: &str, directions: Vec<Vector3<f64>>, lambda: f64) -> Self {
        Self {
            mu0: directions,
            lambda,
            source: PreferenceSource::UserPreset(name.to_string()),
        }
    }

    pub fn preset_name(&self) -> Option<&str> {
        match &self.source {
            PreferenceSource::UserPreset(name) => Some(name),
            PreferenceSource::PreviousSolution => None,
        }
    }

    pub(crate) fn active_mu0(&self, n: usize) -> Result<Option<&[Vector3<f64>]>, AllocationError> {
        if !(self.lambda >= 0.0) {
            return Err(AllocationError::BadInput(format!(
                "preference weight must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.lambda == 0.0 || self.mu0.is_empty() {
            return Ok(None);
        }
        if self.mu0.len() != n {
            return Err(AllocationError::BadInput(format!(
                "{} preferred forces for {n} cables",
                self.mu0.len()
            )));
        }
        Ok(Some(&self.mu0))
    }
}

/// Scales preset directions so that the forces sum to `f_d` exactly. Each
/// cable carries an equal share of the vertical force along its preset
/// direction and the horizontal remainder is spread evenly. Directions
/// without upward component, or a non-positive `f_d.z`, fall back to a
/// least-squares fit.
pub fn rescale_preset(directions: &[Vector3<f64>], f_d: &Vector3<f64>) -> Vec<Vector3<f64>> {
    let n = directions.len();
    if n == 0 {
        return Vec::new();
    }
    let scales: Vec<f64> = if f_d.z > 0.0 && directions.iter().all(|d| d.z > 1e-9) {
        directions
            .iter()
            .map(|d| f_d.z / (n as f64 * d.z))
            .collect()
    } else {
        let d = DMatrix::from_fn(3, n, |r, c| directions[c][r]);
        let f = DVector::from_column_slice(f_d.as_slice());
        let c = d
            .svd(true, true)
            .solve(&f, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(n));
        c.iter().copied().collect()
    };
    let fitted: Vector3<f64> = directions.iter().zip(&scales).map(|(d, s)| d * *s).sum();
    let rest = (f_d - fitted) / n as f64;
    directions
        .iter()
        .zip(&scales)
        .map(|(dir, &s)| s * dir + rest)
        .collect()
}

/// Named formations for one rig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetTable {
    n: usize,
    presets: BTreeMap<String, Vec<Vector3<f64>>>,
}

/// Offset across the line that keeps a "line" formation from being exactly
/// planar, so it can relax back once released.
const LINE_JITTER: f64 = 0.005;
/// Horizontal spacing of preset formations, in safety radii.
const SPACING: f64 = 2.6;

/// Builds the preset formations: `line` (robots along the world x axis) for
/// two or more robots, and `triangle` for three.
pub fn preset_table(rig: &RigParams) -> PresetTable {
    let n = rig.n();
    let mut presets = BTreeMap::new();
    let r_max = rig
        .robots
        .iter()
        .map(|r| r.safety_radius)
        .fold(0.0, f64::max);
    let lengths: Vec<f64> = rig.robots.iter().map(|r| r.cable_length).collect();
    let direction = |l: f64, h: Vector3<f64>| {
        let h = if h.norm() > 0.9 * l {
            h * (0.9 * l / h.norm())
        } else {
            h
        };
        Vector3::new(h.x, h.y, (l * l - h.norm_squared()).sqrt()) / l
    };

    if n >= 2 {
        // Inner slots go to the shortest cables.
        let spacing = SPACING * r_max;
        let mut slots: Vec<f64> = (0..n)
            .map(|k| (k as f64 - (n as f64 - 1.0) / 2.0) * spacing)
            .collect();
        slots.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| lengths[a].total_cmp(&lengths[b]).then(a.cmp(&b)));
        let mut dirs = vec![Vector3::zeros(); n];
        for (slot, &robot) in slots.iter().zip(&order) {
            let jitter = if robot % 2 == 0 {
                LINE_JITTER
            } else {
                -LINE_JITTER
            };
            dirs[robot] = direction(lengths[robot], Vector3::new(*slot, jitter, 0.0));
        }
        presets.insert("line".to_string(), dirs);
    }
    if n == 3 {
        let radius = SPACING * r_max / 3f64.sqrt();
        let dirs = (0..3)
            .map(|k| {
                let phi =
                    std::f64::consts::FRAC_PI_2 + k as f64 * 2.0 * std::f64::consts::FRAC_PI_3;
                direction(lengths[k], radius * Vector3::new(phi.cos(), phi.sin(), 0.0))
            })
            .collect();
        presets.insert("triangle".to_string(), dirs);
    }
    PresetTable { n, presets }
}

impl PresetTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn names(&self) -> Vec<String> {
        self.presets.keys().cloned().collect()
    }

    pub fn directions(&self, name: &str) -> Result<&[Vector3<f64>], AllocationError> {
        self.presets.get(name).map(|d| d.as_slice()).ok_or_else(|| {
            AllocationError::PresetUnavailable {
                name: name.to_string(),
                n: self.n,
            }
        })
    }

    pub fn preference(
        &self,
        name: &str,
        lambda: f64,
    ) -> Result<FormationPreference, AllocationError> {
        Ok(FormationPreference::preset(
            name,
            self.directions(name)?.to_vec(),
            lambda,
        ))
    }
}
