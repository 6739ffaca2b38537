use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::preference::{rescale_preset, FormationPreference, PreferenceSource};
use super::problems::{fd_problem, mu_problem, svm_pointmass_problem, svm_rigid_problem};
use super::svm::{check, fd_from, same_ray, separator_from};
use super::tilt::{tilt_angle, tilt_axis, tilt_hyperplanes_rigid, tilt_normals, untilted_rigid};
use super::{
    allocate_baseline, AllocationError, AllocationMap, CableForceSet, DesiredWrench, Halfspace,
};
use crate::qp::{ProblemFamily, QpSettings, QpSolution, QpStatus};
use crate::sim::{FullSystemState, PayloadKind, RigParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMode {
    /// Minimum-norm forces, no separation constraints.
    Baseline,
    /// Pairwise separating planes feeding one constrained QP.
    QpCascade,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AllocatorSettings {
    pub mode: AllocationMode,
    /// Weight of the force-alignment term of the separating-plane QPs.
    pub lambda_s: f64,
    pub qp: QpSettings,
    pub warm_start: bool,
    /// Allocation periods a previous result may be reused after a failure.
    pub hold_periods: usize,
}

impl Default for AllocatorSettings {
    fn default() -> Self {
        Self {
            mode: AllocationMode::QpCascade,
            lambda_s: 100.0,
            qp: QpSettings::default(),
            warm_start: true,
            hold_periods: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpStats {
    pub iterations: usize,
    pub status: QpStatus,
    pub objective: f64,
    pub warm: bool,
    pub runtime_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostics {
    pub i: usize,
    pub j: usize,
    pub fd: Option<QpStats>,
    pub svm: QpStats,
    /// Separating plane `nᵀx = a` in the payload frame.
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Half-spaces in world-frame force coordinates for robots `i` and `j`.
    pub halfspaces: [Halfspace; 2],
    pub degenerate_axis: bool,
    pub no_intersection: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AllocationDiagnostics {
    pub pairs: Vec<PairDiagnostics>,
    pub mu: Option<QpStats>,
    /// Indices into the half-space list whose constraint is active.
    pub active: Vec<usize>,
    /// The previous result was reused because this allocation failed.
    pub held: bool,
    pub error: Option<String>,
    pub runtime_us: f64,
}

impl AllocationDiagnostics {
    /// Half-spaces passed to the force QP, in order.
    pub fn halfspaces(&self) -> Vec<(usize, Halfspace)> {
        self.pairs
            .iter()
            .flat_map(|p| [(p.i, p.halfspaces[0]), (p.j, p.halfspaces[1])])
            .collect()
    }

    /// Summed solver iterations over every QP of this allocation.
    pub fn total_iterations(&self) -> usize {
        let pairs: usize = self
            .pairs
            .iter()
            .map(|p| p.svm.iterations + p.fd.map_or(0, |f| f.iterations))
            .sum();
        pairs + self.mu.map_or(0, |m| m.iterations)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub forces: CableForceSet,
    pub diagnostics: AllocationDiagnostics,
}

/// Stateful allocator for one rig: keeps a warm-started problem family per
/// pair and stage plus the last good result.
#[derive(Debug, Clone)]
pub struct Allocator {
    settings: AllocatorSettings,
    map: AllocationMap,
    lengths: Vec<f64>,
    radii: Vec<f64>,
    alphas: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    fd: Vec<ProblemFamily>,
    svm: Vec<ProblemFamily>,
    mu: ProblemFamily,
    last: Option<CableForceSet>,
    held: usize,
}

impl Allocator {
    pub fn new(rig: &RigParams, settings: AllocatorSettings) -> Result<Self, AllocationError> {
        let n = rig.n();
        let attachments: Vec<_> = rig.robots.iter().map(|r| r.attachment).collect();
        let map = AllocationMap::build(&attachments, rig.payload.kind)?;
        let alphas = rig
            .robots
            .iter()
            .map(|r| tilt_angle(r.safety_radius, r.cable_length))
            .collect::<Result<Vec<_>, _>>()?;
        let pairs: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let rigid = rig.payload.is_rigid();
        let family = |nv, m| {
            let mut f = ProblemFamily::new(nv, m, settings.qp);
            f.set_warm_start(settings.warm_start);
            f
        };
        let fd = if rigid {
            pairs.iter().map(|_| family(6, 3)).collect()
        } else {
            Vec::new()
        };
        let svm = pairs
            .iter()
            .map(|_| if rigid { family(6, 8) } else { family(3, 2) })
            .collect();
        let mu = family(3 * n, map.rows() + 2 * pairs.len());
        Ok(Self {
            settings,
            map,
            lengths: rig.robots.iter().map(|r| r.cable_length).collect(),
            radii: rig.robots.iter().map(|r| r.safety_radius).collect(),
            alphas,
            pairs,
            fd,
            svm,
            mu,
            last: None,
            held: 0,
        })
    }

    pub fn settings(&self) -> &AllocatorSettings {
        &self.settings
    }

    pub fn map(&self) -> &AllocationMap {
        &self.map
    }

    pub fn last(&self) -> Option<&CableForceSet> {
        self.last.as_ref()
    }

    /// Forgets the previous result and every warm start.
    pub fn reset(&mut self) {
        self.last = None;
        self.held = 0;
        for f in self.fd.iter_mut().chain(self.svm.iter_mut()) {
            f.reset();
        }
        self.mu.reset();
    }

    /// Seeds the previous solution, as after a successful allocation.
    pub fn set_last(&mut self, forces: CableForceSet) {
        self.last = Some(forces);
        self.held = 0;
    }

    /// Allocates cable forces for the current state. The wrench is first
    /// projected onto what the cables can produce. After a failure the last
    /// good result is reused for up to `hold_periods` calls before the error
    /// is returned.
    pub fn allocate(
        &mut self,
        state: &FullSystemState,
        wrench: &DesiredWrench,
        preference: &FormationPreference,
    ) -> Result<Allocation, AllocationError> {
        let start = Instant::now();
        if !wrench.is_finite() {
            return Err(AllocationError::BadInput("wrench is not finite".into()));
        }
        let wrench = self.map.project(wrench, &state.r0);
        let mut diag = AllocationDiagnostics::default();
        let result = match self.settings.mode {
            AllocationMode::Baseline => allocate_baseline(&wrench, &state.r0, &self.map),
            AllocationMode::QpCascade => self.cascade(state, &wrench, preference, &mut diag),
        };
        diag.runtime_us = start.elapsed().as_secs_f64() * 1e6;
        match result {
            Ok(forces) => {
                self.last = Some(forces.clone());
                self.held = 0;
                Ok(Allocation {
                    forces,
                    diagnostics: diag,
                })
            }
            Err(e) => match &self.last {
                Some(last) if self.held < self.settings.hold_periods => {
                    self.held += 1;
                    diag.held = true;
                    diag.error = Some(e.to_string());
                    Ok(Allocation {
                        forces: last.clone(),
                        diagnostics: diag,
                    })
                }
                _ => Err(e),
            },
        }
    }

    fn cascade(
        &mut self,
        state: &FullSystemState,
        wrench: &DesiredWrench,
        preference: &FormationPreference,
        diag: &mut AllocationDiagnostics,
    ) -> Result<CableForceSet, AllocationError> {
        let r0 = state.r0;
        let lambda_s = self.settings.lambda_s;
        // Robot positions relative to the payload, payload frame.
        let local: Vec<Vector3<f64>> = (0..self.map.n())
            .map(|k| {
                self.map.attachments()[k] - self.lengths[k] * (r0.transpose() * state.robots[k].q)
            })
            .collect();

        let mut halfspaces = Vec::with_capacity(2 * self.pairs.len());
        for idx in 0..self.pairs.len() {
            let (i, j) = self.pairs[idx];
            let pair = self
                .pair(idx, &local, &r0, wrench, lambda_s)
                .map_err(|e| e.for_pair(i, j))?;
            halfspaces.push((i, pair.halfspaces[0]));
            halfspaces.push((j, pair.halfspaces[1]));
            diag.pairs.push(pair);
        }

        let mu0 = match &preference.source {
            PreferenceSource::PreviousSolution if preference.mu0.is_empty() => {
                self.last.as_ref().map(|l| l.mu.clone())
            }
            PreferenceSource::PreviousSolution => Some(preference.mu0.clone()),
            PreferenceSource::UserPreset(_) => Some(rescale_preset(&preference.mu0, &wrench.force)),
        };
        let rhs = self.map.rhs(wrench, &r0);
        let problem = mu_problem(
            &self.map,
            &r0,
            &rhs,
            &halfspaces,
            mu0.as_deref(),
            preference.lambda,
        )?;
        let (sol, stats) = timed(&mut self.mu, &problem)?;
        diag.mu = Some(stats);
        check(sol, AllocationError::Infeasible)?;
        let rows = self.map.rows();
        diag.active = (0..halfspaces.len())
            .filter(|&k| sol.y[rows + k] > 1e-9)
            .collect();
        Ok(CableForceSet::from_stacked(&sol.x))
    }

    fn pair(
        &mut self,
        idx: usize,
        local: &[Vector3<f64>],
        r0: &Matrix3<f64>,
        wrench: &DesiredWrench,
        lambda_s: f64,
    ) -> Result<PairDiagnostics, AllocationError> {
        let (i, j) = self.pairs[idx];
        let (p_i, p_j) = (local[i], local[j]);
        if self.map.kind() == PayloadKind::RigidBody {
            let (p_ai, p_aj) = (self.map.attachments()[i], self.map.attachments()[j]);
            let (sol, fd_stats) = timed(&mut self.fd[idx], &fd_problem(&p_ai, &p_aj, r0, wrench)?)?;
            check(sol, AllocationError::Infeasible)?;
            let (f_i, f_j) = fd_from(&sol.x);
            let (f_i, f_j) = (r0.transpose() * f_i, r0.transpose() * f_j);

            let problem = svm_rigid_problem(&p_i, &p_j, &p_ai, &p_aj, &f_i, &f_j, lambda_s)?;
            let (sol, svm_stats) = timed(&mut self.svm[idx], &problem)?;
            check(sol, AllocationError::InfeasiblePair)?;
            let sep = separator_from(&sol.x);

            let (li, lj) = (self.lengths[i], self.lengths[j]);
            let (ri, rj) = (self.radii[i], self.radii[j]);
            let (hi, hj, degenerate_axis, no_intersection) =
                match tilt_hyperplanes_rigid(&sep.normal, sep.offset, &p_ai, &p_aj, ri, rj, li, lj)
                {
                    Ok(t) => (t.i, t.j, t.degenerate_axis, false),
                    Err(AllocationError::NoIntersection) => {
                        let (hi, hj) = untilted_rigid(&sep.normal, &p_ai, &p_aj);
                        (hi, hj, tilt_axis(&sep.normal).1, true)
                    }
                    Err(e) => return Err(e),
                };
            // The planes pass through the attachment points, so in force
            // coordinates they pass through the origin.
            let world = |h: Halfspace| Halfspace::new(r0 * h.normal, 0.0);
            Ok(PairDiagnostics {
                i,
                j,
                fd: Some(fd_stats),
                svm: svm_stats,
                normal: sep.normal,
                offset: sep.offset,
                halfspaces: [world(hi), world(hj)],
                degenerate_axis,
                no_intersection,
            })
        } else {
            if same_ray(&p_i, &p_j) {
                return Err(AllocationError::InfeasiblePair);
            }
            let problem = svm_pointmass_problem(&p_i, &p_j, &wrench.force, lambda_s)?;
            let (sol, svm_stats) = timed(&mut self.svm[idx], &problem)?;
            check(sol, AllocationError::InfeasiblePair)?;
            let n = Vector3::new(sol.x[0], sol.x[1], sol.x[2]);
            let (ni, nj) = tilt_normals(&n, self.alphas[i], self.alphas[j]);
            Ok(PairDiagnostics {
                i,
                j,
                fd: None,
                svm: svm_stats,
                normal: n,
                offset: 0.0,
                halfspaces: [Halfspace::new(ni, 0.0), Halfspace::new(nj, 0.0)],
                degenerate_axis: tilt_axis(&n).1,
                no_intersection: false,
            })
        }
    }
}

fn timed<'a>(
    family: &'a mut ProblemFamily,
    problem: &crate::qp::QpProblem,
) -> Result<(&'a QpSolution, QpStats), AllocationError> {
    let warm = family.has_warm_start();
    let start = Instant::now();
    let sol = family.update_and_solve(problem)?;
    let runtime_us = start.elapsed().as_secs_f64() * 1e6;
    let stats = QpStats {
        iterations: sol.iterations,
        status: sol.status,
        objective: sol.objective,
        warm,
        runtime_us,
    };
    Ok((sol, stats))
}
