//! Cable force allocation.
//!
//! The desired payload wrench is split into one force per cable. The baseline
//! takes the minimum-norm solution of the allocation map. The cascade instead
//! separates every pair of robots with a plane (a small SVM), tilts the planes
//! so that the robots keep their safety radii apart, and solves one QP for the
//! cable forces subject to the resulting half-spaces.

mod pipeline;
mod preference;
mod problems;
mod svm;
mod tilt;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::skew;
use crate::qp::{self, QpError, QpSettings, QpStatus};
use crate::sim::PayloadKind;

pub use pipeline::{
    Allocation, AllocationDiagnostics, AllocationMode, Allocator, AllocatorSettings,
    PairDiagnostics, QpStats,
};
pub use preference::{
    preset_table, rescale_preset, FormationPreference, PreferenceSource, PresetTable,
};
pub use problems::{fd_problem, mu_problem, svm_pointmass_problem, svm_rigid_problem};
pub use svm::{qp_fd, qp_svm_pointmass, qp_svm_rigid, RigidSeparator};
pub use tilt::{
    circle_top, tilt, tilt_angle, tilt_axis, tilt_hyperplanes_pointmass, tilt_hyperplanes_rigid,
    untilted_rigid, RigidTilt,
};

/// Relative singular value below which the map counts as rank deficient.
/// Equivalent to a condition number of `PPᵀ` of 1e12.
pub const RANK_TOL: f64 = 1e-6;
/// Cable forces below this magnitude have no usable direction.
pub const EPS_FORCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationError {
    #[error("allocation map has rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },
    #[error("allocation map is singular and the wrench is outside its range")]
    SingularMap,
    #[error("robots cannot be separated by a plane through the payload")]
    InfeasiblePair,
    #[error("separating normal is parallel to the vertical axis")]
    DegenerateAxis,
    #[error("safety radius {r} is not below twice the cable length {l}")]
    BadGeometry { r: f64, l: f64 },
    #[error("cable sphere does not reach the separating plane")]
    NoIntersection,
    #[error("half-spaces exclude every force set that produces the wrench")]
    Infeasible,
    #[error("QP solver stopped with status {0:?}")]
    SolverFailure(QpStatus),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("no preset named {name:?} for {n} robots")]
    PresetUnavailable { name: String, n: usize },
    #[error("{0}")]
    BadInput(String),
    #[error("pair ({i}, {j}): {source}")]
    Pair {
        i: usize,
        j: usize,
        #[source]
        source: Box<AllocationError>,
    },
}

impl AllocationError {
    fn for_pair(self, i: usize, j: usize) -> Self {
        AllocationError::Pair {
            i,
            j,
            source: Box::new(self),
        }
    }
}

/// Force (world frame) and moment (payload frame) the payload should receive.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DesiredWrench {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl DesiredWrench {
    pub fn force(force: Vector3<f64>) -> Self {
        Self {
            force,
            moment: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.force
            .iter()
            .chain(self.moment.iter())
            .all(|v| v.is_finite())
    }
}

/// `{x : nᵀx − a ≤ 0}`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vector3<f64>, offset: f64) -> Self {
        debug_assert!(normal.norm() > 0.0, "half-space normal must be nonzero");
        Self { normal, offset }
    }

    /// Signed value `nᵀx − a`; positive outside.
    pub fn value(&self, x: &Vector3<f64>) -> f64 {
        self.normal.dot(x) - self.offset
    }

    pub fn contains(&self, x: &Vector3<f64>, tol: f64) -> bool {
        self.value(x) <= tol
    }
}

/// One force per cable, world frame, pointing from the attachment point
/// toward the quadrotor.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CableForceSet {
    pub mu: Vec<Vector3<f64>>,
}

impl CableForceSet {
    pub fn from_stacked(x: &DVector<f64>) -> Self {
        Self {
            mu: (0..x.len() / 3)
                .map(|k| Vector3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]))
                .collect(),
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(
            3 * self.mu.len(),
            self.mu.iter().flat_map(|m| m.iter().copied()),
        )
    }

    pub fn sum(&self) -> Vector3<f64> {
        self.mu.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.mu.iter().all(|m| m.iter().all(|v| v.is_finite()))
    }
}

/// Linear map from the stacked payload-frame cable forces to the payload
/// wrench: `[I … I]` for a point mass, `[[I …]; [p̂_a1 …]]` for a rigid body.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationMap {
    kind: PayloadKind,
    attachments: Vec<Vector3<f64>>,
    p: DMatrix<f64>,
    pinv: DMatrix<f64>,
    rank: usize,
}

impl AllocationMap {
    /// Builds the map. A rank-deficient rigid map (fewer than three
    /// attachments, or collinear ones) is accepted; check [`is_full_rank`].
    ///
    /// [`is_full_rank`]: AllocationMap::is_full_rank
    pub fn build(attachments: &[Vector3<f64>], kind: PayloadKind) -> Result<Self, AllocationError> {
        let n = attachments.len();
        if n == 0 {
            return Err(AllocationError::BadInput(
                "at least one cable is required".into(),
            ));
        }
        if attachments.iter().any(|a| !a.iter().all(|v| v.is_finite())) {
            return Err(AllocationError::BadInput(
                "attachment point is not finite".into(),
            ));
        }
        let rows = match kind {
            PayloadKind::PointMass => 3,
            PayloadKind::RigidBody => 6,
        };
        let mut p = DMatrix::zeros(rows, 3 * n);
        for (k, a) in attachments.iter().enumerate() {
            p.view_mut((0, 3 * k), (3, 3))
                .copy_from(&Matrix3::identity());
            if kind == PayloadKind::RigidBody {
                p.view_mut((3, 3 * k), (3, 3)).copy_from(&skew(a));
            }
        }
        let svd = p.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let tol = RANK_TOL * smax;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        let pinv = svd
            .pseudo_inverse(tol)
            .map_err(|e| AllocationError::BadInput(e.to_string()))?;
        let attachments = match kind {
            PayloadKind::PointMass => vec![Vector3::zeros(); n],
            PayloadKind::RigidBody => attachments.to_vec(),
        };
        Ok(Self {
            kind,
            attachments,
            p,
            pinv,
            rank,
        })
    }

    /// Like [`build`](AllocationMap::build) but rejects rank-deficient maps.
    pub fn build_full_rank(
        attachments: &[Vector3<f64>],
        kind: PayloadKind,
    ) -> Result<Self, AllocationError> {
        let map = Self::build(attachments, kind)?;
        if !map.is_full_rank() {
            return Err(AllocationError::RankDeficient {
                rank: map.rank,
                expected: map.rows(),
            });
        }
        Ok(map)
    }

    pub fn kind(&self) -> PayloadKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.attachments.len()
    }

    pub fn rows(&self) -> usize {
        self.p.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.rows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn attachments(&self) -> &[Vector3<f64>] {
        &self.attachments
    }

    /// Right-hand side `F_d` or `(R0ᵀF_d; M_d)`.
    pub fn rhs(&self, wrench: &DesiredWrench, r0: &Matrix3<f64>) -> DVector<f64> {
        match self.kind {
            PayloadKind::PointMass => DVector::from_column_slice(wrench.force.as_slice()),
            PayloadKind::RigidBody => {
                let f = r0.transpose() * wrench.force;
                DVector::from_iterator(6, f.iter().chain(wrench.moment.iter()).copied())
            }
        }
    }

    /// Map applied to world-frame forces: `P · blkdiag(R0ᵀ)`.
    pub fn world_matrix(&self, r0: &Matrix3<f64>) -> DMatrix<f64> {
        let mut a = self.p.clone();
        if self.kind == PayloadKind::RigidBody {
            let rt = r0.transpose();
            for k in 0..self.n() {
                let block = self.p.view((0, 3 * k), (6, 3)) * rt;
                a.view_mut((0, 3 * k), (6, 3)).copy_from(&block);
            }
        }
        a
    }

    /// Wrench produced by a force set, in the same layout as [`rhs`].
    ///
    /// [`rhs`]: AllocationMap::rhs
    pub fn apply(&self, forces: &CableForceSet, r0: &Matrix3<f64>) -> DVector<f64> {
        self.world_matrix(r0) * forces.stacked()
    }

    /// `‖P·stack(R0ᵀμ) − rhs‖`
    pub fn residual(
        &self,
        forces: &CableForceSet,
        wrench: &DesiredWrench,
        r0: &Matrix3<f64>,
    ) -> f64 {
        (self.apply(forces, r0) - self.rhs(wrench, r0)).norm()
    }

    /// Closest wrench the cables can produce. Identity for full-rank maps; for
    /// a rod it drops the moment about the rod axis.
    pub fn project(&self, wrench: &DesiredWrench, r0: &Matrix3<f64>) -> DesiredWrench {
        if self.is_full_rank() {
            return *wrench;
        }
        let b = &self.p * (&self.pinv * self.rhs(wrench, r0));
        match self.kind {
            PayloadKind::PointMass => DesiredWrench::force(Vector3::new(b[0], b[1], b[2])),
            PayloadKind::RigidBody => DesiredWrench {
                force: r0 * Vector3::new(b[0], b[1], b[2]),
                moment: Vector3::new(b[3], b[4], b[5]),
            },
        }
    }

    fn in_range(&self, rhs: &DVector<f64>) -> bool {
        if self.is_full_rank() {
            return true;
        }
        let back = &self.p * (&self.pinv * rhs);
        (back - rhs).norm() <= 1e-9 * (1.0 + rhs.norm())
    }
}

/// Minimum-norm cable forces `μ = blkdiag(R0) P⁺ rhs`.
///
/// Fails with [`AllocationError::SingularMap`] when the map is rank deficient
/// and the wrench has a component it cannot produce.
pub fn allocate_baseline(
    wrench: &DesiredWrench,
    r0: &Matrix3<f64>,
    map: &AllocationMap,
) -> Result<CableForceSet, AllocationError> {
    if !wrench.is_finite() {
        return Err(AllocationError::BadInput("wrench is not finite".into()));
    }
    let rhs = map.rhs(wrench, r0);
    if !map.in_range(&rhs) {
        return Err(AllocationError::SingularMap);
    }
    let local = &map.pinv * rhs;
    let mut out = CableForceSet::from_stacked(&local);
    if map.kind == PayloadKind::RigidBody {
        for m in &mut out.mu {
            *m = r0 * *m;
        }
    }
    Ok(out)
}

/// Cable forces minimizing `½‖μ‖² + λ‖μ0 − μ‖²` subject to the allocation
/// equality and `nᵀμ_k − a ≤ 0` for every `(k, half-space)` entry. Half-spaces
/// are in world-frame force coordinates. The preferred forces are used as
/// given; see [`Allocator`] for runtime rescaling of presets.
pub fn allocate_qp(
    wrench: &DesiredWrench,
    r0: &Matrix3<f64>,
    map: &AllocationMap,
    halfspaces: &[(usize, Halfspace)],
    preference: &FormationPreference,
    settings: &QpSettings,
) -> Result<CableForceSet, AllocationError> {
    if !wrench.is_finite() {
        return Err(AllocationError::BadInput("wrench is not finite".into()));
    }
    let rhs = map.rhs(wrench, r0);
    if !map.in_range(&rhs) {
        return Err(AllocationError::SingularMap);
    }
    let mu0 = preference.active_mu0(map.n())?;
    let problem = mu_problem(map, r0, &rhs, halfspaces, mu0, preference.lambda)?;
    let sol = qp::solve(&problem, None, settings);
    match sol.status {
        QpStatus::Solved => Ok(CableForceSet::from_stacked(&sol.x)),
        QpStatus::PrimalInfeasible => Err(AllocationError::Infeasible),
        s => Err(AllocationError::SolverFailure(s)),
    }
}
