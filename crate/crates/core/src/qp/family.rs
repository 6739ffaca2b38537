use nalgebra::RealField;

use super::admm::Workspace;
use super::{QpError, QpProblem, QpSettings, QpSolution};

/// A fixed-shape family of QPs whose data changes between solves.
///
/// Holds the solver workspace, the last step size and the primal/dual
/// warm-start slots. Shapes are fixed at construction; [`update_and_solve`]
/// rejects data of any other shape.
///
/// [`update_and_solve`]: ProblemFamily::update_and_solve
#[derive(Debug, Clone)]
pub struct ProblemFamily<T: RealField + Copy = f64> {
    settings: QpSettings,
    ws: Workspace<T>,
    solution: QpSolution<T>,
    backup: QpSolution<T>,
    has_warm: bool,
    warm_enabled: bool,
}

impl<T: RealField + Copy> ProblemFamily<T> {
    pub fn new(n: usize, m: usize, settings: QpSettings) -> Self {
        Self {
            settings,
            ws: Workspace::new(n, m, &settings),
            solution: QpSolution::empty(n, m),
            backup: QpSolution::empty(n, m),
            has_warm: false,
            warm_enabled: true,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.ws.dims()
    }

    pub fn settings(&self) -> &QpSettings {
        &self.settings
    }

    pub fn set_warm_start(&mut self, enabled: bool) {
        self.warm_enabled = enabled;
    }

    /// Whether the next solve will start from the previous solution.
    pub fn has_warm_start(&self) -> bool {
        self.warm_enabled && self.has_warm
    }

    /// Drops the cached iterate and step size.
    pub fn reset(&mut self) {
        self.has_warm = false;
        self.ws.set_rho(nalgebra::convert(self.settings.rho));
    }

    /// Loads new data and solves, warm starting from the previous successful
    /// solve when enabled. The warm-start slots are updated only on success.
    pub fn update_and_solve(&mut self, problem: &QpProblem<T>) -> Result<&QpSolution<T>, QpError> {
        let (n, m) = self.ws.dims();
        if problem.shape() != (n, m) {
            return Err(QpError::ShapeMismatch {
                expected_n: n,
                expected_m: m,
                n: problem.num_vars(),
                m: problem.num_constraints(),
            });
        }
        self.ws.load(problem);
        if !(self.warm_enabled && self.has_warm) {
            self.ws.cold_start();
            self.ws.set_rho(nalgebra::convert(self.settings.rho));
        }
        // The workspace iterate still holds the last solution, which is the
        // warm start; a failed solve leaves garbage there, so restore it.
        self.backup.x.copy_from(&self.solution.x);
        self.backup.y.copy_from(&self.solution.y);
        self.ws.run_into(&self.settings, &mut self.solution);
        if self.solution.is_solved() {
            self.has_warm = true;
        } else if self.has_warm {
            self.ws.warm_start(&self.backup.x, &self.backup.y);
        }
        Ok(&self.solution)
    }

    pub fn solution(&self) -> &QpSolution<T> {
        &self.solution
    }
}
