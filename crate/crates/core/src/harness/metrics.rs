use serde::{Deserialize, Serialize};

/// Mean and standard deviation of a sampled quantity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

/// Running sums for [`Stat`]; summation order is fixed, so results are
/// reproducible bit for bit.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn stat(&self) -> Stat {
        if self.n == 0 {
            return Stat::default();
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        Stat {
            mean,
            std: (self.sum_sq / n - mean * mean).max(0.0).sqrt(),
        }
    }
}

/// Reproducible run statistics. Wall-clock timings live in [`TimingStats`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub ticks: u64,
    pub simulated_time: f64,
    /// Start of the averaging window, s.
    pub window_start: f64,
    /// Absolute payload position error per axis, cm.
    pub position_error_cm: [Stat; 3],
    /// Absolute roll, pitch and yaw error, deg; rigid payloads only.
    pub orientation_error_deg: Option<[Stat; 3]>,
    /// Smallest distance between two quadrotors over the whole run, m.
    pub min_distance: f64,
    pub min_distance_pair: (usize, usize),
    pub min_distance_time: f64,
    /// Smallest `d_ij / (r_i + r_j)` over the whole run.
    pub min_clearance_ratio: f64,
    /// Ticks in which some pair was closer than its combined safety radii.
    pub ticks_in_contact: u64,
    /// Robot-ticks with a clamped motor command.
    pub saturation_count: u64,
    /// Allocations that failed and reused the previous result.
    pub infeasibility_count: u64,
    pub allocations: u64,
    pub qp_iterations: Stat,
    pub replica_mismatches: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingStat {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub max: f64,
}

impl TimingStat {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut acc = Accumulator::default();
        samples.iter().for_each(|&x| acc.push(x));
        let s = acc.stat();
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) {
            0.5 * (sorted[mid - 1] + sorted[mid])
        } else {
            sorted[mid]
        };
        Self {
            mean: s.mean,
            std: s.std,
            median,
            max: sorted[sorted.len() - 1],
        }
    }
}

/// Allocation runtimes in ms, per allocation (stages summed over pairs).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingStats {
    pub total_ms: TimingStat,
    pub fd_ms: TimingStat,
    pub svm_ms: TimingStat,
    pub mu_ms: TimingStat,
    pub wall_s: f64,
}

/// Largest horizontal distance of the points from their best-fit line.
pub fn line_deviation(points: &[nalgebra::Vector3<f64>]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 3 {
        return 0.0;
    }
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - cx, p.y - cy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // Principal direction of the 2x2 scatter matrix.
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let normal = (-theta.sin(), theta.cos());
    points
        .iter()
        .map(|p| ((p.x - cx) * normal.0 + (p.y - cy) * normal.1).abs())
        .fold(0.0, f64::max)
}

/// Angular gaps, in degrees, between consecutive robots around the payload
/// seen from above. They sum to 360.
pub fn azimuth_gaps(
    center: &nalgebra::Vector3<f64>,
    points: &[nalgebra::Vector3<f64>],
) -> Vec<f64> {
    let mut az: Vec<f64> = points
        .iter()
        .map(|p| (p.y - center.y).atan2(p.x - center.x).to_degrees())
        .collect();
    az.sort_by(f64::total_cmp);
    let k = az.len();
    (0..k)
        .map(|i| {
            if i + 1 < k {
                az[i + 1] - az[i]
            } else {
                az[0] + 360.0 - az[k - 1]
            }
        })
        .collect()
}
