//! Reference trajectories.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::controller::ReferenceSetpoint;
use crate::math::rot_z;

/// Payload heading along a trajectory; only rigid payloads use it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum YawProfile {
    Constant {
        yaw: f64,
    },
    /// Heading grows at `rate` rad/s once the trajectory is at speed.
    Ramp {
        rate: f64,
    },
}

impl Default for YawProfile {
    fn default() -> Self {
        Self::Constant { yaw: 0.0 }
    }
}

/// Lemniscate of Gerono `(a sin φ, ½ a sin 2φ)` traversed at constant phase
/// rate after a smooth start from rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Figure8 {
    pub period: f64,
    /// Half width along x, m.
    pub scale: f64,
    pub center: Vector3<f64>,
    /// Time to reach full phase rate from rest. Zero starts at speed.
    #[serde(default)]
    pub ramp: f64,
    #[serde(default)]
    pub yaw: YawProfile,
}

impl Figure8 {
    /// Scale whose peak speed is `speed` for the given period.
    pub fn scale_for_peak_speed(period: f64, speed: f64) -> f64 {
        let omega = 2.0 * std::f64::consts::PI / period;
        speed / (omega * std::f64::consts::SQRT_2)
    }

    pub fn peak_speed(&self) -> f64 {
        self.scale * self.omega() * std::f64::consts::SQRT_2
    }

    fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.period
    }

    /// Phase and its first two derivatives.
    fn phase(&self, t: f64) -> (f64, f64, f64) {
        let w = self.omega();
        let tr = self.ramp;
        if tr <= 0.0 || t >= tr {
            let offset = if tr > 0.0 { 0.5 * tr } else { 0.0 };
            return (w * (t.max(0.0) - tr.max(0.0) + offset), w, 0.0);
        }
        let x = t.max(0.0) / tr;
        // Rate follows a quintic smoothstep, so the position is C³.
        let h = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
        let dh = 30.0 * x * x * (1.0 - x) * (1.0 - x);
        let big_h = x.powi(4) * (2.5 - 3.0 * x + x * x);
        (w * tr * big_h, w * h, w * dh / tr)
    }

    pub fn sample(&self, t: f64, n: usize) -> ReferenceSetpoint {
        let a = self.scale;
        let (phi, dphi, ddphi) = self.phase(t);
        let (s1, c1) = phi.sin_cos();
        let (s2, c2) = (2.0 * phi).sin_cos();
        let p = Vector3::new(a * s1, 0.5 * a * s2, 0.0);
        let dp = Vector3::new(a * c1 * dphi, a * c2 * dphi, 0.0);
        let ddp = Vector3::new(
            a * (-s1 * dphi * dphi + c1 * ddphi),
            a * (-2.0 * s2 * dphi * dphi + c2 * ddphi),
            0.0,
        );
        let mut r = ReferenceSetpoint::hover(self.center + p, n);
        r.dp0r = dp;
        r.ddp0r = ddp;
        match self.yaw {
            YawProfile::Constant { yaw } => r.r0r = rot_z(yaw),
            YawProfile::Ramp { rate } => {
                let w = self.omega();
                r.r0r = rot_z(rate * phi / w);
                r.w0r = Vector3::new(0.0, 0.0, rate * dphi / w);
                r.dw0r = Vector3::new(0.0, 0.0, rate * ddphi / w);
            }
        }
        r
    }
}

/// Periodic figure-8 through the origin at constant phase rate.
pub fn figure8(t: f64, period: f64, scale: f64) -> ReferenceSetpoint {
    Figure8 {
        period,
        scale,
        center: Vector3::zeros(),
        ramp: 0.0,
        yaw: YawProfile::default(),
    }
    .sample(t, 0)
}
