//! Parameterized braking trajectories and their polynomial-zonotope lifts.
//!
//! Each joint accelerates at the constant `a_j = k_scale_j · k_j` until
//! `t_plan`, then decelerates linearly to rest at `t_final`:
//!
//! ```text
//! t < t_plan:  q = q0 + qd0 t + a t²/2
//! t ≥ t_plan:  q = q_p + v_p (τ − τ²/(2T)),  τ = t − t_plan,  T = t_final − t_plan
//! ```
//!
//! with `q_p`, `v_p = qd0 + a t_plan` the position and velocity at `t_plan`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::zonotope::{IndeterminateId, PolyZonotope};

/// Default planning horizon split.
pub const DEFAULT_T_PLAN: f64 = 0.5;
pub const DEFAULT_T_FINAL: f64 = 1.0;
pub const DEFAULT_DT: f64 = 0.025;

const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub t_plan: f64,
    pub t_final: f64,
    pub n_t: usize,
    /// Maximum acceleration magnitude per unit trajectory parameter (rad/s²).
    pub k_scale: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            t_plan: DEFAULT_T_PLAN,
            t_final: DEFAULT_T_FINAL,
            n_t: 40,
            k_scale: std::f64::consts::PI / 6.0,
        }
    }
}

impl TrajectoryConfig {
    pub fn partition(&self) -> Result<TimePartition> {
        TimePartition::new(self.n_t, self.t_final / self.n_t as f64, self.t_final)
    }

    pub fn family(&self, q0: Vec<f64>, qd0: Vec<f64>) -> Result<TrajectoryFamily> {
        let n = q0.len();
        TrajectoryFamily::new(q0, qd0, self.t_plan, self.t_final, vec![self.k_scale; n])
    }
}

/// Uniform partition of `[0, t_final]` into `n_t` intervals of length `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimePartition {
    n_t: usize,
    dt: f64,
}

impl TimePartition {
    pub fn new(n_t: usize, dt: f64, t_final: f64) -> Result<Self> {
        if n_t == 0 || !(dt > 0.0) {
            return Err(invalid("time partition needs n_t ≥ 1 and dt > 0"));
        }
        if (n_t as f64 * dt - t_final).abs() > 1e-12 {
            return Err(invalid(format!(
                "n_t·dt = {} does not match t_final = {t_final}",
                n_t as f64 * dt
            )));
        }
        Ok(Self { n_t, dt })
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Closed time span `[i·dt, (i+1)·dt]` of interval `i` (0-based).
    pub fn span(&self, i: usize) -> (f64, f64) {
        (i as f64 * self.dt, (i + 1) as f64 * self.dt)
    }

    /// Scalar polynomial zonotope `(i+½)·dt + (dt/2)·x_t` covering interval `i`.
    pub fn time_interval_pz(&self, i: usize) -> Result<PolyZonotope> {
        if i >= self.n_t {
            return Err(Error::OutOfRange {
                what: "time interval index",
                value: i as f64,
                lo: 0.0,
                hi: (self.n_t - 1) as f64,
            });
        }
        Ok(PolyZonotope::scalar_var(
            (i as f64 + 0.5) * self.dt,
            0.5 * self.dt,
            IndeterminateId::time(i),
        ))
    }
}

/// Family of braking trajectories from a fixed initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFamily {
    pub q0: Vec<f64>,
    pub qd0: Vec<f64>,
    pub t_plan: f64,
    pub t_final: f64,
    pub k_scale: Vec<f64>,
}

impl TrajectoryFamily {
    pub fn new(
        q0: Vec<f64>,
        qd0: Vec<f64>,
        t_plan: f64,
        t_final: f64,
        k_scale: Vec<f64>,
    ) -> Result<Self> {
        let n = q0.len();
        for len in [qd0.len(), k_scale.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        if !(0.0 < t_plan && t_plan < t_final) {
            return Err(invalid(format!(
                "need 0 < t_plan < t_final, got {t_plan}, {t_final}"
            )));
        }
        if k_scale.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("k_scale must be positive"));
        }
        if q0.iter().chain(&qd0).any(|v| !v.is_finite()) {
            return Err(invalid("initial state must be finite"));
        }
        Ok(Self {
            q0,
            qd0,
            t_plan,
            t_final,
            k_scale,
        })
    }

    pub fn n_q(&self) -> usize {
        self.q0.len()
    }

    fn check_k(&self, k: &[f64]) -> Result<()> {
        if k.len() != self.n_q() {
            return Err(Error::DimensionMismatch {
                expected: self.n_q(),
                got: k.len(),
            });
        }
        for v in k {
            if !(-1.0..=1.0).contains(v) {
                return Err(Error::OutOfRange {
                    what: "trajectory parameter",
                    value: *v,
                    lo: -1.0,
                    hi: 1.0,
                });
            }
        }
        Ok(())
    }

    /// Position and velocity at time `t` for parameter `k ∈ [-1,1]^{n_q}`.
    pub fn q_of_t(&self, t: f64, k: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_k(k)?;
        if !(0.0..=self.t_final).contains(&t) {
            return Err(Error::OutOfRange {
                what: "time",
                value: t,
                lo: 0.0,
                hi: self.t_final,
            });
        }
        Ok(self.state_unchecked(t, k))
    }

    pub(crate) fn state_unchecked(&self, t: f64, k: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (tp, tf) = (self.t_plan, self.t_final);
        let n = self.n_q();
        let mut q = vec![0.0; n];
        let mut qd = vec![0.0; n];
        for j in 0..n {
            let a = self.k_scale[j] * k[j];
            if t < tp {
                q[j] = self.q0[j] + self.qd0[j] * t + 0.5 * a * t * t;
                qd[j] = self.qd0[j] + a * t;
            } else {
                let qp = self.q0[j] + self.qd0[j] * tp + 0.5 * a * tp * tp;
                let vp = self.qd0[j] + a * tp;
                let (tau, big_t) = (t - tp, tf - tp);
                q[j] = qp + vp * (tau - tau * tau / (2.0 * big_t));
                qd[j] = vp * (1.0 - tau / big_t);
            }
        }
        (q, qd)
    }

    /// Braked end position `q(t_final; k)` and its diagonal derivative `∂q_j/∂k_j`.
    pub fn end_position(&self, k: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (tp, tf) = (self.t_plan, self.t_final);
        let w_v = tp + 0.5 * (tf - tp);
        let w_a = 0.5 * tp * tp + tp * 0.5 * (tf - tp);
        let q = (0..self.n_q())
            .map(|j| self.q0[j] + self.qd0[j] * w_v + self.k_scale[j] * k[j] * w_a)
            .collect();
        let dq = self.k_scale.iter().map(|s| s * w_a).collect();
        (q, dq)
    }

    /// Scalar PZ `k_scale_j · x_{k_j}` for the acceleration of joint `j`.
    pub fn accel_pz(&self, j: usize) -> PolyZonotope {
        PolyZonotope::scalar_var(0.0, self.k_scale[j], IndeterminateId::traj(j))
    }

    /// Polynomial zonotopes of position and velocity over interval `i`.
    ///
    /// The planning time `t_plan` must lie on the partition grid so that no
    /// interval straddles the switch between the two phases.
    pub fn q_pz(
        &self,
        part: &TimePartition,
        i: usize,
    ) -> Result<(Vec<PolyZonotope>, Vec<PolyZonotope>)> {
        let switch = self.t_plan / part.dt();
        if (switch - switch.round()).abs() > GRID_TOL {
            return Err(invalid(format!(
                "t_plan = {} is not a multiple of dt = {}",
                self.t_plan,
                part.dt()
            )));
        }
        let t = part.time_interval_pz(i)?;
        let (lo, hi) = part.span(i);
        let braking = 0.5 * (lo + hi) >= self.t_plan;
        let mut qs = Vec::with_capacity(self.n_q());
        let mut qds = Vec::with_capacity(self.n_q());
        for j in 0..self.n_q() {
            let a = self.accel_pz(j);
            let (q, qd) = if !braking {
                let t2 = t.mul(&t)?;
                let q = t
                    .scale(self.qd0[j])
                    .add(&a.mul(&t2)?.scale(0.5))?
                    .add_const(&[self.q0[j]])?;
                let qd = a.mul(&t)?.add_const(&[self.qd0[j]])?;
                (q, qd)
            } else {
                let tp = self.t_plan;
                let big_t = self.t_final - tp;
                let tau = t.add_const(&[-tp])?;
                let vp = a.scale(tp).add_const(&[self.qd0[j]])?;
                let qp = a
                    .scale(0.5 * tp * tp)
                    .add_const(&[self.q0[j] + self.qd0[j] * tp])?;
                let shape = tau.add(&tau.mul(&tau)?.scale(-0.5 / big_t))?;
                let q = qp.add(&vp.mul(&shape)?)?;
                let decay = tau.scale(-1.0 / big_t).add_const(&[1.0])?;
                let qd = vp.mul(&decay)?;
                (q, qd)
            };
            qs.push(q);
            qds.push(qd);
        }
        Ok((qs, qds))
    }
}

/// Assignment of the trajectory-parameter indeterminates to `k`.
pub fn k_assignment(k: &[f64]) -> Vec<(IndeterminateId, f64)> {
    k.iter()
        .enumerate()
        .map(|(j, v)| (IndeterminateId::traj(j), *v))
        .collect()
}
