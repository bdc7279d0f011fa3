//! Ground-truth collision checking of executed motion against capsule geometry.

use nalgebra::Vector3;

use crate::distance::Obstacle;
use crate::error::Result;
use crate::kinematics::RobotModel;
use crate::occupancy::{sfo_balls, Ball};
use crate::planner::Segment;

/// Sampling resolution of the checker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    /// Time step between trajectory samples (s).
    pub dt: f64,
    /// Ball spacing along each link (m).
    pub spacing: f64,
}

impl GroundTruth {
    /// One millisecond in time and a quarter of the smallest link radius in space.
    pub fn for_model(model: &RobotModel) -> Self {
        Self {
            dt: 1e-3,
            spacing: model.min_radius() / 4.0,
        }
    }

    /// Same checker with both resolutions divided by `factor`.
    pub fn refined(&self, factor: f64) -> Self {
        Self {
            dt: self.dt / factor,
            spacing: self.spacing / factor,
        }
    }

    /// Does any tapered capsule at configuration `q` intersect an obstacle?
    pub fn configuration_collides(&self, model: &RobotModel, q: &[f64], obstacles: &[Obstacle]) -> Result<bool> {
        let centers = model.sphere_centers(q)?;
        Ok(capsules_collide(&centers, &model.sphere_radii(), obstacles, self.spacing))
    }

    pub fn segment_collides(&self, model: &RobotModel, seg: &Segment, obstacles: &[Obstacle]) -> Result<bool> {
        if obstacles.is_empty() {
            return Ok(false);
        }
        let n = (seg.duration() / self.dt).ceil().max(1.0) as usize;
        for s in 0..=n {
            let t = seg.t_from + seg.duration() * s as f64 / n as f64;
            if self.configuration_collides(model, &seg.state(t).0, obstacles)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

fn capsules_collide(centers: &[Vector3<f64>], radii: &[f64], obstacles: &[Obstacle], spacing: f64) -> bool {
    for link in 0..centers.len() - 1 {
        let a = Ball::new(centers[link], radii[link]);
        let b = Ball::new(centers[link + 1], radii[link + 1]);
        let len = (b.center - a.center).norm();
        let mid = 0.5 * (a.center + b.center);
        let bound = 0.5 * len + a.radius.max(b.radius);
        let near: Vec<&Obstacle> = obstacles.iter().filter(|o| o.hull_distance(&mid) <= bound).collect();
        if near.is_empty() {
            continue;
        }
        let n_s = (len / spacing).ceil().max(1.0) as usize;
        for ball in sfo_balls(&a, &b, n_s) {
            if near.iter().any(|o| o.sphere_clearance(&ball) <= 0.0) {
                return true;
            }
        }
    }
    false
}

/// True iff the executed segments touch an obstacle under the default resolution.
pub fn ground_truth_collision(model: &RobotModel, segments: &[Segment], obstacles: &[Obstacle]) -> Result<bool> {
    let gt = GroundTruth::for_model(model);
    for seg in segments {
        if gt.segment_collides(model, seg, obstacles)? {
            return Ok(true);
        }
    }
    Ok(false)
}
