//! Monte-Carlo check of the enclosure chain: trajectory, kinematics, joint and
//! forward occupancy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kinematics::RobotModel;
use crate::occupancy::{sample_tapered_capsule, sfo_slice, sjo, Ball};
use crate::planner::SlicedBound;
use crate::trajectory::TrajectoryConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_states: usize,
    pub samples_per_interval: usize,
    pub n_s: usize,
    pub trig_order: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_states: 10,
            samples_per_interval: 1000,
            n_s: 5,
            trig_order: 3,
            tol: 1e-9,
            seed: 0,
        }
    }
}

/// Violation counts and worst excess (positive means outside) per link of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkCount {
    pub checks: usize,
    pub violations: usize,
    pub worst_excess: f64,
}

impl LinkCount {
    fn record(&mut self, excess: f64, tol: f64) {
        self.checks += 1;
        if excess > tol {
            self.violations += 1;
        }
        if self.checks == 1 || excess > self.worst_excess {
            self.worst_excess = excess;
        }
    }

    fn merge(mut self, other: Self) -> Self {
        if other.checks > 0 && (self.checks == 0 || other.worst_excess > self.worst_excess) {
            self.worst_excess = other.worst_excess;
        }
        self.checks += other.checks;
        self.violations += other.violations;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChainReport {
    pub trajectory: LinkCount,
    pub kinematics: LinkCount,
    pub joint_occupancy: LinkCount,
    pub forward_occupancy: LinkCount,
}

impl ChainReport {
    pub fn total_violations(&self) -> usize {
        self.trajectory.violations
            + self.kinematics.violations
            + self.joint_occupancy.violations
            + self.forward_occupancy.violations
    }

    fn merge(self, o: Self) -> Self {
        Self {
            trajectory: self.trajectory.merge(o.trajectory),
            kinematics: self.kinematics.merge(o.kinematics),
            joint_occupancy: self.joint_occupancy.merge(o.joint_occupancy),
            forward_occupancy: self.forward_occupancy.merge(o.forward_occupancy),
        }
    }
}

fn excess(bound: (f64, f64), x: f64) -> f64 {
    (bound.0 - x).max(x - bound.1)
}

/// Sample initial states, times and parameters and measure every enclosure.
pub fn overapproximation_chain(model: &RobotModel, traj: &TrajectoryConfig, cfg: &ChainConfig) -> Result<ChainReport> {
    let n_q = model.n_q();
    let part = traj.partition()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let states: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.n_states)
        .map(|_| {
            let q0 = model.joints.iter().map(|j| rng.gen_range(j.q_lim.lo..=j.q_lim.hi)).collect();
            let qd0 = model.joints.iter().map(|j| rng.gen_range(j.qd_lim.lo..=j.qd_lim.hi)).collect();
            (q0, qd0)
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cfg.n_states)
        .flat_map(|s| (0..part.n_t()).map(move |i| (s, i)))
        .collect();
    let radii = model.sphere_radii();
    jobs.par_iter()
        .map(|&(s, i)| -> Result<ChainReport> {
            let (q0, qd0) = &states[s];
            let fam = traj.family(q0.clone(), qd0.clone())?;
            let (q_pz, qd_pz) = fam.q_pz(&part, i)?;
            let frames = model.fk_pz(&q_pz, cfg.trig_order, crate::kinematics::DEFAULT_MAX_GENERATORS)?;
            let entries = sjo(model, &fam, &part, i, cfg.trig_order)?;
            let traj_bounds = q_pz
                .iter()
                .chain(&qd_pz)
                .map(SlicedBound::new)
                .collect::<Result<Vec<_>>>()?;
            let mut frame_bounds = Vec::with_capacity(n_q);
            for f in &frames {
                let mut b = Vec::with_capacity(12);
                for axis in 0..3 {
                    b.push(SlicedBound::new(&f.position.component(axis))?);
                }
                for r in &f.rotation {
                    b.push(SlicedBound::new(r)?);
                }
                frame_bounds.push(b);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
            rng.set_stream((s * part.n_t() + i) as u64);
            let (lo, hi) = part.span(i);
            let (mut dlo, mut dhi) = (vec![0.0; n_q], vec![0.0; n_q]);
            let mut rep = ChainReport::default();
            for _ in 0..cfg.samples_per_interval {
                let k: Vec<f64> = (0..n_q).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                let t = rng.gen_range(lo..=hi);
                let (q, qd) = fam.q_of_t(t, &k)?;
                for (b, x) in traj_bounds.iter().zip(q.iter().chain(&qd)) {
                    rep.trajectory.record(excess(b.eval(&k, &mut dlo, &mut dhi), *x), cfg.tol);
                }
                let exact = model.fk(&q)?;
                for (b, fe) in frame_bounds.iter().zip(&exact) {
                    for axis in 0..3 {
                        rep.kinematics.record(excess(b[axis].eval(&k, &mut dlo, &mut dhi), fe.position[axis]), cfg.tol);
                    }
                    for e in 0..9 {
                        let x = fe.rotation[(e / 3, e % 3)];
                        rep.kinematics.record(excess(b[3 + e].eval(&k, &mut dlo, &mut dhi), x), cfg.tol);
                    }
                }
                let centers = model.sphere_centers(&q)?;
                for (e, (c, r)) in entries.iter().zip(centers.iter().zip(&radii)) {
                    let ball = e.ball_at(&k);
                    let gap = (ball.center - c).norm() + r - ball.radius;
                    rep.joint_occupancy.record(gap, cfg.tol);
                }
                for link in 0..n_q {
                    let balls = sfo_slice(&entries[link], &entries[link + 1], &k, cfg.n_s);
                    let a = Ball::new(centers[link], radii[link]);
                    let b = Ball::new(centers[link + 1], radii[link + 1]);
                    let x = sample_tapered_capsule(&a, &b, &mut rng);
                    let gap = balls
                        .iter()
                        .map(|ball| (x - ball.center).norm() - ball.radius)
                        .fold(f64::INFINITY, f64::min);
                    rep.forward_occupancy.record(gap, cfg.tol);
                }
            }
            Ok(rep)
        })
        .try_reduce(ChainReport::default, |a, b| Ok(a.merge(b)))
}
