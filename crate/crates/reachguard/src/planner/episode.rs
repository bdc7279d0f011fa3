//! Receding-horizon loop with braking fallback.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ground_truth::GroundTruth;
use crate::trajectory::TrajectoryFamily;

use super::{solve, PlanProblem, PlanStatus};

/// Executed piece of one braking trajectory over `[t_from, t_to]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub family: TrajectoryFamily,
    pub k: Vec<f64>,
    pub t_from: f64,
    pub t_to: f64,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.t_to - self.t_from
    }

    pub fn state(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        self.family.state_unchecked(t.clamp(0.0, self.family.t_final), &self.k)
    }

    pub fn start_state(&self) -> (Vec<f64>, Vec<f64>) {
        self.state(self.t_from)
    }

    pub fn end_state(&self) -> (Vec<f64>, Vec<f64>) {
        self.state(self.t_to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GoalReached,
    /// Two consecutive iterations found no certified plan.
    Stuck,
    Collision,
    IterationLimit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationLog {
    pub index: usize,
    pub q0: Vec<f64>,
    pub qd0: Vec<f64>,
    pub waypoint: Vec<f64>,
    pub status: PlanStatus,
    pub solver_iterations: usize,
    pub constraint_evals: usize,
    pub wall_time: f64,
    pub mean_eval_time: f64,
    pub n_constraints: usize,
    pub n_prefiltered: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSample {
    pub t: f64,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub q_start: Vec<f64>,
    pub q_goal: Vec<f64>,
    pub iterations: Vec<IterationLog>,
    pub segments: Vec<Segment>,
    pub termination: Termination,
    pub final_q: Vec<f64>,
    pub final_qd: Vec<f64>,
    /// Executed trajectory on a coarse clock, for plotting.
    pub samples: Vec<StateSample>,
}

impl EpisodeLog {
    pub fn succeeded(&self) -> bool {
        self.termination == Termination::GoalReached
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn executed_time(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }
}

/// Point at most `step` (∞-norm) from `q` on the line toward `goal`.
pub fn straight_line_waypoint(q: &[f64], goal: &[f64], step: f64) -> Vec<f64> {
    let dist = q.iter().zip(goal).map(|(a, b)| (b - a).abs()).fold(0.0, f64::max);
    let s = if dist > step { step / dist } else { 1.0 };
    q.iter().zip(goal).map(|(a, b)| a + s * (b - a)).collect()
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

const SAMPLE_DT: f64 = 0.05;

/// Run the receding-horizon loop from rest at `q_start` toward `q_goal`.
pub fn plan_episode(prob: &PlanProblem, q_start: &[f64], q_goal: &[f64], max_iters: usize) -> Result<EpisodeLog> {
    let model = prob.model;
    let n_q = model.n_q();
    for q in [q_start, q_goal] {
        if q.len() != n_q {
            return Err(Error::DimensionMismatch {
                expected: n_q,
                got: q.len(),
            });
        }
        for (v, joint) in q.iter().zip(&model.joints) {
            if !joint.q_lim.contains(*v) {
                return Err(Error::OutOfRange {
                    what: "start/goal joint angle",
                    value: *v,
                    lo: joint.q_lim.lo,
                    hi: joint.q_lim.hi,
                });
            }
        }
    }
    let gt = GroundTruth::for_model(model);
    if gt.configuration_collides(model, q_start, prob.obstacles)? || gt.configuration_collides(model, q_goal, prob.obstacles)? {
        return Err(Error::InvalidArgument("start or goal configuration is in collision".into()));
    }

    let cfg = &prob.config;
    let mut q = q_start.to_vec();
    let mut qd = vec![0.0; n_q];
    let mut previous: Option<(TrajectoryFamily, Vec<f64>)> = None;
    let mut infeasible_run = 0;
    let mut iterations = Vec::new();
    let mut segments: Vec<Segment> = Vec::new();
    let mut termination = Termination::IterationLimit;

    for index in 0..max_iters {
        let at_rest = qd.iter().all(|v| *v == 0.0);
        if at_rest && inf_dist(&q, q_goal) < cfg.goal_tol {
            termination = Termination::GoalReached;
            break;
        }
        let waypoint = straight_line_waypoint(&q, q_goal, cfg.waypoint_step);
        let result = solve(prob, &q, &qd, &waypoint, index as u64)?;
        let mut reached = false;
        let segment = match &result.status {
            PlanStatus::Feasible(k) => {
                infeasible_run = 0;
                let family = prob.traj.family(q.clone(), qd.clone())?;
                reached = inf_dist(&family.end_position(k).0, q_goal) < cfg.goal_tol;
                let t_to = if reached { family.t_final } else { family.t_plan };
                previous = Some((family.clone(), k.clone()));
                Some(Segment {
                    family,
                    k: k.clone(),
                    t_from: 0.0,
                    t_to,
                })
            }
            PlanStatus::Infeasible => {
                infeasible_run += 1;
                previous.take().map(|(family, k)| Segment {
                    t_from: family.t_plan,
                    t_to: family.t_final,
                    family,
                    k,
                })
            }
        };
        iterations.push(IterationLog {
            index,
            q0: q.clone(),
            qd0: qd.clone(),
            waypoint,
            status: result.status.clone(),
            solver_iterations: result.iterations,
            constraint_evals: result.constraint_evals,
            wall_time: result.wall_time,
            mean_eval_time: result.mean_eval_time,
            n_constraints: result.n_constraints,
            n_prefiltered: result.n_prefiltered,
        });
        if let Some(seg) = segment {
            let collided = gt.segment_collides(model, &seg, prob.obstacles)?;
            (q, qd) = seg.end_state();
            if seg.t_to >= seg.family.t_final {
                qd.iter_mut().for_each(|v| *v = 0.0);
            }
            segments.push(seg);
            if collided {
                termination = Termination::Collision;
                break;
            }
        }
        if reached {
            termination = Termination::GoalReached;
            break;
        }
        if infeasible_run >= 2 {
            termination = Termination::Stuck;
            break;
        }
    }

    let samples = sample_segments(&segments, q_start);
    Ok(EpisodeLog {
        q_start: q_start.to_vec(),
        q_goal: q_goal.to_vec(),
        iterations,
        segments,
        termination,
        final_q: q,
        final_qd: qd,
        samples,
    })
}

fn sample_segments(segments: &[Segment], q_start: &[f64]) -> Vec<StateSample> {
    let mut out = vec![StateSample {
        t: 0.0,
        q: q_start.to_vec(),
        qd: vec![0.0; q_start.len()],
    }];
    let mut clock = 0.0;
    for seg in segments {
        let n = (seg.duration() / SAMPLE_DT).ceil().max(1.0) as usize;
        for s in 1..=n {
            let t = seg.t_from + seg.duration() * s as f64 / n as f64;
            let (q, qd) = seg.state(t);
            out.push(StateSample {
                t: clock + (t - seg.t_from),
                q,
                qd,
            });
        }
        clock += seg.duration();
    }
    out
}
