//! Trajectory optimization over the braking family and the receding-horizon loop.

pub mod constraints;
pub mod episode;
pub mod solver;

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::ConformalSfo;
use crate::distance::Obstacle;
use crate::error::{Error, Result};
use crate::kinematics::RobotModel;
use crate::trajectory::{TrajectoryConfig, TrajectoryFamily};

pub use constraints::{ConstraintEval, ConstraintKind, ConstraintSet, JointSpheres, SlicedBound};
pub use episode::{plan_episode, straight_line_waypoint, EpisodeLog, IterationLog, Segment, Termination};
pub use solver::{solve_from, Nlp, SolveTrace, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanMode {
    ExactSfo,
    ConformalizedNeural,
}

impl std::str::FromStr for PlanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::ExactSfo),
            "neural" => Ok(Self::ConformalizedNeural),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}', expected exact|neural"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub mode: PlanMode,
    /// Balls per link in the forward occupancy.
    pub n_s: usize,
    pub trig_order: usize,
    /// Added to every collision row.
    pub margin: f64,
    /// A plan is certified only if every freshly evaluated row is `≤ -verify_tol`.
    pub verify_tol: f64,
    pub solve_slack: f64,
    pub n_starts: usize,
    /// Wall-clock budget per solve, in seconds.
    pub time_budget: f64,
    pub use_grad_net: bool,
    pub seed: u64,
    /// Largest joint step (∞-norm, rad) of the straight-line waypoint.
    pub waypoint_step: f64,
    /// Goal tolerance (∞-norm, rad) at rest.
    pub goal_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            mode: PlanMode::ExactSfo,
            n_s: 5,
            trig_order: 3,
            margin: 1e-6,
            verify_tol: 1e-6,
            solve_slack: 1e-4,
            n_starts: 4,
            time_budget: 1.0,
            use_grad_net: true,
            seed: 0,
            waypoint_step: 0.5,
            goal_tol: 0.05,
            max_outer: 12,
            max_inner: 30,
        }
    }
}

/// Scene, robot and (for neural mode) calibrated surrogate shared by every solve.
#[derive(Clone, Copy)]
pub struct PlanProblem<'a> {
    pub model: &'a RobotModel,
    pub obstacles: &'a [Obstacle],
    pub traj: TrajectoryConfig,
    pub surrogate: Option<&'a ConformalSfo>,
    pub config: PlannerConfig,
}

impl<'a> PlanProblem<'a> {
    pub fn new(
        model: &'a RobotModel,
        obstacles: &'a [Obstacle],
        traj: TrajectoryConfig,
        surrogate: Option<&'a ConformalSfo>,
        config: PlannerConfig,
    ) -> Result<Self> {
        if config.n_s == 0 || config.n_starts == 0 {
            return Err(Error::InvalidArgument("n_s and n_starts must be positive".into()));
        }
        if !(config.time_budget > 0.0) {
            return Err(Error::InvalidArgument("time budget must be positive".into()));
        }
        if config.mode == PlanMode::ConformalizedNeural && surrogate.is_none() {
            return Err(Error::InvalidArgument("neural mode needs a calibrated surrogate".into()));
        }
        Ok(Self {
            model,
            obstacles,
            traj,
            surrogate,
            config,
        })
    }

    /// Constraint set of the braking family from `(q0, qd0)`.
    pub fn constraints(&self, q0: &[f64], qd0: &[f64]) -> Result<ConstraintSet<'a>> {
        let fam = self.traj.family(q0.to_vec(), qd0.to_vec())?;
        let part = self.traj.partition()?;
        match self.config.mode {
            PlanMode::ExactSfo => ConstraintSet::exact(self.model, fam, &part, self.obstacles, &self.config),
            PlanMode::ConformalizedNeural => ConstraintSet::neural(
                self.model,
                fam,
                &part,
                self.obstacles,
                self.surrogate.expect("checked in PlanProblem::new"),
                &self.config,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlanStatus {
    Feasible(Vec<f64>),
    Infeasible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanResult {
    pub status: PlanStatus,
    pub iterations: usize,
    pub constraint_evals: usize,
    /// Seconds, including constraint construction.
    pub wall_time: f64,
    pub certified: bool,
    pub cost: f64,
    pub n_constraints: usize,
    pub n_prefiltered: usize,
    /// Mean seconds per constraint evaluation with gradients.
    pub mean_eval_time: f64,
}

impl PlanResult {
    pub fn k(&self) -> Option<&[f64]> {
        match &self.status {
            PlanStatus::Feasible(k) => Some(k),
            PlanStatus::Infeasible => None,
        }
    }
}

/// Squared distance of the braked endpoint to a waypoint.
pub fn waypoint_cost(fam: &TrajectoryFamily, waypoint: &[f64], k: &[f64]) -> (f64, Vec<f64>) {
    let (q, dq) = fam.end_position(k);
    let mut cost = 0.0;
    let grad = (0..q.len())
        .map(|j| {
            let e = q[j] - waypoint[j];
            cost += e * e;
            2.0 * e * dq[j]
        })
        .collect();
    (cost, grad)
}

/// Parameter whose braked endpoint is the waypoint, clamped to the box.
pub fn straight_line_start(fam: &TrajectoryFamily, waypoint: &[f64]) -> Vec<f64> {
    let zero = vec![0.0; fam.n_q()];
    let (q_zero, dq) = fam.end_position(&zero);
    (0..fam.n_q())
        .map(|j| ((waypoint[j] - q_zero[j]) / dq[j]).clamp(-1.0, 1.0))
        .collect()
}

struct PlanNlp<'s, 'a> {
    set: &'s ConstraintSet<'a>,
    waypoint: &'s [f64],
    eval_time: std::sync::Mutex<(Duration, usize)>,
}

impl Nlp for PlanNlp<'_, '_> {
    fn dim(&self) -> usize {
        self.set.n_q()
    }

    fn cost(&self, k: &[f64]) -> (f64, Vec<f64>) {
        waypoint_cost(self.set.family(), self.waypoint, k)
    }

    fn constraints(&self, k: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let start = Instant::now();
        let out = match self.set.eval(k, true) {
            Ok(ConstraintEval {
                values,
                jacobian: Some(j),
            }) => (values, j),
            _ => {
                let m = self.set.len();
                (vec![f64::INFINITY; m], DMatrix::zeros(m, self.set.n_q()))
            }
        };
        let mut t = self.eval_time.lock().expect("timer lock");
        t.0 += start.elapsed();
        t.1 += 1;
        out
    }
}

/// Solve one planning iteration from `(q0, qd0)` toward `waypoint`.
///
/// `stream` selects the random-start stream so that repeated solves within an
/// episode draw independent starts.
pub fn solve(prob: &PlanProblem, q0: &[f64], qd0: &[f64], waypoint: &[f64], stream: u64) -> Result<PlanResult> {
    let start = Instant::now();
    let n_q = prob.model.n_q();
    for v in [q0.len(), qd0.len(), waypoint.len()] {
        if v != n_q {
            return Err(Error::DimensionMismatch { expected: n_q, got: v });
        }
    }
    let cfg = &prob.config;
    let deadline = start + Duration::from_secs_f64(cfg.time_budget);
    let set = prob.constraints(q0, qd0)?;
    let nlp = PlanNlp {
        set: &set,
        waypoint,
        eval_time: std::sync::Mutex::new((Duration::ZERO, 0)),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let mut starts = vec![straight_line_start(set.family(), waypoint), vec![0.0; n_q]];
    while starts.len() < cfg.n_starts {
        starts.push((0..n_q).map(|_| rng.gen_range(-1.0..=1.0)).collect());
    }
    starts.truncate(cfg.n_starts);

    let opts = SolverOptions {
        slack: cfg.solve_slack,
        max_outer: cfg.max_outer,
        max_inner: cfg.max_inner,
        ..SolverOptions::default()
    };
    let traces: Vec<SolveTrace> = starts
        .par_iter()
        .map(|k0| solve_from(&nlp, k0, &opts, deadline))
        .collect();

    let iterations = traces.iter().map(|t| t.iterations).sum();
    let mut constraint_evals: usize = traces.iter().map(|t| t.evaluations).sum();
    let mut candidates: Vec<(Vec<f64>, f64)> = traces.into_iter().filter_map(|t| t.best_feasible).collect();
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1));

    let mut status = PlanStatus::Infeasible;
    let mut cost = f64::INFINITY;
    for (k, c) in candidates {
        constraint_evals += 1;
        let verified = set.eval_all(&k)?;
        if verified.values.iter().all(|v| *v <= -cfg.verify_tol) {
            status = PlanStatus::Feasible(k);
            cost = c;
            break;
        }
    }
    let (eval_time, n_evals) = *nlp.eval_time.lock().expect("timer lock");
    Ok(PlanResult {
        certified: matches!(status, PlanStatus::Feasible(_)),
        status,
        iterations,
        constraint_evals,
        wall_time: start.elapsed().as_secs_f64(),
        cost,
        n_constraints: set.len(),
        n_prefiltered: set.n_prefiltered(),
        mean_eval_time: if n_evals > 0 {
            eval_time.as_secs_f64() / n_evals as f64
        } else {
            0.0
        },
    })
}
