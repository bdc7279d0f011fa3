//! Batch evaluation over random scenes and the benchmark report.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{sample_truth, ConformalSfo, ScoreSummary};
use crate::error::{Error, Result};
use crate::kinematics::RobotModel;
use crate::neural::SfoSample;
use crate::planner::{plan_episode, EpisodeLog, PlanMode, PlanProblem, PlanStatus, PlannerConfig, Termination};
use crate::trajectory::TrajectoryConfig;

use super::ground_truth::ground_truth_collision;
use super::scenario::{gen_scenarios, Scenario};
use super::svg;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "schema,mode,trial,termination,success,collision,stuck,iterations,\
feasible_iterations,mean_plan_time,max_plan_time,mean_eval_time,mean_constraints,executed_time";
/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "REACHGUARD_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub robot: String,
    pub modes: Vec<PlanMode>,
    pub n_obstacles: usize,
    pub trials: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub traj: TrajectoryConfig,
    pub planner: PlannerConfig,
    pub threads: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            robot: "spatial3".into(),
            modes: vec![PlanMode::ExactSfo],
            n_obstacles: 10,
            trials: 50,
            seed: 0,
            max_iters: 150,
            traj: TrajectoryConfig::default(),
            planner: PlannerConfig::default(),
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn new(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            n: values.len(),
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub termination: Termination,
    pub success: bool,
    pub collision: bool,
    pub stuck: bool,
    pub iterations: usize,
    pub feasible_iterations: usize,
    pub mean_plan_time: f64,
    pub max_plan_time: f64,
    pub mean_eval_time: f64,
    pub mean_constraints: f64,
    pub executed_time: f64,
}

impl TrialOutcome {
    pub fn from_log(trial: u64, log: &EpisodeLog, collided: bool) -> Self {
        let times: Vec<f64> = log.iterations.iter().map(|i| i.wall_time).collect();
        let evals: Vec<f64> = log.iterations.iter().map(|i| i.mean_eval_time).collect();
        let cons: Vec<f64> = log.iterations.iter().map(|i| i.n_constraints as f64).collect();
        let collision = collided || log.termination == Termination::Collision;
        let success = !collision && log.termination == Termination::GoalReached;
        Self {
            trial,
            termination: log.termination,
            success,
            collision,
            stuck: !success && !collision,
            iterations: log.iterations.len(),
            feasible_iterations: log
                .iterations
                .iter()
                .filter(|i| matches!(i.status, PlanStatus::Feasible(_)))
                .count(),
            mean_plan_time: Stats::new(&times).mean,
            max_plan_time: Stats::new(&times).max,
            mean_eval_time: Stats::new(&evals).mean,
            mean_constraints: Stats::new(&cons).mean,
            executed_time: log.executed_time(),
        }
    }

    fn csv_row(&self, mode: PlanMode) -> String {
        format!(
            "{CSV_SCHEMA_VERSION},{},{},{:?},{},{},{},{},{},{:.6e},{:.6e},{:.6e},{:.1},{:.3}",
            mode_name(mode),
            self.trial,
            self.termination,
            self.success as u8,
            self.collision as u8,
            self.stuck as u8,
            self.iterations,
            self.feasible_iterations,
            self.mean_plan_time,
            self.max_plan_time,
            self.mean_eval_time,
            self.mean_constraints,
            self.executed_time
        )
    }
}

pub fn mode_name(mode: PlanMode) -> &'static str {
    match mode {
        PlanMode::ExactSfo => "exact",
        PlanMode::ConformalizedNeural => "neural",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: PlanMode,
    pub trials: usize,
    pub success: usize,
    pub collision: usize,
    pub stuck: usize,
    /// Per planning iteration, over all trials.
    pub plan_time: Stats,
    /// Per constraint evaluation with gradients, over all trials.
    pub eval_time: Stats,
    pub outcomes: Vec<TrialOutcome>,
}

impl ModeReport {
    pub fn from_outcomes(mode: PlanMode, outcomes: Vec<TrialOutcome>, plan_times: &[f64], eval_times: &[f64]) -> Self {
        Self {
            mode,
            trials: outcomes.len(),
            success: outcomes.iter().filter(|o| o.success).count(),
            collision: outcomes.iter().filter(|o| o.collision).count(),
            stuck: outcomes.iter().filter(|o| o.stuck).count(),
            plan_time: Stats::new(plan_times),
            eval_time: Stats::new(eval_times),
            outcomes,
        }
    }

    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.success as f64 / self.trials as f64
        }
    }
}

/// Held-out enclosure frequencies of a calibrated surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub epsilon_hat: f64,
    pub delta_per_joint: Vec<f64>,
    pub beta_coverage: f64,
    /// Composed bound `(1 − ε)^{n_q+1}`.
    pub guarantee: f64,
    pub n_test: usize,
    pub empirical_per_joint: Vec<f64>,
    /// Fraction of samples whose every conformalized sphere encloses the truth.
    pub joint_enclosure_frequency: f64,
    pub test_scores: Vec<ScoreSummary>,
}

pub fn coverage_stats(csfo: &ConformalSfo, test: &[SfoSample]) -> Result<CoverageStats> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let n_q = csfo.sfo.n_q();
    let per_sample: Vec<(Vec<bool>, Vec<f64>)> = test
        .par_iter()
        .map(|s| {
            let pred = csfo.sfo.predict_spheres(&s.x)?;
            let conf = csfo.spheres(&s.x)?;
            let truth = sample_truth(s);
            let inside = (1..=n_q).map(|j| conf[j].encloses(&truth[j], 0.0)).collect();
            let scores = (1..=n_q)
                .map(|j| crate::conformal::nonconformity(&truth[j], &pred[j]))
                .collect();
            Ok((inside, scores))
        })
        .collect::<Result<_>>()?;
    let n = test.len() as f64;
    let empirical_per_joint = (0..n_q)
        .map(|j| per_sample.iter().filter(|(i, _)| i[j]).count() as f64 / n)
        .collect();
    let joint = per_sample.iter().filter(|(i, _)| i.iter().all(|v| *v)).count() as f64 / n;
    let test_scores = (0..n_q)
        .map(|j| {
            let s: Vec<f64> = per_sample.iter().map(|(_, sc)| sc[j]).collect();
            ScoreSummary::new(&s, 20)
        })
        .collect();
    let cal = &csfo.calibration;
    Ok(CoverageStats {
        epsilon_hat: cal.epsilon_hat,
        delta_per_joint: cal.delta_per_joint.clone(),
        beta_coverage: cal.beta_coverage,
        guarantee: cal.guarantee(),
        n_test: test.len(),
        empirical_per_joint,
        joint_enclosure_frequency: joint,
        test_scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub config: BenchConfig,
    pub modes: Vec<ModeReport>,
    pub coverage: Option<CoverageStats>,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for m in &self.modes {
            for o in &m.outcomes {
                out.push_str(&o.csv_row(m.mode));
                out.push('\n');
            }
        }
        out
    }

    /// Copy with every wall-clock quantity zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for m in &mut r.modes {
            m.plan_time = Stats::default();
            m.eval_time = Stats::default();
            for o in &mut m.outcomes {
                o.mean_plan_time = 0.0;
                o.max_plan_time = 0.0;
                o.mean_eval_time = 0.0;
            }
        }
        r
    }

    /// Write `report.json`, `report.csv` and SVG plots into `dir`.
    pub fn write(&self, dir: &Path, model: &RobotModel, scenes: &[Scenario], logs: &[(PlanMode, Vec<EpisodeLog>)]) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        std::fs::write(dir.join("report.csv"), self.to_csv())?;
        if let Some(cov) = &self.coverage {
            for (j, s) in cov.test_scores.iter().enumerate() {
                let body = svg::score_histogram(s, cov.delta_per_joint[j], &format!("joint {} test scores", j + 1));
                std::fs::write(dir.join(format!("scores_joint{}.svg", j + 1)), body)?;
            }
        }
        for (mode, mode_logs) in logs {
            for (scene, log) in scenes.iter().zip(mode_logs).take(4) {
                let body = svg::scene_snapshot(model, scene, Some(log));
                std::fs::write(dir.join(format!("scene_{}_{}.svg", mode_name(*mode), scene.index)), body)?;
            }
        }
        Ok(())
    }
}

/// Worker count: the explicit setting, else the environment cap, else rayon's default.
pub fn thread_count(explicit: Option<usize>) -> Option<usize> {
    explicit
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
        .filter(|n| *n > 0)
}

/// Run every scene in every mode. Returns the report and the episode logs.
pub fn run_benchmark(
    config: &BenchConfig,
    surrogate: Option<&ConformalSfo>,
) -> Result<(BenchmarkReport, Vec<Scenario>, Vec<(PlanMode, Vec<EpisodeLog>)>)> {
    let model = RobotModel::load(&config.robot)?;
    let scenes = gen_scenarios(&model, config.n_obstacles, config.trials, config.seed)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(config.threads) {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let mut modes = Vec::new();
    let mut all_logs = Vec::new();
    for &mode in &config.modes {
        let planner = PlannerConfig { mode, ..config.planner };
        let runs: Vec<(TrialOutcome, EpisodeLog)> = pool.install(|| {
            scenes
                .par_iter()
                .map(|scene| {
                    let obstacles = scene.obstacles()?;
                    let prob = PlanProblem::new(&model, &obstacles, config.traj, surrogate, planner)?;
                    let log = plan_episode(&prob, &scene.q_start, &scene.q_goal, config.max_iters)?;
                    let collided = ground_truth_collision(&model, &log.segments, &obstacles)?;
                    Ok((TrialOutcome::from_log(scene.index, &log, collided), log))
                })
                .collect::<Result<_>>()
        })?;
        let plan_times: Vec<f64> = runs
            .iter()
            .flat_map(|(_, l)| l.iterations.iter().map(|i| i.wall_time))
            .collect();
        let eval_times: Vec<f64> = runs
            .iter()
            .flat_map(|(_, l)| l.iterations.iter().map(|i| i.mean_eval_time))
            .filter(|t| *t > 0.0)
            .collect();
        let (outcomes, logs): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
        modes.push(ModeReport::from_outcomes(mode, outcomes, &plan_times, &eval_times));
        all_logs.push((mode, logs));
    }
    let report = BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        modes,
        coverage: None,
    };
    Ok((report, scenes, all_logs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(trials: usize, n_obstacles: usize) -> BenchConfig {
        BenchConfig {
            trials,
            n_obstacles,
            seed: 3,
            max_iters: 40,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn zero_trials_give_an_empty_valid_report() {
        let (r, scenes, _) = run_benchmark(&small(0, 10), None).unwrap();
        assert!(scenes.is_empty());
        assert_eq!(r.modes[0].trials, 0);
        let back: BenchmarkReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.to_csv(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn obstacle_free_scenes_all_succeed() {
        let (r, _, _) = run_benchmark(&small(4, 0), None).unwrap();
        let m = &r.modes[0];
        assert_eq!(m.success, 4);
        assert_eq!(m.success + m.collision + m.stuck, m.trials);
    }

    #[test]
    fn identical_seed_identical_report() {
        let cfg = small(2, 4);
        let (a, _, _) = run_benchmark(&cfg, None).unwrap();
        let (b, _, _) = run_benchmark(&cfg, None).unwrap();
        assert_eq!(a.without_timings(), b.without_timings());
        let m = &a.modes[0];
        assert_eq!(m.success + m.collision + m.stuck, m.trials);
    }

    #[test]
    fn csv_rows_follow_header() {
        let (r, _, _) = run_benchmark(&small(2, 2), None).unwrap();
        let csv = r.to_csv();
        let cols = CSV_HEADER.split(',').count();
        for line in csv.lines() {
            assert_eq!(line.split(',').count(), cols);
        }
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn stats_of_known_values() {
        let s = Stats::new(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((s.n, s.mean, s.min, s.max), (4, 2.5, 1.0, 4.0));
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-15);
    }
}
