use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reachguard::conformal::{CalibrationResult, ConformalSfo, DEFAULT_RHO};
use reachguard::harness::{coverage_stats, gen_scenario, run_benchmark, thread_count, BenchConfig};
use reachguard::kinematics::RobotModel;
use reachguard::neural::{gen_dataset, read_dataset, write_dataset, NeuralSfo, SurrogateConfig, TimeEncoding, TrainConfig};
use reachguard::planner::{plan_episode, PlanMode, PlanProblem, PlannerConfig};
use reachguard::relu::compile_sdf_net;
use reachguard::trajectory::TrajectoryConfig;
use reachguard::verify::{overapproximation_chain, ChainConfig};
use reachguard::zonotope::Zonotope;

const CALIBRATION_FILE: &str = "calibration.json";

#[derive(Parser)]
#[command(name = "reachguard", version, about = "Reachability-based safe receding-horizon planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Neural,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<PlanMode> {
        match self {
            Self::Exact => vec![PlanMode::ExactSfo],
            Self::Neural => vec![PlanMode::ConformalizedNeural],
            Self::Both => vec![PlanMode::ExactSfo, PlanMode::ConformalizedNeural],
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Scalar,
    Onehot,
}

#[derive(Subcommand)]
enum Command {
    /// Sample exact joint-occupancy targets for surrogate training.
    GenData {
        #[arg(long, default_value = "spatial3")]
        robot: String,
        #[arg(long, default_value_t = 20_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = EncodingArg::Scalar)]
        encoding: EncodingArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the center, radius and gradient networks.
    Train {
        #[arg(long, default_value = "spatial3")]
        robot: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 80)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_grad_net: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute conformal buffers on a held-out calibration set.
    Calibrate {
        #[arg(long)]
        surrogate: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        eps_hat: f64,
        #[arg(long, default_value_t = DEFAULT_RHO)]
        rho: f64,
        /// Defaults to `<surrogate>/calibration.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan one episode in a random scene and write its log.
    Plan {
        #[command(flatten)]
        common: PlanArgs,
        /// Scene index within the seed's stream.
        #[arg(long, default_value_t = 0)]
        scene: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the random-obstacle benchmark and write JSON, CSV and SVG reports.
    Bench {
        #[command(flatten)]
        common: PlanArgs,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Held-out samples for coverage statistics (neural mode).
        #[arg(long)]
        test_data: Option<PathBuf>,
        /// Benchmark configuration JSON; explicit flags still apply on top.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compile a planar signed-distance function into a ReLU network.
    CompileRelu {
        /// JSON list of 2D obstacles `{center, generators}`; random polygons otherwise.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Number of random square obstacles when no scene is given.
        #[arg(long, default_value_t = 2)]
        obstacles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Half-width of the square ego set whose center is queried.
        #[arg(long, default_value_t = 0.0)]
        ego_half_width: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo check of the reachable-set enclosure chain.
    Verify {
        #[arg(long, default_value = "spatial3")]
        robot: String,
        #[arg(long, default_value_t = 10)]
        states: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 5)]
        n_s: usize,
        #[arg(long, default_value_t = 3)]
        trig_order: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct PlanArgs {
    #[arg(long, default_value = "spatial3")]
    robot: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    mode: ModeArg,
    #[arg(long, default_value_t = 10)]
    obstacles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    eps_hat: Option<f64>,
    #[arg(long)]
    n_s: Option<usize>,
    #[arg(long)]
    time_budget: Option<f64>,
    #[arg(long, default_value_t = 150)]
    max_iters: usize,
    /// Trained surrogate directory (neural mode).
    #[arg(long)]
    surrogate: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

impl PlanArgs {
    fn planner(&self, base: PlannerConfig) -> PlannerConfig {
        PlannerConfig {
            n_s: self.n_s.unwrap_or(base.n_s),
            time_budget: self.time_budget.unwrap_or(base.time_budget),
            seed: self.seed,
            ..base
        }
    }
}

fn load_samples(path: &Path) -> Result<Vec<reachguard::neural::SfoSample>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_dataset(BufReader::new(f))?.0)
}

/// Load a trained surrogate with the calibration stored beside it.
fn load_surrogate(dir: &Path, eps_hat: Option<f64>) -> Result<ConformalSfo> {
    let sfo = NeuralSfo::load(dir)?;
    let cal_path = dir.join(CALIBRATION_FILE);
    let calibration = CalibrationResult::from_json(
        &std::fs::read_to_string(&cal_path).with_context(|| format!("reading {}", cal_path.display()))?,
    )?;
    if let Some(e) = eps_hat {
        if e != calibration.epsilon_hat {
            bail!("surrogate is calibrated at eps_hat = {}; run `calibrate` for {e}", calibration.epsilon_hat);
        }
    }
    Ok(ConformalSfo::new(sfo, calibration)?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = thread_count(None) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    let traj = TrajectoryConfig::default();
    match cli.command {
        Command::GenData {
            robot,
            n,
            seed,
            encoding,
            out,
        } => {
            let model = RobotModel::load(&robot)?;
            let enc = match encoding {
                EncodingArg::Scalar => TimeEncoding::Scalar,
                EncodingArg::Onehot => TimeEncoding::OneHot,
            };
            let data = gen_dataset(&model, &traj, enc, n, seed)?;
            write_dataset(&data, seed, BufWriter::new(File::create(&out)?))?;
            println!("wrote {n} samples to {}", out.display());
        }
        Command::Train {
            robot,
            data,
            val,
            width,
            epochs,
            lr,
            seed,
            no_grad_net,
            out,
        } => {
            let model = RobotModel::load(&robot)?;
            let train = load_samples(&data)?;
            let val = val.as_deref().map(load_samples).transpose()?;
            let encoding = if train.first().map_or(0, |s| s.x.len()) == 3 * model.n_q() + 1 {
                TimeEncoding::Scalar
            } else {
                TimeEncoding::OneHot
            };
            let cfg = SurrogateConfig {
                width,
                encoding,
                train_grad_net: !no_grad_net,
                train: TrainConfig {
                    epochs,
                    lr,
                    seed,
                    ..TrainConfig::default()
                },
                ..SurrogateConfig::default()
            };
            let mut sfo = NeuralSfo::new(&model, &traj, &cfg)?;
            let report = sfo.fit(&train, val.as_deref(), &cfg.train)?;
            sfo.save(&out)?;
            std::fs::write(out.join("training.json"), serde_json::to_string_pretty(&report)?)?;
            for (name, stats) in [("center", &report.center), ("radius", &report.radius), ("grad", &report.grad)] {
                if let Some(last) = stats.last() {
                    println!("{name}: train mse {:.3e}, val mse {:?}", last.train_mse, last.val_mse);
                }
            }
        }
        Command::Calibrate {
            surrogate,
            data,
            eps_hat,
            rho,
            out,
        } => {
            let sfo = NeuralSfo::load(&surrogate)?;
            let csfo = ConformalSfo::calibrate(sfo, &load_samples(&data)?, eps_hat, rho)?;
            let out = out.unwrap_or_else(|| surrogate.join(CALIBRATION_FILE));
            std::fs::write(&out, csfo.calibration.to_json()?)?;
            let c = &csfo.calibration;
            println!(
                "delta per joint {:?}, beta coverage {:.6}, composed guarantee {:.6}",
                c.delta_per_joint,
                c.beta_coverage,
                c.guarantee()
            );
        }
        Command::Plan { common, scene, out } => {
            let model = RobotModel::load(&common.robot)?;
            let scenario = gen_scenario(&model, common.obstacles, common.seed, scene)?;
            let obstacles = scenario.obstacles()?;
            let mode = match common.mode {
                ModeArg::Neural => PlanMode::ConformalizedNeural,
                ModeArg::Exact => PlanMode::ExactSfo,
                ModeArg::Both => bail!("plan runs a single mode"),
            };
            let surrogate = match mode {
                PlanMode::ConformalizedNeural => Some(load_surrogate(
                    common.surrogate.as_deref().context("neural mode needs --surrogate")?,
                    common.eps_hat,
                )?),
                PlanMode::ExactSfo => None,
            };
            let cfg = PlannerConfig {
                mode,
                ..common.planner(PlannerConfig::default())
            };
            let prob = PlanProblem::new(&model, &obstacles, traj, surrogate.as_ref(), cfg)?;
            let log = plan_episode(&prob, &scenario.q_start, &scenario.q_goal, common.max_iters)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("scenario.json"), serde_json::to_string_pretty(&scenario)?)?;
            std::fs::write(out.join("episode.json"), log.to_json()?)?;
            std::fs::write(
                out.join("scene.svg"),
                reachguard::harness::svg::scene_snapshot(&model, &scenario, Some(&log)),
            )?;
            println!("{:?} after {} iterations", log.termination, log.iterations.len());
        }
        Command::Bench {
            common,
            trials,
            test_data,
            config,
            out,
        } => {
            let mut bench = match &config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None => BenchConfig::default(),
            };
            bench.robot = common.robot.clone();
            bench.modes = common.mode.modes();
            bench.n_obstacles = common.obstacles;
            bench.trials = trials;
            bench.seed = common.seed;
            bench.max_iters = common.max_iters;
            bench.threads = common.threads.or(bench.threads);
            bench.planner = common.planner(bench.planner);
            let needs_surrogate = bench.modes.contains(&PlanMode::ConformalizedNeural);
            let surrogate = if needs_surrogate {
                Some(load_surrogate(
                    common.surrogate.as_deref().context("neural mode needs --surrogate")?,
                    common.eps_hat,
                )?)
            } else {
                None
            };
            let (mut report, scenes, logs) = run_benchmark(&bench, surrogate.as_ref())?;
            if let (Some(csfo), Some(path)) = (&surrogate, &test_data) {
                report.coverage = Some(coverage_stats(csfo, &load_samples(path)?)?);
            }
            let model = RobotModel::load(&bench.robot)?;
            report.write(&out, &model, &scenes, &logs)?;
            for m in &report.modes {
                println!(
                    "{:?}: {} trials, {} success, {} collision, {} stuck, plan time {:.3}s ± {:.3}s",
                    m.mode, m.trials, m.success, m.collision, m.stuck, m.plan_time.mean, m.plan_time.std
                );
            }
        }
        Command::CompileRelu {
            scene,
            obstacles,
            seed,
            ego_half_width,
            out,
        } => {
            let obs: Vec<Zonotope> = match scene {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    (0..obstacles)
                        .map(|_| {
                            let c = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                            let h = rng.gen_range(0.1..0.5);
                            Zonotope::axis_box(&c, &[h, h])
                        })
                        .collect::<reachguard::Result<_>>()?
                }
            };
            let ego = if ego_half_width > 0.0 {
                DMatrix::from_diagonal_element(2, 2, ego_half_width)
            } else {
                DMatrix::zeros(2, 0)
            };
            let net = compile_sdf_net(&obs, &ego)?;
            std::fs::write(&out, net.to_json()?)?;
            println!(
                "{} segments, relu width {}, relu depth {}",
                net.segment_count, net.relu_width, net.relu_depth
            );
        }
        Command::Verify {
            robot,
            states,
            samples,
            n_s,
            trig_order,
            seed,
        } => {
            let model = RobotModel::load(&robot)?;
            let cfg = ChainConfig {
                n_states: states,
                samples_per_interval: samples,
                n_s,
                trig_order,
                seed,
                ..ChainConfig::default()
            };
            let rep = overapproximation_chain(&model, &traj, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
            if rep.total_violations() > 0 {
                bail!("{} enclosure violations", rep.total_violations());
            }
        }
    }
    Ok(())
}
