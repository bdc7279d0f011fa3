//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a hard gate fails. Soft gates are reported only.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};
use statrs::function::gamma::ln_gamma;

use reachguard::conformal::{beta_coverage, compose_guarantee, ConformalSfo, DEFAULT_RHO};
use reachguard::distance::{signed_distance_2d, signed_distance_point, Obstacle};
use reachguard::harness::{coverage_stats, gen_scenario, run_benchmark, BenchConfig};
use reachguard::kinematics::RobotModel;
use reachguard::neural::{
    gen_dataset, grad_check, grad_relative_errors, median, Activation, Mlp, NeuralSfo, SfoSample, SurrogateConfig,
    TimeEncoding, TrainConfig,
};
use reachguard::planner::{ConstraintSet, PlanMode, PlannerConfig};
use reachguard::relu::{compile_sdf_net, sdf_net_bounds};
use reachguard::trajectory::TrajectoryConfig;
use reachguard::verify::{overapproximation_chain, ChainConfig};
use reachguard::zonotope::Zonotope;

// Criterion 1
const CHAIN_TOL: f64 = 1e-9;
const CHAIN_STATES: usize = 10;
const CHAIN_SAMPLES: usize = 1000;
const CHAIN_N_T: usize = 40;
const CHAIN_BUDGET: Duration = Duration::from_secs(5 * 60);

// Criterion 2
const SDF_PAIRS: usize = 1000;
const SDF_TOL: f64 = 1e-6;
const SDF_PROPERTY_SAMPLES: usize = 10_000;
const LIPSCHITZ_SLACK: f64 = 1e-9;
const SIGN_MARGIN: f64 = 1e-6;

// Criterion 3
const RELU_QUERIES: usize = 10_000;
const RELU_TOL: f64 = 1e-9;

// Criterion 4
const EPS_HAT: f64 = 0.05;
const N_CAL: usize = 2500;
const N_TEST: usize = 2500;
const N_SPLITS: usize = 20;
const CI_LEVEL: f64 = 0.99;
const BETA_TOL: f64 = 1e-8;

// Criterion 5
const GUARANTEE_TOL: f64 = 1e-12;

// Criterion 6
const BENCH_TRIALS: usize = 50;
const BENCH_OBSTACLES: usize = 10;
const BENCH_SUCCESS_TARGET: f64 = 0.5;
const BENCH_BUDGET: Duration = Duration::from_secs(30 * 60);

// Criterion 7
const FD_STEP: f64 = 1e-6;
const FD_REL_TOL: f64 = 1e-4;
const FD_KINK: f64 = 1e-3;
/// Gradient rows below this norm in both the analytic and the difference
/// Jacobian are below central-difference rounding noise and are not compared.
const FD_GRAD_FLOOR: f64 = 1e-8;
const FD_STATES: usize = 8;
const MLP_GRAD_TOL: f64 = 1e-6;
const GRAD_NET_TARGET: f64 = 0.05;

// Desk surrogate
const TRAIN_SAMPLES: usize = 20_000;
const TRAIN_EPOCHS: usize = 80;
const TRAIN_LR: f64 = 1e-3;
const TRAIN_SEED: u64 = 11;
const POOL_SEED: u64 = 12;
const SPLIT_SEED: u64 = 13;

struct Outcome {
    hard_failures: usize,
}

impl Outcome {
    fn report(&mut self, id: &str, hard: bool, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        let gate = if hard { "hard" } else { "soft" };
        println!("[{tag}] {id} ({gate}) {detail}");
        if hard && !pass {
            self.hard_failures += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 1

fn chain(out: &mut Outcome) {
    let start = Instant::now();
    let traj = TrajectoryConfig {
        n_t: CHAIN_N_T,
        ..TrajectoryConfig::default()
    };
    let cfg = ChainConfig {
        n_states: CHAIN_STATES,
        samples_per_interval: CHAIN_SAMPLES,
        tol: CHAIN_TOL,
        ..ChainConfig::default()
    };
    let rep = overapproximation_chain(&RobotModel::spatial3(), &traj, &cfg).expect("chain");
    let elapsed = start.elapsed();
    for (name, link) in [
        ("trajectory", rep.trajectory),
        ("kinematics", rep.kinematics),
        ("joint occupancy", rep.joint_occupancy),
        ("forward occupancy", rep.forward_occupancy),
    ] {
        out.report(
            &format!("C1 {name} enclosure"),
            true,
            link.violations == 0,
            format!("{} violations / {} checks, worst excess {:.3e}, tol {CHAIN_TOL:e}", link.violations, link.checks, link.worst_excess),
        );
    }
    out.report(
        "C1 runtime",
        true,
        elapsed < CHAIN_BUDGET,
        format!("{:.1} s < {} s", elapsed.as_secs_f64(), CHAIN_BUDGET.as_secs()),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2

fn random_zonotope(rng: &mut ChaCha8Rng) -> Zonotope {
    loop {
        let m = rng.gen_range(3..=8);
        let c = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let g = DMatrix::from_fn(3, m, |_, _| rng.gen_range(-0.5..0.5));
        if let Ok(z) = Zonotope::new(c, g) {
            if Obstacle::new(z.clone()).is_ok() {
                return z;
            }
        }
    }
}

/// Penetration margin by enumerating facet normals from generator pairs:
/// `min_n h(n) − n·p`, positive inside.
fn facet_margin(z: &Zonotope, p: &Vector3<f64>) -> f64 {
    let g = z.generators();
    let c = Vector3::new(z.center()[0], z.center()[1], z.center()[2]);
    let cols: Vec<Vector3<f64>> = (0..g.ncols()).map(|j| Vector3::new(g[(0, j)], g[(1, j)], g[(2, j)])).collect();
    let mut best = f64::INFINITY;
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            let n = cols[i].cross(&cols[j]);
            if n.norm() < 1e-12 {
                continue;
            }
            let n = n.normalize();
            let h = n.dot(&c) + cols.iter().map(|v| n.dot(v).abs()).sum::<f64>();
            let lo = n.dot(&c) - cols.iter().map(|v| n.dot(v).abs()).sum::<f64>();
            best = best.min(h - n.dot(p)).min(n.dot(p) - lo);
        }
    }
    best
}

/// Euclidean distance from `p` to the zonotope by enumerating every free set
/// of at most three independent generators and every sign pattern of the rest.
fn projection_distance(z: &Zonotope, p: &Vector3<f64>) -> f64 {
    let g = z.generators();
    let m = g.ncols();
    let c = Vector3::new(z.center()[0], z.center()[1], z.center()[2]);
    let col = |j: usize| Vector3::new(g[(0, j)], g[(1, j)], g[(2, j)]);
    let mut best = f64::INFINITY;
    for free_mask in 0u32..(1 << m) {
        let free: Vec<usize> = (0..m).filter(|j| free_mask & (1 << j) != 0).collect();
        if free.len() > 3 {
            continue;
        }
        let fixed: Vec<usize> = (0..m).filter(|j| free_mask & (1 << j) == 0).collect();
        let a = DMatrix::from_fn(3, free.len(), |r, k| col(free[k])[r]);
        let gram = a.transpose() * &a;
        if !free.is_empty() && gram.determinant().abs() < 1e-14 {
            continue;
        }
        for signs in 0u32..(1 << fixed.len()) {
            let mut base = c;
            for (k, &j) in fixed.iter().enumerate() {
                let s = if signs & (1 << k) != 0 { 1.0 } else { -1.0 };
                base += s * col(j);
            }
            let r = p - base;
            let point = if free.is_empty() {
                base
            } else {
                let rhs = a.transpose() * DVector::from_column_slice(r.as_slice());
                let beta = gram.clone().lu().solve(&rhs).expect("independent generators");
                if beta.iter().any(|b| b.abs() > 1.0 + 1e-12) {
                    continue;
                }
                let mut x = base;
                for (k, &j) in free.iter().enumerate() {
                    x += beta[k] * col(j);
                }
                x
            };
            best = best.min((p - point).norm());
        }
    }
    best
}

fn oracle_signed_distance(z: &Zonotope, p: &Vector3<f64>) -> f64 {
    let margin = facet_margin(z, p);
    if margin >= 0.0 {
        -margin
    } else {
        projection_distance(z, p)
    }
}

fn sdf(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    let mut inside = 0;
    for _ in 0..SDF_PAIRS {
        let z = random_zonotope(&mut rng);
        let p = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
            + Vector3::new(z.center()[0], z.center()[1], z.center()[2]) * 0.5;
        let expected = oracle_signed_distance(&z, &p);
        let got = signed_distance_point(&z, &p).expect("sdf");
        inside += usize::from(expected < 0.0);
        worst = worst.max((got - expected).abs());
    }
    out.report(
        "C2 projection oracle",
        true,
        worst <= SDF_TOL,
        format!("max |error| {worst:.3e} <= {SDF_TOL:e} over {SDF_PAIRS} pairs ({inside} inside)"),
    );

    let zs: Vec<Zonotope> = (0..20).map(|_| random_zonotope(&mut rng)).collect();
    let mut lipschitz_worst = f64::NEG_INFINITY;
    let mut sign_errors = 0;
    for s in 0..SDF_PROPERTY_SAMPLES {
        let z = &zs[s % zs.len()];
        let c = Vector3::new(z.center()[0], z.center()[1], z.center()[2]);
        let p = c + Vector3::from_fn(|_, _| rng.gen_range(-1.5..1.5));
        let q = p + Vector3::from_fn(|_, _| rng.gen_range(-0.3..0.3));
        let (dp, dq) = (signed_distance_point(z, &p).unwrap(), signed_distance_point(z, &q).unwrap());
        lipschitz_worst = lipschitz_worst.max((dp - dq).abs() - (p - q).norm());
        let margin = facet_margin(z, &p);
        if (margin > SIGN_MARGIN && dp >= 0.0) || (margin < -SIGN_MARGIN && dp <= 0.0) {
            sign_errors += 1;
        }
    }
    out.report(
        "C2 1-Lipschitz",
        true,
        lipschitz_worst <= LIPSCHITZ_SLACK,
        format!("max |d(p)-d(q)| - |p-q| = {lipschitz_worst:.3e} <= {LIPSCHITZ_SLACK:e} over {SDF_PROPERTY_SAMPLES} pairs"),
    );
    out.report(
        "C2 sign",
        true,
        sign_errors == 0,
        format!("{sign_errors} sign errors over {SDF_PROPERTY_SAMPLES} samples (margin {SIGN_MARGIN:e})"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3

fn box2(cx: f64, cy: f64, hx: f64, hy: f64) -> Zonotope {
    Zonotope::axis_box(&[cx, cy], &[hx, hy]).unwrap()
}

fn relu(out: &mut Outcome) {
    let none = DMatrix::zeros(2, 0);
    let slanted = DMatrix::from_column_slice(2, 1, &[0.05, 0.03]);
    let scenes: Vec<(usize, Vec<Zonotope>, DMatrix<f64>)> = vec![
        (4, vec![box2(0.0, 0.0, 0.3, 0.2)], none.clone()),
        (8, vec![box2(-0.5, 0.0, 0.2, 0.2), box2(0.6, 0.4, 0.1, 0.3)], none),
        (
            24,
            vec![
                box2(-0.6, -0.6, 0.2, 0.1),
                box2(0.6, -0.5, 0.1, 0.2),
                box2(-0.5, 0.6, 0.15, 0.15),
                box2(0.4, 0.5, 0.25, 0.1),
            ],
            slanted,
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for (n_seg, obstacles, ego) in scenes {
        let net = compile_sdf_net(&obstacles, &ego).expect("compile");
        let mut worst: f64 = 0.0;
        for _ in 0..RELU_QUERIES {
            let c = [rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)];
            let ego_z = Zonotope::new(DVector::from_column_slice(&c), ego.clone()).unwrap();
            let expected = signed_distance_2d(&ego_z, &obstacles).unwrap();
            worst = worst.max((net.eval(&c).unwrap() - expected).abs());
        }
        let (w_bound, d_bound) = sdf_net_bounds(net.segment_count);
        out.report(
            &format!("C3 relu sdf N={n_seg}"),
            true,
            net.segment_count == n_seg && worst <= RELU_TOL,
            format!("segments {}, max |error| {worst:.3e} <= {RELU_TOL:e} over {RELU_QUERIES} queries", net.segment_count),
        );
        out.report(
            &format!("C3 relu size N={n_seg}"),
            true,
            net.relu_width <= w_bound && net.relu_depth <= d_bound,
            format!("width {} <= {w_bound}, depth {} <= {d_bound}", net.relu_width, net.relu_depth),
        );
    }
}

// ---------------------------------------------------------------------------
// Desk surrogate shared by criteria 4 to 7

struct Desk {
    model: RobotModel,
    traj: TrajectoryConfig,
    sfo: NeuralSfo,
    pool: Vec<SfoSample>,
}

fn train_desk() -> Desk {
    let model = RobotModel::spatial3();
    let traj = TrajectoryConfig::default();
    let start = Instant::now();
    let train = gen_dataset(&model, &traj, TimeEncoding::Scalar, TRAIN_SAMPLES, TRAIN_SEED).expect("train set");
    let pool = gen_dataset(&model, &traj, TimeEncoding::Scalar, N_CAL + N_TEST, POOL_SEED).expect("pool");
    let cfg = SurrogateConfig {
        encoding: TimeEncoding::Scalar,
        train: TrainConfig {
            epochs: TRAIN_EPOCHS,
            lr: TRAIN_LR,
            seed: TRAIN_SEED,
            ..TrainConfig::default()
        },
        ..SurrogateConfig::default()
    };
    let mut sfo = NeuralSfo::new(&model, &traj, &cfg).expect("surrogate");
    sfo.fit(&train, None, &cfg.train).expect("training");
    println!(
        "desk surrogate: {TRAIN_SAMPLES} samples, {TRAIN_EPOCHS} epochs, width {} ({:.0} s)",
        cfg.width,
        start.elapsed().as_secs_f64()
    );
    Desk { model, traj, sfo, pool }
}

fn split(pool: &[SfoSample], s: usize) -> (Vec<SfoSample>, Vec<SfoSample>) {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SPLIT_SEED);
    rng.set_stream(s as u64);
    idx.shuffle(&mut rng);
    let cal = idx[..N_CAL].iter().map(|&i| pool[i].clone()).collect();
    let test = idx[N_CAL..N_CAL + N_TEST].iter().map(|&i| pool[i].clone()).collect();
    (cal, test)
}

/// Smallest count `x` with `P(X <= x) >= alpha` for `X ~ Binomial(n, p)`.
fn binomial_quantile(n: u64, p: f64, alpha: f64) -> u64 {
    let b = Binomial::new(p, n).unwrap();
    let (mut lo, mut hi) = (0u64, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if b.cdf(mid) >= alpha {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// CDF of `Beta(a, b)` at `x` by composite Simpson quadrature of the log-density.
fn simpson_beta_cdf(a: f64, b: f64, x: f64) -> f64 {
    let ln_norm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    let pdf = |t: f64| {
        if t <= 0.0 || t >= 1.0 {
            0.0
        } else {
            (ln_norm + (a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln()).exp()
        }
    };
    let mean = a / (a + b);
    let sd = (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt();
    let lo = (mean - 60.0 * sd).max(0.0);
    if x <= lo {
        return 0.0;
    }
    let n = 200_000;
    let h = (x - lo) / n as f64;
    let mut s = pdf(lo) + pdf(x);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(lo + i as f64 * h);
    }
    s * h / 3.0
}

fn oracle_beta_quantile(a: f64, b: f64, rho: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if simpson_beta_cdf(a, b, mid) < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn coverage_and_guarantee(desk: &Desk, out: &mut Outcome) -> ConformalSfo {
    let n_q = desk.model.n_q();
    let mut covered = vec![0u64; n_q];
    let mut split_min = vec![f64::INFINITY; n_q];
    let mut joint_worst_margin = f64::INFINITY;
    let mut first = None;
    for s in 0..N_SPLITS {
        let (cal, test) = split(&desk.pool, s);
        let csfo = ConformalSfo::calibrate(desk.sfo.clone(), &cal, EPS_HAT, DEFAULT_RHO).expect("calibrate");
        let stats = coverage_stats(&csfo, &test).expect("coverage");
        for j in 0..n_q {
            covered[j] += (stats.empirical_per_joint[j] * N_TEST as f64).round() as u64;
            split_min[j] = split_min[j].min(stats.empirical_per_joint[j]);
        }
        joint_worst_margin = joint_worst_margin.min(stats.joint_enclosure_frequency - stats.guarantee);
        if s == 0 {
            println!(
                "split 0: delta {:?}, beta coverage {:.4}, composed bound {:.4}, joint enclosure {:.4}",
                stats.delta_per_joint, stats.beta_coverage, stats.guarantee, stats.joint_enclosure_frequency
            );
            first = Some(csfo);
        }
    }
    let n_pooled = (N_SPLITS * N_TEST) as u64;
    let threshold = binomial_quantile(n_pooled, 1.0 - EPS_HAT, (1.0 - CI_LEVEL) / 2.0);
    for j in 0..n_q {
        let rate = covered[j] as f64 / n_pooled as f64;
        out.report(
            &format!("C4 coverage joint {}", j + 1),
            true,
            covered[j] >= threshold,
            format!(
                "pooled {rate:.4} >= {:.4} (99% binomial lower bound at 1-eps_hat={}, n={n_pooled}); min over {N_SPLITS} splits {:.4}",
                threshold as f64 / n_pooled as f64,
                1.0 - EPS_HAT,
                split_min[j]
            ),
        );
    }

    let beta = beta_coverage(N_CAL, EPS_HAT, DEFAULT_RHO).unwrap();
    let nu = ((N_CAL as f64 + 1.0) * EPS_HAT).floor();
    let oracle = oracle_beta_quantile(N_CAL as f64 + 1.0 - nu, nu, DEFAULT_RHO);
    out.report(
        "C4 beta coverage",
        true,
        (beta - oracle).abs() <= BETA_TOL,
        format!("{beta:.10} vs quadrature {oracle:.10}, |diff| {:.3e} <= {BETA_TOL:e}", (beta - oracle).abs()),
    );

    let composed = compose_guarantee(0.001, 7);
    let expected = 0.999f64.powi(8);
    out.report(
        "C5 compose guarantee",
        true,
        (composed - expected).abs() <= GUARANTEE_TOL,
        format!("{composed:.15} vs 0.999^8 = {expected:.15}, tol {GUARANTEE_TOL:e}"),
    );
    out.report(
        "C5 joint enclosure",
        true,
        joint_worst_margin >= 0.0,
        format!("min over {N_SPLITS} splits of (joint enclosure frequency - composed bound) = {joint_worst_margin:.4} >= 0"),
    );
    first.expect("at least one split")
}

// ---------------------------------------------------------------------------
// Criterion 6

fn benchmark(csfo: &ConformalSfo, out: &mut Outcome) {
    let start = Instant::now();
    let cfg = BenchConfig {
        robot: "spatial3".into(),
        modes: vec![PlanMode::ExactSfo, PlanMode::ConformalizedNeural],
        n_obstacles: BENCH_OBSTACLES,
        trials: BENCH_TRIALS,
        ..BenchConfig::default()
    };
    let (report, _, _) = run_benchmark(&cfg, Some(csfo)).expect("benchmark");
    let elapsed = start.elapsed();
    for m in &report.modes {
        out.report(
            &format!("C6 {:?} collisions", m.mode),
            true,
            m.collision == 0,
            format!(
                "{} collisions; {} success, {} stuck of {} trials; plan time mean {:.3} s",
                m.collision, m.success, m.stuck, m.trials, m.plan_time.mean
            ),
        );
    }
    let exact = report.modes.iter().find(|m| m.mode == PlanMode::ExactSfo).unwrap();
    out.report(
        "C6 exact success rate",
        false,
        exact.success_rate() > BENCH_SUCCESS_TARGET,
        format!("{:.2} > {BENCH_SUCCESS_TARGET}", exact.success_rate()),
    );
    out.report(
        "C6 runtime",
        true,
        elapsed < BENCH_BUDGET,
        format!("{:.0} s < {} s", elapsed.as_secs_f64(), BENCH_BUDGET.as_secs()),
    );
}

// ---------------------------------------------------------------------------
// Criterion 7

/// Worst relative row error between analytic and central-difference
/// constraint Jacobians, skipping rows whose one-sided slopes disagree.
fn constraint_fd_error(set: &ConstraintSet, k: &[f64]) -> (f64, usize, usize) {
    let eval = set.eval(k, true).unwrap();
    let jac = eval.jacobian.unwrap();
    let n = k.len();
    let rows = eval.values.len();
    let mut fd = DMatrix::zeros(rows, n);
    let mut kink = vec![false; rows];
    for j in 0..n {
        let mut kp = k.to_vec();
        let mut km = k.to_vec();
        kp[j] += FD_STEP;
        km[j] -= FD_STEP;
        let vp = set.eval(&kp, false).unwrap().values;
        let vm = set.eval(&km, false).unwrap().values;
        for r in 0..rows {
            let fwd = (vp[r] - eval.values[r]) / FD_STEP;
            let bwd = (eval.values[r] - vm[r]) / FD_STEP;
            kink[r] |= (fwd - bwd).abs() > FD_KINK;
            fd[(r, j)] = (vp[r] - vm[r]) / (2.0 * FD_STEP);
        }
    }
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for r in 0..rows {
        if kink[r] {
            continue;
        }
        let f = fd.row(r);
        let a = jac.row(r);
        let scale = f.norm().max(a.norm());
        if scale < FD_GRAD_FLOOR {
            continue;
        }
        checked += 1;
        worst = worst.max((a - f).norm() / scale);
    }
    (worst, checked, rows)
}

fn gradients(desk: &Desk, csfo: &ConformalSfo, out: &mut Outcome) {
    let part = desk.traj.partition().unwrap();
    let scene = gen_scenario(&desk.model, BENCH_OBSTACLES, 0, 0).unwrap();
    let obstacles = scene.obstacles().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for (label, mode) in [("exact", PlanMode::ExactSfo), ("neural", PlanMode::ConformalizedNeural)] {
        let cfg = PlannerConfig {
            mode,
            use_grad_net: false,
            ..PlannerConfig::default()
        };
        let (mut worst, mut checked, mut total) = (0.0f64, 0, 0);
        for _ in 0..FD_STATES {
            let q0: Vec<f64> = desk.model.joints.iter().map(|j| rng.gen_range(0.8 * j.q_lim.lo..0.8 * j.q_lim.hi)).collect();
            let qd0: Vec<f64> = desk.model.joints.iter().map(|j| rng.gen_range(0.5 * j.qd_lim.lo..0.5 * j.qd_lim.hi)).collect();
            let k: Vec<f64> = (0..desk.model.n_q()).map(|_| rng.gen_range(-0.9..0.9)).collect();
            let fam = desk.traj.family(q0, qd0).unwrap();
            let set = match mode {
                PlanMode::ExactSfo => ConstraintSet::exact(&desk.model, fam, &part, &obstacles, &cfg),
                PlanMode::ConformalizedNeural => ConstraintSet::neural(&desk.model, fam, &part, &obstacles, csfo, &cfg),
            }
            .unwrap();
            let (w, c, t) = constraint_fd_error(&set, &k);
            worst = worst.max(w);
            checked += c;
            total += t;
        }
        out.report(
            &format!("C7 {label} constraint gradients"),
            true,
            worst <= FD_REL_TOL && checked > total / 2,
            format!("max relative error {worst:.3e} <= {FD_REL_TOL:e} over {checked} smooth rows of {total}"),
        );
    }

    let mut worst: f64 = 0.0;
    for (i, act) in [Activation::Gelu, Activation::Relu].into_iter().enumerate() {
        let mut r = ChaCha8Rng::seed_from_u64(80 + i as u64);
        let net = Mlp::new(&[10, 24, 24, 6], act, &mut r).unwrap();
        worst = worst.max(grad_check(&net, &mut r));
    }
    out.report(
        "C7 mlp grad_check",
        true,
        worst <= MLP_GRAD_TOL,
        format!("max relative error {worst:.3e} <= {MLP_GRAD_TOL:e} (random GELU and ReLU nets)"),
    );
    let mut trained: f64 = 0.0;
    for net in [&desk.sfo.center_net, &desk.sfo.radius_net] {
        trained = trained.max(grad_check(net, &mut rng));
    }
    out.report(
        "C7 mlp grad_check trained desk nets",
        false,
        trained <= MLP_GRAD_TOL,
        format!("max relative error {trained:.3e} <= {MLP_GRAD_TOL:e} (width 128 center and radius nets)"),
    );

    let mut errs = grad_relative_errors(&desk.sfo, &desk.pool).unwrap();
    let med = median(&mut errs);
    out.report(
        "C7 gradient net median error",
        false,
        med < GRAD_NET_TARGET,
        format!("{:.2}% < {:.0}% over {} joint Jacobians", 100.0 * med, 100.0 * GRAD_NET_TARGET, errs.len()),
    );
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let start = Instant::now();
    let mut out = Outcome { hard_failures: 0 };
    chain(&mut out);
    sdf(&mut out);
    relu(&mut out);
    let desk = train_desk();
    let csfo = coverage_and_guarantee(&desk, &mut out);
    gradients(&desk, &csfo, &mut out);
    benchmark(&csfo, &mut out);
    println!(
        "acceptance: {} hard failures ({:.0} s)",
        out.hard_failures,
        start.elapsed().as_secs_f64()
    );
    if out.hard_failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
