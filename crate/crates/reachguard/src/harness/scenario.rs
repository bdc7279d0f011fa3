//! Random obstacle scenes with collision-free start and goal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::Obstacle;
use crate::error::{Error, Result};
use crate::kinematics::RobotModel;

use super::ground_truth::GroundTruth;

/// Half-width of the benchmark cubes (20 cm edges).
pub const CUBE_HALF_WIDTH: f64 = 0.10;
const MAX_ATTEMPTS: usize = 10_000;
/// Start and goal are drawn from this fraction of each joint range.
const LIMIT_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub robot: String,
    /// Cube centers; every cube has half-width `half_width`.
    pub obstacle_centers: Vec<[f64; 3]>,
    pub half_width: f64,
    pub q_start: Vec<f64>,
    pub q_goal: Vec<f64>,
    pub seed: u64,
    pub index: u64,
}

impl Scenario {
    pub fn obstacles(&self) -> Result<Vec<Obstacle>> {
        self.obstacle_centers
            .iter()
            .map(|c| Obstacle::cube(*c, self.half_width))
            .collect()
    }
}

/// Shell `[inner, outer]` around the base in which obstacle centers are drawn.
pub fn reach_shell(model: &RobotModel) -> (f64, f64) {
    let r = model.reach();
    (0.3 * r, r)
}

fn uniform_in_shell<R: Rng>(rng: &mut R, inner: f64, outer: f64) -> [f64; 3] {
    let u: f64 = rng.gen();
    let radius = (inner.powi(3) + u * (outer.powi(3) - inner.powi(3))).cbrt();
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    [radius * s * phi.cos(), radius * s * phi.sin(), radius * z]
}

fn random_configuration<R: Rng>(model: &RobotModel, rng: &mut R) -> Vec<f64> {
    model
        .joints
        .iter()
        .map(|j| {
            let (mid, half) = (0.5 * (j.q_lim.lo + j.q_lim.hi), 0.5 * (j.q_lim.hi - j.q_lim.lo));
            mid + LIMIT_FRACTION * half * rng.gen_range(-1.0..=1.0)
        })
        .collect()
}

/// One scene: start and goal first, then each cube rejection-sampled until
/// neither configuration touches it.
pub fn gen_scenario(model: &RobotModel, n_obstacles: usize, seed: u64, index: u64) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let gt = GroundTruth::for_model(model);
    let (inner, outer) = reach_shell(model);
    let q_start = random_configuration(model, &mut rng);
    let q_goal = random_configuration(model, &mut rng);
    let mut centers = Vec::with_capacity(n_obstacles);
    for _ in 0..n_obstacles {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let c = uniform_in_shell(&mut rng, inner, outer);
            let cube = [Obstacle::cube(c, CUBE_HALF_WIDTH)?];
            if !gt.configuration_collides(model, &q_start, &cube)? && !gt.configuration_collides(model, &q_goal, &cube)? {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::RejectionBudget(format!(
                "could not place obstacle {} of scene {index} in {MAX_ATTEMPTS} attempts",
                centers.len()
            )));
        }
    }
    Ok(Scenario {
        robot: model.name.clone(),
        obstacle_centers: centers,
        half_width: CUBE_HALF_WIDTH,
        q_start,
        q_goal,
        seed,
        index,
    })
}

/// `n_trials` independent scenes; scene `i` uses random stream `i`.
pub fn gen_scenarios(model: &RobotModel, n_obstacles: usize, n_trials: usize, seed: u64) -> Result<Vec<Scenario>> {
    (0..n_trials as u64)
        .map(|i| gen_scenario(model, n_obstacles, seed, i))
        .collect()
}
