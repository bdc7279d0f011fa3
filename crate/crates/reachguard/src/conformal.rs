//! Split conformal calibration of the learned joint spheres.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{invalid, Error, Result};
use crate::neural::{NeuralSfo, SfoSample};
use crate::occupancy::Ball;

pub const DEFAULT_RHO: f64 = 0.05;
const BISECTION_TOL: f64 = 1e-12;

/// Smallest extra radius that makes the predicted ball enclose the true one.
pub fn nonconformity(truth: &Ball, pred: &Ball) -> f64 {
    ((truth.center - pred.center).norm() + truth.radius - pred.radius).max(0.0)
}

pub fn conformalize(pred: &Ball, delta: f64) -> Ball {
    Ball::new(pred.center, pred.radius + delta)
}

/// 1-based rank of the calibration order statistic.
pub fn quantile_index(n: usize, epsilon_hat: f64) -> usize {
    ((n as f64 + 1.0) * (1.0 - epsilon_hat)).ceil() as usize
}

/// The `⌈(N+1)(1−ε̂)⌉`-th smallest score, or `+∞` when that rank exceeds `N`.
pub fn conformal_quantile(scores: &[f64], epsilon_hat: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(invalid("no calibration scores"));
    }
    check_epsilon(epsilon_hat)?;
    let idx = quantile_index(scores.len(), epsilon_hat);
    if idx > scores.len() {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    let (_, kth, _) = sorted.select_nth_unstable_by(idx - 1, |a, b| a.total_cmp(b));
    Ok(*kth)
}

fn check_epsilon(epsilon_hat: f64) -> Result<()> {
    if !(epsilon_hat > 0.0 && epsilon_hat < 1.0) {
        return Err(Error::OutOfRange {
            what: "epsilon_hat",
            value: epsilon_hat,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(())
}

pub fn nu(n_cal: usize, epsilon_hat: f64) -> usize {
    ((n_cal as f64 + 1.0) * epsilon_hat).floor() as usize
}

/// `ρ`-quantile of `Beta(a, b)` by bisection on the regularized incomplete beta function.
pub fn beta_quantile(a: f64, b: f64, rho: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(invalid(format!("Beta parameters must be positive, got ({a}, {b})")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::OutOfRange {
            what: "rho",
            value: rho,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Dataset-conditioned coverage level `Beta_{N+1−ν, ν}(ρ)` with `ν = ⌊(N+1) ε̂⌋`.
pub fn beta_coverage(n_cal: usize, epsilon_hat: f64, rho: f64) -> Result<f64> {
    check_epsilon(epsilon_hat)?;
    let v = nu(n_cal, epsilon_hat);
    if v == 0 {
        return Err(invalid(format!(
            "epsilon_hat = {epsilon_hat} is too small for {n_cal} calibration samples"
        )));
    }
    beta_quantile((n_cal + 1 - v) as f64, v as f64, rho)
}

/// Probability that every one of the `n_q + 1` conformalized joint spheres
/// encloses its true sphere, given per-sphere coverage `1 − ε`.
pub fn compose_guarantee(epsilon: f64, n_q: usize) -> f64 {
    (1.0 - epsilon).powi(n_q as i32 + 1)
}

/// True when both conformalized end balls enclose the true ones, which makes
/// the conformalized tapered capsule enclose the true one.
pub fn tapered_capsule_enclosure_check(truth: (&Ball, &Ball), conformalized: (&Ball, &Ball)) -> bool {
    conformalized.0.encloses(truth.0, 0.0) && conformalized.1.encloses(truth.1, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub median: f64,
    pub p90: f64,
    pub p99: f64,
    pub p999: f64,
    pub max: f64,
    /// Counts over `histogram_edges`.
    pub histogram: Vec<usize>,
    pub histogram_edges: Vec<f64>,
}

impl ScoreSummary {
    pub fn new(scores: &[f64], bins: usize) -> Self {
        let mut s = scores.to_vec();
        s.sort_by(|a, b| a.total_cmp(b));
        let at = |q: f64| {
            if s.is_empty() {
                f64::NAN
            } else {
                s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1]
            }
        };
        let max = s.last().copied().unwrap_or(f64::NAN);
        let top = if max > 0.0 { max } else { 1.0 };
        let bins = bins.max(1);
        let edges: Vec<f64> = (0..=bins).map(|b| top * b as f64 / bins as f64).collect();
        let mut histogram = vec![0; bins];
        for v in &s {
            let b = ((v / top) * bins as f64).floor() as usize;
            histogram[b.min(bins - 1)] += 1;
        }
        Self {
            median: at(0.5),
            p90: at(0.9),
            p99: at(0.99),
            p999: at(0.999),
            max,
            histogram,
            histogram_edges: edges,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// One buffer per predicted joint sphere (joints `1..=n_q`).
    pub delta_per_joint: Vec<f64>,
    pub epsilon_hat: f64,
    pub rho: f64,
    pub n_cal: usize,
    pub nu: usize,
    pub beta_coverage: f64,
    pub scores: Vec<ScoreSummary>,
}

impl CalibrationResult {
    /// `1 − ε` for the composed guarantee.
    pub fn epsilon(&self) -> f64 {
        1.0 - self.beta_coverage
    }

    pub fn guarantee(&self) -> f64 {
        compose_guarantee(self.epsilon(), self.delta_per_joint.len())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Per-joint buffers from per-joint calibration scores.
pub fn calibrate(scores_per_joint: &[Vec<f64>], epsilon_hat: f64, rho: f64) -> Result<CalibrationResult> {
    let n_cal = scores_per_joint.first().map(Vec::len).unwrap_or(0);
    if n_cal == 0 {
        return Err(invalid("no calibration scores"));
    }
    if scores_per_joint.iter().any(|s| s.len() != n_cal) {
        return Err(invalid("every joint needs the same number of scores"));
    }
    let beta = beta_coverage(n_cal, epsilon_hat, rho)?;
    let delta_per_joint = scores_per_joint
        .par_iter()
        .map(|s| conformal_quantile(s, epsilon_hat))
        .collect::<Result<Vec<_>>>()?;
    Ok(CalibrationResult {
        delta_per_joint,
        epsilon_hat,
        rho,
        n_cal,
        nu: nu(n_cal, epsilon_hat),
        beta_coverage: beta,
        scores: scores_per_joint.iter().map(|s| ScoreSummary::new(s, 20)).collect(),
    })
}

/// Exact joint spheres of a sample, base first.
pub fn sample_truth(sample: &SfoSample) -> Vec<Ball> {
    sample
        .y
        .chunks_exact(4)
        .map(|c| Ball::new(nalgebra::Vector3::new(c[0], c[1], c[2]), c[3]))
        .collect()
}

/// Nonconformity scores `[joint][sample]` for the predicted joints `1..=n_q`.
pub fn surrogate_scores(sfo: &NeuralSfo, samples: &[SfoSample]) -> Result<Vec<Vec<f64>>> {
    let per_sample: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| {
            let pred = sfo.predict_spheres(&s.x)?;
            let truth = sample_truth(s);
            Ok(truth.iter().zip(&pred).skip(1).map(|(t, p)| nonconformity(t, p)).collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..sfo.n_q())
        .map(|j| per_sample.iter().map(|s| s[j]).collect())
        .collect())
}

/// A surrogate together with its calibration buffers.
#[derive(Debug, Clone)]
pub struct ConformalSfo {
    pub sfo: NeuralSfo,
    pub calibration: CalibrationResult,
}

impl ConformalSfo {
    pub fn new(sfo: NeuralSfo, calibration: CalibrationResult) -> Result<Self> {
        if calibration.delta_per_joint.len() != sfo.n_q() {
            return Err(Error::DimensionMismatch {
                expected: sfo.n_q(),
                got: calibration.delta_per_joint.len(),
            });
        }
        Ok(Self { sfo, calibration })
    }

    /// Calibrate `sfo` on held-out samples.
    pub fn calibrate(sfo: NeuralSfo, cal: &[SfoSample], epsilon_hat: f64, rho: f64) -> Result<Self> {
        let scores = surrogate_scores(&sfo, cal)?;
        let calibration = calibrate(&scores, epsilon_hat, rho)?;
        Self::new(sfo, calibration)
    }

    /// Conformalized joint spheres, base first (the base is exact).
    pub fn spheres(&self, x: &[f64]) -> Result<Vec<Ball>> {
        let mut balls = self.sfo.predict_spheres(x)?;
        for (b, d) in balls.iter_mut().skip(1).zip(&self.calibration.delta_per_joint) {
            *b = conformalize(b, *d);
        }
        Ok(balls)
    }
}
