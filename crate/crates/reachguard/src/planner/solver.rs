//! Augmented-Lagrangian solver with box-projected L-BFGS inner iterations.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DMatrix;

/// Smooth problem `min f(k)` subject to `g(k) ≤ 0` and `k ∈ [-1, 1]^n`.
pub trait Nlp {
    fn dim(&self) -> usize;
    fn cost(&self, k: &[f64]) -> (f64, Vec<f64>);
    fn constraints(&self, k: &[f64]) -> (Vec<f64>, DMatrix<f64>);
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Constraints are tightened by this amount inside the solver.
    pub slack: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub memory: usize,
    pub penalty0: f64,
    pub penalty_max: f64,
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            slack: 1e-4,
            max_outer: 20,
            max_inner: 40,
            memory: 8,
            penalty0: 10.0,
            penalty_max: 1e8,
            tol: 1e-9,
        }
    }
}

/// Outcome of one start.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    /// Final iterate.
    pub k: Vec<f64>,
    /// Best iterate with every constraint `≤ -slack`, if one was seen.
    pub best_feasible: Option<(Vec<f64>, f64)>,
    pub iterations: usize,
    pub evaluations: usize,
}

fn project(k: &mut [f64]) {
    k.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
}

struct Merit<'a, P: Nlp> {
    nlp: &'a P,
    lambda: &'a [f64],
    mu: f64,
    slack: f64,
    evals: usize,
}

impl<P: Nlp> Merit<'_, P> {
    /// PHR augmented Lagrangian and its gradient; also the raw constraint values.
    fn eval(&mut self, k: &[f64]) -> (f64, Vec<f64>, f64, Vec<f64>) {
        self.evals += 1;
        let (f, mut grad) = self.nlp.cost(k);
        let (g, jac) = self.nlp.constraints(k);
        let mut phi = f;
        for (i, gi) in g.iter().enumerate() {
            let s = self.lambda[i] + self.mu * (gi + self.slack);
            phi += (s.max(0.0).powi(2) - self.lambda[i].powi(2)) / (2.0 * self.mu);
            if s > 0.0 {
                for c in 0..grad.len() {
                    grad[c] += s * jac[(i, c)];
                }
            }
        }
        (phi, grad, f, g)
    }
}

/// Run the augmented-Lagrangian method from `k0` until convergence, the
/// iteration limits, or `deadline`.
pub fn solve_from<P: Nlp>(nlp: &P, k0: &[f64], opts: &SolverOptions, deadline: Instant) -> SolveTrace {
    let n = nlp.dim();
    let mut k = k0.to_vec();
    project(&mut k);
    let m = nlp.constraints(&k).0.len();
    let mut lambda = vec![0.0; m];
    let mut mu = opts.penalty0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut evaluations = 1;
    let mut iterations = 0;
    let mut prev_viol = f64::INFINITY;
    let consider = |k: &[f64], f: f64, g: &[f64], best: &mut Option<(Vec<f64>, f64)>| {
        let feasible = g.iter().all(|v| *v <= -opts.slack);
        if feasible && best.as_ref().map_or(true, |(_, bf)| f < *bf) {
            *best = Some((k.to_vec(), f));
        }
    };
    for _ in 0..opts.max_outer {
        let mut merit = Merit {
            nlp,
            lambda: &lambda,
            mu,
            slack: opts.slack,
            evals: 0,
        };
        let (mut phi, mut grad, f, g) = merit.eval(&k);
        consider(&k, f, &g, &mut best);
        let mut s_hist: VecDeque<Vec<f64>> = VecDeque::new();
        let mut y_hist: VecDeque<Vec<f64>> = VecDeque::new();
        for _ in 0..opts.max_inner {
            if Instant::now() >= deadline {
                break;
            }
            iterations += 1;
            let pg: f64 = (0..n)
                .map(|c| (k[c] - (k[c] - grad[c]).clamp(-1.0, 1.0)).abs())
                .fold(0.0, f64::max);
            if pg < opts.tol {
                break;
            }
            let free: Vec<bool> = (0..n)
                .map(|c| !((k[c] <= -1.0 && grad[c] > 0.0) || (k[c] >= 1.0 && grad[c] < 0.0)))
                .collect();
            let mut d = two_loop(&grad, &s_hist, &y_hist, &free);
            let slope: f64 = d.iter().zip(&grad).map(|(a, b)| a * b).sum();
            if slope >= 0.0 {
                d = (0..n).map(|c| if free[c] { -grad[c] } else { 0.0 }).collect();
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let mut trial: Vec<f64> = (0..n).map(|c| k[c] + alpha * d[c]).collect();
                project(&mut trial);
                let step: Vec<f64> = (0..n).map(|c| trial[c] - k[c]).collect();
                let dec: f64 = step.iter().zip(&grad).map(|(a, b)| a * b).sum();
                if step.iter().all(|v| v.abs() < 1e-15) {
                    break;
                }
                let (tphi, tgrad, tf, tg) = merit.eval(&trial);
                consider(&trial, tf, &tg, &mut best);
                if tphi <= phi + 1e-4 * dec {
                    accepted = Some((trial, step, tphi, tgrad));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((trial, step, tphi, tgrad)) = accepted else {
                break;
            };
            let y: Vec<f64> = (0..n).map(|c| tgrad[c] - grad[c]).collect();
            let sy: f64 = step.iter().zip(&y).map(|(a, b)| a * b).sum();
            if sy > 1e-12 {
                if s_hist.len() == opts.memory {
                    s_hist.pop_front();
                    y_hist.pop_front();
                }
                s_hist.push_back(step);
                y_hist.push_back(y);
            }
            let improvement = phi - tphi;
            k = trial;
            phi = tphi;
            grad = tgrad;
            if improvement.abs() < opts.tol * (1.0 + phi.abs()) {
                break;
            }
        }
        evaluations += merit.evals;
        let (_, g) = (nlp.cost(&k), nlp.constraints(&k).0);
        evaluations += 1;
        let viol = g.iter().map(|v| (v + opts.slack).max(0.0)).fold(0.0, f64::max);
        for (l, gi) in lambda.iter_mut().zip(&g) {
            *l = (*l + mu * (gi + opts.slack)).max(0.0);
        }
        if viol <= opts.tol && best.is_some() {
            break;
        }
        if viol > 0.25 * prev_viol {
            mu = (mu * 10.0).min(opts.penalty_max);
        }
        prev_viol = viol;
        if Instant::now() >= deadline {
            break;
        }
    }
    SolveTrace {
        k,
        best_feasible: best,
        iterations,
        evaluations,
    }
}

/// L-BFGS two-loop recursion restricted to the free coordinates.
fn two_loop(grad: &[f64], s_hist: &VecDeque<Vec<f64>>, y_hist: &VecDeque<Vec<f64>>, free: &[bool]) -> Vec<f64> {
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).zip(free).filter(|(_, f)| **f).map(|((x, y), _)| x * y).sum()
    };
    let mut q: Vec<f64> = grad.iter().zip(free).map(|(g, f)| if *f { *g } else { 0.0 }).collect();
    let mut alphas = Vec::with_capacity(s_hist.len());
    for (s, y) in s_hist.iter().zip(y_hist).rev() {
        let sy = dot(s, y);
        if sy <= 1e-16 {
            alphas.push(0.0);
            continue;
        }
        let a = dot(s, &q) / sy;
        for c in 0..q.len() {
            if free[c] {
                q[c] -= a * y[c];
            }
        }
        alphas.push(a);
    }
    if let (Some(s), Some(y)) = (s_hist.back(), y_hist.back()) {
        let (sy, yy) = (dot(s, y), dot(y, y));
        if sy > 1e-16 && yy > 1e-16 {
            q.iter_mut().for_each(|v| *v *= sy / yy);
        }
    }
    for ((s, y), a) in s_hist.iter().zip(y_hist).zip(alphas.into_iter().rev()) {
        let sy = dot(s, y);
        if sy <= 1e-16 {
            continue;
        }
        let b = dot(y, &q) / sy;
        for c in 0..q.len() {
            if free[c] {
                q[c] += (a - b) * s[c];
            }
        }
    }
    q.iter().map(|v| -v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    /// `min (k0 - 0.8)² + (k1 + 0.3)²` subject to `k0 + k1 ≤ 0.2` and `k0² + k1² ≤ 0.5`.
    struct Toy;

    impl Nlp for Toy {
        fn dim(&self) -> usize {
            2
        }
        fn cost(&self, k: &[f64]) -> (f64, Vec<f64>) {
            (
                (k[0] - 0.8).powi(2) + (k[1] + 0.3).powi(2),
                vec![2.0 * (k[0] - 0.8), 2.0 * (k[1] + 0.3)],
            )
        }
        fn constraints(&self, k: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
            (
                vec![k[0] + k[1] - 0.2, k[0] * k[0] + k[1] * k[1] - 0.5],
                DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0 * k[0], 2.0 * k[1]]),
            )
        }
    }

    #[test]
    fn converges_to_constrained_optimum() {
        let deadline = Instant::now() + Duration::from_secs(10);
        let opts = SolverOptions {
            slack: 0.0,
            ..SolverOptions::default()
        };
        let tr = solve_from(&Toy, &[0.0, 0.0], &opts, deadline);
        // Both constraints are active: k = (0.1 + s, 0.1 - s) with 0.02 + 2s² = 0.5.
        let s = 0.24f64.sqrt();
        let expect = [0.1 + s, 0.1 - s];
        assert!((tr.k[0] - expect[0]).abs() < 1e-5 && (tr.k[1] - expect[1]).abs() < 1e-5, "{:?}", tr.k);
    }

    #[test]
    fn slack_keeps_iterates_strictly_feasible() {
        let deadline = Instant::now() + Duration::from_secs(10);
        let tr = solve_from(&Toy, &[-0.5, 0.9], &SolverOptions::default(), deadline);
        let (k, _) = tr.best_feasible.expect("feasible point");
        let (g, _) = Toy.constraints(&k);
        assert!(g.iter().all(|v| *v <= -1e-4));
    }

    #[test]
    fn respects_the_box() {
        struct Far;
        impl Nlp for Far {
            fn dim(&self) -> usize {
                1
            }
            fn cost(&self, k: &[f64]) -> (f64, Vec<f64>) {
                ((k[0] - 5.0).powi(2), vec![2.0 * (k[0] - 5.0)])
            }
            fn constraints(&self, _: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
                (Vec::new(), DMatrix::zeros(0, 1))
            }
        }
        let tr = solve_from(&Far, &[0.0], &SolverOptions::default(), Instant::now() + Duration::from_secs(5));
        assert_eq!(tr.k, vec![1.0]);
    }

    #[test]
    fn expired_deadline_returns_promptly() {
        let start = Instant::now();
        let tr = solve_from(&Toy, &[0.0, 0.0], &SolverOptions::default(), start);
        assert!(start.elapsed() < Duration::from_millis(50));
        assert_eq!(tr.iterations, 0);
    }
}
