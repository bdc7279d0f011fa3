//! Sphere-based overapproximation of the swept arm volume.
//!
//! For every time interval the polynomial-zonotope position of each joint is
//! split into a part that depends only on the trajectory parameter and a
//! remainder. The remainder is boxed and then bounded by a sphere, so each
//! joint becomes a ball whose center is a polynomial in `k` and whose radius
//! does not depend on `k`. Links are covered by strings of balls placed along
//! the segment between consecutive joint balls.

use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::kinematics::{RobotModel, DEFAULT_MAX_GENERATORS};
use crate::trajectory::{TimePartition, TrajectoryFamily};
use crate::zonotope::{IndeterminateKind, PolyZonotope};

/// Default number of balls per link.
pub const DEFAULT_N_S: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vector3<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vector3<f64>, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, x: &Vector3<f64>, tol: f64) -> bool {
        (x - self.center).norm() <= self.radius + tol
    }

    /// True when `other` lies inside `self`.
    pub fn encloses(&self, other: &Ball, tol: f64) -> bool {
        (other.center - self.center).norm() + other.radius <= self.radius + tol
    }
}

/// Vector polynomial in the trajectory parameters `k ∈ [-1,1]^{n_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct KPoly {
    dim: usize,
    n_k: usize,
    constant: Vec<f64>,
    terms: Vec<(SmallVec<[(usize, u16); 4]>, SmallVec<[f64; 3]>)>,
}

impl KPoly {
    /// Compile a polynomial zonotope whose dependent part only involves
    /// trajectory parameters. Independent generators are ignored.
    pub fn from_pz(pz: &PolyZonotope, n_k: usize) -> Result<Self> {
        let mut terms = Vec::with_capacity(pz.n_generators());
        for t in pz.terms() {
            let mut powers = SmallVec::new();
            for (id, p) in t.monomial.powers() {
                if id.kind != IndeterminateKind::TrajParam || id.id as usize >= n_k {
                    return Err(Error::InvalidArgument(format!(
                        "indeterminate {id:?} is not a trajectory parameter of this chain"
                    )));
                }
                powers.push((id.id as usize, *p));
            }
            terms.push((powers, t.coeff.clone()));
        }
        Ok(Self {
            dim: pz.dim(),
            n_k,
            constant: pz.center().to_vec(),
            terms,
        })
    }

    pub fn constant(c: Vec<f64>, n_k: usize) -> Self {
        Self {
            dim: c.len(),
            n_k,
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn eval(&self, k: &[f64]) -> Vec<f64> {
        let mut out = self.constant.clone();
        for (powers, coeff) in &self.terms {
            let m: f64 = powers.iter().map(|(j, p)| k[*j].powi(*p as i32)).product();
            for (o, c) in out.iter_mut().zip(coeff) {
                *o += c * m;
            }
        }
        out
    }

    /// Value and `dim × n_k` Jacobian.
    pub fn eval_with_jacobian(&self, k: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let mut out = self.constant.clone();
        let mut jac = DMatrix::zeros(self.dim, self.n_k);
        for (powers, coeff) in &self.terms {
            let vals: SmallVec<[f64; 4]> =
                powers.iter().map(|(j, p)| k[*j].powi(*p as i32)).collect();
            let m: f64 = vals.iter().product();
            for (o, c) in out.iter_mut().zip(coeff) {
                *o += c * m;
            }
            for (idx, (j, p)) in powers.iter().enumerate() {
                let mut d = *p as f64 * k[*j].powi(*p as i32 - 1);
                for (other, v) in vals.iter().enumerate() {
                    if other != idx {
                        d *= v;
                    }
                }
                if d != 0.0 {
                    for (r, c) in coeff.iter().enumerate() {
                        jac[(r, *j)] += c * d;
                    }
                }
            }
        }
        (out, jac)
    }

    /// Per-axis half-width of the range over the whole parameter box.
    pub fn range_radius(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.dim];
        for (_, coeff) in &self.terms {
            for (acc, c) in r.iter_mut().zip(coeff) {
                *acc += c.abs();
            }
        }
        r
    }

    pub fn constant_term(&self) -> &[f64] {
        &self.constant
    }
}

/// One spherical joint occupancy entry for one time interval.
#[derive(Debug, Clone)]
pub struct SjoEntry {
    /// Center as a polynomial zonotope in the trajectory parameters only.
    pub center_pz: PolyZonotope,
    pub center: KPoly,
    /// Joint radius plus the bound on the parameter-independent uncertainty.
    pub radius: f64,
    /// Norm of the half-extents of the boxed remainder.
    pub uncertainty: f64,
}

impl SjoEntry {
    pub fn ball_at(&self, k: &[f64]) -> Ball {
        let c = self.center.eval(k);
        Ball::new(Vector3::new(c[0], c[1], c[2]), self.radius)
    }
}

/// Split a 3-vector position PZ into a `k`-only center and a remainder
/// bounded by an axis-aligned box, then by the sphere around that box.
pub fn sjo_from_position(position: &PolyZonotope, joint_radius: f64, n_k: usize) -> Result<SjoEntry> {
    let (k_only, rest) = position.split_by_sliceable();
    let bound = rest.interval_bound_even_aware();
    let shift: Vec<f64> = bound.iter().map(|b| b.mid()).collect();
    let half: f64 = bound.iter().map(|b| b.radius().powi(2)).sum::<f64>().sqrt();
    let center_pz = k_only.add_const(&shift)?;
    let center = KPoly::from_pz(&center_pz, n_k)?;
    Ok(SjoEntry {
        center_pz,
        center,
        radius: joint_radius + half,
        uncertainty: half,
    })
}

/// Spherical joint occupancy for every joint sphere (base first) over interval `i`.
pub fn sjo(
    model: &RobotModel,
    fam: &TrajectoryFamily,
    part: &TimePartition,
    i: usize,
    trig_order: usize,
) -> Result<Vec<SjoEntry>> {
    let n_q = model.n_q();
    let (q, _) = fam.q_pz(part, i)?;
    let frames = model.fk_pz(&q, trig_order, DEFAULT_MAX_GENERATORS)?;
    let radii = model.sphere_radii();
    let mut out = Vec::with_capacity(n_q + 1);
    let base = PolyZonotope::zero(3);
    out.push(SjoEntry {
        center: KPoly::constant(vec![0.0; 3], n_q),
        center_pz: base,
        radius: radii[0],
        uncertainty: 0.0,
    });
    for (j, f) in frames.iter().enumerate() {
        out.push(sjo_from_position(&f.position, radii[j + 1], n_q)?);
    }
    Ok(out)
}

/// Joint occupancy over all intervals: `result[i][j]`.
pub fn sjo_all(
    model: &RobotModel,
    fam: &TrajectoryFamily,
    part: &TimePartition,
    trig_order: usize,
) -> Result<Vec<Vec<SjoEntry>>> {
    (0..part.n_t())
        .into_par_iter()
        .map(|i| sjo(model, fam, part, i, trig_order))
        .collect()
}

/// Position of ball `m` (0-based) of `n_s` along the link, as a fraction of its length.
pub fn sfo_fraction(m: usize, n_s: usize) -> f64 {
    (m as f64 + 0.5) / n_s as f64
}

/// Covering radius of ball `m` given the link length and end radii.
pub fn sfo_radius(m: usize, n_s: usize, length: f64, r1: f64, r2: f64) -> f64 {
    let ra = r1 + (r2 - r1) * m as f64 / n_s as f64;
    let rb = r1 + (r2 - r1) * (m + 1) as f64 / n_s as f64;
    length / (2.0 * n_s as f64) + ra.max(rb)
}

/// Balls covering the tapered capsule `co(B(p1) ∪ B(p2))`.
pub fn sfo_balls(p1: &Ball, p2: &Ball, n_s: usize) -> Vec<Ball> {
    let n_s = n_s.max(1);
    let d = p2.center - p1.center;
    let len = d.norm();
    (0..n_s)
        .map(|m| {
            Ball::new(
                p1.center + d * sfo_fraction(m, n_s),
                sfo_radius(m, n_s, len, p1.radius, p2.radius),
            )
        })
        .collect()
}

/// Slice two consecutive joint occupancies at `k` and cover the link between them.
pub fn sfo_slice(sjo_a: &SjoEntry, sjo_b: &SjoEntry, k: &[f64], n_s: usize) -> Vec<Ball> {
    sfo_balls(&sjo_a.ball_at(k), &sjo_b.ball_at(k), n_s)
}

/// `min_s ‖x − P(s)‖ − R(s)` over the segment; non-positive iff `x` lies in
/// the tapered capsule.
pub fn tapered_capsule_excess(p1: &Ball, p2: &Ball, x: &Vector3<f64>) -> f64 {
    let d = p2.center - p1.center;
    let f = |s: f64| (x - (p1.center + d * s)).norm() - ((1.0 - s) * p1.radius + s * p2.radius);
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut e = a + g * (b - a);
    let (mut fc, mut fe) = (f(c), f(e));
    for _ in 0..80 {
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = f(e);
        }
    }
    f(0.5 * (a + b)).min(f(0.0)).min(f(1.0)).min(fc).min(fe)
}

pub fn tapered_capsule_contains(p1: &Ball, p2: &Ball, x: &Vector3<f64>) -> bool {
    tapered_capsule_excess(p1, p2, x) <= 1e-12
}

/// Uniform sample from the tapered capsule by rejection from its bounding box.
pub fn sample_tapered_capsule<R: rand::Rng>(p1: &Ball, p2: &Ball, rng: &mut R) -> Vector3<f64> {
    let lo = (p1.center - Vector3::repeat(p1.radius)).inf(&(p2.center - Vector3::repeat(p2.radius)));
    let hi = (p1.center + Vector3::repeat(p1.radius)).sup(&(p2.center + Vector3::repeat(p2.radius)));
    loop {
        let x = Vector3::from_fn(|r, _| {
            if hi[r] > lo[r] {
                rng.gen_range(lo[r]..=hi[r])
            } else {
                lo[r]
            }
        });
        if tapered_capsule_contains(p1, p2, &x) {
            return x;
        }
    }
}

/// Monte-Carlo ratio of the ball-union volume to the capsule volume.
pub fn conservatism_ratio<R: rand::Rng>(
    p1: &Ball,
    p2: &Ball,
    balls: &[Ball],
    samples: usize,
    rng: &mut R,
) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for b in balls.iter().chain([p1, p2]) {
        lo = lo.inf(&(b.center - Vector3::repeat(b.radius)));
        hi = hi.sup(&(b.center + Vector3::repeat(b.radius)));
    }
    let (mut in_union, mut in_capsule) = (0usize, 0usize);
    for _ in 0..samples {
        let x = Vector3::from_fn(|r, _| rng.gen_range(lo[r]..=hi[r]));
        if balls.iter().any(|b| b.contains(&x, 0.0)) {
            in_union += 1;
        }
        if tapered_capsule_contains(p1, p2, &x) {
            in_capsule += 1;
        }
    }
    in_union as f64 / in_capsule.max(1) as f64
}
