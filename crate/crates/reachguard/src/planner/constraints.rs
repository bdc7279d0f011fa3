//! Constraint assembly for one planning iteration.

use nalgebra::{DMatrix, Vector3};
use smallvec::SmallVec;

use crate::conformal::ConformalSfo;
use crate::distance::Obstacle;
use crate::error::{Error, Result};
use crate::kinematics::RobotModel;
use crate::neural::mlp::to_columns;
use crate::occupancy::{sfo_fraction, sjo_all, SjoEntry};
use crate::trajectory::{TimePartition, TrajectoryFamily};
use crate::zonotope::{IndeterminateKind, Monomial, PolyZonotope};

use super::PlannerConfig;

type KPowers = SmallVec<[(usize, u16); 3]>;

/// Scalar polynomial in the trajectory parameters.
#[derive(Debug, Clone, Default)]
struct ScalarKPoly {
    constant: f64,
    terms: Vec<(KPowers, f64)>,
}

impl ScalarKPoly {
    fn eval_grad(&self, k: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut v = self.constant;
        for (powers, c) in &self.terms {
            let mut prod = *c;
            for (j, p) in powers {
                prod *= k[*j].powi(*p as i32);
            }
            v += prod;
            for (slot, (j, p)) in powers.iter().enumerate() {
                let mut d = *c * *p as f64 * k[*j].powi(*p as i32 - 1);
                for (other, (jj, pp)) in powers.iter().enumerate() {
                    if other != slot {
                        d *= k[*jj].powi(*pp as i32);
                    }
                }
                grad[*j] += d;
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RangeKind {
    /// The remaining monomial ranges over `[0, 1]`.
    Even,
    /// The remaining monomial ranges over `[-1, 1]`.
    Symmetric,
}

/// Interval bound of a scalar PZ after slicing at `k`, as a function of `k`.
#[derive(Debug, Clone)]
pub struct SlicedBound {
    center: ScalarKPoly,
    groups: Vec<(RangeKind, ScalarKPoly)>,
    radius: f64,
}

impl SlicedBound {
    pub fn new(pz: &PolyZonotope) -> Result<Self> {
        if pz.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: pz.dim(),
            });
        }
        let mut center = ScalarKPoly {
            constant: pz.center()[0],
            terms: Vec::new(),
        };
        let mut groups: Vec<(Monomial, RangeKind, ScalarKPoly)> = Vec::new();
        for t in pz.terms() {
            let mut kp = KPowers::new();
            let mut rest = Vec::new();
            for (id, p) in t.monomial.powers() {
                if id.kind == IndeterminateKind::TrajParam {
                    kp.push((id.id as usize, *p));
                } else {
                    rest.push((*id, *p));
                }
            }
            let c = t.coeff[0];
            if rest.is_empty() {
                center.terms.push((kp, c));
                continue;
            }
            let rest = Monomial::from_powers(rest);
            let poly = match groups.iter_mut().find(|(m, _, _)| *m == rest) {
                Some((_, _, p)) => p,
                None => {
                    let kind = if rest.all_even() {
                        RangeKind::Even
                    } else {
                        RangeKind::Symmetric
                    };
                    groups.push((rest, kind, ScalarKPoly::default()));
                    &mut groups.last_mut().unwrap().2
                }
            };
            if kp.is_empty() {
                poly.constant += c;
            } else {
                poly.terms.push((kp, c));
            }
        }
        let radius = pz.independent_generators().iter().map(|h| h[0].abs()).sum();
        Ok(Self {
            center,
            groups: groups.into_iter().map(|(_, k, p)| (k, p)).collect(),
            radius,
        })
    }

    /// `(lo, hi)` with gradients written into `dlo`, `dhi`.
    pub fn eval(&self, k: &[f64], dlo: &mut [f64], dhi: &mut [f64]) -> (f64, f64) {
        let n = k.len();
        let mut dc = vec![0.0; n];
        let mut dr = vec![0.0; n];
        let mut c = self.center.eval_grad(k, &mut dc);
        let mut r = self.radius;
        let mut g = vec![0.0; n];
        for (kind, poly) in &self.groups {
            let v = poly.eval_grad(k, &mut g);
            let s = v.signum() * if v == 0.0 { 0.0 } else { 1.0 };
            match kind {
                RangeKind::Even => {
                    c += 0.5 * v;
                    r += 0.5 * v.abs();
                    for j in 0..n {
                        dc[j] += 0.5 * g[j];
                        dr[j] += 0.5 * s * g[j];
                    }
                }
                RangeKind::Symmetric => {
                    r += v.abs();
                    for j in 0..n {
                        dr[j] += s * g[j];
                    }
                }
            }
        }
        for j in 0..n {
            dlo[j] = dc[j] - dr[j];
            dhi[j] = dc[j] + dr[j];
        }
        (c - r, c + r)
    }
}

/// Joint spheres (base first) and center Jacobians for one interval at one `k`.
#[derive(Debug, Clone)]
pub struct JointSpheres {
    pub centers: Vec<Vector3<f64>>,
    pub jacobians: Vec<DMatrix<f64>>,
    pub radii: Vec<f64>,
    /// Radius gradients with respect to `k`; empty when the radii do not depend on `k`.
    pub radius_grads: Vec<Vec<f64>>,
}

enum SphereSource<'a> {
    Exact(Vec<Vec<SjoEntry>>),
    Neural { sfo: &'a ConformalSfo, use_grad_net: bool },
}

/// Kind of each constraint row, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    JointLimit,
    VelocityLimit,
    Collision,
}

#[derive(Debug, Clone, Copy)]
struct CollisionRow {
    interval: usize,
    link: usize,
    ball: usize,
    obstacle: usize,
}

/// Values and (optionally) the `m × n_q` Jacobian of all constraints `g(k) ≤ 0`.
#[derive(Debug, Clone)]
pub struct ConstraintEval {
    pub values: Vec<f64>,
    pub jacobian: Option<DMatrix<f64>>,
}

impl ConstraintEval {
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Constraints of one planning problem from a fixed initial state.
pub struct ConstraintSet<'a> {
    fam: TrajectoryFamily,
    n_t: usize,
    n_s: usize,
    margin: f64,
    obstacles: &'a [Obstacle],
    limits: Vec<(SlicedBound, (f64, f64), ConstraintKind)>,
    source: SphereSource<'a>,
    rows: Vec<CollisionRow>,
    all_rows: Vec<CollisionRow>,
}

fn collision_rows(n_t: usize, n_links: usize, n_s: usize, n_obs: usize) -> Vec<CollisionRow> {
    let mut rows = Vec::with_capacity(n_t * n_links * n_s * n_obs);
    for interval in 0..n_t {
        for link in 0..n_links {
            for ball in 0..n_s {
                for obstacle in 0..n_obs {
                    rows.push(CollisionRow {
                        interval,
                        link,
                        ball,
                        obstacle,
                    });
                }
            }
        }
    }
    rows
}

impl<'a> ConstraintSet<'a> {
    /// Exact constraints from the joint occupancy of `fam` over every interval.
    pub fn exact(
        model: &RobotModel,
        fam: TrajectoryFamily,
        part: &TimePartition,
        obstacles: &'a [Obstacle],
        cfg: &PlannerConfig,
    ) -> Result<Self> {
        let sjo = sjo_all(model, &fam, part, cfg.trig_order)?;
        let limits = limit_rows(model, &fam, part)?;
        let n_q = model.n_q();
        let all_rows = collision_rows(part.n_t(), n_q, cfg.n_s, obstacles.len());
        let rows = all_rows
            .iter()
            .copied()
            .filter(|r| !provably_clear(&sjo[r.interval], r.link, cfg.n_s, &obstacles[r.obstacle], cfg.margin))
            .collect();
        Ok(Self {
            fam,
            n_t: part.n_t(),
            n_s: cfg.n_s,
            margin: cfg.margin,
            obstacles,
            limits,
            source: SphereSource::Exact(sjo),
            rows,
            all_rows,
        })
    }

    /// Constraints from a calibrated surrogate.
    pub fn neural(
        model: &RobotModel,
        fam: TrajectoryFamily,
        part: &TimePartition,
        obstacles: &'a [Obstacle],
        sfo: &'a ConformalSfo,
        cfg: &PlannerConfig,
    ) -> Result<Self> {
        if sfo.sfo.n_q() != model.n_q() || sfo.sfo.n_t() != part.n_t() {
            return Err(Error::InvalidArgument(
                "surrogate was trained for a different robot or time partition".into(),
            ));
        }
        if cfg.use_grad_net && sfo.sfo.grad_net.is_none() {
            return Err(Error::InvalidArgument("gradient network requested but not trained".into()));
        }
        let limits = limit_rows(model, &fam, part)?;
        let all_rows = collision_rows(part.n_t(), model.n_q(), cfg.n_s, obstacles.len());
        Ok(Self {
            fam,
            n_t: part.n_t(),
            n_s: cfg.n_s,
            margin: cfg.margin,
            obstacles,
            limits,
            source: SphereSource::Neural {
                sfo,
                use_grad_net: cfg.use_grad_net,
            },
            rows: all_rows.clone(),
            all_rows,
        })
    }

    pub fn family(&self) -> &TrajectoryFamily {
        &self.fam
    }

    pub fn n_q(&self) -> usize {
        self.fam.n_q()
    }

    /// Number of rows used by the optimizer.
    pub fn len(&self) -> usize {
        2 * self.limits.len() + self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of collision rows removed because they hold for every `k`.
    pub fn n_prefiltered(&self) -> usize {
        self.all_rows.len() - self.rows.len()
    }

    pub fn kinds(&self) -> Vec<ConstraintKind> {
        let mut out: Vec<ConstraintKind> = self.limits.iter().flat_map(|l| [l.2, l.2]).collect();
        out.extend(std::iter::repeat(ConstraintKind::Collision).take(self.rows.len()));
        out
    }

    /// Joint spheres of every interval at `k`.
    pub fn joint_spheres(&self, k: &[f64], with_grad: bool) -> Result<Vec<JointSpheres>> {
        let n_q = self.n_q();
        match &self.source {
            SphereSource::Exact(sjo) => Ok(sjo
                .iter()
                .map(|entries| {
                    let mut centers = Vec::with_capacity(n_q + 1);
                    let mut jacobians = Vec::with_capacity(n_q + 1);
                    let mut radii = Vec::with_capacity(n_q + 1);
                    for e in entries {
                        if with_grad {
                            let (c, j) = e.center.eval_with_jacobian(k);
                            centers.push(Vector3::new(c[0], c[1], c[2]));
                            jacobians.push(j);
                        } else {
                            let c = e.center.eval(k);
                            centers.push(Vector3::new(c[0], c[1], c[2]));
                        }
                        radii.push(e.radius);
                    }
                    JointSpheres {
                        centers,
                        jacobians,
                        radii,
                        radius_grads: Vec::new(),
                    }
                })
                .collect()),
            SphereSource::Neural { sfo, use_grad_net } => {
                let xs: Vec<Vec<f64>> = (0..self.n_t)
                    .map(|i| sfo.sfo.input(&self.fam.q0, &self.fam.qd0, k, i))
                    .collect();
                let x = to_columns(&xs);
                let c = sfo.sfo.center_net.forward_batch(&x);
                let r = sfo.sfo.radius_net.forward_batch(&x);
                let g = match (with_grad, use_grad_net) {
                    (true, true) => Some(sfo.sfo.grad_net.as_ref().unwrap().forward_batch(&x)),
                    _ => None,
                };
                let deltas = &sfo.calibration.delta_per_joint;
                let base_radius = sfo.spheres(&xs[0])?[0].radius;
                let mut out = Vec::with_capacity(self.n_t);
                for (i, xi) in xs.iter().enumerate() {
                    let mut centers = vec![Vector3::zeros()];
                    let mut radii = vec![base_radius];
                    let mut jacobians = Vec::new();
                    let mut radius_grads = Vec::new();
                    if with_grad {
                        jacobians.push(DMatrix::zeros(3, n_q));
                    }
                    for j in 0..n_q {
                        centers.push(Vector3::new(c[(3 * j, i)], c[(3 * j + 1, i)], c[(3 * j + 2, i)]));
                        radii.push(r[(j, i)] + deltas[j]);
                    }
                    if with_grad {
                        match &g {
                            Some(g) => {
                                let f = sfo.sfo.grad_scale(i);
                                for j in 0..n_q {
                                    jacobians.push(DMatrix::from_fn(3, n_q, |rr, cc| {
                                        f * g[(3 * n_q * j + rr * n_q + cc, i)]
                                    }));
                                }
                            }
                            None => {
                                let jac = sfo.sfo.spheres_with_input_jacobian(xi)?;
                                jacobians.extend(jac.centers);
                                radius_grads.push(vec![0.0; n_q]);
                                radius_grads.extend(jac.radii);
                            }
                        }
                    }
                    out.push(JointSpheres {
                        centers,
                        jacobians,
                        radii,
                        radius_grads,
                    });
                }
                Ok(out)
            }
        }
    }

    /// Optimizer rows at `k`.
    pub fn eval(&self, k: &[f64], with_grad: bool) -> Result<ConstraintEval> {
        self.eval_rows(k, with_grad, &self.rows)
    }

    /// Every row including prefiltered ones, for final verification.
    pub fn eval_all(&self, k: &[f64]) -> Result<ConstraintEval> {
        self.eval_rows(k, false, &self.all_rows)
    }

    fn eval_rows(&self, k: &[f64], with_grad: bool, rows: &[CollisionRow]) -> Result<ConstraintEval> {
        let n_q = self.n_q();
        if k.len() != n_q {
            return Err(Error::DimensionMismatch {
                expected: n_q,
                got: k.len(),
            });
        }
        let m = 2 * self.limits.len() + rows.len();
        let mut values = Vec::with_capacity(m);
        let mut jac = with_grad.then(|| DMatrix::zeros(m, n_q));
        let (mut dlo, mut dhi) = (vec![0.0; n_q], vec![0.0; n_q]);
        for (bound, (lim_lo, lim_hi), _) in &self.limits {
            let (lo, hi) = bound.eval(k, &mut dlo, &mut dhi);
            let row = values.len();
            values.push(lim_lo - lo);
            values.push(hi - lim_hi);
            if let Some(jm) = jac.as_mut() {
                for c in 0..n_q {
                    jm[(row, c)] = -dlo[c];
                    jm[(row + 1, c)] = dhi[c];
                }
            }
        }
        let spheres = self.joint_spheres(k, with_grad)?;
        let ns = self.n_s as f64;
        for r in rows {
            let js = &spheres[r.interval];
            let (a, b) = (r.link, r.link + 1);
            let d = js.centers[b] - js.centers[a];
            let len = d.norm();
            let f = sfo_fraction(r.ball, self.n_s);
            let center = js.centers[a] + d * f;
            let (ra, rb) = (js.radii[a], js.radii[b]);
            let r0 = ra + (rb - ra) * r.ball as f64 / ns;
            let r1 = ra + (rb - ra) * (r.ball + 1) as f64 / ns;
            let radius = len / (2.0 * ns) + r0.max(r1);
            let (sd, n) = self.obstacles[r.obstacle].signed_distance_grad(&center);
            let row = values.len();
            values.push(radius + self.margin - sd);
            if let Some(jm) = jac.as_mut() {
                let jd = &js.jacobians[b] - &js.jacobians[a];
                let jc = &js.jacobians[a] + &jd * f;
                let u = if len > 0.0 { d / len } else { Vector3::zeros() };
                let end = if r0 >= r1 { r.ball } else { r.ball + 1 } as f64 / ns;
                for c in 0..n_q {
                    let dlen = u[0] * jd[(0, c)] + u[1] * jd[(1, c)] + u[2] * jd[(2, c)];
                    let dsd = n[0] * jc[(0, c)] + n[1] * jc[(1, c)] + n[2] * jc[(2, c)];
                    let dr = match js.radius_grads.as_slice() {
                        [] => 0.0,
                        g => g[a][c] + (g[b][c] - g[a][c]) * end,
                    };
                    jm[(row, c)] = dlen / (2.0 * ns) + dr - dsd;
                }
            }
        }
        Ok(ConstraintEval {
            values,
            jacobian: jac,
        })
    }
}

/// Position and velocity limit rows: one sliced bound per `(interval, joint)`.
fn limit_rows(
    model: &RobotModel,
    fam: &TrajectoryFamily,
    part: &TimePartition,
) -> Result<Vec<(SlicedBound, (f64, f64), ConstraintKind)>> {
    let mut out = Vec::with_capacity(2 * part.n_t() * model.n_q());
    for i in 0..part.n_t() {
        let (q, qd) = fam.q_pz(part, i)?;
        for (j, joint) in model.joints.iter().enumerate() {
            out.push((
                SlicedBound::new(&q[j])?,
                (joint.q_lim.lo, joint.q_lim.hi),
                ConstraintKind::JointLimit,
            ));
            out.push((
                SlicedBound::new(&qd[j])?,
                (joint.qd_lim.lo, joint.qd_lim.hi),
                ConstraintKind::VelocityLimit,
            ));
        }
    }
    Ok(out)
}

/// True when the link's balls clear the obstacle for every `k ∈ [-1,1]^{n_q}`.
fn provably_clear(entries: &[SjoEntry], link: usize, n_s: usize, obs: &Obstacle, margin: f64) -> bool {
    let (a, b) = (&entries[link], &entries[link + 1]);
    let ca = Vector3::from_column_slice(a.center.constant_term());
    let cb = Vector3::from_column_slice(b.center.constant_term());
    let spread = |e: &SjoEntry| e.center.range_radius().iter().map(|v| v * v).sum::<f64>().sqrt();
    let (sa, sb) = (spread(a), spread(b));
    let mid = 0.5 * (ca + cb);
    let reach = 0.5 * (cb - ca).norm() + sa.max(sb);
    let max_len = (cb - ca).norm() + sa + sb;
    let max_ball = max_len / (2.0 * n_s as f64) + a.radius.max(b.radius);
    obs.hull_distance(&mid) > reach + max_ball + margin + 1e-3
}
