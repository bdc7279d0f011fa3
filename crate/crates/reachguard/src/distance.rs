//! Signed distance between points and zonotopes.
//!
//! Positive outside, negative inside (minus the penetration depth), zero on
//! the boundary. In 3D the outside distance is a box-constrained least
//! squares problem over the generator coefficients; the inside depth comes
//! from the facet description. In 2D the distance is the minimum over the
//! boundary segments of the buffered obstacle.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::occupancy::Ball;
use crate::zonotope::{Interval, Zonotope};

/// Angular tolerance used to merge parallel facet normals and generators.
pub const PARALLEL_TOL: f64 = 1e-9;
/// Stationarity target of the box-constrained least-squares solver.
pub const KKT_TOL: f64 = 1e-10;

/// Facet description `{x : A x ≤ b}` of a full-dimensional zonotope in 3D.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceRep {
    pub normals: Vec<Vector3<f64>>,
    pub offsets: Vec<f64>,
}

impl HalfspaceRep {
    pub fn n_faces(&self) -> usize {
        self.normals.len()
    }

    /// `max_i (A_i x − b_i)` and the maximizing row.
    pub fn max_violation(&self, x: &Vector3<f64>) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, (a, b)) in self.normals.iter().zip(&self.offsets).enumerate() {
            let v = a.dot(x) - b;
            if v > best.0 {
                best = (v, i);
            }
        }
        best
    }

    pub fn contains(&self, x: &Vector3<f64>, tol: f64) -> bool {
        self.max_violation(x).0 <= tol
    }
}

fn generator_columns(z: &Zonotope) -> Vec<Vector3<f64>> {
    z.generators()
        .column_iter()
        .map(|g| Vector3::new(g[0], g[1], g[2]))
        .filter(|g| g.norm() > 0.0)
        .collect()
}

/// Facets of a zonotope in `R³` from the normalized cross products of all
/// generator pairs.
pub fn halfspace_rep(z: &Zonotope) -> Result<HalfspaceRep> {
    if z.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: z.dim(),
        });
    }
    let rank = z.rank(1e-12);
    if rank < 3 {
        return Err(Error::Degenerate { rank, dim: 3 });
    }
    let gens = generator_columns(z);
    let c = Vector3::new(z.center()[0], z.center()[1], z.center()[2]);
    let mut dirs: Vec<Vector3<f64>> = Vec::new();
    for a in 0..gens.len() {
        for b in a + 1..gens.len() {
            let n = gens[a].cross(&gens[b]);
            let len = n.norm();
            if len <= PARALLEL_TOL * gens[a].norm() * gens[b].norm() {
                continue;
            }
            let n = n / len;
            if dirs.iter().any(|d| d.cross(&n).norm() <= PARALLEL_TOL) {
                continue;
            }
            dirs.push(n);
        }
    }
    let mut normals = Vec::with_capacity(2 * dirs.len());
    let mut offsets = Vec::with_capacity(2 * dirs.len());
    for d in dirs {
        for n in [d, -d] {
            let spread: f64 = gens.iter().map(|g| n.dot(g).abs()).sum();
            normals.push(n);
            offsets.push(n.dot(&c) + spread);
        }
    }
    Ok(HalfspaceRep { normals, offsets })
}

/// Minimize `‖c + Gβ − p‖²` over `β ∈ [-1,1]^m`. Returns `β` and the closest point.
pub fn project_onto_zonotope(
    center: &Vector3<f64>,
    gens: &[Vector3<f64>],
    p: &Vector3<f64>,
) -> (Vec<f64>, Vector3<f64>) {
    let m = gens.len();
    if m == 0 {
        return (Vec::new(), *center);
    }
    let g = DMatrix::from_fn(3, m, |r, c| gens[c][r]);
    let h = g.transpose() * &g;
    let target = DVector::from_column_slice((p - center).as_slice());
    let gt_target = g.transpose() * &target;
    let mut beta = DVector::from_fn(m, |l, _| {
        let n2 = gens[l].norm_squared();
        (gt_target[l] / n2).clamp(-1.0, 1.0)
    });
    let grad = |beta: &DVector<f64>| &h * beta - &gt_target;
    let project = |v: &mut DVector<f64>| v.iter_mut().for_each(|x| *x = x.clamp(-1.0, 1.0));
    let kkt = |beta: &DVector<f64>, gr: &DVector<f64>| {
        let mut step = beta - gr;
        project(&mut step);
        (beta - step).amax()
    };
    // Exact minimizer of the quadratic along `beta + τ d`, τ ∈ [0, τ_max].
    let line = |gr: &DVector<f64>, d: &DVector<f64>, tau_max: f64| {
        let curv = d.dot(&(&h * d));
        let slope = gr.dot(d);
        if slope >= 0.0 {
            return 0.0;
        }
        let tau = if curv > 0.0 { -slope / curv } else { tau_max };
        tau.min(tau_max)
    };
    for _ in 0..500 {
        let gr = grad(&beta);
        if kkt(&beta, &gr) <= KKT_TOL {
            break;
        }
        // Projected gradient step with exact search along the projected direction.
        let ggn = gr.dot(&(&h * &gr));
        let alpha = if ggn > 0.0 { gr.norm_squared() / ggn } else { 1.0 };
        let mut trial = &beta - &gr * alpha;
        project(&mut trial);
        let d = &trial - &beta;
        let tau = line(&gr, &d, 1.0);
        beta += &d * tau;

        // Newton step on the coordinates strictly inside the box.
        let gr = grad(&beta);
        let free: Vec<usize> = (0..m)
            .filter(|&l| {
                let b = beta[l];
                (b > -1.0 && b < 1.0) || (b <= -1.0 && gr[l] < 0.0) || (b >= 1.0 && gr[l] > 0.0)
            })
            .collect();
        if free.is_empty() {
            continue;
        }
        let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
        let gf = DVector::from_fn(free.len(), |a, _| -gr[free[a]]);
        let svd = hf.svd(true, true);
        let Ok(step) = svd.solve(&gf, 1e-12) else {
            continue;
        };
        let mut d = DVector::zeros(m);
        let mut tau_max = f64::INFINITY;
        for (a, &l) in free.iter().enumerate() {
            d[l] = step[a];
            if step[a] > 0.0 {
                tau_max = tau_max.min((1.0 - beta[l]) / step[a]);
            } else if step[a] < 0.0 {
                tau_max = tau_max.min((-1.0 - beta[l]) / step[a]);
            }
        }
        let tau = line(&gr, &d, tau_max.min(1.0));
        beta += &d * tau;
        project(&mut beta);
    }
    let mut x = *center;
    for (gl, b) in gens.iter().zip(beta.iter()) {
        x += gl * *b;
    }
    (beta.iter().copied().collect(), x)
}

/// Oriented box shortcut for zonotopes with three pairwise orthogonal generators.
#[derive(Debug, Clone, PartialEq)]
struct OrientedBox {
    axes: Matrix3<f64>,
    half: Vector3<f64>,
}

impl OrientedBox {
    fn detect(gens: &[Vector3<f64>]) -> Option<Self> {
        if gens.len() != 3 {
            return None;
        }
        for a in 0..3 {
            for b in a + 1..3 {
                let cos = gens[a].dot(&gens[b]) / (gens[a].norm() * gens[b].norm());
                if cos.abs() > 1e-12 {
                    return None;
                }
            }
        }
        let half = Vector3::new(gens[0].norm(), gens[1].norm(), gens[2].norm());
        let axes = Matrix3::from_columns(&[gens[0] / half[0], gens[1] / half[1], gens[2] / half[2]]);
        Some(Self { axes, half })
    }

    fn signed_distance(&self, rel: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let u = self.axes.transpose() * rel;
        let excess = Vector3::from_fn(|r, _| u[r].abs() - self.half[r]);
        if excess.max() <= 0.0 {
            let (idx, val) = excess.argmax();
            let mut local = Vector3::zeros();
            local[idx] = u[idx].signum();
            if local[idx] == 0.0 {
                local[idx] = 1.0;
            }
            (val, self.axes * local)
        } else {
            let out = Vector3::from_fn(|r, _| excess[r].max(0.0) * u[r].signum());
            let d = out.norm();
            (d, self.axes * (out / d))
        }
    }
}

/// Convex zonotope obstacle with its precomputed facets.
#[derive(Debug, Clone)]
pub struct Obstacle {
    zonotope: Zonotope,
    center: Vector3<f64>,
    gens: Vec<Vector3<f64>>,
    hrep: HalfspaceRep,
    hull: [Interval; 3],
    oriented_box: Option<OrientedBox>,
}

impl Obstacle {
    pub fn new(zonotope: Zonotope) -> Result<Self> {
        let hrep = halfspace_rep(&zonotope)?;
        let gens = generator_columns(&zonotope);
        let c = zonotope.center();
        let h = zonotope.interval_hull();
        Ok(Self {
            center: Vector3::new(c[0], c[1], c[2]),
            oriented_box: OrientedBox::detect(&gens),
            hull: [h[0], h[1], h[2]],
            gens,
            hrep,
            zonotope,
        })
    }

    /// Axis-aligned cube of the given half-width.
    pub fn cube(center: [f64; 3], half_width: f64) -> Result<Self> {
        Self::new(Zonotope::axis_box(&center, &[half_width; 3])?)
    }

    pub fn zonotope(&self) -> &Zonotope {
        &self.zonotope
    }

    pub fn hrep(&self) -> &HalfspaceRep {
        &self.hrep
    }

    pub fn center(&self) -> &Vector3<f64> {
        &self.center
    }

    /// Lower bound on the distance from `p` to the obstacle (its interval hull).
    pub fn hull_distance(&self, p: &Vector3<f64>) -> f64 {
        let mut s = 0.0;
        for r in 0..3 {
            let e = (self.hull[r].lo - p[r]).max(p[r] - self.hull[r].hi).max(0.0);
            s += e * e;
        }
        s.sqrt()
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.signed_distance_grad(p).0
    }

    /// Signed distance and its gradient with respect to `p`.
    pub fn signed_distance_grad(&self, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
        if let Some(b) = &self.oriented_box {
            return b.signed_distance(&(p - self.center));
        }
        let (viol, row) = self.hrep.max_violation(p);
        if viol <= 0.0 {
            return (viol, self.hrep.normals[row]);
        }
        let (_, x) = project_onto_zonotope(&self.center, &self.gens, p);
        let d = p - x;
        let n = d.norm();
        if n == 0.0 {
            (0.0, self.hrep.normals[row])
        } else {
            (n, d / n)
        }
    }

    pub fn sphere_clearance(&self, ball: &Ball) -> f64 {
        self.signed_distance(&ball.center) - ball.radius
    }
}

/// Signed distance from `p` to a 3D zonotope.
pub fn signed_distance_point(z: &Zonotope, p: &Vector3<f64>) -> Result<f64> {
    Ok(Obstacle::new(z.clone())?.signed_distance(p))
}

/// `signed_distance_point(z, ball.center) − ball.radius`.
pub fn sphere_clearance(z: &Zonotope, ball: &Ball) -> Result<f64> {
    Ok(Obstacle::new(z.clone())?.sphere_clearance(ball))
}

/// Closed segment between two points in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment2D {
    pub v1: Vector2<f64>,
    pub v2: Vector2<f64>,
}

/// Distance from `p` to the segment and the clamped projection parameter.
pub fn point_segment_distance(p: &Vector2<f64>, s: &Segment2D) -> (f64, f64) {
    let w = s.v2 - s.v1;
    let ww = w.dot(&w);
    if ww == 0.0 {
        return ((p - s.v1).norm(), 0.0);
    }
    let t_hat = (p - s.v1).dot(&w) / ww;
    let t = t_hat.clamp(0.0, 1.0);
    ((p - (s.v1 + w * t)).norm(), t)
}

/// Vertices of a 2D zonotope in counterclockwise order, starting from the
/// lowest vertex. Parallel generators are merged first.
pub fn vertices_2d(z: &Zonotope) -> Result<Vec<Vector2<f64>>> {
    if z.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: z.dim(),
        });
    }
    let rank = z.rank(1e-12);
    if rank < 2 {
        return Err(Error::Degenerate { rank, dim: 2 });
    }
    let mut gens: Vec<Vector2<f64>> = Vec::new();
    for col in z.generators().column_iter() {
        let mut g = Vector2::new(col[0], col[1]);
        if g.norm() == 0.0 {
            continue;
        }
        if g.y < 0.0 || (g.y == 0.0 && g.x < 0.0) {
            g = -g;
        }
        match gens
            .iter_mut()
            .find(|h| (h.x * g.y - h.y * g.x).abs() <= PARALLEL_TOL * h.norm() * g.norm())
        {
            Some(h) => *h += g,
            None => gens.push(g),
        }
    }
    gens.sort_by(|a, b| a.y.atan2(a.x).partial_cmp(&b.y.atan2(b.x)).unwrap());
    let c = Vector2::new(z.center()[0], z.center()[1]);
    let mut v = c - gens.iter().sum::<Vector2<f64>>();
    let mut out = Vec::with_capacity(2 * gens.len());
    for sign in [2.0, -2.0] {
        for g in &gens {
            out.push(v);
            v += g * sign;
        }
    }
    Ok(out)
}

/// Boundary segments of a polygon given by counterclockwise vertices.
pub fn polygon_segments(vertices: &[Vector2<f64>]) -> Vec<Segment2D> {
    (0..vertices.len())
        .map(|i| Segment2D {
            v1: vertices[i],
            v2: vertices[(i + 1) % vertices.len()],
        })
        .collect()
}

/// Halfspace containment test for a counterclockwise convex polygon.
pub fn polygon_contains(vertices: &[Vector2<f64>], p: &Vector2<f64>) -> bool {
    polygon_segments(vertices).iter().all(|s| {
        let e = s.v2 - s.v1;
        let r = p - s.v1;
        e.x * r.y - e.y * r.x >= 0.0
    })
}

/// Buffered obstacle `⟨c_o, [G_z, G_o]⟩` in the plane.
pub fn buffered_obstacle(ego_generators: &DMatrix<f64>, obstacle: &Zonotope) -> Result<Zonotope> {
    let ego = Zonotope::new(DVector::zeros(2), ego_generators.clone())?;
    ego.minkowski_sum(obstacle)
}

/// Signed distance between the 2D zonotope `⟨c_z, G_z⟩` and a union of 2D
/// zonotope obstacles, evaluated through the buffered obstacles.
pub fn signed_distance_2d(z: &Zonotope, obstacles: &[Zonotope]) -> Result<f64> {
    if z.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: z.dim(),
        });
    }
    let c = Vector2::new(z.center()[0], z.center()[1]);
    let mut best = f64::INFINITY;
    let mut inside = false;
    for o in obstacles {
        let buffered = buffered_obstacle(z.generators(), o)?;
        let verts = vertices_2d(&buffered)?;
        for s in polygon_segments(&verts) {
            best = best.min(point_segment_distance(&c, &s).0);
        }
        inside |= polygon_contains(&verts, &c);
    }
    if obstacles.is_empty() {
        return Err(Error::InvalidArgument("no obstacles".into()));
    }
    Ok(if inside { -best } else { best })
}
