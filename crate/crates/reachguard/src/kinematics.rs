//! Serial revolute chains: robot models, forward kinematics, and forward
//! kinematics lifted to polynomial zonotopes.
//!
//! Frame `j` is reached from frame `j-1` by rotating about `axis_j` by `q_j`
//! and then translating by `offset_j` expressed in the rotated frame:
//!
//! ```text
//! R_j = R_{j-1} · Rot(axis_j, q_j)
//! p_j = p_{j-1} + R_j · offset_j
//! ```
//!
//! The chain carries `n_q + 1` joint spheres: one at the base origin, where
//! the first joint sits, and one at each `p_j`.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::zonotope::{pz_trig, Interval, PolyZonotope};

/// Generator cap applied to every scalar entry after each joint.
pub const DEFAULT_MAX_GENERATORS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub axis: [f64; 3],
    pub offset: [f64; 3],
    pub radius: f64,
    pub q_lim: Interval,
    pub qd_lim: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    #[serde(default)]
    pub name: String,
    pub joints: Vec<Joint>,
    /// Radius of the sphere at the last frame; defaults to the last joint's radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ee_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePose {
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
}

/// Rotation matrix and position of one frame as polynomial zonotopes.
#[derive(Debug, Clone)]
pub struct FramePz {
    /// Row-major 3×3 entries.
    pub rotation: Vec<PolyZonotope>,
    /// 3-vector position.
    pub position: PolyZonotope,
}

impl RobotModel {
    pub fn new(name: impl Into<String>, joints: Vec<Joint>, ee_radius: Option<f64>) -> Result<Self> {
        let model = Self {
            name: name.into(),
            joints,
            ee_radius,
        };
        model.validated()
    }

    fn validated(mut self) -> Result<Self> {
        if self.joints.is_empty() {
            return Err(invalid("robot needs at least one joint"));
        }
        for (j, joint) in self.joints.iter_mut().enumerate() {
            let a = Vector3::from(joint.axis);
            let n = a.norm();
            if !(n > 1e-12) || !n.is_finite() {
                return Err(invalid(format!("joint {j} axis has zero length")));
            }
            joint.axis = (a / n).into();
            if !(joint.radius > 0.0) {
                return Err(invalid(format!("joint {j} radius must be positive")));
            }
            if joint.offset.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("joint {j} offset must be finite")));
            }
        }
        if let Some(r) = self.ee_radius {
            if !(r > 0.0) {
                return Err(invalid("ee_radius must be positive"));
            }
        }
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: RobotModel = serde_json::from_str(text)?;
        m.validated()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Load a built-in model by name, or else a JSON file at that path.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if let Some(m) = Self::builtin(name_or_path) {
            return Ok(m);
        }
        let text = std::fs::read_to_string(Path::new(name_or_path))?;
        Self::from_json(&text)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "planar2" => Some(Self::planar2()),
            "spatial3" => Some(Self::spatial3()),
            "kinova7" => Some(Self::kinova7()),
            _ => None,
        }
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["planar2", "spatial3", "kinova7"]
    }

    /// Two unit links rotating about z.
    pub fn planar2() -> Self {
        let joint = Joint {
            axis: [0.0, 0.0, 1.0],
            offset: [1.0, 0.0, 0.0],
            radius: 0.05,
            q_lim: Interval { lo: -3.0, hi: 3.0 },
            qd_lim: Interval { lo: -2.0, hi: 2.0 },
        };
        Self {
            name: "planar2".into(),
            joints: vec![joint.clone(), joint],
            ee_radius: None,
        }
    }

    /// Yaw joint with a 0.3 m vertical link, then two 0.3 m pitch links.
    pub fn spatial3() -> Self {
        let yaw = Joint {
            axis: [0.0, 0.0, 1.0],
            offset: [0.0, 0.0, 0.3],
            radius: 0.05,
            q_lim: Interval { lo: -2.5, hi: 2.5 },
            qd_lim: Interval { lo: -1.5, hi: 1.5 },
        };
        let pitch = Joint {
            axis: [0.0, 1.0, 0.0],
            offset: [0.3, 0.0, 0.0],
            radius: 0.05,
            q_lim: Interval { lo: -2.5, hi: 2.5 },
            qd_lim: Interval { lo: -1.5, hi: 1.5 },
        };
        Self {
            name: "spatial3".into(),
            joints: vec![yaw, pitch.clone(), pitch],
            ee_radius: None,
        }
    }

    /// Seven alternating yaw/pitch joints with Kinova-like link lengths.
    pub fn kinova7() -> Self {
        let lengths = [0.284, 0.21, 0.21, 0.21, 0.208, 0.106, 0.106];
        let joints = lengths
            .iter()
            .enumerate()
            .map(|(j, len)| Joint {
                axis: if j % 2 == 0 {
                    [0.0, 0.0, 1.0]
                } else {
                    [0.0, 1.0, 0.0]
                },
                offset: [0.0, 0.0, *len],
                radius: if j < 4 { 0.06 } else { 0.05 },
                q_lim: if j % 2 == 0 {
                    Interval { lo: -3.0, hi: 3.0 }
                } else {
                    Interval { lo: -2.2, hi: 2.2 }
                },
                qd_lim: Interval { lo: -1.2, hi: 1.2 },
            })
            .collect();
        Self {
            name: "kinova7".into(),
            joints,
            ee_radius: Some(0.04),
        }
    }

    pub fn n_q(&self) -> usize {
        self.joints.len()
    }

    /// Radii of the `n_q + 1` joint spheres, base first.
    pub fn sphere_radii(&self) -> Vec<f64> {
        let mut r: Vec<f64> = self.joints.iter().map(|j| j.radius).collect();
        r.push(self.ee_radius.unwrap_or(self.joints[self.n_q() - 1].radius));
        r
    }

    pub fn min_radius(&self) -> f64 {
        self.sphere_radii().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Upper bound on the distance from the base to any point of the arm.
    pub fn reach(&self) -> f64 {
        let links: f64 = self
            .joints
            .iter()
            .map(|j| Vector3::from(j.offset).norm())
            .sum();
        links + self.sphere_radii().into_iter().fold(0.0, f64::max)
    }

    fn check_q(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.n_q() {
            return Err(Error::DimensionMismatch {
                expected: self.n_q(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Frames `1..=n_q`.
    pub fn fk(&self, q: &[f64]) -> Result<Vec<FramePose>> {
        self.check_q(q)?;
        let mut rot = Matrix3::identity();
        let mut pos = Vector3::zeros();
        let mut out = Vec::with_capacity(self.n_q());
        for (joint, qj) in self.joints.iter().zip(q) {
            rot *= axis_rotation(&Vector3::from(joint.axis), *qj);
            pos += rot * Vector3::from(joint.offset);
            out.push(FramePose {
                rotation: rot,
                position: pos,
            });
        }
        Ok(out)
    }

    /// Centers of the `n_q + 1` joint spheres, base first.
    pub fn sphere_centers(&self, q: &[f64]) -> Result<Vec<Vector3<f64>>> {
        let mut c = vec![Vector3::zeros()];
        c.extend(self.fk(q)?.into_iter().map(|f| f.position));
        Ok(c)
    }

    /// Forward kinematics over scalar joint-angle polynomial zonotopes.
    pub fn fk_pz(
        &self,
        q_pz: &[PolyZonotope],
        trig_order: usize,
        max_generators: usize,
    ) -> Result<Vec<FramePz>> {
        if q_pz.len() != self.n_q() {
            return Err(Error::DimensionMismatch {
                expected: self.n_q(),
                got: q_pz.len(),
            });
        }
        let mut rot: Vec<PolyZonotope> = (0..9)
            .map(|e| PolyZonotope::scalar(if e % 4 == 0 { 1.0 } else { 0.0 }))
            .collect();
        let mut pos: Vec<PolyZonotope> = (0..3).map(|_| PolyZonotope::scalar(0.0)).collect();
        let mut out = Vec::with_capacity(self.n_q());
        for (joint, q) in self.joints.iter().zip(q_pz) {
            let (cos, sin) = pz_trig(q, trig_order)?;
            let (fixed, c_part, s_part) = rotation_parts(&Vector3::from(joint.axis));
            let mut next = Vec::with_capacity(9);
            for r in 0..3 {
                for col in 0..3 {
                    let row: Vec<&PolyZonotope> = (0..3).map(|l| &rot[3 * r + l]).collect();
                    let combo = |m: &Matrix3<f64>| {
                        let parts: Vec<(f64, &PolyZonotope)> =
                            (0..3).map(|l| (m[(l, col)], row[l])).collect();
                        PolyZonotope::linear_combination(1, &parts)
                    };
                    let (k_sum, c_sum, s_sum) = (combo(&fixed)?, combo(&c_part)?, combo(&s_part)?);
                    let entry = k_sum.add(&c_sum.mul(&cos)?)?.add(&s_sum.mul(&sin)?)?;
                    next.push(entry.reduce(max_generators));
                }
            }
            rot = next;
            let off = joint.offset;
            for (r, p) in pos.iter_mut().enumerate() {
                let mut parts = vec![(1.0, &*p)];
                parts.extend((0..3).map(|l| (off[l], &rot[3 * r + l])));
                let step = PolyZonotope::linear_combination(1, &parts)?;
                *p = step.reduce(max_generators);
            }
            out.push(FramePz {
                rotation: rot.clone(),
                position: PolyZonotope::stack(&pos)?,
            });
        }
        Ok(out)
    }
}

/// `Rot(a, θ) = a aᵀ + cos θ (I − a aᵀ) + sin θ [a]×`.
pub fn axis_rotation(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let (fixed, c, s) = rotation_parts(axis);
    let (sn, cs) = angle.sin_cos();
    fixed + c * cs + s * sn
}

fn rotation_parts(axis: &Vector3<f64>) -> (Matrix3<f64>, Matrix3<f64>, Matrix3<f64>) {
    let aat = axis * axis.transpose();
    let cross = Matrix3::new(
        0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0,
    );
    (aat, Matrix3::identity() - aat, cross)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{k_assignment, TrajectoryFamily, TimePartition};
    use nalgebra::{Matrix4, Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn homogeneous_chain(model: &RobotModel, q: &[f64]) -> Vec<Vector3<f64>> {
        let mut t = Matrix4::identity();
        let mut out = Vec::new();
        for (joint, qj) in model.joints.iter().zip(q) {
            let r = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::from(joint.axis)), *qj);
            let mut rot = Matrix4::identity();
            rot.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
            let mut tr = Matrix4::identity();
            tr.fixed_view_mut::<3, 1>(0, 3)
                .copy_from(&Vector3::from(joint.offset));
            t = t * rot * tr;
            out.push(t.fixed_view::<3, 1>(0, 3).into_owned());
        }
        out
    }

    #[test]
    fn zero_configuration_sums_offsets() {
        let m = RobotModel::spatial3();
        let f = m.fk(&[0.0; 3]).unwrap();
        assert!((f[2].position - Vector3::new(0.6, 0.0, 0.3)).norm() < 1e-15);
    }

    #[test]
    fn planar_quarter_turn() {
        let m = RobotModel::planar2();
        let f = m.fk(&[FRAC_PI_2, 0.0]).unwrap();
        assert!((f[1].position - Vector3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn matches_homogeneous_matrix_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [RobotModel::spatial3(), RobotModel::kinova7()] {
            for _ in 0..100 {
                let q: Vec<f64> = (0..m.n_q()).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let f = m.fk(&q).unwrap();
                let oracle = homogeneous_chain(&m, &q);
                for (a, b) in f.iter().zip(&oracle) {
                    assert!((a.position - b).norm() < 1e-12);
                    let r = a.rotation;
                    assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-10);
                    assert!((r.determinant() - 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let m = RobotModel::spatial3();
        let back = RobotModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"joints":[{"axis":[0,0,0],"offset":[1,0,0],"radius":0.1,"q_lim":[-1,1],"qd_lim":[-1,1]}]}"#;
        assert!(RobotModel::from_json(bad).is_err());
        let unnormalized = r#"{"joints":[{"axis":[0,0,2],"offset":[1,0,0],"radius":0.1,"q_lim":[-1,1],"qd_lim":[-1,1]}]}"#;
        assert_eq!(RobotModel::from_json(unnormalized).unwrap().joints[0].axis, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_angles_collapse_to_fk() {
        let m = RobotModel::spatial3();
        let q = [0.3, -0.7, 1.1];
        let qpz: Vec<_> = q.iter().map(|v| PolyZonotope::scalar(*v)).collect();
        let frames = m.fk_pz(&qpz, 2, 200).unwrap();
        let exact = m.fk(&q).unwrap();
        for (fp, fe) in frames.iter().zip(&exact) {
            for (axis, b) in fp.position.interval_bound().iter().enumerate() {
                assert!(b.width() < 1e-14);
                assert!((b.mid() - fe.position[axis]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fk_pz_contains_sampled_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = RobotModel::spatial3();
        let fam = TrajectoryFamily::new(
            vec![0.2, -0.4, 0.9],
            vec![0.5, -0.3, 0.1],
            0.5,
            1.0,
            vec![std::f64::consts::PI / 6.0; 3],
        )
        .unwrap();
        let part = TimePartition::new(40, 0.025, 1.0).unwrap();
        for i in [0, 13, 20, 39] {
            let (q, _) = fam.q_pz(&part, i).unwrap();
            let frames = m.fk_pz(&q, 2, 200).unwrap();
            let (lo, hi) = part.span(i);
            for _ in 0..250 {
                let k: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                let t = rng.gen_range(lo..=hi);
                let (qt, _) = fam.q_of_t(t, &k).unwrap();
                let exact = m.fk(&qt).unwrap();
                for (fp, fe) in frames.iter().zip(&exact) {
                    let b = fp.position.slice(&k_assignment(&k)).unwrap().interval_bound();
                    for axis in 0..3 {
                        assert!(b[axis].contains_tol(fe.position[axis], 1e-9));
                    }
                    for e in 0..9 {
                        let br = fp.rotation[e].slice(&k_assignment(&k)).unwrap().interval_bound();
                        assert!(br[0].contains_tol(fe.rotation[(e / 3, e % 3)], 1e-9));
                    }
                }
            }
        }
    }

    #[test]
    fn position_uncertainty_grows_down_the_chain() {
        let m = RobotModel::spatial3();
        let fam = TrajectoryFamily::new(
            vec![0.0; 3],
            vec![0.4; 3],
            0.5,
            1.0,
            vec![0.5; 3],
        )
        .unwrap();
        let part = TimePartition::new(40, 0.025, 1.0).unwrap();
        let (q, _) = fam.q_pz(&part, 10).unwrap();
        let frames = m.fk_pz(&q, 2, 200).unwrap();
        let widths: Vec<f64> = frames
            .iter()
            .map(|f| f.position.interval_bound().iter().map(|b| b.width()).sum())
            .collect();
        assert!(widths.windows(2).all(|w| w[0] < w[1]), "{widths:?}");
    }
}
