//! Learned joint-sphere occupancy: center, radius and center-gradient networks.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{encode_input, SfoSample, TimeEncoding};
use super::mlp::{Activation, EpochStats, Mlp, Normalizer, TrainConfig};
use crate::error::{Error, Result};
use crate::kinematics::RobotModel;
use crate::occupancy::Ball;
use crate::trajectory::TrajectoryConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub width: usize,
    pub center_hidden: usize,
    pub radius_hidden: usize,
    pub grad_hidden: usize,
    pub encoding: TimeEncoding,
    pub train: TrainConfig,
    pub train_grad_net: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            width: 128,
            center_hidden: 3,
            radius_hidden: 3,
            grad_hidden: 4,
            encoding: TimeEncoding::Scalar,
            train: TrainConfig::default(),
            train_grad_net: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SurrogateMeta {
    n_q: usize,
    n_t: usize,
    encoding: TimeEncoding,
    base_radius: f64,
    has_grad_net: bool,
    grad_scale: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NeuralSfo {
    pub center_net: Mlp,
    pub radius_net: Mlp,
    pub grad_net: Option<Mlp>,
    n_q: usize,
    n_t: usize,
    encoding: TimeEncoding,
    base_radius: f64,
    grad_scale: Vec<f64>,
}

/// Predicted spheres with their derivatives with respect to `k`.
#[derive(Debug, Clone)]
pub struct SphereJacobians {
    /// Base first.
    pub balls: Vec<Ball>,
    pub centers: Vec<DMatrix<f64>>,
    pub radii: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    pub center: Vec<EpochStats>,
    pub radius: Vec<EpochStats>,
    pub grad: Vec<EpochStats>,
}

fn hidden_widths(n_in: usize, width: usize, hidden: usize, n_out: usize) -> Vec<usize> {
    let mut w = vec![n_in];
    w.extend(std::iter::repeat(width).take(hidden));
    w.push(n_out);
    w
}

/// `∂q/∂k` at the midpoint of every interval; the gradient network predicts
/// center Jacobians divided by this factor.
pub fn interval_sensitivity(traj: &TrajectoryConfig) -> Vec<f64> {
    let (tp, tf) = (traj.t_plan, traj.t_final);
    (0..traj.n_t)
        .map(|i| {
            let t = (i as f64 + 0.5) * tf / traj.n_t as f64;
            let w = if t < tp {
                0.5 * t * t
            } else {
                let tau = t - tp;
                0.5 * tp * tp + tp * (tau - tau * tau / (2.0 * (tf - tp)))
            };
            traj.k_scale * w
        })
        .collect()
}

fn split_targets(data: &[SfoSample], n_q: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    data.iter()
        .map(|s| {
            let mut c = Vec::with_capacity(3 * n_q);
            let mut r = Vec::with_capacity(n_q);
            for j in 1..=n_q {
                c.extend_from_slice(&s.y[4 * j..4 * j + 3]);
                r.push(s.y[4 * j + 3]);
            }
            (c, r)
        })
        .unzip()
}

impl NeuralSfo {
    /// Untrained networks sized for `model`.
    pub fn new(model: &RobotModel, traj: &TrajectoryConfig, cfg: &SurrogateConfig) -> Result<Self> {
        let n_q = model.n_q();
        let n_in = 3 * n_q + cfg.encoding.width(traj.n_t);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let center_net = Mlp::new(&hidden_widths(n_in, cfg.width, cfg.center_hidden, 3 * n_q), Activation::Gelu, &mut rng)?;
        let radius_net = Mlp::new(&hidden_widths(n_in, cfg.width, cfg.radius_hidden, n_q), Activation::Relu, &mut rng)?;
        let grad_net = if cfg.train_grad_net {
            Some(Mlp::new(
                &hidden_widths(n_in, cfg.width, cfg.grad_hidden, 3 * n_q * n_q),
                Activation::Gelu,
                &mut rng,
            )?)
        } else {
            None
        };
        Ok(Self {
            center_net,
            radius_net,
            grad_net,
            n_q,
            n_t: traj.n_t,
            encoding: cfg.encoding,
            base_radius: model.sphere_radii()[0],
            grad_scale: interval_sensitivity(traj),
        })
    }

    /// Fit normalizers on `train` and run AdamW on every network.
    pub fn fit(
        &mut self,
        train: &[SfoSample],
        val: Option<&[SfoSample]>,
        cfg: &TrainConfig,
    ) -> Result<TrainingReport> {
        let n_q = self.n_q;
        let xs: Vec<Vec<f64>> = train.iter().map(|s| s.x.clone()).collect();
        let (cs, rs) = split_targets(train, n_q);
        let scaled = |s: &SfoSample| -> Vec<f64> {
            let f = self.grad_scale[s.interval];
            s.g.iter().map(|v| v / f).collect()
        };
        let gs: Vec<Vec<f64>> = train.iter().map(scaled).collect();
        type Rows = Vec<Vec<f64>>;
        let (vx, vc, vr, vg): (Rows, Rows, Rows, Rows) = match val {
            Some(v) => {
                let (c, r) = split_targets(v, n_q);
                let x = v.iter().map(|s| s.x.clone()).collect();
                let g = v.iter().map(scaled).collect();
                (x, c, r, g)
            }
            None => Default::default(),
        };
        let in_norm = Normalizer::fit(&xs);
        let fit_one = |net: &mut Mlp, ys: &[Vec<f64>], val_ys: &[Vec<f64>]| {
            net.input_norm = in_norm.clone();
            net.output_norm = Normalizer::fit(ys);
            let v = val.map(|_| (vx.as_slice(), val_ys));
            net.train(&xs, ys, v, cfg)
        };
        let mut report = TrainingReport {
            center: fit_one(&mut self.center_net, &cs, &vc)?,
            radius: fit_one(&mut self.radius_net, &rs, &vr)?,
            grad: Vec::new(),
        };
        if let Some(g) = self.grad_net.as_mut() {
            report.grad = fit_one(g, &gs, &vg)?;
        }
        Ok(report)
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn encoding(&self) -> TimeEncoding {
        self.encoding
    }

    pub fn input(&self, q0: &[f64], qd0: &[f64], k: &[f64], i: usize) -> Vec<f64> {
        encode_input(q0, qd0, k, i, self.n_t, self.encoding)
    }

    /// Predicted joint spheres, base first. The base sphere is the fixed
    /// analytic one.
    pub fn predict_spheres(&self, x: &[f64]) -> Result<Vec<Ball>> {
        let c = self.center_net.forward(x)?;
        let r = self.radius_net.forward(x)?;
        Ok(self.decode(&c, &r))
    }

    fn decode(&self, c: &[f64], r: &[f64]) -> Vec<Ball> {
        let mut out = Vec::with_capacity(self.n_q + 1);
        out.push(Ball::new(Vector3::zeros(), self.base_radius));
        for j in 0..self.n_q {
            out.push(Ball::new(Vector3::new(c[3 * j], c[3 * j + 1], c[3 * j + 2]), r[j]));
        }
        out
    }

    /// Per-joint `3 × n_q` center Jacobians from the gradient network.
    pub fn predict_center_grad(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let net = self
            .grad_net
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("surrogate has no gradient network".into()))?;
        let f = self.grad_scale[self.interval_of(x)?];
        let g: Vec<f64> = net.forward(x)?.into_iter().map(|v| v * f).collect();
        Ok(decode_grad(&g, self.n_q))
    }

    /// Factor that converts gradient-network outputs for interval `i` into
    /// center Jacobians.
    pub fn grad_scale(&self, i: usize) -> f64 {
        self.grad_scale[i]
    }

    /// Interval index encoded in an input vector.
    pub fn interval_of(&self, x: &[f64]) -> Result<usize> {
        let tail = x.get(3 * self.n_q..).unwrap_or(&[]);
        let i = match self.encoding {
            TimeEncoding::Scalar => {
                let v = tail.first().copied().unwrap_or(f64::NAN);
                (v * self.n_t as f64 - 0.5).round()
            }
            TimeEncoding::OneHot => tail
                .iter()
                .position(|v| *v == 1.0)
                .map(|p| p as f64)
                .unwrap_or(f64::NAN),
        };
        if !(i >= 0.0 && i < self.n_t as f64) {
            return Err(Error::InvalidArgument("input does not encode a valid interval".into()));
        }
        Ok(i as usize)
    }

    /// Spheres, `3 × n_q` center Jacobians and `1 × n_q` radius Jacobians of
    /// the predicted joints, from differentiating both networks with respect
    /// to their `k` inputs.
    pub fn spheres_with_input_jacobian(&self, x: &[f64]) -> Result<SphereJacobians> {
        let cols: Vec<usize> = (2 * self.n_q..3 * self.n_q).collect();
        let (c, jc) = self.center_net.forward_with_input_jacobian(x, &cols)?;
        let (r, jr) = self.radius_net.forward_with_input_jacobian(x, &cols)?;
        Ok(SphereJacobians {
            balls: self.decode(&c, &r),
            centers: (0..self.n_q).map(|j| jc.rows(3 * j, 3).into_owned()).collect(),
            radii: (0..self.n_q).map(|j| jr.row(j).iter().copied().collect()).collect(),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = SurrogateMeta {
            n_q: self.n_q,
            n_t: self.n_t,
            encoding: self.encoding,
            base_radius: self.base_radius,
            has_grad_net: self.grad_net.is_some(),
            grad_scale: self.grad_scale.clone(),
        };
        std::fs::write(dir.join("surrogate.json"), serde_json::to_string_pretty(&meta)?)?;
        self.center_net.write_checkpoint(BufWriter::new(File::create(dir.join("center.rgnn"))?))?;
        self.radius_net.write_checkpoint(BufWriter::new(File::create(dir.join("radius.rgnn"))?))?;
        if let Some(g) = &self.grad_net {
            g.write_checkpoint(BufWriter::new(File::create(dir.join("grad.rgnn"))?))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: SurrogateMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("surrogate.json"))?)?;
        let read = |name: &str| Mlp::read_checkpoint(BufReader::new(File::open(dir.join(name))?));
        let center_net = read("center.rgnn")?;
        let radius_net = read("radius.rgnn")?;
        let grad_net = if meta.has_grad_net {
            Some(read("grad.rgnn")?)
        } else {
            None
        };
        let n_in = 3 * meta.n_q + meta.encoding.width(meta.n_t);
        for (net, out) in [(&center_net, 3 * meta.n_q), (&radius_net, meta.n_q)] {
            if net.in_dim() != n_in || net.out_dim() != out {
                return Err(Error::Format("network shapes do not match surrogate metadata".into()));
            }
        }
        Ok(Self {
            center_net,
            radius_net,
            grad_net,
            n_q: meta.n_q,
            n_t: meta.n_t,
            encoding: meta.encoding,
            base_radius: meta.base_radius,
            grad_scale: meta.grad_scale,
        })
    }
}

/// Split a flat gradient vector into per-joint row-major `3 × n_q` blocks.
pub fn decode_grad(g: &[f64], n_q: usize) -> Vec<DMatrix<f64>> {
    (0..n_q)
        .map(|j| DMatrix::from_row_slice(3, n_q, &g[3 * n_q * j..3 * n_q * (j + 1)]))
        .collect()
}

/// Relative Frobenius error of each predicted center Jacobian against the
/// exact one, over every non-degenerate `(sample, joint)` pair.
pub fn grad_relative_errors(sfo: &NeuralSfo, data: &[SfoSample]) -> Result<Vec<f64>> {
    let n_q = sfo.n_q();
    let mut errs = Vec::new();
    for s in data {
        let pred = sfo.predict_center_grad(&s.x)?;
        let exact = decode_grad(&s.g, n_q);
        for (p, e) in pred.iter().zip(&exact) {
            let scale = e.norm();
            if scale > 1e-9 {
                errs.push((p - e).norm() / scale);
            }
        }
    }
    Ok(errs)
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::dataset::gen_dataset;

    fn small_cfg() -> SurrogateConfig {
        SurrogateConfig {
            width: 16,
            center_hidden: 2,
            radius_hidden: 2,
            grad_hidden: 2,
            ..SurrogateConfig::default()
        }
    }

    #[test]
    fn zero_weight_network_predicts_output_bias() {
        let model = RobotModel::planar2();
        let traj = TrajectoryConfig::default();
        let mut sfo = NeuralSfo::new(&model, &traj, &small_cfg()).unwrap();
        let zero = |net: &Mlp| {
            let w = net.weights().iter().map(|m| m.map(|_| 0.0)).collect();
            let b = net.biases().iter().map(|v| v.map(|_| 0.0)).collect();
            Mlp::from_layers(w, b, net.activations().to_vec()).unwrap()
        };
        sfo.center_net = zero(&sfo.center_net);
        sfo.radius_net = zero(&sfo.radius_net);
        sfo.center_net.set_output_bias(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        sfo.radius_net.set_output_bias(&[0.2, 0.3]);
        let x = sfo.input(&[0.1, 0.2], &[0.0, 0.0], &[0.5, -0.5], 3);
        let balls = sfo.predict_spheres(&x).unwrap();
        assert_eq!(balls.len(), 3);
        assert_eq!(balls[0].center, Vector3::zeros());
        assert_eq!(balls[0].radius, model.sphere_radii()[0]);
        assert_eq!(balls[1].center, Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(balls[2].center, Vector3::new(4.0, 5.0, 6.0));
        assert_eq!((balls[1].radius, balls[2].radius), (0.2, 0.3));
    }

    #[test]
    fn gradient_shapes() {
        let model = RobotModel::spatial3();
        let traj = TrajectoryConfig::default();
        let sfo = NeuralSfo::new(&model, &traj, &small_cfg()).unwrap();
        assert_eq!(sfo.grad_net.as_ref().unwrap().out_dim(), 27);
        let x = sfo.input(&[0.0; 3], &[0.0; 3], &[0.0; 3], 0);
        let g = sfo.predict_center_grad(&x).unwrap();
        assert_eq!(g.len(), 3);
        assert!(g.iter().all(|m| m.shape() == (3, 3)));
        let jac = sfo.spheres_with_input_jacobian(&x).unwrap();
        assert!(jac.centers.iter().all(|m| m.shape() == (3, 3)));
        assert!(jac.radii.iter().all(|r| r.len() == 3));
    }

    #[test]
    fn exact_gradient_of_first_joint_ignores_later_parameters() {
        let model = RobotModel::planar2();
        let traj = TrajectoryConfig::default();
        let data = gen_dataset(&model, &traj, TimeEncoding::Scalar, 4, 1).unwrap();
        for s in &data {
            let g = decode_grad(&s.g, 2);
            assert_eq!(g[0][(0, 1)], 0.0);
            assert_eq!(g[0][(1, 1)], 0.0);
            assert_eq!(g[0].row(2).norm(), 0.0);
        }
    }

    #[test]
    fn overfit_toy_recovers_training_centers() {
        let model = RobotModel::planar2();
        let traj = TrajectoryConfig::default();
        let data = gen_dataset(&model, &traj, TimeEncoding::Scalar, 1, 4).unwrap();
        let cfg = SurrogateConfig {
            width: 32,
            train_grad_net: false,
            ..small_cfg()
        };
        let mut sfo = NeuralSfo::new(&model, &traj, &cfg).unwrap();
        let x = to_columns_one(&data[0].x);
        let (c, _) = split_targets(&data, 2);
        let y = to_columns_one(&c[0]);
        let tc = TrainConfig {
            lr: 1e-3,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mse = sfo.center_net.fit_steps(&x, &y, 2000, &tc);
        assert!(mse < 1e-8, "{mse}");
        let balls = sfo.predict_spheres(&data[0].x).unwrap();
        for j in 1..3 {
            let truth = Vector3::new(data[0].y[4 * j], data[0].y[4 * j + 1], data[0].y[4 * j + 2]);
            assert!((balls[j].center - truth).norm() < 1e-3);
        }
    }

    fn to_columns_one(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn save_and_load() {
        let model = RobotModel::planar2();
        let traj = TrajectoryConfig::default();
        let sfo = NeuralSfo::new(&model, &traj, &small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        sfo.save(dir.path()).unwrap();
        let back = NeuralSfo::load(dir.path()).unwrap();
        assert_eq!(back.center_net, sfo.center_net);
        assert_eq!(back.grad_net, sfo.grad_net);
        let x = sfo.input(&[0.3, 0.1], &[0.2, 0.0], &[0.1, 0.9], 7);
        assert_eq!(back.predict_spheres(&x).unwrap(), sfo.predict_spheres(&x).unwrap());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
