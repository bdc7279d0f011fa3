//! Dense feedforward networks trained with AdamW on mean squared error.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{invalid, Error, Result};

const CHECKPOINT_MAGIC: &[u8; 4] = b"RGNN";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Gelu,
    Identity,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Gelu => 1,
            Activation::Identity => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Gelu),
            2 => Ok(Activation::Identity),
            _ => Err(Error::Format(format!("unknown activation code {c}"))),
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Gelu => 0.5 * z * (1.0 + erf(z * std::f64::consts::FRAC_1_SQRT_2)),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + erf(z * std::f64::consts::FRAC_1_SQRT_2));
                let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                cdf + z * pdf
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Affine input/output scaling stored with the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Per-column mean and standard deviation; near-constant columns keep scale 1.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-9 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }
}

/// Multilayer perceptron with per-layer activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    activations: Vec<Activation>,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub eps: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            betas: (0.9, 0.999),
            weight_decay: 1e-4,
            eps: 1e-8,
            batch: 256,
            epochs: 40,
            seed: 0,
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

struct Trace {
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
}

impl Mlp {
    /// He-style random initialization. `hidden_activation` is used for every
    /// hidden layer; the output layer is linear.
    pub fn new(
        widths: &[usize],
        hidden_activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|w| *w == 0) {
            return Err(invalid("an MLP needs at least input and output widths"));
        }
        let n_layers = widths.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        let mut activations = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-bound..bound)));
            biases.push(DVector::zeros(fan_out));
            activations.push(if l + 1 == n_layers {
                Activation::Identity
            } else {
                hidden_activation
            });
        }
        Ok(Self {
            input_norm: Normalizer::identity(widths[0]),
            output_norm: Normalizer::identity(widths[n_layers]),
            weights,
            biases,
            activations,
        })
    }

    /// Network from explicit layers, with identity normalization.
    pub fn from_layers(
        weights: Vec<DMatrix<f64>>,
        biases: Vec<DVector<f64>>,
        activations: Vec<Activation>,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() || weights.len() != activations.len() {
            return Err(invalid("layer lists must be nonempty and equally long"));
        }
        for l in 0..weights.len() {
            if biases[l].len() != weights[l].nrows() {
                return Err(Error::DimensionMismatch {
                    expected: weights[l].nrows(),
                    got: biases[l].len(),
                });
            }
            if l > 0 && weights[l].ncols() != weights[l - 1].nrows() {
                return Err(Error::DimensionMismatch {
                    expected: weights[l - 1].nrows(),
                    got: weights[l].ncols(),
                });
            }
        }
        let finite = weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(invalid("weights must be finite"));
        }
        let (i, o) = (weights[0].ncols(), weights[weights.len() - 1].nrows());
        Ok(Self {
            weights,
            biases,
            activations,
            input_norm: Normalizer::identity(i),
            output_norm: Normalizer::identity(o),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights[self.weights.len() - 1].nrows()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.in_dim()];
        w.extend(self.weights.iter().map(|m| m.nrows()));
        w
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    /// Set the output bias of the last layer (in normalized units).
    pub fn set_output_bias(&mut self, b: &[f64]) {
        let last = self.biases.len() - 1;
        self.biases[last] = DVector::from_column_slice(b);
    }

    fn normalize_inputs(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (r, mut row) in out.row_iter_mut().enumerate() {
            let (m, s) = (self.input_norm.mean[r], self.input_norm.scale[r]);
            row.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        out
    }

    fn forward_raw(&self, x: DMatrix<f64>, trace: Option<&mut Trace>) -> DMatrix<f64> {
        let mut a = x;
        let mut tr = trace;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * &a;
            for mut col in z.column_iter_mut() {
                col += b;
            }
            let act = self.activations[l];
            let next = z.map(|v| act.apply(v));
            if let Some(t) = tr.as_deref_mut() {
                t.inputs.push(a);
                t.pre.push(z);
            }
            a = next;
        }
        a
    }

    /// Batched forward pass; columns are samples, outputs in target units.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = self.forward_raw(self.normalize_inputs(x), None);
        for (r, mut row) in y.row_iter_mut().enumerate() {
            let (m, s) = (self.output_norm.mean[r], self.output_norm.scale[r]);
            row.iter_mut().for_each(|v| *v = *v * s + m);
        }
        y
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim(),
                got: x.len(),
            });
        }
        let y = self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x));
        Ok(y.column(0).iter().copied().collect())
    }

    /// Output and its Jacobian with respect to the selected input coordinates.
    pub fn forward_with_input_jacobian(&self, x: &[f64], cols: &[usize]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        if x.len() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim(),
                got: x.len(),
            });
        }
        let mut a = DVector::from_fn(x.len(), |r, _| (x[r] - self.input_norm.mean[r]) / self.input_norm.scale[r]);
        let mut tangent = DMatrix::from_fn(x.len(), cols.len(), |r, c| {
            if cols[c] == r {
                1.0 / self.input_norm.scale[r]
            } else {
                0.0
            }
        });
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = w * &a + b;
            let act = self.activations[l];
            let d = z.map(|v| act.derivative(v));
            tangent = w * tangent;
            for (r, mut row) in tangent.row_iter_mut().enumerate() {
                row *= d[r];
            }
            a = z.map(|v| act.apply(v));
        }
        let y = (0..a.len())
            .map(|r| a[r] * self.output_norm.scale[r] + self.output_norm.mean[r])
            .collect();
        for (r, mut row) in tangent.row_iter_mut().enumerate() {
            row *= self.output_norm.scale[r];
        }
        Ok((y, tangent))
    }

    /// Mean squared error (normalized output units) and parameter gradients
    /// for a batch of inputs and targets (columns are samples).
    pub fn loss_and_grad(
        &self,
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
    ) -> (f64, Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
        let xn = self.normalize_inputs(x);
        let mut yn = y.clone();
        for (r, mut row) in yn.row_iter_mut().enumerate() {
            let (m, s) = (self.output_norm.mean[r], self.output_norm.scale[r]);
            row.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        let mut trace = Trace {
            inputs: Vec::with_capacity(self.weights.len()),
            pre: Vec::with_capacity(self.weights.len()),
        };
        let out = self.forward_raw(xn, Some(&mut trace));
        let count = (out.nrows() * out.ncols()) as f64;
        let diff = &out - &yn;
        let loss = diff.norm_squared() / count;
        let mut delta = diff * (2.0 / count);
        let n_layers = self.weights.len();
        let mut gw = vec![DMatrix::zeros(0, 0); n_layers];
        let mut gb = vec![DVector::zeros(0); n_layers];
        for l in (0..n_layers).rev() {
            let act = self.activations[l];
            if act != Activation::Identity {
                delta.zip_apply(&trace.pre[l], |d, z| *d *= act.derivative(z));
            }
            gw[l] = &delta * trace.inputs[l].transpose();
            gb[l] = delta.column_sum();
            if l > 0 {
                delta = self.weights[l].transpose() * &delta;
            }
        }
        (loss, gw, gb)
    }

    pub fn mse(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        self.loss_and_grad(x, y).0
    }

    /// Train with AdamW on the given rows. Returns per-epoch statistics.
    pub fn train(
        &mut self,
        x: &[Vec<f64>],
        y: &[Vec<f64>],
        val: Option<(&[Vec<f64>], &[Vec<f64>])>,
        cfg: &TrainConfig,
    ) -> Result<Vec<EpochStats>> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if !(cfg.lr > 0.0) || cfg.batch == 0 {
            return Err(invalid("learning rate and batch size must be positive"));
        }
        let mut stats = Vec::with_capacity(cfg.epochs);
        if cfg.epochs == 0 || x.is_empty() {
            return Ok(stats);
        }
        let val_mats = val.map(|(vx, vy)| (to_columns(vx), to_columns(vy)));
        let mut opt = AdamW::new(self, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..x.len()).collect();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(cfg.batch) {
                let bx = DMatrix::from_fn(self.in_dim(), chunk.len(), |r, c| x[chunk[c]][r]);
                let by = DMatrix::from_fn(self.out_dim(), chunk.len(), |r, c| y[chunk[c]][r]);
                let (loss, gw, gb) = self.loss_and_grad(&bx, &by);
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!(
                        "loss became {loss} in epoch {epoch}; lower the learning rate"
                    )));
                }
                total += loss * chunk.len() as f64;
                opt.step(self, &gw, &gb);
            }
            let val_mse = val_mats.as_ref().map(|(vx, vy)| self.mse(vx, vy));
            stats.push(EpochStats {
                epoch,
                train_mse: total / x.len() as f64,
                val_mse,
            });
        }
        Ok(stats)
    }

    /// Train on one fixed batch for a number of optimizer steps; returns the final loss.
    pub fn fit_steps(&mut self, x: &DMatrix<f64>, y: &DMatrix<f64>, steps: usize, cfg: &TrainConfig) -> f64 {
        let mut opt = AdamW::new(self, cfg);
        for _ in 0..steps {
            let (_, gw, gb) = self.loss_and_grad(x, y);
            opt.step(self, &gw, &gb);
        }
        self.mse(x, y)
    }

    pub fn write_checkpoint(&self, mut w: impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let widths = self.widths();
        w.write_all(&(widths.len() as u32).to_le_bytes())?;
        for v in &widths {
            w.write_all(&(*v as u32).to_le_bytes())?;
        }
        for a in &self.activations {
            w.write_all(&[a.code()])?;
        }
        let mut put = |vals: &mut dyn Iterator<Item = f64>| -> Result<()> {
            for v in vals {
                w.write_all(&v.to_le_bytes())?;
            }
            Ok(())
        };
        for (wm, b) in self.weights.iter().zip(&self.biases) {
            put(&mut (0..wm.nrows()).flat_map(|r| (0..wm.ncols()).map(move |c| (r, c))).map(|(r, c)| wm[(r, c)]))?;
            put(&mut b.iter().copied())?;
        }
        for n in [&self.input_norm, &self.output_norm] {
            put(&mut n.mean.iter().copied())?;
            put(&mut n.scale.iter().copied())?;
        }
        Ok(())
    }

    pub fn read_checkpoint(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a network checkpoint".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        if !(2..=1024).contains(&n) {
            return Err(Error::Format("bad layer count".into()));
        }
        let widths: Vec<usize> = (0..n).map(|_| read_u32(&mut r).map(|v| v as usize)).collect::<Result<_>>()?;
        let mut activations = Vec::with_capacity(n - 1);
        for _ in 0..n - 1 {
            let mut b = [0u8; 1];
            r.read_exact(&mut b)?;
            activations.push(Activation::from_code(b[0])?);
        }
        let mut weights = Vec::with_capacity(n - 1);
        let mut biases = Vec::with_capacity(n - 1);
        for l in 0..n - 1 {
            let vals = read_f64s(&mut r, widths[l + 1] * widths[l])?;
            weights.push(DMatrix::from_row_slice(widths[l + 1], widths[l], &vals));
            biases.push(DVector::from_vec(read_f64s(&mut r, widths[l + 1])?));
        }
        let mut net = Mlp::from_layers(weights, biases, activations)?;
        net.input_norm = Normalizer {
            mean: read_f64s(&mut r, widths[0])?,
            scale: read_f64s(&mut r, widths[0])?,
        };
        net.output_norm = Normalizer {
            mean: read_f64s(&mut r, widths[n - 1])?,
            scale: read_f64s(&mut r, widths[n - 1])?,
        };
        Ok(net)
    }

    /// Visit every parameter mutably, weights before biases per layer.
    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Stack rows into a matrix whose columns are samples.
pub fn to_columns(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let dim = rows.first().map(Vec::len).unwrap_or(0);
    DMatrix::from_fn(dim, rows.len(), |r, c| rows[c][r])
}

struct AdamW {
    cfg: TrainConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    fn new(net: &Mlp, cfg: &TrainConfig) -> Self {
        let n = net.n_params();
        Self {
            cfg: *cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Mlp, gw: &[DMatrix<f64>], gb: &[DVector<f64>]) {
        self.t += 1;
        let (b1, b2) = self.cfg.betas;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let grads = gw.iter().zip(gb).flat_map(|(w, b)| w.iter().chain(b.iter()));
        let (lr, wd, eps) = (self.cfg.lr, self.cfg.weight_decay, self.cfg.eps);
        for (((p, g), m), v) in net
            .params_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *p -= lr * wd * *p;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

/// Largest relative error between analytic parameter gradients and central
/// differences with step `1e-5`, on a random batch. ReLU networks re-draw the
/// batch until no pre-activation lies within `1e-4` of a kink.
pub fn grad_check(net: &Mlp, rng: &mut impl Rng) -> f64 {
    let batch = 4;
    let (x, y) = loop {
        let x = DMatrix::from_fn(net.in_dim(), batch, |_, _| rng.gen_range(-1.0..1.0));
        let y = DMatrix::from_fn(net.out_dim(), batch, |_, _| rng.gen_range(-1.0..1.0));
        if !net.activations.contains(&Activation::Relu) || min_abs_preactivation(net, &x) >= 1e-4 {
            break (x, y);
        }
    };
    let (_, gw, gb) = net.loss_and_grad(&x, &y);
    let analytic: Vec<f64> = gw
        .iter()
        .zip(&gb)
        .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
        .collect();
    let h = 1e-5;
    let xn = net.normalize_inputs(&x);
    let mut yn = y.clone();
    for (r, mut row) in yn.row_iter_mut().enumerate() {
        let (m, s) = (net.output_norm.mean[r], net.output_norm.scale[r]);
        row.iter_mut().for_each(|v| *v = (*v - m) / s);
    }
    let count = (yn.nrows() * yn.ncols()) as f64;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (idx, a) in analytic.iter().enumerate() {
        let orig = *probe.params_mut().nth(idx).unwrap();
        let (up, down) = (orig + h, orig - h);
        *probe.params_mut().nth(idx).unwrap() = up;
        let op = probe.forward_raw(xn.clone(), None);
        *probe.params_mut().nth(idx).unwrap() = down;
        let om = probe.forward_raw(xn.clone(), None);
        *probe.params_mut().nth(idx).unwrap() = orig;
        let loss_diff: f64 = op
            .iter()
            .zip(om.iter())
            .zip(yn.iter())
            .map(|((p, m), t)| (p - m) * (p + m - 2.0 * t))
            .sum::<f64>()
            / count;
        let numeric = loss_diff / (up - down);
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

fn min_abs_preactivation(net: &Mlp, x: &DMatrix<f64>) -> f64 {
    let mut trace = Trace {
        inputs: Vec::new(),
        pre: Vec::new(),
    };
    net.forward_raw(net.normalize_inputs(x), Some(&mut trace));
    trace
        .pre
        .iter()
        .take(trace.pre.len() - 1)
        .flat_map(|z| z.iter())
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}
