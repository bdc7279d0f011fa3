//! Training samples drawn from the exact joint-occupancy pipeline.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{read_f64s, read_u32};
use crate::error::{invalid, Error, Result};
use crate::kinematics::RobotModel;
use crate::occupancy::sjo;
use crate::trajectory::TrajectoryConfig;

const DATASET_MAGIC: &[u8; 4] = b"RGDS";
const DATASET_VERSION: u32 = 1;
/// Polynomial order of the trigonometric enclosures used for targets.
pub const TARGET_TRIG_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeEncoding {
    /// One scalar `(i + 1/2) / n_t` for the 0-based interval index `i`.
    #[default]
    Scalar,
    OneHot,
}

impl TimeEncoding {
    pub fn width(self, n_t: usize) -> usize {
        match self {
            TimeEncoding::Scalar => 1,
            TimeEncoding::OneHot => n_t,
        }
    }

    pub fn encode(self, i: usize, n_t: usize, out: &mut Vec<f64>) {
        match self {
            TimeEncoding::Scalar => out.push((i as f64 + 0.5) / n_t as f64),
            TimeEncoding::OneHot => out.extend((0..n_t).map(|s| if s == i { 1.0 } else { 0.0 })),
        }
    }
}

/// Network input `(q0, qd0, k, time)`.
pub fn encode_input(q0: &[f64], qd0: &[f64], k: &[f64], i: usize, n_t: usize, enc: TimeEncoding) -> Vec<f64> {
    let mut x = Vec::with_capacity(3 * q0.len() + enc.width(n_t));
    x.extend_from_slice(q0);
    x.extend_from_slice(qd0);
    x.extend_from_slice(k);
    enc.encode(i, n_t, &mut x);
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfoSample {
    pub x: Vec<f64>,
    /// `[c_x, c_y, c_z, r]` per joint sphere, base first: `4 (n_q + 1)` values.
    pub y: Vec<f64>,
    /// Row-major `3 × n_q` center Jacobians for joints `1..=n_q`.
    pub g: Vec<f64>,
    pub interval: usize,
}

impl SfoSample {
    pub fn q0(&self, n_q: usize) -> &[f64] {
        &self.x[..n_q]
    }

    pub fn qd0(&self, n_q: usize) -> &[f64] {
        &self.x[n_q..2 * n_q]
    }

    pub fn k(&self, n_q: usize) -> &[f64] {
        &self.x[2 * n_q..3 * n_q]
    }
}

/// Exact targets for one `(q0, qd0, k, i)`.
pub fn exact_targets(
    model: &RobotModel,
    traj: &TrajectoryConfig,
    q0: &[f64],
    qd0: &[f64],
    k: &[f64],
    i: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_q = model.n_q();
    let fam = traj.family(q0.to_vec(), qd0.to_vec())?;
    let part = traj.partition()?;
    let entries = sjo(model, &fam, &part, i, TARGET_TRIG_ORDER)?;
    let mut y = Vec::with_capacity(4 * (n_q + 1));
    let mut g = Vec::with_capacity(3 * n_q * n_q);
    for (j, e) in entries.iter().enumerate() {
        let (c, jac) = e.center.eval_with_jacobian(k);
        y.extend_from_slice(&c);
        y.push(e.radius);
        if j > 0 {
            for r in 0..3 {
                g.extend((0..n_q).map(|col| jac[(r, col)]));
            }
        }
    }
    Ok((y, g))
}

/// Draw `n` samples; sample `s` uses its own stream of a generator seeded by `seed`.
pub fn gen_dataset(
    model: &RobotModel,
    traj: &TrajectoryConfig,
    enc: TimeEncoding,
    n: usize,
    seed: u64,
) -> Result<Vec<SfoSample>> {
    if n == 0 {
        return Err(invalid("dataset size must be at least 1"));
    }
    (0..n)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            draw_sample(model, traj, enc, &mut rng)
        })
        .collect()
}

fn draw_sample(
    model: &RobotModel,
    traj: &TrajectoryConfig,
    enc: TimeEncoding,
    rng: &mut ChaCha8Rng,
) -> Result<SfoSample> {
    let q0: Vec<f64> = model.joints.iter().map(|j| rng.gen_range(j.q_lim.lo..=j.q_lim.hi)).collect();
    let qd0: Vec<f64> = model.joints.iter().map(|j| rng.gen_range(j.qd_lim.lo..=j.qd_lim.hi)).collect();
    let k: Vec<f64> = (0..model.n_q()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let i = rng.gen_range(0..traj.n_t);
    let (y, g) = exact_targets(model, traj, &q0, &qd0, &k, i)?;
    Ok(SfoSample {
        x: encode_input(&q0, &qd0, &k, i, traj.n_t, enc),
        y,
        g,
        interval: i,
    })
}

/// Write samples column by column after a header `(n, dims, seed)`.
pub fn write_dataset(samples: &[SfoSample], seed: u64, mut w: impl Write) -> Result<()> {
    let first = samples.first().ok_or_else(|| invalid("empty dataset"))?;
    let dims = [first.x.len(), first.y.len(), first.g.len()];
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&seed.to_le_bytes())?;
    for s in samples {
        w.write_all(&(s.interval as u32).to_le_bytes())?;
    }
    let columns: [(usize, fn(&SfoSample) -> &[f64]); 3] = [
        (dims[0], |s| &s.x),
        (dims[1], |s| &s.y),
        (dims[2], |s| &s.g),
    ];
    for (dim, get) in columns {
        for c in 0..dim {
            for s in samples {
                let row = get(s);
                if row.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: row.len(),
                    });
                }
                w.write_all(&row[c].to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Inverse of [`write_dataset`]; returns the samples and the recorded seed.
pub fn read_dataset(mut r: impl Read) -> Result<(Vec<SfoSample>, u64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format("not a dataset file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    let dims = [read_u32(&mut r)? as usize, read_u32(&mut r)? as usize, read_u32(&mut r)? as usize];
    r.read_exact(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    let mut samples: Vec<SfoSample> = (0..n)
        .map(|_| {
            Ok(SfoSample {
                x: Vec::with_capacity(dims[0]),
                y: Vec::with_capacity(dims[1]),
                g: Vec::with_capacity(dims[2]),
                interval: read_u32(&mut r)? as usize,
            })
        })
        .collect::<Result<_>>()?;
    for (which, dim) in dims.iter().enumerate() {
        for _ in 0..*dim {
            let col = read_f64s(&mut r, n)?;
            for (s, v) in samples.iter_mut().zip(col) {
                match which {
                    0 => s.x.push(v),
                    1 => s.y.push(v),
                    _ => s.g.push(v),
                }
            }
        }
    }
    Ok((samples, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (RobotModel, TrajectoryConfig) {
        (RobotModel::planar2(), TrajectoryConfig::default())
    }

    #[test]
    fn generation_is_reproducible() {
        let (m, t) = toy();
        let a = gen_dataset(&m, &t, TimeEncoding::Scalar, 1, 11).unwrap();
        let b = gen_dataset(&m, &t, TimeEncoding::Scalar, 1, 11).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        write_dataset(&a, 11, &mut ba).unwrap();
        write_dataset(&b, 11, &mut bb).unwrap();
        assert_eq!(ba, bb);
        let c = gen_dataset(&m, &t, TimeEncoding::Scalar, 2, 12).unwrap();
        assert_ne!(a[0], c[0]);
    }

    #[test]
    fn sample_layout_and_radii() {
        let (m, t) = toy();
        let data = gen_dataset(&m, &t, TimeEncoding::Scalar, 40, 3).unwrap();
        let radii = m.sphere_radii();
        for s in &data {
            assert_eq!(s.x.len(), 3 * 2 + 1);
            assert_eq!(s.y.len(), 4 * 3);
            assert_eq!(s.g.len(), 3 * 2 * 2);
            assert!(s.k(2).iter().all(|v| (-1.0..=1.0).contains(v)));
            assert_eq!(&s.y[..3], &[0.0, 0.0, 0.0]);
            for j in 0..3 {
                assert!(s.y[4 * j + 3] >= radii[j]);
            }
            let x_t = s.x[6];
            assert_eq!(x_t, (s.interval as f64 + 0.5) / t.n_t as f64);
        }
    }

    #[test]
    fn targets_match_an_independent_rerun() {
        let (m, t) = toy();
        let data = gen_dataset(&m, &t, TimeEncoding::Scalar, 10, 5).unwrap();
        for s in &data {
            let (y, g) = exact_targets(&m, &t, s.q0(2), s.qd0(2), s.k(2), s.interval).unwrap();
            for (a, b) in y.iter().zip(&s.y).chain(g.iter().zip(&s.g)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gradient_targets_match_differences() {
        let (m, t) = toy();
        let data = gen_dataset(&m, &t, TimeEncoding::Scalar, 5, 8).unwrap();
        let h = 1e-6;
        for s in &data {
            let k = s.k(2).to_vec();
            for col in 0..2 {
                let mut kp = k.clone();
                let mut km = k.clone();
                kp[col] = (kp[col] + h).min(1.0);
                km[col] = (km[col] - h).max(-1.0);
                let step = kp[col] - km[col];
                let (yp, _) = exact_targets(&m, &t, s.q0(2), s.qd0(2), &kp, s.interval).unwrap();
                let (ym, _) = exact_targets(&m, &t, s.q0(2), s.qd0(2), &km, s.interval).unwrap();
                for j in 0..2 {
                    for r in 0..3 {
                        let fd = (yp[4 * (j + 1) + r] - ym[4 * (j + 1) + r]) / step;
                        let an = s.g[j * 6 + r * 2 + col];
                        assert!((fd - an).abs() <= 1e-6, "{fd} {an}");
                    }
                }
            }
        }
    }

    #[test]
    fn one_hot_encoding() {
        let (m, t) = toy();
        let s = &gen_dataset(&m, &t, TimeEncoding::OneHot, 1, 2).unwrap()[0];
        assert_eq!(s.x.len(), 6 + t.n_t);
        let hot: Vec<usize> = (0..t.n_t).filter(|c| s.x[6 + c] == 1.0).collect();
        assert_eq!(hot, vec![s.interval]);
    }

    #[test]
    fn dataset_round_trip() {
        let (m, t) = toy();
        let data = gen_dataset(&m, &t, TimeEncoding::Scalar, 7, 21).unwrap();
        let mut buf = Vec::new();
        write_dataset(&data, 21, &mut buf).unwrap();
        let (back, seed) = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(seed, 21);
        assert_eq!(back, data);
        assert!(gen_dataset(&m, &t, TimeEncoding::Scalar, 0, 0).is_err());
    }
}
