//! Exact encoding of the planar zonotope signed distance as a feedforward
//! network with fixed weights.
//!
//! The network evaluates, for every boundary segment of every buffered
//! obstacle, the clamped projection parameter with one ReLU tier, rebuilds
//! the difference vector to the closest segment point with an affine layer,
//! takes its Euclidean norm, and reduces all segment distances with a tree of
//! two-input ReLU min gadgets. A second ReLU network evaluates the facet
//! inequalities of the buffered obstacles to decide the sign.
//!
//! Sizes are counted the way gadgets are composed: every ReLU tier adds two
//! to the depth (its affine input and output maps) and the width is the
//! largest ReLU tier.

use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::distance::{buffered_obstacle, polygon_segments, vertices_2d};
use crate::error::{invalid, Error, Result};
use crate::zonotope::Zonotope;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// `y = W x + b` with `W` stored row-major.
    Affine {
        rows: usize,
        cols: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu { dim: usize },
    /// Euclidean norm of consecutive coordinate pairs.
    Norm2 { in_dim: usize },
}

impl LayerSpec {
    pub fn affine(w: &DMatrix<f64>, bias: Vec<f64>) -> Self {
        let mut weights = Vec::with_capacity(w.len());
        for r in 0..w.nrows() {
            for c in 0..w.ncols() {
                weights.push(w[(r, c)]);
            }
        }
        LayerSpec::Affine {
            rows: w.nrows(),
            cols: w.ncols(),
            weights,
            bias,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            LayerSpec::Affine { cols, .. } => *cols,
            LayerSpec::Relu { dim } => *dim,
            LayerSpec::Norm2 { in_dim } => *in_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            LayerSpec::Affine { rows, .. } => *rows,
            LayerSpec::Relu { dim } => *dim,
            LayerSpec::Norm2 { in_dim } => in_dim / 2,
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            LayerSpec::Affine {
                rows,
                cols,
                weights,
                bias,
            } => (0..*rows)
                .map(|r| {
                    let row = &weights[r * cols..(r + 1) * cols];
                    row.iter().zip(x).fold(bias[r], |acc, (w, v)| acc + w * v)
                })
                .collect(),
            LayerSpec::Relu { .. } => x.iter().map(|v| v.max(0.0)).collect(),
            LayerSpec::Norm2 { .. } => x.chunks(2).map(|p| p[0].hypot(p[1])).collect(),
        }
    }
}

/// Chain of layers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<LayerSpec>,
}

impl Network {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::DimensionMismatch {
                    expected: w[0].out_dim(),
                    got: w[1].in_dim(),
                });
            }
        }
        for l in &layers {
            if let LayerSpec::Affine {
                rows,
                cols,
                weights,
                bias,
            } = l
            {
                if weights.len() != rows * cols || bias.len() != *rows {
                    return Err(invalid("affine layer storage does not match its shape"));
                }
            }
            if let LayerSpec::Norm2 { in_dim } = l {
                if in_dim % 2 != 0 {
                    return Err(invalid("norm layer needs an even input dimension"));
                }
            }
        }
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> Option<usize> {
        self.layers.first().map(LayerSpec::in_dim)
    }

    pub fn eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        if let Some(d) = self.in_dim() {
            if d != input.len() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: input.len(),
                });
            }
        }
        let mut x = input.to_vec();
        for l in &self.layers {
            x = l.apply(&x);
        }
        Ok(x)
    }

    /// Evaluate only the first `n` layers.
    pub fn eval_prefix(&self, input: &[f64], n: usize) -> Vec<f64> {
        let mut x = input.to_vec();
        for l in self.layers.iter().take(n) {
            x = l.apply(&x);
        }
        x
    }

    pub fn relu_tiers(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Relu { .. }))
            .count()
    }

    pub fn relu_depth(&self) -> usize {
        2 * self.relu_tiers()
    }

    pub fn relu_width(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Relu { dim } => Some(*dim),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn norm_tiers(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Norm2 { .. }))
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Min,
    Max,
}

/// Gadget input rows for `min` / `max` of a pair.
fn gadget_rows(op: Reduce) -> ([[f64; 2]; 4], [f64; 4]) {
    match op {
        Reduce::Min => (
            [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]],
            [0.5, -0.5, -0.5, -0.5],
        ),
        Reduce::Max => (
            [[1.0, 1.0], [-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0]],
            [0.5, -0.5, 0.5, 0.5],
        ),
    }
}

fn gadget(op: Reduce) -> Network {
    let (h, w) = gadget_rows(op);
    let hin = DMatrix::from_fn(4, 2, |r, c| h[r][c]);
    let hout = DMatrix::from_fn(1, 4, |_, c| w[c]);
    Network {
        layers: vec![
            LayerSpec::affine(&hin, vec![0.0; 4]),
            LayerSpec::Relu { dim: 4 },
            LayerSpec::affine(&hout, vec![0.0]),
        ],
    }
}

/// Two-input min gadget: width 4, depth 2.
pub fn relu_min2() -> Network {
    gadget(Reduce::Min)
}

/// Two-input max gadget: width 4, depth 2.
pub fn relu_max2() -> Network {
    gadget(Reduce::Max)
}

/// Reduce each consecutive group of inputs (sizes in `groups`) to one value
/// with pairwise gadgets; singletons pass through as `relu(x) − relu(−x)`.
/// Returns the layers, starting with an affine map over the inputs.
pub fn relu_group_reduce(groups: &[usize], op: Reduce) -> Result<Vec<LayerSpec>> {
    if groups.is_empty() || groups.iter().any(|g| *g == 0) {
        return Err(invalid("reduction groups must be nonempty"));
    }
    let (h, w) = gadget_rows(op);
    let mut sizes = groups.to_vec();
    let n_in: usize = sizes.iter().sum();
    let mut layers = Vec::new();
    // Affine map feeding the current tier, expressed over the previous outputs.
    let mut pending: Option<DMatrix<f64>> = None;
    let mut current_dim = n_in;
    while sizes.iter().any(|s| *s > 1) {
        let hidden: usize = sizes.iter().map(|s| 4 * (s / 2) + 2 * (s % 2)).sum();
        let next_dim: usize = sizes.iter().map(|s| s.div_ceil(2)).sum();
        let mut win = DMatrix::zeros(hidden, current_dim);
        let mut wout = DMatrix::zeros(next_dim, hidden);
        let (mut col, mut row, mut out) = (0, 0, 0);
        for s in &sizes {
            for _ in 0..s / 2 {
                for r in 0..4 {
                    win[(row + r, col)] = h[r][0];
                    win[(row + r, col + 1)] = h[r][1];
                    wout[(out, row + r)] = w[r];
                }
                row += 4;
                col += 2;
                out += 1;
            }
            if s % 2 == 1 {
                win[(row, col)] = 1.0;
                win[(row + 1, col)] = -1.0;
                wout[(out, row)] = 1.0;
                wout[(out, row + 1)] = -1.0;
                row += 2;
                col += 1;
                out += 1;
            }
        }
        let win = match pending.take() {
            Some(prev) => win * prev,
            None => win,
        };
        layers.push(LayerSpec::affine(&win, vec![0.0; hidden]));
        layers.push(LayerSpec::Relu { dim: hidden });
        pending = Some(wout);
        current_dim = next_dim;
        sizes = sizes.iter().map(|s| s.div_ceil(2)).collect();
    }
    let out = pending.unwrap_or_else(|| DMatrix::identity(n_in, n_in));
    let rows = out.nrows();
    layers.push(LayerSpec::affine(&out, vec![0.0; rows]));
    Ok(layers)
}

/// Network computing the minimum of `n` inputs.
pub fn relu_min_tree(n: usize) -> Result<Network> {
    if n == 0 {
        return Err(invalid("min tree needs at least one input"));
    }
    Network::new(relu_group_reduce(&[n], Reduce::Min)?)
}

pub fn relu_max_tree(n: usize) -> Result<Network> {
    if n == 0 {
        return Err(invalid("max tree needs at least one input"));
    }
    Network::new(relu_group_reduce(&[n], Reduce::Max)?)
}

/// Width bound `4⌈N/2⌉` and depth bound `2⌊log₂ N⌋` for an `N`-input min.
pub fn min_tree_bounds(n: usize) -> (usize, usize) {
    (4 * n.div_ceil(2), 2 * n.max(1).ilog2() as usize)
}

/// Width bound `4⌈N/2⌉ + 8` and depth bound `2⌊log₂ N⌋ + 4` for `N` segments.
pub fn sdf_net_bounds(n: usize) -> (usize, usize) {
    let (w, d) = min_tree_bounds(n);
    (w + 8, d + 4)
}

/// Compiled planar signed-distance network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledSdfNet {
    pub version: u32,
    pub segment_count: usize,
    pub relu_width: usize,
    pub relu_depth: usize,
    /// Unsigned distance: clamp tier, difference pairs, norm, min tree.
    pub distance: Network,
    /// Signed indicator `min_j max_i (a_i·c − b_i)`, non-positive inside some obstacle.
    pub indicator: Network,
}

impl CompiledSdfNet {
    pub fn eval(&self, c: &[f64]) -> Result<f64> {
        let d = self.distance.eval(c)?[0];
        let ind = self.indicator.eval(c)?[0];
        Ok(if ind <= 0.0 { -d } else { d })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: CompiledSdfNet = serde_json::from_str(text)?;
        if net.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported net version {}", net.version)));
        }
        Network::new(net.distance.layers.clone())?;
        Network::new(net.indicator.layers.clone())?;
        Ok(net)
    }
}

/// Compile the signed distance from the center of `⟨c, ego_generators⟩` to
/// the union of the planar obstacles into fixed-weight networks.
pub fn compile_sdf_net(obstacles: &[Zonotope], ego_generators: &DMatrix<f64>) -> Result<CompiledSdfNet> {
    if obstacles.is_empty() {
        return Err(invalid("at least one obstacle is required"));
    }
    if ego_generators.nrows() != 2 && ego_generators.ncols() > 0 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: ego_generators.nrows(),
        });
    }
    let ego = if ego_generators.ncols() == 0 {
        DMatrix::zeros(2, 0)
    } else {
        ego_generators.clone()
    };
    let mut polygons: Vec<Vec<Vector2<f64>>> = Vec::with_capacity(obstacles.len());
    for o in obstacles {
        polygons.push(vertices_2d(&buffered_obstacle(&ego, o)?)?);
    }
    let segments: Vec<_> = polygons.iter().flat_map(|p| polygon_segments(p)).collect();
    let n = segments.len();

    // Tier 1: t̂_i, t̂_i − 1 and ±c for every segment.
    let width1 = 2 * n + 4;
    let mut w1 = DMatrix::zeros(width1, 2);
    let mut b1 = vec![0.0; width1];
    for (i, s) in segments.iter().enumerate() {
        let w = s.v2 - s.v1;
        let ww = w.dot(&w);
        let (gx, gy, off) = (w.x / ww, w.y / ww, -s.v1.dot(&w) / ww);
        w1[(i, 0)] = gx;
        w1[(i, 1)] = gy;
        b1[i] = off;
        w1[(n + i, 0)] = gx;
        w1[(n + i, 1)] = gy;
        b1[n + i] = off - 1.0;
    }
    w1[(2 * n, 0)] = 1.0;
    w1[(2 * n + 1, 0)] = -1.0;
    w1[(2 * n + 2, 1)] = 1.0;
    w1[(2 * n + 3, 1)] = -1.0;

    // Difference pairs c − v_i − w_i t*_i with t*_i = relu(t̂_i) − relu(t̂_i − 1).
    let mut w2 = DMatrix::zeros(2 * n, width1);
    let mut b2 = vec![0.0; 2 * n];
    for (i, s) in segments.iter().enumerate() {
        let w = s.v2 - s.v1;
        for axis in 0..2 {
            let r = 2 * i + axis;
            w2[(r, 2 * n + 2 * axis)] = 1.0;
            w2[(r, 2 * n + 2 * axis + 1)] = -1.0;
            w2[(r, i)] = -w[axis];
            w2[(r, n + i)] = w[axis];
            b2[r] = -s.v1[axis];
        }
    }
    let mut layers = vec![
        LayerSpec::affine(&w1, b1),
        LayerSpec::Relu { dim: width1 },
        LayerSpec::affine(&w2, b2),
        LayerSpec::Norm2 { in_dim: 2 * n },
    ];
    layers.extend(relu_group_reduce(&[n], Reduce::Min)?);
    let distance = Network::new(layers)?;

    // Facet inequalities of each buffered obstacle, max within, min across.
    let mut wi = DMatrix::zeros(n, 2);
    let mut bi = vec![0.0; n];
    for (i, s) in segments.iter().enumerate() {
        let e = s.v2 - s.v1;
        let normal = Vector2::new(e.y, -e.x) / e.norm();
        wi[(i, 0)] = normal.x;
        wi[(i, 1)] = normal.y;
        bi[i] = -normal.dot(&s.v1);
    }
    let mut ind_layers = vec![LayerSpec::affine(&wi, bi)];
    let sizes: Vec<usize> = polygons.iter().map(|p| p.len()).collect();
    ind_layers.extend(relu_group_reduce(&sizes, Reduce::Max)?);
    ind_layers.extend(relu_group_reduce(&[polygons.len()], Reduce::Min)?);
    let indicator = Network::new(ind_layers)?;

    Ok(CompiledSdfNet {
        version: FORMAT_VERSION,
        segment_count: n,
        relu_width: distance.relu_width(),
        relu_depth: distance.relu_depth(),
        distance,
        indicator,
    })
}

/// Evaluate a compiled network at a query center.
pub fn eval_net(net: &CompiledSdfNet, input: &[f64]) -> Result<f64> {
    net.eval(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::signed_distance_2d;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gadgets_are_exact() {
        let (mn, mx) = (relu_min2(), relu_max2());
        assert_eq!(mn.eval(&[3.0, 5.0]).unwrap(), vec![3.0]);
        assert_eq!(mx.eval(&[3.0, 5.0]).unwrap(), vec![5.0]);
        assert_eq!((mn.relu_width(), mn.relu_depth()), (4, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        // Dyadic inputs keep every intermediate sum exact, so equality is bitwise.
        for _ in 0..100_000 {
            let x = rng.gen_range(-1i64 << 30..1i64 << 30) as f64 / 1024.0;
            let y = rng.gen_range(-1i64 << 30..1i64 << 30) as f64 / 1024.0;
            assert_eq!(mn.eval(&[x, y]).unwrap()[0], x.min(y));
            assert_eq!(mx.eval(&[x, y]).unwrap()[0], x.max(y));
            assert_eq!(mn.eval(&[x, x]).unwrap()[0], x);
        }
        // Arbitrary doubles agree up to the rounding of x ± y.
        for _ in 0..100_000 {
            let (x, y): (f64, f64) = (rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
            let tol = 4.0 * f64::EPSILON * x.abs().max(y.abs());
            assert!((mn.eval(&[x, y]).unwrap()[0] - x.min(y)).abs() <= tol);
            assert!((mx.eval(&[x, y]).unwrap()[0] - x.max(y)).abs() <= tol);
        }
    }

    #[test]
    fn min_tree_examples() {
        let one = relu_min_tree(1).unwrap();
        assert_eq!(one.eval(&[-2.5]).unwrap(), vec![-2.5]);
        let four = relu_min_tree(4).unwrap();
        assert_eq!(four.eval(&[7.0, 2.0, 9.0, 5.0]).unwrap(), vec![2.0]);
        assert_eq!((four.relu_width(), four.relu_depth()), (8, 4));
        assert!(relu_min_tree(0).is_err());
    }

    #[test]
    fn min_tree_size_audit() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in 2..=64usize {
            let net = relu_min_tree(n).unwrap();
            let (w, d_floor) = min_tree_bounds(n);
            assert!(net.relu_width() <= w);
            let d_ceil = 2 * (n as f64).log2().ceil() as usize;
            assert!(net.relu_depth() <= d_ceil);
            if n.is_power_of_two() {
                assert!(net.relu_depth() <= d_floor);
            }
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let want = x.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!((net.eval(&x).unwrap()[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_network_is_identity() {
        assert_eq!(Network::default().eval(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    fn square(c: [f64; 2], h: f64) -> Zonotope {
        Zonotope::axis_box(&c, &[h, h]).unwrap()
    }

    #[test]
    fn one_square_matches_planar_distance() {
        let obs = vec![square([1.0, 0.5], 0.4)];
        let gz = DMatrix::from_column_slice(2, 2, &[0.1, 0.05, -0.02, 0.1]);
        let net = compile_sdf_net(&obs, &gz).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..100 {
            let c = [rng.gen_range(-1.0..3.0), rng.gen_range(-1.5..2.5)];
            let z = Zonotope::new(DVector::from_row_slice(&c), gz.clone()).unwrap();
            let want = signed_distance_2d(&z, &obs).unwrap();
            assert!((eval_net(&net, &c).unwrap() - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn translation_equivariance() {
        let obs = vec![square([0.0, 0.0], 0.5), square([2.0, 1.0], 0.3)];
        let t = [0.7, -1.3];
        let moved: Vec<Zonotope> = obs
            .iter()
            .map(|o| o.translate(&DVector::from_row_slice(&t)))
            .collect();
        let gz = DMatrix::zeros(2, 0);
        let (a, b) = (compile_sdf_net(&obs, &gz).unwrap(), compile_sdf_net(&moved, &gz).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..200 {
            let c = [rng.gen_range(-2.0..3.0), rng.gen_range(-2.0..3.0)];
            let ct = [c[0] + t[0], c[1] + t[1]];
            assert!((a.eval(&c).unwrap() - b.eval(&ct).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn compiled_sizes_within_bounds() {
        let gz = DMatrix::zeros(2, 0);
        for k in [1usize, 2, 6] {
            let obs: Vec<Zonotope> = (0..k).map(|j| square([j as f64, 0.0], 0.3)).collect();
            let net = compile_sdf_net(&obs, &gz).unwrap();
            assert_eq!(net.segment_count, 4 * k);
            let (w, d) = sdf_net_bounds(net.segment_count);
            assert!(net.relu_width <= w && net.relu_depth <= d);
            assert_eq!(net.distance.norm_tiers(), 1);
        }
    }

    #[test]
    fn pre_norm_layers_are_piecewise_linear() {
        let obs = vec![square([0.0, 0.0], 0.5)];
        let net = compile_sdf_net(&obs, &DMatrix::zeros(2, 0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let h = 1e-4;
        for _ in 0..100 {
            let c = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let f = |x: f64| net.distance.eval_prefix(&[x, c[1]], 3);
            let (a, b, d) = (f(c[0] - h), f(c[0]), f(c[0] + h));
            // Second differences vanish away from kinks; a kink shows up as an
            // isolated nonzero entry, which the coarse check tolerates.
            let curved = a
                .iter()
                .zip(&b)
                .zip(&d)
                .filter(|((x, y), z)| (*x - 2.0 * *y + *z).abs() > 1e-10)
                .count();
            assert!(curved <= 2);
        }
    }

    #[test]
    fn json_round_trip() {
        let net = compile_sdf_net(&[square([0.0, 0.0], 1.0)], &DMatrix::zeros(2, 0)).unwrap();
        let text = net.to_json().unwrap();
        let back = CompiledSdfNet::from_json(&text).unwrap();
        assert_eq!(back, net);
        assert!(text.contains("\"kind\":\"norm2\""));
    }
}
