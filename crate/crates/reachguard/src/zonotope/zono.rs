use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Interval;
use crate::error::{invalid, Error, Result};

/// Zonotope `{ c + G β : β ∈ [-1, 1]^m }`.
///
/// Generators are the columns of `G`. A zonotope with zero generators is a
/// single point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ZonotopeSpec", into = "ZonotopeSpec")]
pub struct Zonotope {
    center: DVector<f64>,
    generators: DMatrix<f64>,
}

/// JSON layout used by obstacle files: generators are listed one per row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZonotopeSpec {
    pub center: Vec<f64>,
    #[serde(default)]
    pub generators: Vec<Vec<f64>>,
}

impl Zonotope {
    pub fn new(center: DVector<f64>, generators: DMatrix<f64>) -> Result<Self> {
        if generators.nrows() != center.len() && generators.ncols() > 0 {
            return Err(Error::DimensionMismatch {
                expected: center.len(),
                got: generators.nrows(),
            });
        }
        if center.iter().chain(generators.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("zonotope entries must be finite"));
        }
        let generators = if generators.ncols() == 0 {
            DMatrix::zeros(center.len(), 0)
        } else {
            generators
        };
        Ok(Self { center, generators })
    }

    pub fn point(center: DVector<f64>) -> Self {
        let d = center.len();
        Self {
            center,
            generators: DMatrix::zeros(d, 0),
        }
    }

    /// Axis-aligned box with the given center and half-widths.
    pub fn axis_box(center: &[f64], half_widths: &[f64]) -> Result<Self> {
        if center.len() != half_widths.len() {
            return Err(Error::DimensionMismatch {
                expected: center.len(),
                got: half_widths.len(),
            });
        }
        let g = DMatrix::from_diagonal(&DVector::from_column_slice(half_widths));
        Self::new(DVector::from_column_slice(center), g)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn generators(&self) -> &DMatrix<f64> {
        &self.generators
    }

    pub fn minkowski_sum(&self, other: &Zonotope) -> Result<Zonotope> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let d = self.dim();
        let m = self.n_generators() + other.n_generators();
        let mut g = DMatrix::zeros(d, m);
        g.columns_mut(0, self.n_generators())
            .copy_from(&self.generators);
        g.columns_mut(self.n_generators(), other.n_generators())
            .copy_from(&other.generators);
        Zonotope::new(&self.center + &other.center, g)
    }

    pub fn translate(&self, t: &DVector<f64>) -> Zonotope {
        Zonotope {
            center: &self.center + t,
            generators: self.generators.clone(),
        }
    }

    /// Support function `h(d) = d·c + Σ |d·g_i|`.
    pub fn support(&self, dir: &DVector<f64>) -> f64 {
        let mut h = dir.dot(&self.center);
        for g in self.generators.column_iter() {
            h += dir.dot(&g).abs();
        }
        h
    }

    pub fn interval_hull(&self) -> Vec<Interval> {
        (0..self.dim())
            .map(|r| {
                let rad: f64 = self.generators.row(r).iter().map(|v| v.abs()).sum();
                Interval {
                    lo: self.center[r] - rad,
                    hi: self.center[r] + rad,
                }
            })
            .collect()
    }

    /// Point `c + G β`.
    pub fn point_at(&self, beta: &[f64]) -> DVector<f64> {
        let mut p = self.center.clone();
        for (g, b) in self.generators.column_iter().zip(beta) {
            p += g * *b;
        }
        p
    }

    /// Numerical rank of the generator matrix.
    pub fn rank(&self, tol: f64) -> usize {
        if self.n_generators() == 0 {
            return 0;
        }
        self.generators.clone().svd(false, false).rank(tol)
    }
}

impl TryFrom<ZonotopeSpec> for Zonotope {
    type Error = Error;

    fn try_from(spec: ZonotopeSpec) -> Result<Self> {
        let d = spec.center.len();
        let m = spec.generators.len();
        let mut g = DMatrix::zeros(d, m);
        for (j, col) in spec.generators.iter().enumerate() {
            if col.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: col.len(),
                });
            }
            for (i, v) in col.iter().enumerate() {
                g[(i, j)] = *v;
            }
        }
        Zonotope::new(DVector::from_vec(spec.center), g)
    }
}

impl From<Zonotope> for ZonotopeSpec {
    fn from(z: Zonotope) -> Self {
        ZonotopeSpec {
            center: z.center.iter().copied().collect(),
            generators: z
                .generators
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
        }
    }
}

/// Free-function form of [`Zonotope::minkowski_sum`].
pub fn minkowski_sum(a: &Zonotope, b: &Zonotope) -> Result<Zonotope> {
    a.minkowski_sum(b)
}
