//! Polynomial zonotopes with structurally identified indeterminates.
//!
//! A polynomial zonotope here is
//!
//! ```text
//! { c + Σ_i g_i · Π_k x_k^{e_ik} + Σ_l h_l · ε_l :  x ∈ [-1,1]^p, ε ∈ [-1,1]^r }
//! ```
//!
//! The dependent part is stored as sparse monomials keyed by
//! [`IndeterminateId`], so two polynomial zonotopes that mention the same
//! trajectory parameter share it regardless of the order in which their
//! indeterminates were introduced. The independent part (`h_l`) carries
//! enclosure error and is never shared between values.

use std::collections::BTreeSet;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::Interval;
use crate::error::{Error, Result};

/// Coefficients with magnitude below this are folded into the independent part.
pub const COEFF_EPS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IndeterminateKind {
    /// Trajectory parameter of joint `id`; the only kind that may be sliced.
    TrajParam,
    /// Time indeterminate of interval `id`.
    Time,
    /// Free error factor.
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IndeterminateId {
    pub kind: IndeterminateKind,
    pub id: u32,
}

impl IndeterminateId {
    pub fn traj(joint: usize) -> Self {
        Self {
            kind: IndeterminateKind::TrajParam,
            id: joint as u32,
        }
    }

    pub fn time(interval: usize) -> Self {
        Self {
            kind: IndeterminateKind::Time,
            id: interval as u32,
        }
    }

    pub fn error(serial: u32) -> Self {
        Self {
            kind: IndeterminateKind::Error,
            id: serial,
        }
    }

    pub fn is_sliceable(&self) -> bool {
        self.kind == IndeterminateKind::TrajParam
    }
}

/// Product of indeterminate powers, stored as sorted `(id, power)` pairs with power ≥ 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(SmallVec<[(IndeterminateId, u16); 4]>);

impl Monomial {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn var(id: IndeterminateId) -> Self {
        let mut v = SmallVec::new();
        v.push((id, 1));
        Self(v)
    }

    pub fn from_powers(mut powers: Vec<(IndeterminateId, u16)>) -> Self {
        powers.retain(|(_, p)| *p > 0);
        powers.sort_by_key(|(id, _)| *id);
        let mut out: SmallVec<[(IndeterminateId, u16); 4]> = SmallVec::new();
        for (id, p) in powers {
            match out.last_mut() {
                Some((last, q)) if *last == id => *q += p,
                _ => out.push((id, p)),
            }
        }
        Self(out)
    }

    pub fn is_constant(&self) -> bool {
        self.0.is_empty()
    }

    pub fn powers(&self) -> &[(IndeterminateId, u16)] {
        &self.0
    }

    pub fn degree_of(&self, id: IndeterminateId) -> u16 {
        self.0
            .iter()
            .find(|(i, _)| *i == id)
            .map(|(_, p)| *p)
            .unwrap_or(0)
    }

    /// True when every power is even, so the monomial ranges over `[0, 1]`.
    pub fn all_even(&self) -> bool {
        !self.0.is_empty() && self.0.iter().all(|(_, p)| p % 2 == 0)
    }

    pub fn only_kind(&self, kind: IndeterminateKind) -> bool {
        self.0.iter().all(|(id, _)| id.kind == kind)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = SmallVec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    pub fn eval(&self, value: impl Fn(IndeterminateId) -> f64) -> f64 {
        self.0
            .iter()
            .map(|(id, p)| value(*id).powi(*p as i32))
            .product()
    }
}

/// One dependent generator: a coefficient vector times a monomial.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub monomial: Monomial,
    pub coeff: SmallVec<[f64; 3]>,
}

impl Term {
    fn norm_inf(&self) -> f64 {
        self.coeff.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn norm2(&self) -> f64 {
        self.coeff.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Polynomial zonotope in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyZonotope {
    center: Vec<f64>,
    terms: Vec<Term>,
    indep: Vec<Vec<f64>>,
}

impl PolyZonotope {
    pub fn constant(center: Vec<f64>) -> Self {
        Self {
            center,
            terms: Vec::new(),
            indep: Vec::new(),
        }
    }

    pub fn scalar(c: f64) -> Self {
        Self::constant(vec![c])
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(vec![0.0; dim])
    }

    /// Scalar `c + g·x_id`.
    pub fn scalar_var(c: f64, g: f64, id: IndeterminateId) -> Self {
        Self::from_parts(vec![c], vec![(Monomial::var(id), vec![g])], Vec::new())
    }

    /// Build from raw parts; terms are canonicalized.
    pub fn from_parts(
        center: Vec<f64>,
        terms: Vec<(Monomial, Vec<f64>)>,
        indep: Vec<Vec<f64>>,
    ) -> Self {
        let terms = terms
            .into_iter()
            .map(|(monomial, coeff)| Term {
                monomial,
                coeff: SmallVec::from_vec(coeff),
            })
            .collect();
        let mut pz = Self {
            center,
            terms,
            indep,
        };
        pz.canonicalize();
        pz
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn independent_generators(&self) -> &[Vec<f64>] {
        &self.indep
    }

    /// Number of dependent generators.
    pub fn n_generators(&self) -> usize {
        self.terms.len()
    }

    /// Sorted list of indeterminates appearing in dependent generators.
    pub fn indeterminates(&self) -> Vec<IndeterminateId> {
        let set: BTreeSet<IndeterminateId> = self
            .terms
            .iter()
            .flat_map(|t| t.monomial.powers().iter().map(|(id, _)| *id))
            .collect();
        set.into_iter().collect()
    }

    /// Dense exponent matrix: one row per dependent generator, one column per
    /// entry of [`Self::indeterminates`].
    pub fn exponent_matrix(&self) -> (Vec<IndeterminateId>, Vec<Vec<u16>>) {
        let ids = self.indeterminates();
        let rows = self
            .terms
            .iter()
            .map(|t| ids.iter().map(|id| t.monomial.degree_of(*id)).collect())
            .collect();
        (ids, rows)
    }

    fn canonicalize(&mut self) {
        let d = self.dim();
        let mut terms = std::mem::take(&mut self.terms);
        terms.sort_unstable_by(|a, b| a.monomial.cmp(&b.monomial));
        let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            if t.monomial.is_constant() {
                for (c, v) in self.center.iter_mut().zip(&t.coeff) {
                    *c += v;
                }
                continue;
            }
            match merged.last_mut() {
                Some(last) if last.monomial == t.monomial => {
                    for (a, b) in last.coeff.iter_mut().zip(&t.coeff) {
                        *a += b;
                    }
                }
                _ => merged.push(t),
            }
        }
        let mut dropped = vec![0.0; d];
        merged.retain(|t| {
            let n = t.norm_inf();
            if n >= COEFF_EPS {
                return true;
            }
            for (acc, v) in dropped.iter_mut().zip(&t.coeff) {
                *acc += v.abs();
            }
            false
        });
        self.terms = merged;
        self.indep.retain(|h| h.iter().any(|v| *v != 0.0));
        for (axis, r) in dropped.into_iter().enumerate() {
            if r > 0.0 {
                let mut h = vec![0.0; d];
                h[axis] = r;
                self.indep.push(h);
            }
        }
        if d == 1 && self.indep.len() > 1 {
            // Scalar independent factors combine exactly into one.
            let r: f64 = self.indep.iter().map(|h| h[0].abs()).sum();
            self.indep = vec![vec![r]];
        }
    }

    fn check_dim(&self, other: &PolyZonotope) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &PolyZonotope) -> Result<PolyZonotope> {
        self.check_dim(other)?;
        let center = self
            .center
            .iter()
            .zip(&other.center)
            .map(|(a, b)| a + b)
            .collect();
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        let mut indep = self.indep.clone();
        indep.extend(other.indep.iter().cloned());
        let mut pz = PolyZonotope {
            center,
            terms,
            indep,
        };
        pz.canonicalize();
        Ok(pz)
    }

    /// `Σ w_i · pz_i` over equally sized operands, skipping zero weights.
    pub fn linear_combination(dim: usize, parts: &[(f64, &PolyZonotope)]) -> Result<PolyZonotope> {
        let mut out = PolyZonotope::zero(dim);
        for (w, pz) in parts {
            if pz.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: pz.dim(),
                });
            }
            if *w == 0.0 {
                continue;
            }
            for (c, v) in out.center.iter_mut().zip(&pz.center) {
                *c += w * v;
            }
            out.terms.extend(pz.terms.iter().map(|t| Term {
                monomial: t.monomial.clone(),
                coeff: t.coeff.iter().map(|v| w * v).collect(),
            }));
            out.indep
                .extend(pz.indep.iter().map(|h| h.iter().map(|v| w * v).collect()));
        }
        out.canonicalize();
        Ok(out)
    }

    pub fn sub(&self, other: &PolyZonotope) -> Result<PolyZonotope> {
        self.add(&other.scale(-1.0))
    }

    pub fn add_const(&self, c: &[f64]) -> Result<PolyZonotope> {
        if c.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: c.len(),
            });
        }
        let mut out = self.clone();
        for (a, b) in out.center.iter_mut().zip(c) {
            *a += b;
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> PolyZonotope {
        let mut out = self.clone();
        out.center.iter_mut().for_each(|v| *v *= s);
        for t in &mut out.terms {
            t.coeff.iter_mut().for_each(|v| *v *= s);
        }
        for h in &mut out.indep {
            h.iter_mut().for_each(|v| *v *= s);
        }
        out.canonicalize();
        out
    }

    /// Product of two scalar polynomial zonotopes.
    ///
    /// Dependent × dependent products are kept exactly. Every product that
    /// involves an independent generator is bounded by its interval magnitude
    /// and returned as one independent generator.
    pub fn mul(&self, other: &PolyZonotope) -> Result<PolyZonotope> {
        if self.dim() != 1 || other.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.dim().max(other.dim()),
            });
        }
        let (ca, cb) = (self.center[0], other.center[0]);
        let mut terms = Vec::new();
        let mut acc: FxHashMap<Monomial, f64> = FxHashMap::default();
        let mut push = |m: Monomial, v: f64| {
            *acc.entry(m).or_insert(0.0) += v;
        };
        for t in &self.terms {
            push(t.monomial.clone(), t.coeff[0] * cb);
        }
        for t in &other.terms {
            push(t.monomial.clone(), t.coeff[0] * ca);
        }
        for ta in &self.terms {
            for tb in &other.terms {
                push(ta.monomial.mul(&tb.monomial), ta.coeff[0] * tb.coeff[0]);
            }
        }
        terms.extend(acc.into_iter().map(|(monomial, v)| Term {
            monomial,
            coeff: SmallVec::from_elem(v, 1),
        }));
        let ra: f64 = self.indep.iter().map(|h| h[0].abs()).sum();
        let rb: f64 = other.indep.iter().map(|h| h[0].abs()).sum();
        let da: f64 = self.terms.iter().map(|t| t.coeff[0].abs()).sum();
        let db: f64 = other.terms.iter().map(|t| t.coeff[0].abs()).sum();
        let r = ca.abs() * rb + cb.abs() * ra + da * rb + db * ra + ra * rb;
        let mut pz = PolyZonotope {
            center: vec![ca * cb],
            terms,
            indep: if r > 0.0 { vec![vec![r]] } else { Vec::new() },
        };
        pz.canonicalize();
        Ok(pz)
    }

    /// Stack scalar polynomial zonotopes into one vector-valued value.
    pub fn stack(components: &[PolyZonotope]) -> Result<PolyZonotope> {
        let d = components.len();
        let mut center = Vec::with_capacity(d);
        let mut terms = Vec::new();
        let mut indep = Vec::new();
        for (axis, c) in components.iter().enumerate() {
            if c.dim() != 1 {
                return Err(Error::DimensionMismatch {
                    expected: 1,
                    got: c.dim(),
                });
            }
            center.push(c.center[0]);
            for t in &c.terms {
                let mut coeff = SmallVec::from_elem(0.0, d);
                coeff[axis] = t.coeff[0];
                terms.push(Term {
                    monomial: t.monomial.clone(),
                    coeff,
                });
            }
            for h in &c.indep {
                let mut v = vec![0.0; d];
                v[axis] = h[0];
                indep.push(v);
            }
        }
        let mut pz = PolyZonotope {
            center,
            terms,
            indep,
        };
        pz.canonicalize();
        Ok(pz)
    }

    /// Scalar component `axis`.
    pub fn component(&self, axis: usize) -> PolyZonotope {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                monomial: t.monomial.clone(),
                coeff: SmallVec::from_elem(t.coeff[axis], 1),
            })
            .collect();
        let indep = self.indep.iter().map(|h| vec![h[axis]]).collect();
        let mut pz = PolyZonotope {
            center: vec![self.center[axis]],
            terms,
            indep,
        };
        pz.canonicalize();
        pz
    }

    /// Substitute values for trajectory-parameter indeterminates.
    pub fn slice(&self, assignment: &[(IndeterminateId, f64)]) -> Result<PolyZonotope> {
        for (id, v) in assignment {
            if !id.is_sliceable() {
                return Err(Error::InvalidArgument(format!(
                    "only trajectory parameters can be sliced, got {id:?}"
                )));
            }
            if !(-1.0..=1.0).contains(v) {
                return Err(Error::OutOfRange {
                    what: "slice value",
                    value: *v,
                    lo: -1.0,
                    hi: 1.0,
                });
            }
        }
        if assignment.is_empty() {
            return Ok(self.clone());
        }
        let lookup = |id: IndeterminateId| assignment.iter().find(|(a, _)| *a == id).map(|x| x.1);
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let mut factor = 1.0;
            let mut kept = Vec::with_capacity(t.monomial.powers().len());
            for (id, p) in t.monomial.powers() {
                match lookup(*id) {
                    Some(v) => factor *= v.powi(*p as i32),
                    None => kept.push((*id, *p)),
                }
            }
            let mut coeff = t.coeff.clone();
            coeff.iter_mut().for_each(|c| *c *= factor);
            terms.push(Term {
                monomial: Monomial(SmallVec::from_vec(kept)),
                coeff,
            });
        }
        let mut pz = PolyZonotope {
            center: self.center.clone(),
            terms,
            indep: self.indep.clone(),
        };
        pz.canonicalize();
        Ok(pz)
    }

    /// Per-axis `[c - Σ|g|, c + Σ|g|]` over dependent and independent generators.
    pub fn interval_bound(&self) -> Vec<Interval> {
        let r = self.abs_radius();
        self.center
            .iter()
            .zip(r)
            .map(|(c, r)| Interval {
                lo: c - r,
                hi: c + r,
            })
            .collect()
    }

    fn abs_radius(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.dim()];
        for t in &self.terms {
            for (acc, v) in r.iter_mut().zip(&t.coeff) {
                *acc += v.abs();
            }
        }
        for h in &self.indep {
            for (acc, v) in r.iter_mut().zip(h) {
                *acc += v.abs();
            }
        }
        r
    }

    /// Evaluate at a full assignment of dependent indeterminates and
    /// independent factors (missing independent factors default to 0).
    pub fn eval(&self, value: impl Fn(IndeterminateId) -> f64, indep: &[f64]) -> Vec<f64> {
        let mut out = self.center.clone();
        for t in &self.terms {
            let m = t.monomial.eval(&value);
            for (o, c) in out.iter_mut().zip(&t.coeff) {
                *o += c * m;
            }
        }
        for (h, e) in self.indep.iter().zip(indep.iter().chain(std::iter::repeat(&0.0))) {
            for (o, v) in out.iter_mut().zip(h) {
                *o += v * e;
            }
        }
        out
    }

    /// Over-approximate the smallest dependent generators (by 2-norm) with an
    /// axis-aligned box of independent generators, keeping at most
    /// `max_generators` dependent ones. Independent generators are compacted
    /// into at most `d` axis-aligned ones.
    pub fn reduce(&self, max_generators: usize) -> PolyZonotope {
        let max_generators = max_generators.max(1);
        let d = self.dim();
        let mut out = self.clone();
        let mut boxr = vec![0.0; d];
        if out.terms.len() > max_generators {
            let mut order: Vec<usize> = (0..out.terms.len()).collect();
            order.sort_by(|&a, &b| {
                out.terms[b]
                    .norm2()
                    .partial_cmp(&out.terms[a].norm2())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut keep = vec![false; out.terms.len()];
            for &i in order.iter().take(max_generators) {
                keep[i] = true;
            }
            let mut kept = Vec::with_capacity(max_generators);
            for (t, k) in out.terms.drain(..).zip(keep) {
                if k {
                    kept.push(t);
                } else {
                    for (acc, v) in boxr.iter_mut().zip(&t.coeff) {
                        *acc += v.abs();
                    }
                }
            }
            out.terms = kept;
        }
        if out.indep.len() > d || boxr.iter().any(|v| *v > 0.0) {
            for h in out.indep.drain(..) {
                for (acc, v) in boxr.iter_mut().zip(&h) {
                    *acc += v.abs();
                }
            }
            for (axis, r) in boxr.into_iter().enumerate() {
                if r > 0.0 {
                    let mut h = vec![0.0; d];
                    h[axis] = r;
                    out.indep.push(h);
                }
            }
        }
        out
    }

    /// Split into the part that depends only on trajectory parameters and
    /// the remainder, returned as `(k_only, rest)`; `k_only` keeps the center.
    pub fn split_by_sliceable(&self) -> (PolyZonotope, PolyZonotope) {
        let d = self.dim();
        let mut k_only = PolyZonotope::constant(self.center.clone());
        let mut rest = PolyZonotope::zero(d);
        for t in &self.terms {
            if t.monomial.only_kind(IndeterminateKind::TrajParam) {
                k_only.terms.push(t.clone());
            } else {
                rest.terms.push(t.clone());
            }
        }
        rest.indep = self.indep.clone();
        (k_only, rest)
    }

    /// Tighter per-axis enclosure that uses `[0, 1]` for all-even monomials.
    pub fn interval_bound_even_aware(&self) -> Vec<Interval> {
        let d = self.dim();
        let mut c = self.center.clone();
        let mut r = vec![0.0; d];
        for t in &self.terms {
            let even = t.monomial.all_even();
            for axis in 0..d {
                let g = t.coeff[axis];
                if even {
                    c[axis] += 0.5 * g;
                    r[axis] += 0.5 * g.abs();
                } else {
                    r[axis] += g.abs();
                }
            }
        }
        for h in &self.indep {
            for axis in 0..d {
                r[axis] += h[axis].abs();
            }
        }
        c.into_iter()
            .zip(r)
            .map(|(c, r)| Interval {
                lo: c - r,
                hi: c + r,
            })
            .collect()
    }
}

/// Free-function forms matching the operation names used in the docs.
pub fn pz_add(a: &PolyZonotope, b: &PolyZonotope) -> Result<PolyZonotope> {
    a.add(b)
}

pub fn pz_mul(a: &PolyZonotope, b: &PolyZonotope) -> Result<PolyZonotope> {
    a.mul(b)
}

pub fn pz_slice(a: &PolyZonotope, assignment: &[(IndeterminateId, f64)]) -> Result<PolyZonotope> {
    a.slice(assignment)
}

pub fn interval_bound(a: &PolyZonotope) -> Vec<Interval> {
    a.interval_bound()
}

pub fn reduce(a: &PolyZonotope, max_generators: usize) -> PolyZonotope {
    a.reduce(max_generators)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k(j: usize) -> IndeterminateId {
        IndeterminateId::traj(j)
    }

    fn t(i: usize) -> IndeterminateId {
        IndeterminateId::time(i)
    }

    fn random_scalar(rng: &mut ChaCha8Rng, n_terms: usize, with_indep: bool) -> PolyZonotope {
        let ids = [k(0), k(1), t(0)];
        let terms = (0..n_terms)
            .map(|_| {
                let powers = ids
                    .iter()
                    .map(|id| (*id, rng.gen_range(0..3u16)))
                    .collect();
                (Monomial::from_powers(powers), vec![rng.gen_range(-1.0..1.0)])
            })
            .collect();
        let indep = if with_indep {
            vec![vec![rng.gen_range(-0.2..0.2)]]
        } else {
            Vec::new()
        };
        PolyZonotope::from_parts(vec![rng.gen_range(-1.0..1.0)], terms, indep)
    }

    fn random_assignment(rng: &mut ChaCha8Rng) -> impl Fn(IndeterminateId) -> f64 {
        let vals: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        move |id: IndeterminateId| match (id.kind, id.id) {
            (IndeterminateKind::TrajParam, j) => vals[j as usize],
            _ => vals[2],
        }
    }

    #[test]
    fn like_terms_merge() {
        let a = PolyZonotope::scalar_var(1.0, 2.0, k(0));
        let b = PolyZonotope::scalar_var(3.0, 5.0, k(0));
        let s = a.add(&b).unwrap();
        assert_eq!(s.center(), &[4.0]);
        assert_eq!(s.n_generators(), 1);
        assert_eq!(s.terms()[0].coeff[0], 7.0);
    }

    #[test]
    fn adding_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_scalar(&mut rng, 4, true);
        assert_eq!(a.add(&PolyZonotope::zero(1)).unwrap(), a);
    }

    #[test]
    fn add_dimension_mismatch() {
        assert!(PolyZonotope::zero(1).add(&PolyZonotope::zero(3)).is_err());
    }

    #[test]
    fn x_times_x_is_x_squared() {
        let x = PolyZonotope::scalar_var(0.0, 1.0, k(0));
        let sq = x.mul(&x).unwrap();
        assert_eq!(sq.n_generators(), 1);
        assert_eq!(sq.terms()[0].monomial.degree_of(k(0)), 2);
        assert_eq!(sq.terms()[0].coeff[0], 1.0);
    }

    #[test]
    fn one_plus_x_times_one_minus_x() {
        let a = PolyZonotope::scalar_var(1.0, 1.0, k(0));
        let b = PolyZonotope::scalar_var(1.0, -1.0, k(0));
        let p = a.mul(&b).unwrap();
        assert_eq!(p.center(), &[1.0]);
        assert_eq!(p.n_generators(), 1);
        assert_eq!(p.terms()[0].coeff[0], -1.0);
        let b = p.interval_bound()[0];
        assert_eq!((b.lo, b.hi), (0.0, 2.0));
        // Exact range [0, 1] on a dense grid lies inside the bound.
        for i in 0..=2000 {
            let x = -1.0 + i as f64 / 1000.0;
            let v = p.eval(|_| x, &[])[0];
            assert!((v - (1.0 - x * x)).abs() < 1e-15);
            assert!(b.contains(v));
        }
    }

    #[test]
    fn evaluation_is_a_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_scalar(&mut rng, 3, false);
        let b = random_scalar(&mut rng, 3, false);
        let sum = a.add(&b).unwrap();
        let prod = a.mul(&b).unwrap();
        for _ in 0..100 {
            let v = random_assignment(&mut rng);
            let (ea, eb) = (a.eval(&v, &[])[0], b.eval(&v, &[])[0]);
            assert!((sum.eval(&v, &[])[0] - (ea + eb)).abs() < 1e-12);
            assert!((prod.eval(&v, &[])[0] - ea * eb).abs() < 1e-12);
        }
    }

    #[test]
    fn product_with_independent_parts_encloses() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let a = random_scalar(&mut rng, 4, true);
            let b = random_scalar(&mut rng, 4, true);
            let p = a.mul(&b).unwrap();
            for _ in 0..200 {
                let v = random_assignment(&mut rng);
                let ea = a.eval(&v, &[rng.gen_range(-1.0..=1.0)])[0];
                let eb = b.eval(&v, &[rng.gen_range(-1.0..=1.0)])[0];
                // Dependent part of the product evaluated exactly, remainder in the bound.
                let dep = p.eval(&v, &[])[0];
                let r: f64 = p.independent_generators().iter().map(|h| h[0].abs()).sum();
                assert!((ea * eb - dep).abs() <= r + 1e-12);
            }
        }
    }

    #[test]
    fn slicing_substitutes() {
        let a = PolyZonotope::scalar_var(3.0, 2.0, k(0));
        let s = a.slice(&[(k(0), 0.5)]).unwrap();
        assert_eq!(s.center(), &[4.0]);
        assert_eq!(s.n_generators(), 0);
        assert_eq!(a.slice(&[]).unwrap(), a);
    }

    #[test]
    fn slicing_rejects_bad_values() {
        let a = PolyZonotope::scalar_var(3.0, 2.0, k(0));
        assert!(matches!(
            a.slice(&[(k(0), 1.5)]),
            Err(Error::OutOfRange { .. })
        ));
        assert!(a.slice(&[(t(0), 0.5)]).is_err());
    }

    #[test]
    fn sliced_bound_inside_original_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a = random_scalar(&mut rng, 6, true);
            let v0 = rng.gen_range(-1.0..=1.0);
            let v1 = rng.gen_range(-1.0..=1.0);
            let s = a.slice(&[(k(0), v0), (k(1), v1)]).unwrap();
            assert!(s.indeterminates().iter().all(|id| !id.is_sliceable()));
            assert!(s.interval_bound()[0].is_subset_of(&a.interval_bound()[0], 1e-12));
        }
    }

    #[test]
    fn interval_bound_examples() {
        let x = Monomial::var(k(0));
        let a = PolyZonotope::from_parts(
            vec![2.0],
            vec![(x.clone(), vec![1.0]), (x.mul(&x), vec![0.5])],
            vec![],
        );
        let b = a.interval_bound()[0];
        assert_eq!((b.lo, b.hi), (0.5, 3.5));
        let c = PolyZonotope::scalar(1.25).interval_bound()[0];
        assert_eq!((c.lo, c.hi), (1.25, 1.25));
    }

    #[test]
    fn interval_bound_contains_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_scalar(&mut rng, 8, true);
        let b = a.interval_bound()[0];
        for _ in 0..100_000 {
            let v = random_assignment(&mut rng);
            let e = a.eval(&v, &[rng.gen_range(-1.0..=1.0)])[0];
            assert!(b.contains_tol(e, 1e-12));
        }
    }

    #[test]
    fn reduce_keeps_bounds_and_containment() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_scalar(&mut rng, 10, true);
        assert_eq!(a.reduce(a.n_generators()), a);
        let r = a.reduce(1);
        assert!(r.n_generators() <= 1);
        let (ba, br) = (a.interval_bound()[0], r.interval_bound()[0]);
        assert!(ba.is_subset_of(&br, 1e-12));
        for _ in 0..10_000 {
            let v = random_assignment(&mut rng);
            let e = a.eval(&v, &[rng.gen_range(-1.0..=1.0)])[0];
            assert!(br.contains_tol(e, 1e-12));
        }
    }

    #[test]
    fn stack_and_component_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let parts: Vec<_> = (0..3).map(|_| random_scalar(&mut rng, 3, true)).collect();
        let v = PolyZonotope::stack(&parts).unwrap();
        assert_eq!(v.dim(), 3);
        for (axis, p) in parts.iter().enumerate() {
            assert_eq!(&v.component(axis), p);
        }
    }

    #[test]
    fn exponent_matrix_rows_are_unique() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_scalar(&mut rng, 20, false);
        let (ids, rows) = a.exponent_matrix();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        let set: BTreeSet<_> = rows.iter().collect();
        assert_eq!(set.len(), rows.len());
    }
}
