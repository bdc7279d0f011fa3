use super::PolyZonotope;
use crate::error::{Error, Result};

/// Taylor enclosure of `(cos q, sin q)` for a scalar polynomial zonotope.
///
/// Both functions are expanded about the midpoint `m` of the interval bound
/// of `q` up to `order`, and the Lagrange remainder
/// `ρ^{order+1} / (order+1)!` (with `ρ` the bound's half-width) is added as an
/// independent generator. Every derivative of sin and cos is bounded by one,
/// so the remainder is valid for any order.
pub fn pz_trig(q: &PolyZonotope, order: usize) -> Result<(PolyZonotope, PolyZonotope)> {
    if q.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: q.dim(),
        });
    }
    if order == 0 {
        return Err(Error::InvalidArgument("trig expansion order must be ≥ 1".into()));
    }
    let bound = q.interval_bound()[0];
    let width = bound.width();
    if !(width < std::f64::consts::PI) {
        return Err(Error::TrigWidth(width));
    }
    let m = bound.mid();
    let rho = bound.radius();
    let (sm, cm) = m.sin_cos();
    let delta = q.add_const(&[-m])?;

    // Derivatives of cos at m cycle through cos, -sin, -cos, sin.
    let dcos = [cm, -sm, -cm, sm];
    let dsin = [sm, cm, -sm, -cm];

    let mut cos_pz = PolyZonotope::scalar(cm);
    let mut sin_pz = PolyZonotope::scalar(sm);
    let mut power = PolyZonotope::scalar(1.0);
    let mut factorial = 1.0;
    for n in 1..=order {
        power = power.mul(&delta)?;
        factorial *= n as f64;
        cos_pz = cos_pz.add(&power.scale(dcos[n % 4] / factorial))?;
        sin_pz = sin_pz.add(&power.scale(dsin[n % 4] / factorial))?;
    }
    let remainder = rho.powi(order as i32 + 1) / (factorial * (order + 1) as f64);
    if remainder > 0.0 {
        let r = PolyZonotope::from_parts(vec![0.0], Vec::new(), vec![vec![remainder]]);
        cos_pz = cos_pz.add(&r)?;
        sin_pz = sin_pz.add(&r)?;
    }
    Ok((cos_pz, sin_pz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zonotope::{IndeterminateId, Monomial};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn constant_angle_is_exact() {
        let (c, s) = pz_trig(&PolyZonotope::scalar(0.0), 2).unwrap();
        let (bc, bs) = (c.interval_bound()[0], s.interval_bound()[0]);
        assert_eq!((bc.lo, bc.hi), (1.0, 1.0));
        assert_eq!((bs.lo, bs.hi), (0.0, 0.0));
    }

    #[test]
    fn cos_bound_covers_thirty_degree_sweep() {
        let q = PolyZonotope::scalar_var(0.0, PI / 6.0, IndeterminateId::traj(0));
        let (c, _) = pz_trig(&q, 2).unwrap();
        let b = c.interval_bound()[0];
        for i in 0..=10_000 {
            let th = -PI / 6.0 + i as f64 * (PI / 3.0) / 10_000.0;
            assert!(b.contains(th.cos()));
        }
        assert!(b.lo <= (PI / 6.0).cos() && b.hi >= 1.0);
    }

    #[test]
    fn wide_angles_are_rejected() {
        let q = PolyZonotope::scalar_var(0.0, 2.0, IndeterminateId::traj(0));
        assert!(matches!(pz_trig(&q, 2), Err(Error::TrigWidth(_))));
    }

    #[test]
    fn containment_under_sampling_all_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = IndeterminateId::traj(0);
        let t = IndeterminateId::time(0);
        for order in 1..=4 {
            for _ in 0..1000 {
                let q = PolyZonotope::from_parts(
                    vec![rng.gen_range(-3.0..3.0)],
                    vec![
                        (Monomial::var(k), vec![rng.gen_range(-0.4..0.4)]),
                        (Monomial::var(t), vec![rng.gen_range(-0.2..0.2)]),
                        (Monomial::var(k).mul(&Monomial::var(t)), vec![rng.gen_range(-0.2..0.2)]),
                    ],
                    vec![vec![rng.gen_range(-0.05..0.05)]],
                );
                let (c, s) = pz_trig(&q, order).unwrap();
                let (xk, xt, e) = (
                    rng.gen_range(-1.0..=1.0),
                    rng.gen_range(-1.0..=1.0),
                    rng.gen_range(-1.0..=1.0),
                );
                let val = |id: IndeterminateId| if id == k { xk } else { xt };
                let th = q.eval(val, &[e])[0];
                // Sliced at the same dependent values, the remainder lives in the independent part.
                let cd = c.eval(val, &[])[0];
                let sd = s.eval(val, &[])[0];
                let rc: f64 = c.independent_generators().iter().map(|h| h[0].abs()).sum();
                let rs: f64 = s.independent_generators().iter().map(|h| h[0].abs()).sum();
                assert!((th.cos() - cd).abs() <= rc + 1e-12, "order {order}");
                assert!((th.sin() - sd).abs() <= rs + 1e-12, "order {order}");
                assert!(c.interval_bound()[0].contains_tol(th.cos(), 1e-12));
            }
        }
    }
}
