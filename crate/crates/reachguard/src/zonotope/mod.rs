//! Set representations: intervals, zonotopes and polynomial zonotopes.

mod interval;
mod polyzono;
mod trig;
mod zono;

pub use interval::Interval;
pub use polyzono::{
    interval_bound, pz_add, pz_mul, pz_slice, reduce, IndeterminateId, IndeterminateKind,
    Monomial, PolyZonotope, Term, COEFF_EPS,
};
pub use trig::pz_trig;
pub use zono::{minkowski_sum, Zonotope, ZonotopeSpec};
