//! The hyperbolic plane in the log model.
//!
//! Points are `(x, z)` with length element `ds² = dz² + e^{-2z} dx²`, which is
//! the upper half plane `(x, ξ)` after `ξ = e^z`. The leaves of SOL carry the
//! rescaled metric `dz² + e^{-2·rate·z} dx²`; [`leaf_distance`] and
//! [`leaf_geodesic_point`] handle those by the substitution
//! `(x, z) ↦ (rate·x, rate·z)`, which multiplies lengths by `rate`.
//!
//! Isometries used by the test suite: the shift `(x, z) ↦ (x + c, z)` and the
//! dilation `(x, z) ↦ (e^c·x, z + c)`. A horocyclic chord at height `z`
//! satisfies `d((x, z), (x', z)) ≤ e^{-z}·|x − x'|`.
//!
//! The upside-down plane `dz² + e^{2z} dy²` is the same plane with `z`
//! negated; callers flip the sign of `z` themselves.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Distances below this are reported as exactly zero.
pub const COINCIDENT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HPoint {
    pub x: f64,
    pub z: f64,
}

impl HPoint {
    pub const fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }

    fn scaled(self, rate: f64) -> Self {
        Self::new(self.x * rate, self.z * rate)
    }

    pub fn shift(self, c: f64) -> Self {
        Self::new(self.x + c, self.z)
    }

    pub fn dilate(self, c: f64) -> Self {
        Self::new(self.x * c.exp(), self.z + c)
    }
}

/// `ln(2 sinh(w))` for `w > 0` without overflow.
fn ln_two_sinh(w: f64) -> f64 {
    w + (-(-2.0 * w).exp_m1()).ln()
}

pub(crate) fn distance_unchecked(p: HPoint, q: HPoint) -> f64 {
    let dz = p.z - q.z;
    // cosh d − 1 = (Δx·e^{-(z_p+z_q)/2})²/2 + 2 sinh²(Δz/2)
    let u = (p.x - q.x).abs() * (-(p.z + q.z) / 2.0).exp();
    let sh = (dz / 2.0).sinh();
    let a = 0.5 * u * u + 2.0 * sh * sh;
    let d = if a.is_finite() && a < 1e150 {
        (a + (a * (a + 2.0)).sqrt()).ln_1p()
    } else {
        // d ≈ ln(2a) = ln(u² + (2 sinh(|Δz|/2))²) in log space
        let lu = 2.0 * u.ln();
        let ls = if dz == 0.0 {
            f64::NEG_INFINITY
        } else {
            2.0 * ln_two_sinh(dz.abs() / 2.0)
        };
        let (hi, lo) = if lu > ls { (lu, ls) } else { (ls, lu) };
        hi + (lo - hi).exp().ln_1p()
    };
    if d < COINCIDENT {
        0.0
    } else {
        d
    }
}

/// Hyperbolic distance in the unit-curvature log model.
pub fn h2_distance(p: HPoint, q: HPoint) -> Result<f64> {
    ensure_finite(&[p.x, p.z, q.x, q.z], "h2_distance input")?;
    Ok(distance_unchecked(p, q))
}

/// Distance for the metric `dz² + e^{-2·rate·z} dx²`.
pub fn leaf_distance(p: HPoint, q: HPoint, rate: f64) -> f64 {
    distance_unchecked(p.scaled(rate), q.scaled(rate)) / rate
}

pub(crate) fn geodesic_point_unchecked(p: HPoint, q: HPoint, s: f64) -> HPoint {
    if s == 0.0 {
        return p;
    }
    if s == 1.0 {
        return q;
    }
    let d = distance_unchecked(p, q);
    if d == 0.0 {
        return p;
    }
    // Move p to (0, 1) in the half plane. Geodesics are arcs of the hyperboloid
    // spanned by the endpoints; the light-cone coordinate X0 − X2 = 1/ξ and
    // X1 = x/ξ are linear along them.
    let alpha = (-s * d).exp() * (-(-2.0 * (1.0 - s) * d).exp_m1()) / (-(-2.0 * d).exp_m1());
    let beta = ((s - 1.0) * d).exp() * (-(-2.0 * s * d).exp_m1()) / (-(-2.0 * d).exp_m1());
    let inv_xi = alpha + beta * (p.z - q.z).exp();
    let x_rel = beta * (q.x - p.x) * (-q.z).exp() / inv_xi;
    HPoint::new(p.x + p.z.exp() * x_rel, p.z - inv_xi.ln())
}

/// Point at arclength fraction `s` along the geodesic from `p` to `q`.
pub fn h2_geodesic_point(p: HPoint, q: HPoint, s: f64) -> Result<HPoint> {
    ensure_finite(&[p.x, p.z, q.x, q.z, s], "h2_geodesic_point input")?;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Range {
            name: "s",
            detail: format!("{s} not in [0, 1]"),
        });
    }
    Ok(geodesic_point_unchecked(p, q, s))
}

pub fn leaf_geodesic_point(p: HPoint, q: HPoint, s: f64, rate: f64) -> HPoint {
    let r = geodesic_point_unchecked(p.scaled(rate), q.scaled(rate), s);
    HPoint::new(r.x / rate, r.z / rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn distance_examples() {
        let o = HPoint::new(0.0, 0.0);
        assert_eq!(h2_distance(o, o).unwrap(), 0.0);
        assert!(close(h2_distance(o, HPoint::new(0.0, 5.0)).unwrap(), 5.0, 1e-12));
        let d = h2_distance(o, HPoint::new(1.0, 0.0)).unwrap();
        assert!(close(d, 1.5f64.acosh(), 1e-14));
        assert!(close(d, 0.962424, 1e-6));
    }

    #[test]
    fn rejects_non_finite() {
        let o = HPoint::new(0.0, 0.0);
        assert!(matches!(
            h2_distance(o, HPoint::new(f64::NAN, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(h2_distance(HPoint::new(f64::INFINITY, 0.0), o).is_err());
    }

    #[test]
    fn geodesic_examples() {
        let p = HPoint::new(0.3, -1.0);
        let q = HPoint::new(2.0, 0.5);
        assert_eq!(h2_geodesic_point(p, q, 0.0).unwrap(), p);
        assert_eq!(h2_geodesic_point(p, q, 1.0).unwrap(), q);
        let m = h2_geodesic_point(HPoint::new(0.0, 0.0), HPoint::new(0.0, 4.0), 0.5).unwrap();
        assert!(close(m.x, 0.0, 1e-12) && close(m.z, 2.0, 1e-12));
        assert!(matches!(
            h2_geodesic_point(p, q, 1.5),
            Err(Error::Range { name: "s", .. })
        ));
    }

    #[test]
    fn midpoint_of_horizontal_pair_matches_bisection() {
        // Oracle: bisection along the perpendicular bisector x = 1/2 for the
        // point equidistant from both ends with distance d/2.
        let p = HPoint::new(0.0, 0.0);
        let q = HPoint::new(1.0, 0.0);
        let half = h2_distance(p, q).unwrap() / 2.0;
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let c = HPoint::new(0.5, mid);
            let g = h2_distance(p, c).unwrap();
            let h = h2_distance(p, HPoint::new(0.5, mid + 1e-9)).unwrap();
            if h < g {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = HPoint::new(0.5, 0.5 * (lo + hi));
        let m = h2_geodesic_point(p, q, 0.5).unwrap();
        assert!(close(h2_distance(p, oracle).unwrap(), half, 1e-6));
        assert!(close(m.x, oracle.x, 1e-6) && close(m.z, oracle.z, 1e-4));
        assert!(close(h2_distance(p, m).unwrap(), 0.481212, 1e-6));
        assert!(close(h2_distance(q, m).unwrap(), 0.481212, 1e-6));
    }

    #[test]
    fn geodesic_fraction_is_arclength() {
        let p = HPoint::new(-3.0, 2.0);
        let q = HPoint::new(40.0, -1.5);
        let d = h2_distance(p, q).unwrap();
        for k in 0..=20 {
            let s = k as f64 / 20.0;
            let r = h2_geodesic_point(p, q, s).unwrap();
            assert!(close(h2_distance(p, r).unwrap(), s * d, 1e-9));
            assert!(close(h2_distance(r, q).unwrap(), (1.0 - s) * d, 1e-9));
        }
    }

    #[test]
    fn leaf_metric_rescaling() {
        // dz² + e^{-z}dx² is a plane of curvature −1/4: lengths double.
        let p = HPoint::new(0.0, 0.0);
        let q = HPoint::new(1.0, 0.0);
        let d = leaf_distance(p, q, 0.5);
        assert!(close(d, 2.0 * 1.125f64.acosh(), 1e-12));
        assert!(close(leaf_distance(p, HPoint::new(0.0, 3.0), 0.5), 3.0, 1e-12));
        let m = leaf_geodesic_point(p, q, 0.25, 0.5);
        assert!(close(leaf_distance(p, m, 0.5), 0.25 * d, 1e-9));
    }

    #[test]
    fn far_points_do_not_overflow() {
        let d = h2_distance(HPoint::new(0.0, -300.0), HPoint::new(1e100, 300.0)).unwrap();
        assert!(d.is_finite() && (d - 600.0).abs() < 1e-9, "{d}");
    }
}
