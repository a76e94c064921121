//! One-dimensional helpers shared by the solvers.

/// `sum_i c[i] a^i`
pub(crate) fn poly_eval(c: &[f64], a: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ci| acc * a + ci)
}

fn poly_derivs(c: &[f64], a: f64) -> (f64, f64) {
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for i in (1..c.len()).rev() {
        d1 = d1 * a + i as f64 * c[i];
        if i >= 2 {
            d2 = d2 * a + (i * (i - 1)) as f64 * c[i];
        }
    }
    (d1, d2)
}

/// Minimiser over `a >= 0` of a polynomial that is convex on `[0, inf)`.
/// Returns `Some(0.0)` when the slope at zero is not negative and `None` when
/// the polynomial decreases without bound or carries non-finite data.
pub(crate) fn minimize_convex_poly(c: &[f64]) -> Option<f64> {
    if c.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let slope = |a: f64| poly_derivs(c, a).0;
    if slope(0.0) >= 0.0 {
        return Some(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while slope(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e30 {
            return None;
        }
    }
    let mut a = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (d1, d2) = poly_derivs(c, a);
        if d1 == 0.0 {
            return Some(a);
        }
        if d1 < 0.0 {
            lo = a;
        } else {
            hi = a;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let newton = a - d1 / d2;
        a = if d2 > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    Some(a)
}
