//! Adaptive Gauss–Kronrod quadrature on finite intervals.
//!
//! The integrands in this crate live on (0,1) and typically blow up at
//! one or both endpoints like u^(-a) or (1-u)^(-b) with a, b < 2.
//! Callers neutralize those singularities with the substitutions
//! u = s^2 near 0 and u = 1 - s^2 near 1 (see [`integrate_unit`]);
//! this module only provides the raw adaptive scheme.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

/// 15-point Kronrod abscissae on [-1, 1] (positive half).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

/// 15-point Kronrod weights.
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// 7-point Gauss weights (embedded rule).
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Error)]
pub enum QuadError {
    #[error("quadrature did not converge: value so far {value:.6e}, residual estimate {residual:.3e} exceeds tolerance {tol:.3e}")]
    NonConvergence { value: f64, residual: f64, tol: f64 },
    #[error("quadrature produced a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub value: f64,
    pub abs_err: f64,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

/// One Gauss–Kronrod 15(7) panel, QUADPACK-style error rescaling.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);

    let mut res_kronrod = f_center * WGK[7];
    let mut res_gauss = f_center * WG[3];
    let mut res_abs = res_kronrod.abs();

    let mut fv = [[0.0f64; 2]; 7];
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv[j] = [f1, f2];
        let sum = f1 + f2;
        res_kronrod += WGK[j] * sum;
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            // odd Kronrod indices are the embedded Gauss nodes
            res_gauss += WG[j / 2] * sum;
        }
    }

    let mean = 0.5 * res_kronrod;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv[j][0] - mean).abs() + (fv[j][1] - mean).abs());
    }

    let value = res_kronrod * half;
    res_abs *= half.abs();
    res_asc *= half.abs();

    let mut err = ((res_kronrod - res_gauss) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

/// Adaptive integration of `f` over [a, b] to absolute tolerance `tol`.
///
/// Worst-first bisection; fails with the residual estimate when the
/// segment budget is exhausted, which is also how divergent integrals
/// (for instance an infinite switch rate) surface to callers.
pub fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<Quad, QuadError> {
    adaptive_with_budget(f, a, b, tol, 2000)
}

pub fn adaptive_with_budget(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_segments: usize,
) -> Result<Quad, QuadError> {
    if a == b {
        return Ok(Quad { value: 0.0, abs_err: 0.0 });
    }
    let (v, e) = gk15(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, err: e });
    let mut total_value = v;
    let mut total_err = e;

    while total_err > tol && heap.len() < max_segments {
        let worst = heap.pop().expect("heap cannot be empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval at floating-point resolution; keep its estimate
            total_err = total_err.max(worst.err);
            heap.push(worst);
            break;
        }
        total_value -= worst.value;
        total_err -= worst.err;
        let (v1, e1) = gk15(f, worst.a, mid);
        let (v2, e2) = gk15(f, mid, worst.b);
        total_value += v1 + v2;
        total_err += e1 + e2;
        heap.push(Segment { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, err: e2 });
    }

    if !total_value.is_finite() {
        return Err(QuadError::NonFinite);
    }
    if total_err > tol {
        return Err(QuadError::NonConvergence {
            value: total_value,
            residual: total_err,
            tol,
        });
    }
    Ok(Quad { value: total_value, abs_err: total_err })
}

/// Integrate `g(u, 1-u)` over (lo, hi) ⊆ (0, 1), substituting u = s^2
/// on the part below 1/2 when `sub_left`, and u = 1 - s^2 above 1/2
/// when `sub_right`. The substitutions turn u^(-a)-style endpoint
/// blowups with a < 2 into integrable (and for a <= 3/2 bounded)
/// integrands.
///
/// The integrand receives the complement 1 - u as a separate exact
/// argument: under the right substitution it equals s^2 directly, so
/// (1-u)^(-b)-type factors keep full relative precision arbitrarily
/// close to 1 instead of collapsing through the rounding of 1 - s^2.
pub fn integrate_unit(
    g: &dyn Fn(f64, f64) -> f64,
    lo: f64,
    hi: f64,
    sub_left: bool,
    sub_right: bool,
    tol: f64,
) -> Result<Quad, QuadError> {
    assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi);
    let mut value = 0.0;
    let mut abs_err = 0.0;
    let split = 0.5f64;
    let pieces = [(lo, hi.min(split), true), (lo.max(split), hi, false)];
    let piece_tol = 0.5 * tol;
    for (p_lo, p_hi, is_left) in pieces {
        if p_hi <= p_lo {
            continue;
        }
        let q = if is_left && sub_left {
            let h = move |s: f64| g(s * s, 1.0 - s * s) * 2.0 * s;
            adaptive(&h, p_lo.sqrt(), p_hi.sqrt(), piece_tol)?
        } else if !is_left && sub_right {
            let h = move |s: f64| g(1.0 - s * s, s * s) * 2.0 * s;
            adaptive(&h, (1.0 - p_hi).sqrt(), (1.0 - p_lo).sqrt(), piece_tol)?
        } else {
            let h = move |u: f64| g(u, 1.0 - u);
            adaptive(&h, p_lo, p_hi, piece_tol)?
        };
        value += q.value;
        abs_err += q.abs_err;
    }
    Ok(Quad { value, abs_err })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = adaptive(&|x| 3.0 * x * x, 0.0, 1.0, 1e-12).unwrap();
        assert!((q.value - 1.0).abs() < 1e-13);
    }

    #[test]
    fn beta_half_half_needs_substitution() {
        // B(1/2, 1/2) = pi with integrand u^(-1/2)(1-u)^(-1/2)
        let g = |u: f64, omu: f64| u.powf(-0.5) * omu.powf(-0.5);
        let q = integrate_unit(&g, 0.0, 1.0, true, true, 1e-12).unwrap();
        assert!((q.value - std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn asymmetric_beta_with_kink_after_substitution() {
        // B(1/2, 3/4): the substituted right integrand has an s^(1/2)
        // kink at 0, which forces deep subdivision toward u = 1 and
        // exercises the exact-complement evaluation
        let g = |u: f64, omu: f64| u.powf(-0.5) * omu.powf(-0.25);
        let q = integrate_unit(&g, 0.0, 1.0, true, true, 1e-10).unwrap();
        // B(1/2, 3/4) = Gamma(1/2) Gamma(3/4) / Gamma(5/4)
        let expect = 2.3962804694711844; // Gamma-function oracle
        assert!((q.value - expect).abs() < 1e-9, "{}", q.value);
    }

    #[test]
    fn partial_interval_against_closed_form() {
        // int_0^x u^(-1/2) du = 2 sqrt(x)
        let g = |u: f64, _: f64| u.powf(-0.5);
        let q = integrate_unit(&g, 0.0, 0.3, true, false, 1e-12).unwrap();
        assert!((q.value - 2.0 * 0.3f64.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn divergent_integral_errors_out() {
        // (1-u)^(-3/2) diverges at 1
        let g = |_: f64, omu: f64| omu.powf(-1.5);
        let r = integrate_unit(&g, 0.0, 1.0, false, false, 1e-10);
        assert!(r.is_err());
    }

    #[test]
    fn divergence_survives_substitution() {
        // even with the right substitution, (1-u)^(-2) keeps diverging
        let g = |_: f64, omu: f64| omu.powf(-2.0);
        let r = integrate_unit(&g, 0.0, 1.0, false, true, 1e-10);
        assert!(r.is_err());
    }
}
