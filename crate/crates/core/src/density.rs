//! Splitting densities and their analytic functionals.
//!
//! A splitting density f on (0,1) describes the jump factors of a
//! multiplicative subordinator M: the points (s, F_s) form a Poisson
//! random measure with intensity ds * u f(u) du, and
//!
//! ```text
//!     Phi(rho) = int_0^1 (1 - u^rho) u f(u) du,    E(M_t^rho) = exp(-t Phi(rho)).
//! ```
//!
//! Everything here is computed by adaptive quadrature with endpoint
//! substitutions chosen from declared singularity exponents (a, b),
//! asserting f(u) ~ C u^(-a) near 0 and ~ C' (1-u)^(-b) near 1.
//!
//! Internally a density is evaluated as f(u, 1-u) with the complement
//! passed exactly, so that (1-u)^(-b) factors retain full relative
//! precision arbitrarily close to 1 (where the quadrature substitutions
//! and the factor tables need them).

use std::fmt;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::quad::{self, QuadError};

/// Plain single-argument evaluation, the public construction contract.
pub type EvalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Two-argument evaluation (u, 1-u) used by the quadrature and
/// sampling layers; the second argument is exact near u = 1.
pub type Eval2Fn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Default absolute quadrature tolerance for all analytic functionals.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// 1 - u^rho evaluated from whichever of (u, 1-u) is exact on its side.
#[inline]
fn one_minus_pow(u: f64, one_minus_u: f64, rho: f64) -> f64 {
    if u <= 0.5 {
        -f64::exp_m1(rho * u.ln())
    } else {
        -f64::exp_m1(rho * f64::ln_1p(-one_minus_u))
    }
}

const GRID_POINTS: usize = 1000;

#[derive(Debug, Clone, Error)]
pub enum DensityError {
    #[error("density `{label}` is not a valid splitting density: Phi(1) quadrature failed ({source})")]
    NotIntegrable { label: String, source: QuadError },
    #[error("density `{label}` is negative at u = {u}: {value}")]
    Negative { label: String, u: f64, value: f64 },
    #[error("switching function `{label}` leaves [0,1] at u = {u}: {value}")]
    SwitchingOutOfRange { label: String, u: f64, value: f64 },
    #[error("{what} requires {requirement}, got {got}")]
    Domain { what: &'static str, requirement: &'static str, got: f64 },
    #[error("switch rate is infinite or quadrature failed: {source}")]
    InfiniteSwitchRate { source: QuadError },
    #[error("switching condition int u^2 p(u) f(u) du diverges: {source}")]
    SwitchConditionViolated { source: QuadError },
    #[error("rates phi = {phi} and dual phi-hat = {phi_hat} disagree beyond tolerance {tol}")]
    DualRateMismatch { phi: f64, phi_hat: f64, tol: f64 },
    #[error("quadrature failed for {what}: {source}")]
    Quad { what: &'static str, source: QuadError },
    #[error("could not parse density spec `{0}`")]
    BadSpec(String),
    #[error("tabulated density file invalid: {0}")]
    BadTable(String),
}

/// A density f on (0,1) with finite Phi(1), plus evaluation metadata.
#[derive(Clone)]
pub struct SplittingDensity {
    eval: Eval2Fn,
    /// Asserted endpoint behavior: f(u) ~ C u^(-a) near 0, ~ C'(1-u)^(-b) near 1.
    sing: (f64, f64),
    label: String,
    quad_tol: f64,
    phi_one: f64,
}

impl fmt::Debug for SplittingDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SplittingDensity")
            .field("label", &self.label)
            .field("sing", &self.sing)
            .field("phi_one", &self.phi_one)
            .finish()
    }
}

impl SplittingDensity {
    /// Build a density from a plain evaluation closure. Fine for
    /// densities whose (1-u) singularity is milder than the built-in
    /// families'; the closure only sees u.
    pub fn new(
        label: impl Into<String>,
        sing: (f64, f64),
        eval: EvalFn,
    ) -> Result<Self, DensityError> {
        Self::from_eval2(label, sing, Arc::new(move |u, _| eval(u)))
    }

    /// Build a density from a (u, 1-u) closure; the second argument is
    /// exact near 1 and should be used for any (1-u) powers.
    pub fn from_eval2(
        label: impl Into<String>,
        sing: (f64, f64),
        eval: Eval2Fn,
    ) -> Result<Self, DensityError> {
        let label = label.into();
        for i in 0..GRID_POINTS {
            let u = (i as f64 + 0.5) / GRID_POINTS as f64;
            let v = eval(u, 1.0 - u);
            if !(v >= 0.0) {
                return Err(DensityError::Negative { label, u, value: v });
            }
        }
        let mut d = SplittingDensity {
            eval,
            sing,
            label,
            quad_tol: DEFAULT_QUAD_TOL,
            phi_one: f64::NAN,
        };
        d.phi_one = d
            .integrate_weighted(|u, omu| u * omu, 0.0, 1.0)
            .map_err(|source| DensityError::NotIntegrable { label: d.label.clone(), source })?;
        Ok(d)
    }

    /// The Brownian splitting density (2 pi)^(-1/2) u^(-3/2) (1-u)^(-3/2).
    pub fn brownian() -> Self {
        let c = (2.0 * std::f64::consts::PI).sqrt().recip();
        Self::from_eval2(
            "brownian",
            (1.5, 1.5),
            Arc::new(move |u, omu| c * u.powf(-1.5) * omu.powf(-1.5)),
        )
        .expect("brownian density is valid")
    }

    /// The beta family scale * u^(-a-1) (1-u)^(-b-1); valid for a, b < 1.
    pub fn beta_family(a: f64, b: f64, scale: f64) -> Result<Self, DensityError> {
        if !(scale > 0.0) {
            return Err(DensityError::Domain {
                what: "beta_family",
                requirement: "scale > 0",
                got: scale,
            });
        }
        Self::from_eval2(
            format!("beta({a},{b},{scale})"),
            (a + 1.0, b + 1.0),
            Arc::new(move |u, omu| scale * u.powf(-a - 1.0) * omu.powf(-b - 1.0)),
        )
    }

    /// Parse a registry spec: `brownian`, `beta(a,b)`, `beta(a,b,scale)`
    /// or `file:<path>` for a tabulated density.
    pub fn from_spec(spec: &str) -> Result<Self, DensityError> {
        let spec = spec.trim();
        if spec == "brownian" {
            return Ok(Self::brownian());
        }
        if let Some(rest) = spec.strip_prefix("beta(").and_then(|s| s.strip_suffix(')')) {
            let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
            let nums: Option<Vec<f64>> = parts.iter().map(|p| p.parse().ok()).collect();
            if let Some(nums) = nums {
                return match nums.as_slice() {
                    [a, b] => Self::beta_family(*a, *b, 1.0),
                    [a, b, scale] => Self::beta_family(*a, *b, *scale),
                    _ => Err(DensityError::BadSpec(spec.to_string())),
                };
            }
            return Err(DensityError::BadSpec(spec.to_string()));
        }
        if let Some(path) = spec.strip_prefix("file:") {
            let text = std::fs::read_to_string(path)
                .map_err(|e| DensityError::BadTable(format!("{path}: {e}")))?;
            return Self::from_table_json(&text);
        }
        Err(DensityError::BadSpec(spec.to_string()))
    }

    /// Tabulated density: interior knots (u_i, f(u_i)) plus declared
    /// exponents. The regular part f(u) u^a (1-u)^b is interpolated
    /// linearly between knots and held constant outside them, so the
    /// declared endpoint behavior is exact.
    pub fn from_table_json(text: &str) -> Result<Self, DensityError> {
        #[derive(Deserialize)]
        struct Table {
            label: String,
            singularity_exponents: (f64, f64),
            knots: Vec<(f64, f64)>,
        }
        let t: Table =
            serde_json::from_str(text).map_err(|e| DensityError::BadTable(e.to_string()))?;
        if t.knots.len() < 2 {
            return Err(DensityError::BadTable("need at least two knots".into()));
        }
        let (a, b) = t.singularity_exponents;
        let mut us = Vec::with_capacity(t.knots.len());
        let mut regs = Vec::with_capacity(t.knots.len());
        for &(u, f) in &t.knots {
            if !(0.0 < u && u < 1.0) {
                return Err(DensityError::BadTable(format!("knot u = {u} outside (0,1)")));
            }
            if let Some(&prev) = us.last() {
                if u <= prev {
                    return Err(DensityError::BadTable("knots must be strictly increasing".into()));
                }
            }
            us.push(u);
            regs.push(f * u.powf(a) * (1.0 - u).powf(b));
        }
        let eval = Arc::new(move |u: f64, omu: f64| {
            let reg = match us.binary_search_by(|x| x.partial_cmp(&u).unwrap()) {
                Ok(i) => regs[i],
                Err(0) => regs[0],
                Err(i) if i == us.len() => regs[us.len() - 1],
                Err(i) => {
                    let w = (u - us[i - 1]) / (us[i] - us[i - 1]);
                    regs[i - 1] * (1.0 - w) + regs[i] * w
                }
            };
            reg * u.powf(-a) * omu.powf(-b)
        });
        Self::from_eval2(t.label, (a, b), eval)
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.eval)(u, 1.0 - u)
    }

    /// Evaluation with the complement supplied exactly.
    pub fn eval2(&self, u: f64, one_minus_u: f64) -> f64 {
        (self.eval)(u, one_minus_u)
    }

    pub fn eval2_fn(&self) -> Eval2Fn {
        self.eval.clone()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn singularity_exponents(&self) -> (f64, f64) {
        self.sing
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    pub fn with_quad_tol(mut self, tol: f64) -> Self {
        self.quad_tol = tol;
        self
    }

    /// Phi(1) = int u(1-u) f(u) du, computed once at construction.
    pub fn phi_one(&self) -> f64 {
        self.phi_one
    }

    /// int_lo^hi w(u, 1-u) f(u) du with endpoint substitutions chosen
    /// by the declared exponents.
    pub fn integrate_weighted(
        &self,
        w: impl Fn(f64, f64) -> f64,
        lo: f64,
        hi: f64,
    ) -> Result<f64, QuadError> {
        let f = &self.eval;
        let g = |u: f64, omu: f64| w(u, omu) * f(u, omu);
        // substitute at any singular endpoint: plain bisection cannot
        // resolve even integrable power blowups
        let q =
            quad::integrate_unit(&g, lo, hi, self.sing.0 > 0.0, self.sing.1 > 0.0, self.quad_tol)?;
        Ok(q.value)
    }

    /// Laplace exponent Phi(rho) = int (1 - u^rho) u f(u) du.
    pub fn laplace_exponent(&self, rho: f64) -> Result<f64, DensityError> {
        if rho < 0.0 {
            return Err(DensityError::Domain {
                what: "laplace_exponent",
                requirement: "rho >= 0",
                got: rho,
            });
        }
        if rho == 0.0 {
            return Ok(0.0);
        }
        self.integrate_weighted(|u, omu| one_minus_pow(u, omu, rho) * u, 0.0, 1.0)
            .map_err(|source| DensityError::Quad { what: "laplace_exponent", source })
    }

    /// Truncated exponent Phi_eps(rho) = int_0^(1-eps) (1 - u^rho) u f(u) du,
    /// the exact exponent of the simulated process when jumps with
    /// factor above 1 - eps are discarded.
    pub fn laplace_exponent_truncated(&self, rho: f64, eps: f64) -> Result<f64, DensityError> {
        if rho < 0.0 {
            return Err(DensityError::Domain {
                what: "laplace_exponent_truncated",
                requirement: "rho >= 0",
                got: rho,
            });
        }
        if rho == 0.0 {
            return Ok(0.0);
        }
        self.integrate_weighted(|u, omu| one_minus_pow(u, omu, rho) * u, 0.0, 1.0 - eps)
            .map_err(|source| DensityError::Quad { what: "laplace_exponent_truncated", source })
    }

    /// Phi(rho+1, rho+1) = int (1-u)^(rho+1) u f(u) du.
    pub fn phi_second(&self, rho: f64) -> Result<f64, DensityError> {
        if rho < 0.0 {
            return Err(DensityError::Domain {
                what: "phi_second",
                requirement: "rho >= 0",
                got: rho,
            });
        }
        self.integrate_weighted(|u, omu| omu.powf(rho + 1.0) * u, 0.0, 1.0)
            .map_err(|source| DensityError::Quad { what: "phi_second", source })
    }

    /// The symmetrisation f*(u) = u f(u) + (1-u) f(1-u).
    pub fn symmetrize(&self) -> Result<SplittingDensity, DensityError> {
        let f = self.eval.clone();
        let (a, b) = self.sing;
        // u f(u) ~ u^(1-a) near 0, (1-u) f(1-u) ~ u^(-b) near 0; mirrored near 1.
        let sing = ((a - 1.0).max(b), (a - 1.0).max(b));
        SplittingDensity::from_eval2(
            format!("sym({})", self.label),
            sing,
            Arc::new(move |u, omu| u * f(u, omu) + omu * f(omu, u)),
        )
    }

    /// Phi*(rho) = Phi(rho+1) - Phi(rho+1, rho+1), the Laplace exponent
    /// of the symmetrised fragmenter. The equality with the direct
    /// quadrature of `symmetrize()` is a test obligation.
    pub fn symmetrized_exponent(&self, rho: f64) -> Result<f64, DensityError> {
        if rho <= 0.0 {
            return Err(DensityError::Domain {
                what: "symmetrized_exponent",
                requirement: "rho > 0",
                got: rho,
            });
        }
        Ok(self.laplace_exponent(rho + 1.0)? - self.phi_second(rho)?)
    }

    /// The dual pair (f-hat, p-hat) of switching according to p:
    ///
    /// ```text
    ///     u f^(u) = (1 - p(u)) u f(u) + p(1-u) (1-u) f(1-u)
    ///     p^(u)   = p(1-u) (1-u) f(1-u) / (u f^(u)),   0 where f^ = 0.
    /// ```
    pub fn switch_dual(
        &self,
        p: &SwitchingFunction,
    ) -> Result<(SplittingDensity, SwitchingFunction), DensityError> {
        // finite switching condition: int u^2 p(u) f(u) du < infinity
        let pe = p.eval2_fn();
        self.integrate_weighted(|u, omu| u * u * pe(u, omu), 0.0, 1.0)
            .map_err(|source| DensityError::SwitchConditionViolated { source })?;

        let f = self.eval.clone();
        let pf = p.eval2_fn();
        let qf = p.complement2_fn();
        let dual_eval =
            move |u: f64, omu: f64| qf(u, omu) * f(u, omu) + pf(omu, u) * omu * f(omu, u) / u;
        let (a, b) = self.sing;
        let sing = (a.max(b + 1.0), b.max(a - 1.0));
        let f_hat = SplittingDensity::from_eval2(
            format!("dual({},{})", self.label, p.label()),
            sing,
            Arc::new(dual_eval),
        )?;

        let f2 = self.eval.clone();
        let p2 = p.eval2_fn();
        let fh = f_hat.eval.clone();
        let p_hat_eval = Arc::new(move |u: f64, omu: f64| {
            let denom = u * fh(u, omu);
            if denom <= 0.0 {
                return 0.0;
            }
            (p2(omu, u) * omu * f2(omu, u) / denom).clamp(0.0, 1.0)
        });
        // 1 - p-hat = (1 - p(u)) f(u) / f-hat(u) from the dual identity,
        // avoiding the cancellation of computing 1 minus a near-one ratio
        let f3 = self.eval.clone();
        let q3 = p.complement2_fn();
        let fh3 = f_hat.eval.clone();
        let p_hat_complement = Arc::new(move |u: f64, omu: f64| {
            let denom = fh3(u, omu);
            if denom <= 0.0 {
                return 1.0;
            }
            (q3(u, omu) * f3(u, omu) / denom).clamp(0.0, 1.0)
        });
        let p_hat = SwitchingFunction::from_parts(
            format!("dual-p({},{})", self.label, p.label()),
            p_hat_eval,
            p_hat_complement,
        );
        Ok((f_hat, p_hat))
    }

    /// Switch rate phi = int p(u) u f(u) du. Cross-checks that the dual
    /// pair integrates to the same rate before returning.
    pub fn switch_rate(&self, p: &SwitchingFunction) -> Result<f64, DensityError> {
        let pe = p.eval2_fn();
        let phi = self
            .integrate_weighted(|u, omu| pe(u, omu) * u, 0.0, 1.0)
            .map_err(|source| DensityError::InfiniteSwitchRate { source })?;
        if phi == 0.0 {
            return Ok(0.0);
        }
        let (f_hat, p_hat) = self.switch_dual(p)?;
        let ph = p_hat.eval2_fn();
        let phi_hat = f_hat
            .integrate_weighted(|u, omu| ph(u, omu) * u, 0.0, 1.0)
            .map_err(|source| DensityError::InfiniteSwitchRate { source })?;
        let tol = 1e-8 * phi.abs().max(1.0);
        if (phi - phi_hat).abs() > tol {
            return Err(DensityError::DualRateMismatch { phi, phi_hat, tol });
        }
        Ok(phi)
    }

    /// Block weight of the binary non-exchangeable kappa-measure,
    /// int u^(n1-1) (1-u)^n2 u f(u) du.
    pub fn kappa_block_weight(&self, n1: u32, n2: u32) -> Result<f64, DensityError> {
        if n1 < 1 {
            return Err(DensityError::Domain {
                what: "kappa_block_weight",
                requirement: "n1 >= 1",
                got: n1 as f64,
            });
        }
        if n2 < 1 {
            return Err(DensityError::Domain {
                what: "kappa_block_weight",
                requirement: "n2 >= 1",
                got: n2 as f64,
            });
        }
        self.integrate_weighted(|u, omu| u.powi(n1 as i32) * omu.powi(n2 as i32), 0.0, 1.0)
            .map_err(|source| DensityError::Quad { what: "kappa_block_weight", source })
    }
}

/// A switching probability function p: (0,1) -> [0,1].
///
/// Carries both p and 1-p as (w, 1-w) closures so that duals and
/// common-path densities can evaluate them without cancellation at
/// the endpoints (for instance 1 - p(u) = u exactly under size-biased
/// switching).
#[derive(Clone)]
pub struct SwitchingFunction {
    eval: Eval2Fn,
    complement: Eval2Fn,
    label: String,
}

impl fmt::Debug for SwitchingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SwitchingFunction").field("label", &self.label).finish()
    }
}

impl SwitchingFunction {
    pub fn new(label: impl Into<String>, eval: EvalFn) -> Result<Self, DensityError> {
        let label = label.into();
        for i in 0..GRID_POINTS {
            let u = (i as f64 + 0.5) / GRID_POINTS as f64;
            let v = eval(u);
            if !(0.0..=1.0).contains(&v) {
                return Err(DensityError::SwitchingOutOfRange { label, u, value: v });
            }
        }
        let e2 = eval.clone();
        Ok(SwitchingFunction {
            eval: Arc::new(move |w, _| eval(w)),
            complement: Arc::new(move |w, _| 1.0 - e2(w)),
            label,
        })
    }

    fn from_parts(label: String, eval: Eval2Fn, complement: Eval2Fn) -> Self {
        SwitchingFunction { eval, complement, label }
    }

    /// p = 0: never switch.
    pub fn none() -> Self {
        Self::from_parts("none".into(), Arc::new(|_, _| 0.0), Arc::new(|_, _| 1.0))
    }

    /// p(u) = 1 - u: size-biased branching, the symmetrising choice.
    pub fn size_biased() -> Self {
        Self::from_parts(
            "size-biased".into(),
            Arc::new(|_, omw| omw),
            Arc::new(|w, _| w),
        )
    }

    /// p = 1 for u < 1/2: switch whenever the other block is bigger.
    pub fn bigger_block() -> Self {
        Self::from_parts(
            "bigger-block".into(),
            Arc::new(|w, _| if w < 0.5 { 1.0 } else { 0.0 }),
            Arc::new(|w, _| if w < 0.5 { 0.0 } else { 1.0 }),
        )
    }

    pub fn constant(c: f64) -> Result<Self, DensityError> {
        if !(0.0..=1.0).contains(&c) {
            return Err(DensityError::Domain {
                what: "constant switching",
                requirement: "c in [0,1]",
                got: c,
            });
        }
        let omc = 1.0 - c;
        Ok(Self::from_parts(
            format!("const({c})"),
            Arc::new(move |_, _| c),
            Arc::new(move |_, _| omc),
        ))
    }

    pub fn from_spec(spec: &str) -> Result<Self, DensityError> {
        let spec = spec.trim();
        match spec {
            "none" => Ok(Self::none()),
            "size-biased" => Ok(Self::size_biased()),
            "bigger-block" => Ok(Self::bigger_block()),
            _ => {
                if let Some(rest) = spec.strip_prefix("const(").and_then(|s| s.strip_suffix(')')) {
                    if let Ok(c) = rest.trim().parse() {
                        return Self::constant(c);
                    }
                }
                Err(DensityError::BadSpec(spec.to_string()))
            }
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.eval)(u, 1.0 - u)
    }

    /// p(w) with the complement 1 - w supplied exactly.
    pub fn eval2(&self, w: f64, one_minus_w: f64) -> f64 {
        (self.eval)(w, one_minus_w)
    }

    /// 1 - p(w), exact where the family allows it.
    pub fn complement2(&self, w: f64, one_minus_w: f64) -> f64 {
        (self.complement)(w, one_minus_w)
    }

    pub fn eval2_fn(&self) -> Eval2Fn {
        self.eval.clone()
    }

    pub fn complement2_fn(&self) -> Eval2Fn {
        self.complement.clone()
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}
