//! C ABI for the beadsplit toolkit.
//!
//! Densities are opaque handles created and freed through this API;
//! every fallible call returns a [`BspStatus`] code and writes its
//! result through out-pointers. The header `include/beadsplit.h` is
//! generated by cbindgen at build time and committed.

use beadsplit::density::{DensityError, SplittingDensity, SwitchingFunction};
use beadsplit::fragmenter::sample_fragmenter;
use beadsplit::pointproc::{JumpSampler, TruncationPolicy};
use beadsplit::seed::replicate_rng;

/// Status codes returned by every fallible entry point.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BspStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    NumericError = 3,
}

/// Opaque splitting-density handle.
pub struct BspDensity {
    inner: SplittingDensity,
}

/// Switching probability families addressable over the ABI.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BspSwitching {
    None = 0,
    SizeBiased = 1,
    BiggerBlock = 2,
    Constant = 3,
}

/// Analytic junction-mass moments under size-biased switching.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BspJunctionMoments {
    /// E[M_(tau-)^rho]
    pub m_tau_minus: f64,
    /// E[M_tau^rho]
    pub m_tau: f64,
    /// E[(M_tau*)^rho]
    pub m_tau_star: f64,
    /// E[(M_tau / M_(tau-))^rho]
    pub ratio: f64,
}

fn density_status(e: &DensityError) -> BspStatus {
    match e {
        DensityError::Domain { .. } | DensityError::BadSpec(_) | DensityError::BadTable(_) => {
            BspStatus::InvalidArgument
        }
        _ => BspStatus::NumericError,
    }
}

fn switching_from(kind: BspSwitching, param: f64) -> Result<SwitchingFunction, BspStatus> {
    match kind {
        BspSwitching::None => Ok(SwitchingFunction::none()),
        BspSwitching::SizeBiased => Ok(SwitchingFunction::size_biased()),
        BspSwitching::BiggerBlock => Ok(SwitchingFunction::bigger_block()),
        BspSwitching::Constant => {
            SwitchingFunction::constant(param).map_err(|_| BspStatus::InvalidArgument)
        }
    }
}

/// Create the Brownian splitting density
/// (2 pi)^(-1/2) u^(-3/2) (1-u)^(-3/2).
///
/// # Safety
/// `out` must be a valid pointer; the result must be released with
/// `bsp_density_free`.
#[no_mangle]
pub unsafe extern "C" fn bsp_density_brownian(out: *mut *mut BspDensity) -> BspStatus {
    if out.is_null() {
        return BspStatus::NullArgument;
    }
    let handle = Box::new(BspDensity { inner: SplittingDensity::brownian() });
    unsafe { *out = Box::into_raw(handle) };
    BspStatus::Ok
}

/// Create a beta-family density scale * u^(-a-1) (1-u)^(-b-1);
/// requires a, b < 1 for integrability.
///
/// # Safety
/// `out` must be a valid pointer; the result must be released with
/// `bsp_density_free`.
#[no_mangle]
pub unsafe extern "C" fn bsp_density_beta(
    a: f64,
    b: f64,
    scale: f64,
    out: *mut *mut BspDensity,
) -> BspStatus {
    if out.is_null() {
        return BspStatus::NullArgument;
    }
    match SplittingDensity::beta_family(a, b, scale) {
        Ok(d) => {
            unsafe { *out = Box::into_raw(Box::new(BspDensity { inner: d })) };
            BspStatus::Ok
        }
        Err(e) => density_status(&e),
    }
}

/// Release a density handle. Null is allowed.
///
/// # Safety
/// `d` must be null or a pointer previously returned by a
/// `bsp_density_*` constructor, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bsp_density_free(d: *mut BspDensity) {
    if !d.is_null() {
        drop(unsafe { Box::from_raw(d) });
    }
}

unsafe fn with_density<T>(
    d: *const BspDensity,
    out: *mut T,
    f: impl FnOnce(&SplittingDensity) -> Result<T, BspStatus>,
) -> BspStatus {
    if d.is_null() || out.is_null() {
        return BspStatus::NullArgument;
    }
    let density = unsafe { &(*d).inner };
    match f(density) {
        Ok(v) => {
            unsafe { *out = v };
            BspStatus::Ok
        }
        Err(s) => s,
    }
}

/// Phi(1) = int u (1-u) f(u) du.
///
/// # Safety
/// `d` must be a live density handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsp_phi_one(d: *const BspDensity, out: *mut f64) -> BspStatus {
    unsafe { with_density(d, out, |f| Ok(f.phi_one())) }
}

/// Laplace exponent Phi(rho) = int (1 - u^rho) u f(u) du.
///
/// # Safety
/// `d` must be a live density handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsp_laplace_exponent(
    d: *const BspDensity,
    rho: f64,
    out: *mut f64,
) -> BspStatus {
    unsafe { with_density(d, out, |f| f.laplace_exponent(rho).map_err(|e| density_status(&e))) }
}

/// Truncated exponent Phi_eps(rho) over factors below 1 - epsilon.
///
/// # Safety
/// `d` must be a live density handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsp_laplace_exponent_truncated(
    d: *const BspDensity,
    rho: f64,
    epsilon: f64,
    out: *mut f64,
) -> BspStatus {
    if !(0.0..1.0).contains(&epsilon) {
        return BspStatus::InvalidArgument;
    }
    unsafe {
        with_density(d, out, |f| {
            f.laplace_exponent_truncated(rho, epsilon).map_err(|e| density_status(&e))
        })
    }
}

/// Phi(rho+1, rho+1) = int (1-u)^(rho+1) u f(u) du.
///
/// # Safety
/// `d` must be a live density handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsp_phi_second(
    d: *const BspDensity,
    rho: f64,
    out: *mut f64,
) -> BspStatus {
    unsafe { with_density(d, out, |f| f.phi_second(rho).map_err(|e| density_status(&e))) }
}

/// Symmetrised exponent Phi*(rho) = Phi(rho+1) - Phi(rho+1, rho+1).
///
/// # Safety
/// `d` must be a live density handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsp_symmetrized_exponent(
    d: *const BspDensity,
    rho: f64,
    out: *mut f64,
) -> BspStatus {
    unsafe {
        with_density(d, out, |f| f.symmetrized_exponent(rho).map_err(|e| density_status(&e)))
    }
}

/// The symmetrisation f*(u) = u f(u) + (1-u) f(1-u) as a new handle.
///
/// # Safety
/// `d` must be a live density handle; `out` receives a new handle to
/// be released with `bsp_density_free`.
#[no_mangle]
pub unsafe extern "C" fn bsp_symmetrize(
    d: *const BspDensity,
    out: *mut *mut BspDensity,
) -> BspStatus {
    if d.is_null() || out.is_null() {
        return BspStatus::NullArgument;
    }
    let density = unsafe { &(*d).inner };
    match density.symmetrize() {
        Ok(fs) => {
            unsafe { *out = Box::into_raw(Box::new(BspDensity { inner: fs })) };
            BspStatus::Ok
        }
        Err(e) => density_status(&e),
    }
}

/// Switch rate phi = int p(u) u f(u) du for a built-in switching
/// family (`param` is the constant for `BSP_SWITCHING_CONSTANT`).
///
/// # Safety
/// `d` must be a live density handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsp_switch_rate(
    d: *const BspDensity,
    kind: BspSwitching,
    param: f64,
    out: *mut f64,
) -> BspStatus {
    unsafe {
        with_density(d, out, |f| {
            let p = switching_from(kind, param)?;
            f.switch_rate(&p).map_err(|e| density_status(&e))
        })
    }
}

/// kappa block weight int u^(n1-1) (1-u)^n2 u f(u) du.
///
/// # Safety
/// `d` must be a live density handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsp_kappa_block_weight(
    d: *const BspDensity,
    n1: u32,
    n2: u32,
    out: *mut f64,
) -> BspStatus {
    unsafe {
        with_density(d, out, |f| f.kappa_block_weight(n1, n2).map_err(|e| density_status(&e)))
    }
}

/// The analytic junction-mass catalog at exponent rho under
/// size-biased switching.
///
/// # Safety
/// `d` must be a live density handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsp_junction_mellin(
    d: *const BspDensity,
    rho: f64,
    out: *mut BspJunctionMoments,
) -> BspStatus {
    if rho <= 0.0 {
        return BspStatus::InvalidArgument;
    }
    unsafe {
        with_density(d, out, |f| {
            beadsplit::bifurcator::junction_mellin(f, rho)
                .map(|m| BspJunctionMoments {
                    m_tau_minus: m.m_tau_minus,
                    m_tau: m.m_tau,
                    m_tau_star: m.m_tau_star,
                    ratio: m.ratio,
                })
                .map_err(|e| density_status(&e))
        })
    }
}

/// Monte Carlo mean and standard error of M_t^rho over `replicates`
/// truncated fragmenter paths; deterministic in (seed, epsilon,
/// replicates). Compare against exp(-t Phi_eps(rho)).
///
/// # Safety
/// `d` must be a live density handle; `out_mean` and `out_se` must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bsp_mellin_mc(
    d: *const BspDensity,
    rho: f64,
    t: f64,
    replicates: u64,
    epsilon: f64,
    seed: u64,
    out_mean: *mut f64,
    out_se: *mut f64,
) -> BspStatus {
    if d.is_null() || out_mean.is_null() || out_se.is_null() {
        return BspStatus::NullArgument;
    }
    if !(rho > 0.0) || !(t > 0.0) || replicates < 2 || !(0.0..1.0).contains(&epsilon) {
        return BspStatus::InvalidArgument;
    }
    let f = unsafe { &(*d).inner };
    let policy = match TruncationPolicy::new(f, epsilon) {
        Ok(p) => p,
        Err(_) => return BspStatus::NumericError,
    };
    let sampler = match JumpSampler::new(f, &policy) {
        Ok(s) => s,
        Err(_) => return BspStatus::NumericError,
    };
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for i in 0..replicates {
        let mut rng = replicate_rng(seed, "ffi-mellin", i);
        let m = sample_fragmenter(&sampler, t, &mut rng).stopped_mass().powf(rho);
        sum += m;
        sum_sq += m * m;
    }
    let n = replicates as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    unsafe {
        *out_mean = mean;
        *out_se = (var / n).sqrt();
    }
    BspStatus::Ok
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_surface_through_the_abi() {
        unsafe {
            let mut d: *mut BspDensity = std::ptr::null_mut();
            assert_eq!(bsp_density_brownian(&mut d), BspStatus::Ok);
            let mut phi1 = 0.0;
            assert_eq!(bsp_laplace_exponent(d, 1.0, &mut phi1), BspStatus::Ok);
            assert!((phi1 - 1.2533141373155003).abs() < 1e-8);
            let mut k = 0.0;
            assert_eq!(bsp_kappa_block_weight(d, 1, 1, &mut k), BspStatus::Ok);
            assert!((k - phi1).abs() < 1e-9);
            let mut m =
                BspJunctionMoments { m_tau_minus: 0.0, m_tau: 0.0, m_tau_star: 0.0, ratio: 0.0 };
            assert_eq!(bsp_junction_mellin(d, 1.0, &mut m), BspStatus::Ok);
            assert!((m.m_tau - 1.0 / 3.0).abs() < 1e-9);
            bsp_density_free(d);
        }
    }
}
