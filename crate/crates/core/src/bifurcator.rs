//! Bifurcators: pairs of fragmenters that coincide up to an
//! exponential junction time tau and then evolve independently, with
//! the junction splitting the remaining mass binarily.
//!
//! Simulation uses the five-ingredient decomposition: a common path
//! with splitting density (1 - p(u)) f(u), an exponential time tau
//! with rate phi = int p(u) u f(u) du, a junction factor U with
//! density phi^(-1) p(u) u f(u), and two independent continuations
//! with densities f and f-hat. The thinning route (mark each jump
//! independently with probability p(F)) is kept alongside as a
//! distributional cross-check.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::density::{DensityError, SplittingDensity, SwitchingFunction};
use crate::fragmenter::{
    exponential_functional, sample_fragmenter, FragmenterError, FragmenterPath, TailSpec,
};
use crate::pointproc::{FactorSampler, JumpSampler, PointError, TruncationPolicy};

#[derive(Debug, Clone, Error)]
pub enum BifurcatorError {
    #[error("switch rate phi = {0} must be strictly positive and finite")]
    DegenerateRate(f64),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Point(#[from] PointError),
    #[error(transparent)]
    Fragmenter(#[from] FragmenterError),
    #[error("junction factor table mass {table} disagrees with switch rate {phi}")]
    RateMismatch { table: f64, phi: f64 },
    #[error("no mark within the jump budget (phi too small for thinning route)")]
    ThinningBudget,
}

/// Two coupled fragmenter paths with junction time `tau` and junction
/// factor `junction_factor` (the paper's U = M_tau / M_(tau-)).
#[derive(Debug, Clone)]
pub struct BifurcatorPair {
    /// Pre-junction path, simulated on [0, tau].
    pub common: FragmenterPath,
    pub tau: f64,
    pub junction_factor: f64,
    /// Post-junction relative evolution of M, on [0, horizon].
    pub continuation_m: FragmenterPath,
    /// Post-junction relative evolution of M-hat.
    pub continuation_mhat: FragmenterPath,
    /// Generating density and switching function.
    pub density: SplittingDensity,
    pub switching: SwitchingFunction,
}

impl BifurcatorPair {
    pub fn m_tau_minus(&self) -> f64 {
        self.common.stopped_mass()
    }

    pub fn m_tau(&self) -> f64 {
        self.junction_factor * self.m_tau_minus()
    }

    /// M-hat at tau, defined by the binary splitting condition
    /// M_(tau-) - M_tau = M-hat_tau, which therefore holds exactly.
    pub fn m_tau_star(&self) -> f64 {
        self.m_tau_minus() - self.m_tau()
    }

    /// The mass triple (1 - M_(tau-), M-hat_tau, M_tau) of the three
    /// connected components around the junction.
    pub fn junction_triple(&self) -> (f64, f64, f64) {
        let d = self.m_tau();
        let h = self.m_tau_star();
        (1.0 - (h + d), h, d)
    }
}

/// Analytic Mellin moments of the junction masses under size-biased
/// switching p(u) = 1 - u.
#[derive(Debug, Clone, Copy)]
pub struct JunctionMellin {
    /// E[M_(tau-)^rho] = Phi(1) / Phi(rho+1)
    pub m_tau_minus: f64,
    /// E[M_tau^rho] = (Phi(rho+1) - Phi(rho)) / Phi(rho+1)
    pub m_tau: f64,
    /// E[(M-hat_tau)^rho] = Phi(rho+1, rho+1) / Phi(rho+1)
    pub m_tau_star: f64,
    /// E[(M_tau / M_(tau-))^rho] = (Phi(rho+1) - Phi(rho)) / Phi(1)
    pub ratio: f64,
}

/// The full Mellin catalog for the size-biased junction split.
pub fn junction_mellin(f: &SplittingDensity, rho: f64) -> Result<JunctionMellin, DensityError> {
    assert!(rho > 0.0);
    let phi1 = f.laplace_exponent(1.0)?;
    let phi_r = f.laplace_exponent(rho)?;
    let phi_r1 = f.laplace_exponent(rho + 1.0)?;
    let phi_second = f.phi_second(rho)?;
    Ok(JunctionMellin {
        m_tau_minus: phi1 / phi_r1,
        m_tau: (phi_r1 - phi_r) / phi_r1,
        m_tau_star: phi_second / phi_r1,
        ratio: (phi_r1 - phi_r) / phi1,
    })
}

/// Per-experiment sampling context: the factor tables for the common
/// path, the two continuations and the junction factor, built once.
#[derive(Debug)]
pub struct BifurcatorContext {
    density: SplittingDensity,
    switching: SwitchingFunction,
    dual_density: SplittingDensity,
    common_density: SplittingDensity,
    phi: f64,
    policy: TruncationPolicy,
    common_sampler: JumpSampler,
    m_sampler: JumpSampler,
    mhat_sampler: JumpSampler,
    junction_factors: FactorSampler,
}

impl BifurcatorContext {
    pub fn new(
        f: &SplittingDensity,
        p: &SwitchingFunction,
        policy: &TruncationPolicy,
    ) -> Result<Self, BifurcatorError> {
        let phi = f.switch_rate(p)?;
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(BifurcatorError::DegenerateRate(phi));
        }
        let (f_hat, _p_hat) = f.switch_dual(p)?;

        let qe = p.complement2_fn();
        let fe = f.eval2_fn();
        let common_density = SplittingDensity::from_eval2(
            format!("common({},{})", f.label(), p.label()),
            f.singularity_exponents(),
            std::sync::Arc::new(move |u, omu| qe(u, omu) * fe(u, omu)),
        )?;

        let common_sampler = JumpSampler::new(&common_density, policy)?;
        let m_sampler = JumpSampler::new(f, policy)?;
        let mhat_sampler = JumpSampler::new(&f_hat, policy)?;

        // junction factor density phi^(-1) p(u) u f(u) on the full (0,1)
        let pe2 = p.eval2_fn();
        let fe2 = f.eval2_fn();
        let g = move |u: f64, omu: f64| pe2(u, omu) * u * fe2(u, omu);
        let junction_factors = FactorSampler::new(&g, 0.0, 1.0)?;
        let table = junction_factors.total();
        if (table - phi).abs() > 1e-6 * phi {
            return Err(BifurcatorError::RateMismatch { table, phi });
        }

        Ok(BifurcatorContext {
            density: f.clone(),
            switching: p.clone(),
            dual_density: f_hat,
            common_density,
            phi,
            policy: *policy,
            common_sampler,
            m_sampler,
            mhat_sampler,
            junction_factors,
        })
    }

    /// Exponential rate of the junction time.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn dual_density(&self) -> &SplittingDensity {
        &self.dual_density
    }

    /// Splitting density (1 - p(u)) f(u) of the pre-junction path.
    pub fn common_density(&self) -> &SplittingDensity {
        &self.common_density
    }

    pub fn density(&self) -> &SplittingDensity {
        &self.density
    }

    pub fn policy(&self) -> TruncationPolicy {
        self.policy
    }

    /// Draw a bifurcator by the five-ingredient construction. The
    /// continuations start with zero horizon; `sample_lengths` extends
    /// them as needed.
    pub fn simulate_bifurcator(&self, rng: &mut impl Rng) -> BifurcatorPair {
        let tau = Exp::new(self.phi).expect("positive rate").sample(rng);
        let common = sample_fragmenter(&self.common_sampler, tau, rng);
        let junction_factor = self.junction_factors.sample(rng);
        let eps = self.policy.epsilon;
        BifurcatorPair {
            common,
            tau,
            junction_factor,
            continuation_m: FragmenterPath::empty(0.0, eps),
            continuation_mhat: FragmenterPath::empty(0.0, eps),
            density: self.density.clone(),
            switching: self.switching.clone(),
        }
    }

    /// The triple of exponential functionals (L_0, L_Sigma, L_*):
    /// L_0 over the common path on [0, tau], and the two post-junction
    /// branch lengths via the continuations, extended by resampling to
    /// the tail tolerance.
    pub fn sample_lengths(
        &self,
        pair: &mut BifurcatorPair,
        rho: f64,
        tail_m: &TailSpec,
        tail_mhat: &TailSpec,
        rng: &mut impl Rng,
    ) -> Result<(f64, f64, f64), BifurcatorError> {
        let l0 = pair.common.step_integral(rho);
        let lm = exponential_functional(&mut pair.continuation_m, &self.m_sampler, rho, tail_m, rng)?;
        let lh = exponential_functional(
            &mut pair.continuation_mhat,
            &self.mhat_sampler,
            rho,
            tail_mhat,
            rng,
        )?;
        let l_sigma = pair.m_tau().powf(rho) * lm;
        let l_star = pair.m_tau_star().powf(rho) * lh;
        Ok((l0, l_sigma, l_star))
    }

    /// The thinning route: simulate the full path of M, mark each jump
    /// independently with probability p(F), and stop at the first
    /// mark. Distributionally equivalent to `simulate_bifurcator` up
    /// to truncation; kept as a cross-check of the construction.
    pub fn simulate_junction_by_thinning(
        &self,
        rng: &mut impl Rng,
    ) -> Result<JunctionSample, BifurcatorError> {
        let mut t = 0.0;
        let mut m = 1.0f64;
        for _ in 0..10_000_000u64 {
            t += self.m_sampler.next_gap(rng);
            let factor = self.m_sampler.sample_factor(rng);
            if rng.random::<f64>() < self.switching.eval(factor) {
                return Ok(JunctionSample { tau: t, m_tau_minus: m, u: factor });
            }
            m *= factor;
        }
        Err(BifurcatorError::ThinningBudget)
    }
}

/// Junction data without continuations: tau, the pre-junction mass and
/// the junction factor U.
#[derive(Debug, Clone, Copy)]
pub struct JunctionSample {
    pub tau: f64,
    pub m_tau_minus: f64,
    pub u: f64,
}
