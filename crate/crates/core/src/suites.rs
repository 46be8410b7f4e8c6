//! Monte Carlo verification suites: each one fans replicates across a
//! worker pool with counter-derived seeds, aggregates in replicate
//! order, and reports (identity, analytic value, MC mean, SE, z) rows
//! plus distributional test rows. Results are byte-identical for any
//! worker count.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::beads::{
    grow_chain, spinal_composition, spinal_composition_deleting, BeadsError, Composition,
    GrowthContext,
};
use crate::bifurcator::{junction_mellin, BifurcatorContext, BifurcatorError};
use crate::brownian::{
    diversity_estimate, expected_length_moment, segment_length_test, shape_census, BrownianError,
};
use crate::config::{ConfigError, ExperimentConfig};
use crate::density::DensityError;
use crate::fragmenter::{
    exponential_functional, sample_fragmenter, FragmenterError, FragmenterPath, TailSpec,
};
use crate::pointproc::{JumpSampler, PointError};
use crate::seed::replicate_rng;
use crate::stats::{correlation_z, ks_test_cdf, MeanSe};
use crate::treemetric::{convergence_report, ghp_bound_nested, TreeMetricError};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Point(#[from] PointError),
    #[error(transparent)]
    Fragmenter(#[from] FragmenterError),
    #[error(transparent)]
    Bifurcator(#[from] BifurcatorError),
    #[error(transparent)]
    Beads(#[from] BeadsError),
    #[error(transparent)]
    Brownian(#[from] BrownianError),
    #[error(transparent)]
    TreeMetric(#[from] TreeMetricError),
}

/// One verified moment identity.
#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub identity: String,
    pub analytic: f64,
    pub mc_mean: f64,
    pub se: f64,
    pub z: f64,
}

impl MomentRow {
    fn new(identity: impl Into<String>, analytic: f64, stat: MeanSe) -> Self {
        MomentRow {
            identity: identity.into(),
            analytic,
            mc_mean: stat.mean,
            se: stat.se,
            z: stat.z_against(analytic),
        }
    }
}

/// One distributional test (KS, chi-square or zero-correlation).
#[derive(Debug, Clone, Serialize)]
pub struct StatTestRow {
    pub test: String,
    pub statistic: f64,
    pub p_or_z: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Both the exact and truncated exponents, reported side by side.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentRow {
    pub rho: f64,
    pub phi: f64,
    pub phi_eps: f64,
    pub phi_star: f64,
    pub phi_star_eps: f64,
}

/// Fan `n` replicates across the worker pool (0 = global pool);
/// replicate i derives its own RNG, so results are identical for any
/// worker count.
pub fn run_parallel<T: Send>(
    workers: usize,
    n: u64,
    f: impl Fn(u64) -> T + Sync,
) -> Vec<T> {
    let op = || (0..n).into_par_iter().map(|i| f(i)).collect();
    if workers == 0 {
        op()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool")
            .install(op)
    }
}

#[derive(Debug, Default, Serialize)]
pub struct MomentsReport {
    pub rows: Vec<MomentRow>,
    pub tests: Vec<StatTestRow>,
    pub exponents: Vec<ExponentRow>,
}

impl MomentsReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max)
    }

    pub fn all_pass(&self, z_threshold: f64) -> bool {
        self.max_abs_z() <= z_threshold && self.tests.iter().all(|t| t.pass)
    }
}

/// The full moment-identity suite: Mellin transform of M_t, moments of
/// the exponential functional, the junction mass catalog, the three
/// branch lengths, junction-time exponentiality and independence.
///
/// Monte Carlo rows compare against the exponent of the process
/// actually simulated: identities over truncated paths reference the
/// truncated exponent (their names carry `[phi_eps]`), while the
/// junction factor U is drawn exactly and references untruncated
/// values. The exponents table reports both Phi and Phi_eps.
pub fn moments_suite(cfg: &ExperimentConfig) -> Result<MomentsReport, SuiteError> {
    let model = cfg.resolve()?;
    let n = cfg.experiment.replicates;
    let workers = cfg.experiment.workers;
    let seed = cfg.experiment.master_seed;
    let eps = model.policy.epsilon;
    let f = &model.density;

    let mut report = MomentsReport::default();
    for rho in [0.5, 1.0, 2.0, 4.0] {
        report.exponents.push(ExponentRow {
            rho,
            phi: f.laplace_exponent(rho)?,
            phi_eps: f.laplace_exponent_truncated(rho, eps)?,
            phi_star: f.symmetrized_exponent(rho)?,
            phi_star_eps: f.symmetrize()?.laplace_exponent_truncated(rho, eps)?,
        });
    }
    if n == 0 {
        return Ok(report);
    }

    let sampler = JumpSampler::new(f, &model.policy)?;

    // Mellin identity: E(M_t^rho) = exp(-t Phi_eps(rho))
    let t_grid = [0.5, 1.0];
    let rho_grid = [0.5, 1.0, 2.0];
    let masses: Vec<[f64; 2]> = run_parallel(workers, n, |i| {
        let mut rng = replicate_rng(seed, "moments-mellin", i);
        let path = sample_fragmenter(&sampler, 1.0, &mut rng);
        [path.evaluate(0.5).expect("t in range"), path.stopped_mass()]
    });
    for (ti, &t) in t_grid.iter().enumerate() {
        for &rho in &rho_grid {
            let phi_eps = f.laplace_exponent_truncated(rho, eps)?;
            let xs: Vec<f64> = masses.iter().map(|m| m[ti].powf(rho)).collect();
            report.rows.push(MomentRow::new(
                format!("mellin_t{t}_rho{rho}[phi_eps]"),
                (-t * phi_eps).exp(),
                MeanSe::from_samples(&xs),
            ));
        }
    }

    // exponential functional L_0Sigma = int M^rho dt at rho = 1:
    // E(L) = 1/Phi_eps(1), E(L^2) = 2/(Phi_eps(1) Phi_eps(2))
    let rho = 1.0;
    let phi1 = f.laplace_exponent_truncated(rho, eps)?;
    let phi2 = f.laplace_exponent_truncated(2.0 * rho, eps)?;
    let tail = TailSpec::new(model.tail_tol, phi1);
    let efs: Vec<f64> = run_parallel(workers, n, |i| {
        let mut rng = replicate_rng(seed, "moments-ef", i);
        let mut path = FragmenterPath::empty(0.0, eps);
        exponential_functional(&mut path, &sampler, rho, &tail, &mut rng)
            .expect("tail budget suffices")
    });
    report.rows.push(MomentRow::new(
        "ef_mean_rho1[phi_eps]",
        1.0 / phi1,
        MeanSe::from_samples(&efs),
    ));
    let efs_sq: Vec<f64> = efs.iter().map(|x| x * x).collect();
    report.rows.push(MomentRow::new(
        "ef_second_rho1[phi_eps]",
        2.0 / (phi1 * phi2),
        MeanSe::from_samples(&efs_sq),
    ));

    // junction suite (size-biased switching assumed for the catalog)
    let ctx = BifurcatorContext::new(f, &model.switching, &model.policy)?;
    let phi = ctx.phi();
    let size_biased = model.switching.label() == "size-biased";

    struct JunctionDraw {
        tau: f64,
        m_minus: f64,
        u: f64,
        l0: f64,
        lsigma: f64,
        lstar: f64,
    }
    let phi_m = f.laplace_exponent_truncated(rho, eps)?;
    let phi_mhat = ctx.dual_density().laplace_exponent_truncated(rho, eps)?;
    let tail_m = TailSpec::new(model.tail_tol, phi_m);
    let tail_mhat = TailSpec::new(model.tail_tol, phi_mhat);
    let draws: Vec<JunctionDraw> = run_parallel(workers, n, |i| {
        let mut rng = replicate_rng(seed, "moments-junction", i);
        let mut pair = ctx.simulate_bifurcator(&mut rng);
        let (l0, lsigma, lstar) = ctx
            .sample_lengths(&mut pair, rho, &tail_m, &tail_mhat, &mut rng)
            .expect("tail budget suffices");
        JunctionDraw {
            tau: pair.tau,
            m_minus: pair.m_tau_minus(),
            u: pair.junction_factor,
            l0,
            lsigma,
            lstar,
        }
    });

    if size_biased {
        // truncated pre-junction reference E(M_tau-^rho) = phi/(phi + Phi0_eps(rho))
        let m_minus_ref = |r: f64| -> Result<f64, SuiteError> {
            Ok(phi / (phi + ctx.common_density().laplace_exponent_truncated(r, eps)?))
        };
        for r in [1.0, 2.0] {
            let mellin = junction_mellin(f, r)?;
            let mm: Vec<f64> = draws.iter().map(|d| d.m_minus.powf(r)).collect();
            report.rows.push(MomentRow::new(
                format!("junction_m_tau_minus_rho{r}[phi_eps]"),
                m_minus_ref(r)?,
                MeanSe::from_samples(&mm),
            ));
            let uu: Vec<f64> = draws.iter().map(|d| d.u.powf(r)).collect();
            report.rows.push(MomentRow::new(
                format!("junction_ratio_rho{r}"),
                mellin.ratio,
                MeanSe::from_samples(&uu),
            ));
            let mt: Vec<f64> = draws.iter().map(|d| (d.u * d.m_minus).powf(r)).collect();
            report.rows.push(MomentRow::new(
                format!("junction_m_tau_rho{r}[phi_eps]"),
                mellin.ratio * m_minus_ref(r)?,
                MeanSe::from_samples(&mt),
            ));
            let ms: Vec<f64> =
                draws.iter().map(|d| ((1.0 - d.u) * d.m_minus).powf(r)).collect();
            let one_minus_u_rho = f.phi_second(r)? / f.laplace_exponent(1.0)?;
            report.rows.push(MomentRow::new(
                format!("junction_m_tau_star_rho{r}[phi_eps]"),
                one_minus_u_rho * m_minus_ref(r)?,
                MeanSe::from_samples(&ms),
            ));
        }
        // E(1 - M_tau-) = E(M_tau): paired difference against zero
        let diffs: Vec<f64> =
            draws.iter().map(|d| (1.0 - d.m_minus) - d.u * d.m_minus).collect();
        report.rows.push(MomentRow::new(
            "junction_mass_balance",
            0.0,
            MeanSe::from_samples(&diffs),
        ));

        // branch lengths at rho = 1: truncated-consistent references
        let e_u = junction_mellin(f, rho)?.ratio;
        let e_one_minus_u = f.phi_second(rho)? / f.laplace_exponent(1.0)?;
        let e_m_minus = m_minus_ref(rho)?;
        let l0s: Vec<f64> = draws.iter().map(|d| d.l0).collect();
        report.rows.push(MomentRow::new(
            "length_l0_mean_rho1[phi_eps]",
            1.0 / (phi + ctx.common_density().laplace_exponent_truncated(rho, eps)?),
            MeanSe::from_samples(&l0s),
        ));
        let lsig: Vec<f64> = draws.iter().map(|d| d.lsigma).collect();
        report.rows.push(MomentRow::new(
            "length_lsigma_mean_rho1[phi_eps]",
            e_u * e_m_minus / phi_m,
            MeanSe::from_samples(&lsig),
        ));
        let lst: Vec<f64> = draws.iter().map(|d| d.lstar).collect();
        report.rows.push(MomentRow::new(
            "length_lstar_mean_rho1[phi_eps]",
            e_one_minus_u * e_m_minus / phi_mhat,
            MeanSe::from_samples(&lst),
        ));
    }

    // junction time: exponential with rate phi, independent of the ratio
    let ks_n = n.min(10_000) as usize;
    let taus: Vec<f64> = draws.iter().take(ks_n).map(|d| d.tau).collect();
    let ks = ks_test_cdf(&taus, |t| 1.0 - (-phi * t).exp());
    report.tests.push(StatTestRow {
        test: "tau_exponential_ks".into(),
        statistic: ks.statistic,
        p_or_z: ks.p_value,
        threshold: 0.01,
        pass: ks.p_value > 0.01,
    });
    let (logs_m, logs_u): (Vec<f64>, Vec<f64>) = draws
        .iter()
        .filter(|d| d.m_minus > 0.0)
        .map(|d| (d.m_minus.ln(), d.u.ln()))
        .unzip();
    let (r_corr, z_corr) = correlation_z(&logs_m, &logs_u);
    report.tests.push(StatTestRow {
        test: "junction_independence_corr_z".into(),
        statistic: r_corr,
        p_or_z: z_corr,
        threshold: 3.0,
        pass: z_corr.abs() < 3.0,
    });

    // thinning-route cross-check against the truncated mark rate
    let p2 = model.switching.eval2_fn();
    let fe = f.eval2_fn();
    let phi_mark =
        crate::quad::integrate_unit(&|u, omu| p2(u, omu) * u * fe(u, omu), 0.0, 1.0 - eps, true, true, 1e-10)
            .map_err(|source| DensityError::Quad { what: "mark rate", source })?
            .value;
    let thin_n = n.min(10_000);
    let thin: Vec<(f64, f64, f64)> = run_parallel(workers, thin_n, |i| {
        let mut rng = replicate_rng(seed, "moments-thinning", i);
        let j = ctx.simulate_junction_by_thinning(&mut rng).expect("mark within budget");
        (j.tau, j.m_tau_minus, j.u)
    });
    let thin_taus: Vec<f64> = thin.iter().map(|t| t.0).collect();
    let ks = ks_test_cdf(&thin_taus, |t| 1.0 - (-phi_mark * t).exp());
    report.tests.push(StatTestRow {
        test: "tau_thinning_exponential_ks".into(),
        statistic: ks.statistic,
        p_or_z: ks.p_value,
        threshold: 0.01,
        pass: ks.p_value > 0.01,
    });
    let (tlm, tlu): (Vec<f64>, Vec<f64>) = thin
        .iter()
        .filter(|t| t.1 > 0.0)
        .map(|t| (t.1.ln(), t.2.ln()))
        .unzip();
    let (r_corr, z_corr) = correlation_z(&tlm, &tlu);
    report.tests.push(StatTestRow {
        test: "thinning_independence_corr_z".into(),
        statistic: r_corr,
        p_or_z: z_corr,
        threshold: 3.0,
        pass: z_corr.abs() < 3.0,
    });

    Ok(report)
}

/// Analytic self-consistency checks that need no simulation:
/// symmetrisation idempotence, switching round-trip duality,
/// phi = phi-hat, the two-route symmetrised exponent, and the Gamma
/// duplication grid. All at 1e-8 tolerance.
pub fn analytic_suite(cfg: &ExperimentConfig) -> Result<Vec<StatTestRow>, SuiteError> {
    let model = cfg.resolve()?;
    let f = &model.density;
    let mut rows = Vec::new();
    let mut push = |test: &str, worst: f64, tol: f64| {
        rows.push(StatTestRow {
            test: test.into(),
            statistic: worst,
            p_or_z: worst,
            threshold: tol,
            pass: worst <= tol,
        });
    };

    // symmetrisation: symmetric output, idempotent on the grid
    let fs = f.symmetrize()?;
    let fss = fs.symmetrize()?;
    let mut worst_sym: f64 = 0.0;
    let mut worst_idem: f64 = 0.0;
    for i in 1..1000 {
        let u = i as f64 / 1000.0;
        let scale = fs.eval(u).abs().max(1.0);
        worst_sym = worst_sym.max((fs.eval(u) - fs.eval(1.0 - u)).abs() / scale);
        worst_idem = worst_idem.max((fss.eval(u) - fs.eval(u)).abs() / scale);
    }
    push("symmetrisation_symmetric", worst_sym, 1e-10);
    push("symmetrisation_idempotent", worst_idem, 1e-10);

    // switching round-trip duality on the grid wherever f > 0
    let p = if model.switching.label() == "none" {
        crate::density::SwitchingFunction::size_biased()
    } else {
        model.switching.clone()
    };
    let (fh, ph) = f.switch_dual(&p)?;
    let (fhh, phh) = fh.switch_dual(&ph)?;
    let mut worst_f: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    for i in 1..1000 {
        let u = i as f64 / 1000.0;
        if f.eval(u) > 0.0 {
            worst_f = worst_f.max((fhh.eval(u) - f.eval(u)).abs() / f.eval(u).max(1.0));
            worst_p = worst_p.max((phh.eval(u) - p.eval(u)).abs());
        }
    }
    push("switch_dual_round_trip_density", worst_f, 1e-8);
    push("switch_dual_round_trip_switching", worst_p, 1e-8);

    // phi = phi-hat (switch_rate verifies internally; surface the gap)
    let pe = p.eval2_fn();
    let fe = f.eval2_fn();
    let phi = crate::quad::integrate_unit(&|u, omu| pe(u, omu) * u * fe(u, omu), 0.0, 1.0, true, true, 1e-10)
        .map_err(|source| DensityError::Quad { what: "phi", source })?
        .value;
    let phe = ph.eval2_fn();
    let fhe = fh.eval2_fn();
    let phi_hat =
        crate::quad::integrate_unit(&|u, omu| phe(u, omu) * u * fhe(u, omu), 0.0, 1.0, true, true, 1e-10)
            .map_err(|source| DensityError::Quad { what: "phi-hat", source })?
            .value;
    push("switch_rate_dual_agreement", (phi - phi_hat).abs() / phi.max(1.0), 1e-8);

    // two-route symmetrised exponent
    let mut worst_exp: f64 = 0.0;
    for rho in [0.5, 1.0, 2.0, 3.0] {
        let via_identity = f.symmetrized_exponent(rho)?;
        let via_direct = fs.laplace_exponent(rho)?;
        worst_exp = worst_exp.max((via_identity - via_direct).abs());
    }
    push("symmetrized_exponent_two_routes", worst_exp, 1e-8);

    // Gamma duplication grid (20 points)
    use statrs::function::gamma::ln_gamma;
    let mut worst_gamma: f64 = 0.0;
    for n in 1..=5usize {
        for rho in [0.5, 1.0, 1.5, 2.0] {
            let lhs = rho * std::f64::consts::LN_2 + ln_gamma(n as f64 + 0.5 * rho)
                - ln_gamma(n as f64);
            let rhs = ln_gamma(2.0 * n as f64 + rho) + ln_gamma(n as f64 + 0.5)
                - ln_gamma(n as f64 + 0.5 * rho + 0.5)
                - ln_gamma(2.0 * n as f64);
            worst_gamma = worst_gamma.max((lhs - rhs).abs());
        }
    }
    push("gamma_duplication_grid", worst_gamma, 1e-8);

    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceCsvRow {
    pub replicate: u64,
    pub n: usize,
    pub hausdorff_bound: f64,
    pub ghp_bound: f64,
    pub largest_atom: f64,
    pub total_length: f64,
    pub leaf_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JunctionHitRow {
    pub replicate: u64,
    pub n: usize,
    pub m: usize,
    pub hits: usize,
    pub hits_over_sqrt_m: f64,
    pub sqrt2_lambda_rn: f64,
}

#[derive(Debug, Serialize)]
pub struct GrowReport {
    pub convergence: Vec<ConvergenceCsvRow>,
    pub junction_hits: Vec<JunctionHitRow>,
    /// Per-checkpoint halving bounds ghp(tree_(n/2), tree_n), one row
    /// per replicate, for trend diagnostics.
    pub halving: Vec<(u64, Vec<(usize, f64)>)>,
    /// Checkpoint tree dumps of replicate 0 (leaf count, JSON).
    pub dumps: Vec<(usize, String)>,
}

/// Grow bead-splitting chains and report convergence diagnostics.
pub fn grow_suite(cfg: &ExperimentConfig) -> Result<GrowReport, SuiteError> {
    let model = cfg.resolve()?;
    let ctx = GrowthContext::new(&model.density, &model.policy, model.alpha, model.tail_tol)?;
    let steps = cfg.grow.steps;
    let checkpoints = cfg.grow.checkpoints.clone();
    let n = cfg.experiment.replicates;
    let seed = cfg.experiment.master_seed;

    type RepOut = (Vec<ConvergenceCsvRow>, Vec<JunctionHitRow>, Vec<(usize, f64)>, Option<Vec<(usize, String)>>);
    let per_rep: Vec<Result<RepOut, SuiteError>> =
        run_parallel(cfg.experiment.workers, n, |i| {
            let mut rng = replicate_rng(seed, "grow", i);
            let chain = grow_chain(&ctx, steps, &mut rng)?;
            let report = convergence_report(&chain, &checkpoints)?;
            let conv = report
                .rows
                .into_iter()
                .map(|r| ConvergenceCsvRow {
                    replicate: i,
                    n: r.n,
                    hausdorff_bound: r.hausdorff_bound,
                    ghp_bound: r.ghp_bound,
                    largest_atom: r.largest_atom,
                    total_length: r.total_length,
                    leaf_gap: r.leaf_gap,
                })
                .collect();
            let last = chain.last().expect("chain nonempty");
            let hits = checkpoints
                .iter()
                .filter(|&&c| c < steps)
                .map(|&c| JunctionHitRow {
                    replicate: i,
                    n: c,
                    m: steps,
                    hits: last.junction_hits(c, steps),
                    hits_over_sqrt_m: last.junction_hits(c, steps) as f64
                        / (steps as f64).sqrt(),
                    sqrt2_lambda_rn: 2.0f64.sqrt() * chain[c - 1].total_length(),
                })
                .collect();
            let mut halving = Vec::new();
            for &c in &checkpoints {
                if c % 2 == 0 && c / 2 >= 1 {
                    halving.push((c, ghp_bound_nested(&chain[c / 2 - 1], &chain[c - 1])?));
                }
            }
            let dumps = (i == 0).then(|| {
                checkpoints
                    .iter()
                    .map(|&c| {
                        (
                            c,
                            serde_json::to_string_pretty(&chain[c - 1].to_dump())
                                .expect("tree serializes"),
                        )
                    })
                    .collect()
            });
            Ok((conv, hits, halving, dumps))
        });

    let mut out = GrowReport {
        convergence: Vec::new(),
        junction_hits: Vec::new(),
        halving: Vec::new(),
        dumps: Vec::new(),
    };
    for (i, rep) in per_rep.into_iter().enumerate() {
        let (conv, hits, halving, dumps) = rep?;
        out.convergence.extend(conv);
        out.junction_hits.extend(hits);
        out.halving.push((i as u64, halving));
        if let Some(d) = dumps {
            out.dumps = d;
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct CompositionReport {
    /// Composition value -> (direct C_3 count, deleted-from-C_4 count).
    pub counts: Vec<(String, u64, u64)>,
    pub chi2: StatTestRow,
}

/// Sampling consistency of spinal compositions: the law of C_3 read
/// directly from 4-leaf trees must match the law obtained from C_4
/// (5-leaf trees) after deleting leaf 4. Two-sample chi-square over
/// the composition values.
pub fn composition_suite(
    cfg: &ExperimentConfig,
    deleted_leaf: usize,
) -> Result<CompositionReport, SuiteError> {
    let model = cfg.resolve()?;
    let ctx = GrowthContext::new(&model.density, &model.policy, model.alpha, model.tail_tol)?;
    let n = cfg.experiment.replicates;
    let seed = cfg.experiment.master_seed;

    let pairs: Vec<Result<(Composition, Composition), SuiteError>> =
        run_parallel(cfg.experiment.workers, n, |i| {
            let mut rng = replicate_rng(seed, "compositions", i);
            let chain = grow_chain(&ctx, 5, &mut rng)?;
            let direct = spinal_composition(&chain[3])?;
            let deleted = spinal_composition_deleting(&chain[4], deleted_leaf)?;
            Ok((direct, deleted))
        });

    use std::collections::BTreeMap;
    let mut table: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for pair in pairs {
        let (direct, deleted) = pair?;
        table.entry(direct.key()).or_default().0 += 1;
        table.entry(deleted.key()).or_default().1 += 1;
    }
    let contingency: Vec<Vec<u64>> = vec![
        table.values().map(|v| v.0).collect(),
        table.values().map(|v| v.1).collect(),
    ];
    let chi2 = crate::stats::chi2_independence(&contingency);
    Ok(CompositionReport {
        counts: table.into_iter().map(|(k, (a, b))| (k, a, b)).collect(),
        chi2: StatTestRow {
            test: format!("composition_consistency_delete_leaf{deleted_leaf}"),
            statistic: chi2.statistic,
            p_or_z: chi2.p_value,
            threshold: 0.01,
            pass: chi2.p_value > 0.01,
        },
    })
}

#[derive(Debug, Serialize)]
pub struct BrownianReport {
    pub rows: Vec<StatTestRow>,
    pub moment_rows: Vec<MomentRow>,
}

impl BrownianReport {
    pub fn all_pass(&self, z_threshold: f64) -> bool {
        self.rows.iter().all(|t| t.pass)
            && self.moment_rows.iter().all(|r| r.z.abs() <= z_threshold)
    }
}

/// End-to-end Brownian checks of the bead-splitting machinery against
/// the closed-form CRT laws: Rayleigh first length, Gamma length
/// moments, uniform shape census, Dirichlet segment lengths, and the
/// diversity cross-check. Sample sizes: `replicates` first strings for
/// the Rayleigh KS, min(replicates, 10^4) chains to 4 leaves for the
/// census and segments, and (replicates/5) clamped to [2000, 20000]
/// chains to 5 leaves for the length moments.
pub fn brownian_suite(cfg: &ExperimentConfig) -> Result<BrownianReport, SuiteError> {
    let model = cfg.resolve()?;
    let ctx = GrowthContext::new(&model.density, &model.policy, model.alpha, model.tail_tol)?;
    let n = cfg.experiment.replicates;
    let seed = cfg.experiment.master_seed;
    let workers = cfg.experiment.workers;
    let mut report = BrownianReport { rows: Vec::new(), moment_rows: Vec::new() };
    if n == 0 {
        return Ok(report);
    }

    // (b) Rayleigh law of the first length, plus the diversity
    // cross-check sqrt(2) lambda(R_1) vs the 1/2-diversity of mu_1.
    // A truncated string is rank-faithful only while the ranked atom
    // masses stay well above the discarded-dust scale, roughly up to
    // rank sqrt(0.04/eps); the cross-check is skipped when that leaves
    // fewer than the 50 ranks the estimator needs.
    let faithful_ranks = ((0.04 / model.policy.epsilon).sqrt() as usize).min(64);
    let first: Vec<(f64, Option<f64>)> = run_parallel(workers, n, |i| {
        let mut rng = replicate_rng(seed, "brownian-first", i);
        let s = ctx.sample_string(1.0, &mut rng).expect("string sampled");
        let mut gap = None;
        if i < 500 && faithful_ranks >= 50 {
            let mut atoms: Vec<f64> =
                s.beads.iter().filter(|b| !b.tail).map(|b| b.mass).collect();
            atoms.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
            let faithful = atoms.len().min(faithful_ranks);
            if faithful >= 50 {
                if let Ok((est, disp)) = diversity_estimate(&atoms[..faithful]) {
                    // dispersion-normalized gap to sqrt(2) lambda(R_1)
                    let d = est - 2.0f64.sqrt() * s.length;
                    gap = Some(if disp > 0.0 { d / disp } else { d });
                }
            }
        }
        (s.length, gap)
    });
    let lengths: Vec<f64> = first.iter().map(|x| x.0).collect();
    let ks = ks_test_cdf(&lengths, |x| 1.0 - (-0.5 * x * x).exp());
    report.rows.push(StatTestRow {
        test: "rayleigh_lambda_r1_ks".into(),
        statistic: ks.statistic,
        p_or_z: ks.p_value,
        threshold: 0.01,
        pass: ks.p_value > 0.01,
    });
    let gaps: Vec<f64> = first.iter().filter_map(|x| x.1).collect();
    if gaps.len() >= 100 {
        let stat = MeanSe::from_samples(&gaps);
        // agreement within estimator dispersion: the median dispersion-
        // normalized gap should be order one
        report.rows.push(StatTestRow {
            test: "diversity_vs_sqrt2_lambda".into(),
            statistic: stat.mean,
            p_or_z: stat.mean.abs(),
            threshold: 3.0,
            pass: stat.mean.abs() < 3.0,
        });
    }

    // (a) length moments at n in {1, 2, 5}
    let n_chains = (n / 5).clamp(2000, 20_000);
    let lambda: Vec<[f64; 3]> = run_parallel(workers, n_chains, |i| {
        let mut rng = replicate_rng(seed, "brownian-moments", i);
        let chain = grow_chain(&ctx, 5, &mut rng).expect("chain grows");
        [
            chain[0].total_length(),
            chain[1].total_length(),
            chain[4].total_length(),
        ]
    });
    for (slot, nn) in [(0usize, 1usize), (1, 2), (2, 5)] {
        let xs: Vec<f64> = lambda.iter().map(|l| l[slot]).collect();
        report.moment_rows.push(MomentRow::new(
            format!("lambda_r{nn}_mean"),
            expected_length_moment(nn, 1.0),
            MeanSe::from_samples(&xs),
        ));
    }

    // (c) shape census at n = 3 and 4, (d) segment lengths
    let census_n = n.min(10_000);
    let census_chains: Vec<(crate::beads::BeadTree, crate::beads::BeadTree, crate::beads::BeadTree)> =
        run_parallel(workers, census_n, |i| {
            let mut rng = replicate_rng(seed, "brownian-census", i);
            let chain = grow_chain(&ctx, 4, &mut rng).expect("chain grows");
            (chain[1].clone(), chain[2].clone(), chain[3].clone())
        });
    let trees2: Vec<_> = census_chains.iter().map(|c| c.0.clone()).collect();
    let trees3: Vec<_> = census_chains.iter().map(|c| c.1.clone()).collect();
    let trees4: Vec<_> = census_chains.iter().map(|c| c.2.clone()).collect();
    for (nn, trees) in [(3usize, &trees3), (4, &trees4)] {
        let census = shape_census(trees)?;
        report.rows.push(StatTestRow {
            test: format!("shape_census_uniform_n{nn}"),
            statistic: census.chi2.statistic,
            p_or_z: census.chi2.p_value,
            threshold: 0.01,
            pass: census.chi2.p_value > 0.01,
        });
    }
    for (nn, trees) in [(2usize, &trees2), (3, &trees3)] {
        let seg = segment_length_test(trees)?;
        report.rows.push(StatTestRow {
            test: format!("segment_first_beta_ks_n{nn}"),
            statistic: seg.marginal_ks[0].statistic,
            p_or_z: seg.marginal_ks[0].p_value,
            threshold: 0.01,
            pass: seg.marginal_ks[0].p_value > 0.01,
        });
        if nn == 3 {
            report.rows.push(StatTestRow {
                test: "segment_shape_independence_n3".into(),
                statistic: seg.shape_independence.statistic,
                p_or_z: seg.shape_independence.p_value,
                threshold: 0.01,
                pass: seg.shape_independence.p_value > 0.01,
            });
        }
    }

    Ok(report)
}

/// One JSON record per bifurcator replicate: junction time, the mass
/// triple and the three branch lengths.
pub fn bifurcate_suite(cfg: &ExperimentConfig) -> Result<Vec<String>, SuiteError> {
    let model = cfg.resolve()?;
    let ctx = BifurcatorContext::new(&model.density, &model.switching, &model.policy)?;
    let rho = 1.0;
    let eps = model.policy.epsilon;
    let phi_m = model.density.laplace_exponent_truncated(rho, eps)?;
    let phi_mhat = ctx.dual_density().laplace_exponent_truncated(rho, eps)?;
    let tail_m = TailSpec::new(model.tail_tol, phi_m);
    let tail_mhat = TailSpec::new(model.tail_tol, phi_mhat);
    let seed = cfg.experiment.master_seed;

    #[derive(Serialize)]
    struct Record {
        replicate: u64,
        tau: f64,
        triple: [f64; 3],
        lengths: [f64; 3],
    }
    let lines: Vec<String> =
        run_parallel(cfg.experiment.workers, cfg.experiment.replicates, |i| {
            let mut rng = replicate_rng(seed, "bifurcate", i);
            let mut pair = ctx.simulate_bifurcator(&mut rng);
            let (l0, lsigma, lstar) = ctx
                .sample_lengths(&mut pair, rho, &tail_m, &tail_mhat, &mut rng)
                .expect("tail budget suffices");
            let (g, h, d) = pair.junction_triple();
            serde_json::to_string(&Record {
                replicate: i,
                tau: pair.tau,
                triple: [g, h, d],
                lengths: [l0, lsigma, lstar],
            })
            .expect("record serializes")
        });
    Ok(lines)
}

/// Validate a density spec and report its analytic functionals.
pub fn check_density(cfg: &ExperimentConfig) -> Result<serde_json::Value, SuiteError> {
    let model = cfg.resolve()?;
    let f = &model.density;
    let eps = model.policy.epsilon;
    let grid = [0.5, 1.0, 2.0, 4.0];
    let mut phi = serde_json::Map::new();
    let mut phi_eps = serde_json::Map::new();
    for rho in grid {
        phi.insert(format!("{rho}"), f.laplace_exponent(rho)?.into());
        phi_eps.insert(format!("{rho}"), f.laplace_exponent_truncated(rho, eps)?.into());
    }
    let fs = f.symmetrize()?;
    let mut sym_gap: f64 = 0.0;
    for i in 1..1000 {
        let u = i as f64 / 1000.0;
        sym_gap = sym_gap.max((fs.eval(u) - fs.eval(1.0 - u)).abs() / fs.eval(u).max(1.0));
    }
    Ok(serde_json::json!({
        "label": f.label(),
        "singularity_exponents": [f.singularity_exponents().0, f.singularity_exponents().1],
        "phi_one": f.phi_one(),
        "phi": phi,
        "phi_eps": phi_eps,
        "kappa_1_1": f.kappa_block_weight(1, 1)?,
        "truncation_bias_bound": model.policy.bias_bound,
        "symmetrisation_gap": sym_gap,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(replicates: u64, seed: u64) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            r#"
[experiment]
master_seed = {seed}
replicates = {replicates}
workers = 2
out_dir = "out"

[model]
density = "brownian"
switching = "size-biased"
alpha = 0.5
epsilon = 1e-3
tail_tol = 1e-6

[grow]
steps = 8
checkpoints = [2, 4, 8]
"#
        ))
        .unwrap()
    }

    #[test]
    fn zero_replicates_is_empty_success() {
        let report = moments_suite(&small_cfg(0, 1)).unwrap();
        assert!(report.rows.is_empty());
        assert!(report.tests.is_empty());
        assert!(!report.exponents.is_empty());
        assert!(report.all_pass(4.0));
    }

    #[test]
    fn moments_suite_small_run_is_sane_and_deterministic() {
        let cfg = small_cfg(2000, 7);
        let a = moments_suite(&cfg).unwrap();
        assert!(a.max_abs_z() < 6.0, "unexpectedly large z: {}", a.max_abs_z());
        let b = moments_suite(&cfg).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
        // worker count must not change results
        let mut cfg1 = cfg.clone();
        cfg1.experiment.workers = 1;
        let c = moments_suite(&cfg1).unwrap();
        assert_eq!(ja, serde_json::to_string(&c).unwrap());
    }

    #[test]
    fn analytic_suite_passes_for_brownian() {
        let rows = analytic_suite(&small_cfg(0, 1)).unwrap();
        assert!(rows.iter().all(|r| r.pass), "{rows:?}");
    }

    #[test]
    fn grow_suite_shapes() {
        let mut cfg = small_cfg(3, 9);
        cfg.grow.steps = 8;
        cfg.grow.checkpoints = vec![2, 4, 8];
        let report = grow_suite(&cfg).unwrap();
        assert_eq!(report.convergence.len(), 9);
        assert_eq!(report.dumps.len(), 3);
        // final checkpoint against itself is distance zero
        for row in report.convergence.iter().filter(|r| r.n == 8) {
            assert_eq!(row.hausdorff_bound, 0.0);
        }
    }

    #[test]
    fn composition_suite_small() {
        let cfg = small_cfg(300, 11);
        let report = composition_suite(&cfg, 4).unwrap();
        let direct: u64 = report.counts.iter().map(|c| c.1).sum();
        let deleted: u64 = report.counts.iter().map(|c| c.2).sum();
        assert_eq!(direct, 300);
        assert_eq!(deleted, 300);
        // compositions of 3 have 4 possible values
        assert!(report.counts.len() <= 4);
    }

    #[test]
    fn spinal_blocks_are_exchangeable_under_relabeling() {
        // deleting leaf 2 and deleting leaf 4 from the same chains must
        // give the same composition distribution
        let cfg = small_cfg(800, 15);
        let del2 = composition_suite(&cfg, 2).unwrap();
        let del4 = composition_suite(&cfg, 4).unwrap();
        use std::collections::BTreeMap;
        let mut table: BTreeMap<String, (u64, u64)> = BTreeMap::new();
        for (k, _, deleted) in &del2.counts {
            table.entry(k.clone()).or_default().0 += deleted;
        }
        for (k, _, deleted) in &del4.counts {
            table.entry(k.clone()).or_default().1 += deleted;
        }
        let contingency: Vec<Vec<u64>> = vec![
            table.values().map(|v| v.0).collect(),
            table.values().map(|v| v.1).collect(),
        ];
        let chi2 = crate::stats::chi2_independence(&contingency);
        assert!(chi2.p_value > 0.001, "relabeling chi2 p = {}", chi2.p_value);
    }

    #[test]
    fn bifurcate_suite_emits_valid_records() {
        let cfg = small_cfg(50, 13);
        let lines = bifurcate_suite(&cfg).unwrap();
        assert_eq!(lines.len(), 50);
        for line in &lines {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let triple = v["triple"].as_array().unwrap();
            let sum: f64 = triple.iter().map(|x| x.as_f64().unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn check_density_reports() {
        let v = check_density(&small_cfg(0, 1)).unwrap();
        assert_eq!(v["label"], "brownian");
        assert!(v["symmetrisation_gap"].as_f64().unwrap() < 1e-10);
    }
}
