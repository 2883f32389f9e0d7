//! Cross-module oracle suite behind `grantfree validate`.

use ndarray::Array2;
use rayon::prelude::*;

use crate::amp::{mean_sq_error, run_amp, StateEvolution};
use crate::bler::{
    conditional_bler_closed_form, conditional_bler_numerical, conditional_snr_law, mixture_bler,
    ConditionalMethod, SnrLaw,
};
use crate::detection::{DetectionConvention, DetectionStats};
use crate::fbl::bler_normal_approx;
use crate::linalg::zf_inverse_diagonal;
use crate::rng::{complex_gaussian, substream, trial_seed, Component};
use crate::special::{q_function, q_inverse};
use crate::stats::{binomial_se, ks_p_value, ks_statistic};
use crate::system::{generate_scenario, received_pilot_signal, SystemConfig};
use crate::Result;

/// One named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, value, limit, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    /// AMP scenarios for the tracking and detection checks.
    pub scenarios: usize,
    /// Matrix draws per (e, f) cell of the SNR-law check.
    pub ks_samples: usize,
    pub seed: u64,
    /// Adds one to the Gamma shape before testing; a negative control.
    pub corrupt_shape: bool,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self { scenarios: 20, ks_samples: 100_000, seed: 1, corrupt_shape: false }
    }
}

/// Draws `n` post-ZF SNRs of a correctly detected user by building `Ĥ`
/// column by column: `K - e + f` columns of i.i.d. `CN(0, β²/(β+τ²))`
/// entries, then `γ = 1 / ([(ĤᴴĤ)⁻¹]_00 ((K-e)βτ²/(β+τ²) + eβ + σ²))`.
/// Rank-deficient draws count as `γ = 0`.
pub fn sample_conditional_snr(
    config: &SystemConfig,
    tau_inf_sq: f64,
    e: usize,
    f: usize,
    n: usize,
    seed: u64,
) -> Vec<f64> {
    let k = config.active_count();
    let m = config.n_antennas;
    let beta = config.rx_power;
    let cols = k - e + f;
    let var = beta * beta / (beta + tau_inf_sq);
    let interference = (k - e) as f64 * beta * tau_inf_sq / (beta + tau_inf_sq) + e as f64 * beta + config.noise_var;
    let mut rng = substream(seed, Component::Oracle, ((e as u64) << 20) | f as u64);
    (0..n)
        .map(|_| {
            let h = Array2::from_shape_fn((m, cols), |_| complex_gaussian(&mut rng, var));
            match zf_inverse_diagonal(h.view()) {
                Some(d) => 1.0 / (d[0] * interference),
                None => 0.0,
            }
        })
        .collect()
}

/// KS test of the Gamma law for `(e, f)` in `{0, 1}²` at `(M, K, N) = (8, 3, 6)`.
pub fn snr_law_checks(config: &SystemConfig, opts: &ValidateOptions, alpha: f64) -> Vec<Check> {
    let mut small = config.clone();
    small.n_antennas = 8;
    small.n_users = 6;
    small.activity = crate::system::Activity::Fixed(3);
    let tau = config.noise_var;
    let mut out = Vec::new();
    for e in 0..=1 {
        for f in 0..=1 {
            let mut law = conditional_snr_law(e, f, &small, tau);
            if opts.corrupt_shape {
                law = SnrLaw { shape: law.shape + 1.0, ..law };
            }
            let draws = sample_conditional_snr(&small, tau, e, f, opts.ks_samples, opts.seed);
            let d = ks_statistic(&draws, |x| law.cdf(x));
            let p = ks_p_value(d, draws.len());
            out.push(Check::new(
                format!("snr_law_ks_e{e}_f{f}"),
                p > alpha,
                p,
                alpha,
                format!("D = {d:.5} over {} draws, shape {}", draws.len(), law.shape),
            ));
        }
    }
    out
}

/// Empirical AMP behaviour over `scenarios` draws of `config`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmpSummary {
    pub tau_inf_sq: f64,
    /// Mean per-component error of the effective observation, per scenario.
    pub obs_error: Vec<f64>,
    /// Mean over scenarios of τ_t², t = 0..=10.
    pub mean_trace: Vec<f64>,
    pub se_trace: Vec<f64>,
    pub misses: usize,
    pub active_obs: usize,
    pub false_alarms: usize,
    pub inactive_obs: usize,
    pub stats: DetectionStats,
}

pub const TRACKED_ITERS: usize = 10;

pub fn amp_summary(config: &SystemConfig, scenarios: usize, seed: u64) -> Result<AmpSummary> {
    let se = StateEvolution::new(config);
    let tau = se.fixed_point()?;
    let se_trace = se.trajectory(TRACKED_ITERS);
    let stats = DetectionStats::at_state(config, tau, DetectionConvention::Corrected);
    // (obs error, leading τ² trace, misses, active, false alarms, inactive)
    let runs = (0..scenarios)
        .into_par_iter()
        .map(|i| {
            let sc = generate_scenario(config, trial_seed(seed, i as u64));
            let y = received_pilot_signal(&sc);
            let res = run_amp(y.view(), sc.pilots.view(), config)?;
            let x = sc.effective_channels();
            let err = mean_sq_error(res.effective_obs.view(), x.view());
            let mut detected = vec![false; config.n_users];
            for &n in &res.detected_active {
                detected[n] = true;
            }
            let mut counts = [0usize; 4];
            for (n, &a) in sc.activity.iter().enumerate() {
                if a {
                    counts[0] += usize::from(!detected[n]);
                    counts[1] += 1;
                } else {
                    counts[2] += usize::from(detected[n]);
                    counts[3] += 1;
                }
            }
            let trace: Vec<f64> = res.tau_trace.iter().take(TRACKED_ITERS + 1).copied().collect();
            Ok((err, trace, counts))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sum_trace = vec![0.0; TRACKED_ITERS + 1];
    let mut counted = vec![0usize; TRACKED_ITERS + 1];
    let mut obs_error = Vec::with_capacity(scenarios);
    let mut totals = [0usize; 4];
    for (err, trace, counts) in &runs {
        obs_error.push(*err);
        for (t, &v) in trace.iter().enumerate() {
            sum_trace[t] += v;
            counted[t] += 1;
        }
        for (t, c) in totals.iter_mut().zip(counts) {
            *t += c;
        }
    }
    let [misses, active_obs, false_alarms, inactive_obs] = totals;
    let mean_trace = sum_trace.iter().zip(&counted).map(|(s, &c)| s / c.max(1) as f64).collect();
    Ok(AmpSummary {
        tau_inf_sq: tau,
        obs_error,
        mean_trace,
        se_trace,
        misses,
        active_obs,
        false_alarms,
        inactive_obs,
        stats,
    })
}

/// `|p̂ - p| <= 3 max(SE(p̂), SE(p))`, with binomial standard errors at the
/// empirical and the predicted rate.
pub fn rate_agrees(events: usize, trials: usize, predicted: f64) -> (bool, f64, f64) {
    let emp = events as f64 / trials as f64;
    let tol = 3.0 * binomial_se(emp, trials).max(binomial_se(predicted, trials));
    ((emp - predicted).abs() <= tol, emp, tol)
}

pub fn amp_checks(summary: &AmpSummary, label: &str) -> Vec<Check> {
    let mut out = Vec::new();
    let n = summary.obs_error.len() as f64;
    let mean_err = summary.obs_error.iter().sum::<f64>() / n;
    let rel = (mean_err / summary.tau_inf_sq - 1.0).abs();
    out.push(Check::new(
        format!("{label}amp_error_vs_fixed_point"),
        rel <= 0.05,
        rel,
        0.05,
        format!("mean error {mean_err:.4e} vs {:.4e}", summary.tau_inf_sq),
    ));
    let worst = (1..=TRACKED_ITERS)
        .map(|t| (summary.mean_trace[t] / summary.se_trace[t] - 1.0).abs())
        .fold(0.0, f64::max);
    out.push(Check::new(
        format!("{label}amp_tracks_state_evolution"),
        worst <= 0.10,
        worst,
        0.10,
        format!("worst relative gap over iterations 1..={TRACKED_ITERS}"),
    ));
    let (ok, emp, tol) = rate_agrees(summary.misses, summary.active_obs, summary.stats.p_miss);
    out.push(Check::new(
        format!("{label}miss_rate"),
        ok,
        emp,
        tol,
        format!("{} / {} vs predicted {:.4e}", summary.misses, summary.active_obs, summary.stats.p_miss),
    ));
    let (ok, emp, tol) = rate_agrees(summary.false_alarms, summary.inactive_obs, summary.stats.p_false);
    out.push(Check::new(
        format!("{label}false_alarm_rate"),
        ok,
        emp,
        tol,
        format!("{} / {} vs predicted {:.4e}", summary.false_alarms, summary.inactive_obs, summary.stats.p_false),
    ));
    out
}

/// Closed form against quadrature over the outcome cells near the mode.
pub fn closed_form_checks(config: &SystemConfig, tau_inf_sq: f64) -> Result<Check> {
    let code = config.code();
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for e in 0..=3usize.min(config.active_count()) {
        for f in 0..=3usize {
            let law = conditional_snr_law(e, f, config, tau_inf_sq);
            let num = conditional_bler_numerical(&law, code)?;
            if (1e-4..=0.5).contains(&num) {
                let cf = conditional_bler_closed_form(&law, code);
                worst = worst.max((cf / num - 1.0).abs());
                compared += 1;
            }
        }
    }
    Ok(Check::new(
        "closed_form_vs_quadrature",
        worst <= 0.10,
        worst,
        0.10,
        format!("{compared} cells with quadrature value in [1e-4, 0.5]"),
    ))
}

pub fn identity_checks(config: &SystemConfig, tau_inf_sq: f64) -> Result<Vec<Check>> {
    let mut worst: f64 = 0.0;
    for &p in &[1e-12, 1e-9, 1e-6, 1e-3, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9] {
        worst = worst.max((q_function(q_inverse(p)?) / p - 1.0).abs());
    }
    let code = config.code();
    let half = bler_normal_approx(code.threshold_snr(), code);
    let stats = DetectionStats::at_state(config, tau_inf_sq, DetectionConvention::Corrected);
    let rep = mixture_bler(config, &stats, code, config.trunc_tol.min(1e-10), ConditionalMethod::ClosedForm)?;
    let width = rep.bler_mixture_hi - rep.bler_mixture_lo;
    Ok(vec![
        Check::new("q_round_trip", worst <= 1e-9, worst, 1e-9, "relative error of Q(Q^-1(p))"),
        Check::new("bler_at_threshold_snr", half == 0.5, half, 0.5, "normal approximation at 2^R - 1"),
        Check::new("mixture_bracket_width", width <= 1e-10, width, 1e-10, format!("{} terms", rep.terms_used)),
    ])
}

/// Runs every check for `config`.
pub fn run_suite(config: &SystemConfig, opts: &ValidateOptions) -> Result<Vec<Check>> {
    config.validate()?;
    let mut checks = snr_law_checks(config, opts, 0.01);
    let summary = amp_summary(config, opts.scenarios, opts.seed)?;
    checks.extend(amp_checks(&summary, ""));
    checks.push(closed_form_checks(config, summary.tau_inf_sq)?);
    checks.extend(identity_checks(config, summary.tau_inf_sq)?);
    Ok(checks)
}
