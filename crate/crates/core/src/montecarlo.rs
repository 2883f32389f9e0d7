//! End-to-end link simulation: scenario, AMP detection and estimation, ZF
//! post-processing SNR, and block errors drawn from the normal approximation.

use ndarray::Axis;
use rand::Rng;
use rayon::prelude::*;

use crate::amp::run_amp;
use crate::detection::estimation_error_variance;
use crate::fbl::bler_normal_approx;
use crate::linalg::zf_inverse_diagonal;
use crate::rng::{substream, trial_seed, Component};
use crate::stats::{ci95_half_width, mean_and_se};
use crate::system::{generate_scenario, received_pilot_signal, SystemConfig};
use crate::{Error, Result};

/// Outcome of one simulated block.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    pub active_count: usize,
    pub miss_count: usize,
    pub false_count: usize,
    /// Block error per active user, in increasing user index.
    pub per_active_error: Vec<bool>,
    /// Post-processing SNR of each correctly detected active user.
    pub per_active_snr: Vec<f64>,
    /// `M < |K̂|`, or a numerically singular `ĤᴴĤ`.
    pub overloaded: bool,
    /// `Σ_k P(error_k)` over active users, before the Bernoulli draw.
    pub error_prob_sum: f64,
    pub error_prob_sq_sum: f64,
    pub tau_sq_final: f64,
    pub amp_iterations: usize,
}

/// Simulates one block; a pure function of `(config, seed)`.
///
/// Each correctly detected user gets
/// `γ_k = 1 / ([(ĤᴴĤ)⁻¹]_kk ((K-e) Δv_det + e β + σ²))` with `Δv_det` from the
/// AMP's final state, and fails with probability `ε(γ_k)`. Missed users always
/// fail, as does everyone when the detected set exceeds the antenna count.
pub fn run_trial(config: &SystemConfig, seed: u64) -> Result<TrialResult> {
    let scenario = generate_scenario(config, seed);
    let y = received_pilot_signal(&scenario);
    let amp = run_amp(y.view(), scenario.pilots.view(), config)?;
    let active = scenario.active_indices();
    let mut detected_mask = vec![false; config.n_users];
    for &n in &amp.detected_active {
        detected_mask[n] = true;
    }
    let miss_count = active.iter().filter(|&&n| !detected_mask[n]).count();
    let false_count = amp.detected_active.iter().filter(|&&n| !scenario.activity[n]).count();

    let inv_diag = if amp.detected_active.len() > config.n_antennas {
        None
    } else {
        let h_hat = amp.channel_estimates.select(Axis(0), &amp.detected_active).reversed_axes();
        zf_inverse_diagonal(h_hat.view())
    };

    let k = active.len();
    let beta = config.rx_power;
    let interference = (k - miss_count) as f64 * estimation_error_variance(beta, amp.tau_sq_final, true)
        + miss_count as f64 * estimation_error_variance(beta, amp.tau_sq_final, false)
        + config.noise_var;
    let code = config.code();
    let mut per_active_error = Vec::with_capacity(k);
    let mut per_active_snr = Vec::new();
    let (mut prob_sum, mut prob_sq) = (0.0, 0.0);
    for &user in &active {
        let p = match (&inv_diag, detected_mask[user]) {
            (Some(diag), true) => {
                let pos = amp.detected_active.binary_search(&user).expect("detected user in set");
                let snr = 1.0 / (diag[pos] * interference);
                per_active_snr.push(snr);
                bler_normal_approx(snr, code)
            }
            _ => 1.0,
        };
        prob_sum += p;
        prob_sq += p * p;
        let mut rng = substream(seed, Component::BlockError, user as u64);
        per_active_error.push(p >= 1.0 || rng.gen::<f64>() < p);
    }

    Ok(TrialResult {
        seed,
        active_count: k,
        miss_count,
        false_count,
        per_active_error,
        per_active_snr,
        overloaded: inv_diag.is_none(),
        error_prob_sum: prob_sum,
        error_prob_sq_sum: prob_sq,
        tau_sq_final: amp.tau_sq_final,
        amp_iterations: amp.iterations_run,
    })
}

/// Aggregated empirical error rates.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalBler {
    /// Fraction of active-user blocks in error (misses included).
    pub bler: f64,
    pub ci_half_width: f64,
    pub trials: usize,
    pub user_observations: usize,
    pub mean_miss_rate: f64,
    pub mean_false_rate: f64,
    /// Average of `ε(γ_k)` without the Bernoulli draw.
    pub bler_rao_blackwell: f64,
    pub rb_ci_half_width: f64,
    pub overloaded_trials: usize,
    pub mean_tau_sq_final: f64,
}

/// Sums trial results in the given order.
pub fn aggregate(config: &SystemConfig, results: &[TrialResult]) -> EmpiricalBler {
    let users: usize = results.iter().map(|r| r.active_count).sum();
    let errors: usize = results.iter().map(|r| r.per_active_error.iter().filter(|&&e| e).count()).sum();
    let misses: usize = results.iter().map(|r| r.miss_count).sum();
    let falses: usize = results.iter().map(|r| r.false_count).sum();
    let inactive: usize = results.iter().map(|r| config.n_users - r.active_count).sum();
    let prob_sum: f64 = results.iter().map(|r| r.error_prob_sum).sum();
    let prob_sq: f64 = results.iter().map(|r| r.error_prob_sq_sum).sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let bler = ratio(errors, users);
    let rb = if users == 0 { 0.0 } else { prob_sum / users as f64 };
    let rb_var = if users < 2 {
        0.0
    } else {
        ((prob_sq - users as f64 * rb * rb) / (users as f64 - 1.0)).max(0.0)
    };
    let (mean_tau, _) = mean_and_se(&results.iter().map(|r| r.tau_sq_final).collect::<Vec<_>>());
    EmpiricalBler {
        bler,
        ci_half_width: if users == 0 { 0.0 } else { ci95_half_width(bler, users) },
        trials: results.len(),
        user_observations: users,
        mean_miss_rate: ratio(misses, users),
        mean_false_rate: ratio(falses, inactive),
        bler_rao_blackwell: rb,
        rb_ci_half_width: if users == 0 { 0.0 } else { 1.959_963_984_540_054 * (rb_var / users as f64).sqrt() },
        overloaded_trials: results.iter().filter(|r| r.overloaded).count(),
        mean_tau_sq_final: mean_tau,
    }
}

/// Runs `trials` blocks on `workers` threads (0 = rayon default), returned in
/// trial-index order.
pub fn run_trials(config: &SystemConfig, trials: usize, base_seed: u64, workers: usize) -> Result<Vec<TrialResult>> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| run_trial(config, trial_seed(base_seed, i as u64)))
            .collect()
    })
}

/// Empirical BLER over `trials` blocks seeded from `base_seed`.
pub fn run_campaign(config: &SystemConfig, trials: usize, base_seed: u64) -> Result<EmpiricalBler> {
    run_campaign_with_workers(config, trials, base_seed, 0)
}

pub fn run_campaign_with_workers(
    config: &SystemConfig,
    trials: usize,
    base_seed: u64,
    workers: usize,
) -> Result<EmpiricalBler> {
    if trials == 0 {
        return Err(Error::Config("a campaign needs at least one trial".into()));
    }
    let results = run_trials(config, trials, base_seed, workers)?;
    Ok(aggregate(config, &results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::Activity;

    fn tiny(k: usize) -> SystemConfig {
        let mut c = SystemConfig::table_one(k, 24);
        c.n_users = 20;
        c.n_antennas = 8;
        c.block_len = 60;
        c.payload_bits = 10;
        c.rx_power = 1.0;
        c.noise_var = 1e-3;
        c.se_samples = 2000;
        c
    }

    #[test]
    fn clean_link_has_no_errors() {
        let mut c = tiny(2);
        c.noise_var = 1e-9;
        let r = run_trial(&c, 11).unwrap();
        assert_eq!((r.miss_count, r.false_count), (0, 0));
        assert!(!r.overloaded);
        assert!(r.per_active_snr.iter().all(|&g| g > 1e3));
        assert!(r.per_active_error.iter().all(|&e| !e));
    }

    #[test]
    fn overload_fails_everyone() {
        let mut c = tiny(6);
        c.n_antennas = 2;
        let r = run_trial(&c, 3).unwrap();
        assert!(r.overloaded);
        assert!(r.per_active_error.iter().all(|&e| e));
        assert_eq!(r.error_prob_sum, 6.0);
    }

    #[test]
    fn single_trial_campaign_matches_trial() {
        let c = tiny(3);
        let agg = run_campaign(&c, 1, 5).unwrap();
        let r = run_trial(&c, trial_seed(5, 0)).unwrap();
        let errs = r.per_active_error.iter().filter(|&&e| e).count();
        assert_eq!(agg.bler, errs as f64 / 3.0);
        assert_eq!(agg.mean_miss_rate, r.miss_count as f64 / 3.0);
        assert_eq!(agg.mean_false_rate, r.false_count as f64 / 17.0);
    }

    #[test]
    fn campaign_independent_of_workers() {
        let c = tiny(4);
        let a = run_campaign_with_workers(&c, 12, 9, 1).unwrap();
        let b = run_campaign_with_workers(&c, 12, 9, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bernoulli_activity_runs() {
        let mut c = tiny(0);
        c.activity = Activity::Bernoulli(0.15);
        let agg = run_campaign(&c, 4, 1).unwrap();
        assert_eq!(agg.trials, 4);
        assert!(agg.bler >= 0.0 && agg.bler <= 1.0);
    }
}
