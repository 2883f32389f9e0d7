//! Approximate message passing for joint activity detection and channel
//! estimation, with the Bernoulli-Gaussian MMSE denoiser and its scalar state
//! evolution.
//!
//! Internally the pilot signal is normalized as `Ỹ = Y_p / √L = P X + Ñ`,
//! where `P` has unit-norm columns and `X` has rows `u_n h_n`. In this form the
//! AMP state `τ_t² = ‖R_t‖² / (L M)` is the per-component variance of the
//! effective observation `X̂_t + Pᴴ R_t - X` and obeys
//! `τ_{t+1}² = σ²/L + (N/L) mse(τ_t²)`.

use ndarray::{Array2, ArrayView2, Axis, Zip};
use num_complex::Complex64;
use rand_distr::{Distribution, Gamma};

use crate::rng::{substream, Component};
use crate::system::SystemConfig;
use crate::{Error, Result};

/// Fixed seed of the state-evolution sample set.
pub const SE_SEED: u64 = 0x5E_5EED;
const SE_MAX_ITERS: usize = 500;
const SE_REL_TOL: f64 = 1e-8;

/// MMSE denoiser for `X ~ (1-λ)δ₀ + λ CN(0, βI_M)` observed as `X + τV`.
///
/// The posterior mean is `π(q)·s·y` with `s = β/(β+τ²)`, `q = ‖y‖²` and
/// `π(q)` the posterior activity probability.
#[derive(Debug, Clone, Copy)]
pub struct BgDenoiser {
    tau_sq: f64,
    rx_power: f64,
    dims: f64,
    shrink: f64,
    /// 1/τ² - 1/(β+τ²)
    kappa: f64,
    /// ln[(1-λ)/λ] + M ln[(β+τ²)/τ²]
    log_prior_odds: f64,
}

impl BgDenoiser {
    pub fn new(tau_sq: f64, activity_prob: f64, rx_power: f64, dims: usize) -> Self {
        let dims = dims as f64;
        let log_odds = if activity_prob >= 1.0 {
            f64::NEG_INFINITY
        } else if activity_prob <= 0.0 {
            f64::INFINITY
        } else {
            ((1.0 - activity_prob) / activity_prob).ln() + dims * (rx_power / tau_sq).ln_1p()
        };
        Self {
            tau_sq,
            rx_power,
            dims,
            shrink: rx_power / (rx_power + tau_sq),
            kappa: rx_power / (tau_sq * (rx_power + tau_sq)),
            log_prior_odds: log_odds,
        }
    }

    /// Posterior probability that the observation came from an active user.
    pub fn posterior_activity(&self, norm_sq: f64) -> f64 {
        let z = self.kappa * norm_sq - self.log_prior_odds;
        // below e^-460 the estimate would turn subnormal in later products
        if z < -460.0 {
            return 0.0;
        }
        1.0 / (1.0 + (-z).exp())
    }

    /// Scalar gain g(q) with `η(y) = g(‖y‖²) y`.
    pub fn gain(&self, norm_sq: f64) -> f64 {
        self.posterior_activity(norm_sq) * self.shrink
    }

    /// Average diagonal of the (Wirtinger) Jacobian of η at an observation
    /// with squared norm `q`: `g(q) + g'(q) q / M`.
    pub fn divergence(&self, norm_sq: f64) -> f64 {
        let pi = self.posterior_activity(norm_sq);
        self.shrink * pi * (1.0 + (1.0 - pi) * self.kappa * norm_sq / self.dims)
    }

    /// Posterior error `E[‖X - η(y)‖² | y]`, summed over the M components.
    pub fn posterior_error(&self, norm_sq: f64) -> f64 {
        let pi = self.posterior_activity(norm_sq);
        pi * self.dims * self.rx_power * self.tau_sq / (self.rx_power + self.tau_sq)
            + pi * (1.0 - pi) * self.shrink * self.shrink * norm_sq
    }
}

/// Posterior mean of X given `obs = X + τV`, and the average diagonal of its
/// Jacobian.
pub fn mmse_denoiser(
    obs: &[Complex64],
    tau_sq: f64,
    activity_prob: f64,
    rx_power: f64,
) -> (Vec<Complex64>, f64) {
    let den = BgDenoiser::new(tau_sq, activity_prob, rx_power, obs.len());
    let q: f64 = obs.iter().map(|c| c.norm_sqr()).sum();
    let g = den.gain(q);
    (obs.iter().map(|&c| c * g).collect(), den.divergence(q))
}

/// Likelihood-ratio threshold on `‖y_n‖²`:
/// `l = M ln(1 + β/τ²) / (1/τ² - 1/(τ²+β))`.
pub fn detection_threshold(tau_inf_sq: f64, rx_power: f64, n_antennas: usize) -> f64 {
    // denominator rewritten as β / (τ²(τ²+β)) to survive β << τ²
    n_antennas as f64 * (rx_power / tau_inf_sq).ln_1p() * tau_inf_sq * (tau_inf_sq + rx_power)
        / rx_power
}

/// Indices of rows whose squared norm exceeds `threshold`.
pub fn detect_activity(statistics: ArrayView2<Complex64>, threshold: f64) -> Vec<usize> {
    statistics
        .outer_iter()
        .enumerate()
        .filter(|(_, row)| row.iter().map(|c| c.norm_sqr()).sum::<f64>() > threshold)
        .map(|(n, _)| n)
        .collect()
}

/// Iteration limits for [`run_amp_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// Factor applied to the residual step size each time the residual power
    /// grows; 1 turns the safeguard off.
    pub damping: f64,
}

pub const DEFAULT_DAMPING: f64 = 0.5;
const MIN_STEP: f64 = 0.125;
/// Relative growth of the residual power that counts as a step in the wrong
/// direction (smaller changes are fluctuation around the fixed point).
const GROWTH_TOL: f64 = 1e-3;

impl AmpOptions {
    pub fn new(max_iters: usize, tol: f64) -> Self {
        Self { max_iters, tol, damping: DEFAULT_DAMPING }
    }

    pub fn from_config(config: &SystemConfig) -> Self {
        Self::new(config.amp_max_iters, config.amp_tol)
    }
}

/// Output of one AMP run.
#[derive(Debug, Clone)]
pub struct JadceResult {
    /// N x M MMSE estimates of `u_n h_n`.
    pub channel_estimates: Array2<Complex64>,
    /// N x M effective observations `X̂ + PᴴR`, distributed as `X + τV`.
    pub effective_obs: Array2<Complex64>,
    pub detected_active: Vec<usize>,
    pub tau_sq_final: f64,
    pub threshold: f64,
    pub iterations_run: usize,
    /// τ_t² for t = 0, 1, ...; entry 0 is the initial residual power.
    pub tau_trace: Vec<f64>,
    /// Iteration at which residual damping switched on, if it did.
    pub damped_from: Option<usize>,
}

/// Runs AMP with the config's iteration limits.
pub fn run_amp(
    pilot_signal: ArrayView2<Complex64>,
    pilots: ArrayView2<Complex64>,
    config: &SystemConfig,
) -> Result<JadceResult> {
    run_amp_with(pilot_signal, pilots, config, AmpOptions::from_config(config))
}

fn denoise_rows(
    obs: &Array2<Complex64>,
    out: &mut Array2<Complex64>,
    den: &BgDenoiser,
) -> f64 {
    let mut div_sum = 0.0;
    Zip::from(out.outer_iter_mut()).and(obs.outer_iter()).for_each(|mut dst, src| {
        let q: f64 = src.iter().map(|c| c.norm_sqr()).sum();
        let g = den.gain(q);
        div_sum += den.divergence(q);
        Zip::from(&mut dst).and(&src).for_each(|d, &s| *d = s * g);
    });
    div_sum
}

/// AMP from `X̂ = 0`, `R = Ỹ`; stops when the relative change of τ² drops
/// below `opts.tol` or after `opts.max_iters` iterations.
///
/// State evolution decreases monotonically, but at finite size the nearly
/// hard-threshold denoiser occasionally sets off a growing error mode (a few
/// percent of Table I scenarios). Each time the residual power grows, the
/// residual step size shrinks by `opts.damping` (down to 1/8); undisturbed
/// runs are plain AMP.
pub fn run_amp_with(
    pilot_signal: ArrayView2<Complex64>,
    pilots: ArrayView2<Complex64>,
    config: &SystemConfig,
    opts: AmpOptions,
) -> Result<JadceResult> {
    let (l, m) = pilot_signal.dim();
    let (lp, n) = pilots.dim();
    if lp != l {
        return Err(Error::Dimension(format!(
            "pilot signal has {l} rows, pilot matrix {lp}"
        )));
    }
    if m != config.n_antennas || n != config.n_users {
        return Err(Error::Dimension(format!(
            "pilot signal {l}x{m} / pilots {lp}x{n} disagree with config N={} M={}",
            config.n_users, config.n_antennas
        )));
    }
    let lambda = config.activity_prob();
    let beta = config.rx_power;
    let one = Complex64::new(1.0, 0.0);
    let y_norm = pilot_signal.mapv(|c| c / (l as f64).sqrt());
    let pilots_h = pilots.t().mapv(|c| c.conj());
    let power = |r: &Array2<Complex64>| r.iter().map(|c| c.norm_sqr()).sum::<f64>() / (l * m) as f64;

    let mut estimates: Array2<Complex64> = Array2::zeros((n, m));
    let mut residual = y_norm.clone();
    let mut tau_sq = power(&residual);
    let mut trace = vec![tau_sq];
    let mut pseudo: Array2<Complex64> = Array2::zeros((n, m));
    let mut iterations = 0;
    let mut damped_from = None;
    let mut damp = 1.0;

    for iter in 0..opts.max_iters {
        pseudo.assign(&estimates);
        ndarray::linalg::general_mat_mul(one, &pilots_h, &residual, one, &mut pseudo);
        let den = BgDenoiser::new(tau_sq, lambda, beta, m);
        let div_sum = denoise_rows(&pseudo, &mut estimates, &den);
        // (N/L) times the mean divergence over users
        let onsager = Complex64::new(div_sum / l as f64, 0.0);
        let mut next = y_norm.clone();
        ndarray::linalg::general_mat_mul(-one, &pilots, &estimates, one, &mut next);
        next.scaled_add(onsager, &residual);
        iterations = iter + 1;
        if opts.damping < 1.0 && power(&next) > tau_sq * (1.0 + GROWTH_TOL) {
            damped_from.get_or_insert(iterations);
            damp = (damp * opts.damping).max(MIN_STEP);
        }
        if damp < 1.0 {
            next *= Complex64::new(damp, 0.0);
            next.scaled_add(Complex64::new(1.0 - damp, 0.0), &residual);
        }
        let next_tau = power(&next);
        if !next_tau.is_finite() || next_tau <= 0.0 {
            return Err(Error::Divergence { iteration: iterations });
        }
        residual = next;
        let change = (next_tau - tau_sq).abs() / tau_sq;
        tau_sq = next_tau;
        trace.push(tau_sq);
        if change < opts.tol {
            break;
        }
    }

    pseudo.assign(&estimates);
    ndarray::linalg::general_mat_mul(one, &pilots_h, &residual, one, &mut pseudo);
    let den = BgDenoiser::new(tau_sq, lambda, beta, m);
    denoise_rows(&pseudo, &mut estimates, &den);
    if estimates.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Divergence { iteration: iterations });
    }
    let threshold = detection_threshold(tau_sq, beta, m);
    let detected_active = detect_activity(pseudo.view(), threshold);

    Ok(JadceResult {
        channel_estimates: estimates,
        effective_obs: pseudo,
        detected_active,
        tau_sq_final: tau_sq,
        threshold,
        iterations_run: iterations,
        tau_trace: trace,
        damped_from,
    })
}

/// Mean squared error per component between two N x M matrices.
pub fn mean_sq_error(a: ArrayView2<Complex64>, b: ArrayView2<Complex64>) -> f64 {
    let n = a.len() as f64;
    Zip::from(&a).and(&b).fold(0.0, |acc, x, y| acc + (x - y).norm_sqr()) / n
}

/// Sampled scalar state evolution.
///
/// The expectation over `(X, V)` is taken by Monte Carlo, stratified on the
/// activity indicator: for an active draw `‖X + τV‖² = (β+τ²) G`, for an
/// inactive one `τ² G`, with `G ~ Gamma(M, 1)`. The per-draw error is the
/// posterior error given the observation, which has the same mean as
/// `‖η - X‖²` and much smaller variance. The sample set is fixed, so the map
/// is deterministic.
#[derive(Debug, Clone)]
pub struct StateEvolution {
    noise_term: f64,
    load: f64,
    lambda: f64,
    beta: f64,
    dims: usize,
    active_draws: Vec<f64>,
    inactive_draws: Vec<f64>,
}

impl StateEvolution {
    pub fn new(config: &SystemConfig) -> Self {
        let dims = config.n_antennas;
        let gamma = Gamma::new(dims as f64, 1.0).expect("valid gamma shape");
        let draw = |idx: u64| {
            let mut rng = substream(SE_SEED, Component::StateEvolution, idx);
            (0..config.se_samples).map(|_| gamma.sample(&mut rng)).collect::<Vec<f64>>()
        };
        let l = config.pilot_len as f64;
        Self {
            noise_term: config.noise_var / l,
            load: config.n_users as f64 / l,
            lambda: config.activity_prob(),
            beta: config.rx_power,
            dims,
            active_draws: draw(0),
            inactive_draws: draw(1),
        }
    }

    /// Per-component MSE of the MMSE denoiser at state τ².
    pub fn mse(&self, tau_sq: f64) -> f64 {
        let den = BgDenoiser::new(tau_sq, self.lambda, self.beta, self.dims);
        let mean = |draws: &[f64], scale: f64| {
            draws.iter().map(|&g| den.posterior_error(scale * g)).sum::<f64>() / draws.len() as f64
        };
        let mut total = 0.0;
        if self.lambda > 0.0 {
            total += self.lambda * mean(&self.active_draws, self.beta + tau_sq);
        }
        if self.lambda < 1.0 {
            total += (1.0 - self.lambda) * mean(&self.inactive_draws, tau_sq);
        }
        total / self.dims as f64
    }

    /// One step of the recursion.
    pub fn step(&self, tau_sq: f64) -> f64 {
        self.noise_term + self.load * self.mse(tau_sq)
    }

    /// τ₀² = σ²/L + (N/L) λβ, the state of an all-zero estimate.
    pub fn initial_state(&self) -> f64 {
        self.noise_term + self.load * self.lambda * self.beta
    }

    /// `iters + 1` states starting from [`initial_state`](Self::initial_state).
    pub fn trajectory(&self, iters: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(iters + 1);
        let mut t = self.initial_state();
        out.push(t);
        for _ in 0..iters {
            t = self.step(t);
            out.push(t);
        }
        out
    }

    /// Iterates from τ₀² until the relative change is below 1e-8.
    ///
    /// The iterates decrease monotonically; Aitken extrapolation is applied
    /// every third step and kept only when it stays on the upper side of the
    /// fixed point (`step(A) <= A`), so the limit is the same one plain
    /// iteration reaches.
    pub fn fixed_point(&self) -> Result<f64> {
        if self.lambda == 0.0 {
            return Ok(self.noise_term);
        }
        let mut seq = vec![self.initial_state()];
        let mut evals = 0;
        let mut prev = seq[0];
        while evals < SE_MAX_ITERS {
            let cur = seq[seq.len() - 1];
            let next = self.step(cur);
            evals += 1;
            if (next - cur).abs() < SE_REL_TOL * cur {
                return Ok(next);
            }
            prev = cur;
            seq.push(next);
            if seq.len() < 3 {
                continue;
            }
            let (t0, t1, t2) = (seq[seq.len() - 3], seq[seq.len() - 2], seq[seq.len() - 1]);
            let denom = (t2 - t1) - (t1 - t0);
            let a = t2 - (t2 - t1) * (t2 - t1) / denom;
            seq = vec![t2];
            if !(a.is_finite() && a < t2 && a > self.noise_term) {
                continue;
            }
            let fa = self.step(a);
            evals += 1;
            if fa <= a {
                if (a - fa).abs() < SE_REL_TOL * a {
                    return Ok(fa);
                }
                prev = a;
                seq = vec![a, fa];
            }
        }
        let last = seq[seq.len() - 1];
        Err(Error::NonConvergence { prev, last })
    }
}

/// Fixed point τ∞² of the state evolution for `config`.
pub fn state_evolution_fixed_point(config: &SystemConfig) -> Result<f64> {
    StateEvolution::new(config).fixed_point()
}

/// High-SNR limit of the fixed point, `σ² / (L - K)`.
pub fn high_snr_fixed_point(config: &SystemConfig) -> Result<f64> {
    let (l, k) = (config.pilot_len, config.active_count());
    if l <= k {
        return Err(Error::Config(format!("high-SNR fixed point needs L > K (L={l}, K={k})")));
    }
    Ok(config.noise_var / (l - k) as f64)
}

/// Row `n` of a matrix as a vector.
pub fn row_vec(a: &Array2<Complex64>, n: usize) -> Vec<Complex64> {
    a.index_axis(Axis(0), n).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::complex_gaussian;
    use crate::system::generate_scenario;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn denoiser_zero_and_full_activity() {
        let (out, _) = mmse_denoiser(&[c(0.0, 0.0), c(0.0, 0.0)], 0.3, 0.1, 1.0);
        assert!(out.iter().all(|z| z.norm() == 0.0));
        let obs = [c(0.4, -1.0), c(2.0, 0.5), c(-0.1, 0.0)];
        let (out, div) = mmse_denoiser(&obs, 0.5, 1.0, 2.0);
        for (o, y) in out.iter().zip(&obs) {
            assert!((o - y * (2.0 / 2.5)).norm() < 1e-15);
        }
        assert!((div - 0.8).abs() < 1e-15);
    }

    // Direct Bayes rule on the two-point mixture at M = 2.
    fn bayes_posterior_mean(obs: &[Complex64], tau_sq: f64, lambda: f64, beta: f64) -> Vec<Complex64> {
        let q: f64 = obs.iter().map(|z| z.norm_sqr()).sum();
        let m = obs.len() as i32;
        let pdf = |var: f64| (-q / var).exp() / (std::f64::consts::PI * var).powi(m);
        let w1 = lambda * pdf(beta + tau_sq);
        let w0 = (1.0 - lambda) * pdf(tau_sq);
        let post = w1 / (w1 + w0);
        obs.iter().map(|&y| y * (post * beta / (beta + tau_sq))).collect()
    }

    #[test]
    fn denoiser_matches_bayes_rule() {
        let mut rng = substream(4, Component::Oracle, 0);
        for _ in 0..200 {
            let tau_sq = rng.gen_range(0.05..2.0);
            let lambda = rng.gen_range(0.01..0.99);
            let beta = rng.gen_range(0.1..3.0);
            let obs = [complex_gaussian(&mut rng, 1.5), complex_gaussian(&mut rng, 1.5)];
            let (out, _) = mmse_denoiser(&obs, tau_sq, lambda, beta);
            let reference = bayes_posterior_mean(&obs, tau_sq, lambda, beta);
            for (a, b) in out.iter().zip(&reference) {
                assert!((a - b).norm() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn divergence_matches_finite_differences() {
        let mut rng = substream(5, Component::Oracle, 0);
        let h = 1e-6;
        for _ in 0..100 {
            let tau_sq = rng.gen_range(0.1..1.0);
            let lambda = rng.gen_range(0.05..0.95);
            let beta = rng.gen_range(0.2..2.0);
            let obs: Vec<Complex64> = (0..4).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            let (_, div) = mmse_denoiser(&obs, tau_sq, lambda, beta);
            // Wirtinger derivative d/dy = (d/da - i d/db) / 2, averaged over the diagonal
            let mut fd = Complex64::new(0.0, 0.0);
            for k in 0..obs.len() {
                let eval = |delta: Complex64| {
                    let mut o = obs.clone();
                    o[k] += delta;
                    mmse_denoiser(&o, tau_sq, lambda, beta).0[k]
                };
                let d_re = (eval(c(h, 0.0)) - eval(c(-h, 0.0))) / (2.0 * h);
                let d_im = (eval(c(0.0, h)) - eval(c(0.0, -h))) / (2.0 * h);
                fd += 0.5 * (d_re - Complex64::i() * d_im);
            }
            fd /= obs.len() as f64;
            assert!((fd.re - div).abs() < 1e-6 && fd.im.abs() < 1e-6, "{fd} vs {div}");
        }
    }

    #[test]
    fn threshold_limits() {
        let (tau, m) = (0.7, 8);
        let l_small = detection_threshold(tau, 1e-9, m);
        assert!((l_small - m as f64 * tau).abs() < 1e-6);
        let a = detection_threshold(tau, 2.0, m);
        let b = detection_threshold(tau, 2.0, 2 * m);
        assert!((b - 2.0 * a).abs() < 1e-12 * b);
        // re-derivation with the literal formula
        let literal = m as f64 * (1.0 + 2.0 / tau as f64).ln() / (1.0 / tau - 1.0 / (tau + 2.0));
        assert!(((a - literal) / literal).abs() < 1e-13);
    }

    #[test]
    fn detect_activity_basics() {
        let zeros: Array2<Complex64> = Array2::zeros((5, 3));
        assert!(detect_activity(zeros.view(), 0.1).is_empty());
        let mut one = zeros.clone();
        one[(3, 1)] = c(100.0, 0.0);
        assert_eq!(detect_activity(one.view(), 0.1), vec![3]);
    }

    #[test]
    fn noiseless_orthogonal_recovery() {
        // L >= N with unit-norm, mutually orthogonal pilot columns
        let mut cfg = SystemConfig::table_one(1, 16);
        cfg.n_users = 8;
        cfg.n_antennas = 4;
        cfg.block_len = 40;
        cfg.payload_bits = 10;
        cfg.rx_power = 1.0;
        cfg.noise_var = 1e-300;
        let mut s = generate_scenario(&cfg, 21);
        s.pilots.fill(c(0.0, 0.0));
        for n in 0..8 {
            s.pilots[(2 * n, n)] = c(0.6, 0.0);
            s.pilots[(2 * n + 1, n)] = c(0.0, 0.8);
        }
        s.pilot_noise.fill(c(0.0, 0.0));
        let y = crate::system::received_pilot_signal(&s);
        let res = run_amp(y.view(), s.pilots.view(), &cfg).unwrap();
        let active = s.active_indices();
        assert_eq!(res.detected_active, active);
        let k = active[0];
        let h = s.channels.row(k);
        let err: f64 = res.channel_estimates.row(k).iter().zip(h).map(|(a, b)| (a - b).norm_sqr()).sum();
        let norm: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        assert!((err / norm).sqrt() < 1e-6);
    }

    #[test]
    fn se_zero_activity_is_exact() {
        let mut cfg = SystemConfig::table_one(0, 120);
        cfg.se_samples = 1000;
        let t = state_evolution_fixed_point(&cfg).unwrap();
        assert_eq!(t, cfg.noise_var / 120.0);
    }

    #[test]
    fn se_high_snr_limit() {
        let mut cfg = SystemConfig::table_one(40, 120);
        cfg.n_antennas = 64;
        cfg.se_samples = 20_000;
        cfg.noise_var = cfg.rx_power * 1e-7;
        let t = state_evolution_fixed_point(&cfg).unwrap();
        let lim = high_snr_fixed_point(&cfg).unwrap();
        assert!(((t - lim) / t).abs() <= 0.1, "{t} vs {lim}");
    }

    #[test]
    fn se_monotone_decrease() {
        let mut cfg = SystemConfig::table_one(80, 120);
        cfg.se_samples = 20_000;
        let se = StateEvolution::new(&cfg);
        let traj = se.trajectory(60);
        assert!(traj.windows(2).all(|w| w[1] <= w[0]));
        let fp = se.fixed_point().unwrap();
        assert!(fp <= *traj.last().unwrap() * (1.0 + 1e-9));
    }
}
