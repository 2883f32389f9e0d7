//! Block error rate of a correctly detected active user, conditioned on the
//! detection outcome and averaged over it.
//!
//! With `e` missed and `f` falsely detected users, the ZF post-processing SNR
//! of a correctly detected user is Gamma distributed with shape
//! `M - K + e - f + 1` and scale
//! `[β²/(β+τ²)] / [(K-e)βτ²/(β+τ²) + eβ + σ²]`: the inverse of the k-th
//! diagonal entry of `(ĤᴴĤ)⁻¹` is the energy of `ĥ_k` left after projecting
//! out the other `|K̂| - 1` columns, a sum of `θ₂` exponentials with mean
//! `β²/(β+τ²)`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::detection::DetectionStats;
use crate::fbl::{bler_normal_approx, capacity, dispersion, CodeParams};
use crate::quadrature::integrate;
use crate::special::{
    gamma_pdf, gamma_upper_quantile, ln_gamma, ln_q_function, log_binomial_pmf, reg_lower_gamma,
};
use crate::system::SystemConfig;
use crate::Result;

/// Gamma law of the conditional post-processing SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrLaw {
    pub shape: f64,
    pub scale: f64,
    pub miss_count: usize,
    pub false_count: usize,
    /// `M >= K - e + f`: the ZF equalizer exists.
    pub feasible: bool,
}

impl SnrLaw {
    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if !self.feasible {
            return 1.0;
        }
        reg_lower_gamma(self.shape, x / self.scale)
    }
}

/// How each conditional BLER inside the mixture is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConditionalMethod {
    /// Gamma CDF at `r = 2^R - 1`.
    #[default]
    ClosedForm,
    /// Quadrature of the normal approximation against the Gamma law.
    Numerical,
}

/// The SNR law for `e` misses and `f` false alarms at state `tau_inf_sq`.
pub fn conditional_snr_law(e: usize, f: usize, config: &SystemConfig, tau_inf_sq: f64) -> SnrLaw {
    let k = config.active_count();
    let m = config.n_antennas;
    let beta = config.rx_power;
    let detected = k.saturating_sub(e) + f;
    let feasible = m >= detected;
    let shape = m as f64 - detected as f64 + 1.0;
    let est_var = beta * beta / (beta + tau_inf_sq);
    let interference = (k - e.min(k)) as f64 * beta * tau_inf_sq / (beta + tau_inf_sq)
        + e as f64 * beta
        + config.noise_var;
    SnrLaw {
        shape: shape.max(0.0),
        scale: est_var / interference,
        miss_count: e,
        false_count: f,
        feasible,
    }
}

/// Gamma-CDF approximation of the conditional BLER; 1 when infeasible.
pub fn conditional_bler_closed_form(law: &SnrLaw, code: CodeParams) -> f64 {
    if !law.feasible {
        return 1.0;
    }
    reg_lower_gamma(law.shape, code.threshold_snr() / law.scale)
}

const QUAD_ABS_TOL: f64 = 1e-10;
const QUAD_REL_TOL: f64 = 1e-9;
const QUAD_MASS_TAIL: f64 = 1e-12;
const QUAD_MAX_PANELS: usize = 4000;

fn ln_integrand(x: f64, law: &SnrLaw, code: CodeParams) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let d = code.blocklength as f64;
    let arg = (capacity(x) - code.rate) / (dispersion(x) / d).sqrt();
    let ln_pdf = (law.shape - 1.0) * x.ln() - x / law.scale - ln_gamma(law.shape) - law.shape * law.scale.ln();
    ln_q_function(arg) + ln_pdf
}

/// `E[ε(γ)]` under the SNR law by adaptive quadrature; 1 when infeasible.
pub fn conditional_bler_numerical(law: &SnrLaw, code: CodeParams) -> Result<f64> {
    if !law.feasible {
        return Ok(1.0);
    }
    let upper = law.scale * gamma_upper_quantile(law.shape, QUAD_MASS_TAIL);
    let lin = code.linearized();
    let mut points = vec![0.0, upper, lin.v_low, lin.r_thresh, lin.mu_high];
    if law.shape > 1.0 {
        points.push((law.shape - 1.0) * law.scale);
    }
    // locate the bulk of the integrand on a log grid and pin panels around it
    let grid: Vec<f64> = (0..=64).map(|i| upper * 10f64.powf(-8.0 + 8.0 * i as f64 / 64.0)).collect();
    let (peak_idx, _) = grid
        .iter()
        .map(|&x| ln_integrand(x, law, code))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    points.extend(grid.iter().step_by(4).copied());
    for j in peak_idx.saturating_sub(3)..=(peak_idx + 3).min(grid.len() - 1) {
        points.push(grid[j]);
    }
    points.retain(|&x| x >= 0.0 && x <= upper && x.is_finite());
    points.sort_by(|a, b| a.total_cmp(b));
    points.dedup();
    let integrand = |x: f64| bler_normal_approx(x, code) * gamma_pdf(law.shape, law.scale, x);
    let res = integrate(integrand, &points, QUAD_ABS_TOL, QUAD_REL_TOL, QUAD_MAX_PANELS)?;
    Ok(res.value.clamp(0.0, 1.0))
}

/// Conditional BLER by the selected method.
pub fn conditional_bler(law: &SnrLaw, code: CodeParams, method: ConditionalMethod) -> Result<f64> {
    match method {
        ConditionalMethod::ClosedForm => Ok(conditional_bler_closed_form(law, code)),
        ConditionalMethod::Numerical => conditional_bler_numerical(law, code),
    }
}

/// `P_e = P_M + (1 - P_M) ε`.
pub fn overall_bler(p_miss: f64, bler_detected: f64) -> f64 {
    p_miss + (1.0 - p_miss) * bler_detected
}

/// Analytical BLER summary for one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct BlerReport {
    /// Sum of the enumerated mixture terms (lower bracket).
    pub bler_mixture: f64,
    pub bler_mixture_lo: f64,
    /// Lower bracket plus the neglected outcome mass counted at BLER 1.
    pub bler_mixture_hi: f64,
    pub bler_dominant: f64,
    pub p_overall: f64,
    pub p_overall_lo: f64,
    pub p_overall_hi: f64,
    pub p_miss: f64,
    pub p_false: f64,
    pub tau_inf_sq: f64,
    pub terms_used: usize,
    pub neglected_mass: f64,
    pub config: SystemConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    ln_w: f64,
    e: usize,
    f: usize,
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ln_w
            .total_cmp(&other.ln_w)
            .then_with(|| other.e.cmp(&self.e))
            .then_with(|| other.f.cmp(&self.f))
    }
}

/// Compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}
impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc })
        .0
}

/// Double binomial mixture over `(e, f)`.
///
/// Outcomes are visited best-first from the joint mode; since both marginals
/// are unimodal every cell has a non-decreasing path to the mode, so cells come
/// out in non-increasing weight. Enumeration stops once the unvisited mass is
/// below `trunc_tol`; that mass is reported as the width of the bracket. The
/// `(0, 0)` outcome is always included.
pub fn mixture_bler(
    config: &SystemConfig,
    stats: &DetectionStats,
    code: CodeParams,
    trunc_tol: f64,
    method: ConditionalMethod,
) -> Result<BlerReport> {
    let k = config.active_count();
    let inactive = config.n_users - k;
    let ln_miss: Vec<f64> = (0..=k).map(|e| log_binomial_pmf(k as u64, e as u64, stats.p_miss)).collect();
    let ln_false: Vec<f64> =
        (0..=inactive).map(|f| log_binomial_pmf(inactive as u64, f as u64, stats.p_false)).collect();

    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    let start = (argmax(&ln_miss), argmax(&ln_false));
    heap.push(Cell { ln_w: ln_miss[start.0] + ln_false[start.1], e: start.0, f: start.1 });
    seen.insert(start);

    let mut mass = Neumaier::default();
    let mut lo = Neumaier::default();
    let mut terms = 0usize;
    let mut included_origin = false;
    let mut exhausted = false;
    loop {
        if 1.0 - mass.value() < trunc_tol {
            break;
        }
        let Some(cell) = heap.pop() else {
            exhausted = true;
            break;
        };
        if cell.ln_w == f64::NEG_INFINITY {
            exhausted = true;
            break;
        }
        let w = cell.ln_w.exp();
        let law = conditional_snr_law(cell.e, cell.f, config, stats.tau_inf_sq);
        lo.add(w * conditional_bler(&law, code, method)?);
        mass.add(w);
        terms += 1;
        included_origin |= cell.e == 0 && cell.f == 0;
        let neighbours = [
            (cell.e.wrapping_sub(1), cell.f),
            (cell.e + 1, cell.f),
            (cell.e, cell.f.wrapping_sub(1)),
            (cell.e, cell.f + 1),
        ];
        for (e, f) in neighbours {
            if e <= k && f <= inactive && seen.insert((e, f)) {
                heap.push(Cell { ln_w: ln_miss[e] + ln_false[f], e, f });
            }
        }
    }
    if !included_origin {
        let w = (ln_miss[0] + ln_false[0]).exp();
        let law = conditional_snr_law(0, 0, config, stats.tau_inf_sq);
        lo.add(w * conditional_bler(&law, code, method)?);
        mass.add(w);
        terms += 1;
    }
    let neglected = if exhausted { 0.0 } else { (1.0 - mass.value()).max(0.0) };
    let lo = lo.value().clamp(0.0, 1.0);
    let hi = (lo + neglected).min(1.0);
    let dominant = dominant_term_bler(config, stats, code);
    Ok(BlerReport {
        bler_mixture: lo,
        bler_mixture_lo: lo,
        bler_mixture_hi: hi,
        bler_dominant: dominant,
        p_overall: overall_bler(stats.p_miss, lo),
        p_overall_lo: overall_bler(stats.p_miss, lo),
        p_overall_hi: overall_bler(stats.p_miss, hi),
        p_miss: stats.p_miss,
        p_false: stats.p_false,
        tau_inf_sq: stats.tau_inf_sq,
        terms_used: terms,
        neglected_mass: neglected,
        config: config.clone(),
    })
}

/// Only the no-error outcome: `(1-P_F)^{N-K} (1-P_M)^K ε_{k|00}`, with the
/// closed-form conditional BLER.
pub fn dominant_term_bler(config: &SystemConfig, stats: &DetectionStats, code: CodeParams) -> f64 {
    let k = config.active_count();
    let inactive = config.n_users - k;
    let ln_w = log_binomial_pmf(k as u64, 0, stats.p_miss) + log_binomial_pmf(inactive as u64, 0, stats.p_false);
    let law = conditional_snr_law(0, 0, config, stats.tau_inf_sq);
    ln_w.exp() * conditional_bler_closed_form(&law, code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::DetectionConvention;
    use crate::rng::{substream, Component};
    use rand_distr::{Distribution, Gamma};

    fn small_config() -> SystemConfig {
        let mut c = SystemConfig::table_one(3, 20);
        c.n_users = 6;
        c.n_antennas = 8;
        c.rx_power = 1.0;
        c.noise_var = 0.1;
        c
    }

    #[test]
    fn law_shape_and_limits() {
        let mut c = SystemConfig::table_one(100, 120);
        let law = conditional_snr_law(0, 0, &c, 1e-3 * c.noise_var);
        assert_eq!(law.shape, 1.0);
        assert!(law.feasible);
        let law = conditional_snr_law(0, 0, &c, 1e-12 * c.noise_var);
        assert!((law.scale / c.snr() - 1.0).abs() < 1e-6);
        assert!(!conditional_snr_law(0, 1, &c, c.noise_var).feasible);
        assert!(conditional_snr_law(1, 1, &c, c.noise_var).feasible);
        c.n_antennas = 110;
        let law = conditional_snr_law(2, 3, &c, c.noise_var);
        assert_eq!(law.shape, 110.0 - 101.0 + 1.0);
        assert!((law.mean() - law.shape * law.scale).abs() < 1e-12);
    }

    #[test]
    fn fast_state_scale_matches_closed_expression() {
        // at τ² = σ²/(L-K) the e = f = 0 scale is β(L-K) / (σ²(L + σ²/β))
        let c = SystemConfig::table_one(100, 153);
        let tau = c.noise_var / 53.0;
        let law = conditional_snr_law(0, 0, &c, tau);
        let (b, s2) = (c.rx_power, c.noise_var);
        let expect = b * 53.0 / (s2 * (153.0 + s2 / b));
        assert!((law.scale / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_cases() {
        let law = SnrLaw { shape: 1.0, scale: 2.0, miss_count: 0, false_count: 0, feasible: true };
        let code = CodeParams::new(100, 0.4);
        let r = code.threshold_snr();
        assert!((conditional_bler_closed_form(&law, code) - (1.0 - (-r / 2.0).exp())).abs() < 1e-15);
        assert!(conditional_bler_closed_form(&law, CodeParams::new(100, 1e-14)) < 1e-13);
        let bad = SnrLaw { feasible: false, ..law };
        assert_eq!(conditional_bler_closed_form(&bad, code), 1.0);
        assert_eq!(conditional_bler_numerical(&bad, code).unwrap(), 1.0);
    }

    #[test]
    fn numerical_degenerate_scales() {
        let code = CodeParams::new(130, 0.25);
        let big = SnrLaw { shape: 2.0, scale: 1e6, miss_count: 0, false_count: 0, feasible: true };
        assert!(conditional_bler_numerical(&big, code).unwrap() < 1e-6);
        let small = SnrLaw { scale: 1e-6, ..big };
        assert!((conditional_bler_numerical(&small, code).unwrap() - 1.0).abs() < 1e-6);
    }

    // Plain Monte-Carlo average of the normal approximation over Gamma draws.
    fn sampled_bler(law: &SnrLaw, code: CodeParams, n: usize) -> (f64, f64) {
        let g = Gamma::new(law.shape, law.scale).unwrap();
        let mut rng = substream(99, Component::Oracle, 1);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v = bler_normal_approx(g.sample(&mut rng), code);
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let var = (s2 / n as f64 - mean * mean).max(0.0);
        (mean, (var / n as f64).sqrt())
    }

    #[test]
    fn numerical_matches_sampling_oracle() {
        let code = CodeParams::new(130, 0.25);
        for &(shape, scale) in &[(21.0, 1.5), (1.0, 0.5), (2.0, 0.2), (5.0, 0.05)] {
            let law = SnrLaw { shape, scale, miss_count: 0, false_count: 0, feasible: true };
            let q = conditional_bler_numerical(&law, code).unwrap();
            let (mc, se) = sampled_bler(&law, code, 2_000_000);
            assert!((q - mc).abs() <= 3.0 * se + 1e-12, "shape {shape}: {q} vs {mc} ± {se}");
        }
    }

    #[test]
    fn overall_bler_values() {
        assert_eq!(overall_bler(0.0, 0.2), 0.2);
        assert_eq!(overall_bler(0.2, 0.0), 0.2);
        assert!((overall_bler(0.3, 0.5) - 0.65).abs() < 1e-15);
        assert_eq!(overall_bler(1.0, 0.0), 1.0);
    }

    #[test]
    fn perfect_detection_mixture_is_one_term() {
        let c = SystemConfig::table_one(90, 140);
        let tau = c.noise_var / 50.0;
        let stats = DetectionStats::perfect(&c, tau);
        let rep = mixture_bler(&c, &stats, c.code(), 1e-12, ConditionalMethod::ClosedForm).unwrap();
        assert_eq!(rep.terms_used, 1);
        let law = conditional_snr_law(0, 0, &c, tau);
        assert_eq!(rep.bler_mixture, conditional_bler_closed_form(&law, c.code()));
        assert_eq!(rep.bler_dominant, rep.bler_mixture);
    }

    #[test]
    fn full_miss_means_certain_failure() {
        let c = small_config();
        let mut stats = DetectionStats::perfect(&c, 0.05);
        stats.p_miss = 1.0;
        let rep = mixture_bler(&c, &stats, c.code(), 1e-12, ConditionalMethod::ClosedForm).unwrap();
        assert_eq!(rep.p_overall, 1.0);
    }

    // Exhaustive sum over every (e, f) on a small network.
    fn brute_mixture(c: &SystemConfig, stats: &DetectionStats) -> f64 {
        let k = c.active_count();
        let inactive = c.n_users - k;
        let mut total = 0.0;
        for e in 0..=k {
            for f in 0..=inactive {
                let w = log_binomial_pmf(k as u64, e as u64, stats.p_miss).exp()
                    * log_binomial_pmf(inactive as u64, f as u64, stats.p_false).exp();
                let law = conditional_snr_law(e, f, c, stats.tau_inf_sq);
                total += w * conditional_bler_closed_form(&law, c.code());
            }
        }
        total
    }

    #[test]
    fn mixture_brackets_contain_exhaustive_sum() {
        let mut c = small_config();
        c.n_users = 40;
        c.activity = crate::system::Activity::Fixed(5);
        let mut stats = DetectionStats::at_state(&c, 0.3, DetectionConvention::Corrected);
        stats.p_miss = 0.2;
        stats.p_false = 0.05;
        let exact = brute_mixture(&c, &stats);
        for tol in [1e-6, 1e-10, 1e-13] {
            let rep = mixture_bler(&c, &stats, c.code(), tol, ConditionalMethod::ClosedForm).unwrap();
            assert!(rep.bler_mixture_lo <= exact + 1e-14 && exact <= rep.bler_mixture_hi + 1e-14);
            assert!(rep.bler_mixture_hi - rep.bler_mixture_lo <= tol);
            assert!(rep.bler_dominant <= rep.bler_mixture + 1e-12);
        }
    }
}
