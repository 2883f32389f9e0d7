//! Activity-detection error probabilities and channel-estimation error
//! variances at the state-evolution fixed point.
//!
//! The detector compares `‖y_n‖²` (the AMP effective observation) against the
//! likelihood-ratio threshold `l`. An active user's statistic is
//! `(β+τ²)·Gamma(M, 1)`, an inactive user's `τ²·Gamma(M, 1)`, so
//!
//! - `P_M = P(M, l/(β+τ²))` (regularized lower incomplete gamma),
//! - `P_F = Q(M, l/τ²)` (regularized upper incomplete gamma).

use crate::amp::detection_threshold;
use crate::special::{reg_lower_gamma, reg_upper_gamma};
use crate::system::SystemConfig;

/// Which form of the miss / false-alarm expressions to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetectionConvention {
    /// Chi-square statistic with per-component scales β+τ² and τ².
    #[default]
    Corrected,
    /// The typeset form `Γ̄(M, l²/(β²+τ²))/Γ(M)` and `1 - Γ̄(M, l²/τ²)/Γ(M)`,
    /// kept for comparison only.
    AsPrinted,
}

/// Detection and estimation-error summary for one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionStats {
    pub p_miss: f64,
    pub p_false: f64,
    pub err_var_detected: f64,
    pub err_var_missed: f64,
    pub tau_inf_sq: f64,
    pub threshold: f64,
}

impl DetectionStats {
    /// Statistics at state `tau_inf_sq` with the likelihood-ratio threshold.
    pub fn at_state(config: &SystemConfig, tau_inf_sq: f64, convention: DetectionConvention) -> Self {
        let (m, beta) = (config.n_antennas, config.rx_power);
        let threshold = detection_threshold(tau_inf_sq, beta, m);
        let (p_miss, p_false) = match convention {
            DetectionConvention::Corrected => (
                missed_detection_prob(m, beta, tau_inf_sq, threshold),
                false_alarm_prob(m, tau_inf_sq, threshold),
            ),
            DetectionConvention::AsPrinted => {
                let mf = m as f64;
                let l2 = threshold * threshold;
                (
                    reg_upper_gamma(mf, l2 / (beta * beta + tau_inf_sq)),
                    1.0 - reg_upper_gamma(mf, l2 / tau_inf_sq),
                )
            }
        };
        Self {
            p_miss,
            p_false,
            err_var_detected: estimation_error_variance(beta, tau_inf_sq, true),
            err_var_missed: estimation_error_variance(beta, tau_inf_sq, false),
            tau_inf_sq,
            threshold,
        }
    }

    /// Perfect detection at the given state (used by tests and what-if runs).
    pub fn perfect(config: &SystemConfig, tau_inf_sq: f64) -> Self {
        Self {
            p_miss: 0.0,
            p_false: 0.0,
            ..Self::at_state(config, tau_inf_sq, DetectionConvention::Corrected)
        }
    }
}

/// `P_M`: probability an active user's statistic falls below `threshold`.
pub fn missed_detection_prob(n_antennas: usize, rx_power: f64, tau_inf_sq: f64, threshold: f64) -> f64 {
    reg_lower_gamma(n_antennas as f64, threshold / (rx_power + tau_inf_sq))
}

/// `P_F`: probability an inactive user's statistic exceeds `threshold`.
pub fn false_alarm_prob(n_antennas: usize, tau_inf_sq: f64, threshold: f64) -> f64 {
    reg_upper_gamma(n_antennas as f64, threshold / tau_inf_sq)
}

/// Per-component variance of `h - ĥ`: `βτ²/(β+τ²)` when detected, `β` when
/// missed.
pub fn estimation_error_variance(rx_power: f64, tau_inf_sq: f64, detected: bool) -> f64 {
    if detected {
        rx_power * tau_inf_sq / (rx_power + tau_inf_sq)
    } else {
        rx_power
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_limits() {
        assert!(missed_detection_prob(8, 1.0, 0.2, 1e-12) < 1e-60);
        assert!((missed_detection_prob(8, 1.0, 0.2, 1e6) - 1.0).abs() < 1e-15);
        assert!(false_alarm_prob(8, 0.2, 1e6) < 1e-300);
        assert!((false_alarm_prob(8, 0.2, 1e-12) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn monotone_in_threshold() {
        let ls: Vec<f64> = (1..200).map(|i| i as f64 * 0.05).collect();
        let pm: Vec<f64> = ls.iter().map(|&l| missed_detection_prob(4, 1.0, 0.3, l)).collect();
        let pf: Vec<f64> = ls.iter().map(|&l| false_alarm_prob(4, 0.3, l)).collect();
        assert!(pm.windows(2).all(|w| w[1] >= w[0]));
        assert!(pf.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn more_antennas_help() {
        // same per-component scales, likelihood-ratio threshold at each M
        let (beta, tau) = (1.0, 0.4);
        for m in [10usize] {
            let l_small = detection_threshold(tau, beta, m);
            let l_big = detection_threshold(tau, beta, 100);
            assert!(missed_detection_prob(100, beta, tau, l_big) <= missed_detection_prob(m, beta, tau, l_small));
            assert!(false_alarm_prob(100, tau, l_big) <= false_alarm_prob(m, tau, l_small));
        }
    }

    #[test]
    fn error_variances() {
        assert_eq!(estimation_error_variance(2.0, 0.5, false), 2.0);
        assert!(estimation_error_variance(2.0, 1e-12, true) < 1e-11);
        assert!((estimation_error_variance(2.0, 1e12, true) - 2.0).abs() < 1e-9);
        let v = estimation_error_variance(2.0, 0.5, true);
        assert!(v <= 0.5 && v <= 2.0);
    }

    #[test]
    fn stats_invariants() {
        let cfg = SystemConfig::table_one(100, 120);
        let tau = cfg.noise_var / 20.0;
        let s = DetectionStats::at_state(&cfg, tau, DetectionConvention::Corrected);
        assert_eq!(s.err_var_missed, cfg.rx_power);
        assert!((s.err_var_detected - cfg.rx_power * tau / (cfg.rx_power + tau)).abs() < 1e-30);
        assert!(s.p_miss < 1e-100 && s.p_false < 1e-100);
        let printed = DetectionStats::at_state(&cfg, tau, DetectionConvention::AsPrinted);
        // the typeset form is dimensionally inconsistent and lands at the wrong extreme
        assert!(printed.p_miss > 0.99);
    }
}
