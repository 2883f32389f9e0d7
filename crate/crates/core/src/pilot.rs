//! Pilot-length optimization: `min_L P_M(L) + (1 - P_M(L)) ε̄(L)` over
//! `L ∈ {K+1, …, T-c}`.

use rayon::prelude::*;

use crate::amp::{high_snr_fixed_point, state_evolution_fixed_point};
use crate::bler::{dominant_term_bler, mixture_bler, overall_bler, BlerReport, ConditionalMethod};
use crate::detection::{DetectionConvention, DetectionStats};
use crate::system::SystemConfig;
use crate::{Error, Result};

/// Which state and which BLER expression to use per pilot length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepMode {
    /// State-evolution fixed point and the full outcome mixture.
    Exact,
    /// `τ∞² = σ²/(L-K)` and the dominant term only.
    #[default]
    Fast,
}

impl SweepMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepMode::Exact => "exact",
            SweepMode::Fast => "fast",
        }
    }
}

impl std::str::FromStr for SweepMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(SweepMode::Exact),
            "fast" => Ok(SweepMode::Fast),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected exact|fast)"))),
        }
    }
}

/// One pilot length on the curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub pilot_len: usize,
    pub p_overall: f64,
    pub p_miss: f64,
    pub p_false: f64,
    pub rate: f64,
    pub bler_detected: f64,
    pub tau_inf_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotSweepResult {
    pub best_len: usize,
    pub curve: Vec<SweepPoint>,
    pub mode: SweepMode,
    pub warnings: Vec<String>,
}

impl PilotSweepResult {
    pub fn best(&self) -> &SweepPoint {
        self.curve.iter().find(|p| p.pilot_len == self.best_len).expect("best point on curve")
    }
}

/// Analytical report at the config's own pilot length.
///
/// Exact mode needs the state-evolution fixed point and evaluates the whole
/// mixture; fast mode fills the mixture fields with the dominant term.
pub fn evaluate_point(config: &SystemConfig, mode: SweepMode, method: ConditionalMethod) -> Result<BlerReport> {
    config.validate()?;
    let code = config.code();
    match mode {
        SweepMode::Exact => {
            let tau = state_evolution_fixed_point(config)?;
            let stats = DetectionStats::at_state(config, tau, DetectionConvention::Corrected);
            mixture_bler(config, &stats, code, config.trunc_tol, method)
        }
        SweepMode::Fast => {
            let tau = high_snr_fixed_point(config)?;
            let stats = DetectionStats::at_state(config, tau, DetectionConvention::Corrected);
            let dominant = dominant_term_bler(config, &stats, code);
            let p = overall_bler(stats.p_miss, dominant);
            Ok(BlerReport {
                bler_mixture: dominant,
                bler_mixture_lo: dominant,
                bler_mixture_hi: dominant,
                bler_dominant: dominant,
                p_overall: p,
                p_overall_lo: p,
                p_overall_hi: p,
                p_miss: stats.p_miss,
                p_false: stats.p_false,
                tau_inf_sq: tau,
                terms_used: 1,
                neglected_mass: 0.0,
                config: config.clone(),
            })
        }
    }
}

/// Evaluates every feasible pilot length and returns the curve and its argmin
/// (ties to the smallest `L`).
pub fn optimize_pilot_length(config: &SystemConfig, mode: SweepMode) -> Result<PilotSweepResult> {
    let k = config.active_count();
    let max_len = config.block_len.saturating_sub(config.payload_bits);
    if max_len <= k + 1 {
        return Err(Error::EmptyFeasibleSet(format!(
            "T - c = {max_len} leaves no pilot length above K + 1 = {}",
            k + 1
        )));
    }
    let mut warnings = Vec::new();
    let snr_db = 10.0 * config.snr().log10();
    if mode == SweepMode::Fast && snr_db < 40.0 {
        warnings.push(format!(
            "beta/sigma^2 = {snr_db:.1} dB is below 40 dB; the high-SNR state may be unreliable"
        ));
    }
    let lens: Vec<usize> = (k + 1..=max_len).collect();
    let curve = lens
        .par_iter()
        .map(|&l| {
            let c = config.with_pilot_len(l);
            let rep = evaluate_point(&c, mode, ConditionalMethod::ClosedForm)?;
            Ok(SweepPoint {
                pilot_len: l,
                p_overall: rep.p_overall,
                p_miss: rep.p_miss,
                p_false: rep.p_false,
                rate: c.coding_rate(),
                bler_detected: rep.bler_mixture,
                tau_inf_sq: rep.tau_inf_sq,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = curve
        .iter()
        .fold(None::<&SweepPoint>, |acc, p| match acc {
            Some(b) if b.p_overall <= p.p_overall => Some(b),
            _ => Some(p),
        })
        .expect("nonempty curve");
    Ok(PilotSweepResult { best_len: best.pilot_len, curve, mode, warnings })
}
