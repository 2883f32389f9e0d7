//! One AMP run on a reduced network: activity detection, channel estimation
//! error, and the predicted miss / false-alarm rates at the fixed point.
//!
//! ```text
//! cargo run --release --example amp_detection
//! ```

use grantfree::amp::{mean_sq_error, run_amp, state_evolution_fixed_point};
use grantfree::detection::{DetectionConvention, DetectionStats};
use grantfree::system::{generate_scenario, received_pilot_signal};
use grantfree::SystemConfig;

fn main() -> grantfree::Result<()> {
    let mut cfg = SystemConfig::table_one(40, 60);
    cfg.n_users = 500;
    cfg.n_antennas = 50;

    let tau_inf = state_evolution_fixed_point(&cfg)?;
    let stats = DetectionStats::at_state(&cfg, tau_inf, DetectionConvention::Corrected);
    println!("fixed point tau^2 = {tau_inf:.4e}, threshold = {:.4e}", stats.threshold);
    println!("predicted P_M = {:.3e}, P_F = {:.3e}", stats.p_miss, stats.p_false);

    for seed in 0..5 {
        let sc = generate_scenario(&cfg, seed);
        let y = received_pilot_signal(&sc);
        let res = run_amp(y.view(), sc.pilots.view(), &cfg)?;
        let active = sc.active_indices();
        let missed = active.iter().filter(|n| res.detected_active.binary_search(n).is_err()).count();
        let false_alarms = res.detected_active.len() + missed - active.len();
        let x = sc.effective_channels();
        let obs_err = mean_sq_error(res.effective_obs.view(), x.view());
        println!(
            "seed {seed}: {} iterations, tau^2 {:.4e}, obs error / tau_inf {:.3}, missed {missed}, false {false_alarms}{}",
            res.iterations_run,
            res.tau_sq_final,
            obs_err / tau_inf,
            res.damped_from.map(|t| format!(", damped from {t}")).unwrap_or_default(),
        );
    }
    Ok(())
}
