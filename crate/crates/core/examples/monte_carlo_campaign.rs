//! Simulated BLER on a reduced network against the analytical bracket.
//!
//! ```text
//! cargo run --release --example monte_carlo_campaign -- 200
//! ```

use grantfree::amp::state_evolution_fixed_point;
use grantfree::detection::{DetectionConvention, DetectionStats};
use grantfree::{mixture_bler, run_campaign, ConditionalMethod, SystemConfig};

fn main() -> grantfree::Result<()> {
    let trials: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let mut base = SystemConfig::table_one(40, 60);
    base.n_users = 500;
    base.n_antennas = 50;
    base.amp_tol = 1e-6;

    for (k, l) in [(40, 60), (50, 80)] {
        let cfg = base.with_active_count(k).with_pilot_len(l);
        let tau = state_evolution_fixed_point(&cfg)?;
        let stats = DetectionStats::at_state(&cfg, tau, DetectionConvention::Corrected);
        let rep = mixture_bler(&cfg, &stats, cfg.code(), cfg.trunc_tol, ConditionalMethod::ClosedForm)?;
        let emp = run_campaign(&cfg, trials, 42)?;
        println!(
            "K = {k}, L = {l}: analytical [{:.4e}, {:.4e}], simulated {:.4e} +- {:.1e} ({} users), miss {:.2e}, false {:.2e}",
            rep.p_overall_lo,
            rep.p_overall_hi,
            emp.bler,
            emp.ci_half_width,
            emp.user_observations,
            emp.mean_miss_rate,
            emp.mean_false_rate
        );
    }
    Ok(())
}
