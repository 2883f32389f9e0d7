//! BLER of a detected user: full outcome mixture with its truncation bracket,
//! the dominant term, and the quadrature cross-check.
//!
//! ```text
//! cargo run --release --example bler_mixture
//! ```

use grantfree::amp::state_evolution_fixed_point;
use grantfree::bler::{conditional_bler, conditional_snr_law, dominant_term_bler, mixture_bler, ConditionalMethod};
use grantfree::detection::{DetectionConvention, DetectionStats};
use grantfree::SystemConfig;

fn main() -> grantfree::Result<()> {
    println!("{:>4} {:>4} {:>13} {:>13} {:>13} {:>6}", "K", "L", "mixture", "dominant", "P_e", "terms");
    for l in [120, 160] {
        for k in (60..=110).step_by(10) {
            let cfg = SystemConfig::table_one(k, l);
            let tau = state_evolution_fixed_point(&cfg)?;
            let stats = DetectionStats::at_state(&cfg, tau, DetectionConvention::Corrected);
            let rep = mixture_bler(&cfg, &stats, cfg.code(), cfg.trunc_tol, ConditionalMethod::ClosedForm)?;
            let dom = dominant_term_bler(&cfg, &stats, cfg.code());
            println!(
                "{k:>4} {l:>4} {:>13.5e} {dom:>13.5e} {:>13.5e} {:>6}",
                rep.bler_mixture, rep.p_overall, rep.terms_used
            );
        }
    }

    // closed form against numerical integration for one cell
    let cfg = SystemConfig::table_one(100, 120);
    let tau = state_evolution_fixed_point(&cfg)?;
    let law = conditional_snr_law(0, 0, &cfg, tau);
    let closed = conditional_bler(&law, cfg.code(), ConditionalMethod::ClosedForm)?;
    let numeric = conditional_bler(&law, cfg.code(), ConditionalMethod::Numerical)?;
    println!("\nK = 100, L = 120, no errors: closed {closed:.6e}, quadrature {numeric:.6e}");
    Ok(())
}
