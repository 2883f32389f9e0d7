//! State-evolution recursion and its fixed point for the reference network,
//! compared with the high-SNR shortcut σ²/(L-K).
//!
//! ```text
//! cargo run --release --example state_evolution
//! ```

use grantfree::amp::{high_snr_fixed_point, StateEvolution};
use grantfree::SystemConfig;

fn main() -> grantfree::Result<()> {
    for (k, l) in [(60, 120), (100, 120), (100, 160)] {
        let cfg = SystemConfig::table_one(k, l);
        let se = StateEvolution::new(&cfg);
        let traj = se.trajectory(10);
        let fixed = se.fixed_point()?;
        let fast = high_snr_fixed_point(&cfg)?;
        println!("K = {k}, L = {l}  (noise {:.4e})", cfg.noise_var);
        for (t, tau) in traj.iter().enumerate() {
            println!("  t = {t:>2}  tau^2 = {tau:.6e}");
        }
        println!("  fixed point {fixed:.6e}, high-SNR {fast:.6e}, ratio {:.4}\n", fixed / fast);
    }
    Ok(())
}
