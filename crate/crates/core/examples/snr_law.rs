//! Post-ZF SNR of a detected user: matrix sampling against the Gamma law.
//!
//! ```text
//! cargo run --release --example snr_law
//! ```

use grantfree::bler::conditional_snr_law;
use grantfree::stats::{ks_p_value, ks_statistic};
use grantfree::validate::sample_conditional_snr;
use grantfree::SystemConfig;

fn main() {
    let mut cfg = SystemConfig::table_one(3, 6);
    cfg.n_users = 20;
    cfg.n_antennas = 8;
    let tau = cfg.noise_var;
    let n = 50_000;
    for (e, f) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
        let law = conditional_snr_law(e, f, &cfg, tau);
        let draws = sample_conditional_snr(&cfg, tau, e, f, n, 7);
        let mean = draws.iter().sum::<f64>() / n as f64;
        let d = ks_statistic(&draws, |x| law.cdf(x));
        println!(
            "e = {e}, f = {f}: shape {:>2}, mean law {:.4e} sample {:.4e}, KS D = {d:.4}, p = {:.3}",
            law.shape,
            law.mean(),
            mean,
            ks_p_value(d, n)
        );
    }
}
