//! Pilot-length sweep: fast and exact modes for two loads.
//!
//! ```text
//! cargo run --release --example pilot_optimization
//! ```

use grantfree::{optimize_pilot_length, SweepMode, SystemConfig};

fn main() -> grantfree::Result<()> {
    for k in [60, 100] {
        let cfg = SystemConfig::table_one(k, k + 1);
        for mode in [SweepMode::Fast, SweepMode::Exact] {
            let res = optimize_pilot_length(&cfg, mode)?;
            let best = res.best();
            println!(
                "K = {k:>3} {:>5}: L* = {}  P_e = {:.4e}  rate {:.3}",
                mode.as_str(),
                best.pilot_len,
                best.p_overall,
                best.rate
            );
        }
    }

    let res = optimize_pilot_length(&SystemConfig::table_one(100, 101), SweepMode::Fast)?;
    println!("\nK = 100 curve, every 10th length:");
    for p in res.curve.iter().step_by(10) {
        println!("  L = {:>3}  P_e = {:.4e}  P_M = {:.2e}", p.pilot_len, p.p_overall, p.p_miss);
    }
    Ok(())
}
