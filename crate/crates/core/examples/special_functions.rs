//! Q-function, its inverse, and the regularized incomplete gamma functions.
//!
//! ```text
//! cargo run --example special_functions
//! ```

use grantfree::special::{gamma_upper_quantile, q_function, q_inverse, reg_gamma_pair, reg_lower_gamma};

fn main() -> grantfree::Result<()> {
    println!("{:>10} {:>24} {:>12}", "x", "Q(x)", "Q^-1(Q(x))");
    for x in [-2.0, 0.0, 1.0, 3.0, 8.0, 20.0] {
        let p = q_function(x);
        println!("{x:>10.2} {p:>24.16e} {:>12.8}", q_inverse(p)?);
    }

    // P and Q together, with P + Q = 1
    println!();
    for (a, x) in [(1.0, 0.5), (21.0, 10.0), (21.0, 40.0), (200.0, 180.0)] {
        let (p, q) = reg_gamma_pair(a, x);
        println!("a = {a:>5}, x = {x:>5}: P = {p:.12e}  Q = {q:.12e}  P+Q-1 = {:+.1e}", p + q - 1.0);
    }

    // The 1e-12 upper quantile is where the conditional-BLER integrals stop.
    let a = 21.0;
    let x = gamma_upper_quantile(a, 1e-12);
    println!("\nGamma({a}) upper 1e-12 quantile: {x:.6}, P there = {:.3e}", 1.0 - reg_lower_gamma(a, x));
    Ok(())
}
