//! PAC-Bayes generalisation bound from a sum of per-sample negative log
//! likelihoods, for losses bounded in [a, b].
//!
//! Run with: cargo run --example pac_bayes

use trainspeed::estimators::pac_bayes_bound;

fn main() -> trainspeed::Result<()> {
    let (a, b, delta, n) = (0.0, 1.0, 0.1, 1000);
    println!("a={a} b={b} delta={delta} n={n}");
    for sum_nll in [0.0, 100.0, 300.0, 693.1, 1500.0, 5000.0] {
        let bound = pac_bayes_bound(sum_nll, n, a, b, delta)?;
        println!("  sum_nll {sum_nll:>7.1} -> bound {bound:.6}");
    }

    // the bound is monotone in the evidence and saturates at a + c
    let c = (b - a) / (1.0 - (a - b).exp());
    println!("saturation level a + c = {:.6}", a + c);
    Ok(())
}
