// Bowen roots of finite truncations of a countable-alphabet potential and
// the critical exponent of its entropy-gap series.

use thermocount::potential::{estimate_critical_exponent, TruncationFamily, TruncationRule};
use thermocount::thermo::bowen_root;

pub fn run_example() -> thermocount::Result<()> {
    let rule = TruncationRule::Log { scale: 2.0, offset: 1.0 };
    let grid: Vec<usize> = (12..=18).map(|e| 1usize << e).collect();
    let fam = TruncationFamily::new(rule, 1 << 18)?;
    let mut prev = None;
    for n in [8, 16, 32, 64] {
        let f = fam.potential(n)?;
        let d = bowen_root(f.shift(), &f)?;
        match prev {
            Some(p) => println!("N={n:3} delta={d:.8} increment={:.2e}", d - p),
            None => println!("N={n:3} delta={d:.8}"),
        }
        prev = Some(d);
    }
    let c = estimate_critical_exponent(&fam, &grid)?;
    println!("critical exponent estimate {:.4} (series sum a^(-2s) diverges below 1/2)", c.d_hat);
    Ok(())
}

#[allow(dead_code)]
fn main() -> thermocount::Result<()> {
    run_example()
}
