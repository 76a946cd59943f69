// Bowen roots `P(-δ f) = 0`.

use std::sync::Arc;

use thermocount::potential::Potential;
use thermocount::shift::Shift;
use thermocount::thermo::{bowen_root, pressure};

pub fn run_example() -> thermocount::Result<()> {
    let full = Arc::new(Shift::full(2)?);
    let f = Potential::new(full.clone(), 1, vec![2f64.ln(), 4f64.ln()])?;
    let d = bowen_root(&full, &f)?;
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    println!("f=(ln2, ln4): delta={d:.12}  log2(phi)={:.12}", phi.log2());
    println!("P(-delta f) = {:.2e}", pressure(&full, &f.scaled(-d))?);

    let f = Potential::new(full.clone(), 1, vec![1.0, 2f64.sqrt()])?;
    let g = Potential::new(full.clone(), 1, vec![3f64.sqrt(), 1.0])?;
    println!("delta_f={:.10} delta_g={:.10}", bowen_root(&full, &f)?, bowen_root(&full, &g)?);

    // roots scale inversely with the potential
    let d1 = bowen_root(&full, &f)?;
    let d3 = bowen_root(&full, &f.scaled(3.0))?;
    println!("delta(3f) * 3 = {:.10}", 3.0 * d3);
    assert!((3.0 * d3 - d1).abs() < 1e-9);
    Ok(())
}

#[allow(dead_code)]
fn main() -> thermocount::Result<()> {
    run_example()
}
