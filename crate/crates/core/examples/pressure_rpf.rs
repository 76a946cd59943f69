// Pressure, RPF data and the Gibbs constant of a few small potentials.

use std::sync::Arc;

use thermocount::potential::Potential;
use thermocount::shift::Shift;
use thermocount::thermo::{gibbs_constant, pressure, rpf_data, transfer_matrix};

pub fn run_example() -> thermocount::Result<()> {
    let full = Arc::new(Shift::full(2)?);
    for (a, b) in [(0.0, 0.0), (0.3, -1.2), (-2.0, 1.5)] {
        let u = Potential::new(full.clone(), 1, vec![a, b])?;
        let p = pressure(&full, &u)?;
        let exact = (f64::exp(a) + f64::exp(b)).ln();
        println!("u=({a}, {b})  P={p:.12}  ln(e^a+e^b)={exact:.12}");
    }

    let golden = Arc::new(Shift::golden_mean());
    let zero = Potential::constant(golden.clone(), 0.0)?;
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    println!("golden mean entropy {:.12} vs ln phi {:.12}", pressure(&golden, &zero)?, phi.ln());

    // depth-2 potential: the transfer matrix lives on 2-cylinders
    let u = Potential::from_fn(full.clone(), 2, |w| -1.0 - 0.4 * w[0] as f64 + 0.25 * (w[0] * w[1]) as f64)?;
    let tm = transfer_matrix(&full, &u)?;
    let rpf = rpf_data(&full, &u)?;
    let (eig, left, norm) = rpf.residuals(&tm);
    println!("dim={} nnz={} P={:.10} gap={:.4}", tm.dim(), tm.nnz(), rpf.pressure, rpf.gap);
    println!("residuals: L h {eig:.1e}, L* nu {left:.1e}, normalization {norm:.1e}");
    println!("entropy of mu: {:.6}", rpf.entropy());
    for w in [[0u16].as_slice(), &[1], &[0, 1], &[1, 1, 0]] {
        println!("  mu[{w:?}] = {:.6}  nu[{w:?}] = {:.6}", rpf.mu_cylinder(w), rpf.nu_cylinder(w));
    }
    println!("Gibbs constant (n <= 8): {:.4}", gibbs_constant(&full, &u, &rpf, 8)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> thermocount::Result<()> {
    run_example()
}
