// Two-dimensional saddle-point asymptotics against direct quadrature.

use std::sync::Arc;

use thermocount::convex::PressureSurface;
use thermocount::potential::{Potential, PotentialPair};
use thermocount::saddle::{
    convergence_table, gaussian_case, legendre_det_identity, max_grid_step, pressure_case, quadrature_oracle,
    quartic_case, saddle_leading_term,
};
use thermocount::shift::Shift;

pub fn run_example() -> thermocount::Result<()> {
    let gauss = gaussian_case(100.0);
    let lead = saddle_leading_term(&gauss)?;
    let quad = quadrature_oracle(&gauss, max_grid_step(&gauss) / 4.0)?;
    println!("gaussian n=100: leading {:.10} quadrature {:.10}", lead.re, quad.re);

    println!("quartic phase, relative error should halve as n quadruples:");
    for row in convergence_table(&quartic_case(64.0, 1.0, 1.0), &[64.0, 256.0, 1024.0], 4.0)? {
        println!(
            "  n={:6} leading={:.6e} quadrature={:.6e} rel={:.4e} rel*sqrt(n)={:.4}",
            row.n, row.leading, row.quadrature, row.relative_error, row.scaled_error
        );
    }

    let shift = Arc::new(Shift::full(2)?);
    let f = Potential::new(shift.clone(), 2, vec![1.0, 2f64.sqrt(), 1.2, 0.8])?;
    let g = Potential::new(shift.clone(), 2, vec![3f64.sqrt(), 1.0, 0.7, 1.4])?;
    let surface = PressureSurface::new(PotentialPair::new(f, g)?);
    let z0 = [-0.3, -0.4];
    let x = surface.grad(z0)?;
    let ps = pressure_case(&surface, x, z0, 50.0)?;
    println!("pressure phase at x=({:.4},{:.4}): dual leading term {:.6e}", x[0], x[1], ps.dual_leading_term());
    println!("det identity residual {:.1e}", legendre_det_identity(&surface, x, z0, 1e-4)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> thermocount::Result<()> {
    run_example()
}
