// Pressure surface, its Legendre transform and the degenerate lattice case.

use std::sync::Arc;

use thermocount::convex::{evaluate_grid, legendre, PressureSurface};
use thermocount::potential::{Potential, PotentialPair};
use thermocount::shift::Shift;
use thermocount::Error;

pub fn run_example() -> thermocount::Result<()> {
    let full = Arc::new(Shift::full(2)?);
    let f = Potential::new(full.clone(), 2, vec![1.0, 2f64.sqrt(), 1.2, 0.8])?;
    let g = Potential::new(full.clone(), 2, vec![3f64.sqrt(), 1.0, 0.7, 1.4])?;
    let surface = PressureSurface::new(PotentialPair::new(f, g)?);

    let z1 = [-0.6, -0.4, -0.2];
    let z2 = [-0.5, -0.3];
    for row in evaluate_grid(&surface, &z1, &z2)? {
        let x = row.grad;
        let lp = legendre(&surface, x)?;
        let back = (lp.z[0] - row.z[0]).hypot(lp.z[1] - row.z[1]);
        println!(
            "z=({:+.2},{:+.2}) P={:+.6} x=({:.5},{:.5}) P*={:+.6} round-trip={back:.1e} young={:.1e}",
            row.z[0],
            row.z[1],
            row.pressure,
            x[0],
            x[1],
            lp.pstar,
            lp.young_residual()
        );
    }

    // one-letter potentials on the 2-shift: S_n f and S_n g are both affine
    // in the number of 1s, so the Hessian has rank one
    let f = Potential::new(full.clone(), 1, vec![1.0, 2f64.sqrt()])?;
    let g = Potential::new(full.clone(), 1, vec![3f64.sqrt(), 1.0])?;
    let flat = PressureSurface::new(PotentialPair::new(f, g)?);
    let h = flat.hess([-0.3, -0.3])?;
    println!("depth-1 pair: det Hessian = {:.2e}", h.determinant());
    let x = flat.grad([-0.3, -0.3])?;
    match legendre(&flat, x) {
        Err(Error::DegenerateHessian { det, .. }) => println!("legendre refuses: det {det:.2e}"),
        other => println!("unexpected: {other:?}"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> thermocount::Result<()> {
    run_example()
}
