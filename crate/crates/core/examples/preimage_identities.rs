// Preimage counts of a sample word: the periodic sandwich, the transfer
// operator identity and the Gibbs bound.

use std::sync::Arc;

use thermocount::counting::{gibbs_bound_check, laplace_fourier_check, sandwich_check, Budget, WindowSpec};
use thermocount::potential::{Potential, PotentialPair};
use thermocount::shift::{Cylinder, Shift};

pub fn run_example() -> thermocount::Result<()> {
    let shift = Arc::new(Shift::full(2)?);
    let f = Potential::from_fn(shift.clone(), 3, |w| 1.0 + 0.31 * w[0] as f64 + 0.17 * (w[0] * w[2]) as f64)?;
    let g = Potential::from_fn(shift.clone(), 3, |w| 1.3 - 0.21 * w[1] as f64 + 0.11 * (w[0] * w[1]) as f64)?;
    let pair = PotentialPair::new(f, g)?;

    let spec = WindowSpec::new(1.0, 1.0, 11.5)?;
    let s = sandwich_check(&shift, &pair, &spec, 1, 10, &Budget::default())?;
    println!(
        "k={} n={} eps=({:.3},{:.3}): {} <= {} periodic <= {}  holds={}",
        s.k, s.n, s.eps[0], s.eps[1], s.lower, s.periodic, s.upper, s.holds
    );

    for prefix in [vec![0], vec![1, 0], vec![0, 1, 1]] {
        let p = Cylinder::new(&shift, prefix)?;
        let z_p = shift.pick_sample_word(&p)?;
        for z in [[-0.4, -0.3], [-0.1, -0.6]] {
            let r = laplace_fourier_check(&shift, &pair, &p, &z_p, 10, z)?;
            println!(
                "p={:?} z={z:?}: direct {:.10} operator {:.10} rel {:.1e}",
                p.prefix, r.direct, r.operator, r.relative_residual
            );
        }
    }

    let p = Cylinder::new(&shift, vec![0])?;
    let z_p = shift.pick_sample_word(&p)?;
    let gb = gibbs_bound_check(&shift, &pair, &p, &z_p, [-0.4, -0.3], 1..=10)?;
    println!("Gibbs bound: Q={:.4} max ratio {:.4} holds={}", gb.q_hat, gb.max_ratio, gb.holds);
    Ok(())
}

#[allow(dead_code)]
fn main() -> thermocount::Result<()> {
    run_example()
}
