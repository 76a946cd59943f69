// Correlation numbers, the swap identity and the Bishop-Steger bound.

use std::sync::Arc;

use thermocount::convex::PressureSurface;
use thermocount::manhattan::{bishop_steger, bs_inequality_scan, correlation_number, swap_check, trace_curve};
use thermocount::potential::{Potential, PotentialPair};
use thermocount::shift::Shift;

pub fn run_example() -> thermocount::Result<()> {
    let full = Arc::new(Shift::full(2)?);
    let f = Potential::new(full.clone(), 1, vec![1.0, 2f64.sqrt()])?;
    let g = Potential::new(full.clone(), 1, vec![3f64.sqrt(), 1.0])?;
    let pair = PotentialPair::new(f, g)?;
    let fg = trace_curve(Arc::new(PressureSurface::new(pair.clone())), 41)?;
    let gf = trace_curve(Arc::new(PressureSurface::new(pair.swapped())), 41)?;

    let (lo, hi) = fg.slope_range();
    for i in 1..=4 {
        let m = lo + (hi - lo) * i as f64 / 5.0;
        let c = correlation_number(&fg, m)?;
        let swap = swap_check(&fg, &gf, m)?;
        println!(
            "m={m:.5} H={:.8} (a,b)=({:.5},{:.5}) t_m={:.5} swap residual {swap:.1e}",
            c.h, c.a, c.b, c.t_m
        );
    }

    let surface = fg.surface().clone();
    for (alpha, beta) in [(1.0, 1.0), (2.0, 1.0)] {
        let h_bs = bishop_steger(&surface, alpha, beta)?;
        let scan = bs_inequality_scan(&fg, alpha, beta)?;
        println!(
            "alpha={alpha} beta={beta}: h_BS={h_bs:.8} max H/(alpha+m beta)={:.8} a/b at max={:.5}",
            scan.refined_max, scan.refined_ab
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> thermocount::Result<()> {
    run_example()
}
