// Manhattan curve of a pair, its endpoints, convexity and the rigidity gap.

use std::sync::Arc;

use thermocount::convex::PressureSurface;
use thermocount::manhattan::{rigidity_gap, trace_curve};
use thermocount::potential::{Potential, PotentialPair};
use thermocount::shift::Shift;

pub fn run_example() -> thermocount::Result<()> {
    let full = Arc::new(Shift::full(2)?);
    let f = Potential::new(full.clone(), 1, vec![1.0, 2f64.sqrt()])?;
    let g = Potential::new(full.clone(), 1, vec![3f64.sqrt(), 1.0])?;
    let curve = trace_curve(Arc::new(PressureSurface::new(PotentialPair::new(f.clone(), g)?)), 21)?;

    println!("delta_f={:.8} delta_g={:.8}", curve.delta_f, curve.delta_g);
    let (lo, hi) = curve.slope_range();
    println!("slopes [{lo:.5}, {hi:.5}]  m*={:.6}", curve.m_star());
    let convex = curve.q_second_differences().iter().all(|&d| d > 0.0);
    println!("strictly convex: {convex}  max |P| on curve: {:.1e}", curve.max_pressure_residual());
    let gap = rigidity_gap(&curve)?;
    println!("H(m*)={:.8}  gap={:.6}", gap.h_star, gap.gap);

    let mut csv = Vec::new();
    curve.write_csv(&mut csv)?;
    for line in String::from_utf8_lossy(&csv).lines().take(4) {
        println!("  {line}");
    }

    // g = 1.7 f: the curve is the secant and the gap closes
    let rigid = trace_curve(Arc::new(PressureSurface::new(PotentialPair::new(f.clone(), f.scaled(1.7))?)), 21)?;
    let gap = rigidity_gap(&rigid)?;
    println!("g=1.7f: rigid={} secant deviation={:.1e} gap={:.1e}", rigid.rigid, rigid.secant_deviation(), gap.gap);
    Ok(())
}

#[allow(dead_code)]
fn main() -> thermocount::Result<()> {
    run_example()
}
