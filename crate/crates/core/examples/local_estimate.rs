// Normalized preimage counts against the local-estimate prediction on a
// depth-3 pair whose ergodic sums are spread densely enough to fill a
// small window.

use std::sync::Arc;

use thermocount::convex::PressureSurface;
use thermocount::counting::{count_w_scan, local_estimate_prediction, Budget};
use thermocount::manhattan::trace_curve;
use thermocount::potential::{Potential, PotentialPair};
use thermocount::shift::{Cylinder, Shift};

pub fn run_example() -> thermocount::Result<()> {
    run(&(0..=16).map(|i| 8.0 + 0.5 * i as f64).collect::<Vec<_>>())
}

fn run(ts: &[f64]) -> thermocount::Result<()> {
    let shift = Arc::new(Shift::full(2)?);
    let spread = |c: f64| (0..8).map(move |i| 1.0 + 0.5 * ((i as f64 + 1.0) * c).fract()).collect::<Vec<_>>();
    let f = Potential::new(shift.clone(), 3, spread(2f64.sqrt()))?;
    let g = Potential::new(shift.clone(), 3, spread(3f64.sqrt()))?;
    let pair = PotentialPair::new(f, g)?;
    let curve = trace_curve(Arc::new(PressureSurface::new(pair.clone())), 41)?;
    let (lo, hi) = curve.slope_range();
    let m = 0.5 * (lo + hi);

    let p = Cylinder::new(&shift, vec![0])?;
    let z_p = shift.pick_sample_word(&p)?;
    let xi = 0.5;
    let pred = local_estimate_prediction(&curve, m, &p, &z_p, xi, ts[ts.len() - 1])?;
    println!(
        "m={m:.5} H={:.5} t_m={:.4} P''={:.3} C_p={:.4} det factor={:.3}",
        pred.h, pred.t_m, pred.p_bar, pred.c_p, pred.det_factor
    );

    let report = count_w_scan(&shift, &pair, m, xi, ts, &p, &z_p, &Budget::default())?;
    println!("{} search nodes", report.nodes());
    for (i, &t) in ts.iter().enumerate() {
        let norm = t.powf(1.5) * (-pred.h * t).exp() * report.weighted(i);
        println!(
            "t={t:5.2} M_p={:10.3} ratio={:8.3} with curvature={:.3}",
            report.weighted(i),
            norm / pred.constant(),
            norm / pred.constant_with_curvature()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> thermocount::Result<()> {
    run(&(0..=44).map(|i| 8.0 + 0.5 * i as f64).collect::<Vec<_>>())
}
