// Counting periodic orbits whose `(S_n f, S_n g)` falls in a sliding window,
// with the pruned search checked against brute force.

use std::sync::Arc;

use thermocount::convex::PressureSurface;
use thermocount::counting::{
    count_fix_window, count_m, count_scan, deviation_profile, exhaustive, fit_growth_rate, Budget, WindowSpec,
};
use thermocount::manhattan::{correlation_number, trace_curve};
use thermocount::potential::{Potential, PotentialPair};
use thermocount::shift::Shift;

pub fn run_example() -> thermocount::Result<()> {
    let shift = Arc::new(Shift::full(2)?);
    let f = Potential::new(shift.clone(), 1, vec![1.0, 2f64.sqrt()])?;
    let g = Potential::new(shift.clone(), 1, vec![3f64.sqrt(), 1.0])?;
    let pair = PotentialPair::new(f, g)?;
    let curve = trace_curve(Arc::new(PressureSurface::new(pair.clone())), 41)?;
    let m = curve.m_star();
    let budget = Budget::default();

    let spec = WindowSpec::new(m, 0.5, 11.9)?;
    for n in 8..=12 {
        let fast = count_fix_window(&shift, &pair, &spec, n, &budget)?;
        let slow = exhaustive::fix_window(&shift, &pair, &spec, n);
        println!("n={n:2} pruned={fast:4} brute={slow:4}");
        assert_eq!(fast, slow);
    }
    let (total, per_n) = count_m(&shift, &pair, &spec, &budget)?;
    println!("M(t=11.9) = {total:.4} from {per_n:?}");

    // the sums of a depth-1 pair sit on a lattice, so scan finely
    let ts: Vec<f64> = (0..=160).map(|i| 10.0 + 0.05 * i as f64).collect();
    let report = count_scan(&shift, &pair, m, 0.5, &ts, &budget)?;
    println!("scan over t in [10, 18]: {} nodes, complete={}", report.nodes(), !report.truncated());
    let mut out = Vec::new();
    report.write_csv(&mut out, None)?;
    for line in String::from_utf8_lossy(&out).lines().take(5) {
        println!("  {line}");
    }
    let fit = fit_growth_rate(&report, None, 1.5)?;
    let c = correlation_number(&curve, m)?;
    println!("fitted rate {:.4} (+- {:.4}) over {} points, H(m*)={:.4}", fit.alpha_hat, fit.stderr, fit.points, c.h);

    for row in deviation_profile(&report, c.t_m, 0.05).iter().step_by(20) {
        println!("  t={:.2} far fraction {:.3}", row.t, row.far_fraction());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> thermocount::Result<()> {
    run_example()
}
