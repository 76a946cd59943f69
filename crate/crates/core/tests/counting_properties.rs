use std::sync::Arc;

use proptest::prelude::*;
use thermocount::convex::PressureSurface;
use thermocount::counting::{
    count_fix_window, count_scan, count_w, count_w_scan, exhaustive, Budget, CountReport, WindowSpec,
};
use thermocount::manhattan::{correlation_number, trace_curve, ManhattanCurve};
use thermocount::potential::{Potential, PotentialPair};
use thermocount::shift::{PeriodicWord, Shift};
use thermocount::thermo::rpf_data;

fn full2() -> Arc<Shift> {
    Arc::new(Shift::full(2).unwrap())
}

fn dense_pair(s: &Arc<Shift>) -> PotentialPair {
    let spread = |c: f64| (0..8).map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * c).fract()).collect::<Vec<_>>();
    PotentialPair::new(
        Potential::new(s.clone(), 3, spread(2f64.sqrt())).unwrap(),
        Potential::new(s.clone(), 3, spread(3f64.sqrt())).unwrap(),
    )
    .unwrap()
}

fn depth2_pair(s: &Arc<Shift>) -> PotentialPair {
    PotentialPair::new(
        Potential::new(s.clone(), 2, vec![1.0, 2f64.sqrt(), 1.2, 0.8]).unwrap(),
        Potential::new(s.clone(), 2, vec![3f64.sqrt(), 1.0, 0.7, 1.4]).unwrap(),
    )
    .unwrap()
}

fn midpoint(curve: &ManhattanCurve) -> f64 {
    let (lo, hi) = curve.slope_range();
    0.5 * (lo + hi)
}

fn ts(from: f64, to: f64, step: f64) -> Vec<f64> {
    let k = ((to - from) / step + 1e-9).floor() as usize;
    (0..=k).map(|i| from + step * i as f64).collect()
}

fn unweighted(r: &CountReport, i: usize) -> f64 {
    r.per_n[i].iter().map(|&(_, c)| c as f64).sum()
}

#[test]
fn rough_bound_stays_bounded() {
    let s = full2();
    let pair = dense_pair(&s);
    let curve = trace_curve(Arc::new(PressureSurface::new(pair.clone())), 41).unwrap();
    let m = midpoint(&curve);
    let h = correlation_number(&curve, m).unwrap().h;
    let grid = ts(10.0, 24.0, 0.5);
    let report = count_scan(&s, &pair, m, 0.5, &grid, &Budget::default()).unwrap();
    let scaled: Vec<f64> = grid.iter().enumerate().map(|(i, &t)| t * (-h * t).exp() * report.weighted(i)).collect();
    let half = scaled.len() / 2;
    let early = scaled[..half].iter().cloned().fold(0.0, f64::max);
    let late = scaled[half..].iter().cloned().fold(0.0, f64::max);
    assert!(early > 0.0);
    assert!(late <= 2.0 * early, "t e^(-Ht) M(t) grows: {early} -> {late}");
}

#[test]
fn a_priori_ratio_is_uniform_over_cylinders() {
    let s = full2();
    let pair = dense_pair(&s);
    let curve = trace_curve(Arc::new(PressureSurface::new(pair.clone())), 41).unwrap();
    let m = midpoint(&curve);
    let c = correlation_number(&curve, m).unwrap();
    let rpf = rpf_data(&s, &pair.combination([-c.a, -c.b])).unwrap();
    let grid = ts(12.0, 20.0, 0.5);
    let mut sups = Vec::new();
    for p in s.cylinders(2) {
        let z = s.pick_sample_word(&p).unwrap();
        let r = count_w_scan(&s, &pair, m, 0.5, &grid, &p, &z, &Budget::default()).unwrap();
        let mu = rpf.mu_cylinder(&p.prefix);
        let sup = grid
            .iter()
            .enumerate()
            .map(|(i, &t)| (-c.h * t).exp() * unweighted(&r, i) / mu)
            .fold(0.0, f64::max);
        sups.push(sup);
    }
    let (lo, hi) = sups.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(lo > 0.0 && hi / lo < 10.0, "{sups:?}");
}

#[test]
fn small_n_share_dies_out() {
    let s = full2();
    let pair = dense_pair(&s);
    let curve = trace_curve(Arc::new(PressureSurface::new(pair.clone())), 41).unwrap();
    let grid = ts(8.0, 22.0, 0.5);
    let report = count_scan(&s, &pair, midpoint(&curve), 0.5, &grid, &Budget::default()).unwrap();
    let k = 12;
    let shares: Vec<f64> = (0..grid.len())
        .filter(|&i| report.weighted(i) > 0.0)
        .map(|i| {
            let small: f64 = report.per_n[i].iter().filter(|e| e.0 < k).map(|&(n, c)| c as f64 / n as f64).sum();
            small / report.weighted(i)
        })
        .collect();
    assert!(shares[0] > 0.0);
    assert_eq!(*shares.last().unwrap(), 0.0);
    // windowed averages, since single thresholds fluctuate
    let avg: Vec<f64> = shares.chunks(6).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    assert!(avg.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{avg:?}");
}

fn mobius(n: usize) -> i64 {
    let (mut n, mut sign, mut p) = (n, 1, 2);
    while p * p <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return 0;
            }
            sign = -sign;
        }
        p += 1;
    }
    if n > 1 {
        -sign
    } else {
        sign
    }
}

fn is_primitive(w: &PeriodicWord) -> bool {
    let n = w.period();
    (1..n).filter(|d| n % d == 0).all(|d| *w != w.rotate(d))
}

#[test]
fn weighted_words_and_primitive_orbits_agree() {
    let s = full2();
    let one = Potential::constant(s.clone(), 1.0).unwrap();
    let pair = PotentialPair::new(one.clone(), one).unwrap();
    let budget = Budget::default();
    let mut prim = vec![0u64; 17];
    for n in 1..=16 {
        prim[n] = s.enumerate_fix(n).iter().filter(|w| is_primitive(w)).count() as u64 / n as u64;
        let moebius: i64 = (1..=n).filter(|d| n % d == 0).map(|d| mobius(d) * (1i64 << (n / d))).sum();
        assert_eq!(prim[n] as i64 * n as i64, moebius, "n={n}");
        // the window around t = n - 0.3 catches exactly the words of length n
        let spec = WindowSpec::new(1.0, 0.5, n as f64 - 0.3).unwrap();
        let words = count_fix_window(&s, &pair, &spec, n, &budget).unwrap();
        let divisor_sum: u64 = (1..=n).filter(|d| n % d == 0).map(|d| d as u64 * prim[d]).sum();
        assert_eq!(words, divisor_sum, "n={n}");
    }
    let n = 16;
    let ratio = ((1u64 << n) as f64 / n as f64) / prim[n] as f64;
    assert!((ratio - 1.0).abs() < 5e-3, "{ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn preimage_counts_match_enumeration(t in 6.0f64..12.0, xi in 0.3f64..1.5, n in 3usize..=11, which in 0usize..4) {
        let s = full2();
        let pair = depth2_pair(&s);
        let p = s.cylinders(2).swap_remove(which);
        let z = s.pick_sample_word(&p).unwrap();
        let spec = WindowSpec::new(1.05, xi, t).unwrap();
        let fast = count_w(&s, &pair, &spec, &p, &z, n, &Budget::default()).unwrap();
        let slow = exhaustive::preimage_window(&s, &pair, &spec, &p, &z, n).unwrap();
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn swapping_the_pair_swaps_the_window(t in 6.0f64..13.0, m in 0.8f64..1.3, n in 2usize..=12) {
        let s = full2();
        let pair = depth2_pair(&s);
        let budget = Budget::default();
        let a = count_fix_window(&s, &pair, &WindowSpec::new(m, 0.5, t).unwrap(), n, &budget).unwrap();
        let b = count_fix_window(&s, &pair.swapped(), &WindowSpec::new(1.0 / m, 0.5, m * t).unwrap(), n, &budget).unwrap();
        prop_assert_eq!(a, b);
    }
}
