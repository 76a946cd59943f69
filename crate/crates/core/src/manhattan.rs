//! Manhattan curve `{(a, b) : P(−af − bg) = 0}`, correlation numbers and the
//! quantities derived from them.
//!
//! Slopes are oriented as `m = ∫g dμ / ∫f dμ = −1/q′(s)`, so along a strictly
//! convex curve `m(s)` increases with `s`. With this orientation the window
//! `(t, t+ξ) × (mt, mt+ξ)` is centred on the ray through `x_m = (1, m)/t_m`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::{legendre_from, PressureSurface, SurfacePoint};
use crate::error::{Error, Result};
use crate::numeric::{decreasing_root, expand_bracket, golden_section_max};
use crate::thermo::bowen_root;

const ROOT_TOL: f64 = 1e-13;
const SLOPE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub s: f64,
    pub q: f64,
    pub m: f64,
    /// `H = s + m q`
    pub h: f64,
    pub t_m: f64,
    /// `(∫f dμ, ∫g dμ)` at `z = (−s, −q)`
    pub x_m: [f64; 2],
    pub pressure: f64,
    pub entropy: f64,
    /// Outside `[0, δ_f]`.
    pub extended: bool,
}

impl CurveSample {
    pub fn a(&self) -> f64 {
        self.s
    }

    pub fn b(&self) -> f64 {
        self.q
    }

    pub fn z(&self) -> [f64; 2] {
        [-self.s, -self.q]
    }
}

#[derive(Debug, Clone)]
pub struct ManhattanCurve {
    pub samples: Vec<CurveSample>,
    pub delta_f: f64,
    pub delta_g: f64,
    /// `S_n g` proportional to `S_n f` on every tested orbit.
    pub rigid: bool,
    surface: Arc<PressureSurface>,
}

/// Solves `P(−sf − qg) = 0` for `q`.
pub fn solve_q(surface: &PressureSurface, s: f64, guess: f64) -> Result<(f64, SurfacePoint)> {
    let pres = |q: f64| surface.pressure([-s, -q]);
    let (lo, hi) = expand_bracket(pres, guess - 1e-3, guess + 1e-3)?;
    let q = decreasing_root(
        |q| {
            let pt = surface.eval([-s, -q])?;
            Ok((pt.pressure, -pt.grad[1]))
        },
        lo,
        hi,
        ROOT_TOL,
    )?;
    Ok((q, surface.eval([-s, -q])?))
}

fn sample_at(surface: &PressureSurface, s: f64, guess: f64, extended: bool) -> Result<CurveSample> {
    let (q, pt) = solve_q(surface, s, guess)?;
    let m = pt.grad[1] / pt.grad[0];
    Ok(CurveSample {
        s,
        q,
        m,
        h: s + m * q,
        t_m: 1.0 / pt.grad[0],
        x_m: pt.grad,
        pressure: pt.pressure,
        entropy: pt.entropy,
        extended,
    })
}

/// Orbit length used for the proportionality test: largest `n <= 10` with a
/// few thousand periodic words in total.
fn rigidity_depth(surface: &PressureSurface) -> usize {
    let a = surface.pair().shift().alphabet_size() as f64;
    let mut n = 1;
    while n < 10 && a.powi(n as i32 + 1) < 4096.0 {
        n += 1;
    }
    n.max(2)
}

pub fn trace_curve(surface: Arc<PressureSurface>, n_samples: usize) -> Result<ManhattanCurve> {
    trace_curve_extended(surface, n_samples, 0.0)
}

/// Traces the curve on a uniform `s`-grid over `[0, δ_f]`, plus up to
/// `extension · δ_f` beyond each end where the root solve still converges.
pub fn trace_curve_extended(
    surface: Arc<PressureSurface>,
    n_samples: usize,
    extension: f64,
) -> Result<ManhattanCurve> {
    if n_samples < 3 {
        return Err(Error::InvalidArgument("need at least 3 curve samples".into()));
    }
    let pair = surface.pair();
    let shift = pair.shift();
    let delta_f = bowen_root(shift, &pair.f)?;
    let delta_g = bowen_root(shift, &pair.g)?;
    let rigid = pair.proportionality(rigidity_depth(&surface)).is_some();
    let step = delta_f / (n_samples - 1) as f64;
    let mut grid: Vec<(f64, bool)> = Vec::new();
    let n_ext = if extension > 0.0 {
        ((extension * delta_f) / step).ceil() as usize
    } else {
        0
    };
    for i in (1..=n_ext).rev() {
        grid.push((-(i as f64) * step, true));
    }
    for i in 0..n_samples {
        let s = if i == n_samples - 1 { delta_f } else { i as f64 * step };
        grid.push((s, false));
    }
    for i in 1..=n_ext {
        grid.push((delta_f + i as f64 * step, true));
    }
    let solved: Vec<Result<CurveSample>> = grid
        .par_iter()
        .map(|&(s, ext)| {
            // secant guess between the endpoints (δ_f, 0) and (0, δ_g)
            let guess = delta_g * (1.0 - s / delta_f);
            sample_at(&surface, s, guess, ext)
        })
        .collect();
    let mut samples = Vec::with_capacity(solved.len());
    for (r, &(_, ext)) in solved.into_iter().zip(&grid) {
        match r {
            Ok(c) => samples.push(c),
            // solver failure marks the edge of the usable extension
            Err(_) if ext => {}
            Err(e) => return Err(e),
        }
    }
    Ok(ManhattanCurve {
        samples,
        delta_f,
        delta_g,
        rigid,
        surface,
    })
}

impl ManhattanCurve {
    pub fn surface(&self) -> &Arc<PressureSurface> {
        &self.surface
    }

    /// Samples on `[0, δ_f]`.
    pub fn core(&self) -> impl Iterator<Item = &CurveSample> {
        self.samples.iter().filter(|c| !c.extended)
    }

    /// Slopes at the endpoints `s = 0` and `s = δ_f`.
    pub fn slope_range(&self) -> (f64, f64) {
        let core: Vec<&CurveSample> = self.core().collect();
        let a = core.first().unwrap().m;
        let b = core.last().unwrap().m;
        (a.min(b), a.max(b))
    }

    /// Slope range including extended samples.
    pub fn extended_slope_range(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c.m), hi.max(c.m)))
    }

    pub fn m_star(&self) -> f64 {
        self.delta_f / self.delta_g
    }

    pub fn q_second_differences(&self) -> Vec<f64> {
        let core: Vec<&CurveSample> = self.core().collect();
        core.windows(3)
            .map(|w| w[0].q - 2.0 * w[1].q + w[2].q)
            .collect()
    }

    pub fn max_pressure_residual(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, c| m.max(c.pressure.abs()))
    }

    /// Signed `s δ_g + q δ_f − δ_f δ_g` at each core sample; `<= 0` below the secant.
    pub fn secant_offsets(&self) -> Vec<f64> {
        self.core()
            .map(|c| c.s * self.delta_g + c.q * self.delta_f - self.delta_f * self.delta_g)
            .collect()
    }

    pub fn secant_deviation(&self) -> f64 {
        self.secant_offsets().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest gap between `m(s)` and `−1/q′(s)` from central differences.
    pub fn slope_consistency(&self) -> f64 {
        let core: Vec<&CurveSample> = self.core().collect();
        core.windows(3)
            .map(|w| {
                let dq = (w[2].q - w[0].q) / (w[2].s - w[0].s);
                (w[1].m + 1.0 / dq).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Curve point with normal slope `m`.
    pub fn point_at_slope(&self, m: f64) -> Result<CurveSample> {
        let (lo, hi) = self.extended_slope_range();
        let tol = SLOPE_TOL * (1.0 + m.abs());
        if self.rigid {
            if (m - lo).abs() <= 1e-9 * (1.0 + m.abs()) || (m - hi).abs() <= 1e-9 * (1.0 + m.abs()) {
                return Ok(*self.core().last().unwrap());
            }
            return Err(Error::SlopeOutOfRange { m, lo, hi });
        }
        if m < lo - tol || m > hi + tol {
            return Err(Error::SlopeOutOfRange { m, lo, hi });
        }
        let samples = &self.samples;
        if let Some(c) = samples.iter().find(|c| (c.m - m).abs() <= tol) {
            return Ok(*c);
        }
        let increasing = samples.last().unwrap().m > samples[0].m;
        let i = samples
            .windows(2)
            .position(|w| {
                let (a, b) = if increasing { (w[0].m, w[1].m) } else { (w[1].m, w[0].m) };
                a <= m && m <= b
            })
            .ok_or(Error::SlopeOutOfRange { m, lo, hi })?;
        let (mut left, mut right) = (samples[i], samples[i + 1]);
        let sign = if increasing { 1.0 } else { -1.0 };
        // Illinois regula falsi on s ↦ m(s) − m, seeded by linear interpolation
        let mut fl = sign * (left.m - m);
        let mut fr = sign * (right.m - m);
        let mut side = 0i8;
        for _ in 0..200 {
            let s = (left.s * fr - right.s * fl) / (fr - fl);
            let guess = left.q + (right.q - left.q) * (s - left.s) / (right.s - left.s);
            let c = sample_at(&self.surface, s, guess, s < 0.0 || s > self.delta_f)?;
            let fc = sign * (c.m - m);
            if fc.abs() <= tol || (right.s - left.s).abs() < 1e-15 {
                return Ok(c);
            }
            if fc < 0.0 {
                left = c;
                fl = fc;
                if side == -1 {
                    fr *= 0.5;
                }
                side = -1;
            } else {
                right = c;
                fr = fc;
                if side == 1 {
                    fl *= 0.5;
                }
                side = 1;
            }
        }
        Err(Error::NonConvergence {
            residual: fl.abs().min(fr.abs()),
            iterations: 200,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,q,m,H,t_m,a,b")?;
        for c in &self.samples {
            writeln!(
                w,
                "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
                c.s, c.q, c.m, c.h, c.t_m, c.s, c.q
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub m: f64,
    /// `H(m) = a_m + m b_m`
    pub h: f64,
    pub a: f64,
    pub b: f64,
    pub t_m: f64,
    pub x_m: [f64; 2],
    pub slope_residual: f64,
}

pub fn correlation_number(curve: &ManhattanCurve, m: f64) -> Result<Correlation> {
    let c = curve.point_at_slope(m)?;
    let (a, b) = (c.s, c.q);
    Ok(Correlation {
        m,
        h: a + m * b,
        a,
        b,
        t_m: c.t_m,
        x_m: c.x_m,
        slope_residual: (c.m - m).abs(),
    })
}

/// Bowen root of `αf + βg`.
pub fn bishop_steger(surface: &PressureSurface, alpha: f64, beta: f64) -> Result<f64> {
    if alpha < 0.0 || beta < 0.0 || alpha + beta == 0.0 {
        return Err(Error::InvalidArgument("need α, β >= 0, not both zero".into()));
    }
    let pair = surface.pair();
    let u = pair.f.combine(alpha, &pair.g, beta, 0.0)?;
    bowen_root(pair.shift(), &u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsScan {
    pub alpha: f64,
    pub beta: f64,
    pub h_bs: f64,
    /// `H(m)/(α + mβ)` at each core sample.
    pub ratios: Vec<f64>,
    pub sampled_max: f64,
    pub argmax: usize,
    /// Maximum after golden-section refinement in `s` around `argmax`.
    pub refined_max: f64,
    pub refined_s: f64,
    /// `a_m / b_m` at the refined maximizer.
    pub refined_ab: f64,
    /// All ratios equal (rigid pair).
    pub degenerate: bool,
}

impl BsScan {
    pub fn equality_residual(&self) -> f64 {
        (self.refined_max - self.h_bs).abs()
    }

    pub fn ratio_residual(&self) -> f64 {
        (self.refined_ab - self.alpha / self.beta).abs()
    }
}

pub fn bs_inequality_scan(curve: &ManhattanCurve, alpha: f64, beta: f64) -> Result<BsScan> {
    let h_bs = bishop_steger(curve.surface(), alpha, beta)?;
    let core: Vec<CurveSample> = curve.core().copied().collect();
    let ratio = |c: &CurveSample| c.h / (alpha + c.m * beta);
    let ratios: Vec<f64> = core.iter().map(ratio).collect();
    let (argmax, sampled_max) = ratios
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let spread = ratios.iter().fold(0.0f64, |m, r| m.max((r - sampled_max).abs()));
    let degenerate = curve.rigid || spread < 1e-12;
    let lo = core[argmax.saturating_sub(1)].s;
    let hi = core[(argmax + 1).min(core.len() - 1)].s;
    let surface = curve.surface().clone();
    let q_guess = core[argmax].q;
    let (refined_s, refined_max) = if degenerate {
        (core[argmax].s, sampled_max)
    } else {
        golden_section_max(
            |s| Ok(ratio(&sample_at(&surface, s, q_guess, false)?)),
            lo,
            hi,
            1e-10,
        )?
    };
    let c = sample_at(&surface, refined_s, q_guess, false)?;
    Ok(BsScan {
        alpha,
        beta,
        h_bs,
        ratios,
        sampled_max,
        argmax,
        refined_max,
        refined_s,
        refined_ab: c.s / c.q,
        degenerate,
    })
}

/// `|H_{f,g}(m) − m H_{g,f}(1/m)|`
pub fn swap_check(curve_fg: &ManhattanCurve, curve_gf: &ManhattanCurve, m: f64) -> Result<f64> {
    let a = correlation_number(curve_fg, m)?;
    let b = correlation_number(curve_gf, 1.0 / m)?;
    Ok((a.h - m * b.h).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidityGap {
    pub m_star: f64,
    pub h_star: f64,
    /// `δ_f − H(m*)`
    pub gap: f64,
    pub secant_deviation: f64,
    pub on_secant: bool,
}

pub fn rigidity_gap(curve: &ManhattanCurve) -> Result<RigidityGap> {
    if curve.delta_g <= 0.0 {
        return Err(Error::InvalidArgument("δ_g must be positive".into()));
    }
    let m_star = curve.m_star();
    let h_star = if curve.rigid {
        curve.delta_f
    } else {
        correlation_number(curve, m_star)?.h
    };
    let secant_deviation = curve.secant_deviation();
    Ok(RigidityGap {
        m_star,
        h_star,
        gap: curve.delta_f - h_star,
        secant_deviation,
        on_secant: secant_deviation < 1e-9,
    })
}

/// `−t_m ℙ*(x_m)` from an independent Legendre solve, for comparison with `H(m)`.
pub fn h_from_legendre(curve: &ManhattanCurve, sample: &CurveSample) -> Result<f64> {
    let lp = legendre_from(curve.surface(), sample.x_m, sample.z())?;
    Ok(-sample.t_m * lp.pstar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{Potential, PotentialPair};
    use crate::shift::Shift;
    use crate::thermo::pressure;

    fn full2() -> Arc<Shift> {
        Arc::new(Shift::full(2).unwrap())
    }

    fn surface(f: Potential, g: Potential) -> Arc<PressureSurface> {
        Arc::new(PressureSurface::new(PotentialPair::new(f, g).unwrap()))
    }

    fn standard() -> Arc<PressureSurface> {
        let s = full2();
        surface(
            Potential::new(s.clone(), 1, vec![1.0, 2f64.sqrt()]).unwrap(),
            Potential::new(s, 1, vec![3f64.sqrt(), 1.0]).unwrap(),
        )
    }

    fn generic() -> Arc<PressureSurface> {
        let s = full2();
        surface(
            Potential::new(s.clone(), 2, vec![1.0, 2f64.sqrt(), 1.2, 0.8]).unwrap(),
            Potential::new(s, 2, vec![3f64.sqrt(), 1.0, 0.7, 1.4]).unwrap(),
        )
    }

    /// Independent oracle: bisection on `e^{−s−√3 q} + e^{−√2 s − q} = 1`.
    fn standard_q_oracle(s: f64) -> f64 {
        let (mut lo, mut hi) = (-1.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = (-s - 3f64.sqrt() * mid).exp() + (-(2f64.sqrt()) * s - mid).exp();
            if v > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn identical_potentials_give_a_line() {
        let s = full2();
        let f = Potential::new(s.clone(), 1, vec![1.0, 2f64.sqrt()]).unwrap();
        let curve = trace_curve(surface(f.clone(), f), 11).unwrap();
        assert!(curve.rigid);
        for c in &curve.samples {
            assert!((c.q - (curve.delta_f - c.s)).abs() < 1e-10);
            assert!((c.m - 1.0).abs() < 1e-10);
        }
        let corr = correlation_number(&curve, 1.0).unwrap();
        assert!((corr.h - curve.delta_f).abs() < 1e-10);
        assert!(matches!(correlation_number(&curve, 1.5), Err(Error::SlopeOutOfRange { .. })));
    }

    #[test]
    fn scaled_pair_gives_secant() {
        let s = full2();
        let f = Potential::new(s.clone(), 1, vec![1.0, 2f64.sqrt()]).unwrap();
        let curve = trace_curve(surface(f.clone(), f.scaled(1.7)), 21).unwrap();
        assert!(curve.rigid);
        assert!((curve.delta_g - curve.delta_f / 1.7).abs() < 1e-10);
        assert!(curve.secant_deviation() < 1e-9);
        let gap = rigidity_gap(&curve).unwrap();
        assert!(gap.gap.abs() < 1e-8);
        assert!(gap.on_secant);
    }

    #[test]
    fn standard_pair_matches_oracle_and_is_convex() {
        let curve = trace_curve(standard(), 41).unwrap();
        assert!(!curve.rigid);
        let first = curve.samples.first().unwrap();
        let last = curve.samples.last().unwrap();
        assert!((first.q - curve.delta_g).abs() < 1e-8);
        assert!(last.q.abs() < 1e-8);
        assert!(curve.q_second_differences().iter().all(|d| *d > 0.0));
        for i in [3usize, 10, 20, 30, 37] {
            let c = &curve.samples[i];
            assert!((c.q - standard_q_oracle(c.s)).abs() < 1e-11);
        }
        assert!(curve.max_pressure_residual() < 1e-12);
        assert!(curve.slope_consistency() < 1e-4);
        assert!(curve.secant_offsets().iter().all(|v| *v <= 1e-9));
        // m increases along the curve and m* is inside the range
        assert!(curve.samples.windows(2).all(|w| w[1].m > w[0].m));
        let (lo, hi) = curve.slope_range();
        assert!(lo < curve.m_star() && curve.m_star() < hi);
    }

    #[test]
    fn correlation_examples() {
        let curve = trace_curve(standard(), 41).unwrap();
        let (lo, hi) = curve.slope_range();
        let end = correlation_number(&curve, hi).unwrap();
        assert!(end.b.abs() < 1e-8);
        assert!((end.h - curve.delta_f).abs() < 1e-8);
        let mid = 0.37 * lo + 0.63 * hi;
        let c = correlation_number(&curve, mid).unwrap();
        assert!(c.slope_residual < 1e-8);
        let p = pressure(curve.surface().pair().shift(), &curve.surface().pair().combination([-c.a, -c.b])).unwrap();
        assert!(p.abs() < 1e-12);
        let g = rigidity_gap(&curve).unwrap();
        assert!(g.gap > 1e-4);
        assert!(matches!(correlation_number(&curve, hi + 0.1), Err(Error::SlopeOutOfRange { .. })));
    }

    #[test]
    fn swap_identity() {
        let sf = standard();
        let swapped = Arc::new(PressureSurface::new(sf.pair().swapped()));
        let fg = trace_curve(sf, 41).unwrap();
        let gf = trace_curve(swapped, 41).unwrap();
        let (lo, hi) = fg.slope_range();
        for m in [fg.m_star(), 0.5 * (lo + hi), lo + 0.1 * (hi - lo)] {
            assert!(swap_check(&fg, &gf, m).unwrap() < 1e-7);
        }
        let gap_fg = rigidity_gap(&fg).unwrap();
        let gap_gf = rigidity_gap(&gf).unwrap();
        // δ_f − H_fg(m*) = m*(δ_g − H_gf(1/m*))
        assert!((gap_fg.gap - gap_fg.m_star * gap_gf.gap).abs() < 1e-7);
    }

    #[test]
    fn bishop_steger_examples() {
        let sf = standard();
        let curve = trace_curve(sf.clone(), 201).unwrap();
        assert!((bishop_steger(&sf, 1.0, 0.0).unwrap() - curve.delta_f).abs() < 1e-12);
        let h = bishop_steger(&sf, 1.0, 1.0).unwrap();
        let p = pressure(sf.pair().shift(), &sf.pair().combination([-h, -h])).unwrap();
        assert!(p.abs() < 1e-12);
        let (q, _) = solve_q(&sf, h, h).unwrap();
        assert!((q - h).abs() < 1e-10);
        for (a, b) in [(1.0, 1.0), (2.0, 1.0)] {
            let scan = bs_inequality_scan(&curve, a, b).unwrap();
            assert!(scan.equality_residual() < 1e-6);
            assert!(scan.ratio_residual() < 1e-3);
            assert!(scan.ratios.iter().all(|r| *r <= scan.h_bs + 1e-9));
            assert!(!scan.degenerate);
        }
    }

    #[test]
    fn degenerate_scan_is_flagged() {
        let s = full2();
        let f = Potential::new(s.clone(), 1, vec![1.0, 2f64.sqrt()]).unwrap();
        let same = surface(f.clone(), f);
        let curve = trace_curve(same.clone(), 11).unwrap();
        let h = bishop_steger(&same, 1.0, 1.0).unwrap();
        assert!((h - curve.delta_f / 2.0).abs() < 1e-12);
        let scan = bs_inequality_scan(&curve, 1.0, 1.0).unwrap();
        assert!(scan.degenerate);
    }

    #[test]
    fn generic_curve_legendre_identity() {
        let curve = trace_curve(generic(), 21).unwrap();
        for c in curve.core().skip(2).step_by(4).take(4) {
            let h = h_from_legendre(&curve, c).unwrap();
            assert!((h - c.h).abs() < 1e-7);
        }
    }

    #[test]
    fn extension_adds_flagged_samples() {
        let curve = trace_curve_extended(generic(), 21, 0.1).unwrap();
        assert!(curve.samples.iter().any(|c| c.extended));
        let (lo, hi) = curve.slope_range();
        let (elo, ehi) = curve.extended_slope_range();
        assert!(elo < lo && ehi > hi);
        assert!(curve.samples.iter().all(|c| c.pressure.abs() < 1e-12));
    }

    #[test]
    fn csv_header() {
        let curve = trace_curve(standard(), 5).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s,q,m,H,t_m,a,b\n"));
        assert_eq!(text.lines().count(), 6);
    }
}
