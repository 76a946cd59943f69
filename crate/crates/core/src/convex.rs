//! The pressure surface `ℙ(z) = P(z₁f + z₂g)` and its Legendre transform.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::numeric::golden_section_max;
use crate::potential::PotentialPair;
use crate::thermo::rpf_data;

const HESS_STEP: f64 = 1e-4;
const NEWTON_TOL: f64 = 1e-10;
const NEWTON_ITERS: usize = 200;
const MAX_BACKTRACKS: usize = 40;
const MAX_STEP: f64 = 2.0;

/// Pressure, gradient and entropy at one point of the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub z: [f64; 2],
    pub pressure: f64,
    /// `(∫f dμ_z, ∫g dμ_z)`
    pub grad: [f64; 2],
    /// Entropy of the equilibrium state of `z₁f + z₂g`.
    pub entropy: f64,
    pub gap: f64,
}

#[derive(Debug)]
pub struct PressureSurface {
    pair: PotentialPair,
    cache: Mutex<HashMap<(u64, u64), SurfacePoint>>,
}

impl Clone for PressureSurface {
    fn clone(&self) -> Self {
        PressureSurface::new(self.pair.clone())
    }
}

impl PressureSurface {
    pub fn new(pair: PotentialPair) -> Self {
        PressureSurface {
            pair,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn pair(&self) -> &PotentialPair {
        &self.pair
    }

    /// Whether `z₁ + z₂ < 0`. Only a convergence condition for countable
    /// alphabets; pressure is finite everywhere on finite ones.
    pub fn in_countable_domain(&self, z: [f64; 2]) -> bool {
        z[0] + z[1] < 0.0
    }

    pub fn eval(&self, z: [f64; 2]) -> Result<SurfacePoint> {
        let key = (z[0].to_bits(), z[1].to_bits());
        if let Some(p) = self.cache.lock().unwrap().get(&key) {
            return Ok(*p);
        }
        let u = self.pair.combination(z);
        let rpf = rpf_data(self.pair.shift(), &u)?;
        let point = SurfacePoint {
            z,
            pressure: rpf.pressure,
            grad: [rpf.integrate(&self.pair.f), rpf.integrate(&self.pair.g)],
            entropy: rpf.entropy(),
            gap: rpf.gap,
        };
        self.cache.lock().unwrap().insert(key, point);
        Ok(point)
    }

    pub fn pressure(&self, z: [f64; 2]) -> Result<f64> {
        Ok(self.eval(z)?.pressure)
    }

    pub fn grad(&self, z: [f64; 2]) -> Result<[f64; 2]> {
        Ok(self.eval(z)?.grad)
    }

    /// Central differences of the gradient, symmetrized.
    pub fn hess(&self, z: [f64; 2]) -> Result<Matrix2<f64>> {
        let h = HESS_STEP;
        let mut m = Matrix2::zeros();
        for i in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[i] += h;
            zm[i] -= h;
            let gp = self.grad(zp)?;
            let gm = self.grad(zm)?;
            for j in 0..2 {
                m[(i, j)] = (gp[j] - gm[j]) / (2.0 * h);
            }
        }
        Ok(0.5 * (m + m.transpose()))
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

pub fn grad_pressure(surface: &PressureSurface, z: [f64; 2]) -> Result<[f64; 2]> {
    surface.grad(z)
}

pub fn hess_pressure(surface: &PressureSurface, z: [f64; 2]) -> Result<Matrix2<f64>> {
    surface.hess(z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendrePoint {
    pub x: [f64; 2],
    pub z: [f64; 2],
    /// `ℙ*(x) = ⟨x, z⟩ − ℙ(z)`
    pub pstar: f64,
    pub pressure: f64,
    pub hess: Matrix2<f64>,
    /// `∇²ℙ*(x) = (∇²ℙ(z))⁻¹`
    pub hess_star: Matrix2<f64>,
    pub residual: f64,
}

impl LegendrePoint {
    /// `|ℙ*(x) + ℙ(z) − ⟨x, z⟩|`
    pub fn young_residual(&self) -> f64 {
        (self.pstar + self.pressure - (self.x[0] * self.z[0] + self.x[1] * self.z[1])).abs()
    }
}

/// Solves `∇ℙ(z) = x` by damped Newton starting at the origin.
pub fn legendre(surface: &PressureSurface, x: [f64; 2]) -> Result<LegendrePoint> {
    legendre_from(surface, x, [0.0, 0.0])
}

pub fn legendre_from(surface: &PressureSurface, x: [f64; 2], z0: [f64; 2]) -> Result<LegendrePoint> {
    let target = Vector2::new(x[0], x[1]);
    let mut z = Vector2::new(z0[0], z0[1]);
    let resid_at = |z: &Vector2<f64>| -> Result<(f64, Vector2<f64>)> {
        let g = surface.grad([z[0], z[1]])?;
        let r = Vector2::new(g[0], g[1]) - target;
        Ok((r.norm(), r))
    };
    let (mut norm, mut r) = resid_at(&z)?;
    for it in 0..NEWTON_ITERS {
        if norm < NEWTON_TOL {
            return finish(surface, x, [z[0], z[1]], norm);
        }
        let h = surface.hess([z[0], z[1]])?;
        let det = h.determinant();
        let scale = h.trace().abs().max(f64::MIN_POSITIVE);
        if det <= 1e-10 * scale * scale {
            // flat directions met after moving away from the start mean the
            // iterate is chasing a target outside the gradient range
            return Err(if it == 0 {
                Error::DegenerateHessian { z: [z[0], z[1]], det }
            } else {
                Error::OutsideGradientRange { x }
            });
        }
        let mut step = h.try_inverse().ok_or(Error::DegenerateHessian { z: [z[0], z[1]], det })? * r;
        if step.norm() > MAX_STEP {
            step *= MAX_STEP / step.norm();
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let trial = z - alpha * step;
            if trial.iter().all(|v| v.is_finite() && v.abs() < 1e6) {
                let Ok((tn, tr)) = resid_at(&trial) else {
                    alpha *= 0.5;
                    continue;
                };
                if tn < norm {
                    z = trial;
                    norm = tn;
                    r = tr;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm < NEWTON_TOL {
        return finish(surface, x, [z[0], z[1]], norm);
    }
    Err(Error::OutsideGradientRange { x })
}

fn finish(surface: &PressureSurface, x: [f64; 2], z: [f64; 2], residual: f64) -> Result<LegendrePoint> {
    let pressure = surface.pressure(z)?;
    let hess = surface.hess(z)?;
    let det = hess.determinant();
    let hess_star = hess
        .try_inverse()
        .ok_or(Error::DegenerateHessian { z, det })?;
    Ok(LegendrePoint {
        x,
        z,
        pstar: x[0] * z[0] + x[1] * z[1] - pressure,
        pressure,
        hess,
        hess_star,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSample {
    pub t: f64,
    /// `−t ℙ*((1, m)/t)`, `None` when `(1, m)/t` left the gradient range.
    pub value: Option<f64>,
    pub z: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub m: f64,
    pub samples: Vec<ProfileSample>,
    pub t_hat: f64,
    pub max_value: f64,
    /// `ℙ(∇ℙ*(x/t̂))`, the derivative of the profile at the maximizer.
    pub derivative_at_max: f64,
}

impl Profile {
    pub fn skipped(&self) -> usize {
        self.samples.iter().filter(|s| s.value.is_none()).count()
    }

    /// Second differences of consecutive defined samples on a uniform grid.
    pub fn second_differences(&self) -> Vec<f64> {
        self.samples
            .windows(3)
            .filter_map(|w| match (w[0].value, w[1].value, w[2].value) {
                (Some(a), Some(b), Some(c)) => Some(a - 2.0 * b + c),
                _ => None,
            })
            .collect()
    }
}

/// Samples `t ↦ −t ℙ*((1, m)/t)` and refines its maximizer by golden section.
pub fn profile_neg_t_pstar(surface: &PressureSurface, m: f64, t_grid: &[f64]) -> Result<Profile> {
    let mut samples = Vec::with_capacity(t_grid.len());
    let mut warm = [0.0, 0.0];
    for &t in t_grid {
        match legendre_from(surface, [1.0 / t, m / t], warm) {
            Ok(lp) => {
                warm = lp.z;
                samples.push(ProfileSample {
                    t,
                    value: Some(-t * lp.pstar),
                    z: Some(lp.z),
                });
            }
            Err(Error::OutsideGradientRange { .. }) => samples.push(ProfileSample {
                t,
                value: None,
                z: None,
            }),
            Err(e) => return Err(e),
        }
    }
    let best = samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.value.map(|v| (i, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::InsufficientData("no profile sample inside the gradient range".into()))?
        .0;
    let lo = samples[best.saturating_sub(1)].t;
    let hi = samples[(best + 1).min(samples.len() - 1)].t;
    let start = samples[best].z.unwrap();
    let eval = |t: f64| -> Result<f64> {
        let lp = legendre_from(surface, [1.0 / t, m / t], start)?;
        Ok(-t * lp.pstar)
    };
    let (t_hat, max_value) = golden_section_max(eval, lo, hi, 1e-9)?;
    let lp = legendre_from(surface, [1.0 / t_hat, m / t_hat], start)?;
    Ok(Profile {
        m,
        samples,
        t_hat,
        max_value,
        derivative_at_max: lp.pressure,
    })
}

/// One row of a grid evaluation: `z1,z2,P,df,dg,var_f,cov,var_g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRow {
    pub z: [f64; 2],
    pub pressure: f64,
    pub grad: [f64; 2],
    pub var_f: f64,
    pub cov: f64,
    pub var_g: f64,
}

pub fn evaluate_grid(surface: &PressureSurface, z1: &[f64], z2: &[f64]) -> Result<Vec<GridRow>> {
    let mut rows = Vec::with_capacity(z1.len() * z2.len());
    for &a in z1 {
        for &b in z2 {
            let p = surface.eval([a, b])?;
            let h = surface.hess([a, b])?;
            rows.push(GridRow {
                z: [a, b],
                pressure: p.pressure,
                grad: p.grad,
                var_f: h[(0, 0)],
                cov: h[(0, 1)],
                var_g: h[(1, 1)],
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Potential;
    use crate::shift::Shift;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn full2() -> Arc<Shift> {
        Arc::new(Shift::full(2).unwrap())
    }

    fn pair_d1(f: [f64; 2], g: [f64; 2]) -> PotentialPair {
        let s = full2();
        PotentialPair::new(
            Potential::new(s.clone(), 1, f.to_vec()).unwrap(),
            Potential::new(s, 1, g.to_vec()).unwrap(),
        )
        .unwrap()
    }

    /// Non-degenerate depth-2 pair on the full 2-shift.
    pub(crate) fn generic_pair() -> PotentialPair {
        let s = full2();
        let f = Potential::new(s.clone(), 2, vec![1.0, 2f64.sqrt(), 1.2, 0.8]).unwrap();
        let g = Potential::new(s, 2, vec![3f64.sqrt(), 1.0, 0.7, 1.4]).unwrap();
        PotentialPair::new(f, g).unwrap()
    }

    /// Closed-form log-sum-exp data for depth-1 pairs on the full 2-shift.
    fn lse(f: [f64; 2], g: [f64; 2], z: [f64; 2]) -> (f64, [f64; 2], [[f64; 3]; 1]) {
        let w: Vec<f64> = (0..2).map(|i| (z[0] * f[i] + z[1] * g[i]).exp()).collect();
        let tot = w[0] + w[1];
        let p = [w[0] / tot, w[1] / tot];
        let mf = p[0] * f[0] + p[1] * f[1];
        let mg = p[0] * g[0] + p[1] * g[1];
        let vf = p[0] * f[0] * f[0] + p[1] * f[1] * f[1] - mf * mf;
        let vg = p[0] * g[0] * g[0] + p[1] * g[1] * g[1] - mg * mg;
        let c = p[0] * f[0] * g[0] + p[1] * f[1] * g[1] - mf * mg;
        (tot.ln(), [mf, mg], [[vf, c, vg]])
    }

    #[test]
    fn constant_gradient() {
        let s = full2();
        let pair = PotentialPair::new(
            Potential::constant(s.clone(), 0.6).unwrap(),
            Potential::constant(s, 2.2).unwrap(),
        )
        .unwrap();
        let surf = PressureSurface::new(pair);
        for z in [[0.0, 0.0], [-1.0, 0.3], [2.0, -4.0]] {
            let g = surf.grad(z).unwrap();
            assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 2.2).abs() < 1e-12);
            assert!(surf.hess(z).unwrap().abs().max() < 1e-8);
        }
    }

    #[test]
    fn softmax_oracle() {
        let (f, g) = ([1.0, 2f64.sqrt()], [3f64.sqrt(), 1.0]);
        let surf = PressureSurface::new(pair_d1(f, g));
        for z in [[0.0, 0.0], [-0.3, -0.2], [0.5, -1.0]] {
            let (p, grad, h) = lse(f, g, z);
            let pt = surf.eval(z).unwrap();
            assert!((pt.pressure - p).abs() < 1e-12);
            assert!((pt.grad[0] - grad[0]).abs() < 1e-12);
            assert!((pt.grad[1] - grad[1]).abs() < 1e-12);
            let hs = surf.hess(z).unwrap();
            assert!((hs[(0, 0)] - h[0][0]).abs() < 1e-6);
            assert!((hs[(0, 1)] - h[0][1]).abs() < 1e-6);
            assert!((hs[(1, 1)] - h[0][2]).abs() < 1e-6);
        }
        let surf = PressureSurface::new(pair_d1([1e-9, 1.0], [1.0, 2.0]));
        let h = surf.hess([0.0, 0.0]).unwrap();
        assert!((h[(0, 0)] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let surf = PressureSurface::new(generic_pair());
        let z = [-0.4, -0.3];
        let g = surf.grad(z).unwrap();
        let h = 1e-5;
        for i in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[i] += h;
            zm[i] -= h;
            let fd = (surf.pressure(zp).unwrap() - surf.pressure(zm).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6);
        }
        assert!(surf.cache_len() >= 5);
    }

    #[test]
    fn generic_pair_positive_definite() {
        let surf = PressureSurface::new(generic_pair());
        for i in 0..20 {
            let z = [-1.0 + 0.1 * i as f64, 0.5 - 0.07 * i as f64];
            let h = surf.hess(z).unwrap();
            assert!(h.determinant() > 0.0, "z={z:?}");
            assert!(h[(0, 0)] > 0.0);
        }
    }

    #[test]
    fn standard_pair_hessian_is_rank_one() {
        let surf = PressureSurface::new(pair_d1([1.0, 2f64.sqrt()], [3f64.sqrt(), 1.0]));
        let h = surf.hess([-0.3, -0.2]).unwrap();
        assert!(h.determinant().abs() < 1e-9 * h.trace().powi(2));
        assert!(matches!(
            legendre(&surf, surf.grad([-0.3, -0.2]).unwrap()),
            Err(Error::DegenerateHessian { .. })
        ));
    }

    #[test]
    fn legendre_round_trip() {
        let surf = PressureSurface::new(generic_pair());
        for z0 in [[-0.5, -0.2], [0.3, -0.9], [-1.2, 0.4]] {
            let x = surf.grad(z0).unwrap();
            let lp = legendre(&surf, x).unwrap();
            assert!((lp.z[0] - z0[0]).abs() < 1e-8 && (lp.z[1] - z0[1]).abs() < 1e-8);
            assert!(lp.young_residual() < 1e-12);
            let id = lp.hess_star * lp.hess;
            assert!((id - Matrix2::identity()).abs().max() < 1e-9);
        }
    }

    #[test]
    fn legendre_far_target_fails() {
        let surf = PressureSurface::new(generic_pair());
        assert!(matches!(
            legendre(&surf, [10.0, 10.0]),
            Err(Error::OutsideGradientRange { .. })
        ));
    }

    #[test]
    fn pstar_at_curve_point_is_negative_entropy() {
        let pair = generic_pair();
        let surf = PressureSurface::new(pair.clone());
        // find q with P(-0.3 f - q g) = 0 by bisection
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if surf.pressure([-0.3, -mid]).unwrap() > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = [-0.3, -lo];
        let pt = surf.eval(z).unwrap();
        let lp = legendre(&surf, pt.grad).unwrap();
        assert!((lp.pstar + pt.entropy).abs() < 1e-8);
    }

    #[test]
    fn profile_is_concave_with_zero_derivative_at_max() {
        let surf = PressureSurface::new(generic_pair());
        let z = [-0.3, -0.4];
        let x = surf.grad(z).unwrap();
        let m = x[1] / x[0];
        let t_m = 1.0 / x[0];
        let grid: Vec<f64> = (0..21).map(|i| t_m * (0.96 + 0.004 * i as f64)).collect();
        let prof = profile_neg_t_pstar(&surf, m, &grid).unwrap();
        assert!(prof.second_differences().iter().all(|d| *d <= 1e-9));
        assert!(prof.derivative_at_max.abs() < 1e-7, "{}", prof.derivative_at_max);
        assert_eq!(prof.skipped(), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn young_inequality(a in -1.0f64..0.5, b in -1.0f64..0.5, c in -1.0f64..0.5, d in -1.0f64..0.5) {
            let surf = PressureSurface::new(generic_pair());
            let x = surf.grad([a, b]).unwrap();
            let lp = legendre(&surf, x).unwrap();
            let z = [c, d];
            let gz = surf.grad(z).unwrap();
            let gap = lp.pstar + surf.pressure(z).unwrap() - (x[0] * z[0] + x[1] * z[1]);
            prop_assert!(gap >= -1e-12);
            if ((gz[0] - x[0]).powi(2) + (gz[1] - x[1]).powi(2)).sqrt() > 1e-3 {
                prop_assert!(gap > 1e-9);
            }
        }
    }
}
