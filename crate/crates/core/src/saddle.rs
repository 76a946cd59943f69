//! Leading term of `∫_Ω G(iΘ) e^{nF(iΘ)} dΘ` over a disc and a quadrature check.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::{legendre_from, LegendrePoint, PressureSurface};
use crate::error::{Error, Result};

pub type Field = Arc<dyn Fn([f64; 2]) -> Complex64 + Send + Sync>;

const GRAD_TOL: f64 = 1e-10;

/// Phase `F` and amplitude `G` on the disc of radius `epsilon` around 0.
///
/// `F` enters through its value, gradient and Hessian at 0. The quadrature
/// also needs `Θ ↦ F(iΘ)`; without an explicit extension the quadratic Taylor
/// polynomial is used.
#[derive(Clone)]
pub struct SaddleProblem {
    pub f0: f64,
    pub grad0: [f64; 2],
    pub hess0: Matrix2<f64>,
    pub f_imag: Option<Field>,
    /// `Θ ↦ G(iΘ)`
    pub g_imag: Field,
    pub g_lipschitz: f64,
    pub g_sup: f64,
    pub epsilon: f64,
    pub n: f64,
}

impl fmt::Debug for SaddleProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SaddleProblem")
            .field("f0", &self.f0)
            .field("grad0", &self.grad0)
            .field("hess0", &self.hess0)
            .field("explicit_extension", &self.f_imag.is_some())
            .field("g_lipschitz", &self.g_lipschitz)
            .field("g_sup", &self.g_sup)
            .field("epsilon", &self.epsilon)
            .field("n", &self.n)
            .finish()
    }
}

impl SaddleProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !(self.n > 0.0) {
            return Err(Error::InvalidArgument("epsilon and n must be positive".into()));
        }
        if self.grad0[0].abs().max(self.grad0[1].abs()) > GRAD_TOL {
            return Err(Error::InvalidArgument(format!(
                "gradient at the saddle is {:?}, not zero",
                self.grad0
            )));
        }
        let h = &self.hess0;
        if (h[(0, 1)] - h[(1, 0)]).abs() > 1e-12 * (1.0 + h.abs().max()) {
            return Err(Error::InvalidArgument("Hessian is not symmetric".into()));
        }
        let eig = h.symmetric_eigenvalues();
        if !(eig[0] > 0.0 && eig[1] > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(())
    }

    /// `F(iΘ)`.
    pub fn phase(&self, theta: [f64; 2]) -> Complex64 {
        match &self.f_imag {
            Some(f) => f(theta),
            None => {
                let h = &self.hess0;
                let q = h[(0, 0)] * theta[0] * theta[0]
                    + 2.0 * h[(0, 1)] * theta[0] * theta[1]
                    + h[(1, 1)] * theta[1] * theta[1];
                Complex64::new(self.f0 - 0.5 * q, 0.0)
            }
        }
    }

    pub fn with_n(&self, n: f64) -> Self {
        SaddleProblem { n, ..self.clone() }
    }

    /// Multiplies `G` (and its bounds) by `c`.
    pub fn scaled_amplitude(&self, c: Complex64) -> Self {
        let g = self.g_imag.clone();
        SaddleProblem {
            g_imag: Arc::new(move |t| c * g(t)),
            g_lipschitz: self.g_lipschitz * c.norm(),
            g_sup: self.g_sup * c.norm(),
            ..self.clone()
        }
    }

    /// Conjugates the quadratic structure by the rotation of angle `phi`:
    /// `F̃(θ) = F(Rθ)`, `G̃(θ) = G(Rθ)`.
    pub fn rotated(&self, phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        let r = Matrix2::new(c, -s, s, c);
        let rot = move |t: [f64; 2]| [c * t[0] - s * t[1], s * t[0] + c * t[1]];
        let g = self.g_imag.clone();
        let f = self.f_imag.clone();
        let g0 = self.grad0;
        SaddleProblem {
            grad0: [c * g0[0] + s * g0[1], -s * g0[0] + c * g0[1]],
            hess0: r.transpose() * self.hess0 * r,
            f_imag: f.map(|f| Arc::new(move |t| f(rot(t))) as Field),
            g_imag: Arc::new(move |t| g(rot(t))),
            ..self.clone()
        }
    }
}

/// `e^{nF(0)} G(0) 2π / (n √det ∇²F(0))`.
pub fn saddle_leading_term(problem: &SaddleProblem) -> Result<Complex64> {
    problem.validate()?;
    let det = problem.hess0.determinant();
    let g0 = (problem.g_imag)([0.0, 0.0]);
    Ok(g0 * (problem.n * problem.f0).exp() * 2.0 * PI / (problem.n * det.sqrt()))
}

/// Largest grid step that resolves the Gaussian width on the disc.
pub fn max_grid_step(problem: &SaddleProblem) -> f64 {
    problem.epsilon / (4.0 * problem.n.sqrt())
}

/// Tensor-product midpoint rule over the disc. Cells whose centre lies in the
/// disc are kept. `grid_step` is rounded down so cells tile `[−ε, ε]²`.
pub fn quadrature_oracle(problem: &SaddleProblem, grid_step: f64) -> Result<Complex64> {
    problem.validate()?;
    let max_step = max_grid_step(problem);
    if !(grid_step > 0.0) || grid_step > max_step {
        return Err(Error::GridTooCoarse {
            step: grid_step,
            max_step,
        });
    }
    let eps = problem.epsilon;
    let cells = (2.0 * eps / grid_step).ceil() as usize;
    let h = 2.0 * eps / cells as f64;
    let center = |i: usize| -eps + (i as f64 + 0.5) * h;
    let n = problem.n;
    let rows: Vec<Complex64> = (0..cells)
        .into_par_iter()
        .map(|i| {
            let x = center(i);
            let mut acc = Complex64::new(0.0, 0.0);
            let mut comp = Complex64::new(0.0, 0.0);
            for j in 0..cells {
                let y = center(j);
                if x * x + y * y >= eps * eps {
                    continue;
                }
                let term = (problem.g_imag)([x, y]) * (n * problem.phase([x, y])).exp();
                // compensated sum
                let t = term - comp;
                let s = acc + t;
                comp = (s - acc) - t;
                acc = s;
            }
            acc
        })
        .collect();
    let mut total = Complex64::new(0.0, 0.0);
    for r in rows {
        total += r;
    }
    Ok(total * h * h)
}

/// `F(θ) = |θ|²/2`, `G ≡ 1` on the unit disc.
pub fn gaussian_case(n: f64) -> SaddleProblem {
    SaddleProblem {
        f0: 0.0,
        grad0: [0.0, 0.0],
        hess0: Matrix2::identity(),
        f_imag: Some(Arc::new(|t| Complex64::new(-0.5 * (t[0] * t[0] + t[1] * t[1]), 0.0))),
        g_imag: Arc::new(|_| Complex64::new(1.0, 0.0)),
        g_lipschitz: 0.0,
        g_sup: 1.0,
        epsilon: 1.0,
        n,
    }
}

/// `F(θ) = |θ|²/2 + λ|θ|⁴/4` with the Lipschitz amplitude `G(w) = 1 + κ‖w‖`
/// on the disc of radius 1/2.
pub fn quartic_case(n: f64, lambda: f64, kappa: f64) -> SaddleProblem {
    SaddleProblem {
        f0: 0.0,
        grad0: [0.0, 0.0],
        hess0: Matrix2::identity(),
        f_imag: Some(Arc::new(move |t| {
            let r2 = t[0] * t[0] + t[1] * t[1];
            Complex64::new(-0.5 * r2 + 0.25 * lambda * r2 * r2, 0.0)
        })),
        g_imag: Arc::new(move |t| Complex64::new(1.0 + kappa * t[0].hypot(t[1]), 0.0)),
        g_lipschitz: kappa,
        g_sup: 1.0 + 0.5 * kappa,
        epsilon: 0.5,
        n,
    }
}

/// Saddle problem of `F(y) = ⟨x, y − z⟩ + ℙ(z − y)` with `∇ℙ(z) = x`.
///
/// Only the Taylor data at 0 is available, so the quadrature uses the
/// quadratic phase.
#[derive(Debug, Clone)]
pub struct PressureSaddle {
    pub legendre: LegendrePoint,
    pub problem: SaddleProblem,
}

impl PressureSaddle {
    /// `e^{−nℙ*(x)} (2π/n) √det ∇²ℙ*(x)`, the same number written in dual variables.
    pub fn dual_leading_term(&self) -> f64 {
        let n = self.problem.n;
        (-n * self.legendre.pstar).exp() * 2.0 * PI / n * self.legendre.hess_star.determinant().sqrt()
    }
}

pub fn pressure_case(surface: &PressureSurface, x: [f64; 2], z0: [f64; 2], n: f64) -> Result<PressureSaddle> {
    let lp = legendre_from(surface, x, z0)?;
    let problem = SaddleProblem {
        f0: -lp.pstar,
        grad0: [x[0] - lp.x[0], x[1] - lp.x[1]],
        hess0: lp.hess,
        f_imag: None,
        g_imag: Arc::new(|_| Complex64::new(1.0, 0.0)),
        g_lipschitz: 0.0,
        g_sup: 1.0,
        epsilon: 1.0,
        n,
    };
    problem.validate()?;
    Ok(PressureSaddle { legendre: lp, problem })
}

/// `det ∇²ℙ(z) · det ∇²ℙ*(x) − 1`, with `∇²ℙ*` from central differences of
/// the inverse gradient map `x ↦ z` rather than from inverting `∇²ℙ`.
pub fn legendre_det_identity(surface: &PressureSurface, x: [f64; 2], z0: [f64; 2], h: f64) -> Result<f64> {
    let lp = legendre_from(surface, x, z0)?;
    let mut jac = Matrix2::zeros();
    for i in 0..2 {
        let mut up = x;
        let mut dn = x;
        up[i] += h;
        dn[i] -= h;
        let zu = legendre_from(surface, up, lp.z)?.z;
        let zd = legendre_from(surface, dn, lp.z)?.z;
        for j in 0..2 {
            jac[(j, i)] = (zu[j] - zd[j]) / (2.0 * h);
        }
    }
    Ok(surface.hess(lp.z)?.determinant() * jac.determinant() - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: f64,
    pub leading: f64,
    pub quadrature: f64,
    pub relative_error: f64,
    /// `relative_error · √n`
    pub scaled_error: f64,
}

/// Leading term against quadrature for each `n`, at step `max_step / refine`.
pub fn convergence_table(base: &SaddleProblem, ns: &[f64], refine: f64) -> Result<Vec<ConvergenceRow>> {
    ns.iter()
        .map(|&n| {
            let p = base.with_n(n);
            let lead = saddle_leading_term(&p)?;
            let quad = quadrature_oracle(&p, max_grid_step(&p) / refine)?;
            let rel = (quad - lead).norm() / lead.norm();
            Ok(ConvergenceRow {
                n,
                leading: lead.re,
                quadrature: quad.re,
                relative_error: rel,
                scaled_error: rel * n.sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{Potential, PotentialPair};
    use crate::shift::Shift;

    fn fine(p: &SaddleProblem) -> f64 {
        max_grid_step(p) / 8.0
    }

    #[test]
    fn gaussian_exact() {
        for n in [40.0, 100.0, 400.0] {
            let p = gaussian_case(n);
            let lead = saddle_leading_term(&p).unwrap();
            assert!((lead.re - 2.0 * PI / n).abs() < 1e-15);
            let q = quadrature_oracle(&p, fine(&p)).unwrap();
            assert!((q - lead).norm() < 1e-6, "n={n} {q} {lead}");
        }
    }

    #[test]
    fn plug_in_leading_term() {
        let p = SaddleProblem {
            hess0: Matrix2::new(2.0, 0.0, 0.0, 2.0),
            g_imag: Arc::new(|_| Complex64::new(3.0, 0.0)),
            ..gaussian_case(5.0)
        };
        let lead = saddle_leading_term(&p).unwrap();
        assert!((lead.re - 3.0 * PI / 5.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_problems() {
        let p = SaddleProblem {
            hess0: Matrix2::new(1.0, 0.0, 0.0, -1.0),
            ..gaussian_case(10.0)
        };
        assert_eq!(saddle_leading_term(&p), Err(Error::NotPositiveDefinite));
        let p = SaddleProblem {
            grad0: [1e-3, 0.0],
            ..gaussian_case(10.0)
        };
        assert!(matches!(saddle_leading_term(&p), Err(Error::InvalidArgument(_))));
        let p = gaussian_case(100.0);
        assert!(matches!(
            quadrature_oracle(&p, 0.1),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn odd_perturbation_cancels() {
        let base = SaddleProblem {
            g_imag: Arc::new(|t| Complex64::new(1.0, t[0])),
            g_lipschitz: 1.0,
            g_sup: 2.0,
            ..gaussian_case(1.0)
        };
        for n in [16.0, 64.0, 256.0] {
            let p = base.with_n(n);
            let lead = saddle_leading_term(&p).unwrap();
            let q = quadrature_oracle(&p, fine(&p)).unwrap();
            assert!((q - lead).norm() / lead.norm() < n.powf(-1.5), "n={n}");
        }
    }

    #[test]
    fn quartic_error_halves() {
        let rows = convergence_table(&quartic_case(1.0, 1.0, 1.0), &[64.0, 256.0, 1024.0], 4.0).unwrap();
        for w in rows.windows(2) {
            let ratio = w[0].relative_error / w[1].relative_error;
            assert!((ratio - 2.0).abs() < 0.4, "{ratio}");
        }
        let c: Vec<f64> = rows.iter().map(|r| r.scaled_error).collect();
        assert!((c[2] - c[1]).abs() < (c[1] - c[0]).abs());
    }

    #[test]
    fn amplitude_scaling_is_exact() {
        let p = quartic_case(64.0, 1.0, 1.0);
        let c = Complex64::new(2.5, -0.75);
        let s = p.scaled_amplitude(c);
        let step = fine(&p);
        assert_eq!(saddle_leading_term(&s).unwrap(), c * saddle_leading_term(&p).unwrap());
        let (a, b) = (quadrature_oracle(&s, step).unwrap(), quadrature_oracle(&p, step).unwrap());
        assert!((a - c * b).norm() < 1e-14 * a.norm());
    }

    #[test]
    fn rotation_invariance() {
        let p = SaddleProblem {
            hess0: Matrix2::new(2.0, 0.5, 0.5, 1.0),
            f_imag: None,
            ..gaussian_case(50.0)
        };
        let step = fine(&p);
        let lead = saddle_leading_term(&p).unwrap();
        let quad = quadrature_oracle(&p, step).unwrap();
        for phi in [0.3, 1.1, 2.5] {
            let r = p.rotated(phi);
            assert!((saddle_leading_term(&r).unwrap() - lead).norm() < 1e-9);
            assert!((quadrature_oracle(&r, step).unwrap() - quad).norm() < 1e-9);
        }
    }

    #[test]
    fn pressure_case_identity() {
        let s = Arc::new(Shift::full(2).unwrap());
        let pair = PotentialPair::new(
            Potential::new(s.clone(), 2, vec![1.0, 2f64.sqrt(), 1.2, 0.8]).unwrap(),
            Potential::new(s.clone(), 2, vec![3f64.sqrt(), 1.0, 0.7, 1.4]).unwrap(),
        )
        .unwrap();
        let surface = PressureSurface::new(pair);
        let z = [-0.3, -0.4];
        let x = surface.grad(z).unwrap();
        let ps = pressure_case(&surface, x, z, 50.0).unwrap();
        let lead = saddle_leading_term(&ps.problem).unwrap();
        assert!((lead.re - ps.dual_leading_term()).abs() < 1e-9 * lead.re);
        let resid = legendre_det_identity(&surface, x, z, 1e-4).unwrap();
        assert!(resid.abs() < 1e-4, "{resid}");
    }
}
