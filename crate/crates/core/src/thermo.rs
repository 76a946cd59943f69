//! Transfer matrices of locally constant potentials and their Perron data.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{decreasing_root, kahan_sum};
use crate::potential::Potential;
use crate::shift::{word_to_string, Letter, Shift};

const POWER_TARGET: f64 = 1e-13;
const POWER_ACCEPT: f64 = 1e-12;
const POWER_CAP: usize = 100_000;
const DENSE_GAP_LIMIT: usize = 1024;
const SCHUR_ITERS: usize = 10_000;

/// The transfer operator of a depth-`k` potential `u` acting on depth-`k`
/// test vectors: `(L φ)[q] = Σ_p L[q][p] φ[p]` with `L[q][p] = e^{u(p)}`
/// whenever `p` followed by the last letter of `q` is a preimage word of `q`.
///
/// Weights are stored divided by `e^{scale}` with `scale = max u` so large
/// potentials do not overflow.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    potential: Potential,
    /// `(q, p, weight)` sorted by `q`.
    entries: Vec<(u32, u32, f64)>,
    scale: f64,
}

impl TransferMatrix {
    pub fn new(u: &Potential) -> Self {
        let basis = u.basis();
        let shift = u.shift();
        let k = basis.depth();
        let scale = u.max();
        let mut entries = Vec::new();
        for (qi, q) in basis.words().iter().enumerate() {
            for &a in shift.predecessors(q[0]) {
                let mut p: Vec<Letter> = Vec::with_capacity(k);
                p.push(a);
                p.extend_from_slice(&q[..k - 1]);
                let Some(pi) = basis.index_of(&p) else {
                    continue;
                };
                entries.push((qi as u32, pi as u32, (u.values()[pi] - scale).exp()));
            }
        }
        TransferMatrix {
            potential: u.clone(),
            entries,
            scale,
        }
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn dim(&self) -> usize {
        self.potential.basis().len()
    }

    pub fn depth(&self) -> usize {
        self.potential.depth()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `ln` of the factor stripped from every stored weight.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let c = self.scale.exp();
        self.entries
            .iter()
            .map(move |&(q, p, w)| (q as usize, p as usize, w * c))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (q, p, w) in self.entries() {
            m[(q, p)] = w;
        }
        m
    }

    /// `L φ` with true (unscaled) weights.
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let c = self.scale.exp();
        self.apply_scaled(phi).into_iter().map(|v| v * c).collect()
    }

    /// `φᵀ L` with true weights.
    pub fn apply_transpose(&self, phi: &[f64]) -> Vec<f64> {
        let c = self.scale.exp();
        self.apply_transpose_scaled(phi)
            .into_iter()
            .map(|v| v * c)
            .collect()
    }

    fn apply_scaled(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for &(q, p, w) in &self.entries {
            out[q as usize] += w * phi[p as usize];
        }
        out
    }

    fn apply_transpose_scaled(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for &(q, p, w) in &self.entries {
            out[p as usize] += w * phi[q as usize];
        }
        out
    }

    /// Perron root and vector of the scaled matrix (or its transpose).
    fn perron(&self, transpose: bool) -> Result<(f64, Vec<f64>)> {
        let n = self.dim();
        let mut x = vec![1.0 / n as f64; n];
        let mut best = f64::INFINITY;
        let mut best_pair = (0.0, x.clone());
        for it in 0..POWER_CAP {
            let y = if transpose {
                self.apply_transpose_scaled(&x)
            } else {
                self.apply_scaled(&x)
            };
            let norm = kahan_sum(y.iter().copied());
            let lambda = norm; // x has unit l1 norm and everything is nonnegative
            let xmax = x.iter().fold(0.0f64, |m, v| m.max(*v));
            let resid = y
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - lambda * b).abs())
                .fold(0.0f64, f64::max)
                / (lambda * xmax);
            if resid < best {
                best = resid;
                best_pair = (lambda, x.clone());
            }
            if resid < POWER_TARGET {
                return Ok((lambda, x));
            }
            x = y.into_iter().map(|v| v / norm).collect();
            // stalled at rounding level
            if it > 200 && best < POWER_ACCEPT && it % 64 == 0 && resid >= best {
                return Ok(best_pair);
            }
        }
        if best < POWER_ACCEPT {
            return Ok(best_pair);
        }
        Err(Error::NonConvergence {
            residual: best,
            iterations: POWER_CAP,
        })
    }
}

pub fn transfer_matrix(shift: &Shift, u: &Potential) -> Result<TransferMatrix> {
    if *shift != **u.shift() {
        return Err(Error::ShiftMismatch);
    }
    Ok(TransferMatrix::new(u))
}

/// `P(u) = ln λ` with `λ` the spectral radius of the transfer matrix.
pub fn pressure(shift: &Shift, u: &Potential) -> Result<f64> {
    let tm = transfer_matrix(shift, u)?;
    let (lambda, _) = tm.perron(false)?;
    Ok(lambda.ln() + tm.scale)
}

/// Eigen-data of the transfer matrix.
///
/// `h` is the right eigenvector, `nu` the left eigenvector with total mass one
/// and `mu = h * nu` the equilibrium weights on depth-`k` cylinders.
#[derive(Debug, Clone)]
pub struct RpfData {
    pub pressure: f64,
    pub h: Vec<f64>,
    pub nu: Vec<f64>,
    pub mu: Vec<f64>,
    pub gap: f64,
    potential: Potential,
}

pub fn rpf_data(shift: &Shift, u: &Potential) -> Result<RpfData> {
    let tm = transfer_matrix(shift, u)?;
    rpf_from_matrix(&tm)
}

pub fn rpf_from_matrix(tm: &TransferMatrix) -> Result<RpfData> {
    let (lambda, mut h) = tm.perron(false)?;
    let (_, mut nu) = tm.perron(true)?;
    let mass = kahan_sum(nu.iter().copied());
    nu.iter_mut().for_each(|v| *v /= mass);
    let pair = kahan_sum(h.iter().zip(&nu).map(|(a, b)| a * b));
    h.iter_mut().for_each(|v| *v /= pair);
    let mu: Vec<f64> = h.iter().zip(&nu).map(|(a, b)| a * b).collect();
    let gap = spectral_gap(tm, lambda, &h, &nu);
    Ok(RpfData {
        pressure: lambda.ln() + tm.scale,
        h,
        nu,
        mu,
        gap,
        potential: tm.potential.clone(),
    })
}

/// `|λ₂| / λ` from a dense eigensolve, or for large bases from power
/// iteration on the operator with the Perron part removed.
fn spectral_gap(tm: &TransferMatrix, lambda: f64, h: &[f64], nu: &[f64]) -> f64 {
    let n = tm.dim();
    if n == 1 {
        return 0.0;
    }
    if n <= DENSE_GAP_LIMIT {
        let mut m = DMatrix::zeros(n, n);
        for &(q, p, w) in &tm.entries {
            m[(q as usize, p as usize)] = w / lambda;
        }
        // the unbounded Schur loop can stall on rank-one matrices
        if let Some(schur) = m.try_schur(f64::EPSILON, SCHUR_ITERS) {
            let mut moduli: Vec<f64> = schur.complex_eigenvalues().iter().map(|z| z.norm()).collect();
            moduli.sort_by(|a, b| b.total_cmp(a));
            return moduli[1];
        }
    }
    let mut x: Vec<f64> = (0..n).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5).collect();
    let mut log_norms = Vec::new();
    for _ in 0..2000 {
        let proj = kahan_sum(nu.iter().zip(&x).map(|(a, b)| a * b));
        let mut y = tm.apply_scaled(&x);
        for (yi, hi) in y.iter_mut().zip(h) {
            *yi = *yi / lambda - proj * hi;
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        log_norms.push(norm.ln());
        x = y.into_iter().map(|v| v / norm).collect();
    }
    let tail = &log_norms[1000..];
    (tail.iter().sum::<f64>() / tail.len() as f64).exp()
}

impl RpfData {
    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn depth(&self) -> usize {
        self.potential.depth()
    }

    pub fn lambda(&self) -> f64 {
        self.pressure.exp()
    }

    /// `ν([w])` for an admissible word `w`; zero for inadmissible words.
    pub fn nu_cylinder(&self, w: &[Letter]) -> f64 {
        let k = self.depth();
        let basis = self.potential.basis();
        if w.len() < k {
            return basis.refining(w).into_iter().map(|i| self.nu[i]).sum();
        }
        if !self.potential.shift().is_admissible(w) {
            return 0.0;
        }
        let steps = w.len() - k;
        let last = basis.index_of(&w[steps..]).expect("admissible tail");
        let log_weight = kahan_sum((0..steps).map(|i| self.potential.value(&w[i..i + k])))
            - steps as f64 * self.pressure;
        log_weight.exp() * self.nu[last]
    }

    /// `μ([w]) = ∫_{[w]} h dν`.
    pub fn mu_cylinder(&self, w: &[Letter]) -> f64 {
        let k = self.depth();
        let basis = self.potential.basis();
        if w.len() < k {
            return basis.refining(w).into_iter().map(|i| self.mu[i]).sum();
        }
        match basis.index_of(&w[..k]) {
            Some(first) => self.h[first] * self.nu_cylinder(w),
            None => 0.0,
        }
    }

    /// `∫ v dμ` for a locally constant `v` on the same shift.
    pub fn integrate(&self, v: &Potential) -> f64 {
        if v.depth() <= self.depth() {
            let basis = self.potential.basis();
            kahan_sum(
                basis
                    .words()
                    .iter()
                    .zip(&self.mu)
                    .map(|(w, m)| m * v.value(w)),
            )
        } else {
            let basis = v.basis();
            kahan_sum(
                basis
                    .words()
                    .iter()
                    .zip(v.values())
                    .map(|(w, x)| self.mu_cylinder(w) * x),
            )
        }
    }

    /// Measure-theoretic entropy `P(u) - ∫u dμ`.
    pub fn entropy(&self) -> f64 {
        self.pressure - self.integrate(&self.potential)
    }

    /// Relative residuals `(‖Lh − λh‖, ‖νᵀL − λνᵀ‖, σ-invariance of μ)`.
    pub fn residuals(&self, tm: &TransferMatrix) -> (f64, f64, f64) {
        let lambda = self.lambda();
        let rel = |a: &[f64], b: &[f64]| {
            let top = a.iter().zip(b).map(|(x, y)| (x - lambda * y).abs()).fold(0.0, f64::max);
            let bottom = b.iter().fold(0.0f64, |m, v| m.max(v.abs())) * lambda;
            top / bottom
        };
        let right = rel(&tm.apply(&self.h), &self.h);
        let left = rel(&tm.apply_transpose(&self.nu), &self.nu);
        // μ(q) against the mass of the (k+1)-words a·q
        let shift = self.potential.shift();
        let mut inv = 0.0f64;
        for (qi, q) in self.potential.basis().words().iter().enumerate() {
            let mass: f64 = shift
                .predecessors(q[0])
                .iter()
                .map(|&a| {
                    let mut w = vec![a];
                    w.extend_from_slice(q);
                    self.mu_cylinder(&w)
                })
                .sum();
            inv = inv.max((mass - self.mu[qi]).abs());
        }
        (right, left, inv)
    }

    pub fn report(&self) -> RpfReport {
        RpfReport {
            pressure: self.pressure,
            gap: self.gap,
            depth: self.depth(),
            cylinders: self
                .potential
                .basis()
                .words()
                .iter()
                .map(|w| word_to_string(w))
                .collect(),
            h: self.h.clone(),
            nu: self.nu.clone(),
            mu: self.mu.clone(),
        }
    }
}

/// Serializable summary of [`RpfData`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpfReport {
    pub pressure: f64,
    pub gap: f64,
    pub depth: usize,
    pub cylinders: Vec<String>,
    pub h: Vec<f64>,
    pub nu: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Largest two-sided ratio between `e^{S_n u(x) − nP}` and `μ([p])` over
/// `n`-cylinders `p`, `n <= n_max`, and every point `x ∈ [p]`.
///
/// `S_n u(x)` only sees `x[..n + k − 1]`, so the sup runs over admissible
/// continuations of that length.
pub fn gibbs_constant(shift: &Shift, u: &Potential, rpf: &RpfData, n_max: usize) -> Result<f64> {
    if *shift != **u.shift() {
        return Err(Error::ShiftMismatch);
    }
    let k = u.depth();
    if n_max < k {
        return Err(Error::InvalidArgument(format!(
            "n_max={n_max} is below the potential depth {k}"
        )));
    }
    let mut q_hat = 1.0f64;
    for n in 1..=n_max {
        let mut mu_of = std::collections::HashMap::new();
        for x in shift.admissible_words(n + k - 1) {
            let m = *mu_of
                .entry(x[..n].to_vec())
                .or_insert_with(|| rpf.mu_cylinder(&x[..n]));
            let weight = (u.ergodic_sum_prefix(&x, n) - n as f64 * rpf.pressure).exp();
            q_hat = q_hat.max(weight / m).max(m / weight);
        }
    }
    Ok(q_hat)
}

/// The unique `s` with `P(−s f) = 0`.
pub fn bowen_root(shift: &Shift, f: &Potential) -> Result<f64> {
    if *shift != **f.shift() {
        return Err(Error::ShiftMismatch);
    }
    f.require_positive()?;
    let p0 = pressure(shift, &f.scaled(0.0))?;
    if p0 <= 0.0 {
        return Err(Error::BracketFail(format!("P(0) = {p0} is not positive")));
    }
    let hi = p0 / f.min() * 1.001 + 1e-9;
    decreasing_root(
        |s| {
            let rpf = rpf_data(shift, &f.scaled(-s))?;
            Ok((rpf.pressure, -rpf.integrate(f)))
        },
        0.0,
        hi,
        1e-13,
    )
}
