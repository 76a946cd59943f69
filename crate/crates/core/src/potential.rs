//! Depth-k locally constant potentials.
//!
//! A potential of depth `k` is a table of real values on the admissible
//! `k`-cylinders; its value at a point depends only on the first `k` letters.
//! Transfer operators of such potentials are finite matrices and ergodic sums
//! along periodic words are exact up to rounding.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{is_near_rational, kahan_sum, KahanSum};
use crate::shift::{parse_word, word_to_string, CylinderBasis, Letter, PeriodicWord, SampleWord, Shift};

#[derive(Debug, Clone)]
pub struct Potential {
    shift: Arc<Shift>,
    basis: Arc<CylinderBasis>,
    values: Vec<f64>,
    /// Values indexed by dense cylinder code; NaN on inadmissible codes.
    dense: Vec<f64>,
}

impl PartialEq for Potential {
    fn eq(&self, other: &Self) -> bool {
        same_shift(&self.shift, &other.shift)
            && self.depth() == other.depth()
            && self.values == other.values
    }
}

pub(crate) fn same_shift(a: &Arc<Shift>, b: &Arc<Shift>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl Potential {
    /// `values[i]` is the value on the `i`-th admissible `depth`-cylinder in
    /// lexicographic order.
    pub fn new(shift: Arc<Shift>, depth: usize, values: Vec<f64>) -> Result<Self> {
        let basis = Arc::new(shift.cylinder_basis(depth)?);
        Self::with_basis(shift, basis, values)
    }

    pub fn with_basis(shift: Arc<Shift>, basis: Arc<CylinderBasis>, values: Vec<f64>) -> Result<Self> {
        if values.len() != basis.len() {
            return Err(Error::InvalidArgument(format!(
                "depth-{} table needs {} values, got {}",
                basis.depth(),
                basis.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("potential values must be finite".into()));
        }
        let mut dense = vec![f64::NAN; basis.code_space()];
        for (i, w) in basis.words().iter().enumerate() {
            dense[basis.code(w)] = values[i];
        }
        Ok(Potential {
            shift,
            basis,
            values,
            dense,
        })
    }

    pub fn from_fn(shift: Arc<Shift>, depth: usize, f: impl Fn(&[Letter]) -> f64) -> Result<Self> {
        let basis = Arc::new(shift.cylinder_basis(depth)?);
        let values = basis.words().iter().map(|w| f(w)).collect();
        Self::with_basis(shift, basis, values)
    }

    pub fn constant(shift: Arc<Shift>, c: f64) -> Result<Self> {
        Self::from_fn(shift, 1, |_| c)
    }

    /// Table keyed by cylinder strings such as `"01"`; every admissible
    /// cylinder must be present.
    pub fn from_map(shift: Arc<Shift>, depth: usize, map: &BTreeMap<String, f64>) -> Result<Self> {
        let basis = Arc::new(shift.cylinder_basis(depth)?);
        let mut values = vec![f64::NAN; basis.len()];
        for (key, &v) in map {
            let w = parse_word(key)?;
            let i = basis.index_of(&w).ok_or_else(|| Error::Config {
                field: format!("values.{key}"),
                message: format!("not an admissible {depth}-cylinder"),
            })?;
            values[i] = v;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Config {
                field: "values".into(),
                message: format!("missing cylinder {}", word_to_string(basis.word(i))),
            });
        }
        Self::with_basis(shift, basis, values)
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.basis
            .words()
            .iter()
            .zip(&self.values)
            .map(|(w, &v)| (word_to_string(w), v))
            .collect()
    }

    pub fn shift(&self) -> &Arc<Shift> {
        &self.shift
    }

    pub fn basis(&self) -> &Arc<CylinderBasis> {
        &self.basis
    }

    pub fn depth(&self) -> usize {
        self.basis.depth()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at a point whose first `depth` letters are `word[..depth]`.
    #[inline]
    pub fn value(&self, word: &[Letter]) -> f64 {
        self.dense[self.basis.code(&word[..self.depth()])]
    }

    #[inline]
    pub fn value_at_code(&self, code: usize) -> f64 {
        self.dense[code]
    }

    pub fn dense_values(&self) -> &[f64] {
        &self.dense
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn require_positive(&self) -> Result<()> {
        let min = self.min();
        if min > 0.0 {
            Ok(())
        } else {
            Err(Error::NotPositive { min })
        }
    }

    /// Same function tabulated on the finer `depth`-cylinders.
    pub fn refine_depth(&self, depth: usize) -> Result<Potential> {
        if depth < self.depth() {
            return Err(Error::InvalidArgument(format!(
                "cannot refine depth {} to shallower depth {depth}",
                self.depth()
            )));
        }
        if depth == self.depth() {
            return Ok(self.clone());
        }
        Potential::from_fn(self.shift.clone(), depth, |w| self.value(w))
    }

    /// `a * self + b * other + c`, tabulated at the common depth.
    pub fn combine(&self, a: f64, other: &Potential, b: f64, c: f64) -> Result<Potential> {
        if !same_shift(&self.shift, &other.shift) {
            return Err(Error::ShiftMismatch);
        }
        let depth = self.depth().max(other.depth());
        let basis = if self.depth() == depth {
            self.basis.clone()
        } else {
            other.basis.clone()
        };
        let values = basis
            .words()
            .iter()
            .map(|w| a * self.value(w) + b * other.value(w) + c)
            .collect();
        Potential::with_basis(self.shift.clone(), basis, values)
    }

    pub fn scaled(&self, a: f64) -> Potential {
        self.map_values(|v| a * v)
    }

    pub fn shifted(&self, c: f64) -> Potential {
        self.map_values(|v| v + c)
    }

    fn map_values(&self, f: impl Fn(f64) -> f64) -> Potential {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Potential::with_basis(self.shift.clone(), self.basis.clone(), values)
            .expect("same basis")
    }

    /// `S_n u` along the periodic extension of `word`.
    pub fn ergodic_sum(&self, word: &PeriodicWord) -> f64 {
        let n = word.period();
        let k = self.depth();
        let mut window = vec![0 as Letter; k];
        let mut acc = KahanSum::new();
        for i in 0..n {
            for (j, slot) in window.iter_mut().enumerate() {
                *slot = word.at(i + j);
            }
            acc.add(self.value(&window));
        }
        acc.value()
    }

    /// Checked variant of [`ergodic_sum`](Self::ergodic_sum).
    pub fn ergodic_sum_checked(&self, shift: &Shift, word: &PeriodicWord) -> Result<f64> {
        if *shift != *self.shift {
            return Err(Error::ShiftMismatch);
        }
        Ok(self.ergodic_sum(word))
    }

    /// `S_n u(w z)` for a preimage word `w` of length `n` of the point `z`.
    pub fn ergodic_sum_preimage(&self, w: &[Letter], z: &SampleWord) -> Result<f64> {
        let k = self.depth();
        if z.stored_len() < k.saturating_sub(1) {
            return Err(Error::DepthTooShallow {
                need: k - 1,
                have: z.stored_len(),
            });
        }
        let n = w.len();
        let mut ext: Vec<Letter> = w.to_vec();
        ext.extend(z.letters(k - 1));
        Ok(kahan_sum((0..n).map(|i| self.value(&ext[i..i + k]))))
    }

    /// `S_n u(x)` for a finite prefix `x` of length at least `n + depth - 1`.
    pub fn ergodic_sum_prefix(&self, x: &[Letter], n: usize) -> f64 {
        let k = self.depth();
        assert!(x.len() + 1 >= n + k, "prefix too short for S_n");
        kahan_sum((0..n).map(|i| self.value(&x[i..i + k])))
    }
}

/// `max |f - g|` over common-depth cylinders.
pub fn sup_difference(f: &Potential, g: &Potential) -> Result<f64> {
    let diff = f.combine(1.0, g, -1.0, 0.0)?;
    Ok(diff.values().iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Whether a pair of potentials is known to be independent (no nonzero
/// `a f + b g` is arithmetic).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Independence {
    Assumed,
    VerifiedNonarithmeticWitness,
    Violated,
}

/// A pair `(f, g)` of strictly positive potentials on one shift, tabulated at
/// a common depth.
#[derive(Debug, Clone)]
pub struct PotentialPair {
    pub f: Potential,
    pub g: Potential,
    pub independence: Independence,
}

impl PotentialPair {
    pub fn new(f: Potential, g: Potential) -> Result<Self> {
        if !same_shift(f.shift(), g.shift()) {
            return Err(Error::ShiftMismatch);
        }
        f.require_positive()?;
        g.require_positive()?;
        let depth = f.depth().max(g.depth());
        Ok(PotentialPair {
            f: f.refine_depth(depth)?,
            g: g.refine_depth(depth)?,
            independence: Independence::Assumed,
        })
    }

    pub fn shift(&self) -> &Arc<Shift> {
        self.f.shift()
    }

    pub fn depth(&self) -> usize {
        self.f.depth()
    }

    pub fn swapped(&self) -> PotentialPair {
        PotentialPair {
            f: self.g.clone(),
            g: self.f.clone(),
            independence: self.independence,
        }
    }

    /// `z1 f + z2 g`.
    pub fn combination(&self, z: [f64; 2]) -> Potential {
        self.f.combine(z[0], &self.g, z[1], 0.0).expect("same shift and depth")
    }

    pub fn sup_difference(&self) -> f64 {
        sup_difference(&self.f, &self.g).expect("same shift")
    }

    /// Orbit-sum vectors `(S_n f, S_n g)` over `Fix^n`, `n <= n_max`.
    pub fn orbit_sums(&self, n_max: usize) -> Vec<[f64; 2]> {
        let shift = self.shift();
        (1..=n_max)
            .flat_map(|n| shift.enumerate_fix(n))
            .map(|w| [self.f.ergodic_sum(&w), self.g.ergodic_sum(&w)])
            .collect()
    }

    /// If `S_n g = c S_n f` on every orbit up to `n_max`, returns `c`.
    pub fn proportionality(&self, n_max: usize) -> Option<f64> {
        let sums = self.orbit_sums(n_max);
        let c = sums[0][1] / sums[0][0];
        sums.iter()
            .all(|v| (v[1] - c * v[0]).abs() <= 1e-10 * (1.0 + v[1].abs()))
            .then_some(c)
    }

    pub fn with_witness(mut self, n_max: usize) -> Result<Self> {
        self.independence = arithmetic_witness(&self, n_max)?;
        Ok(self)
    }
}

/// Heuristic classification of the pair's independence from orbit sums.
///
/// The vectors `v = (S_n f, S_n g)` over `Fix^n` generate a subgroup of
/// `R^2`. If they are all collinear, or all lie in the rational span of two of
/// them (a rank-2 lattice), some nonzero `a f + b g` has periodic sums in a
/// discrete group `cZ` and the pair is `Violated`. If a third vector has an
/// irrational coordinate in the basis of two others, the group is dense in a
/// direction and we report a witness. Otherwise `Assumed`.
pub fn arithmetic_witness(pair: &PotentialPair, n_max: usize) -> Result<Independence> {
    if n_max < 2 {
        return Err(Error::InvalidArgument("n_max must be >= 2".into()));
    }
    const MAX_DEN: u64 = 1000;
    const TOL: f64 = 1e-9;
    let sums = pair.orbit_sums(n_max);
    let scale = sums
        .iter()
        .map(|v| v[0].abs().max(v[1].abs()))
        .fold(0.0, f64::max);
    let cross = |a: &[f64; 2], b: &[f64; 2]| a[0] * b[1] - a[1] * b[0];
    let e1 = sums[0];
    let Some(e2) = sums
        .iter()
        .copied()
        .find(|v| cross(&e1, v).abs() > 1e-9 * scale * scale)
    else {
        // every orbit vector is parallel to e1: (e1_g, -e1_f) annihilates all sums
        return Ok(Independence::Violated);
    };
    let det = cross(&e1, &e2);
    let mut all_rational = true;
    for v in &sums {
        let alpha = cross(v, &e2) / det;
        let beta = cross(&e1, v) / det;
        let rational = is_near_rational(alpha, MAX_DEN, TOL * (1.0 + alpha.abs()))
            && is_near_rational(beta, MAX_DEN, TOL * (1.0 + beta.abs()));
        if !rational {
            all_rational = false;
            let (pa, qa) = crate::numeric::rational_approx(alpha, MAX_DEN);
            let (pb, qb) = crate::numeric::rational_approx(beta, MAX_DEN);
            let far_a = (alpha - pa as f64 / qa as f64).abs() > 1e3 * TOL;
            let far_b = (beta - pb as f64 / qb as f64).abs() > 1e3 * TOL;
            if far_a || far_b {
                return Ok(Independence::VerifiedNonarithmeticWitness);
            }
        }
    }
    Ok(if all_rational {
        Independence::Violated
    } else {
        Independence::Assumed
    })
}

/// Value rule `a -> S(f, a)` for `a = 1..=N` on truncations of the countable
/// full shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum TruncationRule {
    /// `scale * ln(a + offset)`
    Log { scale: f64, offset: f64 },
    /// `scale * a + offset`
    Linear { scale: f64, offset: f64 },
    /// Explicit values for `a = 1, 2, ...`.
    Table { values: Vec<f64> },
}

impl TruncationRule {
    pub fn value(&self, a: usize) -> f64 {
        let af = a as f64;
        match self {
            TruncationRule::Log { scale, offset } => scale * (af + offset).ln(),
            TruncationRule::Linear { scale, offset } => scale * af + offset,
            TruncationRule::Table { values } => values[a - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationFamily {
    pub rule: TruncationRule,
    pub n_max: usize,
}

impl TruncationFamily {
    pub fn new(rule: TruncationRule, n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::InvalidArgument("n_max must be positive".into()));
        }
        if let TruncationRule::Table { values } = &rule {
            if values.len() < n_max {
                return Err(Error::InvalidArgument("table shorter than n_max".into()));
            }
        }
        Ok(TruncationFamily { rule, n_max })
    }

    pub fn sup_value(&self, a: usize) -> f64 {
        self.rule.value(a)
    }

    /// Depth-1 potential on the truncation `{1..N}` of the full shift.
    pub fn potential(&self, n: usize) -> Result<Potential> {
        if n == 0 || n > self.n_max {
            return Err(Error::InvalidArgument(format!("N={n} outside 1..={}", self.n_max)));
        }
        let shift = Arc::new(Shift::full_truncation(n)?);
        Potential::from_fn(shift, 1, |w| self.rule.value(w[0] as usize + 1))
    }
}

/// Partial sum `sum_{a=1}^{N} exp(-s S(f,a))`, compensated, in increasing `a`.
pub fn entropy_gap_series(fam: &TruncationFamily, s: f64, n: usize) -> Result<f64> {
    if s <= 0.0 {
        return Err(Error::InvalidArgument("s must be positive".into()));
    }
    if n > fam.n_max {
        return Err(Error::InvalidArgument(format!("N={n} exceeds n_max={}", fam.n_max)));
    }
    Ok(series_range(&fam.rule, s, 1, n))
}

fn series_range(rule: &TruncationRule, s: f64, from: usize, to: usize) -> f64 {
    kahan_sum((from..=to).map(|a| (-s * rule.value(a)).exp()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalExponent {
    pub d_hat: f64,
    /// Set when the series converges for every tested `s > 0` (boundary at 0).
    pub converges_for_all: bool,
    /// `(s, divergence slope)` pairs visited by the bisection.
    pub diagnostics: Vec<(f64, f64)>,
}

/// Growth slope of the increments of the partial sums: the least-squares slope
/// of `ln(ΔZ_j / Δ ln N_j)` against `ln N_j`. It is `1 - p` for terms decaying
/// like `a^{-p}`, so the series diverges iff the slope is `>= 0`.
fn divergence_slope(rule: &TruncationRule, s: f64, grid: &[usize]) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for w in grid.windows(2) {
        let inc = series_range(rule, s, w[0] + 1, w[1]);
        if inc <= 0.0 || !inc.is_finite() {
            return f64::NEG_INFINITY;
        }
        let dlog = (w[1] as f64).ln() - (w[0] as f64).ln();
        xs.push(0.5 * ((w[0] as f64).ln() + (w[1] as f64).ln()));
        ys.push((inc / dlog).ln());
    }
    crate::numeric::fit_line(&xs, &ys)
        .map(|fit| fit.slope)
        .unwrap_or(f64::NAN)
}

/// Boundary between numerically divergent and convergent partial sums,
/// located by bisection on the divergence slope over `n_grid`.
pub fn estimate_critical_exponent(fam: &TruncationFamily, n_grid: &[usize]) -> Result<CriticalExponent> {
    if n_grid.len() < 3 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "N grid must be strictly increasing with at least 3 values".into(),
        ));
    }
    if *n_grid.last().unwrap() > fam.n_max {
        return Err(Error::InvalidArgument("N grid exceeds n_max".into()));
    }
    const CONVERGE_ALL: f64 = 1e-2;
    let mut diagnostics = Vec::new();
    let mut slope = |s: f64| {
        let d = divergence_slope(&fam.rule, s, n_grid);
        diagnostics.push((s, d));
        d
    };
    let mut lo = 1e-9;
    if slope(lo) < 0.0 {
        return Ok(CriticalExponent {
            d_hat: 0.0,
            converges_for_all: true,
            diagnostics,
        });
    }
    let mut hi = 1.0;
    while slope(hi) >= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Inconclusive(
                "partial sums look divergent for every tested s".into(),
            ));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let d = slope(mid);
        if d.is_nan() {
            return Err(Error::Inconclusive(format!("slope undefined at s={mid}")));
        }
        if d >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let d_hat = 0.5 * (lo + hi);
    Ok(CriticalExponent {
        d_hat,
        converges_for_all: d_hat < CONVERGE_ALL,
        diagnostics,
    })
}

/// Text form of a potential: explicit table or a truncation rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<TruncationRule>,
    /// Truncation size when `rule` is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl PotentialSpec {
    pub fn from_potential(p: &Potential) -> Self {
        PotentialSpec {
            depth: Some(p.depth()),
            values: Some(p.to_map()),
            rule: None,
            n: None,
        }
    }

    /// Builds the potential on `shift` (tables) or on its own truncation (rules).
    pub fn build(&self, shift: Option<Arc<Shift>>) -> Result<Potential> {
        match (&self.values, &self.rule) {
            (Some(values), None) => {
                let shift = shift.ok_or_else(|| Error::Config {
                    field: "shift".into(),
                    message: "a tabulated potential needs a shift".into(),
                })?;
                Potential::from_map(shift, self.depth.unwrap_or(1), values)
            }
            (None, Some(rule)) => {
                let n = self.n.ok_or_else(|| Error::Config {
                    field: "n".into(),
                    message: "a rule-based potential needs a truncation size".into(),
                })?;
                let fam = TruncationFamily::new(rule.clone(), n)?;
                let pot = fam.potential(n)?;
                match shift {
                    Some(s) if *s == **pot.shift() => Potential::with_basis(s, pot.basis().clone(), pot.values().to_vec()),
                    _ => Ok(pot),
                }
            }
            _ => Err(Error::Config {
                field: "potential".into(),
                message: "exactly one of `values` or `rule` must be given".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn full2() -> Arc<Shift> {
        Arc::new(Shift::full(2).unwrap())
    }

    fn standard_pair() -> PotentialPair {
        let s = full2();
        let f = Potential::new(s.clone(), 1, vec![1.0, 2f64.sqrt()]).unwrap();
        let g = Potential::new(s, 1, vec![3f64.sqrt(), 1.0]).unwrap();
        PotentialPair::new(f, g).unwrap()
    }

    fn pw(s: &Shift, letters: &[Letter]) -> PeriodicWord {
        PeriodicWord::new(s, letters.to_vec()).unwrap()
    }

    #[test]
    fn ergodic_sum_examples() {
        let s = full2();
        let c = Potential::constant(s.clone(), 0.7).unwrap();
        assert!((c.ergodic_sum(&pw(&s, &[0, 1, 1, 0, 1])) - 3.5).abs() < 1e-15);
        let f = Potential::new(s.clone(), 1, vec![1.0, 2f64.sqrt()]).unwrap();
        assert!((f.ergodic_sum(&pw(&s, &[0, 1, 0])) - (2.0 + 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn ergodic_sum_depth_two_matches_scalar_loop() {
        let gm = Arc::new(Shift::golden_mean());
        // cylinders 00, 01, 10
        let u = Potential::new(gm.clone(), 2, vec![0.3, 1.7, -0.4]).unwrap();
        let w = pw(&gm, &[0, 1, 0, 0]);
        // independent scalar loop with explicit wrap-around
        let letters = [0usize, 1, 0, 0];
        let table = |a: usize, b: usize| match (a, b) {
            (0, 0) => 0.3,
            (0, 1) => 1.7,
            (1, 0) => -0.4,
            _ => unreachable!(),
        };
        let mut expected = 0.0;
        for i in 0..4 {
            expected += table(letters[i], letters[(i + 1) % 4]);
        }
        assert!((u.ergodic_sum(&w) - expected).abs() < 1e-15);
        // n smaller than depth: the word repeats
        let u3 = Potential::from_fn(gm.clone(), 3, |w| (w[0] * 4 + w[1] * 2 + w[2]) as f64).unwrap();
        let one = pw(&gm, &[0]);
        assert_eq!(u3.ergodic_sum(&one), 0.0);
        let two = pw(&gm, &[0, 1]);
        // windows 010 (=2) and 101 (=5)
        assert_eq!(u3.ergodic_sum(&two), 7.0);
    }

    #[test]
    fn refine_examples() {
        let s = full2();
        let f = Potential::new(s.clone(), 1, vec![1.0, 2f64.sqrt()]).unwrap();
        let r = f.refine_depth(2).unwrap();
        assert_eq!(r.values(), &[1.0, 1.0, 2f64.sqrt(), 2f64.sqrt()]);
        assert_eq!(f.refine_depth(1).unwrap(), f);
        assert!(f.refine_depth(0).is_err());
        let g = Potential::new(s, 2, vec![1.0; 4]).unwrap();
        assert!(g.refine_depth(1).is_err());
    }

    #[test]
    fn refine_preserves_sums_on_random_words() {
        use rand::{Rng, SeedableRng};
        let gm = Arc::new(Shift::golden_mean());
        let u = Potential::new(gm.clone(), 2, vec![0.31, -1.2, 2.5]).unwrap();
        let r = u.refine_depth(4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let n = rng.gen_range(1..=14);
            let words = gm.enumerate_fix(n);
            let w = &words[rng.gen_range(0..words.len())];
            assert!((u.ergodic_sum(w) - r.ergodic_sum(w)).abs() < 1e-12);
        }
    }

    #[test]
    fn sup_difference_examples() {
        let pair = standard_pair();
        assert_eq!(sup_difference(&pair.f, &pair.f).unwrap(), 0.0);
        let expected = 3f64.sqrt() - 1.0;
        assert!((pair.sup_difference() - expected).abs() < 1e-15);
        let rf = pair.f.refine_depth(3).unwrap();
        assert!((sup_difference(&rf, &pair.g).unwrap() - expected).abs() < 1e-15);
        let other = Potential::constant(Arc::new(Shift::golden_mean()), 1.0).unwrap();
        assert_eq!(sup_difference(&pair.f, &other), Err(Error::ShiftMismatch));
    }

    #[test]
    fn pair_requires_positive() {
        let s = full2();
        let f = Potential::new(s.clone(), 1, vec![1.0, -0.5]).unwrap();
        let g = Potential::constant(s, 1.0).unwrap();
        assert!(matches!(PotentialPair::new(f, g), Err(Error::NotPositive { .. })));
    }

    #[test]
    fn zeta_series_oracle() {
        // sum_{a>=1} (a+1)^{-2} = pi^2/6 - 1; tail beyond N is ~ 1/(N+1)
        let fam = TruncationFamily::new(TruncationRule::Log { scale: 2.0, offset: 1.0 }, 200_000).unwrap();
        let target = std::f64::consts::PI.powi(2) / 6.0 - 1.0;
        let mut prev = 0.0;
        for n in [10usize, 1000, 200_000] {
            let z = entropy_gap_series(&fam, 1.0, n).unwrap();
            assert!(z > prev);
            prev = z;
            // Euler-Maclaurin tail: 1/(N+1) - 1/(2(N+1)^2) + ...
            let tail = 1.0 / (n as f64 + 1.5);
            assert!((z + tail - target).abs() < 1.0 / (n as f64).powi(3) + 1e-13, "n={n}");
        }
    }

    #[test]
    fn series_small_cases() {
        let fam = TruncationFamily::new(TruncationRule::Linear { scale: 1.0, offset: 0.5 }, 10).unwrap();
        assert!((entropy_gap_series(&fam, 0.8, 1).unwrap() - (-0.8f64 * 1.5).exp()).abs() < 1e-16);
        for a in 1..=10 {
            let base = (-fam.sup_value(a)).exp();
            let doubled = (-2.0 * fam.sup_value(a)).exp();
            assert!((doubled - base * base).abs() < 1e-16);
        }
        assert!(entropy_gap_series(&fam, 0.0, 3).is_err());
        assert!(entropy_gap_series(&fam, 1.0, 11).is_err());
    }

    #[test]
    fn series_monotone() {
        let fam = TruncationFamily::new(TruncationRule::Log { scale: 2.0, offset: 1.0 }, 500).unwrap();
        for s in [0.3, 0.5, 1.1] {
            let mut prev = 0.0;
            for n in (1..=500).step_by(37) {
                let z = entropy_gap_series(&fam, s, n).unwrap();
                assert!(z >= prev);
                prev = z;
                assert!(entropy_gap_series(&fam, s + 0.1, n).unwrap() <= z);
            }
        }
    }

    #[test]
    fn critical_exponent_examples() {
        let grid = [1_000usize, 4_000, 16_000, 64_000, 256_000];
        let zeta2 = TruncationFamily::new(TruncationRule::Log { scale: 2.0, offset: 1.0 }, 256_000).unwrap();
        let d = estimate_critical_exponent(&zeta2, &grid).unwrap();
        assert!((d.d_hat - 0.5).abs() < 0.05, "{}", d.d_hat);
        assert!(!d.converges_for_all);
        let harmonic = TruncationFamily::new(TruncationRule::Log { scale: 1.0, offset: 1.0 }, 256_000).unwrap();
        let d = estimate_critical_exponent(&harmonic, &grid).unwrap();
        assert!((d.d_hat - 1.0).abs() < 0.05, "{}", d.d_hat);
        let geometric = TruncationFamily::new(TruncationRule::Linear { scale: 1.0, offset: 0.0 }, 256_000).unwrap();
        let d = estimate_critical_exponent(&geometric, &grid).unwrap();
        assert!(d.d_hat < 0.01, "{}", d.d_hat);
        assert!(d.converges_for_all);
        assert!(estimate_critical_exponent(&zeta2, &[10, 20]).is_err());
    }

    #[test]
    fn witness_examples() {
        let pair = standard_pair();
        // f, g depth-1 on two letters: a f + b g = 1 is solvable, so arithmetic.
        assert_eq!(arithmetic_witness(&pair, 6).unwrap(), Independence::Violated);
        let same = PotentialPair::new(pair.f.clone(), pair.f.clone()).unwrap();
        assert_eq!(arithmetic_witness(&same, 6).unwrap(), Independence::Violated);
        let s = full2();
        let fi = Potential::new(s.clone(), 1, vec![1.0, 3.0]).unwrap();
        let gi = Potential::new(s.clone(), 1, vec![2.0, 1.0]).unwrap();
        let ints = PotentialPair::new(fi, gi).unwrap();
        assert_eq!(arithmetic_witness(&ints, 6).unwrap(), Independence::Violated);
        // depth-2 pair with three independent loop directions
        let f2 = Potential::new(s.clone(), 2, vec![1.0, 2f64.sqrt(), 2f64.sqrt(), 3f64.sqrt()]).unwrap();
        let g2 = Potential::new(s, 2, vec![3f64.sqrt(), 1.2, 1.2, 1.0]).unwrap();
        let indep = PotentialPair::new(f2, g2).unwrap();
        assert_eq!(
            arithmetic_witness(&indep, 6).unwrap(),
            Independence::VerifiedNonarithmeticWitness
        );
        assert!(arithmetic_witness(&indep, 1).is_err());
    }

    #[test]
    fn proportional_pairs() {
        let pair = standard_pair();
        let scaled = PotentialPair::new(pair.f.clone(), pair.f.scaled(1.7)).unwrap();
        assert!((scaled.proportionality(6).unwrap() - 1.7).abs() < 1e-12);
        assert!(pair.proportionality(6).is_none());
    }

    #[test]
    fn spec_round_trip() {
        let pair = standard_pair();
        let spec = PotentialSpec::from_potential(&pair.g);
        let text = toml::to_string(&spec).unwrap();
        let back: PotentialSpec = toml::from_str(&text).unwrap();
        assert_eq!(back.build(Some(pair.shift().clone())).unwrap(), pair.g);
        let rule: PotentialSpec = toml::from_str("n = 8\n[rule]\nname = \"log\"\nscale = 2.0\noffset = 1.0\n").unwrap();
        let p = rule.build(None).unwrap();
        assert_eq!(p.shift().alphabet_size(), 8);
        assert!((p.values()[0] - 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    fn arb_word(n: usize) -> impl Strategy<Value = Vec<Letter>> {
        proptest::collection::vec(0u16..2, n)
    }

    proptest! {
        #[test]
        fn sums_are_rotation_invariant(w in (1usize..16).prop_flat_map(arb_word), r in 0usize..16) {
            let s = full2();
            let u = Potential::new(s.clone(), 3, (0..8).map(|i| (i as f64).sqrt() - 1.1).collect()).unwrap();
            let word = PeriodicWord::new(&s, w).unwrap();
            let a = u.ergodic_sum(&word);
            let b = u.ergodic_sum(&word.rotate(r));
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn sums_are_linear_and_bounded(w in (1usize..20).prop_flat_map(arb_word), c in -3.0f64..3.0) {
            let pair = standard_pair();
            let s = pair.shift().clone();
            let word = PeriodicWord::new(&s, w).unwrap();
            let n = word.period() as f64;
            let sf = pair.f.ergodic_sum(&word);
            let sg = pair.g.ergodic_sum(&word);
            let sum = pair.f.combine(1.0, &pair.g, 1.0, 0.0).unwrap().ergodic_sum(&word);
            prop_assert!((sum - sf - sg).abs() < 1e-12);
            prop_assert!((pair.f.scaled(c).ergodic_sum(&word) - c * sf).abs() < 1e-12);
            prop_assert!(pair.f.min() * n <= sf + 1e-12 && sf <= pair.f.max() * n + 1e-12);
        }
    }
}
