//! Exact window counts over periodic words and preimage sets.
//!
//! All counts come from a branch-and-bound depth-first walk. A node is pruned
//! when the interval of reachable ergodic sums, or of the combination
//! `S_n g − m S_n f`, misses every window of the scan. Pruning only ever
//! discards subtrees without leaves in a window, so counts are exact.

use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::PressureSurface;
use crate::error::{Error, Result};
use crate::manhattan::{correlation_number, ManhattanCurve};
use crate::numeric::{fit_line, kahan_sum, KahanSum};
use crate::potential::PotentialPair;
use crate::shift::{Closing, Cylinder, Letter, SampleWord, Shift, WordVisitor};
use crate::thermo::{gibbs_constant, rpf_data, TransferMatrix};

pub const DEFAULT_BUDGET: u64 = 5_000_000_000;
const PRUNE_SLACK: f64 = 1e-9;
const FLUSH_EVERY: u64 = 1 << 14;
const MIN_TASKS: usize = 256;

/// Column names and definitions of the count report.
pub const COUNT_COLUMNS: [(&str, &str); 7] = [
    ("t", "threshold; window (t, t+xi) x (mt, mt+xi)"),
    ("n", "word length"),
    ("M_n", "periodic words of length n in the window"),
    ("W_n_p", "preimages of z_p of length n in the cylinder p in the window"),
    ("M_t", "sum over n of M_n / n"),
    ("alpha_hat_running", "least-squares slope of ln M_t over the complete thresholds so far"),
    ("nodes_visited", "search nodes visited for this n"),
];

/// The open window `(t − ε_f, t + ξ + ε_f) × (mt − ε_g, mt + ξ + ε_g)`.
///
/// `eps` is zero for the plain window; positive values widen it and negative
/// values shrink it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub m: f64,
    pub xi: f64,
    pub t: f64,
    #[serde(default)]
    pub eps: [f64; 2],
}

impl WindowSpec {
    pub fn new(m: f64, xi: f64, t: f64) -> Result<Self> {
        if !(xi > 0.0) {
            return Err(Error::InvalidArgument(format!("window width must be positive, got {xi}")));
        }
        if !(m > 0.0) {
            return Err(Error::InvalidArgument(format!("slope must be positive, got {m}")));
        }
        Ok(WindowSpec {
            m,
            xi,
            t,
            eps: [0.0, 0.0],
        })
    }

    pub fn widened(&self, eps_f: f64, eps_g: f64) -> Self {
        WindowSpec {
            eps: [eps_f, eps_g],
            ..*self
        }
    }

    pub fn at(&self, t: f64) -> Self {
        WindowSpec { t, ..*self }
    }

    #[inline]
    pub fn contains(&self, sf: f64, sg: f64) -> bool {
        let mt = self.m * self.t;
        self.t - self.eps[0] < sf
            && sf < self.t + self.xi + self.eps[0]
            && mt - self.eps[1] < sg
            && sg < mt + self.xi + self.eps[1]
    }

    #[inline]
    fn on_boundary(&self, sf: f64, sg: f64) -> bool {
        let mt = self.m * self.t;
        sf == self.t - self.eps[0]
            || sf == self.t + self.xi + self.eps[0]
            || sg == mt - self.eps[1]
            || sg == mt + self.xi + self.eps[1]
    }

    /// Word lengths that can reach the window: `n` terms with values in
    /// `[min, max]` must be able to land in both coordinate intervals.
    pub fn n_range(&self, pair: &PotentialPair) -> (usize, usize) {
        let (fmin, fmax) = (pair.f.min(), pair.f.max());
        let (gmin, gmax) = (pair.g.min(), pair.g.max());
        let mt = self.m * self.t;
        let lo_f = (self.t - self.eps[0]) / fmax;
        let hi_f = (self.t + self.xi + self.eps[0]) / fmin;
        let lo_g = (mt - self.eps[1]) / gmax;
        let hi_g = (mt + self.xi + self.eps[1]) / gmin;
        let lo = lo_f.max(lo_g).floor().max(1.0) as usize;
        let hi = hi_f.min(hi_g).ceil();
        if hi < 1.0 {
            return (1, 0);
        }
        (lo, hi as usize)
    }
}

/// Shared counters for one counting job.
#[derive(Debug)]
pub struct Budget {
    limit: u64,
    used: AtomicU64,
    abort: AtomicBool,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Budget {
            limit,
            used: AtomicU64::new(0),
            abort: AtomicBool::new(false),
        }
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }

    pub fn exceeded(&self) -> bool {
        self.abort.load(Ordering::Relaxed)
    }

    fn charge(&self, nodes: u64) -> bool {
        let total = self.used.fetch_add(nodes, Ordering::Relaxed) + nodes;
        if total > self.limit {
            self.abort.store(true, Ordering::Relaxed);
        }
        !self.exceeded()
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget::new(DEFAULT_BUDGET)
    }
}

/// Read-only description of one walk: word length, closing, window family.
struct Job<'a> {
    pair: &'a PotentialPair,
    n: usize,
    k: usize,
    /// First `k − 1` letters of the anchor point for preimage walks.
    tail: Option<Vec<Letter>>,
    window: WindowSpec,
    ts: &'a [f64],
    fmin: f64,
    fmax: f64,
    gmin: f64,
    gmax: f64,
    dmin: f64,
    dmax: f64,
    budget: &'a Budget,
}

impl<'a> Job<'a> {
    fn new(
        pair: &'a PotentialPair,
        n: usize,
        tail: Option<Vec<Letter>>,
        window: WindowSpec,
        ts: &'a [f64],
        budget: &'a Budget,
    ) -> Self {
        let m = window.m;
        let basis = pair.f.basis();
        let (mut dmin, mut dmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for w in basis.words() {
            let d = pair.g.value(w) - m * pair.f.value(w);
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        Job {
            pair,
            n,
            k: pair.depth(),
            tail,
            window,
            ts,
            fmin: pair.f.min(),
            fmax: pair.f.max(),
            gmin: pair.g.min(),
            gmax: pair.g.max(),
            dmin,
            dmax,
            budget,
        }
    }

    /// Whether some grid `t` has a window meeting the reachable box.
    fn feasible(&self, sf: f64, sg: f64, d: usize) -> bool {
        let done = (d + 1).saturating_sub(self.k);
        let r = (self.n - done) as f64;
        let w = &self.window;
        let (flo, fhi) = (sf + r * self.fmin, sf + r * self.fmax);
        let (glo, ghi) = (sg + r * self.gmin, sg + r * self.gmax);
        let slack = PRUNE_SLACK * (1.0 + fhi.abs() + ghi.abs());
        // band on S_n g − m S_n f
        let dd = sg - w.m * sf;
        let (dlo, dhi) = (dd + r * self.dmin, dd + r * self.dmax);
        let band_lo = -w.eps[1] - w.m * (w.xi + w.eps[0]);
        let band_hi = w.xi + w.eps[1] + w.m * w.eps[0];
        if dhi <= band_lo - slack || dlo >= band_hi + slack {
            return false;
        }
        let lo = (flo - w.xi - w.eps[0]).max((glo - w.xi - w.eps[1]) / w.m) - slack;
        let hi = (fhi + w.eps[0]).min((ghi + w.eps[1]) / w.m) + slack;
        if lo >= hi {
            return false;
        }
        let j = self.ts.partition_point(|&t| t <= lo);
        j < self.ts.len() && self.ts[j] < hi
    }
}

struct Walker<'j, 'a> {
    job: &'j Job<'a>,
    sums: Vec<(f64, f64)>,
    counts: Vec<u64>,
    nodes: u64,
    unflushed: u64,
    boundary: u64,
    buf: Vec<Letter>,
}

impl<'j, 'a> Walker<'j, 'a> {
    fn new(job: &'j Job<'a>) -> Self {
        Walker {
            job,
            sums: Vec::with_capacity(job.n + 1),
            counts: vec![0; job.ts.len()],
            nodes: 0,
            unflushed: 0,
            boundary: 0,
            buf: Vec::with_capacity(2 * job.k),
        }
    }

    fn flush(&mut self) -> bool {
        let ok = self.job.budget.charge(self.unflushed);
        self.unflushed = 0;
        ok
    }
}

impl WordVisitor for Walker<'_, '_> {
    fn enter(&mut self, word: &[Letter]) -> bool {
        self.nodes += 1;
        self.unflushed += 1;
        if self.unflushed >= FLUSH_EVERY && !self.flush() {
            self.sums.push((0.0, 0.0));
            return false;
        }
        let job = self.job;
        let d = word.len();
        let (mut sf, mut sg) = self.sums.last().copied().unwrap_or((0.0, 0.0));
        if d >= job.k {
            let w = &word[d - job.k..];
            sf += job.pair.f.value(w);
            sg += job.pair.g.value(w);
        }
        self.sums.push((sf, sg));
        job.feasible(sf, sg, d)
    }

    fn exit(&mut self, _word: &[Letter]) {
        self.sums.pop();
    }

    fn leaf(&mut self, word: &[Letter]) {
        let job = self.job;
        let n = job.n;
        let k = job.k;
        let (mut sf, mut sg) = *self.sums.last().unwrap();
        let first = (n + 1).saturating_sub(k);
        for i in first..n {
            self.buf.clear();
            for j in 0..k {
                let idx = i + j;
                let l = if idx < n {
                    word[idx]
                } else {
                    match &job.tail {
                        Some(tail) => tail[idx - n],
                        None => word[idx % n],
                    }
                };
                self.buf.push(l);
            }
            sf += job.pair.f.value(&self.buf);
            sg += job.pair.g.value(&self.buf);
        }
        let w = &job.window;
        let lo = (sf - w.xi - w.eps[0]).max((sg - w.xi - w.eps[1]) / w.m);
        let hi = (sf + w.eps[0]).min((sg + w.eps[1]) / w.m);
        let slack = PRUNE_SLACK * (1.0 + sf.abs() + sg.abs());
        let mut j = job.ts.partition_point(|&t| t <= lo - slack);
        while j < job.ts.len() && job.ts[j] < hi + slack {
            let win = w.at(job.ts[j]);
            if win.contains(sf, sg) {
                self.counts[j] += 1;
            } else if win.on_boundary(sf, sg) {
                self.boundary += 1;
            }
            j += 1;
        }
    }
}

/// Outcome of one walk over all words of length `n`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct WalkCounts {
    counts: Vec<u64>,
    nodes: u64,
    boundary: u64,
}

fn run_walk(shift: &Shift, job: &Job, base_prefix: &[Letter], closing: Closing) -> Result<WalkCounts> {
    let n = job.n;
    if base_prefix.len() > n {
        return Ok(WalkCounts {
            counts: vec![0; job.ts.len()],
            ..Default::default()
        });
    }
    // split into independent subtrees by extending the prefix
    let mut prefixes = vec![base_prefix.to_vec()];
    while prefixes.len() < MIN_TASKS && prefixes[0].len() < n {
        let mut next = Vec::with_capacity(prefixes.len() * shift.alphabet_size());
        for p in &prefixes {
            if p.is_empty() {
                next.extend((0..shift.alphabet_size() as Letter).map(|a| vec![a]));
            } else {
                for &b in shift.successors(*p.last().unwrap()) {
                    let mut q = p.clone();
                    q.push(b);
                    next.push(q);
                }
            }
        }
        prefixes = next;
    }
    let parts: Vec<WalkCounts> = prefixes
        .par_iter()
        .map(|p| {
            let mut walker = Walker::new(job);
            shift.walk(n, p, closing, &mut walker);
            walker.flush();
            WalkCounts {
                counts: walker.counts,
                nodes: walker.nodes,
                boundary: walker.boundary,
            }
        })
        .collect();
    if job.budget.exceeded() {
        return Err(Error::BudgetExceeded {
            budget: job.budget.limit,
        });
    }
    let mut total = WalkCounts {
        counts: vec![0; job.ts.len()],
        ..Default::default()
    };
    for part in parts {
        for (a, b) in total.counts.iter_mut().zip(&part.counts) {
            *a += b;
        }
        total.nodes += part.nodes;
        total.boundary += part.boundary;
    }
    Ok(total)
}

fn check_pair(shift: &Shift, pair: &PotentialPair) -> Result<()> {
    if *shift != **pair.shift() {
        return Err(Error::ShiftMismatch);
    }
    Ok(())
}

/// `#{x ∈ Fix^n : (S_n f, S_n g)(x) ∈ window}`.
pub fn count_fix_window(
    shift: &Shift,
    pair: &PotentialPair,
    spec: &WindowSpec,
    n: usize,
    budget: &Budget,
) -> Result<u64> {
    check_pair(shift, pair)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let ts = [spec.t];
    let job = Job::new(pair, n, None, *spec, &ts, budget);
    Ok(run_walk(shift, &job, &[], Closing::Cyclic)?.counts[0])
}

/// `#{w ∈ p : |w| = n, w z_p admissible, S_n(w z_p) ∈ window}`.
pub fn count_w(
    shift: &Shift,
    pair: &PotentialPair,
    spec: &WindowSpec,
    p: &Cylinder,
    z: &SampleWord,
    n: usize,
    budget: &Budget,
) -> Result<u64> {
    check_pair(shift, pair)?;
    if n < p.depth() {
        return Err(Error::InvalidArgument(format!(
            "n={n} is shorter than the cylinder depth {}",
            p.depth()
        )));
    }
    let ts = [spec.t];
    let tail = anchor_tail(pair, z)?;
    let job = Job::new(pair, n, Some(tail), *spec, &ts, budget);
    Ok(run_walk(shift, &job, &p.prefix, Closing::Anchor(z.letter(0)))?.counts[0])
}

fn anchor_tail(pair: &PotentialPair, z: &SampleWord) -> Result<Vec<Letter>> {
    let k = pair.depth();
    if z.stored_len() < k.saturating_sub(1) {
        return Err(Error::DepthTooShallow {
            need: k - 1,
            have: z.stored_len(),
        });
    }
    Ok(z.letters(k.max(1)))
}

/// `M(t) = Σ_n (1/n) M(n, t)` with its per-`n` breakdown.
pub fn count_m(
    shift: &Shift,
    pair: &PotentialPair,
    spec: &WindowSpec,
    budget: &Budget,
) -> Result<(f64, Vec<(usize, u64)>)> {
    let report = count_scan(shift, pair, spec.m, spec.xi, &[spec.t], budget)?;
    if report.truncated() {
        return Err(Error::BudgetExceeded { budget: budget.limit });
    }
    Ok((report.weighted(0), report.per_n[0].clone()))
}

/// Counts for a grid of thresholds, one walk per word length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub m: f64,
    pub xi: f64,
    /// `"M"` for periodic words, or the cylinder for preimage counts.
    pub label: String,
    pub t: Vec<f64>,
    /// Per `t`: `(n, count)` in increasing `n`.
    pub per_n: Vec<Vec<(usize, u64)>>,
    /// `false` for thresholds whose `n`-range was cut by the node budget.
    pub complete: Vec<bool>,
    pub nodes_by_n: Vec<(usize, u64)>,
    pub boundary_hits: u64,
    pub elapsed_secs: f64,
}

impl CountReport {
    pub fn nodes(&self) -> u64 {
        self.nodes_by_n.iter().map(|x| x.1).sum()
    }

    pub fn truncated(&self) -> bool {
        self.complete.iter().any(|c| !c)
    }

    /// `Σ_n (1/n) count(n)` at threshold index `i`, summed in increasing `n`.
    pub fn weighted(&self, i: usize) -> f64 {
        kahan_sum(self.per_n[i].iter().map(|&(n, c)| c as f64 / n as f64))
    }

    pub fn weighted_all(&self) -> Vec<f64> {
        (0..self.t.len()).map(|i| self.weighted(i)).collect()
    }

    /// Complete `(t, M(t))` pairs.
    pub fn series(&self) -> Vec<(f64, f64)> {
        (0..self.t.len())
            .filter(|&i| self.complete[i])
            .map(|i| (self.t[i], self.weighted(i)))
            .collect()
    }

    /// Rows matching [`COUNT_COLUMNS`]. `w` optionally supplies the matching
    /// preimage report for `W_n_p`.
    pub fn csv_rows(&self, w: Option<&CountReport>) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        let mut seen: Vec<(f64, f64)> = Vec::new();
        for i in 0..self.t.len() {
            let mt = self.weighted(i);
            if self.complete[i] && mt > 0.0 {
                seen.push((self.t[i], mt));
            }
            let running = fit_growth_points(&seen, None, 0.0)
                .map(|f| format!("{:.10}", f.alpha_hat))
                .unwrap_or_default();
            for &(n, c) in &self.per_n[i] {
                let wn = w
                    .and_then(|r| r.per_n.get(i))
                    .and_then(|row| row.iter().find(|x| x.0 == n))
                    .map(|x| x.1.to_string())
                    .unwrap_or_default();
                let nodes = self
                    .nodes_by_n
                    .iter()
                    .find(|x| x.0 == n)
                    .map(|x| x.1)
                    .unwrap_or(0);
                rows.push(vec![
                    self.t[i].to_string(),
                    n.to_string(),
                    c.to_string(),
                    wn,
                    format!("{mt:.12e}"),
                    running.clone(),
                    nodes.to_string(),
                ]);
            }
        }
        rows
    }

    pub fn write_csv<W: Write>(&self, mut out: W, w: Option<&CountReport>) -> Result<()> {
        for (name, def) in COUNT_COLUMNS {
            writeln!(out, "# {name}: {def}")?;
        }
        let names: Vec<&str> = COUNT_COLUMNS.iter().map(|c| c.0).collect();
        writeln!(out, "{}", names.join(","))?;
        for row in self.csv_rows(w) {
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `M(n, t)` for every `t` in `ts` (sorted ascending) and every relevant `n`.
pub fn count_scan(
    shift: &Shift,
    pair: &PotentialPair,
    m: f64,
    xi: f64,
    ts: &[f64],
    budget: &Budget,
) -> Result<CountReport> {
    check_pair(shift, pair)?;
    scan(shift, pair, WindowSpec::new(m, xi, 0.0)?, ts, None, budget, "M".into())
}

/// `W(n, p, t)` for every `t` in `ts` and every relevant `n >= |p|`.
pub fn count_w_scan(
    shift: &Shift,
    pair: &PotentialPair,
    m: f64,
    xi: f64,
    ts: &[f64],
    p: &Cylinder,
    z: &SampleWord,
    budget: &Budget,
) -> Result<CountReport> {
    check_pair(shift, pair)?;
    scan(
        shift,
        pair,
        WindowSpec::new(m, xi, 0.0)?,
        ts,
        Some((p, z)),
        budget,
        p.to_string(),
    )
}

fn scan(
    shift: &Shift,
    pair: &PotentialPair,
    window: WindowSpec,
    ts: &[f64],
    target: Option<(&Cylinder, &SampleWord)>,
    budget: &Budget,
    label: String,
) -> Result<CountReport> {
    if ts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("thresholds must be strictly increasing".into()));
    }
    let start = Instant::now();
    let min_n = target.map(|(p, _)| p.depth()).unwrap_or(1);
    let ranges: Vec<(usize, usize)> = ts
        .iter()
        .map(|&t| {
            let (lo, hi) = window.at(t).n_range(pair);
            (lo.max(min_n), hi)
        })
        .collect();
    let n_lo = ranges.iter().map(|r| r.0).min().unwrap_or(1);
    let n_hi = ranges.iter().map(|r| r.1).max().unwrap_or(0);
    let mut per_n = vec![Vec::new(); ts.len()];
    let mut complete = vec![true; ts.len()];
    let mut nodes_by_n = Vec::new();
    let mut boundary = 0;
    let tail = match target {
        Some((_, z)) => Some(anchor_tail(pair, z)?),
        None => None,
    };
    for n in n_lo..=n_hi {
        let idx: Vec<usize> = (0..ts.len())
            .filter(|&i| ranges[i].0 <= n && n <= ranges[i].1)
            .collect();
        if idx.is_empty() {
            continue;
        }
        // thresholds needing this n form a contiguous run
        let (a, b) = (idx[0], *idx.last().unwrap() + 1);
        let sub = &ts[a..b];
        let job = Job::new(pair, n, tail.clone(), window, sub, budget);
        let result = match target {
            Some((p, z)) => run_walk(shift, &job, &p.prefix, Closing::Anchor(z.letter(0))),
            None => run_walk(shift, &job, &[], Closing::Cyclic),
        };
        match result {
            Ok(wc) => {
                for (j, c) in wc.counts.into_iter().enumerate() {
                    per_n[a + j].push((n, c));
                }
                nodes_by_n.push((n, wc.nodes));
                boundary += wc.boundary;
            }
            Err(Error::BudgetExceeded { .. }) => {
                for i in a..ts.len() {
                    if ranges[i].1 >= n {
                        complete[i] = false;
                    }
                }
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(CountReport {
        m: window.m,
        xi: window.xi,
        label,
        t: ts.to_vec(),
        per_n,
        complete,
        nodes_by_n,
        boundary_hits: boundary,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Reference counts by materializing every word, no pruning.
pub mod exhaustive {
    use super::*;
    use crate::shift::PeriodicWord;

    pub fn fix_window(shift: &Shift, pair: &PotentialPair, spec: &WindowSpec, n: usize) -> u64 {
        shift
            .enumerate_fix(n)
            .iter()
            .filter(|w| spec.contains(pair.f.ergodic_sum(w), pair.g.ergodic_sum(w)))
            .count() as u64
    }

    pub fn preimage_window(
        shift: &Shift,
        pair: &PotentialPair,
        spec: &WindowSpec,
        p: &Cylinder,
        z: &SampleWord,
        n: usize,
    ) -> Result<u64> {
        let mut c = 0;
        for w in shift.enumerate_preimages(z, n, p)? {
            let sf = pair.f.ergodic_sum_preimage(&w, z)?;
            let sg = pair.g.ergodic_sum_preimage(&w, z)?;
            if spec.contains(sf, sg) {
                c += 1;
            }
        }
        Ok(c)
    }

    pub fn periodic_sums(pair: &PotentialPair, w: &PeriodicWord) -> (f64, f64) {
        (pair.f.ergodic_sum(w), pair.g.ergodic_sum(w))
    }
}

/// Number of terms of `S_n` that can differ between a periodic word in `p`
/// and the matching preimage of `z_p`, times the oscillation of each potential.
pub fn sandwich_epsilon(pair: &PotentialPair, cylinder_depth: usize) -> [f64; 2] {
    let differing = pair.depth().saturating_sub(cylinder_depth + 1) as f64;
    [
        differing * (pair.f.max() - pair.f.min()),
        differing * (pair.g.max() - pair.g.min()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub n: usize,
    pub k: usize,
    pub eps: [f64; 2],
    pub periodic: u64,
    pub lower: u64,
    pub upper: u64,
    pub holds: bool,
    /// `ε = 0` and both bounds equal the periodic count.
    pub exact: bool,
}

/// `Σ_p W(n, p, U_{−ε}) <= M(n, U) <= Σ_p W(n, p, U_{+ε})` over `k`-cylinders.
pub fn sandwich_check(
    shift: &Shift,
    pair: &PotentialPair,
    spec: &WindowSpec,
    k: usize,
    n: usize,
    budget: &Budget,
) -> Result<SandwichReport> {
    sandwich_check_with(shift, pair, spec, k, n, sandwich_epsilon(pair, k), budget)
}

pub fn sandwich_check_with(
    shift: &Shift,
    pair: &PotentialPair,
    spec: &WindowSpec,
    k: usize,
    n: usize,
    eps: [f64; 2],
    budget: &Budget,
) -> Result<SandwichReport> {
    if n < k {
        return Err(Error::InvalidArgument(format!("n={n} is below the cylinder depth {k}")));
    }
    let periodic = count_fix_window(shift, pair, spec, n, budget)?;
    let shrunk = spec.widened(-eps[0], -eps[1]);
    let grown = spec.widened(eps[0], eps[1]);
    let (mut lower, mut upper) = (0, 0);
    for c in shift.cylinders(k) {
        let z = shift.pick_sample_word(&c)?;
        if eps == [0.0, 0.0] {
            let w = count_w(shift, pair, spec, &c, &z, n, budget)?;
            lower += w;
            upper += w;
        } else {
            lower += count_w(shift, pair, &shrunk, &c, &z, n, budget)?;
            upper += count_w(shift, pair, &grown, &c, &z, n, budget)?;
        }
    }
    Ok(SandwichReport {
        n,
        k,
        eps,
        periodic,
        lower,
        upper,
        holds: lower <= periodic && periodic <= upper,
        exact: eps == [0.0, 0.0] && lower == periodic && upper == periodic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceReport {
    pub n: usize,
    pub z: [f64; 2],
    /// `Σ_y e^{⟨z, S_n(y)⟩}` over preimages `y = w z_p`, `w ∈ p`.
    pub direct: f64,
    /// `(L^n 1_p)(z_p)` from the transfer matrix of `z₁f + z₂g`.
    pub operator: f64,
    pub relative_residual: f64,
}

/// Enumerated exponential sum over preimages against the transfer-matrix power.
pub fn laplace_fourier_check(
    shift: &Shift,
    pair: &PotentialPair,
    p: &Cylinder,
    z_p: &SampleWord,
    n: usize,
    z: [f64; 2],
) -> Result<LaplaceReport> {
    check_pair(shift, pair)?;
    if n < p.depth() {
        return Err(Error::InvalidArgument("n must be at least the cylinder depth".into()));
    }
    if n > 20 {
        return Err(Error::InvalidArgument("exhaustive preimage sums are limited to n <= 20".into()));
    }
    let direct = laplace_direct(shift, pair, p, z_p, n, z)?;
    let depth = pair.depth().max(p.depth());
    let u = pair.combination(z).refine_depth(depth)?;
    let tm = TransferMatrix::new(&u);
    let basis = u.basis();
    let mut phi: Vec<f64> = basis
        .words()
        .iter()
        .map(|w| if p.contains(w) { 1.0 } else { 0.0 })
        .collect();
    for _ in 0..n {
        phi = tm.apply(&phi);
    }
    let at = basis
        .index_of(&z_p.letters(depth))
        .ok_or_else(|| Error::Inadmissible {
            word: z_p.letters(depth),
        })?;
    let operator = phi[at];
    let scale = direct.abs().max(operator.abs()).max(f64::MIN_POSITIVE);
    Ok(LaplaceReport {
        n,
        z,
        direct,
        operator,
        relative_residual: (direct - operator).abs() / scale,
    })
}

fn laplace_direct(
    shift: &Shift,
    pair: &PotentialPair,
    p: &Cylinder,
    z_p: &SampleWord,
    n: usize,
    z: [f64; 2],
) -> Result<f64> {
    let mut acc = KahanSum::new();
    for w in shift.enumerate_preimages(z_p, n, p)? {
        let sf = pair.f.ergodic_sum_preimage(&w, z_p)?;
        let sg = pair.g.ergodic_sum_preimage(&w, z_p)?;
        acc.add((z[0] * sf + z[1] * sg).exp());
    }
    Ok(acc.value())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsBoundReport {
    pub q_hat: f64,
    pub mu_p: f64,
    pub pressure: f64,
    /// `(n, Ŵ, Q̂ μ(p) e^{nℙ(z)})`
    pub rows: Vec<(usize, f64, f64)>,
    /// Largest `Ŵ / (μ(p) e^{nℙ})`.
    pub max_ratio: f64,
    pub holds: bool,
}

/// `Ŵ(n, p, z) <= Q̂ μ(p) e^{nℙ(z)}` for `n` in `n_range`.
pub fn gibbs_bound_check(
    shift: &Shift,
    pair: &PotentialPair,
    p: &Cylinder,
    z_p: &SampleWord,
    z: [f64; 2],
    n_range: std::ops::RangeInclusive<usize>,
) -> Result<GibbsBoundReport> {
    check_pair(shift, pair)?;
    let u = pair.combination(z);
    let rpf = rpf_data(shift, &u)?;
    let n_max = *n_range.end();
    let q_hat = gibbs_constant(shift, &u, &rpf, n_max.max(u.depth()))?;
    let mu_p = rpf.mu_cylinder(&p.prefix);
    let mut rows = Vec::new();
    let mut max_ratio = 0.0f64;
    let mut holds = true;
    for n in n_range {
        if n < p.depth() {
            continue;
        }
        let w_hat = laplace_direct(shift, pair, p, z_p, n, z)?;
        let base = mu_p * (n as f64 * rpf.pressure).exp();
        let bound = q_hat * base;
        max_ratio = max_ratio.max(w_hat / base);
        holds &= w_hat <= bound * (1.0 + 1e-12);
        rows.push((n, w_hat, bound));
    }
    Ok(GibbsBoundReport {
        q_hat,
        mu_p,
        pressure: rpf.pressure,
        rows,
        max_ratio,
        holds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub alpha_hat: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
    /// Power `β` in the fitted model `ln(t^β M(t)) = c + α t`.
    pub prefactor_power: f64,
}

/// Least-squares slope of `ln M(t) + β ln t` against `t` over `window`
/// (default: the top half of the complete thresholds). `β = 0` is the raw fit;
/// `β = 3/2` removes the polynomial prefactor of the local estimate.
pub fn fit_growth_rate(
    report: &CountReport,
    window: Option<(f64, f64)>,
    prefactor_power: f64,
) -> Result<GrowthFit> {
    fit_growth_points(&report.series(), window, prefactor_power)
}

pub fn fit_growth_points(
    points: &[(f64, f64)],
    window: Option<(f64, f64)>,
    prefactor_power: f64,
) -> Result<GrowthFit> {
    let positive: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1 > 0.0).collect();
    let chosen: Vec<(f64, f64)> = match window {
        Some((lo, hi)) => positive.into_iter().filter(|p| lo <= p.0 && p.0 <= hi).collect(),
        None => {
            let half = positive.len() / 2;
            positive[half..].to_vec()
        }
    };
    if chosen.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "{} usable thresholds, need 5",
            chosen.len()
        )));
    }
    let xs: Vec<f64> = chosen.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = chosen
        .iter()
        .map(|p| {
            let pre = if prefactor_power == 0.0 { 0.0 } else { prefactor_power * p.0.ln() };
            p.1.ln() + pre
        })
        .collect();
    let fit = fit_line(&xs, &ys).ok_or_else(|| Error::InsufficientData("degenerate thresholds".into()))?;
    Ok(GrowthFit {
        alpha_hat: fit.slope,
        stderr: fit.slope_stderr,
        intercept: fit.intercept,
        points: chosen.len(),
        prefactor_power,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub t: f64,
    pub near: f64,
    pub far: f64,
}

impl DeviationRow {
    pub fn far_fraction(&self) -> f64 {
        let total = self.near + self.far;
        if total > 0.0 {
            self.far / total
        } else {
            0.0
        }
    }
}

/// Splits each `Σ_n (1/n) count(n)` by `|n/t − t_m| < ε`.
pub fn deviation_profile(report: &CountReport, t_m: f64, epsilon: f64) -> Vec<DeviationRow> {
    (0..report.t.len())
        .filter(|&i| report.complete[i])
        .map(|i| {
            let t = report.t[i];
            let (mut near, mut far) = (KahanSum::new(), KahanSum::new());
            for &(n, c) in &report.per_n[i] {
                let v = c as f64 / n as f64;
                if (n as f64 / t - t_m).abs() < epsilon {
                    near.add(v);
                } else {
                    far.add(v);
                }
            }
            DeviationRow {
                t,
                near: near.value(),
                far: far.value(),
            }
        })
        .collect()
}

/// `t^β e^{−Ht} M(t)` over the complete thresholds.
pub fn normalized_counts(report: &CountReport, h: f64, power: f64) -> Vec<(f64, f64)> {
    report
        .series()
        .into_iter()
        .map(|(t, v)| (t, t.powf(power) * (-h * t).exp() * v))
        .collect()
}

/// `(e^{aξ} − 1)/a`, equal to `ξ` in the limit `a → 0`.
pub fn window_factor(a: f64, xi: f64) -> f64 {
    if (a * xi).abs() < 1e-8 {
        xi * (1.0 + 0.5 * a * xi)
    } else {
        (a * xi).exp_m1() / a
    }
}

/// Ingredients and value of the local-estimate prediction for `Σ_n (1/n) W(n, p, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalPrediction {
    pub t: f64,
    pub h: f64,
    pub a: f64,
    pub b: f64,
    pub t_m: f64,
    /// `t_m³ x_mᵀ ∇²ℙ*(x_m) x_m`
    pub p_bar: f64,
    /// `h(z_p) ν(p)` for the potential `−a f − b g`.
    pub c_p: f64,
    /// `det ∇²ℙ(z_m)^{-1/2}`, the Gaussian normalization left out of `constant`.
    pub det_factor: f64,
    pub xi: f64,
    pub value: f64,
}

impl LocalPrediction {
    /// Prediction divided by `e^{tH}/t^{3/2}`.
    pub fn constant(&self) -> f64 {
        (2.0 * std::f64::consts::PI * self.p_bar).powf(-0.5)
            * self.c_p
            * window_factor(self.a, self.xi)
            * window_factor(self.b, self.xi)
    }

    pub fn at(&self, t: f64) -> f64 {
        (t * self.h).exp() / t.powf(1.5) * self.constant()
    }

    /// `constant` times the Hessian normalization produced by summing the
    /// per-n local limit over n.
    pub fn constant_with_curvature(&self) -> f64 {
        self.constant() * self.det_factor
    }
}

/// Plug-in evaluation of the local-estimate formula.
pub fn local_estimate_formula(t: f64, h: f64, p_bar: f64, c_p: f64, a: f64, b: f64, xi: f64) -> f64 {
    (t * h).exp() / t.powf(1.5)
        * (2.0 * std::f64::consts::PI * p_bar).powf(-0.5)
        * c_p
        * window_factor(a, xi)
        * window_factor(b, xi)
}

pub fn local_estimate_prediction(
    curve: &ManhattanCurve,
    m: f64,
    p: &Cylinder,
    z_p: &SampleWord,
    xi: f64,
    t: f64,
) -> Result<LocalPrediction> {
    let corr = correlation_number(curve, m)?;
    let surface: &PressureSurface = curve.surface();
    let pair = surface.pair();
    let z_m = [-corr.a, -corr.b];
    let hess = surface.hess(z_m)?;
    let det = hess.determinant();
    let scale = hess.trace().abs().max(f64::MIN_POSITIVE);
    if det <= 1e-10 * scale * scale {
        return Err(Error::DegenerateHessian { z: z_m, det });
    }
    let inv = hess.try_inverse().ok_or(Error::DegenerateHessian { z: z_m, det })?;
    let x = nalgebra::Vector2::new(corr.x_m[0], corr.x_m[1]);
    let p_bar = corr.t_m.powi(3) * (x.transpose() * inv * x)[(0, 0)];
    let u = pair.combination(z_m);
    let rpf = rpf_data(pair.shift(), &u)?;
    let depth = u.depth();
    let hi = u
        .basis()
        .index_of(&z_p.letters(depth))
        .ok_or_else(|| Error::Inadmissible {
            word: z_p.letters(depth),
        })?;
    let c_p = rpf.h[hi] * rpf.nu_cylinder(&p.prefix);
    let value = local_estimate_formula(t, corr.h, p_bar, c_p, corr.a, corr.b, xi);
    Ok(LocalPrediction {
        t,
        h: corr.h,
        a: corr.a,
        b: corr.b,
        t_m: corr.t_m,
        p_bar,
        c_p,
        det_factor: det.powf(-0.5),
        xi,
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manhattan::trace_curve;
    use crate::potential::Potential;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn full(a: usize) -> Arc<Shift> {
        Arc::new(Shift::full(a).unwrap())
    }

    fn constant_pair(s: &Arc<Shift>) -> PotentialPair {
        PotentialPair::new(
            Potential::constant(s.clone(), 1.0).unwrap(),
            Potential::constant(s.clone(), 1.0).unwrap(),
        )
        .unwrap()
    }

    fn standard(s: &Arc<Shift>) -> PotentialPair {
        PotentialPair::new(
            Potential::new(s.clone(), 1, vec![1.0, 2f64.sqrt()]).unwrap(),
            Potential::new(s.clone(), 1, vec![3f64.sqrt(), 1.0]).unwrap(),
        )
        .unwrap()
    }

    fn depth3(s: &Arc<Shift>) -> PotentialPair {
        PotentialPair::new(
            Potential::from_fn(s.clone(), 3, |w| 1.0 + 0.31 * w[0] as f64 + 0.17 * (w[0] * w[2]) as f64 + 0.05 * (w[1] * w[2]) as f64).unwrap(),
            Potential::from_fn(s.clone(), 3, |w| 1.3 - 0.21 * w[1] as f64 + 0.11 * (w[0] * w[1]) as f64).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn constant_window_counts() {
        let s = full(2);
        let pair = constant_pair(&s);
        let b = Budget::default();
        for n in 1..=10 {
            let spec = WindowSpec::new(1.0, 0.5, n as f64 - 0.25).unwrap();
            assert_eq!(count_fix_window(&s, &pair, &spec, n, &b).unwrap(), 1 << n);
            let miss = WindowSpec::new(1.0, 0.5, n as f64 + 0.1).unwrap();
            assert_eq!(count_fix_window(&s, &pair, &miss, n, &b).unwrap(), 0);
        }
        let (m, rows) = count_m(&s, &pair, &WindowSpec::new(1.0, 0.5, 9.75).unwrap(), &b).unwrap();
        assert_eq!(rows.iter().filter(|r| r.1 > 0).count(), 1);
        assert!((m - 1024.0 / 10.0).abs() < 1e-12);
        let (m, _) = count_m(&s, &pair, &WindowSpec::new(1.0, 0.5, -2.0).unwrap(), &b).unwrap();
        assert_eq!(m, 0.0);
    }

    #[test]
    fn standard_pair_matches_exhaustive() {
        let s = full(2);
        let pair = standard(&s);
        let b = Budget::default();
        let curve = trace_curve(Arc::new(PressureSurface::new(pair.clone())), 21).unwrap();
        let (lo, hi) = curve.slope_range();
        let spec = WindowSpec::new(0.5 * (lo + hi), 0.5, 11.5).unwrap();
        assert_eq!(
            count_fix_window(&s, &pair, &spec, 10, &b).unwrap(),
            exhaustive::fix_window(&s, &pair, &spec, 10)
        );
        let spec15 = spec.at(15.0);
        let (m, rows) = count_m(&s, &pair, &spec15, &b).unwrap();
        let (lo_n, hi_n) = spec15.n_range(&pair);
        let oracle = kahan_sum((lo_n..=hi_n).map(|n| exhaustive::fix_window(&s, &pair, &spec15, n) as f64 / n as f64));
        assert_eq!(m, oracle);
        assert!(rows.iter().all(|r| r.0 >= lo_n && r.0 <= hi_n));
        let p = Cylinder::new(&s, vec![0, 1]).unwrap();
        let z = s.pick_sample_word(&p).unwrap();
        let spec12 = spec.at(13.3);
        assert_eq!(
            count_w(&s, &pair, &spec12, &p, &z, 12, &b).unwrap(),
            exhaustive::preimage_window(&s, &pair, &spec12, &p, &z, 12).unwrap()
        );
    }

    #[test]
    fn w_counts_edge_cases() {
        let s = full(2);
        let pair = constant_pair(&s);
        let b = Budget::default();
        let p = Cylinder::new(&s, vec![0]).unwrap();
        let z = s.pick_sample_word(&p).unwrap();
        for n in 1..=9 {
            let hit = WindowSpec::new(1.0, 0.5, n as f64 - 0.25).unwrap();
            assert_eq!(count_w(&s, &pair, &hit, &p, &z, n, &b).unwrap(), 1 << (n - 1));
            let miss = hit.at(n as f64 + 0.3);
            assert_eq!(count_w(&s, &pair, &miss, &p, &z, n, &b).unwrap(), 0);
        }
        let q = Cylinder::new(&s, vec![0, 1, 1]).unwrap();
        let zq = s.pick_sample_word(&q).unwrap();
        assert!(count_w(&s, &pair, &WindowSpec::new(1.0, 0.5, 1.0).unwrap(), &q, &zq, 2, &b).is_err());
        let std = standard(&s);
        let spec = WindowSpec::new(1.1, 0.5, 3.0).unwrap();
        let single = count_w(&s, &std, &spec, &q, &zq, 3, &b).unwrap();
        assert!(single <= 1);
    }

    #[test]
    fn golden_mean_depth_three_matches_exhaustive() {
        let g = Arc::new(Shift::golden_mean());
        let pair = PotentialPair::new(
            Potential::from_fn(g.clone(), 3, |w| 1.0 + 0.4 * w[0] as f64 + 0.13 * w[2] as f64).unwrap(),
            Potential::from_fn(g.clone(), 3, |w| 1.2 - 0.3 * w[1] as f64 + 0.07 * w[0] as f64).unwrap(),
        )
        .unwrap();
        let b = Budget::default();
        for n in 1..=14 {
            for t in [0.7 * n as f64, 0.9 * n as f64, 1.05 * n as f64] {
                let spec = WindowSpec::new(0.95, 0.8, t).unwrap();
                assert_eq!(
                    count_fix_window(&g, &pair, &spec, n, &b).unwrap(),
                    exhaustive::fix_window(&g, &pair, &spec, n),
                    "n={n} t={t}"
                );
            }
        }
    }

    #[test]
    fn scan_matches_single_counts() {
        let s = full(2);
        let pair = standard(&s);
        let b = Budget::default();
        let ts: Vec<f64> = (0..12).map(|i| 8.0 + 0.5 * i as f64).collect();
        let report = count_scan(&s, &pair, 1.11, 0.5, &ts, &b).unwrap();
        assert!(!report.truncated());
        for (i, &t) in ts.iter().enumerate() {
            let (m, _) = count_m(&s, &pair, &WindowSpec::new(1.11, 0.5, t).unwrap(), &b).unwrap();
            assert_eq!(report.weighted(i), m);
        }
        let mut buf = Vec::new();
        report.write_csv(&mut buf, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().any(|l| l == "t,n,M_n,W_n_p,M_t,alpha_hat_running,nodes_visited"));
    }

    #[test]
    fn budget_truncates_scan() {
        let s = full(2);
        let pair = standard(&s);
        let ts: Vec<f64> = (0..10).map(|i| 10.0 + i as f64).collect();
        let b = Budget::new(20_000);
        let report = count_scan(&s, &pair, 1.11, 0.5, &ts, &b).unwrap();
        assert!(report.truncated());
        assert!(report.complete[0]);
        assert!(!report.complete[9]);
        let spec = WindowSpec::new(1.11, 0.5, 30.0).unwrap();
        assert!(matches!(
            count_fix_window(&s, &pair, &spec, 25, &Budget::new(1000)),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn sandwich_examples() {
        let s = full(2);
        let b = Budget::default();
        let pair = standard(&s);
        let spec = WindowSpec::new(1.1, 0.5, 9.4).unwrap();
        let r = sandwich_check(&s, &pair, &spec, 1, 8, &b).unwrap();
        assert_eq!(r.eps, [0.0, 0.0]);
        assert!(r.exact, "{r:?}");
        let c = constant_pair(&s);
        let r = sandwich_check(&s, &c, &WindowSpec::new(1.0, 0.5, 7.75).unwrap(), 2, 8, &b).unwrap();
        assert!(r.exact && r.periodic == 256);
        let r = sandwich_check_with(&s, &pair, &spec, 1, 8, [0.3, 0.3], &b).unwrap();
        assert!(r.holds && r.lower <= r.periodic && r.upper >= r.periodic);
        // depth 3 potentials with 1-cylinders: two terms may differ
        let d3 = depth3(&s);
        let eps = sandwich_epsilon(&d3, 1);
        assert!(eps[0] > 0.0);
        let spec = WindowSpec::new(1.0, 0.6, 10.0).unwrap();
        let r = sandwich_check(&s, &d3, &spec, 1, 9, &b).unwrap();
        assert!(r.holds, "{r:?}");
        let r = sandwich_check(&s, &d3, &spec, 2, 9, &b).unwrap();
        assert!(r.exact, "{r:?}");
    }

    #[test]
    fn laplace_examples() {
        let s = full(2);
        let c = constant_pair(&s);
        let p = Cylinder::new(&s, vec![1]).unwrap();
        let z = s.pick_sample_word(&p).unwrap();
        let r = laplace_fourier_check(&s, &c, &p, &z, 1, [0.0, 0.0]).unwrap();
        assert_eq!(r.direct, 1.0);
        assert!((r.operator - 1.0).abs() < 1e-15);
        let r = laplace_fourier_check(&s, &c, &p, &z, 7, [-0.3, 0.1]).unwrap();
        let expected = (7.0f64 * (-0.3 + 0.1)).exp() * 64.0;
        assert!((r.direct - expected).abs() < 1e-12 * expected);
        assert!(r.relative_residual < 1e-12);
        let d3 = depth3(&s);
        let p2 = Cylinder::new(&s, vec![0, 1]).unwrap();
        let z2 = s.pick_sample_word(&p2).unwrap();
        for n in [2, 5, 11] {
            let r = laplace_fourier_check(&s, &d3, &p2, &z2, n, [-0.4, -0.2]).unwrap();
            assert!(r.relative_residual < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn gibbs_bound_examples() {
        let s = full(2);
        let pair = standard(&s);
        let p = Cylinder::new(&s, vec![0]).unwrap();
        let z = s.pick_sample_word(&p).unwrap();
        let r = gibbs_bound_check(&s, &pair, &p, &z, [-0.4, -0.2], 1..=10).unwrap();
        assert!((r.q_hat - 1.0).abs() < 1e-9);
        assert!(r.max_ratio <= 1.0 + 1e-9);
        assert!(r.holds);
        let g = Arc::new(Shift::golden_mean());
        let gp = PotentialPair::new(
            Potential::new(g.clone(), 1, vec![1.0, 1.6]).unwrap(),
            Potential::new(g.clone(), 1, vec![1.3, 0.9]).unwrap(),
        )
        .unwrap();
        let p = Cylinder::new(&g, vec![1, 0]).unwrap();
        let z = g.pick_sample_word(&p).unwrap();
        let r = gibbs_bound_check(&g, &gp, &p, &z, [-0.5, -0.3], 2..=12).unwrap();
        assert!(r.holds, "{r:?}");
        assert!(r.q_hat > 1.0);
    }

    #[test]
    fn growth_fit_examples() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, (3.0 * i as f64).exp())).collect();
        let fit = fit_growth_points(&pts, Some((0.0, 9.0)), 0.0).unwrap();
        assert!((fit.alpha_hat - 3.0).abs() < 1e-12);
        assert!(fit_growth_points(&pts[..4], Some((0.0, 9.0)), 0.0).is_err());
        let pre: Vec<(f64, f64)> = (1..20).map(|i| (i as f64, (0.7 * i as f64).exp() / (i as f64).powf(1.5))).collect();
        let fit = fit_growth_points(&pre, None, 1.5).unwrap();
        assert!((fit.alpha_hat - 0.7).abs() < 1e-12);
        // constant potentials, ξ > 1: M(t) = 2^n/n at the single n in (t, t+ξ)
        let s = full(2);
        let pair = constant_pair(&s);
        let ts: Vec<f64> = (0..16).map(|i| 4.3 + i as f64).collect();
        let report = count_scan(&s, &pair, 1.0, 1.2, &ts, &Budget::default()).unwrap();
        let fit = fit_growth_rate(&report, None, 0.0).unwrap();
        assert!((fit.alpha_hat - 2f64.ln()).abs() < 0.08, "{}", fit.alpha_hat);
        // t M(t) = 2^n t/n with n = t + 0.7: residual drift 0.7/(t(t + 0.7))
        let fit = fit_growth_rate(&report, None, 1.0).unwrap();
        assert!((fit.alpha_hat - 2f64.ln()).abs() < 4e-3, "{}", fit.alpha_hat);
    }

    #[test]
    fn deviation_examples() {
        let s = full(2);
        let pair = constant_pair(&s);
        let ts: Vec<f64> = (0..6).map(|i| 5.75 + i as f64).collect();
        let report = count_scan(&s, &pair, 1.0, 0.5, &ts, &Budget::default()).unwrap();
        for row in deviation_profile(&report, 1.0, 0.1) {
            assert_eq!(row.far, 0.0);
            assert!(row.near > 0.0);
        }
        for row in deviation_profile(&report, 1.0, 10.0) {
            assert_eq!(row.far, 0.0);
        }
    }

    #[test]
    fn prediction_formula_examples() {
        assert!((window_factor(0.0, 0.7) - 0.7).abs() < 1e-15);
        assert!((window_factor(1e-12, 0.7) - 0.7).abs() < 1e-12);
        assert!((window_factor(0.4, 0.5) - ((0.2f64).exp() - 1.0) / 0.4).abs() < 1e-15);
        let v = local_estimate_formula(3.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5);
        let expected = 3f64.exp() / 3f64.powf(1.5) / (2.0 * std::f64::consts::PI).sqrt() * (0.5f64.exp() - 1.0).powi(2);
        assert!((v - expected).abs() < 1e-14 * expected);
    }

    #[test]
    fn prediction_needs_nondegenerate_hessian() {
        let s = full(2);
        let std = standard(&s);
        let curve = trace_curve(Arc::new(PressureSurface::new(std)), 21).unwrap();
        let p = Cylinder::new(&s, vec![0]).unwrap();
        let z = s.pick_sample_word(&p).unwrap();
        assert!(matches!(
            local_estimate_prediction(&curve, curve.m_star(), &p, &z, 0.5, 20.0),
            Err(Error::DegenerateHessian { .. })
        ));
        let d3 = depth3(&s);
        let curve = trace_curve(Arc::new(PressureSurface::new(d3)), 21).unwrap();
        let (lo, hi) = curve.slope_range();
        let pred = local_estimate_prediction(&curve, 0.5 * (lo + hi), &p, &z, 0.5, 20.0).unwrap();
        assert!(pred.p_bar > 0.0 && pred.c_p > 0.0);
        assert!((pred.at(20.0) - pred.value).abs() < 1e-12 * pred.value);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn pruned_equals_exhaustive(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = full(2);
            let pair = depth3(&s);
            let n = rng.gen_range(1..=11);
            let m = rng.gen_range(0.6..1.6);
            let xi = rng.gen_range(0.2..2.0);
            let t = rng.gen_range(0.6..1.5) * n as f64;
            let spec = WindowSpec::new(m, xi, t).unwrap();
            prop_assert_eq!(
                count_fix_window(&s, &pair, &spec, n, &Budget::default()).unwrap(),
                exhaustive::fix_window(&s, &pair, &spec, n)
            );
        }
    }
}
