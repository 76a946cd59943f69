//! Finite (or truncated countable) one-sided Markov shifts.
//!
//! A shift is an alphabet `0..A` together with a 0/1 transition matrix `T`;
//! a word `x_0 x_1 ...` is admissible when `T[x_i][x_{i+1}] = 1` for every
//! consecutive pair. Countable alphabets are only ever handled through finite
//! truncations, so everything here is a finite directed graph.
//!
//! All enumerations are lexicographic. Enumeration over words is exposed
//! through [`WordVisitor`], which lets callers carry running state (ergodic
//! sums, codes) down the search tree and prune subtrees, and through
//! prefix-restricted entry points so a caller can split the lexicographic
//! range into disjoint sub-ranges for parallel workers.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Letter = u16;

/// Largest dense cylinder table we are willing to allocate.
const MAX_DENSE_CODES: usize = 1 << 24;

/// Serialized form of a shift: alphabet size, row-major 0/1 transitions and
/// optional human-readable labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub alphabet_size: usize,
    pub transitions: Vec<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shift {
    alphabet_size: usize,
    transitions: Vec<bool>,
    successors: Vec<Vec<Letter>>,
    predecessors: Vec<Vec<Letter>>,
    primitivity_index: usize,
    labels: Option<Vec<String>>,
}

impl Shift {
    /// Validates `transitions` and computes the primitivity index.
    pub fn new(alphabet_size: usize, transitions: &[Vec<bool>]) -> Result<Self> {
        if alphabet_size == 0 {
            return Err(Error::EmptyAlphabet);
        }
        if alphabet_size > Letter::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "alphabet size {alphabet_size} exceeds {}",
                Letter::MAX
            )));
        }
        if transitions.len() != alphabet_size {
            return Err(Error::NotSquare {
                expected: alphabet_size,
                row: transitions.len(),
                found: transitions.len(),
            });
        }
        for (row, r) in transitions.iter().enumerate() {
            if r.len() != alphabet_size {
                return Err(Error::NotSquare {
                    expected: alphabet_size,
                    row,
                    found: r.len(),
                });
            }
        }
        let a = alphabet_size;
        let flat: Vec<bool> = transitions.iter().flatten().copied().collect();
        let mut successors = vec![Vec::new(); a];
        let mut predecessors = vec![Vec::new(); a];
        for i in 0..a {
            for j in 0..a {
                if flat[i * a + j] {
                    successors[i].push(j as Letter);
                    predecessors[j].push(i as Letter);
                }
            }
        }
        for letter in 0..a {
            if successors[letter].is_empty() {
                return Err(Error::EmptyRowOrColumn {
                    letter,
                    direction: "successor",
                });
            }
            if predecessors[letter].is_empty() {
                return Err(Error::EmptyRowOrColumn {
                    letter,
                    direction: "predecessor",
                });
            }
        }
        let primitivity_index = primitivity_index(a, &flat).ok_or(Error::NotMixing { bound: a * a })?;
        Ok(Shift {
            alphabet_size: a,
            transitions: flat,
            successors,
            predecessors,
            primitivity_index,
            labels: None,
        })
    }

    pub fn from_spec(spec: &ShiftSpec) -> Result<Self> {
        let rows: Vec<Vec<bool>> = spec
            .transitions
            .iter()
            .map(|r| r.iter().map(|&v| v != 0).collect())
            .collect();
        let mut shift = Shift::new(spec.alphabet_size, &rows)?;
        if let Some(labels) = &spec.labels {
            if labels.len() != spec.alphabet_size {
                return Err(Error::Config {
                    field: "labels".into(),
                    message: format!(
                        "expected {} labels, found {}",
                        spec.alphabet_size,
                        labels.len()
                    ),
                });
            }
            shift.labels = Some(labels.clone());
        }
        Ok(shift)
    }

    pub fn to_spec(&self) -> ShiftSpec {
        let a = self.alphabet_size;
        ShiftSpec {
            alphabet_size: a,
            transitions: (0..a)
                .map(|i| (0..a).map(|j| self.transitions[i * a + j] as u8).collect())
                .collect(),
            labels: self.labels.clone(),
        }
    }

    /// Full shift on `a` letters.
    pub fn full(a: usize) -> Result<Self> {
        Shift::new(a, &vec![vec![true; a]; a])
    }

    /// Golden-mean shift: letters {0,1}, the word `11` forbidden.
    pub fn golden_mean() -> Self {
        Shift::new(2, &[vec![true, true], vec![true, false]]).expect("golden mean is mixing")
    }

    /// Truncation `{1..N}` of the countable full shift, labelled `1..=N`.
    pub fn full_truncation(n: usize) -> Result<Self> {
        let mut s = Shift::full(n)?;
        s.labels = Some((1..=n).map(|i| i.to_string()).collect());
        Ok(s)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.alphabet_size {
            return Err(Error::InvalidArgument("label count mismatch".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn primitivity_index(&self) -> usize {
        self.primitivity_index
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// BIP witness set; for a finite alphabet this is the whole alphabet.
    pub fn bip_witness(&self) -> Vec<Letter> {
        (0..self.alphabet_size as Letter).collect()
    }

    #[inline]
    pub fn allowed(&self, from: Letter, to: Letter) -> bool {
        self.transitions[from as usize * self.alphabet_size + to as usize]
    }

    pub fn successors(&self, letter: Letter) -> &[Letter] {
        &self.successors[letter as usize]
    }

    pub fn predecessors(&self, letter: Letter) -> &[Letter] {
        &self.predecessors[letter as usize]
    }

    pub fn is_admissible(&self, word: &[Letter]) -> bool {
        word.iter().all(|&l| (l as usize) < self.alphabet_size)
            && word.windows(2).all(|w| self.allowed(w[0], w[1]))
    }

    pub fn is_cyclically_admissible(&self, word: &[Letter]) -> bool {
        !word.is_empty()
            && self.is_admissible(word)
            && self.allowed(word[word.len() - 1], word[0])
    }

    /// All admissible words of length `k`, lexicographically ordered.
    pub fn cylinders(&self, k: usize) -> Vec<Cylinder> {
        self.admissible_words(k)
            .into_iter()
            .map(|prefix| Cylinder { prefix })
            .collect()
    }

    pub fn admissible_words(&self, k: usize) -> Vec<Vec<Letter>> {
        let mut out = Vec::new();
        if k == 0 {
            return out;
        }
        let mut collector = Collect(&mut out);
        for first in 0..self.alphabet_size as Letter {
            self.walk(k, &[first], Closing::Free, &mut collector);
        }
        out
    }

    pub fn cylinder_basis(&self, depth: usize) -> Result<CylinderBasis> {
        CylinderBasis::new(self, depth)
    }

    /// Every `n`-periodic word (cyclically admissible word of length `n`), in
    /// lexicographic order.
    pub fn enumerate_fix(&self, n: usize) -> Vec<PeriodicWord> {
        let mut out: Vec<Vec<Letter>> = Vec::new();
        if n == 0 {
            return Vec::new();
        }
        let mut collector = Collect(&mut out);
        for first in 0..self.alphabet_size as Letter {
            self.walk(n, &[first], Closing::Cyclic, &mut collector);
        }
        out.into_iter()
            .map(|letters| PeriodicWord { letters })
            .collect()
    }

    /// Visits every `n`-periodic word starting with `prefix`.
    pub fn visit_fix<V: WordVisitor>(&self, n: usize, prefix: &[Letter], visitor: &mut V) {
        self.walk(n, prefix, Closing::Cyclic, visitor);
    }

    /// Visits every admissible `w_0..w_{n-1}` starting with `prefix` such that
    /// `w_{n-1} -> anchor` is allowed; i.e. the `n`-th preimages of a point whose
    /// first letter is `anchor`.
    pub fn visit_preimages<V: WordVisitor>(
        &self,
        n: usize,
        prefix: &[Letter],
        anchor: Letter,
        visitor: &mut V,
    ) {
        self.walk(n, prefix, Closing::Anchor(anchor), visitor);
    }

    /// Materialized list of the words `w` of length `n` in `p` with `w z`
    /// admissible.
    pub fn enumerate_preimages(
        &self,
        z: &SampleWord,
        n: usize,
        p: &Cylinder,
    ) -> Result<Vec<Vec<Letter>>> {
        if n < p.depth() {
            return Err(Error::InvalidArgument(format!(
                "preimage length {n} shorter than cylinder depth {}",
                p.depth()
            )));
        }
        let mut out = Vec::new();
        self.visit_preimages(n, &p.prefix, z.letter(0), &mut Collect(&mut out));
        Ok(out)
    }

    /// Depth-first walk over admissible words of length `n` extending `prefix`.
    pub fn walk<V: WordVisitor>(&self, n: usize, prefix: &[Letter], closing: Closing, visitor: &mut V) {
        if n == 0 || prefix.len() > n || !self.is_admissible(prefix) {
            return;
        }
        let mut word: Vec<Letter> = Vec::with_capacity(n);
        for &l in prefix {
            word.push(l);
            if !visitor.enter(&word) {
                // unwind the part of the prefix already entered
                while !word.is_empty() {
                    visitor.exit(&word);
                    word.pop();
                }
                return;
            }
        }
        if word.is_empty() {
            for first in 0..self.alphabet_size as Letter {
                word.push(first);
                if visitor.enter(&word) {
                    self.walk_rec(n, closing, &mut word, visitor);
                }
                visitor.exit(&word);
                word.pop();
            }
        } else {
            self.walk_rec(n, closing, &mut word, visitor);
        }
        while !word.is_empty() {
            visitor.exit(&word);
            word.pop();
        }
    }

    fn walk_rec<V: WordVisitor>(&self, n: usize, closing: Closing, word: &mut Vec<Letter>, v: &mut V) {
        let last = *word.last().expect("non-empty");
        if word.len() == n {
            let closed = match closing {
                Closing::Free => true,
                Closing::Cyclic => self.allowed(last, word[0]),
                Closing::Anchor(a) => self.allowed(last, a),
            };
            if closed {
                v.leaf(word);
            }
            return;
        }
        for &next in &self.successors[last as usize] {
            word.push(next);
            if v.enter(word) {
                self.walk_rec(n, closing, word, v);
            }
            v.exit(word);
            word.pop();
        }
    }

    /// Shortest (possibly empty) sequence `s` with `from s to` admissible.
    pub fn connect(&self, from: Letter, to: Letter) -> Option<Vec<Letter>> {
        if self.allowed(from, to) {
            return Some(Vec::new());
        }
        let a = self.alphabet_size;
        let mut parent: Vec<Option<Letter>> = vec![None; a];
        let mut seen = vec![false; a];
        let mut queue = VecDeque::new();
        for &s in self.successors(from) {
            seen[s as usize] = true;
            queue.push_back(s);
        }
        while let Some(cur) = queue.pop_front() {
            if self.allowed(cur, to) {
                let mut path = vec![cur];
                let mut c = cur;
                while let Some(p) = parent[c as usize] {
                    path.push(p);
                    c = p;
                }
                path.reverse();
                return Some(path);
            }
            for &s in self.successors(cur) {
                if !seen[s as usize] {
                    seen[s as usize] = true;
                    parent[s as usize] = Some(cur);
                    queue.push_back(s);
                }
            }
        }
        None
    }

    /// Closed paths at `c` (words starting with `c` whose last letter may return
    /// to `c`), ordered by length then lexicographically, up to `max_len`.
    fn closed_paths(&self, c: Letter, max_len: usize, cap: usize) -> Vec<Vec<Letter>> {
        let mut out = Vec::new();
        for len in 1..=max_len {
            let mut found = Vec::new();
            self.walk(len, &[c], Closing::Anchor(c), &mut Collect(&mut found));
            for w in found {
                out.push(w);
                if out.len() >= cap {
                    return out;
                }
            }
        }
        out
    }

    /// A deterministic non-periodic point in the cylinder `p`.
    ///
    /// The point is `p`, a shortest connection to a base letter `c`, then the
    /// block sequence `v, u v, u u v, u u u v, ...` built from two
    /// non-commuting closed paths `u`, `v` at `c`, cut after
    /// [`SampleWord::PREFIX_LEN`] letters (or later, if `p` is longer) and
    /// continued by an eventually periodic admissible tail.
    pub fn pick_sample_word(&self, p: &Cylinder) -> Result<SampleWord> {
        if p.prefix.is_empty() || !self.is_admissible(&p.prefix) {
            return Err(Error::Inadmissible {
                word: p.prefix.clone(),
            });
        }
        let (c, u, v) = self.aperiodic_blocks()?;
        let target = SampleWord::PREFIX_LEN.max(p.depth() + 1);
        let mut word = p.prefix.clone();
        let link = self
            .connect(*word.last().expect("non-empty"), c)
            .ok_or_else(|| Error::InvalidArgument("base letter unreachable".into()))?;
        word.extend(link);
        let mut reps = 0usize;
        while word.len() < target {
            for _ in 0..reps {
                word.extend_from_slice(&u);
            }
            word.extend_from_slice(&v);
            reps += 1;
        }
        word.truncate(target);
        let link = self
            .connect(*word.last().expect("non-empty"), c)
            .ok_or_else(|| Error::InvalidArgument("base letter unreachable".into()))?;
        word.extend(link);
        let z = SampleWord {
            prefix: word,
            tail: u,
        };
        debug_assert!(self.is_admissible(&z.letters(z.prefix.len() + 2 * z.tail.len())));
        if !z.is_non_periodic() {
            return Err(Error::InvalidArgument(
                "constructed sample word is periodic".into(),
            ));
        }
        Ok(z)
    }

    fn aperiodic_blocks(&self) -> Result<(Letter, Vec<Letter>, Vec<Letter>)> {
        let max_len = self.alphabet_size + 2;
        for c in 0..self.alphabet_size as Letter {
            let paths = self.closed_paths(c, max_len, 4096);
            for (i, u) in paths.iter().enumerate() {
                for v in &paths[i + 1..] {
                    let uv: Vec<Letter> = u.iter().chain(v.iter()).copied().collect();
                    let vu: Vec<Letter> = v.iter().chain(u.iter()).copied().collect();
                    if uv != vu {
                        return Ok((c, u.clone(), v.clone()));
                    }
                }
            }
        }
        Err(Error::InvalidArgument(
            "shift has no non-periodic points".into(),
        ))
    }
}

/// Smallest `N <= A^2` with `T^N` entrywise positive, by repeated boolean
/// multiplication on bitset rows.
fn primitivity_index(a: usize, flat: &[bool]) -> Option<usize> {
    let words = a.div_ceil(64);
    let rows: Vec<Vec<u64>> = (0..a)
        .map(|i| {
            let mut r = vec![0u64; words];
            for j in 0..a {
                if flat[i * a + j] {
                    r[j / 64] |= 1 << (j % 64);
                }
            }
            r
        })
        .collect();
    let full: Vec<u64> = (0..words)
        .map(|w| {
            let bits = (a - w * 64).min(64);
            if bits == 64 {
                u64::MAX
            } else {
                (1u64 << bits) - 1
            }
        })
        .collect();
    let mut power = rows.clone();
    for n in 1..=a * a {
        if power.iter().all(|r| *r == full) {
            return Some(n);
        }
        let next: Vec<Vec<u64>> = power
            .iter()
            .map(|r| {
                let mut acc = vec![0u64; words];
                for j in 0..a {
                    if r[j / 64] >> (j % 64) & 1 == 1 {
                        for (x, y) in acc.iter_mut().zip(&rows[j]) {
                            *x |= *y;
                        }
                    }
                }
                acc
            })
            .collect();
        power = next;
    }
    None
}

/// How a walk closes a complete word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Closing {
    /// Any admissible word.
    Free,
    /// Last letter must be followed by the first (periodic words).
    Cyclic,
    /// Last letter must be followed by the given letter (preimages).
    Anchor(Letter),
}

/// Callbacks for a depth-first walk over admissible words.
pub trait WordVisitor {
    /// `word` was just extended by one letter; return `false` to skip its subtree.
    fn enter(&mut self, word: &[Letter]) -> bool;
    /// The last letter of `word` is about to be removed.
    fn exit(&mut self, _word: &[Letter]) {}
    /// `word` is complete and satisfies the closing condition.
    fn leaf(&mut self, word: &[Letter]);
}

struct Collect<'a>(&'a mut Vec<Vec<Letter>>);

impl WordVisitor for Collect<'_> {
    fn enter(&mut self, _word: &[Letter]) -> bool {
        true
    }
    fn leaf(&mut self, word: &[Letter]) {
        self.0.push(word.to_vec());
    }
}

/// The set of points sharing an admissible prefix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cylinder {
    pub prefix: Vec<Letter>,
}

impl Cylinder {
    pub fn new(shift: &Shift, prefix: Vec<Letter>) -> Result<Self> {
        if prefix.is_empty() || !shift.is_admissible(&prefix) {
            return Err(Error::Inadmissible { word: prefix });
        }
        Ok(Cylinder { prefix })
    }

    pub fn depth(&self) -> usize {
        self.prefix.len()
    }

    pub fn contains(&self, word: &[Letter]) -> bool {
        word.len() >= self.prefix.len() && word[..self.prefix.len()] == self.prefix[..]
    }
}

impl std::fmt::Display for Cylinder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}]", word_to_string(&self.prefix))
    }
}

/// Cylinder key used in text formats: digits concatenated for alphabets up
/// to ten letters, dot-separated indices otherwise.
pub fn word_to_string(word: &[Letter]) -> String {
    if word.iter().all(|&l| l < 10) {
        word.iter().map(|l| l.to_string()).collect()
    } else {
        word.iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(".")
    }
}

pub fn parse_word(s: &str) -> Result<Vec<Letter>> {
    let bad = || Error::InvalidArgument(format!("cannot parse word {s:?}"));
    if s.contains('.') {
        s.split('.')
            .map(|t| t.trim().parse::<Letter>().map_err(|_| bad()))
            .collect()
    } else {
        s.chars()
            .map(|c| c.to_digit(10).map(|d| d as Letter).ok_or_else(bad))
            .collect()
    }
}

/// An `n`-periodic word: cyclically admissible, period equal to its length
/// (not necessarily the primitive period).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PeriodicWord {
    letters: Vec<Letter>,
}

impl PeriodicWord {
    pub fn new(shift: &Shift, letters: Vec<Letter>) -> Result<Self> {
        if !shift.is_cyclically_admissible(&letters) {
            return Err(Error::Inadmissible { word: letters });
        }
        Ok(PeriodicWord { letters })
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn period(&self) -> usize {
        self.letters.len()
    }

    /// Letter `i` of the periodic extension.
    #[inline]
    pub fn at(&self, i: usize) -> Letter {
        self.letters[i % self.letters.len()]
    }

    pub fn rotate(&self, r: usize) -> PeriodicWord {
        let n = self.letters.len();
        PeriodicWord {
            letters: (0..n).map(|i| self.letters[(i + r) % n]).collect(),
        }
    }
}

/// An eventually periodic non-periodic point: a finite prefix followed by
/// the cycle `tail` repeated forever.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleWord {
    pub prefix: Vec<Letter>,
    pub tail: Vec<Letter>,
}

impl SampleWord {
    pub const PREFIX_LEN: usize = 64;

    pub fn letter(&self, i: usize) -> Letter {
        if i < self.prefix.len() {
            self.prefix[i]
        } else {
            self.tail[(i - self.prefix.len()) % self.tail.len()]
        }
    }

    /// First `len` letters.
    pub fn letters(&self, len: usize) -> Vec<Letter> {
        (0..len).map(|i| self.letter(i)).collect()
    }

    /// Stored letters available before the periodic tail starts.
    pub fn stored_len(&self) -> usize {
        self.prefix.len()
    }

    /// Whether the infinite word is not σ-periodic. An eventually periodic word
    /// with tail period `L` is periodic iff `z_i = z_{i+L}` for all `i`.
    pub fn is_non_periodic(&self) -> bool {
        let l = self.tail.len();
        (0..self.prefix.len()).any(|i| self.letter(i) != self.letter(i + l))
    }
}

/// Dense index of the admissible cylinders of a fixed depth.
#[derive(Debug, Clone)]
pub struct CylinderBasis {
    depth: usize,
    alphabet: usize,
    words: Vec<Vec<Letter>>,
    lookup: Vec<u32>,
}

impl CylinderBasis {
    pub const NONE: u32 = u32::MAX;

    pub fn new(shift: &Shift, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument("cylinder depth must be >= 1".into()));
        }
        let a = shift.alphabet_size();
        let codes = (a as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
        if codes > MAX_DENSE_CODES as u128 {
            return Err(Error::BasisTooLarge { depth, alphabet: a });
        }
        let words = shift.admissible_words(depth);
        let mut lookup = vec![Self::NONE; codes as usize];
        for (i, w) in words.iter().enumerate() {
            lookup[encode(w, a)] = i as u32;
        }
        Ok(CylinderBasis {
            depth,
            alphabet: a,
            words,
            lookup,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[Vec<Letter>] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &[Letter] {
        &self.words[i]
    }

    /// Number of dense codes `A^depth`.
    pub fn code_space(&self) -> usize {
        self.lookup.len()
    }

    #[inline]
    pub fn code(&self, word: &[Letter]) -> usize {
        encode(word, self.alphabet)
    }

    /// Index from a dense code, `None` for inadmissible codes.
    #[inline]
    pub fn index_of_code(&self, code: usize) -> Option<usize> {
        let i = self.lookup[code];
        (i != Self::NONE).then_some(i as usize)
    }

    pub fn index_of(&self, word: &[Letter]) -> Option<usize> {
        if word.len() != self.depth || word.iter().any(|&l| l as usize >= self.alphabet) {
            return None;
        }
        self.index_of_code(self.code(word))
    }

    /// Indices of basis cylinders contained in the shallower-or-equal cylinder `p`.
    pub fn refining(&self, p: &[Letter]) -> Vec<usize> {
        self.words
            .iter()
            .enumerate()
            .filter(|(_, w)| p.len() <= w.len() && w[..p.len()] == *p)
            .map(|(i, _)| i)
            .collect()
    }
}

#[inline]
fn encode(word: &[Letter], a: usize) -> usize {
    word.iter().fold(0usize, |acc, &l| acc * a + l as usize)
}
