//! Ceiling sequences `S_i = ceil(i*t - b)`, `i = 1..=n`.
//!
//! A one-affine operator `clip(floor((N + b) / t), 0, n)` is determined by the
//! `n` integer thresholds `S_i`, so the whole search space for a shared scale
//! is the finite set of sequences that some real `(t, b)` can produce. After
//! normalisation (`0 <= t < 1`, `ceil(t - b) = 1`) those sequences start at 1
//! and move by steps of 0 or 1.
//!
//! Realizability is decided exactly: a sequence is produced by some `(t, b)`
//! iff the largest lower bound on `b` implied by the index pairs stays strictly
//! below the smallest upper bound.

use std::cmp::Ordering;
use std::io::{self, BufRead, Write};
use std::ops::ControlFlow;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{self, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SequenceError {
    #[error("slope t must be nonzero")]
    ZeroSlope,
    #[error("sequence must be non-empty")]
    Empty,
    #[error("sequence must start at 1, found {0}")]
    BadStart(i32),
    #[error("step {from} -> {to} at position {index} is not 0 or 1")]
    BadStep { index: usize, from: i32, to: i32 },
    #[error("line {line}: {msg}")]
    Dump { line: usize, msg: String },
}

/// One-affine operator `(N + b) / t` with exact rational parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineReal {
    t: Rational,
    b: Rational,
}

impl AffineReal {
    pub fn new(t: Rational, b: Rational) -> Result<Self, SequenceError> {
        if t.is_zero() {
            return Err(SequenceError::ZeroSlope);
        }
        Ok(Self { t, b })
    }

    pub fn t(&self) -> &Rational {
        &self.t
    }

    pub fn b(&self) -> &Rational {
        &self.b
    }
}

/// Canonical form of an [`AffineReal`] plus the shifts that undo it.
///
/// With `sign = -1` when `sign_flipped`, the original operator is
/// `t_orig = sign * (t + int_shift)` and `b_orig = sign * (b + offset_shift)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedAffine {
    pub t: Rational,
    pub b: Rational,
    pub int_shift: BigInt,
    pub offset_shift: BigInt,
    pub sign_flipped: bool,
}

impl NormalizedAffine {
    pub fn reconstruct(&self) -> AffineReal {
        let t = &self.t + Rational::from_integer(self.int_shift.clone());
        let b = &self.b + Rational::from_integer(self.offset_shift.clone());
        let (t, b) = if self.sign_flipped { (-t, -b) } else { (t, b) };
        AffineReal { t, b }
    }

    /// Maps a threshold sequence of the canonical operator back to the
    /// (sign-normalised) original: `S_i + i * int_shift - offset_shift`.
    pub fn denormalize_sequence(&self, s: &CeilSequence) -> Vec<BigInt> {
        s.values()
            .iter()
            .enumerate()
            .map(|(idx, &v)| BigInt::from(v) + BigInt::from(idx + 1) * &self.int_shift - &self.offset_shift)
            .collect()
    }

    /// Lifts an integer pair solved for the canonical operator back to the
    /// original operator at scale `k`.
    pub fn lift_pair(&self, t_fixed: &BigInt, b_fixed: &BigInt, k: i64) -> (BigInt, BigInt) {
        let k = BigInt::from(k);
        let t = t_fixed + &self.int_shift * &k;
        let b = b_fixed + &self.offset_shift * &k;
        if self.sign_flipped {
            (-t, -b)
        } else {
            (t, b)
        }
    }
}

pub fn normalize_affine(a: &AffineReal) -> NormalizedAffine {
    let sign_flipped = a.t.is_negative();
    let (t, b) = if sign_flipped {
        (-a.t.clone(), -a.b.clone())
    } else {
        (a.t.clone(), a.b.clone())
    };
    let int_shift = rational::floor_big(&t);
    let t = t - Rational::from_integer(int_shift.clone());
    // ceil(t - (b - b')) = ceil(t - b) + b' must equal 1.
    let offset_shift = BigInt::from(1) - rational::ceil_big(&(&t - &b));
    let b = b - Rational::from_integer(offset_shift.clone());
    NormalizedAffine {
        t,
        b,
        int_shift,
        offset_shift,
        sign_flipped,
    }
}

/// Threshold sequence in canonical form: starts at 1, steps of 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<i32>", into = "Vec<i32>")]
pub struct CeilSequence(Vec<i32>);

impl CeilSequence {
    pub fn new(values: Vec<i32>) -> Result<Self, SequenceError> {
        check_shape(&values)?;
        Ok(Self(values))
    }

    pub(crate) fn from_values_unchecked(values: Vec<i32>) -> Self {
        debug_assert!(check_shape(&values).is_ok());
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[i32] {
        &self.0
    }

    pub fn last(&self) -> i32 {
        *self.0.last().expect("sequences are non-empty")
    }
}

impl TryFrom<Vec<i32>> for CeilSequence {
    type Error = SequenceError;

    fn try_from(values: Vec<i32>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<CeilSequence> for Vec<i32> {
    fn from(s: CeilSequence) -> Self {
        s.0
    }
}

impl std::fmt::Display for CeilSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write_record(f, &self.0)
    }
}

fn write_record(f: &mut impl std::fmt::Write, values: &[i32]) -> std::fmt::Result {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            f.write_char(',')?;
        }
        write!(f, "{v}")?;
    }
    Ok(())
}

fn check_shape(values: &[i32]) -> Result<(), SequenceError> {
    let first = *values.first().ok_or(SequenceError::Empty)?;
    if first != 1 {
        return Err(SequenceError::BadStart(first));
    }
    for (index, w) in values.windows(2).enumerate() {
        if !(w[0]..=w[0] + 1).contains(&w[1]) {
            return Err(SequenceError::BadStep {
                index: index + 1,
                from: w[0],
                to: w[1],
            });
        }
    }
    Ok(())
}

/// `S_i = ceil(i*t - b)` for `i = 1..=n`, evaluated exactly.
pub fn make_sequence(a: &NormalizedAffine, n: usize) -> CeilSequence {
    assert!(n >= 1, "sequence length must be positive");
    let values = (1..=n)
        .map(|i| {
            let x = &a.t * Rational::from_integer(BigInt::from(i)) - &a.b;
            let v = rational::ceil_big(&x);
            i32::try_from(v).expect("canonical thresholds are bounded by the index")
        })
        .collect();
    CeilSequence::from_values_unchecked(values)
}

/// Small exact fraction `num / den` with `den > 0`, used in the hot paths
/// where every quantity is bounded by a few multiples of `n^2`.
#[derive(Debug, Clone, Copy)]
struct Frac {
    num: i64,
    den: i64,
}

impl Frac {
    fn new(num: i64, den: i64) -> Self {
        debug_assert!(den > 0);
        Self { num, den }
    }

    fn cmp(self, other: Frac) -> Ordering {
        (self.num as i128 * other.den as i128).cmp(&(other.num as i128 * self.den as i128))
    }
}

/// Feasible interval `(lo, hi)` for the offset `b` of a prefix.
#[derive(Debug, Clone, Copy, Default)]
struct OffsetBounds {
    lo: Option<Frac>,
    hi: Option<Frac>,
}

impl OffsetBounds {
    fn raise_lo(&mut self, f: Frac) {
        if self.lo.is_none_or(|lo| f.cmp(lo) == Ordering::Greater) {
            self.lo = Some(f);
        }
    }

    fn lower_hi(&mut self, f: Frac) {
        if self.hi.is_none_or(|hi| f.cmp(hi) == Ordering::Less) {
            self.hi = Some(f);
        }
    }

    fn feasible(&self) -> bool {
        match (self.lo, self.hi) {
            (Some(lo), Some(hi)) => hi.cmp(lo) == Ordering::Greater,
            _ => true,
        }
    }

    /// Bounds after appending `next` to `prefix`.
    fn extended(mut self, prefix: &[i32], next: i32) -> Self {
        let m = prefix.len() as i64 + 1;
        let v = next as i64;
        for (idx, &sj) in prefix.iter().enumerate() {
            let j = idx as i64 + 1;
            let sj = sj as i64;
            // pair (i = m, j < m): lower bound on b
            self.raise_lo(Frac::new(j * (v - 1) - m * sj, m - j));
            // pair (i = j, j' = m > i): upper bound on b
            self.lower_hi(Frac::new(j * v - m * (sj - 1), m - j));
        }
        self
    }
}

/// True iff some `t` in `[0, 1)` and `b` with `ceil(t - b) = 1` generate `s`.
pub fn is_realizable(s: &[i32]) -> bool {
    if check_shape(s).is_err() {
        return false;
    }
    let mut bounds = OffsetBounds::default();
    for i in 1..=s.len() as i64 {
        let si = s[i as usize - 1] as i64;
        for j in 1..=s.len() as i64 {
            if i == j {
                continue;
            }
            let sj = s[j as usize - 1] as i64;
            let num = j * (si - 1) - i * sj;
            if j > i {
                bounds.lower_hi(Frac::new(-num, j - i));
            } else {
                bounds.raise_lo(Frac::new(num, i - j));
            }
        }
    }
    bounds.feasible()
}

/// All realizable one-step extensions, in lexicographic order.
pub fn extend_sequences(seqs: &[CeilSequence]) -> Vec<CeilSequence> {
    let mut out = Vec::with_capacity(seqs.len() * 2);
    for s in seqs {
        let last = s.last();
        for next in [last, last + 1] {
            let mut v = s.values().to_vec();
            v.push(next);
            if is_realizable(&v) {
                out.push(CeilSequence::from_values_unchecked(v));
            }
        }
    }
    out
}

/// Depth-first walk over the prefix tree of realizable sequences. Leaves of
/// length `n` are visited in lexicographic order using `O(n)` memory.
fn walk<B>(n: usize, visit: &mut impl FnMut(&[i32]) -> ControlFlow<B>) -> ControlFlow<B> {
    assert!(n >= 1, "sequence length must be positive");
    let mut prefix = Vec::with_capacity(n);
    prefix.push(1);
    descend(n, &mut prefix, OffsetBounds::default(), visit)
}

fn descend<B>(
    n: usize,
    prefix: &mut Vec<i32>,
    bounds: OffsetBounds,
    visit: &mut impl FnMut(&[i32]) -> ControlFlow<B>,
) -> ControlFlow<B> {
    if prefix.len() == n {
        return visit(prefix);
    }
    let last = *prefix.last().unwrap();
    for next in [last, last + 1] {
        let child = bounds.extended(prefix, next);
        if child.feasible() {
            prefix.push(next);
            descend(n, prefix, child, visit)?;
            prefix.pop();
        }
    }
    ControlFlow::Continue(())
}

/// Streams every realizable length-`n` sequence in lexicographic order, in
/// batches of at most `window`. The callback may stop the walk early.
pub fn for_each_window<B>(
    n: usize,
    window: usize,
    mut f: impl FnMut(&[CeilSequence]) -> ControlFlow<B>,
) -> ControlFlow<B> {
    assert!(window >= 1, "window must be positive");
    let mut buf: Vec<CeilSequence> = Vec::with_capacity(window.min(1 << 16));
    walk(n, &mut |s: &[i32]| {
        buf.push(CeilSequence::from_values_unchecked(s.to_vec()));
        if buf.len() == window {
            let flow = f(&buf);
            buf.clear();
            flow
        } else {
            ControlFlow::Continue(())
        }
    })?;
    if !buf.is_empty() {
        f(&buf)?;
    }
    ControlFlow::Continue(())
}

/// Every realizable sequence of length `n`, lexicographically sorted.
pub fn enumerate(n: usize) -> Vec<CeilSequence> {
    let mut out = Vec::new();
    let _ = walk::<()>(n, &mut |s| {
        out.push(CeilSequence::from_values_unchecked(s.to_vec()));
        ControlFlow::Continue(())
    });
    out
}

/// Number of realizable sequences of length `n`, stopping once `limit` is
/// exceeded (the returned count is then `limit + 1`).
pub fn count_realizable(n: usize, limit: u64) -> u64 {
    let mut count = 0u64;
    let _ = walk(n, &mut |_| {
        count += 1;
        if count > limit {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    count
}

/// Writes one comma-separated sequence per line.
pub fn write_dump<'a>(mut w: impl Write, seqs: impl IntoIterator<Item = &'a CeilSequence>) -> io::Result<()> {
    for s in seqs {
        writeln!(w, "{s}")?;
    }
    Ok(())
}

/// Reads the format produced by [`write_dump`]. Blank lines are skipped.
pub fn read_dump(r: impl BufRead) -> Result<Vec<CeilSequence>, Box<dyn std::error::Error + Send + Sync>> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|x| x.trim().parse::<i32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SequenceError::Dump {
                line: idx + 1,
                msg: e.to_string(),
            })?;
        out.push(CeilSequence::new(values).map_err(|e| SequenceError::Dump {
            line: idx + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
