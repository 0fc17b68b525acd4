//! Independent checks of integer replacements.
//!
//! The float side is evaluated straight from `floor((N + b) / t)` in exact
//! arithmetic, never through threshold sequences, so agreement here is
//! evidence that the solver is right rather than a restatement of it.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::convert::{FixedAffine, QuantRange, SignThreshold, Stride};
use crate::rational::{self, Rational};

pub const DEFAULT_MARGIN: i64 = 5;
/// Sentinel inputs sit this many window widths beyond either end.
pub const SENTINEL_FACTOR: i64 = 10;
/// Mismatches kept verbatim in a report; the count is always exact.
pub const MAX_RECORDED: usize = 32;

/// `clip(floor((N + b) / t), y_min, y_max)` with exact rationals.
pub fn eval_float_side(n: i64, t: &Rational, b: &Rational, range: QuantRange) -> i64 {
    assert!(!t.is_zero(), "slope must be nonzero");
    let v = rational::floor_big(&((rational::int(n) + b) / t));
    clip_big(&v, range)
}

fn clip_big(v: &BigInt, range: QuantRange) -> i64 {
    if *v <= BigInt::from(range.y_min()) {
        range.y_min()
    } else if *v >= BigInt::from(range.y_max()) {
        range.y_max()
    } else {
        v.to_i64().expect("inside the range")
    }
}

/// `clip(floor((N*K + B) / T), y_min, y_max)` in 128-bit integers.
pub fn eval_fixed_side(n: i64, fa: &FixedAffine) -> i64 {
    assert!(fa.slope != 0, "slope must be nonzero");
    let num = n as i128 * fa.scale as i128 + fa.offset as i128;
    let v = Integer::div_floor(&num, &(fa.slope as i128));
    v.clamp(fa.range.y_min() as i128, fa.range.y_max() as i128) as i64
}

pub fn eval_sign(n: i64, st: &SignThreshold) -> i64 {
    st.eval(n)
}

/// Float side with the rationals cleared to a common integer form
/// `floor((N*p + q) / r)`, falling back to big rationals on overflow.
struct FloatSide<'a> {
    t: &'a Rational,
    b: &'a Rational,
    range: QuantRange,
    fast: Option<(i128, i128, i128)>,
}

impl<'a> FloatSide<'a> {
    fn new(t: &'a Rational, b: &'a Rational, range: QuantRange) -> Self {
        // (N + bn/bd) / (tn/td) = (N*bd*td + bn*td) / (bd*tn)
        let (tn, td) = (t.numer(), t.denom());
        let (bn, bd) = (b.numer(), b.denom());
        let fast = match ((bd * td).to_i128(), (bn * td).to_i128(), (bd * tn).to_i128()) {
            (Some(p), Some(q), Some(r)) if p.abs() < 1 << 60 && q.abs() < 1 << 100 => Some((p, q, r)),
            _ => None,
        };
        Self { t, b, range, fast }
    }

    fn eval(&self, n: i64) -> i64 {
        match self.fast {
            Some((p, q, r)) => match (n as i128).checked_mul(p).and_then(|x| x.checked_add(q)) {
                Some(num) => {
                    Integer::div_floor(&num, &r).clamp(self.range.y_min() as i128, self.range.y_max() as i128) as i64
                }
                None => eval_float_side(n, self.t, self.b, self.range),
            },
            None => eval_float_side(n, self.t, self.b, self.range),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub input: i64,
    pub float_side: i64,
    pub fixed_side: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub checked_count: u64,
    pub mismatch_count: u64,
    pub mismatches: Vec<Mismatch>,
    /// Inclusive input range scanned densely.
    pub window: (i64, i64),
    pub sentinels_checked: bool,
}

impl EquivalenceReport {
    pub fn certified(&self) -> bool {
        self.mismatch_count == 0 && self.sentinels_checked
    }

    fn record(&mut self, input: i64, float_side: i64, fixed_side: i64) {
        self.checked_count += 1;
        if float_side != fixed_side {
            self.mismatch_count += 1;
            if self.mismatches.len() < MAX_RECORDED {
                self.mismatches.push(Mismatch {
                    input,
                    float_side,
                    fixed_side,
                });
            }
        }
    }
}

/// Inputs where the float side can change value, widened by `margin`:
/// from the lowest to the highest of `floor`/`ceil` of `(y_min+1)*t - b`
/// and `y_max*t - b`.
pub fn transition_window(t: &Rational, b: &Rational, range: QuantRange, margin: i64) -> (i64, i64) {
    let first = rational::int(range.y_min() + 1) * t - b;
    let last = rational::int(range.y_max()) * t - b;
    let lo = rational::floor_big(&first).min(rational::floor_big(&last));
    let hi = rational::ceil_big(&first).max(rational::ceil_big(&last));
    let lo = lo.to_i64().unwrap_or(i64::MIN / 4);
    let hi = hi.to_i64().unwrap_or(i64::MAX / 4);
    (lo.saturating_sub(margin), hi.saturating_add(margin))
}

fn sentinels(window: (i64, i64)) -> [i64; 2] {
    let width = (window.1 - window.0).max(1);
    let reach = width.saturating_mul(SENTINEL_FACTOR);
    [window.0.saturating_sub(reach), window.1.saturating_add(reach)]
}

fn scan(
    t: &Rational,
    b: &Rational,
    range: QuantRange,
    inputs: impl Fn(i64) -> i64,
    window: (i64, i64),
    rhs: impl Fn(i64) -> i64,
) -> EquivalenceReport {
    let float = FloatSide::new(t, b, range);
    let mut report = EquivalenceReport {
        checked_count: 0,
        mismatch_count: 0,
        mismatches: Vec::new(),
        window,
        sentinels_checked: false,
    };
    for j in window.0..=window.1 {
        let n = inputs(j);
        report.record(n, float.eval(n), rhs(j));
    }
    for j in sentinels(window) {
        let n = inputs(j);
        report.record(n, float.eval(n), rhs(j));
    }
    report.sentinels_checked = true;
    report
}

/// Checks the replacement on every input of the transition window plus
/// `margin`, and on one sentinel far out on each side.
pub fn verify_equivalence(t: &Rational, b: &Rational, fa: &FixedAffine, margin: i64) -> EquivalenceReport {
    let window = transition_window(t, b, fa.range, margin);
    scan(t, b, fa.range, |n| n, window, |n| eval_fixed_side(n, fa))
}

pub fn verify_sign(t: &Rational, b: &Rational, st: &SignThreshold, margin: i64) -> EquivalenceReport {
    let window = transition_window(t, b, st.range, margin);
    scan(t, b, st.range, |n| n, window, |n| st.eval(n))
}

/// Checks a replacement built for strided inputs: the float side sees
/// `alpha*N + beta`, the fixed side sees the same value.
pub fn verify_strided(t: &Rational, b: &Rational, fa: &FixedAffine, stride: Stride, margin: i64) -> EquivalenceReport {
    let (lo, hi) = transition_window(t, b, fa.range, 0);
    let alpha = stride.alpha.max(1);
    let window = (
        Integer::div_floor(&(lo - stride.beta), &alpha) - margin,
        Integer::div_ceil(&(hi - stride.beta), &alpha) + margin,
    );
    let to_input = |j: i64| alpha * j + stride.beta;
    scan(t, b, fa.range, to_input, window, |j| eval_fixed_side(to_input(j), fa))
}

/// Every valid `(T, B)` at scale `k`, found by scanning the loose slope window
/// and a padded offset window and checking each pair with
/// [`verify_equivalence`]. Needs at least two thresholds.
pub fn brute_force_tb(t: &Rational, b: &Rational, k: i64, range: QuantRange) -> BTreeSet<(i64, i64)> {
    assert!(range.width() >= 2, "brute force needs at least two thresholds");
    assert!(k >= 1 && !t.is_zero());
    if t.is_negative() {
        return brute_force_tb(&-t, &-b, k, range)
            .into_iter()
            .map(|(tt, bb)| (-tt, -bb))
            .collect();
    }
    let a = range.width();
    let thresholds: Vec<i64> = (range.y_min() + 1..=range.y_max())
        .map(|y| rational::ceil_i64(&(rational::int(y) * t - b)).expect("threshold fits in i64"))
        .collect();
    let kt = rational::int(k) * t;
    let spread = rational::ratio(2 * k, a - 1);
    let t_lo = rational::floor_i64(&(&kt - &spread)).expect("slope fits");
    let t_hi = rational::ceil_i64(&(&kt + &spread)).expect("slope fits");
    let mut out = BTreeSet::new();
    for tt in t_lo.max(1)..=t_hi {
        let vals = thresholds.iter().zip(range.y_min() + 1..).map(|(&s, y)| y * tt - k * s);
        let (mut lo, mut hi) = (i64::MAX, i64::MIN);
        for v in vals {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        for bb in hi - 1..=lo + k + 1 {
            let fa = FixedAffine {
                slope: tt,
                offset: bb,
                scale: k,
                range,
            };
            if verify_equivalence(t, b, &fa, DEFAULT_MARGIN).certified() {
                out.insert((tt, bb));
            }
        }
    }
    out
}
