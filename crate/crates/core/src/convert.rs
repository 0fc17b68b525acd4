//! Integer replacement `(T, B)` for a one-affine operator at a given scale.
//!
//! Given exact `(t, b)`, a scale `K` and a clip range `[y_min, y_max]`, find
//! integers with
//!
//! ```text
//! clip(floor((N + b) / t), y_min, y_max) == clip(floor((N*K + B) / T), y_min, y_max)
//! ```
//!
//! for every integer `N`. The range is shifted to `[0, A]`, the operator is
//! normalised to `0 <= t < 1`, and the candidate slopes are the integers
//! strictly inside the pair window of the threshold sequence. Each slope
//! admits a contiguous run of offsets.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{self, IntegerOverflow, Rational};
use crate::scale_search::{self, SearchError};
use crate::seqgen::{self, AffineReal};
use crate::Exec;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConvertError {
    #[error("slope t must be nonzero")]
    ZeroSlope,
    #[error("scale must be at least 1, got {0}")]
    InvalidScale(i64),
    #[error("invalid clip range [{y_min}, {y_max}]")]
    InvalidRange { y_min: i64, y_max: i64 },
    #[error("no (T, B) exists at K={k} for this operator; failing threshold sequence {witness:?}")]
    NoSolution { k: i64, witness: Vec<i32> },
    #[error("only T = 0 fits; use the sign threshold at N0={}", threshold.n0)]
    DegenerateSign { threshold: SignThreshold },
    #[error("stride must be at least 1, got {0}")]
    InvalidStride(i64),
    #[error(transparent)]
    Overflow(#[from] IntegerOverflow),
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRange")]
pub struct QuantRange {
    y_min: i64,
    y_max: i64,
}

#[derive(Deserialize)]
struct RawRange {
    y_min: i64,
    y_max: i64,
}

impl TryFrom<RawRange> for QuantRange {
    type Error = ConvertError;

    fn try_from(r: RawRange) -> Result<Self, Self::Error> {
        QuantRange::new(r.y_min, r.y_max)
    }
}

impl QuantRange {
    pub fn new(y_min: i64, y_max: i64) -> Result<Self, ConvertError> {
        if y_min >= y_max {
            return Err(ConvertError::InvalidRange { y_min, y_max });
        }
        Ok(Self { y_min, y_max })
    }

    /// `[0, a]`
    pub fn canonical(a: i64) -> Result<Self, ConvertError> {
        Self::new(0, a)
    }

    pub fn y_min(&self) -> i64 {
        self.y_min
    }

    pub fn y_max(&self) -> i64 {
        self.y_max
    }

    /// Number of thresholds `A = y_max - y_min`.
    pub fn width(&self) -> i64 {
        self.y_max - self.y_min
    }

    pub fn clip(&self, v: i64) -> i64 {
        v.clamp(self.y_min, self.y_max)
    }
}

/// `clip(floor((N*K + B) / T), y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedAffine {
    #[serde(rename = "T")]
    pub slope: i64,
    #[serde(rename = "B")]
    pub offset: i64,
    #[serde(rename = "K")]
    pub scale: i64,
    pub range: QuantRange,
}

/// Two-valued step used when no nonzero slope fits: `y_max` above `n0` and
/// `y_min` at or below it, mirrored when `descending`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignThreshold {
    pub n0: i64,
    pub range: QuantRange,
    #[serde(default)]
    pub descending: bool,
}

impl SignThreshold {
    pub fn eval(&self, n: i64) -> i64 {
        let high = if self.descending { n <= self.n0 } else { n > self.n0 };
        if high {
            self.range.y_max
        } else {
            self.range.y_min
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMode {
    #[default]
    First,
    All,
}

/// Moves the clip range to `[0, A]`: `b' = b - t*y_min`.
pub fn shift_range(t: &Rational, b: &Rational, range: QuantRange) -> (Rational, Rational, QuantRange) {
    let shifted = b - t * rational::int(range.y_min);
    let canonical = QuantRange {
        y_min: 0,
        y_max: range.width(),
    };
    (t.clone(), shifted, canonical)
}

/// Inverse of [`shift_range`] on the integer side: `B = B' + T*y_min`.
pub fn unshift_offset(shifted_offset: i64, slope: i64, range: QuantRange) -> Result<i64, IntegerOverflow> {
    slope
        .checked_mul(range.y_min)
        .and_then(|x| x.checked_add(shifted_offset))
        .ok_or_else(|| IntegerOverflow(format!("{shifted_offset} + {slope}*{}", range.y_min)))
}

fn big_to_i64(x: BigInt) -> Result<i64, IntegerOverflow> {
    rational::to_i64(&x)
}

/// Solves for `(T, B)`. `First` returns the slope nearest `K*t` (ties to the
/// smaller slope) with the smallest admissible offset; `All` returns every
/// valid pair, ordered by slope distance then offset.
pub fn solve_tb(
    t: &Rational,
    b: &Rational,
    k: i64,
    range: QuantRange,
    mode: SolveMode,
) -> Result<Vec<FixedAffine>, ConvertError> {
    if k < 1 {
        return Err(ConvertError::InvalidScale(k));
    }
    if t.is_zero() {
        return Err(ConvertError::ZeroSlope);
    }
    let (_, shifted_b, canonical) = shift_range(t, b, range);
    let width = canonical.width();
    let na = seqgen::normalize_affine(&AffineReal::new(t.clone(), shifted_b).expect("t is nonzero"));
    let seq = seqgen::make_sequence(&na, width as usize);
    let s: Vec<i64> = seq.values().iter().map(|&v| v as i64).collect();

    let big_k = BigInt::from(k);
    let slope_base = &na.int_shift * &big_k;
    // K*|t| in the sign-normalised frame
    let target = rational::int(k) * t.abs();

    // candidate canonical slopes T' (T = T' + int_shift*K before un-flipping)
    let canonical_slopes: Vec<i64> = match scale_search::pair_window(&s, k) {
        Some((lo, hi)) => (lo + 1..hi).collect(),
        None => {
            let f = rational::floor_big(&target);
            let c = rational::ceil_big(&target);
            let mut v = vec![big_to_i64(f - &slope_base)?];
            let c = big_to_i64(c - &slope_base)?;
            if c != v[0] {
                v.push(c);
            }
            v
        }
    };

    let mut ranked: Vec<(Rational, i64, i64)> = Vec::with_capacity(canonical_slopes.len());
    let mut zero_slope_fits = false;
    for tc in canonical_slopes {
        let Some(offsets) = scale_search::offset_range(&s, tc, k) else {
            continue;
        };
        let positive_slope = BigInt::from(tc) + &slope_base;
        if positive_slope.is_zero() {
            zero_slope_fits = true;
            continue;
        }
        if positive_slope.is_negative() {
            continue;
        }
        let dist = (Rational::from_integer(positive_slope) - &target).abs();
        ranked.push((dist, tc, offsets.0));
    }
    ranked.sort_by(|a, b| match a.0.cmp(&b.0) {
        Ordering::Equal => a.1.cmp(&b.1),
        o => o,
    });

    if ranked.is_empty() {
        if zero_slope_fits {
            let threshold =
                detect_degenerate_sign(t, b, range).expect("a zero slope implies a flat threshold sequence");
            return Err(ConvertError::DegenerateSign { threshold });
        }
        return Err(ConvertError::NoSolution {
            k,
            witness: seq.values().to_vec(),
        });
    }

    let mut out = Vec::new();
    for (_, tc, _) in ranked {
        let (blo, bhi) = scale_search::offset_range(&s, tc, k).expect("checked above");
        let offsets: Box<dyn Iterator<Item = i64>> = match mode {
            SolveMode::First => Box::new(std::iter::once(blo)),
            SolveMode::All => Box::new(blo..bhi),
        };
        for bc in offsets {
            let (slope, shifted) = na.lift_pair(&BigInt::from(tc), &BigInt::from(bc), k);
            let slope = big_to_i64(slope)?;
            let shifted = big_to_i64(shifted)?;
            out.push(FixedAffine {
                slope,
                offset: unshift_offset(shifted, slope, range)?,
                scale: k,
                range,
            });
        }
        if mode == SolveMode::First {
            break;
        }
    }
    Ok(out)
}

/// Open interval `(lo, hi)` of rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenInterval {
    pub lo: Rational,
    pub hi: Rational,
}

impl OpenInterval {
    pub fn contains(&self, x: i64) -> bool {
        let x = rational::int(x);
        self.lo < x && x < self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateWindows {
    pub slope: OpenInterval,
    pub offset: OpenInterval,
}

/// Loose windows that contain every valid slope and offset:
/// `K*t ± 2K/(n-1)` and `K*b ± K(n+1)/(n-1)`. Needs `n >= 2`.
pub fn candidate_windows(t: &Rational, b: &Rational, k: i64, n: i64) -> Option<CandidateWindows> {
    if n < 2 {
        return None;
    }
    let kt = rational::int(k) * t;
    let kb = rational::int(k) * b;
    let dt = rational::ratio(2 * k, n - 1);
    let db = rational::ratio(k * (n + 1), n - 1);
    Some(CandidateWindows {
        slope: OpenInterval {
            lo: &kt - &dt,
            hi: kt + dt,
        },
        offset: OpenInterval {
            lo: &kb - &db,
            hi: kb + db,
        },
    })
}

/// Rounding neighbours of `K*t` and `K*b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntuitiveCandidates {
    pub slopes: [i64; 2],
    pub offsets: [i64; 2],
}

pub fn intuitive_candidates(t: &Rational, b: &Rational, k: i64) -> Result<IntuitiveCandidates, IntegerOverflow> {
    let kt = rational::int(k) * t;
    let kb = rational::int(k) * b;
    Ok(IntuitiveCandidates {
        slopes: [rational::floor_i64(&kt)?, rational::ceil_i64(&kt)?],
        offsets: [rational::floor_i64(&kb)?, rational::ceil_i64(&kb)?],
    })
}

/// Detects the regime where the clipped floor is a single step: the first and
/// last thresholds coincide, which forces `|t| < 1/(A-1)`.
pub fn detect_degenerate_sign(t: &Rational, b: &Rational, range: QuantRange) -> Option<SignThreshold> {
    if t.is_zero() {
        return None;
    }
    let (_, shifted, canonical) = shift_range(t, b, range);
    let a = canonical.width();
    let descending = t.is_negative();
    let (t, shifted) = if descending {
        (-t.clone(), -shifted)
    } else {
        (t.clone(), shifted)
    };
    if a > 1 && t >= rational::ratio(1, a - 1) {
        return None;
    }
    let first = rational::ceil_big(&(&t - &shifted));
    let last = rational::ceil_big(&(rational::int(a) * &t - &shifted));
    if first != last {
        return None;
    }
    let n0 = rational::to_i64(&(first - 1)).ok()?;
    // for a negative slope the step is mirrored through N -> -N
    let n0 = if descending { -n0 - 1 } else { n0 };
    Some(SignThreshold { n0, range, descending })
}

/// Inputs restricted to `alpha*N + beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stride {
    pub alpha: i64,
    pub beta: i64,
}

impl Stride {
    pub const DENSE: Stride = Stride { alpha: 1, beta: 0 };
}

/// Scale usable on strided inputs when `k` is satisfied on dense inputs:
/// `k / alpha`, provided `alpha` divides `k`.
pub fn reduce_stride(k: i64, stride: Stride) -> Option<i64> {
    (stride.alpha >= 1 && k >= 1 && k % stride.alpha == 0).then(|| k / stride.alpha)
}

/// Smallest `K'` with `alpha*K'` satisfied for width `n`.
pub fn smallest_strided_scale(n: usize, alpha: i64, budget: u64, exec: Exec) -> Result<i64, ConvertError> {
    if alpha < 1 {
        return Err(ConvertError::InvalidStride(alpha));
    }
    let mut kp = 1;
    loop {
        let k = scale_search::next_satisfied_k(n, alpha * kp, budget, exec)?;
        if k % alpha == 0 {
            return Ok(k / alpha);
        }
        kp = k / alpha + 1;
    }
}

/// Solves on inputs `alpha*N + beta` at the reduced scale `k_reduced`: the
/// operator is rewritten as `(t/alpha, (b + beta)/alpha)` at scale
/// `alpha*k_reduced`, and the offset is moved back to the original inputs.
pub fn solve_strided(
    t: &Rational,
    b: &Rational,
    k_reduced: i64,
    stride: Stride,
    range: QuantRange,
    mode: SolveMode,
) -> Result<Vec<FixedAffine>, ConvertError> {
    if stride.alpha < 1 {
        return Err(ConvertError::InvalidStride(stride.alpha));
    }
    let alpha = rational::int(stride.alpha);
    let ts = t / &alpha;
    let bs = (b + rational::int(stride.beta)) / &alpha;
    let k = stride
        .alpha
        .checked_mul(k_reduced)
        .ok_or_else(|| IntegerOverflow(format!("{}*{k_reduced}", stride.alpha)))?;
    solve_tb(&ts, &bs, k, range, mode)?
        .into_iter()
        .map(|fa| {
            let shift = stride
                .beta
                .checked_mul(k_reduced)
                .and_then(|x| fa.offset.checked_sub(x))
                .ok_or_else(|| IntegerOverflow(format!("{} - {}*{k_reduced}", fa.offset, stride.beta)))?;
            Ok(FixedAffine {
                slope: fa.slope,
                offset: shift,
                scale: k_reduced,
                range,
            })
        })
        .collect()
}
