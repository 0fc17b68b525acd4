//! Shared-scale search.
//!
//! A scale `K` is *satisfied* for width `n` when every realizable ceiling
//! sequence of length `n` admits integers `(T, B)` with
//! `ceil((i*T - B) / K) = S_i` for all `i`. `K_n` is the least satisfied
//! scale. The satisfied set is not contiguous above `K_n`, but every `K`
//! beyond [`blanket_threshold`] is satisfied.

use std::collections::BTreeMap;
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::exec::Exec;
use crate::seqgen::{self, CeilSequence};

pub const DEFAULT_WINDOW: usize = 100_000;
pub const DEFAULT_BUDGET: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("more than {limit} realizable sequences of length {n}; raise the budget to continue")]
    BudgetExceeded { n: usize, limit: u64 },
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaleSearchConfig {
    pub n: usize,
    /// Starting scale; `None` picks the proven lower bound.
    pub k0: Option<i64>,
    /// Sequences per batch.
    pub window: usize,
    /// Ceiling on the number of enumerated sequences.
    pub budget: u64,
    pub exec: Exec,
}

impl ScaleSearchConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            k0: None,
            window: DEFAULT_WINDOW,
            budget: DEFAULT_BUDGET,
            exec: Exec::default(),
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    pub fn with_start(mut self, k0: i64) -> Self {
        self.k0 = Some(k0);
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    /// `ceil((n-1)^2 / 4)` for `n >= 15`, otherwise 1.
    pub fn start(&self) -> i64 {
        self.k0.unwrap_or_else(|| default_start(self.n))
    }

    fn validate(&self) -> Result<(), SearchError> {
        if self.n == 0 {
            return Err(SearchError::InvalidConfig("n must be at least 1".into()));
        }
        if self.window == 0 {
            return Err(SearchError::InvalidConfig("window must be at least 1".into()));
        }
        if self.start() < 1 {
            return Err(SearchError::InvalidConfig("start scale must be at least 1".into()));
        }
        Ok(())
    }
}

fn default_start(n: usize) -> i64 {
    let n = n as i64;
    if n >= 15 {
        ((n - 1) * (n - 1) + 3) / 4
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleResult {
    pub n: usize,
    pub kn: i64,
    pub bounds: KnBounds,
    pub sequence_count: u64,
    /// Full passes over the sequence set, including the final confirming pass.
    pub passes: usize,
    /// For each scale the search tested, how many sequences failed there.
    pub witness_counts: BTreeMap<i64, u64>,
    /// A sequence with no `(T, B)` at `kn - 1`.
    pub minimality_witness: Option<CeilSequence>,
    /// True when `kn - 1` fails and the search started at or below a proven
    /// lower bound, so no smaller satisfied scale can exist.
    pub minimal_certified: bool,
    #[serde(serialize_with = "ser_secs")]
    pub elapsed: Duration,
}

fn ser_secs<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KnBounds {
    pub lower: i64,
    pub upper: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub pass: usize,
    pub windows: usize,
    pub sequences: u64,
    pub k: i64,
}

/// Proven bounds on `K_n`.
pub fn kn_bounds(n: usize) -> KnBounds {
    assert!(n >= 1, "n must be positive");
    let m = n as i64;
    let lower = if m >= 27 {
        // K_n > n^2 / 4
        (m * m) / 4 + 1
    } else if m >= 15 {
        ((m - 1) * (m - 1) + 3) / 4
    } else {
        1
    };
    KnBounds {
        lower,
        upper: blanket_threshold(n) + 1,
    }
}

/// Every `K` strictly above this value is satisfied for width `n`.
pub fn blanket_threshold(n: usize) -> i64 {
    let m = n as i64;
    if m > 4 {
        (m - 1) * (m - 3) / 2
    } else {
        (m - 1) * (m - 2)
    }
}

/// Inclusive `T` range scanned for `s` at scale `k` (the `(n, 1)` pair
/// constraint), clamped to `T >= 0`. `None` for single-element sequences.
pub fn scan_window(s: &CeilSequence, k: i64) -> Option<(i64, i64)> {
    let n = s.len() as i64;
    if n < 2 {
        return None;
    }
    let sn = s.last() as i64;
    let lo = div_ceil(k * sn - 2 * k + 1, n - 1).max(0);
    let hi = (k * sn - 1).div_euclid(n - 1);
    Some((lo, hi))
}

/// Exclusive `T` bounds `(lo, hi)` from all index pairs: valid `T` satisfy
/// `lo < T < hi`. `None` for single-element sequences.
pub fn pair_window(s: &[i64], k: i64) -> Option<(i64, i64)> {
    let n = s.len();
    if n < 2 {
        return None;
    }
    let mut lo = i64::MIN;
    let mut hi = i64::MAX;
    for i in 1..n {
        for j in 0..i {
            let d = (i - j) as i64;
            let gap = s[i] - s[j];
            lo = lo.max(((gap - 1) * k).div_euclid(d));
            hi = hi.min(div_ceil((gap + 1) * k, d));
        }
    }
    Some((lo, hi))
}

fn div_ceil(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

/// Admissible `B` for a given `T`: the half-open range
/// `[max_i(i*T - K*S_i), min_i(i*T - K*S_i) + K)`, or `None` when empty.
pub fn offset_range(s: &[i64], t_fixed: i64, k: i64) -> Option<(i64, i64)> {
    offset_range_of(s.iter().copied(), t_fixed, k)
}

fn offset_range_of(s: impl Iterator<Item = i64>, t_fixed: i64, k: i64) -> Option<(i64, i64)> {
    let mut lo = i64::MIN;
    let mut hi = i64::MAX;
    for (idx, si) in s.enumerate() {
        let v = (idx as i64 + 1) * t_fixed - k * si;
        lo = lo.max(v);
        hi = hi.min(v + k);
    }
    (lo < hi).then_some((lo, hi))
}

#[cfg(test)]
fn widen(s: &CeilSequence) -> Vec<i64> {
    s.values().iter().map(|&v| v as i64).collect()
}

/// First `(T, B)` in ascending `T` order with `B` at the low end of its range.
pub fn find_tb_for_k(s: &CeilSequence, k: i64) -> Option<(i64, i64)> {
    assert!(k >= 1, "scale must be positive");
    let range = |t| offset_range_of(s.values().iter().map(|&v| v as i64), t, k);
    match scan_window(s, k) {
        None => {
            // single threshold: any positive T works
            let (lo, _) = range(1)?;
            Some((1, lo))
        }
        Some((lo, hi)) => (lo..=hi).find_map(|t| range(t).map(|(b, _)| (t, b))),
    }
}

fn admits(s: &CeilSequence, k: i64) -> bool {
    find_tb_for_k(s, k).is_some()
}

/// Smallest scale `>= k` at which `s` admits `(T, B)`.
pub fn first_working_k(s: &CeilSequence, k: i64) -> i64 {
    let ceiling = blanket_threshold(s.len()) + 1;
    let mut k = k.max(1);
    while !admits(s, k) {
        debug_assert!(k < ceiling, "every scale above the blanket threshold works");
        k += 1;
    }
    k
}

fn collect_sequences(n: usize, budget: u64) -> Result<Vec<CeilSequence>, SearchError> {
    let mut out = Vec::new();
    let flow = seqgen::for_each_window(n, DEFAULT_WINDOW, |chunk| {
        out.extend_from_slice(chunk);
        if out.len() as u64 > budget {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    match flow {
        ControlFlow::Break(()) => Err(SearchError::BudgetExceeded { n, limit: budget }),
        ControlFlow::Continue(()) => Ok(out),
    }
}

/// True iff every realizable length-`n` sequence admits `(T, B)` at `k`.
pub fn is_satisfied_k(n: usize, k: i64) -> Result<bool, SearchError> {
    is_satisfied_k_with(n, k, DEFAULT_BUDGET, Exec::default())
}

pub fn is_satisfied_k_with(n: usize, k: i64, budget: u64, exec: Exec) -> Result<bool, SearchError> {
    Ok(first_failure(n, k, budget, exec)?.is_none())
}

/// First sequence (in lexicographic order) with no `(T, B)` at `k`.
pub fn first_failure(n: usize, k: i64, budget: u64, exec: Exec) -> Result<Option<CeilSequence>, SearchError> {
    if n == 0 || k < 1 {
        return Err(SearchError::InvalidConfig(format!(
            "need n >= 1 and k >= 1, got n={n}, k={k}"
        )));
    }
    if k > blanket_threshold(n) {
        return Ok(None);
    }
    let mut seen = 0u64;
    let flow = seqgen::for_each_window(n, DEFAULT_WINDOW, |chunk| {
        seen += chunk.len() as u64;
        if seen > budget {
            return ControlFlow::Break(Err(SearchError::BudgetExceeded { n, limit: budget }));
        }
        let hits = exec.map(chunk, |s| !admits(s, k));
        match hits.iter().position(|&h| h) {
            Some(idx) => ControlFlow::Break(Ok(chunk[idx].clone())),
            None => ControlFlow::Continue(()),
        }
    });
    match flow {
        ControlFlow::Break(Ok(s)) => Ok(Some(s)),
        ControlFlow::Break(Err(e)) => Err(e),
        ControlFlow::Continue(()) => Ok(None),
    }
}

/// Raises `k` until every sequence in `window` admits `(T, B)`.
/// Returns the final scale and the number of failures at the entry scale.
fn search_window(window: &[CeilSequence], k: i64, exec: Exec) -> (i64, u64) {
    let firsts = exec.map(window, |s| first_working_k(s, k));
    let failures = firsts.iter().filter(|&&x| x > k).count() as u64;
    let mut k = firsts.into_iter().max().unwrap_or(k);
    loop {
        let next = exec.max(window, |s| first_working_k(s, k)).unwrap_or(k);
        if next == k {
            return (k, failures);
        }
        k = next;
    }
}

/// Least satisfied scale `>= cfg.start()`, by repeated windowed passes until
/// a full pass leaves the scale unchanged.
pub fn search_kn(cfg: &ScaleSearchConfig) -> Result<ScaleResult, SearchError> {
    search_kn_with_progress(cfg, |_| {})
}

pub fn search_kn_with_progress(
    cfg: &ScaleSearchConfig,
    mut progress: impl FnMut(&Progress),
) -> Result<ScaleResult, SearchError> {
    cfg.validate()?;
    let started = Instant::now();
    let n = cfg.n;
    let start = cfg.start();
    let mut k = start;
    let mut witness_counts: BTreeMap<i64, u64> = BTreeMap::new();
    let mut passes = 0usize;
    let sequence_count = loop {
        passes += 1;
        let mut raised = false;
        let mut windows = 0usize;
        let mut seen = 0u64;
        let flow = seqgen::for_each_window(n, cfg.window, |chunk| {
            seen += chunk.len() as u64;
            if seen > cfg.budget {
                return ControlFlow::Break(());
            }
            let (next, failures) = search_window(chunk, k, cfg.exec);
            if failures > 0 {
                *witness_counts.entry(k).or_default() += failures;
            }
            if next > k {
                k = next;
                raised = true;
            }
            windows += 1;
            progress(&Progress {
                pass: passes,
                windows,
                sequences: seen,
                k,
            });
            ControlFlow::Continue(())
        });
        if flow.is_break() {
            return Err(SearchError::BudgetExceeded { n, limit: cfg.budget });
        }
        if !raised {
            break seen;
        }
    };

    let minimality_witness = if k > 1 {
        first_failure(n, k - 1, cfg.budget, cfg.exec)?
    } else {
        None
    };
    let proven_start = start <= kn_bounds(n).lower.max(default_start(n));
    let minimal_certified = k == 1 || (minimality_witness.is_some() && proven_start);

    Ok(ScaleResult {
        n,
        kn: k,
        bounds: kn_bounds(n),
        sequence_count,
        passes,
        witness_counts,
        minimality_witness,
        minimal_certified,
        elapsed: started.elapsed(),
    })
}

/// Every satisfied `K <= k_max`, ascending. Scales above the blanket
/// threshold are accepted without enumeration.
pub fn list_satisfied_k(n: usize, k_max: i64) -> Result<Vec<i64>, SearchError> {
    list_satisfied_k_with(n, k_max, DEFAULT_BUDGET, Exec::default())
}

pub fn list_satisfied_k_with(n: usize, k_max: i64, budget: u64, exec: Exec) -> Result<Vec<i64>, SearchError> {
    if n == 0 || k_max < 1 {
        return Err(SearchError::InvalidConfig(format!(
            "need n >= 1 and k_max >= 1, got n={n}, k_max={k_max}"
        )));
    }
    let blanket = blanket_threshold(n);
    let seqs = if k_max.min(blanket) >= 1 {
        collect_sequences(n, budget)?
    } else {
        Vec::new()
    };
    Ok((1..=k_max)
        .filter(|&k| k > blanket || exec.all(&seqs, |s| admits(s, k)))
        .collect())
}

/// Smallest satisfied scale `>= k`.
pub fn next_satisfied_k(n: usize, k: i64, budget: u64, exec: Exec) -> Result<i64, SearchError> {
    let blanket = blanket_threshold(n);
    let k = k.max(1);
    if k > blanket {
        return Ok(k);
    }
    let seqs = collect_sequences(n, budget)?;
    Ok((k..=blanket)
        .find(|&k| exec.all(&seqs, |s| admits(s, k)))
        .unwrap_or(blanket + 1))
}

/// Recommended hardware-friendly scale: 64 for 4-bit, 512 for 5-bit,
/// 2^16 for 8-bit activations; otherwise the first power of two above the
/// blanket threshold.
pub fn default_scale(n: usize) -> i64 {
    match n {
        15 => 64,
        31 => 512,
        255 => 1 << 16,
        _ => ((blanket_threshold(n) + 1).max(1) as u64).next_power_of_two() as i64,
    }
}
