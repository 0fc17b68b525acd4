//! Folding batch normalization and the activation quantizer into one
//! fixed-point operator per layer.
//!
//! For a layer whose integer accumulator is `N`, the quantized activation
//! level is `floor(A * clip(BN(N/(A*W) + c), y_min, y_max))`. With
//! `t = W*sigma/gamma` and `b = A*W*(beta*sigma/gamma + c - mu)` this equals
//! `clip(floor((N + b)/t), A*y_min, A*y_max)`, which [`crate::convert`]
//! turns into integers.

use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::convert::{self, ConvertError, FixedAffine, QuantRange, SignThreshold, SolveMode};
use crate::model::{AffineText, FoldedModel, FoldedRecord, LayerFailure, LayerSpec, ModelFile, Number};
use crate::oracle::{self, EquivalenceReport, DEFAULT_MARGIN, SENTINEL_FACTOR};
use crate::rational::{self, ParseRationalError, Rational};
use crate::scale_search::{self, DEFAULT_BUDGET};
use crate::seqgen::AffineReal;
use crate::Exec;

/// Widths up to this get an exact next satisfied scale in failure reports.
const SUGGEST_LIMIT: i64 = 63;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BnFoldError {
    #[error("layer `{layer}`: invalid parameters: {reason}")]
    InvalidParams { layer: String, reason: String },
    #[error("layer `{layer}`: field `{field}`: {source}")]
    Parse {
        layer: String,
        field: &'static str,
        source: ParseRationalError,
    },
    #[error("layer sets differ: {0}")]
    LayerMismatch(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuantizeError {
    #[error("no (T, B) at K={k}; try K={suggested_k}")]
    NoSolution {
        k: i64,
        witness: Vec<i32>,
        suggested_k: i64,
    },
    #[error("replacement failed verification with {} mismatches", .0.mismatch_count)]
    Uncertified(EquivalenceReport),
    #[error(transparent)]
    Convert(#[from] ConvertError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BnLayerParams {
    pub mu: Rational,
    pub sigma: Rational,
    pub gamma: Rational,
    pub beta: Rational,
    pub c: Rational,
    pub w: i64,
    pub a: i64,
    pub y_min: i64,
    pub y_max: i64,
}

impl BnLayerParams {
    /// Parses a document layer; floats produce a notice per field.
    pub fn from_spec(spec: &LayerSpec) -> Result<(Self, Vec<String>), BnFoldError> {
        let mut notices = Vec::new();
        let mut get = |field: &'static str, v: &Number| {
            if v.is_float() {
                notices.push(format!("{field} given as a binary float; using its exact value"));
            }
            v.to_rational().map_err(|source| BnFoldError::Parse {
                layer: spec.name.clone(),
                field,
                source,
            })
        };
        let p = Self {
            mu: get("mu", &spec.mu)?,
            sigma: get("sigma", &spec.sigma)?,
            gamma: get("gamma", &spec.gamma)?,
            beta: get("beta", &spec.beta)?,
            c: get("c", &spec.c)?,
            w: spec.w,
            a: spec.a,
            y_min: spec.y_min,
            y_max: spec.y_max,
        };
        p.validate().map_err(|reason| BnFoldError::InvalidParams {
            layer: spec.name.clone(),
            reason,
        })?;
        Ok((p, notices))
    }

    pub fn to_spec(&self, name: &str) -> LayerSpec {
        let text = |x: &Rational| Number::Text(rational::to_string(x));
        LayerSpec {
            name: name.to_string(),
            mu: text(&self.mu),
            sigma: text(&self.sigma),
            gamma: text(&self.gamma),
            beta: text(&self.beta),
            c: text(&self.c),
            w: self.w,
            a: self.a,
            y_min: self.y_min,
            y_max: self.y_max,
            extra: Default::default(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.sigma.is_positive() {
            return Err("sigma must be positive".into());
        }
        if self.gamma.is_zero() {
            return Err("gamma must be nonzero".into());
        }
        if self.w < 1 || self.a < 1 {
            return Err(format!("w and a must be at least 1, got w={}, a={}", self.w, self.a));
        }
        if self.y_min >= self.y_max {
            return Err(format!("need y_min < y_max, got [{}, {}]", self.y_min, self.y_max));
        }
        self.quant_range().map(|_| ()).map_err(|e| e.to_string())
    }

    /// Integer levels `[A*y_min, A*y_max]`.
    pub fn quant_range(&self) -> Result<QuantRange, ConvertError> {
        let lo = self.a.checked_mul(self.y_min);
        let hi = self.a.checked_mul(self.y_max);
        match (lo, hi) {
            (Some(lo), Some(hi)) => QuantRange::new(lo, hi),
            _ => Err(ConvertError::InvalidRange {
                y_min: self.y_min,
                y_max: self.y_max,
            }),
        }
    }
}

/// `t = W*sigma/gamma`, `b = A*W*(beta*sigma/gamma + c - mu)`.
pub fn fold_bn(p: &BnLayerParams) -> Result<AffineReal, BnFoldError> {
    p.validate().map_err(|reason| BnFoldError::InvalidParams {
        layer: String::new(),
        reason,
    })?;
    let w = rational::int(p.w);
    let aw = rational::int(p.a) * &w;
    let ratio = &p.sigma / &p.gamma;
    let t = w * &ratio;
    let b = aw * (&p.beta * ratio + &p.c - &p.mu);
    Ok(AffineReal::new(t, b).expect("sigma and gamma are nonzero"))
}

/// Level produced by the unfolded layer: `floor(A * clip(BN(x), y_min, y_max))`
/// with `x = N/(A*W) + c`.
pub fn eval_two_affine(p: &BnLayerParams, n: i64) -> i64 {
    let x = rational::ratio(n, p.a * p.w) + &p.c;
    let bn = &p.gamma * (x - &p.mu) / &p.sigma + &p.beta;
    let clipped = bn.clamp(rational::int(p.y_min), rational::int(p.y_max));
    rational::floor_i64(&(rational::int(p.a) * clipped)).expect("clipped level fits")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Replacement {
    Fixed(FixedAffine),
    Sign(SignThreshold),
}

impl Replacement {
    pub fn eval(&self, n: i64) -> i64 {
        match self {
            Replacement::Fixed(fa) => oracle::eval_fixed_side(n, fa),
            Replacement::Sign(st) => st.eval(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldedLayer {
    pub source: BnLayerParams,
    pub affine: AffineReal,
    pub replacement: Replacement,
    pub certificate: EquivalenceReport,
}

fn suggest_scale(width: i64, k: i64) -> i64 {
    if width <= SUGGEST_LIMIT {
        if let Ok(next) = scale_search::next_satisfied_k(width as usize, k + 1, DEFAULT_BUDGET, Exec::default()) {
            return next;
        }
    }
    scale_search::blanket_threshold(width as usize) + 1
}

/// Sign threshold when the operator is flat over two or more levels,
/// otherwise the nearest-slope `(T, B)`; either way certified by the oracle.
pub fn quantize_layer(
    f: &AffineReal,
    k: i64,
    range: QuantRange,
) -> Result<(Replacement, EquivalenceReport), QuantizeError> {
    let (t, b) = (f.t(), f.b());
    // a single level is always solvable with a nonzero slope
    let flat = if range.width() >= 2 {
        convert::detect_degenerate_sign(t, b, range)
    } else {
        None
    };
    let (replacement, certificate) = match flat {
        Some(st) => (Replacement::Sign(st), oracle::verify_sign(t, b, &st, DEFAULT_MARGIN)),
        None => match convert::solve_tb(t, b, k, range, SolveMode::First) {
            Ok(v) => {
                let fa = v[0];
                (
                    Replacement::Fixed(fa),
                    oracle::verify_equivalence(t, b, &fa, DEFAULT_MARGIN),
                )
            }
            Err(ConvertError::DegenerateSign { threshold }) => (
                Replacement::Sign(threshold),
                oracle::verify_sign(t, b, &threshold, DEFAULT_MARGIN),
            ),
            Err(ConvertError::NoSolution { k, witness }) => {
                return Err(QuantizeError::NoSolution {
                    k,
                    witness,
                    suggested_k: suggest_scale(range.width(), k),
                })
            }
            Err(e) => return Err(e.into()),
        },
    };
    if !certificate.certified() {
        return Err(QuantizeError::Uncertified(certificate));
    }
    Ok((replacement, certificate))
}

pub fn fold_layer(p: &BnLayerParams, k: i64) -> Result<FoldedLayer, QuantizeError> {
    let affine = fold_bn(p).expect("parameters validated on ingestion");
    let range = p.quant_range()?;
    let (replacement, certificate) = quantize_layer(&affine, k, range)?;
    Ok(FoldedLayer {
        source: p.clone(),
        affine,
        replacement,
        certificate,
    })
}

fn failure_record(err: &QuantizeError) -> LayerFailure {
    let message = err.to_string();
    match err {
        QuantizeError::NoSolution {
            k,
            witness,
            suggested_k,
        } => LayerFailure {
            kind: "no_solution".into(),
            message,
            k: Some(*k),
            witness: Some(witness.clone()),
            suggested_k: Some(*suggested_k),
        },
        QuantizeError::Uncertified(_) => LayerFailure {
            kind: "uncertified".into(),
            message,
            k: None,
            witness: None,
            suggested_k: None,
        },
        QuantizeError::Convert(_) => LayerFailure {
            kind: "convert".into(),
            message,
            k: None,
            witness: None,
            suggested_k: None,
        },
    }
}

/// Folds every layer at scale `k`, or at each layer's default scale for its
/// width when `k` is `None`. Invalid parameters abort the whole model; a layer
/// without a solution is recorded with its failure and the rest continue.
pub fn fold_model(model: &ModelFile, k: Option<i64>, exec: Exec) -> Result<FoldedModel, BnFoldError> {
    let parsed = model
        .layers
        .iter()
        .map(BnLayerParams::from_spec)
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<_> = model.layers.iter().zip(parsed).collect();
    let layers = exec.map(&jobs, |(spec, (params, notices))| {
        let range = params.quant_range().expect("validated");
        let scale = k.unwrap_or_else(|| scale_search::default_scale(range.width() as usize));
        let affine = fold_bn(params).expect("validated");
        let mut record = FoldedRecord {
            name: spec.name.clone(),
            source: (*spec).clone(),
            affine: Some(AffineText {
                t: rational::to_string(affine.t()),
                b: rational::to_string(affine.b()),
            }),
            fixed: None,
            sign: None,
            certificate: None,
            error: None,
            notices: notices.clone(),
        };
        match quantize_layer(&affine, scale, range) {
            Ok((rep, cert)) => {
                match rep {
                    Replacement::Fixed(fa) => record.fixed = Some(fa),
                    Replacement::Sign(st) => {
                        record.notices.push(format!(
                            "slope too flat for a nonzero T at this width; emitted a sign threshold (K={scale} unused)"
                        ));
                        record.sign = Some(st)
                    }
                }
                record.certificate = Some(cert);
            }
            Err(e) => record.error = Some(failure_record(&e)),
        }
        record
    });
    Ok(FoldedModel {
        scale: k,
        layers,
        metadata: model.metadata.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerComparison {
    pub name: String,
    pub replaced: bool,
    pub affine_matches: bool,
    pub checked: u64,
    /// Two-affine float path equal to the one-affine path.
    pub float_bt_agree: u64,
    /// One-affine path equal to the fixed-point replacement.
    pub bt_fixed_agree: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_disagreement: Option<i64>,
}

impl LayerComparison {
    pub fn agrees(&self) -> bool {
        self.replaced
            && self.affine_matches
            && self.float_bt_agree == self.checked
            && self.bt_fixed_agree == self.checked
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompareReport {
    pub samples: u64,
    pub seed: u64,
    pub layers: Vec<LayerComparison>,
}

impl CompareReport {
    pub fn all_agree(&self) -> bool {
        self.layers.iter().all(LayerComparison::agrees)
    }
}

fn replacement_of(rec: &FoldedRecord) -> Option<Replacement> {
    rec.fixed.map(Replacement::Fixed).or(rec.sign.map(Replacement::Sign))
}

/// Evaluates each layer three ways (unfolded, folded exact, fixed-point) on
/// its transition window and on `samples` random inputs reaching far beyond
/// it.
pub fn simulate_compare(
    model: &ModelFile,
    folded: &FoldedModel,
    samples: u64,
    seed: u64,
) -> Result<CompareReport, BnFoldError> {
    if model.layers.len() != folded.layers.len() {
        return Err(BnFoldError::LayerMismatch(format!(
            "{} layers in the model, {} in the folded file",
            model.layers.len(),
            folded.layers.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(model.layers.len());
    for (spec, rec) in model.layers.iter().zip(&folded.layers) {
        if spec.name != rec.name {
            return Err(BnFoldError::LayerMismatch(format!("`{}` vs `{}`", spec.name, rec.name)));
        }
        let (params, _) = BnLayerParams::from_spec(spec)?;
        let affine = fold_bn(&params)?;
        let (t, b) = (affine.t(), affine.b());
        let range = params.quant_range().map_err(|e| BnFoldError::InvalidParams {
            layer: spec.name.clone(),
            reason: e.to_string(),
        })?;
        let affine_matches = rec
            .affine
            .as_ref()
            .is_some_and(|a| a.t == rational::to_string(t) && a.b == rational::to_string(b));
        let replacement = replacement_of(rec);
        let window = oracle::transition_window(t, b, range, DEFAULT_MARGIN);
        let reach = (window.1 - window.0).max(1) * SENTINEL_FACTOR;
        let random: Vec<i64> = (0..samples)
            .map(|_| rng.random_range(window.0 - reach..=window.1 + reach))
            .collect();
        let mut cmp = LayerComparison {
            name: spec.name.clone(),
            replaced: replacement.is_some(),
            affine_matches,
            checked: 0,
            float_bt_agree: 0,
            bt_fixed_agree: 0,
            first_disagreement: None,
        };
        for n in (window.0..=window.1).chain(random) {
            let float = eval_two_affine(&params, n);
            let bt = oracle::eval_float_side(n, t, b, range);
            let fixed = replacement.map(|r| r.eval(n));
            cmp.checked += 1;
            if float == bt {
                cmp.float_bt_agree += 1;
            }
            if fixed == Some(bt) {
                cmp.bt_fixed_agree += 1;
            }
            if (float != bt || fixed != Some(bt)) && cmp.first_disagreement.is_none() {
                cmp.first_disagreement = Some(n);
            }
        }
        layers.push(cmp);
    }
    Ok(CompareReport { samples, seed, layers })
}

fn decimal(rng: &mut ChaCha8Rng, lo: i64, hi: i64, scale: i64) -> Rational {
    rational::ratio(rng.random_range(lo..=hi), scale)
}

/// Random BN parameters for `count` layers at activation and weight scales
/// `a` and `w`, clip range `[0, 1]`. Parameters have four decimals.
pub fn synthetic_model(count: usize, a: i64, w: i64, seed: u64) -> ModelFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = (0..count)
        .map(|i| {
            let mut gamma = decimal(&mut rng, 1000, 20000, 10000);
            if rng.random_bool(0.1) {
                gamma = -gamma;
            }
            let p = BnLayerParams {
                mu: decimal(&mut rng, -10000, 10000, 10000),
                sigma: decimal(&mut rng, 500, 20000, 10000),
                gamma,
                beta: decimal(&mut rng, -10000, 10000, 10000),
                c: decimal(&mut rng, -5000, 5000, 10000),
                w,
                a,
                y_min: 0,
                y_max: 1,
            };
            p.to_spec(&format!("block{}.bn", i + 1))
        })
        .collect();
    ModelFile {
        layers,
        metadata: Default::default(),
    }
}
