//! Exact folding of batch-normalization layers into fixed-point affine
//! operators with a shared integer scale.
//!
//! The pipeline is: fold the BN parameters into a one-affine operator
//! `(t, b)` ([`bnfold`]), pick a scale `K` that works for the activation
//! width ([`scale_search`]), solve for integers `(T, B)` ([`convert`]) and
//! certify the replacement input by input ([`oracle`]).

pub mod bnfold;
pub mod convert;
pub mod exec;
pub mod model;
pub mod oracle;
pub mod rational;
pub mod scale_search;
pub mod seqgen;

pub use exec::Exec;
pub use rational::Rational;
