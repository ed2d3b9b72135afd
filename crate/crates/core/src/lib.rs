//! Frequency-constrained unit commitment for coupled electricity and gas
//! systems under distributionally robust wind uncertainty.

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod drcc;
pub mod eval;
pub mod freq;
pub mod gasnet;
pub mod instance;
pub mod optmodel;
pub mod scheduler;
