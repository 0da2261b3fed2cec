//! Exact-arithmetic lab for two-party protocol joints.
//!
//! Everything probabilistic is a finite joint distribution with exact
//! `BigRational` masses; logarithmic quantities (entropies, divergences,
//! transcript costs) are evaluated in `f64`, always in bits. The crate
//! covers:
//!
//! * information measures over joint tables ([`info`]),
//! * standard and generalized protocols as explicit joints ([`protocol`]),
//! * transcript costs against a reference input distribution ([`costs`]),
//! * the recursive advantage decomposition and its audit ([`decompose`]),
//! * XOR-power constructions, embedding, majority boosting, and the
//!   rejection-sampling coupling ([`constructions`]),
//! * a CLI wrapping all of it ([`cli`]).

mod error;

pub mod cli;
pub mod constructions;
pub mod costs;
pub mod decompose;
pub mod gen;
pub mod info;
pub mod io;
pub mod protocol;
pub mod rational;
pub mod report;
pub mod suites;
pub mod table;

pub use error::{Error, Result};

/// Default cap on materialized joint-table entries.
pub const DEFAULT_ENTRY_BUDGET: usize = 5_000_000;

/// Default comparison tolerance for float-valued checks, in bits.
pub const DEFAULT_TOL: f64 = 1e-9;
