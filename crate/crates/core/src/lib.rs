//! Hierarchical secure aggregation over a prime field.
//!
//! A server aggregates inputs from `U` relays, each serving `V` users, while
//! any relay or the server may collude with up to `T` users. This crate
//! computes the optimal rate region, builds key-generation schemes that reach
//! it, simulates rounds, and audits schemes for security.
//!
//! ```
//! use hsa_core::{audit, build_scheme, optimal_rates, HsaConfig};
//!
//! let cfg = HsaConfig::new(2, 3, 1).unwrap();
//! let rates = optimal_rates(&cfg).unwrap().rates().unwrap();
//! assert_eq!(rates.r_z_sigma, 4);
//!
//! let scheme = build_scheme(&cfg, None).unwrap();
//! assert_eq!(scheme.n_source(), 4);
//! assert!(audit(&scheme).unwrap().is_clean());
//! ```

pub mod audit;
pub mod combinatorics;
pub mod error;
pub mod field;
pub mod golden;
pub mod matrix;
pub mod protocol;
pub mod rates;
pub mod scheme;
pub mod vandermonde;

#[cfg(test)]
mod testutil;

pub use audit::{
    audit, audit_with, exact_audit, exact_independence_check, infeasibility_attack, AttackOutcome,
    AuditReport, CollusionSet, IndependenceMode, Verdict, Violation, ViolationKind,
};
pub use error::{HsaError, Result};
pub use field::FieldSpec;
pub use matrix::FqMatrix;
pub use protocol::{
    measure_rates, run_round, sample_round, ObservedRates, RoundInputs, RoundTranscript,
};
pub use rates::{optimal_rates, ActiveBranch, HsaConfig, OptimalRates, RateRegion, RateRow};
pub use scheme::{
    build_baseline, build_scheme, derive_keys, import_scheme, CoefficientScheme, KeyMaterial,
    SchemeKind, UserId,
};
pub use vandermonde::ElementSet;
