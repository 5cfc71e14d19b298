//! Reconstructions of the impossibility profiles and the rule-existence search.

pub mod oracle;
pub mod tables;
pub mod theorems;

pub use oracle::{rule_existence_oracle, OracleOptions, OracleOutcome, OracleReport, Requirement};
pub use tables::{
    build_rotation_profiles, build_rotation_profiles_from, build_td_violation_profiles, check_construction,
    Construction,
};
pub use theorems::{verify_theorem, Claim, Scope, Status, TheoremConfig, TheoremReport, TreeChoice};
