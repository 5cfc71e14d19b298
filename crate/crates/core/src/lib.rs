//! Two-sided one-to-one matching on tree-single-peaked preference domains.
//!
//! The crate covers the model ([`model`]), trees and single-peakedness
//! ([`trees`]), deferred acceptance and stable sets ([`da`]), domain
//! properties with constructive violation witnesses ([`domain`]), exhaustive
//! incentive audits ([`audit`]), reconstructions of the impossibility
//! profiles together with a rule-existence search ([`replication`]), and the
//! JSON document formats ([`io`]).
//!
//! Heavy loops run on rayon when the `parallel` feature is on (the default).
//! Every result is independent of the thread count.

pub mod audit;
pub mod da;
pub mod domain;
pub mod error;
pub mod io;
pub mod model;
pub mod par;
pub mod replication;
pub mod trees;

#[cfg(test)]
pub(crate) mod testutil;

pub use audit::{
    apply_rule, AuditCheck, AuditOptions, AuditReport, ProfileSpace, Rule, TableRule, Witness, WitnessKind,
};
pub use da::{deferred_acceptance, enumerate_stable, is_stable, StableSet};
pub use domain::{DomainPair, PatternWitness, PreferenceSet, Verdict};
pub use error::{Error, Result};
pub use model::{Agent, Market, Matching, Preference, PreferenceLookup, Profile, Side};
pub use trees::Tree;
