//! Run reports and their two renderings.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use matchkit_core::audit::{AuditReport, Witness};
use matchkit_core::io::ProfileDoc;
use matchkit_core::model::{Matching, Profile};
use matchkit_core::replication::tables::ConstructionDoc;
use matchkit_core::replication::theorems::TheoremReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Human,
    Structured,
}

#[derive(Clone, Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &str, bytes: &[u8]) -> InputDigest {
        InputDigest {
            path: path.to_string(),
            sha256: Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect(),
        }
    }
}

/// Everything one invocation produced. Identical inputs and seed give an
/// identical report unless timing is requested.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub inputs: Vec<InputDigest>,
    pub results: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
    /// Human rendering of `results`; not serialized.
    #[serde(skip)]
    pub human: String,
}

pub fn emit(report: &RunReport, format: Format) -> String {
    match format {
        Format::Structured => {
            let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Human => {
            let mut s = report.human.clone();
            if let Some(seed) = report.seed {
                let _ = writeln!(s, "seed: {seed}");
            }
            if let Some(ms) = report.wall_time_ms {
                let _ = writeln!(s, "wall time: {ms} ms");
            }
            s
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessDoc {
    pub kind: String,
    pub profile: ProfileDoc,
    pub deviators: Vec<String>,
    pub misreports: Vec<MisreportDoc>,
    pub before: Vec<String>,
    pub after: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MisreportDoc {
    pub agent: String,
    pub ranking: Vec<String>,
}

impl WitnessDoc {
    pub fn of(w: &Witness) -> WitnessDoc {
        WitnessDoc {
            kind: w.kind.to_string(),
            profile: w.profile.to_doc(),
            deviators: w.deviators.iter().map(|a| a.to_string()).collect(),
            misreports: w
                .misreports
                .iter()
                .map(|(a, p)| MisreportDoc {
                    agent: a.to_string(),
                    ranking: p.labels(a.side.other()),
                })
                .collect(),
            before: w.before.to_pair_strings(),
            after: w.after.to_pair_strings(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditDoc {
    pub check: String,
    pub rule: String,
    pub profiles: u128,
    pub planned_evaluations: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped_outside_domain: Option<u64>,
    pub summary: String,
    pub witnesses: Vec<WitnessDoc>,
}

impl AuditDoc {
    pub fn of(r: &AuditReport) -> AuditDoc {
        AuditDoc {
            check: r.check.label().to_string(),
            rule: r.rule.to_string(),
            profiles: r.profiles,
            planned_evaluations: r.planned_evaluations,
            skipped_outside_domain: r.skipped_outside_domain,
            summary: witness_summary(r.witnesses.len()),
            witnesses: r.witnesses.iter().map(WitnessDoc::of).collect(),
        }
    }
}

pub fn witness_summary(k: usize) -> String {
    match k {
        1 => "1 witness".to_string(),
        k => format!("{k} witnesses"),
    }
}

pub fn matching_line(mu: &Matching) -> String {
    mu.to_pair_strings().join(" ")
}

pub fn profile_line(p: &Profile) -> String {
    let doc = p.to_doc();
    doc.men
        .iter()
        .chain(doc.women.iter())
        .map(|a| format!("{a}: {}", doc.prefs[a].join(" ")))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn human_audit(r: &AuditReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} audit of {} over {} profiles: {}",
        r.check.label(),
        r.rule,
        r.profiles,
        witness_summary(r.witnesses.len())
    );
    if let (Some(k), "table") = (r.skipped_outside_domain, r.rule) {
        let _ = writeln!(s, "deviations outside the rule's table: {k}");
    }
    for (i, w) in r.witnesses.iter().enumerate() {
        let _ = writeln!(s, "witness {} ({}):", i + 1, w.kind);
        let _ = writeln!(s, "  profile   {}", profile_line(&w.profile));
        let deviators: Vec<String> = w.deviators.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(s, "  coalition {}", deviators.join(" "));
        for (a, p) in &w.misreports {
            let _ = writeln!(s, "  {a} reports {}", p.render_side(a.side.other()));
        }
        let _ = writeln!(s, "  before    {}", matching_line(&w.before));
        let _ = writeln!(s, "  after     {}", matching_line(&w.after));
    }
    s
}

/// Rows are profiles, columns are agents, cells name preferences.
pub fn human_table(doc: &ConstructionDoc) -> String {
    let mut s = String::new();
    let label_w = 5;
    let width = doc
        .headers
        .iter()
        .chain(doc.rows.iter().flatten())
        .map(|c| c.chars().count())
        .max()
        .unwrap_or(2)
        + 2;
    let n = doc.headers.len() / 2;
    let row = |label: &str, cells: &[String]| {
        let mut line = format!("{label:<label_w$}");
        for (i, c) in cells.iter().enumerate() {
            if i == n {
                line.push_str("| ");
            }
            line.push_str(&format!("{c:<width$}"));
        }
        line.trim_end().to_string()
    };
    let _ = writeln!(s, "{}", row("", &doc.headers));
    for (i, cells) in doc.rows.iter().enumerate() {
        let _ = writeln!(s, "{}", row(&format!("P^{}", i + 1), cells));
    }
    let _ = writeln!(s, "where");
    for e in &doc.legend {
        let _ = writeln!(s, "  {:<6} {}", e.name, e.ranking.join(" "));
    }
    let _ = writeln!(s, "mu1 = {}", doc.mu1.join(" "));
    let _ = writeln!(s, "mu2 = {}", doc.mu2.join(" "));
    s
}

pub fn human_theorem(r: &TheoremReport) -> String {
    let mut s = String::new();
    let scope = serde_json::to_value(r.scope).expect("scope serializes");
    let _ = write!(s, "{}: {} (n = {}", r.claim, r.status, r.n);
    if r.reason.is_none() {
        let _ = write!(s, ", {}", scope.as_str().unwrap_or_default());
    }
    if !r.trees.is_empty() {
        let _ = write!(s, ", trees: {}", r.trees.join(", "));
    }
    let _ = writeln!(s, ")");
    if let Some(reason) = &r.reason {
        let _ = writeln!(s, "  {reason}");
    }
    for c in &r.checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        if c.detail.is_empty() {
            let _ = writeln!(s, "  [{mark}] {}", c.name);
        } else {
            let _ = writeln!(s, "  [{mark}] {}: {}", c.name, c.detail);
        }
    }
    for doc in &r.tables {
        let _ = writeln!(s);
        let kind = serde_json::to_value(doc.kind).expect("kind serializes");
        let _ = writeln!(
            s,
            "  {} construction, case {}",
            kind.as_str().unwrap_or_default(),
            doc.case
        );
        for line in human_table(doc).lines() {
            let _ = writeln!(s, "  {line}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_counts() {
        assert_eq!(witness_summary(0), "0 witnesses");
        assert_eq!(witness_summary(1), "1 witness");
        assert_eq!(witness_summary(7), "7 witnesses");
    }

    #[test]
    fn digest_is_hex_sha256() {
        let d = InputDigest::of("x", b"abc");
        assert_eq!(
            d.sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
