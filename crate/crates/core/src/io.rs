//! JSON document formats and their conversion into validated library types.
//!
//! Diagnostics name the offending field path (`men[2][0]`, `edges[1]`, ...);
//! syntax errors carry serde's line and column.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::audit::TableRule;
use crate::domain::{anonymous_set, td_selection, DomainPair, PreferenceSet};
use crate::error::{Error, Result};
use crate::model::{validate_profile, Agent, Market, Matching, Preference, Profile, Side};
use crate::trees::Tree;

/// Profile document: `n`, the identifier lists and one ranking per agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDoc {
    pub n: usize,
    pub men: Vec<String>,
    pub women: Vec<String>,
    pub prefs: BTreeMap<String, Vec<String>>,
}

/// Tree document: node identifiers plus `"a-b"` edges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDoc {
    pub nodes: Vec<String>,
    pub edges: Vec<String>,
}

/// How one side's admissible set is given in a domain document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetDoc {
    /// `"maximal"` or `"td"`, both relative to the side's tree.
    Named(String),
    /// One shared list of rankings.
    Shared(Vec<Vec<String>>),
    /// A list per agent; must agree across agents to be anonymous.
    PerAgent(BTreeMap<String, Vec<Vec<String>>>),
}

/// Domain document. Identifiers are canonical (`m1..mn`, `w1..wn`).
///
/// `tree_w` is a tree over women (men's preferences are single-peaked on it),
/// `tree_m` a tree over men.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainDoc {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree_w: Option<TreeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree_m: Option<TreeDoc>,
    pub men: SetDoc,
    pub women: SetDoc,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntryDoc {
    pub prefs: BTreeMap<String, Vec<String>>,
    pub matching: Vec<String>,
}

/// A table rule: one matching per listed profile. Identifiers are canonical.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRuleDoc {
    pub n: usize,
    pub entries: Vec<TableEntryDoc>,
}

/// Parses JSON text, reporting syntax and shape errors with their position.
pub fn parse_json<T: for<'de> Deserialize<'de>>(what: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("document types serialize");
    s.push('\n');
    s
}

pub fn parse_profile(text: &str) -> Result<Profile> {
    let doc: ProfileDoc = parse_json("profile", text)?;
    validate_profile(&doc).map_err(|r| Error::Parse(r.to_string().trim_end().to_string()))
}

/// Splits `"a-b"` at the unique dash whose halves are both known nodes.
fn split_edge<'a>(edge: &'a str, known: &dyn Fn(&str) -> bool) -> Option<(&'a str, &'a str)> {
    let mut found = None;
    for (i, _) in edge.match_indices('-') {
        let (a, b) = (&edge[..i], &edge[i + 1..]);
        if known(a) && known(b) {
            if found.is_some() {
                return None;
            }
            found = Some((a, b));
        }
    }
    found
}

pub fn tree_from_doc(doc: &TreeDoc, field: &str) -> Result<Tree> {
    let known = |s: &str| doc.nodes.iter().any(|n| n == s);
    let mut edges = Vec::with_capacity(doc.edges.len());
    for (i, e) in doc.edges.iter().enumerate() {
        let (a, b) = split_edge(e, &known).ok_or_else(|| {
            Error::Parse(format!(
                "{field}edges[{i}]: \"{e}\" is not an edge \"a-b\" between listed nodes"
            ))
        })?;
        edges.push((a.to_string(), b.to_string()));
    }
    Tree::from_labeled(doc.nodes.clone(), &edges).map_err(|err| match err {
        Error::InvalidTree(msg) => Error::InvalidTree(msg),
        other => Error::Parse(format!("{field}{other}")),
    })
}

pub fn tree_to_doc(tree: &Tree) -> TreeDoc {
    TreeDoc {
        nodes: tree.labels().to_vec(),
        edges: tree
            .edges()
            .into_iter()
            .map(|(a, b)| format!("{}-{}", tree.label(a), tree.label(b)))
            .collect(),
    }
}

pub fn parse_tree(text: &str) -> Result<Tree> {
    tree_from_doc(&parse_json("tree", text)?, "")
}

/// A tree over `side` whose labels are exactly the canonical labels of that
/// side; nodes are re-indexed so that `w{j}` is node `j - 1`.
pub fn canonical_side_tree(tree: &Tree, side: Side, n: usize, field: &str) -> Result<Tree> {
    if tree.len() != n {
        return Err(Error::Parse(format!(
            "{field}: tree has {} nodes, market has n = {n}",
            tree.len()
        )));
    }
    let mut edges = Vec::new();
    for (a, b) in tree.edges() {
        let idx = |x: usize| -> Result<usize> {
            let label = tree.label(x);
            let agent: Agent = label
                .parse()
                .map_err(|_| Error::Parse(format!("{field}: node {label} is not a {side} identifier")))?;
            if agent.side != side || agent.index >= n {
                return Err(Error::Parse(format!(
                    "{field}: node {label} is not a {side} identifier"
                )));
            }
            Ok(agent.index)
        };
        edges.push((idx(a)?, idx(b)?));
    }
    Tree::over_side(side, n, &edges)
}

fn ranking_from_labels(owners: Side, n: usize, labels: &[String], field: &str) -> Result<Preference> {
    let ranked = owners.other();
    let mut idx = Vec::with_capacity(labels.len());
    for (i, l) in labels.iter().enumerate() {
        let agent: Agent = l
            .parse()
            .map_err(|_| Error::Parse(format!("{field}[{i}]: unknown identifier \"{l}\"")))?;
        if agent.side != ranked {
            return Err(Error::Parse(format!(
                "{field}[{i}]: wrong-side ranking ({l} is not one of the {ranked})"
            )));
        }
        if agent.index >= n {
            return Err(Error::Parse(format!("{field}[{i}]: {l} outside market of size {n}")));
        }
        idx.push(agent.index);
    }
    if idx.len() != n {
        return Err(Error::Parse(format!(
            "{field}: ranking has {} entries, expected {n}",
            idx.len()
        )));
    }
    Preference::new(&idx).map_err(|e| Error::Parse(format!("{field}: {e}")))
}

fn rankings_from_labels(owners: Side, n: usize, list: &[Vec<String>], field: &str) -> Result<Vec<Preference>> {
    list.iter()
        .enumerate()
        .map(|(i, r)| ranking_from_labels(owners, n, r, &format!("{field}[{i}]")))
        .collect()
}

/// Why a side's admissible sets are not anonymous.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnonymityFailure {
    pub side: Side,
    pub first_agent: String,
    pub differing_agent: String,
}

/// A parsed domain document.
///
/// Non-anonymous per-agent sets are merged into their union, so the other
/// properties can still be reported; the failure is kept in `anonymity`.
#[derive(Clone, Debug)]
pub struct ParsedDomain {
    pub pair: DomainPair,
    pub anonymity: Vec<AnonymityFailure>,
}

impl ParsedDomain {
    /// The domain, or an error when a side is not anonymous.
    pub fn into_anonymous(self) -> Result<DomainPair> {
        match self.anonymity.first() {
            None => Ok(self.pair),
            Some(f) => Err(Error::InvalidDomain(format!(
                "{} sets are not anonymous: {} and {} differ",
                f.side, f.first_agent, f.differing_agent
            ))),
        }
    }
}

pub fn domain_from_doc(doc: &DomainDoc) -> Result<ParsedDomain> {
    let n = doc.n;
    Market::new(n).map_err(|e| Error::Parse(format!("n: {e}")))?;
    let tree_w = match &doc.tree_w {
        Some(t) => Some(canonical_side_tree(
            &tree_from_doc(t, "tree_w.")?,
            Side::Women,
            n,
            "tree_w",
        )?),
        None => None,
    };
    let tree_m = match &doc.tree_m {
        Some(t) => Some(canonical_side_tree(
            &tree_from_doc(t, "tree_m.")?,
            Side::Men,
            n,
            "tree_m",
        )?),
        None => None,
    };
    let mut anonymity = Vec::new();
    let mut side_set = |owners: Side, set: &SetDoc, tree: Option<&Tree>, field: &str| -> Result<PreferenceSet> {
        match set {
            SetDoc::Named(name) => {
                let tree = tree.ok_or_else(|| {
                    Error::Parse(format!("{field}: \"{name}\" needs tree_{}", owners.other().prefix()))
                })?;
                match name.as_str() {
                    "maximal" => Ok(PreferenceSet::maximal(owners, tree)),
                    "td" => td_selection(owners, tree),
                    other => Err(Error::Parse(format!(
                        "{field}: unknown set name \"{other}\" (expected \"maximal\", \"td\" or a list)"
                    ))),
                }
            }
            SetDoc::Shared(list) => {
                let prefs = rankings_from_labels(owners, n, list, field)?;
                PreferenceSet::new(owners, n, prefs).map_err(|e| Error::Parse(format!("{field}: {e}")))
            }
            SetDoc::PerAgent(map) => {
                let labels = owners.labels(n);
                if let Some(k) = map.keys().find(|k| !labels.contains(k)) {
                    return Err(Error::Parse(format!("{field}.{k}: not one of the {owners}")));
                }
                let mut per_agent = Vec::with_capacity(n);
                for l in &labels {
                    let list = map
                        .get(l)
                        .ok_or_else(|| Error::Parse(format!("{field}.{l}: agent without admissible set")))?;
                    per_agent.push(rankings_from_labels(owners, n, list, &format!("{field}.{l}"))?);
                }
                let union = match anonymous_set(&per_agent) {
                    Ok(shared) => shared,
                    Err(i) => {
                        anonymity.push(AnonymityFailure {
                            side: owners,
                            first_agent: labels[0].clone(),
                            differing_agent: labels[i].clone(),
                        });
                        let mut all: Vec<Preference> = per_agent.into_iter().flatten().collect();
                        all.sort();
                        all.dedup();
                        all
                    }
                };
                PreferenceSet::new(owners, n, union).map_err(|e| Error::Parse(format!("{field}: {e}")))
            }
        }
    };
    let men = side_set(Side::Men, &doc.men, tree_w.as_ref(), "men")?;
    let women = side_set(Side::Women, &doc.women, tree_m.as_ref(), "women")?;
    let pair = DomainPair::new(men, women, tree_w, tree_m)?;
    Ok(ParsedDomain { pair, anonymity })
}

pub fn parse_domain(text: &str) -> Result<ParsedDomain> {
    domain_from_doc(&parse_json("domain", text)?)
}

/// Serializes a domain with explicit shared lists.
pub fn domain_to_doc(pair: &DomainPair) -> DomainDoc {
    let list = |set: &PreferenceSet| SetDoc::Shared(set.prefs().iter().map(|p| p.labels(set.ranked())).collect());
    DomainDoc {
        n: pair.n(),
        tree_w: pair.tree_w().map(tree_to_doc),
        tree_m: pair.tree_m().map(tree_to_doc),
        men: list(pair.men()),
        women: list(pair.women()),
    }
}

fn canonical_profile(n: usize, prefs: &BTreeMap<String, Vec<String>>, field: &str) -> Result<Profile> {
    let doc = ProfileDoc {
        n,
        men: Side::Men.labels(n),
        women: Side::Women.labels(n),
        prefs: prefs.clone(),
    };
    validate_profile(&doc).map_err(|r| {
        let issues: Vec<String> = r.issues.iter().map(|i| i.to_string()).collect();
        Error::Parse(format!("{field}: {}", issues.join("; ")))
    })
}

pub fn table_rule_from_doc(doc: &TableRuleDoc) -> Result<TableRule> {
    Market::new(doc.n).map_err(|e| Error::Parse(format!("n: {e}")))?;
    let mut rule = TableRule::new(doc.n);
    for (i, entry) in doc.entries.iter().enumerate() {
        let profile = canonical_profile(doc.n, &entry.prefs, &format!("entries[{i}].prefs"))?;
        let mu = Matching::from_pairs(doc.n, &entry.matching)
            .map_err(|e| Error::Parse(format!("entries[{i}].matching: {e}")))?;
        if !rule.insert(&profile, mu) {
            return Err(Error::Parse(format!("entries[{i}]: profile listed twice")));
        }
    }
    Ok(rule)
}

pub fn table_rule_to_doc(rule: &TableRule) -> TableRuleDoc {
    TableRuleDoc {
        n: rule.n(),
        entries: rule
            .entries()
            .map(|(profile, mu)| TableEntryDoc {
                prefs: profile.to_doc().prefs,
                matching: mu.to_pair_strings(),
            })
            .collect(),
    }
}

pub fn parse_table_rule(text: &str) -> Result<TableRule> {
    table_rule_from_doc(&parse_json("table rule", text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PATH3: &str = r#"{"nodes": ["w1", "w2", "w3"], "edges": ["w1-w2", "w2-w3"]}"#;

    #[test]
    fn tree_round_trip() {
        let t = parse_tree(PATH3).unwrap();
        assert_eq!(t.path_between(0, 2).unwrap(), vec![0, 1, 2]);
        let again = tree_from_doc(&tree_to_doc(&t), "").unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn edges_with_dashed_identifiers() {
        let doc = TreeDoc {
            nodes: vec!["a-1".into(), "b".into(), "c".into()],
            edges: vec!["a-1-b".into(), "b-c".into()],
        };
        assert_eq!(tree_from_doc(&doc, "").unwrap().degree(1), 2);
    }

    #[test]
    fn cyclic_edge_list_is_rejected() {
        let text = r#"{"nodes": ["w1", "w2", "w3"], "edges": ["w1-w2", "w2-w3", "w3-w1"]}"#;
        let err = parse_tree(text).unwrap_err().to_string();
        assert!(err.starts_with("not a tree: cycle"), "{err}");
    }

    #[test]
    fn bad_edge_is_located() {
        let text = r#"{"nodes": ["w1", "w2", "w3"], "edges": ["w1-w2", "w2w3"]}"#;
        assert!(parse_tree(text).unwrap_err().to_string().contains("edges[1]"));
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_tree("{\"nodes\": [\n  \"w1\",\n}").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn domain_with_named_sets() {
        let text = format!(
            r#"{{"n": 3, "tree_w": {PATH3}, "tree_m": {{"nodes": ["m1","m2","m3"], "edges": ["m2-m1","m2-m3"]}},
                "men": "maximal", "women": "td"}}"#
        );
        let d = parse_domain(&text).unwrap().into_anonymous().unwrap();
        assert_eq!(d.men().len(), 4);
        assert_eq!(d.women().len(), 3);
    }

    #[test]
    fn wrong_side_ranking_is_reported() {
        let text = r#"{"n": 3, "men": [["m1","m2","m3"]], "women": [["m1","m2","m3"]]}"#;
        let err = parse_domain(text).unwrap_err().to_string();
        assert!(err.contains("men[0][0]: wrong-side ranking"), "{err}");
    }

    #[test]
    fn per_agent_sets_detect_non_anonymity() {
        let text = r#"{"n": 3,
            "men": {"m1": [["w1","w2","w3"]], "m2": [["w1","w2","w3"]], "m3": [["w2","w1","w3"]]},
            "women": [["m1","m2","m3"]]}"#;
        let parsed = parse_domain(text).unwrap();
        assert_eq!(parsed.anonymity.len(), 1);
        assert_eq!(parsed.anonymity[0].differing_agent, "m3");
        assert_eq!(parsed.pair.men().len(), 2);
        assert!(parsed.into_anonymous().is_err());
    }

    #[test]
    fn named_set_needs_tree() {
        let text = r#"{"n": 3, "men": "maximal", "women": [["m1","m2","m3"]]}"#;
        assert!(parse_domain(text).unwrap_err().to_string().contains("needs tree_w"));
    }

    #[test]
    fn table_rule_round_trip() {
        let p = Profile::from_rankings(
            &[vec![0, 1, 2], vec![1, 0, 2], vec![0, 1, 2]],
            &[vec![1, 0, 2], vec![0, 1, 2], vec![1, 2, 0]],
        )
        .unwrap();
        let mut rule = TableRule::new(3);
        rule.insert(&p, Matching::from_wives(&[1, 0, 2]).unwrap());
        let text = to_json(&table_rule_to_doc(&rule));
        let back = parse_table_rule(&text).unwrap();
        assert_eq!(back, rule);
        assert_eq!(to_json(&table_rule_to_doc(&back)), text);
    }
}
