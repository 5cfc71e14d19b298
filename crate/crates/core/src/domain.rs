//! Preference sets, domain pairs and the decidable domain properties.
//!
//! Pattern notation: a preference *realizes* `[x, y, z]` when it ranks `x`
//! above `y` above `z`, not necessarily consecutively.
//!
//! Scans visit element tuples in lexicographic index order and preferences in
//! lexicographic ranking order, so every witness is reproducible.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Preference, Side};
use crate::trees::{classify_5node_subtrees, enumerate_maximal_single_peaked, is_single_peaked, ShapeKind, Tree};

/// The admissible preferences shared by every agent on one side.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PreferenceSet {
    owners: Side,
    ground: usize,
    prefs: Vec<Preference>,
}

impl PreferenceSet {
    /// `owners` is the side holding these preferences; they rank the other side.
    /// Members are sorted; duplicates are rejected.
    pub fn new(owners: Side, ground: usize, mut prefs: Vec<Preference>) -> Result<PreferenceSet> {
        if prefs.is_empty() {
            return Err(Error::InvalidDomain(format!("empty preference set for {owners}")));
        }
        if let Some(p) = prefs.iter().find(|p| p.len() != ground) {
            return Err(Error::InvalidDomain(format!(
                "preference {} does not rank all {ground} {}",
                p.render_side(owners.other()),
                owners.other()
            )));
        }
        prefs.sort();
        if let Some(w) = prefs.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidDomain(format!(
                "preference {} listed twice",
                w[0].render_side(owners.other())
            )));
        }
        Ok(PreferenceSet { owners, ground, prefs })
    }

    /// `S(T)`: every preference single-peaked on `tree`.
    pub fn maximal(owners: Side, tree: &Tree) -> PreferenceSet {
        PreferenceSet {
            owners,
            ground: tree.len(),
            prefs: enumerate_maximal_single_peaked(tree),
        }
    }

    pub fn owners(&self) -> Side {
        self.owners
    }

    /// Side whose agents are ranked.
    pub fn ranked(&self) -> Side {
        self.owners.other()
    }

    pub fn ground(&self) -> usize {
        self.ground
    }

    pub fn len(&self) -> usize {
        self.prefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefs.is_empty()
    }

    pub fn prefs(&self) -> &[Preference] {
        &self.prefs
    }

    pub fn get(&self, i: usize) -> &Preference {
        &self.prefs[i]
    }

    pub fn index_of(&self, p: &Preference) -> Option<usize> {
        self.prefs.binary_search(p).ok()
    }

    pub fn contains(&self, p: &Preference) -> bool {
        self.index_of(p).is_some()
    }

    /// Index of the first member whose top is `x`.
    pub fn first_with_top(&self, x: usize) -> Option<usize> {
        self.prefs.iter().position(|p| p.top() == x)
    }

    /// The subset picked by `mask` (bit `i` keeps member `i`).
    pub fn subset(&self, mask: u64) -> Result<PreferenceSet> {
        let prefs: Vec<Preference> = self
            .prefs
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, p)| p.clone())
            .collect();
        PreferenceSet::new(self.owners, self.ground, prefs)
    }

    pub fn render(&self, p: &Preference) -> String {
        p.render_side(self.ranked())
    }
}

/// Anonymous admissible sets for both sides, with optional ambient trees.
///
/// `tree_w` is the tree over women that men's preferences are single-peaked
/// on; `tree_m` is the tree over men for women's preferences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainPair {
    n: usize,
    men: PreferenceSet,
    women: PreferenceSet,
    tree_w: Option<Tree>,
    tree_m: Option<Tree>,
}

impl DomainPair {
    pub fn new(
        men: PreferenceSet,
        women: PreferenceSet,
        tree_w: Option<Tree>,
        tree_m: Option<Tree>,
    ) -> Result<DomainPair> {
        if men.owners() != Side::Men || women.owners() != Side::Women {
            return Err(Error::InvalidDomain("men-set and women-set swapped".into()));
        }
        let n = men.ground();
        if women.ground() != n {
            return Err(Error::InvalidDomain(format!(
                "men rank {n} women but women rank {} men",
                women.ground()
            )));
        }
        crate::model::Market::new(n)?;
        for (tree, name) in [(&tree_w, "tree over women"), (&tree_m, "tree over men")] {
            if let Some(t) = tree {
                if t.len() != n {
                    return Err(Error::InvalidDomain(format!(
                        "{name} has {} nodes, market has {n}",
                        t.len()
                    )));
                }
            }
        }
        Ok(DomainPair {
            n,
            men,
            women,
            tree_w,
            tree_m,
        })
    }

    /// `S(T_W) x S(T_M)` with trees attached.
    pub fn maximal(tree_w: Tree, tree_m: Tree) -> Result<DomainPair> {
        let men = PreferenceSet::maximal(Side::Men, &tree_w);
        let women = PreferenceSet::maximal(Side::Women, &tree_m);
        DomainPair::new(men, women, Some(tree_w), Some(tree_m))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn men(&self) -> &PreferenceSet {
        &self.men
    }

    pub fn women(&self) -> &PreferenceSet {
        &self.women
    }

    pub fn set(&self, owners: Side) -> &PreferenceSet {
        match owners {
            Side::Men => &self.men,
            Side::Women => &self.women,
        }
    }

    pub fn tree_w(&self) -> Option<&Tree> {
        self.tree_w.as_ref()
    }

    pub fn tree_m(&self) -> Option<&Tree> {
        self.tree_m.as_ref()
    }

    /// Tree that `owners`' preferences are single-peaked on.
    pub fn tree_for(&self, owners: Side) -> Option<&Tree> {
        match owners {
            Side::Men => self.tree_w.as_ref(),
            Side::Women => self.tree_m.as_ref(),
        }
    }
}

/// Result of [`is_rich`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Richness {
    /// Ground elements that top no member.
    pub missing_tops: Vec<usize>,
}

impl Richness {
    pub fn is_rich(&self) -> bool {
        self.missing_tops.is_empty()
    }
}

pub fn is_rich(set: &PreferenceSet) -> Richness {
    let mut covered = vec![false; set.ground()];
    for p in set.prefs() {
        covered[p.top()] = true;
    }
    Richness {
        missing_tops: (0..set.ground()).filter(|&x| !covered[x]).collect(),
    }
}

/// Finds an agent whose admissible set differs from agent 0's.
///
/// Returns the shared set when all agents agree (as sets).
pub fn anonymous_set(per_agent: &[Vec<Preference>]) -> std::result::Result<Vec<Preference>, usize> {
    let normalize = |v: &Vec<Preference>| {
        let mut v = v.clone();
        v.sort();
        v.dedup();
        v
    };
    let Some(first) = per_agent.first().map(normalize) else {
        return Ok(Vec::new());
    };
    for (i, other) in per_agent.iter().enumerate().skip(1) {
        if normalize(other) != first {
            return Err(i);
        }
    }
    Ok(first)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternKind {
    /// `[x,y,z]` and `[x,z,y]` both realized.
    TdViolation,
    /// `[x,y,z,t]` and `[z,x,t]` both realized.
    RotationViolation,
    /// `[x,y,z]`, `[x,z,y]` and `[y,x,z]` all realized.
    TriplePattern,
    /// A rotation violation built from a five-node subtree of the given shape.
    ShapeCase(ShapeKind),
}

/// One preference exhibiting one pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternInstance {
    pub pattern: Vec<usize>,
    pub pref: Preference,
}

/// A replayable certificate of a pattern configuration inside a set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternWitness {
    pub kind: PatternKind,
    /// `[x, y, z]` or `[x, y, z, t]`.
    pub elements: Vec<usize>,
    pub instances: Vec<PatternInstance>,
}

impl PatternWitness {
    /// Patterns the kind requires, in terms of `elements`.
    fn expected_patterns(&self) -> Option<Vec<Vec<usize>>> {
        let e = &self.elements;
        match self.kind {
            PatternKind::TdViolation if e.len() == 3 => Some(vec![vec![e[0], e[1], e[2]], vec![e[0], e[2], e[1]]]),
            PatternKind::TriplePattern if e.len() == 3 => Some(vec![
                vec![e[0], e[1], e[2]],
                vec![e[0], e[2], e[1]],
                vec![e[1], e[0], e[2]],
            ]),
            PatternKind::RotationViolation | PatternKind::ShapeCase(_) if e.len() == 4 => {
                Some(vec![vec![e[0], e[1], e[2], e[3]], vec![e[2], e[0], e[3]]])
            }
            _ => None,
        }
    }

    /// Re-checks the witness against `set` from scratch.
    pub fn replay(&self, set: &PreferenceSet) -> bool {
        let distinct = self
            .elements
            .iter()
            .enumerate()
            .all(|(i, x)| *x < set.ground() && !self.elements[..i].contains(x));
        let Some(expected) = self.expected_patterns() else {
            return false;
        };
        distinct
            && expected.len() == self.instances.len()
            && expected
                .iter()
                .zip(&self.instances)
                .all(|(pat, inst)| &inst.pattern == pat && set.contains(&inst.pref) && inst.pref.contains_pattern(pat))
    }

    pub fn describe(&self, names: &[String]) -> String {
        let name = |x: &usize| names[*x].as_str();
        let el: Vec<&str> = self.elements.iter().map(name).collect();
        let parts: Vec<String> = self
            .instances
            .iter()
            .map(|inst| {
                format!(
                    "(· {} ·) in [{}]",
                    inst.pattern.iter().map(name).collect::<Vec<_>>().join(" · "),
                    inst.pref.render(names)
                )
            })
            .collect();
        format!("{} on {}: {}", self.kind, el.join(","), parts.join("; "))
    }
}

/// Outcome of a pattern-property scan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Violated(PatternWitness),
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }

    pub fn witness(&self) -> Option<&PatternWitness> {
        match self {
            Verdict::Holds => None,
            Verdict::Violated(w) => Some(w),
        }
    }
}

/// For every ordered triple, the first member (in set order) realizing it.
fn first_triple_realizers(set: &PreferenceSet) -> Vec<Option<u32>> {
    let k = set.ground();
    let mut first = vec![None; k * k * k];
    for (i, p) in set.prefs().iter().enumerate() {
        for a in 0..k {
            for b in a + 1..k {
                for c in b + 1..k {
                    let idx = (p.at(a) * k + p.at(b)) * k + p.at(c);
                    first[idx].get_or_insert(i as u32);
                }
            }
        }
    }
    first
}

/// Top dominance: no `x, y, z` with `[x,y,z]` and `[x,z,y]` both realized.
pub fn satisfies_td(set: &PreferenceSet) -> Verdict {
    let k = set.ground();
    let first = first_triple_realizers(set);
    let at = |x: usize, y: usize, z: usize| first[(x * k + y) * k + z];
    for x in 0..k {
        for y in 0..k {
            for z in 0..k {
                if x == y || y == z || x == z {
                    continue;
                }
                if let (Some(p), Some(q)) = (at(x, y, z), at(x, z, y)) {
                    return Verdict::Violated(PatternWitness {
                        kind: PatternKind::TdViolation,
                        elements: vec![x, y, z],
                        instances: vec![
                            PatternInstance {
                                pattern: vec![x, y, z],
                                pref: set.get(p as usize).clone(),
                            },
                            PatternInstance {
                                pattern: vec![x, z, y],
                                pref: set.get(q as usize).clone(),
                            },
                        ],
                    });
                }
            }
        }
    }
    Verdict::Holds
}

/// Rotation: no `x, y, z, t` with `[x,y,z,t]` and `[z,x,t]` both realized.
pub fn satisfies_rotation(set: &PreferenceSet) -> Verdict {
    let k = set.ground();
    if k < 4 {
        return Verdict::Holds;
    }
    let triples = first_triple_realizers(set);
    let mut quads: Vec<Option<u32>> = vec![None; k * k * k * k];
    for (i, p) in set.prefs().iter().enumerate() {
        for a in 0..k {
            for b in a + 1..k {
                for c in b + 1..k {
                    for d in c + 1..k {
                        let idx = ((p.at(a) * k + p.at(b)) * k + p.at(c)) * k + p.at(d);
                        quads[idx].get_or_insert(i as u32);
                    }
                }
            }
        }
    }
    for x in 0..k {
        for y in 0..k {
            for z in 0..k {
                for t in 0..k {
                    let Some(p) = quads[((x * k + y) * k + z) * k + t] else {
                        continue;
                    };
                    if let Some(q) = triples[(z * k + x) * k + t] {
                        return Verdict::Violated(rotation_witness(
                            PatternKind::RotationViolation,
                            [x, y, z, t],
                            set.get(p as usize),
                            set.get(q as usize),
                        ));
                    }
                }
            }
        }
    }
    Verdict::Holds
}

fn rotation_witness(
    kind: PatternKind,
    [x, y, z, t]: [usize; 4],
    four: &Preference,
    three: &Preference,
) -> PatternWitness {
    PatternWitness {
        kind,
        elements: vec![x, y, z, t],
        instances: vec![
            PatternInstance {
                pattern: vec![x, y, z, t],
                pref: four.clone(),
            },
            PatternInstance {
                pattern: vec![z, x, t],
                pref: three.clone(),
            },
        ],
    }
}

/// A preference of the set that failed the single-peakedness check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpViolation {
    pub owners: Side,
    pub pref: Preference,
}

/// Checks both sets against their trees; an empty list means the domain is
/// tree-single-peaked.
pub fn check_tree_single_peaked(pair: &DomainPair) -> Result<Vec<SpViolation>> {
    let mut out = Vec::new();
    for owners in [Side::Men, Side::Women] {
        let tree = pair
            .tree_for(owners)
            .ok_or_else(|| Error::Precondition(format!("missing tree for {owners}' preferences")))?;
        for p in pair.set(owners).prefs() {
            if !is_single_peaked(p, tree)? {
                out.push(SpViolation {
                    owners,
                    pref: p.clone(),
                });
            }
        }
    }
    Ok(out)
}

fn require_rich_single_peaked(set: &PreferenceSet, tree: &Tree) -> Result<()> {
    if set.ground() != tree.len() {
        return Err(Error::Precondition(format!(
            "set ranks {} elements but tree has {} nodes",
            set.ground(),
            tree.len()
        )));
    }
    let rich = is_rich(set);
    if !rich.is_rich() {
        let missing: Vec<String> = rich.missing_tops.iter().map(|&x| tree.label(x).to_string()).collect();
        return Err(Error::Precondition(format!(
            "set is not rich (no top at {})",
            missing.join(", ")
        )));
    }
    for p in set.prefs() {
        if !is_single_peaked(p, tree)? {
            return Err(Error::Precondition(format!(
                "set is not single-peaked: [{}]",
                p.render(tree.labels())
            )));
        }
    }
    Ok(())
}

/// Brute-force scan: every `(x, y, z)` with `[x,y,z]`, `[x,z,y]` and
/// `[y,x,z]` all realized by members of `set`.
pub fn triple_pattern_scan(set: &PreferenceSet) -> Vec<[usize; 3]> {
    let k = set.ground();
    let realized = |pat: [usize; 3]| set.prefs().iter().any(|p| p.contains_pattern(&pat));
    let mut out = Vec::new();
    for x in 0..k {
        for y in 0..k {
            for z in 0..k {
                if x != y && y != z && x != z && realized([x, y, z]) && realized([x, z, y]) && realized([y, x, z]) {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Constructs `x, y, z` with `[x,y,z]`, `[x,z,y]`, `[y,x,z]` realized, for a
/// rich single-peaked set violating top dominance.
///
/// Starts from the canonical TD violation `x1 > x2 > x3` / `x1 > x3 > x2` and
/// a member peaked at `x2`. If the tree paths `x2 .. x1` and `x1 .. x3` only
/// share `x1` the triple is `(x1, x2, x3)`; otherwise `x1` is replaced by the
/// first node on `x2 .. x1` that also lies on `x1 .. x3`.
pub fn triple_pattern_witness(set: &PreferenceSet, tree: &Tree) -> Result<PatternWitness> {
    require_rich_single_peaked(set, tree)?;
    let td = match satisfies_td(set) {
        Verdict::Holds => return Err(Error::Precondition("TD holds".into())),
        Verdict::Violated(w) => w,
    };
    let (x1, x2, x3) = (td.elements[0], td.elements[1], td.elements[2]);
    let p1 = td.instances[0].pref.clone();
    let p2 = td.instances[1].pref.clone();
    let p3 = set.get(set.first_with_top(x2).expect("rich")).clone();

    let to_x1 = tree.path_between(x2, x1)?;
    let x1_to_x3 = tree.path_between(x1, x3)?;
    let head = *to_x1
        .iter()
        .find(|v| x1_to_x3.contains(v))
        .expect("both paths contain x1");
    let witness = PatternWitness {
        kind: PatternKind::TriplePattern,
        elements: vec![head, x2, x3],
        instances: vec![
            PatternInstance {
                pattern: vec![head, x2, x3],
                pref: p1,
            },
            PatternInstance {
                pattern: vec![head, x3, x2],
                pref: p2,
            },
            PatternInstance {
                pattern: vec![x2, head, x3],
                pref: p3,
            },
        ],
    };
    let constructive_ok = witness.replay(set);
    let scan_found = !triple_pattern_scan(set).is_empty();
    if !constructive_ok || !scan_found {
        return Err(Error::Internal(format!(
            "triple-pattern construction disagrees with triple scan (constructive {constructive_ok}, scan {scan_found})"
        )));
    }
    Ok(witness)
}

/// Constructs a rotation violation for a rich single-peaked set on a tree with
/// at least five nodes, following the case split on the shape of a five-node
/// subtree.
pub fn five_node_rotation_witness(set: &PreferenceSet, tree: &Tree) -> Result<PatternWitness> {
    if tree.len() < 5 || set.ground() < 5 {
        return Err(Error::Precondition(
            "rotation construction requires at least five alternatives".into(),
        ));
    }
    require_rich_single_peaked(set, tree)?;
    let shape = classify_5node_subtrees(tree, false)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Internal("tree with >= 5 nodes has no 5-node subtree".into()))?;
    let x = shape.positions;
    let peaked = |node: usize| set.get(set.first_with_top(node).expect("rich"));

    // Each candidate: (pref realizing [a,b,c,d], [a,b,c,d], pref realizing [c,a,d]).
    let candidates: Vec<(&Preference, [usize; 4], &Preference)> = match shape.kind {
        ShapeKind::Path => {
            let (p1, p3, p5) = (peaked(x[0]), peaked(x[2]), peaked(x[4]));
            vec![(p1, [x[0], x[1], x[2], x[4]], p3), (p5, [x[4], x[3], x[2], x[0]], p3)]
        }
        ShapeKind::Fork => {
            let (p1, p4, p5) = (peaked(x[0]), peaked(x[3]), peaked(x[4]));
            // after x1 x2 x3, the leaves x4 and x5 come in one of two orders
            let (a, b, pa, pb) = if p1.ranks_above(x[3], x[4]) {
                (x[3], x[4], p4, p5)
            } else {
                (x[4], x[3], p5, p4)
            };
            vec![
                (p1, [x[1], x[2], a, b], pa),
                (pa, [a, x[2], b, x[0]], pb),
                (pb, [x[2], x[1], x[0], a], p1),
            ]
        }
        ShapeKind::Star => {
            let p1 = peaked(x[0]);
            // relabel the leaves in the order the center-peaked member ranks them
            let mut leaves = [x[1], x[2], x[3], x[4]];
            leaves.sort_by_key(|&l| p1.rank_of(l));
            let p3 = peaked(leaves[1]);
            vec![(p1, [x[0], leaves[0], leaves[1], leaves[2]], p3)]
        }
    };
    for (four, quad, three) in candidates {
        if four.contains_pattern(&quad) && three.contains_pattern(&[quad[2], quad[0], quad[3]]) {
            let w = rotation_witness(PatternKind::ShapeCase(shape.kind), quad, four, three);
            debug_assert!(w.replay(set));
            return Ok(w);
        }
    }
    Err(Error::Internal(format!(
        "five-node case analysis found no violation on {} subtree",
        shape.kind
    )))
}

/// A rich, single-peaked, top-dominant set with exactly one member per peak.
///
/// First tries the canonical choice (each peak ranks the rest by tree
/// distance, ties by index); if that violates top dominance, backtracks over
/// one single-peaked preference per peak.
pub fn td_selection(owners: Side, tree: &Tree) -> Result<PreferenceSet> {
    let k = tree.len();
    if k < 3 {
        return Err(Error::Precondition("td_selection needs at least 3 nodes".into()));
    }
    let canonical: Vec<Preference> = (0..k)
        .map(|peak| {
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by_key(|&v| (tree.distance(peak, v), v));
            Preference::new(&order).expect("permutation")
        })
        .collect();
    let set = PreferenceSet::new(owners, k, canonical)?;
    if satisfies_td(&set).holds() {
        return Ok(set);
    }

    let all = enumerate_maximal_single_peaked(tree);
    let mut by_peak: Vec<Vec<&Preference>> = vec![Vec::new(); k];
    for p in &all {
        by_peak[p.top()].push(p);
    }
    let mut chosen: Vec<&Preference> = Vec::with_capacity(k);
    let mut realized = vec![false; k * k * k];
    if select(&by_peak, &mut chosen, &mut realized, k) {
        return PreferenceSet::new(owners, k, chosen.into_iter().cloned().collect());
    }
    Err(Error::NoTdSelection)
}

fn select<'a>(
    by_peak: &[Vec<&'a Preference>],
    chosen: &mut Vec<&'a Preference>,
    realized: &mut [bool],
    k: usize,
) -> bool {
    let peak = chosen.len();
    if peak == k {
        return true;
    }
    for &cand in &by_peak[peak] {
        let triples: Vec<(usize, usize, usize)> = ordered_triples(cand).collect();
        let clash = triples.iter().any(|&(x, y, z)| realized[(x * k + z) * k + y]);
        if clash {
            continue;
        }
        let fresh: Vec<usize> = triples
            .iter()
            .map(|&(x, y, z)| (x * k + y) * k + z)
            .filter(|&i| !realized[i])
            .collect();
        for &i in &fresh {
            realized[i] = true;
        }
        chosen.push(cand);
        if select(by_peak, chosen, realized, k) {
            return true;
        }
        chosen.pop();
        for &i in &fresh {
            realized[i] = false;
        }
    }
    false
}

fn ordered_triples(p: &Preference) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
    let k = p.len();
    (0..k).flat_map(move |a| (a + 1..k).flat_map(move |b| (b + 1..k).map(move |c| (p.at(a), p.at(b), p.at(c)))))
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternKind::TdViolation => f.write_str("td-violation"),
            PatternKind::RotationViolation => f.write_str("rotation-violation"),
            PatternKind::TriplePattern => f.write_str("triple-pattern"),
            PatternKind::ShapeCase(s) => write!(f, "shape-case({s})"),
        }
    }
}
