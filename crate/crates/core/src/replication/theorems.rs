//! Runnable checks for the main existence and impossibility claims.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::audit::{
    apply_rule, audit, default_max_coalition, AuditCheck, AuditOptions, ProfileKey, ProfileSpace, Rule, TableRule,
    Witness, WitnessKind,
};
use crate::domain::{
    five_node_rotation_witness, is_rich, satisfies_rotation, satisfies_td, td_selection, DomainPair, PreferenceSet,
    Verdict,
};
use crate::error::{Error, Result};
use crate::model::{Agent, Market, PreferenceLookup, Profile, Side};
use crate::replication::oracle::{rule_existence_oracle, OracleOptions, OracleOutcome, Requirement};
use crate::replication::tables::{
    build_rotation_profiles, build_rotation_profiles_from, build_td_violation_profiles, check_construction,
    Construction, ConstructionDoc,
};
use crate::trees::Tree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Claim {
    /// A TD side makes some stable rule strategy-proof.
    Thm1If,
    /// Two TD-violating sides admit no stable strategy-proof rule.
    Thm1OnlyIf,
    /// The maximal domain admits no stable strategy-proof rule.
    Cor1Maximal,
    /// Stable and weakly group strategy-proof existence follows TD.
    Cor2Wgsp,
    /// Whenever a stable strategy-proof rule exists, a DA rule is weakly group strategy-proof.
    Cor3DaWgsp,
    /// Two rotation-violating sides admit no stable non-bossy rule.
    PropCRotation,
    /// With five or more agents per side, no stable non-bossy rule exists.
    ThmDN5,
    /// With five or more agents per side, no stable group strategy-proof rule exists.
    Cor4Gsp,
}

impl Claim {
    pub const ALL: [Claim; 8] = [
        Claim::Thm1If,
        Claim::Thm1OnlyIf,
        Claim::Cor1Maximal,
        Claim::Cor2Wgsp,
        Claim::Cor3DaWgsp,
        Claim::PropCRotation,
        Claim::ThmDN5,
        Claim::Cor4Gsp,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Claim::Thm1If => "thm1-if",
            Claim::Thm1OnlyIf => "thm1-onlyif",
            Claim::Cor1Maximal => "cor1-maximal",
            Claim::Cor2Wgsp => "cor2-wgsp",
            Claim::Cor3DaWgsp => "cor3-dawgsp",
            Claim::PropCRotation => "propC-rotation",
            Claim::ThmDN5 => "thmD-n5",
            Claim::Cor4Gsp => "cor4-gsp",
        }
    }

    fn default_n(self) -> usize {
        match self {
            Claim::PropCRotation => 4,
            Claim::ThmDN5 | Claim::Cor4Gsp => 5,
            _ => 3,
        }
    }
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Claim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Claim> {
        match s {
            "propC" => return Ok(Claim::PropCRotation),
            "thmD" => return Ok(Claim::ThmDN5),
            _ => {}
        }
        Claim::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| Error::Parse(format!("unknown claim \"{s}\"")))
    }
}

impl Serialize for Claim {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

/// Which tree both sides use.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeChoice {
    Path,
    Star,
    Fork,
    /// A tree on `n` nodes; its structure is copied to both sides in node order.
    Custom(Tree),
}

impl TreeChoice {
    fn name(&self) -> String {
        match self {
            TreeChoice::Path => "path".into(),
            TreeChoice::Star => "star".into(),
            TreeChoice::Fork => "fork".into(),
            TreeChoice::Custom(t) => format!("custom({})", t.edges().len() + 1),
        }
    }

    /// Trees over women and over men.
    pub fn build(&self, n: usize) -> Result<(Tree, Tree)> {
        let make = |side: Side| -> Result<Tree> {
            let labels = side.labels(n);
            match self {
                TreeChoice::Path => Tree::path(labels),
                TreeChoice::Star => Tree::star(labels, 0),
                TreeChoice::Fork => Tree::fork(labels),
                TreeChoice::Custom(t) => {
                    if t.len() != n {
                        return Err(Error::Precondition(format!("tree has {} nodes, need n = {n}", t.len())));
                    }
                    t.relabeled(labels)
                }
            }
        };
        Ok((make(Side::Women)?, make(Side::Men)?))
    }
}

pub const DEFAULT_EXHAUSTIVE_LIMIT: u128 = 20_000_000;

#[derive(Clone, Debug)]
pub struct TheoremConfig {
    pub n: Option<usize>,
    /// `None` uses each claim's default trees.
    pub tree: Option<TreeChoice>,
    pub seed: u64,
    /// Samples per sampled sweep.
    pub samples: usize,
    /// Largest planned evaluation count audited exhaustively; larger spaces are sampled.
    pub exhaustive_limit: u128,
    pub audit: AuditOptions,
    pub oracle: OracleOptions,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        TheoremConfig {
            n: None,
            tree: None,
            seed: 0,
            samples: 16,
            exhaustive_limit: DEFAULT_EXHAUSTIVE_LIMIT,
            audit: AuditOptions::default(),
            oracle: OracleOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Verified,
    Refuted,
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Verified => "verified",
            Status::Refuted => "refuted",
            Status::Skipped => "skipped",
        })
    }
}

/// How much of the claim's quantifier the run covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    /// Every rich anonymous domain on the listed trees.
    Exhaustive,
    /// The constructive counterexample or the named domains only.
    Constructive,
    /// Seeded samples.
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoremReport {
    pub claim: Claim,
    pub status: Status,
    pub scope: Scope,
    pub n: usize,
    pub trees: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub checks: Vec<CheckResult>,
    pub tables: Vec<ConstructionDoc>,
    #[serde(skip)]
    pub constructions: Vec<Construction>,
}

struct Run {
    scope: Scope,
    trees: Vec<String>,
    checks: Vec<CheckResult>,
    constructions: Vec<Construction>,
    sampled: bool,
}

impl Run {
    fn new() -> Run {
        Run {
            scope: Scope::Constructive,
            trees: Vec::new(),
            checks: Vec::new(),
            constructions: Vec::new(),
            sampled: false,
        }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

pub fn verify_theorem(claim: Claim, config: &TheoremConfig) -> Result<TheoremReport> {
    let n = config.n.unwrap_or(claim.default_n());
    let skip = |reason: &str| TheoremReport {
        claim,
        status: Status::Skipped,
        scope: Scope::Constructive,
        n,
        trees: Vec::new(),
        reason: Some(reason.to_string()),
        seed: None,
        checks: Vec::new(),
        tables: Vec::new(),
        constructions: Vec::new(),
    };
    match claim {
        Claim::PropCRotation if n < 4 => return Ok(skip("rotation violations need n >= 4")),
        Claim::ThmDN5 | Claim::Cor4Gsp if n < 5 => return Ok(skip("theorem requires n >= 5")),
        _ => {}
    }
    if let Some(TreeChoice::Fork) = config.tree {
        if n < 4 {
            return Ok(skip("fork trees need n >= 4"));
        }
    }
    let mut run = Run::new();
    let result = match claim {
        Claim::Thm1If => thm1_if(n, config, &mut run),
        Claim::Thm1OnlyIf => thm1_only_if(n, config, &mut run),
        Claim::Cor1Maximal => cor1_maximal(n, config, &mut run),
        Claim::Cor2Wgsp => cor2_wgsp(n, config, &mut run),
        Claim::Cor3DaWgsp => cor3_da_wgsp(n, config, &mut run),
        Claim::PropCRotation => prop_c(n, config, &mut run),
        Claim::ThmDN5 => thm_d(n, config, &mut run),
        Claim::Cor4Gsp => cor4_gsp(n, config, &mut run),
    };
    if let Err(e) = result {
        if e.is_budget() {
            return Err(e);
        }
        run.check("pipeline", false, e.to_string());
    }
    let status = if run.checks.iter().all(|c| c.passed) {
        Status::Verified
    } else {
        Status::Refuted
    };
    Ok(TheoremReport {
        claim,
        status,
        scope: run.scope,
        n,
        trees: run.trees,
        reason: None,
        seed: run.sampled.then_some(config.seed),
        checks: run.checks,
        tables: run.constructions.iter().map(Construction::to_doc).collect(),
        constructions: run.constructions,
    })
}

/// Tree pairs to sweep: all labelled 3-node trees when no tree is named at
/// `n = 3`, otherwise the named (or path) tree on both sides.
fn tree_pairs(n: usize, config: &TheoremConfig, run: &mut Run) -> Result<Vec<(Tree, Tree)>> {
    match (&config.tree, n) {
        (None, 3) => {
            let centred = |side: Side, c: usize| Tree::star(side.labels(3), c);
            let mut out = Vec::new();
            // centre 1 first: the path in label order
            for cw in [1, 0, 2] {
                for cm in [1, 0, 2] {
                    out.push((centred(Side::Women, cw)?, centred(Side::Men, cm)?));
                }
            }
            run.trees.push("all 3-node trees on each side".into());
            Ok(out)
        }
        (choice, _) => {
            let choice = choice.clone().unwrap_or(TreeChoice::Path);
            run.trees.push(choice.name());
            Ok(vec![choice.build(n)?])
        }
    }
}

fn default_trees(n: usize, config: &TheoremConfig, run: &mut Run) -> Result<(Tree, Tree)> {
    let choice = config.tree.clone().unwrap_or(TreeChoice::Path);
    run.trees.push(choice.name());
    choice.build(n)
}

/// Rich subsets of a small set, in mask order.
fn rich_subsets(set: &PreferenceSet) -> Result<Vec<PreferenceSet>> {
    if set.len() > 16 {
        return Err(Error::Precondition(format!(
            "{} preferences are too many for a subset sweep",
            set.len()
        )));
    }
    let mut out = Vec::new();
    for mask in 1u64..(1 << set.len()) {
        let s = set.subset(mask)?;
        if is_rich(&s).is_rich() {
            out.push(s);
        }
    }
    Ok(out)
}

/// Rich domains on a tree pair, with a flag per side for TD.
fn rich_domains(tw: &Tree, tm: &Tree) -> Result<Vec<(DomainPair, bool, bool)>> {
    let men = rich_subsets(&PreferenceSet::maximal(Side::Men, tw))?;
    let women = rich_subsets(&PreferenceSet::maximal(Side::Women, tm))?;
    let mut out = Vec::new();
    for m in &men {
        for w in &women {
            let d = DomainPair::new(m.clone(), w.clone(), Some(tw.clone()), Some(tm.clone()))?;
            out.push((d, satisfies_td(m).holds(), satisfies_td(w).holds()));
        }
    }
    Ok(out)
}

/// The DA rule whose receiving side satisfies TD.
fn da_for(men_td: bool, women_td: bool) -> Vec<Rule> {
    let mut rules = Vec::new();
    if women_td {
        rules.push(Rule::MenProposing);
    }
    if men_td {
        rules.push(Rule::WomenProposing);
    }
    rules
}

/// A space that fits the audit budget: the full space, or seeded sampled
/// base profiles.
fn audit_space(domain: &DomainPair, check: AuditCheck, config: &TheoremConfig, run: &mut Run) -> Result<ProfileSpace> {
    let full = ProfileSpace::full(domain);
    let k = match check {
        AuditCheck::WeakGroup { max_coalition } | AuditCheck::StrongGroup { max_coalition } => max_coalition,
        _ => 1,
    };
    let per = deviation_estimate(&full, k);
    if full
        .cardinality()
        .saturating_mul(per)
        .saturating_add(full.cardinality())
        <= config.exhaustive_limit.min(config.audit.budget)
    {
        return Ok(full);
    }
    run.sampled = true;
    run.scope = Scope::Sampled;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = domain.n();
    let profiles: Vec<Profile> = (0..config.samples)
        .map(|_| {
            let key = ProfileKey((0..2 * n).map(|s| rng.gen_range(0..full.radix(s)) as u16).collect());
            full.profile(&key.0)
        })
        .collect();
    ProfileSpace::restricted(domain, &profiles)
}

fn deviation_estimate(space: &ProfileSpace, k: usize) -> u128 {
    let mut coeff = vec![0u128; k + 1];
    coeff[0] = 1;
    for slot in 0..2 * space.n() {
        let alt = (space.radix(slot) - 1) as u128;
        for j in (1..=k).rev() {
            coeff[j] = coeff[j].saturating_add(coeff[j - 1].saturating_mul(alt));
        }
    }
    coeff[1..].iter().fold(0u128, |a, &c| a.saturating_add(c))
}

fn td_domain(tw: &Tree, tm: &Tree, td_side: Side) -> Result<DomainPair> {
    let (men, women) = match td_side {
        Side::Men => (td_selection(Side::Men, tw)?, PreferenceSet::maximal(Side::Women, tm)),
        Side::Women => (PreferenceSet::maximal(Side::Men, tw), td_selection(Side::Women, tm)?),
    };
    DomainPair::new(men, women, Some(tw.clone()), Some(tm.clone()))
}

fn oracle_space_fits(space: &ProfileSpace, config: &TheoremConfig) -> bool {
    space.cardinality() <= config.oracle.profile_cap
}

fn thm1_if(n: usize, config: &TheoremConfig, run: &mut Run) -> Result<()> {
    let pairs = tree_pairs(n, config, run)?;
    let (mut sized, mut selections) = (0, 0);
    for (tw, tm) in &pairs {
        for (side, tree) in [(Side::Men, tw), (Side::Women, tm)] {
            let td = td_selection(side, tree)?;
            selections += 1;
            if td.len() == n && is_rich(&td).is_rich() && satisfies_td(&td).holds() {
                sized += 1;
            }
        }
    }
    run.check(
        "TD selections are rich with exactly n members",
        sized == selections,
        format!("{sized} of {selections} selections"),
    );
    if n == 3 {
        run.scope = Scope::Exhaustive;
        let (mut domains, mut rules_found, mut da_pass) = (0, 0, 0);
        for (tw, tm) in &pairs {
            for (d, men_td, women_td) in rich_domains(tw, tm)? {
                if !(men_td || women_td) {
                    continue;
                }
                domains += 1;
                let space = ProfileSpace::full(&d);
                let r = rule_existence_oracle(&space, Requirement::StableStrategyProof, config.oracle)?;
                if let OracleOutcome::Exists(table) = r.outcome {
                    let rule = Rule::Table(table);
                    let sound = audit(&rule, &space, AuditCheck::StrategyProofness, config.audit)?
                        .witnesses
                        .is_empty()
                        && all_stable(&rule, &space)?;
                    if sound {
                        rules_found += 1;
                    }
                }
                let mut passes = false;
                for rule in da_for(men_td, women_td) {
                    passes |= audit(&rule, &space, AuditCheck::StrategyProofness, config.audit)?
                        .witnesses
                        .is_empty();
                }
                if passes {
                    da_pass += 1;
                }
            }
        }
        run.check(
            "oracle finds a sound stable strategy-proof rule",
            rules_found == domains,
            format!("{rules_found} of {domains} rich domains with a TD side"),
        );
        run.check(
            "DA on the TD-receiving side passes the SP audit",
            da_pass == domains,
            format!("{da_pass} of {domains} rich domains with a TD side"),
        );
    } else {
        let (tw, tm) = &pairs[0];
        for (td_side, rule) in [(Side::Women, Rule::MenProposing), (Side::Men, Rule::WomenProposing)] {
            let d = td_domain(tw, tm, td_side)?;
            let space = audit_space(&d, AuditCheck::StrategyProofness, config, run)?;
            let r = audit(&rule, &space, AuditCheck::StrategyProofness, config.audit)?;
            run.check(
                format!("{} is SP with TD {td_side}", rule.name()),
                r.witnesses.is_empty(),
                format!("{} over {} profiles", witnesses(r.witnesses.len()), r.profiles),
            );
        }
    }
    Ok(())
}

fn witnesses(k: usize) -> String {
    if k == 1 {
        "1 witness".into()
    } else {
        format!("{k} witnesses")
    }
}

fn all_stable(rule: &Rule, space: &ProfileSpace) -> Result<bool> {
    for i in 0..space.cardinality() as usize {
        let key = space.key_at(i);
        let view = space.view(&key.0);
        if !crate::da::is_stable(&view, &apply_rule(rule, &view)?) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn manipulation_at(space_profile: &Profile, misreport: (Agent, &Profile), rule: &Rule) -> Result<Option<Witness>> {
    let (agent, target) = misreport;
    let before = apply_rule(rule, space_profile)?;
    let after = apply_rule(rule, target)?;
    let truth = space_profile.of(agent);
    let gain = before.partner(agent) != after.partner(agent)
        && truth.ranks_above(after.partner_index(agent), before.partner_index(agent));
    Ok(gain.then(|| Witness {
        kind: WitnessKind::Manipulation,
        profile: space_profile.clone(),
        deviators: vec![agent],
        misreports: vec![(agent, target.of(agent).clone())],
        before,
        after,
    }))
}

/// The constructive manipulation argument on the TD construction, plus the
/// audits that must surface it.
fn td_violation_argument(d: &DomainPair, config: &TheoremConfig, run: &mut Run) -> Result<Construction> {
    let c = build_td_violation_profiles(d)?;
    let check = check_construction(&c)?;
    run.check(
        "constructed profiles have stable sets {mu1,mu2}, {mu2}, {mu1}",
        check.stable_sets_match,
        format!(
            "sizes {:?}",
            check.stable_sets.iter().map(|s| s.len()).collect::<Vec<_>>()
        ),
    );
    run.check(
        "DA outcomes at the first profile",
        check.da_matches,
        format!("mpda {} / wpda {}", check.men_proposing[0], check.women_proposing[0]),
    );
    run.check(
        "fillers inert",
        check.fillers_inert,
        "every filler pair matched in every stable matching",
    );
    run.check(
        "single deviations",
        check.single_deviations,
        "profiles 2 and 3 differ from profile 1 in one report",
    );

    // every stable choice at the first profile is manipulable
    let mut branches = Vec::new();
    for mu in &check.stable_sets[0].matchings {
        let (row, forced) = if *mu == c.mu1 { (1, &c.mu2) } else { (2, &c.mu1) };
        let agent = c.deviator(row + 1);
        let truth = c.profiles[0].of(agent);
        let gains = truth.ranks_above(forced.partner_index(agent), mu.partner_index(agent));
        branches.push(gains);
    }
    run.check(
        "each stable choice at the first profile is manipulable",
        branches.len() == 2 && branches.iter().all(|&b| b),
        format!("{} branches", branches.len()),
    );

    let space = ProfileSpace::restricted(d, &c.profiles)?;
    for (rule, row) in [(Rule::MenProposing, 1usize), (Rule::WomenProposing, 2usize)] {
        let r = audit(&rule, &space, AuditCheck::StrategyProofness, config.audit)?;
        let agent = c.deviator(row + 1);
        let expected = manipulation_at(&c.profiles[0], (agent, &c.profiles[row]), &rule)?;
        let found = expected.as_ref().is_some_and(|w| r.witnesses.contains(w));
        run.check(
            format!(
                "{} audit finds {agent}'s manipulation at the first profile",
                rule.name()
            ),
            found,
            witnesses(r.witnesses.len()),
        );
    }
    Ok(c)
}

fn thm1_only_if(n: usize, config: &TheoremConfig, run: &mut Run) -> Result<()> {
    let pairs = tree_pairs(n, config, run)?;
    if n == 3 {
        run.scope = Scope::Exhaustive;
        let (mut domains, mut impossible) = (0, 0);
        for (tw, tm) in &pairs {
            for (d, men_td, women_td) in rich_domains(tw, tm)? {
                if men_td || women_td {
                    continue;
                }
                domains += 1;
                let r =
                    rule_existence_oracle(&ProfileSpace::full(&d), Requirement::StableStrategyProof, config.oracle)?;
                if !r.outcome.exists() {
                    impossible += 1;
                }
            }
        }
        run.check(
            "oracle: no stable strategy-proof rule when both sides violate TD",
            impossible == domains && domains > 0,
            format!("{impossible} of {domains} rich domains"),
        );
    }
    let (tw, tm) = &pairs[0];
    let d = DomainPair::maximal(tw.clone(), tm.clone())?;
    let c = td_violation_argument(&d, config, run)?;
    run.constructions.push(c);
    Ok(())
}

fn cor1_maximal(n: usize, config: &TheoremConfig, run: &mut Run) -> Result<()> {
    let (tw, tm) = default_trees(n, config, run)?;
    let d = DomainPair::maximal(tw, tm)?;
    for side in [Side::Men, Side::Women] {
        run.check(
            format!("maximal {side} set violates TD"),
            !satisfies_td(d.set(side)).holds(),
            "",
        );
    }
    let full = ProfileSpace::full(&d);
    if oracle_space_fits(&full, config) {
        run.scope = Scope::Exhaustive;
        let r = rule_existence_oracle(&full, Requirement::StableStrategyProof, config.oracle)?;
        let detail = match &r.outcome {
            OracleOutcome::Impossible(t) => format!(
                "{} profiles, {} forced, {} decisions, {} wipeouts",
                r.profiles, r.forced, t.decisions, t.wipeouts
            ),
            OracleOutcome::Exists(_) => format!("{} profiles: a rule exists", r.profiles),
        };
        run.check(
            "oracle on the full maximal space: impossible",
            !r.outcome.exists(),
            detail,
        );
    }
    let c = td_violation_argument(&d, config, run)?;
    let local = ProfileSpace::restricted(&d, &c.profiles)?.with_unilateral_neighbors();
    if oracle_space_fits(&local, config) {
        let r = rule_existence_oracle(&local, Requirement::StableStrategyProof, config.oracle)?;
        run.check(
            "oracle on the constructed profiles and their neighbours: impossible",
            !r.outcome.exists(),
            format!("{} profiles", r.profiles),
        );
    }
    run.constructions.push(c);
    Ok(())
}

fn cor2_wgsp(n: usize, config: &TheoremConfig, run: &mut Run) -> Result<()> {
    let (tw, tm) = default_trees(n, config, run)?;
    let k = default_max_coalition(n);
    for (td_side, rule) in [(Side::Women, Rule::MenProposing), (Side::Men, Rule::WomenProposing)] {
        let d = td_domain(&tw, &tm, td_side)?;
        let check = AuditCheck::WeakGroup { max_coalition: k };
        let space = audit_space(&d, check, config, run)?;
        let r = audit(&rule, &space, check, config.audit)?;
        run.check(
            format!(
                "{} weakly group SP with TD {td_side} (coalitions up to {k})",
                rule.name()
            ),
            r.witnesses.is_empty(),
            format!("{} over {} profiles", witnesses(r.witnesses.len()), r.profiles),
        );
    }
    let d = DomainPair::maximal(tw, tm)?;
    let c = build_td_violation_profiles(&d)?;
    let space = ProfileSpace::restricted(&d, &c.profiles)?;
    let r = audit(
        &Rule::MenProposing,
        &space,
        AuditCheck::WeakGroup { max_coalition: 1 },
        config.audit,
    )?;
    run.check(
        "manipulation on the maximal domain is a one-agent weak coalition",
        !r.witnesses.is_empty(),
        witnesses(r.witnesses.len()),
    );
    run.constructions.push(c);
    Ok(())
}

fn cor3_da_wgsp(n: usize, config: &TheoremConfig, run: &mut Run) -> Result<()> {
    let k = default_max_coalition(n);
    let check = AuditCheck::WeakGroup { max_coalition: k };
    if n == 3 {
        run.scope = Scope::Exhaustive;
        let pairs = tree_pairs(n, config, run)?;
        let (mut admitting, mut passing) = (0, 0);
        for (tw, tm) in &pairs {
            for (d, men_td, women_td) in rich_domains(tw, tm)? {
                let space = ProfileSpace::full(&d);
                let r = rule_existence_oracle(&space, Requirement::StableStrategyProof, config.oracle)?;
                if !r.outcome.exists() {
                    continue;
                }
                admitting += 1;
                let mut ok = false;
                let mut rules = da_for(men_td, women_td);
                for rule in [Rule::MenProposing, Rule::WomenProposing] {
                    if !rules.iter().any(|r| r.name() == rule.name()) {
                        rules.push(rule);
                    }
                }
                for rule in rules {
                    if audit(&rule, &space, check, config.audit)?.witnesses.is_empty() {
                        ok = true;
                        break;
                    }
                }
                if ok {
                    passing += 1;
                }
            }
        }
        run.check(
            "a DA rule is weakly group SP wherever a stable SP rule exists",
            admitting == passing && admitting > 0,
            format!("{passing} of {admitting} admitting rich domains"),
        );
        return Ok(());
    }
    let (tw, tm) = default_trees(n, config, run)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    run.sampled = true;
    run.scope = Scope::Sampled;
    let mut passing = 0;
    let rounds = config.samples.clamp(1, 8);
    for _ in 0..rounds {
        let td_side = if rng.gen_bool(0.5) { Side::Men } else { Side::Women };
        let (td_tree, other_tree) = match td_side {
            Side::Men => (&tw, &tm),
            Side::Women => (&tm, &tw),
        };
        let td = td_selection(td_side, td_tree)?;
        let other = sample_rich_subset(&PreferenceSet::maximal(td_side.other(), other_tree), &mut rng)?;
        let (men, women) = match td_side {
            Side::Men => (td, other),
            Side::Women => (other, td),
        };
        let d = DomainPair::new(men, women, Some(tw.clone()), Some(tm.clone()))?;
        let space = audit_space(&d, check, config, run)?;
        let rule = if td_side == Side::Women {
            Rule::MenProposing
        } else {
            Rule::WomenProposing
        };
        if audit(&rule, &space, check, config.audit)?.witnesses.is_empty() {
            passing += 1;
        }
    }
    run.check(
        "DA on the TD-receiving side is weakly group SP on sampled domains",
        passing == rounds,
        format!("{passing} of {rounds} sampled domains"),
    );
    Ok(())
}

/// One member per top, then each further member with probability 1/4.
fn sample_rich_subset(full: &PreferenceSet, rng: &mut ChaCha8Rng) -> Result<PreferenceSet> {
    let k = full.ground();
    let mut picks = Vec::new();
    for top in 0..k {
        let with_top: Vec<_> = full.prefs().iter().filter(|p| p.top() == top).collect();
        picks.push(with_top[rng.gen_range(0..with_top.len())].clone());
    }
    for p in full.prefs() {
        if !picks.contains(p) && rng.gen_bool(0.25) {
            picks.push(p.clone());
        }
    }
    PreferenceSet::new(full.owners(), k, picks)
}

/// The constructive bossiness argument on the rotation construction.
fn rotation_argument(
    d: &DomainPair,
    c: &Construction,
    config: &TheoremConfig,
    run: &mut Run,
    label: &str,
) -> Result<()> {
    let check = check_construction(c)?;
    run.check(
        format!("{label}constructed profiles have stable sets {{mu1,mu2}}, {{mu2}}, {{mu1}}"),
        check.stable_sets_match,
        format!(
            "sizes {:?}",
            check.stable_sets.iter().map(|s| s.len()).collect::<Vec<_>>()
        ),
    );
    run.check(format!("{label}DA outcomes at the first profile"), check.da_matches, "");
    run.check(format!("{label}fillers inert"), check.fillers_inert, "");
    run.check(format!("{label}single deviations"), check.single_deviations, "");
    let mut bossy = 0;
    for mu in &check.stable_sets[0].matchings {
        let (row, forced) = if *mu == c.mu1 { (1, &c.mu2) } else { (2, &c.mu1) };
        let agent = c.deviator(row + 1);
        if forced.partner(agent) == mu.partner(agent) && forced != mu {
            bossy += 1;
        }
    }
    run.check(
        format!("{label}each stable choice at the first profile is bossy"),
        bossy == 2,
        format!("{bossy} of 2 branches"),
    );
    let space = ProfileSpace::restricted(d, &c.profiles)?;
    let r = rule_existence_oracle(&space, Requirement::StableNonBossy, config.oracle)?;
    run.check(
        format!("{label}oracle on the constructed profiles: no stable non-bossy rule"),
        !r.outcome.exists(),
        format!("{} profiles, {} links", r.profiles, r.links),
    );
    Ok(())
}

fn bossy_witnesses_found(d: &DomainPair, c: &Construction, config: &TheoremConfig, run: &mut Run) -> Result<()> {
    let space = ProfileSpace::restricted(d, &c.profiles)?;
    for (rule, row, before, after) in [
        (Rule::MenProposing, 1usize, &c.mu1, &c.mu2),
        (Rule::WomenProposing, 2usize, &c.mu2, &c.mu1),
    ] {
        let r = audit(&rule, &space, AuditCheck::NonBossiness, config.audit)?;
        let agent = c.deviator(row + 1);
        let expected = Witness {
            kind: WitnessKind::Bossy,
            profile: c.profiles[0].clone(),
            deviators: vec![agent],
            misreports: vec![(agent, c.profiles[row].of(agent).clone())],
            before: before.clone(),
            after: after.clone(),
        };
        run.check(
            format!("{} non-bossiness audit finds {agent}'s witness", rule.name()),
            r.witnesses.contains(&expected),
            witnesses(r.witnesses.len()),
        );
    }
    Ok(())
}

fn prop_c(n: usize, config: &TheoremConfig, run: &mut Run) -> Result<()> {
    let (tw, tm) = default_trees(n, config, run)?;
    let d = DomainPair::maximal(tw, tm)?;
    for side in [Side::Men, Side::Women] {
        run.check(
            format!("maximal {side} set violates rotation"),
            !satisfies_rotation(d.set(side)).holds(),
            "",
        );
    }
    let c = build_rotation_profiles(&d)?;
    rotation_argument(&d, &c, config, run, "")?;
    bossy_witnesses_found(&d, &c, config, run)?;
    run.constructions.push(c);
    Ok(())
}

fn shape_trees(n: usize, config: &TheoremConfig, run: &mut Run) -> Result<Vec<(String, Tree, Tree)>> {
    let choices = match &config.tree {
        Some(c) => vec![c.clone()],
        None => vec![TreeChoice::Path, TreeChoice::Fork, TreeChoice::Star],
    };
    let mut out = Vec::new();
    for c in choices {
        let (tw, tm) = c.build(n)?;
        run.trees.push(c.name());
        out.push((c.name(), tw, tm));
    }
    Ok(out)
}

fn five_node_construction(d: &DomainPair) -> Result<Construction> {
    let tree = |s: Side| d.tree_for(s).ok_or_else(|| Error::Precondition("missing tree".into()));
    let mw = five_node_rotation_witness(d.men(), tree(Side::Men)?)?;
    let ww = five_node_rotation_witness(d.women(), tree(Side::Women)?)?;
    build_rotation_profiles_from(d, mw, ww)
}

fn thm_d(n: usize, config: &TheoremConfig, run: &mut Run) -> Result<()> {
    for (name, tw, tm) in shape_trees(n, config, run)? {
        let label = format!("[{name}] ");
        let d = DomainPair::maximal(tw, tm)?;
        for side in [Side::Men, Side::Women] {
            let built = five_node_rotation_witness(d.set(side), d.tree_for(side).expect("maximal pair has trees"))?;
            let scan = satisfies_rotation(d.set(side));
            run.check(
                format!("{label}{side}: constructed rotation violation replays and the scan agrees"),
                built.replay(d.set(side)) && matches!(scan, Verdict::Violated(_)),
                format!("{}", built.kind),
            );
        }
        let c = five_node_construction(&d)?;
        rotation_argument(&d, &c, config, run, &label)?;
        run.constructions.push(c);
    }
    Ok(())
}

fn cor4_gsp(n: usize, config: &TheoremConfig, run: &mut Run) -> Result<()> {
    for (name, tw, tm) in shape_trees(n, config, run)? {
        let d = DomainPair::maximal(tw, tm)?;
        let c = five_node_construction(&d)?;
        let check = check_construction(&c)?;
        let mut replayed = 0;
        let choices = &check.stable_sets[0].matchings;
        for mu in choices {
            let (row, forced) = if *mu == c.mu1 {
                (1, c.mu2.clone())
            } else {
                (2, c.mu1.clone())
            };
            let mut table = TableRule::new(n);
            table.insert(&c.profiles[0], mu.clone());
            table.insert(&c.profiles[row], forced.clone());
            let rule = Rule::Table(table);
            if let Some(w) = coalition_from_bossy(&c, row, &rule)? {
                if w.replay(&rule)? {
                    replayed += 1;
                }
            }
        }
        run.check(
            format!("[{name}] each stable choice at the first profile admits a two-agent coalition gain"),
            replayed == choices.len() && replayed == 2,
            format!("{replayed} of {} branches replayed", choices.len()),
        );
        run.constructions.push(c);
    }
    Ok(())
}

/// Turns the bossy step between profile 1 and profile `row + 1` into a
/// coalition of the deviator and one agent who strictly gains, in whichever
/// direction that agent gains.
fn coalition_from_bossy(c: &Construction, row: usize, rule: &Rule) -> Result<Option<Witness>> {
    let a = c.deviator(row + 1);
    let n = c.n();
    for (from, to) in [(0, row), (row, 0)] {
        let before = apply_rule(rule, &c.profiles[from])?;
        let after = apply_rule(rule, &c.profiles[to])?;
        let gainer = Market::new(n)?.agents().find(|&b| {
            b != a
                && before.partner(b) != after.partner(b)
                && c.profiles[from]
                    .of(b)
                    .ranks_above(after.partner_index(b), before.partner_index(b))
        });
        if let Some(b) = gainer {
            let mut deviators = vec![a, b];
            deviators.sort_by_key(|x| x.slot(n));
            return Ok(Some(Witness {
                kind: WitnessKind::CoalitionStrong,
                profile: c.profiles[from].clone(),
                deviators,
                misreports: vec![(a, c.profiles[to].of(a).clone())],
                before,
                after,
            }));
        }
    }
    Ok(None)
}
