//! Matching rules and exhaustive incentive audits over finite profile spaces.
//!
//! Improvements are always judged with the truthful profile's preferences;
//! misreports only change the rule's input.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::da::deferred_acceptance;
use crate::domain::{DomainPair, PreferenceSet};
use crate::error::{Error, Result};
use crate::model::{Agent, Matching, Preference, PreferenceLookup, Profile, Side};
use crate::par;

/// Default cap on rule evaluations an audit may plan.
pub const DEFAULT_BUDGET: u128 = 1_000_000_000;

/// Full spaces up to this size have every outcome precomputed.
const PRECOMPUTE_LIMIT: u128 = 1 << 22;

/// A matching rule given by explicit outcomes, keyed by the flattened profile.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TableRule {
    n: usize,
    outcomes: BTreeMap<Vec<u8>, Matching>,
}

impl TableRule {
    pub fn new(n: usize) -> TableRule {
        TableRule {
            n,
            outcomes: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Returns `false` if the profile already had an outcome.
    pub fn insert<P: PreferenceLookup + ?Sized>(&mut self, profile: &P, mu: Matching) -> bool {
        self.outcomes.insert(profile.flatten(), mu).is_none()
    }

    pub fn get<P: PreferenceLookup + ?Sized>(&self, profile: &P) -> Option<&Matching> {
        self.outcomes.get(&profile.flatten())
    }

    /// Entries in order of their flattened profiles.
    pub fn entries(&self) -> impl Iterator<Item = (Profile, &Matching)> + '_ {
        let n = self.n;
        self.outcomes.iter().map(move |(flat, mu)| {
            let rows: Vec<Vec<usize>> = flat
                .chunks(n)
                .map(|c| c.iter().map(|&x| x as usize).collect())
                .collect();
            let profile = Profile::from_rankings(&rows[..n], &rows[n..]).expect("stored profiles are valid");
            (profile, mu)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rule {
    MenProposing,
    WomenProposing,
    Table(TableRule),
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::MenProposing => "mpda",
            Rule::WomenProposing => "wpda",
            Rule::Table(_) => "table",
        }
    }
}

/// The rule's matching at `profile`.
pub fn apply_rule<P: PreferenceLookup + ?Sized>(rule: &Rule, profile: &P) -> Result<Matching> {
    match rule {
        Rule::MenProposing => Ok(deferred_acceptance(profile, Side::Men)),
        Rule::WomenProposing => Ok(deferred_acceptance(profile, Side::Women)),
        Rule::Table(t) => {
            if t.n() != profile.market_size() {
                return Err(Error::MarketMismatch {
                    expected: t.n(),
                    found: profile.market_size(),
                });
            }
            t.get(profile).cloned().ok_or(Error::OutsideRuleDomain)
        }
    }
}

/// Indices into the men's and women's admissible sets, one per agent slot
/// (`m1..mn` then `w1..wn`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProfileKey(pub Vec<u16>);

/// A finite set of profiles drawn from a domain.
///
/// Full spaces are the whole product of the admissible sets, ordered
/// mixed-radix with `m1` most significant. Restricted spaces list their
/// profiles explicitly; unilateral deviations still range over the full
/// admissible sets.
#[derive(Clone, Debug)]
pub struct ProfileSpace {
    n: usize,
    men: PreferenceSet,
    women: PreferenceSet,
    listed: Option<Vec<ProfileKey>>,
}

/// A profile of a space, read through its key.
#[derive(Clone, Copy, Debug)]
pub struct KeyedProfile<'a> {
    space: &'a ProfileSpace,
    key: &'a [u16],
}

impl PreferenceLookup for KeyedProfile<'_> {
    fn market_size(&self) -> usize {
        self.space.n
    }

    fn man(&self, m: usize) -> &Preference {
        self.space.men.get(self.key[m] as usize)
    }

    fn woman(&self, w: usize) -> &Preference {
        self.space.women.get(self.key[self.space.n + w] as usize)
    }
}

impl ProfileSpace {
    pub fn full(domain: &DomainPair) -> ProfileSpace {
        ProfileSpace {
            n: domain.n(),
            men: domain.men().clone(),
            women: domain.women().clone(),
            listed: None,
        }
    }

    /// The given profiles only; each must lie in the domain.
    pub fn restricted(domain: &DomainPair, profiles: &[Profile]) -> Result<ProfileSpace> {
        let mut space = ProfileSpace::full(domain);
        let mut keys = profiles
            .iter()
            .map(|p| {
                space
                    .key_of(p)
                    .ok_or_else(|| Error::Precondition("profile outside the domain".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        keys.sort();
        keys.dedup();
        space.listed = Some(keys);
        Ok(space)
    }

    /// Adds every unilateral deviation of every listed profile.
    pub fn with_unilateral_neighbors(&self) -> ProfileSpace {
        let Some(listed) = &self.listed else {
            return self.clone();
        };
        let mut keys = listed.clone();
        for key in listed {
            for slot in 0..2 * self.n {
                for alt in 0..self.radix(slot) as u16 {
                    if alt != key.0[slot] {
                        let mut k = key.clone();
                        k.0[slot] = alt;
                        keys.push(k);
                    }
                }
            }
        }
        keys.sort();
        keys.dedup();
        ProfileSpace {
            listed: Some(keys),
            ..self.clone()
        }
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

    pub fn is_full(&self) -> bool {
        self.listed.is_none()
    }

    /// Number of admissible reports at `slot`.
    pub fn radix(&self, slot: usize) -> usize {
        if slot < self.n {
            self.men.len()
        } else {
            self.women.len()
        }
    }

    /// Number of profiles in the space.
    pub fn cardinality(&self) -> u128 {
        match &self.listed {
            Some(keys) => keys.len() as u128,
            None => (0..2 * self.n).fold(1u128, |acc, s| acc.saturating_mul(self.radix(s) as u128)),
        }
    }

    fn full_cardinality(&self) -> u128 {
        (0..2 * self.n).fold(1u128, |acc, s| acc.saturating_mul(self.radix(s) as u128))
    }

    /// The `i`-th profile key in canonical order.
    pub fn key_at(&self, i: usize) -> ProfileKey {
        match &self.listed {
            Some(keys) => keys[i].clone(),
            None => {
                let mut digits = vec![0u16; 2 * self.n];
                let mut rest = i;
                for slot in (0..2 * self.n).rev() {
                    let r = self.radix(slot);
                    digits[slot] = (rest % r) as u16;
                    rest /= r;
                }
                ProfileKey(digits)
            }
        }
    }

    /// Position of `key` in canonical order, if it belongs to the space.
    pub fn index_of(&self, key: &[u16]) -> Option<usize> {
        match &self.listed {
            Some(keys) => keys.binary_search_by(|k| k.0.as_slice().cmp(key)).ok(),
            None => Some(self.full_rank(key)),
        }
    }

    fn full_rank(&self, key: &[u16]) -> usize {
        key.iter()
            .enumerate()
            .fold(0usize, |acc, (slot, &d)| acc * self.radix(slot) + d as usize)
    }

    pub fn key_of<P: PreferenceLookup + ?Sized>(&self, profile: &P) -> Option<ProfileKey> {
        if profile.market_size() != self.n {
            return None;
        }
        let mut key = Vec::with_capacity(2 * self.n);
        for m in 0..self.n {
            key.push(self.men.index_of(profile.man(m))? as u16);
        }
        for w in 0..self.n {
            key.push(self.women.index_of(profile.woman(w))? as u16);
        }
        let key = ProfileKey(key);
        match &self.listed {
            Some(keys) if keys.binary_search(&key).is_err() => None,
            _ => Some(key),
        }
    }

    pub fn view<'a>(&'a self, key: &'a [u16]) -> KeyedProfile<'a> {
        KeyedProfile { space: self, key }
    }

    pub fn profile(&self, key: &[u16]) -> Profile {
        Profile::capture(&self.view(key)).expect("keys index valid preferences")
    }

    pub fn pref_at(&self, slot: usize, index: u16) -> &Preference {
        if slot < self.n {
            self.men.get(index as usize)
        } else {
            self.women.get(index as usize)
        }
    }
}

/// Audits available over a profile space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "check")]
pub enum AuditCheck {
    StrategyProofness,
    /// Every deviator strictly improves.
    WeakGroup {
        max_coalition: usize,
    },
    /// Every coalition member weakly improves, one strictly.
    StrongGroup {
        max_coalition: usize,
    },
    NonBossiness,
}

impl AuditCheck {
    pub fn label(&self) -> &'static str {
        match self {
            AuditCheck::StrategyProofness => "sp",
            AuditCheck::WeakGroup { .. } => "wgsp",
            AuditCheck::StrongGroup { .. } => "gsp",
            AuditCheck::NonBossiness => "nonbossy",
        }
    }

    fn max_deviators(&self) -> usize {
        match self {
            AuditCheck::WeakGroup { max_coalition } | AuditCheck::StrongGroup { max_coalition } => *max_coalition,
            _ => 1,
        }
    }

    fn witness_kind(&self) -> WitnessKind {
        match self {
            AuditCheck::StrategyProofness => WitnessKind::Manipulation,
            AuditCheck::WeakGroup { .. } => WitnessKind::CoalitionWeak,
            AuditCheck::StrongGroup { .. } => WitnessKind::CoalitionStrong,
            AuditCheck::NonBossiness => WitnessKind::Bossy,
        }
    }
}

/// Default coalition cap: every agent for `n <= 3`, pairs otherwise.
pub fn default_max_coalition(n: usize) -> usize {
    if n <= 3 {
        2 * n
    } else {
        2
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AuditOptions {
    /// Refuse audits planning more rule evaluations than this.
    pub budget: u128,
    /// Stop at the first witness in canonical order.
    pub stop_at_first: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            budget: DEFAULT_BUDGET,
            stop_at_first: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    Manipulation,
    CoalitionWeak,
    CoalitionStrong,
    Bossy,
}

impl fmt::Display for WitnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WitnessKind::Manipulation => "manipulation",
            WitnessKind::CoalitionWeak => "coalition-weak",
            WitnessKind::CoalitionStrong => "coalition-strong",
            WitnessKind::Bossy => "bossy",
        })
    }
}

/// A replayable violation found by an audit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub kind: WitnessKind,
    /// The truthful profile.
    pub profile: Profile,
    /// The coalition, in slot order. Members without a misreport report truthfully.
    pub deviators: Vec<Agent>,
    pub misreports: Vec<(Agent, Preference)>,
    pub before: Matching,
    pub after: Matching,
}

impl Witness {
    pub fn deviated_profile(&self) -> Result<Profile> {
        let mut p = self.profile.clone();
        for (a, pref) in &self.misreports {
            p = p.with_preference(*a, pref.clone())?;
        }
        Ok(p)
    }

    /// Recomputes both outcomes with `rule` and re-checks the violation.
    pub fn replay(&self, rule: &Rule) -> Result<bool> {
        let before = apply_rule(rule, &self.profile)?;
        let after = apply_rule(rule, &self.deviated_profile()?)?;
        if before != self.before || after != self.after || self.misreports.is_empty() {
            return Ok(false);
        }
        let truthful = |a: Agent, pref: &Preference| self.profile.of(a) == pref;
        if self
            .misreports
            .iter()
            .any(|(a, p)| truthful(*a, p) || !self.deviators.contains(a))
        {
            return Ok(false);
        }
        let gain = |a: Agent| improvement(&self.profile, a, &before, &after);
        Ok(match self.kind {
            WitnessKind::Manipulation => {
                self.deviators.len() == 1 && self.misreports.len() == 1 && gain(self.deviators[0]) == Gain::Better
            }
            WitnessKind::CoalitionWeak => self.deviators.iter().all(|&a| gain(a) == Gain::Better),
            WitnessKind::CoalitionStrong => {
                self.deviators.iter().all(|&a| gain(a) != Gain::Worse)
                    && self.deviators.iter().any(|&a| gain(a) == Gain::Better)
            }
            WitnessKind::Bossy => {
                let a = self.deviators[0];
                self.deviators.len() == 1 && before.partner(a) == after.partner(a) && before != after
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Gain {
    Better,
    Same,
    Worse,
}

fn improvement<P: PreferenceLookup + ?Sized>(truth: &P, a: Agent, before: &Matching, after: &Matching) -> Gain {
    let (b, c) = (before.partner_index(a), after.partner_index(a));
    if b == c {
        Gain::Same
    } else if truth.of(a).ranks_above(c, b) {
        Gain::Better
    } else {
        Gain::Worse
    }
}

/// Summary plus witnesses of one audit.
#[derive(Clone, Debug)]
pub struct AuditReport {
    pub check: AuditCheck,
    pub rule: &'static str,
    pub profiles: u128,
    /// Rule evaluations the audit planned (deviations over all base profiles).
    pub planned_evaluations: u128,
    /// Deviations whose target a table rule does not cover; census mode only.
    pub skipped_outside_domain: Option<u64>,
    pub witnesses: Vec<Witness>,
}

/// Deviation count per base profile: subsets of at most `k` slots, weighted
/// by the number of non-truthful reports of each member.
fn deviations_per_profile(space: &ProfileSpace, k: usize) -> u128 {
    let mut coeff = vec![0u128; k + 1];
    coeff[0] = 1;
    for slot in 0..2 * space.n {
        let alt = (space.radix(slot) - 1) as u128;
        for j in (1..=k).rev() {
            coeff[j] = coeff[j].saturating_add(coeff[j - 1].saturating_mul(alt));
        }
    }
    coeff[1..].iter().fold(0u128, |a, &c| a.saturating_add(c))
}

/// Rule outcomes for a space, precomputed for small full spaces.
struct Outcomes<'a> {
    rule: &'a Rule,
    space: &'a ProfileSpace,
    table: Option<Vec<Option<Matching>>>,
}

impl<'a> Outcomes<'a> {
    fn new(rule: &'a Rule, space: &'a ProfileSpace) -> Result<Outcomes<'a>> {
        let card = space.full_cardinality();
        let table = if space.is_full() && card <= PRECOMPUTE_LIMIT {
            let all = par::try_map(card as usize, |i| {
                let key = space.key_at(i);
                match apply_rule(rule, &space.view(&key.0)) {
                    Ok(mu) => Ok(Some(mu)),
                    Err(Error::OutsideRuleDomain) => Ok(None),
                    Err(e) => Err(e),
                }
            })?;
            Some(all)
        } else {
            None
        };
        Ok(Outcomes { rule, space, table })
    }

    fn at(&self, key: &[u16]) -> Result<Option<Matching>> {
        if let Some(table) = &self.table {
            return Ok(table[self.space.full_rank(key)].clone());
        }
        match apply_rule(self.rule, &self.space.view(key)) {
            Ok(mu) => Ok(Some(mu)),
            Err(Error::OutsideRuleDomain) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Advances `combo` (a strictly increasing slot list) to the next
/// combination of the same size over `0..total`.
fn next_combination(combo: &mut [usize], total: usize) -> bool {
    let k = combo.len();
    for i in (0..k).rev() {
        if combo[i] < total - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Advances the per-member report choices, skipping truthful reports;
/// the last member varies fastest.
fn next_reports(reports: &mut [u16], truth: &[u16], radices: &[usize]) -> bool {
    for i in (0..reports.len()).rev() {
        let mut r = reports[i] + 1;
        if r == truth[i] {
            r += 1;
        }
        if (r as usize) < radices[i] {
            reports[i] = r;
            for j in i + 1..reports.len() {
                reports[j] = if truth[j] == 0 { 1 } else { 0 };
            }
            return true;
        }
    }
    false
}

struct BaseResult {
    witnesses: Vec<Witness>,
    skipped: u64,
}

fn audit_base(
    check: AuditCheck,
    space: &ProfileSpace,
    outcomes: &Outcomes<'_>,
    key: &ProfileKey,
    stop_at_first: bool,
) -> Result<BaseResult> {
    let mut out = BaseResult {
        witnesses: Vec::new(),
        skipped: 0,
    };
    let Some(before) = outcomes.at(&key.0)? else {
        return Ok(out);
    };
    let n = space.n;
    let slots = 2 * n;
    let truth = space.view(&key.0);
    let kind = check.witness_kind();
    let max_dev = check.max_deviators().min(slots);
    let mut dev_key = key.0.clone();

    for size in 1..=max_dev {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let truth_reports: Vec<u16> = combo.iter().map(|&s| key.0[s]).collect();
            let radices: Vec<usize> = combo.iter().map(|&s| space.radix(s)).collect();
            if radices.iter().all(|&r| r >= 2) {
                let mut reports: Vec<u16> = truth_reports.iter().map(|&t| if t == 0 { 1 } else { 0 }).collect();
                loop {
                    for (i, &s) in combo.iter().enumerate() {
                        dev_key[s] = reports[i];
                    }
                    match outcomes.at(&dev_key)? {
                        None => out.skipped += 1,
                        Some(after) => {
                            let members: Vec<Agent> = combo.iter().map(|&s| Agent::from_slot(s, n)).collect();
                            let gains: Vec<Gain> = members
                                .iter()
                                .map(|&a| improvement(&truth, a, &before, &after))
                                .collect();
                            let coalition = match check {
                                AuditCheck::StrategyProofness | AuditCheck::WeakGroup { .. } => {
                                    gains.iter().all(|&g| g == Gain::Better).then(|| members.clone())
                                }
                                AuditCheck::StrongGroup { .. } => {
                                    if gains.contains(&Gain::Worse) {
                                        None
                                    } else if gains.contains(&Gain::Better) {
                                        Some(members.clone())
                                    } else if size < max_dev {
                                        (0..slots)
                                            .filter(|s| !combo.contains(s))
                                            .map(|s| Agent::from_slot(s, n))
                                            .find(|&b| improvement(&truth, b, &before, &after) == Gain::Better)
                                            .map(|b| {
                                                let mut c = members.clone();
                                                c.push(b);
                                                c.sort_by_key(|a| a.slot(n));
                                                c
                                            })
                                    } else {
                                        None
                                    }
                                }
                                AuditCheck::NonBossiness => {
                                    let a = members[0];
                                    (before.partner(a) == after.partner(a) && before != after).then(|| members.clone())
                                }
                            };
                            if let Some(deviators) = coalition {
                                out.witnesses.push(Witness {
                                    kind,
                                    profile: space.profile(&key.0),
                                    deviators,
                                    misreports: combo
                                        .iter()
                                        .zip(&reports)
                                        .map(|(&s, &r)| (Agent::from_slot(s, n), space.pref_at(s, r).clone()))
                                        .collect(),
                                    before: before.clone(),
                                    after,
                                });
                                if stop_at_first {
                                    return Ok(out);
                                }
                            }
                        }
                    }
                    if !next_reports(&mut reports, &truth_reports, &radices) {
                        break;
                    }
                }
                for &s in &combo {
                    dev_key[s] = key.0[s];
                }
            }
            if !next_combination(&mut combo, slots) {
                break;
            }
        }
    }
    Ok(out)
}

/// Runs `check` for `rule` over every profile of `space`.
///
/// Witnesses are listed in canonical order: by base profile, then coalition
/// size, then coalition slots, then reports.
pub fn audit(rule: &Rule, space: &ProfileSpace, check: AuditCheck, opts: AuditOptions) -> Result<AuditReport> {
    if let AuditCheck::WeakGroup { max_coalition: 0 } | AuditCheck::StrongGroup { max_coalition: 0 } = check {
        return Err(Error::Precondition("coalition size must be at least 1".into()));
    }
    let profiles = space.cardinality();
    let per_profile = deviations_per_profile(space, check.max_deviators().min(2 * space.n));
    let planned = profiles.saturating_mul(per_profile);
    let precompute = if space.is_full() { space.full_cardinality() } else { 0 };
    let required = planned.saturating_add(precompute);
    if required > opts.budget {
        return Err(Error::Budget {
            what: "audit",
            required,
            budget: opts.budget,
        });
    }
    let outcomes = Outcomes::new(rule, space)?;
    let bases = profiles as usize;
    let (witnesses, skipped) = if opts.stop_at_first {
        let first = par::find_map_first(bases, |i| {
            match audit_base(check, space, &outcomes, &space.key_at(i), true) {
                Ok(r) => r.witnesses.into_iter().next().map(Ok),
                Err(e) => Some(Err(e)),
            }
        });
        (first.transpose()?.into_iter().collect(), None)
    } else {
        let results = par::try_map(bases, |i| audit_base(check, space, &outcomes, &space.key_at(i), false))?;
        let skipped = results.iter().map(|r| r.skipped).sum();
        (results.into_iter().flat_map(|r| r.witnesses).collect(), Some(skipped))
    };
    Ok(AuditReport {
        check,
        rule: rule.name(),
        profiles,
        planned_evaluations: planned,
        skipped_outside_domain: skipped,
        witnesses,
    })
}

pub fn audit_strategy_proofness(rule: &Rule, space: &ProfileSpace, opts: AuditOptions) -> Result<AuditReport> {
    audit(rule, space, AuditCheck::StrategyProofness, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupMode {
    Weak,
    Strong,
}

pub fn audit_group(
    rule: &Rule,
    space: &ProfileSpace,
    mode: GroupMode,
    max_coalition: usize,
    opts: AuditOptions,
) -> Result<AuditReport> {
    let check = match mode {
        GroupMode::Weak => AuditCheck::WeakGroup { max_coalition },
        GroupMode::Strong => AuditCheck::StrongGroup { max_coalition },
    };
    audit(rule, space, check, opts)
}

pub fn audit_non_bossiness(rule: &Rule, space: &ProfileSpace, opts: AuditOptions) -> Result<AuditReport> {
    audit(rule, space, AuditCheck::NonBossiness, opts)
}
