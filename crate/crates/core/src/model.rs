//! Agents, preferences, profiles and matchings.
//!
//! Identifiers are index based: man `i` and woman `j` are `Agent { side, index }`
//! and display as `m{i+1}` / `w{j+1}`. A [`Preference`] is a strict ranking of
//! the indices `0..k` of the opposite side; it does not record its owner, which
//! is implied by its slot in a [`Profile`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ProfileDoc;

/// Largest supported market (and tree) size.
pub const MAX_MARKET: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Men,
    Women,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Men => Side::Women,
            Side::Women => Side::Men,
        }
    }

    pub fn prefix(self) -> char {
        match self {
            Side::Men => 'm',
            Side::Women => 'w',
        }
    }

    /// Canonical identifier of agent `index` on this side.
    pub fn label(self, index: usize) -> String {
        format!("{}{}", self.prefix(), index + 1)
    }

    pub fn labels(self, n: usize) -> Vec<String> {
        (0..n).map(|i| self.label(i)).collect()
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Men => "men",
            Side::Women => "women",
        })
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "men" | "man" | "m" => Ok(Side::Men),
            "women" | "woman" | "w" => Ok(Side::Women),
            _ => Err(Error::Parse(format!("unknown side {s:?} (expected men|women)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Agent {
    pub side: Side,
    pub index: usize,
}

impl Agent {
    pub fn man(index: usize) -> Agent {
        Agent { side: Side::Men, index }
    }

    pub fn woman(index: usize) -> Agent {
        Agent {
            side: Side::Women,
            index,
        }
    }

    /// Position in the canonical agent order m1..mn, w1..wn.
    pub fn slot(self, n: usize) -> usize {
        match self.side {
            Side::Men => self.index,
            Side::Women => n + self.index,
        }
    }

    pub fn from_slot(slot: usize, n: usize) -> Agent {
        if slot < n {
            Agent::man(slot)
        } else {
            Agent::woman(slot - n)
        }
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.side.prefix(), self.index + 1)
    }
}

impl FromStr for Agent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad agent identifier {s:?}"));
        let mut chars = s.chars();
        let side = match chars.next() {
            Some('m') => Side::Men,
            Some('w') => Side::Women,
            _ => return Err(bad()),
        };
        let number: usize = chars.as_str().parse().map_err(|_| bad())?;
        if number == 0 {
            return Err(bad());
        }
        Ok(Agent {
            side,
            index: number - 1,
        })
    }
}

/// A market of `n` men and `n` women.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Market {
    n: usize,
}

impl Market {
    pub fn new(n: usize) -> Result<Market> {
        if !(3..=MAX_MARKET).contains(&n) {
            return Err(Error::MarketSize(n));
        }
        Ok(Market { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn men(&self) -> impl Iterator<Item = Agent> {
        (0..self.n).map(Agent::man)
    }

    pub fn women(&self) -> impl Iterator<Item = Agent> {
        (0..self.n).map(Agent::woman)
    }

    /// All agents in canonical order.
    pub fn agents(&self) -> impl Iterator<Item = Agent> {
        self.men().chain(self.women())
    }
}

/// A strict linear order over `0..k`, best first.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Preference {
    ranking: Vec<u8>,
    position: Vec<u8>,
}

impl Preference {
    /// Builds a preference from a full ranking of `0..ranking.len()`.
    pub fn new(ranking: &[usize]) -> Result<Preference> {
        let k = ranking.len();
        if k == 0 || k > MAX_MARKET {
            return Err(Error::InvalidPreference(format!("ranking length {k} unsupported")));
        }
        let mut position = vec![u8::MAX; k];
        for (pos, &x) in ranking.iter().enumerate() {
            if x >= k {
                return Err(Error::InvalidPreference(format!("entry {x} out of range 0..{k}")));
            }
            if position[x] != u8::MAX {
                return Err(Error::InvalidPreference(format!("duplicate entry {x}")));
            }
            position[x] = pos as u8;
        }
        Ok(Preference {
            ranking: ranking.iter().map(|&x| x as u8).collect(),
            position,
        })
    }

    /// Parses a ranking written with identifiers of `side`, e.g. `["w2","w1","w3"]`.
    pub fn from_labels<S: AsRef<str>>(side: Side, labels: &[S]) -> Result<Preference> {
        let mut ranking = Vec::with_capacity(labels.len());
        for l in labels {
            let agent: Agent = l.as_ref().parse()?;
            if agent.side != side {
                return Err(Error::InvalidPreference(format!(
                    "wrong-side entry {} in a ranking of {side}",
                    l.as_ref()
                )));
            }
            ranking.push(agent.index);
        }
        Preference::new(&ranking)
    }

    pub fn len(&self) -> usize {
        self.ranking.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranking.is_empty()
    }

    pub fn top(&self) -> usize {
        self.ranking[0] as usize
    }

    pub fn ranking(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.ranking.iter().map(|&x| x as usize)
    }

    pub fn ranking_bytes(&self) -> &[u8] {
        &self.ranking
    }

    /// Element ranked at `pos` (0 = top).
    pub fn at(&self, pos: usize) -> usize {
        self.ranking[pos] as usize
    }

    /// Rank of `x` (0 = top). Panics if `x` is out of range.
    pub fn rank_of(&self, x: usize) -> usize {
        self.position[x] as usize
    }

    /// Unchecked strict comparison for hot loops.
    #[inline]
    pub fn ranks_above(&self, x: usize, y: usize) -> bool {
        self.position[x] < self.position[y]
    }

    pub fn prefers(&self, x: usize, y: usize) -> Result<bool> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.ranks_above(x, y))
    }

    pub fn weakly_prefers(&self, x: usize, y: usize) -> Result<bool> {
        Ok(x == y || self.prefers(x, y)?)
    }

    fn check(&self, x: usize) -> Result<()> {
        if x < self.len() {
            Ok(())
        } else {
            Err(Error::NotRanked { item: x })
        }
    }

    /// Whether `pattern` occurs in this ranking as a (not necessarily
    /// contiguous) subsequence.
    pub fn contains_pattern(&self, pattern: &[usize]) -> bool {
        if pattern.iter().any(|&x| x >= self.len()) {
            return false;
        }
        pattern.windows(2).all(|w| self.ranks_above(w[0], w[1]))
    }

    /// Renders the ranking with the given node names.
    pub fn render<S: AsRef<str>>(&self, names: &[S]) -> String {
        self.ranking()
            .map(|x| names[x].as_ref().to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Renders the ranking using canonical identifiers of `side`.
    pub fn render_side(&self, side: Side) -> String {
        self.ranking().map(|x| side.label(x)).collect::<Vec<_>>().join(" ")
    }

    pub fn labels(&self, side: Side) -> Vec<String> {
        self.ranking().map(|x| side.label(x)).collect()
    }
}

impl fmt::Debug for Preference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.ranking)
    }
}

/// A perfect matching between men and women, stored as two inverse arrays.
///
/// Ordering is lexicographic on the man-indexed partner vector.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Matching {
    wife: Vec<u8>,
    husband: Vec<u8>,
}

impl Matching {
    /// Builds a matching from `wives[m]` = woman matched to man `m`.
    pub fn from_wives(wives: &[usize]) -> Result<Matching> {
        let n = wives.len();
        let mut husband = vec![u8::MAX; n];
        for (m, &w) in wives.iter().enumerate() {
            if w >= n {
                return Err(Error::InvalidMatching(format!("woman index {w} out of range")));
            }
            if husband[w] != u8::MAX {
                return Err(Error::InvalidMatching(format!("{} is matched twice", Agent::woman(w))));
            }
            husband[w] = m as u8;
        }
        Ok(Matching {
            wife: wives.iter().map(|&w| w as u8).collect(),
            husband,
        })
    }

    pub(crate) fn from_wife_bytes(wife: Vec<u8>) -> Matching {
        let mut husband = vec![0u8; wife.len()];
        for (m, &w) in wife.iter().enumerate() {
            husband[w as usize] = m as u8;
        }
        Matching { wife, husband }
    }

    pub fn identity(n: usize) -> Matching {
        Matching::from_wife_bytes((0..n as u8).collect())
    }

    /// Parses `["m1-w2", "m2-w1", ...]`; every man must occur exactly once.
    pub fn from_pairs<S: AsRef<str>>(n: usize, pairs: &[S]) -> Result<Matching> {
        let mut wives = vec![usize::MAX; n];
        for p in pairs {
            let p = p.as_ref();
            let (a, b) = p
                .split_once('-')
                .ok_or_else(|| Error::InvalidMatching(format!("pair {p:?} is not of the form m-w")))?;
            let man: Agent = a.trim().parse()?;
            let woman: Agent = b.trim().parse()?;
            if man.side != Side::Men || woman.side != Side::Women {
                return Err(Error::InvalidMatching(format!("pair {p:?} must be man-woman")));
            }
            if man.index >= n || woman.index >= n {
                return Err(Error::InvalidMatching(format!("pair {p:?} outside market of size {n}")));
            }
            if wives[man.index] != usize::MAX {
                return Err(Error::InvalidMatching(format!("{man} is matched twice")));
            }
            wives[man.index] = woman.index;
        }
        if let Some(m) = wives.iter().position(|&w| w == usize::MAX) {
            return Err(Error::InvalidMatching(format!("{} is unmatched", Agent::man(m))));
        }
        Matching::from_wives(&wives)
    }

    pub fn n(&self) -> usize {
        self.wife.len()
    }

    pub fn wife_of(&self, man: usize) -> usize {
        self.wife[man] as usize
    }

    pub fn husband_of(&self, woman: usize) -> usize {
        self.husband[woman] as usize
    }

    /// Index (on the opposite side) of the partner of `agent`.
    #[inline]
    pub fn partner_index(&self, agent: Agent) -> usize {
        match agent.side {
            Side::Men => self.wife[agent.index] as usize,
            Side::Women => self.husband[agent.index] as usize,
        }
    }

    pub fn partner(&self, agent: Agent) -> Agent {
        Agent {
            side: agent.side.other(),
            index: self.partner_index(agent),
        }
    }

    pub fn wives(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.wife.iter().map(|&w| w as usize)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.wives().enumerate()
    }

    /// Canonical serialization: `m_i-w_j` sorted by man index.
    pub fn to_pair_strings(&self) -> Vec<String> {
        self.pairs()
            .map(|(m, w)| format!("{}-{}", Agent::man(m), Agent::woman(w)))
            .collect()
    }
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_pair_strings().join(" "))
    }
}

impl fmt::Debug for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{self}]")
    }
}

/// Read access to one preference per agent.
///
/// Implemented by owned [`Profile`]s and by the borrowed views used inside
/// audits, so matching algorithms never need to copy preferences.
pub trait PreferenceLookup {
    fn market_size(&self) -> usize;
    fn man(&self, m: usize) -> &Preference;
    fn woman(&self, w: usize) -> &Preference;

    fn of(&self, agent: Agent) -> &Preference {
        match agent.side {
            Side::Men => self.man(agent.index),
            Side::Women => self.woman(agent.index),
        }
    }

    /// Concatenated rankings in canonical agent order; a stable profile key.
    fn flatten(&self) -> Vec<u8> {
        let n = self.market_size();
        let mut out = Vec::with_capacity(2 * n * n);
        for m in 0..n {
            out.extend_from_slice(self.man(m).ranking_bytes());
        }
        for w in 0..n {
            out.extend_from_slice(self.woman(w).ranking_bytes());
        }
        out
    }
}

/// One preference per agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Profile {
    market: Market,
    men: Vec<Preference>,
    women: Vec<Preference>,
}

impl Profile {
    pub fn new(market: Market, men: Vec<Preference>, women: Vec<Preference>) -> Result<Profile> {
        let n = market.n();
        if men.len() != n || women.len() != n {
            return Err(Error::InvalidPreference(format!(
                "profile needs {n} preferences per side (got {} men, {} women)",
                men.len(),
                women.len()
            )));
        }
        if let Some(p) = men.iter().chain(&women).find(|p| p.len() != n) {
            return Err(Error::InvalidPreference(format!(
                "preference {p:?} does not rank all {n} agents of the other side"
            )));
        }
        Ok(Profile { market, men, women })
    }

    /// Builds a profile from rankings written with indices.
    pub fn from_rankings(men: &[Vec<usize>], women: &[Vec<usize>]) -> Result<Profile> {
        let market = Market::new(men.len())?;
        let men = men.iter().map(|r| Preference::new(r)).collect::<Result<_>>()?;
        let women = women.iter().map(|r| Preference::new(r)).collect::<Result<_>>()?;
        Profile::new(market, men, women)
    }

    /// Copies any preference source into an owned profile.
    pub fn capture<P: PreferenceLookup + ?Sized>(source: &P) -> Result<Profile> {
        let n = source.market_size();
        let market = Market::new(n)?;
        Profile::new(
            market,
            (0..n).map(|m| source.man(m).clone()).collect(),
            (0..n).map(|w| source.woman(w).clone()).collect(),
        )
    }

    pub fn market(&self) -> Market {
        self.market
    }

    pub fn men_prefs(&self) -> &[Preference] {
        &self.men
    }

    pub fn women_prefs(&self) -> &[Preference] {
        &self.women
    }

    /// The profile with `agent`'s report replaced by `pref`.
    pub fn with_preference(&self, agent: Agent, pref: Preference) -> Result<Profile> {
        if pref.len() != self.market.n() || agent.index >= self.market.n() {
            return Err(Error::MarketMismatch {
                expected: self.market.n(),
                found: pref.len(),
            });
        }
        let mut next = self.clone();
        match agent.side {
            Side::Men => next.men[agent.index] = pref,
            Side::Women => next.women[agent.index] = pref,
        }
        Ok(next)
    }

    /// `prefers` lifted to agent identifiers; entries must be on the other side.
    pub fn prefers(&self, owner: Agent, x: Agent, y: Agent) -> Result<bool> {
        let pref = self.of(owner);
        for a in [x, y] {
            if a.side == owner.side || a.index >= pref.len() {
                return Err(Error::NotRanked { item: a.index });
            }
        }
        pref.prefers(x.index, y.index)
    }

    pub fn to_doc(&self) -> ProfileDoc {
        let n = self.market.n();
        let mut prefs = BTreeMap::new();
        for m in 0..n {
            prefs.insert(Side::Men.label(m), self.men[m].labels(Side::Women));
        }
        for w in 0..n {
            prefs.insert(Side::Women.label(w), self.women[w].labels(Side::Men));
        }
        ProfileDoc {
            n,
            men: Side::Men.labels(n),
            women: Side::Women.labels(n),
            prefs,
        }
    }
}

impl PreferenceLookup for Profile {
    fn market_size(&self) -> usize {
        self.market.n()
    }

    fn man(&self, m: usize) -> &Preference {
        &self.men[m]
    }

    fn woman(&self, w: usize) -> &Preference {
        &self.women[w]
    }
}

/// One problem found by [`validate_profile`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProfileIssue {
    MarketSize(usize),
    SideCount { side: Side, expected: usize, found: usize },
    DuplicateIdentifier(String),
    SharedIdentifier(String),
    UnknownAgent(String),
    MissingPreference(String),
    DuplicateEntry { owner: String, entry: String },
    WrongSideEntry { owner: String, entry: String },
    UnknownEntry { owner: String, entry: String },
    MissingEntry { owner: String, entry: String },
}

impl fmt::Display for ProfileIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ProfileIssue::*;
        match self {
            MarketSize(n) => write!(f, "n = {n}: markets need 3 <= n <= {MAX_MARKET}"),
            SideCount { side, expected, found } => {
                write!(f, "{side}: expected {expected} identifiers, found {found}")
            }
            DuplicateIdentifier(id) => write!(f, "identifier {id} listed twice"),
            SharedIdentifier(id) => write!(f, "identifier {id} appears on both sides"),
            UnknownAgent(id) => write!(f, "prefs.{id}: unknown agent"),
            MissingPreference(id) => write!(f, "{id}: agent without preference"),
            DuplicateEntry { owner, entry } => write!(f, "prefs.{owner}: duplicate entry {entry}"),
            WrongSideEntry { owner, entry } => {
                write!(f, "prefs.{owner}: wrong-side ranking ({entry} is on the owner's side)")
            }
            UnknownEntry { owner, entry } => write!(f, "prefs.{owner}: unknown entry {entry}"),
            MissingEntry { owner, entry } => write!(f, "prefs.{owner}: missing entry {entry}"),
        }
    }
}

/// Every violation found in a profile document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<ProfileIssue>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} problem(s) in profile:", self.issues.len())?;
        for issue in &self.issues {
            writeln!(f, "  {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

/// Checks a profile document and converts it to a [`Profile`].
///
/// Identifiers are opaque: the i-th entry of `men` becomes man `i` (printed
/// `m{i+1}` from then on), likewise for women. All problems are collected
/// rather than stopping at the first.
pub fn validate_profile(doc: &ProfileDoc) -> Result<Profile, ValidationReport> {
    let mut issues = Vec::new();
    let n = doc.n;
    if !(3..=MAX_MARKET).contains(&n) {
        issues.push(ProfileIssue::MarketSize(n));
    }
    for (side, list) in [(Side::Men, &doc.men), (Side::Women, &doc.women)] {
        if list.len() != n {
            issues.push(ProfileIssue::SideCount {
                side,
                expected: n,
                found: list.len(),
            });
        }
    }

    let mut ids: HashMap<&str, Agent> = HashMap::new();
    let mut seen_twice = BTreeSet::new();
    for (side, list) in [(Side::Men, &doc.men), (Side::Women, &doc.women)] {
        for (i, id) in list.iter().enumerate() {
            let agent = Agent { side, index: i };
            if let Some(prev) = ids.insert(id.as_str(), agent) {
                if prev.side == side {
                    issues.push(ProfileIssue::DuplicateIdentifier(id.clone()));
                } else if seen_twice.insert(id.clone()) {
                    issues.push(ProfileIssue::SharedIdentifier(id.clone()));
                }
            }
        }
    }
    if !issues.is_empty() {
        return Err(ValidationReport { issues });
    }

    for key in doc.prefs.keys() {
        if !ids.contains_key(key.as_str()) {
            issues.push(ProfileIssue::UnknownAgent(key.clone()));
        }
    }

    let mut men = Vec::with_capacity(n);
    let mut women = Vec::with_capacity(n);
    for (side, list) in [(Side::Men, &doc.men), (Side::Women, &doc.women)] {
        let opposite = match side {
            Side::Men => &doc.women,
            Side::Women => &doc.men,
        };
        for owner in list {
            let Some(entries) = doc.prefs.get(owner) else {
                issues.push(ProfileIssue::MissingPreference(owner.clone()));
                continue;
            };
            let mut ranking = Vec::with_capacity(n);
            let mut used = vec![false; n];
            let mut ok = true;
            for entry in entries {
                match ids.get(entry.as_str()) {
                    None => {
                        issues.push(ProfileIssue::UnknownEntry {
                            owner: owner.clone(),
                            entry: entry.clone(),
                        });
                        ok = false;
                    }
                    Some(a) if a.side == side => {
                        issues.push(ProfileIssue::WrongSideEntry {
                            owner: owner.clone(),
                            entry: entry.clone(),
                        });
                        ok = false;
                    }
                    Some(a) => {
                        if used[a.index] {
                            issues.push(ProfileIssue::DuplicateEntry {
                                owner: owner.clone(),
                                entry: entry.clone(),
                            });
                            ok = false;
                        } else {
                            used[a.index] = true;
                            ranking.push(a.index);
                        }
                    }
                }
            }
            for (i, u) in used.iter().enumerate() {
                if !u {
                    issues.push(ProfileIssue::MissingEntry {
                        owner: owner.clone(),
                        entry: opposite[i].clone(),
                    });
                    ok = false;
                }
            }
            if ok {
                let pref = Preference::new(&ranking).expect("ranking checked above");
                match side {
                    Side::Men => men.push(pref),
                    Side::Women => women.push(pref),
                }
            }
        }
    }

    if !issues.is_empty() {
        return Err(ValidationReport { issues });
    }
    let market = Market::new(n).expect("size checked above");
    Ok(Profile::new(market, men, women).expect("shape checked above"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pref(r: &[usize]) -> Preference {
        Preference::new(r).unwrap()
    }

    fn doc(prefs: &[(&str, &[&str])]) -> ProfileDoc {
        ProfileDoc {
            n: 3,
            men: Side::Men.labels(3),
            women: Side::Women.labels(3),
            prefs: prefs
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
                .collect(),
        }
    }

    const FULL: [(&str, &[&str]); 6] = [
        ("m1", &["w1", "w2", "w3"]),
        ("m2", &["w2", "w1", "w3"]),
        ("m3", &["w3", "w2", "w1"]),
        ("w1", &["m1", "m2", "m3"]),
        ("w2", &["m3", "m2", "m1"]),
        ("w3", &["m2", "m3", "m1"]),
    ];

    #[test]
    fn prefers_reads_the_order() {
        let p = pref(&[1, 0, 2]);
        assert!(p.prefers(1, 2).unwrap());
        assert!(!p.prefers(2, 1).unwrap());
        assert!(!p.prefers(0, 0).unwrap());
        assert!(p.weakly_prefers(0, 0).unwrap());
        assert!(p.weakly_prefers(1, 0).unwrap());
        assert!(!p.weakly_prefers(2, 0).unwrap());
        assert_eq!(p.prefers(5, 0), Err(Error::NotRanked { item: 5 }));
        assert_eq!(p.top(), 1);
    }

    #[test]
    fn market_rejects_small_n() {
        assert!(Market::new(2).is_err());
        assert!(Market::new(3).is_ok());
    }

    #[test]
    fn well_formed_profile_validates() {
        let p = validate_profile(&doc(&FULL)).unwrap();
        assert_eq!(p.man(1).top(), 1);
        assert_eq!(p.woman(1).top(), 2);
    }

    #[test]
    fn duplicate_entry_is_reported() {
        let mut prefs = FULL.to_vec();
        prefs[0] = ("m1", &["w1", "w1", "w3"]);
        let report = validate_profile(&doc(&prefs)).unwrap_err();
        let text = report.to_string();
        assert!(text.contains("duplicate entry w1"), "{text}");
        assert!(text.contains("missing entry w2"), "{text}");
    }

    #[test]
    fn missing_agent_is_reported() {
        let prefs: Vec<_> = FULL.iter().copied().filter(|(k, _)| *k != "w3").collect();
        let report = validate_profile(&doc(&prefs)).unwrap_err();
        assert_eq!(report.issues, vec![ProfileIssue::MissingPreference("w3".into())]);
        assert!(report.to_string().contains("agent without preference"));
    }

    #[test]
    fn wrong_side_and_unknown_entries_are_all_reported() {
        let mut prefs = FULL.to_vec();
        prefs[1] = ("m2", &["w2", "m1", "w3"]);
        prefs[3] = ("w1", &["m1", "m2", "x9"]);
        let report = validate_profile(&doc(&prefs)).unwrap_err();
        let text = report.to_string();
        assert!(text.contains("prefs.m2: wrong-side ranking (m1"), "{text}");
        assert!(text.contains("unknown entry x9"), "{text}");
        assert_eq!(report.issues.len(), 4);
    }

    #[test]
    fn opaque_identifiers_map_by_position() {
        let d = ProfileDoc {
            n: 3,
            men: vec!["al".into(), "bo".into(), "cy".into()],
            women: vec!["di".into(), "ed".into(), "fi".into()],
            prefs: [
                ("al", ["ed", "di", "fi"]),
                ("bo", ["di", "ed", "fi"]),
                ("cy", ["fi", "ed", "di"]),
                ("di", ["cy", "bo", "al"]),
                ("ed", ["al", "bo", "cy"]),
                ("fi", ["bo", "al", "cy"]),
            ]
            .iter()
            .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
            .collect(),
        };
        let p = validate_profile(&d).unwrap();
        assert_eq!(p.man(0).top(), 1);
        assert_eq!(p.woman(0).top(), 2);
        let shared = ProfileDoc {
            women: vec!["al".into(), "ed".into(), "fi".into()],
            ..d
        };
        let report = validate_profile(&shared).unwrap_err();
        assert_eq!(report.issues, vec![ProfileIssue::SharedIdentifier("al".into())]);
    }

    #[test]
    fn matching_round_trips_through_pairs() {
        let mu = Matching::from_wives(&[2, 0, 1]).unwrap();
        let s = mu.to_pair_strings();
        assert_eq!(s, vec!["m1-w3", "m2-w1", "m3-w2"]);
        assert_eq!(Matching::from_pairs(3, &s).unwrap(), mu);
        assert_eq!(mu.husband_of(2), 0);
        assert!(Matching::from_wives(&[0, 0, 1]).is_err());
        assert!(Matching::from_pairs(3, &["m1-w1", "m2-w2"]).is_err());
    }

    #[test]
    fn agent_parse_and_display() {
        let a: Agent = "w12".parse().unwrap();
        assert_eq!(a, Agent::woman(11));
        assert_eq!(a.to_string(), "w12");
        assert!("x1".parse::<Agent>().is_err());
        assert!("m0".parse::<Agent>().is_err());
    }

    fn permutation(k: usize) -> impl Strategy<Value = Vec<usize>> {
        Just((0..k).collect::<Vec<_>>()).prop_shuffle()
    }

    proptest! {
        #[test]
        fn strict_order_is_semiconnex_and_asymmetric(r in (3usize..8).prop_flat_map(permutation)) {
            let p = Preference::new(&r).unwrap();
            let k = r.len();
            for x in 0..k {
                prop_assert!(!p.prefers(x, x).unwrap());
                for y in 0..k {
                    if x != y {
                        prop_assert!(p.prefers(x, y).unwrap() ^ p.prefers(y, x).unwrap());
                    }
                    for z in 0..k {
                        if p.prefers(x, y).unwrap() && p.prefers(y, z).unwrap() {
                            prop_assert!(p.prefers(x, z).unwrap());
                        }
                    }
                }
            }
        }

        #[test]
        fn matchings_are_bijections(w in (3usize..9).prop_flat_map(permutation)) {
            let mu = Matching::from_wives(&w).unwrap();
            prop_assert_eq!(mu.pairs().count(), w.len());
            for (m, wf) in mu.pairs() {
                prop_assert_eq!(mu.husband_of(wf), m);
                prop_assert_eq!(mu.partner(mu.partner(Agent::man(m))), Agent::man(m));
            }
        }
    }

    #[test]
    fn transitivity_by_exhaustion_up_to_seven() {
        for k in 3..=7usize {
            let mut r: Vec<usize> = (0..k).collect();
            let mut count = 0;
            loop {
                let p = Preference::new(&r).unwrap();
                for x in 0..k {
                    for y in 0..k {
                        for z in 0..k {
                            if p.ranks_above(x, y) && p.ranks_above(y, z) {
                                assert!(p.ranks_above(x, z));
                            }
                        }
                    }
                }
                count += 1;
                if !next_permutation(&mut r) {
                    break;
                }
            }
            assert_eq!(count, (1..=k).product::<usize>());
        }
    }

    fn next_permutation(v: &mut [usize]) -> bool {
        let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
            return false;
        };
        let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
        v.swap(i - 1, j);
        v[i..].reverse();
        true
    }
}
