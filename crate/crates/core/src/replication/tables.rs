//! The three-profile constructions behind the impossibility results.
//!
//! Each construction places abstract *roles* (`m1, m2, ...`, `w1, w2, ...`)
//! onto actual agents so that the witness patterns found in the domain line
//! up with the role layout. Remaining agents are fillers: filler role `k`
//! gets the first admissible preference topping the opposite filler role `k`,
//! which makes every filler pair mutually top-ranked.

use serde::Serialize;

use crate::da::{deferred_acceptance, enumerate_stable, StableSet};
use crate::domain::{satisfies_rotation, triple_pattern_witness, DomainPair, PatternWitness, PreferenceSet, Verdict};
use crate::error::{Error, Result};
use crate::io::ProfileDoc;
use crate::model::{Agent, Market, Matching, Preference, PreferenceLookup, Profile, Side};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstructionKind {
    /// Stable but manipulable: two TD violations.
    TopDominance,
    /// Stable but bossy: two rotation violations.
    Rotation,
}

/// `men[r]` is the actual man playing role man `r`; likewise for women.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoleAssignment {
    pub men: Vec<usize>,
    pub women: Vec<usize>,
}

impl RoleAssignment {
    fn agent(&self, side: Side, role: usize) -> usize {
        match side {
            Side::Men => self.men[role],
            Side::Women => self.women[role],
        }
    }

    /// Matching pairing role man `r` with role woman `perm[r]`.
    fn matching(&self, perm: &[usize]) -> Matching {
        let n = self.men.len();
        let mut wives = vec![0; n];
        for (r, &q) in perm.iter().enumerate() {
            wives[self.men[r]] = self.women[q];
        }
        Matching::from_wives(&wives).expect("role permutation")
    }
}

/// A named preference used in the table cells.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LegendEntry {
    pub name: String,
    pub owners: Side,
    pub ranking: Vec<String>,
}

/// Three profiles with their role layout and the two matchings they hinge on.
#[derive(Clone, Debug)]
pub struct Construction {
    pub kind: ConstructionKind,
    /// Which relabelling made the witnesses fit (1 when none was needed).
    pub case: u8,
    pub roles: RoleAssignment,
    pub profiles: [Profile; 3],
    /// Cell names per profile: role men then role women.
    pub cells: [Vec<String>; 3],
    pub legend: Vec<LegendEntry>,
    pub mu1: Matching,
    pub mu2: Matching,
    /// Witnesses supplied by the men's set and the women's set.
    pub men_witness: PatternWitness,
    pub women_witness: PatternWitness,
}

impl Construction {
    pub fn n(&self) -> usize {
        self.roles.men.len()
    }

    /// Number of non-filler roles per side.
    pub fn core_roles(&self) -> usize {
        match self.kind {
            ConstructionKind::TopDominance => 3,
            ConstructionKind::Rotation => 4,
        }
    }

    /// Column headers: the agent playing each role, men then women.
    pub fn headers(&self) -> Vec<String> {
        let men = self.roles.men.iter().map(|&m| Side::Men.label(m));
        men.chain(self.roles.women.iter().map(|&w| Side::Women.label(w)))
            .collect()
    }

    /// The agent that changes its report between profile 1 and profile `row`
    /// (`row` is 2 or 3), in actual labels.
    pub fn deviator(&self, row: usize) -> Agent {
        match (self.kind, row) {
            (ConstructionKind::TopDominance, 2) => Agent::woman(self.roles.women[0]),
            (ConstructionKind::TopDominance, _) => Agent::man(self.roles.men[1]),
            (ConstructionKind::Rotation, 2) => Agent::man(self.roles.men[2]),
            (ConstructionKind::Rotation, _) => Agent::woman(self.roles.women[2]),
        }
    }

    /// Expected stable sets of the three profiles.
    pub fn expected_stable(&self) -> [Vec<Matching>; 3] {
        let mut both = vec![self.mu1.clone(), self.mu2.clone()];
        both.sort();
        [both, vec![self.mu2.clone()], vec![self.mu1.clone()]]
    }

    pub fn to_doc(&self) -> ConstructionDoc {
        ConstructionDoc {
            kind: self.kind,
            case: self.case,
            roles: RoleLabels {
                men: self.roles.men.iter().map(|&m| Side::Men.label(m)).collect(),
                women: self.roles.women.iter().map(|&w| Side::Women.label(w)).collect(),
            },
            headers: self.headers(),
            rows: self.cells.to_vec(),
            legend: self.legend.clone(),
            profiles: self.profiles.iter().map(Profile::to_doc).collect(),
            mu1: self.mu1.to_pair_strings(),
            mu2: self.mu2.to_pair_strings(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoleLabels {
    pub men: Vec<String>,
    pub women: Vec<String>,
}

/// Serializable view of a [`Construction`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConstructionDoc {
    pub kind: ConstructionKind,
    pub case: u8,
    pub roles: RoleLabels,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub legend: Vec<LegendEntry>,
    pub profiles: Vec<ProfileDoc>,
    pub mu1: Vec<String>,
    pub mu2: Vec<String>,
}

/// Extends core roles with the remaining agents in ascending order.
fn with_fillers(core: &[usize], n: usize) -> Vec<usize> {
    let mut roles = core.to_vec();
    roles.extend((0..n).filter(|x| !core.contains(x)));
    roles
}

fn topping(set: &PreferenceSet, x: usize) -> Result<Preference> {
    set.first_with_top(x)
        .map(|i| set.get(i).clone())
        .ok_or_else(|| Error::Precondition(format!("no admissible preference tops {}", set.ranked().label(x))))
}

/// Assembles rows from named cells. `rows[p][slot]` names the preference of
/// role slot `slot` (role men then role women) in profile `p`.
struct Layout<'a> {
    roles: &'a RoleAssignment,
    names: Vec<(String, Side, Preference)>,
}

impl Layout<'_> {
    fn name(&mut self, name: &str, owners: Side, pref: Preference) {
        self.names.push((name.to_string(), owners, pref));
    }

    fn lookup(&self, name: &str) -> &Preference {
        &self.names.iter().find(|(n, _, _)| n == name).expect("named cell").2
    }

    fn build(&self, rows: &[Vec<String>; 3]) -> Result<[Profile; 3]> {
        let n = self.roles.men.len();
        let profile = |row: &Vec<String>| -> Result<Profile> {
            let mut men = vec![None; n];
            let mut women = vec![None; n];
            for (slot, cell) in row.iter().enumerate() {
                let pref = self.lookup(cell).clone();
                if slot < n {
                    men[self.roles.agent(Side::Men, slot)] = Some(pref);
                } else {
                    women[self.roles.agent(Side::Women, slot - n)] = Some(pref);
                }
            }
            let rank = |v: Vec<Option<Preference>>| -> Vec<Vec<usize>> {
                v.into_iter()
                    .map(|p| p.expect("every role filled").ranking().collect())
                    .collect()
            };
            Profile::from_rankings(&rank(men), &rank(women))
        };
        Ok([profile(&rows[0])?, profile(&rows[1])?, profile(&rows[2])?])
    }

    fn legend(&self) -> Vec<LegendEntry> {
        self.names
            .iter()
            .map(|(name, owners, pref)| LegendEntry {
                name: name.clone(),
                owners: *owners,
                ranking: pref.labels(owners.other()),
            })
            .collect()
    }
}

fn filler_cells(
    layout: &mut Layout<'_>,
    domain: &DomainPair,
    roles: &RoleAssignment,
    from: usize,
) -> Result<(Vec<String>, Vec<String>)> {
    let n = domain.n();
    let (mut men, mut women) = (Vec::new(), Vec::new());
    for k in from..n {
        let m = format!("F{}", k + 1);
        layout.name(&m, Side::Men, topping(domain.men(), roles.women[k])?);
        men.push(m);
        let w = format!("F~{}", k + 1);
        layout.name(&w, Side::Women, topping(domain.women(), roles.men[k])?);
        women.push(w);
    }
    Ok((men, women))
}

fn cells(men: &[&str], men_fill: &[String], women: &[&str], women_fill: &[String]) -> Vec<String> {
    men.iter()
        .map(|s| s.to_string())
        .chain(men_fill.iter().cloned())
        .chain(women.iter().map(|s| s.to_string()))
        .chain(women_fill.iter().cloned())
        .collect()
}

/// The manipulation construction for two TD-violating sides.
///
/// Needs trees on both sides: the triples come from [`triple_pattern_witness`].
pub fn build_td_violation_profiles(domain: &DomainPair) -> Result<Construction> {
    let n = domain.n();
    let tree = |owners: Side| {
        domain
            .tree_for(owners)
            .ok_or_else(|| Error::Precondition(format!("missing tree for {owners}' preferences")))
    };
    let men_witness = triple_pattern_witness(domain.men(), tree(Side::Men)?)?;
    let women_witness = triple_pattern_witness(domain.women(), tree(Side::Women)?)?;
    // (x y z), (x z y), (y x z) become (w2 w1 w3), (w2 w3 w1), (w1 w2 w3).
    let role_order = |w: &PatternWitness| [w.elements[1], w.elements[0], w.elements[2]];
    let roles = RoleAssignment {
        men: with_fillers(&role_order(&women_witness), n),
        women: with_fillers(&role_order(&men_witness), n),
    };
    let mut layout = Layout {
        roles: &roles,
        names: Vec::new(),
    };
    for (i, inst) in men_witness.instances.iter().enumerate() {
        layout.name(&format!("P{}", i + 1), Side::Men, inst.pref.clone());
    }
    for (i, inst) in women_witness.instances.iter().enumerate() {
        layout.name(&format!("P~{}", i + 1), Side::Women, inst.pref.clone());
    }
    let (mf, wf) = filler_cells(&mut layout, domain, &roles, 3)?;
    let rows = [
        cells(&["P3", "P1", "P3"], &mf, &["P~1", "P~3", "P~2"], &wf),
        cells(&["P3", "P1", "P3"], &mf, &["P~2", "P~3", "P~2"], &wf),
        cells(&["P3", "P2", "P3"], &mf, &["P~1", "P~3", "P~2"], &wf),
    ];
    let profiles = layout.build(&rows)?;
    let legend = layout.legend();
    let ident: Vec<usize> = (0..n).collect();
    let mut swapped = ident.clone();
    swapped.swap(0, 1);
    Ok(Construction {
        kind: ConstructionKind::TopDominance,
        case: 1,
        mu1: roles.matching(&ident),
        mu2: roles.matching(&swapped),
        roles,
        profiles,
        cells: rows,
        legend,
        men_witness,
        women_witness,
    })
}

/// Roles for one side from a rotation witness with `a` realizing
/// `[x y z t]` and `b` realizing `[z x t]`.
///
/// Returns the four core roles, the two preferences playing the first and
/// second pattern roles, and whether a relabelling was applied.
fn rotation_roles(w: &PatternWitness) -> Result<([usize; 4], Preference, Preference, bool)> {
    if w.elements.len() != 4 || w.instances.len() != 2 {
        return Err(Error::Precondition("not a rotation witness".into()));
    }
    let [x, y, z, t] = [w.elements[0], w.elements[1], w.elements[2], w.elements[3]];
    let (a, b) = (w.instances[0].pref.clone(), w.instances[1].pref.clone());
    if b.ranks_above(z, y) {
        Ok(([z, x, y, t], b, a, false))
    } else {
        Ok(([x, y, z, t], a, b, true))
    }
}

/// The bossiness construction for two rotation-violating sides, using the
/// first violation of each side's scan.
pub fn build_rotation_profiles(domain: &DomainPair) -> Result<Construction> {
    let scan = |set: &PreferenceSet| match satisfies_rotation(set) {
        Verdict::Violated(w) => Ok(w),
        Verdict::Holds => Err(Error::Precondition(format!("{} set satisfies rotation", set.owners()))),
    };
    build_rotation_profiles_from(domain, scan(domain.men())?, scan(domain.women())?)
}

/// As [`build_rotation_profiles`], with explicit rotation witnesses for each side.
pub fn build_rotation_profiles_from(
    domain: &DomainPair,
    men_witness: PatternWitness,
    women_witness: PatternWitness,
) -> Result<Construction> {
    let n = domain.n();
    if n < 4 {
        return Err(Error::Precondition("rotation construction needs n >= 4".into()));
    }
    if !men_witness.replay(domain.men()) || !women_witness.replay(domain.women()) {
        return Err(Error::Precondition(
            "rotation witness does not replay against the domain".into(),
        ));
    }
    let (core_w, q1, q2, renamed_w) = rotation_roles(&men_witness)?;
    let (core_m, r1, r2, renamed_m) = rotation_roles(&women_witness)?;
    let case = match (renamed_w, renamed_m) {
        (false, false) => 1,
        (false, true) => 2,
        (true, false) => 3,
        (true, true) => 4,
    };
    let roles = RoleAssignment {
        men: with_fillers(&core_m, n),
        women: with_fillers(&core_w, n),
    };
    let mut layout = Layout {
        roles: &roles,
        names: Vec::new(),
    };
    layout.name("P1", Side::Men, q1);
    layout.name("P2", Side::Men, q2);
    layout.name("P3", Side::Men, topping(domain.men(), roles.women[2])?);
    layout.name("P4", Side::Men, topping(domain.men(), roles.women[3])?);
    layout.name("P~1", Side::Women, r1);
    layout.name("P~2", Side::Women, r2);
    layout.name("P~3", Side::Women, topping(domain.women(), roles.men[2])?);
    layout.name("P~4", Side::Women, topping(domain.women(), roles.men[3])?);
    let (mf, wf) = filler_cells(&mut layout, domain, &roles, 4)?;
    let rows = [
        cells(&["P1", "P2", "P4", "P3"], &mf, &["P~2", "P~1", "P~4", "P~3"], &wf),
        cells(&["P1", "P2", "P1", "P3"], &mf, &["P~2", "P~1", "P~4", "P~3"], &wf),
        cells(&["P1", "P2", "P4", "P3"], &mf, &["P~2", "P~1", "P~1", "P~3"], &wf),
    ];
    let profiles = layout.build(&rows)?;
    let legend = layout.legend();
    let mut base: Vec<usize> = (0..n).collect();
    base.swap(2, 3);
    let mut swapped = base.clone();
    swapped.swap(0, 1);
    Ok(Construction {
        kind: ConstructionKind::Rotation,
        case,
        mu1: roles.matching(&base),
        mu2: roles.matching(&swapped),
        roles,
        profiles,
        cells: rows,
        legend,
        men_witness,
        women_witness,
    })
}

/// Recomputed facts about a construction.
#[derive(Clone, Debug)]
pub struct ConstructionCheck {
    pub stable_sets: [StableSet; 3],
    pub men_proposing: [Matching; 3],
    pub women_proposing: [Matching; 3],
    /// Stable sets equal `{mu1, mu2}`, `{mu2}`, `{mu1}`.
    pub stable_sets_match: bool,
    /// DA outcomes at profile 1 are `mu1` (men proposing) and `mu2`.
    pub da_matches: bool,
    /// Every filler role is matched to its own filler role in every stable matching.
    pub fillers_inert: bool,
    /// Only the designated agent changes its report between profile 1 and each other profile.
    pub single_deviations: bool,
}

impl ConstructionCheck {
    pub fn all_hold(&self) -> bool {
        self.stable_sets_match && self.da_matches && self.fillers_inert && self.single_deviations
    }
}

pub fn check_construction(c: &Construction) -> Result<ConstructionCheck> {
    let sets = [
        enumerate_stable(&c.profiles[0])?,
        enumerate_stable(&c.profiles[1])?,
        enumerate_stable(&c.profiles[2])?,
    ];
    let expected = c.expected_stable();
    let stable_sets_match = sets.iter().zip(&expected).all(|(s, e)| &s.matchings == e);
    let men_proposing = c.profiles.clone().map(|p| deferred_acceptance(&p, Side::Men));
    let women_proposing = c.profiles.clone().map(|p| deferred_acceptance(&p, Side::Women));
    let da_matches = men_proposing[0] == c.mu1 && women_proposing[0] == c.mu2;
    let core = c.core_roles();
    let fillers_inert = sets
        .iter()
        .flat_map(|s| &s.matchings)
        .all(|mu| (core..c.n()).all(|k| mu.wife_of(c.roles.men[k]) == c.roles.women[k]));
    let n = c.n();
    let single_deviations = [1usize, 2].iter().all(|&row| {
        let d = c.deviator(row + 1);
        Market::new(n)
            .expect("valid size")
            .agents()
            .all(|a| (c.profiles[0].of(a) != c.profiles[row].of(a)) == (a == d))
    });
    Ok(ConstructionCheck {
        stable_sets: sets,
        men_proposing,
        women_proposing,
        stable_sets_match,
        da_matches,
        fillers_inert,
        single_deviations,
    })
}
