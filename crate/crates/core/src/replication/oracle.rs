//! Decides whether a stable rule with a given incentive property exists on a
//! finite profile space, by constraint search over per-profile choices.
//!
//! Variables are the profiles of the space; each ranges over its stable set.
//! Binary constraints link every pair of profiles in the space that differ in
//! one agent's report. Search is maintained arc consistency with
//! smallest-domain-first branching; ties go to the profile with the smaller
//! stable set, then the earlier profile. Values are tried in stable-set order.

use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;

use crate::audit::{ProfileSpace, TableRule};
use crate::da::StableSet;
use crate::error::{Error, Result};
use crate::model::{Agent, Matching, PreferenceLookup};
use crate::par;

/// Default cap on the number of profiles the oracle accepts.
pub const DEFAULT_PROFILE_CAP: u128 = 10_000;

/// Default cap on recorded trace events.
pub const DEFAULT_TRACE_CAP: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Requirement {
    StableStrategyProof,
    StableNonBossy,
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Requirement::StableStrategyProof => "stable+sp",
            Requirement::StableNonBossy => "stable+nonbossy",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    pub profile_cap: u128,
    pub trace_cap: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            profile_cap: DEFAULT_PROFILE_CAP,
            trace_cap: DEFAULT_TRACE_CAP,
        }
    }
}

/// One step of the search, with profiles as indices into the space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "event")]
pub enum TraceEvent {
    /// Fixing `profile` to `choice`.
    Decide {
        depth: usize,
        profile: usize,
        choice: Vec<String>,
    },
    /// `profile` lost `removed` values through its link with `via` at `agent`.
    Prune {
        profile: usize,
        via: usize,
        agent: String,
        removed: u32,
    },
    /// `profile` has no consistent value left.
    Wipeout { profile: usize },
}

/// Exhausted search: the events recorded before the cap, and totals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SearchTrace {
    pub events: Vec<TraceEvent>,
    pub truncated: bool,
    pub decisions: u64,
    pub wipeouts: u64,
}

#[derive(Clone, Debug)]
pub enum OracleOutcome {
    Exists(TableRule),
    Impossible(SearchTrace),
}

impl OracleOutcome {
    pub fn exists(&self) -> bool {
        matches!(self, OracleOutcome::Exists(_))
    }
}

#[derive(Clone, Debug)]
pub struct OracleReport {
    pub requirement: Requirement,
    pub profiles: usize,
    pub links: usize,
    /// Profiles whose stable set is a single matching.
    pub forced: usize,
    pub outcome: OracleOutcome,
    /// Matching lists per profile, in space order; kept for replay.
    pub stable: Vec<Vec<Matching>>,
}

/// A link between profiles `a < b` differing in `agent`'s report.
struct Link {
    a: usize,
    b: usize,
    agent: Agent,
    /// `support_ab[i]`: values of `b` compatible with value `i` of `a`.
    support_ab: Vec<u64>,
    support_ba: Vec<u64>,
}

fn compatible<P: PreferenceLookup + ?Sized>(
    req: Requirement,
    agent: Agent,
    (p, mu): (&P, &Matching),
    (q, nu): (&P, &Matching),
) -> bool {
    let (x, y) = (mu.partner_index(agent), nu.partner_index(agent));
    match req {
        // neither report gains the other's outcome
        Requirement::StableStrategyProof => x == y || (p.of(agent).ranks_above(x, y) && q.of(agent).ranks_above(y, x)),
        Requirement::StableNonBossy => x != y || mu == nu,
    }
}

struct Trace {
    events: Vec<TraceEvent>,
    cap: usize,
    truncated: bool,
    decisions: u64,
    wipeouts: u64,
}

impl Trace {
    fn push(&mut self, e: TraceEvent) {
        if self.events.len() < self.cap {
            self.events.push(e);
        } else {
            self.truncated = true;
        }
    }
}

struct Search<'a> {
    links: &'a [Link],
    /// Per profile: (link index, profile is the link's `a` side).
    incident: Vec<Vec<(usize, bool)>>,
    domains: Vec<u64>,
    trail: Vec<(usize, u64)>,
}

impl Search<'_> {
    fn set(&mut self, v: usize, mask: u64) {
        self.trail.push((v, self.domains[v]));
        self.domains[v] = mask;
    }

    fn undo_to(&mut self, len: usize) {
        while self.trail.len() > len {
            let (v, m) = self.trail.pop().expect("non-empty trail");
            self.domains[v] = m;
        }
    }

    /// AC-3 from the given profiles; returns the wiped-out profile on failure.
    fn propagate(&mut self, start: &[usize], trace: &mut Trace) -> Option<usize> {
        let mut queue: VecDeque<usize> = start.iter().copied().collect();
        let mut queued = vec![false; self.domains.len()];
        for &s in start {
            queued[s] = true;
        }
        while let Some(y) = queue.pop_front() {
            queued[y] = false;
            for idx in 0..self.incident[y].len() {
                let (li, y_is_a) = self.incident[y][idx];
                let link = &self.links[li];
                // revise x against the changed y
                let (x, support) = if y_is_a {
                    (link.b, &link.support_ba)
                } else {
                    (link.a, &link.support_ab)
                };
                let dy = self.domains[y];
                let dx = self.domains[x];
                let mut keep = 0u64;
                let mut rest = dx;
                while rest != 0 {
                    let i = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    if support[i] & dy != 0 {
                        keep |= 1 << i;
                    }
                }
                if keep != dx {
                    trace.push(TraceEvent::Prune {
                        profile: x,
                        via: y,
                        agent: link.agent.to_string(),
                        removed: (dx & !keep).count_ones(),
                    });
                    self.set(x, keep);
                    if keep == 0 {
                        trace.wipeouts += 1;
                        trace.push(TraceEvent::Wipeout { profile: x });
                        return Some(x);
                    }
                    if !queued[x] {
                        queued[x] = true;
                        queue.push_back(x);
                    }
                }
            }
        }
        None
    }
}

/// Searches for a table rule on `space` that is stable and meets `req` on
/// every linked pair of profiles.
pub fn rule_existence_oracle(space: &ProfileSpace, req: Requirement, opts: OracleOptions) -> Result<OracleReport> {
    let card = space.cardinality();
    if card > opts.profile_cap {
        return Err(Error::Budget {
            what: "rule-existence oracle (profiles)",
            required: card,
            budget: opts.profile_cap,
        });
    }
    let count = card as usize;
    let n = space.n();
    let keys: Vec<_> = (0..count).map(|i| space.key_at(i)).collect();
    let stable: Vec<Vec<Matching>> = par::try_map(count, |i| -> Result<Vec<Matching>> {
        let set: StableSet = crate::da::enumerate_stable(&space.view(&keys[i].0))?;
        if set.len() > 64 {
            return Err(Error::Internal(format!(
                "profile {i} has {} stable matchings (> 64)",
                set.len()
            )));
        }
        Ok(set.matchings)
    })?;

    let links: Vec<Link> = par::flat_map(count, |a| {
        let mut out = Vec::new();
        let mut key = keys[a].0.clone();
        for slot in 0..2 * n {
            let truth = key[slot];
            for alt in 0..space.radix(slot) as u16 {
                if alt == truth {
                    continue;
                }
                key[slot] = alt;
                if let Some(b) = space.index_of(&key) {
                    if b > a {
                        let agent = Agent::from_slot(slot, n);
                        let (pa, pb) = (space.view(&keys[a].0), space.view(&keys[b].0));
                        let support = |from: &[Matching], fp, to: &[Matching], tp| -> Vec<u64> {
                            from.iter()
                                .map(|mu| {
                                    to.iter().enumerate().fold(0u64, |m, (j, nu)| {
                                        if compatible(req, agent, (&fp, mu), (&tp, nu)) {
                                            m | (1 << j)
                                        } else {
                                            m
                                        }
                                    })
                                })
                                .collect()
                        };
                        out.push(Link {
                            a,
                            b,
                            agent,
                            support_ab: support(&stable[a], pa, &stable[b], pb),
                            support_ba: support(&stable[b], pb, &stable[a], pa),
                        });
                    }
                }
            }
            key[slot] = truth;
        }
        out
    });

    let mut incident = vec![Vec::new(); count];
    for (li, l) in links.iter().enumerate() {
        incident[l.a].push((li, true));
        incident[l.b].push((li, false));
    }
    let full = |len: usize| if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
    let mut search = Search {
        links: &links,
        incident,
        domains: stable.iter().map(|s| full(s.len())).collect(),
        trail: Vec::new(),
    };
    let mut trace = Trace {
        events: Vec::new(),
        cap: opts.trace_cap,
        truncated: false,
        decisions: 0,
        wipeouts: 0,
    };
    let forced = stable.iter().filter(|s| s.len() == 1).count();
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by_key(|&i| (stable[i].len(), i));

    let all: Vec<usize> = (0..count).collect();
    let solved = if search.propagate(&all, &mut trace).is_some() {
        false
    } else {
        dfs(&mut search, &order, &stable, &mut trace)
    };

    let outcome = if solved {
        let mut rule = TableRule::new(n);
        for (i, key) in keys.iter().enumerate() {
            let pick = search.domains[i].trailing_zeros() as usize;
            rule.insert(&space.view(&key.0), stable[i][pick].clone());
        }
        OracleOutcome::Exists(rule)
    } else {
        OracleOutcome::Impossible(SearchTrace {
            events: trace.events,
            truncated: trace.truncated,
            decisions: trace.decisions,
            wipeouts: trace.wipeouts,
        })
    };
    Ok(OracleReport {
        requirement: req,
        profiles: count,
        links: links.len(),
        forced,
        outcome,
        stable,
    })
}

/// Iterative branching; on success every domain is a singleton.
fn dfs(search: &mut Search<'_>, order: &[usize], stable: &[Vec<Matching>], trace: &mut Trace) -> bool {
    struct Frame {
        var: usize,
        remaining: u64,
        trail_len: usize,
    }
    let pick = |search: &Search<'_>| -> Option<usize> {
        let mut best: Option<(u32, usize)> = None;
        for &v in order {
            let c = search.domains[v].count_ones();
            if c > 1 && best.is_none_or(|(bc, _)| c < bc) {
                best = Some((c, v));
                if c == 2 {
                    break;
                }
            }
        }
        best.map(|(_, v)| v)
    };
    let mut stack: Vec<Frame> = Vec::new();
    let Some(first) = pick(search) else {
        return true;
    };
    stack.push(Frame {
        var: first,
        remaining: search.domains[first],
        trail_len: search.trail.len(),
    });
    while let Some(frame) = stack.last_mut() {
        if frame.remaining == 0 {
            let len = frame.trail_len;
            stack.pop();
            search.undo_to(len);
            continue;
        }
        let bit = frame.remaining & frame.remaining.wrapping_neg();
        frame.remaining &= !bit;
        let (var, len) = (frame.var, frame.trail_len);
        search.undo_to(len);
        trace.decisions += 1;
        trace.push(TraceEvent::Decide {
            depth: stack.len(),
            profile: var,
            choice: stable[var][bit.trailing_zeros() as usize].to_pair_strings(),
        });
        search.set(var, bit);
        if search.propagate(&[var], trace).is_some() {
            continue;
        }
        match pick(search) {
            None => return true,
            Some(next) => stack.push(Frame {
                var: next,
                remaining: search.domains[next],
                trail_len: search.trail.len(),
            }),
        }
    }
    false
}
