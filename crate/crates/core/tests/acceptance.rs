//! Acceptance gate: one PASS/FAIL line per criterion, each under its time limit.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use matchkit_core::audit::{audit, AuditCheck, AuditOptions, ProfileSpace, Rule, Witness, WitnessKind};
use matchkit_core::da::{deferred_acceptance, enumerate_stable, is_stable};
use matchkit_core::domain::{
    five_node_rotation_witness, is_rich, satisfies_rotation, satisfies_td, td_selection, DomainPair, PatternInstance,
    PatternKind, PatternWitness, PreferenceSet,
};
use matchkit_core::model::{Agent, Matching, Preference, PreferenceLookup, Profile, Side};
use matchkit_core::replication::oracle::{rule_existence_oracle, OracleOptions, Requirement};
use matchkit_core::replication::tables::{build_rotation_profiles_from, build_td_violation_profiles};
use matchkit_core::replication::theorems::{verify_theorem, Claim, Status, TheoremConfig, TreeChoice};
use matchkit_core::trees::{count_maximal_single_peaked, enumerate_maximal_single_peaked, is_single_peaked, Tree};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn labels(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn go(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for x in 0..used.len() {
            if !used[x] {
                used[x] = true;
                cur.push(x);
                go(cur, used, out);
                cur.pop();
                used[x] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

fn factorial(k: u64) -> u64 {
    (1..=k).product()
}

/// Rankings given with one-based labels, as in the printed tables.
fn pref(one_based: &[usize]) -> Preference {
    Preference::new(&one_based.iter().map(|x| x - 1).collect::<Vec<_>>()).unwrap()
}

fn profile(men: &[&Preference], women: &[&Preference]) -> Profile {
    let r = |ps: &[&Preference]| ps.iter().map(|p| p.ranking().collect()).collect::<Vec<Vec<usize>>>();
    Profile::from_rankings(&r(men), &r(women)).unwrap()
}

fn wives(one_based: &[usize]) -> Matching {
    Matching::from_wives(&one_based.iter().map(|x| x - 1).collect::<Vec<_>>()).unwrap()
}

fn path_pair(n: usize) -> DomainPair {
    DomainPair::maximal(Tree::path(labels("w", n)).unwrap(), Tree::path(labels("m", n)).unwrap()).unwrap()
}

fn rich_subsets(set: &PreferenceSet) -> Vec<PreferenceSet> {
    (1u64..1 << set.len())
        .map(|mask| set.subset(mask).unwrap())
        .filter(|s| is_rich(s).is_rich())
        .collect()
}

fn has_witness(ws: &[Witness], kind: WitnessKind, at: &Profile, agent: Agent, report: &Preference) -> Option<Witness> {
    ws.iter()
        .find(|w| {
            w.kind == kind && &w.profile == at && w.deviators == [agent] && w.misreports == [(agent, report.clone())]
        })
        .cloned()
}

fn single_peaked_cardinalities() -> Outcome {
    for k in 3..=8usize {
        let t = Tree::path(labels("x", k)).unwrap();
        let (count, listed) = (
            count_maximal_single_peaked(&t),
            enumerate_maximal_single_peaked(&t).len() as u64,
        );
        ensure(count == 1 << (k - 1) && listed == count, || {
            format!("path {k}: {count}/{listed}")
        })?;
    }
    for k in 3..=6usize {
        let t = Tree::star(labels("x", k), 0).unwrap();
        let (count, listed) = (
            count_maximal_single_peaked(&t),
            enumerate_maximal_single_peaked(&t).len() as u64,
        );
        let expected = 2 * factorial(k as u64 - 1);
        ensure(count == expected && listed == count, || {
            format!("star {k}: {count}/{listed}")
        })?;
    }
    // x2 at the centre of a 4-node star
    let star = Tree::star(labels("x", 4), 1).unwrap();
    let mut filtered: Vec<Preference> = permutations(4)
        .into_iter()
        .filter(|r| r[0] == 1 || r[1] == 1)
        .map(|r| Preference::new(&r).unwrap())
        .collect();
    filtered.sort();
    let mut listed = enumerate_maximal_single_peaked(&star);
    listed.sort();
    ensure(listed == filtered, || {
        format!("star membership: {} vs {}", listed.len(), filtered.len())
    })?;
    Ok("paths k=3..8 and stars k=3..6 exact; 4-star set equals the x2-first-or-second filter".into())
}

/// The three profiles of the top-dominance table, typed in from its layout.
struct TdTable {
    profiles: [Profile; 3],
    p2: Preference,
    q2: Preference,
    mu1: Matching,
    mu2: Matching,
}

fn td_table() -> TdTable {
    let (p1, p2, p3) = (pref(&[2, 1, 3]), pref(&[2, 3, 1]), pref(&[1, 2, 3]));
    let (q1, q2, q3) = (pref(&[2, 1, 3]), pref(&[2, 3, 1]), pref(&[1, 2, 3]));
    TdTable {
        profiles: [
            profile(&[&p3, &p1, &p3], &[&q1, &q3, &q2]),
            profile(&[&p3, &p1, &p3], &[&q2, &q3, &q2]),
            profile(&[&p3, &p2, &p3], &[&q1, &q3, &q2]),
        ],
        p2,
        q2,
        mu1: wives(&[1, 2, 3]),
        mu2: wives(&[2, 1, 3]),
    }
}

fn td_violation_profiles_replication() -> Outcome {
    let t = td_table();
    ensure(deferred_acceptance(&t.profiles[0], Side::Men) == t.mu1, || {
        "MPDA(P^1) != mu1".into()
    })?;
    ensure(deferred_acceptance(&t.profiles[0], Side::Women) == t.mu2, || {
        "WPDA(P^1) != mu2".into()
    })?;
    let mut both = vec![t.mu1.clone(), t.mu2.clone()];
    both.sort();
    let expected = [both, vec![t.mu2.clone()], vec![t.mu1.clone()]];
    for (i, p) in t.profiles.iter().enumerate() {
        let set = enumerate_stable(p).map_err(|e| e.to_string())?;
        ensure(set.matchings == expected[i], || {
            format!("stable set of P^{}: {:?}", i + 1, set.matchings)
        })?;
    }
    let built = build_td_violation_profiles(&path_pair(3)).map_err(|e| e.to_string())?;
    ensure(built.profiles == t.profiles, || {
        "library construction differs from the typed table".into()
    })?;
    Ok("DA outcomes and stable sets {mu1,mu2}, {mu2}, {mu1} match; library construction agrees".into())
}

fn td_violation_profile_witnesses() -> Outcome {
    let t = td_table();
    let d = path_pair(3);
    let space = ProfileSpace::restricted(&d, &t.profiles).map_err(|e| e.to_string())?;
    let mp = audit(
        &Rule::MenProposing,
        &space,
        AuditCheck::StrategyProofness,
        AuditOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let wp = audit(
        &Rule::WomenProposing,
        &space,
        AuditCheck::StrategyProofness,
        AuditOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let w1 = has_witness(
        &mp.witnesses,
        WitnessKind::Manipulation,
        &t.profiles[0],
        Agent::woman(0),
        &t.q2,
    )
    .ok_or("MPDA audit lacks (P^1, w1, P~2)")?;
    let m2 = has_witness(
        &wp.witnesses,
        WitnessKind::Manipulation,
        &t.profiles[0],
        Agent::man(1),
        &t.p2,
    )
    .ok_or("WPDA audit lacks (P^1, m2, P2)")?;
    ensure(w1.before == t.mu1 && w1.after == t.mu2, || "w1 witness outcomes".into())?;
    ensure(m2.before == t.mu2 && m2.after == t.mu1, || "m2 witness outcomes".into())?;
    Ok(format!(
        "MPDA: (P^1, w1, P~2) among {}; WPDA: (P^1, m2, P2) among {}",
        mp.witnesses.len(),
        wp.witnesses.len()
    ))
}

fn td_side_audits() -> Outcome {
    let tw = Tree::path(labels("w", 3)).unwrap();
    let tm = Tree::path(labels("m", 3)).unwrap();
    let women = td_selection(Side::Women, &tm).map_err(|e| e.to_string())?;
    ensure(
        women.len() == 3 && is_rich(&women).is_rich() && satisfies_td(&women).holds(),
        || "td_selection is not a rich TD set of 3".into(),
    )?;
    let men = PreferenceSet::maximal(Side::Men, &tw);
    ensure(men.len() == 4, || "maximal set size".into())?;
    let d = DomainPair::new(men, women, Some(tw), Some(tm)).map_err(|e| e.to_string())?;
    let space = ProfileSpace::full(&d);
    ensure(space.cardinality() == 1728, || {
        format!("{} profiles", space.cardinality())
    })?;
    let sp = audit(
        &Rule::MenProposing,
        &space,
        AuditCheck::StrategyProofness,
        AuditOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let weak = AuditCheck::WeakGroup { max_coalition: 6 };
    let wg = audit(&Rule::MenProposing, &space, weak, AuditOptions::default()).map_err(|e| e.to_string())?;
    ensure(sp.witnesses.is_empty() && wg.witnesses.is_empty(), || {
        format!(
            "{} SP and {} weak-group witnesses",
            sp.witnesses.len(),
            wg.witnesses.len()
        )
    })?;
    Ok(format!(
        "1728 profiles: 0 SP witnesses, 0 weak-group witnesses ({} evaluations)",
        sp.planned_evaluations + wg.planned_evaluations
    ))
}

fn oracle_on_maximal() -> Outcome {
    let tw = Tree::path(labels("w", 3)).unwrap();
    let tm = Tree::path(labels("m", 3)).unwrap();
    let d = DomainPair::maximal(tw.clone(), tm.clone()).unwrap();
    let space = ProfileSpace::full(&d);
    let r = rule_existence_oracle(&space, Requirement::StableStrategyProof, OracleOptions::default())
        .map_err(|e| e.to_string())?;
    ensure(r.profiles == 4096 && !r.outcome.exists(), || {
        format!("{} profiles, exists = {}", r.profiles, r.outcome.exists())
    })?;
    let men = rich_subsets(&PreferenceSet::maximal(Side::Men, &tw));
    let women = rich_subsets(&PreferenceSet::maximal(Side::Women, &tm));
    ensure(men.len() == 3 && women.len() == 3, || {
        "expected three rich subsets per side".into()
    })?;
    let mut swept = 0;
    for m in &men {
        for w in &women {
            let (mt, wt) = (satisfies_td(m).holds(), satisfies_td(w).holds());
            if !(mt || wt) {
                continue;
            }
            swept += 1;
            let d = DomainPair::new(m.clone(), w.clone(), Some(tw.clone()), Some(tm.clone())).unwrap();
            let space = ProfileSpace::full(&d);
            let r = rule_existence_oracle(&space, Requirement::StableStrategyProof, OracleOptions::default())
                .map_err(|e| e.to_string())?;
            ensure(r.outcome.exists(), || {
                format!("oracle found no rule on a TD domain ({} profiles)", r.profiles)
            })?;
            let mut passes = false;
            for rule in [Rule::MenProposing, Rule::WomenProposing] {
                let a = audit(&rule, &space, AuditCheck::StrategyProofness, AuditOptions::default())
                    .map_err(|e| e.to_string())?;
                passes |= a.witnesses.is_empty();
            }
            ensure(passes, || "no DA passes the SP audit on a TD domain".into())?;
        }
    }
    Ok(format!(
        "4096 profiles: impossible; {swept} TD sub-domains: rule exists and a DA passes"
    ))
}

fn rotation_witness(four: (&[usize], &Preference), three: (&[usize], &Preference)) -> PatternWitness {
    let zero = |xs: &[usize]| xs.iter().map(|x| x - 1).collect::<Vec<_>>();
    PatternWitness {
        kind: PatternKind::RotationViolation,
        elements: zero(four.0),
        instances: vec![
            PatternInstance {
                pattern: zero(four.0),
                pref: four.1.clone(),
            },
            PatternInstance {
                pattern: zero(three.0),
                pref: three.1.clone(),
            },
        ],
    }
}

fn rotation_profiles_replication() -> Outcome {
    let d = path_pair(4);
    // P1 ranks 1 > 2 > 4 and 1 > 3; P2 ranks 2 > 3 > 1 > 4; same on the other side
    let p1 = pref(&[1, 2, 3, 4]);
    let p2 = pref(&[2, 3, 1, 4]);
    let witness = rotation_witness((&[2, 3, 1, 4], &p2), (&[1, 2, 4], &p1));
    let c = build_rotation_profiles_from(&d, witness.clone(), witness).map_err(|e| e.to_string())?;
    ensure(
        c.case == 1 && c.roles.men == [0, 1, 2, 3] && c.roles.women == [0, 1, 2, 3],
        || format!("case {} roles {:?}", c.case, c.roles),
    )?;
    let top = |s: Side, x: usize| d.set(s).get(d.set(s).first_with_top(x).unwrap()).clone();
    let (p3, p4) = (top(Side::Men, 2), top(Side::Men, 3));
    let (q1, q2, q3, q4) = (p1.clone(), p2.clone(), top(Side::Women, 2), top(Side::Women, 3));
    let typed = [
        profile(&[&p1, &p2, &p4, &p3], &[&q2, &q1, &q4, &q3]),
        profile(&[&p1, &p2, &p1, &p3], &[&q2, &q1, &q4, &q3]),
        profile(&[&p1, &p2, &p4, &p3], &[&q2, &q1, &q1, &q3]),
    ];
    ensure(c.profiles == typed, || {
        "library construction differs from the typed table".into()
    })?;
    let mu1 = wives(&[1, 2, 4, 3]);
    let mu2 = wives(&[2, 1, 4, 3]);
    ensure(c.mu1 == mu1 && c.mu2 == mu2, || "mu1/mu2".into())?;
    let mut both = vec![mu1.clone(), mu2.clone()];
    both.sort();
    let expected = [both, vec![mu2.clone()], vec![mu1.clone()]];
    for (i, p) in typed.iter().enumerate() {
        let set = enumerate_stable(p).map_err(|e| e.to_string())?;
        ensure(set.matchings == expected[i], || format!("stable set of P^{}", i + 1))?;
    }
    let space = ProfileSpace::restricted(&d, &typed).map_err(|e| e.to_string())?;
    let mp = audit(
        &Rule::MenProposing,
        &space,
        AuditCheck::NonBossiness,
        AuditOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let wp = audit(
        &Rule::WomenProposing,
        &space,
        AuditCheck::NonBossiness,
        AuditOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let m3 = Agent::man(2);
    let w3 = Agent::woman(2);
    let wm = has_witness(&mp.witnesses, WitnessKind::Bossy, &typed[0], m3, typed[1].of(m3))
        .ok_or("MPDA lacks the m3 witness")?;
    ensure(wm.before == mu1 && wm.after == mu2, || "m3 witness outcomes".into())?;
    ensure(
        wm.before.partner(m3) == Agent::woman(3) && wm.after.partner(m3) == Agent::woman(3),
        || "m3 does not keep w4".into(),
    )?;
    let ww = has_witness(&wp.witnesses, WitnessKind::Bossy, &typed[0], w3, typed[2].of(w3))
        .ok_or("WPDA lacks the w3 witness")?;
    ensure(
        ww.before == mu2 && ww.after == mu1 && ww.before.partner(w3) == ww.after.partner(w3),
        || "w3 witness outcomes".into(),
    )?;
    Ok("stable sets match; MPDA m3 witness (keeps w4, mu1 -> mu2); WPDA w3 witness (mu2 -> mu1)".into())
}

fn five_node_rotation_totality() -> Outcome {
    let shapes = [
        ("path", Tree::path(labels("w", 5)).unwrap()),
        ("fork", Tree::fork(labels("w", 5)).unwrap()),
        ("star", Tree::star(labels("w", 5), 0).unwrap()),
    ];
    for (name, tree) in &shapes {
        let set = PreferenceSet::maximal(Side::Men, tree);
        let w = five_node_rotation_witness(&set, tree).map_err(|e| format!("{name}: {e}"))?;
        ensure(w.replay(&set), || format!("{name}: witness does not replay"))?;
        ensure(!satisfies_rotation(&set).holds(), || {
            format!("{name}: scan finds rotation")
        })?;
    }
    let path = PreferenceSet::maximal(Side::Men, &shapes[0].1);
    ensure(path.len() == 16, || format!("{} preferences on the 5-path", path.len()))?;
    let mut rich = 0;
    for mask in 1u64..1 << 16 {
        let s = path.subset(mask).unwrap();
        if !is_rich(&s).is_rich() {
            continue;
        }
        rich += 1;
        ensure(!satisfies_rotation(&s).holds(), || {
            format!("rich subset {mask:#06x} satisfies rotation")
        })?;
    }
    Ok(format!(
        "three shapes confirmed; all {rich} rich subsets of the 5-path set fail rotation"
    ))
}

fn theorem_d(tree: TreeChoice) -> Outcome {
    let config = TheoremConfig {
        tree: Some(tree),
        ..TheoremConfig::default()
    };
    let r = verify_theorem(Claim::ThmDN5, &config).map_err(|e| e.to_string())?;
    let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    ensure(r.status == Status::Verified, || {
        format!("{}: failed {failed:?}", r.status)
    })?;
    Ok(format!("verified ({} checks)", r.checks.len()))
}

fn random_profile(rng: &mut ChaCha8Rng, n: usize) -> Profile {
    let mut side = || {
        (0..n)
            .map(|_| {
                let mut r: Vec<usize> = (0..n).collect();
                r.shuffle(rng);
                r
            })
            .collect::<Vec<_>>()
    };
    let men = side();
    let women = side();
    Profile::from_rankings(&men, &women).unwrap()
}

/// Classical single-peakedness on `0 < 1 < ... < k-1`: on each side of the
/// peak, nearer alternatives rank higher.
fn classical_single_peaked(ranking: &[usize]) -> bool {
    let peak = ranking[0];
    let pos = |x: usize| ranking.iter().position(|&y| y == x).unwrap();
    let k = ranking.len();
    (0..k).all(|x| {
        (0..k).all(|y| {
            let same_side_farther = (x < y && y < peak) || (peak < y && y < x);
            !same_side_farther || pos(y) < pos(x)
        })
    })
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_241_014);
    for i in 0..10_000 {
        let n = 3 + i % 3;
        let p = random_profile(&mut rng, n);
        for side in [Side::Men, Side::Women] {
            let mu = deferred_acceptance(&p, side);
            ensure(is_stable(&p, &mu), || format!("unstable DA outcome at sample {i}"))?;
        }
    }
    for i in 0..1_000 {
        let n = 3 + i % 4;
        let p = random_profile(&mut rng, n);
        let mp = deferred_acceptance(&p, Side::Men);
        let wp = deferred_acceptance(&p, Side::Women);
        let set = enumerate_stable(&p).map_err(|e| e.to_string())?;
        ensure(set.contains(&mp) && set.contains(&wp), || {
            format!("DA outcome missing from the stable set at sample {i}")
        })?;
        for mu in &set.matchings {
            for a in (0..n).map(Agent::man).chain((0..n).map(Agent::woman)) {
                let (best, worst) = if a.side == Side::Men { (&mp, &wp) } else { (&wp, &mp) };
                let r = p.of(a);
                let at = |m: &Matching| r.rank_of(m.partner_index(a));
                ensure(at(best) <= at(mu) && at(mu) <= at(worst), || {
                    format!("bound violated for {a} at sample {i}")
                })?;
            }
        }
    }
    for k in 2..=7 {
        let tree = Tree::path(labels("x", k)).unwrap();
        for r in permutations(k) {
            let tree_sp = is_single_peaked(&Preference::new(&r).unwrap(), &tree).map_err(|e| e.to_string())?;
            ensure(tree_sp == classical_single_peaked(&r), || {
                format!("disagreement on {r:?}")
            })?;
        }
    }
    Ok("10000 DA runs stable; 1000 lattice-bound checks; classical and tree single-peakedness agree for k <= 7".into())
}

struct Criterion {
    id: &'static str,
    limit: Duration,
    run: Box<dyn Fn() -> Outcome>,
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria = vec![
        Criterion {
            id: "1",
            limit: secs(5),
            run: Box::new(single_peaked_cardinalities),
        },
        Criterion {
            id: "2",
            limit: secs(1),
            run: Box::new(td_violation_profiles_replication),
        },
        Criterion {
            id: "3",
            limit: secs(1),
            run: Box::new(td_violation_profile_witnesses),
        },
        Criterion {
            id: "4",
            limit: secs(30),
            run: Box::new(td_side_audits),
        },
        Criterion {
            id: "5",
            limit: secs(300),
            run: Box::new(oracle_on_maximal),
        },
        Criterion {
            id: "6",
            limit: secs(5),
            run: Box::new(rotation_profiles_replication),
        },
        Criterion {
            id: "7",
            limit: secs(120),
            run: Box::new(five_node_rotation_totality),
        },
        Criterion {
            id: "8 path",
            limit: secs(120),
            run: Box::new(|| theorem_d(TreeChoice::Path)),
        },
        Criterion {
            id: "8 fork",
            limit: secs(120),
            run: Box::new(|| theorem_d(TreeChoice::Fork)),
        },
        Criterion {
            id: "8 star",
            limit: secs(120),
            run: Box::new(|| theorem_d(TreeChoice::Star)),
        },
        Criterion {
            id: "9",
            limit: secs(600),
            run: Box::new(property_suites),
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let verdict = match outcome {
            Ok(detail) if took <= c.limit => Ok(detail),
            Ok(detail) => Err(format!("{detail}; exceeded {:?}", c.limit)),
            Err(e) => Err(e),
        };
        match verdict {
            Ok(detail) => println!("PASS criterion {}: {detail} ({:.2}s)", c.id, took.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("FAIL criterion {}: {e} ({:.2}s)", c.id, took.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
