//! Deferred acceptance, blocking pairs and brute-force stable sets.

use std::collections::VecDeque;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Matching, PreferenceLookup, Side};
use crate::par;

/// Default largest market for [`enumerate_stable`].
pub const DEFAULT_STABLE_BOUND: usize = 8;

/// Deferred acceptance with `proposers` proposing.
pub fn deferred_acceptance<P: PreferenceLookup + ?Sized>(profile: &P, proposers: Side) -> Matching {
    let n = profile.market_size();
    let order: Vec<usize> = (0..n).collect();
    run_da(profile, proposers, &order)
}

/// Deferred acceptance with an explicit initial queue of free proposers.
///
/// The outcome does not depend on `order`; this entry point exists so tests
/// can check exactly that.
pub fn deferred_acceptance_with_order<P: PreferenceLookup + ?Sized>(
    profile: &P,
    proposers: Side,
    order: &[usize],
) -> Result<Matching> {
    let n = profile.market_size();
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::Precondition("queue order must permute the proposers".into()));
    }
    Ok(run_da(profile, proposers, order))
}

fn run_da<P: PreferenceLookup + ?Sized>(profile: &P, proposers: Side, order: &[usize]) -> Matching {
    let n = profile.market_size();
    let proposer_pref = |i: usize| match proposers {
        Side::Men => profile.man(i),
        Side::Women => profile.woman(i),
    };
    let receiver_pref = |j: usize| match proposers {
        Side::Men => profile.woman(j),
        Side::Women => profile.man(j),
    };
    const FREE: u8 = u8::MAX;
    let mut next = vec![0usize; n];
    let mut holder = vec![FREE; n];
    let mut queue: VecDeque<usize> = order.iter().copied().collect();
    while let Some(p) = queue.pop_front() {
        let r = proposer_pref(p).at(next[p]);
        next[p] += 1;
        match holder[r] {
            FREE => holder[r] = p as u8,
            h if receiver_pref(r).ranks_above(p, h as usize) => {
                holder[r] = p as u8;
                queue.push_back(h as usize);
            }
            _ => queue.push_back(p),
        }
    }
    match proposers {
        // holder[w] = man
        Side::Men => {
            let mut wife = vec![0u8; n];
            for (w, &m) in holder.iter().enumerate() {
                wife[m as usize] = w as u8;
            }
            Matching::from_wife_bytes(wife)
        }
        // holder[m] = woman
        Side::Women => Matching::from_wife_bytes(holder),
    }
}

/// Pairs `(m, w)` with `w P_m μ(m)` and `m P_w μ(w)`, in index order.
pub fn blocking_pairs<P: PreferenceLookup + ?Sized>(profile: &P, mu: &Matching) -> Result<Vec<(usize, usize)>> {
    let n = profile.market_size();
    if mu.n() != n {
        return Err(Error::MarketMismatch {
            expected: n,
            found: mu.n(),
        });
    }
    let mut out = Vec::new();
    for m in 0..n {
        let pm = profile.man(m);
        let current = mu.wife_of(m);
        for w in 0..n {
            if pm.ranks_above(w, current) && profile.woman(w).ranks_above(m, mu.husband_of(w)) {
                out.push((m, w));
            }
        }
    }
    Ok(out)
}

pub fn is_stable<P: PreferenceLookup + ?Sized>(profile: &P, mu: &Matching) -> bool {
    mu.n() == profile.market_size() && !has_blocking_pair(profile, mu)
}

fn has_blocking_pair<P: PreferenceLookup + ?Sized>(profile: &P, mu: &Matching) -> bool {
    let n = profile.market_size();
    (0..n).any(|m| {
        let pm = profile.man(m);
        let current = mu.wife_of(m);
        // only women ranked above the current wife can block
        (0..pm.rank_of(current)).any(|pos| {
            let w = pm.at(pos);
            profile.woman(w).ranks_above(m, mu.husband_of(w))
        })
    })
}

/// All stable matchings at one profile.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StableSet {
    /// Hex digest of the profile's rankings.
    pub profile_digest: String,
    /// Sorted by the man-indexed partner vector.
    pub matchings: Vec<Matching>,
}

impl StableSet {
    pub fn len(&self) -> usize {
        self.matchings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matchings.is_empty()
    }

    pub fn contains(&self, mu: &Matching) -> bool {
        self.matchings.binary_search(mu).is_ok()
    }
}

/// SHA-256 over the concatenated rankings, hex encoded (first 16 bytes).
pub fn profile_digest<P: PreferenceLookup + ?Sized>(profile: &P) -> String {
    let mut bytes = vec![profile.market_size() as u8];
    bytes.extend(profile.flatten());
    Sha256::digest(&bytes)[..16]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn enumerate_stable<P: PreferenceLookup + Sync + ?Sized>(profile: &P) -> Result<StableSet> {
    enumerate_stable_bounded(profile, DEFAULT_STABLE_BOUND)
}

/// Scans all `n!` matchings; parallel over the first man's partner.
pub fn enumerate_stable_bounded<P: PreferenceLookup + Sync + ?Sized>(profile: &P, bound: usize) -> Result<StableSet> {
    let n = profile.market_size();
    if n > bound {
        return Err(Error::StableBound { n, bound });
    }
    let matchings = par::flat_map(n, |first| {
        let mut out = Vec::new();
        let mut wives = vec![0u8; n];
        wives[0] = first as u8;
        scan(profile, &mut wives, 1, 1 << first, &mut out);
        out
    });
    Ok(StableSet {
        profile_digest: profile_digest(profile),
        matchings,
    })
}

/// The stable matchings in a profile's stable set, without the digest.
#[cfg(test)]
fn stable_matchings<P: PreferenceLookup + ?Sized>(profile: &P) -> Vec<Matching> {
    let n = profile.market_size();
    let mut out = Vec::new();
    let mut wives = vec![0u8; n];
    scan(profile, &mut wives, 0, 0, &mut out);
    out
}

fn scan<P: PreferenceLookup + ?Sized>(profile: &P, wives: &mut [u8], depth: usize, used: u32, out: &mut Vec<Matching>) {
    let n = wives.len();
    if depth == n {
        let mu = Matching::from_wife_bytes(wives.to_vec());
        if !has_blocking_pair(profile, &mu) {
            out.push(mu);
        }
        return;
    }
    for w in 0..n {
        if used & (1 << w) == 0 {
            wives[depth] = w as u8;
            scan(profile, wives, depth + 1, used | (1 << w), out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Agent, Preference, Profile};
    use crate::testutil::random_profile;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// First profile of the three-profile construction at n = 3 on paths.
    ///
    /// m1: w1 w2 w3, m2: w2 w1 w3, m3: w1 w2 w3,
    /// w1: m2 m1 m3, w2: m1 m2 m3, w3: m2 m3 m1.
    fn table_profile_1() -> Profile {
        Profile::from_rankings(
            &[vec![0, 1, 2], vec![1, 0, 2], vec![0, 1, 2]],
            &[vec![1, 0, 2], vec![0, 1, 2], vec![1, 2, 0]],
        )
        .unwrap()
    }

    fn mu(w: &[usize]) -> Matching {
        Matching::from_wives(w).unwrap()
    }

    #[test]
    fn table_profile_outcomes() {
        let p = table_profile_1();
        assert_eq!(deferred_acceptance(&p, Side::Men), mu(&[0, 1, 2]));
        assert_eq!(deferred_acceptance(&p, Side::Women), mu(&[1, 0, 2]));
        assert_eq!(blocking_pairs(&p, &mu(&[0, 1, 2])).unwrap(), vec![]);
        // m3 with w1 and m1 with w3: found by scanning all nine pairs
        let bp = blocking_pairs(&p, &mu(&[2, 1, 0])).unwrap();
        assert!(!bp.is_empty());
        let brute: Vec<(usize, usize)> = (0..3)
            .flat_map(|m| (0..3).map(move |w| (m, w)))
            .filter(|&(m, w)| {
                let x = mu(&[2, 1, 0]);
                p.man(m).prefers(w, x.wife_of(m)).unwrap() && p.woman(w).prefers(m, x.husband_of(w)).unwrap()
            })
            .collect();
        assert_eq!(bp, brute);
        let set = enumerate_stable(&p).unwrap();
        assert_eq!(set.matchings, vec![mu(&[0, 1, 2]), mu(&[1, 0, 2])]);
    }

    #[test]
    fn mutual_tops_never_block() {
        let p = Profile::from_rankings(
            &[vec![1, 0, 2], vec![2, 1, 0], vec![0, 1, 2]],
            &[vec![2, 0, 1], vec![0, 1, 2], vec![1, 2, 0]],
        )
        .unwrap();
        let m = mu(&[1, 2, 0]);
        assert!(blocking_pairs(&p, &m).unwrap().is_empty());
    }

    #[test]
    fn distinct_tops_get_their_tops() {
        let p = Profile::from_rankings(
            &[vec![2, 0, 1], vec![0, 1, 2], vec![1, 2, 0]],
            &[vec![0, 1, 2], vec![0, 2, 1], vec![2, 1, 0]],
        )
        .unwrap();
        let mp = deferred_acceptance(&p, Side::Men);
        assert_eq!(mp, mu(&[2, 0, 1]));
    }

    #[test]
    fn market_mismatch_is_an_error() {
        let p = table_profile_1();
        assert!(matches!(
            blocking_pairs(&p, &Matching::identity(4)),
            Err(Error::MarketMismatch { .. })
        ));
    }

    #[test]
    fn stable_bound_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_profile(&mut rng, 5);
        assert_eq!(
            enumerate_stable_bounded(&p, 4).unwrap_err(),
            Error::StableBound { n: 5, bound: 4 }
        );
    }

    #[test]
    fn da_is_stable_on_random_profiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..2_000 {
            let p = random_profile(&mut rng, 3 + i % 3);
            for side in [Side::Men, Side::Women] {
                assert!(blocking_pairs(&p, &deferred_acceptance(&p, side)).unwrap().is_empty());
            }
        }
    }

    #[test]
    fn queue_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let n = 3 + rng.gen_range(0..4usize);
            let p = random_profile(&mut rng, n);
            for side in [Side::Men, Side::Women] {
                let base = deferred_acceptance(&p, side);
                assert_eq!(base, deferred_acceptance(&p, side));
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                assert_eq!(deferred_acceptance_with_order(&p, side, &order).unwrap(), base);
            }
        }
    }

    #[test]
    fn lattice_extremes_bound_every_stable_matching() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for i in 0..300 {
            let p = random_profile(&mut rng, 3 + i % 4);
            let n = p.market_size();
            let mp = deferred_acceptance(&p, Side::Men);
            let wp = deferred_acceptance(&p, Side::Women);
            let set = enumerate_stable(&p).unwrap();
            assert!(set.contains(&mp) && set.contains(&wp));
            for x in &set.matchings {
                for m in 0..n {
                    let pm = p.man(m);
                    assert!(pm.weakly_prefers(mp.wife_of(m), x.wife_of(m)).unwrap());
                    assert!(pm.weakly_prefers(x.wife_of(m), wp.wife_of(m)).unwrap());
                }
                for w in 0..n {
                    let pw = p.woman(w);
                    assert!(pw.weakly_prefers(wp.husband_of(w), x.husband_of(w)).unwrap());
                    assert!(pw.weakly_prefers(x.husband_of(w), mp.husband_of(w)).unwrap());
                }
            }
        }
    }

    #[test]
    fn stable_set_sorted_and_duplicate_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let p = random_profile(&mut rng, 5);
            let set = enumerate_stable(&p).unwrap();
            assert!(!set.is_empty());
            assert!(set.matchings.windows(2).all(|w| w[0] < w[1]));
            assert!(set.matchings.iter().all(|m| is_stable(&p, m)));
            assert_eq!(set.matchings, stable_matchings(&p));
            assert_eq!(set.profile_digest.len(), 32);
        }
    }

    #[test]
    fn digest_distinguishes_profiles() {
        let p = table_profile_1();
        let q = p
            .with_preference(Agent::woman(0), Preference::new(&[1, 2, 0]).unwrap())
            .unwrap();
        assert_ne!(profile_digest(&p), profile_digest(&q));
        assert_eq!(profile_digest(&p), profile_digest(&p.clone()));
    }

    proptest! {
        #[test]
        fn both_da_outcomes_are_stable(seed in any::<u64>(), n in 3usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_profile(&mut rng, n);
            let set = enumerate_stable(&p).unwrap();
            prop_assert!(set.contains(&deferred_acceptance(&p, Side::Men)));
            prop_assert!(set.contains(&deferred_acceptance(&p, Side::Women)));
        }
    }
}
