//! Fixtures shared by unit tests.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::model::Profile;
use crate::trees::Tree;

pub(crate) fn names(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

/// All permutations of `0..k` in lexicographic order.
pub(crate) fn all_permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for x in 0..used.len() {
            if !used[x] {
                used[x] = true;
                cur.push(x);
                rec(cur, used, out);
                cur.pop();
                used[x] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

/// Every labelled tree on `k` nodes, via Prüfer sequences.
pub(crate) fn all_labeled_trees(k: usize) -> Vec<Tree> {
    if k == 2 {
        return vec![Tree::path(names("x", 2)).unwrap()];
    }
    let mut out = Vec::new();
    let total = k.pow((k - 2) as u32);
    for code in 0..total {
        let mut seq = Vec::with_capacity(k - 2);
        let mut c = code;
        for _ in 0..k - 2 {
            seq.push(c % k);
            c /= k;
        }
        let mut degree = vec![1usize; k];
        for &s in &seq {
            degree[s] += 1;
        }
        let mut edges = Vec::new();
        for &s in &seq {
            let leaf = (0..k).find(|&v| degree[v] == 1).unwrap();
            edges.push((leaf, s));
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..k).filter(|&v| degree[v] == 1).collect();
        edges.push((rest[0], rest[1]));
        out.push(Tree::new(names("x", k), &edges).unwrap());
    }
    out
}

/// Uniformly random strict preferences on both sides.
pub(crate) fn random_profile(rng: &mut ChaCha8Rng, n: usize) -> Profile {
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
