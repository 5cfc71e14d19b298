//! Trees over one side of the market and single-peakedness with respect to them.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{Preference, Side, MAX_MARKET};
use crate::par;

/// An undirected tree on nodes `0..k` with display labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tree {
    labels: Vec<String>,
    adjacency: Vec<Vec<usize>>,
    neighbor_mask: Vec<u32>,
    distance: Vec<Vec<u8>>,
}

impl Tree {
    /// Builds a tree, rejecting cycles, disconnected graphs and malformed edges.
    pub fn new(labels: Vec<String>, edges: &[(usize, usize)]) -> Result<Tree> {
        let k = labels.len();
        if k == 0 || k > 2 * MAX_MARKET {
            return Err(Error::InvalidTree(format!("tree with {k} nodes unsupported")));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidTree(format!("node {l} listed twice")));
            }
        }
        let mut adjacency = vec![Vec::new(); k];
        for &(a, b) in edges {
            if a >= k || b >= k {
                return Err(Error::InvalidTree(format!("edge ({a},{b}) out of range")));
            }
            if a == b {
                return Err(Error::InvalidTree(format!("not a tree: self-loop at {}", labels[a])));
            }
            if adjacency[a].contains(&b) {
                return Err(Error::InvalidTree(format!(
                    "not a tree: edge {}-{} listed twice",
                    labels[a], labels[b]
                )));
            }
            if let Some(path) = forest_path(&adjacency, b, a) {
                let mut names: Vec<&str> = path.iter().map(|&x| labels[x].as_str()).collect();
                names.push(labels[b].as_str());
                return Err(Error::InvalidTree(format!("not a tree: cycle {}", names.join("–"))));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let distance: Vec<Vec<u8>> = (0..k).map(|s| bfs_distances(&adjacency, s)).collect();
        if let Some(unreached) = distance[0].iter().position(|&d| d == u8::MAX) {
            return Err(Error::InvalidTree(format!(
                "not a tree: disconnected ({} unreachable from {})",
                labels[unreached], labels[0]
            )));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        let neighbor_mask = adjacency
            .iter()
            .map(|adj| adj.iter().fold(0u32, |m, &x| m | (1 << x)))
            .collect();
        Ok(Tree {
            labels,
            adjacency,
            neighbor_mask,
            distance,
        })
    }

    /// Builds a tree from labelled nodes and `a-b` style edges.
    pub fn from_labeled(nodes: Vec<String>, edges: &[(String, String)]) -> Result<Tree> {
        let index = |l: &str| {
            nodes
                .iter()
                .position(|x| x == l)
                .ok_or_else(|| Error::UnknownNode(l.to_string()))
        };
        let edges = edges
            .iter()
            .map(|(a, b)| Ok((index(a)?, index(b)?)))
            .collect::<Result<Vec<_>>>()?;
        Tree::new(nodes, &edges)
    }

    /// Tree over the agents of `side`: node `i` is agent `i` of that side.
    pub fn over_side(side: Side, n: usize, edges: &[(usize, usize)]) -> Result<Tree> {
        Tree::new(side.labels(n), edges)
    }

    /// Path `0 - 1 - ... - (k-1)`.
    pub fn path(labels: Vec<String>) -> Result<Tree> {
        let edges: Vec<_> = (1..labels.len()).map(|i| (i - 1, i)).collect();
        Tree::new(labels, &edges)
    }

    /// Star with the given center and every other node a leaf.
    pub fn star(labels: Vec<String>, center: usize) -> Result<Tree> {
        let edges: Vec<_> = (0..labels.len())
            .filter(|&i| i != center)
            .map(|i| (center, i))
            .collect();
        Tree::new(labels, &edges)
    }

    /// Path `0 - ... - (k-2)` with node `k-1` attached to node `k-3`.
    ///
    /// On five nodes this is the fork x1-x2-x3 with leaves x4, x5 at x3.
    pub fn fork(labels: Vec<String>) -> Result<Tree> {
        let k = labels.len();
        if k < 4 {
            return Err(Error::InvalidTree("fork needs at least 4 nodes".into()));
        }
        let mut edges: Vec<_> = (1..k - 1).map(|i| (i - 1, i)).collect();
        edges.push((k - 3, k - 1));
        Tree::new(labels, &edges)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, x: usize) -> &str {
        &self.labels[x]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn neighbors(&self, x: usize) -> &[usize] {
        &self.adjacency[x]
    }

    pub fn degree(&self, x: usize) -> usize {
        self.adjacency[x].len()
    }

    pub fn distance(&self, x: usize, y: usize) -> usize {
        self.distance[x][y] as usize
    }

    /// Edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.len().saturating_sub(1));
        for (a, adj) in self.adjacency.iter().enumerate() {
            out.extend(adj.iter().filter(|&&b| a < b).map(|&b| (a, b)));
        }
        out
    }

    /// Whether `y` lies on the path between `x` and `z` (endpoints included).
    #[inline]
    pub fn on_path(&self, x: usize, y: usize, z: usize) -> bool {
        self.distance(x, y) + self.distance(y, z) == self.distance(x, z)
    }

    /// The unique simple path from `x` to `y`, both inclusive.
    pub fn path_between(&self, x: usize, y: usize) -> Result<Vec<usize>> {
        for v in [x, y] {
            if v >= self.len() {
                return Err(Error::UnknownNode(format!("#{v}")));
            }
        }
        let mut path = vec![x];
        let mut cur = x;
        while cur != y {
            cur = *self.adjacency[cur]
                .iter()
                .find(|&&nb| self.distance(nb, y) + 1 == self.distance(cur, y))
                .expect("tree distances are consistent");
            path.push(cur);
        }
        Ok(path)
    }

    /// Same tree, relabelled.
    pub fn relabeled(&self, labels: Vec<String>) -> Result<Tree> {
        if labels.len() != self.len() {
            return Err(Error::InvalidTree("relabel size mismatch".into()));
        }
        Tree::new(labels, &self.edges())
    }

    pub(crate) fn neighbor_mask(&self, x: usize) -> u32 {
        self.neighbor_mask[x]
    }
}

fn bfs_distances(adjacency: &[Vec<usize>], source: usize) -> Vec<u8> {
    let mut dist = vec![u8::MAX; adjacency.len()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        for &nb in &adjacency[v] {
            if dist[nb] == u8::MAX {
                dist[nb] = dist[v] + 1;
                queue.push_back(nb);
            }
        }
    }
    dist
}

/// Path from `from` to `to` in a partial forest, if they are connected.
fn forest_path(adjacency: &[Vec<usize>], from: usize, to: usize) -> Option<Vec<usize>> {
    let mut parent = vec![usize::MAX; adjacency.len()];
    parent[from] = from;
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        if v == to {
            let mut path = vec![to];
            let mut cur = to;
            while cur != from {
                cur = parent[cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        for &nb in &adjacency[v] {
            if parent[nb] == usize::MAX {
                parent[nb] = v;
                queue.push_back(nb);
            }
        }
    }
    None
}

/// Whether `pref` is single-peaked on `tree`: every node on the path from the
/// peak to `y` is weakly preferred to `y`.
pub fn is_single_peaked(pref: &Preference, tree: &Tree) -> Result<bool> {
    if pref.len() != tree.len() {
        return Err(Error::Precondition(format!(
            "preference ranks {} nodes but tree has {}",
            pref.len(),
            tree.len()
        )));
    }
    let peak = pref.top();
    let k = tree.len();
    for y in 0..k {
        for x in 0..k {
            if tree.on_path(peak, x, y) && pref.rank_of(x) > pref.rank_of(y) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// All preferences single-peaked on `tree`, in lexicographic order.
///
/// A ranking is single-peaked exactly when each of its prefixes induces a
/// connected subtree, so rankings are grown outward from every peak, only
/// ever appending a node adjacent to what is already ranked.
pub fn enumerate_maximal_single_peaked(tree: &Tree) -> Vec<Preference> {
    let k = tree.len();
    par::flat_map(k, |peak| {
        let mut out = Vec::new();
        let mut ranking = Vec::with_capacity(k);
        ranking.push(peak);
        grow(tree, &mut ranking, 1 << peak, tree.neighbor_mask(peak), &mut |r| {
            out.push(Preference::new(r).expect("frontier expansion yields permutations"));
        });
        out
    })
}

/// `|S(T)|` without materializing the preferences.
pub fn count_maximal_single_peaked(tree: &Tree) -> u64 {
    let k = tree.len();
    par::map(k, |peak| {
        let mut count = 0u64;
        let mut ranking = Vec::with_capacity(k);
        ranking.push(peak);
        grow(tree, &mut ranking, 1 << peak, tree.neighbor_mask(peak), &mut |_| {
            count += 1
        });
        count
    })
    .into_iter()
    .sum()
}

fn grow(tree: &Tree, ranking: &mut Vec<usize>, chosen: u32, frontier: u32, emit: &mut dyn FnMut(&[usize])) {
    if ranking.len() == tree.len() {
        emit(ranking);
        return;
    }
    let mut rest = frontier;
    while rest != 0 {
        let next = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        let chosen2 = chosen | (1 << next);
        let frontier2 = (frontier | tree.neighbor_mask(next)) & !chosen2;
        ranking.push(next);
        grow(tree, ranking, chosen2, frontier2, emit);
        ranking.pop();
    }
}

/// The three shapes a five-node tree can take.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    /// Degrees {1,1,2,2,2}.
    Path,
    /// x1-x2-x3 with two leaves x4, x5 at x3. Degrees {1,1,1,2,3}.
    Fork,
    /// Center x1 with leaves x2..x5. Degrees {1,1,1,1,4}.
    Star,
}

impl std::fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ShapeKind::Path => "path",
            ShapeKind::Fork => "fork",
            ShapeKind::Star => "star",
        })
    }
}

/// A five-node subtree with its nodes assigned to positions x1..x5.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeShape {
    pub kind: ShapeKind,
    /// `positions[i]` is the tree node playing x_{i+1}.
    pub positions: [usize; 5],
}

/// Connected five-node subtrees of `tree`, classified by shape.
///
/// By default one representative per shape is returned (in order of first
/// appearance when scanning node subsets lexicographically); `exhaustive`
/// lists every connected five-node subtree.
pub fn classify_5node_subtrees(tree: &Tree, exhaustive: bool) -> Result<Vec<TreeShape>> {
    let k = tree.len();
    if k < 5 {
        return Err(Error::Precondition("theorem requires n >= 5".into()));
    }
    let mut out: Vec<TreeShape> = Vec::new();
    let mut combo = [0usize, 1, 2, 3, 4];
    loop {
        if let Some(shape) = classify_subset(tree, &combo) {
            if exhaustive || !out.iter().any(|s| s.kind == shape.kind) {
                out.push(shape);
            }
        }
        // next 5-combination of 0..k in lexicographic order
        let mut i = 5;
        while i > 0 && combo[i - 1] == k - 5 + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        combo[i - 1] += 1;
        for j in i..5 {
            combo[j] = combo[j - 1] + 1;
        }
    }
    Ok(out)
}

fn classify_subset(tree: &Tree, nodes: &[usize; 5]) -> Option<TreeShape> {
    let mask: u32 = nodes.iter().fold(0, |m, &x| m | (1 << x));
    let degree = |x: usize| (tree.neighbor_mask(x) & mask).count_ones() as usize;
    let inner = |x: usize| {
        nodes
            .iter()
            .copied()
            .filter(move |&y| tree.neighbor_mask(x) & (1 << y) != 0)
    };
    let edges: usize = nodes.iter().map(|&x| degree(x)).sum::<usize>() / 2;
    // a 5-node forest with 4 edges is connected
    if edges != 4 {
        return None;
    }
    let max_degree = nodes.iter().map(|&x| degree(x)).max().unwrap_or(0);
    match max_degree {
        2 => {
            let start = *nodes.iter().find(|&&x| degree(x) == 1)?;
            let mut positions = [start; 5];
            let mut prev = usize::MAX;
            for i in 1..5 {
                let cur = positions[i - 1];
                let next = inner(cur).find(|&y| y != prev)?;
                prev = cur;
                positions[i] = next;
            }
            Some(TreeShape {
                kind: ShapeKind::Path,
                positions,
            })
        }
        3 => {
            let hub = *nodes.iter().find(|&&x| degree(x) == 3)?;
            let middle = inner(hub).find(|&y| degree(y) == 2)?;
            let tail = inner(middle).find(|&y| y != hub)?;
            let mut leaves = inner(hub).filter(|&y| y != middle);
            let x4 = leaves.next()?;
            let x5 = leaves.next()?;
            Some(TreeShape {
                kind: ShapeKind::Fork,
                positions: [tail, middle, hub, x4, x5],
            })
        }
        4 => {
            let center = *nodes.iter().find(|&&x| degree(x) == 4)?;
            let mut positions = [center; 5];
            for (slot, leaf) in inner(center).enumerate() {
                positions[slot + 1] = leaf;
            }
            Some(TreeShape {
                kind: ShapeKind::Star,
                positions,
            })
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{all_labeled_trees, all_permutations, names};
    use proptest::prelude::*;

    fn pref(r: &[usize]) -> Preference {
        Preference::new(r).unwrap()
    }

    /// Star of the second worked example: x2 at the center, leaves x1, x3, x4.
    fn example_star() -> Tree {
        Tree::star(names("x", 4), 1).unwrap()
    }

    /// Classical single-peakedness against the order 0 < 1 < ... < k-1,
    /// written directly from the inequality form.
    fn classically_single_peaked(p: &Preference) -> bool {
        let peak = p.top();
        let k = p.len();
        for x in 0..k {
            for y in 0..k {
                let right = peak <= x && x < y;
                let left = y < x && x <= peak;
                if (right || left) && !p.ranks_above(x, y) {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn path_between_examples() {
        let t = Tree::path(names("w", 3)).unwrap();
        assert_eq!(t.path_between(0, 2).unwrap(), vec![0, 1, 2]);
        assert_eq!(t.path_between(1, 1).unwrap(), vec![1]);
        let s = example_star();
        assert_eq!(s.path_between(2, 3).unwrap(), vec![2, 1, 3]);
        assert!(t.path_between(0, 7).is_err());
    }

    #[test]
    fn rejects_non_trees() {
        let err = Tree::from_labeled(
            names("w", 3),
            &[
                ("w1".into(), "w2".into()),
                ("w2".into(), "w3".into()),
                ("w3".into(), "w1".into()),
            ],
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "not a tree: cycle w1–w2–w3–w1");
        let err = Tree::new(names("w", 4), &[(0, 1), (2, 3)]).unwrap_err();
        assert!(err.to_string().contains("disconnected"), "{err}");
        assert!(Tree::new(names("w", 3), &[(0, 0), (1, 2)]).is_err());
    }

    #[test]
    fn single_peaked_examples() {
        let t = Tree::path(names("w", 3)).unwrap();
        assert!(is_single_peaked(&pref(&[1, 0, 2]), &t).unwrap());
        assert!(!is_single_peaked(&pref(&[0, 2, 1]), &t).unwrap());
        assert!(is_single_peaked(&pref(&[0, 1, 3, 2]), &example_star()).unwrap());
        assert!(is_single_peaked(&pref(&[0, 1, 2]), &Tree::path(names("w", 4)).unwrap()).is_err());
    }

    #[test]
    fn enumeration_small_cases() {
        let t = Tree::path(names("w", 3)).unwrap();
        let s = enumerate_maximal_single_peaked(&t);
        // frozen from the brute-force filter of all six permutations
        let filtered: Vec<Preference> = all_permutations(3)
            .into_iter()
            .map(|r| pref(&r))
            .filter(|p| is_single_peaked(p, &t).unwrap())
            .collect();
        assert_eq!(s, filtered);
        assert_eq!(
            s,
            vec![pref(&[0, 1, 2]), pref(&[1, 0, 2]), pref(&[1, 2, 0]), pref(&[2, 1, 0])]
        );
        assert_eq!(
            enumerate_maximal_single_peaked(&Tree::path(names("x", 4)).unwrap()).len(),
            8
        );
        let star = enumerate_maximal_single_peaked(&example_star());
        assert_eq!(star.len(), 12);
        assert!(star.iter().all(|p| p.rank_of(1) <= 1));
    }

    #[test]
    fn frontier_expansion_matches_brute_force_on_all_small_trees() {
        for k in 3..=6 {
            let perms = all_permutations(k);
            for t in all_labeled_trees(k) {
                let brute: Vec<Preference> = perms
                    .iter()
                    .map(|r| pref(r))
                    .filter(|p| is_single_peaked(p, &t).unwrap())
                    .collect();
                let fast = enumerate_maximal_single_peaked(&t);
                assert_eq!(fast, brute);
                assert_eq!(count_maximal_single_peaked(&t), brute.len() as u64);
            }
        }
    }

    #[test]
    fn cardinality_of_paths_and_stars() {
        for k in 3..=8 {
            let t = Tree::path(names("x", k)).unwrap();
            assert_eq!(count_maximal_single_peaked(&t), 1 << (k - 1));
        }
        for k in 3..=6 {
            let t = Tree::star(names("x", k), 0).unwrap();
            let f: u64 = (1..k as u64).product();
            assert_eq!(count_maximal_single_peaked(&t), 2 * f);
        }
    }

    #[test]
    fn linear_tree_agrees_with_classical_definition() {
        for k in 3..=7 {
            let t = Tree::path(names("x", k)).unwrap();
            for r in all_permutations(k) {
                let p = pref(&r);
                assert_eq!(
                    is_single_peaked(&p, &t).unwrap(),
                    classically_single_peaked(&p),
                    "{r:?}"
                );
            }
        }
    }

    #[test]
    fn middle_node_is_never_worst() {
        for k in 3..=5 {
            for t in all_labeled_trees(k) {
                for p in enumerate_maximal_single_peaked(&t) {
                    for x in 0..k {
                        for z in 0..k {
                            for y in 0..k {
                                if x != y && y != z && x != z && t.on_path(x, y, z) {
                                    assert!(!(p.ranks_above(x, y) && p.ranks_above(z, y)));
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn five_node_shapes() {
        let path = Tree::path(names("x", 5)).unwrap();
        let shapes = classify_5node_subtrees(&path, false).unwrap();
        assert_eq!(
            shapes,
            vec![TreeShape {
                kind: ShapeKind::Path,
                positions: [0, 1, 2, 3, 4]
            }]
        );

        let star = Tree::star(names("x", 5), 0).unwrap();
        let shapes = classify_5node_subtrees(&star, false).unwrap();
        assert_eq!(
            shapes,
            vec![TreeShape {
                kind: ShapeKind::Star,
                positions: [0, 1, 2, 3, 4]
            }]
        );

        let fork = Tree::fork(names("x", 5)).unwrap();
        let shapes = classify_5node_subtrees(&fork, false).unwrap();
        assert_eq!(
            shapes,
            vec![TreeShape {
                kind: ShapeKind::Fork,
                positions: [0, 1, 2, 3, 4]
            }]
        );

        let long = Tree::path(names("x", 6)).unwrap();
        let all = classify_5node_subtrees(&long, true).unwrap();
        assert_eq!(all.len(), 2);
        assert!(all.iter().all(|s| s.kind == ShapeKind::Path));

        assert!(classify_5node_subtrees(&Tree::path(names("x", 4)).unwrap(), false).is_err());
    }

    #[test]
    fn every_five_node_tree_has_exactly_one_shape() {
        for t in all_labeled_trees(5) {
            let shapes = classify_5node_subtrees(&t, true).unwrap();
            assert_eq!(shapes.len(), 1);
            let s = &shapes[0];
            let mut p = s.positions;
            p.sort_unstable();
            assert_eq!(p, [0, 1, 2, 3, 4]);
            let adj = |a: usize, b: usize| t.neighbors(s.positions[a]).contains(&s.positions[b]);
            match s.kind {
                ShapeKind::Path => assert!(adj(0, 1) && adj(1, 2) && adj(2, 3) && adj(3, 4)),
                ShapeKind::Fork => assert!(adj(0, 1) && adj(1, 2) && adj(2, 3) && adj(2, 4)),
                ShapeKind::Star => assert!((1..5).all(|i| adj(0, i))),
            }
        }
    }

    proptest! {
        #[test]
        fn enumeration_is_duplicate_free(code in proptest::collection::vec(0usize..7, 5)) {
            // random labelled tree on 7 nodes from a Prüfer code
            let k = 7;
            let mut degree = vec![1usize; k];
            for &s in &code { degree[s] += 1; }
            let mut edges = Vec::new();
            for &s in &code {
                let leaf = (0..k).find(|&v| degree[v] == 1).unwrap();
                edges.push((leaf, s));
                degree[leaf] -= 1;
                degree[s] -= 1;
            }
            let rest: Vec<usize> = (0..k).filter(|&v| degree[v] == 1).collect();
            edges.push((rest[0], rest[1]));
            let t = Tree::new(names("x", k), &edges).unwrap();
            let all = enumerate_maximal_single_peaked(&t);
            let mut sorted = all.clone();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), all.len());
            prop_assert!(all.windows(2).all(|w| w[0] < w[1]));
            for p in &all {
                prop_assert!(is_single_peaked(p, &t).unwrap());
            }
        }
    }
}
