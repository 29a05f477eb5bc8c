//! DiscourseRank over the marginal tree distribution, root-score reranking,
//! maximum spanning arborescence extraction and tree statistics.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numkit::{solve, Mat};
use crate::structattn::Marginals;

/// Parent assignment per sentence 1..=n; parent 0 is the virtual root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscourseTree {
    pub parents: Vec<usize>,
}

impl DiscourseTree {
    pub fn n(&self) -> usize {
        self.parents.len()
    }

    /// Max edge-count distance from the virtual root to any node.
    pub fn height(&self) -> usize {
        let n = self.n();
        let mut best = 0;
        for start in 1..=n {
            let mut depth = 0;
            let mut node = start;
            while node != 0 {
                node = self.parents[node - 1];
                depth += 1;
                assert!(depth <= n, "parent links must reach the root");
            }
            best = best.max(depth);
        }
        best
    }
}

/// Stationary importance scores; sums to 1.
pub type RankVector = Vec<f64>;

/// Column-stochastic matrix over root + sentences: column 0 sends the root's
/// mass uniformly to the sentences, the other columns are the marginals.
pub fn build_stochastic(a: &Marginals) -> Mat {
    let n = a.nrows() - 1;
    let mut out = a.clone();
    for i in 1..=n {
        out[[i, 0]] = 1.0 / n as f64;
    }
    out[[0, 0]] = 0.0;
    out
}

/// Closed-form DiscourseRank: r = (1-λ)(I - λÂ)^{-1} v with v uniform.
pub fn discourse_rank(a_hat: &Mat, lambda: f64) -> Result<RankVector> {
    assert!((0.0..1.0).contains(&lambda));
    let m = a_hat.nrows();
    let v = vec![1.0 / m as f64; m];
    let mut system = Mat::eye(m);
    system.scaled_add(-lambda, a_hat);
    let x = solve(&system, &v)?;
    Ok(x.into_iter().map(|r| r * (1.0 - lambda)).collect())
}

/// Fixed-point iteration r <- λ Â r + (1-λ) v; the oracle for the closed form.
pub fn discourse_rank_iterative(a_hat: &Mat, lambda: f64, steps: usize) -> RankVector {
    let m = a_hat.nrows();
    let v = 1.0 / m as f64;
    let mut r = vec![v; m];
    for _ in 0..steps {
        let mut next = vec![(1.0 - lambda) * v; m];
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += a_hat[[i, j]] * r[j];
            }
            next[i] += lambda * acc;
        }
        r = next;
    }
    r
}

/// Reweights the root attachment row by the sentence ranks, then rescales so
/// the total root mass is preserved. The argmax is unaffected by the
/// rescaling constant.
pub fn rerank_root(a: &Marginals, ranks: &RankVector) -> Result<Vec<f64>> {
    let n = a.nrows() - 1;
    assert_eq!(ranks.len(), n + 1);
    let original_mass: f64 = (1..=n).map(|j| a[[0, j]]).sum();
    let weighted: Vec<f64> = (1..=n).map(|j| a[[0, j]] * ranks[j]).collect();
    let weighted_mass: f64 = weighted.iter().sum();
    if weighted_mass <= 0.0 {
        return Err(CoreError::AllZeroRootMass);
    }
    let scale = original_mass / weighted_mass;
    Ok(weighted.into_iter().map(|w| w * scale).collect())
}

/// Edge weighting used when extracting the maximum arborescence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeWeighting {
    /// Maximize the product of marginals (sum of logs).
    #[default]
    LogProduct,
    /// Maximize the raw sum of marginals (ablation option).
    RawSum,
}

fn edge_weights(a: &Marginals, weighting: TreeWeighting) -> Mat {
    match weighting {
        TreeWeighting::LogProduct => a.mapv(|v| v.max(1e-300).ln()),
        TreeWeighting::RawSum => a.clone(),
    }
}

#[derive(Clone, Copy)]
struct Edge {
    from: usize,
    to: usize,
    weight: f64,
    /// (parent, child) in the original graph
    orig: (usize, usize),
}

/// Chu–Liu–Edmonds by recursive cycle contraction. `num_nodes` includes the
/// root at index 0; returns the chosen original edges.
fn cle(num_nodes: usize, edges: Vec<Edge>) -> Vec<(usize, usize)> {
    // best incoming edge per non-root node
    let mut best: Vec<Option<Edge>> = vec![None; num_nodes];
    for e in &edges {
        if e.to == 0 || e.from == e.to {
            continue;
        }
        match &best[e.to] {
            Some(b) if b.weight >= e.weight => {}
            _ => best[e.to] = Some(*e),
        }
    }
    for (v, b) in best.iter().enumerate().skip(1) {
        assert!(b.is_some(), "node {v} has no incoming edge");
    }

    // cycle detection over the selected parents
    let mut cycle: Option<Vec<usize>> = None;
    let mut state = vec![0u8; num_nodes]; // 0 unvisited, 1 on path, 2 done
    state[0] = 2;
    for start in 1..num_nodes {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = best[v].unwrap().from;
        }
        if state[v] == 1 {
            let pos = path.iter().position(|&p| p == v).unwrap();
            cycle = Some(path[pos..].to_vec());
        }
        for p in path {
            state[p] = 2;
        }
        if cycle.is_some() {
            break;
        }
    }

    let cycle = match cycle {
        None => return (1..num_nodes).map(|v| best[v].unwrap().orig).collect(),
        Some(c) => c,
    };

    let in_cycle = {
        let mut mask = vec![false; num_nodes];
        for &v in &cycle {
            mask[v] = true;
        }
        mask
    };
    let cycle_weight: f64 = cycle.iter().map(|&v| best[v].unwrap().weight).sum();

    // renumber: non-cycle nodes keep relative order, contracted node is last
    let mut remap = vec![usize::MAX; num_nodes];
    let mut next = 0;
    for v in 0..num_nodes {
        if !in_cycle[v] {
            remap[v] = next;
            next += 1;
        }
    }
    let contracted = next;
    let new_num = next + 1;

    let mut new_edges: Vec<Edge> = Vec::new();
    // remember which original edge realizes each contracted candidate so the
    // cycle can be broken at the right node afterwards
    let mut entering: Vec<Edge> = Vec::new();
    for e in &edges {
        if e.to == 0 || e.from == e.to {
            continue;
        }
        match (in_cycle[e.from], in_cycle[e.to]) {
            (false, false) => new_edges.push(Edge {
                from: remap[e.from],
                to: remap[e.to],
                ..*e
            }),
            (true, false) => new_edges.push(Edge {
                from: contracted,
                to: remap[e.to],
                ..*e
            }),
            (false, true) => {
                let adjusted = e.weight - best[e.to].unwrap().weight + cycle_weight;
                let idx = entering.len();
                entering.push(*e);
                new_edges.push(Edge {
                    from: remap[e.from],
                    to: contracted,
                    weight: adjusted,
                    // stash the entering-edge index in orig so it survives
                    // the recursion
                    orig: (usize::MAX, idx),
                });
            }
            (true, true) => {}
        }
    }

    let chosen = cle(new_num, new_edges);
    let mut result = Vec::new();
    let mut break_at = None;
    for (p, c) in chosen {
        if p == usize::MAX {
            let e = entering[c];
            break_at = Some(e.to);
            result.push(e.orig);
        } else {
            result.push((p, c));
        }
    }
    let break_at = break_at.expect("the contracted node must receive an edge");
    for &v in &cycle {
        if v != break_at {
            result.push(best[v].unwrap().orig);
        }
    }
    result
}

/// Maximum-weight arborescence rooted at node 0 over the marginal matrix.
pub fn extract_tree(a: &Marginals, weighting: TreeWeighting) -> DiscourseTree {
    let n = a.nrows() - 1;
    let w = edge_weights(a, weighting);
    let mut edges = Vec::new();
    for j in 1..=n {
        for i in 0..=n {
            if i != j {
                edges.push(Edge {
                    from: i,
                    to: j,
                    weight: w[[i, j]],
                    orig: (i, j),
                });
            }
        }
    }
    let chosen = cle(n + 1, edges);
    let mut parents = vec![0usize; n];
    for (p, c) in chosen {
        parents[c - 1] = p;
    }
    DiscourseTree { parents }
}

/// Brute-force best arborescence; enumeration oracle for small n.
pub fn best_arborescence_bruteforce(a: &Marginals, weighting: TreeWeighting) -> (DiscourseTree, f64) {
    let n = a.nrows() - 1;
    assert!(n <= crate::structattn::MAX_ENUM);
    let w = edge_weights(a, weighting);
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut parents = vec![0usize; n];
    loop {
        if crate::structattn::is_arborescence(&parents) {
            let weight: f64 = parents
                .iter()
                .enumerate()
                .map(|(c0, &p)| w[[p, c0 + 1]])
                .sum();
            if best.as_ref().is_none_or(|(_, bw)| weight > *bw) {
                best = Some((parents.clone(), weight));
            }
        }
        let mut pos = 0;
        loop {
            if pos == n {
                let (p, wt) = best.unwrap();
                return (DiscourseTree { parents: p }, wt);
            }
            parents[pos] += 1;
            if parents[pos] == pos + 1 {
                parents[pos] += 1;
            }
            if parents[pos] <= n {
                break;
            }
            parents[pos] = 0;
            pos += 1;
        }
    }
}

pub fn tree_weight(tree: &DiscourseTree, a: &Marginals, weighting: TreeWeighting) -> f64 {
    let w = edge_weights(a, weighting);
    tree.parents
        .iter()
        .enumerate()
        .map(|(c0, &p)| w[[p, c0 + 1]])
        .sum()
}

/// True iff no two edges cross when nodes sit in document order with the
/// virtual root at position 0. Root edges participate in the check.
pub fn is_projective(tree: &DiscourseTree) -> bool {
    let edges: Vec<(usize, usize)> = tree
        .parents
        .iter()
        .enumerate()
        .map(|(c0, &p)| (p.min(c0 + 1), p.max(c0 + 1)))
        .collect();
    for (k, &(a1, a2)) in edges.iter().enumerate() {
        for &(b1, b2) in &edges[k + 1..] {
            // cross iff exactly one endpoint lies strictly inside the other span
            let b1_inside = a1 < b1 && b1 < a2;
            let b2_inside = a1 < b2 && b2 < a2;
            let touches = b1 == a1 || b1 == a2 || b2 == a1 || b2 == a2;
            if !touches && b1_inside != b2_inside {
                return false;
            }
        }
    }
    true
}

/// Corpus-level tree statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub projective_fraction: f64,
    pub mean_height: f64,
}

pub fn tree_stats(trees: &[DiscourseTree]) -> TreeStats {
    assert!(!trees.is_empty());
    let projective = trees.iter().filter(|t| is_projective(t)).count();
    let total_height: usize = trees.iter().map(DiscourseTree::height).sum();
    TreeStats {
        projective_fraction: projective as f64 / trees.len() as f64,
        mean_height: total_height as f64 / trees.len() as f64,
    }
}
