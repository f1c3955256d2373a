//! Chu-Liu-Edmonds maximum spanning arborescence decoding.
//!
//! Works on the log-potential scores of the candidate arcs. Cycles are
//! contracted recursively onto their first vertex; scores of edges into and
//! out of a contraction keep track of which original edge they stand for, so
//! the final expansion recovers a spanning arborescence over the words.

use super::{ArcMatrix, DependencyTree, RootMode};
use std::collections::HashMap;

/// Effectively minus infinity, kept finite so contracted-cycle arithmetic
/// never produces NaN.
const FORBIDDEN: f64 = -1e30;

/// Decode the arborescence maximizing the total arc score. Under
/// [`RootMode::SingleRoot`], when the unconstrained optimum attaches several
/// words to the root, each candidate root attachment is tried in turn and the
/// best-scoring constrained tree wins.
pub fn cle_decode(scores: &ArcMatrix, mode: RootMode) -> DependencyTree {
    let n = scores.n();
    let square = to_square(scores);
    let heads = decode_square(&square, n);

    if mode == RootMode::SingleRoot && heads.iter().filter(|&&h| h == 0).count() > 1 {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for root_child in 1..=n {
            let mut forced = square.clone();
            for m in 1..=n {
                if m != root_child {
                    forced[m] = FORBIDDEN; // row 0
                }
            }
            let candidate = decode_square(&forced, n);
            let score = tree_score(scores, &candidate);
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, candidate));
            }
        }
        return DependencyTree::new_unchecked(best.expect("n >= 1").1);
    }
    DependencyTree::new_unchecked(heads)
}

/// Total score of a head array under an arc score matrix.
pub fn tree_score(scores: &ArcMatrix, heads: &[usize]) -> f64 {
    heads
        .iter()
        .enumerate()
        .map(|(i, &h)| scores.get(h, i + 1))
        .sum()
}

/// Dense (n+1) x (n+1) score matrix indexed (head, modifier); the root column
/// and the diagonal are forbidden.
fn to_square(scores: &ArcMatrix) -> Vec<f64> {
    let n = scores.n();
    let dim = n + 1;
    let mut square = vec![FORBIDDEN; dim * dim];
    for h in 0..=n {
        for m in 1..=n {
            if h != m {
                square[h * dim + m] = scores.get(h, m);
            }
        }
    }
    square
}

fn decode_square(square: &[f64], n: usize) -> Vec<usize> {
    let dim = n + 1;
    let mut active = vec![true; dim];
    let parents = chu_liu_edmonds(square.to_vec(), dim, &mut active);
    (1..=n).map(|m| parents[m].expect("non-root vertex has a parent")).collect()
}

fn chu_liu_edmonds(mut scores: Vec<f64>, dim: usize, active: &mut [bool]) -> Vec<Option<usize>> {
    let max_parents = find_max_parents(&scores, dim, active);

    let Some(cycle) = find_cycle(&max_parents) else {
        return max_parents;
    };

    let (incoming, outgoing) = contract_cycle(&mut scores, dim, &max_parents, active, &cycle);
    let contracted = chu_liu_edmonds(scores, dim, active);
    expand_cycle(max_parents, contracted, cycle, incoming, outgoing)
}

fn find_max_parents(scores: &[f64], dim: usize, active: &[bool]) -> Vec<Option<usize>> {
    let mut parents = vec![None; dim];
    for child in 1..dim {
        if !active[child] {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for parent in 0..dim {
            if parent == child || !active[parent] {
                continue;
            }
            let s = scores[parent * dim + child];
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((parent, s));
            }
        }
        parents[child] = best.map(|(p, _)| p);
    }
    parents
}

fn find_cycle(parents: &[Option<usize>]) -> Option<Vec<usize>> {
    let len = parents.len();
    // 0 = unvisited, 1 = on current path, 2 = done
    let mut state = vec![0u8; len];
    for start in 0..len {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        loop {
            if state[v] == 1 {
                let pos = path.iter().position(|&p| p == v).expect("v is on the path");
                return Some(path[pos..].to_vec());
            }
            if state[v] == 2 {
                break;
            }
            state[v] = 1;
            path.push(v);
            match parents[v] {
                Some(p) => v = p,
                None => break,
            }
        }
        for &p in &path {
            state[p] = 2;
        }
    }
    None
}

type EdgeReplacements = (HashMap<(usize, usize), usize>, HashMap<(usize, usize), usize>);

fn contract_cycle(
    scores: &mut [f64],
    dim: usize,
    max_parents: &[Option<usize>],
    active: &mut [bool],
    cycle: &[usize],
) -> EdgeReplacements {
    let rep = cycle[0];
    let cycle_sum: f64 = cycle
        .iter()
        .map(|&v| {
            let p = max_parents[v].expect("cycle vertices have parents");
            scores[p * dim + v]
        })
        .sum();

    for &v in &cycle[1..] {
        active[v] = false;
    }

    let mut incoming = HashMap::new();
    let mut outgoing = HashMap::new();
    for vertex in 0..dim {
        if !active[vertex] || cycle.contains(&vertex) {
            continue;
        }
        let mut best_in = f64::NEG_INFINITY;
        let mut best_in_vertex = rep;
        let mut best_out = f64::NEG_INFINITY;
        let mut best_out_vertex = rep;
        for &cv in cycle {
            let out_score = scores[cv * dim + vertex];
            if out_score > best_out {
                best_out = out_score;
                best_out_vertex = cv;
            }
            let cv_parent = max_parents[cv].expect("cycle vertex has a parent");
            let broken = scores[cv_parent * dim + cv];
            let in_score = cycle_sum + scores[vertex * dim + cv] - broken;
            if in_score > best_in {
                best_in = in_score;
                best_in_vertex = cv;
            }
        }
        scores[vertex * dim + rep] = best_in;
        scores[rep * dim + vertex] = best_out;
        incoming.insert((vertex, rep), best_in_vertex);
        outgoing.insert((rep, vertex), best_out_vertex);
    }
    (incoming, outgoing)
}

fn expand_cycle(
    max_parents: Vec<Option<usize>>,
    mut tree: Vec<Option<usize>>,
    cycle: Vec<usize>,
    incoming: HashMap<(usize, usize), usize>,
    outgoing: HashMap<(usize, usize), usize>,
) -> Vec<Option<usize>> {
    let rep = cycle[0];

    // The chosen incoming edge of the contraction decides which cycle edge
    // breaks: its target becomes the entry point of the cycle.
    let entry = incoming[&(tree[rep].expect("contraction has a parent"), rep)];
    tree[entry] = tree[rep];
    for &cv in &cycle {
        if cv != entry {
            tree[cv] = max_parents[cv];
        }
    }
    // Outgoing contraction edges stand for edges out of specific cycle
    // vertices; restore them.
    for ((from, to), original) in outgoing {
        if tree[to] == Some(from) && !cycle.contains(&to) {
            tree[to] = Some(original);
        }
    }
    tree
}
