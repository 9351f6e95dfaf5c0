//! Shared helpers for integration tests: a path-enumeration d-separation
//! oracle and random DAG and linear-Gaussian model generators.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voifair::graph::{node_set, Dag, NodeId, NodeSet};
use voifair::scm::{NoiseSpec, Scm, UtilityMechanism};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random DAG on `V0..V{n-1}` whose edges all point from lower to higher
/// index, each present with probability `p`.
pub fn random_dag(rng: &mut ChaCha8Rng, n: usize, p: f64) -> (Vec<NodeId>, Vec<(usize, usize)>) {
    let names: Vec<NodeId> = (0..n).map(|i| NodeId::new(&format!("V{i}"))).collect();
    let mut edges = Vec::new();
    for j in 0..n {
        for i in 0..j {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    (names, edges)
}

pub fn build_dag(names: &[NodeId], edges: &[(usize, usize)]) -> Dag {
    Dag::new(names.iter().cloned(), edges.iter().map(|&(a, b)| (names[a].clone(), names[b].clone())))
        .expect("acyclic by construction")
}

/// d-separation of single nodes `a` and `b` given `z`, by enumerating every
/// simple path of the skeleton and checking each for an open trail.
pub fn d_separated_by_paths(n: usize, edges: &[(usize, usize)], a: usize, b: usize, z: &[usize]) -> bool {
    let mut adj = vec![Vec::new(); n];
    let mut children = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
        children[u].push(v);
    }
    let is_edge = |u: usize, v: usize| edges.contains(&(u, v));
    // descendants including self
    let desc = |v: usize| {
        let mut seen = vec![false; n];
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            if !seen[x] {
                seen[x] = true;
                stack.extend(children[x].iter().copied());
            }
        }
        seen
    };
    let open = |path: &[usize]| {
        path.windows(3).all(|w| {
            let (prev, mid, next) = (w[0], w[1], w[2]);
            let collider = is_edge(prev, mid) && is_edge(next, mid);
            if collider {
                let d = desc(mid);
                z.iter().any(|&x| d[x])
            } else {
                !z.contains(&mid)
            }
        })
    };
    fn walk(
        adj: &[Vec<usize>],
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        target: usize,
        open: &dyn Fn(&[usize]) -> bool,
    ) -> bool {
        let last = *path.last().unwrap();
        if last == target {
            return open(path);
        }
        for &next in &adj[last] {
            if on_path[next] {
                continue;
            }
            path.push(next);
            on_path[next] = true;
            let found = walk(adj, path, on_path, target, open);
            path.pop();
            on_path[next] = false;
            if found {
                return true;
            }
        }
        false
    }
    let mut on_path = vec![false; n];
    on_path[a] = true;
    !walk(&adj, &mut vec![a], &mut on_path, b, &open)
}

/// A random linear-Gaussian model with binary decision `D` that may read
/// every feature, plus its protected attribute.
pub struct RandomModel {
    pub scm: Scm,
    pub features: Vec<String>,
    pub protected: String,
}

/// Features `X0..X{k-1}`; each has earlier features as parents with
/// probability one half. The protected attribute is either a binary root or
/// a Gaussian node like the rest.
pub fn random_model(rng: &mut ChaCha8Rng) -> RandomModel {
    let k = rng.random_range(3..=6);
    let features: Vec<String> = (0..k).map(|i| format!("X{i}")).collect();
    let s = rng.random_range(0..k);
    let binary_s = rng.random_bool(0.5);
    let mut b = Scm::builder();
    for (j, name) in features.iter().enumerate() {
        if j == s && binary_s {
            b = b.discrete(name, NoiseSpec::uniform(&[0.0, 1.0]));
            continue;
        }
        let mut weights: Vec<(&str, f64)> = Vec::new();
        for p in &features[..j] {
            if rng.random_bool(0.5) {
                weights.push((p.as_str(), coef(rng)));
            }
        }
        let sd = rng.random_range(0.5..2.0);
        b = b.linear(name, &weights, coef(rng), NoiseSpec::normal(0.0, sd));
    }
    let inputs: Vec<&str> = features.iter().map(String::as_str).collect();
    let scm = b
        .decision(&[0.0, 1.0], &inputs)
        .utility_inputs(&inputs)
        .protected(&features[s])
        .build()
        .expect("valid random model");
    RandomModel { scm, features: features.clone(), protected: features[s].clone() }
}

fn coef(rng: &mut ChaCha8Rng) -> f64 {
    (rng.random_range(-2.0..2.0_f64) * 100.0).round() / 100.0
}

/// `1(D=1)(c + Σ c_v v)` over `parents`.
pub fn random_utility(rng: &mut ChaCha8Rng, parents: &[String]) -> UtilityMechanism {
    let mut text = format!("indicator(D = 1) * ({}", coef(rng));
    for v in parents {
        text.push_str(&format!(" + ({}) * {v}", coef(rng)));
    }
    text.push(')');
    UtilityMechanism::parse(&text, &Default::default()).expect("valid utility")
}

/// A random subset of `items`, each kept with probability `p`.
pub fn subset<T: Clone>(rng: &mut ChaCha8Rng, items: &[T], p: f64) -> Vec<T> {
    items.iter().filter(|_| rng.random_bool(p)).cloned().collect()
}

pub fn names(items: &[String]) -> NodeSet {
    node_set(items.iter().map(String::as_str))
}
