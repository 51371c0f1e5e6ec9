//! Reference networks and seeded random instance generators.
//!
//! Node 0 is always the single origin. Random graphs contain a forward path
//! from every node to a destination, so every node drains and the network is
//! stable for any positive parameters.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netmodel::{
    build_graph, BufferNetwork, Edge, Graph, GraphSpec, MarkovChain, ParamBounds, TuningParams,
};

fn graph(n: usize, edges: &[(usize, usize, f64)], origins: &[usize], destinations: &[usize]) -> Graph {
    build_graph(GraphSpec {
        n,
        edges: edges
            .iter()
            .map(|&(from, to, weight)| Edge { from, to, weight })
            .collect(),
        origins: origins.to_vec(),
        destinations: destinations.to_vec(),
    })
    .expect("generated graph is valid")
}

fn uniform_bounds(graphs: &[Graph], beta_bar: f64, delta_bar: f64) -> ParamBounds {
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for g in graphs {
        for e in g.edges() {
            if !edges.contains(&(e.from, e.to)) {
                edges.push((e.from, e.to));
            }
        }
    }
    ParamBounds {
        beta_bar: vec![beta_bar; graphs[0].destinations().len()],
        delta_bar: vec![delta_bar; edges.len()],
    }
}

fn network(graphs: Vec<Graph>, chain: MarkovChain, beta_bar: f64, delta_bar: f64) -> BufferNetwork {
    let bounds = uniform_bounds(&graphs, beta_bar, delta_bar);
    BufferNetwork::new(graphs, chain, 0.0, bounds).expect("generated network is valid")
}

/// Two-node chain `0 → 1` with unit weight, origin 0, destination 1 and
/// bounds `β̄ = δ̄ = 2`.
pub fn e1() -> BufferNetwork {
    let g = graph(2, &[(0, 1, 1.0)], &[0], &[1]);
    network(vec![g], MarkovChain::single(), 2.0, 2.0)
}

/// The chain of [`e1`] switching between weights 1 and 2 with unit rates.
pub fn e2() -> BufferNetwork {
    let g1 = graph(2, &[(0, 1, 1.0)], &[0], &[1]);
    let g2 = graph(2, &[(0, 1, 2.0)], &[0], &[1]);
    let chain = MarkovChain::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).expect("valid generator");
    network(vec![g1, g2], chain, 2.0, 2.0)
}

/// Origin 0 splitting into destinations 1 and 2.
pub fn fork3() -> BufferNetwork {
    let g = graph(3, &[(0, 1, 1.0), (0, 2, 1.0)], &[0], &[1, 2]);
    network(vec![g], MarkovChain::single(), 2.0, 2.0)
}

fn random_params<R: Rng>(net: &BufferNetwork, rng: &mut R, lo: f64, hi: f64) -> TuningParams {
    TuningParams {
        beta: (0..net.destinations().len()).map(|_| rng.gen_range(lo..hi)).collect(),
        delta: (0..net.edges().len()).map(|_| rng.gen_range(lo..hi)).collect(),
    }
}

fn random_chain<R: Rng>(rng: &mut R, modes: usize) -> MarkovChain {
    if modes == 1 {
        return MarkovChain::single();
    }
    let mut rows = vec![vec![0.0; modes]; modes];
    for i in 0..modes {
        for j in 0..modes {
            if i != j {
                rows[i][j] = rng.gen_range(0.5..2.0);
            }
        }
        rows[i][i] = -rows[i].iter().sum::<f64>();
    }
    MarkovChain::from_rows(&rows).expect("valid generator")
}

/// Stable single-mode network with 2 to 6 nodes and parameters strictly
/// inside the bounds.
///
/// The path `0 → 1 → … → n−1` ends at the destination. Extra forward edges
/// and back-edges between interior nodes are added at random.
pub fn random_single_mode(seed: u64) -> (BufferNetwork, TuningParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=6);
    let mut edges = Vec::new();
    for i in 0..n - 1 {
        edges.push((i, i + 1, rng.gen_range(0.5..2.0)));
    }
    for i in 0..n - 1 {
        for j in i + 2..n {
            if rng.gen_bool(0.3) {
                edges.push((i, j, rng.gen_range(0.5..2.0)));
            }
        }
    }
    for j in 1..n - 1 {
        for i in j + 1..n - 1 {
            if rng.gen_bool(0.2) {
                edges.push((i, j, rng.gen_range(0.5..2.0)));
            }
        }
    }
    let g = graph(n, &edges, &[0], &[n - 1]);
    let net = network(vec![g], MarkovChain::single(), 2.0, 2.0);
    let p = random_params(&net, &mut rng, 0.2, 2.0);
    (net, p)
}

/// Small, well-conditioned two-mode network for Monte Carlo checks: a chain
/// of 2 or 3 nodes (possibly with a shortcut), per-mode weights within a
/// factor of two, and parameters in `[1, 2)`.
pub fn random_two_mode(seed: u64) -> (BufferNetwork, TuningParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=3);
    let mut base = Vec::new();
    for i in 0..n - 1 {
        base.push((i, i + 1, rng.gen_range(0.8..1.25)));
    }
    if n == 3 && rng.gen_bool(0.5) {
        base.push((0, 2, rng.gen_range(0.8..1.25)));
    }
    let scaled: Vec<_> = base
        .iter()
        .map(|&(f, t, w)| (f, t, w * rng.gen_range(0.6..1.6)))
        .collect();
    let graphs = vec![
        graph(n, &base, &[0], &[n - 1]),
        graph(n, &scaled, &[0], &[n - 1]),
    ];
    let chain = random_chain(&mut rng, 2);
    let net = network(graphs, chain, 2.0, 2.0);
    let p = random_params(&net, &mut rng, 1.0, 2.0);
    (net, p)
}

/// Network where several nodes have more than one out-edge, with 4 to 8
/// nodes, one or two destinations and one or two modes.
///
/// In the second mode edge weights are perturbed and some non-essential
/// edges are switched off.
pub fn random_multi_out(seed: u64) -> BufferNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=8);
    let n_dest = rng.gen_range(1..=2);
    let destinations: Vec<usize> = (n - n_dest..n).collect();
    let interior = n - n_dest;
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut essential = Vec::new();
    for i in 0..interior {
        // one edge one step forward keeps a drain path from every node
        let next = (i + 1).min(n - 1);
        essential.push((i, next));
        edges.push((i, next, rng.gen_range(0.5..2.0)));
        let extra = rng.gen_range(1..=2);
        let mut targets: Vec<usize> = (1..n).filter(|&t| t != i && t != next).collect();
        targets.shuffle(&mut rng);
        for &t in targets.iter().take(extra) {
            edges.push((i, t, rng.gen_range(0.5..2.0)));
        }
    }
    let modes = rng.gen_range(1..=2);
    let mut graphs = vec![graph(n, &edges, &[0], &destinations)];
    if modes == 2 {
        let mut second = Vec::new();
        for &(f, t, w) in &edges {
            if essential.contains(&(f, t)) || rng.gen_bool(0.8) {
                second.push((f, t, w * rng.gen_range(0.5..2.0)));
            }
        }
        graphs.push(graph(n, &second, &[0], &destinations));
    }
    let chain = random_chain(&mut rng, modes);
    network(graphs, chain, 2.0, 2.0)
}

/// Thirty-node, sixty-edge, two-mode network with one origin and one
/// destination.
///
/// A path through all nodes carries 29 edges and 31 random edges are added
/// on top. The second mode switches off roughly a quarter of the added
/// edges and rescales the remaining weights.
pub fn desk_scale(seed: u64) -> BufferNetwork {
    const N: usize = 30;
    const EDGES: usize = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize, f64)> = (0..N - 1)
        .map(|i| (i, i + 1, rng.gen_range(0.5..2.0)))
        .collect();
    while edges.len() < EDGES {
        let from = rng.gen_range(0..N - 1);
        let to = rng.gen_range(1..N);
        if from == to || edges.iter().any(|&(f, t, _)| f == from && t == to) {
            continue;
        }
        edges.push((from, to, rng.gen_range(0.5..2.0)));
    }
    let mut second = Vec::new();
    for (k, &(f, t, w)) in edges.iter().enumerate() {
        if k < N - 1 || rng.gen_bool(0.75) {
            second.push((f, t, w * rng.gen_range(0.5..2.0)));
        }
    }
    let graphs = vec![
        graph(N, &edges, &[0], &[N - 1]),
        graph(N, &second, &[0], &[N - 1]),
    ];
    let chain = MarkovChain::from_rows(&[vec![-0.5, 0.5], vec![1.0, -1.0]]).expect("valid generator");
    network(graphs, chain, 2.0, 2.0)
}
