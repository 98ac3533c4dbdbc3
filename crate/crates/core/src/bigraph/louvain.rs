use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Undirected weighted graph in adjacency-list form. `self_loops[i]` holds the
/// diagonal entry A_ii, which already counts both directions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedGraph {
    pub adj: Vec<Vec<(usize, f64)>>,
    pub self_loops: Vec<f64>,
}

impl WeightedGraph {
    pub fn with_nodes(n: usize) -> Self {
        WeightedGraph { adj: vec![Vec::new(); n], self_loops: vec![0.0; n] }
    }

    /// Builds from undirected edges; parallel edges are summed.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut g = WeightedGraph::with_nodes(n);
        for (a, b, w) in edges {
            if a == b {
                g.self_loops[a] += 2.0 * w;
            } else {
                *acc.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
            }
        }
        for ((a, b), w) in acc {
            g.adj[a].push((b, w));
            g.adj[b].push((a, w));
        }
        g
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|&(_, w)| w).sum::<f64>() + self.self_loops[i]
    }

    /// Sum of all degrees (2m).
    pub fn total_weight(&self) -> f64 {
        (0..self.node_count()).map(|i| self.degree(i)).sum()
    }

    pub fn weight(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return self.self_loops[a];
        }
        self.adj[a].iter().find(|&&(j, _)| j == b).map_or(0.0, |&(_, w)| w)
    }
}

/// Resolution-weighted modularity of `membership` on `g`.
pub fn modularity(g: &WeightedGraph, membership: &[usize], resolution: f64) -> f64 {
    let two_m = g.total_weight();
    if two_m == 0.0 {
        return 0.0;
    }
    let n_comm = membership.iter().copied().max().map_or(0, |m| m + 1);
    let mut internal = vec![0.0; n_comm];
    let mut tot = vec![0.0; n_comm];
    for i in 0..g.node_count() {
        let c = membership[i];
        tot[c] += g.degree(i);
        internal[c] += g.self_loops[i];
        for &(j, w) in &g.adj[i] {
            if membership[j] == c {
                internal[c] += w;
            }
        }
    }
    internal
        .iter()
        .zip(&tot)
        .map(|(&a, &t)| a / two_m - resolution * (t / two_m) * (t / two_m))
        .sum()
}

/// Result of one Louvain run.
#[derive(Debug, Clone, PartialEq)]
pub struct LouvainOutcome {
    /// Dense labels, numbered by first occurrence in node order.
    pub membership: Vec<usize>,
    pub modularity: f64,
    /// Modularity on the input graph after each aggregation pass.
    pub pass_modularity: Vec<f64>,
    pub seed: u64,
}

pub(crate) fn relabel_dense(labels: &[usize]) -> Vec<usize> {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Local moving phase. Returns the community of every node and whether any move happened.
fn local_moves(g: &WeightedGraph, resolution: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    let n = g.node_count();
    let two_m = g.total_weight();
    let mut comm: Vec<usize> = (0..n).collect();
    let degree: Vec<f64> = (0..n).map(|i| g.degree(i)).collect();
    let mut tot = degree.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut moved_any = false;
    let mut neigh_w: Vec<f64> = vec![0.0; n];
    let mut neigh_list: Vec<usize> = Vec::new();
    loop {
        let mut moved = false;
        for &i in &order {
            let ci = comm[i];
            let ki = degree[i];
            for &(j, w) in &g.adj[i] {
                let cj = comm[j];
                if neigh_w[cj] == 0.0 {
                    neigh_list.push(cj);
                }
                neigh_w[cj] += w;
            }
            tot[ci] -= ki;
            let gain = |c: usize, kin: f64| kin - resolution * tot[c] * ki / two_m;
            let mut best = ci;
            let mut best_gain = gain(ci, neigh_w[ci]);
            // Candidates in ascending id order make tie-breaking independent of adjacency order.
            neigh_list.sort_unstable();
            for &c in &neigh_list {
                let gc = gain(c, neigh_w[c]);
                if gc > best_gain + 1e-12 * two_m.max(1.0) {
                    best = c;
                    best_gain = gc;
                }
            }
            tot[best] += ki;
            if best != ci {
                comm[i] = best;
                moved = true;
                moved_any = true;
            }
            for &c in &neigh_list {
                neigh_w[c] = 0.0;
            }
            neigh_list.clear();
        }
        if !moved {
            break;
        }
    }
    (relabel_dense(&comm), moved_any)
}

fn aggregate(g: &WeightedGraph, comm: &[usize]) -> WeightedGraph {
    let k = comm.iter().copied().max().map_or(0, |m| m + 1);
    let mut agg = WeightedGraph::with_nodes(k);
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..g.node_count() {
        let ci = comm[i];
        agg.self_loops[ci] += g.self_loops[i];
        for &(j, w) in &g.adj[i] {
            let cj = comm[j];
            if ci == cj {
                agg.self_loops[ci] += w;
            } else if ci < cj {
                *acc.entry((ci, cj)).or_insert(0.0) += w;
            }
        }
    }
    for ((a, b), w) in acc {
        agg.adj[a].push((b, w));
        agg.adj[b].push((a, w));
    }
    agg
}

/// Multi-level Louvain with a resolution parameter. The node sweep order of
/// every level is shuffled with a ChaCha stream seeded by `seed`.
pub fn louvain(g: &WeightedGraph, resolution: f64, seed: u64) -> LouvainOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.node_count();
    let mut membership: Vec<usize> = (0..n).collect();
    let mut pass_modularity = vec![modularity(g, &membership, resolution)];
    let mut level = g.clone();
    loop {
        let (comm, moved) = local_moves(&level, resolution, &mut rng);
        if !moved {
            break;
        }
        for m in membership.iter_mut() {
            *m = comm[*m];
        }
        let q = modularity(g, &membership, resolution);
        let prev = *pass_modularity.last().expect("seeded");
        assert!(q >= prev - 1e-9, "modularity decreased across a pass: {prev} -> {q}");
        pass_modularity.push(q);
        level = aggregate(&level, &comm);
        if level.node_count() <= 1 {
            break;
        }
    }
    let membership = relabel_dense(&membership);
    let modularity = *pass_modularity.last().expect("seeded");
    LouvainOutcome { membership, modularity, pass_modularity, seed }
}

/// Runs one Louvain per seed in parallel; highest modularity wins, ties to the
/// earliest seed in the list.
pub fn louvain_restarts(g: &WeightedGraph, resolution: f64, seeds: &[u64]) -> Option<LouvainOutcome> {
    let runs: Vec<LouvainOutcome> = seeds.par_iter().map(|&s| louvain(g, resolution, s)).collect();
    runs.into_iter().reduce(|best, r| if r.modularity > best.modularity { r } else { best })
}
