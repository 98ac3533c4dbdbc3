use super::louvain::{louvain, WeightedGraph};
use super::{BigraphError, BipartiteGraph, Partition};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Contributor,
    Repository,
}

/// One-mode projection; `labels[i]` names node `i` of `graph`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub side: Side,
    pub labels: Vec<String>,
    pub graph: WeightedGraph,
}

/// Projects onto one side; edge weight is the number of shared neighbours.
pub fn onemode_project(g: &BipartiteGraph, side: Side) -> Projection {
    let (labels, n_other) = match side {
        Side::Contributor => (g.contributors.clone(), g.repos.len()),
        Side::Repository => (g.repos.clone(), g.contributors.len()),
    };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_other];
    for e in &g.edges {
        match side {
            Side::Contributor => members[e.repo].push(e.contributor),
            Side::Repository => members[e.contributor].push(e.repo),
        }
    }
    let mut shared: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for m in &members {
        for (i, &a) in m.iter().enumerate() {
            for &b in &m[i + 1..] {
                *shared.entry((a.min(b), a.max(b))).or_insert(0.0) += 1.0;
            }
        }
    }
    let graph = WeightedGraph::from_edges(labels.len(), shared.into_iter().map(|((a, b), w)| (a, b, w)));
    Projection { side, labels, graph }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub ari: f64,
    pub nmi: f64,
    pub mean_top_purity: f64,
    pub mean_top_jaccard: f64,
}

fn choose2(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// ARI, NMI (arithmetic normalisation) and best-match purity and Jaccard over
/// the `top_purity` / `top_jaccard` largest reference communities.
pub fn partition_agreement(
    reference: &BTreeMap<String, usize>,
    test: &BTreeMap<String, usize>,
    top_purity: usize,
    top_jaccard: usize,
) -> Result<Agreement, BigraphError> {
    if reference.len() != test.len() || reference.keys().zip(test.keys()).any(|(a, b)| a != b) {
        return Err(BigraphError::Domain("partitions cover different node sets".into()));
    }
    if reference.is_empty() {
        return Err(BigraphError::Domain("empty partitions".into()));
    }
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut ref_sizes: BTreeMap<usize, u64> = BTreeMap::new();
    let mut test_sizes: BTreeMap<usize, u64> = BTreeMap::new();
    for (node, &r) in reference {
        let t = test[node];
        *table.entry((r, t)).or_insert(0) += 1;
        *ref_sizes.entry(r).or_insert(0) += 1;
        *test_sizes.entry(t).or_insert(0) += 1;
    }
    let n = reference.len() as u64;

    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = ref_sizes.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = test_sizes.values().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(n).max(1.0);
    let max_index = (sum_a + sum_b) / 2.0;
    let ari = if (max_index - expected).abs() < 1e-15 { 1.0 } else { (index - expected) / (max_index - expected) };

    let nf = n as f64;
    let entropy = |sizes: &BTreeMap<usize, u64>| -> f64 {
        sizes.values().map(|&c| c as f64 / nf).map(|p| -p * p.ln()).sum()
    };
    let (h_ref, h_test) = (entropy(&ref_sizes), entropy(&test_sizes));
    let mi: f64 = table
        .iter()
        .map(|(&(r, t), &c)| {
            let pij = c as f64 / nf;
            pij * (pij * nf * nf / (ref_sizes[&r] as f64 * test_sizes[&t] as f64)).ln()
        })
        .sum();
    let nmi = if h_ref + h_test == 0.0 { 1.0 } else { (2.0 * mi / (h_ref + h_test)).clamp(0.0, 1.0) };

    // Largest reference communities first; ties by id.
    let mut ranked: Vec<(usize, u64)> = ref_sizes.iter().map(|(&c, &s)| (c, s)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut overlaps: BTreeMap<usize, Vec<(usize, u64)>> = BTreeMap::new();
    for (&(r, t), &c) in &table {
        overlaps.entry(r).or_default().push((t, c));
    }
    let purity = |r: usize, size: u64| -> f64 {
        overlaps[&r].iter().map(|&(_, c)| c).max().unwrap_or(0) as f64 / size as f64
    };
    let jaccard = |r: usize, size: u64| -> f64 {
        overlaps[&r]
            .iter()
            .map(|&(t, c)| c as f64 / (size + test_sizes[&t] - c) as f64)
            .fold(0.0, f64::max)
    };
    let mean_over = |k: usize, f: &dyn Fn(usize, u64) -> f64| -> f64 {
        let top: Vec<f64> = ranked.iter().take(k.max(1)).map(|&(r, s)| f(r, s)).collect();
        top.iter().sum::<f64>() / top.len() as f64
    };
    Ok(Agreement {
        ari,
        nmi,
        mean_top_purity: mean_over(top_purity, &purity),
        mean_top_jaccard: mean_over(top_jaccard, &jaccard),
    })
}

/// Compares the bipartite partition restricted to contributors with Louvain
/// run on the contributor projection. Contributors isolated in the projection
/// keep singleton communities.
pub fn projection_diagnostic(
    g: &BipartiteGraph,
    p: &Partition,
    seed: u64,
    top_purity: usize,
    top_jaccard: usize,
) -> Result<Agreement, BigraphError> {
    let proj = onemode_project(g, Side::Contributor);
    let out = louvain(&proj.graph, p.resolution, seed);
    let reference: BTreeMap<String, usize> = p.contributor_map(g);
    let test: BTreeMap<String, usize> =
        proj.labels.iter().cloned().zip(out.membership.iter().copied()).collect();
    debug_assert_eq!(
        reference.keys().collect::<BTreeSet<_>>(),
        test.keys().collect::<BTreeSet<_>>()
    );
    partition_agreement(&reference, &test, top_purity, top_jaccard)
}
