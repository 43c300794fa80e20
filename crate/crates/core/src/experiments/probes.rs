use serde::{Deserialize, Serialize};

use super::eval::{evaluate, predict, EvalResult, ThresholdMode};
use crate::error::{Error, Result};
use crate::graphs::{augmented_adjacency, capacity, connectivity, dataset, DistributionSpec, Graph};
use crate::model::{forward, ModelParams};

/// Minimum accuracy for a distance bucket to count as reliable.
pub const RELIABLE_ACC: f64 = 0.99;
/// Minimum pairs in a bucket before its accuracy is trusted.
pub const MIN_BUCKET: u64 = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub distance: usize,
    pub count: u64,
    pub accuracy: Option<f64>,
    pub reliable: bool,
    /// Fewer than `MIN_BUCKET` pairs.
    pub insufficient: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityProbe {
    pub rows: Vec<ProbeRow>,
    /// Largest distance whose bucket is reliable; the disconnected bucket never counts.
    pub max_reliable_distance: Option<usize>,
    pub eval: EvalResult,
}

pub fn probe_table(eval: EvalResult) -> CapacityProbe {
    let rows: Vec<ProbeRow> = eval
        .by_distance
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let accuracy = b.accuracy();
            let insufficient = b.count < MIN_BUCKET;
            ProbeRow {
                distance: i + 1,
                count: b.count,
                accuracy,
                reliable: !insufficient && accuracy.is_some_and(|a| a >= RELIABLE_ACC),
                insufficient,
            }
        })
        .collect();
    let max_reliable_distance = rows.iter().filter(|r| r.reliable).map(|r| r.distance).max();
    CapacityProbe {
        rows,
        max_reliable_distance,
        eval,
    }
}

/// Per-distance reliability on `num_graphs` held-out draws from `spec`.
pub fn capacity_probe(
    params: &ModelParams,
    spec: &DistributionSpec,
    num_graphs: usize,
    mode: ThresholdMode,
    seed: u64,
) -> Result<CapacityProbe> {
    if spec.n() != params.n() {
        return Err(Error::shape(format!("probe distribution n = {}, model n = {}", spec.n(), params.n())));
    }
    let graphs = dataset(spec, num_graphs, crate::seed::stream(seed, "probe"))?;
    Ok(probe_table(evaluate(params, &graphs, mode)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub graph: Graph,
    pub label: String,
    /// First wrongly predicted pair `(i, j)` and its truth.
    pub pair: (usize, usize),
    pub truth: bool,
}

/// Chains of `3^L + 1 ..= n - 1` hops on nodes `0..`, then two equal chains
/// whose diameter exceeds `3^L`.
pub fn long_chain_candidates(n: usize, depth: usize) -> Vec<(String, Graph)> {
    let cap = capacity(depth);
    let mut out = Vec::new();
    let mut hops = cap + 1;
    while (hops as usize) < n {
        let g = Graph::path(n, 0, hops as usize + 1).expect("path fits");
        out.push((format!("chain of {} nodes", hops + 1), g));
        hops += 1;
    }
    let mut k = cap as usize + 2;
    while 2 * k <= n {
        let mut g = Graph::path(n, 0, k).expect("path fits");
        for v in k..2 * k - 1 {
            g.add_edge(v, v + 1).expect("valid edge");
        }
        out.push((format!("two chains of {k} nodes"), g));
        k += 1;
    }
    out
}

/// First candidate graph on which `predictor` disagrees with connectivity.
pub fn falsify_predictor(
    n: usize,
    depth: usize,
    predictor: impl Fn(&Graph) -> Result<Vec<bool>>,
) -> Result<Option<Counterexample>> {
    for (label, g) in long_chain_candidates(n, depth) {
        let pred = predictor(&g)?;
        let r = connectivity(&g);
        for i in 0..n {
            for j in 0..n {
                if pred[i * n + j] != r.get(i, j) {
                    return Ok(Some(Counterexample {
                        graph: g,
                        label,
                        pair: (i, j),
                        truth: r.get(i, j),
                    }));
                }
            }
        }
    }
    Ok(None)
}

pub fn falsify_capacity(params: &ModelParams, depth: usize, mode: ThresholdMode) -> Result<Option<Counterexample>> {
    falsify_predictor(params.n(), depth, |g| {
        let z = forward(params, &augmented_adjacency(g))?.output;
        Ok(predict(&z, params.link(), mode))
    })
}
