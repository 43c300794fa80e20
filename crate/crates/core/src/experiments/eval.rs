use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::LinkParams;
use crate::graphs::{augmented_adjacency, connectivity, distances, Graph, INFINITY};
use crate::matrix::Matrix;
use crate::model::{forward, ModelParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `Z > 0`.
    StrictPositive,
    /// `phi(Z) > 1/2`.
    #[default]
    HalfProb,
}

/// Thresholded prediction, row-major `n x n`.
pub fn predict(z: &Matrix, link: &LinkParams, mode: ThresholdMode) -> Vec<bool> {
    let cut = match mode {
        ThresholdMode::StrictPositive => 0.0,
        ThresholdMode::HalfProb => link.half_prob_cutoff(),
    };
    z.as_slice().iter().map(|&x| x > cut).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub correct: u64,
    pub count: u64,
}

impl Bucket {
    pub fn accuracy(&self) -> Option<f64> {
        (self.count > 0).then(|| self.correct as f64 / self.count as f64)
    }

    fn add(&mut self, ok: bool) {
        self.count += 1;
        self.correct += u64::from(ok);
    }

    fn merge(&mut self, o: &Bucket) {
        self.count += o.count;
        self.correct += o.correct;
    }
}

/// Accuracy summary over a graph list. Pair statistics use ordered pairs
/// `i != j`; exact match additionally requires the diagonal to be right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub num_graphs: usize,
    pub exact_match: f64,
    pub per_pair_acc: f64,
    /// `by_distance[d - 1]` for true distance `d` in `1..n`.
    pub by_distance: Vec<Bucket>,
    pub disconnected: Bucket,
}

impl EvalResult {
    pub fn accuracy_at(&self, d: usize) -> Option<f64> {
        d.checked_sub(1).and_then(|i| self.by_distance.get(i)).and_then(Bucket::accuracy)
    }

    pub fn bucket(&self, d: usize) -> Bucket {
        d.checked_sub(1).and_then(|i| self.by_distance.get(i)).copied().unwrap_or_default()
    }

    pub fn total_pairs(&self) -> u64 {
        self.by_distance.iter().map(|b| b.count).sum::<u64>() + self.disconnected.count
    }
}

struct GraphEval {
    perfect: bool,
    by_distance: Vec<Bucket>,
    disconnected: Bucket,
}

fn eval_graph(params: &ModelParams, g: &Graph, mode: ThresholdMode) -> Result<GraphEval> {
    let n = g.n();
    let z = forward(params, &augmented_adjacency(g))?.output;
    let pred = predict(&z, params.link(), mode);
    let r = connectivity(g);
    let d = distances(g);
    let mut out = GraphEval {
        perfect: true,
        by_distance: vec![Bucket::default(); n - 1],
        disconnected: Bucket::default(),
    };
    for i in 0..n {
        for j in 0..n {
            let ok = pred[i * n + j] == r.get(i, j);
            out.perfect &= ok;
            if i == j {
                continue;
            }
            match d.get(i, j) {
                INFINITY => out.disconnected.add(ok),
                dist => out.by_distance[dist as usize - 1].add(ok),
            }
        }
    }
    Ok(out)
}

pub fn evaluate(params: &ModelParams, graphs: &[Graph], mode: ThresholdMode) -> Result<EvalResult> {
    if graphs.is_empty() {
        return Err(Error::config("evaluation needs at least one graph"));
    }
    let n = params.n();
    if let Some(g) = graphs.iter().find(|g| g.n() != n) {
        return Err(Error::shape(format!("graph with {} nodes for a model with n = {n}", g.n())));
    }
    let per_graph = crate::par::try_map_range(graphs.len(), |i| eval_graph(params, &graphs[i], mode))?;
    let mut by_distance = vec![Bucket::default(); n - 1];
    let mut disconnected = Bucket::default();
    let mut perfect = 0usize;
    for ge in &per_graph {
        perfect += usize::from(ge.perfect);
        for (acc, b) in by_distance.iter_mut().zip(&ge.by_distance) {
            acc.merge(b);
        }
        disconnected.merge(&ge.disconnected);
    }
    let (correct, count) = by_distance
        .iter()
        .chain(std::iter::once(&disconnected))
        .fold((0, 0), |(c, t), b| (c + b.correct, t + b.count));
    Ok(EvalResult {
        num_graphs: graphs.len(),
        exact_match: perfect as f64 / graphs.len() as f64,
        per_pair_acc: if count == 0 { 1.0 } else { correct as f64 / count as f64 },
        by_distance,
        disconnected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{dataset, DistributionSpec};
    use crate::model::InitScheme;

    #[test]
    fn zero_scores_predict_nothing() {
        let z = Matrix::zeros(3, 3);
        for mode in [ThresholdMode::StrictPositive, ThresholdMode::HalfProb] {
            assert!(predict(&z, &LinkParams::default(), mode).iter().all(|p| !p));
        }
    }

    #[test]
    fn identity_model_is_perfect_within_capacity() {
        let p = ModelParams::init(1, 8, &InitScheme::Identity, 0, LinkParams::default()).unwrap();
        let graphs = dataset(&DistributionSpec::restricted(DistributionSpec::er(8, 0.2), 3), 200, 1).unwrap();
        let r = evaluate(&p, &graphs, ThresholdMode::StrictPositive).unwrap();
        assert_eq!(r.exact_match, 1.0);
        assert_eq!(r.total_pairs(), 200 * 56);
    }

    #[test]
    fn zero_model_on_empty_graphs() {
        let p = ModelParams::dense(5, vec![Matrix::zeros(10, 10)], LinkParams::default()).unwrap();
        let graphs = vec![Graph::empty(5).unwrap(); 3];
        let r = evaluate(&p, &graphs, ThresholdMode::StrictPositive).unwrap();
        assert_eq!(r.exact_match, 1.0);
        assert_eq!(r.disconnected.count, 60);
    }

    #[test]
    fn buckets_match_distance_histogram() {
        let p = ModelParams::init(1, 8, &InitScheme::Identity, 0, LinkParams::default()).unwrap();
        let graphs = dataset(&DistributionSpec::er(8, 0.2), 100, 5).unwrap();
        let r = evaluate(&p, &graphs, ThresholdMode::StrictPositive).unwrap();
        let mut hist = vec![0u64; 8];
        let mut disc = 0;
        for g in &graphs {
            let d = distances(g);
            for i in 0..8 {
                for j in 0..8 {
                    if i != j {
                        match d.finite(i, j) {
                            Some(k) => hist[k as usize] += 1,
                            None => disc += 1,
                        }
                    }
                }
            }
        }
        for d in 1..8 {
            assert_eq!(r.bucket(d).count, hist[d]);
        }
        assert_eq!(r.disconnected.count, disc);
        assert_eq!(r.accuracy_at(4).unwrap_or(0.0), 0.0);
        assert_eq!(r.accuracy_at(3), Some(1.0));
    }

    #[test]
    fn empty_list_rejected() {
        let p = ModelParams::init(1, 4, &InitScheme::Identity, 0, LinkParams::default()).unwrap();
        assert!(evaluate(&p, &[], ThresholdMode::HalfProb).is_err());
    }
}
