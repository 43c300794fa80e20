use crate::channels::project_weight;
use crate::error::{Error, Result};
use crate::graphs::{augmented_adjacency, connectivity, Graph};
use crate::matrix::Matrix;
use crate::model::ModelParams;
use crate::perm::{self, Permutation};

use super::backward;

/// Exhaustive up to this many nodes, sampled above.
const EXHAUSTIVE_MAX_N: usize = 5;
const SAMPLED_PERMS: usize = 120;

/// Per-layer residual energy share of the gradient averaged over all inputs
/// `P A P^T` (every permutation for `n <= 5`, 120 seeded draws otherwise).
pub fn grad_in_algebra_residual(graphs: &[Graph], params: &ModelParams) -> Result<Vec<f64>> {
    let n = params.n();
    let perms = if n <= EXHAUSTIVE_MAX_N {
        perm::all(n)
    } else {
        perm::sample(n, SAMPLED_PERMS, 0)
    };
    grad_in_algebra_residual_with(graphs, params, &perms)
}

/// As above with an explicit permutation set. A layer whose averaged gradient
/// vanishes reports 0.
pub fn grad_in_algebra_residual_with(graphs: &[Graph], params: &ModelParams, perms: &[Permutation]) -> Result<Vec<f64>> {
    if graphs.is_empty() || perms.is_empty() {
        return Err(Error::config("need at least one graph and one permutation"));
    }
    let n = params.n();
    let jobs = graphs.len() * perms.len();
    let per_job = crate::par::try_map_range(jobs, |idx| {
        let g = graphs[idx / perms.len()].permuted(&perms[idx % perms.len()]);
        backward(params, &augmented_adjacency(&g), &connectivity(&g)).map(|(_, gs)| gs.dw)
    })?;
    let mut avg: Vec<Matrix> = params.weights().iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
    for dw in &per_job {
        for (a, d) in avg.iter_mut().zip(dw) {
            a.add_assign(d);
        }
    }
    avg.iter()
        .map(|g| {
            let total = g.norm_sq();
            if total == 0.0 {
                return Ok(0.0);
            }
            let lc = project_weight(g, n)?;
            Ok(lc.residual_norm * lc.residual_norm / total)
        })
        .collect()
}
