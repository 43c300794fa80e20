//! Frobenius-cosine consistency between `M(P A P^T)` and `P M(A) P^T`, at the
//! output and per layer. Hidden states are permuted as `P h (I_K ⊗ P)^T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{augmented_adjacency, dataset, DistributionSpec, Graph};
use crate::matrix::{cosine, Matrix};
use crate::model::{attn, forward, ModelParams};
use crate::perm::{self, Permutation};
use crate::seed;

pub const DEFAULT_NUM_PERMS: usize = 8;
pub const DEFAULT_NUM_GRAPHS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceScore {
    pub score: f64,
    pub num_perms: usize,
    pub num_graphs: usize,
    /// Draws skipped because one side was the zero matrix.
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_layer: Option<Vec<f64>>,
}

/// Samples `num_graphs` graphs and `num_perms` permutations from named seed streams.
pub fn cons_frob(
    params: &ModelParams,
    spec: &DistributionSpec,
    num_graphs: usize,
    num_perms: usize,
    seed: u64,
) -> Result<EquivarianceScore> {
    if spec.n() != params.n() {
        return Err(Error::shape(format!("distribution n = {}, model n = {}", spec.n(), params.n())));
    }
    let graphs = dataset(spec, num_graphs, seed::stream(seed, "equiv-graphs"))?;
    let perms = perm::sample(params.n(), num_perms, seed::stream(seed, "equiv-perms"));
    cons_frob_on(params, &graphs, &perms)
}

/// Mean output-level cosine over every (graph, permutation) pair.
pub fn cons_frob_on(params: &ModelParams, graphs: &[Graph], perms: &[Permutation]) -> Result<EquivarianceScore> {
    let jobs = graphs.len() * perms.len();
    let cosines = crate::par::try_map_range(jobs, |idx| -> Result<Option<f64>> {
        let g = &graphs[idx / perms.len()];
        let p = &perms[idx % perms.len()];
        let z = forward(params, &augmented_adjacency(g))?.output;
        let zp = forward(params, &augmented_adjacency(&g.permuted(p)))?.output;
        Ok(cosine(&zp, &p.conjugate(&z)))
    })?;
    let (score, skipped) = mean_skipping(&cosines)?;
    Ok(EquivarianceScore {
        score,
        num_perms: perms.len(),
        num_graphs: graphs.len(),
        skipped,
        per_layer: None,
    })
}

fn mean_skipping(values: &[Option<f64>]) -> Result<(f64, usize)> {
    let kept: Vec<f64> = values.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(Error::Degenerate("every equivariance draw compared a zero matrix".into()));
    }
    Ok((kept.iter().sum::<f64>() / kept.len() as f64, values.len() - kept.len()))
}

/// Per layer `l`: cosine between `Attn(P h (I⊗P)^T; W_l)` and
/// `P Attn(h; W_l) (I⊗P)^T` at `h = h_{l-1}(A)`, averaged over `perms`.
pub fn layerwise_cons_frob(params: &ModelParams, g: &Graph, perms: &[Permutation]) -> Result<Vec<f64>> {
    let trace = forward(params, &augmented_adjacency(g))?;
    (0..params.depth())
        .map(|l| {
            let h = &trace.hidden[l];
            let w = params.weight(l);
            let out = attn(h, w)?;
            let cos = perms
                .iter()
                .map(|p| -> Result<Option<f64>> {
                    let permuted_out = attn(&p.conjugate_blocks(h), w)?;
                    Ok(cosine(&permuted_out, &p.conjugate_blocks(&out)))
                })
                .collect::<Result<Vec<_>>>()?;
            mean_skipping(&cos).map(|(m, _)| m)
        })
        .collect()
}

/// Layerwise scores averaged over graphs; graphs degenerate at some layer are skipped there.
pub fn layerwise_cons_frob_on(params: &ModelParams, graphs: &[Graph], perms: &[Permutation]) -> Result<Vec<f64>> {
    let per_graph = crate::par::map_range(graphs.len(), |i| layerwise_cons_frob(params, &graphs[i], perms));
    let mut out = Vec::with_capacity(params.depth());
    for l in 0..params.depth() {
        let vals: Vec<Option<f64>> = per_graph
            .iter()
            .map(|r| match r {
                Ok(v) => Ok(Some(v[l])),
                Err(Error::Degenerate(_)) => Ok(None),
                Err(e) => Err(Error::Degenerate(e.to_string())),
            })
            .collect::<Result<_>>()?;
        out.push(mean_skipping(&vals)?.0);
    }
    Ok(out)
}

/// `W` with a single spike in an off-diagonal block; breaks equivariance.
pub fn spiked_weight(d: usize, n: usize) -> Matrix {
    let mut w = Matrix::identity(d);
    w[(0, n + 1)] = 5.0;
    w
}
