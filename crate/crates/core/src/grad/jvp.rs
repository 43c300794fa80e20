use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{augmented_adjacency, connectivity, Graph};
use crate::matrix::Matrix;
use crate::model::{block_sum, blocks, forward, ModelParams};

/// Row sums of each `n x n` column block: `U[:, p] = X_p 1`.
fn block_row_sums(h: &Matrix, n: usize) -> Matrix {
    let k = h.cols() / n;
    Matrix::from_fn(h.rows(), k, |i, p| h.row(i)[p * n..(p + 1) * n].iter().sum())
}

/// One-sided directional derivative of `max(x, 0)`.
#[inline]
fn relu_tangent(x: f64, t: f64) -> f64 {
    if x > 0.0 {
        t
    } else if x < 0.0 {
        0.0
    } else {
        t.max(0.0)
    }
}

/// Forward-mode tangent `D = dZ/dB_l [delta]` along `W_l += delta ⊗ J`.
///
/// Requires `W >= 0` everywhere and `delta >= 0`; under those conditions
/// every score is nonnegative and the tangent is entrywise nonnegative.
pub fn jvp_b(params: &ModelParams, g: &Graph, layer: usize, delta: &Matrix) -> Result<Matrix> {
    check_direction(params, g, layer, delta)?;
    let n = params.n();
    let trace = forward(params, &augmented_adjacency(g))?;
    let inv_n = 1.0 / n as f64;

    let mut t = Matrix::zeros(n, 2 * n);
    for l in 0..params.depth() {
        let h = &trace.hidden[l];
        let s = &trace.scores[l];
        let w = params.weight(l);
        let mut ts = t.matmul(w).matmul_tr(h);
        ts.add_assign(&h.matmul(w).matmul_tr(&t));
        if l == layer {
            // h (delta ⊗ J) h^T = U delta U^T
            let u = block_row_sums(h, n);
            ts.add_assign(&u.matmul(delta).matmul_tr(&u));
        }
        let mut tp = Matrix::zeros(n, n);
        for ((o, &x), &dx) in tp.as_mut_slice().iter_mut().zip(s.as_slice()).zip(ts.as_slice()) {
            *o = relu_tangent(x, dx) * inv_n;
        }
        let p = s.map(|x| x.max(0.0) * inv_n);
        let mut to = tp.matmul(h);
        to.add_assign(&p.matmul(&t));
        t = t.hstack(&to);
    }
    Ok(block_sum(&t))
}

fn check_direction(params: &ModelParams, g: &Graph, layer: usize, delta: &Matrix) -> Result<()> {
    if g.n() != params.n() {
        return Err(Error::shape(format!("graph has {} nodes, model {}", g.n(), params.n())));
    }
    if layer >= params.depth() {
        return Err(Error::config(format!("layer {layer} out of range for depth {}", params.depth())));
    }
    let k = blocks(layer);
    if delta.shape() != (k, k) {
        return Err(Error::shape(format!("direction {:?}, expected {k}x{k}", delta.shape())));
    }
    if delta.min_entry() < 0.0 {
        return Err(Error::Refused("direction must be entrywise nonnegative".into()));
    }
    if params.min_weight() < 0.0 {
        return Err(Error::Refused(
            "J-channel tangent needs nonnegative weights (ReLU may be active)".into(),
        ));
    }
    Ok(())
}

/// Decomposition of the directional loss derivative along `delta ⊗ J`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelPush {
    /// `alpha * sum_{R=0} D`.
    pub cross_penalty: f64,
    /// `alpha * sum_{R=1} (1 - phi) / phi * D`.
    pub within_reward: f64,
    pub total: f64,
}

pub fn channel_push(params: &ModelParams, g: &Graph, layer: usize, delta: &Matrix) -> Result<ChannelPush> {
    let d = jvp_b(params, g, layer, delta)?;
    let z = forward(params, &augmented_adjacency(g))?.output;
    let r = connectivity(g);
    let lp = params.link();
    let n = params.n();
    let mut cross = 0.0;
    let mut within = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dij = d[(i, j)];
            if r.get(i, j) {
                let phi = super::link(z[(i, j)], lp)?;
                within += (1.0 - phi) / phi * dij;
            } else {
                cross += dij;
            }
        }
    }
    let cross_penalty = lp.alpha * cross;
    let within_reward = lp.alpha * within;
    Ok(ChannelPush {
        cross_penalty,
        within_reward,
        total: cross_penalty - within_reward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::{backward, LinkParams};
    use crate::graphs::make_two_chain;
    use crate::model::{InitScheme, StructuredLayer};

    fn nonneg(depth: usize, n: usize, seed: u64) -> ModelParams {
        ModelParams::init(depth, n, &InitScheme::Uniform { lo: 0.0, hi: 0.2 }, seed, LinkParams::default()).unwrap()
    }

    fn shifted(params: &ModelParams, layer: usize, delta: &Matrix, step: f64) -> ModelParams {
        let n = params.n();
        let ws = params
            .weights()
            .iter()
            .enumerate()
            .map(|(l, w)| {
                if l == layer {
                    let mut w = w.clone();
                    w.axpy(step, &delta.kron(&Matrix::ones(n)));
                    w
                } else {
                    w.clone()
                }
            })
            .collect();
        ModelParams::dense(n, ws, *params.link()).unwrap()
    }

    #[test]
    fn zero_direction_gives_zero() {
        let p = nonneg(2, 5, 0);
        let g = Graph::path(5, 0, 5).unwrap();
        let d = jvp_b(&p, &g, 1, &Matrix::zeros(4, 4)).unwrap();
        assert_eq!(d.max_abs(), 0.0);
        let push = channel_push(&p, &g, 1, &Matrix::zeros(4, 4)).unwrap();
        assert_eq!((push.cross_penalty, push.within_reward, push.total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn matches_central_difference() {
        let p = nonneg(1, 5, 3);
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (3, 4)]).unwrap();
        let mut delta = Matrix::zeros(2, 2);
        delta[(0, 0)] = 1.0;
        let d = jvp_b(&p, &g, 0, &delta).unwrap();
        let h = 1e-7;
        let adj = augmented_adjacency(&g);
        let up = forward(&shifted(&p, 0, &delta, h), &adj).unwrap().output;
        let dn = forward(&shifted(&p, 0, &delta, -h), &adj).unwrap().output;
        for i in 0..5 {
            for j in 0..5 {
                let fd = (up[(i, j)] - dn[(i, j)]) / (2.0 * h);
                assert!((fd - d[(i, j)]).abs() <= 1e-6 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn two_chain_activates_cross_pairs() {
        let g = make_two_chain(8, 3).unwrap();
        let layers = vec![StructuredLayer { a: Matrix::identity(2), b: Matrix::zeros(2, 2) }];
        let p = ModelParams::structured(8, layers, LinkParams::default()).unwrap();
        let d = jvp_b(&p, &g, 0, &Matrix::ones(2)).unwrap();
        assert!(d[(0, 3)] > 0.0, "cross-component tangent {}", d[(0, 3)]);
        assert!(d.min_entry() >= 0.0);
    }

    #[test]
    fn refuses_mixed_sign() {
        let p = ModelParams::init(1, 4, &InitScheme::Gaussian { mean: 0.0, std: Some(1.0) }, 0, LinkParams::default()).unwrap();
        let g = Graph::path(4, 0, 4).unwrap();
        assert!(matches!(jvp_b(&p, &g, 0, &Matrix::ones(2)), Err(Error::Refused(_))));
        let q = nonneg(1, 4, 0);
        assert!(matches!(jvp_b(&q, &g, 0, &Matrix::filled(2, 2, -1.0)), Err(Error::Refused(_))));
    }

    #[test]
    fn total_equals_backward_contraction() {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (4, 5)]).unwrap();
        let p = nonneg(2, 6, 11);
        let delta = Matrix::from_fn(4, 4, |i, j| ((i + 2 * j) % 3) as f64);
        let push = channel_push(&p, &g, 1, &delta).unwrap();
        let (_, grads) = backward(&p, &augmented_adjacency(&g), &connectivity(&g)).unwrap();
        let db = crate::grad::backward::kron_contract(&grads.dw[1], 6).db;
        let expected = db.dot(&delta);
        assert!((push.total - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }

    #[test]
    fn saturated_disconnected_push_is_positive() {
        let g = make_two_chain(8, 3).unwrap();
        let layers = vec![StructuredLayer { a: Matrix::filled(2, 2, 60.0), b: Matrix::filled(2, 2, 0.01) }];
        let p = ModelParams::structured(8, layers, LinkParams::default()).unwrap();
        let push = channel_push(&p, &g, 0, &Matrix::ones(2)).unwrap();
        assert!(push.cross_penalty > 0.0);
        assert!(push.total > 0.0, "{push:?}");
    }
}
