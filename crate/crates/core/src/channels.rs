//! Least-squares projection of each layer weight onto `span{E_pq ⊗ I, E_pq ⊗ J}`
//! and the energy shares of the two channels.
//!
//! Per `n x n` block `M` the normal equations are
//! `n a + n b = tr(M)` and `n a + n^2 b = sum(M)`, so
//! `b = (sum - tr) / (n^2 - n)` and `a = tr / n - b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::ModelParams;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockProjection {
    pub a: f64,
    pub b: f64,
    pub residual: Matrix,
}

fn block_coefficients(tr: f64, sum: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let b = (sum - tr) / (nf * nf - nf);
    (tr / nf - b, b)
}

pub fn project_block(m: &Matrix) -> Result<BlockProjection> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::shape(format!("block {:?} is not square", m.shape())));
    }
    if n < 2 {
        return Err(Error::Degenerate("I and J coincide for n = 1".into()));
    }
    let (a, b) = block_coefficients(m.trace(), m.sum(), n);
    let residual = Matrix::from_fn(n, n, |i, j| m[(i, j)] - b - if i == j { a } else { 0.0 });
    Ok(BlockProjection { a, b, residual })
}

/// Projection of one layer weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerChannels {
    pub a_hat: Matrix,
    pub b_hat: Matrix,
    pub residual_norm: f64,
    pub share_i: f64,
    pub share_j: f64,
    pub share_res: f64,
    /// `||a_hat ⊗ I||^2 / ||W||^2`.
    pub proj_energy_i: f64,
    /// `||b_hat ⊗ J||^2 / ||W||^2`.
    pub proj_energy_j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub layers: Vec<LayerChannels>,
}

/// Projects a `(K n) x (K n)` weight block by block.
pub fn project_weight(w: &Matrix, n: usize) -> Result<LayerChannels> {
    if n < 2 {
        return Err(Error::Degenerate("I and J coincide for n = 1".into()));
    }
    if w.rows() != w.cols() || !w.rows().is_multiple_of(n) {
        return Err(Error::shape(format!("weight {:?} is not a grid of {n}x{n} blocks", w.shape())));
    }
    let k = w.rows() / n;
    let mut a_hat = Matrix::zeros(k, k);
    let mut b_hat = Matrix::zeros(k, k);
    let mut res_sq = 0.0;
    for p in 0..k {
        for q in 0..k {
            let (mut tr, mut sum) = (0.0, 0.0);
            for i in 0..n {
                let row = &w.row(p * n + i)[q * n..(q + 1) * n];
                tr += row[i];
                sum += row.iter().sum::<f64>();
            }
            let (a, b) = block_coefficients(tr, sum, n);
            a_hat[(p, q)] = a;
            b_hat[(p, q)] = b;
            for i in 0..n {
                let row = &w.row(p * n + i)[q * n..(q + 1) * n];
                for (j, &x) in row.iter().enumerate() {
                    let r = x - b - if i == j { a } else { 0.0 };
                    res_sq += r * r;
                }
            }
        }
    }
    let (share_i, share_j, share_res) = energy_shares(w, &a_hat, &b_hat)?;
    let total = w.norm_sq();
    let nf = n as f64;
    Ok(LayerChannels {
        proj_energy_i: nf * a_hat.norm_sq() / total,
        proj_energy_j: nf * nf * b_hat.norm_sq() / total,
        a_hat,
        b_hat,
        residual_norm: res_sq.sqrt(),
        share_i,
        share_j,
        share_res,
    })
}

pub fn project_weights(params: &ModelParams) -> Result<ChannelReport> {
    let layers = params
        .weights()
        .iter()
        .map(|w| project_weight(w, params.n()))
        .collect::<Result<_>>()?;
    Ok(ChannelReport { layers })
}

/// `(<W, A⊗I>, <W, B⊗J>) / ||W||^2` and the remainder to 1.
pub fn energy_shares(w: &Matrix, a_hat: &Matrix, b_hat: &Matrix) -> Result<(f64, f64, f64)> {
    let k = a_hat.rows();
    if a_hat.shape() != (k, k) || b_hat.shape() != (k, k) || k == 0 || !w.rows().is_multiple_of(k) || w.rows() != w.cols() {
        return Err(Error::shape(format!(
            "weight {:?} vs factors {:?}/{:?}",
            w.shape(),
            a_hat.shape(),
            b_hat.shape()
        )));
    }
    let total = w.norm_sq();
    if !(total > 0.0) {
        return Err(Error::Degenerate("energy share of a zero weight".into()));
    }
    let n = w.rows() / k;
    let (mut with_i, mut with_j) = (0.0, 0.0);
    for p in 0..k {
        for q in 0..k {
            let (mut tr, mut sum) = (0.0, 0.0);
            for i in 0..n {
                let row = &w.row(p * n + i)[q * n..(q + 1) * n];
                tr += row[i];
                sum += row.iter().sum::<f64>();
            }
            with_i += a_hat[(p, q)] * tr;
            with_j += b_hat[(p, q)] * sum;
        }
    }
    let si = with_i / total;
    let sj = with_j / total;
    Ok((si, sj, 1.0 - si - sj))
}
