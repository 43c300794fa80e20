use crate::error::{Error, Result};
use crate::graphs::{AdjacencyMatrix, ConnectivityMatrix};
use crate::matrix::Matrix;
use crate::model::{forward, ForwardTrace, ModelParams};

use super::link::loss_and_grad;

#[derive(Clone, Debug, PartialEq)]
pub struct StructuredGrad {
    pub da: Matrix,
    pub db: Matrix,
}

/// Gradients congruent with `ModelParams`: `dw[l]` always, plus the Kronecker
/// contractions `(da, db)` when the model is structured.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub dw: Vec<Matrix>,
    pub structured: Option<Vec<StructuredGrad>>,
}

impl GradientSet {
    pub fn zeros_like(params: &ModelParams) -> Self {
        GradientSet {
            dw: params.weights().iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            structured: params.structured_layers().map(|ls| {
                ls.iter()
                    .map(|s| StructuredGrad {
                        da: Matrix::zeros(s.a.rows(), s.a.cols()),
                        db: Matrix::zeros(s.b.rows(), s.b.cols()),
                    })
                    .collect()
            }),
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.dw.iter_mut().zip(&other.dw) {
            a.add_assign(b);
        }
        if let (Some(mine), Some(theirs)) = (&mut self.structured, &other.structured) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                a.da.add_assign(&b.da);
                a.db.add_assign(&b.db);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.dw.iter_mut().for_each(|m| m.scale(s));
        for g in self.structured.iter_mut().flatten() {
            g.da.scale(s);
            g.db.scale(s);
        }
    }

    /// Tensors in the same order as `ModelParams::trainable`.
    pub fn trainable(&self) -> Vec<&Matrix> {
        match &self.structured {
            None => self.dw.iter().collect(),
            Some(gs) => gs.iter().flat_map(|g| [&g.da, &g.db]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.trainable().iter().all(|m| m.is_finite())
    }
}

/// `dA[p, q] = <dW, E_pq ⊗ I>`, `dB[p, q] = <dW, E_pq ⊗ J>`.
pub(crate) fn kron_contract(dw: &Matrix, n: usize) -> StructuredGrad {
    let k = dw.rows() / n;
    let mut da = Matrix::zeros(k, k);
    let mut db = Matrix::zeros(k, k);
    for p in 0..k {
        for q in 0..k {
            let mut tr = 0.0;
            let mut sum = 0.0;
            for i in 0..n {
                let row = &dw.row(p * n + i)[q * n..(q + 1) * n];
                tr += row[i];
                sum += row.iter().sum::<f64>();
            }
            da[(p, q)] = tr;
            db[(p, q)] = sum;
        }
    }
    StructuredGrad { da, db }
}

/// Loss (summed over pairs) and its exact gradient. The ReLU subgradient at a
/// zero pre-activation is 0.
pub fn backward(
    params: &ModelParams,
    adj: &AdjacencyMatrix,
    target: &ConnectivityMatrix,
) -> Result<(f64, GradientSet)> {
    let trace = forward(params, adj)?;
    backward_trace(params, &trace, &target.to_matrix())
}

/// Backward pass from an existing trace and a dense 0/1 target.
pub fn backward_trace(params: &ModelParams, trace: &ForwardTrace, r: &Matrix) -> Result<(f64, GradientSet)> {
    let n = params.n();
    let (loss, gz) = loss_and_grad(&trace.output, r, params.link())?;
    let depth = params.depth();

    // dZ reaches every block of h_L through the block-sum readout
    let width = trace.hidden[depth].cols();
    let mut dh = Matrix::from_fn(n, width, |i, c| gz[(i, c % n)]);
    let mut dw = vec![Matrix::zeros(0, 0); depth];
    let inv_n = 1.0 / n as f64;

    for l in (0..depth).rev() {
        let h = &trace.hidden[l];
        let s = &trace.scores[l];
        let w = params.weight(l);
        let d = h.cols();
        let d_out = dh.col_slice(d, d);

        let mut ds = d_out.matmul_tr(h);
        for (g, &x) in ds.as_mut_slice().iter_mut().zip(s.as_slice()) {
            *g = if x > 0.0 { *g * inv_n } else { 0.0 };
        }
        let ds_h = ds.matmul(h);
        dw[l] = h.tr_matmul(&ds_h);
        if l == 0 {
            // h_0 is data; its gradient is never used
            break;
        }

        let p = s.map(|x| x.max(0.0) * inv_n);
        let mut d_in = dh.col_slice(0, d);
        d_in.add_assign(&p.tr_matmul(&d_out));
        d_in.add_assign(&ds_h.matmul_tr(w));
        d_in.add_assign(&ds.tr_matmul(h).matmul(w));
        dh = d_in;
    }

    let structured = params
        .structured_layers()
        .map(|_| dw.iter().map(|g| kron_contract(g, n)).collect());
    let grads = GradientSet { dw, structured };
    if !grads.is_finite() || !loss.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok((loss, grads))
}
