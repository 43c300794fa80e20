//! The disentangled transformer: `h_0 = [I | A]`, each layer appends
//! `Attn(h; W) = ReLU(h W h^T) h / n` to the residual stream, and the output
//! sums the `n x n` column blocks of the last hidden state.

pub mod checkpoint;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::LinkParams;
use crate::graphs::AdjacencyMatrix;
use crate::matrix::Matrix;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Dense,
    Structured,
}

/// `W = a ⊗ I_n + b ⊗ J_n` with `a, b` of size `K x K`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredLayer {
    pub a: Matrix,
    pub b: Matrix,
}

impl StructuredLayer {
    pub fn materialize(&self, n: usize) -> Matrix {
        let mut w = self.a.kron(&Matrix::identity(n));
        w.add_assign(&self.b.kron(&Matrix::ones(n)));
        w
    }
}

/// Number of `n x n` blocks in the input of layer `l` (0-based).
pub fn blocks(l: usize) -> usize {
    1 << (l + 1)
}

/// Width of hidden state `h_l`: `2^(l+1) n`.
pub fn hidden_width(l: usize, n: usize) -> usize {
    blocks(l) * n
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    depth: usize,
    n: usize,
    mode: Mode,
    /// Dense weights; in structured mode these are kept materialized.
    weights: Vec<Matrix>,
    structured: Option<Vec<StructuredLayer>>,
    nonneg: bool,
    link: LinkParams,
}

impl ModelParams {
    pub fn dense(n: usize, weights: Vec<Matrix>, link: LinkParams) -> Result<Self> {
        check_dims(n, weights.len())?;
        link.validate()?;
        for (l, w) in weights.iter().enumerate() {
            let d = hidden_width(l, n);
            if w.shape() != (d, d) {
                return Err(Error::shape(format!(
                    "layer {l} weight is {:?}, expected {d}x{d}",
                    w.shape()
                )));
            }
        }
        Ok(ModelParams {
            depth: weights.len(),
            n,
            mode: Mode::Dense,
            weights,
            structured: None,
            nonneg: false,
            link,
        })
    }

    pub fn structured(n: usize, layers: Vec<StructuredLayer>, link: LinkParams) -> Result<Self> {
        check_dims(n, layers.len())?;
        link.validate()?;
        for (l, s) in layers.iter().enumerate() {
            let k = blocks(l);
            if s.a.shape() != (k, k) || s.b.shape() != (k, k) {
                return Err(Error::shape(format!(
                    "layer {l} factors are {:?}/{:?}, expected {k}x{k}",
                    s.a.shape(),
                    s.b.shape()
                )));
            }
        }
        let weights = layers.iter().map(|s| s.materialize(n)).collect();
        Ok(ModelParams {
            depth: layers.len(),
            n,
            mode: Mode::Structured,
            weights,
            structured: Some(layers),
            nonneg: false,
            link,
        })
    }

    pub fn init(depth: usize, n: usize, scheme: &InitScheme, seed: u64, link: LinkParams) -> Result<Self> {
        check_dims(n, depth)?;
        let layer_rng = |l: usize| seed::rng(seed::derive(seed, l as u64));
        match *scheme {
            InitScheme::Identity => {
                let ws = (0..depth).map(|l| Matrix::identity(hidden_width(l, n))).collect();
                Self::dense(n, ws, link)
            }
            InitScheme::Uniform { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::config(format!("uniform init needs lo < hi, got [{lo}, {hi})")));
                }
                let ws = (0..depth)
                    .map(|l| {
                        let d = hidden_width(l, n);
                        let mut rng = layer_rng(l);
                        Matrix::from_fn(d, d, |_, _| rng.gen_range(lo..hi))
                    })
                    .collect();
                Self::dense(n, ws, link)
            }
            InitScheme::Gaussian { mean, std } => {
                let mut ws = Vec::with_capacity(depth);
                for l in 0..depth {
                    let d = hidden_width(l, n);
                    let sd = std.unwrap_or(0.02 / (d as f64).sqrt());
                    let normal = Normal::new(mean, sd)
                        .map_err(|e| Error::config(format!("gaussian init: {e}")))?;
                    let mut rng = layer_rng(l);
                    ws.push(Matrix::from_fn(d, d, |_, _| normal.sample(&mut rng)));
                }
                Self::dense(n, ws, link)
            }
            InitScheme::StructuredZeroB => {
                let layers = (0..depth)
                    .map(|l| {
                        let k = blocks(l);
                        let mut rng = layer_rng(l);
                        StructuredLayer {
                            a: Matrix::from_fn(k, k, |_, _| rng.gen::<f64>() / k as f64),
                            b: Matrix::zeros(k, k),
                        }
                    })
                    .collect();
                Self::structured(n, layers, link)
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn link(&self) -> &LinkParams {
        &self.link
    }

    pub fn set_link(&mut self, link: LinkParams) -> Result<()> {
        link.validate()?;
        self.link = link;
        Ok(())
    }

    pub fn nonneg(&self) -> bool {
        self.nonneg
    }

    /// Turns the `W >= 0` constraint on (projecting immediately) or off.
    pub fn set_nonneg(&mut self, on: bool) {
        self.nonneg = on;
        if on {
            self.project_nonneg();
        }
    }

    pub fn weight(&self, l: usize) -> &Matrix {
        &self.weights[l]
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn structured_layers(&self) -> Option<&[StructuredLayer]> {
        self.structured.as_deref()
    }

    /// Smallest entry over all (materialized) weights.
    pub fn min_weight(&self) -> f64 {
        self.weights.iter().map(Matrix::min_entry).fold(f64::INFINITY, f64::min)
    }

    /// Dense copy with the same weights.
    pub fn materialize(&self) -> ModelParams {
        ModelParams {
            mode: Mode::Dense,
            structured: None,
            ..self.clone()
        }
    }

    /// The tensors an optimizer updates: `W_l` (dense) or `a_l, b_l` (structured).
    pub fn trainable(&self) -> Vec<&Matrix> {
        match &self.structured {
            None => self.weights.iter().collect(),
            Some(layers) => layers.iter().flat_map(|s| [&s.a, &s.b]).collect(),
        }
    }

    /// Applies `f` to the trainable tensors, then re-materializes and re-projects.
    pub fn update_trainable(&mut self, f: impl FnOnce(&mut [&mut Matrix])) {
        match &mut self.structured {
            None => {
                let mut ts: Vec<&mut Matrix> = self.weights.iter_mut().collect();
                f(&mut ts);
            }
            Some(layers) => {
                let mut ts: Vec<&mut Matrix> = layers.iter_mut().flat_map(|s| [&mut s.a, &mut s.b]).collect();
                f(&mut ts);
            }
        }
        if self.nonneg {
            self.project_nonneg();
        }
        self.sync();
    }

    fn sync(&mut self) {
        if let Some(layers) = &self.structured {
            self.weights = layers.iter().map(|s| s.materialize(self.n)).collect();
        }
    }

    fn project_nonneg(&mut self) {
        match &mut self.structured {
            None => {
                for w in &mut self.weights {
                    for x in w.as_mut_slice() {
                        *x = x.max(0.0);
                    }
                }
            }
            Some(layers) => {
                // off-diagonal entries of each block are b, diagonal ones a + b
                for s in layers.iter_mut() {
                    for (a, b) in s.a.as_mut_slice().iter_mut().zip(s.b.as_mut_slice()) {
                        *b = b.max(0.0);
                        *a = a.max(-*b);
                    }
                }
            }
        }
        self.sync();
    }

    /// Scores `h W_l h^T` of layer `l`. Structured layers use the factored form
    /// `sum a_pq X_p X_q^T + U b U^T` with `X_p` the blocks of `h` and `U` their row sums.
    pub fn scores(&self, l: usize, h: &Matrix) -> Result<Matrix> {
        let d = hidden_width(l, self.n);
        if h.shape() != (self.n, d) {
            return Err(Error::shape(format!(
                "layer {l} input is {:?}, expected {}x{d}",
                h.shape(),
                self.n
            )));
        }
        Ok(match &self.structured {
            None => h.matmul(&self.weights[l]).matmul_tr(h),
            Some(layers) => structured_scores(&layers[l], h, self.n),
        })
    }
}

fn check_dims(n: usize, depth: usize) -> Result<()> {
    if depth == 0 {
        return Err(Error::config("depth must be at least 1"));
    }
    if !(2..=crate::graphs::MAX_NODES).contains(&n) {
        return Err(Error::config(format!("node count {n} outside 2..=128")));
    }
    if n as u128 * (1u128 << (depth + 1)) > 1 << 16 {
        return Err(Error::config(format!("depth {depth} too large for n = {n}")));
    }
    Ok(())
}

fn structured_scores(layer: &StructuredLayer, h: &Matrix, n: usize) -> Matrix {
    let k = layer.a.rows();
    let xs: Vec<Matrix> = (0..k).map(|p| h.col_slice(p * n, n)).collect();
    let mut s = Matrix::zeros(n, n);
    for p in 0..k {
        let mut y = Matrix::zeros(n, n);
        for (q, xq) in xs.iter().enumerate() {
            let c = layer.a[(p, q)];
            if c != 0.0 {
                y.axpy(c, xq);
            }
        }
        s.add_assign(&xs[p].matmul_tr(&y));
    }
    let u = Matrix::from_fn(n, k, |i, p| xs[p].row(i).iter().sum());
    s.add_assign(&u.matmul(&layer.b).matmul_tr(&u));
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitScheme {
    /// `W_l = I`, the matrix-powering construction.
    Identity,
    Uniform { lo: f64, hi: f64 },
    /// Entries `N(mean, std^2)`; `std` defaults to `0.02 / sqrt(d)` per layer.
    Gaussian {
        mean: f64,
        #[serde(default)]
        std: Option<f64>,
    },
    /// Structured layers with `a ~ U[0, 1/K)` and `b = 0`.
    StructuredZeroB,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Gaussian { mean: 0.0, std: None }
    }
}

/// `ReLU(h W h^T) h / n`.
pub fn attn(h: &Matrix, w: &Matrix) -> Result<Matrix> {
    if w.rows() != w.cols() || h.cols() != w.rows() {
        return Err(Error::shape(format!("attn: h {:?}, W {:?}", h.shape(), w.shape())));
    }
    let s = h.matmul(w).matmul_tr(h);
    Ok(relu_attend(&s, h))
}

fn relu_attend(s: &Matrix, h: &Matrix) -> Matrix {
    let n = h.rows() as f64;
    s.map(|x| x.max(0.0) / n).matmul(h)
}

/// Cached activations of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `h_0 ..= h_L`.
    pub hidden: Vec<Matrix>,
    /// Pre-ReLU scores `h_{l-1} W_l h_{l-1}^T` per layer.
    pub scores: Vec<Matrix>,
    pub output: Matrix,
}

/// `h_0 = [I_n | A]`.
pub fn input_state(a: &Matrix) -> Matrix {
    Matrix::identity(a.rows()).hstack(a)
}

/// Sum of the consecutive `n x n` column blocks of `h`.
pub fn block_sum(h: &Matrix) -> Matrix {
    let n = h.rows();
    let mut z = Matrix::zeros(n, n);
    for i in 0..n {
        let row = h.row(i);
        let out = z.row_mut(i);
        for chunk in row.chunks_exact(n) {
            for (o, x) in out.iter_mut().zip(chunk) {
                *o += x;
            }
        }
    }
    z
}

pub fn forward(params: &ModelParams, adj: &AdjacencyMatrix) -> Result<ForwardTrace> {
    if adj.n() != params.n {
        return Err(Error::shape(format!(
            "graph has {} nodes, model expects {}",
            adj.n(),
            params.n
        )));
    }
    forward_from_state(params, input_state(&adj.to_matrix()))
}

/// Runs the layers from an arbitrary `n x 2n` initial state.
pub fn forward_from_state(params: &ModelParams, h0: Matrix) -> Result<ForwardTrace> {
    if h0.shape() != (params.n, 2 * params.n) {
        return Err(Error::shape(format!("initial state {:?}", h0.shape())));
    }
    let mut hidden = Vec::with_capacity(params.depth + 1);
    let mut scores = Vec::with_capacity(params.depth);
    hidden.push(h0);
    for l in 0..params.depth {
        let h = &hidden[l];
        let s = params.scores(l, h)?;
        // NaN would slip through max(x, 0) silently
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("scores of layer {}", l + 1)));
        }
        let next = h.hstack(&relu_attend(&s, h));
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("hidden state after layer {}", l + 1)));
        }
        scores.push(s);
        hidden.push(next);
    }
    let output = block_sum(&hidden[params.depth]);
    Ok(ForwardTrace {
        hidden,
        scores,
        output,
    })
}

/// Output matrix only.
pub fn predict_scores(params: &ModelParams, adj: &AdjacencyMatrix) -> Result<Matrix> {
    Ok(forward(params, adj)?.output)
}

/// Entrywise `max(W, 0)` on every weight.
pub fn clamp_nonneg(params: &ModelParams) -> ModelParams {
    let mut p = params.clone();
    p.project_nonneg();
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{augmented_adjacency, sample_er, Graph};

    fn link() -> LinkParams {
        LinkParams::default()
    }

    #[test]
    fn shapes_double_per_layer() {
        let p = ModelParams::init(2, 8, &InitScheme::Identity, 0, link()).unwrap();
        assert_eq!(p.weight(0).shape(), (16, 16));
        assert_eq!(p.weight(1).shape(), (32, 32));
        let g = sample_er(8, 0.3, 1).unwrap();
        let t = forward(&p, &augmented_adjacency(&g)).unwrap();
        assert_eq!(t.hidden[0].shape(), (8, 16));
        assert_eq!(t.hidden[1].shape(), (8, 32));
        assert_eq!(t.hidden[2].shape(), (8, 64));
        assert_eq!(t.output.shape(), (8, 8));
    }

    #[test]
    fn attn_on_empty_graph_identity_weight() {
        let n = 5;
        let h = input_state(&Matrix::identity(n));
        let out = attn(&h, &Matrix::identity(2 * n)).unwrap();
        assert_eq!(out, h.scaled(2.0 / n as f64));
        assert_eq!(attn(&h, &Matrix::zeros(2 * n, 2 * n)).unwrap(), Matrix::zeros(n, 2 * n));
        assert!(attn(&h, &Matrix::identity(n)).is_err());
    }

    #[test]
    fn zero_weights_output_is_i_plus_a() {
        let n = 6;
        let g = Graph::from_edges(n, &[(0, 1), (2, 3), (3, 4)]).unwrap();
        let adj = augmented_adjacency(&g);
        let p = ModelParams::dense(n, vec![Matrix::zeros(2 * n, 2 * n)], link()).unwrap();
        let z = forward(&p, &adj).unwrap().output;
        let mut expected = Matrix::identity(n);
        expected.add_assign(&adj.to_matrix());
        assert_eq!(z, expected);
    }

    #[test]
    fn materialized_structured_layer_index_law() {
        let n = 3;
        let a = Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.5, 0.0], vec![-0.75, 3.0]]).unwrap();
        let w = StructuredLayer { a: a.clone(), b: b.clone() }.materialize(n);
        for u in 0..2 {
            for v in 0..2 {
                for i in 0..n {
                    for j in 0..n {
                        let expected = a[(u, v)] * f64::from(u8::from(i == j)) + b[(u, v)];
                        assert_eq!(w[(u * n + i, v * n + j)], expected);
                    }
                }
            }
        }
        let id = StructuredLayer { a: Matrix::identity(2), b: Matrix::zeros(2, 2) };
        assert_eq!(id.materialize(4), Matrix::identity(8));
    }

    #[test]
    fn init_schemes() {
        let id = ModelParams::init(2, 4, &InitScheme::Identity, 0, link()).unwrap();
        assert_eq!(id.weight(0), &Matrix::identity(8));
        assert_eq!(id.weight(1), &Matrix::identity(16));

        let u = ModelParams::init(2, 4, &InitScheme::Uniform { lo: 0.0, hi: 0.01 }, 3, link()).unwrap();
        for w in u.weights() {
            assert!(w.as_slice().iter().all(|&x| (0.0..0.01).contains(&x)));
        }

        let g1 = ModelParams::init(2, 4, &InitScheme::default(), 42, link()).unwrap();
        let g2 = ModelParams::init(2, 4, &InitScheme::default(), 42, link()).unwrap();
        let g3 = ModelParams::init(2, 4, &InitScheme::default(), 43, link()).unwrap();
        assert_eq!(g1, g2);
        assert_ne!(g1, g3);

        let s = ModelParams::init(2, 4, &InitScheme::StructuredZeroB, 1, link()).unwrap();
        assert_eq!(s.mode(), Mode::Structured);
        assert!(s.structured_layers().unwrap().iter().all(|l| l.b.max_abs() == 0.0));
        assert!(ModelParams::init(0, 4, &InitScheme::Identity, 0, link()).is_err());
    }

    #[test]
    fn clamp_examples() {
        let n = 2;
        let neg = ModelParams::dense(n, vec![Matrix::filled(4, 4, -1.0)], link()).unwrap();
        assert_eq!(clamp_nonneg(&neg).weight(0), &Matrix::zeros(4, 4));

        let pos = ModelParams::init(1, n, &InitScheme::Uniform { lo: 0.0, hi: 1.0 }, 0, link()).unwrap();
        assert_eq!(clamp_nonneg(&pos), pos);

        let mixed = ModelParams::init(1, n, &InitScheme::Gaussian { mean: 0.0, std: Some(1.0) }, 0, link()).unwrap();
        let c = clamp_nonneg(&mixed);
        for (x, y) in mixed.weight(0).as_slice().iter().zip(c.weight(0).as_slice()) {
            assert_eq!(*y, x.max(0.0));
        }
        assert_eq!(clamp_nonneg(&c), c);
    }

    #[test]
    fn structured_clamp_keeps_materialized_weight_nonneg() {
        let layers = vec![StructuredLayer {
            a: Matrix::from_rows(&[vec![-2.0, 1.0], vec![0.5, -0.1]]).unwrap(),
            b: Matrix::from_rows(&[vec![1.0, -1.0], vec![0.3, 0.2]]).unwrap(),
        }];
        let p = ModelParams::structured(3, layers, link()).unwrap();
        let c = clamp_nonneg(&p);
        assert!(c.min_weight() >= 0.0);
        assert_eq!(clamp_nonneg(&c), c);
    }

    #[test]
    fn overflow_is_reported() {
        let n = 4;
        let p = ModelParams::dense(
            n,
            vec![Matrix::filled(8, 8, 1e200), Matrix::filled(16, 16, 1e200)],
            link(),
        )
        .unwrap();
        let adj = augmented_adjacency(&Graph::complete(n).unwrap());
        let r = forward(&p, &adj);
        assert!(matches!(r, Err(Error::NonFinite(_))), "{:?}", r.map(|t| t.output));
    }
}
