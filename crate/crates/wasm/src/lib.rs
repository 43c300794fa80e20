//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every exported function returns a JSON string; the `*_json` functions hold
//! the logic and are what the native tests exercise.

use connlab::channels::project_weight;
use connlab::experiments::{evaluate, predict, ThresholdMode};
use connlab::grad::{backward, step, GradientSet, LinkParams, OptimizerSpec, OptimizerState, Schedule};
use connlab::graphs::{
    augmented_adjacency, capacity, connectivity, dataset, distances, AdjacencyMatrix, ConnectivityMatrix,
    DistributionSpec, Graph,
};
use connlab::model::{forward, InitScheme};
use connlab::{seed, Matrix, ModelParams, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Node count of the demo trainer.
pub const DEMO_N: usize = 8;
const HELD_OUT: usize = 256;
const OOD: usize = 128;

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[derive(Serialize)]
struct CapacityView {
    n: usize,
    depth: usize,
    capacity: u64,
    edges: Vec<(usize, usize)>,
    /// Row-major; `-1` for unreachable pairs.
    distance: Vec<i64>,
    truth: Vec<bool>,
    /// Identity-initialised model under `Z > 0`.
    predicted: Vec<bool>,
}

/// One ER graph and what an identity-initialised `depth`-layer model predicts on it.
pub fn capacity_json(n: usize, p: f64, depth: usize, seed: u32) -> Result<String> {
    let g = connlab::graphs::sample_er(n, p, seed as u64)?;
    let params = ModelParams::init(depth, n, &InitScheme::Identity, 0, LinkParams::default())?;
    let z = forward(&params, &augmented_adjacency(&g))?.output;
    let d = distances(&g);
    let r = connectivity(&g);
    let view = CapacityView {
        n,
        depth,
        capacity: capacity(depth),
        edges: g.edges(),
        distance: (0..n * n).map(|k| d.finite(k / n, k % n).map_or(-1, i64::from)).collect(),
        truth: (0..n * n).map(|k| r.get(k / n, k % n)).collect(),
        predicted: predict(&z, params.link(), ThresholdMode::StrictPositive),
    };
    Ok(serde_json::to_string(&view)?)
}

#[wasm_bindgen]
pub fn capacity_view(n: usize, p: f64, depth: usize, seed: u32) -> std::result::Result<String, JsError> {
    js(capacity_json(n, p, depth, seed))
}

#[derive(Serialize)]
struct StepReport {
    step: u64,
    total_steps: u64,
    loss: f64,
    share_i: f64,
    share_j: f64,
    share_res: f64,
    exact_match: f64,
    per_pair_acc: f64,
    /// Per-pair accuracy on two 4-node chains, beyond the 3-hop capacity.
    ood_pair_acc: f64,
}

#[derive(Serialize)]
struct WeightView {
    n: usize,
    blocks: usize,
    w: Matrix,
    projected: Matrix,
    a_hat: Matrix,
    b_hat: Matrix,
}

/// Full-batch gradient descent on ER(8, 0.2) for a one-layer model.
#[wasm_bindgen]
pub struct Trainer {
    params: ModelParams,
    opt: OptimizerState,
    data: Vec<(AdjacencyMatrix, ConnectivityMatrix)>,
    held_out: Vec<Graph>,
    ood: Vec<Graph>,
    step: u64,
    total_steps: u64,
    last_loss: f64,
}

impl Trainer {
    /// `dmax = 0` trains on unrestricted ER graphs, otherwise on `diameter <= dmax`.
    pub fn create(count: usize, dmax: u32, lr: f64, total_steps: u64, seed: u32) -> Result<Trainer> {
        let base = DistributionSpec::er(DEMO_N, 0.2);
        let train = if dmax == 0 { base.clone() } else { DistributionSpec::restricted(base.clone(), dmax) };
        let seed = seed as u64;
        let params = ModelParams::init(
            1,
            DEMO_N,
            &InitScheme::default(),
            seed::stream(seed, "init"),
            LinkParams::default(),
        )?;
        let spec = OptimizerSpec::Gd {
            lr,
            schedule: Schedule::Cosine { total_steps },
        };
        let opt = OptimizerState::new(spec, &params)?;
        let graphs = dataset(&train, count, seed::stream(seed, "train"))?;
        Ok(Trainer {
            params,
            opt,
            data: graphs.iter().map(|g| (augmented_adjacency(g), connectivity(g))).collect(),
            held_out: dataset(&base, HELD_OUT, seed::stream(seed, "eval"))?,
            ood: dataset(&DistributionSpec::TwoChain { n: DEMO_N, k: 4 }, OOD, seed::stream(seed, "ood"))?,
            step: 0,
            total_steps,
            last_loss: f64::NAN,
        })
    }

    /// Takes up to `k` steps (never past `total_steps`) and reports the new state.
    pub fn advance(&mut self, k: u32) -> Result<String> {
        let pairs = (DEMO_N * DEMO_N) as f64;
        for _ in 0..k {
            if self.step >= self.total_steps {
                break;
            }
            let mut total = GradientSet::zeros_like(&self.params);
            let mut loss = 0.0;
            for (a, r) in &self.data {
                let (l, g) = backward(&self.params, a, r)?;
                loss += l;
                total.add_assign(&g);
            }
            let scale = 1.0 / (self.data.len() as f64 * pairs);
            total.scale(scale);
            self.last_loss = loss * scale;
            step(&mut self.params, &total, &mut self.opt)?;
            self.step += 1;
        }
        self.report()
    }

    fn report(&self) -> Result<String> {
        let ch = project_weight(self.params.weight(0), DEMO_N)?;
        let held = evaluate(&self.params, &self.held_out, ThresholdMode::HalfProb)?;
        let ood = evaluate(&self.params, &self.ood, ThresholdMode::HalfProb)?;
        let r = StepReport {
            step: self.step,
            total_steps: self.total_steps,
            loss: self.last_loss,
            share_i: ch.share_i,
            share_j: ch.share_j,
            share_res: ch.share_res,
            exact_match: held.exact_match,
            per_pair_acc: held.per_pair_acc,
            ood_pair_acc: ood.per_pair_acc,
        };
        Ok(serde_json::to_string(&r)?)
    }

    /// The weight, its span{I, J} projection and the block coefficients.
    pub fn weights_json(&self) -> Result<String> {
        let w = self.params.weight(0);
        let ch = project_weight(w, DEMO_N)?;
        let k = ch.a_hat.rows();
        let i = Matrix::identity(DEMO_N);
        let j = Matrix::ones(DEMO_N);
        let mut projected = ch.a_hat.kron(&i);
        projected.add_assign(&ch.b_hat.kron(&j));
        let view = WeightView {
            n: DEMO_N,
            blocks: k,
            w: w.clone(),
            projected,
            a_hat: ch.a_hat,
            b_hat: ch.b_hat,
        };
        Ok(serde_json::to_string(&view)?)
    }
}

#[wasm_bindgen]
impl Trainer {
    #[wasm_bindgen(constructor)]
    pub fn new(count: usize, dmax: u32, lr: f64, total_steps: u32, seed: u32) -> std::result::Result<Trainer, JsError> {
        Trainer::create(count, dmax, lr, total_steps as u64, seed).map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn run(&mut self, k: u32) -> std::result::Result<String, JsError> {
        js(self.advance(k))
    }

    pub fn weights(&self) -> std::result::Result<String, JsError> {
        js(self.weights_json())
    }

    pub fn done(&self) -> bool {
        self.step >= self.total_steps
    }
}
