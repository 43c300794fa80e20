use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DataRegime, ExperimentConfig, Reduction};
use super::eval::{evaluate, EvalResult};
use crate::channels::{project_weights, ChannelReport};
use crate::equivariance::{cons_frob_on, layerwise_cons_frob_on};
use crate::error::{Error, Result};
use crate::grad::{backward_trace, step, GradientSet, OptimizerState};
use crate::graphs::{augmented_adjacency, connectivity, dataset, rho, Graph};
use crate::matrix::Matrix;
use crate::model::checkpoint::Checkpoint;
use crate::model::{forward, ModelParams};
use crate::perm::{self, Permutation};
use crate::seed;

/// Graphs per gradient chunk; chunks are summed in index order.
const CHUNK: usize = 64;
/// Graphs used for the per-layer equivariance columns.
const LAYERWISE_GRAPHS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerShares {
    pub share_i: f64,
    pub share_j: f64,
    pub share_res: f64,
    pub proj_i: f64,
    pub proj_j: f64,
}

/// One logged step.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub exact_match: f64,
    pub per_pair_acc: f64,
    pub cons_frob: Option<f64>,
    /// `None` for an all-zero weight.
    pub shares: Vec<Option<LayerShares>>,
    /// Distances `1..n`, `None` for empty buckets.
    pub acc_by_distance: Vec<Option<f64>>,
    pub acc_disc: Option<f64>,
    pub cons_frob_layers: Vec<Option<f64>>,
    /// `(exact_match, per_pair_acc)` per configured OOD set.
    pub ood: Vec<(f64, f64)>,
}

pub fn metrics_header(depth: usize, n: usize, ood_names: &[String]) -> String {
    let mut cols: Vec<String> = ["step", "lr", "train_loss", "exact_match", "per_pair_acc", "cons_frob"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for l in 1..=depth {
        cols.extend([format!("share_I_l{l}"), format!("share_J_l{l}"), format!("share_res_l{l}")]);
    }
    cols.extend((1..n).map(|d| format!("acc_d{d}")));
    cols.push("acc_disc".into());
    for l in 1..=depth {
        cols.extend([format!("proj_I_l{l}"), format!("proj_J_l{l}")]);
    }
    cols.extend((1..=depth).map(|l| format!("cons_frob_l{l}")));
    for name in ood_names {
        cols.extend([format!("ood_{name}_exact_match"), format!("ood_{name}_per_pair_acc")]);
    }
    cols.join(",")
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let mut cols = vec![
            self.step.to_string(),
            self.lr.to_string(),
            self.train_loss.to_string(),
            self.exact_match.to_string(),
            self.per_pair_acc.to_string(),
            cell(self.cons_frob),
        ];
        for s in &self.shares {
            cols.extend([
                cell(s.as_ref().map(|s| s.share_i)),
                cell(s.as_ref().map(|s| s.share_j)),
                cell(s.as_ref().map(|s| s.share_res)),
            ]);
        }
        cols.extend(self.acc_by_distance.iter().map(|a| cell(*a)));
        cols.push(cell(self.acc_disc));
        for s in &self.shares {
            cols.extend([cell(s.as_ref().map(|s| s.proj_i)), cell(s.as_ref().map(|s| s.proj_j))]);
        }
        cols.extend(self.cons_frob_layers.iter().map(|c| cell(*c)));
        for (em, pp) in &self.ood {
            cols.extend([em.to_string(), pp.to_string()]);
        }
        cols.join(",")
    }

    pub fn share_i(&self, layer: usize) -> Option<f64> {
        self.shares[layer].as_ref().map(|s| s.share_i)
    }

    pub fn share_j(&self, layer: usize) -> Option<f64> {
        self.shares[layer].as_ref().map(|s| s.share_j)
    }

    pub fn share_res(&self, layer: usize) -> Option<f64> {
        self.shares[layer].as_ref().map(|s| s.share_res)
    }
}

pub fn metrics_csv(config: &ExperimentConfig, rows: &[MetricsRow]) -> String {
    let names: Vec<String> = config.eval.ood.iter().map(|o| o.name.clone()).collect();
    let mut out = metrics_header(config.model.depth, config.model.n, &names);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedEval {
    pub name: String,
    pub result: EvalResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub config: ExperimentConfig,
    /// `sha256("blob <len>\0" + canonical config JSON)`.
    pub input_hash: String,
    pub steps: u64,
    pub final_loss: f64,
    pub held_out: EvalResult,
    pub ood: Vec<NamedEval>,
    pub channels: Option<ChannelReport>,
    pub cons_frob: Option<f64>,
    /// Beyond-capacity pair fraction of the training graphs.
    pub train_rho: f64,
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub rows: Vec<MetricsRow>,
    pub checkpoint: Checkpoint,
    pub summary: Summary,
}

impl TrainOutcome {
    pub fn final_row(&self) -> &MetricsRow {
        self.rows.last().expect("at least one row is always logged")
    }

    pub fn ood(&self, name: &str) -> Option<&EvalResult> {
        self.summary.ood.iter().find(|o| o.name == name).map(|o| &o.result)
    }

    /// Writes `metrics.csv`, `checkpoint.json`, `summary.json` and `config.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.csv"), metrics_csv(&self.summary.config, &self.rows))?;
        self.checkpoint.save(&dir.join("checkpoint.json"))?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary)?)?;
        fs::write(dir.join("config.json"), self.summary.config.to_json()?)?;
        Ok(())
    }
}

/// Git-style content hash of arbitrary input bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

struct Example {
    h0: Matrix,
    r: Matrix,
}

impl Example {
    fn new(g: &Graph) -> Self {
        Example {
            h0: crate::model::input_state(&augmented_adjacency(g).to_matrix()),
            r: connectivity(g).to_matrix(),
        }
    }
}

/// Summed loss and gradient over a batch, reduced chunk by chunk in index order.
fn batch_gradient(params: &ModelParams, batch: &[Example]) -> Result<(f64, GradientSet)> {
    let chunks = batch.len().div_ceil(CHUNK);
    let partial = crate::par::try_map_range(chunks, |c| -> Result<(f64, GradientSet)> {
        let mut loss = 0.0;
        let mut acc = GradientSet::zeros_like(params);
        for ex in &batch[c * CHUNK..((c + 1) * CHUNK).min(batch.len())] {
            let trace = crate::model::forward_from_state(params, ex.h0.clone())?;
            let (l, g) = backward_trace(params, &trace, &ex.r)?;
            loss += l;
            acc.add_assign(&g);
        }
        Ok((loss, acc))
    })?;
    let mut loss = 0.0;
    let mut total = GradientSet::zeros_like(params);
    for (l, g) in &partial {
        loss += l;
        total.add_assign(g);
    }
    Ok((loss, total))
}

struct EvalSets {
    held_out: Vec<Graph>,
    ood: Vec<Vec<Graph>>,
    perms: Vec<Permutation>,
}

fn measure(
    config: &ExperimentConfig,
    params: &ModelParams,
    sets: &EvalSets,
    step_idx: u64,
    lr: f64,
    train_loss: f64,
) -> Result<(MetricsRow, EvalResult, Vec<EvalResult>, Option<ChannelReport>)> {
    let held = evaluate(params, &sets.held_out, config.threshold)?;
    let ood: Vec<EvalResult> = sets
        .ood
        .iter()
        .map(|gs| evaluate(params, gs, config.threshold))
        .collect::<Result<_>>()?;
    let channels = project_weights(params).ok();
    let shares = match &channels {
        Some(rep) => rep
            .layers
            .iter()
            .map(|l| {
                Some(LayerShares {
                    share_i: l.share_i,
                    share_j: l.share_j,
                    share_res: l.share_res,
                    proj_i: l.proj_energy_i,
                    proj_j: l.proj_energy_j,
                })
            })
            .collect(),
        None => vec![None; params.depth()],
    };
    let k = config.eval.equiv_graphs.min(sets.held_out.len());
    let cons = match cons_frob_on(params, &sets.held_out[..k], &sets.perms) {
        Ok(s) => Some(s.score),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let kl = LAYERWISE_GRAPHS.min(sets.held_out.len());
    let cons_layers = match layerwise_cons_frob_on(params, &sets.held_out[..kl], &sets.perms) {
        Ok(v) => v.into_iter().map(Some).collect(),
        Err(Error::Degenerate(_)) => vec![None; params.depth()],
        Err(e) => return Err(e),
    };
    let row = MetricsRow {
        step: step_idx,
        lr,
        train_loss,
        exact_match: held.exact_match,
        per_pair_acc: held.per_pair_acc,
        cons_frob: cons,
        shares,
        acc_by_distance: held.by_distance.iter().map(|b| b.accuracy()).collect(),
        acc_disc: held.disconnected.accuracy(),
        cons_frob_layers: cons_layers,
        ood: ood.iter().map(|r| (r.exact_match, r.per_pair_acc)).collect(),
    };
    Ok((row, held, ood, channels))
}

pub fn train(config: &ExperimentConfig) -> Result<TrainOutcome> {
    train_with(config, |_| {})
}

/// Runs a full training job; `on_row` sees every logged row as it is produced.
pub fn train_with(config: &ExperimentConfig, mut on_row: impl FnMut(&MetricsRow)) -> Result<TrainOutcome> {
    config.validate()?;
    let n = config.model.n;
    let mut params = config.model.build(seed::stream(config.seed, "init"))?;
    let mut opt = OptimizerState::new(config.optimizer, &params)?;

    let train_stream = seed::stream(config.seed, "train");
    let sets = EvalSets {
        held_out: dataset(&config.train, config.eval.held_out, seed::stream(config.seed, "eval"))?,
        ood: config
            .eval
            .ood
            .iter()
            .map(|o| dataset(&o.spec, config.eval.ood_count, seed::stream(config.seed, &format!("ood/{}", o.name))))
            .collect::<Result<_>>()?,
        perms: perm::sample(n, config.eval.num_perms, seed::stream(config.seed, "equiv")),
    };

    let (fixed, train_rho) = match config.data {
        DataRegime::Fixed { count } => {
            let graphs = dataset(&config.train, count, train_stream)?;
            let r = rho(&graphs, config.model.depth)?;
            (Some(graphs.iter().map(Example::new).collect::<Vec<_>>()), r)
        }
        DataRegime::Streaming { .. } => (None, rho(&sets.held_out, config.model.depth)?),
    };
    let streaming_batch = |t: u64, size: usize| -> Result<Vec<Example>> {
        let base = seed::derive(train_stream, t);
        Ok(dataset(&config.train, size, base)?.iter().map(Example::new).collect())
    };

    let norm = |batch: usize| -> f64 {
        let per = match config.reduction {
            Reduction::MeanGraphs => 1.0,
            Reduction::MeanPairs => (n * n) as f64,
        };
        1.0 / (batch as f64 * per)
    };

    let mut rows = Vec::new();
    let mut last = None;
    for t in 0..=config.total_steps {
        let owned;
        let batch: &[Example] = match (&fixed, config.data.clone()) {
            (Some(f), _) => f,
            (None, DataRegime::Streaming { batch_size }) => {
                owned = streaming_batch(t, batch_size)?;
                &owned
            }
            (None, DataRegime::Fixed { .. }) => unreachable!("fixed data is materialized above"),
        };
        let (loss_sum, mut grads) = batch_gradient(&params, batch).map_err(|e| match e {
            Error::NonFinite(m) => Error::NonFinite(format!("step {t}: {m}")),
            other => other,
        })?;
        let scale = norm(batch.len());
        let loss = loss_sum * scale;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at step {t}")));
        }
        let is_final = t == config.total_steps;
        if t % config.log_every == 0 || is_final {
            let (row, held, ood, channels) = measure(config, &params, &sets, t, opt.spec.lr_at(t), loss)?;
            on_row(&row);
            rows.push(row);
            if is_final {
                last = Some((held, ood, channels, loss));
            }
        }
        if is_final {
            break;
        }
        grads.scale(scale);
        step(&mut params, &grads, &mut opt)?;
    }

    let (held, ood, channels, final_loss) = last.expect("final step always measured");
    let mut checkpoint = Checkpoint::from_params(&params, config.total_steps);
    checkpoint.init = Some(config.model.init);
    checkpoint.optimizer = Some(opt);
    checkpoint.rng_state = format!("train_stream={train_stream:016x};next_step={}", config.total_steps);
    let config_json = serde_json::to_string(config)?;
    let cons = rows.last().and_then(|r| r.cons_frob);
    let summary = Summary {
        name: config.name.clone(),
        config: config.clone(),
        input_hash: content_hash(config_json.as_bytes()),
        steps: config.total_steps,
        final_loss,
        held_out: held,
        ood: config
            .eval
            .ood
            .iter()
            .zip(ood)
            .map(|(o, r)| NamedEval {
                name: o.name.clone(),
                result: r,
            })
            .collect(),
        channels,
        cons_frob: cons,
        train_rho,
    };
    Ok(TrainOutcome {
        params,
        rows,
        checkpoint,
        summary,
    })
}

/// Mean training loss of `params` on the given graphs under `reduction`.
pub fn mean_loss(params: &ModelParams, graphs: &[Graph], reduction: Reduction) -> Result<f64> {
    let n = params.n();
    let mut total = 0.0;
    for g in graphs {
        let z = forward(params, &augmented_adjacency(g))?.output;
        total += crate::grad::loss(&z, &connectivity(g).to_matrix(), params.link())?;
    }
    let per = match reduction {
        Reduction::MeanGraphs => 1.0,
        Reduction::MeanPairs => (n * n) as f64,
    };
    Ok(total / (graphs.len() as f64 * per))
}

/// Renders rows as an aligned text table (used for progress output).
pub fn describe_row(row: &MetricsRow) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "step {:>6}  lr {:.4}  loss {:.5}  exact {:.3}  pair {:.4}",
        row.step, row.lr, row.train_loss, row.exact_match, row.per_pair_acc
    );
    for (l, sh) in row.shares.iter().enumerate() {
        if let Some(sh) = sh {
            let _ = write!(s, "  l{} I {:.3} J {:.3} res {:.3}", l + 1, sh.share_i, sh.share_j, sh.share_res);
        }
    }
    s
}
