use serde::{Deserialize, Serialize};

use super::ThresholdMode;
use crate::error::{Error, Result};
use crate::grad::{LinkParams, OptimizerSpec, Schedule};
use crate::graphs::DistributionSpec;
use crate::model::{InitScheme, ModelParams};

fn default_alpha() -> f64 {
    LinkParams::default().alpha
}
fn default_epsilon() -> f64 {
    LinkParams::default().epsilon
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(rename = "L")]
    pub depth: usize,
    pub n: usize,
    #[serde(default)]
    pub init: InitScheme,
    #[serde(default)]
    pub nonneg: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl ModelSpec {
    pub fn link(&self) -> Result<LinkParams> {
        LinkParams::new(self.alpha, self.epsilon)
    }

    pub fn build(&self, seed: u64) -> Result<ModelParams> {
        let mut p = ModelParams::init(self.depth, self.n, &self.init, seed, self.link()?)?;
        p.set_nonneg(self.nonneg);
        Ok(p)
    }
}

/// How training graphs are supplied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataRegime {
    /// A fixed set used in full every step.
    Fixed { count: usize },
    /// Fresh graphs every step.
    Streaming { batch_size: usize },
}

/// How the per-pair losses of a batch are combined into the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Sum over pairs, mean over graphs.
    MeanGraphs,
    /// Mean over graphs and over the `n^2` pairs.
    #[default]
    MeanPairs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSpec {
    pub name: String,
    pub spec: DistributionSpec,
}

fn default_held_out() -> usize {
    512
}
fn default_num_perms() -> usize {
    crate::equivariance::DEFAULT_NUM_PERMS
}
fn default_equiv_graphs() -> usize {
    crate::equivariance::DEFAULT_NUM_GRAPHS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Held-out graphs from the training distribution, redrawn from a disjoint stream.
    #[serde(default = "default_held_out")]
    pub held_out: usize,
    /// Out-of-distribution sets, evaluated at every log step.
    #[serde(default)]
    pub ood: Vec<NamedSpec>,
    #[serde(default = "default_held_out")]
    pub ood_count: usize,
    #[serde(default = "default_num_perms")]
    pub num_perms: usize,
    #[serde(default = "default_equiv_graphs")]
    pub equiv_graphs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            held_out: default_held_out(),
            ood: Vec::new(),
            ood_count: default_held_out(),
            num_perms: default_num_perms(),
            equiv_graphs: default_equiv_graphs(),
        }
    }
}

fn default_name() -> String {
    "run".into()
}
fn default_log_every() -> u64 {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub model: ModelSpec,
    pub train: DistributionSpec,
    pub data: DataRegime,
    #[serde(default)]
    pub eval: EvalConfig,
    pub optimizer: OptimizerSpec,
    pub total_steps: u64,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub reduction: Reduction,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threshold: ThresholdMode,
}

impl ExperimentConfig {
    /// The one-layer recipe: ER(8, 0.2), 4096 fixed graphs, full-batch GD at
    /// lr 0.1 with cosine decay over 10^4 steps.
    pub fn one_layer_recipe(seed: u64) -> Self {
        let total_steps = 10_000;
        ExperimentConfig {
            name: "one_layer".into(),
            model: ModelSpec {
                depth: 1,
                n: 8,
                init: InitScheme::default(),
                nonneg: false,
                alpha: default_alpha(),
                epsilon: default_epsilon(),
            },
            train: DistributionSpec::er(8, 0.2),
            data: DataRegime::Fixed { count: 4096 },
            eval: EvalConfig {
                ood: (2..=4)
                    .map(|k| NamedSpec {
                        name: format!("two_chain_k{k}"),
                        spec: DistributionSpec::TwoChain { n: 8, k },
                    })
                    .collect(),
                ..EvalConfig::default()
            },
            optimizer: OptimizerSpec::Gd {
                lr: 0.1,
                schedule: Schedule::Cosine { total_steps },
            },
            total_steps,
            log_every: 100,
            reduction: Reduction::default(),
            seed,
            threshold: ThresholdMode::HalfProb,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::config("total_steps must be at least 1"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every must be at least 1"));
        }
        match self.data {
            DataRegime::Fixed { count: 0 } | DataRegime::Streaming { batch_size: 0 } => {
                return Err(Error::config("training batch must be nonempty"));
            }
            _ => {}
        }
        self.train.validate()?;
        self.optimizer.validate()?;
        self.model.link()?;
        let n = self.model.n;
        if self.train.n() != n {
            return Err(Error::config(format!("train distribution has n = {}, model n = {n}", self.train.n())));
        }
        for o in &self.eval.ood {
            o.spec.validate()?;
            if o.spec.n() != n {
                return Err(Error::config(format!("eval set {} has n = {}, model n = {n}", o.name, o.spec.n())));
            }
        }
        if self.eval.held_out == 0 {
            return Err(Error::config("held_out must be at least 1"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(s).map_err(|e| Error::config(e.to_string()))?;
        Ok(c)
    }
}
