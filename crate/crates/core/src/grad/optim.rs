use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::GradientSet;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// `lr * (1 + cos(pi t / T)) / 2`, and 0 for `t >= T`.
    Cosine { total_steps: u64 },
}

impl Schedule {
    pub fn factor(&self, t: u64) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::Cosine { total_steps } => {
                if t >= total_steps {
                    0.0
                } else {
                    0.5 * (1.0 + (PI * t as f64 / total_steps as f64).cos())
                }
            }
        }
    }
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_schedule() -> Schedule {
    Schedule::Constant
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    Gd {
        lr: f64,
        #[serde(default = "default_schedule")]
        schedule: Schedule,
    },
    /// Decoupled weight decay: `w *= 1 - lr * wd` before the moment update.
    #[serde(rename = "adamw")]
    AdamW {
        lr: f64,
        #[serde(default)]
        weight_decay: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_schedule")]
        schedule: Schedule,
    },
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<()> {
        let (lr, ok) = match *self {
            OptimizerSpec::Gd { lr, .. } => (lr, true),
            OptimizerSpec::AdamW {
                lr,
                weight_decay,
                beta1,
                beta2,
                eps,
                ..
            } => (
                lr,
                (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0 && weight_decay >= 0.0,
            ),
        };
        if !(lr >= 0.0 && lr.is_finite()) || !ok {
            return Err(Error::config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        match *self {
            OptimizerSpec::Gd { schedule, .. } | OptimizerSpec::AdamW { schedule, .. } => schedule,
        }
    }

    pub fn base_lr(&self) -> f64 {
        match *self {
            OptimizerSpec::Gd { lr, .. } | OptimizerSpec::AdamW { lr, .. } => lr,
        }
    }

    /// Learning rate applied at step `t` (0-based).
    pub fn lr_at(&self, t: u64) -> f64 {
        self.base_lr() * self.schedule().factor(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub spec: OptimizerSpec,
    pub step: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m: Vec<Matrix>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub v: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(spec: OptimizerSpec, params: &ModelParams) -> Result<Self> {
        spec.validate()?;
        let (m, v) = match spec {
            OptimizerSpec::Gd { .. } => (Vec::new(), Vec::new()),
            OptimizerSpec::AdamW { .. } => {
                let zeros: Vec<Matrix> = params.trainable().iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect();
                (zeros.clone(), zeros)
            }
        };
        Ok(OptimizerState { spec, step: 0, m, v })
    }
}

/// One update in place; returns the learning rate that was applied.
pub fn step(params: &mut ModelParams, grads: &GradientSet, state: &mut OptimizerState) -> Result<f64> {
    let gs = grads.trainable();
    let shapes_ok = {
        let ts = params.trainable();
        ts.len() == gs.len() && ts.iter().zip(&gs).all(|(a, b)| a.shape() == b.shape())
    };
    if !shapes_ok {
        return Err(Error::shape("gradients do not match parameters"));
    }
    let t = state.step;
    let lr = state.spec.lr_at(t);
    match state.spec {
        OptimizerSpec::Gd { .. } => params.update_trainable(|ws| {
            for (w, g) in ws.iter_mut().zip(&gs) {
                w.axpy(-lr, g);
            }
        }),
        OptimizerSpec::AdamW {
            weight_decay,
            beta1,
            beta2,
            eps,
            ..
        } => {
            if state.m.len() != gs.len() {
                return Err(Error::shape("optimizer moments do not match parameters"));
            }
            let k = (t + 1) as i32;
            let c1 = 1.0 - beta1.powi(k);
            let c2 = 1.0 - beta2.powi(k);
            let (ms, vs) = (&mut state.m, &mut state.v);
            params.update_trainable(|ws| {
                for (((w, g), m), v) in ws.iter_mut().zip(&gs).zip(ms.iter_mut()).zip(vs.iter_mut()) {
                    let w = w.as_mut_slice();
                    let iter = w
                        .iter_mut()
                        .zip(g.as_slice())
                        .zip(m.as_mut_slice())
                        .zip(v.as_mut_slice());
                    for (((wi, &gi), mi), vi) in iter {
                        *wi *= 1.0 - lr * weight_decay;
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        let mh = *mi / c1;
                        let vh = *vi / c2;
                        *wi -= lr * mh / (vh.sqrt() + eps);
                    }
                }
            });
        }
    }
    state.step += 1;
    Ok(lr)
}
