//! JSON checkpoints. Floats are written in shortest round-trip form and parsed
//! with correct rounding, so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InitScheme, Mode, ModelParams, StructuredLayer};
use crate::error::{Error, Result};
use crate::grad::{LinkParams, OptimizerState};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuredFactors {
    #[serde(rename = "A")]
    pub a: Vec<Matrix>,
    #[serde(rename = "B")]
    pub b: Vec<Matrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(rename = "L")]
    pub depth: usize,
    pub n: usize,
    pub mode: Mode,
    pub alpha: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub nonneg: bool,
    pub weights: Vec<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<StructuredFactors>,
    pub step: u64,
    /// Opaque; the trainer stores its data-stream position here.
    #[serde(default)]
    pub rng_state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitScheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams, step: u64) -> Self {
        Checkpoint {
            depth: params.depth(),
            n: params.n(),
            mode: params.mode(),
            alpha: params.link().alpha,
            epsilon: params.link().epsilon,
            nonneg: params.nonneg(),
            weights: params.weights().to_vec(),
            structured: params.structured_layers().map(|ls| StructuredFactors {
                a: ls.iter().map(|s| s.a.clone()).collect(),
                b: ls.iter().map(|s| s.b.clone()).collect(),
            }),
            step,
            rng_state: String::new(),
            init: None,
            optimizer: None,
        }
    }

    /// Rebuilds the parameters, checking the header against the stored tensors.
    pub fn params(&self) -> Result<ModelParams> {
        let link = LinkParams::new(self.alpha, self.epsilon)?;
        if self.weights.len() != self.depth {
            return Err(Error::shape(format!(
                "header says L = {} but {} weights are stored",
                self.depth,
                self.weights.len()
            )));
        }
        let mut p = match (self.mode, &self.structured) {
            (Mode::Dense, _) => ModelParams::dense(self.n, self.weights.clone(), link)?,
            (Mode::Structured, Some(f)) => {
                if f.a.len() != self.depth || f.b.len() != self.depth {
                    return Err(Error::shape("structured factor count does not match L"));
                }
                let layers = f
                    .a
                    .iter()
                    .zip(&f.b)
                    .map(|(a, b)| StructuredLayer { a: a.clone(), b: b.clone() })
                    .collect();
                let p = ModelParams::structured(self.n, layers, link)?;
                if p.weights() != self.weights.as_slice() {
                    return Err(Error::shape("stored weights differ from the materialized factors"));
                }
                p
            }
            (Mode::Structured, None) => return Err(Error::config("structured checkpoint without factors")),
        };
        if self.nonneg {
            if p.min_weight() < 0.0 {
                return Err(Error::config("nonneg checkpoint holds negative weights"));
            }
            p.set_nonneg(true);
        }
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
