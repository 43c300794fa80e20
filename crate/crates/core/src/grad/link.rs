use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Constants of the floored link `phi(z) = 1 - (1 - epsilon) * exp(-alpha * z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub alpha: f64,
    pub epsilon: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            alpha: 1.0,
            epsilon: 1e-4,
        }
    }
}

impl LinkParams {
    pub fn new(alpha: f64, epsilon: f64) -> Result<Self> {
        let lp = LinkParams { alpha, epsilon };
        lp.validate()?;
        Ok(lp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::config(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    #[inline]
    fn phi(&self, z: f64) -> f64 {
        self.epsilon - (1.0 - self.epsilon) * (-self.alpha * z).exp_m1()
    }

    /// `ln(phi(z))`, accurate when `phi` is near 1.
    #[inline]
    fn ln_phi(&self, z: f64) -> f64 {
        (-(1.0 - self.epsilon) * (-self.alpha * z).exp()).ln_1p()
    }

    /// `ln(1 - phi(z))` in closed form.
    #[inline]
    fn ln_one_minus_phi(&self, z: f64) -> f64 {
        (-self.epsilon).ln_1p() - self.alpha * z
    }

    /// Score above which `phi(z) > 1/2`.
    pub fn half_prob_cutoff(&self) -> f64 {
        (2.0 * (1.0 - self.epsilon)).ln() / self.alpha
    }
}

/// `phi_eps(z)` for a score `z >= 0`.
pub fn link(z: f64, lp: &LinkParams) -> Result<f64> {
    check_score(z)?;
    Ok(lp.phi(z))
}

fn check_score(z: f64) -> Result<()> {
    if !z.is_finite() {
        return Err(Error::NonFinite(format!("score {z}")));
    }
    if z < 0.0 {
        return Err(Error::Refused(format!("negative score {z} passed to the link")));
    }
    Ok(())
}

fn check_pair(z: &Matrix, r: &Matrix) -> Result<()> {
    if z.shape() != r.shape() || z.rows() != z.cols() {
        return Err(Error::shape(format!(
            "scores {:?} vs targets {:?}",
            z.shape(),
            r.shape()
        )));
    }
    Ok(())
}

/// Entrywise Bernoulli cross-entropy, summed over all `n^2` pairs.
pub fn loss(z: &Matrix, r: &Matrix, lp: &LinkParams) -> Result<f64> {
    check_pair(z, r)?;
    let mut total = 0.0;
    for (&zij, &rij) in z.as_slice().iter().zip(r.as_slice()) {
        check_score(zij)?;
        total -= if rij > 0.5 {
            lp.ln_phi(zij)
        } else {
            lp.ln_one_minus_phi(zij)
        };
    }
    Ok(total)
}

/// `dL/dZ = alpha * (1 - R / phi_eps(Z))`.
pub fn loss_grad_z(z: &Matrix, r: &Matrix, lp: &LinkParams) -> Result<Matrix> {
    check_pair(z, r)?;
    let mut g = Matrix::zeros(z.rows(), z.cols());
    for ((out, &zij), &rij) in g.as_mut_slice().iter_mut().zip(z.as_slice()).zip(r.as_slice()) {
        check_score(zij)?;
        *out = lp.alpha * (1.0 - rij / lp.phi(zij));
    }
    Ok(g)
}

/// Loss and its gradient in one pass, one `exp` per entry.
pub fn loss_and_grad(z: &Matrix, r: &Matrix, lp: &LinkParams) -> Result<(f64, Matrix)> {
    check_pair(z, r)?;
    let mut total = 0.0;
    let mut g = Matrix::zeros(z.rows(), z.cols());
    let keep = 1.0 - lp.epsilon;
    for ((out, &zij), &rij) in g.as_mut_slice().iter_mut().zip(z.as_slice()).zip(r.as_slice()) {
        check_score(zij)?;
        let e = (-lp.alpha * zij).exp();
        if rij > 0.5 {
            total -= (-keep * e).ln_1p();
            // phi = 1 - keep * e; the epsilon floor keeps it away from 0
            *out = lp.alpha * (1.0 - rij / (1.0 - keep * e));
        } else {
            total -= lp.ln_one_minus_phi(zij);
            *out = lp.alpha * (1.0 - rij / lp.phi(zij));
        }
    }
    Ok((total, g))
}
