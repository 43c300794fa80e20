use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{diameter, Graph};
use crate::error::{Error, Result};
use crate::perm::Permutation;
use crate::seed;

/// Rejection samplers give up after this many draws.
pub const REJECTION_BUDGET: u64 = 1_000_000;

/// A graph distribution. Every variant samples deterministically from a seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    /// Erdős–Rényi: each of the `n(n-1)/2` pairs independently with probability `p`.
    Er { n: usize, p: f64 },
    /// Two disjoint `k`-node paths, remaining nodes isolated, randomly relabeled.
    TwoChain { n: usize, k: usize },
    /// Two disjoint `k`-cliques, remaining nodes isolated, randomly relabeled.
    TwoClique { n: usize, k: usize },
    /// `base` conditioned on `diameter <= dmax`.
    DiamRestricted {
        base: Box<DistributionSpec>,
        dmax: u32,
    },
    /// `base` conditioned on `diameter > dmin`.
    DiamBeyond {
        base: Box<DistributionSpec>,
        dmin: u32,
    },
    /// Draw from `within` with probability `q`, else from `beyond`.
    Mixture {
        q: f64,
        within: Box<DistributionSpec>,
        beyond: Box<DistributionSpec>,
    },
}

impl DistributionSpec {
    pub fn er(n: usize, p: f64) -> Self {
        DistributionSpec::Er { n, p }
    }

    pub fn restricted(base: DistributionSpec, dmax: u32) -> Self {
        DistributionSpec::DiamRestricted {
            base: Box::new(base),
            dmax,
        }
    }

    pub fn beyond(base: DistributionSpec, dmin: u32) -> Self {
        DistributionSpec::DiamBeyond {
            base: Box::new(base),
            dmin,
        }
    }

    /// `q * (base | diam <= cap) + (1 - q) * (base | diam > cap)`.
    pub fn capacity_mixture(base: DistributionSpec, cap: u32, q: f64) -> Self {
        DistributionSpec::Mixture {
            q,
            within: Box::new(Self::restricted(base.clone(), cap)),
            beyond: Box::new(Self::beyond(base, cap)),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            DistributionSpec::Er { n, .. }
            | DistributionSpec::TwoChain { n, .. }
            | DistributionSpec::TwoClique { n, .. } => *n,
            DistributionSpec::DiamRestricted { base, .. }
            | DistributionSpec::DiamBeyond { base, .. } => base.n(),
            DistributionSpec::Mixture { within, .. } => within.n(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DistributionSpec::Er { n, p } => {
                Graph::empty(*n)?;
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::config(format!("edge probability {p} outside [0, 1]")));
                }
            }
            DistributionSpec::TwoChain { n, k } | DistributionSpec::TwoClique { n, k } => {
                Graph::empty(*n)?;
                if 2 * k > *n {
                    return Err(Error::config(format!("2k = {} exceeds n = {n}", 2 * k)));
                }
            }
            DistributionSpec::DiamRestricted { base, .. }
            | DistributionSpec::DiamBeyond { base, .. } => base.validate()?,
            DistributionSpec::Mixture { q, within, beyond } => {
                if !(0.0..=1.0).contains(q) {
                    return Err(Error::config(format!("mixture weight {q} outside [0, 1]")));
                }
                within.validate()?;
                beyond.validate()?;
                if within.n() != beyond.n() {
                    return Err(Error::config("mixture components disagree on n"));
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, seed: u64) -> Result<Graph> {
        match self {
            DistributionSpec::Er { n, p } => sample_er(*n, *p, seed),
            DistributionSpec::TwoChain { n, k } => {
                Ok(make_two_chain(*n, *k)?.permuted(&Permutation::random(*n, seed)))
            }
            DistributionSpec::TwoClique { n, k } => {
                Ok(make_two_clique(*n, *k)?.permuted(&Permutation::random(*n, seed)))
            }
            DistributionSpec::DiamRestricted { base, dmax } => {
                rejection_sample(base, seed, |d| d <= *dmax, "diameter <=", *dmax)
            }
            DistributionSpec::DiamBeyond { base, dmin } => {
                rejection_sample(base, seed, |d| d > *dmin, "diameter >", *dmin)
            }
            DistributionSpec::Mixture { q, within, beyond } => {
                let u: f64 = seed::rng(seed).gen();
                let sub = seed::derive(seed, 1);
                if u < *q {
                    within.sample(sub)
                } else {
                    beyond.sample(sub)
                }
            }
        }
    }
}

fn rejection_sample(
    base: &DistributionSpec,
    seed: u64,
    accept: impl Fn(u32) -> bool,
    what: &str,
    bound: u32,
) -> Result<Graph> {
    for attempt in 0..REJECTION_BUDGET {
        let g = base.sample(seed::derive(seed, attempt))?;
        if accept(diameter(&g)) {
            return Ok(g);
        }
    }
    Err(Error::config(format!(
        "no graph with {what} {bound} after {REJECTION_BUDGET} draws"
    )))
}

pub fn sample_er(n: usize, p: f64, seed: u64) -> Result<Graph> {
    DistributionSpec::Er { n, p }.validate()?;
    let mut g = Graph::empty(n)?;
    let mut rng = seed::rng(seed);
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                g.add_edge(u, v)?;
            }
        }
    }
    Ok(g)
}

/// Paths on `0..k` and `k..2k`; nodes `2k..n` isolated.
pub fn make_two_chain(n: usize, k: usize) -> Result<Graph> {
    DistributionSpec::TwoChain { n, k }.validate()?;
    let mut g = Graph::empty(n)?;
    g.add_path(0, k)?;
    g.add_path(k, k)?;
    Ok(g)
}

/// Cliques on `0..k` and `k..2k`; nodes `2k..n` isolated.
pub fn make_two_clique(n: usize, k: usize) -> Result<Graph> {
    DistributionSpec::TwoClique { n, k }.validate()?;
    let mut g = Graph::empty(n)?;
    g.add_clique(0, k)?;
    g.add_clique(k, k)?;
    Ok(g)
}

/// One graph per index `i` drawn with seed `derive(base_seed, i)`.
///
/// A top-level `Mixture` is sampled stratified: exactly `round(q * count)`
/// graphs come from `within` (the lowest indices) and the rest from `beyond`.
pub fn dataset(spec: &DistributionSpec, count: usize, base_seed: u64) -> Result<Vec<Graph>> {
    spec.validate()?;
    let draw = |i: usize| -> Result<Graph> {
        let s = seed::derive(base_seed, i as u64);
        match spec {
            DistributionSpec::Mixture { q, within, beyond } => {
                let n_within = (q * count as f64).round() as usize;
                if i < n_within {
                    within.sample(s)
                } else {
                    beyond.sample(s)
                }
            }
            other => other.sample(s),
        }
    };
    crate::par::try_map_range(count, draw)
}
