use std::fs;
use std::path::Path;

use super::config::{ExperimentConfig, NamedSpec};
use super::train::{train_with, MetricsRow, TrainOutcome};
use crate::error::{Error, Result};
use crate::graphs::{capacity, DistributionSpec};

pub struct LeverPoint {
    pub dmax: u32,
    pub outcome: TrainOutcome,
}

pub struct RhoPoint {
    pub q: f64,
    /// Beyond-capacity pair fraction of the realized training set.
    pub rho: f64,
    pub outcome: TrainOutcome,
}

/// Trains `base` once per `dmax` on `base.train | diameter <= dmax`.
pub fn data_lever_sweep(
    base: &ExperimentConfig,
    dmaxes: &[u32],
    mut on_row: impl FnMut(u32, &MetricsRow),
) -> Result<Vec<LeverPoint>> {
    dmaxes
        .iter()
        .map(|&dmax| {
            let mut c = base.clone();
            c.name = format!("{}_dmax{dmax}", base.name);
            c.train = DistributionSpec::restricted(base.train.clone(), dmax);
            let outcome = train_with(&c, |r| on_row(dmax, r))?;
            Ok(LeverPoint { dmax, outcome })
        })
        .collect()
}

/// Mixture of within- and beyond-capacity graphs of `base.train` at each `q`.
pub fn rho_config(base: &ExperimentConfig, q: f64) -> ExperimentConfig {
    let cap = capacity(base.model.depth) as u32;
    let mut c = base.clone();
    c.name = format!("{}_q{q}", base.name);
    c.train = DistributionSpec::capacity_mixture(base.train.clone(), cap, q);
    c
}

pub fn rho_sweep(base: &ExperimentConfig, qs: &[f64], mut on_row: impl FnMut(f64, &MetricsRow)) -> Result<Vec<RhoPoint>> {
    qs.iter()
        .map(|&q| {
            let outcome = train_with(&rho_config(base, q), |r| on_row(q, r))?;
            Ok(RhoPoint {
                q,
                rho: outcome.summary.train_rho,
                outcome,
            })
        })
        .collect()
}

/// Average ranks, ties sharing the mean of their positions (1-based).
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson on average ranks). `None` when either
/// side is constant or the lengths differ.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let m = (xs.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - m) * (b - m);
        sxx += (a - m) * (a - m);
        syy += (b - m) * (b - m);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn summary_header(config: &ExperimentConfig, key: &str) -> String {
    let mut cols = vec![key.to_string(), "train_rho".into(), "final_loss".into(), "exact_match".into(), "per_pair_acc".into(), "cons_frob".into()];
    for l in 1..=config.model.depth {
        cols.extend([format!("share_I_l{l}"), format!("share_J_l{l}"), format!("share_res_l{l}")]);
    }
    for NamedSpec { name, .. } in &config.eval.ood {
        cols.extend([format!("ood_{name}_exact_match"), format!("ood_{name}_per_pair_acc")]);
    }
    cols.join(",")
}

fn summary_line(key: String, o: &TrainOutcome) -> String {
    let r = o.final_row();
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut cols = vec![
        key,
        o.summary.train_rho.to_string(),
        o.summary.final_loss.to_string(),
        r.exact_match.to_string(),
        r.per_pair_acc.to_string(),
        opt(r.cons_frob),
    ];
    for l in 0..r.shares.len() {
        cols.extend([opt(r.share_i(l)), opt(r.share_j(l)), opt(r.share_res(l))]);
    }
    for (em, pp) in &r.ood {
        cols.extend([em.to_string(), pp.to_string()]);
    }
    cols.join(",")
}

fn write_sweep<'a>(
    dir: &Path,
    base: &ExperimentConfig,
    key: &str,
    points: impl Iterator<Item = (String, &'a TrainOutcome)>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut summary = summary_header(base, key);
    summary.push('\n');
    for (k, o) in points {
        o.write_to(&dir.join(format!("{key}_{k}")))?;
        summary.push_str(&summary_line(k, o));
        summary.push('\n');
    }
    fs::write(dir.join("summary.csv"), summary)?;
    Ok(())
}

/// One run directory per `dmax` plus `summary.csv`.
pub fn write_lever_sweep(dir: &Path, base: &ExperimentConfig, points: &[LeverPoint]) -> Result<()> {
    write_sweep(dir, base, "dmax", points.iter().map(|p| (p.dmax.to_string(), &p.outcome)))
}

/// One run directory per `q` plus `summary.csv`.
pub fn write_rho_sweep(dir: &Path, base: &ExperimentConfig, points: &[RhoPoint]) -> Result<()> {
    if points.iter().any(|p| !(0.0..=1.0).contains(&p.q)) {
        return Err(Error::config("q outside [0, 1]"));
    }
    write_sweep(dir, base, "q", points.iter().map(|p| (p.q.to_string(), &p.outcome)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
        // ties: ranks (1.5, 1.5, 3) vs (1, 2, 3)
        let s = spearman(&[5.0, 5.0, 9.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((s - 0.866_025_403_784_438_6).abs() < 1e-12);
    }

    #[test]
    fn average_ranks() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn rho_config_extremes() {
        let base = ExperimentConfig::one_layer_recipe(0);
        let c = rho_config(&base, 1.0);
        let gs = crate::graphs::dataset(&c.train, 200, 3).unwrap();
        assert_eq!(crate::graphs::rho(&gs, 1).unwrap(), 0.0);
        let c = rho_config(&base, 0.0);
        let gs = crate::graphs::dataset(&c.train, 200, 3).unwrap();
        assert!(gs.iter().all(|g| crate::graphs::diameter(g) > 3));
    }
}
