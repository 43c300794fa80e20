use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use connlab::equivariance::{cons_frob, layerwise_cons_frob_on};
use connlab::experiments::{
    capacity_probe, data_lever_sweep, describe_row, falsify_capacity, rho_sweep, spearman, train_with,
    write_lever_sweep, write_rho_sweep, ExperimentConfig,
};
use connlab::graphs::{dataset, jsonl, DistributionSpec};
use connlab::model::checkpoint::Checkpoint;
use connlab::{channels, perm, seed, ModelParams};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::manifest::{unique_dir, RunManifest};
use crate::{EquivArgs, FalsifyArgs, GenArgs, ProbeArgs, ProjectArgs, RunArgs, SweepArgs, SweepKind};

pub const SEED_ENV: &str = "CONNLAB_SEED";

/// Inline JSON, or `@path` naming a JSON file.
fn json_arg<T: DeserializeOwned>(arg: &str) -> Result<T> {
    let text = match arg.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).with_context(|| format!("reading {path}"))?,
        None => arg.to_string(),
    };
    serde_json::from_str(&text)
        .map_err(connlab::Error::from)
        .context("parsing JSON argument")
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, &text)
}

fn load_params(path: &Path) -> Result<ModelParams> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(ck.params()?)
}

fn default_dist(params: &ModelParams, dist: Option<&str>) -> Result<DistributionSpec> {
    match dist {
        Some(d) => json_arg(d),
        None => Ok(DistributionSpec::er(params.n(), 0.2)),
    }
}

/// Reads an experiment config, accepting a run manifest in its place, then
/// applies the seed override from the environment.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => match serde_json::from_str::<RunManifest>(&text) {
            Ok(m) => m.config,
            Err(_) => return Err(e).with_context(|| format!("parsing {}", path.display())),
        },
    };
    if let Ok(s) = std::env::var(SEED_ENV) {
        config.seed = s
            .trim()
            .parse()
            .map_err(|_| connlab::Error::Config(format!("{SEED_ENV}={s:?} is not a u64")))?;
    }
    config.validate()?;
    Ok(config)
}

/// Output directory with its manifest already on disk.
fn start_run(command: &str, args: &RunArgs, config: &ExperimentConfig) -> Result<PathBuf> {
    let dir = unique_dir(&args.out_root, &config.name)?;
    RunManifest::new(command, &args.config, config, &dir).write()?;
    Ok(dir)
}

pub fn gen(args: &GenArgs) -> Result<()> {
    let spec: DistributionSpec = json_arg(&args.dist)?;
    let graphs = dataset(&spec, args.count, args.seed)?;
    let seeds: Vec<u64> = (0..args.count as u64).map(|i| seed::derive(args.seed, i)).collect();
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    jsonl::write_dataset(&mut w, &graphs, &seeds)?;
    w.flush()?;
    Ok(())
}

pub fn train(args: &RunArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let dir = start_run("train", args, &config)?;
    let quiet = args.quiet;
    let outcome = train_with(&config, |row| {
        if !quiet {
            eprintln!("{}", describe_row(row));
        }
    })?;
    outcome.write_to(&dir)?;
    println!("{}", dir.display());
    Ok(())
}

pub fn probe(args: &ProbeArgs) -> Result<()> {
    let params = load_params(&args.checkpoint)?;
    let spec = default_dist(&params, args.dist.as_deref())?;
    let table = capacity_probe(&params, &spec, args.graphs, args.threshold.into(), args.seed)?;
    match table.max_reliable_distance {
        Some(d) => eprintln!("max_reliable_distance={d}"),
        None => eprintln!("max_reliable_distance=none"),
    }
    if args.csv {
        let mut s = String::from("distance,count,accuracy,reliable,insufficient\n");
        for r in &table.rows {
            let acc = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{}", r.distance, r.count, acc, r.reliable, r.insufficient);
        }
        let disc = &table.eval.disconnected;
        let acc = disc.accuracy().map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(s, "disc,{},{},,", disc.count, acc);
        emit(args.out.as_deref(), &s)
    } else {
        emit_json(args.out.as_deref(), &table)
    }
}

pub fn project(args: &ProjectArgs) -> Result<()> {
    let params = load_params(&args.checkpoint)?;
    let report = channels::project_weights(&params)?;
    if args.csv {
        let mut s = String::from("layer,share_I,share_J,share_res,residual_norm,proj_I,proj_J\n");
        for (l, c) in report.layers.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                l + 1,
                c.share_i,
                c.share_j,
                c.share_res,
                c.residual_norm,
                c.proj_energy_i,
                c.proj_energy_j
            );
        }
        emit(args.out.as_deref(), &s)
    } else {
        emit_json(args.out.as_deref(), &report)
    }
}

pub fn equiv(args: &EquivArgs) -> Result<()> {
    let params = load_params(&args.checkpoint)?;
    let spec = default_dist(&params, args.dist.as_deref())?;
    let mut score = cons_frob(&params, &spec, args.graphs, args.perms, args.seed)?;
    if args.layerwise {
        // same streams as cons_frob, so both scores see the same draws
        let graphs = dataset(&spec, args.graphs, seed::stream(args.seed, "equiv-graphs"))?;
        let perms = perm::sample(params.n(), args.perms, seed::stream(args.seed, "equiv-perms"));
        score.per_layer = Some(layerwise_cons_frob_on(&params, &graphs, &perms)?);
    }
    emit_json(args.out.as_deref(), &score)
}

#[derive(Serialize)]
struct FalsifyReport {
    found: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pair: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<(usize, usize)>>,
}

pub fn falsify(args: &FalsifyArgs) -> Result<()> {
    let params = load_params(&args.checkpoint)?;
    let depth = args.depth.unwrap_or(params.depth());
    let report = match falsify_capacity(&params, depth, args.threshold.into())? {
        Some(c) => FalsifyReport {
            found: true,
            label: Some(c.label),
            pair: Some(c.pair),
            truth: Some(c.truth),
            n: Some(c.graph.n()),
            edges: Some(c.graph.edges()),
        },
        None => FalsifyReport {
            found: false,
            label: None,
            pair: None,
            truth: None,
            n: None,
            edges: None,
        },
    };
    emit_json(args.out.as_deref(), &report)
}

const DEFAULT_DMAX: [f64; 3] = [2.0, 3.0, 4.0];
const DEFAULT_Q: [f64; 6] = [1.0, 0.95, 0.9, 0.8, 0.5, 0.0];

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let config = load_config(&args.run.config)?;
    let quiet = args.run.quiet;
    match args.kind {
        SweepKind::Diam => {
            let values = if args.values.is_empty() { DEFAULT_DMAX.to_vec() } else { args.values.clone() };
            let dmaxes = values
                .iter()
                .map(|&v| {
                    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                        Ok(v as u32)
                    } else {
                        Err(connlab::Error::Config(format!("dmax {v} is not a non-negative integer")))
                    }
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let dir = start_run("sweep diam", &args.run, &config)?;
            let points = data_lever_sweep(&config, &dmaxes, |d, row| {
                if !quiet {
                    eprintln!("dmax {d}  {}", describe_row(row));
                }
            })?;
            write_lever_sweep(&dir, &config, &points)?;
            println!("{}", dir.display());
        }
        SweepKind::Rho => {
            let qs = if args.values.is_empty() { DEFAULT_Q.to_vec() } else { args.values.clone() };
            if let Some(q) = qs.iter().find(|q| !(0.0..=1.0).contains(*q)) {
                return Err(connlab::Error::Config(format!("q = {q} outside [0, 1]")).into());
            }
            let dir = start_run("sweep rho", &args.run, &config)?;
            let points = rho_sweep(&config, &qs, |q, row| {
                if !quiet {
                    eprintln!("q {q}  {}", describe_row(row));
                }
            })?;
            write_rho_sweep(&dir, &config, &points)?;
            let share_i: Vec<f64> = points
                .iter()
                .map(|p| p.outcome.final_row().share_i(0).unwrap_or(0.0))
                .collect();
            let acc: Vec<f64> = points
                .iter()
                .map(|p| p.outcome.final_row().ood.iter().map(|o| o.1).sum::<f64>() / p.outcome.final_row().ood.len().max(1) as f64)
                .collect();
            match spearman(&share_i, &acc) {
                Some(s) => eprintln!("spearman(share_I_l1, mean OOD per-pair accuracy) = {s:.4}"),
                None => eprintln!("spearman undefined (constant column)"),
            }
            println!("{}", dir.display());
        }
    }
    Ok(())
}
