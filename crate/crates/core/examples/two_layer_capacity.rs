//! Long-running capacity check for a two-layer model on 24-node graphs.
//!
//! Trains with AdamW on freshly sampled ER graphs and then probes
//! per-distance accuracy. A two-layer model should be reliable (>= 99%)
//! exactly up to distance 9. Takes hours; not part of the test suite.
//!
//! ```text
//! cargo run --release -p connlab --example two_layer_capacity -- [steps] [p] [out_dir]
//! ```

use std::path::PathBuf;
use std::time::Instant;

use connlab::experiments::{
    capacity_probe, describe_row, train_with, DataRegime, ExperimentConfig, NamedSpec, ThresholdMode,
};
use connlab::grad::{OptimizerSpec, Schedule};
use connlab::graphs::DistributionSpec;

const N: usize = 24;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args.first().map(|s| s.parse()).transpose()?.unwrap_or(200_000);
    let p: f64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(0.08);
    let out = PathBuf::from(args.get(2).map_or("runs/two_layer_capacity", String::as_str));

    let mut c = ExperimentConfig::one_layer_recipe(0);
    c.name = "two_layer_capacity".into();
    c.model.depth = 2;
    c.model.n = N;
    c.train = DistributionSpec::er(N, p);
    c.data = DataRegime::Streaming { batch_size: 64 };
    c.eval.ood = vec![NamedSpec {
        name: "two_chain_k10".into(),
        spec: DistributionSpec::TwoChain { n: N, k: 10 },
    }];
    c.optimizer = OptimizerSpec::AdamW {
        lr: 1e-3,
        weight_decay: 0.0,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        schedule: Schedule::Cosine { total_steps: steps },
    };
    c.total_steps = steps;
    c.log_every = (steps / 100).max(1);
    c.validate()?;

    let t = Instant::now();
    let outcome = train_with(&c, |r| eprintln!("{:8.0}s {}", t.elapsed().as_secs_f64(), describe_row(r)))?;
    outcome.write_to(&out)?;

    let probe = capacity_probe(&outcome.params, &c.train, 4096, ThresholdMode::HalfProb, 1)?;
    println!("distance,count,accuracy,reliable");
    for r in &probe.rows {
        println!("{},{},{},{}", r.distance, r.count, r.accuracy.unwrap_or(f64::NAN), r.reliable);
    }
    let ok = probe.rows.iter().all(|r| r.insufficient || (r.distance <= 9) == r.reliable);
    println!("max_reliable_distance {:?}; capacity 9 {}", probe.max_reliable_distance, if ok { "confirmed" } else { "not confirmed" });
    println!("run written to {}", out.display());
    Ok(())
}
