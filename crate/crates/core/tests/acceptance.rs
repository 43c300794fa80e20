//! Acceptance criteria A1 to A11. Runs as a plain binary (`harness = false`)
//! so the PASS/FAIL lines are always printed. Pass criterion ids as
//! arguments (`cargo test --test acceptance -- A2 A9`) to run a subset.
//!
//! A4, A5, A6 and A11 train the one-layer recipe at full length and take
//! tens of minutes in a release-optimized test build.

use std::collections::HashMap;
use std::time::Instant;

use connlab::channels::{project_block, project_weights};
use connlab::equivariance::{cons_frob_on, layerwise_cons_frob_on};
use connlab::experiments::{
    capacity_probe, falsify_capacity, predict, rho_config, spearman, train, CapacityProbe, ExperimentConfig,
    ThresholdMode, TrainOutcome,
};
use connlab::grad::{backward, channel_push, grad_in_algebra_residual, loss, LinkParams};
use connlab::graphs::{
    augmented_adjacency, capacity, connectivity, dataset, power_support, sample_er, BoolMatrix, DistributionSpec, Graph,
};
use connlab::model::{blocks, forward, hidden_width, InitScheme, StructuredLayer};
use connlab::perm::{self, Permutation};
use connlab::{seed, Matrix, ModelParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn link() -> LinkParams {
    LinkParams::default()
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

fn random_structured(rng: &mut impl Rng, depth: usize, lo: f64, hi: f64) -> Vec<StructuredLayer> {
    (0..depth)
        .map(|l| {
            let k = blocks(l);
            StructuredLayer {
                a: random_matrix(rng, k, k, lo, hi),
                b: random_matrix(rng, k, k, lo, hi),
            }
        })
        .collect()
}

fn connected_er(n: usize, p: f64, mut s: u64) -> Graph {
    loop {
        let g = sample_er(n, p, s).unwrap();
        if g.is_connected() {
            return g;
        }
        s = seed::derive(s, 1);
    }
}

// A1

const A1_TOL: f64 = 1e-5;
const A1_INSTANCES: usize = 24;

fn a1() -> Verdict {
    let mut rng = seed::rng(seed::stream(1, "A1"));
    let mut worst: f64 = 0.0;
    let mut redrawn = 0;
    let mut done = 0;
    while done < A1_INSTANCES {
        let n = 2 + done % 5;
        let depth = 1 + done % 2;
        let g = sample_er(n, 0.4, rng.gen()).unwrap();
        let weights: Vec<Matrix> = (0..depth)
            .map(|l| {
                let d = hidden_width(l, n);
                random_matrix(&mut rng, d, d, -1.0, 1.0)
            })
            .collect();
        let params = ModelParams::dense(n, weights, link()).unwrap();
        let a = augmented_adjacency(&g);
        let trace = forward(&params, &a).unwrap();
        // a central difference straddling the ReLU kink is not a derivative
        if trace.scores.iter().any(|s| s.as_slice().iter().any(|x| x.abs() < 1e-4)) {
            redrawn += 1;
            continue;
        }
        let r = connectivity(&g).to_matrix();
        let (_, grads) = backward(&params, &a, &connectivity(&g)).unwrap();
        let f = |p: &ModelParams| loss(&forward(p, &a).unwrap().output, &r, p.link()).unwrap();
        let h = 1e-6;
        let (mut err, mut scale): (f64, f64) = (0.0, 0.0);
        for l in 0..depth {
            for idx in 0..grads.dw[l].as_slice().len() {
                let bump = |s: f64| {
                    let mut w = params.weights().to_vec();
                    w[l].as_mut_slice()[idx] += s;
                    ModelParams::dense(n, w, link()).unwrap()
                };
                let fd = (f(&bump(h)) - f(&bump(-h))) / (2.0 * h);
                let an = grads.dw[l].as_slice()[idx];
                err = err.max((fd - an).abs());
                scale = scale.max(an.abs());
            }
        }
        worst = worst.max(err / scale.max(1e-300));
        done += 1;
    }
    verdict(
        worst <= A1_TOL,
        format!("max relative error {worst:.2e} over {A1_INSTANCES} instances (tol {A1_TOL:e}, {redrawn} redrawn near the kink)"),
    )
}

// A2

fn a2() -> Verdict {
    let mut mismatches = 0;
    let mut checked = 0;
    for depth in [1usize, 2] {
        let cap = capacity(depth);
        for i in 0..200u64 {
            let n = 2 + (i as usize % 11);
            let p = [0.1, 0.2, 0.3, 0.5][i as usize % 4];
            let g = sample_er(n, p, seed::derive(seed::stream(2, "A2"), i)).unwrap();
            let params = ModelParams::init(depth, n, &InitScheme::Identity, 0, link()).unwrap();
            let a = augmented_adjacency(&g);
            let z = forward(&params, &a).unwrap().output;
            let want = power_support(&a, cap);
            let pred = predict(&z, params.link(), ThresholdMode::StrictPositive);
            let pred_ok = (0..n * n).all(|k| pred[k] == want.get(k / n, k % n));
            if BoolMatrix::support(&z) != want || !pred_ok {
                mismatches += 1;
            }
            checked += 1;
        }
    }
    verdict(mismatches == 0, format!("{mismatches} support mismatches on {checked} (graph, L) cases"))
}

// A3

fn a3() -> Verdict {
    let identity = |depth, n| ModelParams::init(depth, n, &InitScheme::Identity, 0, link()).unwrap();
    let mode = ThresholdMode::StrictPositive;
    let one = falsify_capacity(&identity(1, 5), 1, mode).unwrap();
    let one_ok = one.as_ref().is_some_and(|c| c.label == "chain of 5 nodes" && c.pair == (0, 4) && c.truth);
    // a 10-node chain spans 9 = 3^2 hops, inside the two-layer reach; the
    // shortest two-layer counterexample is the 10-hop chain on 11 nodes
    let within = falsify_capacity(&identity(2, 10), 2, mode).unwrap();
    let two = falsify_capacity(&identity(2, 11), 2, mode).unwrap();
    let two_ok = two.as_ref().is_some_and(|c| c.label == "chain of 11 nodes" && c.pair == (0, 10) && c.truth);
    let again = falsify_capacity(&identity(2, 11), 2, mode).unwrap();
    verdict(
        one_ok && within.is_none() && two_ok && again == two,
        format!(
            "L=1: {}; L=2 on 10 nodes: {}; L=2 on 11 nodes: {}",
            one.map_or("none".into(), |c| format!("{} pair {:?}", c.label, c.pair)),
            within.map_or("none (9 hops is within reach)".into(), |c| c.label),
            two.map_or("none".into(), |c| format!("{} pair {:?}", c.label, c.pair)),
        ),
    )
}

// A4, A5, A6, A11: full-length training runs

struct Runs {
    cache: HashMap<String, TrainOutcome>,
}

impl Runs {
    fn get(&mut self, key: &str, config: impl FnOnce() -> ExperimentConfig) -> &TrainOutcome {
        if !self.cache.contains_key(key) {
            let c = config();
            let t = Instant::now();
            let out = train(&c).unwrap_or_else(|e| panic!("training {key}: {e}"));
            println!("    trained {key} ({} steps) in {:.0}s", c.total_steps, t.elapsed().as_secs_f64());
            self.cache.insert(key.to_string(), out);
        }
        &self.cache[key]
    }
}

fn recipe() -> ExperimentConfig {
    ExperimentConfig::one_layer_recipe(0)
}

fn restricted() -> ExperimentConfig {
    let mut c = recipe();
    c.name = "one_layer_dmax3".into();
    c.train = DistributionSpec::restricted(c.train.clone(), 3);
    c
}

fn a4(runs: &mut Runs) -> Verdict {
    let out = runs.get("recipe", recipe);
    let j: Vec<(u64, f64)> = out.rows.iter().map(|r| (r.step, r.share_j(0).unwrap())).collect();
    let initial = j[0].1;
    let early_peak = j.iter().filter(|(s, _)| *s <= 1000).map(|x| x.1).fold(f64::MIN, f64::max);
    let peak = j.iter().map(|x| x.1).fold(f64::MIN, f64::max);
    let last = out.final_row();
    let (fi, fj, fr) = (last.share_i(0).unwrap(), last.share_j(0).unwrap(), last.share_res(0).unwrap());
    let rises = early_peak > initial;
    let falls = fj <= 0.7 * peak;
    verdict(
        rises && falls && fi > fj && fr < 0.10,
        format!(
            "share_J {initial:.3} -> peak {peak:.3} -> final {fj:.3} (drop {:.0}%); final share_I {fi:.3}, share_res {fr:.4}",
            100.0 * (1.0 - fj / peak)
        ),
    )
}

fn a5(runs: &mut Runs) -> Verdict {
    let out = runs.get("dmax3", restricted);
    let last = out.final_row();
    let (fi, fj) = (last.share_i(0).unwrap(), last.share_j(0).unwrap());
    let k2 = out.ood("two_chain_k2").unwrap().exact_match;
    let k3 = out.ood("two_chain_k3").unwrap().exact_match;
    verdict(
        fi >= 0.90 && fj <= 0.05 && k2 >= 0.95 && k3 >= 0.95,
        format!("share_I {fi:.4}, share_J {fj:.4}; two-chain exact match k=2 {k2:.3}, k=3 {k3:.3}"),
    )
}

fn probe_ok(p: &CapacityProbe) -> bool {
    let reliable = |d: usize| {
        let r = &p.rows[d - 1];
        !r.insufficient && r.accuracy.is_some_and(|a| a >= 0.99)
    };
    let fails = |d: usize| {
        let r = &p.rows[d - 1];
        !r.insufficient && r.accuracy.is_some_and(|a| a < 0.99)
    };
    reliable(1) && reliable(2) && reliable(3) && fails(4)
}

fn describe_probe(p: &CapacityProbe) -> String {
    (1..=4)
        .map(|d| {
            let r = &p.rows[d - 1];
            format!("d{d} {:.4} (n={})", r.accuracy.unwrap_or(f64::NAN), r.count)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Judged under `strict_positive`, the decision rule under which a pair
/// counts as certified; the `half_prob` table is reported alongside.
fn a6(runs: &mut Runs) -> Verdict {
    let spec = DistributionSpec::er(8, 0.2);
    let mut parts = Vec::new();
    let mut any = false;
    for (key, cfg) in [("dmax3", restricted as fn() -> ExperimentConfig), ("recipe", recipe)] {
        let params = runs.get(key, cfg).params.clone();
        for mode in [ThresholdMode::StrictPositive, ThresholdMode::HalfProb] {
            let p = capacity_probe(&params, &spec, 4096, mode, 6).unwrap();
            let ok = probe_ok(&p);
            if mode == ThresholdMode::StrictPositive {
                any |= ok;
            }
            parts.push(format!("{key} {mode:?}: {} [{}]", describe_probe(&p), if ok { "ok" } else { "no" }));
        }
    }
    verdict(any, parts.join("; "))
}

const A11_QS: [f64; 6] = [1.0, 0.95, 0.9, 0.8, 0.5, 0.0];

fn a11(runs: &mut Runs) -> Verdict {
    let mut share_i = Vec::new();
    let mut acc = Vec::new();
    let mut parts = Vec::new();
    for q in A11_QS {
        // q = 1 draws exactly the restricted training set, so the A5 run is reused
        let out = if q == 1.0 {
            runs.get("dmax3", restricted)
        } else {
            runs.get(&format!("q{q}"), || rho_config(&recipe(), q))
        };
        let last = out.final_row();
        let si = last.share_i(0).unwrap();
        let pair = last.ood.iter().map(|o| o.1).sum::<f64>() / last.ood.len() as f64;
        parts.push(format!("q={q}: rho {:.3} share_I {si:.3} ood {pair:.4}", out.summary.train_rho));
        share_i.push(si);
        acc.push(pair);
    }
    let s = spearman(&share_i, &acc);
    verdict(
        s.is_some_and(|s| s >= 0.8),
        format!("spearman {} ({})", s.map_or("undefined".into(), |s| format!("{s:.3}")), parts.join("; ")),
    )
}

// A7

fn a7() -> Verdict {
    let n = 4;
    let perms = perm::all(n);
    let mut rng = seed::rng(seed::stream(7, "A7"));
    let mut worst: f64 = 0.0;
    for i in 0..10u64 {
        let depth = 1 + (i as usize % 2);
        let params = ModelParams::structured(n, random_structured(&mut rng, depth, -0.5, 1.0), link()).unwrap();
        let g = sample_er(n, 0.5, seed::derive(seed::stream(7, "A7-graphs"), i)).unwrap();
        let shares = grad_in_algebra_residual(std::slice::from_ref(&g), &params).unwrap();
        worst = shares.iter().copied().fold(worst, f64::max);
    }
    verdict(
        worst <= 1e-10 && perms.len() == 24,
        format!("max residual share {worst:.2e} over 10 (graph, params) pairs, all 24 permutations"),
    )
}

// A8

fn a8() -> Verdict {
    let mut rng = seed::rng(seed::stream(8, "A8"));
    let mut max_push = f64::MIN;
    let mut worst_drop: f64 = 0.0;
    for i in 0..50u64 {
        let n = 4 + (i as usize % 5);
        let depth = 1 + (i as usize % 2);
        let g = connected_er(n, 0.35, seed::derive(seed::stream(8, "A8-graphs"), i));
        let layers = random_structured(&mut rng, depth, 0.0, 0.5);
        let params = ModelParams::structured(n, layers.clone(), link()).unwrap();
        let layer = i as usize % depth;
        let k = blocks(layer);
        let delta = random_matrix(&mut rng, k, k, 0.0, 1.0);
        max_push = max_push.max(channel_push(&params, &g, layer, &delta).unwrap().total);

        let a = augmented_adjacency(&g);
        let z0 = forward(&params, &a).unwrap().output;
        for step in [1e-3, 1e-2, 1e-1] {
            let mut moved = layers.clone();
            moved[layer].b.axpy(step, &delta);
            let z = forward(&ModelParams::structured(n, moved, link()).unwrap(), &a).unwrap().output;
            for (x, y) in z.as_slice().iter().zip(z0.as_slice()) {
                worst_drop = worst_drop.max(y - x);
            }
        }
    }
    verdict(
        max_push <= 1e-12 && worst_drop <= 1e-12,
        format!("max J push {max_push:.3e} (tol 1e-12); largest output drop {worst_drop:.3e} (tol 1e-12)"),
    )
}

// A9

/// Least squares over the basis `{E_pq ⊗ I, E_pq ⊗ J}` by a dense solve.
fn lstsq_coefficients(w: &Matrix, n: usize) -> (Matrix, Matrix) {
    let d = w.rows();
    let k = d / n;
    let cols = 2 * k * k;
    let mut design = DMatrix::<f64>::zeros(d * d, cols);
    for p in 0..k {
        for q in 0..k {
            let (ci, cj) = (p * k + q, k * k + p * k + q);
            for i in 0..n {
                for j in 0..n {
                    let row = (p * n + i) * d + q * n + j;
                    if i == j {
                        design[(row, ci)] = 1.0;
                    }
                    design[(row, cj)] = 1.0;
                }
            }
        }
    }
    let rhs = DVector::from_row_slice(w.as_slice());
    let normal = design.transpose() * &design;
    let x = normal.lu().solve(&(design.transpose() * rhs)).expect("basis is independent for n >= 2");
    (
        Matrix::from_fn(k, k, |p, q| x[p * k + q]),
        Matrix::from_fn(k, k, |p, q| x[k * k + p * k + q]),
    )
}

fn a9() -> Verdict {
    let mut rng = seed::rng(seed::stream(9, "A9"));
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let n = 2 + i % 5;
        let depth = 1 + i % 2;
        let weights: Vec<Matrix> = (0..depth)
            .map(|l| {
                let d = hidden_width(l, n);
                random_matrix(&mut rng, d, d, -1.0, 1.0)
            })
            .collect();
        let params = ModelParams::dense(n, weights, link()).unwrap();
        let report = project_weights(&params).unwrap();
        for (w, ch) in params.weights().iter().zip(&report.layers) {
            let (a, b) = lstsq_coefficients(w, n);
            let mut da = ch.a_hat.clone();
            da.sub_assign(&a);
            let mut db = ch.b_hat.clone();
            db.sub_assign(&b);
            worst = worst.max(da.max_abs()).max(db.max_abs());
        }
    }
    let mut exact = true;
    for (c, d) in [(1.5, 0.25), (-2.0, 0.5), (0.0, -0.75), (3.0, 3.0), (0.125, 0.0)] {
        for n in [2, 3, 4, 8] {
            let m = Matrix::from_fn(n, n, |i, j| if i == j { c } else { d });
            let p = project_block(&m).unwrap();
            exact &= p.a == c - d && p.b == d;
        }
    }
    verdict(
        worst <= 1e-10 && exact,
        format!("max coefficient gap vs dense solve {worst:.2e} on 50 weights (tol 1e-10); constant blocks exact: {exact}"),
    )
}

// A10

fn a10() -> Verdict {
    let mut rng = seed::rng(seed::stream(10, "A10"));
    let n = 6;
    let graphs = dataset(&DistributionSpec::er(n, 0.3), 16, seed::stream(10, "A10-graphs")).unwrap();
    let perms: Vec<Permutation> = perm::sample(n, 8, seed::stream(10, "A10-perms"));
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let params = ModelParams::structured(n, random_structured(&mut rng, 2, 0.0, 1.0), link()).unwrap();
        let out = cons_frob_on(&params, &graphs, &perms).unwrap();
        worst = worst.max((out.score - 1.0).abs());
        for s in layerwise_cons_frob_on(&params, &graphs, &perms).unwrap() {
            worst = worst.max((s - 1.0).abs());
        }
    }
    verdict(worst <= 1e-9, format!("max |ConsFrob - 1| {worst:.2e} at output and per layer (tol 1e-9)"))
}

type Criterion = Box<dyn Fn(&mut Runs) -> Verdict>;

fn main() {
    let wanted: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| a.starts_with('A'))
        .collect();
    let selected = |id: &str| wanted.is_empty() || wanted.iter().any(|w| w == id);
    let mut runs = Runs { cache: HashMap::new() };
    let criteria: Vec<(&str, &str, Criterion)> = vec![
        ("A1", "gradient vs central differences", Box::new(|_| a1())),
        ("A2", "identity model support law", Box::new(|_| a2())),
        ("A3", "capacity falsification", Box::new(|_| a3())),
        ("A4", "channel dynamics of the one-layer recipe", Box::new(a4)),
        ("A5", "diameter-restricted training", Box::new(a5)),
        ("A6", "capacity probe of a trained model", Box::new(a6)),
        ("A7", "gradient stays in the equivariant algebra", Box::new(|_| a7())),
        ("A8", "J-channel sign and monotonicity", Box::new(|_| a8())),
        ("A9", "projection vs dense least squares", Box::new(|_| a9())),
        ("A10", "equivariance of structured nonneg models", Box::new(|_| a10())),
        ("A11", "share_I vs OOD accuracy across mixtures", Box::new(a11)),
    ];
    let mut failed = Vec::new();
    for (id, title, run) in &criteria {
        if !selected(id) {
            continue;
        }
        let t = Instant::now();
        let v = run(&mut runs);
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("{id} {status} {title}: {} [{:.1}s]", v.detail, t.elapsed().as_secs_f64());
        if !v.pass {
            failed.push(*id);
        }
    }
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
