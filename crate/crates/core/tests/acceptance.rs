//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; exits non-zero if any check fails.
//!
//! Pass substrings as arguments to run a subset. Set `TIMBRE_CORPUS` to a
//! corpus root to include the full-data ordering run.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use timbre_core::dataset::{build_cache, make_split, scan, ClassTable, SplitRatios};
use timbre_core::dsp::{
    fit_norm_stats, mel_filterbank, normalize_patch, read_cache, stft_magnitude, trim_and_crop, write_cache,
    AudioClip, CacheEntry, DspError, DspParams, FeatureCache, FrontEnd, LogMelPatch, LogMelSpectrogram, Matrix,
};
use timbre_core::eval::{self, confusion, per_class_metrics, weighted_average, EvalReport};
use timbre_core::models::{build, load_checkpoint, save_checkpoint, Model, ModelSpec};
use timbre_core::nn::{
    linear_forward, multi_head_attention, scaled_dot_product_attention, AttentionParams, AttentionVars, LinearVars,
};
use timbre_core::synth::{class_clip, SynthParams};
use timbre_core::tensor::{grad_check, grad_check_coords, Graph, Tensor, TensorError, Var};
use timbre_core::trainer::{self, run_ablation, TrainConfig, TrainOptions};
use timbre_core::Rng;

type Check = fn() -> Result<String, String>;

fn main() {
    let checks: Vec<(&str, Check)> = vec![
        ("parameter-counts", parameter_counts),
        ("gradient-suite", gradient_suite),
        ("attention-stochasticity", attention_stochasticity),
        ("permutation-equivariance", permutation_equivariance),
        ("loss-sanity", loss_sanity),
        ("overfit-smoke", overfit_smoke),
        ("synthetic-separability", synthetic_separability),
        ("metrics-oracle", metrics_oracle),
        ("dsp-oracles", dsp_oracles),
        ("serialization", serialization),
        ("full-data-ordering", full_data_ordering),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<_> = checks
        .into_iter()
        .filter(|(name, _)| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str())))
        .collect();

    let results: Vec<(&str, f64, Result<String, String>)> = std::thread::scope(|s| {
        let handles: Vec<_> = selected
            .iter()
            .map(|&(name, check)| {
                s.spawn(move || {
                    let t = Instant::now();
                    let r = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
                    (name, t.elapsed().as_secs_f64(), r)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut failed = 0;
    for (name, secs, r) in &results {
        match r {
            Ok(detail) if detail.starts_with("SKIP") => println!("SKIP {name:<26} {detail} ({secs:.1}s)"),
            Ok(detail) => println!("PASS {name:<26} {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name:<26} {detail} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} checks, {} failed", results.len(), failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- helpers

fn synth_patches(n_classes: usize, per_class: usize, seed: u64) -> Vec<(usize, LogMelPatch)> {
    let front = FrontEnd::new(DspParams::default()).unwrap();
    let params = SynthParams::default();
    let mut out = Vec::new();
    for c in 0..n_classes {
        let mut rng = Rng::derive(seed, c as u64);
        for _ in 0..per_class {
            let clip = class_clip(c, n_classes, &mut rng, &params);
            out.push((c, front.patch(&clip).unwrap()));
        }
    }
    out
}

/// Normalizes every set with statistics fitted on the first.
fn to_caches(sets: &[Vec<(usize, LogMelPatch)>]) -> Vec<FeatureCache> {
    let stats = fit_norm_stats(sets[0].iter().map(|(_, p)| p)).unwrap();
    sets.iter()
        .map(|set| {
            let mut cache = FeatureCache::new(128, 22);
            for (i, (c, p)) in set.iter().enumerate() {
                cache.entries.push(CacheEntry {
                    class_index: *c as u32,
                    path: format!("synth_{c}_{i}"),
                    values: normalize_patch(p, &stats).unwrap().values,
                });
            }
            cache
        })
        .collect()
}

fn model_err(e: impl std::fmt::Display) -> TensorError {
    TensorError::ShapeMismatch {
        op: "model",
        detail: e.to_string(),
    }
}

fn weighted_sum(g: &mut Graph, y: Var, r: &Tensor) -> Result<Var, TensorError> {
    let rv = g.constant(r.clone());
    let m = g.mul(y, rv)?;
    Ok(g.sum(m))
}

fn away_from_zero(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v = rng.uniform_range(0.1, 2.0);
        if rng.uniform() < 0.5 {
            -v
        } else {
            v
        }
    })
}

// ---------------------------------------------------------------- checks

fn parameter_counts() -> Result<String, String> {
    let mut rng = Rng::new(0);
    for h in [1, 8, 16] {
        let m = build(ModelSpec::attention(h), &mut rng).map_err(|e| e.to_string())?;
        let got = (m.param_count(), m.params.layer_count("att1"), m.params.layer_count("fc"));
        ensure(got == (122_388, 66_048, 56_340), || format!("h={h}: {got:?}"))?;
    }
    let m = build(ModelSpec::fc(), &mut rng).map_err(|e| e.to_string())?;
    let got = (m.param_count(), m.params.layer_count("fc1"), m.params.layer_count("fc2"));
    ensure(got == (72_852, 16_512, 56_340), || format!("fc: {got:?}"))?;
    Ok("attention 122388 (66048 + 56340), fc 72852 (16512 + 56340)".into())
}

const EPS: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;

fn mha_vars(g: &mut Graph, p: &AttentionParams, over: Option<(&str, Var)>) -> AttentionVars {
    let mut v = p.bind(g, false);
    if let Some((name, x)) = over {
        match name {
            "w_q" => v.query.weight = x,
            "b_q" => v.query.bias = x,
            "w_k" => v.key.weight = x,
            "b_k" => v.key.bias = x,
            "w_v" => v.value.weight = x,
            "b_v" => v.value.bias = x,
            "w_o" => v.output.weight = x,
            "b_o" => v.output.bias = x,
            _ => unreachable!(),
        }
    }
    v
}

fn mha_tensor<'a>(p: &'a AttentionParams, name: &str) -> &'a Tensor {
    match name {
        "w_q" => &p.query.weight,
        "b_q" => &p.query.bias,
        "w_k" => &p.key.weight,
        "b_k" => &p.key.bias,
        "w_v" => &p.value.weight,
        "b_v" => &p.value.bias,
        "w_o" => &p.output.weight,
        "b_o" => &p.output.bias,
        _ => unreachable!(),
    }
}

fn with_random_biases(mut p: AttentionParams, rng: &mut Rng) -> AttentionParams {
    for l in [&mut p.query, &mut p.key, &mut p.value, &mut p.output] {
        l.bias = Tensor::from_fn(l.bias.shape(), |_| 0.1 * rng.normal());
    }
    p
}

/// Key-bias gradients vanish identically (softmax is shift invariant per
/// row), so they are checked for being zero rather than by relative error.
fn zero_gradient(analytic: &[f64]) -> f64 {
    analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn gradient_suite() -> Result<String, String> {
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut record = |name: &'static str, err: f64| {
        match worst.iter_mut().find(|(n, _)| *n == name) {
            Some(w) => w.1 = w.1.max(err),
            None => worst.push((name, err)),
        }
    };
    let mut max_key_bias = 0.0f64;
    let gc = |f: &dyn Fn(&mut Graph, Var) -> Result<Var, TensorError>, x: &Tensor| {
        grad_check(f, x, EPS).map_err(|e| e.to_string())
    };

    for seed in 0..10u64 {
        let mut rng = Rng::new(1000 + seed);

        // linear
        let x = Tensor::randn(&[4, 6], &mut rng);
        let w = Tensor::randn(&[5, 6], &mut rng);
        let b = Tensor::randn(&[5], &mut rng);
        let r = Tensor::randn(&[4, 5], &mut rng);
        let lin = |g: &mut Graph, x: Var, w: Var, b: Var| -> Result<Var, TensorError> {
            let y = linear_forward(g, &LinearVars { weight: w, bias: b }, x).map_err(model_err)?;
            weighted_sum(g, y, &r)
        };
        record("linear", gc(&|g, v| {
            let (w, b) = (g.constant(w.clone()), g.constant(b.clone()));
            lin(g, v, w, b)
        }, &x)?);
        record("linear", gc(&|g, v| {
            let (x, b) = (g.constant(x.clone()), g.constant(b.clone()));
            lin(g, x, v, b)
        }, &w)?);
        record("linear", gc(&|g, v| {
            let (x, w) = (g.constant(x.clone()), g.constant(w.clone()));
            lin(g, x, w, v)
        }, &b)?);

        // relu, evaluated away from the kink
        let x = away_from_zero(&[5, 7], &mut rng);
        let r = Tensor::randn(&[5, 7], &mut rng);
        record("relu", gc(&|g, v| {
            let y = g.relu(v);
            weighted_sum(g, y, &r)
        }, &x)?);

        // softmax
        let x = Tensor::randn(&[4, 9], &mut rng);
        let r = Tensor::randn(&[4, 9], &mut rng);
        record("softmax", gc(&|g, v| {
            let y = g.softmax_rows(v);
            weighted_sum(g, y, &r)
        }, &x)?);

        // scaled dot-product attention
        let qkv: Vec<Tensor> = (0..3).map(|_| Tensor::randn(&[6, 4], &mut rng)).collect();
        let r = Tensor::randn(&[6, 4], &mut rng);
        for which in 0..3 {
            record("sdpa", gc(&|g, v| {
                let vars: Vec<Var> = (0..3)
                    .map(|i| if i == which { v } else { g.constant(qkv[i].clone()) })
                    .collect();
                let (out, _) = scaled_dot_product_attention(g, vars[0], vars[1], vars[2]).map_err(model_err)?;
                weighted_sum(g, out, &r)
            }, &qkv[which])?);
        }

        // multi-head attention
        for (heads, label) in [(1usize, "mha-h1"), (8, "mha-h8")] {
            let p = with_random_biases(AttentionParams::glorot(16, heads, &mut rng).unwrap(), &mut rng);
            let x = Tensor::randn(&[5, 16], &mut rng);
            let r = Tensor::randn(&[5, 16], &mut rng);
            let run = |g: &mut Graph, x: Var, vars: &AttentionVars| -> Result<Var, TensorError> {
                let (out, _) = multi_head_attention(g, vars, x, 5).map_err(model_err)?;
                weighted_sum(g, out, &r)
            };
            record(label, gc(&|g, v| {
                let vars = mha_vars(g, &p, None);
                run(g, v, &vars)
            }, &x)?);
            for name in ["w_q", "b_q", "w_k", "w_v", "b_v", "w_o", "b_o"] {
                record(label, gc(&|g, v| {
                    let vars = mha_vars(g, &p, Some((name, v)));
                    let xc = g.constant(x.clone());
                    run(g, xc, &vars)
                }, mha_tensor(&p, name))?);
            }
            let mut g = Graph::new();
            let bk = g.param(p.key.bias.clone());
            let vars = mha_vars(&mut g, &p, Some(("b_k", bk)));
            let xc = g.constant(x.clone());
            let out = run(&mut g, xc, &vars).map_err(|e| e.to_string())?;
            let grads = g.backward(out).map_err(|e| e.to_string())?;
            max_key_bias = max_key_bias.max(zero_gradient(grads.get(bk).unwrap()));
        }

        // full models through cross-entropy, on sampled coordinates
        for (spec, label) in [(ModelSpec::attention(8), "freq-attention"), (ModelSpec::fc(), "freq-fc")] {
            let mut model = build(spec, &mut rng).unwrap();
            for (name, t) in model.params.iter_mut() {
                if name.contains(".b") {
                    for v in t.data_mut() {
                        *v = 0.05 * rng.normal();
                    }
                }
            }
            let input = Tensor::randn(&[2, 1, 128, 22], &mut rng);
            let labels = [rng.below(20), rng.below(20)];
            let names: Vec<String> = model.params.iter().map(|(n, _)| n.to_string()).collect();
            for name in &names {
                let t = model.params.get(name).unwrap().clone();
                let loss = |g: &mut Graph, v: Var, model: &Model| -> Result<Var, TensorError> {
                    let mut bound = model.bind(g, false);
                    bound.replace(name, v).map_err(model_err)?;
                    let x = g.constant(input.clone());
                    let out = model.forward(g, &bound, x).map_err(model_err)?;
                    g.cross_entropy(out.logits, &labels)
                };
                if name == "att1.b_k" {
                    let mut g = Graph::new();
                    let v = g.param(t.clone());
                    let out = loss(&mut g, v, &model).map_err(|e| e.to_string())?;
                    let grads = g.backward(out).map_err(|e| e.to_string())?;
                    max_key_bias = max_key_bias.max(zero_gradient(grads.get(v).unwrap()));
                    continue;
                }
                let coords: Vec<usize> = (0..6).map(|_| rng.below(t.len())).collect();
                let err = grad_check_coords(|g, v| loss(g, v, &model), &t, EPS, &coords).map_err(|e| e.to_string())?;
                record(label, err);
            }
        }
    }
    let summary = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(worst.iter().all(|(_, e)| *e < GRAD_TOL), || format!("max rel err above {GRAD_TOL}: {summary}"))?;
    ensure(max_key_bias < 1e-10, || format!("key-bias gradient {max_key_bias:e} not zero"))?;
    Ok(format!("10 seeds; {summary}; |d/d b_k| {max_key_bias:.0e}"))
}

fn attention_stochasticity() -> Result<String, String> {
    let mut worst = 0.0f64;
    for heads in [1, 8, 16] {
        let mut rng = Rng::new(heads as u64);
        for i in 0..100 {
            let p = AttentionParams::glorot(128, heads, &mut rng).unwrap();
            let scale = 1.0 + 9.0 * (i as f64 / 99.0);
            let x = Tensor::from_fn(&[22, 128], |_| scale * rng.normal());
            let mut g = Graph::new();
            let vars = p.bind(&mut g, false);
            let xv = g.constant(x);
            let (_, traces) = multi_head_attention(&mut g, &vars, xv, 22).map_err(|e| e.to_string())?;
            let tr = &traces[0];
            ensure(tr.heads() == heads, || format!("{} heads traced", tr.heads()))?;
            for w in tr.per_head.iter().chain(std::iter::once(&tr.averaged)) {
                for row in w.data().chunks(22) {
                    ensure(row.iter().all(|v| (0.0..=1.0).contains(v)), || "weight outside [0,1]".into())?;
                    worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
                }
            }
        }
    }
    ensure(worst <= 1e-6, || format!("row sum off by {worst:e}"))?;
    Ok(format!("h in {{1,8,16}} x 100 inputs; max |row sum - 1| = {worst:.1e}"))
}

fn permutation_equivariance() -> Result<String, String> {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(77);
    for heads in [1, 8, 16] {
        for _ in 0..5 {
            let p = with_random_biases(AttentionParams::glorot(128, heads, &mut rng).unwrap(), &mut rng);
            let x = Tensor::randn(&[22, 128], &mut rng);
            let mut perm: Vec<usize> = (0..22).collect();
            rng.shuffle(&mut perm);
            let px = Tensor::from_fn(&[22, 128], |i| x.data()[perm[i / 128] * 128 + i % 128]);
            let run = |x: Tensor| -> Result<Tensor, String> {
                let mut g = Graph::new();
                let vars = p.bind(&mut g, false);
                let xv = g.constant(x);
                let (out, _) = multi_head_attention(&mut g, &vars, xv, 22).map_err(|e| e.to_string())?;
                Ok(g.value(out).clone())
            };
            let (a, b) = (run(x)?, run(px)?);
            for (r, &src) in perm.iter().enumerate() {
                for c in 0..128 {
                    worst = worst.max((b.at(r, c) - a.at(src, c)).abs());
                }
            }
        }
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    Ok(format!("h in {{1,8,16}}; max |MHA(Px) - P MHA(x)| = {worst:.1e}"))
}

fn loss_sanity() -> Result<String, String> {
    let mut g = Graph::new();
    let z = g.constant(Tensor::zeros(&[7, 20]));
    let labels: Vec<usize> = (0..7).map(|i| (i * 3) % 20).collect();
    let ce = g.cross_entropy(z, &labels).map_err(|e| e.to_string())?;
    let uniform = g.value(ce).data()[0];
    let ln20 = 20f64.ln();
    ensure((uniform - ln20).abs() <= 1e-6, || format!("uniform CE {uniform}"))?;

    let sets = vec![synth_patches(20, 8, 5), synth_patches(20, 2, 6)];
    let caches = to_caches(&sets);
    let cfg = TrainConfig {
        max_epochs: 1,
        ..TrainConfig::default()
    };
    let mut firsts = Vec::new();
    for spec in [ModelSpec::attention(8), ModelSpec::fc()] {
        let label = spec.label();
        let out = trainer::train(spec, &caches[0], &caches[1], &cfg, &TrainOptions::default()).map_err(|e| e.to_string())?;
        let first = out.log.records[0].train_loss;
        ensure((first - ln20).abs() <= 0.15, || format!("{label}: first-epoch loss {first:.4} vs ln 20 {ln20:.4}"))?;
        firsts.push(format!("{label} {first:.4}"));
    }
    Ok(format!("uniform CE {uniform:.7}; first-epoch train loss {}", firsts.join(", ")))
}

fn overfit_run() -> Result<(Model, Vec<f64>, FeatureCache), String> {
    let set: Vec<_> = synth_patches(8, 4, 21);
    let caches = to_caches(&[set]);
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 500,
        patience: 500,
        seed: 3,
        ..TrainConfig::default()
    };
    let opts = TrainOptions {
        target_train_loss: Some(0.002),
        ..TrainOptions::default()
    };
    let out = trainer::train(ModelSpec::attention(8), &caches[0], &caches[0], &cfg, &opts).map_err(|e| e.to_string())?;
    let losses = out.log.records.iter().map(|r| r.train_loss).collect();
    Ok((out.last, losses, caches.into_iter().next().unwrap()))
}

fn overfit_smoke() -> Result<String, String> {
    let (model, losses, cache) = overfit_run()?;
    let (_, losses_again, _) = overfit_run()?;
    ensure(losses == losses_again, || "two runs with the same seed diverged".into())?;
    let p = eval::predict(&model, &cache).map_err(|e| e.to_string())?;
    let correct = p.preds.iter().zip(&p.labels).filter(|(a, b)| a == b).count();
    let loss = p.mean_loss();
    ensure(correct == cache.len(), || format!("{correct}/{} correct", cache.len()))?;
    ensure(loss < 0.01, || format!("train loss {loss}"))?;
    Ok(format!(
        "h=8, 32 samples: 100% accuracy, loss {loss:.2e} after {} epochs, repeat run identical",
        losses.len()
    ))
}

fn synthetic_separability() -> Result<String, String> {
    let sets = vec![synth_patches(5, 80, 31), synth_patches(5, 10, 32), synth_patches(5, 20, 33)];
    let caches = to_caches(&sets);
    let names = ClassTable::default().names();
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 40,
        patience: 8,
        seed: 42,
        ..TrainConfig::default()
    };
    let variants = [ModelSpec::attention(8), ModelSpec::fc()];
    let (report, _) = run_ablation(&variants, &caches[0], &caches[1], &caches[2], &cfg, names, None)
        .map_err(|e| e.to_string())?;
    let summary = report
        .rows
        .iter()
        .map(|r| format!("{} F1 {:.3}", r.model, r.f1))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(report.rows.iter().all(|r| r.f1 >= 0.95), || summary.clone())?;
    Ok(format!("5 classes, 400 train / 100 test: {summary}"))
}

fn metrics_oracle() -> Result<String, String> {
    let names = ClassTable::default().names();
    let mut rng = Rng::new(404);
    for set in 0..50 {
        let n = 1 + rng.below(1000);
        let labels: Vec<usize> = (0..n).map(|_| rng.below(20)).collect();
        let preds: Vec<usize> = labels
            .iter()
            .map(|&l| if rng.uniform() < 0.6 { l } else { rng.below(20) })
            .collect();
        let report = EvalReport::from_predictions(&preds, &labels, 0.0, names).map_err(|e| e.to_string())?;

        // brute force over samples
        let (mut tp, mut fp, mut fneg) = ([0u64; 20], [0u64; 20], [0u64; 20]);
        for (&p, &t) in preds.iter().zip(&labels) {
            if p == t {
                tp[t] += 1;
            } else {
                fp[p] += 1;
                fneg[t] += 1;
            }
        }
        let (mut wp, mut wr, mut wf, mut total) = (0.0, 0.0, 0.0, 0u64);
        for c in 0..20 {
            let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            let p = div(tp[c], tp[c] + fp[c]);
            let r = div(tp[c], tp[c] + fneg[c]);
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            let support = tp[c] + fneg[c];
            let m = &report.per_class[c].metrics;
            ensure(
                (m.precision, m.recall, m.f1, m.support) == (p, r, f, support),
                || format!("set {set}, class {c}: {m:?} vs ({p}, {r}, {f}, {support})"),
            )?;
            wp += support as f64 * p;
            wr += support as f64 * r;
            wf += support as f64 * f;
            total += support;
        }
        let t = total as f64;
        let w = report.weighted;
        ensure(
            (w.precision, w.recall, w.f1) == (wp / t, wr / t, wf / t),
            || format!("set {set}: weighted {w:?} vs ({}, {}, {})", wp / t, wr / t, wf / t),
        )?;
    }

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = 1 + rng.below(500);
        let labels: Vec<usize> = (0..n).map(|_| rng.below(20)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.below(20)).collect();
        let cm = confusion(&preds, &labels, 20).map_err(|e| e.to_string())?;
        let w = weighted_average(&per_class_metrics(&cm)).map_err(|e| e.to_string())?;
        worst = worst.max((w.recall - cm.trace() as f64 / cm.total() as f64).abs());
    }
    ensure(worst < 1e-12, || format!("weighted recall vs accuracy off by {worst:e}"))?;
    Ok(format!("50 sets exact; weighted recall = accuracy on 100 matrices (max diff {worst:.0e})"))
}

fn dsp_oracles() -> Result<String, String> {
    // STFT against a direct DFT of the first Hann-windowed frame
    let sr = 22_050u32;
    let tone = AudioClip::new(
        (0..4096).map(|i| (2.0 * PI * 1000.0 * i as f64 / sr as f64).sin() as f32).collect(),
        sr,
    );
    let mag = stft_magnitude(&tone, 1024, 512).map_err(|e| e.to_string())?;
    let column: Vec<f64> = mag.column(0).collect();
    let dft: Vec<f64> = (0..513)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for n in 0..1024 {
                let w = 0.5 - 0.5 * (2.0 * PI * n as f64 / 1024.0).cos();
                let x = tone.samples[n] as f64 * w;
                let ang = -2.0 * PI * (k * n) as f64 / 1024.0;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect();
    let argmax = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
    let (peak, oracle_peak) = (argmax(&column), argmax(&dft));
    ensure(peak == 46 && oracle_peak == 46, || format!("peak bin {peak}, oracle {oracle_peak}"))?;
    let max_dev = column.iter().zip(&dft).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(max_dev < 1e-6 * dft[46], || format!("STFT deviates from DFT by {max_dev:e}"))?;

    // mel centers against the scalar formula
    let to_mel = |hz: f64| {
        if hz < 1000.0 {
            3.0 * hz / 200.0
        } else {
            15.0 + 27.0 * (hz / 1000.0).ln() / 6.4f64.ln()
        }
    };
    let to_hz = |mel: f64| {
        if mel < 15.0 {
            200.0 * mel / 3.0
        } else {
            1000.0 * (6.4f64.ln() * (mel - 15.0) / 27.0).exp()
        }
    };
    let fb = mel_filterbank(128, 32.7, 8000.0, sr, 1024).map_err(|e| e.to_string())?;
    let (lo, hi) = (to_mel(32.7), to_mel(8000.0));
    let mut worst_rel = 0.0f64;
    for (m, &c) in fb.centers.iter().enumerate() {
        let expect = to_hz(lo + (hi - lo) * (m + 1) as f64 / 129.0);
        worst_rel = worst_rel.max((c - expect).abs() / expect);
    }
    ensure(worst_rel <= 1e-6, || format!("mel center rel err {worst_rel:e}"))?;

    // onset against a linear scan
    let mut rng = Rng::new(99);
    let mut no_onset = 0;
    for case in 0..100 {
        let cols = 1 + rng.below(60);
        let rows = 1 + rng.below(16);
        let quiet = if case % 10 == 0 { cols } else { rng.below(cols + 1) };
        let mut m = Matrix::zeros(rows, cols);
        for c in 0..cols {
            for r in 0..rows {
                let v = if c < quiet { rng.uniform_range(0.0, 0.1) } else { rng.uniform() };
                m.set(r, c, v);
            }
        }
        let spec = LogMelSpectrogram {
            values: m.clone(),
            frame_hop_s: 512.0 / 22_050.0,
        };
        let mut expected = None;
        for c in 0..cols {
            let mut hit = false;
            for r in 0..rows {
                if m.get(r, c) > 0.1 {
                    hit = true;
                }
            }
            if hit {
                expected = Some(c);
                break;
            }
        }
        match (trim_and_crop(&spec, 0.1, 22), expected) {
            (Ok(p), Some(onset)) => {
                ensure(p.onset_frame == onset, || format!("case {case}: onset {} vs {onset}", p.onset_frame))?;
                for r in 0..rows {
                    for t in 0..22 {
                        let want = if onset + t < cols { m.get(r, onset + t) as f32 } else { 0.0 };
                        ensure(p.get(r, t) == want, || format!("case {case}: value ({r},{t})"))?;
                    }
                }
            }
            (Err(DspError::NoOnset), None) => no_onset += 1,
            (got, want) => return Err(format!("case {case}: {:?} vs {want:?}", got.map(|p| p.onset_frame))),
        }
    }
    Ok(format!(
        "1000 Hz peak at bin 46 (DFT agrees, max dev {max_dev:.1e}); mel centers rel err {worst_rel:.1e}; onset matches on 100 spectrograms ({no_onset} silent)"
    ))
}

fn serialization() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().join("corpus");
    let names = ["violin", "tuba", "flute"];
    timbre_core::synth::write_corpus(&root, &names, 10, 8, &SynthParams::default()).map_err(|e| e.to_string())?;
    let files = scan(&root, &ClassTable::default()).map_err(|e| e.to_string())?;
    let plan = make_split(&files, SplitRatios::default(), 42).map_err(|e| e.to_string())?;
    let work = dir.path().join("work");
    let summary = build_cache(&plan, &root, &DspParams::default(), &work).map_err(|e| e.to_string())?;

    // reload and compare against a fresh in-memory extraction
    let front = FrontEnd::new(DspParams::default()).unwrap();
    let mut checked = 0;
    for split in ["train", "val", "test"] {
        let cache = read_cache(&work.join(format!("{split}.tmbf"))).map_err(|e| e.to_string())?;
        for e in &cache.entries {
            let p = front.patch_from_file(&root.join(&e.path)).map_err(|e| e.to_string())?;
            let fresh = normalize_patch(&p, &summary.stats).map_err(|e| e.to_string())?;
            ensure(fresh.values == e.values, || format!("{}: cached features differ", e.path))?;
            checked += 1;
        }
        let copy = dir.path().join("copy.tmbf");
        write_cache(&copy, &cache).map_err(|e| e.to_string())?;
        ensure(
            std::fs::read(&copy).unwrap() == std::fs::read(work.join(format!("{split}.tmbf"))).unwrap(),
            || format!("{split}: rewrite not byte-identical"),
        )?;
    }
    ensure(checked == files.len(), || format!("{checked} of {} files cached", files.len()))?;

    let train = read_cache(&work.join("train.tmbf")).unwrap();
    let val = read_cache(&work.join("val.tmbf")).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let ck = dir.path().join("best.tmbc");
    let mut diffs = Vec::new();
    for spec in [ModelSpec::attention(8), ModelSpec::fc()] {
        let opts = TrainOptions {
            checkpoint: Some(ck.clone()),
            ..TrainOptions::default()
        };
        let out = trainer::train(spec, &train, &val, &cfg, &opts).map_err(|e| e.to_string())?;
        let (loaded, meta) = load_checkpoint(&ck).map_err(|e| e.to_string())?;
        ensure(loaded == out.best, || "checkpoint parameters differ".into())?;
        ensure(meta.epoch == out.best_epoch, || "checkpoint epoch differs".into())?;
        let (loss, _) = trainer::validate(&loaded, &val).map_err(|e| e.to_string())?;
        let d = (loss - out.best_val_loss).abs();
        ensure(d <= 1e-6, || format!("val loss {loss} vs {}", out.best_val_loss))?;
        diffs.push(d);
        save_checkpoint(&ck, &loaded, meta).map_err(|e| e.to_string())?;
        let (again, _) = load_checkpoint(&ck).map_err(|e| e.to_string())?;
        ensure(again == loaded, || "second round trip differs".into())?;
    }
    Ok(format!(
        "{checked} cached patches bit-identical; checkpoint val-loss diffs {:.0e}/{:.0e}",
        diffs[0], diffs[1]
    ))
}

fn full_data_ordering() -> Result<String, String> {
    let Some(root) = std::env::var_os("TIMBRE_CORPUS") else {
        return Ok("SKIP: set TIMBRE_CORPUS to a corpus root to run (hours of CPU)".into());
    };
    let root = Path::new(&root);
    let table = ClassTable::default();
    let files = scan(root, &table).map_err(|e| e.to_string())?;
    let plan = make_split(&files, SplitRatios::default(), 42).map_err(|e| e.to_string())?;
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    build_cache(&plan, root, &DspParams::default(), work.path()).map_err(|e| e.to_string())?;
    let load = |s: &str| read_cache(&work.path().join(format!("{s}.tmbf"))).map_err(|e| e.to_string());
    let (train, val, test) = (load("train")?, load("val")?, load("test")?);
    let cfg = TrainConfig {
        seed: 42,
        ..TrainConfig::default()
    };
    let variants = [ModelSpec::attention(1), ModelSpec::attention(8), ModelSpec::fc()];
    let (report, _) = run_ablation(&variants, &train, &val, &test, &cfg, table.names(), None)
        .map_err(|e| e.to_string())?;
    let f1 = |i: usize| report.rows[i].f1;
    let summary = format!("F1 h=1 {:.3}, h=8 {:.3}, fc {:.3}", f1(0), f1(1), f1(2));
    ensure(f1(1) > f1(2) && f1(1) > f1(0), || summary.clone())?;
    Ok(summary)
}
