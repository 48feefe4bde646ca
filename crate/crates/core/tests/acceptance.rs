//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any fails.
//! Runs as a plain binary (no test harness) so the lines always reach stdout.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use gesturekit::model::GRAD_CHECK_MIN_MARGIN;
use gesturekit::nn::{
    conv1d_backward, conv1d_forward, cross_entropy, dense_backward, dense_forward, dropout, gradient_check,
    lstm_forward, maxpool1d_backward, maxpool1d_forward, softmax, ClassTarget,
    DropoutSpec, LstmParams, LstmState, Tensor,
};
use gesturekit::nn::lstm::{lstm_backward, lstm_forward_cached};
use gesturekit::rng::SplitMix64;
use gesturekit::stream::{bench, ClientMessage, Session};
use gesturekit::synth::{generate_dataset, generate_sequence, synth_gaze, transform_sequence};
use gesturekit::train::{evaluate, init_seed, split, train, TrainConfig};
use gesturekit::{GenConfig, GestureClass, GestureSequence, ModelConfig, RecognizerModel, Result, RigidTransform};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn random_vec(rng: &mut SplitMix64, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-scale, scale)).collect()
}

fn tensor(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
}

/// Dense layer into softmax cross-entropy. Returns the worst relative error
/// over (weights, bias) and over the input separately.
fn dense_softmax_case(seed: u64) -> (f64, f64) {
    let mut rng = SplitMix64::new(seed);
    let (n_in, n_out) = (5, 4);
    let n_params = n_out * n_in + n_out;
    let w = tensor(&[n_out, n_in], &random_vec(&mut rng, n_out * n_in, 0.5));
    let b = tensor(&[n_out], &random_vec(&mut rng, n_out, 0.5));
    // Inputs kept away from zero so no weight gradient vanishes into roundoff.
    let x = Tensor::vector(
        (0..n_in).map(|_| rng.uniform(0.5, 1.5) * if rng.next_f64() < 0.5 { -1.0 } else { 1.0 }).collect(),
    );
    let target = ClassTarget::new(n_out, rng.below(n_out)).unwrap();
    let theta = [w.data(), b.data(), x.data()].concat();
    let parts = |t: &[f64]| {
        (
            tensor(&[n_out, n_in], &t[..n_out * n_in]),
            tensor(&[n_out], &t[n_out * n_in..n_params]),
            tensor(&[n_in], &t[n_params..]),
        )
    };
    let loss_at = |t: &[f64]| -> Result<f64> {
        let (w, b, x) = parts(t);
        Ok(cross_entropy(&softmax(&dense_forward(&x, &w, &b)?)?, target)?.0)
    };
    let p = softmax(&dense_forward(&x, &w, &b).unwrap()).unwrap();
    let (_, dlogits) = cross_entropy(&p, target).unwrap();
    let (gx, gw, gb) = dense_backward(&x, &w, &dlogits).unwrap();

    let with_input = |params: &[f64]| [params, x.data()].concat();
    let param_err = gradient_check(
        |q: &[f64]| loss_at(&with_input(q)),
        &theta[..n_params],
        &[gw.data(), gb.data()].concat(),
        1e-6,
    )
    .unwrap()
    .max_rel_error;
    let input_err = gradient_check(
        |q: &[f64]| loss_at(&[&theta[..n_params], q].concat()),
        x.data(),
        gx.data(),
        1e-6,
    )
    .unwrap()
    .max_rel_error;
    (param_err, input_err)
}

/// Conv then max-pool, projected on a random direction. `None` when a pool
/// pair is too close to a tie for a finite difference to be meaningful.
fn conv_pool_case(seed: u64) -> Option<f64> {
    let mut rng = SplitMix64::new(seed);
    let (c_in, len, c_out, k) = (3, 8, 4, 3);
    let nk = c_out * c_in * k;
    let theta = random_vec(&mut rng, nk + c_out + c_in * len, 1.0);
    let proj = random_vec(&mut rng, c_out * len / 2, 1.0);
    let parts = |t: &[f64]| {
        (
            tensor(&[c_out, c_in, k], &t[..nk]),
            tensor(&[c_out], &t[nk..nk + c_out]),
            tensor(&[c_in, len], &t[nk + c_out..]),
        )
    };
    let (kern, bias, input) = parts(&theta);
    let conv = conv1d_forward(&input, &kern, &bias).unwrap();
    let margin = conv.data().chunks(2).map(|p| (p[0] - p[1]).abs()).fold(f64::INFINITY, f64::min);
    if margin < 1e-3 {
        return None;
    }
    let pooled = maxpool1d_forward(&conv).unwrap();
    let g = tensor(pooled.output.shape(), &proj);
    let dconv = maxpool1d_backward(conv.shape(), &pooled.argmax, &g).unwrap();
    let (gin, gk, gb) = conv1d_backward(&input, &kern, &dconv).unwrap();
    let analytic = [gk.data(), gb.data(), gin.data()].concat();
    let loss = |t: &[f64]| -> Result<f64> {
        let (kern, bias, input) = parts(t);
        let out = maxpool1d_forward(&conv1d_forward(&input, &kern, &bias)?)?.output;
        Ok(out.data().iter().zip(&proj).map(|(a, b)| a * b).sum())
    };
    Some(gradient_check(loss, &theta, &analytic, 1e-6).unwrap().max_rel_error)
}

fn lstm_flat(p: &LstmParams) -> Vec<f64> {
    p.weights.iter().chain(&p.biases).flat_map(|t| t.data().to_vec()).collect()
}

fn lstm_unflat(like: &LstmParams, flat: &[f64]) -> LstmParams {
    let mut q = like.clone();
    let mut off = 0;
    for t in q.weights.iter_mut().chain(q.biases.iter_mut()) {
        let n = t.len();
        t.data_mut().copy_from_slice(&flat[off..off + n]);
        off += n;
    }
    q
}

/// Five-step LSTM with a random linear read-out of every hidden state.
fn lstm_case(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let (n_in, hidden, steps) = (3, 4, 5);
    let mut p = LstmParams::xavier(n_in, hidden, &mut rng);
    for t in p.weights.iter_mut().chain(p.biases.iter_mut()) {
        for v in t.data_mut() {
            *v += rng.uniform(-0.3, 0.3);
        }
    }
    let xs: Vec<Tensor> = (0..steps).map(|_| Tensor::vector(random_vec(&mut rng, n_in, 1.0))).collect();
    let read: Vec<Vec<f64>> = (0..steps).map(|_| random_vec(&mut rng, hidden, 1.0)).collect();
    let init = LstmState::zeros(hidden);
    let (_, caches) = lstm_forward_cached(&xs, &init, &p).unwrap();
    let mut grads = p.zeros_like();
    lstm_backward(&p, &caches, &read, &mut grads).unwrap();
    let loss = |flat: &[f64]| -> Result<f64> {
        let states = lstm_forward(&xs, &init, &lstm_unflat(&p, flat))?;
        Ok(states.iter().zip(&read).map(|(s, r)| s.h.iter().zip(r).map(|(a, b)| a * b).sum::<f64>()).sum())
    };
    gradient_check(loss, &lstm_flat(&p), &lstm_flat(&grads), 1e-6).unwrap().max_rel_error
}

fn perturbed_toy_model(seed: u64) -> RecognizerModel {
    let mut m = RecognizerModel::new(ModelConfig::toy(8), seed).unwrap();
    let mut rng = SplitMix64::new(seed ^ 0x5eed);
    for t in m.params.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.uniform(-0.2, 0.2);
        }
    }
    m
}

fn gradient_fidelity() -> Outcome {
    const SEEDS: usize = 20;
    let start = Instant::now();
    let (dense, dense_input) = (0..SEEDS as u64)
        .map(dense_softmax_case)
        .fold((0.0f64, 0.0f64), |(a, b), (p, x)| (a.max(p), b.max(x)));
    let (mut conv, mut conv_seeds, mut seed) = (0.0f64, 0, 0u64);
    while conv_seeds < SEEDS {
        if let Some(e) = conv_pool_case(seed) {
            conv = conv.max(e);
            conv_seeds += 1;
        }
        seed += 1;
    }
    let lstm = (0..SEEDS as u64).map(|s| lstm_case(1000 + s)).fold(0.0, f64::max);
    let (mut full, mut full_seeds, mut skipped, mut seed) = (0.0f64, 0, 0, 0u64);
    let gen = GenConfig { frames_per_sequence: 3, ..GenConfig::default() };
    while full_seeds < SEEDS {
        seed += 1;
        let m = perturbed_toy_model(seed);
        let class = GestureClass::ALL[seed as usize % 8];
        let seq = synth_gaze(&generate_sequence(class, &gen, seed).unwrap(), seed);
        let training = seed % 2 == 0;
        if m.kink_margin(&seq, training, seed).unwrap() < GRAD_CHECK_MIN_MARGIN {
            skipped += 1;
            continue;
        }
        full = full.max(m.gradient_check(&seq, training, seed).unwrap().max_rel_error);
        full_seeds += 1;
    }
    let elapsed = start.elapsed();
    let passed = dense < 1e-7 && dense_input < 1e-4 && conv < 1e-4 && lstm < 1e-4 && full < 1e-4 && elapsed < Duration::from_secs(60);
    outcome(
        passed,
        format!(
            "max rel err dense+softmax weights {dense:.2e} (<1e-7) input {dense_input:.2e}, conv+pool {conv:.2e}, lstm {lstm:.2e}, \
             full model {full:.2e} (<1e-4); {SEEDS} seeds each ({skipped} near-kink draws redrawn); {:.1}s (<60s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn dropout_statistics() -> Outcome {
    let x = Tensor::vector(vec![1.0, -2.0, 0.5, 4.0, -0.75, 3.0]);
    let spec = DropoutSpec::new(0.5, true).unwrap();
    let trials = 100_000u64;
    let mut sum = vec![0.0; x.len()];
    for seed in 0..trials {
        let (out, _) = dropout(&x, spec, seed);
        for (s, v) in sum.iter_mut().zip(out.data()) {
            *s += v;
        }
    }
    let worst = sum
        .iter()
        .zip(x.data())
        .map(|(s, v)| (s / trials as f64 - v).abs() / v.abs())
        .fold(0.0, f64::max);
    let infer = DropoutSpec::new(0.5, false).unwrap();
    let identity = (0..100).all(|seed| {
        let (out, _) = dropout(&x, infer, seed);
        out.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits())
    });
    outcome(
        worst <= 0.01 && identity,
        format!("worst relative deviation of mean {worst:.4} (<=0.01) over 1e5 masks; inference identity bitwise: {identity}"),
    )
}

fn stream_batch_equivalence(trained: &RecognizerModel) -> Outcome {
    let mut rng = SplitMix64::new(2024);
    let mut worst = 0.0f64;
    let model = Arc::new(trained.clone());
    for k in 0..100u64 {
        let class = GestureClass::ALL[rng.below(8)];
        let frames = 2 + rng.below(39);
        let gen = GenConfig { frames_per_sequence: frames, seed: k, ..GenConfig::default() };
        let mut seq = generate_sequence(class, &gen, rng.next_u64()).unwrap();
        if k % 3 != 0 {
            seq = synth_gaze(&seq, rng.next_u64());
        }
        let batch = model.forward_sequence(&seq, false, 0).unwrap();
        let mut session = Session::new(Arc::clone(&model));
        for (f, want) in seq.frames.iter().zip(&batch) {
            let reply = session.handle_line(&ClientMessage::frame(f).to_json()).unwrap();
            let v: serde_json::Value = serde_json::from_str(&reply).unwrap();
            for (p, w) in v["probs"].as_array().unwrap().iter().zip(want.probs.data()) {
                worst = worst.max((p.as_f64().unwrap() - w).abs());
            }
        }
    }
    outcome(worst <= 1e-12, format!("max |stream - batch| over 100 sequences, every step: {worst:.1e} (<=1e-12)"))
}

fn gaze_identity() -> Outcome {
    let gen = GenConfig { frames_per_sequence: 12, ..GenConfig::default() };
    let mut mismatches = 0;
    for k in 0..100u64 {
        let config = if k % 2 == 0 { ModelConfig::default() } else { ModelConfig::toy(8) };
        let with = RecognizerModel::new(config, 7000 + k).unwrap();
        let without = RecognizerModel {
            config: ModelConfig { gaze_enabled: false, ..with.config },
            ..with.clone()
        };
        let seq = generate_sequence(GestureClass::ALL[k as usize % 8], &gen, k).unwrap();
        let seq = synth_gaze(&seq, k).without_gaze();
        for training in [false, true] {
            let a = with.forward_sequence(&seq, training, k).unwrap();
            let b = without.forward_sequence(&seq, training, k).unwrap();
            let bits = |o: &[gesturekit::TimestepOutput]| -> Vec<u64> {
                o.iter().flat_map(|t| t.probs.data().iter().map(|p| p.to_bits())).collect()
            };
            if bits(&a) != bits(&b) {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("{mismatches} bitwise mismatches over 100 models x (inference, training)"))
}

fn accuracy_of(model: &RecognizerModel, data: &[GestureSequence]) -> f64 {
    evaluate(model, data).unwrap().evaluation.unwrap().accuracy
}

fn run_cli(args: &[&str], dir: &Path) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_gesturekit")).args(args).current_dir(dir).output().unwrap();
    assert!(out.status.success(), "gesturekit {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("train.json"), r#"{"epochs": 2, "batch_size": 8}"#).unwrap();
    let mut eval_stdout = Vec::new();
    for run in ["a", "b"] {
        let data = format!("data_{run}.jsonl");
        run_cli(&["gen", "--per-class", "12", "--frames", "16", "--noise", "0.02", "--seed", "9", "--out", &data], d);
        run_cli(
            &[
                "train", "--data", &data, "--config", "train.json", "--val-fraction", "0.25", "--seed", "5",
                "--out-model", &format!("model_{run}.gkw"), "--metrics", &format!("train_{run}.jsonl"),
            ],
            d,
        );
        eval_stdout.push(run_cli(
            &["eval", "--model", &format!("model_{run}.gkw"), "--data", &data, "--metrics", &format!("eval_{run}.jsonl")],
            d,
        ));
    }
    let same = |stem: &str, ext: &str| {
        std::fs::read(d.join(format!("{stem}_a.{ext}"))).unwrap() == std::fs::read(d.join(format!("{stem}_b.{ext}"))).unwrap()
    };
    let results = [
        ("dataset", same("data", "jsonl")),
        ("weights", same("model", "gkw")),
        ("train metrics", same("train", "jsonl")),
        ("eval metrics", same("eval", "jsonl") && eval_stdout[0] == eval_stdout[1]),
    ];
    let detail = results.iter().map(|(n, ok)| format!("{n} identical: {ok}")).collect::<Vec<_>>().join(", ");
    outcome(results.iter().all(|r| r.1), detail)
}

fn main() {
    let mut lines: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!("[{}] {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        lines.push((name, o));
    };

    report("gradient fidelity", gradient_fidelity());
    report("dropout statistics", dropout_statistics());
    report("gaze-identity reduction", gaze_identity());
    report("determinism (gen/train/eval via CLI)", determinism());

    // Canonical corpus and the default configuration, as `gesturekit train` runs it.
    let corpus = generate_dataset(125, &GenConfig::default()).unwrap();
    let cfg = TrainConfig::default();
    let (train_set, val_set) = split(&corpus, 0.2, cfg.seed).unwrap();
    let start = Instant::now();
    let initial = RecognizerModel::new(ModelConfig::default(), init_seed(cfg.seed)).unwrap();
    let (trained, _) = train(&initial, &train_set, &val_set, &cfg).unwrap();
    let train_time = start.elapsed();
    let acc = accuracy_of(&trained, &val_set);
    report(
        "accuracy proxy",
        outcome(
            acc >= 0.95 && train_time < Duration::from_secs(300),
            format!(
                "held-out accuracy {acc:.4} (>=0.95) on {} sequences; training {:.1}s single-threaded (<300s)",
                val_set.len(),
                train_time.as_secs_f64()
            ),
        ),
    );

    let rotation = RigidTransform::rotation_about([0.0, 0.0, 1.0], 0.3);
    let rotated: Vec<GestureSequence> = val_set.iter().map(|s| transform_sequence(s, &rotation).unwrap()).collect();
    let rot_acc = accuracy_of(&trained, &rotated);
    let drop_pp = 100.0 * (acc - rot_acc);
    report(
        "augmentation robustness",
        outcome(
            drop_pp <= 3.0,
            format!("accuracy {acc:.4} unrotated vs {rot_acc:.4} rotated 0.3 rad; drop {drop_pp:.2} pp (<=3)"),
        ),
    );

    let b = bench(Arc::new(trained.clone()), &corpus, 1).unwrap();
    report(
        "latency budget",
        outcome(
            b.p99_us < 120_000 && b.p50_us < 10_000,
            format!(
                "{} frames: p50 {} us (<10000), p99 {} us (<120000), max {} us, {:.0} frames/s",
                b.frames, b.p50_us, b.p99_us, b.max_us, b.frames_per_second
            ),
        ),
    );

    report("stream/batch equivalence", stream_batch_equivalence(&trained));

    let failed = lines.iter().filter(|(_, o)| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
