//! Built-in verification suite: primitive operations against naive-loop
//! oracles, finite-difference gradient checks, the sliding-window tower
//! equivalence, optimizer and checkpoint identities, and scene determinism.
//!
//! Every check is deterministic; the suite is cheap enough to run on every
//! fresh checkout.

use std::sync::Arc;

use rand::Rng;

use crate::autograd::{grad_check, AdamConfig, AdamState, Tape, Tensor};
use crate::model::{bind_params, predict, ArchitectureConfig, Param, ParameterSet};
use crate::rng::{labels, stream_rng, Prng};
use crate::scene::{
    CueKind, Episode, EpisodeStream, GlyphStore, SceneConfig, Split, StreamSource,
};
use crate::train::{Checkpoint, EvalReport};
use crate::{Real, Result};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// All check outcomes of one suite run.
#[derive(Debug, Clone)]
pub struct SelfTestReport {
    pub checks: Vec<CheckResult>,
}

impl SelfTestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl std::fmt::Display for SelfTestReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "[{}] {:<38} {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

// ---------------------------------------------------------------------------
// Naive reference implementations (straight quadruple loops, no blocking).

fn naive_conv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Vec<Real> {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, kh, kw) = (kernels.shape()[0], kernels.shape()[2], kernels.shape()[3]);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; c_out * oh * ow];
    for o in 0..c_out {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bias.data()[o];
                for c in 0..c_in {
                    for ki in 0..kh {
                        for kj in 0..kw {
                            acc += kernels.data()[((o * c_in + c) * kh + ki) * kw + kj]
                                * input.data()[(c * h + i + ki) * w + j + kj];
                        }
                    }
                }
                out[(o * oh + i) * ow + j] = acc;
            }
        }
    }
    out
}

fn naive_stack3x3(input: &Tensor) -> Vec<Real> {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (h - 2, w - 2);
    let mut out = vec![0.0; 9 * c_in * oh * ow];
    for c in 0..c_in {
        for n in 0..9 {
            for i in 0..oh {
                for j in 0..ow {
                    out[((c * 9 + n) * oh + i) * ow + j] =
                        input.data()[(c * h + i + n / 3) * w + j + n % 3];
                }
            }
        }
    }
    out
}

fn naive_spatial_softmax(input: &Tensor, temperature: Real) -> Vec<Real> {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let hw = h * w;
    let mut out = vec![0.0; c_in * hw];
    for c in 0..c_in {
        let plane = &input.data()[c * hw..][..hw];
        let max = plane.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let exps: Vec<Real> = plane.iter().map(|&v| ((v - max) / temperature).exp()).collect();
        let sum: Real = exps.iter().sum();
        for (o, e) in out[c * hw..][..hw].iter_mut().zip(&exps) {
            *o = e / sum;
        }
    }
    out
}

fn coord_denom(d: usize) -> Real {
    (d.max(2) - 1) as Real
}

fn naive_softargmax(input: &Tensor, temperature: Real) -> Vec<Real> {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let probs = naive_spatial_softmax(input, temperature);
    let mut out = vec![0.0; 2 * c_in];
    for c in 0..c_in {
        for i in 0..h {
            for j in 0..w {
                let p = probs[(c * h + i) * w + j];
                out[2 * c] += p * i as Real / coord_denom(h);
                out[2 * c + 1] += p * j as Real / coord_denom(w);
            }
        }
    }
    out
}

fn naive_weighted_pool(features: &Tensor, weights: &Tensor) -> Vec<Real> {
    let (c_in, h, w) = (features.shape()[0], features.shape()[1], features.shape()[2]);
    let hw = h * w;
    let mut out = vec![0.0; c_in];
    for c in 0..c_in {
        for p in 0..hw {
            out[c] += features.data()[c * hw + p] * weights.data()[p];
        }
    }
    out
}

fn naive_linear(weights: &Tensor, input: &Tensor, bias: &Tensor) -> Vec<Real> {
    let (m, n) = (weights.shape()[0], weights.shape()[1]);
    (0..m)
        .map(|r| {
            bias.data()[r]
                + (0..n).map(|c| weights.data()[r * n + c] * input.data()[c]).sum::<Real>()
        })
        .collect()
}

/// The 3x3 stacking layer written as a convolution with binary kernels.
fn stack3x3_binary_kernels(c_in: usize) -> Tensor {
    let mut data = vec![0.0; (9 * c_in) * c_in * 9];
    for c in 0..c_in {
        for n in 0..9 {
            let o = c * 9 + n;
            data[((o * c_in + c) * 3 + n / 3) * 3 + n % 3] = 1.0;
        }
    }
    Tensor::new(vec![9 * c_in, c_in, 3, 3], data).expect("fixed shape")
}

fn max_abs_diff(a: &[Real], b: &[Real]) -> Real {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, Real::max)
}

// ---------------------------------------------------------------------------
// Checks.

fn run_check(
    checks: &mut Vec<CheckResult>,
    name: &'static str,
    f: impl FnOnce() -> Result<(bool, String)>,
) {
    let (passed, detail) = match f() {
        Ok((p, d)) => (p, d),
        Err(e) => (false, format!("error: {e}")),
    };
    checks.push(CheckResult { name, passed, detail });
}

const ORACLE_TOL: Real = 1e-12;
const GRAD_TOL: Real = 1e-4;
const FD_STEP: Real = 1e-5;

fn rand_tensor(shape: Vec<usize>, rng: &mut Prng) -> Tensor {
    Tensor::randn(shape, 0.6, rng)
}

/// Random tensor with no coordinate near the ReLU kink, so central
/// differences stay on one side of it.
fn rand_tensor_off_kink(shape: Vec<usize>, rng: &mut Prng) -> Tensor {
    let mut t = Tensor::randn(shape, 0.6, rng);
    for v in t.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1_f64.copysign(*v) as Real;
        }
    }
    t
}

fn check_primitive_oracles(checks: &mut Vec<CheckResult>) {
    run_check(checks, "conv2d vs naive loops", || {
        let mut rng = stream_rng(101, labels::GRADCHECK, 0);
        let mut worst: Real = 0.0;
        for case in 0..30 {
            let (c_in, c_out) = (1 + case % 3, 1 + (case / 3) % 4);
            let k = 1 + 2 * (case % 2);
            let (h, w) = (k + 1 + case % 4, k + 2 + case % 3);
            let input = rand_tensor(vec![c_in, h, w], &mut rng);
            let kernels = rand_tensor(vec![c_out, c_in, k, k], &mut rng);
            let bias = rand_tensor(vec![c_out], &mut rng);
            let mut tape = Tape::new();
            let out = {
                let i = tape.leaf(&input)?;
                let kk = tape.leaf(&kernels)?;
                let b = tape.leaf(&bias)?;
                tape.conv2d_valid(i, kk, b)?
            };
            worst = worst.max(max_abs_diff(
                tape.value(out),
                &naive_conv2d(&input, &kernels, &bias),
            ));
        }
        Ok((worst < ORACLE_TOL, format!("max abs diff {worst:.2e} over 30 cases")))
    });

    run_check(checks, "stack3x3 vs naive and binary conv", || {
        let mut rng = stream_rng(102, labels::GRADCHECK, 0);
        let mut worst: Real = 0.0;
        let mut exact = true;
        for case in 0..20 {
            let c_in = 1 + case % 4;
            let (h, w) = (3 + case % 4, 3 + (case / 2) % 4);
            let input = rand_tensor(vec![c_in, h, w], &mut rng);
            let mut tape = Tape::new();
            let i = tape.leaf(&input)?;
            let stacked = tape.stack3x3(i)?;
            worst = worst.max(max_abs_diff(tape.value(stacked), &naive_stack3x3(&input)));
            let kid = tape.leaf(&stack3x3_binary_kernels(c_in))?;
            let bid = tape.leaf(&Tensor::zeros(vec![9 * c_in]))?;
            let conv = tape.conv2d_valid(i, kid, bid)?;
            exact &= tape.value(stacked) == tape.value(conv);
        }
        Ok((
            worst < ORACLE_TOL && exact,
            format!("max abs diff {worst:.2e}; binary-conv form exact: {exact}"),
        ))
    });

    run_check(checks, "spatial softmax vs naive", || {
        let mut rng = stream_rng(103, labels::GRADCHECK, 0);
        let mut worst: Real = 0.0;
        for case in 0..20 {
            let t = [1.0, 2.5][case % 2];
            let input = rand_tensor(vec![1 + case % 3, 2 + case % 4, 2 + (case / 2) % 3], &mut rng);
            let mut tape = Tape::new();
            let i = tape.leaf(&input)?;
            let out = tape.spatial_softmax(i, t)?;
            worst = worst.max(max_abs_diff(tape.value(out), &naive_spatial_softmax(&input, t)));
        }
        Ok((worst < ORACLE_TOL, format!("max abs diff {worst:.2e} over 20 cases")))
    });

    run_check(checks, "softargmax vs naive", || {
        let mut rng = stream_rng(104, labels::GRADCHECK, 0);
        let mut worst: Real = 0.0;
        for case in 0..20 {
            let input = rand_tensor(vec![1 + case % 3, 2 + case % 5, 2 + (case / 3) % 4], &mut rng);
            let mut tape = Tape::new();
            let i = tape.leaf(&input)?;
            let out = tape.softargmax(i, 1.0)?;
            worst = worst.max(max_abs_diff(tape.value(out), &naive_softargmax(&input, 1.0)));
        }
        Ok((worst < ORACLE_TOL, format!("max abs diff {worst:.2e} over 20 cases")))
    });

    run_check(checks, "weighted pool vs naive", || {
        let mut rng = stream_rng(105, labels::GRADCHECK, 0);
        let mut worst: Real = 0.0;
        for case in 0..20 {
            let (h, w) = (2 + case % 4, 2 + (case / 2) % 4);
            let features = rand_tensor(vec![1 + case % 4, h, w], &mut rng);
            let scores = rand_tensor(vec![1, h, w], &mut rng);
            let mut tape = Tape::new();
            let f = tape.leaf(&features)?;
            let s = tape.leaf(&scores)?;
            let wts = tape.spatial_softmax(s, 1.0)?;
            let pooled = tape.weighted_pool(f, wts)?;
            let weights = Tensor::new(
                vec![1, h, w],
                naive_spatial_softmax(&scores, 1.0),
            )?;
            worst = worst.max(max_abs_diff(
                tape.value(pooled),
                &naive_weighted_pool(&features, &weights),
            ));
        }
        Ok((worst < ORACLE_TOL, format!("max abs diff {worst:.2e} over 20 cases")))
    });

    run_check(checks, "linear vs naive", || {
        let mut rng = stream_rng(106, labels::GRADCHECK, 0);
        let mut worst: Real = 0.0;
        for case in 0..20 {
            let (m, n) = (1 + case % 4, 1 + (case / 2) % 5);
            let wt = rand_tensor(vec![m, n], &mut rng);
            let x = rand_tensor(vec![n], &mut rng);
            let b = rand_tensor(vec![m], &mut rng);
            let mut tape = Tape::new();
            let wid = tape.leaf(&wt)?;
            let xid = tape.leaf(&x)?;
            let bid = tape.leaf(&b)?;
            let out = tape.linear(wid, xid, bid)?;
            worst = worst.max(max_abs_diff(tape.value(out), &naive_linear(&wt, &x, &b)));
        }
        Ok((worst < ORACLE_TOL, format!("max abs diff {worst:.2e} over 20 cases")))
    });
}

/// Gradient-check one primitive through a fixed random projection to a
/// scalar. `build` must apply the op to the leaves it is handed.
fn grad_check_op(
    name: &'static str,
    checks: &mut Vec<CheckResult>,
    params: Vec<Tensor>,
    param_names: Vec<&'static str>,
    build: impl Fn(&mut Tape, &[crate::autograd::ValId]) -> Result<crate::autograd::ValId>,
) {
    run_check(checks, name, || {
        let rng = stream_rng(107, labels::GRADCHECK, name.len() as u64);
        // One fixed projection vector per op, kept out of the checked set.
        let mut proj: Option<Tensor> = None;
        let report = grad_check(&param_names, &params, FD_STEP, 6, &mut rng.clone(), |p, want| {
            let mut tape = Tape::new();
            let ids: Vec<_> = p.iter().map(|t| tape.leaf(t)).collect::<Result<_>>()?;
            let out = build(&mut tape, &ids)?;
            let numel: usize = tape.shape(out).iter().product();
            let flat = tape.reshape(out, vec![numel])?;
            let proj = proj.get_or_insert_with(|| {
                let mut r = stream_rng(108, labels::GRADCHECK, name.len() as u64);
                Tensor::randn(vec![1, numel], 0.7, &mut r)
            });
            let wid = tape.leaf(proj)?;
            let bid = tape.leaf(&Tensor::zeros(vec![1]))?;
            let loss = tape.linear(wid, flat, bid)?;
            let value = tape.value(loss)[0];
            if !want {
                return Ok((value, None));
            }
            let grads = tape.backward(loss)?;
            Ok((
                value,
                Some(
                    ids.iter()
                        .zip(p)
                        .map(|(&id, t)| grads.grad_or_zeros(id, t.numel()))
                        .collect(),
                ),
            ))
        })?;
        Ok((
            report.passes(GRAD_TOL),
            format!(
                "max rel err {:.2e} over {} coords",
                report.max_rel_err(),
                report.total_coords
            ),
        ))
    });
}

fn check_primitive_gradients(checks: &mut Vec<CheckResult>) {
    let mut rng = stream_rng(109, labels::GRADCHECK, 0);

    grad_check_op(
        "conv2d gradients",
        checks,
        vec![
            rand_tensor(vec![2, 6, 6], &mut rng),
            rand_tensor(vec![3, 2, 3, 3], &mut rng),
            rand_tensor(vec![3], &mut rng),
        ],
        vec!["input", "kernels", "bias"],
        |tape, ids| tape.conv2d_valid(ids[0], ids[1], ids[2]),
    );
    grad_check_op(
        "conv1x1 gradients",
        checks,
        vec![
            rand_tensor(vec![3, 4, 4], &mut rng),
            rand_tensor(vec![2, 3, 1, 1], &mut rng),
            rand_tensor(vec![2], &mut rng),
        ],
        vec!["input", "kernels", "bias"],
        |tape, ids| tape.conv1x1(ids[0], ids[1], ids[2]),
    );
    grad_check_op(
        "relu gradients",
        checks,
        vec![rand_tensor_off_kink(vec![3, 4, 4], &mut rng)],
        vec!["input"],
        |tape, ids| tape.relu(ids[0]),
    );
    grad_check_op(
        "stack3x3 gradients",
        checks,
        vec![rand_tensor(vec![2, 5, 5], &mut rng)],
        vec!["input"],
        |tape, ids| tape.stack3x3(ids[0]),
    );
    grad_check_op(
        "spatial softmax gradients",
        checks,
        vec![rand_tensor(vec![2, 4, 5], &mut rng)],
        vec!["scores"],
        |tape, ids| tape.spatial_softmax(ids[0], 1.7),
    );
    grad_check_op(
        "attention pooling gradients",
        checks,
        vec![rand_tensor(vec![3, 4, 4], &mut rng), rand_tensor(vec![1, 4, 4], &mut rng)],
        vec!["features", "scores"],
        |tape, ids| {
            let w = tape.spatial_softmax(ids[1], 1.0)?;
            tape.weighted_pool(ids[0], w)
        },
    );
    grad_check_op(
        "broadcast multiply gradients",
        checks,
        vec![rand_tensor(vec![3], &mut rng), rand_tensor(vec![3, 4, 4], &mut rng)],
        vec!["vector", "map"],
        |tape, ids| tape.broadcast_mul(ids[0], ids[1]),
    );
    grad_check_op(
        "softargmax gradients",
        checks,
        vec![rand_tensor(vec![2, 5, 5], &mut rng)],
        vec!["scores"],
        |tape, ids| tape.softargmax(ids[0], 1.0),
    );
    grad_check_op(
        "linear gradients",
        checks,
        vec![
            rand_tensor(vec![3, 4], &mut rng),
            rand_tensor(vec![4], &mut rng),
            rand_tensor(vec![3], &mut rng),
        ],
        vec!["weights", "input", "bias"],
        |tape, ids| tape.linear(ids[0], ids[1], ids[2]),
    );

    // MSE reaches a scalar on its own, no projection needed.
    run_check(checks, "mse loss gradients", || {
        let mut rng = stream_rng(110, labels::GRADCHECK, 0);
        let params = vec![rand_tensor(vec![2], &mut rng)];
        let label = Tensor::new(vec![2], vec![0.3, -0.4])?;
        let report = grad_check(&["pred"], &params, FD_STEP, 2, &mut rng, |p, want| {
            let mut tape = Tape::new();
            let pid = tape.leaf(&p[0])?;
            let loss = tape.mse_loss(pid, &label)?;
            let value = tape.value(loss)[0];
            if !want {
                return Ok((value, None));
            }
            let grads = tape.backward(loss)?;
            Ok((value, Some(vec![grads.grad_or_zeros(pid, 2)])))
        })?;
        Ok((
            report.passes(GRAD_TOL),
            format!("max rel err {:.2e}", report.max_rel_err()),
        ))
    });
}

fn tiny_episode() -> Result<Episode> {
    let store = Arc::new(GlyphStore::synthetic_sized(6, 50, 2));
    let cfg = SceneConfig::for_canvas(24, CueKind::RedDot, 0.0)?;
    let stream = EpisodeStream::new(StreamSource::Glyphs(store), Split::Train, cfg, 61)?;
    stream.episode(0)
}

/// Gradient-check the full composed network on a real episode.
///
/// `coords_per_param` controls the cost; the self-test uses a light pass and
/// the acceptance suite a heavier one via [`composed_grad_check`].
pub fn composed_grad_check(
    seed: u64,
    coords_per_param: usize,
) -> Result<crate::autograd::GradCheckReport> {
    let arch = ArchitectureConfig::tiny();
    let init = ParameterSet::init(&arch, seed)?;
    let episode = tiny_episode()?;
    let adapt = episode.adapt_tensor();
    let target = episode.target_tensor();
    let label = episode.label_tensor();
    let names: Vec<String> = init.entries().iter().map(|p| p.name.clone()).collect();
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let tensors: Vec<Tensor> = init.entries().iter().map(|p| p.tensor.clone()).collect();
    let mut rng = stream_rng(seed, labels::GRADCHECK, 2);
    grad_check(&name_refs, &tensors, FD_STEP, coords_per_param, &mut rng, |p, want| {
        let params = ParameterSet::from_entries(
            names
                .iter()
                .zip(p)
                .map(|(n, t)| Param { name: n.clone(), tensor: t.clone() })
                .collect(),
        );
        let mut tape = Tape::new();
        let bound = bind_params(&mut tape, &arch, &params)?;
        let trace = predict(&mut tape, &arch, &bound, &adapt, &target)?;
        let loss = tape.mse_loss(trace.prediction, &label)?;
        let value = tape.value(loss)[0];
        if !want {
            return Ok((value, None));
        }
        let grads = tape.backward(loss)?;
        Ok((
            value,
            Some(
                bound
                    .all
                    .iter()
                    .zip(p)
                    .map(|(&id, t)| grads.grad_or_zeros(id, t.numel()))
                    .collect(),
            ),
        ))
    })
}

fn check_composed(checks: &mut Vec<CheckResult>) {
    run_check(checks, "composed localizer gradients", || {
        let report = composed_grad_check(31, 2)?;
        Ok((
            report.passes(GRAD_TOL),
            format!(
                "max rel err {:.2e} over {} coords",
                report.max_rel_err(),
                report.total_coords
            ),
        ))
    });

    run_check(checks, "sliding-window tower equivalence", || {
        let arch = ArchitectureConfig::tiny();
        let params = ParameterSet::init(&arch, 17)?;
        let mut rng = stream_rng(17, labels::GRADCHECK, 3);
        let size = 16;
        let rf = arch.receptive_field();
        let image = Tensor::randn(vec![3, size, size], 0.5, &mut rng);
        let mut tape = Tape::new();
        let bound = bind_params(&mut tape, &arch, &params)?;
        let img = tape.leaf(&image)?;
        let feat = crate::model::tower_forward(&mut tape, &arch, &bound, img)?;
        let fs = size - rf + 1;
        let c_f = tape.shape(feat)[0];
        let full = tape.value(feat).to_vec();
        let mut worst: Real = 0.0;
        for i in 0..fs {
            for j in 0..fs {
                let mut crop = vec![0.0; 3 * rf * rf];
                for c in 0..3 {
                    for r in 0..rf {
                        for q in 0..rf {
                            crop[(c * rf + r) * rf + q] = image.data()[(c * size + i + r) * size + j + q];
                        }
                    }
                }
                let mut t2 = Tape::new();
                let b2 = bind_params(&mut t2, &arch, &params)?;
                let cid = t2.leaf(&Tensor::new(vec![3, rf, rf], crop)?)?;
                let f2 = crate::model::tower_forward(&mut t2, &arch, &b2, cid)?;
                for c in 0..c_f {
                    let a = full[(c * fs + i) * fs + j];
                    let b = t2.value(f2)[c];
                    worst = worst.max((a - b).abs());
                }
            }
        }
        Ok((worst < 1e-9, format!("max abs diff {worst:.2e} over {} windows", fs * fs)))
    });
}

fn check_plumbing(checks: &mut Vec<CheckResult>) {
    run_check(checks, "adam first-step identity", || {
        let cfg = AdamConfig::default();
        let mut st = AdamState::new(4);
        let mut theta = vec![0.7, -0.3, 1.2, 0.0];
        let grad = vec![5.0, -0.01, 2.0, 0.0];
        let before = theta.clone();
        st.step(&cfg, &mut theta, &grad)?;
        let mut worst: Real = 0.0;
        for i in 0..4 {
            let expect = before[i] - cfg.lr * grad[i] / (grad[i].abs() + cfg.epsilon);
            worst = worst.max((theta[i] - expect).abs());
        }
        Ok((worst < 1e-15, format!("max abs diff {worst:.2e}")))
    });

    run_check(checks, "checkpoint byte round trip", || {
        let ck = Checkpoint::fresh(ArchitectureConfig::tiny(), AdamConfig::default(), 23)?;
        let bytes = ck.to_bytes()?;
        let back = Checkpoint::from_bytes(&bytes)?;
        let identical = back == ck && back.to_bytes()? == bytes;
        Ok((identical, format!("{} bytes", bytes.len())))
    });

    run_check(checks, "episode determinism and exact labels", || {
        let make = || -> Result<EpisodeStream> {
            let store = Arc::new(GlyphStore::synthetic_sized(6, 50, 2));
            let cfg = SceneConfig::for_canvas(24, CueKind::RedDot, 0.0)?;
            EpisodeStream::new(StreamSource::Glyphs(store), Split::Train, cfg, 77)
        };
        let (a, b) = (make()?, make()?);
        let mut ok = true;
        for i in 0..3 {
            let (ea, eb) = (a.episode(i)?, b.episode(i)?);
            ok &= ea == eb;
            let denom = 23.0;
            ok &= ea.meta.label_x == ea.meta.target.objects[0].x / denom;
            ok &= ea.meta.label_y == ea.meta.target.objects[0].y / denom;
        }
        Ok((ok, "3 episodes compared".into()))
    });

    run_check(checks, "metric identities", || {
        let mut rng = stream_rng(111, labels::GRADCHECK, 0);
        let pairs: Vec<([Real; 2], [Real; 2])> = (0..50)
            .map(|_| {
                (
                    [rng.gen::<Real>(), rng.gen::<Real>()],
                    [rng.gen::<Real>(), rng.gen::<Real>()],
                )
            })
            .collect();
        let ids: Vec<u64> = (0..50).collect();
        let r = EvalReport::from_pairs(&pairs, &ids)?;
        let pct_ok = (r.pct - (r.mse / 2.0).sqrt()).abs() < 1e-12;
        let mono_ok = r.success_at_15 >= r.success_at_10;
        Ok((
            pct_ok && mono_ok,
            format!("pct identity {pct_ok}, threshold monotonicity {mono_ok}"),
        ))
    });
}

/// Run the whole suite.
pub fn run_selftest() -> SelfTestReport {
    let mut checks = Vec::new();
    check_primitive_oracles(&mut checks);
    check_primitive_gradients(&mut checks);
    check_composed(&mut checks);
    check_plumbing(&mut checks);
    SelfTestReport { checks }
}
