//! Every differentiable primitive against an independent naive-loop oracle
//! on randomized shapes and values.
//!
//! The oracles here are deliberately re-derived from the operation
//! definitions (plain nested loops, no shared helpers with the library), so
//! a bug in the library's fast paths cannot hide in its own test harness.

use cueloc::autograd::{Tape, Tensor};
use cueloc::rng::{stream_rng, Prng};
use cueloc::Real;
use rand::Rng;

const TOL: Real = 1e-12;

fn randn(shape: Vec<usize>, rng: &mut Prng) -> Tensor {
    Tensor::randn(shape, 0.8, rng)
}

fn assert_close(got: &[Real], want: &[Real], what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: length mismatch");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!(
            (g - w).abs() <= TOL,
            "{what}: index {i} got {g} want {w} (diff {})",
            (g - w).abs()
        );
    }
}

// ---- naive reference implementations ----------------------------------

fn ref_conv2d(
    inp: &Tensor,
    ker: &Tensor,
    bias: &Tensor,
) -> (Vec<Real>, [usize; 3]) {
    let (ci, h, w) = (inp.shape()[0], inp.shape()[1], inp.shape()[2]);
    let (ko, kh, kw) = (ker.shape()[0], ker.shape()[2], ker.shape()[3]);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; ko * oh * ow];
    for o in 0..ko {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = bias.data()[o];
                for c in 0..ci {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let iv = inp.data()[c * h * w + (y + dy) * w + (x + dx)];
                            let kv = ker.data()
                                [o * ci * kh * kw + c * kh * kw + dy * kw + dx];
                            acc += iv * kv;
                        }
                    }
                }
                out[o * oh * ow + y * ow + x] = acc;
            }
        }
    }
    (out, [ko, oh, ow])
}

fn ref_stack3x3(inp: &Tensor) -> (Vec<Real>, [usize; 3]) {
    let (c, h, w) = (inp.shape()[0], inp.shape()[1], inp.shape()[2]);
    let (oh, ow) = (h - 2, w - 2);
    let mut out = vec![0.0; 9 * c * oh * ow];
    for ch in 0..c {
        for n in 0..9 {
            let (dy, dx) = (n / 3, n % 3);
            for y in 0..oh {
                for x in 0..ow {
                    out[(ch * 9 + n) * oh * ow + y * ow + x] =
                        inp.data()[ch * h * w + (y + dy) * w + (x + dx)];
                }
            }
        }
    }
    (out, [9 * c, oh, ow])
}

fn ref_spatial_softmax(inp: &Tensor, temperature: Real) -> Vec<Real> {
    let (c, h, w) = (inp.shape()[0], inp.shape()[1], inp.shape()[2]);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        let plane = &inp.data()[ch * h * w..(ch + 1) * h * w];
        let m = plane.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let exps: Vec<Real> = plane.iter().map(|v| ((v - m) / temperature).exp()).collect();
        let z: Real = exps.iter().sum();
        for (o, e) in out[ch * h * w..(ch + 1) * h * w].iter_mut().zip(&exps) {
            *o = e / z;
        }
    }
    out
}

/// Normalized grid coordinate: position over (side - 1), with a floor of 1
/// on the denominator so single-cell maps land at 0.
fn ref_coord(i: usize, side: usize) -> Real {
    i as Real / (side.max(2) - 1) as Real
}

fn ref_softargmax(inp: &Tensor, temperature: Real) -> Vec<Real> {
    let (c, h, w) = (inp.shape()[0], inp.shape()[1], inp.shape()[2]);
    let probs = ref_spatial_softmax(inp, temperature);
    let mut out = vec![0.0; 2 * c];
    for ch in 0..c {
        let (mut ry, mut rx) = (0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let p = probs[ch * h * w + y * w + x];
                ry += p * ref_coord(y, h);
                rx += p * ref_coord(x, w);
            }
        }
        out[2 * ch] = ry;
        out[2 * ch + 1] = rx;
    }
    out
}

fn ref_weighted_pool(features: &Tensor, weights: &Tensor) -> Vec<Real> {
    let (c, h, w) = (features.shape()[0], features.shape()[1], features.shape()[2]);
    let mut out = vec![0.0; c];
    for ch in 0..c {
        let mut acc = 0.0;
        for y in 0..h {
            for x in 0..w {
                acc += features.data()[ch * h * w + y * w + x] * weights.data()[y * w + x];
            }
        }
        out[ch] = acc;
    }
    out
}

fn ref_linear(w: &Tensor, x: &Tensor, b: &Tensor) -> Vec<Real> {
    let (m, n) = (w.shape()[0], w.shape()[1]);
    (0..m)
        .map(|i| {
            b.data()[i]
                + (0..n).map(|j| w.data()[i * n + j] * x.data()[j]).sum::<Real>()
        })
        .collect()
}

fn ref_broadcast_mul(v: &Tensor, map: &Tensor) -> Vec<Real> {
    let (c, h, w) = (map.shape()[0], map.shape()[1], map.shape()[2]);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for p in 0..h * w {
            out[ch * h * w + p] = v.data()[ch] * map.data()[ch * h * w + p];
        }
    }
    out
}

// ---- randomized comparisons -------------------------------------------

#[test]
fn conv2d_matches_naive_loops() {
    let mut rng = stream_rng(9001, 1, 0);
    for case in 0..100 {
        let ci = rng.gen_range(1..4);
        let ko = rng.gen_range(1..5);
        let kh = [1, 3, 5][rng.gen_range(0..3)];
        let kw = kh;
        let h = kh + rng.gen_range(0..6);
        let w = kw + rng.gen_range(0..6);
        let inp = randn(vec![ci, h, w], &mut rng);
        let ker = randn(vec![ko, ci, kh, kw], &mut rng);
        let bias = randn(vec![ko], &mut rng);
        let mut tape = Tape::new();
        let (i, k, b) = (
            tape.leaf(&inp).unwrap(),
            tape.leaf(&ker).unwrap(),
            tape.leaf(&bias).unwrap(),
        );
        let out = tape.conv2d_valid(i, k, b).unwrap();
        let (want, shape) = ref_conv2d(&inp, &ker, &bias);
        assert_eq!(tape.shape(out), shape, "case {case}");
        assert_close(tape.value(out), &want, &format!("conv case {case}"));
    }
}

#[test]
fn conv1x1_matches_naive_loops() {
    let mut rng = stream_rng(9001, 2, 0);
    for case in 0..100 {
        let ci = rng.gen_range(1..6);
        let ko = rng.gen_range(1..6);
        let h = rng.gen_range(1..7);
        let w = rng.gen_range(1..7);
        let inp = randn(vec![ci, h, w], &mut rng);
        let ker = randn(vec![ko, ci, 1, 1], &mut rng);
        let bias = randn(vec![ko], &mut rng);
        let mut tape = Tape::new();
        let (i, k, b) = (
            tape.leaf(&inp).unwrap(),
            tape.leaf(&ker).unwrap(),
            tape.leaf(&bias).unwrap(),
        );
        let out = tape.conv1x1(i, k, b).unwrap();
        let (want, _) = ref_conv2d(&inp, &ker, &bias);
        assert_close(tape.value(out), &want, &format!("conv1x1 case {case}"));
    }
}

#[test]
fn stack3x3_matches_naive_loops() {
    let mut rng = stream_rng(9001, 3, 0);
    for case in 0..100 {
        let c = rng.gen_range(1..4);
        let h = rng.gen_range(3..9);
        let w = rng.gen_range(3..9);
        let inp = randn(vec![c, h, w], &mut rng);
        let mut tape = Tape::new();
        let i = tape.leaf(&inp).unwrap();
        let out = tape.stack3x3(i).unwrap();
        let (want, shape) = ref_stack3x3(&inp);
        assert_eq!(tape.shape(out), shape);
        assert_close(tape.value(out), &want, &format!("stack3x3 case {case}"));
    }
}

/// The neighborhood-stacking op is definitionally a convolution whose
/// kernels are indicator weights; the two computations must agree exactly,
/// not just within tolerance.
#[test]
fn stack3x3_equals_binary_kernel_convolution() {
    let mut rng = stream_rng(9001, 4, 0);
    for _ in 0..100 {
        let c = rng.gen_range(1..4);
        let h = rng.gen_range(3..8);
        let w = rng.gen_range(3..8);
        let inp = randn(vec![c, h, w], &mut rng);
        // Kernel (ch * 9 + n) picks neighbor n of channel ch.
        let mut ker = Tensor::zeros(vec![9 * c, c, 3, 3]);
        for ch in 0..c {
            for n in 0..9 {
                let o = ch * 9 + n;
                ker.data_mut()[o * c * 9 + ch * 9 + n] = 1.0;
            }
        }
        let bias = Tensor::zeros(vec![9 * c]);
        let mut tape = Tape::new();
        let i = tape.leaf(&inp).unwrap();
        let k = tape.leaf(&ker).unwrap();
        let b = tape.leaf(&bias).unwrap();
        let stacked = tape.stack3x3(i).unwrap();
        let conved = tape.conv2d_valid(i, k, b).unwrap();
        assert_eq!(tape.shape(stacked), tape.shape(conved));
        for (s, c) in tape.value(stacked).iter().zip(tape.value(conved)) {
            assert_eq!(s.to_bits(), c.to_bits(), "copy and convolution disagree");
        }
    }
}

#[test]
fn spatial_softmax_matches_naive_and_sums_to_one() {
    let mut rng = stream_rng(9001, 5, 0);
    for case in 0..100 {
        let c = rng.gen_range(1..4);
        let h = rng.gen_range(1..7);
        let w = rng.gen_range(1..7);
        let temperature = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
        let inp = randn(vec![c, h, w], &mut rng);
        let mut tape = Tape::new();
        let i = tape.leaf(&inp).unwrap();
        let out = tape.spatial_softmax(i, temperature).unwrap();
        let want = ref_spatial_softmax(&inp, temperature);
        assert_close(tape.value(out), &want, &format!("softmax case {case}"));
        for ch in 0..c {
            let z: Real = tape.value(out)[ch * h * w..(ch + 1) * h * w].iter().sum();
            assert!((z - 1.0).abs() < 1e-12, "channel {ch} sums to {z}");
        }
    }
}

#[test]
fn spatial_softmax_is_shift_invariant() {
    // Adding a constant to a plane must not change its softmax; this is
    // what the max-subtraction trick relies on.
    let mut rng = stream_rng(9001, 6, 0);
    for _ in 0..50 {
        let inp = randn(vec![2, 4, 5], &mut rng);
        let mut shifted = inp.clone();
        for v in shifted.data_mut()[..20].iter_mut() {
            *v += 300.0;
        }
        let mut tape = Tape::new();
        let a = tape.leaf(&inp).unwrap();
        let b = tape.leaf(&shifted).unwrap();
        let oa = tape.spatial_softmax(a, 1.0).unwrap();
        let ob = tape.spatial_softmax(b, 1.0).unwrap();
        let (va, vb) = (tape.value(oa).to_vec(), tape.value(ob));
        for (x, y) in va.iter().zip(vb) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn softargmax_matches_naive_expectation() {
    let mut rng = stream_rng(9001, 7, 0);
    for case in 0..100 {
        let c = rng.gen_range(1..5);
        let h = rng.gen_range(1..8);
        let w = rng.gen_range(1..8);
        let inp = randn(vec![c, h, w], &mut rng);
        let mut tape = Tape::new();
        let i = tape.leaf(&inp).unwrap();
        let out = tape.softargmax(i, 1.0).unwrap();
        assert_eq!(tape.shape(out), [c, 2]);
        let want = ref_softargmax(&inp, 1.0);
        assert_close(tape.value(out), &want, &format!("softargmax case {case}"));
    }
}

#[test]
fn softargmax_approaches_argmax_as_temperature_drops() {
    let mut rng = stream_rng(9001, 8, 0);
    for _ in 0..20 {
        let inp = randn(vec![1, 6, 6], &mut rng);
        let mut data = inp.data().to_vec();
        let best = (0..36).max_by(|&a, &b| data[a].total_cmp(&data[b])).unwrap();
        // Guarantee a clear margin over the runner-up so the sharpened
        // softmax concentrates on a single cell.
        data[best] += 1.0;
        let inp = Tensor::new(vec![1, 6, 6], data).unwrap();
        let (by, bx) = (best / 6, best % 6);
        let mut tape = Tape::new();
        let i = tape.leaf(&inp).unwrap();
        let out = tape.softargmax(i, 0.01).unwrap();
        let v = tape.value(out);
        assert!((v[0] - ref_coord(by, 6)).abs() < 1e-6, "row {} vs {}", v[0], by);
        assert!((v[1] - ref_coord(bx, 6)).abs() < 1e-6, "col {} vs {}", v[1], bx);
    }
}

#[test]
fn weighted_pool_matches_naive_loops() {
    let mut rng = stream_rng(9001, 9, 0);
    for case in 0..100 {
        let c = rng.gen_range(1..6);
        let h = rng.gen_range(1..7);
        let w = rng.gen_range(1..7);
        let features = randn(vec![c, h, w], &mut rng);
        // Weights through a softmax so they satisfy the pool's convex
        // combination contract.
        let raw = randn(vec![1, h, w], &mut rng);
        let mut tape = Tape::new();
        let f = tape.leaf(&features).unwrap();
        let r = tape.leaf(&raw).unwrap();
        let wts = tape.spatial_softmax(r, 1.0).unwrap();
        let out = tape.weighted_pool(f, wts).unwrap();
        assert_eq!(tape.shape(out), [c]);
        let want = ref_weighted_pool(&features, &tape.tensor(wts));
        assert_close(tape.value(out), &want, &format!("pool case {case}"));
    }
}

#[test]
fn uniform_pool_is_plane_mean() {
    let mut rng = stream_rng(9001, 10, 0);
    let features = randn(vec![3, 5, 4], &mut rng);
    let weights = Tensor::full(vec![1, 5, 4], 1.0 / 20.0);
    let mut tape = Tape::new();
    let f = tape.leaf(&features).unwrap();
    let w = tape.leaf(&weights).unwrap();
    let out = tape.weighted_pool(f, w).unwrap();
    for ch in 0..3 {
        let mean: Real =
            features.data()[ch * 20..(ch + 1) * 20].iter().sum::<Real>() / 20.0;
        assert!((tape.value(out)[ch] - mean).abs() < 1e-12);
    }
}

#[test]
fn broadcast_mul_matches_naive_loops() {
    let mut rng = stream_rng(9001, 11, 0);
    for case in 0..100 {
        let c = rng.gen_range(1..6);
        let h = rng.gen_range(1..7);
        let w = rng.gen_range(1..7);
        let v = randn(vec![c], &mut rng);
        let map = randn(vec![c, h, w], &mut rng);
        let mut tape = Tape::new();
        let vi = tape.leaf(&v).unwrap();
        let mi = tape.leaf(&map).unwrap();
        let out = tape.broadcast_mul(vi, mi).unwrap();
        let want = ref_broadcast_mul(&v, &map);
        assert_close(tape.value(out), &want, &format!("broadcast case {case}"));
    }
}

#[test]
fn linear_matches_naive_loops() {
    let mut rng = stream_rng(9001, 12, 0);
    for case in 0..100 {
        let m = rng.gen_range(1..8);
        let n = rng.gen_range(1..10);
        let w = randn(vec![m, n], &mut rng);
        let x = randn(vec![n], &mut rng);
        let b = randn(vec![m], &mut rng);
        let mut tape = Tape::new();
        let (wi, xi, bi) = (
            tape.leaf(&w).unwrap(),
            tape.leaf(&x).unwrap(),
            tape.leaf(&b).unwrap(),
        );
        let out = tape.linear(wi, xi, bi).unwrap();
        let want = ref_linear(&w, &x, &b);
        assert_close(tape.value(out), &want, &format!("linear case {case}"));
    }
}

#[test]
fn relu_clamps_exactly() {
    let mut rng = stream_rng(9001, 13, 0);
    for _ in 0..50 {
        let inp = randn(vec![2, 3, 4], &mut rng);
        let mut tape = Tape::new();
        let i = tape.leaf(&inp).unwrap();
        let out = tape.relu(i).unwrap();
        for (o, &v) in tape.value(out).iter().zip(inp.data()) {
            assert_eq!(*o, v.max(0.0));
        }
    }
}

#[test]
fn mse_loss_is_mean_squared_distance() {
    let mut rng = stream_rng(9001, 14, 0);
    for _ in 0..50 {
        let pred = randn(vec![2], &mut rng);
        let label = randn(vec![2], &mut rng);
        let mut tape = Tape::new();
        let p = tape.leaf(&pred).unwrap();
        let loss = tape.mse_loss(p, &label).unwrap();
        let want = (pred.data()[0] - label.data()[0]).powi(2)
            + (pred.data()[1] - label.data()[1]).powi(2);
        assert!((tape.value(loss)[0] - want).abs() < 1e-12);
    }
}

#[test]
fn fused_1x1_path_agrees_with_general_kernel_shapes() {
    // The library dispatches 1x1 convolutions to a matmul fast path; drive
    // both shapes through conv2d_valid and compare against the same oracle
    // to pin the dispatch itself.
    let mut rng = stream_rng(9001, 15, 0);
    for _ in 0..50 {
        let ci = rng.gen_range(1..5);
        let ko = rng.gen_range(1..5);
        let h = rng.gen_range(1..9);
        let w = rng.gen_range(1..9);
        let inp = randn(vec![ci, h, w], &mut rng);
        let ker = randn(vec![ko, ci, 1, 1], &mut rng);
        let bias = randn(vec![ko], &mut rng);
        let mut tape = Tape::new();
        let (i, k, b) = (
            tape.leaf(&inp).unwrap(),
            tape.leaf(&ker).unwrap(),
            tape.leaf(&bias).unwrap(),
        );
        let general = tape.conv2d_valid(i, k, b).unwrap();
        let fused = tape.conv1x1(i, k, b).unwrap();
        let (want, _) = ref_conv2d(&inp, &ker, &bias);
        assert_close(tape.value(general), &want, "general 1x1");
        assert_close(tape.value(fused), &want, "fused 1x1");
    }
}
