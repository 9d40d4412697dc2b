//! Rough wall-clock timing of the desk-scale hot path, op by op, to guide
//! optimization. Not a benchmark suite; see `benches/` for criterion runs.

use std::sync::Arc;
use std::time::Instant;

use cueloc::autograd::{Tape, Tensor};
use cueloc::model::{bind_params, predict, ArchitectureConfig, ParameterSet};
use cueloc::rng::{stream_rng, labels};
use cueloc::scene::{CueKind, EpisodeStream, GlyphStore, SceneConfig, Split, StreamSource};
use cueloc::train::loss_and_gradients;
use cueloc::Result;

fn time<R>(label: &str, reps: usize, mut f: impl FnMut() -> R) -> R {
    let t0 = Instant::now();
    let mut out = f();
    for _ in 1..reps {
        out = f();
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("{label:<34} {:>9.3} ms", dt * 1e3);
    out
}

fn main() -> Result<()> {
    let arch = ArchitectureConfig::desk();
    let params = ParameterSet::init(&arch, 1)?;
    let store = Arc::new(GlyphStore::synthetic(2024));
    let scene = SceneConfig::for_canvas(64, CueKind::RedDot, 0.0)?;
    let stream = EpisodeStream::new(StreamSource::Glyphs(store), Split::Train, scene, 7)?;
    let episode = time("episode generation", 20, || stream.episode(3).unwrap());

    let adapt = episode.adapt_tensor();
    let target = episode.target_tensor();
    let mut rng = stream_rng(1, labels::GRADCHECK, 0);

    // Individual tower-scale ops.
    let img = Tensor::randn(vec![3, 64, 64], 1.0, &mut rng);
    let k5 = Tensor::randn(vec![8, 3, 5, 5], 0.1, &mut rng);
    let b5 = Tensor::zeros(vec![8]);
    time("conv 3->8 k5 @64 fwd", 50, || {
        let mut t = Tape::new();
        let i = t.leaf(&img).unwrap();
        let k = t.leaf(&k5).unwrap();
        let b = t.leaf(&b5).unwrap();
        t.conv2d_valid(i, k, b).unwrap()
    });

    let x2 = Tensor::randn(vec![8, 60, 60], 1.0, &mut rng);
    let k3 = Tensor::randn(vec![16, 8, 3, 3], 0.1, &mut rng);
    let b3 = Tensor::zeros(vec![16]);
    time("conv 8->16 k3 @60 fwd", 50, || {
        let mut t = Tape::new();
        let i = t.leaf(&x2).unwrap();
        let k = t.leaf(&k3).unwrap();
        let b = t.leaf(&b3).unwrap();
        t.conv2d_valid(i, k, b).unwrap()
    });

    let stacked = Tensor::randn(vec![144, 56, 56], 1.0, &mut rng);
    let k11 = Tensor::randn(vec![32, 144, 1, 1], 0.1, &mut rng);
    let b11 = Tensor::zeros(vec![32]);
    time("conv 144->32 1x1 @56 fwd", 50, || {
        let mut t = Tape::new();
        let i = t.leaf(&stacked).unwrap();
        let k = t.leaf(&k11).unwrap();
        let b = t.leaf(&b11).unwrap();
        t.conv1x1(i, k, b).unwrap()
    });

    time("conv 144->32 1x1 @56 fwd+bwd", 20, || {
        let mut t = Tape::new();
        let i = t.leaf(&stacked).unwrap();
        let k = t.leaf(&k11).unwrap();
        let b = t.leaf(&b11).unwrap();
        let o = t.conv1x1(i, k, b).unwrap();
        let n: usize = t.shape(o).iter().product();
        let f = t.reshape(o, vec![n]).unwrap();
        let w = t.leaf(&Tensor::zeros(vec![1, n])).unwrap();
        let bb = t.leaf(&Tensor::zeros(vec![1])).unwrap();
        let l = t.linear(w, f, bb).unwrap();
        t.backward(l).unwrap()
    });

    let x16 = Tensor::randn(vec![16, 58, 58], 1.0, &mut rng);
    time("stack3x3 16ch @58 fwd", 50, || {
        let mut t = Tape::new();
        let i = t.leaf(&x16).unwrap();
        t.stack3x3(i).unwrap()
    });

    time("full predict fwd", 10, || {
        let mut t = Tape::new();
        let bound = bind_params(&mut t, &arch, &params).unwrap();
        predict(&mut t, &arch, &bound, &adapt, &target).unwrap()
    });

    time("loss_and_gradients (1 episode)", 10, || {
        loss_and_gradients(&arch, &params, &episode).unwrap()
    });

    Ok(())
}
