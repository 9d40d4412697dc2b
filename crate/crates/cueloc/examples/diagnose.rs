//! Prints intermediate-activation statistics and per-parameter gradient
//! norms for a freshly initialized (or briefly trained) model on one
//! episode. Used to find links in the chain where signal dies.
//!
//! Usage: diagnose [steps] [arch] [seed]

use cueloc::autograd::{AdamState, Tape};
use cueloc::model::{bind_params, predict, ArchitectureConfig, ParameterSet};
use cueloc::scene::CueKind;
use cueloc::train::{loss_and_gradients, Protocol, TrainConfig};
use cueloc::Real;

fn stats(name: &str, v: &[Real]) {
    let n = v.len() as Real;
    let mean = v.iter().sum::<Real>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<Real>() / n;
    let max = v.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
    let min = v.iter().cloned().fold(Real::INFINITY, Real::min);
    println!(
        "  {name:<18} n={:<6} mean={mean:+.4e} std={:.4e} min={min:+.4e} max={max:+.4e}",
        v.len(),
        var.sqrt()
    );
}

fn main() -> cueloc::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map_or(0, |s| s.parse().expect("steps"));
    let arch_name = args.get(2).map_or("tiny", |s| s.as_str());
    let seed: u64 = args.get(3).map_or(1, |s| s.parse().expect("seed"));

    let mut cfg = TrainConfig::desk(Protocol::SyntheticGlyphs, CueKind::RedDot, 0.0, seed);
    cfg.architecture = ArchitectureConfig::by_name(arch_name)?;
    cfg.canvas = cfg.architecture.input_size;
    let source = cfg.build_source()?;
    let stream = cfg.train_stream(source)?;

    let mut params = ParameterSet::init(&cfg.architecture, seed)?;
    let mut adam: Vec<AdamState> = params
        .entries()
        .iter()
        .map(|e| AdamState::new(e.tensor.numel()))
        .collect();

    // Optional plain training steps before the probe.
    for step in 0..steps {
        let mut grads: Vec<Vec<Real>> = params
            .entries()
            .iter()
            .map(|e| vec![0.0; e.tensor.numel()])
            .collect();
        let mut mean_loss = 0.0;
        let batch = cfg.batch_size;
        for i in 0..batch {
            let ep = stream.episode((step * batch + i) as u64)?;
            let (loss, g) = loss_and_gradients(&cfg.architecture, &params, &ep)?;
            mean_loss += loss / batch as Real;
            for (acc, gi) in grads.iter_mut().zip(g) {
                for (a, v) in acc.iter_mut().zip(gi) {
                    *a += v / batch as Real;
                }
            }
        }
        for ((e, st), g) in params.entries_mut().iter_mut().zip(&mut adam).zip(&grads) {
            st.step(&cfg.adam, e.tensor.data_mut(), g)?;
        }
        if step % 50 == 0 {
            println!("step {step:4} loss {mean_loss:.5}");
        }
    }

    let ep = stream.episode(1_000_000)?;
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, &cfg.architecture, &params)?;
    let trace = predict(
        &mut tape,
        &cfg.architecture,
        &bound,
        &ep.adapt_tensor(),
        &ep.target_tensor(),
    )?;
    let loss = tape.mse_loss(trace.prediction, &ep.label_tensor())?;

    println!("== activations (after {steps} steps) ==");
    stats("adapt image", ep.adapt_tensor().data());
    stats("adapt_features", tape.value(trace.adapt_features));
    stats("target_features", tape.value(trace.target_features));
    stats("attention raw", tape.value(trace.attention));
    let alpha = tape.value(trace.alpha);
    stats("alpha", alpha);
    let ent: Real = -alpha
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<Real>();
    println!(
        "  alpha entropy {ent:.4} (uniform would be {:.4})",
        (alpha.len() as Real).ln()
    );
    stats("pooled", tape.value(trace.pooled));
    let sm = tape.value(trace.score_maps);
    stats("score_maps", sm);
    let probs = tape.value(trace.map_probs);
    let k = tape.shape(trace.map_probs)[0];
    let cells = probs.len() / k;
    let map0 = &probs[..cells];
    let pent: Real = -map0
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<Real>();
    println!(
        "  map0 prob entropy {pent:.4} (uniform {:.4}), max {:.4e}",
        (cells as Real).ln(),
        map0.iter().cloned().fold(Real::NEG_INFINITY, Real::max)
    );
    stats("keypoints", tape.value(trace.keypoints));
    println!(
        "  prediction {:?}  label {:?}  loss {:.6}",
        tape.value(trace.prediction),
        ep.label_rc(),
        tape.value(loss)[0]
    );

    println!("== gradient norms ==");
    let grads = tape.backward(loss)?;
    for (&id, e) in bound.all.iter().zip(params.entries()) {
        let g = grads.grad_or_zeros(id, e.tensor.numel());
        let l2 = g.iter().map(|v| v * v).sum::<Real>().sqrt();
        let gmax = g.iter().fold(0.0 as Real, |m, &v| m.max(v.abs()));
        println!("  {:<22} l2={l2:.4e} max={gmax:.4e}", e.name);
    }
    Ok(())
}
