//! Single-episode memorization probe: a healthy differentiable pipeline
//! must drive the loss on one fixed episode toward zero.
//!
//! Usage: overfit [steps] [seed] [arch] [episodes] [protocol]

use cueloc::autograd::AdamState;
use cueloc::model::{ArchitectureConfig, Localizer, ParameterSet};
use cueloc::scene::CueKind;
use cueloc::train::{evaluate, loss_and_gradients, Protocol, TrainConfig};
use cueloc::Real;

fn main() -> cueloc::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map_or(2000, |s| s.parse().expect("steps"));
    let seed: u64 = args.get(2).map_or(1, |s| s.parse().expect("seed"));
    let arch_name = args.get(3).map_or("tiny", |s| s.as_str());
    let count: u64 = args.get(4).map_or(1, |s| s.parse().expect("episodes"));
    let protocol: Protocol = args
        .get(5)
        .map_or(Protocol::SyntheticGlyphs, |s| s.parse().expect("protocol"));

    let mut cfg = TrainConfig::desk(protocol, CueKind::RedDot, 0.0, seed);
    cfg.architecture = ArchitectureConfig::by_name(arch_name)?;
    cfg.canvas = cfg.architecture.input_size;
    let source = cfg.build_source()?;
    let stream = cfg.train_stream(source.clone())?;
    let val = cfg.validation_stream(source)?;
    let episodes: Vec<_> = (0..count).map(|i| stream.episode(i)).collect::<Result<_, _>>()?;

    let mut params = ParameterSet::init(&cfg.architecture, seed)?;
    let mut adam: Vec<AdamState> = params
        .entries()
        .iter()
        .map(|e| AdamState::new(e.tensor.numel()))
        .collect();

    // Mini-batches cycle through the fixed set in order, like epochs.
    let batch = cfg.batch_size as usize;
    for step in 0..steps {
        let mut grads: Vec<Vec<Real>> = params
            .entries()
            .iter()
            .map(|e| vec![0.0; e.tensor.numel()])
            .collect();
        let mut mean_loss = 0.0;
        for i in 0..batch {
            let ep = &episodes[(step * batch + i) % episodes.len()];
            let (loss, g) = loss_and_gradients(&cfg.architecture, &params, ep)?;
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
        if (step + 1) % 500 == 0 || step == 0 {
            let loc = Localizer::new(cfg.architecture.clone(), params.clone());
            let r = evaluate(&loc, &val, 0, 32, 1)?;
            println!(
                "step {:5} loss {mean_loss:.6} val mse {:.5} s@15 {:.3}",
                step + 1,
                r.mse,
                r.success_at_15
            );
        }
    }
    Ok(())
}
