//! Cold-start experiment: scale the attention and scorer weight
//! initialization by a gain and watch whether validation error escapes the
//! center-prediction plateau.
//!
//! Usage: coldstart [steps] [gain] [seed] [arch]

use cueloc::autograd::AdamState;
use cueloc::model::{ArchitectureConfig, Localizer, ParameterSet};
use cueloc::scene::CueKind;
use cueloc::train::{evaluate, loss_and_gradients, Protocol, TrainConfig};
use cueloc::Real;

fn main() -> cueloc::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map_or(2000, |s| s.parse().expect("steps"));
    let gain: Real = args.get(2).map_or(1.0, |s| s.parse().expect("gain"));
    let seed: u64 = args.get(3).map_or(1, |s| s.parse().expect("seed"));
    let arch_name = args.get(4).map_or("tiny", |s| s.as_str());

    let mut cfg = TrainConfig::desk(Protocol::SyntheticGlyphs, CueKind::RedDot, 0.0, seed);
    cfg.architecture = ArchitectureConfig::by_name(arch_name)?;
    cfg.canvas = cfg.architecture.input_size;
    let source = cfg.build_source()?;
    let stream = cfg.train_stream(source.clone())?;
    let val = cfg.validation_stream(source)?;

    let mut params = ParameterSet::init(&cfg.architecture, seed)?;
    for e in params.entries_mut() {
        if (e.name.starts_with("attention.") || e.name.starts_with("scorer."))
            && e.name.ends_with(".weight")
        {
            for v in e.tensor.data_mut() {
                *v *= gain;
            }
        }
    }
    let mut adam: Vec<AdamState> = params
        .entries()
        .iter()
        .map(|e| AdamState::new(e.tensor.numel()))
        .collect();

    let batch = cfg.batch_size;
    for step in 0..steps {
        let mut grads: Vec<Vec<Real>> = params
            .entries()
            .iter()
            .map(|e| vec![0.0; e.tensor.numel()])
            .collect();
        let mut mean_loss = 0.0;
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
        if (step + 1) % 100 == 0 {
            let loc = Localizer::new(cfg.architecture.clone(), params.clone());
            let r = evaluate(&loc, &val, 0, 32, 1)?;
            println!(
                "gain {gain} step {:5} loss {mean_loss:.5} val mse {:.5} s@15 {:.3}",
                step + 1,
                r.mse,
                r.success_at_15
            );
        }
    }
    Ok(())
}
