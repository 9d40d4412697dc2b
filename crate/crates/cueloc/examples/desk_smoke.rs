//! Desk-scale convergence smoke run: prints per-step timing and the
//! validation trajectory so training budgets can be calibrated.
//!
//! Usage: desk_smoke [steps] [seed] [protocol] [cue] [jitter] [arch]

use std::time::Instant;

use cueloc::model::ArchitectureConfig;
use cueloc::scene::CueKind;
use cueloc::train::{train, MetricRecord, Protocol, TrainConfig};

fn main() -> cueloc::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).map_or(200, |s| s.parse().expect("steps"));
    let seed: u64 = args.get(2).map_or(1, |s| s.parse().expect("seed"));
    let protocol: Protocol = args.get(3).map_or(Protocol::SyntheticGlyphs, |s| s.parse().unwrap());
    let cue: CueKind = args.get(4).map_or(CueKind::RedDot, |s| s.parse().unwrap());
    let jitter: f64 = args.get(5).map_or(0.0, |s| s.parse().expect("jitter"));

    let arch = args.get(6).map_or("desk", |s| s.as_str());

    let mut cfg = TrainConfig::desk(protocol, cue, jitter, seed);
    cfg.architecture = ArchitectureConfig::by_name(arch)?;
    cfg.canvas = cfg.architecture.input_size;
    cfg.steps = steps;
    cfg.eval_interval = 100;
    cfg.eval_episodes = 32;

    let start = Instant::now();
    let mut last = Instant::now();
    let mut obs = |r: &MetricRecord| {
        if r.step % 10 == 0 || r.val.is_some() {
            let dt = last.elapsed().as_secs_f64();
            last = Instant::now();
            match &r.val {
                Some(v) => eprintln!(
                    "step {:5}  loss {:.5}  val mse {:.5} s@15 {:.3}  ({:.2}s since last, {:.0}s total)",
                    r.step, r.loss, v.mse, v.success_at_15, dt, start.elapsed().as_secs_f64()
                ),
                None => eprintln!(
                    "step {:5}  loss {:.5}                         ({:.2}s since last)",
                    r.step, r.loss, dt
                ),
            }
        }
    };
    let out = train(&cfg, None, 1, Some(&mut obs))?;
    let per_step = start.elapsed().as_secs_f64() / out.checkpoint.step.max(1) as f64;
    eprintln!(
        "done: {} steps in {:.1}s ({:.3}s/step), final val {:?}",
        out.checkpoint.step,
        start.elapsed().as_secs_f64(),
        per_step,
        out.checkpoint.metrics.map(|m| (m.mse, m.success_at_15))
    );
    Ok(())
}
