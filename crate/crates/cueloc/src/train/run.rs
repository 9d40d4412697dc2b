//! The training loop: batched episode gradients, Adam updates, periodic
//! validation, optional early stopping.
//!
//! Step `t` always consumes training-stream episodes
//! `t*batch .. (t+1)*batch`, and validation always reruns the same fixed
//! episode window, so a run is a pure function of its config and a resumed
//! run continues the interrupted trajectory bit-exactly.

use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::model::{bind_params, predict, ArchitectureConfig, Localizer, ParameterSet};
use crate::parallel::map_indexed;
use crate::scene::Episode;
use crate::train::checkpoint::Checkpoint;
use crate::train::config::TrainConfig;
use crate::train::metrics::{evaluate, EvalReport};
use crate::{Error, Real, Result};

/// One line of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Steps completed when the record was written (1-based).
    pub step: u64,
    /// Mean training loss of the batch at this step.
    pub loss: Real,
    /// Validation report, present on evaluation steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<EvalReport>,
}

/// Final state plus the full metric history of the run.
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<MetricRecord>,
}

/// Loss and per-entry gradients of one episode under the current
/// parameters. Gradients follow the canonical entry order.
pub fn loss_and_gradients(
    architecture: &ArchitectureConfig,
    params: &ParameterSet,
    episode: &Episode,
) -> Result<(Real, Vec<Vec<Real>>)> {
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, architecture, params)?;
    let trace = predict(
        &mut tape,
        architecture,
        &bound,
        &episode.adapt_tensor(),
        &episode.target_tensor(),
    )?;
    let loss = tape.mse_loss(trace.prediction, &episode.label_tensor())?;
    let grads = tape.backward(loss)?;
    let out = bound
        .all
        .iter()
        .zip(params.entries())
        .map(|(&id, e)| grads.grad_or_zeros(id, e.tensor.numel()))
        .collect();
    Ok((tape.value(loss)[0], out))
}

fn abort(step: u64, err: Error) -> Error {
    match err {
        Error::NonFinite { op } => Error::TrainingAborted {
            step,
            detail: format!("non-finite value produced by {op}"),
        },
        other => other,
    }
}

/// Run (or resume) a training job. `observer` sees every metric record as
/// it is produced; pass `None` for silent runs.
pub fn train(
    cfg: &TrainConfig,
    resume: Option<Checkpoint>,
    workers: usize,
    mut observer: Option<&mut dyn FnMut(&MetricRecord)>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let source = cfg.build_source()?;
    let train_stream = cfg.train_stream(source.clone())?;
    let val_stream = cfg.validation_stream(source)?;

    let (mut params, mut adam, start, mut metrics) = match resume {
        Some(ck) => {
            if ck.architecture != cfg.architecture {
                return Err(Error::Config(
                    "resume checkpoint was trained with a different architecture".into(),
                ));
            }
            if ck.seed != cfg.seed {
                return Err(Error::Config(format!(
                    "resume checkpoint has seed {}, config has {}",
                    ck.seed, cfg.seed
                )));
            }
            (ck.params, ck.adam, ck.step, ck.metrics)
        }
        None => {
            let fresh = Checkpoint::fresh(cfg.architecture.clone(), cfg.adam, cfg.seed)?;
            (fresh.params, fresh.adam, 0, None)
        }
    };

    let mut history = Vec::new();
    let batch = cfg.batch_size;
    let mut step = start;
    'steps: while step < cfg.steps {
        let base = step.checked_mul(batch as u64).ok_or_else(|| {
            Error::Config(format!("step {step} x batch {batch} overflows the episode index"))
        })?;
        let results = map_indexed(batch, workers, |i| {
            let episode = train_stream.episode(base + i as u64)?;
            loss_and_gradients(&cfg.architecture, &params, &episode)
        });

        let mut mean_loss = 0.0;
        let mut grads: Vec<Vec<Real>> =
            params.entries().iter().map(|e| vec![0.0; e.tensor.numel()]).collect();
        for r in results {
            let (loss, g) = r.map_err(|e| abort(step, e))?;
            mean_loss += loss;
            for (acc, gi) in grads.iter_mut().zip(g) {
                for (a, v) in acc.iter_mut().zip(gi) {
                    *a += v;
                }
            }
        }
        let inv = 1.0 / batch as Real;
        mean_loss *= inv;
        for g in &mut grads {
            for v in g.iter_mut() {
                *v *= inv;
            }
        }

        for ((entry, state), g) in params.entries_mut().iter_mut().zip(&mut adam).zip(&grads) {
            state
                .step(&cfg.adam, entry.tensor.data_mut(), g)
                .map_err(|e| abort(step, e))?;
        }
        step += 1;

        let mut record = MetricRecord { step, loss: mean_loss, val: None };
        if step % cfg.eval_interval == 0 || step == cfg.steps {
            let localizer = Localizer::new(cfg.architecture.clone(), params.clone());
            let report = evaluate(&localizer, &val_stream, 0, cfg.eval_episodes, workers)?;
            record.val = Some(report.clone());
            metrics = Some(report.clone());
            if let Some(target) = cfg.stop_at_val_mse {
                if report.mse <= target {
                    if let Some(obs) = observer.as_deref_mut() {
                        obs(&record);
                    }
                    history.push(record);
                    break 'steps;
                }
            }
        }
        if let Some(obs) = observer.as_deref_mut() {
            obs(&record);
        }
        history.push(record);
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            architecture: cfg.architecture.clone(),
            params,
            adam_cfg: cfg.adam,
            adam,
            step,
            seed: cfg.seed,
            metrics,
        },
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::AdamState;
    use crate::model::ArchitectureConfig;
    use crate::scene::CueKind;
    use crate::train::config::Protocol;

    fn tiny_cfg(seed: u64, steps: u64) -> TrainConfig {
        let mut cfg = TrainConfig::desk(Protocol::SyntheticGlyphs, CueKind::RedDot, 0.0, seed);
        cfg.canvas = 24;
        cfg.architecture = ArchitectureConfig::tiny();
        cfg.batch_size = 2;
        cfg.steps = steps;
        cfg.eval_interval = 4;
        cfg.eval_episodes = 4;
        cfg
    }

    #[test]
    fn zero_step_budget_returns_initialization() {
        let cfg = tiny_cfg(5, 0);
        let out = train(&cfg, None, 1, None).unwrap();
        let fresh = Checkpoint::fresh(cfg.architecture.clone(), cfg.adam, cfg.seed).unwrap();
        assert_eq!(out.checkpoint.params.max_abs_diff(&fresh.params).unwrap(), 0.0);
        assert_eq!(out.checkpoint.step, 0);
        assert!(out.history.is_empty());
        assert!(out.checkpoint.adam.iter().all(|s| s.t == 0));
    }

    #[test]
    fn identical_seeds_give_bit_identical_checkpoints() {
        let cfg = tiny_cfg(7, 3);
        let a = train(&cfg, None, 1, None).unwrap();
        let b = train(&cfg, None, 1, None).unwrap();
        assert_eq!(
            a.checkpoint.to_bytes().unwrap(),
            b.checkpoint.to_bytes().unwrap()
        );
        let other = train(&tiny_cfg(8, 3), None, 1, None).unwrap();
        assert!(a.checkpoint.params.max_abs_diff(&other.checkpoint.params).unwrap() > 0.0);
    }

    #[test]
    fn fixed_batch_loss_drops_for_most_seeds() {
        // Smoke oracle: repeatedly stepping on one fixed batch must reduce
        // the loss between the first and hundredth step for >= 2 of 3 seeds.
        let mut drops = 0;
        for seed in [1u64, 2, 3] {
            let cfg = tiny_cfg(seed, 1);
            let source = cfg.build_source().unwrap();
            let stream = cfg.train_stream(source).unwrap();
            let episodes: Vec<Episode> =
                (0..2).map(|i| stream.episode(i).unwrap()).collect();
            let mut params = ParameterSet::init(&cfg.architecture, seed).unwrap();
            let mut adam: Vec<AdamState> = params
                .entries()
                .iter()
                .map(|e| AdamState::new(e.tensor.numel()))
                .collect();
            let mut first = None;
            let mut last = 0.0;
            for _ in 0..100 {
                let mut mean = 0.0;
                let mut grads: Vec<Vec<Real>> =
                    params.entries().iter().map(|e| vec![0.0; e.tensor.numel()]).collect();
                for ep in &episodes {
                    let (loss, g) =
                        loss_and_gradients(&cfg.architecture, &params, ep).unwrap();
                    mean += loss / episodes.len() as Real;
                    for (acc, gi) in grads.iter_mut().zip(g) {
                        for (a, v) in acc.iter_mut().zip(gi) {
                            *a += v / episodes.len() as Real;
                        }
                    }
                }
                for ((e, st), g) in
                    params.entries_mut().iter_mut().zip(&mut adam).zip(&grads)
                {
                    st.step(&cfg.adam, e.tensor.data_mut(), g).unwrap();
                }
                if first.is_none() {
                    first = Some(mean);
                }
                last = mean;
            }
            if last < first.unwrap() {
                drops += 1;
            }
        }
        assert!(drops >= 2, "loss dropped for only {drops} of 3 seeds");
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let full = train(&tiny_cfg(9, 6), None, 1, None).unwrap();
        let half = train(&tiny_cfg(9, 3), None, 1, None).unwrap();
        let resumed = train(&tiny_cfg(9, 6), Some(half.checkpoint), 1, None).unwrap();
        assert_eq!(
            resumed.checkpoint.to_bytes().unwrap(),
            full.checkpoint.to_bytes().unwrap()
        );
        // The resumed history covers exactly the second half.
        assert_eq!(resumed.history.len(), 3);
        assert_eq!(resumed.history[0].step, 4);
        assert_eq!(&full.history[3..], &resumed.history[..]);
    }

    #[test]
    fn resume_rejects_mismatched_run() {
        let half = train(&tiny_cfg(9, 2), None, 1, None).unwrap();
        let err = train(&tiny_cfg(10, 4), Some(half.checkpoint.clone()), 1, None);
        assert!(matches!(err, Err(Error::Config(_))));
        let mut other_arch = tiny_cfg(9, 4);
        other_arch.canvas = 64;
        other_arch.architecture = ArchitectureConfig::desk();
        let err = train(&other_arch, Some(half.checkpoint), 1, None);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_parameters_abort_with_step() {
        let half = train(&tiny_cfg(11, 1), None, 1, None).unwrap();
        let mut ck = half.checkpoint;
        // Oversaturate one tower weight so convolution overflows to infinity.
        ck.params.get_mut("tower.0.weight").unwrap().data_mut()[0] = 1e308;
        match train(&tiny_cfg(11, 5), Some(ck), 1, None) {
            Err(Error::TrainingAborted { step, detail }) => {
                assert_eq!(step, 1);
                assert!(detail.contains("non-finite"), "{detail}");
            }
            other => panic!("expected abort, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn observer_sees_every_record_and_evals_fire_on_schedule() {
        let cfg = tiny_cfg(12, 8);
        let mut seen = Vec::new();
        let mut obs = |r: &MetricRecord| seen.push(r.clone());
        let out = train(&cfg, None, 1, Some(&mut obs)).unwrap();
        assert_eq!(seen.len(), 8);
        assert_eq!(seen, out.history);
        for r in &seen {
            assert_eq!(r.val.is_some(), r.step % 4 == 0, "step {}", r.step);
        }
        assert!(out.checkpoint.metrics.is_some());
        // Records serialize to one JSON object per line.
        let line = serde_json::to_string(&seen[0]).unwrap();
        assert!(!line.contains('\n'));
        let back: MetricRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, seen[0]);
    }

    #[test]
    fn early_stop_honors_validation_target() {
        let mut cfg = tiny_cfg(13, 8);
        // Any report satisfies an infinite target, so the run stops at the
        // first evaluation.
        cfg.stop_at_val_mse = Some(Real::INFINITY);
        let out = train(&cfg, None, 1, None).unwrap();
        assert_eq!(out.checkpoint.step, 4);
        assert_eq!(out.history.len(), 4);
        assert!(out.history.last().unwrap().val.is_some());
    }
}
