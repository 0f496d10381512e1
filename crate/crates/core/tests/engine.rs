mod common;

use common::{counted, world};
use reauthor_core::adapters::sim::{SimulationParams, SyntheticScene};
use reauthor_core::engine::{fixed_iterations, resume, run_reconstruction, EngineError, Reconstructor};
use reauthor_core::media::MemoryStore;
use reauthor_core::model::{earliest_argmax, ReconstructionSession, SessionId, SessionStatus, StoppingPolicy};
use reauthor_core::similarity::best_so_far;
use std::ops::ControlFlow;
use std::sync::atomic::Ordering;
use std::sync::Arc;

fn policy(max: u32, patience: u32) -> StoppingPolicy {
    StoppingPolicy::new(max, patience, 0.0).unwrap()
}

fn scene_of(w: &common::World, text: &str) -> SyntheticScene {
    w.backend.scene_for_prompt(text, Some(&w.truth))
}

#[test]
fn default_simulation_climbs_then_converges_on_truth() {
    let w = world(11, SimulationParams::default(), 1);
    let s = run_reconstruction(w.clip.clone(), &w.adapters, &w.env, &policy(10, 2), None).unwrap();
    let scores: Vec<f64> = s.scores().collect();

    // 3 wrong attributes, 2 fixed per comparison: 3 -> 1 -> 0 wrong.
    assert!(scores[0] < scores[1] && scores[1] < scores[2], "{scores:?}");
    assert!(scores[2..].iter().all(|&x| (x - scores[2]).abs() < 1e-12), "{scores:?}");
    assert_eq!(s.status(), &SessionStatus::Converged);
    assert_eq!(s.records().len(), 5);
    assert_eq!(s.best_index(), Some(3));
    assert!((scores[2] - 1.0).abs() < 1e-6);
    assert_eq!(scene_of(&w, s.best_prompt().unwrap().text()), w.truth);
}

#[test]
fn single_iteration_never_compares() {
    let w = world(3, SimulationParams::default(), 2);
    let (adapters, generator, comparator) = counted(&w.adapters, None);
    let s = run_reconstruction(w.clip.clone(), &adapters, &w.env, &policy(1, 2), None).unwrap();
    assert_eq!(s.records().len(), 1);
    assert_eq!(s.status(), &SessionStatus::MaxReached);
    assert_eq!(s.best_index(), Some(1));
    assert!(s.records()[0].report.is_none());
    assert_eq!(generator.calls.load(Ordering::SeqCst), 1);
    assert_eq!(comparator.calls.load(Ordering::SeqCst), 0);

    let k1 = fixed_iterations(w.clip.clone(), &w.adapters, &w.env, 1).unwrap();
    assert_eq!(k1.records().len(), 1);
    assert_eq!(k1.status(), &SessionStatus::MaxReached);
}

#[test]
fn full_drift_stops_after_peak_and_keeps_peak_prompt() {
    let params = SimulationParams {
        p_drift: 1.0,
        ..SimulationParams::default()
    };
    for clip_seed in 0..10 {
        let w = world(5, params.clone(), clip_seed);
        let s = run_reconstruction(w.clip.clone(), &w.adapters, &w.env, &policy(10, 2), None).unwrap();
        let scores: Vec<f64> = s.scores().collect();
        let peak = earliest_argmax(scores.iter().copied()).unwrap();
        assert_eq!(s.best_index(), Some(peak));
        assert_eq!(s.status(), &SessionStatus::Converged);
        assert!(s.records().len() as u32 <= peak + 2, "{scores:?}");
        assert!(scores[peak as usize..].iter().all(|&x| x <= scores[peak as usize - 1]));
        assert!(scores[peak as usize] < scores[peak as usize - 1], "drift lowers the next score");
        assert_eq!(scene_of(&w, s.best_prompt().unwrap().text()), w.truth);
    }
}

#[test]
fn fixed_iterations_ignore_convergence() {
    let w = world(2, SimulationParams::default(), 4);
    for k in [6, 10] {
        let s = fixed_iterations(w.clip.clone(), &w.adapters, &w.env, k).unwrap();
        assert_eq!(s.records().len(), k as usize);
        assert_eq!(s.status(), &SessionStatus::MaxReached);
    }
}

#[test]
fn call_counts_and_trace_properties() {
    for seed in 0..25u64 {
        let params = SimulationParams {
            init_errors: (seed % 6) as usize,
            fix_per_iter: 1 + (seed % 3) as usize,
            p_drift: (seed % 4) as f64 / 4.0,
            ..SimulationParams::default()
        };
        let w = world(seed, params, seed + 100);
        let (adapters, generator, comparator) = counted(&w.adapters, None);
        let p = policy(2 + (seed % 9) as u32, (seed % 3) as u32);
        let s = run_reconstruction(w.clip.clone(), &adapters, &w.env, &p, None).unwrap();
        let n = s.records().len();
        assert_eq!(generator.calls.load(Ordering::SeqCst), n);
        assert_eq!(comparator.calls.load(Ordering::SeqCst), n - 1);
        let scores: Vec<f64> = s.scores().collect();
        assert_eq!(s.best_index(), earliest_argmax(scores.iter().copied()));
        let bsf = best_so_far(&s.trace().unwrap());
        assert!(bsf.windows(2).all(|w| w[0] <= w[1]));
        for (i, r) in s.records().iter().enumerate() {
            assert_eq!(r.index as usize, i + 1);
            assert_eq!(r.report.is_none(), i + 1 == n);
        }
    }
}

#[test]
fn identical_inputs_give_field_identical_sessions() {
    let run = || {
        let w = world(9, SimulationParams::default(), 8);
        run_reconstruction(w.clip.clone(), &w.adapters, &w.env, &policy(10, 2), None).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn resume_after_interrupt_matches_uninterrupted_run() {
    let params = SimulationParams {
        p_drift: 0.5,
        ..SimulationParams::default()
    };
    let p = policy(10, 3);
    let full = {
        let w = world(21, params.clone(), 3);
        run_reconstruction(w.clip.clone(), &w.adapters, &w.env, &p, None).unwrap()
    };

    let w = world(21, params, 3);
    let mut stop_after_two = |_: &ReconstructionSession, r: &reauthor_core::IterationRecord| {
        if r.index == 2 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    };
    let partial = run_reconstruction(w.clip.clone(), &w.adapters, &w.env, &p, Some(&mut stop_after_two)).unwrap();
    assert_eq!(partial.status(), &SessionStatus::Running);
    assert_eq!(partial.records().len(), 2);

    // Round-trip through the persisted form before resuming.
    let stored = serde_json::to_string(&partial).unwrap();
    let reloaded: ReconstructionSession = serde_json::from_str(&stored).unwrap();
    let resumed = resume(reloaded, &w.adapters, &w.env, &p).unwrap();
    assert_eq!(
        serde_json::to_string(&resumed).unwrap(),
        serde_json::to_string(&full).unwrap()
    );
}

#[test]
fn resume_of_finished_session_is_a_no_op() {
    let w = world(1, SimulationParams::default(), 1);
    let s = run_reconstruction(w.clip.clone(), &w.adapters, &w.env, &policy(10, 2), None).unwrap();
    let (adapters, generator, _) = counted(&w.adapters, None);
    let again = resume(s.clone(), &adapters, &w.env, &policy(10, 2)).unwrap();
    assert_eq!(again, s);
    assert_eq!(generator.calls.load(Ordering::SeqCst), 0);
}

fn interrupted(w: &common::World, after: u32) -> ReconstructionSession {
    let mut sink = |_: &ReconstructionSession, r: &reauthor_core::IterationRecord| {
        if r.index == after {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    };
    run_reconstruction(w.clip.clone(), &w.adapters, &w.env, &policy(10, 2), Some(&mut sink)).unwrap()
}

#[test]
fn resume_rejects_corrupted_last_record() {
    let w = world(4, SimulationParams::default(), 6);
    let s = interrupted(&w, 2);
    let mut doc = serde_json::to_value(&s).unwrap();
    doc["records"][1]["report"] = serde_json::Value::Null;
    let corrupted: ReconstructionSession = serde_json::from_value(doc).unwrap();
    let err = resume(corrupted, &w.adapters, &w.env, &policy(10, 2)).unwrap_err();
    assert!(matches!(err, EngineError::Unrecoverable(_)), "{err:?}");
}

#[test]
fn resume_rejects_missing_media() {
    let store = Arc::new(MemoryStore::new());
    let w = {
        let mut w = world(4, SimulationParams::default(), 6);
        let env = reauthor_core::Env::new(store.clone(), w.env.decoder.clone(), w.env.clock.clone());
        let backend = Arc::new(reauthor_core::adapters::sim::SimulationBackend::new(
            w.backend.config().clone(),
            env.clone(),
        ));
        w.adapters = reauthor_core::AdapterSet::simulation(w.backend.config().clone(), &env);
        w.clip = backend.render_clip(&w.truth).unwrap();
        w.env = env;
        w.backend = backend;
        w
    };
    let s = interrupted(&w, 2);
    assert!(store.remove(s.records()[1].generated_clip.media_ref()));
    let err = resume(s, &w.adapters, &w.env, &policy(10, 2)).unwrap_err();
    assert!(matches!(err, EngineError::Unrecoverable(m) if m.contains("record 2")));
}

#[test]
fn adapter_failure_keeps_completed_records_and_can_resume() {
    let w = world(8, SimulationParams::default(), 12);
    let (adapters, _, _) = counted(&w.adapters, Some(3));
    let s = run_reconstruction(w.clip.clone(), &adapters, &w.env, &policy(10, 2), None).unwrap();
    assert_eq!(s.records().len(), 2);
    match s.status() {
        SessionStatus::Failed { reason } => assert!(reason.contains("generator offline"), "{reason}"),
        other => panic!("expected failure, got {other:?}"),
    }
    let resumed = resume(s, &w.adapters, &w.env, &policy(10, 2)).unwrap();
    assert_eq!(resumed.status(), &SessionStatus::Converged);
    assert_eq!(resumed.records().len(), 5);
}

#[test]
fn overlong_clip_rejected_before_any_call() {
    let params = SimulationParams {
        clip_duration: 9.0,
        ..SimulationParams::default()
    };
    let w = world(1, params, 1);
    let (adapters, generator, _) = counted(&w.adapters, None);
    let err = Reconstructor::new(&adapters, &w.env)
        .begin(SessionId("x".into()), w.clip.clone())
        .unwrap_err();
    assert!(matches!(err, EngineError::Validation(v) if v.field == "duration"));
    assert_eq!(generator.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn refined_prompts_carry_their_iteration() {
    use reauthor_core::Provenance;
    let w = world(6, SimulationParams::default(), 3);
    let s = fixed_iterations(w.clip.clone(), &w.adapters, &w.env, 4).unwrap();
    assert_eq!(s.records()[0].prompt.provenance(), Provenance::Initial);
    for r in &s.records()[1..] {
        assert_eq!(r.prompt.provenance(), Provenance::Refined { iteration: r.index - 1 });
    }
}
