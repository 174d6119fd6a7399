mod common;

use common::{fill, shapes, tiny};
use oblivnet::engine::{Engine, OptFlags};
use oblivnet::model::init_weights;
use oblivnet::obliv::Predicate;
use oblivnet::reference::{compare_models, ref_batch_step, RefModel};
use oblivnet::trace::{assert_equal, EventKind, TraceLog};

#[test]
fn engine_tracks_reference_over_five_steps() {
    let p = tiny();
    let init = init_weights(50, 8, 64, 21);
    let mut log = TraceLog::disabled();
    let mut eng = Engine::new(&mut log, p.clone(), &init).unwrap();
    let mut refm = RefModel::new(p, &init).unwrap();
    for step in 0..5u64 {
        let batch = fill(&shapes(step, 4, 50, 2), 64, 100 + step);
        assert_eq!(eng.active_sets(&mut log, &batch).unwrap(), refm.active_sets(&batch));
        let s = eng.batch_step(&mut log, &batch).unwrap();
        let l = ref_batch_step(&mut refm, &batch).unwrap();
        assert!(
            (s.loss - l).abs() <= 1e-9 * l.abs().max(1.0),
            "loss {} vs {}",
            s.loss,
            l
        );
        if step == 2 {
            eng.refresh(&mut log).unwrap();
            refm.refresh();
        }
    }
    let dev = compare_models(&eng, &refm, 1e-4).unwrap();
    assert!(dev.pass, "{dev:?}");
    assert_eq!(dev.max_rel, 0.0, "{dev:?}");
}

#[test]
fn padded_inputs_change_nothing_but_moments() {
    let p = tiny();
    let init = init_weights(50, 8, 64, 4);
    let mut log = TraceLog::disabled();
    let mut eng = Engine::new(&mut log, p.clone(), &init).unwrap();
    let mut refm = RefModel::new(p, &init).unwrap();
    let mut batch = fill(&shapes(9, 4, 50, 1), 64, 1);
    batch[2] = Default::default();
    batch[3] = Default::default();
    eng.batch_step(&mut log, &batch).unwrap();
    ref_batch_step(&mut refm, &batch).unwrap();
    assert_eq!(compare_models(&eng, &refm, 0.0).unwrap().max_rel, 0.0);
}

#[test]
fn optimization_flags_do_not_change_the_model() {
    let p = tiny();
    let init = init_weights(50, 8, 64, 8);
    let batches: Vec<_> = (0..3).map(|s| fill(&shapes(s, 4, 50, 2), 64, 40 + s)).collect();
    let run = |opts: OptFlags| {
        let mut p = p.clone();
        p.opts = opts;
        let mut log = TraceLog::disabled();
        let mut eng = Engine::new(&mut log, p, &init).unwrap();
        for b in &batches {
            eng.batch_step(&mut log, b).unwrap();
        }
        eng.checkpoint()
    };
    let base = run(OptFlags {
        o1: false,
        o2: false,
        o3: false,
        workers: 1,
    });
    for mask in 1..8u8 {
        for workers in [1, 3] {
            let opts = OptFlags {
                o1: mask & 1 != 0,
                o2: mask & 2 != 0,
                o3: mask & 4 != 0,
                workers,
            };
            let ck = run(opts.clone());
            assert_eq!(ck.dense, base.dense, "{opts:?}");
            assert_eq!(ck.output.len(), base.output.len());
            for (a, b) in ck.output.iter().zip(&base.output) {
                assert_eq!((a.id, a.weights(), a.bias), (b.id, b.weights(), b.bias), "{opts:?}");
            }
        }
    }
}

#[test]
fn traces_ignore_private_values() {
    let p = tiny();
    let shape = shapes(77, 4, 50, 3);
    let run = |seed: u64| {
        let mut log = TraceLog::new();
        let mut eng = Engine::new(&mut log, p.clone(), &init_weights(50, 8, 64, seed)).unwrap();
        for s in 0..2 {
            eng.batch_step(&mut log, &fill(&shape, 64, seed * 10 + s)).unwrap();
        }
        eng.refresh(&mut log).unwrap();
        log
    };
    let a = run(1);
    let b = run(2);
    let cmp = assert_equal(&a, &b);
    assert!(cmp.equal, "{:?}", cmp.divergence);
    assert_eq!(a.digest().unwrap(), b.digest().unwrap());
}

/// Events per phase with the worker index dropped, as sorted multisets.
fn projected(log: &TraceLog) -> Vec<Vec<(u8, String, u64, u64)>> {
    let mut phases: Vec<Vec<(u8, String, u64, u64)>> = vec![Vec::new()];
    for e in log.events() {
        if e.kind == EventKind::PhaseMark {
            phases.push(Vec::new());
        }
        phases
            .last_mut()
            .unwrap()
            .push((e.kind as u8, e.object.to_string(), e.offset, e.length));
    }
    for p in &mut phases {
        p.sort();
    }
    phases
}

#[test]
fn worker_count_only_regroups_events() {
    let p = tiny();
    let batch = fill(&shapes(5, 4, 50, 2), 64, 6);
    let run = |workers: usize| {
        let mut p = p.clone();
        p.opts.workers = workers;
        let mut log = TraceLog::new();
        let mut eng = Engine::new(&mut log, p, &init_weights(50, 8, 64, 1)).unwrap();
        eng.batch_step(&mut log, &batch).unwrap();
        log
    };
    let one = run(1);
    let four = run(4);
    assert!(four.events().any(|e| e.worker > 0));
    assert_eq!(projected(&one), projected(&four));
}

#[test]
fn dummies_stay_zero_and_accumulators_reset() {
    let p = tiny();
    let mut log = TraceLog::disabled();
    let mut eng = Engine::new(&mut log, p, &init_weights(50, 8, 64, 5)).unwrap();
    for s in 0..4 {
        eng.batch_step(&mut log, &fill(&shapes(s, 4, 50, 2), 64, s)).unwrap();
        for r in eng.table.main.iter().chain(&eng.table.overflow) {
            if r.is_dummy == Predicate::TRUE {
                assert!(r.is_all_zero());
            }
            assert!(r.t().iter().all(|&t| t == 0.0) && r.t_bias == 0.0);
        }
        for n in &eng.dense.nodes {
            assert!(n.t().iter().all(|&t| t == 0.0) && n.t_bias == 0.0);
        }
    }
}
