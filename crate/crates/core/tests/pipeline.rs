use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use oxyevo::evolve::EventKind;
use oxyevo::harness::{
    finish, population_data, population_ids, prepare, refine_batches, rmse_from_predictions, run_experiment, search,
    ExperimentConfig, Variant,
};
use oxyevo::laketypes::LakeType;
use oxyevo::Error;

fn smoke(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::parse(include_str!("../../../configs/smoke.toml")).unwrap();
    cfg.out = out.to_path_buf();
    cfg.mces.max_iters = 20;
    cfg
}

#[test]
fn smoke_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke(dir.path());
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.gene_maps.len(), 8);
    assert!(report.gene_maps.iter().all(|p| p.exists()));
    assert_eq!(report.cells.len(), 8);
    assert!(report.cells.iter().all(|c| c.rmse >= 0.0 && c.observations > 0));
    for name in ["report.csv", "runs.csv", "types.csv", "events/run0.tsv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert!(dir.path().join("snapshots/run0/S-epi/10.csv").exists());
    assert_eq!(report.summary().len(), 8);
}

#[test]
fn report_rmse_matches_predictions_files() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&smoke(dir.path())).unwrap();
    for c in &report.cells {
        let path = dir.path().join(format!("predictions/run0/{}-{}.csv", c.lake_type, c.task));
        let again = rmse_from_predictions(&path).unwrap();
        assert!((again - c.rmse).abs() < 1e-9, "{} vs {}", again, c.rmse);
    }
}

#[test]
fn no_inter_variant_logs_no_exchange() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke(dir.path());
    cfg.variant = Variant::NoInter;
    cfg.mces.ep = 1;
    let prep = prepare(&cfg).unwrap();
    let out = search(&prep, &cfg, 0).unwrap();
    assert!(out.events.iter().all(|e| e.kind != EventKind::Inter));
    assert!(!fs::read_to_string(&out.event_log).unwrap().contains("\tinter\t"));

    cfg.variant = Variant::Full;
    let out = search(&prep, &cfg, 0).unwrap();
    assert!(out.events.iter().any(|e| e.kind == EventKind::Inter));
}

#[test]
fn no_multi_variant_has_two_pooled_populations() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke(dir.path());
    cfg.variant = Variant::NoMulti;
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.gene_maps.len(), 2);
    let pops: BTreeSet<String> = fs::read_to_string(&report.event_logs[0])
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(pops, BTreeSet::from(["all-epi".to_string(), "all-hyp".to_string()]));
    // still scored on every type
    assert_eq!(report.cells.len(), 8);
    let types: BTreeSet<LakeType> = report.cells.iter().map(|c| c.lake_type).collect();
    assert_eq!(types.len(), 4);
}

#[test]
fn no_refine_variant_is_flagged_and_scores_search_models() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke(dir.path());
    cfg.variant = Variant::NoRefine;
    let report = run_experiment(&cfg).unwrap();
    assert!(!report.refined());
    assert!(fs::read_to_string(dir.path().join("report.csv")).unwrap().lines().skip(1).all(|l| l.ends_with(",false")));
}

#[test]
fn test_split_never_reaches_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke(dir.path());
    let mut prep = prepare(&cfg).unwrap();
    // poisoned test labels turn any loss that touches them into NaN
    for (lake, split) in prep.encoded.iter_mut().zip(&prep.splits) {
        for task in 0..2 {
            for d in split[2].clone() {
                lake.sim[task][d] = f64::NAN;
                lake.obs[task][d] = Some(f64::NAN);
            }
        }
    }
    for id in population_ids(cfg.variant) {
        let data = population_data(&prep, id, &cfg).unwrap();
        for b in &data.validation {
            assert!(b.sim.iter().all(|v| v.is_finite()));
        }
        for b in refine_batches(&prep, id, &cfg, 3).unwrap() {
            assert!(b.sim.iter().all(|v| v.is_finite()));
            assert!(b.obs.iter().all(|v| v.is_finite()));
        }
    }
    let out = search(&prep, &cfg, 0).unwrap();
    assert!(out.best.iter().all(|(_, p)| p.fitness.unwrap().is_finite()));
    // scoring reads the poisoned test split, so only refinement runs here
    for (id, mut model) in out.best {
        let batches = refine_batches(&prep, id, &cfg, 3).unwrap();
        model.refine(&batches, cfg.refine.rho, 1).unwrap();
    }
}

#[test]
fn failing_stage_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke(dir.path());
    cfg.data.dir = Some(dir.path().join("missing"));
    let err = run_experiment(&cfg).unwrap_err();
    assert!(err.to_string().contains("load"), "{err}");
    assert_eq!(err.exit_code(), 2);

    cfg = smoke(dir.path());
    cfg.generator.lakes = 3;
    assert!(matches!(run_experiment(&cfg), Err(Error::Data(_)) | Err(Error::Config(_))));
}

#[test]
fn refining_reloaded_checkpoints_matches_in_memory_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke(dir.path());
    let prep = prepare(&cfg).unwrap();
    let out = search(&prep, &cfg, 0).unwrap();
    let reloaded = oxyevo::harness::load_search(&prep, &cfg, 0).unwrap();
    assert_eq!(reloaded.len(), out.best.len());
    let a = finish(&prep, &cfg, 0, out.best).unwrap();
    let b = finish(&prep, &cfg, 0, reloaded).unwrap();
    assert_eq!(a, b);
}
