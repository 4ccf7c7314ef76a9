use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, Variant};
use super::eval::{rmse, EvalSet};
use super::report::{CellResult, Report};
use crate::evolve::{run_mces, write_events, Event, MCESConfig, PopulationData, PopulationId, SnapshotSink};
use crate::features::{
    load_benchmark, window_starts, Bucketizer, EncodedLake, FeatureSchema, LakeDataset, Task, DATE_FORMAT,
};
use crate::interact::gene_map;
use crate::laketypes::{assign_types, ClusterAssignment, LakePoint, LakeType};
use crate::model::{Batch, LabelScale, Predictor};
use crate::simlake::{gen_synthetic, META_FILE, SCHEMA_FILE};
use crate::{Error, Result};

/// Data ready for any number of runs: encoded lakes, types and split ranges.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub schema: FeatureSchema,
    pub lakes: Vec<LakeDataset>,
    pub encoded: Vec<EncodedLake>,
    pub cardinalities: Vec<usize>,
    pub types: ClusterAssignment,
    /// Per lake: train, validation and test day ranges.
    pub splits: Vec<[Range<usize>; 3]>,
}

impl Prepared {
    pub fn type_of(&self, lake: usize) -> LakeType {
        self.types.types[lake].1
    }

    pub fn members(&self, lake_type: Option<LakeType>) -> Vec<usize> {
        (0..self.lakes.len())
            .filter(|&i| lake_type.is_none_or(|t| self.type_of(i) == t))
            .collect()
    }

    /// Lake of the given type with the most observed labels in the test
    /// split; ties go to the lowest index.
    pub fn test_lake(&self, lake_type: LakeType) -> Result<usize> {
        let mut best: Option<(usize, usize)> = None;
        for i in self.members(Some(lake_type)) {
            let r = self.splits[i][2].clone();
            let count = Task::ALL
                .iter()
                .map(|&t| self.lakes[i].obs(t)[r.clone()].iter().filter(|o| o.is_some()).count())
                .sum::<usize>();
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((i, count));
            }
        }
        match best {
            Some((i, c)) if c > 0 => Ok(i),
            _ => Err(Error::Data(format!("no lake of type {lake_type} has test observations"))),
        }
    }
}

/// Loads the benchmark named by the config, or generates one.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(FeatureSchema, Vec<LakeDataset>)> {
    match &cfg.data.dir {
        Some(dir) => {
            let schema = FeatureSchema::load(&dir.join(SCHEMA_FILE))?;
            let lakes = load_benchmark(&dir.join(META_FILE))?;
            for ds in &lakes {
                if ds.feature_names != schema.names() {
                    return Err(Error::Data(format!(
                        "lake '{}': columns {:?} do not match the schema",
                        ds.lake_id, ds.feature_names
                    )));
                }
            }
            Ok((schema, lakes))
        }
        None => {
            let b = gen_synthetic(&cfg.generator)?;
            Ok((b.schema, b.lakes))
        }
    }
}

pub fn cluster_lakes(lakes: &[LakeDataset], seed: u64, max_iters: usize) -> Result<ClusterAssignment> {
    let points = lakes
        .iter()
        .map(|l| LakePoint::new(&l.lake_id, l.area_m2, l.volume_m3))
        .collect::<Result<Vec<_>>>()?;
    assign_types(&points, &mut ChaCha8Rng::seed_from_u64(seed), max_iters)
}

fn day_after(d: NaiveDate) -> NaiveDate {
    d + Duration::days(1)
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (schema, lakes) = load_data(cfg).map_err(|e| e.at_stage("load"))?;
    if lakes.len() < 4 {
        return Err(Error::Data(format!("need at least 4 lakes to form 4 types, got {}", lakes.len())));
    }
    let s = &cfg.split;
    let splits: Vec<[Range<usize>; 3]> = lakes
        .iter()
        .map(|l| {
            let a = l.day_index(day_after(s.train_end));
            let b = l.day_index(day_after(s.validation_end));
            let c = l.day_index(day_after(s.test_end));
            [0..a, a..b, b..c]
        })
        .collect();
    for (l, sp) in lakes.iter().zip(&splits) {
        if sp[0].len() < cfg.model.window || sp[1].is_empty() {
            return Err(Error::Data(format!(
                "lake '{}': the training split ({} days) must hold one window of {} and the validation split must not be empty",
                l.lake_id,
                sp[0].len(),
                cfg.model.window
            )));
        }
    }
    let rows = lakes
        .iter()
        .zip(&splits)
        .flat_map(|(l, sp)| l.features[sp[0].clone()].iter().map(|r| r.as_slice()));
    let bucketizer = Bucketizer::fit(&schema, rows).map_err(|e| e.at_stage("bucketize"))?;
    let encoded = lakes
        .iter()
        .map(|l| EncodedLake::new(l, &bucketizer))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("encode"))?;
    let types = cluster_lakes(&lakes, cfg.seed, cfg.cluster.max_iters).map_err(|e| e.at_stage("cluster"))?;
    Ok(Prepared {
        cardinalities: bucketizer.cardinalities().to_vec(),
        schema,
        lakes,
        encoded,
        types,
        splits,
    })
}

/// Populations evolved by a variant.
pub fn population_ids(variant: Variant) -> Vec<PopulationId> {
    match variant {
        Variant::NoMulti => Task::ALL.iter().map(|&t| PopulationId::pooled(t)).collect(),
        _ => PopulationId::all(),
    }
}

pub fn population_data(prep: &Prepared, id: PopulationId, cfg: &ExperimentConfig) -> Result<PopulationData> {
    let members = prep.members(id.lake_type);
    if members.is_empty() {
        return Err(Error::Data(format!("population {id} has no lakes")));
    }
    let lakes: Vec<EncodedLake> = members.iter().map(|&i| prep.encoded[i].clone()).collect();
    let mut train = Vec::new();
    for (pos, &i) in members.iter().enumerate() {
        for s in window_starts(prep.splits[i][0].clone(), cfg.model.window, cfg.model.stride)? {
            train.push((pos, s));
        }
    }
    let refs: Vec<&EncodedLake> = lakes.iter().collect();
    let val_ranges: Vec<Range<usize>> = members.iter().map(|&i| prep.splits[i][1].clone()).collect();
    let validation = EvalSet::build(&refs, &val_ranges, cfg.model.window, cfg.eval.burn_in, cfg.eval.batch, id.task)?;
    let scale = LabelScale::fit(
        members
            .iter()
            .flat_map(|&i| prep.encoded[i].sim[id.task.index()][prep.splits[i][0].clone()].iter().copied()),
    );
    Ok(PopulationData {
        id,
        lakes,
        train,
        window: cfg.model.window,
        cardinalities: prep.cardinalities.clone(),
        validation: validation.batches,
        scale,
    })
}

pub fn run_seed(cfg: &ExperimentConfig, run: usize) -> u64 {
    cfg.seed.wrapping_add(run as u64)
}

fn run_dir(out: &Path, kind: &str, run: usize) -> PathBuf {
    out.join(kind).join(format!("run{run}"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Output of the search stage for one run.
#[derive(Debug, Clone)]
pub struct SearchOutput {
    pub best: Vec<(PopulationId, Predictor)>,
    pub events: Vec<Event>,
    pub iterations: usize,
    pub event_log: PathBuf,
    pub gene_maps: Vec<PathBuf>,
}

pub fn mces_config(cfg: &ExperimentConfig, run: usize) -> MCESConfig {
    MCESConfig {
        seed: run_seed(cfg, run),
        inter: cfg.mces.inter && cfg.variant != Variant::NoInter,
        threads: cfg.threads,
        ..cfg.mces.clone()
    }
}

/// Evolves all populations of the configured variant and persists events,
/// snapshots, gene maps and model checkpoints.
pub fn search(prep: &Prepared, cfg: &ExperimentConfig, run: usize) -> Result<SearchOutput> {
    let data = population_ids(cfg.variant)
        .into_iter()
        .map(|id| population_data(prep, id, cfg))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("populations"))?;
    let sink = SnapshotSink {
        dir: run_dir(&cfg.out, "snapshots", run),
        names: prep.schema.names(),
    };
    let res = run_mces(&data, &cfg.model, &mces_config(cfg, run), Some(&sink)).map_err(|e| e.at_stage("search"))?;
    let events_dir = cfg.out.join("events");
    ensure_dir(&events_dir)?;
    let event_log = events_dir.join(format!("run{run}.tsv"));
    write_events(&event_log, &res.events)?;
    let maps_dir = run_dir(&cfg.out, "genemaps", run);
    let models_dir = run_dir(&cfg.out, "models", run);
    ensure_dir(&maps_dir)?;
    ensure_dir(&models_dir)?;
    let hash = prep.schema.hash();
    let mut gene_maps = Vec::new();
    for (id, model) in &res.best {
        let path = maps_dir.join(format!("{id}.csv"));
        gene_map(&model.genome, &prep.schema.names())?.write_csv(&path)?;
        gene_maps.push(path);
        model.save(&models_dir.join(format!("{id}.json")), &hash)?;
    }
    log::info!("run {run}: search finished after {} iterations", res.iterations);
    Ok(SearchOutput {
        best: res.best,
        events: res.events,
        iterations: res.iterations,
        event_log,
        gene_maps,
    })
}

/// Reloads the checkpoints written by [`search`].
pub fn load_search(prep: &Prepared, cfg: &ExperimentConfig, run: usize) -> Result<Vec<(PopulationId, Predictor)>> {
    let dir = run_dir(&cfg.out, "models", run);
    let hash = prep.schema.hash();
    population_ids(cfg.variant)
        .into_iter()
        .map(|id| Ok((id, Predictor::load(&dir.join(format!("{id}.json")), &hash)?)))
        .collect()
}

/// Refinement mini-batches over the train and validation splits of the
/// population's lakes, in a seeded random order.
pub fn refine_batches(prep: &Prepared, id: PopulationId, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Batch>> {
    let members = prep.members(id.lake_type);
    let refs: Vec<&EncodedLake> = members.iter().map(|&i| &prep.encoded[i]).collect();
    let mut spans = Vec::new();
    for (pos, &i) in members.iter().enumerate() {
        let range = 0..prep.splits[i][1].end;
        for s in window_starts(range, cfg.model.window, cfg.model.stride)? {
            spans.push((pos, s));
        }
    }
    spans.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    spans
        .chunks(cfg.model.batch)
        .map(|c| Batch::build(&refs, c, cfg.model.window, 0, id.task))
        .collect()
}

/// Refines (unless the variant skips it) and scores each lake type's test
/// lake. Writes one predictions file per (type, task).
pub fn finish(
    prep: &Prepared,
    cfg: &ExperimentConfig,
    run: usize,
    mut best: Vec<(PopulationId, Predictor)>,
) -> Result<Vec<CellResult>> {
    let seed = run_seed(cfg, run);
    if cfg.variant != Variant::NoRefine {
        for (id, model) in best.iter_mut() {
            let batches = refine_batches(prep, *id, cfg, seed ^ 0x5EED_0000)?;
            if let Some(lr) = cfg.refine.lr {
                model.adam.hp.lr = lr;
            }
            let steps = model
                .refine(&batches, cfg.refine.rho, cfg.refine.epochs)
                .map_err(|e| e.at_stage(&format!("refine {id}")))?;
            log::debug!("run {run}: refined {id} for {steps} steps");
        }
    }
    let dir = run_dir(&cfg.out, "predictions", run);
    ensure_dir(&dir)?;
    let mut cells = Vec::new();
    for lake_type in LakeType::ALL {
        let lake = prep.test_lake(lake_type)?;
        for task in Task::ALL {
            let key = PopulationId {
                lake_type: if cfg.variant == Variant::NoMulti { None } else { Some(lake_type) },
                task,
            };
            let (_, model) = best
                .iter()
                .find(|(id, _)| *id == key)
                .ok_or_else(|| Error::State(format!("no model for population {key}")))?;
            let cell = score_test_lake(prep, cfg, lake, lake_type, task, model, &dir.join(format!("{lake_type}-{task}.csv")))?;
            cells.push(CellResult { run, seed, ..cell });
        }
    }
    Ok(cells)
}

/// Test-split predictions of `model` on `lake`, written to `path`.
pub fn score_test_lake(
    prep: &Prepared,
    cfg: &ExperimentConfig,
    lake: usize,
    lake_type: LakeType,
    task: Task,
    model: &Predictor,
    path: &Path,
) -> Result<CellResult> {
    let enc = &prep.encoded[lake];
    let range = prep.splits[lake][2].clone();
    let set = EvalSet::build(&[enc], &[range], cfg.model.window, cfg.eval.burn_in, cfg.eval.batch, task)?;
    let preds = set.predict(model).map_err(|e| e.at_stage("evaluate"))?;
    let obs: Vec<Option<f64>> = preds.iter().map(|&(_, d, _)| enc.obs[task.index()][d]).collect();
    let values: Vec<f64> = preds.iter().map(|p| p.2).collect();
    let sims: Vec<f64> = preds.iter().map(|&(_, d, _)| enc.sim[task.index()][d]).collect();
    let model_rmse = rmse(&values, &obs).map_err(|e| e.at_stage(&format!("{lake_type}-{task} test")))?;
    let sim_rmse = rmse(&sims, &obs)?;
    let mut text = String::from("date,lake_id,predicted,simulated,observed\n");
    for (i, &(_, d, p)) in preds.iter().enumerate() {
        let o = obs[i].map(|v| v.to_string()).unwrap_or_default();
        text.push_str(&format!("{},{},{p},{},{o}\n", enc.dates[d].format(DATE_FORMAT), enc.lake_id, sims[i]));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(CellResult {
        run: 0,
        seed: 0,
        lake_type,
        task,
        test_lake: enc.lake_id.clone(),
        observations: obs.iter().filter(|o| o.is_some()).count(),
        rmse: model_rmse,
        sim_rmse,
    })
}

/// RMSE recomputed from a predictions file.
pub fn rmse_from_predictions(path: &Path) -> Result<f64> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let (mut pred, mut obs) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Data(format!("{}: bad number '{s}'", path.display())));
        pred.push(num(&rec[2])?);
        obs.push(if rec[4].is_empty() { None } else { Some(num(&rec[4])?) });
    }
    rmse(&pred, &obs)
}

/// Search, refinement and evaluation for every run; writes the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    run_prepared(&prep, cfg)
}

pub fn run_prepared(prep: &Prepared, cfg: &ExperimentConfig) -> Result<Report> {
    ensure_dir(&cfg.out)?;
    prep.types.write_csv(&cfg.out.join("types.csv"))?;
    let mut report = Report::new(cfg.variant);
    for run in 0..cfg.runs {
        let out = search(prep, cfg, run)?;
        report.event_logs.push(out.event_log.clone());
        report.gene_maps.extend(out.gene_maps.iter().cloned());
        report.cells.extend(finish(prep, cfg, run, out.best)?);
    }
    report.write(&cfg.out)?;
    Ok(report)
}

/// Runs every variant on the same prepared data; each variant writes under
/// `out/<variant>/`, and the comparison goes to `out/ablation.csv`.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<Vec<Report>> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let mut reports = Vec::new();
    for variant in Variant::ALL {
        let vcfg = ExperimentConfig {
            variant,
            out: cfg.out.join(variant.slug()),
            ..cfg.clone()
        };
        log::info!("ablation: variant {variant}");
        reports.push(run_prepared(&prep, &vcfg)?);
    }
    ensure_dir(&cfg.out)?;
    super::report::write_ablation(&cfg.out.join("ablation.csv"), &reports)?;
    Ok(reports)
}
