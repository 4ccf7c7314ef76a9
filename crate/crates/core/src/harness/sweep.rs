use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, Variant};
use super::pipeline::{finish, population_data, population_ids, run_seed, search, Prepared};
use super::report::mean_std;
use crate::evolve::PopulationId;
use crate::model::{LossKind, Predictor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// gRDA `c` of the β gates; `None` for the individual-features baseline.
    pub c: Option<f64>,
    pub run: usize,
    /// `mces`, `random` or `individual`.
    pub method: &'static str,
    /// Mean fraction of pruned pairs over the populations.
    pub sparsity: f64,
    /// Mean test RMSE over every (type, task).
    pub rmse: f64,
}

fn sparsity_of(best: &[(PopulationId, Predictor)]) -> f64 {
    best.iter().map(|(_, p)| p.genome.pair_sparsity()).sum::<f64>() / best.len() as f64
}

/// Fixed-gate models trained for `steps` iterations on simulated labels.
/// `pruned[i]` pairs of population `i` are removed at random; the rest keep
/// their initial gate and random operation.
fn fixed_models(
    prep: &Prepared,
    cfg: &ExperimentConfig,
    seed: u64,
    pruned: &[usize],
    steps: usize,
) -> Result<Vec<(PopulationId, Predictor)>> {
    let mut out = Vec::new();
    for (i, id) in population_ids(cfg.variant).into_iter().enumerate() {
        let data = population_data(prep, id, cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0xA11C_E000 + i as u64));
        let mut model = Predictor::new(id.task, &data.cardinalities, &cfg.model, data.scale, &mut rng)?;
        let n = model.genome.n_pairs();
        for k in sample(&mut rng, n, pruned[i].min(n)) {
            model.genome.beta.set_fixed(k, 0.0);
        }
        model.frozen = Some(model.genome.prune());
        for _ in 0..steps {
            let batch = data.sample_batch(cfg.model.batch, &mut rng)?;
            model.train_step(&batch, LossKind::Sim)?;
        }
        out.push((id, model));
    }
    Ok(out)
}

fn mean_rmse(cells: &[super::report::CellResult]) -> f64 {
    mean_std(&cells.iter().map(|c| c.rmse).collect::<Vec<_>>()).0
}

/// For each `c` and run: evolves pooled populations with that β threshold
/// scale, then trains a comparator with random operations and the same
/// number of removed pairs. Both are refined and scored identically. An
/// all-pruned baseline is scored once per run. Writes `out/sweep.csv`.
pub fn sparsity_sweep(prep: &Prepared, cfg: &ExperimentConfig, cs: &[f64]) -> Result<Vec<SweepPoint>> {
    if cs.len() < 3 {
        return Err(Error::Config(format!("a sweep needs at least 3 c values, got {}", cs.len())));
    }
    let base = ExperimentConfig {
        variant: Variant::NoMulti,
        ..cfg.clone()
    };
    let mut points = Vec::new();
    for run in 0..cfg.runs {
        let seed = run_seed(&base, run);
        let mut iterations = base.mces.max_iters;
        for &c in cs {
            let mut vcfg = base.clone();
            vcfg.model.grda_beta.c = c;
            vcfg.out = cfg.out.join("sweep").join(format!("c{c}")).join("mces");
            let found = search(prep, &vcfg, run)?;
            iterations = found.iterations;
            let pruned: Vec<usize> = found
                .best
                .iter()
                .map(|(_, p)| p.genome.betas().iter().filter(|&&b| b == 0.0).count())
                .collect();
            let sparsity = sparsity_of(&found.best);
            let cells = finish(prep, &vcfg, run, found.best)?;
            points.push(SweepPoint {
                c: Some(c),
                run,
                method: "mces",
                sparsity,
                rmse: mean_rmse(&cells),
            });

            vcfg.out = cfg.out.join("sweep").join(format!("c{c}")).join("random");
            let random = fixed_models(prep, &vcfg, seed, &pruned, iterations)?;
            let sparsity = sparsity_of(&random);
            let cells = finish(prep, &vcfg, run, random)?;
            points.push(SweepPoint {
                c: Some(c),
                run,
                method: "random",
                sparsity,
                rmse: mean_rmse(&cells),
            });
            log::info!("sweep run {run} c={c}: {:?}", &points[points.len() - 2..]);
        }
        let mut vcfg = base.clone();
        vcfg.out = cfg.out.join("sweep").join("individual");
        let all: Vec<usize> = population_ids(base.variant).iter().map(|_| usize::MAX).collect();
        let models = fixed_models(prep, &vcfg, seed, &all, iterations)?;
        let cells = finish(prep, &vcfg, run, models)?;
        points.push(SweepPoint {
            c: None,
            run,
            method: "individual",
            sparsity: 1.0,
            rmse: mean_rmse(&cells),
        });
    }
    write_sweep(&cfg.out.join("sweep.csv"), &points)?;
    Ok(points)
}

pub fn write_sweep(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut s = String::from("c,run,method,sparsity,rmse\n");
    for p in points {
        let c = p.c.map(|c| c.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{c},{},{},{:.6},{:.6}", p.run, p.method, p.sparsity, p.rmse);
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// The `c` whose mean MCES sparsity over runs is closest to `target`.
pub fn matched_c(points: &[SweepPoint], target: f64) -> Option<f64> {
    let mut cs: Vec<f64> = points.iter().filter_map(|p| p.c).collect();
    cs.dedup();
    cs.sort_by(f64::total_cmp);
    cs.dedup();
    cs.into_iter().min_by(|a, b| {
        let gap = |c: f64| {
            let s: Vec<f64> = points
                .iter()
                .filter(|p| p.c == Some(c) && p.method == "mces")
                .map(|p| p.sparsity)
                .collect();
            (mean_std(&s).0 - target).abs()
        };
        gap(*a).total_cmp(&gap(*b))
    })
}
