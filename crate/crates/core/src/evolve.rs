//! Multi-population evolutionary search over interaction genomes.
//!
//! Each population owns an archive of trained predictors and one offspring
//! under training. Offspring are bred by per-pair argmax crossover over an
//! archive, mutated where a pair's relevance is small, trained for `tau`
//! steps and then swapped in for the worst archived model. Every `ep·tau`
//! iterations one pair of populations exchanges genes.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{EncodedLake, Task};
use crate::interact::{gene_map, Genome, RELEVANCE_INIT};
use crate::laketypes::LakeType;
use crate::diffcore::AdamState;
use crate::model::{Batch, LabelScale, LossKind, ModelConfig, Network, Predictor};
use crate::{Error, Result};

/// Population key. `lake_type` is `None` for a population pooled over all
/// lake types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PopulationId {
    pub lake_type: Option<LakeType>,
    pub task: Task,
}

impl PopulationId {
    pub fn new(lake_type: LakeType, task: Task) -> Self {
        PopulationId {
            lake_type: Some(lake_type),
            task,
        }
    }

    pub fn pooled(task: Task) -> Self {
        PopulationId { lake_type: None, task }
    }

    /// The eight typed populations, type-major.
    pub fn all() -> Vec<PopulationId> {
        LakeType::ALL
            .iter()
            .flat_map(|&t| Task::ALL.iter().map(move |&k| PopulationId::new(t, k)))
            .collect()
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (ty, task) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("population id '{s}' is not <type>-<task>")))?;
        let task = Task::parse(task)?;
        if ty == "all" {
            return Ok(PopulationId::pooled(task));
        }
        let ty = LakeType::parse(ty).map_err(|_| Error::Config(format!("unknown lake type in '{s}'")))?;
        Ok(PopulationId::new(ty, task))
    }
}

impl fmt::Display for PopulationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.lake_type {
            Some(t) => write!(f, "{t}-{}", self.task),
            None => write!(f, "all-{}", self.task),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MCESConfig {
    /// Archive size.
    pub n: usize,
    /// Mutation threshold on |β|.
    pub lambda: f64,
    /// Mutation probability.
    pub sigma: f64,
    /// Training steps per replacement round.
    pub tau: usize,
    /// Replacement rounds per inter-population exchange.
    pub ep: usize,
    pub max_iters: usize,
    /// Replacement rounds without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Exchange genes between populations.
    pub inter: bool,
    /// Offspring continue from the previous offspring's weights and
    /// optimizer state instead of a fresh initialization.
    pub inherit_weights: bool,
    /// Worker threads; 0 uses rayon's default.
    pub threads: usize,
}

impl Default for MCESConfig {
    fn default() -> Self {
        MCESConfig {
            n: 4,
            lambda: 0.2,
            sigma: 0.5,
            tau: 10,
            ep: 10,
            max_iters: 1000,
            patience: 5,
            seed: 0,
            inter: true,
            inherit_weights: true,
            threads: 1,
        }
    }
}

impl MCESConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.tau == 0 || self.ep == 0 {
            return Err(Error::Config("n, tau and ep must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(Error::Config(format!("sigma {} outside [0, 1]", self.sigma)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// Replaces the operation of every pair with `|β| < lambda`, with
/// probability `sigma`, by a different operation and resets its relevance.
/// Returns the mutated pair indices.
pub fn mutate<R: Rng + ?Sized>(genome: &mut Genome, lambda: f64, sigma: f64, rng: &mut R) -> Vec<usize> {
    let mut changed = Vec::new();
    for k in 0..genome.n_pairs() {
        if genome.beta.weight(k).abs() < lambda && rng.random::<f64>() < sigma {
            let op = genome.op_at(k).random_other(rng);
            genome.set_op(k, op);
            genome.beta.reset(k, RELEVANCE_INIT);
            changed.push(k);
        }
    }
    changed
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if i == 0 || v.total_cmp(&best.1).is_gt() {
            best = (i, v);
        }
    }
    best.0
}

/// Per pair, the operation and relevance state of the parent with the
/// largest β; per feature, the α state of the parent with the largest α.
pub fn crossover(parents: &[&Genome]) -> Result<Genome> {
    let first = parents.first().ok_or_else(|| Error::State("crossover needs a non-empty archive".into()))?;
    let m = first.m();
    if parents.iter().any(|g| g.m() != m) {
        return Err(Error::Config("crossover parents have different field counts".into()));
    }
    let mut child = (*first).clone();
    for k in 0..child.n_pairs() {
        let p = argmax(parents.iter().map(|g| g.beta.weight(k)));
        child.set_op(k, parents[p].op_at(k));
        child.beta.copy_coord(k, &parents[p].beta, k);
    }
    for i in 0..m {
        let p = argmax(parents.iter().map(|g| g.alpha.weight(i)));
        child.alpha.copy_coord(i, &parents[p].alpha, i);
    }
    Ok(child)
}

pub fn intra_crossover(archive: &[Predictor]) -> Result<Genome> {
    crossover(&archive.iter().map(|p| &p.genome).collect::<Vec<_>>())
}

/// Offspring genomes for A (from B's archive) and for B (from A's).
pub fn inter_crossover(a: &[Predictor], b: &[Predictor]) -> Result<(Genome, Genome)> {
    let (ma, mb) = (a.first().map(|p| p.m()), b.first().map(|p| p.m()));
    if ma.is_some() && mb.is_some() && ma != mb {
        return Err(Error::Config(format!(
            "inter-population crossover between {} and {} fields",
            ma.unwrap_or(0),
            mb.unwrap_or(0)
        )));
    }
    Ok((intra_crossover(b)?, intra_crossover(a)?))
}

/// Index of the largest fitness loss; ties go to the lowest index.
pub fn worst_index(fitness: &[f64]) -> usize {
    argmax(fitness.iter().copied())
}

pub fn select_worst(archive: &[Predictor]) -> Result<usize> {
    let f = archive_fitness(archive)?;
    if f.is_empty() {
        return Err(Error::State("empty archive".into()));
    }
    Ok(worst_index(&f))
}

fn best_index(archive: &[Predictor]) -> Result<usize> {
    let f = archive_fitness(archive)?;
    let mut best = 0;
    for (i, v) in f.iter().enumerate() {
        if v.total_cmp(&f[best]).is_lt() {
            best = i;
        }
    }
    Ok(best)
}

fn archive_fitness(archive: &[Predictor]) -> Result<Vec<f64>> {
    archive
        .iter()
        .map(|p| p.fitness.ok_or_else(|| Error::State(format!("lineage {} has no fitness", p.lineage))))
        .collect()
}

/// Picks two populations to exchange genes: with a fair coin, either one
/// task across two distinct lake types, or one lake type across both tasks.
/// Falls back to the feasible mode; `None` when neither is.
pub fn choose_pair<R: Rng + ?Sized>(ids: &[PopulationId], rng: &mut R) -> Option<(PopulationId, PopulationId)> {
    let types_for = |task: Task| -> Vec<Option<LakeType>> {
        let mut v: Vec<_> = ids.iter().filter(|p| p.task == task).map(|p| p.lake_type).collect();
        v.sort();
        v.dedup();
        v
    };
    let mut both: Vec<Option<LakeType>> = ids
        .iter()
        .filter(|p| ids.contains(&PopulationId { lake_type: p.lake_type, task: Task::Epi }))
        .filter(|p| ids.contains(&PopulationId { lake_type: p.lake_type, task: Task::Hyp }))
        .map(|p| p.lake_type)
        .collect();
    both.sort();
    both.dedup();
    let tasks: Vec<Task> = Task::ALL.iter().copied().filter(|&t| types_for(t).len() >= 2).collect();
    let same_task = match (tasks.is_empty(), both.is_empty()) {
        (true, true) => return None,
        (false, true) => true,
        (true, false) => false,
        (false, false) => rng.random_bool(0.5),
    };
    if same_task {
        let task = tasks[rng.random_range(0..tasks.len())];
        let types = types_for(task);
        let a = rng.random_range(0..types.len());
        let mut b = rng.random_range(0..types.len() - 1);
        if b >= a {
            b += 1;
        }
        Some((
            PopulationId { lake_type: types[a], task },
            PopulationId { lake_type: types[b], task },
        ))
    } else {
        let ty = both[rng.random_range(0..both.len())];
        Some((
            PopulationId { lake_type: ty, task: Task::Epi },
            PopulationId { lake_type: ty, task: Task::Hyp },
        ))
    }
}

/// Training and validation data of one population.
#[derive(Debug, Clone)]
pub struct PopulationData {
    pub id: PopulationId,
    pub lakes: Vec<EncodedLake>,
    /// Training windows `(lake index, start day)`.
    pub train: Vec<(usize, usize)>,
    pub window: usize,
    /// Bucket count per field.
    pub cardinalities: Vec<usize>,
    /// Held-out batches scored against simulated labels.
    pub validation: Vec<Batch>,
    pub scale: LabelScale,
}

impl PopulationData {
    pub fn sample_batch<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Batch> {
        if self.train.is_empty() {
            return Err(Error::Data(format!("population {} has no training windows", self.id)));
        }
        let spans: Vec<(usize, usize)> = (0..size).map(|_| self.train[rng.random_range(0..self.train.len())]).collect();
        let refs: Vec<&EncodedLake> = self.lakes.iter().collect();
        Batch::build(&refs, &spans, self.window, 0, self.id.task)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Replace,
    Intra,
    Inter,
    Mutate,
    Diverge,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Replace => "replace",
            EventKind::Intra => "intra",
            EventKind::Inter => "inter",
            EventKind::Mutate => "mutate",
            EventKind::Diverge => "diverge",
        }
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub iteration: usize,
    pub population: PopulationId,
    pub kind: EventKind,
    /// Genes came from this population's archive (crossover only).
    pub source: Option<PopulationId>,
    /// Mutated pair indices, or the replaced archive slot.
    pub pairs: Vec<usize>,
    /// Offspring then replaced model for `replace`; parent fitness for
    /// crossover.
    pub fitness: Vec<f64>,
}

impl Event {
    pub fn to_line(&self) -> String {
        let list = |v: Vec<String>| if v.is_empty() { "-".to_string() } else { v.join(",") };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.iteration,
            self.population,
            self.kind.as_str(),
            self.source.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
            list(self.pairs.iter().map(usize::to_string).collect()),
            list(self.fitness.iter().map(|f| format!("{f:.6}")).collect()),
        )
    }
}

pub const EVENT_HEADER: &str = "iteration\tpopulation\tkind\tsource\tpairs\tfitness";

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    let mut out = Vec::new();
    write_events_to(&mut out, events).map_err(|e| Error::io(path, e))?;
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Where to write gene-map snapshots, with the field names for their
/// headers.
#[derive(Debug, Clone)]
pub struct SnapshotSink {
    pub dir: PathBuf,
    pub names: Vec<String>,
}

struct Population<'a> {
    data: &'a PopulationData,
    archive: Vec<Predictor>,
    offspring: Predictor,
    rng: ChaCha8Rng,
    index: u64,
    born: u64,
}

impl<'a> Population<'a> {
    fn next_lineage(&mut self) -> u64 {
        self.born += 1;
        (self.index << 32) | self.born
    }

    /// Predictor around `genome`. Inherited weights come from the previous
    /// offspring, or from the best archived model once that offspring has
    /// diverged.
    fn breed(&mut self, genome: Genome, model: &ModelConfig, inherit: bool, diverged: bool) -> Result<Predictor> {
        let mut child = if inherit && !diverged {
            self.offspring.clone()
        } else if inherit {
            let best = best_index(&self.archive)?;
            self.archive[best].clone()
        } else {
            let cards: Vec<usize> = self.archive[0].net.embed.tables.iter().map(|t| t.rows()).collect();
            let net = Network::init(&cards, model, &mut self.rng);
            let adam = AdamState::new(&net.sizes(), model.adam);
            Predictor {
                net,
                adam,
                ..self.archive[0].clone()
            }
        };
        child.genome = genome;
        child.fitness = None;
        child.frozen = None;
        child.lineage = self.next_lineage();
        Ok(child)
    }

    fn train_step(&mut self, batch_size: usize) -> Result<Option<String>> {
        let batch = self.data.sample_batch(batch_size, &mut self.rng)?;
        match self.offspring.train_step(&batch, LossKind::Sim) {
            Ok(_) => Ok(None),
            Err(Error::Numerical(msg)) => Ok(Some(msg)),
            Err(e) => Err(e),
        }
    }

    fn best_fitness(&self) -> f64 {
        self.archive.iter().filter_map(|p| p.fitness).fold(f64::INFINITY, f64::min)
    }
}

/// Outcome of a search.
#[derive(Debug, Clone)]
pub struct MCESResult {
    /// Lowest-fitness archived model per population, in input order.
    pub best: Vec<(PopulationId, Predictor)>,
    pub events: Vec<Event>,
    /// Iterations actually run.
    pub iterations: usize,
}

fn population_seed(master: u64, index: usize) -> u64 {
    master ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1))
}

/// Runs the generational loop over the given populations.
pub fn run_mces(
    data: &[PopulationData],
    model: &ModelConfig,
    cfg: &MCESConfig,
    snapshots: Option<&SnapshotSink>,
) -> Result<MCESResult> {
    cfg.validate()?;
    model.validate()?;
    if data.is_empty() {
        return Err(Error::Config("no populations to evolve".into()));
    }
    let ids: Vec<PopulationId> = data.iter().map(|d| d.id).collect();
    for (i, id) in ids.iter().enumerate() {
        if ids[..i].contains(id) {
            return Err(Error::Config(format!("population {id} listed twice")));
        }
    }
    let cards = data[0].cardinalities.clone();
    if data.iter().any(|d| d.cardinalities != cards) {
        return Err(Error::Config("populations use different feature schemas".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut events = Vec::new();

    // initial archives, evaluated in parallel
    let mut pops: Vec<Population> = pool.install(|| {
        data.par_iter()
            .enumerate()
            .map(|(i, d)| -> Result<Population> {
                if d.lakes.is_empty() {
                    return Err(Error::Data(format!("population {} has no lakes", d.id)));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(population_seed(cfg.seed, i));
                let mut archive = Vec::with_capacity(cfg.n);
                for k in 0..cfg.n {
                    let mut p = Predictor::new(d.id.task, &cards, model, d.scale, &mut rng)?;
                    p.lineage = ((i as u64) << 32) | (k as u64 + 1);
                    p.fitness(&d.validation)?;
                    archive.push(p);
                }
                let offspring = archive[0].clone();
                Ok(Population {
                    data: d,
                    archive,
                    offspring,
                    rng,
                    index: i as u64,
                    born: cfg.n as u64,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let breed_all = |pops: &mut [Population], iteration: usize, pair: Option<(usize, usize)>, events: &mut Vec<Event>| -> Result<()> {
        let genomes: Vec<(Genome, usize, Vec<f64>)> = (0..pops.len())
            .map(|i| {
                let source = match pair {
                    Some((a, b)) if i == a => b,
                    Some((a, b)) if i == b => a,
                    _ => i,
                };
                let from = &pops[source].archive;
                if from[0].m() != pops[i].archive[0].m() {
                    return Err(Error::Config("populations have different field counts".into()));
                }
                Ok((intra_crossover(from)?, source, archive_fitness(from)?))
            })
            .collect::<Result<_>>()?;
        for (i, (mut genome, source, parent_fitness)) in genomes.into_iter().enumerate() {
            let pop = &mut pops[i];
            events.push(Event {
                iteration,
                population: ids[i],
                kind: if source != i { EventKind::Inter } else { EventKind::Intra },
                source: Some(ids[source]),
                pairs: Vec::new(),
                fitness: parent_fitness,
            });
            let changed = mutate(&mut genome, cfg.lambda, cfg.sigma, &mut pop.rng);
            events.push(Event {
                iteration,
                population: ids[i],
                kind: EventKind::Mutate,
                source: None,
                pairs: changed,
                fitness: Vec::new(),
            });
            pop.offspring = pop.breed(genome, model, cfg.inherit_weights, false)?;
        }
        Ok(())
    };

    let snapshot = |pops: &[Population], iteration: usize| -> Result<()> {
        if let Some(sink) = snapshots {
            for (i, pop) in pops.iter().enumerate() {
                let dir = sink.dir.join(ids[i].to_string());
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let best = &pop.archive[best_index(&pop.archive)?];
                gene_map(&best.genome, &sink.names)?.write_csv(&dir.join(format!("{iteration}.csv")))?;
            }
        }
        Ok(())
    };

    breed_all(&mut pops, 0, None, &mut events)?;
    snapshot(&pops, 0)?;
    let mut best_seen: Vec<f64> = pops.iter().map(Population::best_fitness).collect();
    let mut stale = 0;
    let mut iterations = 0;
    let period = cfg.tau * cfg.ep;

    for t in 1..=cfg.max_iters {
        iterations = t;
        let diverged: Vec<Option<String>> = pool.install(|| {
            pops.par_iter_mut()
                .map(|p| p.train_step(model.batch))
                .collect::<Result<Vec<_>>>()
        })?;
        for (i, msg) in diverged.into_iter().enumerate() {
            if let Some(msg) = msg {
                log::warn!("population {}: {msg}; re-breeding offspring", ids[i]);
                let pop = &mut pops[i];
                let mut genome = intra_crossover(&pop.archive)?;
                mutate(&mut genome, cfg.lambda, cfg.sigma, &mut pop.rng);
                pop.offspring = pop.breed(genome, model, cfg.inherit_weights, true)?;
                events.push(Event {
                    iteration: t,
                    population: ids[i],
                    kind: EventKind::Diverge,
                    source: None,
                    pairs: Vec::new(),
                    fitness: Vec::new(),
                });
            }
        }
        if t % cfg.tau != 0 {
            continue;
        }
        let fitness: Vec<f64> = pool.install(|| {
            pops.par_iter_mut()
                .map(|p| p.offspring.fitness(&p.data.validation))
                .collect::<Result<Vec<_>>>()
        })?;
        for (i, pop) in pops.iter_mut().enumerate() {
            let w = select_worst(&pop.archive)?;
            let replaced = pop.archive[w].fitness.unwrap_or(f64::NAN);
            pop.archive[w] = pop.offspring.clone();
            events.push(Event {
                iteration: t,
                population: ids[i],
                kind: EventKind::Replace,
                source: None,
                pairs: vec![w],
                fitness: vec![fitness[i], replaced],
            });
        }
        let pair = if cfg.inter && t % period == 0 {
            choose_pair(&ids, &mut master).map(|(a, b)| {
                let pos = |id: PopulationId| ids.iter().position(|&x| x == id).expect("chosen from ids");
                (pos(a), pos(b))
            })
        } else {
            None
        };
        breed_all(&mut pops, t, pair, &mut events)?;
        snapshot(&pops, t)?;

        let now: Vec<f64> = pops.iter().map(Population::best_fitness).collect();
        if now.iter().zip(&best_seen).any(|(n, b)| n < b) {
            stale = 0;
        } else {
            stale += 1;
        }
        best_seen = now.iter().zip(&best_seen).map(|(n, b)| n.min(*b)).collect();
        if stale >= cfg.patience {
            log::info!("converged after {t} iterations");
            break;
        }
    }

    let best = pops
        .iter()
        .enumerate()
        .map(|(i, p)| Ok((ids[i], p.archive[best_index(&p.archive)?].clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(MCESResult {
        best,
        events,
        iterations,
    })
}

/// Writes the event log to any sink, header first.
pub fn write_events_to<W: Write>(mut w: W, events: &[Event]) -> std::io::Result<()> {
    writeln!(w, "{EVENT_HEADER}")?;
    for e in events {
        writeln!(w, "{}", e.to_line())?;
    }
    Ok(())
}
