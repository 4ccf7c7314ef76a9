//! Two-layer lake oxygen simulator and synthetic benchmark generator.
//!
//! The water column is split into an upper and a lower layer. Each day the
//! upper-layer temperature relaxes toward air temperature, the lake
//! stratifies or mixes, four oxygen fluxes are computed, and both layers take
//! one explicit Euler step clamped at zero.

use std::fs;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::features::{write_dataset, write_meta, FeatureSchema, FieldSpec, LakeDataset, LakeMeta};
use crate::{Error, Result};

/// Saturated dissolved-oxygen concentration (g/m³) of fresh water at one
/// atmosphere, Benson–Krause form.
pub fn do_saturation(temp_c: f64) -> Result<f64> {
    if !(-5.0..=45.0).contains(&temp_c) {
        return Err(Error::Numerical(format!(
            "water temperature {temp_c} °C outside the saturation range [-5, 45]"
        )));
    }
    let t = temp_c + 273.15;
    let ln_c = -139.34411 + 1.575701e5 / t - 6.642308e7 / t.powi(2) + 1.243800e10 / t.powi(3)
        - 8.621949e11 / t.powi(4);
    Ok(ln_c.exp())
}

/// Rate constants and morphometry of one simulated lake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LakeParams {
    /// Lower-layer share of the lake volume, in (0, 1).
    pub hypo_fraction: f64,
    /// Upper-layer temperature relaxation toward air, 1/day.
    pub k_t: f64,
    /// Lower-layer temperature relaxation toward the upper layer while
    /// stratified, 1/day.
    pub k_t_hyp: f64,
    /// Gas exchange, 1/(m/s·day).
    pub k_atm: f64,
    /// Sediment oxygen demand at 20 °C, g/m³/day.
    pub k_sed: f64,
    /// Arrhenius temperature coefficient.
    pub theta: f64,
    /// Onset temperature of stratification, °C.
    pub t_strat: f64,
    /// Turnover happens once the upper layer falls this far below `t_strat`.
    pub hysteresis: f64,
    /// Exchange between layers while stratified, 1/day.
    pub k_ent: f64,
    /// Gross production at full light and 20 °C, g/m³/day.
    pub gpp: f64,
    /// Respiration at 20 °C, g/m³/day.
    pub resp: f64,
}

impl Default for LakeParams {
    fn default() -> Self {
        LakeParams {
            hypo_fraction: 0.4,
            k_t: 0.1,
            k_t_hyp: 0.01,
            k_atm: 0.05,
            k_sed: 0.3,
            theta: 1.08,
            t_strat: 15.0,
            hysteresis: 3.0,
            k_ent: 0.005,
            gpp: 0.5,
            resp: 0.35,
        }
    }
}

impl LakeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hypo_fraction > 0.0 && self.hypo_fraction < 1.0) {
            return Err(Error::Config(format!("hypo_fraction {} outside (0, 1)", self.hypo_fraction)));
        }
        let rates = [
            ("k_t", self.k_t),
            ("k_t_hyp", self.k_t_hyp),
            ("k_atm", self.k_atm),
            ("k_sed", self.k_sed),
            ("k_ent", self.k_ent),
            ("gpp", self.gpp),
            ("resp", self.resp),
            ("hysteresis", self.hysteresis),
        ];
        for (name, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative rate, got {v}")));
            }
        }
        if self.k_t > 1.0 || self.k_t_hyp > 1.0 || self.k_ent > 1.0 {
            return Err(Error::Config("relaxation rates must not exceed 1/day".into()));
        }
        if !(self.theta > 0.0 && self.theta.is_finite() && self.t_strat.is_finite()) {
            return Err(Error::Config("theta must be positive and t_strat finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LakeState {
    pub do_epi: f64,
    pub do_hyp: f64,
    pub t_epi: f64,
    pub t_hyp: f64,
    pub stratified: bool,
    /// Set at turnover; blocks a second stratified period until day 1 of
    /// the next year.
    pub season_done: bool,
}

impl LakeState {
    /// Fully mixed column at `temp` and oxygen saturation.
    pub fn mixed_at(temp: f64) -> Result<Self> {
        let sat = do_saturation(temp)?;
        Ok(LakeState {
            do_epi: sat,
            do_hyp: sat,
            t_epi: temp,
            t_hyp: temp,
            stratified: false,
            season_done: false,
        })
    }

    fn validate(&self) -> Result<()> {
        let vals = [self.do_epi, self.do_hyp, self.t_epi, self.t_hyp];
        if vals.iter().any(|v| !v.is_finite()) || self.do_epi < 0.0 || self.do_hyp < 0.0 {
            return Err(Error::Numerical(format!("invalid lake state {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayDrivers {
    pub air_temp: f64,
    /// m/s
    pub wind: f64,
    /// Shortwave proxy in [0, 1].
    pub light: f64,
    pub doy: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Drivers {
    pub air_temp: Vec<f64>,
    pub wind: Vec<f64>,
    pub light: Vec<f64>,
    pub doy: Vec<u32>,
}

impl Drivers {
    pub fn len(&self) -> usize {
        self.air_temp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.air_temp.is_empty()
    }

    pub fn day(&self, t: usize) -> DayDrivers {
        DayDrivers {
            air_temp: self.air_temp[t],
            wind: self.wind[t],
            light: self.light[t],
            doy: self.doy[t],
        }
    }

    pub fn push(&mut self, d: DayDrivers) {
        self.air_temp.push(d.air_temp);
        self.wind.push(d.wind);
        self.light.push(d.light);
        self.doy.push(d.doy);
    }
}

/// Daily fluxes in g/m³/day. `net_*` is the Euler increment before clamping
/// and `clamp_*` the amount added back to keep the layer at zero, so the
/// day's change is `net + clamp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxSet {
    pub f_atm: f64,
    pub f_nep: f64,
    /// Demand magnitude, never negative.
    pub f_sed: f64,
    pub f_ent: f64,
    pub net_epi: f64,
    pub net_hyp: f64,
    pub clamp_epi: f64,
    pub clamp_hyp: f64,
}

impl FluxSet {
    pub fn clamped(&self) -> bool {
        self.clamp_epi != 0.0 || self.clamp_hyp != 0.0
    }
}

/// Advances the lake by one day.
pub fn step_day(state: &LakeState, day: &DayDrivers, p: &LakeParams) -> Result<(LakeState, FluxSet)> {
    if ![day.air_temp, day.wind, day.light].iter().all(|v| v.is_finite()) || day.wind < 0.0 {
        return Err(Error::Data(format!("invalid drivers on day-of-year {}: {day:?}", day.doy)));
    }
    state.validate()?;
    let mut s = *state;
    if day.doy == 1 {
        s.season_done = false;
    }
    s.t_epi = (s.t_epi + p.k_t * (day.air_temp - s.t_epi)).max(0.0);
    if s.stratified {
        if s.t_epi < p.t_strat - p.hysteresis {
            s.stratified = false;
            s.season_done = true;
        }
    } else if !s.season_done && s.t_epi > p.t_strat {
        s.stratified = true;
    }
    if s.stratified {
        s.t_hyp += p.k_t_hyp * (s.t_epi - s.t_hyp);
    } else {
        s.t_hyp = s.t_epi;
    }

    let (ve, vh) = (1.0 - p.hypo_fraction, p.hypo_fraction);
    let sat = do_saturation(s.t_epi)?;
    let nep = (p.gpp * day.light - p.resp) * p.theta.powf(s.t_epi - 20.0);
    let f_sed = p.k_sed * p.theta.powf(s.t_hyp - 20.0);
    let (f_atm, f_nep, f_ent, net_epi, net_hyp);
    if s.stratified {
        f_atm = p.k_atm * day.wind * (sat - s.do_epi);
        f_nep = nep;
        f_ent = p.k_ent * (s.do_epi - s.do_hyp);
        net_epi = f_atm + f_nep - f_ent * vh / ve;
        net_hyp = f_ent - f_sed;
    } else {
        // mixing to the volume-weighted mean, then column-wide sources
        let mean = ve * s.do_epi + vh * s.do_hyp;
        f_atm = p.k_atm * day.wind * (sat - mean) * ve;
        f_nep = nep * ve;
        f_ent = mean - s.do_hyp;
        let common = f_atm + f_nep - f_sed * vh;
        net_epi = -f_ent * vh / ve + common;
        net_hyp = f_ent + common;
    }
    let raw_epi = s.do_epi + net_epi;
    let raw_hyp = s.do_hyp + net_hyp;
    s.do_epi = raw_epi.max(0.0);
    s.do_hyp = raw_hyp.max(0.0);
    let flux = FluxSet {
        f_atm,
        f_nep,
        f_sed,
        f_ent,
        net_epi,
        net_hyp,
        clamp_epi: s.do_epi - raw_epi,
        clamp_hyp: s.do_hyp - raw_hyp,
    };
    if [f_atm, f_nep, f_sed, f_ent, net_epi, net_hyp].iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite flux on day-of-year {}", day.doy)));
    }
    Ok((s, flux))
}

/// Daily trajectory: `states[t]` is the state after day `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub states: Vec<LakeState>,
    pub fluxes: Vec<FluxSet>,
}

impl Simulation {
    pub fn epi(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.do_epi).collect()
    }

    pub fn hyp(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.do_hyp).collect()
    }
}

pub fn simulate(params: &LakeParams, drivers: &Drivers, init: LakeState) -> Result<Simulation> {
    params.validate()?;
    let n = drivers.len();
    if n == 0 {
        return Err(Error::Data("simulation needs at least one day of drivers".into()));
    }
    if [drivers.wind.len(), drivers.light.len(), drivers.doy.len()].iter().any(|&l| l != n) {
        return Err(Error::Data("driver series have different lengths".into()));
    }
    let mut state = init;
    let mut sim = Simulation {
        states: Vec::with_capacity(n),
        fluxes: Vec::with_capacity(n),
    };
    for t in 0..n {
        let (next, flux) = step_day(&state, &drivers.day(t), params)?;
        sim.states.push(next);
        sim.fluxes.push(flux);
        state = next;
    }
    Ok(sim)
}

/// Benchmark whose labels depend on a single product of two fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedConfig {
    pub fields: usize,
    /// Indices of the interacting fields.
    pub pair: [usize; 2],
    pub base: f64,
    pub amplitude: f64,
    pub noise: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            fields: 6,
            pair: [1, 3],
            base: 8.0,
            amplitude: 16.0,
            noise: 0.2,
        }
    }
}

/// Generator settings, read from a flat TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub seed: u64,
    pub lakes: usize,
    pub years: u32,
    pub start_year: i32,
    /// Per-day probability that a lake is sampled.
    pub obs_rate: f64,
    /// Standard deviation of observation noise, g/m³.
    pub obs_noise: f64,
    /// Relative excess of sediment demand and respiration in the true
    /// dynamics over the simulator's.
    pub sim_bias: f64,
    /// Replaces `sim_bias` for lakes larger than 10^6 m².
    pub large_lake_bias: f64,
    /// Log-scale spread of per-lake deviations of the true rates.
    pub lake_jitter: f64,
    pub base: LakeParams,
    pub planted: Option<PlantedConfig>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 1,
            lakes: 32,
            years: 3,
            start_year: 2017,
            obs_rate: 0.2,
            obs_noise: 0.3,
            sim_bias: 0.8,
            large_lake_bias: -0.5,
            lake_jitter: 0.1,
            base: LakeParams::default(),
            planted: None,
        }
    }
}

impl GenConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: GenConfig = toml::from_str(text).map_err(|e| Error::Config(format!("generator config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GenConfig::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.obs_rate > 0.0 && self.obs_rate <= 1.0) {
            return Err(Error::Config(format!("obs_rate {} outside (0, 1]", self.obs_rate)));
        }
        if self.lakes == 0 || self.years == 0 {
            return Err(Error::Config("lakes and years must be positive".into()));
        }
        if !(self.obs_noise >= 0.0 && self.lake_jitter >= 0.0 && self.sim_bias > -1.0 && self.large_lake_bias > -1.0) {
            return Err(Error::Config("obs_noise and lake_jitter must be >= 0 and biases > -1".into()));
        }
        NaiveDate::from_ymd_opt(self.start_year, 1, 1)
            .ok_or_else(|| Error::Config(format!("bad start_year {}", self.start_year)))?;
        self.base.validate()?;
        if let Some(p) = &self.planted {
            if p.fields < 2 || p.pair[0] == p.pair[1] || p.pair.iter().any(|&i| i >= p.fields) {
                return Err(Error::Config(format!(
                    "planted pair {:?} must name two distinct fields below {}",
                    p.pair, p.fields
                )));
            }
            if !(p.noise >= 0.0 && p.base - p.amplitude.abs() / 4.0 >= 0.0) {
                return Err(Error::Config("planted labels must stay non-negative".into()));
            }
        }
        Ok(())
    }
}

/// In-memory benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub schema: FeatureSchema,
    pub metas: Vec<LakeMeta>,
    pub lakes: Vec<LakeDataset>,
}

pub const META_FILE: &str = "meta.csv";
pub const SCHEMA_FILE: &str = "schema.txt";

impl Benchmark {
    /// Writes `meta.csv`, `schema.txt` and `lakes/<id>.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let lakes_dir = dir.join("lakes");
        fs::create_dir_all(&lakes_dir).map_err(|e| Error::io(&lakes_dir, e))?;
        self.schema.save(&dir.join(SCHEMA_FILE))?;
        write_meta(&dir.join(META_FILE), &self.metas)?;
        for (meta, ds) in self.metas.iter().zip(&self.lakes) {
            write_dataset(&dir.join(&meta.file), ds)?;
        }
        Ok(())
    }
}

/// Field layout of the process benchmark.
pub fn lake_schema() -> FeatureSchema {
    let fields = vec![
        FieldSpec::numeric("air_temp", 10),
        FieldSpec::numeric("wind", 10),
        FieldSpec::numeric("light", 10),
        FieldSpec::numeric("doy", 12),
        FieldSpec::numeric("log_area", 8),
        FieldSpec::numeric("max_depth", 8),
        FieldSpec::numeric("trophic", 8),
        FieldSpec::categorical("land_use", 4),
        FieldSpec::numeric("f_atm", 10),
        FieldSpec::numeric("f_nep", 10),
        FieldSpec::numeric("f_sed", 10),
        FieldSpec::numeric("f_ent", 10),
    ];
    FeatureSchema::new(fields).expect("static schema is valid")
}

struct Morphometry {
    area: f64,
    volume: f64,
    max_depth: f64,
    hypo_fraction: f64,
    trophic: f64,
    land_use: u32,
}

fn sample_morphometry<R: Rng>(rng: &mut R, normal: &Normal<f64>) -> Morphometry {
    let log_area = rng.random_range(4.0..8.0);
    let area: f64 = 10f64.powf(log_area);
    let max_depth = 2.0 * area.powf(0.15) * (0.2 * normal.sample(rng)).exp();
    let volume = area * max_depth * rng.random_range(0.35..0.5);
    let thermocline = 3.0 + (log_area - 4.0);
    let hypo_fraction = (1.0 - thermocline / max_depth).max(0.0).powf(1.5).clamp(0.05, 0.8);
    Morphometry {
        area,
        volume,
        max_depth,
        hypo_fraction,
        trophic: rng.random_range(0.0..1.0),
        land_use: rng.random_range(0..4),
    }
}

fn calendar(cfg: &GenConfig) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(cfg.start_year, 1, 1).expect("validated");
    let end = NaiveDate::from_ymd_opt(cfg.start_year + cfg.years as i32, 1, 1).expect("validated");
    let n = (end - start).num_days();
    (0..n).map(|i| start + Duration::days(i)).collect()
}

fn sample_drivers<R: Rng>(rng: &mut R, normal: &Normal<f64>, dates: &[NaiveDate], log_area: f64) -> Drivers {
    let climate = 9.0 + 1.5 * normal.sample(rng);
    let windiness = 1.0 + 0.1 * (log_area - 4.0);
    let mut drivers = Drivers::default();
    let mut anomaly = 0.0;
    for date in dates {
        let doy = date.ordinal();
        let phase = 2.0 * std::f64::consts::PI * doy as f64 / 365.0;
        anomaly = 0.8 * anomaly + 1.5 * normal.sample(rng);
        let air_temp = climate + 13.0 * (phase - 2.0 * std::f64::consts::PI * 110.0 / 365.0).sin() + anomaly;
        let wind = 3.0 * windiness * (0.4 * normal.sample(rng)).exp();
        let light = (0.5 + 0.35 * (phase - 2.0 * std::f64::consts::PI * 80.0 / 365.0).sin()
            + 0.12 * normal.sample(rng))
        .clamp(0.0, 1.0);
        drivers.push(DayDrivers {
            air_temp,
            wind,
            light,
            doy,
        });
    }
    drivers
}

fn lake_id(i: usize) -> String {
    format!("lake{i:03}")
}

fn meta_for(id: &str, m: &Morphometry) -> LakeMeta {
    LakeMeta {
        lake_id: id.to_string(),
        area_m2: m.area,
        volume_m3: m.volume,
        max_depth_m: m.max_depth,
        file: format!("lakes/{id}.csv"),
    }
}

/// Generates a full benchmark from a single seed.
pub fn gen_synthetic(cfg: &GenConfig) -> Result<Benchmark> {
    cfg.validate()?;
    match &cfg.planted {
        Some(p) => gen_planted(cfg, p),
        None => gen_process(cfg),
    }
}

fn observe<R: Rng>(rng: &mut R, normal: &Normal<f64>, rate: f64, noise: f64, truth: [f64; 2]) -> [Option<f64>; 2] {
    if rng.random::<f64>() < rate {
        [
            Some((truth[0] + noise * normal.sample(rng)).max(0.0)),
            Some((truth[1] + noise * normal.sample(rng)).max(0.0)),
        ]
    } else {
        [None, None]
    }
}

fn gen_process(cfg: &GenConfig) -> Result<Benchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let schema = lake_schema();
    let dates = calendar(cfg);
    let mut metas = Vec::with_capacity(cfg.lakes);
    let mut lakes = Vec::with_capacity(cfg.lakes);
    for i in 0..cfg.lakes {
        let id = lake_id(i);
        let morph = sample_morphometry(&mut rng, &normal);
        let log_area = morph.area.log10();
        let drivers = sample_drivers(&mut rng, &normal, &dates, log_area);
        let load = 0.5 + morph.trophic + 0.1 * morph.land_use as f64;
        let sim_params = LakeParams {
            hypo_fraction: morph.hypo_fraction,
            k_sed: cfg.base.k_sed * load * (8.0 / morph.max_depth).sqrt().clamp(0.5, 1.5),
            gpp: cfg.base.gpp * load,
            resp: cfg.base.resp * load,
            ..cfg.base.clone()
        };
        let bias = if log_area > 6.0 { cfg.large_lake_bias } else { cfg.sim_bias };
        let mut jitter = || (cfg.lake_jitter * normal.sample(&mut rng)).exp();
        let truth_params = LakeParams {
            k_sed: sim_params.k_sed * (1.0 + bias) * jitter(),
            resp: sim_params.resp * (1.0 + bias) * jitter(),
            k_ent: sim_params.k_ent * jitter(),
            ..sim_params.clone()
        };
        let init = LakeState::mixed_at(4.0)?;
        let sim = simulate(&sim_params, &drivers, init)?;
        let truth = simulate(&truth_params, &drivers, init)?;
        let (mut obs_epi, mut obs_hyp) = (Vec::with_capacity(dates.len()), Vec::with_capacity(dates.len()));
        let mut features = Vec::with_capacity(dates.len());
        for t in 0..dates.len() {
            let d = drivers.day(t);
            let f = &sim.fluxes[t];
            features.push(vec![
                d.air_temp,
                d.wind,
                d.light,
                d.doy as f64,
                log_area,
                morph.max_depth,
                morph.trophic,
                morph.land_use as f64,
                f.f_atm,
                f.f_nep,
                f.f_sed,
                f.f_ent,
            ]);
            let s = truth.states[t];
            let [oe, oh] = observe(&mut rng, &normal, cfg.obs_rate, cfg.obs_noise, [s.do_epi, s.do_hyp]);
            obs_epi.push(oe);
            obs_hyp.push(oh);
        }
        let ds = LakeDataset {
            lake_id: id.clone(),
            feature_names: schema.names(),
            dates: dates.clone(),
            features,
            sim_epi: sim.epi(),
            sim_hyp: sim.hyp(),
            obs_epi,
            obs_hyp,
            area_m2: morph.area,
            volume_m3: morph.volume,
        };
        ds.validate()?;
        metas.push(meta_for(&id, &morph));
        lakes.push(ds);
    }
    Ok(Benchmark { schema, metas, lakes })
}

fn gen_planted(cfg: &GenConfig, p: &PlantedConfig) -> Result<Benchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let fields: Vec<FieldSpec> = (0..p.fields).map(|i| FieldSpec::numeric(&format!("x{i}"), 10)).collect();
    let schema = FeatureSchema::new(fields)?;
    let dates = calendar(cfg);
    let mut metas = Vec::with_capacity(cfg.lakes);
    let mut lakes = Vec::with_capacity(cfg.lakes);
    for i in 0..cfg.lakes {
        let id = lake_id(i);
        let morph = sample_morphometry(&mut rng, &normal);
        let mut ds = LakeDataset {
            lake_id: id.clone(),
            feature_names: schema.names(),
            dates: dates.clone(),
            features: Vec::with_capacity(dates.len()),
            sim_epi: Vec::with_capacity(dates.len()),
            sim_hyp: Vec::with_capacity(dates.len()),
            obs_epi: Vec::with_capacity(dates.len()),
            obs_hyp: Vec::with_capacity(dates.len()),
            area_m2: morph.area,
            volume_m3: morph.volume,
        };
        for _ in 0..dates.len() {
            let x: Vec<f64> = (0..p.fields).map(|_| rng.random::<f64>()).collect();
            let signal = p.amplitude * (x[p.pair[0]] - 0.5) * (x[p.pair[1]] - 0.5);
            let epi = (p.base + signal + p.noise * normal.sample(&mut rng)).max(0.0);
            let hyp = (0.5 * p.base + signal + p.noise * normal.sample(&mut rng)).max(0.0);
            let [oe, oh] = observe(&mut rng, &normal, cfg.obs_rate, cfg.obs_noise, [epi, hyp]);
            ds.features.push(x);
            ds.sim_epi.push(epi);
            ds.sim_hyp.push(hyp);
            ds.obs_epi.push(oe);
            ds.obs_hyp.push(oh);
        }
        ds.validate()?;
        metas.push(meta_for(&id, &morph));
        lakes.push(ds);
    }
    Ok(Benchmark { schema, metas, lakes })
}
