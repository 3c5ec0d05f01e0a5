//! Experiment protocols: adherence by verdict, glass-box fidelity,
//! counterfactual quality against growing spheres, and the oracle ablation.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ape::{fallback_rule, locality, ApeConfig, Fallback, Fallbacks};
use crate::counterfactual::{growing_fields, growing_spheres, CounterfactualResult, GrowingConfig};
use crate::error::{Error, Result};
use crate::fieldgen::sample_field;
use crate::geometry::{mahalanobis_distance, DistanceContext};
use crate::models::{ground_truth_ranking, train_model, Classifier, Model, ModelConfig, ModelKind, Planted, SCHEMA_VERSION};
use crate::rng;
use crate::stats::{kendall_tau_b, mean};
use crate::surrogates::fit_linear_surrogate;
use crate::tabular::{synthesize_dataset, uniform_box, Dataset, FeatureSpec, Instance, SyntheticKind};

/// Mean, sample standard deviation and count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
}

impl Summary {
    pub fn of(v: &[f64]) -> Self {
        let n = v.len();
        if n == 0 {
            return Summary { mean: None, std: None, n };
        }
        let m = mean(v);
        let std = if n > 1 { (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Summary { mean: Some(m), std: Some(std), n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub condition: String,
    pub metric: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub n_requested: usize,
    pub n_errors: usize,
    pub rows: Vec<Row>,
    /// Differences and other derived scalars; `null` when a group is empty.
    pub derived: BTreeMap<String, Option<f64>>,
    /// Seconds per condition; not serialized so reports are reproducible.
    #[serde(skip)]
    pub wall_times: BTreeMap<String, Vec<f64>>,
}

impl ExperimentReport {
    fn new(experiment: &str, seed: u64, config: serde_json::Value) -> Self {
        ExperimentReport {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.into(),
            seed,
            config,
            seeds: vec![],
            n_requested: 0,
            n_errors: 0,
            rows: vec![],
            derived: BTreeMap::new(),
            wall_times: BTreeMap::new(),
        }
    }

    fn push(&mut self, condition: &str, metric: &str, values: &[f64]) {
        self.rows.push(Row { condition: condition.into(), metric: metric.into(), summary: Summary::of(values) });
    }

    pub fn get(&self, condition: &str, metric: &str) -> Option<&Summary> {
        self.rows.iter().find(|r| r.condition == condition && r.metric == metric).map(|r| &r.summary)
    }

    pub fn mean(&self, condition: &str, metric: &str) -> Option<f64> {
        self.get(condition, metric).and_then(|s| s.mean)
    }

    pub fn median_wall_time(&self, condition: &str) -> Option<f64> {
        let mut v = self.wall_times.get(condition)?.clone();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(crate::stats::quantile_sorted(&v, 0.5))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One line per (condition, metric); derived scalars use the condition
    /// `derived`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["experiment", "condition", "metric", "mean", "std", "n"])?;
        let f = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.rows {
            w.write_record([&self.experiment, &r.condition, &r.metric, &f(r.summary.mean), &f(r.summary.std), &r.summary.n.to_string()])?;
        }
        for (k, v) in &self.derived {
            w.write_record([&self.experiment, "derived", k, &f(*v), "", ""])?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?).map_err(|e| Error::Format(e.to_string()))
    }
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// A dataset with the black box to explain on it.
pub struct PoolEntry {
    pub name: String,
    pub data: Dataset,
    pub model: Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    /// Planted linear and checkerboard models on `[-1, 1]^2`.
    #[default]
    Mixed,
    /// Blobs, moons and circles with trained tree, forest and logistic models.
    Synthetic,
}

/// Checkerboard cell edge; small enough that a field around a boundary
/// point usually spans several cells.
pub const CHECKER_CELL: f64 = 0.1;

pub fn mixed_pool(seed: u64) -> Result<Vec<PoolEntry>> {
    let ds = uniform_box(1000, 2, -1.0, 1.0, rng::derive(seed, 0xB0))?;
    Ok(vec![
        PoolEntry {
            name: "linear".into(),
            model: Model::planted(ds.specs.clone(), Planted::Linear { w: vec![1.0, 0.5], b: 0.1, slope: f64::INFINITY }),
            data: ds.clone(),
        },
        PoolEntry {
            name: "checkerboard".into(),
            model: Model::planted(ds.specs.clone(), Planted::Checkerboard { cell: CHECKER_CELL, dims: vec![0, 1] }),
            data: ds,
        },
    ])
}

pub fn synthetic_pool(seed: u64) -> Result<Vec<PoolEntry>> {
    let mut out = Vec::new();
    for (i, (kind, noise)) in [(SyntheticKind::Blobs, 1.5), (SyntheticKind::Moons, 0.2), (SyntheticKind::Circles, 0.1)].into_iter().enumerate() {
        let ds = synthesize_dataset(kind, 1000, noise, rng::derive2(seed, 0xB1, i as u64))?;
        for (k, mk) in [ModelKind::DecisionTree, ModelKind::RandomForest, ModelKind::LogisticRegression].into_iter().enumerate() {
            let model = train_model(&ds, &ModelConfig::new(mk), rng::derive2(seed, 0xB2, (3 * i + k) as u64))?;
            out.push(PoolEntry { name: format!("{kind:?}-{}", model.kind_name()).to_lowercase(), data: ds.clone(), model });
        }
    }
    Ok(out)
}

fn pool(kind: PoolKind, seed: u64) -> Result<Vec<PoolEntry>> {
    match kind {
        PoolKind::Mixed => mixed_pool(seed),
        PoolKind::Synthetic => synthetic_pool(seed),
    }
}

/// `(entry, row)` pairs: `n_targets` spread evenly over the entries.
fn targets(pool: &[PoolEntry], n_targets: usize, seed: u64) -> Vec<(usize, usize)> {
    let per = n_targets / pool.len().max(1);
    let extra = n_targets % pool.len().max(1);
    let mut out = Vec::new();
    for (p, e) in pool.iter().enumerate() {
        let mut idx: Vec<usize> = (0..e.data.n_rows()).collect();
        idx.shuffle(&mut rng::stream(seed, 0x7A + p as u64));
        let k = per + usize::from(p < extra);
        out.extend(idx.into_iter().take(k).map(|i| (p, i)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdherenceConfig {
    pub n_targets: usize,
    pub pool: PoolKind,
    pub ape: ApeConfig,
}

impl Default for AdherenceConfig {
    fn default() -> Self {
        AdherenceConfig { n_targets: 100, pool: PoolKind::Mixed, ape: ApeConfig::default() }
    }
}

struct AdherenceRecord {
    entry: usize,
    yes: bool,
    ls_ape: f64,
    lime: f64,
    ls: f64,
}

fn adherence_record(e: &PoolEntry, entry: usize, x: &Instance, cfg: &ApeConfig, seed: u64) -> Result<AdherenceRecord> {
    let loc = locality(&e.data, &e.model, x, cfg, seed)?;
    let verdict = loc.verdict(&cfg.oracle, seed);
    let res = loc.ls_ape(&e.model, cfg, seed)?;
    let around_x = sample_field(&loc.space, &e.model, loc.radius, x, cfg.growing.n, loc.class, rng::derive(seed, 9))?;
    let lime = fit_linear_surrogate(&around_x, &e.model, loc.class, &loc.standardizer, rng::derive(seed, 10))?;
    Ok(AdherenceRecord { entry, yes: verdict.linear_suitable, ls_ape: res.surrogate.adherence, lime: lime.adherence, ls: res.tau })
}

/// LS_APE adherence grouped by oracle verdict, with the x-centred and the
/// non-expanding surrogate as baselines.
pub fn run_adherence_experiment(cfg: &AdherenceConfig, seed: u64) -> Result<ExperimentReport> {
    let pool = pool(cfg.pool, seed)?;
    let jobs = targets(&pool, cfg.n_targets, seed);
    let start = Instant::now();
    let recs: Vec<Result<AdherenceRecord>> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(p, r))| adherence_record(&pool[p], p, &pool[p].data.rows[r], &cfg.ape, rng::derive(seed, i as u64)))
        .collect();
    let mut rep = ExperimentReport::new("adherence", seed, serde_json::to_value(cfg)?);
    rep.n_requested = jobs.len();
    rep.seeds = (0..jobs.len() as u64).map(|i| rng::derive(seed, i)).collect();
    let ok: Vec<&AdherenceRecord> = recs.iter().filter_map(|r| r.as_ref().ok()).collect();
    rep.n_errors = jobs.len() - ok.len();
    let groups: Vec<(String, Vec<&AdherenceRecord>)> = [("yes", true), ("no", false)]
        .iter()
        .map(|(n, y)| (n.to_string(), ok.iter().copied().filter(|r| r.yes == *y).collect()))
        .chain(pool.iter().enumerate().map(|(p, e)| (e.name.clone(), ok.iter().copied().filter(|r| r.entry == p).collect())))
        .collect();
    for (name, g) in &groups {
        rep.push(name, "ls_ape_adherence", &g.iter().map(|r| r.ls_ape).collect::<Vec<_>>());
        rep.push(name, "lime_lite_adherence", &g.iter().map(|r| r.lime).collect::<Vec<_>>());
        rep.push(name, "ls_adherence", &g.iter().map(|r| r.ls).collect::<Vec<_>>());
        rep.push(name, "suitable_rate", &g.iter().map(|r| f64::from(u8::from(r.yes))).collect::<Vec<_>>());
    }
    rep.derived.insert("gap".into(), diff(rep.mean("yes", "ls_ape_adherence"), rep.mean("no", "ls_ape_adherence")));
    rep.wall_times.insert("all".into(), vec![start.elapsed().as_secs_f64()]);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlassboxConfig {
    pub n_features: usize,
    pub n_rows: usize,
    pub n_targets: usize,
    pub ape: ApeConfig,
}

impl Default for GlassboxConfig {
    fn default() -> Self {
        GlassboxConfig { n_features: 6, n_rows: 1000, n_targets: 90, ape: ApeConfig::default() }
    }
}

/// Uniform data on `[-1, 1]^d` where the second half of the columns is 0,
/// labelled by a planted linear rule on the first half.
pub fn zero_masked_dataset(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    let half = d / 2;
    let base = uniform_box(n, d, -1.0, 1.0, seed)?;
    let w: Vec<f64> = (0..d).map(|j| if j < d - half { (d - half - j) as f64 } else { 0.0 }).collect();
    let rows: Vec<Instance> = base.rows.iter().map(|r| r.iter().enumerate().map(|(j, &v)| if j < d - half { v } else { 0.0 }).collect()).collect();
    let labels = rows.iter().map(|r| usize::from(r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() > 0.0)).collect();
    Dataset::new(base.specs, rows, Some(labels), vec!["0".into(), "1".into()])
}

/// Importance vector keeping the `k` largest |values| and zeroing the rest.
pub fn top_k_vector(coef: &[f64], k: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..coef.len()).collect();
    idx.sort_by(|&a, &b| coef[b].abs().total_cmp(&coef[a].abs()).then(a.cmp(&b)));
    let mut out = vec![0.0; coef.len()];
    for &j in idx.iter().take(k) {
        out[j] = coef[j].abs();
    }
    out
}

/// Kendall tau-b between an explanation's top-half ranking and the model's
/// ground truth over features, plus the precision of the top-half set.
pub fn fidelity_scores(surrogate_coef: &[f64], truth: &[f64]) -> (f64, f64) {
    let half = truth.len().div_ceil(2).max(1);
    let mine = top_k_vector(surrogate_coef, half);
    let tau = kendall_tau_b(&mine, truth);
    let gt = top_k_vector(truth, half);
    let chosen: Vec<usize> = (0..mine.len()).filter(|&j| mine[j] > 0.0).collect();
    let hits = chosen.iter().filter(|&&j| gt[j] > 0.0).count();
    let precision = if chosen.is_empty() { 0.0 } else { hits as f64 / chosen.len() as f64 };
    (if tau.is_finite() { tau } else { 0.0 }, precision)
}

/// Explanations of glass boxes trained on zero-masked data, scored against
/// the models' own importances.
pub fn run_glassbox_fidelity(cfg: &GlassboxConfig, seed: u64) -> Result<ExperimentReport> {
    let ds = zero_masked_dataset(cfg.n_rows, cfg.n_features, rng::derive(seed, 0xC0))?;
    let kinds = [ModelKind::LogisticRegression, ModelKind::DecisionTree, ModelKind::RandomForest];
    let models: Vec<Model> = kinds
        .iter()
        .enumerate()
        .map(|(i, &k)| train_model(&ds, &ModelConfig::new(k), rng::derive(seed, 0xC1 + i as u64)))
        .collect::<Result<_>>()?;
    let entries: Vec<PoolEntry> = models.into_iter().map(|m| PoolEntry { name: m.kind_name().into(), data: ds.clone(), model: m }).collect();
    let jobs = targets(&entries, cfg.n_targets, seed);
    let recs: Vec<Result<(usize, bool, f64, f64)>> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(p, r))| {
            let s = rng::derive(seed, i as u64);
            let e = &entries[p];
            let loc = locality(&e.data, &e.model, &e.data.rows[r], &cfg.ape, s)?;
            let verdict = loc.verdict(&cfg.ape.oracle, s);
            let res = loc.ls_ape(&e.model, &cfg.ape, s)?;
            let truth = ground_truth_ranking(&e.model).dense(cfg.n_features);
            let (tau, prec) = fidelity_scores(&res.surrogate.coefficients, &truth);
            Ok((p, verdict.linear_suitable, tau, prec))
        })
        .collect();
    let mut rep = ExperimentReport::new("glassbox", seed, serde_json::to_value(cfg)?);
    rep.n_requested = jobs.len();
    rep.seeds = (0..jobs.len() as u64).map(|i| rng::derive(seed, i)).collect();
    let ok: Vec<(usize, bool, f64, f64)> = recs.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    rep.n_errors = jobs.len() - ok.len();
    let mut groups: Vec<(String, Vec<(usize, bool, f64, f64)>)> =
        vec![("yes".into(), ok.iter().copied().filter(|r| r.1).collect()), ("no".into(), ok.iter().copied().filter(|r| !r.1).collect())];
    for (p, e) in entries.iter().enumerate() {
        groups.push((e.name.clone(), ok.iter().copied().filter(|r| r.0 == p).collect()));
    }
    for (name, g) in &groups {
        rep.push(name, "kendall_tau", &g.iter().map(|r| r.2).collect::<Vec<_>>());
        rep.push(name, "top_half_precision", &g.iter().map(|r| r.3).collect::<Vec<_>>());
    }
    rep.derived.insert("tau_gap".into(), diff(rep.mean("yes", "kendall_tau"), rep.mean("no", "kendall_tau")));
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfQualityConfig {
    /// Per-feature standard deviations of the Gaussian data.
    pub stds: Vec<f64>,
    pub n_rows: usize,
    pub n_targets: usize,
    pub fields: GrowingConfig,
    pub spheres: GrowingConfig,
}

impl Default for CfQualityConfig {
    fn default() -> Self {
        CfQualityConfig { stds: vec![1.0, 1000.0], n_rows: 1000, n_targets: 30, fields: GrowingConfig::fields(), spheres: GrowingConfig::spheres() }
    }
}

/// Centred Gaussian data with the given per-feature standard deviations.
pub fn gaussian_dataset(n: usize, stds: &[f64], seed: u64) -> Result<Dataset> {
    let mut r = rng::rng(seed);
    let g: Vec<Normal<f64>> = stds.iter().map(|&s| Normal::new(0.0, s).map_err(|e| Error::InvalidArgument(e.to_string()))).collect::<Result<_>>()?;
    let rows = (0..n).map(|_| g.iter().map(|d| d.sample(&mut r)).collect()).collect();
    let specs = (0..stds.len()).map(|j| FeatureSpec::numerical(format!("x{}", j + 1))).collect();
    Dataset::new(specs, rows, None, vec![])
}

struct CfRecord {
    method: &'static str,
    mahalanobis: f64,
    distance: f64,
    queries: f64,
    seconds: f64,
}

/// Growing fields against growing spheres on Gaussian data whose boundary
/// weighs every feature equally in standardized units.
pub fn run_cf_quality(cfg: &CfQualityConfig, seed: u64) -> Result<ExperimentReport> {
    let ds = gaussian_dataset(cfg.n_rows, &cfg.stds, rng::derive(seed, 0xD0))?;
    let w: Vec<f64> = cfg.stds.iter().map(|s| 1.0 / s).collect();
    let model = Model::planted(ds.specs.clone(), Planted::Linear { w, b: 0.0, slope: f64::INFINITY });
    let labels = model.predict(&ds.rows)?;
    let entry = [PoolEntry { name: "gaussian".into(), data: ds.clone(), model: model.clone() }];
    let jobs = targets(&entry, cfg.n_targets, seed);
    let st = ds.standardizer();
    let recs: Vec<Result<Vec<CfRecord>>> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(_, r))| {
            let s = rng::derive(seed, i as u64);
            let x = &ds.rows[r];
            let class = labels[r];
            let pool: Vec<Instance> = ds.rows.iter().zip(&labels).filter(|(_, &l)| l != class).map(|(x, _)| x.clone()).collect();
            let ctx = DistanceContext::new(st.clone(), ds.delta(x)?)?;
            let mut out = Vec::new();
            for (method, res) in [
                ("gf", time(|| growing_fields(&ds, &model, x, &cfg.fields, rng::derive(s, 1)))),
                ("gs", time(|| growing_spheres(&ds, &model, x, &cfg.spheres, rng::derive(s, 2)))),
            ] {
                let (res, seconds): (CounterfactualResult, f64) = (res.0?, res.1);
                out.push(CfRecord {
                    method,
                    mahalanobis: mahalanobis_distance(&res.closest_enemy, &pool)?,
                    distance: ctx.normalized(x, &res.closest_enemy),
                    queries: (res.iterations * cfg.fields.n) as f64,
                    seconds,
                });
            }
            Ok(out)
        })
        .collect();
    let mut rep = ExperimentReport::new("cf_quality", seed, serde_json::to_value(cfg)?);
    rep.n_requested = jobs.len();
    rep.seeds = (0..jobs.len() as u64).map(|i| rng::derive(seed, i)).collect();
    let ok: Vec<&CfRecord> = recs.iter().filter_map(|r| r.as_ref().ok()).flatten().collect();
    rep.n_errors = recs.iter().filter(|r| r.is_err()).count();
    for m in ["gf", "gs"] {
        let g: Vec<&&CfRecord> = ok.iter().filter(|r| r.method == m).collect();
        rep.push(m, "mahalanobis", &g.iter().map(|r| r.mahalanobis).collect::<Vec<_>>());
        rep.push(m, "normalized_distance", &g.iter().map(|r| r.distance).collect::<Vec<_>>());
        rep.push(m, "queries", &g.iter().map(|r| r.queries).collect::<Vec<_>>());
        rep.wall_times.insert(m.into(), g.iter().map(|r| r.seconds).collect());
    }
    rep.derived.insert("mahalanobis_gap".into(), diff(rep.mean("gs", "mahalanobis"), rep.mean("gf", "mahalanobis")));
    Ok(rep)
}

fn time<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub n_targets: usize,
    pub pool: PoolKind,
    pub ape: ApeConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig { n_targets: 100, pool: PoolKind::Mixed, ape: ApeConfig::default() }
    }
}

pub const ARMS: [&str; 3] = ["full", "no_folding", "no_separability"];

/// Adherence of the adapted explanation under the full oracle and with
/// either test removed. A target judged suitable is scored by its LS_APE
/// surrogate, otherwise by the shallow-tree fallback. All arms share
/// targets, fields and seeds.
pub fn run_ablation(cfg: &AblationConfig, seed: u64) -> Result<ExperimentReport> {
    let pool = pool(cfg.pool, seed)?;
    let jobs = targets(&pool, cfg.n_targets, seed);
    let tree_cfg = ApeConfig { fallback: Fallback::Tree, ..cfg.ape.clone() };
    let recs: Vec<Result<(usize, [bool; 3], f64, f64)>> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(p, r))| {
            let s = rng::derive(seed, i as u64);
            let e = &pool[p];
            let x = &e.data.rows[r];
            let loc = locality(&e.data, &e.model, x, &cfg.ape, s)?;
            let mut verdicts = [false; 3];
            for (a, v) in verdicts.iter_mut().enumerate() {
                let mut o = cfg.ape.oracle;
                o.use_folding = a != 1;
                o.use_separability = a != 2;
                *v = loc.verdict(&o, s).linear_suitable;
            }
            let lin = loc.ls_ape(&e.model, &cfg.ape, s)?.surrogate.adherence;
            let tree = match fallback_rule(&e.data, &e.model, x, &loc, &tree_cfg, s) {
                Ok(Fallbacks::Tree { adherence, .. }) => adherence,
                Ok(_) => unreachable!(),
                Err(Error::SingleClass) => 1.0,
                Err(err) => return Err(err),
            };
            Ok((p, verdicts, lin, tree))
        })
        .collect();
    let mut rep = ExperimentReport::new("ablation", seed, serde_json::to_value(cfg)?);
    rep.n_requested = jobs.len();
    rep.seeds = (0..jobs.len() as u64).map(|i| rng::derive(seed, i)).collect();
    let ok: Vec<(usize, [bool; 3], f64, f64)> = recs.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    rep.n_errors = jobs.len() - ok.len();
    for (a, arm) in ARMS.iter().enumerate() {
        let adh: Vec<f64> = ok.iter().map(|r| if r.1[a] { r.2 } else { r.3 }).collect();
        rep.push(arm, "adherence", &adh);
        rep.push(arm, "suitable_rate", &ok.iter().map(|r| f64::from(u8::from(r.1[a]))).collect::<Vec<_>>());
        for (p, e) in pool.iter().enumerate() {
            let g: Vec<&(usize, [bool; 3], f64, f64)> = ok.iter().filter(|r| r.0 == p).collect();
            rep.push(&format!("{arm}/{}", e.name), "adherence", &g.iter().map(|r| if r.1[a] { r.2 } else { r.3 }).collect::<Vec<_>>());
            rep.push(&format!("{arm}/{}", e.name), "suitable_rate", &g.iter().map(|r| f64::from(u8::from(r.1[a]))).collect::<Vec<_>>());
        }
    }
    for arm in &ARMS[1..] {
        rep.derived.insert(format!("full_minus_{arm}"), diff(rep.mean("full", "adherence"), rep.mean(arm, "adherence")));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_counts() {
        let s = Summary::of(&[1.0, 2.0, 3.0]);
        assert_eq!((s.mean, s.n), (Some(2.0), 3));
        assert!((s.std.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(Summary::of(&[]).mean, None);
    }

    #[test]
    fn fidelity_extremes() {
        let truth = vec![3.0, 2.0, 1.0, 0.0, 0.0, 0.0];
        assert_eq!(fidelity_scores(&[0.9, -0.5, 0.2, 0.0, 0.0, 0.0], &truth), (1.0, 1.0));
        let (tau, prec) = fidelity_scores(&[0.0, 0.0, 0.0, 0.3, 0.2, 0.1], &truth);
        assert!(tau < 0.0);
        assert_eq!(prec, 0.0);
        assert!((kendall_tau_b(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn targets_are_spread_and_paired() {
        let pool = mixed_pool(1).unwrap();
        let t = targets(&pool, 7, 3);
        assert_eq!(t.len(), 7);
        assert_eq!(t.iter().filter(|x| x.0 == 0).count(), 4);
        assert_eq!(t, targets(&pool, 7, 3));
    }

    #[test]
    fn zero_masked_columns_are_constant() {
        let d = zero_masked_dataset(200, 6, 1).unwrap();
        assert!(d.rows.iter().all(|r| r[3] == 0.0 && r[4] == 0.0 && r[5] == 0.0));
        assert_eq!(d.stats[4].std, 0.0);
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let mut r = ExperimentReport::new("x", 1, serde_json::Value::Null);
        r.push("yes", "a", &[1.0]);
        r.derived.insert("gap".into(), None);
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("x,derived,gap,,,"));
    }
}
