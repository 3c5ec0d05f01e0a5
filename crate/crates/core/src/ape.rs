//! Adapted explanations: counterfactual search, oracle verdict, then either
//! a linear surrogate with the closest counterfactual or a rule with one
//! counterfactual per enemy cluster.

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::counterfactual::{cluster_enemies, growing_fields, ClusterConfig, CounterfactualResult, GrowingConfig};
use crate::geometry::Standardizer;
use crate::error::{Error, Result};
use crate::fieldgen::{sample_field, FieldSample, FieldSpace};
use crate::models::{Classifier, SCHEMA_VERSION};
use crate::oracle::{ape_oracle, OracleConfig, OracleVerdict};
use crate::rng;
use crate::rules::{anchor_search, discretize, fmt_sig, AnchorConfig, AnchorRule, DiscretizationMethod, Rule};
use crate::surrogates::{feature_ranking, fit_shallow_tree, ls_ape, FeatureRanking, LinearSurrogate, LsApeResult, LsConfig, TREE_DEPTH};
use crate::tabular::{Dataset, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    #[default]
    Tree,
    Anchor,
}

impl std::str::FromStr for Fallback {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tree" => Ok(Fallback::Tree),
            "anchor" => Ok(Fallback::Anchor),
            _ => Err(Error::InvalidArgument(format!("unknown fallback `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApeConfig {
    pub growing: GrowingConfig,
    pub oracle: OracleConfig,
    pub ls: LsConfig,
    pub cluster: ClusterConfig,
    pub fallback: Fallback,
    pub anchor: AnchorConfig,
    pub discretizer: DiscretizationMethod,
    pub tree_depth: usize,
    /// Growth factor of the enemy-set extension.
    pub extension_theta: f64,
}

impl Default for ApeConfig {
    fn default() -> Self {
        ApeConfig {
            growing: GrowingConfig::fields(),
            oracle: OracleConfig::default(),
            ls: LsConfig::default(),
            cluster: ClusterConfig::default(),
            fallback: Fallback::Tree,
            anchor: AnchorConfig::default(),
            discretizer: DiscretizationMethod::Mdlp,
            tree_depth: TREE_DEPTH,
            extension_theta: 1.8,
        }
    }
}

/// Named feature values in schema order; categories appear as strings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMap(pub Vec<(String, serde_json::Value)>);

impl FeatureMap {
    pub fn new(ds: &Dataset, x: &[f64]) -> Self {
        FeatureMap(
            ds.specs
                .iter()
                .zip(x)
                .map(|(s, &v)| {
                    let val = if s.is_categorical() {
                        serde_json::Value::String(s.categories[v as usize].clone())
                    } else {
                        serde_json::Number::from_f64(v).map_or(serde_json::Value::Null, serde_json::Value::Number)
                    };
                    (s.name.clone(), val)
                })
                .collect(),
        )
    }
}

impl Serialize for FeatureMap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for FeatureMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = FeatureMap;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of feature values")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut a: A) -> std::result::Result<FeatureMap, A::Error> {
                let mut out = Vec::new();
                while let Some(e) = a.next_entry()? {
                    out.push(e);
                }
                Ok(FeatureMap(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub instance: Instance,
    pub features: FeatureMap,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub distance: f64,
    pub final_radius: f64,
    pub delta: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Fallbacks {
    Anchor(AnchorRule),
    Tree { rule: Rule, adherence: f64, depth: usize },
}

impl Fallbacks {
    pub fn rule(&self) -> &Rule {
        match self {
            Fallbacks::Anchor(a) => &a.rule,
            Fallbacks::Tree { rule, .. } => rule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Linear {
        surrogate: LinearSurrogate,
        ranking: FeatureRanking,
        counterfactual: Counterfactual,
        radii: Vec<f64>,
        adherences: Vec<f64>,
        tau: f64,
    },
    RuleBased {
        rule: Fallbacks,
        counterfactuals: Vec<Counterfactual>,
        /// Cluster centers in raw feature space.
        centroids: Vec<Instance>,
        k: usize,
        extension_radii: Vec<f64>,
        n_enemies: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timings {
    pub counterfactual: Duration,
    pub oracle: Duration,
    pub surrogate: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub schema_version: u32,
    pub seed: u64,
    pub config: ApeConfig,
    pub target: Instance,
    pub target_features: FeatureMap,
    pub predicted_class: usize,
    pub predicted_label: String,
    pub search: SearchSummary,
    /// Radius of the field sampled around the closest enemy.
    pub field_radius: f64,
    pub verdict: OracleVerdict,
    pub explanation: Payload,
    pub rendering: Vec<String>,
    /// Wall-clock timings are kept out of the document so reruns compare equal.
    #[serde(skip)]
    pub timings: Timings,
}

impl Explanation {
    pub fn is_linear(&self) -> bool {
        matches!(self.explanation, Payload::Linear { .. })
    }

    pub fn counterfactuals(&self) -> Vec<&Counterfactual> {
        match &self.explanation {
            Payload::Linear { counterfactual, .. } => vec![counterfactual],
            Payload::RuleBased { counterfactuals, .. } => counterfactuals.iter().collect(),
        }
    }

    /// Payload kind agrees with the oracle verdict.
    pub fn consistent(&self) -> bool {
        self.is_linear() == self.verdict.linear_suitable
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: Explanation = serde_json::from_str(s)?;
        if e.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported schema version {}", e.schema_version)));
        }
        if !e.consistent() {
            return Err(Error::Format("explanation kind disagrees with verdict".into()));
        }
        Ok(e)
    }
}

fn class_name(ds: &Dataset, c: usize) -> String {
    ds.class_names.get(c).cloned().unwrap_or_else(|| c.to_string())
}

fn describe(ds: &Dataset, x: &[f64]) -> String {
    (0..x.len())
        .map(|j| {
            let v = if ds.specs[j].is_categorical() { ds.format_value(j, x[j]) } else { fmt_sig(x[j]) };
            format!("{}={v}", ds.specs[j].name)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn rule_precision(rule: &Rule, z: &FieldSample) -> Option<f64> {
    let covered: Vec<usize> = (0..z.len()).filter(|&i| rule.holds(&z.instances[i])).collect();
    if covered.is_empty() {
        return None;
    }
    Some(covered.iter().filter(|&&i| z.labels[i] == rule.class).count() as f64 / covered.len() as f64)
}

/// Neighbourhood of the closest counterfactual shared by the explanation
/// pipeline and the experiments.
pub struct Locality {
    pub class: usize,
    pub cf: CounterfactualResult,
    pub space: FieldSpace,
    pub standardizer: Standardizer,
    /// dist(x, e) / δ
    pub radius: f64,
    /// Field around the closest enemy at `radius`.
    pub field: FieldSample,
    /// Training rows inside that field with black-box labels.
    pub real: Vec<(Instance, usize)>,
}

pub fn locality(ds: &Dataset, model: &dyn Classifier, target: &Instance, cfg: &ApeConfig, seed: u64) -> Result<Locality> {
    ds.check_instance(target)?;
    let class = model.predict_one(target)?;
    let cf = growing_fields(ds, model, target, &cfg.growing, rng::derive(seed, 1))?;
    let space = FieldSpace::new(ds, cf.delta, cfg.growing.variant);
    let radius = cf.distance.clamp(1e-9, 1.0);
    let e = &cf.closest_enemy;
    let field = sample_field(&space, model, radius, e, cfg.growing.n, class, rng::derive(seed, 2))?;
    let rows: Vec<Instance> = ds.rows.iter().filter(|x| space.contains(e, x, radius)).cloned().collect();
    let labels = model.predict(&rows)?;
    Ok(Locality { class, standardizer: ds.standardizer(), space, radius, field, real: rows.into_iter().zip(labels).collect(), cf })
}

impl Locality {
    pub fn verdict(&self, oracle: &OracleConfig, seed: u64) -> OracleVerdict {
        ape_oracle(&self.field, &self.real, &self.standardizer, oracle, rng::derive(seed, 3))
    }

    pub fn ls_ape(&self, model: &dyn Classifier, cfg: &ApeConfig, seed: u64) -> Result<LsApeResult> {
        ls_ape(&self.space, model, &self.standardizer, &self.cf.closest_enemy, self.radius, self.class, cfg.growing.n, &cfg.ls, rng::derive(seed, 4))
    }
}

/// Explain the black box's decision on `target`.
pub fn explain(ds: &Dataset, model: &dyn Classifier, target: &Instance, cfg: &ApeConfig, seed: u64) -> Result<Explanation> {
    let start = Instant::now();
    let loc = locality(ds, model, target, cfg, seed)?;
    let t_cf = start.elapsed();
    let t0 = Instant::now();
    let verdict = loc.verdict(&cfg.oracle, seed);
    let t_oracle = t0.elapsed();
    let (class, r) = (loc.class, loc.radius);
    let cf = &loc.cf;
    let e = cf.closest_enemy.clone();

    let t1 = Instant::now();
    let mut rendering = Vec::new();
    let explanation = if verdict.linear_suitable {
        let res = loc.ls_ape(model, cfg, seed)?;
        let ranking = feature_ranking(&res.surrogate);
        let top: Vec<String> = ranking.entries.iter().take(5).map(|r| format!("{} ({})", r.name, fmt_sig(r.score))).collect();
        rendering.push(format!(
            "linear surrogate for {} (adherence {}, radius {}): {}",
            class_name(ds, class),
            fmt_sig(res.surrogate.adherence),
            fmt_sig(res.surrogate.training_radius),
            if top.is_empty() { "no influential feature".to_string() } else { top.join(", ") }
        ));
        rendering.push(format!("closest counterfactual ({}): {}", class_name(ds, cf.enemy_class), describe(ds, &e)));
        Payload::Linear {
            ranking,
            counterfactual: Counterfactual { features: FeatureMap::new(ds, &e), instance: e, class: cf.enemy_class },
            radii: res.radii,
            adherences: res.adherences,
            tau: res.tau,
            surrogate: res.surrogate,
        }
    } else {
        rule_based(ds, model, target, &loc, &verdict, cfg, seed, &mut rendering)?
    };
    let t_surrogate = t1.elapsed();

    Ok(Explanation {
        schema_version: SCHEMA_VERSION,
        seed,
        config: cfg.clone(),
        target: target.clone(),
        target_features: FeatureMap::new(ds, target),
        predicted_class: class,
        predicted_label: class_name(ds, class),
        search: SearchSummary { distance: cf.distance, final_radius: cf.final_radius, delta: cf.delta, iterations: cf.iterations },
        field_radius: r,
        verdict,
        explanation,
        rendering,
        timings: Timings { counterfactual: t_cf, oracle: t_oracle, surrogate: t_surrogate, total: start.elapsed() },
    })
}

/// Fallback rule fitted on the field around the closest enemy.
pub fn fallback_rule(ds: &Dataset, model: &dyn Classifier, target: &Instance, loc: &Locality, cfg: &ApeConfig, seed: u64) -> Result<Fallbacks> {
    Ok(match cfg.fallback {
        Fallback::Anchor => {
            let labels = model.predict(&ds.rows)?;
            let scheme = discretize(ds, Some(&labels), cfg.discretizer, rng::derive(seed, 5))?;
            Fallbacks::Anchor(anchor_search(ds, model, target, &scheme, &cfg.anchor, rng::derive(seed, 6))?)
        }
        Fallback::Tree => {
            let z = &loc.field;
            let t = fit_shallow_tree(&ds.specs, &z.instances, &z.labels, model.n_classes(), target, loc.class, cfg.tree_depth, rng::derive(seed, 6))?;
            Fallbacks::Tree { depth: t.tree.depth(), rule: t.rule, adherence: t.adherence }
        }
    })
}

fn rule_based(
    ds: &Dataset,
    model: &dyn Classifier,
    target: &Instance,
    loc: &Locality,
    verdict: &OracleVerdict,
    cfg: &ApeConfig,
    seed: u64,
    rendering: &mut Vec<String>,
) -> Result<Payload> {
    let (class, r, z, space, closest) = (loc.class, loc.radius, &loc.field, &loc.space, &loc.cf.closest_enemy);
    let rule = fallback_rule(ds, model, target, loc, cfg, seed)?;
    rendering.push(rule.rule().render(&ds.specs, &ds.class_names));

    let mut enemies: Vec<Instance> = z.enemies().iter().map(|&i| z.instances[i].clone()).collect();
    let mut extension_radii = vec![r];
    let mut cur = r;
    let mut it = 0u64;
    while cur < 1.0 {
        cur = (cur * cfg.extension_theta).min(1.0);
        let fresh = sample_field(space, model, cur, closest, cfg.growing.n, class, rng::derive2(seed, 7, it))?;
        it += 1;
        match rule_precision(rule.rule(), &fresh) {
            Some(p) if p >= cfg.anchor.tau => {
                extension_radii.push(cur);
                enemies.extend(fresh.enemies().iter().map(|&i| fresh.instances[i].clone()));
            }
            _ => break,
        }
    }

    let degenerate = verdict.reason.is_some_and(|r| matches!(r, crate::oracle::Reason::NoEnemies | crate::oracle::Reason::NoFriends));
    let (k, centroids, reps) = if degenerate || enemies.is_empty() {
        (1, vec![closest.clone()], vec![closest.clone()])
    } else {
        let set = cluster_enemies(&enemies, &ds.standardizer(), &cfg.cluster, rng::derive(seed, 8))?;
        (set.k, set.centroids, set.representatives)
    };
    let labels = model.predict(&reps)?;
    let counterfactuals: Vec<Counterfactual> = reps
        .into_iter()
        .zip(labels)
        .map(|(x, c)| Counterfactual { features: FeatureMap::new(ds, &x), instance: x, class: c })
        .collect();
    for (i, c) in counterfactuals.iter().enumerate() {
        rendering.push(format!("counterfactual {} ({}): {}", i + 1, class_name(ds, c.class), describe(ds, &c.instance)));
    }
    Ok(Payload::RuleBased { rule, counterfactuals, centroids, k, extension_radii, n_enemies: enemies.len() })
}

/// Explain many targets in parallel; target `i` uses a seed derived from `i`.
pub fn explain_batch(
    ds: &Dataset,
    model: &dyn Classifier,
    targets: &[Instance],
    cfg: &ApeConfig,
    seed: u64,
) -> Vec<Result<Explanation>> {
    targets.par_iter().enumerate().map(|(i, x)| explain(ds, model, x, cfg, rng::derive(seed, i as u64))).collect()
}
