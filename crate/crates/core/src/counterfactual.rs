//! Closest-counterfactual search: growing fields, the growing spheres
//! baseline, and clustering of enemy sets.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldgen::{sample_field, FieldSample, FieldSpace, FieldVariant};
use crate::geometry::{euclidean, DistanceContext, Standardizer};
use crate::kmeans::{elbow, inertia_curve, ElbowRule};
use crate::models::Classifier;
use crate::rng;
use crate::tabular::{Dataset, FeatureKind, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowingConfig {
    pub r0: f64,
    pub theta: f64,
    pub n: usize,
    pub max_expansions: usize,
    pub max_halvings: usize,
    /// Growing fields caps the radius at 1; growing spheres works in raw
    /// units and is uncapped.
    pub cap: Option<f64>,
    pub variant: FieldVariant,
}

impl GrowingConfig {
    pub fn fields() -> Self {
        GrowingConfig {
            r0: 0.1,
            theta: 1.8,
            n: 2000,
            max_expansions: 20,
            max_halvings: 40,
            cap: Some(1.0),
            variant: FieldVariant::Centered,
        }
    }

    pub fn spheres() -> Self {
        GrowingConfig { max_expansions: 60, cap: None, ..Self::fields() }
    }
}

impl Default for GrowingConfig {
    fn default() -> Self {
        Self::fields()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub closest_enemy: Instance,
    pub enemy_class: usize,
    pub target_class: usize,
    /// Normalized standardized distance for growing fields; raw Euclidean
    /// distance for growing spheres.
    pub distance: f64,
    pub final_radius: f64,
    /// Normalizer of the target (standardized units).
    pub delta: f64,
    pub iterations: usize,
    /// Radius of each sample drawn, in order.
    pub radii: Vec<f64>,
    #[serde(skip)]
    pub sample: Option<FieldSample>,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Two-phase radius schedule shared by both searches: halve while enemies
/// are present, then grow by `theta` until one appears.
fn schedule<F>(cfg: &GrowingConfig, mut draw: F) -> Result<(FieldSample, Vec<f64>)>
where
    F: FnMut(f64, u64) -> Result<FieldSample>,
{
    let mut it = 0u64;
    let mut r = cfg.r0;
    let mut radii = vec![r];
    let mut z = draw(r, it)?;
    let mut halvings = 0;
    while z.has_enemy() && halvings < cfg.max_halvings {
        it += 1;
        halvings += 1;
        let r2 = r / 2.0;
        let z2 = draw(r2, it)?;
        radii.push(r2);
        if !z2.has_enemy() {
            r = r2;
            z = z2;
            break;
        }
        r = r2;
        z = z2;
    }
    let mut expansions = 0;
    while !z.has_enemy() {
        if expansions >= cfg.max_expansions {
            return Err(Error::NoCounterfactual);
        }
        expansions += 1;
        it += 1;
        r *= cfg.theta;
        if let Some(c) = cfg.cap {
            r = r.min(c);
        }
        z = draw(r, it)?;
        radii.push(r);
    }
    Ok((z, radii))
}

fn closest<D: Fn(&[f64]) -> f64>(z: &FieldSample, dist: D) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for i in z.enemies() {
        let d = dist(&z.instances[i]);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Growing fields search around `target`.
pub fn growing_fields(
    ds: &Dataset,
    model: &dyn Classifier,
    target: &Instance,
    cfg: &GrowingConfig,
    seed: u64,
) -> Result<CounterfactualResult> {
    let start = Instant::now();
    ds.check_instance(target)?;
    let target_class = model.predict_one(target)?;
    let ctx = DistanceContext::new(ds.standardizer(), ds.delta(target)?)?;
    let space = FieldSpace::new(ds, ctx.delta, cfg.variant);
    let (z, radii) = schedule(cfg, |r, it| {
        sample_field(&space, model, r, target, cfg.n, target_class, rng::derive(seed, it))
    })?;
    let (i, d) = closest(&z, |x| ctx.normalized(target, x));
    Ok(CounterfactualResult {
        closest_enemy: z.instances[i].clone(),
        enemy_class: z.labels[i],
        target_class,
        distance: d,
        final_radius: z.radius,
        delta: ctx.delta,
        iterations: radii.len(),
        radii,
        sample: Some(z),
        wall_time: start.elapsed(),
    })
}

fn ball_sample(center: &[f64], r: f64, n: usize, seed: u64) -> Vec<Instance> {
    let d = center.len();
    let chunks = n.div_ceil(256);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut g = rng::stream(seed, c as u64);
            let k = 256.min(n - c * 256);
            (0..k)
                .map(|_| {
                    let dir: Vec<f64> = (0..d).map(|_| g.sample(StandardNormal)).collect();
                    let norm = dir.iter().map(|v: &f64| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                    let rad = r * g.gen::<f64>().powf(1.0 / d as f64);
                    center.iter().zip(&dir).map(|(c, v)| c + rad * v / norm).collect()
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Growing spheres: uniform draws in an l2 ball of raw feature space with
/// plain Euclidean distance. Radii are in raw units.
pub fn growing_spheres(
    ds: &Dataset,
    model: &dyn Classifier,
    target: &Instance,
    cfg: &GrowingConfig,
    seed: u64,
) -> Result<CounterfactualResult> {
    let start = Instant::now();
    if let Some(s) = ds.specs.iter().find(|s| s.kind == FeatureKind::Categorical) {
        return Err(Error::UnsupportedFeature(s.name.clone()));
    }
    ds.check_instance(target)?;
    let target_class = model.predict_one(target)?;
    let (z, radii) = schedule(cfg, |r, it| {
        let instances = ball_sample(target, r, cfg.n, rng::derive(seed, it));
        let labels = model.predict(&instances)?;
        Ok(FieldSample { center: target.clone(), radius: r, instances, labels, reference_class: target_class })
    })?;
    let (i, d) = closest(&z, |x| euclidean(target, x));
    Ok(CounterfactualResult {
        closest_enemy: z.instances[i].clone(),
        enemy_class: z.labels[i],
        target_class,
        distance: d,
        final_radius: z.radius,
        delta: 0.0,
        iterations: radii.len(),
        radii,
        sample: Some(z),
        wall_time: start.elapsed(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnemyClusterSet {
    pub k: usize,
    /// Cluster centers mapped back to raw feature space.
    pub centroids: Vec<Instance>,
    /// The enemy nearest each center.
    pub representatives: Vec<Instance>,
    pub inertia: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub kmax: usize,
    pub rule: ElbowRule,
    /// Larger enemy sets are uniformly subsampled before k-means.
    pub max_points: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { kmax: 10, rule: ElbowRule::Kneedle, max_points: 4000 }
    }
}

/// k-means on standardized coordinates with elbow-selected k.
pub fn cluster_enemies(
    enemies: &[Instance],
    standardizer: &Standardizer,
    cfg: &ClusterConfig,
    seed: u64,
) -> Result<EnemyClusterSet> {
    if enemies.is_empty() {
        return Err(Error::InvalidArgument("no enemies to cluster".into()));
    }
    let all: Vec<Vec<f64>> = enemies.iter().map(|e| standardizer.embed(e)).collect();
    let mut idx: Vec<usize> = (0..all.len()).collect();
    if idx.len() > cfg.max_points {
        idx.shuffle(&mut rng::stream(seed, 0xC1));
        idx.truncate(cfg.max_points);
        idx.sort_unstable();
    }
    let pts: Vec<Vec<f64>> = idx.iter().map(|&i| all[i].clone()).collect();
    let mut distinct = pts.clone();
    distinct.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    let kmax = cfg.kmax.min(distinct.len()).max(1);
    let runs = inertia_curve(&pts, kmax, seed);
    let inertia: Vec<f64> = runs.iter().map(|r| r.inertia).collect();
    let k = elbow(&inertia, standardizer.dim(), cfg.rule);
    let chosen = &runs[k - 1];
    let mut representatives = Vec::with_capacity(k);
    let mut centroids = Vec::with_capacity(k);
    for c in &chosen.centroids {
        let mut best = (0, f64::INFINITY);
        for (i, p) in all.iter().enumerate() {
            let d = euclidean(c, p);
            if d < best.1 {
                best = (i, d);
            }
        }
        representatives.push(enemies[best.0].clone());
        centroids.push(standardizer.unembed(c));
    }
    Ok(EnemyClusterSet { k, centroids, representatives, inertia })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Model, Planted};
    use crate::tabular::{uniform_box, FeatureSpec};

    fn sign_model(d: usize) -> Model {
        let mut w = vec![0.0; d];
        w[0] = 1.0;
        let specs = (0..d).map(|j| FeatureSpec::numerical(format!("x{}", j + 1))).collect();
        Model::planted(specs, Planted::Linear { w, b: 0.0, slope: f64::INFINITY })
    }

    #[test]
    fn finds_boundary_of_sign_model() {
        let ds = uniform_box(1000, 2, -1.0, 1.0, 1).unwrap();
        let m = sign_model(2);
        let x = vec![0.3, 0.1];
        let cf = growing_fields(&ds, &m, &x, &GrowingConfig::fields(), 5).unwrap();
        assert!(cf.closest_enemy[0] <= 0.0);
        assert_eq!(m.predict_one(&cf.closest_enemy).unwrap(), 0);
        let st = ds.standardizer();
        let best_train = ds
            .rows
            .iter()
            .filter(|r| r[0] <= 0.0)
            .map(|r| st.distance(&x, r) / cf.delta)
            .fold(f64::INFINITY, f64::min);
        assert!(cf.distance < best_train);
    }

    #[test]
    fn constant_model_has_no_counterfactual() {
        let ds = uniform_box(100, 2, -1.0, 1.0, 1).unwrap();
        let m = Model::planted(ds.specs.clone(), Planted::Constant { class: 1, n_classes: 2 });
        let r = growing_fields(&ds, &m, &vec![0.0, 0.0], &GrowingConfig::fields(), 1);
        assert!(matches!(r, Err(Error::NoCounterfactual)));
    }

    #[test]
    fn far_target_skips_shrinking() {
        let ds = uniform_box(1000, 2, -1.0, 1.0, 1).unwrap();
        let m = sign_model(2);
        let cf = growing_fields(&ds, &m, &vec![0.95, 0.0], &GrowingConfig::fields(), 2).unwrap();
        assert!(cf.final_radius >= 0.1);
        let grow = &cf.radii[1..];
        for w in grow.windows(2) {
            assert!(w[1] > w[0] || w[1] == 1.0);
        }
    }

    #[test]
    fn spheres_reject_categorical() {
        let ds = crate::tabular::read_dataset("a,s\n1,F\n2,M\n".as_bytes(), None, None).unwrap();
        let m = Model::planted(ds.specs.clone(), Planted::Constant { class: 0, n_classes: 2 });
        let r = growing_spheres(&ds, &m, &ds.rows[0].clone(), &GrowingConfig::spheres(), 0);
        assert!(matches!(r, Err(Error::UnsupportedFeature(_))));
    }

    #[test]
    fn both_searches_valid_on_blobs() {
        let ds = crate::tabular::synthesize_dataset(crate::tabular::SyntheticKind::Blobs, 300, 1.0, 3).unwrap();
        let m = crate::models::train_model(&ds, &crate::models::ModelConfig::new(crate::models::ModelKind::LogisticRegression), 0).unwrap();
        let x = ds.rows[0].clone();
        let c = m.predict_one(&x).unwrap();
        let a = growing_fields(&ds, &m, &x, &GrowingConfig::fields(), 1).unwrap();
        let b = growing_spheres(&ds, &m, &x, &GrowingConfig::spheres(), 1).unwrap();
        assert_ne!(m.predict_one(&a.closest_enemy).unwrap(), c);
        assert_ne!(m.predict_one(&b.closest_enemy).unwrap(), c);
    }

    #[test]
    fn clusters_three_blobs_with_valid_representatives() {
        let mut r = rng::rng(3);
        let mut e = Vec::new();
        for c in [(-5.0, 0.0), (5.0, 0.0), (0.0, 6.0)] {
            for _ in 0..200 {
                e.push(vec![c.0 + r.gen_range(-0.3..0.3), c.1 + r.gen_range(-0.3..0.3)]);
            }
        }
        let ds = uniform_box(100, 2, -6.0, 6.0, 0).unwrap();
        let cl = cluster_enemies(&e, &ds.standardizer(), &ClusterConfig::default(), 4).unwrap();
        assert_eq!(cl.k, 3);
        for rep in &cl.representatives {
            assert!(e.contains(rep));
        }
    }

    #[test]
    fn identical_enemies_single_cluster() {
        let ds = uniform_box(100, 2, -1.0, 1.0, 0).unwrap();
        let e = vec![vec![0.5, 0.5]; 30];
        let cl = cluster_enemies(&e, &ds.standardizer(), &ClusterConfig::default(), 0).unwrap();
        assert_eq!(cl.k, 1);
        assert_eq!(cl.representatives, vec![vec![0.5, 0.5]]);
    }
}
