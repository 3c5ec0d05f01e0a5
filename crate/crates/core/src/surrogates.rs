//! Local surrogates: least-squares linear models, the expanding linear
//! surrogate, shallow decision trees, feature rankings and adherence.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldgen::{sample_field, FieldSample, FieldSpace};
use crate::geometry::Standardizer;
use crate::models::{encode, encoded_feature_map, Classifier, MaxFeatures, ModelConfig, ModelKind, Node, Tree};
use crate::rng;
use crate::rules::{Predicate, Rule};
use crate::tabular::{FeatureSpec, Instance};

pub const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl OlsFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Ordinary least squares with an intercept. Falls back to a ridge penalty
/// on the slopes when the normal equations are (numerically) singular.
pub fn ols(x: &[Vec<f64>], y: &[f64]) -> Result<OlsFit> {
    if x.is_empty() {
        return Err(Error::Singular);
    }
    let p = x[0].len() + 1;
    let mut ata = DMatrix::<f64>::zeros(p, p);
    let mut aty = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for (xi, &yi) in x.iter().zip(y) {
        row[0] = 1.0;
        row[1..].copy_from_slice(xi);
        for a in 0..p {
            aty[a] += row[a] * yi;
            for b in a..p {
                ata[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            ata[(a, b)] = ata[(b, a)];
        }
    }
    let max_diag = (0..p).map(|a| ata[(a, a)]).fold(0.0, f64::max);
    let well_posed = |c: &Cholesky<f64, nalgebra::Dyn>| {
        let l = c.l_dirty();
        (0..p).all(|a| l[(a, a)] * l[(a, a)] > 1e-10 * max_diag)
    };
    let chol = match Cholesky::new(ata.clone()) {
        Some(c) if well_posed(&c) => c,
        _ => {
            let mut reg = ata;
            for a in 1..p {
                reg[(a, a)] += RIDGE * x.len() as f64;
            }
            Cholesky::new(reg).ok_or(Error::Singular)?
        }
    };
    let beta = chol.solve(&aty);
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(OlsFit { intercept: beta[0], coefficients: beta.iter().skip(1).cloned().collect() })
}

/// Agreement rate between two label vectors.
pub fn adherence(predicted: &[bool], actual: &[bool]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(actual).filter(|(a, b)| a == b).count() as f64 / predicted.len() as f64
}

/// Linear model of the target-class probability on standardized, one-hot
/// expanded coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSurrogate {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub dim_names: Vec<String>,
    pub training_radius: f64,
    pub adherence: f64,
    pub target_class: usize,
}

impl LinearSurrogate {
    pub fn predict(&self, z: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// 70/30 split of `0..n`.
fn split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, 0x5A));
    let k = (n as f64 * 0.7).round() as usize;
    let test = idx.split_off(k);
    (idx, test)
}

pub fn fit_linear_surrogate(
    sample: &FieldSample,
    model: &dyn Classifier,
    target_class: usize,
    standardizer: &Standardizer,
    seed: u64,
) -> Result<LinearSurrogate> {
    let n = sample.len();
    if n < 20 {
        return Err(Error::InvalidArgument("linear surrogate needs at least 20 instances".into()));
    }
    let proba = model.predict_proba(&sample.instances)?;
    let z: Vec<Vec<f64>> = sample.instances.iter().map(|x| standardizer.embed(x)).collect();
    let (train, test) = split(n, seed);
    let xs: Vec<Vec<f64>> = train.iter().map(|&i| z[i].clone()).collect();
    let ys: Vec<f64> = train.iter().map(|&i| proba[i][target_class]).collect();
    let fit = ols(&xs, &ys)?;
    let pred: Vec<bool> = test.iter().map(|&i| fit.predict(&z[i]) >= 0.5).collect();
    let act: Vec<bool> = test.iter().map(|&i| sample.labels[i] == target_class).collect();
    Ok(LinearSurrogate {
        intercept: fit.intercept,
        coefficients: fit.coefficients,
        dim_names: standardizer.dim_names.clone(),
        training_radius: sample.radius,
        adherence: adherence(&pred, &act),
        target_class,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    /// r ← min(1, θ·r) while adherence holds.
    Expand { theta: f64 },
    /// r ← θ·r taken literally (shrinks for θ < 1).
    Literal { theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsConfig {
    pub growth: Growth,
    pub max_iterations: usize,
}

impl Default for LsConfig {
    fn default() -> Self {
        LsConfig { growth: Growth::Expand { theta: 1.8 }, max_iterations: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsApeResult {
    pub surrogate: LinearSurrogate,
    pub radii: Vec<f64>,
    pub adherences: Vec<f64>,
    pub tau: f64,
}

/// Expanding linear surrogate centred on the closest enemy. The initial
/// radius is the normalized distance between target and enemy; the field
/// grows while adherence stays at or above its initial value.
#[allow(clippy::too_many_arguments)]
pub fn ls_ape(
    space: &FieldSpace,
    model: &dyn Classifier,
    standardizer: &Standardizer,
    enemy: &Instance,
    r_init: f64,
    target_class: usize,
    n: usize,
    cfg: &LsConfig,
    seed: u64,
) -> Result<LsApeResult> {
    let mut r = r_init.clamp(1e-9, 1.0);
    let fit_at = |r: f64, it: u64| -> Result<LinearSurrogate> {
        let s = rng::derive(seed, it);
        let z = sample_field(space, model, r, enemy, n, target_class, s)?;
        fit_linear_surrogate(&z, model, target_class, standardizer, s)
    };
    let mut best = fit_at(r, 0)?;
    let tau = best.adherence;
    let mut radii = vec![r];
    let mut adherences = vec![tau];
    let mut it = 1;
    loop {
        let next = match cfg.growth {
            Growth::Expand { theta } => {
                if r >= 1.0 {
                    break;
                }
                (theta * r).min(1.0)
            }
            Growth::Literal { theta } => theta * r,
        };
        if it > cfg.max_iterations || !(next > 1e-12) || next > 1.0 {
            break;
        }
        r = next;
        let g = fit_at(r, it as u64)?;
        radii.push(r);
        adherences.push(g.adherence);
        it += 1;
        if g.adherence >= tau {
            best = g;
        } else {
            break;
        }
    }
    Ok(LsApeResult { surrogate: best, radii, adherences, tau })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub dim: usize,
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub entries: Vec<RankEntry>,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

const ZERO_COEF: f64 = 1e-12;

pub fn feature_ranking(g: &LinearSurrogate) -> FeatureRanking {
    ranking_from(&g.coefficients, &g.dim_names)
}

pub fn ranking_from(coef: &[f64], names: &[String]) -> FeatureRanking {
    let mut dims: Vec<usize> = (0..coef.len()).filter(|&j| coef[j].abs() > ZERO_COEF).collect();
    dims.sort_by(|&a, &b| coef[b].abs().total_cmp(&coef[a].abs()).then(a.cmp(&b)));
    let entries: Vec<RankEntry> = dims
        .iter()
        .map(|&j| RankEntry { dim: j, name: names.get(j).cloned().unwrap_or_default(), score: coef[j] })
        .collect();
    let positive = dims.iter().copied().filter(|&j| coef[j] > 0.0).collect();
    let negative = dims.iter().copied().filter(|&j| coef[j] < 0.0).collect();
    FeatureRanking { entries, positive, negative }
}

/// Two surrogates contradict each other when their ordered signed rankings
/// differ.
pub fn rankings_contradict(a: &FeatureRanking, b: &FeatureRanking) -> bool {
    let key = |r: &FeatureRanking| r.entries.iter().map(|e| (e.dim, e.score > 0.0)).collect::<Vec<_>>();
    key(a) != key(b)
}

/// Largest |coefficient| per original feature.
pub fn feature_scores(g: &LinearSurrogate, standardizer: &Standardizer) -> Vec<f64> {
    let mut out = vec![0.0; standardizer.n_features()];
    for (k, &c) in g.coefficients.iter().enumerate() {
        let j = standardizer.dim_feature[k];
        out[j] = f64::max(out[j], c.abs());
    }
    out
}

/// Depth-limited CART on black-box labels, over one-hot raw inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSurrogate {
    pub tree: Tree,
    pub adherence: f64,
    /// Root-to-leaf path of the target as a rule for the target's class.
    pub rule: Rule,
}

pub const TREE_DEPTH: usize = 3;

pub fn fit_shallow_tree(
    specs: &[FeatureSpec],
    instances: &[Instance],
    labels: &[usize],
    n_classes: usize,
    target: &Instance,
    target_class: usize,
    max_depth: usize,
    seed: u64,
) -> Result<TreeSurrogate> {
    let first = labels.first().copied();
    if labels.iter().all(|&l| Some(l) == first) {
        return Err(Error::SingleClass);
    }
    let x: Vec<Vec<f64>> = instances.iter().map(|r| encode(specs, r)).collect();
    let (train, test) = split(x.len(), seed);
    let mut cfg = ModelConfig::new(ModelKind::DecisionTree);
    cfg.max_depth = Some(max_depth);
    cfg.max_features = MaxFeatures::All;
    let tree = Tree::fit(&x, labels, train, n_classes, &cfg, seed);
    let pred: Vec<usize> = test.iter().map(|&i| crate::stats::argmax(tree.proba(&x[i]))).collect();
    let agree = pred.iter().zip(&test).filter(|(p, &i)| **p == labels[i]).count();
    let adherence = agree as f64 / test.len().max(1) as f64;
    let rule = path_rule(&tree, specs, target, target_class);
    Ok(TreeSurrogate { tree, adherence, rule })
}

/// The conditions met by `x` on its way to a leaf.
pub fn path_rule(tree: &Tree, specs: &[FeatureSpec], x: &Instance, class: usize) -> Rule {
    let map = encoded_feature_map(specs);
    let mut first_dim = vec![0usize; specs.len()];
    for (k, &j) in map.iter().enumerate().rev() {
        first_dim[j] = k;
    }
    let e = encode(specs, x);
    let mut preds = Vec::new();
    for id in tree.path(&e) {
        if let Node::Split { feature, threshold, .. } = &tree.nodes[id] {
            let j = map[*feature];
            let left = e[*feature] <= *threshold;
            let p = if specs[j].is_categorical() {
                let category = feature - first_dim[j];
                if left {
                    Predicate::Ne { feature: j, category }
                } else {
                    Predicate::Eq { feature: j, category }
                }
            } else if left {
                Predicate::Le { feature: j, value: *threshold }
            } else {
                Predicate::Gt { feature: j, value: *threshold }
            };
            preds.push(p);
        }
    }
    Rule::new(preds, class)
}
