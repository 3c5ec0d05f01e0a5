//! Built-in classifiers behind one opaque contract, plus glass-box
//! introspection (coefficients, decision paths, Gini importance) and planted
//! synthetic models with known decision boundaries.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::stats::argmax;
use crate::tabular::{check_instance, Dataset, FeatureSpec, Instance};

pub const SCHEMA_VERSION: u32 = 1;

/// The black-box contract: class probabilities for a batch of instances.
pub trait Classifier: Sync {
    fn n_classes(&self) -> usize;

    fn predict_proba(&self, batch: &[Instance]) -> Result<Vec<Vec<f64>>>;

    /// Arg-max class; ties go to the lowest class index.
    fn predict(&self, batch: &[Instance]) -> Result<Vec<usize>> {
        Ok(self.predict_proba(batch)?.iter().map(|p| argmax(p)).collect())
    }

    fn predict_one(&self, x: &Instance) -> Result<usize> {
        Ok(self.predict(std::slice::from_ref(x))?[0])
    }
}

/// One-hot expansion with raw numerical values.
pub fn encode(specs: &[FeatureSpec], x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(specs.len());
    for (s, &v) in specs.iter().zip(x) {
        if s.is_categorical() {
            for c in 0..s.categories.len() {
                out.push(if c == v as usize { 1.0 } else { 0.0 });
            }
        } else {
            out.push(v);
        }
    }
    out
}

/// Feature index of each one-hot expanded coordinate.
pub fn encoded_feature_map(specs: &[FeatureSpec]) -> Vec<usize> {
    let mut m = Vec::new();
    for (j, s) in specs.iter().enumerate() {
        let k = if s.is_categorical() { s.categories.len() } else { 1 };
        m.extend(std::iter::repeat(j).take(k));
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    DecisionTree,
    RandomForest,
    LogisticRegression,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tree" | "dt" | "decision-tree" => Ok(ModelKind::DecisionTree),
            "forest" | "rf" | "random-forest" => Ok(ModelKind::RandomForest),
            "lr" | "logistic" | "logistic-regression" => Ok(ModelKind::LogisticRegression),
            _ => Err(Error::InvalidArgument(format!("unknown model kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxFeatures {
    All,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub n_trees: usize,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            max_depth: None,
            min_samples_split: 2,
            n_trees: 20,
            bootstrap: true,
            max_features: if kind == ModelKind::RandomForest { MaxFeatures::Sqrt } else { MaxFeatures::All },
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { probs: Vec<f64>, n: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize, n: usize, gain: f64 },
}

/// CART tree over one-hot encoded inputs; `x <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_classes: usize,
    pub n_inputs: usize,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    max_depth: Option<usize>,
    min_split: usize,
    max_features: MaxFeatures,
    rng: rng::Rng,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn best_split(&self, idx: &[usize], feats: &[usize], parent: &[usize]) -> Option<(usize, f64, f64)> {
        let n = idx.len();
        let g0 = gini(parent, n);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = idx.to_vec();
        for &f in feats {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = vec![0usize; self.n_classes];
            let mut right = parent.to_vec();
            for k in 0..n - 1 {
                let c = self.y[order[k]];
                left[c] += 1;
                right[c] -= 1;
                let (a, b) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                if a == b {
                    continue;
                }
                let nl = k + 1;
                let nr = n - nl;
                let gain = g0 - (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                let thr = a + (b - a) / 2.0;
                if best.map_or(true, |(_, _, g)| gain > g + 1e-15) {
                    best = Some((f, thr, gain));
                }
            }
        }
        best
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let n = idx.len();
        let id = self.nodes.len();
        let leaf = Node::Leaf { probs: counts.iter().map(|&c| c as f64 / n as f64).collect(), n };
        self.nodes.push(leaf);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || n < self.min_split || self.max_depth.map_or(false, |m| depth >= m) {
            return id;
        }
        let d = self.x[0].len();
        let all: Vec<usize> = (0..d).collect();
        let mut split = None;
        if self.max_features == MaxFeatures::Sqrt && d > 1 {
            let k = ((d as f64).sqrt().round() as usize).max(1);
            let mut f = all.clone();
            f.shuffle(&mut self.rng);
            let mut f: Vec<usize> = f.into_iter().take(k).collect();
            f.sort_unstable();
            split = self.best_split(&idx, &f, &counts);
        }
        if split.is_none() {
            split = self.best_split(&idx, &all, &counts);
        }
        let Some((feature, threshold, gain)) = split else { return id };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold, left, right, n, gain };
        id
    }
}

impl Tree {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        idx: Vec<usize>,
        n_classes: usize,
        cfg: &ModelConfig,
        seed: u64,
    ) -> Tree {
        let mut b = TreeBuilder {
            x,
            y,
            n_classes,
            max_depth: cfg.max_depth,
            min_split: cfg.min_samples_split.max(2),
            max_features: cfg.max_features,
            rng: rng::rng(seed),
            nodes: Vec::new(),
        };
        b.build(idx, 0);
        Tree { nodes: b.nodes, n_classes, n_inputs: x.first().map_or(0, Vec::len) }
    }

    fn leaf(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn proba(&self, x: &[f64]) -> &[f64] {
        match &self.nodes[self.leaf(x)] {
            Node::Leaf { probs, .. } => probs,
            _ => unreachable!(),
        }
    }

    /// Node ids from the root to the leaf reached by `x`.
    pub fn path(&self, x: &[f64]) -> Vec<usize> {
        let mut out = vec![0];
        let mut i = 0;
        while let Node::Split { feature, threshold, left, right, .. } = &self.nodes[i] {
            i = if x[*feature] <= *threshold { *left } else { *right };
            out.push(i);
        }
        out
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    /// Total weighted impurity decrease per input, unnormalized.
    pub fn impurity_decrease(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_inputs];
        let root_n = match &self.nodes[0] {
            Node::Leaf { n, .. } | Node::Split { n, .. } => *n as f64,
        };
        for node in &self.nodes {
            if let Node::Split { feature, n, gain, .. } = node {
                imp[*feature] += *n as f64 / root_n * gain;
            }
        }
        imp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    /// Per-class weights on standardized encoded inputs.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

fn softmax(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

impl Logistic {
    fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, cfg: &ModelConfig) -> Logistic {
        let n = x.len();
        let p = x[0].len();
        let mut mean = vec![0.0; p];
        let mut scale = vec![1.0; p];
        for j in 0..p {
            let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
            mean[j] = crate::stats::mean(&col);
            let s = crate::stats::std_dev(&col);
            scale[j] = if s > 0.0 { s } else { 1.0 };
        }
        let xs: Vec<Vec<f64>> = x.iter().map(|r| (0..p).map(|j| (r[j] - mean[j]) / scale[j]).collect()).collect();
        let mut w = vec![vec![0.0; p]; n_classes];
        let mut b = vec![0.0; n_classes];
        let mut z = vec![0.0; n_classes];
        for _ in 0..cfg.epochs {
            let mut gw = vec![vec![0.0; p]; n_classes];
            let mut gb = vec![0.0; n_classes];
            for (r, &yi) in xs.iter().zip(y) {
                for c in 0..n_classes {
                    z[c] = b[c] + w[c].iter().zip(r).map(|(a, v)| a * v).sum::<f64>();
                }
                softmax(&mut z);
                for c in 0..n_classes {
                    let e = z[c] - if c == yi { 1.0 } else { 0.0 };
                    gb[c] += e;
                    for j in 0..p {
                        gw[c][j] += e * r[j];
                    }
                }
            }
            for c in 0..n_classes {
                b[c] -= cfg.learning_rate * gb[c] / n as f64;
                for j in 0..p {
                    w[c][j] -= cfg.learning_rate * (gw[c][j] / n as f64 + cfg.l2 * w[c][j]);
                }
            }
        }
        Logistic { weights: w, bias: b, mean, scale }
    }

    fn proba(&self, x: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().enumerate().map(|(j, a)| a * (x[j] - self.mean[j]) / self.scale[j]).sum::<f64>())
            .collect();
        softmax(&mut z);
        z
    }

    /// Per-input attribution: for two classes the weight difference, else
    /// the largest deviation of a class weight from the class-mean weight.
    pub fn coefficients(&self) -> Vec<f64> {
        let k = self.weights.len();
        let p = self.weights[0].len();
        if k == 2 {
            return (0..p).map(|j| self.weights[1][j] - self.weights[0][j]).collect();
        }
        (0..p)
            .map(|j| {
                let m = self.weights.iter().map(|w| w[j]).sum::<f64>() / k as f64;
                self.weights.iter().map(|w| w[j] - m).fold(0.0, |a: f64, v| if v.abs() > a.abs() { v } else { a })
            })
            .collect()
    }
}

/// Synthetic models with known structure, over raw numerical inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Planted {
    /// Class 1 iff w·x + b > 0; probability is a logistic of slope `slope`.
    Linear { w: Vec<f64>, b: f64, slope: f64 },
    /// Class = parity of the cell index sum over features `dims`.
    Checkerboard { cell: f64, dims: Vec<usize> },
    Constant { class: usize, n_classes: usize },
}

impl Planted {
    fn proba(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Planted::Linear { w, b, slope } => {
                let s = b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
                if *slope == f64::INFINITY {
                    return if s > 0.0 { vec![0.0, 1.0] } else { vec![1.0, 0.0] };
                }
                let p = 1.0 / (1.0 + (-slope * s).exp());
                vec![1.0 - p, p]
            }
            Planted::Checkerboard { cell, dims } => {
                let k: i64 = dims.iter().map(|&j| (x[j] / cell).floor() as i64).sum();
                if k.rem_euclid(2) == 1 {
                    vec![0.0, 1.0]
                } else {
                    vec![1.0, 0.0]
                }
            }
            Planted::Constant { class, n_classes } => {
                let mut p = vec![0.0; *n_classes];
                p[*class] = 1.0;
                p
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Body {
    DecisionTree(Tree),
    RandomForest(Forest),
    LogisticRegression(Logistic),
    Planted(Planted),
}

/// A trained or planted classifier together with its input schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub schema_version: u32,
    pub specs: Vec<FeatureSpec>,
    pub class_names: Vec<String>,
    pub body: Body,
}

impl Model {
    pub fn planted(specs: Vec<FeatureSpec>, planted: Planted) -> Model {
        let k = match &planted {
            Planted::Constant { n_classes, .. } => *n_classes,
            _ => 2,
        };
        Model {
            schema_version: SCHEMA_VERSION,
            specs,
            class_names: (0..k).map(|c| c.to_string()).collect(),
            body: Body::Planted(planted),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.body {
            Body::DecisionTree(_) => "decision_tree",
            Body::RandomForest(_) => "random_forest",
            Body::LogisticRegression(_) => "logistic_regression",
            Body::Planted(_) => "planted",
        }
    }

    fn proba_one(&self, x: &[f64]) -> Vec<f64> {
        match &self.body {
            Body::Planted(p) => p.proba(x),
            Body::DecisionTree(t) => t.proba(&encode(&self.specs, x)).to_vec(),
            Body::RandomForest(f) => {
                let e = encode(&self.specs, x);
                let mut acc = vec![0.0; self.class_names.len()];
                for t in &f.trees {
                    for (a, p) in acc.iter_mut().zip(t.proba(&e)) {
                        *a += p;
                    }
                }
                let k = f.trees.len() as f64;
                acc.iter().map(|a| a / k).collect()
            }
            Body::LogisticRegression(l) => l.proba(&encode(&self.specs, x)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Model> {
        let m: Model = serde_json::from_str(s)?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported schema_version {}", m.schema_version)));
        }
        Ok(m)
    }
}

impl Classifier for Model {
    fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    fn predict_proba(&self, batch: &[Instance]) -> Result<Vec<Vec<f64>>> {
        for x in batch {
            if x.len() != self.specs.len() {
                return Err(Error::Arity { expected: self.specs.len(), got: x.len() });
            }
        }
        Ok(batch.iter().map(|x| self.proba_one(x)).collect())
    }
}

/// Fit a built-in model on the labelled dataset.
pub fn train_model(ds: &Dataset, cfg: &ModelConfig, seed: u64) -> Result<Model> {
    let labels = ds.labels.as_ref().ok_or_else(|| Error::InvalidArgument("dataset has no labels".into()))?;
    for r in &ds.rows {
        check_instance(&ds.specs, r)?;
    }
    let n_classes = ds.n_classes();
    let present = {
        let mut seen = vec![false; n_classes];
        labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if present < 2 {
        return Err(Error::SingleClass);
    }
    let x: Vec<Vec<f64>> = ds.rows.iter().map(|r| encode(&ds.specs, r)).collect();
    let n = x.len();
    let body = match cfg.kind {
        ModelKind::DecisionTree => Body::DecisionTree(Tree::fit(&x, labels, (0..n).collect(), n_classes, cfg, seed)),
        ModelKind::RandomForest => {
            let trees = (0..cfg.n_trees)
                .into_par_iter()
                .map(|t| {
                    let s = rng::derive(seed, t as u64);
                    let idx = if cfg.bootstrap {
                        use rand::Rng as _;
                        let mut r = rng::rng(rng::derive(s, 1));
                        (0..n).map(|_| r.gen_range(0..n)).collect()
                    } else {
                        (0..n).collect()
                    };
                    Tree::fit(&x, labels, idx, n_classes, cfg, s)
                })
                .collect();
            Body::RandomForest(Forest { trees })
        }
        ModelKind::LogisticRegression => Body::LogisticRegression(Logistic::fit(&x, labels, n_classes, cfg)),
    };
    Ok(Model { schema_version: SCHEMA_VERSION, specs: ds.specs.clone(), class_names: ds.class_names.clone(), body })
}

pub fn accuracy(model: &dyn Classifier, rows: &[Instance], labels: &[usize]) -> Result<f64> {
    let p = model.predict(rows)?;
    Ok(p.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len().max(1) as f64)
}

/// Features ordered by decreasing importance; zero-importance features are
/// left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRanking {
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
}

impl GroundTruthRanking {
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] > 0.0).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let s = order.iter().map(|&j| scores[j]).collect();
        GroundTruthRanking { order, scores: s }
    }

    /// Dense importance vector over `d` features.
    pub fn dense(&self, d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        for (&j, &s) in self.order.iter().zip(&self.scores) {
            v[j] = s;
        }
        v
    }
}

fn per_feature(specs: &[FeatureSpec], per_input: &[f64], sum: bool) -> Vec<f64> {
    let map = encoded_feature_map(specs);
    let mut out = vec![0.0; specs.len()];
    for (k, &v) in per_input.iter().enumerate() {
        let j = map[k];
        if sum {
            out[j] += v;
        } else {
            out[j] = f64::max(out[j], v);
        }
    }
    out
}

/// Global ground truth: |coefficient| for logistic regression, normalized
/// Gini importance for trees and forests. For planted linear models the
/// |weights| are used.
pub fn ground_truth_ranking(model: &Model) -> GroundTruthRanking {
    let scores = match &model.body {
        Body::LogisticRegression(l) => {
            let c: Vec<f64> = l.coefficients().iter().map(|v| v.abs()).collect();
            per_feature(&model.specs, &c, false)
        }
        Body::DecisionTree(t) => normalize(per_feature(&model.specs, &t.impurity_decrease(), true)),
        Body::RandomForest(f) => {
            let mut acc = vec![0.0; model.specs.len()];
            for t in &f.trees {
                let v = normalize(per_feature(&model.specs, &t.impurity_decrease(), true));
                acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
            }
            normalize(acc)
        }
        Body::Planted(Planted::Linear { w, .. }) => w.iter().map(|v| v.abs()).collect(),
        Body::Planted(Planted::Checkerboard { dims, .. }) => {
            (0..model.specs.len()).map(|j| if dims.contains(&j) { 1.0 } else { 0.0 }).collect()
        }
        Body::Planted(Planted::Constant { .. }) => vec![0.0; model.specs.len()],
    };
    GroundTruthRanking::from_scores(&scores)
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.into_iter().map(|x| x / s).collect()
    } else {
        v
    }
}

/// Features tested on the root-to-leaf path of `x`, in path order, scored 1.
/// Only meaningful for a single decision tree; other models fall back to the
/// global ranking.
pub fn path_ranking(model: &Model, x: &Instance) -> GroundTruthRanking {
    match &model.body {
        Body::DecisionTree(t) => {
            let map = encoded_feature_map(&model.specs);
            let e = encode(&model.specs, x);
            let mut order = Vec::new();
            for id in t.path(&e) {
                if let Node::Split { feature, .. } = &t.nodes[id] {
                    let j = map[*feature];
                    if !order.contains(&j) {
                        order.push(j);
                    }
                }
            }
            let scores = vec![1.0; order.len()];
            GroundTruthRanking { order, scores }
        }
        _ => ground_truth_ranking(model),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{synthesize_dataset, uniform_box, SyntheticKind};
    use proptest::prelude::*;

    fn xor_data() -> Dataset {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        Dataset::new(
            vec![FeatureSpec::numerical("a"), FeatureSpec::numerical("b")],
            rows,
            Some(vec![0, 1, 1, 0]),
            vec!["0".into(), "1".into()],
        )
        .unwrap()
    }

    #[test]
    fn logistic_separates_blobs() {
        let d = synthesize_dataset(SyntheticKind::Blobs, 400, 0.8, 1).unwrap();
        let m = train_model(&d, &ModelConfig::new(ModelKind::LogisticRegression), 0).unwrap();
        assert!(accuracy(&m, &d.rows, d.labels.as_ref().unwrap()).unwrap() >= 0.99);
    }

    #[test]
    fn unbounded_tree_memorizes_even_xor() {
        let d = xor_data();
        let m = train_model(&d, &ModelConfig::new(ModelKind::DecisionTree), 0).unwrap();
        assert_eq!(accuracy(&m, &d.rows, d.labels.as_ref().unwrap()).unwrap(), 1.0);
        let d = synthesize_dataset(SyntheticKind::Moons, 300, 0.3, 2).unwrap();
        let m = train_model(&d, &ModelConfig::new(ModelKind::DecisionTree), 0).unwrap();
        assert_eq!(accuracy(&m, &d.rows, d.labels.as_ref().unwrap()).unwrap(), 1.0);
    }

    #[test]
    fn single_class_rejected() {
        let mut d = xor_data();
        d.labels = Some(vec![0; 4]);
        assert!(matches!(train_model(&d, &ModelConfig::new(ModelKind::DecisionTree), 0), Err(Error::SingleClass)));
    }

    #[test]
    fn training_is_deterministic() {
        let d = synthesize_dataset(SyntheticKind::Moons, 300, 0.2, 4).unwrap();
        let a = train_model(&d, &ModelConfig::new(ModelKind::RandomForest), 9).unwrap();
        let b = train_model(&d, &ModelConfig::new(ModelKind::RandomForest), 9).unwrap();
        assert_eq!(a, b);
        let probe = uniform_box(100, 2, -1.0, 2.0, 3).unwrap().rows;
        assert_eq!(a.predict(&probe).unwrap(), b.predict(&probe).unwrap());
    }

    #[test]
    fn forest_of_one_unbagged_tree_is_the_tree() {
        let d = synthesize_dataset(SyntheticKind::Moons, 200, 0.25, 6).unwrap();
        let mut cfg = ModelConfig::new(ModelKind::RandomForest);
        cfg.n_trees = 1;
        cfg.bootstrap = false;
        cfg.max_features = MaxFeatures::All;
        let f = train_model(&d, &cfg, 5).unwrap();
        let t = train_model(&d, &ModelConfig::new(ModelKind::DecisionTree), 5).unwrap();
        let probe = uniform_box(200, 2, -1.5, 2.5, 1).unwrap().rows;
        assert_eq!(f.predict_proba(&probe).unwrap(), t.predict_proba(&probe).unwrap());
    }

    #[test]
    fn batch_partitioning_does_not_matter() {
        let d = synthesize_dataset(SyntheticKind::Circles, 200, 0.1, 6).unwrap();
        let m = train_model(&d, &ModelConfig::new(ModelKind::RandomForest), 1).unwrap();
        let probe = uniform_box(100, 2, -1.5, 1.5, 2).unwrap().rows;
        let whole = m.predict_proba(&probe).unwrap();
        let parts: Vec<Vec<f64>> = probe.chunks(10).flat_map(|c| m.predict_proba(c).unwrap()).collect();
        assert_eq!(whole, parts);
    }

    #[test]
    fn arity_mismatch() {
        let m = Model::planted(vec![FeatureSpec::numerical("a")], Planted::Constant { class: 0, n_classes: 2 });
        assert!(matches!(m.predict(&[vec![1.0, 2.0]]), Err(Error::Arity { .. })));
    }

    #[test]
    fn argmax_tie_break() {
        let m = Model::planted(
            vec![FeatureSpec::numerical("a")],
            Planted::Linear { w: vec![1.0], b: 0.0, slope: 1.0 },
        );
        assert_eq!(m.predict(&[vec![0.0]]).unwrap(), vec![0]);
        assert_eq!(m.predict(&[vec![2.0]]).unwrap(), vec![1]);
    }

    #[test]
    fn logistic_ranking_by_absolute_coefficient() {
        let l = Logistic {
            weights: vec![vec![0.0; 3], vec![0.1, -3.0, 0.5]],
            bias: vec![0.0, 0.0],
            mean: vec![0.0; 3],
            scale: vec![1.0; 3],
        };
        let m = Model {
            schema_version: 1,
            specs: (0..3).map(|j| FeatureSpec::numerical(format!("x{j}"))).collect(),
            class_names: vec!["0".into(), "1".into()],
            body: Body::LogisticRegression(l),
        };
        assert_eq!(ground_truth_ranking(&m).order, vec![1, 2, 0]);
    }

    #[test]
    fn stump_importance_and_path() {
        let rows: Vec<Instance> = (0..8).map(|i| vec![(i % 3) as f64, (i % 2) as f64, i as f64]).collect();
        let labels = (0..8).map(|i| usize::from(i >= 4)).collect();
        let specs = (0..3).map(|j| FeatureSpec::numerical(format!("x{j}"))).collect();
        let d = Dataset::new(specs, rows, Some(labels), vec!["0".into(), "1".into()]).unwrap();
        let m = train_model(&d, &ModelConfig::new(ModelKind::DecisionTree), 0).unwrap();
        let g = ground_truth_ranking(&m);
        assert_eq!(g.order, vec![2]);
        assert_eq!(g.scores, vec![1.0]);
        assert_eq!(path_ranking(&m, &vec![0.0, 0.0, 1.0]).order, vec![2]);
    }

    #[test]
    fn path_reading_two_levels() {
        let tree = Tree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2, n: 10, gain: 0.1 },
                Node::Split { feature: 3, threshold: 0.0, left: 3, right: 4, n: 5, gain: 0.1 },
                Node::Leaf { probs: vec![1.0, 0.0], n: 5 },
                Node::Leaf { probs: vec![0.0, 1.0], n: 2 },
                Node::Leaf { probs: vec![1.0, 0.0], n: 3 },
            ],
            n_classes: 2,
            n_inputs: 4,
        };
        let m = Model {
            schema_version: 1,
            specs: (0..4).map(|j| FeatureSpec::numerical(format!("x{j}"))).collect(),
            class_names: vec!["0".into(), "1".into()],
            body: Body::DecisionTree(tree),
        };
        assert_eq!(path_ranking(&m, &vec![0.0, 9.0, 9.0, -1.0]).order, vec![0, 3]);
    }

    #[test]
    fn zeroed_features_get_no_importance() {
        let mut d = uniform_box(300, 4, -1.0, 1.0, 8).unwrap();
        for r in d.rows.iter_mut() {
            r[1] = 0.0;
            r[3] = 0.0;
        }
        let labels = d.rows.iter().map(|r| usize::from(r[0] - 0.5 * r[2] > 0.0)).collect();
        let d = Dataset::new(d.specs.clone(), d.rows.clone(), Some(labels), vec!["0".into(), "1".into()]).unwrap();
        for kind in [ModelKind::LogisticRegression, ModelKind::DecisionTree, ModelKind::RandomForest] {
            let m = train_model(&d, &ModelConfig::new(kind), 3).unwrap();
            let g = ground_truth_ranking(&m).dense(4);
            assert_eq!(g[1], 0.0, "{kind:?}");
            assert_eq!(g[3], 0.0, "{kind:?}");
        }
    }

    #[test]
    fn json_round_trip() {
        let d = synthesize_dataset(SyntheticKind::Moons, 100, 0.2, 4).unwrap();
        let m = train_model(&d, &ModelConfig::new(ModelKind::RandomForest), 2).unwrap();
        let back = Model::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn probabilities_are_normalized(seed in 0u64..1000, kind in 0usize..3,
                                        probe in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..20)) {
            let kinds = [ModelKind::DecisionTree, ModelKind::RandomForest, ModelKind::LogisticRegression];
            let d = synthesize_dataset(SyntheticKind::Moons, 80, 0.2, seed).unwrap();
            let mut cfg = ModelConfig::new(kinds[kind]);
            cfg.epochs = 50;
            let m = train_model(&d, &cfg, seed).unwrap();
            for p in m.predict_proba(&probe).unwrap() {
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }
}
