//! Rules over an interpretable predicate space: discretization schemes,
//! the binary encoding, anchor search by beam and rule quality metrics.

use std::collections::BTreeSet;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{elbow, inertia_curve, ElbowRule};
use crate::models::Classifier;
use crate::rng;
use crate::stats::{entropy, quantile_sorted};
use crate::tabular::{Dataset, FeatureSpec, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Predicate {
    Le { feature: usize, value: f64 },
    Gt { feature: usize, value: f64 },
    Eq { feature: usize, category: usize },
    Ne { feature: usize, category: usize },
}

impl Predicate {
    pub fn feature(&self) -> usize {
        match *self {
            Predicate::Le { feature, .. }
            | Predicate::Gt { feature, .. }
            | Predicate::Eq { feature, .. }
            | Predicate::Ne { feature, .. } => feature,
        }
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        match *self {
            Predicate::Le { feature, value } => x[feature] <= value,
            Predicate::Gt { feature, value } => x[feature] > value,
            Predicate::Eq { feature, category } => x[feature] as usize == category,
            Predicate::Ne { feature, category } => x[feature] as usize != category,
        }
    }
}

/// Conjunction of predicates implying a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub predicates: Vec<Predicate>,
    pub class: usize,
}

/// Format with 4 significant digits, trailing zeros removed.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    let s = if mag >= 4 {
        let f = 10f64.powi(mag - 3);
        format!("{}", (v / f).round() * f)
    } else {
        format!("{:.*}", (3 - mag).max(0) as usize, v)
    };
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

impl Rule {
    pub fn new(predicates: Vec<Predicate>, class: usize) -> Self {
        Rule { predicates, class }
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        self.predicates.iter().all(|p| p.holds(x))
    }

    /// Per-feature conditions joined by "∧", e.g. `age ∈ [28, 37] ∧ sex = F ⇒ yes`.
    pub fn render(&self, specs: &[FeatureSpec], class_names: &[String]) -> String {
        let feats: BTreeSet<usize> = self.predicates.iter().map(Predicate::feature).collect();
        let mut parts = Vec::new();
        for j in feats {
            let name = &specs[j].name;
            let mut lo: Option<f64> = None;
            let mut hi: Option<f64> = None;
            for p in self.predicates.iter().filter(|p| p.feature() == j) {
                match *p {
                    Predicate::Le { value, .. } => hi = Some(hi.map_or(value, |h| h.min(value))),
                    Predicate::Gt { value, .. } => lo = Some(lo.map_or(value, |l| l.max(value))),
                    Predicate::Eq { category, .. } => parts.push(format!("{name} = {}", specs[j].categories[category])),
                    Predicate::Ne { category, .. } => parts.push(format!("{name} ≠ {}", specs[j].categories[category])),
                }
            }
            match (lo, hi) {
                (Some(a), Some(b)) => parts.push(format!("{name} ∈ [{}, {}]", fmt_sig(a), fmt_sig(b))),
                (Some(a), None) => parts.push(format!("{name} > {}", fmt_sig(a))),
                (None, Some(b)) => parts.push(format!("{name} ≤ {}", fmt_sig(b))),
                (None, None) => {}
            }
        }
        let class = class_names.get(self.class).cloned().unwrap_or_else(|| self.class.to_string());
        if parts.is_empty() {
            format!("true ⇒ {class}")
        } else {
            format!("{} ⇒ {class}", parts.join(" ∧ "))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DiscretizationMethod {
    Quartile,
    Decile,
    Entropy,
    #[default]
    Mdlp,
    KMeans,
}

impl std::str::FromStr for DiscretizationMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "quartile" => Ok(Self::Quartile),
            "decile" => Ok(Self::Decile),
            "entropy" => Ok(Self::Entropy),
            "mdlp" => Ok(Self::Mdlp),
            "kmeans" | "k-means" => Ok(Self::KMeans),
            _ => Err(Error::InvalidArgument(format!("unknown discretizer `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationScheme {
    pub method: DiscretizationMethod,
    /// Strictly increasing cut points per feature (empty for categorical).
    pub cuts: Vec<Vec<f64>>,
}

fn clean(mut cuts: Vec<f64>, sorted: &[f64]) -> Vec<f64> {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    cuts.retain(|c| c.is_finite() && *c >= lo && *c < hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

pub fn quantile_cuts(values: &[f64], qs: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() || v[0] == v[v.len() - 1] {
        return vec![];
    }
    clean(qs.iter().map(|&q| quantile_sorted(&v, q)).collect(), &v)
}

fn sorted_pairs(values: &[f64], labels: &[usize]) -> Vec<(f64, usize)> {
    let mut p: Vec<(f64, usize)> = values.iter().cloned().zip(labels.iter().cloned()).collect();
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    p
}

struct Split {
    at: usize,
    cut: f64,
    ent: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

/// Best binary split of sorted pairs by weighted class entropy. With
/// `boundary_only`, cuts between two runs of the same single class are
/// skipped. Ties go to the lowest cut.
fn best_entropy_split(p: &[(f64, usize)], k: usize, boundary_only: bool) -> Option<Split> {
    let n = p.len();
    let mut total = vec![0usize; k];
    p.iter().for_each(|&(_, c)| total[c] += 1);
    // label sets of each distinct value: (single class or mixed)
    let mut purity: Vec<Option<usize>> = vec![None; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        let mut pure = Some(p[i].1);
        while j < n && p[j].0 == p[i].0 {
            if p[j].1 != p[i].1 {
                pure = None;
            }
            j += 1;
        }
        for slot in purity.iter_mut().take(j).skip(i) {
            *slot = pure;
        }
        i = j;
    }
    let mut left = vec![0usize; k];
    let mut best: Option<Split> = None;
    for i in 0..n - 1 {
        left[p[i].1] += 1;
        if p[i].0 == p[i + 1].0 {
            continue;
        }
        if boundary_only {
            if let (Some(a), Some(b)) = (purity[i], purity[i + 1]) {
                if a == b {
                    continue;
                }
            }
        }
        let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
        let nl = (i + 1) as f64;
        let nr = (n - i - 1) as f64;
        let e = (nl * entropy(&left) + nr * entropy(&right)) / n as f64;
        if best.as_ref().map_or(true, |b| e < b.ent - 1e-12) {
            let cut = p[i].0 + (p[i + 1].0 - p[i].0) / 2.0;
            best = Some(Split { at: i + 1, cut, ent: e, left: left.clone(), right });
        }
    }
    best
}

fn n_present(c: &[usize]) -> f64 {
    c.iter().filter(|&&v| v > 0).count() as f64
}

fn mdlp_rec(p: &[(f64, usize)], k: usize, out: &mut Vec<f64>) {
    let n = p.len();
    if n < 2 {
        return;
    }
    let Some(s) = best_entropy_split(p, k, true) else { return };
    let mut total = vec![0usize; k];
    p.iter().for_each(|&(_, c)| total[c] += 1);
    let ent = entropy(&total);
    let gain = ent - s.ent;
    let (k0, k1, k2) = (n_present(&total), n_present(&s.left), n_present(&s.right));
    let delta = (3f64.powf(k0) - 2.0).log2() - (k0 * ent - k1 * entropy(&s.left) - k2 * entropy(&s.right));
    let threshold = (((n - 1) as f64).log2() + delta) / n as f64;
    if gain > threshold {
        out.push(s.cut);
        mdlp_rec(&p[..s.at], k, out);
        mdlp_rec(&p[s.at..], k, out);
    }
}

/// Recursive entropy splits accepted by the minimum description length
/// criterion.
pub fn mdlp_cuts(values: &[f64], labels: &[usize]) -> Vec<f64> {
    let k = labels.iter().max().map_or(1, |m| m + 1);
    let p = sorted_pairs(values, labels);
    let mut out = Vec::new();
    mdlp_rec(&p, k, &mut out);
    out.sort_by(f64::total_cmp);
    out
}

fn entropy_rec(p: &[(f64, usize)], k: usize, depth: usize, out: &mut Vec<f64>) {
    if depth == 0 || p.len() < 2 {
        return;
    }
    let mut total = vec![0usize; k];
    p.iter().for_each(|&(_, c)| total[c] += 1);
    if n_present(&total) < 2.0 {
        return;
    }
    let Some(s) = best_entropy_split(p, k, true) else { return };
    if entropy(&total) - s.ent <= 0.0 {
        return;
    }
    out.push(s.cut);
    entropy_rec(&p[..s.at], k, depth - 1, out);
    entropy_rec(&p[s.at..], k, depth - 1, out);
}

/// Entropy-minimizing binary splits to a fixed depth (at most 2^depth bins).
pub fn entropy_cuts(values: &[f64], labels: &[usize], depth: usize) -> Vec<f64> {
    let k = labels.iter().max().map_or(1, |m| m + 1);
    let p = sorted_pairs(values, labels);
    let mut out = Vec::new();
    entropy_rec(&p, k, depth, &mut out);
    out.sort_by(f64::total_cmp);
    out
}

/// 1-D k-means with elbow-chosen k; cuts halfway between neighbouring
/// clusters.
pub fn kmeans_cuts(values: &[f64], seed: u64) -> Vec<f64> {
    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return vec![];
    }
    let pts: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
    let runs = inertia_curve(&pts, 10.min(distinct.len()), seed);
    let inertia: Vec<f64> = runs.iter().map(|r| r.inertia).collect();
    let k = elbow(&inertia, 1, ElbowRule::Kneedle);
    let km = &runs[k - 1];
    let mut bounds: Vec<(f64, f64)> = vec![(f64::INFINITY, f64::NEG_INFINITY); k];
    for (v, &a) in values.iter().zip(&km.assign) {
        bounds[a].0 = bounds[a].0.min(*v);
        bounds[a].1 = bounds[a].1.max(*v);
    }
    bounds.retain(|b| b.0 <= b.1);
    bounds.sort_by(|a, b| a.0.total_cmp(&b.0));
    let cuts = bounds.windows(2).map(|w| w[0].1 + (w[1].0 - w[0].1) / 2.0).collect();
    clean(cuts, &distinct)
}

/// Cut points for every numerical feature. Entropy and MDLP need labels
/// (normally the black box's predictions on the rows).
pub fn discretize(
    ds: &Dataset,
    labels: Option<&[usize]>,
    method: DiscretizationMethod,
    seed: u64,
) -> Result<DiscretizationScheme> {
    let needs_labels = matches!(method, DiscretizationMethod::Entropy | DiscretizationMethod::Mdlp);
    if needs_labels && labels.is_none() {
        return Err(Error::InvalidArgument("supervised discretization needs labels".into()));
    }
    let cuts = ds
        .specs
        .iter()
        .enumerate()
        .map(|(j, s)| {
            if s.is_categorical() {
                return vec![];
            }
            let col: Vec<f64> = ds.rows.iter().map(|r| r[j]).collect();
            match method {
                DiscretizationMethod::Quartile => quantile_cuts(&col, &[0.25, 0.5, 0.75]),
                DiscretizationMethod::Decile => quantile_cuts(&col, &(1..10).map(|i| i as f64 / 10.0).collect::<Vec<_>>()),
                DiscretizationMethod::Entropy => entropy_cuts(&col, labels.unwrap(), 3),
                DiscretizationMethod::Mdlp => mdlp_cuts(&col, labels.unwrap()),
                DiscretizationMethod::KMeans => kmeans_cuts(&col, rng::derive(seed, j as u64)),
            }
        })
        .collect();
    Ok(DiscretizationScheme { method, cuts })
}

/// The interpretable encoding: one predicate per (numerical feature,
/// interval) and per (categorical feature, category).
pub fn encode(x: &[f64], scheme: &DiscretizationScheme, specs: &[FeatureSpec]) -> Vec<bool> {
    let mut out = Vec::new();
    for (j, s) in specs.iter().enumerate() {
        if s.is_categorical() {
            out.extend((0..s.categories.len()).map(|c| x[j] as usize == c));
        } else {
            let cuts = &scheme.cuts[j];
            let bin = cuts.partition_point(|&c| c < x[j]);
            out.extend((0..=cuts.len()).map(|b| b == bin));
        }
    }
    out
}

/// Text of each predicate of the encoding, in encoding order.
pub fn predicate_names(scheme: &DiscretizationScheme, specs: &[FeatureSpec]) -> Vec<String> {
    let mut out = Vec::new();
    for (j, s) in specs.iter().enumerate() {
        if s.is_categorical() {
            out.extend(s.categories.iter().map(|c| format!("{} = {c}", s.name)));
            continue;
        }
        let cuts = &scheme.cuts[j];
        if cuts.is_empty() {
            out.push(format!("{} ∈ ℝ", s.name));
            continue;
        }
        for b in 0..=cuts.len() {
            out.push(if b == 0 {
                format!("{} ≤ {}", s.name, fmt_sig(cuts[0]))
            } else if b == cuts.len() {
                format!("{} > {}", s.name, fmt_sig(cuts[b - 1]))
            } else {
                format!("{} ∈ [{}, {}]", s.name, fmt_sig(cuts[b - 1]), fmt_sig(cuts[b]))
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    pub tau: f64,
    pub beam: usize,
    pub n_samples: usize,
    pub max_len: usize,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        AnchorConfig { tau: 0.95, beam: 10, n_samples: 1000, max_len: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRule {
    pub rule: Rule,
    pub precision: f64,
    pub coverage: f64,
    pub ncov: f64,
    pub f1: f64,
    pub length: usize,
    pub meets_threshold: bool,
}

/// Predicates true on `x` that the search may combine: for every cut of a
/// numerical feature the side containing `x`, and the category of every
/// categorical feature.
pub fn anchor_candidates(x: &[f64], scheme: &DiscretizationScheme, specs: &[FeatureSpec]) -> Vec<Predicate> {
    let mut out = Vec::new();
    for (j, s) in specs.iter().enumerate() {
        if s.is_categorical() {
            out.push(Predicate::Eq { feature: j, category: x[j] as usize });
        } else {
            for &c in &scheme.cuts[j] {
                out.push(if x[j] <= c { Predicate::Le { feature: j, value: c } } else { Predicate::Gt { feature: j, value: c } });
            }
        }
    }
    out
}

/// Perturbation distribution of the interpretable space: a random training
/// row whose constrained features are replaced by training values of that
/// feature satisfying the rule.
pub struct AnchorSampler<'a> {
    rows: &'a [Instance],
    sorted: Vec<Vec<f64>>,
    target: &'a Instance,
}

impl<'a> AnchorSampler<'a> {
    pub fn new(ds: &'a Dataset, target: &'a Instance) -> Self {
        let sorted = (0..ds.n_features())
            .map(|j| {
                let mut v: Vec<f64> = ds.rows.iter().map(|r| r[j]).collect();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        AnchorSampler { rows: &ds.rows, sorted, target }
    }

    /// Index range of admissible training values for each constrained feature.
    fn ranges(&self, preds: &[Predicate]) -> Vec<(usize, usize, usize)> {
        let feats: BTreeSet<usize> = preds.iter().map(Predicate::feature).collect();
        feats
            .into_iter()
            .map(|j| {
                let col = &self.sorted[j];
                let mut a = 0;
                let mut b = col.len();
                for p in preds.iter().filter(|p| p.feature() == j) {
                    match *p {
                        Predicate::Le { value, .. } => b = b.min(col.partition_point(|&v| v <= value)),
                        Predicate::Gt { value, .. } => a = a.max(col.partition_point(|&v| v <= value)),
                        Predicate::Eq { category, .. } => {
                            let c = category as f64;
                            a = a.max(col.partition_point(|&v| v < c));
                            b = b.min(col.partition_point(|&v| v <= c));
                        }
                        Predicate::Ne { .. } => {}
                    }
                }
                (j, a, b)
            })
            .collect()
    }

    pub fn sample(&self, preds: &[Predicate], n: usize, seed: u64) -> Vec<Instance> {
        let ranges = self.ranges(preds);
        let mut r = rng::rng(seed);
        (0..n)
            .map(|_| {
                let mut z = self.rows[r.gen_range(0..self.rows.len())].clone();
                for &(j, a, b) in &ranges {
                    z[j] = if a < b { self.sorted[j][r.gen_range(a..b)] } else { self.target[j] };
                }
                z
            })
            .collect()
    }
}

fn key_seed(seed: u64, set: &[usize]) -> u64 {
    set.iter().fold(rng::derive(seed, set.len() as u64), |h, &i| rng::derive(h, i as u64 + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleMetrics {
    pub precision: f64,
    pub coverage: f64,
    pub ncov: f64,
    pub f1: f64,
    pub length: usize,
    pub zero_coverage: bool,
}

pub fn f1_score(precision: f64, ncov: f64) -> f64 {
    if precision <= 0.0 || ncov <= 0.0 {
        0.0
    } else {
        2.0 / (1.0 / ncov + 1.0 / precision)
    }
}

/// Precision, coverage and normalized coverage on model-labelled data.
/// Normalized coverage is coverage over the share of the class, capped at 1.
pub fn metrics_from_labels(rule: &Rule, eval: &[Instance], labels: &[usize], class: usize) -> RuleMetrics {
    let n = eval.len().max(1) as f64;
    let covered: Vec<usize> = (0..eval.len()).filter(|&i| rule.holds(&eval[i])).collect();
    let hits = covered.iter().filter(|&&i| labels[i] == class).count();
    let coverage = covered.len() as f64 / n;
    let class_share = labels.iter().filter(|&&l| l == class).count() as f64 / n;
    let zero_coverage = covered.is_empty();
    let precision = if zero_coverage { 0.0 } else { hits as f64 / covered.len() as f64 };
    let ncov = if class_share > 0.0 { (coverage / class_share).min(1.0) } else { 0.0 };
    RuleMetrics { precision, coverage, ncov, f1: f1_score(precision, ncov), length: rule.len(), zero_coverage }
}

pub fn rule_metrics(rule: &Rule, eval: &[Instance], model: &dyn Classifier, class: usize) -> Result<RuleMetrics> {
    let labels = model.predict(eval)?;
    Ok(metrics_from_labels(rule, eval, &labels, class))
}

/// Shortest conjunction of candidate predicates whose Monte-Carlo precision
/// reaches `tau`, grown by beam search. Among rules of that length the one
/// with the largest training coverage wins, then the lexicographically
/// smallest predicate list.
pub fn anchor_search(
    ds: &Dataset,
    model: &dyn Classifier,
    target: &Instance,
    scheme: &DiscretizationScheme,
    cfg: &AnchorConfig,
    seed: u64,
) -> Result<AnchorRule> {
    ds.check_instance(target)?;
    let class = model.predict_one(target)?;
    let cands = anchor_candidates(target, scheme, &ds.specs);
    let sampler = AnchorSampler::new(ds, target);
    let train_labels = model.predict(&ds.rows)?;
    let finish = |set: &[usize], precision: f64| -> AnchorRule {
        let rule = Rule::new(set.iter().map(|&i| cands[i]).collect(), class);
        let m = metrics_from_labels(&rule, &ds.rows, &train_labels, class);
        AnchorRule {
            length: rule.len(),
            rule,
            precision,
            coverage: m.coverage,
            ncov: m.ncov,
            f1: f1_score(precision, m.ncov),
            meets_threshold: precision >= cfg.tau,
        }
    };
    let coverage = |set: &[usize]| -> f64 {
        ds.rows.iter().filter(|r| set.iter().all(|&i| cands[i].holds(r))).count() as f64 / ds.n_rows() as f64
    };
    let precision = |set: &[usize]| -> Result<f64> {
        let preds: Vec<Predicate> = set.iter().map(|&i| cands[i]).collect();
        let z = sampler.sample(&preds, cfg.n_samples, key_seed(seed, set));
        let y = model.predict(&z)?;
        Ok(y.iter().filter(|&&c| c == class).count() as f64 / y.len().max(1) as f64)
    };

    let p0 = precision(&[])?;
    if p0 >= cfg.tau || cands.is_empty() {
        return Ok(finish(&[], p0));
    }
    let mut level: Vec<Vec<usize>> = (0..cands.len()).map(|i| vec![i]).collect();
    let mut best: (f64, f64, Vec<usize>) = (p0, 1.0, vec![]);
    for _ in 0..cfg.max_len {
        let evals: Vec<(Vec<usize>, f64, f64)> = level
            .par_iter()
            .map(|s| Ok((s.clone(), precision(s)?, coverage(s))))
            .collect::<Result<_>>()?;
        let better = |a: &(Vec<usize>, f64, f64), b: &(Vec<usize>, f64, f64)| {
            b.1.total_cmp(&a.1).then(b.2.total_cmp(&a.2)).then(a.0.cmp(&b.0))
        };
        let mut ok: Vec<&(Vec<usize>, f64, f64)> = evals.iter().filter(|e| e.1 >= cfg.tau).collect();
        if !ok.is_empty() {
            ok.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
            return Ok(finish(&ok[0].0, ok[0].1));
        }
        let mut ranked = evals.clone();
        ranked.sort_by(better);
        if let Some(top) = ranked.first() {
            if top.1 > best.0 || (top.1 == best.0 && top.2 > best.1) {
                best = (top.1, top.2, top.0.clone());
            }
        }
        let mut next = BTreeSet::new();
        for (s, _, _) in ranked.iter().take(cfg.beam) {
            for c in 0..cands.len() {
                if !s.contains(&c) {
                    let mut t = s.clone();
                    t.push(c);
                    t.sort_unstable();
                    next.insert(t);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        level = next.into_iter().collect();
    }
    Ok(finish(&best.2, best.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Model, Planted};
    use crate::tabular::{read_dataset, uniform_box};
    use proptest::prelude::*;

    #[test]
    fn sig_digits() {
        assert_eq!(fmt_sig(3.5), "3.5");
        assert_eq!(fmt_sig(-5.78), "-5.78");
        assert_eq!(fmt_sig(0.123456), "0.1235");
        assert_eq!(fmt_sig(28.0), "28");
        assert_eq!(fmt_sig(123456.0), "123500");
        assert_eq!(fmt_sig(9.99996), "10");
    }

    #[test]
    fn mdlp_single_cut() {
        let v: Vec<f64> = (1..=6).map(|i| i as f64).collect();
        assert_eq!(mdlp_cuts(&v, &[0, 0, 0, 1, 1, 1]), vec![3.5]);
        assert!(mdlp_cuts(&v, &[1; 6]).is_empty());
    }

    #[test]
    fn kmeans_cut_between_groups() {
        let c = kmeans_cuts(&[1.0, 2.0, 10.0, 11.0], 0);
        assert_eq!(c.len(), 1);
        assert!(c[0] > 2.0 && c[0] < 10.0);
    }

    #[test]
    fn quantile_counts() {
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(quantile_cuts(&v, &[0.25, 0.5, 0.75]), vec![24.75, 49.5, 74.25]);
        assert!(quantile_cuts(&[2.0; 10], &[0.5]).is_empty());
    }

    #[test]
    fn entropy_depth_bounds_bins() {
        let v: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let l: Vec<usize> = (0..64).map(|i| (i / 4) % 2).collect();
        assert!(entropy_cuts(&v, &l, 3).len() <= 7);
        assert!(!entropy_cuts(&v, &l, 3).is_empty());
    }

    #[test]
    fn encoding_examples() {
        let specs = vec![FeatureSpec::numerical("x"), FeatureSpec::categorical("sex", vec!["F".into(), "M".into()])];
        let scheme = DiscretizationScheme { method: DiscretizationMethod::Mdlp, cuts: vec![vec![3.5], vec![]] };
        assert_eq!(encode(&[2.0, 0.0], &scheme, &specs), vec![true, false, true, false]);
        assert_eq!(predicate_names(&scheme, &specs), vec!["x ≤ 3.5", "x > 3.5", "sex = F", "sex = M"]);
    }

    #[test]
    fn rendering() {
        let d = read_dataset("age,sex\n30,F\n40,M\n".as_bytes(), None, None).unwrap();
        let r = Rule::new(
            vec![
                Predicate::Gt { feature: 0, value: 28.0 },
                Predicate::Le { feature: 0, value: 37.0 },
                Predicate::Eq { feature: 1, category: 1 },
            ],
            1,
        );
        assert_eq!(r.render(&d.specs, &["Survived".into(), "Died".into()]), "age ∈ [28, 37] ∧ sex = M ⇒ Died");
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(1.0, 1.0), 1.0);
        assert!((f1_score(1.0, 0.5) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rule_matching_class_exactly_has_full_ncov() {
        let x: Vec<Instance> = (0..10).map(|i| vec![i as f64]).collect();
        let labels: Vec<usize> = (0..10).map(|i| usize::from(i >= 6)).collect();
        let r = Rule::new(vec![Predicate::Gt { feature: 0, value: 5.5 }], 1);
        let m = metrics_from_labels(&r, &x, &labels, 1);
        assert_eq!((m.precision, m.ncov, m.f1), (1.0, 1.0, 1.0));
        let empty = Rule::new(vec![Predicate::Gt { feature: 0, value: 50.0 }], 1);
        let m = metrics_from_labels(&empty, &x, &labels, 1);
        assert!(m.zero_coverage && m.precision == 0.0);
    }

    #[test]
    fn single_threshold_anchor() {
        let ds = uniform_box(500, 1, -10.0, 10.0, 3).unwrap();
        let m = Model::planted(ds.specs.clone(), Planted::Linear { w: vec![1.0], b: 5.78, slope: f64::INFINITY });
        let scheme = DiscretizationScheme { method: DiscretizationMethod::Mdlp, cuts: vec![vec![-5.78, 0.0, 4.0]] };
        let a = anchor_search(&ds, &m, &vec![2.0], &scheme, &AnchorConfig::default(), 1).unwrap();
        assert_eq!(a.length, 1);
        assert_eq!(a.rule.predicates[0], Predicate::Gt { feature: 0, value: -5.78 });
        assert!(a.precision >= 0.99);
        assert_eq!(a.rule.render(&ds.specs, &["Blue".into(), "Red".into()]), "x1 > -5.78 ⇒ Red");
    }

    #[test]
    fn constant_model_gives_empty_anchor() {
        let ds = uniform_box(100, 2, 0.0, 1.0, 3).unwrap();
        let m = Model::planted(ds.specs.clone(), Planted::Constant { class: 1, n_classes: 2 });
        let scheme = discretize(&ds, None, DiscretizationMethod::Quartile, 0).unwrap();
        let a = anchor_search(&ds, &m, &ds.rows[0].clone(), &scheme, &AnchorConfig::default(), 0).unwrap();
        assert_eq!(a.length, 0);
        assert_eq!((a.precision, a.coverage), (1.0, 1.0));
    }

    #[test]
    fn checkerboard_needs_two_predicates() {
        let ds = uniform_box(1000, 2, -1.0, 1.0, 4).unwrap();
        let m = Model::planted(ds.specs.clone(), Planted::Checkerboard { cell: 1.0, dims: vec![0, 1] });
        let scheme = DiscretizationScheme { method: DiscretizationMethod::Mdlp, cuts: vec![vec![0.0], vec![0.0]] };
        let a = anchor_search(&ds, &m, &vec![0.5, 0.5], &scheme, &AnchorConfig::default(), 2).unwrap();
        assert_eq!(a.length, 2);
        assert!(a.meets_threshold);
    }

    proptest! {
        #[test]
        fn every_value_hits_one_interval(cuts in prop::collection::btree_set(-100i32..100, 0..6), v in -150.0f64..150.0) {
            let cuts: Vec<f64> = cuts.into_iter().map(|c| c as f64 / 2.0).collect();
            let specs = vec![FeatureSpec::numerical("x")];
            let scheme = DiscretizationScheme { method: DiscretizationMethod::Quartile, cuts: vec![cuts] };
            prop_assert_eq!(encode(&[v], &scheme, &specs).iter().filter(|&&b| b).count(), 1);
        }

        #[test]
        fn mdlp_cuts_lie_on_label_boundaries(vals in prop::collection::vec(0u8..12, 2..30), labs in prop::collection::vec(0usize..3, 30)) {
            let v: Vec<f64> = vals.iter().map(|&x| x as f64).collect();
            let l = &labs[..v.len()];
            let p = sorted_pairs(&v, l);
            for c in mdlp_cuts(&v, l) {
                let below: BTreeSet<usize> = p.iter().filter(|q| q.0 < c).filter(|q| q.0 == p.iter().filter(|r| r.0 < c).map(|r| r.0).fold(f64::MIN, f64::max)).map(|q| q.1).collect();
                let above: BTreeSet<usize> = p.iter().filter(|q| q.0 > c).filter(|q| q.0 == p.iter().filter(|r| r.0 > c).map(|r| r.0).fold(f64::MAX, f64::min)).map(|q| q.1).collect();
                prop_assert!(!(below.len() == 1 && below == above));
            }
        }

        #[test]
        fn metric_bounds(vals in prop::collection::vec(0.0f64..10.0, 1..60), labs in prop::collection::vec(0usize..2, 60), cut in 0.0f64..10.0) {
            let x: Vec<Instance> = vals.iter().map(|&v| vec![v]).collect();
            let l = &labs[..x.len()];
            let r = Rule::new(vec![Predicate::Le { feature: 0, value: cut }], 1);
            let m = metrics_from_labels(&r, &x, l, 1);
            for v in [m.precision, m.coverage, m.ncov, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(m.ncov >= m.coverage || m.ncov == 0.0 && l.iter().all(|&c| c != 1));
            prop_assert!(m.f1 <= 2.0 * m.precision.min(m.ncov) + 1e-12);
        }
    }
}
