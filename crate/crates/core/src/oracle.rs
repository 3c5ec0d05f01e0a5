//! Linear-suitability oracle: unimodality of friends and enemies (folding
//! test) plus a nearest-neighbour separability gate.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fieldgen::FieldSample;
use crate::geometry::Standardizer;
use crate::rng;
use crate::stats::{mean, median, variance};
use crate::surrogates::ols;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FoldingVariant {
    /// Radial folding around the pivot that minimizes the variance of
    /// squared distances; Φ = (1+d)² Var‖X−s*‖ / tr Cov X.
    #[default]
    Radial,
    /// Per-coordinate folding |x_j − s_j| with s_j minimizing Var|x_j − s_j|;
    /// Φ = 4 Σ Var|x_j − s_j| / Σ Var x_j.
    Coordinate,
    /// Hartigan's dip on the leading principal axis; Φ = dip critical value
    /// over the observed dip.
    Dip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldingResult {
    pub pivot: Vec<f64>,
    pub folded_variance: f64,
    pub raw_variance: f64,
    pub statistic: f64,
    pub unimodal: bool,
    pub degenerate: bool,
}

impl FoldingResult {
    fn degenerate(dim: usize) -> Self {
        FoldingResult {
            pivot: vec![0.0; dim],
            folded_variance: 0.0,
            raw_variance: 0.0,
            statistic: f64::INFINITY,
            unimodal: true,
            degenerate: true,
        }
    }
}

fn column(points: &[Vec<f64>], j: usize) -> Vec<f64> {
    points.iter().map(|p| p[j]).collect()
}

fn radial(points: &[Vec<f64>], active: &[usize]) -> (Vec<f64>, f64, f64, f64) {
    let n = points.len() as f64;
    let d = active.len();
    let mu: Vec<f64> = active.iter().map(|&j| mean(&column(points, j))).collect();
    let xs: Vec<Vec<f64>> = points.iter().map(|p| active.iter().zip(&mu).map(|(&j, m)| p[j] - m).collect()).collect();
    let sq: Vec<f64> = xs.iter().map(|x| x.iter().map(|v| v * v).sum()).collect();
    let msq = mean(&sq);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut c = DVector::<f64>::zeros(d);
    for (x, &s) in xs.iter().zip(&sq) {
        for a in 0..d {
            c[a] += x[a] * (s - msq);
            for b in a..d {
                cov[(a, b)] += x[a] * x[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[(a, b)] /= n;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    c /= n;
    let trace = cov.trace();
    let inv = cov.clone().pseudo_inverse(1e-12 * trace.max(1e-300)).unwrap_or_else(|_| DMatrix::zeros(d, d));
    let s = (inv * c) * 0.5;
    let norms: Vec<f64> =
        xs.iter().map(|x| x.iter().zip(s.iter()).map(|(v, p)| (v - p) * (v - p)).sum::<f64>().sqrt()).collect();
    let folded = variance(&norms);
    let phi = ((1 + d) as f64).powi(2) * folded / trace;
    let pivot = s.iter().zip(&mu).map(|(p, m)| p + m).collect();
    (pivot, folded, trace, phi)
}

fn fold_var(xs: &[f64], s: f64) -> f64 {
    let f: Vec<f64> = xs.iter().map(|x| (x - s).abs()).collect();
    variance(&f)
}

/// Minimize Var|x − s| over s: coarse grid plus golden-section refinement,
/// started from the median and mean among the grid points.
fn best_fold_1d(xs: &[f64]) -> (f64, f64) {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut cands = vec![median(xs), mean(xs)];
    let g = 64;
    for i in 0..=g {
        cands.push(lo + (hi - lo) * i as f64 / g as f64);
    }
    let step = (hi - lo) / g as f64;
    let mut best = (cands[0], fold_var(xs, cands[0]));
    for &s in &cands {
        let v = fold_var(xs, s);
        if v < best.1 {
            best = (s, v);
        }
    }
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..40 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if fold_var(xs, c) < fold_var(xs, d) {
            b = d;
        } else {
            a = c;
        }
    }
    let m = (a + b) / 2.0;
    let v = fold_var(xs, m);
    if v < best.1 {
        (m, v)
    } else {
        best
    }
}

fn coordinate(points: &[Vec<f64>], active: &[usize], dim: usize) -> (Vec<f64>, f64, f64, f64) {
    let mut pivot = vec![0.0; dim];
    let (mut folded, mut raw) = (0.0, 0.0);
    for &j in active {
        let col = column(points, j);
        let (s, v) = best_fold_1d(&col);
        pivot[j] = s;
        folded += v;
        raw += variance(&col);
    }
    (pivot, folded, raw, 4.0 * folded / raw)
}

/// Largest vertical gap between a polyline through hull vertices and the
/// given values at every index in `lo..=hi`.
fn hull_gap(x: &[f64], lo: usize, hi: usize, hull_y: &dyn Fn(usize) -> f64, gap_y: &dyn Fn(usize) -> f64, convex: bool) -> f64 {
    let mut hull: Vec<usize> = Vec::new();
    for i in lo..=hi {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (hull_y(b) - hull_y(a)) * (x[i] - x[a]) - (hull_y(i) - hull_y(a)) * (x[b] - x[a]);
            if (convex && cross >= 0.0) || (!convex && cross <= 0.0) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut worst: f64 = 0.0;
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a..=b {
            let t = if x[b] > x[a] { (x[i] - x[a]) / (x[b] - x[a]) } else { 0.0 };
            let g = hull_y(a) + t * (hull_y(b) - hull_y(a));
            worst = worst.max((gap_y(i) - g).abs());
        }
    }
    worst
}

/// Dip-type distance from unimodality. For each candidate mode the
/// empirical CDF is compared with its greatest convex minorant to the left
/// and its least concave majorant to the right; the statistic is half the
/// smallest worst-case gap over candidate modes (at most 200 of them).
pub fn dip_statistic(xs: &[f64]) -> f64 {
    let mut x = xs.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    if n < 3 || x[0] == x[n - 1] {
        return 0.0;
    }
    let nf = n as f64;
    let lower = |i: usize| i as f64 / nf;
    let upper = |i: usize| (i + 1) as f64 / nf;
    let stride = n.div_ceil(200);
    let mut best = f64::INFINITY;
    for m in (0..n).step_by(stride).chain(std::iter::once(n - 1)) {
        let left = hull_gap(&x, 0, m, &lower, &upper, true);
        if left / 2.0 >= best {
            continue;
        }
        let right = hull_gap(&x, m, n - 1, &upper, &lower, false);
        best = best.min(left.max(right) / 2.0);
    }
    best
}

/// Critical value of sqrt(n)·dip for the statistic above, from Monte-Carlo
/// draws of uniform samples (95th percentile, n = 2000).
const DIP_CRITICAL: f64 = 0.45;

fn dip(points: &[Vec<f64>], active: &[usize]) -> (Vec<f64>, f64, f64, f64) {
    let d = active.len();
    let n = points.len() as f64;
    let mu: Vec<f64> = active.iter().map(|&j| mean(&column(points, j))).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for p in points {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (p[active[a]] - mu[a]) * (p[active[b]] - mu[b]) / n;
            }
        }
    }
    let raw = cov.trace();
    let eig = cov.symmetric_eigen();
    let top = (0..d).max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])).unwrap_or(0);
    let v = eig.eigenvectors.column(top);
    let proj: Vec<f64> = points.iter().map(|p| (0..d).map(|a| (p[active[a]] - mu[a]) * v[a]).sum()).collect();
    let dp = dip_statistic(&proj);
    let phi = if dp > 0.0 { DIP_CRITICAL / (dp * n.sqrt()) } else { f64::INFINITY };
    (mu, dp, raw, phi)
}

/// Unimodality test. Fewer than 10 points, or no spread, counts as
/// unimodal with the degenerate flag set.
pub fn folding_test(points: &[Vec<f64>], threshold: f64, variant: FoldingVariant) -> FoldingResult {
    let dim = points.first().map_or(0, Vec::len);
    if points.len() < 10 {
        return FoldingResult::degenerate(dim);
    }
    let active: Vec<usize> = (0..dim).filter(|&j| variance(&column(points, j)) > 1e-24).collect();
    if active.is_empty() {
        return FoldingResult::degenerate(dim);
    }
    let (pivot, folded, raw, phi) = match variant {
        FoldingVariant::Radial => {
            let (p, f, r, s) = radial(points, &active);
            let mut full = vec![0.0; dim];
            for (k, &j) in active.iter().enumerate() {
                full[j] = p[k];
            }
            (full, f, r, s)
        }
        FoldingVariant::Coordinate => coordinate(points, &active, dim),
        FoldingVariant::Dip => {
            let (p, f, r, s) = dip(points, &active);
            let mut full = vec![0.0; dim];
            for (k, &j) in active.iter().enumerate() {
                full[j] = p[k];
            }
            (full, f, r, s)
        }
    };
    FoldingResult {
        pivot,
        folded_variance: folded,
        raw_variance: raw,
        statistic: phi,
        unimodal: phi >= threshold,
        degenerate: false,
    }
}

/// Nearest neighbour of each point (excluding itself, ties to the lowest
/// index) under Euclidean distance on the given coordinates.
fn nearest_neighbours(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut best = (usize::MAX, f64::INFINITY);
            for (j, q) in points.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d: f64 = points[i].iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.1 {
                    best = (j, d);
                }
            }
            best.0
        })
        .collect()
}

/// Thornton's separability index: share of points whose nearest neighbour
/// carries the same label. Points are expected in standardized coordinates.
pub fn separability_index(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    if points.len() < 2 {
        return 1.0;
    }
    let nn = nearest_neighbours(points);
    let same = nn.iter().enumerate().filter(|(i, &j)| labels[*i] == labels[j]).count();
    same as f64 / points.len() as f64
}

/// Separability of the best linear labelling of the same points: an OLS fit
/// of the indicator of `reference` thresholded at one half.
pub fn linear_reference_index(points: &[Vec<f64>], labels: &[usize], reference: usize) -> f64 {
    let y: Vec<f64> = labels.iter().map(|&l| if l == reference { 1.0 } else { 0.0 }).collect();
    match ols(points, &y) {
        Ok(fit) => {
            let lin: Vec<usize> = points.iter().map(|p| usize::from(fit.predict(p) >= 0.5)).collect();
            separability_index(points, &lin)
        }
        Err(_) => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeparabilityMode {
    /// Compare the index against the threshold directly.
    Absolute,
    /// Compare the ratio of the index to the index of the best linear
    /// labelling of the same points.
    #[default]
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub folding_threshold: f64,
    pub folding_variant: FoldingVariant,
    pub si_threshold: f64,
    pub si_mode: SeparabilityMode,
    pub use_folding: bool,
    pub use_separability: bool,
    pub max_balanced: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            folding_threshold: 1.0,
            folding_variant: FoldingVariant::Radial,
            si_threshold: 0.99,
            si_mode: SeparabilityMode::Relative,
            use_folding: true,
            use_separability: true,
            max_balanced: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    NoEnemies,
    NoFriends,
    Multimodal,
    NotSeparable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub linear_suitable: bool,
    pub friends_unimodal: bool,
    pub enemies_unimodal: bool,
    pub separability_index: f64,
    /// Index of the linear reference labelling (relative mode only).
    pub reference_index: Option<f64>,
    /// The quantity compared with the threshold.
    pub separability_score: f64,
    pub reason: Option<Reason>,
    pub friends_folding: Option<FoldingResult>,
    pub enemies_folding: Option<FoldingResult>,
}

impl OracleVerdict {
    fn rejected(reason: Reason) -> Self {
        OracleVerdict {
            linear_suitable: false,
            friends_unimodal: false,
            enemies_unimodal: false,
            separability_index: 0.0,
            reference_index: None,
            separability_score: 0.0,
            reason: Some(reason),
            friends_folding: None,
            enemies_folding: None,
        }
    }
}

/// Decide whether the boundary captured by `sample` admits a linear
/// surrogate. `real_in_field` holds training rows inside the field with
/// their black-box labels.
pub fn ape_oracle(
    sample: &FieldSample,
    real_in_field: &[(Vec<f64>, usize)],
    standardizer: &Standardizer,
    cfg: &OracleConfig,
    seed: u64,
) -> OracleVerdict {
    let mut friends = sample.friends();
    let mut enemies = sample.enemies();
    if enemies.is_empty() {
        return OracleVerdict::rejected(Reason::NoEnemies);
    }
    if friends.is_empty() {
        return OracleVerdict::rejected(Reason::NoFriends);
    }
    let embed = |ids: &[usize]| -> Vec<Vec<f64>> { ids.iter().map(|&i| standardizer.embed(&sample.instances[i])).collect() };
    let (ff, fe) = rayon::join(
        || folding_test(&embed(&friends), cfg.folding_threshold, cfg.folding_variant),
        || folding_test(&embed(&enemies), cfg.folding_threshold, cfg.folding_variant),
    );
    let mut r = rng::stream(seed, 0x51);
    let m = friends.len().min(enemies.len()).min(cfg.max_balanced / 2);
    friends.shuffle(&mut r);
    enemies.shuffle(&mut r);
    friends.truncate(m);
    enemies.truncate(m);
    let mut ids: Vec<usize> = friends.into_iter().chain(enemies).collect();
    ids.sort_unstable();
    let mut pts: Vec<Vec<f64>> = embed(&ids);
    let mut labels: Vec<usize> = ids.iter().map(|&i| sample.labels[i]).collect();
    for (x, l) in real_in_field {
        pts.push(standardizer.embed(x));
        labels.push(*l);
    }
    let si = separability_index(&pts, &labels);
    let (reference_index, score) = match cfg.si_mode {
        SeparabilityMode::Absolute => (None, si),
        SeparabilityMode::Relative => {
            let rf = linear_reference_index(&pts, &labels, sample.reference_class);
            (Some(rf), if rf > 0.0 { si / rf } else { si })
        }
    };
    let unimodal = !cfg.use_folding || (ff.unimodal && fe.unimodal);
    let separable = !cfg.use_separability || score >= cfg.si_threshold;
    let reason = if !unimodal {
        Some(Reason::Multimodal)
    } else if !separable {
        Some(Reason::NotSeparable)
    } else {
        None
    };
    OracleVerdict {
        linear_suitable: unimodal && separable,
        friends_unimodal: ff.unimodal,
        enemies_unimodal: fe.unimodal,
        separability_index: si,
        reference_index,
        separability_score: score,
        reason,
        friends_folding: Some(ff),
        enemies_folding: Some(fe),
    }
}
