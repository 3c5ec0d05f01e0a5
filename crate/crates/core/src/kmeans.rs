//! Lloyd's k-means with k-means++ seeding and elbow selection of k.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assign: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning run.
    pub history: Vec<f64>,
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(c: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, ci) in c.iter().enumerate() {
        let d = sq(ci, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus(points: &[Vec<f64>], k: usize, r: &mut rng::Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut c = vec![points[r.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq(p, &c[0])).collect();
    while c.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = r.gen::<f64>() * total;
            let mut i = 0;
            while i + 1 < n && u >= d2[i] {
                u -= d2[i];
                i += 1;
            }
            i
        } else {
            r.gen_range(0..n)
        };
        c.push(points[pick].clone());
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(sq(p, &points[pick]));
        }
    }
    c
}

fn lloyd(points: &[Vec<f64>], mut c: Vec<Vec<f64>>, max_iter: usize) -> KMeans {
    let n = points.len();
    let dim = points[0].len();
    let mut assign = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(&c, p);
            inertia += d;
            if assign[i] != j {
                assign[i] = j;
                changed = true;
            }
        }
        history.push(inertia);
        if !changed {
            break;
        }
        let mut sum = vec![vec![0.0; dim]; c.len()];
        let mut cnt = vec![0usize; c.len()];
        for (p, &a) in points.iter().zip(&assign) {
            cnt[a] += 1;
            for (s, v) in sum[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..c.len() {
            if cnt[j] > 0 {
                c[j] = sum[j].iter().map(|s| s / cnt[j] as f64).collect();
            }
        }
    }
    let inertia = points.iter().zip(&assign).map(|(p, &a)| sq(p, &c[a])).sum();
    KMeans { centroids: c, assign, inertia, history }
}

/// Best of `n_init` seeded runs.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, n_init: usize) -> KMeans {
    assert!(!points.is_empty() && k >= 1 && k <= points.len());
    let mut best: Option<KMeans> = None;
    for run in 0..n_init.max(1) {
        let mut r = rng::stream(seed, run as u64);
        let km = lloyd(points, plus_plus(points, k, &mut r), 300);
        if best.as_ref().map_or(true, |b| km.inertia < b.inertia) {
            best = Some(km);
        }
    }
    best.unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ElbowRule {
    /// Point of the normalized inertia curve farthest below its chord.
    #[default]
    Kneedle,
    /// Largest discrete second difference, smaller k on ties.
    SecondDifference,
}

/// Pick k from an inertia curve `inertia[k-1]`.
///
/// k = 1 is chosen when the set is degenerate or when splitting in two
/// removes no more inertia than it would for a single Gaussian cloud in
/// `dim` dimensions (ratio `1 − 2/(π·dim)`, with a 20% margin).
pub fn elbow(inertia: &[f64], dim: usize, rule: ElbowRule) -> usize {
    let kmax = inertia.len();
    if kmax < 2 || inertia[0] <= 0.0 {
        return 1;
    }
    let single_cloud = 1.0 - 2.0 / (std::f64::consts::PI * dim.max(1) as f64);
    if inertia[1] / inertia[0] >= 0.8 * single_cloud {
        return 1;
    }
    if kmax == 2 {
        return 2;
    }
    match rule {
        ElbowRule::Kneedle => {
            let lo = inertia.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = inertia[0];
            let mut best = (1, 0.0);
            for (i, &v) in inertia.iter().enumerate() {
                let x = i as f64 / (kmax - 1) as f64;
                let y = (v - lo) / (hi - lo);
                let gap = (1.0 - y) - x;
                if gap > best.1 + 1e-12 {
                    best = (i + 1, gap);
                }
            }
            best.0
        }
        ElbowRule::SecondDifference => {
            let mut best = (2, f64::NEG_INFINITY);
            for k in 2..kmax {
                let d2 = inertia[k - 2] - 2.0 * inertia[k - 1] + inertia[k];
                if d2 > best.1 + 1e-12 {
                    best = (k, d2);
                }
            }
            best.0
        }
    }
}

/// Inertia for k = 1..=kmax.
pub fn inertia_curve(points: &[Vec<f64>], kmax: usize, seed: u64) -> Vec<KMeans> {
    (1..=kmax).map(|k| kmeans(points, k, rng::derive(seed, k as u64), 4)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[(f64, f64)], n: usize, sd: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng::rng(seed);
        let g = Normal::new(0.0, sd).unwrap();
        centers
            .iter()
            .flat_map(|&(a, b)| (0..n).map(|_| vec![a + g.sample(&mut r), b + g.sample(&mut r)]).collect::<Vec<_>>())
            .collect()
    }

    fn pick(points: &[Vec<f64>], rule: ElbowRule) -> usize {
        let c: Vec<f64> = inertia_curve(points, 10, 1).iter().map(|k| k.inertia).collect();
        elbow(&c, points[0].len(), rule)
    }

    #[test]
    fn lloyd_never_increases_inertia() {
        let p = blobs(&[(0.0, 0.0), (3.0, 1.0), (1.0, 4.0)], 100, 1.0, 2);
        for k in 1..6 {
            let km = kmeans(&p, k, 9, 1);
            for w in km.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9);
            }
        }
    }

    #[test]
    fn three_separated_blobs() {
        let p = blobs(&[(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)], 150, 0.3, 3);
        assert_eq!(pick(&p, ElbowRule::Kneedle), 3);
        assert_eq!(pick(&p, ElbowRule::SecondDifference), 3);
    }

    #[test]
    fn single_cloud_is_one_cluster() {
        let p = blobs(&[(1.0, 1.0)], 400, 0.1, 4);
        assert_eq!(pick(&p, ElbowRule::Kneedle), 1);
        assert_eq!(pick(&p, ElbowRule::SecondDifference), 1);
    }

    #[test]
    fn identical_points() {
        let p = vec![vec![2.0, 2.0]; 20];
        assert_eq!(pick(&p, ElbowRule::Kneedle), 1);
    }

    #[test]
    fn one_dimensional_two_groups() {
        let p: Vec<Vec<f64>> = [1.0, 2.0, 10.0, 11.0].iter().map(|&v| vec![v]).collect();
        let c: Vec<f64> = inertia_curve(&p, 4, 0).iter().map(|k| k.inertia).collect();
        assert!((c[0] - 82.0).abs() < 1e-9 && (c[1] - 1.0).abs() < 1e-9);
        assert_eq!(elbow(&c, 1, ElbowRule::Kneedle), 2);
        assert_eq!(elbow(&c, 1, ElbowRule::SecondDifference), 2);
    }

    #[test]
    fn deterministic_under_seed() {
        let p = blobs(&[(0.0, 0.0), (2.0, 2.0)], 80, 0.8, 6);
        assert_eq!(kmeans(&p, 3, 5, 4), kmeans(&p, 3, 5, 4));
    }
}
