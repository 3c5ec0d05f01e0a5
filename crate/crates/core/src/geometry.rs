//! Distances. Numerical features are scaled by their standard deviation,
//! categorical features are one-hot encoded with unit scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{FeatureSpec, FeatureStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Slot {
    Num { mean: f64, std: f64, at: usize },
    Cat { offset: usize, n: usize },
}

/// Maps instances to standardized, one-hot expanded coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    slots: Vec<Slot>,
    dim: usize,
    /// Feature index of each expanded coordinate.
    pub dim_feature: Vec<usize>,
    pub dim_names: Vec<String>,
}

impl Standardizer {
    pub fn new(specs: &[FeatureSpec], stats: &[FeatureStats]) -> Self {
        let mut slots = Vec::with_capacity(specs.len());
        let mut dim_feature = Vec::new();
        let mut dim_names = Vec::new();
        let mut off = 0;
        for (j, (s, st)) in specs.iter().zip(stats).enumerate() {
            if s.is_categorical() {
                slots.push(Slot::Cat { offset: off, n: s.categories.len() });
                for c in &s.categories {
                    dim_feature.push(j);
                    dim_names.push(format!("{}={}", s.name, c));
                }
                off += s.categories.len();
            } else {
                slots.push(Slot::Num { mean: st.mean, std: st.std, at: off });
                dim_feature.push(j);
                dim_names.push(s.name.clone());
                off += 1;
            }
        }
        Standardizer { slots, dim: off, dim_feature, dim_names }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_features(&self) -> usize {
        self.slots.len()
    }

    /// Standardized expanded coordinates; a constant feature maps to 0.
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (slot, &v) in self.slots.iter().zip(x) {
            match *slot {
                Slot::Num { mean, std, at } => {
                    out[at] = if std > 0.0 { (v - mean) / std } else { 0.0 };
                }
                Slot::Cat { offset, .. } => {
                    out[offset + v as usize] = 1.0;
                }
            }
        }
        out
    }

    /// Inverse of `embed`: numerical coordinates are unscaled, categorical
    /// blocks take their arg-max category.
    pub fn unembed(&self, z: &[f64]) -> Vec<f64> {
        self.slots
            .iter()
            .map(|s| match *s {
                Slot::Num { mean, std, at } => mean + std * z[at],
                Slot::Cat { offset, n } => crate::stats::argmax(&z[offset..offset + n]) as f64,
            })
            .collect()
    }

    /// Standardized Euclidean distance. A constant feature with differing
    /// values yields `f64::INFINITY`.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for (slot, (&x, &y)) in self.slots.iter().zip(a.iter().zip(b)) {
            match *slot {
                Slot::Num { std, .. } => {
                    if std > 0.0 {
                        let d = (x - y) / std;
                        s += d * d;
                    } else if x != y {
                        return f64::INFINITY;
                    }
                }
                Slot::Cat { .. } => {
                    if x != y {
                        s += 2.0;
                    }
                }
            }
        }
        s.sqrt()
    }
}

/// Standardizer plus the max-distance normalizer of one reference instance.
#[derive(Debug, Clone)]
pub struct DistanceContext {
    pub standardizer: Standardizer,
    pub delta: f64,
}

impl DistanceContext {
    pub fn new(standardizer: Standardizer, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::DegenerateReference);
        }
        Ok(DistanceContext { standardizer, delta })
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.standardizer.distance(a, b)
    }

    pub fn normalized(&self, a: &[f64], b: &[f64]) -> f64 {
        self.standardizer.distance(a, b) / self.delta
    }
}

pub fn standardized_distance(a: &[f64], b: &[f64], ctx: &DistanceContext) -> f64 {
    ctx.distance(a, b)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

const VAR_FLOOR: f64 = 1e-12;

/// Distance of `point` to the mean of `sample` under the sample's diagonal
/// covariance (population variances).
pub fn mahalanobis_distance(point: &[f64], sample: &[Vec<f64>]) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::InvalidArgument("mahalanobis needs at least two points".into()));
    }
    let d = point.len();
    let n = sample.len() as f64;
    let mut s = 0.0;
    for j in 0..d {
        let m = sample.iter().map(|x| x[j]).sum::<f64>() / n;
        let v = sample.iter().map(|x| (x[j] - m) * (x[j] - m)).sum::<f64>() / n;
        let diff = point[j] - m;
        if v > 0.0 {
            s += diff * diff / v;
        } else if diff != 0.0 {
            s += diff * diff / VAR_FLOOR;
        }
    }
    Ok(s.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{read_dataset, FeatureSpec};
    use proptest::prelude::*;

    fn num_ctx(stds: &[f64]) -> Standardizer {
        let specs: Vec<_> = (0..stds.len()).map(|j| FeatureSpec::numerical(format!("x{j}"))).collect();
        let stats: Vec<_> = stds.iter().map(|&s| FeatureStats { std: s, ..Default::default() }).collect();
        Standardizer::new(&specs, &stats)
    }

    #[test]
    fn hand_examples() {
        let st = num_ctx(&[2.0]);
        assert_eq!(st.distance(&[1.0], &[1.0]), 0.0);
        assert_eq!(st.distance(&[1.0], &[5.0]), 2.0);
    }

    #[test]
    fn one_categorical_difference_is_sqrt2() {
        let d = read_dataset("s\nF\nM\n".as_bytes(), None, None).unwrap();
        let st = d.standardizer();
        assert!((st.distance(&[0.0], &[1.0]) - 2f64.sqrt()).abs() < 1e-15);
        let e = st.embed(&[1.0]);
        assert_eq!(e, vec![0.0, 1.0]);
        assert!((euclidean(&st.embed(&[0.0]), &e) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_feature_flags_mismatch() {
        let st = num_ctx(&[0.0, 1.0]);
        assert_eq!(st.distance(&[3.0, 0.0], &[3.0, 1.0]), 1.0);
        assert!(st.distance(&[3.0, 0.0], &[4.0, 0.0]).is_infinite());
    }

    #[test]
    fn embed_round_trip() {
        let d = read_dataset("a,s\n1,F\n3,M\n5,F\n".as_bytes(), None, None).unwrap();
        let st = d.standardizer();
        for r in &d.rows {
            let back = st.unembed(&st.embed(r));
            assert!((back[0] - r[0]).abs() < 1e-12);
            assert_eq!(back[1], r[1]);
        }
    }

    #[test]
    fn mahalanobis_examples() {
        let s = vec![vec![0.0], vec![2.0]];
        assert_eq!(mahalanobis_distance(&[1.0], &s).unwrap(), 0.0);
        assert!((mahalanobis_distance(&[3.0], &s).unwrap() - 2.0).abs() < 1e-15);
        let s10 = vec![vec![0.0], vec![20.0]];
        assert!((mahalanobis_distance(&[30.0], &s10).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mahalanobis_zero_variance_dimension() {
        let s = vec![vec![0.0, 1.0], vec![2.0, 1.0]];
        assert!((mahalanobis_distance(&[3.0, 1.0], &s).unwrap() - 2.0).abs() < 1e-15);
        assert!(mahalanobis_distance(&[3.0, 1.5], &s).unwrap() > 1e5);
    }

    proptest! {
        #[test]
        fn metric_axioms(a in prop::collection::vec(-50.0f64..50.0, 3),
                         b in prop::collection::vec(-50.0f64..50.0, 3),
                         s in prop::collection::vec(0.1f64..10.0, 3)) {
            let st = num_ctx(&s);
            let dab = st.distance(&a, &b);
            prop_assert!(dab >= 0.0);
            prop_assert!((dab - st.distance(&b, &a)).abs() < 1e-12);
            prop_assert_eq!(st.distance(&a, &a), 0.0);
            if a != b { prop_assert!(dab > 0.0); }
        }

        #[test]
        fn monotone_in_one_coordinate(a in prop::collection::vec(-50.0f64..50.0, 3),
                                      b in prop::collection::vec(-50.0f64..50.0, 3),
                                      extra in 0.0f64..20.0, j in 0usize..3) {
            let st = num_ctx(&[1.0, 2.0, 3.0]);
            let mut c = b.clone();
            c[j] = if b[j] >= a[j] { b[j] + extra } else { b[j] - extra };
            prop_assert!(st.distance(&a, &c) >= st.distance(&a, &b) - 1e-12);
        }

        #[test]
        fn mahalanobis_scale_invariant(pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 3..20),
                                       p in prop::collection::vec(-5.0f64..5.0, 2), c in 0.5f64..100.0) {
            let base = mahalanobis_distance(&p, &pts).unwrap();
            let scaled: Vec<Vec<f64>> = pts.iter().map(|x| x.iter().map(|v| v * c).collect()).collect();
            let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
            let s = mahalanobis_distance(&ps, &scaled).unwrap();
            prop_assert!((s - base).abs() <= 1e-6 * base.max(1.0));
        }
    }
}
