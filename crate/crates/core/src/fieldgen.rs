//! Field sampling: data-aware random perturbation of a center instance at a
//! normalized radius `r`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::Classifier;
use crate::rng;
use crate::tabular::{Dataset, Instance};

/// How numerical offsets are drawn.
///
/// * `Centered`: symmetric uniform offset of half-width
///   `σ_i · max(sqrt(3r), r·δ)`. Its variance is `r·σ_i²` for small fields and
///   the box always contains every point within normalized distance `r` of
///   the center.
/// * `Prose`: width `sqrt(12 σ_i)`, `a = min(0, r·A_i − width)`, `b = a + width`.
/// * `Literal`: `a = min(0, r·A_i − σ_i)`, `b = a + σ_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FieldVariant {
    #[default]
    Centered,
    Prose,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub n: usize,
    pub variant: FieldVariant,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig { n: 2000, variant: FieldVariant::Centered }
    }
}

const CHUNK: usize = 256;

/// Everything the sampler needs from the training data.
#[derive(Debug, Clone)]
pub struct FieldSpace {
    pub categorical: Vec<bool>,
    pub std: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub cat_freqs: Vec<Vec<f64>>,
    /// Normalizer of the current target, in standardized units.
    pub delta: f64,
    pub variant: FieldVariant,
}

impl FieldSpace {
    pub fn new(ds: &Dataset, delta: f64, variant: FieldVariant) -> Self {
        FieldSpace {
            categorical: ds.specs.iter().map(|s| s.is_categorical()).collect(),
            std: ds.stats.iter().map(|s| s.std).collect(),
            amplitude: ds.stats.iter().map(|s| s.amplitude).collect(),
            cat_freqs: ds.cat_freqs.clone(),
            delta,
            variant,
        }
    }

    /// Offset interval `[a, b]` for numerical feature `i` at radius `r`.
    pub fn interval(&self, i: usize, r: f64) -> (f64, f64) {
        let s = self.std[i];
        if s == 0.0 {
            return (0.0, 0.0);
        }
        match self.variant {
            FieldVariant::Centered => {
                let h = s * (3.0 * r).sqrt().max(r * self.delta);
                (-h, h)
            }
            FieldVariant::Prose => {
                let v = (12.0 * s).sqrt();
                let a = f64::min(0.0, r * self.amplitude[i] - v);
                (a, a + v)
            }
            FieldVariant::Literal => {
                let a = f64::min(0.0, r * self.amplitude[i] - s);
                (a, a + s)
            }
        }
    }

    /// True when `x` lies in the support of the field around `center`.
    pub fn contains(&self, center: &[f64], x: &[f64], r: f64) -> bool {
        (0..center.len()).all(|i| {
            if self.categorical[i] {
                return true;
            }
            let (a, b) = self.interval(i, r);
            let d = x[i] - center[i];
            d >= a - 1e-12 && d <= b + 1e-12
        })
    }
}

/// Draw one instance around `center`.
pub fn sample_field_instance(space: &FieldSpace, r: f64, center: &[f64], rng: &mut rng::Rng) -> Instance {
    let mut out = center.to_vec();
    for i in 0..center.len() {
        if space.categorical[i] {
            let rho: f64 = rng.gen_range(0.0..r.max(f64::MIN_POSITIVE));
            if rng.gen::<f64>() < rho {
                let cur = center[i] as usize;
                let w: Vec<f64> =
                    space.cat_freqs[i].iter().enumerate().map(|(c, &p)| if c == cur { 0.0 } else { p }).collect();
                if let Ok(dist) = WeightedIndex::new(&w) {
                    out[i] = dist.sample(rng) as f64;
                }
            }
        } else {
            let (a, b) = space.interval(i, r);
            if b > a {
                out[i] = center[i] + rng.gen_range(a..b);
            }
        }
    }
    out
}

/// Draw `n` instances; chunks use derived seeds so the result does not
/// depend on the number of worker threads.
pub fn sample_instances(space: &FieldSpace, r: f64, center: &[f64], n: usize, seed: u64) -> Vec<Instance> {
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut g = rng::stream(seed, c as u64);
            let k = CHUNK.min(n - c * CHUNK);
            (0..k).map(move |_| sample_field_instance(space, r, center, &mut g)).collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub center: Instance,
    pub radius: f64,
    pub instances: Vec<Instance>,
    pub labels: Vec<usize>,
    pub reference_class: usize,
}

impl FieldSample {
    pub fn friends(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == self.reference_class).collect()
    }

    pub fn enemies(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] != self.reference_class).collect()
    }

    pub fn has_enemy(&self) -> bool {
        self.labels.iter().any(|&l| l != self.reference_class)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

pub fn sample_field(
    space: &FieldSpace,
    model: &dyn Classifier,
    r: f64,
    center: &[f64],
    n: usize,
    reference_class: usize,
    seed: u64,
) -> Result<FieldSample> {
    let instances = sample_instances(space, r, center, n, seed);
    let labels = model.predict(&instances)?;
    Ok(FieldSample { center: center.to_vec(), radius: r, instances, labels, reference_class })
}
