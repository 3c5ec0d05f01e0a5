//! Tabular data model: schema, CSV ingestion, synthetic generators and the
//! per-feature statistics used by distances and samplers.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Standardizer;
use crate::rng;

/// One value per feature. Numerical values are reals, categorical values are
/// category indices stored as `f64`.
pub type Instance = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Numerical,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl FeatureSpec {
    pub fn numerical(name: impl Into<String>) -> Self {
        FeatureSpec { name: name.into(), kind: FeatureKind::Numerical, categories: vec![] }
    }

    pub fn categorical(name: impl Into<String>, categories: Vec<String>) -> Self {
        FeatureSpec { name: name.into(), kind: FeatureKind::Categorical, categories }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }
}

/// Statistics of one feature. Zero for categorical features.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub specs: Vec<FeatureSpec>,
    pub rows: Vec<Instance>,
    pub labels: Option<Vec<usize>>,
    pub class_names: Vec<String>,
    pub stats: Vec<FeatureStats>,
    /// Empirical category probabilities; empty for numerical features.
    pub cat_freqs: Vec<Vec<f64>>,
}

fn validate_specs(specs: &[FeatureSpec]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for s in specs {
        if !seen.insert(s.name.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate feature name `{}`", s.name)));
        }
        if s.is_categorical() == s.categories.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "feature `{}`: categories must be present exactly for categorical features",
                s.name
            )));
        }
    }
    Ok(())
}

impl Dataset {
    pub fn new(
        specs: Vec<FeatureSpec>,
        rows: Vec<Instance>,
        labels: Option<Vec<usize>>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        validate_specs(&specs)?;
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, r) in rows.iter().enumerate() {
            check_instance(&specs, r).map_err(|e| Error::Parse { row: i + 1, msg: e.to_string() })?;
        }
        if let Some(l) = &labels {
            if l.len() != rows.len() {
                return Err(Error::InvalidArgument("label count differs from row count".into()));
            }
            if let Some(&m) = l.iter().max() {
                if m >= class_names.len() {
                    return Err(Error::InvalidArgument("label index without class name".into()));
                }
            }
        }
        let (stats, cat_freqs) = column_stats(&specs, &rows);
        Ok(Dataset { specs, rows, labels, class_names, stats, cat_freqs })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.specs.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn has_categorical(&self) -> bool {
        self.specs.iter().any(FeatureSpec::is_categorical)
    }

    pub fn check_instance(&self, x: &[f64]) -> Result<()> {
        check_instance(&self.specs, x)
    }

    pub fn standardizer(&self) -> Standardizer {
        Standardizer::new(&self.specs, &self.stats)
    }

    /// Largest standardized distance from `reference` to any row.
    pub fn delta(&self, reference: &[f64]) -> Result<f64> {
        let st = self.standardizer();
        let mut best = 0.0f64;
        for r in &self.rows {
            let d = st.distance(reference, r);
            if d.is_finite() && d > best {
                best = d;
            }
        }
        if best > 0.0 {
            Ok(best)
        } else {
            Err(Error::DegenerateReference)
        }
    }

    /// Subset of rows, keeping schema and recomputing statistics.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        let rows = idx.iter().map(|&i| self.rows[i].clone()).collect();
        let labels = self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect());
        Dataset::new(self.specs.clone(), rows, labels, self.class_names.clone())
    }

    /// Render a value of feature `j` as text.
    pub fn format_value(&self, j: usize, v: f64) -> String {
        let s = &self.specs[j];
        if s.is_categorical() {
            s.categories[v as usize].clone()
        } else {
            format!("{v}")
        }
    }

    /// Write as CSV; numbers use the shortest exact round-trip form.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = self.specs.iter().map(|s| s.name.clone()).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        wr.write_record(&header)?;
        for (i, r) in self.rows.iter().enumerate() {
            let mut rec: Vec<String> = (0..r.len()).map(|j| self.format_value(j, r[j])).collect();
            if let Some(l) = &self.labels {
                rec.push(self.class_names[l[i]].clone());
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

pub fn check_instance(specs: &[FeatureSpec], x: &[f64]) -> Result<()> {
    if x.len() != specs.len() {
        return Err(Error::Arity { expected: specs.len(), got: x.len() });
    }
    for (s, &v) in specs.iter().zip(x) {
        if !v.is_finite() {
            return Err(Error::NonFinite);
        }
        if s.is_categorical() && (v < 0.0 || v.fract() != 0.0 || v as usize >= s.categories.len()) {
            return Err(Error::InvalidArgument(format!("category index {v} out of range for `{}`", s.name)));
        }
    }
    Ok(())
}

fn column_stats(specs: &[FeatureSpec], rows: &[Instance]) -> (Vec<FeatureStats>, Vec<Vec<f64>>) {
    let n = rows.len() as f64;
    let mut stats = Vec::with_capacity(specs.len());
    let mut freqs = Vec::with_capacity(specs.len());
    for (j, s) in specs.iter().enumerate() {
        if s.is_categorical() {
            let mut c = vec![0.0; s.categories.len()];
            for r in rows {
                c[r[j] as usize] += 1.0;
            }
            freqs.push(c.into_iter().map(|x| x / n).collect());
            stats.push(FeatureStats::default());
        } else {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mean = crate::stats::mean(&col);
            let std = crate::stats::std_dev(&col);
            stats.push(FeatureStats { mean, std, min, max, amplitude: max - min });
            freqs.push(vec![]);
        }
    }
    (stats, freqs)
}

fn parse_num(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn class_order(values: &[String]) -> Vec<String> {
    let uniq: BTreeSet<&str> = values.iter().map(|s| s.as_str()).collect();
    let mut names: Vec<String> = uniq.into_iter().map(String::from).collect();
    if names.iter().all(|s| parse_num(s).is_some()) {
        names.sort_by(|a, b| parse_num(a).unwrap().total_cmp(&parse_num(b).unwrap()));
    }
    names
}

/// Read a CSV with a header row. `label` names the class column, if any.
/// Without a schema a column is categorical iff some cell is non-numeric.
pub fn read_dataset<R: Read>(r: R, schema: Option<&[FeatureSpec]>, label: Option<&str>) -> Result<Dataset> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let mut cells: Vec<Vec<String>> = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row: i + 1,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        for (j, c) in rec.iter().enumerate() {
            if c.trim().is_empty() {
                return Err(Error::Parse { row: i + 1, msg: format!("missing value in column `{}`", header[j]) });
            }
        }
        cells.push(rec.iter().map(|s| s.trim().to_string()).collect());
    }
    if cells.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let label_col = match label {
        Some(l) => Some(
            header
                .iter()
                .position(|h| h == l)
                .ok_or_else(|| Error::InvalidArgument(format!("label column `{l}` not found")))?,
        ),
        None => None,
    };
    let feat_cols: Vec<usize> = (0..header.len()).filter(|&j| Some(j) != label_col).collect();

    let specs: Vec<FeatureSpec> = match schema {
        Some(s) => {
            if s.len() != feat_cols.len() {
                return Err(Error::Arity { expected: s.len(), got: feat_cols.len() });
            }
            s.to_vec()
        }
        None => feat_cols
            .iter()
            .map(|&j| {
                if cells.iter().all(|r| parse_num(&r[j]).is_some()) {
                    FeatureSpec::numerical(header[j].clone())
                } else {
                    let cats: BTreeSet<&str> = cells.iter().map(|r| r[j].as_str()).collect();
                    FeatureSpec::categorical(header[j].clone(), cats.into_iter().map(String::from).collect())
                }
            })
            .collect(),
    };

    let mut rows = Vec::with_capacity(cells.len());
    for (i, rec) in cells.iter().enumerate() {
        let mut row = Vec::with_capacity(specs.len());
        for (s, &j) in specs.iter().zip(&feat_cols) {
            let c = &rec[j];
            let v = if s.is_categorical() {
                s.categories.iter().position(|k| k == c).ok_or_else(|| Error::UnknownCategory {
                    feature: s.name.clone(),
                    value: c.clone(),
                })? as f64
            } else {
                parse_num(c).ok_or_else(|| Error::Parse {
                    row: i + 1,
                    msg: format!("`{c}` is not a number in column `{}`", s.name),
                })?
            };
            row.push(v);
        }
        rows.push(row);
    }
    let (labels, class_names) = match label_col {
        Some(lc) => {
            let raw: Vec<String> = cells.iter().map(|r| r[lc].clone()).collect();
            let names = class_order(&raw);
            let l = raw.iter().map(|v| names.iter().position(|n| n == v).unwrap()).collect();
            (Some(l), names)
        }
        None => (None, vec![]),
    };
    Dataset::new(specs, rows, labels, class_names)
}

pub fn load_dataset(path: &Path, schema: Option<&[FeatureSpec]>, label: Option<&str>) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    read_dataset(std::io::BufReader::new(f), schema, label)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Blobs,
    Moons,
    Circles,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blobs" => Ok(SyntheticKind::Blobs),
            "moons" => Ok(SyntheticKind::Moons),
            "circles" => Ok(SyntheticKind::Circles),
            _ => Err(Error::InvalidArgument(format!("unknown dataset kind `{s}`"))),
        }
    }
}

/// Two-feature labelled toy data. Moons and circles mirror the usual
/// generators (outer shape is class 0); blobs are two isotropic Gaussians at
/// (-3,-3) and (3,3) with standard deviation `noise`.
pub fn synthesize_dataset(kind: SyntheticKind, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be non-negative".into()));
    }
    let mut r = rng::rng(seed);
    let n_out = n / 2;
    let n_in = n - n_out;
    let lin = |k: usize, i: usize, end: f64| if k > 1 { end * i as f64 / (k - 1) as f64 } else { 0.0 };
    let mut pts: Vec<(f64, f64, usize)> = Vec::with_capacity(n);
    match kind {
        SyntheticKind::Moons => {
            let pi = std::f64::consts::PI;
            for i in 0..n_out {
                let t = lin(n_out, i, pi);
                pts.push((t.cos(), t.sin(), 0));
            }
            for i in 0..n_in {
                let t = lin(n_in, i, pi);
                pts.push((1.0 - t.cos(), 1.0 - t.sin() - 0.5, 1));
            }
        }
        SyntheticKind::Circles => {
            let tau = 2.0 * std::f64::consts::PI;
            for i in 0..n_out {
                let t = tau * i as f64 / n_out as f64;
                pts.push((t.cos(), t.sin(), 0));
            }
            for i in 0..n_in {
                let t = tau * i as f64 / n_in as f64;
                pts.push((0.8 * t.cos(), 0.8 * t.sin(), 1));
            }
        }
        SyntheticKind::Blobs => {
            for i in 0..n {
                let c = if i < n_out { -3.0 } else { 3.0 };
                pts.push((c, c, usize::from(i >= n_out)));
            }
        }
    }
    for p in pts.iter_mut() {
        let a: f64 = r.sample(StandardNormal);
        let b: f64 = r.sample(StandardNormal);
        p.0 += noise * a;
        p.1 += noise * b;
    }
    pts.shuffle(&mut r);
    let rows = pts.iter().map(|p| vec![p.0, p.1]).collect();
    let labels = pts.iter().map(|p| p.2).collect();
    Dataset::new(
        vec![FeatureSpec::numerical("x1"), FeatureSpec::numerical("x2")],
        rows,
        Some(labels),
        vec!["0".into(), "1".into()],
    )
}

/// Uniform points in [lo, hi]^d, unlabelled.
pub fn uniform_box(n: usize, d: usize, lo: f64, hi: f64, seed: u64) -> Result<Dataset> {
    let mut r = rng::rng(seed);
    let rows = (0..n).map(|_| (0..d).map(|_| r.gen_range(lo..hi)).collect()).collect();
    let specs = (0..d).map(|j| FeatureSpec::numerical(format!("x{}", j + 1))).collect();
    Dataset::new(specs, rows, None, vec![])
}

/// Seeded split of `0..n` into (train, test) with `train_frac` of rows in train.
pub fn train_test_split(n: usize, train_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::rng(seed));
    let k = ((n as f64) * train_frac).round() as usize;
    let test = idx.split_off(k.min(n));
    (idx, test)
}
