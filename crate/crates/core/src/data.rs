//! Grouped datasets: samples `(x, a, y)` with a protected group `a` and a
//! class label `y`, synthetic Gaussian-mixture generation, CSV ingestion and
//! export, stratified splitting and standardization.
//!
//! Row order is the iteration order everywhere: every "sequential" reduction
//! walks samples by ascending row index.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    dim: usize,
    features: Vec<f64>,
    groups: Vec<usize>,
    labels: Vec<usize>,
    feature_names: Vec<String>,
    group_names: Vec<String>,
    class_names: Vec<String>,
    margins: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub index: usize,
    pub x: &'a [f64],
    pub group: usize,
    pub label: usize,
}

impl GroupedDataset {
    pub fn new(
        dim: usize,
        features: Vec<f64>,
        groups: Vec<usize>,
        labels: Vec<usize>,
        group_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n = groups.len();
        if labels.len() != n {
            return Err(Error::ShapeError {
                expected: n,
                actual: labels.len(),
            });
        }
        if features.len() != n * dim {
            return Err(Error::ShapeError {
                expected: n * dim,
                actual: features.len(),
            });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::SchemaError(format!(
                "non-finite feature at row {}, column {}",
                i / dim.max(1),
                i % dim.max(1)
            )));
        }
        if let Some(&g) = groups.iter().find(|&&g| g >= group_names.len()) {
            return Err(Error::SchemaError(format!(
                "group id {g} outside [0, {})",
                group_names.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(Error::SchemaError(format!(
                "label {y} outside [0, {})",
                class_names.len()
            )));
        }
        Ok(Self {
            dim,
            features,
            groups,
            labels,
            feature_names: (0..dim).map(|j| format!("x{j}")).collect(),
            group_names,
            class_names,
            margins: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim {
            return Err(Error::ShapeError {
                expected: self.dim,
                actual: names.len(),
            });
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn group(&self, i: usize) -> usize {
        self.groups[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Per-group minimum class-mean separation, recorded for synthetic data.
    pub fn margins(&self) -> Option<&[f64]> {
        self.margins.as_deref()
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        Sample {
            index: i,
            x: self.row(i),
            group: self.groups[i],
            label: self.labels[i],
        }
    }

    /// `|D_a|` for every group id.
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_groups()];
        for &g in &self.groups {
            sizes[g] += 1;
        }
        sizes
    }

    pub fn view(&self) -> DatasetView<'_> {
        DatasetView {
            ds: self,
            indices: (0..self.len()).collect(),
        }
    }

    pub fn group_view(&self, group: usize) -> Result<DatasetView<'_>> {
        self.view().group(group)
    }

    /// Owned copy of the listed rows, keeping the id mappings.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            features,
            groups: indices.iter().map(|&i| self.groups[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            group_names: self.group_names.clone(),
            class_names: self.class_names.clone(),
            margins: self.margins.clone(),
        }
    }

    /// SHA-256 over features, groups and labels.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.features {
            h.update(v.to_le_bytes());
        }
        for (&g, &y) in self.groups.iter().zip(&self.labels) {
            h.update((g as u64).to_le_bytes());
            h.update((y as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Writes the CSV form: header `x0..x{d-1},group,label`, features with 17
    /// significant digits, group and label by name.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push("group");
        header.push("label");
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format_f64(*v)).collect();
            rec.push(self.group_names[self.groups[i]].clone());
            rec.push(self.class_names[self.labels[i]].clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// 17 significant digits; parses back to the identical binary64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// An ordered selection of rows from a dataset.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    ds: &'a GroupedDataset,
    indices: Vec<usize>,
}

impl<'a> DatasetView<'a> {
    pub fn from_indices(ds: &'a GroupedDataset, indices: Vec<usize>) -> Self {
        Self { ds, indices }
    }

    pub fn dataset(&self) -> &'a GroupedDataset {
        self.ds
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Sample<'a>> + '_ {
        let ds = self.ds;
        self.indices.iter().map(move |&i| ds.sample(i))
    }

    /// Rows of this view that belong to `group`; empty selection is an error.
    pub fn group(&self, group: usize) -> Result<DatasetView<'a>> {
        let indices: Vec<usize> = self
            .indices
            .iter()
            .copied()
            .filter(|&i| self.ds.groups[i] == group)
            .collect();
        if indices.is_empty() {
            return Err(Error::EmptySubset(format!("group {group} has no samples")));
        }
        Ok(DatasetView { ds: self.ds, indices })
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.ds.num_groups()];
        for &i in &self.indices {
            sizes[self.ds.groups[i]] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGroup {
    pub name: String,
    pub size: usize,
    /// One mean per class, each of length `dim`.
    pub class_means: Vec<Vec<f64>>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub groups: Vec<SyntheticGroup>,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<usize> {
        let first = self
            .groups
            .first()
            .ok_or_else(|| Error::DegenerateSpec("no groups".into()))?;
        let classes = first.class_means.len();
        if classes < 2 {
            return Err(Error::DegenerateSpec("need at least two classes".into()));
        }
        for g in &self.groups {
            if g.class_means.len() != classes {
                return Err(Error::DegenerateSpec(format!(
                    "group {} declares {} classes, expected {classes}",
                    g.name,
                    g.class_means.len()
                )));
            }
            if g.class_means.iter().any(|m| m.len() != self.dim) {
                return Err(Error::DegenerateSpec(format!(
                    "group {}: class mean dimension differs from {}",
                    g.name, self.dim
                )));
            }
            if g.size < 2 {
                return Err(Error::DegenerateSpec(format!("group {} has size < 2", g.name)));
            }
            if !(g.sigma > 0.0) || !g.sigma.is_finite() {
                return Err(Error::DegenerateSpec(format!("group {}: sigma must be > 0", g.name)));
            }
            if group_margin(g) == 0.0 {
                return Err(Error::DegenerateSpec(format!(
                    "group {}: identical class means",
                    g.name
                )));
            }
        }
        Ok(classes)
    }

    /// Minimum class-mean separation inside each group.
    pub fn margins(&self) -> Vec<f64> {
        self.groups.iter().map(group_margin).collect()
    }
}

fn group_margin(g: &SyntheticGroup) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..g.class_means.len() {
        for j in i + 1..g.class_means.len() {
            let d = g.class_means[i]
                .iter()
                .zip(&g.class_means[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            best = best.min(d);
        }
    }
    best
}

/// Draws each group's classes from `N(μ_{a,y}, σ_a² I)`.
///
/// A group's size is split evenly over classes (remainder to the lowest
/// class ids). Rows are emitted group by group, class by class.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<GroupedDataset> {
    let classes = spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = Vec::new();
    let mut groups = Vec::new();
    let mut labels = Vec::new();
    for (a, g) in spec.groups.iter().enumerate() {
        let noise = Normal::new(0.0, g.sigma).map_err(|e| Error::DegenerateSpec(e.to_string()))?;
        for (y, mean) in g.class_means.iter().enumerate() {
            let count = g.size / classes + usize::from(y < g.size % classes);
            for _ in 0..count {
                for &m in mean {
                    features.push(m + noise.sample(&mut rng));
                }
                groups.push(a);
                labels.push(y);
            }
        }
    }
    let mut ds = GroupedDataset::new(
        spec.dim,
        features,
        groups,
        labels,
        spec.groups.iter().map(|g| g.name.clone()).collect(),
        (0..classes).map(|y| y.to_string()).collect(),
    )?;
    ds.margins = Some(spec.margins());
    Ok(ds)
}

/// Group shape for [`imbalance_margin_spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkGroup {
    pub size: usize,
    /// Distance between the two class means, in units of sigma.
    pub margin: f64,
    /// Midpoint of the two class means.
    pub center: Vec<f64>,
}

/// Two-class groups whose class means sit at `center ∓ (margin·σ/2)·e₀`.
pub fn two_class_spec(groups: &[BenchmarkGroup], sigma: f64, seed: u64) -> SyntheticSpec {
    let dim = groups.first().map_or(2, |g| g.center.len());
    let groups = groups
        .iter()
        .enumerate()
        .map(|(a, g)| {
            let half = 0.5 * g.margin * sigma;
            let mut lo = g.center.clone();
            let mut hi = g.center.clone();
            lo[0] -= half;
            hi[0] += half;
            SyntheticGroup {
                name: format!("g{a}"),
                size: g.size,
                class_means: vec![lo, hi],
                sigma,
            }
        })
        .collect();
    SyntheticSpec { dim, groups, seed }
}

/// The imbalance-margin benchmark: 2-d, two classes, groups of 600/300/100
/// samples with class-mean separations 2.0σ, 2.0σ and 0.8σ, all centered at
/// the origin.
pub fn imbalance_margin_spec(seed: u64) -> SyntheticSpec {
    two_class_spec(
        &[
            BenchmarkGroup {
                size: 600,
                margin: 2.0,
                center: vec![0.0, 0.0],
            },
            BenchmarkGroup {
                size: 300,
                margin: 2.0,
                center: vec![0.0, 0.0],
            },
            BenchmarkGroup {
                size: 100,
                margin: 0.8,
                center: vec![0.0, 0.0],
            },
        ],
        1.0,
        seed,
    )
}

/// Two groups of 900 and 100 samples; the minority has a narrower margin
/// and is offset from the majority, so the groups disagree at the optimum.
pub fn two_group_spec(seed: u64) -> SyntheticSpec {
    two_class_spec(
        &[
            BenchmarkGroup {
                size: 900,
                margin: 2.0,
                center: vec![0.0, 0.0],
            },
            BenchmarkGroup {
                size: 100,
                margin: 0.8,
                center: vec![0.5, 0.5],
            },
        ],
        1.0,
        seed,
    )
}

/// Column roles for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub features: Vec<String>,
    pub group: String,
    pub label: String,
}

/// Parses rows in file order. Group and label strings become dense ids in
/// order of first appearance; the names are kept on the dataset.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<GroupedDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaError(format!("missing column `{name}`")))
    };
    let feature_cols = schema
        .features
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let group_col = find(&schema.group)?;
    let label_col = find(&schema.label)?;

    let mut features = Vec::new();
    let mut groups = Vec::new();
    let mut labels = Vec::new();
    let mut group_ids: HashMap<String, usize> = HashMap::new();
    let mut group_names = Vec::new();
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();

    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (&col, name) in feature_cols.iter().zip(&schema.features) {
            let cell = record.get(col).unwrap_or("");
            let value: f64 = cell.trim().parse().map_err(|_| Error::ParseError {
                row,
                column: name.clone(),
                message: format!("`{cell}` is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::ParseError {
                    row,
                    column: name.clone(),
                    message: format!("`{cell}` is not finite"),
                });
            }
            features.push(value);
        }
        let intern = |col: usize, ids: &mut HashMap<String, usize>, names: &mut Vec<String>| {
            let key = record.get(col).unwrap_or("").to_string();
            let next = ids.len();
            *ids.entry(key.clone()).or_insert_with(|| {
                names.push(key);
                next
            })
        };
        groups.push(intern(group_col, &mut group_ids, &mut group_names));
        labels.push(intern(label_col, &mut label_ids, &mut class_names));
    }
    GroupedDataset::new(
        schema.features.len(),
        features,
        groups,
        labels,
        group_names,
        class_names,
    )?
    .with_feature_names(schema.features.clone())
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: GroupedDataset,
    pub test: GroupedDataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Strata with a single sample, all of which went to train.
    pub warnings: Vec<String>,
}

/// Stratified by `(group, label)`: each stratum is shuffled with the seeded
/// generator and cut at `round(fraction · count)`, clamped so strata of two
/// or more samples land in both halves. Outputs keep dataset row order.
pub fn split(ds: &GroupedDataset, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let classes = ds.num_classes();
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); ds.num_groups() * classes];
    for i in 0..ds.len() {
        strata[ds.group(i) * classes + ds.label(i)].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut warnings = Vec::new();
    for (s, mut members) in strata.into_iter().enumerate() {
        let count = members.len();
        if count == 0 {
            continue;
        }
        if count == 1 {
            warnings.push(format!(
                "stratum (group {}, label {}) has one sample; kept in train",
                ds.group_names()[s / classes],
                ds.class_names()[s % classes]
            ));
            train.push(members[0]);
            continue;
        }
        members.shuffle(&mut rng);
        let cut = ((train_fraction * count as f64).round() as usize).clamp(1, count - 1);
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Split {
        train: ds.subset(&train),
        test: ds.subset(&test),
        train_indices: train,
        test_indices: test,
        warnings,
    })
}

/// Per-feature affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics of `ds`; constant features keep scale 1.
    pub fn fit(ds: &GroupedDataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::EmptySubset("cannot standardize an empty dataset".into()));
        }
        let n = ds.len() as f64;
        let d = ds.dim();
        let mut mean = vec![0.0; d];
        for i in 0..ds.len() {
            for (m, x) in mean.iter_mut().zip(ds.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..ds.len() {
            for ((v, x), m) in var.iter_mut().zip(ds.row(i)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, ds: &GroupedDataset) -> GroupedDataset {
        let mut out = ds.clone();
        let d = ds.dim();
        for (j, v) in out.features.iter_mut().enumerate() {
            let c = j % d;
            *v = (*v - self.mean[c]) / self.std[c];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_sizes_and_determinism() {
        let spec = two_class_spec(
            &[
                BenchmarkGroup {
                    size: 900,
                    margin: 2.0,
                    center: vec![0.0, 0.0],
                },
                BenchmarkGroup {
                    size: 100,
                    margin: 1.0,
                    center: vec![1.0, 0.0],
                },
            ],
            1.0,
            3,
        );
        let a = gen_synthetic(&spec).unwrap();
        assert_eq!(a.group_sizes(), vec![900, 100]);
        let b = gen_synthetic(&spec).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_eq!(a.margins().unwrap(), &[2.0, 1.0]);
    }

    #[test]
    fn margin_dial_is_per_group() {
        let base = imbalance_margin_spec(1);
        let mut narrowed = base.clone();
        narrowed.groups[1].class_means[1][0] -= 0.5;
        let (m0, m1) = (base.margins(), narrowed.margins());
        assert_eq!(m0[0], m1[0]);
        assert_eq!(m0[2], m1[2]);
        assert!(m1[1] < m0[1]);
    }

    #[test]
    fn degenerate_specs() {
        let mut spec = imbalance_margin_spec(0);
        spec.groups[0].sigma = 0.0;
        assert!(matches!(gen_synthetic(&spec), Err(Error::DegenerateSpec(_))));
        let mut spec = imbalance_margin_spec(0);
        spec.groups[1].class_means[1] = spec.groups[1].class_means[0].clone();
        assert!(matches!(gen_synthetic(&spec), Err(Error::DegenerateSpec(_))));
    }

    #[test]
    fn split_is_stratified() {
        let ds = gen_synthetic(&two_class_spec(
            &[
                BenchmarkGroup {
                    size: 500,
                    margin: 2.0,
                    center: vec![0.0, 0.0],
                },
                BenchmarkGroup {
                    size: 500,
                    margin: 2.0,
                    center: vec![0.0, 1.0],
                },
            ],
            1.0,
            0,
        ))
        .unwrap();
        let s = split(&ds, 0.8, 9).unwrap();
        assert_eq!(s.train.len(), 800);
        assert_eq!(s.test.len(), 200);
        let again = split(&ds, 0.8, 9).unwrap();
        assert_eq!(s.train_indices, again.train_indices);
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn singleton_stratum_goes_to_train() {
        let ds = GroupedDataset::new(
            1,
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![0, 0, 0, 0, 1],
            vec![0, 1, 0, 1, 0],
            vec!["a".into(), "b".into()],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        let s = split(&ds, 0.5, 1).unwrap();
        assert!(s.train_indices.contains(&4));
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn standardizer_moments() {
        let ds = gen_synthetic(&imbalance_margin_spec(5)).unwrap();
        let st = Standardizer::fit(&ds).unwrap();
        let z = st.apply(&ds);
        let n = z.len() as f64;
        for c in 0..z.dim() {
            let col: Vec<f64> = (0..z.len()).map(|i| z.row(i)[c]).collect();
            let m = col.iter().sum::<f64>() / n;
            let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            assert!(m.abs() <= 1e-9);
            assert!((v - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn group_view_of_absent_group_is_empty_subset() {
        let ds = GroupedDataset::new(
            1,
            vec![0.0, 1.0],
            vec![0, 0],
            vec![0, 1],
            vec!["a".into(), "b".into()],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        assert!(matches!(ds.group_view(1), Err(Error::EmptySubset(_))));
    }
}
