//! Benchmark datasets: seeded 2-D generators, CSV ingestion and z-score standardization.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::seeding::{stream_rng, Stream};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("requested an empty dataset (n = 0)")]
    EmptyRequest,
    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),
    #[error("data matrix must have at least one row and one column (got {rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("{path}: line {line}, column {column}: cannot parse {value:?} as a number")]
    ParseError {
        path: PathBuf,
        line: u64,
        column: usize,
        value: String,
    },
    #[error("{path}: label column {column} not found")]
    MissingLabelColumn { path: PathBuf, column: String },
    #[error("{path}: no data rows")]
    EmptyFile { path: PathBuf },
    #[error("{path}: line {line} has {found} columns, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        line: u64,
        found: usize,
        expected: usize,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("label vector of length {labels} does not match {points} points")]
    LabelLength { labels: usize, points: usize },
    #[error("labels are not contiguous ids starting at 0")]
    NonContiguousLabels,
}

/// `n` points in `D` dimensions, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<T> {
    points: Array2<T>,
}

impl<T: Scalar> DataMatrix<T> {
    pub fn new(points: Array2<T>) -> Result<Self, DatasetError> {
        let (rows, cols) = points.dim();
        if rows == 0 || cols == 0 {
            return Err(DatasetError::EmptyMatrix { rows, cols });
        }
        if let Some(((row, column), _)) = points.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DatasetError::NonFinite { row, column });
        }
        Ok(Self { points })
    }

    /// Number of points.
    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    /// Dimensionality.
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<T> {
        &self.points
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.points.row(i)
    }

    /// Gathers the rows named by `indices` into a new matrix, in order.
    pub fn gather(&self, indices: &[usize]) -> Array2<T> {
        self.points.select(Axis(0), indices)
    }

    pub fn into_points(self) -> Array2<T> {
        self.points
    }
}

/// Class id per point, contiguous from 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVector(Vec<usize>);

impl LabelVector {
    /// Validates that the ids used are exactly `0..k` for some `k ≥ 1`.
    pub fn new(labels: Vec<usize>) -> Result<Self, DatasetError> {
        if labels.is_empty() {
            return Err(DatasetError::NonContiguousLabels);
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        if seen.iter().all(|&s| s) {
            Ok(Self(labels))
        } else {
            Err(DatasetError::NonContiguousLabels)
        }
    }

    /// Relabels arbitrary ids to contiguous ids in order of first appearance.
    pub fn canonical(raw: &[usize]) -> Self {
        let mut map = HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Number of distinct classes.
    pub fn class_count(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }

    /// Points per class, indexed by class id.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count()];
        for &l in &self.0 {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    Blobs,
    Moons,
    Circles,
    AnisoBlobs,
}

impl SyntheticKind {
    fn min_points(self, centers: usize) -> usize {
        match self {
            SyntheticKind::Blobs | SyntheticKind::AnisoBlobs => centers,
            SyntheticKind::Moons | SyntheticKind::Circles => 2,
        }
    }

    /// Number of generating clusters.
    pub fn cluster_count(self, centers: usize) -> usize {
        match self {
            SyntheticKind::Blobs | SyntheticKind::AnisoBlobs => centers,
            SyntheticKind::Moons | SyntheticKind::Circles => 2,
        }
    }
}

impl std::str::FromStr for SyntheticKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "blobs" => Ok(Self::Blobs),
            "moons" => Ok(Self::Moons),
            "circles" => Ok(Self::Circles),
            "aniso-blobs" | "aniso" => Ok(Self::AnisoBlobs),
            other => Err(format!("unknown synthetic dataset {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    /// Standard deviation of the isotropic Gaussian noise.
    pub noise: f64,
    /// Cluster count for the blob generators; ignored otherwise.
    #[serde(default = "default_centers")]
    pub centers: usize,
    pub seed: u64,
}

fn default_centers() -> usize {
    3
}

/// Radius of the circle the blob centers sit on.
const BLOB_RADIUS: f64 = 4.0;
/// Shear applied to obtain anisotropic blobs.
const ANISO_TRANSFORM: [[f64; 2]; 2] = [[0.6, -0.64], [-0.41, 0.85]];

/// Generates one of the 2-D benchmark shapes. Points are grouped by cluster in label order.
pub fn generate_synthetic<T: Scalar>(
    spec: &SyntheticSpec,
) -> Result<(DataMatrix<T>, LabelVector), DatasetError> {
    if spec.n == 0 {
        return Err(DatasetError::EmptyRequest);
    }
    if !(spec.noise >= 0.0) || !spec.noise.is_finite() {
        return Err(DatasetError::BadSpec(format!(
            "noise must be finite and nonnegative, got {}",
            spec.noise
        )));
    }
    let centered = matches!(spec.kind, SyntheticKind::Blobs | SyntheticKind::AnisoBlobs);
    if centered && spec.centers == 0 {
        return Err(DatasetError::BadSpec("blobs need at least one center".into()));
    }
    let min = spec.kind.min_points(spec.centers);
    if spec.n < min {
        return Err(DatasetError::BadSpec(format!(
            "{:?} needs at least {min} points, got {}",
            spec.kind, spec.n
        )));
    }

    let mut rng = stream_rng(spec.seed, Stream::Dataset);
    let mut noise = || -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * spec.noise
    };

    let mut coords: Vec<[f64; 2]> = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    match spec.kind {
        SyntheticKind::Blobs | SyntheticKind::AnisoBlobs => {
            let per = split_evenly(spec.n, spec.centers);
            for (c, &count) in per.iter().enumerate() {
                let angle = PI / 2.0 + 2.0 * PI * c as f64 / spec.centers as f64;
                let center = [BLOB_RADIUS * angle.cos(), BLOB_RADIUS * angle.sin()];
                for _ in 0..count {
                    coords.push([center[0] + noise(), center[1] + noise()]);
                    labels.push(c);
                }
            }
            if spec.kind == SyntheticKind::AnisoBlobs {
                let m = ANISO_TRANSFORM;
                for p in &mut coords {
                    *p = [
                        p[0] * m[0][0] + p[1] * m[1][0],
                        p[0] * m[0][1] + p[1] * m[1][1],
                    ];
                }
            }
        }
        SyntheticKind::Moons => {
            let outer = spec.n / 2;
            let inner = spec.n - outer;
            for t in linspace(0.0, PI, outer) {
                coords.push([t.cos() + noise(), t.sin() + noise()]);
                labels.push(0);
            }
            for t in linspace(0.0, PI, inner) {
                coords.push([1.0 - t.cos() + noise(), 0.5 - t.sin() + noise()]);
                labels.push(1);
            }
        }
        SyntheticKind::Circles => {
            let outer = spec.n / 2;
            let inner = spec.n - outer;
            for (count, radius, label) in [(outer, 1.0, 0), (inner, 0.5, 1)] {
                for i in 0..count {
                    let t = 2.0 * PI * i as f64 / count as f64;
                    coords.push([radius * t.cos() + noise(), radius * t.sin() + noise()]);
                    labels.push(label);
                }
            }
        }
    }

    let points = Array2::from_shape_fn((spec.n, 2), |(i, j)| T::lit(coords[i][j]));
    // Moons/circles with n = 2 still yield both classes; blobs yield every center.
    Ok((DataMatrix::new(points)?, LabelVector::canonical(&labels)))
}

fn split_evenly(n: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|p| n / parts + usize::from(p < n % parts))
        .collect()
}

/// `count` evenly spaced values over `[start, end]` inclusive.
fn linspace(start: f64, end: f64, count: usize) -> impl Iterator<Item = f64> {
    let step = if count > 1 {
        (end - start) / (count - 1) as f64
    } else {
        0.0
    };
    (0..count).map(move |i| start + step * i as f64)
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("class".into())
    }
}

impl std::fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "#{i}"),
            LabelColumn::Name(name) => write!(f, "{name:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvOptions {
    #[serde(default)]
    pub label_column: LabelColumn,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_true")]
    pub has_header: bool,
}

fn default_delimiter() -> char {
    ','
}

fn default_true() -> bool {
    true
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: LabelColumn::default(),
            delimiter: default_delimiter(),
            has_header: true,
        }
    }
}

/// Reads a numeric CSV. Every column except the label column becomes a feature; label
/// values (any text) are mapped to contiguous ids in order of first appearance.
pub fn load_csv<T: Scalar>(
    path: &Path,
    options: &CsvOptions,
) -> Result<(DataMatrix<T>, LabelVector), DatasetError> {
    let csv_err = |source| DatasetError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .delimiter(u8::try_from(options.delimiter).unwrap_or(b','))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;

    let header: Option<Vec<String>> = if options.has_header {
        Some(
            reader
                .headers()
                .map_err(csv_err)?
                .iter()
                .map(str::to_owned)
                .collect(),
        )
    } else {
        None
    };

    let missing = || DatasetError::MissingLabelColumn {
        path: path.to_path_buf(),
        column: options.label_column.to_string(),
    };

    let mut width = header.as_ref().map(Vec::len);
    let mut label_idx = match (&options.label_column, &header) {
        (LabelColumn::Name(name), Some(h)) => {
            Some(h.iter().position(|c| c == name).ok_or_else(missing)?)
        }
        (LabelColumn::Name(_), None) => return Err(missing()),
        (LabelColumn::Index(i), _) => Some(*i),
    };
    if let (Some(w), Some(i)) = (width, label_idx) {
        if i >= w {
            return Err(missing());
        }
    }

    let mut values: Vec<f64> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(DatasetError::RaggedRow {
                path: path.to_path_buf(),
                line,
                found: record.len(),
                expected: w,
            });
        }
        let li = *label_idx.get_or_insert(w);
        if li >= w {
            return Err(missing());
        }
        for (column, cell) in record.iter().enumerate() {
            if column == li {
                raw_labels.push(cell.to_owned());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| DatasetError::ParseError {
                path: path.to_path_buf(),
                line,
                column,
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(DatasetError::ParseError {
                    path: path.to_path_buf(),
                    line,
                    column,
                    value: cell.to_owned(),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(DatasetError::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let features = values.len() / rows;
    let points = Array2::from_shape_fn((rows, features), |(i, j)| T::lit(values[i * features + j]));

    let mut ids: HashMap<&str, usize> = HashMap::new();
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l.as_str()).or_insert(next)
        })
        .collect();
    Ok((DataMatrix::new(points)?, LabelVector(labels)))
}

/// Column-wise z-scores with population variance. Constant columns become zeros.
pub fn standardize<T: Scalar>(data: &DataMatrix<T>) -> DataMatrix<T> {
    let n = T::from_count(data.n());
    let mut out = data.points().clone();
    for mut column in out.columns_mut() {
        let first = column[0];
        if column.iter().all(|&v| v == first) {
            column.fill(T::zero());
            continue;
        }
        let mean = column.iter().copied().sum::<T>() / n;
        let var = column.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let std = var.sqrt();
        column.mapv_inplace(|v| (v - mean) / std);
    }
    DataMatrix { points: out }
}

/// Seeded class-stratified subsample of about `target` points (largest-remainder
/// allocation, at least one point per class). Returned indices are ascending.
pub fn stratified_subsample(labels: &LabelVector, target: usize, seed: u64) -> Vec<usize> {
    let n = labels.len();
    if target >= n {
        return (0..n).collect();
    }
    let sizes = labels.class_sizes();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
    for (i, &l) in labels.as_slice().iter().enumerate() {
        members[l].push(i);
    }
    let quotas: Vec<f64> = sizes
        .iter()
        .map(|&s| target as f64 * s as f64 / n as f64)
        .collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut short = target.saturating_sub(alloc.iter().sum());
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in &order {
        if short == 0 {
            break;
        }
        if alloc[c] < sizes[c] {
            alloc[c] += 1;
            short -= 1;
        }
    }
    for (c, a) in alloc.iter_mut().enumerate() {
        *a = (*a).clamp(1, sizes[c]);
    }

    let mut rng = stream_rng(seed, Stream::Subsample);
    let mut picked: Vec<usize> = members
        .iter()
        .zip(&alloc)
        .flat_map(|(m, &take)| {
            index::sample(&mut rng, m.len(), take)
                .into_iter()
                .map(|i| m[i])
                .collect::<Vec<_>>()
        })
        .collect();
    picked.sort_unstable();
    picked
}

/// Restricts a dataset to `indices`, relabelling classes contiguously.
pub fn subset<T: Scalar>(
    data: &DataMatrix<T>,
    labels: &LabelVector,
    indices: &[usize],
) -> Result<(DataMatrix<T>, LabelVector), DatasetError> {
    let raw: Vec<usize> = indices.iter().map(|&i| labels.as_slice()[i]).collect();
    Ok((DataMatrix::new(data.gather(indices))?, LabelVector::canonical(&raw)))
}

/// Checks that the companion label vector matches the data.
pub fn check_labels<T: Scalar>(data: &DataMatrix<T>, labels: &LabelVector) -> Result<(), DatasetError> {
    if labels.len() != data.n() {
        return Err(DatasetError::LabelLength {
            labels: labels.len(),
            points: data.n(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    fn spec(kind: SyntheticKind, n: usize) -> SyntheticSpec {
        SyntheticSpec {
            kind,
            n,
            noise: 0.1,
            centers: 3,
            seed: 7,
        }
    }

    #[test]
    fn blobs_have_balanced_labels() {
        let (x, y) = generate_synthetic::<f64>(&spec(SyntheticKind::Blobs, 60)).unwrap();
        assert_eq!(x.points().dim(), (60, 2));
        assert_eq!(y.class_sizes(), vec![20, 20, 20]);
    }

    #[test]
    fn empty_request_is_rejected() {
        assert!(matches!(
            generate_synthetic::<f64>(&spec(SyntheticKind::Moons, 0)),
            Err(DatasetError::EmptyRequest)
        ));
        let mut s = spec(SyntheticKind::Blobs, 10);
        s.centers = 0;
        assert!(matches!(generate_synthetic::<f64>(&s), Err(DatasetError::BadSpec(_))));
        s = spec(SyntheticKind::AnisoBlobs, 2);
        assert!(matches!(generate_synthetic::<f64>(&s), Err(DatasetError::BadSpec(_))));
    }

    #[test]
    fn generators_are_deterministic() {
        for kind in [
            SyntheticKind::Blobs,
            SyntheticKind::Moons,
            SyntheticKind::Circles,
            SyntheticKind::AnisoBlobs,
        ] {
            let a = generate_synthetic::<f64>(&spec(kind, 101)).unwrap();
            let b = generate_synthetic::<f64>(&spec(kind, 101)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.1.class_sizes().iter().sum::<usize>(), 101);
        }
    }

    #[test]
    fn standardize_hand_cases() {
        let x = DataMatrix::new(array![[1.0, 5.0], [3.0, 5.0]]).unwrap();
        let z = standardize(&x);
        assert_eq!(z.points(), &array![[-1.0, 0.0], [1.0, 0.0]]);

        let c = DataMatrix::new(array![[0.1], [0.1], [0.1]]).unwrap();
        assert_eq!(standardize(&c).points(), &array![[0.0], [0.0], [0.0]]);
    }

    #[test]
    fn standardize_is_idempotent() {
        let (x, _) = generate_synthetic::<f64>(&spec(SyntheticKind::Moons, 50)).unwrap();
        let once = standardize(&x);
        let twice = standardize(&once);
        for (a, b) in once.points().iter().zip(twice.points()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_parse_error_names_the_cell() {
        let f = write_tmp("a,b,class\n1,2,x\n3,oops,y\n");
        let err = load_csv::<f64>(f.path(), &CsvOptions::default()).unwrap_err();
        match err {
            DatasetError::ParseError {
                line, column, value, ..
            } => {
                assert_eq!((line, column, value.as_str()), (3, 1, "oops"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_label_by_index_and_delimiter() {
        let f = write_tmp("b;1.5;2\na;0.5;1\nb;2.5;3\n");
        let opts = CsvOptions {
            label_column: LabelColumn::Index(0),
            delimiter: ';',
            has_header: false,
        };
        let (x, y) = load_csv::<f64>(f.path(), &opts).unwrap();
        assert_eq!(x.points(), &array![[1.5, 2.0], [0.5, 1.0], [2.5, 3.0]]);
        assert_eq!(y.as_slice(), &[0, 1, 0]);
    }

    #[test]
    fn csv_errors() {
        let f = write_tmp("a,b\n1,2\n");
        assert!(matches!(
            load_csv::<f64>(f.path(), &CsvOptions::default()),
            Err(DatasetError::MissingLabelColumn { .. })
        ));
        let f = write_tmp("a,class\n");
        assert!(matches!(
            load_csv::<f64>(f.path(), &CsvOptions::default()),
            Err(DatasetError::EmptyFile { .. })
        ));
        let f = write_tmp("a,class\n1,0\n2\n");
        assert!(matches!(
            load_csv::<f64>(f.path(), &CsvOptions::default()),
            Err(DatasetError::RaggedRow { .. })
        ));
    }

    #[test]
    fn stratified_subsample_keeps_proportions() {
        let labels = LabelVector::new((0..1000).map(|i| usize::from(i % 4 == 0)).collect()).unwrap();
        let idx = stratified_subsample(&labels, 100, 3);
        assert_eq!(idx.len(), 100);
        let ones = idx.iter().filter(|&&i| labels.as_slice()[i] == 1).count();
        assert_eq!(ones, 25);
        assert_eq!(idx, stratified_subsample(&labels, 100, 3));
    }

    #[test]
    fn generic_over_f32() {
        let (x, _) = generate_synthetic::<f32>(&spec(SyntheticKind::Circles, 40)).unwrap();
        assert_eq!(x.n(), 40);
    }
}
