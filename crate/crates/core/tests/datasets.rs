//! Loading the bundled benchmark tables and the synthetic generators.

use std::path::PathBuf;

use rpspectral::dataset::{
    generate_synthetic, load_csv, standardize, stratified_subsample, subset, CsvOptions, DataMatrix, DatasetError,
    SyntheticKind, SyntheticSpec,
};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn load(name: &str) -> (DataMatrix<f64>, rpspectral::dataset::LabelVector) {
    load_csv(&data_dir().join(name), &CsvOptions::default()).unwrap()
}

#[test]
fn iris_shape() {
    let (data, labels) = load("iris.csv");
    assert_eq!((data.n(), data.dim()), (150, 4));
    assert_eq!(labels.class_sizes(), vec![50, 50, 50]);
}

#[test]
fn wine_shape() {
    let (data, labels) = load("wine.csv");
    assert_eq!((data.n(), data.dim()), (178, 13));
    assert_eq!(labels.class_count(), 3);
}

#[test]
fn breast_cancer_shape() {
    let (data, labels) = load("breast_cancer.csv");
    assert_eq!((data.n(), data.dim()), (569, 30));
    let mut sizes = labels.class_sizes();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![212, 357]);
}

#[test]
fn magic_gamma_when_available() {
    let path = data_dir().join("magic_gamma.csv");
    if !path.exists() {
        return;
    }
    let (data, labels) = load_csv::<f64>(&path, &CsvOptions::default()).unwrap();
    assert_eq!((data.n(), data.dim()), (19020, 10));
    let keep = stratified_subsample(&labels, 2000, 0);
    let (small, small_labels) = subset(&data, &labels, &keep).unwrap();
    assert_eq!(small.n(), 2000);
    assert_eq!(small_labels.class_count(), 2);
}

#[test]
fn standardized_iris_has_unit_columns() {
    let (data, _) = load("iris.csv");
    let z = standardize(&data);
    for col in z.points().columns() {
        let mean = col.mean().unwrap();
        let var = col.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }
}

#[test]
fn stratified_subsample_keeps_class_shares() {
    let (_, labels) = load("breast_cancer.csv");
    let keep = stratified_subsample(&labels, 100, 3);
    assert_eq!(keep.len(), 100);
    let sizes = labels.class_sizes();
    for (class, &size) in sizes.iter().enumerate() {
        let taken = keep.iter().filter(|&&i| labels.as_slice()[i] == class).count();
        let share = 100.0 * size as f64 / labels.len() as f64;
        assert!((taken as f64 - share).abs() < 1.0, "class {class}: {taken} vs {share}");
    }
    assert!(keep.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn missing_file_is_an_error() {
    let err = load_csv::<f64>(&data_dir().join("absent.csv"), &CsvOptions::default()).unwrap_err();
    assert!(matches!(err, DatasetError::Csv { .. }));
}

#[test]
fn synthetic_generators_are_seeded() {
    for kind in [SyntheticKind::Blobs, SyntheticKind::Moons, SyntheticKind::Circles, SyntheticKind::AnisoBlobs] {
        let spec = SyntheticSpec {
            kind,
            n: 90,
            noise: 0.1,
            centers: 3,
            seed: 4,
        };
        let (a, la) = generate_synthetic::<f64>(&spec).unwrap();
        let (b, lb) = generate_synthetic::<f64>(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(a.n(), 90);
        assert_eq!(la.class_count(), kind.cluster_count(3));
    }
}
