//! Checks against the real MNIST files. Skipped with a notice when the
//! files are not present (see `scripts/fetch_datasets.sh`).

use std::path::{Path, PathBuf};

use tnid_core::data::{
    prepare_split, IdxSource, ResizeFilter, Split, MNIST_TEST_CLASS_COUNTS, MNIST_TRAIN_CLASS_COUNTS,
};
use tnid_core::Execution;

fn source(split: Split) -> Option<IdxSource> {
    let dir = match std::env::var_os("TNID_DATA_DIR") {
        Some(d) => PathBuf::from(d),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"),
    };
    match IdxSource::in_dir(&dir, split) {
        Ok(s) => Some(s),
        Err(e) => {
            eprintln!("skipping: MNIST not available in {} ({e})", dir.display());
            None
        }
    }
}

#[test]
fn test_split_has_known_size_and_histogram() {
    let Some(src) = source(Split::Test) else { return };
    let ds = prepare_split(&src, Split::Test, ResizeFilter::Box, 8, Execution::Parallel).unwrap();
    assert_eq!(ds.len(), 10_000);
    assert_eq!(ds.n_features(), 64);
    assert_eq!(ds.class_histogram(), MNIST_TEST_CLASS_COUNTS);
    assert!(ds.features().iter().all(|v| (-0.5..=0.5).contains(v)));
    // Borders of handwritten digits are blank.
    assert_eq!(ds.sample(0)[0], -0.5);
}

#[test]
fn train_split_has_known_size_and_histogram() {
    let Some(src) = source(Split::Train) else { return };
    let ds = prepare_split(&src, Split::Train, ResizeFilter::Box, 8, Execution::Parallel).unwrap();
    assert_eq!(ds.len(), 60_000);
    assert_eq!(ds.class_histogram(), MNIST_TRAIN_CLASS_COUNTS);
    assert_eq!(ds.provenance().source_digest, src.digest().unwrap());
}

#[test]
fn bilinear_and_box_caches_are_distinguishable() {
    let Some(src) = source(Split::Test) else { return };
    let a = prepare_split(&src, Split::Test, ResizeFilter::Box, 8, Execution::Parallel).unwrap();
    let b = prepare_split(&src, Split::Test, ResizeFilter::Bilinear, 8, Execution::Parallel).unwrap();
    assert_ne!(a.provenance(), b.provenance());
    assert_eq!(a.labels(), b.labels());
}
