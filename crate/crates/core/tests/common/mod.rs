//! Shared helpers for integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use litefocus_core::pattern::{
    encode_csv, encode_pgm, frequency_grouped_order, permute_map, synthesize_attention, LogitSource,
};
use litefocus_core::tensor::encode_lftn;
use litefocus_core::{random_tensor, Distribution, Spectrogrid, Tensor};

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn check(name: &str, bytes: &[u8]) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, bytes).unwrap();
    }
    let want = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(bytes, want.as_slice(), "{name} differs from golden");
}

pub fn cases() -> Vec<(&'static str, Vec<u8>)> {
    let grid = Spectrogrid::new(4, 2).unwrap();
    let biased = synthesize_attention(&grid, 2.0, LogitSource::Random { seed: 3 }).unwrap();
    let grouped = permute_map(&biased, &frequency_grouped_order(&grid)).unwrap();
    let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    vec![
        ("one.lftn", encode_lftn(&Tensor::new(vec![1], vec![1.0]).unwrap())),
        ("normal_2x3_seed7.lftn", encode_lftn(&random_tensor(&[2, 3], 7, Distribution::StandardNormal).unwrap())),
        ("uniform_4x4_seed1.lftn", encode_lftn(&random_tensor(&[4, 4], 1, Distribution::Uniform01).unwrap())),
        ("identity_2x2.pgm", encode_pgm(&eye).unwrap()),
        ("biased_4x2.pgm", encode_pgm(&biased).unwrap()),
        ("biased_4x2.csv", encode_csv(&biased).unwrap()),
        ("biased_4x2_grouped.pgm", encode_pgm(&grouped).unwrap()),
    ]
}
