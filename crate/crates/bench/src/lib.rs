//! Fixtures shared by the benchmarks.

use std::path::PathBuf;
use std::sync::Arc;

use casimir_core::optics::{load_optical_table, TableFormat};
use casimir_core::{DrudeParameters, Extrapolation, OpticalTable, PermittivityModel};

pub fn au_table_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/au_optical.csv")
}

pub fn au_table() -> Arc<OpticalTable> {
    let file = std::fs::File::open(au_table_path()).expect("shipped optical table");
    Arc::new(load_optical_table(std::io::BufReader::new(file), TableFormat::EnergyNkCsv).expect("valid table"))
}

pub fn au_model(variant: Extrapolation) -> PermittivityModel {
    PermittivityModel::new(variant, au_table(), DrudeParameters::default()).expect("table covers the model")
}
