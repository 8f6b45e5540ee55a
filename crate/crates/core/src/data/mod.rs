//! Datasets: synthetic generators with planted relevance, CSV I/O,
//! standardization and stratified splits.

mod csv_io;
mod dataset;
mod synthetic;

pub use csv_io::{load_csv, read_csv, write_csv, CATEGORY_COLUMN};
pub use dataset::{split_standardized, standardize, Dataset, Standardization};
pub use synthetic::{gen_synthetic, generate, Generator, Synthetic, SyntheticKind, SyntheticSpec, SKILL_A, SKILL_B};
