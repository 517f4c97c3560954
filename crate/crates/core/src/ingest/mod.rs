//! Dataset manifests, synthetic toy data, vowel/consonant classes, and
//! analysis-table assembly.

pub mod assemble;
pub mod manifest;
pub mod phoneclass;
pub mod toy;

pub use assemble::{
    assemble_gating_table, assemble_word_table, GATING_TABLE_COLUMNS, WORD_TABLE_COLUMNS,
};
pub use manifest::{
    read_vector, tokenize, write_vector, CaptionEntry, ImageEntry, Manifest,
    MANIFEST_SCHEMA_VERSION,
};
pub use phoneclass::PhoneClasses;
pub use toy::{generate_toy, ToyOutput, ToySpec};
