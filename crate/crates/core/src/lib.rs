//! Desk-scale laboratory for visually grounded speech word recognition.
//!
//! The library trains a dual-encoder speech/image embedding model with a
//! bidirectional batch hinge loss, evaluates isolated-word recognition via
//! image retrieval, runs gating (phoneme-prefix) experiments, and fits
//! linear mixed-effects regressions over lexical and acoustic covariates.
//!
//! Modules follow the pipeline:
//!
//! - [`numcore`]: tensors and reverse-mode autodiff
//! - [`dsp`]: waveform to 39-dim MFCC features
//! - [`lexicon`]: phonemic lexicon, cohort and neighborhood statistics
//! - [`encoders`]: speech encoder (conv + bi-GRU + attention) and image head
//! - [`training`]: hinge loss, Adam, training loop
//! - [`retrieval`]: embedding store, Recall@N, median rank, Precision@10
//! - [`gating`]: phoneme-prefix segmentation and decile heatmaps
//! - [`stats`]: z-scoring, design matrices, EM-REML mixed models, Wald tests
//! - [`ingest`]: manifests, synthetic toy data, analysis-table assembly

pub mod dsp;
pub mod encoders;
pub mod error;
pub mod gating;
pub mod ingest;
pub mod lexicon;
pub mod numcore;
pub mod retrieval;
pub mod stats;
pub mod training;

pub use error::{Error, Result};
