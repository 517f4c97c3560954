//! Model specification and design-matrix construction.
//!
//! Fixed-effect terms name numeric table columns; `a:b` denotes the two-way
//! interaction, built as the elementwise product of the two z-scored
//! parents. Every main effect is z-scored; the intercept column of ones
//! comes first. Random terms contribute block columns to Z: an intercept
//! term adds one indicator column per group level, a slope term adds one
//! column per level carrying that level's (z-scored) covariate values.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::linalg::Mat;
use crate::stats::table::{zscore, AnalysisTable};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: String,
    pub fixed: Vec<String>,
    #[serde(default)]
    pub random: Vec<RandomTerm>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomTerm {
    /// Grouping column (categorical).
    pub group: String,
    /// "intercept" or "slope".
    pub kind: String,
    /// Covariate column for slope terms.
    #[serde(default)]
    pub covariate: Option<String>,
}

impl ModelSpec {
    pub fn load(path: &Path) -> Result<ModelSpec> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::ingest(format!("{}: bad model spec: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::ingest(format!("model spec encode: {e}")))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

/// One random-effect block of Z.
#[derive(Debug, Clone)]
pub struct ZBlock {
    /// Human-readable term name, e.g. "speaker_id (intercept)".
    pub name: String,
    pub levels: Vec<String>,
    pub z: Mat,
}

#[derive(Debug, Clone)]
pub struct Design {
    pub y: Vec<f64>,
    pub x: Mat,
    pub x_names: Vec<String>,
    pub z_blocks: Vec<ZBlock>,
}

impl Design {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols
    }

    pub fn q_total(&self) -> usize {
        self.z_blocks.iter().map(|b| b.z.cols).sum()
    }
}

fn zscored(table: &AnalysisTable, column: &str) -> Result<Vec<f64>> {
    let raw = table.numeric_column(column)?;
    zscore(&raw).map_err(|e| match e {
        Error::Degenerate(msg) => Error::degenerate(format!("column '{column}': {msg}")),
        other => other,
    })
}

pub fn build_design(table: &AnalysisTable, spec: &ModelSpec) -> Result<Design> {
    let y = table.numeric_column(&spec.response)?;
    let n = y.len();
    if n == 0 {
        return Err(Error::degenerate("design: table has no rows"));
    }

    let mut x_cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut x_names: Vec<String> = vec!["intercept".into()];
    for term in &spec.fixed {
        let col = match term.split_once(':') {
            None => zscored(table, term)?,
            Some((a, b)) => {
                let za = zscored(table, a)?;
                let zb = zscored(table, b)?;
                za.iter().zip(&zb).map(|(x, y)| x * y).collect()
            }
        };
        x_cols.push(col);
        x_names.push(term.clone());
    }
    let mut x = Mat::zeros(n, x_cols.len());
    for (j, col) in x_cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            x.set(i, j, *v);
        }
    }

    let mut z_blocks = Vec::with_capacity(spec.random.len());
    for term in &spec.random {
        let groups = table.string_column(&term.group)?;
        let levels: Vec<String> = {
            let set: BTreeSet<String> = groups.iter().cloned().collect();
            set.into_iter().collect()
        };
        let level_index = |g: &str| levels.iter().position(|l| l == g).unwrap();
        let (name, values): (String, Vec<f64>) = match term.kind.as_str() {
            "intercept" => (format!("{} (intercept)", term.group), vec![1.0; n]),
            "slope" => {
                let cov = term.covariate.as_deref().ok_or_else(|| {
                    Error::contract(format!(
                        "random slope on '{}' needs a covariate",
                        term.group
                    ))
                })?;
                (
                    format!("{} (slope: {cov})", term.group),
                    zscored(table, cov)?,
                )
            }
            other => {
                return Err(Error::contract(format!(
                    "unknown random term kind '{other}' (expected 'intercept' or 'slope')"
                )))
            }
        };
        let mut z = Mat::zeros(n, levels.len());
        for i in 0..n {
            z.set(i, level_index(&groups[i]), values[i]);
        }
        z_blocks.push(ZBlock { name, levels, z });
    }

    Ok(Design {
        y,
        x,
        x_names,
        z_blocks,
    })
}
