//! Analysis tables: named columns over observation rows, read and written
//! as plain CSV. Cells are stored as text; numeric accessors parse on
//! demand and fail loudly on anything non-numeric or missing.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AnalysisTable {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl AnalysisTable {
    pub fn new(columns: Vec<String>) -> AnalysisTable {
        AnalysisTable {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::ingest(format!(
                "row has {} cells, table has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        if row.iter().any(|c| c.is_empty()) {
            return Err(Error::ingest("row contains an empty cell"));
        }
        if row.iter().any(|c| c.contains(',')) {
            return Err(Error::ingest("cell values must not contain commas"));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }

    fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::contract(format!("unknown column '{name}'")))
    }

    pub fn string_column(&self, name: &str) -> Result<Vec<String>> {
        let idx = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[idx].clone()).collect())
    }

    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[idx].parse::<f64>().map_err(|_| {
                    Error::ingest(format!(
                        "column '{name}' row {i}: '{}' is not numeric",
                        r[idx]
                    ))
                })
            })
            .collect()
    }

    /// Write as CSV; `header_comment` lines are emitted first with a `#`
    /// prefix (seeds, provenance).
    pub fn save(&self, path: &Path, header_comment: &[String]) -> Result<()> {
        let mut out = String::new();
        for line in header_comment {
            out.push_str(&format!("# {line}\n"));
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<AnalysisTable> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Ingest(msg) => Error::ingest(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<AnalysisTable> {
        let mut lines = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::ingest("empty table"))?;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut table = AnalysisTable::new(columns);
        for line in lines {
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            table.push_row(row)?;
        }
        Ok(table)
    }
}

/// (x - mean) / sd with the sample (n-1) standard deviation; the output has
/// mean 0 and sd 1.
pub fn zscore(column: &[f64]) -> Result<Vec<f64>> {
    if column.len() < 2 {
        return Err(Error::degenerate("zscore: need at least 2 values"));
    }
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    let var = column.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::degenerate(
            "zscore: column is constant (zero variance)",
        ));
    }
    let sd = var.sqrt();
    Ok(column.iter().map(|x| (x - mean) / sd).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn zscore_basic_example() {
        let z = zscore(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(z, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn zscore_output_has_zero_mean_unit_sd() {
        let mut rng = Rng::new(1);
        for _ in 0..10 {
            let xs: Vec<f64> = (0..50).map(|_| rng.uniform(-10.0, 10.0)).collect();
            let z = zscore(&xs).unwrap();
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            let sd = (z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (z.len() - 1) as f64)
                .sqrt();
            assert!(mean.abs() < 1e-12);
            assert!((sd - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zscore_is_idempotent() {
        let mut rng = Rng::new(2);
        let xs: Vec<f64> = (0..30).map(|_| rng.uniform(0.0, 5.0)).collect();
        let z1 = zscore(&xs).unwrap();
        let z2 = zscore(&z1).unwrap();
        for (a, b) in z1.iter().zip(&z2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zscore_rejects_constant_columns() {
        assert!(matches!(
            zscore(&[4.0, 4.0, 4.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(zscore(&[4.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn table_roundtrip_and_typed_access() {
        let mut t = AnalysisTable::new(vec![
            "token_id".into(),
            "p_at_10".into(),
            "speaker_id".into(),
        ]);
        t.push_row(vec!["u1".into(), "0.4".into(), "s1".into()]).unwrap();
        t.push_row(vec!["u2".into(), "0.9".into(), "s2".into()]).unwrap();

        let dir = std::env::temp_dir().join("vgslab_table_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        t.save(&path, &["seed=7".into()]).unwrap();
        let back = AnalysisTable::load(&path).unwrap();
        assert_eq!(back.columns(), t.columns());
        assert_eq!(back.numeric_column("p_at_10").unwrap(), vec![0.4, 0.9]);
        assert_eq!(
            back.string_column("speaker_id").unwrap(),
            vec!["s1".to_string(), "s2".to_string()]
        );
        assert!(matches!(
            back.numeric_column("speaker_id"),
            Err(Error::Ingest(_))
        ));
        assert!(matches!(back.numeric_column("nope"), Err(Error::Contract(_))));
    }

    #[test]
    fn incomplete_rows_rejected() {
        let mut t = AnalysisTable::new(vec!["a".into(), "b".into()]);
        assert!(t.push_row(vec!["1".into()]).is_err());
        assert!(t.push_row(vec!["1".into(), "".into()]).is_err());
    }
}
