//! Result-file formats of the two experiments.
//!
//! Every file starts with a `# vgslab ...` provenance line carrying the
//! seeds that produced it; readers skip `#` lines. No timestamps anywhere,
//! so reruns with identical inputs are byte-identical.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gating::{GatingResult, WordRecognitionResult};
use crate::retrieval::p10_histogram;

pub const WORD_RESULTS_HEADER: &str = "token_id,word,speaker_id,n_frames,n_phones,p_at_10";

pub fn write_word_results_csv(
    path: &Path,
    provenance: &str,
    results: &[WordRecognitionResult],
) -> Result<()> {
    let mut out = format!("# {provenance}\n{WORD_RESULTS_HEADER}\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.utterance_id, r.word, r.speaker_id, r.n_frames, r.n_phones, r.p_at_10
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_word_results_csv(path: &Path) -> Result<Vec<WordRecognitionResult>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in data_lines(&text, WORD_RESULTS_HEADER) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::ingest(format!(
                "{}: bad word-results row '{line}'",
                path.display()
            )));
        }
        out.push(WordRecognitionResult {
            utterance_id: f[0].to_string(),
            word: f[1].to_string(),
            speaker_id: f[2].to_string(),
            n_frames: parse_field(f[3], path, "n_frames")?,
            n_phones: parse_field(f[4], path, "n_phones")?,
            p_at_10: parse_field(f[5], path, "p_at_10")?,
        });
    }
    if out.is_empty() {
        return Err(Error::ingest(format!("{}: no result rows", path.display())));
    }
    Ok(out)
}

pub const GATING_RESULTS_HEADER: &str =
    "token_id,word,speaker_id,prefix_len,n_phones,prefix_frames,p_at_10,first_decile,last_decile";

pub fn write_gating_results_csv(
    path: &Path,
    provenance: &str,
    results: &[GatingResult],
) -> Result<()> {
    let mut out = format!("# {provenance}\n{GATING_RESULTS_HEADER}\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.utterance_id,
            r.word,
            r.speaker_id,
            r.prefix_len,
            r.n_phones,
            r.prefix_frames,
            r.p_at_10,
            r.first_decile,
            r.last_decile
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_gating_results_csv(path: &Path) -> Result<Vec<GatingResult>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in data_lines(&text, GATING_RESULTS_HEADER) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::ingest(format!(
                "{}: bad gating row '{line}'",
                path.display()
            )));
        }
        out.push(GatingResult {
            utterance_id: f[0].to_string(),
            word: f[1].to_string(),
            speaker_id: f[2].to_string(),
            prefix_len: parse_field(f[3], path, "prefix_len")?,
            n_phones: parse_field(f[4], path, "n_phones")?,
            prefix_frames: parse_field(f[5], path, "prefix_frames")?,
            p_at_10: parse_field(f[6], path, "p_at_10")?,
            first_decile: parse_field(f[7], path, "first_decile")?,
            last_decile: parse_field(f[8], path, "last_decile")?,
        });
    }
    if out.is_empty() {
        return Err(Error::ingest(format!("{}: no result rows", path.display())));
    }
    Ok(out)
}

/// Per-word token count, mean, and median P@10; the median is the
/// lower-middle of the sorted scores, matching the rank-median convention.
pub fn word_summary(results: &[WordRecognitionResult]) -> Vec<(String, usize, f64, f64)> {
    let mut by_word: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for r in results {
        by_word.entry(r.word.clone()).or_default().push(r.p_at_10);
    }
    by_word
        .into_iter()
        .map(|(word, mut scores)| {
            scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = scores.len();
            let mean = scores.iter().sum::<f64>() / n as f64;
            let median = scores[(n - 1) / 2];
            (word, n, mean, median)
        })
        .collect()
}

pub const WORD_SUMMARY_HEADER: &str = "word,n_tokens,mean_p_at_10,median_p_at_10";

pub fn write_word_summary_csv(
    path: &Path,
    provenance: &str,
    summary: &[(String, usize, f64, f64)],
) -> Result<()> {
    let mut out = format!("# {provenance}\n{WORD_SUMMARY_HEADER}\n");
    for (word, n, mean, median) in summary {
        out.push_str(&format!("{word},{n},{mean},{median}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub const HISTOGRAM_HEADER: &str = "bin,lower,upper,count";

/// Histogram rows over ten bins of width 0.1 (the last bin closed at 1).
pub fn write_histogram_csv(path: &Path, provenance: &str, values: &[f64]) -> Result<()> {
    let bins = p10_histogram(values);
    let mut out = format!("# {provenance}\n{HISTOGRAM_HEADER}\n");
    for (i, count) in bins.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            i as f64 / 10.0,
            (i + 1) as f64 / 10.0,
            count
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub const HEATMAP_HEADER: &str = "word,d1,d2,d3,d4,d5,d6,d7,d8,d9,d10";

pub fn write_heatmap_csv(
    path: &Path,
    provenance: &str,
    heatmap: &[(String, [f64; 10])],
) -> Result<()> {
    let mut out = format!("# {provenance}\n{HEATMAP_HEADER}\n");
    for (word, row) in heatmap {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{word},{}\n", cells.join(",")));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn data_lines<'a>(text: &'a str, expected_header: &str) -> impl Iterator<Item = &'a str> {
    let expected = expected_header.to_string();
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter(move |l| *l != expected)
}

fn parse_field<T: std::str::FromStr>(raw: &str, path: &Path, field: &str) -> Result<T> {
    raw.parse::<T>().map_err(|_| {
        Error::ingest(format!(
            "{}: field {field} has unparsable value '{raw}'",
            path.display()
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("vgslab_gating_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn word_results_roundtrip() {
        let results = vec![WordRecognitionResult {
            utterance_id: "u1".into(),
            word: "bike".into(),
            speaker_id: "s1".into(),
            n_frames: 30,
            n_phones: 3,
            p_at_10: 0.4,
        }];
        let path = tmp().join("p10.csv");
        write_word_results_csv(&path, "vgslab words seed=7", &results).unwrap();
        let back = read_word_results_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].word, "bike");
        assert_eq!(back[0].p_at_10, 0.4);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vgslab words seed=7\n"));
    }

    #[test]
    fn gating_results_roundtrip() {
        let results = vec![GatingResult {
            utterance_id: "u1".into(),
            word: "cow".into(),
            speaker_id: "s1".into(),
            prefix_len: 1,
            n_phones: 2,
            prefix_frames: 6,
            p_at_10: 0.3,
            first_decile: 1,
            last_decile: 5,
        }];
        let path = tmp().join("gating.csv");
        write_gating_results_csv(&path, "vgslab gate", &results).unwrap();
        let back = read_gating_results_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].first_decile, 1);
        assert_eq!(back[0].last_decile, 5);
    }

    #[test]
    fn summary_uses_lower_middle_median() {
        let mk = |p: f64| WordRecognitionResult {
            utterance_id: format!("u{p}"),
            word: "cow".into(),
            speaker_id: "s".into(),
            n_frames: 10,
            n_phones: 2,
            p_at_10: p,
        };
        let summary = word_summary(&[mk(0.2), mk(0.4), mk(0.8), mk(1.0)]);
        assert_eq!(summary.len(), 1);
        let (_, n, mean, median) = &summary[0];
        assert_eq!(*n, 4);
        assert!((mean - 0.6).abs() < 1e-12);
        assert_eq!(*median, 0.4);
    }

    #[test]
    fn histogram_file_has_ten_rows() {
        let path = tmp().join("hist.csv");
        write_histogram_csv(&path, "prov", &[0.0, 0.45, 1.0]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("bin,"))
            .collect();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[4], "5,0.4,0.5,1");
        assert_eq!(rows[9], "10,0.9,1,1");
    }
}
