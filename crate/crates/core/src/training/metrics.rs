//! Metrics log format: one CSV row per epoch, preceded by a `#`
//! provenance line carrying the seed and hyperparameters.

use std::path::Path;

use crate::error::Result;
use crate::training::trainer::EpochMetrics;

pub const METRICS_HEADER: &str = "epoch,loss,recall_at_1,recall_at_5,recall_at_10,median_rank";

pub fn write_metrics_csv(path: &Path, provenance: &str, log: &[EpochMetrics]) -> Result<()> {
    let mut out = format!("# {provenance}\n{METRICS_HEADER}\n");
    for m in log {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.epoch, m.loss, m.recall_at_1, m.recall_at_5, m.recall_at_10, m.median_rank
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_layout() {
        let log = vec![EpochMetrics {
            epoch: 1,
            loss: 2.5,
            recall_at_1: 50.0,
            recall_at_5: 75.0,
            recall_at_10: 100.0,
            median_rank: 2,
        }];
        let dir = std::env::temp_dir().join("vgslab_metrics_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("metrics.csv");
        write_metrics_csv(&path, "vgslab train seed=7", &log).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vgslab train seed=7");
        assert_eq!(lines[1], METRICS_HEADER);
        assert_eq!(lines[2], "1,2.5,50,75,100,2");
    }
}
