//! Fit report formats: a full CSV and a human-readable text report whose
//! headline section lists only the effects with p < 0.05.

use std::path::Path;

use crate::error::Result;
use crate::stats::lmm::LmmFit;
use crate::stats::wald::WaldRow;

pub const FIT_HEADER: &str = "kind,term,estimate,std_error,z_value,p_value,significant";

pub fn write_fit_csv(path: &Path, provenance: &str, fit: &LmmFit, rows: &[WaldRow]) -> Result<()> {
    let mut out = format!("# {provenance}\n{FIT_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "fixed,{},{},{},{},{},{}\n",
            r.term, r.estimate, r.std_error, r.z_value, r.p_value, r.significant
        ));
    }
    for (name, var) in &fit.variance_components {
        out.push_str(&format!(
            "variance,{},{},NA,NA,NA,NA\n",
            name.replace(',', ";"),
            var
        ));
    }
    out.push_str(&format!(
        "residual,residual,{},NA,NA,NA,NA\n",
        fit.residual_variance
    ));
    std::fs::write(path, out)?;
    Ok(())
}

pub fn fit_text_report(provenance: &str, fit: &LmmFit, rows: &[WaldRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{provenance}\n"));
    out.push_str(&format!(
        "converged in {} EM iterations; restricted log-likelihood {:.6}\n\n",
        fit.iterations,
        fit.loglik_trace.last().copied().unwrap_or(f64::NAN)
    ));

    out.push_str("significant fixed effects (p < 0.05):\n");
    let sig: Vec<&WaldRow> = rows.iter().filter(|r| r.significant).collect();
    if sig.is_empty() {
        out.push_str("  (none)\n");
    }
    for r in &sig {
        out.push_str(&format!(
            "  {:<32} {:>12.4} +/- {:>8.4}  p = {:.4}\n",
            r.term, r.estimate, r.std_error, r.p_value
        ));
    }

    out.push_str("\nall fixed effects:\n");
    for r in rows {
        out.push_str(&format!(
            "  {:<32} {:>12.4} +/- {:>8.4}  z = {:>8.3}  p = {:.4}{}\n",
            r.term,
            r.estimate,
            r.std_error,
            r.z_value,
            r.p_value,
            if r.significant { "  *" } else { "" }
        ));
    }

    out.push_str("\nvariance components:\n");
    for (name, var) in &fit.variance_components {
        out.push_str(&format!(
            "  {:<32} {:>12.6} (sd {:.6})\n",
            name,
            var,
            var.sqrt()
        ));
    }
    out.push_str(&format!(
        "  {:<32} {:>12.6} (sd {:.6})\n",
        "residual",
        fit.residual_variance,
        fit.residual_variance.sqrt()
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_fit() -> (LmmFit, Vec<WaldRow>) {
        let fit = LmmFit {
            fixed_names: vec!["intercept".into(), "x".into()],
            beta: vec![0.4, 0.01],
            se: vec![0.05, 0.05],
            variance_components: vec![("g (intercept)".into(), 0.2)],
            residual_variance: 0.5,
            loglik_trace: vec![-10.0, -9.5],
            iterations: 2,
        };
        let rows = crate::stats::wald::wald_report(&fit).unwrap();
        (fit, rows)
    }

    #[test]
    fn csv_has_fixed_variance_and_residual_rows() {
        let (fit, rows) = sample_fit();
        let dir = std::env::temp_dir().join("vgslab_fitcsv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("fit.csv");
        write_fit_csv(&path, "prov", &fit, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], FIT_HEADER);
        assert!(lines[2].starts_with("fixed,intercept,0.4,"));
        assert!(text.contains("variance,g (intercept),0.2,NA,NA,NA,NA"));
        assert!(text.contains("residual,residual,0.5,NA,NA,NA,NA"));
    }

    #[test]
    fn headline_lists_only_significant_effects() {
        let (fit, rows) = sample_fit();
        let report = fit_text_report("prov", &fit, &rows);
        let headline = report
            .split("all fixed effects")
            .next()
            .unwrap()
            .to_string();
        assert!(headline.contains("intercept"));
        assert!(!headline.contains("\n  x "));
        assert!(report.contains("variance components"));
    }
}
