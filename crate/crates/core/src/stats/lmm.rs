//! Linear mixed model y = X beta + Z u + e with one variance component per
//! random term (independent diagonal covariance) and residual variance,
//! fitted by EM-REML on the Henderson mixed-model equations.
//!
//! Per iteration, with C = W' W / s2e + blockdiag(0, I/s2g) and
//! W = [X Z], theta = C^{-1} W' y / s2e:
//!
//!   s2g <- (u_g' u_g + tr(C^{-1}_gg)) / q_g
//!   s2e <- (e_hat' e_hat + s2e * ((p + q) - sum_g tr(C^{-1}_gg) / s2g)) / n
//!
//! These are the exact expectation-maximization updates, so the restricted
//! log-likelihood is non-decreasing across iterations and no component can
//! cross zero. A component whose REML estimate sits on the zero boundary
//! decays like 1/iteration under EM instead of converging; once such a
//! component falls below a negligible share of var(y) while still
//! shrinking, it is projected to exactly 0 and its block leaves the
//! system (the exact limit of the equations as that variance tends to 0).
//! The restricted likelihood is evaluated from the same factorization via
//!
//!   -2 l_R = (n - p) ln 2pi + n ln s2e + sum_g q_g ln s2g + ln|C| + y'Py
//!
//! with pinned blocks dropping out of both the determinant and the sum.

use crate::error::{Error, Result};
use crate::stats::design::Design;
use crate::stats::linalg::{Cholesky, Mat};

/// A still-shrinking component below this fraction of var(y) is treated as
/// a zero boundary estimate. The threshold must be reachable within the
/// iteration budget: the boundary crawl obeys s_{t+1} ~ s_t (1 - c s_t)
/// with c of order (observations per level) / residual variance, so
/// reaching a fraction f of var(y) takes about 1 / (c f var_y) iterations.
const PIN_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Relative-change convergence threshold on variance components.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

/// Fitted mixed model.
#[derive(Debug, Clone)]
pub struct LmmFit {
    pub fixed_names: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    /// One (term name, variance) per random term; exactly 0 for components
    /// projected onto the boundary.
    pub variance_components: Vec<(String, f64)>,
    pub residual_variance: f64,
    /// Restricted log-likelihood at each iterate, ending at the final fit.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
}

struct Workspace {
    n: usize,
    p: usize,
    /// (offset into W after the fixed block, width) per random term.
    blocks: Vec<(usize, usize)>,
    wtw: Mat,
    wty: Vec<f64>,
    yty: f64,
    var_y: f64,
}

struct Solved {
    /// Full-length (p + q) solution; pinned blocks are zero.
    theta: Vec<f64>,
    /// Inverse of the reduced coefficient matrix.
    c_inv: Mat,
    /// Reduced position of each kept W column.
    kept: Vec<usize>,
    loglik: f64,
}

impl Workspace {
    fn new(design: &Design) -> Result<Workspace> {
        let n = design.n();
        let p = design.p();
        if n <= p {
            return Err(Error::contract(format!(
                "mixed model: n = {n} rows must exceed p = {p} fixed effects"
            )));
        }
        let mut blocks = Vec::with_capacity(design.z_blocks.len());
        let mut offset = p;
        for b in &design.z_blocks {
            blocks.push((offset, b.z.cols));
            offset += b.z.cols;
        }

        let mut w = Mat::zeros(n, offset);
        for i in 0..n {
            for j in 0..p {
                w.set(i, j, design.x.at(i, j));
            }
            let mut at = p;
            for block in &design.z_blocks {
                for j in 0..block.z.cols {
                    w.set(i, at + j, block.z.at(i, j));
                }
                at += block.z.cols;
            }
        }
        let wtw = w.gram();
        let wty = w.t_mul_vec(&design.y);
        let yty: f64 = design.y.iter().map(|v| v * v).sum();
        let mean_y = design.y.iter().sum::<f64>() / n as f64;
        let var_y = design
            .y
            .iter()
            .map(|v| (v - mean_y) * (v - mean_y))
            .sum::<f64>()
            / (n as f64 - 1.0);
        if var_y <= 0.0 {
            return Err(Error::degenerate("mixed model: response is constant"));
        }
        Ok(Workspace {
            n,
            p,
            blocks,
            wtw,
            wty,
            yty,
            var_y,
        })
    }

    /// Columns participating in the reduced system for the given active
    /// pattern (fixed block plus active random blocks).
    fn kept_columns(&self, active: &[bool]) -> Vec<usize> {
        let mut kept: Vec<usize> = (0..self.p).collect();
        for (g, &(start, len)) in self.blocks.iter().enumerate() {
            if active[g] {
                kept.extend(start..start + len);
            }
        }
        kept
    }

    /// Solve the (reduced) mixed-model equations at fixed variance
    /// components; pinned blocks contribute u = 0.
    fn solve(&self, s2g: &[f64], s2e: f64, active: &[bool]) -> Result<Solved> {
        let kept = self.kept_columns(active);
        let m = kept.len();
        let mut c = Mat::zeros(m, m);
        for (ri, &wi) in kept.iter().enumerate() {
            for (ci, &wj) in kept.iter().enumerate() {
                c.set(ri, ci, self.wtw.at(wi, wj) / s2e);
            }
        }
        // Precision addends for the active random blocks.
        for (g, &(start, len)) in self.blocks.iter().enumerate() {
            if !active[g] {
                continue;
            }
            for w_idx in start..start + len {
                let r = kept.iter().position(|&k| k == w_idx).expect("kept");
                c.add_at(r, r, 1.0 / s2g[g]);
            }
        }
        let chol = Cholesky::factor(&c)?;
        let rhs: Vec<f64> = kept.iter().map(|&k| self.wty[k] / s2e).collect();
        let theta_kept = chol.solve(&rhs);
        let c_inv = chol.inverse();

        let total = self.p + self.blocks.iter().map(|&(_, l)| l).sum::<usize>();
        let mut theta = vec![0.0; total];
        for (ri, &wi) in kept.iter().enumerate() {
            theta[wi] = theta_kept[ri];
        }

        let theta_wty: f64 = kept
            .iter()
            .enumerate()
            .map(|(ri, &wi)| theta_kept[ri] * self.wty[wi])
            .sum();
        let y_p_y = (self.yty - theta_wty) / s2e;
        let mut loglik = -0.5
            * ((self.n - self.p) as f64 * (2.0 * std::f64::consts::PI).ln()
                + self.n as f64 * s2e.ln()
                + chol.log_det()
                + y_p_y);
        for (g, &(_, len)) in self.blocks.iter().enumerate() {
            if active[g] {
                loglik -= 0.5 * len as f64 * s2g[g].ln();
            }
        }

        Ok(Solved {
            theta,
            c_inv,
            kept,
            loglik,
        })
    }
}

impl Solved {
    /// Trace of the inverse over one block's kept positions.
    fn block_trace(&self, start: usize, len: usize) -> f64 {
        (start..start + len)
            .filter_map(|w_idx| self.kept.iter().position(|&k| k == w_idx))
            .map(|r| self.c_inv.at(r, r))
            .sum()
    }
}

/// Generalized-least-squares solve at known variance components: returns
/// (beta, se, restricted log-likelihood).
pub fn solve_at(design: &Design, s2g: &[f64], s2e: f64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if s2g.len() != design.z_blocks.len() {
        return Err(Error::contract(
            "solve_at: one variance component per random term required",
        ));
    }
    if s2e <= 0.0 || s2g.iter().any(|&v| v <= 0.0) {
        return Err(Error::contract(
            "solve_at: variance components must be positive",
        ));
    }
    let ws = Workspace::new(design)?;
    let active = vec![true; s2g.len()];
    let solved = ws.solve(s2g, s2e, &active)?;
    let beta = solved.theta[..ws.p].to_vec();
    let se: Vec<f64> = (0..ws.p).map(|j| solved.c_inv.at(j, j).sqrt()).collect();
    Ok((beta, se, solved.loglik))
}

fn quadratic_form(wtw: &Mat, theta: &[f64]) -> f64 {
    let m = theta.len();
    let mut quad = 0.0;
    for (a, &ta) in theta.iter().enumerate().take(m) {
        if ta == 0.0 {
            continue;
        }
        for (b, &tb) in theta.iter().enumerate().take(m) {
            quad += ta * wtw.at(a, b) * tb;
        }
    }
    quad
}

/// Fit the model by EM-REML. With no random terms this reduces to ordinary
/// least squares with the usual unbiased residual variance.
pub fn fit_lmm(design: &Design, options: &FitOptions) -> Result<LmmFit> {
    let ws = Workspace::new(design)?;
    let n_blocks = design.z_blocks.len();
    let floor = 1e-12 * ws.var_y;

    if n_blocks == 0 {
        // OLS: beta from the normal equations, s2 = RSS / (n - p).
        let solved = ws.solve(&[], 1.0, &[])?;
        let beta = solved.theta.clone();
        let rss = {
            let fitted_dot: f64 = beta.iter().zip(&ws.wty).map(|(b, w)| b * w).sum();
            ws.yty - 2.0 * fitted_dot + quadratic_form(&ws.wtw, &beta)
        };
        let s2e = rss / (ws.n - ws.p) as f64;
        let final_solved = ws.solve(&[], s2e, &[])?;
        let se: Vec<f64> = (0..ws.p)
            .map(|j| final_solved.c_inv.at(j, j).sqrt())
            .collect();
        return Ok(LmmFit {
            fixed_names: design.x_names.clone(),
            beta: final_solved.theta[..ws.p].to_vec(),
            se,
            variance_components: vec![],
            residual_variance: s2e,
            loglik_trace: vec![final_solved.loglik],
            iterations: 0,
        });
    }

    // EM-REML initialization: split var(y) between the residual and the
    // random terms.
    let mut s2e = ws.var_y / 2.0;
    let mut s2g = vec![ws.var_y / (2.0 * n_blocks as f64); n_blocks];
    let mut active = vec![true; n_blocks];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=options.max_iter {
        iterations = iter;
        let solved = ws.solve(&s2g, s2e, &active)?;
        trace.push(solved.loglik);

        let mut new_s2g = s2g.clone();
        let mut trace_over_s2g = 0.0;
        let mut q_active = 0usize;
        for (g, &(start, len)) in ws.blocks.iter().enumerate() {
            if !active[g] {
                continue;
            }
            q_active += len;
            let u_g = &solved.theta[start..start + len];
            let uu: f64 = u_g.iter().map(|v| v * v).sum();
            let tr_g = solved.block_trace(start, len);
            new_s2g[g] = ((uu + tr_g) / len as f64).max(floor);
            trace_over_s2g += tr_g / s2g[g];
        }

        let ehat_sq = {
            let theta_wty: f64 = solved
                .theta
                .iter()
                .zip(&ws.wty)
                .map(|(t, w)| t * w)
                .sum();
            ws.yty - 2.0 * theta_wty + quadratic_form(&ws.wtw, &solved.theta)
        };
        let new_s2e = ((ehat_sq + s2e * ((ws.p + q_active) as f64 - trace_over_s2g))
            / ws.n as f64)
            .max(floor);

        // Project boundary components onto zero: still shrinking while
        // already negligible against the response variance.
        for g in 0..n_blocks {
            if active[g] && new_s2g[g] < PIN_FRACTION * ws.var_y && new_s2g[g] < s2g[g] {
                active[g] = false;
                new_s2g[g] = 0.0;
            }
        }

        let mut rel = (new_s2e - s2e).abs() / s2e.max(floor);
        for g in 0..n_blocks {
            if active[g] {
                rel = rel.max((new_s2g[g] - s2g[g]).abs() / s2g[g].max(floor));
            }
        }
        if std::env::var_os("VGSLAB_EM_DEBUG").is_some() {
            eprintln!(
                "iter {iter}: s2e={new_s2e:.6e} s2g={:?} rel={rel:.3e} ll={:.9}",
                new_s2g
                    .iter()
                    .map(|v| format!("{v:.6e}"))
                    .collect::<Vec<_>>(),
                solved.loglik
            );
        }
        s2e = new_s2e;
        s2g = new_s2g;
        if rel < options.tol {
            converged = true;
            break;
        }
    }

    let final_solved = ws.solve(&s2g, s2e, &active)?;
    trace.push(final_solved.loglik);

    if !converged {
        let tail: Vec<String> = trace
            .iter()
            .rev()
            .take(5)
            .rev()
            .map(|l| format!("{l:.9}"))
            .collect();
        return Err(Error::numeric(format!(
            "EM-REML did not converge in {} iterations (restricted log-likelihood tail: {})",
            options.max_iter,
            tail.join(", ")
        )));
    }

    let se: Vec<f64> = (0..ws.p)
        .map(|j| final_solved.c_inv.at(j, j).sqrt())
        .collect();
    Ok(LmmFit {
        fixed_names: design.x_names.clone(),
        beta: final_solved.theta[..ws.p].to_vec(),
        se,
        variance_components: design
            .z_blocks
            .iter()
            .map(|b| b.name.clone())
            .zip(s2g.iter().copied())
            .collect(),
        residual_variance: s2e,
        loglik_trace: trace,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;
    use crate::stats::design::{build_design, ModelSpec, RandomTerm};
    use crate::stats::table::AnalysisTable;

    /// Simulated one-way layout: y_ij = mu + a_i + e_ij.
    fn one_way_table(
        rng: &mut Rng,
        groups: usize,
        per_group: usize,
        sd_group: f64,
        sd_resid: f64,
    ) -> AnalysisTable {
        let mut t = AnalysisTable::new(vec!["y".into(), "g".into()]);
        for g in 0..groups {
            let a = sd_group * rng.next_normal();
            for _ in 0..per_group {
                let y = 1.5 + a + sd_resid * rng.next_normal();
                t.push_row(vec![y.to_string(), format!("g{g:02}")]).unwrap();
            }
        }
        t
    }

    fn one_way_spec() -> ModelSpec {
        ModelSpec {
            response: "y".into(),
            fixed: vec![],
            random: vec![RandomTerm {
                group: "g".into(),
                kind: "intercept".into(),
                covariate: None,
            }],
        }
    }

    #[test]
    fn no_random_terms_equals_ols() {
        let mut rng = Rng::new(1);
        let mut t = AnalysisTable::new(vec!["y".into(), "x1".into(), "x2".into()]);
        for _ in 0..40 {
            let x1 = rng.uniform(-2.0, 2.0);
            let x2 = rng.uniform(-2.0, 2.0);
            let y = 0.5 + 0.8 * x1 - 0.3 * x2 + 0.1 * rng.next_normal();
            t.push_row(vec![y.to_string(), x1.to_string(), x2.to_string()])
                .unwrap();
        }
        let spec = ModelSpec {
            response: "y".into(),
            fixed: vec!["x1".into(), "x2".into()],
            random: vec![],
        };
        let design = build_design(&t, &spec).unwrap();
        let fit = fit_lmm(&design, &FitOptions::default()).unwrap();

        // OLS oracle via the normal equations on the same design matrix.
        let xtx = design.x.gram();
        let xty = design.x.t_mul_vec(&design.y);
        let beta_ols = Cholesky::factor(&xtx).unwrap().solve(&xty);
        for (a, b) in fit.beta.iter().zip(&beta_ols) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(fit.variance_components.is_empty());
    }

    #[test]
    fn balanced_one_way_matches_closed_form_reml() {
        let mut rng = Rng::new(42);
        let (groups, per_group) = (20usize, 10usize);
        let t = one_way_table(&mut rng, groups, per_group, 1.0, 1.0);
        let design = build_design(&t, &one_way_spec()).unwrap();
        let fit = fit_lmm(&design, &FitOptions::default()).unwrap();

        // Closed-form balanced-case REML from the ANOVA mean squares.
        let y = t.numeric_column("y").unwrap();
        let m = per_group as f64;
        let grand = y.iter().sum::<f64>() / y.len() as f64;
        let mut ssb = 0.0;
        let mut ssw = 0.0;
        for g in 0..groups {
            let slice = &y[g * per_group..(g + 1) * per_group];
            let mean_g = slice.iter().sum::<f64>() / m;
            ssb += m * (mean_g - grand) * (mean_g - grand);
            for v in slice {
                ssw += (v - mean_g) * (v - mean_g);
            }
        }
        let msb = ssb / (groups as f64 - 1.0);
        let msw = ssw / (groups as f64 * (m - 1.0));
        let s2a_closed = (msb - msw) / m;
        assert!(s2a_closed > 0.0, "simulate a clearly positive group variance");

        assert!(
            (fit.residual_variance - msw).abs() < 1e-6,
            "residual {} vs closed form {}",
            fit.residual_variance,
            msw
        );
        assert!(
            (fit.variance_components[0].1 - s2a_closed).abs() < 1e-6,
            "group {} vs closed form {}",
            fit.variance_components[0].1,
            s2a_closed
        );
    }

    #[test]
    fn restricted_loglik_is_monotone_across_em_iterations() {
        let mut rng = Rng::new(7);
        let t = one_way_table(&mut rng, 12, 6, 0.8, 1.2);
        let design = build_design(&t, &one_way_spec()).unwrap();
        let fit = fit_lmm(&design, &FitOptions::default()).unwrap();
        assert!(fit.loglik_trace.len() >= 2);
        for w in fit.loglik_trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-10,
                "log-likelihood decreased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn boundary_component_is_projected_to_zero() {
        // Seeded so the between-group mean square falls below the within
        // one: the REML estimate sits on the zero boundary. The fit must
        // pin it at exactly 0 and still converge with a monotone trace.
        let mut rng = Rng::new(13);
        let t = one_way_table(&mut rng, 8, 12, 0.0, 1.0);
        let design = build_design(&t, &one_way_spec()).unwrap();
        let fit = fit_lmm(&design, &FitOptions::default()).unwrap();
        assert_eq!(fit.variance_components[0].1, 0.0);
        assert!(fit.residual_variance > 0.5);
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-10);
        }
    }

    #[test]
    fn known_components_match_explicit_gls() {
        let mut rng = Rng::new(9);
        let groups = 5;
        let per_group = 4;
        let mut t = AnalysisTable::new(vec!["y".into(), "x".into(), "g".into()]);
        for g in 0..groups {
            let a = 0.7 * rng.next_normal();
            for _ in 0..per_group {
                let x = rng.uniform(-1.0, 1.0);
                let y = 0.3 + 0.9 * x + a + 0.5 * rng.next_normal();
                t.push_row(vec![y.to_string(), x.to_string(), format!("g{g}")])
                    .unwrap();
            }
        }
        let spec = ModelSpec {
            response: "y".into(),
            fixed: vec!["x".into()],
            random: vec![RandomTerm {
                group: "g".into(),
                kind: "intercept".into(),
                covariate: None,
            }],
        };
        let design = build_design(&t, &spec).unwrap();
        let (s2a, s2e) = (0.49, 0.25);
        let (beta, _, _) = solve_at(&design, &[s2a], s2e).unwrap();

        // Explicit GLS with V = s2a Z Z' + s2e I on this small n.
        let n = design.n();
        let mut v = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut zz = 0.0;
                for k in 0..design.z_blocks[0].z.cols {
                    zz += design.z_blocks[0].z.at(i, k) * design.z_blocks[0].z.at(j, k);
                }
                v.set(i, j, s2a * zz + if i == j { s2e } else { 0.0 });
            }
        }
        let v_chol = Cholesky::factor(&v).unwrap();
        // beta_gls = (X' V^-1 X)^-1 X' V^-1 y
        let p = design.p();
        let mut vinv_x = Mat::zeros(n, p);
        for j in 0..p {
            let col = v_chol.solve(&design.x.column(j));
            for i in 0..n {
                vinv_x.set(i, j, col[i]);
            }
        }
        let vinv_y = v_chol.solve(&design.y);
        let mut xtvx = Mat::zeros(p, p);
        let mut xtvy = vec![0.0; p];
        for a in 0..p {
            for b in 0..p {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += design.x.at(i, a) * vinv_x.at(i, b);
                }
                xtvx.set(a, b, acc);
            }
            xtvy[a] = (0..n).map(|i| design.x.at(i, a) * vinv_y[i]).sum();
        }
        let beta_gls = Cholesky::factor(&xtvx).unwrap().solve(&xtvy);
        for (a, b) in beta.iter().zip(&beta_gls) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn non_convergence_error_carries_trace() {
        let mut rng = Rng::new(12);
        let t = one_way_table(&mut rng, 10, 5, 1.0, 1.0);
        let design = build_design(&t, &one_way_spec()).unwrap();
        let options = FitOptions {
            tol: 1e-12,
            max_iter: 2,
        };
        match fit_lmm(&design, &options) {
            Err(Error::Numeric(msg)) => {
                assert!(msg.contains("did not converge"));
                assert!(msg.contains("log-likelihood tail"));
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn collinear_fixed_effects_report_rank_deficiency() {
        let mut rng = Rng::new(13);
        let mut t = AnalysisTable::new(vec!["y".into(), "a".into(), "b".into()]);
        for _ in 0..20 {
            let a = rng.uniform(0.0, 1.0);
            // b is an exact affine function of a, so z-scored columns collide.
            let b = 2.0 * a + 3.0;
            let y = a + rng.next_normal();
            t.push_row(vec![y.to_string(), a.to_string(), b.to_string()])
                .unwrap();
        }
        let spec = ModelSpec {
            response: "y".into(),
            fixed: vec!["a".into(), "b".into()],
            random: vec![],
        };
        let design = build_design(&t, &spec).unwrap();
        match fit_lmm(&design, &FitOptions::default()) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("rank-deficient")),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }
}
