//! Statistical analysis: z-scored design matrices, EM-REML linear mixed
//! models, and Wald significance reports.

pub mod design;
pub mod linalg;
pub mod lmm;
pub mod report;
pub mod table;
pub mod wald;

pub use design::{build_design, Design, ModelSpec, RandomTerm, ZBlock};
pub use lmm::{fit_lmm, solve_at, FitOptions, LmmFit};
pub use report::{fit_text_report, write_fit_csv, FIT_HEADER};
pub use table::{zscore, AnalysisTable};
pub use wald::{normal_cdf, wald_report, WaldRow};
