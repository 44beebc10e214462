//! The four experiment commands. Each returns its tables and an exit code;
//! nothing touches the filesystem here.

use bbis_core::harness::{
    derive_seed, naive_matching_n, resolve_h, summarize, ReplicationRow, RunStatus,
};
use bbis_core::{
    cross_validate_h, estimate, run_replications, variance_ratio_study, HRule, IsConfig, Method,
    ReplicationTable,
};

use crate::config::RunConfig;
use crate::output::{self, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ESTIMATION: i32 = 2;

pub struct CommandOutput {
    pub tables: Vec<Table>,
    pub exit_code: i32,
    /// Non-fatal conditions recorded in the manifest.
    pub notes: Vec<String>,
}

/// A failure that prevents any table from being produced.
pub struct CommandError {
    pub exit_code: i32,
    pub message: String,
}

impl CommandError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            exit_code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn estimation(e: bbis_core::Error) -> Self {
        Self {
            exit_code: EXIT_ESTIMATION,
            message: e.to_string(),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

/// One estimate per (method, level), using replication index 0.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    let exp = &cfg.experiment;
    let mut rows = Vec::new();
    for method in cfg.method.methods() {
        let hs: Vec<Option<f64>> = match method {
            Method::Importance => resolve_h(exp)
                .map_err(CommandError::estimation)?
                .into_iter()
                .map(Some)
                .collect(),
            Method::Naive => vec![None; exp.betas.len()],
        };
        for (beta_index, (&beta, &h)) in exp.betas.iter().zip(&hs).enumerate() {
            let seed = derive_seed(exp.base_seed, beta_index, method, 0);
            let is_cfg = IsConfig {
                beta,
                h,
                n: exp.n,
                seed,
                method,
            };
            let mut row = ReplicationRow {
                method,
                beta_index,
                beta,
                h,
                n: exp.n,
                rep: 0,
                seed,
                var_hat: None,
                cvar_hat: None,
                cvar_se: None,
                status: RunStatus::Ok,
            };
            match estimate(&exp.dist, &exp.loss, &is_cfg) {
                Ok(rep) => {
                    println!(
                        "{method:>5}  beta {beta:e}  VaR {:.6}  CVaR {:.6} ± {:.6}",
                        rep.var_hat, rep.cvar_hat, rep.cvar_se
                    );
                    row.var_hat = Some(rep.var_hat);
                    row.cvar_hat = Some(rep.cvar_hat);
                    row.cvar_se = Some(rep.cvar_se);
                }
                Err(e) => {
                    eprintln!("{method:>5}  beta {beta:e}  failed: {e}");
                    row.status = RunStatus::from_error(&e);
                }
            }
            rows.push(row);
        }
    }
    let failed = rows.iter().filter(|r| r.status != RunStatus::Ok).count();
    Ok(CommandOutput {
        tables: vec![output::replication_table("estimates.csv", &rows)],
        exit_code: if failed == 0 {
            EXIT_OK
        } else {
            EXIT_ESTIMATION
        },
        notes: (failed > 0)
            .then(|| format!("{failed} estimate(s) failed"))
            .into_iter()
            .collect(),
    })
}

/// Coefficient of variation of CVaR for every grid value of `h`, per level.
pub fn cmd_crossval(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    let exp = &cfg.experiment;
    let HRule::Grid(grid) = &exp.h_rule else {
        return Err(CommandError::usage(
            "crossval needs `h` to be a grid of candidate values",
        ));
    };
    let mut runs = Vec::new();
    for &beta in &exp.betas {
        let cv = cross_validate_h(exp, grid, beta, exp.reps_cv).map_err(|e| CommandError {
            exit_code: EXIT_ESTIMATION,
            message: format!("beta {beta:e}: {e}"),
        })?;
        println!("beta {beta:e}: selected h = {}", cv.selected_h);
        for p in &cv.points {
            println!(
                "  h {:<6} r {:<10} CV {}",
                p.h,
                fmt_opt(p.r),
                fmt_opt(p.cv_cvar)
            );
        }
        runs.push(cv);
    }
    Ok(CommandOutput {
        tables: vec![output::crossval_table(&runs)],
        exit_code: EXIT_OK,
        notes: Vec::new(),
    })
}

fn print_summary(table: &ReplicationTable) -> Vec<bbis_core::harness::SummaryRow> {
    let summary = summarize(table, None);
    for s in &summary {
        println!(
            "{:>5}  beta {:e}  reps {:>3}  rel RMSE VaR {}  CVaR {}  mean CVaR {}{}",
            s.method,
            s.beta,
            s.reps,
            fmt_opt(s.rel_rmse_var),
            fmt_opt(s.rel_rmse_cvar),
            fmt_opt(s.mean_cvar),
            if s.flagged {
                "  [flagged: most replications failed]"
            } else {
                ""
            }
        );
    }
    summary
}

/// Relative RMSE against the tail level for both methods, plus the naive
/// sample size needed to match IS precision at the largest level.
pub fn cmd_benchmark(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    let exp = &cfg.experiment;
    let mut table = run_replications(exp, Method::Importance).map_err(CommandError::estimation)?;
    table.extend(run_replications(exp, Method::Naive).map_err(CommandError::estimation)?);
    let summary = print_summary(&table);

    let mut tables = vec![
        output::replication_table("replications.csv", &table.rows),
        output::summary_table(&summary),
    ];
    let mut notes = Vec::new();
    let largest = (0..exp.betas.len())
        .max_by(|&a, &b| exp.betas[a].total_cmp(&exp.betas[b]))
        .expect("validated config has a level");
    let target = summary
        .iter()
        .find(|s| s.method == Method::Importance && s.beta == exp.betas[largest])
        .and_then(|s| s.rel_rmse_cvar);
    match target {
        Some(target) => {
            let m = naive_matching_n(
                exp,
                largest,
                target,
                exp.n,
                cfg.naive_budget,
                cfg.match_reps,
            )
            .map_err(CommandError::estimation)?;
            match m.matched_n {
                Some(n) => println!(
                    "naive matches IS precision {target:.4} at beta {:e} with n = {n}",
                    m.beta
                ),
                None => {
                    let note = format!(
                        "naive budget of {} samples exhausted before matching IS precision {target:.4} at beta {:e}",
                        cfg.naive_budget, m.beta
                    );
                    println!("{note}");
                    notes.push(note);
                }
            }
            tables.push(output::naive_match_table(&m));
        }
        None => {
            let note = "no IS precision available at the largest level; naive matching skipped"
                .to_string();
            println!("{note}");
            notes.push(note);
        }
    }
    Ok(CommandOutput {
        tables,
        exit_code: EXIT_OK,
        notes,
    })
}

/// Coefficient of variation of IS and naive CVaR per level.
pub fn cmd_varratio(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    let rows = variance_ratio_study(&cfg.experiment).map_err(CommandError::estimation)?;
    for r in &rows {
        println!(
            "beta {:e}  h {}  CV IS {}  CV naive {:?}",
            r.beta,
            r.h,
            fmt_opt(r.cv_is),
            r.cv_naive
        );
    }
    Ok(CommandOutput {
        tables: vec![output::varratio_table(&rows)],
        exit_code: EXIT_OK,
        notes: Vec::new(),
    })
}
