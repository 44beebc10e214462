//! CSV tables. Files are assembled in memory and only written once a command
//! has finished, so a failed run never leaves a partial table behind.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use bbis_core::harness::{
    CrossValidation, NaiveCv, NaiveMatch, ReplicationRow, SummaryRow, VarianceRatioRow,
};

pub const REPLICATION_HEADER: [&str; 10] = [
    "method", "beta", "h", "n", "rep", "seed", "var_hat", "cvar_hat", "cvar_se", "status",
];
pub const SUMMARY_HEADER: [&str; 8] = [
    "method",
    "beta",
    "h",
    "n",
    "reps",
    "rel_rmse_var",
    "rel_rmse_cvar",
    "mean_cvar",
];
pub const CROSSVAL_HEADER: [&str; 7] = [
    "beta",
    "h",
    "r",
    "successes",
    "mean_cvar",
    "cv_cvar",
    "selected",
];
pub const VARRATIO_HEADER: [&str; 5] = ["beta", "h", "cv_is", "cv_naive", "naive_status"];
pub const NAIVE_MATCH_HEADER: [&str; 5] =
    ["beta", "n", "rel_rmse_cvar", "target_rel_rmse", "matched"];

/// A finished table waiting to be written.
pub struct Table {
    pub file_name: &'static str,
    pub bytes: Vec<u8>,
}

/// Shortest decimal form that round-trips; empty when absent.
fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn build<const N: usize>(
    file_name: &'static str,
    header: [&str; N],
    rows: Vec<[String; N]>,
) -> Table {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    Table {
        file_name,
        bytes: w.into_inner().expect("in-memory flush"),
    }
}

pub fn replication_table(file_name: &'static str, rows: &[ReplicationRow]) -> Table {
    let rows = rows
        .iter()
        .map(|r| {
            [
                r.method.as_str().to_string(),
                r.beta.to_string(),
                num(r.h),
                r.n.to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
                num(r.var_hat),
                num(r.cvar_hat),
                num(r.cvar_se),
                r.status.as_str().to_string(),
            ]
        })
        .collect();
    build(file_name, REPLICATION_HEADER, rows)
}

pub fn summary_table(rows: &[SummaryRow]) -> Table {
    let rows = rows
        .iter()
        .map(|r| {
            [
                r.method.as_str().to_string(),
                r.beta.to_string(),
                num(r.h),
                r.n.to_string(),
                r.reps.to_string(),
                num(r.rel_rmse_var),
                num(r.rel_rmse_cvar),
                num(r.mean_cvar),
            ]
        })
        .collect();
    build("summary.csv", SUMMARY_HEADER, rows)
}

pub fn crossval_table(runs: &[CrossValidation]) -> Table {
    let rows = runs
        .iter()
        .flat_map(|cv| {
            cv.points.iter().map(move |p| {
                [
                    cv.beta.to_string(),
                    p.h.to_string(),
                    num(p.r),
                    p.successes.to_string(),
                    num(p.mean_cvar),
                    num(p.cv_cvar),
                    (p.h == cv.selected_h).to_string(),
                ]
            })
        })
        .collect();
    build("crossval.csv", CROSSVAL_HEADER, rows)
}

pub fn varratio_table(rows: &[VarianceRatioRow]) -> Table {
    let rows = rows
        .iter()
        .map(|r| {
            let (cv, status) = match r.cv_naive {
                NaiveCv::Value(v) => (Some(v), "ok"),
                NaiveCv::Infeasible => (None, "infeasible"),
                NaiveCv::Unavailable => (None, "unavailable"),
            };
            [
                r.beta.to_string(),
                r.h.to_string(),
                num(r.cv_is),
                num(cv),
                status.to_string(),
            ]
        })
        .collect();
    build("varratio.csv", VARRATIO_HEADER, rows)
}

pub fn naive_match_table(m: &NaiveMatch) -> Table {
    let rows = m
        .trace
        .iter()
        .map(|&(n, rel)| {
            [
                m.beta.to_string(),
                n.to_string(),
                num(rel),
                m.target_rel_rmse.to_string(),
                (Some(n) == m.matched_n).to_string(),
            ]
        })
        .collect();
    build("naive_match.csv", NAIVE_MATCH_HEADER, rows)
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn write_atomic(dir: &Path, file_name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
    let path = dir.join(file_name);
    let tmp = dir.join(format!(".{file_name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}
