//! Results table. Rows are recomputed from the score files on disk, so the
//! summary can never drift from the emitted scores.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use periocular_core::eval::{compute_det, ScoreSet};
use serde::Serialize;

use crate::error::{CliError, Result, StageExt};

pub const SYSTEMS_FILE: &str = "systems.txt";
pub const SCORES_DIR: &str = "scores";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub system: String,
    pub eer_percent: f64,
    pub frr_at_far_1pct_percent: f64,
    pub genuine: usize,
    pub impostor: usize,
}

/// File name for a row id: `lbp/chi2` becomes `lbp_chi2`, `fusion:lbp+hog`
/// becomes `fusion-lbp+hog`.
pub fn file_stem(system: &str) -> String {
    system.replace('/', "_").replace(':', "-")
}

pub fn score_path(out: &Path, system: &str) -> PathBuf {
    out.join(SCORES_DIR)
        .join(format!("{}.csv", file_stem(system)))
}

pub fn read_scores(path: &Path) -> Result<ScoreSet> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::data("report", format!("{}: {e}", path.display())))?;
    ScoreSet::read_csv(std::io::BufReader::new(file)).stage("report")
}

pub fn summary_row(scores: &ScoreSet) -> Result<SummaryRow> {
    let s = compute_det(scores).stage("report")?.summary();
    Ok(SummaryRow {
        system: scores.comparator_id.clone(),
        eer_percent: 100.0 * s.eer,
        frr_at_far_1pct_percent: 100.0 * s.frr_at_far_1pct,
        genuine: s.genuine,
        impostor: s.impostor,
    })
}

/// Row ids listed in `systems.txt`, one per line.
pub fn read_systems(out: &Path) -> Result<Vec<String>> {
    let path = out.join(SYSTEMS_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::data("report", format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

pub fn write_systems(out: &Path, systems: &[String]) -> Result<()> {
    let mut text = systems.join("\n");
    text.push('\n');
    std::fs::write(out.join(SYSTEMS_FILE), text).stage("report")
}

/// Builds the table from `<out>/scores`, in `systems.txt` order.
pub fn build_summary(out: &Path) -> Result<Vec<SummaryRow>> {
    read_systems(out)?
        .iter()
        .map(|id| {
            let scores = read_scores(&score_path(out, id))?;
            if &scores.comparator_id != id {
                return Err(CliError::data(
                    "report",
                    format!(
                        "score file for {id} names comparator {:?}",
                        scores.comparator_id
                    ),
                ));
            }
            summary_row(&scores)
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    for r in rows {
        wr.serialize(r)
            .map_err(|e| CliError::internal("report", e))?;
    }
    if rows.is_empty() {
        wr.write_record([
            "system",
            "eer_percent",
            "frr_at_far_1pct_percent",
            "genuine",
            "impostor",
        ])
        .map_err(|e| CliError::internal("report", e))?;
    }
    let bytes = wr
        .into_inner()
        .map_err(|e| CliError::internal("report", e))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Markdown table: one row per system with EER and FRR at FAR = 1%.
pub fn summary_markdown(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    s.push_str("| System | EER (%) | FRR @ FAR=1% (%) | Genuine | Impostor |\n");
    s.push_str("|---|---:|---:|---:|---:|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {:.2} | {:.2} | {} | {} |",
            r.system, r.eer_percent, r.frr_at_far_1pct_percent, r.genuine, r.impostor
        );
    }
    s
}

/// Writes `summary.csv` and `summary.md` under `out`.
pub fn write_report(out: &Path) -> Result<Vec<SummaryRow>> {
    let rows = build_summary(out)?;
    std::fs::write(out.join("summary.csv"), summary_csv(&rows)?).stage("report")?;
    std::fs::write(out.join("summary.md"), summary_markdown(&rows)).stage("report")?;
    Ok(rows)
}
