//! Text tables over report directories.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::run::{mean, mode_name, read_metrics, SummaryFile, METRICS_FILE, SUMMARY_FILE};
use crate::store::read_json;

/// One line per run with time per step, mADE and mFDE. Averages are
/// recomputed from `metrics.csv` and must match the summary exactly.
pub fn evaluate(dir: &Path) -> Result<String> {
    let summary: SummaryFile = read_json(&dir.join(SUMMARY_FILE))?;
    let rows = read_metrics(&dir.join(METRICS_FILE))?;
    let mut out = String::new();
    let _ = writeln!(out, "report: {}", dir.display());
    let _ = writeln!(
        out,
        "{:<10} {:>7} {:>8} {:>14} {:>9} {:>9}",
        "mode", "repeats", "scored", "time/step [s]", "mADE [m]", "mFDE [m]"
    );
    for run in &summary.runs {
        let mine: Vec<_> = rows.iter().filter(|r| r.mode == run.mode).collect();
        let made = mean(mine.iter().map(|r| r.made));
        let mfde = mean(mine.iter().map(|r| r.mfde));
        let same = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        if mine.len() != run.n_rows || !same(made, run.mean_made) || !same(mfde, run.mean_mfde) {
            return Err(Error::Schema {
                path: dir.join(METRICS_FILE),
                reason: format!("{} rows disagree with {SUMMARY_FILE}", mode_name(run.mode)),
            });
        }
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>8} {:>14.4} {:>9.3} {:>9.3}",
            mode_name(run.mode),
            run.seeds.len(),
            run.n_rows,
            run.mean_step_time_s,
            made,
            mfde
        );
    }
    if let Some(r) = summary.time_ratio_hybrid_over_baseline {
        let _ = writeln!(out, "hybrid / baseline time per step: {r:.3}");
    }
    Ok(out)
}
