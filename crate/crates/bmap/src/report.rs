//! CSV reports: header row, comma separated, scores with six decimals.

use std::fmt::Write as _;

use bmap_core::loss::LossKind;
use bmap_core::metrics::MetricReport;
use bmap_core::train::TrainRecord;

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn relaxed_headers(tolerances: &[u32]) -> String {
    tolerances.iter().map(|t| format!(",rb_dsc_{t}")).collect()
}

/// One row per foreground class followed by a `mean` row over the classes
/// present in either volume.
pub fn metrics_csv(report: &MetricReport) -> String {
    let tols: Vec<u32> = report.tolerances().collect();
    let mut s = format!("class,g_dsc,b_dsc{}\n", relaxed_headers(&tols));
    for c in &report.classes {
        let _ = write!(s, "{},{},{}", c.class, num(c.g_dsc), num(c.b_dsc));
        for (_, v) in &c.relaxed {
            let _ = write!(s, ",{}", num(*v));
        }
        s.push('\n');
    }
    let _ = write!(
        s,
        "mean,{},{}",
        num(report.mean_g_dsc),
        num(report.mean_b_dsc)
    );
    for (_, v) in &report.mean_relaxed {
        let _ = write!(s, ",{}", num(*v));
    }
    s.push('\n');
    s
}

/// `iteration,loss` for every iteration plus validation means where an
/// evaluation ran; the metric cells are empty elsewhere.
pub fn train_csv(record: &TrainRecord, tolerances: &[u32]) -> String {
    let mut s = format!(
        "iteration,loss,g_dsc,b_dsc{}\n",
        relaxed_headers(tolerances)
    );
    let mut evals = record.evals.iter().peekable();
    for (i, loss) in record.losses.iter().enumerate() {
        let iteration = i + 1;
        let _ = write!(s, "{iteration},{}", num(*loss));
        match evals.next_if(|e| e.iteration == iteration) {
            Some(e) => {
                let _ = write!(s, ",{},{}", num(e.mean_g_dsc()), num(e.mean_b_dsc()));
                for k in 0..tolerances.len() {
                    let n = e.reports.len().max(1) as f64;
                    let v: f64 = e.reports.iter().map(|r| r.mean_relaxed[k].1).sum::<f64>() / n;
                    let _ = write!(s, ",{}", num(v));
                }
            }
            None => s.push_str(&",".repeat(2 + tolerances.len())),
        }
        s.push('\n');
    }
    s
}

/// One loss's outcome in a loss comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub kind: LossKind,
    pub report: MetricReport,
    pub loss_first: f64,
    pub loss_last: f64,
}

pub fn comparison_csv(rows: &[ComparisonRow], window: usize) -> String {
    let tols: Vec<u32> = rows
        .first()
        .map(|r| r.report.tolerances().collect())
        .unwrap_or_default();
    let mut s = format!(
        "loss,g_dsc,b_dsc{},loss_first{window},loss_last{window}\n",
        relaxed_headers(&tols)
    );
    for r in rows {
        let _ = write!(
            s,
            "{},{},{}",
            r.kind.name(),
            num(r.report.mean_g_dsc),
            num(r.report.mean_b_dsc)
        );
        for (_, v) in &r.report.mean_relaxed {
            let _ = write!(s, ",{}", num(*v));
        }
        let _ = writeln!(s, ",{},{}", num(r.loss_first), num(r.loss_last));
    }
    s
}

/// Per-class scores of every compared loss, for plotting.
pub fn comparison_classes_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::new();
    for (k, r) in rows.iter().enumerate() {
        let body = metrics_csv(&r.report);
        let mut lines = body.lines();
        let header = lines.next().unwrap_or_default();
        if k == 0 {
            let _ = writeln!(s, "loss,{header}");
        }
        for line in lines {
            let _ = writeln!(s, "{},{line}", r.kind.name());
        }
    }
    s
}
