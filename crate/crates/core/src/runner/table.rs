use super::{RunError, RunReport};
use crate::eval::EvalError;

/// One row per report, e.g. `Implicit RAG (Full)`, with a column for each
/// metric the reports carry, rendered to two decimals.
pub fn emit_report_table(reports: &[RunReport]) -> Result<String, RunError> {
    let first = reports
        .first()
        .ok_or_else(|| RunError::Config("no reports to tabulate".into()))?;
    let mut columns: Option<Vec<&'static str>> = None;
    for r in reports {
        if r.dataset != first.dataset {
            return Err(EvalError::HeterogeneousMetrics.into());
        }
        if let Some(agg) = &r.aggregate {
            let names: Vec<_> = agg.present().into_iter().map(|(n, _)| n).collect();
            match &columns {
                Some(c) if *c != names => return Err(EvalError::HeterogeneousMetrics.into()),
                Some(_) => {}
                None => columns = Some(names),
            }
        }
    }
    let columns = columns.unwrap_or_default();
    let rows: Vec<(String, Vec<String>)> = reports
        .iter()
        .map(|r| {
            let label = format!("{} ({})", r.strategy.display_name(), r.label);
            let values = match &r.aggregate {
                Some(agg) => agg.present().into_iter().map(|(_, v)| format!("{v:.2}")).collect(),
                None => vec!["—".to_string(); columns.len()],
            };
            (label, values)
        })
        .collect();
    let label_width = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max("Method".len());
    let widths: Vec<usize> = columns.iter().map(|c| c.len().max(4)).collect();
    let mut out = format!("{:<label_width$}", "Method");
    for (c, w) in columns.iter().zip(&widths) {
        out.push_str(&format!("  {c:>w$}"));
    }
    out.push('\n');
    for (label, values) in rows {
        out.push_str(&format!("{label:<label_width$}"));
        for (v, w) in values.iter().zip(&widths) {
            out.push_str(&format!("  {v:>w$}"));
        }
        out.push('\n');
    }
    Ok(out)
}
