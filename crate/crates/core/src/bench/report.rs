use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{BenchError, Category, ScoredResult};

/// Per-model aggregate. Averages run over every task, failed ones included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model_id: String,
    pub total_tasks: usize,
    pub successful_tasks: usize,
    /// Percentage, rounded half-up to one decimal.
    pub success_rate: f64,
    /// Seconds, rounded half-up to two decimals.
    pub avg_duration_s: f64,
    /// Mean total tokens, rounded half-up.
    pub avg_tokens: u64,
    pub avg_input_tokens: u64,
    pub avg_output_tokens: u64,
    /// Success percentage per category, in table order; `None` when the category had no tasks.
    pub per_category: IndexMap<Category, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub markdown: PathBuf,
    pub heatmap: PathBuf,
}

/// `100 * k / n` in tenths of a percent, rounded half-up.
pub fn rate_tenths(k: usize, n: usize) -> u64 {
    assert!(n > 0, "rate over zero tasks");
    let (k, n) = (k as u64, n as u64);
    (2000 * k + n) / (2 * n)
}

fn mean_half_up(sum: u64, n: u64) -> u64 {
    (2 * sum + n) / (2 * n)
}

pub fn aggregate(results: &[ScoredResult], model_id: &str) -> Result<ModelReport, BenchError> {
    if results.is_empty() {
        return Err(BenchError::EmptyResults);
    }
    if let Some(other) = results.iter().find(|r| r.model_id != model_id) {
        return Err(BenchError::MixedModels(format!("expected {model_id}, found {}", other.model_id)));
    }
    let n = results.len() as u64;
    let successful = results.iter().filter(|r| r.success).count();
    let duration_ms: u64 = results.iter().map(|r| (r.duration_s * 1000.0).round().max(0.0) as u64).sum();
    let centis = (duration_ms + 5 * n) / (10 * n);
    let per_category = Category::ALL
        .iter()
        .map(|&c| {
            let in_cat: Vec<_> = results.iter().filter(|r| r.category == c).collect();
            let rate = (!in_cat.is_empty())
                .then(|| rate_tenths(in_cat.iter().filter(|r| r.success).count(), in_cat.len()) as f64 / 10.0);
            (c, rate)
        })
        .collect();
    Ok(ModelReport {
        model_id: model_id.to_string(),
        total_tasks: results.len(),
        successful_tasks: successful,
        success_rate: rate_tenths(successful, results.len()) as f64 / 10.0,
        avg_duration_s: centis as f64 / 100.0,
        avg_tokens: mean_half_up(results.iter().map(|r| r.total_tokens).sum(), n),
        avg_input_tokens: mean_half_up(results.iter().map(|r| r.input_tokens).sum(), n),
        avg_output_tokens: mean_half_up(results.iter().map(|r| r.output_tokens).sum(), n),
        per_category,
    })
}

fn fmt_duration(s: f64) -> String {
    let mut out = format!("{s:.2}");
    if out.ends_with('0') {
        out.pop();
    }
    out
}

fn fmt_grouped(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn render_markdown(reports: &[ModelReport]) -> Result<String, BenchError> {
    if reports.is_empty() {
        return Err(BenchError::EmptyResults);
    }
    let mut md = String::from("| Model | Success Rate | Successful Tasks (n) | Avg. Duration (s) | Avg. Tokens |\n");
    md.push_str("|---|---|---|---|---|\n");
    for r in reports {
        md.push_str(&format!(
            "| {} | {:.1}% | {} | {} | {} |\n",
            r.model_id,
            r.success_rate,
            r.successful_tasks,
            fmt_duration(r.avg_duration_s),
            fmt_grouped(r.avg_tokens)
        ));
    }
    md.push_str("\nAvg. Tokens is the mean of input plus output tokens over all tasks.\n\n");
    for r in reports {
        md.push_str(&format!(
            "- {}: {} tasks, avg. input tokens {}, avg. output tokens {}\n",
            r.model_id,
            r.total_tasks,
            fmt_grouped(r.avg_input_tokens),
            fmt_grouped(r.avg_output_tokens)
        ));
    }
    Ok(md)
}

/// Heatmap matrix: one row per category, one column per model, cells are success percentages.
pub fn render_heatmap_csv(reports: &[ModelReport]) -> Result<String, BenchError> {
    if reports.is_empty() {
        return Err(BenchError::EmptyResults);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| BenchError::Io {
        path: PathBuf::from("heatmap.csv"),
        source: std::io::Error::other(e),
    };
    let mut header = vec!["category".to_string()];
    header.extend(reports.iter().map(|r| r.model_id.clone()));
    w.write_record(&header).map_err(io)?;
    for c in Category::ALL {
        let mut row = vec![c.label().to_string()];
        row.extend(reports.iter().map(|r| match r.per_category.get(&c).copied().flatten() {
            Some(v) => format!("{v:.1}"),
            None => String::new(),
        }));
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| io(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `report.md` and `heatmap.csv` into `out_dir`.
pub fn emit_report(reports: &[ModelReport], out_dir: &Path) -> Result<ReportFiles, BenchError> {
    let md = render_markdown(reports)?;
    let csv = render_heatmap_csv(reports)?;
    let io = |path: PathBuf| move |source| BenchError::Io { path, source };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir.to_path_buf()))?;
    let files = ReportFiles {
        markdown: out_dir.join("report.md"),
        heatmap: out_dir.join("heatmap.csv"),
    };
    std::fs::write(&files.markdown, md).map_err(io(files.markdown.clone()))?;
    std::fs::write(&files.heatmap, csv).map_err(io(files.heatmap.clone()))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouping_and_duration_format() {
        assert_eq!(fmt_grouped(227594), "227,594");
        assert_eq!(fmt_grouped(999), "999");
        assert_eq!(fmt_grouped(1000), "1,000");
        assert_eq!(fmt_duration(416.32), "416.32");
        assert_eq!(fmt_duration(90.9), "90.9");
        assert_eq!(fmt_duration(730.0), "730.0");
    }

    #[test]
    fn rate_rounding() {
        assert_eq!(rate_tenths(13, 15), 867);
        assert_eq!(rate_tenths(12, 15), 800);
        assert_eq!(rate_tenths(1, 8), 125);
        assert_eq!(rate_tenths(1, 3), 333);
        assert_eq!(rate_tenths(2, 3), 667);
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(aggregate(&[], "m"), Err(BenchError::EmptyResults)));
        assert!(matches!(render_markdown(&[]), Err(BenchError::EmptyResults)));
        assert!(matches!(render_heatmap_csv(&[]), Err(BenchError::EmptyResults)));
    }
}
