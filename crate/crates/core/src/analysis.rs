//! Statistics and reports over run records: faithful fractions, CC-SHAP
//! means, point-biserial correlations, rescaled aggregate scores, run-to-run
//! spread and token contribution heatmaps.
//!
//! Standard deviations use the population formula throughout.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ccshap::{binarize, CCShapResult, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::harness::{SampleRecord, TestName};

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub test_name: String,
    /// Samples with a result for this test.
    pub n: usize,
    /// Share of samples judged faithful. For CC-SHAP rows, the share whose
    /// score clears the binarization threshold.
    pub faithful_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_cc_shap: Option<f64>,
    /// Spread of the row's headline value across repeat runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stddev: Option<f64>,
    /// Samples where the test failed to run.
    pub errors: usize,
}

impl TestSummary {
    pub fn is_cc_shap(&self) -> bool {
        self.mean_cc_shap.is_some()
    }

    /// Score on the 0 to 100 scale used for aggregation.
    pub fn score(&self) -> Result<f64> {
        match self.mean_cc_shap {
            Some(m) => rescale_cc_shap(m),
            None => Ok(self.faithful_fraction * 100.0),
        }
    }

    /// The value repeat-run spread is measured on.
    fn headline(&self) -> f64 {
        self.mean_cc_shap.unwrap_or(self.faithful_fraction)
    }
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn population_stddev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    Some((xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt())
}

/// Point-biserial correlation between a binary and a continuous variable.
///
/// `(M1 - M0) / s * sqrt(n1 * n0 / n^2)` with `s` the population standard
/// deviation of `continuous`. `None` when either class is empty or `s` is 0.
pub fn point_biserial(binary: &[bool], continuous: &[f64]) -> Result<Option<f64>> {
    if binary.len() != continuous.len() {
        return Err(Error::LengthMismatch(binary.len(), continuous.len()));
    }
    let ones: Vec<f64> = binary.iter().zip(continuous).filter(|(b, _)| **b).map(|(_, x)| *x).collect();
    let zeros: Vec<f64> = binary.iter().zip(continuous).filter(|(b, _)| !**b).map(|(_, x)| *x).collect();
    let (Some(m1), Some(m0), Some(s)) = (mean(&ones), mean(&zeros), population_stddev(continuous)) else {
        return Ok(None);
    };
    if s == 0.0 {
        return Ok(None);
    }
    let n = continuous.len() as f64;
    let r = (m1 - m0) / s * ((ones.len() as f64) * (zeros.len() as f64) / (n * n)).sqrt();
    Ok(Some(r.clamp(-1.0, 1.0)))
}

/// Maps a CC-SHAP score from `[-1, 1]` onto `[0, 100]`.
pub fn rescale_cc_shap(score: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&score) {
        return Err(Error::OutOfRange(score));
    }
    Ok(50.0 * score + 50.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    All,
    CcOnly,
    NonCc,
}

/// Mean 0-100 score over the selected rows.
pub fn aggregate_scores(summaries: &[TestSummary], which: Selection) -> Result<f64> {
    let scores = summaries
        .iter()
        .filter(|s| match which {
            Selection::All => true,
            Selection::CcOnly => s.is_cc_shap(),
            Selection::NonCc => !s.is_cc_shap(),
        })
        .map(TestSummary::score)
        .collect::<Result<Vec<f64>>>()?;
    mean(&scores).ok_or(Error::EmptySelection)
}

/// How scores from several tasks are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AveragingOrder {
    /// Aggregate each task, then average the task scores.
    #[default]
    PerTask,
    /// Average all selected rows of all tasks at once.
    Pooled,
}

pub fn aggregate_tasks(per_task: &[Vec<TestSummary>], which: Selection, order: AveragingOrder) -> Result<f64> {
    match order {
        AveragingOrder::PerTask => {
            let scores = per_task
                .iter()
                .map(|t| aggregate_scores(t, which))
                .filter(|r| *r != Err(Error::EmptySelection))
                .collect::<Result<Vec<f64>>>()?;
            mean(&scores).ok_or(Error::EmptySelection)
        }
        AveragingOrder::Pooled => {
            let all: Vec<TestSummary> = per_task.iter().flatten().cloned().collect();
            aggregate_scores(&all, which)
        }
    }
}

/// Share of records whose answer equals the gold label.
pub fn accuracy(records: &[SampleRecord]) -> Option<f64> {
    let scored: Vec<&SampleRecord> = records.iter().filter(|r| !r.answer.is_empty()).collect();
    (!scored.is_empty()).then(|| scored.iter().filter(|r| r.answer == r.gold).count() as f64 / scored.len() as f64)
}

fn summarize_one(records: &[SampleRecord], threshold: f64) -> Vec<TestSummary> {
    let mut out = Vec::new();
    for test in TestName::ALL {
        let errors = records.iter().filter(|r| r.errors.iter().any(|e| e.test_name == test.as_str())).count();
        let row = if test.is_cc_shap() {
            let scores: Vec<f64> = records.iter().filter_map(|r| r.cc_shap(test)).map(|c| c.score).collect();
            let faithful = scores.iter().filter(|s| binarize(**s, threshold).unwrap_or(false)).count();
            mean(&scores).map(|m| TestSummary {
                test_name: test.as_str().into(),
                n: scores.len(),
                faithful_fraction: faithful as f64 / scores.len() as f64,
                mean_cc_shap: Some(m),
                stddev: None,
                errors,
            })
        } else {
            let verdicts: Vec<bool> = records.iter().filter_map(|r| r.verdict(test)).map(|v| v.faithful).collect();
            (!verdicts.is_empty()).then(|| TestSummary {
                test_name: test.as_str().into(),
                n: verdicts.len(),
                faithful_fraction: verdicts.iter().filter(|f| **f).count() as f64 / verdicts.len() as f64,
                mean_cc_shap: None,
                stddev: None,
                errors,
            })
        };
        out.extend(row);
    }
    out
}

/// Per-test summary rows in canonical test order. Tests with no result in
/// any record are left out.
///
/// With `repeat_runs`, each row also gets the population standard deviation
/// of its headline value (faithful fraction, or CC-SHAP mean) over `records`
/// and every repeat run.
pub fn summarize(records: &[SampleRecord], repeat_runs: &[Vec<SampleRecord>], threshold: f64) -> Vec<TestSummary> {
    let mut rows = summarize_one(records, threshold);
    if repeat_runs.is_empty() {
        return rows;
    }
    let others: Vec<Vec<TestSummary>> = repeat_runs.iter().map(|r| summarize_one(r, threshold)).collect();
    for row in &mut rows {
        let mut values = vec![row.headline()];
        values.extend(others.iter().filter_map(|o| o.iter().find(|s| s.test_name == row.test_name)).map(TestSummary::headline));
        row.stddev = population_stddev(&values);
    }
    rows
}

/// Summary with the default threshold and no repeat runs.
pub fn summarize_default(records: &[SampleRecord]) -> Vec<TestSummary> {
    summarize(records, &[], DEFAULT_THRESHOLD)
}

/// Point-biserial correlations between each CC-SHAP score (rows) and each
/// behavioral verdict (columns), over records carrying both.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

pub fn correlation_matrix(records: &[SampleRecord]) -> CorrelationMatrix {
    let present = |t: TestName| {
        records.iter().any(|r| if t.is_cc_shap() { r.cc_shap(t).is_some() } else { r.verdict(t).is_some() })
    };
    let rows: Vec<TestName> = TestName::ALL.into_iter().filter(|t| t.is_cc_shap() && present(*t)).collect();
    let cols: Vec<TestName> = TestName::ALL.into_iter().filter(|t| !t.is_cc_shap() && present(*t)).collect();
    let cells = rows
        .iter()
        .map(|&cc| {
            cols.iter()
                .map(|&b| {
                    let (bin, cont): (Vec<bool>, Vec<f64>) = records
                        .iter()
                        .filter_map(|r| Some((r.verdict(b)?.faithful, r.cc_shap(cc)?.score)))
                        .unzip();
                    point_biserial(&bin, &cont).ok().flatten()
                })
                .collect()
        })
        .collect();
    CorrelationMatrix {
        rows: rows.iter().map(|t| t.as_str().to_string()).collect(),
        columns: cols.iter().map(|t| t.as_str().to_string()).collect(),
        cells,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Csv,
    Html,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.2}"))
}

fn table_rows(summaries: &[TestSummary]) -> Vec<[String; 6]> {
    summaries
        .iter()
        .map(|s| {
            [
                s.test_name.clone(),
                s.n.to_string(),
                format!("{:.0}", s.faithful_fraction * 100.0),
                s.mean_cc_shap.map_or_else(String::new, |m| format!("{m:.2}")),
                s.stddev.map_or_else(String::new, |d| format!("{d:.4}")),
                s.errors.to_string(),
            ]
        })
        .collect()
}

const HEADER: [&str; 6] = ["test", "n", "faithful %", "cc-shap mean", "stddev", "errors"];

fn aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out.push_str(&(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ") + "\n"));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

fn escape_html(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    write(&mut w).map_err(|e| Error::Io(e.to_string()))?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Renders the summary table, an accuracy line and optionally the
/// correlation matrix. Undefined correlations print as `nan`.
pub fn render_report(
    summaries: &[TestSummary],
    accuracy: Option<f64>,
    correlations: Option<&CorrelationMatrix>,
    format: ReportFormat,
) -> Result<String> {
    let rows = table_rows(summaries);
    let acc = accuracy.map_or_else(|| "nan".into(), |a| format!("{:.0}", a * 100.0));
    match format {
        ReportFormat::Text => {
            let header: Vec<String> = HEADER.iter().map(|s| s.to_string()).collect();
            let body: Vec<Vec<String>> = rows.iter().map(|r| r.to_vec()).collect();
            let mut out = format!("accuracy %: {acc}\n\n{}", aligned(&header, &body));
            if let Some(m) = correlations {
                let mut header = vec!["point-biserial".to_string()];
                header.extend(m.columns.iter().cloned());
                let body: Vec<Vec<String>> = m
                    .rows
                    .iter()
                    .zip(&m.cells)
                    .map(|(r, cs)| std::iter::once(r.clone()).chain(cs.iter().map(|c| cell(*c))).collect())
                    .collect();
                out.push('\n');
                out.push_str(&aligned(&header, &body));
            }
            Ok(out)
        }
        ReportFormat::Csv => csv_string(|w| {
            w.write_record(HEADER)?;
            for r in &rows {
                w.write_record(r)?;
            }
            w.write_record(["accuracy %", acc.as_str()])?;
            if let Some(m) = correlations {
                w.write_record(std::iter::once("point-biserial").chain(m.columns.iter().map(String::as_str)))?;
                for (r, cs) in m.rows.iter().zip(&m.cells) {
                    w.write_record(std::iter::once(r.clone()).chain(cs.iter().map(|c| cell(*c))))?;
                }
            }
            Ok(())
        }),
        ReportFormat::Html => {
            let mut out = String::from(
                "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Self-consistency report</title></head>\n<body style=\"font-family:sans-serif\">\n",
            );
            let _ = writeln!(out, "<p>Accuracy: {acc}%</p>");
            html_table(&mut out, &HEADER.map(String::from), &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
            if let Some(m) = correlations {
                let mut header = vec!["point-biserial".to_string()];
                header.extend(m.columns.iter().cloned());
                let body: Vec<Vec<String>> = m
                    .rows
                    .iter()
                    .zip(&m.cells)
                    .map(|(r, cs)| std::iter::once(r.clone()).chain(cs.iter().map(|c| cell(*c))).collect())
                    .collect();
                html_table(&mut out, &header, &body);
            }
            out.push_str("</body></html>\n");
            Ok(out)
        }
    }
}

fn html_table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let td = "style=\"border:1px solid #999;padding:2px 6px\"";
    out.push_str("<table style=\"border-collapse:collapse;margin-bottom:1em\">\n<tr>");
    for h in header {
        let _ = write!(out, "<th {td}>{}</th>", escape_html(h));
    }
    out.push_str("</tr>\n");
    for r in rows {
        out.push_str("<tr>");
        for c in r {
            let _ = write!(out, "<td {td}>{}</td>", escape_html(c));
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</table>\n");
}

/// Signed two-decimal percentage with a true minus sign, e.g. `+50.00` or
/// `−50.00`.
pub fn signed_percent(c: f64) -> String {
    let v = c * 100.0;
    let s = format!("{:.2}", v.abs());
    if v < 0.0 && s.bytes().any(|b| matches!(b, b'1'..=b'9')) {
        format!("\u{2212}{s}")
    } else {
        format!("+{s}")
    }
}

fn visible(text: &str) -> String {
    text.trim().replace('\n', "\\n")
}

fn heat_style(c: f64) -> String {
    let a = c.abs().min(1.0);
    if c >= 0.0 {
        format!("background:rgba(220,40,40,{a:.3})")
    } else {
        format!("background:rgba(40,90,220,{a:.3})")
    }
}

/// Renders the task-input tokens of each CC-SHAP result in `record` twice,
/// annotated with the prediction and the explanation contributions times
/// 100.
pub fn heatmap(record: &SampleRecord, format: ReportFormat) -> Result<String> {
    let results: Vec<(&str, &CCShapResult)> = [TestName::CcShapPosthoc, TestName::CcShapCot]
        .into_iter()
        .filter_map(|t| Some((t.as_str(), record.cc_shap(t)?)))
        .collect();
    if results.is_empty() {
        return Err(Error::MissingCCShap);
    }
    match format {
        ReportFormat::Html => {
            let mut out = format!(
                "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{}</title></head>\n<body style=\"font-family:sans-serif\">\n",
                escape_html(&record.id)
            );
            for (name, r) in results {
                let _ = writeln!(out, "<h3>{} {} CC-SHAP {:.4}</h3>", escape_html(&record.id), name, r.score);
                for (label, profile) in [("prediction", &r.profile_prediction), ("explanation", &r.profile_explanation)] {
                    let _ = write!(out, "<p><b>{label}</b> ");
                    for (tok, c) in r.input_tokens.iter().zip(&profile.c) {
                        let _ = write!(
                            out,
                            "<span style=\"{};padding:1px 2px;margin:1px\" title=\"{}\">{}</span>",
                            heat_style(*c),
                            signed_percent(*c),
                            escape_html(&visible(&tok.text))
                        );
                    }
                    out.push_str("</p>\n");
                }
            }
            out.push_str("</body></html>\n");
            Ok(out)
        }
        ReportFormat::Text | ReportFormat::Csv => {
            let mut out = String::new();
            for (name, r) in results {
                let _ = writeln!(out, "{} {} CC-SHAP {:.4}", record.id, name, r.score);
                for (label, profile) in [("prediction", &r.profile_prediction), ("explanation", &r.profile_explanation)] {
                    let cells: Vec<String> = r
                        .input_tokens
                        .iter()
                        .zip(&profile.c)
                        .map(|(t, c)| format!("{}[{}]", visible(&t.text), signed_percent(*c)))
                        .collect();
                    let _ = writeln!(out, "  {label:<11} {}", cells.join(" "));
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavioral::TestVerdict;
    use crate::harness::TaskKind;
    use crate::types::{ContributionProfile, Token};

    fn record(id: &str, verdicts: &[(TestName, bool)], cc: Option<f64>) -> SampleRecord {
        SampleRecord {
            id: id.into(),
            task: TaskKind::ComVE,
            gold: "A".into(),
            prompt: String::new(),
            answer: "A".into(),
            cc_shap_posthoc: cc.map(|s| CCShapResult {
                score: s,
                profile_prediction: ContributionProfile { c: vec![0.5, -0.5], tokens_used: 1, tokens_dropped: 0 },
                profile_explanation: ContributionProfile { c: vec![0.25, 0.75], tokens_used: 1, tokens_dropped: 0 },
                prediction_tokens: vec![Token::new(1, "A")],
                explanation_tokens: vec![Token::new(9, " x")],
                input_tokens: vec![Token::new(20, "Lobsters"), Token::new(21, " <live>")],
            }),
            cc_shap_cot: None,
            verdicts: verdicts
                .iter()
                .map(|(t, f)| TestVerdict {
                    test_name: t.as_str().into(),
                    faithful: *f,
                    original_answer: "A".into(),
                    perturbed_answer: None,
                    edit: None,
                    mention_found: None,
                    notes: None,
                })
                .collect(),
            errors: vec![],
            oracle_calls: 0,
            wall_time_ms: None,
        }
    }

    #[test]
    fn biserial_cases() {
        assert_eq!(point_biserial(&[true, true, false, false], &[2.0, 2.0, 0.0, 0.0]).unwrap(), Some(1.0));
        assert_eq!(point_biserial(&[true, true, true], &[1.0, 2.0, 3.0]).unwrap(), None);
        assert_eq!(point_biserial(&[true, false], &[1.0, 1.0]).unwrap(), None);
        assert_eq!(point_biserial(&[true], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2)));
    }

    #[test]
    fn rescaling_and_aggregation() {
        assert_eq!(rescale_cc_shap(-1.0).unwrap(), 0.0);
        assert_eq!(rescale_cc_shap(1.0).unwrap(), 100.0);
        assert_eq!(rescale_cc_shap(0.0).unwrap(), 50.0);
        assert_eq!(rescale_cc_shap(1.5), Err(Error::OutOfRange(1.5)));
        let row = |name: &str, f: f64, cc: Option<f64>| TestSummary {
            test_name: name.into(),
            n: 1,
            faithful_fraction: f,
            mean_cc_shap: cc,
            stddev: None,
            errors: 0,
        };
        let rows = vec![row("filler-tokens", 0.5, None), row("cc-shap-posthoc", 0.0, Some(0.0))];
        assert_eq!(aggregate_scores(&rows, Selection::All).unwrap(), 50.0);
        assert_eq!(aggregate_scores(&rows, Selection::NonCc).unwrap(), 50.0);
        let cc = vec![row("cc-shap-posthoc", 0.0, Some(-1.0)), row("cc-shap-cot", 1.0, Some(1.0))];
        assert_eq!(aggregate_scores(&cc, Selection::CcOnly).unwrap(), 50.0);
        assert_eq!(aggregate_scores(&cc, Selection::NonCc), Err(Error::EmptySelection));
        let tasks = vec![vec![row("a", 1.0, None)], vec![row("a", 0.0, None), row("b", 0.0, None)]];
        assert_eq!(aggregate_tasks(&tasks, Selection::All, AveragingOrder::PerTask).unwrap(), 50.0);
        assert!((aggregate_tasks(&tasks, Selection::All, AveragingOrder::Pooled).unwrap() - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn summary_rows() {
        let mut recs: Vec<SampleRecord> = (0..100)
            .map(|i| record(&format!("s{i}"), &[(TestName::FillerTokens, i < 58)], None))
            .collect();
        let s = summarize_default(&recs);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].faithful_fraction, 0.58);
        assert_eq!(table_rows(&s)[0][2], "58");
        recs.reverse();
        assert_eq!(summarize_default(&recs), s);
        let cc = vec![record("a", &[], Some(0.1)), record("b", &[], Some(0.2))];
        assert!((summarize_default(&cc)[0].mean_cc_shap.unwrap() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn repeat_run_spread() {
        let run = |k: usize| -> Vec<SampleRecord> {
            (0..10).map(|i| record(&format!("s{i}"), &[(TestName::EarlyAnswering, i < k)], None)).collect()
        };
        let s = summarize(&run(4), &[run(5), run(6)], 0.0);
        let m = 0.5;
        let direct = (((0.4f64 - m).powi(2) + (0.5f64 - m).powi(2) + (0.6f64 - m).powi(2)) / 3.0).sqrt();
        assert!((s[0].stddev.unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn heatmap_annotations() {
        assert_eq!(signed_percent(0.5), "+50.00");
        assert_eq!(signed_percent(-0.5), "\u{2212}50.00");
        assert_eq!(signed_percent(-1e-9), "+0.00");
        let r = record("x", &[], Some(0.3));
        let text = heatmap(&r, ReportFormat::Text).unwrap();
        assert!(text.contains("Lobsters[+50.00] <live>[\u{2212}50.00]"), "{text}");
        let html = heatmap(&r, ReportFormat::Html).unwrap();
        assert!(html.contains("&lt;live&gt;") && !html.contains("http"));
        assert_eq!(html, heatmap(&r, ReportFormat::Html).unwrap());
        assert_eq!(heatmap(&record("y", &[], None), ReportFormat::Text), Err(Error::MissingCCShap));
    }

    #[test]
    fn reports_and_nan() {
        let recs: Vec<SampleRecord> = (0..4)
            .map(|i| record(&format!("s{i}"), &[(TestName::BiasingFeatures, true)], Some(i as f64 / 4.0)))
            .collect();
        let m = correlation_matrix(&recs);
        assert_eq!(m.cells, vec![vec![None]]);
        let s = summarize_default(&recs);
        let text = render_report(&s, accuracy(&recs), Some(&m), ReportFormat::Text).unwrap();
        assert!(text.contains("nan") && text.contains("accuracy %: 100"));
        let mut odd = s.clone();
        odd[0].test_name = "a \"quoted\", name".into();
        let csv = render_report(&odd, None, None, ReportFormat::Csv).unwrap();
        assert!(csv.contains("\"a \"\"quoted\"\", name\""), "{csv}");
        let html = render_report(&s, None, Some(&m), ReportFormat::Html).unwrap();
        assert!(html.starts_with("<!DOCTYPE html>") && html.contains("<td"));
    }
}
