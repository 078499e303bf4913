//! CSV and markdown emission.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::RunRecord;
use crate::error::{Error, Result};
use crate::eval::MetricReport;
use crate::split::SplitConfig;

pub const METRICS: [&str; 3] = ["recall", "ndcg", "hr"];

fn csv_err(e: csv::Error) -> Error {
    Error::Malformed {
        line: e.position().map_or(0, |p| p.line() as usize),
        reason: e.to_string(),
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Protocol facts written at the top of every results file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolHeader {
    pub reference: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub grid_points: usize,
    pub k: usize,
    pub split: SplitConfig,
    pub seeds: Vec<u64>,
}

impl ProtocolHeader {
    pub fn lines(&self) -> Vec<String> {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        vec![
            format!("protocol: {}", if self.reference { "reference" } else { "override" }),
            format!("batch_size: {}", self.batch_size),
            format!("epochs: {}", self.epochs),
            format!("grid_points: {}", self.grid_points),
            format!("selection: validation recall@{}", self.k),
            format!(
                "split: per-user random holdout, test_ratio {}, val_ratio_of_train {}, seed {}",
                self.split.test_ratio, self.split.val_ratio_of_train, self.split.seed
            ),
            format!("seeds: {}", seeds.join(" ")),
        ]
    }
}

/// `# `-prefixed header lines followed by one CSV row per report.
pub fn results_csv(header: &ProtocolHeader, reports: &[MetricReport]) -> Result<String> {
    let mut out: String = header.lines().iter().map(|l| format!("# {l}\n")).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r).map_err(csv_err)?;
    }
    if reports.is_empty() {
        w.write_record(["model", "extractor_tag", "K", "recall", "ndcg", "hr", "num_evaluated_users", "seed"])
            .map_err(csv_err)?;
    }
    out.push_str(&finish(w)?);
    Ok(out)
}

/// Inverse of [`results_csv`]; header comment lines are skipped.
pub fn parse_results_csv(text: &str) -> Result<Vec<MetricReport>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<MetricReport>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_results_csv(&text)
}

#[derive(Debug, Serialize)]
struct RunRow<'a> {
    model: &'a str,
    extractor_tag: &'a str,
    seed: u64,
    learning_rate: f64,
    reg: f64,
    val_recall: f64,
    val_ndcg: f64,
    val_hr: f64,
    selected: bool,
    test_recall: Option<f64>,
    test_ndcg: Option<f64>,
    test_hr: Option<f64>,
    seconds: f64,
}

/// Every grid point that was trained; `seconds` is the only non-deterministic column.
pub fn runs_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(RunRow {
            model: r.model_name(),
            extractor_tag: r.extractor_tag(),
            seed: r.seed,
            learning_rate: r.point.learning_rate,
            reg: r.point.reg,
            val_recall: r.validation.recall,
            val_ndcg: r.validation.ndcg,
            val_hr: r.validation.hr,
            selected: r.test.is_some(),
            test_recall: r.test.as_ref().map(|t| t.recall),
            test_ndcg: r.test.as_ref().map(|t| t.ndcg),
            test_hr: r.test.as_ref().map(|t| t.hr),
            seconds: r.seconds,
        })
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Mean and sample standard deviation across seeds for one (model, extractor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub extractor_tag: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub seeds: usize,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub ndcg_mean: f64,
    pub ndcg_std: f64,
    pub hr_mean: f64,
    pub hr_std: f64,
}

impl SummaryRow {
    /// The means as a report, for tables.
    pub fn as_report(&self) -> MetricReport {
        MetricReport {
            model_name: self.model.clone(),
            extractor_tag: self.extractor_tag.clone(),
            k: self.k,
            recall: self.recall_mean,
            ndcg: self.ndcg_mean,
            hr: self.hr_mean,
            num_evaluated_users: 0,
            seed: 0,
            num_skipped_users: 0,
        }
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Group reports by (model, extractor) in first-appearance order.
pub fn summarize(reports: &[MetricReport]) -> Vec<SummaryRow> {
    let mut order: Vec<(&str, &str)> = Vec::new();
    let mut groups: HashMap<(&str, &str), Vec<&MetricReport>> = HashMap::new();
    for r in reports {
        let key = (r.model_name.as_str(), r.extractor_tag.as_str());
        groups.entry(key).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        groups.get_mut(&key).expect("inserted").push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let col = |f: fn(&MetricReport) -> f64| mean_std(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (recall_mean, recall_std) = col(|r| r.recall);
            let (ndcg_mean, ndcg_std) = col(|r| r.ndcg);
            let (hr_mean, hr_std) = col(|r| r.hr);
            SummaryRow {
                model: key.0.to_string(),
                extractor_tag: key.1.to_string(),
                k: g[0].k,
                seeds: g.len(),
                recall_mean,
                recall_std,
                ndcg_mean,
                ndcg_std,
                hr_mean,
                hr_std,
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    finish(w)
}

/// Results of every model on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    pub dataset: String,
    pub reports: Vec<MetricReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

pub fn emit_report(tables: &[DatasetTable], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => report_csv(tables),
        ReportFormat::Markdown => Ok(report_markdown(tables)),
    }
}

#[derive(Serialize)]
struct ReportRow<'a> {
    dataset: &'a str,
    model: &'a str,
    extractor_tag: &'a str,
    #[serde(rename = "K")]
    k: usize,
    recall: f64,
    ndcg: f64,
    hr: f64,
}

fn report_csv(tables: &[DatasetTable]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in tables {
        for r in &t.reports {
            w.serialize(ReportRow {
                dataset: &t.dataset,
                model: &r.model_name,
                extractor_tag: &r.extractor_tag,
                k: r.k,
                recall: r.recall,
                ndcg: r.ndcg,
                hr: r.hr,
            })
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    None,
    Best,
    Second,
}

/// Best values are bold, the runner-up underlined. When several cells share
/// the best value they are all bold and nothing is underlined.
pub fn rank_marks(values: &[Option<f64>]) -> Vec<Mark> {
    let present = values.iter().flatten().copied();
    let Some(best) = present.clone().reduce(f64::max) else {
        return vec![Mark::None; values.len()];
    };
    let best_count = present.clone().filter(|&v| v == best).count();
    let second = if best_count > 1 {
        None
    } else {
        present.filter(|&v| v < best).reduce(f64::max)
    };
    values
        .iter()
        .map(|v| match *v {
            Some(v) if v == best => Mark::Best,
            Some(v) if Some(v) == second => Mark::Second,
            _ => Mark::None,
        })
        .collect()
}

/// Fractions are shown as percentages with two decimals.
pub fn percent(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn cell(v: Option<f64>, mark: Mark) -> String {
    match (v, mark) {
        (None, _) => "-".into(),
        (Some(v), Mark::Best) => format!("**{}**", percent(v)),
        (Some(v), Mark::Second) => format!("<u>{}</u>", percent(v)),
        (Some(v), Mark::None) => percent(v),
    }
}

fn report_markdown(tables: &[DatasetTable]) -> String {
    let mut keys: Vec<(String, String)> = Vec::new();
    for t in tables {
        for r in &t.reports {
            let key = (r.model_name.clone(), r.extractor_tag.clone());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
    }
    let labels = ["Recall", "nDCG", "HR"];
    let k = tables.iter().flat_map(|t| t.reports.first()).map(|r| r.k).next().unwrap_or(0);
    let mut columns: Vec<String> = Vec::new();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); keys.len()];
    for t in tables {
        let lookup: BTreeMap<(&str, &str), &MetricReport> = t
            .reports
            .iter()
            .map(|r| ((r.model_name.as_str(), r.extractor_tag.as_str()), r))
            .collect();
        for (m, label) in METRICS.iter().zip(labels) {
            columns.push(if tables.len() > 1 {
                format!("{} {label}@{k}", t.dataset)
            } else {
                format!("{label}@{k}")
            });
            let values: Vec<Option<f64>> = keys
                .iter()
                .map(|(model, tag)| lookup.get(&(model.as_str(), tag.as_str())).and_then(|r| r.metric(m)))
                .collect();
            for (row, (v, mark)) in values.iter().zip(rank_marks(&values)).enumerate() {
                cells[row].push(cell(*v, mark));
            }
        }
    }
    let mut out = format!("| Model | Features | {} |\n", columns.join(" | "));
    out.push_str(&format!("|---|---|{}\n", "---:|".repeat(columns.len())));
    for ((model, tag), row) in keys.iter().zip(cells) {
        out.push_str(&format!("| {model} | {tag} | {} |\n", row.join(" | ")));
    }
    out
}

#[derive(Serialize)]
struct VariationRow<'a> {
    model: &'a str,
    extractor_tag: &'a str,
    variant_tag: &'a str,
    metric: &'a str,
    delta: f64,
}

/// Per-metric differences (variant minus baseline) for boxplot rendering.
pub fn emit_variation_data(baseline: &[MetricReport], variants: &[(String, Vec<MetricReport>)]) -> Result<String> {
    let base: BTreeMap<(&str, &str), &MetricReport> = baseline
        .iter()
        .map(|r| ((r.model_name.as_str(), r.extractor_tag.as_str()), r))
        .collect();
    // header written by hand so an empty variant list still yields the schema
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["model", "extractor_tag", "variant_tag", "metric", "delta"]).map_err(csv_err)?;
    for (tag, reports) in variants {
        let keys: BTreeMap<(&str, &str), &MetricReport> = reports
            .iter()
            .map(|r| ((r.model_name.as_str(), r.extractor_tag.as_str()), r))
            .collect();
        if let Some(missing) = base.keys().find(|k| !keys.contains_key(*k)) {
            return Err(Error::KeyMismatch(format!("variant {tag:?} lacks {}/{}", missing.0, missing.1)));
        }
        if let Some(extra) = keys.keys().find(|k| !base.contains_key(*k)) {
            return Err(Error::KeyMismatch(format!("variant {tag:?} has no baseline for {}/{}", extra.0, extra.1)));
        }
        for (key, b) in &base {
            let v = keys[key];
            for m in METRICS {
                w.serialize(VariationRow {
                    model: key.0,
                    extractor_tag: key.1,
                    variant_tag: tag,
                    metric: m,
                    delta: v.metric(m).expect("known metric") - b.metric(m).expect("known metric"),
                })
                .map_err(csv_err)?;
            }
        }
    }
    finish(w)
}

/// One row of an extraction timing sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub dataset_tag: String,
    pub extractor: String,
    pub batch_size: usize,
    pub seconds: f64,
}

pub fn parse_timings(text: &str) -> Result<Vec<TimingRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

pub fn read_timings(path: impl AsRef<Path>) -> Result<Vec<TimingRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_timings(&text)
}

/// Extractors as rows, (dataset, batch size) as columns, seconds in cells.
pub fn timings_markdown(rows: &[TimingRow]) -> String {
    let mut columns: Vec<(&str, usize)> = rows.iter().map(|r| (r.dataset_tag.as_str(), r.batch_size)).collect();
    columns.sort();
    columns.dedup();
    let mut extractors: Vec<&str> = Vec::new();
    for r in rows {
        if !extractors.contains(&r.extractor.as_str()) {
            extractors.push(&r.extractor);
        }
    }
    let head: Vec<String> = columns.iter().map(|(d, b)| format!("{d} bs={b}")).collect();
    let mut out = format!("| Extractor | {} |\n|---|{}\n", head.join(" | "), "---:|".repeat(columns.len()));
    for e in extractors {
        let cells: Vec<String> = columns
            .iter()
            .map(|&(d, b)| {
                rows.iter()
                    .find(|r| r.extractor == e && r.dataset_tag == d && r.batch_size == b)
                    .map_or("-".into(), |r| format!("{:.2}", r.seconds))
            })
            .collect();
        out.push_str(&format!("| {e} | {} |\n", cells.join(" | ")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(model: &str, recall: f64, ndcg: f64, hr: f64) -> MetricReport {
        MetricReport {
            model_name: model.into(),
            extractor_tag: "none".into(),
            k: 20,
            recall,
            ndcg,
            hr,
            num_evaluated_users: 10,
            seed: 7,
            num_skipped_users: 0,
        }
    }

    fn table(reports: Vec<MetricReport>) -> Vec<DatasetTable> {
        vec![DatasetTable { dataset: "d".into(), reports }]
    }

    #[test]
    fn two_models_one_bold_per_column() {
        let md = emit_report(&table(vec![rep("a", 0.1, 0.2, 0.3), rep("b", 0.2, 0.1, 0.4)]), ReportFormat::Markdown)
            .unwrap();
        let body: Vec<&str> = md.lines().skip(2).collect();
        assert_eq!(body.len(), 2);
        assert_eq!(md.matches("**").count(), 3 * 2);
        assert_eq!(md.matches("<u>").count(), 3);
    }

    #[test]
    fn ties_for_best_are_all_bold() {
        assert_eq!(rank_marks(&[Some(0.5), Some(0.5), Some(0.1)]), vec![Mark::Best, Mark::Best, Mark::None]);
        assert_eq!(
            rank_marks(&[Some(0.5), Some(0.2), Some(0.2), None]),
            vec![Mark::Best, Mark::Second, Mark::Second, Mark::None]
        );
    }

    #[test]
    fn percentages_have_two_decimals() {
        assert_eq!(percent(0.1399), "13.99");
        let md = emit_report(&table(vec![rep("a", 0.1399, 0.0, 1.0)]), ReportFormat::Markdown).unwrap();
        assert!(md.contains("**13.99**"));
    }

    #[test]
    fn results_round_trip() {
        let header = ProtocolHeader {
            reference: true,
            batch_size: 1024,
            epochs: 200,
            grid_points: 10,
            k: 20,
            split: SplitConfig::default(),
            seeds: vec![7],
        };
        let reports = vec![rep("a", 0.1 + 0.2, 1.0 / 3.0, 0.5), rep("b,c", 0.0, 0.0, 0.0)];
        let text = results_csv(&header, &reports).unwrap();
        assert!(text.starts_with("# protocol: reference\n# batch_size: 1024\n# epochs: 200\n"));
        assert_eq!(parse_results_csv(&text).unwrap(), reports);
    }

    #[test]
    fn variation_examples() {
        let base = vec![rep("a", 0.1, 0.2, 0.3), rep("b", 0.1, 0.2, 0.3)];
        let same = emit_variation_data(&base, &[("bs4".into(), base.clone())]).unwrap();
        assert_eq!(same.lines().count(), 1 + 6);
        assert!(same.lines().skip(1).all(|l| l.ends_with(",0.0")));
        let mut bumped = base.clone();
        bumped[1].ndcg += 0.01;
        let out = emit_variation_data(&base, &[("bs4".into(), bumped)]).unwrap();
        assert_eq!(out.lines().skip(1).filter(|l| !l.ends_with(",0.0")).count(), 1);
        let err = emit_variation_data(&base, &[("bs4".into(), base[..1].to_vec())]).unwrap_err();
        assert!(matches!(err, Error::KeyMismatch(_)));
    }

    #[test]
    fn timings_table() {
        let text = "dataset_tag,extractor,batch_size,seconds\noffice,resnet50,1,12.5\noffice,resnet50,32,3.25\n";
        let rows = parse_timings(text).unwrap();
        let md = timings_markdown(&rows);
        assert!(md.contains("| resnet50 | 12.50 | 3.25 |"));
    }

    #[test]
    fn summary_statistics() {
        let rows = summarize(&[rep("a", 0.1, 0.0, 0.0), rep("a", 0.3, 0.0, 0.0), rep("b", 0.5, 0.0, 0.0)]);
        assert_eq!(rows.len(), 2);
        assert!((rows[0].recall_mean - 0.2).abs() < 1e-15);
        assert!((rows[0].recall_std - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(rows[1].recall_std, 0.0);
    }
}
