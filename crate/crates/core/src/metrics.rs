//! Pixel-level segmentation scores: accuracy, precision, recall, F1 and IoU,
//! per class (one-vs-rest) and macro-averaged, plus tabular reports.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{LabelMap, MAX_CLASS};
use crate::species::SPECIES;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.tn += rhs.tn;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

fn check_dims(pred: &LabelMap, gt: &LabelMap) -> Result<()> {
    if pred.dimensions() != gt.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: gt.dimensions(),
            found: pred.dimensions(),
        });
    }
    Ok(())
}

/// One-vs-rest counts for class `cls`.
pub fn confusion(pred: &LabelMap, gt: &LabelMap, cls: u8) -> Result<ConfusionCounts> {
    check_dims(pred, gt)?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.classes().iter().zip(gt.classes()) {
        match (p == cls, g == cls) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// One-vs-rest counts for every class value 0..=33 in a single pass.
pub fn confusion_all(pred: &LabelMap, gt: &LabelMap) -> Result<Vec<ConfusionCounts>> {
    check_dims(pred, gt)?;
    let n = MAX_CLASS as usize + 1;
    let mut tp = vec![0u64; n];
    let mut pred_count = vec![0u64; n];
    let mut gt_count = vec![0u64; n];
    for (&p, &g) in pred.classes().iter().zip(gt.classes()) {
        pred_count[p as usize] += 1;
        gt_count[g as usize] += 1;
        if p == g {
            tp[p as usize] += 1;
        }
    }
    let total = pred.classes().len() as u64;
    Ok((0..n)
        .map(|c| {
            let fp = pred_count[c] - tp[c];
            let fn_ = gt_count[c] - tp[c];
            ConfusionCounts::new(tp[c], total - tp[c] - fp - fn_, fp, fn_)
        })
        .collect())
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    if c.total() == 0 {
        return Err(Error::EmptyCounts);
    }
    Ok(ratio(c.tp + c.tn, c.total()))
}

pub fn precision(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fp)
}

pub fn recall(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fn_)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let (p, r) = (precision(c), recall(c));
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn iou(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fp + c.fn_)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    #[serde(rename = "class")]
    pub class_name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub accuracy: f64,
}

impl MetricsRow {
    pub fn from_counts(class_name: impl Into<String>, c: &ConfusionCounts) -> Result<Self> {
        Ok(Self {
            class_name: class_name.into(),
            precision: precision(c),
            recall: recall(c),
            f1: f1(c),
            iou: iou(c),
            accuracy: accuracy(c)?,
        })
    }

    fn values(&self) -> [f64; 5] {
        [self.precision, self.recall, self.f1, self.iou, self.accuracy]
    }
}

pub const AVERAGE_LABEL: &str = "Average";

/// Unweighted mean of every score over the rows.
pub fn macro_average(rows: &[MetricsRow]) -> Result<MetricsRow> {
    if rows.is_empty() {
        return Err(Error::EmptyRowSet);
    }
    let n = rows.len() as f64;
    let mut sums = [0.0; 5];
    for row in rows {
        for (s, v) in sums.iter_mut().zip(row.values()) {
            *s += v;
        }
    }
    Ok(MetricsRow {
        class_name: AVERAGE_LABEL.into(),
        precision: sums[0] / n,
        recall: sums[1] / n,
        f1: sums[2] / n,
        iou: sums[3] / n,
        accuracy: sums[4] / n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "md" | "markdown" => Ok(Self::Markdown),
            other => Err(Error::InvalidParameter(format!("unknown report format {other:?}"))),
        }
    }
}

const COLUMNS: [&str; 6] = ["class", "precision", "recall", "f1", "iou", "accuracy"];

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders one line per row in column order `class, precision, recall, f1,
/// iou, accuracy` with two decimals, followed by the macro average when there
/// is at least one row.
pub fn table_report(rows: &[MetricsRow], format: ReportFormat) -> String {
    let mut out = String::new();
    let mut line = |cells: Vec<String>| match format {
        ReportFormat::Csv => {
            let cells: Vec<String> = cells.iter().map(|c| csv_field(c)).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        ReportFormat::Markdown => {
            writeln!(out, "| {} |", cells.join(" | ")).unwrap();
        }
    };
    line(COLUMNS.iter().map(|s| s.to_string()).collect());
    if format == ReportFormat::Markdown {
        line(vec!["---".into(); COLUMNS.len()]);
    }
    let render = |row: &MetricsRow| {
        let mut cells = vec![row.class_name.clone()];
        cells.extend(row.values().iter().map(|v| format!("{v:.2}")));
        cells
    };
    for row in rows {
        line(render(row));
    }
    if let Ok(avg) = macro_average(rows) {
        line(render(&avg));
    }
    out
}

/// Reads rows written by [`table_report`] in CSV form. A trailing average
/// row is kept as an ordinary row.
pub fn parse_report_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

fn label_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
            {
                out.push(path.strip_prefix(dir).expect("under root").to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn class_name(cls: u8) -> String {
    match cls {
        0 => "background".into(),
        c if (c as usize) <= SPECIES.len() => SPECIES[c as usize - 1].into(),
        c => format!("class {c}"),
    }
}

/// Scores every species class found in either directory. Label files are
/// paired by relative path; counts are summed over all images before the
/// scores are formed.
pub fn evaluate_label_dirs(pred_dir: &Path, gt_dir: &Path) -> Result<Vec<MetricsRow>> {
    for dir in [pred_dir, gt_dir] {
        if !dir.is_dir() {
            return Err(Error::RootNotFound(dir.into()));
        }
    }
    let files = label_files(gt_dir)?;
    if files.is_empty() {
        return Err(Error::NoImagesFound(gt_dir.into()));
    }
    let mut totals = vec![ConfusionCounts::default(); MAX_CLASS as usize + 1];
    let mut present = BTreeSet::new();
    for rel in &files {
        let pred_path = pred_dir.join(rel);
        if !pred_path.is_file() {
            return Err(Error::FileNotFound(pred_path));
        }
        let gt = LabelMap::load(gt_dir.join(rel))?;
        let pred = LabelMap::load(&pred_path)?;
        for (cls, c) in confusion_all(&pred, &gt)?.into_iter().enumerate() {
            if cls > 0 && c.tp + c.fp + c.fn_ > 0 {
                present.insert(cls as u8);
            }
            totals[cls] += c;
        }
    }
    present
        .into_iter()
        .map(|cls| MetricsRow::from_counts(class_name(cls), &totals[cls as usize]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> (LabelMap, LabelMap) {
        (
            LabelMap::new(2, 2, vec![1, 1, 0, 0]).unwrap(),
            LabelMap::new(2, 2, vec![1, 0, 0, 0]).unwrap(),
        )
    }

    #[test]
    fn enumerated_example() {
        let (pred, gt) = two_by_two();
        let c = confusion(&pred, &gt, 1).unwrap();
        assert_eq!(c, ConfusionCounts::new(1, 2, 1, 0));
        assert_eq!(accuracy(&c).unwrap(), 0.75);
        assert_eq!(precision(&c), 0.5);
        assert_eq!(recall(&c), 1.0);
        assert!((f1(&c) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&c), 0.5);
    }

    #[test]
    fn perfect_and_absent() {
        let (_, gt) = two_by_two();
        let c = confusion(&gt, &gt, 1).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        assert_eq!(accuracy(&c).unwrap(), 1.0);
        let c = confusion(&gt, &gt, 5).unwrap();
        assert_eq!(c, ConfusionCounts::new(0, 4, 0, 0));
        assert_eq!([precision(&c), recall(&c), f1(&c), iou(&c)], [0.0; 4]);
        assert!(matches!(accuracy(&ConfusionCounts::default()), Err(Error::EmptyCounts)));
    }

    #[test]
    fn dimension_mismatch() {
        let a = LabelMap::new(2, 2, vec![0; 4]).unwrap();
        let b = LabelMap::new(4, 1, vec![0; 4]).unwrap();
        assert!(matches!(confusion(&a, &b, 1), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn all_classes_agree_with_single_class() {
        let pred = LabelMap::new(3, 3, vec![0, 1, 2, 2, 2, 1, 0, 0, 3]).unwrap();
        let gt = LabelMap::new(3, 3, vec![0, 1, 1, 2, 0, 1, 3, 0, 3]).unwrap();
        let all = confusion_all(&pred, &gt).unwrap();
        for cls in 0..=MAX_CLASS {
            assert_eq!(all[cls as usize], confusion(&pred, &gt, cls).unwrap());
        }
        let correct = pred.classes().iter().zip(gt.classes()).filter(|(a, b)| a == b).count() as u64;
        assert_eq!(all.iter().map(|c| c.tp).sum::<u64>(), correct);
    }

    fn row(name: &str, v: f64) -> MetricsRow {
        MetricsRow {
            class_name: name.into(),
            precision: v,
            recall: v,
            f1: v,
            iou: v,
            accuracy: v,
        }
    }

    #[test]
    fn averages() {
        assert!(matches!(macro_average(&[]), Err(Error::EmptyRowSet)));
        let single = row("a", 0.3);
        let avg = macro_average(std::slice::from_ref(&single)).unwrap();
        assert_eq!(avg.values(), single.values());
        let avg = macro_average(&[row("a", 0.0), row("b", 1.0)]).unwrap();
        assert_eq!(avg.values(), [0.5; 5]);
    }

    #[test]
    fn reports() {
        assert_eq!(table_report(&[], ReportFormat::Csv), "class,precision,recall,f1,iou,accuracy\n");
        let text = table_report(&[row("Proteus", 0.125)], ReportFormat::Csv);
        assert_eq!(
            text,
            "class,precision,recall,f1,iou,accuracy\nProteus,0.12,0.12,0.12,0.12,0.12\nAverage,0.12,0.12,0.12,0.12,0.12\n"
        );
        let md = table_report(&[row("a, b", 1.0)], ReportFormat::Markdown);
        assert!(md.starts_with("| class | precision |"));
        assert!(md.contains("| a, b | 1.00 |"));
        let csv = table_report(&[row("a, b", 1.0)], ReportFormat::Csv);
        let parsed = parse_report_csv(&csv).unwrap();
        assert_eq!(parsed[0].class_name, "a, b");
        assert_eq!(parsed.len(), 2);
    }
}
