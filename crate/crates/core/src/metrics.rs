//! Segmentation scoring: confusion matrices, per-class and mean IoU / F1 /
//! precision / recall, and cross-modality comparison of metric reports.
//!
//! Ground-truth pixels labelled 255 are skipped. A prediction of 255 on a
//! labelled pixel is a "void" prediction: it is a false negative for the
//! ground-truth class and never a true positive for anything.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cube_io::{LabelMask, IGNORE_LABEL, NUM_CLASSES};
use crate::error::{Error, Result};

/// Class-name table shipped with the crate. Provisional: the 19 urban
/// classes follow the usual driving-scene convention.
pub const DEFAULT_CLASSES_CSV: &str = include_str!("../data/classes.csv");

/// Published per-model results used as a regression fixture.
pub const PUBLISHED_RESULTS_CSV: &str = include_str!("../data/published_results.csv");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    names: BTreeMap<u8, String>,
}

impl Default for ClassTable {
    fn default() -> Self {
        Self::from_csv(DEFAULT_CLASSES_CSV).expect("bundled class table parses")
    }
}

impl ClassTable {
    /// Parse `id,name` rows.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut names = BTreeMap::new();
        for rec in reader.deserialize::<(u8, String)>() {
            let (id, name) = rec?;
            if id == IGNORE_LABEL {
                return Err(Error::InvalidConfig("class id 255 is reserved".into()));
            }
            names.insert(id, name.trim().to_string());
        }
        Ok(Self { names })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn name(&self, id: u8) -> Option<&str> {
        self.names.get(&id).map(String::as_str)
    }

    /// Look a class up by name (case-insensitive; spaces match underscores)
    /// or by numeric ID.
    pub fn id(&self, name: &str) -> Option<u8> {
        let key = name.trim().to_ascii_lowercase().replace(' ', "_");
        self.names
            .iter()
            .find(|(_, n)| n.to_ascii_lowercase() == key)
            .map(|(&id, _)| id)
            .or_else(|| key.parse().ok().filter(|id| self.names.contains_key(id)))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, &str)> {
        self.names.iter().map(|(&id, n)| (id, n.as_str()))
    }
}

/// Rows are ground truth, columns predictions; column `num_classes` counts
/// void predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    counts: Vec<u64>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self::new(NUM_CLASSES)
    }
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * (num_classes + 1)],
        }
    }

    fn stride(&self) -> usize {
        self.num_classes + 1
    }

    /// Count of pixels with ground truth `gt` predicted as `pred`; pass
    /// `num_classes` as `pred` for void predictions.
    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.stride() + pred]
    }

    pub fn void(&self, gt: usize) -> u64 {
        self.get(gt, self.num_classes)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, gt: u8, pred: u8) -> Result<()> {
        let n = self.num_classes;
        let check = |v: u8, allow_void: bool, index: usize| -> Result<()> {
            if (v as usize) < n || (allow_void && v == IGNORE_LABEL) {
                Ok(())
            } else {
                Err(Error::LabelOutOfRange {
                    value: v,
                    classes: n,
                    index,
                })
            }
        };
        if gt == IGNORE_LABEL {
            return check(pred, true, 0);
        }
        check(gt, false, 0)?;
        check(pred, true, 0)?;
        let col = if pred == IGNORE_LABEL { n } else { pred as usize };
        let stride = self.stride();
        self.counts[gt as usize * stride + col] += 1;
        Ok(())
    }

    /// Add one prediction/ground-truth pair of masks.
    pub fn accumulate(&mut self, pred: &LabelMask, gt: &LabelMask) -> Result<()> {
        if pred.width != gt.width || pred.height != gt.height {
            return Err(Error::DimensionMismatch(format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.width, pred.height, gt.width, gt.height
            )));
        }
        // Validate first so a bad pixel leaves the matrix untouched.
        let mut scratch = ConfusionMatrix::new(self.num_classes);
        for (index, (&p, &g)) in pred.labels.iter().zip(&gt.labels).enumerate() {
            scratch.add(g, p).map_err(|e| match e {
                Error::LabelOutOfRange { value, classes, .. } => Error::LabelOutOfRange { value, classes, index },
                other => other,
            })?;
        }
        self.merge(&scratch)
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {} classes",
                self.num_classes, other.num_classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Functional form of [`ConfusionMatrix::accumulate`].
pub fn accumulate_confusion(pred: &LabelMask, gt: &LabelMask, cm: &ConfusionMatrix) -> Result<ConfusionMatrix> {
    let mut out = cm.clone();
    out.accumulate(pred, gt)?;
    Ok(out)
}

/// Per-class scores as percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub iou: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Ground-truth pixel count.
    pub support: u64,
    /// No ground-truth and no predicted pixels.
    #[serde(default)]
    pub absent: bool,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn class_metrics(cm: &ConfusionMatrix, class: u8) -> ClassMetrics {
    let c = class as usize;
    let n = cm.num_classes;
    let tp = cm.get(c, c);
    let row: u64 = (0..=n).map(|j| cm.get(c, j)).sum();
    let col: u64 = (0..n).map(|i| cm.get(i, c)).sum();
    let fp = col - tp;
    let fn_ = row - tp;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassMetrics {
        class,
        name: None,
        iou: 100.0 * ratio(tp, tp + fp + fn_),
        f1: 100.0 * f1,
        precision: 100.0 * precision,
        recall: 100.0 * recall,
        support: row,
        absent: tp + fp + fn_ == 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Inclusion {
    /// Every class counts; absent classes contribute zeros.
    #[default]
    AllClasses,
    /// Only classes seen in ground truth or prediction count.
    PresentOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Means {
    pub miou: f64,
    pub mf1: f64,
    pub mprec: f64,
    pub mrec: f64,
}

/// Unweighted means of the included rows.
pub fn mean_metrics(rows: &[ClassMetrics], inclusion: Inclusion) -> Result<Means> {
    let included: Vec<&ClassMetrics> = rows
        .iter()
        .filter(|r| inclusion == Inclusion::AllClasses || !r.absent)
        .collect();
    if included.is_empty() {
        return Err(Error::NoIncludedClasses);
    }
    let n = included.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| included.iter().map(|r| f(r)).sum::<f64>() / n;
    Ok(Means {
        miou: mean(|r| r.iou),
        mf1: mean(|r| r.f1),
        mprec: mean(|r| r.precision),
        mrec: mean(|r| r.recall),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<String>,
    pub inclusion: Inclusion,
    pub means: Means,
    pub classes: Vec<ClassMetrics>,
    /// Evaluated (non-ignore) pixels; 0 for transcribed reports.
    #[serde(default)]
    pub pixels: u64,
}

const METRIC_COLUMNS: [&str; 4] = ["IoU", "F1", "Prec", "Rec"];

fn round2(v: f64) -> String {
    format!("{v:.2}")
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix, inclusion: Inclusion, names: Option<&ClassTable>) -> Result<Self> {
        let classes: Vec<ClassMetrics> = (0..cm.num_classes as u8)
            .map(|c| {
                let mut m = class_metrics(cm, c);
                m.name = names.and_then(|t| t.name(c)).map(str::to_string);
                m
            })
            .collect();
        let means = mean_metrics(&classes, inclusion)?;
        Ok(Self {
            model: None,
            modality: None,
            inclusion,
            means,
            classes,
            pixels: cm.total(),
        })
    }

    pub fn class(&self, id: u8) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.class == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    fn column_label(m: &ClassMetrics) -> String {
        m.name.clone().unwrap_or_else(|| format!("class{}", m.class))
    }

    /// Header of the wide CSV layout: model, modality, the four means, then
    /// four columns per class.
    pub fn csv_header(&self) -> Vec<String> {
        let mut cols: Vec<String> = ["model", "modality", "mIoU", "mF1", "mPrec", "mRec"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for m in &self.classes {
            let label = Self::column_label(m);
            cols.extend(METRIC_COLUMNS.iter().map(|k| format!("{label}_{k}")));
        }
        cols
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut row = vec![
            self.model.clone().unwrap_or_default(),
            self.modality.clone().unwrap_or_default(),
            round2(self.means.miou),
            round2(self.means.mf1),
            round2(self.means.mprec),
            round2(self.means.mrec),
        ];
        for m in &self.classes {
            row.extend([m.iou, m.f1, m.precision, m.recall].map(round2));
        }
        row
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.csv_header()).expect("in-memory csv");
        w.write_record(self.csv_row()).expect("in-memory csv");
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }
}

/// Read reports in the wide CSV layout. Columns named `<class>_<metric>`
/// become class rows; classes not listed are left out, and the means are
/// taken verbatim.
pub fn read_reports_csv(text: &str, names: &ClassTable) -> Result<Vec<MetricsReport>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &'static str| col(name).ok_or(Error::MissingField(name));
    let (im, imod) = (need("model")?, need("modality")?);
    let mean_cols = [need("mIoU")?, need("mF1")?, need("mPrec")?, need("mRec")?];

    // class id -> column of each metric
    let mut class_cols: BTreeMap<u8, [Option<usize>; 4]> = BTreeMap::new();
    for (i, h) in header.iter().enumerate() {
        let Some((label, metric)) = h.rsplit_once('_') else {
            continue;
        };
        let Some(k) = METRIC_COLUMNS.iter().position(|m| *m == metric) else {
            continue;
        };
        let id = names
            .id(label)
            .or_else(|| label.strip_prefix("class").and_then(|n| n.parse().ok()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown class `{label}` in column `{h}`")))?;
        class_cols.entry(id).or_default()[k] = Some(i);
    }

    let mut reports = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].trim().parse().map_err(|_| Error::InvalidField {
                field: header[i].clone(),
                value: rec[i].to_string(),
            })
        };
        let means = Means {
            miou: num(mean_cols[0])?,
            mf1: num(mean_cols[1])?,
            mprec: num(mean_cols[2])?,
            mrec: num(mean_cols[3])?,
        };
        let mut classes = Vec::new();
        for (&id, cols) in &class_cols {
            let get = |k: usize| cols[k].map(&num).transpose().map(Option::unwrap_or_default);
            classes.push(ClassMetrics {
                class: id,
                name: names.name(id).map(str::to_string),
                iou: get(0)?,
                f1: get(1)?,
                precision: get(2)?,
                recall: get(3)?,
                support: 0,
                absent: false,
            });
        }
        reports.push(MetricsReport {
            model: Some(rec[im].to_string()),
            modality: Some(rec[imod].to_string()),
            inclusion: Inclusion::AllClasses,
            means,
            classes,
            pixels: 0,
        });
    }
    Ok(reports)
}

/// Reports of one modality keyed by model name, in file order.
pub fn reports_by_model(reports: &[MetricsReport], modality: &str) -> BTreeMap<String, MetricsReport> {
    reports
        .iter()
        .filter(|r| r.modality.as_deref() == Some(modality))
        .map(|r| (r.model.clone().unwrap_or_default(), r.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Deltas {
    pub iou: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl Deltas {
    fn between(a: &ClassMetrics, b: &ClassMetrics) -> Self {
        Self {
            iou: b.iou - a.iou,
            f1: b.f1 - a.f1,
            precision: b.precision - a.precision,
            recall: b.recall - a.recall,
        }
    }

    fn mean<'a, I: IntoIterator<Item = &'a Deltas>>(items: I) -> Self {
        let mut acc = Deltas::default();
        let mut n = 0usize;
        for d in items {
            acc.iou += d.iou;
            acc.f1 += d.f1;
            acc.precision += d.precision;
            acc.recall += d.recall;
            n += 1;
        }
        if n > 0 {
            let n = n as f64;
            acc.iou /= n;
            acc.f1 /= n;
            acc.precision /= n;
            acc.recall /= n;
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDelta {
    pub class: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub delta: Deltas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub model: String,
    /// Difference of the overall means (b - a).
    pub means: Deltas,
    pub classes: Vec<ClassDelta>,
}

/// Differences `b - a` between two sets of reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality_a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality_b: Option<String>,
    pub models: Vec<ModelComparison>,
    /// Per class, the average delta across models.
    pub class_averages: Vec<ClassDelta>,
    /// Average of `class_averages`.
    pub combined: Deltas,
}

pub fn compare_reports(
    a: &BTreeMap<String, MetricsReport>,
    b: &BTreeMap<String, MetricsReport>,
    classes: &[u8],
) -> Result<ComparisonReport> {
    if a.keys().ne(b.keys()) {
        return Err(Error::KeyMismatch(format!(
            "models {:?} vs {:?}",
            a.keys().collect::<Vec<_>>(),
            b.keys().collect::<Vec<_>>()
        )));
    }
    if a.is_empty() || classes.is_empty() {
        return Err(Error::KeyMismatch("nothing to compare".into()));
    }
    let mut models = Vec::new();
    for (model, ra) in a {
        let rb = &b[model];
        let mut per_class = Vec::new();
        for &c in classes {
            let (Some(ca), Some(cb)) = (ra.class(c), rb.class(c)) else {
                return Err(Error::KeyMismatch(format!("class {c} missing for model `{model}`")));
            };
            per_class.push(ClassDelta {
                class: c,
                name: ca.name.clone().or_else(|| cb.name.clone()),
                delta: Deltas::between(ca, cb),
            });
        }
        models.push(ModelComparison {
            model: model.clone(),
            means: Deltas {
                iou: rb.means.miou - ra.means.miou,
                f1: rb.means.mf1 - ra.means.mf1,
                precision: rb.means.mprec - ra.means.mprec,
                recall: rb.means.mrec - ra.means.mrec,
            },
            classes: per_class,
        });
    }
    let class_averages: Vec<ClassDelta> = classes
        .iter()
        .enumerate()
        .map(|(i, &c)| ClassDelta {
            class: c,
            name: models[0].classes[i].name.clone(),
            delta: Deltas::mean(models.iter().map(|m| &m.classes[i].delta)),
        })
        .collect();
    let combined = Deltas::mean(class_averages.iter().map(|c| &c.delta));
    let modality = |m: &BTreeMap<String, MetricsReport>| m.values().next().and_then(|r| r.modality.clone());
    Ok(ComparisonReport {
        modality_a: modality(a),
        modality_b: modality(b),
        models,
        class_averages,
        combined,
    })
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }

    pub fn to_markdown(&self) -> String {
        let label = |c: &ClassDelta| c.name.clone().unwrap_or_else(|| format!("class {}", c.class));
        let a = self.modality_a.as_deref().unwrap_or("A");
        let b = self.modality_b.as_deref().unwrap_or("B");
        let mut out = format!("Deltas {b} - {a} (percentage points)\n\n");
        out.push_str("| Model | Class | IoU | F1 | Prec | Rec |\n|---|---|---:|---:|---:|---:|\n");
        let row = |out: &mut String, model: &str, class: &str, d: &Deltas| {
            let _ = writeln!(
                out,
                "| {model} | {class} | {:+.2} | {:+.2} | {:+.2} | {:+.2} |",
                d.iou, d.f1, d.precision, d.recall
            );
        };
        for m in &self.models {
            row(&mut out, &m.model, "mean (all)", &m.means);
            for c in &m.classes {
                row(&mut out, &m.model, &label(c), &c.delta);
            }
        }
        for c in &self.class_averages {
            row(&mut out, "average", &label(c), &c.delta);
        }
        row(&mut out, "average", "combined", &self.combined);
        out
    }
}
