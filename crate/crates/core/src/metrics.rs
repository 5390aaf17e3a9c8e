//! Grounding, offline-step and sequence metrics, record loaders, and report
//! aggregation.
//!
//! Conventions:
//! - bbox containment is inclusive on every edge;
//! - operation F1 is a multiset token F1 over lowercase, whitespace-split
//!   `"op value"` strings;
//! - step success compares values after lowercasing and trimming;
//! - the action score only counts records whose operation sequence matches.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{NormalizedPoint, OperationKind, ScreenDims};
use crate::agent::HistoryEntry;
use crate::backends::{Interpreter, InterpreterRequest, Locator, LocatorRequest};
use crate::exec::Execution;
use crate::geometry::NormRect;
use crate::parsing::{locate_point, PatternFamily, StructuredStep};
use crate::sim::{png_dims, Observation, ScreenModel};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("action score is undefined: no record has a matching sequence")]
    NoMatchedSequences,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: at `{pointer}`: {message}")]
    Record {
        path: String,
        line: usize,
        pointer: String,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Category {
    Text,
    IconWidget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Platform {
    Mobile,
    Desktop,
    Web,
}

/// One pointwise grounding query. `screen` is only present for records
/// rendered from simulated screens, for local locators that read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingRecord {
    pub id: String,
    pub image: PathBuf,
    pub description: String,
    pub bbox: NormRect,
    pub category: Category,
    pub platform: Platform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen: Option<ScreenModel>,
}

/// One recorded step of a web/desktop trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineStepRecord {
    pub id: String,
    /// Task text handed to the interpreter.
    #[serde(default)]
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen: Option<ScreenModel>,
    /// Ground-truth steps preceding this one, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub previous_actions: Vec<StructuredStep>,
    pub acceptable_bboxes: Vec<NormRect>,
    pub gt_operation: OperationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedBox {
    pub index: usize,
    pub bbox: NormRect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedPoint {
    pub index: usize,
    pub point: NormalizedPoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedValue {
    pub index: usize,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OmniPrediction {
    pub sequence: Vec<OperationKind>,
    #[serde(default)]
    pub clicks: Vec<IndexedPoint>,
    #[serde(default)]
    pub values: Vec<IndexedValue>,
}

/// A desktop-script task: ground-truth operation sequence with click targets
/// and typed values, plus the prediction in the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmniRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    pub gt_sequence: Vec<OperationKind>,
    #[serde(default)]
    pub gt_clicks: Vec<IndexedBox>,
    #[serde(default)]
    pub gt_values: Vec<IndexedValue>,
    pub predictions: OmniPrediction,
}

impl OfflineStepRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.acceptable_bboxes.is_empty() {
            return Err("acceptable_bboxes must not be empty".into());
        }
        Ok(())
    }
}

impl OmniRecord {
    pub fn validate(&self) -> Result<(), String> {
        let gt = self.gt_sequence.len();
        let pred = self.predictions.sequence.len();
        let check = |what: &str, idx: usize, len: usize| {
            if idx < len {
                Ok(())
            } else {
                Err(format!("{what} index {idx} out of bounds for sequence of length {len}"))
            }
        };
        for c in &self.gt_clicks {
            check("gt_clicks", c.index, gt)?;
        }
        for v in &self.gt_values {
            check("gt_values", v.index, gt)?;
        }
        for c in &self.predictions.clicks {
            check("predictions.clicks", c.index, pred)?;
        }
        for v in &self.predictions.values {
            check("predictions.values", v.index, pred)?;
        }
        Ok(())
    }
}

/// Reads one JSON value per non-blank line.
pub fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, LoadError> {
    let io = |source| LoadError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(&line);
        let rec = serde_path_to_error::deserialize(de).map_err(|e| LoadError::Record {
            path: path.display().to_string(),
            line: i + 1,
            pointer: e.path().to_string(),
            message: e.into_inner().to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

/// Loads grounding records; relative image paths resolve against the file's
/// directory.
pub fn load_grounding_records(path: &Path) -> Result<Vec<GroundingRecord>, LoadError> {
    let mut recs: Vec<GroundingRecord> = load_jsonl(path)?;
    for r in &mut recs {
        r.image = resolve(parent_dir(path), &r.image);
    }
    Ok(recs)
}

pub fn load_offline_records(path: &Path) -> Result<Vec<OfflineStepRecord>, LoadError> {
    let mut recs: Vec<OfflineStepRecord> = load_jsonl(path)?;
    for (i, r) in recs.iter_mut().enumerate() {
        r.validate().map_err(|message| LoadError::Record {
            path: path.display().to_string(),
            line: i + 1,
            pointer: "acceptable_bboxes".into(),
            message,
        })?;
        r.image = resolve(parent_dir(path), &r.image);
    }
    Ok(recs)
}

pub fn load_omni_records(path: &Path) -> Result<Vec<OmniRecord>, LoadError> {
    let recs: Vec<OmniRecord> = load_jsonl(path)?;
    for (i, r) in recs.iter().enumerate() {
        r.validate().map_err(|message| LoadError::Record {
            path: path.display().to_string(),
            line: i + 1,
            pointer: String::new(),
            message,
        })?;
    }
    Ok(recs)
}

pub fn point_in_bbox(p: NormalizedPoint, b: &NormRect) -> bool {
    b.contains(p)
}

pub fn element_accuracy(pred: NormalizedPoint, rec: &OfflineStepRecord) -> bool {
    rec.acceptable_bboxes.iter().any(|b| point_in_bbox(pred, b))
}

fn action_tokens(op: &str, value: Option<&str>) -> Vec<String> {
    let text = match value {
        Some(v) => format!("{op} {v}"),
        None => op.to_string(),
    };
    text.to_lowercase().split_whitespace().map(str::to_string).collect()
}

/// Token-level F1 between `"pred_op pred_value"` and `"gt_op gt_value"`.
pub fn op_f1(pred_op: &str, pred_value: Option<&str>, gt_op: &str, gt_value: Option<&str>) -> f64 {
    let pred = action_tokens(pred_op, pred_value);
    let gold = action_tokens(gt_op, gt_value);
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    // 2PR/(P+R) with P = c/|pred| and R = c/|gold|, in one division
    (2 * common) as f64 / (pred.len() + gold.len()) as f64
}

fn fold_value(v: &str) -> String {
    v.trim().to_lowercase()
}

pub fn step_success(
    pred: NormalizedPoint,
    pred_op: &str,
    pred_value: Option<&str>,
    rec: &OfflineStepRecord,
) -> bool {
    let op_ok = pred_op.parse::<OperationKind>().ok() == Some(rec.gt_operation);
    let value_ok = match &rec.gt_value {
        Some(gt) if rec.gt_operation.takes_value() => {
            pred_value.map(fold_value) == Some(fold_value(gt))
        }
        _ => true,
    };
    element_accuracy(pred, rec) && op_ok && value_ok
}

pub fn sequence_score(pred: &[OperationKind], gt: &[OperationKind]) -> u8 {
    u8::from(pred == gt)
}

/// 0 inside the box, else the distance to the box over `sqrt(2)`, capped at 1.
/// A missing click costs the full penalty.
pub fn click_penalty(pred: Option<NormalizedPoint>, gt: &NormRect) -> f64 {
    match pred {
        Some(p) if point_in_bbox(p, gt) => 0.0,
        Some(p) => (gt.distance_to(p) / std::f64::consts::SQRT_2).min(1.0),
        None => 1.0,
    }
}

/// Per-record inputs to the action score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub seq_score: u8,
    pub click_penalty: f64,
    pub key_penalty: f64,
    pub write_penalty: f64,
}

impl ScoredSequence {
    pub fn total_penalty(&self) -> f64 {
        self.click_penalty + self.key_penalty + self.write_penalty
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionScore {
    pub action_score: f64,
    pub click_penalty: f64,
    pub key_penalty: f64,
    pub write_penalty: f64,
    pub matched: usize,
}

/// `sum_i max(seq_i - penalty_i, 0) / sum_i seq_i`. Penalties are averaged
/// over matched records only; mismatched records contribute nothing.
pub fn action_score(records: &[ScoredSequence]) -> Result<ActionScore, MetricsError> {
    let mut acc = Accum::default();
    for r in records {
        acc.add_sequence(r);
    }
    acc.action_score()
}

/// Scores one desktop-script record. Per-step penalties are divided by the
/// ground-truth sequence length, so each record's total penalty is at most 1:
/// clicks pay [`click_penalty`], HOTKEY steps pay the key penalty and
/// TYPE/SELECT steps the write penalty, each `1 - op_f1` of that step.
pub fn score_omni(rec: &OmniRecord) -> ScoredSequence {
    let seq = sequence_score(&rec.predictions.sequence, &rec.gt_sequence);
    if seq == 0 {
        return ScoredSequence {
            seq_score: 0,
            click_penalty: 0.0,
            key_penalty: 0.0,
            write_penalty: 0.0,
        };
    }
    let n = rec.gt_sequence.len().max(1) as f64;
    let pred_click = |i: usize| rec.predictions.clicks.iter().find(|c| c.index == i).map(|c| c.point);
    let pred_value = |i: usize| {
        rec.predictions
            .values
            .iter()
            .find(|v| v.index == i)
            .map(|v| v.value.as_str())
    };
    let gt_value = |i: usize| rec.gt_values.iter().find(|v| v.index == i).map(|v| v.value.as_str());
    let mut click = 0.0;
    for c in &rec.gt_clicks {
        click += click_penalty(pred_click(c.index), &c.bbox);
    }
    let (mut key, mut write) = (0.0, 0.0);
    for (i, op) in rec.gt_sequence.iter().enumerate() {
        let miss = 1.0 - op_f1(op.as_str(), pred_value(i), op.as_str(), gt_value(i));
        match op {
            OperationKind::Hotkey => key += miss,
            OperationKind::Type | OperationKind::Select => write += miss,
            _ => {}
        }
    }
    ScoredSequence {
        seq_score: 1,
        click_penalty: click / n,
        key_penalty: key / n,
        write_penalty: write / n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingScore {
    pub id: String,
    pub platform: Platform,
    pub category: Category,
    pub point: NormalizedPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<PatternFamily>,
    pub fallback: bool,
    pub hit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineScore {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<NormalizedPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<PatternFamily>,
    pub fallback: bool,
    pub pred_operation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_value: Option<String>,
    pub ele_acc: bool,
    pub op_f1: f64,
    pub step_success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[serde(flatten)]
    pub scored: ScoredSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordScore {
    Grounding(GroundingScore),
    Offline(OfflineScore),
    Sequence(SequenceScore),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKey {
    Platform,
    Category,
    Split,
}

impl RecordScore {
    pub fn id(&self) -> &str {
        match self {
            RecordScore::Grounding(g) => &g.id,
            RecordScore::Offline(o) => &o.id,
            RecordScore::Sequence(s) => &s.id,
        }
    }

    fn slice_label(&self, key: SliceKey) -> Option<String> {
        let value = match (self, key) {
            (RecordScore::Grounding(g), SliceKey::Platform) => {
                serde_json::to_value(g.platform).ok()?.as_str()?.to_string()
            }
            (RecordScore::Grounding(g), SliceKey::Category) => {
                serde_json::to_value(g.category).ok()?.as_str()?.to_string()
            }
            (RecordScore::Offline(o), SliceKey::Split) => o.split.clone()?,
            (RecordScore::Sequence(s), SliceKey::Split) => s.split.clone()?,
            _ => return None,
        };
        let name = match key {
            SliceKey::Platform => "platform",
            SliceKey::Category => "category",
            SliceKey::Split => "split",
        };
        Some(format!("{name}={value}"))
    }
}

/// Running sums behind a [`MetricRow`]. `merge` is associative and
/// commutative up to float rounding; [`aggregate_report`] fixes the fold
/// order so reports are bit-identical.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Accum {
    n: usize,
    ele_hits: usize,
    ele_n: usize,
    f1_sum: f64,
    f1_n: usize,
    sr_hits: usize,
    sr_n: usize,
    seq_sum: usize,
    seq_n: usize,
    as_num: f64,
    click_sum: f64,
    key_sum: f64,
    write_sum: f64,
}

impl Accum {
    fn add_sequence(&mut self, s: &ScoredSequence) {
        self.seq_n += 1;
        if s.seq_score > 0 {
            self.seq_sum += 1;
            self.as_num += (1.0 - s.total_penalty()).max(0.0);
            self.click_sum += s.click_penalty;
            self.key_sum += s.key_penalty;
            self.write_sum += s.write_penalty;
        }
    }

    pub fn add(&mut self, r: &RecordScore) {
        self.n += 1;
        match r {
            RecordScore::Grounding(g) => {
                self.ele_n += 1;
                self.ele_hits += usize::from(g.hit);
            }
            RecordScore::Offline(o) => {
                self.ele_n += 1;
                self.ele_hits += usize::from(o.ele_acc);
                self.f1_n += 1;
                self.f1_sum += o.op_f1;
                self.sr_n += 1;
                self.sr_hits += usize::from(o.step_success);
            }
            RecordScore::Sequence(s) => self.add_sequence(&s.scored),
        }
    }

    pub fn merge(&mut self, o: &Accum) {
        self.n += o.n;
        self.ele_hits += o.ele_hits;
        self.ele_n += o.ele_n;
        self.f1_sum += o.f1_sum;
        self.f1_n += o.f1_n;
        self.sr_hits += o.sr_hits;
        self.sr_n += o.sr_n;
        self.seq_sum += o.seq_sum;
        self.seq_n += o.seq_n;
        self.as_num += o.as_num;
        self.click_sum += o.click_sum;
        self.key_sum += o.key_sum;
        self.write_sum += o.write_sum;
    }

    fn action_score(&self) -> Result<ActionScore, MetricsError> {
        if self.seq_sum == 0 {
            return Err(MetricsError::NoMatchedSequences);
        }
        let m = self.seq_sum as f64;
        Ok(ActionScore {
            action_score: self.as_num / m,
            click_penalty: self.click_sum / m,
            key_penalty: self.key_sum / m,
            write_penalty: self.write_sum / m,
            matched: self.seq_sum,
        })
    }

    pub fn row(&self) -> MetricRow {
        let frac = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let score = self.action_score().ok();
        MetricRow {
            n: self.n,
            ele_acc: frac(self.ele_hits, self.ele_n),
            op_f1: (self.f1_n > 0).then(|| self.f1_sum / self.f1_n as f64),
            step_sr: frac(self.sr_hits, self.sr_n),
            seq_score: frac(self.seq_sum, self.seq_n),
            action_score: score.map(|s| s.action_score),
            click_penalty: score.map(|s| s.click_penalty),
            key_penalty: score.map(|s| s.key_penalty),
            write_penalty: score.map(|s| s.write_penalty),
        }
    }
}

/// Metric values over a set of records; a metric is `None` when no record in
/// the set carries it. For grounding records `ele_acc` is the grounding
/// accuracy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub n: usize,
    pub ele_acc: Option<f64>,
    pub op_f1: Option<f64>,
    pub step_sr: Option<f64>,
    pub seq_score: Option<f64>,
    pub action_score: Option<f64>,
    pub click_penalty: Option<f64>,
    pub key_penalty: Option<f64>,
    pub write_penalty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(flatten)]
    pub overall: MetricRow,
    pub slices: BTreeMap<String, MetricRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_record: Vec<RecordScore>,
}

impl MetricReport {
    pub fn n(&self) -> usize {
        self.overall.n
    }

    /// The report without its per-record rows.
    pub fn summary(&self) -> MetricReport {
        MetricReport {
            overall: self.overall.clone(),
            slices: self.slices.clone(),
            per_record: Vec::new(),
        }
    }
}

fn record_order(a: &RecordScore, b: &RecordScore) -> std::cmp::Ordering {
    a.id().cmp(b.id()).then_with(|| {
        let ja = serde_json::to_string(a).unwrap_or_default();
        let jb = serde_json::to_string(b).unwrap_or_default();
        ja.cmp(&jb)
    })
}

/// Folds per-record scores into overall and per-slice rows. Records are
/// sorted by id before folding, so input order never changes the report.
/// Each slice key yields its own rows; with several keys, their combination
/// (`platform=WEB/category=TEXT`) is reported too.
pub fn aggregate_report(mut per_record: Vec<RecordScore>, slice_keys: &[SliceKey]) -> MetricReport {
    per_record.sort_by(record_order);
    let mut overall = Accum::default();
    let mut slices: BTreeMap<String, Accum> = BTreeMap::new();
    for r in &per_record {
        overall.add(r);
        let labels: Vec<String> = slice_keys.iter().filter_map(|k| r.slice_label(*k)).collect();
        for l in &labels {
            slices.entry(l.clone()).or_default().add(r);
        }
        if slice_keys.len() > 1 && labels.len() == slice_keys.len() {
            slices.entry(labels.join("/")).or_default().add(r);
        }
    }
    MetricReport {
        overall: overall.row(),
        slices: slices.into_iter().map(|(k, a)| (k, a.row())).collect(),
        per_record,
    }
}

fn load_observation(image: &Path, screen: Option<&ScreenModel>) -> Result<Observation, String> {
    let png = std::fs::read(image).map_err(|e| format!("image {}: {e}", image.display()))?;
    let dims = png_dims(&png).map_err(|e| format!("image {}: {e}", image.display()))?;
    Ok(Observation {
        png,
        dims,
        screen_model: screen.cloned(),
    })
}

pub fn score_grounding_record(rec: &GroundingRecord, locator: &dyn Locator) -> GroundingScore {
    let miss = |error: String| GroundingScore {
        id: rec.id.clone(),
        platform: rec.platform,
        category: rec.category,
        point: NormalizedPoint::CENTER,
        family: None,
        fallback: true,
        hit: false,
        error: Some(error),
    };
    let obs = match load_observation(&rec.image, rec.screen.as_ref()) {
        Ok(o) => o,
        Err(e) => {
            log::warn!("record {}: {e}", rec.id);
            return miss(e);
        }
    };
    let (text, error) = match locator.locate(&LocatorRequest {
        description: &rec.description,
        observation: &obs,
    }) {
        Ok(t) => (t, None),
        Err(e) => (String::new(), Some(e.to_string())),
    };
    let parsed = locate_point(&text, obs.dims);
    GroundingScore {
        id: rec.id.clone(),
        platform: rec.platform,
        category: rec.category,
        point: parsed.point,
        family: parsed.family,
        fallback: parsed.fallback(),
        hit: point_in_bbox(parsed.point, &rec.bbox),
        error,
    }
}

/// Fraction of records whose located point lands in the record's bbox,
/// sliced by platform and category. Unreadable images count as misses;
/// locator failures fall back to the screen center.
pub fn grounding_accuracy(records: &[GroundingRecord], locator: &dyn Locator, exec: Execution) -> MetricReport {
    let scores = exec.map(records, |r| RecordScore::Grounding(score_grounding_record(r, locator)));
    aggregate_report(scores, &[SliceKey::Platform, SliceKey::Category])
}

pub fn score_offline_record(
    rec: &OfflineStepRecord,
    interpreter: &dyn Interpreter,
    locator: &dyn Locator,
) -> OfflineScore {
    let failed = |error: String| OfflineScore {
        id: rec.id.clone(),
        split: rec.split.clone(),
        point: None,
        family: None,
        fallback: false,
        pred_operation: String::new(),
        pred_value: None,
        ele_acc: false,
        op_f1: 0.0,
        step_success: false,
        error: Some(error),
    };
    let obs = match load_observation(&rec.image, rec.screen.as_ref()) {
        Ok(o) => o,
        Err(e) => {
            log::warn!("record {}: {e}", rec.id);
            return failed(e);
        }
    };
    let history: Vec<HistoryEntry> = rec.previous_actions.iter().cloned().map(HistoryEntry::offline).collect();
    let step = match interpreter.interpret(&InterpreterRequest {
        task: &rec.task,
        history: &history,
        observation: &obs,
    }) {
        Ok(i) => i.step,
        Err(e) => return failed(format!("interpreter: {e}")),
    };
    let gt_op = rec.gt_operation.as_str();
    let f1 = op_f1(&step.operation_name, step.value.as_deref(), gt_op, rec.gt_value.as_deref());
    let mut error = None;
    let parsed = if step.is_stop() {
        None
    } else {
        let text = match locator.locate(&LocatorRequest {
            description: &step.description,
            observation: &obs,
        }) {
            Ok(t) => t,
            Err(e) => {
                error = Some(format!("locator: {e}"));
                String::new()
            }
        };
        Some(locate_point(&text, obs.dims))
    };
    let point = parsed.map(|p| p.point);
    let ele = point.is_some_and(|p| element_accuracy(p, rec));
    let sr = point.is_some_and(|p| step_success(p, &step.operation_name, step.value.as_deref(), rec));
    OfflineScore {
        id: rec.id.clone(),
        split: rec.split.clone(),
        point,
        family: parsed.and_then(|p| p.family),
        fallback: parsed.is_some_and(|p| p.fallback()),
        pred_operation: step.operation_name,
        pred_value: step.value,
        ele_acc: ele,
        op_f1: f1,
        step_success: sr,
        error,
    }
}

/// Element accuracy, operation F1 and step success rate over recorded steps.
pub fn replay_offline(
    records: &[OfflineStepRecord],
    interpreter: &dyn Interpreter,
    locator: &dyn Locator,
    exec: Execution,
) -> MetricReport {
    let scores = exec.map(records, |r| RecordScore::Offline(score_offline_record(r, interpreter, locator)));
    aggregate_report(scores, &[SliceKey::Split])
}

/// Sequence score and action score with click/key/write penalties.
pub fn score_omni_records(records: &[OmniRecord], exec: Execution) -> MetricReport {
    let scores = exec.map(records, |r| {
        RecordScore::Sequence(SequenceScore {
            id: r.id.clone(),
            split: r.split.clone(),
            scored: score_omni(r),
        })
    });
    aggregate_report(scores, &[SliceKey::Split])
}

/// Dimensions used when a locator answers in pixels but no image is at hand.
pub const DEFAULT_DIMS: ScreenDims = ScreenDims {
    width: 1000,
    height: 1000,
};

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(x0: f64, y0: f64, x1: f64, y1: f64) -> NormRect {
        NormRect::new(x0, y0, x1, y1).unwrap()
    }

    fn p(x: f64, y: f64) -> NormalizedPoint {
        NormalizedPoint::new(x, y).unwrap()
    }

    fn offline(bboxes: Vec<NormRect>, op: OperationKind, value: Option<&str>) -> OfflineStepRecord {
        OfflineStepRecord {
            id: "r".into(),
            task: String::new(),
            split: None,
            image: PathBuf::new(),
            screen: None,
            previous_actions: vec![],
            acceptable_bboxes: bboxes,
            gt_operation: op,
            gt_value: value.map(Into::into),
        }
    }

    #[test]
    fn point_in_bbox_is_inclusive() {
        let b = r(0.1, 0.1, 0.3, 0.2);
        assert!(point_in_bbox(p(0.2, 0.15), &b));
        assert!(point_in_bbox(p(0.1, 0.1), &b));
        assert!(!point_in_bbox(p(0.5, 0.5), &b));
    }

    #[test]
    fn element_accuracy_is_a_disjunction() {
        let rec = offline(vec![r(0.0, 0.0, 0.1, 0.1), r(0.4, 0.4, 0.6, 0.6)], OperationKind::Click, None);
        assert!(element_accuracy(p(0.5, 0.5), &rec));
        assert!(!element_accuracy(p(0.9, 0.9), &rec));
        // the center fallback is judged like any other point
        assert!(element_accuracy(NormalizedPoint::CENTER, &rec));
    }

    #[test]
    fn op_f1_examples() {
        assert_eq!(op_f1("type", Some("netflix"), "type", Some("netflix")), 1.0);
        assert_eq!(op_f1("click", None, "type", Some("netflix")), 0.0);
        // P = 2/3, R = 1
        assert!((op_f1("type", Some("netflix stock"), "type", Some("netflix")) - 0.8).abs() < 1e-12);
        assert_eq!(op_f1("", None, "", None), 1.0);
        assert_eq!(op_f1("CLICK", None, "click", None), 1.0);
    }

    #[test]
    fn op_f1_counts_repeated_tokens_once_each() {
        // pred tokens: type a a; gold: type a  -> common 2, P = 2/3, R = 1
        assert!((op_f1("type", Some("a a"), "type", Some("a")) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn step_success_examples() {
        let b = r(0.4, 0.4, 0.6, 0.6);
        let click = offline(vec![b], OperationKind::Click, None);
        assert!(step_success(p(0.5, 0.5), "CLICK", None, &click));
        assert!(!step_success(p(0.9, 0.9), "CLICK", None, &click));
        let ty = offline(vec![b], OperationKind::Type, Some("netflix"));
        assert!(step_success(p(0.5, 0.5), "TYPE", Some("Netflix "), &ty));
        assert!(!step_success(p(0.5, 0.5), "TYPE", Some("hulu"), &ty));
        assert!(!step_success(p(0.5, 0.5), "CLICK", None, &ty));
    }

    #[test]
    fn sequence_score_examples() {
        use OperationKind::*;
        assert_eq!(sequence_score(&[Click, Type], &[Click, Type]), 1);
        assert_eq!(sequence_score(&[Click], &[Click, Type]), 0);
        assert_eq!(sequence_score(&[], &[]), 1);
    }

    #[test]
    fn click_penalty_examples() {
        assert_eq!(click_penalty(Some(p(0.15, 0.15)), &r(0.1, 0.1, 0.2, 0.2)), 0.0);
        assert_eq!(click_penalty(Some(p(1.0, 1.0)), &r(0.0, 0.0, 0.0, 0.0)), 1.0);
        let d = click_penalty(Some(p(0.5, 0.5)), &r(0.1, 0.1, 0.2, 0.2));
        assert!((d - 0.3).abs() < 1e-12, "{d}");
        assert_eq!(click_penalty(None, &r(0.1, 0.1, 0.2, 0.2)), 1.0);
    }

    fn seq(s: u8, pen: f64) -> ScoredSequence {
        ScoredSequence { seq_score: s, click_penalty: pen, key_penalty: 0.0, write_penalty: 0.0 }
    }

    #[test]
    fn action_score_examples() {
        assert_eq!(action_score(&[seq(1, 0.0), seq(1, 0.0)]).unwrap().action_score, 1.0);
        let s = action_score(&[seq(1, 0.2), seq(0, 0.9)]).unwrap();
        assert!((s.action_score - 0.8).abs() < 1e-12);
        assert!((s.click_penalty - 0.2).abs() < 1e-12);
        assert_eq!(action_score(&[seq(1, 1.5)]).unwrap().action_score, 0.0);
        assert!(matches!(action_score(&[seq(0, 0.1)]), Err(MetricsError::NoMatchedSequences)));
    }

    #[test]
    fn score_omni_penalties() {
        use OperationKind::*;
        let rec = OmniRecord {
            id: "o".into(),
            split: None,
            gt_sequence: vec![Click, Type, Hotkey, Click],
            gt_clicks: vec![
                IndexedBox { index: 0, bbox: r(0.1, 0.1, 0.2, 0.2) },
                IndexedBox { index: 3, bbox: r(0.0, 0.0, 0.1, 0.1) },
            ],
            gt_values: vec![
                IndexedValue { index: 1, value: "hello world".into() },
                IndexedValue { index: 2, value: "ctrl+s".into() },
            ],
            predictions: OmniPrediction {
                sequence: vec![Click, Type, Hotkey, Click],
                clicks: vec![
                    IndexedPoint { index: 0, point: p(0.5, 0.5) },
                    IndexedPoint { index: 3, point: p(0.05, 0.05) },
                ],
                values: vec![
                    IndexedValue { index: 1, value: "hello".into() },
                    IndexedValue { index: 2, value: "ctrl+s".into() },
                ],
            },
        };
        let s = score_omni(&rec);
        assert_eq!(s.seq_score, 1);
        assert!((s.click_penalty - 0.3 / 4.0).abs() < 1e-12);
        assert_eq!(s.key_penalty, 0.0);
        // "type hello" vs "type hello world": P = 1, R = 2/3, F1 = 0.8
        assert!((s.write_penalty - 0.2 / 4.0).abs() < 1e-12);

        let mut mismatch = rec.clone();
        mismatch.predictions.sequence.pop();
        assert_eq!(score_omni(&mismatch), seq(0, 0.0));
        mismatch.predictions.clicks.pop();
        assert!(mismatch.validate().is_ok());
        mismatch.predictions.clicks.push(IndexedPoint { index: 7, point: p(0.0, 0.0) });
        assert!(mismatch.validate().is_err());
    }

    fn offline_score(id: &str, split: &str, ele: bool, f1: f64, sr: bool) -> RecordScore {
        RecordScore::Offline(OfflineScore {
            id: id.into(),
            split: Some(split.into()),
            point: None,
            family: None,
            fallback: false,
            pred_operation: "CLICK".into(),
            pred_value: None,
            ele_acc: ele,
            op_f1: f1,
            step_success: sr,
            error: None,
        })
    }

    #[test]
    fn aggregate_single_record() {
        let rep = aggregate_report(vec![offline_score("a", "x", true, 0.5, false)], &[SliceKey::Split]);
        assert_eq!(rep.n(), 1);
        assert_eq!(rep.overall.ele_acc, Some(1.0));
        assert_eq!(rep.overall.op_f1, Some(0.5));
        assert_eq!(rep.overall.step_sr, Some(0.0));
        assert_eq!(rep.overall.action_score, None);
        assert_eq!(rep.slices["split=x"], rep.overall);
    }

    #[test]
    fn aggregate_weighted_mean_of_slices() {
        let recs = vec![
            offline_score("a", "x", true, 1.0, true),
            offline_score("b", "x", false, 0.5, false),
            offline_score("c", "y", true, 0.25, true),
        ];
        let rep = aggregate_report(recs, &[SliceKey::Split]);
        let (x, y) = (&rep.slices["split=x"], &rep.slices["split=y"]);
        let weighted = (x.op_f1.unwrap() * 2.0 + y.op_f1.unwrap()) / 3.0;
        assert_eq!(rep.overall.op_f1.unwrap(), weighted);
        assert_eq!(rep.overall.ele_acc, Some(2.0 / 3.0));
    }

    #[test]
    fn empty_report() {
        let rep = aggregate_report(vec![], &[SliceKey::Split]);
        assert_eq!(rep.n(), 0);
        assert_eq!(rep.overall, MetricRow::default());
    }

    proptest! {
        #[test]
        fn op_f1_symmetric_and_bounded(a in "[a-c ]{0,8}", b in "[a-c ]{0,8}", x in "[a-c]{0,3}", y in "[a-c]{0,3}") {
            let f = op_f1(&a, Some(&x), &b, Some(&y));
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!((f - op_f1(&b, Some(&y), &a, Some(&x))).abs() < 1e-12);
        }

        #[test]
        fn penalty_identity(pens in proptest::collection::vec((0.0f64..0.34, 0.0f64..0.33, 0.0f64..0.33, any::<bool>()), 1..40)) {
            let mut recs: Vec<ScoredSequence> = pens.iter().map(|&(c, k, w, m)| ScoredSequence {
                seq_score: u8::from(m), click_penalty: c, key_penalty: k, write_penalty: w,
            }).collect();
            recs[0].seq_score = 1;
            let s = action_score(&recs).unwrap();
            prop_assert!((s.action_score + s.click_penalty + s.key_penalty + s.write_penalty - 1.0).abs() < 1e-9);
        }

        #[test]
        fn mismatches_do_not_move_the_score(
            base in proptest::collection::vec(0.0f64..2.0, 1..10),
            extra in proptest::collection::vec(0.0f64..5.0, 0..10),
        ) {
            let mut recs: Vec<ScoredSequence> = base.iter().map(|&c| seq(1, c)).collect();
            let before = action_score(&recs).unwrap();
            recs.extend(extra.iter().map(|&c| seq(0, c)));
            prop_assert_eq!(action_score(&recs).unwrap(), before);
        }

        #[test]
        fn step_success_implies_element_and_value(
            x in 0.0f64..=1.0, y in 0.0f64..=1.0, value in "[a-zA-Z]{1,6}", typed in "[a-zA-Z]{1,6}"
        ) {
            let rec = offline(vec![r(0.2, 0.2, 0.8, 0.8)], OperationKind::Type, Some(&value));
            let pt = p(x, y);
            if step_success(pt, "TYPE", Some(&typed), &rec) {
                prop_assert!(element_accuracy(pt, &rec));
                prop_assert_eq!(op_f1("type", Some(&typed.to_lowercase()), "type", Some(&value.to_lowercase())), 1.0);
            }
        }

        #[test]
        fn aggregation_ignores_order(
            vals in proptest::collection::vec((any::<bool>(), 0.0f64..1.0, any::<bool>(), 0usize..3), 0..30),
            seed in any::<u64>(),
        ) {
            let recs: Vec<RecordScore> = vals.iter().enumerate().map(|(i, &(e, f, s, sp))| {
                offline_score(&format!("r{i:03}"), ["a", "b", "c"][sp], e, f, s)
            }).collect();
            let mut shuffled = recs.clone();
            let len = shuffled.len();
            if len > 1 {
                let mut state = seed;
                for i in (1..len).rev() {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    shuffled.swap(i, (state >> 33) as usize % (i + 1));
                }
            }
            let a = aggregate_report(recs, &[SliceKey::Split]);
            let b = aggregate_report(shuffled, &[SliceKey::Split]);
            prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
    }
}
