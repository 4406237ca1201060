//! On-disk formats.
//!
//! * Record files: UTF-8, one JSON object per line with exactly the fields
//!   `id`, `swift_logits`, `encoder_features` (optional), `swift_pred`,
//!   `super_pred`, `label` (optional). Predictions are a class id or a list
//!   of token ids.
//! * Manifest: a sidecar with the same stem and a `.manifest` extension,
//!   `{"num_classes", "feature_dim", "task_kind"}`.
//! * Head checkpoint: one object `{"num_classes", "feature_dim", "weights", "bias"}`.
//! * Curve export: CSV with header
//!   `threshold,swift_ratio,accuracy,expected_flops,flops_speedup`.
//! * Decisions: record lines plus `route` and `score`.
//!
//! Every writer goes through [`write_atomic`], so a failed run never leaves
//! a partial file behind.

use std::borrow::Cow;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use elang_core::{
    Dataset, EnergyHead, Prediction, RoutingDecision, RoutingReport, SampleRecord, TaskKind,
    TradeoffCurve,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: shape error: {message}")]
    Shape { line: usize, message: String },

    #[error("line {line}: value error: {message}")]
    Value { line: usize, message: String },

    #[error("line {line}: invalid record: {message}")]
    Invalid { line: usize, message: String },

    #[error("manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] elang_core::Error),
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum PredictionLine {
    Label(u32),
    Sequence(Vec<u32>),
}

impl From<PredictionLine> for Prediction {
    fn from(p: PredictionLine) -> Self {
        match p {
            PredictionLine::Label(l) => Prediction::Label(l),
            PredictionLine::Sequence(s) => Prediction::Sequence(s),
        }
    }
}

impl From<&Prediction> for PredictionLine {
    fn from(p: &Prediction) -> Self {
        match p {
            Prediction::Label(l) => PredictionLine::Label(*l),
            Prediction::Sequence(s) => PredictionLine::Sequence(s.clone()),
        }
    }
}

/// `null` stands in for a non-finite number on read; validation rejects it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(transparent)]
struct Number(Option<f64>);

impl Number {
    fn get(self) -> f64 {
        self.0.unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    swift_logits: Vec<Vec<Number>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    encoder_features: Option<Vec<Number>>,
    swift_pred: PredictionLine,
    super_pred: PredictionLine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<PredictionLine>,
}

impl From<RecordLine> for SampleRecord {
    fn from(r: RecordLine) -> Self {
        SampleRecord {
            id: r.id,
            swift_logits: r
                .swift_logits
                .into_iter()
                .map(|row| row.into_iter().map(Number::get).collect())
                .collect(),
            encoder_features: r
                .encoder_features
                .map(|f| f.into_iter().map(Number::get).collect()),
            swift_pred: r.swift_pred.into(),
            super_pred: r.super_pred.into(),
            label: r.label.map(Into::into),
        }
    }
}

impl From<&SampleRecord> for RecordLine {
    fn from(r: &SampleRecord) -> Self {
        let num = |v: &f64| Number(Some(*v));
        RecordLine {
            id: r.id.clone(),
            swift_logits: r
                .swift_logits
                .iter()
                .map(|row| row.iter().map(num).collect())
                .collect(),
            encoder_features: r
                .encoder_features
                .as_ref()
                .map(|f| f.iter().map(num).collect()),
            swift_pred: (&r.swift_pred).into(),
            super_pred: (&r.super_pred).into(),
            label: r.label.as_ref().map(Into::into),
        }
    }
}

/// Replaces bare non-finite literals (`NaN`, `Infinity`, `inf`, with an
/// optional sign) outside strings by `null`, so they surface as value errors
/// instead of opaque parse errors.
fn mask_non_finite(line: &str) -> Cow<'_, str> {
    const WORDS: [&str; 3] = ["NaN", "Infinity", "inf"];
    if !WORDS.iter().any(|w| line.contains(w)) {
        return Cow::Borrowed(line);
    }
    let bytes = line.as_bytes();
    let mut out = String::with_capacity(line.len());
    let (mut i, mut in_string, mut escaped) = (0, false, false);
    'scan: while i < bytes.len() {
        let b = bytes[i];
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
        } else if b == b'"' {
            in_string = true;
        } else {
            let sign = usize::from(b == b'-' || b == b'+');
            for w in WORDS {
                let end = i + sign + w.len();
                let boundary = bytes.get(end).is_none_or(|c| !c.is_ascii_alphanumeric());
                if line[i + sign..].starts_with(w) && boundary {
                    out.push_str("null");
                    i = end;
                    continue 'scan;
                }
            }
        }
        // multi-byte chars are copied one byte at a time; they only occur
        // inside strings, which are copied verbatim
        let ch = line[i..].chars().next().expect("in bounds");
        out.push(ch);
        i += ch.len_utf8();
    }
    Cow::Owned(out)
}

/// Parses one record line. `line_no` is 1-based and only used in errors.
pub fn parse_record_line(text: &str, line_no: usize) -> Result<SampleRecord> {
    let masked = mask_non_finite(text);
    let line: RecordLine = serde_json::from_str(&masked).map_err(|e| FormatError::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    Ok(line.into())
}

fn at_line(err: elang_core::Error, lines: &[usize]) -> FormatError {
    use elang_core::Error as E;
    match err {
        E::Value { index, message } => FormatError::Value {
            line: lines[index],
            message,
        },
        E::Shape { index, message } => FormatError::Shape {
            line: lines[index],
            message,
        },
        E::InvalidRecord { index, message } => FormatError::Invalid {
            line: lines[index],
            message,
        },
        other => other.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub num_classes: usize,
    pub feature_dim: Option<usize>,
    pub task_kind: String,
}

impl Manifest {
    pub fn of(dataset: &Dataset) -> Self {
        Manifest {
            num_classes: dataset.num_classes(),
            feature_dim: dataset.feature_dim(),
            task_kind: dataset.task_kind().as_str().to_string(),
        }
    }
}

/// `data.jsonl` -> `data.manifest`.
pub fn manifest_path(records: &Path) -> PathBuf {
    records.with_extension("manifest")
}

/// Reads records from any line source. Blank lines are skipped but still
/// counted.
pub fn read_dataset(reader: impl BufRead) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let text = text.map_err(|e| FormatError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        records.push(parse_record_line(&text, i + 1)?);
        lines.push(i + 1);
    }
    Dataset::new(records).map_err(|e| at_line(e, &lines))
}

/// Loads a record file and checks it against its manifest. The manifest is
/// `manifest` when given, else the sidecar next to `path` if it exists.
pub fn load_dataset(path: &Path, manifest: Option<&Path>) -> Result<Dataset> {
    let file = File::open(path).map_err(io_err(path))?;
    let dataset = read_dataset(BufReader::new(file))?;
    let sidecar = manifest_path(path);
    let manifest = match manifest {
        Some(m) => Some(m.to_path_buf()),
        None => sidecar.exists().then_some(sidecar),
    };
    if let Some(m) = manifest {
        let declared = read_manifest(&m)?;
        let found = Manifest::of(&dataset);
        if declared != found {
            return Err(FormatError::Manifest {
                path: m,
                message: format!("declares {declared:?} but the records have {found:?}"),
            });
        }
    }
    Ok(dataset)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let manifest: Manifest =
        serde_json::from_str(text.trim()).map_err(|e| FormatError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    manifest
        .task_kind
        .parse::<TaskKind>()
        .map_err(|e| FormatError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    Ok(manifest)
}

/// Writes `path` through a temporary file in the same directory and renames
/// it into place only after `fill` succeeds.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))?;
    }
    tmp.persist(path).map_err(|e| FormatError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn write_records(w: &mut dyn Write, records: &[SampleRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, &RecordLine::from(r))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes the record file and its sidecar manifest.
pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    write_atomic(path, |w| write_records(w, dataset.records()))?;
    write_atomic(&manifest_path(path), |w| {
        serde_json::to_writer(&mut *w, &Manifest::of(dataset))?;
        w.write_all(b"\n")
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadCheckpoint {
    num_classes: usize,
    feature_dim: usize,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

pub fn save_head(path: &Path, head: &EnergyHead) -> Result<()> {
    let ckpt = HeadCheckpoint {
        num_classes: head.num_classes(),
        feature_dim: head.feature_dim(),
        weights: head.weights().to_vec(),
        bias: head.bias().to_vec(),
    };
    write_atomic(path, |w| {
        serde_json::to_writer(&mut *w, &ckpt)?;
        w.write_all(b"\n")
    })
}

pub fn load_head(path: &Path) -> Result<EnergyHead> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let ckpt: HeadCheckpoint =
        serde_json::from_str(text.trim()).map_err(|e| FormatError::Parse {
            line: 1,
            message: e.to_string(),
        })?;
    let head = EnergyHead::from_parts(ckpt.weights, ckpt.bias)?;
    if head.num_classes() != ckpt.num_classes || head.feature_dim() != ckpt.feature_dim {
        return Err(FormatError::Shape {
            line: 1,
            message: format!(
                "checkpoint declares {}x{} but stores {}x{}",
                ckpt.num_classes,
                ckpt.feature_dim,
                head.num_classes(),
                head.feature_dim()
            ),
        });
    }
    Ok(head)
}

#[derive(Serialize)]
struct DecisionLine<'a> {
    #[serde(flatten)]
    record: RecordLine,
    route: &'a str,
    score: f64,
}

/// Record lines annotated with the routing decision.
pub fn write_decisions(
    w: &mut dyn Write,
    dataset: &Dataset,
    decisions: &[RoutingDecision],
) -> io::Result<()> {
    for (r, d) in dataset.records().iter().zip(decisions) {
        let line = DecisionLine {
            record: r.into(),
            route: d.route.as_str(),
            score: d.score,
        };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    id: String,
    score: f64,
}

pub fn write_scores(w: &mut dyn Write, dataset: &Dataset, scores: &[f64]) -> io::Result<()> {
    for (r, &score) in dataset.records().iter().zip(scores) {
        serde_json::to_writer(
            &mut *w,
            &ScoreLine {
                id: r.id.clone(),
                score,
            },
        )?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Threshold text form: a decimal, `+inf` or `-inf`.
pub fn format_threshold(t: f64) -> String {
    if t == f64::INFINITY {
        "+inf".into()
    } else if t == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{t:.16e}")
    }
}

pub fn parse_threshold(text: &str) -> Option<f64> {
    match text.trim() {
        "+inf" | "inf" | "+Infinity" | "Infinity" => Some(f64::INFINITY),
        "-inf" | "-Infinity" => Some(f64::NEG_INFINITY),
        other => other.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

/// JSON form of a threshold: a number, or `"+inf"` / `"-inf"`.
pub fn threshold_json(t: f64) -> serde_json::Value {
    if t.is_finite() {
        serde_json::json!(t)
    } else {
        serde_json::json!(format_threshold(t))
    }
}

/// Serde adapter for thresholds in JSON: a number, or `"+inf"` / `"-inf"`.
pub mod threshold_serde {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
        super::threshold_json(*t).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let value = serde_json::Value::deserialize(d)?;
        super::threshold_from_json(&value)
            .ok_or_else(|| D::Error::custom(format!("bad threshold {value}")))
    }
}

/// Inverse of [`threshold_json`]; strings go through [`parse_threshold`].
pub fn threshold_from_json(value: &serde_json::Value) -> Option<f64> {
    match value {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => parse_threshold(s),
        _ => None,
    }
}

pub const CURVE_HEADER: [&str; 5] = [
    "threshold",
    "swift_ratio",
    "accuracy",
    "expected_flops",
    "flops_speedup",
];

fn decimal(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_curve(w: &mut dyn Write, curve: &TradeoffCurve) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CURVE_HEADER)?;
    for p in &curve.points {
        out.write_record([
            format_threshold(p.threshold),
            decimal(p.swift_ratio),
            p.accuracy.map(decimal).unwrap_or_default(),
            decimal(p.expected_flops),
            decimal(p.flops_speedup),
        ])?;
    }
    out.flush()
}

/// One parsed curve row.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub threshold: f64,
    pub swift_ratio: f64,
    pub accuracy: Option<f64>,
    pub expected_flops: f64,
    pub flops_speedup: f64,
}

impl From<&RoutingReport> for CurveRow {
    fn from(p: &RoutingReport) -> Self {
        CurveRow {
            threshold: p.threshold,
            swift_ratio: p.swift_ratio,
            accuracy: p.accuracy,
            expected_flops: p.expected_flops,
            flops_speedup: p.flops_speedup,
        }
    }
}

pub fn read_curve(r: impl io::Read) -> Result<Vec<CurveRow>> {
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers().map_err(|e| FormatError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(CURVE_HEADER) {
        return Err(FormatError::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| FormatError::Parse {
            line,
            message: e.to_string(),
        })?;
        let num = |k: usize| -> Result<f64> {
            rec[k].parse().map_err(|_| FormatError::Parse {
                line,
                message: format!("bad {} {:?}", CURVE_HEADER[k], &rec[k]),
            })
        };
        rows.push(CurveRow {
            threshold: parse_threshold(&rec[0]).ok_or_else(|| FormatError::Parse {
                line,
                message: format!("bad threshold {:?}", &rec[0]),
            })?,
            swift_ratio: num(1)?,
            accuracy: if rec[2].is_empty() {
                None
            } else {
                Some(num(2)?)
            },
            expected_flops: num(3)?,
            flops_speedup: num(4)?,
        });
    }
    Ok(rows)
}
