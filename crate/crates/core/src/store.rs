//! Score tables: parsing, validation and the family index.
//!
//! All scores are stored as fractions in `[0, 1]`. Tables given in percent
//! are detected per column and converted once at ingestion; the conversion is
//! recorded in [`PanelMetadata::notes`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CapeError, Result};

pub const HELLASWAG: &str = "hellaswag";
pub const TRUTHFULQA: &str = "truthfulqa_mc1";
pub const ARC: &str = "arc";
pub const WINOGRANDE: &str = "winogrande";
pub const MMLU: &str = "mmlu";

/// The five base benchmarks, in the canonical axis order used by PCA and the ODE.
pub const CORE_BENCHMARKS: [&str; 5] = [HELLASWAG, TRUTHFULQA, ARC, WINOGRANDE, MMLU];

pub const BASE_HEADER: [&str; 11] = [
    "family",
    "name",
    "params_b",
    "d_model",
    "n_layers",
    "hellaswag",
    "truthfulqa_mc1",
    "arc",
    "winogrande",
    "mmlu",
    "tags",
];
pub const FRONTIER_HEADER: [&str; 6] =
    ["lab", "model", "swe_verified", "gpqa_diamond", "ifeval", "release_date"];
pub const LOSS_HEADER: [&str; 4] = ["family", "params_b", "loss_nats", "grad_norm"];

/// A column whose maximum exceeds this is read as percent.
const PERCENT_DETECT: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Json,
}

impl std::str::FromStr for TableFormat {
    type Err = CapeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(CapeError::InvalidArgument(format!("unknown table format {other:?}"))),
        }
    }
}

impl TableFormat {
    /// Guess from a file extension, defaulting to CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub family: String,
    pub name: String,
    /// Parameter count in billions.
    pub params: f64,
    pub d_model: Option<u32>,
    pub n_layers: Option<u32>,
    /// Benchmark id to fraction in `[0, 1]` (width-normalized ids may exceed 1).
    pub scores: BTreeMap<String, f64>,
    pub tags: Vec<String>,
}

impl ModelRecord {
    pub fn score(&self, benchmark: &str) -> Result<f64> {
        self.scores.get(benchmark).copied().ok_or_else(|| CapeError::MissingBenchmark {
            model: self.name.clone(),
            benchmark: benchmark.to_string(),
        })
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    pub fn log10_params(&self) -> f64 {
        self.params.log10()
    }
}

/// Size-ordered ladder of models from one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySeries {
    pub family: String,
    pub models: Vec<ModelRecord>,
}

impl FamilySeries {
    /// Sorts by parameter count (name breaks ties) and validates the ladder.
    pub fn new(family: impl Into<String>, mut models: Vec<ModelRecord>) -> Result<Self> {
        let family = family.into();
        if models.is_empty() {
            return Err(CapeError::UnknownFamily(family));
        }
        if models.len() < 2 {
            return Err(CapeError::SingletonFamily(family));
        }
        models.sort_by(|a, b| a.params.total_cmp(&b.params).then_with(|| a.name.cmp(&b.name)));
        for pair in models.windows(2) {
            if pair[1].params <= pair[0].params {
                return Err(CapeError::ZeroWidthInterval { family, params_b: pair[0].params });
            }
        }
        Ok(Self { family, models })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn scores(&self, benchmark: &str) -> Result<Vec<f64>> {
        self.models.iter().map(|m| m.score(benchmark)).collect()
    }

    pub fn params(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.params).collect()
    }

    /// Consecutive-size intervals with their geometric-mean abscissa.
    pub fn intervals(&self) -> Vec<Interval<'_>> {
        consecutive_intervals(self)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Interval<'a> {
    pub left: &'a ModelRecord,
    pub right: &'a ModelRecord,
    /// Geometric mean of the endpoint sizes, billions.
    pub n_mid: f64,
}

pub fn consecutive_intervals(series: &FamilySeries) -> Vec<Interval<'_>> {
    series
        .models
        .windows(2)
        .map(|w| Interval { left: &w[0], right: &w[1], n_mid: (w[0].params * w[1].params).sqrt() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRecord {
    pub lab: String,
    pub model: String,
    pub swe: f64,
    pub gpqa: f64,
    pub ifeval: Option<f64>,
    pub release_date: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    /// Billions of parameters.
    pub params: f64,
    /// Validation loss, nats.
    pub loss: f64,
    pub grad_norm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PanelMetadata {
    pub provenance: Vec<String>,
    /// Always `"mc1"`; MC2 tables are rejected.
    pub tqa_variant: String,
    /// Benchmark ids beyond the five core ones, in column order.
    pub extensions: Vec<String>,
    /// Unit conversions and other ingestion remarks.
    pub notes: Vec<String>,
}

/// Validated, immutable collection of score tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub records: Vec<ModelRecord>,
    pub frontier: Vec<FrontierRecord>,
    pub losses: BTreeMap<String, Vec<LossPoint>>,
    pub metadata: PanelMetadata,
}

impl Panel {
    /// Validates invariants and sorts records by (family, params, name).
    pub fn new(
        mut records: Vec<ModelRecord>,
        frontier: Vec<FrontierRecord>,
        mut losses: BTreeMap<String, Vec<LossPoint>>,
        mut metadata: PanelMetadata,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert((r.family.clone(), r.name.clone())) {
                return Err(CapeError::DuplicateModel {
                    family: r.family.clone(),
                    name: r.name.clone(),
                });
            }
        }
        records.sort_by(|a, b| {
            a.family
                .cmp(&b.family)
                .then(a.params.total_cmp(&b.params))
                .then_with(|| a.name.cmp(&b.name))
        });
        for pts in losses.values_mut() {
            pts.sort_by(|a, b| a.params.total_cmp(&b.params));
        }
        if metadata.tqa_variant.is_empty() {
            metadata.tqa_variant = "mc1".into();
        }
        Ok(Self { records, frontier, losses, metadata })
    }

    pub fn families(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.family.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn family_records(&self, family: &str) -> Vec<&ModelRecord> {
        self.records.iter().filter(|r| r.family == family).collect()
    }

    pub fn family_series(&self, family: &str) -> Result<FamilySeries> {
        family_series(self, family)
    }

    /// Base-panel records serialized in the documented CSV schema.
    pub fn records_to_csv(&self) -> String {
        let mut header: Vec<&str> = BASE_HEADER[..10].to_vec();
        header.extend(self.metadata.extensions.iter().map(String::as_str));
        header.push("tags");
        let mut out = header.join(",");
        out.push('\n');
        for r in &self.records {
            let mut cells = vec![
                csv_escape(&r.family),
                csv_escape(&r.name),
                fmt_f64(r.params),
                r.d_model.map(|d| d.to_string()).unwrap_or_default(),
                r.n_layers.map(|d| d.to_string()).unwrap_or_default(),
            ];
            for b in CORE_BENCHMARKS.iter().copied().chain(self.metadata.extensions.iter().map(String::as_str)) {
                cells.push(r.scores.get(b).map(|v| fmt_f64(*v)).unwrap_or_default());
            }
            cells.push(csv_escape(&r.tags.join(";")));
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn frontier_to_csv(&self) -> String {
        let mut out = FRONTIER_HEADER.join(",");
        out.push('\n');
        for f in &self.frontier {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_escape(&f.lab),
                csv_escape(&f.model),
                fmt_f64(f.swe),
                fmt_f64(f.gpqa),
                f.ifeval.map(fmt_f64).unwrap_or_default(),
                f.release_date.clone().unwrap_or_default()
            );
        }
        out
    }

    pub fn losses_to_csv(&self) -> String {
        let mut out = LOSS_HEADER.join(",");
        out.push('\n');
        for (family, pts) in &self.losses {
            for p in pts {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    csv_escape(family),
                    fmt_f64(p.params),
                    fmt_f64(p.loss),
                    p.grad_norm.map(fmt_f64).unwrap_or_default()
                );
            }
        }
        out
    }
}

fn fmt_f64(v: f64) -> String {
    // `{}` prints the shortest representation that round-trips.
    format!("{v}")
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn family_series(panel: &Panel, family: &str) -> Result<FamilySeries> {
    let models: Vec<ModelRecord> =
        panel.records.iter().filter(|r| r.family == family).cloned().collect();
    if models.is_empty() {
        return Err(CapeError::UnknownFamily(family.to_string()));
    }
    FamilySeries::new(family, models)
}

/// One parsed row before unit conversion; `line` is 1-based including the header.
struct RawRow {
    line: usize,
    cells: BTreeMap<String, Option<String>>,
}

fn rows_from_csv(text: &str) -> Result<(Vec<String>, Vec<RawRow>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CapeError::MalformedRow { line: 1, reason: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CapeError::MalformedRow { line, reason: e.to_string() })?;
        let cells = headers
            .iter()
            .zip(rec.iter())
            .map(|(h, v)| {
                let v = v.trim();
                (h.clone(), (!v.is_empty()).then(|| v.to_string()))
            })
            .collect();
        rows.push(RawRow { line, cells });
    }
    Ok((headers, rows))
}

fn rows_from_json(text: &str, expected: &[&str]) -> Result<(Vec<String>, Vec<RawRow>)> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| CapeError::MalformedRow { line: e.line(), reason: e.to_string() })?;
    let Value::Array(items) = value else {
        return Err(CapeError::MalformedRow { line: 1, reason: "expected a JSON array of rows".into() });
    };
    let mut headers: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::with_capacity(items.len());
    for (i, item) in items.into_iter().enumerate() {
        let line = i + 1;
        let Value::Object(map) = item else {
            return Err(CapeError::MalformedRow { line, reason: "row is not an object".into() });
        };
        let mut cells = BTreeMap::new();
        for (k, v) in map {
            let cell = match v {
                Value::Null => None,
                Value::String(s) if s.trim().is_empty() => None,
                Value::String(s) => Some(s.trim().to_string()),
                Value::Number(n) => Some(n.to_string()),
                Value::Array(a) => Some(
                    a.iter().filter_map(|x| x.as_str()).collect::<Vec<_>>().join(";"),
                ),
                other => {
                    return Err(CapeError::MalformedRow {
                        line,
                        reason: format!("unsupported value for {k:?}: {other}"),
                    })
                }
            };
            if !headers.contains(&k) {
                // Extension benchmarks go just before `tags`, in first-seen order.
                let pos = headers.iter().position(|h| h == "tags").unwrap_or(headers.len());
                headers.insert(pos, k.clone());
            }
            cells.insert(k, cell);
        }
        rows.push(RawRow { line, cells });
    }
    Ok((headers, rows))
}

fn parse_f64(row: &RawRow, column: &str) -> Result<Option<f64>> {
    match row.cells.get(column).and_then(|c| c.as_deref()) {
        None => Ok(None),
        Some(s) => s.parse::<f64>().map(Some).map_err(|_| CapeError::MalformedRow {
            line: row.line,
            reason: format!("column {column}: cannot parse {s:?} as a number"),
        }),
    }
}

fn parse_u32(row: &RawRow, column: &str) -> Result<Option<u32>> {
    match parse_f64(row, column)? {
        None => Ok(None),
        Some(v) if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(Some(v as u32)),
        Some(v) => Err(CapeError::MalformedRow {
            line: row.line,
            reason: format!("column {column}: expected a positive integer, got {v}"),
        }),
    }
}

fn required_str(row: &RawRow, column: &str) -> Result<String> {
    row.cells.get(column).cloned().flatten().ok_or_else(|| CapeError::MalformedRow {
        line: row.line,
        reason: format!("missing required column {column}"),
    })
}

/// Per-column fraction/percent detection. A column is read as percent when
/// its maximum exceeds 1.5 and none of its nonzero cells looks like a fraction;
/// otherwise values above 1 are range errors.
fn score_columns(
    rows: &[RawRow],
    columns: &[String],
    notes: &mut Vec<String>,
) -> Result<BTreeMap<String, Vec<Option<f64>>>> {
    let mut out = BTreeMap::new();
    for col in columns {
        let values: Vec<Option<f64>> = rows.iter().map(|r| parse_f64(r, col)).collect::<Result<_>>()?;
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        let max = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let percent = max > PERCENT_DETECT && present.iter().all(|&v| v == 0.0 || v > 1.0);
        if percent {
            notes.push(format!("column {col}: percent detected (max {max}), converted to fractions"));
        }
        let mut converted = Vec::with_capacity(values.len());
        for (row, v) in rows.iter().zip(values) {
            let v = v.map(|v| if percent { v / 100.0 } else { v });
            if let Some(x) = v {
                if !(0.0..=1.0).contains(&x) || !x.is_finite() {
                    return Err(CapeError::ScoreOutOfRange { row: row.line, column: col.clone(), value: x });
                }
            }
            converted.push(v);
        }
        out.insert(col.clone(), converted);
    }
    Ok(out)
}

fn check_tqa_variant(headers: &[String]) -> Result<()> {
    if let Some(h) = headers.iter().find(|h| {
        let h = h.to_ascii_lowercase();
        (h.starts_with("truthfulqa") || h.starts_with("tqa")) && h != TRUTHFULQA
    }) {
        return Err(CapeError::MixedTqaVariant { detail: format!("column {h:?}") });
    }
    Ok(())
}

/// Parse a base-model score table in the documented schema.
pub fn ingest_table(text: &str, format: TableFormat) -> Result<Panel> {
    let (headers, rows) = match format {
        TableFormat::Csv => rows_from_csv(text)?,
        TableFormat::Json => rows_from_json(text, &BASE_HEADER)?,
    };
    check_tqa_variant(&headers)?;
    let fixed_prefix = &BASE_HEADER[..10];
    if headers.len() < BASE_HEADER.len()
        || headers[..10].iter().map(String::as_str).ne(fixed_prefix.iter().copied())
        || headers.last().map(String::as_str) != Some("tags")
    {
        return Err(CapeError::MalformedRow {
            line: 1,
            reason: format!("header must be `{}` (extension benchmarks may precede `tags`)", BASE_HEADER.join(",")),
        });
    }
    let extensions: Vec<String> = headers[10..headers.len() - 1].to_vec();
    let benchmarks: Vec<String> =
        CORE_BENCHMARKS.iter().map(|s| s.to_string()).chain(extensions.iter().cloned()).collect();

    let mut metadata = PanelMetadata { tqa_variant: "mc1".into(), extensions, ..Default::default() };
    let scores = score_columns(&rows, &benchmarks, &mut metadata.notes)?;

    let mut records = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let params = parse_f64(row, "params_b")?.ok_or_else(|| CapeError::MalformedRow {
            line: row.line,
            reason: "missing params_b".into(),
        })?;
        if !(params > 0.0 && params.is_finite()) {
            return Err(CapeError::MalformedRow { line: row.line, reason: format!("params_b must be > 0, got {params}") });
        }
        let tags: Vec<String> = row
            .cells
            .get("tags")
            .cloned()
            .flatten()
            .map(|t| t.split(';').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default();
        if tags.iter().any(|t| t.eq_ignore_ascii_case("tqa:mc2")) {
            return Err(CapeError::MixedTqaVariant { detail: format!("row {} tagged tqa:mc2", row.line) });
        }
        let model_scores = benchmarks
            .iter()
            .filter_map(|b| scores[b][i].map(|v| (b.clone(), v)))
            .collect();
        records.push(ModelRecord {
            family: required_str(row, "family")?,
            name: required_str(row, "name")?,
            params,
            d_model: parse_u32(row, "d_model")?,
            n_layers: parse_u32(row, "n_layers")?,
            scores: model_scores,
            tags,
        });
    }
    Panel::new(records, Vec::new(), BTreeMap::new(), metadata)
}

pub fn ingest_frontier(text: &str, format: TableFormat) -> Result<(Vec<FrontierRecord>, Vec<String>)> {
    let (headers, rows) = match format {
        TableFormat::Csv => rows_from_csv(text)?,
        TableFormat::Json => rows_from_json(text, &FRONTIER_HEADER)?,
    };
    if headers.iter().map(String::as_str).ne(FRONTIER_HEADER.iter().copied()) {
        return Err(CapeError::MalformedRow {
            line: 1,
            reason: format!("frontier header must be `{}`", FRONTIER_HEADER.join(",")),
        });
    }
    let mut notes = Vec::new();
    let cols: Vec<String> = ["swe_verified", "gpqa_diamond", "ifeval"].iter().map(|s| s.to_string()).collect();
    let scores = score_columns(&rows, &cols, &mut notes)?;
    let mut out = Vec::with_capacity(rows.len());
    let mut seen = BTreeSet::new();
    for (i, row) in rows.iter().enumerate() {
        let lab = required_str(row, "lab")?;
        let model = required_str(row, "model")?;
        if !seen.insert((lab.clone(), model.clone())) {
            return Err(CapeError::DuplicateModel { family: lab, name: model });
        }
        let missing = |c: &str| CapeError::MalformedRow { line: row.line, reason: format!("missing {c}") };
        let release_date = row.cells.get("release_date").cloned().flatten();
        if let Some(d) = &release_date {
            if !is_iso_date(d) {
                return Err(CapeError::MalformedRow { line: row.line, reason: format!("release_date {d:?} is not YYYY-MM-DD") });
            }
        }
        out.push(FrontierRecord {
            lab,
            model,
            swe: scores["swe_verified"][i].ok_or_else(|| missing("swe_verified"))?,
            gpqa: scores["gpqa_diamond"][i].ok_or_else(|| missing("gpqa_diamond"))?,
            ifeval: scores["ifeval"][i],
            release_date,
        });
    }
    Ok((out, notes))
}

fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter().enumerate().all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
        && matches!(s[5..7].parse::<u32>(), Ok(1..=12))
        && matches!(s[8..10].parse::<u32>(), Ok(1..=31))
}

pub fn ingest_losses(text: &str, format: TableFormat) -> Result<BTreeMap<String, Vec<LossPoint>>> {
    let (headers, rows) = match format {
        TableFormat::Csv => rows_from_csv(text)?,
        TableFormat::Json => rows_from_json(text, &LOSS_HEADER)?,
    };
    if headers.iter().map(String::as_str).ne(LOSS_HEADER.iter().copied()) {
        return Err(CapeError::MalformedRow {
            line: 1,
            reason: format!("loss header must be `{}`", LOSS_HEADER.join(",")),
        });
    }
    let mut out: BTreeMap<String, Vec<LossPoint>> = BTreeMap::new();
    for row in &rows {
        let bad = |reason: String| CapeError::MalformedRow { line: row.line, reason };
        let family = required_str(row, "family")?;
        let params = parse_f64(row, "params_b")?.ok_or_else(|| bad("missing params_b".into()))?;
        let loss = parse_f64(row, "loss_nats")?.ok_or_else(|| bad("missing loss_nats".into()))?;
        let grad_norm = parse_f64(row, "grad_norm")?;
        if params <= 0.0 || loss <= 0.0 || grad_norm.is_some_and(|g| g <= 0.0) {
            return Err(bad("params_b, loss_nats and grad_norm must be positive".into()));
        }
        out.entry(family).or_default().push(LossPoint { params, loss, grad_norm });
    }
    for pts in out.values_mut() {
        pts.sort_by(|a, b| a.params.total_cmp(&b.params));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "family,name,params_b,d_model,n_layers,hellaswag,truthfulqa_mc1,arc,winogrande,mmlu,tags\n";

    fn table(rows: &[&str]) -> String {
        let mut s = HEADER.to_string();
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn three_rows_one_family() {
        let t = table(&[
            "toy,toy-3b,3,2560,32,0.6,0.22,0.4,0.6,0.26,",
            "toy,toy-1b,1,2048,16,0.5,0.24,0.3,0.55,0.25,curated",
            "toy,toy-0.1b,0.1,768,12,0.3,0.25,0.2,0.5,0.24,",
        ]);
        let panel = ingest_table(&t, TableFormat::Csv).unwrap();
        let series = panel.family_series("toy").unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(series.params(), vec![0.1, 1.0, 3.0]);
        assert!(series.models[1].has_tag("curated"));
    }

    #[test]
    fn out_of_range_score() {
        let t = table(&[
            "toy,a,1,,,0.5,0.2,0.3,0.5,0.25,",
            "toy,b,2,,,1.7,0.2,0.3,0.5,0.25,",
            "toy,c,3,,,0.6,0.2,0.3,0.5,0.25,",
        ]);
        let err = ingest_table(&t, TableFormat::Csv).unwrap_err();
        assert_eq!(
            err,
            CapeError::ScoreOutOfRange { row: 3, column: "hellaswag".into(), value: 1.7 }
        );
    }

    #[test]
    fn percent_columns_are_converted() {
        let t = table(&["toy,a,1,,,50,20,30,50,25,", "toy,b,2,,,60,21,35,55,26,"]);
        let panel = ingest_table(&t, TableFormat::Csv).unwrap();
        assert_eq!(panel.records[1].scores["hellaswag"], 0.6);
        assert_eq!(panel.metadata.notes.len(), 5);
    }

    #[test]
    fn duplicate_model_rejected() {
        let t = table(&["toy,a,1,,,0.5,0.2,0.3,0.5,0.25,", "toy,a,2,,,0.5,0.2,0.3,0.5,0.25,"]);
        assert!(matches!(ingest_table(&t, TableFormat::Csv), Err(CapeError::DuplicateModel { .. })));
    }

    #[test]
    fn mc2_column_rejected() {
        let t = "family,name,params_b,d_model,n_layers,hellaswag,truthfulqa_mc1,arc,winogrande,mmlu,truthfulqa_mc2,tags\n\
                 toy,a,1,,,0.5,0.2,0.3,0.5,0.25,0.4,\n";
        assert!(matches!(ingest_table(t, TableFormat::Csv), Err(CapeError::MixedTqaVariant { .. })));
    }

    #[test]
    fn wrong_header_and_bad_number() {
        assert!(matches!(
            ingest_table("family,name\nx,y\n", TableFormat::Csv),
            Err(CapeError::MalformedRow { line: 1, .. })
        ));
        let t = table(&["toy,a,abc,,,0.5,0.2,0.3,0.5,0.25,"]);
        assert!(matches!(ingest_table(&t, TableFormat::Csv), Err(CapeError::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn extension_benchmarks_are_kept() {
        let t = "family,name,params_b,d_model,n_layers,hellaswag,truthfulqa_mc1,arc,winogrande,mmlu,gsm8k,tags\n\
                 toy,a,1,,,0.5,0.2,0.3,0.5,0.25,0.1,\n";
        let panel = ingest_table(t, TableFormat::Csv).unwrap();
        assert_eq!(panel.metadata.extensions, vec!["gsm8k".to_string()]);
        assert_eq!(panel.records[0].scores["gsm8k"], 0.1);
        assert!(panel.records_to_csv().starts_with("family,name,params_b,d_model,n_layers,hellaswag,truthfulqa_mc1,arc,winogrande,mmlu,gsm8k,tags"));
    }

    #[test]
    fn json_mirror_matches_csv() {
        let csv = table(&["toy,a,1,2048,16,0.5,0.2,0.3,0.5,0.25,x;y", "toy,b,2,2560,24,0.6,,0.3,0.5,0.25,"]);
        let json = r#"[
            {"family":"toy","name":"a","params_b":1,"d_model":2048,"n_layers":16,"hellaswag":0.5,
             "truthfulqa_mc1":0.2,"arc":0.3,"winogrande":0.5,"mmlu":0.25,"tags":"x;y"},
            {"family":"toy","name":"b","params_b":2,"d_model":2560,"n_layers":24,"hellaswag":0.6,
             "truthfulqa_mc1":null,"arc":0.3,"winogrande":0.5,"mmlu":0.25,"tags":""}
        ]"#;
        let a = ingest_table(&csv, TableFormat::Csv).unwrap();
        let b = ingest_table(json, TableFormat::Json).unwrap();
        assert_eq!(a, b);
        assert!(!a.records[1].scores.contains_key(TRUTHFULQA));
    }

    #[test]
    fn family_series_errors_and_order() {
        let t = table(&[
            "a,a-2,2,,,0.5,0.2,0.3,0.5,0.25,",
            "a,a-1,1,,,0.5,0.2,0.3,0.5,0.25,",
            "b,b-1,1,,,0.5,0.2,0.3,0.5,0.25,",
            "c,c-1,1,,,0.5,0.2,0.3,0.5,0.25,",
            "c,c-1b,1,,,0.5,0.2,0.3,0.5,0.25,",
        ]);
        let panel = ingest_table(&t, TableFormat::Csv).unwrap();
        assert_eq!(panel.family_series("a").unwrap().models[0].name, "a-1");
        assert_eq!(panel.family_series("b").unwrap_err(), CapeError::SingletonFamily("b".into()));
        assert_eq!(panel.family_series("zzz").unwrap_err(), CapeError::UnknownFamily("zzz".into()));
        assert!(matches!(panel.family_series("c"), Err(CapeError::ZeroWidthInterval { .. })));
    }

    #[test]
    fn interval_midpoints() {
        let t = table(&[
            "p,p1,0.07,,,0.3,0.2,0.3,0.5,0.25,",
            "p,p2,0.16,,,0.3,0.2,0.3,0.5,0.25,",
            "p,p3,1,,,0.3,0.2,0.3,0.5,0.25,",
            "p,p4,4,,,0.3,0.2,0.3,0.5,0.25,",
        ]);
        let panel = ingest_table(&t, TableFormat::Csv).unwrap();
        let series = panel.family_series("p").unwrap();
        let iv = series.intervals();
        assert_eq!(iv.len(), 3);
        // sqrt(0.07 * 0.16) by hand: 0.0112^(1/2)
        assert!((iv[0].n_mid - 0.105_830_052).abs() < 1e-8);
        assert!((iv[2].n_mid - 2.0).abs() < 1e-12);
    }

    #[test]
    fn frontier_and_loss_tables() {
        let f = "lab,model,swe_verified,gpqa_diamond,ifeval,release_date\n\
                 acme,m1,49.0,65.0,,2024-10-22\nacme,m2,62.3,68.0,90.1,2025-02-24\n";
        let (rows, notes) = ingest_frontier(f, TableFormat::Csv).unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows[0].swe - 0.49).abs() < 1e-12);
        assert_eq!(rows[0].ifeval, None);
        assert_eq!(notes.len(), 3);
        let bad = "lab,model,swe_verified,gpqa_diamond,ifeval,release_date\nacme,m1,0.4,0.6,,2024-13-01\n";
        assert!(ingest_frontier(bad, TableFormat::Csv).is_err());

        let l = "family,params_b,loss_nats,grad_norm\npythia,1,2.2,\npythia,0.07,3.3,89.4\n";
        let losses = ingest_losses(l, TableFormat::Csv).unwrap();
        assert_eq!(losses["pythia"][0].grad_norm, Some(89.4));
        assert_eq!(losses["pythia"][1].grad_norm, None);
        assert!(ingest_losses("family,params_b,loss_nats,grad_norm\np,1,-2,\n", TableFormat::Csv).is_err());
    }
}
