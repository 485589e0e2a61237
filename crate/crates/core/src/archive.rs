// SPDX-License-Identifier: MIT OR Apache-2.0

//! Line-delimited JSON archives.
//!
//! Every record is one JSON object per line. Floats are written with 17
//! significant digits (`{:.16e}`) so doubles survive a write/read cycle
//! bit-for-bit and identical input always yields identical bytes.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};
use crate::model::{ArchiveItem, CandidateTrajectory, PositionDepthLogits};

pub const ARCHIVE_SCHEMA_VERSION: u32 = 1;

/// `serde_json` formatter emitting every `f64` with 17 significant digits.
/// Non-finite values become `null`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedPrecisionFormatter;

impl serde_json::ser::Formatter for FixedPrecisionFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serialize `value` as one compact line (without the newline).
pub fn to_line<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedPrecisionFormatter);
    value.serialize(&mut ser)?;
    Ok(buf)
}

/// Serialize `value` as an indented document with the fixed float format.
pub fn to_pretty<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    struct Pretty<'a>(serde_json::ser::PrettyFormatter<'a>);
    impl serde_json::ser::Formatter for Pretty<'_> {
        fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
            FixedPrecisionFormatter.write_f64(w, v)
        }
        fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.begin_array(w)
        }
        fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.end_array(w)
        }
        fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
            self.0.begin_array_value(w, first)
        }
        fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.end_array_value(w)
        }
        fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.begin_object(w)
        }
        fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.end_object(w)
        }
        fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
            self.0.begin_object_key(w, first)
        }
        fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.begin_object_value(w)
        }
        fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.end_object_value(w)
        }
    }
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, Pretty(serde_json::ser::PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

/// Write records as JSON lines.
pub fn write_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| TraceError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for rec in records {
        let line = to_line(rec)?;
        out.write_all(&line)
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| TraceError::io(path, e))?;
    }
    out.flush().map_err(|e| TraceError::io(path, e))
}

/// Read JSON lines, skipping blank lines. Errors name the 1-based line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| TraceError::io(path, e))?;
    parse_jsonl(BufReader::new(file), path)
}

pub(crate) fn parse_jsonl<T: DeserializeOwned, R: BufRead>(reader: R, path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TraceError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
            path: path.to_owned(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Wire form of one archive line. Field order here is the byte order on disk.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchiveRecord {
    schema_version: u32,
    item_id: String,
    benchmark_id: String,
    n: usize,
    #[serde(rename = "L")]
    depth: usize,
    #[serde(rename = "S")]
    scores: Vec<f64>,
    candidate_texts: Vec<String>,
    candidate_token_counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truthful_indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    position_depth_logits: Vec<PositionDepthLogits>,
}

impl From<&ArchiveItem> for ArchiveRecord {
    fn from(item: &ArchiveItem) -> Self {
        let t = &item.trajectory;
        Self {
            schema_version: ARCHIVE_SCHEMA_VERSION,
            item_id: t.item_id.clone(),
            benchmark_id: t.benchmark_id.clone(),
            n: t.n,
            depth: t.depth,
            scores: t.scores.clone(),
            candidate_texts: t.candidate_texts.clone(),
            candidate_token_counts: t.candidate_token_counts.clone(),
            truthful_indices: t.truthful_indices.clone(),
            position_depth_logits: item.logits.clone(),
        }
    }
}

impl From<ArchiveRecord> for ArchiveItem {
    fn from(r: ArchiveRecord) -> Self {
        Self {
            trajectory: CandidateTrajectory {
                item_id: r.item_id,
                benchmark_id: r.benchmark_id,
                n: r.n,
                depth: r.depth,
                scores: r.scores,
                candidate_texts: r.candidate_texts,
                candidate_token_counts: r.candidate_token_counts,
                truthful_indices: r.truthful_indices,
            },
            logits: r.position_depth_logits,
        }
    }
}

/// Serialize one item as an archive line (no trailing newline).
pub fn item_to_line(item: &ArchiveItem) -> Result<Vec<u8>> {
    to_line(&ArchiveRecord::from(item))
}

/// Write items to `path`, one per line. An empty slice yields an empty file.
pub fn write_trajectory_archive(items: &[ArchiveItem], path: &Path) -> Result<()> {
    let records: Vec<ArchiveRecord> = items.iter().map(ArchiveRecord::from).collect();
    write_jsonl(&records, path)
}

/// Read and validate an archive, returning items in file order.
pub fn read_trajectory_archive(path: &Path) -> Result<Vec<ArchiveItem>> {
    let file = File::open(path).map_err(|e| TraceError::io(path, e))?;
    parse_trajectory_archive(BufReader::new(file), path)
}

pub fn parse_trajectory_archive<R: BufRead>(reader: R, path: &Path) -> Result<Vec<ArchiveItem>> {
    let records: Vec<ArchiveRecord> = parse_jsonl(reader, path)?;
    let mut items = Vec::with_capacity(records.len());
    for rec in records {
        if rec.schema_version != ARCHIVE_SCHEMA_VERSION {
            return Err(TraceError::validation(
                &rec.item_id,
                "schema_version",
                format!(
                    "unsupported schema version {} (expected {ARCHIVE_SCHEMA_VERSION})",
                    rec.schema_version
                ),
            ));
        }
        let item = ArchiveItem::from(rec);
        item.validate()?;
        items.push(item);
    }
    Ok(items)
}
