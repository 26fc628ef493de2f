//! Annotation readers and the canonical JSON-lines interchange format.
//!
//! Supported inputs:
//!
//! - DOTA text labels, one object per line:
//!   `x1 y1 x2 y2 x3 y3 x4 y4 category difficult`, optionally preceded by
//!   `imagesource:` and `gsd:` header lines.
//! - HRSC2016-style XML with one `HRSC_Object` element per object carrying
//!   `mbox_cx`, `mbox_cy`, `mbox_w`, `mbox_h`, `mbox_ang` (radians) and
//!   optionally `header_x`/`header_y`.
//!
//! Canonical JSONL schemas:
//!
//! ```text
//! groundtruth: {"image_id": str, "quad": [[x, y] x4], "category": str, "difficult": bool}
//! detection:   {"image_id": str, "obb": {"cx", "cy", "length", "width", "theta"}, "category": str, "score": f64}
//! ```

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{obb_to_keypoints, GeometryError, ImageSize, KeypointBox, ObbParams, Point2, Quad};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {kind}")]
    Line { line: usize, kind: LineErrorKind },
    #[error("{} malformed line(s); first: {}", .0.len(), .0[0])]
    Lines(Vec<LineError>),
    #[error("xml: {0}")]
    Xml(String),
    #[error("object {object}: missing required field `{field}`")]
    MissingField { object: usize, field: &'static str },
    #[error("object {object}: field `{field}` is not a number: {value:?}")]
    BadField { object: usize, field: &'static str, value: String },
    #[error("object {object}: {source}")]
    Geometry {
        object: usize,
        #[source]
        source: GeometryError,
    },
    #[error("manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LineErrorKind {
    Arity(usize),
    NonNumeric(String),
    EmptyCategory,
    Geometry(GeometryError),
    Schema(String),
}

impl fmt::Display for LineErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LineErrorKind::Arity(n) => write!(f, "expected 10 whitespace-separated fields, found {n}"),
            LineErrorKind::NonNumeric(tok) => write!(f, "non-numeric coordinate {tok:?}"),
            LineErrorKind::EmptyCategory => write!(f, "empty category"),
            LineErrorKind::Geometry(e) => write!(f, "{e}"),
            LineErrorKind::Schema(msg) => write!(f, "schema violation: {msg}"),
        }
    }
}

/// A line-level error with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub kind: LineErrorKind,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.kind)
    }
}

impl From<LineError> for AnnotationError {
    fn from(e: LineError) -> Self {
        AnnotationError::Line { line: e.line, kind: e.kind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GroundTruthWire", into = "GroundTruthWire")]
pub struct GroundTruthRecord {
    pub image_id: String,
    pub quad: Quad,
    pub category: String,
    pub difficult: bool,
}

impl GroundTruthRecord {
    pub fn obb(&self) -> Result<ObbParams, GeometryError> {
        self.quad.to_obb()
    }

    /// Keypoints under the longer-side convention.
    pub fn keypoints(&self) -> Result<KeypointBox, GeometryError> {
        Ok(obb_to_keypoints(&self.obb()?))
    }
}

#[derive(Serialize, Deserialize)]
struct GroundTruthWire {
    image_id: String,
    quad: [[f64; 2]; 4],
    category: String,
    difficult: bool,
}

impl TryFrom<GroundTruthWire> for GroundTruthRecord {
    type Error = String;
    fn try_from(w: GroundTruthWire) -> Result<Self, String> {
        if w.category.is_empty() {
            return Err("empty category".into());
        }
        let quad = Quad::new(w.quad.map(|[x, y]| Point2::new(x, y))).map_err(|e| e.to_string())?;
        Ok(Self { image_id: w.image_id, quad, category: w.category, difficult: w.difficult })
    }
}

impl From<GroundTruthRecord> for GroundTruthWire {
    fn from(r: GroundTruthRecord) -> Self {
        Self {
            image_id: r.image_id,
            quad: r.quad.corners().map(|p| [p.x, p.y]),
            category: r.category,
            difficult: r.difficult,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectionWire", into = "DetectionWire")]
pub struct DetectionRecord {
    pub image_id: String,
    pub obb: ObbParams,
    pub category: String,
    pub score: f64,
}

impl DetectionRecord {
    pub fn keypoints(&self) -> KeypointBox {
        obb_to_keypoints(&self.obb)
    }
}

#[derive(Serialize, Deserialize)]
struct DetectionWire {
    image_id: String,
    obb: ObbParams,
    category: String,
    score: f64,
}

impl TryFrom<DetectionWire> for DetectionRecord {
    type Error = String;
    fn try_from(w: DetectionWire) -> Result<Self, String> {
        if w.category.is_empty() {
            return Err("empty category".into());
        }
        if !(0.0..=1.0).contains(&w.score) {
            return Err(format!("score {} outside [0, 1]", w.score));
        }
        let o = w.obb;
        let obb = ObbParams::new(o.cx, o.cy, o.length, o.width, o.theta).map_err(|e| e.to_string())?;
        Ok(Self { image_id: w.image_id, obb, category: w.category, score: w.score })
    }
}

impl From<DetectionRecord> for DetectionWire {
    fn from(r: DetectionRecord) -> Self {
        Self { image_id: r.image_id, obb: r.obb, category: r.category, score: r.score }
    }
}

/// Either canonical record kind, distinguished by the `obb`/`quad` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnyRecord {
    Detection(DetectionRecord),
    GroundTruth(GroundTruthRecord),
}

impl AnyRecord {
    pub fn image_id(&self) -> &str {
        match self {
            AnyRecord::Detection(d) => &d.image_id,
            AnyRecord::GroundTruth(g) => &g.image_id,
        }
    }

    pub fn category(&self) -> &str {
        match self {
            AnyRecord::Detection(d) => &d.category,
            AnyRecord::GroundTruth(g) => &g.category,
        }
    }

    pub fn keypoints(&self) -> Result<KeypointBox, GeometryError> {
        match self {
            AnyRecord::Detection(d) => Ok(d.keypoints()),
            AnyRecord::GroundTruth(g) => g.keypoints(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub images: Vec<(String, ImageSize)>,
    pub groundtruth: Vec<GroundTruthRecord>,
    pub categories: Vec<String>,
}

impl DatasetManifest {
    /// Checks that every record refers to a listed image and category.
    pub fn validate(&self) -> Result<(), AnnotationError> {
        for r in &self.groundtruth {
            if !self.images.iter().any(|(id, _)| *id == r.image_id) {
                return Err(AnnotationError::Manifest(format!("unknown image id {:?}", r.image_id)));
            }
            if !self.categories.contains(&r.category) {
                return Err(AnnotationError::Manifest(format!("unknown category {:?}", r.category)));
            }
        }
        Ok(())
    }

    /// Categories in order of first appearance.
    pub fn categories_of(groundtruth: &[GroundTruthRecord]) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in groundtruth {
            if !out.contains(&r.category) {
                out.push(r.category.clone());
            }
        }
        out
    }
}

/// One object parsed from a DOTA label line.
#[derive(Debug, Clone, PartialEq)]
pub struct DotaObject {
    pub quad: Quad,
    pub category: String,
    pub difficult: bool,
}

/// Parses one DOTA object line. `line_no` is only used for error positions.
pub fn parse_dota_line(line: &str, line_no: usize) -> Result<DotaObject, LineError> {
    let err = |kind| LineError { line: line_no, kind };
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 10 {
        return Err(err(LineErrorKind::Arity(tokens.len())));
    }
    let mut coords = [0.0f64; 8];
    for (slot, tok) in coords.iter_mut().zip(&tokens[..8]) {
        *slot = tok
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| err(LineErrorKind::NonNumeric(tok.to_string())))?;
    }
    let corners = [0, 1, 2, 3].map(|i| Point2::new(coords[2 * i], coords[2 * i + 1]));
    let quad = Quad::new(corners).map_err(|e| err(LineErrorKind::Geometry(e)))?;
    Ok(DotaObject { quad, category: tokens[8].to_string(), difficult: tokens[9] != "0" })
}

fn is_dota_header(line: &str) -> bool {
    line.starts_with("imagesource") || line.starts_with("gsd")
}

/// Parses DOTA label text. Every failing line is reported; nothing is dropped
/// silently.
pub fn parse_dota_str(text: &str, image_id: &str) -> Result<Vec<GroundTruthRecord>, AnnotationError> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || is_dota_header(trimmed) {
            continue;
        }
        match parse_dota_line(trimmed, i + 1) {
            Ok(obj) => records.push(GroundTruthRecord {
                image_id: image_id.to_string(),
                quad: obj.quad,
                category: obj.category,
                difficult: obj.difficult,
            }),
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(AnnotationError::Lines(errors))
    }
}

/// Parses a DOTA label file; the image id is the file stem.
pub fn parse_dota_file(path: &Path) -> Result<Vec<GroundTruthRecord>, AnnotationError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| AnnotationError::Io { path: path.to_path_buf(), source })?;
    parse_dota_str(&text, &file_stem(path))
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// One HRSC object, with the dataset's header point when annotated.
#[derive(Debug, Clone, PartialEq)]
pub struct HrscObject {
    pub record: GroundTruthRecord,
    pub obb: ObbParams,
    pub head_hint: Option<Point2>,
}

impl HrscObject {
    /// Keypoints whose head is the long-axis extremity nearest the header
    /// hint, or the longer-side convention when there is no hint.
    pub fn keypoints(&self) -> KeypointBox {
        let k = obb_to_keypoints(&self.obb);
        match self.head_hint {
            Some(hint) if hint.dist_sq(k.tail()) < hint.dist_sq(k.head) => k.flipped(),
            _ => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HrscImage {
    pub image_id: String,
    pub size: Option<ImageSize>,
    pub objects: Vec<HrscObject>,
}

pub const HRSC_CATEGORY: &str = "ship";

pub fn parse_hrsc_str(xml: &str, image_id: &str) -> Result<HrscImage, AnnotationError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| AnnotationError::Xml(e.to_string()))?;
    let root = doc.root_element();
    let child_text = |node: roxmltree::Node, name: &str| -> Option<String> {
        node.children()
            .find(|c| c.has_tag_name(name))
            .and_then(|c| c.text())
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
    };
    let size = match (
        child_text(root, "Img_SizeWidth").and_then(|v| v.parse::<u32>().ok()),
        child_text(root, "Img_SizeHeight").and_then(|v| v.parse::<u32>().ok()),
    ) {
        (Some(w), Some(h)) => ImageSize::new(w, h).ok(),
        _ => None,
    };

    let mut objects = Vec::new();
    for (idx, node) in root.descendants().filter(|n| n.has_tag_name("HRSC_Object")).enumerate() {
        let object = idx + 1;
        let number = |field: &'static str| -> Result<Option<f64>, AnnotationError> {
            match child_text(node, field) {
                None => Ok(None),
                Some(v) => v.parse::<f64>().ok().filter(|x| x.is_finite()).map(Some).ok_or(AnnotationError::BadField {
                    object,
                    field,
                    value: v,
                }),
            }
        };
        let required = |field: &'static str| number(field)?.ok_or(AnnotationError::MissingField { object, field });
        let cx = required("mbox_cx")?;
        let cy = required("mbox_cy")?;
        let w = required("mbox_w")?;
        let h = required("mbox_h")?;
        let ang = required("mbox_ang")?;
        let head_hint = match (number("header_x")?, number("header_y")?) {
            (Some(x), Some(y)) => Some(Point2::new(x, y)),
            _ => None,
        };
        let difficult = child_text(node, "difficult").is_some_and(|v| v != "0");
        let obb = ObbParams::new(cx, cy, w, h, ang).map_err(|source| AnnotationError::Geometry { object, source })?;
        objects.push(HrscObject {
            record: GroundTruthRecord {
                image_id: image_id.to_string(),
                quad: obb.to_quad(),
                category: HRSC_CATEGORY.to_string(),
                difficult,
            },
            obb,
            head_hint,
        });
    }
    Ok(HrscImage { image_id: image_id.to_string(), size, objects })
}

/// Parses an HRSC XML file; the image id is the file stem.
pub fn parse_hrsc_xml(path: &Path) -> Result<Vec<HrscObject>, AnnotationError> {
    Ok(parse_hrsc_image(path)?.objects)
}

pub fn parse_hrsc_image(path: &Path) -> Result<HrscImage, AnnotationError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| AnnotationError::Io { path: path.to_path_buf(), source })?;
    parse_hrsc_str(&text, &file_stem(path))
}

/// Writes one JSON object per line. Floats use the shortest representation
/// that round-trips exactly.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), AnnotationError> {
    let io_err = |source| AnnotationError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    write_jsonl_to(&mut out, records).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn write_jsonl_to<T: Serialize, W: Write>(out: &mut W, records: &[T]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, AnnotationError> {
    let io_err = |source| AnnotationError::Io { path: path.to_path_buf(), source };
    let file = File::open(path).map_err(io_err)?;
    read_jsonl_from(BufReader::new(file)).map_err(|e| match e {
        JsonlError::Io(source) => io_err(source),
        JsonlError::Line(e) => e.into(),
    })
}

#[derive(Debug)]
pub enum JsonlError {
    Io(io::Error),
    Line(LineError),
}

pub fn read_jsonl_from<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(JsonlError::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| JsonlError::Line(LineError { line: i + 1, kind: LineErrorKind::Schema(e.to_string()) }))?;
        out.push(rec);
    }
    Ok(out)
}
