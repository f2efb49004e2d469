//! Annotated image lists. One CSV row per image; image paths are relative to
//! the manifest file.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use periocular_core::eval::{SampleInfo, UserKey};
use periocular_core::{Circle, Eye, EyeAnnotation};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result, StageExt};

pub const COLUMNS: [&str; 15] = [
    "image_path",
    "subject_id",
    "eye",
    "session",
    "distance_m",
    "sclera_x",
    "sclera_y",
    "sclera_r",
    "iris_x",
    "iris_y",
    "iris_r",
    "pupil_x",
    "pupil_y",
    "pupil_r",
    "order",
];

/// Share of malformed rows above which ingestion aborts.
pub const MAX_BAD_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_path: String,
    pub subject_id: String,
    pub eye: Eye,
    pub session: u32,
    pub distance_m: f64,
    pub sclera_x: f64,
    pub sclera_y: f64,
    pub sclera_r: f64,
    pub iris_x: f64,
    pub iris_y: f64,
    pub iris_r: f64,
    #[serde(default)]
    pub pupil_x: Option<f64>,
    #[serde(default)]
    pub pupil_y: Option<f64>,
    #[serde(default)]
    pub pupil_r: Option<f64>,
    /// Position of the image in its user's sequence; overrides the default
    /// (session, distance, path) ordering.
    #[serde(default)]
    pub order: Option<i64>,
}

impl ManifestRecord {
    pub fn annotation(&self) -> EyeAnnotation {
        EyeAnnotation {
            subject_id: self.subject_id.clone(),
            eye: self.eye,
            session: self.session,
            distance_m: self.distance_m,
            sclera: Circle::new(self.sclera_x, self.sclera_y, self.sclera_r),
            iris: Circle::new(self.iris_x, self.iris_y, self.iris_r),
        }
    }

    pub fn user(&self) -> UserKey {
        UserKey {
            subject_id: self.subject_id.clone(),
            eye: self.eye,
        }
    }

    pub fn sample_info(&self) -> SampleInfo {
        SampleInfo {
            image_id: self.image_path.clone(),
            user: self.user(),
            session: self.session,
            distance_m: self.distance_m,
            order: self.order,
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.image_path.trim().is_empty() {
            return Err("empty image_path".into());
        }
        if self.subject_id.trim().is_empty() {
            return Err("empty subject_id".into());
        }
        if !(self.distance_m.is_finite() && self.distance_m > 0.0) {
            return Err(format!(
                "distance_m must be positive, got {}",
                self.distance_m
            ));
        }
        if let Some(r) = self.pupil_r {
            if !(r.is_finite() && r > 0.0) {
                return Err(format!("pupil radius must be positive, got {r}"));
            }
        }
        self.annotation().validate(None).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    /// 1-based line number in the manifest file.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory image paths are resolved against.
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
    pub skipped: Vec<SkippedRecord>,
}

impl Manifest {
    pub fn image_path(&self, rec: &ManifestRecord) -> PathBuf {
        self.root.join(&rec.image_path)
    }

    pub fn samples(&self) -> Vec<SampleInfo> {
        self.records
            .iter()
            .map(ManifestRecord::sample_info)
            .collect()
    }
}

pub fn ingest_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read(path)
        .map_err(|e| CliError::data("manifest", format!("{}: {e}", path.display())))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut manifest = parse_manifest(&text[..])?;
    manifest.root = root;
    Ok(manifest)
}

/// Parses manifest CSV. Malformed rows are skipped and reported; more than
/// 5% malformed rows is an error listing every offending line.
pub fn parse_manifest(bytes: &[u8]) -> Result<Manifest> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::data("manifest", e))?
        .clone();
    for required in &COLUMNS[..11] {
        if !headers.iter().any(|h| h == *required) {
            return Err(CliError::data(
                "manifest",
                format!("missing column {required}"),
            ));
        }
    }

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = BTreeSet::new();
    let mut total = 0usize;
    for row in rdr.records() {
        total += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                skipped.push(SkippedRecord {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let parsed: std::result::Result<ManifestRecord, String> = row
            .deserialize::<ManifestRecord>(Some(&headers))
            .map_err(|e| e.to_string())
            .and_then(|r| r.check().map(|_| r));
        match parsed {
            Ok(r) if !seen.insert(r.image_path.clone()) => skipped.push(SkippedRecord {
                line,
                reason: format!("duplicate image_path {}", r.image_path),
            }),
            Ok(r) => records.push(r),
            Err(reason) => skipped.push(SkippedRecord { line, reason }),
        }
    }
    for s in &skipped {
        log::warn!("manifest line {}: skipped ({})", s.line, s.reason);
    }
    if total > 0 && skipped.len() as f64 > MAX_BAD_FRACTION * total as f64 {
        let lines: Vec<String> = skipped
            .iter()
            .map(|s| format!("line {}: {}", s.line, s.reason))
            .collect();
        return Err(CliError::data(
            "manifest",
            format!(
                "{} of {} records malformed (limit 5%):\n{}",
                skipped.len(),
                total,
                lines.join("\n")
            ),
        ));
    }
    Ok(Manifest {
        root: PathBuf::new(),
        records,
        skipped,
    })
}

pub fn write_manifest<W: Write>(records: &[ManifestRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(r)
            .map_err(|e| CliError::internal("manifest", e))?;
    }
    wr.flush().stage("manifest")?;
    Ok(())
}
