//! Flat feature vectors and their on-disk format.
//!
//! A feature file is a single JSON header line (`extractor`, `layer`,
//! `source`) terminated by `\n`, followed by a little-endian `u32` value count
//! and that many little-endian `f32` values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    Lbp,
    Hog,
    Neural,
}

impl fmt::Display for ExtractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExtractorKind::Lbp => "lbp",
            ExtractorKind::Hog => "hog",
            ExtractorKind::Neural => "neural",
        })
    }
}

impl FromStr for ExtractorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lbp" => Ok(ExtractorKind::Lbp),
            "hog" => Ok(ExtractorKind::Hog),
            "neural" => Ok(ExtractorKind::Neural),
            other => Err(Error::invalid(format!("unknown extractor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub extractor: ExtractorKind,
    pub layer: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    extractor: ExtractorKind,
    layer: Option<String>,
    source: String,
}

impl FeatureVector {
    pub fn new(values: Vec<f32>, extractor: ExtractorKind) -> Self {
        FeatureVector {
            values,
            extractor,
            layer: None,
        }
    }

    pub fn neural(values: Vec<f32>, layer: impl Into<String>) -> Self {
        FeatureVector {
            values,
            extractor: ExtractorKind::Neural,
            layer: Some(layer.into()),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn encode(&self, source: &str) -> Vec<u8> {
        let header = Header {
            extractor: self.extractor,
            layer: self.layer.clone(),
            source: source.to_owned(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        out.extend_from_slice(&(self.values.len() as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a feature file, returning the vector and its source image id.
    pub fn decode(bytes: &[u8]) -> Result<(FeatureVector, String)> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("feature header line missing".into()))?;
        let header: Header = serde_json::from_slice(&bytes[..nl])?;
        let body = &bytes[nl + 1..];
        if body.len() < 4 {
            return Err(Error::Format("feature length prefix truncated".into()));
        }
        let n = u32::from_le_bytes([body[0], body[1], body[2], body[3]]) as usize;
        let payload = &body[4..];
        if payload.len() != 4 * n {
            return Err(Error::Format(format!(
                "feature payload holds {} bytes, header announces {n} values",
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok((
            FeatureVector {
                values,
                extractor: header.extractor,
                layer: header.layer,
            },
            header.source,
        ))
    }
}
