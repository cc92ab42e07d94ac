//! Score-file records and the JSONL layout shared by every scorer and the
//! evaluator: one header line followed by one record per image.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectlab::ImageScore;

/// One score-file line. All methods share this schema; only the main scorer
/// fills the subtype and per-box fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub image_id: u64,
    pub method: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub badloc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlook: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_box: Option<crate::objectlab::PerBoxScores>,
}

impl ScoreRecord {
    pub fn from_image_score(s: &ImageScore) -> Self {
        ScoreRecord {
            image_id: s.image_id,
            method: "objectlab".to_string(),
            score: s.score,
            badloc: Some(s.badloc),
            swap: Some(s.swap),
            overlook: Some(s.overlook),
            per_box: Some(s.per_box.clone()),
        }
    }

    pub fn plain(image_id: u64, method: &str, score: f64) -> Self {
        ScoreRecord {
            image_id,
            method: method.to_string(),
            score,
            badloc: None,
            swap: None,
            overlook: None,
            per_box: None,
        }
    }
}

/// Write a JSONL file: the header object on the first line, one record per
/// line after. Serialization is deterministic for identical values.
pub fn write_jsonl<H: Serialize, R: Serialize>(
    path: &Path,
    header: &H,
    records: &[R],
) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let json_err = |source| Error::Parse {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    let line = serde_json::to_vec(header).map_err(json_err)?;
    out.write_all(&line).map_err(io_err)?;
    out.write_all(b"\n").map_err(io_err)?;
    for record in records {
        let line = serde_json::to_vec(record).map_err(json_err)?;
        out.write_all(&line).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Read a JSONL file written by [`write_jsonl`]: returns the header as raw
/// JSON plus the typed records.
pub fn read_jsonl<R: DeserializeOwned>(path: &Path) -> Result<(serde_json::Value, Vec<R>)> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let json_err = |source| Error::Parse {
        path: path.to_path_buf(),
        source,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Evaluation(format!("{}: empty file", path.display())))?;
    let header: serde_json::Value = serde_json::from_str(header_line).map_err(json_err)?;
    let mut records = Vec::new();
    for line in lines {
        records.push(serde_json::from_str(line).map_err(json_err)?);
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        let header = json!({"tool": "objectlab", "kind": "scores"});
        let records = vec![
            ScoreRecord::plain(2, "map", 0.25),
            ScoreRecord::plain(1, "map", 0.75),
        ];
        write_jsonl(&path, &header, &records).unwrap();
        let (h, rs): (_, Vec<ScoreRecord>) = read_jsonl(&path).unwrap();
        assert_eq!(h["tool"], "objectlab");
        assert_eq!(rs, records);
    }

    #[test]
    fn optional_fields_are_omitted() {
        let line = serde_json::to_string(&ScoreRecord::plain(1, "tile", 0.5)).unwrap();
        assert!(!line.contains("badloc"));
        assert!(!line.contains("per_box"));
    }
}
