//! Neuronal input/output sequence datasets and the `snn-episodes/1`
//! line-delimited file format.

pub mod pavlov;
pub mod pong;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use pavlov::{gen_pavlov, PavlovConfig};
pub use pong::{gen_pong, PongConfig};

pub const EPISODES_FORMAT: &str = "snn-episodes/1";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: parse error: {msg}")]
    Parse { line: usize, msg: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
    #[error("invalid generator config: {0}")]
    Config(String),
}

/// One recorded input/output sequence pair.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Episode {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub meta: Map<String, Value>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn check(&self, dims: Dims) -> Result<(), String> {
        if self.y.len() != self.x.len() {
            return Err(format!("{} input rows but {} target rows", self.x.len(), self.y.len()));
        }
        if let Some(m) = &self.mask {
            if m.len() != self.x.len() {
                return Err(format!("{} mask rows for {} steps", m.len(), self.x.len()));
            }
            if m.iter().flatten().any(|&v| v != 0.0 && v != 1.0) {
                return Err("mask entries must be 0 or 1".into());
            }
            if m.iter().any(|r| r.len() != dims.outputs) {
                return Err("mask row width differs from output count".into());
            }
        }
        if self.x.iter().any(|r| r.len() != dims.inputs) {
            return Err(format!("input row width differs from {}", dims.inputs));
        }
        if self.y.iter().any(|r| r.len() != dims.outputs) {
            return Err(format!("target row width differs from {}", dims.outputs));
        }
        let finite = |rows: &Vec<Vec<f64>>| rows.iter().flatten().all(|v| v.is_finite());
        if !finite(&self.x) || !finite(&self.y) {
            return Err("non-finite value".into());
        }
        Ok(())
    }

    /// Hold every step for `ticks` network steps. Only the last tick of each
    /// held step carries the target; earlier ticks are masked out.
    pub fn expand_ticks(&self, ticks: usize) -> Episode {
        assert!(ticks >= 1);
        if ticks == 1 {
            return self.clone();
        }
        let n_out = self.y.first().map_or(0, Vec::len);
        let mut out = Episode { meta: self.meta.clone(), ..Default::default() };
        let mut mask = Vec::with_capacity(self.len() * ticks);
        for t in 0..self.len() {
            for k in 0..ticks {
                out.x.push(self.x[t].clone());
                if k + 1 == ticks {
                    out.y.push(self.y[t].clone());
                    mask.push(self.mask.as_ref().map_or_else(|| vec![1.0; n_out], |m| m[t].clone()));
                } else {
                    out.y.push(vec![0.0; n_out]);
                    mask.push(vec![0.0; n_out]);
                }
            }
        }
        out.mask = Some(mask);
        out
    }

    pub fn meta_usize(&self, key: &str) -> Option<usize> {
        self.meta.get(key).and_then(Value::as_u64).map(|v| v as usize)
    }

    pub fn meta_strings(&self, key: &str) -> Option<Vec<String>> {
        self.meta
            .get(key)?
            .as_array()?
            .iter()
            .map(|v| v.as_str().map(str::to_owned))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub generator: String,
    pub seed: u64,
    pub dims: Dims,
    pub episodes: usize,
    #[serde(default)]
    pub params: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub episodes: Vec<Episode>,
}

impl Dataset {
    pub fn new(generator: &str, seed: u64, dims: Dims, params: Value, episodes: Vec<Episode>) -> Self {
        let manifest = Manifest {
            format: EPISODES_FORMAT.to_string(),
            generator: generator.to_string(),
            seed,
            dims,
            episodes: episodes.len(),
            params,
        };
        Self { manifest, episodes }
    }

    pub fn dims(&self) -> Dims {
        self.manifest.dims
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), DatasetError> {
        serde_json::to_writer(&mut w, &self.manifest).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for ep in &self.episodes {
            serde_json::to_writer(&mut w, ep).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        buf
    }

    /// SHA-256 of the serialized file contents.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, DatasetError> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| DatasetError::Manifest("empty file".into()))??;
        let manifest: Manifest = serde_json::from_str(&first)
            .map_err(|e| DatasetError::Parse { line: 1, msg: e.to_string() })?;
        if manifest.format != EPISODES_FORMAT {
            return Err(DatasetError::Manifest(format!(
                "format {:?}, expected {EPISODES_FORMAT:?}",
                manifest.format
            )));
        }
        let mut episodes = Vec::with_capacity(manifest.episodes);
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ep: Episode = serde_json::from_str(&line)
                .map_err(|e| DatasetError::Parse { line: line_no, msg: e.to_string() })?;
            ep.check(manifest.dims).map_err(|msg| DatasetError::Invalid { line: line_no, msg })?;
            episodes.push(ep);
        }
        if episodes.len() != manifest.episodes {
            return Err(DatasetError::Manifest(format!(
                "manifest declares {} episodes, file holds {}",
                manifest.episodes,
                episodes.len()
            )));
        }
        Ok(Self { manifest, episodes })
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let ep = Episode {
            x: vec![vec![1.0, 0.0], vec![0.1 + 0.2, 1.0 / 3.0]],
            y: vec![vec![1.0], vec![0.0]],
            mask: Some(vec![vec![1.0], vec![0.0]]),
            meta: Map::new(),
        };
        Dataset::new("test", 3, Dims { inputs: 2, outputs: 1 }, Value::Null, vec![ep.clone(), ep])
    }

    #[test]
    fn round_trip_is_exact() {
        let d = tiny();
        let back = Dataset::read_from(d.to_bytes().as_slice()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn truncated_file_names_the_line() {
        let bytes = tiny().to_bytes();
        let cut = &bytes[..bytes.len() - 10];
        match Dataset::read_from(cut) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn episode_count_must_match_manifest() {
        let bytes = tiny().to_bytes();
        let text = String::from_utf8(bytes).unwrap();
        let dropped: Vec<&str> = text.lines().take(2).collect();
        let err = Dataset::read_from(dropped.join("\n").as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::Manifest(_)));
    }

    #[test]
    fn wrong_width_is_rejected() {
        let mut d = tiny();
        d.episodes[1].x[0].push(2.0);
        let err = Dataset::read_from(d.to_bytes().as_slice()).unwrap_err();
        assert!(matches!(err, DatasetError::Invalid { line: 3, .. }));
    }

    #[test]
    fn expand_ticks_masks_all_but_last_tick() {
        let ep = &tiny().episodes[0];
        let e3 = ep.expand_ticks(3);
        assert_eq!(e3.len(), 6);
        assert_eq!(e3.x[0], e3.x[2]);
        assert_eq!(e3.mask.as_ref().unwrap(), &vec![
            vec![0.0], vec![0.0], vec![1.0], vec![0.0], vec![0.0], vec![0.0]
        ]);
        assert_eq!(e3.y[2], vec![1.0]);
        assert_eq!(ep.expand_ticks(1), *ep);
    }
}
