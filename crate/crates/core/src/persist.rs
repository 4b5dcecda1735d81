//! Line-oriented artifact files: JSON Lines with optional `#` header lines.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "dmguide-v1";

/// Provenance header written at the top of every persisted artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactHeader {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl ArtifactHeader {
    pub fn new(command: &str, config_hash: &str, seed: u64) -> Self {
        ArtifactHeader {
            command: command.to_owned(),
            config_hash: config_hash.to_owned(),
            seed,
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "# {} command={} config_hash={} seed={}",
            FORMAT_VERSION, self.command, self.config_hash, self.seed
        )
    }

    pub fn parse_line(line: &str) -> Option<Self> {
        let rest = line.strip_prefix("# ")?.strip_prefix(FORMAT_VERSION)?;
        let mut command = None;
        let mut config_hash = None;
        let mut seed = None;
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=')?;
            match k {
                "command" => command = Some(v.to_owned()),
                "config_hash" => config_hash = Some(v.to_owned()),
                "seed" => seed = v.parse().ok(),
                _ => {}
            }
        }
        Some(ArtifactHeader {
            command: command?,
            config_hash: config_hash?,
            seed: seed?,
        })
    }
}

pub(crate) fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

/// Reads one record per non-blank, non-`#` line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let item = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Returns the artifact header if the file's first line carries one.
pub fn read_header(path: &Path) -> Result<Option<ArtifactHeader>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    Ok(ArtifactHeader::parse_line(first.trim_end()))
}

pub fn write_jsonl<T: Serialize>(
    path: &Path,
    header: Option<&ArtifactHeader>,
    items: &[T],
) -> Result<()> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    if let Some(h) = header {
        writeln!(w, "{}", h.to_line()).map_err(io)?;
    }
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| Error::Format(format!("serialize: {e}")))?;
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let h = ArtifactHeader::new("synth-gen", "abcd", 7);
        assert_eq!(ArtifactHeader::parse_line(&h.to_line()), Some(h));
        assert_eq!(ArtifactHeader::parse_line("{\"id\":1}"), None);
    }
}
