use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// A run directory that remembers the files written into it, in order.
pub(crate) struct RunDir {
    path: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub(crate) fn create(path: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(RunDir {
            path,
            files: Vec::new(),
        })
    }

    pub(crate) fn path(&self) -> &Path {
        &self.path
    }

    pub(crate) fn files(&self) -> &[String] {
        &self.files
    }

    pub(crate) fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.path.join(name);
        std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub(crate) fn write_json<T: Serialize>(
        &mut self,
        name: &str,
        value: &T,
    ) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("result serializes");
        text.push('\n');
        self.write_text(name, &text)
    }
}

/// Appends comma-separated values without ending the line. `{:?}` on f64
/// is the shortest representation that parses back to the same value.
pub(crate) fn csv_fields(buf: &mut String, values: &[f64]) {
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            buf.push(',');
        }
        write!(buf, "{v:?}").unwrap();
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
}
