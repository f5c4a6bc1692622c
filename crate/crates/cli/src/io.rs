use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| singer_core::Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(singer_core::Error::from)
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| singer_core::Error::io(path, e))?;
    Ok(())
}

pub fn out_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| singer_core::Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}

/// Writes `manifest.json` into `dir`. Manifests hold no timestamps or output
/// locations, so identical runs produce identical bytes.
pub fn write_manifest(dir: &Path, command: &str, body: Value) -> Result<()> {
    let mut manifest = serde_json::Map::new();
    manifest.insert("command".into(), Value::String(command.into()));
    manifest.insert("version".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
    if let Value::Object(fields) = body {
        manifest.extend(fields);
    }
    write_json(&dir.join("manifest.json"), &Value::Object(manifest))
}

/// `path` as given on the command line, for manifests.
pub fn shown(path: &Path) -> String {
    path.display().to_string()
}

/// Resolves `path` against `base` unless it is absolute.
pub fn relative_to(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(path)
    }
}
