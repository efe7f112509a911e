//! Model shards and training logs as pretty-printed JSON.

use std::path::Path;

use secureboost_core::federation::{GuestModel, HostModel, MODEL_FORMAT_VERSION};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("model types serialize");
    s.push('\n');
    s
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, to_json(value)).map_err(|e| Error::io(path, e))
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    // check the version before the shape so old files fail clearly
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    match raw.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == MODEL_FORMAT_VERSION as u64 => {}
        Some(v) => return Err(Error::parse(path, format!("unsupported format_version {v}"))),
        None => return Err(Error::parse(path, "missing format_version")),
    }
    serde_json::from_value(raw).map_err(|e| Error::parse(path, e))
}

pub fn load_guest_model(path: &Path) -> Result<GuestModel> {
    let m: GuestModel = load_json(path)?;
    m.validate()?;
    Ok(m)
}

pub fn load_host_model(path: &Path) -> Result<HostModel> {
    let m: HostModel = load_json(path)?;
    m.validate()?;
    Ok(m)
}

pub fn guest_model_path(dir: &Path) -> std::path::PathBuf {
    dir.join("guest.json")
}

pub fn host_model_path(dir: &Path, rank: u16) -> std::path::PathBuf {
    dir.join(format!("host_{rank}.json"))
}
