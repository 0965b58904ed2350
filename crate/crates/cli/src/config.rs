//! Config files, flag overrides and run manifests.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

/// Reads a TOML config or a previous `manifest.json`. A manifest's `config`
/// object is used, after checking that it was written by the same command.
pub fn load<P: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> CliResult<P> {
    let Some(path) = path else {
        return Ok(P::default());
    };
    let text =
        std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let value: Value = if is_json {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    } else {
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::to_value(table)?
    };
    let value = match value {
        Value::Object(mut obj) if obj.contains_key("config") && obj.contains_key("command") => {
            let recorded = obj.get("command").and_then(Value::as_str).unwrap_or_default();
            if recorded != command {
                return Err(CliError::Config(format!(
                    "{} was written by '{recorded}', not '{command}'",
                    path.display()
                )));
            }
            obj.remove("config").unwrap_or(Value::Null)
        }
        other => other,
    };
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn out_path(out_dir: &Path, name: &str) -> PathBuf {
    out_dir.join(name)
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })
}

/// Resolved configuration plus the files produced; enough to re-run.
pub fn write_manifest<P: Serialize>(
    out_dir: &Path,
    command: &str,
    params: &P,
    seed: Option<u64>,
    outputs: &[&str],
) -> CliResult<()> {
    let config = serde_json::to_value(params)?;
    let manifest = json!({
        "tool": "selfsim",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "config": config,
        "outputs": outputs,
    });
    write_text(out_dir, MANIFEST, &(serde_json::to_string_pretty(&manifest)? + "\n"))
}

pub fn write_text(out_dir: &Path, name: &str, text: &str) -> CliResult<()> {
    selfsim::io::atomic_write(&out_path(out_dir, name), text.as_bytes())?;
    Ok(())
}

pub fn write_json<T: Serialize>(out_dir: &Path, name: &str, value: &T) -> CliResult<()> {
    write_text(out_dir, name, &(serde_json::to_string_pretty(value)? + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{BoxCoverParams, CurveParams};

    #[test]
    fn toml_and_manifest_sources() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        std::fs::write(&toml_path, "input = \"x.npy\"\nmode = \"smooth\"\nk = 10.0\n").unwrap();
        let p: CurveParams = load(Some(&toml_path), "ssrate").unwrap();
        assert_eq!(p.input, "x.npy");
        assert_eq!(p.k, 10.0);

        write_manifest(dir.path(), "ssrate", &p, None, &["ssrate.json"]).unwrap();
        let again: CurveParams = load(Some(&dir.path().join(MANIFEST)), "ssrate").unwrap();
        assert_eq!(again, p);
        assert!(load::<CurveParams>(Some(&dir.path().join(MANIFEST)), "boxcurve").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "edges = \"g.txt\"\ntheta = [1]\n").unwrap();
        let err = load::<BoxCoverParams>(Some(&path), "boxcover").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("theta"));
    }
}
