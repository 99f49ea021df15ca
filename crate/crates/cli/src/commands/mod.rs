mod analysis;
mod data;
mod model;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub use analysis::{importance, topbot};
pub use data::{analyze_features, bench_io, generate};
pub use model::{evaluate, score, serve, train};

use crate::datadir::{MARKETPLACE_FILE, RECORDS_FILE};
use crate::manifest::RunManifest;
use crate::Common;

/// Loaded manifest (when replaying) and the output directory, created.
pub(crate) fn setup(common: &Common, subcommand: &str) -> Result<(Option<RunManifest>, PathBuf)> {
    let replay = match &common.manifest {
        None => None,
        Some(p) => {
            let m = RunManifest::read(p)?;
            if m.subcommand != subcommand {
                bail!("manifest is for `{}`, not `{subcommand}`", m.subcommand);
            }
            m.verify_inputs()?;
            Some(m)
        }
    };
    let out = common
        .out
        .clone()
        .or_else(|| replay.as_ref().map(|m| m.out_dir.clone()))
        .unwrap_or_else(|| Path::new("out").join(subcommand));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((replay, out))
}

/// A file input: the flag, else the manifest's record of it.
pub(crate) fn input_file(flag: &Option<PathBuf>, replay: Option<&RunManifest>, role: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| replay.and_then(|m| m.input(role)).map(Path::to_path_buf))
        .with_context(|| format!("missing --{role}"))
}

/// A data directory input, tracked in manifests through its two files.
pub(crate) fn input_data_dir(flag: &Option<PathBuf>, replay: Option<&RunManifest>) -> Result<PathBuf> {
    if let Some(d) = flag {
        return Ok(d.clone());
    }
    replay
        .and_then(|m| m.input("data"))
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .context("missing --data")
}

pub(crate) fn record_data_dir(manifest: &mut RunManifest, dir: &Path) -> Result<()> {
    manifest.add_input("data", &dir.join(RECORDS_FILE))?;
    manifest.add_input("data_meta", &dir.join(MARKETPLACE_FILE))
}

pub(crate) fn write_json(out: &Path, name: &str, value: &impl serde::Serialize) -> Result<()> {
    let path = out.join(name);
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn write_text(out: &Path, name: &str, text: &str) -> Result<()> {
    let path = out.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn finish(mut manifest: RunManifest, metrics: serde_json::Value) -> Result<RunManifest> {
    manifest.metrics = metrics;
    manifest.write()?;
    Ok(manifest)
}
