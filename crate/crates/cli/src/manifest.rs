use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// What the file is to the command (`data`, `model`, `records`, ...).
    pub role: String,
    /// Inputs: as given. Outputs: relative to the output directory.
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one command run: enough to re-run it and check the outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: Option<u64>,
    /// Fully resolved configuration (defaults, file and flags applied).
    pub config: Value,
    pub out_dir: PathBuf,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Deterministic results (also present in the hashed outputs).
    pub metrics: Value,
    /// Timings and other machine-dependent numbers; not reproducible and
    /// never hashed.
    #[serde(default)]
    pub measurements: Value,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: Option<u64>, config: &impl Serialize, out_dir: &Path) -> Result<Self> {
        Ok(Self {
            tool: "rankforge".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            seed,
            config: serde_json::to_value(config)?,
            out_dir: out_dir.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            metrics: Value::Null,
            measurements: Value::Null,
        })
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest {
            role: role.into(),
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// `rel` is relative to the output directory.
    pub fn add_output(&mut self, role: &str, rel: impl AsRef<Path>) -> Result<()> {
        let rel = rel.as_ref();
        self.outputs.push(FileDigest {
            role: role.into(),
            path: rel.to_path_buf(),
            sha256: sha256_file(&self.out_dir.join(rel))?,
        });
        Ok(())
    }

    pub fn input(&self, role: &str) -> Option<&Path> {
        self.inputs.iter().find(|d| d.role == role).map(|d| d.path.as_path())
    }

    /// Fails if an input recorded in the manifest changed since.
    pub fn verify_inputs(&self) -> Result<()> {
        for d in &self.inputs {
            let now = sha256_file(&d.path)?;
            if now != d.sha256 {
                bail!(
                    "input `{}` ({}) changed since the manifest was written",
                    d.role,
                    d.path.display()
                );
            }
        }
        Ok(())
    }

    pub fn write(&self) -> Result<PathBuf> {
        let path = self.out_dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_vec_pretty(self)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_slice(&bytes).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = match f.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
        };
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}
