//! Run manifests: a `key=value` record of what a stage was asked to do,
//! written before the stage touches any parameters.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use maskgan_core::eval::MetricsReport;
use maskgan_core::training::IterationMetrics;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{read_text, write_text};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub config: Vec<(String, String)>,
    /// Role (`input`, `output`, `lm`, ...) to path.
    pub checkpoints: Vec<(String, PathBuf)>,
}

impl RunManifest {
    pub fn new(stage: &str, cfg: &RunConfig) -> Self {
        Self {
            stage: stage.into(),
            version: VERSION.into(),
            seed: cfg.seed,
            config: cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            checkpoints: Vec::new(),
        }
    }

    pub fn with_checkpoint(mut self, role: &str, path: &Path) -> Self {
        self.checkpoints.push((role.into(), path.to_path_buf()));
        self
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("stage={}\nversion={}\nseed={}\n", self.stage, self.version, self.seed);
        for (k, v) in &self.config {
            s += &format!("config.{k}={v}\n");
        }
        for (role, p) in &self.checkpoints {
            s += &format!("checkpoint.{role}={}\n", p.display());
        }
        s += &format!("columns.metrics={}\n", IterationMetrics::CSV_HEADER);
        s += &format!("columns.report={}\n", MetricsReport::CSV_HEADER);
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self {
            stage: String::new(),
            version: String::new(),
            seed: 0,
            config: Vec::new(),
            checkpoints: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            let err = |msg: &str| Error::Config {
                line: i + 1,
                msg: msg.into(),
            };
            let Some((k, v)) = line.split_once('=') else {
                continue;
            };
            match k {
                "stage" => m.stage = v.into(),
                "version" => m.version = v.into(),
                "seed" => m.seed = v.parse().map_err(|_| err("bad seed"))?,
                _ => {
                    if let Some(key) = k.strip_prefix("config.") {
                        m.config.push((key.into(), v.into()));
                    } else if let Some(role) = k.strip_prefix("checkpoint.") {
                        m.checkpoints.push((role.into(), v.into()));
                    }
                }
            }
        }
        Ok(m)
    }

    /// Human-readable list of settings that differ from `other`, empty when
    /// the two describe the same run.
    pub fn diff(&self, other: &Self) -> Vec<String> {
        let mut out = Vec::new();
        if self.seed != other.seed {
            out.push(format!("seed {} vs {}", other.seed, self.seed));
        }
        let a: BTreeMap<_, _> = other.config.iter().cloned().collect();
        let b: BTreeMap<_, _> = self.config.iter().cloned().collect();
        for k in a.keys().chain(b.keys().filter(|k| !a.contains_key(*k))) {
            let (x, y) = (a.get(k), b.get(k));
            if x != y {
                let show = |v: Option<&String>| v.cloned().unwrap_or_else(|| "<unset>".into());
                out.push(format!("{k} {} vs {}", show(x), show(y)));
            }
        }
        out
    }

    /// Writes the manifest to `path`. An existing manifest that disagrees
    /// is logged and, unless `force` is set, refused.
    pub fn write(&self, path: &Path, force: bool) -> Result<()> {
        if path.exists() {
            let prev = Self::parse(&read_text(path)?)?;
            let diff = self.diff(&prev);
            if !diff.is_empty() {
                let diff = diff.join(", ");
                log::warn!("{}: previous run differs: {diff}", path.display());
                if !force {
                    return Err(Error::ManifestMismatch {
                        path: path.to_path_buf(),
                        diff,
                    });
                }
            }
        }
        write_text(path, &self.to_text())
    }
}
