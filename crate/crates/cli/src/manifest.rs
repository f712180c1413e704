use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;

use crate::error::CliResult;
use crate::io::{to_sorted_json, write_text};

/// Provenance record written alongside every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Started when the command begins; [`ManifestClock::finish`] stamps the end.
pub struct ManifestClock {
    command: &'static str,
    started_at: String,
}

impl ManifestClock {
    pub fn start(command: &'static str) -> Self {
        ManifestClock {
            command,
            started_at: now(),
        }
    }

    pub fn finish(self, config: &impl Serialize, seed: Option<u64>) -> CliResult<RunManifest> {
        Ok(RunManifest {
            command: self.command.to_owned(),
            config: serde_json::to_value(config)?,
            seed,
            version: env!("CARGO_PKG_VERSION").to_owned(),
            started_at: self.started_at,
            finished_at: now(),
        })
    }
}

/// `<out>.manifest.json` next to a file output.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Writes the manifest to `explicit`, else next to `out`, else to stderr.
pub fn emit(manifest: &RunManifest, explicit: Option<&Path>, out: Option<&Path>) -> CliResult<()> {
    let text = to_sorted_json(manifest)?;
    match (explicit, out) {
        (Some(p), _) => write_text(Some(p), &text),
        (None, Some(o)) => write_text(Some(&sidecar_path(o)), &text),
        (None, None) => {
            eprintln!("{text}");
            Ok(())
        }
    }
}
