use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use printsim_core::TrojanId;

pub const FILE_NAME: &str = "manifest.json";

/// Everything needed to repeat a `simulate` run. Artifact paths are relative
/// to `out_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub gcode: PathBuf,
    pub profile: Option<PathBuf>,
    pub trojan_config: Option<PathBuf>,
    /// Trojans enabled with default parameters on the command line.
    pub trojans: Vec<TrojanId>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dump_timeline: bool,
    pub artifacts: Artifacts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub capture_csv: PathBuf,
    pub capture_bin: PathBuf,
    pub report: PathBuf,
    pub trojan_log: PathBuf,
    pub deposition: PathBuf,
    pub timeline: Option<PathBuf>,
}

impl Artifacts {
    pub fn standard(dump_timeline: bool) -> Artifacts {
        Artifacts {
            capture_csv: "capture.csv".into(),
            capture_bin: "capture.bin".into(),
            report: "run.json".into(),
            trojan_log: "trojan_log.json".into(),
            deposition: "deposition.csv".into(),
            timeline: dump_timeline.then(|| "timeline.txt".into()),
        }
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self) -> Result<PathBuf> {
        let path = self.out_dir.join(FILE_NAME);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
