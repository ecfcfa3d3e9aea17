use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::CliError;

/// `manifest.txt`: what ran, with which seed and inputs, and what it wrote.
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<(String, String)>,
    pub seed: u64,
    pub started: u64,
    pub outputs: Vec<PathBuf>,
    pub replay: String,
}

pub fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.into(),
            inputs: vec![],
            seed,
            started: now(),
            outputs: vec![],
            replay: String::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut s = String::new();
        writeln!(s, "command = {}", self.command).unwrap();
        writeln!(s, "version = {}", env!("CARGO_PKG_VERSION")).unwrap();
        writeln!(s, "formats = fn-sexpr, checkpoint-text, PNET1").unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        for (k, v) in &self.inputs {
            writeln!(s, "{k} = {v}").unwrap();
        }
        writeln!(s, "started = {}", self.started).unwrap();
        writeln!(s, "finished = {}", now()).unwrap();
        for p in &self.outputs {
            writeln!(s, "output = {}", p.display()).unwrap();
        }
        writeln!(s, "replay = {}", self.replay).unwrap();
        let path = dir.join("manifest.txt");
        fs::write(&path, s).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }
}
