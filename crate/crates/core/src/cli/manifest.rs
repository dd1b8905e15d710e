use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fairtrade::scenario::results::{write_json, ResultsError};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to repeat a run. Written next to the outputs it lists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub scenario: Option<PathBuf>,
    /// Flag values as given or defaulted, by flag name.
    pub parameters: BTreeMap<String, String>,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Files written by the run, relative to `out_dir`.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, scenario: Option<&Path>, out_dir: &Path, seed: u64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            scenario: scenario.map(Path::to_path_buf),
            parameters: BTreeMap::new(),
            out_dir: out_dir.to_path_buf(),
            seed,
            outputs: Vec::new(),
        }
    }

    pub fn param(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.parameters.insert(name.to_string(), value.to_string());
        self
    }

    /// Path of an output file, recorded in the manifest.
    pub fn output(&mut self, file: &str) -> PathBuf {
        self.outputs.push(file.to_string());
        self.out_dir.join(file)
    }

    pub fn write(&mut self) -> Result<PathBuf, ResultsError> {
        let path = self.out_dir.join(MANIFEST_FILE);
        write_json(self, &path)?;
        Ok(path)
    }
}
