//! Corpus-level orchestration: manifests, run configuration, and the
//! commands behind the `phoneseg` binary.
//!
//! Stages talk to each other only through files, every command is
//! deterministic for a given config and seed, and each writes a run log with
//! the config hash and SHA-256 of every input it consumed.

mod commands;
mod config;
mod manifest;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};

pub use commands::{
    cmd_decode, cmd_evaluate, cmd_extract_mel, cmd_import_features, cmd_kmeans, cmd_peaks, cmd_purity,
    cmd_split, cmd_sweep, cmd_train, read_assignment_file, threshold_grid, write_assignment_file,
    DecodeOutcome, PeaksOutcome, SweepRow, SweepTable, TrainOutcome,
};
pub use config::{
    parse_override, read_config_file, DecodeMode, PeakSource, Profile, RunConfig, SplitSelector, CONFIG_KEYS,
};
pub use manifest::{Manifest, ManifestRow, Split};

/// Environment variable that overrides the configured worker count.
pub const WORKERS_ENV: &str = "SEG_NUM_WORKERS";

/// Runs `f` on a dedicated pool when a worker count is configured, either
/// through [`WORKERS_ENV`] or `config.workers`.
pub fn run_with_workers<T: Send>(config: &RunConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::config(format!("{WORKERS_ENV} must be a non-negative integer, got `{v}`")))?,
        Err(_) => config.workers,
    };
    if workers == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start {workers} workers: {e}")))?
        .install(f)
}

/// Plain-text record of one command invocation.
#[derive(Debug)]
pub struct RunLog {
    command: String,
    config: RunConfig,
    inputs: Vec<PathBuf>,
    utterances: BTreeMap<String, String>,
    notes: Vec<String>,
}

impl RunLog {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config: config.clone(),
            inputs: Vec::new(),
            utterances: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    /// Per-utterance line; the log orders these by id.
    pub fn utterance(&mut self, id: &str, line: impl Into<String>) {
        self.utterances.insert(id.to_string(), line.into());
    }

    pub fn note(&mut self, line: impl Into<String>) {
        let line = line.into();
        log::info!("{line}");
        self.notes.push(line);
    }

    pub fn render(&self) -> Result<String> {
        let mut inputs = self.inputs.clone();
        inputs.sort();
        inputs.dedup();
        let hashes = inputs
            .par_iter()
            .map(|p| std::fs::read(p).map(|b| config::hex_digest(&b)).map_err(|e| Error::io(p, e)))
            .collect::<Result<Vec<_>>>()?;

        let mut s = String::new();
        let _ = writeln!(s, "command\t{}", self.command);
        let _ = writeln!(s, "version\t{}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "config_hash\t{}", self.config.hash());
        let _ = writeln!(s, "seed\t{}", self.config.hmm.seed);
        s.push_str("\n[config]\n");
        s.push_str(&self.config.canonical());
        s.push_str("\n[inputs]\n");
        for (p, h) in inputs.iter().zip(&hashes) {
            let _ = writeln!(s, "{h}  {}", p.display());
        }
        s.push_str("\n[utterances]\n");
        for (id, line) in &self.utterances {
            let _ = writeln!(s, "{id}\t{line}");
        }
        s.push_str("\n[notes]\n");
        for n in &self.notes {
            let _ = writeln!(s, "{n}");
        }
        Ok(s)
    }

    /// Writes `<output_dir>/<command>.log`.
    pub fn write(&self) -> Result<PathBuf> {
        let path = self.config.output_dir.join(format!("{}.log", self.command));
        write_text(&path, &self.render()?)?;
        Ok(path)
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}
