//! Run manifests: what was run, with which resolved parameters, and where the
//! outputs went. Data files stay free of timestamps so reruns match byte for
//! byte; everything time-dependent lives here.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub rng: String,
    pub normal: String,
    pub threads: usize,
    /// Arguments that reproduce this run when passed back to the binary.
    pub argv: Vec<String>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_secs: u64,
    pub wall_clock_seconds: f64,
    pub timings: Vec<Timing>,
}

/// `<out>.manifest.json` next to the primary output.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(MANIFEST_SUFFIX);
    PathBuf::from(s)
}

/// Accumulates outputs and phase timings for one subcommand.
pub struct Recorder {
    started: SystemTime,
    clock: Instant,
    phase_clock: Instant,
    timings: Vec<Timing>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn start() -> Self {
        let now = Instant::now();
        Self {
            started: SystemTime::now(),
            clock: now,
            phase_clock: now,
            timings: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Closes the current phase under `name`.
    pub fn phase(&mut self, name: &str) {
        let now = Instant::now();
        self.timings.push(Timing {
            phase: name.to_string(),
            seconds: (now - self.phase_clock).as_secs_f64(),
        });
        self.phase_clock = now;
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes the manifest next to `primary` and returns its path.
    pub fn finish<P: Serialize>(
        self,
        subcommand: &str,
        params: &P,
        seed: Option<u64>,
        primary: &Path,
    ) -> Result<PathBuf> {
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            params: serde_json::to_value(params)?,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            rng: gmc_core::seed::RNG_NAME.to_string(),
            normal: gmc_core::seed::NORMAL_NAME.to_string(),
            threads: rayon::current_num_threads(),
            argv: std::env::args().skip(1).collect(),
            outputs: self.outputs,
            started_unix_secs: self
                .started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_clock_seconds: self.clock.elapsed().as_secs_f64(),
            timings: self.timings,
        };
        let path = manifest_path(primary);
        gmc_core::dataio::write_json(&path, &manifest)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
