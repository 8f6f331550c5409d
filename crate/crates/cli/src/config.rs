//! Experiment configuration files.

use std::path::{Path, PathBuf};

use pfmsd_core::{validate_loop_spec, LoopSpec, SignalExpr};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Compare,
    Spectra,
    Spurs,
    Sweep,
    Sidebands,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpurOptions {
    #[serde(default = "four")]
    pub q_max: u32,
    #[serde(default = "three")]
    pub r_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    /// Tone frequency; the input tone's frequency when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_x: Option<f64>,
    /// Explicit amplitudes, ascending.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
    /// `[from, to, step]` in dBFS relative to the mid-scale DC level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dbfs_range: Option<[f64; 3]>,
    #[serde(default = "twenty")]
    pub osr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidebandOptions {
    #[serde(default = "twenty_u32")]
    pub q_max: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<u32>,
}

fn four() -> u32 {
    4
}
fn three() -> u32 {
    3
}
fn twenty() -> f64 {
    20.0
}
fn twenty_u32() -> u32 {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "loop")]
    pub loop_spec: LoopSpec,
    pub input: SignalExpr,
    /// Run length in samples.
    pub n: usize,
    /// Analyses `simulate` runs after writing the traces.
    #[serde(default)]
    pub analyses: Vec<Analysis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nfft: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    /// Dense grid points per sample for continuous-time spectra.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_per_sample: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spurs: Option<SpurOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidebands: Option<SidebandOptions>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        validate_loop_spec(&self.loop_spec)?;
        self.input.validate()?;
        if self.n == 0 {
            return Err(CliError::usage("n must be at least 1"));
        }
        if let Some(k) = self.substeps {
            if k == 0 {
                return Err(CliError::usage("substeps must be at least 1"));
            }
        }
        if let Some(nfft) = self.nfft {
            check_pow2("nfft", nfft)?;
        }
        if self.dense_per_sample == Some(0) {
            return Err(CliError::usage("dense_per_sample must be at least 1"));
        }
        Ok(())
    }

    /// Compact JSON with sorted keys.
    pub fn canonical_json(&self) -> Result<String, CliError> {
        let value = serde_json::to_value(self).map_err(|e| CliError::runtime(e.to_string()))?;
        serde_json::to_string(&value).map_err(|e| CliError::runtime(e.to_string()))
    }

    pub fn sha256(&self) -> Result<String, CliError> {
        let digest = Sha256::digest(self.canonical_json()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

pub fn check_pow2(name: &str, v: usize) -> Result<(), CliError> {
    if v < 16 || !v.is_power_of_two() {
        return Err(CliError::usage(format!(
            "{name} must be a power of two of at least 16, got {v}"
        )));
    }
    Ok(())
}
