//! Run manifests.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const SEED_RULE: &str =
    "replica seed = derive_seed([master, fnv1a64(experiment), replica]) with a SplitMix64 chain; \
streams are ChaCha8 seeded per (seed, tag)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical TOML of the effective configuration.
    pub config_hash: String,
    pub code_version: String,
    pub seed_rule: String,
    pub master_seed: u64,
    pub workers: usize,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

#[must_use]
pub fn config_hash(config: &ExperimentConfig) -> String {
    let digest = Sha256::digest(config.canonical().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    #[must_use]
    pub fn start(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            command: command.into(),
            config_hash: config_hash(config),
            code_version: env!("CARGO_PKG_VERSION").into(),
            seed_rule: SEED_RULE.into(),
            master_seed: config.seed,
            workers: config.workers,
            started_unix: now(),
            finished_unix: None,
        }
    }

    pub fn finish(&mut self) {
        self.finished_unix = Some(now());
    }
}
