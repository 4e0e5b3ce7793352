//! Instance file format and trajectory logs.
//!
//! An instance file is a single JSON document:
//!
//! ```json
//! {
//!   "n_states": 2,
//!   "n_actions": 2,
//!   "discount": 0.9,
//!   "rewards": [[0.5, 0.5], [0.0, 1.0]],
//!   "transitions": [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [1.0, 0.0]]],
//!   "availability": { "kind": "pda", "rho": [[1.0, 1.0], [1.0, 0.2]] }
//! }
//! ```
//!
//! `rewards` is indexed `[state][action]`, `transitions`
//! `[state][action][next_state]`. `availability.kind` is one of `"pda"`
//! (payload `rho`), `"explicit"` (payload `support`: per state a list of
//! `{ "set": [action, ..], "prob": q }`) or `"sampler-seed"` (payload
//! `seed` and `dist`, a distribution of the same shapes tagged by
//! `family`). Parsing validates every invariant; serialization of a parsed
//! instance reproduces it exactly.

use crate::model::{AvailabilityModel, BaseMdp, Instance, ValidationError};
use crate::rl::StepRecord;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("instance failed validation: {}", format_errors(.0))]
    Validation(Vec<ValidationError>),
}

fn format_errors(errors: &[ValidationError]) -> String {
    errors
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// On-disk schema of an instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    pub rewards: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub availability: AvailabilityModel,
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance) -> Self {
        let (n, m) = (inst.n_states(), inst.n_actions());
        InstanceFile {
            n_states: n,
            n_actions: m,
            discount: inst.discount(),
            rewards: (0..n)
                .map(|s| (0..m).map(|k| inst.mdp().reward(s, k)).collect())
                .collect(),
            transitions: (0..n)
                .map(|s| {
                    (0..m)
                        .map(|k| inst.mdp().transition_row(s, k).to_vec())
                        .collect()
                })
                .collect(),
            availability: inst.availability().clone(),
        }
    }

    pub fn into_instance(self) -> Result<Instance, IoError> {
        let mdp = BaseMdp::new(
            self.n_states,
            self.n_actions,
            self.discount,
            self.rewards,
            self.transitions,
        )
        .map_err(|e| IoError::Validation(vec![e]))?;
        Instance::new(mdp, self.availability).map_err(IoError::Validation)
    }
}

/// Parses and validates an instance document.
pub fn parse_instance(text: &str) -> Result<Instance, IoError> {
    let file: InstanceFile = serde_json::from_str(text)?;
    file.into_instance()
}

/// Serializes an instance to the documented format.
pub fn serialize_instance(inst: &Instance) -> String {
    serde_json::to_string_pretty(&InstanceFile::from_instance(inst))
        .expect("instance schema serializes")
}

pub fn read_instance_file(path: &Path) -> Result<Instance, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_instance(&text)
}

pub fn write_instance_file(path: &Path, inst: &Instance) -> Result<(), IoError> {
    std::fs::write(path, serialize_instance(inst) + "\n").map_err(|source| IoError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Writes a trajectory as line-delimited JSON, one step per line.
pub fn write_trajectory_log<W: Write>(mut out: W, records: &[StepRecord]) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectory_log<R: BufRead>(input: R) -> Result<Vec<StepRecord>, IoError> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|source| IoError::Read {
            path: "<trajectory stream>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

/// Formats a float with 9 significant digits, the fixed width used in every
/// CSV this crate emits.
pub fn fmt_sig9(x: f64) -> String {
    format!("{x:.8e}")
}
