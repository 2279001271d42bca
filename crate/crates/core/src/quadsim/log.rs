//! On-disk episode logs: a JSON manifest next to a little-endian f32 matrix.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dynamics::QuadState;
use super::episode::FlightEpisode;
use super::params::{Domain, FaultSpec, NUM_ROTORS};
use crate::error::{Error, Result};

pub const LOG_FORMAT_VERSION: u32 = 1;

pub const LOG_COLUMNS: [&str; 24] = [
    "t", "x", "y", "z", "vx", "vy", "vz", "roll", "pitch", "yaw", "p", "q", "r", "p_dot", "q_dot",
    "r_dot", "omega1", "omega2", "omega3", "omega4", "cmd1", "cmd2", "cmd3", "cmd4",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogManifest {
    pub format_version: u32,
    pub columns: Vec<String>,
    pub rows: usize,
    pub rate_hz: f64,
    pub domain: Domain,
    pub fault: FaultSpec,
    pub seed: u64,
    pub requested_seed: u64,
}

/// Path of the matrix file that accompanies a manifest.
pub fn matrix_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("f32")
}

/// Writes `<path>` (manifest) and its `.f32` matrix.
pub fn write_episode(path: &Path, ep: &FlightEpisode) -> Result<()> {
    let manifest = LogManifest {
        format_version: LOG_FORMAT_VERSION,
        columns: LOG_COLUMNS.iter().map(|c| c.to_string()).collect(),
        rows: ep.len(),
        rate_hz: ep.rate_hz,
        domain: ep.domain,
        fault: ep.fault,
        seed: ep.seed,
        requested_seed: ep.requested_seed,
    };
    let mut bytes = Vec::with_capacity(ep.len() * LOG_COLUMNS.len() * 4);
    for (i, (s, c)) in ep.states.iter().zip(&ep.commanded).enumerate() {
        let t = i as f64 / ep.rate_hz;
        let row = std::iter::once(t)
            .chain(s.position)
            .chain(s.velocity)
            .chain(s.attitude)
            .chain(s.rates)
            .chain(s.angular_accel)
            .chain(s.rotor_speeds)
            .chain(*c);
        for v in row {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, serde_json::to_vec_pretty(&manifest)?)?;
    fs::write(matrix_path(path), bytes)?;
    Ok(())
}

/// Reads an episode back. Values pass through f32, so they match the
/// in-memory episode to single precision only.
pub fn read_episode(path: &Path) -> Result<FlightEpisode> {
    let manifest: LogManifest = serde_json::from_slice(&fs::read(path)?)?;
    if manifest.format_version != LOG_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "episode log version {} (expected {LOG_FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    if manifest.columns.iter().map(String::as_str).ne(LOG_COLUMNS) {
        return Err(Error::Format("unexpected episode log columns".into()));
    }
    let raw = fs::read(matrix_path(path))?;
    let width = LOG_COLUMNS.len();
    if raw.len() != manifest.rows * width * 4 {
        return Err(Error::Format(format!(
            "matrix holds {} bytes, manifest promises {} rows",
            raw.len(),
            manifest.rows
        )));
    }
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let mut states = Vec::with_capacity(manifest.rows);
    let mut commanded = Vec::with_capacity(manifest.rows);
    for row in values.chunks_exact(width) {
        let take3 = |o: usize| [row[o], row[o + 1], row[o + 2]];
        let take4 = |o: usize| [row[o], row[o + 1], row[o + 2], row[o + 3]];
        states.push(QuadState {
            position: take3(1),
            velocity: take3(4),
            attitude: take3(7),
            rates: take3(10),
            angular_accel: take3(13),
            rotor_speeds: take4(16),
        });
        let cmd: [f64; NUM_ROTORS] = take4(20);
        commanded.push(cmd);
    }
    Ok(FlightEpisode {
        rate_hz: manifest.rate_hz,
        domain: manifest.domain,
        fault: manifest.fault,
        seed: manifest.seed,
        requested_seed: manifest.requested_seed,
        states,
        commanded,
    })
}
