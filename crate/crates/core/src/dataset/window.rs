use log::warn;
use serde::{Deserialize, Serialize};

use crate::quadsim::{Domain, FlightEpisode, NUM_ROTORS};

/// Rows of a window: three angular accelerations, then four squared rotor
/// speeds.
pub const NUM_ROWS: usize = 3 + NUM_ROTORS;

/// One input window, row-major `[NUM_ROWS][len]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub values: Vec<f32>,
    pub len: usize,
    pub label: u8,
    pub domain: Domain,
}

impl Sample {
    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.len..(r + 1) * self.len]
    }
}

/// Number of windows of `len` samples at `stride` in a series of `total`.
pub fn window_count(total: usize, len: usize, stride: usize) -> usize {
    if len == 0 || stride == 0 || total < len {
        0
    } else {
        (total - len) / stride + 1
    }
}

/// Cuts `episode` into windows of `len` consecutive logged steps, each
/// `stride` steps after the previous one. Short episodes yield nothing.
pub fn window_episode(episode: &FlightEpisode, len: usize, stride: usize) -> Vec<Sample> {
    let count = window_count(episode.len(), len, stride);
    if count == 0 {
        warn!(
            "episode of {} steps too short for windows of {len} (stride {stride})",
            episode.len()
        );
        return Vec::new();
    }
    let label = episode.label();
    (0..count)
        .map(|k| {
            let steps = &episode.states[k * stride..k * stride + len];
            let mut values = vec![0.0f32; NUM_ROWS * len];
            for (t, s) in steps.iter().enumerate() {
                for r in 0..3 {
                    values[r * len + t] = s.angular_accel[r] as f32;
                }
                for i in 0..NUM_ROTORS {
                    values[(3 + i) * len + t] = (s.rotor_speeds[i] * s.rotor_speeds[i]) as f32;
                }
            }
            Sample {
                values,
                len,
                label,
                domain: episode.domain,
            }
        })
        .collect()
}
