use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::controller::Setpoint;
use crate::error::{invalid, Result};

/// Where the vehicle is asked to fly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlightPlan {
    /// Fixed waypoints visited in order and repeated, each held `hold_s`.
    Waypoints {
        waypoints: Vec<Setpoint>,
        hold_s: f64,
    },
    /// Seeded random excursions around `center`, emulating a pilot.
    RandomExcursion {
        center: [f64; 3],
        half_extent: [f64; 3],
        max_yaw: f64,
        hold_min_s: f64,
        hold_max_s: f64,
        seed: u64,
    },
}

/// Shape of seeded random excursions; the seed is supplied per flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcursionSettings {
    pub center: [f64; 3],
    pub half_extent: [f64; 3],
    pub max_yaw: f64,
    pub hold_min_s: f64,
    pub hold_max_s: f64,
}

impl Default for ExcursionSettings {
    fn default() -> Self {
        Self {
            center: [0.0, 0.0, 1.6],
            half_extent: [1.5, 1.5, 0.5],
            max_yaw: std::f64::consts::FRAC_PI_3,
            hold_min_s: 4.0,
            hold_max_s: 6.0,
        }
    }
}

impl ExcursionSettings {
    pub fn plan(&self, seed: u64) -> FlightPlan {
        FlightPlan::RandomExcursion {
            center: self.center,
            half_extent: self.half_extent,
            max_yaw: self.max_yaw,
            hold_min_s: self.hold_min_s,
            hold_max_s: self.hold_max_s,
            seed,
        }
    }
}

impl FlightPlan {
    /// The waypoint circuit shared by every source-domain category.
    pub fn source_circuit() -> Self {
        use std::f64::consts::FRAC_PI_4;
        let wp = |x: f64, y: f64, z: f64, yaw: f64| Setpoint {
            position: [x, y, z],
            yaw,
        };
        FlightPlan::Waypoints {
            waypoints: vec![
                wp(0.0, 0.0, 1.5, 0.0),
                wp(1.5, 0.0, 1.5, 0.0),
                wp(1.5, 1.5, 2.0, FRAC_PI_4),
                wp(0.0, 1.5, 1.5, 2.0 * FRAC_PI_4),
                wp(-1.0, 0.5, 1.8, 0.0),
                wp(0.0, 0.0, 1.5, -FRAC_PI_4),
            ],
            hold_s: 5.0,
        }
    }

    pub fn random_excursion(seed: u64) -> Self {
        ExcursionSettings::default().plan(seed)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FlightPlan::Waypoints { waypoints, hold_s } => {
                if waypoints.is_empty() || !(*hold_s > 0.0) {
                    return invalid(
                        "waypoint plan needs at least one waypoint and a positive hold time",
                    );
                }
            }
            FlightPlan::RandomExcursion {
                half_extent,
                hold_min_s,
                hold_max_s,
                ..
            } => {
                if half_extent.iter().any(|&h| h < 0.0)
                    || !(*hold_min_s > 0.0 && hold_max_s >= hold_min_s)
                {
                    return invalid(
                        "random excursion needs non-negative extents and 0 < hold_min <= hold_max",
                    );
                }
            }
        }
        Ok(())
    }

    /// Starting setpoint (the vehicle is initialised hovering there).
    pub fn start(&self) -> Setpoint {
        match self {
            FlightPlan::Waypoints { waypoints, .. } => waypoints[0],
            FlightPlan::RandomExcursion { center, .. } => Setpoint {
                position: *center,
                yaw: 0.0,
            },
        }
    }

    /// Setpoint changes `(start time, setpoint)` covering `[0, duration_s)`.
    pub fn schedule(&self, duration_s: f64) -> Vec<(f64, Setpoint)> {
        let mut out = Vec::new();
        match self {
            FlightPlan::Waypoints { waypoints, hold_s } => {
                let mut t = 0.0;
                let mut i = 0;
                while t < duration_s {
                    out.push((t, waypoints[i % waypoints.len()]));
                    t += hold_s;
                    i += 1;
                }
            }
            FlightPlan::RandomExcursion {
                center,
                half_extent,
                max_yaw,
                hold_min_s,
                hold_max_s,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                out.push((0.0, self.start()));
                let mut t = rng.gen_range(*hold_min_s..=*hold_max_s);
                while t < duration_s {
                    let mut position = *center;
                    for k in 0..3 {
                        position[k] += half_extent[k] * rng.gen_range(-1.0..=1.0);
                    }
                    let yaw = max_yaw * rng.gen_range(-1.0..=1.0);
                    out.push((t, Setpoint { position, yaw }));
                    t += rng.gen_range(*hold_min_s..=*hold_max_s);
                }
            }
        }
        out
    }
}
