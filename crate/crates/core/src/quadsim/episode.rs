use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::controller::{CascadeController, ControllerGains};
use super::dynamics::{measure, step_dynamics, QuadState};
use super::params::{inject_fault, Domain, DomainShiftProfile, FaultSpec, QuadParams, NUM_ROTORS};
use super::plan::FlightPlan;
use crate::error::{invalid, Error, Result};

/// Integration and logging settings shared by all episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub internal_rate_hz: f64,
    pub log_rate_hz: f64,
    /// Logged samples start after this settling time.
    pub warmup_s: f64,
    /// Crashed episodes are regenerated with a fresh seed at most this many
    /// times in total.
    pub max_attempts: usize,
    pub gains: ControllerGains,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            internal_rate_hz: 500.0,
            log_rate_hz: 100.0,
            warmup_s: 3.0,
            max_attempts: 5,
            gains: ControllerGains::default(),
        }
    }
}

impl SimSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.internal_rate_hz > 0.0 && self.log_rate_hz > 0.0 && self.warmup_s >= 0.0) {
            return invalid("rates must be positive and warmup non-negative");
        }
        let ratio = self.internal_rate_hz / self.log_rate_hz;
        if ratio < 1.0 || (ratio - ratio.round()).abs() > 1e-9 {
            return invalid("internal rate must be an integer multiple of the log rate");
        }
        if 1.0 / self.internal_rate_hz > super::dynamics::MAX_DT {
            return invalid("internal rate too low for the integrator");
        }
        if self.max_attempts == 0 {
            return invalid("max_attempts must be >= 1");
        }
        Ok(())
    }

    fn decimation(&self) -> usize {
        (self.internal_rate_hz / self.log_rate_hz).round() as usize
    }
}

/// Everything that determines one flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRequest {
    pub params: QuadParams,
    pub fault: FaultSpec,
    pub shift: DomainShiftProfile,
    pub domain: Domain,
    pub plan: FlightPlan,
    pub duration_s: f64,
    pub seed: u64,
    /// The episode must log at least this many samples.
    pub min_samples: usize,
}

/// A logged flight at a uniform rate. `states` hold what the sensors
/// reported; `commanded` the controller's rotor speed commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightEpisode {
    pub rate_hz: f64,
    pub domain: Domain,
    pub fault: FaultSpec,
    /// Seed actually used (differs from the requested one after rejections).
    pub seed: u64,
    pub requested_seed: u64,
    pub states: Vec<QuadState>,
    pub commanded: Vec<[f64; NUM_ROTORS]>,
}

impl FlightEpisode {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn label(&self) -> u8 {
        self.fault.label()
    }
}

/// SplitMix64 step; derives independent child seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_DISTURBANCE: u64 = 1;
const STREAM_SENSORS: u64 = 2;
const STREAM_JITTER: u64 = 3;

/// Flies `req`, regenerating crashed attempts with derived seeds.
pub fn simulate_episode(req: &EpisodeRequest, settings: &SimSettings) -> Result<FlightEpisode> {
    req.params.validate_nominal()?;
    req.fault.validate()?;
    req.shift.validate()?;
    req.plan.validate()?;
    settings.validate()?;
    let expected = (req.duration_s * settings.log_rate_hz).floor();
    if !(expected >= req.min_samples as f64) {
        return invalid(format!(
            "duration {}s at {} Hz yields fewer than {} samples",
            req.duration_s, settings.log_rate_hz, req.min_samples
        ));
    }
    let mut last_err = None;
    for attempt in 0..settings.max_attempts {
        let seed = if attempt == 0 {
            req.seed
        } else {
            mix_seed(req.seed, attempt as u64)
        };
        match fly(req, settings, seed) {
            Ok(mut ep) => {
                ep.requested_seed = req.seed;
                return Ok(ep);
            }
            Err(Error::Unstable(msg)) => {
                warn!(
                    "episode seed {seed} (label {}) rejected: {msg}",
                    req.fault.label()
                );
                last_err = Some(msg);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Unstable(format!(
        "{} attempts failed for requested seed {}; last: {}",
        settings.max_attempts,
        req.seed,
        last_err.unwrap_or_default()
    )))
}

fn fly(req: &EpisodeRequest, settings: &SimSettings, seed: u64) -> Result<FlightEpisode> {
    let plant = inject_fault(&req.params, &req.fault)?;
    let mut controller = CascadeController::new(req.params.clone(), settings.gains);
    let stream = |s: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(s);
        r
    };
    let mut dist_rng = stream(STREAM_DISTURBANCE);
    let mut sensor_rng = stream(STREAM_SENSORS);
    let mut jitter_rng = stream(STREAM_JITTER);

    let dt = 1.0 / settings.internal_rate_hz;
    let decimation = settings.decimation();
    let warmup_steps = (settings.warmup_s * settings.internal_rate_hz).round() as usize;
    let logged = (req.duration_s * settings.log_rate_hz).floor() as usize;
    let total_steps = warmup_steps + logged * decimation;
    let schedule = req.plan.schedule(settings.warmup_s + req.duration_s);

    let start = req.plan.start();
    let mut state = QuadState::hovering_at(start.position, start.yaw, req.params.hover_speed());
    let mut cmd = [req.params.hover_speed(); NUM_ROTORS];
    let mut since_update = dt;
    let mut leg = 0;
    let mut states = Vec::with_capacity(logged);
    let mut commanded = Vec::with_capacity(logged);

    for step in 0..total_steps {
        let t = step as f64 * dt;
        while leg + 1 < schedule.len() && schedule[leg + 1].0 <= t {
            leg += 1;
        }
        let target = schedule[leg].1;
        let skip =
            req.shift.control_jitter > 0.0 && jitter_rng.gen::<f64>() < req.shift.control_jitter;
        if !skip {
            cmd = controller.update(&state, &target, since_update);
            since_update = 0.0;
        }
        since_update += dt;
        state = step_dynamics(&state, &cmd, &plant, &req.shift, dt, &mut dist_rng)?;

        let tilt = state.attitude[0].abs().max(state.attitude[1].abs());
        let drift = (0..3)
            .map(|k| (state.position[k] - target.position[k]).abs())
            .fold(0.0, f64::max);
        if tilt > 1.2 || drift > 25.0 {
            return Err(Error::Unstable(format!(
                "vehicle lost control at t={t:.2}s"
            )));
        }

        let after = step + 1;
        if after > warmup_steps && (after - warmup_steps).is_multiple_of(decimation) {
            states.push(measure(&state, &req.shift, &mut sensor_rng));
            commanded.push(cmd);
        }
    }
    debug_assert_eq!(states.len(), logged);
    Ok(FlightEpisode {
        rate_hz: settings.log_rate_hz,
        domain: req.domain,
        fault: req.fault,
        seed,
        requested_seed: req.seed,
        states,
        commanded,
    })
}
