use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::params::{DomainShiftProfile, QuadParams, NUM_ROTORS};
use crate::error::{invalid, Error, Result};

/// Largest integration step accepted by [`step_dynamics`], s.
pub const MAX_DT: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuadState {
    /// World frame, m (z up).
    pub position: [f64; 3],
    /// World frame, m/s.
    pub velocity: [f64; 3],
    /// Roll, pitch, yaw (ZYX convention), rad.
    pub attitude: [f64; 3],
    /// Body rates p, q, r, rad/s.
    pub rates: [f64; 3],
    /// Body angular accelerations from the last step, rad/s².
    pub angular_accel: [f64; 3],
    /// rad/s
    pub rotor_speeds: [f64; NUM_ROTORS],
}

impl QuadState {
    pub fn hovering_at(position: [f64; 3], yaw: f64, rotor_speed: f64) -> Self {
        Self {
            position,
            attitude: [0.0, 0.0, yaw],
            rotor_speeds: [rotor_speed; NUM_ROTORS],
            ..Default::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(&self.velocity)
            .chain(&self.attitude)
            .chain(&self.rates)
            .chain(&self.angular_accel)
            .chain(&self.rotor_speeds)
            .all(|v| v.is_finite())
    }
}

/// Forces and moments acting on the airframe at the given rotor speeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    /// Total thrust along body z, N.
    pub thrust: f64,
    /// Body torques, N·m.
    pub torque: [f64; 3],
}

/// Rotor thrusts `gain_i · k_t,i · ω_i²` mapped through the X geometry.
pub fn rotor_wrench(
    params: &QuadParams,
    shift: &DomainShiftProfile,
    speeds: &[f64; NUM_ROTORS],
) -> Wrench {
    let pos = params.rotor_positions();
    let mut w = Wrench {
        thrust: 0.0,
        torque: [0.0; 3],
    };
    for i in 0..NUM_ROTORS {
        let w2 = speeds[i] * speeds[i];
        let f = shift.thrust_gain[i] * params.thrust_coeff[i] * w2;
        let q = shift.thrust_gain[i] * params.drag_coeff[i] * w2;
        w.thrust += f;
        w.torque[0] += pos[i][1] * f;
        w.torque[1] -= pos[i][0] * f;
        // reaction torque opposes the rotor's spin
        w.torque[2] -= params.spin[i] as f64 * q;
    }
    w
}

/// Third column of the body-to-world rotation (direction of body z).
pub fn body_z_in_world(attitude: &[f64; 3]) -> [f64; 3] {
    let (sr, cr) = attitude[0].sin_cos();
    let (sp, cp) = attitude[1].sin_cos();
    let (sy, cy) = attitude[2].sin_cos();
    [cy * sp * cr + sy * sr, sy * sp * cr - cy * sr, cp * cr]
}

fn euler_rates(attitude: &[f64; 3], rates: &[f64; 3]) -> [f64; 3] {
    let (sr, cr) = attitude[0].sin_cos();
    let (tp, cp) = (attitude[1].tan(), attitude[1].cos());
    let [p, q, r] = *rates;
    [
        p + (q * sr + r * cr) * tp,
        q * cr - r * sr,
        (q * sr + r * cr) / cp,
    ]
}

/// Advances the true vehicle state by `dt`.
///
/// Rotor speeds first relax toward `commanded` through the motor lag; the
/// resulting wrench then drives a semi-implicit Euler update (rates and
/// velocity first, then attitude and position from the new values). `rng`
/// drives the body-torque disturbance only.
pub fn step_dynamics<R: Rng + ?Sized>(
    state: &QuadState,
    commanded: &[f64; NUM_ROTORS],
    params: &QuadParams,
    shift: &DomainShiftProfile,
    dt: f64,
    rng: &mut R,
) -> Result<QuadState> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return invalid(format!("dt {dt} outside (0, {MAX_DT}]"));
    }
    if !state.is_finite() {
        return invalid("non-finite state");
    }
    let mut next = *state;

    let alpha = 1.0 - (-dt / params.motor_time_constant).exp();
    for i in 0..NUM_ROTORS {
        let cmd = commanded[i].clamp(0.0, params.max_rotor_speed);
        next.rotor_speeds[i] =
            (state.rotor_speeds[i] + alpha * (cmd - state.rotor_speeds[i])).max(0.0);
    }

    let wrench = rotor_wrench(params, shift, &next.rotor_speeds);
    let mass = params.mass * shift.mass_multiplier;
    let inertia = params.inertia.map(|v| v * shift.inertia_multiplier);

    let mut torque = wrench.torque;
    if params.disturbance_torque_std > 0.0 {
        for t in torque.iter_mut() {
            *t += params.disturbance_torque_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let [p, q, r] = state.rates;
    let iw = [inertia[0] * p, inertia[1] * q, inertia[2] * r];
    let gyro = [
        q * iw[2] - r * iw[1],
        r * iw[0] - p * iw[2],
        p * iw[1] - q * iw[0],
    ];
    for k in 0..3 {
        next.angular_accel[k] = (torque[k] - gyro[k]) / inertia[k];
        next.rates[k] = state.rates[k] + next.angular_accel[k] * dt;
    }

    let z_axis = body_z_in_world(&state.attitude);
    for k in 0..3 {
        let mut acc = wrench.thrust * z_axis[k] / mass;
        if k == 2 {
            acc -= params.gravity;
        }
        next.velocity[k] = state.velocity[k] + acc * dt;
        next.position[k] = state.position[k] + next.velocity[k] * dt;
    }

    let de = euler_rates(&state.attitude, &next.rates);
    for k in 0..3 {
        next.attitude[k] = state.attitude[k] + de[k] * dt;
    }
    next.attitude[2] = wrap_angle(next.attitude[2]);

    if !next.is_finite() {
        return Err(Error::Unstable(
            "dynamics produced a non-finite state".into(),
        ));
    }
    Ok(next)
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// What the logging sensors report: noisy angular accelerations and biased,
/// noisy rotor speeds. The dynamics never see these values.
pub fn measure<R: Rng + ?Sized>(
    state: &QuadState,
    shift: &DomainShiftProfile,
    rng: &mut R,
) -> QuadState {
    let mut out = *state;
    for k in 0..3 {
        let s = shift.angular_accel_noise_std[k];
        if s > 0.0 {
            out.angular_accel[k] += s * rng.sample::<f64, _>(StandardNormal);
        }
    }
    for i in 0..NUM_ROTORS {
        let mut w = state.rotor_speeds[i] + shift.speed_bias[i];
        if shift.speed_noise_std > 0.0 {
            w += shift.speed_noise_std * rng.sample::<f64, _>(StandardNormal);
        }
        out.rotor_speeds[i] = w.max(0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet() -> QuadParams {
        QuadParams {
            disturbance_torque_std: 0.0,
            ..QuadParams::default()
        }
    }

    #[test]
    fn hover_is_equilibrium() {
        let p = quiet();
        let id = DomainShiftProfile::identity();
        let w = p.hover_speed();
        let s = QuadState::hovering_at([0.0, 0.0, 1.0], 0.0, w);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = step_dynamics(&s, &[w; 4], &p, &id, 0.002, &mut rng).unwrap();
        for k in 0..3 {
            assert!(n.angular_accel[k].abs() < 1e-9, "{:?}", n.angular_accel);
        }
        assert!(n.velocity[2].abs() < 1e-12);
    }

    #[test]
    fn free_fall_without_thrust() {
        let p = quiet();
        let id = DomainShiftProfile::identity();
        let mut s = QuadState::hovering_at([0.0, 0.0, 10.0], 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dt = 0.002;
        for _ in 0..500 {
            let n = step_dynamics(&s, &[0.0; 4], &p, &id, dt, &mut rng).unwrap();
            assert!(((n.velocity[2] - s.velocity[2]) + p.gravity * dt).abs() <= 1e-6);
            assert_eq!(n.angular_accel, [0.0; 3]);
            s = n;
        }
    }

    #[test]
    fn front_right_rotor_boost_rolls_right_and_pitches_nose_up() {
        // Rotor 1 sits at (+d, -d). A 10 % thrust increase there adds
        // dF = 0.1·k_t·ω² at that corner: roll torque y·dF = -d·dF,
        // pitch torque -x·dF = -d·dF.
        let p = quiet();
        let id = DomainShiftProfile::identity();
        let w = p.hover_speed();
        let boosted = w * 1.1f64.sqrt();
        let s = QuadState {
            rotor_speeds: [boosted, w, w, w],
            ..QuadState::hovering_at([0.0; 3], 0.0, w)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = step_dynamics(&s, &[boosted, w, w, w], &p, &id, 0.002, &mut rng).unwrap();
        let d = p.arm_length / 2f64.sqrt();
        let df = 0.1 * p.thrust_coeff[0] * w * w;
        let expected_roll = -d * df / p.inertia[0];
        let expected_pitch = -d * df / p.inertia[1];
        assert!(n.angular_accel[0] < 0.0 && n.angular_accel[1] < 0.0);
        assert!((n.angular_accel[0] - expected_roll).abs() < 1e-9 * expected_roll.abs().max(1.0));
        assert!((n.angular_accel[1] - expected_pitch).abs() < 1e-9 * expected_pitch.abs().max(1.0));
    }

    #[test]
    fn rejects_bad_dt_and_state() {
        let p = quiet();
        let id = DomainShiftProfile::identity();
        let s = QuadState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(step_dynamics(&s, &[0.0; 4], &p, &id, 0.0, &mut rng).is_err());
        assert!(step_dynamics(&s, &[0.0; 4], &p, &id, 0.05, &mut rng).is_err());
        let bad = QuadState {
            position: [f64::NAN, 0.0, 0.0],
            ..s
        };
        assert!(step_dynamics(&bad, &[0.0; 4], &p, &id, 0.002, &mut rng).is_err());
    }

    #[test]
    fn identity_measurement_is_exact() {
        let s = QuadState {
            angular_accel: [0.1, -0.2, 0.3],
            rotor_speeds: [400.0, 410.0, 420.0, 430.0],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(measure(&s, &DomainShiftProfile::identity(), &mut rng), s);
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        for a in [-7.0, -PI, 0.0, PI, 3.5, 12.0] {
            let w = wrap_angle(a);
            assert!(w > -PI && w <= PI);
            assert!(
                ((w - a) / (2.0 * PI)).fract().abs() < 1e-9
                    || ((w - a) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9
            );
        }
    }
}
