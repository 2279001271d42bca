//! Cascaded position → attitude controller with motor mixing.
//!
//! The controller is built from the nominal airframe only. It never sees the
//! fault or the domain shift, so a weak rotor shows up as a persistent
//! difference in commanded speeds once the integrators settle.

use serde::{Deserialize, Serialize};

use super::dynamics::{wrap_angle, QuadState};
use super::params::{QuadParams, NUM_ROTORS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    pub pos_kp: [f64; 3],
    pub pos_kd: [f64; 3],
    pub alt_ki: f64,
    /// roll, pitch, yaw
    pub att_kp: [f64; 3],
    pub att_kd: [f64; 3],
    pub att_ki: [f64; 3],
    pub max_tilt: f64,
    pub max_accel: f64,
    pub integral_limit: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            pos_kp: [1.2, 1.2, 3.0],
            pos_kd: [1.8, 1.8, 3.0],
            alt_ki: 1.0,
            att_kp: [150.0, 150.0, 30.0],
            att_kd: [22.0, 22.0, 9.0],
            att_ki: [80.0, 80.0, 12.0],
            max_tilt: 0.45,
            max_accel: 4.0,
            integral_limit: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub position: [f64; 3],
    pub yaw: f64,
}

#[derive(Debug, Clone)]
pub struct CascadeController {
    gains: ControllerGains,
    nominal: QuadParams,
    alt_integral: f64,
    att_integral: [f64; 3],
}

impl CascadeController {
    pub fn new(nominal: QuadParams, gains: ControllerGains) -> Self {
        Self {
            gains,
            nominal,
            alt_integral: 0.0,
            att_integral: [0.0; 3],
        }
    }

    pub fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    /// One control update; `dt` is the time since the previous update and
    /// only feeds the integrators. Commands are clamped to
    /// `[0, max_rotor_speed]`.
    pub fn update(&mut self, state: &QuadState, target: &Setpoint, dt: f64) -> [f64; NUM_ROTORS] {
        let g = &self.gains;
        let p = &self.nominal;
        let limit = g.integral_limit;

        let mut acc = [0.0; 3];
        for k in 0..3 {
            acc[k] = g.pos_kp[k] * (target.position[k] - state.position[k])
                - g.pos_kd[k] * state.velocity[k];
        }
        let ez = target.position[2] - state.position[2];
        self.alt_integral = (self.alt_integral + ez * dt).clamp(-limit, limit);
        acc[2] += g.alt_ki * self.alt_integral;
        let horiz = (acc[0] * acc[0] + acc[1] * acc[1]).sqrt();
        if horiz > g.max_accel {
            acc[0] *= g.max_accel / horiz;
            acc[1] *= g.max_accel / horiz;
        }
        acc[2] = acc[2].clamp(-0.5 * p.gravity, g.max_accel);

        // tilt demands expressed in the yaw-aligned frame
        let (sy, cy) = state.attitude[2].sin_cos();
        let ax = cy * acc[0] + sy * acc[1];
        let ay = -sy * acc[0] + cy * acc[1];
        let lift = p.gravity + acc[2];
        let pitch_des = (ax / lift).atan().clamp(-g.max_tilt, g.max_tilt);
        let roll_des = (-ay / lift).atan().clamp(-g.max_tilt, g.max_tilt);
        let tilt = (state.attitude[0].cos() * state.attitude[1].cos()).max(0.5);
        let thrust = p.mass * lift / tilt;

        let desired = [roll_des, pitch_des, target.yaw];
        let mut torque = [0.0; 3];
        for k in 0..3 {
            let err = wrap_angle(desired[k] - state.attitude[k]);
            self.att_integral[k] = (self.att_integral[k] + err * dt).clamp(-limit, limit);
            let alpha = g.att_kp[k] * err + g.att_ki[k] * self.att_integral[k]
                - g.att_kd[k] * state.rates[k];
            torque[k] = p.inertia[k] * alpha;
        }
        mix(p, thrust, torque)
    }
}

/// Inverts the X-frame wrench map for the nominal airframe and returns rotor
/// speed commands. Rotor order and signs follow [`QuadParams::rotor_positions`].
pub fn mix(p: &QuadParams, thrust: f64, torque: [f64; 3]) -> [f64; NUM_ROTORS] {
    let d = p.arm_length / std::f64::consts::SQRT_2;
    let kt = p.thrust_coeff.iter().sum::<f64>() / NUM_ROTORS as f64;
    let kq = p.drag_coeff.iter().sum::<f64>() / NUM_ROTORS as f64;
    let kappa = kq / kt;
    let a = thrust;
    let b = torque[0] / d;
    let c = torque[1] / d;
    // yaw torque is -kappa·Σ spin_i T_i
    let yaw = -torque[2] / kappa;
    let s = p.spin.map(|v| v as f64);
    let pos = p.rotor_positions();
    let mut out = [0.0; NUM_ROTORS];
    for i in 0..NUM_ROTORS {
        let sy = pos[i][1].signum();
        let sx = -pos[i][0].signum();
        let t = (a + sy * b + sx * c + s[i] * yaw) / NUM_ROTORS as f64;
        out[i] = (t.max(0.0) / kt).sqrt().min(p.max_rotor_speed);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadsim::dynamics::rotor_wrench;
    use crate::quadsim::params::DomainShiftProfile;

    #[test]
    fn mixer_inverts_wrench() {
        let p = QuadParams::default();
        let cmd = mix(&p, 10.5, [0.05, -0.03, 0.01]);
        let w = rotor_wrench(&p, &DomainShiftProfile::identity(), &cmd);
        assert!((w.thrust - 10.5).abs() < 1e-9);
        assert!((w.torque[0] - 0.05).abs() < 1e-9);
        assert!((w.torque[1] + 0.03).abs() < 1e-9);
        assert!((w.torque[2] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn hover_setpoint_commands_hover_speed() {
        let p = QuadParams::default();
        let mut c = CascadeController::new(p.clone(), ControllerGains::default());
        let s = QuadState::hovering_at([1.0, 2.0, 1.5], 0.3, p.hover_speed());
        let cmd = c.update(
            &s,
            &Setpoint {
                position: [1.0, 2.0, 1.5],
                yaw: 0.3,
            },
            0.002,
        );
        for w in cmd {
            assert!((w - p.hover_speed()).abs() < 1e-6, "{cmd:?}");
        }
    }

    #[test]
    fn positive_roll_error_speeds_up_left_side() {
        // Vehicle rolled left-side-down (negative roll) and target level:
        // the controller must push roll positive, i.e. more thrust on the
        // left (rotors 2 and 3, +y) than on the right (1 and 4).
        let p = QuadParams::default();
        let mut c = CascadeController::new(p.clone(), ControllerGains::default());
        let mut s = QuadState::hovering_at([0.0, 0.0, 1.0], 0.0, p.hover_speed());
        s.attitude[0] = -0.1;
        let cmd = c.update(
            &s,
            &Setpoint {
                position: [0.0, 0.0, 1.0],
                yaw: 0.0,
            },
            0.002,
        );
        assert!(cmd[1] > cmd[0] && cmd[2] > cmd[3], "{cmd:?}");
        let torque_sign = rotor_wrench(&p, &DomainShiftProfile::identity(), &cmd).torque[0];
        assert!(torque_sign > 0.0);
    }

    #[test]
    fn commands_are_clamped() {
        let p = QuadParams::default();
        let cmd = mix(&p, 1e6, [0.0; 3]);
        assert!(cmd.iter().all(|&w| w == p.max_rotor_speed));
        let cmd = mix(&p, -5.0, [0.0; 3]);
        assert!(cmd.iter().all(|&w| w == 0.0));
    }
}
