use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const NUM_ROTORS: usize = 4;

/// Rigid-body and actuator parameters of an X-configuration quadrotor.
///
/// Body frame is x forward, y left, z up. Rotors are numbered 1 front-right,
/// 2 front-left, 3 rear-left, 4 rear-right; each sits at distance
/// `arm_length` from the centre on a 45° diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadParams {
    /// kg
    pub mass: f64,
    /// Principal moments of inertia, kg·m².
    pub inertia: [f64; 3],
    /// m
    pub arm_length: f64,
    /// Thrust per squared rotor speed, N·s².
    pub thrust_coeff: [f64; NUM_ROTORS],
    /// Reaction torque per squared rotor speed, N·m·s².
    pub drag_coeff: [f64; NUM_ROTORS],
    /// First-order motor lag, s.
    pub motor_time_constant: f64,
    /// m/s²
    pub gravity: f64,
    /// +1 counter-clockwise seen from above, -1 clockwise.
    pub spin: [i8; NUM_ROTORS],
    /// rad/s
    pub max_rotor_speed: f64,
    /// Standard deviation of a white body-torque disturbance, N·m.
    pub disturbance_torque_std: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            inertia: [8.2e-3, 8.2e-3, 1.49e-2],
            arm_length: 0.17,
            thrust_coeff: [1.0e-5; NUM_ROTORS],
            drag_coeff: [1.6e-7; NUM_ROTORS],
            motor_time_constant: 0.03,
            gravity: 9.81,
            spin: [1, -1, 1, -1],
            max_rotor_speed: 1000.0,
            disturbance_torque_std: 4e-3,
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("arm_length", self.arm_length),
            ("motor_time_constant", self.motor_time_constant),
            ("gravity", self.gravity),
            ("max_rotor_speed", self.max_rotor_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        if self.inertia.iter().any(|&v| !(v > 0.0)) {
            return invalid("inertia entries must be positive");
        }
        // A fully damaged rotor legitimately has zero coefficients, so only
        // negativity is rejected here; nominal params are checked by
        // `validate_nominal`.
        if self
            .thrust_coeff
            .iter()
            .chain(&self.drag_coeff)
            .any(|&v| !(v >= 0.0))
        {
            return invalid("rotor coefficients must be non-negative");
        }
        if !(self.disturbance_torque_std >= 0.0) {
            return invalid("disturbance_torque_std must be non-negative");
        }
        let ccw = self.spin.iter().filter(|&&s| s == 1).count();
        let cw = self.spin.iter().filter(|&&s| s == -1).count();
        if ccw != 2
            || cw != 2
            || (0..NUM_ROTORS).any(|i| self.spin[i] == self.spin[(i + 1) % NUM_ROTORS])
        {
            return invalid(
                "rotor spin directions must alternate around the frame (two CW, two CCW)",
            );
        }
        Ok(())
    }

    /// Nominal vehicle: every coefficient strictly positive.
    pub fn validate_nominal(&self) -> Result<()> {
        self.validate()?;
        if self
            .thrust_coeff
            .iter()
            .chain(&self.drag_coeff)
            .any(|&v| v <= 0.0)
        {
            return invalid("rotor coefficients must be positive");
        }
        Ok(())
    }

    /// Rotor positions (x, y) in the body frame.
    pub fn rotor_positions(&self) -> [[f64; 2]; NUM_ROTORS] {
        let d = self.arm_length / std::f64::consts::SQRT_2;
        [[d, -d], [d, d], [-d, d], [-d, -d]]
    }

    /// Rotor speed at which four equal rotors carry the weight.
    pub fn hover_speed(&self) -> f64 {
        let kt = self.thrust_coeff.iter().sum::<f64>() / NUM_ROTORS as f64;
        (self.mass * self.gravity / (NUM_ROTORS as f64 * kt)).sqrt()
    }
}

/// Propeller damage on at most one rotor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    /// 1-based rotor index, `None` for a healthy vehicle.
    pub rotor: Option<usize>,
    /// Fraction of thrust effectiveness lost, in [0, 1].
    pub damage_level: f64,
}

impl FaultSpec {
    pub fn healthy() -> Self {
        Self {
            rotor: None,
            damage_level: 0.0,
        }
    }

    pub fn on_rotor(rotor: usize, damage_level: f64) -> Self {
        Self {
            rotor: Some(rotor),
            damage_level,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.damage_level) {
            return invalid(format!("damage level {} outside [0,1]", self.damage_level));
        }
        if let Some(r) = self.rotor {
            if !(1..=NUM_ROTORS).contains(&r) {
                return invalid(format!("rotor index {r} outside 1..={NUM_ROTORS}"));
            }
        }
        Ok(())
    }

    /// Class label: 1 for healthy, `i + 1` for damage on rotor `i`.
    pub fn label(&self) -> u8 {
        match self.rotor {
            None => 1,
            Some(r) => r as u8 + 1,
        }
    }

    /// The fault category for a class label, at the given damage level.
    pub fn for_label(label: u8, damage_level: f64) -> Result<Self> {
        match label {
            1 => Ok(Self::healthy()),
            2..=5 => Ok(Self::on_rotor(label as usize - 1, damage_level)),
            _ => invalid(format!("label {label} outside 1..=5")),
        }
    }
}

/// Scales the thrust and drag-torque coefficients of the damaged rotor by
/// `1 - damage_level`.
pub fn inject_fault(params: &QuadParams, fault: &FaultSpec) -> Result<QuadParams> {
    fault.validate()?;
    let mut out = params.clone();
    if let Some(r) = fault.rotor {
        let keep = 1.0 - fault.damage_level;
        out.thrust_coeff[r - 1] *= keep;
        out.drag_coeff[r - 1] *= keep;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// How the "real" vehicle differs from the simulated one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainShiftProfile {
    /// Multiplies each rotor's thrust and drag (mounting/propeller mismatch).
    pub thrust_gain: [f64; NUM_ROTORS],
    /// Constant offset on reported rotor speeds, rad/s.
    pub speed_bias: [f64; NUM_ROTORS],
    /// White noise on reported rotor speeds, rad/s.
    pub speed_noise_std: f64,
    /// White noise on reported angular accelerations, rad/s².
    pub angular_accel_noise_std: [f64; 3],
    pub mass_multiplier: f64,
    pub inertia_multiplier: f64,
    /// Probability that a controller update is missed and the previous
    /// command held.
    pub control_jitter: f64,
}

impl DomainShiftProfile {
    pub fn identity() -> Self {
        Self {
            thrust_gain: [1.0; NUM_ROTORS],
            speed_bias: [0.0; NUM_ROTORS],
            speed_noise_std: 0.0,
            angular_accel_noise_std: [0.0; 3],
            mass_multiplier: 1.0,
            inertia_multiplier: 1.0,
            control_jitter: 0.0,
        }
    }

    /// Default "reality" perturbation: rotor gains in 0.92–1.08, speed bias
    /// up to 2 % of hover speed, derivative noise, and a heavier airframe.
    pub fn default_target() -> Self {
        Self {
            thrust_gain: [0.92, 1.04, 0.97, 1.07],
            speed_bias: [9.0, -4.0, 6.0, -8.0],
            speed_noise_std: 3.0,
            angular_accel_noise_std: [2.5, 2.5, 1.25],
            mass_multiplier: 1.05,
            inertia_multiplier: 1.05,
            control_jitter: 0.1,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn validate(&self) -> Result<()> {
        if self.thrust_gain.iter().any(|&g| !(g > 0.0)) {
            return invalid("thrust gains must be positive");
        }
        if !(self.mass_multiplier > 0.0 && self.inertia_multiplier > 0.0) {
            return invalid("mass and inertia multipliers must be positive");
        }
        if self.speed_noise_std < 0.0 || self.angular_accel_noise_std.iter().any(|&s| s < 0.0) {
            return invalid("noise standard deviations must be non-negative");
        }
        if !(0.0..1.0).contains(&self.control_jitter) {
            return invalid("control_jitter must be in [0,1)");
        }
        if self.speed_bias.iter().any(|b| !b.is_finite()) {
            return invalid("speed bias must be finite");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_valid() {
        QuadParams::default().validate_nominal().unwrap();
        DomainShiftProfile::default_target().validate().unwrap();
        assert!(DomainShiftProfile::identity().is_identity());
    }

    #[test]
    fn spin_must_alternate() {
        for spin in [[1, 1, -1, -1], [1, -1, 1, 1]] {
            let p = QuadParams {
                spin,
                ..QuadParams::default()
            };
            assert!(p.validate().is_err());
        }
    }

    #[test]
    fn labels_follow_rotor_index() {
        assert_eq!(FaultSpec::healthy().label(), 1);
        for r in 1..=4 {
            assert_eq!(FaultSpec::on_rotor(r, 0.3).label(), r as u8 + 1);
            assert_eq!(
                FaultSpec::for_label(r as u8 + 1, 0.3).unwrap().rotor,
                Some(r)
            );
        }
        assert!(FaultSpec::for_label(6, 0.1).is_err());
    }

    #[test]
    fn inject_fault_examples() {
        let p = QuadParams::default();
        assert_eq!(inject_fault(&p, &FaultSpec::on_rotor(2, 0.0)).unwrap(), p);
        let f = inject_fault(&p, &FaultSpec::on_rotor(3, 1.0)).unwrap();
        assert_eq!(f.thrust_coeff[2], 0.0);
        assert_eq!(f.drag_coeff[2], 0.0);
        let f = inject_fault(&p, &FaultSpec::on_rotor(1, 0.25)).unwrap();
        assert_eq!(f.thrust_coeff[0], 0.75 * p.thrust_coeff[0]);
        assert_eq!(f.drag_coeff[0], 0.75 * p.drag_coeff[0]);
        assert_eq!(&f.thrust_coeff[1..], &p.thrust_coeff[1..]);
        assert_eq!(f.mass, p.mass);
        assert!(inject_fault(&p, &FaultSpec::on_rotor(5, 0.1)).is_err());
        assert!(inject_fault(&p, &FaultSpec::on_rotor(0, 0.1)).is_err());
        assert!(inject_fault(&p, &FaultSpec::on_rotor(1, 1.5)).is_err());
    }
}
