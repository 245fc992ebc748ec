//! Kinematic model of the general 2-trailer: a truck towing a dolly
//! through an off-axle hitch, with a trailer on the dolly axle.
//!
//! The configuration is `p = [x3, y3, theta3, beta3, beta2]` where
//! `(x3, y3)` is the trailer axle midpoint, `theta3` the trailer heading,
//! `beta3` the trailer-dolly joint angle and `beta2` the dolly-truck
//! joint angle. The steering angle enters only through `tan(alpha)`, so
//! the substituted input `u = tan(alpha)` is used throughout.

use crate::error::{Error, Result};
use nalgebra::Vector5;

/// Joint angles must stay this far (rad) below pi/2.
pub const JOINT_TOL: f64 = 1e-3;
/// The coupling factor must stay this far from zero.
pub const COUPLING_TOL: f64 = 1e-6;

/// The four lengths of the truck-dolly-trailer train, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleGeometry {
    /// Truck wheelbase.
    pub l1: f64,
    /// Dolly axle to the hitch point at the truck.
    pub l2: f64,
    /// Trailer axle to dolly axle.
    pub l3: f64,
    /// Off-axle hitch offset behind the truck rear axle.
    pub m1: f64,
}

impl VehicleGeometry {
    pub fn new(l1: f64, l2: f64, l3: f64, m1: f64) -> Result<Self> {
        if !(l1 > 0.0 && l2 > 0.0 && l3 > 0.0) {
            return Err(Error::OutOfRange(format!(
                "wheelbase lengths must be positive (L1={l1}, L2={l2}, L3={l3})"
            )));
        }
        if !(m1 >= 0.0) {
            return Err(Error::OutOfRange(format!(
                "hitch offset must be non-negative (M1={m1})"
            )));
        }
        Ok(Self { l1, l2, l3, m1 })
    }
}

impl Default for VehicleGeometry {
    /// Dimensions of the full-scale reference vehicle used by the stock
    /// configuration: L1 = 3.8 m, L2 = 2.8 m, L3 = 6.6 m, M1 = 0.72 m.
    fn default() -> Self {
        Self {
            l1: 3.8,
            l2: 2.8,
            l3: 6.6,
            m1: 0.72,
        }
    }
}

/// Global configuration of the train.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub x3: f64,
    pub y3: f64,
    pub theta3: f64,
    pub beta3: f64,
    pub beta2: f64,
}

impl VehicleState {
    pub fn new(x3: f64, y3: f64, theta3: f64, beta3: f64, beta2: f64) -> Self {
        Self {
            x3,
            y3,
            theta3,
            beta3,
            beta2,
        }
    }

    pub fn to_vector(self) -> Vector5<f64> {
        Vector5::new(self.x3, self.y3, self.theta3, self.beta3, self.beta2)
    }

    pub fn from_vector(v: &Vector5<f64>) -> Self {
        Self {
            x3: v[0],
            y3: v[1],
            theta3: v[2],
            beta3: v[3],
            beta2: v[4],
        }
    }
}

/// Substituted steering input `u = tan(alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub u: f64,
}

impl ControlInput {
    pub fn new(u: f64) -> Self {
        Self { u }
    }

    /// Build the input from a physical steering angle, `|alpha| < pi/2`.
    pub fn from_steering_angle(alpha: f64) -> Result<Self> {
        if !(alpha.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::OutOfRange(format!(
                "steering angle {alpha} outside (-pi/2, pi/2)"
            )));
        }
        Ok(Self { u: alpha.tan() })
    }

    /// Recover the steering angle, always inside (-pi/2, pi/2).
    pub fn steering_angle(self) -> f64 {
        self.u.atan()
    }
}

/// Constant trailer longitudinal velocity; the sign picks the direction
/// of motion (negative = reversing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Speed(f64);

impl Speed {
    pub fn new(v3: f64) -> Result<Self> {
        if v3 == 0.0 || !v3.is_finite() {
            return Err(Error::OutOfRange(format!(
                "trailer velocity must be finite and non-zero, got {v3}"
            )));
        }
        Ok(Self(v3))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn signum(self) -> f64 {
        self.0.signum()
    }

    pub fn is_reversing(self) -> bool {
        self.0 < 0.0
    }

    /// Unit-magnitude speed of the same sign.
    pub fn normalized(self) -> Speed {
        Speed(self.0.signum())
    }
}

/// Coupling between steering and the dolly joint introduced by the
/// off-axle hitch: `1 + (M1/L1) tan(beta2) u`. The model denominators
/// vanish with it.
pub fn coupling_factor_c1(beta2: f64, u: f64, geometry: &VehicleGeometry) -> f64 {
    1.0 + geometry.m1 / geometry.l1 * beta2.tan() * u
}

/// One violated validity condition.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Beta3NearLimit { beta3: f64 },
    Beta2NearLimit { beta2: f64 },
    CouplingNearZero { c1: f64 },
}

/// Report of all violated configuration-validity conditions.
#[derive(Debug, Clone, Default)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
    pub c1: f64,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the joint-angle bounds and the coupling factor for a
/// state/input pair without failing.
pub fn feasibility_guard(
    state: &VehicleState,
    input: ControlInput,
    geometry: &VehicleGeometry,
) -> ValidityReport {
    let limit = std::f64::consts::FRAC_PI_2 - JOINT_TOL;
    let mut report = ValidityReport {
        violations: Vec::new(),
        c1: coupling_factor_c1(state.beta2, input.u, geometry),
    };
    if state.beta3.abs() >= limit {
        report.violations.push(Violation::Beta3NearLimit {
            beta3: state.beta3,
        });
    }
    if state.beta2.abs() >= limit {
        report.violations.push(Violation::Beta2NearLimit {
            beta2: state.beta2,
        });
    }
    if report.c1.abs() < COUPLING_TOL {
        report
            .violations
            .push(Violation::CouplingNearZero { c1: report.c1 });
    }
    report
}

/// Velocity-normalized right-hand side `f(p, u)` of the kinematics, so
/// that `dp/dt = v3 * f(p, u)`.
///
/// Unchecked: the caller is responsible for the singularity guards.
pub fn normalized_derivative(
    state: &VehicleState,
    u: f64,
    geometry: &VehicleGeometry,
) -> Vector5<f64> {
    let (l1, l2, l3, m1) = (geometry.l1, geometry.l2, geometry.l3, geometry.m1);
    let c1 = coupling_factor_c1(state.beta2, u, geometry);
    let tan_b3 = state.beta3.tan();
    let tan_b2 = state.beta2.tan();
    let cos_b3 = state.beta3.cos();
    let cos_b2 = state.beta2.cos();
    Vector5::new(
        state.theta3.cos(),
        state.theta3.sin(),
        tan_b3 / l3,
        (tan_b2 - m1 / l1 * u) / (l2 * cos_b3 * c1) - tan_b3 / l3,
        (u / (l1 * cos_b2) - tan_b2 / l2 + m1 / (l1 * l2) * u) / (cos_b3 * c1),
    )
}

/// Time derivative of the configuration, `dp/dt = v3 f(p, u)`, guarded
/// against the joint and coupling singularities.
pub fn state_derivative(
    state: &VehicleState,
    input: ControlInput,
    v3: Speed,
    geometry: &VehicleGeometry,
) -> Result<Vector5<f64>> {
    let report = feasibility_guard(state, input, geometry);
    if !report.is_valid() {
        return Err(Error::SingularConfiguration(format!(
            "{:?}",
            report.violations
        )));
    }
    Ok(v3.value() * normalized_derivative(state, input.u, geometry))
}

/// One timestamped sample of an integrated trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub state: VehicleState,
}

/// Classical fixed-step 4th-order Runge-Kutta rollout of the kinematics
/// under a time-indexed steering schedule. The returned trajectory
/// includes the initial state. A singular configuration aborts with the
/// offending step index in the message.
pub fn integrate(
    state0: &VehicleState,
    control_schedule: impl Fn(f64) -> ControlInput,
    v3: Speed,
    dt: f64,
    n_steps: usize,
    geometry: &VehicleGeometry,
) -> Result<Vec<TrajectoryPoint>> {
    if !(dt > 0.0) {
        return Err(Error::OutOfRange(format!("dt must be positive, got {dt}")));
    }
    let mut trajectory = Vec::with_capacity(n_steps + 1);
    trajectory.push(TrajectoryPoint {
        t: 0.0,
        state: *state0,
    });
    let mut p = state0.to_vector();
    for step in 0..n_steps {
        let t = step as f64 * dt;
        let stage = |tau: f64, y: &Vector5<f64>| -> Result<Vector5<f64>> {
            state_derivative(
                &VehicleState::from_vector(y),
                control_schedule(tau),
                v3,
                geometry,
            )
        };
        let err_at_step = |e: Error| match e {
            Error::SingularConfiguration(msg) => {
                Error::SingularConfiguration(format!("{msg} at step {step}"))
            }
            other => other,
        };
        let k1 = stage(t, &p).map_err(err_at_step)?;
        let k2 = stage(t + 0.5 * dt, &(p + 0.5 * dt * k1)).map_err(err_at_step)?;
        let k3 = stage(t + 0.5 * dt, &(p + 0.5 * dt * k2)).map_err(err_at_step)?;
        let k4 = stage(t + dt, &(p + dt * k3)).map_err(err_at_step)?;
        p += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        trajectory.push(TrajectoryPoint {
            t: (step + 1) as f64 * dt,
            state: VehicleState::from_vector(&p),
        });
    }
    Ok(trajectory)
}
