//! Reference paths and the path-tracking error dynamics in a Frenet
//! frame anchored at the projection of the trailer axle onto the path.
//!
//! A nominal path is produced by forward integration of the kinematics
//! in its arc parameter, so it is feasible by construction. The stored
//! parameter `s` always increases along the direction of travel: for a
//! reversing run the samples of the stable forward generation are
//! relabeled in reverse order, which makes the stored curve satisfy
//! `dp0/ds = sign(v3) f(p0, u0)`. All tracking-error equations below
//! are written against the trailer heading, so they are identical for
//! both directions of motion.

use crate::error::{Error, Result};
use crate::kinematics::{
    coupling_factor_c1, feasibility_guard, normalized_derivative, ControlInput, Speed,
    VehicleGeometry, VehicleState, COUPLING_TOL, JOINT_TOL,
};
use nalgebra::{Vector2, Vector4};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

/// The Frenet denominator `1 - kappa*z3` must exceed this.
pub const TUBE_TOL: f64 = 1e-3;

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Curvature of the path traced by the trailer axle when the joint
/// angle is held at `beta3`: `tan(beta3) / L3`.
pub fn path_curvature(beta3: f64, geometry: &VehicleGeometry) -> Result<f64> {
    if beta3.abs() >= FRAC_PI_2 - JOINT_TOL {
        return Err(Error::OutOfRange(format!(
            "beta3 = {beta3} at the joint bound"
        )));
    }
    Ok(beta3.tan() / geometry.l3)
}

/// One arc-length sample of a nominal path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    /// Stored arc parameter (m), increasing along the direction of travel.
    pub s: f64,
    /// Trailer axle position (m).
    pub x: f64,
    pub y: f64,
    /// Trailer heading (rad), continuous (not wrapped).
    pub theta: f64,
    /// Reference joint angles (rad).
    pub beta3: f64,
    pub beta2: f64,
    /// Reference steering input (tan of the steering angle).
    pub u0: f64,
    /// Reference curvature `tan(beta3)/L3` (1/m).
    pub kappa: f64,
}

impl PathSample {
    /// A sample with the given reference parameters and a zero pose,
    /// with the curvature filled in consistently. Useful when only the
    /// parameters (not the geometry of the path) matter.
    pub fn from_parameters(
        beta3: f64,
        beta2: f64,
        u0: f64,
        geometry: &VehicleGeometry,
    ) -> Result<Self> {
        Ok(Self {
            s: 0.0,
            x: 0.0,
            y: 0.0,
            theta: 0.0,
            beta3,
            beta2,
            u0,
            kappa: path_curvature(beta3, geometry)?,
        })
    }
}

/// Tracking error `[z3, theta3~, beta3~, beta2~]`: lateral offset of
/// the trailer axle (positive to the left of the reference heading) and
/// the heading/joint deviations from the reference.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorState {
    pub z3: f64,
    pub theta3: f64,
    pub beta3: f64,
    pub beta2: f64,
}

impl ErrorState {
    pub fn new(z3: f64, theta3: f64, beta3: f64, beta2: f64) -> Self {
        Self {
            z3,
            theta3,
            beta3,
            beta2,
        }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.z3, self.theta3, self.beta3, self.beta2)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self {
            z3: v[0],
            theta3: v[1],
            beta3: v[2],
            beta2: v[3],
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }
}

/// Validity of the Frenet transform at one (error, reference) pair.
#[derive(Debug, Clone, Copy)]
pub struct TubeValidity {
    pub valid: bool,
    /// The transform denominator `1 - kappa*z3`.
    pub denominator: f64,
    /// `denominator - TUBE_TOL`.
    pub margin: f64,
}

/// Check that the Frenet transform is well defined: the denominator
/// stays positive and the heading error keeps the path parameter
/// monotone in time.
pub fn tube_validity(err: &ErrorState, reference: &PathSample) -> TubeValidity {
    let denominator = 1.0 - reference.kappa * err.z3;
    TubeValidity {
        valid: denominator > TUBE_TOL && err.theta3.abs() < FRAC_PI_2 - JOINT_TOL,
        denominator,
        margin: denominator - TUBE_TOL,
    }
}

/// Nonlinear tracking-error dynamics in the Frenet frame.
///
/// Returns the path-parameter rate (in the travel-direction convention
/// of the underlying equations, i.e. `v3` at zero error) and the time
/// derivatives of the four error states. With zero error and zero
/// feedback the error derivatives vanish identically.
pub fn error_dynamics(
    err: &ErrorState,
    u_err: f64,
    reference: &PathSample,
    geometry: &VehicleGeometry,
    v3: Speed,
) -> Result<(f64, Vector4<f64>)> {
    let tube = tube_validity(err, reference);
    if !tube.valid {
        if tube.denominator <= TUBE_TOL {
            return Err(Error::TubeViolation {
                denominator: tube.denominator,
            });
        }
        return Err(Error::SingularConfiguration(format!(
            "heading error {} at the monotonicity bound",
            err.theta3
        )));
    }
    let (l1, l2, l3, m1) = (geometry.l1, geometry.l2, geometry.l3, geometry.m1);
    let beta3 = err.beta3 + reference.beta3;
    let beta2 = err.beta2 + reference.beta2;
    let u = u_err + reference.u0;
    let limit = FRAC_PI_2 - JOINT_TOL;
    if beta3.abs() >= limit || beta2.abs() >= limit {
        return Err(Error::SingularConfiguration(format!(
            "joint angles ({beta3}, {beta2}) out of bounds"
        )));
    }
    let c2 = coupling_factor_c1(beta2, u, geometry);
    let c2_ref = coupling_factor_c1(reference.beta2, reference.u0, geometry);
    if c2.abs() < COUPLING_TOL || c2_ref.abs() < COUPLING_TOL {
        return Err(Error::SingularConfiguration(format!(
            "coupling factor vanished (current {c2}, reference {c2_ref})"
        )));
    }

    let v = v3.value();
    let kappa = reference.kappa;
    let cos_t = err.theta3.cos();
    let transport = cos_t / tube.denominator;

    // Reference rates d(beta)/ds along the path.
    let rate3_ref = (reference.beta2.tan() - m1 / l1 * reference.u0)
        / (l2 * reference.beta3.cos() * c2_ref)
        - reference.beta3.tan() / l3;
    let rate2_ref = (reference.u0 / (l1 * reference.beta2.cos()) - reference.beta2.tan() / l2
        + m1 / (l1 * l2) * reference.u0)
        / (reference.beta3.cos() * c2_ref);

    let dz3 = v * err.theta3.sin();
    let dtheta3 = v * (beta3.tan() / l3 - kappa * transport);
    let dbeta3 = v
        * ((beta2.tan() - m1 / l1 * u) / (l2 * beta3.cos() * c2) - beta3.tan() / l3
            - transport * rate3_ref);
    let dbeta2 = v
        * ((u / (l1 * beta2.cos()) - beta2.tan() / l2 + m1 / (l1 * l2) * u) / (beta3.cos() * c2)
            - transport * rate2_ref);

    Ok((v * transport, Vector4::new(dz3, dtheta3, dbeta3, dbeta2)))
}

/// Result of projecting a position onto a path.
#[derive(Debug, Clone, Copy)]
pub struct Projection {
    /// Arc parameter of the closest point.
    pub s: f64,
    /// Signed lateral offset, positive to the left of the reference heading.
    pub z3: f64,
    /// Euclidean distance to the closest point.
    pub distance: f64,
}

/// An arc-length sampled feasible reference path.
#[derive(Debug, Clone)]
pub struct NominalPath {
    samples: Vec<PathSample>,
    geometry: VehicleGeometry,
    v3: Speed,
}

/// Columns of the path CSV interface.
pub const PATH_CSV_HEADER: &str = "s,x,y,theta,beta3,beta2,u0,kappa";

impl NominalPath {
    /// Generate a feasible path by integrating the kinematics along its
    /// arc parameter under the steering schedule `profile` (a function
    /// of the generation arc coordinate). Generation always runs in the
    /// forward-stable direction; for a reversing `v3` the samples are
    /// relabeled so the stored `s` increases along the actual motion.
    pub fn generate(
        profile: impl Fn(f64) -> f64,
        s_end: f64,
        ds: f64,
        geometry: &VehicleGeometry,
        v3: Speed,
    ) -> Result<Self> {
        if !(ds > 0.0) || !(s_end > ds) {
            return Err(Error::OutOfRange(format!(
                "need 0 < ds < s_end, got ds={ds}, s_end={s_end}"
            )));
        }
        let n = (s_end / ds).round() as usize;
        let mut states = Vec::with_capacity(n + 1);
        let mut q = VehicleState::default();
        states.push((q, profile(0.0)));
        for i in 0..n {
            let r = i as f64 * ds;
            let stage = |rr: f64, y: &VehicleState| -> Result<nalgebra::Vector5<f64>> {
                let u = profile(rr);
                let report = feasibility_guard(y, ControlInput::new(u), geometry);
                if !report.is_valid() {
                    return Err(Error::SingularConfiguration(format!(
                        "path generation left the valid set near s = {rr}: {:?}",
                        report.violations
                    )));
                }
                Ok(normalized_derivative(y, u, geometry))
            };
            let y0 = q.to_vector();
            let k1 = stage(r, &q)?;
            let k2 = stage(r + 0.5 * ds, &VehicleState::from_vector(&(y0 + 0.5 * ds * k1)))?;
            let k3 = stage(r + 0.5 * ds, &VehicleState::from_vector(&(y0 + 0.5 * ds * k2)))?;
            let k4 = stage(r + ds, &VehicleState::from_vector(&(y0 + ds * k3)))?;
            q = VehicleState::from_vector(&(y0 + ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)));
            states.push((q, profile((i + 1) as f64 * ds)));
        }
        if v3.is_reversing() {
            states.reverse();
        }
        let mut samples = Vec::with_capacity(states.len());
        for (i, (state, u0)) in states.iter().enumerate() {
            samples.push(PathSample {
                s: i as f64 * ds,
                x: state.x3,
                y: state.y3,
                theta: state.theta3,
                beta3: state.beta3,
                beta2: state.beta2,
                u0: *u0,
                kappa: path_curvature(state.beta3, geometry)?,
            });
        }
        Ok(Self {
            samples,
            geometry: *geometry,
            v3,
        })
    }

    pub fn from_samples(
        samples: Vec<PathSample>,
        geometry: VehicleGeometry,
        v3: Speed,
    ) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::OutOfRange(
                "a path needs at least two samples".into(),
            ));
        }
        if !samples.windows(2).all(|w| w[1].s > w[0].s) {
            return Err(Error::OutOfRange(
                "path arc parameter must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            samples,
            geometry,
            v3,
        })
    }

    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    pub fn geometry(&self) -> &VehicleGeometry {
        &self.geometry
    }

    pub fn speed(&self) -> Speed {
        self.v3
    }

    /// Sign relating the stored parameter to the travel equations:
    /// the stored `s` advances at `progress_sign()` times the rate
    /// returned by [`error_dynamics`].
    pub fn progress_sign(&self) -> f64 {
        self.v3.signum()
    }

    pub fn length(&self) -> f64 {
        self.samples.last().unwrap().s
    }

    /// Linear interpolation of all reference quantities at `s`
    /// (clamped to the path range).
    pub fn sample_at(&self, s: f64) -> PathSample {
        let n = self.samples.len();
        if s <= self.samples[0].s {
            return self.samples[0];
        }
        if s >= self.samples[n - 1].s {
            return self.samples[n - 1];
        }
        let idx = self.samples.partition_point(|p| p.s <= s) - 1;
        let (a, b) = (&self.samples[idx], &self.samples[idx + 1]);
        let t = (s - a.s) / (b.s - a.s);
        let lerp = |x: f64, y: f64| x + t * (y - x);
        PathSample {
            s,
            x: lerp(a.x, b.x),
            y: lerp(a.y, b.y),
            theta: lerp(a.theta, b.theta),
            beta3: lerp(a.beta3, b.beta3),
            beta2: lerp(a.beta2, b.beta2),
            u0: lerp(a.u0, b.u0),
            kappa: lerp(a.kappa, b.kappa),
        }
    }

    fn project_segment_range(&self, x: f64, y: f64, lo: usize, hi: usize) -> Projection {
        let p = Vector2::new(x, y);
        let mut best_d2 = f64::INFINITY;
        let mut best_s = self.samples[lo].s;
        for i in lo..hi {
            let a = Vector2::new(self.samples[i].x, self.samples[i].y);
            let b = Vector2::new(self.samples[i + 1].x, self.samples[i + 1].y);
            let d = b - a;
            let len2 = d.norm_squared();
            let t = if len2 > 0.0 {
                ((p - a).dot(&d) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = a + t * d;
            let d2 = (p - q).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best_s = self.samples[i].s + t * (self.samples[i + 1].s - self.samples[i].s);
            }
        }
        let reference = self.sample_at(best_s);
        let z3 =
            -(x - reference.x) * reference.theta.sin() + (y - reference.y) * reference.theta.cos();
        Projection {
            s: best_s,
            z3,
            distance: best_d2.sqrt(),
        }
    }

    /// Project a position onto the whole path. Fails with
    /// `AmbiguousProjection` if two separated stretches of the path tie
    /// for the minimum distance (e.g. at a self-crossing); the caller
    /// is expected to resolve the tie, conventionally toward smaller `s`.
    pub fn project(&self, x: f64, y: f64) -> Result<Projection> {
        let n = self.samples.len();
        let global = self.project_segment_range(x, y, 0, n - 1);
        // Scan for a second, non-adjacent candidate at essentially the
        // same distance.
        let tol = 1e-9 + 1e-9 * global.distance;
        let p = Vector2::new(x, y);
        let mut second: Option<f64> = None;
        let separation = 4.0 * self.mean_spacing();
        for i in 0..n - 1 {
            let a = Vector2::new(self.samples[i].x, self.samples[i].y);
            let b = Vector2::new(self.samples[i + 1].x, self.samples[i + 1].y);
            let d = b - a;
            let len2 = d.norm_squared();
            let t = if len2 > 0.0 {
                ((p - a).dot(&d) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = a + t * d;
            let dist = (p - q).norm();
            let s_here = self.samples[i].s + t * (self.samples[i + 1].s - self.samples[i].s);
            if (dist - global.distance).abs() <= tol && (s_here - global.s).abs() > separation {
                second = Some(s_here);
                break;
            }
        }
        if let Some(s2) = second {
            return Err(Error::AmbiguousProjection {
                s_first: global.s.min(s2),
                s_second: global.s.max(s2),
            });
        }
        Ok(global)
    }

    /// Project within a window of the path around `s_center`, for
    /// continuity-based tracking across self-crossings.
    pub fn project_windowed(&self, x: f64, y: f64, s_center: f64, half_width: f64) -> Projection {
        let n = self.samples.len();
        let lo_s = s_center - half_width;
        let hi_s = s_center + half_width;
        let lo = self.samples.partition_point(|p| p.s < lo_s).min(n - 2);
        let hi = self
            .samples
            .partition_point(|p| p.s <= hi_s)
            .min(n - 1)
            .max(lo + 1);
        self.project_segment_range(x, y, lo, hi)
    }

    fn mean_spacing(&self) -> f64 {
        self.length() / (self.samples.len() - 1) as f64
    }

    /// Tracking error of a global configuration against the reference
    /// interpolated at `s`.
    pub fn global_to_error(&self, state: &VehicleState, s: f64) -> Result<ErrorState> {
        if s < self.samples[0].s || s > self.length() {
            return Err(Error::OutOfRange(format!(
                "s = {s} outside the path range [0, {}]",
                self.length()
            )));
        }
        let reference = self.sample_at(s);
        let z3 = -(state.x3 - reference.x) * reference.theta.sin()
            + (state.y3 - reference.y) * reference.theta.cos();
        Ok(ErrorState {
            z3,
            theta3: wrap_angle(state.theta3 - reference.theta),
            beta3: wrap_angle(state.beta3 - reference.beta3),
            beta2: wrap_angle(state.beta2 - reference.beta2),
        })
    }

    /// Global configuration realizing the error `err` against the
    /// reference at `s`.
    pub fn error_to_global(&self, err: &ErrorState, s: f64) -> VehicleState {
        let reference = self.sample_at(s);
        VehicleState {
            x3: reference.x - err.z3 * reference.theta.sin(),
            y3: reference.y + err.z3 * reference.theta.cos(),
            theta3: reference.theta + err.theta3,
            beta3: reference.beta3 + err.beta3,
            beta2: reference.beta2 + err.beta2,
        }
    }

    /// Serialize as CSV with 17 significant digits (bit-exact round trip).
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 160);
        out.push_str(PATH_CSV_HEADER);
        out.push('\n');
        for p in &self.samples {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                p.s, p.x, p.y, p.theta, p.beta3, p.beta2, p.u0, p.kappa
            );
        }
        out
    }

    pub fn from_csv(text: &str, geometry: VehicleGeometry, v3: Speed) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == PATH_CSV_HEADER => {}
            other => {
                return Err(Error::Config(format!(
                    "bad path header: expected '{PATH_CSV_HEADER}', got {other:?}"
                )))
            }
        }
        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("path line {}: {e}", lineno + 2)))
                })
                .collect::<Result<_>>()?;
            if fields.len() != 8 {
                return Err(Error::Config(format!(
                    "path line {}: expected 8 columns, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            samples.push(PathSample {
                s: fields[0],
                x: fields[1],
                y: fields[2],
                theta: fields[3],
                beta3: fields[4],
                beta2: fields[5],
                u0: fields[6],
                kappa: fields[7],
            });
        }
        Self::from_samples(samples, geometry, v3)
    }
}

/// The built-in steering schedule that traces a figure-eight: one full
/// sine period over `wavelength`, tapered in and out, padded by straight
/// lead-in and settle-out stretches so the train starts and ends with
/// relaxed joints.
#[derive(Debug, Clone, Copy)]
pub struct EightProfile {
    /// Peak of the substituted steering input.
    pub amplitude: f64,
    /// Arc length of the full sine period (both lobes).
    pub wavelength: f64,
    /// Straight stretch before the eight.
    pub lead_in: f64,
    /// Straight stretch after the eight.
    pub tail: f64,
    /// Cosine taper length at both ends of the sine.
    pub taper: f64,
}

impl Default for EightProfile {
    fn default() -> Self {
        Self {
            amplitude: 0.30,
            wavelength: 240.0,
            lead_in: 10.0,
            tail: 20.0,
            taper: 12.0,
        }
    }
}

impl EightProfile {
    pub fn total_length(&self) -> f64 {
        self.lead_in + self.wavelength + self.tail
    }

    /// Steering input at generation arc coordinate `r`.
    pub fn steering(&self, r: f64) -> f64 {
        let s = r - self.lead_in;
        if s < 0.0 || s > self.wavelength {
            return 0.0;
        }
        let mut window = 1.0;
        if s < self.taper {
            window = 0.5 * (1.0 - (PI * s / self.taper).cos());
        } else if s > self.wavelength - self.taper {
            window = 0.5 * (1.0 - (PI * (self.wavelength - s) / self.taper).cos());
        }
        window * self.amplitude * (2.0 * PI * s / self.wavelength).sin()
    }

    pub fn generate(&self, geometry: &VehicleGeometry, v3: Speed, ds: f64) -> Result<NominalPath> {
        NominalPath::generate(|r| self.steering(r), self.total_length(), ds, geometry, v3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn geom() -> VehicleGeometry {
        VehicleGeometry::default()
    }

    #[test]
    fn curvature_basics() {
        let g = geom();
        assert_eq!(path_curvature(0.0, &g).unwrap(), 0.0);
        let kappa = 0.08;
        let beta3 = (g.l3 * kappa).atan();
        assert_abs_diff_eq!(path_curvature(beta3, &g).unwrap(), kappa, epsilon = 1e-15);
        let corner = 40.0_f64.to_radians();
        assert_abs_diff_eq!(
            path_curvature(corner, &g).unwrap(),
            corner.tan() / 6.6,
            epsilon = 1e-15
        );
        assert!(path_curvature(FRAC_PI_2, &g).is_err());
    }

    #[test]
    fn straight_generation() {
        let g = geom();
        let path =
            NominalPath::generate(|_| 0.0, 10.0, 0.01, &g, Speed::new(1.0).unwrap()).unwrap();
        assert_eq!(path.samples().len(), 1001);
        for p in path.samples() {
            assert_eq!(p.kappa, 0.0);
            assert_eq!(p.beta3, 0.0);
            assert_eq!(p.beta2, 0.0);
            assert_abs_diff_eq!(p.x, p.s, epsilon = 1e-10);
            assert_eq!(p.y, 0.0);
        }
    }

    // 2-D Newton on the joint stationarity conditions for a constant
    // steering input, independent of the integrator.
    fn steady_joints(u: f64, g: &VehicleGeometry) -> (f64, f64) {
        let f = |b3: f64, b2: f64| {
            let c = 1.0 + g.m1 / g.l1 * b2.tan() * u;
            let f3 = (b2.tan() - g.m1 / g.l1 * u) / (g.l2 * b3.cos() * c) - b3.tan() / g.l3;
            let f2 =
                (u / (g.l1 * b2.cos()) - b2.tan() / g.l2 + g.m1 / (g.l1 * g.l2) * u) / (b3.cos() * c);
            (f3, f2)
        };
        let (mut b3, mut b2) = (0.0, 0.0);
        for _ in 0..60 {
            let (f3, f2) = f(b3, b2);
            let h = 1e-7;
            let (f3a, f2a) = f(b3 + h, b2);
            let (f3b, f2b) = f(b3, b2 + h);
            let (j11, j12) = ((f3a - f3) / h, (f3b - f3) / h);
            let (j21, j22) = ((f2a - f2) / h, (f2b - f2) / h);
            let det = j11 * j22 - j12 * j21;
            b3 -= (f3 * j22 - f2 * j12) / det;
            b2 -= (f2 * j11 - f3 * j21) / det;
        }
        (b3, b2)
    }

    #[test]
    fn steady_turn_converges_to_equilibrium_circle() {
        let g = geom();
        let u = 0.25;
        let path = NominalPath::generate(|_| u, 160.0, 0.01, &g, Speed::new(1.0).unwrap()).unwrap();
        let last = path.samples().last().unwrap();
        let (b3_star, b2_star) = steady_joints(u, &g);
        assert_abs_diff_eq!(last.beta3, b3_star, epsilon = 1e-7);
        assert_abs_diff_eq!(last.beta2, b2_star, epsilon = 1e-7);
        assert_abs_diff_eq!(last.kappa, b3_star.tan() / g.l3, epsilon = 1e-7);
    }

    #[test]
    fn curvature_identity_on_generated_path() {
        let g = geom();
        let path = EightProfile::default()
            .generate(&g, Speed::new(-1.0).unwrap(), 0.05)
            .unwrap();
        for p in path.samples() {
            assert_abs_diff_eq!(p.kappa * g.l3, p.beta3.tan(), epsilon = 1e-12);
        }
    }

    #[test]
    fn reversed_path_satisfies_signed_arc_equation() {
        // dp0/ds = sign(v3) f(p0, u0), checked by central differences.
        let g = geom();
        for v in [1.0, -1.0] {
            let v3 = Speed::new(v).unwrap();
            let path = EightProfile::default().generate(&g, v3, 0.01).unwrap();
            let samples = path.samples();
            for i in (1..samples.len() - 1).step_by(997) {
                let (a, b) = (&samples[i - 1], &samples[i + 1]);
                let ds = b.s - a.s;
                let state = VehicleState::new(
                    samples[i].x,
                    samples[i].y,
                    samples[i].theta,
                    samples[i].beta3,
                    samples[i].beta2,
                );
                let f = normalized_derivative(&state, samples[i].u0, &g);
                let quotient = [
                    (b.x - a.x) / ds,
                    (b.y - a.y) / ds,
                    (b.theta - a.theta) / ds,
                    (b.beta3 - a.beta3) / ds,
                    (b.beta2 - a.beta2) / ds,
                ];
                for k in 0..5 {
                    assert_abs_diff_eq!(quotient[k], v3.signum() * f[k], epsilon = 1e-5);
                }
            }
        }
    }

    #[test]
    fn error_dynamics_equilibrium_on_every_sample() {
        let g = geom();
        let v3 = Speed::new(-1.0).unwrap();
        let path = EightProfile::default().generate(&g, v3, 0.05).unwrap();
        for p in path.samples().iter().step_by(37) {
            let (s_rate, d) = error_dynamics(&ErrorState::default(), 0.0, p, &g, v3).unwrap();
            assert_abs_diff_eq!(s_rate, v3.value(), epsilon = 1e-15);
            for k in 0..4 {
                assert_abs_diff_eq!(d[k], 0.0, epsilon = 1e-14);
            }
        }
    }

    // Second, independent transcription of the error dynamics, written
    // as "current rate minus transported reference rate".
    fn oracle_error_dynamics(
        err: &ErrorState,
        u_err: f64,
        r: &PathSample,
        g: &VehicleGeometry,
        v: f64,
    ) -> [f64; 4] {
        let state = VehicleState::new(
            0.0,
            0.0,
            err.theta3,
            err.beta3 + r.beta3,
            err.beta2 + r.beta2,
        );
        let cur = normalized_derivative(&state, u_err + r.u0, g);
        let ref_state = VehicleState::new(0.0, 0.0, 0.0, r.beta3, r.beta2);
        let refd = normalized_derivative(&ref_state, r.u0, g);
        let transport = err.theta3.cos() / (1.0 - r.kappa * err.z3);
        [
            v * err.theta3.sin(),
            v * (cur[2] - transport * r.kappa),
            v * (cur[3] - transport * refd[3]),
            v * (cur[4] - transport * refd[4]),
        ]
    }

    #[test]
    fn error_dynamics_matches_independent_transcription() {
        let g = geom();
        let v3 = Speed::new(-1.0).unwrap();
        // A curved reference at the corner of the certified parameter set.
        let reference =
            PathSample::from_parameters(40.0_f64.to_radians(), 20.0_f64.to_radians(), 0.37, &g)
                .unwrap();
        let mut rng = 0x9e3779b97f4a7c15_u64;
        let mut next = || {
            rng = rng
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..50 {
            let err = ErrorState::new(0.6 * next(), 0.4 * next(), 0.2 * next(), 0.2 * next());
            let u_err = 0.2 * next();
            let (_, d) = error_dynamics(&err, u_err, &reference, &g, v3).unwrap();
            let oracle = oracle_error_dynamics(&err, u_err, &reference, &g, v3.value());
            for k in 0..4 {
                assert_abs_diff_eq!(d[k], oracle[k], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn tube_validity_cases() {
        let g = geom();
        let straight = PathSample::from_parameters(0.0, 0.0, 0.0, &g).unwrap();
        // On a straight path the lateral offset may be arbitrary.
        let far = ErrorState::new(250.0, 0.0, 0.0, 0.0);
        assert!(tube_validity(&far, &straight).valid);
        let mut curved = straight;
        curved.kappa = 0.1;
        let at_boundary = ErrorState::new(10.0, 0.0, 0.0, 0.0);
        let tv = tube_validity(&at_boundary, &curved);
        assert!(!tv.valid);
        assert_abs_diff_eq!(tv.denominator, 0.0, epsilon = 1e-15);
        let turned = ErrorState::new(0.0, FRAC_PI_2, 0.0, 0.0);
        assert!(!tube_validity(&turned, &straight).valid);
    }

    #[test]
    fn projection_on_sample_and_straight_offset() {
        let g = geom();
        let path =
            NominalPath::generate(|_| 0.0, 10.0, 0.01, &g, Speed::new(1.0).unwrap()).unwrap();
        let p = path.samples()[500];
        let proj = path.project(p.x, p.y).unwrap();
        assert_abs_diff_eq!(proj.s, p.s, epsilon = 1e-12);
        assert_abs_diff_eq!(proj.z3, 0.0, epsilon = 1e-12);
        // One meter to the left of a straight path along +x is +y.
        let proj = path.project(5.0, 1.0).unwrap();
        assert_abs_diff_eq!(proj.s, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(proj.z3, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(proj.distance, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_matches_dense_scan_oracle() {
        let g = geom();
        let v3 = Speed::new(-1.0).unwrap();
        let path = EightProfile::default().generate(&g, v3, 0.05).unwrap();
        // Dense 10x oversampling of each polyline segment.
        let dense_min = |x: f64, y: f64| {
            let samples = path.samples();
            let mut best = f64::INFINITY;
            for i in 0..samples.len() - 1 {
                for k in 0..=10 {
                    let t = k as f64 / 10.0;
                    let px = samples[i].x + t * (samples[i + 1].x - samples[i].x);
                    let py = samples[i].y + t * (samples[i + 1].y - samples[i].y);
                    best = best.min(((x - px).powi(2) + (y - py).powi(2)).sqrt());
                }
            }
            best
        };
        let mut rng = 0xdeadbeef_u64;
        let mut next = || {
            rng = rng
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..6 {
            let s = next() * path.length();
            let p = path.sample_at(s);
            let (x, y) = (p.x - 2.0 + 4.0 * next(), p.y - 2.0 + 4.0 * next());
            let proj = match path.project(x, y) {
                Ok(pr) => pr,
                Err(Error::AmbiguousProjection { s_first, .. }) => {
                    path.project_windowed(x, y, s_first, 2.0)
                }
                Err(e) => panic!("{e}"),
            };
            let oracle = dense_min(x, y);
            assert!(
                (proj.distance - oracle).abs() <= 1e-6,
                "distance {} vs dense oracle {}",
                proj.distance,
                oracle
            );
        }
    }

    #[test]
    fn global_error_round_trip() {
        let g = geom();
        let v3 = Speed::new(-1.0).unwrap();
        let path = EightProfile::default().generate(&g, v3, 0.05).unwrap();
        let s = 0.37 * path.length();
        let err = ErrorState::new(-1.2, 0.15, -0.05, 0.08);
        let state = path.error_to_global(&err, s);
        let back = path.global_to_error(&state, s).unwrap();
        assert_abs_diff_eq!(back.z3, err.z3, epsilon = 1e-12);
        assert_abs_diff_eq!(back.theta3, err.theta3, epsilon = 1e-12);
        assert_abs_diff_eq!(back.beta3, err.beta3, epsilon = 1e-12);
        assert_abs_diff_eq!(back.beta2, err.beta2, epsilon = 1e-12);
        assert!(path.global_to_error(&state, path.length() + 1.0).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = geom();
        let v3 = Speed::new(-1.0).unwrap();
        let path = EightProfile::default().generate(&g, v3, 0.5).unwrap();
        let text = path.to_csv();
        let back = NominalPath::from_csv(&text, g, v3).unwrap();
        assert_eq!(path.samples().len(), back.samples().len());
        for (a, b) in path.samples().iter().zip(back.samples()) {
            assert_eq!(a, b, "CSV round trip must be bit-exact");
        }
        assert!(NominalPath::from_csv("nonsense\n1,2", g, v3).is_err());
    }

    #[test]
    fn straight_path_heading_error() {
        let g = geom();
        let path =
            NominalPath::generate(|_| 0.0, 10.0, 0.01, &g, Speed::new(1.0).unwrap()).unwrap();
        let mut state = path.error_to_global(&ErrorState::default(), 5.0);
        state.theta3 += 0.1;
        let err = path.global_to_error(&state, 5.0).unwrap();
        assert_abs_diff_eq!(err.theta3, 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(err.z3, 0.0, epsilon = 1e-14);
    }
}
