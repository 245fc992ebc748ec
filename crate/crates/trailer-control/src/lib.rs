//! Control synthesis and stability certification for a reversing
//! general 2-trailer vehicle (truck, off-axle hitched dolly, trailer).
//!
//! The crate models the vehicle kinematics, derives the path-tracking
//! error dynamics in a Frenet frame, synthesizes a linear-quadratic
//! state feedback for reversing, certifies local exponential stability
//! over a whole set of reference paths with a common quadratic Lyapunov
//! function, and simulates the closed loop.

pub mod certify;
pub mod config;
pub mod error;
pub mod frenet;
pub mod kinematics;
pub mod linalg;
pub mod linearization;
pub mod lq;
pub mod simulate;

pub use error::{Error, Result};
