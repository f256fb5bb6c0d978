//! Active perception by predictive information.
//!
//! The crate closes the loop between a learned scene representation and a
//! quadrotor planner:
//!
//! * [`scene`] simulates box-world indoor scenes and an exact RGB-D-semantic
//!   sensor;
//! * [`field`] is an explicit trilinear voxel radiance field with density,
//!   color and category heads, volume rendering with variance outputs, and an
//!   analytic-gradient trainer;
//! * [`info`] turns an ensemble of fields into per-channel predictive
//!   information;
//! * [`flatness`] holds the quadrotor model, differential flatness and the
//!   minimum-snap QP;
//! * [`planner`] extracts free space, routes with Dijkstra and scores
//!   candidate trajectories (plus the frequency and frontier baselines);
//! * [`linear`] is the linear-Gaussian toy system with a Kalman belief;
//! * [`explorer`] runs the closed-loop experiment and its metrics.

pub mod explorer;
pub mod field;
pub mod flatness;
pub mod info;
pub mod linear;
pub mod par;
pub mod planner;
pub mod scene;
