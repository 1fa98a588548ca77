//! Simulation and compilation toolkit for neutral-atom processors that use
//! atom velocity, rather than position, to select which atoms a global beam
//! addresses.
//!
//! The crate is organised bottom-up:
//!
//! * [`kinematics`]: jerk-limited tweezer trajectories and zone-transfer costs;
//! * [`pulsephysics`]: Doppler shifts, spectator errors, displacement phases and
//!   two-level dynamics of moving atoms;
//! * [`rydberg`]: time-optimal CZ pulse synthesis and static / fly-by gate fidelity;
//! * [`statesim`]: Monte-Carlo state-vector simulation with loss flags and noise;
//! * [`codes`]: cluster states, the [[4,2,2]] code and flying-ancilla protocols;
//! * [`compiler`]: velocity-zone scheduling onto an AOD tweezer array.
//!
//! Generic code is written against [`Real`]; the aliases below fix the scalar
//! to `f64`.

pub mod circuit;
pub mod codes;
pub mod compiler;
pub mod error;
pub mod fit;
pub mod kinematics;
pub mod optimize;
pub mod pauli;
pub mod pulsephysics;
pub mod qmath;
pub mod rydberg;
pub mod scalar;
pub mod statesim;
pub mod vec2;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec2 = vec2::Vec2<f64>;
pub type Trajectory = kinematics::Trajectory<f64>;
pub type TrajectorySegment = kinematics::TrajectorySegment<f64>;
pub type MotionState = kinematics::MotionState<f64>;
pub type LaserField = pulsephysics::LaserField<f64>;
pub type TwoLevelState = pulsephysics::TwoLevelState<f64>;
pub type Mat2 = qmath::Mat2<f64>;
pub type QuantumRegister = statesim::QuantumRegister<f64>;

pub use circuit::{CircuitIR, Op};
pub use pauli::PauliString;
pub use rydberg::{GateResult, PulseProfile, RydbergParams};
