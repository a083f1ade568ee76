//! Stereo-inertial geometry toolkit.
//!
//! Builds 3D supervision signals (stereo relative pose, 3D and 2D optical
//! flow) from stereo depth sequences, preintegrates IMU streams with a
//! feedback-driven bias update, and evaluates or degrades trajectories.

pub mod align;
pub mod error;
pub mod degrade;
pub mod eval;
pub mod flow;
pub mod icp;
pub mod io;
pub mod imu;
pub mod preint;
pub mod rng;
pub mod se3;
pub mod status;
pub mod stereo;
pub mod synth;

pub use error::{Error, Result};
pub use flow::{FlowField2D, FlowField3D, FlowMask};
pub use icp::{IcpParams, IcpResult};
pub use imu::{ImuNoiseModel, ImuSample, ImuStatus, Timestamp};
pub use preint::PreintegratedDelta;
pub use se3::{RigidTransform, Rotation, Se3Tangent};
pub use stereo::{CameraIntrinsics, DepthMap, DisparityMap, PixelCoord, PointCloud, StereoRig};
