//! Joint-angle estimation from 2D pose keypoints and RULA scoring.

pub mod cli;
pub mod features;
pub mod io;
pub mod regressor;
pub mod rula;
pub mod skeleton;
pub mod synth;
