pub mod datapipe;
pub mod error;
pub mod globalpath;
pub mod keyframe;
pub mod losses;
pub mod nn;
pub mod rcfk;
pub mod rotmath;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
