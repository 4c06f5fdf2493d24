//! Gesture kinematics and FMCW TDM-MIMO frame synthesis.

pub mod gesture;
pub mod rawfile;
pub mod synth;

pub use gesture::{make_trajectory, GestureClass, GestureTrajectory, TrajectoryParams};
pub use rawfile::{read_raw_file, write_raw_file, RawFrameReader, RawFrameWriter, RawMeta};
pub use synth::{
    render_gesture, synthesize_frame, FrameCube, FrameScene, GestureRenderer, RenderOptions, RenderedFrame,
    ScattererState, SynthWarning,
};
