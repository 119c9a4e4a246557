pub mod channel;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod impairments;
pub mod numerics;
pub mod waveform;
