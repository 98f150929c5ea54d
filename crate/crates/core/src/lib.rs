pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod generator;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod profiles;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod vae;
pub mod vocab;
