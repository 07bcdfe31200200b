pub mod displacement;
pub mod error;
pub mod field;
pub mod gcm;
pub mod getconv;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod synth;
