pub mod correction;
pub mod distribution;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod numeric;
pub mod oracle;
pub mod rng;
pub mod sampling;
