//! Event-triggered home monitoring over a raster frame stream.
//!
//! The pipeline decodes netpbm frames, maintains a per-pixel
//! mixture-of-Gaussians background model, and watches up to three
//! user-configured regions: an entrance region (watch dog), a hazard region
//! (danger notice, with a voice alert) and a wall region where newly pasted
//! rectangle-shaped photos trigger a social-media notification. Events are
//! persisted with color snapshots and per-day statistics; foreground
//! silhouettes feed a linear SVM fall/stand classifier. A scenario simulator
//! renders deterministic synthetic sequences with an analytic event oracle
//! for end-to-end golden tests.

pub mod background;
pub mod config;
pub mod engine;
pub mod fall;
pub mod frame;
pub mod geom;
pub mod notifier;
pub mod pipeline;
pub mod raster;
pub mod recorder;
pub mod shape;
pub mod simulator;
pub mod svm;
