//! State neural networks: directed graphs of stateful neurons whose edge
//! weights may change during a rollout, trained to reproduce recorded
//! output-neuron sequences from input-neuron sequences.
//!
//! - [`topology`]: the neuron graph, its file format and random construction
//! - [`dynamics`]: rate and leaky integrate-and-fire neuron updates
//! - [`plasticity`]: Hebbian fast weights and trace-based STDP
//! - [`params`]: the flat trainable parameter vector and its registry
//! - [`engine`]: synchronous stepping, plus a naive reference interpreter
//! - [`autodiff`]: taped forward pass, reverse sweep, TBPTT, finite differences
//! - [`datasets`]: conditioning and Pong episode generators, episode files
//! - [`training`]: optimizers, checkpoints, metrics, task evaluation
//! - [`verify`]: invariant suites shared by the CLI and the test targets

pub mod autodiff;
pub mod datasets;
pub mod dynamics;
pub mod engine;
pub mod params;
pub mod plasticity;
pub mod probe;
pub mod rng;
pub mod topology;
pub mod training;
pub mod verify;

pub use autodiff::{Gradient, LossKind};
pub use datasets::{Dataset, Episode};
pub use engine::{Engine, EngineError, RolloutState};
pub use params::{ParameterSet, SegmentKind};
pub use rng::SeededRng;
pub use topology::NetworkTopology;

/// Artifact version reported by the CLI.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
