//! Label-level local differential privacy for in-context learning.
//!
//! Demonstration labels are randomized with k-ary randomized response before
//! they reach a model. The crate ships the randomizer, a linear stand-in for
//! in-context learning, demonstration handling, model backends, private
//! positive-rate estimation and the experiment harness that ties them together.

pub mod backend;
pub mod demonstrations;
pub mod estimation;
pub mod experiments;
pub mod icl;
pub mod randomizer;
pub mod rng;
pub mod synthetic;

pub use randomizer::{Label, LabelSpace, MechanismSpec, PrivacyBudget};
pub use rng::RandomSeed;
