//! The time-invariant / time-variant architecture.
//!
//! * Time-invariant module: a bidirectional GRU over the windows, mean-pooled
//!   into a summary vector that generates per-feature FiLM scale `β` and
//!   shift `θ`.
//! * Time-variant module: a bidirectional GRU whose inputs are modulated by
//!   `β ⊙ x_t + θ`, followed by per-window attention `α_t = tanh(W_α h_t + b_α)`.
//! * Prediction module: `ξ_t = β + α_t`, `c = Σ_t ξ_t ⊙ x_t`,
//!   `ŷ = σ(⟨w, c⟩ + b)` (or linear for regression).

mod config;
mod forward;
mod gru;
mod params;

pub use config::{ModelConfig, Task, Variant};
pub use forward::{
    attention, build_forward, build_loss, film_generator, forward, predict, sample_gradient,
    ForwardNodes, ForwardTrace, SampleGradient,
};
pub use gru::{
    birnn_forward, film, film_birnn_forward, film_gru_cell, gru_cell, gru_step, BiGruNodes,
};
pub use params::{BiGru, GateSet, ParamSet, Parameters};
