//! Per-neuron signal estimators: identity `S_x(x) = x`, filter
//! `S_w(x) = w wᵀx / wᵀw`, linear `S_a(x) = a wᵀx` and the two-component
//! estimator that keeps separate patterns for positive and non-positive
//! pre-activations.
//!
//! Learned patterns come from closed forms over streaming sufficient
//! statistics ([`NeuronStats`]); biases are treated as constant inputs and
//! never enter a pattern.

mod fit;
mod io;
mod patterns;
mod stats;

pub use fit::{
    estimate_signal, filter_pattern, fit_linear, fit_two_component, FitFlags, LinearFit,
    NeuronPatterns, SignalEstimatorKind, TwoComponentFit, EPSILON_DEAD, MIN_REGIME_SAMPLES,
};
pub use io::{
    load_patterns, patterns_from_bytes, patterns_to_bytes, save_patterns, PATTERN_FORMAT_VERSION,
    PATTERN_MAGIC,
};
pub use patterns::{
    collect_stats, fit_all, patterns_from_stats, FitOptions, LayerPatterns, PatternSet, Provenance,
};
pub use stats::{NeuronStats, RegimeMoments};
