//! Emotion-aware dialogue generation with a target-guided emotion selector.
//!
//! A selector predicts the response emotion from the post (prior network) and,
//! during training, from the post and the gold response (recognition
//! network). The predicted emotion distribution is embedded and biases the
//! attention of a GRU encoder-decoder.

pub mod corpus;
pub mod emotion;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod model;
pub mod params;
pub mod selector;
pub mod tape;
pub mod training;

pub use emotion::{EmotionCategory, EmotionVector, NUM_EMOTIONS};
pub use error::{Error, Result};
pub use model::{LossComponents, Model, ModelConfig, Preset};
pub use params::{Grads, ModelParams, ParamId};
