//! Repetition counting from body-pose landmarks.
//!
//! Frames of 33 landmarks are turned into feature vectors (coordinates plus
//! joint angles), scored for saliency per action, and the resulting density
//! map drives a two-limit trigger that counts repetitions.

pub mod cli;
pub mod data;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod scorer;
pub mod trigger;
