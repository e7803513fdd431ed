//! Macro- and micro-expression spotting in long videos with an AU-aware
//! graph convolutional network.
//!
//! The pipeline: per-frame ROI motion features ([`feature_io`]) pass through
//! a graph convolution whose adjacency encodes AU co-occurrence
//! ([`au_prior`]), then a dilated temporal convolution stack ([`model`])
//! emits onset/apex/offset/expression probabilities. Training
//! ([`training`]) optimizes a focal loss under leave-one-subject-out
//! cross-validation; [`spotting`] decodes probabilities into scored
//! intervals and [`evaluation`] scores them by interval IoU.

pub mod au_prior;
pub mod cli;
pub mod config;
pub mod evaluation;
pub mod feature_io;
pub mod model;
pub mod numerics;
pub mod spotting;
pub mod synthdata;
pub mod training;
pub mod verify;
