//! Toolkit for synthesizing GUI-grounding corpora, unifying agent action
//! datasets into one action space, and scoring action-model predictions.

pub mod action;
pub mod annotate;
pub mod config;
pub mod eval;
pub mod explore;
pub mod filter;
pub mod geom;
pub mod pipeline;
pub mod records;
pub mod rng;
pub mod segment;
pub mod snapshot;
pub mod synth;
pub mod unify;
