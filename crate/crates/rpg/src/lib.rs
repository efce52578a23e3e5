//! Recurrent policy gradients over observation-action histories.
//!
//! This crate trains recurrent actor-critic agents — a deterministic
//! variant (RDPG) and a stochastic, re-parameterized variant (RSVG(0)) —
//! with backpropagation through time on a from-scratch reverse-mode tape,
//! and ships a closed-form POMDP benchmark suite (pendulum without
//! velocity, variable-length cartpole swing-up, hidden-target reacher,
//! water maze) so the whole loop runs on a desktop CPU with no external
//! physics engine.
//!
//! Start with the runnable examples (`cargo run --example ...`) or the
//! `rpg` binary (`train`, `eval`, `analyze-watermaze` subcommands).

#![forbid(unsafe_code)]

pub mod autodiff;
pub mod envs;
pub mod error;
pub mod harness;
pub mod learners;
pub mod nets;
pub mod replay;

pub use error::{Error, Result};
