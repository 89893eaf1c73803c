//! Core algorithms for a quasi-symbolic agent on a simplified lunar lander.
//!
//! The crate is `no_std`-compatible (with `alloc`) and holds everything that
//! is pure computation: a minimal dense-network engine ([`nn`]), the lander
//! simulation ([`env`]), the actor-critic agent ([`agent`]), the learned
//! one-step dynamics model ([`envmodel`]), and the quasi-symbolic transition
//! memory with hub extraction and rollout planning ([`qs`]).
//!
//! All arithmetic is `f64` and every operation is a deterministic function of
//! its inputs plus an explicit seeded rng, so identical seeds reproduce
//! results bit for bit. IO, file formats, and the CLI live in the companion
//! harness crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agent;
pub mod env;
pub mod envmodel;
pub mod error;
pub mod nn;
pub mod qs;
pub mod seed;

pub use error::{Error, Result};
