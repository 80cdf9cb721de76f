//! Deterministic simulator of a cache-occupancy side channel on an
//! integrated GPU's L3, plus the website-fingerprinting pipeline that
//! consumes its memorygrams.
//!
//! The pieces, bottom up:
//!
//! - [`cache`]: set-associative L3 model with the bank/sub-bank/set index
//!   split and optional way partitioning between spy and victim.
//! - [`gpu`]: workgroup layout validation, round-robin placement, the
//!   SLM counting-thread timer, and send-unit contention.
//! - [`victim`]: seeded synthetic website-rendering traces.
//! - [`channel`]: prime/probe orchestration producing memorygrams.
//! - [`calibrate`]: solves the timing constants from the sampling-rate
//!   anchors.
//! - [`fingerprint`]: features, KNN/RF classifiers, cross-validated
//!   closed- and open-world evaluation.
//! - [`cli`]: the `occusim` command-line pipeline.
//!
//! Every stage is a pure function of its config and seeds; reruns are
//! byte-identical.

pub mod cache;
pub mod calibrate;
pub mod channel;
pub mod cli;
pub mod fingerprint;
pub mod gpu;
pub mod seedmix;
pub mod victim;
