//! Deterministic simulator and Monte-Carlo analysis harness for randomized
//! test-and-set (TAS) and group-election protocols built from atomic
//! read/write registers.
//!
//! The crate is organized in layers:
//!
//! - [`sim`]: the execution engine. Protocols are step machines that
//!   alternate coin-flip steps and shared-memory steps; a scheduler
//!   (adversary) picks which process moves next. Executions decompose into a
//!   schedule and per-process coin vectors and can be replayed exactly.
//! - [`coins`]: counter-based deterministic randomness, split per
//!   (master seed, trial, process, ordinal) so executions are reproducible
//!   regardless of scheduling or parallelism.
//! - [`adversary`]: scheduler classes with information masking (oblivious,
//!   location-oblivious, read/write-oblivious, strong adaptive) and a battery
//!   of concrete strategies, including an attack that defeats the
//!   location-oblivious election when given full information.
//! - [`primitives`]: doorway, deterministic and randomized splitters, and the
//!   two- and three-process test-and-set building blocks.
//! - [`election`]: group-election protocols (the geometric-level scheme safe
//!   against location-oblivious schedulers, the two-phase sifting scheme safe
//!   against read/write-oblivious schedulers, and the trivial one).
//! - [`algorithms`]: complete n-process TAS algorithms composed from the
//!   above (group-election loop, elimination paths, the RatRace tree, and the
//!   Comb interleaving construction), together with register layouts.
//! - [`harness`]: Monte-Carlo trial runner (parallel via rayon behind the
//!   `parallel` feature, with a sequential fallback), per-trial invariant
//!   checking, aggregate statistics, CSV output, and the two-process
//!   schedule-family lower-bound verifier.

pub mod adversary;
pub mod algorithms;
pub mod coins;
pub mod election;
pub mod harness;
pub mod primitives;
pub mod sim;
