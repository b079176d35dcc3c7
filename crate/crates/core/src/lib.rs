//! Evaluation harness for probing language models with a fixed moral-prompt
//! battery across temperature sweeps, classifying the responses, and
//! computing stability and divergence statistics.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`battery`] — the immutable 17-prompt battery and decision taxonomies
//! - [`campaign`] — planning and executing generation campaigns, the JSONL
//!   record store, and legacy CSV ingestion
//! - [`classify`] — rule-based extraction of decisions, confidence, offers,
//!   rankings, and stage distributions
//! - [`metrics`] — consistency, agreement, temperature-sensitivity, lexical
//!   stability, and determinism statistics
//! - [`report`] — deterministic rendering of a metrics bundle into tables
//!   and plot-ready CSV files
//! - [`synthcond`] — a seeded synthetic-corpus generator with analytically
//!   known expected metrics, used as the pipeline's independent oracle

pub mod battery;
pub mod campaign;
pub mod classify;
pub mod metrics;
pub mod report;
pub mod synthcond;
