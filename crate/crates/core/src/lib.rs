//! Core library for inferring the time of day across novels.
//!
//! The pipeline runs in stages: [`ingest`] loads and tokenizes raw book
//! text, [`timex`] extracts explicit clock-time expressions, [`association`]
//! scores word/hour affinity, [`classify`] trains windowed hour-of-day
//! classifiers, [`segment`] partitions whole books into time-coherent
//! segments, and [`trends`] aggregates predicted hours into author
//! birth-year cohorts.

pub mod association;
pub mod classify;
pub mod ingest;
pub mod segment;
pub mod timex;
pub mod trends;

pub use ingest::{BookMeta, Corpus, Document, Source};
pub use timex::{Daypart, Meridiem, TimeExpression};
