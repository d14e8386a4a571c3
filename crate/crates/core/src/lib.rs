//! Lecture transcripts and slides in, reviewed microlearning packages out.
//!
//! The pipeline refines a raw transcript (through a language model or a
//! deterministic filler-removal pass), generates flashcards, quizzes, mini
//! lessons and scenario activities per transcript chunk, scores every item
//! with Flesch Reading Ease, and collects the results in a [`model::Package`]
//! that a reviewer must approve before anything is exported.

pub mod config;
pub mod gateway;
pub mod generate;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod readability;
pub mod refine;
pub mod review;
pub mod synthetic;
