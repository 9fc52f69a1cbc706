//! Real-time fact verification for generated text.
//!
//! Claims are extracted from a response, checked concurrently against a set
//! of knowledge sources, fused into a posterior over candidate values and a
//! calibrated confidence, and low-confidence claims are rewritten.

pub mod calibration;
pub mod claims;
pub mod correction;
pub mod eval;
pub mod evidence;
pub mod fusion;
pub mod pipeline;
pub mod sources;
pub mod text;
