//! Streaming scam detection over app-usage trajectories: windowing, memory,
//! skill retrieval, assessors, distillation, benchmark synthesis and metrics.

pub mod assessor;
pub mod benchmarks;
pub mod context;
pub mod distill;
pub mod domain;
pub mod http;
pub mod io;
pub mod memory;
pub mod metrics;
pub mod pipeline;
pub mod skills;
pub mod synth;
pub mod text;
