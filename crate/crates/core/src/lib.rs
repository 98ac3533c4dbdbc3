//! Analysis pipeline for open-source contributor ecosystems.

pub mod ingest;
pub mod stats;
pub mod bigraph;
pub mod breadth;
pub mod linalg;
pub mod temporal;
pub mod survival;
pub mod friction;
pub mod pipeline;
