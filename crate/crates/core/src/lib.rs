//! A miniature compiler for a clustered VLIW DSP that synthesizes
//! multiply-accumulate (MACC) instructions from innermost loops, together
//! with a machine-description-driven cycle simulator and a benchmark
//! harness comparing MACC and baseline builds.

pub mod bench;
pub mod codegen;
pub mod driver;
pub mod frontend;
pub mod isa;
pub mod maccpass;
pub mod machine;
pub mod sim;
