//! Shared problem setup for the benchmarks.

use tensorreg::datagen::{gen_linear_synthetic, SynthData, SynthSpec};

/// The linear synthetic problem with `n` training samples.
pub fn linear_problem(n: usize, seed: u64) -> SynthData {
    gen_linear_synthetic(&SynthSpec::standard_linear(n, seed)).expect("valid synthetic spec")
}
