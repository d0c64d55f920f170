//! Fixtures shared by the benchmarks in `benches/`.

use pcad_core::synth::Preset;
use pcad_core::UniformSeries;

/// Randomly phased two-class corpus with a few planted outliers.
pub fn corpus(n: usize, d: usize, seed: u64) -> Vec<UniformSeries> {
    Preset::Global
        .spec(n, d, seed)
        .generate()
        .expect("built-in preset is valid")
        .series
}
