//! Shared fixture presets for the benchmarks.

use typicality_core::fixture::PlantedFixture;

/// 27 categories x 10 exemplars x 8 images at the given dimension, with
/// `models` text and `models` vision models.
pub fn grid_fixture(models: usize, dim: usize) -> PlantedFixture {
    PlantedFixture {
        dim,
        text_models: (0..models).map(|i| format!("text-{i}")).collect(),
        vision_models: (0..models).map(|i| format!("vision-{i}")).collect(),
        seed: 11,
        ..PlantedFixture::default()
    }
}
