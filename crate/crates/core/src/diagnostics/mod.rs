//! Data exports for inspecting trained models: per-layer choice entropy,
//! per-voxel choice maps, generalization gaps and a random-codebook baseline.

mod baseline;
mod choices;
mod entropy;
mod gap;
mod pipeline;
#[cfg(test)]
mod tests;

pub use baseline::{random_codebook_baseline, random_codebook_config};
pub use choices::{
    adaptation_report, choice_indices, choice_map, plane_shapes, points_per_voxel, AdaptationReport, ChoiceAxis, ChoiceMap, FLOOR_LABEL,
};
pub use entropy::{deep_layer_entropy, layer_entropy_profile, write_entropy_csv, LayerEntropy};
pub use gap::{check_param_match, generalization_gap, write_gap_csv, GapRow, PARAM_TOLERANCE};
pub use pipeline::{mine_regions, prepare, prepare_with, run_pipeline, run_pipeline_with, Prepared, RunOutcome};
