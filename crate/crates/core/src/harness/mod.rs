//! Experiment configuration, the two-stage pipeline, ablations, the
//! sparsity sweep and gene-map rendering.

mod config;
mod eval;
mod pipeline;
mod render;
mod report;
mod sweep;

pub use config::{ClusterConfig, DataConfig, EvalConfig, ExperimentConfig, RefineConfig, SplitConfig, Variant};
pub use eval::{rmse, EvalSet};
pub use pipeline::{
    cluster_lakes, finish, load_data, load_search, mces_config, population_data, population_ids, prepare,
    refine_batches, rmse_from_predictions, run_ablation, run_experiment, run_prepared, run_seed, score_test_lake,
    search, Prepared, SearchOutput,
};
pub use render::{render_gene_map, RenderFormat};
pub use report::{mean_std, write_ablation, CellResult, Report, SummaryRow};
pub use sweep::{matched_c, sparsity_sweep, write_sweep, SweepPoint};
