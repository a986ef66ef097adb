//! Experiment harness: configs, seeded trial sweeps, CSV results and plots.

pub mod experiment;
pub mod plot;
pub mod presets;
pub mod records;

pub use experiment::{run_trials, ExperimentConfig, Scheme, Seeds, Sweep, Trial};
pub use plot::emit_plot_script;
pub use presets::{sweep_preset, Scale};
pub use records::{format_g, write_csv, ExperimentRecord};
