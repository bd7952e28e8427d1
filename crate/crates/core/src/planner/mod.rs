//! End-to-end orchestration: configuration, the bundled version catalog,
//! synthetic network generation, the planning pipeline and its reports,
//! sensitivity runs and the deterministic-plan budget audit.

pub mod config;
pub mod pipeline;
pub mod presets;
pub mod report;
pub mod synth;

pub use config::{
    default_catalog, BudgetSchedule, EmissionSchedule, ForecastSource, PlannerConfig,
    TechnologyConfig,
};
pub use pipeline::{run_pipeline, run_sensitivity, PipelineArtifacts, SensitivityCase};
pub use presets::{preset, PresetBundle};
pub use report::{PlanReport, SensitivityReport};
pub use synth::{generate_synthetic_city, SynthParams};
