//! Test problems, baselines and experiment runners.

mod functions;
mod moments;
mod presets;
mod runner;
mod sweep;

pub use functions::{
    rosenbrock, rosenbrock_grad, synthetic_ms, synthetic_ms_grad, Rosenbrock, Synthetic,
    TestProblem, Trigonometric,
};
pub use moments::{moments_check, MomentEntry, MomentReport};
pub use presets::{table_preset, PresetCell, TablePreset, PRESET_NAMES};
pub use runner::{central_fdm, err, run_experiment, ExperimentSpec, ResultRow, RunSummary};
pub use sweep::{fit_loglog, mse_sweep, LogLogFit, MsePoint, MseSweep};
