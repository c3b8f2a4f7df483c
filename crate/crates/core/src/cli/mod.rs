//! Scenario files, presets and the subcommands behind the `isde` binary.

pub mod config;
pub mod families;
pub mod presets;
pub mod run;

pub use config::{load_config, ConfigError, Scenario, ScenarioConfig};
pub use presets::{preset, PRESET_NAMES};
pub use run::{run_subcommand, Command, RunOptions};
