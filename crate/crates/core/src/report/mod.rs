//! Configuration, the subcommands and their output files.

mod commands;
mod config;
mod output;
mod stages;

pub use commands::{
    cmd_accim, cmd_check, cmd_escape, cmd_shrink, cmd_tower, exit_code, rebin, run,
    srb_l1_interior, ulam_solve, Command, Outcome, RunManifest, RunResult,
};
pub use config::{
    AccimConfig, CheckConfig, ConditionalConfig, EscapeConfig, FamilyEntry, PilotConfig, RunConfig,
    ShrinkConfig, TablesConfig, TowerConfig, TowerOperatorConfig,
};
pub use output::{real, Cell, FileEntry, OutputDir, Table};
pub use stages::{
    class_m, covering_property, hole_assumptions, hole_size, pilot, run_tower, CoveringSummary,
    HoleAssumptions, HoleSize, PilotSummary, Problem, TowerRun,
};
