//! Stage runner behind the `affectlens` command.

pub mod cache;
pub mod config;
pub mod fsutil;
pub mod stages;

pub use stages::{exit_code, run_stage, Ctx, Stage, StageReport};

/// Runs `stages` in order, stopping at the first failure.
pub fn run_stages(cfg: config::RunConfig, stages: &[Stage]) -> anyhow::Result<Vec<StageReport>> {
    let mut ctx = Ctx::new(cfg)?;
    std::fs::create_dir_all(ctx.out())?;
    stages.iter().map(|&s| run_stage(&mut ctx, s)).collect()
}
