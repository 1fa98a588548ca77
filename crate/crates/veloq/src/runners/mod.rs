//! One runner per reproduced figure. Each returns its tables, a summary and
//! the checks that decide the exit status of `reproduce`.

use std::sync::OnceLock;

use anyhow::{bail, Result};
use veloq_core::rydberg::synthesize_time_optimal_cz;
use veloq_core::statesim::{ExecConfig, FlybyModel, NoiseModel};
use veloq_core::PulseProfile;

use crate::config::{Preset, RunConfig};
use crate::report::FigureOutput;

mod bell;
mod benchmarks;
mod codes;
mod displacement;
mod doppler;
mod zones;

pub const IDS: &[&str] = &["zones", "fig2a", "fig2d", "fig3a", "fig3c", "fig4", "fig5", "figS1", "fig1f", "figS2", "figS3"];

/// Shared state for one invocation; the CZ pulse is synthesized at most once.
pub struct Context {
    pub cfg: RunConfig,
    profile: OnceLock<PulseProfile>,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, profile: OnceLock::new() })
    }

    /// Context with a precomputed CZ pulse; skips synthesis.
    pub fn with_profile(cfg: RunConfig, profile: PulseProfile) -> Result<Self> {
        profile.validate()?;
        let ctx = Self::new(cfg)?;
        let _ = ctx.profile.set(profile);
        Ok(ctx)
    }

    pub fn seed(&self) -> u64 {
        self.cfg.run.seed
    }

    pub fn shots(&self) -> usize {
        self.cfg.run.shots
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        self.cfg.noise.model()
    }

    pub fn noisy(&self) -> bool {
        self.cfg.noise.preset != Preset::Off || !self.cfg.noise.channels.is_empty()
    }

    pub fn profile(&self) -> Result<&PulseProfile> {
        if let Some(p) = self.profile.get() {
            return Ok(p);
        }
        let p = synthesize_time_optimal_cz(&self.cfg.physics.rydberg())?;
        Ok(self.profile.get_or_init(|| p))
    }

    /// True when the untouched calibrated preset is active, so the
    /// calibrated consistency bands apply.
    pub fn calibrated(&self) -> bool {
        let n = &self.cfg.noise;
        n.preset == Preset::Calibrated && n.channels.is_empty() && n.transfer_fidelity.is_none() && n.spectator_infidelity.is_none()
    }

    /// Executor settings: fly-by gates use the synthesized pulse whenever
    /// noise is on, and are ideal CZs otherwise.
    pub fn exec_config(&self) -> Result<ExecConfig> {
        let mut cfg = ExecConfig::default();
        if self.noisy() {
            cfg.flyby = Some(FlybyModel { profile: self.profile()?.clone(), params: self.cfg.physics.rydberg() });
        }
        Ok(cfg)
    }
}

pub fn run(id: &str, ctx: &Context) -> Result<FigureOutput> {
    match id {
        "zones" => zones::run(ctx),
        "fig2a" => doppler::fig2a(ctx),
        "fig2d" => doppler::fig2d(ctx),
        "fig3a" => displacement::fig3a(ctx),
        "fig3c" => displacement::fig3c(ctx),
        "fig4" => codes::fig4(ctx),
        "fig5" => codes::fig5(ctx),
        "figS1" => benchmarks::fig_s1(ctx),
        "fig1f" => benchmarks::fig1f(ctx),
        "figS2" => bell::fig_s2(ctx),
        "figS3" => codes::fig_s3(ctx),
        other => bail!("unknown figure id '{other}'; expected one of: all, {}", IDS.join(", ")),
    }
}

pub fn run_all(ctx: &Context) -> Result<Vec<FigureOutput>> {
    IDS.iter().map(|id| run(id, ctx)).collect()
}
