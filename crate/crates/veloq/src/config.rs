//! Run configuration: TOML file, environment override and noise presets.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use serde::{Deserialize, Serialize};
use veloq_core::rydberg::RydbergParams;
use veloq_core::statesim::{AttachPoint, NoiseChannel, NoiseKind, NoiseModel};
use veloq_core::Vec2;

pub const SEED_ENV: &str = "VELOQ_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub run: RunSection,
    pub physics: Physics,
    pub noise: NoiseSection,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Shots per Monte-Carlo setting.
    pub shots: usize,
    /// Shots per sequence length in randomized benchmarking.
    pub rb_shots: usize,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 7, shots: 10_000, rb_shots: 20_000, out: PathBuf::from("out") }
    }
}

/// Physical constants. Frequencies are cyclic (Hz); wavelengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub lambda_clock: f64,
    pub lambda_fs: f64,
    pub lambda_uv: f64,
    pub rabi_clock_hz: f64,
    pub rabi_raman_hz: f64,
    pub rabi_rydberg_hz: f64,
    /// Blockade shift in units of the Rydberg Rabi frequency.
    pub blockade_ratio: f64,
    pub flyby_velocity: f64,
    /// Jerk of the spatial-shuttle baseline, derived from `shuttle_distance`
    /// covered in `shuttle_time` by a cubic move.
    pub shuttle_distance: f64,
    pub shuttle_time: f64,
    pub zone_dv: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            lambda_clock: 698e-9,
            lambda_fs: 17.2e-6,
            lambda_uv: 317e-9,
            rabi_clock_hz: 40e3,
            rabi_raman_hz: 120e3,
            rabi_rydberg_hz: 5e6,
            blockade_ratio: 50.0,
            flyby_velocity: 0.1,
            shuttle_distance: 100e-6,
            shuttle_time: 200e-6,
            zone_dv: 0.05,
        }
    }
}

impl Physics {
    pub fn rydberg(&self) -> RydbergParams {
        let rabi = TAU * self.rabi_rydberg_hz;
        RydbergParams {
            rabi,
            blockade: self.blockade_ratio * rabi,
            k_uv: Vec2::new(0.0, TAU / self.lambda_uv),
            ..RydbergParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_clock", self.lambda_clock),
            ("lambda_fs", self.lambda_fs),
            ("lambda_uv", self.lambda_uv),
            ("rabi_clock_hz", self.rabi_clock_hz),
            ("rabi_raman_hz", self.rabi_raman_hz),
            ("rabi_rydberg_hz", self.rabi_rydberg_hz),
            ("blockade_ratio", self.blockade_ratio),
            ("flyby_velocity", self.flyby_velocity),
            ("shuttle_distance", self.shuttle_distance),
            ("shuttle_time", self.shuttle_time),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                bail!("physics.{name} must be positive, got {v}");
            }
        }
        if !(self.zone_dv >= 0.0) {
            bail!("physics.zone_dv must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Effective error budget calibrated to the reported entangled-state results.
    Calibrated,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub preset: Preset,
    /// Replaces the preset's channels when non-empty.
    pub channels: Vec<NoiseChannel>,
    pub transfer_fidelity: Option<f64>,
    pub spectator_infidelity: Option<f64>,
    /// Static Bell fidelity the Rydberg decay rate is tuned to.
    pub bell_target: f64,
    /// Injected per-Clifford depolarizing error for randomized benchmarking.
    pub rb_error: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            preset: Preset::Calibrated,
            channels: Vec::new(),
            transfer_fidelity: None,
            spectator_infidelity: None,
            bell_target: 0.9986,
            rb_error: 1e-3,
        }
    }
}

impl NoiseSection {
    /// Noise model for the circuit-level experiments.
    pub fn model(&self) -> Result<NoiseModel> {
        let mut m = match self.preset {
            Preset::Off => NoiseModel::ideal(),
            Preset::Calibrated => calibrated_preset()?,
        };
        if !self.channels.is_empty() {
            m.channels = self.channels.clone();
        }
        if let Some(f) = self.transfer_fidelity {
            m.transfer_fidelity = f;
        }
        if let Some(s) = self.spectator_infidelity {
            m.spectator_infidelity = s;
        }
        m.validate()?;
        Ok(m)
    }
}

pub fn calibrated_preset() -> Result<NoiseModel> {
    let mut m = NoiseModel::ideal()
        .with_channel(NoiseKind::Depolarizing2q, 0.045, AttachPoint::Cz)?
        .with_channel(NoiseKind::Depolarizing2q, 0.045, AttachPoint::Flyby)?
        .with_channel(NoiseKind::Depolarizing1q, 0.001, AttachPoint::SingleQubit)?
        .with_channel(NoiseKind::Loss, 0.065, AttachPoint::Measure)?
        .with_channel(NoiseKind::ReadoutFlip, 0.01, AttachPoint::Measure)?;
    m.transfer_fidelity = 0.97;
    m.spectator_infidelity = 0.004;
    Ok(m)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }

    /// Applies `VELOQ_SEED` if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.run.seed = s.trim().parse().with_context(|| format!("{SEED_ENV}={s:?} is not an unsigned integer"))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.shots == 0 || self.run.rb_shots == 0 {
            bail!("shot counts must be at least 1");
        }
        self.physics.validate()?;
        self.noise.model()?;
        if !(0.0..1.0).contains(&self.noise.bell_target) || !(0.0..1.0).contains(&self.noise.rb_error) {
            bail!("noise.bell_target and noise.rb_error must lie in [0, 1)");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections_and_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [run]
            seed = 11
            shots = 500

            [noise]
            preset = "off"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.run.seed, 11);
        assert_eq!(cfg.run.shots, 500);
        assert_eq!(cfg.physics, Physics::default());
        assert!(cfg.noise.model().unwrap().is_ideal());
        assert!(toml::from_str::<RunConfig>("[run]\nsede = 1\n").is_err());
    }

    #[test]
    fn explicit_channels_replace_preset() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [[noise.channels]]
            kind = "depolarizing2q"
            strength = 0.02
            attach = "cz"
            "#,
        )
        .unwrap();
        let m = cfg.noise.model().unwrap();
        assert_eq!(m.channels.len(), 1);
        assert_eq!(m.transfer_fidelity, 0.97);
    }

    #[test]
    fn roundtrip() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
