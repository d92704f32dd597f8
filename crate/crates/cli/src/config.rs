//! Run configuration: a JSON file merged with command-line flags (flags win).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rdcontract::certificates::LambdaSource;
use rdcontract::models::{ModelPreset, TranslationParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_N: usize = 500;
pub const DEFAULT_T_END: f64 = 100.0;
pub const DEFAULT_WINDOW: [f64; 2] = [80.0, 100.0];
pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Certify,
    SweepOmega,
    SweepZeta,
    Bcf,
    Eig,
    Qss,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Certify => "certify",
            Self::SweepOmega => "sweep-omega",
            Self::SweepZeta => "sweep-zeta",
            Self::Bcf => "bcf",
            Self::Eig => "eig",
            Self::Qss => "qss",
        }
    }
}

/// Initial state presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InitPreset {
    Ones,
    Ramp,
    Random,
    Translation,
}

/// Certificate flavour for `certify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CertifyMode {
    Full,
    Hierarchical,
}

/// Every knob any command reads. Absent fields take per-command defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub model: Option<ModelPreset>,
    pub n: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub window: Option<[f64; 2]>,
    pub sample_every: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub init: Option<InitPreset>,
    pub epsilon: Option<f64>,
    pub omega: Option<f64>,
    /// Diffusivity override for `example31`.
    pub diffusion: Option<f64>,
    pub zeta: Option<f64>,
    pub r: Option<f64>,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub zeta_min: Option<f64>,
    pub zeta_max: Option<f64>,
    pub steps: Option<usize>,
    pub tol: Option<f64>,
    pub theta: Option<f64>,
    /// Constant diffusivity for `eig` when no radius is given.
    pub d: Option<f64>,
    pub x_star: Option<f64>,
    pub r_m: Option<f64>,
    pub r_r: Option<f64>,
    pub diffusion_scale: Option<f64>,
    pub translation: Option<TranslationParams>,
    pub mode: Option<CertifyMode>,
    pub lambda_source: Option<LambdaSource>,
    pub triplets: Option<bool>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($field:ident),* $(,)?) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(&mut self, other: &RunConfig) {
        overlay!(self, other;
            command, model, n, dt, t_end, window, sample_every, output_dir, seed, samples, init,
            epsilon, omega, diffusion, zeta, r, omega_min, omega_max, r_min, r_max, zeta_min,
            zeta_max, steps, tol, theta, d, x_star, r_m, r_r, diffusion_scale, translation, mode,
            lambda_source, triplets,
        );
    }

    /// Binds the config to `command`, rejecting a file written for another one.
    pub fn bind(mut self, command: Command) -> Result<Self> {
        if let Some(c) = self.command {
            if c != command {
                bail!(
                    "config is for `{}` but `{}` was requested",
                    c.as_str(),
                    command.as_str()
                );
            }
        }
        self.command = Some(command);
        Ok(self)
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex. The output
    /// directory is left out, so relocated reruns stay byte-identical.
    pub fn hash(&self) -> String {
        let content = RunConfig {
            output_dir: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&content).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or(DEFAULT_N)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end.unwrap_or(DEFAULT_T_END)
    }

    pub fn window(&self) -> [f64; 2] {
        self.window.unwrap_or(DEFAULT_WINDOW)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn model(&self) -> Result<ModelPreset> {
        self.model
            .context("`model` is required (example31, example32, translation)")
    }

    pub fn require(&self, name: &str, value: Option<f64>) -> Result<f64> {
        value.with_context(|| {
            format!(
                "`{name}` is required for `{}`",
                self.command.map_or("?", Command::as_str)
            )
        })
    }

    /// Translation parameters with the flat overrides applied.
    pub fn translation_params(&self) -> TranslationParams {
        let mut p = self.translation.unwrap_or_default();
        if let Some(v) = self.r_m {
            p.r_m = v;
        }
        if let Some(v) = self.r_r {
            p.r_r = v;
        }
        if let Some(v) = self.x_star {
            p.x_star = v;
        }
        p.with_diffusion_scale(self.diffusion_scale.unwrap_or(1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_prefers_flags() {
        let mut file = RunConfig {
            epsilon: Some(0.1),
            n: Some(100),
            ..Default::default()
        };
        let flags = RunConfig {
            epsilon: Some(0.01),
            ..Default::default()
        };
        file.overlay(&flags);
        assert_eq!(file.epsilon, Some(0.01));
        assert_eq!(file.n, Some(100));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default().bind(Command::Bcf).unwrap();
        let b = RunConfig {
            r_m: Some(0.1),
            ..a.clone()
        };
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let moved = RunConfig {
            output_dir: Some("elsewhere".into()),
            ..a.clone()
        };
        assert_eq!(a.hash(), moved.hash());
    }

    #[test]
    fn bind_rejects_other_command() {
        let c = RunConfig {
            command: Some(Command::Eig),
            ..Default::default()
        };
        assert!(c.bind(Command::Bcf).is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"epsilonn": 1.0}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"command": "sweep-omega", "model": "example31"}"#).unwrap();
        assert_eq!(c.command, Some(Command::SweepOmega));
    }
}
