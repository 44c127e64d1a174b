//! Run configuration: a preset table with the user's file merged on top.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use msqg_core::solver::{InitialSpec, ItoCorrection, NoiseDrive, SolverConfig};
use msqg_core::uniqueness::Perturbation;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Smoke,
    Desk,
    Full,
}

impl Preset {
    fn table(self) -> &'static str {
        match self {
            Preset::Smoke => include_str!("../presets/smoke.toml"),
            Preset::Desk => include_str!("../presets/desk.toml"),
            Preset::Full => include_str!("../presets/full.toml"),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub solver: SolverSection,
    pub initial: InitialSection,
    pub certify: CertifySection,
    pub uniqueness: UniquenessSection,
    pub kernels: KernelsSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Kraichnan,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionKind {
    Galerkin,
    Isotropic,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub n: usize,
    pub box_length: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub p: f64,
    pub dt: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub seed: u64,
    pub ensemble_size: usize,
    pub nonlinearity: bool,
    pub diffusion: bool,
    pub noise: NoiseKind,
    pub correction: CorrectionKind,
}

impl SolverSection {
    pub fn to_core(&self) -> SolverConfig {
        SolverConfig {
            n: self.n,
            box_length: self.box_length,
            alpha: self.alpha,
            beta: self.beta,
            delta: self.delta,
            p: self.p,
            dt: self.dt,
            t_end: self.t_end,
            cfl_safety: self.cfl_safety,
            seed: self.seed,
            ensemble_size: self.ensemble_size,
            nonlinearity: self.nonlinearity,
            diffusion: self.diffusion,
            noise: match self.noise {
                NoiseKind::Kraichnan => NoiseDrive::Kraichnan,
                NoiseKind::Off => NoiseDrive::Off,
            },
            correction: match self.correction {
                CorrectionKind::Galerkin => ItoCorrection::Galerkin,
                CorrectionKind::Isotropic => ItoCorrection::Isotropic,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    RandomBand,
    File,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub k_min: f64,
    pub k_max: f64,
    pub l2_norm: f64,
    pub seed: u64,
    /// MSQG coefficient file, relative to the config file.
    pub path: PathBuf,
}

impl InitialSection {
    pub fn to_core(&self) -> InitialSpec {
        match self.kind {
            InitialKind::RandomBand => InitialSpec::RandomBand {
                k_min: self.k_min,
                k_max: self.k_max,
                l2_norm: self.l2_norm,
                seed: self.seed,
            },
            InitialKind::File => InitialSpec::File(self.path.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    ABound,
    Remainders,
    NoiseMultiplier,
    EnergyBalance,
    RegularityBudget,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    pub checks: Vec<CheckName>,
    pub a_bound: ABoundSection,
    pub remainders: RemaindersSection,
    pub noise: NoiseSection,
    pub balance: BalanceSection,
    pub budget: BudgetSection,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ABoundSection {
    pub n: usize,
    pub box_length: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RemaindersSection {
    pub alpha: f64,
    pub beta: f64,
    pub deltas: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub n: usize,
    pub box_length: f64,
    pub alpha: f64,
    pub delta: f64,
    pub probe_n: usize,
    pub probe_box_length: f64,
    pub probe_delta: f64,
    pub probe_k_max: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceSection {
    pub ensemble_size: usize,
    pub t_end: f64,
    pub probe_times: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub ensemble_size: usize,
    pub deltas: Vec<f64>,
    pub horizons: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessSection {
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub t_end: f64,
    pub pairs: usize,
    pub epsilon0: f64,
    pub perturbation: Perturbation,
    pub snapshot_every: usize,
    pub bound_samples: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsSection {
    pub route_betas: Vec<f64>,
    pub route_deltas: Vec<f64>,
    pub route_tolerance: f64,
    pub scan_beta: f64,
    pub scan_deltas: Vec<f64>,
    pub scan_per_decade: usize,
    pub heat_betas: Vec<f64>,
    pub heat_dim: usize,
    pub heat_t_range: [f64; 2],
    pub heat_r_range: [f64; 2],
    pub heat_per_decade: usize,
}

/// Recursively overlays `top` onto `base`; tables merge, everything else
/// replaces.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn parse_table(text: &str, origin: &Path) -> Result<toml::Table, CliError> {
    text.parse::<toml::Table>().map_err(|e| CliError::ConfigParse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })
}

/// Resolves the run configuration. The preset comes from `preset_flag`,
/// else from a `preset` key in the file, else `desk`.
pub fn load(path: Option<&Path>, preset_flag: Option<Preset>) -> Result<RunConfig, CliError> {
    let user = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::ConfigRead {
                path: p.to_path_buf(),
                source,
            })?;
            parse_table(&text, p)?
        }
        None => toml::Table::new(),
    };
    let origin = path.unwrap_or(Path::new("<preset>"));
    let from_file = match user.get("preset") {
        Some(v) => Some(
            Preset::deserialize(v.clone()).map_err(|e| CliError::ConfigParse {
                path: origin.to_path_buf(),
                message: format!("preset: {e}"),
            })?,
        ),
        None => None,
    };
    let preset = preset_flag.or(from_file).unwrap_or(Preset::Desk);
    let mut table = parse_table(preset.table(), Path::new("<preset>"))?;
    merge(&mut table, user);
    table.insert("preset".into(), toml::Value::String(format!("{preset:?}").to_lowercase()));
    let mut cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| CliError::ConfigParse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    if let (InitialKind::File, Some(dir)) = (cfg.initial.kind, path.and_then(Path::parent)) {
        if cfg.initial.path.is_relative() {
            cfg.initial.path = dir.join(&cfg.initial.path);
        }
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
