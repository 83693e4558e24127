//! Run configuration: TOML schema, validation, and model assembly.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::Deserialize;

use liouville_core::hs::{DensityMatrix, HilbertDims};
use liouville_core::linalg::CMat;
use liouville_core::models::{self, ModelFamily, ModelSpec};

/// Pipeline selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Full,
    Markov,
    NzOnly,
    OracleOnly,
    CompareAll,
}

impl RunMode {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "full" => Some(RunMode::Full),
            "markov" => Some(RunMode::Markov),
            "nz-only" => Some(RunMode::NzOnly),
            "oracle-only" => Some(RunMode::OracleOnly),
            "compare-all" => Some(RunMode::CompareAll),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RunMode::Full => "full",
            RunMode::Markov => "markov",
            RunMode::NzOnly => "nz-only",
            RunMode::OracleOnly => "oracle-only",
            RunMode::CompareAll => "compare-all",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: RawModel,
    /// Smoothing ε; interpreted relative to the model's spectral scale when
    /// `frequencies_relative` is true (the default).
    pub epsilon: f64,
    #[serde(default = "default_true")]
    pub frequencies_relative: bool,
    pub z_grid: RawZGrid,
    pub time_grid: RawTimeGrid,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_out")]
    pub out_dir: String,
    #[serde(default)]
    pub observables: Vec<RawObservable>,
}

fn default_true() -> bool {
    true
}

fn default_mode() -> String {
    "full".into()
}

fn default_out() -> String {
    "out".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub family: String,
    pub d_sys: usize,
    pub d_env: usize,
    pub seed: u64,
    #[serde(default)]
    pub coupling: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Optional explicit matrices (row-major, re/im interleaved); when given
    /// they replace the seeded construction.
    #[serde(default)]
    pub explicit: Option<RawExplicit>,
}

fn default_beta() -> f64 {
    models::DEFAULT_BETA
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExplicit {
    pub h_sys: Vec<f64>,
    pub h_env: Vec<f64>,
    pub h_int: Vec<f64>,
    pub rho_env: Vec<f64>,
    pub rho0: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawZGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTimeGrid {
    /// Absolute when positive; when `t_max_tau` is set instead, the window
    /// is t_max_tau · τ of the solved mode set.
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub t_max_tau: Option<f64>,
    pub n_points: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawObservable {
    pub name: String,
    /// Row-major, re/im interleaved, length 2·d_sys².
    pub matrix: Vec<f64>,
}

/// Validated configuration with the model realized.
pub struct RunConfig {
    pub model: ModelSpec,
    pub epsilon: f64,
    pub frequencies_relative: bool,
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_z: usize,
    pub t_max: Option<f64>,
    pub t_max_tau: Option<f64>,
    pub n_t: usize,
    pub mode: RunMode,
    pub out_dir: std::path::PathBuf,
    pub observables: Vec<(String, CMat)>,
}

#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

fn parse_interleaved(field: &str, data: &[f64], dim: usize) -> Result<CMat, ConfigError> {
    if data.len() != 2 * dim * dim {
        return Err(bad(
            field,
            format!(
                "expected {} interleaved re/im values for a {dim}x{dim} matrix, got {}",
                2 * dim * dim,
                data.len()
            ),
        ));
    }
    Ok(Mat::from_fn(dim, dim, |i, j| {
        let k = 2 * (i * dim + j);
        C64::new(data[k], data[k + 1])
    }))
}

impl RawConfig {
    /// Validate and realize the configuration.
    ///
    /// `seed_override` and `epsilon_override` implement the corresponding
    /// command-line flags; `mode_override` replaces the configured mode.
    pub fn realize(
        self,
        mode_override: Option<&str>,
        out_override: Option<&str>,
        seed_override: Option<u64>,
        epsilon_override: Option<f64>,
    ) -> Result<RunConfig, ConfigError> {
        let epsilon = epsilon_override.unwrap_or(self.epsilon);
        if !(epsilon > 0.0) {
            return Err(bad("epsilon", format!("must be > 0, got {epsilon}")));
        }
        if self.z_grid.n_points < 2 {
            return Err(bad(
                "z_grid.n_points",
                format!("must be ≥ 2, got {}", self.z_grid.n_points),
            ));
        }
        if self.z_grid.omega_max <= self.z_grid.omega_min {
            return Err(bad("z_grid", "omega_max must exceed omega_min"));
        }
        if self.time_grid.n_points < 2 {
            return Err(bad(
                "time_grid.n_points",
                format!("must be ≥ 2, got {}", self.time_grid.n_points),
            ));
        }
        match (self.time_grid.t_max, self.time_grid.t_max_tau) {
            (Some(t), None) if t > 0.0 => {}
            (None, Some(t)) if t > 0.0 => {}
            (Some(_), Some(_)) => {
                return Err(bad("time_grid", "give either t_max or t_max_tau, not both"))
            }
            _ => return Err(bad("time_grid", "needs a positive t_max or t_max_tau")),
        }
        let mode_name = mode_override.map(str::to_owned).unwrap_or(self.mode);
        let mode = RunMode::parse(&mode_name)
            .ok_or_else(|| bad("mode", format!("unknown mode `{mode_name}`")))?;

        let family = ModelFamily::parse(&self.model.family)
            .ok_or_else(|| bad("model.family", format!("unknown family `{}`", self.model.family)))?;
        let dims = HilbertDims::new(self.model.d_sys, self.model.d_env)
            .map_err(|e| bad("model.d_sys/d_env", e.to_string()))?;
        let seed = seed_override.unwrap_or(self.model.seed);
        if self.model.coupling < 0.0 {
            return Err(bad("model.coupling", "must be ≥ 0"));
        }

        let model = match &self.model.explicit {
            None => models::make_model_beta(family, dims, seed, self.model.coupling, self.model.beta)
                .map_err(|e| bad("model", e.to_string()))?,
            Some(exp) => {
                let h_sys = parse_interleaved("model.explicit.h_sys", &exp.h_sys, dims.d_sys)?;
                let h_env = parse_interleaved("model.explicit.h_env", &exp.h_env, dims.d_env)?;
                let h_int = parse_interleaved("model.explicit.h_int", &exp.h_int, dims.d_tot())?;
                let rho_env_mat =
                    parse_interleaved("model.explicit.rho_env", &exp.rho_env, dims.d_env)?;
                let rho0_mat = parse_interleaved("model.explicit.rho0", &exp.rho0, dims.d_sys)?;
                let rho_env = DensityMatrix::from_mat(rho_env_mat)
                    .map_err(|e| bad("model.explicit.rho_env", e.to_string()))?;
                let rho0 = DensityMatrix::from_mat(rho0_mat)
                    .map_err(|e| bad("model.explicit.rho0", e.to_string()))?;
                ModelSpec::from_parts(
                    dims,
                    h_sys,
                    h_env,
                    h_int,
                    rho_env,
                    rho0,
                    seed,
                    family,
                    self.model.coupling,
                    self.model.beta,
                )
                .map_err(|e| bad("model.explicit", e.to_string()))?
            }
        };

        let mut observables = Vec::with_capacity(self.observables.len());
        for obs in &self.observables {
            let mat = parse_interleaved(
                &format!("observables.{}", obs.name),
                &obs.matrix,
                dims.d_sys,
            )?;
            observables.push((obs.name.clone(), mat));
        }

        Ok(RunConfig {
            model,
            epsilon,
            frequencies_relative: self.frequencies_relative,
            omega_min: self.z_grid.omega_min,
            omega_max: self.z_grid.omega_max,
            n_z: self.z_grid.n_points,
            t_max: self.time_grid.t_max,
            t_max_tau: self.time_grid.t_max_tau,
            n_t: self.time_grid.n_points,
            mode,
            out_dir: out_override.unwrap_or(&self.out_dir).into(),
            observables,
        })
    }
}

pub fn load(path: &std::path::Path) -> Result<RawConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad("config", format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| bad("config", e.to_string()))
}
