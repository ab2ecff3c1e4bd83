//! Declarative experiment configuration: a TOML file with sections, plus
//! repeatable `--set key=value` overrides. Sweeps are driven entirely by the
//! config so a manifest re-run reproduces them byte for byte.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use backheat::{gamma_bounds, GammaBounds, HeatProblem, NoiseProfile, Schedule, SpectralGrid};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: ProblemCfg,
    pub data: DataCfg,
    pub noise: NoiseCfg,
    pub schedule: ScheduleCfg,
    pub stopping: StoppingCfg,
    pub output: OutputCfg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemCfg {
    pub n_modes: usize,
    pub horizon: f64,
    pub gamma: f64,
    /// Eigenvalue sequence: "index" (λ_j = j) or "sqrt-index" (λ_j = √j).
    pub spectrum: String,
}

impl Default for ProblemCfg {
    fn default() -> Self {
        Self {
            n_modes: 64,
            horizon: 1.0,
            gamma: 1.0,
            spectrum: "index".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataCfg {
    /// single-mode | smooth | rough | source-condition | file
    pub generator: String,
    /// Mode index for `single-mode`.
    pub mode: usize,
    /// Coefficient for `single-mode`.
    pub amplitude: f64,
    /// Exponent for `source-condition`.
    pub p: f64,
    /// Seed for the `source-condition` element.
    pub seed: u64,
    /// Norm of the `source-condition` element.
    pub scale: f64,
    /// Input file for `file` (.json line or .csv).
    pub path: String,
}

impl Default for DataCfg {
    fn default() -> Self {
        Self {
            generator: "single-mode".into(),
            mode: 1,
            amplitude: 1.0,
            p: 1.0,
            seed: 0,
            scale: 1.0,
            path: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseCfg {
    /// Noise levels, strictly descending; empty means exact data.
    pub eps: Vec<f64>,
    /// single_mode_worst | white | high_mode
    pub profile: String,
    pub seeds: Vec<u64>,
}

impl Default for NoiseCfg {
    fn default() -> Self {
        Self {
            eps: Vec::new(),
            profile: "white".into(),
            seeds: vec![1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleCfg {
    /// picard | constant | harmonic | geometric-decay
    pub name: String,
    /// Diagonal for `constant`.
    pub d: f64,
}

impl Default for ScheduleCfg {
    fn default() -> Self {
        Self {
            name: "picard".into(),
            d: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoppingCfg {
    pub mu: f64,
    pub max_iter: usize,
    /// Residual tolerance used for exact-data runs.
    pub residual_tol: f64,
}

impl Default for StoppingCfg {
    fn default() -> Self {
        Self {
            mu: 1.5,
            max_iter: 10_000,
            residual_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputCfg {
    pub dir: PathBuf,
    /// Number of uniform sample points to synthesize (0 = none).
    pub synthesize_points: usize,
    /// auto | oracle | none
    pub reference: String,
}

impl Default for OutputCfg {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            synthesize_points: 0,
            reference: "auto".into(),
        }
    }
}

/// The canned demonstration scenario: unit horizon, γ = 1, single-mode data
/// with coefficient e^{−1} (so the reconstruction is sin t), exact data,
/// successive approximation.
pub fn scenario(name: &str) -> Result<ExperimentConfig> {
    match name {
        "classic-single-mode" => {
            let mut cfg = ExperimentConfig::default();
            cfg.data.amplitude = (-1.0f64).exp();
            cfg.stopping.max_iter = 200;
            cfg.stopping.residual_tol = 1e-10;
            cfg.output.synthesize_points = 65;
            Ok(cfg)
        }
        other => bail!("unknown scenario `{other}` (available: classic-single-mode)"),
    }
}

/// Loads a config file, layering `--set key=value` overrides on top before
/// deserializing.
pub fn load(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    from_text(&text, overrides)
}

pub fn from_text(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: toml::Table = text.parse().context("parsing config TOML")?;
    for entry in overrides {
        apply_override(&mut table, entry)?;
    }
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .context("interpreting config")?;
    Ok(cfg)
}

pub fn apply_overrides_to(
    cfg: &ExperimentConfig,
    overrides: &[String],
) -> Result<ExperimentConfig> {
    let text = toml::to_string(cfg).context("serializing config")?;
    from_text(&text, overrides)
}

fn apply_override(table: &mut toml::Table, entry: &str) -> Result<()> {
    let (key, raw_value) = entry
        .split_once('=')
        .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{entry}`"))?;
    let value = parse_toml_value(raw_value.trim());
    let segments: Vec<&str> = key.trim().split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        bail!("bad --set key `{key}`");
    }
    let mut current = table;
    for segment in &segments[..segments.len() - 1] {
        current = current
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("--set key `{key}` traverses a non-table value"))?;
    }
    current.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

fn parse_toml_value(raw: &str) -> toml::Value {
    // interpret the value as a TOML fragment; anything that fails falls back
    // to a plain string
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(t) => t.get("v").cloned().unwrap_or_else(|| raw.into()),
        Err(_) => raw.into(),
    }
}

/// Problem pieces resolved from a validated config.
pub struct ResolvedProblem {
    pub problem: HeatProblem,
    pub bounds: GammaBounds,
    /// γ exceeds the stricter injectivity bound (still admissible).
    pub injectivity_bound_exceeded: bool,
}

pub fn resolve_problem(cfg: &ExperimentConfig) -> Result<ResolvedProblem> {
    if cfg.problem.n_modes == 0 {
        bail!("problem.n_modes must be at least 1");
    }
    let grid = match cfg.problem.spectrum.as_str() {
        "index" => SpectralGrid::laplacian_1d(cfg.problem.n_modes),
        "sqrt-index" => SpectralGrid::sqrt_index(cfg.problem.n_modes),
        other => bail!("problem.spectrum must be `index` or `sqrt-index`, got `{other}`"),
    };
    let bounds =
        gamma_bounds(&grid, cfg.problem.horizon).map_err(|e| anyhow!("problem.horizon: {e}"))?;
    let problem = HeatProblem::new(grid, cfg.problem.horizon, cfg.problem.gamma).map_err(|_| {
        anyhow!(
            "problem.gamma = {} violates the admissible interval (0, {}) = (0, 2·exp(min_eigenvalue^2 * horizon))",
            cfg.problem.gamma,
            bounds.loose_upper
        )
    })?;
    let injectivity_bound_exceeded = bounds
        .strict_upper
        .map(|s| cfg.problem.gamma >= s)
        .unwrap_or(false);
    Ok(ResolvedProblem {
        problem,
        bounds,
        injectivity_bound_exceeded,
    })
}

pub fn resolve_schedule(cfg: &ExperimentConfig) -> Result<Schedule> {
    let schedule = match cfg.schedule.name.as_str() {
        "picard" => Schedule::picard(),
        "constant" => Schedule::Constant { d: cfg.schedule.d },
        "harmonic" => Schedule::Harmonic,
        "geometric-decay" => Schedule::GeometricDecay,
        other => bail!(
            "schedule.name must be picard, constant, harmonic or geometric-decay, got `{other}`"
        ),
    };
    schedule
        .validate()
        .map_err(|e| anyhow!("schedule.d: {e}"))?;
    Ok(schedule)
}

pub fn resolve_noise_profile(cfg: &ExperimentConfig) -> Result<NoiseProfile> {
    NoiseProfile::parse(&cfg.noise.profile).map_err(|e| anyhow!("noise.profile: {e}"))
}

/// Cross-field validation shared by all commands.
pub fn validate(cfg: &ExperimentConfig) -> Result<()> {
    resolve_problem(cfg)?;
    resolve_schedule(cfg)?;
    resolve_noise_profile(cfg)?;

    for &e in &cfg.noise.eps {
        if e <= 0.0 || !e.is_finite() {
            bail!("noise.eps entries must be positive, got {e}");
        }
    }
    if cfg.noise.eps.windows(2).any(|w| w[1] >= w[0]) {
        bail!("noise.eps must be strictly descending");
    }
    if !cfg.noise.eps.is_empty() && cfg.noise.seeds.is_empty() {
        bail!("noise.seeds must be nonempty when noise.eps is set");
    }
    if cfg.stopping.mu.is_nan() || cfg.stopping.mu <= 1.0 {
        bail!("stopping.mu must exceed 1, got {}", cfg.stopping.mu);
    }
    if cfg.stopping.max_iter == 0 {
        bail!("stopping.max_iter must be at least 1");
    }
    if cfg.stopping.residual_tol.is_nan() || cfg.stopping.residual_tol <= 0.0 {
        bail!("stopping.residual_tol must be positive");
    }
    match cfg.data.generator.as_str() {
        "single-mode" => {
            if cfg.data.mode == 0 || cfg.data.mode > cfg.problem.n_modes {
                bail!(
                    "data.mode = {} outside 1..={}",
                    cfg.data.mode,
                    cfg.problem.n_modes
                );
            }
        }
        "smooth" | "rough" => {}
        "source-condition" => {
            if cfg.data.p.is_nan() || cfg.data.p <= 0.0 {
                bail!("data.p must be positive for source-condition data");
            }
            // rate statements under a source condition need the stronger
            // discrepancy factor
            if !cfg.noise.eps.is_empty() && cfg.stopping.mu <= 2.0 {
                bail!(
                    "source-condition experiments with noise require stopping.mu > 2, got {}",
                    cfg.stopping.mu
                );
            }
        }
        "file" => {
            if cfg.data.path.is_empty() {
                bail!("data.path required for the file generator");
            }
        }
        other => bail!(
            "data.generator must be single-mode, smooth, rough, source-condition or file, got `{other}`"
        ),
    }
    match cfg.output.reference.as_str() {
        "auto" | "oracle" | "none" => {}
        other => bail!("output.reference must be auto, oracle or none, got `{other}`"),
    }
    Ok(())
}
