//! Canned data generators and coefficient-file IO.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use backheat::{
    backward_exact_oracle, source_condition_build, CoefVec, HeatProblem, SourceCondition,
};

use crate::config::ExperimentConfig;

/// Data plus whatever reference solution the generator knows exactly.
pub struct GeneratedData {
    pub data: CoefVec,
    pub reference: Option<CoefVec>,
    pub kind: String,
}

/// Builds the exact data f for the configured generator.
///
/// `single-mode` places one coefficient; `smooth` decays like j^{−4};
/// `rough` decays like j^{−1} normalized to unit norm (its backward solution
/// grows like e^{λ_j²T}/j — the ill-posed regime); `source-condition`
/// constructs a solution satisfying the logarithmic condition and induces
/// its forward data.
pub fn generate(cfg: &ExperimentConfig, problem: &HeatProblem) -> Result<GeneratedData> {
    let grid = problem.grid().clone();
    match cfg.data.generator.as_str() {
        "single-mode" => {
            let data = CoefVec::single_mode(grid, cfg.data.mode, cfg.data.amplitude)
                .map_err(|e| anyhow!("data: {e}"))?;
            // single-mode inversion is exact on the one occupied mode; keep
            // the reference only when its amplification is representable
            let reference = backward_exact_oracle(problem, &data).ok();
            Ok(GeneratedData {
                data,
                reference,
                kind: format!(
                    "single-mode(j={}, amplitude={})",
                    cfg.data.mode, cfg.data.amplitude
                ),
            })
        }
        "smooth" => {
            let coef = (1..=grid.n_modes()).map(|j| (j as f64).powi(-4)).collect();
            Ok(GeneratedData {
                data: CoefVec::new(grid, coef)?,
                reference: None,
                kind: "smooth(j^-4)".into(),
            })
        }
        "rough" => {
            let mut coef: Vec<f64> = (1..=grid.n_modes()).map(|j| (j as f64).recip()).collect();
            let norm = coef.iter().map(|c| c * c).sum::<f64>().sqrt();
            for c in coef.iter_mut() {
                *c /= norm;
            }
            Ok(GeneratedData {
                data: CoefVec::new(grid, coef)?,
                reference: None,
                kind: "rough(j^-1, normalized)".into(),
            })
        }
        "source-condition" => {
            let y = backheat::seeded_source_element(&grid, cfg.data.seed).scale(cfg.data.scale);
            let sc = SourceCondition::new(cfg.data.p, y)?;
            let x1 = CoefVec::zeros(grid);
            let built = source_condition_build(problem, &sc, &x1)?;
            Ok(GeneratedData {
                data: built.data,
                reference: Some(built.xbar),
                kind: format!(
                    "source-condition(p={}, seed={}, scale={})",
                    cfg.data.p, cfg.data.seed, cfg.data.scale
                ),
            })
        }
        "file" => {
            let data = read_coef_file(Path::new(&cfg.data.path), &grid)?;
            Ok(GeneratedData {
                data,
                reference: None,
                kind: format!("file({})", cfg.data.path),
            })
        }
        other => bail!("unknown generator `{other}`"),
    }
}

pub fn read_coef_file(
    path: &Path,
    grid: &std::sync::Arc<backheat::SpectralGrid>,
) -> Result<CoefVec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading data file {}", path.display()))?;
    let parsed = if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        CoefVec::from_csv(grid.clone(), &text)
    } else {
        CoefVec::from_json_line(grid.clone(), text.trim())
    };
    parsed.map_err(|e| anyhow!("data file {}: {e}", path.display()))
}

pub fn write_coef_files(dir: &Path, stem: &str, v: &CoefVec) -> Result<()> {
    std::fs::write(dir.join(format!("{stem}.json")), v.to_json_line() + "\n")?;
    std::fs::write(dir.join(format!("{stem}.csv")), v.to_csv())?;
    Ok(())
}

/// Whether invoking the exact backward map on this data is provably safe in
/// floating point: every occupied mode must have a representable
/// amplification e^{λ_j²T}. Callers gate risky invocations behind
/// `--allow-oracle`.
pub fn oracle_is_provably_safe(problem: &HeatProblem, data: &CoefVec) -> bool {
    const EXP_OVERFLOW: f64 = 700.0;
    problem
        .grid()
        .eigenvalues()
        .iter()
        .zip(data.coef())
        .all(|(&lam, &c)| c == 0.0 || lam * lam * problem.horizon() < EXP_OVERFLOW)
}
