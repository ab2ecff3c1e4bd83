//! `solve`: one reconstruction run with full artifacts.

use anyhow::{bail, Context, Result};
use serde_json::json;

use backheat::{
    add_noise, backward_exact_oracle, discrepancy_stop, run_iteration, AffineFixedPointOp, CoefVec,
    Driver, RunOptions, StopRule, StoppingRule,
};

use crate::config::{self, ExperimentConfig};
use crate::data::{self, GeneratedData};

pub fn cmd_solve(cfg: &ExperimentConfig, allow_oracle: bool) -> Result<u8> {
    config::validate(cfg)?;
    let resolved = config::resolve_problem(cfg)?;
    let schedule = config::resolve_schedule(cfg)?;
    let profile = config::resolve_noise_profile(cfg)?;
    let generated = data::generate(cfg, &resolved.problem)?;

    let (eps_used, seed_used, run_data, stop) = if cfg.noise.eps.is_empty() {
        (
            None,
            None,
            generated.data.clone(),
            StopRule::ResidualBelow(cfg.stopping.residual_tol),
        )
    } else {
        let eps = cfg.noise.eps[0];
        let seed = cfg.noise.seeds[0];
        let rule = StoppingRule::new(cfg.stopping.mu, cfg.stopping.max_iter)?;
        let noisy = add_noise(&generated.data, eps, seed, profile)?;
        (
            Some(eps),
            Some(seed),
            noisy.f_eps,
            discrepancy_stop(&rule, eps)?,
        )
    };

    let (reference, reference_kind) =
        match resolve_reference(cfg, &resolved, &generated, allow_oracle)? {
            ReferenceOutcome::Value(v, kind) => (Some(v), kind),
            ReferenceOutcome::None => (None, "none"),
            ReferenceOutcome::OracleFailed(msg) => {
                eprintln!("reference computation failed: {msg}");
                return Ok(1);
            }
        };

    let op = AffineFixedPointOp::new(resolved.problem.clone(), run_data)?;
    let x1 = CoefVec::zeros(resolved.problem.grid().clone());
    let record = run_iteration(
        &op,
        &x1,
        Driver::Segmenting(schedule),
        &RunOptions {
            max_iter: cfg.stopping.max_iter,
            stop,
            reference: reference.clone(),
            ..Default::default()
        },
    )?;

    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("run.csv"), record.to_csv())?;
    data::write_coef_files(dir, "solution", &record.final_x)?;
    if let Some(r) = &reference {
        data::write_coef_files(dir, "reference", r)?;
    }
    if cfg.output.synthesize_points > 0 {
        let points = sample_points(cfg.output.synthesize_points);
        let values = record.final_x.synthesize(&points)?;
        let mut csv = String::from("t,value\n");
        for (t, v) in points.iter().zip(&values) {
            csv.push_str(&format!("{t},{v}\n"));
        }
        std::fs::write(dir.join("samples.csv"), csv)?;
    }

    let manifest = json!({
        "tool": { "name": "backheat", "version": env!("CARGO_PKG_VERSION") },
        "config": cfg,
        "resolved": {
            "lambda_bar": resolved.bounds.lambda_bar,
            "lambda_tilde": resolved.bounds.lambda_tilde,
            "gamma_loose_upper": resolved.bounds.loose_upper,
            "gamma_strict_upper": resolved.bounds.strict_upper,
            "injectivity_bound_exceeded": resolved.injectivity_bound_exceeded,
            "data_kind": generated.kind,
            "eps_used": eps_used,
            "seed_used": seed_used,
            "reference": reference_kind,
        },
        "run": record.metadata_json(),
    });
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;

    for w in &record.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "solve: k_stop={} stop={} final_residual={:e}{}",
        record.k_stop,
        record.stop_reason.as_str(),
        record.final_residual(),
        record
            .final_error()
            .map(|e| format!(" final_error={e:e}"))
            .unwrap_or_default()
    );
    println!("artifacts: {}", dir.display());
    Ok(0)
}

pub enum ReferenceOutcome {
    Value(CoefVec, &'static str),
    None,
    OracleFailed(String),
}

pub fn resolve_reference(
    cfg: &ExperimentConfig,
    resolved: &config::ResolvedProblem,
    generated: &GeneratedData,
    allow_oracle: bool,
) -> Result<ReferenceOutcome> {
    match cfg.output.reference.as_str() {
        "none" => Ok(ReferenceOutcome::None),
        "auto" => Ok(match &generated.reference {
            Some(r) => ReferenceOutcome::Value(r.clone(), "generator"),
            None => ReferenceOutcome::None,
        }),
        "oracle" => {
            if !data::oracle_is_provably_safe(&resolved.problem, &generated.data) && !allow_oracle {
                bail!(
                    "the exact backward inversion on this data can overflow; pass --allow-oracle to acknowledge"
                );
            }
            match backward_exact_oracle(&resolved.problem, &generated.data) {
                Ok(v) => Ok(ReferenceOutcome::Value(v, "oracle")),
                Err(e) => Ok(ReferenceOutcome::OracleFailed(e.to_string())),
            }
        }
        other => bail!("output.reference `{other}`"),
    }
}

/// Uniform interior points of (−π, π).
pub fn sample_points(n: usize) -> Vec<f64> {
    let step = 2.0 * std::f64::consts::PI / (n as f64 + 1.0);
    (1..=n)
        .map(|i| -std::f64::consts::PI + i as f64 * step)
        .collect()
}
