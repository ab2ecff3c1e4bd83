//! `gen`: emit a generated data file (plus the reference solution when the
//! generator knows it) without running anything.

use anyhow::{Context, Result};
use serde_json::json;

use crate::config::{self, ExperimentConfig};
use crate::data;
use crate::solve::{resolve_reference, ReferenceOutcome};

pub fn cmd_gen(cfg: &ExperimentConfig, allow_oracle: bool) -> Result<u8> {
    config::validate(cfg)?;
    let resolved = config::resolve_problem(cfg)?;
    let generated = data::generate(cfg, &resolved.problem)?;

    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    data::write_coef_files(dir, "data", &generated.data)?;

    let reference_kind = match resolve_reference(cfg, &resolved, &generated, allow_oracle)? {
        ReferenceOutcome::Value(v, kind) => {
            data::write_coef_files(dir, "reference", &v)?;
            kind
        }
        ReferenceOutcome::None => "none",
        ReferenceOutcome::OracleFailed(msg) => {
            eprintln!("reference computation failed: {msg}");
            return Ok(1);
        }
    };

    let manifest = json!({
        "tool": { "name": "backheat", "version": env!("CARGO_PKG_VERSION") },
        "config": cfg,
        "resolved": {
            "data_kind": generated.kind,
            "reference": reference_kind,
        },
    });
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    println!("gen: wrote data.json / data.csv to {}", dir.display());
    Ok(0)
}
