//! `verify`: end-to-end invariant suite. Prints one line per named check and
//! exits nonzero naming the first failure. Fully deterministic.

use anyhow::{bail, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use backheat::{
    add_noise, backward_exact_oracle, discrepancy_index_bound, discrepancy_stop,
    energy_identity_check, forward_solve, gamma_bounds, run_iteration, source_condition_build,
    tl_apply, AffineFixedPointOp, CoefVec, Driver, HeatProblem, IterationState, MannMatrix,
    NoiseProfile, RunOptions, Schedule, SourceCondition, SpectralGrid, StoppingRule,
};

/// Internal test hook: which deliberate fault to inject into the check
/// harness (not into the library) to prove the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Flip the sign of the data term in the diagonal-form step used by the
    /// energy-identity check.
    EnergySign,
}

pub fn parse_fault(s: &str) -> Result<Fault> {
    match s {
        "energy-sign" => Ok(Fault::EnergySign),
        other => bail!("unknown fault `{other}` (available: energy-sign)"),
    }
}

type Check = Box<dyn Fn() -> Result<(), String>>;

pub fn cmd_verify(fault: Option<Fault>) -> Result<u8> {
    let checks: Vec<(&str, Check)> = vec![
        ("gamma-bounds-identity", Box::new(check_gamma_bounds)),
        ("tl-nonexpansive", Box::new(check_nonexpansive)),
        ("fixed-point-identity", Box::new(check_fixed_point)),
        ("path-equivalence", Box::new(check_path_equivalence)),
        (
            "energy-identity",
            Box::new(move || check_energy_identity(fault)),
        ),
        (
            "segmenting-general-equivalence",
            Box::new(check_equivalence),
        ),
        ("source-isometry", Box::new(check_source_isometry)),
        ("residual-monotonicity", Box::new(check_residual_monotone)),
        ("discrepancy-bound-mini-sweep", Box::new(check_bound_sweep)),
    ];

    let mut first_failure: Option<(String, String)> = None;
    for (name, check) in &checks {
        match check() {
            Ok(()) => println!("{name:<34} PASS"),
            Err(detail) => {
                println!("{name:<34} FAIL  {detail}");
                if first_failure.is_none() {
                    first_failure = Some((name.to_string(), detail));
                }
            }
        }
    }
    match first_failure {
        None => {
            println!("verify: {}/{} checks passed", checks.len(), checks.len());
            Ok(0)
        }
        Some((name, _)) => {
            eprintln!("verify: FAILED at check `{name}`");
            Ok(1)
        }
    }
}

fn seeded_vec(grid: &std::sync::Arc<SpectralGrid>, seed: u64, scale: f64) -> CoefVec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef = (0..grid.n_modes())
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            scale * g
        })
        .collect();
    CoefVec::new(grid.clone(), coef).expect("finite")
}

fn check_gamma_bounds() -> Result<(), String> {
    // the worked configuration: λ̄ = 1, T = 1
    let grid = SpectralGrid::laplacian_1d(8);
    let b = gamma_bounds(&grid, 1.0).map_err(|e| e.to_string())?;
    let e = std::f64::consts::E;
    if (b.loose_upper - 2.0 * e).abs() > 1e-14 * e {
        return Err(format!("loose bound {} != 2e", b.loose_upper));
    }
    let strict = b.strict_upper.ok_or("strict bound undefined")?;
    if (strict - e).abs() > 1e-14 * e {
        return Err(format!("strict bound {strict} != e"));
    }
    // algebraic identity 2 exp(λ̃²T) = exp(λ̄²T) across parameters
    for &(lam, t) in &[(1.0, 1.0), (1.5, 0.5), (0.9, 2.0), (2.0, 0.25)] {
        let g = SpectralGrid::new(vec![lam, lam + 1.0]).map_err(|e| e.to_string())?;
        let b = gamma_bounds(&g, t).map_err(|e| e.to_string())?;
        if let Some(strict) = b.strict_upper {
            let exponent = lam * lam * t;
            let direct = exponent.exp();
            if (strict - direct).abs() > 1e-12 * (1.0 + exponent) * direct {
                return Err(format!("identity off at λ̄={lam} T={t}"));
            }
        }
    }
    Ok(())
}

fn check_nonexpansive() -> Result<(), String> {
    let grid = SpectralGrid::laplacian_1d(6);
    for &gamma in &[0.5, 1.0, 2.5, 5.4] {
        let problem = HeatProblem::new(grid.clone(), 1.0, gamma).map_err(|e| e.to_string())?;
        for seed in 0..20u64 {
            let phi = seeded_vec(&grid, 10 + seed, 2.0);
            let image = tl_apply(&problem, &phi).map_err(|e| e.to_string())?;
            if image.l2_norm() > phi.l2_norm() * (1.0 + 1e-12) {
                return Err(format!(
                    "γ={gamma} seed={seed}: ‖T_l φ‖ = {} > ‖φ‖ = {}",
                    image.l2_norm(),
                    phi.l2_norm()
                ));
            }
        }
    }
    Ok(())
}

fn check_fixed_point() -> Result<(), String> {
    let grid = SpectralGrid::laplacian_1d(6);
    let problem = HeatProblem::new(grid.clone(), 1.0, 1.0).map_err(|e| e.to_string())?;
    for seed in 0..5u64 {
        let truth = seeded_vec(&grid, 50 + seed, 1.0);
        let f = forward_solve(&problem, &truth).map_err(|e| e.to_string())?;
        let xbar = backward_exact_oracle(&problem, &f).map_err(|e| e.to_string())?;
        let op = AffineFixedPointOp::new(problem.clone(), f).map_err(|e| e.to_string())?;
        let defect = op
            .apply(&xbar)
            .and_then(|v| v.sub(&xbar))
            .map_err(|e| e.to_string())?
            .l2_norm();
        if defect > 1e-12 * xbar.l2_norm().max(1.0) {
            return Err(format!("seed={seed}: fixed-point defect {defect}"));
        }
    }
    Ok(())
}

fn check_path_equivalence() -> Result<(), String> {
    let grid = SpectralGrid::laplacian_1d(7);
    let problem = HeatProblem::new(grid.clone(), 0.8, 1.6).map_err(|e| e.to_string())?;
    let f = seeded_vec(&grid, 70, 1.0);
    let op = AffineFixedPointOp::new(problem.clone(), f.clone()).map_err(|e| e.to_string())?;
    for seed in 0..10u64 {
        let phi = seeded_vec(&grid, 80 + seed, 3.0);
        let composed = op.apply(&phi).map_err(|e| e.to_string())?;
        let scale = phi.l2_norm().max(f.l2_norm()).max(1.0) * problem.gamma().max(1.0);
        for ((&lam, (&x, &fv)), &got) in problem
            .grid()
            .eigenvalues()
            .iter()
            .zip(phi.coef().iter().zip(f.coef()))
            .zip(composed.coef())
        {
            let diagonal = problem.tl_eigenvalue(lam) * x + problem.gamma() * fv;
            if (got - diagonal).abs() > 1e-15 * scale {
                return Err(format!("seed={seed}: {got} vs diagonal {diagonal}"));
            }
        }
    }
    Ok(())
}

fn check_energy_identity(fault: Option<Fault>) -> Result<(), String> {
    let grid = SpectralGrid::laplacian_1d(8);
    let problem = HeatProblem::new(grid.clone(), 1.0, 1.0).map_err(|e| e.to_string())?;
    let sign = if fault == Some(Fault::EnergySign) {
        -1.0
    } else {
        1.0
    };
    for seed in 0..10u64 {
        let xbar = seeded_vec(&grid, 100 + seed, 1.0);
        let f = forward_solve(&problem, &xbar).map_err(|e| e.to_string())?;
        let mut x = CoefVec::zeros(grid.clone());
        for step in 0..50 {
            // diagonal-form step; the fault hook flips the data term
            let coef: Vec<f64> = problem
                .grid()
                .eigenvalues()
                .iter()
                .zip(x.coef().iter().zip(f.coef()))
                .map(|(&lam, (&xj, &fj))| {
                    problem.tl_eigenvalue(lam) * xj + sign * problem.gamma() * fj
                })
                .collect();
            let x_next = CoefVec::new(grid.clone(), coef).map_err(|e| e.to_string())?;
            let defect = energy_identity_check(&problem, &f, &xbar, &x, &x_next)
                .map_err(|e| e.to_string())?;
            let e = xbar.sub(&x).map_err(|e| e.to_string())?.l2_norm();
            let scale = (e * e).max(1.0);
            if defect > 1e-12 * scale {
                return Err(format!(
                    "seed={seed} step={step}: defect {defect} at scale {scale}"
                ));
            }
            x = x_next;
        }
    }
    Ok(())
}

fn check_equivalence() -> Result<(), String> {
    let grid = SpectralGrid::laplacian_1d(6);
    let problem = HeatProblem::new(grid.clone(), 1.0, 1.0).map_err(|e| e.to_string())?;
    let f = CoefVec::single_mode(grid.clone(), 1, (-1.0f64).exp()).map_err(|e| e.to_string())?;
    let op = AffineFixedPointOp::new(problem, f).map_err(|e| e.to_string())?;
    let x1 = seeded_vec(&grid, 200, 1.0);
    let schedule = Schedule::Constant { d: 0.5 };
    let mut seg = IterationState::start(x1.clone());
    let mut gen = IterationState::start(x1.clone());
    let mut matrix = MannMatrix::segmenting(&schedule, 1).map_err(|e| e.to_string())?;
    let mut history = vec![x1];
    for _ in 0..100 {
        backheat::mann_step_segmenting(&mut seg, &schedule, &op).map_err(|e| e.to_string())?;
        backheat::mann_step_general(&mut gen, &mut history, &mut matrix, &op)
            .map_err(|e| e.to_string())?;
        let diff = seg.v.sub(&gen.v).map_err(|e| e.to_string())?.l2_norm();
        if diff > 1e-12 * gen.v.l2_norm().max(1.0) {
            return Err(format!("k={}: paths differ by {diff}", seg.k));
        }
    }
    Ok(())
}

fn check_source_isometry() -> Result<(), String> {
    let grid = SpectralGrid::laplacian_1d(32);
    let problem = HeatProblem::new(grid.clone(), 1.0, 1.0).map_err(|e| e.to_string())?;
    let x1 = CoefVec::zeros(grid.clone());
    for &p in &[0.5, 1.0, 2.0] {
        let y = seeded_vec(&grid, 300, 1.0);
        let sc = SourceCondition::new(p, y.clone()).map_err(|e| e.to_string())?;
        let built = source_condition_build(&problem, &sc, &x1).map_err(|e| e.to_string())?;
        let lhs = built
            .xbar
            .sub(&x1)
            .and_then(|d| d.hs_norm(2.0 * p))
            .map_err(|e| e.to_string())?;
        let rhs = y.hs_norm(0.0).map_err(|e| e.to_string())?;
        if (lhs - rhs).abs() > 1e-12 * rhs {
            return Err(format!("p={p}: {lhs} vs {rhs}"));
        }
    }
    Ok(())
}

fn check_residual_monotone() -> Result<(), String> {
    let grid = SpectralGrid::laplacian_1d(8);
    let problem = HeatProblem::new(grid.clone(), 1.0, 1.0).map_err(|e| e.to_string())?;
    for seed in 0..10u64 {
        let f = seeded_vec(&grid, 400 + seed, 1.0);
        let data = if seed % 2 == 0 {
            add_noise(&f, 0.05, seed, NoiseProfile::White)
                .map_err(|e| e.to_string())?
                .f_eps
        } else {
            f
        };
        let op = AffineFixedPointOp::new(problem.clone(), data).map_err(|e| e.to_string())?;
        let record = run_iteration(
            &op,
            &seeded_vec(&grid, 500 + seed, 0.5),
            Driver::Segmenting(Schedule::picard()),
            &RunOptions {
                max_iter: 30,
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let norms = record.residual_norms();
        for w in norms.windows(2) {
            if w[1] > w[0] + 1e-12 {
                return Err(format!("seed={seed}: residual rose {} -> {}", w[0], w[1]));
            }
        }
    }
    Ok(())
}

fn check_bound_sweep() -> Result<(), String> {
    let grid = SpectralGrid::laplacian_1d(32);
    let problem = HeatProblem::new(grid.clone(), 1.0, 1.0).map_err(|e| e.to_string())?;
    let f = CoefVec::single_mode(grid.clone(), 1, (-1.0f64).exp()).map_err(|e| e.to_string())?;
    let xbar = backward_exact_oracle(&problem, &f).map_err(|e| e.to_string())?;
    let x1 = CoefVec::zeros(grid);
    let mu = 1.5;
    let rule = StoppingRule::new(mu, 100_000).map_err(|e| e.to_string())?;
    let err0 = xbar.sub(&x1).map_err(|e| e.to_string())?.l2_norm();
    for &eps in &[1e-1, 3e-2, 1e-2] {
        for seed in [1u64, 2] {
            let nd = add_noise(&f, eps, seed, NoiseProfile::White).map_err(|e| e.to_string())?;
            let op =
                AffineFixedPointOp::new(problem.clone(), nd.f_eps).map_err(|e| e.to_string())?;
            let record = run_iteration(
                &op,
                &x1,
                Driver::Segmenting(Schedule::picard()),
                &RunOptions {
                    max_iter: rule.max_iter,
                    stop: discrepancy_stop(&rule, eps).map_err(|e| e.to_string())?,
                    ..Default::default()
                },
            )
            .map_err(|e| e.to_string())?;
            let bound = discrepancy_index_bound(mu, err0, eps);
            if (record.k_stop as f64) > bound {
                return Err(format!(
                    "eps={eps} seed={seed}: k={} > {bound}",
                    record.k_stop
                ));
            }
        }
    }
    Ok(())
}
