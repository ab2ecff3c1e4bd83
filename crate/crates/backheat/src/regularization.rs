//! Noisy data, discrepancy stopping and convergence-rate verification.
//!
//! Measured data f_ε is only known up to ‖f − f_ε‖ ≤ ε. Iterating past the
//! point where the residual reaches the noise floor amplifies noise instead
//! of improving the reconstruction, so runs stop at
//!
//!   k(ε, f_ε) = min { k : ‖γ f_ε − (I − T_l) x_k^ε‖ ≤ μ ε },   μ > 1.
//!
//! This module constructs calibrated perturbations (‖f − f_ε‖₀ = ε exactly,
//! deterministic per seed), evaluates residuals, builds solutions satisfying
//! logarithmic source conditions x̄ − x₁ = F(I − T_l) y with
//! F(λ) = (ln(e/λ))^{−p}, and fits power / log-power rate models to sweep
//! outputs.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use crate::error::{Error, Result};
use crate::heat::{forward_solve, AffineFixedPointOp, HeatProblem};
use crate::mann::{MannOperator, StopRule};
use crate::spectral::CoefVec;

/// Shape of the injected perturbation before calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseProfile {
    /// All mass on the last (most amplified) mode, sign drawn from the seed.
    SingleModeWorst,
    /// Independent standard normal coefficients on every mode.
    White,
    /// Standard normal coefficients on the upper half of the modes only.
    HighMode,
}

impl NoiseProfile {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseProfile::SingleModeWorst => "single_mode_worst",
            NoiseProfile::White => "white",
            NoiseProfile::HighMode => "high_mode",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "single_mode_worst" => Ok(NoiseProfile::SingleModeWorst),
            "white" => Ok(NoiseProfile::White),
            "high_mode" => Ok(NoiseProfile::HighMode),
            other => Err(Error::Parse(format!("unknown noise profile `{other}`"))),
        }
    }
}

/// Exact data, perturbed data and the calibrated noise level.
#[derive(Debug, Clone)]
pub struct NoisyData {
    pub f: CoefVec,
    pub f_eps: CoefVec,
    pub eps: f64,
}

/// Perturbs `f` so that ‖f − f_ε‖₀ equals `eps` exactly (up to a final
/// rescaling rounding): the perturbation is drawn per profile from a
/// ChaCha stream keyed by `seed`, then normalized to `eps`. `eps = 0`
/// returns the data unchanged.
pub fn add_noise(f: &CoefVec, eps: f64, seed: u64, profile: NoiseProfile) -> Result<NoisyData> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::NegativeNoiseLevel { eps });
    }
    if eps == 0.0 {
        return Ok(NoisyData {
            f: f.clone(),
            f_eps: f.clone(),
            eps,
        });
    }
    let n = f.coef().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = vec![0.0f64; n];
    match profile {
        NoiseProfile::SingleModeWorst => {
            noise[n - 1] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        NoiseProfile::White => {
            for c in noise.iter_mut() {
                *c = StandardNormal.sample(&mut rng);
            }
        }
        NoiseProfile::HighMode => {
            for c in noise.iter_mut().skip(n / 2) {
                *c = StandardNormal.sample(&mut rng);
            }
            if noise.iter().all(|&c| c == 0.0) {
                // single-mode grid: upper half is empty, fall back to the top mode
                noise[n - 1] = 1.0;
            }
        }
    }
    let norm = noise.iter().map(|c| c * c).sum::<f64>().sqrt();
    let scale = eps / norm;
    let coef = f
        .coef()
        .iter()
        .zip(&noise)
        .map(|(&a, &d)| a + scale * d)
        .collect();
    Ok(NoisyData {
        f: f.clone(),
        f_eps: CoefVec::new(f.grid().clone(), coef)?,
        eps,
    })
}

/// Iteration residual r = γ·data − (I − T_l) x, componentwise
/// γ·data_j − γ e^{−λ_j²T} x_j. The same formula serves the exact residual
/// (data = f) and the noisy one (data = f_ε).
pub fn residual(problem: &HeatProblem, data: &CoefVec, x: &CoefVec) -> Result<CoefVec> {
    data.check_grid(x)?;
    if !crate::spectral::same_grid(problem.grid(), data.grid()) {
        return Err(Error::GridMismatch);
    }
    let gamma = problem.gamma();
    let t = problem.horizon();
    let coef = problem
        .grid()
        .eigenvalues()
        .iter()
        .zip(data.coef())
        .zip(x.coef())
        .map(|((&lam, &f), &xj)| gamma * f - gamma * (-lam * lam * t).exp() * xj)
        .collect();
    CoefVec::new(problem.grid().clone(), coef)
}

impl MannOperator for AffineFixedPointOp {
    fn apply(&self, v: &CoefVec) -> Result<CoefVec> {
        AffineFixedPointOp::apply(self, v)
    }

    fn residual(&self, x: &CoefVec) -> Result<CoefVec> {
        residual(self.problem(), self.data(), x)
    }

    fn describe(&self) -> serde_json::Value {
        json!({
            "kind": "affine-heat-fixed-point",
            "n_modes": self.problem().grid().n_modes(),
            "horizon": self.problem().horizon(),
            "gamma": self.problem().gamma(),
        })
    }
}

/// Discrepancy factor and safety cap.
///
/// μ > 1 is required throughout; rate statements under source conditions
/// additionally need μ > 2, which callers assert via [`StoppingRule::require_mu_above_two`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub mu: f64,
    pub max_iter: usize,
}

impl StoppingRule {
    pub fn new(mu: f64, max_iter: usize) -> Result<Self> {
        if !mu.is_finite() || mu <= 1.0 {
            return Err(Error::StoppingConfig(format!(
                "discrepancy factor mu must exceed 1, got {mu}"
            )));
        }
        if max_iter == 0 {
            return Err(Error::StoppingConfig("max_iter must be at least 1".into()));
        }
        Ok(Self { mu, max_iter })
    }

    /// Source-condition rate contexts demand μ > 2.
    pub fn require_mu_above_two(&self) -> Result<()> {
        if self.mu > 2.0 {
            Ok(())
        } else {
            Err(Error::StoppingConfig(format!(
                "source-condition rate experiments need mu > 2, got {}",
                self.mu
            )))
        }
    }
}

/// Builds the discrepancy stopping predicate ‖r_k^ε‖₀ ≤ μ ε.
///
/// `eps = 0` is a configuration error: exact data should use a plain
/// residual tolerance instead.
pub fn discrepancy_stop(rule: &StoppingRule, eps: f64) -> Result<StopRule> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::StoppingConfig(format!(
            "discrepancy stopping needs a positive noise level, got {eps}; use a residual tolerance for exact data"
        )));
    }
    Ok(StopRule::Discrepancy { mu: rule.mu, eps })
}

/// A-priori index bound implied by the discrepancy principle:
/// k(ε, f_ε) ≤ ⌈(μ−1)^{−2} ‖x̄ − x₁‖₀² ε^{−2}⌉ + 1.
pub fn discrepancy_index_bound(mu: f64, initial_error_norm: f64, eps: f64) -> f64 {
    let b = initial_error_norm * initial_error_norm / ((mu - 1.0) * (mu - 1.0) * eps * eps);
    b.ceil() + 1.0
}

/// Defect of the per-step energy identity for exact-data Picard steps:
///
///   ‖x̄ − x_{j+1}‖² = ‖x̄ − x_j‖² − ‖γf − (I−T_l)x_j‖²
///                     − 2⟨(I−T_l)(x̄ − x_j), T_l(x̄ − x_j)⟩.
///
/// Returns |LHS − RHS|; for x_{j+1} produced from x_j by one A = I step with
/// exact data this is pure floating-point noise, ≤ 1e−12·max(1, ‖x̄ − x_j‖²).
pub fn energy_identity_check(
    problem: &HeatProblem,
    f: &CoefVec,
    xbar: &CoefVec,
    x_j: &CoefVec,
    x_j1: &CoefVec,
) -> Result<f64> {
    let e_next = xbar.sub(x_j1)?;
    let lhs = e_next.dot(&e_next)?;

    let e = xbar.sub(x_j)?;
    let r = residual(problem, f, x_j)?;
    let tl_e = crate::heat::tl_apply(problem, &e)?;
    let i_minus_tl_e = e.sub(&tl_e)?;
    let rhs = e.dot(&e)? - r.dot(&r)? - 2.0 * i_minus_tl_e.dot(&tl_e)?;
    Ok((lhs - rhs).abs())
}

/// Logarithmic source filter F(λ) = (ln(e/λ))^{−p} for λ > 0, F(0) = 0.
///
/// Defined for λ < e; spectral values ≥ e would make the logarithm
/// nonpositive and are reported as a domain error. For an admissible γ the
/// spectral values of I − T_l are γe^{−λ_j²T} < 2 < e, so the error cannot
/// fire on a validated problem; the check guards direct evaluations.
pub fn log_source_filter(value: f64, p: f64) -> Result<f64> {
    if value == 0.0 {
        return Ok(0.0);
    }
    if value <= 0.0 || value.is_nan() {
        return Err(Error::SourceFilterDomain { mode: 0, value });
    }
    // ln(e/λ) evaluated as 1 − ln λ: same function, no overflow when λ is
    // subnormal (e/λ would exceed the float range long before λ hits zero).
    filter_from_log_argument(1.0 - value.ln(), p)
        .map_err(|_| Error::SourceFilterDomain { mode: 0, value })
}

/// F in terms of its log argument: given ℓ = ln(e/λ), returns ℓ^{−p}.
///
/// Building source conditions goes through this form with
/// ℓ = 1 − ln γ + λ_j²T computed directly from the problem parameters, so the
/// filter value stays exact even where the spectral value γe^{−λ_j²T}
/// underflows to zero in floating point.
fn filter_from_log_argument(logarg: f64, p: f64) -> Result<f64> {
    if logarg <= 0.0 || !logarg.is_finite() {
        return Err(Error::SourceFilterDomain {
            mode: 0,
            value: f64::NAN,
        });
    }
    Ok(logarg.powf(-p))
}

/// Exponent and source element of a logarithmic source condition.
#[derive(Debug, Clone)]
pub struct SourceCondition {
    pub p: f64,
    pub y: CoefVec,
}

impl SourceCondition {
    pub fn new(p: f64, y: CoefVec) -> Result<Self> {
        if !p.is_finite() || p <= 0.0 {
            return Err(Error::StoppingConfig(format!(
                "source-condition exponent p must be positive, got {p}"
            )));
        }
        Ok(Self { p, y })
    }
}

/// Solution/data pair constructed from a source condition.
#[derive(Debug, Clone)]
pub struct SourceProblem {
    /// x̄ = x₁ + F(I − T_l) y.
    pub xbar: CoefVec,
    /// f = e^{−Λ²T} x̄, so x̄ is exactly the solution for this data.
    pub data: CoefVec,
}

/// Builds x̄ = x₁ + F(I − T_l) y and the induced exact data f = S x̄.
///
/// The spectral values of I − T_l are γ e^{−λ_j²T}; at γ = 1, T = 1 on the
/// Laplacian grid the filter values collapse to (1 + j²)^{−p}, which is what
/// makes the logarithmic condition equivalent to H^{2p} regularity of
/// x̄ − x₁.
pub fn source_condition_build(
    problem: &HeatProblem,
    sc: &SourceCondition,
    x1: &CoefVec,
) -> Result<SourceProblem> {
    if !crate::spectral::same_grid(problem.grid(), sc.y.grid()) {
        return Err(Error::GridMismatch);
    }
    x1.check_grid(&sc.y)?;
    let gamma = problem.gamma();
    let t = problem.horizon();
    let mut coef = Vec::with_capacity(x1.coef().len());
    for (i, ((&lam, &y_j), &x1_j)) in problem
        .grid()
        .eigenvalues()
        .iter()
        .zip(sc.y.coef())
        .zip(x1.coef())
        .enumerate()
    {
        // ln(e / (γ e^{−λ²T})) = 1 − ln γ + λ²T
        let logarg = 1.0 - gamma.ln() + lam * lam * t;
        let filtered =
            filter_from_log_argument(logarg, sc.p).map_err(|_| Error::SourceFilterDomain {
                mode: i + 1,
                value: gamma * (-lam * lam * t).exp(),
            })?;
        coef.push(x1_j + filtered * y_j);
    }
    let xbar = CoefVec::new(problem.grid().clone(), coef)?;
    let data = forward_solve(problem, &xbar)?;
    Ok(SourceProblem { xbar, data })
}

/// Unit-norm source element with seeded random signs and amplitudes
/// |y_j| ∝ j^{−1/2}.
///
/// On a truncated discrete spectrum this is the natural generic element for
/// rate experiments: its tail mass Σ_{j>J} y_j² decays like 1/J, matching
/// the continuum spectral measure, so reconstruction errors inherit the
/// filter's own logarithmic decay law. A flat (white) element instead leaves
/// tail mass ∝ (N − J) and the observed decay flattens by half an order.
pub fn seeded_source_element(
    grid: &std::sync::Arc<crate::spectral::SpectralGrid>,
    seed: u64,
) -> CoefVec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coef: Vec<f64> = (1..=grid.n_modes())
        .map(|j| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign / (j as f64).sqrt()
        })
        .collect();
    let norm = coef.iter().map(|c| c * c).sum::<f64>().sqrt();
    for c in coef.iter_mut() {
        *c /= norm;
    }
    CoefVec::new(grid.clone(), coef).expect("finite by construction")
}

/// Rate models fitted by [`rate_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateModel {
    /// value = C·x^α, fitted by linear regression in log–log coordinates.
    Power,
    /// value = C·(ln x)^{−p}, fitted by regressing log value on log ln x.
    /// Points with ln x < 1 are dropped as pre-asymptotic.
    LogPower,
}

/// Fitted rate: `exponent` is α for the power model and p (the positive
/// decay exponent) for the log-power model.
#[derive(Debug, Clone, Copy)]
pub struct RateFit {
    pub exponent: f64,
    pub coefficient: f64,
    pub max_rel_residual: f64,
    pub n_used: usize,
}

/// Least-squares fit of a rate model in transformed coordinates.
///
/// Needs at least 4 points with positive abscissae and values; constant data
/// is rejected as degenerate.
pub fn rate_fit(points: &[(f64, f64)], model: RateModel) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(Error::RateFitInput(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|&(x, v)| x <= 0.0 || v <= 0.0 || !x.is_finite() || !v.is_finite())
    {
        return Err(Error::RateFitInput(
            "abscissae and values must be positive and finite".into(),
        ));
    }

    let transformed: Vec<(f64, f64)> = match model {
        RateModel::Power => points.iter().map(|&(x, v)| (x.ln(), v.ln())).collect(),
        RateModel::LogPower => points
            .iter()
            .filter(|&&(x, _)| x.ln() >= 1.0)
            .map(|&(x, v)| (x.ln().ln(), v.ln()))
            .collect(),
    };
    if transformed.len() < 2 {
        return Err(Error::RateFitInput(
            "too few points with ln(abscissa) >= 1 for a log-power fit".into(),
        ));
    }
    let n = transformed.len() as f64;
    let mean_x = transformed.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = transformed.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = transformed.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = transformed
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    if sxx == 0.0 {
        return Err(Error::RateFitInput(
            "degenerate fit: all abscissae coincide after transformation".into(),
        ));
    }
    let syy: f64 = transformed.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    if syy == 0.0 && sxy == 0.0 {
        return Err(Error::RateFitInput(
            "degenerate fit: constant values".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let coefficient = intercept.exp();

    let (exponent, predict): (f64, Box<dyn Fn(f64) -> f64>) = match model {
        RateModel::Power => (slope, Box::new(move |x: f64| coefficient * x.powf(slope))),
        RateModel::LogPower => (
            -slope,
            Box::new(move |x: f64| coefficient * x.ln().powf(slope)),
        ),
    };
    let mut max_rel = 0.0f64;
    for &(x, v) in points {
        if model == RateModel::LogPower && x.ln() < 1.0 {
            continue;
        }
        let rel = (predict(x) - v).abs() / v;
        max_rel = max_rel.max(rel);
    }
    Ok(RateFit {
        exponent,
        coefficient,
        max_rel_residual: max_rel,
        n_used: transformed.len(),
    })
}
