//! Forward heat semigroup, the exact backward inversion, and the affine
//! fixed-point operator whose fixed point is the initial profile.
//!
//! Everything is diagonal in the sine eigenbasis. Writing S = exp(−Λ²T) for
//! the solution operator of the forward problem, the reconstruction task
//! S x̄ = f is recast as the fixed point equation of
//!
//!   T φ = φ − γ (S φ − f) = (I − γ exp(−Λ²T)) φ + γ f,
//!
//! with relaxation γ chosen inside (0, 2 exp(λ̄²T)) so that the linear part
//! T_l = I − γ exp(−Λ²T) is nonexpansive. Backward amplification e^{λ_j²T}
//! grows doubly exponentially in the mode index, which is exactly the
//! ill-posedness this crate is about: [`backward_exact_oracle`] exists to
//! demonstrate it and to verify small cases, not as a solver.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spectral::{CoefVec, SpectralGrid};

/// Problem instance: grid, time horizon T and relaxation γ.
///
/// Construction enforces the strict-interior admissibility γ ∈ (0, 2e^{λ̄²T});
/// equality with the bound is rejected since the linear-part eigenvalue at λ̄
/// would reach −1 and nonexpansivity would fail.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatProblem {
    grid: Arc<SpectralGrid>,
    horizon: f64,
    gamma: f64,
}

impl HeatProblem {
    pub fn new(grid: Arc<SpectralGrid>, horizon: f64, gamma: f64) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidHorizon { horizon });
        }
        let bounds = gamma_bounds(&grid, horizon)?;
        if !gamma.is_finite() || gamma <= 0.0 || gamma >= bounds.loose_upper {
            return Err(Error::GammaOutOfRange {
                gamma,
                upper: bounds.loose_upper,
            });
        }
        let problem = Self {
            grid,
            horizon,
            gamma,
        };
        // Guard against rounding at the interval edge: the most negative
        // linear-part eigenvalue sits at λ̄ and must stay above −1.
        let tau_min = problem.tl_eigenvalue(problem.grid.min_eigenvalue());
        if tau_min <= -1.0 {
            return Err(Error::GammaOutOfRange {
                gamma,
                upper: bounds.loose_upper,
            });
        }
        Ok(problem)
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Semigroup symbol e^{−λ²T}.
    pub fn semigroup_factor(&self, lam: f64) -> f64 {
        (-lam * lam * self.horizon).exp()
    }

    /// Eigenvalue of T_l at λ: τ = 1 − γ e^{−λ²T}.
    ///
    /// Mathematically τ < 1 always holds; in floating point the semigroup
    /// factor underflows to zero once λ²T exceeds ~745 and the mode is then
    /// frozen at τ = 1 exactly.
    pub fn tl_eigenvalue(&self, lam: f64) -> f64 {
        1.0 - self.gamma * self.semigroup_factor(lam)
    }

    pub fn tl_eigenvalues(&self) -> Vec<f64> {
        self.grid
            .eigenvalues()
            .iter()
            .map(|&l| self.tl_eigenvalue(l))
            .collect()
    }
}

/// Admissibility interval endpoints for γ.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaBounds {
    /// λ̄ = min of the discrete spectrum.
    pub lambda_bar: f64,
    /// λ̃ = (λ̄² − T⁻¹ ln 2)^{1/2}, when the radicand is nonnegative.
    pub lambda_tilde: Option<f64>,
    /// 2 e^{λ̄²T}: nonexpansivity bound (open interval).
    pub loose_upper: f64,
    /// 2 e^{λ̃²T}: injectivity bound, defined iff λ̃ is real. Algebraically
    /// equal to e^{λ̄²T}; computed through λ̃ and cross-checked in tests.
    pub strict_upper: Option<f64>,
}

/// Both admissibility bounds for γ on the given grid and horizon.
///
/// The strict (injectivity) bound is a tagged absence, not an error, when
/// λ̄²T < ln 2 makes λ̃ imaginary.
pub fn gamma_bounds(grid: &SpectralGrid, horizon: f64) -> Result<GammaBounds> {
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::InvalidHorizon { horizon });
    }
    let lambda_bar = grid.min_eigenvalue();
    let loose_upper = 2.0 * (lambda_bar * lambda_bar * horizon).exp();
    let tilde_sq = lambda_bar * lambda_bar - 2.0f64.ln() / horizon;
    let (lambda_tilde, strict_upper) = if tilde_sq >= 0.0 {
        let lt = tilde_sq.sqrt();
        (Some(lt), Some(2.0 * (lt * lt * horizon).exp()))
    } else {
        (None, None)
    };
    Ok(GammaBounds {
        lambda_bar,
        lambda_tilde,
        loose_upper,
        strict_upper,
    })
}

/// Forward problem: evolves an initial profile φ to time T,
/// (result)_j = e^{−λ_j²T} φ_j. Never overflows.
pub fn forward_solve(problem: &HeatProblem, phi: &CoefVec) -> Result<CoefVec> {
    check_on_grid(problem, phi)?;
    let t = problem.horizon;
    phi.apply_spectral_function(|lam| (-lam * lam * t).exp())
}

/// Exact backward inversion (result)_j = e^{λ_j²T} f_j.
///
/// This is the ill-posed map: amplification e^{λ_j²T} overflows for rough
/// data on large grids, and the resulting error is expected behavior there.
/// Modes with a zero data coefficient are exact zeros regardless of the
/// amplification factor.
pub fn backward_exact_oracle(problem: &HeatProblem, f: &CoefVec) -> Result<CoefVec> {
    check_on_grid(problem, f)?;
    let t = problem.horizon;
    let mut coef = Vec::with_capacity(f.coef().len());
    for (i, (&lam, &c)) in problem.grid.eigenvalues().iter().zip(f.coef()).enumerate() {
        let value = if c == 0.0 {
            0.0
        } else {
            (lam * lam * t).exp() * c
        };
        if !value.is_finite() {
            return Err(Error::OracleOverflow {
                mode: i + 1,
                exponent: lam * lam * t,
            });
        }
        coef.push(value);
    }
    CoefVec::new(problem.grid.clone(), coef)
}

/// Linear part of the fixed-point operator: (T_l φ)_j = (1 − γ e^{−λ_j²T}) φ_j.
pub fn tl_apply(problem: &HeatProblem, phi: &CoefVec) -> Result<CoefVec> {
    check_on_grid(problem, phi)?;
    let t = problem.horizon;
    let gamma = problem.gamma;
    phi.apply_spectral_function(|lam| 1.0 - gamma * (-lam * lam * t).exp())
}

/// The affine fixed-point operator T φ = φ − γ (S φ − f).
///
/// `apply` goes through [`forward_solve`] — the composition form — rather
/// than the equivalent diagonal form (1 − γe^{−λ²T})φ_j + γ f_j; tests hold
/// the two paths against each other.
#[derive(Debug, Clone)]
pub struct AffineFixedPointOp {
    problem: HeatProblem,
    data: CoefVec,
}

impl AffineFixedPointOp {
    pub fn new(problem: HeatProblem, data: CoefVec) -> Result<Self> {
        check_on_grid(&problem, &data)?;
        Ok(Self { problem, data })
    }

    pub fn problem(&self) -> &HeatProblem {
        &self.problem
    }

    pub fn data(&self) -> &CoefVec {
        &self.data
    }

    /// T φ = φ − γ (w(T) − f) with w(T) = forward_solve(φ).
    pub fn apply(&self, phi: &CoefVec) -> Result<CoefVec> {
        check_on_grid(&self.problem, phi)?;
        phi.check_grid(&self.data)?;
        let w = forward_solve(&self.problem, phi)?;
        let gamma = self.problem.gamma;
        let coef = phi
            .coef()
            .iter()
            .zip(w.coef())
            .zip(self.data.coef())
            .map(|((&p, &w), &f)| p - gamma * (w - f))
            .collect();
        CoefVec::new(self.problem.grid.clone(), coef)
    }
}

fn check_on_grid(problem: &HeatProblem, v: &CoefVec) -> Result<()> {
    if crate::spectral::same_grid(&problem.grid, v.grid()) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(n: usize, horizon: f64, gamma: f64) -> HeatProblem {
        HeatProblem::new(SpectralGrid::laplacian_1d(n), horizon, gamma).unwrap()
    }

    /// Diagonal form of T (the representation tests cross-check against).
    fn diagonal_apply(p: &HeatProblem, data: &CoefVec, phi: &CoefVec) -> CoefVec {
        let coef = p
            .grid()
            .eigenvalues()
            .iter()
            .zip(phi.coef())
            .zip(data.coef())
            .map(|((&lam, &x), &f)| p.tl_eigenvalue(lam) * x + p.gamma() * f)
            .collect();
        CoefVec::new(p.grid().clone(), coef).unwrap()
    }

    #[test]
    fn problem_validates_inputs() {
        let g = SpectralGrid::laplacian_1d(4);
        assert!(matches!(
            HeatProblem::new(g.clone(), 0.0, 1.0),
            Err(Error::InvalidHorizon { .. })
        ));
        assert!(matches!(
            HeatProblem::new(g.clone(), 1.0, 0.0),
            Err(Error::GammaOutOfRange { .. })
        ));
        // equality with the loose bound is rejected (open interval)
        let upper = 2.0 * 1.0f64.exp();
        assert!(HeatProblem::new(g.clone(), 1.0, upper).is_err());
        assert!(HeatProblem::new(g, 1.0, upper * (1.0 - 1e-12)).is_ok());
    }

    #[test]
    fn forward_solve_examples() {
        let p = problem(2, 1.0, 1.0);
        let zero = CoefVec::zeros(p.grid().clone());
        assert!(forward_solve(&p, &zero).unwrap().is_zero());

        let phi = CoefVec::new(p.grid().clone(), vec![1.0, 1.0]).unwrap();
        let out = forward_solve(&p, &phi).unwrap();
        assert!((out.coef()[0] - 0.36787944117144233).abs() < 1e-15);
        assert!((out.coef()[1] - 0.01831563888873418).abs() < 1e-17);

        // sin t evolved over T = 1 keeps mode 1 with factor e^{-1}
        let e1 = CoefVec::single_mode(p.grid().clone(), 1, 1.0).unwrap();
        let out = forward_solve(&p, &e1).unwrap();
        assert_eq!(out.coef()[0], (-1.0f64).exp());
        assert_eq!(out.coef()[1], 0.0);
    }

    #[test]
    fn oracle_examples() {
        let p = problem(2, 1.0, 1.0);
        assert!(backward_exact_oracle(&p, &CoefVec::zeros(p.grid().clone()))
            .unwrap()
            .is_zero());

        let f = CoefVec::single_mode(p.grid().clone(), 1, (-1.0f64).exp()).unwrap();
        let xbar = backward_exact_oracle(&p, &f).unwrap();
        assert!((xbar.coef()[0] - 1.0).abs() < 1e-15);

        let p64 = problem(64, 1.0, 1.0);
        let bad = CoefVec::single_mode(p64.grid().clone(), 64, 1.0).unwrap();
        match backward_exact_oracle(&p64, &bad) {
            Err(Error::OracleOverflow { mode: 64, exponent }) => {
                assert_eq!(exponent, 4096.0);
            }
            other => panic!("expected overflow at mode 64, got {other:?}"),
        }
    }

    #[test]
    fn oracle_ignores_dead_modes_with_zero_data() {
        // single-mode data on a large grid: the huge amplification on the
        // upper modes never touches a zero coefficient
        let p = problem(64, 1.0, 1.0);
        let f = CoefVec::single_mode(p.grid().clone(), 1, (-1.0f64).exp()).unwrap();
        let xbar = backward_exact_oracle(&p, &f).unwrap();
        assert!((xbar.coef()[0] - 1.0).abs() < 1e-15);
        assert!(xbar.coef()[1..].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn round_trip_forward_of_oracle_is_identity() {
        let p = problem(4, 1.0, 1.0);
        let f = CoefVec::new(p.grid().clone(), vec![0.5, -0.25, 0.125, 1e-3]).unwrap();
        let back = backward_exact_oracle(&p, &f).unwrap();
        let again = forward_solve(&p, &back).unwrap();
        for (a, b) in again.coef().iter().zip(f.coef()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{a} vs {b}");
        }
    }

    #[test]
    fn gamma_bounds_worked_example() {
        // λ̄ = 1, T = 1: loose 2e, strict e via λ̃ = (1 − ln 2)^{1/2}
        let g = SpectralGrid::laplacian_1d(8);
        let b = gamma_bounds(&g, 1.0).unwrap();
        assert_eq!(b.lambda_bar, 1.0);
        let lt = (1.0 - 2.0f64.ln()).sqrt();
        assert!((b.lambda_tilde.unwrap() - lt).abs() < 1e-16);
        assert!((b.loose_upper - 2.0 * 1.0f64.exp()).abs() < 1e-14);
        assert!((b.strict_upper.unwrap() - 1.0f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn gamma_bounds_edge_cases() {
        let g = SpectralGrid::laplacian_1d(3);
        // λ̄²T = ln 2 exactly: λ̃ = 0, strict bound 2
        let b = gamma_bounds(&g, 2.0f64.ln()).unwrap();
        assert_eq!(b.lambda_tilde.unwrap(), 0.0);
        assert_eq!(b.strict_upper.unwrap(), 2.0);

        // λ̄²T = 0.5 < ln 2: strict bound undefined
        let b = gamma_bounds(&g, 0.5).unwrap();
        assert!(b.lambda_tilde.is_none());
        assert!(b.strict_upper.is_none());
        assert!(b.loose_upper > 0.0);
    }

    #[test]
    fn strict_bound_identity() {
        // 2 e^{λ̃²T} = e^{λ̄²T} whenever defined
        for &(lam_bar, horizon) in &[(1.0, 1.0), (1.0, 0.7), (2.0, 0.25), (0.5, 3.0), (3.0, 1.5)] {
            let g = SpectralGrid::new(vec![lam_bar, lam_bar + 1.0]).unwrap();
            let b = gamma_bounds(&g, horizon).unwrap();
            if let Some(strict) = b.strict_upper {
                let direct = (lam_bar * lam_bar * horizon).exp();
                assert!(
                    (strict - direct).abs() <= 1e-14 * direct,
                    "λ̄={lam_bar} T={horizon}: {strict} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn tl_apply_examples() {
        let p = problem(3, 1.0, 1.0);
        assert!(tl_apply(&p, &CoefVec::zeros(p.grid().clone()))
            .unwrap()
            .is_zero());

        let e1 = CoefVec::single_mode(p.grid().clone(), 1, 1.0).unwrap();
        let out = tl_apply(&p, &e1).unwrap();
        assert!((out.coef()[0] - 0.6321205588285577).abs() < 1e-15);
    }

    #[test]
    fn tl_near_gamma_boundary_stays_contractive() {
        let g = SpectralGrid::laplacian_1d(2);
        let loose = 2.0 * 1.0f64.exp();
        let delta = 1e-9;
        let p = HeatProblem::new(g, 1.0, loose - delta).unwrap();
        let tau = p.tl_eigenvalue(1.0);
        // τ = −1 + δ e^{−λ̄²T}
        assert!((tau + 1.0 - delta * (-1.0f64).exp()).abs() < 1e-12);
        assert!(tau.abs() < 1.0);
    }

    #[test]
    fn no_unit_eigenvalue_on_resolvable_grid() {
        // strict τ < 1 is float-checkable while e^{−λ²T} stays above ulp(1);
        // beyond that the mode underflows to a frozen τ = 1
        let p = problem(5, 1.0, 1.0);
        let max_tau = p
            .tl_eigenvalues()
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(max_tau < 1.0);

        let frozen = problem(64, 1.0, 1.0);
        assert_eq!(frozen.tl_eigenvalue(64.0), 1.0);
    }

    #[test]
    fn fixed_point_examples() {
        let p = problem(2, 1.0, 1.0);
        let zero = CoefVec::zeros(p.grid().clone());
        let op = AffineFixedPointOp::new(p.clone(), zero.clone()).unwrap();
        assert!(op.apply(&zero).unwrap().is_zero());

        // one application from x = 0 lands at γ f
        let f = CoefVec::single_mode(p.grid().clone(), 1, (-1.0f64).exp()).unwrap();
        let op = AffineFixedPointOp::new(p.clone(), f.clone()).unwrap();
        let x2 = op.apply(&zero).unwrap();
        assert!((x2.coef()[0] - 0.36787944117144233).abs() < 1e-15);

        // the oracle solution is a fixed point
        let xbar = backward_exact_oracle(&p, &f).unwrap();
        let image = op.apply(&xbar).unwrap();
        let diff = image.sub(&xbar).unwrap().l2_norm();
        assert!(diff <= 1e-12 * xbar.l2_norm().max(1.0), "defect {diff}");
    }

    #[test]
    fn composition_path_matches_diagonal_form() {
        let p = problem(6, 0.8, 1.7);
        let data = CoefVec::new(p.grid().clone(), vec![0.3, -0.7, 0.11, 0.0, 2.5, -1e-4]).unwrap();
        let phi = CoefVec::new(p.grid().clone(), vec![-1.0, 0.5, 0.25, 3.0, -0.125, 0.75]).unwrap();
        let op = AffineFixedPointOp::new(p.clone(), data.clone()).unwrap();
        let a = op.apply(&phi).unwrap();
        let b = diagonal_apply(&p, &data, &phi);
        for (x, y) in a.coef().iter().zip(b.coef()) {
            assert!((x - y).abs() <= 1e-15 * y.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn degenerate_gamma_annihilates_one_mode() {
        // γ = e^{λ_j²T} is admissible (it is below 2e^{λ̄²T} for j = 1) and
        // makes τ_j exactly zero: T_l annihilates that mode and the
        // iteration solves it in a single step
        let g = SpectralGrid::laplacian_1d(3);
        let gamma = 1.0f64.exp();
        let p = HeatProblem::new(g.clone(), 1.0, gamma).unwrap();
        assert_eq!(p.tl_eigenvalue(1.0), 0.0);
        let f = CoefVec::new(g.clone(), vec![0.2, 0.1, 0.05]).unwrap();
        let op = AffineFixedPointOp::new(p, f.clone()).unwrap();
        let x1 = CoefVec::new(g, vec![5.0, 1.0, -2.0]).unwrap();
        let x2 = op.apply(&x1).unwrap();
        // the composition path rounds differently than the collapsed form
        let expected = gamma * 0.2;
        assert!((x2.coef()[0] - expected).abs() <= 1e-14 * expected.abs().max(x1.coef()[0]));
    }

    #[test]
    fn grid_mismatch_rejected() {
        let p = problem(3, 1.0, 1.0);
        let other = CoefVec::zeros(SpectralGrid::laplacian_1d(4));
        assert!(matches!(
            forward_solve(&p, &other),
            Err(Error::GridMismatch)
        ));
        assert!(matches!(tl_apply(&p, &other), Err(Error::GridMismatch)));
    }
}
