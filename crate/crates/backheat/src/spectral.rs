//! Spectral coefficient representation on the sine eigenbasis.
//!
//! Functions on Ω = (−π, π) are stored as truncated coefficient vectors with
//! respect to the un-normalized basis {sin(j t)}, the eigenbasis of the
//! square root of the negative Laplacian. Every operator in this crate is
//! diagonal in that basis, so a grid is just its eigenvalue sequence and all
//! computations are exact on the retained modes.
//!
//! The full Sobolev scale is available through [`CoefVec::hs_norm`]:
//! ‖v‖_s² = Σ_j (1 + λ_j²)^s v_j², with negative `s` giving the duality-scale
//! norm (on a truncated grid the dual norm coincides with the weight
//! (1 + λ²)^{−s}).

use std::sync::Arc;

use crate::error::{Error, Result};

/// Truncated discrete spectrum of a positive self-adjoint operator.
///
/// Eigenvalues must be strictly positive and nondecreasing; mode indices are
/// 1-based throughout. For the default Laplacian basis λ_j = j.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    eigenvalues: Vec<f64>,
}

impl SpectralGrid {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Arc<Self>> {
        if eigenvalues.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut prev = 0.0;
        for (i, &lam) in eigenvalues.iter().enumerate() {
            if !lam.is_finite() || lam <= 0.0 || lam < prev {
                return Err(Error::InvalidEigenvalues { mode: i + 1 });
            }
            prev = lam;
        }
        Ok(Arc::new(Self { eigenvalues }))
    }

    /// Grid with λ_j = j, the 1-D Laplacian square-root spectrum on (−π, π).
    pub fn laplacian_1d(n_modes: usize) -> Arc<Self> {
        Self::new((1..=n_modes).map(|j| j as f64).collect()).expect("positive increasing sequence")
    }

    /// Grid with λ_j = √j. The semigroup decay scales e^{λ_j² T} = e^{jT} are
    /// then geometrically spaced, which is convenient for rate experiments.
    pub fn sqrt_index(n_modes: usize) -> Arc<Self> {
        Self::new((1..=n_modes).map(|j| (j as f64).sqrt()).collect())
            .expect("positive increasing sequence")
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// λ̄, the smallest point of the discrete spectrum.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// Checks that two grids are interoperable (same object or equal values).
pub fn same_grid(a: &Arc<SpectralGrid>, b: &Arc<SpectralGrid>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Coefficient vector of a function in the sine eigenbasis.
///
/// Immutable after construction; every operation returns a new vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefVec {
    grid: Arc<SpectralGrid>,
    coef: Vec<f64>,
}

impl CoefVec {
    pub fn new(grid: Arc<SpectralGrid>, coef: Vec<f64>) -> Result<Self> {
        if coef.len() != grid.n_modes() {
            return Err(Error::LengthMismatch {
                len: coef.len(),
                expected: grid.n_modes(),
            });
        }
        if let Some(i) = coef.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteCoefficient { mode: i + 1 });
        }
        Ok(Self { grid, coef })
    }

    pub fn zeros(grid: Arc<SpectralGrid>) -> Self {
        let n = grid.n_modes();
        Self {
            grid,
            coef: vec![0.0; n],
        }
    }

    /// Vector with a single nonzero coefficient on the given 1-based mode.
    pub fn single_mode(grid: Arc<SpectralGrid>, mode: usize, amplitude: f64) -> Result<Self> {
        if mode == 0 || mode > grid.n_modes() {
            return Err(Error::LengthMismatch {
                len: mode,
                expected: grid.n_modes(),
            });
        }
        let mut coef = vec![0.0; grid.n_modes()];
        coef[mode - 1] = amplitude;
        Self::new(grid, coef)
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn coef(&self) -> &[f64] {
        &self.coef
    }

    pub fn is_zero(&self) -> bool {
        self.coef.iter().all(|&c| c == 0.0)
    }

    /// Sobolev norm ‖v‖_s = √(Σ_j (1 + λ_j²)^s v_j²).
    ///
    /// Any real `s` is accepted; `s = 0` is the plain ℓ² norm. Non-finite
    /// intermediates are reported instead of silently propagating, naming the
    /// offending mode.
    pub fn hs_norm(&self, s: f64) -> Result<f64> {
        let mut sum = 0.0;
        for (i, (&lam, &c)) in self.grid.eigenvalues().iter().zip(&self.coef).enumerate() {
            let term = if c == 0.0 {
                0.0
            } else {
                (1.0 + lam * lam).powf(s) * (c * c)
            };
            if !term.is_finite() {
                return Err(Error::NormOverflow { mode: i + 1, s });
            }
            sum += term;
        }
        if !sum.is_finite() {
            return Err(Error::NormOverflow {
                mode: self.coef.len(),
                s,
            });
        }
        Ok(sum.sqrt())
    }

    /// ℓ² norm; identical to `hs_norm(0)` but infallible for finite vectors
    /// of moderate size.
    pub fn l2_norm(&self) -> f64 {
        self.coef.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// ℓ² inner product ⟨u, v⟩ = Σ_j u_j v_j.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_grid(other)?;
        Ok(self.coef.iter().zip(&other.coef).map(|(a, b)| a * b).sum())
    }

    /// Diagonal functional calculus: (g(Λ) v)_j = g(λ_j) v_j.
    pub fn apply_spectral_function<F>(&self, g: F) -> Result<Self>
    where
        F: Fn(f64) -> f64,
    {
        let mut coef = Vec::with_capacity(self.coef.len());
        for (i, (&lam, &c)) in self.grid.eigenvalues().iter().zip(&self.coef).enumerate() {
            let factor = g(lam);
            if !factor.is_finite() {
                return Err(Error::SpectralFunctionDomain {
                    mode: i + 1,
                    eigenvalue: lam,
                });
            }
            coef.push(factor * c);
        }
        Self::new(self.grid.clone(), coef)
    }

    /// α·self + β·other on a shared grid.
    pub fn add_scaled(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        self.check_grid(other)?;
        let coef = self
            .coef
            .iter()
            .zip(&other.coef)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Self::new(self.grid.clone(), coef)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(1.0, other, -1.0)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            coef: self.coef.iter().map(|c| alpha * c).collect(),
        }
    }

    /// Pointwise evaluation Σ_j v_j sin(j t) at the given points in (−π, π).
    pub fn synthesize(&self, points: &[f64]) -> Result<Vec<f64>> {
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinitePoint);
        }
        Ok(points
            .iter()
            .map(|&t| {
                self.coef
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| c * ((i + 1) as f64 * t).sin())
                    .sum()
            })
            .collect())
    }

    pub fn check_grid(&self, other: &Self) -> Result<()> {
        if same_grid(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// One-line JSON array of the coefficients. The shortest round-trip
    /// float formatting is used, so parsing back recovers each coefficient
    /// bit-exactly (stronger than the required 17 significant digits).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.coef).expect("finite floats serialize")
    }

    pub fn from_json_line(grid: Arc<SpectralGrid>, line: &str) -> Result<Self> {
        let coef: Vec<f64> = serde_json::from_str(line).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(grid, coef)
    }

    /// CSV form with a header row, one `mode,coefficient` line per mode.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,coefficient\n");
        for (i, c) in self.coef.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, c));
        }
        out
    }

    pub fn from_csv(grid: Arc<SpectralGrid>, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "mode,coefficient" => {}
            _ => return Err(Error::Parse("missing `mode,coefficient` header".into())),
        }
        let mut coef = vec![0.0; grid.n_modes()];
        let mut seen = 0usize;
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (m, c) = line.split_once(',').ok_or_else(|| {
                Error::Parse(format!("line {}: expected mode,coefficient", lineno + 2))
            })?;
            let mode: usize = m
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad mode index", lineno + 2)))?;
            let value: f64 = c
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad coefficient", lineno + 2)))?;
            if mode == 0 || mode > coef.len() {
                return Err(Error::Parse(format!(
                    "line {}: mode {} outside 1..={}",
                    lineno + 2,
                    mode,
                    coef.len()
                )));
            }
            coef[mode - 1] = value;
            seen += 1;
        }
        if seen != coef.len() {
            return Err(Error::Parse(format!(
                "expected {} coefficient rows, found {}",
                coef.len(),
                seen
            )));
        }
        Self::new(grid, coef)
    }
}
