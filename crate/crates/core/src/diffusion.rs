//! θ-diffusion flux `J = -d^{2θ} ∇(d^{1-2θ} y)` with no-flux boundaries,
//! its conservative finite-volume discretization, the null-space weight ψ
//! and the second-eigenvalue machinery.
//!
//! Writing `a = y / ψ`, the discrete flux at half-node `i + 1/2` is
//! `J = -k_{i+1/2} (a_{i+1} - a_i) / h` with `k = d_{i+1/2}^{2θ} / ∫ d^{2θ-1}`
//! and `d_{i+1/2}` the geometric mean of the neighbouring nodal values.
//! Row `i` of the operator is `(J_{i-1/2} - J_{i+1/2}) / w_i` where `w_i`
//! is the trapezoid weight, so `Σ w_i (L y)_i` telescopes to zero and
//! `L ψ = 0` holds to rounding.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridRef, ScalarField};
use crate::tridiag::{SymTridiagonal, TridiagonalLu};

/// First nonzero Neumann eigenvalue of the Laplacian on the unit interval.
pub const NEUMANN_LAMBDA_STAR: f64 = PI * PI;

/// Residual tolerance (relative to the largest matrix entry) for the
/// second-eigenvalue solve.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-10;

/// Per-species diffusion parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesDiffusion {
    pub theta: f64,
    pub d: ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSpec {
    pub species: Vec<SpeciesDiffusion>,
}

impl DiffusionSpec {
    pub fn new(species: Vec<SpeciesDiffusion>) -> Result<Self> {
        for s in &species {
            validate(s.theta, &s.d)?;
        }
        Ok(Self { species })
    }

    /// Fickian (θ = 1/2) diffusion with constant coefficients.
    pub fn fickian(grid: &GridRef, coefficients: &[f64]) -> Result<Self> {
        Self::new(
            coefficients
                .iter()
                .map(|&c| SpeciesDiffusion {
                    theta: 0.5,
                    d: grid.constant_field(c),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    pub fn assemble(&self) -> Result<Vec<ThetaOperator>> {
        self.species
            .iter()
            .map(|s| ThetaOperator::assemble(s.theta, &s.d))
            .collect()
    }

    /// Ψ(x) as one field per species.
    pub fn psi_weights(&self) -> Result<PsiWeights> {
        let fields = self
            .species
            .iter()
            .map(|s| psi_weight(s.theta, &s.d))
            .collect::<Result<Vec<_>>>()?;
        Ok(PsiWeights { fields })
    }

    /// Eigenvalue floors `π² min d^{2θ} / max d^{2θ-1}` per species.
    pub fn lambda_bounds(&self) -> Vec<f64> {
        self.species
            .iter()
            .map(|s| eigenvalue_lower_bound_unchecked(s.theta, &s.d))
            .collect()
    }
}

fn validate(theta: f64, d: &ScalarField) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidSpec(format!("theta must lie in [0, 1], got {theta}")));
    }
    if let Some((i, &v)) = d
        .values()
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v > 0.0) || !v.is_finite())
    {
        return Err(Error::InvalidSpec(format!(
            "diffusivity must be positive, got {v} at node {i}"
        )));
    }
    Ok(())
}

/// Diagonal null-space weight Ψ(x) = diag(ψ_1(x), …, ψ_m(x)).
#[derive(Debug, Clone, PartialEq)]
pub struct PsiWeights {
    pub fields: Vec<ScalarField>,
}

impl PsiWeights {
    pub fn identity(grid: &GridRef, species: usize) -> Self {
        Self {
            fields: vec![grid.constant_field(1.0); species],
        }
    }

    pub fn species(&self) -> usize {
        self.fields.len()
    }

    pub fn at(&self, species: usize, node: usize) -> f64 {
        self.fields[species][node]
    }

    pub fn max(&self) -> f64 {
        self.fields.iter().map(|f| f.max()).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.fields.iter().map(|f| f.min()).fold(f64::INFINITY, f64::min)
    }
}

/// ψ(x) = d^{2θ-1}(x) / ∫ d^{2θ-1} dx.
pub fn psi_weight(theta: f64, d: &ScalarField) -> Result<ScalarField> {
    validate(theta, d)?;
    Ok(psi_unchecked(theta, d))
}

fn psi_unchecked(theta: f64, d: &ScalarField) -> ScalarField {
    let p = 2.0 * theta - 1.0;
    let raw = if p == 0.0 { d.map(|_| 1.0) } else { d.map(|v| v.powf(p)) };
    let z = raw.integrate();
    raw.map(|v| v / z)
}

/// `π² · min d^{2θ} / max d^{2θ-1}` over the grid nodes.
pub fn eigenvalue_lower_bound(theta: f64, d: &ScalarField) -> Result<f64> {
    validate(theta, d)?;
    Ok(eigenvalue_lower_bound_unchecked(theta, d))
}

fn eigenvalue_lower_bound_unchecked(theta: f64, d: &ScalarField) -> f64 {
    let num = d
        .values()
        .iter()
        .map(|v| v.powf(2.0 * theta))
        .fold(f64::INFINITY, f64::min);
    let den = d
        .values()
        .iter()
        .map(|v| v.powf(2.0 * theta - 1.0))
        .fold(f64::NEG_INFINITY, f64::max);
    NEUMANN_LAMBDA_STAR * num / den
}

/// Discrete single-species θ-diffusion operator.
#[derive(Debug, Clone)]
pub struct ThetaOperator {
    grid: GridRef,
    theta: f64,
    /// half-node conductances k_{i+1/2}, length n - 1
    conductance: Vec<f64>,
    psi: ScalarField,
}

impl ThetaOperator {
    pub fn assemble(theta: f64, d: &ScalarField) -> Result<Self> {
        validate(theta, d)?;
        let grid = d.grid().clone();
        let values = d.values();
        let norm: f64 = if 2.0 * theta - 1.0 == 0.0 {
            1.0
        } else {
            grid.integrate(&values.iter().map(|v| v.powf(2.0 * theta - 1.0)).collect::<Vec<_>>())
        };
        let conductance = values
            .windows(2)
            .map(|w| (w[0] * w[1]).sqrt().powf(2.0 * theta) / norm)
            .collect();
        let psi = null_vector(&grid, values, theta);
        Ok(Self {
            grid,
            theta,
            conductance,
            psi,
        })
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// The discrete null vector, normalized to unit integral.
    pub fn psi(&self) -> &ScalarField {
        &self.psi
    }

    pub fn conductance(&self) -> &[f64] {
        &self.conductance
    }

    /// Fluxes at the n + 1 half-nodes `-1/2, 1/2, …, n - 1/2`; the two
    /// boundary entries are exactly zero.
    pub fn flux(&self, y: &[f64]) -> Vec<f64> {
        let n = self.len();
        let h = self.grid.spacing();
        let psi = self.psi.values();
        let mut j = vec![0.0; n + 1];
        for i in 0..n - 1 {
            let da = y[i + 1] / psi[i + 1] - y[i] / psi[i];
            j[i + 1] = -self.conductance[i] * da / h;
        }
        j
    }

    /// `(L y)_i = (J_{i-1/2} - J_{i+1/2}) / w_i`.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let j = self.flux(y);
        self.grid
            .weights()
            .iter()
            .enumerate()
            .map(|(i, w)| (j[i] - j[i + 1]) / w)
            .collect()
    }

    /// Tridiagonal entries `(lower, diag, upper)` of L acting on nodal values.
    pub fn tridiagonal(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.len();
        let h = self.grid.spacing();
        let w = self.grid.weights();
        let psi = self.psi.values();
        let mut lower = vec![0.0; n - 1];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let c = self.conductance[i] / h;
            upper[i] = c / (w[i] * psi[i + 1]);
            lower[i] = c / (w[i + 1] * psi[i]);
            diag[i] -= c / (w[i] * psi[i]);
            diag[i + 1] -= c / (w[i + 1] * psi[i + 1]);
        }
        (lower, diag, upper)
    }

    /// Operator matrix as `(row, col, value)` triplets.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let (lower, diag, upper) = self.tridiagonal();
        let n = diag.len();
        let mut out = Vec::with_capacity(3 * n);
        for i in 0..n {
            if i > 0 {
                out.push((i, i - 1, lower[i - 1]));
            }
            out.push((i, i, diag[i]));
            if i + 1 < n {
                out.push((i, i + 1, upper[i]));
            }
        }
        out
    }

    /// Triplet text export, one `row col value` line per entry.
    pub fn triplets_text(&self) -> String {
        let mut s = String::new();
        for (i, j, v) in self.triplets() {
            let _ = writeln!(s, "{i} {j} {v:.16e}");
        }
        s
    }

    /// `⟨u, v⟩_ψ = ∫ u ψ⁻¹ v dx`.
    pub fn weighted_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        let w = self.grid.weights();
        let psi = self.psi.values();
        crate::grid::compensated_sum((0..self.len()).map(|i| w[i] * u[i] * v[i] / psi[i]))
    }

    /// Symmetric form of `-L` in the ψ-weighted inner product:
    /// `M^{-1/2} K M^{-1/2}` with stiffness `K` in the `a = y/ψ` variables
    /// and diagonal mass `M = W Ψ`.
    pub fn symmetric_form(&self) -> SymTridiagonal {
        let n = self.len();
        let h = self.grid.spacing();
        let w = self.grid.weights();
        let psi = self.psi.values();
        let mass: Vec<f64> = (0..n).map(|i| w[i] * psi[i]).collect();
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let c = self.conductance[i] / h;
            diag[i] += c;
            diag[i + 1] += c;
            off[i] = -c / (mass[i] * mass[i + 1]).sqrt();
        }
        for i in 0..n {
            diag[i] /= mass[i];
        }
        SymTridiagonal::new(diag, off)
    }

    /// Factorization of `I - dt L`, solved in the symmetric `a = y/ψ`
    /// variables as `(WΨ + dt K) a = W r`.
    pub fn implicit_step(&self, dt: f64) -> Option<ImplicitDiffusionStep> {
        let n = self.len();
        let h = self.grid.spacing();
        let w = self.grid.weights();
        let psi = self.psi.values();
        let mut diag: Vec<f64> = (0..n).map(|i| w[i] * psi[i]).collect();
        let mut off = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let c = dt * self.conductance[i] / h;
            diag[i] += c;
            diag[i + 1] += c;
            off[i] = -c;
        }
        let lu = TridiagonalLu::factor(&off, &diag, &off)?;
        Some(ImplicitDiffusionStep {
            lu,
            weights: w.to_vec(),
            psi: psi.to_vec(),
        })
    }
}

fn null_vector(grid: &GridRef, d: &[f64], theta: f64) -> ScalarField {
    let p = 2.0 * theta - 1.0;
    let raw: Vec<f64> = if p == 0.0 {
        vec![1.0; d.len()]
    } else {
        d.iter().map(|v| v.powf(p)).collect()
    };
    let z = grid.integrate(&raw);
    ScalarField::new(grid, raw.into_iter().map(|v| v / z).collect()).expect("grid-sized")
}

/// Backward-Euler diffusion solve for one species.
#[derive(Debug, Clone)]
pub struct ImplicitDiffusionStep {
    lu: TridiagonalLu,
    weights: Vec<f64>,
    psi: Vec<f64>,
}

impl ImplicitDiffusionStep {
    /// Overwrites `r` with `y` solving `(I - dt L) y = r`.
    pub fn solve_in_place(&self, r: &mut [f64]) {
        for (ri, w) in r.iter_mut().zip(&self.weights) {
            *ri *= w;
        }
        self.lu.solve_in_place(r);
        for (ri, p) in r.iter_mut().zip(&self.psi) {
            *ri *= p;
        }
    }
}

/// Second eigenvalue report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub theta: f64,
    pub lambda_bound: f64,
    pub lambda_numeric: f64,
    pub residual: f64,
}

/// Smallest nonzero eigenvalue of `-L` in the ψ-weighted inner product.
///
/// The null direction ψ is the lowest eigenpair of the symmetric form, so
/// the second Sturm eigenvalue is the deflated one.
pub fn second_eigenvalue_numeric(op: &ThetaOperator) -> Result<(f64, f64)> {
    let t = op.symmetric_form();
    let lambda = t.eigenvalue(1);
    let (_, residual) = t.eigenvector(lambda);
    let scale = t.max_abs_entry().max(1.0);
    if !(residual <= EIGEN_RESIDUAL_TOL * scale) || !lambda.is_finite() {
        return Err(Error::NumericalFailure {
            message: format!("second eigenvalue did not converge (estimate {lambda})"),
            residual,
        });
    }
    Ok((lambda, residual / scale))
}

/// Assembled single-species operator with its spectral data.
#[derive(Debug, Clone)]
pub struct OperatorAssembly {
    pub operator: ThetaOperator,
    pub lambda_bound: f64,
    pub lambda_numeric: f64,
    pub residual: f64,
    pub lambda_star: f64,
}

impl OperatorAssembly {
    pub fn report(&self) -> EigenReport {
        EigenReport {
            theta: self.operator.theta(),
            lambda_bound: self.lambda_bound,
            lambda_numeric: self.lambda_numeric,
            residual: self.residual,
        }
    }
}

pub fn assemble_operator(theta: f64, d: &ScalarField) -> Result<OperatorAssembly> {
    let operator = ThetaOperator::assemble(theta, d)?;
    let lambda_bound = eigenvalue_lower_bound_unchecked(theta, d);
    let (lambda_numeric, residual) = second_eigenvalue_numeric(&operator)?;
    Ok(OperatorAssembly {
        operator,
        lambda_bound,
        lambda_numeric,
        residual,
        lambda_star: NEUMANN_LAMBDA_STAR,
    })
}

/// Flux of `y` under `(θ, d)` at the half-nodes.
pub fn apply_flux(theta: f64, d: &ScalarField, y: &ScalarField) -> Result<Vec<f64>> {
    Ok(ThetaOperator::assemble(theta, d)?.flux(y.values()))
}
