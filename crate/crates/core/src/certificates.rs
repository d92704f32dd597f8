//! Sampled verification of the four contraction conditions for the
//! average/deviation decomposition: metric margins λ₁ and λ₂, coupling
//! bound β, and the small-gain test with its rate λ*.
//!
//! Infima and suprema over continuous state sets are taken over a finite
//! sample (box corners, face midpoints, the center and seeded uniform
//! probes), so every report is sound only up to that sampling.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{assemble_operator, DiffusionSpec, PsiWeights};
use crate::error::{invalid_param, Error, Result};
use crate::grid::{GridRef, ScalarField};
use crate::simulator::ReactionSpec;

/// Absolute slack in the strict small-gain inequality `λ₁λ₂ > σ²`.
pub const SMALL_GAIN_SLACK: f64 = 1e-12;

/// Default number of uniform random probes per state box.
pub const DEFAULT_RANDOM_PROBES: usize = 64;

/// Corners are enumerated only up to this many box dimensions.
const MAX_CORNER_DIMS: usize = 12;

/// Relative tolerance for the hierarchical decoupling premises.
const PREMISE_TOL: f64 = 1e-10;

/// Axis-aligned box of sampled variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl StateBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch(format!(
                "box bounds have {} and {} entries",
                lo.len(),
                hi.len()
            )));
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i]) || !lo[i].is_finite() || !hi[i].is_finite()) {
            return Err(invalid_param(
                "state_box",
                format!("empty or non-finite interval [{}, {}] in dimension {i}", lo[i], hi[i]),
            ));
        }
        Ok(Self { lo, hi })
    }

    /// The zero-dimensional box (a single empty sample).
    pub fn point() -> Self {
        Self { lo: vec![], hi: vec![] }
    }

    /// `[-half_width, half_width]` in every one of `dims` dimensions.
    pub fn symmetric(dims: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dims], vec![half_width; dims])
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dims()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_random: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_random: DEFAULT_RANDOM_PROBES,
            seed: 0,
        }
    }
}

/// Corners, face midpoints, center and seeded uniform probes. Random
/// probes are drawn as unit-cube fractions so the same seed gives the same
/// relative positions in any box of the same dimension.
pub fn sample_box(state_box: &StateBox, sampling: &SamplingConfig) -> Vec<Vec<f64>> {
    let k = state_box.dims();
    if k == 0 {
        return vec![vec![]];
    }
    let (lo, hi) = (&state_box.lo, &state_box.hi);
    let mid: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let mut pts = Vec::new();
    if k <= MAX_CORNER_DIMS {
        for mask in 0..(1usize << k) {
            pts.push((0..k).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect());
        }
    }
    for i in 0..k {
        for end in [lo[i], hi[i]] {
            let mut p = mid.clone();
            p[i] = end;
            pts.push(p);
        }
    }
    pts.push(mid);
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    for _ in 0..sampling.n_random {
        pts.push((0..k).map(|i| lo[i] + rng.random::<f64>() * (hi[i] - lo[i])).collect());
    }
    pts
}

/// A pointwise sample location: time, grid node and sampled variables.
#[derive(Debug, Clone, Copy)]
pub struct Probe<'a> {
    pub t: f64,
    pub node: usize,
    pub x: f64,
    pub p: &'a [f64],
}

/// `∂f₁/∂w̄ (t, p)`, no spatial dependence.
pub type AverageSampler = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;
/// Pointwise Jacobian sampler.
pub type PointSampler = Arc<dyn Fn(&Probe<'_>) -> DMatrix<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaSource {
    /// `π² min d^{2θ} / max d^{2θ-1}` per species.
    #[default]
    AnalyticFloor,
    /// Second eigenvalue of the discrete operator.
    Numeric,
}

/// Diffusion eigenvalue margins `Λ` per species.
pub fn diffusion_margins(spec: &DiffusionSpec, source: LambdaSource) -> Result<Vec<f64>> {
    match source {
        LambdaSource::AnalyticFloor => Ok(spec.lambda_bounds()),
        LambdaSource::Numeric => spec
            .species
            .iter()
            .map(|s| assemble_operator(s.theta, &s.d).map(|a| a.lambda_numeric))
            .collect(),
    }
}

/// Everything the four-condition pipeline needs.
#[derive(Clone)]
pub struct CertificateInputs {
    pub grid: GridRef,
    pub m1: DMatrix<f64>,
    pub gamma: Vec<f64>,
    pub psi: PsiWeights,
    pub lambda: Vec<f64>,
    pub lambda_source: LambdaSource,
    /// Nodes where the pointwise deviation condition is checked.
    pub x_nodes: Vec<usize>,
    pub times: Vec<f64>,
    pub state_box: StateBox,
    pub sampling: SamplingConfig,
    pub jac_f1: AverageSampler,
    pub jac_f2: PointSampler,
    pub jac_g1: PointSampler,
    pub jac_g2: PointSampler,
}

impl std::fmt::Debug for CertificateInputs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CertificateInputs")
            .field("m1", &self.m1)
            .field("gamma", &self.gamma)
            .field("lambda", &self.lambda)
            .field("times", &self.times)
            .field("state_box", &self.state_box)
            .field("sampling", &self.sampling)
            .finish_non_exhaustive()
    }
}

impl CertificateInputs {
    fn validate(&self) -> Result<()> {
        let m = self.gamma.len();
        if self.psi.species() != m || self.lambda.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "Gamma has {m} entries, psi {} species, Lambda {}",
                self.psi.species(),
                self.lambda.len()
            )));
        }
        if self.times.is_empty() {
            return Err(invalid_param("times", "need at least one time sample"));
        }
        if let Some(&k) = self.x_nodes.iter().find(|&&k| k >= self.grid.len()) {
            return Err(invalid_param("x_nodes", format!("node {k} outside grid")));
        }
        m1_star(&self.m1)?;
        m2_star(&self.gamma, &self.psi)?;
        Ok(())
    }
}

/// Smallest eigenvalue of a symmetric positive definite `M₁`.
pub fn m1_star(m1: &DMatrix<f64>) -> Result<f64> {
    if !m1.is_square() || m1.nrows() == 0 {
        return Err(Error::InvalidMetric("M1 must be a nonempty square matrix".into()));
    }
    let asym = (m1 - m1.transpose()).amax();
    if asym > 1e-12 * m1.amax().max(1.0) {
        return Err(Error::InvalidMetric(format!(
            "M1 is not symmetric (asymmetry {asym:e})"
        )));
    }
    let min = m1.clone().symmetric_eigen().eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::InvalidMetric(format!(
            "M1 is not positive definite (min eigenvalue {min:e})"
        )));
    }
    Ok(min)
}

/// `min_{i,x} Γᵢ / ψᵢ(x)`.
pub fn m2_star(gamma: &[f64], psi: &PsiWeights) -> Result<f64> {
    if let Some(g) = gamma.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
        return Err(Error::InvalidMetric(format!("Gamma entries must be positive, got {g}")));
    }
    Ok(gamma
        .iter()
        .zip(&psi.fields)
        .map(|(g, f)| g / f.max())
        .fold(f64::INFINITY, f64::min))
}

/// Where a margin or bound attained its extreme value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub condition: u8,
    pub value: f64,
    pub t: f64,
    pub node: Option<usize>,
    pub x: Option<f64>,
    pub p: Vec<f64>,
}

fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn max_sym_eig(a: &DMatrix<f64>) -> f64 {
    match a.nrows() {
        1 => a[(0, 0)],
        2 => {
            let (p, q, r) = (a[(0, 0)], a[(0, 1)], a[(1, 1)]);
            0.5 * (p + r) + (0.25 * (p - r) * (p - r) + q * q).sqrt()
        }
        _ => a.clone().symmetric_eigen().eigenvalues.max(),
    }
}

/// `-λ_max(sym(M J))` in the `M` inner product, with `M = L Lᵀ`.
fn metric_margin(l_inv: &DMatrix<f64>, m: &DMatrix<f64>, j: &DMatrix<f64>) -> f64 {
    let s = sym(&(m * j));
    -max_sym_eig(&(l_inv * s * l_inv.transpose()))
}

/// λ₁: infimum over sampled `(t, p)` of the `M₁`-weighted margin of `∂f₁/∂w̄`.
pub fn lambda1_margin(
    m1: &DMatrix<f64>,
    jac_f1: &AverageSampler,
    state_box: &StateBox,
    times: &[f64],
    sampling: &SamplingConfig,
) -> Result<(f64, WorstCase)> {
    m1_star(m1)?;
    let l = m1
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidMetric("M1 Cholesky failed".into()))?;
    let l_inv = l
        .l()
        .try_inverse()
        .ok_or_else(|| Error::InvalidMetric("M1 factor is singular".into()))?;
    let mut worst = WorstCase {
        condition: 1,
        value: f64::INFINITY,
        t: 0.0,
        node: None,
        x: None,
        p: vec![],
    };
    for p in sample_box(state_box, sampling) {
        for &t in times {
            let j = jac_f1(t, &p);
            if j.shape() != m1.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "df1/dw has shape {:?}, M1 {:?}",
                    j.shape(),
                    m1.shape()
                )));
            }
            let margin = metric_margin(&l_inv, m1, &j);
            if margin < worst.value || margin.is_nan() {
                worst = WorstCase {
                    value: margin,
                    t,
                    p: p.clone(),
                    ..worst
                };
            }
        }
    }
    Ok((worst.value, worst))
}

/// λ₂: infimum over sampled nodes and `(t, p)` of the margin of
/// `∂f₂/∂z⊥ − Λ` in the metric `M₂ = Γ Ψ⁻¹(x)`.
#[allow(clippy::too_many_arguments)]
pub fn lambda2_margin(
    grid: &GridRef,
    gamma: &[f64],
    psi: &PsiWeights,
    jac_f2: &PointSampler,
    lambda: &[f64],
    x_nodes: &[usize],
    state_box: &StateBox,
    times: &[f64],
    sampling: &SamplingConfig,
) -> Result<(f64, WorstCase)> {
    m2_star(gamma, psi)?;
    let m = gamma.len();
    if lambda.len() != m || psi.species() != m {
        return Err(Error::DimensionMismatch("Gamma, psi and Lambda sizes differ".into()));
    }
    let big_lambda = DMatrix::from_diagonal(&DVector::from_column_slice(lambda));
    let mut worst = WorstCase {
        condition: 2,
        value: f64::INFINITY,
        t: 0.0,
        node: None,
        x: None,
        p: vec![],
    };
    let pts = sample_box(state_box, sampling);
    for &k in x_nodes {
        let x = grid.nodes()[k];
        let m2 = DVector::from_iterator(m, (0..m).map(|i| gamma[i] / psi.at(i, k)));
        let m2_mat = DMatrix::from_diagonal(&m2);
        let scale = DMatrix::from_diagonal(&m2.map(|v| 1.0 / v.sqrt()));
        for p in &pts {
            for &t in times {
                let j = jac_f2(&Probe { t, node: k, x, p });
                if j.shape() != (m, m) {
                    return Err(Error::DimensionMismatch(format!("df2/dz has shape {:?}", j.shape())));
                }
                let margin = metric_margin(&scale, &m2_mat, &(j - &big_lambda));
                if margin < worst.value || margin.is_nan() {
                    worst = WorstCase {
                        value: margin,
                        t,
                        node: Some(k),
                        x: Some(x),
                        p: p.clone(),
                        ..worst
                    };
                }
            }
        }
    }
    Ok((worst.value, worst))
}

/// β: square root of the quadrature integral of the per-node supremum of
/// `λ_max(G⊥ᵀ G⊥)`, where `G = (∂g₁/∂z⊥)ᵀ M₁ + M₂ ∂g₂/∂w̄` and
/// `G⊥ = G − ∫G dx` for the same `(t, p)`.
#[allow(clippy::too_many_arguments)]
pub fn coupling_beta(
    grid: &GridRef,
    m1: &DMatrix<f64>,
    gamma: &[f64],
    psi: &PsiWeights,
    jac_g1: &PointSampler,
    jac_g2: &PointSampler,
    state_box: &StateBox,
    times: &[f64],
    sampling: &SamplingConfig,
) -> Result<(f64, WorstCase)> {
    let n = grid.len();
    let m = gamma.len();
    let w = grid.weights();
    let mut sup = vec![0.0_f64; n];
    let mut arg: Vec<(f64, Vec<f64>)> = vec![(0.0, vec![]); n];
    for p in sample_box(state_box, sampling) {
        for &t in times {
            let mut gs = Vec::with_capacity(n);
            for k in 0..n {
                let probe = Probe {
                    t,
                    node: k,
                    x: grid.nodes()[k],
                    p: &p,
                };
                let j1 = jac_g1(&probe);
                let mut j2 = jac_g2(&probe);
                if j1.nrows() != m1.nrows() || j1.ncols() != m || j2.nrows() != m || j2.ncols() != m1.nrows() {
                    return Err(Error::DimensionMismatch(format!(
                        "coupling Jacobians have shapes {:?} and {:?}",
                        j1.shape(),
                        j2.shape()
                    )));
                }
                for i in 0..m {
                    let s = gamma[i] / psi.at(i, k);
                    j2.row_mut(i).scale_mut(s);
                }
                gs.push(j1.transpose() * m1 + j2);
            }
            let mean = gs
                .iter()
                .zip(w)
                .fold(DMatrix::zeros(m, m1.nrows()), |acc, (g, wk)| acc + g * *wk);
            for (k, g) in gs.iter().enumerate() {
                let gp = g - &mean;
                let v = max_sym_eig(&(gp.transpose() * &gp));
                if v > sup[k] {
                    sup[k] = v;
                    arg[k] = (t, p.clone());
                }
            }
        }
    }
    let beta2 = grid.integrate(&sup);
    let (k, v) = sup.iter().copied().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |best, (k, v)| if v > best.1 { (k, v) } else { best },
    );
    Ok((
        beta2.max(0.0).sqrt(),
        WorstCase {
            condition: 3,
            value: v,
            t: arg[k].0,
            node: Some(k),
            x: Some(grid.nodes()[k]),
            p: arg[k].1.clone(),
        },
    ))
}

/// Result of the strict small-gain test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallGain {
    pub pass: bool,
    pub sigma: f64,
    pub lambda_star: f64,
}

/// `σ = β / (2√(m₁,* m₂,*))`, pass iff `λ₁ > 0`, `λ₂ > 0` and
/// `λ₁λ₂ > σ² + SMALL_GAIN_SLACK`; rate
/// `λ* = (λ₁+λ₂)/2 − √(((λ₁−λ₂)/2)² + σ²)`.
pub fn small_gain(lambda1: f64, lambda2: f64, beta: f64, m1_star: f64, m2_star: f64) -> SmallGain {
    let sigma = beta / (2.0 * (m1_star * m2_star).sqrt());
    let pass = lambda1 > 0.0 && lambda2 > 0.0 && lambda1 * lambda2 > sigma * sigma + SMALL_GAIN_SLACK;
    let half_gap = 0.5 * (lambda1 - lambda2);
    let lambda_star = 0.5 * (lambda1 + lambda2) - (half_gap * half_gap + sigma * sigma).sqrt();
    SmallGain {
        pass,
        sigma,
        lambda_star,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateMode {
    FullTheorem,
    Hierarchical1,
    Hierarchical2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRecord {
    pub n_random: usize,
    pub seed: u64,
    pub n_state_probes: usize,
    pub n_nodes: usize,
    pub n_times: usize,
}

/// Outcome of a certificate check. In hierarchical modes conditions 3 and
/// 4 are replaced by the decoupling premise and the cross-Jacobian bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub mode: CertificateMode,
    pub pass: bool,
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta: f64,
    pub sigma: f64,
    /// Certified rate, present only when every condition holds.
    pub lambda_star: Option<f64>,
    /// The rate formula evaluated regardless of the verdict.
    pub lambda_star_formula: f64,
    pub m1_star: f64,
    pub m2_star: f64,
    pub condition_pass: [bool; 4],
    pub diagnostics: Vec<WorstCase>,
    pub sampling: Option<SamplingRecord>,
    pub lambda_source: LambdaSource,
    pub cross_jacobian_bound: Option<f64>,
    pub notes: Vec<String>,
}

impl CertificateReport {
    /// Full-theorem report from the four scalars.
    pub fn from_margins(lambda1: f64, lambda2: f64, beta: f64, m1s: f64, m2s: f64) -> Self {
        let sg = small_gain(lambda1, lambda2, beta, m1s, m2s);
        let conds = [lambda1 > 0.0, lambda2 > 0.0, beta.is_finite(), sg.pass];
        let pass = conds.iter().all(|&c| c);
        Self {
            mode: CertificateMode::FullTheorem,
            pass,
            lambda1,
            lambda2,
            beta,
            sigma: sg.sigma,
            lambda_star: pass.then_some(sg.lambda_star),
            lambda_star_formula: sg.lambda_star,
            m1_star: m1s,
            m2_star: m2s,
            condition_pass: conds,
            diagnostics: vec![],
            sampling: None,
            lambda_source: LambdaSource::AnalyticFloor,
            cross_jacobian_bound: None,
            notes: vec!["constant metrics".into()],
        }
    }
}

fn sampling_record(inputs: &CertificateInputs) -> SamplingRecord {
    SamplingRecord {
        n_random: inputs.sampling.n_random,
        seed: inputs.sampling.seed,
        n_state_probes: sample_box(&inputs.state_box, &inputs.sampling).len(),
        n_nodes: inputs.x_nodes.len(),
        n_times: inputs.times.len(),
    }
}

/// Runs all four conditions.
pub fn certify(inputs: &CertificateInputs) -> Result<CertificateReport> {
    inputs.validate()?;
    let (l1, w1) = lambda1_margin(
        &inputs.m1,
        &inputs.jac_f1,
        &inputs.state_box,
        &inputs.times,
        &inputs.sampling,
    )?;
    let (l2, w2) = lambda2_margin(
        &inputs.grid,
        &inputs.gamma,
        &inputs.psi,
        &inputs.jac_f2,
        &inputs.lambda,
        &inputs.x_nodes,
        &inputs.state_box,
        &inputs.times,
        &inputs.sampling,
    )?;
    let (beta, w3) = coupling_beta(
        &inputs.grid,
        &inputs.m1,
        &inputs.gamma,
        &inputs.psi,
        &inputs.jac_g1,
        &inputs.jac_g2,
        &inputs.state_box,
        &inputs.times,
        &inputs.sampling,
    )?;
    let mut report =
        CertificateReport::from_margins(l1, l2, beta, m1_star(&inputs.m1)?, m2_star(&inputs.gamma, &inputs.psi)?);
    report.diagnostics = vec![w1, w2, w3];
    report.sampling = Some(sampling_record(inputs));
    report.lambda_source = inputs.lambda_source;
    Ok(report)
}

/// Checks only the average and deviation conditions, after verifying the
/// decoupling premise: in mode 1 `∫ g₁ dx = 0` for zero-mean deviations, in
/// mode 2 `g₂ − Ψ ∫ g₂ dx = 0`. The rate is `min(λ₁, λ₂)`.
pub fn certify_hierarchical(mode: u8, inputs: &CertificateInputs) -> Result<CertificateReport> {
    inputs.validate()?;
    let (mode_tag, cross) = match mode {
        1 => (CertificateMode::Hierarchical1, &inputs.jac_g2),
        2 => (CertificateMode::Hierarchical2, &inputs.jac_g1),
        _ => return Err(invalid_param("mode", format!("must be 1 or 2, got {mode}"))),
    };
    let grid = &inputs.grid;
    let n = grid.len();
    let m = inputs.gamma.len();
    let pts = sample_box(&inputs.state_box, &inputs.sampling);
    let mut rng = ChaCha8Rng::seed_from_u64(inputs.sampling.seed ^ 0x5eed);
    let fields: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|_| {
            (0..m)
                .map(|_| {
                    let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let raw: Vec<f64> = grid
                        .nodes()
                        .iter()
                        .map(|x| {
                            c.iter()
                                .enumerate()
                                .map(|(j, a)| a * ((j + 1) as f64 * PI * x).cos())
                                .sum()
                        })
                        .collect();
                    let mean = grid.integrate(&raw);
                    raw.into_iter().map(|v| v - mean).collect()
                })
                .collect()
        })
        .collect();

    let mut cross_bound = 0.0_f64;
    for p in &pts {
        for &t in &inputs.times {
            let probe = |k: usize| Probe {
                t,
                node: k,
                x: grid.nodes()[k],
                p,
            };
            let mats: Vec<DMatrix<f64>> = (0..n)
                .map(|k| {
                    if mode == 1 {
                        (inputs.jac_g1)(&probe(k))
                    } else {
                        (inputs.jac_g2)(&probe(k))
                    }
                })
                .collect();
            let scale = mats.iter().map(|a| a.amax()).fold(1.0, f64::max);
            let violation = if mode == 1 {
                fields
                    .iter()
                    .map(|u| {
                        let mut acc = DVector::zeros(mats[0].nrows());
                        for k in 0..n {
                            let uk = DVector::from_iterator(m, (0..m).map(|i| u[i][k]));
                            acc += (&mats[k] * uk) * grid.weights()[k];
                        }
                        acc.amax()
                    })
                    .fold(0.0, f64::max)
            } else {
                let mean = mats
                    .iter()
                    .zip(grid.weights())
                    .fold(DMatrix::zeros(mats[0].nrows(), mats[0].ncols()), |acc, (a, w)| {
                        acc + a * *w
                    });
                (0..n)
                    .map(|k| {
                        let mut psi_mean = mean.clone();
                        for i in 0..m {
                            psi_mean.row_mut(i).scale_mut(inputs.psi.at(i, k));
                        }
                        (&mats[k] - psi_mean).amax()
                    })
                    .fold(0.0, f64::max)
            };
            if violation > PREMISE_TOL * scale {
                let what = if mode == 1 {
                    "integral of g1 over zero-mean deviations"
                } else {
                    "deviation part of g2"
                };
                return Err(Error::PremiseViolation(format!(
                    "{what} is {violation:e} at t = {t}, p = {p:?}"
                )));
            }
            for k in 0..n {
                cross_bound = cross_bound.max(cross(&probe(k)).norm());
            }
        }
    }

    let (l1, w1) = lambda1_margin(
        &inputs.m1,
        &inputs.jac_f1,
        &inputs.state_box,
        &inputs.times,
        &inputs.sampling,
    )?;
    let (l2, w2) = lambda2_margin(
        grid,
        &inputs.gamma,
        &inputs.psi,
        &inputs.jac_f2,
        &inputs.lambda,
        &inputs.x_nodes,
        &inputs.state_box,
        &inputs.times,
        &inputs.sampling,
    )?;
    let bounded = cross_bound.is_finite();
    let conds = [l1 > 0.0, l2 > 0.0, bounded, true];
    let pass = conds.iter().all(|&c| c);
    let rate = l1.min(l2);
    Ok(CertificateReport {
        mode: mode_tag,
        pass,
        lambda1: l1,
        lambda2: l2,
        beta: f64::NAN,
        sigma: f64::NAN,
        lambda_star: pass.then_some(rate),
        lambda_star_formula: rate,
        m1_star: m1_star(&inputs.m1)?,
        m2_star: m2_star(&inputs.gamma, &inputs.psi)?,
        condition_pass: conds,
        diagnostics: vec![w1, w2],
        sampling: Some(sampling_record(inputs)),
        lambda_source: inputs.lambda_source,
        cross_jacobian_bound: Some(cross_bound),
        notes: vec![
            "constant metrics".into(),
            if mode == 1 {
                "verified: integral of g1 vanishes on zero-mean probes".into()
            } else {
                "verified: g2 has no deviation component on probes".into()
            },
        ],
    })
}

/// Scalar Fickian certificate with `M₁ = M₂ = 1`: `λ₁ = −ā`,
/// `λ₂ = dπ² − a*`, `β² = 4‖a⊥‖²`.
pub fn certify_scalar_fickian(a: &ScalarField, d: f64) -> Result<CertificateReport> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(invalid_param("d", format!("must be positive, got {d}")));
    }
    let a_bar = a.integrate();
    let a_star = a.max();
    let perp2 = a.map(|v| (v - a_bar) * (v - a_bar)).integrate();
    let mut report = CertificateReport::from_margins(-a_bar, d * PI * PI - a_star, (4.0 * perp2).sqrt(), 1.0, 1.0);
    report.notes.push("scalar Fickian, exact quadrature".into());
    Ok(report)
}

/// Small-ω approximation for `a(x) = −ε + sin(ωx) − ∫ sin`:
/// `a* ≈ −ε + ω/2` and `‖a⊥‖² ≈ ω²/12`.
pub fn certify_scalar_small_omega(epsilon: f64, omega: f64, d: f64) -> Result<CertificateReport> {
    if !(epsilon > 0.0) {
        return Err(invalid_param("epsilon", "must be positive"));
    }
    if !(d > 0.0) {
        return Err(invalid_param("d", "must be positive"));
    }
    let a_star = -epsilon + 0.5 * omega;
    let beta2 = omega * omega / 3.0;
    let mut report = CertificateReport::from_margins(epsilon, d * PI * PI - a_star, beta2.sqrt(), 1.0, 1.0);
    report.notes.push("scalar Fickian, small-omega expansion".into());
    Ok(report)
}

/// Diagonal stability of a 2×2 matrix `B`: the three scalar conditions on
/// `−B` and, on pass, a witness `Γ = diag(1, g)` with `−sym(ΓB)` positive
/// definite.
pub fn diagonal_stability_2x2(b: &DMatrix<f64>) -> Result<(bool, Option<DMatrix<f64>>)> {
    if b.shape() != (2, 2) {
        return Err(Error::DimensionMismatch(format!("expected 2x2, got {:?}", b.shape())));
    }
    let (b11, b12, b21, b22) = (b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]);
    let det = b11 * b22 - b12 * b21;
    let pass = -b11 > 0.0 && -b22 > 0.0 && det > 0.0;
    if !pass {
        return Ok((false, None));
    }
    let valid = |g: f64| 4.0 * g * b11 * b22 - (b12 + g * b21).powi(2) > 0.0;
    let mut witness = (-40..=40)
        .map(|k| 10f64.powf(k as f64 / 10.0))
        .filter(|&g| valid(g))
        .max_by(|x, y| {
            let f = |g: f64| 4.0 * g * b11 * b22 - (b12 + g * b21).powi(2);
            f(*x).partial_cmp(&f(*y)).unwrap()
        });
    if witness.is_none() {
        let g = if b21 != 0.0 {
            (2.0 * b11 * b22 - b12 * b21) / (b21 * b21)
        } else {
            b12 * b12 / (4.0 * b11 * b22) + 1.0
        };
        if g > 0.0 && valid(g) {
            witness = Some(g);
        }
    }
    Ok((
        true,
        witness.map(|g| DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, g]))),
    ))
}

/// Solves `AᵀM + MA = −2I` for a Hurwitz `A`.
pub fn lyapunov_metric(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::DimensionMismatch("A must be square".into()));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let k = id.kronecker(&at) + at.kronecker(&id);
    let rhs = DVector::from_iterator(n * n, (-2.0 * &id).iter().copied());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidMetric("Lyapunov equation is singular".into()))?;
    let m = DMatrix::from_column_slice(n, n, sol.as_slice());
    let m = sym(&m);
    m1_star(&m)?;
    Ok(m)
}

/// Sampling and Λ options shared by the system-level certifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    pub lambda_source: LambdaSource,
    pub sampling: SamplingConfig,
    pub times: Vec<f64>,
    /// `None` checks every grid node.
    pub x_nodes: Option<Vec<usize>>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            lambda_source: LambdaSource::AnalyticFloor,
            sampling: SamplingConfig::default(),
            times: vec![0.0],
            x_nodes: None,
        }
    }
}

type JacobianSampler = Arc<dyn Fn(f64, f64, &[f64]) -> DMatrix<f64> + Send + Sync>;

fn pipeline_inputs(
    jac: JacobianSampler,
    spec: &DiffusionSpec,
    m1: DMatrix<f64>,
    gamma: Vec<f64>,
    state_box: StateBox,
    opts: &CertifyOptions,
) -> Result<CertificateInputs> {
    let first = spec
        .species
        .first()
        .ok_or_else(|| Error::DimensionMismatch("diffusion spec is empty".into()))?;
    let grid = first.d.grid().clone();
    let psi = spec.psi_weights()?;
    let lambda = diffusion_margins(spec, opts.lambda_source)?;
    let m = spec.len();
    if m1.shape() != (m, m) || gamma.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "M1 {:?} and Gamma ({}) must match {m} species",
            m1.shape(),
            gamma.len()
        )));
    }
    let psi_fields = Arc::new(psi.clone());
    let g1 = grid.clone();
    let jf1 = jac.clone();
    let pf = psi_fields.clone();
    let jac_f1: AverageSampler = Arc::new(move |t, p| {
        let mut acc = DMatrix::zeros(m, m);
        for (k, (&x, &w)) in g1.nodes().iter().zip(g1.weights()).enumerate() {
            let mut a = jf1(t, x, p);
            for j in 0..m {
                a.column_mut(j).scale_mut(pf.at(j, k));
            }
            acc += a * w;
        }
        acc
    });
    let jf2 = jac.clone();
    let jac_f2: PointSampler = Arc::new(move |pr| jf2(pr.t, pr.x, pr.p));
    let jg1 = jac.clone();
    let jac_g1: PointSampler = Arc::new(move |pr| jg1(pr.t, pr.x, pr.p));
    let jg2 = jac;
    let pf2 = psi_fields;
    let jac_g2: PointSampler = Arc::new(move |pr| {
        let mut a = jg2(pr.t, pr.x, pr.p);
        for j in 0..m {
            a.column_mut(j).scale_mut(pf2.at(j, pr.node));
        }
        a
    });
    Ok(CertificateInputs {
        x_nodes: opts.x_nodes.clone().unwrap_or_else(|| (0..grid.len()).collect()),
        grid,
        m1,
        gamma,
        psi,
        lambda,
        lambda_source: opts.lambda_source,
        times: opts.times.clone(),
        state_box,
        sampling: opts.sampling,
        jac_f1,
        jac_f2,
        jac_g1,
        jac_g2,
    })
}

/// Inputs for `f = A(t, x) z`: `∂f₁/∂w̄ = ∫ A Ψ dx`, `∂f₂/∂z⊥ = ∂g₁/∂z⊥ = A`,
/// `∂g₂/∂w̄ = A Ψ`, so `G = AᵀM₁ + ΓΨ⁻¹AΨ`.
pub fn linear_system_inputs<A>(
    a: A,
    spec: &DiffusionSpec,
    m1: DMatrix<f64>,
    gamma: Vec<f64>,
    opts: &CertifyOptions,
) -> Result<CertificateInputs>
where
    A: Fn(f64, f64) -> DMatrix<f64> + Send + Sync + 'static,
{
    pipeline_inputs(
        Arc::new(move |t, x, _| a(t, x)),
        spec,
        m1,
        gamma,
        StateBox::point(),
        opts,
    )
}

pub fn certify_linear_system<A>(
    a: A,
    spec: &DiffusionSpec,
    m1: DMatrix<f64>,
    gamma: Vec<f64>,
    opts: &CertifyOptions,
) -> Result<CertificateReport>
where
    A: Fn(f64, f64) -> DMatrix<f64> + Send + Sync + 'static,
{
    certify(&linear_system_inputs(a, spec, m1, gamma, opts)?)
}

/// Nonlinear systems with `f(t, x, 0) = 0`: the linear pipeline with the
/// Jacobian sampled over `state_box` (one constant state per probe).
pub fn certify_nonlinear(
    reaction: &ReactionSpec,
    spec: &DiffusionSpec,
    m1: DMatrix<f64>,
    gamma: Vec<f64>,
    state_box: StateBox,
    opts: &CertifyOptions,
) -> Result<CertificateReport> {
    let m = reaction.species();
    if state_box.dims() != m {
        return Err(Error::DimensionMismatch(format!(
            "state box has {} dimensions, reaction {m} species",
            state_box.dims()
        )));
    }
    let grid = spec
        .species
        .first()
        .ok_or_else(|| Error::DimensionMismatch("diffusion spec is empty".into()))?
        .d
        .grid()
        .clone();
    let zero = vec![0.0; m];
    for &t in &opts.times {
        for &x in grid.nodes() {
            let f0 = reaction.eval_vec(t, x, &zero);
            if let Some(v) = f0.iter().find(|v| v.abs() > 1e-12) {
                return Err(Error::PremiseViolation(format!(
                    "f(t, x, 0) = {v:e} at t = {t}, x = {x}"
                )));
            }
        }
    }
    let r = reaction.clone();
    pipeline_inputs(
        Arc::new(move |t, x, p| r.jacobian(t, x, p)),
        spec,
        m1,
        gamma,
        state_box,
        opts,
    )
    .and_then(|inputs| certify(&inputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialGrid;
    use crate::simulator::ReactionFlags;
    use proptest::prelude::*;

    fn grid(n: usize) -> GridRef {
        SpatialGrid::uniform(n).unwrap()
    }

    fn const_sampler(j: DMatrix<f64>) -> AverageSampler {
        Arc::new(move |_, _| j.clone())
    }

    #[test]
    fn lambda1_examples() {
        let opts = SamplingConfig::default();
        let (l, _) = lambda1_margin(
            &DMatrix::identity(1, 1),
            &const_sampler(DMatrix::from_element(1, 1, -0.01)),
            &StateBox::point(),
            &[0.0],
            &opts,
        )
        .unwrap();
        assert!((l - 0.01).abs() < 1e-15);
        let (l, _) = lambda1_margin(
            &DMatrix::identity(3, 3),
            &const_sampler(-DMatrix::identity(3, 3)),
            &StateBox::point(),
            &[0.0],
            &opts,
        )
        .unwrap();
        assert!((l - 1.0).abs() < 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            lambda1_margin(
                &bad,
                &const_sampler(-DMatrix::identity(2, 2)),
                &StateBox::point(),
                &[0.0],
                &opts
            ),
            Err(Error::InvalidMetric(_))
        ));
    }

    #[test]
    fn lambda1_matches_dense_generalized_oracle() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, 0.5]);
        let m1 = lyapunov_metric(&a).unwrap();
        let residual: DMatrix<f64> = a.transpose() * &m1 + &m1 * &a + 2.0 * DMatrix::identity(2, 2);
        assert!(residual.amax() < 1e-12);
        let (l, _) = lambda1_margin(
            &m1,
            &const_sampler(a.clone()),
            &StateBox::point(),
            &[0.0],
            &SamplingConfig::default(),
        )
        .unwrap();
        // brute-force oracle: largest μ with sym(M A) + μ M ≤ 0, scanning
        // the Rayleigh quotient over unit directions
        let s = sym(&(&m1 * &a));
        let oracle = (0..20000)
            .map(|k| {
                let th = k as f64 * PI / 20000.0;
                let v = DVector::from_vec(vec![th.cos(), th.sin()]);
                -(v.transpose() * &s * &v)[(0, 0)] / (v.transpose() * &m1 * &v)[(0, 0)]
            })
            .fold(f64::INFINITY, f64::min);
        assert!((l - oracle).abs() < 1e-6, "{l} vs {oracle}");
        assert!(l > 0.0);
    }

    #[test]
    fn lambda2_examples() {
        let g = grid(101);
        let psi = PsiWeights::identity(&g, 2);
        let zero: PointSampler = Arc::new(|_| DMatrix::zeros(2, 2));
        let nodes: Vec<usize> = (0..101).collect();
        let (l, _) = lambda2_margin(
            &g,
            &[1.0, 1.0],
            &psi,
            &zero,
            &[3.0, 5.0],
            &nodes,
            &StateBox::point(),
            &[0.0],
            &SamplingConfig::default(),
        )
        .unwrap();
        assert!((l - 3.0).abs() < 1e-14);

        let d = 0.02;
        let a = g.field_from_fn(|x| -0.5 + 0.3 * (4.0 * x).sin());
        let a_star = a.max();
        let af = Arc::new(a);
        let jac: PointSampler = Arc::new(move |pr| DMatrix::from_element(1, 1, af[pr.node]));
        let psi1 = PsiWeights::identity(&g, 1);
        let (l, w) = lambda2_margin(
            &g,
            &[1.0],
            &psi1,
            &jac,
            &[d * PI * PI],
            &nodes,
            &StateBox::point(),
            &[0.0],
            &SamplingConfig::default(),
        )
        .unwrap();
        assert!((l - (d * PI * PI - a_star)).abs() < 1e-14);
        assert_eq!(w.condition, 2);
        assert!(lambda2_margin(
            &g,
            &[0.0],
            &psi1,
            &jac,
            &[1.0],
            &nodes,
            &StateBox::point(),
            &[0.0],
            &SamplingConfig::default()
        )
        .is_err());
    }

    #[test]
    fn beta_examples() {
        let g = grid(401);
        let psi = PsiWeights::identity(&g, 1);
        let a = Arc::new(g.field_from_fn(|x| -0.1 + (0.7 * x).sin()));
        let a2 = a.clone();
        let j: PointSampler = Arc::new(move |pr| DMatrix::from_element(1, 1, a2[pr.node]));
        let (beta, _) = coupling_beta(
            &g,
            &DMatrix::identity(1, 1),
            &[1.0],
            &psi,
            &j,
            &j,
            &StateBox::point(),
            &[0.0],
            &SamplingConfig::default(),
        )
        .unwrap();
        let abar = a.integrate();
        let perp2 = a.map(|v| (v - abar).powi(2)).integrate();
        assert!((beta * beta - 4.0 * perp2).abs() < 1e-12);

        let c: PointSampler = Arc::new(|_| DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let psi2 = PsiWeights::identity(&g, 2);
        let (beta, _) = coupling_beta(
            &g,
            &DMatrix::identity(2, 2),
            &[1.0, 2.0],
            &psi2,
            &c,
            &c,
            &StateBox::point(),
            &[0.0],
            &SamplingConfig::default(),
        )
        .unwrap();
        assert!(beta.abs() < 1e-12);
    }

    #[test]
    fn small_gain_examples() {
        let sg = small_gain(1.0, 1.0, 0.0, 1.0, 1.0);
        assert!(sg.pass && (sg.lambda_star - 1.0).abs() < 1e-15);
        let lam = 0.7;
        let sg = small_gain(lam, lam, 2.0 * lam, 1.0, 1.0);
        assert!((sg.sigma - lam).abs() < 1e-15);
        assert!(sg.lambda_star.abs() < 1e-15 && !sg.pass);
    }

    #[test]
    fn small_omega_boundary() {
        let eps = 1e-2;
        let boundary = (33f64.sqrt() - 3.0) * eps;
        let d = eps / (PI * PI);
        assert!(certify_scalar_small_omega(eps, boundary * 0.999, d).unwrap().pass);
        assert!(!certify_scalar_small_omega(eps, boundary * 1.001, d).unwrap().pass);
        let r = certify_scalar_small_omega(eps, 0.01, d).unwrap();
        assert!((r.lambda1 - eps).abs() < 1e-15);
        assert!((r.lambda2 - (2.0 * eps - 0.005)).abs() < 1e-15);
    }

    #[test]
    fn scalar_exact_quadrature_vs_small_omega() {
        let g = grid(2001);
        let eps = 1e-2;
        let d = eps / (PI * PI);
        let a_of = |w: f64| {
            let mean = if w == 0.0 { 0.0 } else { (1.0 - w.cos()) / w };
            g.field_from_fn(move |x| -eps + (w * x).sin() - mean)
        };
        let r = certify_scalar_fickian(&a_of(1e-2), d).unwrap();
        assert!((r.beta * r.beta / (1e-4 / 3.0) - 1.0).abs() < 0.05);
        assert!((r.lambda1 - eps).abs() < 1e-10);
        // ω = 0.5 is far beyond the threshold on both paths
        let exact = certify_scalar_fickian(&a_of(0.5), d).unwrap();
        let approx = certify_scalar_small_omega(eps, 0.5, d).unwrap();
        assert!(!exact.pass && !approx.pass);
        let perp2 = exact.beta * exact.beta / 4.0;
        let w: f64 = 0.5;
        let closed = 0.5 - (2.0 * w).sin() / (4.0 * w) - ((1.0 - w.cos()) / w).powi(2);
        assert!((perp2 - closed).abs() < 1e-6);
        assert!((perp2 - w * w / 12.0).abs() / closed < 0.1);
        let pos = a_of(0.0).map(|v| v + 2.0 * eps);
        assert!(!certify_scalar_fickian(&pos, d).unwrap().condition_pass[0]);
        assert!(certify_scalar_fickian(&pos, 0.0).is_err());
    }

    #[test]
    fn diagonal_stability_examples() {
        let (p, w) = diagonal_stability_2x2(&-DMatrix::identity(2, 2)).unwrap();
        assert!(p && w.is_some());
        let b = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, -1.0, -2.0]);
        assert!(!diagonal_stability_2x2(&b).unwrap().0);
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, 0.5]);
        for (zeta, expect) in [(2.2, true), (1.8, false)] {
            let b = &a - DMatrix::from_diagonal(&DVector::from_vec(vec![10.0 * zeta, zeta / 4.0]));
            let (pass, witness) = diagonal_stability_2x2(&b).unwrap();
            assert_eq!(pass, expect);
            if let Some(gm) = witness {
                let s = -sym(&(&gm * &b));
                assert!(s.symmetric_eigen().eigenvalues.min() > 0.0);
            }
        }
    }

    #[test]
    fn linear_homogeneous_reduction() {
        let g = grid(51);
        let spec = DiffusionSpec::fickian(&g, &[0.5, 0.2]).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, 0.5]);
        let m1 = lyapunov_metric(&a).unwrap();
        let a2 = a.clone();
        let r = certify_linear_system(
            move |_, _| a2.clone(),
            &spec,
            m1.clone(),
            vec![1.0, 1.0],
            &CertifyOptions::default(),
        )
        .unwrap();
        assert!(r.beta.abs() < 1e-12);
        let (l1, _) = lambda1_margin(
            &m1,
            &const_sampler(a),
            &StateBox::point(),
            &[0.0],
            &SamplingConfig::default(),
        )
        .unwrap();
        assert!((r.lambda1 - l1).abs() < 1e-12);
    }

    #[test]
    fn scalar_consistency() {
        let g = grid(301);
        let d = 0.3;
        let a = g.field_from_fn(|x| -1.0 + 0.5 * (PI * x).cos() + 0.2 * x);
        let spec = DiffusionSpec::fickian(&g, &[d]).unwrap();
        let af = Arc::new(a.clone());
        let gg = g.clone();
        let lin = certify_linear_system(
            move |_, x| {
                let k = ((x / gg.spacing()).round() as usize).min(gg.len() - 1);
                DMatrix::from_element(1, 1, af[k])
            },
            &spec,
            DMatrix::identity(1, 1),
            vec![1.0],
            &CertifyOptions::default(),
        )
        .unwrap();
        let sc = certify_scalar_fickian(&a, d).unwrap();
        assert!((lin.lambda1 - sc.lambda1).abs() < 1e-10);
        assert!((lin.lambda2 - sc.lambda2).abs() < 1e-10);
        assert!((lin.beta - sc.beta).abs() < 1e-10);
        assert_eq!(lin.pass, sc.pass);
    }

    #[test]
    fn weighted_average_can_break_hurwitz() {
        // A(x) = A0 + A1 v̂(x) with A1 = e₂e₂ᵀ: the plain average shifts the
        // (2,2) entry by ∫v̂ = 1, the ψ-weighted one by ∫v̂² > 1
        let g = grid(401);
        let v = crate::grid::available_volume(1.5, 0.5, &g).unwrap().v;
        let vhat = Arc::new(crate::grid::normalize_profile(&v).unwrap());
        let spec = DiffusionSpec::new(vec![
            crate::diffusion::SpeciesDiffusion {
                theta: 0.5,
                d: g.constant_field(0.1),
            },
            crate::diffusion::SpeciesDiffusion {
                theta: 1.0,
                d: v.map(|x| 0.1 * x),
            },
        ])
        .unwrap();
        let second_moment = vhat.map(|x| x * x).integrate();
        assert!(second_moment > 1.0);
        let alpha = -0.5 * (1.0 + second_moment);
        let a_of = {
            let vhat = vhat.clone();
            let g = g.clone();
            move |_: f64, x: f64| {
                let k = ((x / g.spacing()).round() as usize).min(g.len() - 1);
                DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, alpha + vhat[k]])
            }
        };
        let plain = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, alpha + vhat.integrate()]);
        assert!(plain.complex_eigenvalues().iter().all(|e| e.re < 0.0));
        let r = certify_linear_system(
            a_of,
            &spec,
            DMatrix::identity(2, 2),
            vec![1.0, 1.0],
            &CertifyOptions::default(),
        )
        .unwrap();
        assert!(!r.condition_pass[0]);
        assert!((r.lambda1 + (alpha + second_moment)).abs() < 1e-10);
    }

    #[test]
    fn hierarchical_premises() {
        let g = grid(81);
        let spec = DiffusionSpec::fickian(&g, &[0.5]).unwrap();
        let lin = linear_system_inputs(
            |_, _| DMatrix::from_element(1, 1, -1.0),
            &spec,
            DMatrix::identity(1, 1),
            vec![1.0],
            &CertifyOptions::default(),
        )
        .unwrap();
        let r1 = certify_hierarchical(1, &lin).unwrap();
        assert!(r1.pass);
        assert_eq!(r1.lambda_star, Some(r1.lambda1.min(r1.lambda2)));
        let r2 = certify_hierarchical(2, &lin).unwrap();
        assert!(r2.pass && r2.mode == CertificateMode::Hierarchical2);
        // homogeneous Fickian: deviation margin is the diffusion floor minus a*
        assert!((r2.lambda2 - (0.5 * PI * PI + 1.0)).abs() < 1e-12);

        let varying = linear_system_inputs(
            |_, x| DMatrix::from_element(1, 1, -1.0 + x),
            &spec,
            DMatrix::identity(1, 1),
            vec![1.0],
            &CertifyOptions::default(),
        )
        .unwrap();
        assert!(matches!(
            certify_hierarchical(1, &varying),
            Err(Error::PremiseViolation(_))
        ));
        assert!(certify_hierarchical(3, &lin).is_err());
    }

    #[test]
    fn nonlinear_matches_linear_and_scan() {
        let g = grid(61);
        let spec = DiffusionSpec::fickian(&g, &[0.2]).unwrap();
        let lin = ReactionSpec::linear(1, |_, _| DMatrix::from_element(1, 1, -0.7), false, false);
        let box1 = StateBox::symmetric(1, 2.0).unwrap();
        let nl = certify_nonlinear(
            &lin,
            &spec,
            DMatrix::identity(1, 1),
            vec![1.0],
            box1.clone(),
            &CertifyOptions::default(),
        )
        .unwrap();
        let l = certify_linear_system(
            |_, _| DMatrix::from_element(1, 1, -0.7),
            &spec,
            DMatrix::identity(1, 1),
            vec![1.0],
            &CertifyOptions::default(),
        )
        .unwrap();
        assert_eq!((nl.lambda1, nl.lambda2, nl.beta), (l.lambda1, l.lambda2, l.beta));

        // f(z) = -z + 0.5 tanh(z): Jacobian -1 + 0.5 sech²(z) ∈ [-1 + 0.5 sech²(2), -0.5]
        let sat = ReactionSpec::new(
            1,
            |_, _, z, out| out[0] = -z[0] + 0.5 * z[0].tanh(),
            |_, _, z| DMatrix::from_element(1, 1, -1.0 + 0.5 / z[0].cosh().powi(2)),
            ReactionFlags::default(),
        );
        let r = certify_nonlinear(
            &sat,
            &spec,
            DMatrix::identity(1, 1),
            vec![1.0],
            box1,
            &CertifyOptions::default(),
        )
        .unwrap();
        let scan = (0..=4000)
            .map(|k| -2.0 + 4.0 * k as f64 / 4000.0)
            .map(|z| -1.0 + 0.5 / f64::cosh(z).powi(2))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((r.lambda2 - (0.2 * PI * PI - scan)).abs() < 1e-12);

        let offset = ReactionSpec::new(
            1,
            |_, _, z, out| out[0] = 1.0 - z[0],
            |_, _, _| DMatrix::from_element(1, 1, -1.0),
            ReactionFlags::default(),
        );
        assert!(matches!(
            certify_nonlinear(
                &offset,
                &spec,
                DMatrix::identity(1, 1),
                vec![1.0],
                StateBox::symmetric(1, 1.0).unwrap(),
                &CertifyOptions::default()
            ),
            Err(Error::PremiseViolation(_))
        ));
    }

    #[test]
    fn report_serializes() {
        let r = certify_scalar_small_omega(0.01, 0.01, 0.01 / (PI * PI)).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"mode\":\"full-theorem\""));
    }

    fn affine_inputs(g: &GridRef, half: f64, c: f64) -> CertificateInputs {
        // Jacobians affine in p, so box extrema sit at corners
        let jf1: AverageSampler = Arc::new(move |_, p| {
            DMatrix::from_row_slice(2, 2, &[-1.0 + 0.2 * p[0], 0.3 * p[1], 0.1, -2.0 + 0.1 * p[0]])
        });
        let jf2: PointSampler = Arc::new(move |pr| {
            DMatrix::from_row_slice(
                2,
                2,
                &[c * pr.p[0], 0.5 + 0.2 * pr.p[1] * pr.x, -0.3, -0.5 + 0.1 * pr.p[1]],
            )
        });
        let jg: PointSampler = Arc::new(move |pr| {
            DMatrix::from_row_slice(2, 2, &[pr.x * (1.0 + pr.p[0]), 0.2, 0.0, pr.x * pr.x * pr.p[1]])
        });
        CertificateInputs {
            grid: g.clone(),
            m1: DMatrix::identity(2, 2),
            gamma: vec![1.0, 2.0],
            psi: PsiWeights::identity(g, 2),
            lambda: vec![3.0, 4.0],
            lambda_source: LambdaSource::AnalyticFloor,
            x_nodes: (0..g.len()).collect(),
            times: vec![0.0],
            state_box: StateBox::symmetric(2, half).unwrap(),
            sampling: SamplingConfig { n_random: 8, seed: 1 },
            jac_f1: jf1,
            jac_f2: jf2,
            jac_g1: jg.clone(),
            jac_g2: jg,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn enlarging_box_is_monotone(half in 0.1f64..2.0, grow in 1.0f64..3.0, c in -1.0f64..1.0) {
            let g = grid(21);
            let small = certify(&affine_inputs(&g, half, c)).unwrap();
            let big = certify(&affine_inputs(&g, half * grow, c)).unwrap();
            prop_assert!(big.lambda1 <= small.lambda1 + 1e-12);
            prop_assert!(big.lambda2 <= small.lambda2 + 1e-12);
            prop_assert!(big.beta >= small.beta - 1e-12);
        }

        #[test]
        fn rate_never_exceeds_margins(l1 in -2.0f64..5.0, l2 in -2.0f64..5.0, beta in 0.0f64..10.0, m1 in 0.1f64..3.0, m2 in 0.1f64..3.0) {
            let sg = small_gain(l1, l2, beta, m1, m2);
            prop_assert!(sg.lambda_star <= l1.min(l2) + 1e-12);
            if sg.pass {
                prop_assert!(sg.lambda_star > 0.0);
            }
        }

        #[test]
        fn scalar_paths_agree(c0 in -2.0f64..-0.1, c1 in -0.5f64..0.5, d in 0.05f64..1.0) {
            let g = grid(101);
            let a = g.field_from_fn(|x| c0 + c1 * (PI * x).cos());
            let spec = DiffusionSpec::fickian(&g, &[d]).unwrap();
            let af = Arc::new(a.clone());
            let gg = g.clone();
            let lin = certify_linear_system(
                move |_, x| DMatrix::from_element(1, 1, af[((x / gg.spacing()).round() as usize).min(gg.len() - 1)]),
                &spec, DMatrix::identity(1, 1), vec![1.0], &CertifyOptions::default()).unwrap();
            let sc = certify_scalar_fickian(&a, d).unwrap();
            prop_assert!((lin.lambda1 - sc.lambda1).abs() < 1e-10);
            prop_assert!((lin.lambda2 - sc.lambda2).abs() < 1e-10);
            prop_assert!((lin.beta - sc.beta).abs() < 1e-10);
        }
    }
}
