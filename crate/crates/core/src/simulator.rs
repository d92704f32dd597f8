//! Method-of-lines integration of `∂z/∂t = L_Θ(D, z) + f(t, x, z)`:
//! implicit diffusion, explicit reaction, plus the average/deviation
//! decomposition and the log-norm stability classifier.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffusion::{DiffusionSpec, ImplicitDiffusionStep, PsiWeights, ThetaOperator};
use crate::error::{invalid_param, Error, Result};
use crate::grid::{GridRef, ScalarField};

/// Slopes with magnitude below this are treated as the stability boundary.
pub const SLOPE_ZERO_BAND: f64 = 1e-4;

/// Simulated concentrations below `-NONNEGATIVE_TOL` fail the run.
pub const NONNEGATIVE_TOL: f64 = 1e-9;

/// Target product of step size and reaction Jacobian spectral radius.
pub const DEFAULT_DT_RHO: f64 = 0.1;

pub type ReactionFn = dyn Fn(f64, f64, &[f64], &mut [f64]) + Send + Sync;
pub type JacobianFn = dyn Fn(f64, f64, &[f64]) -> DMatrix<f64> + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReactionFlags {
    pub linear: bool,
    pub space_varying: bool,
    pub time_varying: bool,
}

/// Reaction term `f(t, x, z)` with its Jacobian `∂f/∂z`.
#[derive(Clone)]
pub struct ReactionSpec {
    species: usize,
    f: Arc<ReactionFn>,
    jac: Arc<JacobianFn>,
    pub flags: ReactionFlags,
}

impl std::fmt::Debug for ReactionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReactionSpec")
            .field("species", &self.species)
            .field("flags", &self.flags)
            .finish_non_exhaustive()
    }
}

impl ReactionSpec {
    pub fn new<F, J>(species: usize, f: F, jac: J, flags: ReactionFlags) -> Self
    where
        F: Fn(f64, f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        J: Fn(f64, f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            species,
            f: Arc::new(f),
            jac: Arc::new(jac),
            flags,
        }
    }

    /// `f = A(t, x) z`.
    pub fn linear<A>(species: usize, a: A, space_varying: bool, time_varying: bool) -> Self
    where
        A: Fn(f64, f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        let a = Arc::new(a);
        let a2 = a.clone();
        Self::new(
            species,
            move |t, x, z, out| {
                let m = a(t, x);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..z.len()).map(|j| m[(i, j)] * z[j]).sum();
                }
            },
            move |t, x, _| a2(t, x),
            ReactionFlags {
                linear: true,
                space_varying,
                time_varying,
            },
        )
    }

    /// `f ≡ 0`.
    pub fn zero(species: usize) -> Self {
        Self::linear(species, move |_, _| DMatrix::zeros(species, species), false, false)
    }

    pub fn species(&self) -> usize {
        self.species
    }

    pub fn eval(&self, t: f64, x: f64, z: &[f64], out: &mut [f64]) {
        (self.f)(t, x, z, out)
    }

    pub fn eval_vec(&self, t: f64, x: f64, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.species];
        self.eval(t, x, z, &mut out);
        out
    }

    pub fn jacobian(&self, t: f64, x: f64, z: &[f64]) -> DMatrix<f64> {
        (self.jac)(t, x, z)
    }

    /// Largest relative discrepancy between the Jacobian and central finite
    /// differences of `f` over the given probes.
    pub fn jacobian_fd_error(&self, probes: &[(f64, f64, Vec<f64>)]) -> f64 {
        let n = self.species;
        let mut worst = 0.0_f64;
        for (t, x, z) in probes {
            let jac = self.jacobian(*t, *x, z);
            let mut fd = DMatrix::zeros(n, n);
            let mut zp = z.clone();
            for j in 0..n {
                let h = 1e-6 * (1.0 + z[j].abs());
                zp[j] = z[j] + h;
                let fp = self.eval_vec(*t, *x, &zp);
                zp[j] = z[j] - h;
                let fm = self.eval_vec(*t, *x, &zp);
                zp[j] = z[j];
                for i in 0..n {
                    fd[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
                }
            }
            let scale = jac.amax().max(1.0);
            worst = worst.max((fd - jac).amax() / scale);
        }
        worst
    }
}

/// A reaction-diffusion system on a uniform grid.
#[derive(Debug, Clone)]
pub struct RDSystem {
    grid: GridRef,
    diffusion: DiffusionSpec,
    reaction: ReactionSpec,
    operators: Vec<ThetaOperator>,
    psi: PsiWeights,
    /// Fail the run if any concentration drops below `-NONNEGATIVE_TOL`.
    pub assert_nonnegative: bool,
}

impl RDSystem {
    pub fn new(grid: &GridRef, diffusion: DiffusionSpec, reaction: ReactionSpec) -> Result<Self> {
        if diffusion.len() != reaction.species() {
            return Err(Error::DimensionMismatch(format!(
                "{} diffusing species but reaction has {}",
                diffusion.len(),
                reaction.species()
            )));
        }
        if diffusion.is_empty() {
            return Err(Error::DimensionMismatch("system has no species".into()));
        }
        for s in &diffusion.species {
            if s.d.len() != grid.len() {
                return Err(Error::DimensionMismatch(format!(
                    "diffusivity has {} nodes, grid has {}",
                    s.d.len(),
                    grid.len()
                )));
            }
        }
        let operators = diffusion.assemble()?;
        let psi = PsiWeights {
            fields: operators.iter().map(|op| op.psi().clone()).collect(),
        };
        Ok(Self {
            grid: grid.clone(),
            diffusion,
            reaction,
            operators,
            psi,
            assert_nonnegative: false,
        })
    }

    pub fn with_nonnegativity_check(mut self) -> Self {
        self.assert_nonnegative = true;
        self
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn species(&self) -> usize {
        self.reaction.species()
    }

    pub fn diffusion(&self) -> &DiffusionSpec {
        &self.diffusion
    }

    pub fn reaction(&self) -> &ReactionSpec {
        &self.reaction
    }

    pub fn operators(&self) -> &[ThetaOperator] {
        &self.operators
    }

    pub fn psi(&self) -> &PsiWeights {
        &self.psi
    }

    /// Right-hand side `L z + f(t, x, z)` at every node.
    pub fn rhs(&self, t: f64, z: &[ScalarField]) -> Vec<Vec<f64>> {
        let m = self.species();
        let mut out: Vec<Vec<f64>> = self
            .operators
            .iter()
            .zip(z)
            .map(|(op, zi)| op.apply(zi.values()))
            .collect();
        let mut buf = vec![0.0; m];
        let mut fz = vec![0.0; m];
        for (k, &x) in self.grid.nodes().iter().enumerate() {
            for i in 0..m {
                buf[i] = z[i][k];
            }
            self.reaction.eval(t, x, &buf, &mut fz);
            for i in 0..m {
                out[i][k] += fz[i];
            }
        }
        out
    }

    /// `min(0.1, DEFAULT_DT_RHO / ρ)` with ρ a Gershgorin bound on the
    /// reaction Jacobian over the nodes of `z` (and of the zero state).
    pub fn default_dt(&self, z: &[ScalarField]) -> f64 {
        let m = self.species();
        let zero = vec![0.0; m];
        let mut buf = vec![0.0; m];
        let mut rho = 0.0_f64;
        for (k, &x) in self.grid.nodes().iter().enumerate() {
            for i in 0..m {
                buf[i] = z[i][k];
            }
            for probe in [&buf, &zero] {
                let j = self.reaction.jacobian(0.0, x, probe);
                for r in 0..m {
                    rho = rho.max(j.row(r).iter().map(|v| v.abs()).sum());
                }
            }
        }
        if rho > 0.0 {
            (DEFAULT_DT_RHO / rho).min(0.1)
        } else {
            0.1
        }
    }

    fn check_state(&self, z0: &[ScalarField]) -> Result<()> {
        if z0.len() != self.species() {
            return Err(Error::DimensionMismatch(format!(
                "initial state has {} species, system has {}",
                z0.len(),
                self.species()
            )));
        }
        if let Some(f) = z0.iter().find(|f| f.len() != self.grid.len()) {
            return Err(Error::DimensionMismatch(format!(
                "initial field has {} nodes, grid has {}",
                f.len(),
                self.grid.len()
            )));
        }
        Ok(())
    }
}

/// Sampled solution of an [`RDSystem`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<ScalarField>>,
    pub norms: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[ScalarField] {
        self.states.last().expect("trajectory has at least the initial sample")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial sample")
    }
}

/// `‖z‖ = (Σ_i ∫ z_i² dx)^{1/2}`.
pub fn state_norm(z: &[ScalarField]) -> f64 {
    z.iter()
        .map(|f| {
            let n = f.l2_norm();
            n * n
        })
        .sum::<f64>()
        .sqrt()
}

/// IMEX integration: each step forms `r = z + dt f(t, x, z)` and solves
/// `(I - dt L) z_new = r` per species. Samples are kept every
/// `sample_every` steps plus the initial and final states.
pub fn integrate(
    system: &RDSystem,
    z0: &[ScalarField],
    t_end: f64,
    dt: f64,
    sample_every: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid_param("dt", format!("must be positive, got {dt}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(invalid_param("t_end", format!("must be nonnegative, got {t_end}")));
    }
    if sample_every == 0 {
        return Err(invalid_param("sample_every", "must be at least 1"));
    }
    system.check_state(z0)?;

    let grid = system.grid();
    let n = grid.len();
    let m = system.species();
    let steps = ((t_end / dt).ceil() as usize).max(if t_end > 0.0 { 1 } else { 0 });
    let dt = if steps > 0 { t_end / steps as f64 } else { dt };

    let solvers: Vec<ImplicitDiffusionStep> = system
        .operators()
        .iter()
        .map(|op| {
            op.implicit_step(dt).ok_or_else(|| Error::IntegrationFailure {
                time: 0.0,
                reason: "singular implicit diffusion matrix".into(),
            })
        })
        .collect::<Result<_>>()?;

    let mut z: Vec<Vec<f64>> = z0.iter().map(|f| f.values().to_vec()).collect();
    check_values(system, &z, 0.0)?;

    let to_fields = |z: &[Vec<f64>]| -> Vec<ScalarField> {
        z.iter()
            .map(|v| ScalarField::new(grid, v.clone()).expect("grid-sized"))
            .collect()
    };
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![to_fields(&z)],
        norms: vec![],
    };

    let nodes = grid.nodes();
    let mut buf = vec![0.0; m];
    let mut fz = vec![0.0; m];
    let mut r: Vec<Vec<f64>> = vec![vec![0.0; n]; m];
    for step in 0..steps {
        let t = step as f64 * dt;
        for (k, &x) in nodes.iter().enumerate() {
            for i in 0..m {
                buf[i] = z[i][k];
            }
            system.reaction().eval(t, x, &buf, &mut fz);
            for i in 0..m {
                r[i][k] = z[i][k] + dt * fz[i];
            }
        }
        for (i, solver) in solvers.iter().enumerate() {
            solver.solve_in_place(&mut r[i]);
        }
        std::mem::swap(&mut z, &mut r);
        let t_new = (step + 1) as f64 * dt;
        check_values(system, &z, t_new)?;
        if (step + 1) % sample_every == 0 || step + 1 == steps {
            traj.times.push(t_new);
            traj.states.push(to_fields(&z));
        }
    }
    traj.norms = traj.states.iter().map(|s| state_norm(s)).collect();
    Ok(traj)
}

fn check_values(system: &RDSystem, z: &[Vec<f64>], time: f64) -> Result<()> {
    for (i, zi) in z.iter().enumerate() {
        for (k, &v) in zi.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::IntegrationFailure {
                    time,
                    reason: format!("non-finite value in species {i} at node {k}"),
                });
            }
            if system.assert_nonnegative && v < -NONNEGATIVE_TOL {
                return Err(Error::IntegrationFailure {
                    time,
                    reason: format!("species {i} at node {k} went negative ({v:e})"),
                });
            }
        }
    }
    Ok(())
}

/// Spatial averages and deviations from the no-flux profile.
#[derive(Debug, Clone)]
pub struct DecomposedState {
    pub w_bar: Vec<f64>,
    pub z_perp: Vec<ScalarField>,
}

/// `w̄ⁱ = ∫ zⁱ dx` and `z⊥ = z − Ψ w̄`.
pub fn decompose(state: &[ScalarField], psi: &PsiWeights) -> Result<DecomposedState> {
    if state.len() != psi.species() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} species, weights have {}",
            state.len(),
            psi.species()
        )));
    }
    let mut w_bar = Vec::with_capacity(state.len());
    let mut z_perp = Vec::with_capacity(state.len());
    for (z, p) in state.iter().zip(&psi.fields) {
        if z.len() != p.len() {
            return Err(Error::DimensionMismatch("state and weight grids differ".into()));
        }
        let w = z.integrate();
        z_perp.push(z.zip_map(p, |zi, pi| zi - pi * w));
        w_bar.push(w);
    }
    Ok(DecomposedState { w_bar, z_perp })
}

/// Least-squares slope of `log ‖z‖` against `t` over samples in the window.
pub fn log_norm_slope(traj: &Trajectory, t_lo: f64, t_hi: f64) -> Result<f64> {
    let degenerate = |reason: &str| Error::DegenerateWindow {
        t_lo,
        t_hi,
        reason: reason.to_string(),
    };
    if !(t_hi > t_lo) {
        return Err(degenerate("empty window"));
    }
    let tol = 1e-9 * t_hi.abs().max(1.0);
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.norms)
        .filter(|(t, _)| **t >= t_lo - tol && **t <= t_hi + tol)
        .map(|(t, n)| (*t, *n))
        .collect();
    if pts.len() < 2 {
        return Err(degenerate("fewer than two samples in window"));
    }
    if pts.iter().any(|(_, n)| !(*n > 0.0) || !n.is_finite()) {
        return Err(degenerate("zero or non-finite norm in window"));
    }
    let k = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let y_mean = pts.iter().map(|p| p.1.ln()).sum::<f64>() / k;
    let (mut sty, mut stt) = (0.0, 0.0);
    for (t, nrm) in &pts {
        sty += (t - t_mean) * (nrm.ln() - y_mean);
        stt += (t - t_mean) * (t - t_mean);
    }
    Ok(sty / stt)
}

/// Slope classification used by the stability sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Marginal,
    Unstable,
}

impl Stability {
    pub fn classify(slope: f64) -> Self {
        if slope > SLOPE_ZERO_BAND {
            Self::Unstable
        } else if slope < -SLOPE_ZERO_BAND {
            Self::Stable
        } else {
            Self::Marginal
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stable => "stable",
            Self::Marginal => "marginal",
            Self::Unstable => "unstable",
        }
    }
}

/// Simulation protocol for slope-based stability classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityProtocol {
    pub t_end: f64,
    /// `None` picks [`RDSystem::default_dt`] from the initial state.
    pub dt: Option<f64>,
    pub window: (f64, f64),
    pub sample_every: usize,
}

impl Default for StabilityProtocol {
    fn default() -> Self {
        Self {
            t_end: 100.0,
            dt: None,
            window: (80.0, 100.0),
            sample_every: 10,
        }
    }
}

impl StabilityProtocol {
    pub fn slope(&self, system: &RDSystem, z0: &[ScalarField]) -> Result<f64> {
        let dt = self.dt.unwrap_or_else(|| system.default_dt(z0));
        let traj = integrate(system, z0, self.t_end, dt, self.sample_every)?;
        log_norm_slope(&traj, self.window.0, self.window.1)
    }
}

/// Bisection for the parameter where the slope changes sign. Slopes inside
/// the `±SLOPE_ZERO_BAND` band count as the boundary itself.
pub fn critical_parameter<F>(slope_of: F, p_lo: f64, p_hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(tol > 0.0) {
        return Err(invalid_param("tol", "must be positive"));
    }
    if !(p_hi > p_lo) {
        return Err(invalid_param("p_hi", "must exceed p_lo"));
    }
    let (mut lo, mut hi) = (p_lo, p_hi);
    let s_lo = slope_of(lo)?;
    let s_hi = slope_of(hi)?;
    let c_lo = Stability::classify(s_lo);
    let c_hi = Stability::classify(s_hi);
    if c_lo == Stability::Marginal {
        return Ok(lo);
    }
    if c_hi == Stability::Marginal {
        return Ok(hi);
    }
    if c_lo == c_hi {
        return Err(Error::NoBracket {
            p_lo,
            p_hi,
            slope_lo: s_lo,
            slope_hi: s_hi,
        });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match Stability::classify(slope_of(mid)?) {
            Stability::Marginal => return Ok(mid),
            c if c == c_lo => lo = mid,
            _ => hi = mid,
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Lyapunov-type distance between two trajectories at each sample time.
#[derive(Debug, Clone)]
pub struct ContractionDiagnostics {
    pub times: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub v: Vec<f64>,
}

impl ContractionDiagnostics {
    /// Largest `v(t) / (v(0) e^{-2 λ t})` over the samples (0 if `v(0) = 0`).
    pub fn worst_envelope_ratio(&self, lambda_star: f64) -> f64 {
        let v0 = self.v[0];
        if v0 == 0.0 {
            return if self.v.iter().all(|&v| v == 0.0) {
                0.0
            } else {
                f64::INFINITY
            };
        }
        self.times
            .iter()
            .zip(&self.v)
            .map(|(t, v)| v / (v0 * (-2.0 * lambda_star * t).exp()))
            .fold(0.0, f64::max)
    }
}

/// Integrates both initial states and evaluates
/// `v = ēᵀM₁ē + ∫ e⊥ᵀ Γ Ψ⁻¹ e⊥ dx` at every sample.
#[allow(clippy::too_many_arguments)]
pub fn contraction_decay_check(
    system: &RDSystem,
    z0_a: &[ScalarField],
    z0_b: &[ScalarField],
    m1: &DMatrix<f64>,
    gamma: &[f64],
    psi: &PsiWeights,
    t_end: f64,
    dt: f64,
    sample_every: usize,
) -> Result<ContractionDiagnostics> {
    let m = system.species();
    if m1.nrows() != m || m1.ncols() != m || gamma.len() != m || psi.species() != m {
        return Err(Error::DimensionMismatch("metric sizes must match species count".into()));
    }
    if gamma.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidMetric("Gamma entries must be positive".into()));
    }
    if m1.clone().cholesky().is_none() {
        return Err(Error::InvalidMetric("M1 must be positive definite".into()));
    }
    let ta = integrate(system, z0_a, t_end, dt, sample_every)?;
    let tb = integrate(system, z0_b, t_end, dt, sample_every)?;
    let grid = system.grid();
    let mut out = ContractionDiagnostics {
        times: ta.times.clone(),
        v1: vec![],
        v2: vec![],
        v: vec![],
    };
    for (sa, sb) in ta.states.iter().zip(&tb.states) {
        let da = decompose(sa, psi)?;
        let db = decompose(sb, psi)?;
        let e = DVector::from_iterator(m, da.w_bar.iter().zip(&db.w_bar).map(|(a, b)| a - b));
        let v1 = (e.transpose() * m1 * &e)[(0, 0)];
        let mut v2 = 0.0;
        for i in 0..m {
            let integrand: Vec<f64> = (0..grid.len())
                .map(|k| {
                    let d = da.z_perp[i][k] - db.z_perp[i][k];
                    gamma[i] * d * d / psi.at(i, k)
                })
                .collect();
            v2 += grid.integrate(&integrand);
        }
        out.v1.push(v1);
        out.v2.push(v2);
        out.v.push(v1 + v2);
    }
    Ok(out)
}

/// `z(0, x) = 1` for every species.
pub fn preset_ones(grid: &GridRef, species: usize) -> Vec<ScalarField> {
    vec![grid.constant_field(1.0); species]
}

/// `z₁(0, x) = x`, `z₂(0, x) = 1 + x`.
pub fn preset_ramp(grid: &GridRef) -> Vec<ScalarField> {
    vec![grid.field_from_fn(|x| x), grid.field_from_fn(|x| 1.0 + x)]
}

/// Smooth random initial state: per species, a constant in `[lo, hi]`
/// plus a few low cosine modes, clamped to stay inside `[lo, hi]`.
pub fn random_smooth_state(grid: &GridRef, species: usize, lo: f64, hi: f64, seed: u64) -> Vec<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..species)
        .map(|_| {
            let base: f64 = rng.random_range(lo..=hi);
            let amps: Vec<f64> = (0..4).map(|_| rng.random_range(-0.25..=0.25) * (hi - lo)).collect();
            grid.field_from_fn(|x| {
                let v = base
                    + amps
                        .iter()
                        .enumerate()
                        .map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::PI * x).cos())
                        .sum::<f64>();
                v.clamp(lo, hi)
            })
        })
        .collect()
}
