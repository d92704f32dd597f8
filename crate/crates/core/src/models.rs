//! Built-in example systems: the heterogeneous scalar reaction, the
//! two-species system with volume-exclusion diffusion, and the mRNA /
//! ribosome / polysome translation model with its QSS error variables,
//! invariant-set bounds and certificate constants.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::certificates::{
    certify, certify_hierarchical, lambda2_margin, linear_system_inputs, lyapunov_metric, AverageSampler,
    CertificateInputs, CertificateReport, CertifyOptions, LambdaSource, PointSampler, StateBox,
};
use crate::diffusion::{DiffusionSpec, PsiWeights, SpeciesDiffusion};
use crate::error::{invalid_param, Error, Result};
use crate::grid::{available_volume, normalize_profile, GridRef, ScalarField, VolumeProfile};
use crate::simulator::{decompose, RDSystem, ReactionFlags, ReactionSpec};

/// `a(x) = −ε + sin(ωx) − ∫₀¹ sin(ωx′) dx′`.
pub fn example_3_1_rate(epsilon: f64, omega: f64, x: f64) -> f64 {
    let mean = if omega == 0.0 { 0.0 } else { (1.0 - omega.cos()) / omega };
    -epsilon + (omega * x).sin() - mean
}

/// Diffusivity of the scalar example, `ε / π²`.
pub fn example_3_1_diffusivity(epsilon: f64) -> f64 {
    epsilon / (PI * PI)
}

/// Scalar Fickian system `z_t = d z_xx + a(x) z` with `d = ε/π²`.
pub fn build_example_3_1(epsilon: f64, omega: f64, grid: &GridRef) -> Result<RDSystem> {
    build_example_3_1_with_diffusivity(epsilon, omega, example_3_1_diffusivity(epsilon), grid)
}

/// Same reaction with an explicit diffusivity.
pub fn build_example_3_1_with_diffusivity(epsilon: f64, omega: f64, d: f64, grid: &GridRef) -> Result<RDSystem> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(invalid_param("epsilon", format!("must be positive, got {epsilon}")));
    }
    if !omega.is_finite() {
        return Err(invalid_param("omega", "must be finite"));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(invalid_param("d", format!("must be positive, got {d}")));
    }
    let reaction = ReactionSpec::linear(
        1,
        move |_, x| DMatrix::from_element(1, 1, example_3_1_rate(epsilon, omega, x)),
        omega != 0.0,
        false,
    );
    RDSystem::new(grid, DiffusionSpec::fickian(grid, &[d])?, reaction)
}

/// `[[−1, 1], [−1, 1/2]]`.
pub fn example_3_2_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, 0.5])
}

/// Diffusion of the two-species example: species 1 Fickian with
/// `d = 10ζ/π²`, species 2 with θ = 1 and `d = ζ v_r(x) / (4π²)`.
pub fn example_3_2_diffusion(zeta: f64, r: f64, grid: &GridRef) -> Result<(DiffusionSpec, VolumeProfile)> {
    if !(zeta > 0.0) || !zeta.is_finite() {
        return Err(invalid_param("zeta", format!("must be positive, got {zeta}")));
    }
    let profile = available_volume(r, 0.5, grid)?;
    let spec = DiffusionSpec::new(vec![
        SpeciesDiffusion {
            theta: 0.5,
            d: grid.constant_field(10.0 * zeta / (PI * PI)),
        },
        SpeciesDiffusion {
            theta: 1.0,
            d: profile.v.map(|v| zeta * v / (4.0 * PI * PI)),
        },
    ])?;
    Ok((spec, profile))
}

pub fn build_example_3_2(zeta: f64, r: f64, grid: &GridRef) -> Result<RDSystem> {
    let (spec, _) = example_3_2_diffusion(zeta, r, grid)?;
    let a = example_3_2_matrix();
    RDSystem::new(grid, spec, ReactionSpec::linear(2, move |_, _| a.clone(), false, false))
}

/// `M₁` for the two-species example: the Lyapunov solution for `A`.
pub fn example_3_2_m1() -> Result<DMatrix<f64>> {
    lyapunov_metric(&example_3_2_matrix())
}

/// Ratio `g` of `Γ = diag(1, g)` that maximizes the deviation margin, from
/// a log-spaced scan refined by golden-section search.
pub fn example_3_2_gamma(zeta: f64, r: f64, grid: &GridRef, opts: &CertifyOptions) -> Result<f64> {
    let (spec, _) = example_3_2_diffusion(zeta, r, grid)?;
    let base = linear_system_inputs(
        move |_, _| example_3_2_matrix(),
        &spec,
        example_3_2_m1()?,
        vec![1.0, 1.0],
        opts,
    )?;
    let margin = |log_g: f64| -> f64 {
        lambda2_margin(
            &base.grid,
            &[1.0, 10f64.powf(log_g)],
            &base.psi,
            &base.jac_f2,
            &base.lambda,
            &base.x_nodes,
            &base.state_box,
            &base.times,
            &base.sampling,
        )
        .map(|(l, _)| l)
        .unwrap_or(f64::NEG_INFINITY)
    };
    let best = (-60..=60)
        .map(|k| k as f64 / 20.0)
        .map(|lg| (lg, margin(lg)))
        .fold((0.0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
    let (mut lo, mut hi) = (best.0 - 0.05, best.0 + 0.05);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..40 {
        let c = hi - phi * (hi - lo);
        let d = lo + phi * (hi - lo);
        if margin(c) >= margin(d) {
            hi = d;
        } else {
            lo = c;
        }
    }
    Ok(10f64.powf(0.5 * (lo + hi)))
}

/// Certificate inputs for the two-species example with the searched Γ.
pub fn example_3_2_inputs(zeta: f64, r: f64, grid: &GridRef, opts: &CertifyOptions) -> Result<CertificateInputs> {
    let (spec, _) = example_3_2_diffusion(zeta, r, grid)?;
    let g = example_3_2_gamma(zeta, r, grid, opts)?;
    linear_system_inputs(
        move |_, _| example_3_2_matrix(),
        &spec,
        example_3_2_m1()?,
        vec![1.0, g],
        opts,
    )
}

/// Hierarchical certificate for the two-species example (the averages do
/// not feel the deviations, since `∫A z⊥ = 0`).
pub fn example_3_2_certificate(zeta: f64, r: f64, grid: &GridRef, opts: &CertifyOptions) -> Result<CertificateReport> {
    let inputs = example_3_2_inputs(zeta, r, grid, opts)?;
    let mut report = certify_hierarchical(1, &inputs)?;
    report
        .notes
        .push(format!("Gamma = diag(1, {:.6e}) from a ratio search", inputs.gamma[1]));
    Ok(report)
}

/// Binding correction factor `∫v_m v_r / (∫v_m ∫v_r)`.
pub fn compute_bcf(v_m: &VolumeProfile, v_r: &VolumeProfile) -> Result<f64> {
    bcf_of_fields(&v_m.v, &v_r.v)
}

pub fn bcf_of_fields(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    if a.len() != b.len() || a.grid().spacing() != b.grid().spacing() {
        return Err(Error::DimensionMismatch("profiles live on different grids".into()));
    }
    let total = crate::grid::compensated_sum(a.grid().weights().iter().copied());
    let mean = |f: &ScalarField| f.integrate() / total;
    Ok(mean(&a.zip_map(b, |x, y| x * y)) / (mean(a) * mean(b)))
}

/// Translation model parameters in units where time is scaled by the
/// binding timescale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TranslationParams {
    /// Dissociation constant.
    pub k: f64,
    pub chi_m: f64,
    pub chi_r: f64,
    pub chi_c: f64,
    pub r_m: f64,
    pub r_r: f64,
    pub x_star: f64,
    pub c_star: f64,
    pub m_bar_t: f64,
    pub r_bar_t: f64,
}

impl Default for TranslationParams {
    fn default() -> Self {
        Self {
            k: 1.0,
            chi_m: 1.0,
            chi_r: 10.0,
            chi_c: 1.0,
            r_m: 0.4,
            r_r: 0.2,
            x_star: 0.5,
            c_star: 4.0,
            m_bar_t: 1.0,
            r_bar_t: 1.0,
        }
    }
}

impl TranslationParams {
    /// Polysome radius: `v_c = v_m v_r` forces `r_c² = r_m² + r_r²`.
    pub fn r_c(&self) -> f64 {
        self.r_m.hypot(self.r_r)
    }

    /// All three diffusivities multiplied by `s`.
    pub fn with_diffusion_scale(mut self, s: f64) -> Self {
        self.chi_m *= s;
        self.chi_r *= s;
        self.chi_c *= s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k", self.k),
            ("chi_m", self.chi_m),
            ("chi_r", self.chi_r),
            ("chi_c", self.chi_c),
            ("c_star", self.c_star),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid_param(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("r_m", self.r_m),
            ("r_r", self.r_r),
            ("m_bar_t", self.m_bar_t),
            ("r_bar_t", self.r_bar_t),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid_param(name, format!("must be nonnegative, got {v}")));
            }
        }
        if !(self.x_star > 0.0 && self.x_star < 1.0) {
            return Err(invalid_param("x_star", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Volume profiles, their normalizations and the BCF.
#[derive(Debug, Clone)]
pub struct TranslationProfiles {
    pub v_m: VolumeProfile,
    pub v_r: VolumeProfile,
    pub v_c: VolumeProfile,
    pub vhat_m: ScalarField,
    pub vhat_r: ScalarField,
    pub vhat_c: ScalarField,
    pub bcf: f64,
}

impl TranslationProfiles {
    pub fn new(params: &TranslationParams, grid: &GridRef) -> Result<Self> {
        params.validate()?;
        let v_m = available_volume(params.r_m, params.x_star, grid)?;
        let v_r = available_volume(params.r_r, params.x_star, grid)?;
        let v_c = available_volume(params.r_c(), params.x_star, grid)?;
        Ok(Self {
            vhat_m: normalize_profile(&v_m.v)?,
            vhat_r: normalize_profile(&v_r.v)?,
            vhat_c: normalize_profile(&v_c.v)?,
            bcf: compute_bcf(&v_m, &v_r)?,
            v_m,
            v_r,
            v_c,
        })
    }

    fn raw(&self) -> [&ScalarField; 3] {
        [&self.v_m.v, &self.v_r.v, &self.v_c.v]
    }

    fn hats(&self) -> [&ScalarField; 3] {
        [&self.vhat_m, &self.vhat_r, &self.vhat_c]
    }

    pub fn diffusion(&self, params: &TranslationParams) -> Result<DiffusionSpec> {
        let chis = [params.chi_m, params.chi_r, params.chi_c];
        DiffusionSpec::new(
            self.raw()
                .iter()
                .zip(chis)
                .map(|(v, chi)| SpeciesDiffusion {
                    theta: 1.0,
                    d: v.map(|x| chi * x),
                })
                .collect(),
        )
    }

    /// Ψ = diag(v̂_m, v̂_r, v̂_c).
    pub fn psi(&self) -> PsiWeights {
        PsiWeights {
            fields: self.hats().iter().map(|f| (*f).clone()).collect(),
        }
    }
}

/// Species order: free mRNA `m`, free ribosomes `R`, polysomes `c`.
/// Binding flux `mR/K − c` leaves `m` and `R` and enters `c`.
pub fn translation_reaction(k: f64) -> ReactionSpec {
    ReactionSpec::new(
        3,
        move |_, _, z, out| {
            let b = z[0] * z[1] / k - z[2];
            out[0] = -b;
            out[1] = -b;
            out[2] = b;
        },
        move |_, _, z| {
            let (dm, dr) = (z[1] / k, z[0] / k);
            DMatrix::from_row_slice(3, 3, &[-dm, -dr, 1.0, -dm, -dr, 1.0, dm, dr, -1.0])
        },
        ReactionFlags::default(),
    )
}

/// Three-species translation model with θ = 1 and `dᵢ = χᵢ vᵢ(x)`; runs
/// fail on any concentration below `-1e-9`.
pub fn build_translation_model(params: &TranslationParams, grid: &GridRef) -> Result<RDSystem> {
    let profiles = TranslationProfiles::new(params, grid)?;
    Ok(RDSystem::new(grid, profiles.diffusion(params)?, translation_reaction(params.k))?.with_nonnegativity_check())
}

/// Nonuniform positive initial state whose totals match `m̄_T`, `R̄_T`,
/// with a fraction of the smaller total already bound.
pub fn translation_initial_state(params: &TranslationParams, grid: &GridRef, bound_fraction: f64) -> Vec<ScalarField> {
    let c0 = bound_fraction * params.m_bar_t.min(params.r_bar_t);
    let m0 = params.m_bar_t - c0;
    let r0 = params.r_bar_t - c0;
    vec![
        grid.field_from_fn(|x| m0 * (1.0 + 0.5 * (PI * x).cos())),
        grid.field_from_fn(|x| r0 * (1.0 - 0.5 * (PI * x).cos())),
        grid.field_from_fn(|x| c0 * (1.0 + 0.5 * (2.0 * PI * x).cos())),
    ]
}

/// Quasi-steady-state error variables.
#[derive(Debug, Clone)]
pub struct QssState {
    pub e_bar: f64,
    pub m_perp: ScalarField,
    pub r_perp: ScalarField,
    pub c_perp: ScalarField,
    /// `bcf · m̄ R̄ / K`, the reduced-model polysome level.
    pub c_qss: f64,
}

/// `ē = c̄ − bcf·m̄R̄/K` and deviations from `v̂ᵢ · (space average)`.
pub fn qss_errors(
    state: &[ScalarField],
    params: &TranslationParams,
    profiles: &TranslationProfiles,
) -> Result<QssState> {
    if state.len() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "translation state has 3 species, got {}",
            state.len()
        )));
    }
    let dec = decompose(state, &profiles.psi())?;
    let [m_bar, r_bar, c_bar] = [dec.w_bar[0], dec.w_bar[1], dec.w_bar[2]];
    let c_qss = profiles.bcf * m_bar * r_bar / params.k;
    let mut perp = dec.z_perp.into_iter();
    Ok(QssState {
        e_bar: c_bar - c_qss,
        m_perp: perp.next().expect("3 species"),
        r_perp: perp.next().expect("3 species"),
        c_perp: perp.next().expect("3 species"),
        c_qss,
    })
}

/// Pointwise and integral bounds on the invariant set and the resulting
/// certificate constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationBounds {
    pub m_star: f64,
    pub r_star: f64,
    pub m_perp_star: f64,
    pub r_perp_star: f64,
    pub eta_max: f64,
    pub beta_u: f64,
    pub beta_u_eta: f64,
    pub beta_h: f64,
    /// `sup vᵢ` for m, R, c.
    pub v_max: [f64; 3],
    /// `inf vᵢ` for m, R, c.
    pub v_min: [f64; 3],
    /// `sup v̂ᵢ` for m, R, c.
    pub vhat_max: [f64; 3],
}

fn extrema(fields: [&ScalarField; 3]) -> ([f64; 3], [f64; 3]) {
    (fields.map(|f| f.max()), fields.map(|f| f.min()))
}

/// `max_x Σᵢ (vᵢ*/vᵢ,*) zᵢ(x)`, which must not exceed `C*` initially.
pub fn invariant_entry_sum(state: &[ScalarField], profiles: &TranslationProfiles) -> f64 {
    let (vmax, vmin) = extrema(profiles.raw());
    weighted_max(state, |i| vmax[i] / vmin[i])
}

/// `max_x Σᵢ (vᵢ,*/vᵢ*) zᵢ(x)`, bounded by `C*` along trajectories.
pub fn invariant_trajectory_sum(state: &[ScalarField], profiles: &TranslationProfiles) -> f64 {
    let (vmax, vmin) = extrema(profiles.raw());
    weighted_max(state, |i| vmin[i] / vmax[i])
}

fn weighted_max(state: &[ScalarField], weight: impl Fn(usize) -> f64) -> f64 {
    let n = state[0].len();
    (0..n)
        .map(|k| (0..3).map(|i| weight(i) * state[i][k]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Evaluates the invariant-set bounds. With an initial state, also checks
/// that it lies in the set defined by `C*`.
///
/// Two choices keep the coupling bound sound where the formulas leave room:
/// `|v̂ᵢ − 1|` inside the `β_{u,η}` integrand, and `η_max²` in front of it.
/// The `1/K` scaling of the input vector is applied in `β_u` as well.
pub fn invariant_set_bounds(
    params: &TranslationParams,
    profiles: &TranslationProfiles,
    initial: Option<&[ScalarField]>,
) -> Result<TranslationBounds> {
    params.validate()?;
    if let Some(z0) = initial {
        if z0.len() != 3 {
            return Err(Error::DimensionMismatch("initial state needs 3 species".into()));
        }
        if let Some(v) = z0.iter().flat_map(|f| f.values()).find(|v| **v < 0.0) {
            return Err(Error::InvalidInvariantSet(format!(
                "initial state has a negative entry {v}"
            )));
        }
        let s = invariant_entry_sum(z0, profiles);
        if s > params.c_star {
            return Err(Error::InvalidInvariantSet(format!(
                "C* = {} is below the weighted initial sum {s}",
                params.c_star
            )));
        }
    }
    let (v_max, v_min) = extrema(profiles.raw());
    let (vhat_max, _) = extrema(profiles.hats());
    let m_star = params.c_star * v_max[0] / v_min[0];
    let r_star = params.c_star * v_max[1] / v_min[1];
    let m_perp_star = (vhat_max[0] * params.m_bar_t).max(m_star);
    let r_perp_star = (vhat_max[1] * params.r_bar_t).max(r_star);
    let k = params.k;
    let bcf = profiles.bcf;
    let eta_max = 1.0 + bcf * (params.m_bar_t + params.r_bar_t) / k;
    let beta_u = (((vhat_max[0] * params.m_bar_t + 0.5 * m_perp_star) / k).powi(2)
        + ((vhat_max[1] * params.r_bar_t + 0.5 * r_perp_star) / k).powi(2)
        + 1.0)
        .sqrt();
    let integrand = profiles.vhat_r.zip_map(&profiles.vhat_m, |vr, vm| {
        ((vr - 1.0).abs() * params.r_bar_t + 0.5 * r_perp_star).powi(2)
            + ((vm - 1.0).abs() * params.m_bar_t + 0.5 * m_perp_star).powi(2)
    });
    let beta_u_eta = (eta_max * eta_max / (k * k) * integrand.integrate()).sqrt();
    let h2 = profiles
        .vhat_r
        .zip_map(&profiles.vhat_m, |vr, vm| (vr - 1.0).powi(2) + (vm - 1.0).powi(2))
        .integrate();
    let beta_h = (h2 / (bcf * bcf)).sqrt();
    Ok(TranslationBounds {
        m_star,
        r_star,
        m_perp_star,
        r_perp_star,
        eta_max,
        beta_u,
        beta_u_eta,
        beta_h,
        v_max,
        v_min,
        vhat_max,
    })
}

/// Closed-form certificate: `λ₁ = 1`,
/// `λ₂ = Λ_* − √(3Ψ*/Ψ_*) β_u` with Λ from the eigenvalue floors,
/// `β = β_{u,η} + β_h`, and the small-gain test `λ₁λ₂ > β²/4`.
///
/// The report also records whether the test survives with the true
/// `m₂,* = 1/Ψ*` of the metric `Ψ⁻¹`.
pub fn translation_certificate(
    params: &TranslationParams,
    profiles: &TranslationProfiles,
    bounds: &TranslationBounds,
) -> Result<CertificateReport> {
    let spec = profiles.diffusion(params)?;
    let lambda_star_diff = spec.lambda_bounds().into_iter().fold(f64::INFINITY, f64::min);
    let psi = profiles.psi();
    let (psi_max, psi_min) = (psi.max(), psi.min());
    let lambda2 = lambda_star_diff - (3.0 * psi_max / psi_min).sqrt() * bounds.beta_u;
    let beta = bounds.beta_u_eta + bounds.beta_h;
    let mut report = CertificateReport::from_margins(1.0, lambda2, beta, 1.0, 1.0);
    let strict = crate::certificates::small_gain(1.0, lambda2, beta, 1.0, 1.0 / psi_max);
    report.notes.push(format!(
        "small gain with m2* = 1/Psi* = {:.6e}: {}",
        1.0 / psi_max,
        if strict.pass { "pass" } else { "fail" }
    ));
    Ok(report)
}

/// Smallest diffusion scale `s` (within `rel_tol`) at which the
/// closed-form certificate passes, searched over `[1, s_max]`.
pub fn translation_threshold_scale(
    params: &TranslationParams,
    grid: &GridRef,
    s_max: f64,
    rel_tol: f64,
) -> Result<Option<f64>> {
    let passes = |s: f64| -> Result<bool> {
        let p = params.with_diffusion_scale(s);
        let prof = TranslationProfiles::new(&p, grid)?;
        let b = invariant_set_bounds(&p, &prof, None)?;
        Ok(translation_certificate(&p, &prof, &b)?.pass)
    };
    if passes(1.0)? {
        return Ok(Some(1.0));
    }
    if !passes(s_max)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (1.0, s_max);
    while hi / lo > 1.0 + rel_tol {
        let mid = (lo * hi).sqrt();
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// The linear virtual error system dispatched through the sampled
/// pipeline. The sampled inputs are `(m̄, R̄, m⊥, R⊥)` over
/// `[0, m̄_T] × [0, R̄_T] × [−m⊥*, m⊥*] × [−R⊥*, R⊥*]`.
pub fn translation_virtual_inputs(
    params: &TranslationParams,
    profiles: &TranslationProfiles,
    bounds: &TranslationBounds,
    opts: &CertifyOptions,
) -> Result<CertificateInputs> {
    let spec = profiles.diffusion(params)?;
    let grid = profiles.vhat_m.grid().clone();
    let k = params.k;
    let bcf = profiles.bcf;
    let vm = Arc::new(profiles.vhat_m.clone());
    let vr = Arc::new(profiles.vhat_r.clone());
    let vc = Arc::new(profiles.vhat_c.clone());
    let eta = move |p: &[f64]| 1.0 + bcf * (p[0] + p[1]) / k;
    let u_of = {
        let (vm, vr) = (vm.clone(), vr.clone());
        move |node: usize, p: &[f64]| {
            DVector::from_vec(vec![
                (vr[node] * p[1] + 0.5 * p[3]) / k,
                (vm[node] * p[0] + 0.5 * p[2]) / k,
                0.0,
            ])
        }
    };
    let v = DVector::from_vec(vec![-1.0, -1.0, 1.0]);
    let jac_f1: AverageSampler = Arc::new(move |_, p| DMatrix::from_element(1, 1, -eta(p)));
    let u2 = u_of.clone();
    let v2 = v.clone();
    let jac_f2: PointSampler = Arc::new(move |pr| {
        let mut ut = u2(pr.node, pr.p);
        ut[2] -= 1.0;
        &v2 * ut.transpose()
    });
    let u3 = u_of;
    let jac_g1: PointSampler = Arc::new(move |pr| {
        let row = u3(pr.node, pr.p) * eta(pr.p);
        DMatrix::from_row_slice(1, 3, row.as_slice())
    });
    let jac_g2: PointSampler = Arc::new(move |pr| DMatrix::from_column_slice(3, 1, (-&v * vc[pr.node]).as_slice()));
    let state_box = StateBox::new(
        vec![0.0, 0.0, -bounds.m_perp_star, -bounds.r_perp_star],
        vec![params.m_bar_t, params.r_bar_t, bounds.m_perp_star, bounds.r_perp_star],
    )?;
    Ok(CertificateInputs {
        x_nodes: opts.x_nodes.clone().unwrap_or_else(|| (0..grid.len()).collect()),
        m1: DMatrix::identity(1, 1),
        gamma: vec![1.0; 3],
        psi: profiles.psi(),
        lambda: crate::certificates::diffusion_margins(&spec, opts.lambda_source)?,
        lambda_source: opts.lambda_source,
        times: opts.times.clone(),
        state_box,
        sampling: opts.sampling,
        jac_f1,
        jac_f2,
        jac_g1,
        jac_g2,
        grid,
    })
}

pub fn translation_virtual_certificate(
    params: &TranslationParams,
    profiles: &TranslationProfiles,
    bounds: &TranslationBounds,
    opts: &CertifyOptions,
) -> Result<CertificateReport> {
    let mut report = certify(&translation_virtual_inputs(params, profiles, bounds, opts)?)?;
    report
        .notes
        .push("virtual error system, sampled inputs (m, R, m_perp, R_perp)".into());
    Ok(report)
}

/// Named presets addressable from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelPreset {
    #[serde(rename = "example31")]
    Example31,
    #[serde(rename = "example32")]
    Example32,
    #[serde(rename = "translation")]
    Translation,
}

impl std::str::FromStr for ModelPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example31" => Ok(Self::Example31),
            "example32" => Ok(Self::Example32),
            "translation" => Ok(Self::Translation),
            other => Err(invalid_param("model", format!("unknown preset `{other}`"))),
        }
    }
}

/// Default Λ source for the closed-form certificates.
pub const DEFAULT_LAMBDA_SOURCE: LambdaSource = LambdaSource::AnalyticFloor;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialGrid;
    use crate::simulator::{integrate, log_norm_slope, preset_ones};

    fn grid(n: usize) -> GridRef {
        SpatialGrid::uniform(n).unwrap()
    }

    #[test]
    fn example_3_1_average_rate() {
        let g = grid(500);
        for omega in [0.0, 0.1, 1.0, 3.0] {
            let a = g.field_from_fn(|x| example_3_1_rate(0.01, omega, x));
            assert!((a.integrate() + 0.01).abs() < 1e-5, "omega {omega}");
        }
        let a = g.field_from_fn(|x| example_3_1_rate(0.01, 0.0, x));
        assert!(a.values().iter().all(|&v| v == -0.01));
        assert!(matches!(
            build_example_3_1(0.0, 0.1, &g),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn example_3_1_average_rate_converges() {
        let g = grid(4001);
        let a = g.field_from_fn(|x| example_3_1_rate(0.01, 1.0, x));
        assert!((a.integrate() + 0.01).abs() < 1e-7);
    }

    #[test]
    fn example_3_1_small_and_large_omega() {
        let g = grid(200);
        let z0 = preset_ones(&g, 1);
        let slope = |omega: f64| {
            let sys = build_example_3_1(0.01, omega, &g).unwrap();
            let traj = integrate(&sys, &z0, 100.0, 0.1, 10).unwrap();
            log_norm_slope(&traj, 80.0, 100.0).unwrap()
        };
        assert!(slope(0.01) < 0.0);
        assert!(slope(1.0) > 0.0);
    }

    #[test]
    fn example_3_2_basics() {
        let a = example_3_2_matrix();
        let eig = a.complex_eigenvalues();
        for e in eig.iter() {
            assert!((e.re + 0.25).abs() < 1e-12);
            assert!((e.im.abs() - 0.661).abs() < 1e-3);
        }
        let g = grid(100);
        let (spec, profile) = example_3_2_diffusion(3.0, 0.0, &g).unwrap();
        assert_eq!(profile.nu(), 1.0);
        let psi = spec.psi_weights().unwrap();
        assert!(psi.fields[1].values().iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let bounds = spec.lambda_bounds();
        assert!((bounds[0] - 30.0).abs() < 1e-12 && (bounds[1] - 0.75).abs() < 1e-12);
        assert!(build_example_3_2(-1.0, 0.0, &g).is_err());
        assert!(build_example_3_2(1.0, -0.5, &g).is_err());
    }

    #[test]
    fn example_3_2_hierarchical_matches_minors() {
        let g = grid(200);
        for r in [0.0, 1.0] {
            let nu = available_volume(r, 0.5, &g).unwrap().nu();
            for (factor, expect) in [(0.9, false), (0.99, false), (1.02, true), (1.5, true)] {
                let zeta = factor * 2.0 / nu;
                let rep = example_3_2_certificate(zeta, r, &g, &CertifyOptions::default()).unwrap();
                assert_eq!(rep.pass, expect, "r {r} factor {factor}");
            }
        }
    }

    #[test]
    fn bcf_examples() {
        let g = grid(500);
        let flat = available_volume(0.0, 0.5, &g).unwrap();
        assert_eq!(compute_bcf(&flat, &flat).unwrap(), 1.0);
        let v = available_volume(0.8, 0.5, &g).unwrap();
        assert!(compute_bcf(&v, &v).unwrap() >= 1.0);
        let other = available_volume(0.8, 0.5, &grid(400)).unwrap();
        assert!(compute_bcf(&v, &other).is_err());
    }

    #[test]
    fn bcf_matches_fine_quadrature() {
        // Simpson's rule on 10⁴ intervals as an independent oracle
        let n = 10_000;
        let simpson = |f: &dyn Fn(f64) -> f64| {
            let h = 1.0 / n as f64;
            let mut s = f(0.0) + f(1.0);
            for i in 1..n {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
            }
            s * h / 3.0
        };
        let v = |x: f64| (-0.25 * crate::grid::nucleoid_density(x, 0.5)).exp();
        let oracle = simpson(&|x| v(x) * v(x)) / simpson(&v).powi(2);
        let g = grid(500);
        let p = available_volume(0.5, 0.5, &g).unwrap();
        let bcf = compute_bcf(&p, &p).unwrap();
        assert!((bcf - oracle).abs() / oracle < 1e-3);
    }

    #[test]
    fn nu_nonincreasing_in_r() {
        let g = grid(300);
        let nus: Vec<f64> = (0..=20)
            .map(|k| available_volume(k as f64 * 0.1, 0.5, &g).unwrap().nu())
            .collect();
        assert!(nus.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn polysome_profile_factorizes() {
        let g = grid(120);
        let p = TranslationProfiles::new(&TranslationParams::default(), &g).unwrap();
        for k in 0..120 {
            assert!((p.v_c.v[k] - p.v_m.v[k] * p.v_r.v[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn translation_zero_state_stays_zero() {
        let g = grid(80);
        let sys = build_translation_model(&TranslationParams::default(), &g).unwrap();
        let z0 = vec![g.constant_field(0.0); 3];
        let traj = integrate(&sys, &z0, 5.0, 0.05, 10).unwrap();
        assert!(traj.norms.iter().all(|&n| n == 0.0));
    }

    #[test]
    fn translation_jacobian_consistent() {
        let r = translation_reaction(0.7);
        let probes: Vec<_> = (0..8)
            .map(|k| (0.0, 0.5, vec![0.1 * k as f64, 1.0 - 0.1 * k as f64, 0.3]))
            .collect();
        assert!(r.jacobian_fd_error(&probes) < 1e-5);
    }

    #[test]
    fn qss_manifold_has_zero_errors() {
        let g = grid(150);
        let params = TranslationParams::default();
        let prof = TranslationProfiles::new(&params, &g).unwrap();
        let (m_bar, r_bar) = (0.6, 0.9);
        let c_bar = prof.bcf * m_bar * r_bar / params.k;
        let state = vec![
            prof.vhat_m.map(|v| v * m_bar),
            prof.vhat_r.map(|v| v * r_bar),
            prof.vhat_c.map(|v| v * c_bar),
        ];
        let q = qss_errors(&state, &params, &prof).unwrap();
        assert!(q.e_bar.abs() < 1e-10);
        for f in [&q.m_perp, &q.r_perp, &q.c_perp] {
            assert!(f.values().iter().all(|v| v.abs() < 1e-10));
        }
        let z0 = translation_initial_state(&params, &g, 0.2);
        let q = qss_errors(&z0, &params, &prof).unwrap();
        for f in [&q.m_perp, &q.r_perp, &q.c_perp] {
            assert!(f.integrate().abs() < 1e-10);
        }
    }

    #[test]
    fn homogeneous_bounds() {
        let g = grid(100);
        let params = TranslationParams {
            r_m: 0.0,
            r_r: 0.0,
            ..Default::default()
        };
        let prof = TranslationProfiles::new(&params, &g).unwrap();
        let b = invariant_set_bounds(&params, &prof, None).unwrap();
        assert_eq!((b.m_star, b.r_star), (params.c_star, params.c_star));
        assert!(b.beta_h.abs() < 1e-14);
        let zero_totals = TranslationParams {
            m_bar_t: 0.0,
            r_bar_t: 0.0,
            ..Default::default()
        };
        let prof = TranslationProfiles::new(&zero_totals, &g).unwrap();
        assert_eq!(invariant_set_bounds(&zero_totals, &prof, None).unwrap().eta_max, 1.0);
    }

    #[test]
    fn beta_u_worked_value() {
        let g = grid(500);
        let params = TranslationParams::default();
        let prof = TranslationProfiles::new(&params, &g).unwrap();
        let b = invariant_set_bounds(&params, &prof, None).unwrap();
        let vm = prof.vhat_m.max();
        let vr = prof.vhat_r.max();
        let m_star = 4.0 * prof.v_m.v.max() / prof.v_m.v.min();
        let r_star = 4.0 * prof.v_r.v.max() / prof.v_r.v.min();
        let mp = vm.max(m_star);
        let rp = vr.max(r_star);
        let expected = ((vm + 0.5 * mp).powi(2) + (vr + 0.5 * rp).powi(2) + 1.0).sqrt();
        assert!((b.beta_u - expected).abs() < 1e-14);
        assert!((b.eta_max - (1.0 + 2.0 * prof.bcf)).abs() < 1e-14);
    }

    #[test]
    fn initial_state_checked_against_c_star() {
        let g = grid(100);
        let params = TranslationParams::default();
        let prof = TranslationProfiles::new(&params, &g).unwrap();
        let z0 = translation_initial_state(&params, &g, 0.2);
        assert!(invariant_set_bounds(&params, &prof, Some(&z0)).is_ok());
        let tight = TranslationParams { c_star: 1.0, ..params };
        assert!(matches!(
            invariant_set_bounds(&tight, &prof, Some(&z0)),
            Err(Error::InvalidInvariantSet(_))
        ));
    }

    #[test]
    fn certificate_monotone_in_diffusion_scale() {
        let g = grid(200);
        let params = TranslationParams::default();
        let s_min = translation_threshold_scale(&params, &g, 1e4, 1e-3)
            .unwrap()
            .expect("finite threshold");
        let passes = |s: f64| {
            let p = params.with_diffusion_scale(s);
            let prof = TranslationProfiles::new(&p, &g).unwrap();
            let b = invariant_set_bounds(&p, &prof, None).unwrap();
            translation_certificate(&p, &prof, &b).unwrap().pass
        };
        for f in [1.01, 1.5, 3.0, 10.0] {
            assert!(passes(s_min * f));
        }
        if s_min > 1.0 {
            assert!(!passes(s_min * 0.99));
        }
    }

    #[test]
    fn sampled_virtual_certificate_within_closed_form() {
        let g = grid(120);
        let params = TranslationParams::default().with_diffusion_scale(20.0);
        let prof = TranslationProfiles::new(&params, &g).unwrap();
        let b = invariant_set_bounds(&params, &prof, None).unwrap();
        let closed = translation_certificate(&params, &prof, &b).unwrap();
        let opts = CertifyOptions {
            sampling: crate::certificates::SamplingConfig { n_random: 16, seed: 3 },
            ..Default::default()
        };
        let sampled = translation_virtual_certificate(&params, &prof, &b, &opts).unwrap();
        assert!(sampled.lambda2 >= closed.lambda2 - 1e-9);
        assert!(sampled.beta <= closed.beta + 1e-9);
        assert!((sampled.lambda1 - 1.0).abs() <= b.eta_max);
    }
}
