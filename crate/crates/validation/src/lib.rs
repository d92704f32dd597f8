//! Acceptance criteria for the solver, certificates and models. Each
//! criterion runs end to end and reports a verdict with the measured values.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rdcontract::certificates::{
    certify, certify_hierarchical, certify_scalar_fickian, certify_scalar_small_omega, diagonal_stability_2x2,
    CertifyOptions,
};
use rdcontract::diffusion::{eigenvalue_lower_bound, second_eigenvalue_numeric, ThetaOperator};
use rdcontract::grid::{available_volume, nucleoid_density};
use rdcontract::models::{
    build_example_3_1, build_example_3_2, build_translation_model, compute_bcf, example_3_1_diffusivity,
    example_3_1_rate, example_3_2_diffusion, example_3_2_inputs, example_3_2_matrix, invariant_entry_sum,
    invariant_trajectory_sum, qss_errors, translation_initial_state, TranslationParams, TranslationProfiles,
};
use rdcontract::simulator::{
    contraction_decay_check, critical_parameter, integrate, preset_ones, preset_ramp, random_smooth_state,
    StabilityProtocol, Trajectory,
};
use rdcontract::{GridRef, ScalarField, SpatialGrid};

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn grid500() -> GridRef {
    SpatialGrid::uniform(500).unwrap()
}

/// Smooth positive field `exp(Σ aₖ cos(kπx + φₖ))` with random amplitudes.
fn random_diffusivity(grid: &GridRef, rng: &mut ChaCha8Rng) -> ScalarField {
    let terms: Vec<(f64, f64)> = (1..=4)
        .map(|_| (rng.random_range(-0.4..0.4), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let scale: f64 = rng.random_range(0.05..2.0);
    grid.field_from_fn(|x| {
        let s: f64 = terms
            .iter()
            .enumerate()
            .map(|(k, (a, phi))| a * ((k + 1) as f64 * PI * x + phi).cos())
            .sum();
        scale * s.exp()
    })
}

fn random_cases() -> Vec<(f64, ScalarField)> {
    let g = grid500();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let thetas = [0.0, 0.25, 0.5, 1.0];
    (0..20)
        .map(|k| (thetas[k % 4], random_diffusivity(&g, &mut rng)))
        .collect()
}

fn random_operators() -> Vec<ThetaOperator> {
    random_cases()
        .iter()
        .map(|(theta, d)| ThetaOperator::assemble(*theta, d).unwrap())
        .collect()
}

pub fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = f64::INFINITY;
    for (theta, d) in random_cases() {
        let bound = eigenvalue_lower_bound(theta, &d).unwrap();
        let (lambda, _) = second_eigenvalue_numeric(&ThetaOperator::assemble(theta, &d).unwrap()).unwrap();
        worst = worst.min(lambda / bound);
    }
    let elapsed = start.elapsed();
    outcome(
        worst >= 0.98 && elapsed <= Duration::from_secs(30),
        format!(
            "min numeric/bound = {worst:.4} over 20 cases, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn random_probe(grid: &GridRef, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Random cosine series with eight modes and unit-scale coefficients.
fn random_smooth_probe(grid: &GridRef, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    grid.nodes()
        .iter()
        .map(|&x| c.iter().enumerate().map(|(k, a)| a * (k as f64 * PI * x).cos()).sum())
        .collect()
}

pub fn criterion_2() -> Outcome {
    let g = grid500();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut null, mut cons, mut noise) = (0.0f64, 0.0f64, 0.0f64);
    for op in random_operators() {
        null = null.max(g.l2_norm(&op.apply(op.psi().values())));
        for _ in 0..5 {
            let y = random_smooth_probe(&g, &mut rng);
            cons = cons.max(g.integrate(&op.apply(&y)).abs());
            let y = random_probe(&g, &mut rng);
            noise = noise.max(g.integrate(&op.apply(&y)).abs());
        }
    }
    outcome(
        null <= 1e-10 && cons <= 1e-12,
        format!("max ||L psi|| = {null:.2e}, max |int L y| = {cons:.2e} (nodewise white noise: {noise:.2e})"),
    )
}

pub fn criterion_3() -> Outcome {
    let g = grid500();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for op in random_operators() {
        for _ in 0..5 {
            let u = random_probe(&g, &mut rng);
            let v = random_probe(&g, &mut rng);
            let lhs = op.weighted_dot(&u, &op.apply(&v));
            let rhs = op.weighted_dot(&op.apply(&u), &v);
            worst = worst.max((lhs - rhs).abs() / (g.l2_norm(&u) * g.l2_norm(&v)));
        }
    }
    outcome(worst <= 1e-10, format!("max relative asymmetry = {worst:.2e}"))
}

fn example_3_1_slope(epsilon: f64, omega: f64, grid: &GridRef) -> f64 {
    let sys = build_example_3_1(epsilon, omega, grid).unwrap();
    StabilityProtocol::default().slope(&sys, &preset_ones(grid, 1)).unwrap()
}

fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    std::thread::scope(|s| {
        let handles: Vec<_> = items.iter().map(|it| s.spawn(|| f(it))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

pub fn criterion_4() -> Outcome {
    let start = Instant::now();
    let g = grid500();
    let eps = 1e-2;
    let omegas: Vec<f64> = (0..11).map(|k| 10f64.powf(-3.0 + 0.3 * k as f64)).collect();
    let slopes = parallel_map(&omegas, |&w| example_3_1_slope(eps, w, &g));
    let sweep_time = start.elapsed();
    let Some(k) = slopes.windows(2).position(|w| w[0] < 0.0 && w[1] >= 0.0) else {
        return outcome(false, format!("no sign change in sweep, slopes {slopes:?}"));
    };
    let omega_cr = critical_parameter(|w| Ok(example_3_1_slope(eps, w, &g)), omegas[k], omegas[k + 1], 1e-3).unwrap();
    outcome(
        (0.15..=0.6).contains(&omega_cr) && sweep_time <= Duration::from_secs(300),
        format!(
            "omega_cr = {omega_cr:.4} (target [0.15, 0.6]), 11-point sweep {:.1}s",
            sweep_time.as_secs_f64()
        ),
    )
}

pub fn criterion_5() -> Outcome {
    let eps = 1e-2;
    let d = example_3_1_diffusivity(eps);
    let passes = |w: f64| certify_scalar_small_omega(eps, w, d).unwrap().pass;
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let boundary = 0.5 * (lo + hi);
    let exact = (33f64.sqrt() - 3.0) * eps;
    let g = grid500();
    let probes: Vec<f64> = (0..10).map(|k| 10f64.powf(-3.0 + 2.0 * k as f64 / 9.0)).collect();
    let checks = parallel_map(&probes, |&w| {
        let a = g.field_from_fn(|x| example_3_1_rate(eps, w, x));
        let certified = certify_scalar_fickian(&a, d).unwrap().pass;
        (certified, example_3_1_slope(eps, w, &g))
    });
    let certified = checks.iter().filter(|c| c.0).count();
    let subset = checks.iter().all(|(c, s)| !c || *s < 0.0);
    outcome(
        (boundary - exact).abs() <= 1e-6 && subset,
        format!(
            "boundary = {boundary:.6e} vs (sqrt33-3)eps = {exact:.6e}; {certified}/10 probes certified, all stable: {subset}"
        ),
    )
}

pub fn criterion_6() -> Outcome {
    let start = Instant::now();
    let g = grid500();
    let rs = [0.0, 0.25, 0.5, 0.75, 1.0];
    let results = parallel_map(&rs, |&r| {
        let slope = |zeta: f64| {
            let sys = build_example_3_2(zeta, r, &g)?;
            StabilityProtocol::default().slope(&sys, &preset_ramp(&g))
        };
        let zeta_cr = critical_parameter(slope, 1.0, 10.0, 0.05);
        let bound = 2.0 / available_volume(r, 0.5, &g).unwrap().nu();
        (zeta_cr, bound)
    });
    let elapsed = start.elapsed();
    let mut pass = elapsed <= Duration::from_secs(600);
    let mut parts = vec![];
    let mut prev = f64::NEG_INFINITY;
    for (r, (zc, bound)) in rs.iter().zip(&results) {
        match zc {
            Ok(z) => {
                pass &= *z <= *bound && *z >= prev;
                prev = *z;
                parts.push(format!("r={r}: {z:.3}<={bound:.3}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("r={r}: {e}"));
            }
        }
    }
    outcome(pass, format!("{}, {:.1}s", parts.join(", "), elapsed.as_secs_f64()))
}

fn decay_ratio(traj_pairs: impl Fn(u64) -> f64) -> f64 {
    [1u64, 2].iter().map(|&s| traj_pairs(s)).fold(0.0, f64::max)
}

pub fn criterion_7() -> Outcome {
    let g = SpatialGrid::uniform(200).unwrap();
    let eps = 1e-2;
    let mut parts = vec![];
    let mut pass = true;
    let scalar_cases = [
        (0.005, example_3_1_diffusivity(eps)),
        (0.02, example_3_1_diffusivity(eps)),
        (0.2, 0.1),
    ];
    for (omega, d) in scalar_cases {
        let a = g.field_from_fn(|x| example_3_1_rate(eps, omega, x));
        let rep = certify_scalar_fickian(&a, d).unwrap();
        let sys = rdcontract::models::build_example_3_1_with_diffusivity(eps, omega, d, &g).unwrap();
        let lambda = rep.lambda_star.unwrap_or(f64::NAN);
        let ratio = decay_ratio(|seed| {
            let za = random_smooth_state(&g, 1, -1.0, 1.0, 10 * seed);
            let zb = random_smooth_state(&g, 1, -1.0, 1.0, 10 * seed + 1);
            contraction_decay_check(
                &sys,
                &za,
                &zb,
                &DMatrix::identity(1, 1),
                &[1.0],
                sys.psi(),
                20.0,
                0.01,
                10,
            )
            .unwrap()
            .worst_envelope_ratio(lambda)
        });
        pass &= rep.pass && ratio <= 1.10;
        parts.push(format!(
            "scalar w={omega} d={d:.3}: certified={} ratio={ratio:.3}",
            rep.pass
        ));
    }
    for (zeta, r) in [(6.0, 0.0), (8.0, 0.5)] {
        let inputs = example_3_2_inputs(zeta, r, &g, &CertifyOptions::default()).unwrap();
        let rep = certify(&inputs).unwrap();
        let sys = build_example_3_2(zeta, r, &g).unwrap();
        let lambda = rep.lambda_star.unwrap_or(f64::NAN);
        let ratio = decay_ratio(|seed| {
            let za = random_smooth_state(&g, 2, -1.0, 1.0, 100 * seed);
            let zb = random_smooth_state(&g, 2, -1.0, 1.0, 100 * seed + 1);
            contraction_decay_check(&sys, &za, &zb, &inputs.m1, &inputs.gamma, &inputs.psi, 10.0, 0.005, 10)
                .unwrap()
                .worst_envelope_ratio(lambda)
        });
        pass &= rep.pass && ratio <= 1.10;
        parts.push(format!(
            "2-species zeta={zeta} r={r}: certified={} ratio={ratio:.3}",
            rep.pass
        ));
    }
    outcome(pass, parts.join("; "))
}

fn simpson(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = 1.0 / n as f64;
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0
}

pub fn criterion_8() -> Outcome {
    let g = grid500();
    let flat = available_volume(0.0, 0.5, &g).unwrap();
    let exact_one = compute_bcf(&flat, &flat).unwrap() == 1.0;
    let v = |x: f64| (-0.25 * nucleoid_density(x, 0.5)).exp();
    // Richardson on Simpson (fourth order) between 5000 and 10000 intervals
    let ratio = |n: usize| simpson(n, |x| v(x) * v(x)) / simpson(n, v).powi(2);
    let oracle = (16.0 * ratio(10_000) - ratio(5_000)) / 15.0;
    let p = available_volume(0.5, 0.5, &g).unwrap();
    let bcf = compute_bcf(&p, &p).unwrap();
    let rel = (bcf - oracle).abs() / oracle;
    let identical_ge_one = [0.2, 0.5, 1.0, 2.0].iter().all(|&r| {
        let p = available_volume(r, 0.5, &g).unwrap();
        compute_bcf(&p, &p).unwrap() >= 1.0
    });
    outcome(
        exact_one && rel <= 1e-3 && identical_ge_one,
        format!("constant -> 1 exactly: {exact_one}; n=500 {bcf:.8} vs oracle {oracle:.8} (rel {rel:.1e}); identical >= 1: {identical_ge_one}"),
    )
}

fn translation_run(params: &TranslationParams, t_end: f64, z0: &[ScalarField]) -> rdcontract::Result<Trajectory> {
    let g = z0[0].grid().clone();
    let sys = build_translation_model(params, &g)?;
    let dt = sys.default_dt(z0);
    integrate(&sys, z0, t_end, dt, 10)
}

pub fn criterion_9() -> Outcome {
    let g = grid500();
    let params = TranslationParams::default();
    let z0 = translation_initial_state(&params, &g, 0.2);
    let traj = match translation_run(&params, 50.0, &z0) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("simulation failed: {e}")),
    };
    let totals = |s: &[ScalarField]| (s[2].integrate() + s[0].integrate(), s[2].integrate() + s[1].integrate());
    let (m0, r0) = totals(&traj.states[0]);
    let drift = traj.states.iter().fold(0.0f64, |acc, s| {
        let (m, r) = totals(s);
        acc.max((m - m0).abs()).max((r - r0).abs())
    });
    outcome(
        drift <= 1e-8,
        format!("max drift of c+m and c+R totals over t=50: {drift:.2e}"),
    )
}

pub fn criterion_10() -> Outcome {
    let g = grid500();
    let params = TranslationParams::default().with_diffusion_scale(100.0);
    let profiles = TranslationProfiles::new(&params, &g).unwrap();
    let z0 = translation_initial_state(&params, &g, 0.2);
    let traj = match translation_run(&params, 20.0, &z0) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("simulation failed: {e}")),
    };
    let q0 = qss_errors(&traj.states[0], &params, &profiles).unwrap();
    let q1 = qss_errors(traj.final_state(), &params, &profiles).unwrap();
    let e_rel = q1.e_bar.abs() / q1.c_qss;
    let decay = [
        q0.m_perp.l2_norm() / q1.m_perp.l2_norm(),
        q0.r_perp.l2_norm() / q1.r_perp.l2_norm(),
        q0.c_perp.l2_norm() / q1.c_perp.l2_norm(),
    ];
    outcome(
        e_rel <= 0.01 && decay.iter().all(|&d| d >= 100.0),
        format!(
            "|e|/(bcf m R/K) = {e_rel:.2e}; decay factors m {:.1e}, R {:.1e}, c {:.1e}",
            decay[0], decay[1], decay[2]
        ),
    )
}

pub fn criterion_11() -> Outcome {
    let g = grid500();
    let mut min_value = f64::INFINITY;
    let mut worst_sum = 0.0f64;
    let mut c_star = 0.0;
    for scale in [1.0, 100.0] {
        let params = TranslationParams::default().with_diffusion_scale(scale);
        c_star = params.c_star;
        let profiles = TranslationProfiles::new(&params, &g).unwrap();
        let mut initials = vec![translation_initial_state(&params, &g, 0.2)];
        initials.extend((0..2).map(|s| random_smooth_state(&g, 3, 0.0, 1.0, 500 + s)));
        for z0 in initials {
            if invariant_entry_sum(&z0, &profiles) > params.c_star {
                return outcome(false, "initial state outside the invariant set");
            }
            let traj = match translation_run(&params, 30.0, &z0) {
                Ok(t) => t,
                Err(e) => return outcome(false, format!("simulation failed: {e}")),
            };
            for s in &traj.states {
                min_value = s.iter().map(|f| f.min()).fold(min_value, f64::min);
                worst_sum = worst_sum.max(invariant_trajectory_sum(s, &profiles));
            }
        }
    }
    outcome(
        min_value >= -1e-9 && worst_sum <= c_star,
        format!("min concentration {min_value:.2e}; max weighted sum {worst_sum:.4} <= C* = {c_star}"),
    )
}

pub fn criterion_12() -> Outcome {
    let g = grid500();
    let opts = CertifyOptions::default();
    let a = example_3_2_matrix();
    let mut mismatches = vec![];
    let mut total = 0;
    for r in [0.0, 0.5, 1.0] {
        let nu = available_volume(r, 0.5, &g).unwrap().nu();
        for factor in [0.5, 0.9, 0.99, 1.02, 1.1, 2.0, 5.0] {
            let zeta = factor * 2.0 / nu;
            let inputs = example_3_2_inputs(zeta, r, &g, &opts).unwrap();
            let rep = certify_hierarchical(1, &inputs).unwrap();
            let (spec, _) = example_3_2_diffusion(zeta, r, &g).unwrap();
            let floors = spec.lambda_bounds();
            let b = &a - DMatrix::from_diagonal(&nalgebra::DVector::from_vec(floors));
            let (minors, _) = diagonal_stability_2x2(&b).unwrap();
            let expected = factor > 1.0;
            total += 1;
            if rep.pass != expected || minors != expected {
                mismatches.push(format!("r={r} x{factor}: cert={} minors={}", rep.pass, minors));
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{total} cases agree with zeta > 2/nu(r)")
        } else {
            mismatches.join(", ")
        },
    )
}

pub type Criterion = (&'static str, fn() -> Outcome);

/// All criteria in order.
pub fn criteria() -> [Criterion; 12] {
    [
        ("eigenvalue floor", criterion_1),
        ("null space and conservation", criterion_2),
        ("weighted self-adjointness", criterion_3),
        ("scalar omega sweep critical value", criterion_4),
        ("scalar analytic certified boundary", criterion_5),
        ("two-species critical zeta bound", criterion_6),
        ("contraction decay envelope", criterion_7),
        ("binding correction factor", criterion_8),
        ("translation conservation", criterion_9),
        ("QSS convergence", criterion_10),
        ("invariant set", criterion_11),
        ("hierarchical shortcut", criterion_12),
    ]
}
