use rdcontract::certificates::CertifyOptions;
use rdcontract::grid::available_volume;
use rdcontract::models::{
    build_example_3_2, build_translation_model, example_3_2_certificate, invariant_set_bounds, qss_errors,
    translation_certificate, translation_initial_state, TranslationParams, TranslationProfiles,
};
use rdcontract::simulator::{integrate, preset_ramp, random_smooth_state, StabilityProtocol};
use rdcontract::SpatialGrid;

#[test]
fn certified_two_species_system_is_stable() {
    let g = SpatialGrid::uniform(200).unwrap();
    let r = 0.5;
    let zeta = 1.2 * 2.0 / available_volume(r, 0.5, &g).unwrap().nu();
    let report = example_3_2_certificate(zeta, r, &g, &CertifyOptions::default()).unwrap();
    assert!(report.pass);
    let sys = build_example_3_2(zeta, r, &g).unwrap();
    let slope = StabilityProtocol::default().slope(&sys, &preset_ramp(&g)).unwrap();
    assert!(slope < -report.lambda_star.unwrap() + 1e-9);
}

#[test]
fn certified_translation_model_reaches_qss() {
    let g = SpatialGrid::uniform(200).unwrap();
    let params = TranslationParams::default().with_diffusion_scale(50.0);
    let profiles = TranslationProfiles::new(&params, &g).unwrap();
    let z0 = translation_initial_state(&params, &g, 0.3);
    let bounds = invariant_set_bounds(&params, &profiles, Some(&z0)).unwrap();
    assert!(translation_certificate(&params, &profiles, &bounds).unwrap().pass);
    let sys = build_translation_model(&params, &g).unwrap();
    let traj = integrate(&sys, &z0, 15.0, 0.02, 50).unwrap();
    let q = qss_errors(traj.final_state(), &params, &profiles).unwrap();
    assert!(q.e_bar.abs() < 1e-3 * q.c_qss);
    assert!(q.m_perp.l2_norm() < 1e-6);
}

#[test]
fn qss_errors_decay_at_certified_rate() {
    let g = SpatialGrid::uniform(200).unwrap();
    let params = TranslationParams::default().with_diffusion_scale(50.0);
    let profiles = TranslationProfiles::new(&params, &g).unwrap();
    let bounds = invariant_set_bounds(&params, &profiles, None).unwrap();
    let report = translation_certificate(&params, &profiles, &bounds).unwrap();
    let rate = report.lambda_star.expect("certified");
    let sys = build_translation_model(&params, &g).unwrap();
    let psi = profiles.psi();
    for seed in [3, 4] {
        let z0 = random_smooth_state(&g, 3, 0.0, 0.6, seed);
        assert!(invariant_set_bounds(&params, &profiles, Some(&z0)).is_ok());
        let traj = integrate(&sys, &z0, 5.0, 0.01, 10).unwrap();
        let v: Vec<f64> = traj
            .states
            .iter()
            .map(|s| {
                let q = qss_errors(s, &params, &profiles).unwrap();
                let perp: f64 = [&q.m_perp, &q.r_perp, &q.c_perp]
                    .iter()
                    .zip(&psi.fields)
                    .map(|(f, w)| f.zip_map(w, |a, b| a * a / b).integrate())
                    .sum();
                q.e_bar * q.e_bar + perp
            })
            .collect();
        for (t, vt) in traj.times.iter().zip(&v) {
            assert!(*vt <= 1.1 * v[0] * (-2.0 * rate * t).exp(), "seed {seed}, t {t}");
        }
    }
}
