//! Command implementations. Each one reads a bound [`RunConfig`], writes its
//! files under the output directory and reports whether a certificate held.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use rdcontract::certificates::{
    certify, certify_scalar_fickian, certify_scalar_small_omega, CertificateReport, CertifyOptions, SamplingConfig,
};
use rdcontract::diffusion::assemble_operator;
use rdcontract::grid::available_volume;
use rdcontract::models::{
    build_example_3_1_with_diffusivity, build_example_3_2, build_translation_model, compute_bcf,
    example_3_1_diffusivity, example_3_1_rate, example_3_2_certificate, example_3_2_inputs, invariant_set_bounds,
    qss_errors, translation_certificate, translation_initial_state, translation_virtual_certificate, ModelPreset,
    TranslationProfiles,
};
use rdcontract::simulator::{
    critical_parameter, integrate, log_norm_slope, preset_ones, preset_ramp, random_smooth_state, RDSystem, Stability,
    StabilityProtocol,
};
use rdcontract::{GridRef, ScalarField, SpatialGrid};
use serde_json::json;

use crate::config::{CertifyMode, Command, InitPreset, RunConfig};
use crate::output::{emit_json, emit_plot_data, Series, Stamp};

pub const DEFAULT_SAMPLE_EVERY: usize = 10;
pub const DEFAULT_OMEGA_STEPS: usize = 11;
pub const DEFAULT_OMEGA_TOL: f64 = 1e-3;
pub const DEFAULT_ZETA_RANGE: (f64, f64) = (1.0, 10.0);
pub const DEFAULT_ZETA_TOL: f64 = 0.05;

/// What a command reports back to the dispatcher.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// `Some(false)` maps to exit code 2.
    pub certified: Option<bool>,
    pub message: String,
    pub files: Vec<PathBuf>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    stamp: Stamp,
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn csv(&mut self, name: &str, series: &Series) -> Result<()> {
        let path = self.dir.join(name);
        emit_plot_data(series, &path, &self.stamp)?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        let path = self.dir.join(name);
        emit_json(body, &path, &self.stamp)?;
        self.files.push(path);
        Ok(())
    }

    fn done(self, certified: Option<bool>, message: String) -> Outcome {
        Outcome {
            certified,
            message,
            files: self.files,
        }
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let command = cfg.command.context("no command bound")?;
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let ctx = Ctx {
        cfg,
        stamp: Stamp {
            config_hash: cfg.hash(),
            seed: cfg.seed(),
        },
        dir,
        files: vec![],
    };
    match command {
        Command::Simulate => simulate(ctx),
        Command::Certify => certify_cmd(ctx),
        Command::SweepOmega => sweep_omega(ctx),
        Command::SweepZeta => sweep_zeta(ctx),
        Command::Bcf => bcf(ctx),
        Command::Eig => eig(ctx),
        Command::Qss => qss(ctx),
    }
}

fn grid(cfg: &RunConfig) -> Result<GridRef> {
    Ok(SpatialGrid::uniform(cfg.n())?)
}

fn example_3_1_system(cfg: &RunConfig, g: &GridRef) -> Result<RDSystem> {
    let eps = cfg.require("epsilon", cfg.epsilon)?;
    let omega = cfg.require("omega", cfg.omega)?;
    let d = cfg.diffusion.unwrap_or_else(|| example_3_1_diffusivity(eps));
    Ok(build_example_3_1_with_diffusivity(eps, omega, d, g)?)
}

fn build_system(cfg: &RunConfig, g: &GridRef) -> Result<RDSystem> {
    Ok(match cfg.model()? {
        ModelPreset::Example31 => example_3_1_system(cfg, g)?,
        ModelPreset::Example32 => build_example_3_2(cfg.require("zeta", cfg.zeta)?, cfg.r.unwrap_or(0.0), g)?,
        ModelPreset::Translation => build_translation_model(&cfg.translation_params(), g)?,
    })
}

fn initial_state(cfg: &RunConfig, g: &GridRef, species: usize) -> Result<Vec<ScalarField>> {
    let model = cfg.model()?;
    let preset = cfg.init.unwrap_or(match model {
        ModelPreset::Example31 => InitPreset::Ones,
        ModelPreset::Example32 => InitPreset::Ramp,
        ModelPreset::Translation => InitPreset::Translation,
    });
    Ok(match preset {
        InitPreset::Ones => preset_ones(g, species),
        InitPreset::Ramp if species == 2 => preset_ramp(g),
        InitPreset::Ramp => bail!("the ramp preset needs 2 species"),
        InitPreset::Random if model == ModelPreset::Translation => {
            random_smooth_state(g, species, 0.0, 1.0, cfg.seed())
        }
        InitPreset::Random => random_smooth_state(g, species, -1.0, 1.0, cfg.seed()),
        InitPreset::Translation if model == ModelPreset::Translation => {
            translation_initial_state(&cfg.translation_params(), g, 0.2)
        }
        InitPreset::Translation => bail!("the translation preset needs the translation model"),
    })
}

fn simulate(mut ctx: Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let g = grid(cfg)?;
    let sys = build_system(cfg, &g)?;
    let z0 = initial_state(cfg, &g, sys.species())?;
    let dt = cfg.dt.unwrap_or_else(|| sys.default_dt(&z0));
    let t_end = cfg.t_end();
    let traj = integrate(&sys, &z0, t_end, dt, cfg.sample_every.unwrap_or(DEFAULT_SAMPLE_EVERY))?;
    let mut states = Series::new(&["t", "species", "x", "value"]);
    for (t, state) in traj.times.iter().zip(&traj.states) {
        for (i, field) in state.iter().enumerate() {
            for (x, v) in g.nodes().iter().zip(field.values()) {
                states.push(vec![(*t).into(), i.into(), (*x).into(), (*v).into()]);
            }
        }
    }
    let mut norms = Series::new(&["t", "l2_norm"]);
    for (t, v) in traj.times.iter().zip(&traj.norms) {
        norms.push(vec![(*t).into(), (*v).into()]);
    }
    ctx.csv("trajectory.csv", &states)?;
    ctx.csv("norms.csv", &norms)?;
    let [t_lo, t_hi] = cfg.window();
    let slope = if t_hi <= t_end {
        log_norm_slope(&traj, t_lo, t_hi).ok()
    } else {
        None
    };
    let summary = json!({
        "command": "simulate",
        "model": cfg.model()?,
        "n": cfg.n(),
        "dt": dt,
        "t_end": traj.final_time(),
        "window": [t_lo, t_hi],
        "slope": slope,
        "classification": slope.map(|s| Stability::classify(s).as_str()),
        "final_l2_norm": traj.norms.last(),
    });
    ctx.json("summary.json", &summary)?;
    let msg = match slope {
        Some(s) => format!("slope {s:.6e} ({})", Stability::classify(s).as_str()),
        None => format!("final norm {:.6e}", traj.norms.last().copied().unwrap_or(0.0)),
    };
    Ok(ctx.done(None, msg))
}

fn certify_options(cfg: &RunConfig) -> CertifyOptions {
    CertifyOptions {
        lambda_source: cfg
            .lambda_source
            .unwrap_or(rdcontract::certificates::LambdaSource::AnalyticFloor),
        sampling: SamplingConfig {
            n_random: cfg.samples.unwrap_or(rdcontract::certificates::DEFAULT_RANDOM_PROBES),
            seed: cfg.seed(),
        },
        ..Default::default()
    }
}

fn certify_cmd(mut ctx: Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let g = grid(cfg)?;
    let opts = certify_options(cfg);
    let (report, body): (CertificateReport, serde_json::Value) = match cfg.model()? {
        ModelPreset::Example31 => {
            let eps = cfg.require("epsilon", cfg.epsilon)?;
            let omega = cfg.require("omega", cfg.omega)?;
            let d = cfg.diffusion.unwrap_or_else(|| example_3_1_diffusivity(eps));
            let a = g.field_from_fn(|x| example_3_1_rate(eps, omega, x));
            let report = certify_scalar_fickian(&a, d)?;
            let small = certify_scalar_small_omega(eps, omega, d)?;
            let body = json!({ "report": report, "small_omega": small, "d": d });
            (report, body)
        }
        ModelPreset::Example32 => {
            let zeta = cfg.require("zeta", cfg.zeta)?;
            let r = cfg.r.unwrap_or(0.0);
            let report = match cfg.mode.unwrap_or(CertifyMode::Hierarchical) {
                CertifyMode::Hierarchical => example_3_2_certificate(zeta, r, &g, &opts)?,
                CertifyMode::Full => certify(&example_3_2_inputs(zeta, r, &g, &opts)?)?,
            };
            let nu = available_volume(r, 0.5, &g)?.nu();
            let body = json!({ "report": report, "zeta": zeta, "r": r, "bound_2_over_nu": 2.0 / nu });
            (report, body)
        }
        ModelPreset::Translation => {
            let params = cfg.translation_params();
            let profiles = TranslationProfiles::new(&params, &g)?;
            let bounds = invariant_set_bounds(&params, &profiles, None)?;
            let report = translation_certificate(&params, &profiles, &bounds)?;
            let sampled = translation_virtual_certificate(&params, &profiles, &bounds, &opts)?;
            let body = json!({
                "report": report,
                "sampled": sampled,
                "bounds": bounds,
                "params": params,
                "bcf": profiles.bcf,
            });
            (report, body)
        }
    };
    ctx.json("certificate.json", &body)?;
    let mut msg = format!(
        "{}: lambda1 {:.6e}, lambda2 {:.6e}",
        if report.pass { "certified" } else { "not certified" },
        report.lambda1,
        report.lambda2,
    );
    if report.beta.is_finite() {
        msg.push_str(&format!(", beta {:.6e}", report.beta));
    }
    Ok(ctx.done(Some(report.pass), msg))
}

fn log_space(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || steps < 2 {
        bail!("need 0 < min < max and at least 2 steps");
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..steps)
        .map(|k| (a + (b - a) * k as f64 / (steps - 1) as f64).exp())
        .collect())
}

fn lin_space(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if !(hi >= lo) || steps < 1 {
        bail!("need min <= max and at least 1 step");
    }
    Ok((0..steps)
        .map(|k| {
            if steps == 1 {
                lo
            } else {
                lo + (hi - lo) * k as f64 / (steps - 1) as f64
            }
        })
        .collect())
}

fn protocol(cfg: &RunConfig) -> StabilityProtocol {
    let [t_lo, t_hi] = cfg.window();
    StabilityProtocol {
        t_end: cfg.t_end(),
        dt: cfg.dt,
        window: (t_lo, t_hi),
        sample_every: cfg.sample_every.unwrap_or(DEFAULT_SAMPLE_EVERY),
    }
}

fn sweep_omega(mut ctx: Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let g = grid(cfg)?;
    let eps = cfg.require("epsilon", cfg.epsilon)?;
    let d = cfg.diffusion.unwrap_or_else(|| example_3_1_diffusivity(eps));
    let omegas = log_space(
        cfg.omega_min.unwrap_or(1e-3),
        cfg.omega_max.unwrap_or(1.0),
        cfg.steps.unwrap_or(DEFAULT_OMEGA_STEPS),
    )?;
    let proto = protocol(cfg);
    let slope_at = |omega: f64| -> rdcontract::Result<f64> {
        let sys = build_example_3_1_with_diffusivity(eps, omega, d, &g)?;
        proto.slope(&sys, &preset_ones(&g, 1))
    };
    let slopes: Vec<f64> = omegas
        .par_iter()
        .map(|&w| slope_at(w))
        .collect::<rdcontract::Result<_>>()?;
    let mut series = Series::new(&["omega", "slope", "classification"]);
    for (w, s) in omegas.iter().zip(&slopes) {
        series.push(vec![(*w).into(), (*s).into(), Stability::classify(*s).as_str().into()]);
    }
    ctx.csv("sweep_omega.csv", &series)?;
    let bracket = slopes
        .windows(2)
        .position(|w| Stability::classify(w[0]) != Stability::classify(w[1]));
    let omega_cr = match bracket {
        Some(k) => Some(critical_parameter(
            slope_at,
            omegas[k],
            omegas[k + 1],
            cfg.tol.unwrap_or(DEFAULT_OMEGA_TOL),
        )?),
        None => None,
    };
    ctx.json(
        "sweep_omega.json",
        &json!({ "epsilon": eps, "d": d, "omega_cr": omega_cr, "points": omegas.len() }),
    )?;
    let msg = match omega_cr {
        Some(w) => format!("slope sign change at omega ~ {w:.4e}"),
        None => "no slope sign change in range".into(),
    };
    Ok(ctx.done(None, msg))
}

fn sweep_zeta(mut ctx: Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let g = grid(cfg)?;
    let rs = lin_space(
        cfg.r_min.unwrap_or(0.0),
        cfg.r_max.unwrap_or(1.0),
        cfg.steps.unwrap_or(11),
    )?;
    let (z_lo, z_hi) = (
        cfg.zeta_min.unwrap_or(DEFAULT_ZETA_RANGE.0),
        cfg.zeta_max.unwrap_or(DEFAULT_ZETA_RANGE.1),
    );
    let tol = cfg.tol.unwrap_or(DEFAULT_ZETA_TOL);
    let proto = protocol(cfg);
    let rows: Vec<(f64, f64)> = rs
        .par_iter()
        .map(|&r| -> Result<(f64, f64)> {
            let slope = |zeta: f64| {
                let sys = build_example_3_2(zeta, r, &g)?;
                proto.slope(&sys, &preset_ramp(&g))
            };
            let zeta_cr = critical_parameter(slope, z_lo, z_hi, tol).with_context(|| format!("r = {r}"))?;
            Ok((zeta_cr, 2.0 / available_volume(r, 0.5, &g)?.nu()))
        })
        .collect::<Result<_>>()?;
    let mut series = Series::new(&["r", "zeta_cr", "bound_2_over_nu"]);
    for (r, (z, b)) in rs.iter().zip(&rows) {
        series.push(vec![(*r).into(), (*z).into(), (*b).into()]);
    }
    ctx.csv("sweep_zeta.csv", &series)?;
    let within = rows.iter().all(|(z, b)| z <= b);
    Ok(ctx.done(
        None,
        format!("{} radii, zeta_cr <= 2/nu everywhere: {within}", rs.len()),
    ))
}

fn bcf(mut ctx: Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let g = grid(cfg)?;
    let params = cfg.translation_params();
    let v_m = available_volume(params.r_m, params.x_star, &g)?;
    let v_r = available_volume(params.r_r, params.x_star, &g)?;
    let value = compute_bcf(&v_m, &v_r)?;
    ctx.json(
        "bcf.json",
        &json!({ "bcf": value, "v_m": v_m.record(), "v_r": v_r.record() }),
    )?;
    Ok(ctx.done(None, format!("{value:?}")))
}

fn eig(mut ctx: Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let g = grid(cfg)?;
    let theta = cfg.theta.unwrap_or(0.5);
    let d = match cfg.r {
        Some(r) => available_volume(r, cfg.x_star.unwrap_or(0.5), &g)?.v,
        None => g.constant_field(cfg.d.unwrap_or(1.0)),
    };
    let assembly = assemble_operator(theta, &d)?;
    let report = assembly.report();
    ctx.json("eig.json", &report)?;
    if cfg.triplets.unwrap_or(false) {
        let path = ctx.dir.join("operator.txt");
        std::fs::write(&path, assembly.operator.triplets_text())
            .with_context(|| format!("writing {}", path.display()))?;
        ctx.files.push(path);
    }
    Ok(ctx.done(
        None,
        format!(
            "lambda_numeric {:.10e}, lambda_bound {:.10e}",
            report.lambda_numeric, report.lambda_bound
        ),
    ))
}

fn qss(mut ctx: Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let g = grid(cfg)?;
    let params = cfg.translation_params();
    let profiles = TranslationProfiles::new(&params, &g)?;
    let sys = build_translation_model(&params, &g)?;
    let z0 = match cfg.init {
        Some(InitPreset::Random) => random_smooth_state(&g, 3, 0.0, 1.0, cfg.seed()),
        Some(InitPreset::Translation) | None => translation_initial_state(&params, &g, 0.2),
        Some(other) => bail!("qss supports the translation and random presets, got {other:?}"),
    };
    let bounds = invariant_set_bounds(&params, &profiles, Some(&z0))?;
    let dt = cfg.dt.unwrap_or_else(|| sys.default_dt(&z0));
    let traj = integrate(
        &sys,
        &z0,
        cfg.t_end.unwrap_or(20.0),
        dt,
        cfg.sample_every.unwrap_or(DEFAULT_SAMPLE_EVERY),
    )?;
    let mut series = Series::new(&["t", "e_bar", "c_qss", "m_perp", "r_perp", "c_perp"]);
    let mut last = None;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let q = qss_errors(state, &params, &profiles)?;
        series.push(vec![
            (*t).into(),
            q.e_bar.into(),
            q.c_qss.into(),
            q.m_perp.l2_norm().into(),
            q.r_perp.l2_norm().into(),
            q.c_perp.l2_norm().into(),
        ]);
        last = Some(q);
    }
    ctx.csv("qss.csv", &series)?;
    let q = last.context("empty trajectory")?;
    let report = translation_certificate(&params, &profiles, &bounds)?;
    ctx.json(
        "qss.json",
        &json!({
            "params": params,
            "bcf": profiles.bcf,
            "bounds": bounds,
            "certificate": report,
            "final": {
                "t": traj.final_time(),
                "e_bar": q.e_bar,
                "c_qss": q.c_qss,
                "m_perp": q.m_perp.l2_norm(),
                "r_perp": q.r_perp.l2_norm(),
                "c_perp": q.c_perp.l2_norm(),
            },
        }),
    )?;
    Ok(ctx.done(
        None,
        format!(
            "terminal |e_bar| = {:.3e}, certificate {}",
            q.e_bar.abs(),
            if report.pass { "passes" } else { "fails" }
        ),
    ))
}
