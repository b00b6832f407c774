//! Subcommand bodies. Each writes its artifacts and a JSON summary carrying the
//! config echo and the tolerance set.

use serde::Serialize;

use qawv::classical;
use qawv::ensemble::{self, AmplitudeSource, ConditionalResult, FiniteSource, WeakOrbit};
use qawv::pointer::pdf_summary;
use qawv::spin::{self, PriorSpec, FIG6_SIGMAS};
use qawv::Grid;

use crate::config::{ConfigEcho, RunConfig, Tolerances, DEFAULT_SWEEP_EPS};
use crate::emit::{validate_pdf, OutputDir};
use crate::CliError;

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    command: &'a str,
    config: ConfigEcho<'a>,
    tolerances: &'a Tolerances,
    grid: Option<Grid>,
    result: T,
}

fn summary<T: Serialize>(
    out: &mut OutputDir,
    name: &str,
    command: &str,
    cfg: &RunConfig,
    grid: Option<Grid>,
    result: T,
) -> Result<(), CliError> {
    let s = Summary {
        command,
        config: cfg.echo(),
        tolerances: &cfg.tolerances,
        grid,
        result,
    };
    out.write_json(name, &s)
}

fn numerical(e: qawv::Error) -> CliError {
    CliError::Numerical(e)
}

fn write_orbit(out: &mut OutputDir, orbit: &WeakOrbit) -> Result<(), CliError> {
    out.write_with("orbit.csv", |w| orbit.write_csv(&mut *w))
}

fn write_conditional(
    out: &mut OutputDir,
    result: &ConditionalResult,
    tol: f64,
) -> Result<(), CliError> {
    let grid = result.prior_q.grid();
    validate_pdf(
        "ppme_p.prior_pdf",
        &result.prior_pointer.pdf,
        grid.dp(),
        tol,
    )?;
    validate_pdf("ppme_p.final_pdf", &result.pointer.pdf, grid.dp(), tol)?;
    validate_pdf("ppme_q.prior_pdf", &result.prior_q.pdf(), grid.dq(), tol)?;
    validate_pdf(
        "ppme_q.posterior_pdf",
        &result.posterior_q.pdf,
        grid.dq(),
        tol,
    )?;
    out.write_with("ppme_p.csv", |w| result.write_p_csv(&mut *w))?;
    out.write_with("ppme_q.csv", |w| result.write_q_csv(&mut *w))
}

#[derive(Serialize)]
struct OrbitSummary {
    samples: usize,
    valid_samples: usize,
    under_resolved: bool,
    max_p12: f64,
}

impl OrbitSummary {
    fn new(orbit: &WeakOrbit) -> Self {
        Self {
            samples: orbit.q.len(),
            valid_samples: orbit.valid.iter().filter(|v| **v).count(),
            under_resolved: orbit.under_resolved,
            max_p12: orbit.p12.iter().cloned().fold(0.0, f64::max),
        }
    }
}

#[derive(Serialize)]
struct ConditionalSummary {
    prior: PriorSpec,
    p12_phi: f64,
    prior_pointer_mean: f64,
    prior_pointer_variance: f64,
    pointer_mean: f64,
    pointer_variance: f64,
    posterior_mean: f64,
    posterior_variance: f64,
    decomposition: ensemble::MomentDecomposition,
}

impl ConditionalSummary {
    fn new(prior: PriorSpec, r: &ConditionalResult) -> Self {
        Self {
            prior,
            p12_phi: r.p12_phi,
            prior_pointer_mean: r.prior_pointer.mean,
            prior_pointer_variance: r.prior_pointer.variance,
            pointer_mean: r.pointer.mean,
            pointer_variance: r.pointer.variance,
            posterior_mean: r.posterior_q.mean,
            posterior_variance: r.posterior_q.variance,
            decomposition: r.decomposition,
        }
    }
}

fn finite_source(cfg: &RunConfig) -> Result<(FiniteSource, Grid, PriorSpec), CliError> {
    if cfg.is_spin() {
        let sc = cfg.spin_scenario()?;
        return Ok((sc.source().map_err(numerical)?, sc.grid, sc.prior));
    }
    let sys = cfg.finite_system()?;
    let src =
        FiniteSource::new(sys.post_selection()?, &sys.observable, &sys.psi1).map_err(numerical)?;
    Ok((src, cfg.finite_grid()?, cfg.finite_prior()))
}

pub fn orbit(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let (src, grid, _) = finite_source(cfg)?;
    let orbit = ensemble::build_orbit(&src, &grid).map_err(numerical)?;
    write_orbit(out, &orbit)?;
    summary(
        out,
        "orbit.json",
        "orbit",
        cfg,
        Some(grid),
        OrbitSummary::new(&orbit),
    )
}

pub fn ppme(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let (src, grid, prior) = finite_source(cfg)?;
    let phi = prior.build(&grid).map_err(numerical)?;
    let result = ensemble::ppme_condition(&src, &phi).map_err(numerical)?;
    write_conditional(out, &result, cfg.tolerances.normalization)?;
    summary(
        out,
        "ppme.json",
        "ppme",
        cfg,
        Some(grid),
        ConditionalSummary::new(prior, &result),
    )
}

#[derive(Serialize)]
struct PmeSummary {
    prior: PriorSpec,
    expectation: f64,
    pointer_mean: f64,
    pointer_variance: f64,
}

pub fn pme(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let (sys, grid, prior) = if cfg.is_spin() {
        let sc = cfg.spin_scenario()?;
        (cfg.finite_system()?, sc.grid, sc.prior)
    } else {
        (cfg.finite_system()?, cfg.finite_grid()?, cfg.finite_prior())
    };
    let phi = prior.build(&grid).map_err(numerical)?;
    let pdf = ensemble::pme_distribution(&sys.psi1, &sys.observable, &phi).map_err(numerical)?;
    let prior_p = pdf_summary(&phi.to_p());
    validate_pdf(
        "pme.prior_pdf",
        &prior_p.pdf,
        grid.dp(),
        cfg.tolerances.normalization,
    )?;
    validate_pdf("pme.pdf", &pdf.pdf, grid.dp(), cfg.tolerances.normalization)?;
    out.write_columns(
        "pme.csv",
        &["p", "prior_pdf", "pme_pdf"],
        &[&pdf.axis, &prior_p.pdf, &pdf.pdf],
    )?;
    let expectation = sys.observable.expectation(&sys.psi1).map_err(numerical)?;
    let result = PmeSummary {
        prior,
        expectation,
        pointer_mean: pdf.mean,
        pointer_variance: pdf.variance,
    };
    summary(out, "pme.json", "pme", cfg, Some(grid), result)
}

#[derive(Serialize)]
struct SumRuleSummary {
    prior: PriorSpec,
    report: ensemble::SumRuleReport,
    violations: Vec<String>,
}

pub fn sumrules(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let sys = cfg.finite_system()?;
    let (grid, prior) = if cfg.is_spin() {
        let sc = cfg.spin_scenario()?;
        (sc.grid, sc.prior)
    } else {
        (cfg.finite_grid()?, cfg.finite_prior())
    };
    let phi = prior.build(&grid).map_err(numerical)?;
    let report = ensemble::check_sum_rules(&sys.psi1, &sys.observable, &phi, &sys.basis)
        .map_err(numerical)?;
    let tol = &cfg.tolerances;
    let checks = [
        (
            "strong_residual",
            report.strong_residual.abs(),
            tol.strong_sum_rule,
        ),
        (
            "weak_residual",
            report.weak_residual.abs(),
            tol.weak_sum_rule,
        ),
        (
            "pointer_residual",
            report.pointer_residual.abs(),
            tol.pointer_sum_rule,
        ),
        ("pooling_residual", report.pooling_residual, tol.pooling),
        (
            "covering_deficit",
            (-report.covering_min).max(0.0),
            tol.covering,
        ),
    ];
    let violations: Vec<String> = checks
        .iter()
        .filter(|(_, v, t)| !(v <= t))
        .map(|(name, v, t)| format!("{name} = {v:e} exceeds {t:e}"))
        .collect();
    let failed = !violations.is_empty();
    summary(
        out,
        "sumrules.json",
        "sumrules",
        cfg,
        Some(grid),
        SumRuleSummary {
            prior,
            report,
            violations,
        },
    )?;
    if failed {
        return Err(CliError::Tolerance(
            "sum rule residuals exceed their tolerances; see sumrules.json".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct SpinFigureSummary {
    j: f64,
    scale: f64,
    prior: PriorSpec,
    weak_value_at_zero: Option<[f64; 2]>,
    weak_value_at_pi: Option<[f64; 2]>,
    p12_at_zero: f64,
    p12_at_pi: f64,
    orbit: OrbitSummary,
    conditional: ConditionalSummary,
    bias_fixed_point: Option<spin::BiasFixedPoint>,
    fringes: Option<spin::FringeReport>,
    /// Why a diagnostic above is absent.
    notes: Vec<String>,
    transition: Option<Vec<spin::TransitionRow>>,
}

pub fn spin_figure(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let sc = cfg.spin_scenario()?;
    let src = sc.source().map_err(numerical)?;
    let orbit = ensemble::build_orbit(&src, &sc.grid).map_err(numerical)?;
    let result = sc.condition().map_err(numerical)?;
    write_orbit(out, &orbit)?;
    write_conditional(out, &result, cfg.tolerances.normalization)?;

    let mut notes = Vec::new();
    let bias_fixed_point = match sc.prior {
        PriorSpec::Gaussian { .. } => match spin::bias_fixed_point(&sc) {
            Ok(b) => Some(b),
            Err(e) => {
                notes.push(format!("bias fixed point: {e}"));
                None
            }
        },
        _ => None,
    };
    let fringes = match spin::fringe_report(&sc, &orbit, &result) {
        Ok(f) => Some(f),
        Err(e) => {
            notes.push(format!("fringes: {e}"));
            None
        }
    };
    let transition = if is_transition_preset(cfg) {
        let rows = spin::transition_sweep(&sc, &FIG6_SIGMAS).map_err(numerical)?;
        write_transition(out, &rows)?;
        Some(rows)
    } else {
        None
    };
    let pair = |w: Option<qawv::C64>| w.map(|w| [w.re, w.im]);
    let result = SpinFigureSummary {
        j: sc.j.j(),
        scale: sc.scale,
        prior: sc.prior,
        weak_value_at_zero: pair(src.weak_orbit(0.0)),
        weak_value_at_pi: pair(src.weak_orbit(std::f64::consts::PI)),
        p12_at_zero: src.amplitude(0.0).norm_sqr(),
        p12_at_pi: src.amplitude(std::f64::consts::PI).norm_sqr(),
        orbit: OrbitSummary::new(&orbit),
        conditional: ConditionalSummary::new(sc.prior, &result),
        bias_fixed_point,
        fringes,
        notes,
        transition,
    };
    summary(
        out,
        "spin_figure.json",
        "spin-figure",
        cfg,
        Some(sc.grid),
        result,
    )
}

fn is_transition_preset(cfg: &RunConfig) -> bool {
    matches!(&cfg.scenario, crate::config::ScenarioSpec::SpinPreset { name, .. } if name == "fig6-sweep")
}

fn write_transition(out: &mut OutputDir, rows: &[spin::TransitionRow]) -> Result<(), CliError> {
    let col = |f: fn(&spin::TransitionRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let sigma = col(|r| r.sigma);
    let peaks = col(|r| r.posterior_peaks.len() as f64);
    let outer = col(|r| r.posterior_peaks.last().copied().unwrap_or(f64::NAN));
    let sampled = col(|r| r.sampled_weak_value);
    let spacing = col(|r| r.fringe_spacing.unwrap_or(f64::NAN));
    let center = col(|r| r.envelope_center);
    let variance = col(|r| r.pointer_variance);
    let p12 = col(|r| r.p12_phi);
    out.write_columns(
        "transition.csv",
        &[
            "sigma",
            "posterior_peaks",
            "outer_peak",
            "sampled_Aw_re",
            "fringe_spacing",
            "envelope_center",
            "pointer_variance",
            "P12_phi",
        ],
        &[
            &sigma, &peaks, &outer, &sampled, &spacing, &center, &variance, &p12,
        ],
    )
}

pub fn transition_sweep(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let sc = cfg.spin_scenario()?;
    let sigmas = cfg.sigmas.clone().unwrap_or_else(|| FIG6_SIGMAS.to_vec());
    if sigmas.is_empty() || sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(CliError::Config(
            "sigmas: expected a non-empty list of positive widths".into(),
        ));
    }
    let rows = spin::transition_sweep(&sc, &sigmas).map_err(numerical)?;
    write_transition(out, &rows)?;
    summary(
        out,
        "transition.json",
        "transition-sweep",
        cfg,
        Some(sc.grid),
        rows,
    )
}

pub fn weak_sweep(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let (src, _, _) = finite_source(cfg)?;
    let (center, eps) = cfg
        .sweep
        .map_or((0.0, DEFAULT_SWEEP_EPS), |s| (s.center, s.eps));
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(CliError::Config(
            "sweep.eps: widths must be positive".into(),
        ));
    }
    let sweep = ensemble::weak_limit_sweep(&src, center, &eps).map_err(numerical)?;
    let col = |f: fn(&ensemble::SweepRow) -> f64| sweep.rows.iter().map(f).collect::<Vec<f64>>();
    out.write_columns(
        "weak_sweep.csv",
        &["eps", "mean", "P12_phi", "mean_error", "P12_error"],
        &[
            &col(|r| r.eps),
            &col(|r| r.mean),
            &col(|r| r.p12_phi),
            &col(|r| r.mean_error),
            &col(|r| r.p12_error),
        ],
    )?;
    summary(out, "weak_sweep.json", "weak-sweep", cfg, None, sweep)
}

pub fn classical_compare(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let sc = cfg.classical_scenario()?;
    let posterior = classical::classical_posterior(&sc).map_err(numerical)?;
    validate_pdf(
        "classical.posterior",
        &posterior.posterior_q.pdf,
        posterior.grid.dq(),
        cfg.tolerances.normalization,
    )?;
    out.write_with("classical.csv", |w| posterior.write_csv(&mut *w))?;
    let report = classical::correspondence_report_with_tol(&sc, cfg.tolerances.correspondence)
        .map_err(|e| match e {
            qawv::Error::NotApplicable(why) => CliError::Config(format!("scenario: {why}")),
            e => CliError::Numerical(e),
        })?;
    out.write_with("correspondence.csv", |w| {
        let mut header = vec!["quantity".to_owned()];
        header.extend(
            report
                .smears
                .iter()
                .map(|s| format!("raw_s{}", qawv::pointer::fmt_sig17(*s))),
        );
        header.push("extrapolated".into());
        writeln!(w, "{}", header.join(","))?;
        for row in &report.rows {
            let mut line = vec![row.quantity.to_owned()];
            line.extend(row.raw.iter().map(|v| qawv::pointer::fmt_sig17(*v)));
            line.push(qawv::pointer::fmt_sig17(row.extrapolated));
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    })?;
    let passed = report.passed;
    summary(
        out,
        "correspondence.json",
        "classical-compare",
        cfg,
        Some(posterior.grid),
        &report,
    )?;
    if !passed {
        return Err(CliError::Tolerance(format!(
            "quantum and classical statistics differ by more than {:e}; see correspondence.json",
            report.tolerance
        )));
    }
    Ok(())
}
