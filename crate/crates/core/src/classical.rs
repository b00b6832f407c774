//! Classical inference under an impulsive coupling `q A(x)` at time `t_i`,
//! and the quantum gaussian-continuum counterpart of the free particle.
//!
//! Each free or harmonic segment of duration `T` has the boundary action
//! `S(xa, xb) = (c/2)(xa^2 + xb^2) - k xa xb` with `c = k = m/T` (free) or
//! `c = m w cot(w T)`, `k = m w / sin(w T)` (oscillator). The kicked action is
//! `S1(x1, xi) + S2(xi, x2) + q A(xi)`, stationary in the midpoint `xi`.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{self, AmplitudeSource};
use crate::error::{Error, Result};
use crate::hilbert::C64;
use crate::numeric::richardson;
use crate::pointer::{self, fmt_sig17, Grid, PdfSummary};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemKind {
    Free { mass: f64 },
    Oscillator { mass: f64, omega: f64 },
}

impl SystemKind {
    pub fn mass(&self) -> f64 {
        match *self {
            SystemKind::Free { mass } | SystemKind::Oscillator { mass, .. } => mass,
        }
    }

    /// `(c, k)` of a segment of duration `t`.
    fn segment(&self, t: f64) -> Result<(f64, f64)> {
        match *self {
            SystemKind::Free { mass } => Ok((mass / t, mass / t)),
            SystemKind::Oscillator { mass, omega } => {
                let s = (omega * t).sin();
                if s.abs() < 1e-12 {
                    return Err(Error::Focusing {
                        detail: format!(
                            "segment of duration {t} is a half-period multiple (sin(w T) = {s:e})"
                        ),
                    });
                }
                Ok((mass * omega * (omega * t).cos() / s, mass * omega / s))
            }
        }
    }

    /// Restoring force per unit position (`0` for the free particle).
    fn stiffness(&self) -> f64 {
        match *self {
            SystemKind::Free { .. } => 0.0,
            SystemKind::Oscillator { mass, omega } => mass * omega * omega,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// `A(x) = x`.
    Linear,
    /// `A(x) = x^2`.
    Quadratic,
}

impl Coupling {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Coupling::Linear => x,
            Coupling::Quadratic => x * x,
        }
    }

    pub fn slope(&self, x: f64) -> f64 {
        match self {
            Coupling::Linear => 1.0,
            Coupling::Quadratic => 2.0 * x,
        }
    }

    pub fn curvature(&self) -> f64 {
        match self {
            Coupling::Linear => 0.0,
            Coupling::Quadratic => 2.0,
        }
    }
}

/// Factorized apparatus prior: gaussian in `q` and in `p`, with `<p> = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalPrior {
    pub q_center: f64,
    pub q_sigma: f64,
    /// Defaults to the minimum-uncertainty partner `1 / (2 q_sigma)`.
    #[serde(default)]
    pub p_sigma: Option<f64>,
}

impl ClassicalPrior {
    pub fn p_sigma(&self) -> f64 {
        self.p_sigma.unwrap_or(0.5 / self.q_sigma)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub q_min: f64,
    pub q_max: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.q_min, self.q_max, self.n)
    }
}

fn default_smears() -> Vec<f64> {
    vec![0.1, 0.05, 0.025]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalScenario {
    pub system: SystemKind,
    pub coupling: Coupling,
    /// `[t1, t_i, t2]`.
    pub times: [f64; 3],
    /// `[x1, x2]`.
    pub endpoints: [f64; 2],
    pub prior: ClassicalPrior,
    pub grid: GridSpec,
    /// Endpoint smearing widths for the quantum side, halving.
    #[serde(default = "default_smears")]
    pub smears: Vec<f64>,
}

impl ClassicalScenario {
    /// Unit-mass free particle, `t = (0, 1, 2)`, `x1 = x2 = 0`, linear coupling.
    pub fn free_particle() -> Self {
        Self {
            system: SystemKind::Free { mass: 1.0 },
            coupling: Coupling::Linear,
            times: [0.0, 1.0, 2.0],
            endpoints: [0.0, 0.0],
            prior: ClassicalPrior {
                q_center: 0.3,
                q_sigma: 0.1,
                p_sigma: None,
            },
            grid: GridSpec {
                q_min: -4.0,
                q_max: 4.0,
                n: 4096,
            },
            smears: default_smears(),
        }
    }

    /// Checks the scenario, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let [t1, ti, t2] = self.times;
        if !(t1 < ti && ti < t2) {
            return Err(Error::InvalidArgument(format!(
                "times: need t1 < t_i < t2, got {:?}",
                self.times
            )));
        }
        if !(self.system.mass() > 0.0) {
            return Err(Error::InvalidArgument(
                "system.mass: must be positive".into(),
            ));
        }
        if let SystemKind::Oscillator { omega, .. } = self.system {
            if !(omega > 0.0) {
                return Err(Error::InvalidArgument(
                    "system.omega: must be positive".into(),
                ));
            }
        }
        if !(self.prior.q_sigma > 0.0) || !(self.prior.p_sigma() > 0.0) {
            return Err(Error::InvalidArgument(
                "prior: widths must be positive".into(),
            ));
        }
        if self.smears.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument(
                "smears: widths must be positive".into(),
            ));
        }
        self.grid
            .build()
            .map_err(|e| Error::InvalidArgument(format!("grid: {e}")))?;
        Ok(())
    }

    pub fn durations(&self) -> (f64, f64) {
        let [t1, ti, t2] = self.times;
        (ti - t1, t2 - ti)
    }

    /// Characteristic length for solver tolerances and difference steps.
    pub fn scale(&self) -> f64 {
        1.0 + self.endpoints[0].abs() + self.endpoints[1].abs()
    }
}

/// Boundary-value trajectory for one kick strength `q`.
#[derive(Clone, Debug, Serialize)]
pub struct ClassicalSolution {
    pub q: f64,
    /// Position at the kick, `x(t_i)`.
    pub x_kick: f64,
    /// Initial momentum.
    pub pi1: f64,
    /// Stationary action of the kicked path.
    pub action: f64,
    /// `A(x(t_i))`.
    pub a_tilde: f64,
    /// `|d^2 S / dx1 dx2|`, the central x1-difference of the final momentum.
    pub van_vleck: f64,
    #[serde(skip)]
    scenario: ClassicalScenario,
}

impl ClassicalSolution {
    /// Position on the piecewise trajectory.
    pub fn position(&self, t: f64) -> f64 {
        let [t1, ti, t2] = self.scenario.times;
        let [x1, x2] = self.scenario.endpoints;
        let t = t.clamp(t1, t2);
        if t <= ti {
            segment_position(&self.scenario.system, x1, self.x_kick, ti - t1, t - t1)
        } else {
            segment_position(&self.scenario.system, self.x_kick, x2, t2 - ti, t - ti)
        }
    }

    /// Momentum just before (`after_kick = false`) or after the kick.
    pub fn momentum_at_kick(&self, after_kick: bool) -> f64 {
        let (t1, t2) = self.scenario.durations();
        let [x1, x2] = self.scenario.endpoints;
        let (c1, k1) = self
            .scenario
            .system
            .segment(t1)
            .expect("validated on solve");
        let (c2, k2) = self
            .scenario
            .system
            .segment(t2)
            .expect("validated on solve");
        if after_kick {
            k2 * x2 - c2 * self.x_kick
        } else {
            c1 * self.x_kick - k1 * x1
        }
    }
}

fn segment_position(system: &SystemKind, xa: f64, xb: f64, duration: f64, tau: f64) -> f64 {
    match *system {
        SystemKind::Free { .. } => xa + (xb - xa) * tau / duration,
        SystemKind::Oscillator { omega, .. } => {
            (xa * (omega * (duration - tau)).sin() + xb * (omega * tau).sin())
                / (omega * duration).sin()
        }
    }
}

/// Kick position and action for arbitrary endpoints.
fn stationary(scenario: &ClassicalScenario, x1: f64, x2: f64, q: f64) -> Result<(f64, f64)> {
    let (t1, t2) = scenario.durations();
    let (c1, k1) = scenario.system.segment(t1)?;
    let (c2, k2) = scenario.system.segment(t2)?;
    let curvature = c1 + c2 + q * scenario.coupling.curvature();
    if curvature.abs() < 1e-10 * (c1.abs() + c2.abs() + k1.abs() + k2.abs()) {
        return Err(Error::Focusing {
            detail: format!("kicked path focuses at q = {q} (c1 + c2 + q A'' = {curvature:e})"),
        });
    }
    let xi = match scenario.coupling {
        Coupling::Linear => (k1 * x1 + k2 * x2 - q) / curvature,
        Coupling::Quadratic => (k1 * x1 + k2 * x2) / curvature,
    };
    let action = 0.5 * c1 * (x1 * x1 + xi * xi) - k1 * x1 * xi + 0.5 * c2 * (xi * xi + x2 * x2)
        - k2 * xi * x2
        + q * scenario.coupling.value(xi);
    Ok((xi, action))
}

/// `dS/dx2`, the momentum on arrival at `x2`.
fn final_momentum(scenario: &ClassicalScenario, x1: f64, x2: f64, q: f64) -> Result<f64> {
    let (_, t2) = scenario.durations();
    let (c2, k2) = scenario.system.segment(t2)?;
    let (xi, _) = stationary(scenario, x1, x2, q)?;
    Ok(c2 * x2 - k2 * xi)
}

/// Relative step for the Van Vleck mixed derivative, taken as the x1-difference of `dS/dx2`.
const VAN_VLECK_STEP: f64 = 1e-4;

/// Piecewise-analytic solution of the kicked boundary-value problem.
pub fn solve_boundary(scenario: &ClassicalScenario, q: f64) -> Result<ClassicalSolution> {
    scenario.validate()?;
    let [x1, x2] = scenario.endpoints;
    let (xi, action) = stationary(scenario, x1, x2, q)?;
    let (t1, _) = scenario.durations();
    let (c1, k1) = scenario.system.segment(t1)?;
    let h = VAN_VLECK_STEP * scenario.scale();
    let mixed = (final_momentum(scenario, x1 + h, x2, q)?
        - final_momentum(scenario, x1 - h, x2, q)?)
        / (2.0 * h);
    Ok(ClassicalSolution {
        q,
        x_kick: xi,
        pi1: k1 * xi - c1 * x1,
        action,
        a_tilde: scenario.coupling.value(xi),
        van_vleck: mixed.abs(),
        scenario: scenario.clone(),
    })
}

/// Action as a function of the endpoints, for derivative checks.
pub fn action_at(scenario: &ClassicalScenario, x1: f64, x2: f64, q: f64) -> Result<f64> {
    stationary(scenario, x1, x2, q).map(|(_, s)| s)
}

/// Steps per segment for the shooting integrator.
const SHOOTING_STEPS: usize = 4000;
const SHOOTING_MAX_ITER: usize = 50;

/// Integrates Hamilton's equations through both segments and the kick with
/// classical RK4, returning `(x(t_i), x(t2))`.
fn shoot(scenario: &ClassicalScenario, pi1: f64, q: f64) -> (f64, f64) {
    let m = scenario.system.mass();
    let kappa = scenario.system.stiffness();
    let flow = |mut x: f64, mut p: f64, duration: f64| {
        let h = duration / SHOOTING_STEPS as f64;
        let rhs = |x: f64, p: f64| (p / m, -kappa * x);
        for _ in 0..SHOOTING_STEPS {
            let (a1, b1) = rhs(x, p);
            let (a2, b2) = rhs(x + 0.5 * h * a1, p + 0.5 * h * b1);
            let (a3, b3) = rhs(x + 0.5 * h * a2, p + 0.5 * h * b2);
            let (a4, b4) = rhs(x + h * a3, p + h * b3);
            x += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            p += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        }
        (x, p)
    };
    let (t1, t2) = scenario.durations();
    let (xi, p_before) = flow(scenario.endpoints[0], pi1, t1);
    let p_after = p_before + q * scenario.coupling.slope(xi);
    let (x_end, _) = flow(xi, p_after, t2);
    (xi, x_end)
}

/// Secant shooting on the initial momentum, for kinds without closed-form segments
/// and as a cross-check of [`solve_boundary`].
pub fn solve_by_shooting(scenario: &ClassicalScenario, q: f64) -> Result<ClassicalSolution> {
    scenario.validate()?;
    let tol = 1e-10 * scenario.scale();
    let target = scenario.endpoints[1];
    let miss = |pi: f64| shoot(scenario, pi, q).1 - target;
    let (mut a, mut b) = (0.0, 1.0);
    let (mut fa, mut fb) = (miss(a), miss(b));
    let mut converged = fb.abs() < tol;
    for _ in 0..SHOOTING_MAX_ITER {
        if converged {
            break;
        }
        if fb == fa {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        a = b;
        fa = fb;
        b = c;
        fb = miss(b);
        converged = fb.abs() < tol;
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: SHOOTING_MAX_ITER,
            residual: fb.abs(),
        });
    }
    let (xi, _) = shoot(scenario, b, q);
    let [x1, x2] = scenario.endpoints;
    let (t1, t2) = scenario.durations();
    let action = numerical_action(scenario, x1, xi, t1)
        + numerical_action(scenario, xi, x2, t2)
        + q * scenario.coupling.value(xi);
    let analytic = solve_boundary(scenario, q).ok();
    Ok(ClassicalSolution {
        q,
        x_kick: xi,
        pi1: b,
        action,
        a_tilde: scenario.coupling.value(xi),
        van_vleck: analytic.map(|s| s.van_vleck).unwrap_or(f64::NAN),
        scenario: scenario.clone(),
    })
}

/// `int L dt` along the segment through `xa` and `xb`, by Simpson quadrature.
fn numerical_action(scenario: &ClassicalScenario, xa: f64, xb: f64, duration: f64) -> f64 {
    let m = scenario.system.mass();
    let kappa = scenario.system.stiffness();
    let system = scenario.system;
    let lagrangian = |tau: f64| {
        let h = 1e-6 * duration;
        let v = (segment_position(&system, xa, xb, duration, tau + h)
            - segment_position(&system, xa, xb, duration, tau - h))
            / (2.0 * h);
        let x = segment_position(&system, xa, xb, duration, tau);
        0.5 * m * v * v - 0.5 * kappa * x * x
    };
    crate::numeric::simpson(lagrangian, 0.0, duration, 2000)
}

/// Classical likelihood, posterior and final pointer distribution on a grid.
#[derive(Clone, Debug)]
pub struct ClassicalPosterior {
    pub grid: Grid,
    pub solutions: Vec<ClassicalSolution>,
    /// Van Vleck determinant normalized over the grid.
    pub likelihood: Vec<f64>,
    pub prior_q: Vec<f64>,
    pub posterior_q: PdfSummary,
    pub pointer: PdfSummary,
    /// `<A~>` over the posterior, the pointer mean by definition of the marginal.
    pub mean_a_tilde: f64,
}

impl ClassicalPosterior {
    /// `q,A_tilde,S_tilde,van_vleck,posterior`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "q,A_tilde,S_tilde,van_vleck,posterior")?;
        for (k, s) in self.solutions.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt_sig17(s.q),
                fmt_sig17(s.a_tilde),
                fmt_sig17(s.action),
                fmt_sig17(s.van_vleck),
                fmt_sig17(self.posterior_q.pdf[k])
            )?;
        }
        Ok(())
    }
}

/// Bayes update with a flat measure over the unobserved initial momentum: the
/// likelihood of the final endpoint is the Van Vleck density of paths.
pub fn classical_posterior(scenario: &ClassicalScenario) -> Result<ClassicalPosterior> {
    scenario.validate()?;
    let grid = scenario.grid.build()?;
    let dq = grid.dq();
    let solutions: Vec<ClassicalSolution> = grid
        .q_axis()
        .par_iter()
        .map(|&q| solve_boundary(scenario, q))
        .collect::<Result<_>>()?;
    let vv_total: f64 = solutions.iter().map(|s| s.van_vleck).sum::<f64>() * dq;
    let likelihood: Vec<f64> = solutions.iter().map(|s| s.van_vleck / vv_total).collect();
    let prior_q =
        pointer::make_gaussian(&grid, scenario.prior.q_center, scenario.prior.q_sigma)?.pdf();
    let joint: Vec<f64> = likelihood
        .iter()
        .zip(&prior_q)
        .map(|(l, p)| l * p)
        .collect();
    let evidence: f64 = joint.iter().sum::<f64>() * dq;
    let posterior: Vec<f64> = joint.iter().map(|x| x / evidence).collect();
    let mean_a_tilde = solutions
        .iter()
        .zip(&posterior)
        .map(|(s, w)| s.a_tilde * w)
        .sum::<f64>()
        * dq;

    // p = p' + A~(q'), with p' drawn from the gaussian p-prior
    let sigma_p = scenario.prior.p_sigma();
    let norm = 1.0 / (sigma_p * (2.0 * PI).sqrt());
    let p_axis = grid.p_axis();
    let pointer_pdf: Vec<f64> = p_axis
        .par_iter()
        .map(|&p| {
            solutions
                .iter()
                .zip(&posterior)
                .map(|(s, w)| {
                    let z = (p - s.a_tilde) / sigma_p;
                    w * norm * (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * dq
        })
        .collect();

    Ok(ClassicalPosterior {
        grid,
        likelihood,
        prior_q,
        posterior_q: PdfSummary::from_pdf(grid.q_axis(), posterior, dq),
        pointer: PdfSummary::from_pdf(p_axis, pointer_pdf, grid.dp()),
        mean_a_tilde,
        solutions,
    })
}

/// `<x2, s| U(t2, t_i) exp(i q x) U(t_i, t1) |x1, s>` for a free particle, with
/// gaussian endpoint states of position width `s` (units with hbar = 1).
#[derive(Clone, Copy, Debug)]
pub struct GaussianQuantumAmplitude {
    alpha: C64,
    beta0: C64,
    gamma: C64,
    prefactor: C64,
}

impl GaussianQuantumAmplitude {
    pub fn new(scenario: &ClassicalScenario, smear: f64) -> Result<Self> {
        scenario.validate()?;
        let SystemKind::Free { mass } = scenario.system else {
            return Err(Error::NotApplicable(
                "the quantum comparison covers the free particle only".into(),
            ));
        };
        if scenario.coupling != Coupling::Linear {
            return Err(Error::NotApplicable(
                "the quantum comparison covers linear coupling only".into(),
            ));
        }
        if !(smear > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "smear width must be positive, got {smear}"
            )));
        }
        let (t1, t2) = scenario.durations();
        let [x1, x2] = scenario.endpoints;
        let s2 = smear * smear;
        let a = C64::new(4.0 * s2, 2.0 * t1 / mass);
        let b = C64::new(4.0 * s2, 2.0 * t2 / mass);
        let alpha = a.inv() + b.inv();
        let beta0 = 2.0 * x1 / a + 2.0 * x2 / b;
        let gamma = -(x1 * x1) / a - (x2 * x2) / b;
        let prefactor =
            (2.0 * PI * s2).powf(-0.5) * 4.0 * s2 / (a * b).sqrt() * (PI / alpha).sqrt();
        Ok(Self {
            alpha,
            beta0,
            gamma,
            prefactor,
        })
    }
}

impl AmplitudeSource for GaussianQuantumAmplitude {
    fn amplitudes(&self, q: f64) -> (C64, C64) {
        let beta = self.beta0 + C64::new(0.0, q);
        let g = self.prefactor * (beta * beta / (4.0 * self.alpha) + self.gamma).exp();
        (g, g * beta / (2.0 * self.alpha))
    }
}

pub fn gaussian_quantum_amplitude(
    scenario: &ClassicalScenario,
    smear: f64,
) -> Result<GaussianQuantumAmplitude> {
    GaussianQuantumAmplitude::new(scenario, smear)
}

#[derive(Clone, Debug, Serialize)]
pub struct DeviationRow {
    pub quantity: &'static str,
    /// Deviation at each smear width, in the order of `smears`.
    pub raw: Vec<f64>,
    /// Deviation of the sharp-endpoint limit extrapolated in `s^2` and `s^4`.
    pub extrapolated: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrespondenceReport {
    pub smears: Vec<f64>,
    pub classical_mean: f64,
    pub classical_variance: f64,
    pub quantum_means: Vec<f64>,
    pub quantum_variances: Vec<f64>,
    pub rows: Vec<DeviationRow>,
    pub tolerance: f64,
    /// Every extrapolated deviation, and the raw pointer mean deviation at the
    /// smallest smear, is within `tolerance`.
    pub passed: bool,
}

pub const CORRESPONDENCE_TOL: f64 = 1e-5;

/// Quantum versus classical statistics for a free particle with linear coupling.
pub fn correspondence_report(scenario: &ClassicalScenario) -> Result<CorrespondenceReport> {
    correspondence_report_with_tol(scenario, CORRESPONDENCE_TOL)
}

pub fn correspondence_report_with_tol(
    scenario: &ClassicalScenario,
    tolerance: f64,
) -> Result<CorrespondenceReport> {
    let classical = classical_posterior(scenario)?;
    let grid = classical.grid;
    let phi = pointer::make_gaussian(&grid, scenario.prior.q_center, scenario.prior.q_sigma)?;
    let a_tilde: Vec<f64> = classical.solutions.iter().map(|s| s.a_tilde).collect();

    let mut orbits = Vec::new();
    let mut posteriors = Vec::new();
    let mut means = Vec::new();
    let mut variances = Vec::new();
    for &s in &scenario.smears {
        let src = gaussian_quantum_amplitude(scenario, s)?;
        let orbit = ensemble::build_orbit(&src, &grid)?;
        let result = ensemble::ppme_condition(&src, &phi)?;
        orbits.push(orbit.aw_re);
        posteriors.push(result.posterior_q.pdf);
        means.push(result.pointer.mean);
        variances.push(result.pointer.variance);
    }

    let orders = [2, 4];
    let pointwise_rows = |samples: &[Vec<f64>], reference: &[f64], name: &'static str| {
        let raw = samples
            .iter()
            .map(|v| {
                v.iter()
                    .zip(reference)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let extrapolated = (0..reference.len())
            .map(|k| {
                let column: Vec<f64> = samples.iter().map(|v| v[k]).collect();
                (richardson(&column, &orders) - reference[k]).abs()
            })
            .fold(0.0, f64::max);
        DeviationRow {
            quantity: name,
            raw,
            extrapolated,
        }
    };
    let scalar_row = |values: &[f64], reference: f64, name: &'static str| DeviationRow {
        quantity: name,
        raw: values.iter().map(|v| (v - reference).abs()).collect(),
        extrapolated: (richardson(values, &orders) - reference).abs(),
    };

    let rows = vec![
        pointwise_rows(&orbits, &a_tilde, "weak_orbit_vs_a_tilde"),
        pointwise_rows(&posteriors, &classical.posterior_q.pdf, "posterior_q_pdf"),
        scalar_row(&means, classical.pointer.mean, "pointer_mean"),
        scalar_row(&variances, classical.pointer.variance, "pointer_variance"),
    ];
    let raw_mean_ok = rows[2].raw.last().is_some_and(|d| *d < tolerance);
    let passed = raw_mean_ok && rows.iter().all(|r| r.extrapolated < tolerance);
    Ok(CorrespondenceReport {
        smears: scenario.smears.clone(),
        classical_mean: classical.pointer.mean,
        classical_variance: classical.pointer.variance,
        quantum_means: means,
        quantum_variances: variances,
        rows,
        tolerance,
        passed,
    })
}
