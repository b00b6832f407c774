//! Spin-j coherent-state scenarios and their closed-form oracles.
//!
//! Basis index `k` holds the `J_z` eigenvalue `m = j - k`, so index 0 is the
//! maximal-weight state `|j, j>`. Ladder operators follow the Condon-Shortley
//! phase convention.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{self, AmplitudeSource, ConditionalResult, FiniteSource, WeakOrbit};
use crate::error::{Error, Result};
use crate::hilbert::{evolve, CMatrix, Observable, StateVector, C64};
use crate::numeric::{default_peaks, parabolic_offset};
use crate::pointer::{self, Grid, PointerState};

/// Largest supported spin.
pub const MAX_J: f64 = 25.0;

pub type Vec3 = [f64; 3];

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Rotation of `v` by `angle` about the unit vector `axis` (Rodrigues).
pub fn rotate(v: &Vec3, axis: &Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    let k_cross_v = cross(axis, v);
    let k_dot_v = dot(axis, v);
    [0, 1, 2].map(|i| v[i] * c + k_cross_v[i] * s + axis[i] * k_dot_v * (1.0 - c))
}

/// Unit vector with polar angle `theta` and azimuth `phi_az`.
pub fn direction(theta: f64, phi_az: f64) -> Vec3 {
    [
        theta.sin() * phi_az.cos(),
        theta.sin() * phi_az.sin(),
        theta.cos(),
    ]
}

/// A spin quantum number, stored as the integer `2j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SpinJ {
    two_j: u32,
}

impl SpinJ {
    pub fn new(j: f64) -> Result<Self> {
        let two_j = 2.0 * j;
        if !(j > 0.0) || (two_j - two_j.round()).abs() > 1e-12 || j > MAX_J {
            return Err(Error::InvalidArgument(format!(
                "spin j must be a positive half-integer <= {MAX_J}, got {j}"
            )));
        }
        Ok(Self {
            two_j: two_j.round() as u32,
        })
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    /// `m` for basis index `k`.
    pub fn m(&self, k: usize) -> f64 {
        self.j() - k as f64
    }
}

#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub jx: Observable,
    pub jy: Observable,
    pub jz: Observable,
}

impl SpinOperators {
    /// `J . axis` for a unit vector; the z axis keeps the exact diagonal form.
    pub fn along(&self, axis: &Vec3) -> Result<Observable> {
        if axis[0] == 0.0 && axis[1] == 0.0 && axis[2] > 0.0 {
            return Ok(self.jz.clone());
        }
        let m = self.jx.matrix().map(|x| x * axis[0])
            + self.jy.matrix().map(|x| x * axis[1])
            + self.jz.matrix().map(|x| x * axis[2]);
        Observable::new(m)
    }
}

pub fn build_spin_operators(j: SpinJ) -> Result<SpinOperators> {
    let (jp, jz) = ladder_matrices(j);
    let jm = jp.adjoint();
    let half = C64::new(0.5, 0.0);
    let jx = (&jp + &jm) * half;
    let jy = (&jp - &jm) * C64::new(0.0, -0.5);
    let dim = j.dim();
    let diag: Vec<f64> = (0..dim).map(|k| j.m(k)).collect();
    debug_assert_eq!(jz.nrows(), dim);
    Ok(SpinOperators {
        jx: Observable::new(jx)?,
        jy: Observable::new(jy)?,
        jz: Observable::diagonal(&diag)?,
    })
}

/// Raising operator and `J_z` as plain matrices.
pub fn ladder_matrices(j: SpinJ) -> (CMatrix, CMatrix) {
    let dim = j.dim();
    let jj = j.j();
    let mut jp = CMatrix::zeros(dim, dim);
    let mut jz = CMatrix::zeros(dim, dim);
    for k in 0..dim {
        let m = j.m(k);
        jz[(k, k)] = C64::new(m, 0.0);
        if k > 0 {
            jp[(k - 1, k)] = C64::new((jj * (jj + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    (jp, jz)
}

/// `exp(-i J_z phi_az) exp(-i J_y theta) |j, j>` through spectral exponentials.
pub fn coherent_state(ops: &SpinOperators, theta: f64, phi_az: f64) -> Result<StateVector> {
    let top = StateVector::basis(ops.jz.dim(), 0);
    let tilted = evolve(&ops.jy, -theta, &top)?;
    evolve(&ops.jz, -phi_az, &tilted)
}

/// The same state from the closed-form rotation matrix elements
/// `d^j_{m j}(theta) = sqrt(C(2j, j - m)) cos^{j+m}(theta/2) sin^{j-m}(theta/2)`.
pub fn coherent_state_closed_form(j: SpinJ, theta: f64, phi_az: f64) -> StateVector {
    let (s, c) = (0.5 * theta).sin_cos();
    closed_form_amplitudes(
        j,
        c,
        s,
        C64::from_polar(1.0, -phi_az),
        C64::from_polar(1.0, -0.5 * phi_az),
    )
}

/// Amplitudes `sqrt(C(2j, k)) c^{2j-k} s^k e^{-i m phi}` with `turn = e^{-i phi}`
/// and `half_turn = e^{-i phi/2}`; integer powers of `turn` keep exact phases exact.
fn closed_form_amplitudes(j: SpinJ, c: f64, s: f64, turn: C64, half_turn: C64) -> StateVector {
    let two_j = j.two_j();
    let half_integer = two_j % 2 == 1;
    let amps = (0..j.dim())
        .map(|k| {
            let mag = binomial(two_j, k as u32).sqrt()
                * c.powi((two_j - k as u32) as i32)
                * s.powi(k as i32);
            // m = j - k, written as an integer power of turn times half_turn if needed
            let twice_m = two_j as i32 - 2 * k as i32;
            let phase = if half_integer {
                turn.powi((twice_m - 1) / 2) * half_turn
            } else {
                turn.powi(twice_m / 2)
            };
            phase * mag
        })
        .collect();
    StateVector::unnormalized(amps)
}

/// Exact for `n <= 2 * MAX_J`.
fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k) as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n as u128 - i) / (i + 1);
    }
    acc as f64
}

/// Coherent state pointing along the unit vector `n`.
pub fn coherent_state_along(j: SpinJ, n: &Vec3) -> StateVector {
    let nz = n[2].clamp(-1.0, 1.0);
    let c = (0.5 * (1.0 + nz)).sqrt();
    let s = (0.5 * (1.0 - nz)).sqrt();
    let rho = n[0].hypot(n[1]);
    if rho == 0.0 {
        return closed_form_amplitudes(j, c, s, C64::new(1.0, 0.0), C64::new(1.0, 0.0));
    }
    let turn = C64::new(n[0] / rho, -n[1] / rho);
    let half_turn = C64::from_polar(1.0, -0.5 * n[1].atan2(n[0]));
    closed_form_amplitudes(j, c, s, turn, half_turn)
}

/// Closed-form quantities for a pair of coherent states and a measured axis.
#[derive(Clone, Copy, Debug)]
pub struct SpinOracle {
    pub j: f64,
    pub n1: Vec3,
    pub n2: Vec3,
    pub axis: Vec3,
}

impl SpinOracle {
    /// `n1` carried along by the back-reaction `exp(i q J.axis)`.
    pub fn rotated_n1(&self, q: f64) -> Vec3 {
        rotate(&self.n1, &self.axis, -q)
    }

    /// `|<n2;j|n1;j>|^2 = ((1 + n1.n2)/2)^{2j}`.
    pub fn overlap_probability(j: f64, n1: &Vec3, n2: &Vec3) -> f64 {
        (0.5 * (1.0 + dot(n1, n2))).powf(2.0 * j)
    }

    /// Complex weak value of the spin vector, `j (n1 + n2 + i n1 x n2) / (1 + n1.n2)`.
    pub fn weak_spin_vector(j: f64, n1: &Vec3, n2: &Vec3) -> [C64; 3] {
        let d = 1.0 + dot(n1, n2);
        let c = cross(n1, n2);
        [0, 1, 2].map(|i| C64::new(j * (n1[i] + n2[i]) / d, j * c[i] / d))
    }

    /// Weak value of `J.axis` along the orbit.
    pub fn weak_orbit(&self, q: f64) -> C64 {
        let w = Self::weak_spin_vector(self.j, &self.rotated_n1(q), &self.n2);
        w[0] * self.axis[0] + w[1] * self.axis[1] + w[2] * self.axis[2]
    }

    pub fn ln_p12(&self, q: f64) -> f64 {
        2.0 * self.j * (0.5 * (1.0 + dot(&self.rotated_n1(q), &self.n2))).ln()
    }

    /// Canonical setup: `J_z(q) = j sqrt(2) / (1 + sin^2(q/2))`.
    pub fn canonical_jz(j: f64, q: f64) -> f64 {
        j * SQRT_2 / (1.0 + (0.5 * q).sin().powi(2))
    }

    /// Canonical setup: `delta(q) = 4j atan(sqrt(2) tan(q/2))`, continued by `2 pi j`
    /// across every pole of `tan(q/2)`.
    pub fn canonical_delta(j: f64, q: f64) -> f64 {
        let branch = (q / (2.0 * PI)).round();
        4.0 * j * ((SQRT_2 * (0.5 * q).tan()).atan() + PI * branch)
    }

    /// Canonical setup: large-j approximation of `ln P12(q) - ln P12(q_pm)` near
    /// the likelihood minimum `q = 0` (`at_minimum`) or its maximum `q = pi`.
    pub fn canonical_large_j_log_ratio(j: f64, q: f64, at_minimum: bool) -> f64 {
        if at_minimum {
            0.5 * j * q * q
        } else {
            -0.25 * j * (q - PI).powi(2)
        }
    }

    /// Pointer values where `cos^2(p q* - delta/2)` peaks, inside `[lo, hi]`.
    pub fn fringe_maxima(q_star: f64, delta: f64, lo: f64, hi: f64) -> Vec<f64> {
        let k_lo = ((lo * q_star - 0.5 * delta) / PI).ceil() as i64;
        let k_hi = ((hi * q_star - 0.5 * delta) / PI).floor() as i64;
        (k_lo..=k_hi)
            .map(|k| (0.5 * delta + k as f64 * PI) / q_star)
            .collect()
    }
}

/// Apparatus prior profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PriorSpec {
    Gaussian { center: f64, sigma: f64 },
    Window { center: f64, eps: f64 },
    Lorentzian { center: f64, gamma: f64 },
}

impl PriorSpec {
    pub fn build(&self, grid: &Grid) -> Result<PointerState> {
        match *self {
            PriorSpec::Gaussian { center, sigma } => pointer::make_gaussian(grid, center, sigma),
            PriorSpec::Window { center, eps } => pointer::make_window(grid, center, eps),
            PriorSpec::Lorentzian { center, gamma } => {
                pointer::make_lorentzian(grid, center, gamma)
            }
        }
    }

    pub fn center(&self) -> f64 {
        match *self {
            PriorSpec::Gaussian { center, .. }
            | PriorSpec::Window { center, .. }
            | PriorSpec::Lorentzian { center, .. } => center,
        }
    }
}

/// Pre- and post-selected coherent states, a measured spin component and a prior.
#[derive(Clone, Debug)]
pub struct SpinScenario {
    pub j: SpinJ,
    pub n1: Vec3,
    pub n2: Vec3,
    pub axis: Vec3,
    /// The measured observable is `scale * J.axis`.
    pub scale: f64,
    pub prior: PriorSpec,
    pub grid: Grid,
}

/// Canonical pre-selection `(0, 1, 1)/sqrt(2)`.
pub const CANONICAL_N1: Vec3 = [
    0.0,
    std::f64::consts::FRAC_1_SQRT_2,
    std::f64::consts::FRAC_1_SQRT_2,
];
/// Canonical post-selection `(0, -1, 1)/sqrt(2)`.
pub const CANONICAL_N2: Vec3 = [
    0.0,
    -std::f64::consts::FRAC_1_SQRT_2,
    std::f64::consts::FRAC_1_SQRT_2,
];
pub const Z_AXIS: Vec3 = [0.0, 0.0, 1.0];

pub const PRESET_NAMES: [&str; 10] = [
    "fig1-spin-half",
    "fig4-j20",
    "fig5-a",
    "fig5-b",
    "fig5-c",
    "fig5-d",
    "fig5-e",
    "fig5-f",
    "fig5-g",
    "fig6-sweep",
];

/// Prior widths used by the gaussian transition sweep preset.
pub const FIG6_SIGMAS: [f64; 8] = [0.1, 0.2, 0.3, 0.5, 0.8, 1.2, 2.0, 3.0];

impl SpinScenario {
    pub fn new(
        j: f64,
        n1: Vec3,
        n2: Vec3,
        axis: Vec3,
        prior: PriorSpec,
        grid: Grid,
    ) -> Result<Self> {
        for (name, v) in [("n1", &n1), ("n2", &n2), ("axis", &axis)] {
            if (norm(v) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be a unit vector, |{name}| = {}",
                    norm(v)
                )));
            }
        }
        if !(dot(&n1, &n2) > -1.0 + 1e-12) {
            return Err(Error::InvalidArgument(
                "n1 and n2 must not be antipodal".into(),
            ));
        }
        Ok(Self {
            j: SpinJ::new(j)?,
            n1,
            n2,
            axis,
            scale: 1.0,
            prior,
            grid,
        })
    }

    /// Canonical pair of states measured along z.
    pub fn canonical(j: f64, prior: PriorSpec, grid: Grid) -> Result<Self> {
        Self::new(j, CANONICAL_N1, CANONICAL_N2, Z_AXIS, prior, grid)
    }

    /// Named figure scenario. Panels whose prior location is not fixed take it
    /// from `center`; for the other presets `center` overrides the default.
    pub fn preset(name: &str, center: Option<f64>) -> Result<Self> {
        let wide = Grid::symmetric(4.0 * PI, 4096)?;
        let narrow = PI / 24.0;
        let required = |panel: &str| {
            center.ok_or_else(|| {
                Error::InvalidArgument(format!("preset {panel} requires the prior center"))
            })
        };
        let located = |default: f64| center.unwrap_or(default);
        match name {
            "fig1-spin-half" => {
                let theta = 11.0 * PI / 24.0;
                let mut s = Self::new(
                    0.5,
                    [theta.sin(), 0.0, theta.cos()],
                    [-theta.sin(), 0.0, theta.cos()],
                    Z_AXIS,
                    PriorSpec::Gaussian {
                        center: located(0.0),
                        sigma: 0.5 / PI,
                    },
                    Grid::symmetric(8.0, 1024)?,
                )?;
                s.scale = 2.0;
                Ok(s)
            }
            "fig4-j20" => Self::canonical(
                20.0,
                PriorSpec::Gaussian {
                    center: located(0.0),
                    sigma: 0.15,
                },
                wide,
            ),
            "fig5-a" => Self::canonical(
                20.0,
                PriorSpec::Window {
                    center: located(0.0),
                    eps: 2.0 * narrow,
                },
                wide,
            ),
            "fig5-b" => Self::canonical(
                20.0,
                PriorSpec::Window {
                    center: required(name)?,
                    eps: 2.0 * narrow,
                },
                wide,
            ),
            "fig5-c" => Self::canonical(
                20.0,
                PriorSpec::Gaussian {
                    center: located(0.0),
                    sigma: narrow,
                },
                wide,
            ),
            "fig5-d" => Self::canonical(
                20.0,
                PriorSpec::Gaussian {
                    center: required(name)?,
                    sigma: narrow,
                },
                wide,
            ),
            "fig5-e" => Self::canonical(
                20.0,
                PriorSpec::Gaussian {
                    center: located(PI),
                    sigma: narrow,
                },
                wide,
            ),
            "fig5-f" => Self::canonical(
                20.0,
                PriorSpec::Window {
                    center: located(0.0),
                    eps: 3.0 * PI,
                },
                wide,
            ),
            "fig5-g" => Self::canonical(
                20.0,
                PriorSpec::Lorentzian {
                    center: located(0.0),
                    gamma: narrow,
                },
                wide,
            ),
            "fig6-sweep" => Self::canonical(
                20.0,
                PriorSpec::Gaussian {
                    center: located(0.0),
                    sigma: FIG6_SIGMAS[0],
                },
                Grid::symmetric(16.0 * PI, 16384)?,
            ),
            other => Err(Error::InvalidArgument(format!("unknown preset {other:?}"))),
        }
    }

    pub fn with_prior(&self, prior: PriorSpec) -> Self {
        Self {
            prior,
            ..self.clone()
        }
    }

    pub fn with_grid(&self, grid: Grid) -> Self {
        Self {
            grid,
            ..self.clone()
        }
    }

    pub fn oracle(&self) -> SpinOracle {
        SpinOracle {
            j: self.j.j(),
            n1: self.n1,
            n2: self.n2,
            axis: self.axis,
        }
    }

    pub fn states(&self) -> (StateVector, StateVector) {
        (
            coherent_state_along(self.j, &self.n1),
            coherent_state_along(self.j, &self.n2),
        )
    }

    pub fn observable(&self) -> Result<Observable> {
        let obs = build_spin_operators(self.j)?.along(&self.axis)?;
        if self.scale == 1.0 {
            Ok(obs)
        } else {
            Observable::new(obs.matrix().map(|x| x * self.scale))
        }
    }

    pub fn source(&self) -> Result<FiniteSource> {
        let (psi1, psi2) = self.states();
        FiniteSource::new(&psi2, &self.observable()?, &psi1)
    }

    pub fn prior_state(&self) -> Result<PointerState> {
        self.prior.build(&self.grid)
    }

    pub fn orbit(&self) -> Result<WeakOrbit> {
        ensemble::build_orbit(&self.source()?, &self.grid)
    }

    pub fn condition(&self) -> Result<ConditionalResult> {
        ensemble::ppme_condition(&self.source()?, &self.prior_state()?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FixedPointMethod {
    Iteration,
    Bisection,
}

#[derive(Clone, Debug, Serialize)]
pub struct BiasFixedPoint {
    pub q_initial: f64,
    pub sigma: f64,
    pub q_star: f64,
    pub method: FixedPointMethod,
    pub iterations: usize,
    /// Grid argmax of the exact posterior.
    pub grid_argmax: f64,
    pub grid_spacing: f64,
}

const FIXED_POINT_RELAXATION: f64 = 0.5;
const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITER: usize = 500;
/// Half-width of the search bracket in prior standard deviations.
const BRACKET_SIGMAS: f64 = 8.0;

/// Posterior sampling point `q* = q_i - 2 sigma^2 Im W(q*)` of a gaussian prior.
pub fn bias_fixed_point(scenario: &SpinScenario) -> Result<BiasFixedPoint> {
    let PriorSpec::Gaussian { center: qi, sigma } = scenario.prior else {
        return Err(Error::NotApplicable(
            "bias fixed point needs a gaussian prior".into(),
        ));
    };
    let src = scenario.source()?;
    let im_w = |q: f64| {
        src.weak_orbit(q)
            .map(|w| w.im)
            .ok_or(Error::Pole { overlap: 0.0 })
    };
    // d/dq ln posterior
    let slope = |q: f64| -> Result<f64> { Ok(-2.0 * im_w(q)? - (q - qi) / (sigma * sigma)) };

    let lo = qi - BRACKET_SIGMAS * sigma;
    let hi = qi + BRACKET_SIGMAS * sigma;
    let samples = 4000;
    let mut maxima = Vec::new();
    let mut prev = slope(lo)?;
    for i in 1..=samples {
        let q = lo + (hi - lo) * i as f64 / samples as f64;
        let s = slope(q)?;
        if prev > 0.0 && s <= 0.0 {
            maxima.push(q);
        }
        prev = s;
    }
    if maxima.len() != 1 {
        return Err(Error::Multimodal {
            lo,
            hi,
            modes: maxima.len(),
        });
    }

    let mut q = qi;
    let mut solved = None;
    for it in 1..=FIXED_POINT_MAX_ITER {
        let target = qi - 2.0 * sigma * sigma * im_w(q)?;
        let next = (1.0 - FIXED_POINT_RELAXATION) * q + FIXED_POINT_RELAXATION * target;
        if !next.is_finite() || next < lo || next > hi {
            break;
        }
        let step = (next - q).abs();
        q = next;
        if step < FIXED_POINT_TOL {
            solved = Some((q, FixedPointMethod::Iteration, it));
            break;
        }
    }
    let (q_star, method, iterations) = match solved {
        Some(found) => found,
        None => {
            let step = (hi - lo) / samples as f64;
            let (mut a, mut b) = (maxima[0] - step, maxima[0]);
            let mut it = 0;
            while b - a > FIXED_POINT_TOL && it < 200 {
                let mid = 0.5 * (a + b);
                if slope(mid)? > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
                it += 1;
            }
            (0.5 * (a + b), FixedPointMethod::Bisection, it)
        }
    };

    let grid = scenario.grid;
    let phi = scenario.prior_state()?;
    let prior = phi.pdf();
    let argmax = (0..grid.n())
        .map(|k| (k, src.amplitude(grid.q(k)).norm_sqr() * prior[k]))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| grid.q(k))
        .expect("grid is not empty");

    Ok(BiasFixedPoint {
        q_initial: qi,
        sigma,
        q_star,
        method,
        iterations,
        grid_argmax: argmax,
        grid_spacing: grid.dq(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Peak {
    pub location: f64,
    pub height: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FringeReport {
    pub q_star: f64,
    pub delta: f64,
    /// The symmetric pair of posterior peaks used for the prediction.
    pub posterior_pair: [Peak; 2],
    /// Further posterior peaks above the detection threshold.
    pub other_posterior_peaks: Vec<Peak>,
    /// Local maxima of the final pointer pdf.
    pub pdf_maxima: Vec<f64>,
    /// `cos^2(p q* - delta/2)` maxima over the same p-range.
    pub predicted_maxima: Vec<f64>,
    pub max_prediction_deviation: f64,
    /// Largest distance of a detected maximum from the `J_z` spectrum `j + Z`.
    pub max_spectrum_deviation: f64,
    pub envelope_center: f64,
    pub p_spacing: f64,
}

/// Relative height difference tolerated between the two posterior peaks.
const PEAK_PAIR_HEIGHT_TOL: f64 = 0.1;

/// Compares the interference fringes of a two-peak posterior with the
/// modulation law `cos^2(p q* - delta(q*)/2)`.
pub fn fringe_check(scenario: &SpinScenario) -> Result<FringeReport> {
    let orbit = scenario.orbit()?;
    let result = scenario.condition()?;
    fringe_report(scenario, &orbit, &result)
}

pub fn fringe_report(
    scenario: &SpinScenario,
    orbit: &WeakOrbit,
    result: &ConditionalResult,
) -> Result<FringeReport> {
    let grid = scenario.grid;
    let posterior = &result.posterior_q.pdf;
    let mut peaks: Vec<Peak> = default_peaks(posterior)
        .into_iter()
        .map(|k| Peak {
            location: refine(&grid.q_axis(), posterior, k, grid.dq()),
            height: posterior[k],
        })
        .collect();
    if peaks.len() < 2 {
        return Err(Error::NotApplicable(format!(
            "posterior has {} peak(s), fringes need two",
            peaks.len()
        )));
    }
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height));
    let (a, b) = (peaks[0].clone(), peaks[1].clone());
    let symmetric = (a.location + b.location).abs() <= 2.0 * grid.dq();
    let similar = (a.height - b.height).abs() <= PEAK_PAIR_HEIGHT_TOL * a.height;
    if !symmetric || !similar {
        return Err(Error::NotApplicable(format!(
            "posterior peaks at {} and {} are not a symmetric pair of similar height",
            a.location, b.location
        )));
    }
    let q_star = 0.5 * (a.location - b.location).abs();
    let delta = interpolate(&orbit.q, &orbit.delta, q_star);
    let pair = if a.location < b.location {
        [a, b]
    } else {
        [b, a]
    };
    let mut others: Vec<Peak> = peaks[2..].to_vec();
    others.sort_by(|x, y| x.location.total_cmp(&y.location));

    let pdf = &result.pointer.pdf;
    let p_axis = grid.p_axis();
    let pdf_maxima: Vec<f64> = default_peaks(pdf)
        .into_iter()
        .map(|m| refine(&p_axis, pdf, m, grid.dp()))
        .collect();
    let (lo, hi) = match (pdf_maxima.first(), pdf_maxima.last()) {
        (Some(lo), Some(hi)) => (*lo - 0.5, *hi + 0.5),
        _ => {
            return Err(Error::NotApplicable(
                "final pointer pdf has no maxima".into(),
            ))
        }
    };
    let predicted = SpinOracle::fringe_maxima(q_star, delta, lo, hi);
    let nearest = |x: f64, set: &[f64]| {
        set.iter()
            .map(|y| (x - y).abs())
            .fold(f64::INFINITY, f64::min)
    };
    let max_prediction_deviation = pdf_maxima
        .iter()
        .map(|&p| nearest(p, &predicted))
        .fold(0.0, f64::max);
    let j = scenario.j.j();
    let max_spectrum_deviation = pdf_maxima
        .iter()
        .map(|&p| ((p - j) - (p - j).round()).abs())
        .fold(0.0, f64::max);

    Ok(FringeReport {
        q_star,
        delta,
        posterior_pair: pair,
        other_posterior_peaks: others,
        pdf_maxima,
        predicted_maxima: predicted,
        max_prediction_deviation,
        max_spectrum_deviation,
        envelope_center: result.pointer.mean,
        p_spacing: grid.dp(),
    })
}

fn refine(axis: &[f64], values: &[f64], k: usize, h: f64) -> f64 {
    if k == 0 || k + 1 >= values.len() {
        return axis[k];
    }
    axis[k] + h * parabolic_offset(values[k - 1], values[k], values[k + 1])
}

fn interpolate(axis: &[f64], values: &[f64], x: f64) -> f64 {
    let h = axis[1] - axis[0];
    let t = ((x - axis[0]) / h).clamp(0.0, (axis.len() - 1) as f64);
    let k = (t.floor() as usize).min(axis.len() - 2);
    let f = t - k as f64;
    values[k] * (1.0 - f) + values[k + 1] * f
}

#[derive(Clone, Debug, Serialize)]
pub struct TransitionRow {
    pub sigma: f64,
    /// Posterior peaks with `q >= 0`, ascending.
    pub posterior_peaks: Vec<f64>,
    /// `Aw_re` at the outermost non-negative posterior peak.
    pub sampled_weak_value: f64,
    /// Median spacing of the final pointer pdf maxima (None for a single maximum).
    pub fringe_spacing: Option<f64>,
    pub envelope_center: f64,
    pub pointer_variance: f64,
    pub p12_phi: f64,
}

/// Gaussian priors of increasing width centred at 0, sorted by width.
pub fn transition_sweep(scenario: &SpinScenario, sigmas: &[f64]) -> Result<Vec<TransitionRow>> {
    let src = scenario.source()?;
    let orbit = ensemble::build_orbit(&src, &scenario.grid)?;
    let mut sorted = sigmas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let center = scenario.prior.center();
    sorted
        .par_iter()
        .map(|&sigma| {
            let grid = scenario.grid;
            let phi = pointer::make_gaussian(&grid, center, sigma)?;
            let result = ensemble::ppme_condition(&src, &phi)?;
            let posterior = &result.posterior_q.pdf;
            let q_axis = grid.q_axis();
            let mut peaks: Vec<f64> = default_peaks(posterior)
                .into_iter()
                .map(|k| refine(&q_axis, posterior, k, grid.dq()))
                .filter(|&q| q >= center - 0.5 * grid.dq())
                .collect();
            peaks.sort_by(f64::total_cmp);
            let outer = *peaks.last().unwrap_or(&center);
            let sampled = interpolate(&orbit.q, &orbit.aw_re, outer);
            let maxima: Vec<f64> = default_peaks(&result.pointer.pdf)
                .into_iter()
                .map(|m| grid.p(m))
                .collect();
            let mut gaps: Vec<f64> = maxima.windows(2).map(|w| w[1] - w[0]).collect();
            gaps.sort_by(f64::total_cmp);
            Ok(TransitionRow {
                sigma,
                posterior_peaks: peaks,
                sampled_weak_value: sampled,
                fringe_spacing: (!gaps.is_empty()).then(|| gaps[gaps.len() / 2]),
                envelope_center: result.pointer.mean,
                pointer_variance: result.pointer.variance,
                p12_phi: result.p12_phi,
            })
        })
        .collect()
}
