//! Pointer distributions for pre-selected (PME) and pre- and post-selected
//! (PPME) ensembles, read through the weak-value orbit of the back-reaction.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::hilbert::{Observable, PostSelectionBasis, StateVector, C64, DEFAULT_POLE_TOL};
use crate::numeric::observed_orders;
use crate::pointer::{self, fmt_sig17, Grid, PdfSummary, PointerState, Representation};

/// Smallest post-selection probability accepted by [`ppme_condition`].
pub const MIN_P12_PHI: f64 = 1e-14;

/// A transition amplitude `G(q) = <psi2| exp(i A q) |psi1>` together with
/// `H(q) = <psi2| A exp(i A q) |psi1>`, so that the weak-value orbit is `H/G`.
pub trait AmplitudeSource: Sync {
    fn amplitudes(&self, q: f64) -> (C64, C64);

    fn amplitude(&self, q: f64) -> C64 {
        self.amplitudes(q).0
    }

    /// `W(q) = H(q)/G(q)`, or `None` where `G` vanishes exactly.
    fn weak_orbit(&self, q: f64) -> Option<C64> {
        let (g, h) = self.amplitudes(q);
        (g.norm() > 0.0).then(|| h / g)
    }
}

/// Amplitude source built from the spectral weights `<psi2|Pi_a|psi1>`.
#[derive(Clone, Debug)]
pub struct FiniteSource {
    weights: Vec<(f64, C64)>,
}

impl FiniteSource {
    pub fn new(psi2: &StateVector, obs: &Observable, psi1: &StateVector) -> Result<Self> {
        Ok(Self {
            weights: obs.spectral_weights(psi2, psi1)?,
        })
    }

    pub fn from_weights(weights: Vec<(f64, C64)>) -> Self {
        Self { weights }
    }

    /// Pairs `(a, <psi2|Pi_a|psi1>)` ordered by eigenvalue.
    pub fn weights(&self) -> &[(f64, C64)] {
        &self.weights
    }

    pub fn overlap(&self) -> C64 {
        self.weights.iter().map(|(_, w)| w).sum()
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.weights
            .iter()
            .map(|(a, _)| a.abs())
            .fold(0.0, f64::max)
    }
}

impl AmplitudeSource for FiniteSource {
    /// Phases and sums are carried in double-double precision: near-orthogonal
    /// pre- and post-selections cancel many orders of magnitude.
    fn amplitudes(&self, q: f64) -> (C64, C64) {
        let zero = TwoFloat::from(0.0);
        let (mut g_re, mut g_im, mut h_re, mut h_im) = (zero, zero, zero, zero);
        for &(a, w) in &self.weights {
            let (sin, cos) = TwoFloat::new_mul(a, q).sin_cos();
            let re = cos * w.re - sin * w.im;
            let im = sin * w.re + cos * w.im;
            g_re += re;
            g_im += im;
            h_re += re * a;
            h_im += im * a;
        }
        let f = |x: TwoFloat| x.hi() + x.lo();
        (C64::new(f(g_re), f(g_im)), C64::new(f(h_re), f(h_im)))
    }
}

/// Polar decomposition of the transition amplitude sampled on a q-grid.
#[derive(Clone, Debug)]
pub struct WeakOrbit {
    pub grid: Grid,
    pub q: Vec<f64>,
    pub amplitude: Vec<C64>,
    pub p12: Vec<f64>,
    /// Phase of the amplitude, unwrapped inside each run of valid samples.
    pub s12: Vec<f64>,
    pub aw_re: Vec<f64>,
    pub aw_im: Vec<f64>,
    pub valid: Vec<bool>,
    /// `S12 - q Aw_re`.
    pub gamma12: Vec<f64>,
    /// `int_{-q}^{q} Aw_re`; NaN where `-q` falls outside the grid.
    pub delta: Vec<f64>,
    /// Set when adjacent phase steps exceed pi/2 on more than 1% of samples.
    pub under_resolved: bool,
}

impl WeakOrbit {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Orbit CSV: `q,P12,S12,Aw_re,Aw_im,valid`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "q,P12,S12,Aw_re,Aw_im,valid")?;
        for k in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_sig17(self.q[k]),
                fmt_sig17(self.p12[k]),
                fmt_sig17(self.s12[k]),
                fmt_sig17(self.aw_re[k]),
                fmt_sig17(self.aw_im[k]),
                u8::from(self.valid[k])
            )?;
        }
        Ok(())
    }
}

pub fn build_orbit<S: AmplitudeSource + ?Sized>(src: &S, grid: &Grid) -> Result<WeakOrbit> {
    build_orbit_with_tol(src, grid, DEFAULT_POLE_TOL)
}

/// Samples are valid where `|G| > pole_tol * max |G|`.
pub fn build_orbit_with_tol<S: AmplitudeSource + ?Sized>(
    src: &S,
    grid: &Grid,
    pole_tol: f64,
) -> Result<WeakOrbit> {
    let q = grid.q_axis();
    let pairs: Vec<(C64, C64)> = q.par_iter().map(|&x| src.amplitudes(x)).collect();
    let amplitude: Vec<C64> = pairs.iter().map(|(g, _)| *g).collect();
    let max_abs = amplitude.iter().map(|g| g.norm()).fold(0.0, f64::max);
    if !(max_abs > 0.0) {
        return Err(Error::OrthogonalOrbit);
    }
    let valid: Vec<bool> = amplitude
        .iter()
        .map(|g| g.norm() > pole_tol * max_abs)
        .collect();
    if !valid.iter().any(|&v| v) {
        return Err(Error::OrthogonalOrbit);
    }
    let p12: Vec<f64> = amplitude.iter().map(|g| g.norm_sqr()).collect();

    let (s12, large_steps) = unwrap_phase(&q, &amplitude, &valid);

    let mut aw_re = vec![f64::NAN; q.len()];
    let mut aw_im = vec![f64::NAN; q.len()];
    for k in 0..q.len() {
        let (g, h) = pairs[k];
        if g.norm() > 0.0 {
            let w = h / g;
            aw_re[k] = w.re;
            aw_im[k] = w.im;
        }
    }
    let gamma12 = (0..q.len())
        .map(|k| {
            if valid[k] {
                s12[k] - q[k] * aw_re[k]
            } else {
                f64::NAN
            }
        })
        .collect();
    let integrand: Vec<f64> = (0..q.len())
        .map(|k| if valid[k] { aw_re[k] } else { 0.0 })
        .collect();
    let delta = symmetric_integral(grid, &integrand);

    Ok(WeakOrbit {
        grid: *grid,
        q,
        amplitude,
        p12,
        s12,
        aw_re,
        aw_im,
        valid,
        gamma12,
        delta,
        under_resolved: large_steps as f64 > 0.01 * grid.n() as f64,
    })
}

/// Phase of the amplitude, continuous inside each run of valid samples. Each run
/// starts from the principal value at its sample closest to `q = 0`. Also
/// returns the number of adjacent steps larger than pi/2.
fn unwrap_phase(q: &[f64], amplitude: &[C64], valid: &[bool]) -> (Vec<f64>, usize) {
    let n = q.len();
    let mut s12 = vec![f64::NAN; n];
    let mut large_steps = 0usize;
    let mut start = 0;
    while start < n {
        if !valid[start] {
            start += 1;
            continue;
        }
        let mut end = start;
        while end < n && valid[end] {
            end += 1;
        }
        let anchor = (start..end)
            .min_by(|&a, &b| q[a].abs().total_cmp(&q[b].abs()))
            .expect("run is not empty");
        s12[anchor] = amplitude[anchor].arg();
        let mut follow = |from: usize, to: usize| {
            let step = (amplitude[to].arg() - s12[from] + PI).rem_euclid(2.0 * PI) - PI;
            if step.abs() > 0.5 * PI {
                large_steps += 1;
            }
            s12[to] = s12[from] + step;
        };
        for k in anchor + 1..end {
            follow(k - 1, k);
        }
        for k in (start..anchor).rev() {
            follow(k + 1, k);
        }
        start = end;
    }
    (s12, large_steps)
}

/// `int_{-q_k}^{q_k} f` by the cumulative trapezoid rule, anchored at q = 0.
fn symmetric_integral(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let n = grid.n();
    let dq = grid.dq();
    let mut cumulative = vec![0.0; n];
    for k in 1..n {
        cumulative[k] = cumulative[k - 1] + 0.5 * dq * (f[k - 1] + f[k]);
    }
    let at = |x: f64| -> Option<f64> {
        let t = (x - grid.q_min()) / dq;
        if t < -1e-9 || t > (n - 1) as f64 + 1e-9 {
            return None;
        }
        let t = t.clamp(0.0, (n - 1) as f64);
        let k = (t.floor() as usize).min(n - 2);
        let frac = t - k as f64;
        Some(cumulative[k] + frac * (cumulative[k + 1] - cumulative[k]))
    };
    (0..n)
        .map(|k| {
            let x = grid.q(k);
            match (at(x), at(-x)) {
                (Some(a), Some(b)) => a - b,
                _ => f64::NAN,
            }
        })
        .collect()
}

fn check_shift_resolved(grid: &Grid, max_shift: f64) -> Result<()> {
    if max_shift >= grid.p_max() {
        return Err(Error::Unresolved {
            what: "eigenvalue shift",
            detail: format!(
                "|a| = {max_shift} exceeds the p-grid half-width {}",
                grid.p_max()
            ),
        });
    }
    Ok(())
}

/// `FT[exp(i a q) phi]` for each eigenvalue, i.e. the prior shifted to `p - a`.
fn shifted_priors(phi: &PointerState, eigenvalues: &[f64]) -> Vec<Vec<C64>> {
    eigenvalues
        .par_iter()
        .map(|&a| phi.boost(a).to_p().samples().to_vec())
        .collect()
}

/// PME pointer pdf `sum_a <Pi_a> |phi(p - a)|^2`.
pub fn pme_distribution(
    psi1: &StateVector,
    obs: &Observable,
    phi: &PointerState,
) -> Result<PdfSummary> {
    let weights = obs.spectral_weights(psi1, psi1)?;
    let eigenvalues: Vec<f64> = weights.iter().map(|(a, _)| *a).collect();
    let grid = *phi.grid();
    check_shift_resolved(
        &grid,
        eigenvalues.iter().map(|a| a.abs()).fold(0.0, f64::max),
    )?;
    let shifted = shifted_priors(phi, &eigenvalues);
    let mut pdf = vec![0.0; grid.n()];
    for ((_, w), amp) in weights.iter().zip(&shifted) {
        for (slot, s) in pdf.iter_mut().zip(amp) {
            *slot += w.re * s.norm_sqr();
        }
    }
    Ok(PdfSummary::from_periodic_pdf(grid.p_axis(), pdf, grid.dp()))
}

/// The three terms of the final pointer variance and the two of its mean.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentDecomposition {
    /// `<p>` of the reassessed state.
    pub mean_p_reassessed: f64,
    /// Posterior average of `Aw_re`.
    pub mean_weak: f64,
    /// `<dp^2>` of the reassessed state.
    pub var_p_reassessed: f64,
    /// `<{dp, dA}>` on the reassessed state.
    pub cross: f64,
    /// Posterior variance of `Aw_re`.
    pub var_weak: f64,
    /// Plain quadrature mean of the final p-pdf.
    pub direct_mean: f64,
    /// Plain quadrature variance of the final p-pdf.
    pub direct_variance: f64,
}

impl MomentDecomposition {
    pub fn mean_total(&self) -> f64 {
        self.mean_p_reassessed + self.mean_weak
    }

    pub fn variance_total(&self) -> f64 {
        self.var_p_reassessed + self.cross + self.var_weak
    }

    pub fn mean_residual(&self) -> f64 {
        (self.direct_mean - self.mean_total()).abs()
    }

    pub fn variance_residual(&self) -> f64 {
        (self.direct_variance - self.variance_total()).abs()
    }
}

/// Apparatus statistics conditioned on a successful post-selection.
#[derive(Clone, Debug)]
pub struct ConditionalResult {
    pub p12_phi: f64,
    pub prior_q: PointerState,
    pub reassessed: PointerState,
    pub final_q: PointerState,
    pub final_p: PointerState,
    pub posterior_q: PdfSummary,
    pub prior_pointer: PdfSummary,
    pub pointer: PdfSummary,
    pub decomposition: MomentDecomposition,
}

impl ConditionalResult {
    /// `p,prior_pdf,final_pdf`.
    pub fn write_p_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "p,prior_pdf,final_pdf")?;
        for k in 0..self.pointer.pdf.len() {
            writeln!(
                out,
                "{},{},{}",
                fmt_sig17(self.pointer.axis[k]),
                fmt_sig17(self.prior_pointer.pdf[k]),
                fmt_sig17(self.pointer.pdf[k])
            )?;
        }
        Ok(())
    }

    /// `q,prior_pdf,posterior_pdf`.
    pub fn write_q_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "q,prior_pdf,posterior_pdf")?;
        let prior = self.prior_q.pdf();
        for (k, prior_k) in prior.iter().enumerate() {
            writeln!(
                out,
                "{},{},{}",
                fmt_sig17(self.posterior_q.axis[k]),
                fmt_sig17(*prior_k),
                fmt_sig17(self.posterior_q.pdf[k])
            )?;
        }
        Ok(())
    }
}

/// Conditions the pointer prior `phi` on post-selection through `src`.
pub fn ppme_condition<S: AmplitudeSource + ?Sized>(
    src: &S,
    phi: &PointerState,
) -> Result<ConditionalResult> {
    let phi = phi.to_q();
    let grid = *phi.grid();
    let dq = grid.dq();
    let q = grid.q_axis();
    let pairs: Vec<(C64, C64)> = q.par_iter().map(|&x| src.amplitudes(x)).collect();
    let prior_pdf = phi.pdf();

    let p12_phi: f64 = pairs
        .iter()
        .zip(&prior_pdf)
        .map(|((g, _), w)| g.norm_sqr() * w)
        .sum::<f64>()
        * dq;
    if !(p12_phi > MIN_P12_PHI) {
        return Err(Error::VanishingPostSelection { p12: p12_phi });
    }
    let inv_root = 1.0 / p12_phi.sqrt();

    let final_samples: Vec<C64> = pairs
        .iter()
        .zip(phi.samples())
        .map(|((g, _), f)| g * f * inv_root)
        .collect();
    let reassessed_samples: Vec<C64> = pairs
        .iter()
        .zip(phi.samples())
        .map(|((g, _), f)| f * (g.norm() * inv_root))
        .collect();
    // Aw_re times the reassessed amplitude; bounded where G has a simple zero
    let weak_times_reassessed: Vec<C64> = pairs
        .iter()
        .zip(phi.samples())
        .map(|((g, h), f)| {
            let mag = g.norm();
            if mag > 0.0 {
                f * ((g.conj() * h).re / mag * inv_root)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();

    let final_q = PointerState::from_samples(grid, Representation::Q, final_samples)?;
    let final_p = final_q.to_p();
    let reassessed = PointerState::from_samples(grid, Representation::Q, reassessed_samples)?;

    let posterior_pdf: Vec<f64> = pairs
        .iter()
        .zip(&prior_pdf)
        .map(|((g, _), w)| g.norm_sqr() * w / p12_phi)
        .collect();
    let posterior_q = PdfSummary::from_pdf(q.clone(), posterior_pdf, dq);

    // p acting on the reassessed state, with d|G|/dq = -Im(G* H)/|G| taken
    // analytically: |G| has kinks where G nearly vanishes, but the three
    // variance integrands then sum pointwise to the smooth |(G phi)'|^2.
    let p_phi = phi.apply_momentum();
    let p_reassessed: Vec<C64> = pairs
        .iter()
        .zip(phi.samples())
        .zip(&p_phi)
        .map(|(((g, h), f), pf)| {
            let mag = g.norm();
            let slope = if mag > 0.0 {
                -(g.conj() * h).im / mag
            } else {
                0.0
            };
            (pf * mag - C64::new(0.0, slope) * f) * inv_root
        })
        .collect();
    let inner = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>() * dq;
    let mean_p = inner(reassessed.samples(), &p_reassessed).re;
    let p_sq = inner(&p_reassessed, &p_reassessed).re;
    let mean_weak = pairs
        .iter()
        .zip(&prior_pdf)
        .map(|((g, h), w)| (g.conj() * h).re * w)
        .sum::<f64>()
        * dq
        / p12_phi;
    let weak_sq = inner(&weak_times_reassessed, &weak_times_reassessed).re;
    let cross_raw = inner(&p_reassessed, &weak_times_reassessed).re;

    let direct = PdfSummary::from_pdf(grid.p_axis(), final_p.pdf(), grid.dp());
    let decomposition = MomentDecomposition {
        mean_p_reassessed: mean_p,
        mean_weak,
        var_p_reassessed: p_sq - mean_p * mean_p,
        cross: 2.0 * cross_raw - 2.0 * mean_p * mean_weak,
        var_weak: weak_sq - mean_weak * mean_weak,
        direct_mean: direct.mean,
        direct_variance: direct.variance,
    };

    Ok(ConditionalResult {
        p12_phi,
        prior_pointer: pointer::pdf_summary(&phi.to_p()),
        prior_q: phi,
        reassessed,
        pointer: pointer::pdf_summary(&final_p),
        final_q,
        final_p,
        posterior_q,
        decomposition,
    })
}

/// Final p-pdf as a superposition of prior wavefunctions shifted by each
/// eigenvalue, `|sum_a w_a phi(p - a)|^2 / P12_phi`.
pub fn ppme_spectral_pdf(src: &FiniteSource, phi: &PointerState) -> Result<Vec<f64>> {
    let phi = phi.to_q();
    let grid = *phi.grid();
    check_shift_resolved(&grid, src.max_abs_eigenvalue())?;
    let eigenvalues: Vec<f64> = src.weights().iter().map(|(a, _)| *a).collect();
    let shifted = shifted_priors(&phi, &eigenvalues);
    let mut amp = vec![C64::new(0.0, 0.0); grid.n()];
    for ((_, w), s) in src.weights().iter().zip(&shifted) {
        for (slot, x) in amp.iter_mut().zip(s) {
            *slot += w * x;
        }
    }
    let norm = amp.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.dp();
    if !(norm > MIN_P12_PHI) {
        return Err(Error::VanishingPostSelection { p12: norm });
    }
    Ok(amp.iter().map(|a| a.norm_sqr() / norm).collect())
}

/// Diagnostics for the pooled sum rules over a complete post-selection.
#[derive(Clone, Debug, Serialize)]
pub struct SumRuleReport {
    /// `<psi1|A|psi1>`.
    pub expectation: f64,
    /// Prior pointer mean, zero for real `phi`.
    pub prior_mean: f64,
    /// Probability of each outcome with the measurement in place.
    pub outcome_probabilities: Vec<f64>,
    /// `sum_b P_b <p>_b - <A> - <p>_phi`.
    pub pointer_residual: f64,
    /// `sum_b P_b <Aw_re>_b - <A>`.
    pub weak_residual: f64,
    /// `sum_b |<b|psi1>|^2 Re A_w,b - <A>` without a measurement.
    pub strong_residual: f64,
    /// `min_{b,p} [P(p) - P_b P(p|b)]`.
    pub covering_min: f64,
    /// `max_p |P(p) - sum_b P_b P(p|b)|`.
    pub pooling_residual: f64,
}

pub fn check_sum_rules(
    psi1: &StateVector,
    obs: &Observable,
    phi: &PointerState,
    basis: &PostSelectionBasis,
) -> Result<SumRuleReport> {
    let phi = phi.to_q();
    let grid = *phi.grid();
    let expectation = obs.expectation(psi1)?;
    let pme = pme_distribution(psi1, obs, &phi)?;
    let prior_mean = plain_mean_unnormalized(&grid, &phi.to_p().pdf());
    let prior_pdf = phi.pdf();
    let dq = grid.dq();

    let outcomes: Vec<(f64, f64, Vec<f64>)> = basis
        .vectors()
        .par_iter()
        .map(|b| -> Result<(f64, f64, Vec<f64>)> {
            let src = FiniteSource::new(b, obs, psi1)?;
            let mut prob = 0.0;
            let mut weak = 0.0;
            let mut final_q = Vec::with_capacity(grid.n());
            for (k, w) in prior_pdf.iter().enumerate() {
                let (g, h) = src.amplitudes(grid.q(k));
                prob += g.norm_sqr() * w;
                weak += (g.conj() * h).re * w;
                final_q.push(g * phi.samples()[k]);
            }
            // P_b P(p|b), left unnormalized so rare outcomes carry no division
            let joint = pointer::q_to_p(&grid, &final_q)
                .iter()
                .map(|s| s.norm_sqr())
                .collect();
            Ok((prob * dq, weak * dq, joint))
        })
        .collect::<Result<_>>()?;

    let mut pooled = vec![0.0; grid.n()];
    let mut covering_min = f64::INFINITY;
    let mut pointer_sum = 0.0;
    let mut weak_sum = 0.0;
    for (_, weak, joint) in &outcomes {
        for ((slot, j), total) in pooled.iter_mut().zip(joint).zip(&pme.pdf) {
            *slot += j;
            covering_min = covering_min.min(total - j);
        }
        pointer_sum += plain_mean_unnormalized(&grid, joint);
        weak_sum += weak;
    }
    let pooling_residual = pooled
        .iter()
        .zip(&pme.pdf)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    Ok(SumRuleReport {
        expectation,
        prior_mean,
        outcome_probabilities: outcomes.iter().map(|(p, _, _)| *p).collect(),
        pointer_residual: pointer_sum - expectation - prior_mean,
        weak_residual: weak_sum - expectation,
        strong_residual: crate::hilbert::sum_rule_residual(psi1, obs, basis)?,
        covering_min,
        pooling_residual,
    })
}

fn plain_mean_unnormalized(grid: &Grid, pdf: &[f64]) -> f64 {
    pdf.iter()
        .enumerate()
        .map(|(m, w)| grid.p(m) * w)
        .sum::<f64>()
        * grid.dp()
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    /// Operator expectation of the final pointer momentum.
    pub mean: f64,
    pub p12_phi: f64,
    pub mean_error: f64,
    pub p12_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakLimitSweep {
    pub center: f64,
    pub target_weak_value: f64,
    pub target_p12: f64,
    pub rows: Vec<SweepRow>,
    /// `log2` ratios of successive mean errors (meaningful for halving eps).
    pub mean_orders: Vec<f64>,
    pub p12_orders: Vec<f64>,
}

/// Grid exponent used by [`weak_limit_sweep`].
pub const SWEEP_GRID_LOG2: u32 = 14;

/// Window priors of width `eps` at `center`. Each width gets its own grid of
/// span `2 eps` placed symmetrically about the center, so the window covers
/// half of the samples and the p-grid resolves the sinc tails equally well
/// at every width.
pub fn weak_limit_sweep<S: AmplitudeSource + ?Sized>(
    src: &S,
    center: f64,
    eps_list: &[f64],
) -> Result<WeakLimitSweep> {
    let target = src.weak_orbit(center).ok_or(Error::Pole { overlap: 0.0 })?;
    let target_p12 = src.amplitude(center).norm_sqr();
    let n = 1usize << SWEEP_GRID_LOG2;
    let rows = eps_list
        .iter()
        .map(|&eps| {
            let dq = 2.0 * eps / n as f64;
            let q_min = center - eps + 0.5 * dq;
            let grid = Grid::new(q_min, q_min + 2.0 * eps, n)?;
            let phi = pointer::make_window(&grid, center, eps)?;
            let result = ppme_condition(src, &phi)?;
            let mean = result.decomposition.mean_total();
            Ok(SweepRow {
                eps,
                mean,
                p12_phi: result.p12_phi,
                mean_error: (mean - target.re).abs(),
                p12_error: (result.p12_phi - target_p12).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_orders = observed_orders(&rows.iter().map(|r| r.mean_error).collect::<Vec<_>>());
    let p12_orders = observed_orders(&rows.iter().map(|r| r.p12_error).collect::<Vec<_>>());
    Ok(WeakLimitSweep {
        center,
        target_weak_value: target.re,
        target_p12,
        rows,
        mean_orders,
        p12_orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::weak_value;
    use crate::pointer::{make_gaussian, make_window};
    use crate::random;

    fn fig1_states() -> (StateVector, StateVector) {
        let theta = 11.0 * PI / 24.0;
        let psi1 = StateVector::from_real(&[(theta / 2.0).cos(), (theta / 2.0).sin()]).unwrap();
        let psi2 = StateVector::from_real(&[(theta / 2.0).cos(), -(theta / 2.0).sin()]).unwrap();
        (psi1, psi2)
    }

    fn half_sigma_z() -> Observable {
        Observable::diagonal(&[0.5, -0.5]).unwrap()
    }

    #[test]
    fn eigenstate_orbit_is_trivial() {
        let up = StateVector::basis(2, 0);
        let src = FiniteSource::new(&up, &Observable::pauli_z(), &up).unwrap();
        let grid = Grid::symmetric(4.0, 256).unwrap();
        let orbit = build_orbit(&src, &grid).unwrap();
        for k in 0..grid.n() {
            assert!((orbit.p12[k] - 1.0).abs() < 1e-14);
            assert!((orbit.aw_re[k] - 1.0).abs() < 1e-14);
            assert!(orbit.aw_im[k].abs() < 1e-14);
            assert!((orbit.s12[k] - orbit.q[k]).abs() < 1e-12);
            assert!(orbit.gamma12[k].abs() < 1e-12);
        }
        assert!(!orbit.under_resolved);
    }

    #[test]
    fn orthogonal_orbit_is_rejected() {
        let src = FiniteSource::new(
            &StateVector::basis(2, 1),
            &Observable::pauli_z(),
            &StateVector::basis(2, 0),
        )
        .unwrap();
        assert!(matches!(
            build_orbit(&src, &Grid::symmetric(1.0, 64).unwrap()),
            Err(Error::OrthogonalOrbit)
        ));
    }

    #[test]
    fn orbit_invariants_on_random_scenarios() {
        let mut rng = random::rng(11);
        for _ in 0..10 {
            let dim = random::dim(&mut rng, 5);
            let sc = random::scenario(&mut rng, dim);
            let psi2 = random::state(&mut rng, dim);
            let src = FiniteSource::new(&psi2, &sc.observable, &sc.psi1).unwrap();
            let grid = Grid::symmetric(3.0, 4096).unwrap();
            let orbit = build_orbit(&src, &grid).unwrap();
            let dq = grid.dq();
            for k in 1..grid.n() - 1 {
                assert!((orbit.p12[k] - src.amplitude(orbit.q[k]).norm_sqr()).abs() < 1e-12);
                assert!(orbit.p12[k] <= 1.0 + 1e-10);
                if orbit.p12[k] > 0.05 {
                    let slope = (orbit.s12[k + 1] - orbit.s12[k - 1]) / (2.0 * dq);
                    assert!((slope - orbit.aw_re[k]).abs() < 1e-3 * orbit.aw_re[k].abs().max(1.0));
                    let s = orbit.gamma12[k] + orbit.q[k] * orbit.aw_re[k];
                    assert!((s - orbit.s12[k]).abs() < 1e-8);
                }
            }
            // delta(q) is odd-symmetric in construction: delta(0) = 0
            let k0 = grid.nearest_q_index(0.0).unwrap();
            assert!(orbit.delta[k0].abs() < 1e-12);
        }
    }

    #[test]
    fn ratio_form_matches_phase_derivative() {
        let mut rng = random::rng(5);
        let sc = random::scenario(&mut rng, 3);
        let psi2 = random::state(&mut rng, 3);
        let src = FiniteSource::new(&psi2, &sc.observable, &sc.psi1).unwrap();
        let h = 1e-5;
        for q in [-1.0, 0.0, 0.4, 2.0] {
            let g_plus = src.amplitude(q + h);
            let g_minus = src.amplitude(q - h);
            let dphase = (g_plus / g_minus).arg() / (2.0 * h);
            let w = src.weak_orbit(q).unwrap();
            assert!((dphase - w.re).abs() < 1e-6);
        }
        let w0 = src.weak_orbit(0.0).unwrap();
        let direct = weak_value(&psi2, &sc.observable, &sc.psi1).unwrap();
        assert!((w0 - direct).norm() < 1e-12);
    }

    #[test]
    fn pme_mean_and_eigenstate_shift() {
        let grid = Grid::symmetric(20.0, 2048).unwrap();
        let phi = make_gaussian(&grid, 0.0, 1.5).unwrap();
        let prior = pointer::pdf_summary(&phi.to_p());
        let up = StateVector::basis(2, 0);
        let shifted =
            pme_distribution(&up, &Observable::diagonal(&[0.75, -1.0]).unwrap(), &phi).unwrap();
        assert!((shifted.mean - prior.mean - 0.75).abs() < 1e-10);
        assert!((shifted.variance - prior.variance).abs() < 1e-10);

        let mut rng = random::rng(3);
        let sc = random::scenario(&mut rng, 4);
        let pme = pme_distribution(&sc.psi1, &sc.observable, &phi).unwrap();
        let expect = sc.observable.expectation(&sc.psi1).unwrap();
        assert!((pme.mean - expect).abs() < 1e-8);
        assert!((pme.integral() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pme_rejects_unresolved_shift() {
        let grid = Grid::symmetric(20.0, 64).unwrap();
        let phi = make_gaussian(&grid, 0.0, 2.0).unwrap();
        let obs = Observable::diagonal(&[30.0, 0.0]).unwrap();
        assert!(matches!(
            pme_distribution(&StateVector::basis(2, 0), &obs, &phi),
            Err(Error::Unresolved { .. })
        ));
    }

    #[test]
    fn strong_regime_recovers_abl_weights() {
        let obs = Observable::diagonal(&[-1.0, 0.5, 2.0]).unwrap();
        let psi1 = StateVector::new(vec![
            C64::new(0.6, 0.1),
            C64::new(0.3, -0.4),
            C64::new(0.5, 0.2),
        ])
        .unwrap();
        let psi2 = StateVector::new(vec![
            C64::new(0.2, 0.0),
            C64::new(0.7, 0.3),
            C64::new(-0.4, 0.5),
        ])
        .unwrap();
        let src = FiniteSource::new(&psi2, &obs, &psi1).unwrap();
        let gap = obs.min_gap();
        let sigma_p = 0.01 * gap;
        let sigma_q = 1.0 / (2.0 * sigma_p);
        let grid = Grid::symmetric(12.0 * sigma_q, 1 << 15).unwrap();
        let phi = make_gaussian(&grid, 0.0, sigma_q).unwrap();
        let result = ppme_condition(&src, &phi).unwrap();
        let abl: Vec<f64> = src.weights().iter().map(|(_, w)| w.norm_sqr()).collect();
        let total: f64 = abl.iter().sum();
        let pdf = &result.pointer.pdf;
        let dp = grid.dp();
        for ((a, _), weight) in src.weights().iter().zip(&abl) {
            let m = grid.nearest_p_index(*a).unwrap();
            let reach = (10.0 * sigma_p / dp) as usize;
            let mass: f64 = pdf[m - reach..=m + reach].iter().sum::<f64>() * dp;
            assert!((mass - weight / total).abs() < 1e-3);
        }
    }

    #[test]
    fn weak_regime_window_reads_weak_value() {
        let mut rng = random::rng(21);
        let sc = random::scenario(&mut rng, 3);
        let psi2 = random::state(&mut rng, 3);
        let src = FiniteSource::new(&psi2, &sc.observable, &sc.psi1).unwrap();
        let qi = 0.3;
        let sweep = weak_limit_sweep(&src, qi, &[0.01]).unwrap();
        let range = sc.observable.spectral_range();
        assert!(sweep.rows[0].mean_error < 1e-3 * range);
        assert!((sweep.rows[0].p12_phi - src.amplitude(qi).norm_sqr()).abs() < 1e-4);
    }

    #[test]
    fn narrow_window_samples_likelihood() {
        let mut rng = random::rng(2);
        let sc = random::scenario(&mut rng, 2);
        let psi2 = random::state(&mut rng, 2);
        let src = FiniteSource::new(&psi2, &sc.observable, &sc.psi1).unwrap();
        let n = 1 << 16;
        let dq = 1.0 / n as f64;
        let grid = Grid::new(0.2 - 0.5 + 0.5 * dq, 0.2 + 0.5 + 0.5 * dq, n).unwrap();
        let phi = make_window(&grid, 0.2, 0.001).unwrap();
        let r = ppme_condition(&src, &phi).unwrap();
        assert!((r.p12_phi - src.amplitude(0.2).norm_sqr()).abs() < 1e-6);
    }

    #[test]
    fn eccentric_weak_value_limit() {
        let (psi1, psi2) = fig1_states();
        let src = FiniteSource::new(&psi2, &Observable::pauli_z(), &psi1).unwrap();
        // weak spin vector at j = 1/2 gives the sigma_z weak value 1/cos(theta)
        let oracle = 1.0 / (11.0 * PI / 24.0).cos();
        let sweep = weak_limit_sweep(&src, 0.0, &[0.2, 0.1, 0.05, 0.025]).unwrap();
        assert!((sweep.target_weak_value - oracle).abs() < 1e-12);
        let errors: Vec<f64> = sweep.rows.iter().map(|r| r.mean_error).collect();
        assert!(errors.windows(2).all(|w| w[1] < w[0]));
        assert!(
            sweep.mean_orders.iter().all(|&o| o > 1.8),
            "{:?}",
            sweep.mean_orders
        );
        let overlap = psi2.inner(&psi1).unwrap().norm_sqr();
        assert!((sweep.rows[3].p12_phi - overlap).abs() < 5e-3 * overlap);
    }

    #[test]
    fn eigenstate_sweep_is_exact() {
        let up = StateVector::basis(2, 0);
        let src =
            FiniteSource::new(&up, &Observable::diagonal(&[0.7, -0.2]).unwrap(), &up).unwrap();
        let sweep = weak_limit_sweep(&src, 0.4, &[0.2, 0.1]).unwrap();
        for r in &sweep.rows {
            assert!(r.mean_error < 1e-9);
        }
    }

    #[test]
    fn bayes_identity_and_normalization() {
        let mut rng = random::rng(8);
        let sc = random::scenario(&mut rng, 4);
        let psi2 = random::state(&mut rng, 4);
        let src = FiniteSource::new(&psi2, &sc.observable, &sc.psi1).unwrap();
        let grid = Grid::symmetric(12.0, 2048).unwrap();
        let phi = make_gaussian(&grid, 0.5, 1.0).unwrap();
        let r = ppme_condition(&src, &phi).unwrap();
        for (k, prior_k) in phi.pdf().iter().enumerate() {
            let expect = src.amplitude(grid.q(k)).norm_sqr() / r.p12_phi * prior_k;
            assert!((r.posterior_q.pdf[k] - expect).abs() < 1e-10);
        }
        assert!((r.pointer.integral() - 1.0).abs() < 1e-9);
        assert!((r.final_q.norm_sqr() - 1.0).abs() < 1e-12);
        assert!((r.reassessed.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vanishing_post_selection() {
        let src = FiniteSource::from_weights(vec![(0.0, C64::new(1e-9, 0.0))]);
        let grid = Grid::symmetric(4.0, 256).unwrap();
        let phi = make_gaussian(&grid, 0.0, 0.5).unwrap();
        assert!(matches!(
            ppme_condition(&src, &phi),
            Err(Error::VanishingPostSelection { .. })
        ));
    }

    #[test]
    fn sum_rules_dim2() {
        let grid = Grid::symmetric(16.0, 2048).unwrap();
        let phi = make_gaussian(&grid, 0.0, 1.0).unwrap();
        let mut rng = random::rng(4);
        let psi1 = random::state(&mut rng, 2);
        let report = check_sum_rules(
            &psi1,
            &Observable::pauli_x(),
            &phi,
            &PostSelectionBasis::computational(2),
        )
        .unwrap();
        assert!(report.pointer_residual.abs() < 1e-6);
        assert!(report.weak_residual.abs() < 1e-6);
        assert!(report.covering_min > -1e-10);
        assert!(report.pooling_residual < 1e-6);
        let total: f64 = report.outcome_probabilities.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sum_rules_member_of_basis() {
        let grid = Grid::symmetric(16.0, 1024).unwrap();
        let phi = make_gaussian(&grid, 0.0, 1.0).unwrap();
        let basis = PostSelectionBasis::computational(3);
        let obs = Observable::diagonal(&[1.0, 2.0, -0.5]).unwrap();
        let report = check_sum_rules(&basis.vectors()[1], &obs, &phi, &basis).unwrap();
        assert!(report.pointer_residual.abs() < 1e-12);
        assert!(report.weak_residual.abs() < 1e-12);
    }

    #[test]
    fn fig1_rare_outcome_lies_beyond_spectrum() {
        let (psi1, psi2) = fig1_states();
        let obs = half_sigma_z();
        let grid = Grid::symmetric(8.0, 1024).unwrap();
        let phi = make_gaussian(&grid, 0.0, 0.5 / PI).unwrap();
        let src = FiniteSource::new(&psi2, &Observable::pauli_z(), &psi1).unwrap();
        let r = ppme_condition(&src, &phi).unwrap();
        let beyond: f64 = r
            .pointer
            .axis
            .iter()
            .zip(&r.pointer.pdf)
            .filter(|(p, _)| p.abs() > 1.0)
            .map(|(_, w)| w)
            .sum::<f64>()
            * grid.dp();
        assert!(beyond > 0.5);

        let orth = StateVector::new(vec![
            psi2.amplitudes()[1].conj(),
            -psi2.amplitudes()[0].conj(),
        ])
        .unwrap();
        let basis = PostSelectionBasis::new(vec![psi2, orth]).unwrap();
        let report = check_sum_rules(&psi1, &obs, &phi, &basis).unwrap();
        assert!(report.covering_min > -1e-10);
        assert!(report.pointer_residual.abs() < 1e-6);
    }

    #[test]
    fn real_prior_moment_decomposition() {
        let mut rng = random::rng(13);
        let sc = random::scenario(&mut rng, 3);
        let psi2 = random::state(&mut rng, 3);
        let src = FiniteSource::new(&psi2, &sc.observable, &sc.psi1).unwrap();
        let grid = Grid::symmetric(16.0, 4096).unwrap();
        let phi = make_gaussian(&grid, 0.0, 1.0).unwrap();
        let d = ppme_condition(&src, &phi).unwrap().decomposition;
        assert!(d.mean_residual() < 1e-8);
        assert!(d.variance_residual() < 1e-8);
        assert!(d.mean_p_reassessed.abs() < 1e-8);
        assert!(d.cross.abs() < 1e-8);

        let boosted = phi.boost(0.6);
        let d = ppme_condition(&src, &boosted).unwrap().decomposition;
        assert!(d.mean_residual() < 1e-8);
        assert!(d.variance_residual() < 1e-8);
    }

    #[test]
    fn spectral_path_matches_fourier_path() {
        let mut rng = random::rng(17);
        let sc = random::scenario(&mut rng, 5);
        let psi2 = random::state(&mut rng, 5);
        let src = FiniteSource::new(&psi2, &sc.observable, &sc.psi1).unwrap();
        let grid = Grid::symmetric(16.0, 4096).unwrap();
        let phi = make_gaussian(&grid, 0.3, 0.8).unwrap();
        let spectral = ppme_spectral_pdf(&src, &phi).unwrap();
        let fourier = ppme_condition(&src, &phi).unwrap().pointer.pdf;
        for (a, b) in spectral.iter().zip(&fourier) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn orbit_csv_layout() {
        let up = StateVector::basis(2, 0);
        let src = FiniteSource::new(&up, &Observable::pauli_z(), &up).unwrap();
        let orbit = build_orbit(&src, &Grid::symmetric(1.0, 8).unwrap()).unwrap();
        let mut buf = Vec::new();
        orbit.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "q,P12,S12,Aw_re,Aw_im,valid");
        assert_eq!(lines.len(), 9);
        assert!(lines[1].ends_with(",1"));
    }
}
