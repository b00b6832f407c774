//! Apparatus wavefunctions on a uniform grid.
//!
//! The q-grid has `n` points `q_k = q_min + k dq` on `[q_min, q_max)`; the
//! paired p-grid has spacing `2 pi / (n dq)` and spans `[-pi/dq, pi/dq)`.
//! The transform follows the kernel `<p|q> = exp(-i p q) / sqrt(2 pi)`:
//!
//! ```text
//! phi(p) = (2 pi)^{-1/2} sum_k dq exp(-i p q_k) phi(q_k)
//! ```
//!
//! which is exactly invertible on the grid.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::C64;

/// Normalization tolerance for stored wavefunctions.
pub const NORM_TOL: f64 = 1e-9;
/// Largest probability mass a profile may lose to grid truncation.
pub const TRUNCATION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    q_min: f64,
    q_max: f64,
    n: usize,
}

impl Grid {
    pub fn new(q_min: f64, q_max: f64, n: usize) -> Result<Self> {
        if !n.is_power_of_two() || n < 4 {
            return Err(Error::InvalidArgument(format!(
                "grid size must be a power of two >= 4, got {n}"
            )));
        }
        if !(q_max > q_min) || !q_min.is_finite() || !q_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid needs q_max > q_min, got [{q_min}, {q_max})"
            )));
        }
        Ok(Self { q_min, q_max, n })
    }

    /// `[-half_span, half_span)`.
    pub fn symmetric(half_span: f64, n: usize) -> Result<Self> {
        Self::new(-half_span, half_span, n)
    }

    pub fn q_min(&self) -> f64 {
        self.q_min
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn span(&self) -> f64 {
        self.q_max - self.q_min
    }

    pub fn dq(&self) -> f64 {
        self.span() / self.n as f64
    }

    pub fn dp(&self) -> f64 {
        2.0 * PI / self.span()
    }

    /// Half-width of the p-grid, `pi / dq`.
    pub fn p_max(&self) -> f64 {
        PI / self.dq()
    }

    pub fn q(&self, k: usize) -> f64 {
        self.q_min + k as f64 * self.dq()
    }

    pub fn p(&self, m: usize) -> f64 {
        (m as f64 - (self.n / 2) as f64) * self.dp()
    }

    pub fn q_axis(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.q(k)).collect()
    }

    pub fn p_axis(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.p(m)).collect()
    }

    /// Index of the q-sample closest to `q`, if inside the grid.
    pub fn nearest_q_index(&self, q: f64) -> Option<usize> {
        let x = ((q - self.q_min) / self.dq()).round();
        (x >= 0.0 && x < self.n as f64).then_some(x as usize)
    }

    pub fn nearest_p_index(&self, p: f64) -> Option<usize> {
        let x = (p / self.dp()).round() + (self.n / 2) as f64;
        (x >= 0.0 && x < self.n as f64).then_some(x as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Representation {
    Q,
    P,
}

impl Representation {
    pub fn label(self) -> &'static str {
        match self {
            Representation::Q => "q",
            Representation::P => "p",
        }
    }
}

#[derive(Clone, Debug)]
pub struct PointerState {
    grid: Grid,
    rep: Representation,
    samples: Vec<C64>,
}

impl PointerState {
    /// Wraps samples that are already normalized on the grid.
    pub fn from_samples(grid: Grid, rep: Representation, samples: Vec<C64>) -> Result<Self> {
        let state = Self::raw(grid, rep, samples)?;
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "pointer state has squared norm {norm}, expected 1"
            )));
        }
        Ok(state)
    }

    /// Renormalizes the samples on the grid.
    pub fn normalized(grid: Grid, rep: Representation, samples: Vec<C64>) -> Result<Self> {
        let mut state = Self::raw(grid, rep, samples)?;
        let norm = state.norm_sqr();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "cannot normalize pointer state of squared norm {norm}"
            )));
        }
        let scale = 1.0 / norm.sqrt();
        state.samples.iter_mut().for_each(|s| *s *= scale);
        Ok(state)
    }

    fn raw(grid: Grid, rep: Representation, samples: Vec<C64>) -> Result<Self> {
        if samples.len() != grid.n() {
            return Err(Error::DimensionMismatch {
                expected: grid.n(),
                found: samples.len(),
            });
        }
        Ok(Self { grid, rep, samples })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn representation(&self) -> Representation {
        self.rep
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn spacing(&self) -> f64 {
        match self.rep {
            Representation::Q => self.grid.dq(),
            Representation::P => self.grid.dp(),
        }
    }

    pub fn axis(&self) -> Vec<f64> {
        match self.rep {
            Representation::Q => self.grid.q_axis(),
            Representation::P => self.grid.p_axis(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() * self.spacing()
    }

    pub fn pdf(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.norm_sqr()).collect()
    }

    pub fn to_p(&self) -> PointerState {
        match self.rep {
            Representation::P => self.clone(),
            Representation::Q => PointerState {
                grid: self.grid,
                rep: Representation::P,
                samples: q_to_p(&self.grid, &self.samples),
            },
        }
    }

    pub fn to_q(&self) -> PointerState {
        match self.rep {
            Representation::Q => self.clone(),
            Representation::P => PointerState {
                grid: self.grid,
                rep: Representation::Q,
                samples: p_to_q(&self.grid, &self.samples),
            },
        }
    }

    /// Multiplies the q-wavefunction by `exp(i c q)`, i.e. `phi(p) -> phi(p - c)`.
    pub fn boost(&self, c: f64) -> PointerState {
        let q = self.to_q();
        let samples = q
            .samples
            .iter()
            .enumerate()
            .map(|(k, s)| s * C64::from_polar(1.0, c * self.grid.q(k)))
            .collect();
        PointerState {
            grid: self.grid,
            rep: Representation::Q,
            samples,
        }
    }

    /// `p phi` evaluated with the spectral derivative, returned in the q-representation.
    pub fn apply_momentum(&self) -> Vec<C64> {
        let p = self.to_p();
        let scaled: Vec<C64> = p
            .samples
            .iter()
            .enumerate()
            .map(|(m, s)| s * self.grid.p(m))
            .collect();
        p_to_q(&self.grid, &scaled)
    }

    /// CSV with header `q,re,im` (or `p,re,im`), 17 significant digits, LF endings.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{},re,im", self.rep.label())?;
        for (x, s) in self.axis().iter().zip(&self.samples) {
            writeln!(
                out,
                "{},{},{}",
                fmt_sig17(*x),
                fmt_sig17(s.re),
                fmt_sig17(s.im)
            )?;
        }
        Ok(())
    }

    /// Reads the CSV written by [`PointerState::write_csv`]; the grid is recovered
    /// from the axis column.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty pointer CSV".into()))?
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let rep = match header.trim() {
            "q,re,im" => Representation::Q,
            "p,re,im" => Representation::P,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unexpected pointer CSV header {other:?}"
                )))
            }
        };
        let mut axis = Vec::new();
        let mut samples = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::InvalidArgument(format!(
                    "row {}: expected 3 columns",
                    row + 1
                )));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("row {}: {e}", row + 1)))
            };
            axis.push(parse(fields[0])?);
            samples.push(C64::new(parse(fields[1])?, parse(fields[2])?));
        }
        let n = axis.len();
        if n < 4 {
            return Err(Error::InvalidArgument(
                "pointer CSV needs at least 4 rows".into(),
            ));
        }
        let grid = match rep {
            Representation::Q => {
                let dq = (axis[n - 1] - axis[0]) / (n - 1) as f64;
                Grid::new(axis[0], axis[0] + dq * n as f64, n)?
            }
            Representation::P => {
                let dp = (axis[n - 1] - axis[0]) / (n - 1) as f64;
                let span = 2.0 * PI / dp;
                Grid::symmetric(span / 2.0, n)?
            }
        };
        Self::from_samples(grid, rep, samples)
    }
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any f64.
pub fn fmt_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn fft_in_place(buf: &mut [C64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(buf.len())
    } else {
        planner.plan_fft_forward(buf.len())
    };
    fft.process(buf);
}

fn alternating(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

pub(crate) fn q_to_p(grid: &Grid, samples: &[C64]) -> Vec<C64> {
    let mut buf: Vec<C64> = samples
        .iter()
        .enumerate()
        .map(|(k, s)| s * alternating(k))
        .collect();
    fft_in_place(&mut buf, false);
    let scale = grid.dq() / (2.0 * PI).sqrt();
    buf.iter()
        .enumerate()
        .map(|(m, s)| s * C64::from_polar(scale, -grid.p(m) * grid.q_min()))
        .collect()
}

fn p_to_q(grid: &Grid, samples: &[C64]) -> Vec<C64> {
    let mut buf: Vec<C64> = samples
        .iter()
        .enumerate()
        .map(|(m, s)| s * C64::from_polar(1.0, grid.p(m) * grid.q_min()))
        .collect();
    fft_in_place(&mut buf, true);
    let scale = grid.dp() / (2.0 * PI).sqrt();
    buf.iter()
        .enumerate()
        .map(|(k, s)| s * (scale * alternating(k)))
        .collect()
}

/// Gaussian whose q-pdf has mean `center` and standard deviation `sigma`.
pub fn make_gaussian(grid: &Grid, center: f64, sigma: f64) -> Result<PointerState> {
    if !(sigma > 3.0 * grid.dq()) {
        return Err(Error::Unresolved {
            what: "gaussian width",
            detail: format!("sigma = {sigma} must exceed 3 dq = {}", 3.0 * grid.dq()),
        });
    }
    let mass = gaussian_tail_bound(center - grid.q_min(), sigma)
        + gaussian_tail_bound(grid.q_max() - center, sigma);
    if mass > TRUNCATION_TOL {
        return Err(Error::Truncation { mass });
    }
    let samples = (0..grid.n())
        .map(|k| {
            let x = (grid.q(k) - center) / sigma;
            C64::new((-0.25 * x * x).exp(), 0.0)
        })
        .collect();
    PointerState::normalized(*grid, Representation::Q, samples)
}

/// Upper bound on the normal tail mass beyond `d` (Mills ratio).
fn gaussian_tail_bound(d: f64, sigma: f64) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let z = d / sigma;
    (-0.5 * z * z).exp() / (z * (2.0 * PI).sqrt())
}

/// Flat window `1/sqrt(eps)` on `[center - eps/2, center + eps/2)`.
pub fn make_window(grid: &Grid, center: f64, eps: f64) -> Result<PointerState> {
    let dq = grid.dq();
    if !(eps >= 4.0 * dq * (1.0 - 1e-12)) {
        return Err(Error::Unresolved {
            what: "window width",
            detail: format!("eps = {eps} must span at least 4 cells of {dq}"),
        });
    }
    let lo = center - 0.5 * eps;
    let hi = center + 0.5 * eps;
    let slack = 1e-9 * dq;
    if lo < grid.q_min() - slack || hi > grid.q_max() + slack {
        let outside = ((grid.q_min() - lo).max(0.0) + (hi - grid.q_max()).max(0.0)) / eps;
        return Err(Error::Truncation { mass: outside });
    }
    // half-open membership decided in index space
    let first = (((lo - grid.q_min()) / dq) - 1e-9).ceil().max(0.0) as usize;
    let end = ((((hi - grid.q_min()) / dq) - 1e-9).ceil().max(0.0) as usize).min(grid.n());
    let height = C64::new(1.0 / eps.sqrt(), 0.0);
    let samples = (0..grid.n())
        .map(|k| {
            if k >= first && k < end {
                height
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    PointerState::normalized(*grid, Representation::Q, samples)
}

/// Amplitude `(1 + ((q - center)/gamma)^2)^{-1/2}`, so the q-pdf is a Lorentzian
/// of half-width `gamma`, truncated to the grid and renormalized.
pub fn make_lorentzian(grid: &Grid, center: f64, gamma: f64) -> Result<PointerState> {
    if !(gamma > 2.0 * grid.dq()) {
        return Err(Error::Unresolved {
            what: "lorentzian half-width",
            detail: format!("gamma = {gamma} must exceed 2 dq = {}", 2.0 * grid.dq()),
        });
    }
    let samples = (0..grid.n())
        .map(|k| {
            let x = (grid.q(k) - center) / gamma;
            C64::new((1.0 + x * x).powf(-0.5), 0.0)
        })
        .collect();
    PointerState::normalized(*grid, Representation::Q, samples)
}

/// Mean, variance and sampled density of a distribution on the grid.
#[derive(Clone, Debug, Serialize)]
pub struct PdfSummary {
    pub mean: f64,
    pub variance: f64,
    #[serde(skip)]
    pub axis: Vec<f64>,
    #[serde(skip)]
    pub pdf: Vec<f64>,
    #[serde(skip)]
    pub spacing: f64,
}

impl PdfSummary {
    /// Plain quadrature moments of `pdf` on `axis`.
    pub fn from_pdf(axis: Vec<f64>, pdf: Vec<f64>, spacing: f64) -> Self {
        let (mean, variance) = plain_moments(&axis, &pdf, spacing);
        Self {
            mean,
            variance,
            axis,
            pdf,
            spacing,
        }
    }

    /// Moments on a periodic axis, taken over the period centred on the mean.
    pub fn from_periodic_pdf(axis: Vec<f64>, pdf: Vec<f64>, spacing: f64) -> Self {
        let period = spacing * axis.len() as f64;
        let (mean, variance) = centered_moments(&axis, &pdf, spacing, period);
        Self {
            mean,
            variance,
            axis,
            pdf,
            spacing,
        }
    }

    pub fn integral(&self) -> f64 {
        self.pdf.iter().sum::<f64>() * self.spacing
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

fn plain_moments(axis: &[f64], pdf: &[f64], h: f64) -> (f64, f64) {
    let mass: f64 = pdf.iter().sum::<f64>() * h;
    let mean = axis.iter().zip(pdf).map(|(x, w)| x * w).sum::<f64>() * h / mass;
    let var = axis
        .iter()
        .zip(pdf)
        .map(|(x, w)| (x - mean).powi(2) * w)
        .sum::<f64>()
        * h
        / mass;
    (mean, var)
}

/// The discrete p-spectrum is periodic with period `2 pi / dq`; heavy-tailed
/// densities (window priors) are averaged over the period centred on their
/// own mean so that wrapped tail mass does not bias the result.
fn centered_moments(axis: &[f64], pdf: &[f64], h: f64, period: f64) -> (f64, f64) {
    let mass: f64 = pdf.iter().sum::<f64>() * h;
    let (mut center, _) = plain_moments(axis, pdf, h);
    let wrap = |x: f64, c: f64| {
        let lo = c - 0.5 * period;
        lo + (x - lo).rem_euclid(period)
    };
    for _ in 0..100 {
        let next = axis
            .iter()
            .zip(pdf)
            .map(|(x, w)| wrap(*x, center) * w)
            .sum::<f64>()
            * h
            / mass;
        let done = (next - center).abs() <= 1e-15 * period;
        center = next;
        if done {
            break;
        }
    }
    let var = axis
        .iter()
        .zip(pdf)
        .map(|(x, w)| (wrap(*x, center) - center).powi(2) * w)
        .sum::<f64>()
        * h
        / mass;
    (center, var)
}

/// Moments of `|samples|^2`; p-representation densities use the periodic rule.
pub fn pdf_summary(state: &PointerState) -> PdfSummary {
    match state.representation() {
        Representation::Q => PdfSummary::from_pdf(state.axis(), state.pdf(), state.spacing()),
        Representation::P => {
            PdfSummary::from_periodic_pdf(state.axis(), state.pdf(), state.spacing())
        }
    }
}
