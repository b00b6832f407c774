use std::f64::consts::{PI, SQRT_2};
use std::io::Write;
use std::time::Instant;

use qawv::classical::{self, ClassicalScenario};
use qawv::ensemble::{self, AmplitudeSource, FiniteSource};
use qawv::hilbert::{self, CMatrix};
use qawv::numeric::{default_peaks, observed_orders};
use qawv::pointer::make_gaussian;
use qawv::random::{self, ScenarioRng};
use qawv::spin::{self, PriorSpec, SpinScenario};
use qawv::{Grid, Observable, PointerState, Representation, StateVector, C64};

struct Outcome {
    name: &'static str,
    passed: bool,
    within_budget: bool,
}

fn run(name: &'static str, budget_secs: f64, check: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (passed, detail) = check();
    let elapsed = start.elapsed().as_secs_f64();
    let within_budget = elapsed < budget_secs;
    let status = if passed && within_budget {
        "PASS"
    } else {
        "FAIL"
    };
    let mut err = std::io::stderr();
    let _ = writeln!(
        err,
        "{status} {name}: {detail} [{elapsed:.2} s, budget {budget_secs} s]"
    );
    Outcome {
        name,
        passed,
        within_budget,
    }
}

/// Observable with a known eigenbasis, so weights are computed without the
/// library's eigensolver.
struct KnownSpectrum {
    values: Vec<f64>,
    vectors: Vec<Vec<C64>>,
    observable: Observable,
}

impl KnownSpectrum {
    fn random(rng: &mut ScenarioRng, values: &[f64]) -> Self {
        let n = values.len();
        let u = random::unitary(rng, n);
        let vectors: Vec<Vec<C64>> = (0..n)
            .map(|c| (0..n).map(|r| u[(r, c)]).collect())
            .collect();
        let m = CMatrix::from_fn(n, n, |r, c| {
            (0..n)
                .map(|a| vectors[a][r] * vectors[a][c].conj() * values[a])
                .sum::<C64>()
        });
        let m = CMatrix::from_fn(n, n, |r, c| 0.5 * (m[(r, c)] + m[(c, r)].conj()));
        Self {
            values: values.to_vec(),
            vectors,
            observable: Observable::new(m).unwrap(),
        }
    }

    /// `<psi2|Pi_a|psi1>` for each eigenvalue.
    fn weights(&self, psi2: &StateVector, psi1: &StateVector) -> Vec<C64> {
        self.vectors
            .iter()
            .map(|u| {
                let left: C64 = psi2
                    .amplitudes()
                    .iter()
                    .zip(u)
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                let right: C64 = u
                    .iter()
                    .zip(psi1.amplitudes())
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                left * right
            })
            .collect()
    }

    fn weak_value_at(&self, psi2: &StateVector, psi1: &StateVector, q: f64) -> (C64, C64) {
        let w = self.weights(psi2, psi1);
        let g: C64 = w
            .iter()
            .zip(&self.values)
            .map(|(w, a)| w * C64::from_polar(1.0, a * q))
            .sum();
        let h: C64 = w
            .iter()
            .zip(&self.values)
            .map(|(w, a)| w * a * C64::from_polar(1.0, a * q))
            .sum();
        (g, h)
    }
}

fn matrix_expectation(obs: &Observable, psi: &StateVector) -> f64 {
    let m = obs.matrix();
    let a = psi.amplitudes();
    let n = a.len();
    let mut total = C64::new(0.0, 0.0);
    for r in 0..n {
        for c in 0..n {
            total += a[r].conj() * m[(r, c)] * a[c];
        }
    }
    total.re
}

/// `(2 sigma^2 / pi)^{1/4} exp(-sigma^2 p^2)`, the momentum amplitude of a
/// centred real gaussian of position width `sigma`.
fn gaussian_p_amplitude(sigma: f64, p: f64) -> f64 {
    (2.0 * sigma * sigma / PI).powf(0.25) * (-(sigma * p).powi(2)).exp()
}

fn uniform_spectrum(rng: &mut ScenarioRng, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..dim).map(|_| random::uniform(rng, lo, hi)).collect()
}

fn sum_rule() -> (bool, String) {
    let mut rng = random::rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let dim = random::dim(&mut rng, 8);
        let sc = random::scenario(&mut rng, dim);
        let mut pooled = 0.0;
        for b in sc.basis.vectors() {
            let overlap = b.inner(&sc.psi1).unwrap();
            if overlap.norm() < 1e-8 {
                continue;
            }
            let aw = hilbert::weak_value(b, &sc.observable, &sc.psi1).unwrap();
            pooled += overlap.norm_sqr() * aw.re;
        }
        let expectation = matrix_expectation(&sc.observable, &sc.psi1);
        worst = worst.max((pooled - expectation).abs());
        let lib = hilbert::sum_rule_residual(&sc.psi1, &sc.observable, &sc.basis).unwrap();
        worst = worst.max(lib.abs());
    }
    (
        worst < 1e-10,
        format!("max residual {worst:.3e} over 200 scenarios (tol 1e-10)"),
    )
}

fn generalized_sum_rule() -> (bool, String) {
    let mut rng = random::rng(102);
    let grid = Grid::symmetric(45.0, 4096).unwrap();
    let sigmas = [0.2, 1.0, 5.0];
    let priors: Vec<PointerState> = sigmas
        .iter()
        .map(|&s| make_gaussian(&grid, 0.0, s).unwrap())
        .collect();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let dim = random::dim(&mut rng, 4);
        let sc = random::scenario(&mut rng, dim);
        for phi in &priors {
            let r = ensemble::check_sum_rules(&sc.psi1, &sc.observable, phi, &sc.basis).unwrap();
            worst = worst.max(r.pointer_residual.abs());
        }
    }
    (
        worst < 1e-6,
        format!("max pointer residual {worst:.3e} for sigma in {sigmas:?} (tol 1e-6)"),
    )
}

fn weak_limit() -> (bool, String) {
    let mut rng = random::rng(103);
    let eps = [0.2, 0.1, 0.05, 0.025];
    let mut min_order = f64::INFINITY;
    let mut worst_ratio: f64 = 0.0;
    let mut count = 0;
    while count < 8 {
        let dim = random::dim(&mut rng, 4);
        let values = uniform_spectrum(&mut rng, dim, -1.5, 1.5);
        let ks = KnownSpectrum::random(&mut rng, &values);
        let psi1 = random::state(&mut rng, dim);
        let psi2 = random::state(&mut rng, dim);
        let qi = random::uniform(&mut rng, -1.0, 1.0);
        let (g, h) = ks.weak_value_at(&psi2, &psi1, qi);
        if g.norm_sqr() < 0.1 {
            continue;
        }
        count += 1;
        let target = (h / g).re;
        let src = FiniteSource::new(&psi2, &ks.observable, &psi1).unwrap();
        let sweep = ensemble::weak_limit_sweep(&src, qi, &eps).unwrap();
        let errors: Vec<f64> = sweep.rows.iter().map(|r| (r.mean - target).abs()).collect();
        for o in observed_orders(&errors) {
            min_order = min_order.min(o);
        }
        worst_ratio = worst_ratio.max(errors[3] / ks.observable.spectral_range());
    }
    let ok = min_order >= 1.8 && worst_ratio < 1e-3;
    (ok, format!("min observed order {min_order:.3} (>= 1.8), max error/range at eps=0.025 {worst_ratio:.3e} (< 1e-3)"))
}

fn abl_weights() -> (bool, String) {
    let mut rng = random::rng(104);
    let spectra: [&[f64]; 3] = [
        &[-1.0, 0.5, 2.0],
        &[-0.7, 0.0, 0.9, 1.6],
        &[-2.0, -0.8, 0.4, 1.0, 2.5],
    ];
    let mut worst_weight: f64 = 0.0;
    let mut worst_location: f64 = 0.0;
    let mut max_dp: f64 = 0.0;
    let mut peak_counts_ok = true;
    for values in spectra {
        let ks = KnownSpectrum::random(&mut rng, values);
        let psi1 = random::state(&mut rng, values.len());
        let psi2 = random::state(&mut rng, values.len());
        let gap = ks.observable.min_gap();
        let sigma_p = 0.01 * gap;
        let sigma_q = 0.5 / sigma_p;
        let grid = Grid::symmetric(7.5 * sigma_q, 8192).unwrap();
        let phi = make_gaussian(&grid, 0.0, sigma_q).unwrap();
        let src = FiniteSource::new(&psi2, &ks.observable, &psi1).unwrap();
        let result = ensemble::ppme_condition(&src, &phi).unwrap();
        let pdf = &result.pointer.pdf;
        let dp = grid.dp();
        max_dp = max_dp.max(dp);

        let w = ks.weights(&psi2, &psi1);
        let total: f64 = w.iter().map(|x| x.norm_sqr()).sum();
        for (a, wa) in ks.values.iter().zip(&w) {
            let mass: f64 = (0..grid.n())
                .filter(|&m| (grid.p(m) - a).abs() < 0.5 * gap)
                .map(|m| pdf[m])
                .sum::<f64>()
                * dp;
            worst_weight = worst_weight.max((mass - wa.norm_sqr() / total).abs());
        }
        let peaks = default_peaks(pdf);
        let significant: Vec<f64> = ks
            .values
            .iter()
            .zip(&w)
            .filter(|(_, wa)| {
                wa.norm_sqr() / total
                    > 0.1 * w.iter().map(|x| x.norm_sqr()).fold(0.0, f64::max) / total
            })
            .map(|(a, _)| *a)
            .collect();
        peak_counts_ok &= peaks.len() == significant.len();
        for a in significant {
            let nearest = peaks
                .iter()
                .map(|&m| (grid.p(m) - a).abs())
                .fold(f64::INFINITY, f64::min);
            worst_location = worst_location.max(nearest / dp);
        }
    }
    let ok = worst_weight < 1e-3 && worst_location <= 1.0 && peak_counts_ok;
    (
        ok,
        format!(
            "max weight deviation {worst_weight:.3e} (tol 1e-3), max peak offset {worst_location:.3} dp (<= 1), dp <= {max_dp:.3e}"
        ),
    )
}

fn spin_closed_forms() -> (bool, String) {
    let mut worst_orbit: f64 = 0.0;
    let mut worst_points: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    let mut all_valid = true;
    for j in [0.5, 1.0, 20.0] {
        let grid = Grid::symmetric(2.0 * PI, 4096).unwrap();
        let sc = SpinScenario::canonical(
            j,
            PriorSpec::Gaussian {
                center: 0.0,
                sigma: 0.15,
            },
            grid,
        )
        .unwrap();
        let orbit = sc.orbit().unwrap();
        for k in 0..grid.n() {
            all_valid &= orbit.valid[k];
            let expected = j * SQRT_2 / (1.0 + (0.5 * orbit.q[k]).sin().powi(2));
            worst_orbit = worst_orbit.max((orbit.aw_re[k] - expected).abs());
        }
        let src = sc.source().unwrap();
        let at_zero = src.weak_orbit(0.0).unwrap().re;
        let at_pi = src.weak_orbit(PI).unwrap().re;
        worst_points = worst_points
            .max((at_zero - j * SQRT_2).abs())
            .max((at_pi - j / SQRT_2).abs());
        let ln_ratio = src.amplitude(PI).norm_sqr().ln() - src.amplitude(0.0).norm_sqr().ln();
        let expected = 2.0 * j * 2f64.ln();
        worst_ratio = worst_ratio.max(((ln_ratio - expected) / expected).abs());
    }
    let ok = worst_orbit < 1e-9 && worst_points < 1e-9 && worst_ratio < 1e-6 && all_valid;
    (
        ok,
        format!(
            "orbit deviation {worst_orbit:.3e}, J_z(0)/J_z(pi) deviation {worst_points:.3e} (tol 1e-9), ln-ratio relative error {worst_ratio:.3e} (tol 1e-6)"
        ),
    )
}

fn fringe_law() -> (bool, String) {
    let sc = SpinScenario::preset("fig5-f", None).unwrap();
    let r = spin::fringe_check(&sc).unwrap();
    let j = sc.j.j();
    let envelope = j / SQRT_2;
    let envelope_error = (r.envelope_center - envelope).abs() / envelope;
    let ok = r.max_spectrum_deviation <= r.p_spacing
        && envelope_error < 0.05
        && !r.pdf_maxima.is_empty();
    (
        ok,
        format!(
            "{} maxima, max distance from integers {:.3e} (dp {:.3e}), envelope {:.4} vs {envelope:.4} ({:.2}%)",
            r.pdf_maxima.len(),
            r.max_spectrum_deviation,
            r.p_spacing,
            r.envelope_center,
            100.0 * envelope_error
        ),
    )
}

fn bias_fixed_points() -> (bool, String) {
    let base = SpinScenario::preset("fig4-j20", None).unwrap();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for k in 0..20 {
        let qi = -2.4 + 0.25 * k as f64;
        let sigma = 0.04 + 0.15 * ((7 * k) % 20) as f64 / 19.0;
        let sc = base.with_prior(PriorSpec::Gaussian { center: qi, sigma });
        match spin::bias_fixed_point(&sc) {
            Ok(b) => worst = worst.max((b.q_star - b.grid_argmax).abs() / b.grid_spacing),
            Err(_) => failures += 1,
        }
    }
    (
        worst <= 1.0 && failures == 0,
        format!(
            "max |q* - argmax| {worst:.3} grid spacings over 20 priors, {failures} solver failures"
        ),
    )
}

fn squeeze() -> (bool, String) {
    let at_min = SpinScenario::preset("fig4-j20", None).unwrap();
    let sigma = match at_min.prior {
        PriorSpec::Gaussian { sigma, .. } => sigma,
        _ => unreachable!("preset has a gaussian prior"),
    };
    let at_max = at_min.with_prior(PriorSpec::Gaussian { center: PI, sigma });
    let a = at_min.condition().unwrap();
    let b = at_max.condition().unwrap();
    let squeeze = a.pointer.variance / a.prior_pointer.variance;
    let widen = b.pointer.variance / b.prior_pointer.variance;
    (
        squeeze <= 0.95 && widen >= 1.05,
        format!("variance ratio {squeeze:.4} at q=0 (<= 0.95), {widen:.4} at q=pi (>= 1.05)"),
    )
}

fn covering() -> (bool, String) {
    let mut rng = random::rng(109);
    let grid = Grid::symmetric(20.0, 2048).unwrap();
    let mut worst = f64::INFINITY;
    for _ in 0..50 {
        let dim = random::dim(&mut rng, 6);
        let sc = random::scenario(&mut rng, dim);
        let sigma = random::uniform(&mut rng, 0.3, 2.0);
        let phi = make_gaussian(&grid, 0.0, sigma).unwrap();
        let r = ensemble::check_sum_rules(&sc.psi1, &sc.observable, &phi, &sc.basis).unwrap();
        worst = worst.min(r.covering_min);
    }
    (
        worst > -1e-10,
        format!("min covering margin {worst:.3e} over 50 scenarios (> -1e-10)"),
    )
}

fn moment_decomposition() -> (bool, String) {
    let mut rng = random::rng(110);
    let grid = Grid::symmetric(20.0, 2048).unwrap();
    let mut worst_total: f64 = 0.0;
    let mut worst_cross: f64 = 0.0;
    for _ in 0..20 {
        let dim = random::dim(&mut rng, 5);
        let sc = random::scenario(&mut rng, dim);
        let psi2 = random::state(&mut rng, dim);
        let src = FiniteSource::new(&psi2, &sc.observable, &sc.psi1).unwrap();
        let sigma = random::uniform(&mut rng, 0.5, 1.5);
        let real = make_gaussian(&grid, 0.0, sigma).unwrap();
        let chirp = random::uniform(&mut rng, -0.4, 0.4);
        let complex_samples: Vec<C64> = real
            .samples()
            .iter()
            .zip(grid.q_axis())
            .map(|(s, q)| s * C64::from_polar(1.0, chirp * q * q))
            .collect();
        let complex = PointerState::normalized(grid, Representation::Q, complex_samples).unwrap();
        for (phi, is_real) in [(&real, true), (&complex, false)] {
            let d = ensemble::ppme_condition(&src, phi).unwrap().decomposition;
            worst_total = worst_total
                .max(d.mean_residual())
                .max(d.variance_residual());
            if is_real {
                worst_cross = worst_cross
                    .max(d.cross.abs())
                    .max(d.mean_p_reassessed.abs());
            }
        }
    }
    (
        worst_total < 1e-8 && worst_cross < 1e-8,
        format!("max moment residual {worst_total:.3e}, max real-prior cross term {worst_cross:.3e} (tol 1e-8)"),
    )
}

fn classical_correspondence() -> (bool, String) {
    let sc = ClassicalScenario::free_particle();
    let [x1, x2] = sc.endpoints;
    let h = 1e-5 * sc.scale();
    let mut worst_a: f64 = 0.0;
    let mut worst_identity: f64 = 0.0;
    for i in 0..=40 {
        let q = -4.0 + 0.2 * i as f64;
        let s = classical::solve_boundary(&sc, q).unwrap();
        worst_a = worst_a.max((s.a_tilde + 0.5 * q).abs());
        let action = |x1: f64, x2: f64, q: f64| classical::action_at(&sc, x1, x2, q).unwrap();
        let ds_dq = (action(x1, x2, q + h) - action(x1, x2, q - h)) / (2.0 * h);
        let ds_dx1 = (action(x1 + h, x2, q) - action(x1 - h, x2, q)) / (2.0 * h);
        let jump = s.momentum_at_kick(true) - s.momentum_at_kick(false);
        worst_identity = worst_identity
            .max((s.a_tilde - ds_dq).abs())
            .max((s.pi1 + ds_dx1).abs())
            .max((jump - q).abs());
    }
    let report = classical::correspondence_report(&sc).unwrap();
    let finest = report.smears.len() - 1;
    let mean_dev = (report.quantum_means[finest] - report.classical_mean).abs();
    let ok = worst_a < 1e-6 && worst_identity < 1e-6 && mean_dev < 1e-5;
    (
        ok,
        format!(
            "A_tilde + q/2 {worst_a:.3e}, identities {worst_identity:.3e} (tol 1e-6), pointer mean deviation {mean_dev:.3e} at smear {} (tol 1e-5)",
            report.smears[finest]
        ),
    )
}

fn two_path_equality() -> (bool, String) {
    let mut rng = random::rng(112);
    let sigma = 1.0;
    let grid = Grid::symmetric(20.0, 2048).unwrap();
    let phi = make_gaussian(&grid, 0.0, sigma).unwrap();
    let mut worst_paths: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    for _ in 0..50 {
        let dim = random::dim(&mut rng, 6);
        let values = uniform_spectrum(&mut rng, dim, -4.0, 4.0);
        let ks = KnownSpectrum::random(&mut rng, &values);
        let psi1 = random::state(&mut rng, dim);
        let psi2 = random::state(&mut rng, dim);
        let src = FiniteSource::new(&psi2, &ks.observable, &psi1).unwrap();
        let fourier = ensemble::ppme_condition(&src, &phi).unwrap().pointer.pdf;
        let spectral = ensemble::ppme_spectral_pdf(&src, &phi).unwrap();

        let w = ks.weights(&psi2, &psi1);
        let amp: Vec<C64> = (0..grid.n())
            .map(|m| {
                w.iter()
                    .zip(&ks.values)
                    .map(|(wa, a)| wa * gaussian_p_amplitude(sigma, grid.p(m) - a))
                    .sum()
            })
            .collect();
        let norm: f64 = amp.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.dp();
        for m in 0..grid.n() {
            let oracle = amp[m].norm_sqr() / norm;
            worst_paths = worst_paths.max((fourier[m] - spectral[m]).abs());
            worst_oracle = worst_oracle
                .max((fourier[m] - oracle).abs())
                .max((spectral[m] - oracle).abs());
        }
    }
    (
        worst_paths < 1e-8 && worst_oracle < 1e-8,
        format!("max pdf deviation {worst_paths:.3e} between paths, {worst_oracle:.3e} against the analytic oracle (tol 1e-8)"),
    )
}

#[test]
fn acceptance_suite() {
    let suite_start = Instant::now();
    let _ = writeln!(std::io::stderr());
    let outcomes = vec![
        run("sum rule over random scenarios", 5.0, sum_rule),
        run(
            "generalized sum rule with gaussian pointers",
            30.0,
            generalized_sum_rule,
        ),
        run("weak limit of window priors", 10.0, weak_limit),
        run("strong limit recovers ABL weights", 10.0, abl_weights),
        run("spin closed forms", 20.0, spin_closed_forms),
        run("fringe law for a wide window", 20.0, fringe_law),
        run(
            "bias fixed point of gaussian priors",
            20.0,
            bias_fixed_points,
        ),
        run("squeeze and widening of the pointer", 10.0, squeeze),
        run("covering condition", 30.0, covering),
        run("moment decomposition", 10.0, moment_decomposition),
        run("classical correspondence", 10.0, classical_correspondence),
        run("spectral and Fourier paths agree", 30.0, two_path_equality),
    ];
    let total = suite_start.elapsed().as_secs_f64();
    let _ = writeln!(
        std::io::stderr(),
        "acceptance suite finished in {total:.1} s (target 240 s)"
    );
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !(o.passed && o.within_budget))
        .map(|o| o.name)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
    assert!(total < 240.0);
}
