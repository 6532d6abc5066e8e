//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the report.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, LN_2, PI};
use std::time::{Duration, Instant};

use num_complex::Complex64;

use alloyscope::alloy::{factorize_maxnorm, factorize_sumnorm, restricted_potential};
use alloyscope::charfun::{
    concentration_bound, decay_fit, empirical_max_interval_mass, scaled_bernoulli_product, viete, wiener_average,
    DecayModel, FitKind, ProductCharFun, SmoothingKernel,
};
use alloyscope::disorder::{sample_config, CounterRng, Marginal};
use alloyscope::harness::fit_shell_count;
use alloyscope::kernels::{InteractionKernel, KernelSpec};
use alloyscope::lattice::{cube_points, sector_layer, Ball, LatticePoint, Norm};
use alloyscope::spectra::{
    bernstein_check, build_hamiltonian, covariance_of, cutoff_check, eigenvalues, exp_shift, staircase_shift,
    two_point_covariance, two_point_table, wegner_experiment, Bath, BernsteinParams, CutoffParams, TwoPointParams,
    WegnerParams,
};
use alloyscope::stats::{ks_statistic, lin_grid, log_grid, wilson, Z95};

type Criterion = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn kernel(spec: &str, d: usize) -> InteractionKernel {
    spec.parse::<KernelSpec>().unwrap().with_dim(d).unwrap()
}

fn p(c: &[i64]) -> LatticePoint {
    LatticePoint::from(c)
}

fn viete_euler() -> Outcome {
    let t0 = Instant::now();
    let half_pi = viete(FRAC_PI_2, 40);
    let at_pi = viete(PI, 40);
    let dt = t0.elapsed();
    let e1 = (half_pi - 2.0 / PI).abs();
    outcome(
        e1 < 1e-10 && at_pi.abs() < 1e-9 && dt < Duration::from_millis(1),
        format!("|P(pi/2) - 2/pi| = {e1:.2e}, |P(pi)| = {:.2e}, {dt:?}", at_pi.abs()),
    )
}

fn dyadic_uniform() -> Outcome {
    let t0 = Instant::now();
    let p = ProductCharFun::dyadic(&Marginal::bernoulli01(), 40).unwrap();
    let s = p.sample(100_000, 2024);
    let ks = ks_statistic(&s, |x| x.clamp(0.0, 1.0));
    let dt = t0.elapsed();
    outcome(ks < 0.01 && dt < Duration::from_secs(1), format!("KS = {ks:.5}, {dt:?}"))
}

fn functional_equation() -> Outcome {
    let mut rng = CounterRng::new(3, 0);
    let mut worst: f64 = 0.0;
    for b in [2.0, 3.0, 4.0] {
        for _ in 0..100 {
            let t = 20.0 * rng.uniform() - 10.0;
            let lhs = scaled_bernoulli_product(b, b * t, 41);
            let rhs = t.cos() * scaled_bernoulli_product(b, t, 40);
            worst = worst.max((lhs - rhs).abs());
        }
    }
    outcome(worst <= 8.0 * f64::EPSILON, format!("max |phi_41(bt) - cos t phi_40(t)| = {worst:.2e}"))
}

fn decay_exponent() -> Outcome {
    let t0 = Instant::now();
    let m = Marginal::SymmetricBernoulli;
    let grid = log_grid(1e2, 1e5, 40);
    let mut parts = Vec::new();
    let mut pass = true;
    for (a, lo, hi) in [(4.0, 0.40, 0.60), (3.0, 0.53, 0.80)] {
        let k = InteractionKernel::polynomial(a, 2).unwrap();
        let n = fit_shell_count(&k, &m, 1e5);
        let pcf = ProductCharFun::from_kernel(&k, &m, 1, n).unwrap();
        let fit = decay_fit(&pcf, &grid, FitKind::PowerOfT).unwrap();
        let DecayModel::PowerOfT { kappa_hat, .. } = fit.model else {
            unreachable!()
        };
        pass &= (lo..=hi).contains(&kappa_hat);
        parts.push(format!("A={a}: kappa = {kappa_hat:.4} (target {:.4}, N = {n})", 2.0 / a));
    }
    let dt = t0.elapsed();
    pass &= dt < Duration::from_secs(30);
    outcome(pass, format!("{}, {dt:?}", parts.join("; ")))
}

fn smoothing_domination() -> Outcome {
    let mut violations = 0;
    let mut min_margin = f64::INFINITY;
    for eps in [1.0, 0.1, 0.01] {
        let sk = SmoothingKernel::new(1.0 / eps).unwrap();
        for x in lin_grid(-3.0 * eps, 3.0 * eps, 1000) {
            let ind = if x.abs() <= eps { 1.0 } else { 0.0 };
            let rhs = 8.0 * eps * sk.p(x);
            if ind > rhs {
                violations += 1;
            }
            if ind > 0.0 {
                min_margin = min_margin.min(rhs - ind);
            }
        }
    }
    outcome(violations == 0, format!("{violations} violations, min margin on the interval {min_margin:.4}"))
}

fn concentration_dominates() -> Outcome {
    let eps = 0.01;
    let n_samples = 100_000;
    let cases = [
        ("poly:A=4", 2, 10),
        ("stair:A=3,kappa=2", 2, 10),
        ("subexp:a=1,delta=0.5", 2, 10),
        ("exp:a=0.5,p=1", 3, 4),
    ];
    let mut violations = 0;
    let mut parts = Vec::new();
    for (spec, d, n) in cases {
        let pcf = ProductCharFun::from_kernel(&kernel(spec, d), &Marginal::SymmetricBernoulli, 1, n).unwrap();
        let bound = concentration_bound(&pcf, eps, 10.0).unwrap().bound;
        let mut worst_lo: f64 = 0.0;
        for seed in 1..=5 {
            let s = pcf.sample(n_samples, seed);
            let mass = empirical_max_interval_mass(&s, eps);
            let lo = wilson((mass * n_samples as f64).round() as u64, n_samples as u64).lo;
            worst_lo = worst_lo.max(lo);
            if lo > bound {
                violations += 1;
            }
        }
        parts.push(format!("{spec} d={d}: bound {bound:.4} vs mass {worst_lo:.4}"));
    }
    outcome(violations == 0, format!("{violations} violations; {}", parts.join("; ")))
}

fn staircase_shift_identity() -> Outcome {
    let k = InteractionKernel::staircase(3.0, 2.0, 2).unwrap();
    let ball = Ball::cube(LatticePoint::origin(2), 2);
    let window = cube_points(&ball.center, 26);
    let m = Marginal::Uniform { lo: -1.0, hi: 1.0 };
    let mut worst: f64 = 0.0;
    for pair in 0..50u64 {
        let c1 = sample_config(&m, &window, 77, pair).unwrap();
        let d1 = staircase_shift(&k, &ball, 1.0, &c1, 4..=4).unwrap();
        let fresh = sample_config(&m, &window, 78, pair).unwrap();
        let c2 = c1.map_values(|x, v| if d1.sources.contains(x) { fresh.get(x) } else { v });
        let d2 = staircase_shift(&k, &ball, 1.0, &c2, 4..=4).unwrap();
        let s1 = eigenvalues(&build_hamiltonian(&ball, &restricted_potential(&k, &c1, &ball), 1.0).unwrap()).unwrap();
        let s2 = eigenvalues(&build_hamiltonian(&ball, &restricted_potential(&k, &c2, &ball), 1.0).unwrap()).unwrap();
        let deta = d2.eta - d1.eta;
        for (a, b) in s1.eigenvalues.iter().zip(&s2.eigenvalues) {
            worst = worst.max((b - a - deta).abs());
        }
    }
    outcome(worst < 1e-9, format!("max_j |dlambda_j - deta| = {worst:.2e} over 50 pairs"))
}

fn exponential_factorization() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut pairs = 0usize;
    for a in [0.5, LN_2, 1.0] {
        for l in 0..=2u64 {
            let li = l as i64;
            let ball = Ball::cube(p(&[li, li]), l);
            let points = ball.points();
            let sources: Vec<LatticePoint> = cube_points(&LatticePoint::origin(2), 8)
                .into_iter()
                .filter(|x| x.coords().iter().all(|&c| c <= 0))
                .collect();
            let k = InteractionKernel::exponential(a, Norm::L1, 2).unwrap();
            let f = factorize_sumnorm(a, &points, &sources).unwrap();
            worst = worst.max(f.max_relative_error(&k));
            pairs += points.len() * sources.len();

            let center = Ball::cube(LatticePoint::origin(2), l);
            let mut layer = Vec::new();
            for r in (2 * l).max(1)..=8 {
                layer.extend(sector_layer(r, l, &center.center).unwrap());
            }
            let k = InteractionKernel::exponential(a, Norm::Linf, 2).unwrap();
            let f = factorize_maxnorm(a, &center, &layer).unwrap();
            worst = worst.max(f.max_relative_error(&k));
            pairs += center.points().len() * layer.len();
        }
    }
    outcome(worst < 1e-15, format!("max relative error {worst:.2e} over {pairs} pairs"))
}

fn derivative_bounds() -> Outcome {
    let (a, l) = (0.5, 2u64);
    let k = InteractionKernel::exponential(a, Norm::Linf, 2).unwrap();
    let ball = Ball::cube(LatticePoint::origin(2), l);
    let mut sources = Vec::new();
    for r in 4..=10 {
        sources.extend(sector_layer(r, l, &ball.center).unwrap());
    }
    let c = sample_config(&Marginal::Uniform { lo: -1.0, hi: 1.0 }, &cube_points(&ball.center, 12), 9, 0).unwrap();
    let d = exp_shift(&k, &ball, 1.0, &c, &sources).unwrap();
    let lo = (-2.0 * a * l as f64).exp();
    let mut rng = CounterRng::new(10, 0);
    let (mut min_s, mut max_s) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..20 {
        let eta = 8.0 * rng.uniform() - 4.0;
        for s in d.derivative(eta, 1e-6).unwrap() {
            min_s = min_s.min(s);
            max_s = max_s.max(s);
        }
    }
    outcome(
        min_s >= lo - 1e-4 && max_s <= 1.0 + 1e-4,
        format!("dlambda/deta in [{min_s:.5}, {max_s:.5}], required [{:.5}, {:.5}]", lo - 1e-4, 1.0 + 1e-4),
    )
}

fn wegner_linearity() -> Outcome {
    let m = Marginal::Uniform { lo: -1.0, hi: 1.0 };
    let base = |kernel, bath, truncation| WegnerParams {
        kernel,
        marginal: m.clone(),
        radius: 2,
        g: 1.0,
        eps_grid: log_grid(0.016, 0.08, 6),
        energies: vec![],
        trials: 10_000,
        seed: 42,
        bath,
        truncation,
        baths: 8,
        tau: 2.0,
        eigen_index: None,
    };
    let cases = [
        (
            "staircase",
            base(InteractionKernel::staircase(3.0, 2.0, 2).unwrap(), Bath::Cube { radius: 4 }, 30),
        ),
        (
            "exponential",
            base(
                InteractionKernel::exponential(0.5, Norm::Linf, 2).unwrap(),
                Bath::SectorLayers { r_min: 4, r_max: 20 },
                40,
            ),
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, params) in cases {
        let t0 = Instant::now();
        let r = wegner_experiment(&params).unwrap();
        let dt = t0.elapsed();
        let s = &r.slopes[0];
        let (lo, hi) = (s.slope - Z95 * s.slope_se, s.slope + Z95 * s.slope_se);
        pass &= lo >= 0.8 && hi <= 1.2 && dt < Duration::from_secs(300);
        parts.push(format!("{name}: slope {:.3}, 95% CI [{lo:.3}, {hi:.3}], {dt:?}", s.slope));
    }
    outcome(pass, parts.join("; "))
}

fn min_max_cutoff() -> Outcome {
    let r = cutoff_check(&CutoffParams {
        kernel: InteractionKernel::polynomial(4.0, 2).unwrap(),
        marginal: Marginal::SymmetricBernoulli,
        radius: 4,
        g: 1.0,
        inner: 8,
        outer: 40,
        trials: 20,
        seed: 5,
    })
    .unwrap();
    let f = |k| r.meta_f64(k).unwrap();
    let v = f("violations_sup") + f("violations_shift");
    outcome(
        v == 0.0,
        format!(
            "tail bound {:.4}, max exterior sup {:.4}, max shift {:.4} / {:.4}, {v} violations",
            f("tail_bound"),
            f("max_exterior_sup"),
            f("max_shift_vs_empty"),
            f("max_shift_vs_resampled")
        ),
    )
}

fn two_point() -> Outcome {
    let (a_exp, kappa, theta) = (2.0, 0.1, FRAC_PI_4);
    let c = theta.cos();
    let alpha = a_exp * c;
    let beta = -1.0 + 2.0 * (a_exp / 2.0 + 1.0) * c * c;
    let a = 2.0 * (1.0 + beta * kappa * kappa);
    let b = 2.0 * alpha * kappa;
    let target = [[0.5 * (a * a + b * b), 0.5 * (a * a - b * b)], [0.5 * (a * a - b * b), 0.5 * (a * a + b * b)]];
    let cov = covariance_of(&two_point_table(a_exp, kappa, theta));
    let mut table_err: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            table_err = table_err.max((cov[i][j] - target[i][j]).abs() / target[0][0]);
        }
    }
    let r = two_point_covariance(&TwoPointParams {
        a_exp,
        r: 100,
        rho: 10,
        theta,
        trials: 100_000,
        seed: 3,
    })
    .unwrap();
    let ratio = r.meta_f64("det_ratio_mc").unwrap();
    let band = (1.0 - 5.0 * kappa * kappa, 1.0 + 5.0 * kappa * kappa);
    outcome(
        table_err < 1e-14 && ratio >= band.0 && ratio <= band.1,
        format!("table error {table_err:.1e}; MC det ratio {ratio:.5} in [{:.2}, {:.2}]", band.0, band.1),
    )
}

fn bernstein() -> Outcome {
    let r = bernstein_check(&BernsteinParams {
        kernel: InteractionKernel::polynomial(3.0, 1).unwrap(),
        marginal: Marginal::SymmetricBernoulli,
        radius: 3,
        g: 1.0,
        tau: 1.5,
        theta: 1.0,
        index: None,
        beta: 0.25,
        c1: 1.0,
        t_points: 40,
        trials: 10_000,
        seed: 11,
        truncation: None,
    })
    .unwrap();
    let tel = r.meta_f64("telescoping_error").unwrap();
    let ratio = r.meta_f64("max_envelope_ratio").unwrap();
    outcome(
        tel < 1e-9 && ratio <= 1.5,
        format!(
            "telescoping error {tel:.1e}, max |Psi|/envelope {ratio:.4} on |t| <= {:.2} ({} sources)",
            r.meta_f64("t_max").unwrap(),
            r.metadata["sources"]
        ),
    )
}

fn wiener() -> Outcome {
    let t_cap = 1e3;
    let avg = |b: f64, k: u32| wiener_average(|t| Complex64::new(scaled_bernoulli_product(b, t, k), 0.0), t_cap).unwrap();
    let uniform = avg(2.0, 40);
    let single = avg(2.0, 1);
    let singular = avg(4.0, 40);
    outcome(
        uniform < 0.01 && (single - 0.5).abs() < 0.01 && singular > 0.01,
        format!("b=2: {uniform:.5}; single cosine: {single:.5}; b=4: {singular:.5}"),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, Criterion); 14] = [
        ("Viete-Euler product", viete_euler),
        ("dyadic-uniform law", dyadic_uniform),
        ("functional equation", functional_equation),
        ("decay exponent", decay_exponent),
        ("smoothing domination", smoothing_domination),
        ("concentration bound dominates", concentration_dominates),
        ("staircase shift", staircase_shift_identity),
        ("exponential factorization", exponential_factorization),
        ("eigenvalue derivative bounds", derivative_bounds),
        ("Wegner linearity in eps", wegner_linearity),
        ("min-max cut-off", min_max_cutoff),
        ("two-point covariance", two_point),
        ("Bernstein telescoping", bernstein),
        ("Wiener diagnostic", wiener),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        println!("{} {:>2}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
