//! Checks against independent oracles: closed forms, brute-force enumeration and
//! direct Monte Carlo that bypasses the code under test.

use nalgebra::DMatrix;

use alloyscope::charfun::{
    concentration_bound, invert_to_density, thin_tail_probe, wiener_average, ProductCharFun,
};
use alloyscope::disorder::{sample_config, CounterRng, Marginal};
use alloyscope::kernels::InteractionKernel;
use alloyscope::lattice::{cube_points, Ball, LatticePoint, Norm};
use alloyscope::spectra::{
    exp_shift, ils_experiment, symmetric_spectrum, wegner_experiment, Bath, IlsMode, IlsParams, WegnerParams,
};
use alloyscope::stats::Z95;
use num_complex::Complex64;

#[test]
fn charfun_matches_direct_monte_carlo() {
    let (d, a, n) = (2usize, 4.0, 12u64);
    let k = InteractionKernel::polynomial(a, d).unwrap();
    let m = Marginal::SymmetricBernoulli;
    let pcf = ProductCharFun::from_kernel(&k, &m, 1, n).unwrap();
    // Sites with 1 <= |x|_2 < N + 1, enumerated directly.
    let amps: Vec<f64> = cube_points(&LatticePoint::origin(d), n + 1)
        .into_iter()
        .filter_map(|x| {
            let r2: i64 = x.coords().iter().map(|c| c * c).sum();
            (r2 >= 1 && r2 < ((n + 1) * (n + 1)) as i64).then(|| (r2 as f64).powf(-a / 2.0))
        })
        .collect();
    assert_eq!(amps.len() as u64, pcf.point_count());
    let t = 10.0;
    let samples = 200_000u64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for trial in 0..samples {
        let mut rng = CounterRng::new(99, trial);
        let s: f64 = amps.iter().map(|w| if rng.next_u64() >> 63 == 0 { -w } else { *w }).sum();
        let c = (t * s).cos();
        s1 += c;
        s2 += c * c;
    }
    let mean = s1 / samples as f64;
    let se = ((s2 / samples as f64 - mean * mean) / samples as f64).sqrt();
    let exact = pcf.eval(t).re;
    assert!((mean - exact).abs() <= 3.0 * se, "MC {mean} +/- {se} vs {exact}");
}

/// Density of the sum of n independent Uniform[-1, 1] variables.
fn uniform_sum_density(n: i32, x: f64) -> f64 {
    let fact: f64 = (1..n).map(f64::from).product();
    let mut acc = 0.0;
    let mut binom = 1.0;
    for k in 0..=n {
        let z = x + f64::from(n - 2 * k);
        if z > 0.0 {
            acc += if k % 2 == 0 { 1.0 } else { -1.0 } * binom * z.powi(n - 1);
        }
        binom = binom * f64::from(n - k) / f64::from(k + 1);
    }
    acc / (2f64.powi(n) * fact)
}

#[test]
fn density_of_uniform_sum() {
    let m = Marginal::Uniform { lo: -1.0, hi: 1.0 };
    let pcf = ProductCharFun::from_factors(&m, &[(1.0, 4)]).unwrap();
    let xs: Vec<f64> = (0..=16).map(|i| -3.6 + 0.45 * i as f64).collect();
    let est = invert_to_density(&pcf, &xs).unwrap();
    for (x, r) in est.x.iter().zip(&est.rho) {
        let exact = uniform_sum_density(4, *x);
        assert!((r - exact).abs() < 1e-6, "x = {x}: {r} vs {exact}");
    }
}

#[test]
fn wiener_average_closed_forms() {
    let t_cap = 37.3;
    let single = wiener_average(|t| Complex64::new(t.cos(), 0.0), t_cap).unwrap();
    assert!((single - (0.5 + (2.0 * t_cap).sin() / (4.0 * t_cap))).abs() < 1e-10);
    // cos^2(t) cos^2(t/3) expanded into frequencies 0, 2, 2/3, 8/3, 4/3.
    let avg = |w: f64| (w * t_cap).sin() / (w * t_cap);
    let exact = 0.25 * (1.0 + avg(2.0) + avg(2.0 / 3.0) + 0.5 * avg(8.0 / 3.0) + 0.5 * avg(4.0 / 3.0));
    let two = wiener_average(|t| Complex64::new(t.cos() * (t / 3.0).cos(), 0.0), t_cap).unwrap();
    assert!((two - exact).abs() < 1e-10, "{two} vs {exact}");
}

#[test]
fn thin_tail_of_uniform_law() {
    let pcf = ProductCharFun::dyadic(&Marginal::bernoulli01(), 40).unwrap();
    let lambda = [1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1];
    let n = 200_000;
    let probe = thin_tail_probe(&pcf, &lambda, n, 8);
    assert!(probe.v_star.abs() < 1e-12);
    // Seven simultaneous checks: z = 3.3 keeps the family-wise level near 0.7%.
    for (l, m) in lambda.iter().zip(&probe.mass) {
        let sd = (l * (1.0 - l) / n as f64).sqrt();
        assert!((m - l).abs() <= 3.3 * sd, "F({l}) = {m}");
    }
    for o in &probe.local_order[2..] {
        assert!((o - 1.0).abs() < 0.15, "{:?}", probe.local_order);
    }
}

/// Number of eigenvalues below x from the signs of the LDL^T pivots of A - xI.
fn count_below(a: &DMatrix<f64>, x: f64) -> usize {
    let n = a.nrows();
    let mut m = a - DMatrix::<f64>::identity(n, n) * x;
    let mut neg = 0;
    for k in 0..n {
        let piv = m[(k, k)];
        if piv < 0.0 {
            neg += 1;
        }
        for i in k + 1..n {
            let f = m[(i, k)] / piv;
            for j in k + 1..n {
                m[(i, j)] -= f * m[(k, j)];
            }
        }
    }
    neg
}

#[test]
fn eigenvalues_match_inertia_bisection() {
    let n = 8;
    let mut rng = CounterRng::new(17, 0);
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = 2.0 * rng.uniform() - 1.0;
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let spec = symmetric_spectrum(&a).unwrap();
    let bound = a.iter().map(|v| v.abs()).sum::<f64>();
    for (j, lam) in spec.eigenvalues.iter().enumerate() {
        let (mut lo, mut hi) = (-bound, bound);
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if count_below(&a, mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((lam - 0.5 * (lo + hi)).abs() < 1e-8, "eigenvalue {j}: {lam} vs {}", 0.5 * (lo + hi));
    }
}

#[test]
fn sumnorm_shift_derivative_bounds() {
    let a = 0.5;
    let k = InteractionKernel::exponential(a, Norm::L1, 2).unwrap();
    let ball = Ball::cube(LatticePoint::from(&[2, 2][..]), 2);
    let sources: Vec<LatticePoint> = cube_points(&LatticePoint::origin(2), 6)
        .into_iter()
        .filter(|x| x.coords().iter().all(|&c| c <= 0))
        .collect();
    let c = sample_config(&Marginal::uniform01(), &sources, 4, 0).unwrap();
    let d = exp_shift(&k, &ball, 1.0, &c, &sources).unwrap();
    let lo = d.min_profile();
    assert!((lo - (-4.0 * 2.0 * a).exp()).abs() < 1e-15);
    let mut rng = CounterRng::new(5, 0);
    for _ in 0..20 {
        let eta = 6.0 * rng.uniform() - 3.0;
        for s in d.derivative(eta, 1e-6).unwrap() {
            assert!(s >= lo - 1e-4 && s <= 1.0 + 1e-4, "{s}");
        }
    }
}

fn low_energy(l: u64, q: f64) -> alloyscope::stats::Proportion {
    let r = ils_experiment(&IlsParams {
        mode: if q >= 4.0 { IlsMode::LowEnergy } else { IlsMode::SmoothTails },
        kernel: InteractionKernel::polynomial(2.0, 1).unwrap(),
        marginal: Marginal::bernoulli01(),
        radius: l,
        trials: 20_000,
        seed: 1,
        h: 1.0,
        q,
        outer: None,
        m: 1.0,
        g: None,
        tau: 2.0,
        energies: vec![],
    })
    .unwrap();
    r.estimates[0].prob
}

#[test]
fn ils_low_energy_is_empty_box_probability() {
    // At L = 4 one source anywhere in the box lifts the potential above h L^-4,
    // so the event is that all 9 sites are empty.
    assert!(low_energy(4, 4.0).contains(2f64.powi(-9)));
}

#[test]
fn ils_probabilities_fall_with_scale() {
    for q in [4.0, 1.0] {
        let ps: Vec<_> = [4u64, 8, 16].iter().map(|&l| low_energy(l, q)).collect();
        for w in ps.windows(2) {
            assert!(w[1].estimate <= w[0].estimate, "q = {q}: {ps:?}");
        }
        assert!(ps[2].hi < ps[0].lo, "q = {q}: {ps:?}");
    }
}

#[test]
fn single_site_wegner_below_concentration_bound() {
    let k = InteractionKernel::polynomial(3.0, 2).unwrap();
    let m = Marginal::Uniform { lo: -1.0, hi: 1.0 };
    let radius = 3;
    let origin = LatticePoint::origin(2);
    let amps: Vec<(f64, u64)> = cube_points(&origin, radius).iter().map(|x| (k.amplitude(x), 1)).collect();
    let pcf = ProductCharFun::from_factors(&m, &amps).unwrap();
    let eps_grid = vec![0.02, 0.05, 0.1];
    let r = wegner_experiment(&WegnerParams {
        kernel: k,
        marginal: m,
        radius: 0,
        g: 1.0,
        eps_grid: eps_grid.clone(),
        energies: vec![0.0, 0.5],
        trials: 20_000,
        seed: 6,
        bath: Bath::Cube { radius },
        truncation: radius,
        baths: 1,
        tau: 2.0,
        eigen_index: None,
    })
    .unwrap();
    for e in r.estimates_labeled("pooled") {
        let bound = concentration_bound(&pcf, e.x, 10.0).unwrap().bound;
        assert!(e.prob.lo <= bound, "eps = {}: {:?} vs {bound}", e.x, e.prob);
        // The estimate is a genuine frequency, not the bound itself.
        assert!(e.prob.hi - e.prob.lo < 4.0 * Z95 * (0.25 / 20_000f64).sqrt());
    }
}

#[test]
fn strong_disorder_probabilities_fall_with_scale() {
    let sup = |mode, kernel, l| {
        let r = ils_experiment(&IlsParams {
            mode,
            kernel,
            marginal: Marginal::Uniform { lo: -1.0, hi: 1.0 },
            radius: l,
            trials: 2_000,
            seed: 2,
            h: 1.0,
            q: 1.0,
            outer: None,
            m: 0.5,
            g: None,
            tau: 2.0,
            energies: vec![],
        })
        .unwrap();
        let p = r.estimates_labeled("sup").next().unwrap().prob;
        p
    };
    let exp = InteractionKernel::exponential(1.0, Norm::L1, 1).unwrap();
    let poly = InteractionKernel::polynomial(2.0, 1).unwrap();
    let (a, b) = (sup(IlsMode::StrongDisorderExp, exp, 4), sup(IlsMode::StrongDisorderExp, exp, 8));
    assert!(b.hi < a.lo, "{a:?} {b:?}");
    let (a, b) = (sup(IlsMode::StrongDisorderPoly, poly, 4), sup(IlsMode::StrongDisorderPoly, poly, 8));
    assert!(b.hi < a.lo, "{a:?} {b:?}");
}
