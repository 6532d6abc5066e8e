use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloy::AlloyTransform;
use crate::disorder::{point_uniform, Marginal};
use crate::error::{invalid, Error, Result};
use crate::kernels::{InteractionKernel, KernelKind};
use crate::lattice::{cube_points, norm_key, Ball, LatticePoint, Norm};
use crate::stats::lin_grid;

use super::hamiltonian::{laplacian, symmetric_spectrum, with_potential};
use super::{sub_seed, ExperimentKind, ExperimentResult, Series};

const FROZEN_TAG: u64 = 0xB0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernsteinParams {
    pub kernel: InteractionKernel,
    pub marginal: Marginal,
    pub radius: u64,
    pub g: f64,
    pub tau: f64,
    pub theta: f64,
    /// Eigenvalue index (default: middle of the spectrum).
    pub index: Option<usize>,
    pub beta: f64,
    /// Admissible window |t| <= c1 / (a n^{5/12}).
    pub c1: f64,
    pub t_points: usize,
    pub trials: u64,
    pub seed: u64,
    /// Frozen sources outside the annulus up to this max-norm radius
    /// (default: outer annulus radius + L).
    pub truncation: Option<u64>,
}

/// Sequential source activation over the annulus L^tau <= |x - u| <= L^{(1+theta) tau}.
/// The increments X_k of lambda_i telescope to lambda_i - lambda_hat_i; the flat part
/// of X_k is Y_k = omega_k fu(x_k - u).
pub fn bernstein_check(p: &BernsteinParams) -> Result<ExperimentResult> {
    p.marginal.validate()?;
    let a_exp = match p.kernel.kind {
        KernelKind::Polynomial { a_exp } => a_exp,
        _ => return Err(invalid("the Bernstein check uses a polynomial kernel")),
    };
    if !(p.tau > 1.0) || !(p.theta > 0.0) || !(p.beta > 0.0 && p.beta < 1.0) {
        return Err(invalid("need tau > 1, theta > 0 and beta in (0, 1)"));
    }
    if p.g == 0.0 || !p.g.is_finite() {
        return Err(invalid("the coupling g must be nonzero"));
    }
    if p.trials < 2 || p.t_points == 0 {
        return Err(invalid("need at least two trials and one t point"));
    }
    let l = p.radius as f64;
    let r_in = l.powf(p.tau);
    let r_out = l.powf((1.0 + p.theta) * p.tau);
    let ball = Ball::cube(LatticePoint::origin(p.kernel.dim), p.radius);
    let u = ball.center.clone();
    let outer = r_out.floor() as u64;
    let truncation = p.truncation.unwrap_or(outer + p.radius);

    // Annulus ordered by distance, then lexicographically.
    let mut annulus: Vec<(u64, LatticePoint)> = cube_points(&u, outer)
        .into_iter()
        .map(|x| (norm_key(&x.sub(&u), Norm::L2), x))
        .filter(|(k, _)| (*k as f64) >= r_in * r_in - 1e-9 && (*k as f64) <= r_out * r_out + 1e-9)
        .collect();
    annulus.sort();
    let sources: Vec<LatticePoint> = annulus.into_iter().map(|(_, x)| x).collect();
    let n = sources.len();
    if n == 0 {
        return Err(invalid("the annulus contains no lattice sites"));
    }
    let nf = n as f64;
    let amps: Vec<f64> = sources.iter().map(|x| p.kernel.amplitude(&x.sub(&u))).collect();
    let a_max = amps.iter().copied().fold(0.0, f64::max);
    let gamma = (1.0 + (1.0 - 1.0 / p.tau) / a_exp) / (2.0 * p.beta);
    let a_cap = nf.powf(-2.0 * p.beta);
    if !(gamma > 1.0) {
        return Err(Error::HypothesisViolation {
            gamma,
            detail: format!("A = {a_exp}, tau = {}, beta = {}", p.tau, p.beta),
        });
    }
    let coupled_max = p.g.abs() * a_max;
    if coupled_max > a_cap {
        return Err(Error::HypothesisViolation {
            gamma,
            detail: format!("max amplitude {coupled_max:.4e} exceeds n^(-2 beta) = {a_cap:.4e}"),
        });
    }

    let points = ball.points();
    let columns: Vec<Vec<f64>> = sources
        .iter()
        .map(|x| points.iter().map(|y| p.kernel.amplitude(&x.sub(y))).collect())
        .collect();
    let src_set: std::collections::BTreeSet<&LatticePoint> = sources.iter().collect();
    let frozen_sources: Vec<LatticePoint> = cube_points(&u, truncation)
        .into_iter()
        .filter(|x| !src_set.contains(x))
        .collect();
    let frozen_map = AlloyTransform::new(&p.kernel, points.clone(), frozen_sources);
    let frozen_seed = sub_seed(p.seed, FROZEN_TAG);
    let frozen_w: Vec<f64> = frozen_map
        .sources
        .iter()
        .map(|x| p.marginal.quantile(point_uniform(frozen_seed, 0, x)))
        .collect();
    let frozen = frozen_map.apply(&frozen_w);
    let base = with_potential(&laplacian(&points), p.g, &frozen);
    let idx = p.index.unwrap_or(points.len() / 2).min(points.len() - 1);
    let hat = symmetric_spectrum(&base)?.eigenvalues[idx];

    struct Trial {
        s: f64,
        telescoping: f64,
        flat_error: f64,
        ripple_sup: f64,
    }
    let rows: Vec<Trial> = (0..p.trials)
        .into_par_iter()
        .map(|t| {
            let w: Vec<f64> = sources
                .iter()
                .map(|x| p.marginal.quantile(point_uniform(p.seed, t, x)))
                .collect();
            let mut m = base.clone();
            let mut prev = hat;
            let mut sum = 0.0;
            let mut flat_error: f64 = 0.0;
            let mut ripple_sup: f64 = 0.0;
            for (k, col) in columns.iter().enumerate() {
                let flat = p.g * amps[k] * w[k];
                if t == 0 {
                    // A pure diagonal shift moves every eigenvalue by exactly `flat`.
                    let mut shifted = m.clone();
                    for i in 0..points.len() {
                        shifted[(i, i)] += flat;
                    }
                    let moved = symmetric_spectrum(&shifted)?.eigenvalues[idx] - prev;
                    flat_error = flat_error.max((moved - flat).abs());
                }
                for (i, c) in col.iter().enumerate() {
                    m[(i, i)] += p.g * c * w[k];
                }
                let next = symmetric_spectrum(&m)?.eigenvalues[idx];
                let x = next - prev;
                ripple_sup = ripple_sup.max((x - flat).abs());
                sum += x;
                prev = next;
            }
            let mut full = frozen.clone();
            for (col, wk) in columns.iter().zip(&w) {
                for (v, c) in full.iter_mut().zip(col) {
                    *v += c * wk;
                }
            }
            let direct = symmetric_spectrum(&with_potential(&laplacian(&points), p.g, &full))?.eigenvalues[idx];
            Ok(Trial {
                s: sum,
                telescoping: (hat + sum - direct).abs(),
                flat_error,
                ripple_sup,
            })
        })
        .collect::<Result<_>>()?;

    let var = p.marginal.variance() + p.marginal.mean().powi(2);
    let sigma_sq: f64 = amps.iter().map(|a| (p.g * a).powi(2) * var).sum();
    let t_max = p.c1 / (coupled_max * nf.powf(5.0 / 12.0));
    let ts = lin_grid(t_max / p.t_points as f64, t_max, p.t_points);
    let mut psi = Vec::with_capacity(ts.len());
    let mut env = Vec::with_capacity(ts.len());
    for &t in &ts {
        let z: Complex64 = rows.iter().map(|r| Complex64::from_polar(1.0, t * r.s)).sum();
        psi.push(z.norm() / rows.len() as f64);
        env.push((-0.5 * t * t * sigma_sq).exp());
    }
    let ratio = psi.iter().zip(&env).map(|(a, b)| a / b).fold(0.0, f64::max);
    let ripple = rows.iter().map(|r| r.ripple_sup).fold(0.0, f64::max);
    let gamma_emp = if ripple > 0.0 { (coupled_max / ripple).ln() / nf.ln() } else { f64::INFINITY };

    let mut res = ExperimentResult::new(ExperimentKind::Bernstein, p, p.seed, p.trials);
    res.series.push(Series {
        label: "abs_psi".into(),
        x: ts.clone(),
        y: psi,
    });
    res.series.push(Series {
        label: "envelope".into(),
        x: ts,
        y: env,
    });
    res.meta("sources", n);
    res.meta("amplitude_max", coupled_max);
    res.meta("amplitude_cap", a_cap);
    res.meta("gamma", gamma);
    res.meta("gamma_empirical", gamma_emp);
    res.meta("ripple_sup", ripple);
    res.meta("sigma_sq_sum", sigma_sq);
    res.meta("t_max", t_max);
    res.meta("max_envelope_ratio", ratio);
    res.meta("lambda_hat", hat);
    res.meta("eigen_index", idx);
    res.meta("telescoping_error", rows.iter().map(|r| r.telescoping).fold(0.0, f64::max));
    res.meta("flat_shift_error", rows.iter().map(|r| r.flat_error).fold(0.0, f64::max));
    Ok(res)
}
