//! Characteristic functions of alloy sums S = sum_x fu(x) omega_x over lattice
//! shells, their decay, smoothing-kernel concentration bounds and density inversion.
//!
//! A product is stored as a list of factors (amplitude a, multiplicity K): one factor
//! per distinct exact norm key, so phi(t) = prod phi_X(a t)^K. Modulus and phase are
//! accumulated separately in log space.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{CounterRng, Marginal};
use crate::error::{invalid, Error, Result};
use crate::kernels::InteractionKernel;
use crate::lattice::{box_points, norm_key, shell_index, Norm};
use crate::quad::{integrate_panels, ABS_TOL};
use crate::stats::{linear_fit, LinearFit};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub amp: f64,
    pub mult: u64,
    /// Exact norm key of the shell points carrying this amplitude (0 for custom lists).
    pub key: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductCharFun {
    pub marginal: Marginal,
    pub kernel: Option<InteractionKernel>,
    /// Shell range [M, N] for kernel-built products.
    pub shells: Option<(u64, u64)>,
    /// Sorted by decreasing amplitude.
    pub factors: Vec<Factor>,
}

/// s0 = (3/5)^{1/3} m2 / m3, below which the quadratic small-argument bound on
/// ln|phi_X(s)| applies.
pub fn small_argument_threshold(m: &Marginal) -> f64 {
    let (m2, m3) = m.moments();
    0.6f64.cbrt() * m2 / m3
}

impl ProductCharFun {
    /// Product over shells n in [m, n] of the kernel's lattice sum.
    pub fn from_kernel(k: &InteractionKernel, marginal: &Marginal, m: u64, n: u64) -> Result<Self> {
        marginal.validate()?;
        if n < m {
            return Err(invalid(format!("shell range [{m}, {n}] is empty")));
        }
        let p = k.norm();
        let (key_lo, key_hi) = match p {
            Norm::L2 => (m * m, (n + 1) * (n + 1)),
            Norm::L1 | Norm::Linf => (m, n + 1),
        };
        // Enumerate the nonnegative orthant and weight by the sign orbit size.
        let d = k.dim;
        let top = (n + 1) as i64;
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        for x in box_points(&vec![0; d], &vec![top; d]) {
            let key = norm_key(&x, p);
            if key < key_lo || key >= key_hi {
                continue;
            }
            let orbit = 1u64 << x.coords().iter().filter(|&&c| c != 0).count();
            *counts.entry(key).or_insert(0) += orbit;
        }
        let factors = counts
            .into_iter()
            .map(|(key, mult)| Factor {
                amp: k.eval_key(key),
                mult,
                key,
            })
            .collect();
        Ok(ProductCharFun {
            marginal: marginal.clone(),
            kernel: Some(*k),
            shells: Some((m, n)),
            factors,
        })
    }

    /// Shell range [m, N] with N the smallest value such that the neglected shells
    /// change ln|phi| by at most `tol` for |t| <= t_max, capped at `n_cap`.
    pub fn auto(
        k: &InteractionKernel,
        marginal: &Marginal,
        m: u64,
        t_max: f64,
        tol: f64,
        n_cap: u64,
    ) -> Result<Self> {
        let n = auto_shell_count(k, marginal, t_max, tol, n_cap).max(m);
        Self::from_kernel(k, marginal, m, n)
    }

    pub fn from_factors(marginal: &Marginal, amps: &[(f64, u64)]) -> Result<Self> {
        marginal.validate()?;
        if amps.iter().any(|(a, _)| !a.is_finite()) {
            return Err(invalid("factor amplitudes must be finite"));
        }
        let mut factors: Vec<Factor> = amps
            .iter()
            .filter(|(_, m)| *m > 0)
            .map(|&(amp, mult)| Factor { amp, mult, key: 0 })
            .collect();
        factors.sort_by(|a, b| b.amp.abs().total_cmp(&a.amp.abs()));
        Ok(ProductCharFun {
            marginal: marginal.clone(),
            kernel: None,
            shells: None,
            factors,
        })
    }

    /// sum_{k=1}^{depth} omega_k 2^{-k}
    pub fn dyadic(marginal: &Marginal, depth: u32) -> Result<Self> {
        let amps: Vec<(f64, u64)> = (1..=depth).map(|k| (0.5f64.powi(k as i32), 1)).collect();
        Self::from_factors(marginal, &amps)
    }

    pub fn point_count(&self) -> u64 {
        self.factors.iter().map(|f| f.mult).sum()
    }

    pub fn min_amp(&self) -> f64 {
        self.factors.iter().map(|f| f.amp.abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_amp(&self) -> f64 {
        self.factors.iter().map(|f| f.amp.abs()).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        let mu = self.marginal.mean();
        self.factors.iter().map(|f| f.amp * f.mult as f64 * mu).sum()
    }

    pub fn variance(&self) -> f64 {
        let v = self.marginal.variance();
        self.factors.iter().map(|f| f.amp * f.amp * f.mult as f64 * v).sum()
    }

    /// [inf S, sup S] over the support.
    pub fn range(&self) -> (f64, f64) {
        let (lo, hi) = self.marginal.support();
        self.factors.iter().fold((0.0, 0.0), |(a, b), f| {
            let m = f.mult as f64;
            let (p, q) = (f.amp * lo * m, f.amp * hi * m);
            (a + p.min(q), b + p.max(q))
        })
    }

    /// sum K ln|phi_X(a t)|, -inf at exact zeros.
    pub fn log_modulus(&self, t: f64) -> f64 {
        log_modulus_of(&self.marginal, self.factors.iter(), t)
    }

    /// Log modulus restricted to factors in the small-argument regime a|t| <= s0.
    pub fn tail_log_modulus(&self, t: f64) -> f64 {
        let s0 = small_argument_threshold(&self.marginal);
        log_modulus_of(
            &self.marginal,
            self.factors.iter().filter(|f| (f.amp * t).abs() <= s0),
            t,
        )
    }

    pub fn modulus(&self, t: f64) -> f64 {
        self.log_modulus(t).exp()
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        let lm = self.log_modulus(t);
        if lm == f64::NEG_INFINITY {
            return Complex64::new(0.0, 0.0);
        }
        if self.marginal.is_symmetric() {
            // Real product; track the sign by parity.
            let negative = self
                .factors
                .iter()
                .filter(|f| f.mult % 2 == 1 && self.marginal.charfun(f.amp * t).re < 0.0)
                .count();
            let sign = if negative % 2 == 1 { -1.0 } else { 1.0 };
            return Complex64::new(sign * lm.exp(), 0.0);
        }
        let phase: f64 = self
            .factors
            .iter()
            .map(|f| {
                let z = self.marginal.charfun(f.amp * t);
                (f.mult as f64 * z.arg()).rem_euclid(2.0 * PI)
            })
            .sum();
        Complex64::from_polar(lm.exp(), phase)
    }

    /// Factors split by shell: those with shell index <= p, and the rest.
    pub fn split_at_shell(&self, p: u64) -> Result<(ProductCharFun, ProductCharFun)> {
        let k = self
            .kernel
            .ok_or_else(|| invalid("split_at_shell needs a kernel-built product"))?;
        let norm = k.norm();
        let (lo, hi): (Vec<Factor>, Vec<Factor>) = self
            .factors
            .iter()
            .partition(|f| shell_index(f.key, norm) <= p);
        let (m, n) = self.shells.unwrap();
        let mk = |factors: Vec<Factor>, shells| ProductCharFun {
            marginal: self.marginal.clone(),
            kernel: self.kernel,
            shells: Some(shells),
            factors,
        };
        Ok((mk(lo, (m, p.min(n))), mk(hi, (p + 1, n))))
    }

    /// Monte Carlo samples of S, one counter stream per sample index.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let fair_two_point = match &self.marginal {
            Marginal::SymmetricBernoulli => Some((-1.0, 1.0)),
            Marginal::AsymBernoulli { p, v0, v1 } if *p == 0.5 => Some((*v0, *v1)),
            _ => None,
        };
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = CounterRng::new(seed, i as u64);
                self.factors
                    .iter()
                    .map(|f| {
                        let total = match fair_two_point {
                            Some((v0, v1)) => {
                                let ones = count_fair_bits(&mut rng, f.mult) as f64;
                                v0 * f.mult as f64 + (v1 - v0) * ones
                            }
                            None => (0..f.mult).map(|_| rng.sample(&self.marginal)).sum(),
                        };
                        f.amp * total
                    })
                    .sum()
            })
            .collect()
    }
}

fn count_fair_bits(rng: &mut CounterRng, m: u64) -> u64 {
    let mut left = m;
    let mut ones = 0u64;
    while left >= 64 {
        ones += rng.next_u64().count_ones() as u64;
        left -= 64;
    }
    if left > 0 {
        ones += (rng.next_u64() & ((1u64 << left) - 1)).count_ones() as u64;
    }
    ones
}

fn log_modulus_of<'a>(m: &Marginal, factors: impl Iterator<Item = &'a Factor>, t: f64) -> f64 {
    let mut acc = 0.0;
    for f in factors {
        let z = m.charfun(f.amp * t).norm();
        if z == 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += f.mult as f64 * z.ln();
    }
    acc
}

/// Smallest N with t_max^2 m2 / 2 * (tail of fu^2 beyond N) <= tol, capped at n_cap.
pub fn auto_shell_count(k: &InteractionKernel, marginal: &Marginal, t_max: f64, tol: f64, n_cap: u64) -> u64 {
    let sq = k.squared();
    let (m2, _) = marginal.moments();
    let scale = 0.5 * t_max * t_max * m2;
    let ok = |n: u64| scale * sq.tail_sum_bound(n) <= tol;
    if !ok(n_cap) {
        return n_cap;
    }
    let (mut lo, mut hi) = (1u64, n_cap);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// prod_{k=1}^{K} cos(t / b^k)
pub fn scaled_bernoulli_product(b: f64, t: f64, k: u32) -> f64 {
    let mut scale = 1.0;
    let mut acc = 1.0;
    for _ in 0..k {
        scale /= b;
        acc *= (t * scale).cos();
    }
    acc
}

/// Viete-Euler partial product prod_{k=1}^{K} cos(x / 2^k).
pub fn viete(x: f64, terms: u32) -> f64 {
    scaled_bernoulli_product(2.0, x, terms)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    /// ln(-ln|phi|) against ln t
    PowerOfT,
    /// ln(-ln|phi|) against ln ln t
    PowerOfLogT,
    /// -ln of the local envelope of |phi| against ln t
    Algebraic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DecayModel {
    PowerOfT { kappa_hat: f64, c_hat: f64 },
    PowerOfLogT { gamma_hat: f64, c_hat: f64 },
    Algebraic { alpha_hat: f64, c_hat: f64 },
}

impl DecayModel {
    pub fn exponent(&self) -> f64 {
        match *self {
            DecayModel::PowerOfT { kappa_hat, .. } => kappa_hat,
            DecayModel::PowerOfLogT { gamma_hat, .. } => gamma_hat,
            DecayModel::Algebraic { alpha_hat, .. } => alpha_hat,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    #[serde(flatten)]
    pub model: DecayModel,
    pub t_min: f64,
    pub t_max: f64,
    pub residual: f64,
    pub slope_se: f64,
    pub points_used: usize,
    /// Sample table (t, |phi|, decay measure used in the fit).
    #[serde(skip)]
    pub samples: Vec<(f64, f64, f64)>,
}

/// Default model for a product: power of t for power-law kernels, power of ln t for
/// (sub)exponential kernels, algebraic otherwise.
pub fn default_fit_kind(p: &ProductCharFun) -> FitKind {
    match p.kernel.map(|k| k.kind) {
        Some(crate::kernels::KernelKind::Polynomial { .. })
        | Some(crate::kernels::KernelKind::Staircase { .. }) => FitKind::PowerOfT,
        Some(_) => FitKind::PowerOfLogT,
        None => FitKind::Algebraic,
    }
}

/// Least-squares decay exponent. The power models use the small-argument shells only
/// (factors with a|t| <= s0), so the erratic contribution of the inner shells is excluded.
pub fn decay_fit(p: &ProductCharFun, t_grid: &[f64], kind: FitKind) -> Result<DecayFit> {
    if t_grid.len() < 3 {
        return Err(invalid("decay fit needs at least 3 grid points"));
    }
    let t_min = t_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    if !(t_min > 1.0) {
        return Err(invalid("decay fit grid must lie in t > 1"));
    }
    if kind != FitKind::Algebraic {
        let s0 = small_argument_threshold(&p.marginal);
        if p.min_amp() * t_max > s0 {
            return Err(Error::Precondition(format!(
                "a_N t_max = {:.3e} exceeds the small-argument threshold {s0:.4}; increase N",
                p.min_amp() * t_max
            )));
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut samples = Vec::with_capacity(t_grid.len());
    let mut bad = 0usize;
    for &t in t_grid {
        let (measure, shown) = match kind {
            FitKind::Algebraic => {
                let env = envelope(p, t);
                (-env.ln(), env)
            }
            _ => (-p.tail_log_modulus(t), p.modulus(t)),
        };
        samples.push((t, shown, measure));
        if !(measure > 0.0) || !measure.is_finite() {
            bad += 1;
            continue;
        }
        match kind {
            FitKind::PowerOfT => {
                xs.push(t.ln());
                ys.push(measure.ln());
            }
            FitKind::PowerOfLogT => {
                xs.push(t.ln().ln());
                ys.push(measure.ln());
            }
            FitKind::Algebraic => {
                xs.push(t.ln());
                ys.push(measure);
            }
        }
    }
    if bad * 10 > t_grid.len() {
        return Err(Error::InsufficientDecay {
            bad,
            total: t_grid.len(),
        });
    }
    let fit: LinearFit = linear_fit(&xs, &ys).ok_or_else(|| invalid("degenerate fit grid"))?;
    let model = match kind {
        FitKind::PowerOfT => DecayModel::PowerOfT {
            kappa_hat: fit.slope,
            c_hat: fit.intercept.exp(),
        },
        FitKind::PowerOfLogT => DecayModel::PowerOfLogT {
            gamma_hat: fit.slope,
            c_hat: fit.intercept.exp(),
        },
        FitKind::Algebraic => DecayModel::Algebraic {
            alpha_hat: fit.slope,
            c_hat: fit.intercept,
        },
    };
    Ok(DecayFit {
        model,
        t_min,
        t_max,
        residual: fit.residual,
        slope_se: fit.slope_se,
        points_used: xs.len(),
        samples,
    })
}

/// max |phi| over [t, 1.125 t], sampled at 64 points.
fn envelope(p: &ProductCharFun, t: f64) -> f64 {
    (0..64)
        .map(|i| p.modulus(t * (1.0 + 0.125 * i as f64 / 63.0)))
        .fold(0.0, f64::max)
}

/// (1 / 2T) int_{-T}^{T} |phi(t)|^2 dt, the Wiener average estimating sum of squared atoms.
pub fn wiener_average<F: Fn(f64) -> Complex64>(phi: F, t_cap: f64) -> Result<f64> {
    if !(t_cap > 0.0) {
        return Err(invalid("Wiener average needs T > 0"));
    }
    let panels = ((t_cap / PI).ceil() as usize * 2).clamp(8, 1 << 16);
    let q = integrate_panels(|t| phi(t).norm_sqr(), -t_cap, t_cap, panels, ABS_TOL * 2.0 * t_cap);
    Ok(q.value / (2.0 * t_cap))
}

/// Fejer-type smoothing pair: g_T(t) = (1 - |t|/T)_+ is the characteristic function of
/// the density p_T(x) = (1 - cos T x) / (pi T x^2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingKernel {
    pub t_cap: f64,
}

impl SmoothingKernel {
    pub fn new(t_cap: f64) -> Result<Self> {
        if !(t_cap > 0.0) {
            return Err(invalid("smoothing kernel needs T > 0"));
        }
        Ok(SmoothingKernel { t_cap })
    }

    pub fn g(&self, t: f64) -> f64 {
        (1.0 - t.abs() / self.t_cap).max(0.0)
    }

    pub fn p(&self, x: f64) -> f64 {
        let u = self.t_cap * x;
        if u.abs() < 1e-4 {
            // (1 - cos u) / u^2 = 1/2 - u^2/24 + ...
            return self.t_cap / PI * (0.5 - u * u / 24.0);
        }
        // 1 - cos u = 2 sin^2(u/2) avoids cancellation.
        2.0 * (0.5 * u).sin().powi(2) / (PI * self.t_cap * x * x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationBound {
    pub eps: f64,
    pub split_t: f64,
    pub j_minus: f64,
    pub j_plus: f64,
    pub bound: f64,
}

/// Upper bound on sup_a P(S in [a - eps, a + eps]):
/// (8 eps / 2 pi) int_{|t| <= 1/eps} |phi(t)| dt = J_- + J_+, split at |t| = split_t.
pub fn concentration_bound(p: &ProductCharFun, eps: f64, split_t: f64) -> Result<ConcentrationBound> {
    if !(eps > 0.0) {
        return Err(invalid("concentration bound needs eps > 0"));
    }
    let top = 1.0 / eps;
    let split = split_t.clamp(0.0, top);
    let pref = 8.0 * eps / PI; // both half-lines, |phi| is even
    let f = |t: f64| p.modulus(t);
    let panels = |len: f64| ((len * p.max_amp().max(1e-12)).ceil() as usize + 8).min(1 << 16);
    let j_minus = pref * integrate_panels(f, 0.0, split, panels(split), ABS_TOL).value;
    let j_plus = pref * integrate_panels(f, split, top, panels(top - split), ABS_TOL).value;
    Ok(ConcentrationBound {
        eps,
        split_t: split,
        j_minus,
        j_plus,
        bound: j_minus + j_plus,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    /// Integration cutoff where |phi| fell below 1e-12.
    pub t_cutoff: f64,
    /// max(0, -min rho)
    pub negativity_excess: f64,
    /// Trapezoid integral of rho over the grid.
    pub grid_mass: f64,
}

const INVERSION_FLOOR: f64 = 1e-12;
const INTEGRABILITY_LEVEL: f64 = 1e-8;
const INVERSION_T_MAX: f64 = 1e7;

/// Smallest t (doubling from 1) after which |phi| stays below `level` on a sampled
/// window [t, 2t], or `None` if not found before `t_max`.
fn decay_cutoff(p: &ProductCharFun, level: f64, t_max: f64) -> Option<f64> {
    let ln_level = level.ln();
    let mut t = 1.0;
    while t <= t_max {
        let below = (0..=256).all(|i| p.log_modulus(t * (1.0 + i as f64 / 256.0)) < ln_level);
        if below {
            return Some(t);
        }
        t *= 2.0;
    }
    None
}

/// rho(x) = (1 / 2 pi) int e^{-itx} phi(t) dt by adaptive quadrature, cut off where
/// |phi| < 1e-12.
pub fn invert_to_density(p: &ProductCharFun, x_grid: &[f64]) -> Result<DensityEstimate> {
    if decay_cutoff(p, INTEGRABILITY_LEVEL, INVERSION_T_MAX).is_none() {
        return Err(Error::NotIntegrable {
            level: INTEGRABILITY_LEVEL,
            t_max: INVERSION_T_MAX,
        });
    }
    let t_cut = decay_cutoff(p, INVERSION_FLOOR, INVERSION_T_MAX).ok_or(Error::NotIntegrable {
        level: INVERSION_FLOOR,
        t_max: INVERSION_T_MAX,
    })?;
    let bandwidth = p.max_amp() + 1e-12;
    let rho: Vec<f64> = x_grid
        .par_iter()
        .map(|&x| {
            let panels = ((t_cut * (x.abs() + bandwidth) / 2.0).ceil() as usize + 16).min(1 << 16);
            let q = integrate_panels(|t| (p.eval(t) * Complex64::from_polar(1.0, -t * x)).re, 0.0, t_cut, panels, ABS_TOL);
            q.value / PI
        })
        .collect();
    let negativity_excess = rho.iter().fold(0.0f64, |m, &r| m.max(-r));
    let grid_mass = x_grid
        .windows(2)
        .zip(rho.windows(2))
        .map(|(x, r)| 0.5 * (x[1] - x[0]) * (r[0] + r[1]))
        .sum();
    Ok(DensityEstimate {
        x: x_grid.to_vec(),
        rho,
        t_cutoff: t_cut,
        negativity_excess,
        grid_mass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThinTailProbe {
    /// Essential infimum of S.
    pub v_star: f64,
    pub range: f64,
    pub lambda: Vec<f64>,
    /// Empirical F(v_* + lambda).
    pub mass: Vec<f64>,
    /// Local order d ln F / d ln lambda (central differences, NaN where F = 0).
    pub local_order: Vec<f64>,
    pub samples: usize,
}

/// Monte Carlo estimate of F(v_* + lambda) near the bottom of the support and its
/// local power order.
pub fn thin_tail_probe(p: &ProductCharFun, lambda: &[f64], samples: usize, seed: u64) -> ThinTailProbe {
    let (lo, hi) = p.range();
    let mut s = p.sample(samples, seed);
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mass: Vec<f64> = lambda
        .iter()
        .map(|&l| s.partition_point(|&v| v <= lo + l) as f64 / n)
        .collect();
    let lnf: Vec<f64> = mass.iter().map(|m| m.ln()).collect();
    let lnl: Vec<f64> = lambda.iter().map(|l| l.ln()).collect();
    let k = lambda.len();
    let local_order = (0..k)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(k - 1));
            if a == b || !lnf[a].is_finite() || !lnf[b].is_finite() {
                f64::NAN
            } else {
                (lnf[b] - lnf[a]) / (lnl[b] - lnl[a])
            }
        })
        .collect();
    ThinTailProbe {
        v_star: lo,
        range: hi - lo,
        lambda: lambda.to_vec(),
        mass,
        local_order,
        samples,
    }
}

/// max over a grid of centers of the empirical mass of [a - eps, a + eps].
pub fn empirical_max_interval_mass(samples: &[f64], eps: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    // The max over all a is attained with a - eps at a sample point.
    let mut best = 0usize;
    let mut j = 0usize;
    for i in 0..n {
        while j < n && s[j] <= s[i] + 2.0 * eps {
            j += 1;
        }
        best = best.max(j - i);
    }
    best as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::shell;
    use crate::stats::log_grid;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn euler_sinc() {
        let p = ProductCharFun::dyadic(&Marginal::SymmetricBernoulli, 50).unwrap();
        let t = PI / 2.0;
        assert!((p.eval(t).re - 2.0 / PI).abs() < 1e-10);
        assert_eq!(p.eval(0.0), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn viete_values() {
        assert!((viete(PI / 2.0, 40) - 2.0 / PI).abs() < 1e-10);
        assert!(viete(PI, 40).abs() < 1e-9);
        assert!(scaled_bernoulli_product(2.0, PI, 40).abs() < 1e-9);
    }

    #[test]
    fn viete_rate() {
        for k in 2..=20u32 {
            for i in 1..=50 {
                let x = PI * i as f64 / 50.0;
                let err = (viete(x, k) - x.sin() / x).abs();
                assert!(err <= 0.5 * 4f64.powi(-(k as i32)), "K={k} x={x} err={err}");
            }
        }
    }

    #[test]
    fn functional_equation_b3() {
        let base = scaled_bernoulli_product(3.0, PI, 60).abs();
        let mut t = PI;
        for _ in 1..=5 {
            t *= 3.0;
            let v = scaled_bernoulli_product(3.0, t, 60).abs();
            // |phi(3t)| = |cos t| |phi(t)| with |cos(3^n pi)| = 1
            assert!((v - base).abs() < 1e-9, "{v} vs {base}");
        }
    }

    #[test]
    fn kernel_factors_match_shells() {
        let k = InteractionKernel::polynomial(4.0, 2).unwrap();
        let p = ProductCharFun::from_kernel(&k, &Marginal::SymmetricBernoulli, 1, 6).unwrap();
        let pts: usize = (1..=6).map(|n| shell(n, 2, Norm::L2).len()).sum();
        assert_eq!(p.point_count() as usize, pts);
        let direct: f64 = (1..=6)
            .flat_map(|n| shell(n, 2, Norm::L2))
            .map(|x| (x.coords()[0].pow(2) + x.coords()[1].pow(2)) as f64)
            .map(|r2| (r2.powf(-2.0) * 1.7).cos().abs().ln())
            .sum();
        assert_relative_eq!(p.log_modulus(1.7), direct, max_relative = 1e-12);
    }

    #[test]
    fn split_is_additive() {
        let k = InteractionKernel::staircase(3.0, 2.0, 2).unwrap();
        let p = ProductCharFun::from_kernel(&k, &Marginal::uniform01(), 1, 20).unwrap();
        let (a, b) = p.split_at_shell(7).unwrap();
        for t in [0.3, 4.0, 55.0] {
            assert_relative_eq!(
                p.log_modulus(t),
                a.log_modulus(t) + b.log_modulus(t),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn truncation_monotone() {
        let k = InteractionKernel::polynomial(3.0, 2).unwrap();
        let m = Marginal::SymmetricBernoulli;
        for t in [1.0, 10.0, 100.0] {
            let mut prev = 0.0;
            for n in 1..15 {
                let v = -ProductCharFun::from_kernel(&k, &m, 1, n).unwrap().log_modulus(t);
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn smoothing_kernel_properties() {
        for t_cap in [0.5, 1.0, 10.0] {
            let s = SmoothingKernel::new(t_cap).unwrap();
            let q = crate::quad::integrate_panels(|x| s.p(x), -4000.0 / t_cap, 4000.0 / t_cap, 4096, 1e-10);
            // Tail beyond |x| > X is about 2 / (pi T X).
            let tail = 2.0 / (PI * t_cap * 4000.0 / t_cap);
            assert!((q.value + tail - 1.0).abs() < 1e-6, "T={t_cap}: {}", q.value);
        }
        for eps in [1.0, 0.1, 0.01] {
            let s = SmoothingKernel::new(1.0 / eps).unwrap();
            for i in 0..1000 {
                let x = -eps + 2.0 * eps * i as f64 / 999.0;
                assert!(8.0 * eps * s.p(x) >= 1.0);
            }
        }
    }

    #[test]
    fn concentration_dyadic_uniform() {
        let p = ProductCharFun::dyadic(&Marginal::bernoulli01(), 40).unwrap();
        let b = concentration_bound(&p, 0.01, 10.0).unwrap();
        assert!(b.bound >= 0.02 && b.bound <= 0.2, "{:?}", b);
        let b2 = concentration_bound(&p, 0.02, 10.0).unwrap();
        assert!(b2.bound >= b.bound);
    }

    #[test]
    fn sinc_not_integrable() {
        let p = ProductCharFun::dyadic(&Marginal::SymmetricBernoulli, 60).unwrap();
        assert!(matches!(
            invert_to_density(&p, &[0.0]),
            Err(Error::NotIntegrable { .. })
        ));
    }

    #[test]
    fn algebraic_fit_sinc() {
        let p = ProductCharFun::dyadic(&Marginal::SymmetricBernoulli, 60).unwrap();
        let fit = decay_fit(&p, &log_grid(10.0, 1e4, 30), FitKind::Algebraic).unwrap();
        let a = fit.model.exponent();
        assert!((a - 1.0).abs() < 0.1, "alpha = {a}");
    }

    #[test]
    fn wiener_single_cosine() {
        let v = wiener_average(|t| Complex64::new(t.cos(), 0.0), 1e3).unwrap();
        assert!((v - 0.5).abs() < 0.01);
    }

    #[test]
    fn empirical_mass_window() {
        let s = [0.0, 0.01, 0.02, 0.5];
        assert_eq!(empirical_max_interval_mass(&s, 0.01), 0.75);
    }

    proptest! {
        #[test]
        fn modulus_bounded_and_hermitian(t in -200.0f64..200.0, kind in 0usize..3) {
            let m = match kind { 0 => Marginal::SymmetricBernoulli, 1 => Marginal::uniform01(), _ => Marginal::bernoulli01() };
            let k = InteractionKernel::exponential(0.7, Norm::L1, 2).unwrap();
            let p = ProductCharFun::from_kernel(&k, &m, 0, 6).unwrap();
            let z = p.eval(t);
            prop_assert!(z.norm() <= 1.0 + 1e-12);
            let w = p.eval(-t);
            prop_assert!((z.conj() - w).norm() < 1e-9);
            if m.is_symmetric() {
                prop_assert_eq!(z.im, 0.0);
            }
        }

        #[test]
        fn functional_equation(t in -10.0f64..10.0, b in prop::sample::select(vec![2.0, 3.0, 4.0])) {
            let lhs = scaled_bernoulli_product(b, b * t, 41);
            let rhs = t.cos() * scaled_bernoulli_product(b, t, 40);
            prop_assert!((lhs - rhs).abs() <= 16.0 * f64::EPSILON * (1.0 + t.abs()));
        }
    }
}
