//! Interaction kernels fu for the four decay classes, and certified tail bounds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{norm_key, LatticePoint, Norm};

/// The decay class and its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum KernelKind {
    /// r^{-A}
    Polynomial { a_exp: f64 },
    /// r_n^{-A} on [r_n, r_{n+1}), r_n = floor(n^kappa)
    Staircase { a_exp: f64, kappa: f64 },
    /// exp(-a r^delta) in the chosen norm (Euclidean by default)
    SubExponential { a: f64, delta: f64, norm: Norm },
    /// exp(-a |x|_p), p in {1, inf}
    Exponential { a: f64, p: Norm },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionKernel {
    pub kind: KernelKind,
    pub dim: usize,
}

/// r_n = floor(n^kappa).
pub fn staircase_breakpoint(n: u64, kappa: f64) -> u64 {
    if n == 0 {
        return 0;
    }
    let x = (n as f64).powf(kappa);
    // powf can land just below an exact integer (4^1.5 = 7.999...).
    let nudged = x + 1e-9 * x.max(1.0);
    let f = nudged.floor();
    if f > x + 1e-6 * x.max(1.0) {
        x.floor() as u64
    } else {
        f as u64
    }
}

/// exp(-a k) with the product a k carried in double-double, so that
/// exp_neg_int(a, m) * exp_neg_int(a, n) agrees with exp_neg_int(a, m + n) to a few ulps.
pub fn exp_neg_int(a: f64, k: i64) -> f64 {
    let kf = k as f64;
    let hi = a * kf;
    let lo = a.mul_add(kf, -hi);
    (-hi).exp() * (1.0 - lo)
}

/// [r_0, ..., r_{n_max}].
pub fn staircase_breakpoints(kappa: f64, n_max: u64) -> Result<Vec<u64>> {
    if !(kappa > 1.0) {
        return Err(invalid(format!("staircase exponent kappa = {kappa} must exceed 1")));
    }
    if n_max < 1 {
        return Err(invalid("n_max must be >= 1"));
    }
    Ok((0..=n_max).map(|n| staircase_breakpoint(n, kappa)).collect())
}

/// Largest n with r_n^2 <= sq, i.e. the staircase step containing radius sqrt(sq).
fn staircase_index_sq(sq: u64, kappa: f64) -> u64 {
    let r = (sq as f64).sqrt();
    let mut n = r.powf(1.0 / kappa).floor() as u64;
    while n > 0 && staircase_breakpoint(n, kappa).pow(2) > sq {
        n -= 1;
    }
    while staircase_breakpoint(n + 1, kappa).pow(2) <= sq {
        n += 1;
    }
    n
}

/// Largest n with r_n <= r for real r >= 0.
fn staircase_index(r: f64, kappa: f64) -> u64 {
    let mut n = r.max(0.0).powf(1.0 / kappa).floor() as u64;
    while n > 0 && staircase_breakpoint(n, kappa) as f64 > r {
        n -= 1;
    }
    while staircase_breakpoint(n + 1, kappa) as f64 <= r {
        n += 1;
    }
    n
}

fn staircase_value(n: u64, kappa: f64, a_exp: f64) -> f64 {
    if n == 0 {
        1.0
    } else {
        (staircase_breakpoint(n, kappa) as f64).powf(-a_exp)
    }
}

impl InteractionKernel {
    pub fn new(kind: KernelKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension d must be >= 1"));
        }
        let d = dim as f64;
        match kind {
            KernelKind::Polynomial { a_exp } => {
                if !(a_exp > d) {
                    return Err(invalid(format!(
                        "polynomial kernel needs A > d (got A = {a_exp}, d = {dim})"
                    )));
                }
            }
            KernelKind::Staircase { a_exp, kappa } => {
                if !(a_exp > d) {
                    return Err(invalid(format!(
                        "staircase kernel needs A > d (got A = {a_exp}, d = {dim})"
                    )));
                }
                if !(kappa > 1.0) || !kappa.is_finite() {
                    return Err(invalid(format!(
                        "staircase kernel needs kappa > 1 (got kappa = {kappa})"
                    )));
                }
            }
            KernelKind::SubExponential { a, delta, .. } => {
                if !(a > 0.0) || !a.is_finite() {
                    return Err(invalid(format!("sub-exponential kernel needs a > 0 (got {a})")));
                }
                if !(delta > 0.0 && delta <= 1.0) {
                    return Err(invalid(format!(
                        "sub-exponential kernel needs delta in (0, 1] (got {delta})"
                    )));
                }
            }
            KernelKind::Exponential { a, p } => {
                if !(a > 0.0) || !a.is_finite() {
                    return Err(invalid(format!("exponential kernel needs a > 0 (got {a})")));
                }
                if p == Norm::L2 {
                    return Err(invalid("exponential kernel norm must be 1 or inf"));
                }
            }
        }
        Ok(InteractionKernel { kind, dim })
    }

    pub fn polynomial(a_exp: f64, dim: usize) -> Result<Self> {
        Self::new(KernelKind::Polynomial { a_exp }, dim)
    }

    pub fn staircase(a_exp: f64, kappa: f64, dim: usize) -> Result<Self> {
        Self::new(KernelKind::Staircase { a_exp, kappa }, dim)
    }

    pub fn sub_exponential(a: f64, delta: f64, dim: usize) -> Result<Self> {
        Self::new(
            KernelKind::SubExponential {
                a,
                delta,
                norm: Norm::L2,
            },
            dim,
        )
    }

    pub fn exponential(a: f64, p: Norm, dim: usize) -> Result<Self> {
        Self::new(KernelKind::Exponential { a, p }, dim)
    }

    /// The norm in which the kernel is radial.
    pub fn norm(&self) -> Norm {
        match self.kind {
            KernelKind::Polynomial { .. } | KernelKind::Staircase { .. } => Norm::L2,
            KernelKind::SubExponential { norm, .. } => norm,
            KernelKind::Exponential { p, .. } => p,
        }
    }

    pub fn is_singular_at_origin(&self) -> bool {
        matches!(
            self.kind,
            KernelKind::Polynomial { .. } | KernelKind::Staircase { .. }
        )
    }

    /// fu(x). Errors with `SingularOrigin` at x = 0 for the power-law classes.
    pub fn eval(&self, x: &LatticePoint) -> Result<f64> {
        let key = norm_key(x, self.norm());
        if key == 0 && self.is_singular_at_origin() {
            return Err(Error::SingularOrigin);
        }
        Ok(self.eval_key(key))
    }

    /// Coupling amplitude used in the alloy transform: fu(x) for x != 0, and the
    /// bounded on-site value 1 at the origin for every class.
    pub fn amplitude(&self, x: &LatticePoint) -> f64 {
        let key = norm_key(x, self.norm());
        if key == 0 {
            1.0
        } else {
            self.eval_key(key)
        }
    }

    /// Value on an exact norm key (see [`norm_key`]); key 0 gives 1.
    pub fn eval_key(&self, key: u64) -> f64 {
        if key == 0 {
            return 1.0;
        }
        match self.kind {
            KernelKind::Polynomial { a_exp } => (key as f64).powf(-0.5 * a_exp),
            KernelKind::Staircase { a_exp, kappa } => {
                staircase_value(staircase_index_sq(key, kappa), kappa, a_exp)
            }
            KernelKind::SubExponential { a, delta, norm } => {
                (-a * norm.key_to_radius(key).powf(delta)).exp()
            }
            KernelKind::Exponential { a, .. } => exp_neg_int(a, key as i64),
        }
    }

    /// Radial profile fu(r) for real r > 0 in the kernel's own norm.
    pub fn profile(&self, r: f64) -> f64 {
        match self.kind {
            KernelKind::Polynomial { a_exp } => r.powf(-a_exp),
            KernelKind::Staircase { a_exp, kappa } => {
                staircase_value(staircase_index(r, kappa), kappa, a_exp)
            }
            KernelKind::SubExponential { a, delta, .. } => (-a * r.powf(delta)).exp(),
            KernelKind::Exponential { a, .. } => (-a * r).exp(),
        }
    }

    /// The kernel fu^2, of the same class.
    pub fn squared(&self) -> InteractionKernel {
        let kind = match self.kind {
            KernelKind::Polynomial { a_exp } => KernelKind::Polynomial { a_exp: 2.0 * a_exp },
            KernelKind::Staircase { a_exp, kappa } => KernelKind::Staircase {
                a_exp: 2.0 * a_exp,
                kappa,
            },
            KernelKind::SubExponential { a, delta, norm } => KernelKind::SubExponential {
                a: 2.0 * a,
                delta,
                norm,
            },
            KernelKind::Exponential { a, p } => KernelKind::Exponential { a: 2.0 * a, p },
        };
        InteractionKernel {
            kind,
            dim: self.dim,
        }
    }

    /// Certified upper bound on the tail sum over |x| > R (kernel norm).
    ///
    /// Points with |x| > R either lie in the cube |x|_inf <= R, where fu <= fu(R),
    /// or in a max-norm shell k > R with at most 2d 3^{d-1} k^{d-1} points, where
    /// fu <= fu(k) because every norm dominates the max-norm. The shell series is
    /// summed explicitly up to a cutoff K and bounded by an integral beyond it.
    /// The result is made nonincreasing in R by taking the minimum over R' <= R.
    pub fn tail_sum_bound(&self, radius: u64) -> f64 {
        let radius = radius.max(1);
        let d = self.dim as i32;
        let surface = 2.0 * self.dim as f64 * 3f64.powi(d - 1);
        let cutoff = match self.series_cutoff(radius) {
            Some(k) => k,
            None => return f64::INFINITY,
        };
        let shell_term = |k: u64| (k as f64).powi(d - 1) * self.profile(k as f64);
        // Accumulate small terms first.
        let mut series = self.integral_tail(cutoff);
        let mut k = cutoff;
        while k > radius {
            series += shell_term(k);
            k -= 1;
        }
        let inner = |r: u64| {
            if self.norm() == Norm::Linf {
                0.0
            } else {
                ((2 * r + 1) as f64).powi(d) * self.profile(r as f64)
            }
        };
        let mut best = inner(radius) + surface * series;
        let mut r = radius;
        while r > 1 {
            series += shell_term(r);
            r -= 1;
            best = best.min(inner(r) + surface * series);
        }
        best
    }

    /// Cutoff K beyond which k^{d-1} fu(k) is nonincreasing and the integral tail
    /// formula applies. `None` if K would be impractically large.
    fn series_cutoff(&self, radius: u64) -> Option<u64> {
        let d = self.dim as f64;
        let k = match self.kind {
            KernelKind::Polynomial { .. } | KernelKind::Staircase { .. } => {
                (16 * radius).max(4096) as f64
            }
            KernelKind::SubExponential { a, delta, .. } => exp_cutoff(a, delta, d, radius),
            KernelKind::Exponential { a, .. } => exp_cutoff(a, 1.0, d, radius),
        };
        if !(k.is_finite()) || k > 1e8 {
            None
        } else {
            Some(k.ceil() as u64)
        }
    }

    /// Upper bound on the sum over k > K of k^{d-1} fu(k).
    fn integral_tail(&self, cutoff: u64) -> f64 {
        let d = self.dim as f64;
        let k = cutoff as f64;
        match self.kind {
            KernelKind::Polynomial { a_exp } => k.powf(d - a_exp) / (a_exp - d),
            KernelKind::Staircase { a_exp, kappa } => {
                // fu(k) <= rho k^{-A} with rho bounding (r_{n+1}/r_n)^A for n >= n0.
                let n0 = staircase_index(k, kappa);
                if n0 < 2 {
                    return f64::INFINITY;
                }
                let n0 = n0 as f64;
                let ratio = (n0 + 1.0).powf(kappa) / (n0.powf(kappa) - 1.0);
                ratio.powf(a_exp) * k.powf(d - a_exp) / (a_exp - d)
            }
            KernelKind::SubExponential { a, delta, .. } => exp_integral_tail(a, delta, d, k),
            KernelKind::Exponential { a, .. } => exp_integral_tail(a, 1.0, d, k),
        }
    }

    /// Smallest R in [1, r_max] with tail_sum_bound(R) <= rel_tol * fu(1); if none,
    /// returns r_max. Also returns the achieved bound.
    pub fn truncation_radius(&self, rel_tol: f64, r_max: u64) -> (u64, f64) {
        let target = rel_tol * self.profile(1.0);
        let r_max = r_max.max(1);
        let top = self.tail_sum_bound(r_max);
        if top > target {
            return (r_max, top);
        }
        let (mut lo, mut hi) = (1u64, r_max);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.tail_sum_bound(mid) <= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        (lo, self.tail_sum_bound(lo))
    }

    /// Exact lattice sum of fu over the cube |x|_inf <= R minus the origin.
    pub fn cube_sum(&self, radius: u64) -> f64 {
        let origin = LatticePoint::origin(self.dim);
        crate::lattice::cube_points(&origin, radius)
            .iter()
            .filter(|x| !x.is_origin())
            .map(|x| self.amplitude(x))
            .sum()
    }
}

fn exp_cutoff(a: f64, delta: f64, d: f64, radius: u64) -> f64 {
    let s = d / delta;
    let monotone = ((d - 1.0) / (a * delta)).powf(1.0 / delta);
    let gamma_ok = ((2.0 * (s - 1.0)).max(1.0) / a).powf(1.0 / delta);
    monotone.max(gamma_ok).max(radius as f64 + 64.0)
}

/// Upper bound for the integral of x^{d-1} exp(-a x^delta) over [K, inf), valid
/// when z = a K^delta >= 2 (d/delta - 1).
fn exp_integral_tail(a: f64, delta: f64, d: f64, k: f64) -> f64 {
    let s = d / delta;
    let z = a * k.powf(delta);
    let corr = if s > 1.0 { 1.0 / (1.0 - (s - 1.0) / z) } else { 1.0 };
    k.powf(d - delta) * (-z).exp() * corr / (a * delta)
}

impl fmt::Display for InteractionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            KernelKind::Polynomial { a_exp } => write!(f, "poly:A={a_exp}"),
            KernelKind::Staircase { a_exp, kappa } => write!(f, "stair:A={a_exp},kappa={kappa}"),
            KernelKind::SubExponential { a, delta, norm } => {
                write!(f, "subexp:a={a},delta={delta},norm={}", norm_label(norm))
            }
            KernelKind::Exponential { a, p } => write!(f, "exp:a={a},p={}", norm_label(p)),
        }
    }
}

fn norm_label(n: Norm) -> &'static str {
    match n {
        Norm::L1 => "1",
        Norm::L2 => "2",
        Norm::Linf => "inf",
    }
}

/// Kernel specification without the ambient dimension, parsed from strings such as
/// `poly:A=4`, `stair:A=3,kappa=2`, `subexp:a=1,delta=0.5,norm=2`, `exp:a=0.5,p=inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec(pub KernelKind);

impl KernelSpec {
    pub fn with_dim(self, dim: usize) -> Result<InteractionKernel> {
        InteractionKernel::new(self.0, dim)
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (class, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params = std::collections::BTreeMap::new();
        for kv in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| invalid(format!("kernel parameter '{kv}' is not key=value")))?;
            params.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |key: &str, default: Option<f64>| -> Result<f64> {
            match params.get(key) {
                Some(v) => v
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("kernel parameter {key} = '{v}' is not a number"))),
                None => default.ok_or_else(|| invalid(format!("kernel '{class}' needs parameter {key}"))),
            }
        };
        let norm = |key: &str, default: Norm| -> Result<Norm> {
            params.get(key).map_or(Ok(default), |v| Norm::parse(v))
        };
        let kind = match class.trim().to_ascii_lowercase().as_str() {
            "poly" | "polynomial" => KernelKind::Polynomial {
                a_exp: num("A", None)?,
            },
            "stair" | "staircase" => KernelKind::Staircase {
                a_exp: num("A", None)?,
                kappa: num("kappa", None)?,
            },
            "subexp" | "subexponential" => KernelKind::SubExponential {
                a: num("a", Some(1.0))?,
                delta: num("delta", None)?,
                norm: norm("norm", Norm::L2)?,
            },
            "exp" | "exponential" => KernelKind::Exponential {
                a: num("a", None)?,
                p: norm("p", Norm::L1)?,
            },
            other => return Err(invalid(format!("unknown kernel class '{other}'"))),
        };
        Ok(KernelSpec(kind))
    }
}
