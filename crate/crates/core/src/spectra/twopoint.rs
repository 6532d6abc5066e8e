use serde::{Deserialize, Serialize};

use crate::disorder::CounterRng;
use crate::error::{invalid, Error, Result};

use super::{ExperimentKind, ExperimentResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPointParams {
    pub a_exp: f64,
    pub r: u64,
    pub rho: u64,
    /// Angle between the source axis u and the observation direction x.
    pub theta: f64,
    pub trials: u64,
    pub seed: u64,
}

/// The four equiprobable Bernoulli outcomes (omega_{-ru}, omega_{ru}) =
/// (+,+), (+,-), (-,+), (-,-) mapped to (zeta_-, zeta_+) / a_r in the second-order
/// expansion: (fa, fa), (fb, -fb), (-fb, fb), (-fa, -fa) with fa = 2(1 + beta kappa^2),
/// fb = 2 alpha kappa, alpha = A cos(theta), beta = -1 + 2(A/2 + 1) cos^2(theta).
pub fn two_point_table(a_exp: f64, kappa: f64, theta: f64) -> [(f64, f64); 4] {
    let c = theta.cos();
    let alpha = a_exp * c;
    let beta = -1.0 + 2.0 * (0.5 * a_exp + 1.0) * c * c;
    let fa = 2.0 * (1.0 + beta * kappa * kappa);
    let fb = 2.0 * alpha * kappa;
    [(fa, fa), (fb, -fb), (-fb, fb), (-fa, -fa)]
}

/// Exact outcome values from the kernel r^{-A}, scaled by a_r = r^{-A}:
/// V_{ru}(rho x) / a_r = (1 - 2 kappa c + kappa^2)^{-A/2}.
fn exact_table(a_exp: f64, kappa: f64, theta: f64) -> [(f64, f64); 4] {
    let c = theta.cos();
    let near = (1.0 - 2.0 * kappa * c + kappa * kappa).powf(-0.5 * a_exp);
    let far = (1.0 + 2.0 * kappa * c + kappa * kappa).powf(-0.5 * a_exp);
    let zeta = |wm: f64, wp: f64| (wm * near + wp * far, wm * far + wp * near);
    [zeta(1.0, 1.0), zeta(1.0, -1.0), zeta(-1.0, 1.0), zeta(-1.0, -1.0)]
}

/// Covariance of equally weighted centered outcomes.
pub fn covariance_of(values: &[(f64, f64)]) -> [[f64; 2]; 2] {
    let n = values.len() as f64;
    let (mx, my) = values.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in values {
        sxx += (x - mx) * (x - mx) / n;
        syy += (y - my) * (y - my) / n;
        sxy += (x - mx) * (y - my) / n;
    }
    [[sxx, sxy], [sxy, syy]]
}

fn det(c: &[[f64; 2]; 2]) -> f64 {
    c[0][0] * c[1][1] - c[0][1] * c[1][0]
}

/// Covariance of (zeta_-, zeta_+) from two symmetric Bernoulli sources at +-r u,
/// observed at +-rho x, in units of a_r = r^{-A}.
pub fn two_point_covariance(p: &TwoPointParams) -> Result<ExperimentResult> {
    if !(p.a_exp > 0.0) || p.r == 0 {
        return Err(invalid("need A > 0 and r >= 1"));
    }
    let kappa = p.rho as f64 / p.r as f64;
    if kappa > 0.25 {
        return Err(Error::Precondition(format!("kappa = rho / r = {kappa} exceeds 1/4")));
    }
    let c = p.theta.cos();
    if c.abs() < 1e-12 {
        return Err(Error::DegenerateDirection(c));
    }
    if p.trials < 2 {
        return Err(invalid("need at least two trials"));
    }
    let table = two_point_table(p.a_exp, kappa, p.theta);
    let exact = exact_table(p.a_exp, kappa, p.theta);
    let c_table = covariance_of(&table);
    let c_exact = covariance_of(&exact);
    let mut rng = CounterRng::new(p.seed, 0);
    let mut draws = Vec::with_capacity(p.trials as usize);
    for _ in 0..p.trials {
        let bits = rng.next_u64();
        draws.push(exact[(bits >> 62) as usize]);
    }
    let n = draws.len() as f64;
    let mut c_mc = covariance_of(&draws);
    for row in c_mc.iter_mut() {
        for v in row.iter_mut() {
            *v *= n / (n - 1.0);
        }
    }
    let target = 16.0 * p.a_exp * p.a_exp * kappa * kappa * c * c;
    let mut res = ExperimentResult::new(ExperimentKind::TwoPoint, p, p.seed, p.trials);
    res.meta("kappa", kappa);
    res.meta("table", table);
    res.meta("covariance_table", c_table);
    res.meta("covariance_exact", c_exact);
    res.meta("covariance_mc", c_mc);
    res.meta("det_target", target);
    res.meta("det_ratio_table", det(&c_table) / target);
    res.meta("det_ratio_exact", det(&c_exact) / target);
    res.meta("det_ratio_mc", det(&c_mc) / target);
    res.meta("band_lo", 1.0 - 5.0 * kappa * kappa);
    res.meta("band_hi", 1.0 + 5.0 * kappa * kappa);
    res.meta("offdiag_ratio", c_exact[0][1] / c_exact[0][0]);
    Ok(res)
}
