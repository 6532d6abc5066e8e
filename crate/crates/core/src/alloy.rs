//! The alloy transform V(x) = sum_y fu(y - x) omega_y, its truncation, the
//! flat/ripple split for power-law kernels, and exact factorizations for
//! exponential kernels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::Configuration;
use crate::error::{Error, Result};
use crate::kernels::{exp_neg_int, InteractionKernel};
use crate::lattice::{cube_points, norm, norm_key, Ball, LatticePoint, Norm};

/// Cumulative potential on the points of a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    pub ball: Ball,
    pub points: Vec<LatticePoint>,
    pub values: Vec<f64>,
    /// Sources were taken from the max-norm cube of this radius around the box center.
    pub truncation_radius: Option<u64>,
    /// Certified sup-norm bound on the neglected part.
    pub tail_error: f64,
}

impl PotentialField {
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn value_at(&self, x: &LatticePoint) -> Option<f64> {
        self.points.binary_search(x).ok().map(|i| self.values[i])
    }

    /// Pointwise sum of two fields on the same box.
    pub fn add(&self, other: &PotentialField) -> Result<PotentialField> {
        if self.points != other.points {
            return Err(Error::ShapeMismatch("potential fields live on different boxes".into()));
        }
        Ok(PotentialField {
            ball: self.ball.clone(),
            points: self.points.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            truncation_radius: self.truncation_radius.or(other.truncation_radius),
            tail_error: self.tail_error + other.tail_error,
        })
    }

    /// CSV rows `coords..., value`.
    pub fn csv(&self) -> String {
        let d = self.ball.dim();
        let mut out: String = (1..=d).map(|i| format!("x{i},")).collect();
        out.push_str("value\n");
        for (x, v) in self.points.iter().zip(&self.values) {
            for c in x.coords() {
                out.push_str(&format!("{c},"));
            }
            out.push_str(&format!("{}\n", crate::harness::fmt_float(*v)));
        }
        out
    }
}

/// Truncated alloy transform: sources in the cube of radius `radius` around the box
/// center. The configuration window must cover that cube. Attached error is
/// tail_sum_bound(radius - L).
pub fn cumulative_potential(
    k: &InteractionKernel,
    c: &Configuration,
    ball: &Ball,
    radius: u64,
) -> Result<PotentialField> {
    let need = cube_points(&ball.center, radius);
    if radius < ball.radius || need.iter().any(|y| !c.contains(y)) {
        return Err(Error::WindowTooSmall {
            radius,
            center: ball.center.to_string(),
        });
    }
    let sources: Vec<(LatticePoint, f64)> = need.into_iter().map(|y| {
        let v = c.get(&y);
        (y, v)
    }).collect();
    let points = ball.points();
    let values = potential_values(k, &points, &sources);
    let tail = k.tail_sum_bound(radius - ball.radius);
    let tail_error = tail * max_abs(c.values());
    Ok(PotentialField {
        ball: ball.clone(),
        points,
        values,
        truncation_radius: Some(radius),
        tail_error,
    })
}

/// Exact potential of a finitely supported configuration (zero outside its window).
pub fn restricted_potential(k: &InteractionKernel, c: &Configuration, ball: &Ball) -> PotentialField {
    let sources: Vec<(LatticePoint, f64)> = c.iter().map(|(x, v)| (x.clone(), v)).collect();
    let points = ball.points();
    let values = potential_values(k, &points, &sources);
    PotentialField {
        ball: ball.clone(),
        points,
        values,
        truncation_radius: None,
        tail_error: 0.0,
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn potential_values(
    k: &InteractionKernel,
    points: &[LatticePoint],
    sources: &[(LatticePoint, f64)],
) -> Vec<f64> {
    points
        .par_iter()
        .map(|x| {
            sources
                .iter()
                .filter(|(_, w)| *w != 0.0)
                .map(|(y, w)| k.amplitude(&y.sub(x)) * w)
                .sum()
        })
        .collect()
}

/// Precomputed coupling matrix fu(y - x) between a box and a fixed source list,
/// for repeated evaluation over many configurations.
#[derive(Clone, Debug)]
pub struct AlloyTransform {
    pub points: Vec<LatticePoint>,
    pub sources: Vec<LatticePoint>,
    matrix: Vec<f64>,
}

impl AlloyTransform {
    pub fn new(k: &InteractionKernel, points: Vec<LatticePoint>, mut sources: Vec<LatticePoint>) -> Self {
        sources.sort();
        sources.dedup();
        let matrix: Vec<f64> = points
            .par_iter()
            .flat_map_iter(|x| sources.iter().map(move |y| k.amplitude(&y.sub(x))))
            .collect();
        AlloyTransform {
            points,
            sources,
            matrix,
        }
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.sources.len() + j]
    }

    /// V on the box given source amplitudes in `sources` order.
    pub fn apply(&self, amps: &[f64]) -> Vec<f64> {
        let m = self.sources.len();
        debug_assert_eq!(amps.len(), m);
        self.matrix
            .chunks(m.max(1))
            .map(|row| row.iter().zip(amps).map(|(a, w)| a * w).sum())
            .take(self.points.len())
            .collect()
    }

    pub fn apply_config(&self, c: &Configuration) -> Vec<f64> {
        let amps: Vec<f64> = self.sources.iter().map(|y| c.get(y)).collect();
        self.apply(&amps)
    }
}

/// One source of the flat/ripple decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatRippleTerm {
    pub source: LatticePoint,
    /// a_x = fu(x - u)
    pub flat: f64,
    /// c_x(y) = fu(x - y) - fu(x - u) for y in the box (box point order)
    pub ripple: Vec<f64>,
    pub ripple_sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatRippleDecomp {
    pub ball: Ball,
    pub points: Vec<LatticePoint>,
    pub terms: Vec<FlatRippleTerm>,
    /// max over sources of (sup |c_x| / a_x) * |x - u| / L
    pub ratio_constant: f64,
}

impl FlatRippleDecomp {
    /// sum_x (a_x + c_x(y)) omega_x on the box.
    pub fn reconstruct(&self, c: &Configuration) -> Vec<f64> {
        let mut out = vec![0.0; self.points.len()];
        for t in &self.terms {
            let w = c.get(&t.source);
            for (o, r) in out.iter_mut().zip(&t.ripple) {
                *o += (t.flat + r) * w;
            }
        }
        out
    }

    /// The flat shift xi = sum_x a_x omega_x.
    pub fn flat_shift(&self, c: &Configuration) -> f64 {
        self.terms.iter().map(|t| t.flat * c.get(&t.source)).sum()
    }
}

/// Flat/ripple split around the box center for sources at Euclidean distance >= 2L.
pub fn flat_ripple(k: &InteractionKernel, ball: &Ball, sources: &[LatticePoint]) -> Result<FlatRippleDecomp> {
    let u = &ball.center;
    let points = ball.points();
    let l = ball.radius;
    let mut terms = Vec::with_capacity(sources.len());
    let mut ratio_constant: f64 = 0.0;
    for x in sources {
        let dist_sq = norm_key(&x.sub(u), Norm::L2);
        if dist_sq < 4 * l * l || dist_sq == 0 {
            return Err(Error::SourceTooClose {
                source_point: x.to_string(),
                distance: (dist_sq as f64).sqrt(),
                min: 2 * l,
            });
        }
        let flat = k.amplitude(&x.sub(u));
        let ripple: Vec<f64> = points.iter().map(|y| k.amplitude(&x.sub(y)) - flat).collect();
        let ripple_sup = max_abs(&ripple);
        if l > 0 {
            let dist = (dist_sq as f64).sqrt();
            ratio_constant = ratio_constant.max(ripple_sup / flat * dist / l as f64);
        }
        terms.push(FlatRippleTerm {
            source: x.clone(),
            flat,
            ripple,
            ripple_sup,
        });
    }
    Ok(FlatRippleDecomp {
        ball: ball.clone(),
        points,
        terms,
        ratio_constant,
    })
}

/// fu(x - y) = w_x U_B(y) on all admitted pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizedPotential {
    pub points: Vec<LatticePoint>,
    pub profile: Vec<f64>,
    pub sources: Vec<LatticePoint>,
    pub weights: Vec<f64>,
}

impl FactorizedPotential {
    /// eta = sum_x w_x omega_x
    pub fn eta(&self, c: &Configuration) -> f64 {
        self.sources
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * c.get(x))
            .sum()
    }

    pub fn min_profile(&self) -> f64 {
        self.profile.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest relative deviation |fu(x - y) - w_x U_B(y)| / fu(x - y) over all pairs.
    pub fn max_relative_error(&self, k: &InteractionKernel) -> f64 {
        let mut worst: f64 = 0.0;
        for (x, w) in self.sources.iter().zip(&self.weights) {
            for (y, u) in self.points.iter().zip(&self.profile) {
                let exact = k.amplitude(&x.sub(y));
                worst = worst.max(((exact - w * u) / exact).abs());
            }
        }
        worst
    }
}

/// Sum-norm factorization for a box in the nonnegative orthant and sources in the
/// nonpositive orthant: |y - x|_1 = |y|_1 + |x|_1.
pub fn factorize_sumnorm(
    a: f64,
    points: &[LatticePoint],
    sources: &[LatticePoint],
) -> Result<FactorizedPotential> {
    if let Some(y) = points.iter().find(|y| y.coords().iter().any(|&c| c < 0)) {
        return Err(Error::OrthantViolation(format!("box point {y} is not in the nonnegative orthant")));
    }
    if let Some(x) = sources.iter().find(|x| x.coords().iter().any(|&c| c > 0)) {
        return Err(Error::OrthantViolation(format!("source {x} is not in the nonpositive orthant")));
    }
    let e = |k: u64| exp_neg_int(a, k as i64);
    Ok(FactorizedPotential {
        points: points.to_vec(),
        profile: points.iter().map(|y| e(norm_key(y, Norm::L1))).collect(),
        sources: sources.to_vec(),
        weights: sources.iter().map(|x| e(norm_key(x, Norm::L1))).collect(),
    })
}

/// Max-norm factorization on B_L(u) for sources beyond the face x_1 = u_1 + L that
/// satisfy the closed sector condition |x_perp - y_perp|_inf <= x_1 - y_1 for every
/// box point y. Then |x - y|_inf = x_1 - y_1 and
/// w_x = exp(-a (x_1 - u_1 - L)), U_B(y) = exp(-a (u_1 + L - y_1)).
pub fn factorize_maxnorm(a: f64, ball: &Ball, sources: &[LatticePoint]) -> Result<FactorizedPotential> {
    let u1 = ball.center.coords()[0];
    let l = ball.radius as i64;
    let points = Ball::cube(ball.center.clone(), ball.radius).points();
    for x in sources {
        for y in &points {
            let dx = x.coords()[0] - y.coords()[0];
            let perp = x.coords()[1..]
                .iter()
                .zip(&y.coords()[1..])
                .map(|(p, q)| (p - q).abs())
                .max()
                .unwrap_or(0);
            if dx < 0 || perp > dx {
                return Err(Error::LayerViolation {
                    source_point: x.to_string(),
                    box_point: y.to_string(),
                });
            }
        }
    }
    let e = |k: i64| exp_neg_int(a, k);
    Ok(FactorizedPotential {
        profile: points.iter().map(|y| e(u1 + l - y.coords()[0])).collect(),
        points,
        sources: sources.to_vec(),
        weights: sources.iter().map(|x| e(x.coords()[0] - u1 - l)).collect(),
    })
}

/// Euclidean distance from the box center.
pub fn center_distance(ball: &Ball, x: &LatticePoint) -> f64 {
    norm(&x.sub(&ball.center), Norm::L2)
}
