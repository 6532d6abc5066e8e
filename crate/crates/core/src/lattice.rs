//! Lattice geometry on Z^d: norms, balls, radial shells, staircase plateau
//! source sets, max-norm layers and octant windows.
//!
//! All point lists are returned in lexicographic order. Euclidean comparisons
//! are done on the exact integer |x|^2 so shell and plateau boundaries are
//! never misclassified by rounding.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::staircase_breakpoint;

/// Safety margin C' = C'' used for the staircase plateau annulus
/// `r_n + C' L <= |x| <= r_{n+1} - C'' L`.
pub const PLATEAU_MARGIN: u64 = 2;

/// A point of Z^d.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticePoint(Vec<i64>);

impl LatticePoint {
    pub fn new(coords: Vec<i64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("lattice points need dimension d >= 1"));
        }
        Ok(LatticePoint(coords))
    }

    pub fn origin(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be >= 1");
        LatticePoint(vec![0; dim])
    }

    /// Unchecked constructor for internal use where `coords` is known to be nonempty.
    pub(crate) fn from_vec(coords: Vec<i64>) -> Self {
        debug_assert!(!coords.is_empty());
        LatticePoint(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn sub(&self, other: &LatticePoint) -> LatticePoint {
        debug_assert_eq!(self.dim(), other.dim());
        LatticePoint(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &LatticePoint) -> LatticePoint {
        debug_assert_eq!(self.dim(), other.dim());
        LatticePoint(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scaled(&self, k: i64) -> LatticePoint {
        LatticePoint(self.0.iter().map(|c| c * k).collect())
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<&[i64]> for LatticePoint {
    fn from(c: &[i64]) -> Self {
        LatticePoint::from_vec(c.to_vec())
    }
}

/// The three lattice norms used throughout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn parse(s: &str) -> Result<Norm> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "l1" | "sum" => Ok(Norm::L1),
            "2" | "l2" | "euclid" | "euclidean" => Ok(Norm::L2),
            "inf" | "linf" | "max" | "∞" => Ok(Norm::Linf),
            other => Err(invalid(format!("unknown norm '{other}' (expected 1, 2 or inf)"))),
        }
    }

    /// Converts an integer [`norm_key`] back into the norm value.
    pub fn key_to_radius(self, key: u64) -> f64 {
        match self {
            Norm::L2 => (key as f64).sqrt(),
            Norm::L1 | Norm::Linf => key as f64,
        }
    }
}

/// Exact integer key of the norm: |x|_1, |x|_2^2 or |x|_inf.
pub fn norm_key(x: &LatticePoint, p: Norm) -> u64 {
    let it = x.coords().iter().map(|c| c.unsigned_abs());
    match p {
        Norm::L1 => it.sum(),
        Norm::L2 => it.map(|c| c * c).sum(),
        Norm::Linf => it.max().unwrap_or(0),
    }
}

pub fn norm(x: &LatticePoint, p: Norm) -> f64 {
    p.key_to_radius(norm_key(x, p))
}

/// Ball B_L(u) = { x : |x - u|_norm <= L }.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ball {
    pub center: LatticePoint,
    pub radius: u64,
    pub norm: Norm,
}

impl Ball {
    pub fn new(center: LatticePoint, radius: u64, norm: Norm) -> Self {
        Ball {
            center,
            radius,
            norm,
        }
    }

    /// Max-norm cube, the box shape used for Hamiltonians.
    pub fn cube(center: LatticePoint, radius: u64) -> Self {
        Ball::new(center, radius, Norm::Linf)
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn contains(&self, x: &LatticePoint) -> bool {
        let key = norm_key(&x.sub(&self.center), self.norm);
        match self.norm {
            Norm::L2 => key <= self.radius * self.radius,
            _ => key <= self.radius,
        }
    }

    /// Points of the ball in lexicographic order.
    pub fn points(&self) -> Vec<LatticePoint> {
        let mut pts = cube_points(&self.center, self.radius);
        if self.norm != Norm::Linf {
            pts.retain(|x| self.contains(x));
        }
        pts
    }

    pub fn len(&self) -> usize {
        match self.norm {
            Norm::Linf => (2 * self.radius as usize + 1).pow(self.dim() as u32),
            _ => self.points().len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// All points of the cube `center + [-radius, radius]^d`, lexicographic.
pub fn cube_points(center: &LatticePoint, radius: u64) -> Vec<LatticePoint> {
    let r = radius as i64;
    let lo: Vec<i64> = center.coords().iter().map(|c| c - r).collect();
    let hi: Vec<i64> = center.coords().iter().map(|c| c + r).collect();
    box_points(&lo, &hi)
}

/// All points of the axis-aligned box `[lo, hi]` (inclusive), lexicographic.
pub fn box_points(lo: &[i64], hi: &[i64]) -> Vec<LatticePoint> {
    let d = lo.len();
    if lo.iter().zip(hi).any(|(a, b)| a > b) {
        return Vec::new();
    }
    let count: usize = lo.iter().zip(hi).map(|(a, b)| (b - a + 1) as usize).product();
    let mut out = Vec::with_capacity(count);
    let mut cur = lo.to_vec();
    loop {
        out.push(LatticePoint::from_vec(cur.clone()));
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < hi[i] {
                cur[i] += 1;
                break;
            }
            cur[i] = lo[i];
        }
    }
}

/// Shell X_n = { x in Z^d : |x|_p in [n, n+1) }.
pub fn shell(n: u64, dim: usize, p: Norm) -> Vec<LatticePoint> {
    assert!(dim >= 1, "dimension must be >= 1");
    let mut pts = cube_points(&LatticePoint::origin(dim), n + 1);
    pts.retain(|x| in_shell(norm_key(x, p), n, p));
    pts
}

/// Whether a norm key belongs to shell n.
pub fn in_shell(key: u64, n: u64, p: Norm) -> bool {
    match p {
        Norm::L2 => key >= n * n && key < (n + 1) * (n + 1),
        Norm::L1 | Norm::Linf => key == n,
    }
}

/// Shell index containing a norm key.
pub fn shell_index(key: u64, p: Norm) -> u64 {
    match p {
        Norm::L2 => isqrt(key),
        Norm::L1 | Norm::Linf => key,
    }
}

/// floor(sqrt(n)) computed exactly.
pub fn isqrt(n: u64) -> u64 {
    if n == 0 {
        return 0;
    }
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Smallest n with r_{n+1} - r_n >= 2L + 1, where r_n = floor(n^kappa).
pub fn plateau_min_index(radius: u64, kappa: f64) -> Result<u64> {
    if !(kappa > 1.0) {
        return Err(invalid(format!("staircase exponent kappa = {kappa} must exceed 1")));
    }
    let need = 2 * radius + 1;
    let mut n = 0u64;
    loop {
        if staircase_breakpoint(n + 1, kappa) - staircase_breakpoint(n, kappa) >= need {
            return Ok(n);
        }
        n += 1;
    }
}

/// Exact predicate: every y in the cube B_L(0) satisfies r_lo <= |x - y|_2 < r_hi.
pub fn plateau_covers(x: &LatticePoint, radius: u64, r_lo: u64, r_hi: u64) -> bool {
    let l = radius as i64;
    let (mut min_sq, mut max_sq) = (0u64, 0u64);
    for &c in x.coords() {
        let near = if c > l {
            c - l
        } else if c < -l {
            -l - c
        } else {
            0
        };
        let far = c.abs() + l;
        min_sq += (near * near) as u64;
        max_sq += (far * far) as u64;
    }
    min_sq >= r_lo * r_lo && max_sq < r_hi * r_hi
}

/// Plateau sources of the staircase kernel for shell n around the cube B_L(0):
/// points with `r_n + 2L <= |x|_2 <= r_{n+1} - 2L` that pass the exact cover check,
/// so that every box site sees the same plateau value r_n^{-A}.
pub fn staircase_plateau_sources(
    radius: u64,
    n: u64,
    kappa: f64,
    dim: usize,
) -> Result<Vec<LatticePoint>> {
    let n_min = plateau_min_index(radius, kappa)?;
    let r_lo = staircase_breakpoint(n, kappa);
    let r_hi = staircase_breakpoint(n + 1, kappa);
    let empty = || Error::EmptyPlateau {
        n,
        n_min,
        r_lo,
        r_hi,
        radius,
    };
    if n < n_min || r_hi < r_lo + 2 * PLATEAU_MARGIN * radius {
        return Err(empty());
    }
    let inner = r_lo + PLATEAU_MARGIN * radius;
    let outer = r_hi - PLATEAU_MARGIN * radius;
    let mut pts = cube_points(&LatticePoint::origin(dim), outer);
    pts.retain(|x| {
        let k = norm_key(x, Norm::L2);
        k >= inner * inner && k <= outer * outer && plateau_covers(x, radius, r_lo, r_hi)
    });
    if pts.is_empty() {
        return Err(empty());
    }
    Ok(pts)
}

fn check_layer_radius(r: u64, radius: u64) -> Result<()> {
    if r < 2 * radius {
        return Err(Error::BadRadius {
            r,
            min: 2 * radius,
        });
    }
    Ok(())
}

fn layer_with_width(r: u64, u: &LatticePoint, width: u64) -> Vec<LatticePoint> {
    let mut lo: Vec<i64> = u.coords().iter().map(|c| c - width as i64).collect();
    let mut hi: Vec<i64> = u.coords().iter().map(|c| c + width as i64).collect();
    lo[0] = u.coords()[0] + r as i64;
    hi[0] = lo[0];
    box_points(&lo, &hi)
}

/// Max-norm layer X_r = { u + (r, x_2, ..., x_d) : max_{i>=2} |x_i| <= r - L }.
pub fn maxnorm_layer(r: u64, radius: u64, u: &LatticePoint) -> Result<Vec<LatticePoint>> {
    check_layer_radius(r, radius)?;
    Ok(layer_with_width(r, u, r - radius))
}

/// The part of the layer at first-coordinate offset r for which the sector condition
/// `|x_perp - y_perp|_inf <= x_1 - y_1` holds for every y in the cube B_L(u), i.e.
/// `max_{i>=2} |x_i - u_i| <= r - 2L`. Sources from these layers give an exactly
/// factorized max-norm exponential potential on the cube.
pub fn sector_layer(r: u64, radius: u64, u: &LatticePoint) -> Result<Vec<LatticePoint>> {
    check_layer_radius(r, radius)?;
    Ok(layer_with_width(r, u, r - 2 * radius))
}

/// Octant window O_{x,R}: the closed orthant rooted at x, intersected with B_R(x)
/// (in the ball's norm) and with the ball itself. The sign vector maximizing the
/// overlap is chosen; ties go to the lexicographically smallest sign vector (-1 < +1).
/// The root x itself is included.
pub fn octant_window(x: &LatticePoint, ball: &Ball, window_radius: u64) -> Vec<LatticePoint> {
    let d = x.dim();
    let local = Ball::new(x.clone(), window_radius, ball.norm);
    let candidates: Vec<LatticePoint> = local
        .points()
        .into_iter()
        .filter(|y| ball.contains(y))
        .collect();
    let mut best: Option<(usize, Vec<LatticePoint>)> = None;
    // Enumerate sign vectors lexicographically: bit i set means +1 in coordinate i,
    // iterated so that the most significant coordinate is the first one.
    for mask in 0u32..(1u32 << d) {
        let signs: Vec<i64> = (0..d)
            .map(|i| if mask & (1 << (d - 1 - i)) != 0 { 1 } else { -1 })
            .collect();
        let pts: Vec<LatticePoint> = candidates
            .iter()
            .filter(|y| {
                y.coords()
                    .iter()
                    .zip(x.coords())
                    .zip(&signs)
                    .all(|((yi, xi), s)| s * (yi - xi) >= 0)
            })
            .cloned()
            .collect();
        if best.as_ref().is_none_or(|(n, _)| pts.len() > *n) {
            best = Some((pts.len(), pts));
        }
    }
    best.map(|(_, p)| p).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn p(c: &[i64]) -> LatticePoint {
        LatticePoint::from(c)
    }

    #[test]
    fn norms_of_three_four_vector() {
        assert_eq!(norm(&p(&[3, 4]), Norm::L2), 5.0);
        assert_eq!(norm(&p(&[3, -4]), Norm::L1), 7.0);
        assert_eq!(norm(&p(&[3, -4]), Norm::Linf), 4.0);
    }

    #[test]
    fn empty_point_rejected() {
        assert!(LatticePoint::new(vec![]).is_err());
    }

    #[test]
    fn shell_examples() {
        assert_eq!(shell(0, 1, Norm::L2), vec![p(&[0])]);
        assert_eq!(shell(1, 1, Norm::L2), vec![p(&[-1]), p(&[1])]);
        let s = shell(1, 2, Norm::L2);
        let expected: Vec<LatticePoint> = [
            [-1, -1],
            [-1, 0],
            [-1, 1],
            [0, -1],
            [0, 1],
            [1, -1],
            [1, 0],
            [1, 1],
        ]
        .iter()
        .map(|c| p(c))
        .collect();
        assert_eq!(s, expected);
    }

    #[test]
    fn shells_partition_the_ball() {
        for d in 1..=3usize {
            for p_norm in [Norm::L1, Norm::L2, Norm::Linf] {
                let big_n: u64 = if d == 3 { 8 } else { 20 };
                let mut union = BTreeSet::new();
                let mut total = 0;
                for n in 0..=big_n {
                    let s = shell(n, d, p_norm);
                    total += s.len();
                    union.extend(s);
                }
                assert_eq!(total, union.len(), "shells overlap");
                let ball: BTreeSet<_> = cube_points(&LatticePoint::origin(d), big_n + 1)
                    .into_iter()
                    .filter(|x| {
                        let k = norm_key(x, p_norm);
                        match p_norm {
                            Norm::L2 => k < (big_n + 1) * (big_n + 1),
                            _ => k < big_n + 1,
                        }
                    })
                    .collect();
                assert_eq!(union, ball);
            }
        }
    }

    #[test]
    fn shell_growth_ratio_bounded() {
        // K_n / n^{d-1} over n in [4, 64], constants frozen from a direct scan.
        for (d, lo, hi) in [(2usize, 5.5, 8.5), (3, 12.0, 17.0)] {
            let n_max = if d == 3 { 40 } else { 64 };
            for n in 4..=n_max {
                let k = shell(n, d, Norm::L2).len() as f64;
                let ratio = k / (n as f64).powi(d as i32 - 1);
                assert!(ratio >= lo && ratio <= hi, "d={d} n={n} ratio={ratio}");
            }
        }
    }

    #[test]
    fn ball_cardinality() {
        let b = Ball::cube(p(&[1, -2, 0]), 2);
        assert_eq!(b.points().len(), 125);
        assert_eq!(b.len(), 125);
        assert!(b.contains(&p(&[3, 0, -2])));
        assert!(!b.contains(&p(&[4, 0, 0])));
    }

    #[test]
    fn plateau_min_index_scan() {
        // kappa = 1.5, L = 1: floor((n+1)^1.5) - floor(n^1.5) >= 3 first at n = 2
        // (r = 0, 1, 2, 5, 8, ...).
        let brute = (0u64..)
            .find(|&n| {
                let a = ((n + 1) as f64).powf(1.5).floor() as u64;
                let b = (n as f64).powf(1.5).floor() as u64;
                a - b >= 3
            })
            .unwrap();
        assert_eq!(plateau_min_index(1, 1.5).unwrap(), brute);
        assert_eq!(brute, 2);
    }

    #[test]
    fn plateau_sources_pass_cover_check() {
        let pts = staircase_plateau_sources(1, 5, 2.0, 2).unwrap();
        assert!(!pts.is_empty());
        let cube = cube_points(&LatticePoint::origin(2), 1);
        for x in &pts {
            for y in &cube {
                let k = norm_key(&x.sub(y), Norm::L2);
                assert!((25 * 25..36 * 36).contains(&k), "{x} {y}");
            }
        }
    }

    #[test]
    fn plateau_too_thin() {
        assert!(matches!(
            staircase_plateau_sources(10, 2, 2.0, 2),
            Err(Error::EmptyPlateau { .. })
        ));
    }

    #[test]
    fn maxnorm_layer_examples() {
        let u = LatticePoint::origin(2);
        let layer = maxnorm_layer(2, 1, &u).unwrap();
        assert_eq!(layer, vec![p(&[2, -1]), p(&[2, 0]), p(&[2, 1])]);
        assert!(matches!(maxnorm_layer(1, 1, &u), Err(Error::BadRadius { .. })));
        for r in 2..8u64 {
            let l = maxnorm_layer(r, 1, &u).unwrap();
            assert_eq!(l.len() as u64, 2 * (r - 1) + 1);
        }
    }

    #[test]
    fn sector_layer_satisfies_sector_condition() {
        for radius in 0..=2u64 {
            let u = p(&[1, -1]);
            let cube = Ball::cube(u.clone(), radius).points();
            for r in (2 * radius).max(1)..=8 {
                for x in sector_layer(r, radius, &u).unwrap() {
                    for y in &cube {
                        let dx = x.coords()[0] - y.coords()[0];
                        let dp = (x.coords()[1] - y.coords()[1]).abs();
                        assert!(dp <= dx);
                    }
                }
            }
        }
    }

    #[test]
    fn octant_window_examples() {
        let ball = Ball::cube(p(&[0]), 4);
        let w = octant_window(&p(&[4]), &ball, 4);
        assert_eq!(w, vec![p(&[0]), p(&[1]), p(&[2]), p(&[3]), p(&[4])]);

        // At the center every orthant ties; the all-negative one is chosen.
        let ball2 = Ball::cube(p(&[0, 0]), 3);
        let w = octant_window(&p(&[0, 0]), &ball2, 2);
        assert!(w.iter().all(|y| y.coords().iter().all(|&c| c <= 0)));
        assert_eq!(w.len(), 9);
    }

    #[test]
    fn octant_window_overlap_lower_bound() {
        for r in 1..=6u64 {
            let ball = Ball::cube(LatticePoint::origin(2), r);
            let need = ((r / 2 + 1) as usize).pow(2);
            for x in ball.points() {
                let w = octant_window(&x, &ball, r);
                assert!(w.len() >= need, "x={x} R={r} got {}", w.len());
            }
        }
    }

    #[test]
    fn isqrt_exact() {
        for n in 0..10_000u64 {
            let r = isqrt(n);
            assert!(r * r <= n && (r + 1) * (r + 1) > n);
        }
    }
}
