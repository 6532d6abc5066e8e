use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloy::AlloyTransform;
use crate::disorder::{point_uniform, Marginal};
use crate::error::{invalid, Error, Result};
use crate::kernels::{InteractionKernel, KernelKind};
use crate::lattice::{cube_points, octant_window, sector_layer, staircase_plateau_sources, Ball, LatticePoint, Norm};
use crate::stats::{wilson, Histogram, Proportion};

use super::hamiltonian::{laplacian, symmetric_spectrum, with_potential, Spectrum};
use super::{log_log_slope, sub_seed, Estimate, ExperimentKind, ExperimentResult, NamedHistogram};

const FROZEN_TAG: u64 = 0xF0;
const SECOND_BATH_TAG: u64 = 0xF1;

/// Where the live randomness sits relative to the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Bath {
    /// Every source in the max-norm cube of this radius around the box center.
    Cube { radius: u64 },
    /// Union of the sector layers at offsets r_min..=r_max along the first axis.
    SectorLayers { r_min: u64, r_max: u64 },
    /// Staircase plateau sources of shells n_min..=n_max.
    Plateau { n_min: u64, n_max: u64 },
}

impl Bath {
    pub fn sources(&self, k: &InteractionKernel, ball: &Ball) -> Result<Vec<LatticePoint>> {
        let mut out = BTreeSet::new();
        match *self {
            Bath::Cube { radius } => out.extend(cube_points(&ball.center, radius)),
            Bath::SectorLayers { r_min, r_max } => {
                for r in r_min..=r_max {
                    out.extend(sector_layer(r, ball.radius, &ball.center)?);
                }
            }
            Bath::Plateau { n_min, n_max } => {
                let KernelKind::Staircase { kappa, .. } = k.kind else {
                    return Err(invalid("a plateau bath needs a staircase kernel"));
                };
                for n in n_min..=n_max {
                    for x in staircase_plateau_sources(ball.radius, n, kappa, ball.dim())? {
                        out.insert(x.add(&ball.center));
                    }
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Max-norm extent of the bath around the box center.
    fn extent(sources: &[LatticePoint], center: &LatticePoint) -> u64 {
        sources
            .iter()
            .map(|x| crate::lattice::norm_key(&x.sub(center), Norm::Linf))
            .max()
            .unwrap_or(0)
    }
}

fn draw(m: &Marginal, sources: &[LatticePoint], seed: u64, trial: u64) -> Vec<f64> {
    sources.iter().map(|x| m.quantile(point_uniform(seed, trial, x))).collect()
}

fn add_into(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Live sources plus a frozen exterior sampled independently for each bath.
struct Environment {
    lap: DMatrix<f64>,
    live: AlloyTransform,
    frozen: Vec<Vec<f64>>,
    tail_error: f64,
}

impl Environment {
    fn new(
        k: &InteractionKernel,
        m: &Marginal,
        ball: &Ball,
        live: Vec<LatticePoint>,
        truncation: u64,
        baths: u32,
        seed: u64,
    ) -> Result<Self> {
        let points = ball.points();
        let extent = Bath::extent(&live, &ball.center);
        if extent > truncation || truncation < ball.radius {
            return Err(Error::WindowTooSmall {
                radius: truncation,
                center: ball.center.to_string(),
            });
        }
        let set: BTreeSet<&LatticePoint> = live.iter().collect();
        let exterior: Vec<LatticePoint> = cube_points(&ball.center, truncation)
            .into_iter()
            .filter(|x| !set.contains(x))
            .collect();
        let ext = AlloyTransform::new(k, points.clone(), exterior);
        let frozen_seed = sub_seed(seed, FROZEN_TAG);
        let frozen = (0..baths.max(1) as u64)
            .map(|b| ext.apply(&draw(m, &ext.sources, frozen_seed, b)))
            .collect();
        let (lo, hi) = m.support();
        Ok(Environment {
            lap: laplacian(&points),
            live: AlloyTransform::new(k, points, live),
            frozen,
            tail_error: k.tail_sum_bound(truncation - ball.radius) * lo.abs().max(hi.abs()),
        })
    }

    fn potential(&self, m: &Marginal, bath: usize, seed: u64, trial: u64) -> Vec<f64> {
        let mut v = self.live.apply(&draw(m, &self.live.sources, seed, trial));
        add_into(&mut v, &self.frozen[bath]);
        v
    }

    fn spectrum(&self, g: f64, v: &[f64]) -> Result<Spectrum> {
        symmetric_spectrum(&with_potential(&self.lap, g, v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WegnerParams {
    pub kernel: InteractionKernel,
    pub marginal: Marginal,
    pub radius: u64,
    pub g: f64,
    pub eps_grid: Vec<f64>,
    /// Empty means one energy at the median of a reference spectrum.
    pub energies: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub bath: Bath,
    /// Sources outside the bath up to this max-norm radius are frozen.
    pub truncation: u64,
    pub baths: u32,
    /// Exponent tau in the power-law validity floor eps >= L^{-A tau}.
    pub tau: f64,
    /// Eigenvalue index for the per-eigenvalue variant (default: middle).
    pub eigen_index: Option<usize>,
}

/// Smallest admissible interval half-width: L^{-A tau} for power-law kernels and
/// e^{-10 a L} for exponential ones (no floor when L = 0).
pub fn eps_floor(k: &InteractionKernel, radius: u64, tau: f64) -> f64 {
    if radius == 0 {
        return 0.0;
    }
    let l = radius as f64;
    match k.kind {
        KernelKind::Polynomial { a_exp } | KernelKind::Staircase { a_exp, .. } => l.powf(-a_exp * tau),
        KernelKind::Exponential { a, .. } | KernelKind::SubExponential { a, .. } => (-10.0 * a * l).exp(),
    }
}

/// Bath index, per-energy (distance to spectrum, distance to lambda_j), eigen residual.
type TrialRow = (usize, Vec<(f64, f64)>, f64);

pub fn wegner_experiment(p: &WegnerParams) -> Result<ExperimentResult> {
    p.marginal.validate()?;
    if p.eps_grid.is_empty() || p.trials == 0 {
        return Err(invalid("wegner needs a nonempty eps grid and at least one trial"));
    }
    let floor = eps_floor(&p.kernel, p.radius, p.tau);
    if let Some(e) = p.eps_grid.iter().find(|&&e| !(e >= floor) || !(e > 0.0)) {
        return Err(Error::Precondition(format!(
            "eps = {e} is below the validity floor {floor:.6e}"
        )));
    }
    let ball = Ball::cube(LatticePoint::origin(p.kernel.dim), p.radius);
    let live = p.bath.sources(&p.kernel, &ball)?;
    let baths = p.baths.max(1);
    let env = Environment::new(&p.kernel, &p.marginal, &ball, live, p.truncation, baths, p.seed)?;
    let n = ball.len();
    let j = p.eigen_index.unwrap_or(n / 2).min(n - 1);

    let energies = if p.energies.is_empty() {
        let mean = p.marginal.mean();
        let mut v = env.live.apply(&vec![mean; env.live.sources.len()]);
        add_into(&mut v, &env.frozen[0]);
        let s = env.spectrum(p.g, &v)?;
        vec![s.eigenvalues[n / 2]]
    } else {
        p.energies.clone()
    };

    // Per trial: distance to the spectrum and to lambda_j for each energy.
    let rows: Vec<TrialRow> = (0..p.trials)
        .into_par_iter()
        .map(|t| {
            let b = (t % baths as u64) as usize;
            let v = env.potential(&p.marginal, b, p.seed, t);
            let s = env.spectrum(p.g, &v)?;
            let d = energies.iter().map(|&e| (s.dist(e), (s.eigenvalues[j] - e).abs())).collect();
            Ok((b, d, s.residual))
        })
        .collect::<Result<_>>()?;

    let mut res = ExperimentResult::new(ExperimentKind::Wegner, p, p.seed, p.trials);
    for (ei, &e) in energies.iter().enumerate() {
        let mut pooled = Vec::new();
        for &eps in &p.eps_grid {
            let hits = rows.iter().filter(|r| r.1[ei].0 <= eps).count() as u64;
            let hits_j = rows.iter().filter(|r| r.1[ei].1 <= eps).count() as u64;
            let prop = wilson(hits, p.trials);
            pooled.push(prop);
            res.estimates.push(Estimate {
                label: "pooled".into(),
                x: eps,
                energy: Some(e),
                prob: prop,
            });
            res.estimates.push(Estimate {
                label: format!("eigenvalue_{j}"),
                x: eps,
                energy: Some(e),
                prob: wilson(hits_j, p.trials),
            });
            let per_bath: Vec<Proportion> = (0..baths as usize)
                .map(|b| {
                    let mine = rows.iter().filter(|r| r.0 == b);
                    let total = mine.clone().count() as u64;
                    wilson(mine.filter(|r| r.1[ei].0 <= eps).count() as u64, total)
                })
                .collect();
            let worst = per_bath
                .into_iter()
                .max_by(|a, b| a.estimate.total_cmp(&b.estimate))
                .expect("at least one bath");
            res.estimates.push(Estimate {
                label: "bath_max".into(),
                x: eps,
                energy: Some(e),
                prob: worst,
            });
        }
        if let Some(s) = log_log_slope(&format!("E={}", crate::harness::fmt_float(e)), &p.eps_grid, &pooled) {
            res.slopes.push(s);
        }
    }
    res.meta("energies", &energies);
    res.meta("eps_floor", floor);
    res.meta("live_sources", env.live.sources.len());
    res.meta("frozen_tail_error", env.tail_error);
    res.meta("baths", baths);
    res.meta("max_residual", rows.iter().map(|r| r.2).fold(0.0, f64::max));
    if let KernelKind::Staircase { kappa, .. } = p.kernel.kind {
        res.meta("plateau_margin_inner", crate::lattice::PLATEAU_MARGIN);
        res.meta("plateau_margin_outer", crate::lattice::PLATEAU_MARGIN);
        res.meta("plateau_min_index", crate::lattice::plateau_min_index(p.radius, kappa)?);
    }
    Ok(res)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsParams {
    pub kernel: InteractionKernel,
    pub marginal: Marginal,
    pub radius: u64,
    pub g: f64,
    pub trials: u64,
    pub bins: usize,
    pub seed: u64,
    /// All sources in the cube of this radius are random.
    pub truncation: u64,
}

pub fn ids_histogram(p: &IdsParams) -> Result<ExperimentResult> {
    p.marginal.validate()?;
    if p.trials == 0 || p.bins == 0 {
        return Err(invalid("ids needs at least one trial and one bin"));
    }
    let ball = Ball::cube(LatticePoint::origin(p.kernel.dim), p.radius);
    let live = cube_points(&ball.center, p.truncation.max(p.radius));
    let env = Environment::new(&p.kernel, &p.marginal, &ball, live, p.truncation.max(p.radius), 1, p.seed)?;
    let spectra: Vec<Spectrum> = (0..p.trials)
        .into_par_iter()
        .map(|t| env.spectrum(p.g, &env.potential(&p.marginal, 0, p.seed, t)))
        .collect::<Result<_>>()?;
    let all = spectra.iter().flat_map(|s| s.eigenvalues.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let mut pooled = Histogram::new(lo, hi, p.bins);
    let n = ball.len();
    let mut per: Vec<Histogram> = (0..n).map(|_| Histogram::new(lo, hi, p.bins)).collect();
    for s in &spectra {
        for (j, &l) in s.eigenvalues.iter().enumerate() {
            pooled.add(l);
            per[j].add(l);
        }
    }
    let mut res = ExperimentResult::new(ExperimentKind::Ids, p, p.seed, p.trials);
    res.histograms.push(NamedHistogram {
        label: "pooled".into(),
        hist: pooled,
    });
    for (j, h) in per.into_iter().enumerate() {
        res.histograms.push(NamedHistogram {
            label: format!("eigenvalue_{j}"),
            hist: h,
        });
    }
    res.meta("truncation_tail_error", env.tail_error);
    res.meta("max_residual", spectra.iter().map(|s| s.residual).fold(0.0, f64::max));
    Ok(res)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvCompareParams {
    pub kernel: InteractionKernel,
    pub marginal: Marginal,
    pub radius: u64,
    pub g: f64,
    pub center_a: Vec<i64>,
    pub center_b: Vec<i64>,
    /// Required separation |u' - u''| >= c L.
    pub min_separation: f64,
    pub eps_grid: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    /// Random sources fill the bounding box of both cubes widened by this margin.
    pub margin: u64,
    /// Distances |x_k - u'| for the sensitivity report (power-law kernels).
    pub sensitivity_distances: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub distance: f64,
    /// fu(|x_k - u'|) - fu(|x_k - u''|)
    pub y: f64,
    /// A s^{-(A+1)} |u' - u''|
    pub predicted: f64,
}

/// Sensitivity of sites on the line through u' and u'', on the far side of u'.
pub fn polynomial_sensitivity(k: &InteractionKernel, separation: f64, distances: &[f64]) -> Result<Vec<Sensitivity>> {
    let a_exp = match k.kind {
        KernelKind::Polynomial { a_exp } | KernelKind::Staircase { a_exp, .. } => a_exp,
        _ => return Err(invalid("sensitivity differences are defined for power-law kernels")),
    };
    Ok(distances
        .iter()
        .map(|&s| Sensitivity {
            distance: s,
            y: k.profile(s) - k.profile(s + separation),
            predicted: a_exp * s.powf(-(a_exp + 1.0)) * separation,
        })
        .collect())
}

pub fn ev_comparison(p: &EvCompareParams) -> Result<ExperimentResult> {
    p.marginal.validate()?;
    let d = p.kernel.dim;
    if p.center_a.len() != d || p.center_b.len() != d {
        return Err(Error::ShapeMismatch(format!("box centers must have {d} coordinates")));
    }
    let ua = LatticePoint::new(p.center_a.clone())?;
    let ub = LatticePoint::new(p.center_b.clone())?;
    let separation = crate::lattice::norm(&ua.sub(&ub), Norm::L2);
    let required = p.min_separation * p.radius as f64;
    if separation < required {
        return Err(Error::TooClose { separation, required });
    }
    let ball_a = Ball::cube(ua.clone(), p.radius);
    let ball_b = Ball::cube(ub.clone(), p.radius);
    let r = (p.radius + p.margin) as i64;
    let lo: Vec<i64> = ua.coords().iter().zip(ub.coords()).map(|(a, b)| a.min(b) - r).collect();
    let hi: Vec<i64> = ua.coords().iter().zip(ub.coords()).map(|(a, b)| a.max(b) + r).collect();
    let sources = crate::lattice::box_points(&lo, &hi);
    let ta = AlloyTransform::new(&p.kernel, ball_a.points(), sources.clone());
    let tb = AlloyTransform::new(&p.kernel, ball_b.points(), sources);
    let (lap_a, lap_b) = (laplacian(&ta.points), laplacian(&tb.points));
    let rows: Vec<(f64, f64)> = (0..p.trials)
        .into_par_iter()
        .map(|t| {
            let w = draw(&p.marginal, &ta.sources, p.seed, t);
            let sa = symmetric_spectrum(&with_potential(&lap_a, p.g, &ta.apply(&w)))?;
            let sb = symmetric_spectrum(&with_potential(&lap_b, p.g, &tb.apply(&w)))?;
            let dist = sa.eigenvalues.iter().map(|&l| sb.dist(l)).fold(f64::INFINITY, f64::min);
            Ok((dist, sa.residual.max(sb.residual)))
        })
        .collect::<Result<_>>()?;
    let mut res = ExperimentResult::new(ExperimentKind::EvComparison, p, p.seed, p.trials);
    let mut props = Vec::new();
    for &eps in &p.eps_grid {
        let prop = wilson(rows.iter().filter(|r| r.0 <= eps).count() as u64, p.trials);
        props.push(prop);
        res.estimates.push(Estimate {
            label: "pooled".into(),
            x: eps,
            energy: None,
            prob: prop,
        });
    }
    if let Some(s) = log_log_slope("eps", &p.eps_grid, &props) {
        res.slopes.push(s);
    }
    if matches!(p.kernel.kind, KernelKind::Polynomial { .. } | KernelKind::Staircase { .. })
        && !p.sensitivity_distances.is_empty()
    {
        res.meta("sensitivity", polynomial_sensitivity(&p.kernel, separation, &p.sensitivity_distances)?);
    }
    res.meta("separation", separation);
    res.meta("max_residual", rows.iter().map(|r| r.1).fold(0.0, f64::max));
    res.meta(
        "truncation_tail_error",
        p.kernel.tail_sum_bound(p.margin) * {
            let (l, h) = p.marginal.support();
            l.abs().max(h.abs())
        },
    );
    Ok(res)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IlsMode {
    LowEnergy,
    SmoothTails,
    StrongDisorderExp,
    StrongDisorderPoly,
}

impl std::str::FromStr for IlsMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low_energy" => Ok(IlsMode::LowEnergy),
            "smooth_tails" => Ok(IlsMode::SmoothTails),
            "strong_disorder_exp" => Ok(IlsMode::StrongDisorderExp),
            "strong_disorder_poly" => Ok(IlsMode::StrongDisorderPoly),
            other => Err(invalid(format!("unknown ILS mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlsParams {
    pub mode: IlsMode,
    pub kernel: InteractionKernel,
    pub marginal: Marginal,
    pub radius: u64,
    pub trials: u64,
    pub seed: u64,
    /// Low-energy threshold h L^{-q}.
    pub h: f64,
    pub q: f64,
    /// Outer radius of the live region for smooth_tails and the strong-disorder
    /// modes (default 2L, M L with M = ceil(2m/a), and ceil(L^tau) respectively).
    pub outer: Option<u64>,
    /// Strong-disorder rate m and coupling (default g_0).
    pub m: f64,
    pub g: Option<f64>,
    pub tau: f64,
    /// Energies for the supremum; empty means 41 points across the potential range.
    pub energies: Vec<f64>,
}

pub fn ils_experiment(p: &IlsParams) -> Result<ExperimentResult> {
    p.marginal.validate()?;
    if p.trials == 0 {
        return Err(invalid("ils needs at least one trial"));
    }
    match p.mode {
        IlsMode::LowEnergy | IlsMode::SmoothTails => ils_low_energy(p),
        IlsMode::StrongDisorderExp | IlsMode::StrongDisorderPoly => ils_strong(p),
    }
}

fn ils_low_energy(p: &IlsParams) -> Result<ExperimentResult> {
    let (lo, _) = p.marginal.support();
    if lo < 0.0 {
        return Err(Error::NegativityViolation(format!(
            "low-energy estimates need a marginal supported in [0, inf); support starts at {lo}"
        )));
    }
    let ball = Ball::cube(LatticePoint::origin(p.kernel.dim), p.radius);
    let points = ball.points();
    let outer = match p.mode {
        IlsMode::SmoothTails => p.outer.unwrap_or(2 * p.radius).max(p.radius),
        _ => p.radius,
    };
    let region = Ball::cube(ball.center.clone(), outer);
    let sources = region.points();
    // Per box site: the sources it sees, as (index into `sources`, fu).
    let windows: Vec<Vec<(usize, f64)>> = points
        .iter()
        .map(|x| {
            let seen = match p.mode {
                IlsMode::SmoothTails => octant_window(x, &region, outer),
                _ => sources.clone(),
            };
            seen.iter()
                .map(|y| {
                    let i = sources.binary_search(y).expect("window inside region");
                    (i, p.kernel.amplitude(&y.sub(x)))
                })
                .collect()
        })
        .collect();
    let threshold = p.h * (p.radius.max(1) as f64).powf(-p.q);
    let hits = (0..p.trials)
        .into_par_iter()
        .filter(|&t| {
            let w = draw(&p.marginal, &sources, p.seed, t);
            windows
                .iter()
                .any(|win| win.iter().map(|&(i, f)| f * w[i]).sum::<f64>() <= threshold)
        })
        .count() as u64;
    let mut res = ExperimentResult::new(ExperimentKind::Ils, p, p.seed, p.trials);
    res.estimates.push(Estimate {
        label: "min_potential_below".into(),
        x: threshold,
        energy: None,
        prob: wilson(hits, p.trials),
    });
    res.meta("threshold", threshold);
    res.meta("single_source_floor", p.kernel.profile(2.0 * p.radius.max(1) as f64 * (p.kernel.dim as f64).sqrt()));
    Ok(res)
}

fn ils_strong(p: &IlsParams) -> Result<ExperimentResult> {
    let l = p.radius.max(1);
    let lf = l as f64;
    let ball = Ball::cube(LatticePoint::origin(p.kernel.dim), p.radius);
    let (outer, g0) = match (p.mode, p.kernel.kind) {
        (IlsMode::StrongDisorderExp, KernelKind::Exponential { a, .. }) => {
            let mult = (2.0 * p.m / a).ceil().max(2.0) as u64;
            (p.outer.unwrap_or(mult * l), (2.0 * p.m * lf).exp())
        }
        (IlsMode::StrongDisorderPoly, KernelKind::Polynomial { .. }) => {
            let outer = p.outer.unwrap_or(lf.powf(p.tau).ceil() as u64);
            if outer <= p.radius {
                return Err(invalid("the live region must be larger than the box"));
            }
            (outer, (p.m * lf).exp() / p.kernel.tail_sum_bound(outer - p.radius))
        }
        _ => {
            return Err(invalid(
                "strong_disorder_exp needs an exponential kernel and strong_disorder_poly a polynomial one",
            ))
        }
    };
    if outer <= p.radius {
        return Err(invalid("the live region must be larger than the box"));
    }
    let g = p.g.unwrap_or(g0);
    if g.abs() < g0 {
        return Err(Error::Precondition(format!("|g| = {g} is below g_0 = {g0:.6e}")));
    }
    let (slo, shi) = p.marginal.support();
    let wmax = slo.abs().max(shi.abs());
    let zeta = p.kernel.tail_sum_bound(outer - p.radius) * wmax;
    let live = AlloyTransform::new(&p.kernel, ball.points(), cube_points(&ball.center, outer));
    // |g W - E| <= e^{mL} + |g| zeta covers every exterior configuration.
    let rel = (p.m * lf).exp() / g.abs() + zeta;
    let energies = if p.energies.is_empty() {
        let span = live.apply(&vec![wmax; live.sources.len()]).iter().fold(0.0, |a: f64, b| a.max(*b));
        crate::stats::lin_grid(-g * span, g * span, 41)
    } else {
        p.energies.clone()
    };
    let samples: Vec<Vec<f64>> = (0..p.trials)
        .into_par_iter()
        .map(|t| live.apply(&draw(&p.marginal, &live.sources, p.seed, t)))
        .collect();
    let mut res = ExperimentResult::new(ExperimentKind::Ils, p, p.seed, p.trials);
    let mut best: Option<Proportion> = None;
    for &e in &energies {
        let target = e / g;
        let hits = samples
            .iter()
            .filter(|w| w.iter().any(|v| (v - target).abs() <= rel))
            .count() as u64;
        let prop = wilson(hits, p.trials);
        if best.is_none_or(|b| prop.estimate > b.estimate) {
            best = Some(prop);
        }
        res.estimates.push(Estimate {
            label: "energy".into(),
            x: rel,
            energy: Some(e),
            prob: prop,
        });
    }
    res.estimates.push(Estimate {
        label: "sup".into(),
        x: rel,
        energy: None,
        prob: best.expect("nonempty energy grid"),
    });
    res.meta("g", g);
    res.meta("g0", g0);
    res.meta("outer_radius", outer);
    res.meta("exterior_bound", zeta);
    res.meta("relative_threshold", rel);
    Ok(res)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffParams {
    pub kernel: InteractionKernel,
    pub marginal: Marginal,
    pub radius: u64,
    pub g: f64,
    /// Live sources in the cube of this radius; the exterior lies between it and `outer`.
    pub inner: u64,
    pub outer: u64,
    pub trials: u64,
    pub seed: u64,
}

/// Min-max cut-off: replacing the exterior moves each eigenvalue by at most
/// |g| sup|V_ext - V_ext'|, and sup|V_ext| is bounded by tail_sum_bound(inner - L).
pub fn cutoff_check(p: &CutoffParams) -> Result<ExperimentResult> {
    p.marginal.validate()?;
    if p.inner < p.radius || p.outer <= p.inner {
        return Err(invalid("cut-off check needs L <= inner < outer"));
    }
    let ball = Ball::cube(LatticePoint::origin(p.kernel.dim), p.radius);
    let points = ball.points();
    let inner_set: BTreeSet<LatticePoint> = cube_points(&ball.center, p.inner).into_iter().collect();
    let exterior: Vec<LatticePoint> = cube_points(&ball.center, p.outer)
        .into_iter()
        .filter(|x| !inner_set.contains(x))
        .collect();
    let live = AlloyTransform::new(&p.kernel, points.clone(), inner_set.into_iter().collect());
    let ext = AlloyTransform::new(&p.kernel, points.clone(), exterior);
    let lap = laplacian(&points);
    let (slo, shi) = p.marginal.support();
    let bound = p.kernel.tail_sum_bound(p.inner - p.radius) * slo.abs().max(shi.abs());
    let second = sub_seed(p.seed, SECOND_BATH_TAG);
    // (sup|V_ext|, displacement vs no exterior, displacement vs independent exterior)
    let rows: Vec<(f64, f64, f64)> = (0..p.trials)
        .into_par_iter()
        .map(|t| {
            let v = live.apply(&draw(&p.marginal, &live.sources, p.seed, t));
            let e1 = ext.apply(&draw(&p.marginal, &ext.sources, p.seed, t));
            let e2 = ext.apply(&draw(&p.marginal, &ext.sources, second, t));
            let sup = e1.iter().chain(&e2).fold(0.0, |m: f64, x| m.max(x.abs()));
            let mut v1 = v.clone();
            add_into(&mut v1, &e1);
            let mut v2 = v.clone();
            add_into(&mut v2, &e2);
            let s0 = symmetric_spectrum(&with_potential(&lap, p.g, &v))?;
            let s1 = symmetric_spectrum(&with_potential(&lap, p.g, &v1))?;
            let s2 = symmetric_spectrum(&with_potential(&lap, p.g, &v2))?;
            let gap = |a: &Spectrum, b: &Spectrum| {
                a.eigenvalues.iter().zip(&b.eigenvalues).fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()))
            };
            Ok((sup, gap(&s1, &s0), gap(&s1, &s2)))
        })
        .collect::<Result<_>>()?;
    let mut res = ExperimentResult::new(ExperimentKind::Cutoff, p, p.seed, p.trials);
    let sup = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let d0 = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let d1 = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    res.meta("tail_bound", bound);
    res.meta("max_exterior_sup", sup);
    res.meta("max_shift_vs_empty", d0);
    res.meta("max_shift_vs_resampled", d1);
    res.meta("violations_sup", rows.iter().filter(|r| r.0 > bound).count());
    res.meta(
        "violations_shift",
        rows.iter()
            .filter(|r| r.1 > p.g.abs() * bound || r.2 > 2.0 * p.g.abs() * bound)
            .count(),
    );
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp1() -> InteractionKernel {
        InteractionKernel::exponential(1.0, Norm::L1, 1).unwrap()
    }

    #[test]
    fn identical_boxes_always_collide() {
        let p = EvCompareParams {
            kernel: exp1(),
            marginal: "uniform:lo=-1,hi=1".parse().unwrap(),
            radius: 1,
            g: 1.0,
            center_a: vec![0],
            center_b: vec![0],
            min_separation: 0.0,
            eps_grid: vec![0.0, 0.1],
            trials: 50,
            seed: 1,
            margin: 10,
            sensitivity_distances: vec![],
        };
        let r = ev_comparison(&p).unwrap();
        for e in &r.estimates {
            assert_eq!(e.prob.successes, 50);
        }
        let close = EvCompareParams {
            center_b: vec![3],
            min_separation: 4.0,
            ..p
        };
        assert!(matches!(ev_comparison(&close), Err(Error::TooClose { .. })));
    }

    #[test]
    fn sensitivity_arithmetic() {
        let k = InteractionKernel::polynomial(2.0, 1).unwrap();
        let s = polynomial_sensitivity(&k, 10.0, &[100.0]).unwrap();
        assert!((s[0].y - (1e-4 - 1.0 / 12100.0)).abs() < 1e-20);
        assert!((s[0].y - 1.736e-5).abs() < 1e-8);
    }

    #[test]
    fn wegner_monotone_in_eps() {
        let p = WegnerParams {
            kernel: exp1(),
            marginal: "uniform:lo=-1,hi=1".parse().unwrap(),
            radius: 1,
            g: 1.0,
            eps_grid: vec![0.01, 0.05, 0.2],
            energies: vec![2.0],
            trials: 400,
            seed: 3,
            bath: Bath::Cube { radius: 4 },
            truncation: 12,
            baths: 4,
            tau: 2.0,
            eigen_index: None,
        };
        let r = wegner_experiment(&p).unwrap();
        let pooled: Vec<u64> = r.estimates_labeled("pooled").map(|e| e.prob.successes).collect();
        assert!(pooled.windows(2).all(|w| w[0] <= w[1]));
        let low = WegnerParams {
            eps_grid: vec![1e-9],
            radius: 2,
            ..p
        };
        assert!(matches!(wegner_experiment(&low), Err(Error::Precondition(_))));
    }

    #[test]
    fn low_energy_needs_nonnegative_marginal() {
        let p = IlsParams {
            mode: IlsMode::LowEnergy,
            kernel: InteractionKernel::polynomial(2.0, 1).unwrap(),
            marginal: "bernoulli".parse().unwrap(),
            radius: 2,
            trials: 10,
            seed: 0,
            h: 1.0,
            q: 1.0,
            outer: None,
            m: 1.0,
            g: None,
            tau: 2.0,
            energies: vec![],
        };
        assert!(matches!(ils_experiment(&p), Err(Error::NegativityViolation(_))));
    }

    #[test]
    fn degenerate_support_is_deterministic() {
        let p = IlsParams {
            mode: IlsMode::LowEnergy,
            kernel: InteractionKernel::polynomial(2.0, 1).unwrap(),
            marginal: Marginal::bernoulli01(),
            radius: 2,
            trials: 30,
            seed: 0,
            h: 100.0,
            q: 1.0,
            outer: None,
            m: 1.0,
            g: None,
            tau: 2.0,
            energies: vec![],
        };
        assert_eq!(ils_experiment(&p).unwrap().estimates[0].prob.successes, 30);
        let p = IlsParams { h: -1.0, ..p };
        assert_eq!(ils_experiment(&p).unwrap().estimates[0].prob.successes, 0);
    }
}
