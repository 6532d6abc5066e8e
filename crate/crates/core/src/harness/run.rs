use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use num_complex::Complex64;

use crate::charfun::{
    decay_fit, default_fit_kind, invert_to_density, scaled_bernoulli_product, small_argument_threshold, viete,
    wiener_average, DecayModel, FitKind, ProductCharFun,
};
use crate::disorder::Marginal;
use crate::error::{invalid, Result};
use crate::kernels::{InteractionKernel, KernelKind, KernelSpec};
use crate::lattice::{Ball, LatticePoint};
use crate::spectra::{
    bernstein_check, ev_comparison, ids_histogram, ils_experiment, two_point_covariance, wegner_experiment, Bath,
    BernsteinParams, EvCompareParams, ExperimentKind, ExperimentResult, IdsParams, IlsMode, IlsParams, Series,
    TwoPointParams, WegnerParams,
};
use crate::stats::{lin_grid, linear_fit, log_grid};

use super::config::ExperimentConfig;

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TRIALS: u64 = 10_000;
/// Dense eigensolves stay at or below 15^3 sites.
const MAX_BOX_SITES: u64 = 15 * 15 * 15;
/// Cap on enumerated orthant points when building shell products.
const MAX_SHELL_POINTS: f64 = 5e7;

pub fn parse_kind(name: &str) -> Result<ExperimentKind> {
    Ok(match name {
        "wegner" => ExperimentKind::Wegner,
        "ids" => ExperimentKind::Ids,
        "evcompare" | "ev_comparison" => ExperimentKind::EvComparison,
        "ils" => ExperimentKind::Ils,
        "bernstein" => ExperimentKind::Bernstein,
        "twopoint" | "two_point" => ExperimentKind::TwoPoint,
        "viete" => ExperimentKind::Viete,
        "charfun" => ExperimentKind::Charfun,
        "density" => ExperimentKind::Density,
        "wiener" => ExperimentKind::Wiener,
        other => return Err(invalid(format!("unknown experiment kind '{other}'"))),
    })
}

struct Ctx<'a> {
    c: &'a ExperimentConfig,
    seed: u64,
    trials: u64,
}

impl Ctx<'_> {
    fn kernel(&self, default: &str, default_d: usize) -> Result<InteractionKernel> {
        let spec: KernelSpec = self.c.kernel.as_deref().unwrap_or(default).parse()?;
        spec.with_dim(self.c.d.unwrap_or(default_d))
    }

    fn marginal(&self, default: &str) -> Result<Marginal> {
        self.c.marginal.as_deref().unwrap_or(default).parse()
    }

    fn radius(&self, default: u64, d: usize) -> Result<u64> {
        let l = self.c.l.unwrap_or(default);
        let sites = (2 * l + 1).checked_pow(d as u32).unwrap_or(u64::MAX);
        if sites > MAX_BOX_SITES {
            return Err(invalid(format!(
                "box of radius L = {l} in d = {d} has {sites} sites; dense eigensolves are limited to {MAX_BOX_SITES}"
            )));
        }
        Ok(l)
    }
}

/// Runs the configured experiment. `kind` must be set.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let kind = parse_kind(cfg.kind.as_deref().ok_or_else(|| invalid("no experiment kind given"))?)?;
    let cfg = &cfg.canonical();
    let ctx = Ctx {
        c: cfg,
        seed: cfg.seed.unwrap_or(DEFAULT_SEED),
        trials: cfg.trials.unwrap_or(DEFAULT_TRIALS),
    };
    match kind {
        ExperimentKind::Viete => run_viete(&ctx),
        ExperimentKind::Charfun => run_charfun(&ctx),
        ExperimentKind::Density => run_density(&ctx),
        ExperimentKind::Wiener => run_wiener(&ctx),
        ExperimentKind::Wegner => run_wegner(&ctx),
        ExperimentKind::Ids => run_ids(&ctx),
        ExperimentKind::EvComparison => run_evcompare(&ctx),
        ExperimentKind::Ils => run_ils(&ctx),
        ExperimentKind::Bernstein => run_bernstein(&ctx),
        ExperimentKind::TwoPoint => run_twopoint(&ctx),
        ExperimentKind::Cutoff => Err(invalid("the cut-off check is available through the library only")),
    }
}

fn run_viete(ctx: &Ctx) -> Result<ExperimentResult> {
    let x = ctx.c.x.unwrap_or(FRAC_PI_2);
    let terms = ctx.c.terms.unwrap_or(40);
    if terms == 0 {
        return Err(invalid("viete needs at least one term"));
    }
    let limit = if x == 0.0 { 1.0 } else { x.sin() / x };
    let ks: Vec<f64> = (1..=terms).map(f64::from).collect();
    let partial: Vec<f64> = (1..=terms).map(|k| viete(x, k)).collect();
    let value = partial[partial.len() - 1];
    let mut res = ExperimentResult::new(ExperimentKind::Viete, &serde_json::json!({"x": x, "terms": terms}), ctx.seed, 0);
    res.series.push(Series {
        label: "data".into(),
        x: ks.clone(),
        y: partial,
    });
    res.series.push(Series {
        label: "fit".into(),
        y: vec![limit; ks.len()],
        x: ks,
    });
    res.meta("value", value);
    res.meta("limit", limit);
    res.meta("abs_error", (value - limit).abs());
    Ok(res)
}

/// Shell count N for a decay fit up to t_max: the small-argument condition a_N t_max <= s0
/// plus headroom so the neglected shells barely move the fitted tail.
pub fn fit_shell_count(k: &InteractionKernel, m: &Marginal, t_max: f64) -> u64 {
    let s0 = small_argument_threshold(m);
    let mut n0 = 1u64;
    while k.profile(n0 as f64) * t_max > s0 && n0 < 1 << 20 {
        n0 += 1.max(n0 / 8);
    }
    let n = match k.kind {
        KernelKind::Polynomial { .. } | KernelKind::Staircase { .. } => (4 * n0).max(60),
        _ => 2 * n0 + 10,
    };
    let cap = (MAX_SHELL_POINTS.powf(1.0 / k.dim as f64) as u64).saturating_sub(2).max(1);
    n.min(cap)
}

fn run_charfun(ctx: &Ctx) -> Result<ExperimentResult> {
    let k = ctx.kernel("poly:A=4", 2)?;
    let m = ctx.marginal("bernoulli")?;
    let t_min = ctx.c.t_min.unwrap_or(1e2);
    let t_max = ctx.c.t_max.unwrap_or(1e5);
    let points = ctx.c.points.unwrap_or(40);
    if !(t_min > 1.0 && t_max > t_min) || points < 3 {
        return Err(invalid("charfun needs 1 < t_min < t_max and at least 3 grid points"));
    }
    let shell_min = ctx.c.shell_min.unwrap_or(1);
    let n = ctx.c.shells.unwrap_or_else(|| fit_shell_count(&k, &m, t_max));
    let p = ProductCharFun::from_kernel(&k, &m, shell_min, n)?;
    let grid = log_grid(t_min, t_max, points);
    let mut res = ExperimentResult::new(ExperimentKind::Charfun, ctx.c, ctx.seed, 0);
    res.meta("shells", [shell_min, n]);
    res.meta("factors", p.factors.len());
    res.series.push(Series {
        label: "modulus".into(),
        x: grid.clone(),
        y: grid.iter().map(|&t| p.modulus(t)).collect(),
    });
    if ctx.c.fit.unwrap_or(false) {
        let kind = default_fit_kind(&p);
        let fit = decay_fit(&p, &grid, kind)?;
        let (xs, ys): (Vec<f64>, Vec<f64>) = fit.samples.iter().map(|s| (s.0, s.2)).unzip();
        let fitted = xs
            .iter()
            .map(|&t| match fit.model {
                DecayModel::PowerOfT { kappa_hat, c_hat } => c_hat * t.powf(kappa_hat),
                DecayModel::PowerOfLogT { gamma_hat, c_hat } => c_hat * t.ln().powf(gamma_hat),
                DecayModel::Algebraic { alpha_hat, c_hat } => c_hat + alpha_hat * t.ln(),
            })
            .collect();
        res.series.push(Series {
            label: "data".into(),
            x: xs.clone(),
            y: ys,
        });
        res.series.push(Series {
            label: "fit".into(),
            x: xs,
            y: fitted,
        });
        if let Some(target) = fit_target(&k, kind) {
            res.meta("target_exponent", target);
        }
        res.meta("fit", &fit);
    }
    Ok(res)
}

/// Exponent the decay fit should approach: d/A for power laws, (d-1)/delta otherwise.
fn fit_target(k: &InteractionKernel, kind: FitKind) -> Option<f64> {
    let d = k.dim as f64;
    match (k.kind, kind) {
        (KernelKind::Polynomial { a_exp } | KernelKind::Staircase { a_exp, .. }, FitKind::PowerOfT) => Some(d / a_exp),
        (KernelKind::SubExponential { delta, .. }, FitKind::PowerOfLogT) => Some((d - 1.0) / delta),
        (KernelKind::Exponential { .. }, FitKind::PowerOfLogT) => Some(d - 1.0),
        _ => None,
    }
}

fn run_density(ctx: &Ctx) -> Result<ExperimentResult> {
    let k = ctx.kernel("poly:A=4", 2)?;
    let m = ctx.marginal("uniform:lo=-1,hi=1")?;
    let p = ProductCharFun::from_kernel(&k, &m, ctx.c.shell_min.unwrap_or(1), ctx.c.shells.unwrap_or(3))?;
    let (lo, hi) = p.range();
    let pad = 0.05 * (hi - lo).max(1e-9);
    let x_min = ctx.c.x_min.unwrap_or(lo - pad);
    let x_max = ctx.c.x_max.unwrap_or(hi + pad);
    let points = ctx.c.points.unwrap_or(201);
    if !(x_max > x_min) || points < 2 {
        return Err(invalid("density needs x_min < x_max and at least 2 grid points"));
    }
    let est = invert_to_density(&p, &lin_grid(x_min, x_max, points))?;
    let mut res = ExperimentResult::new(ExperimentKind::Density, ctx.c, ctx.seed, 0);
    res.series.push(Series {
        label: "data".into(),
        x: est.x.clone(),
        y: est.rho.clone(),
    });
    res.meta("t_cutoff", est.t_cutoff);
    res.meta("negativity_excess", est.negativity_excess);
    res.meta("grid_mass", est.grid_mass);
    res.meta("support", [lo, hi]);
    Ok(res)
}

fn run_wiener(ctx: &Ctx) -> Result<ExperimentResult> {
    let b = ctx.c.b.unwrap_or(2.0);
    let terms = ctx.c.terms.unwrap_or(40);
    let t_cap = ctx.c.t_cap.unwrap_or(1e3);
    let points = ctx.c.points.unwrap_or(12);
    if !(b > 1.0) || terms == 0 || !(t_cap > 10.0) || points < 2 {
        return Err(invalid("wiener needs b > 1, terms >= 1, T > 10 and at least 2 points"));
    }
    let phi = |t: f64| Complex64::new(scaled_bernoulli_product(b, t, terms), 0.0);
    let ts = log_grid(10.0, t_cap, points);
    let avg = ts.iter().map(|&t| wiener_average(phi, t)).collect::<Result<Vec<f64>>>()?;
    let mut res = ExperimentResult::new(ExperimentKind::Wiener, ctx.c, ctx.seed, 0);
    let (lx, ly): (Vec<f64>, Vec<f64>) = ts.iter().zip(&avg).map(|(t, a)| (t.ln(), a.ln())).unzip();
    if let Some(f) = linear_fit(&lx, &ly) {
        res.series.push(Series {
            label: "fit".into(),
            x: ts.clone(),
            y: ts.iter().map(|t| (f.intercept + f.slope * t.ln()).exp()).collect(),
        });
        res.meta("log_log_slope", f.slope);
    }
    res.meta("average", avg[avg.len() - 1]);
    res.meta("T", t_cap);
    res.series.insert(
        0,
        Series {
            label: "data".into(),
            x: ts,
            y: avg,
        },
    );
    Ok(res)
}

fn parse_bath(s: &str) -> Result<Bath> {
    let (head, rest) = s.split_once(':').unwrap_or((s, ""));
    let range = || -> Result<(u64, u64)> {
        let (a, b) = rest
            .split_once('-')
            .ok_or_else(|| invalid(format!("bath '{s}' needs a range lo-hi")))?;
        let p = |v: &str| v.trim().parse::<u64>().map_err(|_| invalid(format!("bath '{s}': bad integer '{v}'")));
        Ok((p(a)?, p(b)?))
    };
    Ok(match head {
        "cube" => Bath::Cube {
            radius: rest.trim().parse().map_err(|_| invalid(format!("bath '{s}' needs cube:R")))?,
        },
        "layers" => {
            let (r_min, r_max) = range()?;
            Bath::SectorLayers { r_min, r_max }
        }
        "plateau" => {
            let (n_min, n_max) = range()?;
            Bath::Plateau { n_min, n_max }
        }
        other => return Err(invalid(format!("unknown bath '{other}' (use cube:R, layers:R1-R2 or plateau:N1-N2)"))),
    })
}

/// Max-norm extent of a bath around the box center.
fn bath_extent(bath: &Bath, k: &InteractionKernel, radius: u64) -> Result<u64> {
    let ball = Ball::cube(LatticePoint::origin(k.dim), radius);
    Ok(bath
        .sources(k, &ball)?
        .iter()
        .flat_map(|x| x.coords().iter().map(|c| c.unsigned_abs()).collect::<Vec<_>>())
        .max()
        .unwrap_or(0))
}

/// Adds "data" (pooled estimates at the first energy) and "fit" series for plotting.
fn attach_slope_series(res: &mut ExperimentResult, slope_label: &str) {
    let energy = res.estimates_labeled("pooled").next().and_then(|e| e.energy);
    let pts: Vec<(f64, f64)> = res
        .estimates_labeled("pooled")
        .filter(|e| e.energy == energy)
        .map(|e| (e.x, e.prob.estimate))
        .collect();
    let Some(s) = res.slope(slope_label).cloned() else {
        return;
    };
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let fit = x.iter().map(|v| (s.intercept + s.slope * v.ln()).exp()).collect();
    res.series.push(Series {
        label: "data".into(),
        x: x.clone(),
        y,
    });
    res.series.push(Series {
        label: "fit".into(),
        x,
        y: fit,
    });
}

fn run_wegner(ctx: &Ctx) -> Result<ExperimentResult> {
    let k = ctx.kernel("stair:A=3,kappa=2", 2)?;
    let m = ctx.marginal("uniform:lo=-1,hi=1")?;
    let radius = ctx.radius(2, k.dim)?;
    let tau = ctx.c.tau.unwrap_or(2.0);
    if !(tau > 1.0) {
        return Err(invalid(format!("tau = {tau} must exceed 1")));
    }
    let floor = crate::spectra::eps_floor(&k, radius, tau);
    let eps_grid = match &ctx.c.eps {
        Some(e) => e.clone(),
        None => {
            let lo = floor.max(1e-3) * 1.05;
            log_grid(lo, 5.0 * lo, 6)
        }
    };
    let outer = (radius as f64).powf(tau).ceil() as u64;
    let bath = match &ctx.c.bath {
        Some(s) => parse_bath(s)?,
        None => match k.kind {
            KernelKind::Exponential { .. } => Bath::SectorLayers {
                r_min: 2 * radius.max(1),
                r_max: 10 * radius.max(1),
            },
            _ => Bath::Cube {
                radius: outer.max(radius + 1),
            },
        },
    };
    let truncation = match ctx.c.truncation {
        Some(t) => t,
        None => bath_extent(&bath, &k, radius)? + 20,
    };
    let p = WegnerParams {
        kernel: k,
        marginal: m,
        radius,
        g: ctx.c.g.unwrap_or(1.0),
        eps_grid,
        energies: ctx.c.energies.clone().unwrap_or_default(),
        trials: ctx.trials,
        seed: ctx.seed,
        bath,
        truncation,
        baths: ctx.c.baths.unwrap_or(8),
        tau,
        eigen_index: ctx.c.index,
    };
    let mut res = wegner_experiment(&p)?;
    if let Some(label) = res.slopes.first().map(|s| s.label.clone()) {
        attach_slope_series(&mut res, &label);
    }
    Ok(res)
}

fn run_ids(ctx: &Ctx) -> Result<ExperimentResult> {
    let k = ctx.kernel("poly:A=4", 2)?;
    let radius = ctx.radius(2, k.dim)?;
    let p = IdsParams {
        kernel: k,
        marginal: ctx.marginal("uniform:lo=-1,hi=1")?,
        radius,
        g: ctx.c.g.unwrap_or(1.0),
        trials: ctx.trials,
        bins: ctx.c.bins.unwrap_or(50),
        seed: ctx.seed,
        truncation: ctx.c.truncation.unwrap_or(radius + 10),
    };
    let mut res = ids_histogram(&p)?;
    if let Some(h) = res.histograms.iter().find(|h| h.label == "pooled").map(|h| h.hist.clone()) {
        let x = (0..h.bins())
            .map(|i| {
                let (a, b) = h.edges(i);
                0.5 * (a + b)
            })
            .collect();
        let y = h.densities();
        res.series.push(Series {
            label: "data".into(),
            x,
            y,
        });
    }
    Ok(res)
}

fn run_evcompare(ctx: &Ctx) -> Result<ExperimentResult> {
    let k = ctx.kernel("exp:a=1,p=1", 1)?;
    let radius = ctx.radius(2, k.dim)?;
    let c = ctx.c.min_separation.unwrap_or(4.0);
    let center_a = ctx.c.center_a.clone().unwrap_or_else(|| vec![0; k.dim]);
    let center_b = ctx.c.center_b.clone().unwrap_or_else(|| {
        let mut v = center_a.clone();
        v[0] += (2.0 * c * radius.max(1) as f64).ceil() as i64;
        v
    });
    let sensitivity_distances = match (&ctx.c.sensitivity, k.kind) {
        (Some(s), _) => s.clone(),
        (None, KernelKind::Polynomial { .. }) => vec![10.0, 20.0, 40.0, 80.0],
        _ => Vec::new(),
    };
    let p = EvCompareParams {
        kernel: k,
        marginal: ctx.marginal("uniform:lo=-1,hi=1")?,
        radius,
        g: ctx.c.g.unwrap_or(1.0),
        center_a,
        center_b,
        min_separation: c,
        eps_grid: ctx.c.eps.clone().unwrap_or_else(|| log_grid(0.002, 0.02, 6)),
        trials: ctx.trials,
        seed: ctx.seed,
        margin: ctx.c.margin.unwrap_or(30),
        sensitivity_distances,
    };
    let mut res = ev_comparison(&p)?;
    attach_slope_series(&mut res, "eps");
    Ok(res)
}

fn run_ils(ctx: &Ctx) -> Result<ExperimentResult> {
    let mode: IlsMode = ctx.c.mode.as_deref().unwrap_or("low_energy").parse()?;
    let (kdef, ddef, mdef) = match mode {
        IlsMode::LowEnergy | IlsMode::SmoothTails => ("poly:A=2", 1, "bernoulli01"),
        IlsMode::StrongDisorderExp => ("exp:a=1,p=1", 1, "uniform:lo=-1,hi=1"),
        IlsMode::StrongDisorderPoly => ("poly:A=2", 1, "uniform:lo=-1,hi=1"),
    };
    let k = ctx.kernel(kdef, ddef)?;
    let p = IlsParams {
        mode,
        kernel: k,
        marginal: ctx.marginal(mdef)?,
        radius: ctx.radius(4, k.dim)?,
        trials: ctx.trials,
        seed: ctx.seed,
        h: ctx.c.h.unwrap_or(1.0),
        q: ctx.c.q.unwrap_or(if mode == IlsMode::LowEnergy { 4.0 } else { 1.0 }),
        outer: ctx.c.outer,
        m: ctx.c.m.unwrap_or(0.5),
        g: ctx.c.g,
        tau: ctx.c.tau.unwrap_or(2.0),
        energies: ctx.c.energies.clone().unwrap_or_default(),
    };
    ils_experiment(&p)
}

fn run_bernstein(ctx: &Ctx) -> Result<ExperimentResult> {
    let k = ctx.kernel("poly:A=3", 1)?;
    let p = BernsteinParams {
        kernel: k,
        marginal: ctx.marginal("bernoulli")?,
        radius: ctx.radius(3, k.dim)?,
        g: ctx.c.g.unwrap_or(1.0),
        tau: ctx.c.tau.unwrap_or(1.5),
        theta: ctx.c.theta.unwrap_or(1.0),
        index: ctx.c.index,
        beta: ctx.c.beta.unwrap_or(0.25),
        c1: ctx.c.c1.unwrap_or(1.0),
        t_points: ctx.c.t_points.unwrap_or(40),
        trials: ctx.trials,
        seed: ctx.seed,
        truncation: ctx.c.truncation,
    };
    bernstein_check(&p)
}

fn run_twopoint(ctx: &Ctx) -> Result<ExperimentResult> {
    let p = TwoPointParams {
        a_exp: ctx.c.a_exp.unwrap_or(2.0),
        r: ctx.c.r.unwrap_or(100),
        rho: ctx.c.rho.unwrap_or(10),
        theta: ctx.c.theta.unwrap_or(FRAC_PI_4),
        trials: ctx.c.trials.unwrap_or(100_000),
        seed: ctx.seed,
    };
    two_point_covariance(&p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: &str) -> ExperimentConfig {
        ExperimentConfig {
            kind: Some(kind.into()),
            ..Default::default()
        }
    }

    #[test]
    fn viete_default() {
        let r = run(&cfg("viete")).unwrap();
        assert!((r.meta_f64("value").unwrap() - 2.0 / std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn kernel_precondition_names_condition() {
        let c = ExperimentConfig {
            kernel: Some("poly:A=2".into()),
            d: Some(2),
            ..cfg("charfun")
        };
        let e = run(&c).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("A > d"), "{e}");
    }

    #[test]
    fn bath_strings() {
        assert_eq!(parse_bath("cube:4").unwrap(), Bath::Cube { radius: 4 });
        assert_eq!(parse_bath("layers:4-20").unwrap(), Bath::SectorLayers { r_min: 4, r_max: 20 });
        assert_eq!(parse_bath("plateau:2-3").unwrap(), Bath::Plateau { n_min: 2, n_max: 3 });
        assert!(parse_bath("ring:3").is_err());
    }

    #[test]
    fn box_cap() {
        let c = ExperimentConfig {
            l: Some(8),
            d: Some(3),
            kernel: Some("poly:A=4".into()),
            ..cfg("ids")
        };
        assert_eq!(run(&c).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn shell_count_meets_small_argument_condition() {
        let m = Marginal::SymmetricBernoulli;
        for spec in ["poly:A=4", "poly:A=3", "exp:a=1,p=1"] {
            let k = spec.parse::<KernelSpec>().unwrap().with_dim(2).unwrap();
            let n = fit_shell_count(&k, &m, 1e5);
            let p = ProductCharFun::from_kernel(&k, &m, 1, n).unwrap();
            assert!(p.min_amp() * 1e5 <= small_argument_threshold(&m), "{spec}");
        }
    }
}
