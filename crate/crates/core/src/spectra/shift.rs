use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::alloy::{factorize_maxnorm, factorize_sumnorm, restricted_potential};
use crate::disorder::Configuration;
use crate::error::{invalid, Error, Result};
use crate::kernels::{InteractionKernel, KernelKind};
use crate::lattice::{staircase_plateau_sources, Ball, LatticePoint, Norm};

use super::hamiltonian::{laplacian, symmetric_spectrum, with_potential, Spectrum};

/// H = base + eta diag(profile), where eta = g sum_x w_x omega_x collects the
/// sources whose potential factorizes over the box.
#[derive(Clone, Debug, Serialize)]
pub struct ScalarShiftDecomp {
    pub ball: Ball,
    pub points: Vec<LatticePoint>,
    #[serde(skip)]
    pub base: DMatrix<f64>,
    pub g: f64,
    pub eta: f64,
    pub profile: Vec<f64>,
    pub sources: Vec<LatticePoint>,
    pub weights: Vec<f64>,
}

impl ScalarShiftDecomp {
    pub fn matrix_at(&self, eta: f64) -> DMatrix<f64> {
        let mut m = self.base.clone();
        for (i, u) in self.profile.iter().enumerate() {
            m[(i, i)] += eta * u;
        }
        m
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        self.matrix_at(self.eta)
    }

    pub fn spectrum_at(&self, eta: f64) -> Result<Spectrum> {
        symmetric_spectrum(&self.matrix_at(eta))
    }

    /// eta for another configuration on the same sources.
    pub fn eta_of(&self, c: &Configuration) -> f64 {
        self.g * self.sources.iter().zip(&self.weights).map(|(x, w)| w * c.get(x)).sum::<f64>()
    }

    pub fn min_profile(&self) -> f64 {
        self.profile.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Forward differences (lambda_j(eta + h) - lambda_j(eta)) / h for every j.
    pub fn derivative(&self, eta: f64, h: f64) -> Result<Vec<f64>> {
        let a = self.spectrum_at(eta)?;
        let b = self.spectrum_at(eta + h)?;
        Ok(a.eigenvalues.iter().zip(&b.eigenvalues).map(|(x, y)| (y - x) / h).collect())
    }
}

fn base_without(
    k: &InteractionKernel,
    ball: &Ball,
    g: f64,
    config: &Configuration,
    sources: &BTreeSet<LatticePoint>,
) -> (Vec<LatticePoint>, DMatrix<f64>) {
    let rest = config.map_values(|x, v| if sources.contains(x) { 0.0 } else { v });
    let v = restricted_potential(k, &rest, ball);
    let base = with_potential(&laplacian(&v.points), g, &v.values);
    (v.points, base)
}

/// Staircase decomposition around a max-norm box: the plateau sources of the
/// shells in `n_range` see every box site at the same distance class, so their
/// total potential is a scalar shift.
pub fn staircase_shift(
    k: &InteractionKernel,
    ball: &Ball,
    g: f64,
    config: &Configuration,
    n_range: RangeInclusive<u64>,
) -> Result<ScalarShiftDecomp> {
    let KernelKind::Staircase { kappa, .. } = k.kind else {
        return Err(invalid("staircase_shift needs a staircase kernel"));
    };
    if ball.norm != Norm::Linf {
        return Err(Error::ShapeMismatch("scalar shifts are defined on max-norm boxes".into()));
    }
    let mut sources = BTreeSet::new();
    for n in n_range {
        for x in staircase_plateau_sources(ball.radius, n, kappa, ball.dim())? {
            sources.insert(x.add(&ball.center));
        }
    }
    let sources: BTreeSet<LatticePoint> = sources.into_iter().filter(|x| config.contains(x)).collect();
    let (points, base) = base_without(k, ball, g, config, &sources);
    let weights: Vec<f64> = sources.iter().map(|x| k.amplitude(&x.sub(&ball.center))).collect();
    let sources: Vec<LatticePoint> = sources.into_iter().collect();
    let mut d = ScalarShiftDecomp {
        profile: vec![1.0; points.len()],
        ball: ball.clone(),
        points,
        base,
        g,
        eta: 0.0,
        sources,
        weights,
    };
    d.eta = d.eta_of(config);
    Ok(d)
}

/// Exponential decomposition with profile U_B from the sum-norm (p = 1) or
/// max-norm (p = inf) factorization of the given sources.
pub fn exp_shift(
    k: &InteractionKernel,
    ball: &Ball,
    g: f64,
    config: &Configuration,
    sources: &[LatticePoint],
) -> Result<ScalarShiftDecomp> {
    let KernelKind::Exponential { a, p } = k.kind else {
        return Err(Error::FactorizationDomainViolation("exp_shift needs an exponential kernel".into()));
    };
    if ball.norm != Norm::Linf {
        return Err(Error::ShapeMismatch("scalar shifts are defined on max-norm boxes".into()));
    }
    let wrap = |e: Error| Error::FactorizationDomainViolation(e.to_string());
    let f = match p {
        Norm::L1 => factorize_sumnorm(a, &ball.points(), sources).map_err(wrap)?,
        Norm::Linf => factorize_maxnorm(a, ball, sources).map_err(wrap)?,
        Norm::L2 => {
            return Err(Error::FactorizationDomainViolation(
                "the Euclidean exponential kernel does not factorize".into(),
            ))
        }
    };
    let set: BTreeSet<LatticePoint> = f.sources.iter().cloned().collect();
    if set.len() != f.sources.len() {
        return Err(invalid("duplicate factorized sources"));
    }
    let (points, base) = base_without(k, ball, g, config, &set);
    let mut d = ScalarShiftDecomp {
        ball: ball.clone(),
        points,
        base,
        g,
        eta: 0.0,
        profile: f.profile,
        sources: f.sources,
        weights: f.weights,
    };
    d.eta = d.eta_of(config);
    Ok(d)
}
