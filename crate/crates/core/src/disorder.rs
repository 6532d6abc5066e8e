//! Source amplitude marginals, counter-based sampling, configurations and splits.

use std::collections::BTreeSet;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::LatticePoint;

/// Distribution of a single amplitude omega_x, supported in [-1, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    /// +-1 with probability 1/2 each.
    SymmetricBernoulli,
    /// v1 with probability p, v0 with probability 1 - p.
    AsymBernoulli { p: f64, v0: f64, v1: f64 },
    /// Uniform on [lo, hi]; `Marginal::uniform01()` is the unit interval.
    Uniform { lo: f64, hi: f64 },
    Discrete { atoms: Vec<f64>, weights: Vec<f64> },
}

const SUPPORT_SLACK: f64 = 1e-12;

impl Marginal {
    pub fn uniform01() -> Self {
        Marginal::Uniform { lo: 0.0, hi: 1.0 }
    }

    /// Bernoulli on {0, 1}.
    pub fn bernoulli01() -> Self {
        Marginal::AsymBernoulli {
            p: 0.5,
            v0: 0.0,
            v1: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_support = |v: f64| v.is_finite() && v.abs() <= 1.0 + SUPPORT_SLACK;
        match self {
            Marginal::SymmetricBernoulli => Ok(()),
            Marginal::AsymBernoulli { p, v0, v1 } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(invalid(format!("Bernoulli p = {p} must lie in (0, 1)")));
                }
                if !in_support(*v0) || !in_support(*v1) {
                    return Err(invalid("Bernoulli atoms must lie in [-1, 1]"));
                }
                if v0 == v1 {
                    return Err(invalid("Bernoulli atoms must differ (nondegenerate disorder)"));
                }
                Ok(())
            }
            Marginal::Uniform { lo, hi } => {
                if !in_support(*lo) || !in_support(*hi) || !(lo < hi) {
                    return Err(invalid(format!(
                        "uniform marginal needs -1 <= lo < hi <= 1 (got [{lo}, {hi}])"
                    )));
                }
                Ok(())
            }
            Marginal::Discrete { atoms, weights } => {
                if atoms.len() != weights.len() {
                    return Err(invalid("discrete marginal: atoms and weights differ in length"));
                }
                if atoms.iter().any(|a| !in_support(*a)) {
                    return Err(invalid("discrete marginal atoms must lie in [-1, 1]"));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(invalid("discrete marginal weights must be nonnegative"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("discrete weights sum to {total}, not 1")));
                }
                let distinct: BTreeSet<u64> = atoms
                    .iter()
                    .zip(weights)
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(a, _)| a.to_bits())
                    .collect();
                if distinct.len() < 2 {
                    return Err(invalid(
                        "discrete marginal needs at least two atoms with positive weight",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Atoms and weights for the discrete classes; `None` for the uniform law.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Marginal::SymmetricBernoulli => Some(vec![(-1.0, 0.5), (1.0, 0.5)]),
            Marginal::AsymBernoulli { p, v0, v1 } => Some(vec![(*v0, 1.0 - p), (*v1, *p)]),
            Marginal::Uniform { .. } => None,
            Marginal::Discrete { atoms, weights } => {
                Some(atoms.iter().copied().zip(weights.iter().copied()).collect())
            }
        }
    }

    /// E[|omega|^k] in closed form.
    pub fn abs_moment(&self, k: i32) -> f64 {
        match self {
            Marginal::Uniform { lo, hi } => {
                // Integral of |x|^k over [lo, hi], split at 0.
                let prim = |x: f64| x.signum() * x.abs().powi(k + 1) / (k + 1) as f64;
                (prim(*hi) - prim(*lo)) / (hi - lo)
            }
            _ => self
                .atoms()
                .unwrap()
                .iter()
                .map(|(a, w)| w * a.abs().powi(k))
                .sum(),
        }
    }

    /// (m2, m3) = (E|omega|^2, E|omega|^3).
    pub fn moments(&self) -> (f64, f64) {
        (self.abs_moment(2), self.abs_moment(3))
    }

    pub fn mean(&self) -> f64 {
        match self {
            Marginal::Uniform { lo, hi } => 0.5 * (lo + hi),
            _ => self.atoms().unwrap().iter().map(|(a, w)| a * w).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Marginal::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            _ => {
                let m = self.mean();
                self.atoms().unwrap().iter().map(|(a, w)| w * (a - m).powi(2)).sum()
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            Marginal::Uniform { lo, hi } => (*lo, *hi),
            _ => {
                let atoms = self.atoms().unwrap();
                let live = atoms.iter().filter(|(_, w)| *w > 0.0).map(|(a, _)| *a);
                let lo = live.clone().fold(f64::INFINITY, f64::min);
                let hi = live.fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            Marginal::SymmetricBernoulli => true,
            Marginal::Uniform { lo, hi } => lo == &-hi,
            _ => {
                let atoms = self.atoms().unwrap();
                atoms.iter().all(|(a, w)| {
                    let mirror: f64 = atoms.iter().filter(|(b, _)| *b == -a).map(|(_, v)| v).sum();
                    (mirror - w).abs() < 1e-12 || *w == 0.0 && mirror == 0.0
                })
            }
        }
    }

    /// The same law shifted by -E[omega] (not renormalized to [-1, 1]).
    pub fn centered(&self) -> Marginal {
        let m = self.mean();
        match self {
            Marginal::SymmetricBernoulli => Marginal::SymmetricBernoulli,
            Marginal::AsymBernoulli { p, v0, v1 } => Marginal::AsymBernoulli {
                p: *p,
                v0: v0 - m,
                v1: v1 - m,
            },
            Marginal::Uniform { lo, hi } => Marginal::Uniform {
                lo: lo - m,
                hi: hi - m,
            },
            Marginal::Discrete { atoms, weights } => Marginal::Discrete {
                atoms: atoms.iter().map(|a| a - m).collect(),
                weights: weights.clone(),
            },
        }
    }

    /// E[exp(i t omega)].
    pub fn charfun(&self, t: f64) -> Complex64 {
        match self {
            Marginal::SymmetricBernoulli => Complex64::new(t.cos(), 0.0),
            Marginal::Uniform { lo, hi } => {
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                let x = t * half;
                let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
                Complex64::from_polar(sinc, t * mid)
            }
            _ => self
                .atoms()
                .unwrap()
                .iter()
                .map(|(a, w)| Complex64::from_polar(*w, t * a))
                .sum(),
        }
    }

    /// Inverse-CDF sample from a uniform u in [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Marginal::SymmetricBernoulli => {
                if u < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            Marginal::AsymBernoulli { p, v0, v1 } => {
                if u < 1.0 - p {
                    *v0
                } else {
                    *v1
                }
            }
            Marginal::Uniform { lo, hi } => lo + (hi - lo) * u,
            Marginal::Discrete { atoms, weights } => {
                let mut acc = 0.0;
                for (a, w) in atoms.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *a;
                    }
                }
                *atoms
                    .iter()
                    .zip(weights)
                    .rev()
                    .find(|(_, w)| **w > 0.0)
                    .map(|(a, _)| a)
                    .unwrap()
            }
        }
    }
}

impl FromStr for Marginal {
    type Err = Error;

    /// `bernoulli`, `bernoulli01`, `uniform01`, `uniform:lo=-1,hi=1`,
    /// `asym:p=0.3,v0=0,v1=1`, `discrete:-0.5@0.5,0.5@0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        let kv = |key: &str| -> Result<f64> {
            rest.split(',')
                .filter_map(|p| p.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .ok_or_else(|| invalid(format!("marginal '{head}' needs parameter {key}")))?
                .1
                .trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("marginal parameter {key} is not a number")))
        };
        let m = match head.trim().to_ascii_lowercase().as_str() {
            "bernoulli" | "symmetric_bernoulli" => Marginal::SymmetricBernoulli,
            "bernoulli01" => Marginal::bernoulli01(),
            "uniform01" => Marginal::uniform01(),
            "uniform" => {
                if rest.is_empty() {
                    Marginal::uniform01()
                } else {
                    Marginal::Uniform {
                        lo: kv("lo")?,
                        hi: kv("hi")?,
                    }
                }
            }
            "asym" | "asym_bernoulli" => Marginal::AsymBernoulli {
                p: kv("p")?,
                v0: kv("v0")?,
                v1: kv("v1")?,
            },
            "discrete" => {
                let mut atoms = Vec::new();
                let mut weights = Vec::new();
                for item in rest.split(',').filter(|p| !p.trim().is_empty()) {
                    let (a, w) = item
                        .split_once('@')
                        .ok_or_else(|| invalid(format!("discrete atom '{item}' is not value@weight")))?;
                    atoms.push(a.trim().parse::<f64>().map_err(|_| invalid("bad atom value"))?);
                    weights.push(w.trim().parse::<f64>().map_err(|_| invalid("bad atom weight"))?);
                }
                Marginal::Discrete { atoms, weights }
            }
            other => return Err(invalid(format!("unknown marginal '{other}'"))),
        };
        m.validate()?;
        Ok(m)
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Key for (seed, trial); distinct streams for distinct pairs.
pub fn stream_key(seed: u64, trial: u64) -> u64 {
    mix64(mix64(seed ^ GOLDEN).wrapping_add(trial.wrapping_mul(GOLDEN)) ^ 0x5851_F42D_4C95_7F2D)
}

/// Uniform in [0, 1) depending only on (seed, trial, x).
pub fn point_uniform(seed: u64, trial: u64, x: &LatticePoint) -> f64 {
    let mut h = stream_key(seed, trial);
    for &c in x.coords() {
        h = mix64(h.wrapping_add(GOLDEN) ^ (c as u64));
    }
    h = mix64(h ^ (x.dim() as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    to_unit(h)
}

/// Counter-based generator for non-spatial draws.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, trial: u64) -> Self {
        CounterRng {
            key: stream_key(seed, trial),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    pub fn uniform(&mut self) -> f64 {
        to_unit(self.next_u64())
    }

    pub fn sample(&mut self, m: &Marginal) -> f64 {
        m.quantile(self.uniform())
    }
}

/// A sampled field restricted to a finite window, stored in lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    points: Vec<LatticePoint>,
    values: Vec<f64>,
    pub seed: Option<u64>,
    pub trial: Option<u64>,
}

impl Configuration {
    /// Builds a configuration from explicit values (deduplicated, sorted).
    pub fn from_values(points: Vec<LatticePoint>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.abs() <= 1.0 + SUPPORT_SLACK)) {
            return Err(invalid(format!("configuration value {v} outside [-1, 1]")));
        }
        let mut pairs: Vec<(LatticePoint, f64)> = points.into_iter().zip(values).collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        pairs.dedup_by(|a, b| a.0 == b.0);
        let (points, values) = pairs.into_iter().unzip();
        Ok(Configuration {
            points,
            values,
            seed: None,
            trial: None,
        })
    }

    pub fn empty() -> Self {
        Configuration {
            points: Vec::new(),
            values: Vec::new(),
            seed: None,
            trial: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LatticePoint, f64)> {
        self.points.iter().zip(self.values.iter().copied())
    }

    fn index_of(&self, x: &LatticePoint) -> Option<usize> {
        self.points.binary_search(x).ok()
    }

    pub fn contains(&self, x: &LatticePoint) -> bool {
        self.index_of(x).is_some()
    }

    /// Value at x, zero outside the window (zero extension).
    pub fn get(&self, x: &LatticePoint) -> f64 {
        self.index_of(x).map_or(0.0, |i| self.values[i])
    }

    pub fn set(&mut self, x: &LatticePoint, v: f64) -> bool {
        match self.index_of(x) {
            Some(i) => {
                self.values[i] = v;
                true
            }
            None => false,
        }
    }

    pub fn map_values(&self, f: impl Fn(&LatticePoint, f64) -> f64) -> Configuration {
        Configuration {
            points: self.points.clone(),
            values: self.iter().map(|(x, v)| f(x, v)).collect(),
            seed: self.seed,
            trial: self.trial,
        }
    }

    /// Union of two configurations; on overlap the values of `self` win.
    pub fn merge(&self, other: &Configuration) -> Configuration {
        let mut points = self.points.clone();
        let mut values = self.values.clone();
        for (x, v) in other.iter() {
            if !self.contains(x) {
                points.push(x.clone());
                values.push(v);
            }
        }
        let mut merged = Configuration::from_values(points, values).expect("values already valid");
        merged.seed = self.seed;
        merged.trial = self.trial;
        merged
    }
}

/// IID draws on the window; the value at x depends only on (seed, trial, x).
pub fn sample_config(m: &Marginal, window: &[LatticePoint], seed: u64, trial: u64) -> Result<Configuration> {
    if window.is_empty() {
        return Err(invalid("sampling window must be nonempty"));
    }
    m.validate()?;
    let values = window
        .iter()
        .map(|x| m.quantile(point_uniform(seed, trial, x)))
        .collect();
    let mut c = Configuration::from_values(window.to_vec(), values)?;
    c.seed = Some(seed);
    c.trial = Some(trial);
    Ok(c)
}

/// omega = omega_Lambda + omega_Lambda^perp on the window, with disjoint supports.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSplit {
    pub inner: Configuration,
    pub outer: Configuration,
}

impl WindowSplit {
    pub fn reassemble(&self) -> Configuration {
        self.inner.merge(&self.outer)
    }
}

pub fn split(c: &Configuration, lambda: &[LatticePoint]) -> Result<WindowSplit> {
    if let Some(x) = lambda.iter().find(|x| !c.contains(x)) {
        return Err(Error::NotSubset(x.to_string()));
    }
    let set: BTreeSet<&LatticePoint> = lambda.iter().collect();
    let (mut ip, mut iv, mut op, mut ov) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (x, v) in c.iter() {
        if set.contains(x) {
            ip.push(x.clone());
            iv.push(v);
        } else {
            op.push(x.clone());
            ov.push(v);
        }
    }
    let mut inner = Configuration::from_values(ip, iv)?;
    let mut outer = Configuration::from_values(op, ov)?;
    inner.seed = c.seed;
    inner.trial = c.trial;
    outer.seed = c.seed;
    outer.trial = c.trial;
    Ok(WindowSplit { inner, outer })
}
