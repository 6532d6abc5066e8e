//! Finite-volume Hamiltonians, scalar-shift structures and the Monte Carlo
//! experiments built on them.

mod bernstein;
mod experiments;
mod hamiltonian;
mod shift;
mod twopoint;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::disorder::mix64;
use crate::stats::{weighted_fit, Histogram, Proportion, Z95};

pub use bernstein::{bernstein_check, BernsteinParams};
pub use experiments::{
    cutoff_check, eps_floor, ev_comparison, ids_histogram, ils_experiment, polynomial_sensitivity, wegner_experiment, Bath,
    CutoffParams, EvCompareParams, IdsParams, IlsMode, IlsParams, Sensitivity, WegnerParams,
};
pub use hamiltonian::{
    build_hamiltonian, eigenvalues, laplacian, symmetric_spectrum, with_potential, Hamiltonian, Spectrum,
    RESIDUAL_TOL,
};
pub use shift::{exp_shift, staircase_shift, ScalarShiftDecomp};
pub use twopoint::{covariance_of, two_point_covariance, two_point_table, TwoPointParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Wegner,
    Ids,
    EvComparison,
    Ils,
    Bernstein,
    TwoPoint,
    Cutoff,
    Viete,
    Charfun,
    Density,
    Wiener,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Wegner => "wegner",
            ExperimentKind::Ids => "ids",
            ExperimentKind::EvComparison => "evcompare",
            ExperimentKind::Ils => "ils",
            ExperimentKind::Bernstein => "bernstein",
            ExperimentKind::TwoPoint => "twopoint",
            ExperimentKind::Cutoff => "cutoff",
            ExperimentKind::Viete => "viete",
            ExperimentKind::Charfun => "charfun",
            ExperimentKind::Density => "density",
            ExperimentKind::Wiener => "wiener",
        }
    }
}

/// A Monte Carlo frequency with its 95% Wilson interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub label: String,
    /// Grid coordinate (interval half-width, threshold, ...).
    pub x: f64,
    pub energy: Option<f64>,
    pub prob: Proportion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub label: String,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedHistogram {
    pub label: String,
    pub hist: Histogram,
}

/// A curve for plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub params: serde_json::Value,
    pub seed: u64,
    pub trials: u64,
    pub estimates: Vec<Estimate>,
    pub slopes: Vec<SlopeEstimate>,
    pub histograms: Vec<NamedHistogram>,
    pub series: Vec<Series>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl ExperimentResult {
    pub fn new<P: Serialize>(kind: ExperimentKind, params: &P, seed: u64, trials: u64) -> Self {
        ExperimentResult {
            kind,
            params: serde_json::to_value(params).unwrap_or(serde_json::Value::Null),
            seed,
            trials,
            estimates: Vec::new(),
            slopes: Vec::new(),
            histograms: Vec::new(),
            series: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn meta<V: Serialize>(&mut self, key: &str, v: V) {
        self.metadata
            .insert(key.to_string(), serde_json::to_value(v).unwrap_or(serde_json::Value::Null));
    }

    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.metadata.get(key).and_then(|v| v.as_f64())
    }

    pub fn estimates_labeled<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a Estimate> + 'a {
        self.estimates.iter().filter(move |e| e.label == label)
    }

    pub fn slope(&self, label: &str) -> Option<&SlopeEstimate> {
        self.slopes.iter().find(|s| s.label == label)
    }

    pub fn series(&self, label: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.label == label)
    }
}

/// Independent seed for a named sub-stream of an experiment.
pub(crate) fn sub_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(0x6A09_E667_F3BC_C908)))
}

/// Weighted fit of ln p against ln x; each point is weighted by the inverse squared
/// half-width of its Wilson interval on the log scale. Points with no successes are
/// dropped.
pub fn log_log_slope(label: &str, xs: &[f64], props: &[Proportion]) -> Option<SlopeEstimate> {
    let (mut lx, mut ly, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for (x, p) in xs.iter().zip(props) {
        if p.successes == 0 || !(p.lo > 0.0) {
            continue;
        }
        let sd = (p.hi.ln() - p.lo.ln()) / (2.0 * Z95);
        lx.push(x.ln());
        ly.push(p.estimate.ln());
        w.push(1.0 / (sd * sd).max(1e-300));
    }
    let f = weighted_fit(&lx, &ly, &w)?;
    Some(SlopeEstimate {
        label: label.to_string(),
        slope: f.slope,
        slope_se: f.slope_se,
        intercept: f.intercept,
        points: lx.len(),
    })
}
