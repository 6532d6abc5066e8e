use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};

/// One experiment's parameters. Every field is optional so that a config file and
/// command-line flags can be layered; missing values fall back to per-experiment
/// defaults at dispatch time. Config files may group keys into sections, which are
/// flattened before parsing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[arg(skip)]
    pub kind: Option<String>,
    #[arg(skip)]
    pub seed: Option<u64>,
    #[arg(skip)]
    pub trials: Option<u64>,
    #[arg(skip)]
    pub jobs: Option<usize>,
    #[arg(skip)]
    pub out_dir: Option<PathBuf>,
    #[arg(skip)]
    pub format: Option<String>,

    /// Kernel spec, e.g. poly:A=4, stair:A=3,kappa=2, subexp:a=1,delta=0.5, exp:a=0.5,p=inf
    #[arg(long)]
    pub kernel: Option<String>,
    /// Lattice dimension
    #[arg(long)]
    pub d: Option<usize>,
    /// Marginal spec, e.g. bernoulli, bernoulli01, uniform01, uniform:lo=-1,hi=1
    #[arg(long)]
    pub marginal: Option<String>,
    /// Box radius L
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<u64>,
    /// Coupling constant g
    #[arg(long, allow_negative_numbers = true)]
    pub g: Option<f64>,
    /// Interval half-widths (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Energies (comma separated)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub energies: Option<Vec<f64>>,

    /// Smallest t of the log grid
    #[arg(long)]
    pub t_min: Option<f64>,
    /// Largest t of the log grid
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Grid size
    #[arg(long)]
    pub points: Option<usize>,
    /// Fit the decay exponent
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fit: Option<bool>,
    /// Outermost shell N of the product
    #[arg(long)]
    pub shells: Option<u64>,
    /// Innermost shell of the product
    #[arg(long)]
    pub shell_min: Option<u64>,

    /// Argument x of the partial product
    #[arg(long, allow_negative_numbers = true)]
    pub x: Option<f64>,
    /// Number of factors
    #[arg(long)]
    pub terms: Option<u32>,
    /// Left end of the density grid
    #[arg(long, allow_negative_numbers = true)]
    pub x_min: Option<f64>,
    /// Right end of the density grid
    #[arg(long, allow_negative_numbers = true)]
    pub x_max: Option<f64>,

    /// Live randomness: cube:R, layers:R1-R2 or plateau:N1-N2
    #[arg(long)]
    pub bath: Option<String>,
    /// Max-norm radius of the source window
    #[arg(long)]
    pub truncation: Option<u64>,
    /// Number of frozen exterior samples
    #[arg(long)]
    pub baths: Option<u32>,
    /// Scale exponent tau (bath radius L^tau)
    #[arg(long)]
    pub tau: Option<f64>,
    /// Annulus width exponent (bernstein) or observation angle (twopoint)
    #[arg(long)]
    pub theta: Option<f64>,
    /// Eigenvalue index
    #[arg(long)]
    pub index: Option<usize>,
    /// Histogram bins
    #[arg(long)]
    pub bins: Option<usize>,

    /// Center of the first box (comma separated)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub center_a: Option<Vec<i64>>,
    /// Center of the second box (comma separated)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub center_b: Option<Vec<i64>>,
    /// Required separation in units of L
    #[arg(long)]
    pub min_separation: Option<f64>,
    /// Source window margin around both boxes
    #[arg(long)]
    pub margin: Option<u64>,
    /// Distances for the sensitivity report (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub sensitivity: Option<Vec<f64>>,

    /// ILS mode: low_energy, smooth_tails, strong_disorder_exp, strong_disorder_poly
    #[arg(long)]
    pub mode: Option<String>,
    /// Low-energy threshold scale h in h L^-q
    #[arg(long, allow_negative_numbers = true)]
    pub h: Option<f64>,
    /// Low-energy threshold exponent q
    #[arg(long)]
    pub q: Option<f64>,
    /// Outer radius of the live region
    #[arg(long)]
    pub outer: Option<u64>,
    /// Strong-disorder decay rate m
    #[arg(long)]
    pub m: Option<f64>,

    /// Variance exponent beta in (0, 1)
    #[arg(long)]
    pub beta: Option<f64>,
    /// Admissible window constant
    #[arg(long)]
    pub c1: Option<f64>,
    /// Number of t values in the envelope check
    #[arg(long)]
    pub t_points: Option<usize>,

    /// Power-law exponent A
    #[arg(long = "A")]
    #[serde(rename = "A")]
    pub a_exp: Option<f64>,
    /// Source distance r
    #[arg(long)]
    pub r: Option<u64>,
    /// Observation distance rho
    #[arg(long)]
    pub rho: Option<u64>,

    /// Scaling base b of the Bernoulli product
    #[arg(long)]
    pub b: Option<f64>,
    /// Averaging horizon T
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_cap: Option<f64>,
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Serialization(e.to_string()))
}

fn drop_nulls(v: serde_json::Value) -> serde_json::Map<String, serde_json::Value> {
    match v {
        serde_json::Value::Object(m) => m.into_iter().filter(|(_, x)| !x.is_null()).collect(),
        _ => serde_json::Map::new(),
    }
}

impl ExperimentConfig {
    /// Parses a TOML file; `[section]` headers only group keys.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let table: toml::Table = s.parse().map_err(|e: toml::de::Error| invalid(format!("config: {e}")))?;
        let mut flat = serde_json::Map::new();
        let mut put = |k: String, v: toml::Value| -> Result<()> {
            if flat.insert(k.clone(), to_json(&v)?).is_some() {
                return Err(invalid(format!("config: key '{k}' given twice")));
            }
            Ok(())
        };
        for (k, v) in table {
            match v {
                toml::Value::Table(inner) => {
                    for (k2, v2) in inner {
                        if v2.is_table() {
                            return Err(invalid(format!("config: section [{k}.{k2}] nests too deep")));
                        }
                        put(k2, v2)?;
                    }
                }
                other => put(k, other)?,
            }
        }
        serde_json::from_value(serde_json::Value::Object(flat)).map_err(|e| invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Values set in `over` replace those in `self`.
    pub fn overlay(&self, over: &ExperimentConfig) -> Result<Self> {
        let mut base = drop_nulls(to_json(self)?);
        base.extend(drop_nulls(to_json(over)?));
        serde_json::from_value(serde_json::Value::Object(base)).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Copy without the fields that only control execution and output.
    pub fn canonical(&self) -> Self {
        ExperimentConfig {
            jobs: None,
            out_dir: None,
            format: None,
            ..self.clone()
        }
    }

    /// SHA-256 of the canonical JSON of every field that affects results.
    pub fn hash(&self) -> Result<String> {
        let m = drop_nulls(to_json(&self.canonical())?);
        let canonical = serde_json::to_string(&serde_json::Value::Object(m))
            .map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_flatten() {
        let c = ExperimentConfig::from_toml_str(
            "kind = \"wegner\"\n[kernel]\nkernel = \"poly:A=4\"\nd = 2\n[grid]\neps = [0.1, 0.2]\nL = 3\n",
        )
        .unwrap();
        assert_eq!(c.kind.as_deref(), Some("wegner"));
        assert_eq!(c.d, Some(2));
        assert_eq!(c.l, Some(3));
        assert_eq!(c.eps, Some(vec![0.1, 0.2]));
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        assert!(ExperimentConfig::from_toml_str("kernal = \"poly:A=4\"").is_err());
        assert!(ExperimentConfig::from_toml_str("d = 2\n[x]\nd = 3").is_err());
    }

    #[test]
    fn overlay_and_hash() {
        let file = ExperimentConfig {
            d: Some(2),
            seed: Some(1),
            ..Default::default()
        };
        let cli = ExperimentConfig {
            seed: Some(9),
            out_dir: Some("x".into()),
            ..Default::default()
        };
        let m = file.overlay(&cli).unwrap();
        assert_eq!((m.d, m.seed), (Some(2), Some(9)));
        let moved = ExperimentConfig {
            out_dir: Some("y".into()),
            ..m.clone()
        };
        assert_eq!(m.hash().unwrap(), moved.hash().unwrap());
        assert_ne!(m.hash().unwrap(), file.hash().unwrap());
    }
}
