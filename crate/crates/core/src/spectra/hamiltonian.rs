use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::alloy::PotentialField;
use crate::error::{Error, Result};
use crate::lattice::{Ball, LatticePoint, Norm};

/// Relative residual tolerance certified on every eigendecomposition.
pub const RESIDUAL_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 10_000;

/// H = -Delta_B + g diag(V) on a max-norm box.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    pub ball: Ball,
    pub points: Vec<LatticePoint>,
    pub matrix: DMatrix<f64>,
    pub g: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// max_j |H v_j - lambda_j v_j|
    pub residual: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Distance from E to the nearest eigenvalue.
    pub fn dist(&self, e: f64) -> f64 {
        self.eigenvalues.iter().map(|l| (l - e).abs()).fold(f64::INFINITY, f64::min)
    }
}

/// Graph Laplacian of the box with simple Dirichlet restriction:
/// (-Delta f)(x) = sum over box neighbours y of (f(x) - f(y)).
pub fn laplacian(points: &[LatticePoint]) -> DMatrix<f64> {
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, x) in points.iter().enumerate() {
        for k in 0..x.dim() {
            for s in [-1i64, 1] {
                let mut c = x.coords().to_vec();
                c[k] += s;
                if let Ok(j) = points.binary_search(&LatticePoint::from(c.as_slice())) {
                    m[(i, j)] -= 1.0;
                    m[(i, i)] += 1.0;
                }
            }
        }
    }
    m
}

/// Laplacian plus g times the diagonal potential.
pub fn with_potential(base: &DMatrix<f64>, g: f64, v: &[f64]) -> DMatrix<f64> {
    let mut m = base.clone();
    for (i, vi) in v.iter().enumerate() {
        m[(i, i)] += g * vi;
    }
    m
}

pub fn build_hamiltonian(ball: &Ball, potential: &PotentialField, g: f64) -> Result<Hamiltonian> {
    if ball.norm != Norm::Linf {
        return Err(Error::ShapeMismatch("Hamiltonians live on max-norm boxes".into()));
    }
    let points = ball.points();
    if potential.points != points {
        return Err(Error::ShapeMismatch(format!(
            "potential is defined on {} points, box {}({}) has {}",
            potential.points.len(),
            ball.center,
            ball.radius,
            points.len()
        )));
    }
    let matrix = with_potential(&laplacian(&points), g, &potential.values);
    Ok(Hamiltonian {
        ball: ball.clone(),
        points,
        matrix,
        g,
    })
}

impl Hamiltonian {
    pub fn dim(&self) -> usize {
        self.points.len()
    }
}

pub fn eigenvalues(h: &Hamiltonian) -> Result<Spectrum> {
    symmetric_spectrum(&h.matrix)
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Sorted eigenvalues of a symmetric matrix with a certified residual.
pub fn symmetric_spectrum(m: &DMatrix<f64>) -> Result<Spectrum> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::ShapeMismatch(format!("matrix is {}x{}", n, m.ncols())));
    }
    let tolerance = RESIDUAL_TOL * inf_norm(m).max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, MAX_SWEEPS).ok_or(Error::NoConvergence {
        residual: f64::INFINITY,
        tolerance,
    })?;
    let mut residual: f64 = 0.0;
    for j in 0..n {
        let v = eig.eigenvectors.column(j);
        let r = m * v - v * eig.eigenvalues[j];
        residual = residual.max(r.norm());
    }
    if !(residual <= tolerance) {
        return Err(Error::NoConvergence { residual, tolerance });
    }
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(Spectrum { eigenvalues, residual })
}
