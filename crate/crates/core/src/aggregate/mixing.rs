use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::spectral_norm;
use crate::{Error, Result};

/// Tolerance on realized row sums.
pub const ROW_TOL: f64 = 1e-9;

/// Realized per-round mixing matrix, filled row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingRows {
    pub w: DMatrix<f64>,
}

impl MixingRows {
    pub fn new(n: usize) -> Self {
        Self { w: DMatrix::zeros(n, n) }
    }

    pub fn set_row(&mut self, node: usize, entries: &[(usize, f64)]) {
        for j in 0..self.w.ncols() {
            self.w[(node, j)] = 0.0;
        }
        for &(j, v) in entries {
            self.w[(node, j)] += v;
        }
    }

    pub fn check_stochastic(&self) -> Result<()> {
        for i in 0..self.w.nrows() {
            let row = self.w.row(i);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL || row.iter().any(|&v| v < 0.0) {
                return Err(Error::Consistency(format!("mixing row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    /// Order-sensitive checksum of one row, for round logs.
    pub fn row_checksum(&self, node: usize) -> u64 {
        self.w.row(node).iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
            v.to_bits().to_le_bytes().iter().fold(h, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
        })
    }
}

/// Equal weights over `members`.
pub fn uniform_row(members: &[usize]) -> Vec<(usize, f64)> {
    let w = 1.0 / members.len() as f64;
    members.iter().map(|&j| (j, w)).collect()
}

/// Self-isolating row: `1 - epsilon` on the node, `epsilon` spread over its
/// neighbors.
pub fn malicious_row(node: usize, neighbors: &[usize], epsilon: f64) -> Vec<(usize, f64)> {
    if neighbors.is_empty() {
        return vec![(node, 1.0)];
    }
    let mut row = vec![(node, 1.0 - epsilon)];
    row.extend(neighbors.iter().map(|&j| (j, epsilon / neighbors.len() as f64)));
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRadius {
    pub rho_d: f64,
    pub rho_u: f64,
    /// `+inf` when `rho_d >= 1`.
    pub rho_err: f64,
}

/// Block error-propagation radius of a realized mixing matrix split into
/// defense nodes `defense` and everyone else, with step factor `1 + eta L`.
pub fn error_radius(w: &DMatrix<f64>, defense: &[usize], eta_l: f64) -> ErrorRadius {
    let n = w.nrows();
    let is_def: Vec<bool> = (0..n).map(|i| defense.contains(&i)).collect();
    let d: Vec<usize> = (0..n).filter(|&i| is_def[i]).collect();
    let u: Vec<usize> = (0..n).filter(|&i| !is_def[i]).collect();
    let block = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |a, b| w[(rows[a], cols[b])]);
    let g = 1.0 + eta_l;
    let rho_d = spectral_norm(&block(&d, &d)) * g;
    let rho_u = spectral_norm(&block(&u, &u)) * g;
    let coupling = spectral_norm(&block(&u, &d)) * spectral_norm(&block(&d, &u)) * g * g;
    let rho_err = if rho_d < 1.0 { rho_d.max(rho_u + coupling / (1.0 - rho_d)) } else { f64::INFINITY };
    ErrorRadius { rho_d, rho_u, rho_err }
}
