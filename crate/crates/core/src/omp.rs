//! Conventional compressive-sensing baseline.
//!
//! Each crossing event is read as an amplitude sample: at the crossing time
//! the signal equals the crossed level. Crossing times are only known to the
//! resolution of the sampling grid, so every event is placed at the midpoint
//! of the tick interval that brackets it. The resulting linear system is
//! solved greedily with orthogonal matching pursuit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sampling::LcEventStream;
use crate::signal::{CoeffVector, SignalSpec};

/// Relative singular-value cutoff for the active-set least squares.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CrossingMeasurementSet {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `rows[(i, n)] = cos(n w0 times[i])`.
    pub rows: DMatrix<f64>,
}

impl CrossingMeasurementSet {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn crossing_measurements(
    stream: &LcEventStream,
    spec: &SignalSpec,
) -> Result<CrossingMeasurementSet> {
    let half_tick = 0.5 * stream.sample_period;
    let mut times = Vec::with_capacity(stream.events.len());
    let mut values = Vec::with_capacity(stream.events.len());
    for e in &stream.events {
        let level = stream.level_value(e.level_index).ok_or_else(|| {
            Error::CorruptStream(format!("level index {} out of range", e.level_index))
        })?;
        times.push(e.tick as f64 * stream.sample_period - half_tick);
        values.push(level);
    }
    let omega0 = spec.omega0;
    let rows = DMatrix::from_fn(times.len(), spec.num_coeffs(), |i, n| {
        (n as f64 * omega0 * times[i]).cos()
    });
    Ok(CrossingMeasurementSet {
        times,
        values,
        rows,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OmpSolution {
    pub coeffs: CoeffVector,
    /// Selected columns in pick order.
    pub support: Vec<usize>,
    /// Residual norm before the first pick and after each refit.
    pub residual_norms: Vec<f64>,
    /// Some active-set refit was rank deficient (minimum-norm solution used).
    pub rank_deficient: bool,
}

/// Orthogonal matching pursuit with exactly `k` picks.
///
/// Columns are ranked by normalized correlation `|c_j^T r| / |c_j|`; ties go
/// to the lowest index.
pub fn omp_solve(set: &CrossingMeasurementSet, k: usize) -> Result<OmpSolution> {
    if k == 0 {
        return invalid("OMP sparsity must be at least 1");
    }
    let rows = set.len();
    if rows < k {
        return Err(Error::Underdetermined { rows, sparsity: k });
    }
    let a = &set.rows;
    let cols = a.ncols();
    if k > cols {
        return invalid(format!("sparsity {k} exceeds {cols} columns"));
    }
    let b = DVector::from_column_slice(&set.values);
    let col_norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();

    let mut support: Vec<usize> = Vec::with_capacity(k);
    let mut residual = b.clone();
    let mut residual_norms = vec![residual.norm()];
    let mut rank_deficient = false;
    let mut solution = DVector::zeros(0);

    for _ in 0..k {
        let corr = a.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..cols {
            if support.contains(&j) || col_norms[j] == 0.0 {
                continue;
            }
            let score = corr[j].abs() / col_norms[j];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let Some((pick, _)) = best else { break };
        support.push(pick);

        let active = a.select_columns(&support);
        let svd = active.clone().svd(true, true);
        let cutoff = RANK_TOL * svd.singular_values.max();
        if svd.rank(cutoff) < support.len() {
            rank_deficient = true;
        }
        solution = svd
            .solve(&b, cutoff)
            .map_err(|e| Error::InvalidArgument(format!("least squares failed: {e}")))?;
        residual = &b - &active * &solution;
        residual_norms.push(residual.norm());
    }

    let mut coeffs = vec![0.0; cols];
    for (idx, &j) in support.iter().enumerate() {
        coeffs[j] = solution[idx];
    }
    Ok(OmpSolution {
        coeffs: CoeffVector(coeffs),
        support,
        residual_norms,
        rank_deficient,
    })
}
