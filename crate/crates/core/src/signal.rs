//! Sparse harmonic signal model `x(t) = sum_n a_n cos(n w0 t)`.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest magnitude reported by [`reconstruction_snr`], in dB.
pub const SNR_CAP_DB: f64 = 300.0;

/// Time grid and harmonic bounds of a signal family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    /// Highest harmonic index `N`; coefficient vectors have `N + 1` entries.
    pub n_max: usize,
    /// Fundamental angular frequency in rad/s.
    pub omega0: f64,
    /// Observation window length `d` in seconds.
    pub duration: f64,
    /// Uniform sampling period `T` in seconds.
    pub sample_period: f64,
    /// Inclusive harmonic index interval the support is drawn from.
    pub band: (usize, usize),
}

impl SignalSpec {
    pub fn new(
        n_max: usize,
        omega0: f64,
        duration: f64,
        sample_period: f64,
        band: (usize, usize),
    ) -> Result<Self> {
        let spec = Self {
            n_max,
            omega0,
            duration,
            sample_period,
            band,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// N = 500, w0 = 10 rad/s, d = 2 s, T = 0.5 ms (M = 4001), full band without DC.
    pub fn standard() -> Self {
        Self {
            n_max: 500,
            omega0: 10.0,
            duration: 2.0,
            sample_period: 5e-4,
            band: (1, 500),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max < 1 {
            return invalid("n_max must be at least 1");
        }
        for (name, v) in [
            ("omega0", self.omega0),
            ("duration", self.duration),
            ("sample_period", self.sample_period),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("{name} must be positive and finite, got {v}"));
            }
        }
        let (lo, hi) = self.band;
        if lo > hi || hi > self.n_max {
            return invalid(format!(
                "band [{lo}, {hi}] must satisfy 0 <= lo <= hi <= n_max = {}",
                self.n_max
            ));
        }
        let m = self.sample_count_unchecked();
        let span = (m - 1) as f64 * self.sample_period;
        if (span - self.duration).abs() > 1e-9 * self.duration {
            return invalid(format!(
                "duration {} is not a whole number of sample periods {} ((M-1)T = {span})",
                self.duration, self.sample_period
            ));
        }
        Ok(())
    }

    fn sample_count_unchecked(&self) -> usize {
        (self.duration / self.sample_period).round() as usize + 1
    }

    /// Number of uniform samples `M`, with `(M - 1) T = d`.
    pub fn num_samples(&self) -> usize {
        self.sample_count_unchecked()
    }

    pub fn num_coeffs(&self) -> usize {
        self.n_max + 1
    }

    pub fn band_width(&self) -> usize {
        self.band.1 - self.band.0 + 1
    }

    /// Sampling instant of row `m`.
    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.sample_period
    }
}

/// Coefficients `a_0..a_N` of a cosine series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoeffVector(pub Vec<f64>);

/// One entry of the sparse JSON form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseEntry {
    pub n: usize,
    pub a: f64,
}

impl CoeffVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Unit vector `e_n` of length `len`.
    pub fn basis(len: usize, n: usize) -> Self {
        let mut v = vec![0.0; len];
        v[n] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    /// Copy scaled to unit L2 norm; the zero vector is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return self.clone();
        }
        Self(self.0.iter().map(|v| v / n).collect())
    }

    pub fn to_csv_row(&self) -> String {
        let cells: Vec<String> = self.0.iter().map(|v| format!("{v:e}")).collect();
        cells.join(",")
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        line.trim()
            .split(',')
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad coefficient {cell:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn to_sparse(&self) -> Vec<SparseEntry> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(n, a)| SparseEntry { n, a: *a })
            .collect()
    }

    /// Dense vector of length `len` from sparse entries.
    pub fn from_sparse(entries: &[SparseEntry], len: usize) -> Result<Self> {
        let mut v = vec![0.0; len];
        for e in entries {
            if e.n >= len {
                return invalid(format!(
                    "sparse index {} out of range for length {len}",
                    e.n
                ));
            }
            v[e.n] = e.a;
        }
        Ok(Self(v))
    }

    pub fn to_sparse_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_sparse())?)
    }

    pub fn from_sparse_json(text: &str, len: usize) -> Result<Self> {
        let entries: Vec<SparseEntry> = serde_json::from_str(text)?;
        Self::from_sparse(&entries, len)
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Draws a unit-norm `k`-sparse coefficient vector with support in `spec.band`.
///
/// Support indices are uniform without replacement; values are standard normal
/// before scaling. Index 0 is a candidate only when `include_dc` is set.
pub fn random_sparse_coeffs(
    spec: &SignalSpec,
    k: usize,
    include_dc: bool,
    rng_seed: u64,
) -> Result<CoeffVector> {
    let (lo, hi) = spec.band;
    let lo = if include_dc { lo } else { lo.max(1) };
    if lo > hi {
        return invalid("empty harmonic band");
    }
    let width = hi - lo + 1;
    if k == 0 || k > width {
        return invalid(format!("sparsity {k} must be in 1..={width}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let picks = index::sample(&mut rng, width, k);
    let mut values = vec![0.0; spec.num_coeffs()];
    for offset in picks.iter() {
        let mut a: f64 = StandardNormal.sample(&mut rng);
        while a == 0.0 {
            a = StandardNormal.sample(&mut rng);
        }
        values[lo + offset] = a;
    }
    Ok(CoeffVector(values).normalized())
}

/// `sum_n a_n cos(n omega0 t)`.
pub fn evaluate(coeffs: &CoeffVector, omega0: f64, t: f64) -> f64 {
    coeffs
        .0
        .iter()
        .enumerate()
        .map(|(n, a)| a * (n as f64 * omega0 * t).cos())
        .sum()
}

/// Samples `x(mT)` for `m = 0..M-1`.
pub fn uniform_sample(coeffs: &CoeffVector, spec: &SignalSpec) -> Vec<f64> {
    (0..spec.num_samples())
        .map(|m| evaluate(coeffs, spec.omega0, spec.time(m)))
        .collect()
}

/// Coefficient-domain reconstruction SNR in dB, clamped to `[-300, 300]`.
///
/// In scale-invariant mode both vectors are normalized to the unit sphere
/// before differencing, so any positive rescaling of the estimate leaves the
/// result unchanged. An all-zero or non-finite estimate scores `-300`.
pub fn reconstruction_snr(
    reference: &CoeffVector,
    estimate: &CoeffVector,
    scale_invariant: bool,
) -> Result<f64> {
    if reference.len() != estimate.len() {
        return invalid(format!(
            "length mismatch: reference {} vs estimate {}",
            reference.len(),
            estimate.len()
        ));
    }
    let ref_norm = reference.norm();
    if ref_norm == 0.0 {
        return invalid("reference vector is zero");
    }
    let est_norm = estimate.norm();
    if !est_norm.is_finite() {
        return Ok(-SNR_CAP_DB);
    }

    let (signal, error) = if scale_invariant {
        if est_norm == 0.0 {
            return Ok(-SNR_CAP_DB);
        }
        let err = reference
            .0
            .iter()
            .zip(&estimate.0)
            .map(|(r, e)| {
                let d = r / ref_norm - e / est_norm;
                d * d
            })
            .sum::<f64>()
            .sqrt();
        (1.0, err)
    } else {
        let err = reference
            .0
            .iter()
            .zip(&estimate.0)
            .map(|(r, e)| (r - e) * (r - e))
            .sum::<f64>()
            .sqrt();
        (ref_norm, err)
    };

    if error == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    let snr = 20.0 * (signal / error).log10();
    Ok(snr.clamp(-SNR_CAP_DB, SNR_CAP_DB))
}

/// Exact `(min, max)` of a non-empty sequence.
pub fn dynamic_range(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return invalid("dynamic range of an empty sequence");
    }
    Ok(samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        }))
}
