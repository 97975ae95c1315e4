//! Measurement construction for zero- and level-crossing sampling.
//!
//! Levels are always stored in ascending order `l_{-L/2} .. l_{L/2}`. Stacked
//! quantities (`Phi'`, `y'`) put the highest level first, so block row `b`
//! belongs to ascending level index `L - b`.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operator::{DenseOperator, SensingOperator, StackedLevelOperator};
use crate::signal::{uniform_sample, CoeffVector, SignalSpec};

/// `sign(x)` with `sign(0) = +1`. NaN maps to `-1`.
#[inline]
pub fn sign(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

/// A sequence of +-1 measurements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignVector(pub Vec<i8>);

impl SignVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    /// Fraction of entries where `sign(values[i]) == self[i]`.
    pub fn agreement(&self, values: &[f64]) -> f64 {
        if self.0.is_empty() {
            return 1.0;
        }
        let hits = self
            .0
            .iter()
            .zip(values)
            .filter(|(y, v)| sign(**v) == **y)
            .count();
        hits as f64 / self.0.len() as f64
    }
}

/// `Phi[m][n] = cos(n w0 m T)`, `M x (N + 1)`.
pub fn build_phi(spec: &SignalSpec) -> DMatrix<f64> {
    let omega0 = spec.omega0;
    DMatrix::from_fn(spec.num_samples(), spec.num_coeffs(), |m, n| {
        (n as f64 * omega0 * spec.time(m)).cos()
    })
}

pub fn sign_measure(samples: &[f64]) -> SignVector {
    SignVector(samples.iter().map(|&x| sign(x)).collect())
}

/// `L + 1` equispaced interior levels of `(min, max)`, ascending.
pub fn uniform_levels(range: (f64, f64), l: usize) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return invalid(format!("level range needs min < max, got ({lo}, {hi})"));
    }
    if !l.is_multiple_of(2) {
        return invalid(format!("level count L must be even, got {l}"));
    }
    let step = (hi - lo) / (l + 2) as f64;
    Ok((1..=l + 1).map(|j| lo + j as f64 * step).collect())
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return invalid("at least one level is required");
    }
    if levels.len().is_multiple_of(2) {
        return invalid(format!(
            "expected L + 1 levels with L even, got {}",
            levels.len()
        ));
    }
    if levels.iter().any(|v| v.is_nan()) || levels.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("levels must be strictly increasing");
    }
    Ok(())
}

/// Levels in block-row order (highest first).
pub fn block_order(levels: &[f64]) -> Vec<f64> {
    levels.iter().rev().copied().collect()
}

/// Dense `Phi'` of shape `(M (L+1)) x (N + L + 2)`.
pub fn build_phi_prime(phi: &DMatrix<f64>, levels: &[f64]) -> Result<DMatrix<f64>> {
    check_levels(levels)?;
    let (m, n) = phi.shape();
    if m == 0 || n == 0 {
        return invalid("empty base matrix");
    }
    let blocks = block_order(levels);
    let b = blocks.len();
    Ok(DMatrix::from_fn(m * b, n + b, |row, col| {
        let block = row / m;
        if col < n {
            phi[(row % m, col)]
        } else if col - n == block {
            blocks[block]
        } else {
            0.0
        }
    }))
}

/// Stacked `y' = [sign(x - l_{L/2}); ...; sign(x - l_{-L/2})]`.
pub fn lc_measure(samples: &[f64], levels: &[f64]) -> SignVector {
    let mut out = Vec::with_capacity(samples.len() * levels.len());
    for level in levels.iter().rev() {
        out.extend(samples.iter().map(|&x| sign(x - level)));
    }
    SignVector(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementKind {
    Zc,
    Lc,
}

/// Sign measurements together with the matrix that produced them.
///
/// `phi` is always the base `M x (N+1)` matrix. For level crossings the
/// stacked `Phi'` is available through [`Self::operator`] (structured) or
/// [`Self::phi_prime`] (dense).
#[derive(Debug, Clone)]
pub struct MeasurementEnsemble {
    pub kind: MeasurementKind,
    pub phi: Arc<DMatrix<f64>>,
    pub signs: SignVector,
    /// Ascending levels; empty for zero crossings.
    pub levels: Vec<f64>,
    pub spec: SignalSpec,
}

pub enum EnsembleOperator<'a> {
    Dense(DenseOperator<'a>),
    Stacked(StackedLevelOperator<'a>),
}

impl SensingOperator for EnsembleOperator<'_> {
    fn rows(&self) -> usize {
        match self {
            Self::Dense(op) => op.rows(),
            Self::Stacked(op) => op.rows(),
        }
    }

    fn cols(&self) -> usize {
        match self {
            Self::Dense(op) => op.cols(),
            Self::Stacked(op) => op.cols(),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Dense(op) => op.apply(x),
            Self::Stacked(op) => op.apply(x),
        }
    }

    fn apply_adjoint(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Self::Dense(op) => op.apply_adjoint(r),
            Self::Stacked(op) => op.apply_adjoint(r),
        }
    }
}

impl MeasurementEnsemble {
    /// Zero-crossing ensemble from observed signs.
    pub fn zc(
        spec: SignalSpec,
        phi: impl Into<Arc<DMatrix<f64>>>,
        signs: SignVector,
    ) -> Result<Self> {
        spec.validate()?;
        let phi = phi.into();
        if phi.shape() != (spec.num_samples(), spec.num_coeffs()) {
            return invalid(format!(
                "phi shape {:?} does not match the signal model ({}, {})",
                phi.shape(),
                spec.num_samples(),
                spec.num_coeffs()
            ));
        }
        if signs.len() != phi.nrows() {
            return invalid(format!("{} signs for {} rows", signs.len(), phi.nrows()));
        }
        Ok(Self {
            kind: MeasurementKind::Zc,
            phi,
            signs,
            levels: Vec::new(),
            spec,
        })
    }

    /// Level-crossing ensemble from observed stacked signs.
    pub fn lc(
        spec: SignalSpec,
        phi: impl Into<Arc<DMatrix<f64>>>,
        levels: Vec<f64>,
        signs: SignVector,
    ) -> Result<Self> {
        spec.validate()?;
        let phi = phi.into();
        check_levels(&levels)?;
        if phi.shape() != (spec.num_samples(), spec.num_coeffs()) {
            return invalid(format!(
                "phi shape {:?} does not match the signal model",
                phi.shape()
            ));
        }
        if signs.len() != phi.nrows() * levels.len() {
            return invalid(format!(
                "{} signs for {} stacked rows",
                signs.len(),
                phi.nrows() * levels.len()
            ));
        }
        Ok(Self {
            kind: MeasurementKind::Lc,
            phi,
            signs,
            levels,
            spec,
        })
    }

    /// Measures `coeffs` through zero crossings.
    pub fn measure_zc(
        spec: SignalSpec,
        phi: impl Into<Arc<DMatrix<f64>>>,
        coeffs: &CoeffVector,
    ) -> Result<Self> {
        let samples = uniform_sample(coeffs, &spec);
        Self::zc(spec, phi, sign_measure(&samples))
    }

    /// Measures `coeffs` through crossings of `levels`.
    pub fn measure_lc(
        spec: SignalSpec,
        phi: impl Into<Arc<DMatrix<f64>>>,
        coeffs: &CoeffVector,
        levels: Vec<f64>,
    ) -> Result<Self> {
        let samples = uniform_sample(coeffs, &spec);
        let signs = lc_measure(&samples, &levels);
        Self::lc(spec, phi, levels, signs)
    }

    /// Number of level slots `L + 1` (zero for ZC).
    pub fn level_slots(&self) -> usize {
        self.levels.len()
    }

    pub fn rows(&self) -> usize {
        self.signs.len()
    }

    pub fn cols(&self) -> usize {
        self.phi.ncols() + self.level_slots()
    }

    pub fn operator(&self) -> EnsembleOperator<'_> {
        match self.kind {
            MeasurementKind::Zc => EnsembleOperator::Dense(DenseOperator(&self.phi)),
            MeasurementKind::Lc => EnsembleOperator::Stacked(StackedLevelOperator::new(
                &self.phi,
                block_order(&self.levels),
            )),
        }
    }

    /// Dense `Phi'`; for ZC this is a copy of `Phi`.
    pub fn phi_prime(&self) -> Result<DMatrix<f64>> {
        match self.kind {
            MeasurementKind::Zc => Ok(self.phi.as_ref().clone()),
            MeasurementKind::Lc => build_phi_prime(&self.phi, &self.levels),
        }
    }
}

/// Writes a matrix as CSV, one row per line.
pub fn matrix_to_csv(mat: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in mat.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// One sign change of one level comparator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LcEvent {
    /// Sample index in `1..M` at which the new sign is first observed.
    pub tick: usize,
    /// Signed level index in `-L/2..=L/2`.
    pub level_index: i64,
    /// New sign after the crossing.
    pub direction: i8,
}

/// Encoded output of an emulated level-crossing converter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcEventStream {
    /// Ascending levels.
    pub levels: Vec<f64>,
    pub sample_period: f64,
    pub num_samples: usize,
    /// `sign(x[0] - l)` per ascending level.
    pub initial_signs: Vec<i8>,
    pub events: Vec<LcEvent>,
}

impl LcEventStream {
    pub fn half_span(&self) -> i64 {
        (self.levels.len() / 2) as i64
    }

    /// Ascending position of a signed level index.
    pub fn level_position(&self, level_index: i64) -> Option<usize> {
        let pos = level_index + self.half_span();
        (pos >= 0 && (pos as usize) < self.levels.len()).then_some(pos as usize)
    }

    pub fn level_value(&self, level_index: i64) -> Option<f64> {
        self.level_position(level_index).map(|p| self.levels[p])
    }

    pub fn to_text(&self) -> String {
        let join = |xs: Vec<String>| xs.join(",");
        let mut out = String::new();
        let _ = writeln!(
            out,
            "levels={}",
            join(self.levels.iter().map(|v| format!("{v:e}")).collect())
        );
        let _ = writeln!(out, "T={:e}", self.sample_period);
        let _ = writeln!(out, "M={}", self.num_samples);
        let _ = writeln!(
            out,
            "init={}",
            join(self.initial_signs.iter().map(|s| s.to_string()).collect())
        );
        for e in &self.events {
            let _ = writeln!(out, "{},{},{}", e.tick, e.level_index, e.direction);
        }
        out
    }

    /// Parses the text form. Structural validity is checked by [`decode_lc_events`].
    pub fn from_text(text: &str) -> Result<Self> {
        fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
            s.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad {what}: {s:?}")))
        }
        fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
            if s.trim().is_empty() {
                return Ok(Vec::new());
            }
            s.split(',').map(|c| parse(c, what)).collect()
        }

        let mut levels = None;
        let mut period = None;
        let mut samples = None;
        let mut init = None;
        let mut events = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(v) = line.strip_prefix("levels=") {
                levels = Some(parse_list::<f64>(v, "level")?);
            } else if let Some(v) = line.strip_prefix("T=") {
                period = Some(parse::<f64>(v, "sample period")?);
            } else if let Some(v) = line.strip_prefix("M=") {
                samples = Some(parse::<usize>(v, "sample count")?);
            } else if let Some(v) = line.strip_prefix("init=") {
                init = Some(parse_list::<i8>(v, "initial sign")?);
            } else {
                let cells: Vec<&str> = line.split(',').collect();
                if cells.len() != 3 {
                    return Err(Error::Parse(format!("bad event line {line:?}")));
                }
                events.push(LcEvent {
                    tick: parse(cells[0], "tick")?,
                    level_index: parse(cells[1], "level index")?,
                    direction: parse(cells[2], "direction")?,
                });
            }
        }
        let missing = |what: &str| Error::Parse(format!("missing header {what}"));
        Ok(Self {
            levels: levels.ok_or_else(|| missing("levels"))?,
            sample_period: period.ok_or_else(|| missing("T"))?,
            num_samples: samples.ok_or_else(|| missing("M"))?,
            initial_signs: init.ok_or_else(|| missing("init"))?,
            events,
        })
    }
}

/// Emulates a level-crossing converter on the uniform grid.
pub fn encode_lc_events(
    samples: &[f64],
    levels: &[f64],
    sample_period: f64,
) -> Result<LcEventStream> {
    check_levels(levels)?;
    if samples.is_empty() {
        return invalid("no samples to encode");
    }
    let half = (levels.len() / 2) as i64;
    let initial_signs: Vec<i8> = levels.iter().map(|l| sign(samples[0] - l)).collect();
    let mut current = initial_signs.clone();
    let mut events = Vec::new();
    for (tick, &x) in samples.iter().enumerate().skip(1) {
        for (pos, level) in levels.iter().enumerate() {
            let s = sign(x - level);
            if s != current[pos] {
                current[pos] = s;
                events.push(LcEvent {
                    tick,
                    level_index: pos as i64 - half,
                    direction: s,
                });
            }
        }
    }
    Ok(LcEventStream {
        levels: levels.to_vec(),
        sample_period,
        num_samples: samples.len(),
        initial_signs,
        events,
    })
}

/// Replays a stream into the stacked sign vector `y'`.
pub fn decode_lc_events(stream: &LcEventStream) -> Result<SignVector> {
    let corrupt = |msg: String| Err(Error::CorruptStream(msg));
    if check_levels(&stream.levels).is_err() {
        return corrupt("levels must be an odd-length strictly increasing list".into());
    }
    let n_levels = stream.levels.len();
    let m = stream.num_samples;
    if m == 0 {
        return corrupt("M must be positive".into());
    }
    if stream.initial_signs.len() != n_levels {
        return corrupt(format!(
            "{} initial signs for {n_levels} levels",
            stream.initial_signs.len()
        ));
    }
    if stream.initial_signs.iter().any(|s| *s != 1 && *s != -1) {
        return corrupt("initial signs must be +1 or -1".into());
    }

    // per ascending level: sequence of signs
    let mut per_level: Vec<Vec<i8>> = stream.initial_signs.iter().map(|&s| vec![s; m]).collect();
    let mut current = stream.initial_signs.clone();
    let mut cursor = vec![1usize; n_levels];
    let mut last: Option<(usize, i64)> = None;

    for e in &stream.events {
        if e.tick == 0 || e.tick >= m {
            return corrupt(format!("tick {} outside 1..{m}", e.tick));
        }
        let Some(pos) = stream.level_position(e.level_index) else {
            return corrupt(format!("level index {} out of range", e.level_index));
        };
        if let Some(prev) = last {
            if (e.tick, e.level_index) == prev {
                return corrupt(format!(
                    "duplicate event at tick {} level {}",
                    e.tick, e.level_index
                ));
            }
            if (e.tick, e.level_index) < prev {
                return corrupt("events are not sorted by (tick, level)".into());
            }
        }
        last = Some((e.tick, e.level_index));
        if e.direction != -current[pos] {
            return corrupt(format!(
                "event at tick {} level {} does not flip the current sign",
                e.tick, e.level_index
            ));
        }
        let seq = &mut per_level[pos];
        seq[cursor[pos]..e.tick].fill(current[pos]);
        current[pos] = e.direction;
        cursor[pos] = e.tick;
    }
    for (pos, seq) in per_level.iter_mut().enumerate() {
        seq[cursor[pos]..].fill(current[pos]);
    }

    let mut out = Vec::with_capacity(m * n_levels);
    for seq in per_level.iter().rev() {
        out.extend_from_slice(seq);
    }
    Ok(SignVector(out))
}
