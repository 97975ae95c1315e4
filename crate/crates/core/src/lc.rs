//! Level-crossing reconstruction on the stacked system `y' = sign(Phi' a')`.
//!
//! The augmented unknown is `a' = [a; tail]` with one tail slot per level.
//! Both solvers keep the iterate in `C = { a' : tail = -1 }` by projecting
//! after every step, which fixes the scale that zero crossings leave free.

use crate::error::Result;
use crate::onebit::{
    lc_cost_terms, project_tail, require_lc, run_biht, run_bsl0, BihtParams, Bsl0Params, Bsl0Setup,
    LoopOutcome, SolveTrace,
};
use crate::operator::SensingOperator;
use crate::sampling::MeasurementEnsemble;
use crate::signal::CoeffVector;

/// Signal coefficients followed by `L + 1` level slots.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedCoeffVector {
    pub values: Vec<f64>,
    pub head_len: usize,
}

impl AugmentedCoeffVector {
    pub fn new(values: Vec<f64>, head_len: usize) -> Self {
        assert!(head_len <= values.len());
        Self { values, head_len }
    }

    /// `[a; -1, ..., -1]`.
    pub fn from_head(head: &CoeffVector, level_slots: usize) -> Self {
        let mut values = head.0.clone();
        values.extend(std::iter::repeat_n(-1.0, level_slots));
        Self {
            values,
            head_len: head.len(),
        }
    }

    pub fn head(&self) -> &[f64] {
        &self.values[..self.head_len]
    }

    pub fn tail(&self) -> &[f64] {
        &self.values[self.head_len..]
    }

    pub fn is_feasible(&self) -> bool {
        self.tail().iter().all(|v| *v == -1.0)
    }
}

/// Euclidean projection onto `C`: head untouched, tail set to -1.
pub fn project_onto_c(mut a_prime: AugmentedCoeffVector) -> AugmentedCoeffVector {
    project_tail(&mut a_prime.values, a_prime.head_len);
    a_prime
}

fn finish(
    solver: &str,
    ensemble: &MeasurementEnsemble,
    out: LoopOutcome,
    sigma: Option<f64>,
    params: serde_json::Value,
) -> Result<SolveTrace> {
    let op = ensemble.operator();
    let x = op.apply(&out.iterate);
    let head = ensemble.phi.ncols();
    Ok(SolveTrace {
        solver: solver.into(),
        estimate: CoeffVector(out.iterate[..head].to_vec()),
        final_cost_terms: lc_cost_terms(&out.iterate, &x, &ensemble.signs, sigma)?,
        sign_consistency: ensemble.signs.agreement(&x),
        augmented: Some(out.iterate),
        iterations: out.steps,
        converged: out.converged,
        params,
        levels: ensemble.levels.clone(),
        history: out.history,
    })
}

/// Binary IHT modified for level crossings: gradient step, best-K on the head,
/// then projection onto `C`. The head is returned without rescaling.
pub fn biht_lc(ensemble: &MeasurementEnsemble, params: &BihtParams) -> Result<SolveTrace> {
    require_lc(ensemble)?;
    let head = ensemble.phi.ncols();
    params.validate(head)?;
    let setup = Bsl0Setup {
        head_len: head,
        level_slots: Some(ensemble.level_slots()),
    };
    let out = run_biht(&ensemble.operator(), &ensemble.signs, params, &setup);
    finish(
        "biht_lc",
        ensemble,
        out,
        None,
        serde_json::to_value(params)?,
    )
}

/// BSL0 modified for level crossings: no norm penalty, projection onto `C`
/// after each step. `theta0` and `delta` are ignored.
pub fn bsl0_lc(ensemble: &MeasurementEnsemble, params: &Bsl0Params) -> Result<SolveTrace> {
    require_lc(ensemble)?;
    params.validate()?;
    let setup = Bsl0Setup {
        head_len: ensemble.phi.ncols(),
        level_slots: Some(ensemble.level_slots()),
    };
    let out = run_bsl0(&ensemble.operator(), &ensemble.signs, params, &setup);
    let sigma = out.sigma;
    finish(
        "bsl0_lc",
        ensemble,
        out,
        Some(sigma),
        serde_json::to_value(params)?,
    )
}
