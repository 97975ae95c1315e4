//! Zero-crossing reconstruction: Binary Smoothed-L0 and Binary IHT.
//!
//! The kernels here (smoothed-L0 surrogate, sign-consistency cost, BSL0
//! sub-gradient, best-K thresholding) are shared with the level-crossing
//! solvers in [`crate::lc`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::operator::SensingOperator;
use crate::sampling::{sign, MeasurementEnsemble, MeasurementKind, SignVector};
use crate::signal::{l2_norm, CoeffVector};

/// How the smoothed-L0 term enters the gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityStep {
    /// `(2/sigma^2) exp(-a^2/sigma^2) a`, the plain gradient of `F_sigma`.
    Gradient,
    /// `exp(-a^2/sigma^2) a`, the gradient of `F_sigma` scaled by `sigma^2/2`.
    /// The classic SL0 update.
    SigmaScaled,
}

/// Parameters of the dual-loop BSL0 iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bsl0Params {
    pub sigma0: f64,
    pub lambda0: f64,
    /// Norm-penalty weight; unused by the level-crossing variant.
    pub theta0: f64,
    /// Per-step sigma decay, in (0, 1).
    pub alpha: f64,
    /// Per-pass lambda growth, > 1.
    pub beta: f64,
    /// Per-pass theta growth, > 1; unused by the level-crossing variant.
    pub delta: f64,
    pub sigma_min: f64,
    pub mu: f64,
    pub epsilon: f64,
    /// Iteration cap. Checked before each outer pass, so the last pass always
    /// runs its full sigma schedule; see `strict_iteration_cap`.
    pub iter_max: usize,
    /// Also stop mid-pass once `iter_max` gradient steps have been taken.
    pub strict_iteration_cap: bool,
    /// Use `4 theta (|a|^2 - 1) a` instead of `theta (|a|^2 - 1) a`.
    pub exact_penalty_gradient: bool,
    /// Keep shrinking sigma across outer passes instead of restarting at sigma0.
    /// Later passes take as many steps as the first one did.
    pub continue_sigma: bool,
    pub sparsity_step: SparsityStep,
    /// Level-crossing only: weight the consistency term by `lambda / (L + 1)`,
    /// i.e. penalize the mean per-level hinge rather than the stacked sum.
    pub per_level_consistency: bool,
    pub trace_iterations: bool,
}

impl Default for Bsl0Params {
    fn default() -> Self {
        Self {
            sigma0: 0.1,
            lambda0: 2.5e-4,
            theta0: 0.3,
            alpha: 0.9,
            beta: 2.0,
            delta: 2.0,
            sigma_min: 0.001,
            mu: 0.7,
            epsilon: 0.0005,
            iter_max: 50,
            strict_iteration_cap: false,
            exact_penalty_gradient: false,
            continue_sigma: false,
            sparsity_step: SparsityStep::SigmaScaled,
            per_level_consistency: true,
            trace_iterations: false,
        }
    }
}

impl Bsl0Params {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma0", self.sigma0),
            ("lambda0", self.lambda0),
            ("theta0", self.theta0),
            ("sigma_min", self.sigma_min),
            ("mu", self.mu),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return invalid(format!("beta must exceed 1, got {}", self.beta));
        }
        if !(self.delta > 1.0 && self.delta.is_finite()) {
            return invalid(format!("delta must exceed 1, got {}", self.delta));
        }
        if self.sigma_min >= self.sigma0 {
            return invalid("sigma_min must be below sigma0");
        }
        if self.iter_max == 0 {
            return invalid("iter_max must be positive");
        }
        Ok(())
    }
}

/// Parameters of binary iterative hard thresholding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BihtParams {
    /// Number of kept coefficients `K`.
    pub sparsity: usize,
    pub mu: f64,
    /// Divide `mu` by the number of measurement rows.
    pub row_normalized_step: bool,
    pub epsilon: f64,
    pub iter_max: usize,
    pub trace_iterations: bool,
}

impl Default for BihtParams {
    fn default() -> Self {
        Self {
            sparsity: 1,
            mu: 3.0,
            row_normalized_step: true,
            epsilon: 0.0005,
            iter_max: 50,
            trace_iterations: false,
        }
    }
}

impl BihtParams {
    pub fn with_sparsity(sparsity: usize) -> Self {
        Self {
            sparsity,
            ..Self::default()
        }
    }

    pub(crate) fn validate(&self, head_len: usize) -> Result<()> {
        if self.sparsity == 0 || self.sparsity > head_len {
            return invalid(format!(
                "sparsity {} must be in 1..={head_len}",
                self.sparsity
            ));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return invalid(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return invalid(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.iter_max == 0 {
            return invalid("iter_max must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTerms {
    pub f_sigma: f64,
    pub j: f64,
    pub norm_penalty: f64,
}

/// State after one gradient step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub sign_consistency: f64,
    /// Tail equals -1 exactly (level-crossing solvers only).
    pub feasible: Option<bool>,
    /// Nonzeros among the signal coefficients.
    pub head_nnz: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub solver: String,
    /// Signal coefficients; unit norm for zero-crossing solvers.
    pub estimate: CoeffVector,
    /// Full augmented iterate `[a; tail]` (level-crossing solvers only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmented: Option<Vec<f64>>,
    pub iterations: usize,
    pub final_cost_terms: CostTerms,
    pub sign_consistency: f64,
    pub converged: bool,
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<IterationRecord>,
}

impl SolveTrace {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `F_sigma(a) = sum_m (1 - exp(-a_m^2 / sigma^2))`.
pub fn f_sigma(a: &[f64], sigma: f64) -> Result<f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return invalid(format!("sigma must be positive, got {sigma}"));
    }
    let s2 = sigma * sigma;
    Ok(a.iter().map(|v| -(-v * v / s2).exp_m1()).sum())
}

fn check_dims(op: &impl SensingOperator, a: &[f64], y: &SignVector) -> Result<()> {
    if a.len() != op.cols() || y.len() != op.rows() {
        return invalid(format!(
            "dimension mismatch: operator {}x{}, vector {}, signs {}",
            op.rows(),
            op.cols(),
            a.len(),
            y.len()
        ));
    }
    Ok(())
}

/// `J(a) = || [Y (A a)]_- ||_1`.
pub fn consistency_cost(a: &[f64], op: &impl SensingOperator, y: &SignVector) -> Result<f64> {
    check_dims(op, a, y)?;
    Ok(hinge(&op.apply(a), y))
}

fn hinge(x: &[f64], y: &SignVector) -> f64 {
    x.iter()
        .zip(y.as_slice())
        .map(|(v, s)| (-(*s as f64) * v).max(0.0))
        .sum()
}

/// `(1/2) A^T (sign(A a) - y)`; the sub-gradient of `J` used by BIHT.
fn sign_residual_gradient(x: &[f64], op: &impl SensingOperator, y: &SignVector) -> Vec<f64> {
    let r: Vec<f64> = x
        .iter()
        .zip(y.as_slice())
        .map(|(v, s)| 0.5 * (sign(*v) - *s) as f64)
        .collect();
    op.apply_adjoint(&r)
}

/// Which terms of the BSL0 sub-gradient are active and in what form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientForm {
    pub sparsity_step: SparsityStep,
    /// `Some(exact)` includes the norm-penalty term; `None` drops it.
    pub penalty: Option<bool>,
}

impl GradientForm {
    /// Unscaled sparsity term and the `theta (|a|^2 - 1) a` penalty.
    pub const PLAIN: Self = Self {
        sparsity_step: SparsityStep::Gradient,
        penalty: Some(false),
    };
}

/// BSL0 sub-gradient
/// `(2/s^2) diag(exp(-a^2/s^2)) a + (lambda/2) A^T (sign(A a) - y) + theta (|a|^2 - 1) a`.
pub fn bsl0_gradient(
    a: &[f64],
    op: &impl SensingOperator,
    y: &SignVector,
    sigma: f64,
    lambda: f64,
    theta: f64,
    form: GradientForm,
) -> Result<Vec<f64>> {
    check_dims(op, a, y)?;
    if sigma.is_nan() || sigma <= 0.0 {
        return invalid(format!("sigma must be positive, got {sigma}"));
    }
    let x = op.apply(a);
    Ok(gradient_from_product(
        a, &x, op, y, sigma, lambda, theta, form,
    ))
}

#[allow(clippy::too_many_arguments)]
fn gradient_from_product(
    a: &[f64],
    x: &[f64],
    op: &impl SensingOperator,
    y: &SignVector,
    sigma: f64,
    lambda: f64,
    theta: f64,
    form: GradientForm,
) -> Vec<f64> {
    let s2 = sigma * sigma;
    let sparsity_scale = match form.sparsity_step {
        SparsityStep::Gradient => 2.0 / s2,
        SparsityStep::SigmaScaled => 1.0,
    };
    let mut g = sign_residual_gradient(x, op, y);
    let penalty = form.penalty.map(|exact| {
        let excess = a.iter().map(|v| v * v).sum::<f64>() - 1.0;
        let c = if exact { 4.0 } else { 1.0 };
        c * theta * excess
    });
    for (gi, ai) in g.iter_mut().zip(a) {
        *gi = sparsity_scale * (-ai * ai / s2).exp() * ai + lambda * *gi;
        if let Some(p) = penalty {
            *gi += p * ai;
        }
    }
    g
}

/// Best `k`-term approximation; ties keep the lower index.
pub fn hard_threshold(v: &[f64], k: usize) -> Result<Vec<f64>> {
    if k > v.len() {
        return invalid(format!("cannot keep {k} of {} entries", v.len()));
    }
    let mut out = vec![0.0; v.len()];
    for i in top_k_indices(v, k) {
        out[i] = v[i];
    }
    Ok(out)
}

fn top_k_indices(v: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    idx.truncate(k);
    idx
}

pub(crate) fn nnz(v: &[f64]) -> usize {
    v.iter().filter(|x| **x != 0.0).count()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Variant-specific pieces of the BSL0 loop.
pub(crate) struct Bsl0Setup {
    pub head_len: usize,
    /// Level-crossing mode: tail fixed to -1, no norm penalty.
    pub level_slots: Option<usize>,
}

pub(crate) struct LoopOutcome {
    pub iterate: Vec<f64>,
    pub steps: usize,
    pub converged: bool,
    pub sigma: f64,
    pub theta: f64,
    pub history: Vec<IterationRecord>,
}

pub(crate) fn project_tail(a: &mut [f64], head_len: usize) {
    a[head_len..].fill(-1.0);
}

fn tail_feasible(a: &[f64], head_len: usize) -> bool {
    a[head_len..].iter().all(|v| *v == -1.0)
}

fn record(
    k: usize,
    a: &[f64],
    op: &impl SensingOperator,
    y: &SignVector,
    setup: &Bsl0Setup,
) -> IterationRecord {
    IterationRecord {
        k,
        sign_consistency: y.agreement(&op.apply(a)),
        feasible: setup.level_slots.map(|_| tail_feasible(a, setup.head_len)),
        head_nnz: nnz(&a[..setup.head_len]),
    }
}

pub(crate) fn run_bsl0(
    op: &impl SensingOperator,
    y: &SignVector,
    params: &Bsl0Params,
    setup: &Bsl0Setup,
) -> LoopOutcome {
    let dim = op.cols();
    let lc = setup.level_slots.is_some();
    let form = GradientForm {
        sparsity_step: params.sparsity_step,
        penalty: (!lc).then_some(params.exact_penalty_gradient),
    };

    let mut a = vec![0.0; dim];
    if lc {
        project_tail(&mut a, setup.head_len);
    }
    let mut prev = vec![-100.0; dim];
    let mut k = 1usize;
    let mut lambda = match setup.level_slots {
        Some(slots) if params.per_level_consistency => params.lambda0 / slots as f64,
        _ => params.lambda0,
    };
    let mut theta = params.theta0;
    let mut sigma = params.sigma0;
    let mut last_sigma = sigma;
    let mut first_pass_len: Option<usize> = None;
    let mut history = Vec::new();

    while diff_norm(&a, &prev) > params.epsilon && k < params.iter_max {
        if !params.continue_sigma {
            sigma = params.sigma0;
        }
        let mut pass_len = 0;
        loop {
            let more = match (params.continue_sigma, first_pass_len) {
                (true, Some(len)) => pass_len < len,
                _ => sigma > params.sigma_min,
            };
            if !more || (params.strict_iteration_cap && k >= params.iter_max) {
                break;
            }
            let x = op.apply(&a);
            let g = gradient_from_product(&a, &x, op, y, sigma, lambda, theta, form);
            let next: Vec<f64> = a
                .iter()
                .zip(&g)
                .map(|(ai, gi)| ai - params.mu * gi)
                .collect();
            prev = std::mem::replace(&mut a, next);
            if lc {
                project_tail(&mut a, setup.head_len);
            }
            last_sigma = sigma;
            sigma *= params.alpha;
            k += 1;
            pass_len += 1;
            if params.trace_iterations {
                history.push(record(k - 1, &a, op, y, setup));
            }
        }
        first_pass_len.get_or_insert(pass_len);
        lambda *= params.beta;
        theta *= params.delta;
    }

    let d = diff_norm(&a, &prev);
    LoopOutcome {
        iterate: a,
        steps: k - 1,
        converged: d.is_finite() && d <= params.epsilon,
        sigma: last_sigma,
        theta,
        history,
    }
}

pub(crate) fn run_biht(
    op: &impl SensingOperator,
    y: &SignVector,
    params: &BihtParams,
    setup: &Bsl0Setup,
) -> LoopOutcome {
    let dim = op.cols();
    let head = setup.head_len;
    let mut a = vec![0.0; dim];
    if setup.level_slots.is_some() {
        project_tail(&mut a, head);
    }
    let mut prev = vec![-100.0; dim];
    let mut k = 1usize;
    let mut history = Vec::new();
    let mu = if params.row_normalized_step {
        params.mu / op.rows() as f64
    } else {
        params.mu
    };

    while diff_norm(&a, &prev) > params.epsilon && k < params.iter_max {
        let x = op.apply(&a);
        let g = sign_residual_gradient(&x, op, y);
        let mut next: Vec<f64> = a.iter().zip(&g).map(|(ai, gi)| ai - mu * gi).collect();
        let kept = top_k_indices(&next[..head], params.sparsity);
        let mut thresholded = vec![0.0; head];
        for i in kept {
            thresholded[i] = next[i];
        }
        next[..head].copy_from_slice(&thresholded);
        if setup.level_slots.is_some() {
            project_tail(&mut next, head);
        }
        prev = std::mem::replace(&mut a, next);
        k += 1;
        if params.trace_iterations {
            history.push(record(k - 1, &a, op, y, setup));
        }
    }

    let d = diff_norm(&a, &prev);
    LoopOutcome {
        iterate: a,
        steps: k - 1,
        converged: d.is_finite() && d <= params.epsilon,
        sigma: 0.0,
        theta: 0.0,
        history,
    }
}

fn require_kind(ensemble: &MeasurementEnsemble, kind: MeasurementKind) -> Result<()> {
    if ensemble.kind != kind {
        return invalid(format!(
            "solver expects {kind:?} measurements, got {:?}",
            ensemble.kind
        ));
    }
    Ok(())
}

pub(crate) fn require_lc(ensemble: &MeasurementEnsemble) -> Result<()> {
    require_kind(ensemble, MeasurementKind::Lc)
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = l2_norm(v);
    if n == 0.0 || !n.is_finite() {
        return v.to_vec();
    }
    v.iter().map(|x| x / n).collect()
}

/// Binary Smoothed-L0 reconstruction from zero-crossing signs.
pub fn bsl0_zc(ensemble: &MeasurementEnsemble, params: &Bsl0Params) -> Result<SolveTrace> {
    require_kind(ensemble, MeasurementKind::Zc)?;
    params.validate()?;
    let op = ensemble.operator();
    let y = &ensemble.signs;
    let setup = Bsl0Setup {
        head_len: ensemble.phi.ncols(),
        level_slots: None,
    };
    let out = run_bsl0(&op, y, params, &setup);

    let x = op.apply(&out.iterate);
    let excess = out.iterate.iter().map(|v| v * v).sum::<f64>() - 1.0;
    let terms = CostTerms {
        f_sigma: f_sigma(&out.iterate, out.sigma)?,
        j: hinge(&x, y),
        norm_penalty: out.theta * excess * excess,
    };
    Ok(SolveTrace {
        solver: "bsl0".into(),
        estimate: CoeffVector(unit(&out.iterate)),
        augmented: None,
        iterations: out.steps,
        final_cost_terms: terms,
        sign_consistency: y.agreement(&x),
        converged: out.converged,
        params: serde_json::to_value(params)?,
        levels: Vec::new(),
        history: out.history,
    })
}

/// Binary iterative hard thresholding from zero-crossing signs.
pub fn biht_zc(ensemble: &MeasurementEnsemble, params: &BihtParams) -> Result<SolveTrace> {
    require_kind(ensemble, MeasurementKind::Zc)?;
    let head = ensemble.phi.ncols();
    params.validate(head)?;
    let op = ensemble.operator();
    let y = &ensemble.signs;
    let setup = Bsl0Setup {
        head_len: head,
        level_slots: None,
    };
    let out = run_biht(&op, y, params, &setup);
    let x = op.apply(&out.iterate);
    Ok(SolveTrace {
        solver: "biht".into(),
        estimate: CoeffVector(unit(&out.iterate)),
        augmented: None,
        iterations: out.steps,
        final_cost_terms: CostTerms {
            f_sigma: 0.0,
            j: hinge(&x, y),
            norm_penalty: 0.0,
        },
        sign_consistency: y.agreement(&x),
        converged: out.converged,
        params: serde_json::to_value(params)?,
        levels: Vec::new(),
        history: out.history,
    })
}

pub(crate) fn lc_cost_terms(
    iterate: &[f64],
    x: &[f64],
    y: &SignVector,
    sigma: Option<f64>,
) -> Result<CostTerms> {
    Ok(CostTerms {
        f_sigma: match sigma {
            Some(s) => f_sigma(iterate, s)?,
            None => 0.0,
        },
        j: hinge(x, y),
        norm_penalty: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::DenseOperator;
    use crate::sampling::{build_phi, lc_measure, sign_measure, uniform_levels};
    use crate::signal::{dynamic_range, random_sparse_coeffs, uniform_sample, SignalSpec};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_spec() -> SignalSpec {
        SignalSpec::new(10, 10.0, 1.99, 0.01, (1, 10)).unwrap()
    }

    fn zc_instance(k: usize, seed: u64) -> (MeasurementEnsemble, CoeffVector) {
        let spec = tiny_spec();
        let a = random_sparse_coeffs(&spec, k, false, seed).unwrap();
        (
            MeasurementEnsemble::measure_zc(spec, build_phi(&spec), &a).unwrap(),
            a,
        )
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-scale..scale)).collect()
    }

    #[test]
    fn f_sigma_values() {
        assert_eq!(f_sigma(&[0.0, 0.0], 0.1).unwrap(), 0.0);
        let v = f_sigma(&[0.3], 0.3).unwrap();
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((v - 0.632121).abs() < 1e-6);
        let s = 0.05;
        assert!((f_sigma(&[10.0 * s, 0.0, 10.0 * s], s).unwrap() - 2.0).abs() < 1e-40);
        assert!(f_sigma(&[1.0], 0.0).is_err());
        assert!(f_sigma(&[1.0], -1.0).is_err());
    }

    #[test]
    fn f_sigma_decreases_in_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let a = random_vec(&mut rng, 8, 1.0);
            let grid = [0.2, 0.5, 1.0, 2.0, 5.0];
            let vals: Vec<f64> = grid.iter().map(|s| f_sigma(&a, *s).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
        }
    }

    #[test]
    fn hinge_examples() {
        let eye = DMatrix::<f64>::identity(3, 3);
        let op = DenseOperator(&eye);
        let ones = SignVector(vec![1, 1, 1]);
        assert_eq!(
            consistency_cost(&[2.0, -3.0, 1.0], &op, &ones).unwrap(),
            3.0
        );
        let y = SignVector(vec![1, -1, 1]);
        assert_eq!(consistency_cost(&[2.0, -3.0, 1.0], &op, &y).unwrap(), 0.0);
        assert!(consistency_cost(&[1.0, 2.0], &op, &ones).is_err());
    }

    #[test]
    fn hinge_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let phi = DMatrix::from_fn(30, 7, |_, _| rng.random_range(-1.0..1.0));
        let op = DenseOperator(&phi);
        for _ in 0..20 {
            let a = random_vec(&mut rng, 7, 1.0);
            let y = SignVector(
                (0..30)
                    .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
                    .collect(),
            );
            let mut oracle = 0.0;
            for m in 0..30 {
                let mut x = 0.0;
                for n in 0..7 {
                    x += phi[(m, n)] * a[n];
                }
                let prod = y.0[m] as f64 * x;
                if prod < 0.0 {
                    oracle -= prod;
                }
            }
            let got = consistency_cost(&a, &op, &y).unwrap();
            assert!((got - oracle).abs() <= 1e-12 * oracle.max(1.0));
        }
    }

    #[test]
    fn zero_cost_iff_consistent() {
        let (ens, a) = zc_instance(3, 2);
        let op = ens.operator();
        assert_eq!(consistency_cost(&a.0, &op, &ens.signs).unwrap(), 0.0);
        assert_eq!(ens.signs.agreement(&op.apply(&a.0)), 1.0);
        let flipped: Vec<f64> = a.0.iter().map(|v| -v).collect();
        assert!(consistency_cost(&flipped, &op, &ens.signs).unwrap() > 0.0);
        assert!(ens.signs.agreement(&op.apply(&flipped)) < 1.0);
    }

    #[test]
    fn gradient_at_zero_vanishes() {
        let (ens, _) = zc_instance(2, 1);
        let y = sign_measure(&vec![0.0; ens.rows()]);
        let a = vec![0.0; ens.cols()];
        let g = bsl0_gradient(
            &a,
            &ens.operator(),
            &y,
            0.1,
            2.5e-4,
            0.3,
            GradientForm::PLAIN,
        )
        .unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_first_term_closed_form() {
        let one = DMatrix::<f64>::identity(1, 1);
        let op = DenseOperator(&one);
        let y = SignVector(vec![1]);
        let sigma = 0.1;
        let g = bsl0_gradient(&[sigma], &op, &y, sigma, 0.0, 0.0, GradientForm::PLAIN).unwrap();
        assert!((g[0] - 2.0 / sigma * (-1.0f64).exp()).abs() < 1e-12);
        assert!(bsl0_gradient(&[sigma], &op, &y, 0.0, 0.0, 0.0, GradientForm::PLAIN).is_err());
        assert!(bsl0_gradient(&[0.0, 0.0], &op, &y, 0.1, 0.0, 0.0, GradientForm::PLAIN).is_err());
    }

    #[test]
    fn plain_penalty_term() {
        let one = DMatrix::<f64>::identity(2, 2);
        let op = DenseOperator(&one);
        let y = SignVector(vec![1, 1]);
        let a = [2.0, 1.0];
        let smooth_only = |form| bsl0_gradient(&a, &op, &y, 1e3, 0.0, 0.5, form).unwrap();
        let plain = smooth_only(GradientForm::PLAIN);
        let exact = smooth_only(GradientForm {
            sparsity_step: SparsityStep::Gradient,
            penalty: Some(true),
        });
        // theta (|a|^2 - 1) a = 0.5 * 4 * a, plus a negligible sparsity term at huge sigma
        assert!((plain[0] - 4.0).abs() < 1e-5);
        assert!((exact[0] - 16.0).abs() < 1e-5);
    }

    #[test]
    fn smooth_gradient_matches_finite_differences() {
        let one = DMatrix::<f64>::zeros(1, 6);
        let op = DenseOperator(&one);
        let y = SignVector(vec![1]);
        let form = GradientForm {
            sparsity_step: SparsityStep::Gradient,
            penalty: Some(true),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for sigma in [0.1, 0.01] {
            let theta = 0.3;
            let cost = |a: &[f64]| {
                let e = a.iter().map(|v| v * v).sum::<f64>() - 1.0;
                f_sigma(a, sigma).unwrap() + theta * e * e
            };
            for _ in 0..20 {
                let a = random_vec(&mut rng, 6, 2.0 * sigma);
                let g = bsl0_gradient(&a, &op, &y, sigma, 0.0, theta, form).unwrap();
                let h = 1e-5 * sigma;
                let fd: Vec<f64> = (0..6)
                    .map(|i| {
                        let mut p = a.clone();
                        let mut m = a.clone();
                        p[i] += h;
                        m[i] -= h;
                        (cost(&p) - cost(&m)) / (2.0 * h)
                    })
                    .collect();
                let err = diff_norm(&g, &fd) / l2_norm(&g);
                assert!(err < 1e-6, "sigma {sigma}: relative error {err}");
            }
        }
    }

    #[test]
    fn consistency_term_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let phi = DMatrix::from_fn(40, 5, |_, _| rng.random_range(-1.0..1.0));
        let op = DenseOperator(&phi);
        let y = SignVector(
            (0..40)
                .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
                .collect(),
        );
        let lambda = 0.7;
        for _ in 0..10 {
            let a = random_vec(&mut rng, 5, 1.0);
            let g = bsl0_gradient(
                &a,
                &op,
                &y,
                1e6,
                lambda,
                0.0,
                GradientForm {
                    sparsity_step: SparsityStep::Gradient,
                    penalty: None,
                },
            )
            .unwrap();
            let h = 1e-9;
            for i in 0..5 {
                let mut p = a.clone();
                let mut m = a.clone();
                p[i] += h;
                m[i] -= h;
                let fd = lambda
                    * (consistency_cost(&p, &op, &y).unwrap()
                        - consistency_cost(&m, &op, &y).unwrap())
                    / (2.0 * h);
                assert!(
                    (g[i] - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                    "{} vs {fd}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn small_step_descends_surrogate() {
        let form = GradientForm {
            sparsity_step: SparsityStep::Gradient,
            penalty: Some(true),
        };
        let (sigma, lambda, theta, mu) = (0.1, 2.5e-4, 0.3, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..20 {
            let (ens, _) = zc_instance(3, seed);
            let op = ens.operator();
            let surrogate = |a: &[f64]| {
                let e = a.iter().map(|v| v * v).sum::<f64>() - 1.0;
                f_sigma(a, sigma).unwrap()
                    + lambda * consistency_cost(a, &op, &ens.signs).unwrap()
                    + theta * e * e
            };
            let a = random_vec(&mut rng, ens.cols(), 0.2);
            let g = bsl0_gradient(&a, &op, &ens.signs, sigma, lambda, theta, form).unwrap();
            let next: Vec<f64> = a.iter().zip(&g).map(|(x, d)| x - mu * d).collect();
            assert!(surrogate(&next) < surrogate(&a));
        }
    }

    #[test]
    fn hard_threshold_examples() {
        assert_eq!(
            hard_threshold(&[3.0, -5.0, 1.0], 1).unwrap(),
            vec![0.0, -5.0, 0.0]
        );
        assert_eq!(
            hard_threshold(&[3.0, -5.0, 1.0], 3).unwrap(),
            vec![3.0, -5.0, 1.0]
        );
        assert_eq!(hard_threshold(&[2.0, -2.0], 1).unwrap(), vec![2.0, 0.0]);
        assert_eq!(hard_threshold(&[2.0, -2.0], 0).unwrap(), vec![0.0, 0.0]);
        assert!(hard_threshold(&[1.0], 2).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(Bsl0Params::default().validate().is_ok());
        let bad = [
            Bsl0Params {
                alpha: 1.0,
                ..Default::default()
            },
            Bsl0Params {
                beta: 1.0,
                ..Default::default()
            },
            Bsl0Params {
                sigma_min: 0.2,
                ..Default::default()
            },
            Bsl0Params {
                mu: 0.0,
                ..Default::default()
            },
            Bsl0Params {
                iter_max: 0,
                ..Default::default()
            },
            Bsl0Params {
                epsilon: f64::NAN,
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
        assert!(BihtParams::with_sparsity(0).validate(5).is_err());
        assert!(BihtParams::with_sparsity(6).validate(5).is_err());
        assert!(BihtParams {
            mu: -1.0,
            ..BihtParams::with_sparsity(1)
        }
        .validate(5)
        .is_err());
    }

    #[test]
    fn bsl0_echoes_defaults() {
        let (ens, _) = zc_instance(1, 3);
        let trace = bsl0_zc(&ens, &Bsl0Params::default()).unwrap();
        let p = &trace.params;
        assert_eq!(p["sigma0"], 0.1);
        assert_eq!(p["lambda0"], 2.5e-4);
        assert_eq!(p["theta0"], 0.3);
        assert_eq!(p["alpha"], 0.9);
        assert_eq!(p["beta"], 2.0);
        assert_eq!(p["delta"], 2.0);
        assert_eq!(p["mu"], 0.7);
        assert_eq!(p["epsilon"], 0.0005);
        assert_eq!(p["sigma_min"], 0.001);
        assert_eq!(p["iter_max"], 50);
        let json = trace.to_json().unwrap();
        for key in [
            "estimate",
            "iterations",
            "final_cost_terms",
            "sign_consistency",
            "converged",
        ] {
            assert!(json.contains(key), "{key}");
        }
    }

    #[test]
    fn bsl0_all_positive_signs() {
        let spec = tiny_spec();
        let dc = CoeffVector::basis(spec.num_coeffs(), 0);
        let ens = MeasurementEnsemble::measure_zc(spec, build_phi(&spec), &dc).unwrap();
        assert!(ens.signs.as_slice().iter().all(|s| *s == 1));
        let trace = bsl0_zc(&ens, &Bsl0Params::default()).unwrap();
        assert_eq!(trace.sign_consistency, 1.0);
    }

    #[test]
    fn bsl0_iteration_accounting() {
        let (ens, _) = zc_instance(2, 5);
        let strict = Bsl0Params {
            strict_iteration_cap: true,
            ..Default::default()
        };
        assert!(bsl0_zc(&ens, &strict).unwrap().iterations < strict.iter_max);
        // one full sigma schedule from 0.1 down to 0.001 at alpha 0.9 is 44 steps
        let one_pass = Bsl0Params {
            iter_max: 2,
            ..Default::default()
        };
        assert_eq!(bsl0_zc(&ens, &one_pass).unwrap().iterations, 44);
        let cont = Bsl0Params {
            continue_sigma: true,
            trace_iterations: true,
            ..Default::default()
        };
        let trace = bsl0_zc(&ens, &cont).unwrap();
        assert_eq!(trace.iterations % 44, 0);
        assert_eq!(trace.history.len(), trace.iterations);
    }

    #[test]
    fn biht_output_contract() {
        for seed in 0..10 {
            let (ens, _) = zc_instance(3, seed);
            for k in [1, 3, 5] {
                let trace = biht_zc(&ens, &BihtParams::with_sparsity(k)).unwrap();
                assert!(trace.estimate.support().len() <= k);
                assert!((trace.estimate.norm() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn biht_full_support_consistency_mostly_rises() {
        let mut rising = 0;
        let mut steps = 0;
        for seed in 0..10 {
            let (ens, _) = zc_instance(3, seed);
            let params = BihtParams {
                sparsity: ens.cols(),
                mu: 0.05,
                trace_iterations: true,
                ..Default::default()
            };
            let trace = biht_zc(&ens, &params).unwrap();
            for w in trace.history.windows(2) {
                steps += 1;
                if w[1].sign_consistency >= w[0].sign_consistency {
                    rising += 1;
                }
            }
        }
        assert!(steps > 0);
        assert!(rising as f64 >= 0.9 * steps as f64, "{rising}/{steps}");
    }

    #[test]
    fn solvers_are_deterministic() {
        let (ens, _) = zc_instance(4, 8);
        let p = Bsl0Params {
            trace_iterations: true,
            ..Default::default()
        };
        assert_eq!(bsl0_zc(&ens, &p).unwrap(), bsl0_zc(&ens, &p).unwrap());
        let b = BihtParams::with_sparsity(4);
        assert_eq!(biht_zc(&ens, &b).unwrap(), biht_zc(&ens, &b).unwrap());
    }

    #[test]
    fn zc_solvers_reject_lc_ensembles() {
        let spec = tiny_spec();
        let a = random_sparse_coeffs(&spec, 1, false, 0).unwrap();
        let samples = uniform_sample(&a, &spec);
        let levels = uniform_levels(dynamic_range(&samples).unwrap(), 2).unwrap();
        let signs = lc_measure(&samples, &levels);
        let ens = MeasurementEnsemble::lc(spec, build_phi(&spec), levels, signs).unwrap();
        assert!(bsl0_zc(&ens, &Bsl0Params::default()).is_err());
        assert!(biht_zc(&ens, &BihtParams::default()).is_err());
    }
}
