//! Shared domain types and assembly of mixture losses from per-component
//! learning curves.
//!
//! The expected loss of training proportions `q` against test proportions `p`
//! is `L_N(p, q) = Σ_k p_k · ē_k(q_k)`, where `ē_k(q_k)` is the expectation of
//! the component curve under a Binomial(N, q_k) sample count. [`mixture_loss`]
//! computes this exactly (closed form where one exists, otherwise an exact
//! binomial sum up to `EXACT_BINOMIAL_MAX_N`, and seeded Monte Carlo beyond).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest budget for which the exact binomial expectation is summed term by
/// term; larger budgets fall back to Monte Carlo.
pub const EXACT_BINOMIAL_MAX_N: u64 = 10_000;

/// Tolerance used when checking `L* <= L_same` in [`MixingSolution`].
pub const SOLVER_TOLERANCE: f64 = 1e-9;

const SIMPLEX_INPUT_SLACK: f64 = 1e-6;
const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// A probability vector over `K` mixture components.
///
/// Entries are non-negative and renormalized at construction so they sum to 1
/// within `1e-12`. Inputs whose sum deviates from 1 by more than `1e-6` are
/// rejected rather than silently rescaled.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SimplexVec {
    entries: Vec<f64>,
}

impl SimplexVec {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidSimplex("need at least one component".into()));
        }
        for (i, &x) in entries.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidSimplex(format!(
                    "entry {i} is {x}, must be finite and >= 0"
                )));
            }
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_INPUT_SLACK {
            return Err(Error::InvalidSimplex(format!(
                "entries sum to {sum}, more than {SIMPLEX_INPUT_SLACK} away from 1"
            )));
        }
        let mut v = Self { entries };
        v.renormalize();
        Ok(v)
    }

    /// Rescales arbitrary non-negative weights onto the simplex. Unlike
    /// [`SimplexVec::new`] this accepts any positive total mass.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSimplex("need at least one component".into()));
        }
        for (i, &x) in weights.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidSimplex(format!(
                    "weight {i} is {x}, must be finite and >= 0"
                )));
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidSimplex("weights sum to zero".into()));
        }
        let mut v = Self { entries: weights };
        v.renormalize();
        Ok(v)
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k >= 1, "K must be at least 1");
        Self {
            entries: vec![1.0 / k as f64; k],
        }
    }

    pub fn one_hot(k: usize, hot: usize) -> Self {
        assert!(hot < k, "hot index out of range");
        let mut entries = vec![0.0; k];
        entries[hot] = 1.0;
        Self { entries }
    }

    fn renormalize(&mut self) {
        let sum = kahan_sum(&self.entries);
        for x in &mut self.entries {
            *x /= sum;
        }
        // Naive division leaves O(K·eps) drift; push the residual onto the
        // largest entry so the sum lands within 1e-12 even for huge K.
        let drift = kahan_sum(&self.entries) - 1.0;
        if drift != 0.0 {
            let argmax = self
                .entries
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .expect("non-empty");
            self.entries[argmax] -= drift;
        }
        debug_assert!((kahan_sum(&self.entries) - 1.0).abs() <= SIMPLEX_SUM_TOL);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.entries.iter()
    }

    /// Smallest entry; 0 when any component carries no mass.
    pub fn min_entry(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl std::ops::Index<usize> for SimplexVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.entries[i]
    }
}

impl<'de> Deserialize<'de> for SimplexVec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<f64>::deserialize(de)?;
        SimplexVec::new(entries).map_err(serde::de::Error::custom)
    }
}

/// How a tabulated curve behaves outside its tabulated range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extrapolation {
    /// Clamp to the nearest tabulated value (first below range, last above).
    #[default]
    Clamp,
    /// Reject queries outside the tabulated range.
    Strict,
}

/// A per-component learning curve `e_k(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LearningCurve {
    /// `e(n) = A / (n^alpha + B)`.
    #[serde(rename = "powerlaw")]
    PowerLaw {
        #[serde(rename = "A")]
        a: f64,
        #[serde(rename = "B")]
        b: f64,
        alpha: f64,
    },
    /// `e(n) = 1` if `n = 0`, else `0`.
    Memorization,
    /// `e_k(n) = A0/(N_total^alpha + B0) + A1/(n_k^alpha + B1)`; the first
    /// term depends on the total budget only. Evaluation needs the vector
    /// form, see [`crate::transfer::transfer_component_error`].
    Transfer {
        #[serde(rename = "A0")]
        a0: f64,
        #[serde(rename = "B0")]
        b0: f64,
        #[serde(rename = "A1")]
        a1: f64,
        #[serde(rename = "B1")]
        b1: f64,
        alpha: f64,
    },
    /// Explicit `n -> error` table, step-interpolated at the largest
    /// tabulated `n` not exceeding the query.
    Tabulated {
        #[serde(deserialize_with = "de_table_keys")]
        values: BTreeMap<u64, f64>,
        #[serde(default)]
        extrapolation: Extrapolation,
    },
}

/// JSON object keys are strings, and the internally tagged enum
/// representation buffers them as such; parse them back into sample counts.
fn de_table_keys<'de, D: serde::Deserializer<'de>>(
    de: D,
) -> std::result::Result<BTreeMap<u64, f64>, D::Error> {
    let raw = BTreeMap::<String, f64>::deserialize(de)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<u64>()
                .map(|k| (k, v))
                .map_err(|_| serde::de::Error::custom(format!("table key {k:?} is not a sample count")))
        })
        .collect()
}

impl LearningCurve {
    pub fn power_law(a: f64, b: f64, alpha: f64) -> Result<Self> {
        let c = Self::PowerLaw { a, b, alpha };
        c.validate()?;
        Ok(c)
    }

    pub fn transfer(a0: f64, b0: f64, a1: f64, b1: f64, alpha: f64) -> Result<Self> {
        let c = Self::Transfer { a0, b0, a1, b1, alpha };
        c.validate()?;
        Ok(c)
    }

    pub fn tabulated(values: BTreeMap<u64, f64>, extrapolation: Extrapolation) -> Result<Self> {
        let c = Self::Tabulated { values, extrapolation };
        c.validate()?;
        Ok(c)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::PowerLaw { .. } => "powerlaw",
            Self::Memorization => "memorization",
            Self::Transfer { .. } => "transfer",
            Self::Tabulated { .. } => "tabulated",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| -> Result<()> {
            if !x.is_finite() || x <= 0.0 {
                return Err(Error::InvalidCurve(format!("{name} = {x}, must be > 0")));
            }
            Ok(())
        };
        match self {
            Self::PowerLaw { a, b, alpha } => {
                positive("A", *a)?;
                positive("B", *b)?;
                positive("alpha", *alpha)?;
            }
            Self::Memorization => {}
            Self::Transfer { a0, b0, a1, b1, alpha } => {
                positive("A0", *a0)?;
                positive("B0", *b0)?;
                positive("A1", *a1)?;
                positive("B1", *b1)?;
                positive("alpha", *alpha)?;
                if !(0.0..=1.0).contains(alpha) {
                    return Err(Error::InvalidCurve(format!(
                        "transfer alpha = {alpha}, must lie in (0, 1]"
                    )));
                }
            }
            Self::Tabulated { values, .. } => {
                if values.is_empty() {
                    return Err(Error::InvalidCurve("tabulated curve has no values".into()));
                }
                let mut prev: Option<(u64, f64)> = None;
                for (&n, &e) in values {
                    if !e.is_finite() || !(0.0..=1.0).contains(&e) {
                        return Err(Error::InvalidCurve(format!(
                            "tabulated value at n = {n} is {e}, must lie in [0, 1]"
                        )));
                    }
                    if let Some((pn, pe)) = prev {
                        if e > pe {
                            return Err(Error::InvalidCurve(format!(
                                "tabulated values must be non-increasing: e({pn}) = {pe} < e({n}) = {e}"
                            )));
                        }
                    }
                    prev = Some((n, e));
                }
            }
        }
        Ok(())
    }
}

/// A full problem instance: test proportions, per-component curves, and a
/// training budget. `N` counts examples or steps; the two readings are
/// treated identically throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureProblem {
    pub p: SimplexVec,
    pub curves: Vec<LearningCurve>,
    pub budget: u64,
}

#[derive(Serialize, Deserialize)]
struct ProblemDoc {
    p: Vec<f64>,
    #[serde(rename = "N")]
    n: u64,
    curves: Vec<LearningCurve>,
}

impl MixtureProblem {
    pub fn new(p: SimplexVec, curves: Vec<LearningCurve>, budget: u64) -> Result<Self> {
        if curves.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                got: curves.len(),
            });
        }
        if budget < 1 {
            return Err(Error::InvalidInput("budget N must be >= 1".into()));
        }
        for c in &curves {
            c.validate()?;
        }
        Ok(Self { p, curves, budget })
    }

    pub fn k(&self) -> usize {
        self.p.len()
    }

    pub fn from_json(doc: &str) -> Result<Self> {
        let doc: ProblemDoc = serde_json::from_str(doc).map_err(|e| {
            Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        Self::new(SimplexVec::new(doc.p)?, doc.curves, doc.n)
    }

    pub fn to_json(&self) -> String {
        let doc = ProblemDoc {
            p: self.p.as_slice().to_vec(),
            n: self.budget,
            curves: self.curves.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("problem serialization cannot fail")
    }

    /// True when every curve matches `kind`.
    pub fn all_kind(&self, kind: &str) -> bool {
        self.curves.iter().all(|c| c.kind() == kind)
    }
}

/// Which route produced a [`MixingSolution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Lagrange,
    Numeric,
    WaterFilling,
}

/// Optimal mixing proportions plus the losses they achieve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixingSolution {
    pub q_star: SimplexVec,
    pub l_star: f64,
    pub l_same: f64,
    /// `l_star / l_same`; 1 when `l_same` is 0.
    pub loss_ratio: f64,
    pub method: Method,
    pub diagnostics: BTreeMap<String, f64>,
}

impl MixingSolution {
    pub fn new(
        q_star: SimplexVec,
        l_star: f64,
        l_same: f64,
        method: Method,
        diagnostics: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if l_star > l_same + SOLVER_TOLERANCE * l_same.abs().max(1.0) {
            return Err(Error::ContractViolation(format!(
                "L* = {l_star} exceeds L_same = {l_same} beyond tolerance"
            )));
        }
        let loss_ratio = if l_same > 0.0 { l_star / l_same } else { 1.0 };
        Ok(Self {
            q_star,
            l_star,
            l_same,
            loss_ratio,
            method,
            diagnostics,
        })
    }
}

fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for &x in values {
        let y = x - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// `(1 - p)^n`, stable for tiny `p` and large `n`.
pub(crate) fn pow1m(p: f64, n: u64) -> f64 {
    if p >= 1.0 {
        return 0.0;
    }
    if p <= 0.0 {
        return 1.0;
    }
    (n as f64 * (-p).ln_1p()).exp()
}

/// Evaluates a single-argument learning curve at `n` samples.
///
/// Transfer curves need the total budget as well and are rejected here; use
/// [`crate::transfer::transfer_component_error`].
pub fn eval_curve(curve: &LearningCurve, n: u64) -> Result<f64> {
    match curve {
        LearningCurve::PowerLaw { a, b, alpha } => Ok(a / ((n as f64).powf(*alpha) + b)),
        LearningCurve::Memorization => Ok(if n == 0 { 1.0 } else { 0.0 }),
        LearningCurve::Transfer { .. } => Err(Error::UnsupportedCurve {
            kind: "transfer",
            hint: "transfer curves depend on the total budget; use transfer::transfer_component_error",
        }),
        LearningCurve::Tabulated { values, extrapolation } => {
            let (&first, _) = values.iter().next().expect("non-empty table");
            let (&last, &last_value) = values.iter().next_back().expect("non-empty table");
            if n < first || n > last {
                match extrapolation {
                    Extrapolation::Clamp => {
                        return Ok(if n < first {
                            *values.values().next().expect("non-empty table")
                        } else {
                            last_value
                        });
                    }
                    Extrapolation::Strict => {
                        return Err(Error::InvalidInput(format!(
                            "n = {n} outside tabulated range [{first}, {last}] and extrapolation is strict"
                        )));
                    }
                }
            }
            // Step interpolation at the largest tabulated key <= n.
            Ok(*values.range(..=n).next_back().expect("in range").1)
        }
    }
}

/// Exact expectation `E[f(n)]` for `n ~ Binomial(trials, prob)`, via a
/// log-space recurrence on the pmf (no factorials, no overflow).
pub fn binomial_expectation<F: Fn(u64) -> f64>(trials: u64, prob: f64, f: F) -> f64 {
    if prob <= 0.0 {
        return f(0);
    }
    if prob >= 1.0 {
        return f(trials);
    }
    let log_q = prob.ln();
    let log_1mq = (-prob).ln_1p();
    let mut log_pmf = trials as f64 * log_1mq; // ln pmf(0)
    let mut acc = 0.0;
    for n in 0..=trials {
        acc += log_pmf.exp() * f(n);
        if n < trials {
            log_pmf += ((trials - n) as f64 / (n + 1) as f64).ln() + log_q - log_1mq;
        }
    }
    acc
}

/// Expected error of one component when its sample count is Binomial in
/// `(budget, q_k)`.
///
/// Memorization uses the closed form `(1 - q_k)^N`. Other curves use the
/// exact binomial sum for budgets up to [`EXACT_BINOMIAL_MAX_N`] and a
/// seeded Monte Carlo estimate beyond. The transfer term of a Transfer curve
/// is deterministic in the total budget and is added outside the expectation.
pub fn expected_component_error(curve: &LearningCurve, q_k: f64, budget: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q_k) || !q_k.is_finite() {
        return Err(Error::InvalidInput(format!(
            "q_k = {q_k}, must lie in [0, 1]"
        )));
    }
    if budget < 1 {
        return Err(Error::InvalidInput("budget N must be >= 1".into()));
    }
    match curve {
        LearningCurve::Memorization => Ok(pow1m(q_k, budget)),
        LearningCurve::Transfer { a0, b0, a1, b1, alpha } => {
            let offset = a0 / ((budget as f64).powf(*alpha) + b0);
            let specific = LearningCurve::PowerLaw { a: *a1, b: *b1, alpha: *alpha };
            Ok(offset + expected_component_error(&specific, q_k, budget)?)
        }
        _ => {
            // Step-interpolated curves are defined everywhere between their
            // endpoints, so evaluability at 0 and N covers the whole sum.
            eval_curve(curve, 0)?;
            eval_curve(curve, budget)?;
            if budget <= EXACT_BINOMIAL_MAX_N {
                let eval = |n: u64| eval_curve(curve, n).expect("validated range");
                Ok(binomial_expectation(budget, q_k, eval))
            } else {
                let est = crate::simulate::binomial_estimate(
                    curve,
                    q_k,
                    budget,
                    &crate::simulate::McConfig::default(),
                )?;
                Ok(est.estimate)
            }
        }
    }
}

/// Expected mixed loss `L_N(p, q) = Σ_k p_k ē_k(q_k)`.
pub fn mixture_loss(problem: &MixtureProblem, q: &SimplexVec) -> Result<f64> {
    if q.len() != problem.k() {
        return Err(Error::DimensionMismatch {
            expected: problem.k(),
            got: q.len(),
        });
    }
    let mut loss = 0.0;
    for (k, curve) in problem.curves.iter().enumerate() {
        let p_k = problem.p[k];
        if p_k == 0.0 {
            continue;
        }
        loss += p_k * expected_component_error(curve, q[k], problem.budget)?;
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn powerlaw(a: f64, b: f64, alpha: f64) -> LearningCurve {
        LearningCurve::power_law(a, b, alpha).unwrap()
    }

    #[test]
    fn simplex_renormalizes_small_drift() {
        let v = SimplexVec::new(vec![0.5000001, 0.4999999]).unwrap();
        assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn simplex_sum_invariant_survives_huge_k() {
        let weights: Vec<f64> = (1..=100_000).map(|i| (i as f64 + 50.0).powf(-1.5)).collect();
        let v = SimplexVec::from_weights(weights).unwrap();
        assert!((kahan_sum(v.as_slice()) - 1.0).abs() <= 1e-12);
        assert!(v.min_entry() > 0.0);
    }

    #[test]
    fn simplex_rejects_large_drift_and_negatives() {
        assert!(SimplexVec::new(vec![0.6, 0.6]).is_err());
        assert!(SimplexVec::new(vec![1.2, -0.2]).is_err());
        assert!(SimplexVec::new(vec![]).is_err());
    }

    #[test]
    fn eval_curve_examples() {
        assert_eq!(eval_curve(&powerlaw(1.0, 1.0, 1.0), 0).unwrap(), 1.0);
        assert_eq!(eval_curve(&LearningCurve::Memorization, 0).unwrap(), 1.0);
        assert_eq!(eval_curve(&LearningCurve::Memorization, 3).unwrap(), 0.0);
        // Independent arithmetic: 1/(100^1 + 0.01).
        let e = eval_curve(&powerlaw(1.0, 0.01, 1.0), 100).unwrap();
        assert_relative_eq!(e, 1.0 / 100.01, max_relative = 1e-15);
        assert_relative_eq!(e, 0.009_999_000_1, epsilon = 1e-9);
    }

    #[test]
    fn eval_curve_rejects_transfer() {
        let c = LearningCurve::transfer(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            eval_curve(&c, 3),
            Err(Error::UnsupportedCurve { .. })
        ));
    }

    #[test]
    fn tabulated_step_and_extrapolation() {
        let mut values = BTreeMap::new();
        values.insert(2u64, 0.8);
        values.insert(10u64, 0.3);
        let clamp = LearningCurve::tabulated(values.clone(), Extrapolation::Clamp).unwrap();
        assert_eq!(eval_curve(&clamp, 0).unwrap(), 0.8); // below range: first value
        assert_eq!(eval_curve(&clamp, 5).unwrap(), 0.8); // step at largest key <= n
        assert_eq!(eval_curve(&clamp, 10).unwrap(), 0.3);
        assert_eq!(eval_curve(&clamp, 99).unwrap(), 0.3); // above range: last value
        let strict = LearningCurve::tabulated(values, Extrapolation::Strict).unwrap();
        assert!(eval_curve(&strict, 0).is_err());
        assert_eq!(eval_curve(&strict, 10).unwrap(), 0.3);
        assert!(eval_curve(&strict, 11).is_err());
        // A strict table that cannot cover the binomial support is rejected
        // cleanly rather than mid-sum.
        assert!(expected_component_error(&strict, 0.5, 20).is_err());
    }

    #[test]
    fn tabulated_rejects_increasing_or_out_of_range() {
        let mut bad = BTreeMap::new();
        bad.insert(0u64, 0.2);
        bad.insert(5u64, 0.4);
        assert!(LearningCurve::tabulated(bad, Extrapolation::Clamp).is_err());
        let mut out = BTreeMap::new();
        out.insert(0u64, 1.5);
        assert!(LearningCurve::tabulated(out, Extrapolation::Clamp).is_err());
    }

    #[test]
    fn memorization_expectation_closed_form() {
        let e = expected_component_error(&LearningCurve::Memorization, 0.5, 4).unwrap();
        assert_relative_eq!(e, 0.0625, max_relative = 1e-15);
        let never = expected_component_error(&LearningCurve::Memorization, 0.0, 10).unwrap();
        assert_eq!(never, 1.0);
    }

    #[test]
    fn powerlaw_expectation_matches_bruteforce() {
        // Oracle: brute-force binomial sum with explicit C(10, n) coefficients.
        let choose = [1.0, 10.0, 45.0, 120.0, 210.0, 252.0, 210.0, 120.0, 45.0, 10.0, 1.0];
        let brute: f64 = (0..=10)
            .map(|n| choose[n] * 0.5f64.powi(10) / (n as f64 + 1.0))
            .sum();
        // Same quantity analytically: E[1/(n+1)] = (1 - (1-q)^(N+1)) / ((N+1) q).
        let analytic = (1.0 - 0.5f64.powi(11)) / (11.0 * 0.5);
        assert_relative_eq!(brute, analytic, max_relative = 1e-14);

        let e = expected_component_error(&powerlaw(1.0, 1.0, 1.0), 0.5, 10).unwrap();
        assert_relative_eq!(e, brute, max_relative = 1e-12);
    }

    #[test]
    fn transfer_expectation_splits_deterministic_term() {
        let c = LearningCurve::transfer(1.0, 1.0, 2.0, 1.0, 0.5).unwrap();
        let e = expected_component_error(&c, 0.25, 16).unwrap();
        let offset = 1.0 / (16f64.sqrt() + 1.0);
        let spec = expected_component_error(&powerlaw(2.0, 1.0, 0.5), 0.25, 16).unwrap();
        assert_relative_eq!(e, offset + spec, max_relative = 1e-14);
    }

    #[test]
    fn mixture_loss_memorization_examples() {
        let p = SimplexVec::new(vec![0.5, 0.5]).unwrap();
        let curves = vec![LearningCurve::Memorization, LearningCurve::Memorization];
        let prob = MixtureProblem::new(p.clone(), curves.clone(), 4).unwrap();
        let l = mixture_loss(&prob, &p).unwrap();
        assert_relative_eq!(l, 0.0625, max_relative = 1e-14);

        let one_hot = SimplexVec::one_hot(2, 0);
        let l = mixture_loss(&prob, &one_hot).unwrap();
        assert_relative_eq!(l, 0.5, max_relative = 1e-14);

        // 0.6*0.4^3 + 0.3*0.7^3 + 0.1*0.9^3 = 0.2142 (direct closed form;
        // the Monte Carlo cross-check lives in the simulate tests).
        let p3 = SimplexVec::new(vec![0.6, 0.3, 0.1]).unwrap();
        let prob3 = MixtureProblem::new(p3.clone(), vec![LearningCurve::Memorization; 3], 3).unwrap();
        let l = mixture_loss(&prob3, &p3).unwrap();
        assert_relative_eq!(l, 0.2142, max_relative = 1e-12);
    }

    #[test]
    fn mixture_loss_rejects_dimension_mismatch() {
        let p = SimplexVec::new(vec![0.5, 0.5]).unwrap();
        let prob = MixtureProblem::new(p, vec![LearningCurve::Memorization; 2], 4).unwrap();
        let q3 = SimplexVec::uniform(3);
        assert!(matches!(
            mixture_loss(&prob, &q3),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn problem_json_round_trip() {
        let doc = r#"{
            "p": [0.6, 0.3, 0.1],
            "N": 42,
            "curves": [
                {"kind": "powerlaw", "A": 1.0, "B": 0.5, "alpha": 0.7},
                {"kind": "memorization"},
                {"kind": "tabulated", "values": {"0": 1.0, "5": 0.25}}
            ]
        }"#;
        let prob = MixtureProblem::from_json(doc).unwrap();
        assert_eq!(prob.k(), 3);
        assert_eq!(prob.budget, 42);
        let round = MixtureProblem::from_json(&prob.to_json()).unwrap();
        assert_eq!(round.curves, prob.curves);
        assert_eq!(round.budget, prob.budget);
        for (a, b) in round.p.iter().zip(prob.p.iter()) {
            // Construction renormalizes, so allow one rounding step.
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }

        let transfer = r#"{
            "p": [1.0],
            "N": 7,
            "curves": [{"kind": "transfer", "A0": 1.0, "B0": 2.0, "A1": 3.0, "B1": 4.0, "alpha": 0.5}]
        }"#;
        let prob = MixtureProblem::from_json(transfer).unwrap();
        assert_eq!(prob.curves[0].kind(), "transfer");
    }

    #[test]
    fn problem_json_reports_position() {
        let err = MixtureProblem::from_json("{\n  \"p\": [0.5, oops]\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "got: {msg}");
    }

    #[test]
    fn mixing_solution_checks_ordering() {
        let q = SimplexVec::uniform(2);
        assert!(MixingSolution::new(q.clone(), 0.2, 0.1, Method::Numeric, BTreeMap::new()).is_err());
        let sol = MixingSolution::new(q, 0.08, 0.1, Method::Numeric, BTreeMap::new()).unwrap();
        assert_relative_eq!(sol.loss_ratio, 0.8, max_relative = 1e-12);
    }

    #[test]
    fn zero_p_components_contribute_nothing() {
        let p = SimplexVec::new(vec![1.0, 0.0]).unwrap();
        let prob = MixtureProblem::new(p, vec![LearningCurve::Memorization; 2], 5).unwrap();
        // All training mass on the dead component: loss is entirely component 0.
        let q = SimplexVec::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(mixture_loss(&prob, &q).unwrap(), 1.0);
    }
}
