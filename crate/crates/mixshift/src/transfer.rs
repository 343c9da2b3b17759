//! Standard transfer-learning curves and their reduction to the power-law
//! solver.
//!
//! A transfer curve `e_k(n) = A0_k/(N_total^α_k + B0_k) + A1_k/(n_k^α_k + B1_k)`
//! splits into a term that depends only on the total budget and a per-task
//! term identical to a power-law curve. The first term shifts every mixture
//! loss by the same constant, so the optimal `q*` is that of the reduced
//! power-law problem with `A_k` replaced by `A1_k`.

use std::collections::BTreeMap;

use crate::core::{LearningCurve, Method, MixingSolution, MixtureProblem, SimplexVec};
use crate::error::{Error, Result};
use crate::powerlaw;

/// A transfer problem split into its q-independent offset and the power-law
/// problem that carries all of the mixing structure.
#[derive(Debug, Clone)]
pub struct TransferDecomposition {
    /// `Σ_i p_i A0_i / (N^α_i + B0_i)`.
    pub transfer_offset: f64,
    pub reduced: MixtureProblem,
}

/// Evaluates one transfer curve given its own sample count and the total
/// budget.
pub fn transfer_component_error(curve: &LearningCurve, n_k: u64, n_total: u64) -> Result<f64> {
    let LearningCurve::Transfer { a0, b0, a1, b1, alpha } = curve else {
        return Err(Error::UnsupportedCurve {
            kind: curve.kind(),
            hint: "transfer_component_error takes Transfer curves only",
        });
    };
    if n_k > n_total {
        return Err(Error::InvalidInput(format!(
            "n_k = {n_k} exceeds the total budget {n_total}"
        )));
    }
    let shared = a0 / ((n_total as f64).powf(*alpha) + b0);
    let specific = a1 / ((n_k as f64).powf(*alpha) + b1);
    Ok(shared + specific)
}

/// Splits an all-Transfer problem into offset + reduced power-law problem.
///
/// For every `q`, `transfer loss(p, q) = reduced loss(p, q) + offset`, so the
/// two share their argmin.
pub fn reduce_to_powerlaw(problem: &MixtureProblem) -> Result<TransferDecomposition> {
    let n = problem.budget as f64;
    let mut offset = 0.0;
    let mut reduced_curves = Vec::with_capacity(problem.k());
    for (i, curve) in problem.curves.iter().enumerate() {
        let LearningCurve::Transfer { a0, b0, a1, b1, alpha } = curve else {
            return Err(Error::UnsupportedCurve {
                kind: curve.kind(),
                hint: "reduce_to_powerlaw needs all-Transfer problems",
            });
        };
        offset += problem.p[i] * a0 / (n.powf(*alpha) + b0);
        reduced_curves.push(LearningCurve::PowerLaw { a: *a1, b: *b1, alpha: *alpha });
    }
    Ok(TransferDecomposition {
        transfer_offset: offset,
        reduced: MixtureProblem::new(problem.p.clone(), reduced_curves, problem.budget)?,
    })
}

/// Full transfer solution: solves the reduced problem with the λ-bisection
/// route and adds the offset back onto both losses.
#[derive(Debug, Clone)]
pub struct TransferSolution {
    pub transfer_offset: f64,
    pub q_star: SimplexVec,
    pub reduced: powerlaw::PowerLawSolution,
    /// Offset-inclusive approximate losses at `q*` and at `q = p`.
    pub l_star: f64,
    pub l_same: f64,
}

pub fn solve(problem: &MixtureProblem) -> Result<TransferSolution> {
    let dec = reduce_to_powerlaw(problem)?;
    let reduced = powerlaw::solve(&dec.reduced)?;
    let l_star =
        dec.transfer_offset + powerlaw::approximate_loss(&dec.reduced, &reduced.q_star_numeric)?;
    let l_same = dec.transfer_offset + powerlaw::approximate_loss(&dec.reduced, &problem.p)?;
    Ok(TransferSolution {
        transfer_offset: dec.transfer_offset,
        q_star: reduced.q_star_numeric.clone(),
        reduced,
        l_star,
        l_same,
    })
}

impl TransferSolution {
    pub fn into_mixing_solution(self) -> Result<MixingSolution> {
        let mut diagnostics = BTreeMap::new();
        diagnostics.insert("transfer_offset".into(), self.transfer_offset);
        diagnostics.insert("lambda".into(), self.reduced.lambda);
        diagnostics.insert("kkt_rel_residual".into(), self.reduced.max_rel_residual);
        MixingSolution::new(
            self.q_star,
            self.l_star,
            self.l_same,
            Method::Lagrange,
            diagnostics,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::mixture_loss;
    use approx::assert_relative_eq;

    fn transfer_curve(a0: f64, b0: f64, a1: f64, b1: f64, alpha: f64) -> LearningCurve {
        LearningCurve::transfer(a0, b0, a1, b1, alpha).unwrap()
    }

    #[test]
    fn component_error_direct_values() {
        let c = transfer_curve(1.0, 1.0, 1.0, 1.0, 1.0);
        assert_relative_eq!(
            transfer_component_error(&c, 0, 1).unwrap(),
            1.5,
            max_relative = 1e-15
        );
        // 1/(sqrt(16)+1) + 2/(sqrt(4)+1) = 1/5 + 2/3.
        let c = transfer_curve(1.0, 1.0, 2.0, 1.0, 0.5);
        assert_relative_eq!(
            transfer_component_error(&c, 4, 16).unwrap(),
            0.2 + 2.0 / 3.0,
            max_relative = 1e-14
        );
        assert!(transfer_component_error(&c, 17, 16).is_err());
    }

    #[test]
    fn vanishing_transfer_term_reduces_to_powerlaw() {
        let c = transfer_curve(1e-15, 1.0, 1.0, 1.0, 0.5);
        let pl = LearningCurve::power_law(1.0, 1.0, 0.5).unwrap();
        let e_t = transfer_component_error(&c, 9, 100).unwrap();
        let e_p = crate::core::eval_curve(&pl, 9).unwrap();
        assert_relative_eq!(e_t, e_p, epsilon = 1e-12);
    }

    #[test]
    fn reduction_keeps_test_taking_optimum() {
        let p = SimplexVec::new(vec![0.9, 0.1]).unwrap();
        let curves = vec![
            transfer_curve(5.0, 2.0, 1.0, 1e-6, 1.0),
            transfer_curve(3.0, 7.0, 1.0, 1e-6, 1.0),
        ];
        let problem = MixtureProblem::new(p, curves, 100_000).unwrap();
        let sol = solve(&problem).unwrap();
        assert!((sol.q_star[0] - 0.75).abs() < 1e-3, "q0 = {}", sol.q_star[0]);
        assert!((sol.q_star[1] - 0.25).abs() < 1e-3);
        assert!(sol.l_star <= sol.l_same);
    }

    #[test]
    fn offset_identity_at_random_mixtures() {
        let p = SimplexVec::new(vec![0.5, 0.3, 0.2]).unwrap();
        let curves = vec![
            transfer_curve(1.0, 2.0, 0.7, 0.4, 0.6),
            transfer_curve(2.0, 1.0, 1.3, 0.8, 0.6),
            transfer_curve(0.5, 3.0, 2.1, 1.6, 0.6),
        ];
        let problem = MixtureProblem::new(p, curves, 500).unwrap();
        let dec = reduce_to_powerlaw(&problem).unwrap();
        // Exact binomial expectations on both sides: the difference must be
        // the offset, independent of q, to near machine precision.
        for q in [
            SimplexVec::uniform(3),
            SimplexVec::new(vec![0.8, 0.1, 0.1]).unwrap(),
            SimplexVec::new(vec![0.05, 0.9, 0.05]).unwrap(),
            SimplexVec::one_hot(3, 2),
        ] {
            let full = mixture_loss(&problem, &q).unwrap();
            let red = mixture_loss(&dec.reduced, &q).unwrap();
            assert_relative_eq!(full - red, dec.transfer_offset, epsilon = 1e-12);
        }
    }

    #[test]
    fn reduction_rejects_mixed_kinds() {
        let p = SimplexVec::uniform(2);
        let curves = vec![
            transfer_curve(1.0, 1.0, 1.0, 1.0, 0.5),
            LearningCurve::Memorization,
        ];
        let problem = MixtureProblem::new(p, curves, 10).unwrap();
        assert!(matches!(
            reduce_to_powerlaw(&problem),
            Err(Error::UnsupportedCurve { .. })
        ));
    }
}
