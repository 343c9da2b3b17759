//! Optimal mixing for power-law learning curves `e_k(n) = A_k/(n^α_k + B_k)`.
//!
//! Two routes are implemented and cross-checked:
//!
//! - the large-budget closed form for `q*` and the leading loss terms, valid
//!   once the minimal exponent group dominates ([`asymptotic_q_star`],
//!   [`asymptotic_losses`]);
//! - an exact KKT solve of the deterministic approximation
//!   `L̃(p, q) = Σ_i p_i A_i / ((q_i N)^α_i + B_i)` by nested bisection: for a
//!   candidate multiplier λ each per-component stationarity equation is solved
//!   by monotone bisection in `q_i`, and λ itself is bisected until the
//!   allocations sum to one ([`solve_lambda`]).
//!
//! The guarantees cover exponents in `(0, 1]`; larger exponents are accepted
//! and flagged so the hypothetical `α = 2` scenarios remain reproducible.

use crate::core::{LearningCurve, MixtureProblem, SimplexVec};
use crate::error::{Error, Result};

/// Smallest effective offset `B`; inputs below are clamped up.
pub const B_FLOOR: f64 = 1e-12;

const SUM_TOL: f64 = 1e-12;
const ALPHA_TIE_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Comp {
    orig: usize,
    p: f64,
    a: f64,
    b: f64,
    alpha: f64,
}

/// Components sorted by exponent, minimal-exponent group first.
struct Sorted {
    comps: Vec<Comp>,
    /// Size of the minimal-exponent tie group.
    s: usize,
    alpha1: f64,
}

fn extract(problem: &MixtureProblem) -> Result<Vec<Comp>> {
    problem
        .curves
        .iter()
        .enumerate()
        .map(|(i, c)| match c {
            LearningCurve::PowerLaw { a, b, alpha } => Ok(Comp {
                orig: i,
                p: problem.p[i],
                a: *a,
                b: b.max(B_FLOOR),
                alpha: *alpha,
            }),
            other => Err(Error::UnsupportedCurve {
                kind: other.kind(),
                hint: "power-law solvers need all-PowerLaw problems; use the numeric path",
            }),
        })
        .collect()
}

fn sort_by_alpha(mut comps: Vec<Comp>) -> Sorted {
    comps.sort_by(|x, y| x.alpha.total_cmp(&y.alpha));
    let alpha1 = comps[0].alpha;
    let tie = ALPHA_TIE_REL * alpha1.abs().max(1.0);
    let s = comps.iter().take_while(|c| c.alpha - alpha1 <= tie).count();
    Sorted { comps, s, alpha1 }
}

/// Deterministic approximation `L̃(p, q) = Σ_i p_i A_i / ((q_i N)^α_i + B_i)`
/// of the expected mixed loss.
pub fn approximate_loss(problem: &MixtureProblem, q: &SimplexVec) -> Result<f64> {
    if q.len() != problem.k() {
        return Err(Error::DimensionMismatch {
            expected: problem.k(),
            got: q.len(),
        });
    }
    let comps = extract(problem)?;
    let n = problem.budget as f64;
    Ok(comps
        .iter()
        .map(|c| c.p * c.a / ((q[c.orig] * n).powf(c.alpha) + c.b))
        .sum())
}

/// Denominator `D = (Σ_{j<=S} (α_j p_j A_j)^{1/(α_1+1)})^{α_1+1}` shared by
/// the closed forms. Rejects zero test mass inside the minimal group.
fn leading_denominator(sorted: &Sorted) -> Result<f64> {
    let mut base = 0.0;
    for c in &sorted.comps[..sorted.s] {
        if c.p <= 0.0 {
            return Err(Error::InvalidInput(
                "p_i = 0 among minimal-exponent components; the closed form degenerates, \
                 use the numeric path"
                    .into(),
            ));
        }
        base += (c.alpha * c.p * c.a).powf(1.0 / (sorted.alpha1 + 1.0));
    }
    Ok(base.powf(sorted.alpha1 + 1.0))
}

/// Leading term of the optimal mixing ratios, renormalized to the simplex.
pub fn asymptotic_q_star(problem: &MixtureProblem) -> Result<SimplexVec> {
    let sorted = sort_by_alpha(extract(problem)?);
    let d = leading_denominator(&sorted)?;
    let n = problem.budget as f64;
    let mut weights = vec![0.0; problem.k()];
    for c in &sorted.comps {
        let expo = 1.0 / (c.alpha + 1.0);
        let scale = n.powf(-(c.alpha - sorted.alpha1) * expo);
        weights[c.orig] = scale * (c.alpha * c.p * c.a / d).powf(expo);
    }
    SimplexVec::from_weights(weights)
}

/// Leading terms of `(L_same, L*)`:
/// `L_same = N^{-α_1} Σ_{i<=S} p_i^{1-α_1} A_i` and
/// `L* = N^{-α_1} (Σ_{i<=S} (α_i p_i A_i)^{1/(α_i+1)})^{α_1}
///       (Σ_{i<=S} (p_i A_i)^{1/(α_i+1)} / α_i^{α_i/(α_i+1)})`.
pub fn asymptotic_losses(problem: &MixtureProblem) -> Result<(f64, f64)> {
    let sorted = sort_by_alpha(extract(problem)?);
    leading_denominator(&sorted)?;
    let n = problem.budget as f64;
    let a1 = sorted.alpha1;
    let mut same = 0.0;
    let mut weight_sum = 0.0;
    let mut factor_sum = 0.0;
    for c in &sorted.comps[..sorted.s] {
        same += c.p.powf(1.0 - a1) * c.a;
        let expo = 1.0 / (c.alpha + 1.0);
        weight_sum += (c.alpha * c.p * c.a).powf(expo);
        factor_sum += (c.p * c.a).powf(expo) / c.alpha.powf(c.alpha * expo);
    }
    let scale = n.powf(-a1);
    Ok((scale * same, scale * weight_sum.powf(a1) * factor_sum))
}

/// `dL̃/dq_i` magnitude at `q > 0`:
/// `p A α N^α q^{α-1} / ((N q)^α + B)^2`.
fn stationarity(c: &Comp, n: f64, q: f64) -> f64 {
    let t = (n * q).powf(c.alpha);
    c.p * c.a * c.alpha * n.powf(c.alpha) * q.powf(c.alpha - 1.0) / ((t + c.b) * (t + c.b))
}

/// Solves `stationarity(q) = lambda` on the decreasing branch, or returns 0
/// when the component is pinned at the boundary for this multiplier.
fn q_of_lambda(c: &Comp, n: f64, lambda: f64) -> f64 {
    // For α <= 1 the stationarity magnitude is strictly decreasing on
    // (0, inf). For α > 1 it rises to a single mode and then decreases; the
    // minimizing KKT branch is the decreasing one past the mode.
    let mut lo = if c.alpha > 1.0 {
        ((c.b * (c.alpha - 1.0) / (c.alpha + 1.0)).powf(1.0 / c.alpha) / n).max(1e-300)
    } else {
        1e-300
    };
    if stationarity(c, n, lo) < lambda {
        return 0.0;
    }
    let mut hi = lo.max(1.0);
    let mut guard = 0;
    while stationarity(c, n, hi) >= lambda {
        lo = hi;
        hi *= 4.0;
        guard += 1;
        if guard > 600 {
            return hi;
        }
    }
    // Invariant: g(lo) >= lambda > g(hi); geometric bisection.
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if stationarity(c, n, mid) >= lambda {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    (lo * hi).sqrt()
}

/// Interior KKT point of the approximate loss.
#[derive(Debug, Clone)]
pub struct LambdaSolution {
    pub q: SimplexVec,
    pub lambda: f64,
    /// Worst `|dL̃/dq_i - λ| / λ` over active components at exit.
    pub max_rel_residual: f64,
    pub outer_iterations: usize,
    /// Set when any exponent exceeds 1 (outside the theorem's guarantee).
    pub alpha_warning: bool,
}

/// Minimizes `L̃(p, q)` exactly by λ-bisection over the per-component
/// stationarity conditions.
pub fn solve_lambda(problem: &MixtureProblem) -> Result<LambdaSolution> {
    let comps = extract(problem)?;
    let n = problem.budget as f64;
    let k = comps.len();
    let alpha_warning = comps.iter().any(|c| c.alpha > 1.0);

    if k == 1 {
        return Ok(LambdaSolution {
            q: SimplexVec::uniform(1),
            lambda: stationarity(&comps[0], n, 1.0),
            max_rel_residual: 0.0,
            outer_iterations: 0,
            alpha_warning,
        });
    }

    let sum_q = |lambda: f64, out: &mut Vec<f64>| -> f64 {
        out.clear();
        let mut s = 0.0;
        for c in &comps {
            let q = if c.p > 0.0 { q_of_lambda(c, n, lambda) } else { 0.0 };
            out.push(q);
            s += q;
        }
        s
    };

    // Brackets from the design rule: q_i = 1 for all i forces the sum above
    // 1, q_i = 1/(KN) forces it below; expand geometrically if either fails.
    let mut scratch = Vec::with_capacity(k);
    let mut lam_lo = comps
        .iter()
        .filter(|c| c.p > 0.0)
        .map(|c| stationarity(c, n, 1.0))
        .fold(f64::INFINITY, f64::min);
    let mut lam_hi = comps
        .iter()
        .filter(|c| c.p > 0.0)
        .map(|c| stationarity(c, n, 1.0 / (k as f64 * n)))
        .fold(0.0f64, f64::max);
    let mut guard = 0;
    while sum_q(lam_lo, &mut scratch) < 1.0 {
        lam_lo /= 4.0;
        guard += 1;
        if guard > 600 {
            return Err(Error::NonConvergence {
                context: "solve_lambda lower bracket".into(),
                residual: sum_q(lam_lo, &mut scratch) - 1.0,
            });
        }
    }
    guard = 0;
    while sum_q(lam_hi, &mut scratch) > 1.0 {
        lam_hi *= 4.0;
        guard += 1;
        if guard > 600 {
            return Err(Error::NonConvergence {
                context: "solve_lambda upper bracket".into(),
                residual: sum_q(lam_hi, &mut scratch) - 1.0,
            });
        }
    }

    let mut best_q = vec![0.0; k];
    let mut best_gap = f64::INFINITY;
    let mut best_lambda = lam_lo;
    let mut outer = 0;
    for iter in 0..300 {
        outer = iter + 1;
        let lambda = (lam_lo * lam_hi).sqrt();
        let s = sum_q(lambda, &mut scratch);
        let gap = (s - 1.0).abs();
        if gap < best_gap {
            best_gap = gap;
            best_lambda = lambda;
            best_q.clone_from(&scratch);
        }
        if gap <= SUM_TOL {
            break;
        }
        if s >= 1.0 {
            lam_lo = lambda;
        } else {
            lam_hi = lambda;
        }
        if (lam_hi - lam_lo) <= f64::EPSILON * lam_hi {
            break;
        }
    }
    if best_gap > SUM_TOL {
        return Err(Error::NonConvergence {
            context: "solve_lambda outer bisection".into(),
            residual: best_gap,
        });
    }

    let q = SimplexVec::from_weights(best_q)?;
    let max_rel_residual = comps
        .iter()
        .filter(|c| q[c.orig] > 0.0 && c.p > 0.0)
        .map(|c| (stationarity(c, n, q[c.orig]) - best_lambda).abs() / best_lambda)
        .fold(0.0f64, f64::max);
    Ok(LambdaSolution {
        q,
        lambda: best_lambda,
        max_rel_residual,
        outer_iterations: outer,
        alpha_warning,
    })
}

/// One majority component of mass `p` against `K - 1` equal minorities, all
/// curves sharing `(A, B, α)`. Returns the closed-form optimal ratios, the
/// exact sample-complexity ratio, and the corollary upper bound.
#[derive(Debug, Clone)]
pub struct MajorityMinority {
    pub q_star: SimplexVec,
    pub n_ratio: f64,
    /// `(1-p) + 2^{(α+1)/α} (p/(1-p))^{1/(α+1)} K^{-α/(α+1)}`.
    pub upper_bound: f64,
}

pub fn majority_minority_ratio(p_major: f64, k: usize, alpha: f64) -> Result<MajorityMinority> {
    if !(0.0 < p_major && p_major < 1.0) {
        return Err(Error::InvalidInput(format!(
            "p_major = {p_major}, must lie strictly in (0, 1)"
        )));
    }
    if k < 2 {
        return Err(Error::InvalidInput("K must be >= 2".into()));
    }
    if !(0.0 < alpha && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha = {alpha}, must lie in (0, 1]"
        )));
    }
    let km1 = (k - 1) as f64;
    let minority = (1.0 - p_major) / km1;
    let expo = 1.0 / (alpha + 1.0);
    let w_major = p_major.powf(expo);
    let w_minor = minority.powf(expo);
    let mut weights = vec![w_minor; k];
    weights[0] = w_major;
    let q_star = SimplexVec::from_weights(weights)?;

    let numerator = (w_major + km1 * w_minor).powf(alpha + 1.0);
    let denominator = p_major.powf(1.0 - alpha) + km1.powf(alpha) * (1.0 - p_major).powf(1.0 - alpha);
    let n_ratio = (numerator / denominator).powf(1.0 / alpha);

    let upper_bound = (1.0 - p_major)
        + 2f64.powf((alpha + 1.0) / alpha)
            * (p_major / (1.0 - p_major)).powf(expo)
            * (k as f64).powf(-alpha / (alpha + 1.0));
    Ok(MajorityMinority { q_star, n_ratio, upper_bound })
}

/// The four large-`N` admissibility thresholds from the asymptotic analysis,
/// reported as diagnostics and never enforced.
#[derive(Debug, Clone, Copy)]
pub struct N0Report {
    pub thresholds: [f64; 4],
    pub satisfied: [bool; 4],
}

pub fn n0_report(problem: &MixtureProblem) -> Result<N0Report> {
    let sorted = sort_by_alpha(extract(problem)?);
    let d = leading_denominator(&sorted)?;
    let a1 = sorted.alpha1;
    let term = |c: &Comp| c.alpha * c.p * c.a / d;

    let t1 = if sorted.s == sorted.comps.len() {
        0.0
    } else {
        let lead = term(&sorted.comps[0]).powf(-1.0 / (a1 + 1.0));
        let tail: f64 = sorted.comps[sorted.s..]
            .iter()
            .filter(|c| c.p > 0.0)
            .map(|c| term(c).powf(1.0 / (c.alpha + 1.0)))
            .sum();
        let alpha_next = sorted.comps[sorted.s].alpha;
        (2.0 * lead * tail).powf((alpha_next + 1.0) / (alpha_next - a1))
    };

    let csum: f64 = sorted
        .comps
        .iter()
        .filter(|c| c.p > 0.0)
        .map(|c| c.p * c.a * term(c).powf(-c.alpha / (c.alpha + 1.0)))
        .sum();
    let floor = sorted
        .comps
        .iter()
        .map(|c| (c.a / c.b).min(1.0))
        .fold(f64::INFINITY, f64::min);
    let t2 = 2.0 * (1.0 / (floor * csum)).powf(1.0 / a1);

    let big_c = 2f64.powf(a1) * csum;
    let t3 = sorted
        .comps
        .iter()
        .filter(|c| c.p > 0.0)
        .map(|c| 2.0 * c.b * big_c / (c.p * c.a))
        .fold(0.0f64, f64::max)
        .powf(1.0 / a1);

    let t4 = sorted
        .comps
        .iter()
        .map(|c| c.b.powf(1.0 / c.alpha))
        .fold(0.0f64, f64::max);

    let thresholds = [t1, t2, t3, t4];
    let n = problem.budget as f64;
    let satisfied = thresholds.map(|t| t.is_finite() && n > t);
    Ok(N0Report { thresholds, satisfied })
}

/// Everything the power-law analysis produces for one instance.
#[derive(Debug, Clone)]
pub struct PowerLawSolution {
    pub q_star_asymptotic: SimplexVec,
    pub q_star_numeric: SimplexVec,
    pub l_same_leading: f64,
    pub l_star_leading: f64,
    pub lambda: f64,
    /// Size of the minimal-exponent group.
    pub s: usize,
    pub n0: N0Report,
    pub alpha_warning: bool,
    pub max_rel_residual: f64,
}

pub fn solve(problem: &MixtureProblem) -> Result<PowerLawSolution> {
    let numeric = solve_lambda(problem)?;
    let q_star_asymptotic = asymptotic_q_star(problem)?;
    let (l_same_leading, l_star_leading) = asymptotic_losses(problem)?;
    let sorted = sort_by_alpha(extract(problem)?);
    let n0 = n0_report(problem)?;
    Ok(PowerLawSolution {
        q_star_asymptotic,
        q_star_numeric: numeric.q,
        l_same_leading,
        l_star_leading,
        lambda: numeric.lambda,
        s: sorted.s,
        n0,
        alpha_warning: numeric.alpha_warning,
        max_rel_residual: numeric.max_rel_residual,
    })
}
