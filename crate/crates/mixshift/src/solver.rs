//! Model-agnostic simplex minimization and sample-complexity search.
//!
//! [`minimize_simplex`] is the universal oracle the closed-form solvers are
//! checked against: entropic mirror descent from the uniform start with
//! backtracking, an exhaustive grid pass for small `K`, and the uniform point
//! and all vertices always evaluated as candidates.

use rayon::prelude::*;

use crate::core::{mixture_loss, MixtureProblem, SimplexVec};
use crate::error::{Error, Result};
use crate::{memorization, powerlaw, transfer};

/// Step-size policy for the mirror-descent loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Fixed(f64),
    Backtracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// First-order stationarity residual at which iteration stops.
    pub tol: f64,
    /// Spacing of the exhaustive grid used for `K <= 4`.
    pub grid_resolution: f64,
    pub step_rule: StepRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 5_000,
            tol: 1e-9,
            grid_resolution: 1e-2,
            step_rule: StepRule::Backtracking,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tol <= 0.0 {
            return Err(Error::InvalidInput("solver tol must be > 0".into()));
        }
        if !(0.0 < self.grid_resolution && self.grid_resolution <= 0.5) {
            return Err(Error::InvalidInput(
                "grid_resolution must lie in (0, 0.5]".into(),
            ));
        }
        Ok(())
    }
}

/// Best point found by [`minimize_simplex`].
#[derive(Debug, Clone)]
pub struct SimplexMinimum {
    pub q: SimplexVec,
    pub value: f64,
    /// False when the iteration budget ran out before the residual target.
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

const SNAP_EPS: f64 = 1e-9;
const EXP_CLAMP: f64 = 60.0;

/// Gradient of the normalized extension `v -> F(v / Σv)` by central
/// differences; keeps every probe on the simplex regardless of `h`.
fn fd_gradient<F: Fn(&SimplexVec) -> f64>(objective: &F, q: &SimplexVec, h: f64) -> Vec<f64> {
    let k = q.len();
    let homog = |v: &[f64]| -> f64 {
        let s = SimplexVec::from_weights(v.to_vec()).expect("positive weights");
        objective(&s)
    };
    let base: Vec<f64> = q.as_slice().to_vec();
    (0..k)
        .map(|i| {
            let mut up = base.clone();
            up[i] += h;
            let f_up = homog(&up);
            if base[i] >= h {
                let mut dn = base.clone();
                dn[i] -= h;
                (f_up - homog(&dn)) / (2.0 * h)
            } else {
                (f_up - homog(&base)) / h
            }
        })
        .collect()
}

fn stationarity_residual(q: &SimplexVec, grad: &[f64]) -> f64 {
    let gbar: f64 = q.iter().zip(grad).map(|(qi, gi)| qi * gi).sum();
    let mut res: f64 = 0.0;
    for (i, &gi) in grad.iter().enumerate() {
        if q[i] > SNAP_EPS {
            res = res.max(q[i] * (gi - gbar).abs());
        } else {
            // A vanished coordinate is optimal only if regrowing it cannot
            // help; weight the violation by the mass a step could move.
            res = res.max((gbar - gi).max(0.0) * 1e-6);
        }
    }
    res
}

/// Exhaustive minimum over the resolution-`1/m` simplex grid, streamed (never
/// materialized) and parallelized over the leading coordinate.
fn grid_minimum<F>(objective: &F, k: usize, resolution: f64) -> Option<(f64, SimplexVec)>
where
    F: Fn(&SimplexVec) -> f64 + Sync,
{
    let m = (1.0 / resolution).round().max(1.0) as usize;
    fn rec<F: Fn(&SimplexVec) -> f64>(
        objective: &F,
        coords: &mut Vec<usize>,
        idx: usize,
        left: usize,
        m: usize,
        best: &mut Option<(f64, SimplexVec)>,
    ) {
        if idx == coords.len() - 1 {
            coords[idx] = left;
            let v: Vec<f64> = coords.iter().map(|&c| c as f64 / m as f64).collect();
            let point = SimplexVec::new(v).expect("grid point on simplex");
            let value = objective(&point);
            if best.as_ref().is_none_or(|(b, _)| value < *b) {
                *best = Some((value, point));
            }
            return;
        }
        for c in 0..=left {
            coords[idx] = c;
            rec(objective, coords, idx + 1, left - c, m, best);
        }
    }
    (0..=m)
        .into_par_iter()
        .map(|first| {
            let mut coords = vec![0usize; k];
            coords[0] = first;
            let mut best = None;
            rec(objective, &mut coords, 1, m - first, m, &mut best);
            best
        })
        .flatten()
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

/// Minimizes a continuous objective over the probability simplex.
///
/// Runs entropic mirror descent from the uniform point, then (for `K <= 4`)
/// an exhaustive grid at `cfg.grid_resolution`, a boundary sweep snapping
/// coordinates below `1e-9` to exact zeros, and always considers the uniform
/// point and every vertex. Returns the best candidate seen; `converged` is
/// false when the iteration budget ran out above the residual target.
pub fn minimize_simplex<F>(objective: F, k: usize, cfg: &SolverConfig) -> Result<SimplexMinimum>
where
    F: Fn(&SimplexVec) -> f64 + Sync,
{
    cfg.validate()?;
    if k < 1 {
        return Err(Error::InvalidInput("K must be >= 1".into()));
    }
    if k == 1 {
        let q = SimplexVec::uniform(1);
        let value = objective(&q);
        return Ok(SimplexMinimum { q, value, converged: true, iterations: 0, residual: 0.0 });
    }

    let h = 1e-6;
    let mut q = SimplexVec::uniform(k);
    let mut fq = objective(&q);
    let mut eta = match cfg.step_rule {
        StepRule::Fixed(s) => s,
        StepRule::Backtracking => 1.0,
    };
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for iter in 0..cfg.max_iters {
        iterations = iter + 1;
        let grad = fd_gradient(&objective, &q, h);
        residual = stationarity_residual(&q, &grad);
        if residual <= cfg.tol {
            converged = true;
            break;
        }
        let gbar: f64 = q.iter().zip(&grad).map(|(qi, gi)| qi * gi).sum();
        let mut accepted = false;
        let mut step = eta;
        for _ in 0..60 {
            let weights: Vec<f64> = q
                .iter()
                .zip(&grad)
                .map(|(qi, gi)| {
                    let arg = (-step * (gi - gbar)).clamp(-EXP_CLAMP, EXP_CLAMP);
                    (qi * arg.exp()).max(f64::MIN_POSITIVE)
                })
                .collect();
            let candidate = SimplexVec::from_weights(weights)?;
            let fc = objective(&candidate);
            if fc < fq {
                q = candidate;
                fq = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
            if matches!(cfg.step_rule, StepRule::Fixed(_)) {
                break;
            }
        }
        if !accepted {
            // No descent at any step size: numerically first-order optimal.
            converged = residual <= cfg.tol.max(1e-7);
            break;
        }
        if matches!(cfg.step_rule, StepRule::Backtracking) {
            eta = (step * 1.5).min(64.0);
        }
    }

    let mut best_q = q.clone();
    let mut best_v = fq;
    let mut consider = |cand: SimplexVec, v: f64| {
        if v < best_v {
            best_v = v;
            best_q = cand;
        }
    };

    // Boundary sweep: exact zeros for coordinates that collapsed.
    if q.min_entry() < SNAP_EPS {
        let snapped: Vec<f64> = q
            .iter()
            .map(|&x| if x < SNAP_EPS { 0.0 } else { x })
            .collect();
        if snapped.iter().sum::<f64>() > 0.0 {
            let cand = SimplexVec::from_weights(snapped)?;
            let v = objective(&cand);
            consider(cand, v);
        }
    }

    let uniform = SimplexVec::uniform(k);
    let v = objective(&uniform);
    consider(uniform, v);
    for i in 0..k {
        let vertex = SimplexVec::one_hot(k, i);
        let v = objective(&vertex);
        consider(vertex, v);
    }

    if k <= 4 {
        if let Some((v, pt)) = grid_minimum(&objective, k, cfg.grid_resolution) {
            consider(pt, v);
        }
    }

    Ok(SimplexMinimum {
        q: best_q,
        value: best_v,
        converged,
        iterations,
        residual,
    })
}

/// Minimal `N` with `loss(N) <= epsilon`, or `None` if `loss(N_max)` is still
/// above it. The loss must be non-increasing in `N`; a geometric ladder of
/// spot checks enforces this and errors on violation.
pub fn sample_complexity<F: Fn(u64) -> f64>(
    loss: F,
    epsilon: f64,
    n_max: u64,
) -> Result<Option<u64>> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidInput("epsilon must be > 0".into()));
    }
    if n_max < 1 {
        return Err(Error::InvalidInput("N_max must be >= 1".into()));
    }

    // Monotonicity spot checks along 1, 2, 4, ..., N_max.
    let mut prev_n = 1u64;
    let mut prev_loss = loss(1);
    let mut n = 2u64;
    loop {
        let n_eval = n.min(n_max);
        let l = loss(n_eval);
        let slack = 1e-9 * prev_loss.abs().max(1.0);
        if l > prev_loss + slack {
            return Err(Error::ContractViolation(format!(
                "loss({n_eval}) = {l} > loss({prev_n}) = {prev_loss}"
            )));
        }
        prev_n = n_eval;
        prev_loss = l;
        if n_eval == n_max {
            break;
        }
        n = n.saturating_mul(2);
    }

    if loss(1) <= epsilon {
        return Ok(Some(1));
    }
    if loss(n_max) > epsilon {
        return Ok(None);
    }

    // loss(lo) > epsilon >= loss(hi); shrink to the minimal hi.
    let mut lo = 1u64;
    let mut hi = 2u64;
    while hi < n_max && loss(hi) > epsilon {
        lo = hi;
        hi = hi.saturating_mul(2).min(n_max);
    }
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if loss(mid) <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    debug_assert!(loss(hi) <= epsilon && loss(hi - 1) > epsilon);
    Ok(Some(hi))
}

/// Whether the optimal mixture is recomputed at every probed budget or
/// frozen at the matched-training sample complexity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QStarMode {
    /// `N_eps^*` is defined through `L*_N`, so `q*` depends on `N`.
    ReoptimizePerN,
    /// Alternative reading: fix `q*` at `N_eps^same` and sweep `N`.
    FixedAtMatchedBudget,
}

#[derive(Debug, Clone)]
pub struct SampleComplexityRatio {
    pub n_same: u64,
    pub n_star: u64,
    pub ratio: f64,
}

fn with_budget(problem: &MixtureProblem, budget: u64) -> MixtureProblem {
    MixtureProblem {
        p: problem.p.clone(),
        curves: problem.curves.clone(),
        budget,
    }
}

/// Matched-training loss as a function of the budget, using the family
/// closed/deterministic forms where they exist.
pub(crate) fn l_same_at(problem: &MixtureProblem, budget: u64) -> Result<f64> {
    if problem.all_kind("memorization") {
        return Ok(memorization::l_same_memorization(&problem.p, budget));
    }
    if problem.all_kind("powerlaw") {
        return powerlaw::approximate_loss(&with_budget(problem, budget), &problem.p);
    }
    if problem.all_kind("transfer") {
        let dec = transfer::reduce_to_powerlaw(&with_budget(problem, budget))?;
        return Ok(dec.transfer_offset
            + powerlaw::approximate_loss(&dec.reduced, &problem.p)?);
    }
    mixture_loss(&with_budget(problem, budget), &problem.p)
}

/// Optimal loss as a function of the budget (per-budget reoptimization).
pub(crate) fn l_star_at(problem: &MixtureProblem, budget: u64, cfg: &SolverConfig) -> Result<f64> {
    if problem.all_kind("memorization") {
        return Ok(memorization::water_fill(&problem.p, budget)?.l_star);
    }
    if problem.all_kind("powerlaw") {
        let sol = powerlaw::solve_lambda(&with_budget(problem, budget))?;
        return powerlaw::approximate_loss(&with_budget(problem, budget), &sol.q);
    }
    if problem.all_kind("transfer") {
        let scoped = with_budget(problem, budget);
        let dec = transfer::reduce_to_powerlaw(&scoped)?;
        let sol = powerlaw::solve_lambda(&dec.reduced)?;
        return Ok(dec.transfer_offset + powerlaw::approximate_loss(&dec.reduced, &sol.q)?);
    }
    let scoped = with_budget(problem, budget);
    let min = minimize_simplex(
        |q| mixture_loss(&scoped, q).unwrap_or(f64::INFINITY),
        problem.k(),
        cfg,
    )?;
    Ok(min.value.min(mixture_loss(&scoped, &problem.p)?))
}

fn q_star_at(problem: &MixtureProblem, budget: u64, cfg: &SolverConfig) -> Result<SimplexVec> {
    if problem.all_kind("memorization") {
        return Ok(memorization::water_fill(&problem.p, budget)?.q_star);
    }
    if problem.all_kind("powerlaw") {
        return Ok(powerlaw::solve_lambda(&with_budget(problem, budget))?.q);
    }
    if problem.all_kind("transfer") {
        let dec = transfer::reduce_to_powerlaw(&with_budget(problem, budget))?;
        return Ok(powerlaw::solve_lambda(&dec.reduced)?.q);
    }
    let scoped = with_budget(problem, budget);
    Ok(minimize_simplex(
        |q| mixture_loss(&scoped, q).unwrap_or(f64::INFINITY),
        problem.k(),
        cfg,
    )?
    .q)
}

fn l_at_fixed_q(problem: &MixtureProblem, q: &SimplexVec, budget: u64) -> Result<f64> {
    if problem.all_kind("powerlaw") {
        return powerlaw::approximate_loss(&with_budget(problem, budget), q);
    }
    if problem.all_kind("transfer") {
        let dec = transfer::reduce_to_powerlaw(&with_budget(problem, budget))?;
        return Ok(dec.transfer_offset + powerlaw::approximate_loss(&dec.reduced, q)?);
    }
    mixture_loss(&with_budget(problem, budget), q)
}

/// `N_eps^ratio = N_eps at the optimal mixture / N_eps at the matched
/// mixture`, both found by bracketing + bisection on the budget.
pub fn sample_complexity_ratio(problem: &MixtureProblem, epsilon: f64) -> Result<f64> {
    Ok(
        sample_complexity_ratio_with(problem, epsilon, 1 << 40, QStarMode::ReoptimizePerN)?
            .ratio,
    )
}

pub fn sample_complexity_ratio_with(
    problem: &MixtureProblem,
    epsilon: f64,
    n_max: u64,
    mode: QStarMode,
) -> Result<SampleComplexityRatio> {
    let cfg = SolverConfig::default();
    let same = sample_complexity(|n| l_same_at(problem, n).unwrap_or(f64::INFINITY), epsilon, n_max)?
        .ok_or(Error::TargetUnreachable { epsilon, n_max })?;
    let star = match mode {
        QStarMode::ReoptimizePerN => sample_complexity(
            |n| l_star_at(problem, n, &cfg).unwrap_or(f64::INFINITY),
            epsilon,
            n_max,
        )?,
        QStarMode::FixedAtMatchedBudget => {
            let q_fixed = q_star_at(problem, same, &cfg)?;
            sample_complexity(
                |n| l_at_fixed_q(problem, &q_fixed, n).unwrap_or(f64::INFINITY),
                epsilon,
                n_max,
            )?
        }
    }
    .ok_or(Error::TargetUnreachable { epsilon, n_max })?;
    Ok(SampleComplexityRatio {
        n_same: same,
        n_star: star,
        ratio: star as f64 / same as f64,
    })
}
