//! Exact optimal mixing for memorization tasks via water-filling.
//!
//! With `e_k(n) = 1{n = 0}` the expected loss is `Σ_k p_k (1 - q_k)^N`,
//! convex in `q`, and the minimizer has closed form
//! `q*_k = max{0, 1 - β_N p_k^{-1/(N-1)}}`: components whose test mass falls
//! below the water level `β_N^{N-1}` receive no training mass at all.

use crate::core::{pow1m, SimplexVec};
use crate::error::{Error, Result};

/// Closed-form water-filling optimum.
#[derive(Debug, Clone)]
pub struct WaterFillingResult {
    /// Optimal training proportions, in the caller's component order.
    pub q_star: SimplexVec,
    /// Number of components receiving positive training mass.
    pub k_n: usize,
    /// Water level `β_N = (K_N - 1) / Σ_{k<=K_N} p_k^{-1/(N-1)}`.
    pub beta_n: f64,
    /// `δ_N = β_N^{N-1}`, the residual error shared by active components.
    pub delta_n: f64,
    pub l_star: f64,
    pub l_same: f64,
    /// `sort_permutation[rank] = original index` for the descending-p order
    /// used internally (stable across ties).
    pub sort_permutation: Vec<usize>,
}

/// Matched-training loss `Σ_k p_k (1 - p_k)^N`.
pub fn l_same_memorization(p: &SimplexVec, budget: u64) -> f64 {
    p.iter().map(|&pk| pk * pow1m(pk, budget)).sum()
}

/// Optimal mixing for memorization components.
///
/// `N = 1` is outside the closed form (the exponent `1/(N-1)` degenerates);
/// the minimizer is then any split of the budget over the largest test
/// masses, realized here as an equal split over the tied maxima with
/// `L* = 1 - max_k p_k`.
pub fn water_fill(p: &SimplexVec, budget: u64) -> Result<WaterFillingResult> {
    if budget < 1 {
        return Err(Error::InvalidInput("budget N must be >= 1".into()));
    }
    let k = p.len();
    let l_same = l_same_memorization(p, budget);

    // Descending test mass, stable across ties; zero-mass components land
    // last and never activate.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| p[j].partial_cmp(&p[i]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| p[i]).collect();
    let positive = sorted.iter().take_while(|&&x| x > 0.0).count();

    if budget == 1 {
        let top = sorted[0];
        let ties = sorted.iter().take_while(|&&x| x == top).count();
        let mut q = vec![0.0; k];
        for &orig in order.iter().take(ties) {
            q[orig] = 1.0 / ties as f64;
        }
        return Ok(WaterFillingResult {
            q_star: SimplexVec::new(q)?,
            k_n: ties,
            beta_n: top,
            delta_n: top,
            l_star: 1.0 - top,
            l_same,
            sort_permutation: order,
        });
    }

    let inv = 1.0 / (budget - 1) as f64;
    // w_k = p_k^{-1/(N-1)} via exp(-ln p / (N-1)) so tiny masses and large
    // budgets stay finite.
    let w: Vec<f64> = sorted[..positive]
        .iter()
        .map(|&pk| (-pk.ln() * inv).exp())
        .collect();

    // f_N(l) = Σ_{k<l} (1 - (p_l/p_k)^{1/(N-1)}) = (l-1) - p_l^{1/(N-1)} Σ_{k<l} w_k
    // is non-decreasing in l; K_N is the last size with f_N < 1. Tied masses
    // contribute zero terms, so ties enter the active set together.
    let mut k_n = 1;
    let mut prefix_w = w[0];
    for l in 2..=positive {
        let p_l_pow = (sorted[l - 1].ln() * inv).exp();
        let f = (l - 1) as f64 - p_l_pow * prefix_w;
        if f < 1.0 {
            k_n = l;
            prefix_w += w[l - 1];
        } else {
            break;
        }
    }

    let w_sum: f64 = w[..k_n].iter().sum();
    let beta_n = if k_n == 1 { 0.0 } else { (k_n - 1) as f64 / w_sum };
    let delta_n = if beta_n > 0.0 {
        ((budget - 1) as f64 * beta_n.ln()).exp()
    } else {
        0.0
    };

    let mut q = vec![0.0; k];
    for (rank, &orig) in order.iter().enumerate().take(k_n) {
        q[orig] = (1.0 - beta_n * w[rank]).max(0.0);
    }
    let tail: f64 = sorted[k_n..].iter().sum();
    let l_star = (k_n - 1) as f64 * delta_n + tail;

    Ok(WaterFillingResult {
        q_star: SimplexVec::from_weights(q)?,
        k_n,
        beta_n,
        delta_n,
        l_star,
        l_same,
        sort_permutation: order,
    })
}

/// Fitted log-log slopes of `L_same` and `L*` over a budget grid, for test
/// masses `p_k ∝ k^{-alpha}` with `K = k_factor · N` components.
#[derive(Debug, Clone)]
pub struct ScalingSlopes {
    pub slope_same: f64,
    pub slope_star: f64,
    /// One row per grid budget: `(N, L_same, L_star)`.
    pub points: Vec<(u64, f64, f64)>,
    /// False when the grid sits outside the `K = Ω(N)`, `alpha > 1` regime
    /// the slope predictions assume.
    pub regime_ok: bool,
}

pub fn scaling_exponents(alpha: f64, n_grid: &[u64], k_factor: f64) -> Result<ScalingSlopes> {
    if alpha <= 1.0 {
        return Err(Error::InvalidInput(format!(
            "alpha = {alpha}, must be > 1 for the power-law tail"
        )));
    }
    if n_grid.len() < 4 {
        return Err(Error::InvalidInput("need at least 4 grid budgets".into()));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("budget grid must be ascending".into()));
    }
    if k_factor <= 0.0 {
        return Err(Error::InvalidInput("K factor must be > 0".into()));
    }

    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let k = ((k_factor * n as f64).round() as usize).max(2);
        let weights: Vec<f64> = (1..=k).map(|i| (i as f64).powf(-alpha)).collect();
        let p = SimplexVec::from_weights(weights)?;
        let wf = water_fill(&p, n)?;
        points.push((n, wf.l_same, wf.l_star));
    }

    let fit = |select: &dyn Fn(&(u64, f64, f64)) -> f64| -> f64 {
        let xs: Vec<f64> = points.iter().map(|pt| (pt.0 as f64).ln()).collect();
        let ys: Vec<f64> = points.iter().map(|pt| select(pt).ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        cov / var
    };

    // K = Ω(N) needs the component count to keep pace with the budget.
    let regime_ok = k_factor >= 1.0;
    Ok(ScalingSlopes {
        slope_same: fit(&|pt| pt.1),
        slope_star: fit(&|pt| pt.2),
        points,
        regime_ok,
    })
}
