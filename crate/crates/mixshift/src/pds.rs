//! Deciding whether positive distribution shift exists at a given `p`.
//!
//! Matched training can only be optimal at an interior `p` when the weighted
//! gradient `g_i = Σ_k p_k ∂f_k(p)/∂p_i` vanishes, where `f_k` is the
//! 0-homogeneous extension `f_k(v) = ē_k(v / Σv)` of the component error
//! field. [`ErrorFieldProbe::stationarity_test`] estimates `g` by central
//! differences on that extension, projects it onto the simplex tangent space,
//! and reports the negated projection as an improving direction whenever the
//! norm clears the noise tolerance. Failing the test certifies
//! `L*(p) < L_same(p)`; passing it is evidence, not proof, of stationarity.

use rayon::prelude::*;

use crate::core::{expected_component_error, MixtureProblem, SimplexVec};
use crate::error::{Error, Result};

/// Evaluator for the per-component error field `(k, r) -> ē_k(r)`.
///
/// Implementations must be pure and reentrant; finite-difference probes are
/// evaluated in parallel. Monte Carlo-backed fields report their per-eval
/// noise so the decision can be declared inconclusive instead of wrong.
pub trait ErrorField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, k: usize, r: &SimplexVec) -> f64;
    /// Standard error of a single evaluation; `None` for exact fields.
    fn noise_level(&self) -> Option<f64> {
        None
    }
}

/// Exact field backed by a problem's closed-form / binomial expectations.
pub struct ProblemField<'a> {
    problem: &'a MixtureProblem,
}

impl<'a> ProblemField<'a> {
    pub fn new(problem: &'a MixtureProblem) -> Result<Self> {
        // Surface evaluation errors (strict tabulated ranges etc.) up front so
        // probing is infallible.
        for curve in &problem.curves {
            expected_component_error(curve, 0.0, problem.budget)?;
            expected_component_error(curve, 1.0, problem.budget)?;
        }
        Ok(Self { problem })
    }
}

impl ErrorField for ProblemField<'_> {
    fn dim(&self) -> usize {
        self.problem.k()
    }

    fn eval(&self, k: usize, r: &SimplexVec) -> f64 {
        expected_component_error(&self.problem.curves[k], r[k], self.problem.budget)
            .expect("validated curve")
    }
}

/// Monte Carlo-backed field; every evaluation gets its own seed stream
/// derived from `(seed, k, r_k)`.
pub struct McProblemField<'a> {
    problem: &'a MixtureProblem,
    draws: u64,
    seed: u64,
    noise: f64,
}

impl<'a> McProblemField<'a> {
    pub fn new(problem: &'a MixtureProblem, draws: u64, seed: u64) -> Result<Self> {
        if draws < 2 {
            return Err(Error::InvalidInput("draws must be >= 2".into()));
        }
        let mut vmax: f64 = 0.0;
        for curve in &problem.curves {
            vmax = vmax.max(crate::core::eval_curve(curve, 0)?);
        }
        // Errors live in [0, vmax]; half-range over sqrt(draws) bounds the
        // standard error of one evaluation.
        let noise = 0.5 * vmax / (draws as f64).sqrt();
        Ok(Self { problem, draws, seed, noise })
    }
}

impl ErrorField for McProblemField<'_> {
    fn dim(&self) -> usize {
        self.problem.k()
    }

    fn eval(&self, k: usize, r: &SimplexVec) -> f64 {
        let mut z = self
            .seed
            .wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
            ^ r[k].to_bits();
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        let mc = crate::simulate::McConfig {
            draws: self.draws,
            seed: z ^ (z >> 31),
            parallel_streams: 1,
        };
        crate::simulate::binomial_estimate(&self.problem.curves[k], r[k], self.problem.budget, &mc)
            .expect("validated curve")
            .estimate
    }

    fn noise_level(&self) -> Option<f64> {
        Some(self.noise)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationarityVerdict {
    Stationary,
    NonStationary,
    /// Sampling noise exceeded the decision budget; no certificate either way.
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct StationarityReport {
    pub verdict: StationarityVerdict,
    /// Norm of the tangent-projected weighted gradient.
    pub tangent_norm: f64,
    /// Decision threshold actually used (truncation estimate + floor).
    pub tolerance: f64,
    /// Negated tangent gradient: a strictly improving direction for the
    /// training mixture when the verdict is non-stationary.
    pub certificate: Vec<f64>,
    pub gradient: Vec<f64>,
    pub mc_noise: Option<f64>,
}

impl StationarityReport {
    pub fn is_stationary(&self) -> bool {
        self.verdict == StationarityVerdict::Stationary
    }
}

/// Finite-difference probe of an error field.
pub struct ErrorFieldProbe<'a> {
    field: &'a dyn ErrorField,
    h: f64,
}

pub const DEFAULT_FD_STEP: f64 = 1e-4;

impl<'a> ErrorFieldProbe<'a> {
    pub fn new(field: &'a dyn ErrorField) -> Self {
        Self { field, h: DEFAULT_FD_STEP }
    }

    pub fn with_step(field: &'a dyn ErrorField, h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 0.1) {
            return Err(Error::InvalidInput(format!(
                "finite-difference step h = {h} outside (0, 0.1)"
            )));
        }
        Ok(Self { field, h })
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    /// `f_k(v) = ē_k(v / Σv)`: exactly invariant under positive scaling.
    pub fn homogeneous_eval(&self, k: usize, v: &[f64]) -> Result<f64> {
        if k >= self.field.dim() {
            return Err(Error::InvalidInput(format!("component {k} out of range")));
        }
        let r = SimplexVec::from_weights(v.to_vec())?;
        Ok(self.field.eval(k, &r))
    }

    /// `g_i = Σ_k p_k ∂f_k/∂p_i` by central differences at step `h`.
    fn weighted_gradient(&self, p: &SimplexVec, h: f64) -> Vec<f64> {
        let k = self.field.dim();
        let base: Vec<f64> = p.as_slice().to_vec();
        (0..k)
            .into_par_iter()
            .map(|i| {
                let mut plus = base.clone();
                plus[i] += h;
                let mut minus = base.clone();
                minus[i] -= h;
                let r_plus = SimplexVec::from_weights(plus).expect("interior point");
                let r_minus = SimplexVec::from_weights(minus).expect("interior point");
                (0..k)
                    .map(|comp| {
                        p[comp]
                            * (self.field.eval(comp, &r_plus) - self.field.eval(comp, &r_minus))
                            / (2.0 * h)
                    })
                    .sum()
            })
            .collect()
    }

    /// Whether a strictly improving training mixture exists at `p`.
    ///
    /// The tolerance is estimated from the data itself: the same gradient is
    /// recomputed at step `2h` and the disagreement (which scales with the
    /// `O(h^2)` truncation error) sets the threshold, with a small absolute
    /// floor. For noisy fields the verdict degrades to inconclusive whenever
    /// the propagated sampling noise exceeds a tenth of the threshold.
    pub fn stationarity_test(&self, p: &SimplexVec) -> Result<StationarityReport> {
        let k = self.field.dim();
        if p.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: p.len() });
        }
        let margin = p.min_entry();
        let required = 10.0 * self.h;
        if margin < required {
            return Err(Error::BoundaryProximity { margin, required });
        }

        let g = self.weighted_gradient(p, self.h);
        let g_coarse = self.weighted_gradient(p, 2.0 * self.h);
        let tangent = |v: &[f64]| -> Vec<f64> {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| x - mean).collect()
        };
        let t_fine = tangent(&g);
        let t_coarse = tangent(&g_coarse);
        let norm = t_fine.iter().map(|x| x * x).sum::<f64>().sqrt();
        let consistency = t_fine
            .iter()
            .zip(&t_coarse)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();

        let scale = (0..k)
            .map(|comp| self.field.eval(comp, p).abs())
            .fold(0.0f64, f64::max)
            .max(1.0);
        let floor = 1e-9 * scale * (k as f64).sqrt();
        let tolerance = (5.0 * consistency).max(floor);

        let mc_noise = self.field.noise_level().map(|sigma| {
            // Var(g_i) = Σ_k p_k^2 · 2σ² / (2h)²; tangent projection only
            // shrinks it.
            let p2: f64 = p.iter().map(|x| x * x).sum();
            (p2 * 2.0 * sigma * sigma).sqrt() / (2.0 * self.h) * (k as f64).sqrt()
        });
        if let Some(noise) = mc_noise {
            if noise > 0.1 * tolerance {
                return Ok(StationarityReport {
                    verdict: StationarityVerdict::Inconclusive,
                    tangent_norm: norm,
                    tolerance,
                    certificate: t_fine.iter().map(|x| -x).collect(),
                    gradient: g,
                    mc_noise,
                });
            }
        }

        let verdict = if norm <= tolerance {
            StationarityVerdict::Stationary
        } else {
            StationarityVerdict::NonStationary
        };
        Ok(StationarityReport {
            verdict,
            tangent_norm: norm,
            tolerance,
            certificate: t_fine.iter().map(|x| -x).collect(),
            gradient: g,
            mc_noise,
        })
    }

    /// For fields where `ē_k` depends on its own coordinate only: true iff
    /// every single-coordinate section `g_k(x)` is constant over the sampled
    /// range. Constancy of every section is the only way the conservation
    /// condition can hold for independent components with `K >= 3`, so a
    /// `false` here means positive distribution shift exists for almost
    /// every `p`.
    pub fn independence_constancy_test(&self, sample_points: usize) -> Result<bool> {
        let k = self.field.dim();
        if k < 3 {
            return Err(Error::InvalidInput(
                "independence test needs K >= 3 components".into(),
            ));
        }
        if sample_points < 2 {
            return Err(Error::InvalidInput("need at least 2 sample points".into()));
        }
        let lo = self.h;
        let hi = 1.0 - self.h;
        for comp in 0..k {
            let mut min_v = f64::INFINITY;
            let mut max_v = f64::NEG_INFINITY;
            for s in 0..sample_points {
                let x = lo + (hi - lo) * s as f64 / (sample_points - 1) as f64;
                let mut v = vec![(1.0 - x) / (k - 1) as f64; k];
                v[comp] = x;
                let value = self.homogeneous_eval(comp, &v)?;
                min_v = min_v.min(value);
                max_v = max_v.max(value);
            }
            let spread_tol = 1e-8 * max_v.abs().max(1.0)
                + self.field.noise_level().unwrap_or(0.0) * 6.0;
            if max_v - min_v > spread_tol {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{mixture_loss, LearningCurve};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn memo_problem(p: &[f64], n: u64) -> MixtureProblem {
        MixtureProblem::new(
            SimplexVec::new(p.to_vec()).unwrap(),
            vec![LearningCurve::Memorization; p.len()],
            n,
        )
        .unwrap()
    }

    fn constant_problem(k: usize, levels: &[f64]) -> MixtureProblem {
        let curves = levels
            .iter()
            .map(|&c| {
                let mut values = BTreeMap::new();
                values.insert(0u64, c);
                LearningCurve::tabulated(values, crate::core::Extrapolation::Clamp).unwrap()
            })
            .collect();
        MixtureProblem::new(SimplexVec::uniform(k), curves, 10).unwrap()
    }

    #[test]
    fn homogeneous_eval_scaling_invariance() {
        let prob = memo_problem(&[0.6, 0.3, 0.1], 4);
        let field = ProblemField::new(&prob).unwrap();
        let probe = ErrorFieldProbe::new(&field);
        let a = probe.homogeneous_eval(1, &[2.0, 1.0, 1.0]).unwrap();
        let b = probe.homogeneous_eval(1, &[0.5, 0.25, 0.25]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(probe.homogeneous_eval(0, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn homogeneous_eval_memorization_value() {
        let prob = memo_problem(&[0.5, 0.5], 4);
        let field = ProblemField::new(&prob).unwrap();
        let probe = ErrorFieldProbe::new(&field);
        let v = probe.homogeneous_eval(0, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(v, 0.0625, max_relative = 1e-14);
    }

    #[test]
    fn constant_curves_are_stationary_everywhere() {
        let prob = constant_problem(3, &[0.9, 0.4, 0.1]);
        let field = ProblemField::new(&prob).unwrap();
        let probe = ErrorFieldProbe::new(&field);
        for p in [
            SimplexVec::uniform(3),
            SimplexVec::new(vec![0.6, 0.3, 0.1]).unwrap(),
            SimplexVec::new(vec![0.2, 0.5, 0.3]).unwrap(),
        ] {
            let report = probe.stationarity_test(&p).unwrap();
            assert!(report.is_stationary(), "norm = {}", report.tangent_norm);
            assert!(report.tangent_norm <= 1e-9);
        }
    }

    #[test]
    fn skewed_memorization_is_not_stationary() {
        let prob = memo_problem(&[0.6, 0.3, 0.1], 3);
        let field = ProblemField::new(&prob).unwrap();
        let probe = ErrorFieldProbe::new(&field);
        let report = probe.stationarity_test(&prob.p).unwrap();
        assert_eq!(report.verdict, StationarityVerdict::NonStationary);

        // Moving the training mixture along the certificate must help.
        let step = 1e-3 / report.tangent_norm;
        let shifted: Vec<f64> = prob
            .p
            .iter()
            .zip(&report.certificate)
            .map(|(&pi, &c)| pi + step * c)
            .collect();
        let q = SimplexVec::from_weights(shifted).unwrap();
        let before = mixture_loss(&prob, &prob.p).unwrap();
        let after = mixture_loss(&prob, &q).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn symmetric_memorization_pair_is_stationary() {
        let prob = memo_problem(&[0.5, 0.5], 4);
        let field = ProblemField::new(&prob).unwrap();
        let probe = ErrorFieldProbe::new(&field);
        let report = probe.stationarity_test(&prob.p).unwrap();
        assert!(report.is_stationary(), "norm = {}", report.tangent_norm);
    }

    #[test]
    fn boundary_points_are_rejected() {
        let prob = memo_problem(&[0.9995, 0.0005], 4);
        let field = ProblemField::new(&prob).unwrap();
        let probe = ErrorFieldProbe::new(&field);
        assert!(matches!(
            probe.stationarity_test(&prob.p),
            Err(Error::BoundaryProximity { .. })
        ));
    }

    #[test]
    fn independence_sections() {
        let memo = memo_problem(&[0.4, 0.3, 0.3], 2);
        let field = ProblemField::new(&memo).unwrap();
        let probe = ErrorFieldProbe::new(&field);
        assert!(!probe.independence_constancy_test(9).unwrap());

        let consts = constant_problem(3, &[0.5, 0.5, 0.5]);
        let field = ProblemField::new(&consts).unwrap();
        let probe = ErrorFieldProbe::new(&field);
        assert!(probe.independence_constancy_test(9).unwrap());

        let pl = MixtureProblem::new(
            SimplexVec::uniform(3),
            vec![LearningCurve::power_law(1.0, 1.0, 0.5).unwrap(); 3],
            100,
        )
        .unwrap();
        let field = ProblemField::new(&pl).unwrap();
        let probe = ErrorFieldProbe::new(&field);
        assert!(!probe.independence_constancy_test(3).unwrap());

        let two = memo_problem(&[0.5, 0.5], 2);
        let field = ProblemField::new(&two).unwrap();
        let probe = ErrorFieldProbe::new(&field);
        assert!(probe.independence_constancy_test(9).is_err());
    }

    #[test]
    fn noisy_probe_reports_inconclusive_when_underpowered() {
        let prob = memo_problem(&[0.4, 0.35, 0.25], 6);
        let field = McProblemField::new(&prob, 64, 9).unwrap();
        let probe = ErrorFieldProbe::new(&field);
        let report = probe.stationarity_test(&prob.p).unwrap();
        assert_eq!(report.verdict, StationarityVerdict::Inconclusive);
        assert!(report.mc_noise.unwrap() > 0.0);
    }

    #[test]
    fn agreement_with_water_filling_on_random_points() {
        let points = [
            vec![0.5, 0.3, 0.2],
            vec![0.45, 0.35, 0.2],
            vec![0.4, 0.21, 0.19, 0.2],
            vec![0.3, 0.25, 0.2, 0.15, 0.1],
        ];
        for p in points {
            let prob = memo_problem(&p, 5);
            let field = ProblemField::new(&prob).unwrap();
            let probe = ErrorFieldProbe::new(&field);
            let report = probe.stationarity_test(&prob.p).unwrap();
            let wf = crate::memorization::water_fill(&prob.p, 5).unwrap();
            let moved = wf
                .q_star
                .iter()
                .zip(prob.p.iter())
                .any(|(a, b)| (a - b).abs() > 1e-9);
            assert_eq!(
                report.verdict == StationarityVerdict::NonStationary,
                moved,
                "p = {p:?}"
            );
        }
    }
}
