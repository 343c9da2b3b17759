//! Seeded Monte Carlo ground truth for mixture losses, the power-law
//! approximation-gap check, and a skill-composition model driven by an
//! idealized memorizing learner.
//!
//! Every estimator here is deterministic given `(seed, parallel_streams,
//! draws)`: draws are split across independently seeded streams and the
//! per-stream moments are merged in stream order, so results are bit-identical
//! across runs and thread counts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core::{
    binomial_expectation, eval_curve, LearningCurve, MixtureProblem, SimplexVec,
};
use crate::error::{Error, Result};
use crate::transfer::transfer_component_error;

/// Budget cap for the exact binomial sum inside [`approximation_gap`]; the
/// gap shrinks quadratically, so Monte Carlo noise would swamp it long before
/// the sum becomes expensive.
const GAP_EXACT_MAX_N: u64 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub draws: u64,
    pub seed: u64,
    pub parallel_streams: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            draws: 100_000,
            seed: 0x6d69_7873,
            parallel_streams: 4,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws < 1 {
            return Err(Error::InvalidInput("draws must be >= 1".into()));
        }
        if self.parallel_streams < 1 {
            return Err(Error::InvalidInput("parallel_streams must be >= 1".into()));
        }
        Ok(())
    }

    fn stream_sizes(&self) -> Vec<u64> {
        let streams = (self.parallel_streams as u64).min(self.draws);
        let base = self.draws / streams;
        let extra = self.draws % streams;
        (0..streams)
            .map(|s| base + u64::from(s < extra))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    // SplitMix64 scramble keeps streams decorrelated for any base seed.
    let mut z = seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha12Rng::seed_from_u64(z ^ (z >> 31))
}

/// Streaming mean/variance; identical samples yield exactly zero variance.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(a: Self, b: Self) -> Self {
        if a.count == 0 {
            return b;
        }
        if b.count == 0 {
            return a;
        }
        let count = a.count + b.count;
        let d = b.mean - a.mean;
        Welford {
            count,
            mean: a.mean + d * (b.count as f64 / count as f64),
            m2: a.m2 + b.m2 + d * d * (a.count as f64 * b.count as f64 / count as f64),
        }
    }

    fn estimate(&self) -> McEstimate {
        let stderr = if self.count < 2 || self.m2 <= 0.0 {
            0.0
        } else {
            (self.m2 / ((self.count - 1) as f64 * self.count as f64)).sqrt()
        };
        McEstimate { estimate: self.mean, stderr }
    }
}

fn run_streams<F>(mc: &McConfig, body: F) -> McEstimate
where
    F: Fn(&mut ChaCha12Rng, u64) -> Welford + Sync,
{
    let sizes = mc.stream_sizes();
    let parts: Vec<Welford> = sizes
        .par_iter()
        .enumerate()
        .map(|(s, &count)| {
            let mut rng = stream_rng(mc.seed, s as u64);
            body(&mut rng, count)
        })
        .collect();
    parts
        .into_iter()
        .fold(Welford::default(), Welford::merge)
        .estimate()
}

fn sample_multinomial<R: Rng>(rng: &mut R, q: &[f64], n: u64, out: &mut [u64]) {
    let k = q.len();
    let mut rem_n = n;
    let mut rem_p = 1.0f64;
    for i in 0..k {
        if i == k - 1 {
            out[i] = rem_n;
            break;
        }
        if rem_n == 0 || rem_p <= 0.0 {
            out[i] = 0;
            continue;
        }
        let p_i = (q[i] / rem_p).clamp(0.0, 1.0);
        let draw = if p_i <= 0.0 {
            0
        } else if p_i >= 1.0 {
            rem_n
        } else {
            Binomial::new(rem_n, p_i).expect("valid binomial").sample(rng)
        };
        out[i] = draw;
        rem_n -= draw;
        rem_p -= q[i];
    }
}

fn curve_error_at(curve: &LearningCurve, n_k: u64, n_total: u64) -> Result<f64> {
    match curve {
        LearningCurve::Transfer { .. } => transfer_component_error(curve, n_k, n_total),
        _ => eval_curve(curve, n_k),
    }
}

/// Monte Carlo estimate of `L_N(p, q)` with component counts drawn from
/// `Multinomial(q, N)`.
pub fn multinomial_estimate(
    problem: &MixtureProblem,
    q: &SimplexVec,
    mc: &McConfig,
) -> Result<McEstimate> {
    mc.validate()?;
    if q.len() != problem.k() {
        return Err(Error::DimensionMismatch {
            expected: problem.k(),
            got: q.len(),
        });
    }
    // Surface evaluation errors (e.g. strict tabulated ranges) before the
    // sampling loop starts, everything after is infallible.
    for curve in &problem.curves {
        curve_error_at(curve, 0, problem.budget)?;
        curve_error_at(curve, problem.budget, problem.budget)?;
    }
    let k = problem.k();
    let n = problem.budget;
    let est = run_streams(mc, |rng, count| {
        let mut welford = Welford::default();
        let mut counts = vec![0u64; k];
        for _ in 0..count {
            sample_multinomial(rng, q.as_slice(), n, &mut counts);
            let mut loss = 0.0;
            for (i, curve) in problem.curves.iter().enumerate() {
                if problem.p[i] > 0.0 {
                    loss += problem.p[i]
                        * curve_error_at(curve, counts[i], n).expect("validated curve");
                }
            }
            welford.push(loss);
        }
        welford
    });
    Ok(est)
}

/// Monte Carlo estimate of one component's `ē(q_k)` with its count drawn
/// from `Binomial(N, q_k)`. Backs [`crate::core::expected_component_error`]
/// beyond the exact-summation budget.
pub fn binomial_estimate(
    curve: &LearningCurve,
    q_k: f64,
    budget: u64,
    mc: &McConfig,
) -> Result<McEstimate> {
    mc.validate()?;
    if !(0.0..=1.0).contains(&q_k) {
        return Err(Error::InvalidInput(format!("q_k = {q_k} outside [0, 1]")));
    }
    if matches!(curve, LearningCurve::Transfer { .. }) {
        return Err(Error::UnsupportedCurve {
            kind: "transfer",
            hint: "estimate the reduced power-law part; the transfer term is deterministic",
        });
    }
    eval_curve(curve, 0)?;
    eval_curve(curve, budget)?;
    if q_k <= 0.0 || q_k >= 1.0 {
        let n_k = if q_k <= 0.0 { 0 } else { budget };
        return Ok(McEstimate { estimate: eval_curve(curve, n_k)?, stderr: 0.0 });
    }
    Ok(run_streams(mc, |rng, count| {
        let mut welford = Welford::default();
        let dist = Binomial::new(budget, q_k).expect("valid binomial");
        for _ in 0..count {
            let n_k = dist.sample(rng);
            welford.push(eval_curve(curve, n_k).expect("validated curve"));
        }
        welford
    }))
}

/// Deterministic-approximation error versus its analytic envelope.
#[derive(Debug, Clone, Copy)]
pub struct GapReport {
    /// `|A/((q N)^α + B) - ē(q)|`.
    pub gap: f64,
    /// `320 A/B (Nq)^{-2} + α A (Nq)^{-α-1/4} + α A (Nq)^{-α-1/2}`.
    pub bound: f64,
    /// False when `Nq` is too small for the envelope derivation to apply.
    pub regime_ok: bool,
    /// True when `ē` came from the exact binomial sum rather than sampling.
    pub exact: bool,
}

pub fn approximation_gap(
    curve: &LearningCurve,
    q_k: f64,
    budget: u64,
    mc: &McConfig,
) -> Result<GapReport> {
    let LearningCurve::PowerLaw { a, b, alpha } = curve else {
        return Err(Error::UnsupportedCurve {
            kind: curve.kind(),
            hint: "approximation_gap applies to power-law curves",
        });
    };
    if !(0.0..=1.0).contains(&q_k) {
        return Err(Error::InvalidInput(format!("q_k = {q_k} outside [0, 1]")));
    }
    let mu = budget as f64 * q_k;
    let f_approx = a / (mu.powf(*alpha) + b);
    let (ebar, exact) = if budget <= GAP_EXACT_MAX_N {
        let value = binomial_expectation(budget, q_k, |n| {
            eval_curve(curve, n).expect("power-law curve")
        });
        (value, true)
    } else {
        (binomial_estimate(curve, q_k, budget, mc)?.estimate, false)
    };
    let gap = (f_approx - ebar).abs();
    let bound = if mu > 0.0 {
        320.0 * a / b / (mu * mu)
            + alpha * a * mu.powf(-alpha - 0.25)
            + alpha * a * mu.powf(-alpha - 0.5)
    } else {
        f64::INFINITY
    };
    let regime_ok = mu > 1.0 && mu >= 2.0 * b.max(b.powf(1.0 / alpha));
    Ok(GapReport { gap, bound, regime_ok, exact })
}

/// Skill universe for the composition model: `M` skills whose test frequency
/// decays as `(rank + offset)^{-alpha}`, chains of uniformly drawn length,
/// and a mastery threshold of `T` exposures.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillWorld {
    pub test_freq: SimplexVec,
    pub chain_min: u32,
    pub chain_max: u32,
    pub mastery_threshold: u64,
}

#[derive(Serialize, Deserialize)]
struct WorldDoc {
    #[serde(rename = "M")]
    m: usize,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_offset")]
    offset: f64,
    #[serde(default = "default_chain_min")]
    chain_min: u32,
    #[serde(default = "default_chain_max")]
    chain_max: u32,
    #[serde(default = "default_threshold")]
    mastery_threshold: u64,
    /// Overrides the power-law frequencies when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    test_freq: Option<Vec<f64>>,
}

fn default_alpha() -> f64 {
    1.5
}
fn default_offset() -> f64 {
    50.0
}
fn default_chain_min() -> u32 {
    10
}
fn default_chain_max() -> u32 {
    50
}
fn default_threshold() -> u64 {
    1
}

impl SkillWorld {
    /// Frequencies `p(i) ∝ (i + offset)^{-alpha}` over ranks `i = 1..=m`.
    pub fn power_law(
        m: usize,
        alpha: f64,
        offset: f64,
        chain_min: u32,
        chain_max: u32,
        mastery_threshold: u64,
    ) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidInput("M must be >= 1".into()));
        }
        let weights: Vec<f64> = (1..=m).map(|i| (i as f64 + offset).powf(-alpha)).collect();
        Self::with_freq(SimplexVec::from_weights(weights)?, chain_min, chain_max, mastery_threshold)
    }

    pub fn with_freq(
        test_freq: SimplexVec,
        chain_min: u32,
        chain_max: u32,
        mastery_threshold: u64,
    ) -> Result<Self> {
        if chain_min < 1 || chain_min > chain_max {
            return Err(Error::InvalidInput(format!(
                "chain length range {chain_min}..={chain_max} is empty or starts at 0"
            )));
        }
        if mastery_threshold < 1 {
            return Err(Error::InvalidInput("mastery threshold must be >= 1".into()));
        }
        Ok(Self { test_freq, chain_min, chain_max, mastery_threshold })
    }

    /// Paper-style defaults: `alpha = 1.5`, `offset = 50`, chains of length
    /// 10..=50, one exposure to master a skill.
    pub fn defaults(m: usize) -> Result<Self> {
        Self::power_law(m, default_alpha(), default_offset(), 10, 50, 1)
    }

    pub fn m(&self) -> usize {
        self.test_freq.len()
    }

    pub fn from_json(doc: &str) -> Result<Self> {
        let doc: WorldDoc = serde_json::from_str(doc).map_err(|e| {
            Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        match doc.test_freq {
            Some(freq) => {
                if freq.len() != doc.m {
                    return Err(Error::Config(format!(
                        "test_freq has {} entries but M = {}",
                        freq.len(),
                        doc.m
                    )));
                }
                Self::with_freq(
                    SimplexVec::from_weights(freq)?,
                    doc.chain_min,
                    doc.chain_max,
                    doc.mastery_threshold,
                )
            }
            None => Self::power_law(
                doc.m,
                doc.alpha,
                doc.offset,
                doc.chain_min,
                doc.chain_max,
                doc.mastery_threshold,
            ),
        }
    }
}

/// Convex blend `gamma * a + (1 - gamma) * b`; the Fig.-style uniform/test
/// mix is `blend(0.3, uniform, test_freq)`.
pub fn blend(gamma: f64, a: &SimplexVec, b: &SimplexVec) -> Result<SimplexVec> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidInput(format!("gamma = {gamma} outside [0, 1]")));
    }
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    SimplexVec::from_weights(
        a.iter()
            .zip(b.iter())
            .map(|(&x, &y)| gamma * x + (1.0 - gamma) * y)
            .collect(),
    )
}

/// `(Σ_g freq_g · acc_g)^k`: chain accuracy from per-skill accuracies.
pub fn composition_accuracy_predicted(
    world: &SkillWorld,
    per_skill_acc: &[f64],
    k: u32,
) -> Result<f64> {
    if per_skill_acc.len() != world.m() {
        return Err(Error::DimensionMismatch {
            expected: world.m(),
            got: per_skill_acc.len(),
        });
    }
    for (i, &acc) in per_skill_acc.iter().enumerate() {
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::InvalidInput(format!(
                "accuracy for skill {i} is {acc}, outside [0, 1]"
            )));
        }
    }
    let mean: f64 = world
        .test_freq
        .iter()
        .zip(per_skill_acc)
        .map(|(&f, &a)| f * a)
        .sum();
    Ok(mean.powi(k as i32))
}

/// `P[X < t]` for `X ~ Binomial(trials, p)`, summed in log space.
fn binomial_cdf_below(trials: u64, p: f64, t: u64) -> f64 {
    if t == 0 {
        return 0.0;
    }
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return if trials < t { 1.0 } else { 0.0 };
    }
    let log_q = p.ln();
    let log_1mq = (-p).ln_1p();
    let mut log_pmf = trials as f64 * log_1mq;
    let mut acc = 0.0;
    let last = t.min(trials + 1);
    for j in 0..last {
        acc += log_pmf.exp();
        if j < trials {
            log_pmf += ((trials - j) as f64 / (j + 1) as f64).ln() + log_q - log_1mq;
        }
    }
    acc.min(1.0)
}

/// Frequency-weighted probability that a test-time skill is unmastered after
/// `n` exposures drawn from `train_mix`.
pub fn per_skill_error(world: &SkillWorld, train_mix: &SimplexVec, n: u64) -> Result<f64> {
    if train_mix.len() != world.m() {
        return Err(Error::DimensionMismatch {
            expected: world.m(),
            got: train_mix.len(),
        });
    }
    Ok(world
        .test_freq
        .iter()
        .zip(train_mix.iter())
        .map(|(&f, &q)| f * binomial_cdf_below(n, q, world.mastery_threshold))
        .sum())
}

/// Semi-analytic chain accuracy: per-skill mastery treated as independent
/// (exact binomial tails per skill), averaged exactly over the chain-length
/// distribution.
pub fn predicted_accuracy(world: &SkillWorld, train_mix: &SimplexVec, n: u64) -> Result<f64> {
    let success = 1.0 - per_skill_error(world, train_mix, n)?;
    let count = (world.chain_max - world.chain_min + 1) as f64;
    Ok((world.chain_min..=world.chain_max)
        .map(|k| success.powi(k as i32))
        .sum::<f64>()
        / count)
}

/// Same but at one fixed chain length (the paper evaluates at k in
/// {10, 30, 50}; training-time chains stay uniform).
pub fn predicted_accuracy_at_k(
    world: &SkillWorld,
    train_mix: &SimplexVec,
    n: u64,
    k: u32,
) -> Result<f64> {
    let success = 1.0 - per_skill_error(world, train_mix, n)?;
    Ok(success.powi(k as i32))
}

#[derive(Debug, Clone, Copy)]
pub struct CompositionOutcome {
    pub mc_accuracy: f64,
    pub mc_stderr: f64,
    pub predicted_accuracy: f64,
}

/// Full experiment: every Monte Carlo replica draws a fresh training
/// multinomial (so the coupling between skills through the fixed budget is
/// kept exactly), then one test chain; the semi-analytic prediction treats
/// skills as independent, and the two are reported side by side.
pub fn run_composition_experiment(
    world: &SkillWorld,
    train_mix: &SimplexVec,
    n: u64,
    mc: &McConfig,
) -> Result<CompositionOutcome> {
    mc.validate()?;
    let predicted = predicted_accuracy(world, train_mix, n)?;
    let m = world.m();
    let mut cumulative = Vec::with_capacity(m);
    let mut acc = 0.0;
    for &f in world.test_freq.iter() {
        acc += f;
        cumulative.push(acc);
    }
    let est = run_streams(mc, |rng, count| {
        let mut welford = Welford::default();
        let mut exposures = vec![0u64; m];
        for _ in 0..count {
            sample_multinomial(rng, train_mix.as_slice(), n, &mut exposures);
            let chain_len = rng.random_range(world.chain_min..=world.chain_max);
            let mut solved = true;
            for _ in 0..chain_len {
                let u: f64 = rng.random();
                let skill = cumulative.partition_point(|&c| c < u).min(m - 1);
                if exposures[skill] < world.mastery_threshold {
                    solved = false;
                    break;
                }
            }
            welford.push(if solved { 1.0 } else { 0.0 });
        }
        welford
    });
    Ok(CompositionOutcome {
        mc_accuracy: est.estimate,
        mc_stderr: est.stderr,
        predicted_accuracy: predicted,
    })
}
