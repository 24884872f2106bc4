//! Monte Carlo oracles: path sampling through the truncated expansion,
//! empirical distortion of product plans, and small-ball estimation.
//!
//! Paths are represented by their first J expansion coefficients
//! λ_j^{1/2}·Z_j; everything omitted past J is controlled analytically by
//! the exact tail sum, never by extra sampling. All samplers draw
//! inverse-CDF normals from counter-mode generators with one stream per
//! 65536-row block, and every reduction runs in a fixed order, so results
//! are bit-stable across thread counts and reproducible from the seed.

use crate::allocation::ProductPlan;
use crate::error::{Error, Result};
use crate::scalar::{self, ScalarQuantizer};
use crate::special::KahanSum;
use crate::spectra::{tail_sum, Decay, SpectrumModel};
use crate::vq::{self, nearest, standard_normal, EstimateCI};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

/// Hard cap on the number of sampled coordinates per path.
pub const MAX_TRUNCATION: u64 = 1 << 20;
/// Hard cap on count × truncation for an in-memory batch.
pub const MAX_BATCH_ELEMENTS: u64 = 1 << 27;
/// Default omitted-tail budget, as a fraction of the trace.
pub const DEFAULT_BIAS_FRACTION: f64 = 1e-6;
/// Smallest hit count the small-ball estimator accepts.
pub const MIN_HITS: u64 = 50;

const ROW_BLOCK: u64 = 65536;
const STREAM_PATHS: u64 = 1 << 34;
const STREAM_BALL: u64 = 1 << 35;
/// Fraction of ε² the omitted tail may occupy in a ball estimate.
const BALL_TAIL_FRACTION: f64 = 1e-3;

/// A batch of sampled paths in coefficient form.
#[derive(Debug, Clone)]
pub struct PathSampleBatch {
    pub model: SpectrumModel,
    /// Number of leading coordinates sampled per path.
    pub truncation: u64,
    pub count: u64,
    /// Row-major count × truncation matrix of λ_j^{1/2}·Z_j values.
    pub coefficients: Vec<f64>,
    pub seed: u64,
    /// Upper bound on the mean squared energy omitted per path.
    pub truncation_bias: f64,
}

impl PathSampleBatch {
    /// The coefficients of one path.
    pub fn row(&self, i: u64) -> &[f64] {
        let j = self.truncation as usize;
        let start = i as usize * j;
        &self.coefficients[start..start + j]
    }

    /// Σ_{j ≤ J} λ_j: the expected squared norm of a sampled row.
    pub fn partial_trace(&self) -> Result<f64> {
        Ok(self.model.trace()? - tail_sum(&self.model, self.truncation)?.value)
    }
}

/// Smallest truncation whose omitted tail is within the bias budget.
/// When no truncation up to the cap suffices, the error reports how many
/// coordinates would be needed.
pub fn required_truncation(model: &SpectrumModel, bias_budget: f64) -> Result<u64> {
    if !(bias_budget > 0.0) || !bias_budget.is_finite() {
        return Err(Error::InvalidParameter {
            name: "bias_budget",
            value: bias_budget,
            reason: "must be positive and finite",
        });
    }
    let tail = |j: u64| -> Result<f64> { Ok(tail_sum(model, j)?.value) };
    if tail(1)? <= bias_budget {
        return Ok(1);
    }
    if tail(MAX_TRUNCATION)? > bias_budget {
        return Err(Error::BiasBudget {
            budget: bias_budget,
            j_max: MAX_TRUNCATION as usize,
            required_j: extrapolate_truncation(model, bias_budget)?,
        });
    }
    let mut lo = 1u64;
    let mut hi = MAX_TRUNCATION;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if tail(mid)? > bias_budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Rough solve of tail(t) = budget from the decay asymptotics, for the
/// error report when the budget is unattainable.
fn extrapolate_truncation(model: &SpectrumModel, budget: f64) -> Result<usize> {
    let estimate = match model.decay()? {
        Decay::ExactBm => 1.0 / (PI * PI * budget),
        Decay::Power { c, b, a, .. } => {
            if b > 1.0 {
                let mut t = (c / ((b - 1.0) * budget)).powf(1.0 / (b - 1.0));
                if a != 0.0 {
                    for _ in 0..2 {
                        let lt = t.max(2.0).ln();
                        t = (c * lt.powf(-a) / ((b - 1.0) * budget)).powf(1.0 / (b - 1.0));
                    }
                }
                t
            } else {
                (c / ((a - 1.0) * budget)).powf(1.0 / (a - 1.0)).exp()
            }
        }
        Decay::Finite(values) => {
            let mut acc = 0.0;
            let mut needed = values.len();
            for (i, v) in values.iter().enumerate().rev() {
                acc += v;
                if acc > budget {
                    needed = i + 1;
                    break;
                }
            }
            needed as f64
        }
    };
    Ok(estimate.min(usize::MAX as f64).ceil() as usize)
}

/// Sample `count` independent paths as their first `truncation` expansion
/// coefficients. Deterministic given the seed, independent of thread count.
pub fn sample_paths(
    model: &SpectrumModel,
    truncation: u64,
    count: u64,
    seed: u64,
) -> Result<PathSampleBatch> {
    if truncation == 0 || truncation > MAX_TRUNCATION {
        return Err(Error::InvalidParameter {
            name: "truncation",
            value: truncation as f64,
            reason: "must be between 1 and the truncation cap",
        });
    }
    if count == 0 {
        return Err(Error::InvalidParameter {
            name: "count",
            value: 0.0,
            reason: "at least one path must be sampled",
        });
    }
    if count
        .checked_mul(truncation)
        .is_none_or(|n| n > MAX_BATCH_ELEMENTS)
    {
        return Err(Error::InvalidParameter {
            name: "count",
            value: count as f64,
            reason: "count × truncation exceeds the in-memory batch cap",
        });
    }
    let decay = model.decay()?;
    let scale: Vec<f64> = (1..=truncation)
        .map(|j| decay.eigenvalue(j).unwrap_or(0.0).sqrt())
        .collect();
    let width = truncation as usize;
    let mut coefficients = vec![0.0; (count * truncation) as usize];
    coefficients
        .par_chunks_mut(ROW_BLOCK as usize * width)
        .enumerate()
        .for_each(|(block, chunk)| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(STREAM_PATHS + block as u64);
            for row in chunk.chunks_exact_mut(width) {
                for (x, s) in row.iter_mut().zip(&scale) {
                    *x = s * standard_normal(&mut rng);
                }
            }
        });
    let tail = tail_sum(model, truncation)?;
    Ok(PathSampleBatch {
        model: model.clone(),
        truncation,
        count,
        coefficients,
        seed,
        truncation_bias: tail.value + tail.remainder_bound,
    })
}

enum BlockCodebook {
    /// A single level: every point maps to the block mean.
    Origin,
    /// d = 1: the optimal scalar codebook, in N(0,1) coordinates.
    Scalar(Arc<ScalarQuantizer>),
    /// d ≥ 2: trained codepoints, already scaled to the block's variance.
    Trained(Vec<f64>),
}

/// Empirical E‖X − f(X)‖² of a plan over a sampled batch. The energy past
/// the batch truncation is added analytically. For block dimension ≥ 2 the
/// same training seed as the analytic evaluation must be supplied for the
/// two routes to share codebooks; d = 1 ignores it.
pub fn empirical_distortion(
    plan: &ProductPlan,
    batch: &PathSampleBatch,
    train_seed: u64,
) -> Result<EstimateCI> {
    let d = plan.block_dim as usize;
    let quantized = plan.m * plan.block_dim as u64;
    if batch.truncation < quantized {
        return Err(Error::TruncationTooShort {
            needed: quantized as usize,
            got: batch.truncation as usize,
        });
    }
    let mut books = Vec::with_capacity(plan.levels.len());
    for (w, &level) in plan.levels.iter().enumerate() {
        if level == 1 {
            books.push(BlockCodebook::Origin);
        } else if d == 1 {
            if level > scalar::MAX_LEVELS {
                return Err(Error::LevelTooLarge(level));
            }
            books.push(BlockCodebook::Scalar(scalar::lloyd_1d(
                level as u32,
                scalar::DEFAULT_TOL,
                scalar::DEFAULT_MAX_ITER,
            )?));
        } else {
            let trained = vq::block_distortion(plan.block_dim, level, train_seed)?;
            let root = plan.block_eigs[w].sqrt();
            let points = trained.codepoints.iter().map(|&p| root * p).collect();
            books.push(BlockCodebook::Trained(points));
        }
    }
    let width = batch.truncation as usize;
    let moments: Vec<(KahanSum, KahanSum)> = batch
        .coefficients
        .par_chunks(ROW_BLOCK as usize * width)
        .map(|chunk| {
            let mut sum = KahanSum::new();
            let mut sumsq = KahanSum::new();
            for row in chunk.chunks_exact(width) {
                let mut err = 0.0;
                for (w, book) in books.iter().enumerate() {
                    let block = &row[w * d..(w + 1) * d];
                    err += match book {
                        BlockCodebook::Origin => block.iter().map(|x| x * x).sum::<f64>(),
                        BlockCodebook::Scalar(q) => {
                            let root = plan.block_eigs[w].sqrt();
                            let u = block[0] / root;
                            let k = q.levels as usize;
                            let cell = q.thresholds[1..k].partition_point(|&t| t < u);
                            let gap = block[0] - root * q.codepoints[cell];
                            gap * gap
                        }
                        BlockCodebook::Trained(points) => nearest(block, points, d).1,
                    };
                }
                for x in &row[quantized as usize..] {
                    err += x * x;
                }
                sum.add(err);
                sumsq.add(err * err);
            }
            (sum, sumsq)
        })
        .collect();
    let mut sum = KahanSum::new();
    let mut sumsq = KahanSum::new();
    for (s, s2) in moments {
        sum.add(s.value());
        sumsq.add(s2.value());
    }
    let n = batch.count as f64;
    let mean = sum.value() / n;
    let var = ((sumsq.value() - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
    let tail_beyond = tail_sum(&batch.model, batch.truncation)?.value;
    Ok(EstimateCI {
        value: mean + tail_beyond,
        stderr: (var / n).sqrt(),
        samples: batch.count,
        seed: batch.seed,
    })
}

/// A plug-in estimate of the small-ball function F(ε) = −log P(‖X‖ ≤ ε).
#[derive(Debug, Clone, Copy)]
pub struct SmallBallEstimate {
    pub eps: f64,
    /// −log P̂. Truncation biases this downward: the truncated norm is
    /// never larger than the full one, so the ball probability is
    /// overestimated.
    pub f_hat: f64,
    /// Delta-method standard error of f_hat.
    pub stderr: f64,
    pub p_hat: f64,
    pub hits: u64,
    pub samples: u64,
    pub truncation: u64,
    /// Upper bound on the mean squared energy the truncation omits.
    pub truncation_bias: f64,
    pub seed: u64,
}

/// Estimate F(ε) by counting sampled paths inside the ball. The truncation
/// must leave at most ε²/1000 of omitted energy, and at least [`MIN_HITS`]
/// paths must land inside the ball; rare-event regimes are rejected rather
/// than extrapolated.
pub fn small_ball(
    model: &SpectrumModel,
    eps: f64,
    truncation: u64,
    count: u64,
    seed: u64,
) -> Result<SmallBallEstimate> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::NonPositiveEps(eps));
    }
    if truncation == 0 || truncation > MAX_TRUNCATION {
        return Err(Error::InvalidParameter {
            name: "truncation",
            value: truncation as f64,
            reason: "must be between 1 and the truncation cap",
        });
    }
    if count < MIN_HITS {
        return Err(Error::InvalidParameter {
            name: "count",
            value: count as f64,
            reason: "need at least as many samples as required hits",
        });
    }
    let tail = tail_sum(model, truncation)?;
    let budget = eps * eps * BALL_TAIL_FRACTION;
    if tail.value > budget {
        let required_j = match required_truncation(model, budget) {
            Ok(j) => j as usize,
            Err(Error::BiasBudget { required_j, .. }) => required_j,
            Err(e) => return Err(e),
        };
        return Err(Error::BiasBudget {
            budget,
            j_max: truncation as usize,
            required_j,
        });
    }
    let decay = model.decay()?;
    let lam: Vec<f64> = (1..=truncation)
        .map(|j| decay.eigenvalue(j).unwrap_or(0.0))
        .collect();
    let eps2 = eps * eps;
    let blocks = count.div_ceil(ROW_BLOCK);
    let counts: Vec<(u64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let rows = ROW_BLOCK.min(count - block * ROW_BLOCK);
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(STREAM_BALL + block);
            let mut hits = 0u64;
            let mut min2 = f64::INFINITY;
            for _ in 0..rows {
                let mut sq = 0.0;
                for &l in &lam {
                    let z = standard_normal(&mut rng);
                    sq += l * z * z;
                }
                if sq <= eps2 {
                    hits += 1;
                }
                if sq < min2 {
                    min2 = sq;
                }
            }
            (hits, min2)
        })
        .collect();
    let mut hits = 0u64;
    let mut min2 = f64::INFINITY;
    for (h, m2) in counts {
        hits += h;
        min2 = min2.min(m2);
    }
    if hits < MIN_HITS {
        return Err(Error::RareEvent {
            hits,
            samples: count,
            min_norm: min2.sqrt(),
        });
    }
    let p_hat = hits as f64 / count as f64;
    Ok(SmallBallEstimate {
        eps,
        f_hat: -p_hat.ln(),
        stderr: ((1.0 - p_hat) / (count as f64 * p_hat)).sqrt(),
        p_hat,
        hits,
        samples: count,
        truncation,
        truncation_bias: tail.value + tail.remainder_bound,
        seed,
    })
}
