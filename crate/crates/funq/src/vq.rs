//! Trained vector quantizers for the standard normal on R^d.
//!
//! No closed-form optimal codebooks exist for d ≥ 2, so block quantizers
//! are trained: k-means++ seeding, a streamed mini-batch Lloyd phase over
//! fresh Gaussian draws, a short full-batch refinement, and an independent
//! evaluation sample that yields the distortion estimate with a standard
//! error. Any stationary codebook gives a valid upper bound on the optimal
//! block distortion, which is how downstream consumers treat these
//! estimates.

use crate::error::{Error, Result};
use crate::special::{normal_quantile, KahanSum};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Default number of training draws consumed by the mini-batch phase.
pub const DEFAULT_TRAIN_SAMPLES: u64 = 1 << 20;
/// Draws used for the final distortion estimate.
pub const EVAL_SAMPLES: u64 = 1_000_000;
/// Independently seeded restarts; the best codebook is kept.
pub const RESTARTS: u64 = 8;
/// Largest trainable codebook size.
pub const MAX_VQ_LEVELS: u64 = 4096;

const BATCH: u64 = 1024;
const SEED_POOL_MIN: u64 = 4096;
const SEED_POOL_MAX: u64 = 65536;
const VALIDATE_SAMPLES: u64 = 1 << 17;
const POLISH_SAMPLES: u64 = 1 << 19;
const POLISH_PASSES: usize = 8;
const DEAD_WINDOW: u64 = 64;
const STREAM_VALIDATE: u64 = 1 << 32;
const STREAM_POLISH: u64 = (1 << 32) + 1;
const STREAM_EVAL_BASE: u64 = 1 << 33;
const EVAL_BLOCK: u64 = 65536;

/// A Monte Carlo point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateCI {
    pub value: f64,
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

/// A trained codebook for N(0, I_d) with k levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorQuantizer {
    pub dim: u32,
    pub levels: u64,
    /// Row-major k×d codepoint matrix.
    pub codepoints: Vec<f64>,
    pub distortion_estimate: EstimateCI,
    pub training_seed: u64,
    /// Dead-center reseeds that occurred during training.
    pub reseeds: u32,
}

/// One row of the C(d) upper-envelope table.
#[derive(Debug, Clone, Copy)]
pub struct CdRow {
    pub k: u64,
    /// k^{2/d} times the estimated k-level distortion.
    pub value: f64,
    pub stderr: f64,
    pub running_sup: f64,
}

pub(crate) fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) * 2f64.powi(-53);
    normal_quantile(u)
}

fn fill_gaussian(rng: &mut ChaCha12Rng, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = standard_normal(rng);
    }
}

fn draw_block(seed: u64, stream: u64, count: usize, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut out = vec![0.0; count * dim];
    fill_gaussian(&mut rng, &mut out);
    out
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

pub(crate) fn nearest(point: &[f64], codebook: &[f64], dim: usize) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in codebook.chunks_exact(dim).enumerate() {
        let d = dist2(point, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

fn kmeans_pp_seed(rng: &mut ChaCha12Rng, k: usize, dim: usize) -> Vec<f64> {
    let pool_n = (32 * k as u64).clamp(SEED_POOL_MIN, SEED_POOL_MAX) as usize;
    let mut pool = vec![0.0; pool_n * dim];
    fill_gaussian(rng, &mut pool);
    let mut centers = Vec::with_capacity(k * dim);
    let first = (rng.next_u64() % pool_n as u64) as usize;
    centers.extend_from_slice(&pool[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = pool
        .chunks_exact(dim)
        .map(|p| dist2(p, &centers[..dim]))
        .collect();
    while centers.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let mut target = ((rng.next_u64() >> 11) as f64 + 0.5) * 2f64.powi(-53) * total;
        let mut chosen = pool_n - 1;
        for (i, &w) in d2.iter().enumerate() {
            target -= w;
            if target <= 0.0 {
                chosen = i;
                break;
            }
        }
        let start = centers.len();
        centers.extend_from_slice(&pool[chosen * dim..(chosen + 1) * dim]);
        let new_center = &centers[start..start + dim];
        for (i, p) in pool.chunks_exact(dim).enumerate() {
            let d = dist2(p, new_center);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centers
}

struct TrainedRestart {
    codebook: Vec<f64>,
    validation: f64,
    reseeds: u32,
}

fn run_restart(dim: usize, k: usize, samples: u64, seed: u64, restart: u64) -> TrainedRestart {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(restart);
    let mut centers = kmeans_pp_seed(&mut rng, k, dim);
    let mut counts = vec![1.0f64; k];
    let mut last_hit = vec![0u64; k];
    let mut reseeds = 0u32;
    let batches = samples.div_ceil(BATCH).max(1);
    let mut batch_buf = vec![0.0; BATCH as usize * dim];
    let mut assign = vec![0usize; BATCH as usize];
    for b in 1..=batches {
        fill_gaussian(&mut rng, &mut batch_buf);
        for (i, p) in batch_buf.chunks_exact(dim).enumerate() {
            let (c, _) = nearest(p, &centers, dim);
            assign[i] = c;
            last_hit[c] = b;
        }
        for (i, p) in batch_buf.chunks_exact(dim).enumerate() {
            let c = assign[i];
            counts[c] += 1.0;
            let rate = 1.0 / counts[c];
            let center = &mut centers[c * dim..(c + 1) * dim];
            for (cc, &x) in center.iter_mut().zip(p) {
                *cc += rate * (x - *cc);
            }
        }
        for c in 0..k {
            if b - last_hit[c] > DEAD_WINDOW {
                let center = centers[c * dim..(c + 1) * dim].to_vec();
                let far = batch_buf
                    .chunks_exact(dim)
                    .map(|p| dist2(p, &center))
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                centers[c * dim..(c + 1) * dim]
                    .copy_from_slice(&batch_buf[far * dim..(far + 1) * dim]);
                counts[c] = 1.0;
                last_hit[c] = b;
                reseeds += 1;
            }
        }
    }
    let validation = {
        let buf = draw_block(seed, STREAM_VALIDATE, VALIDATE_SAMPLES as usize, dim);
        let mut acc = KahanSum::new();
        for p in buf.chunks_exact(dim) {
            acc.add(nearest(p, &centers, dim).1);
        }
        acc.value() / VALIDATE_SAMPLES as f64
    };
    TrainedRestart {
        codebook: centers,
        validation,
        reseeds,
    }
}

fn polish(codebook: &mut [f64], dim: usize, seed: u64) {
    let k = codebook.len() / dim;
    let buf = draw_block(seed, STREAM_POLISH, POLISH_SAMPLES as usize, dim);
    for _ in 0..POLISH_PASSES {
        let chunk = 8192 * dim;
        let partials: Vec<(Vec<f64>, Vec<f64>)> = buf
            .par_chunks(chunk)
            .map(|block| {
                let mut sums = vec![0.0; k * dim];
                let mut counts = vec![0.0; k];
                for p in block.chunks_exact(dim) {
                    let (c, _) = nearest(p, codebook, dim);
                    counts[c] += 1.0;
                    for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(p) {
                        *s += x;
                    }
                }
                (sums, counts)
            })
            .collect();
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0.0; k];
        for (ps, pc) in &partials {
            for (s, &x) in sums.iter_mut().zip(ps) {
                *s += x;
            }
            for (c, &x) in counts.iter_mut().zip(pc) {
                *c += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0.0 {
                for (dst, &s) in codebook[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(&sums[c * dim..(c + 1) * dim])
                {
                    *dst = s / counts[c];
                }
            }
        }
    }
}

fn evaluate(codebook: &[f64], dim: usize, seed: u64) -> EstimateCI {
    let blocks = EVAL_SAMPLES.div_ceil(EVAL_BLOCK);
    let partials: Vec<(f64, f64, u64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let count = EVAL_BLOCK.min(EVAL_SAMPLES - b * EVAL_BLOCK) as usize;
            let buf = draw_block(seed, STREAM_EVAL_BASE + b, count, dim);
            let mut acc = KahanSum::new();
            let mut acc2 = KahanSum::new();
            for p in buf.chunks_exact(dim) {
                let d = nearest(p, codebook, dim).1;
                acc.add(d);
                acc2.add(d * d);
            }
            (acc.value(), acc2.value(), count as u64)
        })
        .collect();
    let mut sum = KahanSum::new();
    let mut sum2 = KahanSum::new();
    let mut n = 0u64;
    for (s, s2, c) in partials {
        sum.add(s);
        sum2.add(s2);
        n += c;
    }
    let mean = sum.value() / n as f64;
    let var = (sum2.value() / n as f64 - mean * mean).max(0.0);
    EstimateCI {
        value: mean,
        stderr: (var / n as f64).sqrt(),
        samples: n,
        seed,
    }
}

fn check_args(dim: u32, levels: u64) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidParameter {
            name: "dim",
            value: 0.0,
            reason: "block dimension must be at least 1",
        });
    }
    if levels == 0 {
        return Err(Error::InvalidLevels);
    }
    if levels > MAX_VQ_LEVELS {
        return Err(Error::LevelTooLarge(levels));
    }
    Ok(())
}

/// Train a k-level codebook for N(0, I_d) and estimate its distortion.
///
/// `samples` is the mini-batch training budget; restarts run in parallel
/// and the merge is deterministic, so identical arguments reproduce the
/// result bit for bit.
pub fn train_vq(dim: u32, levels: u64, samples: u64, seed: u64) -> Result<VectorQuantizer> {
    check_args(dim, levels)?;
    let d = dim as usize;
    let k = levels as usize;
    let restarts: Vec<TrainedRestart> = (0..RESTARTS)
        .into_par_iter()
        .map(|r| run_restart(d, k, samples, seed, r))
        .collect();
    let best_idx = (0..restarts.len())
        .min_by(|&i, &j| {
            restarts[i]
                .validation
                .partial_cmp(&restarts[j].validation)
                .unwrap()
        })
        .unwrap();
    let reseeds = restarts[best_idx].reseeds;
    let mut codebook = restarts.into_iter().nth(best_idx).unwrap().codebook;
    polish(&mut codebook, d, seed);
    let distortion_estimate = evaluate(&codebook, d, seed);
    Ok(VectorQuantizer {
        dim,
        levels,
        codepoints: codebook,
        distortion_estimate,
        training_seed: seed,
        reseeds,
    })
}

type BlockCache = Mutex<HashMap<(u32, u64, u64), Arc<VectorQuantizer>>>;

fn block_cache() -> &'static BlockCache {
    static CACHE: OnceLock<BlockCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Insert an already trained quantizer into the in-process cache, so
/// later [`block_distortion`] calls with the same key reuse it instead of
/// retraining. Intended for persisted codebooks loaded from disk.
pub fn preload_block(quantizer: Arc<VectorQuantizer>) {
    let key = (quantizer.dim, quantizer.levels, quantizer.training_seed);
    block_cache()
        .lock()
        .unwrap()
        .entry(key)
        .or_insert(quantizer);
}

/// Cached distortion estimate for a k-level block codebook on N(0, I_d).
pub fn block_distortion(dim: u32, levels: u64, seed: u64) -> Result<Arc<VectorQuantizer>> {
    check_args(dim, levels)?;
    if let Some(hit) = block_cache().lock().unwrap().get(&(dim, levels, seed)) {
        return Ok(hit.clone());
    }
    let trained = Arc::new(train_vq(dim, levels, DEFAULT_TRAIN_SAMPLES, seed)?);
    block_cache()
        .lock()
        .unwrap()
        .insert((dim, levels, seed), trained.clone());
    Ok(trained)
}

/// Empirical upper-envelope table for the constant C(d) = sup_k k^{2/d}
/// e_k(N(0,I_d))²: one row per level count with the running supremum.
pub fn estimate_cd(dim: u32, k_max: u64, samples: u64, seed: u64) -> Result<Vec<CdRow>> {
    check_args(dim, k_max)?;
    let mut rows = Vec::with_capacity(k_max as usize);
    let mut sup = f64::NEG_INFINITY;
    for k in 1..=k_max {
        let q = train_vq(dim, k, samples, seed.wrapping_add(k))?;
        let scale = (k as f64).powf(2.0 / dim as f64);
        let value = scale * q.distortion_estimate.value;
        let stderr = scale * q.distortion_estimate.stderr;
        sup = sup.max(value);
        rows.push(CdRow {
            k,
            value,
            stderr,
            running_sup: sup,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar;

    #[test]
    fn one_level_recovers_the_mean() {
        let q = train_vq(3, 1, 1 << 16, 11).unwrap();
        assert_eq!(q.codepoints.len(), 3);
        for &c in &q.codepoints {
            assert!(c.abs() < 0.02, "center {c}");
        }
        let est = q.distortion_estimate;
        assert!((est.value - 3.0).abs() < 3.0 * est.stderr + 1e-3);
        assert_eq!(est.samples, EVAL_SAMPLES);
    }

    #[test]
    fn scalar_pair_matches_the_exact_value() {
        let q = train_vq(1, 2, 1 << 18, 5).unwrap();
        let want = 1.0 - 2.0 / std::f64::consts::PI;
        let est = q.distortion_estimate;
        assert!(
            (est.value - want).abs() < 3.0 * est.stderr,
            "value {} stderr {}",
            est.value,
            est.stderr
        );
        let mut points = q.codepoints.clone();
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let root = (2.0 / std::f64::consts::PI).sqrt();
        assert!((points[0] + root).abs() < 5e-3);
        assert!((points[1] - root).abs() < 5e-3);
    }

    #[test]
    fn plane_four_levels_matches_the_refined_oracle() {
        let q = train_vq(2, 4, 1 << 19, 3).unwrap();
        let want = 2.0 * (1.0 - 2.0 / std::f64::consts::PI);
        let est = q.distortion_estimate;
        assert!(
            (est.value - want).abs() < 3.0 * est.stderr + 1e-3,
            "value {} stderr {}",
            est.value,
            est.stderr
        );
    }

    #[test]
    fn training_is_deterministic() {
        let a = train_vq(2, 5, 1 << 15, 42).unwrap();
        let b = train_vq(2, 5, 1 << 15, 42).unwrap();
        assert_eq!(a.codepoints.len(), b.codepoints.len());
        for (x, y) in a.codepoints.iter().zip(&b.codepoints) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(
            a.distortion_estimate.value.to_bits(),
            b.distortion_estimate.value.to_bits()
        );
        let c = train_vq(2, 5, 1 << 15, 43).unwrap();
        assert_ne!(
            a.distortion_estimate.value.to_bits(),
            c.distortion_estimate.value.to_bits()
        );
    }

    #[test]
    fn distortion_decreases_with_levels() {
        let q4 = train_vq(2, 4, 1 << 17, 9).unwrap();
        let q8 = train_vq(2, 8, 1 << 17, 9).unwrap();
        let slack = 3.0 * (q4.distortion_estimate.stderr + q8.distortion_estimate.stderr);
        assert!(q8.distortion_estimate.value < q4.distortion_estimate.value + slack);
        assert!(q4.distortion_estimate.value <= 2.0 + 3.0 * q4.distortion_estimate.stderr);
    }

    #[test]
    fn codepoints_are_pairwise_distinct() {
        let q = train_vq(2, 16, 1 << 16, 1).unwrap();
        let d = q.dim as usize;
        let points: Vec<&[f64]> = q.codepoints.chunks_exact(d).collect();
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let gap: f64 = points[i]
                    .iter()
                    .zip(points[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                assert!(gap > 1e-6, "centers {i} and {j} collide");
            }
        }
    }

    #[test]
    fn cd_table_matches_the_scalar_oracle() {
        let rows = estimate_cd(1, 6, 1 << 17, 17).unwrap();
        assert_eq!(rows.len(), 6);
        assert!((rows[0].value - 1.0).abs() < 3.0 * rows[0].stderr + 1e-3);
        for row in &rows {
            let exact = (row.k * row.k) as f64 * scalar::distortion(row.k).unwrap();
            assert!(
                (row.value - exact).abs() < 3.0 * row.stderr + 2e-3,
                "k {} value {} exact {}",
                row.k,
                row.value,
                exact
            );
        }
        for pair in rows.windows(2) {
            assert!(pair[1].running_sup >= pair[0].running_sup);
        }
    }

    #[test]
    fn block_distortion_is_cached() {
        let a = block_distortion(2, 3, 21).unwrap();
        let b = block_distortion(2, 3, 21).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert!(matches!(
            train_vq(0, 2, 100, 0),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(train_vq(1, 0, 100, 0), Err(Error::InvalidLevels)));
        assert!(matches!(
            train_vq(1, MAX_VQ_LEVELS + 1, 100, 0),
            Err(Error::LevelTooLarge(_))
        ));
    }
}
