//! Level allocation for product quantizers.
//!
//! A product quantizer spends a codebook budget n across the leading
//! coordinates of the Karhunen–Loève expansion. The budget enters only
//! through log n, so arbitrarily large budgets are representable. The
//! critical dimension m is the largest truncation for which the
//! continuous optimizer assigns every coordinate at least one level; the
//! integer levels are the floors of that optimizer. For block dimension
//! d ≥ 2 the coordinates are grouped d at a time and each block is
//! quantized with a trained codebook, which upgrades the exact d = 1
//! evaluation to a statistical upper bound.

use crate::error::{Error, Result};
use crate::scalar;
use crate::special::KahanSum;
use crate::spectra::{tail_sum, Decay, SpectrumModel};
use crate::vq;
use rayon::prelude::*;

/// Whether a plan's distortion is exact or a statistical upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exactness {
    /// d = 1: per-coordinate scalar quantizers with exact distortion.
    Exact,
    /// d ≥ 2: trained block codebooks; distortion is an upper bound.
    ApproximateUpper,
}

/// A level allocation for the product quantizer of a given model.
#[derive(Debug, Clone)]
pub struct ProductPlan {
    pub log_n: f64,
    pub block_dim: u32,
    /// Number of quantized blocks (the critical dimension).
    pub m: u64,
    /// Levels n_1 ≥ … ≥ n_m ≥ 1 with Σ log n_j ≤ log n.
    pub levels: Vec<u64>,
    /// Leading eigenvalue of each block: ν_j = λ_{(j−1)d+1}.
    pub block_eigs: Vec<f64>,
    pub exactness: Exactness,
}

/// Distortion of a plan, split into truncation and quantization parts.
#[derive(Debug, Clone, Copy)]
pub struct PlanDistortion {
    /// Σ_{j > md} λ_j: the part lost to truncation.
    pub tail: f64,
    /// The λ-weighted quantizer error over the kept blocks.
    pub quant: f64,
    pub total: f64,
    /// Standard error of `quant` when block estimates are statistical.
    pub stderr: Option<f64>,
}

const TIE_TOL: f64 = 1e-12;
const MAX_CRITICAL_DIM: u64 = 100_000_000;

fn check_block_dim(d: u32) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidParameter {
            name: "block_dim",
            value: 0.0,
            reason: "block dimension must be at least 1",
        });
    }
    Ok(())
}

fn check_log_n(log_n: f64) -> Result<()> {
    if !(log_n >= 0.0) || !log_n.is_finite() {
        return Err(Error::InvalidParameter {
            name: "log_n",
            value: log_n,
            reason: "the log-budget must be finite and nonnegative",
        });
    }
    Ok(())
}

fn block_eig(decay: &Decay, j: u64, d: u32) -> Option<f64> {
    decay.eigenvalue((j - 1) * d as u64 + 1)
}

/// The cumulative log eigenvalue ratio a_k = (d/2)·Σ_{j≤k} log(ν_j/ν_k):
/// the log budget at which the k-th block is first worth a level.
pub fn a_k(model: &SpectrumModel, k: u64, d: u32) -> Result<f64> {
    check_block_dim(d)?;
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            value: 0.0,
            reason: "block indices start at 1",
        });
    }
    let decay = model.decay()?;
    let mut logs = KahanSum::new();
    let mut last = 0.0;
    for j in 1..=k {
        let nu = block_eig(&decay, j, d).ok_or(Error::TruncationTooShort {
            needed: ((k - 1) * d as u64 + 1) as usize,
            got: decay.rank().unwrap_or(0) as usize,
        })?;
        last = nu.ln();
        logs.add(last);
    }
    Ok((d as f64 / 2.0) * (logs.value() - k as f64 * last).max(0.0))
}

/// Largest k with a_k ≤ log n (the number of blocks that receive levels).
pub fn critical_dim(model: &SpectrumModel, log_n: f64, d: u32) -> Result<u64> {
    check_block_dim(d)?;
    check_log_n(log_n)?;
    let decay = model.decay()?;
    let tol = TIE_TOL * log_n.max(1.0);
    let mut logs = KahanSum::new();
    logs.add(block_eig(&decay, 1, d).unwrap().ln());
    let mut m = 1;
    loop {
        let k = m + 1;
        let nu = match block_eig(&decay, k, d) {
            Some(v) => v,
            None => return Ok(m),
        };
        let lnu = nu.ln();
        let a = (d as f64 / 2.0) * ((logs.value() + lnu) - k as f64 * lnu).max(0.0);
        if a > log_n + tol {
            return Ok(m);
        }
        logs.add(lnu);
        m = k;
        if m >= MAX_CRITICAL_DIM {
            return Err(Error::InvalidParameter {
                name: "log_n",
                value: log_n,
                reason: "budget implies an impractically large critical dimension",
            });
        }
    }
}

fn snap_floor(lz: f64) -> Result<u64> {
    if lz > 43.6 {
        return Err(Error::LevelOverflow(lz));
    }
    let tol = TIE_TOL * (1.0 + lz.abs());
    let y = lz.exp();
    let mut q = y.floor().max(0.0) as u64;
    if ((q + 1) as f64).ln() <= lz + tol {
        q += 1;
    }
    Ok(q.max(1))
}

/// Compute the critical dimension and the per-block levels for a budget.
pub fn allocate(model: &SpectrumModel, log_n: f64, d: u32) -> Result<ProductPlan> {
    let m = critical_dim(model, log_n, d)?;
    let decay = model.decay()?;
    let block_eigs: Vec<f64> = (1..=m).map(|j| block_eig(&decay, j, d).unwrap()).collect();
    let mut logs = KahanSum::new();
    for &nu in &block_eigs {
        logs.add(nu.ln());
    }
    let mean_log = logs.value() / m as f64;
    let half_d = d as f64 / 2.0;
    let mut levels = Vec::with_capacity(m as usize);
    for &nu in &block_eigs {
        let lz = log_n / m as f64 + half_d * (nu.ln() - mean_log);
        levels.push(snap_floor(lz)?);
    }
    for pair in levels.windows(2) {
        debug_assert!(pair[0] >= pair[1]);
    }
    let mut spent = KahanSum::new();
    for &l in &levels {
        spent.add((l as f64).ln());
    }
    debug_assert!(spent.value() <= log_n + 1e-7);
    Ok(ProductPlan {
        log_n,
        block_dim: d,
        m,
        levels,
        block_eigs,
        exactness: if d == 1 {
            Exactness::Exact
        } else {
            Exactness::ApproximateUpper
        },
    })
}

/// Group equal levels and sum their block eigenvalues.
fn distinct_levels(plan: &ProductPlan) -> Vec<(u64, f64)> {
    let mut groups: Vec<(u64, f64)> = Vec::new();
    let mut acc = KahanSum::new();
    let mut current = plan.levels[0];
    for (&level, &nu) in plan.levels.iter().zip(&plan.block_eigs) {
        if level != current {
            groups.push((current, acc.value()));
            acc = KahanSum::new();
            current = level;
        }
        acc.add(nu);
    }
    groups.push((current, acc.value()));
    groups
}

/// Evaluate a plan's distortion: exact for d = 1, a statistical upper
/// bound for d ≥ 2 (the trained block codebooks are seeded from `seed`).
pub fn plan_distortion(
    plan: &ProductPlan,
    model: &SpectrumModel,
    seed: u64,
) -> Result<PlanDistortion> {
    let tail = tail_sum(model, plan.m * plan.block_dim as u64)?.value;
    let groups = distinct_levels(plan);
    let (quant, stderr) = if plan.block_dim == 1 {
        let parts: Vec<Result<f64>> = groups
            .par_iter()
            .map(|&(level, weight)| Ok(weight * scalar::distortion(level)?))
            .collect();
        let mut acc = KahanSum::new();
        for p in parts {
            acc.add(p?);
        }
        (acc.value(), None)
    } else {
        let d = plan.block_dim;
        let mut acc = KahanSum::new();
        let mut var = 0.0;
        for &(level, weight) in &groups {
            if level == 1 {
                acc.add(weight * d as f64);
            } else {
                let est = vq::block_distortion(d, level, seed)?.distortion_estimate;
                acc.add(weight * est.value);
                var += (weight * est.stderr).powi(2);
            }
        }
        (acc.value(), Some(var.sqrt()))
    };
    Ok(PlanDistortion {
        tail,
        quant,
        total: tail + quant,
        stderr,
    })
}

/// Upper bound Σ_{j>md} λ_j + 4^{1/d}·C_d·m·ν_m on the product
/// quantizer's distortion; `cd` is the block quantization coefficient
/// (exact √3π/2 for d = 1, an empirical estimate otherwise).
pub fn distortion_upper_bound(model: &SpectrumModel, log_n: f64, d: u32, cd: f64) -> Result<f64> {
    if !(cd > 0.0) || !cd.is_finite() {
        return Err(Error::InvalidParameter {
            name: "cd",
            value: cd,
            reason: "the quantization coefficient must be positive",
        });
    }
    let m = critical_dim(model, log_n, d)?;
    let decay = model.decay()?;
    let nu_m = block_eig(&decay, m, d).unwrap();
    let tail = tail_sum(model, m * d as u64)?.value;
    Ok(tail + 4f64.powf(1.0 / d as f64) * cd * m as f64 * nu_m)
}

/// Lower bound Σ_{j>m} λ_j + m·λ_{m+1} on the optimal quantization error
/// e_n² of the model at the same budget.
pub fn distortion_lower_bound(model: &SpectrumModel, log_n: f64) -> Result<f64> {
    let m = critical_dim(model, log_n, 1)?;
    let decay = model.decay()?;
    let next = decay.eigenvalue(m + 1).unwrap_or(0.0);
    let tail = tail_sum(model, m)?.value;
    Ok(tail + m as f64 * next)
}
