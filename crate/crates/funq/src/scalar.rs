//! Optimal scalar quantizers for the standard normal distribution.
//!
//! A k-level quantizer replaces a draw of N(0,1) by the nearest of k
//! codepoints. The optimal codebook is the unique symmetric stationary
//! point of the distortion functional: every threshold sits midway
//! between its neighbouring codepoints and every codepoint is the
//! conditional mean of its cell. [`lloyd_1d`] computes that fixed point
//! to near machine precision and [`c1_scan`] tabulates the normalized
//! distortions k²·e_k² whose supremum drives every product-quantizer
//! bound downstream.

use crate::error::{Error, Result};
use crate::special::{gl16_composite, normal_pdf, normal_quantile, normal_sf, KahanSum};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Default residual tolerance for the stationarity system.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Default iteration budget shared by the Lloyd and Newton phases.
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Full quantizers with at most this many levels are memoized.
pub const CACHE_LEVELS: u32 = 2000;

/// Largest level count the solver will materialize.
pub const MAX_LEVELS: u64 = 1 << 22;

/// The scalar quantization coefficient sup_k k²·e_k(N(0,1))² = √3·π/2.
pub const C1: f64 = 2.7206990463513265;

const LLOYD_WARMUP: usize = 8;

/// An optimal k-level quantizer of N(0,1).
#[derive(Debug, Clone)]
pub struct ScalarQuantizer {
    /// Number of codepoints k.
    pub levels: u32,
    /// Strictly increasing codepoints a_1 < … < a_k.
    pub codepoints: Vec<f64>,
    /// Cell boundaries t_0 = −∞ < t_1 < … < t_{k−1} < t_k = +∞, where the
    /// interior thresholds are the midpoints of adjacent codepoints.
    pub thresholds: Vec<f64>,
    /// Squared quantization error e_k² in variance units, computed through
    /// the centroidal identity 1 − Σ p_i a_i².
    pub distortion: f64,
    /// Largest gap |a_i − centroid(cell_i)| at the returned point.
    pub stationarity_residual: f64,
}

/// The i/(k+1)-quantiles of N(0,3) for i = 1…k, the initial codebook for
/// the fixed-point solver.
pub fn quantile_init(k: u32) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidLevels);
    }
    let scale = 3f64.sqrt();
    let denom = k as f64 + 1.0;
    Ok((1..=k)
        .map(|i| scale * normal_quantile(i as f64 / denom))
        .collect())
}

/// Statistics of one cell (u, v) of the standard normal: its mass, its
/// conditional mean, and the derivatives of that mean in the endpoints.
struct CellStats {
    mass: f64,
    centroid: f64,
    dc_du: f64,
    dc_dv: f64,
}

fn cell_stats(u: f64, v: f64) -> CellStats {
    if v.is_infinite() {
        let mass = normal_sf(u);
        let centroid = normal_pdf(u) / mass;
        CellStats {
            mass,
            centroid,
            dc_du: normal_pdf(u) * (centroid - u) / mass,
            dc_dv: 0.0,
        }
    } else {
        // The mass integral has a positive integrand, so panel quadrature
        // avoids the cancellation of a CDF difference. The first moment is
        // φ(u) − φ(v), written through expm1 for narrow cells.
        let mass = gl16_composite(u, v, 0.5, normal_pdf);
        let moment = -normal_pdf(u) * ((u - v) * (u + v) / 2.0).exp_m1();
        let centroid = moment / mass;
        CellStats {
            mass,
            centroid,
            dc_du: normal_pdf(u) * (centroid - u) / mass,
            dc_dv: normal_pdf(v) * (v - centroid) / mass,
        }
    }
}

/// Boundaries of the positive half-line cells for folded codepoints x:
/// s_0 is 0 for even k (midpoint with the mirrored −x_1) and x_1/2 for odd
/// k (midpoint with the central codepoint 0); s_q = +∞.
fn half_boundaries(odd: bool, x: &[f64]) -> Vec<f64> {
    let q = x.len();
    let mut s = Vec::with_capacity(q + 1);
    s.push(if odd { x[0] / 2.0 } else { 0.0 });
    for j in 1..q {
        s.push(0.5 * (x[j - 1] + x[j]));
    }
    s.push(f64::INFINITY);
    s
}

fn ascending_positive(x: &[f64]) -> bool {
    if !(x[0] > 0.0) {
        return false;
    }
    x.windows(2).all(|w| w[0] < w[1] && w[1].is_finite())
}

struct HalfEval {
    stats: Vec<CellStats>,
    residual: f64,
}

fn eval_half(odd: bool, x: &[f64]) -> HalfEval {
    let s = half_boundaries(odd, x);
    let stats: Vec<CellStats> = (0..x.len()).map(|j| cell_stats(s[j], s[j + 1])).collect();
    let residual = x
        .iter()
        .zip(&stats)
        .map(|(xj, st)| (xj - st.centroid).abs())
        .fold(0.0, f64::max);
    HalfEval { stats, residual }
}

/// Solve a tridiagonal system in place; `rhs` becomes the solution.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut scratch = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot.abs() < 1e-300 {
        return Err(Error::NoConvergence {
            residual: f64::INFINITY,
            iterations: 0,
        });
    }
    rhs[0] /= pivot;
    for i in 1..n {
        scratch[i] = sup[i - 1] / pivot;
        pivot = diag[i] - sub[i] * scratch[i];
        if pivot.abs() < 1e-300 {
            return Err(Error::NoConvergence {
                residual: f64::INFINITY,
                iterations: 0,
            });
        }
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
    Ok(())
}

/// Run Lloyd warm-up passes and then damped Newton on the folded
/// stationarity system, returning the positive codepoints and the final
/// residual.
fn solve_half(k: u32, tol: f64, max_iter: usize) -> Result<(Vec<f64>, HalfEval)> {
    let odd = k % 2 == 1;
    let q = (k / 2) as usize;
    let init = quantile_init(k)?;
    let mut x: Vec<f64> = init[init.len() - q..].to_vec();
    let mut eval = eval_half(odd, &x);
    let mut iterations = 0usize;
    loop {
        if eval.residual < tol {
            return Ok((x, eval));
        }
        if iterations >= max_iter {
            return Err(Error::NoConvergence {
                residual: eval.residual,
                iterations,
            });
        }
        iterations += 1;
        if iterations <= LLOYD_WARMUP {
            x = eval.stats.iter().map(|st| st.centroid).collect();
            eval = eval_half(odd, &x);
            continue;
        }

        // Newton direction for F_j = x_j − centroid_j. Each boundary is a
        // midpoint of neighbouring codepoints, so the Jacobian is
        // tridiagonal with entries built from the centroid derivatives.
        let mut sub = vec![0.0; q];
        let mut diag = vec![0.0; q];
        let mut sup = vec![0.0; q];
        let mut rhs = vec![0.0; q];
        for j in 0..q {
            let st = &eval.stats[j];
            let du_dxj = if j > 0 || odd { 0.5 } else { 0.0 };
            let dv_dxj = if j + 1 < q { 0.5 } else { 0.0 };
            diag[j] = 1.0 - st.dc_du * du_dxj - st.dc_dv * dv_dxj;
            if j > 0 {
                sub[j] = -0.5 * st.dc_du;
            }
            if j + 1 < q {
                sup[j] = -0.5 * st.dc_dv;
            }
            rhs[j] = st.centroid - x[j];
        }
        let newton = thomas(&sub, &diag, &sup, &mut rhs).is_ok();

        let mut stepped = false;
        if newton {
            let mut alpha = 1.0;
            while alpha >= 2f64.powi(-30) {
                let cand: Vec<f64> = x.iter().zip(&rhs).map(|(xj, dj)| xj + alpha * dj).collect();
                if ascending_positive(&cand) {
                    let cand_eval = eval_half(odd, &cand);
                    if cand_eval.residual <= (1.0 - 0.25 * alpha) * eval.residual {
                        x = cand;
                        eval = cand_eval;
                        stepped = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
        }
        if !stepped {
            // Fall back to a plain Lloyd pass, which always keeps the
            // codepoints ordered.
            x = eval.stats.iter().map(|st| st.centroid).collect();
            eval = eval_half(odd, &x);
        }
    }
}

fn assemble(k: u32, x: Vec<f64>, eval: HalfEval) -> ScalarQuantizer {
    let odd = k % 2 == 1;
    let mut codepoints = Vec::with_capacity(k as usize);
    for xj in x.iter().rev() {
        codepoints.push(-xj);
    }
    if odd {
        codepoints.push(0.0);
    }
    codepoints.extend_from_slice(&x);

    let mut thresholds = Vec::with_capacity(k as usize + 1);
    thresholds.push(f64::NEG_INFINITY);
    for w in codepoints.windows(2) {
        thresholds.push(0.5 * (w[0] + w[1]));
    }
    thresholds.push(f64::INFINITY);

    let mut acc = KahanSum::new();
    for (xj, st) in x.iter().zip(&eval.stats) {
        acc.add(st.mass * xj * xj);
    }
    let distortion = 1.0 - 2.0 * acc.value();

    ScalarQuantizer {
        levels: k,
        codepoints,
        thresholds,
        distortion,
        stationarity_residual: eval.residual,
    }
}

fn solve_full(k: u32, tol: f64, max_iter: usize) -> Result<ScalarQuantizer> {
    if k == 1 {
        return Ok(ScalarQuantizer {
            levels: 1,
            codepoints: vec![0.0],
            thresholds: vec![f64::NEG_INFINITY, f64::INFINITY],
            distortion: 1.0,
            stationarity_residual: 0.0,
        });
    }
    let (x, eval) = solve_half(k, tol, max_iter)?;
    Ok(assemble(k, x, eval))
}

fn cache() -> &'static Mutex<HashMap<u32, Arc<ScalarQuantizer>>> {
    static CACHE: OnceLock<Mutex<HashMap<u32, Arc<ScalarQuantizer>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn distortion_memo() -> &'static Mutex<HashMap<u64, f64>> {
    static MEMO: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    MEMO.get_or_init(|| Mutex::new(HashMap::new()))
}

fn validate(k: u32, tol: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidLevels);
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidParameter {
            name: "tol",
            value: tol,
            reason: "must be a positive finite residual tolerance",
        });
    }
    Ok(())
}

/// The optimal k-level quantizer of N(0,1), solved to `tol` on the
/// stationarity residual and memoized for small k.
pub fn lloyd_1d(k: u32, tol: f64, max_iter: usize) -> Result<Arc<ScalarQuantizer>> {
    validate(k, tol)?;
    if k <= CACHE_LEVELS {
        if let Some(hit) = cache().lock().unwrap().get(&k) {
            if hit.stationarity_residual <= tol {
                return Ok(Arc::clone(hit));
            }
        }
    }
    let solved = Arc::new(solve_full(k, tol, max_iter)?);
    if k <= CACHE_LEVELS {
        cache().lock().unwrap().insert(k, Arc::clone(&solved));
    }
    Ok(solved)
}

/// The squared quantization error e_k² of the optimal k-level quantizer.
/// Values beyond [`CACHE_LEVELS`] are memoized without retaining the full
/// codebook.
pub fn distortion(k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidLevels);
    }
    if k == 1 {
        return Ok(1.0);
    }
    if k > MAX_LEVELS {
        return Err(Error::LevelTooLarge(k));
    }
    if k <= CACHE_LEVELS as u64 {
        return Ok(lloyd_1d(k as u32, DEFAULT_TOL, DEFAULT_MAX_ITER)?.distortion);
    }
    if let Some(&hit) = distortion_memo().lock().unwrap().get(&k) {
        return Ok(hit);
    }
    let solved = solve_full(k as u32, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    distortion_memo()
        .lock()
        .unwrap()
        .insert(k, solved.distortion);
    Ok(solved.distortion)
}

/// One row of the normalized-distortion table.
#[derive(Debug, Clone, Copy)]
pub struct C1Row {
    /// Level count.
    pub k: u32,
    /// k²·e_k², or None when the solver failed for this k.
    pub value: Option<f64>,
    /// Supremum of the values over rows 1…k.
    pub running_sup: f64,
}

/// Tabulate k²·e_k² for k = 1…k_max together with the running supremum,
/// an empirical probe of the constant C(1). Solver failures mark their row
/// invalid instead of aborting the scan.
pub fn c1_scan(k_max: u32) -> Vec<C1Row> {
    use rayon::prelude::*;
    let values: Vec<Option<f64>> = (1..=k_max)
        .into_par_iter()
        .map(|k| {
            lloyd_1d(k, DEFAULT_TOL, DEFAULT_MAX_ITER)
                .ok()
                .map(|sq| (k as f64) * (k as f64) * sq.distortion)
        })
        .collect();
    let mut rows = Vec::with_capacity(k_max as usize);
    let mut sup = f64::NEG_INFINITY;
    for (i, value) in values.into_iter().enumerate() {
        if let Some(v) = value {
            sup = sup.max(v);
        }
        rows.push(C1Row {
            k: i as u32 + 1,
            value,
            running_sup: sup,
        });
    }
    rows
}
