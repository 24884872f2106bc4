//! Water-filling rate distortion for Gaussian measures.
//!
//! The ε-entropy of a Gaussian measure with eigenvalues λ_1 ≥ λ_2 ≥ …
//! follows from flooding the spectrum at a water level ϑ: the active
//! index r is the largest k whose marginal contribution keeps the flooded
//! sum above ε², then ϑ solves Σ_{j>r} λ_j + r·ϑ = ε² and the rate is
//! R = ½ Σ_{j≤r} log(λ_j/ϑ). The module also provides the inverse map
//! D(R), the closed-form asymptotic rate for regularly varying spectra,
//! a sampler for the joint reproducing distribution, and a two-sided
//! bracket on the covering budget N(ε).

use crate::allocation;
use crate::error::{Error, Result};
use crate::scalar;
use crate::special::{normal_quantile, KahanSum};
use crate::spectra::{tail_sum, Decay, SpectrumModel};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::collections::HashMap;

/// An active water-filling solution at distortion level ε.
#[derive(Debug, Clone, Copy)]
pub struct WaterfillSolution {
    pub eps: f64,
    /// Number of coordinates kept (those with λ_j > ϑ).
    pub r: u64,
    /// Water level.
    pub theta: f64,
    /// ε-entropy in nats.
    pub rate: f64,
}

/// Result of water-filling: degenerate when ε covers the whole measure.
#[derive(Debug, Clone, Copy)]
pub enum Waterfill {
    /// ε ≥ e_1: a single codepoint (the mean) suffices, R = 0.
    ZeroRate {
        eps: f64,
        e1: f64,
    },
    Active(WaterfillSolution),
}

impl Waterfill {
    pub fn rate(&self) -> f64 {
        match self {
            Waterfill::ZeroRate { .. } => 0.0,
            Waterfill::Active(s) => s.rate,
        }
    }

    pub fn active(&self) -> Option<&WaterfillSolution> {
        match self {
            Waterfill::ZeroRate { .. } => None,
            Waterfill::Active(s) => Some(s),
        }
    }
}

/// Seeded draws from the joint source and reproducing distributions,
/// truncated to the active coordinates.
#[derive(Debug, Clone)]
pub struct ReproducingDraws {
    pub r: u64,
    pub theta: f64,
    pub count: usize,
    /// Source coefficients λ_j^{1/2}·Z_j, row-major count×r.
    pub x: Vec<f64>,
    /// Reproducing coefficients, row-major count×r; zero beyond r.
    pub y: Vec<f64>,
}

/// A two-sided bracket on log N(ε), the log of the smallest codebook
/// that reaches distortion ε.
#[derive(Debug, Clone, Copy)]
pub struct NEpsBracket {
    pub eps: f64,
    /// Converse bound: R(ε) ≤ log N(ε).
    pub log_lower: f64,
    /// A budget whose product quantizer achieves ε².
    pub log_upper: f64,
    /// The minimal integer budget, when small enough to materialize.
    pub n_upper: Option<u64>,
    /// False when the upper bound came from the closed-form bound
    /// rather than an exactly evaluated plan.
    pub materialized: bool,
}

struct Engine {
    decay: Decay,
    model: SpectrumModel,
    trace: f64,
    tails: HashMap<u64, f64>,
}

impl Engine {
    fn new(model: &SpectrumModel) -> Result<Self> {
        let decay = model.decay()?;
        let trace = tail_sum(model, 0)?.value;
        Ok(Engine {
            decay,
            model: model.clone(),
            trace,
            tails: HashMap::new(),
        })
    }

    fn tail(&mut self, k: u64) -> f64 {
        if let Some(&v) = self.tails.get(&k) {
            return v;
        }
        let v = tail_sum(&self.model, k).expect("validated model").value;
        self.tails.insert(k, v);
        v
    }

    /// tail(k) + k·λ_k, the flooded sum when the level sits at λ_k.
    fn score(&mut self, k: u64) -> Option<f64> {
        let lam = self.decay.eigenvalue(k)?;
        Some(self.tail(k) + k as f64 * lam)
    }

    fn solve(&mut self, eps: f64) -> Result<Waterfill> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::NonPositiveEps(eps));
        }
        let e1 = self.trace.sqrt();
        let eps2 = eps * eps;
        if eps2 >= self.trace {
            return Ok(Waterfill::ZeroRate { eps, e1 });
        }
        let mut lo = 1u64;
        let mut hi = None;
        let mut k = 2u64;
        let mut last_score = self.score(1).unwrap();
        let mut decided = None;
        loop {
            match self.score(k) {
                Some(s) => {
                    debug_assert!(
                        s <= last_score * (1.0 + 1e-9),
                        "flooded sums must not increase"
                    );
                    last_score = s;
                    if s > eps2 {
                        lo = k;
                        k = k.saturating_mul(2);
                    } else {
                        hi = Some(k);
                        break;
                    }
                }
                None => {
                    // The doubling jumped past a finite rank; the boundary
                    // is somewhere in (lo, rank].
                    let rank = self.decay.rank().expect("only finite spectra end");
                    if rank == lo || self.score(rank).unwrap() > eps2 {
                        decided = Some(rank);
                    } else {
                        hi = Some(rank);
                    }
                    break;
                }
            }
        }
        let r = match (decided, hi) {
            (Some(r), _) => r,
            (None, Some(mut hi)) => {
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if self.score(mid).unwrap() > eps2 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            }
            (None, None) => unreachable!("the scan always brackets or decides"),
        };
        let lam_r = self.decay.eigenvalue(r).unwrap();
        let lam_next = self.decay.eigenvalue(r + 1).unwrap_or(0.0);
        let theta = ((eps2 - self.tail(r)) / r as f64).clamp(lam_next.min(lam_r), lam_r);
        let mut logs = KahanSum::new();
        for j in 1..=r {
            logs.add(self.decay.log_eigenvalue(j).unwrap());
        }
        let rate = 0.5 * (logs.value() - r as f64 * theta.ln()).max(0.0);
        Ok(Waterfill::Active(WaterfillSolution {
            eps,
            r,
            theta,
            rate,
        }))
    }
}

/// Solve the water-filling problem for a model at distortion ε.
pub fn waterfill(model: &SpectrumModel, eps: f64) -> Result<Waterfill> {
    Engine::new(model)?.solve(eps)
}

/// Invert R(ε): the distortion level at which the ε-entropy equals
/// `rate` nats, by bisection (R is continuous and strictly decreasing).
pub fn distortion_rate(model: &SpectrumModel, rate: f64) -> Result<f64> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::InvalidParameter {
            name: "rate",
            value: rate,
            reason: "the rate must be finite and nonnegative",
        });
    }
    let mut engine = Engine::new(model)?;
    let e1 = engine.trace.sqrt();
    if rate == 0.0 {
        return Ok(e1);
    }
    let mut lo = e1 * 0.5;
    for _ in 0..2000 {
        if engine.solve(lo)?.rate() >= rate {
            break;
        }
        lo *= 0.5;
    }
    let mut hi = e1;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r_mid = engine.solve(mid)?.rate();
        if (r_mid - rate).abs() <= 1e-12 * rate.max(1.0) {
            return Ok(mid);
        }
        if r_mid > rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-16 * e1 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed-form high-resolution approximation of R(ε) for eigenvalues
/// λ_j ≈ c·j^{-b}·log(j)^{-a} with b > 1:
/// (b/2)·(cb/(b−1)·((b−1)/2)^a)^{1/(b−1)}·ε^{-2/(b−1)}·log(1/ε)^{-a/(b−1)}.
pub fn rd_asymptotic(c: f64, b: f64, a: f64, eps: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter {
            name: "c",
            value: c,
            reason: "must be positive and finite",
        });
    }
    if !(b > 1.0) || !b.is_finite() {
        return Err(Error::InvalidParameter {
            name: "b",
            value: b,
            reason: "the asymptotic rate needs a decay index above 1",
        });
    }
    if !(eps > 0.0) || (a != 0.0 && eps >= 1.0) {
        return Err(Error::NonPositiveEps(eps));
    }
    let constant = (c * b / (b - 1.0) * ((b - 1.0) / 2.0).powf(a)).powf(1.0 / (b - 1.0));
    let log_part = if a == 0.0 {
        1.0
    } else {
        eps.recip().ln().powf(-a / (b - 1.0))
    };
    Ok(b / 2.0 * constant * eps.powf(-2.0 / (b - 1.0)) * log_part)
}

/// Draw `count` coupled samples (X, Y) of the source and reproducing
/// coefficient vectors at distortion ε. Beyond the active index the
/// reproduction is zero, so only r columns are returned.
pub fn sample_reproducing(
    model: &SpectrumModel,
    eps: f64,
    count: usize,
    seed: u64,
) -> Result<ReproducingDraws> {
    let solution = waterfill(model, eps)?;
    let decay = model.decay()?;
    let (r, theta) = match &solution {
        Waterfill::ZeroRate { .. } => {
            return Ok(ReproducingDraws {
                r: 0,
                theta: decay.eigenvalue(1).unwrap(),
                count,
                x: Vec::new(),
                y: Vec::new(),
            })
        }
        Waterfill::Active(s) => (s.r, s.theta),
    };
    if r as usize > 10_000_000 / count.max(1) {
        return Err(Error::InvalidParameter {
            name: "count",
            value: count as f64,
            reason: "sample matrix too large; raise eps or lower count",
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(count * r as usize);
    let mut y = Vec::with_capacity(count * r as usize);
    let draw = |rng: &mut ChaCha12Rng| {
        let u = ((rng.next_u64() >> 11) as f64 + 0.5) * 2f64.powi(-53);
        normal_quantile(u)
    };
    for _ in 0..count {
        for j in 1..=r {
            let lam = decay.eigenvalue(j).unwrap();
            let z = draw(&mut rng);
            let z2 = draw(&mut rng);
            let shrink = (1.0 - theta / lam).max(0.0);
            x.push(lam.sqrt() * z);
            y.push(lam.sqrt() * shrink * z + (theta * shrink).sqrt() * z2);
        }
    }
    Ok(ReproducingDraws {
        r,
        theta,
        count,
        x,
        y,
    })
}

/// Bracket log N(ε) between the converse bound R(ε) and the log budget
/// of a product plan achieving ε².
pub fn n_eps_bracket(model: &SpectrumModel, eps: f64) -> Result<NEpsBracket> {
    let log_lower = waterfill(model, eps)?.rate();
    let eps2 = eps * eps;
    let exact_total = |log_n: f64| -> Result<f64> {
        let plan = allocation::allocate(model, log_n, 1)?;
        Ok(allocation::plan_distortion(&plan, model, 0)?.total)
    };
    let bound_total = |log_n: f64| -> Result<f64> {
        allocation::distortion_upper_bound(model, log_n, 1, scalar::C1)
    };
    let mut materialized = true;
    let mut hi = log_lower.max(1.0);
    loop {
        match exact_total(hi) {
            Ok(total) if total <= eps2 => break,
            Ok(_) => hi *= 2.0,
            Err(Error::LevelTooLarge(_)) | Err(Error::LevelOverflow(_)) => {
                materialized = false;
                break;
            }
            Err(e) => return Err(e),
        }
        if hi > 1e9 {
            return Err(Error::InvalidParameter {
                name: "eps",
                value: eps,
                reason: "no practical budget reaches this distortion",
            });
        }
    }
    if !materialized {
        hi = log_lower.max(1.0);
        while bound_total(hi)? > eps2 {
            hi *= 2.0;
            if hi > 1e9 {
                return Err(Error::InvalidParameter {
                    name: "eps",
                    value: eps,
                    reason: "no practical budget reaches this distortion",
                });
            }
        }
    }
    let total_at = |log_n: f64| -> Result<f64> {
        if materialized {
            exact_total(log_n)
        } else {
            bound_total(log_n)
        }
    };
    let mut lo = 0.0;
    if total_at(lo)? <= eps2 {
        hi = 0.0;
    }
    for _ in 0..80 {
        if hi - lo <= 1e-10 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if total_at(mid)? <= eps2 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut n_upper = None;
    if materialized && hi < (1e6f64).ln() {
        let mut n = hi.exp().round().max(1.0) as u64;
        while n > 1 && exact_total(((n - 1) as f64).ln())? <= eps2 {
            n -= 1;
        }
        while exact_total((n as f64).ln())? > eps2 {
            n += 1;
        }
        n_upper = Some(n);
    }
    Ok(NEpsBracket {
        eps,
        log_lower,
        log_upper: hi,
        n_upper,
        materialized,
    })
}
