//! Karhunen–Loève eigenvalue catalog, tail sums, and a Nyström oracle.
//!
//! Every Gaussian process here is represented by the nonincreasing
//! eigenvalue sequence of its covariance operator. Brownian motion has an
//! exact closed form; the other catalog members are handled through their
//! regularly varying asymptotics λ_j ≈ c·j^{-b}·log(j+1)^{-a} with a
//! monotonized head. Tail sums Σ_{j>m} λ_j are evaluated with an
//! Euler–Maclaurin corrected prefix sum and carry a rigorous
//! integral-sandwich remainder bound. The [`nystrom`] submodule
//! discretizes covariance kernels directly and serves as an independent
//! numerical check on the asymptotic formulas.

use crate::error::{Error, Result};
use crate::special::{gauss_laguerre_48, trigamma, KahanSum};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

/// Provenance of a returned eigenvalue sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumTag {
    /// Closed-form eigenvalues (Brownian motion, explicit lists).
    Exact,
    /// Large-j asymptotics with a monotonized head.
    Asymptotic,
}

/// The first eigenvalues of a model, tagged by provenance.
#[derive(Debug, Clone)]
pub struct EigenSequence {
    pub values: Vec<f64>,
    pub tag: SpectrumTag,
}

/// Eigenvalue model of a catalog process.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumModel {
    /// Brownian motion: λ_k = (π(k−1/2))^{-2} exactly.
    ExactBm,
    /// Solution of dX = A(t)X dt + dB; eigenvalues asymptotic to (πk)^{-2}.
    GaussianDiffusion,
    /// Stationary process with spectral density h(λ) ~ c·λ^{-b}.
    StationarySpectral { c: f64, b: f64 },
    /// Fractional Ornstein–Uhlenbeck: covariance exp(−a|s−t|^ρ), ρ ∈ (0,2).
    Fou { a: f64, rho: f64 },
    /// Fractional Brownian motion with Hurst exponent β ∈ (0,1).
    Fbm { beta: f64 },
    /// m-times integrated Brownian motion: λ_k ~ (πk)^{-(2m+2)}.
    Ibm { m: u32 },
    /// Tensor product of one-dimensional factors sharing a decay index.
    TensorSheet { factors: Vec<SpectrumModel> },
    /// λ_j = c·j^{-b}·log(j+1)^{-a} with a monotonized head.
    RegularVarying { c: f64, b: f64, a: f64 },
    /// A finite, explicitly listed spectrum.
    ExplicitList { values: Vec<f64> },
}

/// Reduced eigenvalue representation shared by the numeric modules.
#[derive(Debug, Clone)]
pub(crate) enum Decay {
    ExactBm,
    Power {
        c: f64,
        b: f64,
        a: f64,
        /// First index at which the raw formula is nonincreasing.
        jstar: u64,
        /// Formula value at `jstar`; indices below are clamped to it.
        peak: f64,
    },
    Finite(Vec<f64>),
}

fn power_value(c: f64, b: f64, a: f64, j: u64) -> f64 {
    let x = j as f64;
    let base = c * x.powf(-b);
    if a == 0.0 {
        base
    } else {
        base * x.ln_1p().powf(-a)
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        });
    }
    Ok(())
}

impl SpectrumModel {
    /// Check all parameter domains without computing anything further.
    pub fn validate(&self) -> Result<()> {
        self.decay().map(|_| ())
    }

    /// Asymptotic (c, b) of a pure power factor, for tensor products.
    fn power_factor(&self) -> Result<(f64, f64)> {
        match self.decay()? {
            Decay::ExactBm => Ok((PI.powi(-2), 2.0)),
            Decay::Power { c, b, a, .. } => {
                if a != 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "factor",
                        value: a,
                        reason: "tensor factors must decay as pure powers, without log terms",
                    });
                }
                Ok((c, b))
            }
            Decay::Finite(_) => Err(Error::InvalidParameter {
                name: "factor",
                value: 0.0,
                reason: "finite spectra have no power asymptotics to tensorize",
            }),
        }
    }

    pub(crate) fn decay(&self) -> Result<Decay> {
        match self {
            SpectrumModel::ExactBm => Ok(Decay::ExactBm),
            SpectrumModel::GaussianDiffusion => make_power(PI.powi(-2), 2.0, 0.0),
            SpectrumModel::StationarySpectral { c, b } => {
                check_positive("c", *c)?;
                if !(*b > 1.0) || !b.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "b",
                        value: *b,
                        reason: "spectral density index must exceed 1",
                    });
                }
                make_power(2.0 * c * PI.powf(1.0 - b), *b, 0.0)
            }
            SpectrumModel::Fou { a, rho } => {
                check_positive("a", *a)?;
                if !(*rho > 0.0 && *rho < 2.0) {
                    return Err(Error::InvalidParameter {
                        name: "rho",
                        value: *rho,
                        reason: "must lie in the open interval (0, 2)",
                    });
                }
                let ch = a * gamma(1.0 + rho) * (PI * rho / 2.0).sin() / PI;
                make_power(2.0 * ch * PI.powf(-rho), 1.0 + rho, 0.0)
            }
            SpectrumModel::Fbm { beta } => {
                if !(*beta > 0.0 && *beta < 1.0) {
                    return Err(Error::InvalidParameter {
                        name: "beta",
                        value: *beta,
                        reason: "Hurst exponent must lie in the open interval (0, 1)",
                    });
                }
                let c = gamma(1.0 + 2.0 * beta) * (PI * beta).sin() / (2.0 * PI);
                make_power(2.0 * c * PI.powf(-2.0 * beta), 1.0 + 2.0 * beta, 0.0)
            }
            SpectrumModel::Ibm { m } => {
                if *m == 0 {
                    return Err(Error::InvalidParameter {
                        name: "m",
                        value: 0.0,
                        reason: "integration order must be at least 1",
                    });
                }
                let b = (2 * m + 2) as f64;
                make_power(PI.powf(-b), b, 0.0)
            }
            SpectrumModel::TensorSheet { factors } => {
                if factors.is_empty() {
                    return Err(Error::InvalidParameter {
                        name: "factors",
                        value: 0.0,
                        reason: "a tensor sheet needs at least one factor",
                    });
                }
                let mut product = 1.0;
                let mut b = 0.0;
                for (i, factor) in factors.iter().enumerate() {
                    let (cj, bj) = factor.power_factor()?;
                    if i == 0 {
                        b = bj;
                    } else if bj != b {
                        return Err(Error::MixedTensorIndices(b, bj));
                    }
                    product *= cj;
                }
                let d = factors.len() as u32;
                let k = product * factorial(d - 1).powf(-b);
                make_power(k, b, -b * (d as f64 - 1.0))
            }
            SpectrumModel::RegularVarying { c, b, a } => {
                check_positive("c", *c)?;
                if !b.is_finite() || !a.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "b",
                        value: *b,
                        reason: "decay exponents must be finite",
                    });
                }
                if *b < 1.0 || (*b == 1.0 && *a <= 1.0) {
                    return Err(Error::DivergentTail { b: *b, a: *a });
                }
                make_power(*c, *b, *a)
            }
            SpectrumModel::ExplicitList { values } => {
                if values.is_empty() {
                    return Err(Error::InvalidParameter {
                        name: "values",
                        value: 0.0,
                        reason: "an explicit spectrum must be nonempty",
                    });
                }
                for w in values.windows(2) {
                    if w[1] > w[0] {
                        return Err(Error::InvalidParameter {
                            name: "values",
                            value: w[1],
                            reason: "eigenvalues must be nonincreasing",
                        });
                    }
                }
                let last = *values.last().unwrap();
                if !(last > 0.0) || !values[0].is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "values",
                        value: last,
                        reason: "eigenvalues must be positive and finite",
                    });
                }
                Ok(Decay::Finite(values.clone()))
            }
        }
    }

    /// The j-th eigenvalue (1-indexed), or None past a finite rank.
    pub fn eigenvalue(&self, j: u64) -> Result<Option<f64>> {
        if j == 0 {
            return Err(Error::InvalidParameter {
                name: "j",
                value: 0.0,
                reason: "eigenvalue indices start at 1",
            });
        }
        Ok(self.decay()?.eigenvalue(j))
    }

    /// Σ_j λ_j.
    pub fn trace(&self) -> Result<f64> {
        Ok(tail_sum(self, 0)?.value)
    }

    /// Whether [`eigenvalues`] returns closed forms or asymptotics.
    pub fn tag(&self) -> SpectrumTag {
        match self {
            SpectrumModel::ExactBm | SpectrumModel::ExplicitList { .. } => SpectrumTag::Exact,
            _ => SpectrumTag::Asymptotic,
        }
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

fn make_power(c: f64, b: f64, a: f64) -> Result<Decay> {
    // The raw formula can rise before it decays when the log power is
    // positive; clamp the head at the crest so the sequence is
    // nonincreasing from j = 1.
    let mut jstar = 1u64;
    if a < 0.0 {
        while jstar < 1_000_000 && power_value(c, b, a, jstar + 1) >= power_value(c, b, a, jstar) {
            jstar += 1;
        }
        if jstar == 1_000_000 {
            return Err(Error::InvalidParameter {
                name: "a",
                value: a,
                reason: "log power too large to monotonize",
            });
        }
    }
    let peak = power_value(c, b, a, jstar);
    Ok(Decay::Power {
        c,
        b,
        a,
        jstar,
        peak,
    })
}

impl Decay {
    pub(crate) fn eigenvalue(&self, j: u64) -> Option<f64> {
        match self {
            Decay::ExactBm => Some((PI * (j as f64 - 0.5)).powi(-2)),
            Decay::Power {
                c,
                b,
                a,
                jstar,
                peak,
            } => {
                if j <= *jstar {
                    Some(*peak)
                } else {
                    Some(power_value(*c, *b, *a, j))
                }
            }
            Decay::Finite(values) => values.get(j as usize - 1).copied(),
        }
    }

    pub(crate) fn rank(&self) -> Option<u64> {
        match self {
            Decay::Finite(values) => Some(values.len() as u64),
            _ => None,
        }
    }

    pub(crate) fn log_eigenvalue(&self, j: u64) -> Option<f64> {
        match self {
            Decay::ExactBm => Some(-2.0 * (PI * (j as f64 - 0.5)).ln()),
            Decay::Power {
                c,
                b,
                a,
                jstar,
                peak,
            } => {
                if j <= *jstar {
                    Some(peak.ln())
                } else {
                    let x = j as f64;
                    Some(c.ln() - b * x.ln() - a * x.ln_1p().ln())
                }
            }
            Decay::Finite(values) => values.get(j as usize - 1).map(|v| v.ln()),
        }
    }
}

/// First `count` eigenvalues of `model`, truncated at a finite rank.
pub fn eigenvalues(model: &SpectrumModel, count: usize) -> Result<EigenSequence> {
    if count == 0 {
        return Err(Error::InvalidParameter {
            name: "count",
            value: 0.0,
            reason: "at least one eigenvalue must be requested",
        });
    }
    let decay = model.decay()?;
    let mut values = Vec::with_capacity(count);
    for j in 1..=count as u64 {
        match decay.eigenvalue(j) {
            Some(v) => values.push(v),
            None => break,
        }
    }
    Ok(EigenSequence {
        values,
        tag: model.tag(),
    })
}

/// Tensor-product asymptotics for d factors λ_k ~ c_j·k^{-b}: the product
/// spectrum decays like K·k^{-b}·(log k)^{b(d−1)} with
/// K = (Π c_j)·((d−1)!)^{-b}.
pub fn tensor_asymptotic(c_list: &[f64], b: f64, d_sheet: u32) -> Result<SpectrumModel> {
    if !(b > 1.0) || !b.is_finite() {
        return Err(Error::InvalidParameter {
            name: "b",
            value: b,
            reason: "tensor asymptotics require a common index above 1",
        });
    }
    if d_sheet == 0 || c_list.len() != d_sheet as usize {
        return Err(Error::InvalidParameter {
            name: "d_sheet",
            value: d_sheet as f64,
            reason: "one factor constant is needed per sheet dimension",
        });
    }
    let mut product = 1.0;
    for &cj in c_list {
        check_positive("c_list", cj)?;
        product *= cj;
    }
    Ok(SpectrumModel::RegularVarying {
        c: product * factorial(d_sheet - 1).powf(-b),
        b,
        a: -b * (d_sheet as f64 - 1.0),
    })
}

/// A tail sum Σ_{j>m} λ_j with a rigorous error bound on the value.
#[derive(Debug, Clone, Copy)]
pub struct TailSum {
    pub value: f64,
    pub remainder_bound: f64,
}

const TAIL_J_MAX: u64 = 10_000_000;

/// Σ_{j≥m+1} λ_j. Exact for Brownian motion and explicit lists; for
/// asymptotic models a prefix sum is corrected by Euler–Maclaurin terms,
/// and the bound is the width of the integral sandwich at the cut.
pub fn tail_sum(model: &SpectrumModel, m: u64) -> Result<TailSum> {
    let decay = model.decay()?;
    match decay {
        Decay::ExactBm => {
            let value = trigamma(m as f64 + 0.5) / (PI * PI);
            Ok(TailSum {
                value,
                remainder_bound: 1e-14 * value,
            })
        }
        Decay::Finite(values) => {
            let mut acc = KahanSum::new();
            for &v in values.iter().skip(m as usize) {
                acc.add(v);
            }
            let value = acc.value();
            Ok(TailSum {
                value,
                remainder_bound: 1e-15 * value,
            })
        }
        Decay::Power {
            c,
            b,
            a,
            jstar,
            peak: _,
        } => {
            let mut j_cut = 4096u64.max(2 * (m + 1)).max(jstar + 8);
            let mut acc = KahanSum::new();
            for j in m + 1..=j_cut {
                acc.add(decay.eigenvalue(j).unwrap());
            }
            loop {
                let upper = integral_tail(c, b, a, j_cut as f64);
                let lower = integral_tail(c, b, a, j_cut as f64 + 1.0);
                let width = (upper - lower).max(0.0);
                let x = j_cut as f64 + 1.0;
                let (f0, f1, f3) = power_derivatives(c, b, a, x);
                let value = acc.value() + lower + f0 / 2.0 - f1 / 12.0 + f3 / 720.0;
                if width <= 1e-12 * value || j_cut >= TAIL_J_MAX {
                    return Ok(TailSum {
                        value,
                        remainder_bound: width + 1e-15 * value,
                    });
                }
                let next = (2 * j_cut).min(TAIL_J_MAX);
                for j in j_cut + 1..=next {
                    acc.add(power_value(c, b, a, j));
                }
                j_cut = next;
            }
        }
    }
}

/// f, f′ and f‴ of f(x) = c·x^{-b}·log(x+1)^{-a}, for the Euler–Maclaurin
/// correction terms.
fn power_derivatives(c: f64, b: f64, a: f64, x: f64) -> (f64, f64, f64) {
    let f = c * x.powf(-b) * if a == 0.0 { 1.0 } else { x.ln_1p().powf(-a) };
    let u = 1.0 / x;
    let l = x.ln_1p();
    let p = 1.0 / (x + 1.0);
    let w = p / l;
    let g1 = -b * u - a * w;
    let g2 = b * u * u + a * (w * w + w * p);
    let g3 = -2.0 * b * u * u * u - a * (2.0 * w * w * w + 3.0 * w * w * p + 2.0 * w * p * p);
    let f1 = f * g1;
    let f3 = f * (g3 + 3.0 * g1 * g2 + g1 * g1 * g1);
    (f, f1, f3)
}

/// ∫_X^∞ c·x^{-b}·log(x+1)^{-a} dx for X ≥ 1.
fn integral_tail(c: f64, b: f64, a: f64, x0: f64) -> f64 {
    if a == 0.0 {
        return c * x0.powf(1.0 - b) / (b - 1.0);
    }
    if b > 1.0 {
        // Substituting x = X·e^{t/(b−1)} turns the integral into a
        // Gauss–Laguerre form with the slowly varying weight
        // log(x(t)+1)^{-a}.
        let scale = c * x0.powf(1.0 - b) / (b - 1.0);
        let lx = x0.ln();
        scale
            * gauss_laguerre_48(|t| {
                let s = t / (b - 1.0);
                let l = s + lx + ((-s).exp() / x0).ln_1p();
                l.powf(-a)
            })
    } else {
        // b = 1, a > 1: with y = log(x+1) the main term integrates in
        // closed form and the residue is again a Laguerre integral.
        let y0 = x0.ln_1p();
        let main = c * y0.powf(1.0 - a) / (a - 1.0);
        let correction = c / (x0 + 1.0)
            * gauss_laguerre_48(|t| {
                let y = y0 + t;
                y.powf(-a) / (-(-y).exp_m1())
            });
        main + correction
    }
}

pub mod nystrom {
    //! Midpoint-rule discretization of covariance kernels: an independent
    //! numerical route to the leading eigenvalues.

    use super::*;
    use crate::special::gl16;
    use nalgebra::DMatrix;

    /// Closed-form covariance kernels on [0,1] (or products on [0,1]^d).
    #[derive(Debug, Clone, PartialEq)]
    pub enum CovarianceKernel {
        /// min(s, t).
        BrownianMotion,
        /// min(s, t) − s·t.
        BrownianBridge,
        /// ½(s^{2β} + t^{2β} − |s−t|^{2β}).
        Fbm { beta: f64 },
        /// exp(−a·|s−t|^ρ).
        Fou { a: f64, rho: f64 },
        /// (m!)^{-2} ∫_0^{s∧t} (s−r)^m (t−r)^m dr.
        Ibm { m: u32 },
        /// The constant kernel 1 (a rank-one operator).
        Constant,
        /// Π_j C_j(s_j, t_j) on the product domain.
        Product(Vec<CovarianceKernel>),
    }

    impl CovarianceKernel {
        pub fn validate(&self) -> Result<()> {
            match self {
                CovarianceKernel::Fbm { beta } => {
                    if !(*beta > 0.0 && *beta < 1.0) {
                        return Err(Error::InvalidParameter {
                            name: "beta",
                            value: *beta,
                            reason: "Hurst exponent must lie in the open interval (0, 1)",
                        });
                    }
                }
                CovarianceKernel::Fou { a, rho } => {
                    check_positive("a", *a)?;
                    if !(*rho > 0.0 && *rho < 2.0) {
                        return Err(Error::InvalidParameter {
                            name: "rho",
                            value: *rho,
                            reason: "must lie in the open interval (0, 2)",
                        });
                    }
                }
                CovarianceKernel::Ibm { m } => {
                    if *m == 0 || *m > 15 {
                        return Err(Error::InvalidParameter {
                            name: "m",
                            value: *m as f64,
                            reason: "integration order must be in 1..=15 for exact quadrature",
                        });
                    }
                }
                CovarianceKernel::Product(factors) => {
                    if factors.is_empty() {
                        return Err(Error::InvalidParameter {
                            name: "factors",
                            value: 0.0,
                            reason: "a product kernel needs at least one factor",
                        });
                    }
                    for f in factors {
                        if matches!(f, CovarianceKernel::Product(_)) {
                            return Err(Error::InvalidParameter {
                                name: "factors",
                                value: 0.0,
                                reason: "product kernels cannot be nested",
                            });
                        }
                        f.validate()?;
                    }
                }
                _ => {}
            }
            Ok(())
        }

        /// Evaluate a one-dimensional (non-product) kernel.
        fn eval1(&self, s: f64, t: f64) -> f64 {
            match self {
                CovarianceKernel::BrownianMotion => s.min(t),
                CovarianceKernel::BrownianBridge => s.min(t) - s * t,
                CovarianceKernel::Fbm { beta } => {
                    let e = 2.0 * beta;
                    0.5 * (s.powf(e) + t.powf(e) - (s - t).abs().powf(e))
                }
                CovarianceKernel::Fou { a, rho } => (-a * (s - t).abs().powf(*rho)).exp(),
                CovarianceKernel::Ibm { m } => {
                    let upper = s.min(t);
                    let mi = *m as i32;
                    let norm = factorial(*m).powi(2);
                    gl16(0.0, upper, |r| (s - r).powi(mi) * (t - r).powi(mi)) / norm
                }
                CovarianceKernel::Constant => 1.0,
                CovarianceKernel::Product(_) => unreachable!("products are expanded eigenwise"),
            }
        }
    }

    /// Eigenvalues (descending) of the midpoint-rule discretization with N
    /// points per axis. Product kernels are expanded through the factor
    /// spectra, since the discretized product operator is the Kronecker
    /// product of the factor discretizations.
    pub fn nystrom_eigs(kernel: &CovarianceKernel, grid: usize) -> Result<Vec<f64>> {
        kernel.validate()?;
        if grid < 2 {
            return Err(Error::InvalidParameter {
                name: "grid",
                value: grid as f64,
                reason: "the midpoint grid needs at least 2 points",
            });
        }
        if let CovarianceKernel::Product(factors) = kernel {
            let per_factor: Vec<Vec<f64>> = factors
                .iter()
                .map(|f| nystrom_eigs(f, grid))
                .collect::<Result<_>>()?;
            let total: usize = per_factor.iter().map(|v| v.len()).product();
            if total > 1 << 24 {
                return Err(Error::InvalidParameter {
                    name: "grid",
                    value: grid as f64,
                    reason: "product spectrum too large; reduce the grid",
                });
            }
            let mut products = vec![1.0];
            for evs in &per_factor {
                let mut next = Vec::with_capacity(products.len() * evs.len());
                for p in &products {
                    for ev in evs {
                        next.push(p * ev);
                    }
                }
                products = next;
            }
            products.sort_by(|x, y| y.partial_cmp(x).unwrap());
            return Ok(products);
        }

        let n = grid;
        let point = |i: usize| (i as f64 + 0.5) / n as f64;
        let mat = DMatrix::from_fn(n, n, |i, j| kernel.eval1(point(i), point(j)) / n as f64);
        let mut asym = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                asym = asym.max((mat[(i, j)] - mat[(j, i)]).abs());
            }
        }
        let trace: f64 = (0..n).map(|i| mat[(i, i)]).sum();
        if asym > 1e-12 * trace.abs().max(1.0) {
            return Err(Error::AsymmetricKernel(asym));
        }
        let mut values: Vec<f64> = mat.symmetric_eigen().eigenvalues.iter().copied().collect();
        values.sort_by(|x, y| y.partial_cmp(x).unwrap());
        if let Some(&smallest) = values.last() {
            if smallest < -1e-10 * trace {
                return Err(Error::NotPsd(smallest));
            }
        }
        Ok(values)
    }
}
