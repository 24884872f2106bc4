//! Named process catalog and its command-line string syntax.
//!
//! A [`ProcessSpec`] names a Gaussian process together with its parameters
//! and maps it to the eigenvalue model used by every numeric module, and,
//! where a closed covariance form exists, to the kernel consumed by the
//! grid eigensolver. The string syntax is `name:key=value,…` with `+` as
//! the list separator, e.g. `fou:a=1,rho=0.5` or `ous:a=1+2`.

use crate::error::{Error, Result};
use crate::spectra::nystrom::CovarianceKernel;
use crate::spectra::SpectrumModel;
use std::f64::consts::PI;
use std::fmt;

/// A catalog process with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessSpec {
    /// Standard Brownian motion on [0,1].
    Bm,
    /// Solution of a linear stochastic differential equation driven by
    /// Brownian motion; shares Brownian motion's eigenvalue asymptotics.
    GaussianDiffusion,
    /// Stationary Ornstein–Uhlenbeck process, covariance exp(−a|s−t|).
    Ou { a: f64 },
    /// Fractional Ornstein–Uhlenbeck process, covariance exp(−a|s−t|^ρ).
    Fou { a: f64, rho: f64 },
    /// m-times integrated Brownian motion.
    Ibm { m: u32 },
    /// Fractional Brownian motion with Hurst exponent β.
    Fbm { beta: f64 },
    /// Ornstein–Uhlenbeck sheet on [0,1]^d with one rate per axis.
    Ous { a: Vec<f64> },
    /// Fractional Ornstein–Uhlenbeck sheet with one rate per axis.
    Fous { a: Vec<f64>, rho: f64 },
    /// Fractional Brownian sheet on [0,1]^d.
    Fbs { beta: f64, d: u32 },
    /// Brownian sheet on [0,1]^d.
    Bs { d: u32 },
    /// Brownian sheet pinned to zero on the far faces (bridge factors).
    TuggedBs { d: u32 },
    /// Stationary process with spectral density tail c·λ^{−b}.
    Stationary { c: f64, b: f64 },
    /// Directly parameterized eigenvalues c·j^{−b}·log(j+1)^{−a}.
    RegularVarying { c: f64, b: f64, a: f64 },
    /// A finite, explicitly listed spectrum.
    Explicit { values: Vec<f64> },
}

const MAX_SHEET_DIM: u32 = 64;

fn param_err(text: &str, reason: &'static str) -> Error {
    Error::ProcessParam(text.to_owned(), reason)
}

fn parse_f64(text: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| param_err(text, "expected a decimal number"))
}

fn parse_u32(text: &str, raw: &str) -> Result<u32> {
    raw.trim()
        .parse::<u32>()
        .map_err(|_| param_err(text, "expected a small positive integer"))
}

fn parse_list(text: &str, raw: &str) -> Result<Vec<f64>> {
    raw.split('+').map(|p| parse_f64(text, p)).collect()
}

struct Params<'a> {
    text: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
    used: Vec<bool>,
}

impl<'a> Params<'a> {
    fn parse(text: &'a str, raw: &'a str) -> Result<Self> {
        let mut pairs = Vec::new();
        for piece in raw.split(',') {
            let (key, value) = piece
                .split_once('=')
                .ok_or_else(|| param_err(text, "parameters take the form key=value"))?;
            pairs.push((key.trim(), value.trim()));
        }
        let used = vec![false; pairs.len()];
        Ok(Params { text, pairs, used })
    }

    fn take(&mut self, key: &str) -> Result<&'a str> {
        for (i, &(k, v)) in self.pairs.iter().enumerate() {
            if k == key && !self.used[i] {
                self.used[i] = true;
                return Ok(v);
            }
        }
        Err(param_err(self.text, "a required parameter is missing"))
    }

    fn f64(&mut self, key: &str) -> Result<f64> {
        let raw = self.take(key)?;
        parse_f64(self.text, raw)
    }

    fn u32(&mut self, key: &str) -> Result<u32> {
        let raw = self.take(key)?;
        parse_u32(self.text, raw)
    }

    fn list(&mut self, key: &str) -> Result<Vec<f64>> {
        let raw = self.take(key)?;
        parse_list(self.text, raw)
    }

    fn finish(self) -> Result<()> {
        if self.used.iter().all(|&u| u) {
            Ok(())
        } else {
            Err(param_err(self.text, "unrecognized parameter"))
        }
    }
}

fn check_sheet_dim(text: &str, d: u32) -> Result<u32> {
    if d == 0 || d > MAX_SHEET_DIM {
        return Err(param_err(text, "sheet dimension must be in 1..=64"));
    }
    Ok(d)
}

impl ProcessSpec {
    /// Parse the `name:key=value,…` syntax. The full catalog:
    /// `bm`, `gaussian-diffusion`, `ou:a=`, `fou:a=,rho=`, `ibm:m=`,
    /// `fbm:beta=`, `ous:a=v+v+…`, `fous:a=v+…,rho=`, `fbs:beta=,d=`,
    /// `bs:d=`, `tugged-bs:d=`, `stationary:c=,b=`, `rv:c=,b=,a=`,
    /// `explicit:v,v,…`.
    pub fn parse(text: &str) -> Result<ProcessSpec> {
        let text = text.trim();
        let (name, rest) = match text.split_once(':') {
            Some((n, r)) => (n.trim(), Some(r)),
            None => (text, None),
        };
        let spec = match (name, rest) {
            ("bm", None) => ProcessSpec::Bm,
            ("gaussian-diffusion", None) => ProcessSpec::GaussianDiffusion,
            ("ou", Some(r)) => {
                let mut p = Params::parse(text, r)?;
                let a = p.f64("a")?;
                p.finish()?;
                ProcessSpec::Ou { a }
            }
            ("fou", Some(r)) => {
                let mut p = Params::parse(text, r)?;
                let a = p.f64("a")?;
                let rho = p.f64("rho")?;
                p.finish()?;
                ProcessSpec::Fou { a, rho }
            }
            ("ibm", Some(r)) => {
                let mut p = Params::parse(text, r)?;
                let m = p.u32("m")?;
                p.finish()?;
                ProcessSpec::Ibm { m }
            }
            ("fbm", Some(r)) => {
                let mut p = Params::parse(text, r)?;
                let beta = p.f64("beta")?;
                p.finish()?;
                ProcessSpec::Fbm { beta }
            }
            ("ous", Some(r)) => {
                let mut p = Params::parse(text, r)?;
                let a = p.list("a")?;
                p.finish()?;
                check_sheet_dim(text, a.len() as u32)?;
                ProcessSpec::Ous { a }
            }
            ("fous", Some(r)) => {
                let mut p = Params::parse(text, r)?;
                let a = p.list("a")?;
                let rho = p.f64("rho")?;
                p.finish()?;
                check_sheet_dim(text, a.len() as u32)?;
                ProcessSpec::Fous { a, rho }
            }
            ("fbs", Some(r)) => {
                let mut p = Params::parse(text, r)?;
                let beta = p.f64("beta")?;
                let d = p.u32("d")?;
                p.finish()?;
                ProcessSpec::Fbs {
                    beta,
                    d: check_sheet_dim(text, d)?,
                }
            }
            ("bs", Some(r)) => {
                let mut p = Params::parse(text, r)?;
                let d = p.u32("d")?;
                p.finish()?;
                ProcessSpec::Bs {
                    d: check_sheet_dim(text, d)?,
                }
            }
            ("tugged-bs", Some(r)) => {
                let mut p = Params::parse(text, r)?;
                let d = p.u32("d")?;
                p.finish()?;
                ProcessSpec::TuggedBs {
                    d: check_sheet_dim(text, d)?,
                }
            }
            ("stationary", Some(r)) => {
                let mut p = Params::parse(text, r)?;
                let c = p.f64("c")?;
                let b = p.f64("b")?;
                p.finish()?;
                ProcessSpec::Stationary { c, b }
            }
            ("rv", Some(r)) => {
                let mut p = Params::parse(text, r)?;
                let c = p.f64("c")?;
                let b = p.f64("b")?;
                let a = p.f64("a")?;
                p.finish()?;
                ProcessSpec::RegularVarying { c, b, a }
            }
            ("explicit", Some(r)) => {
                let values = r
                    .split(',')
                    .map(|v| parse_f64(text, v))
                    .collect::<Result<Vec<f64>>>()?;
                ProcessSpec::Explicit { values }
            }
            _ => return Err(Error::UnknownProcess(text.to_owned())),
        };
        spec.spectrum()?.validate()?;
        Ok(spec)
    }

    /// The catalog name without parameters.
    pub fn name(&self) -> &'static str {
        match self {
            ProcessSpec::Bm => "bm",
            ProcessSpec::GaussianDiffusion => "gaussian-diffusion",
            ProcessSpec::Ou { .. } => "ou",
            ProcessSpec::Fou { .. } => "fou",
            ProcessSpec::Ibm { .. } => "ibm",
            ProcessSpec::Fbm { .. } => "fbm",
            ProcessSpec::Ous { .. } => "ous",
            ProcessSpec::Fous { .. } => "fous",
            ProcessSpec::Fbs { .. } => "fbs",
            ProcessSpec::Bs { .. } => "bs",
            ProcessSpec::TuggedBs { .. } => "tugged-bs",
            ProcessSpec::Stationary { .. } => "stationary",
            ProcessSpec::RegularVarying { .. } => "rv",
            ProcessSpec::Explicit { .. } => "explicit",
        }
    }

    /// The eigenvalue model backing this process. One-dimensional sheets
    /// collapse to their factor so exact forms are kept where they exist.
    pub fn spectrum(&self) -> Result<SpectrumModel> {
        let model = match self {
            ProcessSpec::Bm => SpectrumModel::ExactBm,
            ProcessSpec::GaussianDiffusion => SpectrumModel::GaussianDiffusion,
            ProcessSpec::Ou { a } => SpectrumModel::Fou { a: *a, rho: 1.0 },
            ProcessSpec::Fou { a, rho } => SpectrumModel::Fou { a: *a, rho: *rho },
            ProcessSpec::Ibm { m } => SpectrumModel::Ibm { m: *m },
            ProcessSpec::Fbm { beta } => SpectrumModel::Fbm { beta: *beta },
            ProcessSpec::Ous { a } => {
                sheet(a.iter().map(|&aj| SpectrumModel::Fou { a: aj, rho: 1.0 }))
            }
            ProcessSpec::Fous { a, rho } => {
                sheet(a.iter().map(|&aj| SpectrumModel::Fou { a: aj, rho: *rho }))
            }
            ProcessSpec::Fbs { beta, d } => {
                sheet((0..*d).map(|_| SpectrumModel::Fbm { beta: *beta }))
            }
            ProcessSpec::Bs { d } => sheet((0..*d).map(|_| SpectrumModel::ExactBm)),
            ProcessSpec::TuggedBs { d } => sheet((0..*d).map(|_| bridge_spectrum())),
            ProcessSpec::Stationary { c, b } => SpectrumModel::StationarySpectral { c: *c, b: *b },
            ProcessSpec::RegularVarying { c, b, a } => SpectrumModel::RegularVarying {
                c: *c,
                b: *b,
                a: *a,
            },
            ProcessSpec::Explicit { values } => SpectrumModel::ExplicitList {
                values: values.clone(),
            },
        };
        model.validate()?;
        Ok(model)
    }

    /// The covariance kernel for the grid eigensolver, when the process
    /// has a closed covariance form.
    pub fn kernel(&self) -> Option<CovarianceKernel> {
        match self {
            ProcessSpec::Bm => Some(CovarianceKernel::BrownianMotion),
            ProcessSpec::GaussianDiffusion => None,
            ProcessSpec::Ou { a } => Some(CovarianceKernel::Fou { a: *a, rho: 1.0 }),
            ProcessSpec::Fou { a, rho } => Some(CovarianceKernel::Fou { a: *a, rho: *rho }),
            ProcessSpec::Ibm { m } => Some(CovarianceKernel::Ibm { m: *m }),
            ProcessSpec::Fbm { beta } => Some(CovarianceKernel::Fbm { beta: *beta }),
            ProcessSpec::Ous { a } => Some(product(
                a.iter()
                    .map(|&aj| CovarianceKernel::Fou { a: aj, rho: 1.0 }),
            )),
            ProcessSpec::Fous { a, rho } => Some(product(
                a.iter()
                    .map(|&aj| CovarianceKernel::Fou { a: aj, rho: *rho }),
            )),
            ProcessSpec::Fbs { beta, d } => Some(product(
                (0..*d).map(|_| CovarianceKernel::Fbm { beta: *beta }),
            )),
            ProcessSpec::Bs { d } => {
                Some(product((0..*d).map(|_| CovarianceKernel::BrownianMotion)))
            }
            ProcessSpec::TuggedBs { d } => {
                Some(product((0..*d).map(|_| CovarianceKernel::BrownianBridge)))
            }
            ProcessSpec::Stationary { .. }
            | ProcessSpec::RegularVarying { .. }
            | ProcessSpec::Explicit { .. } => None,
        }
    }
}

/// Brownian bridge eigenvalues (πk)^{−2}, written as a power law, which
/// the formula reproduces exactly since the log modulation is absent.
fn bridge_spectrum() -> SpectrumModel {
    SpectrumModel::RegularVarying {
        c: PI.powi(-2),
        b: 2.0,
        a: 0.0,
    }
}

fn sheet<I: Iterator<Item = SpectrumModel>>(factors: I) -> SpectrumModel {
    let mut factors: Vec<SpectrumModel> = factors.collect();
    if factors.len() == 1 {
        factors.pop().unwrap()
    } else {
        SpectrumModel::TensorSheet { factors }
    }
}

fn product<I: Iterator<Item = CovarianceKernel>>(factors: I) -> CovarianceKernel {
    let mut factors: Vec<CovarianceKernel> = factors.collect();
    if factors.len() == 1 {
        factors.pop().unwrap()
    } else {
        CovarianceKernel::Product(factors)
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, values: &[f64], sep: char) -> fmt::Result {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            write!(f, "{sep}")?;
        }
        write!(f, "{v}")?;
    }
    Ok(())
}

impl fmt::Display for ProcessSpec {
    /// Round-trips through [`ProcessSpec::parse`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessSpec::Bm | ProcessSpec::GaussianDiffusion => write!(f, "{}", self.name()),
            ProcessSpec::Ou { a } => write!(f, "ou:a={a}"),
            ProcessSpec::Fou { a, rho } => write!(f, "fou:a={a},rho={rho}"),
            ProcessSpec::Ibm { m } => write!(f, "ibm:m={m}"),
            ProcessSpec::Fbm { beta } => write!(f, "fbm:beta={beta}"),
            ProcessSpec::Ous { a } => {
                write!(f, "ous:a=")?;
                write_list(f, a, '+')
            }
            ProcessSpec::Fous { a, rho } => {
                write!(f, "fous:a=")?;
                write_list(f, a, '+')?;
                write!(f, ",rho={rho}")
            }
            ProcessSpec::Fbs { beta, d } => write!(f, "fbs:beta={beta},d={d}"),
            ProcessSpec::Bs { d } => write!(f, "bs:d={d}"),
            ProcessSpec::TuggedBs { d } => write!(f, "tugged-bs:d={d}"),
            ProcessSpec::Stationary { c, b } => write!(f, "stationary:c={c},b={b}"),
            ProcessSpec::RegularVarying { c, b, a } => write!(f, "rv:c={c},b={b},a={a}"),
            ProcessSpec::Explicit { values } => {
                write!(f, "explicit:")?;
                write_list(f, values, ',')
            }
        }
    }
}
