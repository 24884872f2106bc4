//! Optimal quantization of Gaussian processes.
//!
//! The crate builds product quantizers for Gaussian processes from their
//! Karhunen–Loève eigenvalue sequences, evaluates the resulting distortion
//! exactly, brackets the best achievable distortion from both sides, computes
//! the Gaussian ε-entropy by water-filling, and provides the sharp
//! high-resolution constants for a catalog of processes (Brownian motion and
//! sheets, Ornstein–Uhlenbeck families, integrated and fractional Brownian
//! motion). Monte Carlo samplers and a dense numerical eigensolver serve as
//! independent oracles for every closed form.
//!
//! Modules, bottom up:
//!
//! * [`special`]: erf/erfc, normal CDF and quantile, trigamma, quadrature.
//! * [`scalar`]: optimal k-level quantizers of N(0,1) with exact distortion.
//! * [`vq`]: trained codebooks for N(0,I_d) with error bars.
//! * [`spectra`]: eigenvalue models, analytic tail sums, covariance kernels,
//!   and the grid eigensolver oracle.
//! * [`allocation`]: level allocation across coordinates and the
//!   distortion bound pair.
//! * [`rd`]: water-filling (rate, water level, reproducing distribution),
//!   the distortion-rate inverse, and covering-number brackets.
//! * [`asymptotics`]: sharp constants and rate laws per process.
//! * [`mc`]: path sampling, empirical distortion, small-ball estimates.
//! * [`process`]: the named process catalog and its string syntax.

#![allow(clippy::excessive_precision)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod asymptotics;
pub mod error;
pub mod mc;
pub mod process;
pub mod rd;
pub mod scalar;
pub mod special;
pub mod spectra;
pub mod vq;

pub use error::{Error, Result};

/// Book chapters double as doc-tests so every snippet in the guide compiles
/// and runs against the current API.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(intro, "../../../book/src/introduction.md");
    chapter!(scalar, "../../../book/src/scalar-quantizers.md");
    chapter!(spectra, "../../../book/src/spectra.md");
    chapter!(allocation, "../../../book/src/allocation.md");
    chapter!(waterfilling, "../../../book/src/water-filling.md");
    chapter!(constants, "../../../book/src/sharp-constants.md");
    chapter!(montecarlo, "../../../book/src/monte-carlo.md");
    chapter!(cli, "../../../book/src/cli.md");
}
