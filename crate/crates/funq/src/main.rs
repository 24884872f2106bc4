//! Command-line surface over the library: catalog processes in, tables out.
//!
//! Every artifact starts with a metadata header carrying the tool version,
//! the seed, the model parameters, and the exactness flags, so any table
//! can be regenerated from its own header. Floats are printed with 17
//! significant digits. Grids are never truncated: a grid that cannot be
//! honored in full is an error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use clap::{Parser, Subcommand, ValueEnum};
use funq::allocation::{
    allocate, distortion_lower_bound, distortion_upper_bound, plan_distortion, Exactness,
    ProductPlan,
};
use funq::asymptotics::{power_triple, process_constant, RateKind};
use funq::error::Error;
use funq::mc;
use funq::process::ProcessSpec;
use funq::rd;
use funq::scalar;
use funq::spectra::{self, SpectrumModel, SpectrumTag};
use funq::vq::{self, VectorQuantizer};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

const SCHEMA_VERSION: &str = "v1";
/// Largest codebook (points × coordinates) the design command will print.
const MAX_EMITTED_FLOATS: u64 = 1 << 22;

#[derive(Parser)]
#[command(
    name = "funq",
    version,
    about = "Product quantizers, water-filling curves, and sharp constants for Gaussian processes"
)]
struct Cli {
    /// Output format; each command defaults to its natural one.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write the artifact to this path instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Exact closed form; an error when the process has none.
    Exact,
    /// Closed form where available, asymptotic head elsewhere.
    Auto,
    /// Nyström quadrature on the covariance kernel.
    Nystrom,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal scalar quantizer of N(0,1).
    Scalar {
        /// Number of codepoints.
        #[arg(long)]
        levels: u32,
    },
    /// Train a block codebook for N(0, I_d).
    Vq {
        #[arg(long)]
        dim: u32,
        #[arg(long)]
        levels: u64,
        /// Training draws consumed by the mini-batch phase.
        #[arg(long, default_value_t = vq::DEFAULT_TRAIN_SAMPLES)]
        samples: u64,
    },
    /// Leading eigenvalues of a catalog process.
    Eigs {
        /// Process, as name:key=value,… (see the guide for the catalog).
        #[arg(long)]
        process: String,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        /// Quadrature grid size for the Nyström method.
        #[arg(long, default_value_t = 500)]
        grid: usize,
    },
    /// Allocate quantization levels across blocks for a budget of n points.
    Design {
        #[arg(long)]
        process: String,
        /// Log of the codebook size budget.
        #[arg(long, required_unless_present = "n", conflicts_with = "n")]
        log_n: Option<f64>,
        /// Codebook size budget; shorthand for --log-n ln(N).
        #[arg(long)]
        n: Option<u64>,
        #[arg(long, default_value_t = 1)]
        block_dim: u32,
        /// Append one row per codepoint, in path-coefficient coordinates.
        #[arg(long)]
        emit_codebook: bool,
    },
    /// Water-filling rate-distortion curve, or its inverse.
    Rd {
        #[arg(long)]
        process: String,
        /// ε values: start:stop:steps in log space, or comma-separated
        /// literals (sqrt2 is accepted).
        #[arg(long, required_unless_present = "invert", conflicts_with = "invert")]
        eps_grid: Option<String>,
        /// Solve R(ε) = rate for ε instead of sweeping a grid.
        #[arg(long, requires = "rate")]
        invert: bool,
        /// Target rate in nats for --invert.
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Sharp asymptotic constants of a catalog process.
    Constants {
        #[arg(long)]
        process: String,
    },
    /// Predicted law against computed bounds over a log n grid.
    Compare {
        #[arg(long)]
        process: String,
        /// log n values: start:stop:steps in log space, or comma-separated.
        #[arg(long)]
        log_n_grid: String,
    },
    /// Monte Carlo estimates.
    Mc {
        #[command(subcommand)]
        job: McJob,
    },
}

#[derive(Subcommand)]
enum McJob {
    /// Empirical distortion of a designed plan over sampled paths.
    Distortion {
        #[arg(long)]
        process: String,
        #[arg(long, required_unless_present = "n", conflicts_with = "n")]
        log_n: Option<f64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long, default_value_t = 1)]
        block_dim: u32,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        /// Coordinates sampled per path; defaults to the plan's quantized
        /// count. The tail past the truncation is integrated analytically,
        /// so extra coordinates add variance, not accuracy.
        #[arg(long)]
        truncation: Option<u64>,
    },
    /// Plug-in estimate of the small-ball function −log P(‖X‖ ≤ ε).
    Smallball {
        #[arg(long)]
        process: String,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 200_000)]
        samples: u64,
        /// Coordinates sampled per path; defaults to the smallest value
        /// whose omitted tail is within ε²/1000.
        #[arg(long)]
        truncation: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = cli.format.unwrap_or(match &cli.command {
        Command::Eigs { .. } | Command::Compare { .. } => Format::Csv,
        Command::Rd { invert, .. } => {
            if *invert {
                Format::Json
            } else {
                Format::Csv
            }
        }
        _ => Format::Json,
    });
    let table = match run(&cli) {
        Ok(table) => table,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let rendered = table.render(format);
    let result = match &cli.output {
        Some(path) => std::fs::write(path, rendered).map_err(Error::from),
        None => {
            print!("{rendered}");
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UnknownProcess(_) | Error::ProcessParam(..) => 2,
        Error::MalformedGrid(..) => 3,
        Error::BiasBudget { .. } => 4,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<Table, Error> {
    match &cli.command {
        Command::Scalar { levels } => run_scalar(*levels),
        Command::Vq {
            dim,
            levels,
            samples,
        } => run_vq(*dim, *levels, *samples, cli.seed),
        Command::Eigs {
            process,
            count,
            method,
            grid,
        } => run_eigs(process, *count, *method, *grid),
        Command::Design {
            process,
            log_n,
            n,
            block_dim,
            emit_codebook,
        } => run_design(
            process,
            budget(*log_n, *n)?,
            *block_dim,
            *emit_codebook,
            cli.seed,
        ),
        Command::Rd {
            process,
            eps_grid,
            invert,
            rate,
        } => {
            if *invert {
                run_rd_invert(process, rate.unwrap())
            } else {
                run_rd_grid(process, eps_grid.as_deref().unwrap())
            }
        }
        Command::Constants { process } => run_constants(process),
        Command::Compare {
            process,
            log_n_grid,
        } => run_compare(process, log_n_grid),
        Command::Mc { job } => match job {
            McJob::Distortion {
                process,
                log_n,
                n,
                block_dim,
                samples,
                truncation,
            } => run_mc_distortion(
                process,
                budget(*log_n, *n)?,
                *block_dim,
                *samples,
                *truncation,
                cli.seed,
            ),
            McJob::Smallball {
                process,
                eps,
                samples,
                truncation,
            } => run_mc_smallball(process, *eps, *samples, *truncation, cli.seed),
        },
    }
}

fn budget(log_n: Option<f64>, n: Option<u64>) -> Result<f64, Error> {
    match (log_n, n) {
        (Some(x), None) => Ok(x),
        (None, Some(0)) => Err(Error::InvalidParameter {
            name: "n",
            value: 0.0,
            reason: "the codebook budget must be at least 1",
        }),
        (None, Some(n)) => Ok((n as f64).ln()),
        _ => unreachable!("clap enforces exactly one of --log-n and --n"),
    }
}

fn parse_process(text: &str) -> Result<(ProcessSpec, SpectrumModel), Error> {
    let spec = ProcessSpec::parse(text).map_err(|e| match e {
        Error::InvalidParameter { reason, .. } => Error::ProcessParam(text.to_owned(), reason),
        Error::DivergentTail { .. } => {
            Error::ProcessParam(text.to_owned(), "the eigenvalue tail is not summable")
        }
        other => other,
    })?;
    let model = spec.spectrum()?;
    Ok((spec, model))
}

fn spectrum_flag(model: &SpectrumModel) -> Result<&'static str, Error> {
    Ok(match spectra::eigenvalues(model, 1)?.tag {
        SpectrumTag::Exact => "exact",
        SpectrumTag::Asymptotic => "asymptotic",
    })
}

/// Parse `start:stop:steps` (log-spaced) or a comma-separated value list.
/// The token `sqrt2` is accepted as a value.
fn parse_grid(text: &str) -> Result<Vec<f64>, Error> {
    let t = text.trim();
    if t.is_empty() {
        return Err(Error::MalformedGrid(text.to_owned(), "empty grid"));
    }
    if t.contains(':') {
        let parts: Vec<&str> = t.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::MalformedGrid(
                text.to_owned(),
                "expected start:stop:steps",
            ));
        }
        let start = grid_value(text, parts[0])?;
        let stop = grid_value(text, parts[1])?;
        let steps: u64 = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::MalformedGrid(text.to_owned(), "steps must be an integer"))?;
        if steps == 0 {
            return Err(Error::MalformedGrid(
                text.to_owned(),
                "steps must be at least 1",
            ));
        }
        if steps == 1 {
            if start != stop {
                return Err(Error::MalformedGrid(
                    text.to_owned(),
                    "one step cannot span distinct endpoints",
                ));
            }
            return Ok(vec![start]);
        }
        if steps > 1_000_000 {
            return Err(Error::MalformedGrid(
                text.to_owned(),
                "more than a million grid points",
            ));
        }
        let (la, lb) = (start.ln(), stop.ln());
        Ok((0..steps)
            .map(|i| (la + (lb - la) * i as f64 / (steps - 1) as f64).exp())
            .collect())
    } else {
        t.split(',').map(|v| grid_value(text, v)).collect()
    }
}

fn grid_value(grid: &str, token: &str) -> Result<f64, Error> {
    let v = match token.trim() {
        "sqrt2" => std::f64::consts::SQRT_2,
        other => other
            .parse::<f64>()
            .map_err(|_| Error::MalformedGrid(grid.to_owned(), "unparsable grid value"))?,
    };
    if !v.is_finite() || !(v > 0.0) {
        return Err(Error::MalformedGrid(
            grid.to_owned(),
            "grid values must be positive and finite",
        ));
    }
    Ok(v)
}

fn run_scalar(levels: u32) -> Result<Table, Error> {
    let q = scalar::lloyd_1d(levels, scalar::DEFAULT_TOL, scalar::DEFAULT_MAX_ITER)?;
    let mut table = Table::new("scalar");
    table.meta("levels", Cell::Int(levels as u64));
    table.meta("distortion", Cell::Num(q.distortion));
    table.meta("stationarity_residual", Cell::Num(q.stationarity_residual));
    table.columns(vec![
        "index".into(),
        "codepoint".into(),
        "threshold_lo".into(),
        "threshold_hi".into(),
    ]);
    for (i, &a) in q.codepoints.iter().enumerate() {
        table.row(vec![
            Cell::Int(i as u64 + 1),
            Cell::Num(a),
            Cell::Num(q.thresholds[i]),
            Cell::Num(q.thresholds[i + 1]),
        ]);
    }
    Ok(table)
}

fn run_vq(dim: u32, levels: u64, samples: u64, seed: u64) -> Result<Table, Error> {
    let (q, cache) = cached_vq(dim, levels, samples, seed)?;
    let mut table = Table::new("vq");
    table.meta("dim", Cell::Int(dim as u64));
    table.meta("levels", Cell::Int(levels));
    table.meta("train_samples", Cell::Int(samples));
    table.meta("seed", Cell::Int(seed));
    table.meta("cache", Cell::Text(cache.into()));
    table.meta("distortion", Cell::Num(q.distortion_estimate.value));
    table.meta("stderr", Cell::Num(q.distortion_estimate.stderr));
    table.meta("eval_samples", Cell::Int(q.distortion_estimate.samples));
    table.meta("reseeds", Cell::Int(q.reseeds as u64));
    let mut cols = vec!["index".to_owned()];
    for j in 1..=dim {
        cols.push(format!("x{j}"));
    }
    table.columns(cols);
    for i in 0..levels as usize {
        let mut row = vec![Cell::Int(i as u64 + 1)];
        for j in 0..dim as usize {
            row.push(Cell::Num(q.codepoints[i * dim as usize + j]));
        }
        table.row(row);
    }
    Ok(table)
}

fn run_eigs(process: &str, count: usize, method: Method, grid: usize) -> Result<Table, Error> {
    let (spec, model) = parse_process(process)?;
    if count == 0 {
        return Err(Error::InvalidParameter {
            name: "count",
            value: 0.0,
            reason: "at least one eigenvalue must be requested",
        });
    }
    let mut table = Table::new("eigs");
    table.meta("process", Cell::Text(spec.to_string()));
    table.meta("count", Cell::Int(count as u64));
    table.columns(vec!["index".into(), "eigenvalue".into(), "method".into()]);
    let (values, tag): (Vec<f64>, &str) = match method {
        Method::Nystrom => {
            let kernel = spec.kernel().ok_or(Error::InvalidParameter {
                name: "method",
                value: 0.0,
                reason: "this process has no closed-form covariance to discretize",
            })?;
            if grid < count {
                return Err(Error::InvalidParameter {
                    name: "grid",
                    value: grid as f64,
                    reason: "the quadrature grid must be at least as large as count",
                });
            }
            table.meta("grid", Cell::Int(grid as u64));
            let eigs = spectra::nystrom::nystrom_eigs(&kernel, grid)?;
            (eigs[..count].to_vec(), "nystrom")
        }
        Method::Exact | Method::Auto => {
            let seq = spectra::eigenvalues(&model, count)?;
            let tag = match seq.tag {
                SpectrumTag::Exact => "exact",
                SpectrumTag::Asymptotic => "asymptotic",
            };
            if method == Method::Exact && seq.tag != SpectrumTag::Exact {
                return Err(Error::InvalidParameter {
                    name: "method",
                    value: 0.0,
                    reason: "this process has no exact spectrum; use auto or nystrom",
                });
            }
            (seq.values, tag)
        }
    };
    table.meta("method", Cell::Text(tag.into()));
    for (i, v) in values.iter().enumerate() {
        table.row(vec![
            Cell::Int(i as u64 + 1),
            Cell::Num(*v),
            Cell::Text(tag.into()),
        ]);
    }
    Ok(table)
}

fn run_design(
    process: &str,
    log_n: f64,
    block_dim: u32,
    emit_codebook: bool,
    seed: u64,
) -> Result<Table, Error> {
    let (spec, model) = parse_process(process)?;
    let plan = allocate(&model, log_n, block_dim)?;
    let cache = warm_plan_blocks(&plan, seed)?;
    let dist = plan_distortion(&plan, &model, seed)?;
    let lower = distortion_lower_bound(&model, log_n)?;
    let mut table = Table::new("design");
    table.meta("process", Cell::Text(spec.to_string()));
    table.meta("spectrum", Cell::Text(spectrum_flag(&model)?.into()));
    table.meta("log_n", Cell::Num(log_n));
    table.meta("block_dim", Cell::Int(block_dim as u64));
    table.meta("seed", Cell::Int(seed));
    if let Some(c) = cache {
        table.meta("cache", Cell::Text(c.into()));
    }
    table.meta("m", Cell::Int(plan.m));
    table.meta("levels", Cell::Ints(plan.levels.clone()));
    table.meta(
        "exactness",
        Cell::Text(
            match plan.exactness {
                Exactness::Exact => "exact",
                Exactness::ApproximateUpper => "approximate-upper",
            }
            .into(),
        ),
    );
    table.meta("tail", Cell::Num(dist.tail));
    table.meta("quant", Cell::Num(dist.quant));
    table.meta("total", Cell::Num(dist.total));
    if let Some(se) = dist.stderr {
        table.meta("stderr", Cell::Num(se));
    }
    table.meta("lower_bound", Cell::Num(lower));
    if block_dim == 1 {
        table.meta(
            "upper_bound",
            Cell::Num(distortion_upper_bound(&model, log_n, 1, scalar::C1)?),
        );
    }
    if emit_codebook {
        emit_plan_codebook(&mut table, &plan, seed)?;
    } else {
        table.columns(vec!["block".into(), "level".into(), "block_eig".into()]);
        for (w, (&level, &eig)) in plan.levels.iter().zip(&plan.block_eigs).enumerate() {
            table.row(vec![
                Cell::Int(w as u64 + 1),
                Cell::Int(level),
                Cell::Num(eig),
            ]);
        }
    }
    Ok(table)
}

fn emit_plan_codebook(table: &mut Table, plan: &ProductPlan, seed: u64) -> Result<(), Error> {
    let d = plan.block_dim as usize;
    let points: u64 = plan.levels.iter().sum();
    if points.saturating_mul(d as u64) > MAX_EMITTED_FLOATS {
        return Err(Error::InvalidParameter {
            name: "emit_codebook",
            value: points as f64,
            reason: "codebook too large to materialize; lower log n",
        });
    }
    let mut cols = vec![
        "block".to_owned(),
        "level".to_owned(),
        "block_eig".to_owned(),
        "point".to_owned(),
    ];
    for j in 1..=d {
        cols.push(format!("x{j}"));
    }
    table.columns(cols);
    for (w, (&level, &eig)) in plan.levels.iter().zip(&plan.block_eigs).enumerate() {
        let root = eig.sqrt();
        let block_points: Vec<f64> = if level == 1 {
            vec![0.0; d]
        } else if d == 1 {
            let q = scalar::lloyd_1d(level as u32, scalar::DEFAULT_TOL, scalar::DEFAULT_MAX_ITER)?;
            q.codepoints.iter().map(|&a| root * a).collect()
        } else {
            let q = vq::block_distortion(plan.block_dim, level, seed)?;
            q.codepoints.iter().map(|&a| root * a).collect()
        };
        for p in 0..level as usize {
            let mut row = vec![
                Cell::Int(w as u64 + 1),
                Cell::Int(level),
                Cell::Num(eig),
                Cell::Int(p as u64 + 1),
            ];
            for j in 0..d {
                row.push(Cell::Num(block_points[p * d + j]));
            }
            table.row(row);
        }
    }
    Ok(())
}

fn run_rd_grid(process: &str, grid: &str) -> Result<Table, Error> {
    let (spec, model) = parse_process(process)?;
    let eps_values = parse_grid(grid)?;
    let triple = power_triple(&model).ok();
    let mut table = Table::new("rd");
    table.meta("process", Cell::Text(spec.to_string()));
    table.meta("spectrum", Cell::Text(spectrum_flag(&model)?.into()));
    table.meta("eps_grid", Cell::Text(grid.trim().into()));
    if let Some((c, b, a)) = triple {
        table.meta("c", Cell::Num(c));
        table.meta("b", Cell::Num(b));
        table.meta("a", Cell::Num(a));
    }
    table.columns(vec![
        "eps".into(),
        "r".into(),
        "theta".into(),
        "rate".into(),
        "rate_asymptotic".into(),
        "ratio".into(),
    ]);
    for &eps in &eps_values {
        let solution = rd::waterfill(&model, eps)?;
        let rate = solution.rate();
        let (r, theta) = match solution.active() {
            Some(s) => (s.r, Cell::Num(s.theta)),
            None => (0, Cell::Empty),
        };
        let asymptotic = triple
            .and_then(|(c, b, a)| rd::rd_asymptotic(c, b, a, eps).ok())
            .filter(|x| x.is_finite() && *x > 0.0);
        let (asym_cell, ratio_cell) = match asymptotic {
            Some(x) if rate > 0.0 => (Cell::Num(x), Cell::Num(rate / x)),
            Some(x) => (Cell::Num(x), Cell::Empty),
            None => (Cell::Empty, Cell::Empty),
        };
        table.row(vec![
            Cell::Num(eps),
            Cell::Int(r),
            theta,
            Cell::Num(rate),
            asym_cell,
            ratio_cell,
        ]);
    }
    Ok(table)
}

fn run_rd_invert(process: &str, rate: f64) -> Result<Table, Error> {
    let (spec, model) = parse_process(process)?;
    let eps = rd::distortion_rate(&model, rate)?;
    let solution = rd::waterfill(&model, eps)?;
    let mut table = Table::new("rd-invert");
    table.meta("process", Cell::Text(spec.to_string()));
    table.meta("spectrum", Cell::Text(spectrum_flag(&model)?.into()));
    table.columns(vec![
        "rate".into(),
        "eps".into(),
        "r".into(),
        "theta".into(),
    ]);
    let (r, theta) = match solution.active() {
        Some(s) => (s.r, Cell::Num(s.theta)),
        None => (0, Cell::Empty),
    };
    table.row(vec![Cell::Num(rate), Cell::Num(eps), Cell::Int(r), theta]);
    Ok(table)
}

fn run_constants(process: &str) -> Result<Table, Error> {
    let (spec, model) = parse_process(process)?;
    let law = process_constant(&spec)?;
    let (c, b, a) = power_triple(&model)?;
    let (p, q) = law.exponents();
    let mut table = Table::new("constants");
    table.meta("process", Cell::Text(spec.to_string()));
    table.meta(
        "family",
        Cell::Text(
            match law.kind {
                RateKind::IndexMinusOne { .. } => "index-minus-one",
                RateKind::IndexB { .. } => "index-b",
            }
            .into(),
        ),
    );
    table.meta("c", Cell::Num(c));
    table.meta("b", Cell::Num(b));
    table.meta("a", Cell::Num(a));
    table.columns(vec![
        "k_sharp".into(),
        "k_spectral".into(),
        "log_exponent".into(),
        "loglog_exponent".into(),
        "scalar_ratio_bound".into(),
    ]);
    table.row(vec![
        Cell::Num(law.k_sharp),
        Cell::Num(law.k_spectral),
        Cell::Num(p),
        Cell::Num(q),
        Cell::Num(law.scalar_ratio_bound),
    ]);
    Ok(table)
}

fn run_compare(process: &str, grid: &str) -> Result<Table, Error> {
    let (spec, model) = parse_process(process)?;
    let law = process_constant(&spec)?;
    let grid_values = parse_grid(grid)?;
    if grid_values.iter().any(|&x| x <= 1.0) {
        return Err(Error::MalformedGrid(
            grid.to_owned(),
            "the sharp law needs every log n value to exceed 1",
        ));
    }
    let mut table = Table::new("compare");
    table.meta("process", Cell::Text(spec.to_string()));
    table.meta("spectrum", Cell::Text(spectrum_flag(&model)?.into()));
    table.meta("log_n_grid", Cell::Text(grid.trim().into()));
    table.meta("k_sharp", Cell::Num(law.k_sharp));
    table.meta("c1", Cell::Num(scalar::C1));
    table.meta("exactness", Cell::Text("exact".into()));
    table.columns(vec![
        "log_n".into(),
        "m".into(),
        "predicted_en".into(),
        "lower_en".into(),
        "plan_en".into(),
        "upper_en".into(),
        "lower_over_predicted".into(),
        "plan_over_lower".into(),
        "upper_over_plan".into(),
    ]);
    for &log_n in &grid_values {
        let predicted = law.predicted_en(log_n)?;
        let lower = distortion_lower_bound(&model, log_n)?.sqrt();
        let plan = allocate(&model, log_n, 1)?;
        let exact = plan_distortion(&plan, &model, 0)?.total.sqrt();
        let upper = distortion_upper_bound(&model, log_n, 1, scalar::C1)?.sqrt();
        table.row(vec![
            Cell::Num(log_n),
            Cell::Int(plan.m),
            Cell::Num(predicted),
            Cell::Num(lower),
            Cell::Num(exact),
            Cell::Num(upper),
            Cell::Num(lower / predicted),
            Cell::Num(exact / lower),
            Cell::Num(upper / exact),
        ]);
    }
    Ok(table)
}

fn run_mc_distortion(
    process: &str,
    log_n: f64,
    block_dim: u32,
    samples: u64,
    truncation: Option<u64>,
    seed: u64,
) -> Result<Table, Error> {
    let (spec, model) = parse_process(process)?;
    let plan = allocate(&model, log_n, block_dim)?;
    let quantized = plan.m * block_dim as u64;
    let truncation = truncation.unwrap_or(quantized.max(1));
    let cache = warm_plan_blocks(&plan, seed)?;
    let analytic = plan_distortion(&plan, &model, seed)?;
    let batch = mc::sample_paths(&model, truncation, samples, seed)?;
    let est = mc::empirical_distortion(&plan, &batch, seed)?;
    let bias_bound = spectra::tail_sum(&model, truncation)?.remainder_bound;
    let mut table = Table::new("mc-distortion");
    table.meta("process", Cell::Text(spec.to_string()));
    table.meta("spectrum", Cell::Text(spectrum_flag(&model)?.into()));
    table.meta("log_n", Cell::Num(log_n));
    table.meta("block_dim", Cell::Int(block_dim as u64));
    table.meta("levels", Cell::Ints(plan.levels.clone()));
    table.meta("truncation", Cell::Int(truncation));
    if let Some(c) = cache {
        table.meta("cache", Cell::Text(c.into()));
    }
    table.meta(
        "exactness",
        Cell::Text(
            match plan.exactness {
                Exactness::Exact => "exact",
                Exactness::ApproximateUpper => "approximate-upper",
            }
            .into(),
        ),
    );
    table.meta("plan_total", Cell::Num(analytic.total));
    table.columns(vec![
        "estimate".into(),
        "stderr".into(),
        "samples".into(),
        "seed".into(),
        "bias_bound".into(),
    ]);
    table.row(vec![
        Cell::Num(est.value),
        Cell::Num(est.stderr),
        Cell::Int(est.samples),
        Cell::Int(est.seed),
        Cell::Num(bias_bound),
    ]);
    Ok(table)
}

fn run_mc_smallball(
    process: &str,
    eps: f64,
    samples: u64,
    truncation: Option<u64>,
    seed: u64,
) -> Result<Table, Error> {
    let (spec, model) = parse_process(process)?;
    let truncation = match truncation {
        Some(j) => j,
        None => {
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(Error::NonPositiveEps(eps));
            }
            mc::required_truncation(&model, eps * eps * 1e-3)?
        }
    };
    let est = mc::small_ball(&model, eps, truncation, samples, seed)?;
    let mut table = Table::new("mc-smallball");
    table.meta("process", Cell::Text(spec.to_string()));
    table.meta("spectrum", Cell::Text(spectrum_flag(&model)?.into()));
    table.meta("truncation", Cell::Int(est.truncation));
    table.meta("hits", Cell::Int(est.hits));
    table.meta("p_hat", Cell::Num(est.p_hat));
    table.columns(vec![
        "eps".into(),
        "estimate".into(),
        "stderr".into(),
        "samples".into(),
        "seed".into(),
        "bias_bound".into(),
    ]);
    table.row(vec![
        Cell::Num(est.eps),
        Cell::Num(est.f_hat),
        Cell::Num(est.stderr),
        Cell::Int(est.samples),
        Cell::Int(est.seed),
        Cell::Num(est.truncation_bias),
    ]);
    Ok(table)
}

/// Load persisted block codebooks from the cache directory before the
/// library trains its own, and persist whatever the plan ended up needing.
/// Returns the cache disposition for the metadata header, or None when the
/// plan trains no blocks.
fn warm_plan_blocks(plan: &ProductPlan, seed: u64) -> Result<Option<&'static str>, Error> {
    if plan.block_dim == 1 || plan.levels.iter().all(|&l| l == 1) {
        return Ok(None);
    }
    let Some(dir) = std::env::var_os("FUNQ_CACHE_DIR").map(PathBuf::from) else {
        return Ok(Some("off"));
    };
    std::fs::create_dir_all(&dir)?;
    let mut levels: Vec<u64> = plan.levels.iter().copied().filter(|&l| l > 1).collect();
    levels.sort_unstable();
    levels.dedup();
    let mut all_hit = true;
    for &level in &levels {
        let path = dir.join(format!("block-d{}-k{level}-s{seed}.json", plan.block_dim));
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            let stored: VectorQuantizer = serde_json::from_str(&text)?;
            if stored.dim == plan.block_dim && stored.levels == level {
                vq::preload_block(Arc::new(stored));
                continue;
            }
        }
        all_hit = false;
        let trained = vq::block_distortion(plan.block_dim, level, seed)?;
        std::fs::write(&path, serde_json::to_string(trained.as_ref())?)?;
    }
    Ok(Some(if all_hit { "hit" } else { "miss" }))
}

fn cached_vq(
    dim: u32,
    levels: u64,
    samples: u64,
    seed: u64,
) -> Result<(VectorQuantizer, &'static str), Error> {
    let Some(dir) = std::env::var_os("FUNQ_CACHE_DIR").map(PathBuf::from) else {
        return Ok((vq::train_vq(dim, levels, samples, seed)?, "off"));
    };
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("vq-d{dim}-k{levels}-n{samples}-s{seed}.json"));
    if path.exists() {
        let text = std::fs::read_to_string(&path)?;
        let stored: VectorQuantizer = serde_json::from_str(&text)?;
        if stored.dim == dim && stored.levels == levels {
            return Ok((stored, "hit"));
        }
    }
    let trained = vq::train_vq(dim, levels, samples, seed)?;
    std::fs::write(&path, serde_json::to_string(&trained)?)?;
    Ok((trained, "miss"))
}

enum Cell {
    Num(f64),
    Int(u64),
    Ints(Vec<u64>),
    Text(String),
    Empty,
}

/// 17 significant digits: enough to reproduce any finite double exactly.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) if x.is_finite() => num(*x),
            Cell::Num(x) if x.is_nan() => "nan".into(),
            Cell::Num(x) if *x > 0.0 => "inf".into(),
            Cell::Num(_) => "-inf".into(),
            Cell::Int(v) => v.to_string(),
            Cell::Ints(vs) => vs
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" "),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::Num(x) if x.is_finite() => num(*x),
            Cell::Num(_) => "null".into(),
            Cell::Int(v) => v.to_string(),
            Cell::Ints(vs) => format!(
                "[{}]",
                vs.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            Cell::Text(s) => format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"")),
            Cell::Empty => "null".into(),
        }
    }
}

struct Table {
    schema: String,
    meta: Vec<(&'static str, Cell)>,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(kind: &str) -> Self {
        Table {
            schema: format!("funq.{kind}.{SCHEMA_VERSION}"),
            meta: Vec::new(),
            columns: Vec::new(),
            rows: Vec::new(),
        }
    }

    fn meta(&mut self, key: &'static str, value: Cell) {
        self.meta.push((key, value));
    }

    fn columns(&mut self, columns: Vec<String>) {
        self.columns = columns;
    }

    fn row(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.render_csv(),
            Format::Json => self.render_json(),
        }
    }

    fn render_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# tool: funq {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "# schema: {}", self.schema);
        for (key, value) in &self.meta {
            let _ = writeln!(out, "# {key}: {}", value.csv());
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    fn render_json(&self) -> String {
        let mut out = String::new();
        out.push_str("{\n");
        let _ = writeln!(out, "  \"tool\": \"funq\",");
        let _ = writeln!(out, "  \"version\": \"{}\",", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "  \"schema\": \"{}\",", self.schema);
        out.push_str("  \"meta\": {\n");
        for (i, (key, value)) in self.meta.iter().enumerate() {
            let comma = if i + 1 < self.meta.len() { "," } else { "" };
            let _ = writeln!(out, "    \"{key}\": {}{comma}", value.json());
        }
        out.push_str("  },\n");
        let cols: Vec<String> = self.columns.iter().map(|c| format!("\"{c}\"")).collect();
        let _ = writeln!(out, "  \"columns\": [{}],", cols.join(", "));
        out.push_str("  \"rows\": [\n");
        for (i, row) in self.rows.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(Cell::json).collect();
            let comma = if i + 1 < self.rows.len() { "," } else { "" };
            let _ = writeln!(out, "    [{}]{comma}", cells.join(", "));
        }
        out.push_str("  ]\n}\n");
        out
    }
}
