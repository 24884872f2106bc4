//! End-to-end checks of the numerical contracts, one verdict line per
//! criterion. Runs as a plain binary so every line is visible in the test
//! output, and keeps going after a failure so the full ledger prints.

use funq::allocation::{
    allocate, critical_dim, distortion_lower_bound, distortion_upper_bound, plan_distortion,
};
use funq::asymptotics::{power_triple, process_constant, sharp_constant};
use funq::mc;
use funq::process::ProcessSpec;
use funq::rd;
use funq::scalar;
use funq::special::{normal_cdf, normal_pdf};
use funq::spectra::{nystrom, tail_sum, SpectrumModel};
use statrs::function::gamma::gamma;
use std::f64::consts::{LN_2, PI, SQRT_2};

type Check = fn() -> Result<String, String>;

fn main() {
    std::panic::set_hook(Box::new(|_| {}));
    let checks: [(u32, Check); 11] = [
        (1, criterion_1_scalar_table),
        (2, criterion_2_closed_forms),
        (3, criterion_3_waterfill_identities),
        (4, criterion_4_rate_asymptotics),
        (5, criterion_5_bound_sandwich),
        (6, criterion_6_sharp_convergence),
        (7, criterion_7_catalog_transcription),
        (8, criterion_8_numerical_eigs),
        (9, criterion_9_monte_carlo_agreement),
        (10, criterion_10_small_ball_sandwich),
        (11, criterion_11_converse),
    ];
    let mut failures = 0;
    for (n, check) in checks {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|payload| {
            let text = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".to_owned());
            Err(text)
        });
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS — {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n}: FAIL — {detail}");
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} of 11 criteria failed");
        std::process::exit(1);
    }
}

fn lib<T>(r: Result<T, funq::error::Error>) -> Result<T, String> {
    r.map_err(|e| format!("library error: {e}"))
}

fn bm() -> SpectrumModel {
    SpectrumModel::ExactBm
}

fn model_of(text: &str) -> Result<SpectrumModel, String> {
    lib(lib(ProcessSpec::parse(text))?.spectrum())
}

fn criterion_1_scalar_table() -> Result<String, String> {
    let rows = scalar::c1_scan(1000);
    let mut sup = 0.0f64;
    for row in &rows {
        let value = row
            .value
            .ok_or(format!("the solver failed at k = {}", row.k))?;
        if value > scalar::C1 + 1e-3 {
            return Err(format!(
                "k = {}: k^2 e_k^2 = {value:.8} exceeds {:.8}",
                row.k,
                scalar::C1 + 1e-3
            ));
        }
        sup = sup.max(value);
    }
    let last = rows[rows.len() - 1].value.unwrap();
    if (last - 2.7206).abs() >= 0.03 {
        return Err(format!(
            "k = 1000 value {last:.5} not within 0.03 of 2.7206"
        ));
    }
    Ok(format!(
        "sup of k^2 e_k^2 over k <= 1000 is {sup:.6}, within 1e-3 of {:.6}; value at k = 1000 is {last:.5}",
        scalar::C1
    ))
}

fn brute_three_point(a: f64) -> f64 {
    let t = a / 2.0;
    1.0 - 4.0 * a * normal_pdf(t) + 2.0 * a * a * (1.0 - normal_cdf(t))
}

fn criterion_2_closed_forms() -> Result<String, String> {
    let e1 = lib(scalar::lloyd_1d(
        1,
        scalar::DEFAULT_TOL,
        scalar::DEFAULT_MAX_ITER,
    ))?;
    if e1.distortion != 1.0 {
        return Err(format!("e_1^2 = {} instead of exactly 1", e1.distortion));
    }
    let e2 = lib(scalar::lloyd_1d(
        2,
        scalar::DEFAULT_TOL,
        scalar::DEFAULT_MAX_ITER,
    ))?;
    let closed = 1.0 - 2.0 / PI;
    if (e2.distortion - closed).abs() >= 1e-10 {
        return Err(format!(
            "e_2^2 = {} is not within 1e-10 of {closed}",
            e2.distortion
        ));
    }
    let mut brute = f64::INFINITY;
    let mut a = 0.5;
    while a <= 2.0 {
        brute = brute.min(brute_three_point(a));
        a += 1e-6;
    }
    let e3 = lib(scalar::lloyd_1d(
        3,
        scalar::DEFAULT_TOL,
        scalar::DEFAULT_MAX_ITER,
    ))?;
    if (e3.distortion - brute).abs() >= 1e-7 {
        return Err(format!(
            "e_3^2 = {} differs from the brute-force minimum {brute} by more than 1e-7",
            e3.distortion
        ));
    }
    Ok(format!(
        "e_1^2 exact, e_2^2 within 1e-10 of 1 - 2/pi, e_3^2 = {:.10} within 1e-7 of a brute scan",
        e3.distortion
    ))
}

fn criterion_3_waterfill_identities() -> Result<String, String> {
    let model = bm();
    let (la, lb) = (0.02f64.ln(), 0.65f64.ln());
    for i in 0..50 {
        let eps = (la + (lb - la) * i as f64 / 49.0).exp();
        let solution = lib(rd::waterfill(&model, eps))?;
        let s = solution
            .active()
            .ok_or(format!("eps = {eps} unexpectedly reached zero rate"))?;
        let mass = s.r as f64 * s.theta + lib(tail_sum(&model, s.r))?.value;
        if (mass - eps * eps).abs() > 1e-12 * eps * eps {
            return Err(format!(
                "eps = {eps}: sum of min(lambda_j, theta) = {mass} misses eps^2 = {}",
                eps * eps
            ));
        }
        let lam_r = lib(model.eigenvalue(s.r))?.unwrap();
        let lam_next = lib(model.eigenvalue(s.r + 1))?.unwrap();
        if !(lam_next <= s.theta && s.theta <= lam_r) {
            return Err(format!(
                "eps = {eps}: theta = {} outside [{lam_next}, {lam_r}]",
                s.theta
            ));
        }
    }
    let two_levels = SpectrumModel::ExplicitList {
        values: vec![4.0, 1.0],
    };
    let boundary = lib(rd::waterfill(&two_levels, SQRT_2))?;
    let s = boundary.active().ok_or("boundary case lost its rate")?;
    if s.r != 1 {
        return Err(format!("boundary case returned r = {} instead of 1", s.r));
    }
    if (s.rate - LN_2).abs() > 1e-15 {
        return Err(format!(
            "boundary rate {} is not within 1e-15 of log 2",
            s.rate
        ));
    }
    Ok(
        "water mass matches eps^2 to 1e-12 relative at 50 radii with theta bracketed; \
        two-level boundary gives r = 1, rate within 1e-15 of log 2"
            .to_owned(),
    )
}

fn criterion_4_rate_asymptotics() -> Result<String, String> {
    let model = bm();
    let limit = 2.0 / (PI * PI);
    let mut ratios = Vec::new();
    for eps in [0.1f64, 0.05, 0.02] {
        let rate = lib(rd::waterfill(&model, eps))?.rate();
        ratios.push(rate * eps * eps / limit);
    }
    let last = ratios[2];
    if !(0.95..1.05).contains(&last) {
        return Err(format!(
            "R(0.02) * eps^2 / (2/pi^2) = {last:.6} misses the 5 percent band"
        ));
    }
    if last <= ratios[0] {
        return Err(format!("ratio sequence {ratios:?} does not move toward 1"));
    }
    Ok(format!(
        "R(eps) * eps^2 / (2/pi^2) = {:.4}, {:.4}, {:.4} at eps = 0.1, 0.05, 0.02; final within 5 percent of 1",
        ratios[0], ratios[1], ratios[2]
    ))
}

fn criterion_5_bound_sandwich() -> Result<String, String> {
    for text in ["bm", "rv:c=1,b=3,a=0"] {
        let model = model_of(text)?;
        for log_n in [1e2, 1e3, 1e4] {
            let lower = lib(distortion_lower_bound(&model, log_n))?;
            let plan = lib(allocate(&model, log_n, 1))?;
            let total = lib(plan_distortion(&plan, &model, 0))?.total;
            let upper = lib(distortion_upper_bound(&model, log_n, 1, scalar::C1))?;
            if !(lower < total && total < upper) {
                return Err(format!(
                    "{text} at log n = {log_n}: ordering {lower} < {total} < {upper} is broken"
                ));
            }
        }
    }
    Ok("lower bound < exact one-dimensional plan < scalar upper bound, strictly, for both models on log n in {1e2, 1e3, 1e4}".into())
}

fn criterion_6_sharp_convergence() -> Result<String, String> {
    let log_n = 1e4;
    let mut details = Vec::new();
    for text in ["bm", "rv:c=1,b=3,a=0"] {
        let model = model_of(text)?;
        let (c, b, a) = lib(power_triple(&model))?;
        let law = lib(sharp_constant(c, b, a))?;
        let predicted = lib(law.predicted_en_squared(log_n))?;
        let lower = lib(distortion_lower_bound(&model, log_n))?;
        let ratio = lower / predicted;
        if !(0.75..1.05).contains(&ratio) {
            return Err(format!(
                "{text}: lower bound over predicted e_n^2 = {ratio:.5} outside (0.75, 1.05)"
            ));
        }
        let m = lib(critical_dim(&model, log_n, 1))? as f64;
        let m_ratio = m * b / (2.0 * log_n);
        if !(0.95..1.05).contains(&m_ratio) {
            return Err(format!(
                "{text}: m(n) b / (2 log n) = {m_ratio:.5} outside (0.95, 1.05)"
            ));
        }
        details.push(format!("{text}: {ratio:.5} and {m_ratio:.5}"));
    }
    Ok(format!(
        "at log n = 1e4, lower/predicted and m b/(2 log n) sit in their bands ({})",
        details.join("; ")
    ))
}

fn criterion_7_catalog_transcription() -> Result<String, String> {
    let catalog = [
        "bm",
        "gaussian-diffusion",
        "ou:a=1.5",
        "fou:a=1,rho=0.5",
        "fou:a=2,rho=1.5",
        "ibm:m=1",
        "ibm:m=2",
        "ibm:m=3",
        "fbm:beta=0.3",
        "fbm:beta=0.5",
        "fbm:beta=0.7",
        "ous:a=1+2",
        "fous:a=1+0.5,rho=0.7",
        "fbs:beta=0.7,d=2",
        "fbs:beta=0.5,d=3",
        "bs:d=1",
        "bs:d=2",
        "bs:d=3",
        "tugged-bs:d=2",
        "stationary:c=1,b=2.5",
    ];
    for text in catalog {
        let spec = lib(ProcessSpec::parse(text))?;
        let law = lib(process_constant(&spec))?;
        let rel = (law.k_sharp - law.k_spectral).abs() / law.k_sharp;
        if rel > 1e-12 {
            return Err(format!(
                "{text}: transcribed constant {} vs spectrum-derived {} differ by {rel:.2e} relative",
                law.k_sharp, law.k_spectral
            ));
        }
    }
    let half = lib(process_constant(&lib(ProcessSpec::parse("fbm:beta=0.5"))?))?;
    let brown = lib(process_constant(&ProcessSpec::Bm))?;
    let rel = (half.k_sharp - brown.k_sharp).abs() / brown.k_sharp;
    if rel > 1e-12 {
        return Err(format!(
            "fbm at beta = 1/2 gives {} instead of the Brownian {}",
            half.k_sharp, brown.k_sharp
        ));
    }
    Ok(format!(
        "all {} catalog constants match their spectrum-derived values to 1e-12 relative; fbm(1/2) equals sqrt(2)/pi",
        catalog.len()
    ))
}

fn criterion_8_numerical_eigs() -> Result<String, String> {
    let kernel = ProcessSpec::Bm.kernel().ok_or("no Brownian kernel")?;
    let eigs = lib(nystrom::nystrom_eigs(&kernel, 1000))?;
    let mut worst = 0.0f64;
    for k in 1..=20u32 {
        let exact = (PI * (k as f64 - 0.5)).powi(-2);
        let rel = (eigs[k as usize - 1] / exact - 1.0).abs();
        worst = worst.max(rel);
        if rel > 2e-3 {
            return Err(format!(
                "Brownian eigenvalue {k}: quadrature {} vs exact {exact} off by {rel:.2e}",
                eigs[k as usize - 1]
            ));
        }
    }
    let beta = 0.7;
    let kernel = ProcessSpec::Fbm { beta }.kernel().ok_or("no fbm kernel")?;
    let eigs = lib(nystrom::nystrom_eigs(&kernel, 2000))?;
    let c_ref = gamma(1.0 + 2.0 * beta) * (PI * beta).sin() / PI.powf(1.0 + 2.0 * beta);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for k in 16..=48u32 {
        let ratio = eigs[k as usize - 1] * (k as f64).powf(1.0 + 2.0 * beta) / c_ref;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        if !(0.9..1.1).contains(&ratio) {
            return Err(format!(
                "fbm eigenvalue {k}: normalized ratio {ratio:.4} outside (0.9, 1.1)"
            ));
        }
    }
    Ok(format!(
        "Brownian quadrature matches the closed form to {worst:.1e} over the first 20; fbm(0.7) normalized ratios span [{lo:.4}, {hi:.4}] on k in [16, 48]"
    ))
}

fn criterion_9_monte_carlo_agreement() -> Result<String, String> {
    let model = bm();
    let plan = lib(allocate(&model, 3f64.ln(), 1))?;
    let analytic = lib(plan_distortion(&plan, &model, 0))?.total;
    let batch = lib(mc::sample_paths(&model, 4, 1_000_000, 2024))?;
    let est = lib(mc::empirical_distortion(&plan, &batch, 0))?;
    let gap = (est.value - analytic).abs();
    if gap > 4.0 * est.stderr {
        return Err(format!(
            "plan distortion: estimate {} vs analytic {analytic} is {:.1} standard errors away",
            est.value,
            gap / est.stderr
        ));
    }
    let mut zs = Vec::new();
    for eps in [0.5f64, 0.3, 0.2] {
        let draws = lib(rd::sample_reproducing(&model, eps, 200_000, 77))?;
        let r = draws.r as usize;
        let n = draws.count;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..n {
            let mut d = 0.0;
            for j in 0..r {
                let gap = draws.x[i * r + j] - draws.y[i * r + j];
                d += gap * gap;
            }
            sum += d;
            sumsq += d * d;
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        let stderr = (var / n as f64).sqrt();
        let total = mean + lib(tail_sum(&model, draws.r))?.value;
        let z = (total - eps * eps) / stderr;
        if z.abs() > 4.0 {
            return Err(format!(
                "reproducing pair at eps = {eps}: E|X - Y|^2 = {total} misses eps^2 by {z:.1} standard errors"
            ));
        }
        zs.push(z);
    }
    Ok(format!(
        "million-path estimate within {:.2} standard errors of the analytic plan value; reproducing-pair distortion within 4 standard errors of eps^2 at three radii (z = {:.2}, {:.2}, {:.2})",
        gap / est.stderr,
        zs[0],
        zs[1],
        zs[2]
    ))
}

fn criterion_10_small_ball_sandwich() -> Result<String, String> {
    let model = bm();
    let mut details = Vec::new();
    for eps in [0.4f64, 0.3, 0.2] {
        let truncation = lib(mc::required_truncation(&model, eps * eps * 1e-3))?;
        let est = lib(mc::small_ball(&model, eps, truncation, 200_000, 2024))?;
        if est.p_hat < 1e-4 {
            return Err(format!(
                "eps = {eps}: hit probability {} too small",
                est.p_hat
            ));
        }
        let rate = lib(rd::waterfill(&model, eps))?.rate();
        let left = (4.0 / 9.0) * rate * 0.5;
        let right = rate * 1.5;
        if !(est.f_hat > left && est.f_hat < right) {
            return Err(format!(
                "eps = {eps}: -log P = {} outside [{left:.4}, {right:.4}]",
                est.f_hat
            ));
        }
        details.push(format!("{:.3}", est.f_hat / rate));
    }
    Ok(format!(
        "-log P over R(eps) = {} at eps = 0.4, 0.3, 0.2, inside the (2/9, 3/2) sandwich",
        details.join(", ")
    ))
}

fn criterion_11_converse() -> Result<String, String> {
    let model = bm();
    for log_n in [5.0f64, 10.0, 31.6, 100.0, 316.0, 1000.0, 3162.0, 1e4] {
        let plan = lib(allocate(&model, log_n, 1))?;
        let total = lib(plan_distortion(&plan, &model, 0))?.total;
        let rate = lib(rd::waterfill(&model, total.sqrt()))?.rate();
        if rate > log_n {
            return Err(format!(
                "log n = {log_n}: R at the plan's distortion is {rate}, above the budget"
            ));
        }
    }
    let mut ratios = Vec::new();
    for eps in [0.35f64, 0.18, 0.12, 0.08] {
        let bracket = lib(rd::n_eps_bracket(&model, eps))?;
        ratios.push(bracket.log_upper / bracket.log_lower);
    }
    for pair in ratios.windows(2) {
        if pair[1] >= pair[0] {
            return Err(format!(
                "bracket ratios {ratios:?} are not strictly decreasing"
            ));
        }
    }
    if ratios.iter().any(|&r| r <= 1.0) {
        return Err(format!("a bracket ratio in {ratios:?} fell to 1 or below"));
    }
    Ok(format!(
        "R stays below log n on all eight plans; bracket ratios fall {:.3} > {:.3} > {:.3} > {:.3} toward 1",
        ratios[0], ratios[1], ratios[2], ratios[3]
    ))
}
