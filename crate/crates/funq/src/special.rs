//! Scalar numeric primitives: error function, normal density/CDF/quantile,
//! trigamma, and fixed quadrature rules.
//!
//! Everything here is allocation-free and accurate to a relative error of
//! about 1e-15, which the quantizer solver and the tail-sum machinery rely
//! on. The error function uses Cody's rational approximations; the normal
//! quantile uses Wichura's algorithm.

/// sqrt(2π).
pub const SQRT_2PI: f64 = 2.5066282746310002;
/// 1/sqrt(2π).
pub const INV_SQRT_2PI: f64 = 0.3989422804014327;
/// 1/sqrt(2).
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// 1/sqrt(π), used by the large-argument erfc branch.
const INV_SQRT_PI: f64 = 0.5641895835477563;

// Cody's rational coefficients for erf on |x| <= 0.46875.
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
// Cody's coefficients for erfc on 0.46875 < x <= 4.
const ERF_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERF_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
// Cody's coefficients for erfc on x > 4.
const ERF_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];

/// erf on the central interval |x| <= 0.46875.
fn erf_small(x: f64) -> f64 {
    let z = x * x;
    let mut num = ERF_A[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + ERF_A[i]) * z;
        den = (den + ERF_B[i]) * z;
    }
    x * (num + ERF_A[3]) / (den + ERF_B[3])
}

/// exp(-y²) split as exp(-ysq²)·exp(-(y-ysq)(y+ysq)) with ysq a multiple of
/// 1/16, which keeps the scaled erfc branches accurate in the far tail.
fn exp_neg_sq(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

/// erfc for y in (0.46875, 4].
fn erfc_mid(y: f64) -> f64 {
    let mut num = ERF_C[8] * y;
    let mut den = y;
    for i in 0..7 {
        num = (num + ERF_C[i]) * y;
        den = (den + ERF_D[i]) * y;
    }
    exp_neg_sq(y) * (num + ERF_C[7]) / (den + ERF_D[7])
}

/// erfc for y > 4.
fn erfc_large(y: f64) -> f64 {
    if y > 26.7 {
        // erfc underflows to a subnormal below ~1e-311.
        return 0.0;
    }
    let z = 1.0 / (y * y);
    let mut num = ERF_P[5] * z;
    let mut den = z;
    for i in 0..4 {
        num = (num + ERF_P[i]) * z;
        den = (den + ERF_Q[i]) * z;
    }
    let r = z * (num + ERF_P[4]) / (den + ERF_Q[4]);
    exp_neg_sq(y) * (INV_SQRT_PI - r) / y
}

/// Error function.
pub fn erf(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        erf_small(x)
    } else {
        let c = if y <= 4.0 { erfc_mid(y) } else { erfc_large(y) };
        if x < 0.0 {
            c - 1.0
        } else {
            1.0 - c
        }
    }
}

/// Complementary error function, accurate in the far tail.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    let c = if y <= 0.46875 {
        return 1.0 - erf_small(x);
    } else if y <= 4.0 {
        erfc_mid(y)
    } else {
        erfc_large(y)
    };
    if x < 0.0 {
        2.0 - c
    } else {
        c
    }
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF Φ(x) = erfc(-x/√2)/2.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function Φ(-x) = erfc(x/√2)/2, cancellation-free
/// for large x.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

// Wichura's rational coefficients for the normal quantile (central region).
const PPND_A: [f64; 8] = [
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
];
const PPND_B: [f64; 8] = [
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
];
const PPND_C: [f64; 8] = [
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
];
const PPND_D: [f64; 8] = [
    1.0,
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
];
const PPND_E: [f64; 8] = [
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
];
const PPND_F: [f64; 8] = [
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
];

fn poly8(c: &[f64; 8], r: f64) -> f64 {
    let mut acc = c[7];
    for i in (0..7).rev() {
        acc = acc * r + c[i];
    }
    acc
}

/// Standard normal quantile Φ⁻¹(p) for p in (0, 1); ±∞ at the endpoints.
pub fn normal_quantile(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly8(&PPND_A, r) / poly8(&PPND_B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    if r <= 0.0 {
        return if q < 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
    }
    let mut r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        poly8(&PPND_C, r) / poly8(&PPND_D, r)
    } else {
        r -= 5.0;
        poly8(&PPND_E, r) / poly8(&PPND_F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Trigamma function ψ₁(x) for x > 0, via the upward recurrence
/// ψ₁(x) = ψ₁(x+1) + 1/x² and the asymptotic series beyond x = 10.
pub fn trigamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "trigamma needs a positive argument");
    let mut acc = 0.0;
    let mut x = x;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    // ψ₁(x) ≈ 1/x + 1/2x² + Σ B_{2n}/x^{2n+1}.
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0
            + inv * 0.5
            + inv2
                * (1.0 / 6.0
                    + inv2
                        * (-1.0 / 30.0
                            + inv2
                                * (1.0 / 42.0
                                    + inv2
                                        * (-1.0 / 30.0
                                            + inv2 * (5.0 / 66.0 + inv2 * (-691.0 / 2730.0)))))));
    acc + series
}

/// 16-point Gauss–Legendre rule on [-1, 1]: the positive nodes with their
/// weights; the rule is symmetric.
pub const GAUSS_LEGENDRE_16: [(f64, f64); 8] = [
    (9.50125098376374544e-2, 1.89450610455068585e-1),
    (2.81603550779258915e-1, 1.82603415044923612e-1),
    (4.58016777657227370e-1, 1.69156519395002619e-1),
    (6.17876244402643771e-1, 1.49595988816576764e-1),
    (7.55404408355002999e-1, 1.24628971255534030e-1),
    (8.65631202387831755e-1, 9.51585116824925914e-2),
    (9.44575023073232600e-1, 6.22535239386477063e-2),
    (9.89400934991649939e-1, 2.71524594117540374e-2),
];

/// Integrate f over [lo, hi] with a single 16-point Gauss–Legendre panel.
pub fn gl16<F: Fn(f64) -> f64>(lo: f64, hi: f64, f: F) -> f64 {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut acc = 0.0;
    for &(x, w) in GAUSS_LEGENDRE_16.iter() {
        acc += w * (f(mid + half * x) + f(mid - half * x));
    }
    acc * half
}

/// Integrate f over [lo, hi] with panels at most `max_width` wide.
pub fn gl16_composite<F: Fn(f64) -> f64>(lo: f64, hi: f64, max_width: f64, f: F) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let panels = ((hi - lo) / max_width).ceil().max(1.0) as usize;
    let step = (hi - lo) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let a = lo + p as f64 * step;
        acc += gl16(a, a + step, &f);
    }
    acc
}

/// 48-point Gauss–Laguerre rule: ∫₀^∞ e^{-u} g(u) du ≈ Σ w_i g(x_i).
pub const GAUSS_LAGUERRE_48: [(f64, f64); 48] = [
    (2.98112358299600991e-2, 7.42620058279920975e-2),
    (1.57107990617875531e-1, 1.52271949809284712e-1),
    (3.86265037576456416e-1, 1.90409088263940041e-1),
    (7.17574694116970946e-1, 1.86633059484833608e-1),
    (1.15139383402643425e0, 1.53424200157594892e-1),
    (1.68818582341904788e0, 1.08779692807504047e-1),
    (2.32852700665322931e0, 6.74607386092280908e-2),
    (3.07311086165263836e0, 3.68811941158248696e-2),
    (3.92275241304647970e0, 1.78568442691587614e-2),
    (4.87839335592134660e0, 7.67761651449841518e-3),
    (5.94110805462455893e0, 2.93578590373978852e-3),
    (7.11211053589074194e0, 9.99065537815973766e-4),
    (8.39276259909122402e0, 3.02598016992290935e-4),
    (9.78458318468732458e0, 8.15387118035624533e-5),
    (1.12892591680095293e1, 1.95315871572828804e-5),
    (1.29086577782855301e1, 4.15418294505257220e-6),
    (1.46448408832097066e1, 7.83370038027847517e-7),
    (1.65000814289645881e1, 1.30739477492075373e-7),
    (1.84768823868741130e1, 1.92707140801721937e-8),
    (2.05779986340222081e1, 2.50263893712656872e-9),
    (2.28064622905213703e1, 2.85578550877190467e-10),
    (2.51656121564391064e1, 2.85462241205946120e-11),
    (2.76591280444805285e1, 2.49101068493749574e-12),
    (3.02910710010085680e1, 1.89033660697175099e-13),
    (3.30659306624987437e1, 1.24216268594928362e-14),
    (3.59886813274789361e1, 7.03423152021340427e-16),
    (3.90648487641977695e1, 3.41454914859215270e-17),
    (4.23005903629030939e1, 1.41231541489592653e-18),
    (4.57027920385114683e1, 4.94421800809808434e-20),
    (4.92791863828367909e1, 1.45395248136808586e-21),
    (5.30384980878166630e1, 3.56106836500444273e-23),
    (5.69906248148044767e1, 7.19405599649552862e-25),
    (6.11468647861402275e1, 1.18553722835071213e-26),
    (6.55202069290186131e1, 1.57349135707575466e-28),
    (7.01257062361131887e1, 1.65728544091964029e-30),
    (7.49809775189113168e1, 1.36143416271645590e-32),
    (8.01068573503243897e1, 8.54615581396443954e-35),
    (8.55283111160341747e1, 4.00009053248172743e-37),
    (9.12757079936680924e1, 1.35501999110321149e-39),
    (9.73866677135815308e1, 3.20163679535521637e-42),
    (1.03908833357176249e2, 5.03586916606138230e-45),
    (1.10904220884976269e2, 4.96248754070344639e-48),
    (1.18456425046283627e2, 2.82351071612067751e-51),
    (1.26683425768885840e2, 8.26844606950475081e-55),
    (1.35762589577864304e2, 1.04906484782129093e-58),
    (1.45986432709463458e2, 4.34657442273905361e-63),
    (1.57915612022977996e2, 3.43473643839689184e-68),
    (1.72996328148563265e2, 1.31906608839813320e-74),
];

/// ∫₀^∞ e^{-u} g(u) du by the 48-point Gauss–Laguerre rule.
pub fn gauss_laguerre_48<F: Fn(f64) -> f64>(g: F) -> f64 {
    let mut acc = 0.0;
    for &(x, w) in GAUSS_LAGUERRE_48.iter() {
        acc += w * g(x);
    }
    acc
}

/// Compensated (Kahan) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}
