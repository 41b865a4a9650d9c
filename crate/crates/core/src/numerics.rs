//! Special functions and distribution primitives.
//!
//! Probabilities come in two channels: [`Probability`] for values that are
//! representable as plain reals, and [`Log10Probability`] for tails that
//! underflow double precision (an SRM with `|z| = 46` has `p ~ 1e-466`).
//! Nothing switches between the two automatically.

#![allow(clippy::excessive_precision)]

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{in_open_unit_interval, in_unit_interval, Scalar};

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Probability<T>(T);

impl<T: Scalar> Probability<T> {
    pub fn new(value: T) -> Result<Self> {
        if in_unit_interval(value) {
            Ok(Self(value))
        } else {
            Err(Error::domain(format!("probability {value} outside [0, 1]")))
        }
    }

    #[inline]
    pub fn get(self) -> T {
        self.0
    }

    /// Probability in the log10 channel. Zero maps to `-inf`.
    pub fn log10(self) -> Log10Probability<T> {
        Log10Probability(self.0.log10())
    }

    #[inline]
    fn clamped(v: T) -> Self {
        Self(v.max(T::zero()).min(T::one()))
    }
}

/// Base-10 logarithm of a probability; always `<= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Log10Probability<T>(T);

impl<T: Scalar> Log10Probability<T> {
    pub fn new(value: T) -> Result<Self> {
        if value <= T::zero() {
            Ok(Self(value))
        } else {
            Err(Error::domain(format!("log10 probability {value} is positive")))
        }
    }

    #[inline]
    pub fn get(self) -> T {
        self.0
    }

    /// Back to a plain probability. Underflows to zero for very small values.
    pub fn to_probability(self) -> Probability<T> {
        Probability::clamped(T::lit(10.0).powf(self.0))
    }

    /// Doubles the probability (two-sided from one tail), capped at 1.
    pub fn doubled(self) -> Self {
        Self((self.0 + T::LOG10_2()).min(T::zero()))
    }

    #[inline]
    fn from_ln(ln_p: T) -> Self {
        Self((ln_p / T::LN_10()).min(T::zero()))
    }
}

fn require_finite<T: Scalar>(x: T, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must be finite, got {x}")))
    }
}

// Rational approximations for erfc, after FreeBSD's s_erf.c.
const ERX: f64 = 8.45062911510467529297e-01;
const PP: [f64; 5] = [
    1.28379167095512558561e-01,
    -3.25042107247001499370e-01,
    -2.84817495755985104766e-02,
    -5.77027029648944159157e-03,
    -2.37630166566501626084e-05,
];
const QQ: [f64; 5] = [
    3.97917223959155352819e-01,
    6.50222499887672944485e-02,
    5.08130628187576562776e-03,
    1.32494738004321644526e-04,
    -3.96022827877536812320e-06,
];
const PA: [f64; 7] = [
    -2.36211856075265944077e-03,
    4.14856118683748331666e-01,
    -3.72207876035701323847e-01,
    3.18346619901161753674e-01,
    -1.10894694282396677476e-01,
    3.54783043256182359371e-02,
    -2.16637559486879084300e-03,
];
const QA: [f64; 6] = [
    1.06420880400844228286e-01,
    5.40397917702171048937e-01,
    7.18286544141962662868e-02,
    1.26171219808761642112e-01,
    1.36370839120290507362e-02,
    1.19844998467991074170e-02,
];
const RA: [f64; 8] = [
    -9.86494403484714822705e-03,
    -6.93858572707181764372e-01,
    -1.05586262253232909814e+01,
    -6.23753324503260060396e+01,
    -1.62396669462573470355e+02,
    -1.84605092906711035994e+02,
    -8.12874355063065934246e+01,
    -9.81432934416914548592e+00,
];
const SA: [f64; 8] = [
    1.96512716674392571292e+01,
    1.37657754143519042600e+02,
    4.34565877475229228821e+02,
    6.45387271733267880336e+02,
    4.29008140027567833386e+02,
    1.08635005541779435134e+02,
    6.57024977031928170135e+00,
    -6.04244152148580987438e-02,
];
const RB: [f64; 7] = [
    -9.86494292470009928597e-03,
    -7.99283237680523006574e-01,
    -1.77579549177547519889e+01,
    -1.60636384855821916062e+02,
    -6.37566443368389627722e+02,
    -1.02509513161107724954e+03,
    -4.83519191608651397019e+02,
];
const SB: [f64; 7] = [
    3.03380607434824582924e+01,
    3.25792512996573918826e+02,
    1.53672958608443695994e+03,
    3.19985821950859553908e+03,
    2.55305040643316442583e+03,
    4.74528541206955367215e+02,
    -2.24409524465858183362e+01,
];

/// Horner evaluation of `c[0] + c[1] x + ...`.
#[inline]
fn poly<T: Scalar>(coeffs: &[f64], x: T) -> T {
    coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + T::lit(c))
}

/// `1 + c[0] x + c[1] x^2 + ...`
#[inline]
fn poly1<T: Scalar>(coeffs: &[f64], x: T) -> T {
    T::one() + x * poly(coeffs, x)
}

/// Complementary error function with full relative accuracy in the right tail.
pub fn erfc<T: Scalar>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    let one = T::one();
    let two = T::lit(2.0);
    let neg = x < T::zero();
    let ax = x.abs();

    if ax < T::lit(0.84375) {
        let z = ax * ax;
        let y = poly(&PP, z) / poly1(&QQ, z);
        let e = if ax < T::lit(0.25) {
            ax + ax * y
        } else {
            T::lit(0.5) + (ax * y + (ax - T::lit(0.5)))
        };
        return if neg { one + e } else { one - e };
    }
    if ax < T::lit(1.25) {
        let s = ax - one;
        let r = poly(&PA, s) / poly1(&QA, s);
        return if neg { one + T::lit(ERX) + r } else { one - T::lit(ERX) - r };
    }
    if ax >= T::lit(28.0) {
        return if neg { two } else { T::zero() };
    }
    if neg && ax > T::lit(6.0) {
        return two;
    }
    let s = one / (ax * ax);
    let rs = if ax < T::lit(1.0 / 0.35) {
        poly(&RA, s) / poly1(&SA, s)
    } else {
        poly(&RB, s) / poly1(&SB, s)
    };
    // Split ax so that hi*hi is exact; the remainder goes through the second exp.
    let scale = T::lit(65536.0);
    let hi = (ax * scale).floor() / scale;
    let r = (-hi * hi - T::lit(0.5625)).exp() * ((hi - ax) * (hi + ax) + rs).exp();
    if neg {
        two - r / ax
    } else {
        r / ax
    }
}

#[inline]
pub(crate) fn normal_pdf<T: Scalar>(z: T) -> T {
    (-T::lit(0.5) * z * z).exp() / (T::TAU()).sqrt()
}

#[inline]
pub(crate) fn normal_cdf<T: Scalar>(z: T) -> T {
    T::lit(0.5) * erfc(-z / T::SQRT_2())
}

#[inline]
pub(crate) fn normal_sf<T: Scalar>(z: T) -> T {
    T::lit(0.5) * erfc(z / T::SQRT_2())
}

/// Standard normal density.
pub fn std_normal_pdf<T: Scalar>(z: T) -> T {
    normal_pdf(z)
}

/// Standard normal CDF `Phi(z)`.
pub fn std_normal_cdf<T: Scalar>(z: T) -> Result<Probability<T>> {
    require_finite(z, "z")?;
    Ok(Probability::clamped(normal_cdf(z)))
}

/// Standard normal survival function `1 - Phi(z)`, computed without cancellation.
pub fn std_normal_sf<T: Scalar>(z: T) -> Result<Probability<T>> {
    require_finite(z, "z")?;
    Ok(Probability::clamped(normal_sf(z)))
}

/// Two-sided normal p-value `2 (1 - Phi(|z|))`.
pub fn two_sided_normal_p<T: Scalar>(z: T) -> Result<Probability<T>> {
    require_finite(z, "z")?;
    Ok(Probability::clamped(erfc(z.abs() / T::SQRT_2())))
}

// Acklam's rational approximation to the normal quantile.
const ACKLAM_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const ACKLAM_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const ACKLAM_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549671010228780e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const ACKLAM_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const ACKLAM_P_LOW: f64 = 0.02425;

fn acklam_lower<T: Scalar>(p: T) -> T {
    // p <= 0.5
    if p < T::lit(ACKLAM_P_LOW) {
        let q = (-T::lit(2.0) * p.ln()).sqrt();
        poly_desc(&ACKLAM_C, q) / (poly_desc(&ACKLAM_D, q) * q + T::one())
    } else {
        let q = p - T::lit(0.5);
        let r = q * q;
        poly_desc(&ACKLAM_A, r) * q / (poly_desc(&ACKLAM_B, r) * r + T::one())
    }
}

/// Horner evaluation with the leading coefficient first.
#[inline]
fn poly_desc<T: Scalar>(coeffs: &[f64], x: T) -> T {
    coeffs.iter().fold(T::zero(), |acc, &c| acc * x + T::lit(c))
}

/// Standard normal quantile `Phi^{-1}(p)` for `0 < p < 1`.
///
/// Rational initial guess followed by one Halley step against [`std_normal_cdf`].
pub fn std_normal_quantile<T: Scalar>(p: T) -> Result<T> {
    if !in_open_unit_interval(p) {
        return Err(Error::domain(format!("quantile needs 0 < p < 1, got {p}")));
    }
    let half = T::lit(0.5);
    // 1 - p is exact for p >= 0.5, so reflect into the lower half.
    let (lower, sign) = if p > half { (T::one() - p, -T::one()) } else { (p, T::one()) };
    let mut x = acklam_lower(lower);
    let e = normal_cdf(x) - lower;
    let u = e * T::TAU().sqrt() * (x * x * half).exp();
    if u.is_finite() {
        x = x - u / (T::one() + x * u * half);
    }
    Ok(sign * x)
}

/// Upper-tail quantile `z_{1-a}`.
pub(crate) fn upper_quantile<T: Scalar>(a: T) -> Result<T> {
    std_normal_quantile(a).map(|z| -z)
}

/// Continuation point between the erfc branch and the asymptotic series.
pub const TAIL_SWITCH_Z: f64 = 8.0;

/// `ln(1 - Phi(z))` for any finite `z`.
pub(crate) fn ln_normal_sf<T: Scalar>(z: T) -> T {
    if z < T::lit(TAIL_SWITCH_Z) {
        return normal_sf(z).ln();
    }
    // Mills-ratio series: 1 - 1/z^2 + 3/z^4 - 15/z^6 + ...
    // Summed until the terms stop shrinking or fall below precision.
    let inv_z2 = (z * z).recip();
    let mut term = T::one();
    let mut sum = T::one();
    let mut k = 1u32;
    loop {
        let next = -term * T::from_u32(2 * k - 1).unwrap() * inv_z2;
        if next.abs() >= term.abs() || next.abs() < T::epsilon() * T::lit(1e-3) * sum.abs() {
            break;
        }
        sum = sum + next;
        term = next;
        k += 1;
        if k > 200 {
            break;
        }
    }
    -T::lit(0.5) * z * z - T::lit(0.5) * T::TAU().ln() - z.ln() + sum.ln()
}

/// `log10(1 - Phi(z))`, representable far beyond double-precision underflow.
pub fn log10_normal_sf<T: Scalar>(z: T) -> Result<Log10Probability<T>> {
    require_finite(z, "z")?;
    Ok(Log10Probability::from_ln(ln_normal_sf(z)))
}

/// `log10` of the two-sided normal p-value at `z`.
pub fn log10_two_sided_normal_p<T: Scalar>(z: T) -> Result<Log10Probability<T>> {
    Ok(log10_normal_sf(z.abs())?.doubled())
}

/// Survival function of the chi-square distribution with one degree of freedom.
pub fn chi_square_sf_1df<T: Scalar>(x: T) -> Result<Probability<T>> {
    require_finite(x, "chi-square statistic")?;
    if x < T::zero() {
        return Err(Error::domain(format!("chi-square statistic must be >= 0, got {x}")));
    }
    Ok(Probability::clamped(erfc((x / T::lit(2.0)).sqrt())))
}

/// `log10` of [`chi_square_sf_1df`], for statistics whose p-value underflows.
pub fn log10_chi_square_sf_1df<T: Scalar>(x: T) -> Result<Log10Probability<T>> {
    require_finite(x, "chi-square statistic")?;
    if x < T::zero() {
        return Err(Error::domain(format!("chi-square statistic must be >= 0, got {x}")));
    }
    log10_two_sided_normal_p(x.sqrt())
}

// ln(n!) - (n + 1/2) ln n + n - ln sqrt(2 pi), for n = 0..=15 (n = 0 unused).
const STIRLERR_TABLE: [f64; 16] = [
    0.0,
    0.08106146679532725821967026,
    0.04134069595540929409382208,
    0.02767792568499833914878929,
    0.02079067210376509311152277,
    0.01664469118982119216319487,
    0.01387612882307074799874573,
    0.01189670994589177009505572,
    0.01041126526197209649747857,
    0.009255462182712732917728637,
    0.008330563433362871256469319,
    0.007573675487951840794972024,
    0.006942840107209529865664153,
    0.006408994188004207068439631,
    0.005951370112758847735624416,
    0.00555473355196280137103869,
];

/// Error of Stirling's approximation to `ln(n!)`.
fn stirlerr<T: Scalar>(n: u64) -> T {
    if n < STIRLERR_TABLE.len() as u64 {
        return T::lit(STIRLERR_TABLE[n as usize]);
    }
    let s0 = T::lit(1.0 / 12.0);
    let s1 = T::lit(1.0 / 360.0);
    let s2 = T::lit(1.0 / 1260.0);
    let s3 = T::lit(1.0 / 1680.0);
    let s4 = T::lit(1.0 / 1188.0);
    let nf = T::from_count(n);
    let nn = nf * nf;
    if n > 500 {
        (s0 - s1 / nn) / nf
    } else if n > 80 {
        (s0 - (s1 - s2 / nn) / nn) / nf
    } else if n > 35 {
        (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / nf
    } else {
        (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / nf
    }
}

/// Deviance term `x ln(x / m) + m - x`, accurate when `x ~ m`.
fn bd0<T: Scalar>(x: T, m: T) -> T {
    let diff = x - m;
    if diff.abs() < T::lit(0.1) * (x + m) {
        let mut v = diff / (x + m);
        let mut s = diff * v;
        let mut ej = T::lit(2.0) * x * v;
        v = v * v;
        for j in 1..1000u32 {
            ej = ej * v;
            let s1 = s + ej / T::from_u32(2 * j + 1).unwrap();
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// `ln P[X = k]` for `X ~ Bin(n, q)`, via the saddle-point expansion.
pub(crate) fn ln_binomial_pmf<T: Scalar>(n: u64, k: u64, q: T) -> T {
    let nf = T::from_count(n);
    if k == 0 {
        return nf * (-q).ln_1p();
    }
    if k == n {
        return nf * q.ln();
    }
    let kf = T::from_count(k);
    let p_fail = T::one() - q;
    let lc = stirlerr::<T>(n) - stirlerr::<T>(k) - stirlerr::<T>(n - k)
        - bd0(kf, nf * q)
        - bd0(nf - kf, nf * p_fail);
    let lf = T::TAU().ln() + kf.ln() + (-kf / nf).ln_1p();
    lc - T::lit(0.5) * lf
}

/// Sum of `exp(ln_start + ...)` over a run of pmf terms with monotonically
/// shrinking ratios, returned as a natural log.
fn ln_tail_sum<T: Scalar>(ln_start: T, mut ratio: impl FnMut(u64) -> Option<T>) -> T {
    let mut term = T::one();
    let mut sum = T::one();
    let mut step = 0u64;
    while let Some(r) = ratio(step) {
        term = term * r;
        sum = sum + term;
        if term < sum * T::epsilon() * T::lit(1e-2) {
            break;
        }
        step += 1;
    }
    ln_start + sum.ln()
}

/// `log10 P[X >= k]` for `X ~ Bin(n, q)`, evaluated in log space.
pub fn log_binomial_sf<T: Scalar>(n: u64, k: u64, q: T) -> Result<Log10Probability<T>> {
    if k > n {
        return Err(Error::domain(format!("binomial tail needs k <= n, got k={k}, n={n}")));
    }
    if !in_open_unit_interval(q) {
        return Err(Error::domain(format!("binomial success probability must be in (0, 1), got {q}")));
    }
    if k == 0 {
        return Ok(Log10Probability(T::zero()));
    }
    let odds = q / (T::one() - q);
    let mean_floor = (T::from_count(n) * q).floor();
    if T::from_count(k) <= mean_floor {
        // Upper tail holds at least half the mass; go through the lower tail.
        let start = k - 1;
        let ln_lower = ln_tail_sum(ln_binomial_pmf(n, start, q), |step| {
            let j = start.checked_sub(step)?;
            if j == 0 {
                return None;
            }
            // P[j-1] / P[j]
            Some(T::from_count(j) / (T::from_count(n - j + 1) * odds))
        });
        let lower = ln_lower.exp().min(T::one());
        Ok(Log10Probability::from_ln((-lower).ln_1p()))
    } else {
        let ln_upper = ln_tail_sum(ln_binomial_pmf(n, k, q), |step| {
            let j = k + step;
            if j >= n {
                return None;
            }
            // P[j+1] / P[j]
            Some(T::from_count(n - j) / T::from_count(j + 1) * odds)
        });
        Ok(Log10Probability::from_ln(ln_upper))
    }
}
