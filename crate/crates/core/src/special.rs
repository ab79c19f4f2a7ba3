//! Special functions: complementary error function, Bessel functions of the
//! first kind (small argument), and normalized Hermite functions.

use crate::scalar::Real;

/// Abscissa of the first maximum of `J1`, i.e. the first zero of `J1'`.
pub const J1_FIRST_MAX_ARG: f64 = 1.841_183_781_340_659_3;
/// `J1(J1_FIRST_MAX_ARG)`, the largest value `J1` attains.
pub const J1_MAX: f64 = 0.581_865_224_281_596_4;

// Rational approximations of erfc on the four standard intervals (FreeBSD
// s_erf.c coefficient set).
const ERX: f64 = 8.45062911510467529297e-01;
const PP: [f64; 5] = [
    1.28379167095512558561e-01,
    -3.25042107247001499370e-01,
    -2.84817495755985104766e-02,
    -5.77027029648944159157e-03,
    -2.37630166566501626084e-05,
];
const QQ: [f64; 6] = [
    1.0,
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
const QA: [f64; 7] = [
    1.0,
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
const SA: [f64; 9] = [
    1.0,
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
const SB: [f64; 8] = [
    1.0,
    3.03380607434824582924e+01,
    3.25792512996573918826e+02,
    1.53672958608443695994e+03,
    3.19985821950859553908e+03,
    2.55305040643316442583e+03,
    4.74528541206955367215e+02,
    -2.24409524465858183362e+01,
];

#[inline]
fn horner<T: Real>(coeffs: &[f64], z: T) -> T {
    coeffs
        .iter()
        .rev()
        .fold(T::zero(), |acc, &c| acc * z + T::lit(c))
}

/// Complementary error function, `erfc(x) = 1 - erf(x)`.
///
/// Piecewise rational approximation; relative error below 1e-15 in `f64`
/// for `|x| <= 8`, with graceful underflow to zero beyond `x ~ 27`.
pub fn erfc<T: Real>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    let one = T::one();
    let two = T::lit(2.0);
    let neg = x < T::zero();
    let ax = x.abs();

    if ax < T::lit(0.84375) {
        let z = ax * ax;
        let y = horner(&PP, z) / horner(&QQ, z);
        let erf_ax = ax + ax * y;
        return if neg { one + erf_ax } else { one - erf_ax };
    }
    if ax < T::lit(1.25) {
        let s = ax - one;
        let p = horner(&PA, s) / horner(&QA, s);
        return if neg {
            one + T::lit(ERX) + p
        } else {
            one - T::lit(ERX) - p
        };
    }
    if ax >= T::lit(28.0) {
        return if neg { two } else { T::zero() };
    }
    let s = one / (ax * ax);
    let ratio = if ax < T::lit(1.0 / 0.35) {
        horner(&RA, s) / horner(&SA, s)
    } else {
        horner(&RB, s) / horner(&SB, s)
    };
    let tail = (-ax * ax - T::lit(0.5625) + ratio).exp() / ax;
    if neg {
        two - tail
    } else {
        tail
    }
}

/// Standard normal density.
#[inline]
pub fn normal_pdf<T: Real>(x: T) -> T {
    (-(x * x) / T::lit(2.0)).exp() / (T::TAU()).sqrt()
}

/// Bessel function of the first kind `J_n(x)` from its ascending series.
///
/// Accurate to a few ulp for `|x| <= 4`; the series still converges beyond
/// that but loses digits to cancellation.
pub fn bessel_j<T: Real>(order: u32, x: T) -> T {
    let half = x / T::lit(2.0);
    let q = -(half * half);
    // leading term (x/2)^n / n!
    let mut term = (1..=order).fold(T::one(), |acc, k| acc * half / T::from_u32(k).unwrap());
    let mut sum = term;
    for k in 1..200u32 {
        term = term * q / T::from_u32(k * (k + order)).unwrap();
        sum = sum + term;
        if term.abs() <= T::epsilon() * sum.abs() {
            break;
        }
    }
    sum
}

#[inline]
pub fn bessel_j1<T: Real>(x: T) -> T {
    bessel_j(1, x)
}

/// `dJ1/dx = (J0 - J2) / 2`.
#[inline]
pub fn bessel_j1_derivative<T: Real>(x: T) -> T {
    (bessel_j(0, x) - bessel_j(2, x)) / T::lit(2.0)
}

/// Physicists' Hermite polynomial `H_n(x)` by the three-term recurrence
/// `H_{n+1} = 2x H_n - 2n H_{n-1}`.
pub fn hermite_polynomial<T: Real>(n: usize, x: T) -> T {
    let two = T::lit(2.0);
    let mut prev = T::one();
    if n == 0 {
        return prev;
    }
    let mut cur = two * x;
    for k in 1..n {
        let next = two * x * cur - two * T::from_usize_lossy(k) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Hermite-Gaussian mode function matched to a Gaussian PSF of width `sigma`:
///
/// `phi_q(x) = (2 pi sigma^2)^{-1/4} (2^q q!)^{-1/2} H_q(x / (sqrt2 sigma)) exp(-x^2 / (4 sigma^2))`.
///
/// Evaluated with the normalized recurrence so the `2^q q!` factor never
/// materializes; stable well past `q = 60`.
pub fn hermite_gauss<T: Real>(q: usize, x: T, sigma: T) -> T {
    let two = T::lit(2.0);
    let u = x / (two.sqrt() * sigma);
    // psi_k(u): orthonormal Hermite functions w.r.t. du
    let mut prev = T::PI().powf(T::lit(-0.25)) * (-(u * u) / two).exp();
    let mut cur = prev;
    if q > 0 {
        cur = two.sqrt() * u * prev;
        for k in 1..q {
            let kf = T::from_usize_lossy(k);
            let next = (two / (kf + T::one())).sqrt() * u * cur - (kf / (kf + T::one())).sqrt() * prev;
            prev = cur;
            cur = next;
        }
    }
    // change of variable x = sqrt2 sigma u
    cur / (two.sqrt() * sigma).sqrt()
}
