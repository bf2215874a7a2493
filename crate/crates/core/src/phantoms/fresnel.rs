//! Unnormalized Fresnel integrals `S(s) = ∫₀ˢ sin(t²) dt`, `C(s) = ∫₀ˢ cos(t²) dt`.
//!
//! Adaptive Gauss–Kronrod (7/15) quadrature up to `s = 8`, asymptotic
//! expansion of the tail `∫ₛ^∞ e^{it²} dt` beyond.

use crate::error::{Error, Result};

/// `√(π/8)`, the common limit of `S` and `C`.
pub const FRESNEL_LIMIT: f64 = 0.626_657_068_657_750_1;

const SWITCH: f64 = 8.0;
const TOL: f64 = 1e-14;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = r * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * r, (kron - gauss).abs() * r)
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (val, err) = gauss_kronrod(f, a, b);
    if err <= tol || depth == 0 {
        return val;
    }
    let c = 0.5 * (a + b);
    adaptive(f, a, c, 0.5 * tol, depth - 1) + adaptive(f, c, b, 0.5 * tol, depth - 1)
}

/// `(Re, Im)` of `∫ₛ^∞ e^{it²} dt` for large `s`.
///
/// Repeated integration by parts gives
/// `e^{is²} Σₖ i^{k+1} (−1)^k (2k−1)!! / 2^{k+1} · s^{−1−2k}`.
fn asymptotic_tail(s: f64) -> (f64, f64) {
    let inv2 = 1.0 / (s * s);
    let mut coef = 0.5 / s;
    let (mut re, mut im) = (0.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 0..60u32 {
        if coef.abs() >= last || coef.abs() < 1e-18 {
            break;
        }
        last = coef.abs();
        // i^{k+1} (−1)^k cycles through i, 1, −i, −1
        match k % 4 {
            0 => im += coef,
            1 => re += coef,
            2 => im -= coef,
            _ => re -= coef,
        }
        coef *= (2 * k + 1) as f64 * 0.5 * inv2;
    }
    let (sn, cs) = (s * s).sin_cos();
    (cs * re - sn * im, sn * re + cs * im)
}

fn check_arg(s: f64) -> Result<()> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("Fresnel integrals need a finite s ≥ 0, got {s}")));
    }
    Ok(())
}

/// `S(s) = ∫₀ˢ sin(t²) dt` for `s ≥ 0`.
pub fn fresnel_s(s: f64) -> Result<f64> {
    check_arg(s)?;
    if s <= SWITCH {
        Ok(adaptive(&|t: f64| (t * t).sin(), 0.0, s, TOL, 40))
    } else {
        Ok(FRESNEL_LIMIT - asymptotic_tail(s).1)
    }
}

/// `C(s) = ∫₀ˢ cos(t²) dt` for `s ≥ 0`.
pub fn fresnel_c(s: f64) -> Result<f64> {
    check_arg(s)?;
    if s <= SWITCH {
        Ok(adaptive(&|t: f64| (t * t).cos(), 0.0, s, TOL, 40))
    } else {
        Ok(FRESNEL_LIMIT - asymptotic_tail(s).0)
    }
}
