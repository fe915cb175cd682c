//! Adaptive Gauss–Kronrod quadrature on finite intervals and on half-lines.
//!
//! Half-line integrals are summed over dyadic panels `[a, a+1], [a+1, a+2],
//! [a+2, a+4], ...`; the geometric decay of successive panel masses gives both
//! the stopping rule and the divergence test.

use serde::{Deserialize, Serialize};

/// Result of an integral that may diverge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integral {
    Finite(f64),
    Infinite,
}

impl Integral {
    pub fn is_finite(&self) -> bool {
        matches!(self, Integral::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Integral::Finite(v) => Some(v),
            Integral::Infinite => None,
        }
    }

    /// Finite value or `f64::INFINITY`.
    pub fn as_f64(&self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }
}

/// Default absolute tolerance per panel.
pub const PANEL_TOL: f64 = 1e-10;

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
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = h * x;
        let pair = f(c - dx) + f(c + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut total = 0.0;
    let mut stack = vec![(a, b, tol, 0u32)];
    while let Some((lo, hi, t, depth)) = stack.pop() {
        let (val, err) = gk15(&f, lo, hi);
        if err <= t.max(f64::EPSILON * val.abs()) || depth >= 48 || hi - lo <= 1e-14 * lo.abs().max(1.0) {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * t, depth + 1));
            stack.push((mid, hi, 0.5 * t, depth + 1));
        }
    }
    total
}

/// Like [`integrate`] but splits at the given breakpoints (discontinuities or
/// kinks of the integrand) that fall inside `(a, b)`.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(|x, y| x.total_cmp(y));
    cuts.dedup();
    let mut lo = a;
    let mut total = 0.0;
    let n = cuts.len() + 1;
    for hi in cuts.into_iter().chain(std::iter::once(b)) {
        total += integrate(&f, lo, hi, tol / n as f64);
        lo = hi;
    }
    total
}

/// Number of dyadic panels before the half-line integral is declared divergent.
const MAX_PANELS: usize = 140;

/// Integral of a non-negative `f` over `[a, ∞)`, or `Infinite` when the
/// dyadic panel masses do not decay.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, a: f64, breaks: &[f64], tol: f64) -> Integral {
    let mut total = 0.0;
    let mut lo = a;
    let mut width = 1.0;
    let mut prev_panel = f64::NAN;
    let mut zero_run = 0;
    for _ in 0..MAX_PANELS {
        let hi = lo + width;
        let panel = integrate_with_breaks(&f, lo, hi, breaks, tol);
        if !panel.is_finite() {
            return Integral::Infinite;
        }
        total += panel;
        if !total.is_finite() {
            return Integral::Infinite;
        }
        if panel == 0.0 {
            zero_run += 1;
            // Two empty panels past every breakpoint means compact support.
            if zero_run >= 2 && breaks.iter().all(|&b| b <= lo) {
                return Integral::Finite(total);
            }
        } else {
            zero_run = 0;
        }
        if prev_panel.is_finite() && prev_panel > 0.0 && panel > 0.0 {
            let ratio = panel / prev_panel;
            if ratio < 0.9 {
                let remainder = panel * ratio / (1.0 - ratio);
                if remainder <= tol + 1e-12 * total.abs() {
                    return Integral::Finite(total + remainder);
                }
            }
        }
        prev_panel = panel;
        lo = hi;
        width *= 2.0;
    }
    Integral::Infinite
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-12);
        assert!((v - 9.0).abs() < 1e-12);
    }

    #[test]
    fn step_with_breaks() {
        let f = |x: f64| if x < 1.3 { 2.0 } else { 0.5 };
        let v = integrate_with_breaks(f, 0.0, 2.0, &[1.3], 1e-12);
        assert!((v - (2.6 + 0.35)).abs() < 1e-12);
    }

    #[test]
    fn half_line_convergent_and_divergent() {
        let e = integrate_half_line(|s: f64| (-s).exp(), 0.0, &[], 1e-12);
        assert!((e.value().unwrap() - 1.0).abs() < 1e-10);
        let p = integrate_half_line(|s: f64| (1.0 + s).powi(-2), 0.0, &[], 1e-12);
        assert!((p.value().unwrap() - 1.0).abs() < 1e-9);
        let d = integrate_half_line(|s: f64| (1.0 + s).powf(-0.5), 0.0, &[], 1e-12);
        assert_eq!(d, Integral::Infinite);
        let h = integrate_half_line(|s: f64| 1.0 / (1.0 + s), 0.0, &[], 1e-12);
        assert_eq!(h, Integral::Infinite);
    }

    #[test]
    fn compact_support() {
        let v = integrate_half_line(|s: f64| if s < 3.0 { 1.0 } else { 0.0 }, 0.0, &[3.0], 1e-12);
        assert!((v.value().unwrap() - 3.0).abs() < 1e-12);
    }
}
