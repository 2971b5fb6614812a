//! Scalar math helpers.
//!
//! Transcendentals are routed through `libm` so the crate stays `no_std` and
//! results are bit-identical across platforms.

/// Largest f64 strictly below 1.0.
pub const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn pow(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

/// Logistic function, computed branch-wise for stability. The result is
/// clamped into the open interval (0, 1): saturation never returns exactly
/// 0.0 or 1.0.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, ONE_BELOW)
}

/// ln(1 + e^x) without overflow for large |x|.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + ln_1p(exp(-x))
    } else {
        ln_1p(exp(x))
    }
}

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf-based) GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// Derivative of the erf-based GELU.
#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2)) + x * INV_SQRT_2PI * exp(-0.5 * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint() {
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn sigmoid_saturates_inside_open_interval() {
        let hi = sigmoid(50.0);
        assert!(hi > 1.0 - 1e-15 && hi < 1.0, "sigmoid(50) = {hi}");
        let hi = sigmoid(1e6);
        assert!(hi < 1.0);
        let lo = sigmoid(-1e6);
        assert!(lo > 0.0);
    }

    #[test]
    fn sigmoid_closed_form_ln3() {
        // sigmoid(ln 3) = 3 / (1 + 3)
        let v = sigmoid(ln(3.0));
        assert!((v - 0.75).abs() < 1e-15, "got {v}");
    }

    #[test]
    fn sigmoid_complement_sums_to_one() {
        let mut x = -30.0;
        while x <= 30.0 {
            let s = sigmoid(x) + sigmoid(-x);
            assert!((s - 1.0).abs() <= 1e-15, "x={x} sum={s}");
            x += 0.37;
        }
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        let eps = 1e-6;
        for &x in &[-2.5, -0.3, 0.0, 0.7, 3.1] {
            let num = (gelu(x + eps) - gelu(x - eps)) / (2.0 * eps);
            assert!((gelu_grad(x) - num).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn softplus_stable_at_extremes() {
        assert!((softplus(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
    }
}
