//! Numerically stable scalar primitives shared across the crate.

/// `log(1 + e^x)`, computed as `max(x, 0) + log1p(e^(-|x|))` so it neither
/// overflows for large positive `x` nor loses precision for large negative `x`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic function `1 / (1 + e^(-x))`, stable for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sum_i e^(t_i))` with max subtraction.
///
/// Entries equal to negative infinity drop out; an empty or all-infinite
/// input yields negative infinity.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.iter().map(|&t| (t - max).exp()).sum();
    max + sum.ln()
}
