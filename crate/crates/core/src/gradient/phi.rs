//! Alternative dissipation shapes and the logarithmic mean.

/// `(a − b)/(log a − log b)`, with `Λ(a, a) = a` and `Λ(a, 0) = 0`.
pub fn log_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let sum = a + b;
    if (a - b).abs() <= 1e-4 * sum {
        let x = (a - b) / sum;
        let x2 = x * x;
        let m = 0.5 * sum;
        m / (1.0 + x2 * (1.0 / 3.0 + x2 * (1.0 / 5.0 + x2 / 7.0)))
    } else {
        (a - b) / (a.ln() - b.ln())
    }
}

/// `Λ(a, b)` for the cosh shape.
pub fn geometric_mean(a: f64, b: f64) -> f64 {
    (a * b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_mean_limits() {
        assert_eq!(log_mean(2.5, 2.5), 2.5);
        assert_eq!(log_mean(0.0, 3.0), 0.0);
        let a = 1.0;
        for &b in &[1.0 + 1e-9, 1.0 + 1e-6, 1.0 + 1e-4, 1.0 + 1e-3, 2.0, 10.0] {
            let direct = (a - b) / (f64::ln(a) - f64::ln(b));
            let tol = if (b - a) > 1e-5 { 1e-13 } else { 1e-8 };
            assert!((log_mean(a, b) - direct).abs() <= tol, "b = {b}");
            assert_eq!(log_mean(a, b), log_mean(b, a));
        }
        // series branch agrees with the direct formula just below the switch
        let b1 = 1.0 + 2.0 * 1e-4 * 0.999;
        let direct = (1.0 - b1) / (0.0 - f64::ln(b1));
        assert!((log_mean(1.0, b1) - direct).abs() < 1e-11);
    }

    #[test]
    fn cosh_shape_mean() {
        // (a − b)/C*′(log a − log b) = √(ab)
        for &(a, b) in &[(4.0f64, 1.0f64), (0.2, 7.0), (3.0, 3.5)] {
            let via_phi = (a - b) / (2.0 * (0.5 * (a.ln() - b.ln())).sinh());
            assert!((via_phi - geometric_mean(a, b)).abs() < 1e-13 * geometric_mean(a, b));
        }
    }
}
