//! Auditory filter shapes.

use crate::error::{Error, Result};

/// Equivalent rectangular bandwidth of the normal auditory filter at `fc` Hz.
pub fn erb(fc: f64) -> Result<f64> {
    if !(fc > 0.0) {
        return Err(Error::Config(format!("centre frequency must be positive, got {fc}")));
    }
    Ok(erb_unchecked(fc))
}

pub(crate) fn erb_unchecked(fc: f64) -> f64 {
    24.7 * (0.00437 * fc + 1.0)
}

/// ERB-number scale, derivative approximately `1 / erb(f)`.
pub fn erb_rate(f: f64) -> f64 {
    21.4 * (0.00437 * f + 1.0).log10()
}

pub fn erb_rate_inverse(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) / 0.00437
}

/// Sharpness of a rounded-exponential filter at `fc` widened by `r`.
pub fn roex_p(fc: f64, r: f64) -> f64 {
    4.0 * fc / (r * erb_unchecked(fc))
}

/// Rounded-exponential intensity weighting `(1 + p g) exp(-p g)` at relative
/// offset `g = |f - fc| / fc`.
pub fn auditory_filter_weight(g: f64, fc: f64, r: f64) -> f64 {
    let pg = roex_p(fc, r) * g.abs();
    (1.0 + pg) * (-pg).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erb_values() {
        assert!((erb(1000.0).unwrap() - 132.639).abs() < 1e-9);
        assert!((erb(4000.0).unwrap() - 456.456).abs() < 1e-9);
        assert!((erb(1e-9).unwrap() - 24.7).abs() < 1e-6);
        assert!(erb(0.0).is_err());
        assert!(erb(-5.0).is_err());
    }

    #[test]
    fn erb_rate_round_trip() {
        for f in [50.0, 100.0, 1000.0, 16_000.0] {
            assert!((erb_rate_inverse(erb_rate(f)) - f).abs() < 1e-8 * f);
        }
        // derivative is 1/erb up to the rounding of the published constants
        for f in [100.0, 2000.0, 10_000.0] {
            let d = (erb_rate(f + 0.01) - erb_rate(f - 0.01)) / 0.02;
            assert!((d * erb_unchecked(f) - 1.0).abs() < 0.005);
        }
    }

    #[test]
    fn weight_values() {
        assert_eq!(auditory_filter_weight(0.0, 1234.0, 2.5), 1.0);
        let p = roex_p(1000.0, 1.0);
        assert!((p - 30.157).abs() < 1e-3);
        let w = auditory_filter_weight(0.5, 1000.0, 1.0);
        let hand = (1.0 + p * 0.5) * (-p * 0.5).exp();
        assert!((w - hand).abs() < 1e-15);
        assert!((w - 4.55e-6).abs() < 0.01e-6, "{w}");
    }

    #[test]
    fn weight_decreases_with_offset() {
        for r in [1.0, 1.6, 4.0] {
            let mut prev = 1.0;
            for k in 1..200 {
                let w = auditory_filter_weight(k as f64 * 0.01, 800.0, r);
                assert!(w < prev);
                prev = w;
            }
        }
    }
}
