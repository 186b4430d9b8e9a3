// SPDX-License-Identifier: Apache-2.0

//! Sample moments used by the reports.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Root mean square deviation about the sample mean (population form).
pub fn rms_about_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

pub fn max_abs_deviation(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().fold(0.0f64, |acc, x| acc.max((x - m).abs()))
}

/// Sample standard deviation with Bessel's correction; 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn skewness(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let s = rms_about_mean(xs);
    if s == 0.0 {
        return 0.0;
    }
    xs.iter().map(|x| ((x - m) / s).powi(3)).sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((rms_about_mean(&xs) - 1.25f64.sqrt()).abs() < 1e-15);
        assert!((sample_std(&xs) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(max_abs_deviation(&xs), 1.5);
        assert_eq!(skewness(&xs), 0.0);
        assert_eq!(sample_std(&[3.0]), 0.0);
        assert_eq!(rms_about_mean(&[]), 0.0);
        assert!(skewness(&[0.0, 0.0, 0.0, 10.0]) > 1.0);
    }
}
