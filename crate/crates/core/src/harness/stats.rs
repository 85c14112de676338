//! Summary statistics used by the simulation experiments: moments,
//! correlation, goodness-of-fit distances, and a small least-squares fit.

use nalgebra::{DMatrix, DVector};

use crate::balance::CovariateMatrix;
use crate::theory::chi2_cdf;

/// Two-sided 97.5% standard normal quantile, for classical z intervals.
pub const Z_97_5: f64 = 1.959963984540054;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with the n−1 divisor.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

/// Sample covariance with the n−1 divisor.
pub fn covariance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ma, mb) = (mean(a), mean(b));
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (a.len() - 1) as f64
}

pub fn pearson_correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ma, mb) = (mean(a), mean(b));
    let mut saa = 0.0;
    let mut sbb = 0.0;
    let mut sab = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
        sab += (x - ma) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Kolmogorov–Smirnov distance between a sample and a reference CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!sample.is_empty());
    let mut sorted = sample.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("KS sample contains NaN"));
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max((f - i as f64 / n).abs());
        sup = sup.max((f - (i + 1) as f64 / n).abs());
    }
    sup
}

/// P-value of the Pearson χ² goodness-of-fit statistic with cells−1 degrees
/// of freedom.
pub fn chi2_gof_p(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    assert!(observed.len() >= 2);
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    1.0 - chi2_cdf(observed.len() - 1, stat)
}

/// Empirical lower quantile: the ⌈q·n⌉-th smallest value.
pub fn lower_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!(q > 0.0 && q <= 1.0);
    let rank = ((q * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// R² of an intercept-plus-covariates least-squares fit.
pub fn ols_r_squared(y: &[f64], x: &CovariateMatrix) -> f64 {
    let n = x.n_units();
    let k = x.n_covariates();
    assert_eq!(y.len(), n);
    let mut design = DMatrix::zeros(n, k + 1);
    for i in 0..n {
        design[(i, 0)] = 1.0;
        for j in 0..k {
            design[(i, j + 1)] = x.value(i, j);
        }
    }
    let yv = DVector::from_column_slice(y);
    let gram = design.transpose() * &design;
    let moment = design.transpose() * &yv;
    let coef = gram
        .cholesky()
        .map(|c| c.solve(&moment))
        .unwrap_or_else(|| DVector::zeros(k + 1));
    let fitted = design * coef;
    let my = mean(y);
    let sst: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sst == 0.0 {
        return 0.0;
    }
    let ssr: f64 = y
        .iter()
        .zip(fitted.iter())
        .map(|(v, f)| (v - f).powi(2))
        .sum();
    1.0 - ssr / sst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moments_hand_values() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(variance(&[0.0, 2.0]), 2.0);
        assert_relative_eq!(variance(&[1.0, 2.0, 3.0, 4.0]), 5.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn correlation_of_exact_linear_data() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let up: Vec<f64> = a.iter().map(|v| 3.0 * v + 1.0).collect();
        let down: Vec<f64> = a.iter().map(|v| -2.0 * v).collect();
        assert_relative_eq!(pearson_correlation(&a, &up), 1.0, epsilon = 1e-12);
        assert_relative_eq!(pearson_correlation(&a, &down), -1.0, epsilon = 1e-12);
        let b = [1.0, -1.0, -1.0, 1.0];
        assert_relative_eq!(pearson_correlation(&a, &b), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ks_distance_of_a_uniform_lattice_is_small() {
        let n = 1000;
        let lattice: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_distance(&lattice, |x| x.clamp(0.0, 1.0));
        assert!(d <= 0.5 / n as f64 + 1e-12, "{d}");
        let shifted: Vec<f64> = lattice.iter().map(|x| x * 0.5).collect();
        assert!(ks_distance(&shifted, |x| x.clamp(0.0, 1.0)) > 0.4);
    }

    #[test]
    fn gof_p_value_separates_good_and_bad_fits() {
        let even = [250u64, 251, 249, 250];
        let expected = [250.0; 4];
        assert!(chi2_gof_p(&even, &expected) > 0.9);
        let skewed = [400u64, 100, 250, 250];
        assert!(chi2_gof_p(&skewed, &expected) < 1e-6);
    }

    #[test]
    fn quantile_uses_the_ceiling_rank() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(lower_quantile(&sorted, 0.25), 1.0);
        assert_eq!(lower_quantile(&sorted, 0.5), 2.0);
        assert_eq!(lower_quantile(&sorted, 0.51), 3.0);
        assert_eq!(lower_quantile(&sorted, 1.0), 4.0);
    }

    #[test]
    fn r_squared_of_exact_and_orthogonal_fits() {
        let x = CovariateMatrix::from_rows(
            &[
                vec![1.0, 0.0],
                vec![2.0, 1.0],
                vec![3.0, -1.0],
                vec![4.0, 2.0],
                vec![5.0, 0.5],
            ],
            None,
        )
        .unwrap();
        let y: Vec<f64> = (0..5)
            .map(|i| 2.0 + 1.5 * x.value(i, 0) - 0.7 * x.value(i, 1))
            .collect();
        assert_relative_eq!(ols_r_squared(&y, &x), 1.0, epsilon = 1e-12);
        assert_eq!(ols_r_squared(&[3.0; 5], &x), 0.0);
    }
}
