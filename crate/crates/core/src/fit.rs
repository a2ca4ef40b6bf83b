//! Reductions and linear least-squares fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Neumaier-compensated sum; the result depends only on the order of `xs`.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and standard error `s/√n` (zero for a single sample).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = compensated_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// `A + B sin(2δ) + C cos(4δ)`; coefficients `[A, B, C]`.
    Fourier,
    /// `y = a·N^p`; coefficients `[a, p]`.
    PowerLaw,
    /// `y = a + b ln N`; coefficients `[a, b]`.
    LogLinear,
}

impl FitModel {
    pub fn tag(&self) -> &'static str {
        match self {
            FitModel::Fourier => "fourier",
            FitModel::PowerLaw => "powerlaw",
            FitModel::LogLinear => "loglinear",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: FitModel,
    pub coefficients: Vec<f64>,
    /// NaN when there are no residual degrees of freedom.
    pub std_errors: Vec<f64>,
    /// Euclidean norm of the residuals of the linear problem (log space for
    /// power laws).
    pub residual_norm: f64,
    /// Coefficient of determination of the linear problem.
    pub r_squared: f64,
}

impl FitResult {
    pub fn evaluate(&self, x: f64) -> f64 {
        let c = &self.coefficients;
        match self.model {
            FitModel::Fourier => c[0] + c[1] * (2.0 * x).sin() + c[2] * (4.0 * x).cos(),
            FitModel::PowerLaw => c[0] * x.powf(c[1]),
            FitModel::LogLinear => c[0] + c[1] * x.ln(),
        }
    }
}

struct Linear {
    beta: Vec<f64>,
    se: Vec<f64>,
    rss: f64,
    r_squared: f64,
}

fn least_squares(design: DMatrix<f64>, y: &[f64]) -> Result<Linear> {
    let (n, k) = design.shape();
    if n < k {
        return Err(Error::RankDeficient);
    }
    let yv = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::RankDeficient);
    }
    let beta = svd.solve(&yv, 0.0).map_err(|_| Error::RankDeficient)?;
    let resid = &yv - &design * &beta;
    let rss = resid.norm_squared();
    let v_t = svd.v_t.as_ref().expect("requested");
    let se = (0..k)
        .map(|j| {
            if n == k {
                return f64::NAN;
            }
            let sigma2 = rss / (n - k) as f64;
            let var: f64 = (0..k)
                .map(|r| (v_t[(r, j)] / svd.singular_values[r]).powi(2))
                .sum();
            (sigma2 * var).sqrt()
        })
        .collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    Ok(Linear {
        beta: beta.iter().copied().collect(),
        se,
        rss,
        r_squared,
    })
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(invalid("fit inputs must be finite"));
    }
    Ok(())
}

/// Least-squares fit of `α(δ) = A + B sin(2δ) + C cos(4δ)`.
pub fn fit_fourier(delta: &[f64], alpha: &[f64]) -> Result<FitResult> {
    check_lengths(delta, alpha)?;
    let design = DMatrix::from_fn(delta.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => (2.0 * delta[i]).sin(),
        _ => (4.0 * delta[i]).cos(),
    });
    let fit = least_squares(design, alpha)?;
    Ok(FitResult {
        model: FitModel::Fourier,
        coefficients: fit.beta,
        std_errors: fit.se,
        residual_norm: fit.rss.sqrt(),
        r_squared: fit.r_squared,
    })
}

fn log_design(x: &[f64]) -> Result<DMatrix<f64>> {
    if x.iter().any(|&v| v <= 0.0) {
        return Err(invalid("abscissae must be positive"));
    }
    Ok(DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i].ln() }))
}

/// `y = a·N^p` by regression of `ln y` on `ln N`.
pub fn fit_power_law(n: &[f64], y: &[f64]) -> Result<FitResult> {
    check_lengths(n, y)?;
    if y.iter().any(|&v| v <= 0.0) {
        return Err(invalid("power-law fit needs positive ordinates"));
    }
    let ln_y: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let fit = least_squares(log_design(n)?, &ln_y)?;
    let a = fit.beta[0].exp();
    Ok(FitResult {
        model: FitModel::PowerLaw,
        coefficients: vec![a, fit.beta[1]],
        std_errors: vec![a * fit.se[0], fit.se[1]],
        residual_norm: fit.rss.sqrt(),
        r_squared: fit.r_squared,
    })
}

/// `y = a + b ln N`.
pub fn fit_log_linear(n: &[f64], y: &[f64]) -> Result<FitResult> {
    check_lengths(n, y)?;
    let fit = least_squares(log_design(n)?, y)?;
    Ok(FitResult {
        model: FitModel::LogLinear,
        coefficients: fit.beta,
        std_errors: fit.se,
        residual_norm: fit.rss.sqrt(),
        r_squared: fit.r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn delta_grid() -> Vec<f64> {
        (0..9).map(|k| k as f64 * PI / 16.0).collect()
    }

    #[test]
    fn recovers_four_atom_formula() {
        let d = delta_grid();
        let a: Vec<f64> = d
            .iter()
            .map(|x| (55.0 - 12.0 * (2.0 * x).sin() - (4.0 * x).cos()) / 36.0)
            .collect();
        let fit = fit_fourier(&d, &a).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 55.0 / 36.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[1], -1.0 / 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[2], -1.0 / 36.0, epsilon = 1e-10);
        assert!(fit.residual_norm < 1e-12);
    }

    #[test]
    fn recovers_six_atom_formula() {
        let d = delta_grid();
        let a: Vec<f64> = d
            .iter()
            .map(|x| (303.0 - 110.0 * (2.0 * x).sin() - 3.0 * (4.0 * x).cos()) / 100.0)
            .collect();
        let fit = fit_fourier(&d, &a).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 3.03, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[1], -1.10, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[2], -0.03, epsilon = 1e-10);
    }

    #[test]
    fn constant_data() {
        let d = delta_grid();
        let fit = fit_fourier(&d, &vec![2.5; d.len()]).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient() {
        assert_eq!(fit_fourier(&[0.1, 0.1, 0.1], &[1.0, 2.0, 3.0]), Err(Error::RankDeficient));
        assert_eq!(fit_fourier(&[0.1, 0.2], &[1.0, 2.0]), Err(Error::RankDeficient));
        assert_eq!(fit_fourier(&[0.0, PI / 2.0, PI], &[1.0, 2.0, 3.0]), Err(Error::RankDeficient));
    }

    #[test]
    fn power_laws() {
        let n: Vec<f64> = (2..=18).step_by(2).map(f64::from).collect();
        let sq: Vec<f64> = n.iter().map(|x| x * x).collect();
        let fit = fit_power_law(&n, &sq).unwrap();
        assert_abs_diff_eq!(fit.coefficients[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[0], 1.0, epsilon = 1e-12);
        let lin: Vec<f64> = n.iter().map(|x| 3.0 * x).collect();
        let fit = fit_power_law(&n, &lin).unwrap();
        assert_abs_diff_eq!(fit.coefficients[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.evaluate(10.0), 30.0, epsilon = 1e-10);
        assert!(fit_power_law(&[1.0, 2.0], &[1.0, -1.0]).is_err());
    }

    #[test]
    fn signal_factor_exponent_window() {
        let n: Vec<f64> = (2..=18).step_by(2).map(f64::from).collect();
        let y: Vec<f64> = n
            .iter()
            .map(|&x| crate::signal::f_factor(x as usize, std::f64::consts::FRAC_1_SQRT_2) / 4.0)
            .collect();
        let p = fit_power_law(&n, &y).unwrap().coefficients[1];
        assert!((1.7..=2.0).contains(&p), "p = {p}");
    }

    #[test]
    fn log_linear() {
        let n = [16.0, 32.0, 64.0, 128.0];
        let y: Vec<f64> = n.iter().map(|x: &f64| 1.0 + 2.0 * x.ln()).collect();
        let fit = fit_log_linear(&n, &y).unwrap();
        assert_abs_diff_eq!(fit.coefficients[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn stderr_of_mean() {
        let (m, s) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(m, 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
        assert_eq!(mean_and_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn compensation_helps() {
        let xs = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(&xs), 1.0);
    }

    proptest! {
        #[test]
        fn exact_fourier_recovery(a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64) {
            let d = delta_grid();
            let y: Vec<f64> = d.iter().map(|x| a + b * (2.0 * x).sin() + c * (4.0 * x).cos()).collect();
            let fit = fit_fourier(&d, &y).unwrap();
            prop_assert!((fit.coefficients[0] - a).abs() < 1e-10);
            prop_assert!((fit.coefficients[1] - b).abs() < 1e-10);
            prop_assert!((fit.coefficients[2] - c).abs() < 1e-10);
        }

        #[test]
        fn exact_power_recovery(a in 0.1..10.0f64, p in -3.0..3.0f64) {
            let n = [4.0, 8.0, 16.0, 32.0, 64.0];
            let y: Vec<f64> = n.iter().map(|x: &f64| a * x.powf(p)).collect();
            let fit = fit_power_law(&n, &y).unwrap();
            prop_assert!((fit.coefficients[1] - p).abs() < 1e-10);
            prop_assert!((fit.coefficients[0] / a - 1.0).abs() < 1e-10);
        }
    }
}
