use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{Design, INTERCEPT};
use super::dist::{t_critical, t_two_sided};
use super::RegressionError;

/// Relative size of a diagonal entry of R below which a column is treated
/// as a linear combination of the preceding ones.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardErrors {
    Conventional,
    Clustered { clusters: usize },
}

#[derive(Debug, Clone, Default)]
pub struct OlsOptions {
    /// Cluster label of every row; enables cluster-robust standard errors.
    pub clusters: Option<Vec<String>>,
    /// Degrees of freedom already spent by a within transformation.
    pub absorbed_dof: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub ci95: Vec<(f64, f64)>,
    pub covariance: Vec<Vec<f64>>,
    pub n: usize,
    pub dof: usize,
    pub r_squared: f64,
    pub rss: f64,
    pub standard_errors_kind: StandardErrors,
    #[serde(skip)]
    pub fitted: Vec<f64>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl RegressionResult {
    pub fn index_of(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    pub fn coefficient(&self, column: &str) -> Option<f64> {
        self.index_of(column).map(|i| self.coefficients[i])
    }

    pub fn p_value(&self, column: &str) -> Option<f64> {
        self.index_of(column).map(|i| self.p_values[i])
    }
}

/// Ordinary least squares with generic column names.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<RegressionResult, RegressionError> {
    let names: Vec<String> = (0..x.ncols()).map(|j| format!("x{j}")).collect();
    fit_ols_named(x, y, &names, &OlsOptions::default())
}

pub fn fit_design(design: &Design, options: &OlsOptions) -> Result<RegressionResult, RegressionError> {
    fit_ols_named(&design.x, &design.y, &design.columns, options)
}

/// Names the columns that make `x` rank deficient: each dependent column
/// together with the earlier columns it is a combination of.
fn collinear_columns(x: &DMatrix<f64>, r: &DMatrix<f64>, names: &[String]) -> Option<Vec<String>> {
    let scale = (0..r.ncols()).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let deficient: Vec<usize> = (0..r.ncols())
        .filter(|&j| r[(j, j)].abs() <= RANK_TOL * scale.max(1.0))
        .collect();
    let &first = deficient.first()?;
    let mut out = vec![names[first].clone()];
    let earlier: Vec<usize> = (0..first).filter(|j| !deficient.contains(j)).collect();
    if !earlier.is_empty() {
        let sub = x.select_columns(earlier.iter());
        let target = x.column(first).into_owned();
        if let Ok(coef) = sub.clone().svd(true, true).solve(&target, 1e-12) {
            let size = coef.amax().max(f64::MIN_POSITIVE);
            for (k, c) in coef.iter().enumerate() {
                if c.abs() > 1e-8 * size {
                    out.push(names[earlier[k]].clone());
                }
            }
        }
    }
    for &j in &deficient[1..] {
        if !out.contains(&names[j]) {
            out.push(names[j].clone());
        }
    }
    Some(out)
}

pub fn fit_ols_named(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    names: &[String],
    options: &OlsOptions,
) -> Result<RegressionResult, RegressionError> {
    let (n, p) = x.shape();
    assert_eq!(y.len(), n, "outcome length");
    assert_eq!(names.len(), p, "column names");
    if n == 0 {
        return Err(RegressionError::EmptySample);
    }
    let dof = n as i64 - p as i64 - options.absorbed_dof as i64;
    if dof <= 0 {
        return Err(RegressionError::NoDegreesOfFreedom { n, params: p });
    }

    let qr = x.clone().qr();
    let r = qr.r();
    if let Some(cols) = collinear_columns(x, &r, names) {
        return Err(RegressionError::RankDeficient(cols));
    }
    let q = qr.q();
    let beta = r
        .solve_upper_triangular(&(q.transpose() * y))
        .ok_or_else(|| RegressionError::RankDeficient(names.to_vec()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| RegressionError::RankDeficient(names.to_vec()))?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let fitted = x * &beta;
    let residuals = y - &fitted;
    let rss = residuals.norm_squared();
    let y_mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 0.0 };

    let (cov, kind, test_dof) = match &options.clusters {
        None => {
            let sigma2 = rss / dof as f64;
            (xtx_inv * sigma2, StandardErrors::Conventional, dof as f64)
        }
        Some(labels) => {
            assert_eq!(labels.len(), n, "cluster labels");
            let mut scores: HashMap<&str, DVector<f64>> = HashMap::new();
            for i in 0..n {
                let contrib = x.row(i).transpose() * residuals[i];
                *scores.entry(labels[i].as_str()).or_insert_with(|| DVector::zeros(p)) += contrib;
            }
            let g = scores.len();
            if g < 2 {
                return Err(RegressionError::Spec(
                    "clustered errors need at least two clusters".into(),
                ));
            }
            let mut meat = DMatrix::zeros(p, p);
            for s in scores.values() {
                meat += s * s.transpose();
            }
            let c = (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / dof as f64);
            let cov = &xtx_inv * meat * &xtx_inv * c;
            (cov, StandardErrors::Clustered { clusters: g }, (g - 1) as f64)
        }
    };

    let cov = (&cov + cov.transpose()) * 0.5;
    let crit = t_critical(0.05, test_dof);
    let mut se = Vec::with_capacity(p);
    let mut t_stats = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    let mut ci95 = Vec::with_capacity(p);
    for j in 0..p {
        let s = cov[(j, j)].max(0.0).sqrt();
        let t = beta[j] / s;
        se.push(s);
        t_stats.push(t);
        p_values.push(t_two_sided(t, test_dof));
        ci95.push((beta[j] - crit * s, beta[j] + crit * s));
    }
    Ok(RegressionResult {
        columns: names.to_vec(),
        coefficients: beta.iter().copied().collect(),
        standard_errors: se,
        t_stats,
        p_values,
        ci95,
        covariance: (0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect(),
        n,
        dof: dof as usize,
        r_squared,
        rss,
        standard_errors_kind: kind,
        fitted: fitted.iter().copied().collect(),
        residuals: residuals.iter().copied().collect(),
    })
}

/// Within-group demeaning of outcome and covariates; the intercept is
/// absorbed. This approximates a per-group random intercept and is not a
/// mixed-effects estimate. Returns the transformed design and the number
/// of groups to pass as [`OlsOptions::absorbed_dof`].
pub fn demean_within(design: &Design, groups: &[String]) -> (Design, usize) {
    assert_eq!(groups.len(), design.y.len(), "group labels");
    let mut index: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, g) in groups.iter().enumerate() {
        index.entry(g.as_str()).or_default().push(i);
    }
    let keep: Vec<usize> = (0..design.columns.len())
        .filter(|&j| design.columns[j] != INTERCEPT)
        .collect();
    let mut x = design.x.select_columns(keep.iter());
    let mut y = design.y.clone();
    for members in index.values() {
        let m = members.len() as f64;
        let y_mean = members.iter().map(|&i| y[i]).sum::<f64>() / m;
        members.iter().for_each(|&i| y[i] -= y_mean);
        for j in 0..x.ncols() {
            let mean = members.iter().map(|&i| x[(i, j)]).sum::<f64>() / m;
            members.iter().for_each(|&i| x[(i, j)] -= mean);
        }
    }
    let out = Design {
        x,
        y,
        columns: keep.iter().map(|&j| design.columns[j].clone()).collect(),
        rows: design.rows.clone(),
        warnings: design.warnings.clone(),
    };
    (out, index.len().saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_x(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, k + 1, |_, j| if j == 0 { 1.0 } else { rng.gen_range(-3.0..3.0) })
    }

    #[test]
    fn noiseless_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_x(&mut rng, 200, 5);
        let beta = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.0, 3.25, -0.75]);
        let y = &x * &beta;
        let fit = fit_ols(&x, &y).unwrap();
        for (b, want) in fit.coefficients.iter().zip(beta.iter()) {
            assert_abs_diff_eq!(b, want, epsilon = 1e-8);
        }
        assert!(fit.rss <= 1e-16 * y.norm_squared());
    }

    #[test]
    fn simple_slope_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 300;
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 * x - 2.0 + rng.gen_range(-1.0..1.0)).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let fit = fit_ols(&x, &DVector::from_vec(ys)).unwrap();
        assert_abs_diff_eq!(fit.coefficients[1], sxy / sxx, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[0], my - sxy / sxx * mx, epsilon = 1e-10);
        let sigma2 = fit.rss / (n - 2) as f64;
        assert_abs_diff_eq!(fit.standard_errors[1], (sigma2 / sxx).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = random_x(&mut rng, 50, 3);
        let dup = x.column(1) * 2.0 - x.column(2);
        x.set_column(3, &dup);
        let y = DVector::from_fn(50, |i, _| i as f64);
        match fit_ols(&x, &y) {
            Err(RegressionError::RankDeficient(cols)) => assert_eq!(cols, vec!["x3", "x1", "x2"]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        let x = DMatrix::from_element(3, 3, 1.0);
        assert!(matches!(
            fit_ols(&x, &DVector::zeros(3)),
            Err(RegressionError::NoDegreesOfFreedom { .. })
        ));
    }

    #[test]
    fn clustered_errors_reduce_to_sandwich_on_singletons() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 400;
        let x = random_x(&mut rng, n, 2);
        let y = DVector::from_fn(n, |i, _| x[(i, 1)] + rng.gen_range(-1.0..1.0) * (1.0 + x[(i, 2)].abs()));
        let names: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let labels: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let fit = fit_ols_named(
            &x,
            &y,
            &names,
            &OlsOptions {
                clusters: Some(labels),
                absorbed_dof: 0,
            },
        )
        .unwrap();
        // HC1 oracle: (X'X)^-1 X' diag(e^2) X (X'X)^-1 * n / (n - p)
        let e = &y - &x * DVector::from_vec(fit.coefficients.clone());
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let mut meat = DMatrix::zeros(3, 3);
        for i in 0..n {
            let row = x.row(i).transpose();
            meat += &row * row.transpose() * e[i].powi(2);
        }
        let hc1 = &xtx_inv * meat * &xtx_inv * (n as f64 / (n - 3) as f64);
        for j in 0..3 {
            assert_abs_diff_eq!(fit.standard_errors[j], hc1[(j, j)].sqrt(), epsilon = 1e-10);
        }
        assert_eq!(fit.standard_errors_kind, StandardErrors::Clustered { clusters: n });
    }

    #[test]
    fn within_transform_recovers_slope_with_group_intercepts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 300;
        let groups: Vec<String> = (0..n).map(|i| format!("u{}", i % 10)).collect();
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..n).map(|i| 0.8 * xs[i] + (i % 10) as f64 * 3.0).collect();
        let design = Design {
            x: DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] }),
            y: DVector::from_vec(ys),
            columns: vec![INTERCEPT.into(), "x".into()],
            rows: (0..n).collect(),
            warnings: vec![],
        };
        let (within, absorbed) = demean_within(&design, &groups);
        assert_eq!(within.columns, vec!["x"]);
        let fit = fit_design(
            &within,
            &OlsOptions {
                clusters: None,
                absorbed_dof: absorbed,
            },
        )
        .unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 0.8, epsilon = 1e-10);
        assert_eq!(fit.dof, n - 1 - 9);
    }

    fn case() -> impl Strategy<Value = (u64, usize, usize)> {
        (any::<u64>(), 20usize..120, 1usize..5)
    }

    proptest! {
        #[test]
        fn residuals_orthogonal_to_columns((seed, n, k) in case()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_x(&mut rng, n, k);
            let y = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
            let fit = fit_ols(&x, &y).unwrap();
            let e = DVector::from_vec(fit.residuals.clone());
            let g = x.transpose() * e;
            prop_assert!(g.amax() <= 1e-8 * x.norm() * y.norm());
            for i in 0..fit.covariance.len() {
                for j in 0..fit.covariance.len() {
                    prop_assert_eq!(fit.covariance[i][j], fit.covariance[j][i]);
                }
                prop_assert!(fit.covariance[i][i] >= 0.0);
            }
            let cov = DMatrix::from_fn(fit.covariance.len(), fit.covariance.len(), |i, j| fit.covariance[i][j]);
            let eig = cov.clone().symmetric_eigen().eigenvalues;
            prop_assert!(eig.min() >= -1e-10 * cov.norm());
            let crit = t_critical(0.05, fit.dof as f64);
            for (j, (lo, hi)) in fit.ci95.iter().enumerate() {
                prop_assert!(((lo + hi) / 2.0 - fit.coefficients[j]).abs() <= 1e-9 * (1.0 + fit.coefficients[j].abs()));
                prop_assert!(((hi - lo) / 2.0 - crit * fit.standard_errors[j]).abs() <= 1e-9 * (1.0 + hi - lo));
            }
        }
    }
}
