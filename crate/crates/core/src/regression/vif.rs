use nalgebra::DMatrix;

/// Variance inflation factor of every column after the first (intercept)
/// column. Perfectly collinear columns get `f64::INFINITY`.
pub fn vif(x: &DMatrix<f64>) -> Vec<f64> {
    let p = x.ncols();
    assert!(p >= 3, "vif needs an intercept and at least two covariates");
    (1..p)
        .map(|k| {
            let target = x.column(k).into_owned();
            let others = x.select_columns((0..p).filter(|&j| j != k).collect::<Vec<_>>().iter());
            let coef = others
                .clone()
                .svd(true, true)
                .solve(&target, 1e-12)
                .expect("svd with both factors");
            let rss = (&target - others * coef).norm_squared();
            let mean = target.mean();
            let tss: f64 = target.iter().map(|v| (v - mean).powi(2)).sum();
            if tss == 0.0 || rss <= 1e-12 * tss {
                return f64::INFINITY;
            }
            tss / rss
        })
        .collect()
}
