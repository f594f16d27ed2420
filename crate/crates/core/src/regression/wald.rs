use super::dist::normal_two_sided;
use super::ols::RegressionResult;
use super::RegressionError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldTest {
    pub z: f64,
    pub p: f64,
}

/// Normal-approximation test of `beta_i == beta_j` within one model.
pub fn wald_compare(result: &RegressionResult, i: usize, j: usize) -> Result<WaldTest, RegressionError> {
    let p = result.coefficients.len();
    if i == j || i >= p || j >= p {
        return Err(RegressionError::Contract(format!(
            "wald comparison needs two distinct coefficients below {p}, got {i} and {j}"
        )));
    }
    let c = &result.covariance;
    let var = c[i][i] + c[j][j] - 2.0 * c[i][j];
    if !(var > 0.0) {
        return Err(RegressionError::Numerical(format!(
            "variance of the difference between coefficients {i} and {j} is {var}"
        )));
    }
    let z = (result.coefficients[i] - result.coefficients[j]) / var.sqrt();
    Ok(WaldTest {
        z,
        p: normal_two_sided(z),
    })
}
