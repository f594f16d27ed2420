use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::RegressionError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    Categorical {
        name: String,
        levels: Vec<String>,
        reference: String,
    },
    Continuous {
        name: String,
    },
}

impl Term {
    pub fn categorical(name: &str, levels: &[&str], reference: &str) -> Self {
        Term::Categorical {
            name: name.to_string(),
            levels: levels.iter().map(|s| s.to_string()).collect(),
            reference: reference.to_string(),
        }
    }

    pub fn continuous(name: &str) -> Self {
        Term::Continuous { name: name.to_string() }
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Categorical { name, .. } | Term::Continuous { name } => name,
        }
    }
}

/// Keeps rows whose categorical `column` value is one of `allowed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFilter {
    pub column: String,
    pub allowed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub outcome: String,
    pub covariates: Vec<Term>,
    #[serde(default)]
    pub sample_filter: Vec<SampleFilter>,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_true() -> bool {
    true
}

impl RegressionSpec {
    pub fn new(outcome: &str, covariates: Vec<Term>) -> Self {
        RegressionSpec {
            outcome: outcome.to_string(),
            covariates,
            sample_filter: Vec::new(),
            standardize: true,
        }
    }

    pub fn validate(&self) -> Result<(), RegressionError> {
        for t in &self.covariates {
            if let Term::Categorical {
                name,
                levels,
                reference,
            } = t
            {
                if !levels.contains(reference) {
                    return Err(RegressionError::Spec(format!(
                        "reference `{reference}` is not a level of `{name}`"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Column-oriented table of regression inputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub categorical: BTreeMap<String, Vec<String>>,
    pub numeric: BTreeMap<String, Vec<f64>>,
}

impl Dataset {
    pub fn new(n: usize) -> Self {
        Dataset {
            n,
            ..Default::default()
        }
    }

    pub fn with_categorical(mut self, name: &str, values: Vec<String>) -> Self {
        assert_eq!(values.len(), self.n, "column `{name}` length");
        self.categorical.insert(name.to_string(), values);
        self
    }

    pub fn with_numeric(mut self, name: &str, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.n, "column `{name}` length");
        self.numeric.insert(name.to_string(), values);
        self
    }

    fn numeric_column(&self, name: &str) -> Result<&[f64], RegressionError> {
        self.numeric
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| RegressionError::Spec(format!("no numeric column `{name}`")))
    }

    fn categorical_column(&self, name: &str) -> Result<&[String], RegressionError> {
        self.categorical
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| RegressionError::Spec(format!("no categorical column `{name}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Column names; the intercept comes first.
    pub columns: Vec<String>,
    /// Dataset row index of each design row.
    pub rows: Vec<usize>,
    pub warnings: Vec<String>,
}

pub const INTERCEPT: &str = "intercept";

pub fn dummy_name(term: &str, level: &str) -> String {
    format!("{term}[{level}]")
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Expands categorical terms into indicators for every non-reference level
/// present in the sample, after an intercept column. Levels or continuous
/// columns with no variation in the sample are dropped with a warning.
pub fn build_design_matrix(data: &Dataset, spec: &RegressionSpec) -> Result<Design, RegressionError> {
    spec.validate()?;
    let y_all = data.numeric_column(&spec.outcome)?;
    let mut rows: Vec<usize> = (0..data.n).collect();
    for f in &spec.sample_filter {
        let col = data.categorical_column(&f.column)?;
        rows.retain(|&i| f.allowed.iter().any(|a| a == &col[i]));
    }
    if rows.is_empty() {
        return Err(RegressionError::EmptySample);
    }

    let mut columns = vec![INTERCEPT.to_string()];
    let mut values: Vec<Vec<f64>> = vec![vec![1.0; rows.len()]];
    let mut warnings = Vec::new();

    for term in &spec.covariates {
        match term {
            Term::Categorical {
                name,
                levels,
                reference,
            } => {
                let col = data.categorical_column(name)?;
                let mut present: BTreeMap<&str, usize> = BTreeMap::new();
                for &i in &rows {
                    let v = col[i].as_str();
                    if !levels.iter().any(|l| l == v) {
                        return Err(RegressionError::Spec(format!("`{name}` has undeclared level `{v}`")));
                    }
                    *present.entry(v).or_insert(0) += 1;
                }
                if present.len() < 2 {
                    warnings.push(format!("`{name}` takes a single value in the sample; no columns"));
                    continue;
                }
                if !present.contains_key(reference.as_str()) {
                    return Err(RegressionError::Spec(format!(
                        "reference level `{reference}` of `{name}` is absent from the sample"
                    )));
                }
                for level in levels.iter().filter(|l| *l != reference) {
                    if !present.contains_key(level.as_str()) {
                        warnings.push(format!(
                            "level `{level}` of `{name}` absent from the sample; column dropped"
                        ));
                        continue;
                    }
                    columns.push(dummy_name(name, level));
                    values.push(rows.iter().map(|&i| f64::from(u8::from(&col[i] == level))).collect());
                }
            }
            Term::Continuous { name } => {
                let col = data.numeric_column(name)?;
                let mut v: Vec<f64> = rows.iter().map(|&i| col[i]).collect();
                if let Some(bad) = v.iter().position(|x| !x.is_finite()) {
                    return Err(RegressionError::Spec(format!(
                        "`{name}` is not finite at row {}",
                        rows[bad]
                    )));
                }
                let (mean, sd) = mean_sd(&v);
                if sd == 0.0 {
                    warnings.push(format!("`{name}` is constant in the sample; column dropped"));
                    continue;
                }
                if spec.standardize {
                    v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
                }
                columns.push(name.clone());
                values.push(v);
            }
        }
    }
    for w in &warnings {
        log::warn!("{}: {w}", spec.outcome);
    }

    let x = DMatrix::from_fn(rows.len(), columns.len(), |r, c| values[c][r]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y_all[i]));
    if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
        return Err(RegressionError::Spec(format!(
            "outcome is not finite at row {}",
            rows[bad]
        )));
    }
    Ok(Design {
        x,
        y,
        columns,
        rows,
        warnings,
    })
}
