//! Two-sample significance tests with Bonferroni correction, and best-vs-second
//! selection over a table of per-seed scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Per-seed scores with their mean and sample (n - 1) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl SampleSummary {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("sample"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample contains non-finite values"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self { values, mean, std })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn variance(&self) -> f64 {
        self.std * self.std
    }

    fn require_testable(&self) -> Result<()> {
        if self.n() < 2 {
            return Err(Error::invalid(format!(
                "t-test needs at least 2 values per sample, got {}",
                self.n()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Student,
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub method: TestMethod,
    pub t: f64,
    pub dof: f64,
    /// Two-sided.
    pub p: f64,
}

fn two_sided(t: f64, dof: f64, mean_diff: f64, se: f64, method: TestMethod) -> Result<TTest> {
    if se == 0.0 {
        // Degenerate: no spread at all. Equal means are indistinguishable,
        // different means are perfectly separated.
        let (t, p) = if mean_diff == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean_diff), 0.0)
        };
        return Ok(TTest { method, t, dof, p });
    }
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::invalid(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { method, t, dof, p })
}

/// Pooled-variance two-sample t-test.
pub fn student_t(a: &SampleSummary, b: &SampleSummary) -> Result<TTest> {
    a.require_testable()?;
    b.require_testable()?;
    let (na, nb) = (a.n() as f64, b.n() as f64);
    let dof = na + nb - 2.0;
    let pooled = ((na - 1.0) * a.variance() + (nb - 1.0) * b.variance()) / dof;
    let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let diff = a.mean - b.mean;
    two_sided(diff / se, dof, diff, se, TestMethod::Student)
}

/// Unequal-variance t-test with Welch-Satterthwaite degrees of freedom.
pub fn welch_t(a: &SampleSummary, b: &SampleSummary) -> Result<TTest> {
    a.require_testable()?;
    b.require_testable()?;
    let (na, nb) = (a.n() as f64, b.n() as f64);
    let (qa, qb) = (a.variance() / na, b.variance() / nb);
    let se2 = qa + qb;
    let denom = qa * qa / (na - 1.0) + qb * qb / (nb - 1.0);
    let dof = if denom > 0.0 {
        se2 * se2 / denom
    } else {
        na + nb - 2.0
    };
    let diff = a.mean - b.mean;
    let se = se2.sqrt();
    two_sided(diff / se, dof, diff, se, TestMethod::Welch)
}

/// Multiplies each p-value by the number of tests, clamped to 1.
pub fn bonferroni(p_values: &[f64]) -> Result<Vec<f64>> {
    let m = p_values.len() as f64;
    p_values
        .iter()
        .map(|&p| {
            if (0.0..=1.0).contains(&p) {
                Ok((p * m).min(1.0))
            } else {
                Err(Error::invalid(format!("p-value {p} outside [0, 1]")))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub best: String,
    pub second: String,
    pub best_mean: f64,
    pub second_mean: f64,
    pub test: TTest,
    /// p after Bonferroni correction over `comparisons` tests.
    pub p_adjusted: f64,
    pub comparisons: usize,
    pub alpha: f64,
    pub significant: bool,
    pub tied: bool,
}

impl SignificanceReport {
    /// `*` when the best group is significantly better than the runner-up.
    pub fn marker(&self) -> &'static str {
        if self.significant {
            "*"
        } else {
            ""
        }
    }
}

/// Student when both groups have the same size, Welch otherwise.
pub fn compare(a: &SampleSummary, b: &SampleSummary) -> Result<TTest> {
    if a.n() == b.n() {
        student_t(a, b)
    } else {
        welch_t(a, b)
    }
}

fn best_two(
    groups: &BTreeMap<String, SampleSummary>,
) -> Result<(&String, &SampleSummary, &String, &SampleSummary)> {
    if groups.len() < 2 {
        return Err(Error::invalid(format!(
            "significance test needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    let mut ranked: Vec<(&String, &SampleSummary)> = groups.iter().collect();
    // stable: equal means keep name order
    ranked.sort_by(|x, y| y.1.mean.total_cmp(&x.1.mean));
    Ok((ranked[0].0, ranked[0].1, ranked[1].0, ranked[1].1))
}

fn report_for(groups: &BTreeMap<String, SampleSummary>) -> Result<SignificanceReport> {
    let (bn, b, sn, s) = best_two(groups)?;
    let tied = b.mean == s.mean;
    let mut test = compare(b, s)?;
    if tied {
        test.p = 1.0;
    }
    Ok(SignificanceReport {
        best: bn.clone(),
        second: sn.clone(),
        best_mean: b.mean,
        second_mean: s.mean,
        test,
        p_adjusted: test.p,
        comparisons: 1,
        alpha: DEFAULT_ALPHA,
        significant: false,
        tied,
    })
}

fn finalize(reports: &mut [SignificanceReport]) -> Result<()> {
    let raw: Vec<f64> = reports.iter().map(|r| r.test.p).collect();
    let adjusted = bonferroni(&raw)?;
    let m = reports.len();
    for (r, p) in reports.iter_mut().zip(adjusted) {
        r.p_adjusted = p;
        r.comparisons = m;
        r.significant = !r.tied && p < r.alpha;
    }
    Ok(())
}

/// Best vs second-best by mean for a single comparison.
pub fn select_and_test(groups: &BTreeMap<String, SampleSummary>) -> Result<SignificanceReport> {
    Ok(significance_table(std::slice::from_ref(groups))?.remove(0))
}

/// One best-vs-second comparison per row, Bonferroni-corrected across rows.
pub fn significance_table(
    rows: &[BTreeMap<String, SampleSummary>],
) -> Result<Vec<SignificanceReport>> {
    let mut reports = rows.iter().map(report_for).collect::<Result<Vec<_>>>()?;
    finalize(&mut reports)?;
    Ok(reports)
}
