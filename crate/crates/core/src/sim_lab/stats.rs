//! Two-sided pooled two-proportion z test and Welch's unequal-variance t test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::SimError;

pub const PROPORTION_TEST: &str = "two-sided pooled two-proportion z test";
pub const MEAN_TEST: &str = "two-sided Welch t test";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Degrees of freedom (t tests only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
}

pub fn two_proportion_test(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<TestResult, SimError> {
    if n1 == 0 || n2 == 0 {
        return Err(SimError::DegenerateCell("a group has no trials".into()));
    }
    if k1 > n1 || k2 > n2 {
        return Err(SimError::DegenerateCell(format!("counts exceed group size ({k1}/{n1}, {k2}/{n2})")));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let (p1, p2) = (k1 as f64 / n1f, k2 as f64 / n2f);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    if se == 0.0 {
        // both groups all-success or all-failure: identical proportions
        return Ok(TestResult { statistic: 0.0, p_value: 1.0, df: None });
    }
    let z = (p1 - p2) / se;
    let normal = Normal::standard();
    // sf of |z| keeps precision far in the tail
    let p = (2.0 * normal.sf(z.abs())).min(1.0);
    Ok(TestResult { statistic: z, p_value: p, df: None })
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TestResult, SimError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(SimError::DegenerateCell("Welch test needs at least two samples per group".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(SimError::DegenerateCell("non-finite sample".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (qa, qb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = qa + qb;
    if se2 == 0.0 {
        return Err(SimError::DegenerateCell("both groups have zero variance".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (a.len() as f64 - 1.0) + qb * qb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| SimError::DegenerateCell(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TestResult { statistic: t, p_value: p, df: Some(df) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportion_fixture() {
        let r = two_proportion_test(80, 100, 60, 100).unwrap();
        assert!((r.statistic - 3.0861).abs() < 1e-3, "{r:?}");
        assert!((r.p_value - 0.002028).abs() / 0.002028 < 1e-3, "{r:?}");
        assert_eq!(two_proportion_test(30, 60, 10, 20).unwrap().p_value, 1.0);
        assert!(two_proportion_test(0, 50, 50, 50).unwrap().p_value < 1e-15);
        assert!(two_proportion_test(1, 0, 1, 1).is_err());
    }

    #[test]
    fn welch_fixture() {
        let r = welch_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!((r.statistic + 1.0).abs() < 1e-12);
        assert!((r.df.unwrap() - 8.0).abs() < 1e-12);
        assert!((r.p_value - 0.3466).abs() < 1e-3, "{r:?}");
        let same = [1.0, 4.0, 2.5];
        assert_eq!(welch_t_test(&same, &same).unwrap().p_value, 1.0);
    }
}
